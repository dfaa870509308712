fn main() {
    env_logger::init();
    std::process::exit(dyadic_rbmo::cli::main_with_args(std::env::args_os()));
}
