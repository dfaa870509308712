//! Command-line front end. Exit codes: 0 when every asserted check passes,
//! 1 when one fails, 2 for usage, configuration and I/O errors.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::lattice::Mode;
use crate::report::{self, Context, RunConfig, Section};

#[derive(Debug, Parser)]
#[command(name = "rbmo", version, about = "Doubling filtrations, RBMO norms and sparse bounds over discrete measures")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Bundled measure name or path to a CSV/JSON measure file.
    #[arg(long, global = true)]
    pub measure: Option<String>,
    /// JSON run configuration; flags override its entries.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory for artifacts.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_parser = parse_mode)]
    pub mode: Option<Mode>,
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    #[arg(long, global = true)]
    pub ell: Option<u32>,
    /// `cauchy`, `riesz:<j>` or `custom:<path>`.
    #[arg(long, global = true)]
    pub kernel: Option<String>,
    /// Scalar field file used instead of the random corpus.
    #[arg(long, global = true)]
    pub field: Option<String>,
    /// Number of random fields in the corpus.
    #[arg(long, global = true)]
    pub fields: Option<usize>,
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

fn parse_mode(s: &str) -> std::result::Result<Mode, String> {
    match s {
        "paper" => Ok(Mode::Paper),
        "test" => Ok(Mode::Test),
        _ => Err(format!("mode must be `paper` or `test`, got `{s}`")),
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    #[command(subcommand)]
    Lattice(LatticeCmd),
    #[command(subcommand)]
    Filtration(FiltrationCmd),
    #[command(subcommand)]
    Spaces(SpacesCmd),
    #[command(subcommand)]
    Operators(OperatorsCmd),
    #[command(subcommand)]
    Sparse(SparseCmd),
    #[command(subcommand)]
    Matrixval(MatrixCmd),
    #[command(subcommand)]
    Report(ReportCmd),
}

#[derive(Debug, Subcommand)]
pub enum LatticeCmd {
    /// Build the cube lattice and write `lattice.json`.
    Build,
}

#[derive(Debug, Subcommand)]
pub enum FiltrationCmd {
    /// Build and check the doubling filtration; writes `filtration.json`.
    Verify,
}

#[derive(Debug, Subcommand)]
pub enum SpacesCmd {
    /// Martingale and Tolsa norms over the corpus; writes `norms.json`.
    Norms,
}

#[derive(Debug, Subcommand)]
pub enum OperatorsCmd {
    /// Calderón–Zygmund decompositions; writes `czd.json`.
    Czd,
    /// Weak-type (1,1) ratios; writes `czd.json`.
    Weak11,
}

#[derive(Debug, Subcommand)]
pub enum SparseCmd {
    /// Pointwise sparse bounds for the operator; writes `sparse_report.json`.
    Dominate,
    /// Weighted norms against step weights; writes `a2_sweep.csv`.
    A2Sweep {
        /// JSON object with `targets`, `alpha_p` and `beta_p`.
        #[arg(long)]
        weights: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum MatrixCmd {
    /// Four-term endpoint split for matrix fields; writes `matrix_endpoint.json`.
    Endpoint {
        /// Matrix field file used instead of random Hermitian fields.
        #[arg(long)]
        matrix_field: Option<String>,
        #[arg(long)]
        m: Option<usize>,
    },
}

#[derive(Debug, Subcommand)]
pub enum ReportCmd {
    /// Every section; writes all artifacts and `summary.json`.
    All,
}

/// Failure kinds mapped to exit codes.
#[derive(Debug)]
pub enum Outcome {
    Pass,
    InvariantFailure,
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io { path: path.to_path_buf(), source }
}

fn load_config(g: &GlobalArgs) -> Result<RunConfig> {
    let mut cfg = match &g.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
            serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    if let Some(m) = &g.measure {
        cfg.measure = m.clone();
    }
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(m) = g.mode {
        cfg.mode = m;
    }
    if g.alpha.is_some() {
        cfg.alpha = g.alpha;
    }
    if g.ell.is_some() {
        cfg.ell = g.ell;
    }
    if g.kernel.is_some() {
        cfg.kernel = g.kernel.clone();
    }
    if g.field.is_some() {
        cfg.field = g.field.clone();
    }
    if let Some(n) = g.fields {
        cfg.fields = n;
    }
    Ok(cfg)
}

/// Serializes with a trailing newline. `serde_json` prints floats in shortest
/// round-trip form and object keys in sorted order, so output is reproducible.
fn write_json(dir: &Path, name: &str, v: &Value) -> Result<()> {
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(v).map_err(|e| Error::Parse(e.to_string()))?;
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| io_err(&path, e))
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, text).map_err(|e| io_err(&path, e))
}

fn verdict(sections: &[&Section]) -> Outcome {
    if sections.iter().all(|s| s.ok()) {
        Outcome::Pass
    } else {
        Outcome::InvariantFailure
    }
}

fn failure_record(sections: &[&Section]) -> Value {
    let failed: Vec<Value> = sections
        .iter()
        .flat_map(|s| s.failures().into_iter().map(move |c| json!({ "section": s.name, "check": c })))
        .collect();
    json!({ "status": "invariant_failure", "failures": failed })
}

fn finish(out: &Path, sections: &[&Section]) -> Result<Outcome> {
    let outcome = verdict(sections);
    if let Outcome::InvariantFailure = outcome {
        let record = failure_record(sections);
        write_json(out, "failures.json", &record)?;
        println!("{}", serde_json::to_string(&record).unwrap_or_default());
    }
    Ok(outcome)
}

pub fn run(cli: Cli) -> Result<Outcome> {
    if let Some(n) = cli.global.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Error::InvalidParams(e.to_string()))?;
    }
    let mut cfg = load_config(&cli.global)?;
    if let Command::Matrixval(MatrixCmd::Endpoint { matrix_field, m }) = &cli.command {
        if matrix_field.is_some() {
            cfg.matrix_field = matrix_field.clone();
        }
        if let Some(m) = m {
            cfg.matrix_size = *m;
        }
    }
    if let Command::Sparse(SparseCmd::A2Sweep { weights: Some(path) }) = &cli.command {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let v: Value = serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
        if let Some(t) = v.get("targets").and_then(Value::as_array) {
            cfg.a2_targets = t.iter().filter_map(Value::as_f64).collect();
        }
        if let Some(a) = v.get("alpha_p").and_then(Value::as_f64) {
            cfg.a2_alpha = a;
        }
        if let Some(b) = v.get("beta_p").and_then(Value::as_f64) {
            cfg.a2_beta = Some(b);
        }
    }
    let out = cli.global.out.clone();
    std::fs::create_dir_all(&out).map_err(|e| io_err(&out, e))?;
    let cx = Context::build(cfg)?;
    match cli.command {
        Command::Lattice(LatticeCmd::Build) => {
            let s = report::lattice_section(&cx);
            write_json(&out, "lattice.json", &s.artifact)?;
            finish(&out, &[&s])
        }
        Command::Filtration(FiltrationCmd::Verify) => {
            let s = report::filtration_section(&cx)?;
            write_json(&out, "filtration.json", &s.artifact)?;
            finish(&out, &[&s])
        }
        Command::Spaces(SpacesCmd::Norms) => {
            let s = report::spaces_section(&cx)?;
            write_json(&out, "norms.json", &s.artifact)?;
            finish(&out, &[&s])
        }
        Command::Operators(_) => {
            let s = report::operators_section(&cx)?;
            write_json(&out, "czd.json", &s.artifact)?;
            finish(&out, &[&s])
        }
        Command::Sparse(SparseCmd::Dominate) => {
            let s = report::sparse_section(&cx)?.section;
            write_json(&out, "sparse_report.json", &s.artifact)?;
            finish(&out, &[&s])
        }
        Command::Sparse(SparseCmd::A2Sweep { .. }) => {
            let o = report::sparse_section(&cx)?;
            write_text(&out, "a2_sweep.csv", &report::sweep_csv(&o.sweep)?)?;
            finish(&out, &[&o.section])
        }
        Command::Matrixval(MatrixCmd::Endpoint { .. }) => {
            let s = report::matrix_section(&cx)?;
            write_json(&out, "matrix_endpoint.json", &s.artifact)?;
            finish(&out, &[&s])
        }
        Command::Report(ReportCmd::All) => {
            let lat = report::lattice_section(&cx);
            let fil = report::filtration_section(&cx)?;
            let spa = report::spaces_section(&cx)?;
            let ops = report::operators_section(&cx)?;
            let sp = report::sparse_section(&cx)?;
            let mat = report::matrix_section(&cx)?;
            write_json(&out, "lattice.json", &lat.artifact)?;
            write_json(&out, "filtration.json", &fil.artifact)?;
            write_json(&out, "norms.json", &spa.artifact)?;
            write_json(&out, "czd.json", &ops.artifact)?;
            write_json(&out, "sparse_report.json", &sp.section.artifact)?;
            write_text(&out, "a2_sweep.csv", &report::sweep_csv(&sp.sweep)?)?;
            write_json(&out, "matrix_endpoint.json", &mat.artifact)?;
            let sections = [&lat, &fil, &spa, &ops, &sp.section, &mat];
            write_json(&out, "summary.json", &report::summary(&cx, &sections))?;
            finish(&out, &sections)
        }
    }
}

/// Parses arguments, runs, and converts the result into a process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(Outcome::Pass) => 0,
        Ok(Outcome::InvariantFailure) => 1,
        Err(e) => {
            let kind = match &e {
                Error::Io { .. } => "io",
                Error::Parse(_) => "parse",
                Error::InvalidParams(_) => "config",
                _ => "error",
            };
            println!("{}", json!({ "status": "error", "kind": kind, "message": e.to_string() }));
            eprintln!("error: {e}");
            2
        }
    }
}
