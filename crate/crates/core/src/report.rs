//! Run configuration and the per-module report sections used by the CLI.
//!
//! Each section produces an artifact plus two lists. Asserted checks are
//! identities that must hold up to a pinned tolerance; a failing one makes
//! the run fail. Measured values are constants of inequalities whose size
//! is not prescribed, and are only recorded.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::bundled;
use crate::error::{Error, Result};
use crate::filtration::{build_filtration, k_coefficient_report, Filtration};
use crate::lattice::{build_lattice, Lattice, LatticeParams, Mode};
use crate::linalg::CMatrix;
use crate::matrixval::{
    endpoint_report, householder, kadison_schwarz_check, rbmo_sigma_c_norm, MatrixField, MatrixKernel,
};
use crate::measure::{load_measure, PointMeasure, ScalarField};
use crate::operators::{cz_decompose, weak11_report, DiscreteOperator, KernelSpec};
use crate::sparse::{a2_characteristic, a2_sweep, dominate, step_weight, Weight, WeightedRow, DEFAULT_LAMBDA, SWEEP_TARGETS};
use crate::spaces::{inclusion_ratio, rbmo_sigma_norm, rbmo_tolsa_norm};

/// Relative tolerance for identities that hold exactly in exact arithmetic.
pub const IDENTITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Bundled measure name or path to a measure file.
    pub measure: String,
    pub growth_degree: Option<f64>,
    pub mode: Mode,
    pub alpha: Option<f64>,
    pub ell: Option<u32>,
    pub a: Option<f64>,
    pub k_min: Option<i32>,
    pub k_max: Option<i32>,
    /// `cauchy`, `riesz:<j>` or `custom:<path>`; defaults by dimension.
    pub kernel: Option<String>,
    pub seed: u64,
    pub fields: usize,
    /// Scalar field file replacing the random corpus.
    pub field: Option<String>,
    /// Multiples of the mean of `|f|` used as CZ and weak-type heights.
    pub lambda_factors: Vec<f64>,
    pub sparse_lambda: f64,
    pub matrix_size: usize,
    pub matrix_fields: usize,
    pub matrix_field: Option<String>,
    pub a2_alpha: f64,
    /// Defaults to `2^(d+1)`.
    pub a2_beta: Option<f64>,
    pub a2_targets: Vec<f64>,
    /// Doubling constant for the Tolsa norm; defaults to `2^(d+1)`.
    pub tolsa_beta: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            measure: "uniform-64".into(),
            growth_degree: None,
            mode: Mode::Test,
            alpha: None,
            ell: None,
            a: None,
            k_min: None,
            k_max: None,
            kernel: None,
            seed: 0,
            fields: 10,
            field: None,
            lambda_factors: vec![1.5, 3.0, 10.0],
            sparse_lambda: DEFAULT_LAMBDA,
            matrix_size: 3,
            matrix_fields: 5,
            matrix_field: None,
            a2_alpha: 2.0,
            a2_beta: None,
            a2_targets: SWEEP_TARGETS.to_vec(),
            tolsa_beta: None,
        }
    }
}

impl RunConfig {
    pub fn lattice_params(&self, dim: usize) -> Result<LatticeParams> {
        let mut p = match (self.mode, self.alpha) {
            (Mode::Paper, None) => LatticeParams::paper(dim),
            (Mode::Paper, Some(alpha)) => LatticeParams::with_auto_a(alpha, self.ell.unwrap_or(dim as u32 + 1), Mode::Paper),
            (Mode::Test, None) if self.ell.is_none() => LatticeParams::test(),
            (Mode::Test, alpha) => {
                let alpha = alpha.unwrap_or(4.0);
                let ell = self.ell.unwrap_or(2);
                LatticeParams { alpha, ell, a: alpha.powi(ell as i32), mode: Mode::Test, k_min: None, k_max: None }
            }
        };
        if let Some(a) = self.a {
            p.a = a;
        }
        p.k_min = self.k_min;
        p.k_max = self.k_max;
        p.validate(dim)?;
        Ok(p)
    }

    pub fn load_measure(&self) -> Result<PointMeasure> {
        if bundled::NAMES.contains(&self.measure.as_str()) {
            return bundled::by_name(&self.measure);
        }
        load_measure(std::path::Path::new(&self.measure), self.growth_degree)
    }

    pub fn kernel_spec(&self, mu: &PointMeasure) -> Result<KernelSpec> {
        match &self.kernel {
            Some(s) => KernelSpec::parse(s),
            None if mu.dim() == 1 => Ok(KernelSpec::cauchy()),
            None => Ok(KernelSpec::riesz(0)),
        }
    }
}

/// Everything a report section needs, built once per run.
pub struct Context {
    pub config: RunConfig,
    pub mu: PointMeasure,
    pub params: LatticeParams,
    pub lattice: Lattice,
    pub filtration: Filtration,
    pub operator: DiscreteOperator,
    pub fields: Vec<ScalarField>,
}

/// Standard normal values, one field per draw, from a seeded stream.
pub fn normal_corpus(mu: &PointMeasure, count: usize, seed: u64) -> Vec<ScalarField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| ScalarField::new(mu, (0..mu.len()).map(|_| StandardNormal.sample(&mut rng)).collect()).expect("sized to the measure"))
        .collect()
}

impl Context {
    pub fn build(config: RunConfig) -> Result<Context> {
        let mu = config.load_measure()?;
        let params = config.lattice_params(mu.dim())?;
        let lattice = build_lattice(&mu, &params)?;
        let filtration = build_filtration(&mu, &lattice)?;
        let operator = DiscreteOperator::assemble(&mu, config.kernel_spec(&mu)?)?;
        let fields = match &config.field {
            Some(path) => vec![crate::measure::load_field(std::path::Path::new(path), &mu)?],
            None => normal_corpus(&mu, config.fields, config.seed),
        };
        if fields.is_empty() {
            return Err(Error::InvalidParams("the field corpus is empty".into()));
        }
        Ok(Context { config, mu, params, lattice, filtration, operator, fields })
    }

    fn tolsa_beta(&self) -> f64 {
        self.config.tolsa_beta.unwrap_or(2f64.powi(self.mu.dim() as i32 + 1))
    }

    fn a2_beta(&self) -> f64 {
        self.config.a2_beta.unwrap_or(2f64.powi(self.mu.dim() as i32 + 1))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub ok: bool,
    /// Machine-readable witness: offending ids and values, or the worst case seen.
    pub witness: Value,
}

impl Check {
    fn new(name: &str, ok: bool, witness: Value) -> Self {
        Check { name: name.into(), ok, witness }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Section {
    pub name: String,
    pub asserted: Vec<Check>,
    pub measured: BTreeMap<String, Value>,
    #[serde(skip)]
    pub artifact: Value,
}

impl Section {
    fn new(name: &str) -> Self {
        Section { name: name.into(), asserted: Vec::new(), measured: BTreeMap::new(), artifact: Value::Null }
    }

    fn measure(&mut self, key: &str, v: impl Serialize) {
        self.measured.insert(key.into(), serde_json::to_value(v).unwrap_or(Value::Null));
    }

    pub fn ok(&self) -> bool {
        self.asserted.iter().all(|c| c.ok)
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.asserted.iter().filter(|c| !c.ok).collect()
    }
}

pub fn lattice_section(cx: &Context) -> Section {
    let mut s = Section::new("lattice");
    let r = &cx.lattice.report;
    let failures = json!(r.failures);
    s.asserted.push(Check::new("partition", r.partition_ok, failures.clone()));
    s.asserted.push(Check::new("nesting", r.nesting_ok, failures.clone()));
    s.asserted.push(Check::new("five_r_disjointness", r.disjointness_ok, failures.clone()));
    s.asserted.push(Check::new("radius_sandwich", r.radius_sandwich_ok, failures));
    s.measure("containment_fraction", r.containment_fraction);
    s.measure("ball_in_cube_fraction", r.ball_in_cube_fraction);
    s.measure("cube_in_ball_fraction", r.cube_in_ball_fraction);
    s.measure("doubling_fraction", r.doubling_fraction);
    s.measure("cubes", cx.lattice.cubes.len());
    s.measure("k_min", cx.lattice.k_min);
    s.measure("k_max", cx.lattice.k_max);
    s.measure("designated_point", cx.lattice.designated);
    s.measure("growth_constant", cx.mu.growth_constant());
    s.artifact = cx.lattice.to_json();
    s
}

/// Largest violation of the projection identities over the corpus, relative to the field scale.
fn martingale_identities(mu: &PointMeasure, filt: &Filtration, f: &ScalarField) -> Result<(f64, f64, f64)> {
    let depth = filt.depth();
    let scale = f.max_abs().max(f64::MIN_POSITIVE);
    let l2 = f.lp_norm(mu, 2.0).powi(2).max(f64::MIN_POSITIVE);
    let total = f.integral(mu);
    let e: Vec<ScalarField> = (0..=depth).map(|k| filt.cond_exp(mu, f, k)).collect::<Result<_>>()?;
    let d: Vec<ScalarField> = (0..=depth).map(|k| filt.mart_diff(mu, f, k)).collect::<Result<_>>()?;
    let mut mass = 0.0f64;
    let mut tower = 0.0f64;
    let mut orth = 0.0f64;
    for j in 0..=depth {
        mass = mass.max((e[j].integral(mu) - total).abs() / (f.lp_norm(mu, 1.0).max(f64::MIN_POSITIVE)));
        for k in j..=depth {
            let ejk = filt.cond_exp(mu, &e[k], j)?;
            let gap = ejk.values().iter().zip(e[j].values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            tower = tower.max(gap / scale);
            if k > j {
                let ip = d[j].zip_with(&d[k], |a, b| a * b).integral(mu);
                orth = orth.max(ip.abs() / l2);
            }
        }
    }
    Ok((mass, tower, orth))
}

pub fn filtration_section(cx: &Context) -> Result<Section> {
    let mut s = Section::new("filtration");
    let filt = &cx.filtration;
    let rep = filt.verify(&cx.mu);
    s.asserted.push(Check::new("structure", rep.ok(), json!(rep.failures)));
    let non_doubling: Vec<usize> = filt.atoms.iter().filter(|a| !a.doubling).map(|a| a.id).collect();
    s.asserted.push(Check::new("atoms_doubling", non_doubling.is_empty(), json!({ "atoms": non_doubling })));
    let (mut mass, mut tower, mut orth) = (0.0f64, 0.0f64, 0.0f64);
    for f in &cx.fields {
        let (a, b, c) = martingale_identities(&cx.mu, filt, f)?;
        mass = mass.max(a);
        tower = tower.max(b);
        orth = orth.max(c);
    }
    // Sums over up to a thousand terms lose a few ulps each.
    let tol = 1e3 * f64::EPSILON;
    s.asserted.push(Check::new("mass_conservation", mass <= tol, json!({ "max_relative_error": mass, "tolerance": tol })));
    s.asserted.push(Check::new("tower_property", tower <= tol, json!({ "max_relative_error": tower, "tolerance": tol })));
    s.asserted.push(Check::new("difference_orthogonality", orth <= tol, json!({ "max_relative_error": orth, "tolerance": tol })));
    s.measure("depth", rep.depth);
    s.measure("atoms", rep.atoms);
    s.measure("orphans", rep.orphans);
    s.measure("c_iv", rep.c_iv);
    s.measure("chain_checks", rep.chain_checks);
    s.measure("chain_failures", rep.chain_failures);
    s.measure("k_coefficient", k_coefficient_report(&cx.mu, filt));
    s.artifact = filt.to_json(&cx.mu);
    Ok(s)
}

pub fn spaces_section(cx: &Context) -> Result<Section> {
    let mut s = Section::new("spaces");
    let (mu, filt) = (&cx.mu, &cx.filtration);
    let mut rows = Vec::new();
    let mut mono_bad = Vec::new();
    let mut scalar_matrix = 0.0f64;
    for (i, f) in cx.fields.iter().enumerate() {
        let p1 = rbmo_sigma_norm(mu, filt, f, 1.0)?.value;
        let p2 = rbmo_sigma_norm(mu, filt, f, 2.0)?.value;
        let c = rbmo_sigma_c_norm(mu, filt, &MatrixField::from_scalar(mu, f))?.value;
        scalar_matrix = scalar_matrix.max((c - p2).abs() / p2.max(f64::MIN_POSITIVE));
        if p1 > p2 * (1.0 + IDENTITY_TOL) {
            mono_bad.push(json!({ "field": i, "p1": p1, "p2": p2 }));
        }
        let tolsa = rbmo_tolsa_norm(mu, f, cx.tolsa_beta())?;
        rows.push(json!({ "field": i, "sigma_p1": p1, "sigma_p2": p2, "tolsa": tolsa.value, "tolsa_star": tolsa.star }));
    }
    s.asserted.push(Check::new("p_monotonicity", mono_bad.is_empty(), json!(mono_bad)));
    s.asserted.push(Check::new(
        "matrix_scalar_consistency",
        scalar_matrix <= IDENTITY_TOL,
        json!({ "max_relative_error": scalar_matrix }),
    ));
    match inclusion_ratio(mu, filt, &cx.fields, cx.tolsa_beta()) {
        Ok(r) => s.measure("inclusion_ratio", r),
        Err(e) => s.measure("inclusion_ratio_error", e.to_string()),
    }
    s.measure("tolsa_beta", cx.tolsa_beta());
    s.artifact = json!({ "fields": rows, "measured": s.measured });
    Ok(s)
}

fn heights(mu: &PointMeasure, f: &ScalarField, factors: &[f64]) -> Vec<f64> {
    let mean = f.lp_norm(mu, 1.0) / mu.total_mass();
    factors.iter().map(|c| c * mean).collect()
}

pub fn operators_section(cx: &Context) -> Result<Section> {
    let mut s = Section::new("operators");
    let (mu, filt) = (&cx.mu, &cx.filtration);
    let mut rows = Vec::new();
    let (mut recon, mut piece_mean) = (0.0f64, 0.0f64);
    let mut maximality = Vec::new();
    let (mut bad_ratio, mut good_ratio) = (0.0f64, 0.0f64);
    for (i, f) in cx.fields.iter().enumerate() {
        let g = f.map(f64::abs);
        let scale = g.max_abs().max(f64::MIN_POSITIVE);
        for &lambda in &heights(mu, &g, &cx.config.lambda_factors) {
            if !(lambda > g.integral(mu) / mu.total_mass()) {
                continue;
            }
            let d = cz_decompose(mu, filt, &g, lambda)?;
            recon = recon.max(d.report.reconstruction_error / scale);
            piece_mean = piece_mean.max(d.report.max_piece_mean / scale);
            if !d.report.maximality_ok {
                maximality.push(json!({ "field": i, "lambda": lambda }));
            }
            bad_ratio = bad_ratio.max(d.report.bad_mass_ratio);
            good_ratio = good_ratio.max(d.report.good_l2_squared_ratio);
            rows.push(json!({ "field": i, "report": d.report }));
        }
    }
    s.asserted.push(Check::new("cz_reconstruction", recon <= IDENTITY_TOL, json!({ "max_relative_error": recon })));
    s.asserted.push(Check::new("cz_mean_zero", piece_mean <= IDENTITY_TOL, json!({ "max_relative_mean": piece_mean })));
    s.asserted.push(Check::new("cz_maximality", maximality.is_empty(), json!(maximality)));
    s.measure("cz_bad_mass_ratio_max", bad_ratio);
    s.measure("cz_good_l2_squared_ratio_max", good_ratio);
    let lambdas: Vec<f64> = heights(mu, &cx.fields[0], &cx.config.lambda_factors);
    let weak = weak11_report(mu, &cx.operator, &cx.fields, &lambdas)?;
    s.asserted.push(Check::new("weak11_finite", weak.max.is_finite(), json!({ "max": weak.max })));
    s.measure("weak11_max", weak.max);
    s.measure("l2_norm", cx.operator.l2_norm(mu).value);
    s.measure("kernel_size_constant", cx.operator.spec.size_constant(mu));
    s.measure("kernel", &cx.operator.spec);
    s.artifact = json!({ "czd": rows, "weak11": weak, "measured": s.measured });
    Ok(s)
}

pub struct SparseOutput {
    pub section: Section,
    pub sweep: Vec<WeightedRow>,
}

pub fn sparse_section(cx: &Context) -> Result<SparseOutput> {
    let mut s = Section::new("sparse");
    let (mu, filt) = (&cx.mu, &cx.filtration);
    let mut rows = Vec::new();
    let mut cert_bad = Vec::new();
    let mut disjoint_bad = Vec::new();
    let mut ratio_bad = Vec::new();
    let (mut eta_min, mut ratio_max, mut cert_max) = (1.0f64, 0.0f64, 0.0f64);
    for (i, f) in cx.fields.iter().enumerate() {
        let d = dominate(mu, &cx.operator, filt, f, 0, cx.config.sparse_lambda)?;
        let r = &d.report;
        if r.certificate_min.is_some_and(|c| c < 1.0 - IDENTITY_TOL) {
            cert_bad.push(json!({ "field": i, "certificate_min": r.certificate_min }));
        }
        if !d.decomposition.family.witnesses_disjoint {
            disjoint_bad.push(i);
        }
        if !r.ratio.is_finite() {
            ratio_bad.push(json!({ "field": i, "point": r.failure }));
        }
        eta_min = eta_min.min(r.eta);
        ratio_max = ratio_max.max(r.ratio);
        cert_max = cert_max.max(r.certificate_max.unwrap_or(0.0));
        rows.push(json!({ "field": i, "report": r }));
    }
    s.asserted.push(Check::new("certificate_at_least_one", cert_bad.is_empty(), json!(cert_bad)));
    s.asserted.push(Check::new("witnesses_disjoint", disjoint_bad.is_empty(), json!({ "fields": disjoint_bad })));
    s.asserted.push(Check::new("domination_ratio_finite", ratio_bad.is_empty(), json!(ratio_bad)));
    s.measure("eta_min", eta_min);
    s.measure("eta_at_least_quarter", eta_min >= 0.25);
    s.measure("domination_ratio_max", ratio_max);
    s.measure("certificate_max", cert_max);

    let (ap, bp) = (cx.config.a2_alpha, cx.a2_beta());
    let one = Weight::new(mu, vec![1.0; mu.len()])?;
    let unit = a2_characteristic(mu, &one, ap, bp)?;
    s.asserted.push(Check::new("a2_unit_weight", unit == 1.0, json!({ "characteristic": unit })));
    let w = step_weight(mu, 7.0);
    let (c1, c2) = (a2_characteristic(mu, &w, ap, bp)?, a2_characteristic(mu, &w.scaled(13.0), ap, bp)?);
    let scale_err = (c1 - c2).abs() / c1;
    s.asserted.push(Check::new("a2_scaling_invariance", scale_err <= IDENTITY_TOL, json!({ "base": c1, "scaled": c2 })));
    let sweep = match a2_sweep(mu, &cx.operator, &cx.config.a2_targets, ap, bp) {
        Ok(rows) => rows,
        Err(e) => {
            s.measure("a2_sweep_error", e.to_string());
            Vec::new()
        }
    };
    if let (Some(first), Some(last)) = (sweep.first(), sweep.last()) {
        s.measure("a2_ratio2_first", first.ratio2);
        s.measure("a2_ratio2_last", last.ratio2);
        s.measure("a2_ratio2_max", sweep.iter().map(|r| r.ratio2).fold(0.0, f64::max));
    }
    s.artifact = json!({ "dominate": rows, "a2_sweep": sweep, "measured": s.measured });
    Ok(SparseOutput { section: s, sweep })
}

/// Fixed kernel matrix of unit norm drawn from the run seed.
fn kernel_matrix(m: usize, seed: u64) -> CMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6d61_7472_6978);
    let a = CMatrix::from_fn(m, m, |_, _| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    let n = crate::linalg::op_norm(&a);
    a.map(|z| z / n)
}

pub fn matrix_section(cx: &Context) -> Result<Section> {
    let mut s = Section::new("matrixval");
    let (mu, filt) = (&cx.mu, &cx.filtration);
    let m = cx.config.matrix_size;
    let kernel = MatrixKernel::scalar_times(cx.operator.clone(), kernel_matrix(m, cx.config.seed));
    let fields: Vec<MatrixField> = match &cx.config.matrix_field {
        Some(path) => vec![crate::matrixval::load_matrix_field(mu, std::path::Path::new(path))?],
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(cx.config.seed.wrapping_add(1));
            (0..cx.config.matrix_fields).map(|_| MatrixField::random_hermitian(mu, m, &mut rng)).collect()
        }
    };
    let mut ks_bad = Vec::new();
    let mut ks_min = f64::INFINITY;
    let mut unitary = 0.0f64;
    let mut split_bad = Vec::new();
    let mut reports = Vec::new();
    let (mut ratio_max, mut two_max) = (0.0f64, 0.0f64);
    let v: Vec<Complex64> = (0..m).map(|i| Complex64::new(1.0 + i as f64, 0.5 - i as f64)).collect();
    let u = householder(&v);
    for (i, f) in fields.iter().enumerate() {
        let ks = kadison_schwarz_check(mu, filt, f)?;
        ks_min = ks_min.min(ks.min_relative);
        if !ks.ok {
            ks_bad.push(json!({ "field": i, "atom": ks.worst_atom, "min_relative": ks.min_relative }));
        }
        let base = rbmo_sigma_c_norm(mu, filt, f)?.value;
        let rotated = rbmo_sigma_c_norm(mu, filt, &f.left_mul(&u))?.value;
        unitary = unitary.max((base - rotated).abs() / base.max(f64::MIN_POSITIVE));
        let r = endpoint_report(mu, filt, &kernel, f)?;
        if !r.split_ok {
            split_bad.push(json!({ "field": i, "worst": r.worst_terms }));
        }
        ratio_max = ratio_max.max(r.max_ratio);
        two_max = two_max.max(r.twosided_ratio);
        reports.push(r);
    }
    s.asserted.push(Check::new("kadison_schwarz", ks_bad.is_empty(), json!(ks_bad)));
    s.asserted.push(Check::new("unitary_invariance", unitary <= IDENTITY_TOL, json!({ "max_relative_error": unitary })));
    s.asserted.push(Check::new("endpoint_split_triangle", split_bad.is_empty(), json!(split_bad)));
    s.asserted.push(Check::new("endpoint_ratio_finite", ratio_max.is_finite(), json!({ "max_ratio": ratio_max })));
    s.measure("kadison_schwarz_min_relative", ks_min);
    s.measure("endpoint_ratio_max", ratio_max);
    s.measure("twosided_ratio_max", two_max);
    if let Some(r) = reports.first() {
        s.measure("column_constant", r.column_constant);
        s.measure("row_constant", r.row_constant);
        s.measure("size_constant", r.size_constant);
        s.measure("hormander_sup", r.hormander_sup);
    }
    s.artifact = json!({ "m": m, "fields": reports, "measured": s.measured });
    Ok(s)
}

/// CSV with one row per step weight.
pub fn sweep_csv(rows: &[WeightedRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["characteristic", "op_norm", "ratio2", "ratio1", "step"]).map_err(|e| Error::Parse(e.to_string()))?;
    for r in rows {
        w.write_record([r.characteristic, r.op_norm, r.ratio2, r.ratio1, r.step].map(|v| v.to_string()))
            .map_err(|e| Error::Parse(e.to_string()))?;
    }
    String::from_utf8(w.into_inner().map_err(|e| Error::Parse(e.to_string()))?).map_err(|e| Error::Parse(e.to_string()))
}

/// Summary of several sections: overall verdict, asserted checks and measured values.
pub fn summary(cx: &Context, sections: &[&Section]) -> Value {
    let asserted: BTreeMap<&str, &Vec<Check>> = sections.iter().map(|s| (s.name.as_str(), &s.asserted)).collect();
    let measured: BTreeMap<&str, &BTreeMap<String, Value>> = sections.iter().map(|s| (s.name.as_str(), &s.measured)).collect();
    json!({
        "measure": cx.config.measure,
        "measure_id": format!("{:016x}", cx.mu.id()),
        "points": cx.mu.len(),
        "mode": cx.params.mode,
        "params": cx.params,
        "seed": cx.config.seed,
        "ok": sections.iter().all(|s| s.ok()),
        "asserted": asserted,
        "measured": measured,
    })
}
