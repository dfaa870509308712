//! Dense discretizations of singular integral operators, maximal functions,
//! the Calderón–Zygmund decomposition over the filtration, and weak (1,1)
//! tables.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::filtration::Filtration;
use crate::lattice::Lattice;
use crate::measure::{PointMeasure, ScalarField};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelKind {
    /// `1 / (x - y)` on the line.
    Cauchy,
    /// `(x_j - y_j) / |x - y|^(n+1)`.
    Riesz { component: usize },
    /// Dense table indexed by support points.
    Custom {
        #[serde(skip)]
        table: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, Serialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    /// Entries with `|x - y| < epsilon` are set to zero.
    pub epsilon: f64,
    /// Lipschitz exponent, metadata only.
    pub gamma: f64,
}

impl KernelSpec {
    pub fn cauchy() -> Self {
        KernelSpec { kind: KernelKind::Cauchy, epsilon: 0.0, gamma: 1.0 }
    }

    pub fn riesz(component: usize) -> Self {
        KernelSpec { kind: KernelKind::Riesz { component }, epsilon: 0.0, gamma: 1.0 }
    }

    pub fn custom(table: Vec<Vec<f64>>) -> Self {
        KernelSpec { kind: KernelKind::Custom { table }, epsilon: 0.0, gamma: 1.0 }
    }

    /// Parses `cauchy`, `riesz:<j>` or `custom:<path>`.
    pub fn parse(spec: &str) -> Result<Self> {
        if spec == "cauchy" {
            return Ok(Self::cauchy());
        }
        if let Some(j) = spec.strip_prefix("riesz:") {
            let j = j.parse().map_err(|_| Error::Parse(format!("bad Riesz component `{j}`")))?;
            return Ok(Self::riesz(j));
        }
        if let Some(path) = spec.strip_prefix("custom:") {
            return Ok(Self::custom(load_kernel_table(Path::new(path))?));
        }
        Err(Error::Parse(format!("unknown kernel `{spec}`")))
    }

    fn validate(&self, mu: &PointMeasure) -> Result<()> {
        match &self.kind {
            KernelKind::Cauchy if mu.dim() != 1 => Err(Error::InvalidParams(
                "the Cauchy kernel is only available on the line".into(),
            )),
            KernelKind::Riesz { component } if *component >= mu.dim() => {
                Err(Error::InvalidParams(format!("Riesz component {component} in dimension {}", mu.dim())))
            }
            KernelKind::Custom { table } => {
                if table.len() != mu.len() || table.iter().any(|r| r.len() != mu.len()) {
                    return Err(Error::DimensionMismatch { expected: mu.len(), found: table.len() });
                }
                if table.iter().flatten().any(|v| !v.is_finite()) {
                    return Err(Error::Parse("kernel table has non-finite entries".into()));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// `k(x_i, x_j)`, zero on the diagonal and inside the truncation radius.
    pub fn eval(&self, mu: &PointMeasure, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        let r = mu.dist(i, j);
        if r < self.epsilon {
            return 0.0;
        }
        let (x, y) = (mu.point(i), mu.point(j));
        match &self.kind {
            KernelKind::Cauchy => 1.0 / (x[0] - y[0]),
            KernelKind::Riesz { component } => (x[*component] - y[*component]) / r.powf(mu.growth_degree() + 1.0),
            KernelKind::Custom { table } => table[i][j],
        }
    }

    /// `max |k(x, y)| |x - y|^n` over support pairs.
    pub fn size_constant(&self, mu: &PointMeasure) -> f64 {
        let n = mu.growth_degree();
        let mut c = 0.0f64;
        for i in 0..mu.len() {
            for j in 0..mu.len() {
                if i != j {
                    c = c.max(self.eval(mu, i, j).abs() * mu.dist(i, j).powf(n));
                }
            }
        }
        c
    }

    /// Largest `|k(x,y) - k(x',y)| |x-y|^(n+γ) / |x-x'|^γ` over sampled triples
    /// with `|x - x'| <= |x - y| / 2`.
    pub fn lipschitz_ratio(&self, mu: &PointMeasure, samples: usize, seed: u64) -> f64 {
        let n = mu.growth_degree();
        let g = self.gamma;
        let len = mu.len();
        if len < 3 {
            return 0.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut best = 0.0f64;
        for _ in 0..samples {
            let (x, xp, y) = (rng.random_range(0..len), rng.random_range(0..len), rng.random_range(0..len));
            if x == xp || x == y || xp == y {
                continue;
            }
            let (dxx, dxy) = (mu.dist(x, xp), mu.dist(x, y));
            if dxx > 0.5 * dxy {
                continue;
            }
            let diff = (self.eval(mu, x, y) - self.eval(mu, xp, y)).abs();
            best = best.max(diff * dxy.powf(n + g) / dxx.powf(g));
        }
        best
    }
}

/// Dense kernel table from JSON (array of rows) or headerless CSV.
pub fn load_kernel_table(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    if path.extension().and_then(|e| e.to_str()) == Some("csv") {
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(text.as_bytes());
        rdr.records()
            .map(|rec| {
                let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
                rec.iter().map(|v| v.trim().parse().map_err(|_| Error::Parse(format!("bad entry `{v}`")))).collect()
            })
            .collect()
    } else {
        serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))
    }
}

#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    pub spec: KernelSpec,
    pub measure_id: u64,
    /// `matrix[(i, j)] = k(x_i, x_j) w_j`.
    pub matrix: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct NormEstimate {
    pub value: f64,
    pub iterations: usize,
    pub dense_fallback: bool,
}

impl DiscreteOperator {
    pub fn assemble(mu: &PointMeasure, spec: KernelSpec) -> Result<Self> {
        spec.validate(mu)?;
        let n = mu.len();
        let matrix = DMatrix::from_fn(n, n, |i, j| spec.eval(mu, i, j) * mu.weight(j));
        Ok(DiscreteOperator { spec, measure_id: mu.id(), matrix })
    }

    pub fn apply(&self, mu: &PointMeasure, f: &ScalarField) -> Result<ScalarField> {
        if mu.id() != self.measure_id {
            return Err(Error::ForeignField);
        }
        f.check(mu)?;
        let v = &self.matrix * DVector::from_column_slice(f.values());
        Ok(f.with_values(v.as_slice().to_vec()))
    }

    /// Bare kernel values `k(x_i, x_j)`.
    fn kernel(&self, mu: &PointMeasure) -> DMatrix<f64> {
        let mut k = self.matrix.clone();
        for j in 0..mu.len() {
            k.column_mut(j).scale_mut(1.0 / mu.weight(j));
        }
        k
    }

    /// Norm on `L2(mu)`.
    pub fn l2_norm(&self, mu: &PointMeasure) -> NormEstimate {
        let ones = vec![1.0; mu.len()];
        self.weighted_l2_norm(mu, &ones)
    }

    /// Norm on `L2(w dmu)`: the spectral norm of `D K M D^-1`, `D = diag(sqrt(w mu))`, `M = diag(mu)`.
    pub fn weighted_l2_norm(&self, mu: &PointMeasure, w: &[f64]) -> NormEstimate {
        let d: Vec<f64> = w.iter().zip(mu.weights()).map(|(a, b)| (a * b).sqrt()).collect();
        let k = self.kernel(mu);
        let b = DMatrix::from_fn(mu.len(), mu.len(), |i, j| d[i] * k[(i, j)] * mu.weight(j) / d[j]);
        spectral_norm(&b)
    }
}

const POWER_TOL: f64 = 1e-8;
const POWER_MAX_ITER: usize = 20_000;

/// Largest singular value by power iteration on `B^T B`, with a dense SVD
/// when the iteration stalls.
pub fn spectral_norm(b: &DMatrix<f64>) -> NormEstimate {
    let n = b.ncols();
    if n == 0 || b.iter().all(|&v| v == 0.0) {
        return NormEstimate { value: 0.0, iterations: 0, dense_fallback: false };
    }
    // Deterministic start vector with no special symmetry.
    let mut v = DVector::from_fn(n, |i, _| 1.0 + ((i * 7919) % 113) as f64 / 113.0);
    v /= v.norm();
    let mut sigma = 0.0;
    for it in 1..=POWER_MAX_ITER {
        let u = b * &v;
        let next = b.transpose() * &u;
        let nrm = next.norm();
        if nrm == 0.0 {
            break;
        }
        let new_sigma = nrm.sqrt();
        v = next / nrm;
        if it > 1 && (new_sigma - sigma).abs() <= POWER_TOL * new_sigma {
            return NormEstimate { value: new_sigma, iterations: it, dense_fallback: false };
        }
        sigma = new_sigma;
    }
    let svd = b.clone().svd(false, false);
    let value = svd.singular_values.iter().copied().fold(0.0, f64::max);
    NormEstimate { value, iterations: POWER_MAX_ITER, dense_fallback: true }
}

/// `sup_r (1 / mu(B(x, 5r))) ∫_{B(x,r)} |f|`. For `r` between consecutive
/// distances from `x` the numerator is flat and the denominator grows, so
/// the sup runs over `r -> 0+` and the distances themselves.
pub fn maximal_centered(mu: &PointMeasure, f: &ScalarField) -> Result<ScalarField> {
    f.check(mu)?;
    let v = f.values();
    let out = (0..mu.len())
        .map(|x| {
            let nl = &mu.neighbors()[x];
            let mut best = v[x].abs();
            let mut acc = 0.0;
            let mut i = 0;
            while i < nl.dist.len() {
                let d = nl.dist[i];
                while i < nl.dist.len() && crate::measure::within(nl.dist[i], d) {
                    let y = nl.index[i] as usize;
                    acc += v[y].abs() * mu.weight(y);
                    i += 1;
                }
                if d > 0.0 {
                    best = best.max(acc / nl.mass_within(5.0 * d));
                }
            }
            best
        })
        .collect();
    Ok(f.with_values(out))
}

/// `sup_{x ∈ Q ∈ D} (1 / mu(alpha B_Q)) ∫_{56 B_Q} |f|`.
pub fn maximal_lattice(mu: &PointMeasure, l: &Lattice, f: &ScalarField, alpha: f64) -> Result<ScalarField> {
    f.check(mu)?;
    let v = f.values();
    let per_cube: Vec<f64> = l
        .cubes
        .iter()
        .map(|q| {
            let num: f64 = mu
                .ball_members_at(q.center_index, 56.0 * q.radius)
                .iter()
                .map(|&y| v[y as usize].abs() * mu.weight(y as usize))
                .sum();
            num / mu.ball_mass_at(q.center_index, alpha * q.radius)
        })
        .collect();
    let out = (0..mu.len()).map(|x| l.chain(x).map(|c| per_cube[c]).fold(0.0, f64::max)).collect();
    Ok(f.with_values(out))
}

#[derive(Debug, Clone, Serialize)]
pub struct CzPiece {
    pub atom: usize,
    pub parent: usize,
    pub level: usize,
    #[serde(skip)]
    pub phi: ScalarField,
}

#[derive(Debug, Clone, Serialize)]
pub struct CzReport {
    pub lambda: f64,
    pub maximal_atoms: Vec<usize>,
    pub reconstruction_error: f64,
    pub max_piece_mean: f64,
    pub bad_mass_ratio: f64,
    pub good_l2_squared_ratio: f64,
    pub good_l2_ratio: f64,
    pub good_sup_over_lambda: f64,
    pub maximality_ok: bool,
}

#[derive(Debug, Clone)]
pub struct CzDecomposition {
    pub g: ScalarField,
    pub pieces: Vec<CzPiece>,
    pub report: CzReport,
}

impl CzDecomposition {
    /// `phi_k`: the sum of the pieces whose maximal atom sits at level `k`.
    pub fn phi_at_level(&self, mu: &PointMeasure, k: usize) -> ScalarField {
        let mut out = vec![0.0; mu.len()];
        for p in self.pieces.iter().filter(|p| p.level == k) {
            for (o, v) in out.iter_mut().zip(p.phi.values()) {
                *o += v;
            }
        }
        self.g.with_values(out)
    }
}

pub fn cz_decompose(mu: &PointMeasure, filt: &Filtration, f: &ScalarField, lambda: f64) -> Result<CzDecomposition> {
    f.check(mu)?;
    let v = f.values();
    if v.iter().any(|&x| x < 0.0) {
        return Err(Error::Precondition("f must be nonnegative".into()));
    }
    let l1 = f.integral(mu);
    let mean = l1 / mu.total_mass();
    if !(lambda > mean) {
        return Err(Error::Precondition(format!("lambda = {lambda} must exceed the mean {mean}")));
    }
    let mut maximal = Vec::new();
    let mut stack = vec![0usize];
    while let Some(a) = stack.pop() {
        if filt.atom_mean(mu, v, a) > lambda {
            maximal.push(a);
        } else {
            stack.extend(filt.atoms[a].children.iter().rev());
        }
    }
    maximal.sort_unstable();
    let mut g = v.to_vec();
    let mut pieces = Vec::with_capacity(maximal.len());
    let mut max_piece_mean = 0.0f64;
    let mut bad_mass = 0.0;
    let mut maximality_ok = true;
    for &q in &maximal {
        let atom = &filt.atoms[q];
        let parent = atom.sigma_parent.expect("root average is below lambda");
        if filt.atom_mean(mu, v, parent) > lambda {
            maximality_ok = false;
        }
        let pmembers = &filt.atoms[parent].members;
        let inside: f64 = atom.members.iter().map(|&x| v[x] * mu.weight(x)).sum();
        let comp = inside / mu.mass_of(pmembers);
        let mut phi = vec![0.0; mu.len()];
        for &x in &atom.members {
            phi[x] += v[x];
        }
        for &x in pmembers {
            phi[x] -= comp;
        }
        for (gx, p) in g.iter_mut().zip(&phi) {
            *gx -= p;
        }
        let pmean: f64 = pmembers.iter().map(|&x| phi[x] * mu.weight(x)).sum();
        max_piece_mean = max_piece_mean.max(pmean.abs() / inside.max(f64::MIN_POSITIVE));
        bad_mass += phi.iter().zip(mu.weights()).map(|(p, w)| p.abs() * w).sum::<f64>();
        pieces.push(CzPiece { atom: q, parent, level: atom.level, phi: f.with_values(phi) });
    }
    let mut recon = g.clone();
    for p in &pieces {
        for (r, x) in recon.iter_mut().zip(p.phi.values()) {
            *r += x;
        }
    }
    let reconstruction_error = recon.iter().zip(v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    // Points outside every maximal atom sit in singleton atoms of average <= lambda.
    let mut covered = vec![false; mu.len()];
    for &q in &maximal {
        for &x in &filt.atoms[q].members {
            covered[x] = true;
        }
    }
    if (0..mu.len()).any(|x| !covered[x] && v[x] > lambda) {
        maximality_ok = false;
    }
    let g = f.with_values(g);
    let g2 = g.map(|x| x * x).integral(mu);
    let report = CzReport {
        lambda,
        maximal_atoms: maximal,
        reconstruction_error,
        max_piece_mean,
        bad_mass_ratio: if l1 > 0.0 { bad_mass / l1 } else { 0.0 },
        good_l2_squared_ratio: if l1 > 0.0 { g2 / (lambda * l1) } else { 0.0 },
        good_l2_ratio: if l1 > 0.0 { g2.sqrt() / (lambda * l1) } else { 0.0 },
        good_sup_over_lambda: g.max_abs() / lambda,
        maximality_ok,
    };
    Ok(CzDecomposition { g, pieces, report })
}

#[derive(Debug, Clone, Serialize)]
pub struct Weak11Report {
    /// `(field index, lambda, lambda mu(|Tf| > lambda) / ‖f‖_1)`.
    pub rows: Vec<(usize, f64, f64)>,
    pub max: f64,
}

pub fn weak11_report(mu: &PointMeasure, t: &DiscreteOperator, fields: &[ScalarField], lambdas: &[f64]) -> Result<Weak11Report> {
    let mut rows = Vec::new();
    let mut max = 0.0f64;
    for (i, f) in fields.iter().enumerate() {
        let tf = t.apply(mu, f)?;
        let l1 = f.lp_norm(mu, 1.0);
        for &lam in lambdas {
            let val = if l1 > 0.0 {
                let mass: f64 = tf.values().iter().zip(mu.weights()).filter(|(v, _)| v.abs() > lam).map(|(_, w)| w).sum();
                lam * mass / l1
            } else {
                0.0
            };
            max = max.max(val);
            rows.push((i, lam, val));
        }
    }
    Ok(Weak11Report { rows, max })
}
