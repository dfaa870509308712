//! Matrix-valued fields over a filtration: column and row martingale BMO
//! norms, the Kadison–Schwarz gap of atom averages, left-multiplication
//! kernels and the four-term split of the endpoint estimate.

use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use crate::error::{Error, Result};
use crate::filtration::Filtration;
use crate::linalg::{max_eigenvalue, min_eigenvalue, op_norm, real_embedding, CMatrix};
use crate::measure::{PointMeasure, ScalarField};
use crate::operators::{spectral_norm, DiscreteOperator};

#[derive(Debug, Clone)]
pub struct MatrixField {
    measure_id: u64,
    m: usize,
    values: Vec<CMatrix>,
}

impl MatrixField {
    pub fn new(mu: &PointMeasure, m: usize, values: Vec<CMatrix>) -> Result<Self> {
        if values.len() != mu.len() {
            return Err(Error::DimensionMismatch { expected: mu.len(), found: values.len() });
        }
        if m == 0 {
            return Err(Error::InvalidParams("matrix size must be positive".into()));
        }
        for v in &values {
            if v.nrows() != m || v.ncols() != m {
                return Err(Error::DimensionMismatch { expected: m, found: v.nrows().max(v.ncols()) });
            }
            if v.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::Parse("non-finite matrix entry".into()));
            }
        }
        Ok(MatrixField { measure_id: mu.id(), m, values })
    }

    pub fn zeros(mu: &PointMeasure, m: usize) -> Self {
        MatrixField { measure_id: mu.id(), m, values: vec![CMatrix::zeros(m, m); mu.len()] }
    }

    pub fn constant(mu: &PointMeasure, c: &CMatrix) -> Self {
        MatrixField { measure_id: mu.id(), m: c.nrows(), values: vec![c.clone(); mu.len()] }
    }

    /// `1 x 1` field carrying a scalar field.
    pub fn from_scalar(mu: &PointMeasure, f: &ScalarField) -> Self {
        let values = f.values().iter().map(|&v| CMatrix::from_element(1, 1, Complex64::new(v, 0.0))).collect();
        MatrixField { measure_id: mu.id(), m: 1, values }
    }

    pub fn diagonal(mu: &PointMeasure, fs: &[ScalarField]) -> Self {
        let m = fs.len();
        let values = (0..mu.len())
            .map(|x| CMatrix::from_fn(m, m, |i, j| if i == j { Complex64::new(fs[i].values()[x], 0.0) } else { Complex64::ZERO }))
            .collect();
        MatrixField { measure_id: mu.id(), m, values }
    }

    /// `g(x) e`: a scalar field times a fixed matrix.
    pub fn scalar_times(mu: &PointMeasure, g: &ScalarField, e: &CMatrix) -> Self {
        let values = g.values().iter().map(|&v| e.map(|z| z * v)).collect();
        MatrixField { measure_id: mu.id(), m: e.nrows(), values }
    }

    /// Entries drawn independently from a standard normal, real and imaginary parts alike.
    pub fn random<R: Rng>(mu: &PointMeasure, m: usize, rng: &mut R) -> Self {
        let values = (0..mu.len())
            .map(|_| {
                CMatrix::from_fn(m, m, |_, _| Complex64::new(StandardNormal.sample(&mut *rng), StandardNormal.sample(&mut *rng)))
            })
            .collect();
        MatrixField { measure_id: mu.id(), m, values }
    }

    pub fn random_hermitian<R: Rng>(mu: &PointMeasure, m: usize, rng: &mut R) -> Self {
        let mut f = Self::random(mu, m, rng);
        for v in &mut f.values {
            *v = (&*v + v.adjoint()).map(|z| z * 0.5);
        }
        f
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn values(&self) -> &[CMatrix] {
        &self.values
    }

    pub fn check(&self, mu: &PointMeasure) -> Result<()> {
        if self.measure_id != mu.id() {
            return Err(Error::ForeignField);
        }
        Ok(())
    }

    pub fn adjoint(&self) -> Self {
        MatrixField { measure_id: self.measure_id, m: self.m, values: self.values.iter().map(|v| v.adjoint()).collect() }
    }

    pub fn left_mul(&self, u: &CMatrix) -> Self {
        MatrixField { measure_id: self.measure_id, m: self.m, values: self.values.iter().map(|v| u * v).collect() }
    }

    pub fn add_constant(&self, c: &CMatrix) -> Self {
        MatrixField { measure_id: self.measure_id, m: self.m, values: self.values.iter().map(|v| v + c).collect() }
    }

    /// `max_x ||f(x)||`, the norm of `f` in the algebra.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(op_norm).fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> Value {
        Value::Array(
            self.values
                .iter()
                .map(|v| {
                    Value::Array(
                        (0..self.m)
                            .map(|i| Value::Array((0..self.m).map(|j| serde_json::json!([v[(i, j)].re, v[(i, j)].im])).collect()))
                            .collect(),
                    )
                })
                .collect(),
        )
    }
}

fn parse_entry(v: &Value) -> Result<Complex64> {
    match v {
        Value::Number(n) => Ok(Complex64::new(n.as_f64().unwrap_or(f64::NAN), 0.0)),
        Value::Array(p) if p.len() == 2 => {
            let re = p[0].as_f64().ok_or_else(|| Error::Parse("entry real part is not a number".into()))?;
            let im = p[1].as_f64().ok_or_else(|| Error::Parse("entry imaginary part is not a number".into()))?;
            Ok(Complex64::new(re, im))
        }
        _ => Err(Error::Parse("matrix entry must be a number or [re, im]".into())),
    }
}

pub fn parse_matrix(v: &Value) -> Result<CMatrix> {
    let rows = v.as_array().ok_or_else(|| Error::Parse("matrix must be an array of rows".into()))?;
    let m = rows.len();
    let mut out = CMatrix::zeros(m, m);
    for (i, row) in rows.iter().enumerate() {
        let row = row.as_array().filter(|r| r.len() == m).ok_or_else(|| Error::Parse(format!("row {i} is not of length {m}")))?;
        for (j, e) in row.iter().enumerate() {
            out[(i, j)] = parse_entry(e)?;
        }
    }
    Ok(out)
}

/// JSON array with one `m x m` array of `[re, im]` pairs per support point.
pub fn parse_matrix_field(mu: &PointMeasure, v: &Value) -> Result<MatrixField> {
    let arr = v.as_array().ok_or_else(|| Error::Parse("matrix field must be an array".into()))?;
    let values = arr.iter().map(parse_matrix).collect::<Result<Vec<_>>>()?;
    let m = values.first().map_or(1, |v| v.nrows());
    MatrixField::new(mu, m, values)
}

pub fn load_matrix_field(mu: &PointMeasure, path: &Path) -> Result<MatrixField> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
    let v: Value = serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
    parse_matrix_field(mu, &v)
}

fn mean(mu: &PointMeasure, vals: &[CMatrix], s: &[usize]) -> CMatrix {
    let mass = mu.mass_of(s);
    let mut acc = CMatrix::zeros(vals[s[0]].nrows(), vals[s[0]].ncols());
    for &x in s {
        acc += vals[x].map(|z| z * mu.weight(x));
    }
    acc.map(|z| z / mass)
}

/// `avg_S |g - c|^2` as a Hermitian matrix.
fn column_square_mean(mu: &PointMeasure, vals: &[CMatrix], s: &[usize], c: &CMatrix) -> CMatrix {
    let mass = mu.mass_of(s);
    let mut acc = CMatrix::zeros(c.nrows(), c.ncols());
    for &x in s {
        let d = &vals[x] - c;
        acc += (d.adjoint() * d).map(|z| z * mu.weight(x));
    }
    acc.map(|z| z / mass)
}

fn column_norm(mu: &PointMeasure, vals: &[CMatrix], s: &[usize], c: &CMatrix) -> f64 {
    max_eigenvalue(&column_square_mean(mu, vals, s, c)).max(0.0).sqrt()
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct MatrixNorm {
    pub value: f64,
    pub atom: Option<usize>,
}

/// `sup_Q ||avg_Q |f - <f>_{Q^}|^2||^{1/2}`; the root is compared with its own mean.
pub fn rbmo_sigma_c_norm(mu: &PointMeasure, filt: &Filtration, f: &MatrixField) -> Result<MatrixNorm> {
    f.check(mu)?;
    if filt.measure_id != mu.id() {
        return Err(Error::ForeignField);
    }
    let means: Vec<CMatrix> = filt.atoms.par_iter().map(|a| mean(mu, &f.values, &a.members)).collect();
    let vals: Vec<f64> = filt
        .atoms
        .par_iter()
        .map(|a| column_norm(mu, &f.values, &a.members, &means[a.sigma_parent.unwrap_or(0)]))
        .collect();
    let mut best = MatrixNorm { value: 0.0, atom: None };
    for (i, v) in vals.into_iter().enumerate() {
        if v > best.value {
            best = MatrixNorm { value: v, atom: Some(i) };
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TwoSidedNorm {
    pub column: f64,
    pub row: f64,
    pub value: f64,
}

pub fn rbmo_sigma_norm_twosided(mu: &PointMeasure, filt: &Filtration, f: &MatrixField) -> Result<TwoSidedNorm> {
    let column = rbmo_sigma_c_norm(mu, filt, f)?.value;
    let row = rbmo_sigma_c_norm(mu, filt, &f.adjoint())?.value;
    Ok(TwoSidedNorm { column, row, value: column.max(row) })
}

/// Tolerance for the Kadison–Schwarz gap, relative to the size of `<|f|^2>_Q`.
pub const KS_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Serialize)]
pub struct KadisonSchwarzReport {
    pub min_eigenvalue: f64,
    pub min_relative: f64,
    pub worst_atom: usize,
    pub ok: bool,
}

/// Smallest eigenvalue of `<|f|^2>_Q - |<f>_Q|^2` over all atoms.
pub fn kadison_schwarz_check(mu: &PointMeasure, filt: &Filtration, f: &MatrixField) -> Result<KadisonSchwarzReport> {
    f.check(mu)?;
    let rows: Vec<(f64, f64)> = filt
        .atoms
        .par_iter()
        .map(|a| {
            let zero = CMatrix::zeros(f.m, f.m);
            let sq = column_square_mean(mu, &f.values, &a.members, &zero);
            let avg = mean(mu, &f.values, &a.members);
            let gap = &sq - avg.adjoint() * &avg;
            let ev = min_eigenvalue(&gap);
            let scale = max_eigenvalue(&sq).max(f64::MIN_POSITIVE);
            (ev, ev / scale)
        })
        .collect();
    let mut report = KadisonSchwarzReport { min_eigenvalue: f64::INFINITY, min_relative: f64::INFINITY, worst_atom: 0, ok: true };
    for (i, (ev, rel)) in rows.into_iter().enumerate() {
        if rel < report.min_relative {
            report.min_relative = rel;
            report.worst_atom = i;
        }
        report.min_eigenvalue = report.min_eigenvalue.min(ev);
    }
    report.ok = report.min_relative >= -KS_TOL;
    Ok(report)
}

/// Kernel acting on matrices by left multiplication.
#[derive(Debug, Clone)]
pub enum MatrixKernel {
    /// `k(x, y) = s(x, y) M` for a scalar kernel `s`.
    ScalarTimes { op: DiscreteOperator, matrix: CMatrix },
    /// One matrix per ordered pair, row-major in `(x, y)`; the diagonal is ignored.
    Full { measure_id: u64, n: usize, m: usize, entries: Vec<CMatrix> },
}

impl MatrixKernel {
    pub fn scalar_times(op: DiscreteOperator, matrix: CMatrix) -> Self {
        MatrixKernel::ScalarTimes { op, matrix }
    }

    pub fn full(mu: &PointMeasure, entries: Vec<CMatrix>) -> Result<Self> {
        let n = mu.len();
        if entries.len() != n * n {
            return Err(Error::DimensionMismatch { expected: n * n, found: entries.len() });
        }
        let m = entries[0].nrows();
        if entries.iter().any(|e| e.nrows() != m || e.ncols() != m) {
            return Err(Error::InvalidParams("kernel matrices must all be m x m".into()));
        }
        Ok(MatrixKernel::Full { measure_id: mu.id(), n, m, entries })
    }

    pub fn m(&self) -> usize {
        match self {
            MatrixKernel::ScalarTimes { matrix, .. } => matrix.nrows(),
            MatrixKernel::Full { m, .. } => *m,
        }
    }

    fn measure_id(&self) -> u64 {
        match self {
            MatrixKernel::ScalarTimes { op, .. } => op.measure_id,
            MatrixKernel::Full { measure_id, .. } => *measure_id,
        }
    }

    fn check(&self, mu: &PointMeasure, f: &MatrixField) -> Result<()> {
        if self.measure_id() != mu.id() {
            return Err(Error::ForeignField);
        }
        f.check(mu)?;
        if f.m != self.m() {
            return Err(Error::DimensionMismatch { expected: self.m(), found: f.m });
        }
        Ok(())
    }

    /// `k(x, y)`, zero on the diagonal.
    pub fn eval(&self, mu: &PointMeasure, x: usize, y: usize) -> CMatrix {
        if x == y {
            return CMatrix::zeros(self.m(), self.m());
        }
        match self {
            MatrixKernel::ScalarTimes { op, matrix } => {
                let s = op.matrix[(x, y)] / mu.weight(y);
                matrix.map(|z| z * s)
            }
            MatrixKernel::Full { n, entries, .. } => entries[x * n + y].clone(),
        }
    }

    /// `||k(x, y)||` without forming the matrix when the kernel is a scalar multiple.
    fn eval_norm(&self, mu: &PointMeasure, x: usize, y: usize, matrix_norm: f64) -> f64 {
        match self {
            MatrixKernel::ScalarTimes { op, .. } if x != y => (op.matrix[(x, y)] / mu.weight(y)).abs() * matrix_norm,
            _ => op_norm(&self.eval(mu, x, y)),
        }
    }

    fn diff_norm(&self, mu: &PointMeasure, (x1, y1): (usize, usize), (x2, y2): (usize, usize), matrix_norm: f64) -> f64 {
        match self {
            MatrixKernel::ScalarTimes { op, .. } => {
                let s = |x: usize, y: usize| if x == y { 0.0 } else { op.matrix[(x, y)] / mu.weight(y) };
                (s(x1, y1) - s(x2, y2)).abs() * matrix_norm
            }
            _ => op_norm(&(self.eval(mu, x1, y1) - self.eval(mu, x2, y2))),
        }
    }

    /// `sum_{y in mask} k(x, y) f(y) mu(y)` at every `x` in `at`; other entries are zero.
    pub fn apply_masked(&self, mu: &PointMeasure, f: &MatrixField, mask: &[bool], at: &[usize]) -> Result<Vec<CMatrix>> {
        self.check(mu, f)?;
        let m = self.m();
        let mut out = vec![CMatrix::zeros(m, m); mu.len()];
        let rows: Vec<(usize, CMatrix)> = at
            .par_iter()
            .map(|&x| {
                let mut acc = CMatrix::zeros(m, m);
                match self {
                    MatrixKernel::ScalarTimes { op, matrix } => {
                        for y in (0..mu.len()).filter(|&y| mask[y] && y != x) {
                            acc += f.values[y].map(|z| z * op.matrix[(x, y)]);
                        }
                        acc = matrix * acc;
                    }
                    MatrixKernel::Full { n, entries, .. } => {
                        for y in (0..mu.len()).filter(|&y| mask[y] && y != x) {
                            acc += (&entries[x * n + y] * &f.values[y]).map(|z| z * mu.weight(y));
                        }
                    }
                }
                (x, acc)
            })
            .collect();
        for (x, v) in rows {
            out[x] = v;
        }
        Ok(out)
    }

    pub fn apply(&self, mu: &PointMeasure, f: &MatrixField) -> Result<MatrixField> {
        let all: Vec<usize> = (0..mu.len()).collect();
        let values = self.apply_masked(mu, f, &vec![true; mu.len()], &all)?;
        Ok(MatrixField { measure_id: mu.id(), m: self.m(), values })
    }

    /// `max_{x != y} ||k(x, y)|| |x - y|^n`.
    pub fn size_constant(&self, mu: &PointMeasure) -> f64 {
        let n = mu.growth_degree();
        let mn = self.matrix_norm();
        (0..mu.len())
            .flat_map(|x| (0..mu.len()).filter(move |&y| y != x).map(move |y| (x, y)))
            .map(|(x, y)| self.eval_norm(mu, x, y, mn) * mu.dist(x, y).powf(n))
            .fold(0.0, f64::max)
    }

    fn matrix_norm(&self) -> f64 {
        match self {
            MatrixKernel::ScalarTimes { matrix, .. } => op_norm(matrix),
            MatrixKernel::Full { .. } => f64::NAN,
        }
    }

    /// Operator norm on the column space `L_inf(M; L2^c)`: the norm of the block
    /// matrix `mu(x)^{1/2} k(x, y) mu(y)^{1/2}`.
    pub fn column_constant(&self, mu: &PointMeasure) -> f64 {
        let (n, m) = (mu.len(), self.m());
        let block = CMatrix::from_fn(n * m, n * m, |r, c| {
            let (x, i, y, j) = (r / m, r % m, c / m, c % m);
            self.eval(mu, x, y)[(i, j)] * (mu.weight(x) * mu.weight(y)).sqrt()
        });
        spectral_norm(&real_embedding(&block)).value
    }

    /// Operator norm on the row space `L_inf(M; L2^r)`. For a scalar multiple
    /// of a fixed matrix it factors as `||M|| ||S||`; general kernels return `None`.
    pub fn row_constant(&self, mu: &PointMeasure) -> Option<f64> {
        match self {
            MatrixKernel::ScalarTimes { op, matrix } => Some(op_norm(matrix) * op.l2_norm(mu).value),
            MatrixKernel::Full { .. } => None,
        }
    }

    /// Hörmander sums over the balls `B_Q` of the atoms. Each ball pairs its
    /// center with every support point inside it, which determines the
    /// supremum over pairs up to a factor 2.
    pub fn hormander(&self, mu: &PointMeasure, filt: &Filtration) -> HormanderReport {
        let mn = self.matrix_norm();
        let table: Vec<f64> = filt
            .atoms
            .par_iter()
            .map(|a| {
                let b = a.ball(mu);
                let zs = mu.ball_members(&b);
                let big = b.dilate(filt.alpha);
                let outside: Vec<usize> = (0..mu.len()).filter(|&x| !big.contains(mu.point(x))).collect();
                let z1 = a.center_index;
                zs.iter()
                    .map(|&z2| {
                        outside
                            .iter()
                            .map(|&x| {
                                (self.diff_norm(mu, (z1, x), (z2, x), mn) + self.diff_norm(mu, (x, z1), (x, z2), mn)) * mu.weight(x)
                            })
                            .sum::<f64>()
                    })
                    .fold(0.0, f64::max)
            })
            .collect();
        let sup = table.iter().copied().fold(0.0, f64::max);
        HormanderReport { sup, per_atom: table }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HormanderReport {
    pub sup: f64,
    pub per_atom: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EndpointTerms {
    pub atom: usize,
    pub parent: usize,
    pub i: f64,
    pub ii: f64,
    pub iii: f64,
    pub iv: f64,
    pub total: f64,
    /// `||avg_Q |Tf - <Tf>_{Q^}|^2||^{1/2}`.
    pub lhs: f64,
    /// Whether `alpha B_Q` is inside `alpha B_{Q^}` on the support, which the split needs.
    pub nested: bool,
}

/// The four terms of the endpoint split for an atom `Q` and its parent `Q^`:
/// the part of `f` near `Q`, the parent average of the part near `Q^`, the
/// annulus between the two dilated balls, and the far part measured against
/// its parent average.
pub fn proof_terms(mu: &PointMeasure, filt: &Filtration, k: &MatrixKernel, f: &MatrixField, q: usize) -> Result<EndpointTerms> {
    k.check(mu, f)?;
    let atom = filt.atoms.get(q).ok_or(Error::IndexOutOfRange(q))?;
    let p = atom.sigma_parent.ok_or(Error::NoParent(q))?;
    let parent = &filt.atoms[p];
    let near_ball = atom.ball(mu).dilate(filt.alpha);
    let parent_ball = parent.ball(mu).dilate(filt.alpha);
    let n = mu.len();
    let near: Vec<bool> = (0..n).map(|x| near_ball.contains(mu.point(x))).collect();
    let pb: Vec<bool> = (0..n).map(|x| parent_ball.contains(mu.point(x))).collect();
    let mid: Vec<bool> = (0..n).map(|x| pb[x] && !near[x]).collect();
    let far: Vec<bool> = pb.iter().map(|b| !b).collect();
    let nested = (0..n).all(|x| !near[x] || pb[x]);

    let mut at: Vec<usize> = atom.members.iter().chain(&parent.members).copied().collect();
    at.sort_unstable();
    at.dedup();
    let qs = &atom.members;
    let zero = CMatrix::zeros(k.m(), k.m());

    let t_near = k.apply_masked(mu, f, &near, qs)?;
    let i = column_norm(mu, &t_near, qs, &zero);
    let t_pb = k.apply_masked(mu, f, &pb, &parent.members)?;
    let ii = op_norm(&mean(mu, &t_pb, &parent.members));
    let t_mid = k.apply_masked(mu, f, &mid, qs)?;
    let iii = column_norm(mu, &t_mid, qs, &zero);
    let h = k.apply_masked(mu, f, &far, &at)?;
    let iv = column_norm(mu, &h, qs, &mean(mu, &h, &parent.members));
    let tf = k.apply_masked(mu, f, &vec![true; n], &at)?;
    let lhs = column_norm(mu, &tf, qs, &mean(mu, &tf, &parent.members));
    Ok(EndpointTerms { atom: q, parent: p, i, ii, iii, iv, total: i + ii + iii + iv, lhs, nested })
}

#[derive(Debug, Clone, Serialize)]
pub struct TheoremDTerms {
    pub terms: EndpointTerms,
    pub f_norm: f64,
    /// `lhs / ||f||`.
    pub ratio: f64,
}

pub fn theorem_d_terms(mu: &PointMeasure, filt: &Filtration, k: &MatrixKernel, f: &MatrixField, q: usize) -> Result<TheoremDTerms> {
    let f_norm = f.sup_norm();
    if f_norm == 0.0 {
        return Err(Error::Precondition("field has zero norm".into()));
    }
    let terms = proof_terms(mu, filt, k, f, q)?;
    let ratio = terms.lhs / f_norm;
    Ok(TheoremDTerms { terms, f_norm, ratio })
}

#[derive(Debug, Clone, Serialize)]
pub struct EndpointReport {
    pub m: usize,
    pub atoms: usize,
    pub max_ratio: f64,
    pub worst_atom: Option<usize>,
    /// `||Tf||_{RBMO two-sided} / ||f||`.
    pub twosided_ratio: f64,
    pub split_ok: bool,
    pub nested_fraction: f64,
    pub kadison_schwarz: KadisonSchwarzReport,
    pub size_constant: f64,
    pub column_constant: Option<f64>,
    pub row_constant: Option<f64>,
    pub hormander_sup: f64,
    pub worst_terms: Option<EndpointTerms>,
}

/// Block matrices above this size are not formed for the column constant.
pub const COLUMN_CONSTANT_LIMIT: usize = 1024;

/// The four-term split over every non-root atom, with the kernel diagnostics.
pub fn endpoint_report(mu: &PointMeasure, filt: &Filtration, k: &MatrixKernel, f: &MatrixField) -> Result<EndpointReport> {
    let f_norm = f.sup_norm();
    if f_norm == 0.0 {
        return Err(Error::Precondition("field has zero norm".into()));
    }
    let mut rows = Vec::new();
    for a in filt.atoms.iter().filter(|a| a.sigma_parent.is_some()) {
        rows.push(proof_terms(mu, filt, k, f, a.id)?);
    }
    let tf = k.apply(mu, f)?;
    let two = rbmo_sigma_norm_twosided(mu, filt, &tf)?;
    let mut worst: Option<&EndpointTerms> = None;
    for r in &rows {
        if worst.is_none_or(|w| r.lhs > w.lhs) {
            worst = Some(r);
        }
    }
    let nested: Vec<&EndpointTerms> = rows.iter().filter(|r| r.nested).collect();
    Ok(EndpointReport {
        m: k.m(),
        atoms: rows.len(),
        max_ratio: worst.map_or(0.0, |w| w.lhs / f_norm),
        worst_atom: worst.map(|w| w.atom),
        twosided_ratio: two.value / f_norm,
        split_ok: nested.iter().all(|r| r.lhs <= r.total * (1.0 + 1e-12) + 1e-300),
        nested_fraction: if rows.is_empty() { 1.0 } else { nested.len() as f64 / rows.len() as f64 },
        kadison_schwarz: kadison_schwarz_check(mu, filt, &tf)?,
        size_constant: k.size_constant(mu),
        column_constant: (mu.len() * k.m() <= COLUMN_CONSTANT_LIMIT).then(|| k.column_constant(mu)),
        row_constant: k.row_constant(mu),
        hormander_sup: k.hormander(mu, filt).sup,
        worst_terms: worst.cloned(),
    })
}

/// Unitary from a Householder reflection, for invariance checks.
pub fn householder(v: &[Complex64]) -> CMatrix {
    let m = v.len();
    let norm2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
    CMatrix::from_fn(m, m, |i, j| {
        let id = if i == j { Complex64::ONE } else { Complex64::ZERO };
        id - v[i] * v[j].conj() * (2.0 / norm2)
    })
}

/// Real matrix lifted to complex entries.
pub fn complexify(a: &DMatrix<f64>) -> CMatrix {
    a.map(|v| Complex64::new(v, 0.0))
}
