//! Martingale BMO and H1 norms on a filtration, Tolsa's RBMO norm, and the
//! diagnostics comparing them.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::filtration::Filtration;
use crate::measure::{within, PointMeasure, ScalarField};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Witness {
    None,
    Atom { id: usize },
    Ball { center: usize, radius: f64 },
    Pair { center1: usize, radius1: f64, center2: usize, radius2: f64 },
}

#[derive(Debug, Clone, Serialize)]
pub struct NormReport {
    pub variant: String,
    pub value: f64,
    pub witness: Witness,
    /// Tolsa norm components; zero for the other variants.
    pub star: f64,
    pub d: f64,
    pub exhaustive_pairs: bool,
}

impl NormReport {
    fn simple(variant: &str, value: f64, witness: Witness) -> Self {
        NormReport { variant: variant.into(), value, witness, star: 0.0, d: 0.0, exhaustive_pairs: true }
    }
}

fn check(mu: &PointMeasure, f: &Filtration, field: &ScalarField) -> Result<()> {
    if f.measure_id != mu.id() {
        return Err(Error::ForeignField);
    }
    field.check(mu)
}

/// Mean of `f` over the parent of atom `q`, or over the root for the root.
fn predecessor_mean(mu: &PointMeasure, f: &Filtration, values: &[f64], q: usize) -> f64 {
    f.atom_mean(mu, values, f.atoms[q].sigma_parent.unwrap_or(0))
}

/// `sup_Q (avg_Q |f - <f>_{Q^}|^p)^{1/p}` over every atom.
pub fn rbmo_sigma_norm(mu: &PointMeasure, f: &Filtration, field: &ScalarField, p: f64) -> Result<NormReport> {
    check(mu, f, field)?;
    if !(p >= 1.0) {
        return Err(Error::InvalidParams(format!("p = {p} must be at least 1")));
    }
    if p != 1.0 && p != 2.0 {
        log::warn!("RBMO_Sigma norm with p = {p} is experimental");
    }
    let v = field.values();
    let mut best = (0.0f64, Witness::None);
    for atom in &f.atoms {
        let m = predecessor_mean(mu, f, v, atom.id);
        let mass: f64 = atom.members.iter().map(|&x| mu.weight(x)).sum();
        let s: f64 = atom.members.iter().map(|&x| mu.weight(x) * (v[x] - m).abs().powf(p)).sum();
        let val = (s / mass).powf(1.0 / p);
        if val > best.0 {
            best = (val, Witness::Atom { id: atom.id });
        }
    }
    Ok(NormReport::simple(if p == 1.0 { "rbmo_sigma_p1" } else { "rbmo_sigma_p2" }, best.0, best.1))
}

/// Fenwick tree over value ranks holding weight and weight * value.
struct Fenwick {
    w: Vec<f64>,
    wv: Vec<f64>,
}

impl Fenwick {
    fn new(n: usize) -> Self {
        Fenwick { w: vec![0.0; n + 1], wv: vec![0.0; n + 1] }
    }

    fn add(&mut self, rank: usize, w: f64, v: f64) {
        let mut i = rank + 1;
        while i < self.w.len() {
            self.w[i] += w;
            self.wv[i] += w * v;
            i += i & i.wrapping_neg();
        }
    }

    /// Sums over ranks `< rank`.
    fn prefix(&self, rank: usize) -> (f64, f64) {
        let (mut a, mut b) = (0.0, 0.0);
        let mut i = rank;
        while i > 0 {
            a += self.w[i];
            b += self.wv[i];
            i -= i & i.wrapping_neg();
        }
        (a, b)
    }
}

/// One ball of the per-center family with its statistics.
#[derive(Debug, Clone, Copy)]
struct BallStat {
    center: usize,
    radius: f64,
    mass: f64,
    mean: f64,
    osc: f64,
    doubling: bool,
}

/// Radii for balls centred at `x`: half the nearest distance (the singleton
/// ball) followed by every distinct positive distance from `x`.
fn center_radii(mu: &PointMeasure, x: usize) -> Vec<(f64, usize)> {
    let nl = &mu.neighbors()[x];
    if nl.dist.len() == 1 {
        return vec![(1.0, 1)];
    }
    let mut out = vec![(nl.dist[1] / 2.0, 1)];
    let mut i = 1;
    while i < nl.dist.len() {
        let d = nl.dist[i];
        let mut j = i;
        while j < nl.dist.len() && within(nl.dist[j], d) {
            j += 1;
        }
        out.push((d, j));
        i = j;
    }
    out
}

fn ball_stats(mu: &PointMeasure, values: &[f64], beta: f64) -> Vec<BallStat> {
    let n = mu.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut rank = vec![0usize; n];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }
    let sorted: Vec<f64> = order.iter().map(|&i| values[i]).collect();
    (0..n)
        .into_par_iter()
        .flat_map_iter(|x| {
            let nl = &mu.neighbors()[x];
            let mut fw = Fenwick::new(n);
            let mut inserted = 0;
            let (mut tw, mut twv) = (0.0, 0.0);
            let mut out = Vec::new();
            for (r, count) in center_radii(mu, x) {
                while inserted < count {
                    let y = nl.index[inserted] as usize;
                    fw.add(rank[y], mu.weight(y), values[y]);
                    tw += mu.weight(y);
                    twv += mu.weight(y) * values[y];
                    inserted += 1;
                }
                let mean = twv / tw;
                let below = sorted.partition_point(|&v| v < mean);
                let (bw, bwv) = fw.prefix(below);
                let abs = mean * bw - bwv + (twv - bwv) - mean * (tw - bw);
                out.push(BallStat {
                    center: x,
                    radius: r,
                    mass: tw,
                    mean,
                    osc: abs.max(0.0) / tw,
                    doubling: nl.mass_within(2.0 * r) <= beta * tw,
                });
            }
            out
        })
        .collect()
}

/// Point-count limit for the exhaustive nested-pair search in `‖f‖_d`.
pub const TOLSA_EXHAUSTIVE_POINTS: usize = 96;

/// `1 + sum_{j<=N} mu(2^j B1) / (2^j r1)^n` with `N` from the farthest distance to cover.
fn k_from_reach(mu: &PointMeasure, c1: usize, r1: f64, reach: f64) -> f64 {
    let n = mu.growth_degree();
    let nl = &mu.neighbors()[c1];
    let mut k = 1.0;
    let mut r = r1;
    loop {
        k += nl.mass_within(r) / r.powf(n);
        if within(reach, r) {
            return k;
        }
        r *= 2.0;
    }
}

fn doubling_balls(mu: &PointMeasure, field: &ScalarField, beta: f64) -> Result<Vec<BallStat>> {
    field.check(mu)?;
    Ok(ball_stats(mu, field.values(), beta).into_iter().filter(|b| b.doubling).collect())
}

/// Sup of `|<f>_B1 - <f>_B2| / K_{B1,B2}` over nested doubling pairs, skipping
/// pairs that cannot beat `floor`. Values at or below `floor` are not exact.
fn pair_sup(mu: &PointMeasure, stats: &[BallStat], floor: f64, exhaustive: bool) -> (f64, Witness) {
    // Stats come grouped by center; `range[c]` is the slice for center `c`.
    let mut range = vec![(0usize, 0usize); mu.len()];
    let mut start = 0;
    while start < stats.len() {
        let c = stats[start].center;
        let mut end = start;
        while end < stats.len() && stats[end].center == c {
            end += 1;
        }
        range[c] = (start, end);
        start = end;
    }
    let pair_best = |i: usize, floor: f64, concentric_only: bool| -> (f64, Witness) {
        let b1 = &stats[i];
        // First term of K; K only grows with the reach.
        let k0 = 1.0 + b1.mass / b1.radius.powf(mu.growth_degree());
        let (lo, hi) = if concentric_only { range[b1.center] } else { (0, stats.len()) };
        let mut nested: Vec<(f64, usize)> = stats[lo..hi]
            .iter()
            .enumerate()
            .map(|(j, b2)| (j + lo, b2))
            .filter(|(_, b2)| {
                (b1.mean - b2.mean).abs() / k0 > floor
                    && (!concentric_only || b2.center == b1.center)
                    && b2.radius >= b1.radius
                    && within(mu.dist(b1.center, b2.center) + b1.radius, b2.radius)
            })
            .map(|(j, b2)| ((b1.mean - b2.mean).abs(), j))
            .collect();
        nested.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
        let mut best = (0.0f64, Witness::None);
        for (delta, j) in nested {
            if delta / k0 <= best.0.max(floor) {
                break;
            }
            let b2 = &stats[j];
            let reach = if b2.center == b1.center {
                b2.radius
            } else {
                mu.ball_members_at(b2.center, b2.radius)
                    .iter()
                    .map(|&y| mu.dist(b1.center, y as usize))
                    .fold(0.0, f64::max)
            };
            let val = delta / k_from_reach(mu, b1.center, b1.radius, reach);
            if val > best.0 {
                best = (val, Witness::Pair { center1: b1.center, radius1: b1.radius, center2: b2.center, radius2: b2.radius });
            }
        }
        best
    };
    let reduce = |a: (f64, Witness), b: (f64, Witness)| if b.0 > a.0 || (b.0 == a.0 && witness_key(&b) < witness_key(&a)) { b } else { a };
    let concentric = (0..stats.len())
        .into_par_iter()
        .map(|i| pair_best(i, floor, true))
        .reduce(|| (0.0, Witness::None), reduce);
    if !exhaustive {
        return concentric;
    }
    let floor = floor.max(concentric.0);
    let wider = (0..stats.len())
        .into_par_iter()
        .map(|i| pair_best(i, floor, false))
        .reduce(|| (0.0, Witness::None), reduce);
    reduce(concentric, wider)
}

fn witness_key(w: &(f64, Witness)) -> (usize, u64) {
    match w.1 {
        Witness::Pair { center1, radius1, .. } => (center1, radius1.to_bits()),
        _ => (usize::MAX, 0),
    }
}

/// `‖f‖_d` alone, searched without pruning against `‖f‖_*`.
pub fn rbmo_tolsa_d(mu: &PointMeasure, field: &ScalarField, beta: f64) -> Result<(f64, Witness)> {
    let stats = doubling_balls(mu, field, beta)?;
    Ok(pair_sup(mu, &stats, 0.0, mu.len() <= TOLSA_EXHAUSTIVE_POINTS))
}

/// `max(‖f‖_*, ‖f‖_d)` over `(2, beta)`-doubling balls centred on the support.
/// The reported `d` is exact only when it exceeds `star`; otherwise it is a lower bound.
pub fn rbmo_tolsa_norm(mu: &PointMeasure, field: &ScalarField, beta: f64) -> Result<NormReport> {
    let stats = doubling_balls(mu, field, beta)?;
    let mut star = (0.0f64, Witness::None);
    for b in &stats {
        if b.osc > star.0 {
            star = (b.osc, Witness::Ball { center: b.center, radius: b.radius });
        }
    }
    let exhaustive = mu.len() <= TOLSA_EXHAUSTIVE_POINTS;
    let d = pair_sup(mu, &stats, star.0, exhaustive);
    let (value, witness) = if d.0 > star.0 { d } else { star };
    Ok(NormReport { variant: "rbmo_tolsa".into(), value, witness, star: star.0, d: d.0, exhaustive_pairs: exhaustive })
}

/// Largest ratio of the martingale norm (p = 1) to Tolsa's norm over the fields.
pub fn inclusion_ratio(mu: &PointMeasure, f: &Filtration, fields: &[ScalarField], beta: f64) -> Result<f64> {
    let mut best: Option<f64> = None;
    for field in fields {
        let t = rbmo_tolsa_norm(mu, field, beta)?.value;
        if t <= 0.0 {
            continue;
        }
        let s = rbmo_sigma_norm(mu, f, field, 1.0)?.value;
        best = Some(best.map_or(s / t, |b: f64| b.max(s / t)));
    }
    best.ok_or(Error::AllConstant)
}

/// `∫ (sum_{k>=1} |D_k f|^2)^{1/2} dμ`.
pub fn h1_sigma_norm(mu: &PointMeasure, f: &Filtration, field: &ScalarField) -> Result<f64> {
    check(mu, f, field)?;
    let mut sq = vec![0.0; mu.len()];
    let mut prev = f.cond_exp(mu, field, 0)?;
    for k in 1..=f.depth() {
        let cur = f.cond_exp(mu, field, k)?;
        for ((s, a), b) in sq.iter_mut().zip(cur.values()).zip(prev.values()) {
            *s += (a - b) * (a - b);
        }
        prev = cur;
    }
    Ok(sq.iter().zip(mu.weights()).map(|(s, w)| w * s.sqrt()).sum())
}

#[derive(Debug, Clone)]
pub struct AtomicBlock {
    pub base_level: usize,
    pub coefficients: Vec<f64>,
    pub atoms: Vec<ScalarField>,
    /// Filtration atom ids of the supports `A_j`.
    pub supports: Vec<usize>,
    pub p: f64,
}

impl AtomicBlock {
    pub fn sum(&self, mu: &PointMeasure) -> ScalarField {
        let mut b = vec![0.0; mu.len()];
        for (l, a) in self.coefficients.iter().zip(&self.atoms) {
            for (x, v) in b.iter_mut().zip(a.values()) {
                *x += l * v;
            }
        }
        ScalarField::new(mu, b).expect("same measure")
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BlockCheck {
    pub valid: bool,
    pub value: f64,
    pub reason: Option<String>,
}

pub fn validate_atomic_block(mu: &PointMeasure, f: &Filtration, b: &AtomicBlock) -> Result<BlockCheck> {
    let value: f64 = b.coefficients.iter().map(|l| l.abs()).sum();
    let fail = |r: &str| Ok(BlockCheck { valid: false, value, reason: Some(r.into()) });
    if b.base_level > f.depth() {
        return Err(Error::InvalidLevel(b.base_level));
    }
    if b.coefficients.len() != b.atoms.len() || b.atoms.len() != b.supports.len() {
        return Err(Error::InvalidParams("block components have different lengths".into()));
    }
    if b.atoms.is_empty() {
        return Ok(BlockCheck { valid: true, value, reason: None });
    }
    let sum = b.sum(mu);
    let e = f.cond_exp(mu, &sum, b.base_level)?;
    let scale = b
        .coefficients
        .iter()
        .zip(&b.atoms)
        .map(|(l, a)| l.abs() * a.max_abs())
        .sum::<f64>()
        .max(f64::MIN_POSITIVE);
    if e.max_abs() > 1e-10 * scale {
        return fail("mean");
    }
    let pp = if b.p.is_infinite() { 1.0 } else { b.p / (b.p - 1.0) };
    for ((a, &s), l) in b.atoms.iter().zip(&b.supports).zip(&b.coefficients) {
        if *l == 0.0 {
            continue;
        }
        let atom = f.atoms.get(s).ok_or(Error::IndexOutOfRange(s))?;
        let mut inside = vec![false; mu.len()];
        for &m in &atom.members {
            inside[m] = true;
        }
        if a.values().iter().enumerate().any(|(x, &v)| v != 0.0 && !inside[x]) {
            return fail("support");
        }
        if atom.level > b.base_level && atom.level > f.depth() {
            return fail("level");
        }
        // A leaf atom stays in every deeper partition, so its level is the
        // larger of where it appears and the base level.
        let kj = if atom.is_leaf() { atom.level.max(b.base_level) } else { atom.level };
        if kj < b.base_level {
            return fail("level");
        }
        let mass: f64 = atom.members.iter().map(|&m| mu.weight(m)).sum();
        let norm = if b.p.is_infinite() { a.max_abs() } else { a.lp_norm(mu, b.p) };
        let bound = mass.powf(-1.0 / pp) / (kj - b.base_level + 1) as f64;
        if norm > bound * (1.0 + 1e-12) {
            return fail("size");
        }
    }
    Ok(BlockCheck { valid: true, value, reason: None })
}

/// `chi_S - mu(S)/mu(T) chi_T` for a child `S` of `T`, scaled to the size bound
/// with base level `base`.
pub fn elementary_atom(mu: &PointMeasure, f: &Filtration, s: usize, base: usize, p: f64) -> Result<ScalarField> {
    let t = f.atoms[s].sigma_parent.ok_or(Error::NoParent(s))?;
    let ms = mu.mass_of(&f.atoms[s].members);
    let mt = mu.mass_of(&f.atoms[t].members);
    let mut v = vec![0.0; mu.len()];
    for &x in &f.atoms[t].members {
        v[x] -= ms / mt;
    }
    for &x in &f.atoms[s].members {
        v[x] += 1.0;
    }
    let a = ScalarField::new(mu, v)?;
    let kj = f.atoms[t].level.max(base);
    let pp = if p.is_infinite() { 1.0 } else { p / (p - 1.0) };
    let bound = mt.powf(-1.0 / pp) / (kj - base + 1) as f64;
    let norm = if p.is_infinite() { a.max_abs() } else { a.lp_norm(mu, p) };
    Ok(a.map(|x| x * bound / norm))
}

/// Random valid block: elementary atoms inside one atom at the base level.
pub fn random_block<R: Rng>(mu: &PointMeasure, f: &Filtration, rng: &mut R, p: f64) -> Result<AtomicBlock> {
    let parents: Vec<usize> = f.atoms.iter().filter(|a| !a.is_leaf()).map(|a| a.id).collect();
    if parents.is_empty() {
        return Err(Error::Precondition("filtration has no non-leaf atom".into()));
    }
    let top = parents[rng.random_range(0..parents.len())];
    let base = f.atoms[top].level;
    let mut inner: Vec<usize> = Vec::new();
    let mut stack = vec![top];
    while let Some(a) = stack.pop() {
        if !f.atoms[a].is_leaf() {
            inner.push(a);
            stack.extend(&f.atoms[a].children);
        }
    }
    let count = rng.random_range(1..=3usize);
    let mut block = AtomicBlock { base_level: base, coefficients: vec![], atoms: vec![], supports: vec![], p };
    for _ in 0..count {
        let t = inner[rng.random_range(0..inner.len())];
        let kids = &f.atoms[t].children;
        let s = kids[rng.random_range(0..kids.len())];
        block.atoms.push(elementary_atom(mu, f, s, base, p)?);
        block.supports.push(t);
        block.coefficients.push(rng.random_range(-1.0..1.0));
    }
    Ok(block)
}

#[derive(Debug, Clone, Serialize)]
pub struct JnReport {
    pub norm: f64,
    pub rows: Vec<(f64, f64)>,
    pub rate: Option<f64>,
    pub degenerate: bool,
}

/// Level-set decay `sup_Q mu(Q ∩ {|f - <f>_{Q^}| > t ‖f‖}) / mu(Q)` over the `t` grid.
pub fn john_nirenberg_report(mu: &PointMeasure, f: &Filtration, field: &ScalarField, ts: &[f64]) -> Result<JnReport> {
    let norm = rbmo_sigma_norm(mu, f, field, 1.0)?.value;
    if norm <= 0.0 {
        return Err(Error::Precondition("field has zero RBMO_Sigma norm".into()));
    }
    let v = field.values();
    let per_atom: Vec<(f64, Vec<(f64, f64)>)> = f
        .atoms
        .iter()
        .map(|a| {
            let m = predecessor_mean(mu, f, v, a.id);
            let mass = mu.mass_of(&a.members);
            (mass, a.members.iter().map(|&x| ((v[x] - m).abs(), mu.weight(x))).collect())
        })
        .collect();
    let rows: Vec<(f64, f64)> = ts
        .iter()
        .map(|&t| {
            let level = t * norm;
            let sup = per_atom
                .iter()
                .map(|(mass, devs)| devs.iter().filter(|d| d.0 > level).map(|d| d.1).sum::<f64>() / mass)
                .fold(0.0, f64::max);
            (t, sup)
        })
        .collect();
    let pos: Vec<(f64, f64)> = rows.iter().filter(|r| r.1 > 0.0).map(|&(t, y)| (t, y.ln())).collect();
    let mut distinct: Vec<f64> = pos.iter().map(|p| p.1).collect();
    distinct.dedup();
    let degenerate = distinct.len() < 3;
    let rate = (!degenerate).then(|| {
        let n = pos.len() as f64;
        let mt = pos.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pos.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pos.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
        let sxx: f64 = pos.iter().map(|p| (p.0 - mt) * (p.0 - mt)).sum();
        -sxy / sxx
    });
    Ok(JnReport { norm, rows, rate, degenerate })
}

/// Largest `∫ f g / (‖f‖_{H1} ‖g‖_{RBMO, p=2})` over pairs with `f` of mean zero.
pub fn duality_constant(mu: &PointMeasure, f: &Filtration, pairs: &[(ScalarField, ScalarField)]) -> Result<f64> {
    let mut best = 0.0f64;
    for (a, g) in pairs {
        let mean = a.integral(mu) / mu.total_mass();
        let a = a.map(|x| x - mean);
        let h = h1_sigma_norm(mu, f, &a)?;
        let b = rbmo_sigma_norm(mu, f, g, 2.0)?.value;
        if h > 0.0 && b > 0.0 {
            best = best.max(a.zip_with(g, |x, y| x * y).integral(mu).abs() / (h * b));
        }
    }
    Ok(best)
}
