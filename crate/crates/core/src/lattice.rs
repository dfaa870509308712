//! Nested cube lattice built from 5R coverings of doubling balls.
//!
//! Generation `k` is built inside each cube of generation `k - 1`: every
//! member picks a radius in `[A^-k, beta A^-k]` (the smallest one making its
//! ball `(alpha, beta)`-doubling when there is one), the dilated balls
//! `5 B(x, r(x))` go through a greedy Vitali selection, and every member is
//! assigned to the selected center minimizing `|x - c| / r(c)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::{distance, within, PointMeasure};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Paper,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeParams {
    pub alpha: f64,
    pub ell: u32,
    /// Scale ratio between consecutive generations, `alpha^(ell m)`.
    pub a: f64,
    pub mode: Mode,
    /// Explicit generation range; `None` picks it from the measure.
    pub k_min: Option<i32>,
    pub k_max: Option<i32>,
}

/// Paper-scale `alpha = 2 * 28^2`.
pub const PAPER_ALPHA: f64 = 1568.0;

impl LatticeParams {
    /// Desk-scale constants: `alpha = 4`, `beta = 16`, `A = 16`.
    pub fn test() -> Self {
        LatticeParams { alpha: 4.0, ell: 2, a: 16.0, mode: Mode::Test, k_min: None, k_max: None }
    }

    /// `alpha = 2 * 28^2`, `beta = alpha^(d+1)` and the smallest `A = alpha^(ell m)` above `beta`.
    pub fn paper(dim: usize) -> Self {
        Self::with_auto_a(PAPER_ALPHA, dim as u32 + 1, Mode::Paper)
    }

    pub fn with_auto_a(alpha: f64, ell: u32, mode: Mode) -> Self {
        let beta = alpha.powi(ell as i32);
        let mut m = 1;
        while alpha.powi((ell * m) as i32) <= beta {
            m += 1;
        }
        LatticeParams { alpha, ell, a: alpha.powi((ell * m) as i32), mode, k_min: None, k_max: None }
    }

    pub fn beta(&self) -> f64 {
        self.alpha.powi(self.ell as i32)
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if !(self.alpha > 1.0) {
            return bad(format!("alpha = {} must exceed 1", self.alpha));
        }
        if self.ell == 0 {
            return bad("ell must be at least 1".into());
        }
        let exponent = self.a.ln() / (self.alpha.ln() * self.ell as f64);
        if !(exponent >= 1.0 - 1e-9) || (exponent - exponent.round()).abs() > 1e-9 {
            return bad(format!("A = {} is not of the form alpha^(ell m), m >= 1", self.a));
        }
        if self.mode == Mode::Paper {
            if self.alpha < 100.0 {
                return bad(format!("paper mode needs alpha >= 100, got {}", self.alpha));
            }
            if self.ell as usize != dim + 1 {
                return bad(format!("paper mode needs beta = alpha^(d+1), got ell = {}", self.ell));
            }
            if !(self.a > self.beta()) {
                return bad("paper mode needs A > beta".into());
            }
        }
        if let (Some(lo), Some(hi)) = (self.k_min, self.k_max) {
            if lo > hi {
                return bad(format!("k_min = {lo} exceeds k_max = {hi}"));
            }
        }
        Ok(())
    }

    /// Lower end `alpha^i A^-k` of the admissible radius window (`i = 0`).
    pub fn base_radius(&self, k: i32) -> f64 {
        self.a.powi(-k)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cube {
    pub id: usize,
    pub generation: i32,
    pub center_index: usize,
    pub radius: f64,
    pub member_indices: Vec<usize>,
    pub parent_id: Option<usize>,
    #[serde(default)]
    pub children: Vec<usize>,
    pub is_db_doubling: bool,
}

impl Cube {
    pub fn len(&self) -> usize {
        self.member_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.member_indices.is_empty()
    }

    pub fn is_singleton(&self) -> bool {
        self.member_indices.len() == 1
    }
}

/// Greedy 5R covering. Candidates are `(center_index, radius)`; the forced
/// candidate, if any, is selected first. Returns positions into `candidates`
/// of the selected, pairwise disjoint balls.
pub fn five_r_cover(mu: &PointMeasure, candidates: &[(usize, f64)], forced: Option<usize>) -> Result<Vec<usize>> {
    if candidates.is_empty() {
        return Ok(Vec::new());
    }
    let max_r = candidates.iter().fold(0.0f64, |m, c| m.max(c.1));
    if let Some(f) = forced {
        let r = candidates.get(f).ok_or(Error::IndexOutOfRange(f))?.1;
        if r < 0.5 * max_r {
            return Err(Error::ForcedTooSmall { forced: r, max: max_r });
        }
    }
    let mut order: Vec<usize> = (0..candidates.len()).filter(|&i| Some(i) != forced).collect();
    order.sort_by(|&i, &j| {
        candidates[j].1.total_cmp(&candidates[i].1).then(candidates[i].0.cmp(&candidates[j].0))
    });
    let mut selected: Vec<usize> = Vec::new();
    for i in forced.into_iter().chain(order) {
        let (ci, ri) = candidates[i];
        let clear = selected.iter().all(|&j| {
            let (cj, rj) = candidates[j];
            balls_disjoint(mu.dist(ci, cj), ri, rj)
        });
        if clear {
            selected.push(i);
        }
    }
    Ok(selected)
}

#[inline]
pub fn balls_disjoint(center_dist: f64, r1: f64, r2: f64) -> bool {
    !within(center_dist, r1 + r2)
}

/// Radius in `[A^-k, beta A^-k]` for the ball around support point `x`:
/// the smallest admissible radius making the ball `(alpha, beta)`-doubling,
/// or `A^-k` when none does. The flag reports which case occurred.
pub fn choose_radius(mu: &PointMeasure, x: usize, k: i32, params: &LatticeParams) -> (f64, bool) {
    let lo = params.base_radius(k);
    let hi = params.beta() * lo;
    let (alpha, beta) = (params.alpha, params.beta());
    if mu.is_doubling_at(x, lo, alpha, beta) {
        return (lo, true);
    }
    let nl = &mu.neighbors()[x];
    // Breakpoints in (lo, hi]: distances d, and d / alpha.
    let mut cands: Vec<f64> = Vec::new();
    let a0 = nl.dist.partition_point(|&d| d <= lo);
    let a1 = nl.dist.partition_point(|&d| d <= hi);
    cands.extend_from_slice(&nl.dist[a0..a1]);
    let b0 = nl.dist.partition_point(|&d| d / alpha <= lo);
    let b1 = nl.dist.partition_point(|&d| d / alpha <= hi);
    cands.extend(nl.dist[b0..b1].iter().map(|d| d / alpha));
    cands.sort_by(f64::total_cmp);
    cands.dedup();
    for r in cands {
        if mu.is_doubling_at(x, r, alpha, beta) {
            return (r, true);
        }
    }
    (lo, false)
}

/// Outcome of the checks run on a finished lattice.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct LatticeReport {
    pub partition_ok: bool,
    pub nesting_ok: bool,
    pub disjointness_ok: bool,
    pub radius_sandwich_ok: bool,
    /// Fraction of cubes with `B_Q ∩ supp ⊂ Q` and `Q ⊂ 28 B_Q`.
    pub containment_fraction: f64,
    pub ball_in_cube_fraction: f64,
    pub cube_in_ball_fraction: f64,
    pub doubling_fraction: f64,
    pub failures: Vec<String>,
    pub log: Vec<String>,
}

impl LatticeReport {
    pub fn asserted_ok(&self) -> bool {
        self.partition_ok && self.nesting_ok && self.disjointness_ok && self.radius_sandwich_ok
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Lattice {
    pub measure_id: u64,
    pub params: LatticeParams,
    pub k_min: i32,
    pub k_max: i32,
    /// Designated point forced into the covering when admissible.
    pub designated: usize,
    pub cubes: Vec<Cube>,
    /// `generations[g]` lists cube ids of generation `k_min + g`.
    pub generations: Vec<Vec<usize>>,
    #[serde(skip)]
    point_cube: Vec<Vec<u32>>,
    pub report: LatticeReport,
}

/// Point with the largest mass within the median pairwise distance.
pub fn designated_point(mu: &PointMeasure) -> usize {
    let Some(r) = mu.median_pairwise_distance() else { return 0 };
    let mut best = (0, f64::NEG_INFINITY);
    for i in 0..mu.len() {
        let m = mu.ball_mass_at(i, r);
        if m > best.1 {
            best = (i, m);
        }
    }
    best.0
}

const MAX_GENERATIONS: usize = 256;

struct Built {
    cubes: Vec<(usize, f64, Vec<usize>, bool)>,
    log: Vec<String>,
}

/// Splits one parent cell into the cubes of generation `k`.
fn split_parent(mu: &PointMeasure, members: &[usize], in_parent: &[bool], k: i32, params: &LatticeParams, x0: usize) -> Result<Built> {
    let mut log = Vec::new();
    let lo = params.base_radius(k);
    let special = 0.875 * params.beta() * lo;
    let mut radius = Vec::with_capacity(members.len());
    let mut x0_special = false;
    for &x in members {
        if x == x0 && mu.is_doubling_at(x, special, params.alpha, params.beta()) {
            radius.push((special, true));
            x0_special = true;
        } else {
            radius.push(choose_radius(mu, x, k, params));
        }
    }
    let interior: Vec<bool> = members
        .iter()
        .zip(&radius)
        .map(|(&x, &(r, _))| mu.ball_members_at(x, r).iter().all(|&j| in_parent[j as usize]))
        .collect();
    let mut selectable: Vec<usize> = (0..members.len()).filter(|&p| interior[p]).collect();
    if selectable.is_empty() {
        log.push(format!("gen {k}: no interior candidate in cell of {} points; using all", members.len()));
        selectable = (0..members.len()).collect();
    }
    let candidates: Vec<(usize, f64)> = selectable.iter().map(|&p| (members[p], 5.0 * radius[p].0)).collect();
    let max_r = candidates.iter().fold(0.0f64, |m, c| m.max(c.1));
    let forced = match candidates.iter().position(|c| c.0 == x0) {
        Some(pos) if candidates[pos].1 >= 0.5 * max_r => Some(pos),
        Some(_) => {
            log.push(format!("gen {k}: designated ball below half the largest radius; not forced"));
            None
        }
        None => None,
    };
    if x0_special && forced.is_none() && members.contains(&x0) {
        log.push(format!("gen {k}: designated point not selectable"));
    }
    let selected = five_r_cover(mu, &candidates, forced)?;
    let centers: Vec<(usize, f64, bool)> = selected
        .iter()
        .map(|&s| {
            let p = selectable[s];
            (members[p], radius[p].0, radius[p].1)
        })
        .collect();
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); centers.len()];
    for &x in members {
        let mut best = (0usize, f64::INFINITY, usize::MAX);
        for (c, &(ci, r, _)) in centers.iter().enumerate() {
            let score = mu.dist(x, ci) / r;
            if score < best.1 || (score == best.1 && ci < best.2) {
                best = (c, score, ci);
            }
        }
        groups[best.0].push(x);
    }
    let cubes = centers
        .into_iter()
        .zip(groups)
        .filter(|(_, g)| !g.is_empty())
        .map(|((c, r, dbl), g)| (c, r, g, dbl))
        .collect();
    Ok(Built { cubes, log })
}

fn generation_bounds(mu: &PointMeasure, params: &LatticeParams) -> (i32, i32) {
    let beta = params.beta();
    let la = params.a.ln();
    match mu.min_distance() {
        None => (0, 0),
        Some(dmin) => {
            let diam = mu.diameter();
            let k_min = ((beta / diam).ln() / la).floor() as i32;
            let k_max = ((beta / dmin).ln() / la).floor() as i32 + 1;
            (k_min, k_max.max(k_min))
        }
    }
}

pub fn build_lattice(mu: &PointMeasure, params: &LatticeParams) -> Result<Lattice> {
    params.validate(mu.dim())?;
    let n = mu.len();
    let x0 = designated_point(mu);
    let (auto_min, auto_max) = generation_bounds(mu, params);
    let mut log = Vec::new();
    let all: Vec<usize> = (0..n).collect();
    let everyone = vec![true; n];

    // Root generation: coarsen until a single doubling cube covers the support.
    let mut k_min = params.k_min.unwrap_or(auto_min);
    let root = loop {
        let built = split_parent(mu, &all, &everyone, k_min, params, x0)?;
        if built.cubes.len() == 1 && built.cubes[0].3 {
            break built.cubes.into_iter().next().unwrap();
        }
        if params.k_min.is_some() {
            // An explicit range is honoured; the root must still be one cell.
            if built.cubes.len() == 1 {
                break built.cubes.into_iter().next().unwrap();
            }
            return Err(Error::InvalidParams(format!("generation {k_min} is not a single cube")));
        }
        log.push(format!("gen {k_min}: not a single doubling cube, coarsening"));
        k_min -= 1;
        if auto_min - k_min > MAX_GENERATIONS as i32 {
            return Err(Error::InvalidParams("could not find a single root cube".into()));
        }
    };

    let mut cubes = vec![Cube {
        id: 0,
        generation: k_min,
        center_index: root.0,
        radius: root.1,
        member_indices: root.2,
        parent_id: None,
        children: Vec::new(),
        is_db_doubling: root.3,
    }];
    let mut generations = vec![vec![0usize]];
    let mut k = k_min;
    let mut in_parent = vec![false; n];
    loop {
        let last = generations.last().unwrap();
        let finished = match params.k_max {
            Some(kmax) => k >= kmax,
            None => {
                k >= auto_max
                    && last.iter().all(|&c| cubes[c].is_singleton() && cubes[c].is_db_doubling)
            }
        };
        if finished {
            break;
        }
        if generations.len() > MAX_GENERATIONS {
            return Err(Error::InvalidParams("generation cap exceeded".into()));
        }
        k += 1;
        let parents = last.clone();
        let mut next = Vec::new();
        for p in parents {
            let members = cubes[p].member_indices.clone();
            for &m in &members {
                in_parent[m] = true;
            }
            let built = split_parent(mu, &members, &in_parent, k, params, x0)?;
            for &m in &members {
                in_parent[m] = false;
            }
            log.extend(built.log);
            for (c, r, g, dbl) in built.cubes {
                let id = cubes.len();
                cubes.push(Cube {
                    id,
                    generation: k,
                    center_index: c,
                    radius: r,
                    member_indices: g,
                    parent_id: Some(p),
                    children: Vec::new(),
                    is_db_doubling: dbl,
                });
                cubes[p].children.push(id);
                next.push(id);
            }
        }
        generations.push(next);
    }
    let mut lattice = Lattice {
        measure_id: mu.id(),
        params: params.clone(),
        k_min,
        k_max: k,
        designated: x0,
        cubes,
        generations,
        point_cube: Vec::new(),
        report: LatticeReport::default(),
    };
    lattice.index_points();
    lattice.report = lattice.verify(mu);
    lattice.report.log = log;
    Ok(lattice)
}

impl Lattice {
    /// Assembles a lattice from explicit cubes (ids must equal positions).
    /// Doubling flags are taken as given.
    pub fn from_cubes(mu: &PointMeasure, params: LatticeParams, mut cubes: Vec<Cube>) -> Result<Lattice> {
        if cubes.is_empty() {
            return Err(Error::InvalidParams("no cubes".into()));
        }
        for (i, c) in cubes.iter_mut().enumerate() {
            if c.id != i {
                return Err(Error::InvalidParams(format!("cube id {} at position {i}", c.id)));
            }
            c.children.clear();
        }
        let k_min = cubes.iter().map(|c| c.generation).min().unwrap();
        let k_max = cubes.iter().map(|c| c.generation).max().unwrap();
        let mut generations = vec![Vec::new(); (k_max - k_min + 1) as usize];
        for i in 0..cubes.len() {
            generations[(cubes[i].generation - k_min) as usize].push(i);
            if let Some(p) = cubes[i].parent_id {
                if p >= cubes.len() {
                    return Err(Error::IndexOutOfRange(p));
                }
                cubes[p].children.push(i);
            }
        }
        let mut lattice = Lattice {
            measure_id: mu.id(),
            params,
            k_min,
            k_max,
            designated: designated_point(mu),
            cubes,
            generations,
            point_cube: Vec::new(),
            report: LatticeReport::default(),
        };
        lattice.index_points();
        lattice.report = lattice.verify(mu);
        if !(lattice.report.partition_ok && lattice.report.nesting_ok) {
            return Err(Error::InvalidParams(format!("cubes do not form a lattice: {:?}", lattice.report.failures)));
        }
        Ok(lattice)
    }

    fn index_points(&mut self) {
        let n = self.cubes.iter().map(|c| c.member_indices.iter().max().copied().unwrap_or(0)).max().unwrap_or(0) + 1;
        self.point_cube = self
            .generations
            .iter()
            .map(|gen| {
                let mut v = vec![u32::MAX; n];
                for &c in gen {
                    for &m in &self.cubes[c].member_indices {
                        v[m] = c as u32;
                    }
                }
                v
            })
            .collect();
    }

    pub fn root(&self) -> &Cube {
        &self.cubes[self.generations[0][0]]
    }

    pub fn cube(&self, id: usize) -> &Cube {
        &self.cubes[id]
    }

    pub fn generation(&self, k: i32) -> &[usize] {
        &self.generations[(k - self.k_min) as usize]
    }

    /// Cube of generation `k` containing support point `x`.
    pub fn cube_containing(&self, k: i32, x: usize) -> usize {
        self.point_cube[(k - self.k_min) as usize][x] as usize
    }

    /// Ancestor chain of `x`, coarsest first.
    pub fn chain(&self, x: usize) -> impl Iterator<Item = usize> + '_ {
        self.point_cube.iter().map(move |g| g[x] as usize)
    }

    pub fn ancestors(&self, id: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut cur = self.cubes[id].parent_id;
        while let Some(p) = cur {
            out.push(p);
            cur = self.cubes[p].parent_id;
        }
        out
    }

    pub fn verify(&self, mu: &PointMeasure) -> LatticeReport {
        let n = mu.len();
        let p = &self.params;
        let mut rep = LatticeReport {
            partition_ok: true,
            nesting_ok: true,
            disjointness_ok: true,
            radius_sandwich_ok: true,
            ..Default::default()
        };
        for (g, gen) in self.generations.iter().enumerate() {
            let k = self.k_min + g as i32;
            let mut seen = vec![0u32; n];
            for &c in gen {
                let cube = &self.cubes[c];
                if cube.member_indices.is_empty() {
                    rep.partition_ok = false;
                    rep.failures.push(format!("cube {c}: empty"));
                }
                for &m in &cube.member_indices {
                    seen[m] += 1;
                }
            }
            if let Some(x) = seen.iter().position(|&s| s != 1) {
                rep.partition_ok = false;
                rep.failures.push(format!("gen {k}: point {x} covered {} times", seen[x]));
            }
            for &c in gen {
                let cube = &self.cubes[c];
                let lo = p.base_radius(k);
                let hi = p.beta() * lo;
                if cube.radius < lo * (1.0 - 1e-12) || cube.radius > hi * (1.0 + 1e-12) {
                    rep.radius_sandwich_ok = false;
                    rep.failures.push(format!("cube {c}: radius {} outside [{lo}, {hi}]", cube.radius));
                }
            }
        }
        for cube in &self.cubes {
            if let Some(pid) = cube.parent_id {
                let parent = &self.cubes[pid];
                let ok = parent.generation + 1 == cube.generation
                    && cube.member_indices.iter().all(|m| parent.member_indices.contains(m));
                if !ok {
                    rep.nesting_ok = false;
                    rep.failures.push(format!("cube {}: not nested in parent {pid}", cube.id));
                }
            } else if cube.generation != self.k_min {
                rep.nesting_ok = false;
                rep.failures.push(format!("cube {}: orphan below the root generation", cube.id));
            }
        }
        // 5B disjointness among siblings.
        for parent in &self.cubes {
            let ch = &parent.children;
            for (a, &i) in ch.iter().enumerate() {
                for &j in &ch[a + 1..] {
                    let (ci, cj) = (&self.cubes[i], &self.cubes[j]);
                    if !balls_disjoint(mu.dist(ci.center_index, cj.center_index), 5.0 * ci.radius, 5.0 * cj.radius) {
                        rep.disjointness_ok = false;
                        rep.failures.push(format!("cubes {i}, {j}: 5B balls intersect"));
                    }
                }
            }
        }
        let (mut ball_in, mut in_ball, mut both, mut dbl) = (0usize, 0usize, 0usize, 0usize);
        let mut mark = vec![false; n];
        for cube in &self.cubes {
            for &m in &cube.member_indices {
                mark[m] = true;
            }
            let b_in = mu.ball_members_at(cube.center_index, cube.radius).iter().all(|&j| mark[j as usize]);
            let c_in = cube
                .member_indices
                .iter()
                .all(|&m| within(mu.dist(m, cube.center_index), 28.0 * cube.radius));
            for &m in &cube.member_indices {
                mark[m] = false;
            }
            ball_in += b_in as usize;
            in_ball += c_in as usize;
            both += (b_in && c_in) as usize;
            dbl += cube.is_db_doubling as usize;
        }
        let total = self.cubes.len() as f64;
        rep.ball_in_cube_fraction = ball_in as f64 / total;
        rep.cube_in_ball_fraction = in_ball as f64 / total;
        rep.containment_fraction = both as f64 / total;
        rep.doubling_fraction = dbl as f64 / total;
        rep
    }

    pub fn to_json(&self) -> serde_json::Value {
        let gens: Vec<serde_json::Value> = self
            .generations
            .iter()
            .enumerate()
            .map(|(g, ids)| {
                serde_json::json!({
                    "generation": self.k_min + g as i32,
                    "cubes": ids.iter().map(|&c| {
                        let q = &self.cubes[c];
                        serde_json::json!({
                            "id": q.id,
                            "generation": q.generation,
                            "center_index": q.center_index,
                            "radius": q.radius,
                            "member_indices": q.member_indices,
                            "parent_id": q.parent_id,
                            "flags": { "is_db_doubling": q.is_db_doubling },
                        })
                    }).collect::<Vec<_>>(),
                })
            })
            .collect();
        serde_json::json!({
            "measure_id": format!("{:016x}", self.measure_id),
            "params": self.params,
            "beta": self.params.beta(),
            "k_min": self.k_min,
            "k_max": self.k_max,
            "designated": self.designated,
            "generations": gens,
            "report": self.report,
        })
    }

    pub fn from_json(mu: &PointMeasure, value: &serde_json::Value) -> Result<Lattice> {
        let params: LatticeParams =
            serde_json::from_value(value["params"].clone()).map_err(|e| Error::Parse(e.to_string()))?;
        let mut cubes = Vec::new();
        for gen in value["generations"].as_array().ok_or_else(|| Error::Parse("generations".into()))? {
            for c in gen["cubes"].as_array().ok_or_else(|| Error::Parse("cubes".into()))? {
                let get = |k: &str| c.get(k).ok_or_else(|| Error::Parse(format!("cube field {k}")));
                let members: Vec<usize> =
                    serde_json::from_value(get("member_indices")?.clone()).map_err(|e| Error::Parse(e.to_string()))?;
                cubes.push(Cube {
                    id: get("id")?.as_u64().ok_or_else(|| Error::Parse("id".into()))? as usize,
                    generation: get("generation")?.as_i64().ok_or_else(|| Error::Parse("generation".into()))? as i32,
                    center_index: get("center_index")?.as_u64().ok_or_else(|| Error::Parse("center".into()))? as usize,
                    radius: get("radius")?.as_f64().ok_or_else(|| Error::Parse("radius".into()))?,
                    member_indices: members,
                    parent_id: get("parent_id")?.as_u64().map(|v| v as usize),
                    children: Vec::new(),
                    is_db_doubling: c["flags"]["is_db_doubling"].as_bool().unwrap_or(false),
                });
            }
        }
        cubes.sort_by_key(|c| c.id);
        let mut l = Lattice::from_cubes(mu, params, cubes)?;
        if let Some(d) = value["designated"].as_u64() {
            l.designated = d as usize;
        }
        Ok(l)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundaryReport {
    pub ext_mass: f64,
    pub int_mass: f64,
    pub bound: f64,
    pub within_bound: bool,
}

/// Masses of the outer and inner collars of width `A^(-k-i)` around `Q`
/// against `(c_d beta^(-3d-1) A)^(-i) mu(90 B_Q)`, with `c_d = 1`.
pub fn boundary_report(mu: &PointMeasure, lattice: &Lattice, q: usize, i: u32) -> Result<BoundaryReport> {
    if i == 0 {
        return Err(Error::InvalidParams("collar index must be at least 1".into()));
    }
    let cube = lattice.cube(q);
    let width = lattice.params.a.powi(-cube.generation - i as i32);
    let mut inside = vec![false; mu.len()];
    for &m in &cube.member_indices {
        inside[m] = true;
    }
    let outside: Vec<usize> = (0..mu.len()).filter(|&x| !inside[x]).collect();
    let near = |x: usize, set: &[usize]| set.iter().any(|&y| distance(mu.point(x), mu.point(y)) < width);
    let ext_mass = outside.iter().filter(|&&x| near(x, &cube.member_indices)).map(|&x| mu.weight(x)).sum();
    let int_mass = cube.member_indices.iter().filter(|&&x| near(x, &outside)).map(|&x| mu.weight(x)).sum();
    let d = mu.dim() as i32;
    let factor = lattice.params.beta().powi(-3 * d - 1) * lattice.params.a;
    let bound = factor.powi(-(i as i32)) * mu.ball_mass_at(cube.center_index, 90.0 * cube.radius);
    Ok(BoundaryReport { ext_mass, int_mass, bound, within_bound: ext_mass + int_mass <= bound })
}
