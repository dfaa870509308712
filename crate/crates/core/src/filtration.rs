//! The filtration of doubling cubes extracted from a [`Lattice`].
//!
//! Atoms at level 0 are the root cube. The children of an atom are the
//! maximal doubling cubes strictly inside it; points not reached by any such
//! cube become singleton atoms. Atoms without children persist unchanged to
//! every deeper level, so each level is a partition of the support.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{Lattice, Mode};
use crate::measure::{within, Ball, PointMeasure, ScalarField};

#[derive(Debug, Clone, Serialize)]
pub struct Atom {
    pub id: usize,
    /// Lattice cube this atom comes from; `None` for a synthetic singleton.
    pub cube: Option<usize>,
    pub generation: i32,
    pub level: usize,
    pub center_index: usize,
    pub radius: f64,
    pub members: Vec<usize>,
    pub sigma_parent: Option<usize>,
    pub children: Vec<usize>,
    pub doubling: bool,
}

impl Atom {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    pub fn ball(&self, mu: &PointMeasure) -> Ball {
        mu.ball_at(self.center_index, self.radius)
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct GenerationGap {
    pub atom: usize,
    pub ancestor: usize,
    pub gap: i32,
}

#[derive(Debug, Clone, Serialize)]
pub struct ChainEntry {
    pub child: usize,
    pub parent: usize,
    pub cube: usize,
    pub generation: i32,
    pub mass: f64,
    pub bound: f64,
    pub holds: bool,
}

#[derive(Debug, Clone)]
pub struct Filtration {
    pub lattice_id: u64,
    pub measure_id: u64,
    pub alpha: f64,
    pub beta: f64,
    pub a: f64,
    pub mode: Mode,
    pub atoms: Vec<Atom>,
    /// `levels[k]` lists the atoms partitioning the support at level `k`.
    pub levels: Vec<Vec<usize>>,
    point_atom: Vec<Vec<u32>>,
    pub gaps: Vec<GenerationGap>,
    pub chains: Vec<ChainEntry>,
    pub orphans: usize,
}

fn lattice_fingerprint(l: &Lattice) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325 ^ l.measure_id;
    for c in &l.cubes {
        for v in [c.generation as u64, c.center_index as u64, c.radius.to_bits(), c.member_indices.len() as u64] {
            h = (h ^ v).wrapping_mul(0x100000001b3);
        }
    }
    h
}

/// Maximal doubling cubes strictly smaller than `members`, searched below `cube`.
fn maximal_doubling_below(l: &Lattice, cube: usize, size: usize, out: &mut Vec<usize>) {
    for &c in &l.cube(cube).children {
        let child = l.cube(c);
        if child.len() < size && child.is_db_doubling {
            out.push(c);
        } else {
            maximal_doubling_below(l, c, size, out);
        }
    }
}

pub fn build_filtration(mu: &PointMeasure, l: &Lattice) -> Result<Filtration> {
    if l.measure_id != mu.id() {
        return Err(Error::ForeignField);
    }
    let root_cube = l.root();
    if !root_cube.is_db_doubling {
        return Err(Error::NonDoublingRoot);
    }
    let p = &l.params;
    let (alpha, beta) = (p.alpha, p.beta());
    let mut atoms = vec![Atom {
        id: 0,
        cube: Some(root_cube.id),
        generation: root_cube.generation,
        level: 0,
        center_index: root_cube.center_index,
        radius: root_cube.radius,
        members: root_cube.member_indices.clone(),
        sigma_parent: None,
        children: Vec::new(),
        doubling: true,
    }];
    let mut gaps = Vec::new();
    let mut chains = Vec::new();
    let mut orphans = 0;
    let mut covered = vec![false; mu.len()];
    let mut next = 0;
    while next < atoms.len() {
        let q = next;
        next += 1;
        let Some(cube) = atoms[q].cube else { continue };
        if atoms[q].members.len() == 1 {
            continue;
        }
        let mut found = Vec::new();
        maximal_doubling_below(l, cube, atoms[q].members.len(), &mut found);
        let level = atoms[q].level + 1;
        let mut kids = Vec::new();
        for c in found {
            let src = l.cube(c);
            for &m in &src.member_indices {
                covered[m] = true;
            }
            let id = atoms.len();
            atoms.push(Atom {
                id,
                cube: Some(c),
                generation: src.generation,
                level,
                center_index: src.center_index,
                radius: src.radius,
                members: src.member_indices.clone(),
                sigma_parent: Some(q),
                children: Vec::new(),
                doubling: true,
            });
            gaps.push(GenerationGap { atom: id, ancestor: q, gap: src.generation - atoms[q].generation });
            // Non-doubling (or same-set) cubes strictly between parent and child.
            let parent_mass = mu.ball_mass_at(atoms[q].center_index, alpha * atoms[q].radius);
            let n = mu.growth_degree();
            let mut t = src.parent_id;
            while let Some(tc) = t {
                if tc == cube {
                    break;
                }
                let tcube = l.cube(tc);
                let mass = mu.ball_mass_at(tcube.center_index, alpha * tcube.radius);
                let exp = -10.0 * n * (tcube.generation - atoms[q].generation - 1) as f64;
                let bound = p.a.powf(exp) * parent_mass;
                chains.push(ChainEntry {
                    child: id,
                    parent: q,
                    cube: tc,
                    generation: tcube.generation,
                    mass,
                    bound,
                    holds: mass <= bound * (1.0 + 1e-12),
                });
                t = tcube.parent_id;
            }
            kids.push(id);
        }
        let members = atoms[q].members.clone();
        for &x in &members {
            if covered[x] {
                covered[x] = false;
                continue;
            }
            orphans += 1;
            let radius = match mu.neighbors()[x].dist.get(1) {
                Some(d) => d / (2.0 * alpha),
                None => 1.0,
            };
            let id = atoms.len();
            atoms.push(Atom {
                id,
                cube: None,
                generation: l.k_max + 1,
                level,
                center_index: x,
                radius,
                members: vec![x],
                sigma_parent: Some(q),
                children: Vec::new(),
                doubling: mu.is_doubling_at(x, radius, alpha, beta),
            });
            gaps.push(GenerationGap { atom: id, ancestor: q, gap: l.k_max + 1 - atoms[q].generation });
            kids.push(id);
        }
        atoms[q].children = kids;
    }

    let mut levels = vec![vec![0usize]];
    loop {
        let last = levels.last().unwrap();
        if last.iter().all(|&a| atoms[a].is_leaf()) {
            break;
        }
        let next_level: Vec<usize> = last
            .iter()
            .flat_map(|&a| if atoms[a].is_leaf() { vec![a] } else { atoms[a].children.clone() })
            .collect();
        levels.push(next_level);
    }
    let point_atom = levels
        .iter()
        .map(|lv| {
            let mut v = vec![u32::MAX; mu.len()];
            for &a in lv {
                for &m in &atoms[a].members {
                    v[m] = a as u32;
                }
            }
            v
        })
        .collect();
    Ok(Filtration {
        lattice_id: lattice_fingerprint(l),
        measure_id: mu.id(),
        alpha,
        beta,
        a: p.a,
        mode: p.mode,
        atoms,
        levels,
        point_atom,
        gaps,
        chains,
        orphans,
    })
}

impl Filtration {
    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn atom(&self, id: usize) -> &Atom {
        &self.atoms[id]
    }

    pub fn root(&self) -> &Atom {
        &self.atoms[0]
    }

    /// Atom of `Π(Σ_k)` containing `x`.
    pub fn atom_at(&self, k: usize, x: usize) -> usize {
        self.point_atom[k.min(self.depth())][x] as usize
    }

    /// Distinct atoms containing `x`, coarsest first.
    pub fn chain(&self, x: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self.point_atom.iter().map(|v| v[x] as usize).collect();
        out.dedup();
        out
    }

    fn check(&self, mu: &PointMeasure, f: &ScalarField, k: usize) -> Result<()> {
        if mu.id() != self.measure_id {
            return Err(Error::ForeignField);
        }
        f.check(mu)?;
        if k > self.depth() {
            return Err(Error::InvalidLevel(k));
        }
        Ok(())
    }

    pub fn atom_mean(&self, mu: &PointMeasure, values: &[f64], atom: usize) -> f64 {
        let members = &self.atoms[atom].members;
        let mass: f64 = members.iter().map(|&m| mu.weight(m)).sum();
        members.iter().map(|&m| mu.weight(m) * values[m]).sum::<f64>() / mass
    }

    pub fn cond_exp(&self, mu: &PointMeasure, f: &ScalarField, k: usize) -> Result<ScalarField> {
        self.check(mu, f, k)?;
        let mut out = vec![0.0; mu.len()];
        for &a in &self.levels[k] {
            let avg = self.atom_mean(mu, f.values(), a);
            for &m in &self.atoms[a].members {
                out[m] = avg;
            }
        }
        Ok(f.with_values(out))
    }

    /// `E_k f - E_{k-1} f`; at `k = 0` this is `E_0 f`.
    pub fn mart_diff(&self, mu: &PointMeasure, f: &ScalarField, k: usize) -> Result<ScalarField> {
        let e = self.cond_exp(mu, f, k)?;
        if k == 0 {
            return Ok(e);
        }
        let prev = self.cond_exp(mu, f, k - 1)?;
        Ok(e.zip_with(&prev, |a, b| a - b))
    }

    /// `sum w_y / |x - y|^n` over `y` in `alpha B_R` but outside `56 B_Q`, `R` the parent of `Q`.
    pub fn property_iv_integral(&self, mu: &PointMeasure, q: usize, x: usize) -> Result<f64> {
        let atom = &self.atoms[q];
        let r = atom.sigma_parent.ok_or(Error::NoParent(q))?;
        let parent = &self.atoms[r];
        let n = mu.growth_degree();
        let mut sum = 0.0;
        for &y in mu.ball_members_at(parent.center_index, self.alpha * parent.radius) {
            let y = y as usize;
            if y == x || within(mu.dist(y, atom.center_index), 56.0 * atom.radius) {
                continue;
            }
            sum += mu.weight(y) / mu.dist(x, y).powf(n);
        }
        Ok(sum)
    }

    /// Supremum of [`Self::property_iv_integral`] over every non-root atom and member.
    pub fn c_iv(&self, mu: &PointMeasure) -> f64 {
        let mut sup = 0.0f64;
        for atom in &self.atoms[1..] {
            for &x in &atom.members {
                sup = sup.max(self.property_iv_integral(mu, atom.id, x).expect("non-root atom"));
            }
        }
        sup
    }

    pub fn verify(&self, mu: &PointMeasure) -> FiltrationReport {
        let mut failures = Vec::new();
        for (k, lv) in self.levels.iter().enumerate() {
            let mut seen = vec![0u32; mu.len()];
            for &a in lv {
                for &m in &self.atoms[a].members {
                    seen[m] += 1;
                }
            }
            if let Some(x) = seen.iter().position(|&s| s != 1) {
                failures.push(format!("level {k}: point {x} covered {} times", seen[x]));
            }
        }
        let non_doubling: Vec<usize> = self.atoms.iter().filter(|a| !a.doubling).map(|a| a.id).collect();
        if !non_doubling.is_empty() {
            failures.push(format!("non-doubling atoms: {non_doubling:?}"));
        }
        for a in &self.atoms[1..] {
            let p = &self.atoms[a.sigma_parent.unwrap()];
            let proper = a.members.len() < p.members.len() && a.members.iter().all(|m| p.members.contains(m));
            if !proper || p.level + 1 != a.level {
                failures.push(format!("atom {}: parent {} does not properly contain it one level up", a.id, p.id));
            }
        }
        let finest_singletons = self.levels[self.depth()].iter().all(|&a| self.atoms[a].members.len() == 1);
        if !finest_singletons {
            failures.push("finest level has non-singleton atoms".into());
        }
        let chain_failures = self.chains.iter().filter(|c| !c.holds).count();
        if self.mode == Mode::Paper && chain_failures > 0 {
            failures.push(format!("{chain_failures} chain decay checks fail"));
        }
        FiltrationReport {
            depth: self.depth(),
            atoms: self.atoms.len(),
            orphans: self.orphans,
            c_iv: self.c_iv(mu),
            chain_checks: self.chains.len(),
            chain_failures,
            chain_asserted: self.mode == Mode::Paper,
            failures,
        }
    }

    pub fn to_json(&self, mu: &PointMeasure) -> serde_json::Value {
        serde_json::json!({
            "lattice_id": format!("{:016x}", self.lattice_id),
            "measure_id": format!("{:016x}", self.measure_id),
            "levels": self.levels,
            "atoms": self.atoms,
            "gaps": self.gaps,
            "chains": self.chains,
            "report": self.verify(mu),
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FiltrationReport {
    pub depth: usize,
    pub atoms: usize,
    pub orphans: usize,
    pub c_iv: f64,
    pub chain_checks: usize,
    pub chain_failures: usize,
    pub chain_asserted: bool,
    pub failures: Vec<String>,
}

impl FiltrationReport {
    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }
}

/// `1 + sum_{j=0}^{N} mu(2^j B1) / r(2^j B1)^n`, `N` the least `l` with `supp ∩ B2 ⊂ 2^l B1`.
pub fn k_coefficient(mu: &PointMeasure, b1: &Ball, b2: &Ball) -> f64 {
    let n = mu.growth_degree();
    let inside = mu.ball_members(b2);
    let mut k = 1.0;
    let mut ball = b1.clone();
    loop {
        k += mu.ball_mass(&ball) / ball.radius.powf(n);
        if inside.iter().all(|&i| ball.contains(mu.point(i))) {
            return k;
        }
        ball = ball.dilate(2.0);
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct KReport {
    pub pairs: usize,
    pub min_ratio: f64,
    pub max_ratio: f64,
}

/// Ratio `K_{B_Q, B_R} / (level(Q) - level(R))` over nested pairs of cube atoms.
pub fn k_coefficient_report(mu: &PointMeasure, f: &Filtration) -> KReport {
    let mut rep = KReport { pairs: 0, min_ratio: f64::INFINITY, max_ratio: 0.0 };
    for q in f.atoms.iter().filter(|a| a.cube.is_some()) {
        let mut r = q.sigma_parent;
        while let Some(rid) = r {
            let ra = &f.atoms[rid];
            let k = k_coefficient(mu, &q.ball(mu), &ra.ball(mu));
            let ratio = k / (q.level - ra.level) as f64;
            rep.pairs += 1;
            rep.min_ratio = rep.min_ratio.min(ratio);
            rep.max_ratio = rep.max_ratio.max(ratio);
            r = ra.sigma_parent;
        }
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundled;
    use crate::lattice::{build_lattice, Cube, LatticeParams};
    use proptest::prelude::*;

    fn line(points: &[f64], w: &[f64]) -> PointMeasure {
        PointMeasure::new(1, 1.0, points.iter().map(|&p| vec![p]).collect(), w.to_vec()).unwrap()
    }

    fn cube(id: usize, g: i32, c: usize, r: f64, m: Vec<usize>, p: Option<usize>, d: bool) -> Cube {
        Cube { id, generation: g, center_index: c, radius: r, member_indices: m, parent_id: p, children: vec![], is_db_doubling: d }
    }

    /// Q ⊋ T ⊋ R with T non-doubling, plus a leaf level.
    fn chain_lattice() -> (PointMeasure, Lattice) {
        let mu = line(&[0.0, 1.0, 2.0, 3.0], &[1.0; 4]);
        let cubes = vec![
            cube(0, 0, 1, 2.0, vec![0, 1, 2, 3], None, true),
            cube(1, 1, 1, 1.0, vec![0, 1, 2], Some(0), false),
            cube(2, 1, 3, 0.1, vec![3], Some(0), true),
            cube(3, 2, 0, 0.5, vec![0, 1], Some(1), true),
            cube(4, 2, 2, 0.1, vec![2], Some(1), true),
            cube(5, 2, 3, 0.1, vec![3], Some(2), true),
            cube(6, 3, 0, 0.1, vec![0], Some(3), true),
            cube(7, 3, 1, 0.1, vec![1], Some(3), true),
            cube(8, 3, 2, 0.1, vec![2], Some(4), true),
            cube(9, 3, 3, 0.1, vec![3], Some(5), true),
        ];
        let l = Lattice::from_cubes(&mu, LatticeParams::test(), cubes).unwrap();
        (mu, l)
    }

    #[test]
    fn skipped_non_doubling_cube() {
        let (mu, l) = chain_lattice();
        let f = build_filtration(&mu, &l).unwrap();
        let level1: Vec<Option<usize>> = f.levels[1].iter().map(|&a| f.atoms[a].cube).collect();
        assert_eq!(level1, vec![Some(3), Some(4), Some(2)]);
        assert!(f.atoms.iter().all(|a| a.cube != Some(1)));
        let gap = f.gaps.iter().find(|g| f.atoms[g.atom].cube == Some(3)).unwrap();
        assert_eq!(gap.gap, 2);
        assert_eq!(f.chains.len(), 2);
    }

    #[test]
    fn hand_weighted_mean() {
        let (mu, l) = chain_lattice();
        let f = build_filtration(&mu, &l).unwrap();
        let field = ScalarField::new(&mu, vec![1.0, 3.0, 5.0, 7.0]).unwrap();
        let e1 = f.cond_exp(&mu, &field, 1).unwrap();
        assert_eq!(&e1.values()[..2], &[2.0, 2.0]);
        let d2 = f.mart_diff(&mu, &field, 2).unwrap();
        assert_eq!(&d2.values()[..2], &[-1.0, 1.0]);
        assert_eq!(f.cond_exp(&mu, &field, f.depth()).unwrap().values(), field.values());
    }

    #[test]
    fn non_doubling_root_rejected() {
        let mu = line(&[0.0, 1.0], &[1.0, 1.0]);
        let cubes = vec![
            cube(0, 0, 0, 2.0, vec![0, 1], None, false),
            cube(1, 1, 0, 0.1, vec![0], Some(0), true),
            cube(2, 1, 1, 0.1, vec![1], Some(0), true),
        ];
        let l = Lattice::from_cubes(&mu, LatticeParams::test(), cubes).unwrap();
        assert!(matches!(build_filtration(&mu, &l), Err(Error::NonDoublingRoot)));
    }

    #[test]
    fn orphans_become_singletons() {
        let mu = line(&[0.0, 1.0, 2.0], &[1.0; 3]);
        let cubes = vec![
            cube(0, 0, 1, 2.0, vec![0, 1, 2], None, true),
            cube(1, 1, 0, 0.5, vec![0, 1], Some(0), false),
            cube(2, 1, 2, 0.1, vec![2], Some(0), true),
            cube(3, 2, 0, 0.1, vec![0], Some(1), false),
            cube(4, 2, 1, 0.1, vec![1], Some(1), false),
            cube(5, 2, 2, 0.1, vec![2], Some(2), true),
        ];
        let l = Lattice::from_cubes(&mu, LatticeParams::test(), cubes).unwrap();
        let f = build_filtration(&mu, &l).unwrap();
        assert_eq!(f.orphans, 2);
        assert_eq!(f.depth(), 1);
        assert!(f.verify(&mu).ok(), "{:?}", f.verify(&mu).failures);
    }

    #[test]
    fn one_point_filtration() {
        let mu = line(&[0.0], &[1.0]);
        let l = build_lattice(&mu, &LatticeParams::test()).unwrap();
        let f = build_filtration(&mu, &l).unwrap();
        assert_eq!(f.depth(), 0);
        assert_eq!(f.atoms.len(), 1);
    }

    #[test]
    fn uniform_levels_match_generations() {
        let mu = bundled::uniform(64);
        let l = build_lattice(&mu, &LatticeParams::test()).unwrap();
        let f = build_filtration(&mu, &l).unwrap();
        assert!(f.verify(&mu).ok());
        // Every atom is a lattice cube with a strictly smaller member set.
        assert_eq!(f.orphans, 0);
    }

    #[test]
    fn property_iv_matches_bruteforce() {
        let mu = bundled::cantor(5);
        let l = build_lattice(&mu, &LatticeParams::test()).unwrap();
        let f = build_filtration(&mu, &l).unwrap();
        let n = mu.growth_degree();
        for a in &f.atoms[1..] {
            let r = &f.atoms[a.sigma_parent.unwrap()];
            for &x in &a.members {
                let mut oracle = 0.0;
                for y in 0..mu.len() {
                    let in_r = (mu.point(y)[0] - mu.point(r.center_index)[0]).abs() <= f.alpha * r.radius * (1.0 + 1e-12);
                    let in_q = (mu.point(y)[0] - mu.point(a.center_index)[0]).abs() <= 56.0 * a.radius * (1.0 + 1e-12);
                    if y != x && in_r && !in_q {
                        oracle += mu.weight(y) / (mu.point(x)[0] - mu.point(y)[0]).abs().powf(n);
                    }
                }
                let got = f.property_iv_integral(&mu, a.id, x).unwrap();
                assert!((got - oracle).abs() <= 1e-12 * oracle.max(1.0));
            }
        }
        assert!(f.property_iv_integral(&mu, 0, 0).is_err());
    }

    #[test]
    fn k_coefficient_examples() {
        let mu = line(&[0.0], &[1.0]);
        let b = Ball::new(vec![0.0], 1.0).unwrap();
        assert_eq!(k_coefficient(&mu, &b, &b), 2.0);
        let mu = bundled::uniform(64);
        let b1 = Ball::new(vec![0.5], 0.1).unwrap();
        let b2 = Ball::new(vec![0.5], 0.35).unwrap();
        // 2^2 * 0.1 = 0.4 covers B2; N = 2.
        let oracle = 1.0 + (0..=2).map(|j| mu.ball_mass(&b1.dilate(2f64.powi(j))) / (0.1 * 2f64.powi(j))).sum::<f64>();
        assert!((k_coefficient(&mu, &b1, &b2) - oracle).abs() < 1e-12);
    }

    fn fixture() -> (PointMeasure, Filtration) {
        let mu = bundled::spike();
        let l = build_lattice(&mu, &LatticeParams::test()).unwrap();
        let f = build_filtration(&mu, &l).unwrap();
        (mu, f)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn tower_mass_and_orthogonality(vals in prop::collection::vec(-10.0f64..10.0, 128), j in 0usize..6, k in 0usize..6) {
            let (mu, f) = fixture();
            let j = j.min(f.depth());
            let k = k.min(f.depth());
            let field = ScalarField::new(&mu, vals).unwrap();
            let ek = f.cond_exp(&mu, &field, k).unwrap();
            let ejk = f.cond_exp(&mu, &ek, j).unwrap();
            let emin = f.cond_exp(&mu, &field, j.min(k)).unwrap();
            let scale = field.max_abs().max(1.0);
            for (a, b) in ejk.values().iter().zip(emin.values()) {
                prop_assert!((a - b).abs() <= 1e-12 * scale);
            }
            prop_assert!((ek.integral(&mu) - field.integral(&mu)).abs() <= 1e-12 * scale * mu.total_mass());
            if j != k {
                let dj = f.mart_diff(&mu, &field, j).unwrap();
                let dk = f.mart_diff(&mu, &field, k).unwrap();
                let inner = dj.zip_with(&dk, |a, b| a * b).integral(&mu);
                let norm2 = field.map(|v| v * v).integral(&mu);
                prop_assert!(inner.abs() <= 1e-10 * norm2.max(1e-300));
            }
            let mut recon = vec![0.0; mu.len()];
            for lvl in 0..=f.depth() {
                let d = f.mart_diff(&mu, &field, lvl).unwrap();
                for (r, v) in recon.iter_mut().zip(d.values()) { *r += v; }
            }
            for (r, v) in recon.iter().zip(field.values()) {
                prop_assert!((r - v).abs() <= 1e-10 * scale);
            }
        }
    }
}
