//! Finite weighted point clouds, closed balls and scalar fields.
//!
//! All balls are closed. Membership uses a relative slack of
//! [`CLOSED_BALL_REL_TOL`] so that radii produced as dilates of pairwise
//! distances (`alpha * (d / alpha)`) still capture the point at distance `d`.

use std::cmp::Ordering;
use std::path::Path;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CLOSED_BALL_REL_TOL: f64 = 1e-12;

#[inline]
pub fn within(dist: f64, radius: f64) -> bool {
    dist <= radius * (1.0 + CLOSED_BALL_REL_TOL)
}

#[inline]
pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: Vec<f64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::InvalidParams(format!("ball radius {radius} must be positive")));
        }
        Ok(Ball { center, radius })
    }

    pub fn dilate(&self, factor: f64) -> Ball {
        Ball { center: self.center.clone(), radius: self.radius * factor }
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        within(distance(&self.center, p), self.radius)
    }
}

/// Distances from one support point to every support point (itself
/// included at distance 0), sorted ascending, with cumulative masses.
#[derive(Debug, Clone)]
pub struct NeighborList {
    pub dist: Vec<f64>,
    pub index: Vec<u32>,
    pub cum_mass: Vec<f64>,
}

impl NeighborList {
    /// Number of leading entries inside the closed ball of radius `r`.
    pub fn count_within(&self, r: f64) -> usize {
        let limit = r * (1.0 + CLOSED_BALL_REL_TOL);
        self.dist.partition_point(|&d| d <= limit)
    }

    pub fn mass_within(&self, r: f64) -> f64 {
        match self.count_within(r) {
            0 => 0.0,
            c => self.cum_mass[c - 1],
        }
    }

    /// Distinct positive distances to other points.
    pub fn positive_distances(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for &d in &self.dist {
            if d > 0.0 && out.last().is_none_or(|&l| l != d) {
                out.push(d);
            }
        }
        out
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct MeasureFile {
    dim: usize,
    #[serde(default)]
    growth_degree: Option<f64>,
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

/// A finite measure `sum_i w_i delta_{x_i}` on `R^d` with a declared growth
/// degree `n`. Points are stored in lexicographic order with duplicates merged.
#[derive(Debug)]
pub struct PointMeasure {
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
    dim: usize,
    growth_degree: f64,
    growth_constant: f64,
    id: u64,
    neighbors: OnceLock<Vec<NeighborList>>,
}

impl Clone for PointMeasure {
    fn clone(&self) -> Self {
        PointMeasure {
            points: self.points.clone(),
            weights: self.weights.clone(),
            dim: self.dim,
            growth_degree: self.growth_degree,
            growth_constant: self.growth_constant,
            id: self.id,
            neighbors: OnceLock::new(),
        }
    }
}

fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    Ordering::Equal
}

fn fingerprint(points: &[Vec<f64>], weights: &[f64], n: f64) -> u64 {
    // FNV-1a over the raw bit patterns.
    let mut h: u64 = 0xcbf29ce484222325;
    let mut eat = |x: u64| {
        for b in x.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    };
    for (p, w) in points.iter().zip(weights) {
        for c in p {
            eat(c.to_bits());
        }
        eat(w.to_bits());
    }
    eat(n.to_bits());
    h
}

impl PointMeasure {
    pub fn new(dim: usize, growth_degree: f64, points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyMeasure);
        }
        if points.len() != weights.len() {
            return Err(Error::Parse(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        if !(growth_degree > 0.0) {
            return Err(Error::InvalidParams(format!("growth degree {growth_degree} must be positive")));
        }
        for (i, (p, &w)) in points.iter().zip(&weights).enumerate() {
            if p.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: p.len() });
            }
            if p.iter().any(|c| !c.is_finite()) {
                return Err(Error::Parse(format!("non-finite coordinate at point {i}")));
            }
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::NonPositiveWeight { index: i, weight: w });
            }
        }
        let mut pairs: Vec<(Vec<f64>, f64)> = points.into_iter().zip(weights).collect();
        pairs.sort_by(|a, b| lex_cmp(&a.0, &b.0));
        let mut merged: Vec<(Vec<f64>, f64)> = Vec::with_capacity(pairs.len());
        for (p, w) in pairs {
            match merged.last_mut() {
                Some(last) if last.0 == p => last.1 += w,
                _ => merged.push((p, w)),
            }
        }
        let (points, weights): (Vec<_>, Vec<_>) = merged.into_iter().unzip();
        let id = fingerprint(&points, &weights, growth_degree);
        let mut mu = PointMeasure {
            points,
            weights,
            dim,
            growth_degree,
            growth_constant: 0.0,
            id,
            neighbors: OnceLock::new(),
        };
        mu.growth_constant = mu.compute_growth_constant();
        if mu.growth_constant > 1.0 {
            log::warn!(
                "measure exceeds normalized growth: sup mu(B(x,r))/r^n = {}",
                mu.growth_constant
            );
        }
        Ok(mu)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn growth_degree(&self) -> f64 {
        self.growth_degree
    }

    pub fn growth_constant(&self) -> f64 {
        self.growth_constant
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn mass_of(&self, indices: &[usize]) -> f64 {
        indices.iter().map(|&i| self.weights[i]).sum()
    }

    pub fn dist(&self, i: usize, j: usize) -> f64 {
        distance(&self.points[i], &self.points[j])
    }

    pub fn neighbors(&self) -> &[NeighborList] {
        self.neighbors.get_or_init(|| {
            (0..self.len())
                .map(|i| {
                    let mut order: Vec<(f64, u32)> =
                        (0..self.len()).map(|j| (self.dist(i, j), j as u32)).collect();
                    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                    let mut acc = 0.0;
                    let cum_mass = order
                        .iter()
                        .map(|&(_, j)| {
                            acc += self.weights[j as usize];
                            acc
                        })
                        .collect();
                    NeighborList {
                        dist: order.iter().map(|p| p.0).collect(),
                        index: order.iter().map(|p| p.1).collect(),
                        cum_mass,
                    }
                })
                .collect()
        })
    }

    pub fn ball_mass(&self, ball: &Ball) -> f64 {
        self.points
            .iter()
            .zip(&self.weights)
            .filter(|(p, _)| ball.contains(p))
            .map(|(_, w)| w)
            .sum()
    }

    pub fn ball_members(&self, ball: &Ball) -> Vec<usize> {
        (0..self.len()).filter(|&i| ball.contains(&self.points[i])).collect()
    }

    /// Mass of the closed ball centered at support point `i`.
    pub fn ball_mass_at(&self, i: usize, radius: f64) -> f64 {
        self.neighbors()[i].mass_within(radius)
    }

    /// Support indices of the closed ball centered at support point `i`,
    /// ordered by distance from the center.
    pub fn ball_members_at(&self, i: usize, radius: f64) -> &[u32] {
        let nl = &self.neighbors()[i];
        &nl.index[..nl.count_within(radius)]
    }

    pub fn ball_at(&self, i: usize, radius: f64) -> Ball {
        Ball { center: self.points[i].clone(), radius }
    }

    pub fn is_doubling(&self, ball: &Ball, alpha: f64, beta: f64) -> bool {
        let inner = self.ball_mass(ball);
        let outer = self.ball_mass(&ball.dilate(alpha));
        doubling_rule(inner, outer, beta)
    }

    pub fn is_doubling_at(&self, i: usize, radius: f64, alpha: f64, beta: f64) -> bool {
        let nl = &self.neighbors()[i];
        doubling_rule(nl.mass_within(radius), nl.mass_within(alpha * radius), beta)
    }

    pub fn diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..self.len() {
            for j in (i + 1)..self.len() {
                d = d.max(self.dist(i, j));
            }
        }
        d
    }

    /// Smallest distance between distinct support points, `None` for one point.
    pub fn min_distance(&self) -> Option<f64> {
        let mut d = f64::INFINITY;
        for i in 0..self.len() {
            for j in (i + 1)..self.len() {
                d = d.min(self.dist(i, j));
            }
        }
        d.is_finite().then_some(d)
    }

    pub fn pairwise_distances(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len() * self.len().saturating_sub(1) / 2);
        for i in 0..self.len() {
            for j in (i + 1)..self.len() {
                out.push(self.dist(i, j));
            }
        }
        out.sort_by(f64::total_cmp);
        out
    }

    pub fn median_pairwise_distance(&self) -> Option<f64> {
        let d = self.pairwise_distances();
        (!d.is_empty()).then(|| d[(d.len() - 1) / 2])
    }

    /// Canonical radius grid: pairwise distances and their `1/alpha`
    /// multiples. Ball masses and dilate masses are step functions that only
    /// jump on this set.
    pub fn radius_grid(&self, alpha: f64) -> Vec<f64> {
        let base = self.pairwise_distances();
        let mut grid: Vec<f64> = base.iter().copied().chain(base.iter().map(|d| d / alpha)).collect();
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        grid
    }

    /// Breakpoints of `r -> (mu(B(x_i, r)), mu(B(x_i, alpha r)))`.
    pub fn local_breakpoints(&self, i: usize, alpha: f64) -> Vec<f64> {
        let d = self.neighbors()[i].positive_distances();
        let mut grid: Vec<f64> = d.iter().copied().chain(d.iter().map(|x| x / alpha)).collect();
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        grid
    }

    fn compute_growth_constant(&self) -> f64 {
        let n = self.growth_degree;
        let Some(rmin) = self.min_distance() else {
            // One atom: the grid degenerates to the unit radius.
            return self.weights[0];
        };
        let nbrs = self.neighbors();
        let mut sup: f64 = 0.0;
        for nl in nbrs {
            sup = sup.max(nl.mass_within(rmin) / rmin.powf(n));
            for (k, &d) in nl.dist.iter().enumerate() {
                if d > 0.0 && nl.dist.get(k + 1).is_none_or(|&next| next != d) {
                    sup = sup.max(nl.cum_mass[k] / d.powf(n));
                }
            }
        }
        sup
    }

    pub fn restrict(&self, indices: &[usize]) -> Result<PointMeasure> {
        if indices.is_empty() {
            return Err(Error::EmptyIndexSet);
        }
        let mut pts = Vec::with_capacity(indices.len());
        let mut ws = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::IndexOutOfRange(i));
            }
            pts.push(self.points[i].clone());
            ws.push(self.weights[i]);
        }
        PointMeasure::new(self.dim, self.growth_degree, pts, ws)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "dim": self.dim,
            "growth_degree": self.growth_degree,
            "points": self.points,
            "weights": self.weights,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.to_json()).map_err(|e| Error::Parse(e.to_string()))?;
        std::fs::write(path, text).map_err(|source| Error::Io { path: path.to_path_buf(), source })
    }
}

fn doubling_rule(inner: f64, outer: f64, beta: f64) -> bool {
    if inner == 0.0 {
        outer == 0.0
    } else {
        outer <= beta * inner
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.to_path_buf(), source })
}

fn is_csv(path: &Path) -> bool {
    path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("csv"))
}

/// Loads a measure from JSON (`{"dim", "growth_degree", "points", "weights"}`)
/// or CSV (coordinate columns plus a `weight` column). An explicit
/// `growth_degree` overrides the file; CSV input requires one.
pub fn load_measure(path: &Path, growth_degree: Option<f64>) -> Result<PointMeasure> {
    let text = read(path)?;
    if is_csv(path) {
        let n = growth_degree
            .ok_or_else(|| Error::Parse("CSV measures need an explicit growth degree".into()))?;
        parse_measure_csv(&text, n)
    } else {
        let file: MeasureFile = serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
        let n = growth_degree
            .or(file.growth_degree)
            .ok_or_else(|| Error::Parse("growth_degree missing".into()))?;
        PointMeasure::new(file.dim, n, file.points, file.weights)
    }
}

pub fn parse_measure_csv(text: &str, growth_degree: f64) -> Result<PointMeasure> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| Error::Parse(e.to_string()))?.clone();
    let wcol = headers
        .iter()
        .position(|h| h == "weight")
        .ok_or_else(|| Error::Parse("CSV needs a `weight` column".into()))?;
    let dim = headers.len() - 1;
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        let mut p = Vec::with_capacity(dim);
        for (c, field) in rec.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::Parse(format!("bad number `{field}`")))?;
            if c == wcol {
                weights.push(v);
            } else {
                p.push(v);
            }
        }
        points.push(p);
    }
    PointMeasure::new(dim, growth_degree, points, weights)
}

/// One real value per support point of a specific measure.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    values: Vec<f64>,
    measure_id: u64,
}

impl ScalarField {
    pub fn new(mu: &PointMeasure, values: Vec<f64>) -> Result<Self> {
        if values.len() != mu.len() {
            return Err(Error::DimensionMismatch { expected: mu.len(), found: values.len() });
        }
        Ok(ScalarField { values, measure_id: mu.id() })
    }

    pub fn constant(mu: &PointMeasure, c: f64) -> Self {
        ScalarField { values: vec![c; mu.len()], measure_id: mu.id() }
    }

    pub fn from_fn(mu: &PointMeasure, f: impl Fn(&[f64]) -> f64) -> Self {
        ScalarField { values: mu.points().iter().map(|p| f(p)).collect(), measure_id: mu.id() }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn measure_id(&self) -> u64 {
        self.measure_id
    }

    pub fn check(&self, mu: &PointMeasure) -> Result<()> {
        if self.measure_id != mu.id() {
            return Err(Error::ForeignField);
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        ScalarField { values: self.values.iter().map(|&v| f(v)).collect(), measure_id: self.measure_id }
    }

    pub fn zip_with(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Self {
        ScalarField {
            values: self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
            measure_id: self.measure_id,
        }
    }

    pub fn with_values(&self, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), self.values.len());
        ScalarField { values, measure_id: self.measure_id }
    }

    pub fn integral(&self, mu: &PointMeasure) -> f64 {
        self.values.iter().zip(mu.weights()).map(|(v, w)| v * w).sum()
    }

    pub fn lp_norm(&self, mu: &PointMeasure, p: f64) -> f64 {
        if p.is_infinite() {
            return self.values.iter().fold(0.0, |m, v| m.max(v.abs()));
        }
        self.values
            .iter()
            .zip(mu.weights())
            .map(|(v, w)| v.abs().powf(p) * w)
            .sum::<f64>()
            .powf(1.0 / p)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Weighted mean over an index set.
    pub fn mean_over(&self, mu: &PointMeasure, indices: &[usize]) -> f64 {
        let (s, m) = indices
            .iter()
            .fold((0.0, 0.0), |(s, m), &i| (s + self.values[i] * mu.weight(i), m + mu.weight(i)));
        s / m
    }
}

pub fn load_field(path: &Path, mu: &PointMeasure) -> Result<ScalarField> {
    let text = read(path)?;
    let values: Vec<f64> = if is_csv(path) {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let headers = rdr.headers().map_err(|e| Error::Parse(e.to_string()))?.clone();
        let col = headers
            .iter()
            .position(|h| h == "value")
            .ok_or_else(|| Error::Parse("CSV needs a `value` column".into()))?;
        let mut out = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
            let field = &rec[col];
            out.push(field.parse().map_err(|_| Error::Parse(format!("bad number `{field}`")))?);
        }
        out
    } else {
        serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?
    };
    ScalarField::new(mu, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize, w: f64) -> PointMeasure {
        PointMeasure::new(1, 1.0, (0..n).map(|i| vec![i as f64]).collect(), vec![w; n]).unwrap()
    }

    #[test]
    fn one_point_growth_constant() {
        let mu = PointMeasure::new(1, 1.0, vec![vec![0.0]], vec![1.0]).unwrap();
        assert_eq!(mu.growth_constant(), 1.0);
    }

    #[test]
    fn duplicates_merge() {
        let mu = PointMeasure::new(2, 2.0, vec![vec![0.0, 0.0], vec![0.0, 0.0]], vec![0.5, 0.5]).unwrap();
        assert_eq!(mu.len(), 1);
        assert_eq!(mu.weight(0), 1.0);
    }

    #[test]
    fn points_sorted_lexicographically() {
        let mu = PointMeasure::new(
            2,
            1.0,
            vec![vec![1.0, 0.0], vec![0.0, 5.0], vec![0.0, -1.0]],
            vec![1.0, 2.0, 3.0],
        )
        .unwrap();
        assert_eq!(mu.points(), &[vec![0.0, -1.0], vec![0.0, 5.0], vec![1.0, 0.0]]);
        assert_eq!(mu.weights(), &[3.0, 2.0, 1.0]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(PointMeasure::new(1, 1.0, vec![], vec![]), Err(Error::EmptyMeasure)));
        assert!(matches!(
            PointMeasure::new(1, 1.0, vec![vec![0.0]], vec![0.0]),
            Err(Error::NonPositiveWeight { .. })
        ));
        assert!(matches!(
            PointMeasure::new(2, 1.0, vec![vec![0.0]], vec![1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn ball_mass_examples() {
        let mu = PointMeasure::new(1, 1.0, vec![vec![0.0]], vec![1.0]).unwrap();
        assert_eq!(mu.ball_mass(&Ball::new(vec![0.0], 1.0).unwrap()), 1.0);
        assert_eq!(mu.ball_mass(&Ball::new(vec![3.0], 1.0).unwrap()), 0.0);
        let ten = line(10, 1.0);
        assert_eq!(ten.ball_mass(&Ball::new(vec![4.5], 2.0).unwrap()), 4.0);
        assert_eq!(ten.ball_mass_at(4, 2.0), 5.0);
    }

    #[test]
    fn doubling_examples() {
        let mu = PointMeasure::new(1, 1.0, vec![vec![0.0]], vec![1.0]).unwrap();
        assert!(mu.is_doubling(&Ball::new(vec![0.0], 1.0).unwrap(), 2.0, 2.0));
        let two = PointMeasure::new(1, 1.0, vec![vec![0.0], vec![1.5]], vec![1.0, 100.0]).unwrap();
        assert!(!two.is_doubling(&Ball::new(vec![0.0], 1.0).unwrap(), 2.0, 2.0));
        // zero-mass convention
        assert!(two.is_doubling(&Ball::new(vec![10.0], 0.5).unwrap(), 2.0, 2.0));
        assert!(!two.is_doubling(&Ball::new(vec![0.75], 0.5).unwrap(), 2.0, 2.0));
    }

    #[test]
    fn restrict_examples() {
        let ten = line(10, 1.0);
        let all: Vec<usize> = (0..10).collect();
        let full = ten.restrict(&all).unwrap();
        assert_eq!(full.points(), ten.points());
        assert_eq!(full.id(), ten.id());
        let one = ten.restrict(&[3]).unwrap();
        assert_eq!(one.weights(), &[1.0]);
        let half = ten.restrict(&[0, 1, 2, 3, 4]).unwrap();
        assert_eq!(half.total_mass(), 5.0);
        assert!(matches!(ten.restrict(&[]), Err(Error::EmptyIndexSet)));
    }

    #[test]
    fn radius_grid_contains_dilates() {
        let mu = line(3, 1.0);
        assert_eq!(mu.radius_grid(2.0), vec![0.5, 1.0, 2.0]);
    }

    #[test]
    fn csv_roundtrip_and_field_alignment() {
        let mu = parse_measure_csv("x,y,weight\n1,0,2\n0,1,1\n", 2.0).unwrap();
        assert_eq!(mu.points()[0], vec![0.0, 1.0]);
        assert_eq!(mu.weight(0), 1.0);
    }
}
