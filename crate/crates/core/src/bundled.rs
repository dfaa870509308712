//! Measures shipped with the crate, addressable by name from the CLI.

use crate::error::{Error, Result};
use crate::measure::PointMeasure;

pub const NAMES: &[&str] = &[
    "uniform-64",
    "uniform-256",
    "uniform-512",
    "uniform-1024",
    "grid2d-16",
    "cantor-5",
    "gaussian",
    "spike",
    "lacunary",
];

/// `n` equally spaced points on `[0, 1]`, each of mass `1/n`.
pub fn uniform(n: usize) -> PointMeasure {
    let pts = (0..n).map(|i| vec![if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 }]).collect();
    PointMeasure::new(1, 1.0, pts, vec![1.0 / n as f64; n]).expect("uniform grid is valid")
}

/// `side x side` grid on `[0, 1]^2` with total mass 1 and growth degree 2.
pub fn grid2d(side: usize) -> PointMeasure {
    let h = 1.0 / (side - 1) as f64;
    let pts = (0..side * side).map(|k| vec![(k / side) as f64 * h, (k % side) as f64 * h]).collect();
    let n = side * side;
    PointMeasure::new(2, 2.0, pts, vec![1.0 / n as f64; n]).expect("grid is valid")
}

/// Left endpoints of the depth-`depth` middle-thirds Cantor intervals.
pub fn cantor(depth: u32) -> PointMeasure {
    let mut pts = vec![0.0f64];
    let mut scale = 1.0;
    for _ in 0..depth {
        scale /= 3.0;
        pts = pts.iter().flat_map(|&p| [p, p + 2.0 * scale]).collect();
    }
    let n = pts.len();
    let degree = 2f64.ln() / 3f64.ln();
    PointMeasure::new(1, degree, pts.into_iter().map(|p| vec![p]).collect(), vec![1.0 / n as f64; n])
        .expect("cantor iterate is valid")
}

/// Standard Gaussian density sampled on a grid over `[-4, 4]` that avoids 0.
pub fn gaussian() -> PointMeasure {
    let n = 200;
    let h = 8.0 / n as f64;
    let xs: Vec<f64> = (0..n).map(|i| -4.0 + (i as f64 + 0.5) * h).collect();
    let c = h / (2.0 * std::f64::consts::PI).sqrt();
    let w = xs.iter().map(|x| c * (-x * x / 2.0).exp()).collect();
    PointMeasure::new(1, 1.0, xs.into_iter().map(|x| vec![x]).collect(), w).expect("gaussian grid is valid")
}

/// Uniform 128-point grid with one atom a hundred times heavier.
pub fn spike() -> PointMeasure {
    let n = 128;
    let pts = (0..n).map(|i| vec![i as f64 / (n - 1) as f64]).collect();
    let mut w = vec![1.0 / n as f64; n];
    w[n / 3] *= 100.0;
    PointMeasure::new(1, 1.0, pts, w).expect("spike measure is valid")
}

/// Points `2^-j` carrying mass `64^-j`, `j = 0..24`.
pub fn lacunary() -> PointMeasure {
    let pts = (0..24).map(|j| vec![0.5f64.powi(j)]).collect();
    let w = (0..24).map(|j| 64f64.powi(-j)).collect();
    PointMeasure::new(1, 1.0, pts, w).expect("lacunary measure is valid")
}

pub fn by_name(name: &str) -> Result<PointMeasure> {
    Ok(match name {
        "uniform-64" => uniform(64),
        "uniform-256" => uniform(256),
        "uniform-512" => uniform(512),
        "uniform-1024" => uniform(1024),
        "grid2d-16" => grid2d(16),
        "cantor-5" => cantor(5),
        "gaussian" => gaussian(),
        "spike" => spike(),
        "lacunary" => lacunary(),
        other => return Err(Error::Parse(format!("unknown bundled measure `{other}`"))),
    })
}
