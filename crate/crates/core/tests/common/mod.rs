//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use viewplan::{BasisKind, ParticleEnsemble, Position, Scenario, ScenarioConfig};

pub fn scenario_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(name)
}

pub fn config(name: &str) -> ScenarioConfig {
    ScenarioConfig::load(scenario_path(name)).unwrap()
}

pub fn s1() -> Scenario {
    Scenario::load(scenario_path("s1.json")).unwrap()
}

/// Monomials written out term by term, independent of the library's basis
/// code.
pub fn features(basis: BasisKind, p: &Position) -> Vec<f64> {
    let (x, y, z) = (p.x, p.y, p.z);
    match basis {
        BasisKind::Reduced6 => vec![z * z * y, x * x, y * y, z * z, y * z, x * z],
        BasisKind::Full20 => vec![
            1.0,
            x * x * x,
            y * y * y,
            z * z * z,
            x * y * z,
            x * x * y,
            x * x * z,
            y * y * z,
            y * y * x,
            z * z * x,
            z * z * y,
            x * x,
            y * y,
            z * z,
            x * y,
            y * z,
            x * z,
            x,
            y,
            z,
        ],
    }
}

pub fn field(basis: BasisKind, theta: &[f64], p: &Position) -> f64 {
    features(basis, p)
        .iter()
        .zip(theta)
        .map(|(a, b)| a * b)
        .sum()
}

/// Central finite-difference gradient of the field.
pub fn fd_gradient(basis: BasisKind, theta: &[f64], p: &Position, h: f64) -> Vector3<f64> {
    let mut g = Vector3::zeros();
    for k in 0..3 {
        let mut a = *p;
        let mut b = *p;
        a[k] += h;
        b[k] -= h;
        g[k] = (field(basis, theta, &a) - field(basis, theta, &b)) / (2.0 * h);
    }
    g
}

/// Gaussian-prior, Gaussian-noise linear regression posterior
/// `(mean, covariance)`.
pub fn conjugate_posterior(
    prior_mean: &DVector<f64>,
    prior_cov: &DMatrix<f64>,
    phi: &[Vec<f64>],
    y: &[f64],
    sigma: f64,
) -> (DVector<f64>, DMatrix<f64>) {
    let d = prior_mean.len();
    let x = DMatrix::from_fn(phi.len(), d, |i, j| phi[i][j]);
    let yv = DVector::from_column_slice(y);
    let prior_prec = prior_cov.clone().try_inverse().unwrap();
    let prec = &prior_prec + x.transpose() * &x / (sigma * sigma);
    let cov = prec.try_inverse().unwrap();
    let mean = &cov * (prior_prec * prior_mean + x.transpose() * yv / (sigma * sigma));
    (mean, cov)
}

/// Uniform point on the upper hemisphere of radius `r`.
pub fn hemisphere_point<R: Rng>(rng: &mut R, r: f64) -> Position {
    let n = Normal::new(0.0, 1.0).unwrap();
    let mut v: Vector3<f64> = Vector3::new(n.sample(rng), n.sample(rng), n.sample(rng));
    v.z = v.z.abs();
    v.normalize() * r
}

/// Random weighted ensemble: Gaussian particles around `centre` with
/// Dirichlet-like weights.
pub fn random_ensemble<R: Rng>(
    rng: &mut R,
    n: usize,
    dim: usize,
    centre: &[f64],
    spread: f64,
) -> ParticleEnsemble {
    let g = Normal::new(0.0, spread).unwrap();
    let particles: Vec<f64> = (0..n * dim)
        .map(|i| centre[i % dim] + g.sample(rng))
        .collect();
    let weights: Vec<f64> = (0..n).map(|_| -rng.random::<f64>().ln()).collect();
    ParticleEnsemble::from_parts(dim, particles, weights).unwrap()
}

pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}
