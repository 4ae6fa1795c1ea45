//! Weighted-particle posterior over the field coefficients.
//!
//! The ensemble stores particles row-major (`N × dim`) with weights that
//! always sum to one. Likelihood weighting runs in log space with
//! max-subtraction, so tight likelihoods on large ensembles do not
//! underflow to an all-zero weight vector.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::domain::Position;
use crate::error::{Error, Result};
use crate::reward::{dot, BasisKind, ThetaVector};
use crate::sensor::Measurement;

/// Gaussian residual likelihood.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodSpec {
    pub sigma: f64,
}

impl LikelihoodSpec {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "likelihood sigma must be positive and finite, got {sigma}"
            )));
        }
        Ok(Self { sigma })
    }

    pub fn log_likelihood(&self, residual: f64) -> f64 {
        -0.5 * (residual / self.sigma).powi(2)
    }
}

/// Independent uniform prior per coefficient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    bounds: Vec<(f64, f64)>,
}

impl PriorSpec {
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::InvalidBounds("no coefficients".into()));
        }
        for (i, &(lo, hi)) in bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidBounds(format!(
                    "coefficient {}: need lo < hi, got [{lo}, {hi}]",
                    i + 1
                )));
            }
        }
        Ok(Self { bounds })
    }

    /// Same `[lo, hi]` for every coefficient.
    pub fn uniform(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![(lo, hi); dim])
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }
}

/// Result of one likelihood update.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct UpdateOutcome {
    /// Every weight underflowed; the weights were reset to uniform.
    pub degenerate: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParticleEnsemble {
    dim: usize,
    particles: Vec<f64>,
    weights: Vec<f64>,
}

impl ParticleEnsemble {
    /// Builds an ensemble from row-major particles and unnormalised weights.
    pub fn from_parts(dim: usize, particles: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 || weights.is_empty() || particles.len() != dim * weights.len() {
            return Err(Error::InvalidConfig(format!(
                "{} particle entries do not form {} rows of dimension {dim}",
                particles.len(),
                weights.len()
            )));
        }
        if !particles.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite("particles"));
        }
        if !weights.iter().all(|w| w.is_finite() && *w >= 0.0) {
            return Err(Error::InvalidConfig(
                "weights must be finite and non-negative".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidConfig("weights sum to zero".into()));
        }
        Ok(Self {
            dim,
            particles,
            weights: weights.into_iter().map(|w| w / total).collect(),
        })
    }

    /// `n` i.i.d. draws from the prior with weight `1/n` each.
    pub fn from_prior<R: Rng + ?Sized>(prior: &PriorSpec, n: usize, rng: &mut R) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidConfig(
                "particle count must be at least 1".into(),
            ));
        }
        let dists: Vec<Uniform<f64>> = prior
            .bounds
            .iter()
            .map(|&(lo, hi)| Uniform::new(lo, hi).map_err(|e| Error::InvalidBounds(e.to_string())))
            .collect::<Result<_>>()?;
        let mut particles = Vec::with_capacity(n * prior.dim());
        for _ in 0..n {
            for d in &dists {
                particles.push(d.sample(rng));
            }
        }
        Ok(Self {
            dim: prior.dim(),
            particles,
            weights: vec![1.0 / n as f64; n],
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn particle(&self, i: usize) -> &[f64] {
        &self.particles[i * self.dim..(i + 1) * self.dim]
    }

    pub fn particles(&self) -> impl Iterator<Item = &[f64]> {
        self.particles.chunks_exact(self.dim)
    }

    /// Predicted field value `φ(p)ᵀθⁱ` for every particle.
    pub fn predictions(&self, basis: BasisKind, p: &Position) -> Vec<f64> {
        debug_assert_eq!(basis.dim(), self.dim);
        let phi = basis.eval(p);
        self.particles().map(|th| dot(&phi, th)).collect()
    }

    /// Reweights by the Gaussian likelihood of `m`. A missed detection is
    /// scored against pure noise (predicted value zero).
    pub fn bayes_update(
        &mut self,
        basis: BasisKind,
        m: &Measurement,
        lik: &LikelihoodSpec,
    ) -> UpdateOutcome {
        let preds = if m.detected {
            self.predictions(basis, &m.position)
        } else {
            vec![0.0; self.len()]
        };
        let degenerate = reweight_in_place(&mut self.weights, &preds, m.value, lik);
        UpdateOutcome { degenerate }
    }

    pub fn effective_sample_size(&self) -> f64 {
        1.0 / self.weights.iter().map(|w| w * w).sum::<f64>()
    }

    /// Systematic resampling to `N` equally weighted particles, followed by
    /// optional Gaussian roughening with per-coordinate standard deviation
    /// `roughening_scale` times the resampled spread.
    pub fn resample<R: Rng + ?Sized>(&mut self, rng: &mut R, roughening_scale: f64) {
        let n = self.len();
        let idx = systematic_indices(&self.weights, rng.random::<f64>());
        let mut next = Vec::with_capacity(self.particles.len());
        for &i in &idx {
            next.extend_from_slice(self.particle(i));
        }
        self.particles = next;
        self.weights = vec![1.0 / n as f64; n];

        if roughening_scale > 0.0 {
            let cov = self.covariance();
            let stds: Vec<f64> = (0..self.dim)
                .map(|k| roughening_scale * cov[(k, k)].max(0.0).sqrt())
                .collect();
            for row in self.particles.chunks_exact_mut(self.dim) {
                for (x, &s) in row.iter_mut().zip(&stds) {
                    if s > 0.0 {
                        *x += Normal::new(0.0, s).expect("positive std").sample(rng);
                    }
                }
            }
        }
    }

    pub fn mean(&self) -> DVector<f64> {
        let mut m = DVector::zeros(self.dim);
        for (th, &w) in self.particles().zip(&self.weights) {
            for (acc, x) in m.iter_mut().zip(th) {
                *acc += w * x;
            }
        }
        m
    }

    pub fn mean_theta(&self, basis: BasisKind) -> Result<ThetaVector> {
        ThetaVector::new(basis, self.mean().iter().copied().collect())
    }

    /// Weighted covariance about the weighted mean.
    pub fn covariance(&self) -> DMatrix<f64> {
        let m = self.mean();
        let mut c = DMatrix::zeros(self.dim, self.dim);
        let mut d = vec![0.0; self.dim];
        for (th, &w) in self.particles().zip(&self.weights) {
            for k in 0..self.dim {
                d[k] = th[k] - m[k];
            }
            for i in 0..self.dim {
                let wi = w * d[i];
                for j in i..self.dim {
                    c[(i, j)] += wi * d[j];
                }
            }
        }
        for i in 0..self.dim {
            for j in 0..i {
                c[(i, j)] = c[(j, i)];
            }
        }
        c
    }

    pub fn trace(&self) -> f64 {
        let m = self.mean();
        self.particles()
            .zip(&self.weights)
            .map(|(th, &w)| {
                w * th
                    .iter()
                    .zip(m.iter())
                    .map(|(x, mu)| (x - mu).powi(2))
                    .sum::<f64>()
            })
            .sum()
    }

    /// CSV dump: `theta_1..theta_d,weight`, one particle per row.
    pub fn write_snapshot<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (1..=self.dim).map(|k| format!("theta_{k}")).collect();
        header.push("weight".into());
        w.write_record(&header)?;
        for (th, wt) in self.particles().zip(&self.weights) {
            let mut row: Vec<String> = th.iter().map(|x| x.to_string()).collect();
            row.push(wt.to_string());
            w.write_record(&row)?;
        }
        w.flush()
    }
}

/// Multiplies `weights` by the likelihood of `value` under each prediction
/// and renormalises. Returns `true` (and resets to uniform) when every
/// weight vanishes.
pub(crate) fn reweight_in_place(
    weights: &mut [f64],
    predictions: &[f64],
    value: f64,
    lik: &LikelihoodSpec,
) -> bool {
    let mut max = f64::NEG_INFINITY;
    for (w, &pred) in weights.iter_mut().zip(predictions) {
        *w = w.ln() + lik.log_likelihood(value - pred);
        if *w > max {
            max = *w;
        }
    }
    if !max.is_finite() {
        let u = 1.0 / weights.len() as f64;
        weights.iter_mut().for_each(|w| *w = u);
        return true;
    }
    let mut total = 0.0;
    for w in weights.iter_mut() {
        *w = (*w - max).exp();
        total += *w;
    }
    for w in weights.iter_mut() {
        *w /= total;
    }
    false
}

/// Ancestor indices from systematic resampling with offset `u ∈ [0, 1)`.
pub(crate) fn systematic_indices(weights: &[f64], u: f64) -> Vec<usize> {
    let n = weights.len();
    let step = 1.0 / n as f64;
    let mut out = Vec::with_capacity(n);
    let mut cum = weights[0];
    let mut j = 0;
    for k in 0..n {
        let target = (u + k as f64) * step;
        while target >= cum && j + 1 < n {
            j += 1;
            cum += weights[j];
        }
        out.push(j);
    }
    out
}
