//! One-step viewpoint scoring and selection.
//!
//! Three objectives are available for a candidate successor `p'`:
//!
//! * **MPC**: `mean² + var` of the predicted field value under the current
//!   posterior.
//! * **DCEE**: the expectation, over a predicted reading `ĉ` at `p'`, of
//!   `mean² + var` under the posterior that reading would produce.
//!   Estimated by Monte Carlo with weights-only hypothetical updates.
//! * **Entropy**: Shannon entropy (nats) of the histogrammed predictive
//!   distribution of the reading at `p'`.
//!
//! `var` in the quadratic objectives is the parameter-induced spread of
//! `φ(p')ᵀθ`; measurement noise is a constant offset there and is left out.
//! Entropy draws include the noise because they describe the reading itself.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::domain::{Action, GridDomain, Position, Viewpoint};
use crate::error::{Error, Result};
use crate::estimator::{LikelihoodSpec, ParticleEnsemble};
use crate::reward::BasisKind;

/// Fewest predictive draws used by the entropy histogram.
pub const MIN_ENTROPY_DRAWS: usize = 4096;

/// Relative tolerance under which two candidate scores count as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PlannerKind {
    Dcee {
        m_samples: usize,
        hypothetical: bool,
    },
    Mpc,
    Entropy {
        n_bins: usize,
        value_range: (f64, f64),
        /// Score the entropy under hypothetical posteriors instead of the
        /// current one.
        hypothetical: bool,
        m_samples: usize,
    },
}

impl PlannerKind {
    pub fn name(&self) -> &'static str {
        match self {
            PlannerKind::Dcee { .. } => "dcee",
            PlannerKind::Mpc => "mpc",
            PlannerKind::Entropy { .. } => "entropy",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            PlannerKind::Dcee { m_samples: 0, .. } => Err(Error::InvalidConfig(
                "dcee.m_samples must be at least 1".into(),
            )),
            PlannerKind::Entropy {
                n_bins,
                value_range: (lo, hi),
                hypothetical,
                m_samples,
            } => {
                if n_bins < 2 {
                    return Err(Error::InvalidConfig(
                        "entropy.bins must be at least 2".into(),
                    ));
                }
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(Error::InvalidConfig(format!(
                        "entropy.range must satisfy lo < hi, got [{lo}, {hi}]"
                    )));
                }
                if hypothetical && m_samples == 0 {
                    return Err(Error::InvalidConfig(
                        "entropy.m_samples must be at least 1".into(),
                    ));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoredAction {
    pub action: Action,
    pub successor: Viewpoint,
    pub score: f64,
}

/// Weight-derived quantities shared by every candidate at one step.
struct Belief<'a> {
    ens: &'a ParticleEnsemble,
    log_weights: Vec<f64>,
    cumulative: Vec<f64>,
}

impl<'a> Belief<'a> {
    fn new(ens: &'a ParticleEnsemble) -> Self {
        Self {
            ens,
            log_weights: ens.weights().iter().map(|w| w.ln()).collect(),
            cumulative: cumulative(ens.weights()),
        }
    }

    /// Index of a particle drawn with probability equal to its weight.
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().expect("non-empty ensemble");
        let u = rng.random::<f64>() * total;
        self.cumulative
            .partition_point(|&c| c <= u)
            .min(self.cumulative.len() - 1)
    }

    /// Posterior weights after observing `value` at the point whose
    /// per-particle predictions are `preds`.
    fn hypothetical_weights(&self, preds: &[f64], value: f64, lik: &LikelihoodSpec) -> Vec<f64> {
        let mut w: Vec<f64> = self
            .log_weights
            .iter()
            .zip(preds)
            .map(|(lw, p)| lw + lik.log_likelihood(value - p))
            .collect();
        let max = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return self.ens.weights().to_vec();
        }
        let mut total = 0.0;
        for x in w.iter_mut() {
            *x = (*x - max).exp();
            total += *x;
        }
        w.iter_mut().for_each(|x| *x /= total);
        w
    }

    fn sample_reading<R: Rng + ?Sized>(
        &self,
        preds: &[f64],
        noise: &Normal<f64>,
        rng: &mut R,
    ) -> f64 {
        preds[self.draw(rng)] + noise.sample(rng)
    }
}

fn cumulative(weights: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    weights
        .iter()
        .map(|w| {
            acc += w;
            acc
        })
        .collect()
}

/// Weighted mean and variance of `values`.
pub fn weighted_moments(weights: &[f64], values: &[f64]) -> (f64, f64) {
    let mean: f64 = weights.iter().zip(values).map(|(w, v)| w * v).sum();
    let var: f64 = weights
        .iter()
        .zip(values)
        .map(|(w, v)| w * (v - mean).powi(2))
        .sum();
    (mean, var)
}

/// Posterior-predictive mean and parameter-induced variance of the field
/// value at `p`.
pub fn predictive_moments(ens: &ParticleEnsemble, basis: BasisKind, p: &Position) -> (f64, f64) {
    weighted_moments(ens.weights(), &ens.predictions(basis, p))
}

pub fn mpc_score(ens: &ParticleEnsemble, basis: BasisKind, p: &Position) -> f64 {
    let (mean, var) = predictive_moments(ens, basis, p);
    mean * mean + var
}

/// Predictive `(mean, var)` under `m_samples` hypothetical posteriors, each
/// conditioned on one reading drawn from the current predictive
/// distribution at `p`.
pub fn hypothetical_moments<R: Rng + ?Sized>(
    ens: &ParticleEnsemble,
    basis: BasisKind,
    p: &Position,
    lik: &LikelihoodSpec,
    m_samples: usize,
    rng: &mut R,
) -> Vec<(f64, f64)> {
    let belief = Belief::new(ens);
    let preds = ens.predictions(basis, p);
    hypothetical_moments_with(&belief, &preds, lik, m_samples, rng)
}

fn hypothetical_moments_with<R: Rng + ?Sized>(
    belief: &Belief<'_>,
    preds: &[f64],
    lik: &LikelihoodSpec,
    m_samples: usize,
    rng: &mut R,
) -> Vec<(f64, f64)> {
    let noise = Normal::new(0.0, lik.sigma).expect("validated sigma");
    (0..m_samples)
        .map(|_| {
            let c = belief.sample_reading(preds, &noise, rng);
            let w = belief.hypothetical_weights(preds, c, lik);
            weighted_moments(&w, preds)
        })
        .collect()
}

pub fn dcee_score<R: Rng + ?Sized>(
    ens: &ParticleEnsemble,
    basis: BasisKind,
    p: &Position,
    lik: &LikelihoodSpec,
    m_samples: usize,
    hypothetical: bool,
    rng: &mut R,
) -> f64 {
    let belief = Belief::new(ens);
    let preds = ens.predictions(basis, p);
    dcee_with(&belief, &preds, lik, m_samples, hypothetical, rng)
}

fn dcee_with<R: Rng + ?Sized>(
    belief: &Belief<'_>,
    preds: &[f64],
    lik: &LikelihoodSpec,
    m_samples: usize,
    hypothetical: bool,
    rng: &mut R,
) -> f64 {
    if !hypothetical {
        let (mean, var) = weighted_moments(belief.ens.weights(), preds);
        return mean * mean + var;
    }
    let samples = hypothetical_moments_with(belief, preds, lik, m_samples, rng);
    samples.iter().map(|(m, v)| m * m + v).sum::<f64>() / samples.len() as f64
}

/// Entropy of the predictive reading distribution at `p`, from
/// `max(N, 4096)` draws binned into `n_bins` equal bins over
/// `value_range`. Draws outside the range are dropped before normalising.
pub fn entropy_score<R: Rng + ?Sized>(
    ens: &ParticleEnsemble,
    basis: BasisKind,
    p: &Position,
    lik: &LikelihoodSpec,
    n_bins: usize,
    value_range: (f64, f64),
    rng: &mut R,
) -> f64 {
    let belief = Belief::new(ens);
    let preds = ens.predictions(basis, p);
    entropy_with(&belief.cumulative, &preds, lik, n_bins, value_range, rng)
}

fn entropy_with<R: Rng + ?Sized>(
    cum: &[f64],
    preds: &[f64],
    lik: &LikelihoodSpec,
    n_bins: usize,
    (lo, hi): (f64, f64),
    rng: &mut R,
) -> f64 {
    let noise = Normal::new(0.0, lik.sigma).expect("validated sigma");
    let draws = cum.len().max(MIN_ENTROPY_DRAWS);
    let total = *cum.last().expect("non-empty ensemble");
    let width = (hi - lo) / n_bins as f64;
    let mut counts = vec![0usize; n_bins];
    let mut kept = 0usize;
    for _ in 0..draws {
        let u = rng.random::<f64>() * total;
        let i = cum.partition_point(|&c| c <= u).min(cum.len() - 1);
        let c = preds[i] + noise.sample(rng);
        if c < lo || c > hi {
            continue;
        }
        let b = (((c - lo) / width) as usize).min(n_bins - 1);
        counts[b] += 1;
        kept += 1;
    }
    if kept == 0 {
        return 0.0;
    }
    let n = kept as f64;
    counts
        .iter()
        .filter(|&&k| k > 0)
        .map(|&k| {
            let q = k as f64 / n;
            -q * q.ln()
        })
        .sum()
}

/// Scores one candidate with a dedicated random stream.
fn score_candidate(
    kind: &PlannerKind,
    belief: &Belief<'_>,
    basis: BasisKind,
    p: &Position,
    lik: &LikelihoodSpec,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let preds = belief.ens.predictions(basis, p);
    match *kind {
        PlannerKind::Mpc => dcee_with(belief, &preds, lik, 1, false, rng),
        PlannerKind::Dcee {
            m_samples,
            hypothetical,
        } => dcee_with(belief, &preds, lik, m_samples, hypothetical, rng),
        PlannerKind::Entropy {
            n_bins,
            value_range,
            hypothetical,
            m_samples,
        } => {
            if !hypothetical {
                return entropy_with(&belief.cumulative, &preds, lik, n_bins, value_range, rng);
            }
            let noise = Normal::new(0.0, lik.sigma).expect("validated sigma");
            let mut acc = 0.0;
            for _ in 0..m_samples {
                let c = belief.sample_reading(&preds, &noise, rng);
                let cum = cumulative(&belief.hypothetical_weights(&preds, c, lik));
                acc += entropy_with(&cum, &preds, lik, n_bins, value_range, rng);
            }
            acc / m_samples as f64
        }
    }
}

/// Scores every successor of `current`. Each successor node gets its own
/// random stream derived from one draw of `rng`, so identical successors
/// (clamped moves) score identically and results do not depend on the
/// evaluation order.
pub fn score_candidates<R: Rng + ?Sized>(
    kind: &PlannerKind,
    grid: &GridDomain,
    current: &Viewpoint,
    ens: &ParticleEnsemble,
    basis: BasisKind,
    lik: &LikelihoodSpec,
    rng: &mut R,
) -> [ScoredAction; 5] {
    let step_seed: u64 = rng.random();
    let belief = Belief::new(ens);
    grid.reachable_set(current).map(|(action, successor)| {
        let mut sub = ChaCha8Rng::seed_from_u64(step_seed);
        let (e, a) = successor.indices();
        sub.set_stream((e * grid.n_azim() + a) as u64);
        let score = score_candidate(kind, &belief, basis, &successor.position(), lik, &mut sub);
        ScoredAction {
            action,
            successor,
            score,
        }
    })
}

/// Argmax over the five successors; scores within a relative
/// [`TIE_TOLERANCE`] of the best are tied and one is picked uniformly.
pub fn select_action<R: Rng + ?Sized>(
    kind: &PlannerKind,
    grid: &GridDomain,
    current: &Viewpoint,
    ens: &ParticleEnsemble,
    basis: BasisKind,
    lik: &LikelihoodSpec,
    rng: &mut R,
) -> ScoredAction {
    let scored = score_candidates(kind, grid, current, ens, basis, lik, rng);
    pick_best(&scored, rng)
}

pub(crate) fn pick_best<R: Rng + ?Sized>(scored: &[ScoredAction], rng: &mut R) -> ScoredAction {
    let best = scored
        .iter()
        .map(|s| s.score)
        .fold(f64::NEG_INFINITY, f64::max);
    let tol = TIE_TOLERANCE * best.abs();
    let tied: Vec<&ScoredAction> = scored.iter().filter(|s| best - s.score <= tol).collect();
    let pick = if tied.len() == 1 {
        0
    } else {
        rng.random_range(0..tied.len())
    };
    *tied[pick]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::PriorSpec;
    use approx::assert_abs_diff_eq;

    fn point_mass(theta: &[f64]) -> ParticleEnsemble {
        ParticleEnsemble::from_parts(theta.len(), theta.to_vec(), vec![1.0]).unwrap()
    }

    fn mirrored(theta: &[f64]) -> ParticleEnsemble {
        let mut parts = theta.to_vec();
        parts.extend(theta.iter().map(|x| -x));
        ParticleEnsemble::from_parts(theta.len(), parts, vec![1.0, 1.0]).unwrap()
    }

    const S1: [f64; 6] = [-0.0714, 0.0842, 0.0329, 0.0914, 0.2443, 0.0275];

    #[test]
    fn point_mass_moments() {
        let e = point_mass(&S1);
        let p = Position::new(1.0, -2.0, 1.5);
        let (m, v) = predictive_moments(&e, BasisKind::Reduced6, &p);
        let phi = BasisKind::Reduced6.eval(&p);
        let truth: f64 = phi.iter().zip(&S1).map(|(a, b)| a * b).sum();
        assert_eq!(v, 0.0);
        assert_abs_diff_eq!(m, truth, epsilon = 1e-15);
        assert_abs_diff_eq!(
            mpc_score(&e, BasisKind::Reduced6, &p),
            truth * truth,
            epsilon = 1e-15
        );
    }

    #[test]
    fn mirrored_pair_moments() {
        let e = mirrored(&S1);
        let p = Position::new(0.5, 2.0, 2.0);
        let phi = BasisKind::Reduced6.eval(&p);
        let f: f64 = phi.iter().zip(&S1).map(|(a, b)| a * b).sum();
        let (m, v) = predictive_moments(&e, BasisKind::Reduced6, &p);
        assert_abs_diff_eq!(m, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v, f * f, epsilon = 1e-14);
        assert_abs_diff_eq!(
            mpc_score(&e, BasisKind::Reduced6, &p),
            f * f,
            epsilon = 1e-14
        );
    }

    #[test]
    fn prior_predictive_variance_at_the_pole() {
        // only the z^2 term survives at [0, 0, 3]: var = 81 * (6^2 / 12)
        let prior = PriorSpec::uniform(6, -3.0, 3.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let e = ParticleEnsemble::from_prior(&prior, 100_000, &mut rng).unwrap();
        let (_, v) = predictive_moments(&e, BasisKind::Reduced6, &Position::new(0.0, 0.0, 3.0));
        assert!((v / 243.0 - 1.0).abs() < 0.05, "{v}");
    }

    #[test]
    fn dcee_cannot_move_a_point_mass() {
        let e = point_mass(&S1);
        let lik = LikelihoodSpec::new(0.7).unwrap();
        let p = Position::new(2.0, 1.0, 1.8);
        let expect = mpc_score(&e, BasisKind::Reduced6, &p);
        for m in [1, 5, 50] {
            let mut rng = ChaCha8Rng::seed_from_u64(m as u64);
            let s = dcee_score(&e, BasisKind::Reduced6, &p, &lik, m, true, &mut rng);
            assert_abs_diff_eq!(s, expect, epsilon = 1e-14);
        }
    }

    #[test]
    fn dcee_without_hypothetical_is_mpc() {
        let prior = PriorSpec::uniform(6, -1.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let e = ParticleEnsemble::from_prior(&prior, 1000, &mut rng).unwrap();
        let lik = LikelihoodSpec::new(0.7).unwrap();
        let p = Position::new(1.0, 1.0, 2.0);
        let s = dcee_score(&e, BasisKind::Reduced6, &p, &lik, 5, false, &mut rng);
        assert_eq!(s, mpc_score(&e, BasisKind::Reduced6, &p));
    }

    #[test]
    fn mpc_matches_direct_summation() {
        let prior = PriorSpec::uniform(6, -3.0, 3.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut e = ParticleEnsemble::from_prior(&prior, 2000, &mut rng).unwrap();
        e.bayes_update(
            BasisKind::Reduced6,
            &crate::sensor::Measurement {
                value: 0.5,
                detected: true,
                step: 0,
                position: Position::new(1.0, 2.0, 2.0),
            },
            &LikelihoodSpec::new(3.0).unwrap(),
        );
        let p = Position::new(-1.0, 2.0, 2.0);
        // oracle: explicit loops over particles, no shared helpers
        let (x, y, z) = (p[0], p[1], p[2]);
        let phi = [z * z * y, x * x, y * y, z * z, y * z, x * z];
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        for (th, w) in e.particles().zip(e.weights()) {
            let mut f = 0.0;
            for k in 0..6 {
                f += phi[k] * th[k];
            }
            s1 += w * f;
            s2 += w * f * f;
        }
        let direct = s1 * s1 + (s2 - s1 * s1);
        assert_abs_diff_eq!(
            mpc_score(&e, BasisKind::Reduced6, &p),
            direct,
            epsilon = 1e-9
        );
    }

    #[test]
    fn entropy_of_point_mass_is_zero() {
        let e = point_mass(&S1);
        let lik = LikelihoodSpec::new(1e-9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let h = entropy_score(
            &e,
            BasisKind::Reduced6,
            &Position::new(1.0, 1.0, 1.0),
            &lik,
            16,
            (-3.0, 3.0),
            &mut rng,
        );
        assert_eq!(h, 0.0);
    }

    #[test]
    fn entropy_of_uniform_predictions_is_log_bins() {
        // predictions at (1,0,0) equal theta_2, spread evenly over [0, 1)
        let n = 8000;
        let mut parts = vec![0.0; 6 * n];
        for i in 0..n {
            parts[6 * i + 1] = (i as f64 + 0.5) / n as f64;
        }
        let e = ParticleEnsemble::from_parts(6, parts, vec![1.0; n]).unwrap();
        let lik = LikelihoodSpec::new(1e-9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let bins = 10;
        let h = entropy_score(
            &e,
            BasisKind::Reduced6,
            &Position::new(1.0, 0.0, 0.0),
            &lik,
            bins,
            (0.0, 1.0),
            &mut rng,
        );
        assert!((h - (bins as f64).ln()).abs() < 0.01, "{h}");
    }

    #[test]
    fn entropy_of_gaussian_matches_discretised_differential_entropy() {
        // point-mass parameters, unit likelihood noise: predictive N(c, 1)
        let n = 20_000;
        let e = ParticleEnsemble::from_parts(6, S1.repeat(n), vec![1.0; n]).unwrap();
        let p = Position::new(1.0, 1.0, 1.0);
        let c: f64 = S1.iter().sum();
        let lik = LikelihoodSpec::new(1.0).unwrap();
        let w: f64 = 0.05;
        let half = 8.0;
        let bins = (2.0 * half / w).round() as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let h = entropy_score(
            &e,
            BasisKind::Reduced6,
            &p,
            &lik,
            bins,
            (c - half, c + half),
            &mut rng,
        );
        let expect = 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln() - w.ln();
        assert!((h - expect).abs() < 0.05, "{h} vs {expect}");
    }

    #[test]
    fn tie_break_is_uniform() {
        let g = GridDomain::new(3.0, 11, 12).unwrap();
        let v = g.viewpoint(5, 3).unwrap();
        let succ = g.reachable_set(&v);
        let scored: Vec<ScoredAction> = succ
            .iter()
            .enumerate()
            .map(|(i, &(action, successor))| ScoredAction {
                action,
                successor,
                score: if i == 3 || i == 4 { 2.0 } else { 1.0 },
            })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let reps = 10_000;
        let lefts = (0..reps)
            .filter(|_| pick_best(&scored, &mut rng).action == Action::Left)
            .count();
        let frac = lefts as f64 / reps as f64;
        assert!(
            (frac - 0.5).abs() < 3.0 * (0.25f64 / reps as f64).sqrt(),
            "{frac}"
        );
        assert!((0..100).all(|_| pick_best(&scored, &mut rng).action != Action::Stay));
    }

    #[test]
    fn planner_validation() {
        assert!(PlannerKind::Dcee {
            m_samples: 0,
            hypothetical: true
        }
        .validate()
        .is_err());
        assert!(PlannerKind::Entropy {
            n_bins: 1,
            value_range: (0.0, 1.0),
            hypothetical: false,
            m_samples: 1
        }
        .validate()
        .is_err());
        assert!(PlannerKind::Entropy {
            n_bins: 8,
            value_range: (1.0, 1.0),
            hypothetical: false,
            m_samples: 1
        }
        .validate()
        .is_err());
        assert!(PlannerKind::Mpc.validate().is_ok());
    }
}
