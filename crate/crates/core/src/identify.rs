//! Offline least-squares identification of field coefficients from
//! `(position, confidence)` samples, plus magnitude-based basis pruning.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::domain::Position;
use crate::error::{Error, Result};
use crate::reward::{BasisKind, RewardModel, ThetaVector, REDUCED6_IN_FULL20};
use crate::sensor::read_records;

/// Largest design-matrix condition number accepted by the fit.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub samples: Vec<(Position, f64)>,
    pub source: String,
}

impl Dataset {
    pub fn new(samples: Vec<(Position, f64)>, source: impl Into<String>) -> Self {
        Self {
            samples,
            source: source.into(),
        }
    }

    /// Noise-free samples of `model` at every node of `points`.
    pub fn synthetic<'a>(
        model: &RewardModel,
        points: impl IntoIterator<Item = &'a Position>,
        tag: impl Into<String>,
    ) -> Self {
        let samples = points.into_iter().map(|p| (*p, model.reward(p))).collect();
        Self::new(samples, tag)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Reads a dataset CSV. Rows flagged `detected = 0` are dropped.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let samples: Vec<(Position, f64)> = read_records(file)?
        .into_iter()
        .filter(|r| r.detected)
        .map(|r| (r.position, r.value))
        .collect();
    if samples.is_empty() {
        return Err(Error::InsufficientRows { needed: 1, got: 0 });
    }
    Ok(Dataset::new(samples, path.display().to_string()))
}

#[derive(Clone, Debug, Serialize)]
pub struct FitReport {
    pub basis: BasisKind,
    pub theta: Vec<f64>,
    pub terms: Vec<&'static str>,
    /// Mean absolute residual over all samples.
    pub mean_error: f64,
    pub condition_number: f64,
    /// `predicted - observed` per sample, in dataset order.
    pub residuals: Vec<f64>,
    pub samples: usize,
    pub source: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pruning: Option<PruneReport>,
}

impl FitReport {
    pub fn theta_vector(&self) -> ThetaVector {
        ThetaVector::new(self.basis, self.theta.clone()).expect("fit produces a well-formed theta")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PruneReport {
    pub floor: f64,
    /// 0-based indices of `full20` coefficients with `|θ| >= floor`.
    pub kept: Vec<usize>,
    pub kept_terms: Vec<&'static str>,
    /// Slot of each kept index in the `reduced6` basis, if it has one.
    pub reduced6_slots: Vec<Option<usize>>,
    /// Whether the kept set is exactly the `reduced6` regressors.
    pub matches_reduced6: bool,
    /// The `full20` coefficients at the `reduced6` positions.
    pub reduced6_theta: Vec<f64>,
}

fn design_matrix(ds: &Dataset, basis: BasisKind) -> DMatrix<f64> {
    let d = basis.dim();
    let mut x = DMatrix::zeros(ds.len(), d);
    let mut row = vec![0.0; d];
    for (i, (p, _)) in ds.samples.iter().enumerate() {
        basis.eval_into(p, &mut row);
        for (j, v) in row.iter().enumerate() {
            x[(i, j)] = *v;
        }
    }
    x
}

/// Ordinary least squares through an SVD of the design matrix.
pub fn fit_least_squares(ds: &Dataset, basis: BasisKind) -> Result<FitReport> {
    let d = basis.dim();
    if ds.len() < d {
        return Err(Error::InsufficientRows {
            needed: d,
            got: ds.len(),
        });
    }
    let x = design_matrix(ds, basis);
    let y = DVector::from_iterator(ds.len(), ds.samples.iter().map(|(_, c)| *c));
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = if smin > 0.0 {
        smax / smin
    } else {
        f64::INFINITY
    };
    if condition > MAX_CONDITION {
        return Err(Error::RankDeficient { condition });
    }
    let theta = svd
        .solve(&y, 0.0)
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let residuals: Vec<f64> = (&x * &theta - &y).iter().copied().collect();
    let mean_error = residuals.iter().map(|r| r.abs()).sum::<f64>() / residuals.len() as f64;
    Ok(FitReport {
        basis,
        theta: theta.iter().copied().collect(),
        terms: basis.term_names(),
        mean_error,
        condition_number: condition,
        residuals,
        samples: ds.len(),
        source: ds.source.clone(),
        pruning: None,
    })
}

/// Keeps the `full20` coefficients whose magnitude reaches `floor` and
/// relates them to the fixed six-term regressor set.
pub fn prune_basis(report: &FitReport, floor: f64) -> Result<PruneReport> {
    prune_theta(&report.theta_vector(), floor)
}

pub fn prune_theta(theta: &ThetaVector, floor: f64) -> Result<PruneReport> {
    if theta.basis() != BasisKind::Full20 {
        return Err(Error::InvalidConfig(
            "pruning starts from a full20 fit".into(),
        ));
    }
    let names = BasisKind::Full20.term_names();
    let coeffs = theta.as_slice();
    let kept: Vec<usize> = coeffs
        .iter()
        .enumerate()
        .filter(|(_, c)| c.abs() >= floor)
        .map(|(i, _)| i)
        .collect();
    let reduced6_slots = kept
        .iter()
        .map(|i| REDUCED6_IN_FULL20.iter().position(|j| j == i))
        .collect();
    Ok(PruneReport {
        floor,
        kept_terms: kept.iter().map(|&i| names[i]).collect(),
        matches_reduced6: kept == REDUCED6_IN_FULL20,
        kept,
        reduced6_slots,
        reduced6_theta: REDUCED6_IN_FULL20.iter().map(|&i| coeffs[i]).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::GridDomain;
    use crate::scenario::fixtures;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn sphere_points() -> Vec<Position> {
        GridDomain::new(3.0, 11, 21)
            .unwrap()
            .viewpoints()
            .map(|v| v.position())
            .collect()
    }

    fn s1() -> RewardModel {
        RewardModel::from_coeffs(BasisKind::Reduced6, fixtures::S1_THETA6.to_vec()).unwrap()
    }

    #[test]
    fn recovers_noiseless_reduced6() {
        let pts = sphere_points();
        assert_eq!(pts.len(), 231);
        let ds = Dataset::synthetic(&s1(), &pts, "s1");
        let fit = fit_least_squares(&ds, BasisKind::Reduced6).unwrap();
        for (a, b) in fit.theta.iter().zip(fixtures::S1_THETA6) {
            assert!((a - b).abs() <= 1e-8);
        }
        assert!(fit.mean_error <= 1e-10);
        assert_eq!(fit.residuals.len(), 231);
    }

    #[test]
    fn least_squares_is_unbiased_under_noise() {
        let pts = sphere_points();
        let clean = Dataset::synthetic(&s1(), &pts, "s1");
        let noise = Normal::new(0.0, 0.01).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let reps = 100;
        let mut draws: Vec<Vec<f64>> = (0..6).map(|_| Vec::with_capacity(reps)).collect();
        for _ in 0..reps {
            let mut ds = clean.clone();
            for s in ds.samples.iter_mut() {
                s.1 += noise.sample(&mut rng);
            }
            let fit = fit_least_squares(&ds, BasisKind::Reduced6).unwrap();
            for (k, t) in fit.theta.iter().enumerate() {
                draws[k].push(*t);
            }
        }
        for (k, xs) in draws.iter().enumerate() {
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            let se = sd / n.sqrt();
            assert!(
                (mean - fixtures::S1_THETA6[k]).abs() <= 3.0 * se,
                "coef {k}: {mean} vs {}",
                fixtures::S1_THETA6[k]
            );
        }
    }

    #[test]
    fn constant_data_fits_constant_term() {
        // a solid box of points keeps the 20 monomials independent
        let mut samples = Vec::new();
        for i in 0..5 {
            for j in 0..5 {
                for k in 0..5 {
                    let p = Position::new(i as f64 - 2.0, j as f64 * 0.5 - 1.0, k as f64 * 0.7);
                    samples.push((p, 0.42));
                }
            }
        }
        let fit = fit_least_squares(&Dataset::new(samples, "box"), BasisKind::Full20).unwrap();
        assert!((fit.theta[0] - 0.42).abs() <= 1e-8);
        assert!(fit.theta[1..].iter().all(|t| t.abs() <= 1e-8));
    }

    #[test]
    fn full20_on_a_sphere_is_rank_deficient() {
        let ds = Dataset::synthetic(&s1(), &sphere_points(), "s1");
        assert!(matches!(
            fit_least_squares(&ds, BasisKind::Full20),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn too_few_rows() {
        let ds = Dataset::new(vec![(Position::new(1.0, 0.0, 0.0), 0.1); 3], "three");
        assert!(matches!(
            fit_least_squares(&ds, BasisKind::Reduced6),
            Err(Error::InsufficientRows { needed: 6, got: 3 })
        ));
    }

    #[test]
    fn load_dataset_skips_missed_detections() {
        use std::io::Write;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s1.csv");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "px,py,pz,confidence,detected").unwrap();
        for p in sphere_points() {
            writeln!(f, "{},{},{},{},1", p.x, p.y, p.z, s1().reward(&p)).unwrap();
        }
        writeln!(f, "0,0,3,0.7,0").unwrap();
        drop(f);
        let ds = load_dataset(&path).unwrap();
        assert_eq!(ds.len(), 231);
        assert_eq!(ds.source, path.display().to_string());

        std::fs::write(
            &path,
            "px,py,pz,confidence\n1,0,0,0.1\n0,1,0,0.2\n0,0,1,0.3\n",
        )
        .unwrap();
        let ds = load_dataset(&path).unwrap();
        assert!(matches!(
            fit_least_squares(&ds, BasisKind::Reduced6),
            Err(Error::InsufficientRows { needed: 6, got: 3 })
        ));
        assert!(load_dataset(dir.path().join("missing.csv")).is_err());
    }

    #[test]
    fn prune_published_full_fit() {
        let theta = ThetaVector::new(BasisKind::Full20, fixtures::S1_THETA20.to_vec()).unwrap();
        let at_002 = prune_theta(&theta, 0.02).unwrap();
        // 1-based theta_12, theta_13, theta_14, theta_16
        assert_eq!(at_002.kept, vec![11, 12, 13, 15]);
        assert_eq!(at_002.kept_terms, vec!["x^2", "y^2", "z^2", "yz"]);
        assert!(!at_002.matches_reduced6);
        let at_001 = prune_theta(&theta, 0.01).unwrap();
        assert_eq!(at_001.kept, REDUCED6_IN_FULL20.to_vec());
        assert!(at_001.matches_reduced6);
        assert_eq!(at_001.reduced6_slots, (0..6).map(Some).collect::<Vec<_>>());
    }

    #[test]
    fn prune_degenerate_inputs() {
        let zero = ThetaVector::zeros(BasisKind::Full20);
        assert!(prune_theta(&zero, 0.01).unwrap().kept.is_empty());
        let mut e1 = vec![0.0; 20];
        e1[0] = 1.0;
        let e1 = ThetaVector::new(BasisKind::Full20, e1).unwrap();
        let r = prune_theta(&e1, 0.5).unwrap();
        assert_eq!(r.kept, vec![0]);
        assert_eq!(r.kept_terms, vec!["1"]);
        assert_eq!(r.reduced6_slots, vec![None]);
        assert!(prune_theta(&ThetaVector::zeros(BasisKind::Reduced6), 0.1).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn theta6() -> impl Strategy<Value = Vec<f64>> {
            proptest::collection::vec(-2.0f64..2.0, 6)
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn refitting_predictions_is_idempotent(t in theta6()) {
                let model = RewardModel::from_coeffs(BasisKind::Reduced6, t.clone()).unwrap();
                let ds = Dataset::synthetic(&model, &sphere_points(), "p");
                let fit = fit_least_squares(&ds, BasisKind::Reduced6).unwrap();
                for (a, b) in fit.theta.iter().zip(&t) {
                    prop_assert!((a - b).abs() <= 1e-10);
                }
            }

            #[test]
            fn residuals_orthogonal_to_columns(t in theta6(), seed in any::<u64>()) {
                let model = RewardModel::from_coeffs(BasisKind::Reduced6, t).unwrap();
                let mut ds = Dataset::synthetic(&model, &sphere_points(), "p");
                let noise = Normal::new(0.0, 0.1).unwrap();
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                for s in ds.samples.iter_mut() {
                    s.1 += noise.sample(&mut rng);
                }
                let fit = fit_least_squares(&ds, BasisKind::Reduced6).unwrap();
                let x = design_matrix(&ds, BasisKind::Reduced6);
                let r = DVector::from_vec(fit.residuals.clone());
                let g = x.transpose() * r;
                prop_assert!(g.amax() <= 1e-8);
            }

            #[test]
            fn scaling_data_scales_theta(t in theta6(), s in -5.0f64..5.0) {
                let model = RewardModel::from_coeffs(BasisKind::Reduced6, t).unwrap();
                let ds = Dataset::synthetic(&model, &sphere_points(), "p");
                let mut scaled = ds.clone();
                scaled.samples.iter_mut().for_each(|x| x.1 *= s);
                let a = fit_least_squares(&ds, BasisKind::Reduced6).unwrap();
                let b = fit_least_squares(&scaled, BasisKind::Reduced6).unwrap();
                for (x, y) in a.theta.iter().zip(&b.theta) {
                    prop_assert!((x * s - y).abs() <= 1e-9 * (1.0 + y.abs()));
                }
            }
        }
    }
}
