//! Episode loop and batch runner.
//!
//! Each episode owns one seed. Three ChaCha streams are derived from it:
//! the sensor, the estimator (prior draw and resampling) and the planner.
//! The sensor stream depends on the seed alone, so episodes that share a
//! seed see the same noise sequence whichever planner is driving.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::domain::{Action, Viewpoint};
use crate::error::{Error, Result};
use crate::estimator::ParticleEnsemble;
use crate::planner::{select_action, PlannerKind};
use crate::scenario::Scenario;
use crate::sensor::measure;

const SENSOR_STREAM: u64 = 0;
const ESTIMATOR_STREAM: u64 = 1;
const PLANNER_STREAM: u64 = 2;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Threshold,
    MaxSteps,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::Threshold => "threshold",
            Termination::MaxSteps => "max_steps",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub elev_idx: usize,
    pub azim_idx: usize,
    pub position: [f64; 3],
    pub value: f64,
    pub detected: bool,
    /// Distance to the target node.
    pub distance: f64,
    /// Trace of the posterior covariance after this step's update.
    pub variance: f64,
    pub resampled: bool,
    /// Move chosen at this step; `None` on the final record.
    pub action: Option<Action>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunMetrics {
    pub planner: &'static str,
    pub seed: u64,
    pub records: Vec<StepRecord>,
    /// Moves taken before the threshold was met; `None` if it never was.
    pub steps_to_threshold: Option<usize>,
    pub termination: Termination,
}

impl RunMetrics {
    pub fn initial_distance(&self) -> f64 {
        self.records[0].distance
    }

    pub fn final_record(&self) -> &StepRecord {
        self.records
            .last()
            .expect("episodes record at least one step")
    }
}

/// Runs one sense, estimate, plan, move episode.
pub fn run_episode(sc: &Scenario, kind: &PlannerKind, seed: u64) -> Result<RunMetrics> {
    kind.validate()?;
    let mut sensor_rng = stream(seed, SENSOR_STREAM);
    let mut est_rng = stream(seed, ESTIMATOR_STREAM);
    let mut plan_rng = stream(seed, PLANNER_STREAM);

    let basis = sc.basis();
    let target = sc.target.node.position();
    let mut ens = ParticleEnsemble::from_prior(&sc.prior, sc.particle_count, &mut est_rng)?;
    let ess_floor = sc.resample.ess_fraction * sc.particle_count as f64;
    let mut at: Viewpoint = sc.start.node;
    let mut records = Vec::with_capacity(sc.max_steps + 1);

    for k in 0..=sc.max_steps {
        let p = at.position();
        let m = measure(&sc.truth, &p, &sc.noise, &sc.occlusion, k, &mut sensor_rng);
        let outcome = ens.bayes_update(basis, &m, &sc.likelihood);
        if outcome.degenerate {
            log::debug!("seed {seed} step {k}: all likelihoods underflowed, weights kept");
        }
        let resampled = ens.effective_sample_size() < ess_floor;
        if resampled {
            ens.resample(&mut est_rng, sc.resample.roughening);
        }
        let (elev_idx, azim_idx) = at.indices();
        records.push(StepRecord {
            step: k,
            elev_idx,
            azim_idx,
            position: p.into(),
            value: m.value,
            detected: m.detected,
            distance: (p - target).norm(),
            variance: ens.trace(),
            resampled,
            action: None,
        });

        if m.detected && m.value >= sc.confidence_threshold {
            return Ok(RunMetrics {
                planner: kind.name(),
                seed,
                records,
                steps_to_threshold: Some(k),
                termination: Termination::Threshold,
            });
        }
        if k == sc.max_steps {
            break;
        }
        let choice = select_action(
            kind,
            &sc.grid,
            &at,
            &ens,
            basis,
            &sc.likelihood,
            &mut plan_rng,
        );
        records.last_mut().expect("pushed above").action = Some(choice.action);
        at = choice.successor;
    }
    Ok(RunMetrics {
        planner: kind.name(),
        seed,
        records,
        steps_to_threshold: None,
        termination: Termination::MaxSteps,
    })
}

/// Per-planner results of a batch.
#[derive(Clone, Debug, Serialize)]
pub struct PlannerSummary {
    pub planner: &'static str,
    pub runs: Vec<RunMetrics>,
    /// Per-step statistics over runs, with finished runs carrying their
    /// final values forward to the longest run's length.
    pub mean_distance: Vec<f64>,
    pub std_distance: Vec<f64>,
    pub mean_variance: Vec<f64>,
    pub std_variance: Vec<f64>,
    /// Median of `steps_to_threshold` with unfinished runs ranked last;
    /// `None` when the median falls on an unfinished run.
    pub median_steps: Option<f64>,
    pub reached: usize,
}

impl PlannerSummary {
    fn from_runs(planner: &'static str, runs: Vec<RunMetrics>) -> Self {
        let len = runs.iter().map(|r| r.records.len()).max().unwrap_or(0);
        let padded = |f: fn(&StepRecord) -> f64| -> Vec<Vec<f64>> {
            runs.iter()
                .map(|r| {
                    let last = f(r.final_record());
                    (0..len)
                        .map(|k| r.records.get(k).map(f).unwrap_or(last))
                        .collect()
                })
                .collect()
        };
        let (mean_distance, std_distance) = column_stats(&padded(|r| r.distance), len);
        let (mean_variance, std_variance) = column_stats(&padded(|r| r.variance), len);
        let steps: Vec<Option<usize>> = runs.iter().map(|r| r.steps_to_threshold).collect();
        Self {
            planner,
            median_steps: median_steps(&steps),
            reached: steps.iter().flatten().count(),
            runs,
            mean_distance,
            std_distance,
            mean_variance,
            std_variance,
        }
    }

    /// Per-run values at `step`, padded the same way as the means.
    pub fn values_at(&self, step: usize, f: fn(&StepRecord) -> f64) -> Vec<f64> {
        self.runs
            .iter()
            .map(|r| f(r.records.get(step).unwrap_or_else(|| r.final_record())))
            .collect()
    }
}

/// Sample mean and standard deviation (`n - 1` denominator, zero for a
/// single run) of each column.
fn column_stats(rows: &[Vec<f64>], len: usize) -> (Vec<f64>, Vec<f64>) {
    let n = rows.len() as f64;
    let mut mean = vec![0.0; len];
    let mut std = vec![0.0; len];
    for k in 0..len {
        let m = rows.iter().map(|r| r[k]).sum::<f64>() / n;
        let ss = rows.iter().map(|r| (r[k] - m).powi(2)).sum::<f64>();
        mean[k] = m;
        std[k] = if rows.len() > 1 {
            (ss / (n - 1.0)).sqrt()
        } else {
            0.0
        };
    }
    (mean, std)
}

pub fn median_steps(steps: &[Option<usize>]) -> Option<f64> {
    if steps.is_empty() {
        return None;
    }
    let mut v: Vec<f64> = steps
        .iter()
        .map(|s| s.map_or(f64::INFINITY, |x| x as f64))
        .collect();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let m = if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    };
    m.is_finite().then_some(m)
}

#[derive(Clone, Debug, Serialize)]
pub struct BatchReport {
    pub scenario: String,
    pub seeds: Vec<u64>,
    pub planners: Vec<PlannerSummary>,
}

impl BatchReport {
    pub fn planner(&self, name: &str) -> Option<&PlannerSummary> {
        self.planners.iter().find(|p| p.planner == name)
    }
}

/// Runs every planner on seeds `base_seed..base_seed + n_runs`. Episodes
/// run in parallel; results are gathered in seed order.
pub fn run_batch(
    sc: &Scenario,
    kinds: &[PlannerKind],
    n_runs: usize,
    base_seed: u64,
) -> Result<BatchReport> {
    if n_runs == 0 {
        return Err(Error::InvalidConfig(
            "a batch needs at least one run".into(),
        ));
    }
    if kinds.is_empty() {
        return Err(Error::InvalidConfig(
            "a batch needs at least one planner".into(),
        ));
    }
    for k in kinds {
        k.validate()?;
    }
    let seeds: Vec<u64> = (0..n_runs as u64)
        .map(|i| base_seed.wrapping_add(i))
        .collect();
    let jobs: Vec<(usize, u64)> = (0..kinds.len())
        .flat_map(|p| seeds.iter().map(move |&s| (p, s)))
        .collect();
    let results: Vec<RunMetrics> = jobs
        .par_iter()
        .map(|&(p, s)| run_episode(sc, &kinds[p], s))
        .collect::<Result<_>>()?;
    let mut results = results.into_iter();
    let planners = kinds
        .iter()
        .map(|k| PlannerSummary::from_runs(k.name(), results.by_ref().take(n_runs).collect()))
        .collect();
    Ok(BatchReport {
        scenario: sc.name.clone(),
        seeds,
        planners,
    })
}
