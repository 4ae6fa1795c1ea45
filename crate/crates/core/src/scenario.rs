//! Scenario files: JSON configuration for a simulated search, and the
//! validated runtime form the harness consumes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{GridDomain, Position, Viewpoint};
use crate::error::{Error, Result};
use crate::estimator::{LikelihoodSpec, PriorSpec};
use crate::planner::PlannerKind;
use crate::reward::{BasisKind, RewardModel, ThetaVector};
use crate::sensor::{NoiseModel, OcclusionModel};

/// Published coefficient sets shipped with the crate.
pub mod fixtures {
    /// Six-term fit of the first simulated object.
    pub const S1_THETA6: [f64; 6] = [-0.0714, 0.0842, 0.0329, 0.0914, 0.2443, 0.0275];
    pub const S1_THETA6_MEAN_ERROR: f64 = 0.1611;

    pub const S2_THETA6: [f64; 6] = [0.0607, 0.0829, 0.0414, 0.0910, -0.2168, 0.0277];
    pub const S2_THETA6_MEAN_ERROR: f64 = 0.1755;

    /// Six-term fit of the physical-object dataset (centred on the object).
    pub const S3_THETA6: [f64; 6] = [26.447, 1.6016, 0.7485, 11.4793, -3.6871, -6.3225];
    pub const S3_THETA6_MEAN_ERROR: f64 = 0.2597;

    /// Twenty-term fit of the first simulated object.
    pub const S1_THETA20: [f64; 20] = [
        0.0, 0.0012, 7.1e-4, -0.0041, 0.0053, -4.2e-4, -0.0099, 2.7e-4, 0.0018, -0.0051, 0.0135,
        0.0971, 0.0963, 0.1102, -8.2e-5, -0.0307, 0.0167, 0.0, 0.0, 0.0,
    ];
    pub const S1_THETA20_MEAN_ERROR: f64 = 0.0627;
}

/// A named coefficient set as stored under `scenarios/`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaFixture {
    pub name: String,
    pub basis: BasisKind,
    pub theta: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_error: Option<f64>,
}

impl ThetaFixture {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        read_json(path.as_ref())
    }

    pub fn theta_vector(&self) -> Result<ThetaVector> {
        ThetaVector::new(self.basis, self.theta.clone())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub radius: f64,
    pub n_elev: usize,
    pub n_azim: usize,
    #[serde(default = "default_elev_range")]
    pub elev_range_deg: (f64, f64),
    #[serde(default = "default_azim_range")]
    pub azim_range_deg: (f64, f64),
    #[serde(default)]
    pub center: [f64; 3],
}

fn default_elev_range() -> (f64, f64) {
    (0.0, 90.0)
}

fn default_azim_range() -> (f64, f64) {
    (0.0, 360.0)
}

impl GridConfig {
    pub fn build(&self) -> Result<GridDomain> {
        let (e0, e1) = self.elev_range_deg;
        let (a0, a1) = self.azim_range_deg;
        GridDomain::with_ranges(
            self.radius,
            self.n_elev,
            self.n_azim,
            (e0.to_radians(), e1.to_radians()),
            (a0.to_radians(), a1.to_radians()),
        )?
        .with_center(Position::from(self.center))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorConfig {
    /// The same interval for every coefficient.
    Uniform((f64, f64)),
    /// One interval per coefficient.
    Bounds(Vec<(f64, f64)>),
}

impl PriorConfig {
    pub fn build(&self, dim: usize) -> Result<PriorSpec> {
        let prior = match self {
            PriorConfig::Uniform((lo, hi)) => PriorSpec::uniform(dim, *lo, *hi)?,
            PriorConfig::Bounds(b) => PriorSpec::new(b.clone())?,
        };
        if prior.dim() != dim {
            return Err(Error::InvalidBounds(format!(
                "prior has {} intervals, basis has {dim} coefficients",
                prior.dim()
            )));
        }
        Ok(prior)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResampleConfig {
    /// Resample when ESS drops below this fraction of N.
    pub ess_fraction: f64,
    pub roughening: f64,
}

impl Default for ResampleConfig {
    fn default() -> Self {
        Self {
            ess_fraction: 0.5,
            roughening: 0.01,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DceeConfig {
    pub m_samples: usize,
    pub hypothetical: bool,
}

impl Default for DceeConfig {
    fn default() -> Self {
        Self {
            m_samples: 5,
            hypothetical: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EntropyConfig {
    pub bins: usize,
    /// Histogram range; derived from the field and noise when absent.
    pub range: Option<(f64, f64)>,
    pub hypothetical: bool,
    pub m_samples: usize,
}

impl Default for EntropyConfig {
    fn default() -> Self {
        Self {
            bins: 32,
            range: None,
            hypothetical: false,
            m_samples: 5,
        }
    }
}

fn default_particles() -> usize {
    10_000
}

fn default_max_steps() -> usize {
    200
}

fn default_planner() -> String {
    "dcee".into()
}

/// Scenario file contents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub grid: GridConfig,
    pub basis: BasisKind,
    pub theta_true: Vec<f64>,
    pub noise: NoiseModel,
    #[serde(default)]
    pub occlusion: OcclusionModel,
    pub prior: PriorConfig,
    #[serde(default = "default_particles")]
    pub particle_count: usize,
    /// Defaults to the noise standard deviation.
    #[serde(default)]
    pub likelihood_sigma: Option<f64>,
    pub initial_position: [f64; 3],
    /// Defaults to the constrained optimum of the true field.
    #[serde(default)]
    pub target_position: Option<[f64; 3]>,
    /// Largest accepted distance between a configured position and the
    /// node it snaps to. Defaults to `1e-3 · radius`.
    #[serde(default)]
    pub snap_tolerance: Option<f64>,
    pub confidence_threshold: f64,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    #[serde(default)]
    pub resample: ResampleConfig,
    #[serde(default = "default_planner")]
    pub planner: String,
    #[serde(default)]
    pub dcee: DceeConfig,
    #[serde(default)]
    pub entropy: EntropyConfig,
}

impl ScenarioConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        read_json(path.as_ref())
    }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// A configured position and the grid node it was snapped to.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Snapped {
    pub requested: Position,
    pub node: Viewpoint,
    pub distance: f64,
}

/// Validated scenario, ready to run.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub grid: GridDomain,
    pub truth: RewardModel,
    pub noise: NoiseModel,
    pub occlusion: OcclusionModel,
    pub prior: PriorSpec,
    pub particle_count: usize,
    pub likelihood: LikelihoodSpec,
    pub start: Snapped,
    pub target: Snapped,
    pub confidence_threshold: f64,
    pub max_steps: usize,
    pub resample: ResampleConfig,
    pub planner: PlannerKind,
    pub dcee: DceeConfig,
    pub entropy: EntropyConfig,
}

impl Scenario {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_config(&ScenarioConfig::load(path)?)
    }

    pub fn from_config(cfg: &ScenarioConfig) -> Result<Self> {
        let grid = cfg.grid.build()?;
        let truth = RewardModel::new(ThetaVector::new(cfg.basis, cfg.theta_true.clone())?);
        cfg.noise.validate()?;
        cfg.occlusion.validate()?;
        let prior = cfg.prior.build(cfg.basis.dim())?;
        if cfg.particle_count == 0 {
            return Err(Error::InvalidConfig(
                "particle_count must be at least 1".into(),
            ));
        }
        let sigma = match cfg.likelihood_sigma {
            Some(s) => s,
            None if cfg.noise.variance > 0.0 => cfg.noise.std_dev(),
            None => {
                return Err(Error::InvalidConfig(
                    "noise-free scenarios need an explicit likelihood_sigma".into(),
                ))
            }
        };
        let likelihood = LikelihoodSpec::new(sigma)?;
        let threshold = cfg.confidence_threshold;
        if !(0.0..=1.0).contains(&threshold) {
            return Err(Error::InvalidConfig(format!(
                "confidence_threshold must lie in [0, 1], got {threshold}"
            )));
        }
        if cfg.max_steps == 0 {
            return Err(Error::InvalidConfig("max_steps must be at least 1".into()));
        }
        let rs = cfg.resample;
        if !(0.0..=1.0).contains(&rs.ess_fraction)
            || !(rs.roughening >= 0.0 && rs.roughening.is_finite())
        {
            return Err(Error::InvalidConfig(format!(
                "resample needs ess_fraction in [0, 1] and roughening >= 0, got {rs:?}"
            )));
        }

        let tol = cfg.snap_tolerance.unwrap_or(1e-3 * grid.radius());
        let start = snap(&grid, cfg.initial_position, tol, "initial_position")?;
        let target = match cfg.target_position {
            Some(p) => snap(&grid, p, tol, "target_position")?,
            None => {
                let (node, _) = truth.constrained_optimum(&grid);
                Snapped {
                    requested: node.position(),
                    node,
                    distance: 0.0,
                }
            }
        };

        let mut sc = Scenario {
            name: cfg.name.clone(),
            grid,
            truth,
            noise: cfg.noise,
            occlusion: cfg.occlusion,
            prior,
            particle_count: cfg.particle_count,
            likelihood,
            start,
            target,
            confidence_threshold: threshold,
            max_steps: cfg.max_steps,
            resample: rs,
            planner: PlannerKind::Mpc,
            dcee: cfg.dcee,
            entropy: cfg.entropy,
        };
        sc.planner = sc.planner_kind(&cfg.planner)?;
        Ok(sc)
    }

    pub fn basis(&self) -> BasisKind {
        self.truth.basis()
    }

    /// Default entropy histogram range: three noise deviations beyond zero
    /// and beyond the field maximum over the grid.
    pub fn entropy_range(&self) -> (f64, f64) {
        if let Some(r) = self.entropy.range {
            return r;
        }
        let (_, c_max) = self.truth.constrained_optimum(&self.grid);
        let s = self.noise.std_dev();
        let (lo, hi) = (-3.0 * s, c_max + 3.0 * s);
        if lo < hi {
            (lo, hi)
        } else {
            (lo - 0.5, lo + 0.5)
        }
    }

    /// Planner of the given name (`dcee`, `mpc`, `entropy`) with this
    /// scenario's hyperparameters.
    pub fn planner_kind(&self, name: &str) -> Result<PlannerKind> {
        let kind = match name.trim().to_ascii_lowercase().as_str() {
            "dcee" => PlannerKind::Dcee {
                m_samples: self.dcee.m_samples,
                hypothetical: self.dcee.hypothetical,
            },
            "mpc" => PlannerKind::Mpc,
            "entropy" => PlannerKind::Entropy {
                n_bins: self.entropy.bins,
                value_range: self.entropy_range(),
                hypothetical: self.entropy.hypothetical,
                m_samples: self.entropy.m_samples,
            },
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown planner `{other}` (expected dcee, mpc or entropy)"
                )))
            }
        };
        kind.validate()?;
        Ok(kind)
    }
}

fn snap(grid: &GridDomain, p: [f64; 3], tol: f64, what: &str) -> Result<Snapped> {
    let requested = Position::from(p);
    if !requested.iter().all(|c| c.is_finite()) {
        return Err(Error::InvalidConfig(format!("{what} is not finite")));
    }
    let (node, distance) = grid.nearest(&requested);
    if distance > tol {
        return Err(Error::InvalidConfig(format!(
            "{what} {p:?} is {distance:.3e} from the nearest grid node (tolerance {tol:.3e})"
        )));
    }
    log::debug!(
        "{what} snapped to {:?} ({distance:.3e} away)",
        node.indices()
    );
    Ok(Snapped {
        requested,
        node,
        distance,
    })
}
