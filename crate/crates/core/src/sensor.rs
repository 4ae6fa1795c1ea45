//! Simulated confidence-score readings and replay of logged ones.
//!
//! A detected reading is the true field value plus noise; a missed one is
//! noise alone. Noise is never clamped to `[0, 1]`.

use std::io::Read;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::domain::Position;
use crate::error::{Error, Result};
use crate::reward::RewardModel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseDistribution {
    #[default]
    Gaussian,
    /// Zero-mean uniform on `[-a, a]` with `a = sqrt(3·variance)`.
    UniformSym,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    #[serde(default)]
    pub distribution: NoiseDistribution,
    pub variance: f64,
}

impl NoiseModel {
    pub fn gaussian(variance: f64) -> Self {
        Self {
            distribution: NoiseDistribution::Gaussian,
            variance,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.variance.is_finite() && self.variance >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "noise variance must be finite and non-negative, got {}",
                self.variance
            )));
        }
        Ok(())
    }

    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.variance == 0.0 {
            // keep the stream position independent of the variance
            let _: f64 = rng.random();
            return 0.0;
        }
        match self.distribution {
            NoiseDistribution::Gaussian => Normal::new(0.0, self.std_dev())
                .expect("validated variance")
                .sample(rng),
            NoiseDistribution::UniformSym => {
                let a = (3.0 * self.variance).sqrt();
                Uniform::new_inclusive(-a, a)
                    .expect("validated variance")
                    .sample(rng)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum OcclusionModel {
    #[default]
    AlwaysDetect,
    /// Detection fails wherever the true field is below `c_min`.
    FloorThreshold { c_min: f64 },
    /// Detection fails independently with probability `p_miss`.
    Bernoulli { p_miss: f64 },
}

impl OcclusionModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            OcclusionModel::Bernoulli { p_miss } if !(0.0..=1.0).contains(&p_miss) => Err(
                Error::InvalidConfig(format!("p_miss must lie in [0, 1], got {p_miss}")),
            ),
            OcclusionModel::FloorThreshold { c_min } if !c_min.is_finite() => {
                Err(Error::NonFinite("c_min"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub value: f64,
    pub detected: bool,
    pub step: usize,
    pub position: Position,
}

/// One reading at `p`. The draws taken from `rng` do not depend on `p` or on
/// the occlusion outcome, so paired episodes see the same noise sequence.
pub fn measure<R: Rng + ?Sized>(
    model: &RewardModel,
    p: &Position,
    noise: &NoiseModel,
    occlusion: &OcclusionModel,
    step: usize,
    rng: &mut R,
) -> Measurement {
    let mu = noise.sample(rng);
    let u: f64 = rng.random();
    let truth = model.reward(p);
    let detected = match *occlusion {
        OcclusionModel::AlwaysDetect => true,
        OcclusionModel::FloorThreshold { c_min } => truth >= c_min,
        OcclusionModel::Bernoulli { p_miss } => u >= p_miss,
    };
    Measurement {
        value: if detected { truth + mu } else { mu },
        detected,
        step,
        position: *p,
    }
}

/// A logged `(position, confidence, detected)` row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Record {
    pub position: Position,
    pub value: f64,
    pub detected: bool,
}

/// Parses the dataset CSV: header `px,py,pz,confidence[,detected]`,
/// `detected` in `{0,1}` defaulting to 1. Line numbers in errors are
/// 1-based file lines.
pub fn read_records<R: Read>(input: R) -> Result<Vec<Record>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(input);
    let headers = reader
        .headers()
        .map_err(|e| Error::MalformedRecord {
            line: 1,
            reason: e.to_string(),
        })?
        .clone();
    let names: Vec<&str> = headers.iter().collect();
    let with_flag = match names.as_slice() {
        ["px", "py", "pz", "confidence"] => false,
        ["px", "py", "pz", "confidence", "detected"] => true,
        _ => {
            return Err(Error::MalformedRecord {
                line: 1,
                reason: format!(
                    "expected header px,py,pz,confidence[,detected], got {}",
                    names.join(",")
                ),
            })
        }
    };

    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::MalformedRecord {
            line: e.position().map_or(0, |p| p.line() as usize),
            reason: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let bad = |reason: String| Error::MalformedRecord { line, reason };
        let expected = if with_flag { 5 } else { 4 };
        if row.len() != expected && !(with_flag && row.len() == 4) {
            return Err(bad(format!(
                "expected {expected} fields, got {}",
                row.len()
            )));
        }
        let num = |i: usize| -> Result<f64> {
            let s = &row[i];
            let v: f64 = s
                .parse()
                .map_err(|_| bad(format!("field {} is not a number: {s:?}", i + 1)))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(bad(format!("field {} is not finite", i + 1)))
            }
        };
        let position = Position::new(num(0)?, num(1)?, num(2)?);
        let value = num(3)?;
        let detected = match row.get(4) {
            None | Some("") => true,
            Some("1") => true,
            Some("0") => false,
            Some(other) => return Err(bad(format!("detected must be 0 or 1, got {other:?}"))),
        };
        out.push(Record {
            position,
            value,
            detected,
        });
    }
    Ok(out)
}

/// Replays logged readings in file order.
#[derive(Clone, Debug)]
pub struct ReplaySource {
    records: Vec<Record>,
    next: usize,
}

impl ReplaySource {
    pub fn new(records: Vec<Record>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyRecords);
        }
        if let Some(i) = records
            .iter()
            .position(|r| !r.position.iter().all(|c| c.is_finite()))
        {
            return Err(Error::MalformedRecord {
                line: i + 1,
                reason: "position is not finite".into(),
            });
        }
        Ok(Self { records, next: 0 })
    }

    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::new(read_records(file)?)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn remaining(&self) -> usize {
        self.records.len() - self.next
    }
}

impl Iterator for ReplaySource {
    type Item = Measurement;

    fn next(&mut self) -> Option<Measurement> {
        let r = self.records.get(self.next)?;
        let m = Measurement {
            value: r.value,
            detected: r.detected,
            step: self.next,
            position: r.position,
        };
        self.next += 1;
        Some(m)
    }
}
