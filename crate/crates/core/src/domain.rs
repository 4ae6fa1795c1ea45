//! Hemispherical viewpoint lattice and the five-move action set.
//!
//! A [`GridDomain`] is a uniform elevation × azimuth lattice on a sphere.
//! Elevation rows clamp at the first and last row. Azimuth columns wrap
//! around when the azimuth range covers the full circle, and clamp at the
//! range ends otherwise.

use std::f64::consts::{FRAC_PI_2, TAU};
use std::fmt;
use std::str::FromStr;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cartesian position in metres.
pub type Position = Vector3<f64>;

const FULL_CIRCLE_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct GridDomain {
    radius: f64,
    n_elev: usize,
    n_azim: usize,
    elev_range: (f64, f64),
    azim_range: (f64, f64),
    center: Position,
    wraps: bool,
}

/// A node of a [`GridDomain`]. Only the grid hands these out, so the stored
/// position always matches the indices.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Viewpoint {
    elev_idx: usize,
    azim_idx: usize,
    position: Position,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Stay,
    Up,
    Down,
    Left,
    Right,
}

impl Action {
    pub const ALL: [Action; 5] = [
        Action::Stay,
        Action::Up,
        Action::Down,
        Action::Left,
        Action::Right,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Action::Stay => "stay",
            Action::Up => "up",
            Action::Down => "down",
            Action::Left => "left",
            Action::Right => "right",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Action {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Action::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown action {s:?}")))
    }
}

impl Viewpoint {
    pub fn elev_idx(&self) -> usize {
        self.elev_idx
    }

    pub fn azim_idx(&self) -> usize {
        self.azim_idx
    }

    pub fn position(&self) -> Position {
        self.position
    }

    pub fn indices(&self) -> (usize, usize) {
        (self.elev_idx, self.azim_idx)
    }
}

impl GridDomain {
    /// Full hemisphere: elevation rows from the equator to the pole
    /// inclusive, azimuth columns evenly spaced around the full circle.
    pub fn new(radius: f64, n_elev: usize, n_azim: usize) -> Result<Self> {
        Self::with_ranges(radius, n_elev, n_azim, (0.0, FRAC_PI_2), (0.0, TAU))
    }

    /// Lattice over explicit elevation and azimuth ranges (radians). Both
    /// elevation ends are grid rows. A full-circle azimuth range wraps and
    /// excludes its upper end; any shorter range includes both ends.
    pub fn with_ranges(
        radius: f64,
        n_elev: usize,
        n_azim: usize,
        elev_range: (f64, f64),
        azim_range: (f64, f64),
    ) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::InvalidDimension(format!(
                "radius must be positive, got {radius}"
            )));
        }
        if n_elev < 2 || n_azim < 2 {
            return Err(Error::InvalidDimension(format!(
                "need at least 2 rows and 2 columns, got {n_elev}x{n_azim}"
            )));
        }
        let (e0, e1) = elev_range;
        if !(e0.is_finite() && e1.is_finite() && e0 < e1)
            || e0 < -FRAC_PI_2 - 1e-12
            || e1 > FRAC_PI_2 + 1e-12
        {
            return Err(Error::InvalidDimension(format!(
                "elevation range [{e0}, {e1}] must be increasing within [-pi/2, pi/2]"
            )));
        }
        let (a0, a1) = azim_range;
        let span = a1 - a0;
        if !(a0.is_finite() && a1.is_finite() && span > 0.0 && span <= TAU + FULL_CIRCLE_TOL) {
            return Err(Error::InvalidDimension(format!(
                "azimuth range [{a0}, {a1}] must be increasing and span at most 2*pi"
            )));
        }
        Ok(Self {
            radius,
            n_elev,
            n_azim,
            elev_range,
            azim_range,
            center: Position::zeros(),
            wraps: (span - TAU).abs() <= FULL_CIRCLE_TOL,
        })
    }

    /// Moves the sphere centre away from the origin.
    pub fn with_center(mut self, center: Position) -> Result<Self> {
        if !center.iter().all(|c| c.is_finite()) {
            return Err(Error::NonFinite("grid center"));
        }
        self.center = center;
        Ok(self)
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn n_elev(&self) -> usize {
        self.n_elev
    }

    pub fn n_azim(&self) -> usize {
        self.n_azim
    }

    pub fn elev_range(&self) -> (f64, f64) {
        self.elev_range
    }

    pub fn azim_range(&self) -> (f64, f64) {
        self.azim_range
    }

    pub fn center(&self) -> Position {
        self.center
    }

    /// Whether azimuth moves wrap around.
    pub fn wraps(&self) -> bool {
        self.wraps
    }

    pub fn len(&self) -> usize {
        self.n_elev * self.n_azim
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn elevation(&self, elev_idx: usize) -> f64 {
        let (e0, e1) = self.elev_range;
        e0 + (e1 - e0) * elev_idx as f64 / (self.n_elev - 1) as f64
    }

    pub fn azimuth(&self, azim_idx: usize) -> f64 {
        let (a0, a1) = self.azim_range;
        if self.wraps {
            a0 + TAU * azim_idx as f64 / self.n_azim as f64
        } else {
            a0 + (a1 - a0) * azim_idx as f64 / (self.n_azim - 1) as f64
        }
    }

    pub fn to_cartesian(&self, elev_idx: usize, azim_idx: usize) -> Result<Position> {
        self.check(elev_idx, azim_idx)?;
        Ok(self.position_unchecked(elev_idx, azim_idx))
    }

    pub fn viewpoint(&self, elev_idx: usize, azim_idx: usize) -> Result<Viewpoint> {
        self.check(elev_idx, azim_idx)?;
        Ok(self.viewpoint_unchecked(elev_idx, azim_idx))
    }

    /// Row-major iteration: elevation outer, azimuth inner.
    pub fn viewpoints(&self) -> impl Iterator<Item = Viewpoint> + '_ {
        (0..self.n_elev)
            .flat_map(move |e| (0..self.n_azim).map(move |a| self.viewpoint_unchecked(e, a)))
    }

    pub fn contains(&self, v: &Viewpoint) -> bool {
        v.elev_idx < self.n_elev
            && v.azim_idx < self.n_azim
            && v.position == self.position_unchecked(v.elev_idx, v.azim_idx)
    }

    pub fn apply_action(&self, v: &Viewpoint, action: Action) -> Viewpoint {
        let (e, a) = (v.elev_idx, v.azim_idx);
        let (e, a) = match action {
            Action::Stay => (e, a),
            Action::Up => (if e + 1 < self.n_elev { e + 1 } else { e }, a),
            Action::Down => (e.saturating_sub(1), a),
            Action::Left => {
                if a > 0 {
                    (e, a - 1)
                } else if self.wraps {
                    (e, self.n_azim - 1)
                } else {
                    (e, a)
                }
            }
            Action::Right => {
                if a + 1 < self.n_azim {
                    (e, a + 1)
                } else if self.wraps {
                    (e, 0)
                } else {
                    (e, a)
                }
            }
        };
        self.viewpoint_unchecked(e, a)
    }

    /// Successor for every action, in [`Action::ALL`] order. Clamped moves
    /// keep their (duplicate) entry.
    pub fn reachable_set(&self, v: &Viewpoint) -> [(Action, Viewpoint); 5] {
        Action::ALL.map(|act| (act, self.apply_action(v, act)))
    }

    /// Closest grid node to `p` and its Euclidean distance.
    pub fn nearest(&self, p: &Position) -> (Viewpoint, f64) {
        let mut best = self.viewpoint_unchecked(0, 0);
        let mut best_d = f64::INFINITY;
        for v in self.viewpoints() {
            let d = (v.position - p).norm();
            if d < best_d {
                best_d = d;
                best = v;
            }
        }
        (best, best_d)
    }

    /// Largest great-circle distance from `v` to any of its lattice
    /// neighbours.
    pub fn neighbor_arc(&self, v: &Viewpoint) -> f64 {
        self.reachable_set(v)
            .iter()
            .map(|(_, w)| self.arc_distance(&v.position, &w.position))
            .fold(0.0, f64::max)
    }

    /// Great-circle distance between two points on this grid's sphere.
    pub fn arc_distance(&self, p: &Position, q: &Position) -> f64 {
        let u = (p - self.center).normalize();
        let w = (q - self.center).normalize();
        self.radius * u.dot(&w).clamp(-1.0, 1.0).acos()
    }

    fn check(&self, elev_idx: usize, azim_idx: usize) -> Result<()> {
        if elev_idx >= self.n_elev || azim_idx >= self.n_azim {
            return Err(Error::IndexOutOfRange {
                elev: elev_idx,
                azim: azim_idx,
                n_elev: self.n_elev,
                n_azim: self.n_azim,
            });
        }
        Ok(())
    }

    fn position_unchecked(&self, elev_idx: usize, azim_idx: usize) -> Position {
        let (se, ce) = self.elevation(elev_idx).sin_cos();
        let (sa, ca) = self.azimuth(azim_idx).sin_cos();
        self.center + self.radius * Position::new(ce * ca, ce * sa, se)
    }

    fn viewpoint_unchecked(&self, elev_idx: usize, azim_idx: usize) -> Viewpoint {
        Viewpoint {
            elev_idx,
            azim_idx,
            position: self.position_unchecked(elev_idx, azim_idx),
        }
    }
}
