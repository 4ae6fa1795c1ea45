//! Polynomial confidence field `C(p, θ) = φ(p)ᵀθ`.
//!
//! Two regressor sets are supported. Their ordering is fixed so parameter
//! tables load positionally:
//!
//! * `Full20`: `1, x³, y³, z³, xyz, x²y, x²z, y²z, y²x, z²x, z²y, x², y², z², xy, yz, xz, x, y, z`
//! * `Reduced6`: `z²y, x², y², z², yz, xz`

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::domain::{GridDomain, Position, Viewpoint};
use crate::error::{Error, Result};

/// Exponents `(a, b, c)` of `x^a y^b z^c`.
type Monomial = (u8, u8, u8);

const FULL20: [Monomial; 20] = [
    (0, 0, 0),
    (3, 0, 0),
    (0, 3, 0),
    (0, 0, 3),
    (1, 1, 1),
    (2, 1, 0),
    (2, 0, 1),
    (0, 2, 1),
    (1, 2, 0),
    (1, 0, 2),
    (0, 1, 2),
    (2, 0, 0),
    (0, 2, 0),
    (0, 0, 2),
    (1, 1, 0),
    (0, 1, 1),
    (1, 0, 1),
    (1, 0, 0),
    (0, 1, 0),
    (0, 0, 1),
];

const REDUCED6: [Monomial; 6] = [
    (0, 1, 2),
    (2, 0, 0),
    (0, 2, 0),
    (0, 0, 2),
    (0, 1, 1),
    (1, 0, 1),
];

/// Positions of the `Reduced6` regressors inside the `Full20` list.
pub const REDUCED6_IN_FULL20: [usize; 6] = [10, 11, 12, 13, 15, 16];

const FULL20_NAMES: [&str; 20] = [
    "1", "x^3", "y^3", "z^3", "xyz", "x^2y", "x^2z", "y^2z", "y^2x", "z^2x", "z^2y", "x^2", "y^2",
    "z^2", "xy", "yz", "xz", "x", "y", "z",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisKind {
    Full20,
    Reduced6,
}

impl BasisKind {
    fn monomials(self) -> &'static [Monomial] {
        match self {
            BasisKind::Full20 => &FULL20,
            BasisKind::Reduced6 => &REDUCED6,
        }
    }

    pub fn dim(self) -> usize {
        self.monomials().len()
    }

    pub fn name(self) -> &'static str {
        match self {
            BasisKind::Full20 => "full20",
            BasisKind::Reduced6 => "reduced6",
        }
    }

    /// Human-readable regressor labels, e.g. `"z^2y"`.
    pub fn term_names(self) -> Vec<&'static str> {
        match self {
            BasisKind::Full20 => FULL20_NAMES.to_vec(),
            BasisKind::Reduced6 => REDUCED6_IN_FULL20
                .iter()
                .map(|&i| FULL20_NAMES[i])
                .collect(),
        }
    }

    /// Regressor vector at `p`.
    pub fn eval(self, p: &Position) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(p, &mut out);
        out
    }

    /// Writes the regressors into `out`, which must have length `dim()`.
    pub fn eval_into(self, p: &Position, out: &mut [f64]) {
        let pw = powers(p);
        for (slot, &(a, b, c)) in out.iter_mut().zip(self.monomials()) {
            *slot = pw[0][a as usize] * pw[1][b as usize] * pw[2][c as usize];
        }
    }

    /// `∂φ_j/∂p` for every regressor, one column per regressor.
    pub fn jacobian(self, p: &Position) -> Vec<Vector3<f64>> {
        let pw = powers(p);
        self.monomials()
            .iter()
            .map(|&m| {
                let e = [m.0, m.1, m.2];
                Vector3::from_fn(|axis, _| {
                    let mut prod = 1.0;
                    for k in 0..3 {
                        let ek = e[k] as usize;
                        if k == axis {
                            if ek == 0 {
                                return 0.0;
                            }
                            prod *= ek as f64 * pw[k][ek - 1];
                        } else {
                            prod *= pw[k][ek];
                        }
                    }
                    prod
                })
            })
            .collect()
    }

    /// Second derivatives of every regressor.
    pub fn hessians(self, p: &Position) -> Vec<Matrix3<f64>> {
        let pw = powers(p);
        self.monomials()
            .iter()
            .map(|&m| {
                let e = [m.0 as usize, m.1 as usize, m.2 as usize];
                Matrix3::from_fn(|i, j| {
                    let mut d = e;
                    let mut coef = 1.0;
                    for axis in [i, j] {
                        if d[axis] == 0 {
                            return 0.0;
                        }
                        coef *= d[axis] as f64;
                        d[axis] -= 1;
                    }
                    coef * pw[0][d[0]] * pw[1][d[1]] * pw[2][d[2]]
                })
            })
            .collect()
    }
}

impl fmt::Display for BasisKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BasisKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "20" | "full20" => Ok(BasisKind::Full20),
            "6" | "reduced6" => Ok(BasisKind::Reduced6),
            other => Err(Error::InvalidConfig(format!(
                "unknown basis {other:?} (expected 6 or 20)"
            ))),
        }
    }
}

fn powers(p: &Position) -> [[f64; 4]; 3] {
    let mut out = [[1.0; 4]; 3];
    for k in 0..3 {
        for e in 1..4 {
            out[k][e] = out[k][e - 1] * p[k];
        }
    }
    out
}

/// Coefficients for one basis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ThetaRepr", into = "ThetaRepr")]
pub struct ThetaVector {
    basis: BasisKind,
    coeffs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ThetaRepr {
    basis: BasisKind,
    theta: Vec<f64>,
}

impl TryFrom<ThetaRepr> for ThetaVector {
    type Error = Error;

    fn try_from(r: ThetaRepr) -> Result<Self> {
        ThetaVector::new(r.basis, r.theta)
    }
}

impl From<ThetaVector> for ThetaRepr {
    fn from(t: ThetaVector) -> Self {
        ThetaRepr {
            basis: t.basis,
            theta: t.coeffs,
        }
    }
}

impl ThetaVector {
    pub fn new(basis: BasisKind, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != basis.dim() {
            return Err(Error::ThetaLength {
                basis: basis.name(),
                expected: basis.dim(),
                got: coeffs.len(),
            });
        }
        if !coeffs.iter().all(|c| c.is_finite()) {
            return Err(Error::NonFinite("theta"));
        }
        Ok(Self { basis, coeffs })
    }

    pub fn zeros(basis: BasisKind) -> Self {
        Self {
            basis,
            coeffs: vec![0.0; basis.dim()],
        }
    }

    pub fn basis(&self) -> BasisKind {
        self.basis
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RewardModel {
    theta: ThetaVector,
}

/// Hessian of the field at a point and whether it is negative definite.
#[derive(Clone, Debug)]
pub struct ConcavityReport {
    pub point: Position,
    pub hessian: Matrix3<f64>,
    pub eigenvalues: Vector3<f64>,
    pub negative_definite: bool,
}

impl RewardModel {
    pub fn new(theta: ThetaVector) -> Self {
        Self { theta }
    }

    pub fn from_coeffs(basis: BasisKind, coeffs: Vec<f64>) -> Result<Self> {
        ThetaVector::new(basis, coeffs).map(Self::new)
    }

    pub fn basis(&self) -> BasisKind {
        self.theta.basis
    }

    pub fn theta(&self) -> &ThetaVector {
        &self.theta
    }

    pub fn reward(&self, p: &Position) -> f64 {
        dot(&self.basis().eval(p), &self.theta.coeffs)
    }

    pub fn reward_gradient(&self, p: &Position) -> Vector3<f64> {
        self.basis()
            .jacobian(p)
            .iter()
            .zip(&self.theta.coeffs)
            .map(|(g, t)| g * *t)
            .sum()
    }

    pub fn reward_hessian(&self, p: &Position) -> Matrix3<f64> {
        self.basis()
            .hessians(p)
            .iter()
            .zip(&self.theta.coeffs)
            .map(|(h, t)| h * *t)
            .sum()
    }

    pub fn concavity_at(&self, p: &Position) -> ConcavityReport {
        let hessian = self.reward_hessian(p);
        let eigenvalues = SymmetricEigen::new(hessian).eigenvalues;
        ConcavityReport {
            point: *p,
            hessian,
            eigenvalues,
            negative_definite: eigenvalues.iter().all(|&l| l < 0.0),
        }
    }

    /// Grid node with the highest reward. Ties go to the smallest
    /// `(elev_idx, azim_idx)`.
    pub fn constrained_optimum(&self, grid: &GridDomain) -> (Viewpoint, f64) {
        let mut best: Option<(Viewpoint, f64)> = None;
        for v in grid.viewpoints() {
            let c = self.reward(&v.position());
            match best {
                Some((_, b)) if c <= b => {}
                _ => best = Some((v, c)),
            }
        }
        best.expect("grid has at least four nodes")
    }
}

/// All real stationary points of the `Reduced6` field.
///
/// Setting the gradient to zero gives `x = -θ₆z/(2θ₂)`,
/// `y = -(θ₁z² + θ₅z)/(2θ₃)` and either `z = 0` (the origin) or
/// `2θ₁²z² + 3θ₁θ₅z + θ₅² - K = 0` with `K = 4θ₃θ₄ - θ₃θ₆²/θ₂`.
pub fn stationary_points(theta: &ThetaVector) -> Result<Vec<Position>> {
    if theta.basis != BasisKind::Reduced6 {
        return Err(Error::InvalidConfig(
            "closed-form stationary points need the reduced6 basis".into(),
        ));
    }
    let t = &theta.coeffs;
    let (t1, t2, t3, t4, t5, t6) = (t[0], t[1], t[2], t[3], t[4], t[5]);
    if t1 == 0.0 || t2 == 0.0 || t3 == 0.0 {
        return Err(Error::SingularParameters(format!(
            "theta_1, theta_2 and theta_3 must be nonzero (got {t1}, {t2}, {t3})"
        )));
    }
    let point_from_z =
        |z: f64| Position::new(-t6 * z / (2.0 * t2), -(t1 * z * z + t5 * z) / (2.0 * t3), z);
    let mut pts = vec![Position::zeros()];
    let k = 4.0 * t3 * t4 - t3 * t6 * t6 / t2;
    let disc = t5 * t5 + 8.0 * k;
    if disc >= 0.0 {
        let s = disc.sqrt();
        for z in [(-3.0 * t5 + s) / (4.0 * t1), (-3.0 * t5 - s) / (4.0 * t1)] {
            let p = point_from_z(z);
            if !pts.iter().any(|q| (q - p).norm() == 0.0) {
                pts.push(p);
            }
        }
    }
    Ok(pts)
}

/// Closed-form unconstrained optimum of the `Reduced6` field: the
/// stationary point that is a strict local maximum with the largest reward,
/// or the highest-reward stationary point when none is a maximum. The
/// result may lie far outside the viewpoint domain.
pub fn unconstrained_optimum(theta: &ThetaVector) -> Result<Position> {
    let pts = stationary_points(theta)?;
    let model = RewardModel::new(theta.clone());
    let score = |p: &Position| model.reward(p);
    let maxima: Vec<Position> = pts
        .iter()
        .copied()
        .filter(|p| model.concavity_at(p).negative_definite)
        .collect();
    let pool = if maxima.is_empty() { pts } else { maxima };
    Ok(pool
        .into_iter()
        .fold(None::<Position>, |best, p| match best {
            Some(b) if score(&b) >= score(&p) => Some(b),
            _ => Some(p),
        })
        .expect("origin is always stationary"))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
