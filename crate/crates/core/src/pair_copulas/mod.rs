//! Bivariate copula families with rotations: distribution function, density,
//! h-functions and their inverses, Kendall's τ maps and maximum-likelihood
//! fitting with AIC-based family selection.

mod families;
mod fit;
mod tau;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use fit::{candidates_for, default_candidates, fit_pair, Candidate, PairFit};
pub use tau::param_of_tau;

/// Arguments are clipped into `[CLIP, 1 − CLIP]` before evaluating densities
/// and h-functions.
pub const CLIP: f64 = 1e-10;

#[inline]
pub(crate) fn clip(u: f64) -> f64 {
    u.clamp(CLIP, 1.0 - CLIP)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Independence,
    Gaussian,
    Clayton,
    Gumbel,
    Frank,
    Joe,
}

impl Family {
    pub const ALL: [Family; 6] = [
        Family::Independence,
        Family::Gaussian,
        Family::Clayton,
        Family::Gumbel,
        Family::Frank,
        Family::Joe,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Independence => "independence",
            Family::Gaussian => "gaussian",
            Family::Clayton => "clayton",
            Family::Gumbel => "gumbel",
            Family::Frank => "frank",
            Family::Joe => "joe",
        }
    }

    pub fn n_params(self) -> usize {
        match self {
            Family::Independence => 0,
            _ => 1,
        }
    }

    /// Families that only model positive dependence and therefore come with
    /// rotated versions.
    pub fn is_rotatable(self) -> bool {
        matches!(self, Family::Clayton | Family::Gumbel | Family::Joe)
    }

    pub fn rotations(self) -> &'static [Rotation] {
        if self.is_rotatable() {
            &Rotation::ALL
        } else {
            &[Rotation::R0]
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        Family::ALL
            .into_iter()
            .find(|f| f.name() == lower)
            .ok_or_else(|| Error::Config(format!("unknown copula family '{s}'")))
    }
}

/// Counter-clockwise rotation of a copula density, in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u16", into = "u16")]
pub enum Rotation {
    R0,
    R90,
    R180,
    R270,
}

impl Rotation {
    pub const ALL: [Rotation; 4] = [Rotation::R0, Rotation::R90, Rotation::R180, Rotation::R270];

    pub fn degrees(self) -> u16 {
        match self {
            Rotation::R0 => 0,
            Rotation::R90 => 90,
            Rotation::R180 => 180,
            Rotation::R270 => 270,
        }
    }

    pub fn from_degrees(deg: u16) -> Result<Self> {
        match deg {
            0 => Ok(Rotation::R0),
            90 => Ok(Rotation::R90),
            180 => Ok(Rotation::R180),
            270 => Ok(Rotation::R270),
            other => Err(Error::Domain(format!("unsupported rotation {other}"))),
        }
    }

    /// Whether the rotation flips the sign of dependence.
    pub fn negates(self) -> bool {
        matches!(self, Rotation::R90 | Rotation::R270)
    }
}

impl From<Rotation> for u16 {
    fn from(r: Rotation) -> u16 {
        r.degrees()
    }
}

impl TryFrom<u16> for Rotation {
    type Error = Error;

    fn try_from(deg: u16) -> Result<Self> {
        Rotation::from_degrees(deg)
    }
}

/// A bivariate copula: family, rotation and parameter.
///
/// `theta` is the Gaussian correlation for [`Family::Gaussian`] and is unused
/// (stored as 0) for [`Family::Independence`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PairCopulaRepr", into = "PairCopulaRepr")]
pub struct PairCopula {
    family: Family,
    rotation: Rotation,
    theta: f64,
}

#[derive(Serialize, Deserialize)]
struct PairCopulaRepr {
    family: Family,
    rotation: u16,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    theta: Option<f64>,
}

impl From<PairCopula> for PairCopulaRepr {
    fn from(c: PairCopula) -> Self {
        PairCopulaRepr {
            family: c.family,
            rotation: c.rotation.degrees(),
            theta: (c.family != Family::Independence).then_some(c.theta),
        }
    }
}

impl TryFrom<PairCopulaRepr> for PairCopula {
    type Error = Error;

    fn try_from(r: PairCopulaRepr) -> Result<Self> {
        let rotation = Rotation::from_degrees(r.rotation)?;
        match (r.family, r.theta) {
            (Family::Independence, _) => PairCopula::new(Family::Independence, rotation, 0.0),
            (family, Some(theta)) => PairCopula::new(family, rotation, theta),
            (family, None) => Err(Error::Domain(format!("{family} copula needs a parameter"))),
        }
    }
}

impl PairCopula {
    pub fn new(family: Family, rotation: Rotation, theta: f64) -> Result<Self> {
        if !family.is_rotatable() && rotation != Rotation::R0 {
            return Err(Error::Domain(format!(
                "{family} copula admits no rotation (got {})",
                rotation.degrees()
            )));
        }
        let ok = match family {
            Family::Independence => true,
            Family::Gaussian => theta > -1.0 && theta < 1.0,
            Family::Clayton => theta > 0.0 && theta.is_finite(),
            Family::Gumbel => theta >= 1.0 && theta.is_finite(),
            Family::Frank => theta != 0.0 && theta.is_finite(),
            Family::Joe => theta > 1.0 && theta.is_finite(),
        };
        if !ok {
            return Err(Error::Domain(format!("parameter {theta} outside the {family} domain")));
        }
        let theta = if family == Family::Independence { 0.0 } else { theta };
        Ok(Self {
            family,
            rotation,
            theta,
        })
    }

    pub fn independence() -> Self {
        Self {
            family: Family::Independence,
            rotation: Rotation::R0,
            theta: 0.0,
        }
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn rotation(&self) -> Rotation {
        self.rotation
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn is_independence(&self) -> bool {
        self.family == Family::Independence
    }

    /// The copula of (V, U) when `self` is the copula of (U, V).
    pub fn transposed(&self) -> Self {
        let rotation = match self.rotation {
            Rotation::R90 => Rotation::R270,
            Rotation::R270 => Rotation::R90,
            r => r,
        };
        Self { rotation, ..*self }
    }

    fn base_cdf(&self, u: f64, v: f64) -> f64 {
        families::cdf(self.family, self.theta, u, v)
    }

    fn base_h(&self, u: f64, v: f64) -> f64 {
        families::h(self.family, self.theta, clip(u), clip(v))
    }

    fn base_h_inv(&self, w: f64, v: f64) -> Result<f64> {
        families::h_inv(self.family, self.theta, w, clip(v))
            .map(clip)
            .ok_or_else(|| {
                Error::Numeric(format!(
                    "h-function inversion did not converge for {self} at (w={w}, v={v})"
                ))
            })
    }

    /// C(u, v).
    pub fn cdf(&self, u: f64, v: f64) -> f64 {
        if u <= 0.0 || v <= 0.0 {
            return 0.0;
        }
        if u >= 1.0 {
            return v.min(1.0);
        }
        if v >= 1.0 {
            return u;
        }
        if self.is_independence() {
            return u * v;
        }
        let c = match self.rotation {
            Rotation::R0 => self.base_cdf(u, v),
            Rotation::R90 => v - self.base_cdf(1.0 - u, v),
            Rotation::R180 => u + v - 1.0 + self.base_cdf(1.0 - u, 1.0 - v),
            Rotation::R270 => u - self.base_cdf(u, 1.0 - v),
        };
        c.clamp((u + v - 1.0).max(0.0), u.min(v))
    }

    /// log c(u, v), with arguments clipped into the open unit square.
    pub fn log_pdf(&self, u: f64, v: f64) -> f64 {
        if self.is_independence() {
            return 0.0;
        }
        let (u, v) = (clip(u), clip(v));
        let (x, y) = match self.rotation {
            Rotation::R0 => (u, v),
            Rotation::R90 => (1.0 - u, v),
            Rotation::R180 => (1.0 - u, 1.0 - v),
            Rotation::R270 => (u, 1.0 - v),
        };
        families::log_pdf(self.family, self.theta, x, y)
    }

    pub fn pdf(&self, u: f64, v: f64) -> f64 {
        self.log_pdf(u, v).exp()
    }

    /// h(u | v) = ∂C(u, v)/∂v, the conditional distribution of U given V = v.
    pub fn h(&self, u: f64, v: f64) -> f64 {
        if u <= 0.0 {
            return 0.0;
        }
        if u >= 1.0 {
            return 1.0;
        }
        if self.is_independence() {
            return u;
        }
        match self.rotation {
            Rotation::R0 => self.base_h(u, v),
            Rotation::R90 => 1.0 - self.base_h(1.0 - u, v),
            Rotation::R180 => 1.0 - self.base_h(1.0 - u, 1.0 - v),
            Rotation::R270 => self.base_h(u, 1.0 - v),
        }
    }

    /// ∂C(u, v)/∂u, the conditional distribution of V given U = u, evaluated at v.
    pub fn h_rev(&self, u: f64, v: f64) -> f64 {
        self.transposed().h(v, u)
    }

    /// Solves h(u | v) = w for u.
    pub fn h_inv(&self, w: f64, v: f64) -> Result<f64> {
        if self.is_independence() {
            return Ok(w);
        }
        if !(w > 0.0 && w < 1.0) {
            return Err(Error::Domain(format!("h_inv needs w in (0,1), got {w}")));
        }
        match self.rotation {
            Rotation::R0 => self.base_h_inv(w, v),
            Rotation::R90 => Ok(1.0 - self.base_h_inv(1.0 - w, v)?),
            Rotation::R180 => Ok(1.0 - self.base_h_inv(1.0 - w, 1.0 - v)?),
            Rotation::R270 => self.base_h_inv(w, 1.0 - v),
        }
    }

    /// Solves ∂C(u, v)/∂u = w for v.
    pub fn h_rev_inv(&self, u: f64, w: f64) -> Result<f64> {
        self.transposed().h_inv(w, u)
    }

    /// Kendall's τ implied by the copula.
    pub fn tau(&self) -> f64 {
        tau::tau_of(self)
    }

    /// The copula of the given family and rotation with Kendall's τ equal to `tau`.
    pub fn from_tau(family: Family, rotation: Rotation, tau: f64) -> Result<Self> {
        let base_tau = if rotation.negates() { -tau } else { tau };
        if family == Family::Gumbel && base_tau == 0.0 {
            return Self::new(family, rotation, 1.0);
        }
        Self::new(family, rotation, param_of_tau(family, base_tau)?)
    }
}

impl fmt::Display for PairCopula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.family, self.rotation) {
            (Family::Independence, _) => f.write_str("independence"),
            (family, Rotation::R0) => write!(f, "{family}({:.4})", self.theta),
            (family, r) => write!(f, "{family}{}({:.4})", r.degrees(), self.theta),
        }
    }
}
