//! Closed-form flows of the filter with frozen relay feedback.
//!
//! Between two events the relay output is a constant `s = ±1` and the model
//!
//! ```text
//! (Q/Ω) x' = -x - y + s
//!       y' = QΩ x
//! ```
//!
//! is linear, with the stable equilibrium `(0, s)`. Its flow is written as
//! `Φ(t, v) = A(t) v + s b(t)`. Every entry of `A` and `b` is expressed through
//! the two regime-independent kernels [`Rates::gcos`] and [`Rates::gsinc`], so
//! the underdamped, overdamped and critically damped filters share one code path.

use std::ops::{Mul, Neg};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Below this value of `|ω²| t²` the kernels switch to their Taylor series.
pub const SERIES_THRESHOLD: f64 = 1e-8;

/// A sign in `{+1, -1}`. Used for the feedback sign σ and for the frozen
/// relay output on a segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "i8", try_from = "i8")]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn from_f64(v: f64) -> Option<Sign> {
        if v > 0.0 {
            Some(Sign::Plus)
        } else if v < 0.0 {
            Some(Sign::Minus)
        } else {
            None
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    /// `(-1)^n`
    pub fn parity(n: usize) -> Sign {
        if n.is_multiple_of(2) {
            Sign::Plus
        } else {
            Sign::Minus
        }
    }
}

impl Neg for Sign {
    type Output = Sign;
    fn neg(self) -> Sign {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }
}

impl Mul for Sign {
    type Output = Sign;
    fn mul(self, rhs: Sign) -> Sign {
        if self == rhs {
            Sign::Plus
        } else {
            Sign::Minus
        }
    }
}

impl From<Sign> for i8 {
    fn from(s: Sign) -> i8 {
        match s {
            Sign::Plus => 1,
            Sign::Minus => -1,
        }
    }
}

impl TryFrom<i8> for Sign {
    type Error = String;
    fn try_from(v: i8) -> std::result::Result<Sign, String> {
        match v {
            1 => Ok(Sign::Plus),
            -1 => Ok(Sign::Minus),
            other => Err(format!("sign must be +1 or -1, got {other}")),
        }
    }
}

/// Frozen relay output `σ·sign(x(t-1))` on one inter-event segment.
pub type FlowSign = Sign;

/// Dimensionless model parameters `(Q, Ω, σ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Parameters {
    q: f64,
    omega: f64,
    sigma: Sign,
}

impl Parameters {
    pub fn new(q: f64, omega: f64, sigma: Sign) -> Result<Self> {
        if !(q.is_finite() && q > 0.0) {
            return Err(Error::InvalidParameters(format!("Q must be positive and finite, got {q}")));
        }
        if !(omega.is_finite() && omega > 0.0) {
            return Err(Error::InvalidParameters(format!(
                "Omega must be positive and finite, got {omega}"
            )));
        }
        Ok(Parameters { q, omega, sigma })
    }

    /// Convenience constructor taking σ as an integer.
    pub fn with_sigma(q: f64, omega: f64, sigma: i8) -> Result<Self> {
        let sigma = Sign::try_from(sigma).map_err(Error::InvalidParameters)?;
        Self::new(q, omega, sigma)
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn sigma(&self) -> Sign {
        self.sigma
    }

    pub fn with_omega(&self, omega: f64) -> Result<Self> {
        Self::new(self.q, omega, self.sigma)
    }

    pub fn rates(&self) -> Rates {
        derive_rates(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    Underdamped,
    Overdamped,
    Critical,
}

/// Damping rate `μ = Ω/(2Q)` and the signed squared angular rate
/// `ω² = Ω²(4Q²-1)/(4Q²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub mu: f64,
    pub omega2: f64,
    pub regime: Regime,
    /// `sqrt(|ω²|)`: the angular rate when underdamped, `|ω|` when overdamped.
    pub omega_abs: f64,
}

pub fn derive_rates(p: &Parameters) -> Rates {
    let q = p.q;
    let big = p.omega;
    let mu = big / (2.0 * q);
    let four_q2 = 4.0 * q * q;
    let omega2 = big * big * (four_q2 - 1.0) / four_q2;
    let regime = if q > 0.5 {
        Regime::Underdamped
    } else if q < 0.5 {
        Regime::Overdamped
    } else {
        Regime::Critical
    };
    // exact classification: at Q = 1/2 the product above is exactly zero
    let omega2 = if regime == Regime::Critical { 0.0 } else { omega2 };
    Rates {
        mu,
        omega2,
        regime,
        omega_abs: omega2.abs().sqrt(),
    }
}

impl Rates {
    #[inline]
    fn use_series(&self, t: f64) -> bool {
        self.regime == Regime::Critical || self.omega2.abs() * t * t < SERIES_THRESHOLD
    }

    /// `cos(ωt)`, `cosh(|ω|t)` or `1`, depending on the regime.
    pub fn gcos(&self, t: f64) -> f64 {
        if self.use_series(t) {
            let u = -self.omega2 * t * t;
            return 1.0 + u * (0.5 + u * (1.0 / 24.0 + u / 720.0));
        }
        match self.regime {
            Regime::Underdamped => (self.omega_abs * t).cos(),
            _ => (self.omega_abs * t).cosh(),
        }
    }

    /// `sin(ωt)/ω`, `sinh(|ω|t)/|ω|` or `t`, continuous in `ω²`.
    pub fn gsinc(&self, t: f64) -> f64 {
        if self.use_series(t) {
            let u = -self.omega2 * t * t;
            return t * (1.0 + u * (1.0 / 6.0 + u * (1.0 / 120.0 + u / 5040.0)));
        }
        match self.regime {
            Regime::Underdamped => (self.omega_abs * t).sin() / self.omega_abs,
            _ => (self.omega_abs * t).sinh() / self.omega_abs,
        }
    }

    /// `e^{-μt} gcos(t)`, evaluated without overflow in the overdamped regime.
    pub fn ecos(&self, t: f64) -> f64 {
        if self.regime == Regime::Overdamped && !self.use_series(t) {
            let k = self.omega_abs;
            0.5 * ((-(self.mu - k) * t).exp() + (-(self.mu + k) * t).exp())
        } else {
            (-self.mu * t).exp() * self.gcos(t)
        }
    }

    /// `e^{-μt} gsinc(t)`, evaluated without overflow in the overdamped regime.
    pub fn esinc(&self, t: f64) -> f64 {
        if self.regime == Regime::Overdamped && !self.use_series(t) {
            let k = self.omega_abs;
            -(-(self.mu - k) * t).exp() * (-2.0 * k * t).exp_m1() / (2.0 * k)
        } else {
            (-self.mu * t).exp() * self.gsinc(t)
        }
    }

    /// `gsinc(t) / gcos(t)`: `tan(ωt)/ω`, `tanh(|ω|t)/|ω|` or `t`.
    pub fn gtanc(&self, t: f64) -> f64 {
        if self.regime == Regime::Overdamped && !self.use_series(t) {
            (self.omega_abs * t).tanh() / self.omega_abs
        } else {
            self.gsinc(t) / self.gcos(t)
        }
    }

    /// `A(t)` as a row-major 2×2 array.
    pub fn flow_matrix(&self, t: f64) -> [[f64; 2]; 2] {
        let mu = self.mu;
        let c = self.ecos(t);
        let s = self.esinc(t);
        [
            [c - mu * s, -2.0 * mu * s],
            [(mu * mu + self.omega2) / (2.0 * mu) * s, c + mu * s],
        ]
    }

    /// `b(t)`, the response to a unit relay output from rest.
    pub fn flow_offset(&self, t: f64) -> [f64; 2] {
        let mu = self.mu;
        let c = self.ecos(t);
        let s = self.esinc(t);
        [2.0 * mu * s, 1.0 - (c + mu * s)]
    }

    /// `Φ_s(t, v) = A(t) v + s b(t)`.
    pub fn apply_flow(&self, t: f64, v: Headpoint, s: FlowSign) -> Headpoint {
        let a = self.flow_matrix(t);
        let b = self.flow_offset(t);
        let sv = s.value();
        Headpoint {
            x: a[0][0] * v.x + a[0][1] * v.y + sv * b[0],
            y: a[1][0] * v.x + a[1][1] * v.y + sv * b[1],
        }
    }

    /// Angular rate `ω` when underdamped.
    pub fn omega(&self) -> Option<f64> {
        (self.regime == Regime::Underdamped).then_some(self.omega_abs)
    }

    /// `π/ω` in the underdamped regime, infinite otherwise.
    pub fn half_period(&self) -> f64 {
        match self.omega() {
            Some(w) => std::f64::consts::PI / w,
            None => f64::INFINITY,
        }
    }
}

/// Current value `(x, y)` of the solution.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Headpoint {
    pub x: f64,
    pub y: f64,
}

impl Headpoint {
    pub fn new(x: f64, y: f64) -> Self {
        Headpoint { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn dist(&self, other: &Headpoint) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl Neg for Headpoint {
    type Output = Headpoint;
    fn neg(self) -> Headpoint {
        Headpoint { x: -self.x, y: -self.y }
    }
}

/// Right-hand side of the frozen-feedback ODE.
pub fn vector_field(p: &Parameters, v: Headpoint, s: FlowSign) -> Headpoint {
    let q = p.q();
    let big = p.omega();
    Headpoint {
        x: big / q * (-v.x - v.y + s.value()),
        y: q * big * v.x,
    }
}
