//! The reduced map of four-symbol symmetric solutions.
//!
//! A state is taken at a Z-type event whose relay output on the following
//! segment is `-1`: `s = (y_Z, T₁, …, T_ν)` with `T_j` the gaps between the
//! stored zero crossings, most recent first. One application of
//! [`map_plus`] flows to the switch (after `δ = 1 - ΣT`) and on to the next
//! crossing (after `z`); [`map_m`] additionally mirrors the result so that
//! the relay output is `-1` again. Fixed points of [`map_m`] are symmetric
//! periodic solutions with half-period `T* = δ* + z*`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::flow::{Headpoint, Parameters, Rates, Regime, Sign};
use crate::poly;
use crate::roots::{brent, sign_changes};
use crate::sim::{EventKind, SystemState};
use crate::{Error, Result};

/// Grid used to bracket the switching-interval equation.
pub const T_STAR_GRID: usize = 512;
/// Factor by which the grid is refined before giving up.
pub const T_STAR_REFINE: usize = 8;
/// `|y_Z + 1|` below this makes the Jacobian coefficient `c` meaningless.
pub const DEGENERATE_TOL: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    pub y_z: f64,
    /// Gaps between stored crossings, most recent first.
    pub intervals: Vec<f64>,
}

impl StateVector {
    pub fn new(y_z: f64, intervals: Vec<f64>) -> Self {
        StateVector { y_z, intervals }
    }

    pub fn nu(&self) -> usize {
        self.intervals.len()
    }

    pub fn delta(&self) -> Result<f64> {
        delta_of(self)
    }

    /// The sign flip `y_Z -> -y_Z`.
    pub fn reflected(&self) -> StateVector {
        StateVector {
            y_z: -self.y_z,
            intervals: self.intervals.clone(),
        }
    }

    pub fn max_abs_diff(&self, other: &StateVector) -> f64 {
        if self.nu() != other.nu() {
            return f64::INFINITY;
        }
        self.intervals
            .iter()
            .zip(&other.intervals)
            .map(|(a, b)| (a - b).abs())
            .fold((self.y_z - other.y_z).abs(), f64::max)
    }
}

/// Time from the Z state to the switch: `1 - ΣT`, or 1 when `ν = 0`.
pub fn delta_of(s: &StateVector) -> Result<f64> {
    if s.intervals.is_empty() {
        return Ok(1.0);
    }
    let delta = 1.0 - s.intervals.iter().sum::<f64>();
    if delta < 0.0 || !delta.is_finite() {
        return Err(Error::InvalidState(format!("delta = {delta} is negative")));
    }
    Ok(delta)
}

/// Time from the switch to the next crossing, as a closed form in
/// `N = (y_Z+1) e^{-μδ} gsinc(δ)` and `D = 2 - (y_Z+1) e^{-μδ} gcos(δ)`.
pub fn z_of(s: &StateVector, r: &Rates) -> Result<f64> {
    let delta = delta_of(s)?;
    z_after(s.y_z, delta, r)
}

fn z_after(y_z: f64, delta: f64, r: &Rates) -> Result<f64> {
    let u = y_z + 1.0;
    let n = u * r.esinc(delta);
    let d = 2.0 - u * r.ecos(delta);
    if n == 0.0 {
        return Err(Error::NoCrossing(format!("y_Z = {y_z}: headpoint on the equilibrium line")));
    }
    match r.regime {
        Regime::Underdamped => {
            let w = r.omega_abs;
            let mut ang = (w * n).atan2(d);
            if ang <= 0.0 {
                ang += std::f64::consts::PI;
            }
            Ok(ang / w)
        }
        Regime::Overdamped => {
            let k = r.omega_abs;
            let ratio = k * n / d;
            if d > 0.0 && ratio > 0.0 && ratio < 1.0 {
                Ok(ratio.atanh() / k)
            } else {
                Err(Error::NoCrossing(format!("overdamped flow from y_Z = {y_z} never returns to x = 0")))
            }
        }
        Regime::Critical => {
            let z = n / d;
            if d > 0.0 && z > 0.0 {
                Ok(z)
            } else {
                Err(Error::NoCrossing(format!("critical flow from y_Z = {y_z} never returns to x = 0")))
            }
        }
    }
}

/// `y` at the next crossing after flowing `δ` with output `-1` and `z` with `+1`.
fn y_next(y_z: f64, delta: f64, z: f64, r: &Rates) -> f64 {
    1.0 - 2.0 * r.ecos(z) + (y_z + 1.0) * r.ecos(delta + z)
}

/// Z state to the next Z state, without mirroring (output `+1` afterwards).
pub fn map_plus(s: &StateVector, p: &Parameters) -> Result<StateVector> {
    let r = p.rates();
    let delta = delta_of(s)?;
    let z = z_after(s.y_z, delta, &r)?;
    let mut intervals = Vec::with_capacity(s.nu());
    if !s.intervals.is_empty() {
        intervals.push(delta + z);
        intervals.extend_from_slice(&s.intervals[..s.nu() - 1]);
    }
    Ok(StateVector {
        y_z: y_next(s.y_z, delta, z, &r),
        intervals,
    })
}

/// `R ∘ M⁺`.
pub fn map_m(s: &StateVector, p: &Parameters) -> Result<StateVector> {
    map_plus(s, p).map(|n| n.reflected())
}

/// `R ∘ M⁺ ∘ R`: the same step taken from a state with output `+1`.
pub fn map_minus(s: &StateVector, p: &Parameters) -> Result<StateVector> {
    map_plus(&s.reflected(), p).map(|n| n.reflected())
}

/// `M²`, one full period of a symmetric solution.
pub fn map_p(s: &StateVector, p: &Parameters) -> Result<StateVector> {
    map_m(&map_m(s, p)?, p)
}

fn bracket(nu: usize, r: &Rates) -> (f64, f64) {
    if nu == 0 {
        (1.0, 1.0 + 20.0 / r.mu)
    } else {
        (1.0 / (nu as f64 + 1.0), 1.0 / nu as f64)
    }
}

/// Switching-interval equation `gsinc(z) - e^{-μT} gsinc(δ)` with
/// `z = (ν+1)T - 1`, `δ = 1 - νT`.
pub fn t_star_residual(nu: usize, r: &Rates, t: f64) -> f64 {
    let z = (nu as f64 + 1.0) * t - 1.0;
    let delta = 1.0 - nu as f64 * t;
    r.gsinc(z) - (-r.mu * z).exp() * r.esinc(delta)
}

/// `e^{-μz}` times [`t_star_residual`]; same roots, no overflow.
fn t_star_scaled(nu: usize, r: &Rates, t: f64) -> f64 {
    let z = (nu as f64 + 1.0) * t - 1.0;
    let delta = 1.0 - nu as f64 * t;
    r.esinc(z) - (-2.0 * r.mu * z).exp() * r.esinc(delta)
}

/// Smallest root of the switching-interval equation in `(lo, hi)`.
fn smallest_root(nu: usize, r: &Rates, lo: f64, hi: f64) -> Option<f64> {
    let mut f = |t: f64| t_star_scaled(nu, r, t);
    for n in [T_STAR_GRID, T_STAR_GRID * T_STAR_REFINE] {
        if let Some(&(a, b)) = sign_changes(&mut f, lo, hi, n).first() {
            return brent(&mut f, a, b, 1e-16, 200).ok();
        }
    }
    None
}

pub fn solve_t_star(nu: usize, p: &Parameters) -> Result<f64> {
    let r = p.rates();
    let (lo, hi) = bracket(nu, &r);
    smallest_root(nu, &r, lo, hi).ok_or(Error::NoRoot {
        nu,
        q: p.q(),
        omega: p.omega(),
    })
}

/// Root of the switching-interval equation closest to `guess` within
/// `±window`, clipped to the admissible bracket. Used for continuation.
pub fn solve_t_star_near(nu: usize, p: &Parameters, guess: f64, window: f64) -> Result<f64> {
    let r = p.rates();
    let (lo, hi) = bracket(nu, &r);
    let a = (guess - window).max(lo);
    let b = (guess + window).min(hi);
    let no_root = Error::NoRoot {
        nu,
        q: p.q(),
        omega: p.omega(),
    };
    if a >= b {
        return Err(no_root);
    }
    let mut f = |t: f64| t_star_scaled(nu, &r, t);
    let cells = sign_changes(&mut f, a, b, 64);
    let best = cells
        .iter()
        .filter_map(|&(x, y)| brent(&mut f, x, y, 1e-16, 200).ok())
        .min_by(|x, y| (x - guess).abs().total_cmp(&(y - guess).abs()));
    best.ok_or(no_root)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Validity {
    /// `0 < z*` (and `z* < π/ω` when underdamped)
    pub z_window: bool,
    /// `0 < δ*` (and `δ* < π/ω` when underdamped)
    pub delta_window: bool,
    /// The crossing direction at the Z state agrees with the stored history.
    pub parity: bool,
}

impl Validity {
    pub fn all(&self) -> bool {
        self.z_window && self.delta_window && self.parity
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub nu: usize,
    pub t_star: f64,
    pub y_z_star: f64,
    pub z_star: f64,
    pub delta_star: f64,
    pub valid: Validity,
    pub params: Parameters,
}

impl FixedPoint {
    pub fn is_valid(&self) -> bool {
        self.valid.all()
    }

    pub fn period(&self) -> f64 {
        2.0 * self.t_star
    }

    pub fn inv_period(&self) -> f64 {
        0.5 / self.t_star
    }

    pub fn state_vector(&self) -> StateVector {
        StateVector::new(self.y_z_star, vec![self.t_star; self.nu])
    }

    /// Event-simulation state at the fixed point's Z event.
    pub fn seed_state(&self) -> Result<SystemState> {
        SystemState::from_map_state(&self.params, &self.state_vector())
    }

    /// Symbol sequence of the orbit, starting at H.
    pub fn symbols(&self) -> [EventKind; 4] {
        symbols(self)
    }
}

/// Fixed point built from a known switching interval.
pub fn fixed_point_from_t(nu: usize, p: &Parameters, t_star: f64) -> FixedPoint {
    let r = p.rates();
    let z = (nu as f64 + 1.0) * t_star - 1.0;
    let delta = 1.0 - nu as f64 * t_star;
    let e2z = (-2.0 * r.mu * z).exp();
    let y = -1.0 + 2.0 * e2z / (r.ecos(z) + e2z * r.ecos(delta));
    let half = r.half_period();
    let u = y + 1.0;
    let orient = -p.sigma().value() * Sign::parity(nu).value();
    FixedPoint {
        nu,
        t_star,
        y_z_star: y,
        z_star: z,
        delta_star: delta,
        valid: Validity {
            z_window: z > 0.0 && z < half,
            delta_window: delta > 0.0 && delta < half,
            parity: u * orient > 0.0,
        },
        params: *p,
    }
}

/// Every root of the switching-interval equation in the admissible bracket,
/// ascending.
pub fn t_star_roots(nu: usize, p: &Parameters) -> Vec<f64> {
    let r = p.rates();
    let (lo, hi) = bracket(nu, &r);
    let mut f = |t: f64| t_star_scaled(nu, &r, t);
    let mut cells = sign_changes(&mut f, lo, hi, T_STAR_GRID);
    if cells.is_empty() {
        cells = sign_changes(&mut f, lo, hi, T_STAR_GRID * T_STAR_REFINE);
    }
    cells
        .into_iter()
        .filter_map(|(a, b)| brent(&mut f, a, b, 1e-16, 200).ok())
        .collect()
}

/// Fixed point of the `ν`-map. Among the roots of the switching-interval
/// equation the smallest one giving a valid solution is used; the two
/// feedback signs select different roots through the orientation condition.
/// When no root is valid the smallest is returned with its flags cleared.
pub fn fixed_point(nu: usize, p: &Parameters) -> Result<FixedPoint> {
    let candidates: Vec<FixedPoint> = t_star_roots(nu, p)
        .into_iter()
        .map(|t| fixed_point_from_t(nu, p, t))
        .collect();
    candidates
        .iter()
        .find(|fp| fp.is_valid())
        .or_else(|| candidates.iter().find(|fp| fp.valid.parity))
        .or(candidates.first())
        .copied()
        .ok_or(Error::NoRoot {
            nu,
            q: p.q(),
            omega: p.omega(),
        })
}

/// Headpoint `x` at the switching event that follows the Z state.
pub fn x_h(fp: &FixedPoint) -> f64 {
    let r = fp.params.rates();
    r.apply_flow(fp.delta_star, Headpoint::new(0.0, fp.y_z_star), Sign::Minus).x
}

pub fn symbols(fp: &FixedPoint) -> [EventKind; 4] {
    use EventKind::*;
    if fp.params.sigma().value() * (fp.y_z_star + 1.0) < 0.0 {
        [H, Zbar, Hbar, Z]
    } else {
        [H, Z, Hbar, Zbar]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JacobianCoeffs {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    /// `(a-1)d - bc - (1 + 2 e^{-μT} gcos(T) + e^{-2μT})`
    pub residual_a5: f64,
    /// `a(d+1) - bc - e^{-2μT}`
    pub residual_a6: f64,
}

pub fn jacobian_coeffs(fp: &FixedPoint) -> Result<JacobianCoeffs> {
    let u = fp.y_z_star + 1.0;
    if !(u.abs() >= DEGENERATE_TOL) {
        return Err(Error::Degenerate(format!(
            "y_Z* + 1 = {u} at Q = {}, Omega = {}, nu = {}",
            fp.params.q(),
            fp.params.omega(),
            fp.nu
        )));
    }
    let r = fp.params.rates();
    let t = fp.t_star;
    let ec = r.ecos(t);
    let es = r.esinc(t);
    let mu = r.mu;
    let om2 = fp.params.omega() * fp.params.omega();
    let e2 = (-2.0 * mu * t).exp();
    let a = -(ec + mu * es);
    let b = -om2 * u * es;
    let c = es / u;
    let d = -1.0 - (ec - mu * es);
    Ok(JacobianCoeffs {
        a,
        b,
        c,
        d,
        residual_a5: (a - 1.0) * d - b * c - (1.0 + 2.0 * ec + e2),
        residual_a6: a * (d + 1.0) - b * c - e2,
    })
}

/// Explicit `(ν+1)×(ν+1)` Jacobian of [`map_m`] at the fixed point.
pub fn jacobian_matrix(jc: &JacobianCoeffs, nu: usize) -> DMatrix<f64> {
    let n = nu + 1;
    let mut m = DMatrix::zeros(n, n);
    m[(0, 0)] = jc.a;
    if nu > 0 {
        m[(1, 0)] = jc.c;
        for j in 1..n {
            m[(0, j)] = jc.b;
            m[(1, j)] = jc.d;
        }
        for i in 2..n {
            m[(i, i - 1)] = 1.0;
        }
    }
    m
}

/// Ascending coefficients of
/// `λ^{ν+1} - (a+d)λ^ν + [(a-1)d - bc](λ^{ν-1} + … + 1) + d`.
pub fn char_poly(jc: &JacobianCoeffs, nu: usize) -> Vec<f64> {
    if nu == 0 {
        return vec![-jc.a, 1.0];
    }
    let big_a = (jc.a - 1.0) * jc.d - jc.b * jc.c;
    let mut c = vec![big_a; nu + 2];
    c[0] += jc.d;
    c[nu] = -(jc.a + jc.d);
    c[nu + 1] = 1.0;
    c
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub roots: Vec<Complex64>,
    pub unstable_count: usize,
}

impl Spectrum {
    pub fn from_roots(roots: Vec<Complex64>) -> Self {
        let unstable_count = roots.iter().filter(|z| z.norm() > 1.0).count();
        Spectrum { roots, unstable_count }
    }

    pub fn is_stable(&self) -> bool {
        self.unstable_count == 0
    }

    pub fn spectral_radius(&self) -> f64 {
        self.roots.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

pub fn char_roots(jc: &JacobianCoeffs, nu: usize) -> Spectrum {
    if nu == 0 {
        return Spectrum::from_roots(vec![Complex64::new(jc.a, 0.0)]);
    }
    Spectrum::from_roots(poly::roots(&char_poly(jc, nu)))
}

/// Characteristic roots of the fixed point.
pub fn spectrum(fp: &FixedPoint) -> Result<Spectrum> {
    let jc = jacobian_coeffs(fp)?;
    Ok(char_roots(&jc, fp.nu))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(q: f64, om: f64, sigma: i8) -> Parameters {
        Parameters::with_sigma(q, om, sigma).unwrap()
    }

    #[test]
    fn delta_examples() {
        assert_eq!(delta_of(&StateVector::new(0.2, vec![])).unwrap(), 1.0);
        assert!((delta_of(&StateVector::new(0.2, vec![0.3, 0.3])).unwrap() - 0.4).abs() < 1e-15);
        assert!(delta_of(&StateVector::new(0.2, vec![0.6, 0.6])).is_err());
    }

    #[test]
    fn z_rejects_equilibrium_line() {
        let r = p(1.5, 14.0, -1).rates();
        assert!(matches!(z_of(&StateVector::new(-1.0, vec![0.2]), &r), Err(Error::NoCrossing(_))));
    }

    #[test]
    fn fig1_fixed_points() {
        let fp = fixed_point(3, &p(1.5, 14.0, -1)).unwrap();
        assert!(fp.is_valid(), "{fp:?}");
        assert!(fp.period() > 0.5 && fp.period() < 2.0 / 3.0);
        assert_eq!(fp.symbols(), [EventKind::H, EventKind::Z, EventKind::Hbar, EventKind::Zbar]);

        let fp = fixed_point(2, &p(0.4, 7.0, -1)).unwrap();
        assert!(fp.is_valid());
        assert_eq!(fp.symbols(), [EventKind::H, EventKind::Zbar, EventKind::Hbar, EventKind::Z]);
    }

    #[test]
    fn fixed_point_residual_and_definitions() {
        for (q, om, nu, sig) in [(1.5, 14.0, 3, -1), (1.5, 7.0, 2, -1), (0.4, 7.0, 2, -1), (0.45, 20.0, 0, -1), (2.0, 5.0, 1, 1)] {
            let par = p(q, om, sig);
            let fp = fixed_point(nu, &par).unwrap();
            assert!((fp.t_star - fp.z_star - fp.delta_star).abs() < 1e-15);
            let r = par.rates();
            assert!(t_star_residual(nu, &r, fp.t_star).abs() < 1e-12);
            let s = fp.state_vector();
            let m = map_m(&s, &par).unwrap();
            assert_eq!(m.nu(), nu);
            assert!(m.max_abs_diff(&s) < 1e-10, "q={q} om={om}: {}", m.max_abs_diff(&s));
            assert!((z_of(&s, &r).unwrap() - fp.z_star).abs() < 1e-10);
        }
    }

    #[test]
    fn slowly_oscillating_interval_exceeds_one() {
        let fp = fixed_point(0, &p(0.45, 20.0, -1)).unwrap();
        assert!(fp.t_star > 1.0);
        assert_eq!(fp.delta_star, 1.0);
    }

    #[test]
    fn overdamped_parity() {
        let par = p(0.4, 7.0, -1);
        if let Ok(fp) = fixed_point(1, &par) {
            assert!(!fp.valid.parity);
        }
        let fp = fixed_point(2, &par).unwrap();
        assert!(fp.valid.parity);
    }

    #[test]
    fn conjugacy() {
        let par = p(1.5, 14.0, -1);
        let s = StateVector::new(0.37, vec![0.2, 0.21, 0.19]);
        let lhs = map_m(&s.reflected(), &par).unwrap();
        let rhs = map_minus(&s, &par).unwrap();
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        for (q, om, nu) in [(1.5, 14.0, 3), (1.5, 7.0, 2), (0.4, 7.0, 2), (0.45, 20.0, 0)] {
            let par = p(q, om, -1);
            let fp = fixed_point(nu, &par).unwrap();
            let jc = jacobian_coeffs(&fp).unwrap();
            let j = jacobian_matrix(&jc, nu);
            let s = fp.state_vector();
            let h = 1e-6;
            for col in 0..=nu {
                let mut sp = s.clone();
                let mut sm = s.clone();
                if col == 0 {
                    sp.y_z += h;
                    sm.y_z -= h;
                } else {
                    sp.intervals[col - 1] += h;
                    sm.intervals[col - 1] -= h;
                }
                let fp_ = map_m(&sp, &par).unwrap();
                let fm = map_m(&sm, &par).unwrap();
                let mut diff = vec![(fp_.y_z - fm.y_z) / (2.0 * h)];
                diff.extend(fp_.intervals.iter().zip(&fm.intervals).map(|(a, b)| (a - b) / (2.0 * h)));
                for row in 0..=nu {
                    let scale = 1.0 + j[(row, col)].abs();
                    assert!((diff[row] - j[(row, col)]).abs() < 1e-6 * scale, "q={q} nu={nu} ({row},{col})");
                }
            }
            assert!(jc.residual_a5.abs() < 1e-10 && jc.residual_a6.abs() < 1e-10);
        }
    }

    #[test]
    fn matrix_shapes() {
        let jc = JacobianCoeffs {
            a: 0.1,
            b: 0.2,
            c: 0.3,
            d: 0.4,
            residual_a5: 0.0,
            residual_a6: 0.0,
        };
        let m = jacobian_matrix(&jc, 1);
        assert_eq!(m, DMatrix::from_row_slice(2, 2, &[0.1, 0.2, 0.3, 0.4]));
        let m = jacobian_matrix(&jc, 4);
        for i in 2..5 {
            assert_eq!(m.row(i).sum(), 1.0);
        }
        assert_eq!(char_roots(&jc, 0).roots, vec![Complex64::new(0.1, 0.0)]);
    }

    #[test]
    fn stable_inside_window() {
        let fp = fixed_point(3, &p(1.5, 10.5, -1)).unwrap();
        assert!(fp.is_valid());
        assert_eq!(spectrum(&fp).unwrap().unstable_count, 0);
    }

    #[test]
    fn x_h_sides_of_relabel() {
        // below ω = 3π the mode is a ν = 2 solution, above it ν = 3
        let below = fixed_point(2, &p(1.5, 9.0, -1)).unwrap();
        let above = fixed_point(3, &p(1.5, 11.0, -1)).unwrap();
        assert!(below.is_valid() && above.is_valid());
        assert!(x_h(&below) < 0.0);
        assert!(x_h(&above) > 0.0);
    }
}
