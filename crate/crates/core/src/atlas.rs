//! Bifurcation loci, region scans, period diagrams and mode tracing.
//!
//! A *mode* is a family of four-symbol symmetric solutions followed
//! continuously in Ω. Along it the crossing count changes from `ν` to `ν+1`
//! when the headpoint at the switching event passes through `x = 0`
//! (type-1 corner, `ω = (ν+1)π`), and the family ends where the crossing
//! and the switch merge (type-2 corner, `ω = (2ν+1)π`).

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::flow::{Parameters, Regime, Sign};
use crate::map::{
    fixed_point, fixed_point_from_t, jacobian_coeffs, jacobian_matrix, solve_t_star_near, x_h,
    FixedPoint, Spectrum,
};
use crate::roots::brent;
use crate::sim::EventKind;
use crate::{Error, Result};

/// Coefficients of the unit-circle form of the characteristic equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NSCoefficients {
    pub f1: f64,
    pub f2: f64,
    pub f3: f64,
}

pub fn ns_coeffs(fp: &FixedPoint) -> NSCoefficients {
    let r = fp.params.rates();
    let t = fp.t_star;
    let ec = r.ecos(t);
    let es = r.esinc(t);
    let e2 = (-2.0 * r.mu * t).exp();
    let g = ec - r.mu * es;
    NSCoefficients {
        f1: 2.0 * ec + e2,
        f2: -g - e2,
        f3: g - e2,
    }
}

/// Real and imaginary parts of the characteristic equation at `λ = e^{iφ}`,
/// each divided by a nonvanishing factor.
pub fn ns_residuals(nu: usize, c: &NSCoefficients, phi: f64) -> (f64, f64) {
    let n = nu as f64;
    let s = ((n + 1.0) * phi / 2.0).sin();
    let re = (c.f1 + phi.cos()) * s / (phi / 2.0).sin() + c.f2 * (n * phi / 2.0).cos();
    let im = s * (phi / 2.0).cos() + 0.5 * c.f3 * (n * phi / 2.0).sin();
    (re, im)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BifurcationKind {
    NS,
    PF,
    Corner1,
    Corner2,
}

impl BifurcationKind {
    pub fn name(self) -> &'static str {
        match self {
            BifurcationKind::NS => "NS",
            BifurcationKind::PF => "PF",
            BifurcationKind::Corner1 => "Corner1",
            BifurcationKind::Corner2 => "Corner2",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BifurcationPoint {
    pub kind: BifurcationKind,
    pub q: f64,
    pub omega: f64,
    pub nu: usize,
    pub sigma: Sign,
    /// Argument of the critical root (NS only).
    pub phi: Option<f64>,
    /// Kind-specific defining residual at the returned point.
    pub residual: f64,
    /// Unstable root count just above the point in Ω.
    pub unstable_after: Option<usize>,
}

/// `ω` where `ω(Ω, Q) = Kπ`, i.e. `Ω = 2QKπ/√(4Q²-1)`. `None` unless underdamped.
pub fn corner_omega(q: f64, k: usize) -> Option<f64> {
    (q > 0.5).then(|| 2.0 * q * k as f64 * PI / (4.0 * q * q - 1.0).sqrt())
}

/// Type-1 (relabel, `K = ν+1`) and type-2 (end of mode, `K = 2ν+1`) corner
/// lines through `Q`.
pub fn corner_lines(nu: usize, q: f64) -> Option<(f64, f64)> {
    Some((corner_omega(q, nu + 1)?, corner_omega(q, 2 * nu + 1)?))
}

/// Normalised 3 dB edges of the filter.
pub fn passband(q: f64) -> (f64, f64) {
    let h = 1.0 / (2.0 * q);
    let c = (1.0 + h * h).sqrt();
    (c - h, c + h)
}

/// Filter transfer function at normalised frequency `w`.
pub fn transfer(q: f64, w: f64) -> Complex64 {
    1.0 / Complex64::new(1.0, q * (w - 1.0 / w))
}

/// `(1+d) + e^{-2μT*}`, which vanishes when `λ = -1` for odd `ν`.
pub fn pf_condition(fp: &FixedPoint) -> Result<f64> {
    let jc = jacobian_coeffs(fp)?;
    let mu = fp.params.rates().mu;
    Ok(1.0 + jc.d + (-2.0 * mu * fp.t_star).exp())
}

/// Characteristic polynomial at `λ = -1`, evaluated from the explicit
/// Jacobian as `det(J + I)`.
pub fn det_j_plus_i(fp: &FixedPoint) -> Result<f64> {
    let jc = jacobian_coeffs(fp)?;
    let j = jacobian_matrix(&jc, fp.nu);
    let n = fp.nu + 1;
    Ok((j + DMatrix::<f64>::identity(n, n)).determinant())
}

fn complex_unstable(s: &Spectrum) -> usize {
    s.roots
        .iter()
        .filter(|z| z.im > 1e-10 * z.norm() && z.norm() > 1.0)
        .count()
}

/// One sample of a followed branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchSample {
    pub omega: f64,
    pub fp: FixedPoint,
    pub x_h: f64,
    pub spectrum: Option<Spectrum>,
}

impl BranchSample {
    fn new(fp: FixedPoint) -> Self {
        let spectrum = crate::map::spectrum(&fp).ok();
        BranchSample {
            omega: fp.params.omega(),
            x_h: x_h(&fp),
            fp,
            spectrum,
        }
    }

    pub fn unstable_count(&self) -> Option<usize> {
        self.spectrum.as_ref().map(|s| s.unstable_count)
    }

    pub fn stable(&self) -> bool {
        self.unstable_count() == Some(0)
    }
}

/// Window, relative to the bracket width, searched around the previous
/// switching interval when continuing a branch.
const CONTINUATION_WINDOW: f64 = 0.1;

fn bracket_width(nu: usize) -> f64 {
    if nu == 0 {
        1.0
    } else {
        1.0 / nu as f64 - 1.0 / (nu as f64 + 1.0)
    }
}

/// Valid fixed point of the `ν`-map continuing from switching interval `guess`.
pub fn continue_fixed_point(nu: usize, p: &Parameters, guess: f64) -> Option<FixedPoint> {
    let t = solve_t_star_near(nu, p, guess, CONTINUATION_WINDOW * bracket_width(nu)).ok()?;
    let fp = fixed_point_from_t(nu, p, t);
    fp.is_valid().then_some(fp)
}

/// Bisect in Ω between two branch samples on which `state` differs.
fn refine<F>(nu: usize, a: &FixedPoint, b: &FixedPoint, state: F) -> Option<FixedPoint>
where
    F: Fn(&FixedPoint) -> Option<i64>,
{
    let sa = state(a)?;
    let (mut lo, mut hi) = (*a, *b);
    for _ in 0..200 {
        let (ol, oh) = (lo.params.omega(), hi.params.omega());
        let om = 0.5 * (ol + oh);
        if om <= ol || om >= oh || oh - ol < 1e-13 * oh {
            break;
        }
        let w = (om - ol) / (oh - ol);
        let guess = lo.t_star + w * (hi.t_star - lo.t_star);
        let p = lo.params.with_omega(om).ok()?;
        let mid = continue_fixed_point(nu, &p, guess)?;
        if state(&mid)? == sa {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(lo)
}

/// Valid samples of the `ν`-map fixed points on a uniform Ω grid, split
/// into continuous runs.
fn branch_runs(nu: usize, q: f64, sigma: Sign, omega_range: (f64, f64), samples: usize) -> Vec<Vec<FixedPoint>> {
    let samples = samples.max(2);
    let (a, b) = omega_range;
    let pts: Vec<Option<FixedPoint>> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let om = a + (b - a) * i as f64 / (samples - 1) as f64;
            let p = Parameters::new(q, om, sigma).ok()?;
            fixed_point(nu, &p).ok().filter(|fp| fp.is_valid())
        })
        .collect();
    let mut runs: Vec<Vec<FixedPoint>> = Vec::new();
    let mut cur: Vec<FixedPoint> = Vec::new();
    let jump = 0.05 * bracket_width(nu);
    for fp in pts {
        match fp {
            Some(fp) if cur.last().is_none_or(|l| (l.t_star - fp.t_star).abs() < jump) => cur.push(fp),
            Some(fp) => {
                runs.push(std::mem::take(&mut cur));
                cur.push(fp);
            }
            None => {
                if !cur.is_empty() {
                    runs.push(std::mem::take(&mut cur));
                }
            }
        }
    }
    if !cur.is_empty() {
        runs.push(cur);
    }
    runs
}

/// Default number of Ω samples per unit of Ω used by the locus scans.
pub const LOCUS_DENSITY: f64 = 200.0;

fn samples_for(omega_range: (f64, f64)) -> usize {
    (((omega_range.1 - omega_range.0) * LOCUS_DENSITY).ceil() as usize).max(16)
}

fn ns_points_on_run(run: &[FixedPoint]) -> Vec<BifurcationPoint> {
    let state = |fp: &FixedPoint| crate::map::spectrum(fp).ok().map(|s| complex_unstable(&s) as i64);
    let mut out = Vec::new();
    for w in run.windows(2) {
        let (Some(s0), Some(s1)) = (state(&w[0]), state(&w[1])) else {
            continue;
        };
        if s0 == s1 {
            continue;
        }
        let nu = w[0].nu;
        if let Some(lo) = refine(nu, &w[0], &w[1], state) {
            if let Some(pt) = ns_point(&lo) {
                out.push(pt);
            }
        }
    }
    out
}

/// NS point record at a fixed point lying on the crossing.
fn ns_point(fp: &FixedPoint) -> Option<BifurcationPoint> {
    let spec = crate::map::spectrum(fp).ok()?;
    let lam = spec
        .roots
        .iter()
        .filter(|z| z.im.abs() > 1e-10 * z.norm())
        .min_by(|a, b| (a.norm() - 1.0).abs().total_cmp(&(b.norm() - 1.0).abs()))?;
    let phi = lam.arg().abs();
    let (re, im) = ns_residuals(fp.nu, &ns_coeffs(fp), phi);
    let after = fp
        .params
        .with_omega(fp.params.omega() * (1.0 + 1e-9))
        .ok()
        .and_then(|p| continue_fixed_point(fp.nu, &p, fp.t_star))
        .and_then(|f| crate::map::spectrum(&f).ok())
        .map(|s| s.unstable_count);
    Some(BifurcationPoint {
        kind: BifurcationKind::NS,
        q: fp.params.q(),
        omega: fp.params.omega(),
        nu: fp.nu,
        sigma: fp.params.sigma(),
        phi: Some(phi),
        residual: re.abs().max(im.abs()).max((lam.norm() - 1.0).abs()),
        unstable_after: after,
    })
}

/// NS points on the `ν`-branch where a complex pair crosses the unit circle.
pub fn ns_locus(nu: usize, q: f64, sigma: Sign, omega_range: (f64, f64)) -> Vec<BifurcationPoint> {
    if nu == 0 {
        return Vec::new();
    }
    branch_runs(nu, q, sigma, omega_range, samples_for(omega_range))
        .iter()
        .flat_map(|run| ns_points_on_run(run))
        .collect()
}

/// Zeros of `f(Ω)` along continuous runs, refined with Brent.
fn zeros_on_runs<F>(runs: &[Vec<FixedPoint>], f: F) -> Vec<FixedPoint>
where
    F: Fn(&FixedPoint) -> Option<f64>,
{
    let mut out = Vec::new();
    for run in runs {
        for w in run.windows(2) {
            let (Some(g0), Some(g1)) = (f(&w[0]), f(&w[1])) else {
                continue;
            };
            if g0 == 0.0 || g0.signum() == g1.signum() {
                continue;
            }
            let nu = w[0].nu;
            let (o0, o1) = (w[0].params.omega(), w[1].params.omega());
            let (t0, t1) = (w[0].t_star, w[1].t_star);
            let eval = |om: f64| -> Option<FixedPoint> {
                let p = w[0].params.with_omega(om).ok()?;
                continue_fixed_point(nu, &p, t0 + (om - o0) / (o1 - o0) * (t1 - t0))
            };
            let g = |om: f64| eval(om).and_then(|fp| f(&fp)).unwrap_or(f64::NAN);
            if let Ok(om) = brent(g, o0, o1, 1e-14, 200) {
                if let Some(fp) = eval(om) {
                    out.push(fp);
                }
            }
        }
    }
    out
}

/// Pitchfork points of the `ν`-branch: `λ = -1` with `ν` odd and negative
/// feedback. Only these combinations admit the bifurcation.
pub fn pitchfork_locus(nu: usize, q: f64, sigma: Sign, omega_range: (f64, f64)) -> Result<Vec<BifurcationPoint>> {
    if nu.is_multiple_of(2) {
        return Err(Error::InvalidParameters(format!(
            "pitchfork requires odd nu, got {nu}"
        )));
    }
    if sigma == Sign::Plus {
        return Err(Error::InvalidParameters("pitchfork requires negative feedback".into()));
    }
    Ok(pf_scan(nu, q, sigma, omega_range, samples_for(omega_range))
        .into_iter()
        .filter(|pt| pt.phi.is_none())
        .collect())
}

/// Every Ω where a real root of the `ν`-branch passes through `-1`, for any
/// `ν` and σ, located on the characteristic polynomial itself. Used to check
/// that the pitchfork is confined to odd `ν`, negative feedback and `ωT* > π`.
pub fn pf_scan(nu: usize, q: f64, sigma: Sign, omega_range: (f64, f64), samples: usize) -> Vec<BifurcationPoint> {
    let runs = branch_runs(nu, q, sigma, omega_range, samples);
    let char_at_minus_one = |fp: &FixedPoint| {
        let jc = jacobian_coeffs(fp).ok()?;
        Some(crate::poly::eval(&crate::map::char_poly(&jc, fp.nu), Complex64::new(-1.0, 0.0)).re)
    };
    zeros_on_runs(&runs, char_at_minus_one)
        .into_iter()
        .map(|fp| {
            let residual = if nu % 2 == 1 {
                pf_condition(&fp).map(f64::abs).unwrap_or(f64::NAN)
            } else {
                char_at_minus_one(&fp).map(f64::abs).unwrap_or(f64::NAN)
            };
            let after = fp
                .params
                .with_omega(fp.params.omega() * (1.0 + 1e-9))
                .ok()
                .and_then(|p| continue_fixed_point(fp.nu, &p, fp.t_star))
                .and_then(|f| crate::map::spectrum(&f).ok())
                .map(|s| s.unstable_count);
            BifurcationPoint {
                kind: BifurcationKind::PF,
                q,
                omega: fp.params.omega(),
                nu,
                sigma: fp.params.sigma(),
                phi: None,
                residual,
                unstable_after: after,
            }
        })
        .collect()
}

/// `ω T*` at a fixed point; the pitchfork needs it above `π`.
pub fn omega_t(fp: &FixedPoint) -> Option<f64> {
    fp.params.rates().omega().map(|w| w * fp.t_star)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionCell {
    pub exists: bool,
    pub stable: bool,
    pub unstable_count: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionGrid {
    pub nus: Vec<usize>,
    pub q: Vec<f64>,
    pub omega: Vec<f64>,
    pub sigma: Sign,
    /// `cells[k][i][j]` for `nus[k]`, `q[i]`, `omega[j]`.
    pub cells: Vec<Vec<Vec<RegionCell>>>,
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
    }
}

pub fn region_cell(nu: usize, p: &Parameters) -> RegionCell {
    match fixed_point(nu, p) {
        Ok(fp) if fp.is_valid() => {
            let uc = crate::map::spectrum(&fp).ok().map(|s| s.unstable_count);
            RegionCell {
                exists: true,
                stable: uc == Some(0),
                unstable_count: uc,
            }
        }
        _ => RegionCell {
            exists: false,
            stable: false,
            unstable_count: None,
        },
    }
}

pub fn region_scan(nus: &[usize], q_axis: &[f64], omega_axis: &[f64], sigma: Sign) -> Result<RegionGrid> {
    for &q in q_axis {
        Parameters::new(q, 1.0, sigma)?;
    }
    for &om in omega_axis {
        Parameters::new(1.0, om, sigma)?;
    }
    let cells = nus
        .iter()
        .map(|&nu| {
            q_axis
                .par_iter()
                .map(|&q| {
                    omega_axis
                        .iter()
                        .map(|&om| region_cell(nu, &Parameters::new(q, om, sigma).expect("checked above")))
                        .collect()
                })
                .collect()
        })
        .collect();
    Ok(RegionGrid {
        nus: nus.to_vec(),
        q: q_axis.to_vec(),
        omega: omega_axis.to_vec(),
        sigma,
        cells,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModeEnd {
    /// Ω range exhausted.
    RangeEnd,
    /// Type-2 corner collision.
    Corner2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeBranch {
    pub q: f64,
    pub sigma: Sign,
    pub samples: Vec<BranchSample>,
    /// Type-1 relabelling points crossed.
    pub relabels: Vec<BifurcationPoint>,
    pub end: ModeEnd,
    pub end_point: Option<BifurcationPoint>,
}

impl ModeBranch {
    pub fn nus(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.samples.iter().map(|s| s.fp.nu).collect();
        v.dedup();
        v
    }

    /// Symbol sequence of every sample.
    pub fn symbols(&self) -> Vec<[EventKind; 4]> {
        self.samples.iter().map(|s| s.fp.symbols()).collect()
    }

    /// NS points along the branch.
    pub fn ns_points(&self) -> Vec<BifurcationPoint> {
        let mut out = Vec::new();
        let mut run: Vec<FixedPoint> = Vec::new();
        for s in &self.samples {
            if run.last().is_some_and(|l| l.nu != s.fp.nu) {
                out.extend(ns_points_on_run(&run));
                run.clear();
            }
            run.push(s.fp);
        }
        out.extend(ns_points_on_run(&run));
        out.sort_by(|a, b| a.omega.total_cmp(&b.omega));
        out
    }
}

/// Relative distance in Ω within which a lost branch is attributed to the
/// type-2 corner line.
const CORNER_SNAP: f64 = 1e-6;

/// Follow the mode through the valid `ν0` fixed point at `omega_range.0`
/// towards `omega_range.1` (either direction) in `steps` uniform steps.
pub fn mode_trace(nu0: usize, q: f64, sigma: Sign, omega_range: (f64, f64), steps: usize) -> Result<ModeBranch> {
    let (o0, o1) = omega_range;
    let p0 = Parameters::new(q, o0, sigma)?;
    Parameters::new(q, o1, sigma)?;
    let start = fixed_point(nu0, &p0)?;
    if !start.is_valid() {
        return Err(Error::InvalidState(format!(
            "no valid nu = {nu0} fixed point at Q = {q}, Omega = {o0}"
        )));
    }
    let steps = steps.max(1);
    let forward = o1 >= o0;
    let mut samples = vec![BranchSample::new(start)];
    let mut relabels = Vec::new();
    let mut prev = start;
    for i in 1..=steps {
        let om = o0 + (o1 - o0) * i as f64 / steps as f64;
        let p = Parameters::new(q, om, sigma)?;
        if let Some(fp) = continue_fixed_point(prev.nu, &p, prev.t_star) {
            samples.push(BranchSample::new(fp));
            prev = fp;
            continue;
        }
        // relabel: the crossing count changes by one, T* is continuous
        let next_nu = if forward { prev.nu + 1 } else { prev.nu.checked_sub(1).unwrap_or(usize::MAX) };
        let relabeled = (next_nu != usize::MAX)
            .then(|| continue_fixed_point(next_nu, &p, prev.t_star))
            .flatten();
        if let Some(fp) = relabeled {
            let corner = corner1_point(&prev, &fp);
            relabels.push(corner);
            samples.push(BranchSample::new(fp));
            prev = fp;
            continue;
        }
        // the mode ends where crossing and switch merge
        let last = edge_of_validity(&prev, om);
        let k2 = 2 * last.nu + 1;
        if let Some(om2) = corner_omega(q, k2) {
            let lo = last.params.omega().min(om);
            let hi = last.params.omega().max(om);
            if om2 >= lo * (1.0 - CORNER_SNAP) && om2 <= hi * (1.0 + CORNER_SNAP) {
                return Ok(ModeBranch {
                    q,
                    sigma,
                    samples,
                    relabels,
                    end: ModeEnd::Corner2,
                    end_point: Some(BifurcationPoint {
                        kind: BifurcationKind::Corner2,
                        q,
                        omega: om2,
                        nu: last.nu,
                        sigma,
                        phi: None,
                        residual: (last.z_star - last.delta_star).abs(),
                        unstable_after: None,
                    }),
                });
            }
        }
        return Err(Error::LostBranch {
            omega: last.params.omega(),
            nu: last.nu,
        });
    }
    Ok(ModeBranch {
        q,
        sigma,
        samples,
        relabels,
        end: ModeEnd::RangeEnd,
        end_point: None,
    })
}

/// Last valid fixed point of `fp`'s branch between `fp` and `omega_bad`.
fn edge_of_validity(fp: &FixedPoint, omega_bad: f64) -> FixedPoint {
    let mut good = *fp;
    let mut bad = omega_bad;
    for _ in 0..200 {
        let om = 0.5 * (good.params.omega() + bad);
        if (bad - good.params.omega()).abs() < 1e-14 * bad.abs() || om == bad || om == good.params.omega() {
            break;
        }
        let Ok(p) = good.params.with_omega(om) else { break };
        match continue_fixed_point(good.nu, &p, good.t_star) {
            Some(f) => good = f,
            None => bad = om,
        }
    }
    good
}

fn corner1_point(before: &FixedPoint, after: &FixedPoint) -> BifurcationPoint {
    // the switch headpoint reaches x = 0 where the lower crossing count stops
    let lower = if before.nu < after.nu { before } else { after };
    let q = lower.params.q();
    let omega = corner_omega(q, lower.nu + 1).unwrap_or(f64::NAN);
    let edge = edge_of_validity(lower, if before.nu < after.nu { after.params.omega() } else { before.params.omega() });
    BifurcationPoint {
        kind: BifurcationKind::Corner1,
        q,
        omega,
        nu: lower.nu,
        sigma: lower.params.sigma(),
        phi: None,
        residual: x_h(&edge).abs(),
        unstable_after: None,
    }
}

/// Upper end in Ω of the mode whose lower crossing count is `nu_low`: the
/// type-2 line of its upper crossing count. Underdamped only.
pub fn mode_end(nu_low: usize, q: f64) -> Option<f64> {
    corner_omega(q, 2 * nu_low + 3)
}

/// Lower crossing count of the mode containing `nu`: modes pair an even and
/// the following odd count for negative feedback, an odd and the following
/// even count for positive feedback.
pub fn mode_low_nu(nu: usize, sigma: Sign) -> usize {
    let low_is_even = sigma == Sign::Minus;
    if nu.is_multiple_of(2) == low_is_even {
        nu
    } else {
        nu.saturating_sub(1)
    }
}

/// NS points of the whole mode containing `nu` within `omega_range`.
pub fn mode_ns_locus(nu: usize, q: f64, sigma: Sign, omega_range: (f64, f64)) -> Result<Vec<BifurcationPoint>> {
    let low = mode_low_nu(nu, sigma);
    let (lo, hi) = omega_range;
    let mut pts: Vec<BifurcationPoint> = [low, low + 1]
        .iter()
        .flat_map(|&n| ns_locus(n, q, sigma, (lo, hi)))
        .collect();
    if q > 0.5 {
        // keep the points of this mode only
        if let Some(end) = mode_end(low, q) {
            let relabel = corner_omega(q, low + 1).unwrap_or(f64::INFINITY);
            pts.retain(|p| {
                p.omega < end && ((p.nu == low && p.omega < relabel) || (p.nu == low + 1 && p.omega > relabel))
            });
        }
    }
    pts.sort_by(|a, b| a.omega.total_cmp(&b.omega));
    Ok(pts)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodSample {
    pub nu: usize,
    pub omega: f64,
    pub t_star: f64,
    pub inv_period: f64,
    pub x_h: f64,
    pub stable: bool,
    pub unstable_count: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodDiagram {
    pub q: f64,
    pub sigma: Sign,
    pub samples: Vec<PeriodSample>,
    pub markers: Vec<BifurcationPoint>,
    /// Normalised 3 dB edges of the filter.
    pub passband: (f64, f64),
}

impl PeriodDiagram {
    /// Passband edges expressed as inverse periods at `Ω`.
    pub fn passband_inv_period(&self, omega: f64) -> (f64, f64) {
        (omega * self.passband.0 / (2.0 * PI), omega * self.passband.1 / (2.0 * PI))
    }
}

pub fn period_diagram(nus: &[usize], q: f64, sigma: Sign, omega_range: (f64, f64), samples: usize) -> Result<PeriodDiagram> {
    Parameters::new(q, omega_range.0, sigma)?;
    Parameters::new(q, omega_range.1, sigma)?;
    let omegas = linspace(omega_range.0, omega_range.1, samples.max(2));
    let mut rows = Vec::new();
    let mut markers = Vec::new();
    for &nu in nus {
        let part: Vec<PeriodSample> = omegas
            .par_iter()
            .filter_map(|&om| {
                let p = Parameters::new(q, om, sigma).ok()?;
                let fp = fixed_point(nu, &p).ok().filter(|f| f.is_valid())?;
                let uc = crate::map::spectrum(&fp).ok().map(|s| s.unstable_count);
                Some(PeriodSample {
                    nu,
                    omega: om,
                    t_star: fp.t_star,
                    inv_period: fp.inv_period(),
                    x_h: x_h(&fp),
                    stable: uc == Some(0),
                    unstable_count: uc,
                })
            })
            .collect();
        rows.extend(part);
        markers.extend(ns_locus(nu, q, sigma, omega_range));
        if nu % 2 == 1 && sigma == Sign::Minus {
            markers.extend(pitchfork_locus(nu, q, sigma, omega_range)?);
        }
        if let Some((o1, o2)) = corner_lines(nu, q) {
            for (kind, om) in [(BifurcationKind::Corner1, o1), (BifurcationKind::Corner2, o2)] {
                if om >= omega_range.0 && om <= omega_range.1 {
                    markers.push(BifurcationPoint {
                        kind,
                        q,
                        omega: om,
                        nu,
                        sigma,
                        phi: None,
                        residual: 0.0,
                        unstable_after: None,
                    });
                }
            }
        }
    }
    markers.sort_by(|a, b| (a.nu, a.omega).partial_cmp(&(b.nu, b.omega)).unwrap_or(std::cmp::Ordering::Equal));
    Ok(PeriodDiagram {
        q,
        sigma,
        samples: rows,
        markers,
        passband: passband(q),
    })
}

/// Delay-extension image of a switching interval: the same solution viewed
/// with `2n` more crossings per delay.
pub fn delay_extension(nu: usize, omega: f64, t_star: f64, n: usize) -> (usize, f64, f64) {
    let f = 1.0 + 2.0 * n as f64 * t_star;
    (nu + 2 * n, omega * f, t_star / f)
}

/// Whether the regime admits the corner lines at all.
pub fn has_corners(p: &Parameters) -> bool {
    p.rates().regime == Regime::Underdamped
}
