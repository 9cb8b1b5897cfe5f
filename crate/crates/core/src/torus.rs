//! Poincaré sections of long runs, for locating invariant curves past a
//! Neimark-Sacker point.

use serde::{Deserialize, Serialize};

use crate::classify::{classify, cloud_shape, is_closed_curve, ClassifyConfig, CloudShape, OrbitTag};
use crate::flow::{Headpoint, Parameters, Sign};
use crate::map::fixed_point;
use crate::sim::{simulate, Budget, SimOptions, SystemState};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TorusConfig {
    /// Section points (H events) computed per Ω.
    pub iterates: usize,
    /// Fraction of the section discarded as transient.
    pub transient: f64,
    /// Start each Ω from the final state of the previous one.
    pub warm_start: bool,
    /// After a slice that settled on a periodic orbit, restart from the
    /// displaced `(nu, perturb)` orbit instead, when it exists. A warm start
    /// from an orbit that just lost stability takes very long to spiral out.
    pub reseed: Option<(usize, f64)>,
    pub classify: ClassifyConfig,
    pub sim: SimOptions,
}

impl Default for TorusConfig {
    fn default() -> Self {
        TorusConfig {
            iterates: 100_000,
            transient: 0.2,
            warm_start: true,
            reseed: None,
            classify: ClassifyConfig::default(),
            sim: SimOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorusSlice {
    pub omega: f64,
    pub tag: OrbitTag,
    pub label: Option<String>,
    /// Section after the transient.
    pub section: Vec<Headpoint>,
    pub shape: Option<CloudShape>,
    /// Failure that ended the run early, if any.
    pub error: Option<String>,
    pub final_state: Option<SystemState>,
}

impl TorusSlice {
    pub fn is_closed_curve(&self) -> bool {
        self.tag == OrbitTag::Quasiperiodic
    }
}

/// Run one Ω and classify its section.
pub fn torus_slice(p: &Parameters, seed: &SystemState, cfg: &TorusConfig) -> TorusSlice {
    let omega = p.omega();
    // four events per H event on the four-symbol orbits and their tori
    let budget = Budget::events(4 * cfg.iterates + 8);
    let mut st = seed.clone();
    st.t = 0.0;
    // shift the stored crossings with the clock
    let shift = seed.t;
    for z in st.zeros.iter_mut() {
        *z -= shift;
    }
    let rec = match simulate(p, &st, budget, &cfg.sim) {
        Ok(r) => r,
        Err(e) => {
            return TorusSlice {
                omega,
                tag: OrbitTag::Undecided,
                label: None,
                section: Vec::new(),
                shape: None,
                error: Some(e.to_string()),
                final_state: None,
            }
        }
    };
    let skip = ((rec.h_section.len() as f64) * cfg.transient).floor() as usize;
    let section = rec.h_section[skip.min(rec.h_section.len())..].to_vec();
    let class = classify(&rec, &cfg.classify);
    let tag = match class.tag {
        OrbitTag::Periodic | OrbitTag::Nonoscillatory => class.tag,
        _ if is_closed_curve(&section, &cfg.classify) => OrbitTag::Quasiperiodic,
        _ => OrbitTag::Undecided,
    };
    TorusSlice {
        omega,
        tag,
        label: class.label_string(),
        shape: cloud_shape(&section, cfg.classify.angle_bins),
        section,
        error: None,
        final_state: Some(rec.final_state),
    }
}

/// Sections for every Ω in `omegas`, in order, optionally warm-started.
/// Failures are recorded per Ω and do not stop the scan.
pub fn torus_scan(q: f64, sigma: Sign, omegas: &[f64], seed: &SystemState, cfg: &TorusConfig) -> Result<Vec<TorusSlice>> {
    let mut out = Vec::with_capacity(omegas.len());
    let mut state = seed.clone();
    let mut settled = false;
    for &om in omegas {
        let p = Parameters::new(q, om, sigma)?;
        if let (true, Some((nu, perturb))) = (settled, cfg.reseed) {
            if let Ok(st) = fixed_point_seed(nu, &p, perturb) {
                state = st;
            }
        }
        let slice = torus_slice(&p, &state, cfg);
        settled = slice.tag == OrbitTag::Periodic;
        if cfg.warm_start {
            if let Some(fs) = &slice.final_state {
                state = fs.clone();
            }
        }
        out.push(slice);
    }
    Ok(out)
}

/// Event state on the `ν` four-symbol orbit at `p`, with `y_Z` displaced by
/// `perturb`.
pub fn fixed_point_seed(nu: usize, p: &Parameters, perturb: f64) -> Result<SystemState> {
    let fp = fixed_point(nu, p)?;
    if !fp.is_valid() {
        return Err(Error::InvalidState(format!(
            "no valid nu = {nu} orbit at Q = {}, Omega = {}",
            p.q(),
            p.omega()
        )));
    }
    let mut sv = fp.state_vector();
    sv.y_z += perturb;
    SystemState::from_map_state(p, &sv)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FollowConfig {
    /// Initial step in Q; halved on failure.
    pub dq: f64,
    pub min_dq: f64,
    /// Increment for the Ω-offset search around the previous offset.
    pub offset_step: f64,
    pub offset_tries: usize,
}

impl Default for FollowConfig {
    fn default() -> Self {
        FollowConfig { dq: 0.005, min_dq: 1e-4, offset_step: 1e-3, offset_tries: 8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FollowStep {
    pub q: f64,
    pub omega: f64,
    /// Ω minus the NS point of the mode at this Q.
    pub offset: f64,
    pub extent: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TorusPath {
    pub steps: Vec<FollowStep>,
    pub final_state: SystemState,
    /// Whether the last step sits at the requested end of the Q range.
    pub reached: bool,
}

/// Carry an invariant curve along Q. Ω is measured from the NS point of the
/// `nu` mode inside `window`; at each Q step the offset is searched outward
/// from its previous value until a closed curve is found again, and the step
/// is halved when none is.
pub fn follow_torus(
    nu: usize,
    sigma: Sign,
    q_range: (f64, f64),
    window: (f64, f64),
    offset0: f64,
    seed: &SystemState,
    cfg: &TorusConfig,
    follow: &FollowConfig,
) -> Result<TorusPath> {
    let ns_at = |q: f64| -> Result<f64> {
        crate::atlas::mode_ns_locus(nu, q, sigma, window)?
            .first()
            .map(|b| b.omega)
            .ok_or_else(|| Error::NoConvergence(format!("no NS point of nu = {nu} at Q = {q}")))
    };
    let (q0, q1) = q_range;
    let dir = if q1 >= q0 { 1.0 } else { -1.0 };
    let mut q = q0;
    let mut offset = offset0;
    let mut dq = follow.dq;
    let mut state = seed.clone();
    let mut steps = Vec::new();

    let p0 = Parameters::new(q0, ns_at(q0)? + offset0, sigma)?;
    // the first slice also serves as warm-up for a seed near the orbit
    let first = torus_slice(&p0, &state, cfg);
    steps.push(FollowStep { q: q0, omega: p0.omega(), offset, extent: first.shape.map_or(0.0, |c| c.extent) });
    state = first.final_state.unwrap_or(state);

    while dir * (q1 - q) > 1e-12 {
        let qn = if dir * (q1 - (q + dir * dq)) < 0.0 { q1 } else { q + dir * dq };
        let ns = ns_at(qn)?;
        let mut found = None;
        'search: for k in 0..follow.offset_tries {
            for sgn in [-1.0, 1.0] {
                let o = offset + sgn * follow.offset_step * k as f64;
                let p = Parameters::new(qn, ns + o, sigma)?;
                let s = torus_slice(&p, &state, cfg);
                if s.is_closed_curve() {
                    found = Some((o, s));
                    break 'search;
                }
                if k == 0 {
                    break;
                }
            }
        }
        match found {
            Some((o, s)) => {
                steps.push(FollowStep { q: qn, omega: ns + o, offset: o, extent: s.shape.map_or(0.0, |c| c.extent) });
                if let Some(fs) = s.final_state {
                    state = fs;
                }
                offset = o;
                q = qn;
            }
            None => {
                dq *= 0.5;
                if dq < follow.min_dq {
                    return Ok(TorusPath { steps, final_state: state, reached: false });
                }
            }
        }
    }
    Ok(TorusPath { steps, final_state: state, reached: true })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Criticality {
    /// a small invariant curve exists on the unstable side
    Supercritical,
    /// the orbit leaves the neighbourhood on the unstable side
    Subcritical,
    Undetermined,
}

/// Decide the criticality of an NS point by simulating just inside the
/// unstable side at two distances from it. Supercritical: the orbit stays on
/// a curve around the former orbit whose size shrinks with the distance.
/// Subcritical: it settles on some other periodic orbit, or its excursion
/// does not shrink. Undetermined when the excursion has not settled within
/// the budget.
pub fn ns_criticality(nu: usize, p_ns: &Parameters, unstable_above: bool, cfg: &TorusConfig) -> Result<Criticality> {
    let om = p_ns.omega();
    let side = if unstable_above { 1.0 } else { -1.0 };
    let mut excursion = Vec::new();
    for rel in [1e-3, 2.5e-4] {
        let p = p_ns.with_omega(om + side * rel * om)?;
        let seed = fixed_point_seed(nu, &p, 1e-2)?;
        let slice = torus_slice(&p, &seed, cfg);
        if slice.tag == OrbitTag::Periodic || slice.tag == OrbitTag::Nonoscillatory {
            return Ok(Criticality::Subcritical);
        }
        let fp = fixed_point(nu, &p)?;
        let h = p.rates().apply_flow(fp.delta_star, Headpoint::new(0.0, fp.y_z_star), Sign::Minus);
        let n = slice.section.len();
        if n < 8 {
            return Ok(Criticality::Undetermined);
        }
        let far = |part: &[Headpoint]| part.iter().map(|x| x.dist(&h).min(x.dist(&-h))).fold(0.0, f64::max);
        let (middle, tail) = (far(&slice.section[n / 2..n * 3 / 4]), far(&slice.section[n * 3 / 4..]));
        // still spiralling out at the end of the run
        if tail > 1.05 * middle {
            return Ok(Criticality::Undetermined);
        }
        excursion.push(tail);
    }
    Ok(if excursion[1] < 0.75 * excursion[0] {
        Criticality::Supercritical
    } else {
        Criticality::Subcritical
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short() -> TorusConfig {
        TorusConfig { iterates: 5000, ..Default::default() }
    }

    #[test]
    fn below_ns_the_section_collapses_to_the_orbit() {
        let p = Parameters::with_sigma(1.5, 14.70, -1).unwrap();
        let seed = fixed_point_seed(3, &p, 1e-3).unwrap();
        let s = torus_slice(&p, &seed, &short());
        assert_eq!(s.tag, OrbitTag::Periodic);
        assert_eq!(s.label.as_deref(), Some("[H,Z,Hbar,Zbar]_3^S"));
        assert!(!s.is_closed_curve());
        assert!(s.section.len() >= 4000);
    }

    #[test]
    fn seed_needs_a_valid_orbit() {
        let p = Parameters::with_sigma(1.5, 2.0, -1).unwrap();
        assert!(fixed_point_seed(3, &p, 0.0).is_err());
    }

    #[test]
    fn scan_records_nonoscillating_runs() {
        let seed = SystemState::constant_history(0.1, -2.0).unwrap();
        let out = torus_scan(0.4, Sign::Minus, &[7.0, 7.5], &seed, &short()).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[0].tag, OrbitTag::Nonoscillatory);
        assert!(out.iter().all(|s| !s.is_closed_curve()));
    }
}
