//! Event-to-event simulation of the delayed relay system.
//!
//! The state at time `t` is the headpoint `(x, y)` plus the zero crossings of
//! `x` inside the delay window `(t-1, t]`. Two kinds of event change it:
//! a new zero crossing of `x` (Z / Z̄) and the oldest stored crossing leaving
//! the window, which flips the relay output (H / H̄). Between events the flow
//! is the closed form of [`crate::flow`], so the only numerics are the
//! crossing times.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::flow::{FlowSign, Headpoint, Parameters, Rates, Regime, Sign};
use crate::map::StateVector;
use crate::roots::brent;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    /// Switch and crossing closer than this are reported as a corner collision.
    pub tie_tol: f64,
    /// Absolute time tolerance of crossing refinement.
    pub root_tol: f64,
    pub max_iter: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            tie_tol: 1e-10,
            root_tol: 1e-15,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    /// upward crossing of x
    Z,
    /// downward crossing of x
    Zbar,
    /// x(t-1) turns positive
    H,
    /// x(t-1) turns negative
    Hbar,
}

impl EventKind {
    pub fn is_zero(self) -> bool {
        matches!(self, EventKind::Z | EventKind::Zbar)
    }

    pub fn is_switch(self) -> bool {
        !self.is_zero()
    }

    /// Image under `(x, y) -> (-x, -y)`.
    pub fn flipped(self) -> EventKind {
        match self {
            EventKind::Z => EventKind::Zbar,
            EventKind::Zbar => EventKind::Z,
            EventKind::H => EventKind::Hbar,
            EventKind::Hbar => EventKind::H,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            EventKind::Z => "Z",
            EventKind::Zbar => "Zbar",
            EventKind::H => "H",
            EventKind::Hbar => "Hbar",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub kind: EventKind,
    pub time: f64,
    /// Headpoint at the event (x is exactly 0 at Z-type events).
    pub x: f64,
    pub y: f64,
}

impl Event {
    pub fn headpoint(&self) -> Headpoint {
        Headpoint::new(self.x, self.y)
    }
}

/// Headpoint plus the zero-crossing history inside the delay window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    pub t: f64,
    pub v: Headpoint,
    /// Crossing times, most recent first: `t >= τ₁ > τ₂ > … > τ_k > t-1`.
    pub zeros: VecDeque<f64>,
    /// Sign of `x(t-1)` on the current segment.
    pub xsign_delayed: Sign,
}

impl SystemState {
    /// History `x ≡ x0` on `[-1, 0]` with headpoint `(x0, y0)` at `t = 0`.
    pub fn constant_history(x0: f64, y0: f64) -> Result<SystemState> {
        let sign = Sign::from_f64(x0)
            .ok_or_else(|| Error::InvalidState("constant history needs x0 != 0".into()))?;
        if !y0.is_finite() || !x0.is_finite() {
            return Err(Error::InvalidState("non-finite initial headpoint".into()));
        }
        Ok(SystemState {
            t: 0.0,
            v: Headpoint::new(x0, y0),
            zeros: VecDeque::new(),
            xsign_delayed: sign,
        })
    }

    /// History with `k` sign changes equally spaced in `(-1, 0)`, at
    /// `-(j - 1/2)/k`, ending at the headpoint `(x0, y0)`.
    pub fn oscillating_history(k: usize, x0: f64, y0: f64) -> Result<SystemState> {
        let mut st = SystemState::constant_history(x0, y0)?;
        st.zeros = (1..=k).map(|j| -(j as f64 - 0.5) / k as f64).collect();
        st.xsign_delayed = st.xsign_delayed * Sign::parity(k);
        Ok(st)
    }

    /// State at a Z-type event described by a reduced-map state vector,
    /// positioned at `t = 0` with relay output `-1` on the first segment.
    pub fn from_map_state(p: &Parameters, s: &StateVector) -> Result<SystemState> {
        let delta = s.delta()?;
        if delta <= 0.0 {
            return Err(Error::InvalidState(format!("delta = {delta} leaves no switch inside the window")));
        }
        let mut zeros = VecDeque::with_capacity(s.nu() + 1);
        let mut tau = 0.0;
        zeros.push_back(tau);
        for &dt in &s.intervals {
            tau -= dt;
            zeros.push_back(tau);
        }
        Ok(SystemState {
            t: 0.0,
            v: Headpoint::new(0.0, s.y_z),
            zeros,
            xsign_delayed: -p.sigma(),
        })
    }

    /// Inverse of [`SystemState::from_map_state`] at a Z-type event, mirrored
    /// so that the relay output on the next segment is `-1`.
    pub fn to_map_state(&self, p: &Parameters) -> Option<StateVector> {
        if self.v.x != 0.0 || self.zeros.front() != Some(&self.t) {
            return None;
        }
        let s = self.relay(p);
        let y_z = -s.value() * self.v.y;
        let intervals = self
            .zeros
            .iter()
            .zip(self.zeros.iter().skip(1))
            .map(|(a, b)| a - b)
            .collect();
        Some(StateVector { y_z, intervals })
    }

    pub fn k(&self) -> usize {
        self.zeros.len()
    }

    /// Sign of `x` just after `t`.
    pub fn xsign_current(&self) -> Sign {
        self.xsign_delayed * Sign::parity(self.zeros.len())
    }

    /// Relay output `σ sign(x(t-1))` on the current segment.
    pub fn relay(&self, p: &Parameters) -> FlowSign {
        p.sigma() * self.xsign_delayed
    }

    /// Image under `(x, y) -> (-x, -y)`.
    pub fn mirrored(&self) -> SystemState {
        SystemState {
            t: self.t,
            v: -self.v,
            zeros: self.zeros.clone(),
            xsign_delayed: -self.xsign_delayed,
        }
    }

    /// Panics unless the window invariant holds; used by tests and debug runs.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        let mut prev = self.t;
        for (i, &z) in self.zeros.iter().enumerate() {
            if i == 0 {
                if z > self.t {
                    return Err(format!("zero {z} after t = {}", self.t));
                }
            } else if z >= prev {
                return Err(format!("zeros not decreasing: {prev} then {z}"));
            }
            if z <= self.t - 1.0 {
                return Err(format!("zero {z} outside window of t = {}", self.t));
            }
            prev = z;
        }
        Ok(())
    }
}

/// Time until the oldest stored crossing leaves the delay window.
pub fn next_h_delay(st: &SystemState) -> Option<f64> {
    st.zeros.back().map(|&tau| tau + 1.0 - st.t)
}

/// Time until `x` next vanishes under the frozen relay output `s`, or `None`
/// if it never does.
pub fn next_z_delay(r: &Rates, st: &SystemState, s: FlowSign, cfg: &SimConfig) -> Result<Option<f64>> {
    let x0 = st.v.x;
    // x(t) = e^{-μt} (x0 gcos(t) + beta gsinc(t))
    let beta = -r.mu * x0 - 2.0 * r.mu * (st.v.y - s.value());
    match r.regime {
        Regime::Underdamped => {
            let half = r.half_period();
            if x0 == 0.0 {
                return Ok((beta != 0.0).then_some(half));
            }
            // consecutive zeros of the damped sinusoid are π/ω apart
            let h = |t: f64| x0 * r.gcos(t) + beta * r.gsinc(t);
            let h_end = h(half);
            if h_end == 0.0 {
                return Ok(Some(half));
            }
            if h_end.signum() == x0.signum() {
                // |x0| below resolution of the bracket end: crossing is immediate or at π/ω
                let lin = -x0 / beta;
                return Ok(Some(if lin > 0.0 && lin < half { lin } else { half }));
            }
            brent(h, 0.0, half, cfg.root_tol, cfg.max_iter).map(Some)
        }
        Regime::Overdamped | Regime::Critical => {
            if x0 == 0.0 {
                return Ok(None);
            }
            // sign(x) = sign(x0 + beta gtanc(t)); gtanc increases monotonically,
            // so there is at most one crossing
            let g = |t: f64| x0 + beta * r.gtanc(t);
            let limit = match r.regime {
                Regime::Overdamped => x0 + beta / r.omega_abs,
                _ => beta,
            };
            if limit == 0.0 || limit.signum() == x0.signum() {
                return Ok(None);
            }
            let mut hi = 1.0 / r.mu;
            let mut tries = 0;
            while g(hi).signum() == x0.signum() {
                hi *= 2.0;
                tries += 1;
                if tries > 400 || !hi.is_finite() {
                    return Err(Error::NoConvergence("could not bracket overdamped crossing".into()));
                }
            }
            brent(g, 0.0, hi, cfg.root_tol, cfg.max_iter).map(Some)
        }
    }
}

/// Advance to the next event.
pub fn step(p: &Parameters, r: &Rates, st: &SystemState, cfg: &SimConfig) -> Result<(Event, SystemState)> {
    let s = st.relay(p);
    let h_delay = next_h_delay(st);
    let z_delay = next_z_delay(r, st, s, cfg)?;
    let take_switch = match (h_delay, z_delay) {
        (None, None) => return Err(Error::Nonoscillatory { time: st.t }),
        (Some(_), None) => true,
        (None, Some(_)) => false,
        (Some(d), Some(z)) => {
            if (d - z).abs() < cfg.tie_tol {
                return Err(Error::CornerCollision {
                    time: st.t,
                    h_delay: d,
                    z_delay: z,
                });
            }
            d < z
        }
    };
    let mut next = st.clone();
    let event = if take_switch {
        let d = h_delay.unwrap_or_default();
        let tau = next.zeros.pop_back().unwrap_or_default();
        next.v = r.apply_flow(d, st.v, s);
        next.t = tau + 1.0;
        next.xsign_delayed = -st.xsign_delayed;
        let kind = match next.xsign_delayed {
            Sign::Plus => EventKind::H,
            Sign::Minus => EventKind::Hbar,
        };
        Event {
            kind,
            time: next.t,
            x: next.v.x,
            y: next.v.y,
        }
    } else {
        let z = z_delay.unwrap_or_default();
        let before = st.xsign_current();
        let v = r.apply_flow(z, st.v, s);
        next.v = Headpoint::new(0.0, v.y);
        next.t = st.t + z;
        next.zeros.push_front(next.t);
        let kind = match before {
            Sign::Minus => EventKind::Z,
            Sign::Plus => EventKind::Zbar,
        };
        Event {
            kind,
            time: next.t,
            x: 0.0,
            y: v.y,
        }
    };
    Ok((event, next))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Budget {
    pub max_events: usize,
    pub t_max: Option<f64>,
}

impl Budget {
    pub fn events(n: usize) -> Self {
        Budget {
            max_events: n,
            t_max: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    /// event budget used up
    Budget,
    /// time horizon reached
    Horizon,
    /// no crossing and no pending switch: the headpoint approaches the
    /// equilibrium without ever reaching the switching manifold again
    Nonoscillatory,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitRecord {
    pub params: Parameters,
    pub events: Vec<Event>,
    pub samples: Option<Vec<Sample>>,
    /// Headpoints at H events, the section of the map between H events.
    pub h_section: Vec<Headpoint>,
    pub final_state: SystemState,
    pub termination: Termination,
}

impl OrbitRecord {
    pub fn intervals(&self) -> Vec<f64> {
        self.events.windows(2).map(|w| w[1].time - w[0].time).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SimOptions {
    /// Dense output spacing; `None` records events only.
    pub dense_dt: Option<f64>,
    pub config: SimConfig,
}

pub fn simulate(p: &Parameters, st0: &SystemState, budget: Budget, opts: &SimOptions) -> Result<OrbitRecord> {
    if let Err(msg) = st0.check_invariants() {
        return Err(Error::InvalidState(msg));
    }
    let r = p.rates();
    let cfg = opts.config;
    let mut st = st0.clone();
    let mut events = Vec::with_capacity(budget.max_events.min(1 << 20));
    let mut h_section = Vec::new();
    let mut samples = opts.dense_dt.map(|_| vec![Sample { t: st.t, x: st.v.x, y: st.v.y }]);
    let mut termination = Termination::Budget;

    while events.len() < budget.max_events {
        if let Some(t_max) = budget.t_max {
            if st.t >= t_max {
                termination = Termination::Horizon;
                break;
            }
        }
        let (ev, next) = match step(p, &r, &st, &cfg) {
            Ok(x) => x,
            Err(Error::Nonoscillatory { .. }) => {
                termination = Termination::Nonoscillatory;
                break;
            }
            Err(e) => return Err(e),
        };
        if let (Some(dt), Some(out)) = (opts.dense_dt, samples.as_mut()) {
            let s = st.relay(p);
            let mut k = (st.t / dt).floor() + 1.0;
            while k * dt < next.t {
                let tk = k * dt;
                let v = r.apply_flow(tk - st.t, st.v, s);
                out.push(Sample { t: tk, x: v.x, y: v.y });
                k += 1.0;
            }
            out.push(Sample { t: ev.time, x: ev.x, y: ev.y });
        }
        if ev.kind == EventKind::H {
            h_section.push(ev.headpoint());
        }
        events.push(ev);
        st = next;
    }
    if termination == Termination::Nonoscillatory {
        if let (Some(dt), Some(out)) = (opts.dense_dt, samples.as_mut()) {
            // trail the final approach to the equilibrium until the horizon (or one delay)
            let s = st.relay(p);
            let end = budget.t_max.unwrap_or(st.t + 1.0);
            let mut k = (st.t / dt).floor() + 1.0;
            while k * dt <= end {
                let v = r.apply_flow(k * dt - st.t, st.v, s);
                out.push(Sample { t: k * dt, x: v.x, y: v.y });
                k += 1.0;
            }
        }
    }
    Ok(OrbitRecord {
        params: *p,
        events,
        samples,
        h_section,
        final_state: st,
        termination,
    })
}
