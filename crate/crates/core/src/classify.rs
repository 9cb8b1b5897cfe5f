//! Orbit labelling from an event log.
//!
//! A periodic orbit is labelled `[S₁, …, Sₙ]_ν^𝔰` where the sequence starts
//! at an H event, `ν` counts the crossings inside the unit interval preceding
//! a crossing, and `𝔰` is `S` when shifting by half a period maps the orbit to
//! its mirror image, `A` otherwise.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::flow::Headpoint;
use crate::sim::{EventKind, OrbitRecord, Termination};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifyConfig {
    /// Records shorter than this are not classified.
    pub min_events: usize,
    /// Largest event period searched.
    pub max_period: usize,
    /// Interval tolerance, relative to the period.
    pub rel_tol: f64,
    /// Consecutive periods that must agree.
    pub periods: usize,
    /// A shorter cycle matching to this relative tolerance means the
    /// transient has not settled.
    pub alias_tol: f64,
    /// Absolute headpoint tolerance of the mirror test.
    pub sym_tol: f64,
    /// Allowed relative drift of the section's extent across the tail.
    pub extent_tol: f64,
    /// Sections smaller than this are treated as a point.
    pub min_extent: f64,
    /// Angular bins around the centroid that a closed curve must visit.
    pub angle_bins: usize,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        ClassifyConfig {
            min_events: 200,
            max_period: 64,
            rel_tol: 1e-8,
            periods: 3,
            alias_tol: 1e-4,
            sym_tol: 1e-6,
            extent_tol: 0.05,
            min_extent: 1e-7,
            angle_bins: 32,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OrbitTag {
    Periodic,
    Quasiperiodic,
    Nonoscillatory,
    Undecided,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Symmetry {
    S,
    A,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolLabel {
    pub sequence: Vec<EventKind>,
    pub nu: usize,
    pub symmetry: Symmetry,
}

impl fmt::Display for SymbolLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let seq: Vec<&str> = self.sequence.iter().map(|k| k.symbol()).collect();
        let sym = match self.symmetry {
            Symmetry::S => "S",
            Symmetry::A => "A",
        };
        write!(f, "[{}]_{}^{}", seq.join(","), self.nu, sym)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitClass {
    pub tag: OrbitTag,
    pub label: Option<SymbolLabel>,
    /// Period in time units.
    pub period: Option<f64>,
}

impl OrbitClass {
    fn tagged(tag: OrbitTag) -> Self {
        OrbitClass {
            tag,
            label: None,
            period: None,
        }
    }

    pub fn label_string(&self) -> Option<String> {
        self.label.as_ref().map(|l| l.to_string())
    }
}

/// Shape statistics of a planar point cloud.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CloudShape {
    /// Diagonal of the bounding box.
    pub extent: f64,
    pub centroid: Headpoint,
    /// Fraction of angular bins around the centroid that contain a point.
    pub angular_coverage: f64,
    /// Mean distance from the centroid.
    pub mean_radius: f64,
    /// Smallest distance from the centroid, relative to the mean.
    pub min_radius_ratio: f64,
}

pub fn cloud_shape(points: &[Headpoint], bins: usize) -> Option<CloudShape> {
    if points.is_empty() {
        return None;
    }
    let n = points.len() as f64;
    let (mut xmin, mut xmax, mut ymin, mut ymax) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    let (mut sx, mut sy) = (0.0, 0.0);
    for p in points {
        xmin = xmin.min(p.x);
        xmax = xmax.max(p.x);
        ymin = ymin.min(p.y);
        ymax = ymax.max(p.y);
        sx += p.x;
        sy += p.y;
    }
    let centroid = Headpoint::new(sx / n, sy / n);
    // scale x and y to the box so the angular test is insensitive to aspect ratio
    let wx = (xmax - xmin).max(f64::MIN_POSITIVE);
    let wy = (ymax - ymin).max(f64::MIN_POSITIVE);
    let bins = bins.max(1);
    let mut seen = vec![false; bins];
    let mut radii = Vec::with_capacity(points.len());
    for p in points {
        let dx = (p.x - centroid.x) / wx;
        let dy = (p.y - centroid.y) / wy;
        let ang = dy.atan2(dx) + std::f64::consts::PI;
        let b = ((ang / std::f64::consts::TAU) * bins as f64) as usize;
        seen[b.min(bins - 1)] = true;
        radii.push(dx.hypot(dy));
    }
    let mean_radius = radii.iter().sum::<f64>() / n;
    let min_r = radii.iter().copied().fold(f64::INFINITY, f64::min);
    Some(CloudShape {
        extent: (xmax - xmin).hypot(ymax - ymin),
        centroid,
        angular_coverage: seen.iter().filter(|&&s| s).count() as f64 / bins as f64,
        mean_radius,
        min_radius_ratio: if mean_radius > 0.0 { min_r / mean_radius } else { 0.0 },
    })
}

/// Whether a section looks like a closed invariant curve: its extent does not
/// drift across consecutive quarters, it is not a point, it winds all the way
/// around its centroid and leaves a hole in the middle.
pub fn is_closed_curve(section: &[Headpoint], cfg: &ClassifyConfig) -> bool {
    if section.len() < 40 {
        return false;
    }
    let q = section.len() / 4;
    let extents: Vec<f64> = (0..4)
        .filter_map(|i| cloud_shape(&section[i * q..(i + 1) * q], cfg.angle_bins))
        .map(|s| s.extent)
        .collect();
    let lo = extents.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = extents.iter().copied().fold(0.0, f64::max);
    if !(lo > cfg.min_extent) || hi > lo * (1.0 + cfg.extent_tol) {
        return false;
    }
    match cloud_shape(section, cfg.angle_bins) {
        Some(s) => s.angular_coverage >= 0.9 && s.min_radius_ratio > 0.05,
        None => false,
    }
}

/// Largest lag-`p` interval mismatch over the last `periods · p` events,
/// relative to the period, or `None` if the event kinds do not repeat.
fn lag_mismatch(rec: &OrbitRecord, p: usize, periods: usize) -> Option<f64> {
    let ev = &rec.events;
    let n = ev.len();
    let span = periods * p;
    if span + p + 1 > n {
        return None;
    }
    let period = ev[n - 1].time - ev[n - 1 - p].time;
    let mut worst: f64 = 0.0;
    for i in n - span..n {
        if ev[i].kind != ev[i - p].kind {
            return None;
        }
        let d = (ev[i].time - ev[i - 1].time) - (ev[i - p].time - ev[i - p - 1].time);
        worst = worst.max(d.abs());
    }
    Some(worst / period)
}

/// Smallest event period `p` such that the last `periods · p` events repeat
/// kinds and intervals. `Err` when a proper divisor of `p` nearly repeats
/// too: the tail is then still spiralling into a shorter cycle.
fn event_period(rec: &OrbitRecord, cfg: &ClassifyConfig) -> Result<Option<usize>, ()> {
    let Some(p) = (1..=cfg.max_period).find(|&p| {
        lag_mismatch(rec, p, cfg.periods).is_some_and(|m| m <= cfg.rel_tol)
    }) else {
        return Ok(None);
    };
    let aliased = (1..p)
        .filter(|d| p % d == 0)
        .any(|d| lag_mismatch(rec, d, cfg.periods * p / d).is_some_and(|m| m <= cfg.alias_tol));
    if aliased {
        Err(())
    } else {
        Ok(Some(p))
    }
}

pub fn classify(rec: &OrbitRecord, cfg: &ClassifyConfig) -> OrbitClass {
    if rec.termination == Termination::Nonoscillatory {
        return OrbitClass::tagged(OrbitTag::Nonoscillatory);
    }
    if rec.events.len() < cfg.min_events {
        return OrbitClass::tagged(OrbitTag::Undecided);
    }
    let Ok(found) = event_period(rec, cfg) else {
        return OrbitClass::tagged(OrbitTag::Undecided);
    };
    let Some(p) = found else {
        let half = &rec.h_section[rec.h_section.len() / 2..];
        if is_closed_curve(half, cfg) {
            return OrbitClass::tagged(OrbitTag::Quasiperiodic);
        }
        return OrbitClass::tagged(OrbitTag::Undecided);
    };
    let ev = &rec.events;
    let n = ev.len();
    let period = ev[n - 1].time - ev[n - 1 - p].time;
    // last complete period starting at H
    let Some(start) = (n - 2 * p..n - p).rev().find(|&i| ev[i].kind == EventKind::H) else {
        return OrbitClass {
            tag: OrbitTag::Undecided,
            label: None,
            period: Some(period),
        };
    };
    let sequence: Vec<EventKind> = ev[start..start + p].iter().map(|e| e.kind).collect();
    let nu = match (start..start + p).find(|&i| ev[i].kind.is_zero()) {
        Some(j) => {
            let tj = ev[j].time;
            ev[..j]
                .iter()
                .rev()
                .take_while(|e| e.time > tj - 1.0)
                .filter(|e| e.kind.is_zero())
                .count()
        }
        None => 0,
    };
    let symmetric = p % 2 == 0 && {
        let h = p / 2;
        let tol = cfg.rel_tol * period;
        (n - p..n).all(|i| {
            ev[i].kind == ev[i - h].kind.flipped()
                && ((ev[i].time - ev[i - 1].time) - (ev[i - h].time - ev[i - h - 1].time)).abs() <= tol
                && (ev[i].x + ev[i - h].x).abs() <= cfg.sym_tol
                && (ev[i].y + ev[i - h].y).abs() <= cfg.sym_tol
        })
    };
    OrbitClass {
        tag: OrbitTag::Periodic,
        label: Some(SymbolLabel {
            sequence,
            nu,
            symmetry: if symmetric { Symmetry::S } else { Symmetry::A },
        }),
        period: Some(period),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::Parameters;
    use crate::sim::{simulate, Budget, SimOptions, SystemState};

    fn run(q: f64, om: f64, k: usize, events: usize) -> OrbitRecord {
        let p = Parameters::with_sigma(q, om, -1).unwrap();
        let st = SystemState::oscillating_history(k, 0.5, 0.0).unwrap();
        simulate(&p, &st, Budget::events(events), &SimOptions::default()).unwrap()
    }

    #[test]
    fn label_format() {
        use EventKind::*;
        let l = SymbolLabel {
            sequence: vec![H, Zbar, Hbar, Z],
            nu: 2,
            symmetry: Symmetry::S,
        };
        assert_eq!(l.to_string(), "[H,Zbar,Hbar,Z]_2^S");
    }

    #[test]
    fn fig1_overdamped() {
        let c = classify(&run(0.4, 7.0, 2, 20_000), &ClassifyConfig::default());
        assert_eq!(c.tag, OrbitTag::Periodic);
        assert_eq!(c.label_string().unwrap(), "[H,Zbar,Hbar,Z]_2^S");
    }

    #[test]
    fn fig1_underdamped() {
        let c = classify(&run(1.5, 14.0, 3, 20_000), &ClassifyConfig::default());
        assert_eq!(c.tag, OrbitTag::Periodic);
        assert_eq!(c.label_string().unwrap(), "[H,Z,Hbar,Zbar]_3^S");
    }

    #[test]
    fn short_and_empty_records() {
        let c = classify(&run(1.5, 14.0, 3, 10), &ClassifyConfig::default());
        assert_eq!(c.tag, OrbitTag::Undecided);
        let p = Parameters::with_sigma(0.4, 7.0, -1).unwrap();
        let st = SystemState::constant_history(0.1, -2.0).unwrap();
        let rec = simulate(&p, &st, Budget::events(10), &SimOptions::default()).unwrap();
        assert_eq!(classify(&rec, &ClassifyConfig::default()).tag, OrbitTag::Nonoscillatory);
    }

    #[test]
    fn unsettled_transient_is_undecided() {
        // still spiralling into the four-event cycle
        let c = classify(&run(1.5, 14.0, 3, 1000), &ClassifyConfig::default());
        assert_eq!(c.tag, OrbitTag::Undecided);
    }

    #[test]
    fn slowly_oscillating_from_constant_history() {
        let p = Parameters::with_sigma(0.4, 7.0, -1).unwrap();
        let st = SystemState::constant_history(0.5, 0.0).unwrap();
        let rec = simulate(&p, &st, Budget::events(4000), &SimOptions::default()).unwrap();
        let c = classify(&rec, &ClassifyConfig::default());
        assert_eq!(c.label_string().unwrap(), "[H,Zbar,Hbar,Z]_0^S");
    }

    #[test]
    fn circle_is_closed_curve_and_point_is_not() {
        let cfg = ClassifyConfig::default();
        let circle: Vec<Headpoint> = (0..400)
            .map(|i| {
                let a = i as f64 * 0.7548776662466927 * std::f64::consts::TAU;
                Headpoint::new(0.3 + 1e-3 * a.cos(), -0.2 + 2e-3 * a.sin())
            })
            .collect();
        assert!(is_closed_curve(&circle, &cfg));
        let point = vec![Headpoint::new(0.1, 0.2); 400];
        assert!(!is_closed_curve(&point, &cfg));
        let spiral: Vec<Headpoint> = (0..400)
            .map(|i| {
                let a = i as f64 * 2.1;
                let r = (-(i as f64) / 100.0).exp();
                Headpoint::new(r * a.cos(), r * a.sin())
            })
            .collect();
        assert!(!is_closed_curve(&spiral, &cfg));
    }
}
