use proptest::prelude::*;

use relay_dde::export::fmt_f64;
use relay_dde::map::{fixed_point, map_m, FixedPoint};
use relay_dde::sim::{simulate, step, Budget, OrbitRecord, SimConfig, SimOptions, SystemState};
use relay_dde::{Error, Parameters, Sign};

fn sign() -> impl Strategy<Value = Sign> {
    prop_oneof![Just(Sign::Plus), Just(Sign::Minus)]
}

fn run(p: &Parameters, st: &SystemState, n: usize) -> Option<OrbitRecord> {
    match simulate(p, st, Budget::events(n), &SimOptions::default()) {
        Ok(r) => Some(r),
        // exact ties are a legitimate outcome, not a property violation
        Err(Error::CornerCollision { .. }) => None,
        Err(e) => panic!("{e}"),
    }
}

fn clear(fp: &FixedPoint) -> bool {
    let half = fp.params.rates().half_period();
    let m = 1e-3;
    fp.is_valid() && fp.z_star > m && fp.delta_star > m && fp.z_star < half - m && fp.delta_star < half - m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn events_are_ordered_and_alternate(
        q in 0.3f64..3.0, om in 1.0f64..25.0, s in sign(),
        k in 0usize..6, x0 in 0.1f64..2.0, flip in any::<bool>(), y0 in -3.0f64..3.0,
    ) {
        let p = Parameters::new(q, om, s).unwrap();
        let x0 = if flip { -x0 } else { x0 };
        let st = SystemState::oscillating_history(k, x0, y0).unwrap();
        let Some(rec) = run(&p, &st, 400) else { return Ok(()) };
        prop_assert!(rec.final_state.check_invariants().is_ok());
        let mut last_zero = None;
        let mut last_switch = None;
        let mut t = 0.0;
        for e in &rec.events {
            prop_assert!(e.time > t || (t == 0.0 && e.time >= 0.0));
            t = e.time;
            let slot = if e.kind.is_zero() {
                prop_assert_eq!(e.x, 0.0);
                &mut last_zero
            } else {
                &mut last_switch
            };
            // crossings of a continuous x alternate in direction, and so do
            // the switches they cause a delay later
            if let Some(prev) = *slot {
                prop_assert_eq!(e.kind, relay_dde::sim::EventKind::flipped(prev));
            }
            *slot = Some(e.kind);
        }
    }

    #[test]
    fn mirrored_history_gives_mirrored_orbit(
        q in 0.3f64..3.0, om in 1.0f64..25.0, s in sign(), k in 0usize..5, y0 in -2.0f64..2.0,
    ) {
        let p = Parameters::new(q, om, s).unwrap();
        let st = SystemState::oscillating_history(k, 0.5, y0).unwrap();
        let (Some(a), Some(b)) = (run(&p, &st, 200), run(&p, &st.mirrored(), 200)) else { return Ok(()) };
        prop_assert_eq!(a.events.len(), b.events.len());
        for (x, y) in a.events.iter().zip(&b.events) {
            prop_assert_eq!(x.kind.flipped(), y.kind);
            prop_assert!((x.time - y.time).abs() <= 1e-12 * x.time.max(1.0));
            prop_assert!((x.x + y.x).abs() <= 1e-9 && (x.y + y.y).abs() <= 1e-9);
        }
    }

    #[test]
    fn fixed_points_are_fixed(q in 0.3f64..3.0, om in 1.0f64..30.0, s in sign(), nu in 0usize..8) {
        let p = Parameters::new(q, om, s).unwrap();
        let Ok(fp) = fixed_point(nu, &p) else { return Ok(()) };
        prop_assume!(clear(&fp));
        let sv = fp.state_vector();
        prop_assert!(map_m(&sv, &p).unwrap().max_abs_diff(&sv) < 1e-9);
    }

    #[test]
    fn map_agrees_with_event_steps_near_orbits(
        q in 0.3f64..3.0, om in 1.0f64..30.0, s in sign(), nu in 0usize..7,
        dy in -1e-3f64..1e-3, dt in -1e-4f64..1e-4,
    ) {
        let p = Parameters::new(q, om, s).unwrap();
        let Ok(fp) = fixed_point(nu, &p) else { return Ok(()) };
        prop_assume!(clear(&fp));
        let mut sv = fp.state_vector();
        sv.y_z += dy;
        if let Some(first) = sv.intervals.first_mut() {
            *first += dt;
        }
        let Ok(once) = map_m(&sv, &p) else { return Ok(()) };
        let r = p.rates();
        let (_, st) = step(&p, &r, &SystemState::from_map_state(&p, &sv).unwrap(), &SimConfig::default()).unwrap();
        let (_, st) = step(&p, &r, &st, &SimConfig::default()).unwrap();
        let via_sim = st.to_map_state(&p).unwrap();
        prop_assert!(via_sim.max_abs_diff(&once) < 1e-9, "{:?} vs {:?}", via_sim, once);
    }

    #[test]
    fn fixed_digit_format_round_trips(v in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
        let s = fmt_f64(v);
        prop_assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits());
    }
}
