use biped::analysis::{self, PoincarePoint, SweepAxis, SweepSpec};
use biped::sim::{self, SimConfig};
use biped::SwingState;

fn nominal_ic() -> SwingState {
    SwingState::from_degrees([15.0, -15.0, 105.0], [1.168, -1.168, 0.0])
}

fn quiet() -> SimConfig {
    SimConfig {
        record_trajectory: false,
        ..SimConfig::nominal()
    }
}

#[test]
fn nominal_orbit_is_a_fixed_point() {
    let cfg = quiet();
    let o =
        analysis::find_periodic_orbit(&PoincarePoint::new(nominal_ic()), &cfg, 1e-8, 500).unwrap();
    assert!((o.step_time - 0.56).abs() < 0.05, "{}", o.step_time);
    assert!(o.contraction.unwrap() < 1.0);
    let (next, t) = analysis::stride_map(&o.fixed_point, &cfg).unwrap();
    assert!(next.x.distance(&o.fixed_point.x) <= 1e-6);
    assert!((t - o.step_time).abs() < 1e-6);
}

#[test]
fn orbit_attracts_perturbed_states() {
    let cfg = quiet();
    let o =
        analysis::find_periodic_orbit(&PoincarePoint::new(nominal_ic()), &cfg, 1e-9, 500).unwrap();
    let mut p = o.fixed_point;
    p.x.q[2] += 1e-3;
    p.x.dq[0] -= 1e-3;
    let o2 = analysis::find_periodic_orbit(&p, &cfg, 1e-9, 500).unwrap();
    assert!(o2.fixed_point.x.distance(&o.fixed_point.x) < 1e-6);
    assert!(o2.distances[0] > 1e-4);
}

#[test]
fn stride_iterates_contract() {
    let g = sim::run_gait(&nominal_ic(), &quiet());
    assert_eq!(g.completed_steps(), 20);
    let d = &g.distances;
    assert!(d[d.len() - 1] < 0.1 * d[2], "{d:?}");
    assert!(g.contraction.unwrap() < 1.0);
}

#[test]
fn converged_gait_has_flat_step_times() {
    let mut cfg = quiet();
    cfg.n_steps = 60;
    let g = sim::run_gait(&nominal_ic(), &cfg);
    assert!(g.step_time_spread(5).unwrap() < 1e-4);
}

#[test]
fn sweep_rows_do_not_depend_on_order() {
    let mut base = quiet();
    base.n_steps = 5;
    let spec = SweepSpec {
        axis: SweepAxis::InclineDeg,
        start: 22.0,
        end: 25.0,
        samples: 4,
        base,
        initial: nominal_ic(),
        orbit_tol: 1e-6,
        orbit_max_iters: 200,
    };
    let forward = analysis::run_sweep(&spec);
    let backward = analysis::run_sweep(&SweepSpec {
        start: 25.0,
        end: 22.0,
        ..spec.clone()
    });
    assert_eq!(forward.len(), 4);
    for (a, b) in forward.iter().zip(backward.iter().rev()) {
        assert_eq!(a.value, b.value);
        assert_eq!(a.step_time, b.step_time);
        assert_eq!(a.orbit_step_time, b.orbit_step_time);
        assert_eq!(a.worst_z_delta, b.worst_z_delta);
    }
    assert!(forward.iter().enumerate().all(|(k, r)| r.index == k));
}

#[test]
fn single_sample_sweep_matches_orbit_search() {
    let mut base = quiet();
    base.n_steps = 10;
    let spec = SweepSpec {
        axis: SweepAxis::AllMasses,
        start: 0.0,
        end: 0.0,
        samples: 1,
        base,
        initial: nominal_ic(),
        orbit_tol: 1e-6,
        orbit_max_iters: 500,
    };
    let row = &analysis::run_sweep(&spec)[0];
    let g = sim::run_gait(&nominal_ic(), &base);
    let o = analysis::continue_to_orbit(&g, &base, 1e-6, 500).unwrap();
    assert!(row.orbit_found);
    assert_eq!(row.orbit_step_time, Some(o.step_time));
}

#[test]
fn invalid_sample_is_recorded_not_fatal() {
    let spec = SweepSpec {
        axis: SweepAxis::LegMass,
        start: -2.0,
        end: 0.0,
        samples: 2,
        base: quiet(),
        initial: nominal_ic(),
        orbit_tol: 1e-6,
        orbit_max_iters: 10,
    };
    let rows = analysis::run_sweep(&spec);
    assert_eq!(rows[0].abort.as_ref().unwrap().kind, "invalid_parameter");
    assert_eq!(rows[1].completed_steps, 20);
}

#[test]
fn integral_reset_policy_zeroes_state_at_impact() {
    let mut cfg = quiet();
    cfg.n_steps = 3;
    cfg.incline_true = biped::Incline::from_degrees(22.0).unwrap();
    cfg.controller.reset_integral_on_impact = true;
    let g = sim::run_gait(&nominal_ic(), &cfg);
    let carried = sim::run_gait(
        &nominal_ic(),
        &SimConfig {
            controller: biped::controller::ControllerState {
                reset_integral_on_impact: false,
                ..cfg.controller
            },
            ..cfg
        },
    );
    assert_eq!(g.completed_steps(), 3);
    assert_ne!(
        g.steps[2].integral_at_event,
        carried.steps[2].integral_at_event
    );
}
