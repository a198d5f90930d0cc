mod common;

use std::sync::Arc;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use pwh_core::equilibrium::{sg_equilibria, single_port_equilibria, Equilibrium};
use pwh_core::model::{build_sg, build_single_port, PwhSystem, SgParams, SinglePortParams};
use pwh_core::numkernel::{norm2, sub_vec, Matrix, SymMatrix};
use pwh_core::roa::{roa_diagonal, sample_sublevel, sg_roa, RoaEstimate};
use pwh_core::shifted::ShiftedContext;
use pwh_core::sim::{
    classify_ic, integrate, monitor_passivity, validate_roa, ClassifyOptions, IcClass, InputSignal, IntegrateOptions,
    Method, StopReason, ValidationOptions,
};

fn reference_circuit() -> (PwhSystem, Equilibrium) {
    let p = SinglePortParams::REFERENCE;
    (build_single_port(&p).unwrap(), single_port_equilibria(&p).unwrap().stable.unwrap())
}

fn lossless_lc() -> PwhSystem {
    PwhSystem::new(
        Matrix::from_rows(&[vec![0.0, -1.0], vec![1.0, 0.0]]).unwrap(),
        SymMatrix::from_diagonal(&[0.0, 0.0]).unwrap(),
        SymMatrix::from_diagonal(&[0.5, 2.0]).unwrap(),
        vec![],
        vec![0.0, 0.0],
        vec![0.0, 0.0],
    )
    .unwrap()
}

fn energy_drift(traj: &pwh_core::sim::Trajectory) -> f64 {
    let h0 = traj.s_values[0];
    traj.s_values.iter().map(|h| (h - h0).abs() / h0).fold(0.0, f64::max)
}

/// scipy's RK45 (same Dormand–Prince pair and controller) on this problem, rtol 1e-10, atol 1e-12:
/// 197387 output points, maximum relative energy drift 1.530036452110525e-7.
#[test]
fn dopri5_matches_reference_implementation() {
    let traj = integrate(
        &lossless_lc(),
        &[1.0, 0.3],
        2000.0 * std::f64::consts::PI,
        &IntegrateOptions { rel_tol: 1e-10, abs_tol: 1e-12, method: Method::Dopri5, ..Default::default() },
    )
    .unwrap();
    assert_eq!(traj.times.len(), 197_387);
    assert!((energy_drift(&traj) - 1.530036452110525e-7).abs() <= 1e-4 * 1.53e-7);
}

#[test]
fn tight_tolerance_conserves_lc_energy() {
    let traj = integrate(
        &lossless_lc(),
        &[1.0, 0.3],
        2000.0 * std::f64::consts::PI,
        &IntegrateOptions { rel_tol: 1e-11, abs_tol: 1e-12, ..Default::default() },
    )
    .unwrap();
    assert_eq!(traj.stop_reason, StopReason::ReachedTEnd);
    assert!(energy_drift(&traj) < 1e-8, "{}", energy_drift(&traj));
}

#[test]
fn error_scales_with_tolerance() {
    let (sys, eq) = reference_circuit();
    let x0 = [eq.x_bar[0] * 1.3, eq.x_bar[1] * 0.95];
    let t_end = 5e-3;
    let run = |rel_tol, method| {
        let opts = IntegrateOptions { rel_tol, abs_tol: 1e-12, method, ..Default::default() };
        integrate(&sys, &x0, t_end, &opts).unwrap().last_state().to_vec()
    };
    let reference = run(1e-12, Method::Rkf78);
    for tol in [1e-5, 1e-6, 1e-7] {
        let coarse = norm2(&sub_vec(&run(tol, Method::Dopri5), &reference));
        let fine = norm2(&sub_vec(&run(tol / 16.0, Method::Dopri5), &reference));
        assert!(coarse / fine >= 8.0, "tol {tol}: {coarse:e} / {fine:e}");
    }
}

#[test]
fn shifted_energy_decreases_under_constant_input() {
    let (sys, eq) = reference_circuit();
    let ctx = ShiftedContext::new(&sys, &eq.x_bar).unwrap();
    let est = roa_diagonal(&ctx).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..10 {
        let x0 = sample_sublevel(&ctx, est.level_k, &mut rng).unwrap();
        let traj =
            integrate(&sys, &x0, 0.05, &IntegrateOptions { x_ref: Some(eq.x_bar.clone()), ..Default::default() })
                .unwrap();
        for w in traj.s_values.windows(2) {
            assert!(w[1] - w[0] <= 1e-9);
        }
        let report = monitor_passivity(&ctx, &traj, &|_| sys.u_bar().to_vec());
        assert!(report.is_passive());
        assert!(report.max_ds_dt <= 0.0);
    }
}

#[test]
fn passivity_under_load_step() {
    let (sys, eq) = reference_circuit();
    let ctx = ShiftedContext::new(&sys, &eq.x_bar).unwrap();
    let signal: InputSignal = Arc::new(|t| vec![0.0, if t < 1e-3 { -1000.0 } else { -1200.0 }]);
    let traj = integrate(
        &sys,
        &eq.x_bar,
        0.02,
        &IntegrateOptions { x_ref: Some(eq.x_bar.clone()), input: Some(signal.clone()), ..Default::default() },
    )
    .unwrap();
    let report = monitor_passivity(&ctx, &traj, signal.as_ref());
    assert!(report.is_passive(), "{report:?}");
    // the step moves the state away from x̄
    assert!(report.max_s > 0.0);
}

#[test]
fn energy_balance_along_trajectories() {
    let (sys, eq) = reference_circuit();
    let x0 = [eq.x_bar[0] * 0.8, eq.x_bar[1] * 1.1];
    let traj = integrate(
        &sys,
        &x0,
        5e-4,
        &IntegrateOptions { rel_tol: 1e-10, abs_tol: 1e-12, h_max: Some(1e-7), ..Default::default() },
    )
    .unwrap();
    for k in 0..traj.times.len() - 1 {
        let dt = traj.times[k + 1] - traj.times[k];
        let fd = (traj.s_values[k + 1] - traj.s_values[k]) / dt;
        let (a, b) = (&traj.states[k], &traj.states[k + 1]);
        let trapezoid = 0.5 * (sys.energy_rate(a).unwrap() + sys.energy_rate(b).unwrap());
        // scale: the largest individual power flow
        let grad = sys.grad_h(a).unwrap();
        let scale = grad[0] * sys.u_c()[0] + sys.u_bar()[1].abs() + grad[0] * grad[0] * sys.r().matrix()[(0, 0)];
        assert!((fd - trapezoid).abs() <= 1e-6 * scale.abs(), "step {k}: {fd} vs {trapezoid}");
    }
}

#[test]
fn collapse_below_the_certificate() {
    let (sys, eq) = reference_circuit();
    let out = classify_ic(&sys, &eq, &[eq.x_bar[0], 1e-4], &ClassifyOptions::with_t_max(0.5)).unwrap();
    assert_eq!(out.class, IcClass::Diverged);
    assert_eq!(out.stop_reason, StopReason::LeftDomain);
}

#[test]
fn generator_below_threshold_diverges() {
    let p = SgParams::CONSISTENT;
    let sys = build_sg(&p).unwrap();
    let pair = sg_equilibria(&p).unwrap();
    let w_u = pair.unstable.as_ref().unwrap().x_bar[0] / p.inertia;
    let s = pair.stable.unwrap();
    let out = classify_ic(&sys, &s, &[p.inertia * (w_u - 0.5)], &ClassifyOptions::with_t_max(1e5)).unwrap();
    assert_eq!(out.class, IcClass::Diverged);
}

#[test]
fn generator_forward_invariance_at_the_edge() {
    let p = SgParams::CONSISTENT;
    let sys = build_sg(&p).unwrap();
    let pair = sg_equilibria(&p).unwrap();
    let w_u = pair.unstable.as_ref().unwrap().x_bar[0] / p.inertia;
    let traj = integrate(&sys, &[p.inertia * (w_u + 1e-6)], 1e5, &IntegrateOptions::default()).unwrap();
    assert!(traj.states.iter().all(|x| x[0] / p.inertia > w_u));
}

#[test]
fn tiny_certificate_samples_converge() {
    let (sys, eq) = reference_circuit();
    let ctx = ShiftedContext::new(&sys, &eq.x_bar).unwrap();
    let est = RoaEstimate { level_k: 1e-12, ..roa_diagonal(&ctx).unwrap() };
    let report = validate_roa(
        &sys,
        &eq,
        &est,
        &ValidationOptions { n_samples: 20, seed: 1, classify: ClassifyOptions::with_t_max(0.5), boundary_margin: 0.0 },
    )
    .unwrap();
    assert_eq!(report.n_converged, 20);
}

fn generator_validation(seed: u64) -> pwh_core::sim::RoaValidationReport {
    let p = SgParams::CONSISTENT;
    let sys = build_sg(&p).unwrap();
    let pair = sg_equilibria(&p).unwrap();
    let est = sg_roa(&p, &pair).unwrap();
    validate_roa(
        &sys,
        pair.stable.as_ref().unwrap(),
        &est,
        &ValidationOptions { n_samples: 30, seed, classify: ClassifyOptions::with_t_max(1e5), boundary_margin: 0.01 },
    )
    .unwrap()
}

#[test]
fn validation_is_deterministic() {
    let a = generator_validation(77);
    let b = generator_validation(77);
    assert_eq!(a, b);
    assert_eq!(a.n_converged, 30);
    assert_eq!(a.n_converged + a.n_diverged + a.n_timeout, a.n_samples);
    let (sys, eq) = reference_circuit();
    let ctx = ShiftedContext::new(&sys, &eq.x_bar).unwrap();
    let est = roa_diagonal(&ctx).unwrap();
    let opts =
        ValidationOptions { n_samples: 25, seed: 3, classify: ClassifyOptions::with_t_max(0.5), boundary_margin: 0.0 };
    assert_eq!(validate_roa(&sys, &eq, &est, &opts).unwrap(), validate_roa(&sys, &eq, &est, &opts).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn rl_decay_is_exponential(r in 0.1f64..5.0, m in 0.1f64..5.0, x0 in 0.1f64..10.0) {
        let sys = PwhSystem::new(
            Matrix::zeros(1, 1),
            SymMatrix::from_diagonal(&[r]).unwrap(),
            SymMatrix::from_diagonal(&[m]).unwrap(),
            vec![],
            vec![0.0],
            vec![0.0],
        ).unwrap();
        let t_end = 3.0 / (r * m);
        let traj = integrate(&sys, &[x0], t_end, &IntegrateOptions { rel_tol: 1e-11, ..Default::default() }).unwrap();
        for (t, x) in traj.times.iter().zip(&traj.states) {
            prop_assert!((x[0] - x0 * (-r * m * t).exp()).abs() <= 1e-8 * x0);
        }
    }

    #[test]
    fn certified_samples_converge(seed in any::<u64>()) {
        let (sys, eq) = reference_circuit();
        let ctx = ShiftedContext::new(&sys, &eq.x_bar).unwrap();
        let est = roa_diagonal(&ctx).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x0 = sample_sublevel(&ctx, est.level_k, &mut rng).unwrap();
        let out = classify_ic(&sys, &eq, &x0, &ClassifyOptions::with_t_max(0.5)).unwrap();
        prop_assert_eq!(out.class, IcClass::Converged);
    }
}
