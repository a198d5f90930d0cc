mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pwh_core::equilibrium::{p_max_existence, p_max_stability_formula, sg_equilibria, single_port_equilibria};
use pwh_core::model::{build_sg, build_single_port, SgParams, SinglePortParams};
use pwh_core::roa::{
    q_min_single_port, roa_diagonal, roa_general, sample_sublevel, sg_roa, IndexRule, RoaEstimate, RoaMode,
};
use pwh_core::shifted::ShiftedContext;
use pwh_core::Error;

fn single_port_ctx(p: &SinglePortParams) -> ShiftedContext {
    let sys = build_single_port(p).unwrap();
    let eq = single_port_equilibria(p).unwrap().stable.unwrap();
    ShiftedContext::new(&sys, &eq.x_bar).unwrap()
}

fn ladder_ctx(coupled: bool) -> ShiftedContext {
    let sys = if coupled { common::coupled_ladder() } else { common::diagonal_ladder() };
    let eq = common::ladder_equilibrium(&sys);
    ShiftedContext::new(&sys, &eq.x_bar).unwrap()
}

fn assert_sound(name: &str, ctx: &ShiftedContext, est: &RoaEstimate, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..1000 {
        let x = sample_sublevel(ctx, est.level_k, &mut rng).unwrap();
        assert!(est.contains(ctx, &x));
        assert!(ctx.in_omega_p(&x), "{name}: {x:?} certified but outside Ω_p");
    }
}

#[test]
fn table1_diagonal_certificate_values() {
    let p = SinglePortParams::REFERENCE;
    let ctx = single_port_ctx(&p);
    let est = roa_diagonal(&ctx).unwrap();
    let q_min = q_min_single_port(&p, ctx.x_bar()[1]).unwrap();
    assert!((q_min * 1e3 - 13.09).abs() < 0.01);
    assert!((est.level_k - 0.0760).abs() < 2e-4, "{}", est.level_k);
    // k_d = (q_min − q̄_s)²/(2C)
    let direct = (q_min - ctx.x_bar()[1]).powi(2) / (2.0 * p.c);
    assert!((est.level_k - direct).abs() <= 1e-12 * direct);
    let axes = est.semi_axes.unwrap();
    assert!((axes[0] - (2.0 * p.l * est.level_k).sqrt()).abs() <= 1e-12 * axes[0]);
    assert!((axes[1] - (2.0 * p.c * est.level_k).sqrt()).abs() <= 1e-12 * axes[1]);
}

#[test]
fn table1_general_certificate_is_unavailable() {
    let ctx = single_port_ctx(&SinglePortParams::REFERENCE);
    assert!(matches!(roa_general(&ctx, IndexRule::All), Err(Error::CertificateUnavailable(_))));
}

#[test]
fn every_certificate_is_sound() {
    let sp = single_port_ctx(&SinglePortParams::REFERENCE);
    assert_sound("single-port k_d", &sp, &roa_diagonal(&sp).unwrap(), 1);
    let diag = ladder_ctx(false);
    assert_sound("ladder k_d", &diag, &roa_diagonal(&diag).unwrap(), 2);
    assert_sound("ladder k_c", &diag, &roa_general(&diag, IndexRule::All).unwrap(), 3);
    let coupled = ladder_ctx(true);
    assert_sound("coupled k_c", &coupled, &roa_general(&coupled, IndexRule::All).unwrap(), 4);
    let refined = roa_general(&coupled, IndexRule::Refined).unwrap();
    assert!(refined.level_k >= roa_general(&coupled, IndexRule::All).unwrap().level_k);
    assert_sound("coupled refined", &coupled, &refined, 5);
}

#[test]
fn diagonal_mode_needs_diagonal_structure() {
    let ctx = ladder_ctx(true);
    assert!(matches!(roa_diagonal(&ctx), Err(Error::ModeUnavailable(_))));
}

#[test]
fn ladder_general_is_more_conservative() {
    let ctx = ladder_ctx(false);
    let k_c = roa_general(&ctx, IndexRule::All).unwrap().level_k;
    let k_d = roa_diagonal(&ctx).unwrap().level_k;
    assert!(k_c > 0.0 && k_c <= k_d, "k_c {k_c}, k_d {k_d}");
}

#[test]
fn k_d_shrinks_with_load() {
    let base = SinglePortParams::REFERENCE;
    let limit = p_max_stability_formula(&base).min(p_max_existence(&base));
    let mut prev = f64::INFINITY;
    for k in 1..=20 {
        let p = SinglePortParams { p: limit * k as f64 / 21.0, ..base };
        let k_d = roa_diagonal(&single_port_ctx(&p)).unwrap().level_k;
        assert!(k_d <= prev, "k_d rose at step {k}: {prev} → {k_d}");
        prev = k_d;
    }
}

#[test]
fn ellipsoid_identity() {
    let ctx = single_port_ctx(&SinglePortParams::REFERENCE);
    let est = roa_diagonal(&ctx).unwrap();
    let axes = est.semi_axes.clone().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..1000 {
        let x: Vec<f64> =
            ctx.x_bar().iter().zip(&axes).map(|(c, a)| c + 1.5 * a * rng.random_range(-1.0..1.0)).collect();
        let form = est.ellipsoid_form(&x).unwrap();
        let ratio = ctx.shifted_hamiltonian(&x) / est.level_k;
        assert!((form - ratio).abs() <= 1e-12 * form.max(1.0));
        if (form - 1.0).abs() > 1e-12 {
            assert_eq!(est.contains(&ctx, &x), form < 1.0);
        }
    }
}

#[test]
fn generator_half_line() {
    let p = SgParams::CONSISTENT;
    let pair = sg_equilibria(&p).unwrap();
    let est = sg_roa(&p, &pair).unwrap();
    assert_eq!(est.mode, RoaMode::SgHalfLine);
    let w_u = pair.unstable.as_ref().unwrap().x_bar[0] / p.inertia;
    assert_eq!(est.threshold_omega, Some(w_u));
    let sys = build_sg(&p).unwrap();
    let ctx = ShiftedContext::new(&sys, &pair.stable.unwrap().x_bar).unwrap();
    assert!(est.contains(&ctx, &[p.inertia * w_u * 1.001]));
    assert!(!est.contains(&ctx, &[p.inertia * w_u * 0.999]));
    // the half-line is exactly Ω_p
    assert!(ctx.in_omega_p(&[p.inertia * w_u * 1.001]));
    assert!(!ctx.in_omega_p(&[p.inertia * w_u * 0.999]));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn conservativeness_on_diagonal_single_ports(
        v_g in 10.0f64..50.0,
        r_l in 0.05f64..2.0,
        r_p in 0.5f64..5.0,
        frac in 0.01f64..0.95,
    ) {
        let base = SinglePortParams { v_g, r_l, r_p, l: 1e-4, c: 2e-3, p: 0.0 };
        let p = SinglePortParams { p: frac * p_max_stability_formula(&base).min(p_max_existence(&base)), ..base };
        let ctx = single_port_ctx(&p);
        let k_d = roa_diagonal(&ctx).unwrap().level_k;
        match roa_general(&ctx, IndexRule::All) {
            Ok(est) => prop_assert!(est.level_k <= k_d * (1.0 + 1e-12), "k_c {} > k_d {}", est.level_k, k_d),
            Err(Error::CertificateUnavailable(_)) => {}
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        }
    }

    #[test]
    fn single_port_certificates_are_sound(frac in 0.05f64..0.95, seed in any::<u64>()) {
        let base = SinglePortParams::REFERENCE;
        let p = SinglePortParams { p: frac * p_max_stability_formula(&base), ..base };
        let ctx = single_port_ctx(&p);
        let est = roa_diagonal(&ctx).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..100 {
            let x = sample_sublevel(&ctx, est.level_k, &mut rng).unwrap();
            prop_assert!(ctx.in_omega_p(&x));
        }
    }
}
