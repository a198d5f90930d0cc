mod common;

use proptest::prelude::*;

use pwh_core::equilibrium::p_max_existence;
use pwh_core::model::{
    build_multiport, build_sg, build_single_port, MultiportParams, PwhSystem, SgParams, SinglePortParams,
};
use pwh_core::numkernel::{is_positive_definite, sym_eig_extremes, Matrix, SymMatrix};

fn arb_single_port() -> impl Strategy<Value = SinglePortParams> {
    (10.0f64..50.0, 0.01f64..0.5, 0.5f64..5.0, 1e-5f64..1e-3, 1e-4f64..1e-2, 0.05f64..0.95).prop_map(
        |(v_g, r_l, r_p, l, c, frac)| {
            let base = SinglePortParams { v_g, r_l, r_p, l, c, p: 0.0 };
            SinglePortParams { p: frac * p_max_existence(&base), ..base }
        },
    )
}

fn arb_sg() -> impl Strategy<Value = SgParams> {
    (0.05f64..1.0, 1e-6f64..1e-4, 1e-5f64..1e-3, 1e-3f64..1e-2, 0.0f64..5.0).prop_map(
        |(inertia, d_m, d_d, tau_m, p_e)| SgParams {
            inertia,
            d_m,
            d_d,
            tau_m,
            omega_star: 100.0 * std::f64::consts::PI,
            p_e,
        },
    )
}

fn check_structure(sys: &PwhSystem) {
    let j = sys.j();
    assert!(j.add(&j.transpose()).max_abs() == 0.0, "J must be exactly skew");
    let (r_lo, _) = sym_eig_extremes(sys.r()).unwrap();
    assert!(r_lo >= -1e-12);
    assert!(is_positive_definite(sys.m()));
}

fn check_jacobian(sys: &PwhSystem, x: &[f64]) {
    let jac = sys.jacobian(x).unwrap();
    let n = sys.n();
    for k in 0..n {
        let h = 1e-6 * x[k].abs().max(1e-9);
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[k] += h;
        xm[k] -= h;
        let fp = sys.vector_field(&xp).unwrap();
        let fm = sys.vector_field(&xm).unwrap();
        let col_scale: f64 = (0..n).map(|i| jac[(i, k)].abs()).fold(0.0, f64::max);
        for i in 0..n {
            let fd = (fp[i] - fm[i]) / (2.0 * h);
            assert!(
                (fd - jac[(i, k)]).abs() <= 1e-5 * col_scale.max(1e-300),
                "∂f_{i}/∂x_{k}: fd {fd} vs {}",
                jac[(i, k)]
            );
        }
    }
}

/// Random point of Ω⁺ whose coordinates are within a factor of a scale vector.
fn near(scale: &[f64], factors: &[f64]) -> Vec<f64> {
    scale.iter().zip(factors).map(|(s, f)| s * f).collect()
}

#[test]
fn ladders_are_well_formed() {
    for sys in [common::diagonal_ladder(), common::coupled_ladder()] {
        check_structure(&sys);
        assert_eq!(sys.power_channels(), &[2, 3]);
        let eq = common::ladder_equilibrium(&sys);
        check_jacobian(&sys, &eq.x_bar);
    }
}

#[test]
fn multiport_rejects_indefinite_resistance() {
    let mut p = common::ladder_params([[0.5, 0.0], [0.0, 0.6]]);
    p.resistance = SymMatrix::new(Matrix::from_rows(&[vec![0.5, 2.0], vec![2.0, 0.6]]).unwrap()).unwrap();
    let err = build_multiport(&p).unwrap_err();
    assert!(err.to_string().contains("not positive definite"), "{err}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn single_port_structure_and_jacobian(p in arb_single_port(), f in prop::collection::vec(0.2f64..3.0, 2)) {
        let sys = build_single_port(&p).unwrap();
        check_structure(&sys);
        // nominal current v_g/r_p-ish and voltage v_g/2
        let x = near(&[p.l * p.v_g / p.r_p, p.c * p.v_g / 2.0], &f);
        prop_assume!(sys.in_domain(&x));
        check_jacobian(&sys, &x);
    }

    #[test]
    fn sg_structure_and_jacobian(p in arb_sg(), f in 0.1f64..3.0) {
        let sys = build_sg(&p).unwrap();
        check_structure(&sys);
        check_jacobian(&sys, &[p.inertia * p.omega_star * f]);
    }

    #[test]
    fn one_by_one_multiport_is_the_single_port(p in arb_single_port()) {
        let mp = build_multiport(&MultiportParams {
            inductance: SymMatrix::from_diagonal(&[p.l]).unwrap(),
            capacitance: SymMatrix::from_diagonal(&[p.c]).unwrap(),
            resistance: SymMatrix::from_diagonal(&[p.r_l]).unwrap(),
            conductance: SymMatrix::from_diagonal(&[1.0 / p.r_p]).unwrap(),
            gamma: Matrix::from_rows(&[vec![-1.0]]).unwrap(),
            loads: vec![p.p],
            u_c: vec![p.v_g, 0.0],
        }).unwrap();
        let sp = build_single_port(&p).unwrap();
        let close = |a: &Matrix, b: &Matrix| a.sub(b).max_abs() <= 1e-12 * a.max_abs().max(1.0);
        prop_assert!(close(mp.j(), sp.j()));
        prop_assert!(close(mp.r().matrix(), sp.r().matrix()));
        prop_assert!(close(mp.m().matrix(), sp.m().matrix()));
        prop_assert_eq!(mp.power_channels(), sp.power_channels());
        prop_assert_eq!(mp.u_bar(), sp.u_bar());
        prop_assert_eq!(mp.u_c(), sp.u_c());
    }
}
