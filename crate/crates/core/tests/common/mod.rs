#![allow(dead_code)]

use pwh_core::equilibrium::{solve_newton, Equilibrium};
use pwh_core::model::{build_multiport, MultiportParams, PwhSystem};
use pwh_core::numkernel::{Matrix, SymMatrix};

/// Source → L1 → C1 → L2 → C2, constant-power loads on both capacitors.
pub fn ladder_params(z: [[f64; 2]; 2]) -> MultiportParams {
    MultiportParams {
        inductance: SymMatrix::from_diagonal(&[2e-3, 1e-3]).unwrap(),
        capacitance: SymMatrix::from_diagonal(&[1e-3, 2e-3]).unwrap(),
        resistance: SymMatrix::new(Matrix::from_rows(&[z[0].to_vec(), z[1].to_vec()]).unwrap()).unwrap(),
        conductance: SymMatrix::from_diagonal(&[0.5, 0.5]).unwrap(),
        gamma: Matrix::from_rows(&[vec![-1.0, 0.0], vec![1.0, -1.0]]).unwrap(),
        loads: vec![20.0, 30.0],
        u_c: vec![24.0, 0.0, 0.0, 0.0],
    }
}

pub fn diagonal_ladder() -> PwhSystem {
    build_multiport(&ladder_params([[0.5, 0.0], [0.0, 0.6]])).unwrap()
}

pub fn coupled_ladder() -> PwhSystem {
    build_multiport(&ladder_params([[0.5, 0.1], [0.1, 0.6]])).unwrap()
}

/// High-voltage equilibrium of a ladder, by Newton from a nominal operating point.
pub fn ladder_equilibrium(sys: &PwhSystem) -> Equilibrium {
    // currents ~ 5 A, voltages ~ 20 V mapped back through M⁻¹
    let m = sys.m().matrix().diagonal();
    let guess: Vec<f64> = [5.0, 2.0, 20.0, 18.0].iter().zip(&m).map(|(g, d)| g / d).collect();
    solve_newton(sys, &guess).unwrap()
}
