//! Power-controlled Hamiltonian systems with a quadratic energy function.
//!
//! The dynamics are
//!
//! ```text
//! ẋ = (J − R) M x + G(x) ū + u_c,      G(x) = diag(g_i),  g_i = 1/(Mx)_i on power channels, 0 otherwise
//! ```
//!
//! so each power channel injects `ū_i` watts directly into `dH/dt`. The state is
//! restricted to `Ω⁺`, where `(Mx)_i > 0` on every power channel.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::{cholesky_pd, dot, inverse, sym_eig_extremes, DiagMatrix, Matrix, SymMatrix};

/// Entrywise bound on `J + Jᵀ`.
pub const SKEW_TOL: f64 = 1e-14;
/// Lower bound accepted for `λ_min(R)`.
pub const DISSIPATION_TOL: f64 = -1e-12;

/// `H(x) = ½ xᵀ M x` with `M` positive definite.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuadraticHamiltonian {
    m: SymMatrix,
}

impl QuadraticHamiltonian {
    pub fn new(m: SymMatrix) -> Result<Self> {
        if !cholesky_pd(&m)?.positive_definite {
            return Err(Error::Input("energy matrix M is not positive definite".into()));
        }
        Ok(Self { m })
    }

    pub fn matrix(&self) -> &SymMatrix {
        &self.m
    }

    pub fn energy(&self, x: &[f64]) -> f64 {
        0.5 * dot(x, &self.m.matrix().mul_vec(x))
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.m.matrix().mul_vec(x)
    }
}

/// A PwH system with constant structure, dissipation, power input and offset.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PwhSystem {
    j: Matrix,
    r: SymMatrix,
    h: QuadraticHamiltonian,
    power_channels: Vec<usize>,
    u_bar: Vec<f64>,
    u_c: Vec<f64>,
}

impl PwhSystem {
    /// Validates and assembles a system. `power_channels` are zero-based indices.
    pub fn new(
        j: Matrix,
        r: SymMatrix,
        m: SymMatrix,
        power_channels: Vec<usize>,
        u_bar: Vec<f64>,
        u_c: Vec<f64>,
    ) -> Result<Self> {
        let n = m.n();
        if j.rows() != n || j.cols() != n || r.n() != n {
            return Err(Error::Input(format!(
                "dimension mismatch: M is {n}x{n}, J is {}x{}, R is {}x{}",
                j.rows(),
                j.cols(),
                r.n(),
                r.n()
            )));
        }
        if u_bar.len() != n || u_c.len() != n {
            return Err(Error::Input(format!(
                "u_bar and u_c must have length {n} (got {} and {})",
                u_bar.len(),
                u_c.len()
            )));
        }
        if u_bar.iter().chain(&u_c).any(|v| !v.is_finite()) {
            return Err(Error::Input("u_bar and u_c must be finite".into()));
        }
        let defect = j.skew_defect();
        if defect > SKEW_TOL {
            return Err(Error::Input(format!("J is not skew-symmetric (max |J + Jᵀ| = {defect:e})")));
        }
        let (r_min, _) = sym_eig_extremes(&r)?;
        if r_min < DISSIPATION_TOL {
            return Err(Error::Input(format!("R is not positive semidefinite (λ_min = {r_min:e})")));
        }
        let mut channels = power_channels;
        channels.sort_unstable();
        channels.dedup();
        if let Some(&bad) = channels.iter().find(|&&i| i >= n) {
            return Err(Error::Input(format!("power channel {bad} out of range 0..{n}")));
        }
        for (i, &u) in u_bar.iter().enumerate() {
            if u != 0.0 && channels.binary_search(&i).is_err() {
                return Err(Error::Input(format!("u_bar[{i}] = {u} but index {i} is not a power channel")));
            }
        }
        let h = QuadraticHamiltonian::new(m)?;
        Ok(Self { j, r, h, power_channels: channels, u_bar, u_c })
    }

    pub fn n(&self) -> usize {
        self.r.n()
    }

    pub fn j(&self) -> &Matrix {
        &self.j
    }

    pub fn r(&self) -> &SymMatrix {
        &self.r
    }

    pub fn m(&self) -> &SymMatrix {
        self.h.matrix()
    }

    pub fn hamiltonian(&self) -> &QuadraticHamiltonian {
        &self.h
    }

    pub fn power_channels(&self) -> &[usize] {
        &self.power_channels
    }

    pub fn is_power_channel(&self, i: usize) -> bool {
        self.power_channels.binary_search(&i).is_ok()
    }

    pub fn u_bar(&self) -> &[f64] {
        &self.u_bar
    }

    pub fn u_c(&self) -> &[f64] {
        &self.u_c
    }

    /// Same system with a different constant power input.
    pub fn with_u_bar(&self, u_bar: Vec<f64>) -> Result<Self> {
        Self::new(
            self.j.clone(),
            self.r.clone(),
            self.m().clone(),
            self.power_channels.clone(),
            u_bar,
            self.u_c.clone(),
        )
    }

    /// `M` and `R` both diagonal (off-diagonals at most `1e-14`).
    pub fn is_diagonal(&self) -> bool {
        self.m().is_diagonal(1e-14) && self.r.is_diagonal(1e-14)
    }

    /// `(J − R) M`, the linear part of the vector field.
    pub fn linear_part(&self) -> Matrix {
        self.j.sub(self.r.matrix()).matmul(self.m().matrix())
    }

    fn check_len(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n() {
            return Err(Error::Input(format!("state has length {}, expected {}", x.len(), self.n())));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("state has non-finite entries".into()));
        }
        Ok(())
    }

    pub fn energy(&self, x: &[f64]) -> f64 {
        self.h.energy(x)
    }

    /// `∇H(x) = M x`.
    pub fn grad_h(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x)?;
        Ok(self.h.gradient(x))
    }

    /// Membership in `Ω⁺`.
    pub fn in_domain(&self, x: &[f64]) -> bool {
        if x.len() != self.n() || x.iter().any(|v| !v.is_finite()) {
            return false;
        }
        let grad = self.h.gradient(x);
        self.domain_ok(&grad)
    }

    pub(crate) fn domain_ok(&self, grad: &[f64]) -> bool {
        self.power_channels.iter().all(|&i| grad[i] > 0.0)
    }

    fn domain_error(&self, grad: &[f64]) -> Error {
        let i = self.power_channels.iter().copied().find(|&i| !(grad[i] > 0.0)).unwrap_or(0);
        Error::Domain(format!("(Mx)_{i} = {} is not positive", grad[i]))
    }

    /// Diagonal of `G(x)`: `1/(Mx)_i` on power channels, zero elsewhere.
    pub fn input_matrix_g(&self, x: &[f64]) -> Result<DiagMatrix> {
        self.check_len(x)?;
        let grad = self.h.gradient(x);
        if !self.domain_ok(&grad) {
            return Err(self.domain_error(&grad));
        }
        Ok(DiagMatrix(self.g_from_grad(&grad)))
    }

    fn g_from_grad(&self, grad: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.n()];
        for &i in &self.power_channels {
            g[i] = 1.0 / grad[i];
        }
        g
    }

    /// Right-hand side with the constant input `ū`.
    pub fn vector_field(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_len(x)?;
        self.rhs_with_input(x, &self.u_bar).ok_or_else(|| self.domain_error(&self.h.gradient(x)))
    }

    /// Right-hand side `(J − R)Mx + G(x)u + u_c` for an arbitrary input `u`;
    /// `None` outside `Ω⁺`. No length checks, used by inner loops.
    pub fn rhs_with_input(&self, x: &[f64], u: &[f64]) -> Option<Vec<f64>> {
        let n = self.n();
        let grad = self.h.gradient(x);
        if !self.domain_ok(&grad) {
            return None;
        }
        let jm = self.j.as_slice();
        let rm = self.r.matrix().as_slice();
        let mut out = self.u_c.clone();
        for (i, o) in out.iter_mut().enumerate() {
            let row = i * n;
            let mut acc = 0.0;
            for k in 0..n {
                acc += (jm[row + k] - rm[row + k]) * grad[k];
            }
            *o += acc;
        }
        for &i in &self.power_channels {
            out[i] += u[i] / grad[i];
        }
        Some(out)
    }

    /// Jacobian `(J − R)M − D(x)M`, with `D = diag(ū_i/(Mx)_i²)` on power channels.
    pub fn jacobian(&self, x: &[f64]) -> Result<Matrix> {
        self.check_len(x)?;
        let grad = self.h.gradient(x);
        if !self.domain_ok(&grad) {
            return Err(self.domain_error(&grad));
        }
        let m = self.m().matrix();
        let mut jac = self.linear_part();
        let n = self.n();
        for &i in &self.power_channels {
            let d = self.u_bar[i] / (grad[i] * grad[i]);
            for k in 0..n {
                jac[(i, k)] -= d * m[(i, k)];
            }
        }
        Ok(jac)
    }

    /// `dH/dt = −∇HᵀR∇H + Σ ū_i + ∇Hᵀu_c` along the flow.
    pub fn energy_rate(&self, x: &[f64]) -> Result<f64> {
        self.check_len(x)?;
        let grad = self.h.gradient(x);
        if !self.domain_ok(&grad) {
            return Err(self.domain_error(&grad));
        }
        let dissipated = dot(&grad, &self.r.matrix().mul_vec(&grad));
        let supplied: f64 = self.power_channels.iter().map(|&i| self.u_bar[i]).sum();
        Ok(-dissipated + supplied + dot(&grad, &self.u_c))
    }
}

/// RLC line feeding a capacitor with a parallel resistor and a constant power load.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SinglePortParams {
    pub v_g: f64,
    pub r_l: f64,
    pub r_p: f64,
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "C")]
    pub c: f64,
    #[serde(rename = "P")]
    pub p: f64,
}

impl SinglePortParams {
    /// 24 V source, 40 mΩ line, 0.1 Ω shunt, 78 µH, 2 mF, 1 kW load.
    pub const REFERENCE: SinglePortParams =
        SinglePortParams { v_g: 24.0, r_l: 0.04, r_p: 0.1, l: 78e-6, c: 2e-3, p: 1000.0 };

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("v_g", self.v_g), ("r_l", self.r_l), ("r_p", self.r_p), ("L", self.l), ("C", self.c)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Input(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !(self.p >= 0.0) || !self.p.is_finite() {
            return Err(Error::Input(format!("P must be nonnegative and finite, got {}", self.p)));
        }
        Ok(())
    }
}

/// Improved swing equation parameters (per unit).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgParams {
    #[serde(rename = "M")]
    pub inertia: f64,
    #[serde(rename = "D_m")]
    pub d_m: f64,
    #[serde(rename = "D_d")]
    pub d_d: f64,
    pub tau_m: f64,
    pub omega_star: f64,
    #[serde(rename = "P_e")]
    pub p_e: f64,
}

impl SgParams {
    /// A parameter set with two real equilibria (ω* = 100π, P_e = 2.5).
    pub const CONSISTENT: SgParams = SgParams {
        inertia: 0.2,
        d_m: 1e-6,
        d_d: 1e-4,
        tau_m: 0.0027,
        omega_star: 100.0 * std::f64::consts::PI,
        p_e: 2.5,
    };

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("M", self.inertia),
            ("D_m", self.d_m),
            ("D_d", self.d_d),
            ("tau_m", self.tau_m),
            ("omega_star", self.omega_star),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Input(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if !(self.p_e >= 0.0) || !self.p_e.is_finite() {
            return Err(Error::Input(format!("P_e must be nonnegative and finite, got {}", self.p_e)));
        }
        Ok(())
    }

    pub fn damping(&self) -> f64 {
        self.d_m + self.d_d
    }

    /// Constant torque term `τ_m + D_d ω*`.
    pub fn drive(&self) -> f64 {
        self.tau_m + self.d_d * self.omega_star
    }
}

/// Meshed DC network: `l` inductors, `c` capacitors, loads on capacitors.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiportParams {
    pub inductance: SymMatrix,
    pub capacitance: SymMatrix,
    pub resistance: SymMatrix,
    pub conductance: SymMatrix,
    pub gamma: Matrix,
    pub loads: Vec<f64>,
    pub u_c: Vec<f64>,
}

/// `M = diag(1/L, 1/C)`, `J = [[0,−1],[1,0]]`, `R = diag(r_ℓ, 1/r_p)`, `ū = (0, −P)`, `u_c = (v_g, 0)`.
///
/// The capacitor is a power channel whenever `P ≠ 0`.
pub fn build_single_port(p: &SinglePortParams) -> Result<PwhSystem> {
    p.validate()?;
    let j = Matrix::from_rows(&[vec![0.0, -1.0], vec![1.0, 0.0]])?;
    let r = SymMatrix::from_diagonal(&[p.r_l, 1.0 / p.r_p])?;
    let m = SymMatrix::from_diagonal(&[1.0 / p.l, 1.0 / p.c])?;
    let channels = if p.p != 0.0 { vec![1] } else { vec![] };
    PwhSystem::new(j, r, m, channels, vec![0.0, -p.p], vec![p.v_g, 0.0])
}

/// Single-state model in the angular momentum `p = Mω`:
/// `J = 0`, `R = D_m + D_d`, `M = 1/M_inertia`, `ū = −P_e`, `u_c = τ_m + D_d ω*`.
pub fn build_sg(p: &SgParams) -> Result<PwhSystem> {
    p.validate()?;
    let channels = if p.p_e != 0.0 { vec![0] } else { vec![] };
    PwhSystem::new(
        Matrix::zeros(1, 1),
        SymMatrix::from_diagonal(&[p.damping()])?,
        SymMatrix::from_diagonal(&[1.0 / p.inertia])?,
        channels,
        vec![-p.p_e],
        vec![p.drive()],
    )
}

fn require_pd(name: &str, m: &SymMatrix) -> Result<()> {
    if !cholesky_pd(m)?.positive_definite {
        return Err(Error::Input(format!("{name} is not positive definite")));
    }
    Ok(())
}

fn symmetric_inverse(name: &str, m: &SymMatrix) -> Result<SymMatrix> {
    let inv = inverse(m.matrix())?;
    let residual = m.matrix().matmul(&inv).sub(&Matrix::identity(m.n())).max_abs();
    if residual > 1e-10 {
        return Err(Error::Numeric(format!("inverse of {name} has residual {residual:e}")));
    }
    // inverse of a symmetric matrix: asymmetry is pure rounding
    let sym = inv.add(&inv.transpose()).scale(0.5);
    SymMatrix::new(sym)
}

/// `M = blockdiag(L⁻¹, C⁻¹)`, `J = [[0, Γ], [−Γᵀ, 0]]`, `R = blockdiag(Z, Y)`, `ū = (0, −P)`.
pub fn build_multiport(p: &MultiportParams) -> Result<PwhSystem> {
    let l = p.inductance.n();
    let c = p.capacitance.n();
    if p.resistance.n() != l || p.conductance.n() != c {
        return Err(Error::Input(format!("Z must be {l}x{l} and Y must be {c}x{c}")));
    }
    if p.gamma.rows() != l || p.gamma.cols() != c {
        return Err(Error::Input(format!("Gamma must be {l}x{c}, got {}x{}", p.gamma.rows(), p.gamma.cols())));
    }
    if p.loads.len() != c || p.u_c.len() != l + c {
        return Err(Error::Input(format!("P must have length {c} and u_c length {}", l + c)));
    }
    require_pd("L", &p.inductance)?;
    require_pd("C", &p.capacitance)?;
    require_pd("Z", &p.resistance)?;
    require_pd("Y", &p.conductance)?;

    let n = l + c;
    let m = Matrix::block_diagonal(
        symmetric_inverse("L", &p.inductance)?.matrix(),
        symmetric_inverse("C", &p.capacitance)?.matrix(),
    );
    let mut j = Matrix::zeros(n, n);
    for a in 0..l {
        for b in 0..c {
            j[(a, l + b)] = p.gamma[(a, b)];
            j[(l + b, a)] = -p.gamma[(a, b)];
        }
    }
    let r = Matrix::block_diagonal(p.resistance.matrix(), p.conductance.matrix());
    let mut u_bar = vec![0.0; n];
    let mut channels = Vec::new();
    for (k, &pk) in p.loads.iter().enumerate() {
        u_bar[l + k] = -pk;
        if pk != 0.0 {
            channels.push(l + k);
        }
    }
    PwhSystem::new(j, SymMatrix::new(r)?, SymMatrix::new(m)?, channels, u_bar, p.u_c.clone())
}
