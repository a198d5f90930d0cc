//! Dynamics shifted to an equilibrium `x̄`.
//!
//! With `Ḡ = G(x̄)` and `Z(x) = Ḡ diag(ū) G(x)` the flow can be rewritten as
//!
//! ```text
//! ẋ = (J − (R + Z(x))) ∇S(x) + G(x)(u − ū),     S(x) = ½ (x − x̄)ᵀ M (x − x̄)
//! ```
//!
//! so `S` is a storage function for the port `(u − ū, y)` with `y = G(x)ᵀ∇S(x)`
//! wherever `R + Z(x) ⪰ 0`.

use crate::error::{Error, Result};
use crate::model::PwhSystem;
use crate::numkernel::{cholesky_pd, dot, norm2, sub_vec, sym_eig_extremes, DiagMatrix, SymMatrix};

/// Residual tolerance for accepting `x̄` as an equilibrium: `1e-8 · (1 + ‖u_c‖)`.
pub fn equilibrium_tolerance(sys: &PwhSystem) -> f64 {
    1e-8 * (1.0 + norm2(sys.u_c()))
}

/// A system together with a validated equilibrium.
#[derive(Clone, Debug)]
pub struct ShiftedContext {
    sys: PwhSystem,
    x_bar: Vec<f64>,
    grad_bar: Vec<f64>,
    g_bar: DiagMatrix,
    r_min: f64,
}

impl ShiftedContext {
    pub fn new(sys: &PwhSystem, x_bar: &[f64]) -> Result<Self> {
        let f = sys.vector_field(x_bar)?;
        let residual = norm2(&f);
        let tol = equilibrium_tolerance(sys);
        if residual > tol {
            return Err(Error::Precondition(format!("x̄ is not an equilibrium: residual {residual:e} exceeds {tol:e}")));
        }
        let g_bar = sys.input_matrix_g(x_bar)?;
        let (r_min, _) = sym_eig_extremes(sys.r())?;
        Ok(Self { sys: sys.clone(), x_bar: x_bar.to_vec(), grad_bar: sys.hamiltonian().gradient(x_bar), g_bar, r_min })
    }

    pub fn system(&self) -> &PwhSystem {
        &self.sys
    }

    pub fn x_bar(&self) -> &[f64] {
        &self.x_bar
    }

    /// `Ḡ = G(x̄)`.
    pub fn g_bar(&self) -> &DiagMatrix {
        &self.g_bar
    }

    /// `∇H(x̄) = M x̄`.
    pub fn grad_bar(&self) -> &[f64] {
        &self.grad_bar
    }

    /// Smallest eigenvalue of `R`.
    pub fn r_min_eig(&self) -> f64 {
        self.r_min
    }

    /// `S(x) = ½ (x − x̄)ᵀ M (x − x̄)`.
    pub fn shifted_hamiltonian(&self, x: &[f64]) -> f64 {
        let d = sub_vec(x, &self.x_bar);
        let s = 0.5 * dot(&d, &self.sys.m().matrix().mul_vec(&d));
        #[cfg(debug_assertions)]
        {
            // Bregman form H(x) − (x − x̄)ᵀ∇H(x̄) − H(x̄)
            let h = &self.sys;
            let (hx, hbar) = (h.energy(x), h.energy(&self.x_bar));
            let bregman = hx - dot(&d, &self.grad_bar) - hbar;
            let scale = hx.abs().max(hbar.abs()).max(s.abs());
            debug_assert!(
                (bregman - s).abs() <= 1e-12 * scale + f64::MIN_POSITIVE,
                "shifted Hamiltonian forms disagree: {bregman} vs {s}"
            );
        }
        s
    }

    /// `∇S(x) = M (x − x̄)`.
    pub fn grad_s(&self, x: &[f64]) -> Vec<f64> {
        self.sys.m().matrix().mul_vec(&sub_vec(x, &self.x_bar))
    }

    /// Diagonal of `Z(x)`: `ū_i / ((Mx̄)_i (Mx)_i)` on power channels.
    pub fn z_matrix(&self, x: &[f64]) -> Result<DiagMatrix> {
        let g = self.sys.input_matrix_g(x)?;
        Ok(DiagMatrix(self.z_from_g(g.entries())))
    }

    fn z_from_g(&self, g: &[f64]) -> Vec<f64> {
        let u_bar = self.sys.u_bar();
        (0..self.sys.n()).map(|i| self.g_bar.0[i] * u_bar[i] * g[i]).collect()
    }

    /// `R + Z(x)`.
    pub fn r_plus_z(&self, x: &[f64]) -> Result<SymMatrix> {
        Ok(self.sys.r().add_diagonal(self.z_matrix(x)?.entries()))
    }

    /// `(J − (R + Z(x))) ∇S(x) + G(x)(u − ū)`.
    pub fn shifted_rhs(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.sys.n() {
            return Err(Error::Input(format!("input has length {}, expected {}", u.len(), self.sys.n())));
        }
        let g = self.sys.input_matrix_g(x)?;
        let z = self.z_from_g(g.entries());
        let grad_s = self.grad_s(x);
        let n = self.sys.n();
        let j = self.sys.j();
        let r = self.sys.r();
        let u_bar = self.sys.u_bar();
        Ok((0..n)
            .map(|i| {
                let mut acc = g.entries()[i] * (u[i] - u_bar[i]) - z[i] * grad_s[i];
                for k in 0..n {
                    acc += (j[(i, k)] - r[(i, k)]) * grad_s[k];
                }
                acc
            })
            .collect())
    }

    /// Passive output `y = G(x)ᵀ ∇S(x)`.
    pub fn output_y(&self, x: &[f64]) -> Result<Vec<f64>> {
        let g = self.sys.input_matrix_g(x)?;
        Ok(g.mul_vec(&self.grad_s(x)))
    }

    /// `x ∈ Ω_p`: `x ∈ Ω⁺` and `R + Z(x)` positive definite.
    pub fn in_omega_p(&self, x: &[f64]) -> bool {
        if !self.sys.in_domain(x) {
            return false;
        }
        match self.r_plus_z(x) {
            Ok(m) => cholesky_pd(&m).map(|v| v.positive_definite).unwrap_or(false),
            Err(_) => false,
        }
    }

    /// Closure `Ω̄_p`: `λ_min(R + Z(x)) ≥ −pd_tolerance`.
    pub fn in_omega_p_closure(&self, x: &[f64]) -> bool {
        if !self.sys.in_domain(x) {
            return false;
        }
        match self.r_plus_z(x) {
            Ok(m) => sym_eig_extremes(&m).map(|(lo, _)| lo >= -m.pd_tolerance()).unwrap_or(false),
            Err(_) => false,
        }
    }

    /// Lower bounds `γ_i = −Ḡ_ii ū_i / λ_min(R)` on `∇H`.
    pub fn gamma_bounds(&self) -> Result<Vec<f64>> {
        let tol = self.sys.r().pd_tolerance();
        if !(self.r_min > tol) {
            return Err(Error::Precondition(format!("R must be positive definite (λ_min = {:e})", self.r_min)));
        }
        let u_bar = self.sys.u_bar();
        Ok((0..self.sys.n()).map(|i| -self.g_bar.0[i] * u_bar[i] / self.r_min).collect())
    }

    /// `x ∈ Ω_Γ`: `x ∈ Ω⁺` and `(Mx)_i > γ_i` for every index `i`.
    pub fn in_omega_gamma(&self, x: &[f64]) -> Result<bool> {
        let gamma = self.gamma_bounds()?;
        if !self.sys.in_domain(x) {
            return Ok(false);
        }
        let grad = self.sys.hamiltonian().gradient(x);
        Ok(grad.iter().zip(&gamma).all(|(g, b)| g > b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_single_port, SinglePortParams};

    /// Stable equilibrium of the reference circuit from the capacitor-voltage quadratic.
    fn reference_ctx() -> ShiftedContext {
        let p = SinglePortParams::REFERENCE;
        let a = 1.0 + p.r_l / p.r_p;
        let disc = p.v_g * p.v_g - 4.0 * a * p.r_l * p.p;
        let v = (p.v_g + disc.sqrt()) / (2.0 * a);
        let i = (p.v_g - v) / p.r_l;
        let sys = build_single_port(&p).unwrap();
        ShiftedContext::new(&sys, &[p.l * i, p.c * v]).unwrap()
    }

    #[test]
    fn rejects_non_equilibrium() {
        let sys = build_single_port(&SinglePortParams::REFERENCE).unwrap();
        assert!(matches!(ShiftedContext::new(&sys, &[0.01, 0.03]), Err(Error::Precondition(_))));
    }

    #[test]
    fn zero_at_equilibrium() {
        let ctx = reference_ctx();
        let xb = ctx.x_bar().to_vec();
        assert_eq!(ctx.shifted_hamiltonian(&xb), 0.0);
        assert!(ctx.grad_s(&xb).iter().all(|&v| v == 0.0));
        assert!(ctx.output_y(&xb).unwrap().iter().all(|&v| v == 0.0));
        let rhs = ctx.shifted_rhs(&xb, ctx.system().u_bar()).unwrap();
        assert!(rhs.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_coordinate_displacement() {
        let ctx = reference_ctx();
        let c = SinglePortParams::REFERENCE.c;
        let delta = 1e-3;
        let x = [ctx.x_bar()[0], ctx.x_bar()[1] + delta];
        let s = ctx.shifted_hamiltonian(&x);
        assert!((s - delta * delta / (2.0 * c)).abs() < 1e-15);
        let y = ctx.output_y(&x).unwrap();
        assert_eq!(y[0], 0.0);
        assert!((y[1] - delta / x[1]).abs() < 1e-14);
    }

    #[test]
    fn z_entry_at_equilibrium() {
        let ctx = reference_ctx();
        let p = SinglePortParams::REFERENCE;
        let q = ctx.x_bar()[1];
        let z = ctx.z_matrix(ctx.x_bar()).unwrap();
        assert_eq!(z.entries()[0], 0.0);
        let expected = -p.c * p.c * p.p / (q * q);
        assert!((z.entries()[1] - expected).abs() < 1e-12);
        assert!((z.entries()[1] + 4.287).abs() < 1e-3);
    }

    #[test]
    fn input_step_shows_up_through_g() {
        let ctx = reference_ctx();
        let x = [0.012, 0.025];
        let u = [0.0, -1200.0];
        let shifted = ctx.shifted_rhs(&x, &u).unwrap();
        let f = ctx.system().vector_field(&x).unwrap();
        let g = ctx.system().input_matrix_g(&x).unwrap();
        let d = g.entries()[1] * (u[1] - ctx.system().u_bar()[1]);
        assert!((shifted[0] - f[0]).abs() <= 1e-12 * f[0].abs().max(1.0));
        assert!((shifted[1] - f[1] - d).abs() <= 1e-12 * f[1].abs().max(1.0));
    }

    #[test]
    fn omega_p_threshold_at_q_min() {
        let ctx = reference_ctx();
        let p = SinglePortParams::REFERENCE;
        let q_min = p.p * p.r_p * p.c * p.c / ctx.x_bar()[1];
        let phi = ctx.x_bar()[0];
        assert!(ctx.in_omega_p(&[phi, q_min * (1.0 + 1e-6)]));
        assert!(!ctx.in_omega_p(&[phi, q_min * (1.0 - 1e-6)]));
        assert!(!ctx.in_omega_p(&[phi, -1e-3]));
    }

    #[test]
    fn omega_gamma_uses_smallest_dissipation() {
        let ctx = reference_ctx();
        let gamma = ctx.gamma_bounds().unwrap();
        let p = SinglePortParams::REFERENCE;
        // λ_min(R) = r_ℓ, so the bound on the capacitor voltage is P/(v̄ r_ℓ)
        let v_bar = ctx.x_bar()[1] / p.c;
        assert!((gamma[1] - p.p / (v_bar * p.r_l)).abs() < 1e-9);
        // η uses R_22 = 1/r_p instead and is less restrictive
        let eta = p.p * p.r_p / v_bar;
        assert!(gamma[1] > eta);
        assert_eq!(gamma[0], 0.0);
    }
}
