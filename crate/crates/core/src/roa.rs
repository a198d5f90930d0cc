//! Region-of-attraction certificates as sublevel sets `L_k = {x : S(x) < k}`
//! of the shifted Hamiltonian, plus the half-line certificate of the
//! synchronous generator.
//!
//! A level `k` is certified when `L_k` stays inside the set where `R + Z(x) > 0`,
//! which makes `S` a strict Lyapunov function on it.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::equilibrium::EquilibriumPair;
use crate::error::{Error, Result};
use crate::model::{SgParams, SinglePortParams};
use crate::numkernel::{cholesky_pd, solve_linear, sym_eig_extremes};
use crate::shifted::ShiftedContext;

/// Off-diagonal magnitude below which `M` and `R` count as diagonal.
pub const DIAGONAL_TOL: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum RoaMode {
    /// Level from eigenvalue bounds on `M` and `R`; works for any quadratic system.
    General,
    /// Exact per-coordinate level for diagonal `M` and `R`.
    Diagonal,
    /// `{ω > ω̄_u}` for the one-state generator model.
    SgHalfLine,
}

/// Which indices enter the minimum defining the general level.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub enum IndexRule {
    /// All indices `1..n`; on non-power channels this imposes `(Mx)_i > 0`.
    #[default]
    All,
    /// Power channels only.
    Refined,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RoaEstimate {
    pub mode: RoaMode,
    pub rule: IndexRule,
    /// Certified level in joules; zero for the half-line mode.
    pub level_k: f64,
    pub x_bar: Vec<f64>,
    /// Lower bounds on `∇H` used by the general mode.
    pub gamma: Option<Vec<f64>>,
    /// Lower bounds on `∇H` used by the diagonal mode (zero off the power channels).
    pub eta: Option<Vec<f64>>,
    /// `√(2k/M_ii)`, present when `M` is diagonal.
    pub semi_axes: Option<Vec<f64>>,
    pub threshold_omega: Option<f64>,
}

impl RoaEstimate {
    /// Membership: `S(x) < k`, or `ω > ω̄_u` for the half-line certificate.
    pub fn contains(&self, ctx: &ShiftedContext, x: &[f64]) -> bool {
        match self.mode {
            RoaMode::SgHalfLine => {
                let sys = ctx.system();
                x.len() == 1
                    && sys.in_domain(x)
                    && sys.hamiltonian().gradient(x)[0] > self.threshold_omega.unwrap_or(0.0)
            }
            _ => ctx.shifted_hamiltonian(x) < self.level_k,
        }
    }

    /// `Σ ((x_i − x̄_i)/a_i)²`, the ellipsoid form of the diagonal certificate.
    pub fn ellipsoid_form(&self, x: &[f64]) -> Option<f64> {
        let axes = self.semi_axes.as_ref()?;
        Some(x.iter().zip(&self.x_bar).zip(axes).map(|((xi, xb), a)| ((xi - xb) / a).powi(2)).sum())
    }
}

fn semi_axes(ctx: &ShiftedContext, k: f64) -> Option<Vec<f64>> {
    let m = ctx.system().m();
    if !m.is_diagonal(DIAGONAL_TOL) {
        return None;
    }
    Some(m.matrix().diagonal().iter().map(|mii| (2.0 * k / mii).sqrt()).collect())
}

fn require_certified_equilibrium(ctx: &ShiftedContext) -> Result<()> {
    let rz = ctx.r_plus_z(ctx.x_bar())?;
    let (lam, _) = sym_eig_extremes(&rz)?;
    if !(lam > rz.pd_tolerance()) {
        return Err(Error::CertificateUnavailable(format!("λ_min(R + Z(x̄)) = {lam:e} is not positive")));
    }
    Ok(())
}

/// Certified level from eigenvalue bounds:
/// `k_c = min_i (γ_i − (Mx̄)_i)² / (2 λ_max(M))` with `γ_i = −Ḡ_ii ū_i / λ_min(R)`.
///
/// Bounds on power channels are raised to zero where negative so that the
/// level set stays inside `Ω⁺`.
pub fn roa_general(ctx: &ShiftedContext, rule: IndexRule) -> Result<RoaEstimate> {
    let sys = ctx.system();
    let mut gamma = ctx.gamma_bounds()?;
    for &i in sys.power_channels() {
        gamma[i] = gamma[i].max(0.0);
    }
    let grad_bar = ctx.grad_bar();
    let indices: Vec<usize> = match rule {
        IndexRule::All => (0..sys.n()).collect(),
        IndexRule::Refined => sys.power_channels().to_vec(),
    };
    if let Some(&i) = indices.iter().find(|&&i| !(grad_bar[i] > gamma[i])) {
        return Err(Error::CertificateUnavailable(format!(
            "x̄ violates the lower bound on index {i}: (Mx̄)_{i} = {} ≤ γ_{i} = {}",
            grad_bar[i], gamma[i]
        )));
    }
    require_certified_equilibrium(ctx)?;
    let (_, m_max) = sym_eig_extremes(sys.m())?;
    let k = indices.iter().map(|&i| (gamma[i] - grad_bar[i]).powi(2)).fold(f64::INFINITY, f64::min) / (2.0 * m_max);
    Ok(RoaEstimate {
        mode: RoaMode::General,
        rule,
        level_k: k,
        x_bar: ctx.x_bar().to_vec(),
        gamma: Some(gamma),
        eta: None,
        semi_axes: semi_axes(ctx, k),
        threshold_omega: None,
    })
}

/// Certified level for diagonal `M` and `R`:
/// `η_i = −Ḡ_ii ū_i / R_ii`, `ℓ^i` is `x̄` with coordinate `i` moved to `η_i / M_ii`,
/// and `k_d = min over power channels of S(ℓ^i)`.
pub fn roa_diagonal(ctx: &ShiftedContext) -> Result<RoaEstimate> {
    let sys = ctx.system();
    if !sys.m().is_diagonal(DIAGONAL_TOL) || !sys.r().is_diagonal(DIAGONAL_TOL) {
        return Err(Error::ModeUnavailable("M and R must be diagonal; use the general certificate".into()));
    }
    if !cholesky_pd(sys.r())?.positive_definite {
        return Err(Error::Precondition("R must be positive definite".into()));
    }
    let m_diag = sys.m().matrix().diagonal();
    let r_diag = sys.r().matrix().diagonal();
    let g_bar = ctx.g_bar().entries();
    let u_bar = sys.u_bar();
    let grad_bar = ctx.grad_bar();
    let mut eta = vec![0.0; sys.n()];
    for &i in sys.power_channels() {
        eta[i] = (-g_bar[i] * u_bar[i] / r_diag[i]).max(0.0);
        if !(grad_bar[i] > eta[i]) {
            return Err(Error::CertificateUnavailable(format!(
                "x̄ violates the lower bound on index {i}: (Mx̄)_{i} = {} ≤ η_{i} = {}",
                grad_bar[i], eta[i]
            )));
        }
    }
    require_certified_equilibrium(ctx)?;
    let k = sys
        .power_channels()
        .iter()
        .map(|&i| {
            let mut ell = ctx.x_bar().to_vec();
            ell[i] = eta[i] / m_diag[i];
            ctx.shifted_hamiltonian(&ell)
        })
        .fold(f64::INFINITY, f64::min);
    Ok(RoaEstimate {
        mode: RoaMode::Diagonal,
        rule: IndexRule::Refined,
        level_k: k,
        x_bar: ctx.x_bar().to_vec(),
        gamma: None,
        eta: Some(eta),
        semi_axes: semi_axes(ctx, k),
        threshold_omega: None,
    })
}

/// Lowest capacitor charge inside the certified set: `q_min = P r_p C² / q̄_s`.
pub fn q_min_single_port(p: &SinglePortParams, q_bar_s: f64) -> Result<f64> {
    if !(q_bar_s > 0.0) {
        return Err(Error::Input(format!("q̄_s must be positive, got {q_bar_s}")));
    }
    let q_min = p.p * p.r_p * p.c * p.c / q_bar_s;
    debug_assert!(
        (q_min * q_bar_s - p.p * p.r_p * p.c * p.c).abs() <= 1e-12 * (p.p * p.r_p * p.c * p.c).max(f64::MIN_POSITIVE)
    );
    Ok(q_min)
}

/// Half-line certificate `{ω > ω̄_u}` for the generator (the whole domain when `P_e = 0`).
pub fn sg_roa(p: &SgParams, pair: &EquilibriumPair) -> Result<RoaEstimate> {
    let stable =
        pair.stable.as_ref().ok_or_else(|| Error::CertificateUnavailable("no stable generator equilibrium".into()))?;
    let threshold = pair.unstable.as_ref().map_or(0.0, |u| u.x_bar[0] / p.inertia);
    Ok(RoaEstimate {
        mode: RoaMode::SgHalfLine,
        rule: IndexRule::All,
        level_k: 0.0,
        x_bar: stable.x_bar.clone(),
        gamma: None,
        eta: None,
        semi_axes: None,
        threshold_omega: Some(threshold),
    })
}

/// Uniform sample from `{S(x) < level}`.
///
/// Diagonal `M`: rejection sampling in the bounding box of the ellipsoid.
/// Otherwise a uniform point of the unit ball mapped through the Cholesky factor.
pub fn sample_sublevel<R: Rng + ?Sized>(ctx: &ShiftedContext, level: f64, rng: &mut R) -> Result<Vec<f64>> {
    if !(level > 0.0) || !level.is_finite() {
        return Err(Error::Input(format!("cannot sample level set of level {level}")));
    }
    let m = ctx.system().m();
    let xb = ctx.x_bar();
    let n = xb.len();
    if m.is_diagonal(DIAGONAL_TOL) {
        let axes: Vec<f64> = m.matrix().diagonal().iter().map(|d| (2.0 * level / d).sqrt()).collect();
        loop {
            let x: Vec<f64> = xb.iter().zip(&axes).map(|(c, a)| c + a * rng.random_range(-1.0..1.0)).collect();
            if ctx.shifted_hamiltonian(&x) < level {
                return Ok(x);
            }
        }
    }
    // x − x̄ = L⁻ᵀ w with ‖w‖² < 2k gives ½ (x − x̄)ᵀ L Lᵀ (x − x̄) < k
    let l = cholesky_pd(m)?.factor.ok_or_else(|| Error::Precondition("M must be positive definite".into()))?;
    loop {
        let dir: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
        let norm = dir.iter().map(|v: &f64| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let radius = (2.0 * level).sqrt() * rng.random::<f64>().powf(1.0 / n as f64);
        let w: Vec<f64> = dir.iter().map(|v| v / norm * radius).collect();
        let d = solve_linear(&l.transpose(), &w)?;
        let x: Vec<f64> = xb.iter().zip(&d).map(|(a, b)| a + b).collect();
        if ctx.shifted_hamiltonian(&x) < level {
            return Ok(x);
        }
    }
}
