//! Equilibria: a damped Newton solver for general systems, closed-form pairs
//! for the single-port circuit and the synchronous generator, classification,
//! and the single-port power limits.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{build_sg, build_single_port, PwhSystem, SgParams, SinglePortParams};
use crate::numkernel::{norm2, solve_linear, spectral_abscissa, sym_eig_extremes, SymMatrix};
use crate::shifted::equilibrium_tolerance;

pub const NEWTON_MAX_ITERATIONS: usize = 100;
pub const NEWTON_MAX_HALVINGS: usize = 60;
/// Spectral-abscissa band inside which classification stays inconclusive.
pub const ABSCISSA_BAND: f64 = 1e-8;
/// Substitution tolerance for closed-form single-port roots.
pub const SINGLE_PORT_RESIDUAL_TOL: f64 = 1e-10;
/// Substitution tolerance for closed-form generator roots.
pub const SG_RESIDUAL_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Classification {
    /// `R + Z(x̄) > 0`: shifted passive, and `S` is a strict Lyapunov function.
    ShiftedPassiveStable,
    /// Jacobian Hurwitz but outside the passivity certificate.
    LinearlyStable,
    Unstable,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Equilibrium {
    pub x_bar: Vec<f64>,
    /// `‖f(x̄)‖`.
    pub residual: f64,
    pub classification: Classification,
    pub r_plus_z_min_eig: f64,
    pub spectral_abscissa: f64,
}

impl Equilibrium {
    /// Evaluates the residual and classifies a candidate point.
    pub fn assess(sys: &PwhSystem, x_bar: Vec<f64>) -> Result<Self> {
        let residual = norm2(&sys.vector_field(&x_bar)?);
        let (classification, r_plus_z_min_eig, abscissa) = classify_point(sys, &x_bar)?;
        Ok(Self { x_bar, residual, classification, r_plus_z_min_eig, spectral_abscissa: abscissa })
    }
}

/// Stable/unstable candidates of a two-branch family.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EquilibriumPair {
    pub stable: Option<Equilibrium>,
    pub unstable: Option<Equilibrium>,
    pub discriminant: f64,
}

/// `R + Z(x̄)` where `Z(x̄)_ii = ū_i / (Mx̄)_i²`.
pub fn r_plus_z_at_equilibrium(sys: &PwhSystem, x_bar: &[f64]) -> Result<SymMatrix> {
    let g = sys.input_matrix_g(x_bar)?;
    let z: Vec<f64> = g.entries().iter().zip(sys.u_bar()).map(|(gi, ui)| gi * gi * ui).collect();
    Ok(sys.r().add_diagonal(&z))
}

fn classify_point(sys: &PwhSystem, x_bar: &[f64]) -> Result<(Classification, f64, f64)> {
    let rz = r_plus_z_at_equilibrium(sys, x_bar)?;
    let (lam_min, _) = sym_eig_extremes(&rz)?;
    let abscissa = spectral_abscissa(&sys.jacobian(x_bar)?)?;
    let class = if lam_min > rz.pd_tolerance() {
        Classification::ShiftedPassiveStable
    } else if abscissa > ABSCISSA_BAND {
        Classification::Unstable
    } else if abscissa < -ABSCISSA_BAND {
        Classification::LinearlyStable
    } else {
        Classification::Inconclusive
    };
    Ok((class, lam_min, abscissa))
}

/// Classification rules applied to an equilibrium point.
pub fn classify(sys: &PwhSystem, eq: &Equilibrium) -> Result<Classification> {
    Ok(classify_point(sys, &eq.x_bar)?.0)
}

/// Damped Newton iteration on the vector field.
///
/// Each step is halved until the iterate stays in `Ω⁺` and the residual norm
/// decreases. Converged when the residual is at most `1e-10 · (1 + ‖u_c‖)`.
pub fn solve_newton(sys: &PwhSystem, x0: &[f64]) -> Result<Equilibrium> {
    if !sys.in_domain(x0) {
        return Err(Error::Domain("Newton start point is outside Ω⁺".into()));
    }
    let tol = 1e-10 * (1.0 + norm2(sys.u_c()));
    let mut x = x0.to_vec();
    let mut f = sys.vector_field(&x)?;
    let mut res = norm2(&f);
    for iteration in 0..NEWTON_MAX_ITERATIONS {
        if res <= tol {
            return Equilibrium::assess(sys, x);
        }
        let jac = sys.jacobian(&x)?;
        let neg_f: Vec<f64> = f.iter().map(|v| -v).collect();
        let step = solve_linear(&jac, &neg_f)?;
        let mut t = 1.0;
        let mut accepted = None;
        let mut any_in_domain = false;
        for _ in 0..=NEWTON_MAX_HALVINGS {
            let trial: Vec<f64> = x.iter().zip(&step).map(|(xi, si)| xi + t * si).collect();
            if let Some(ft) = sys.rhs_with_input(&trial, sys.u_bar()) {
                any_in_domain = true;
                let rt = norm2(&ft);
                if rt < res {
                    accepted = Some((trial, ft, rt));
                    break;
                }
            }
            t *= 0.5;
        }
        match accepted {
            Some((xn, fnew, rn)) => {
                x = xn;
                f = fnew;
                res = rn;
            }
            None if !any_in_domain => return Err(Error::DomainExit { iteration }),
            // the residual cannot be reduced further in floating point
            None if res <= 1e3 * tol => return Equilibrium::assess(sys, x),
            None => return Err(Error::NoConvergence { iterations: iteration, residual: res }),
        }
    }
    if res <= tol {
        return Equilibrium::assess(sys, x);
    }
    Err(Error::NoConvergence { iterations: NEWTON_MAX_ITERATIONS, residual: res })
}

/// Roots of `a v² − b v + c = 0` with `a, b > 0`, `c ≥ 0`, larger root first.
///
/// A slightly negative discriminant within rounding of zero is clamped to a double root.
fn positive_quadratic_roots(a: f64, b: f64, c: f64) -> (f64, Option<(f64, f64)>) {
    let disc = b * b - 4.0 * a * c;
    let disc_eff = if disc < 0.0 && disc > -1e-12 * b * b { 0.0 } else { disc };
    if disc_eff < 0.0 {
        return (disc, None);
    }
    let q = 0.5 * (b + disc_eff.sqrt());
    let large = q / a;
    let small = if q != 0.0 { c / q } else { large };
    (disc, Some((large, small)))
}

fn validated(sys: &PwhSystem, x: Vec<f64>, tol: f64) -> Result<Equilibrium> {
    let eq = Equilibrium::assess(sys, x)?;
    if eq.residual > tol {
        return Err(Error::Numeric(format!(
            "closed-form equilibrium fails substitution: residual {:e} > {tol:e}",
            eq.residual
        )));
    }
    Ok(eq)
}

/// Both equilibria of the single-port circuit.
///
/// Eliminating the inductor current from the steady state gives the
/// capacitor-voltage quadratic `(1 + r_ℓ/r_p) v² − v_g v + r_ℓ P = 0`; the larger
/// root is the stable candidate. Roots with `v ≤ 0` lie outside the operating
/// domain and are dropped. Every returned point is checked by substitution.
pub fn single_port_equilibria(p: &SinglePortParams) -> Result<EquilibriumPair> {
    let sys = build_single_port(p)?;
    let a = 1.0 + p.r_l / p.r_p;
    let (disc, roots) = positive_quadratic_roots(a, p.v_g, p.r_l * p.p);
    let Some((v_s, v_u)) = roots else {
        return Err(Error::NoEquilibrium { discriminant: disc, p_e_max: Some(p_max_existence(p)) });
    };
    let point = |v: f64| vec![p.l * (p.v_g - v) / p.r_l, p.c * v];
    let tol = SINGLE_PORT_RESIDUAL_TOL;
    let stable = if v_s > 0.0 { Some(validated(&sys, point(v_s), tol)?) } else { None };
    let unstable = if v_u > 0.0 { Some(validated(&sys, point(v_u), tol)?) } else { None };
    Ok(EquilibriumPair { stable, unstable, discriminant: disc })
}

/// Both equilibria of the synchronous generator, as momenta `p = M ω`.
///
/// `ω̄ = (D_d ω* + τ_m ± √Δ) / (2(D_d + D_m))` with
/// `Δ = (D_d ω* + τ_m)² − 4 (D_d + D_m) P_e`.
pub fn sg_equilibria(p: &SgParams) -> Result<EquilibriumPair> {
    let sys = build_sg(p)?;
    let (disc, roots) = positive_quadratic_roots(p.damping(), p.drive(), p.p_e);
    let Some((w_s, w_u)) = roots else {
        return Err(Error::NoEquilibrium { discriminant: disc, p_e_max: None });
    };
    let tol = SG_RESIDUAL_TOL;
    let stable = if w_s > 0.0 { Some(validated(&sys, vec![p.inertia * w_s], tol)?) } else { None };
    let unstable = if w_u > 0.0 { Some(validated(&sys, vec![p.inertia * w_u], tol)?) } else { None };
    Ok(EquilibriumPair { stable, unstable, discriminant: disc })
}

/// Largest load power with a real equilibrium: `r_p v_g² / (4 r_ℓ (r_ℓ + r_p))`.
pub fn p_max_existence(p: &SinglePortParams) -> f64 {
    p.r_p * p.v_g * p.v_g / (4.0 * p.r_l * (p.r_l + p.r_p))
}

/// Load power below which `R + Z(x̄_s) > 0`: `r_p v_g² / (r_p + 2 r_ℓ)²`.
pub fn p_max_stability_formula(p: &SinglePortParams) -> f64 {
    p.r_p * p.v_g * p.v_g / (p.r_p + 2.0 * p.r_l).powi(2)
}

/// Result of the numeric stability-limit search.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StabilityBound {
    pub p_max: f64,
    /// The certificate held on the whole existence range, so `p_max = P^e_max`.
    pub saturated: bool,
}

/// `λ_min(R + Z(x̄_s)) > 0` at load power `power`; false when no stable candidate exists.
fn certified_at(p: &SinglePortParams, power: f64) -> bool {
    let q = SinglePortParams { p: power, ..*p };
    match single_port_equilibria(&q) {
        Ok(EquilibriumPair { stable: Some(eq), .. }) => eq.r_plus_z_min_eig > 0.0,
        _ => false,
    }
}

/// Supremum of load powers in `(0, P^e_max]` certified by `R + Z(x̄_s) > 0`, by bisection.
pub fn p_max_stability_numeric(p: &SinglePortParams) -> Result<StabilityBound> {
    p.validate()?;
    let p_e = p_max_existence(p);
    if certified_at(p, p_e) {
        return Ok(StabilityBound { p_max: p_e, saturated: true });
    }
    let (mut lo, mut hi) = (0.0, p_e);
    while hi - lo > 1e-12 * hi {
        let mid = 0.5 * (lo + hi);
        if certified_at(p, mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(StabilityBound { p_max: 0.5 * (lo + hi), saturated: false })
}

/// Residual tolerance every returned equilibrium satisfies.
pub fn residual_bound(sys: &PwhSystem) -> f64 {
    equilibrium_tolerance(sys)
}
