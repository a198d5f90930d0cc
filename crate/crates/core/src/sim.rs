//! Time integration of PwH dynamics and simulation-based checks of the
//! certificates.
//!
//! The integrator is an embedded Runge–Kutta pair with local extrapolation:
//! Dormand–Prince 5(4) by default, Fehlberg 7(8) for tight tolerances. Leaving `Ω⁺` (a power-channel `(Mx)_i` dropping to
//! its floor) is an ordinary stop reason: the step is halved until the exit
//! time is pinned down to `1e-9 · t_end`.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::equilibrium::Equilibrium;
use crate::error::{Error, Result};
use crate::model::PwhSystem;
use crate::numkernel::{dot, norm2, sub_vec};
use crate::roa::{sample_sublevel, RoaEstimate, RoaMode};
use crate::shifted::ShiftedContext;

/// Time-dependent input `u(t)` replacing the constant `ū`.
pub type InputSignal = Arc<dyn Fn(f64) -> Vec<f64> + Send + Sync>;

/// Default horizon for circuit models, seconds.
pub const DEFAULT_T_MAX_CIRCUIT: f64 = 0.5;
/// Default horizon for the generator model, seconds. Its slowest time
/// constant is in the thousands of seconds.
pub const DEFAULT_T_MAX_SG: f64 = 1e5;
/// Convergence radius, relative to `1 + ‖x̄‖`.
pub const CONVERGE_RADIUS: f64 = 1e-3;
/// Divergence radius, relative to `1 + ‖x̄‖`.
pub const DIVERGE_RADIUS: f64 = 1e3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum StopReason {
    ReachedTEnd,
    Converged,
    LeftDomain,
    /// Distance to the reference exceeded the divergence radius.
    Escaped,
    StepUnderflow,
    MaxSteps,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// `S` relative to the reference state of the run (`H` when the reference is zero).
    pub s_values: Vec<f64>,
    pub stop_reason: StopReason,
}

impl Trajectory {
    pub fn last_state(&self) -> &[f64] {
        self.states.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn final_time(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StopRadii {
    pub converge: f64,
    pub diverge: f64,
}

#[derive(Clone)]
pub struct IntegrateOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub h_max: Option<f64>,
    pub max_steps: usize,
    /// Reference state for `S` and for the stop radii; zero when absent.
    pub x_ref: Option<Vec<f64>>,
    pub input: Option<InputSignal>,
    pub stop: Option<StopRadii>,
    pub method: Method,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-12,
            h_max: None,
            max_steps: 5_000_000,
            x_ref: None,
            input: None,
            stop: None,
            method: Method::Auto,
        }
    }
}

impl std::fmt::Debug for IntegrateOptions {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("IntegrateOptions")
            .field("rel_tol", &self.rel_tol)
            .field("abs_tol", &self.abs_tol)
            .field("h_max", &self.h_max)
            .field("max_steps", &self.max_steps)
            .field("x_ref", &self.x_ref)
            .field("input", &self.input.as_ref().map(|_| "<signal>"))
            .field("stop", &self.stop)
            .field("method", &self.method)
            .finish()
    }
}

/// Embedded Runge–Kutta pair.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub enum Method {
    /// Dormand–Prince 5(4) above `rel_tol = 1e-9`, Fehlberg 7(8) at tighter tolerances.
    #[default]
    Auto,
    Dopri5,
    Rkf78,
}

impl Method {
    fn tableau(self, rel_tol: f64) -> &'static Tableau {
        match self {
            Method::Dopri5 => &DOPRI5,
            Method::Rkf78 => &RKF78,
            Method::Auto if rel_tol < 1e-9 => &RKF78,
            Method::Auto => &DOPRI5,
        }
    }
}

struct Tableau {
    c: &'static [f64],
    a: &'static [&'static [f64]],
    /// Weights of the propagated solution.
    b: &'static [f64],
    /// Weights of the error estimate.
    e: &'static [f64],
    /// Last stage is evaluated at the propagated solution.
    fsal: bool,
    /// Order of the error estimate plus one, for step-size control.
    err_order: f64,
}

static DOPRI5: Tableau = Tableau {
    c: &[0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0],
    a: &[
        &[],
        &[1.0 / 5.0],
        &[3.0 / 40.0, 9.0 / 40.0],
        &[44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0],
        &[19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0],
        &[9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0],
        &[35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ],
    b: &[35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0],
    e: &[71.0 / 57600.0, 0.0, -71.0 / 16695.0, 71.0 / 1920.0, -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0],
    fsal: true,
    err_order: 5.0,
};

static RKF78: Tableau = Tableau {
    c: &[
        0.0,
        2.0 / 27.0,
        1.0 / 9.0,
        1.0 / 6.0,
        5.0 / 12.0,
        1.0 / 2.0,
        5.0 / 6.0,
        1.0 / 6.0,
        2.0 / 3.0,
        1.0 / 3.0,
        1.0,
        0.0,
        1.0,
    ],
    a: &[
        &[],
        &[2.0 / 27.0],
        &[1.0 / 36.0, 1.0 / 12.0],
        &[1.0 / 24.0, 0.0, 1.0 / 8.0],
        &[5.0 / 12.0, 0.0, -25.0 / 16.0, 25.0 / 16.0],
        &[1.0 / 20.0, 0.0, 0.0, 1.0 / 4.0, 1.0 / 5.0],
        &[-25.0 / 108.0, 0.0, 0.0, 125.0 / 108.0, -65.0 / 27.0, 125.0 / 54.0],
        &[31.0 / 300.0, 0.0, 0.0, 0.0, 61.0 / 225.0, -2.0 / 9.0, 13.0 / 900.0],
        &[2.0, 0.0, 0.0, -53.0 / 6.0, 704.0 / 45.0, -107.0 / 9.0, 67.0 / 90.0, 3.0],
        &[-91.0 / 108.0, 0.0, 0.0, 23.0 / 108.0, -976.0 / 135.0, 311.0 / 54.0, -19.0 / 60.0, 17.0 / 6.0, -1.0 / 12.0],
        &[
            2383.0 / 4100.0,
            0.0,
            0.0,
            -341.0 / 164.0,
            4496.0 / 1025.0,
            -301.0 / 82.0,
            2133.0 / 4100.0,
            45.0 / 82.0,
            45.0 / 164.0,
            18.0 / 41.0,
        ],
        &[3.0 / 205.0, 0.0, 0.0, 0.0, 0.0, -6.0 / 41.0, -3.0 / 205.0, -3.0 / 41.0, 3.0 / 41.0, 6.0 / 41.0, 0.0],
        &[
            -1777.0 / 4100.0,
            0.0,
            0.0,
            -341.0 / 164.0,
            4496.0 / 1025.0,
            -289.0 / 82.0,
            2193.0 / 4100.0,
            51.0 / 82.0,
            33.0 / 164.0,
            12.0 / 41.0,
            0.0,
            1.0,
        ],
    ],
    // eighth-order weights (local extrapolation)
    b: &[
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        34.0 / 105.0,
        9.0 / 35.0,
        9.0 / 35.0,
        9.0 / 280.0,
        9.0 / 280.0,
        0.0,
        41.0 / 840.0,
        41.0 / 840.0,
    ],
    e: &[41.0 / 840.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 41.0 / 840.0, -41.0 / 840.0, -41.0 / 840.0],
    fsal: false,
    err_order: 8.0,
};

struct Rhs<'a> {
    sys: &'a PwhSystem,
    input: Option<&'a InputSignal>,
}

impl Rhs<'_> {
    fn eval(&self, t: f64, x: &[f64]) -> Option<Vec<f64>> {
        match self.input {
            Some(u) => self.sys.rhs_with_input(x, &u(t)),
            None => self.sys.rhs_with_input(x, self.sys.u_bar()),
        }
    }
}

/// One embedded step from `(t, y)` with first stage `k1 = f(t, y)`.
/// Returns the propagated solution, its derivative and the error vector,
/// or `None` when a stage leaves the domain.
fn rk_step(tab: &Tableau, rhs: &Rhs, t: f64, y: &[f64], k1: &[f64], h: f64) -> Option<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let n = y.len();
    let stages = tab.c.len();
    let mut k: Vec<Vec<f64>> = Vec::with_capacity(stages);
    k.push(k1.to_vec());
    let mut stage = vec![0.0; n];
    for s in 1..stages {
        for i in 0..n {
            let acc: f64 = tab.a[s].iter().zip(&k).map(|(a, kj)| a * kj[i]).sum();
            stage[i] = y[i] + h * acc;
        }
        k.push(rhs.eval(t + tab.c[s] * h, &stage)?);
    }
    let err: Vec<f64> = (0..n).map(|i| h * tab.e.iter().zip(&k).map(|(e, ks)| e * ks[i]).sum::<f64>()).collect();
    if tab.fsal {
        let f_new = k.pop().expect("at least one stage");
        return Some((stage, f_new, err));
    }
    let y_new: Vec<f64> =
        (0..n).map(|i| y[i] + h * tab.b.iter().zip(&k).map(|(b, ks)| b * ks[i]).sum::<f64>()).collect();
    let f_new = rhs.eval(t + h, &y_new)?;
    Some((y_new, f_new, err))
}

fn error_norm(err: &[f64], y: &[f64], y_new: &[f64], rel: f64, abs: f64) -> f64 {
    let n = err.len() as f64;
    (err.iter()
        .zip(y.iter().zip(y_new))
        .map(|(e, (a, b))| {
            let sc = abs + rel * a.abs().max(b.abs());
            (e / sc).powi(2)
        })
        .sum::<f64>()
        / n)
        .sqrt()
}

fn check_options(x0: &[f64], t_end: f64, opts: &IntegrateOptions, n: usize) -> Result<()> {
    if x0.len() != n {
        return Err(Error::Input(format!("x0 has length {}, expected {n}", x0.len())));
    }
    if !(t_end > 0.0) || !t_end.is_finite() {
        return Err(Error::Input(format!("t_end must be positive, got {t_end}")));
    }
    for (name, tol) in [("rel_tol", opts.rel_tol), ("abs_tol", opts.abs_tol)] {
        if !(1e-12..=1e-3).contains(&tol) {
            return Err(Error::Input(format!("{name} = {tol:e} outside [1e-12, 1e-3]")));
        }
    }
    if let Some(r) = &opts.x_ref {
        if r.len() != n {
            return Err(Error::Input("reference state has wrong length".into()));
        }
    }
    Ok(())
}

/// Adaptive integration of `ẋ = (J − R)Mx + G(x)u + u_c` from `x0` over `[0, t_end]`.
///
/// Every accepted step is recorded. `u` is `ū` unless an input signal is given.
pub fn integrate(sys: &PwhSystem, x0: &[f64], t_end: f64, opts: &IntegrateOptions) -> Result<Trajectory> {
    let n = sys.n();
    check_options(x0, t_end, opts, n)?;
    if !sys.in_domain(x0) {
        return Err(Error::Domain("initial state is outside Ω⁺".into()));
    }
    let x_ref = opts.x_ref.clone().unwrap_or_else(|| vec![0.0; n]);
    let m = sys.m().matrix();
    let s_of = |x: &[f64]| {
        let d = sub_vec(x, &x_ref);
        0.5 * dot(&d, &m.mul_vec(&d))
    };

    // floor on (Mx)_i for power channels
    let grad_ref = m.mul_vec(&x_ref);
    let grad0 = m.mul_vec(x0);
    let floors: Vec<(usize, f64)> = sys
        .power_channels()
        .iter()
        .map(|&i| {
            let base = if grad_ref[i] > 0.0 { grad_ref[i] } else { grad0[i] };
            (i, 1e-9 * base)
        })
        .collect();
    let above_floor = |x: &[f64]| {
        let g = m.mul_vec(x);
        floors.iter().all(|&(i, f)| g[i] > f)
    };

    let rhs = Rhs { sys, input: opts.input.as_ref() };
    let tab = opts.method.tableau(opts.rel_tol);
    let expo = -1.0 / tab.err_order;
    let loc_tol = 1e-9 * t_end;
    let h_min = 1e-15 * t_end;
    let h_max = opts.h_max.unwrap_or(t_end).min(t_end);

    let mut traj = Trajectory {
        times: vec![0.0],
        states: vec![x0.to_vec()],
        s_values: vec![s_of(x0)],
        stop_reason: StopReason::ReachedTEnd,
    };
    let distance = |x: &[f64]| norm2(&sub_vec(x, &x_ref));
    if let Some(stop) = opts.stop {
        if distance(x0) <= stop.converge {
            traj.stop_reason = StopReason::Converged;
            return Ok(traj);
        }
    }

    let mut t = 0.0;
    let mut y = x0.to_vec();
    let mut f = rhs.eval(0.0, &y).ok_or_else(|| Error::Domain("initial state is outside Ω⁺".into()))?;

    // initial step from the scaled size of y and f
    let mut h = {
        let sc: Vec<f64> = y.iter().map(|v| opts.abs_tol + opts.rel_tol * v.abs()).collect();
        let d0 = (y.iter().zip(&sc).map(|(v, s)| (v / s).powi(2)).sum::<f64>() / n as f64).sqrt();
        let d1 = (f.iter().zip(&sc).map(|(v, s)| (v / s).powi(2)).sum::<f64>() / n as f64).sqrt();
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 * t_end } else { 0.01 * d0 / d1 };
        h0.min(h_max).max(h_min)
    };

    let mut steps = 0usize;
    loop {
        if t >= t_end {
            traj.stop_reason = StopReason::ReachedTEnd;
            break;
        }
        if steps >= opts.max_steps {
            traj.stop_reason = StopReason::MaxSteps;
            break;
        }
        if h < h_min {
            traj.stop_reason = StopReason::StepUnderflow;
            break;
        }
        let h_try = h.min(t_end - t);
        let outcome = rk_step(tab, &rhs, t, &y, &f, h_try).filter(|(y_new, _, _)| above_floor(y_new));
        let Some((y_new, f_new, err)) = outcome else {
            if h_try <= loc_tol {
                traj.stop_reason = StopReason::LeftDomain;
                break;
            }
            h = 0.5 * h_try;
            continue;
        };
        let en = error_norm(&err, &y, &y_new, opts.rel_tol, opts.abs_tol);
        if !en.is_finite() {
            h = 0.5 * h_try;
            continue;
        }
        if en > 1.0 {
            h = h_try * (0.9 * en.powf(expo)).max(0.2);
            // accuracy demands steps below the localization tolerance: near a
            // finite-time collapse, check whether the exit lies within it
            if h < loc_tol {
                let probe = loc_tol.min(t_end - t);
                let exits = rk_step(tab, &rhs, t, &y, &f, probe).is_none_or(|(y_p, _, _)| !above_floor(&y_p));
                if exits {
                    traj.stop_reason = StopReason::LeftDomain;
                    break;
                }
            }
            continue;
        }
        steps += 1;
        t = if h_try == t_end - t { t_end } else { t + h_try };
        y = y_new;
        f = f_new;
        traj.times.push(t);
        traj.s_values.push(s_of(&y));
        traj.states.push(y.clone());
        let factor = if en == 0.0 { 5.0 } else { (0.9 * en.powf(expo)).clamp(0.2, 5.0) };
        h = (h_try * factor).min(h_max);
        if let Some(stop) = opts.stop {
            let d = distance(&y);
            if d <= stop.converge {
                traj.stop_reason = StopReason::Converged;
                break;
            }
            if d >= stop.diverge {
                traj.stop_reason = StopReason::Escaped;
                break;
            }
        }
    }
    Ok(traj)
}

/// Fixed-step solution at `t_end` (used for order studies). `Auto` means Dormand–Prince.
pub fn integrate_fixed_steps(
    sys: &PwhSystem,
    x0: &[f64],
    t_end: f64,
    steps: usize,
    method: Method,
) -> Result<Vec<f64>> {
    let tab = method.tableau(1.0);
    let rhs = Rhs { sys, input: None };
    let h = t_end / steps as f64;
    let mut y = x0.to_vec();
    let mut f = rhs.eval(0.0, &y).ok_or_else(|| Error::Domain("initial state is outside Ω⁺".into()))?;
    for k in 0..steps {
        let (y_new, f_new, _) = rk_step(tab, &rhs, k as f64 * h, &y, &f, h)
            .ok_or_else(|| Error::Domain("fixed-step run left Ω⁺".into()))?;
        y = y_new;
        f = f_new;
    }
    Ok(y)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum IcClass {
    Converged,
    Diverged,
    Timeout,
}

impl IcClass {
    pub fn as_str(self) -> &'static str {
        match self {
            IcClass::Converged => "converged",
            IcClass::Diverged => "diverged",
            IcClass::Timeout => "timeout",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IcOutcome {
    pub class: IcClass,
    pub stop_reason: StopReason,
    pub t_stop: f64,
}

/// Classification settings for initial conditions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassifyOptions {
    pub t_max: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl ClassifyOptions {
    pub fn with_t_max(t_max: f64) -> Self {
        Self { t_max, rel_tol: 1e-8, abs_tol: 1e-12 }
    }
}

/// Stop radii `1e-3 (1 + ‖x̄‖)` and `1e3 (1 + ‖x̄‖)`.
pub fn stop_radii(x_bar: &[f64]) -> StopRadii {
    let scale = 1.0 + norm2(x_bar);
    StopRadii { converge: CONVERGE_RADIUS * scale, diverge: DIVERGE_RADIUS * scale }
}

fn classify_with_trajectory(
    sys: &PwhSystem,
    x_bar: &[f64],
    x0: &[f64],
    opts: &ClassifyOptions,
) -> Result<(IcOutcome, Trajectory)> {
    let traj = integrate(
        sys,
        x0,
        opts.t_max,
        &IntegrateOptions {
            rel_tol: opts.rel_tol,
            abs_tol: opts.abs_tol,
            x_ref: Some(x_bar.to_vec()),
            stop: Some(stop_radii(x_bar)),
            ..IntegrateOptions::default()
        },
    )?;
    let class = match traj.stop_reason {
        StopReason::Converged => IcClass::Converged,
        StopReason::LeftDomain | StopReason::Escaped => IcClass::Diverged,
        StopReason::ReachedTEnd | StopReason::StepUnderflow | StopReason::MaxSteps => IcClass::Timeout,
    };
    Ok((IcOutcome { class, stop_reason: traj.stop_reason, t_stop: traj.final_time() }, traj))
}

/// Converged once within `1e-3 (1 + ‖x̄‖)` of `x̄`; diverged on leaving `Ω⁺`
/// or moving `1e3 (1 + ‖x̄‖)` away; timeout otherwise.
pub fn classify_ic(sys: &PwhSystem, eq: &Equilibrium, x0: &[f64], opts: &ClassifyOptions) -> Result<IcOutcome> {
    Ok(classify_with_trajectory(sys, &eq.x_bar, x0, opts)?.0)
}

/// Like [`classify_ic`], also returning the simulated trajectory.
pub fn classify_ic_with_trajectory(
    sys: &PwhSystem,
    eq: &Equilibrium,
    x0: &[f64],
    opts: &ClassifyOptions,
) -> Result<(IcOutcome, Trajectory)> {
    classify_with_trajectory(sys, &eq.x_bar, x0, opts)
}

/// Classifies many initial conditions in parallel; output order matches input order.
pub fn classify_many(
    sys: &PwhSystem,
    eq: &Equilibrium,
    samples: &[Vec<f64>],
    opts: &ClassifyOptions,
) -> Result<Vec<IcOutcome>> {
    samples.par_iter().map(|x0| classify_ic(sys, eq, x0, opts)).collect()
}

/// Like [`classify_many`], also returning each trajectory.
pub fn classify_many_with_trajectories(
    sys: &PwhSystem,
    eq: &Equilibrium,
    samples: &[Vec<f64>],
    opts: &ClassifyOptions,
) -> Result<Vec<(IcOutcome, Trajectory)>> {
    samples.par_iter().map(|x0| classify_with_trajectory(sys, &eq.x_bar, x0, opts)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationOptions {
    pub n_samples: usize,
    pub seed: u64,
    pub classify: ClassifyOptions,
    /// Sublevel certificates sample `S < (1 − margin) k`; the half-line samples
    /// `ω > ω̄_u + margin (ω̄_s − ω̄_u)`.
    pub boundary_margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RoaValidationReport {
    pub n_samples: usize,
    pub n_converged: usize,
    pub n_diverged: usize,
    pub n_timeout: usize,
    /// Initial states that did not converge, sorted.
    pub counterexamples: Vec<Vec<f64>>,
    pub boundary_margin: f64,
    pub t_max: f64,
    pub seed: u64,
}

impl RoaValidationReport {
    pub fn is_sound(&self) -> bool {
        self.counterexamples.is_empty()
    }
}

/// Draws `n` initial conditions uniformly from the certified set.
pub fn sample_certificate(
    ctx: &ShiftedContext,
    est: &RoaEstimate,
    n: usize,
    seed: u64,
    margin: f64,
) -> Result<Vec<Vec<f64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match est.mode {
        RoaMode::SgHalfLine => {
            let m = ctx.system().m().matrix()[(0, 0)];
            let w_s = est.x_bar[0] * m;
            let w_u = est.threshold_omega.unwrap_or(0.0);
            let lo = w_u + margin * (w_s - w_u);
            let hi = 2.0 * w_s;
            Ok((0..n)
                .map(|_| {
                    // open interval (lo, hi)
                    let mut w = rng.random_range(lo..hi);
                    while w <= lo {
                        w = rng.random_range(lo..hi);
                    }
                    vec![w / m]
                })
                .collect())
        }
        _ => {
            let level = est.level_k * (1.0 - margin);
            if !level.is_finite() {
                return Err(Error::Input("cannot sample an unbounded certificate".into()));
            }
            (0..n).map(|_| sample_sublevel(ctx, level, &mut rng)).collect()
        }
    }
}

/// Monte-Carlo check of a certificate: sample inside it, simulate, count.
pub fn validate_roa(
    sys: &PwhSystem,
    eq: &Equilibrium,
    est: &RoaEstimate,
    opts: &ValidationOptions,
) -> Result<RoaValidationReport> {
    let ctx = ShiftedContext::new(sys, &eq.x_bar)?;
    let samples = sample_certificate(&ctx, est, opts.n_samples, opts.seed, opts.boundary_margin)?;
    let outcomes = classify_many(sys, eq, &samples, &opts.classify)?;
    let mut report = RoaValidationReport {
        n_samples: samples.len(),
        n_converged: 0,
        n_diverged: 0,
        n_timeout: 0,
        counterexamples: Vec::new(),
        boundary_margin: opts.boundary_margin,
        t_max: opts.classify.t_max,
        seed: opts.seed,
    };
    for (x0, out) in samples.into_iter().zip(outcomes) {
        match out.class {
            IcClass::Converged => report.n_converged += 1,
            IcClass::Diverged => report.n_diverged += 1,
            IcClass::Timeout => report.n_timeout += 1,
        }
        if out.class != IcClass::Converged {
            report.counterexamples.push(x0);
        }
    }
    report.counterexamples.sort_by(|a, b| {
        a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PassivityReport {
    /// `max_k (dS/dt − yᵀ(u − ū))` over checked samples.
    pub max_violation: f64,
    pub max_s: f64,
    /// Largest `dS/dt` seen, useful for the constant-input decrease check.
    pub max_ds_dt: f64,
    /// Indices of samples outside `Ω̄_p`, where the inequality is not asserted.
    pub skipped: Vec<usize>,
    pub n_checked: usize,
}

impl PassivityReport {
    /// `max_violation ≤ 1e-9 · max(1, max S)`.
    pub fn tolerance(&self) -> f64 {
        1e-9 * self.max_s.max(1.0)
    }

    pub fn is_passive(&self) -> bool {
        self.max_violation <= self.tolerance()
    }
}

/// Checks `dS/dt ≤ (y − ȳ)ᵀ(u − ū)` at every recorded state, with `dS/dt = ∇Sᵀẋ`.
pub fn monitor_passivity(
    ctx: &ShiftedContext,
    traj: &Trajectory,
    u_signal: &dyn Fn(f64) -> Vec<f64>,
) -> PassivityReport {
    let sys = ctx.system();
    let u_bar = sys.u_bar();
    let mut report = PassivityReport {
        max_violation: f64::NEG_INFINITY,
        max_s: 0.0,
        max_ds_dt: f64::NEG_INFINITY,
        skipped: Vec::new(),
        n_checked: 0,
    };
    for (k, (t, x)) in traj.times.iter().zip(&traj.states).enumerate() {
        report.max_s = report.max_s.max(ctx.shifted_hamiltonian(x));
        if !ctx.in_omega_p_closure(x) {
            report.skipped.push(k);
            continue;
        }
        let u = u_signal(*t);
        let (Some(x_dot), Ok(y)) = (sys.rhs_with_input(x, &u), ctx.output_y(x)) else {
            report.skipped.push(k);
            continue;
        };
        let ds_dt = dot(&ctx.grad_s(x), &x_dot);
        let supply = dot(&y, &sub_vec(&u, u_bar));
        report.max_violation = report.max_violation.max(ds_dt - supply);
        report.max_ds_dt = report.max_ds_dt.max(ds_dt);
        report.n_checked += 1;
    }
    report
}
