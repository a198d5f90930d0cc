//! The `analyze` report: equilibria, power limits, certificates and an
//! optional simulation check, rendered as text or JSON.

use std::fmt::Write;

use serde::Serialize;

use pwh_core::equilibrium::{
    p_max_existence, p_max_stability_formula, p_max_stability_numeric, sg_equilibria, single_port_equilibria,
    solve_newton, Equilibrium, EquilibriumPair,
};
use pwh_core::model::PwhSystem;
use pwh_core::modelfile::ModelDocument;
use pwh_core::numkernel::solve_linear;
use pwh_core::roa::{q_min_single_port, roa_diagonal, roa_general, sg_roa, IndexRule, RoaEstimate, RoaMode};
use pwh_core::shifted::ShiftedContext;
use pwh_core::sim::{
    validate_roa, ClassifyOptions, RoaValidationReport, ValidationOptions, DEFAULT_T_MAX_CIRCUIT, DEFAULT_T_MAX_SG,
};

use crate::error::{CliError, CliResult};

/// Relative difference above which two power limits are reported as discrepant.
pub const DISCREPANCY_REL: f64 = 0.01;
/// Fraction of the certified set excluded near its boundary when validating.
pub const VALIDATION_MARGIN: f64 = 0.01;

#[derive(Clone, Debug, Serialize)]
pub struct EquilibriumEntry {
    pub branch: String,
    /// Rotor speed `x̄ / M` for the generator model.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(flatten)]
    pub equilibrium: Equilibrium,
}

#[derive(Clone, Debug, Serialize)]
pub struct PowerLimits {
    pub load: f64,
    pub p_e_max: f64,
    pub p_s_max_formula: f64,
    pub p_s_max_numeric: f64,
    /// The numeric bound reached the existence limit.
    pub numeric_saturated: bool,
    pub reported_p_s_max: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Unavailable {
    pub mode: RoaMode,
    pub reason: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct ValidationSummary {
    pub mode: RoaMode,
    #[serde(flatten)]
    pub report: RoaValidationReport,
}

#[derive(Clone, Debug, Serialize)]
pub struct AnalysisReport {
    pub kind: String,
    pub n: usize,
    pub power_channels: Vec<usize>,
    pub equilibria: Vec<EquilibriumEntry>,
    pub power_limits: Option<PowerLimits>,
    pub certificates: Vec<RoaEstimate>,
    pub unavailable: Vec<Unavailable>,
    /// Smallest capacitor charge in the diagonal certificate (single port).
    pub q_min: Option<f64>,
    pub discrepancies: Vec<String>,
    pub validation: Option<ValidationSummary>,
    pub notes: Vec<String>,
    pub t_max: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct AnalyzeOptions {
    pub validate: Option<usize>,
    pub seed: u64,
    pub rule: IndexRule,
    pub t_max: Option<f64>,
}

/// Default classification horizon for a model kind.
pub fn default_t_max(doc: &ModelDocument) -> f64 {
    match doc {
        ModelDocument::Sg(_) => DEFAULT_T_MAX_SG,
        _ => DEFAULT_T_MAX_CIRCUIT,
    }
}

fn no_equilibrium(doc: &ModelDocument, e: pwh_core::Error) -> CliError {
    match (doc, &e) {
        (ModelDocument::SinglePort(d), pwh_core::Error::NoEquilibrium { discriminant, .. }) => {
            let p = d.params();
            CliError::NoEquilibrium(format!(
                "load P = {} W exceeds the existence limit P^e_max = {:.2} W (discriminant {discriminant:e})",
                p.p,
                p_max_existence(&p)
            ))
        }
        (_, pwh_core::Error::NoEquilibrium { discriminant, .. }) => {
            CliError::NoEquilibrium(format!("the equilibrium quadratic has discriminant {discriminant:e}"))
        }
        _ => e.into(),
    }
}

fn pair_entries(pair: EquilibriumPair, inertia: Option<f64>) -> CliResult<Vec<EquilibriumEntry>> {
    let entries: Vec<EquilibriumEntry> = [("stable", pair.stable), ("unstable", pair.unstable)]
        .into_iter()
        .filter_map(|(b, e)| {
            e.map(|equilibrium| EquilibriumEntry {
                branch: b.into(),
                omega: inertia.map(|m| equilibrium.x_bar[0] / m),
                equilibrium,
            })
        })
        .collect();
    if entries.is_empty() {
        return Err(CliError::NoEquilibrium("no candidate in the operating domain".into()));
    }
    Ok(entries)
}

/// Equilibria of the model, the one used for certificates first.
///
/// Two-branch families use their closed forms; general systems run Newton from
/// the unloaded operating point `−((J − R)M)⁻¹ u_c`, falling back to the origin.
pub fn find_equilibria(doc: &ModelDocument, sys: &PwhSystem) -> CliResult<Vec<EquilibriumEntry>> {
    match doc {
        ModelDocument::SinglePort(d) => {
            single_port_equilibria(&d.params()).map_err(|e| no_equilibrium(doc, e)).and_then(|p| pair_entries(p, None))
        }
        ModelDocument::Sg(d) => sg_equilibria(&d.params())
            .map_err(|e| no_equilibrium(doc, e))
            .and_then(|p| pair_entries(p, Some(d.inertia))),
        ModelDocument::Multiport(_) | ModelDocument::Raw(_) => {
            let start = solve_linear(&sys.linear_part(), sys.u_c())
                .ok()
                .map(|x| x.into_iter().map(|v| -v).collect::<Vec<f64>>())
                .filter(|x| x.iter().all(|v| v.is_finite()))
                .unwrap_or_else(|| vec![0.0; sys.n()]);
            let eq = solve_newton(sys, &start)
                .or_else(|_| solve_newton(sys, &vec![0.0; sys.n()]))
                .map_err(|e| CliError::NoEquilibrium(format!("Newton found no equilibrium ({e})")))?;
            Ok(vec![EquilibriumEntry { branch: "newton".into(), omega: None, equilibrium: eq }])
        }
    }
}

/// Certificates applicable to the model at `x_bar`, plus the modes that failed.
pub fn certificates(
    doc: &ModelDocument,
    sys: &PwhSystem,
    equilibria: &[EquilibriumEntry],
    rule: IndexRule,
) -> CliResult<(Vec<RoaEstimate>, Vec<Unavailable>)> {
    let mut found = Vec::new();
    let mut missing = Vec::new();
    if let ModelDocument::Sg(d) = doc {
        let pair = EquilibriumPair {
            stable: equilibria.iter().find(|e| e.branch == "stable").map(|e| e.equilibrium.clone()),
            unstable: equilibria.iter().find(|e| e.branch == "unstable").map(|e| e.equilibrium.clone()),
            discriminant: 0.0,
        };
        match sg_roa(&d.params(), &pair) {
            Ok(est) => found.push(est),
            Err(e) => missing.push(Unavailable { mode: RoaMode::SgHalfLine, reason: e.to_string() }),
        }
        return Ok((found, missing));
    }
    let x_bar = &equilibria[0].equilibrium.x_bar;
    let ctx = ShiftedContext::new(sys, x_bar)?;
    for (mode, res) in [(RoaMode::Diagonal, roa_diagonal(&ctx)), (RoaMode::General, roa_general(&ctx, rule))] {
        match res {
            Ok(est) => found.push(est),
            Err(e) => missing.push(Unavailable { mode, reason: e.to_string() }),
        }
    }
    Ok((found, missing))
}

/// `|a − b| / |b|`, with `b` the computed reference value.
fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// Runs every applicable analysis on a parsed model.
pub fn analyze(doc: &ModelDocument, opts: &AnalyzeOptions) -> CliResult<AnalysisReport> {
    let sys = doc.build()?;
    let t_max = opts.t_max.unwrap_or_else(|| default_t_max(doc));
    let equilibria = find_equilibria(doc, &sys)?;
    let mut discrepancies = Vec::new();
    let mut notes = Vec::new();

    let power_limits = match doc {
        ModelDocument::SinglePort(d) => {
            let p = d.params();
            let numeric = p_max_stability_numeric(&p)?;
            let limits = PowerLimits {
                load: p.p,
                p_e_max: p_max_existence(&p),
                p_s_max_formula: p_max_stability_formula(&p),
                p_s_max_numeric: numeric.p_max,
                numeric_saturated: numeric.saturated,
                reported_p_s_max: d.reported_p_s_max,
            };
            if rel_diff(limits.p_s_max_formula, limits.p_s_max_numeric) > DISCREPANCY_REL {
                discrepancies.push(format!(
                    "stability limit: formula {:.2} W vs numeric {:.2} W ({:.1}%)",
                    limits.p_s_max_formula,
                    limits.p_s_max_numeric,
                    100.0 * rel_diff(limits.p_s_max_formula, limits.p_s_max_numeric)
                ));
            }
            if let Some(r) = limits.reported_p_s_max {
                for (name, v) in [("formula", limits.p_s_max_formula), ("numeric", limits.p_s_max_numeric)] {
                    if rel_diff(r, v) > DISCREPANCY_REL {
                        discrepancies.push(format!(
                            "stability limit: reported {r:.2} W vs {name} {v:.2} W ({:.1}%)",
                            100.0 * rel_diff(r, v)
                        ));
                    }
                }
            }
            Some(limits)
        }
        _ => None,
    };

    let primary = &equilibria[0].equilibrium;
    let (certs, unavailable) = certificates(doc, &sys, &equilibria, opts.rule)?;

    let q_min = match doc {
        ModelDocument::SinglePort(d) => certs
            .iter()
            .find(|c| c.mode == RoaMode::Diagonal)
            .and_then(|_| q_min_single_port(&d.params(), primary.x_bar[1]).ok()),
        _ => None,
    };

    let validation = match opts.validate {
        Some(n) => {
            let target = [RoaMode::SgHalfLine, RoaMode::Diagonal, RoaMode::General]
                .iter()
                .find_map(|m| certs.iter().find(|c| c.mode == *m && c.level_k.is_finite()));
            match target {
                Some(est) => {
                    let report = validate_roa(
                        &sys,
                        primary,
                        est,
                        &ValidationOptions {
                            n_samples: n,
                            seed: opts.seed,
                            classify: ClassifyOptions::with_t_max(t_max),
                            boundary_margin: VALIDATION_MARGIN,
                        },
                    )?;
                    Some(ValidationSummary { mode: est.mode, report })
                }
                None => {
                    notes.push("validation skipped: no bounded certificate".into());
                    None
                }
            }
        }
        None => None,
    };

    Ok(AnalysisReport {
        kind: doc.kind().into(),
        n: sys.n(),
        power_channels: sys.power_channels().to_vec(),
        equilibria,
        power_limits,
        certificates: certs,
        unavailable,
        q_min,
        discrepancies,
        validation,
        notes,
        t_max,
    })
}

fn vec_str(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6e}")).collect();
    format!("[{}]", parts.join(", "))
}

impl AnalysisReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "model: {} (n = {}, power channels {:?})", self.kind, self.n, self.power_channels);
        for e in &self.equilibria {
            let q = &e.equilibrium;
            let _ = write!(s, "equilibrium ({}): x = {}", e.branch, vec_str(&q.x_bar));
            if let Some(w) = e.omega {
                let _ = write!(s, ", omega = {w:.6} rad/s");
            }
            s.push('\n');
            let _ = writeln!(
                s,
                "  {:?}; lambda_min(R+Z) = {:.6e}; spectral abscissa = {:.6e}; residual = {:.3e}",
                q.classification, q.r_plus_z_min_eig, q.spectral_abscissa, q.residual
            );
        }
        if let Some(p) = &self.power_limits {
            let _ = writeln!(s, "power limits (load P = {} W):", p.load);
            let _ = writeln!(s, "  existence P^e_max = {:.2} W", p.p_e_max);
            let _ = writeln!(s, "  stability formula r_p v_g^2/(r_p+2 r_l)^2 = {:.2} W", p.p_s_max_formula);
            let _ = writeln!(
                s,
                "  stability numeric (bisection on lambda_min(R+Z) > 0) = {:.2} W{}",
                p.p_s_max_numeric,
                if p.numeric_saturated { " (saturated at P^e_max)" } else { "" }
            );
            if let Some(r) = p.reported_p_s_max {
                let _ = writeln!(s, "  reported P^s_max = {r:.2} W");
            }
        }
        for d in &self.discrepancies {
            let _ = writeln!(s, "discrepancy: {d}");
        }
        for c in &self.certificates {
            match c.mode {
                RoaMode::SgHalfLine => {
                    let _ = writeln!(
                        s,
                        "certificate {:?}: omega > omega_u = {:.6} rad/s",
                        c.mode,
                        c.threshold_omega.unwrap_or(f64::NAN)
                    );
                }
                _ => {
                    let _ = write!(s, "certificate {:?}", c.mode);
                    if c.mode == RoaMode::General {
                        let _ = write!(s, " ({:?} indices)", c.rule);
                    }
                    let _ = write!(s, ": k = {:.6e} J", c.level_k);
                    if let Some(a) = &c.semi_axes {
                        let _ = write!(s, ", semi-axes {}", vec_str(a));
                    }
                    s.push('\n');
                }
            }
        }
        if let Some(q) = self.q_min {
            let _ = writeln!(s, "  smallest certified charge q_min = {q:.6e} C");
        }
        for u in &self.unavailable {
            let _ = writeln!(s, "certificate {:?}: unavailable ({})", u.mode, u.reason);
        }
        if let Some(v) = &self.validation {
            let r = &v.report;
            let _ = writeln!(
                s,
                "validation ({:?}, {} samples, seed {}, t_max {} s, margin {}): {} converged, {} diverged, {} timeout",
                v.mode, r.n_samples, r.seed, r.t_max, r.boundary_margin, r.n_converged, r.n_diverged, r.n_timeout
            );
            for x in &r.counterexamples {
                let _ = writeln!(s, "  counterexample {}", vec_str(x));
            }
        }
        for n in &self.notes {
            let _ = writeln!(s, "note: {n}");
        }
        s
    }
}
