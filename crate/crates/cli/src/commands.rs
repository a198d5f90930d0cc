//! Command implementations. Each returns the text to print on success.

use std::fmt::Write as _;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pwh_core::equilibrium::{sg_equilibria, single_port_equilibria, Equilibrium, EquilibriumPair};
use pwh_core::model::{SgParams, SinglePortParams};
use pwh_core::modelfile::{parse_model, ModelDocument};
use pwh_core::roa::{roa_diagonal, RoaEstimate, RoaMode};
use pwh_core::shifted::ShiftedContext;
use pwh_core::sim::{
    classify_many, classify_many_with_trajectories, integrate, stop_radii, ClassifyOptions, IcClass, IcOutcome,
    IntegrateOptions,
};

use crate::csvio::{write_phase, write_sweep, write_trajectory, SweepRow};
use crate::error::{CliError, CliResult};
use crate::report::{certificates, default_t_max, find_equilibria, EquilibriumEntry};
use crate::svg::PhasePlot;

/// Reads and parses a model file; unreadable files are input errors.
pub fn load(path: &Path) -> CliResult<ModelDocument> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    Ok(parse_model(&text)?)
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Failure(format!("cannot create {}: {e}", path.display())))
}

/// The equilibrium trajectories are classified against: the stable branch when
/// there is one, otherwise the first equilibrium found.
fn reference(entries: &[EquilibriumEntry]) -> CliResult<&Equilibrium> {
    entries
        .iter()
        .find(|e| e.branch == "stable")
        .or_else(|| entries.first())
        .map(|e| &e.equilibrium)
        .ok_or_else(|| CliError::NoEquilibrium("no candidate equilibrium".into()))
}

fn sg_threshold(certs: &[RoaEstimate]) -> Option<f64> {
    certs.iter().find(|c| c.mode == RoaMode::SgHalfLine).and_then(|c| c.threshold_omega)
}

pub struct SimulateArgs<'a> {
    pub x0: &'a [f64],
    pub t_end: f64,
    pub rel_tol: f64,
    pub out: &'a Path,
}

pub fn simulate(doc: &ModelDocument, args: &SimulateArgs) -> CliResult<String> {
    let sys = doc.build()?;
    if args.x0.len() != sys.n() {
        return Err(CliError::Input(format!(
            "--x0 has {} components, the model has {} states",
            args.x0.len(),
            sys.n()
        )));
    }
    if !(args.t_end > 0.0) || !args.t_end.is_finite() {
        return Err(CliError::Input(format!("--t-end must be positive, got {}", args.t_end)));
    }
    if !sys.in_domain(args.x0) {
        return Err(CliError::Domain(format!("initial state {:?} is outside the operating domain", args.x0)));
    }
    let x_ref = match find_equilibria(doc, &sys) {
        Ok(entries) => Some(reference(&entries)?.x_bar.clone()),
        Err(CliError::NoEquilibrium(_)) => None,
        Err(e) => return Err(e),
    };
    let opts = IntegrateOptions {
        rel_tol: args.rel_tol,
        stop: x_ref.as_deref().map(stop_radii),
        x_ref: x_ref.clone(),
        ..Default::default()
    };
    let traj = integrate(&sys, args.x0, args.t_end, &opts)?;
    write_trajectory(create(args.out)?, &traj)?;
    let mut s = String::new();
    let _ =
        writeln!(s, "stop: {:?} at t = {:e} after {} points", traj.stop_reason, traj.final_time(), traj.times.len());
    if x_ref.is_none() {
        let _ = writeln!(s, "note: no equilibrium; S is measured from the origin");
    }
    Ok(s)
}

pub enum Sampling {
    Grid(usize, usize),
    Random(usize),
}

pub const DEFAULT_GRID: (usize, usize) = (15, 15);

pub struct PhaseArgs<'a> {
    pub sampling: Sampling,
    pub t_max: Option<f64>,
    pub out: &'a Path,
    pub svg: Option<&'a Path>,
    pub seed: u64,
}

/// Box `[lo_i, hi_i]` around `x̄`: twice the certificate extent per coordinate,
/// `x̄_i` itself for the one-state generator, else half of `|x̄_i|`. Power
/// channels are clipped to positive values.
fn phase_box(doc: &ModelDocument, ctx: &ShiftedContext, certs: &[RoaEstimate]) -> Vec<(f64, f64)> {
    let sys = ctx.system();
    let x_bar = ctx.x_bar();
    let extent: Option<Vec<f64>> =
        certs.iter().filter(|c| c.level_k.is_finite() && c.level_k > 0.0).find_map(|c| c.semi_axes.clone());
    (0..sys.n())
        .map(|i| {
            let c = x_bar[i];
            let h = match (&extent, doc) {
                (_, ModelDocument::Sg(_)) => c.abs(),
                (Some(a), _) => 2.0 * a[i],
                (None, _) => 0.5 * c.abs(),
            };
            let h = if h > 0.0 { h } else { 1.0 };
            let (mut lo, hi) = (c - h, c + h);
            if sys.is_power_channel(i) && sys.m().matrix()[(i, i)] > 0.0 {
                let floor = if c > 0.0 { 1e-3 * hi } else { lo };
                lo = lo.max(floor);
            }
            (lo, hi)
        })
        .collect()
}

fn lin(lo: f64, hi: f64, k: usize, count: usize) -> f64 {
    if count == 1 {
        0.5 * (lo + hi)
    } else {
        lo + (hi - lo) * k as f64 / (count - 1) as f64
    }
}

fn phase_samples(bounds: &[(f64, f64)], sampling: &Sampling, seed: u64) -> CliResult<Vec<Vec<f64>>> {
    match *sampling {
        Sampling::Grid(r, c) => match bounds.len() {
            1 => Ok((0..r * c).map(|k| vec![lin(bounds[0].0, bounds[0].1, k, r * c)]).collect()),
            2 => Ok((0..r)
                .flat_map(|i| {
                    (0..c).map(move |j| vec![lin(bounds[0].0, bounds[0].1, j, c), lin(bounds[1].0, bounds[1].1, i, r)])
                })
                .collect()),
            n => Err(CliError::Input(format!("--grid needs one or two states, the model has {n}; use --samples"))),
        },
        Sampling::Random(n) => {
            if n == 0 {
                return Err(CliError::Input("--samples must be positive".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Ok((0..n).map(|_| bounds.iter().map(|&(lo, hi)| rng.random_range(lo..=hi)).collect()).collect())
        }
    }
}

type Curve = (IcClass, Vec<[f64; 2]>);

pub fn phase(doc: &ModelDocument, args: &PhaseArgs) -> CliResult<String> {
    let sys = doc.build()?;
    if args.svg.is_some() && sys.n() != 2 {
        return Err(CliError::Render(format!(
            "SVG phase plots need a two-state model, this one has {} states",
            sys.n()
        )));
    }
    let t_max = args.t_max.unwrap_or_else(|| default_t_max(doc));
    if !(t_max > 0.0) || !t_max.is_finite() {
        return Err(CliError::Input(format!("--t-max must be positive, got {t_max}")));
    }
    let entries = find_equilibria(doc, &sys)?;
    let eq = reference(&entries)?;
    let ctx = ShiftedContext::new(&sys, &eq.x_bar)?;
    let (certs, _) = certificates(doc, &sys, &entries, Default::default())?;
    let bounds = phase_box(doc, &ctx, &certs);
    let all = phase_samples(&bounds, &args.sampling, args.seed)?;
    let total = all.len();
    let samples: Vec<Vec<f64>> = all.into_iter().filter(|x| sys.in_domain(x)).collect();
    let opts = ClassifyOptions::with_t_max(t_max);

    let (outcomes, curves): (Vec<IcOutcome>, Vec<Curve>) = if args.svg.is_some() {
        classify_many_with_trajectories(&sys, eq, &samples, &opts)?
            .into_iter()
            .map(|(o, traj)| {
                let pts = traj.states.iter().map(|x| [x[0], x[1]]).collect();
                (o.clone(), (o.class, pts))
            })
            .unzip()
    } else {
        (classify_many(&sys, eq, &samples, &opts)?, Vec::new())
    };
    write_phase(create(args.out)?, &samples, &outcomes)?;

    if let Some(path) = args.svg {
        let ellipse = certs
            .iter()
            .find(|c| c.mode == RoaMode::Diagonal && c.level_k.is_finite())
            .and_then(|c| c.semi_axes.as_ref())
            .map(|a| ([eq.x_bar[0], eq.x_bar[1]], [a[0], a[1]]));
        let plot = PhasePlot {
            bounds: [bounds[0], bounds[1]],
            labels: ["x1".into(), "x2".into()],
            curves,
            ellipse,
            equilibrium: Some([eq.x_bar[0], eq.x_bar[1]]),
        };
        std::fs::write(path, plot.render())
            .map_err(|e| CliError::Render(format!("cannot write {}: {e}", path.display())))?;
    }

    let count = |c: IcClass| outcomes.iter().filter(|o| o.class == c).count();
    let mut s = String::new();
    let _ = writeln!(
        s,
        "classified {} initial states ({} outside the domain skipped), t_max {t_max} s: {} converged, {} diverged, {} timeout",
        samples.len(),
        total - samples.len(),
        count(IcClass::Converged),
        count(IcClass::Diverged),
        count(IcClass::Timeout)
    );
    if let Some(w) = sg_threshold(&certs) {
        let _ = writeln!(s, "threshold omega_u = {w:.6} rad/s");
    }
    Ok(s)
}

pub struct SweepArgs<'a> {
    pub param: &'a str,
    pub from: f64,
    pub to: f64,
    pub steps: usize,
    pub out: &'a Path,
}

pub const SINGLE_PORT_PARAMS: [&str; 6] = ["v_g", "r_l", "r_p", "L", "C", "P"];
pub const SG_PARAMS: [&str; 6] = ["M", "D_m", "D_d", "tau_m", "omega_star", "P_e"];

fn set_single_port(p: &mut SinglePortParams, name: &str, v: f64) {
    match name {
        "v_g" => p.v_g = v,
        "r_l" => p.r_l = v,
        "r_p" => p.r_p = v,
        "L" => p.l = v,
        "C" => p.c = v,
        _ => p.p = v,
    }
}

fn set_sg(p: &mut SgParams, name: &str, v: f64) {
    match name {
        "M" => p.inertia = v,
        "D_m" => p.d_m = v,
        "D_d" => p.d_d = v,
        "tau_m" => p.tau_m = v,
        "omega_star" => p.omega_star = v,
        _ => p.p_e = v,
    }
}

fn sweep_row(
    value: f64,
    pair: pwh_core::Result<EquilibriumPair>,
    sys: pwh_core::Result<pwh_core::model::PwhSystem>,
) -> CliResult<SweepRow> {
    let absent = SweepRow { value, existence: false, lambda_min: None, k_d: None };
    let stable = match pair {
        Ok(EquilibriumPair { stable: Some(s), .. }) => s,
        Ok(_) | Err(pwh_core::Error::NoEquilibrium { .. }) => return Ok(absent),
        Err(e) => return Err(e.into()),
    };
    let sys = sys?;
    let k_d = ShiftedContext::new(&sys, &stable.x_bar).and_then(|ctx| roa_diagonal(&ctx)).ok().map(|c| c.level_k);
    Ok(SweepRow { value, existence: true, lambda_min: Some(stable.r_plus_z_min_eig), k_d })
}

pub fn sweep(doc: &ModelDocument, args: &SweepArgs) -> CliResult<String> {
    if args.steps == 0 {
        return Err(CliError::Input("--steps must be positive".into()));
    }
    if !args.from.is_finite() || !args.to.is_finite() {
        return Err(CliError::Input("--from and --to must be finite".into()));
    }
    let known: &[&str] = match doc {
        ModelDocument::SinglePort(_) => &SINGLE_PORT_PARAMS,
        ModelDocument::Sg(_) => &SG_PARAMS,
        other => {
            return Err(CliError::Input(format!("sweep supports single_port and sg models, not {}", other.kind())))
        }
    };
    if !known.contains(&args.param) {
        return Err(CliError::Input(format!("unknown parameter {:?}; expected one of {known:?}", args.param)));
    }
    let mut rows = Vec::with_capacity(args.steps);
    for k in 0..args.steps {
        let v = if args.steps == 1 {
            args.from
        } else {
            args.from + (args.to - args.from) * k as f64 / (args.steps - 1) as f64
        };
        let row = match doc {
            ModelDocument::SinglePort(d) => {
                let mut p = d.params();
                set_single_port(&mut p, args.param, v);
                p.validate()?;
                sweep_row(v, single_port_equilibria(&p), pwh_core::model::build_single_port(&p))?
            }
            ModelDocument::Sg(d) => {
                let mut p = d.params();
                set_sg(&mut p, args.param, v);
                p.validate()?;
                sweep_row(v, sg_equilibria(&p), pwh_core::model::build_sg(&p))?
            }
            _ => unreachable!(),
        };
        rows.push(row);
    }
    write_sweep(create(args.out)?, args.param, &rows)?;
    let existing = rows.iter().filter(|r| r.existence).count();
    Ok(format!(
        "swept {} from {} to {} in {} steps: equilibrium exists at {existing}\n",
        args.param, args.from, args.to, args.steps
    ))
}
