//! CSV formats. Floats are written with Rust's shortest round-trip
//! representation (at most 17 significant digits), so values reload exactly.

use std::io::Write;

use pwh_core::sim::{IcOutcome, Trajectory};

use crate::error::{CliError, CliResult};

pub fn trajectory_header(n: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((1..=n).map(|i| format!("x{i}")));
    h.push("S".into());
    h
}

pub fn phase_header(n: usize) -> Vec<String> {
    let mut h: Vec<String> = (1..=n).map(|i| format!("x0_{i}")).collect();
    h.push("class".into());
    h.push("t_stop".into());
    h
}

fn num(v: f64) -> String {
    format!("{v:?}")
}

/// Writes `t,x1,...,xn,S`, one row per recorded state.
pub fn write_trajectory<W: Write>(out: W, traj: &Trajectory) -> CliResult<()> {
    let n = traj.states.first().map_or(0, Vec::len);
    let mut w = csv::Writer::from_writer(out);
    w.write_record(trajectory_header(n))?;
    for ((t, x), s) in traj.times.iter().zip(&traj.states).zip(&traj.s_values) {
        let mut row = vec![num(*t)];
        row.extend(x.iter().map(|v| num(*v)));
        row.push(num(*s));
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

/// A trajectory file read back.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryTable {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub s_values: Vec<f64>,
}

/// Parses a trajectory CSV, requiring the exact header and finite values.
pub fn read_trajectory(text: &str) -> CliResult<TrajectoryTable> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header: Vec<String> = r
        .headers()
        .map_err(|e| CliError::Input(format!("trajectory header: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.len() < 3 {
        return Err(CliError::Input("trajectory header needs t, at least one state and S".into()));
    }
    let n = header.len() - 2;
    if header != trajectory_header(n) {
        return Err(CliError::Input(format!("unexpected trajectory header {header:?}")));
    }
    let mut table = TrajectoryTable { times: Vec::new(), states: Vec::new(), s_values: Vec::new() };
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Input(format!("row {}: {e}", line + 1)))?;
        if rec.len() != n + 2 {
            return Err(CliError::Input(format!("row {}: expected {} fields", line + 1, n + 2)));
        }
        let vals = rec
            .iter()
            .map(|f| f.trim().parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| CliError::Input(format!("row {}: non-numeric field", line + 1)))?;
        table.times.push(vals[0]);
        table.states.push(vals[1..=n].to_vec());
        table.s_values.push(vals[n + 1]);
    }
    Ok(table)
}

/// Writes `x0_1,...,x0_n,class,t_stop`.
pub fn write_phase<W: Write>(out: W, samples: &[Vec<f64>], outcomes: &[IcOutcome]) -> CliResult<()> {
    let n = samples.first().map_or(0, Vec::len);
    let mut w = csv::Writer::from_writer(out);
    w.write_record(phase_header(n))?;
    for (x0, o) in samples.iter().zip(outcomes) {
        let mut row: Vec<String> = x0.iter().map(|v| num(*v)).collect();
        row.push(o.class.as_str().into());
        row.push(num(o.t_stop));
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

/// One sweep row; `None` fields are written empty.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub existence: bool,
    pub lambda_min: Option<f64>,
    pub k_d: Option<f64>,
}

pub fn write_sweep<W: Write>(out: W, param: &str, rows: &[SweepRow]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([param, "existence", "lambda_min", "k_d"])?;
    let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
    for r in rows {
        w.write_record([num(r.value), r.existence.to_string(), opt(r.lambda_min), opt(r.k_d)])?;
    }
    w.flush()?;
    Ok(())
}
