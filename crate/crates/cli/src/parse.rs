//! Parsers for command-line values.

use crate::error::{CliError, CliResult};

/// Comma-separated finite reals, e.g. `0.017,0.0305`.
pub fn parse_vector(text: &str) -> CliResult<Vec<f64>> {
    let text = text.trim();
    if text.is_empty() {
        return Err(CliError::Input("empty vector".into()));
    }
    text.split(',')
        .enumerate()
        .map(|(i, part)| {
            let v: f64 = part
                .trim()
                .parse()
                .map_err(|_| CliError::Input(format!("component {}: {:?} is not a number", i + 1, part.trim())))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(CliError::Input(format!("component {} is not finite", i + 1)))
            }
        })
        .collect()
}

/// Grid size `RxC` (also accepts `×`), both positive.
pub fn parse_grid(text: &str) -> CliResult<(usize, usize)> {
    let (r, c) = text
        .split_once(['x', 'X', '×'])
        .ok_or_else(|| CliError::Input(format!("grid {text:?} is not of the form RxC")))?;
    let dim = |s: &str| {
        s.trim().parse::<usize>().map_err(|_| CliError::Input(format!("grid dimension {:?} is not a count", s.trim())))
    };
    let (r, c) = (dim(r)?, dim(c)?);
    if r == 0 || c == 0 {
        return Err(CliError::Input(format!("grid {r}x{c} is empty")));
    }
    if r.saturating_mul(c) > 1_000_000 {
        return Err(CliError::Input(format!("grid {r}x{c} has more than 10^6 points")));
    }
    Ok((r, c))
}
