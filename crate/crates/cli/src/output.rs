//! CSV tables and coarse-state checkpoints.

use std::fs;
use std::path::Path;

use eqfree_core::{BasisSpec, CoarseState};

use crate::error::CliError;

/// A CSV table with a provenance comment and a header naming units.
pub struct Table {
    text: String,
}

impl Table {
    pub fn new(config_hash: &str, header: &[&str]) -> Self {
        let mut text = format!("# config-hash: {config_hash}\n");
        text.push_str(&header.join(","));
        text.push('\n');
        Self { text }
    }

    pub fn row(&mut self, fields: &[String]) {
        self.text.push_str(&fields.join(","));
        self.text.push('\n');
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        fs::write(path, &self.text).map_err(|e| CliError::io(path, e))
    }
}

/// Data rows of a CSV produced by [`Table`], comment and header stripped.
pub fn read_rows(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>), CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.starts_with('#') && !l.trim().is_empty());
    let header = match lines.next() {
        Some((_, h)) => h.split(',').map(str::to_owned).collect(),
        None => return Err(format_error(path, 1, "missing header")),
    };
    let mut rows = Vec::new();
    for (idx, line) in lines {
        let row = line
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| format_error(path, idx + 1, "non-numeric field"))?;
        rows.push(row);
    }
    Ok((header, rows))
}

fn format_error(path: &Path, line: usize, message: &str) -> CliError {
    CliError::Format {
        path: path.display().to_string(),
        line,
        message: message.to_owned(),
    }
}

/// A stored coarse state and whether the run that produced it converged.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub state: CoarseState,
    pub converged: bool,
}

/// Text layout: comment lines, then `M P`, then `M + 1` rows of `P + 1`
/// coefficients (the marginal first, then each stratum's conditional).
pub fn write_checkpoint(path: &Path, cp: &Checkpoint, config_hash: &str) -> Result<(), CliError> {
    let basis = cp.state.basis();
    let mut text = format!(
        "# config-hash: {config_hash}\n# converged = {}\n",
        cp.converged
    );
    text.push_str(&format!("{} {}\n", basis.strata, basis.order));
    let rows = std::iter::once(cp.state.marginal()).chain(cp.state.conditional_rows());
    for row in rows {
        let fields: Vec<String> = row.iter().map(|c| c.to_string()).collect();
        text.push_str(&fields.join(" "));
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read_checkpoint(path: &Path) -> Result<Checkpoint, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut converged = None;
    let mut numbers: Vec<(usize, &str)> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(v) = comment.trim().strip_prefix("converged =") {
                converged = Some(match v.trim() {
                    "true" => true,
                    "false" => false,
                    _ => {
                        return Err(format_error(
                            path,
                            idx + 1,
                            "converged must be true or false",
                        ))
                    }
                });
            }
            continue;
        }
        numbers.extend(line.split_whitespace().map(|t| (idx + 1, t)));
    }
    let int = |k: usize| -> Result<usize, CliError> {
        let (line, tok) = numbers
            .get(k)
            .ok_or_else(|| format_error(path, 0, "truncated header"))?;
        tok.parse()
            .map_err(|_| format_error(path, *line, "expected an integer"))
    };
    let basis = BasisSpec::new(int(0)?, int(1)?)?;
    let coeffs = numbers[2..]
        .iter()
        .map(|(line, tok)| {
            tok.parse::<f64>()
                .map_err(|_| format_error(path, *line, "expected a number"))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if coeffs.len() != basis.len() {
        return Err(format_error(
            path,
            0,
            &format!(
                "expected {} coefficients, found {}",
                basis.len(),
                coeffs.len()
            ),
        ));
    }
    Ok(Checkpoint {
        state: CoarseState::from_flat(basis, &coeffs)?,
        converged: converged.unwrap_or(false),
    })
}
