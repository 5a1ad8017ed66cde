//! Output files: CSV at full precision, human tables at six significant
//! digits.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use stacked_rmst::metrics::SummaryRow;
use stacked_rmst::simulation::IsseAssociation;

use crate::error::CliError;

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "RMST_STACK_OUT";

/// Output directory from the flag, the config file, the environment, or the
/// working directory, in that order.
pub fn resolve_out(flag: Option<PathBuf>, file: Option<PathBuf>) -> PathBuf {
    flag.or(file)
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

pub fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::io(path, e.into_error()))?;
    write_file(path, &bytes)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

/// `x` with six significant digits.
pub fn sig6(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() { "NA".into() } else { format!("{x}") };
    }
    if x == 0.0 {
        return "0".into();
    }
    let mag = x.abs().log10().floor() as i32;
    if !(-4..15).contains(&mag) {
        return format!("{x:.5e}");
    }
    let decimals = (5 - mag).max(0) as usize;
    format!("{x:.decimals$}")
}

/// Aligned text: one block per scenario and horizon, one line per estimator.
pub fn summary_table(rows: &[SummaryRow], association: Option<&IsseAssociation>) -> String {
    const HEAD: [&str; 10] = [
        "estimator", "rel.bias%", "MSE ratio", "ACL ratio", "coverage", "ISSE ratio", "MSE", "bound", "bound ok", "failed",
    ];
    let mut out = String::new();
    let mut i = 0;
    while i < rows.len() {
        let (b, tau) = (rows[i].scenario, rows[i].tau);
        let block: Vec<&SummaryRow> = rows[i..]
            .iter()
            .take_while(|r| r.scenario == b && r.tau == tau)
            .collect();
        i += block.len();
        let first = block[0];
        let _ = writeln!(
            out,
            "Scenario {b}, tau = {}, true gamma = {}, replications = {}",
            sig6(tau),
            sig6(first.truth),
            first.replications
        );
        let cells: Vec<[String; 10]> = block
            .iter()
            .map(|r| {
                let bias = if r.abs_bias_only {
                    format!("abs {}", sig6(r.bias))
                } else {
                    sig6(r.rel_bias_pct)
                };
                [
                    r.estimator.clone(),
                    bias,
                    sig6(r.mse_ratio),
                    sig6(r.acl_ratio),
                    sig6(r.coverage),
                    sig6(r.isse_ratio),
                    sig6(r.bound_mse),
                    sig6(r.isse_bound),
                    if r.bound_ok { "yes" } else { "NO" }.into(),
                    r.failures.to_string(),
                ]
            })
            .collect();
        let widths: Vec<usize> = (0..HEAD.len())
            .map(|c| cells.iter().map(|r| r[c].len()).chain([HEAD[c].len()]).max().unwrap_or(0))
            .collect();
        let line = |fields: &[&str]| {
            let mut s = String::from("  ");
            for (c, f) in fields.iter().enumerate() {
                if c == 0 {
                    let _ = write!(s, "{f:<w$}", w = widths[c]);
                } else {
                    let _ = write!(s, "  {f:>w$}", w = widths[c]);
                }
            }
            s.trim_end().to_string()
        };
        let _ = writeln!(out, "{}", line(&HEAD));
        for r in &cells {
            let fields: Vec<&str> = r.iter().map(String::as_str).collect();
            let _ = writeln!(out, "{}", line(&fields));
        }
        out.push('\n');
    }
    if let Some(a) = association {
        let _ = writeln!(
            out,
            "ISSE rank correlation over {} cells: with MSE {}, with |bias| {}",
            a.cells,
            sig6(a.rho_mse),
            sig6(a.rho_abs_bias)
        );
    }
    out
}
