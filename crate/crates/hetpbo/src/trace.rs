//! Trace CSV files.
//!
//! One row per optimization round, describing the challenger proposed in that
//! round. Columns, in order:
//!
//! | column | meaning |
//! |---|---|
//! | `iteration` | round number, from 1 |
//! | `x_1..x_d` | challenger |
//! | `ref_1..ref_d` | reference (previous winner) |
//! | `challenger_won` | 1 if the challenger won the duel |
//! | `f` | latent utility at the challenger |
//! | `sigma2_true` | oracle noise variance at the challenger |
//! | `sigma2_hat` | anchor-estimated noise variance at the challenger |
//! | `mv_rho<ρ>` | `f − ρ·sigma2_true`, one column per risk level, `ρ = 0` first |
//! | `simple_regret`, `cum_regret` | regret for `ρ = 0` |
//! | `simple_regret_rho<ρ>`, `cum_regret_rho<ρ>` | regret for each other risk level |
//! | `lengthscale`, `bandwidth` | hyperparameters used in the round |
//! | `wall_ms` | round time, 0 unless timing is enabled |
//!
//! Risk levels given as multiples of `|f(x_max)|` are labelled like `3fmax`.
//! Cells that are unknown (live sessions have no ground truth) are empty.

use std::path::Path;

use hetpbo_core::trial::TraceRow;

use crate::{Error, Result};

pub fn header(dim: usize, rho_labels: &[String]) -> Vec<String> {
    let mut h = vec![String::from("iteration")];
    h.extend((1..=dim).map(|i| format!("x_{i}")));
    h.extend((1..=dim).map(|i| format!("ref_{i}")));
    h.extend(["challenger_won", "f", "sigma2_true", "sigma2_hat"].map(String::from));
    h.extend(rho_labels.iter().map(|l| format!("mv_rho{l}")));
    h.push("simple_regret".into());
    h.push("cum_regret".into());
    for l in rho_labels.iter().skip(1) {
        h.push(format!("simple_regret_rho{l}"));
        h.push(format!("cum_regret_rho{l}"));
    }
    h.extend(["lengthscale", "bandwidth", "wall_ms"].map(String::from));
    h
}

/// Labels for `ρ = 0` followed by the configured levels.
pub fn rho_labels(rhos: &[hetpbo_core::trial::RhoSpec]) -> Vec<String> {
    std::iter::once(String::from("0")).chain(rhos.iter().map(|r| r.label())).collect()
}

pub fn record(row: &TraceRow) -> Vec<String> {
    let num = |v: f64| v.to_string();
    let mut r = vec![row.iteration.to_string()];
    r.extend(row.challenger.iter().copied().map(num));
    r.extend(row.reference.iter().copied().map(num));
    r.push(if row.challenger_won { "1" } else { "0" }.into());
    r.extend([row.f, row.sigma2_true, row.sigma2_hat].map(num));
    r.extend(row.mv.iter().copied().map(num));
    r.push(num(row.simple_regret[0]));
    r.push(num(row.cum_regret[0]));
    for k in 1..row.simple_regret.len() {
        r.push(num(row.simple_regret[k]));
        r.push(num(row.cum_regret[k]));
    }
    r.extend([num(row.lengthscale), num(row.bandwidth), row.wall_ms.to_string()]);
    r
}

pub fn to_csv_string(header: &[String], records: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in records {
        w.write_record(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::io("<buffer>", e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn write_trace(path: &Path, dim: usize, rho_labels: &[String], rows: &[TraceRow]) -> Result<()> {
    let records: Vec<Vec<String>> = rows.iter().map(record).collect();
    let text = to_csv_string(&header(dim, rho_labels), &records)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// A numeric CSV table; empty cells read as NaN.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn values(&self, name: &str) -> Option<Vec<f64>> {
        let c = self.column(name)?;
        Some(self.rows.iter().map(|r| r[c]).collect())
    }
}

pub fn parse_table(text: &str) -> Result<Table> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|cell| {
                if cell.is_empty() {
                    Ok(f64::NAN)
                } else {
                    cell.parse::<f64>().map_err(|_| Error::Parse {
                        line: i + 2,
                        message: format!("not a number: {cell:?}"),
                    })
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(Table { header, rows })
}

pub fn read_table(path: &Path) -> Result<Table> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_table(&text)
}
