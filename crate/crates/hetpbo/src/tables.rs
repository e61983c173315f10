//! Plain-text point tables: one row per point, columns separated by
//! whitespace or commas, `#` starts a comment.
//!
//! Anchor tables have `d` columns. Duel tables have `2d` columns, winner
//! coordinates first.

use std::fmt::Write as _;
use std::path::Path;

use hetpbo_core::preference::{DuelDataset, DuelRecord};
use hetpbo_core::Point;

use crate::{Error, Result};

/// Parses rows of numbers. With `columns = None` the first data row fixes
/// the width.
pub fn parse_rows(text: &str, columns: Option<usize>) -> Result<Vec<Vec<f64>>> {
    let mut width = columns;
    let mut rows = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<f64>().map_err(|_| Error::Parse {
                    line: i + 1,
                    message: format!("not a number: {t:?}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse { line: i + 1, message: "non-finite value".into() });
        }
        match width {
            Some(w) if w != row.len() => {
                return Err(Error::Parse {
                    line: i + 1,
                    message: format!("expected {w} columns, found {}", row.len()),
                })
            }
            None => width = Some(row.len()),
            _ => {}
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn parse_anchors(text: &str, dim: Option<usize>) -> Result<Vec<Point>> {
    parse_rows(text, dim)
}

pub fn parse_duels(text: &str, dim: Option<usize>) -> Result<DuelDataset> {
    let rows = parse_rows(text, dim.map(|d| 2 * d))?;
    let mut ds = DuelDataset::new();
    for (i, row) in rows.into_iter().enumerate() {
        if row.len() % 2 != 0 {
            return Err(Error::Parse { line: i + 1, message: "duel rows need an even column count".into() });
        }
        let (w, l) = row.split_at(row.len() / 2);
        ds.push(DuelRecord::new(w.to_vec(), l.to_vec())?)?;
    }
    Ok(ds)
}

fn format_rows<'a>(header: &str, rows: impl Iterator<Item = Vec<&'a [f64]>>) -> String {
    let mut out = String::new();
    writeln!(out, "# {header}").unwrap();
    for parts in rows {
        let cells: Vec<String> = parts.iter().flat_map(|p| p.iter()).map(|v| v.to_string()).collect();
        writeln!(out, "{}", cells.join(" ")).unwrap();
    }
    out
}

pub fn format_anchors(points: &[Point]) -> String {
    format_rows("anchors: one point per row", points.iter().map(|p| vec![p.as_slice()]))
}

pub fn format_duels(dataset: &DuelDataset) -> String {
    format_rows(
        "duels: winner coordinates, then loser coordinates",
        dataset.duels().iter().map(|d| vec![d.winner.as_slice(), d.loser.as_slice()]),
    )
}

pub fn read_anchors(path: &Path, dim: Option<usize>) -> Result<Vec<Point>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_anchors(&text, dim)
}

pub fn read_duels(path: &Path, dim: Option<usize>) -> Result<DuelDataset> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_duels(&text, dim)
}
