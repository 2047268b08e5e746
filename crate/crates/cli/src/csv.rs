//! Plain-text tables: '#' metadata lines, one header line, comma-separated
//! values written with 17 significant digits.

use std::collections::BTreeMap;
use std::fmt::Write;

use odmr_core::spectrum::{Axis, Spectrum};

use crate::error::CliError;

pub type Metadata = BTreeMap<String, String>;

pub const SPECTRUM_1D: [&str; 2] = ["omega_mw_hz", "p0"];
pub const SPECTRUM_2D: [&str; 3] = ["omega_ac_hz", "omega_mw_hz", "p0"];
pub const SENSITIVITY: [&str; 3] = ["omega_ac_hz", "delta_b", "normalized"];

pub fn number(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub meta: Metadata,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(meta: Metadata, columns: &[&str]) -> Self {
        Self {
            meta,
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[k]).collect()
    }

    pub fn has_columns(&self, names: &[&str]) -> bool {
        self.columns.len() == names.len() && self.columns.iter().zip(names).all(|(a, b)| a == b)
    }

    pub fn render(&self, title: &str) -> String {
        let mut out = String::new();
        writeln!(out, "# {title}").unwrap();
        for (k, v) in &self.meta {
            writeln!(out, "# {k} = {v}").unwrap();
        }
        writeln!(out, "{}", self.columns.join(",")).unwrap();
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| number(*v)).collect();
            writeln!(out, "{}", cells.join(",")).unwrap();
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut meta = Metadata::new();
        let mut columns: Option<Vec<String>> = None;
        let mut rows = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(comment) = line.strip_prefix('#') {
                if let Some((k, v)) = comment.split_once('=') {
                    meta.insert(k.trim().to_string(), v.trim().to_string());
                }
                continue;
            }
            match &columns {
                None => columns = Some(line.split(',').map(|c| c.trim().to_string()).collect()),
                Some(cols) => {
                    let row: Vec<f64> = line
                        .split(',')
                        .map(|c| c.trim().parse::<f64>())
                        .collect::<Result<_, _>>()
                        .map_err(|e| CliError::Input(format!("line {}: {e}", n + 1)))?;
                    if row.len() != cols.len() {
                        return Err(CliError::Input(format!(
                            "line {}: expected {} values, found {}",
                            n + 1,
                            cols.len(),
                            row.len()
                        )));
                    }
                    if row.iter().any(|v| !v.is_finite()) {
                        return Err(CliError::Input(format!("line {}: non-finite value", n + 1)));
                    }
                    rows.push(row);
                }
            }
        }
        let columns = columns.ok_or_else(|| CliError::Input("no header line".into()))?;
        if rows.is_empty() {
            return Err(CliError::Input("no data rows".into()));
        }
        Ok(Self { meta, columns, rows })
    }
}

pub fn spectrum_table(s: &Spectrum, meta: Metadata) -> Table {
    let mw = s.mw.points();
    if s.is_2d() {
        let ac = s.ac.points();
        let mut t = Table::new(meta, &SPECTRUM_2D);
        for (i, r) in ac.iter().enumerate() {
            for (x, p) in mw.iter().zip(s.row(i)) {
                t.rows.push(vec![*r, *x, *p]);
            }
        }
        t
    } else {
        let mut t = Table::new(meta, &SPECTRUM_1D);
        for (x, p) in mw.iter().zip(s.row(0)) {
            t.rows.push(vec![*x, *p]);
        }
        t
    }
}

/// Rebuild a spectrum; 2D tables must be complete and row-major in ω_AC.
pub fn spectrum_from_table(t: &Table) -> Result<Spectrum, CliError> {
    if t.has_columns(&SPECTRUM_1D) {
        let omega_ac = t
            .meta
            .get("omega_ac_hz")
            .and_then(|v| v.parse().ok())
            .unwrap_or(0.0);
        return Ok(Spectrum::from_values(
            Axis::Points(t.column(0)),
            Axis::Fixed(omega_ac),
            t.column(1),
        )?);
    }
    if !t.has_columns(&SPECTRUM_2D) {
        return Err(CliError::Input(format!("unrecognized columns {:?}", t.columns)));
    }
    let mut ac: Vec<f64> = Vec::new();
    for row in &t.rows {
        if ac.last() != Some(&row[0]) {
            ac.push(row[0]);
        }
    }
    let cols = t.rows.len() / ac.len();
    if cols * ac.len() != t.rows.len() {
        return Err(CliError::Input("2D table is not a complete grid".into()));
    }
    let mw: Vec<f64> = t.rows[..cols].iter().map(|r| r[1]).collect();
    for (k, row) in t.rows.iter().enumerate() {
        if row[0] != ac[k / cols] || row[1] != mw[k % cols] {
            return Err(CliError::Input(format!("2D table breaks grid order at data row {}", k + 1)));
        }
    }
    Ok(Spectrum::from_values(Axis::Points(mw), Axis::Points(ac), t.column(2))?)
}
