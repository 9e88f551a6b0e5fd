//! Output in the three formats. Every command builds an `Output`, which keeps
//! a JSON document, a CSV body and a header/rows table side by side.

use clap::ValueEnum;
use countdown_core::{Backend, Scalar};
use serde_json::{json, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Table,
}

pub struct Output {
    pub json: Value,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
    /// `false` turns into exit status 1.
    pub ok: bool,
}

impl Output {
    pub fn new(json: Value, headers: &[&str], rows: Vec<Vec<String>>) -> Self {
        Output {
            json,
            headers: headers.iter().map(|h| h.to_string()).collect(),
            rows,
            ok: true,
        }
    }

    pub fn ok(mut self, ok: bool) -> Self {
        self.ok = ok;
        self
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => serde_json::to_string_pretty(&self.json).expect("serializable") + "\n",
            Format::Csv => {
                let mut s = self.headers.join(",") + "\n";
                for row in &self.rows {
                    s.push_str(&row.iter().map(|c| csv_field(c)).collect::<Vec<_>>().join(","));
                    s.push('\n');
                }
                s
            }
            Format::Table => table(&self.headers, &self.rows),
        }
    }
}

fn csv_field(c: &str) -> String {
    if c.contains([',', '"', '\n']) {
        format!("\"{}\"", c.replace('"', "\"\""))
    } else {
        c.to_string()
    }
}

fn table(headers: &[String], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let line = |cells: &[String]| {
        cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
            + "\n"
    };
    let mut s = line(headers);
    s.push_str(&line(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>()));
    for row in rows {
        s.push_str(&line(row));
    }
    s
}

/// A scalar for CSV and table cells: exact values print as `p/q` when short,
/// otherwise as their nearest double; float values print with their bound.
pub fn cell<S: Scalar>(v: &S) -> String {
    match S::BACKEND {
        Backend::Exact => {
            let s = v.to_string();
            if s.len() <= 24 {
                s
            } else {
                format!("{:e}", v.to_f64())
            }
        }
        Backend::Float => format!("{:e}", v.to_f64()),
    }
}

pub fn opt_cell<S: Scalar>(v: &Option<S>) -> String {
    v.as_ref().map(cell).unwrap_or_else(|| "-".into())
}

/// JSON for one scalar: the value, plus its error bound on the float backend.
pub fn scalar_json<S: Scalar>(v: &S) -> Value {
    match S::BACKEND {
        Backend::Exact => json!({ "value": v.to_string(), "approx": v.to_f64() }),
        Backend::Float => json!({ "value": v.to_string(), "errBound": v.err_bound() }),
    }
}
