//! CSV and JSON output helpers with locale-independent formatting.

use std::fmt::Write as _;

/// Formats a float with 12 significant digits, plain decimal point,
/// no separators; identical across platforms and locales.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    let s = format!("{x:.11e}");
    // normalize "1.23456789012e2" exponent form for readability in CSVs
    s
}

/// One CSV document built row by row; fields are joined with commas and
/// rows terminated with `\n`.
pub struct Csv {
    buf: String,
}

impl Csv {
    pub fn new(header: &[String]) -> Self {
        let mut buf = String::new();
        let _ = writeln!(buf, "{}", header.join(","));
        Self { buf }
    }

    pub fn row(&mut self, fields: &[String]) {
        let _ = writeln!(self.buf, "{}", fields.join(","));
    }

    pub fn into_string(self) -> String {
        self.buf
    }
}

/// Header for policy-iteration trace CSVs:
/// `iter,l_1,...,l_nm,gain_change,gain_err,cost_rel_err,seed`.
pub fn trace_header(nm: usize) -> Vec<String> {
    let mut h = vec!["iter".to_string()];
    for i in 1..=nm {
        h.push(format!("l_{i}"));
    }
    h.extend(
        ["gain_change", "gain_err", "cost_rel_err", "seed"]
            .iter()
            .map(|s| s.to_string()),
    );
    h
}
