//! Coefficient tables as aligned text and as CSV.
//!
//! GEE tables carry `Estimate, Std. Err, Wald, p-value`; mixed-model tables
//! carry `Estimate, Std. Error, DF, t-value, p-value`. The CSV form is
//! `term,estimate,se,stat,p[,df]` and parses back with [`parse_table_csv`].
//! p-values below `2e-16` print as `<2e-16`.

use std::fmt::Write as _;

use crate::csvio::format_number;
use crate::error::{Error, Result};
use crate::fit::{CoefficientTable, StatKind, TermEstimate};

pub const P_FLOOR: f64 = 2e-16;
const P_FLOOR_TEXT: &str = "<2e-16";

/// p-value for display: `<2e-16`, scientific below `1e-4`, else 5 decimals.
pub fn format_p(p: f64) -> String {
    if p < P_FLOOR {
        P_FLOOR_TEXT.to_string()
    } else if p < 1e-4 {
        format!("{p:.1e}")
    } else {
        format!("{p:.5}")
    }
}

fn format_p_csv(p: f64) -> String {
    if p < P_FLOOR {
        P_FLOOR_TEXT.to_string()
    } else {
        format_number(p)
    }
}

fn parse_p(s: &str) -> Option<f64> {
    if s == P_FLOOR_TEXT {
        Some(P_FLOOR)
    } else {
        s.parse().ok()
    }
}

pub fn format_table_text(table: &CoefficientTable) -> String {
    let width = table
        .rows
        .iter()
        .map(|r| r.term.len())
        .max()
        .unwrap_or(4)
        .max(4);
    let mut out = String::new();
    match table.kind {
        StatKind::Wald => {
            let _ = writeln!(
                out,
                "{:<width$}  {:>10}  {:>10}  {:>10}  {:>10}",
                "Term", "Estimate", "Std. Err", "Wald", "p-value"
            );
            for r in &table.rows {
                let _ = writeln!(
                    out,
                    "{:<width$}  {:>10.5}  {:>10.5}  {:>10.2}  {:>10}",
                    r.term,
                    r.estimate,
                    r.std_error,
                    r.statistic,
                    format_p(r.p_value)
                );
            }
        }
        StatKind::T => {
            let _ = writeln!(
                out,
                "{:<width$}  {:>10}  {:>10}  {:>6}  {:>8}  {:>10}",
                "Fixed Effect", "Estimate", "Std. Error", "DF", "t-value", "p-value",
                width = width.max(12)
            );
            for r in &table.rows {
                let _ = writeln!(
                    out,
                    "{:<width$}  {:>10.5}  {:>10.5}  {:>6}  {:>8.2}  {:>10}",
                    r.term,
                    r.estimate,
                    r.std_error,
                    r.df.map_or("-".to_string(), |d| format!("{d:.0}")),
                    r.statistic,
                    format_p(r.p_value),
                    width = width.max(12)
                );
            }
        }
    }
    out
}

pub fn format_table_csv(table: &CoefficientTable) -> String {
    let with_df = table.kind == StatKind::T;
    let mut out = String::from("term,estimate,se,stat,p");
    if with_df {
        out.push_str(",df");
    }
    out.push('\n');
    for r in &table.rows {
        let _ = write!(
            out,
            "{},{},{},{},{}",
            csv_field(&r.term),
            format_number(r.estimate),
            format_number(r.std_error),
            format_number(r.statistic),
            format_p_csv(r.p_value)
        );
        if with_df {
            let _ = write!(out, ",{}", r.df.map_or(String::new(), format_number));
        }
        out.push('\n');
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Parse a table written by [`format_table_csv`].
pub fn parse_table_csv(text: &str) -> Result<Vec<TermEstimate>> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let headers = rdr
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let want = ["term", "estimate", "se", "stat", "p"];
    let missing: Vec<String> = want
        .iter()
        .filter(|w| !headers.iter().any(|h| h == **w))
        .map(|w| w.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::Schema { missing });
    }
    let col = |name: &str| headers.iter().position(|h| h == name);
    let df_col = col("df");
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let line = k as u64 + 2;
        let rec = rec.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        let field = |name: &str| rec.get(col(name).unwrap_or(usize::MAX)).unwrap_or("");
        let num = |name: &str| -> Result<f64> {
            field(name).parse().map_err(|_| Error::Parse {
                line,
                message: format!("bad {name}: {:?}", field(name)),
            })
        };
        rows.push(TermEstimate {
            term: field("term").to_string(),
            estimate: num("estimate")?,
            std_error: num("se")?,
            statistic: num("stat")?,
            p_value: parse_p(field("p")).ok_or_else(|| Error::Parse {
                line,
                message: format!("bad p: {:?}", field("p")),
            })?,
            df: df_col.and_then(|c| rec.get(c)).and_then(|s| s.parse().ok()),
        });
    }
    Ok(rows)
}
