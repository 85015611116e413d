//! Privacy-utility tradeoff records and their CSV persistence.

use crate::error::{Error, Result};

/// One point of the privacy-utility curve.
#[derive(Debug, Clone, PartialEq)]
pub struct TradeoffRecord {
    pub iteration: usize,
    pub cumulative_flips: usize,
    /// Privacy leakage of the current embedding.
    pub pl: f64,
    /// 1 - average precision of the similarity attack.
    pub one_minus_ap: f64,
    /// 1 - macro-F1 of node classification, when labels are available.
    pub one_minus_f1: Option<f64>,
    /// 1 - NMI against the original embedding's clustering, when evaluated.
    pub one_minus_nmi: Option<f64>,
    pub wall_seconds: f64,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// Render records as CSV; 6 decimal places, empty cells for unset optionals.
pub fn emit_tradeoff_csv(records: &[TradeoffRecord]) -> String {
    let mut out =
        String::from("iteration,flips,pl,one_minus_ap,one_minus_f1,one_minus_nmi,wall_seconds\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{:.6},{:.6},{},{},{:.6}\n",
            r.iteration,
            r.cumulative_flips,
            r.pl,
            r.one_minus_ap,
            fmt_opt(r.one_minus_f1),
            fmt_opt(r.one_minus_nmi),
            r.wall_seconds
        ));
    }
    out
}

/// Parse text produced by [`emit_tradeoff_csv`].
pub fn parse_tradeoff_csv(text: &str) -> Result<Vec<TradeoffRecord>> {
    let mut lines = text.lines();
    let bad = |line: usize| Error::MalformedEdgeLine { line };
    let header = lines.next().ok_or(bad(1))?;
    if header != "iteration,flips,pl,one_minus_ap,one_minus_f1,one_minus_nmi,wall_seconds" {
        return Err(bad(1));
    }
    let mut records = Vec::new();
    for (idx, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(bad(idx + 2));
        }
        let opt = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| bad(idx + 2))
            }
        };
        let num = |s: &str| -> Result<f64> { s.parse().map_err(|_| bad(idx + 2)) };
        records.push(TradeoffRecord {
            iteration: fields[0].parse().map_err(|_| bad(idx + 2))?,
            cumulative_flips: fields[1].parse().map_err(|_| bad(idx + 2))?,
            pl: num(fields[2])?,
            one_minus_ap: num(fields[3])?,
            one_minus_f1: opt(fields[4])?,
            one_minus_nmi: opt(fields[5])?,
            wall_seconds: num(fields[6])?,
        });
    }
    Ok(records)
}
