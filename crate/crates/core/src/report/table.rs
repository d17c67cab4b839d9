use std::collections::HashSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::RelevanceStats;
use crate::error::{Error, Result};
use crate::train::{accuracy, mcnemar, EvalRecord, McNemar};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    /// Row index of the other system.
    pub against: usize,
    pub test: McNemar,
}

/// One system under one condition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub system: String,
    /// `clean` or an attack label such as `addqa epochs=2`.
    pub condition: String,
    pub accuracy: f64,
    pub qids: Vec<String>,
    pub bits: Vec<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relevance: Option<RelevanceStats>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub comparisons: Vec<Comparison>,
}

/// Input row for [`make_report`].
#[derive(Clone, Debug)]
pub struct ReportRow {
    pub condition: String,
    pub record: EvalRecord,
    pub relevance: Option<RelevanceStats>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportSet {
    pub rows: Vec<EvalReport>,
}

fn divergent(a: &[String], b: &[String]) -> Vec<String> {
    if a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x == y) {
        return Vec::new();
    }
    let sa: HashSet<&String> = a.iter().collect();
    let sb: HashSet<&String> = b.iter().collect();
    let mut out: Vec<String> = sa.symmetric_difference(&sb).map(|s| (*s).clone()).collect();
    out.sort();
    if out.is_empty() {
        // Same questions in a different order.
        out = a.iter().zip(b).filter(|(x, y)| x != y).map(|(x, _)| x.clone()).collect();
    }
    out
}

/// Builds report rows and runs McNemar tests for each `(i, j)` pair of rows.
/// Compared rows must cover the same questions in the same order.
pub fn make_report(rows: Vec<ReportRow>, comparisons: &[(usize, usize)]) -> Result<ReportSet> {
    let mut out: Vec<EvalReport> = rows
        .into_iter()
        .map(|r| EvalReport {
            system: r.record.model_id,
            condition: r.condition,
            accuracy: accuracy(&r.record.bits),
            qids: r.record.qids,
            bits: r.record.bits,
            relevance: r.relevance,
            comparisons: Vec::new(),
        })
        .collect();
    for &(i, j) in comparisons {
        if i >= out.len() || j >= out.len() {
            return Err(Error::Contract(format!("comparison ({i}, {j}) refers to a missing row")));
        }
        let bad = divergent(&out[i].qids, &out[j].qids);
        if !bad.is_empty() {
            return Err(Error::Alignment(bad));
        }
        let test = mcnemar(&out[i].bits, &out[j].bits)?;
        out[i].comparisons.push(Comparison { against: j, test });
    }
    Ok(ReportSet { rows: out })
}

impl ReportSet {
    /// Fixed columns: system, condition, accuracy, questions, McNemar p-values.
    pub fn render_table(&self) -> String {
        let header = ["system", "condition", "accuracy", "n", "mcnemar"];
        let body: Vec<[String; 5]> = self
            .rows
            .iter()
            .map(|r| {
                let tests = r
                    .comparisons
                    .iter()
                    .map(|c| {
                        let mark = if c.test.p_value < 0.05 { "*" } else { "" };
                        format!("vs {}: p={:.4}{mark}", self.rows[c.against].system, c.test.p_value)
                    })
                    .collect::<Vec<_>>()
                    .join("; ");
                [
                    r.system.clone(),
                    r.condition.clone(),
                    format!("{:.2}", r.accuracy),
                    r.bits.len().to_string(),
                    tests,
                ]
            })
            .collect();
        let mut widths = header.map(str::len);
        for row in &body {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.len());
            }
        }
        let mut s = String::new();
        let line = |s: &mut String, cells: &[&str]| {
            let parts: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
            let _ = writeln!(s, "{}", parts.join(" | ").trim_end());
        };
        line(&mut s, &header);
        let _ = writeln!(s, "{}", widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-+-"));
        for row in &body {
            line(&mut s, &row.iter().map(String::as_str).collect::<Vec<_>>());
        }
        s
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}
