use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ForwardTrace;

/// Relevance and word importance of one question, relative to the answer
/// the trace is conditioned on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionExport {
    pub qid: String,
    pub selected: usize,
    pub conditioned_on: usize,
    pub relevance: Vec<f64>,
    pub word_importance: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub tokens: Option<Vec<Vec<String>>>,
}

impl AttentionExport {
    pub fn from_trace(trace: &ForwardTrace, qid: &str, tokens: Option<&[Vec<String>]>) -> Self {
        let j = trace.conditioned_on;
        AttentionExport {
            qid: qid.to_owned(),
            selected: trace.selected,
            conditioned_on: j,
            relevance: trace.relevance.clone(),
            word_importance: (0..trace.num_sentences()).map(|i| trace.word_importance(i, j)).collect(),
            tokens: tokens.map(<[_]>::to_vec),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Binary PPM heatmap: one band per sentence, the first cell shows the
    /// sentence relevance and the rest its word importances. Relevance and
    /// importance are min-max scaled separately per question onto gray
    /// levels 32..=255; unused cells stay black.
    pub fn to_ppm(&self, cell: usize) -> Vec<u8> {
        let cols = 1 + self.word_importance.iter().map(Vec::len).max().unwrap_or(0);
        let rows = self.relevance.len();
        let (w, h) = (cols * cell, rows * cell);
        let scale = |values: &mut dyn Iterator<Item = f64>| {
            let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
            move |v: f64| {
                let t = if hi > lo { (v - lo) / (hi - lo) } else { 1.0 };
                (32.0 + 223.0 * t).round() as u8
            }
        };
        let rel = scale(&mut self.relevance.iter().copied());
        let imp = scale(&mut self.word_importance.iter().flatten().copied());
        let mut grid = vec![0u8; rows * cols];
        for r in 0..rows {
            grid[r * cols] = rel(self.relevance[r]);
            for (c, &v) in self.word_importance[r].iter().enumerate() {
                grid[r * cols + 1 + c] = imp(v);
            }
        }
        let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
        for y in 0..h {
            for x in 0..w {
                let g = grid[(y / cell) * cols + x / cell];
                out.extend_from_slice(&[g, g, g]);
            }
        }
        out
    }
}

/// Writes the JSON document and, when `ppm` is given, the heatmap.
pub fn export_attention(export: &AttentionExport, json: &Path, ppm: Option<&Path>) -> Result<()> {
    fs::write(json, export.to_json()?).map_err(|e| Error::io(json, e))?;
    if let Some(path) = ppm {
        fs::write(path, export.to_ppm(16)).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}
