use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{encode_instance, Dataset, EmbeddingTable, Plot, QAInstance};
use crate::error::{Error, Result};
use crate::model::{argmax, predict_probabilities, ModelParams};

/// Schema version of serialized [`AttackOutcome`] lines.
pub const OUTCOME_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackKind {
    Lexsub,
    Wordwb,
    AddC,
    AddQ,
    AddQA,
    Sentrm,
}

impl AttackKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AttackKind::Lexsub => "lexsub",
            AttackKind::Wordwb => "wordwb",
            AttackKind::AddC => "addc",
            AttackKind::AddQ => "addq",
            AttackKind::AddQA => "addqa",
            AttackKind::Sentrm => "sentrm",
        }
    }
}

/// Everything needed to rebuild the perturbed instance from the clean one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Perturbation {
    /// Question rewritten by substitution rules.
    Substitution { applied: Vec<String>, question: Vec<String> },
    /// Tokens at `positions` of plot sentence `sentence` replaced by `tokens`.
    WordReplacement {
        sentence: usize,
        positions: Vec<usize>,
        tokens: Vec<String>,
    },
    /// Sentence appended to the plot. `trajectory` holds the gold
    /// probability at initialization and after every committed change.
    Distractor { tokens: Vec<String>, trajectory: Vec<f64> },
    SentenceRemoval { sentence: usize },
    /// The attack did not apply; the instance is unchanged.
    Skipped { reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackOutcome {
    pub version: u32,
    pub qid: String,
    pub attack: AttackKind,
    /// Model the perturbation was optimized against or evaluated on.
    pub model_id: String,
    pub perturbation: Perturbation,
    pub gold: usize,
    pub pre_prob_gold: f64,
    pub post_prob_gold: f64,
    pub pre_correct: bool,
    pub post_correct: bool,
    pub post_selected: usize,
}

/// Applies `p` to a copy of the clean instance and plot.
pub fn apply_perturbation(inst: &QAInstance, plot: &Plot, p: &Perturbation) -> Result<(QAInstance, Plot)> {
    let bad = |reason: String| Error::Replay {
        qid: inst.qid.clone(),
        reason,
    };
    let mut inst = inst.clone();
    let mut plot = plot.clone();
    match p {
        Perturbation::Substitution { question, .. } => inst.question = question.clone(),
        Perturbation::WordReplacement {
            sentence,
            positions,
            tokens,
        } => {
            if positions.len() != tokens.len() {
                return Err(bad("positions and tokens differ in length".into()));
            }
            let s = plot
                .sentences
                .get_mut(*sentence)
                .ok_or_else(|| bad(format!("sentence {sentence} not in plot")))?;
            for (&pos, tok) in positions.iter().zip(tokens) {
                let slot = s.get_mut(pos).ok_or_else(|| bad(format!("position {pos} beyond sentence")))?;
                *slot = tok.clone();
            }
        }
        Perturbation::Distractor { tokens, .. } => {
            if tokens.is_empty() {
                return Err(bad("empty distractor".into()));
            }
            plot.sentences.push(tokens.clone());
        }
        Perturbation::SentenceRemoval { sentence } => {
            if *sentence >= plot.sentences.len() || plot.sentences.len() < 2 {
                return Err(bad(format!("cannot remove sentence {sentence}")));
            }
            plot.sentences.remove(*sentence);
            inst.evidence_sentences = inst
                .evidence_sentences
                .iter()
                .filter(|&&e| e != *sentence)
                .map(|&e| if e > *sentence { e - 1 } else { e })
                .collect();
        }
        Perturbation::Skipped { .. } => {}
    }
    Ok((inst, plot))
}

pub(crate) fn gold_of(inst: &QAInstance) -> Result<usize> {
    inst.correct_index
        .ok_or_else(|| Error::Contract(format!("attack on {} needs a gold answer", inst.qid)))
}

/// Gold probability and correctness of `params` on an instance.
pub(crate) fn score(params: &ModelParams, inst: &QAInstance, plot: &Plot, table: &EmbeddingTable) -> Result<(f64, bool, usize)> {
    let gold = gold_of(inst)?;
    let probs = predict_probabilities(params, &encode_instance(inst, plot, table))?;
    let selected = argmax(&probs);
    Ok((probs[gold], selected == gold, selected))
}

/// Re-evaluates a recorded perturbation against `params`, which need not
/// be the model it was optimized for.
pub fn replay(
    outcome: &AttackOutcome,
    dataset: &Dataset,
    table: &EmbeddingTable,
    params: &ModelParams,
    model_id: &str,
) -> Result<AttackOutcome> {
    if outcome.version != OUTCOME_VERSION {
        return Err(Error::Replay {
            qid: outcome.qid.clone(),
            reason: format!("outcome schema version {} unsupported", outcome.version),
        });
    }
    let inst = find_instance(dataset, &outcome.qid)?;
    let plot = dataset.plot_for(inst)?;
    let (pre_prob_gold, pre_correct, _) = score(params, inst, plot, table)?;
    let (inst2, plot2) = apply_perturbation(inst, plot, &outcome.perturbation)?;
    let (post_prob_gold, post_correct, post_selected) = score(params, &inst2, &plot2, table)?;
    Ok(AttackOutcome {
        version: OUTCOME_VERSION,
        qid: outcome.qid.clone(),
        attack: outcome.attack,
        model_id: model_id.to_owned(),
        perturbation: outcome.perturbation.clone(),
        gold: gold_of(inst)?,
        pre_prob_gold,
        post_prob_gold,
        pre_correct,
        post_correct,
        post_selected,
    })
}

pub(crate) fn find_instance<'a>(dataset: &'a Dataset, qid: &str) -> Result<&'a QAInstance> {
    dataset
        .train
        .iter()
        .chain(&dataset.val)
        .chain(&dataset.test)
        .find(|q| q.qid == qid)
        .ok_or_else(|| Error::Replay {
            qid: qid.to_owned(),
            reason: "question not in dataset".into(),
        })
}

/// Post-attack accuracy of each model on outcomes optimized against other
/// models, averaged over every (outcome set, model) pair.
pub fn transfer_eval(
    outcome_sets: &[Vec<AttackOutcome>],
    models: &[(String, &ModelParams)],
    dataset: &Dataset,
    table: &EmbeddingTable,
) -> Result<f64> {
    use rayon::prelude::*;
    let mut total = 0.0;
    let mut pairs = 0usize;
    for outcomes in outcome_sets {
        if outcomes.is_empty() {
            return Err(Error::Contract("empty outcome set".into()));
        }
        for (id, params) in models {
            let replayed: Vec<AttackOutcome> = outcomes
                .par_iter()
                .map(|o| replay(o, dataset, table, params, id))
                .collect::<Result<_>>()?;
            total += post_accuracy(&replayed);
            pairs += 1;
        }
    }
    if pairs == 0 {
        return Err(Error::Contract("transfer evaluation needs outcomes and models".into()));
    }
    Ok(total / pairs as f64)
}

pub fn pre_accuracy(outcomes: &[AttackOutcome]) -> f64 {
    crate::train::accuracy(&outcomes.iter().map(|o| o.pre_correct).collect::<Vec<_>>())
}

pub fn post_accuracy(outcomes: &[AttackOutcome]) -> f64 {
    crate::train::accuracy(&outcomes.iter().map(|o| o.post_correct).collect::<Vec<_>>())
}

pub fn write_outcomes(outcomes: &[AttackOutcome], out: &mut impl Write) -> Result<()> {
    for o in outcomes {
        serde_json::to_writer(&mut *out, o)?;
        writeln!(out).map_err(|e| Error::io("<outcomes>", e))?;
    }
    Ok(())
}

pub fn save_outcomes(outcomes: &[AttackOutcome], path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_outcomes(outcomes, &mut buf)?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_outcomes(reader: impl BufRead) -> Result<Vec<AttackOutcome>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::parse(format!("line {}", i + 1), e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::parse(format!("line {}", i + 1), e.to_string()))?);
    }
    Ok(out)
}

pub fn load_outcomes(path: &Path) -> Result<Vec<AttackOutcome>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_outcomes(BufReader::new(file))
}
