use super::outcome::{gold_of, score};
use super::{AttackKind, AttackOutcome, AttackTarget, Perturbation, OUTCOME_VERSION};
use crate::corpus::{encode_instance, QAInstance};
use crate::error::Result;
use crate::model::{forward, Conditioning};

/// Drops the sentence with the highest relevance relative to the gold
/// answer. Single-sentence plots are skipped.
pub fn sentence_removal_attack(target: &AttackTarget, inst: &QAInstance) -> Result<AttackOutcome> {
    let gold = gold_of(inst)?;
    let plot = target.plot(inst)?;
    let trace = forward(target.params, &encode_instance(inst, plot, target.table), Conditioning::Answer(gold))?;
    let pre_prob_gold = trace.probabilities[gold];
    let pre_correct = trace.selected == gold;
    let (perturbation, post) = if plot.sentences.len() < 2 {
        let skipped = Perturbation::Skipped {
            reason: "plot has a single sentence".into(),
        };
        (skipped, (pre_prob_gold, pre_correct, trace.selected))
    } else {
        let removal = Perturbation::SentenceRemoval {
            sentence: trace.most_relevant_sentence(gold),
        };
        let (inst2, plot2) = super::apply_perturbation(inst, plot, &removal)?;
        let post = score(target.params, &inst2, &plot2, target.table)?;
        (removal, post)
    };
    Ok(AttackOutcome {
        version: OUTCOME_VERSION,
        qid: inst.qid.clone(),
        attack: AttackKind::Sentrm,
        model_id: target.model_id.to_owned(),
        perturbation,
        gold,
        pre_prob_gold,
        post_prob_gold: post.0,
        pre_correct,
        post_correct: post.1,
        post_selected: post.2,
    })
}
