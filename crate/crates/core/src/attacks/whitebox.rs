use rand::Rng as _;

use super::outcome::{gold_of, score};
use super::{AttackKind, AttackOutcome, AttackTarget, Perturbation, OUTCOME_VERSION};
use crate::corpus::{encode_instance, QAInstance};
use crate::error::{Error, Result};
use crate::model::{forward, Conditioning};
use crate::numeric::{derive_seed, rng_from_seed};

/// Word positions sorted by decreasing importance, lowest index first on ties.
pub fn rank_positions(importance: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..importance.len()).collect();
    idx.sort_by(|&a, &b| importance[b].total_cmp(&importance[a]).then(a.cmp(&b)));
    idx
}

/// Replaces the `k` most important words of the most relevant sentence
/// (both relative to the gold answer) with random vocabulary words.
///
/// Replacement tokens are drawn in rank order from a per-question stream,
/// so the perturbation for `k` extends the one for `k - 1`.
pub fn whitebox_word_attack(
    target: &AttackTarget,
    inst: &QAInstance,
    k: usize,
    vocabulary: &[String],
    seed: u64,
) -> Result<AttackOutcome> {
    if vocabulary.is_empty() {
        return Err(Error::Config("white-box attack needs a non-empty vocabulary".into()));
    }
    let gold = gold_of(inst)?;
    let plot = target.plot(inst)?;
    let trace = forward(target.params, &encode_instance(inst, plot, target.table), Conditioning::Answer(gold))?;
    let pre_prob_gold = trace.probabilities[gold];
    let pre_correct = trace.selected == gold;
    let sentence = trace.most_relevant_sentence(gold);
    let ranked = rank_positions(&trace.word_importance(sentence, gold));
    let mut rng = rng_from_seed(derive_seed(seed, &inst.qid));
    let positions: Vec<usize> = ranked.into_iter().take(k).collect();
    let tokens: Vec<String> = positions
        .iter()
        .map(|_| vocabulary[rng.random_range(0..vocabulary.len())].clone())
        .collect();
    let perturbation = Perturbation::WordReplacement {
        sentence,
        positions,
        tokens,
    };
    let (post_prob_gold, post_correct, post_selected) = if k == 0 {
        (pre_prob_gold, pre_correct, trace.selected)
    } else {
        let (inst2, plot2) = super::apply_perturbation(inst, plot, &perturbation)?;
        score(target.params, &inst2, &plot2, target.table)?
    };
    Ok(AttackOutcome {
        version: OUTCOME_VERSION,
        qid: inst.qid.clone(),
        attack: AttackKind::Wordwb,
        model_id: target.model_id.to_owned(),
        perturbation,
        gold,
        pre_prob_gold,
        post_prob_gold,
        pre_correct,
        post_correct,
        post_selected,
    })
}
