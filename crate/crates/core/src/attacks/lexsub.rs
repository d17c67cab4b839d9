use super::outcome::{gold_of, score};
use super::{AttackKind, AttackOutcome, AttackTarget, Perturbation, OUTCOME_VERSION};
use crate::corpus::{QAInstance, SubstitutionRule};
use crate::error::Result;

/// Rewrites `tokens` left to right, trying longer patterns before shorter
/// ones (file order within a length). Replaced spans are not rescanned.
pub fn apply_rules(tokens: &[String], rules: &[SubstitutionRule]) -> (Vec<String>, Vec<String>) {
    let mut ordered: Vec<&SubstitutionRule> = rules.iter().collect();
    ordered.sort_by(|a, b| b.pattern.len().cmp(&a.pattern.len()));
    let mut out = Vec::with_capacity(tokens.len());
    let mut applied = Vec::new();
    let mut i = 0;
    while i < tokens.len() {
        match ordered.iter().find(|r| tokens[i..].starts_with(&r.pattern)) {
            Some(rule) => {
                out.extend(rule.replacement.iter().cloned());
                applied.push(rule.to_string());
                i += rule.pattern.len();
            }
            None => {
                out.push(tokens[i].clone());
                i += 1;
            }
        }
    }
    (out, applied)
}

/// Applies the rules to the question only; plots and candidates are untouched.
pub fn lexsub_attack(target: &AttackTarget, inst: &QAInstance, rules: &[SubstitutionRule]) -> Result<AttackOutcome> {
    let plot = target.plot(inst)?;
    let (pre_prob_gold, pre_correct, pre_selected) = score(target.params, inst, plot, target.table)?;
    let (question, applied) = apply_rules(&inst.question, rules);
    let (post_prob_gold, post_correct, post_selected) = if applied.is_empty() {
        (pre_prob_gold, pre_correct, pre_selected)
    } else {
        let perturbed = QAInstance {
            question: question.clone(),
            ..inst.clone()
        };
        score(target.params, &perturbed, plot, target.table)?
    };
    Ok(AttackOutcome {
        version: OUTCOME_VERSION,
        qid: inst.qid.clone(),
        attack: AttackKind::Lexsub,
        model_id: target.model_id.to_owned(),
        perturbation: Perturbation::Substitution { applied, question },
        gold: gold_of(inst)?,
        pre_prob_gold,
        post_prob_gold,
        pre_correct,
        post_correct,
        post_selected,
    })
}

/// Share of outcomes whose question was changed, in percent.
pub fn modified_fraction(outcomes: &[AttackOutcome]) -> f64 {
    let bits: Vec<bool> = outcomes
        .iter()
        .map(|o| matches!(&o.perturbation, Perturbation::Substitution { applied, .. } if !applied.is_empty()))
        .collect();
    crate::train::accuracy(&bits)
}
