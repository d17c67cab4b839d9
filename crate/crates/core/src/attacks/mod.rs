//! Adversarial attacks: black-box lexical substitution, white-box word
//! replacement, greedy distractor sentences, and sentence removal, with
//! replayable outcome records.

mod addany;
mod lexsub;
mod outcome;
mod removal;
mod target;
mod whitebox;

pub use addany::{addany_attack, build_pools, common_words, AddMode, WordPool, DISTRACTOR_LEN};
pub use lexsub::{apply_rules, lexsub_attack, modified_fraction};
pub use outcome::{
    apply_perturbation, load_outcomes, post_accuracy, pre_accuracy, read_outcomes, replay, save_outcomes,
    transfer_eval, write_outcomes, AttackKind, AttackOutcome, Perturbation, OUTCOME_VERSION,
};
pub use removal::sentence_removal_attack;
pub use target::{run_attack, AttackTarget};
pub use whitebox::{rank_positions, whitebox_word_attack};
