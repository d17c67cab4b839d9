use std::collections::{HashMap, HashSet};

use rand::seq::{index, IndexedRandom};

use super::outcome::{gold_of, score};
use super::{AttackKind, AttackOutcome, AttackTarget, Perturbation, OUTCOME_VERSION};
use crate::corpus::{encode_instance, is_punctuation, Dataset, EmbeddingTable, QAInstance};
use crate::error::{Error, Result};
use crate::model::WordLevelCache;
use crate::numeric::{derive_seed, rng_from_seed, Rng};

/// Length of the appended distractor sentence.
pub const DISTRACTOR_LEN: usize = 10;
const ADDC_POOL: usize = 20;
const ADDQ_COMMON: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AddMode {
    AddC,
    AddQ,
    AddQA,
}

impl AddMode {
    pub fn kind(self) -> AttackKind {
        match self {
            AddMode::AddC => AttackKind::AddC,
            AddMode::AddQ => AttackKind::AddQ,
            AddMode::AddQA => AttackKind::AddQA,
        }
    }
}

impl std::str::FromStr for AddMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "addc" => Ok(AddMode::AddC),
            "addq" => Ok(AddMode::AddQ),
            "addqa" => Ok(AddMode::AddQA),
            other => Err(Error::Config(format!("unknown mode {other:?}, expected addc, addq or addqa"))),
        }
    }
}

/// The `n` most frequent non-punctuation tokens with embeddings over the
/// training questions, their candidates and their plots (each plot once).
/// Equal counts are ordered alphabetically.
pub fn common_words(dataset: &Dataset, table: &EmbeddingTable, n: usize) -> Vec<String> {
    fn add<'a>(toks: &'a [String], counts: &mut HashMap<&'a str, usize>) {
        for t in toks {
            *counts.entry(t.as_str()).or_default() += 1;
        }
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    let mut seen_movies = HashSet::new();
    for inst in &dataset.train {
        add(&inst.question, &mut counts);
        for c in &inst.candidates {
            add(c, &mut counts);
        }
        if seen_movies.insert(inst.movie_id.as_str()) {
            if let Some(plot) = dataset.plot(&inst.movie_id) {
                for s in &plot.sentences {
                    add(s, &mut counts);
                }
            }
        }
    }
    let mut words: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|(w, _)| !is_punctuation(w) && table.contains(w))
        .collect();
    words.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    words.into_iter().take(n).map(|(w, _)| w.to_owned()).collect()
}

/// Initial distractor and per-position candidate lists.
#[derive(Clone, Debug, PartialEq)]
pub struct WordPool {
    pub initial: Vec<String>,
    pub positions: Vec<Vec<String>>,
}

fn push_unique(pool: &mut Vec<String>, toks: &[String], table: &EmbeddingTable) {
    for t in toks {
        if !is_punctuation(t) && table.contains(t) && !pool.contains(t) {
            pool.push(t.clone());
        }
    }
}

/// Draws the initial sentence and the per-position pools. AddQ and AddQA
/// consume the generator identically, so for one seed the AddQA pools
/// extend the AddQ pools.
pub fn build_pools(
    inst: &QAInstance,
    mode: AddMode,
    common: &[String],
    table: &EmbeddingTable,
    rng: &mut Rng,
) -> Result<WordPool> {
    if common.is_empty() {
        return Err(Error::Config("common-word list is empty".into()));
    }
    let initial: Vec<String> = (0..DISTRACTOR_LEN)
        .map(|_| common.choose(rng).expect("non-empty").clone())
        .collect();
    let draw = |n: usize, rng: &mut Rng| -> Vec<String> {
        index::sample(rng, common.len(), n.min(common.len()))
            .into_iter()
            .map(|i| common[i].clone())
            .collect()
    };
    let mut positions = Vec::with_capacity(DISTRACTOR_LEN);
    for _ in 0..DISTRACTOR_LEN {
        let pool = match mode {
            AddMode::AddC => draw(ADDC_POOL, rng),
            AddMode::AddQ | AddMode::AddQA => {
                let mut pool = draw(ADDQ_COMMON, rng);
                push_unique(&mut pool, &inst.question, table);
                if mode == AddMode::AddQA {
                    let gold = inst.correct_index;
                    for (j, c) in inst.candidates.iter().enumerate() {
                        if Some(j) != gold {
                            push_unique(&mut pool, c, table);
                        }
                    }
                }
                pool
            }
        };
        positions.push(pool);
    }
    Ok(WordPool { initial, positions })
}

/// Greedy black-box search for a distractor sentence appended to the plot.
///
/// Each epoch sweeps the positions in order. At a position every pool word
/// is tried and the one giving the lowest gold probability is committed
/// only if it is strictly lower than keeping the current word.
pub fn addany_attack(
    target: &AttackTarget,
    inst: &QAInstance,
    mode: AddMode,
    epochs: usize,
    common: &[String],
    seed: u64,
) -> Result<AttackOutcome> {
    let gold = gold_of(inst)?;
    let plot = target.plot(inst)?;
    let (pre_prob_gold, pre_correct, _) = score(target.params, inst, plot, target.table)?;
    let mut rng = rng_from_seed(derive_seed(seed, &inst.qid));
    let pool = build_pools(inst, mode, common, target.table, &mut rng)?;
    let cache = WordLevelCache::new(target.params, &encode_instance(inst, plot, target.table))?;
    let gold_prob = |tokens: &[String]| -> Result<f64> {
        let probs = cache.probabilities_with(target.params, &target.table.encode_tokens(tokens))?;
        Ok(probs[gold])
    };

    let mut tokens = pool.initial.clone();
    let mut current = gold_prob(&tokens)?;
    let mut trajectory = vec![current];
    for _ in 0..epochs {
        for pos in 0..DISTRACTOR_LEN {
            let mut best: Option<(f64, &String)> = None;
            for cand in &pool.positions[pos] {
                if *cand == tokens[pos] {
                    continue;
                }
                let mut trial = tokens.clone();
                trial[pos] = cand.clone();
                let p = gold_prob(&trial)?;
                if p < best.map_or(current, |b| b.0) {
                    best = Some((p, cand));
                }
            }
            if let Some((p, cand)) = best {
                tokens[pos] = cand.clone();
                current = p;
                trajectory.push(p);
            }
        }
    }
    if let Some(w) = trajectory.windows(2).find(|w| w[1] > w[0]) {
        return Err(Error::Contract(format!(
            "greedy search on {} raised the gold probability from {} to {}",
            inst.qid, w[0], w[1]
        )));
    }

    let perturbation = Perturbation::Distractor { tokens, trajectory };
    let (inst2, plot2) = super::apply_perturbation(inst, plot, &perturbation)?;
    let (post_prob_gold, post_correct, post_selected) = score(target.params, &inst2, &plot2, target.table)?;
    if post_prob_gold != current {
        return Err(Error::Contract(format!(
            "cached and full evaluation disagree on {}: {current} vs {post_prob_gold}",
            inst.qid
        )));
    }
    Ok(AttackOutcome {
        version: OUTCOME_VERSION,
        qid: inst.qid.clone(),
        attack: mode.kind(),
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
