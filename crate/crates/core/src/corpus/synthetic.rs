//! Template-generated reading-comprehension data for desk-scale runs.
//!
//! Every plot sentence reads `<subject> <verb> <object> in <place> .` with
//! all people and places distinct within a plot, so each question
//! (`where does <subject> <verb> <object> ?` or `who does <subject> <verb> ?`)
//! is answerable from exactly one sentence. Wrong candidates are taken from
//! the other sentences of the same plot first, so a reader that ignores the
//! question cannot beat chance by spotting which candidate occurs in the plot.

use rand::seq::{index, SliceRandom};
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{DatasetFile, EmbeddingTable, MovieRecord, QaRecord, NUM_CANDIDATES};
use crate::error::{Error, Result};
use crate::numeric::{rng_from_seed, Rng};

const FUNCTION_WORDS: &[&str] = &["where", "who", "does", "in", ".", "?"];

const VERBS: &[(&str, &str)] = &[
    ("marry", "marries"),
    ("kill", "kills"),
    ("meet", "meets"),
    ("find", "finds"),
    ("help", "helps"),
    ("rescue", "rescues"),
    ("follow", "follows"),
    ("trust", "trusts"),
    ("warn", "warns"),
    ("betray", "betrays"),
    ("hire", "hires"),
];

/// Embedding-only synonyms placed close to their base word, so that
/// meaning-preserving substitutions stay near the training distribution.
const SYNONYMS: &[(&str, &str)] = &[
    ("marry", "wed"),
    ("marries", "weds"),
    ("kill", "murder"),
    ("kills", "murders"),
    ("meet", "encounter"),
    ("meets", "encounters"),
    ("find", "discover"),
    ("finds", "discovers"),
    ("help", "assist"),
    ("helps", "assists"),
    ("rescue", "save"),
    ("rescues", "saves"),
    ("follow", "pursue"),
    ("follows", "pursues"),
    ("trust", "believe"),
    ("warn", "alert"),
    ("betray", "deceive"),
    ("hire", "employ"),
    ("friend", "buddy"),
    ("tries", "attempts"),
    ("wants", "wishes"),
    ("begins", "starts"),
    ("after", "following"),
    ("leaves", "departs"),
    ("to", "to"),
];

const SYNONYM_NOISE: f64 = 0.1;

const SYLLABLES: &[&str] = &[
    "ba", "ko", "ri", "sa", "mel", "do", "tu", "fi", "ga", "lon", "ve", "zu", "ar", "en", "ol", "is",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_movies: usize,
    pub questions_per_movie: usize,
    pub sentences_per_plot: usize,
    pub vocab_size: usize,
    pub dim: usize,
    pub seed: u64,
    pub val_fraction: f64,
    pub test_fraction: f64,
}

impl Default for SyntheticConfig {
    /// 400 train / 100 validation movies with five questions each:
    /// 2,000 training and 500 validation questions.
    fn default() -> Self {
        SyntheticConfig {
            n_movies: 500,
            questions_per_movie: 5,
            sentences_per_plot: 5,
            vocab_size: 120,
            dim: 16,
            seed: 7,
            val_fraction: 0.2,
            test_fraction: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticData {
    pub file: DatasetFile,
    pub embeddings: EmbeddingTable,
}

fn pseudo_word(i: usize, suffix: &str) -> String {
    let n = SYLLABLES.len();
    let mut w = format!("{}{}", SYLLABLES[i % n], SYLLABLES[(i / n) % n]);
    if i >= n * n {
        w.push_str(&(i / (n * n)).to_string());
    }
    w.push_str(suffix);
    w
}

struct Vocab {
    persons: Vec<String>,
    places: Vec<String>,
}

fn build_vocab(config: &SyntheticConfig) -> Result<Vocab> {
    if config.vocab_size < 50 {
        return Err(Error::Config(format!("vocab_size must be at least 50, got {}", config.vocab_size)));
    }
    let fixed = FUNCTION_WORDS.len() + 2 * VERBS.len();
    let open = config.vocab_size - fixed;
    let n_persons = (open * 3).div_ceil(5);
    let n_places = open - n_persons;
    let n = config.sentences_per_plot;
    if n == 0 {
        return Err(Error::Config("sentences_per_plot must be positive".into()));
    }
    if n_persons < 2 * n + NUM_CANDIDATES - 1 || n_places < n + NUM_CANDIDATES - 1 {
        return Err(Error::Config(format!(
            "vocab_size {} too small for {n} sentences per plot",
            config.vocab_size
        )));
    }
    Ok(Vocab {
        persons: (0..n_persons).map(|i| pseudo_word(i, "")).collect(),
        places: (0..n_places).map(|i| pseudo_word(i, "dor")).collect(),
    })
}

fn gaussian(rng: &mut Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

fn build_embeddings(config: &SyntheticConfig, vocab: &Vocab, rng: &mut Rng) -> Result<EmbeddingTable> {
    let mut table = EmbeddingTable::new(config.dim, config.seed);
    let ordered = FUNCTION_WORDS
        .iter()
        .map(|s| s.to_string())
        .chain(VERBS.iter().flat_map(|(b, t)| [b.to_string(), t.to_string()]))
        .chain(vocab.persons.iter().cloned())
        .chain(vocab.places.iter().cloned());
    for token in ordered {
        table.insert(token, gaussian(rng, config.dim))?;
    }
    for (base, syn) in SYNONYMS {
        if !table.contains(base) {
            table.insert(*base, gaussian(rng, config.dim))?;
        }
        if !table.contains(syn) {
            let noise = gaussian(rng, config.dim);
            let v = table
                .get(base)
                .expect("base inserted above")
                .iter()
                .zip(noise)
                .map(|(b, n)| b + SYNONYM_NOISE * n)
                .collect();
            table.insert(*syn, v)?;
        }
    }
    Ok(table)
}

fn sample_distinct<'a>(rng: &mut Rng, pool: &'a [String], amount: usize) -> Vec<&'a String> {
    index::sample(rng, pool.len(), amount).into_iter().map(|i| &pool[i]).collect()
}

struct Fact<'a> {
    subject: &'a String,
    verb: (&'static str, &'static str),
    object: &'a String,
    place: &'a String,
}

/// Wrong candidates: entities from other sentences first, then fresh ones.
fn distractors<'a>(
    rng: &mut Rng,
    from_plot: Vec<&'a String>,
    category: &'a [String],
    exclude: &[&String],
) -> Vec<&'a String> {
    let mut picked = from_plot;
    picked.shuffle(rng);
    picked.truncate(NUM_CANDIDATES - 1);
    let mut fresh: Vec<&String> = category
        .iter()
        .filter(|c| !picked.contains(c) && !exclude.contains(c))
        .collect();
    fresh.shuffle(rng);
    picked.extend(fresh.into_iter().take(NUM_CANDIDATES - 1 - picked.len()));
    picked
}

pub fn gen_synthetic(config: &SyntheticConfig) -> Result<SyntheticData> {
    let vocab = build_vocab(config)?;
    if config.dim == 0 {
        return Err(Error::Config("dim must be positive".into()));
    }
    if !(0.0..=1.0).contains(&(config.val_fraction + config.test_fraction)) {
        return Err(Error::Config("val_fraction + test_fraction must lie in [0, 1]".into()));
    }
    let mut rng = rng_from_seed(config.seed);
    let embeddings = build_embeddings(config, &vocab, &mut rng)?;

    let n_val = (config.n_movies as f64 * config.val_fraction).round() as usize;
    let n_test = (config.n_movies as f64 * config.test_fraction).round() as usize;
    let n_train = config.n_movies.saturating_sub(n_val + n_test);
    let n = config.sentences_per_plot;

    let mut file = DatasetFile {
        movies: Vec::with_capacity(config.n_movies),
        qa: Vec::new(),
    };
    let mut counters = [0usize; 3];
    for m in 0..config.n_movies {
        let (split, slot) = if m < n_train {
            ("train", 0)
        } else if m < n_train + n_val {
            ("val", 1)
        } else {
            ("test", 2)
        };
        let movie_id = format!("m{m:05}");
        let people = sample_distinct(&mut rng, &vocab.persons, 2 * n);
        let places = sample_distinct(&mut rng, &vocab.places, n);
        let facts: Vec<Fact> = (0..n)
            .map(|i| Fact {
                subject: people[2 * i],
                verb: VERBS[rng.random_range(0..VERBS.len())],
                object: people[2 * i + 1],
                place: places[i],
            })
            .collect();
        let plot = facts
            .iter()
            .map(|f| format!("{} {} {} in {} .", f.subject, f.verb.1, f.object, f.place))
            .collect();
        file.movies.push(MovieRecord {
            id: movie_id.clone(),
            plot,
        });

        for _ in 0..config.questions_per_movie {
            let i = rng.random_range(0..n);
            let fact = &facts[i];
            let (question, answer, wrong) = if rng.random_bool(0.5) {
                let others = facts.iter().enumerate().filter(|&(k, _)| k != i).map(|(_, f)| f.place).collect();
                let wrong = distractors(&mut rng, others, &vocab.places, &places);
                (
                    format!("where does {} {} {} ?", fact.subject, fact.verb.0, fact.object),
                    fact.place,
                    wrong,
                )
            } else {
                let others = facts
                    .iter()
                    .enumerate()
                    .filter(|&(k, _)| k != i)
                    .flat_map(|(_, f)| [f.subject, f.object])
                    .collect();
                let wrong = distractors(&mut rng, others, &vocab.persons, &people);
                (format!("who does {} {} ?", fact.subject, fact.verb.0), fact.object, wrong)
            };
            let gold = rng.random_range(0..NUM_CANDIDATES);
            let mut answers: Vec<String> = wrong.into_iter().cloned().collect();
            answers.insert(gold, answer.clone());
            file.qa.push(QaRecord {
                qid: format!("{split}:{}", counters[slot]),
                movie_id: movie_id.clone(),
                question,
                answers,
                correct_index: Some(gold),
                plot_sentences: vec![i],
            });
            counters[slot] += 1;
        }
    }
    Ok(SyntheticData { file, embeddings })
}
