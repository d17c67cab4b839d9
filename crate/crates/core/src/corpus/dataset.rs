use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tokenize;
use crate::error::{Error, Result};

pub const NUM_CANDIDATES: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    /// Split encoded as the qid prefix before the first `:`.
    pub fn from_qid(qid: &str) -> Option<Split> {
        match qid.split(':').next()? {
            "train" => Some(Split::Train),
            "val" => Some(Split::Val),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Split::from_qid(s).ok_or_else(|| Error::Config(format!("unknown split {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plot {
    pub movie_id: String,
    pub sentences: Vec<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QAInstance {
    pub qid: String,
    pub movie_id: String,
    pub question: Vec<String>,
    pub candidates: Vec<Vec<String>>,
    pub correct_index: Option<usize>,
    pub evidence_sentences: Vec<usize>,
}

/// On-disk movie record: raw sentence strings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MovieRecord {
    pub id: String,
    pub plot: Vec<String>,
}

/// On-disk question record: raw strings, tokenized at load.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QaRecord {
    pub qid: String,
    pub movie_id: String,
    pub question: String,
    pub answers: Vec<String>,
    pub correct_index: Option<usize>,
    #[serde(default)]
    pub plot_sentences: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetFile {
    pub movies: Vec<MovieRecord>,
    pub qa: Vec<QaRecord>,
}

impl DatasetFile {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }
}

/// Parsed dataset: plots keyed by movie id plus per-split questions in file order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub plots: BTreeMap<String, Plot>,
    pub train: Vec<QAInstance>,
    pub val: Vec<QAInstance>,
    pub test: Vec<QAInstance>,
}

impl Dataset {
    pub fn split(&self, split: Split) -> &[QAInstance] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn plot(&self, movie_id: &str) -> Option<&Plot> {
        self.plots.get(movie_id)
    }

    /// Plot for an instance; instances are validated at load so this only
    /// fails for hand-built datasets.
    pub fn plot_for(&self, inst: &QAInstance) -> Result<&Plot> {
        self.plot(&inst.movie_id).ok_or_else(|| Error::Referential {
            qid: inst.qid.clone(),
            movie_id: inst.movie_id.clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Serializes back to the on-disk schema, joining tokens with spaces.
    pub fn to_file(&self) -> DatasetFile {
        let movies = self
            .plots
            .values()
            .map(|p| MovieRecord {
                id: p.movie_id.clone(),
                plot: p.sentences.iter().map(|s| s.join(" ")).collect(),
            })
            .collect();
        let qa = self
            .train
            .iter()
            .chain(&self.val)
            .chain(&self.test)
            .map(|q| QaRecord {
                qid: q.qid.clone(),
                movie_id: q.movie_id.clone(),
                question: q.question.join(" "),
                answers: q.candidates.iter().map(|a| a.join(" ")).collect(),
                correct_index: q.correct_index,
                plot_sentences: q.evidence_sentences.clone(),
            })
            .collect();
        DatasetFile { movies, qa }
    }
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&text)
}

pub fn parse_dataset(text: &str) -> Result<Dataset> {
    let file: DatasetFile =
        serde_json::from_str(text).map_err(|e| Error::parse(format!("line {}", e.line()), e.to_string()))?;
    dataset_from_file(&file)
}

pub fn dataset_from_file(file: &DatasetFile) -> Result<Dataset> {
    let mut ds = Dataset::default();
    for movie in &file.movies {
        if movie.plot.is_empty() {
            return Err(Error::parse(format!("movie {}", movie.id), "plot has no sentences"));
        }
        let mut sentences = Vec::with_capacity(movie.plot.len());
        for (i, s) in movie.plot.iter().enumerate() {
            let toks = tokenize(s);
            if toks.is_empty() {
                return Err(Error::parse(format!("movie {} sentence {i}", movie.id), "empty sentence"));
            }
            sentences.push(toks);
        }
        let plot = Plot {
            movie_id: movie.id.clone(),
            sentences,
        };
        if ds.plots.insert(movie.id.clone(), plot).is_some() {
            return Err(Error::parse(format!("movie {}", movie.id), "duplicate movie id"));
        }
    }

    for rec in &file.qa {
        let loc = || format!("qid {}", rec.qid);
        let split = Split::from_qid(&rec.qid)
            .ok_or_else(|| Error::parse(loc(), "qid must start with train:, val: or test:"))?;
        if rec.answers.len() != NUM_CANDIDATES {
            return Err(Error::parse(
                loc(),
                format!("expected {NUM_CANDIDATES} answers, found {}", rec.answers.len()),
            ));
        }
        match (split, rec.correct_index) {
            (_, Some(c)) if c >= NUM_CANDIDATES => {
                return Err(Error::parse(loc(), format!("correct_index {c} out of range")));
            }
            (Split::Train | Split::Val, None) => {
                return Err(Error::parse(loc(), "train/val questions need a correct_index"));
            }
            _ => {}
        }
        let plot = ds.plots.get(&rec.movie_id).ok_or_else(|| Error::Referential {
            qid: rec.qid.clone(),
            movie_id: rec.movie_id.clone(),
        })?;
        if let Some(&bad) = rec.plot_sentences.iter().find(|&&i| i >= plot.sentences.len()) {
            return Err(Error::parse(
                loc(),
                format!("evidence sentence {bad} beyond plot length {}", plot.sentences.len()),
            ));
        }
        let inst = QAInstance {
            qid: rec.qid.clone(),
            movie_id: rec.movie_id.clone(),
            question: tokenize(&rec.question),
            candidates: rec.answers.iter().map(|a| tokenize(a)).collect(),
            correct_index: rec.correct_index,
            evidence_sentences: rec.plot_sentences.clone(),
        };
        match split {
            Split::Train => ds.train.push(inst),
            Split::Val => ds.val.push(inst),
            Split::Test => ds.test.push(inst),
        }
    }
    Ok(ds)
}
