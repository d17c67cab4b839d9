//! Config file handling and the data/model loading shared by subcommands.

use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use hcar::corpus::{load_dataset, load_embeddings, Dataset, EmbeddingTable, SyntheticConfig};
use hcar::model::{load_checkpoint, Aggregator, ModelConfig, ModelParams};
use hcar::numeric::Precision;
use hcar::train::TrainConfig;
use serde::Deserialize;
use serde_json::{Map, Value};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    #[default]
    Toy,
    Paper,
}

/// JSON config file. Each section holds overrides applied on top of the
/// defaults for the chosen scale, so partial sections are fine.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub scale: Scale,
    pub model: Map<String, Value>,
    pub train: Map<String, Value>,
    pub synthetic: Map<String, Value>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(FileConfig::default());
        };
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// The aggregator from the flag, else the model section, else CNN.
    pub fn aggregator(&self, flag: Option<Aggregator>) -> Result<Aggregator> {
        if let Some(a) = flag {
            return Ok(a);
        }
        match self.model.get("aggregator") {
            Some(v) => Ok(serde_json::from_value(v.clone()).context("model.aggregator")?),
            None => Ok(Aggregator::Cnn),
        }
    }

    pub fn model_config(
        &self,
        aggregator: Aggregator,
        embedding_dim: usize,
        seed: u64,
        precision: Option<Precision>,
    ) -> Result<ModelConfig> {
        let base = match self.scale {
            Scale::Toy => ModelConfig::toy(aggregator, embedding_dim, seed),
            Scale::Paper => ModelConfig::paper(aggregator, embedding_dim, seed),
        };
        let mut cfg: ModelConfig = overlay(&base, &self.model).context("model section")?;
        if cfg.embedding_dim != embedding_dim {
            bail!(
                "model.embedding_dim is {} but the embeddings have dimension {embedding_dim}",
                cfg.embedding_dim
            );
        }
        cfg.aggregator = aggregator;
        if let Some(p) = precision {
            cfg.precision = p;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn train_config(&self, aggregator: Aggregator) -> Result<TrainConfig> {
        let base = match self.scale {
            Scale::Toy => TrainConfig::toy(aggregator),
            Scale::Paper => TrainConfig::for_aggregator(aggregator),
        };
        let cfg: TrainConfig = overlay(&base, &self.train).context("train section")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn synthetic_config(&self) -> Result<SyntheticConfig> {
        overlay(&SyntheticConfig::default(), &self.synthetic).context("synthetic section")
    }
}

fn overlay<T: serde::Serialize + serde::de::DeserializeOwned>(base: &T, overrides: &Map<String, Value>) -> Result<T> {
    let mut value = serde_json::to_value(base)?;
    let obj = value.as_object_mut().expect("config structs serialize to objects");
    for (k, v) in overrides {
        if !obj.contains_key(k) {
            bail!("unknown key {k:?}");
        }
        obj.insert(k.clone(), v.clone());
    }
    Ok(serde_json::from_value(value)?)
}

/// Dataset plus embeddings. The embedding file defaults to the dataset
/// path with a `.vec` extension, which is where `synth` writes it.
pub struct Data {
    pub dataset: Dataset,
    pub table: EmbeddingTable,
}

pub fn embeddings_path(data: &Path, explicit: Option<&Path>) -> PathBuf {
    explicit.map_or_else(|| data.with_extension("vec"), Path::to_path_buf)
}

/// Dimension from the first non-empty line of a whitespace-separated vector file.
fn embedding_dim(path: &Path) -> Result<usize> {
    let file = fs::File::open(path).with_context(|| format!("opening embeddings {}", path.display()))?;
    for line in BufReader::new(file).lines() {
        let line = line.with_context(|| format!("reading {}", path.display()))?;
        let fields = line.split_whitespace().count();
        if fields > 0 {
            if fields < 2 {
                bail!("{}: first line has a token but no vector", path.display());
            }
            return Ok(fields - 1);
        }
    }
    bail!("{}: no embeddings", path.display())
}

pub fn load_data(data: Option<&Path>, embeddings: Option<&Path>) -> Result<Data> {
    let Some(data) = data else {
        bail!("--data <file> is required for this command");
    };
    let dataset = load_dataset(data).with_context(|| format!("loading dataset {}", data.display()))?;
    let emb = embeddings_path(data, embeddings);
    let table = load_embeddings(&emb, embedding_dim(&emb)?)
        .with_context(|| format!("loading embeddings {}", emb.display()))?;
    Ok(Data { dataset, table })
}

/// Loads a checkpoint and checks it was trained against these embeddings.
pub fn load_model(path: &Path, table: &EmbeddingTable) -> Result<ModelParams> {
    let params = load_checkpoint(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    if params.embedding_fingerprint != table.fingerprint() {
        bail!(
            "{} was trained with different embeddings (fingerprint {:016x}, loaded {:016x})",
            path.display(),
            params.embedding_fingerprint,
            table.fingerprint()
        );
    }
    Ok(params)
}
