use crate::corpus::{encode_instance, Dataset, EmbeddingTable, EncodedInstance, QAInstance, Split};
use crate::error::Result;

/// Encoded instances of one split, ready for repeated evaluation.
#[derive(Clone, Debug, Default)]
pub struct Examples {
    pub qids: Vec<String>,
    pub gold: Vec<Option<usize>>,
    pub inputs: Vec<EncodedInstance>,
}

impl Examples {
    pub fn from_instances<'a>(
        dataset: &Dataset,
        instances: impl IntoIterator<Item = &'a QAInstance>,
        table: &EmbeddingTable,
    ) -> Result<Self> {
        let mut out = Examples::default();
        for inst in instances {
            let plot = dataset.plot_for(inst)?;
            out.qids.push(inst.qid.clone());
            out.gold.push(inst.correct_index);
            out.inputs.push(encode_instance(inst, plot, table));
        }
        Ok(out)
    }

    pub fn from_split(dataset: &Dataset, split: Split, table: &EmbeddingTable) -> Result<Self> {
        Self::from_instances(dataset, dataset.split(split), table)
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    /// The first `n` examples.
    pub fn truncated(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Examples {
            qids: self.qids[..n].to_vec(),
            gold: self.gold[..n].to_vec(),
            inputs: self.inputs[..n].to_vec(),
        }
    }
}
