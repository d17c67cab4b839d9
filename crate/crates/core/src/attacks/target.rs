use rayon::prelude::*;

use crate::corpus::{Dataset, EmbeddingTable, Plot, QAInstance};
use crate::error::Result;
use crate::model::ModelParams;

use super::AttackOutcome;

/// The model under attack plus the data it reads.
#[derive(Clone, Copy)]
pub struct AttackTarget<'a> {
    pub dataset: &'a Dataset,
    pub table: &'a EmbeddingTable,
    pub params: &'a ModelParams,
    pub model_id: &'a str,
}

impl AttackTarget<'_> {
    pub(crate) fn plot(&self, inst: &QAInstance) -> Result<&Plot> {
        self.dataset.plot_for(inst)
    }
}

/// Runs a per-question attack over `instances` in parallel, keeping input order.
pub fn run_attack<F>(instances: &[QAInstance], attack: F) -> Result<Vec<AttackOutcome>>
where
    F: Fn(&QAInstance) -> Result<AttackOutcome> + Sync + Send,
{
    instances.par_iter().map(attack).collect()
}
