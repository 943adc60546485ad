//! Glue between the pipeline stages: hold-out embedding, supervision mining,
//! adapter training and pool preparation.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dialogue::{LabeledTurn, TurnKey};
use crate::embedding::{Embedder, EmbeddingVector, ProjectionAdapter};
use crate::error::{Error, Result};
use crate::experts::{build_pools, expert_labels, sample_pool, ExpertPool, PoolAssignment, PredictionTable, Roster};
use crate::rng::substream_seed;
use crate::supervision::{
    merge_pairs, mine_expert_pairs, mine_task_pairs, train_adapter, LabeledEmbedding, PairSet, TrainConfig,
    TrainedAdapter,
};

/// Which pairs the adapter is trained on.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SupervisionKind {
    #[serde(rename = "none")]
    None,
    #[serde(rename = "task")]
    Task,
    #[serde(rename = "expert")]
    Expert,
    #[default]
    #[serde(rename = "task+expert")]
    TaskExpert,
}

impl SupervisionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SupervisionKind::None => "none",
            SupervisionKind::Task => "task",
            SupervisionKind::Expert => "expert",
            SupervisionKind::TaskExpert => "task+expert",
        }
    }
}

impl fmt::Display for SupervisionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SupervisionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(SupervisionKind::None),
            "task" => Ok(SupervisionKind::Task),
            "expert" => Ok(SupervisionKind::Expert),
            "task+expert" => Ok(SupervisionKind::TaskExpert),
            other => Err(Error::Config(format!("unknown supervision kind `{other}`"))),
        }
    }
}

/// Base embeddings of the given turns, keyed by turn key.
pub fn embed_turns(embedder: &Embedder, turns: &[LabeledTurn]) -> Result<HashMap<TurnKey, EmbeddingVector>> {
    turns
        .par_iter()
        .map(|t| Ok((t.key(), embedder.embed(&t.triplet)?)))
        .collect()
}

/// Pairs for the requested supervision. Expert-aware mining labels each
/// hold-out turn with the expert whose prediction scores best against gold.
pub fn mine_supervision(
    kind: SupervisionKind,
    holdout: &[LabeledTurn],
    embeddings: &HashMap<TurnKey, EmbeddingVector>,
    predictions: &PredictionTable,
    roster: &Roster,
    l: usize,
) -> Result<PairSet> {
    let task = || mine_task_pairs(holdout, l);
    let expert = || -> Result<PairSet> {
        let labels = expert_labels(holdout, predictions, roster.ids())?;
        let samples = holdout
            .iter()
            .zip(labels)
            .map(|(t, label)| {
                let key = t.key();
                let embedding = embeddings
                    .get(&key)
                    .cloned()
                    .ok_or_else(|| Error::MissingEmbedding(key.to_string()))?;
                Ok(LabeledEmbedding { key, label, embedding })
            })
            .collect::<Result<Vec<_>>>()?;
        mine_expert_pairs(&samples, l)
    };
    Ok(match kind {
        SupervisionKind::None => PairSet::new(),
        SupervisionKind::Task => task(),
        SupervisionKind::Expert => expert()?,
        SupervisionKind::TaskExpert => merge_pairs(&task(), &expert()?),
    })
}

/// Trains the adapter on `pairs`; no supervision yields the identity.
pub fn fit_adapter(
    kind: SupervisionKind,
    pairs: &PairSet,
    embeddings: &HashMap<TurnKey, EmbeddingVector>,
    dim: usize,
    config: &TrainConfig,
) -> Result<TrainedAdapter> {
    if kind == SupervisionKind::None {
        return Ok(TrainedAdapter {
            adapter: ProjectionAdapter::identity(dim),
            loss_history: Vec::new(),
        });
    }
    train_adapter(pairs, embeddings, dim, config)
}

/// Builds the pools with adapter-projected hold-out vectors and samples each
/// down to `pool_size` using its own seeded stream.
pub fn prepare_pools(
    holdout: &[LabeledTurn],
    roster: &Roster,
    predictions: &PredictionTable,
    embeddings: &HashMap<TurnKey, EmbeddingVector>,
    adapter: &ProjectionAdapter,
    pool_size: usize,
    seed: u64,
) -> Result<PoolAssignment> {
    if pool_size == 0 {
        return Err(Error::Config("pool_size must be at least 1".into()));
    }
    let built = build_pools(holdout, roster.ids(), predictions, |triplet| {
        let key = triplet.key();
        let base = embeddings
            .get(&key)
            .ok_or_else(|| Error::MissingEmbedding(key.to_string()))?;
        adapter.project(base)
    })?;
    let pools: Vec<ExpertPool> = built
        .pools
        .iter()
        .map(|p| sample_pool(p, pool_size, substream_seed(seed, &format!("sampling/{}", p.expert.name))))
        .collect();
    for p in &pools {
        log::info!("pool `{}`: {} entries", p.expert, p.len());
    }
    Ok(PoolAssignment {
        pools,
        excluded: built.excluded,
    })
}
