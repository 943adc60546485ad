use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{judge_correct, ExpertId, PredictionTable, Roster};
use crate::dialogue::{LabeledTurn, Triplet, TurnKey};
use crate::embedding::{serialize_triplet, EmbeddingVector};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct PoolEntry {
    pub key: TurnKey,
    pub text: String,
    pub vector: EmbeddingVector,
}

/// Exemplar turns an expert is known to predict exactly right.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpertPool {
    pub expert: ExpertId,
    pub entries: Vec<PoolEntry>,
}

impl ExpertPool {
    pub fn empty(expert: ExpertId) -> Self {
        Self {
            expert,
            entries: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PoolAssignment {
    /// One pool per roster expert, in priority order.
    pub pools: Vec<ExpertPool>,
    /// Turns no expert predicted correctly.
    pub excluded: Vec<TurnKey>,
}

/// Places each hold-out turn in the pool of the lowest-rank expert that
/// predicted it exactly; turns nobody got right are excluded.
pub fn build_pools<F>(
    holdout: &[LabeledTurn],
    roster: &[ExpertId],
    predictions: &PredictionTable,
    embed: F,
) -> Result<PoolAssignment>
where
    F: Fn(&Triplet) -> Result<EmbeddingVector>,
{
    let mut ordered = roster.to_vec();
    ordered.sort();
    let mut pools: Vec<ExpertPool> = ordered.iter().cloned().map(ExpertPool::empty).collect();
    let mut excluded = Vec::new();
    let mut dim = None;

    for turn in holdout {
        let key = turn.key();
        let preds = predictions.for_turn(&key, &ordered)?;
        let winner = preds
            .iter()
            .position(|(_, tlb)| judge_correct(tlb, &turn.gold_tlb));
        let Some(winner) = winner else {
            excluded.push(key);
            continue;
        };
        let vector = embed(&turn.triplet)?;
        match dim {
            None => dim = Some(vector.dim()),
            Some(d) if d != vector.dim() => {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: vector.dim(),
                })
            }
            _ => {}
        }
        pools[winner].entries.push(PoolEntry {
            key,
            text: serialize_triplet(&turn.triplet),
            vector,
        });
    }
    Ok(PoolAssignment { pools, excluded })
}

/// Uniform sample of `min(n, len)` entries without replacement, ordered by
/// turn key.
pub fn sample_pool(pool: &ExpertPool, n: usize, seed: u64) -> ExpertPool {
    let mut entries: Vec<PoolEntry> = if n >= pool.len() {
        pool.entries.clone()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rand::seq::index::sample(&mut rng, pool.len(), n)
            .into_iter()
            .map(|i| pool.entries[i].clone())
            .collect()
    };
    entries.sort_by(|a, b| a.key.cmp(&b.key));
    ExpertPool {
        expert: pool.expert.clone(),
        entries,
    }
}

#[derive(Serialize, Deserialize)]
struct PoolFileEntry {
    key: String,
    text: String,
    vector: Vec<f32>,
}

#[derive(Serialize, Deserialize)]
struct PoolFile {
    expert: String,
    entries: Vec<PoolFileEntry>,
}

pub fn write_pool<W: Write>(writer: W, pool: &ExpertPool) -> Result<()> {
    let file = PoolFile {
        expert: pool.expert.name.clone(),
        entries: pool
            .entries
            .iter()
            .map(|e| PoolFileEntry {
                key: e.key.to_string(),
                text: e.text.clone(),
                vector: e.vector.components().to_vec(),
            })
            .collect(),
    };
    serde_json::to_writer(writer, &file)?;
    Ok(())
}

/// Reads a pool file, resolving the expert name against `roster`.
/// Vectors are renormalized on load.
pub fn read_pool<R: Read>(reader: R, roster: &Roster) -> Result<ExpertPool> {
    let file: PoolFile = serde_json::from_reader(reader)?;
    let expert = roster.get(&file.expert)?.clone();
    let mut entries = Vec::with_capacity(file.entries.len());
    for e in file.entries {
        if let Some(first) = entries.first() {
            let first: &PoolEntry = first;
            if first.vector.dim() != e.vector.len() {
                return Err(Error::StoreDimension {
                    key: e.key,
                    expected: first.vector.dim(),
                    actual: e.vector.len(),
                });
            }
        }
        entries.push(PoolEntry {
            key: TurnKey::from(e.key.as_str()),
            text: e.text,
            vector: EmbeddingVector::normalized(e.vector),
        });
    }
    Ok(ExpertPool { expert, entries })
}
