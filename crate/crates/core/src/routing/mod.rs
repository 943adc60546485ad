//! Routers that pick one expert per turn.
//!
//! The retrieval router scores every pool entry by cosine against the query
//! embedding, takes the `k` best (score descending, turn key ascending on
//! ties) and lets them vote. Vote ties go to the lowest priority rank.

mod cascade;
mod classifier;
mod pipeline;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dialogue::{TurnBelief, TurnKey};
use crate::embedding::{cosine, EmbeddingVector};
use crate::error::{Error, Result};
use crate::experts::{judge_correct, ExpertId, ExpertPool};

pub use cascade::{route_cascade, tune_cascade_threshold, CascadeSample};
pub use classifier::{train_classifier_router, ClassifierConfig, LogisticRouter};
pub use pipeline::{
    read_run, run_pipeline, write_run, PipelineConfig, PriorState, Router, RoutedRun, RunSnapshot,
    TurnRecord,
};
pub(crate) use pipeline::index_records;

/// Default neighbour count for the majority vote.
pub const DEFAULT_K: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub key: TurnKey,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoutingDecision {
    pub chosen: ExpertId,
    /// Retrieval only: votes per pool expert, zero counts included.
    pub votes: BTreeMap<ExpertId, usize>,
    /// Retrieval only: the top-k neighbours in rank order.
    pub neighbors: Vec<Neighbor>,
    /// Cascade only: the SLM confidence that was compared to the threshold.
    pub confidence: Option<f64>,
}

impl RoutingDecision {
    pub fn fixed(chosen: ExpertId) -> Self {
        Self {
            chosen,
            votes: BTreeMap::new(),
            neighbors: Vec::new(),
            confidence: None,
        }
    }
}

/// Majority vote over the `k` nearest pool entries.
pub fn route_retrieval(query: &EmbeddingVector, pools: &[ExpertPool], k: usize) -> Result<RoutingDecision> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    let mut scored: Vec<(f64, &TurnKey, &ExpertId)> = Vec::with_capacity(pools.iter().map(ExpertPool::len).sum());
    for pool in pools {
        for entry in &pool.entries {
            scored.push((cosine(query, &entry.vector)?, &entry.key, &pool.expert));
        }
    }
    if scored.is_empty() {
        return Err(Error::EmptyPools);
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)).then_with(|| a.2.cmp(b.2)));
    scored.truncate(k);

    let mut votes: BTreeMap<ExpertId, usize> = pools.iter().map(|p| (p.expert.clone(), 0)).collect();
    for (_, _, expert) in &scored {
        *votes.get_mut(*expert).expect("pool expert") += 1;
    }
    // BTreeMap iterates by ascending rank, so the first maximum wins ties.
    let chosen = votes
        .iter()
        .fold(None::<(&ExpertId, usize)>, |best, (id, &count)| match best {
            Some((_, c)) if c >= count => best,
            _ => Some((id, count)),
        })
        .map(|(id, _)| id.clone())
        .expect("non-empty votes");
    Ok(RoutingDecision {
        chosen,
        votes,
        neighbors: scored
            .into_iter()
            .map(|(score, key, _)| Neighbor { key: key.clone(), score })
            .collect(),
        confidence: None,
    })
}

/// Cheapest exactly-correct expert, or the cheapest expert when none is.
pub fn route_oracle(preds: &[(ExpertId, TurnBelief)], gold: &TurnBelief) -> Result<RoutingDecision> {
    let correct = preds
        .iter()
        .filter(|(_, tlb)| judge_correct(tlb, gold))
        .map(|(id, _)| id)
        .min();
    let chosen = correct
        .or_else(|| preds.iter().map(|(id, _)| id).min())
        .ok_or(Error::Empty("oracle predictions"))?;
    Ok(RoutingDecision::fixed(chosen.clone()))
}
