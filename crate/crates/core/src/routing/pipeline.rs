use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{route_cascade, route_oracle, route_retrieval, LogisticRouter, Neighbor, RoutingDecision};
use crate::dialogue::{aggregate_state, triplet_of_turn, Dialogue, DialogueState, TurnBelief, TurnKey};
use crate::embedding::{Embedder, ProjectionAdapter};
use crate::error::{Error, Result};
use crate::experts::{ExpertId, ExpertPool, ExpertPrediction, ExpertSet, Roster};
use crate::metrics::CostTable;

pub enum Router {
    /// Cosine kNN over adapter-projected pool embeddings with majority vote.
    Retrieval {
        embedder: Embedder,
        adapter: ProjectionAdapter,
        pools: Vec<ExpertPool>,
        k: usize,
    },
    /// Logistic regression over base embeddings.
    Classifier {
        embedder: Embedder,
        model: LogisticRouter,
    },
    /// Picks the cheapest correct expert using the corpus gold labels.
    Oracle,
    /// Always queries `slm`; defers to `llm` below the threshold.
    Cascade {
        threshold: f64,
        slm: ExpertId,
        llm: ExpertId,
    },
    Constant(ExpertId),
}

impl Router {
    pub fn kind(&self) -> &'static str {
        match self {
            Router::Retrieval { .. } => "retrieval",
            Router::Classifier { .. } => "classifier",
            Router::Oracle => "oracle",
            Router::Cascade { .. } => "cascade",
            Router::Constant(_) => "constant",
        }
    }

    /// Whether the router itself runs a model on every turn.
    pub fn charges_router_cost(&self) -> bool {
        matches!(self, Router::Retrieval { .. } | Router::Classifier { .. })
    }
}

/// Where the prior state of each test triplet comes from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorState {
    /// The routed system's own accumulated predictions.
    #[default]
    Predicted,
    /// Gold accumulated states (diagnostics).
    Gold,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub prior: PriorState,
    pub seed: u64,
    pub costs: CostTable,
}

/// Settings a routed run was produced with.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunSnapshot {
    pub router: String,
    pub k: Option<usize>,
    pub seed: u64,
    pub pool_sizes: BTreeMap<String, usize>,
    pub threshold: Option<f64>,
    pub prior: PriorState,
    pub costs: CostTable,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TurnRecord {
    pub key: TurnKey,
    pub dialogue_id: String,
    pub turn_id: u32,
    pub decision: RoutingDecision,
    /// Prediction of the chosen expert.
    pub prediction: ExpertPrediction,
    /// Experts whose inference cost this turn incurred.
    pub invoked: Vec<ExpertId>,
    pub router_charged: bool,
    /// Fold of the chosen beliefs of this dialogue up to this turn.
    pub state: DialogueState,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RoutedRun {
    pub records: Vec<TurnRecord>,
    pub snapshot: RunSnapshot,
}

impl RoutedRun {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

fn snapshot(router: &Router, config: &PipelineConfig) -> RunSnapshot {
    let (k, pool_sizes) = match router {
        Router::Retrieval { pools, k, .. } => (
            Some(*k),
            pools.iter().map(|p| (p.expert.name.clone(), p.len())).collect(),
        ),
        _ => (None, BTreeMap::new()),
    };
    RunSnapshot {
        router: router.kind().to_string(),
        k,
        seed: config.seed,
        pool_sizes,
        threshold: match router {
            Router::Cascade { threshold, .. } => Some(*threshold),
            _ => None,
        },
        prior: config.prior,
        costs: config.costs.clone(),
    }
}

fn route_dialogue(
    dialogue: &Dialogue,
    experts: &ExpertSet,
    router: &Router,
    prior: PriorState,
) -> Result<Vec<TurnRecord>> {
    let gold_states = dialogue.gold_states();
    let mut predicted = DialogueState::new();
    let mut records = Vec::with_capacity(dialogue.turns.len());
    for (t, turn) in dialogue.turns.iter().enumerate() {
        let prev = match (prior, t) {
            (_, 0) => DialogueState::new(),
            (PriorState::Predicted, _) => predicted.clone(),
            (PriorState::Gold, _) => gold_states[t - 1].clone(),
        };
        let triplet = triplet_of_turn(dialogue, t, &prev)?;
        let key = triplet.key();
        let call = |id: &ExpertId| -> Result<ExpertPrediction> {
            experts
                .get(id)?
                .predict(&triplet)
                .map_err(|e| Error::ExpertFailure {
                    expert: id.name.clone(),
                    dialogue_id: dialogue.dialogue_id.clone(),
                    turn_id: turn.turn_id,
                    source: Box::new(e),
                })
        };

        let (decision, prediction, invoked) = match router {
            Router::Retrieval {
                embedder,
                adapter,
                pools,
                k,
            } => {
                let query = adapter.project(&embedder.embed(&triplet)?)?;
                let decision = route_retrieval(&query, pools, *k)?;
                let prediction = call(&decision.chosen)?;
                let invoked = vec![decision.chosen.clone()];
                (decision, prediction, invoked)
            }
            Router::Classifier { embedder, model } => {
                let decision = model.route(&embedder.embed(&triplet)?)?;
                let prediction = call(&decision.chosen)?;
                let invoked = vec![decision.chosen.clone()];
                (decision, prediction, invoked)
            }
            Router::Oracle => {
                let mut all = Vec::new();
                for expert in experts.iter() {
                    all.push(call(expert.id())?);
                }
                let preds: Vec<(ExpertId, TurnBelief)> =
                    all.iter().map(|p| (p.expert.clone(), p.tlb.clone())).collect();
                let decision = route_oracle(&preds, &turn.gold_tlb)?;
                let prediction = all
                    .into_iter()
                    .find(|p| p.expert == decision.chosen)
                    .expect("oracle picks a queried expert");
                let invoked = vec![decision.chosen.clone()];
                (decision, prediction, invoked)
            }
            Router::Cascade {
                threshold,
                slm,
                llm,
            } => {
                let first = call(slm)?;
                let decision = route_cascade(first.confidence, *threshold, slm, llm).map_err(|_| {
                    Error::MissingConfidence {
                        expert: slm.name.clone(),
                        key: key.to_string(),
                    }
                })?;
                if &decision.chosen == slm {
                    (decision, first, vec![slm.clone()])
                } else {
                    let second = call(llm)?;
                    (decision, second, vec![slm.clone(), llm.clone()])
                }
            }
            Router::Constant(id) => (RoutingDecision::fixed(id.clone()), call(id)?, vec![id.clone()]),
        };

        predicted = aggregate_state(&predicted, &prediction.tlb);
        records.push(TurnRecord {
            key,
            dialogue_id: dialogue.dialogue_id.clone(),
            turn_id: turn.turn_id,
            decision,
            prediction,
            invoked,
            router_charged: router.charges_router_cost(),
            state: predicted.clone(),
        });
    }
    Ok(records)
}

/// Routes every turn of every dialogue. Turns of one dialogue run in order
/// because each consumes the previous accumulated state; dialogues run in
/// parallel. Output order follows the corpus.
pub fn run_pipeline(
    dialogues: &[Dialogue],
    experts: &ExpertSet,
    router: &Router,
    config: &PipelineConfig,
) -> Result<RoutedRun> {
    let per_dialogue: Vec<Vec<TurnRecord>> = dialogues
        .par_iter()
        .map(|d| route_dialogue(d, experts, router, config.prior))
        .collect::<Result<_>>()?;
    Ok(RoutedRun {
        records: per_dialogue.into_iter().flatten().collect(),
        snapshot: snapshot(router, config),
    })
}

#[derive(Serialize, Deserialize)]
struct TurnLine {
    key: String,
    expert: String,
    votes: BTreeMap<String, usize>,
    neighbors: Vec<(String, f64)>,
    tlb: TurnBelief,
    confidence: Option<f64>,
    prediction_confidence: Option<f64>,
    invoked: Vec<String>,
    router_charged: bool,
    state: DialogueState,
}

#[derive(Serialize, Deserialize)]
struct SummaryLine {
    summary: Summary,
}

#[derive(Serialize, Deserialize)]
struct Summary {
    turns: usize,
    #[serde(flatten)]
    snapshot: RunSnapshot,
}

/// Writes one record per turn followed by a summary record.
pub fn write_run<W: Write>(mut writer: W, run: &RoutedRun) -> Result<()> {
    for r in &run.records {
        let line = TurnLine {
            key: r.key.to_string(),
            expert: r.decision.chosen.name.clone(),
            votes: r.decision.votes.iter().map(|(k, v)| (k.name.clone(), *v)).collect(),
            neighbors: r
                .decision
                .neighbors
                .iter()
                .map(|n| (n.key.to_string(), n.score))
                .collect(),
            tlb: r.prediction.tlb.clone(),
            confidence: r.decision.confidence,
            prediction_confidence: r.prediction.confidence,
            invoked: r.invoked.iter().map(|e| e.name.clone()).collect(),
            router_charged: r.router_charged,
            state: r.state.clone(),
        };
        serde_json::to_writer(&mut writer, &line)?;
        writer.write_all(b"\n")?;
    }
    let summary = SummaryLine {
        summary: Summary {
            turns: run.records.len(),
            snapshot: run.snapshot.clone(),
        },
    };
    serde_json::to_writer(&mut writer, &summary)?;
    writer.write_all(b"\n")?;
    Ok(())
}

/// Reads a routed-run file; expert names are resolved against `roster`.
pub fn read_run<R: BufRead>(reader: R, roster: &Roster) -> Result<RoutedRun> {
    let mut records = Vec::new();
    let mut summary = None;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |reason: String| Error::MalformedRecord {
            line: idx + 1,
            reason,
        };
        if summary.is_some() {
            return Err(malformed("record after summary".into()));
        }
        let value: serde_json::Value = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        if value.get("summary").is_some() {
            let s: SummaryLine = serde_json::from_value(value).map_err(|e| malformed(e.to_string()))?;
            summary = Some(s.summary);
            continue;
        }
        let t: TurnLine = serde_json::from_value(value).map_err(|e| malformed(e.to_string()))?;
        let (dialogue_id, turn_id) =
            TurnKey::parse(&t.key).ok_or_else(|| malformed(format!("bad turn key `{}`", t.key)))?;
        let chosen = roster.get(&t.expert)?.clone();
        let mut votes = BTreeMap::new();
        for (name, count) in t.votes {
            votes.insert(roster.get(&name)?.clone(), count);
        }
        let invoked = t
            .invoked
            .iter()
            .map(|n| roster.get(n).cloned())
            .collect::<Result<Vec<_>>>()?;
        records.push(TurnRecord {
            key: TurnKey::from(t.key.as_str()),
            dialogue_id: dialogue_id.clone(),
            turn_id,
            decision: RoutingDecision {
                chosen: chosen.clone(),
                votes,
                neighbors: t
                    .neighbors
                    .into_iter()
                    .map(|(k, score)| Neighbor {
                        key: TurnKey::from(k.as_str()),
                        score,
                    })
                    .collect(),
                confidence: t.confidence,
            },
            prediction: ExpertPrediction {
                dialogue_id,
                turn_id,
                expert: chosen,
                tlb: t.tlb,
                confidence: t.prediction_confidence,
            },
            invoked,
            router_charged: t.router_charged,
            state: t.state,
        });
    }
    let summary = summary.ok_or(Error::Empty("routed-run summary"))?;
    if summary.turns != records.len() {
        return Err(Error::Coverage(format!(
            "summary lists {} turns, file has {}",
            summary.turns,
            records.len()
        )));
    }
    Ok(RoutedRun {
        records,
        snapshot: summary.snapshot,
    })
}

/// Index of run records by turn key.
pub(crate) fn index_records(run: &RoutedRun) -> Result<HashMap<&TurnKey, &TurnRecord>> {
    let mut index = HashMap::with_capacity(run.records.len());
    for r in &run.records {
        if index.insert(&r.key, r).is_some() {
            return Err(Error::Coverage(format!("turn `{}` routed twice", r.key)));
        }
    }
    Ok(index)
}
