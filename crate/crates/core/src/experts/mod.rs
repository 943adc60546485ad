//! Expert contract, correctness judging and expert labels.
//!
//! Experts are ordered by `priority_rank`; lower ranks are cheaper and win
//! every tie (label ties, vote ties, oracle preference).

mod pools;
mod replay;
mod synthetic;

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dialogue::{LabeledTurn, Triplet, TurnBelief, TurnKey};
use crate::error::{Error, Result};
use crate::similarity::graded_accuracy;

pub use pools::{build_pools, read_pool, sample_pool, write_pool, ExpertPool, PoolAssignment, PoolEntry};
pub use replay::ReplayExpert;
pub use synthetic::{Competence, ExpertProfile, SyntheticExpert};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ExpertId {
    pub priority_rank: u32,
    pub name: String,
}

impl ExpertId {
    pub fn new(name: &str, priority_rank: u32) -> Self {
        Self {
            priority_rank,
            name: name.to_string(),
        }
    }

    pub fn slm() -> Self {
        Self::new("slm", 0)
    }

    pub fn llm() -> Self {
        Self::new("llm", 1)
    }
}

impl fmt::Display for ExpertId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// Experts of one run in priority order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Roster(Vec<ExpertId>);

impl Roster {
    /// Ranks follow the order of `names`.
    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self> {
        let mut ids: Vec<ExpertId> = Vec::with_capacity(names.len());
        for (rank, name) in names.iter().enumerate() {
            let name = name.as_ref();
            if name.is_empty() || ids.iter().any(|id| id.name == name) {
                return Err(Error::Config(format!("expert names must be unique and non-empty: `{name}`")));
            }
            ids.push(ExpertId::new(name, rank as u32));
        }
        if ids.is_empty() {
            return Err(Error::Config("no experts configured".into()));
        }
        Ok(Self(ids))
    }

    pub fn slm_llm() -> Self {
        Self(vec![ExpertId::slm(), ExpertId::llm()])
    }

    pub fn get(&self, name: &str) -> Result<&ExpertId> {
        self.0
            .iter()
            .find(|id| id.name == name)
            .ok_or_else(|| Error::UnknownExpert(name.to_string()))
    }

    pub fn ids(&self) -> &[ExpertId] {
        &self.0
    }

    /// The lowest-rank (preferred) expert.
    pub fn preferred(&self) -> &ExpertId {
        &self.0[0]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExpertPrediction {
    pub dialogue_id: String,
    pub turn_id: u32,
    pub expert: ExpertId,
    pub tlb: TurnBelief,
    pub confidence: Option<f64>,
}

impl ExpertPrediction {
    pub fn key(&self) -> TurnKey {
        TurnKey::new(&self.dialogue_id, self.turn_id)
    }
}

/// A turn-level belief predictor. Implementations must tolerate concurrent
/// calls on distinct turns.
pub trait Expert: Send + Sync {
    fn id(&self) -> &ExpertId;

    fn predict(&self, triplet: &Triplet) -> Result<ExpertPrediction>;
}

/// Experts of a run, in priority order.
#[derive(Clone)]
pub struct ExpertSet {
    experts: Vec<Arc<dyn Expert>>,
}

impl ExpertSet {
    pub fn new(mut experts: Vec<Arc<dyn Expert>>) -> Result<Self> {
        experts.sort_by(|a, b| a.id().cmp(b.id()));
        for pair in experts.windows(2) {
            if pair[0].id().name == pair[1].id().name
                || pair[0].id().priority_rank == pair[1].id().priority_rank
            {
                return Err(Error::Config(format!(
                    "experts `{}` and `{}` share a name or priority rank",
                    pair[0].id(),
                    pair[1].id()
                )));
            }
        }
        if experts.is_empty() {
            return Err(Error::Config("no experts configured".into()));
        }
        Ok(Self { experts })
    }

    pub fn iter(&self) -> impl Iterator<Item = &Arc<dyn Expert>> {
        self.experts.iter()
    }

    pub fn get(&self, id: &ExpertId) -> Result<&Arc<dyn Expert>> {
        self.experts
            .iter()
            .find(|e| e.id() == id)
            .ok_or_else(|| Error::UnknownExpert(id.name.clone()))
    }

    pub fn ids(&self) -> Vec<ExpertId> {
        self.experts.iter().map(|e| e.id().clone()).collect()
    }

    pub fn roster(&self) -> Roster {
        Roster(self.ids())
    }
}

/// Exact set equality of canonical slot-value pairs.
pub fn judge_correct(pred: &TurnBelief, gold: &TurnBelief) -> bool {
    pred == gold
}

/// Expert with the highest graded accuracy; ties go to the lowest rank.
pub fn assign_expert_label(preds: &[(ExpertId, TurnBelief)], gold: &TurnBelief) -> Option<ExpertId> {
    preds
        .iter()
        .map(|(id, tlb)| (graded_accuracy(tlb, gold), id))
        .max_by(|(sa, ia), (sb, ib)| sa.total_cmp(sb).then_with(|| ib.cmp(ia)))
        .map(|(_, id)| id.clone())
}

/// Predictions of every expert for a set of turns.
#[derive(Clone, Debug, Default)]
pub struct PredictionTable {
    by_turn: HashMap<TurnKey, Vec<ExpertPrediction>>,
}

impl PredictionTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, prediction: ExpertPrediction) {
        let slot = self.by_turn.entry(prediction.key()).or_default();
        slot.retain(|p| p.expert != prediction.expert);
        slot.push(prediction);
        slot.sort_by(|a, b| a.expert.cmp(&b.expert));
    }

    /// Runs every expert on every triplet.
    pub fn collect<'a, I>(experts: &ExpertSet, triplets: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a Triplet>,
    {
        let mut table = Self::new();
        for triplet in triplets {
            for expert in experts.iter() {
                table.insert(expert.predict(triplet)?);
            }
        }
        Ok(table)
    }

    pub fn get(&self, key: &TurnKey, expert: &ExpertId) -> Result<&ExpertPrediction> {
        self.by_turn
            .get(key)
            .and_then(|preds| preds.iter().find(|p| &p.expert == expert))
            .ok_or_else(|| Error::MissingPrediction {
                expert: expert.name.clone(),
                key: key.to_string(),
            })
    }

    /// `(expert, tlb)` for each expert of `roster`, or an error naming the
    /// first missing one.
    pub fn for_turn(&self, key: &TurnKey, roster: &[ExpertId]) -> Result<Vec<(ExpertId, TurnBelief)>> {
        roster
            .iter()
            .map(|id| self.get(key, id).map(|p| (id.clone(), p.tlb.clone())))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.by_turn.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.by_turn.is_empty()
    }
}

/// Supervision label for every hold-out turn.
pub fn expert_labels(holdout: &[LabeledTurn], table: &PredictionTable, roster: &[ExpertId]) -> Result<Vec<ExpertId>> {
    holdout
        .iter()
        .map(|turn| {
            let preds = table.for_turn(&turn.key(), roster)?;
            assign_expert_label(&preds, &turn.gold_tlb).ok_or(Error::Empty("experts"))
        })
        .collect()
}

/// One line of a predictions file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub dialogue_id: String,
    pub turn_id: u32,
    pub expert: String,
    pub tlb: TurnBelief,
    #[serde(default)]
    pub confidence: Option<f64>,
}

pub fn read_prediction_records<R: BufRead>(reader: R) -> Result<Vec<PredictionRecord>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: PredictionRecord = serde_json::from_str(&line).map_err(|e| Error::MalformedRecord {
            line: idx + 1,
            reason: e.to_string(),
        })?;
        if let Some(c) = record.confidence {
            if !(0.0..=1.0).contains(&c) {
                return Err(Error::MalformedRecord {
                    line: idx + 1,
                    reason: format!("confidence {c} outside [0, 1]"),
                });
            }
        }
        out.push(record);
    }
    Ok(out)
}

pub fn write_predictions<W: Write>(mut writer: W, predictions: &[ExpertPrediction]) -> Result<()> {
    for p in predictions {
        let record = PredictionRecord {
            dialogue_id: p.dialogue_id.clone(),
            turn_id: p.turn_id,
            expert: p.expert.name.clone(),
            tlb: p.tlb.clone(),
            confidence: p.confidence,
        };
        serde_json::to_writer(&mut writer, &record)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}
