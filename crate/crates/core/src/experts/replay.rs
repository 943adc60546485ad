use std::collections::HashMap;
use std::io::BufRead;

use super::{read_prediction_records, Expert, ExpertId, ExpertPrediction};
use crate::dialogue::{Triplet, TurnBelief, TurnKey};
use crate::error::{Error, Result};

/// Serves precomputed predictions from a predictions file.
///
/// The stored belief is returned regardless of the prior state in the
/// triplet; only `(dialogue_id, turn_id)` is used for lookup.
#[derive(Clone, Debug)]
pub struct ReplayExpert {
    id: ExpertId,
    table: HashMap<TurnKey, (TurnBelief, Option<f64>)>,
}

impl ReplayExpert {
    /// Loads the records of `id` from a predictions file; records of other
    /// experts are skipped.
    pub fn load<R: BufRead>(id: ExpertId, reader: R) -> Result<Self> {
        let mut table = HashMap::new();
        for record in read_prediction_records(reader)? {
            if record.expert != id.name {
                continue;
            }
            let key = TurnKey::new(&record.dialogue_id, record.turn_id);
            if table.insert(key.clone(), (record.tlb, record.confidence)).is_some() {
                return Err(Error::Config(format!(
                    "duplicate prediction for `{key}` from expert `{id}`"
                )));
            }
        }
        Ok(Self { id, table })
    }

    pub fn from_predictions(id: ExpertId, predictions: impl IntoIterator<Item = ExpertPrediction>) -> Self {
        let table = predictions
            .into_iter()
            .filter(|p| p.expert == id)
            .map(|p| (p.key(), (p.tlb, p.confidence)))
            .collect();
        Self { id, table }
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn covers(&self, key: &TurnKey) -> bool {
        self.table.contains_key(key)
    }
}

impl Expert for ReplayExpert {
    fn id(&self) -> &ExpertId {
        &self.id
    }

    fn predict(&self, triplet: &Triplet) -> Result<ExpertPrediction> {
        let key = triplet.key();
        let (tlb, confidence) = self.table.get(&key).ok_or_else(|| Error::MissingPrediction {
            expert: self.id.name.clone(),
            key: key.to_string(),
        })?;
        Ok(ExpertPrediction {
            dialogue_id: triplet.dialogue_id.clone(),
            turn_id: triplet.turn_id,
            expert: self.id.clone(),
            tlb: tlb.clone(),
            confidence: *confidence,
        })
    }
}
