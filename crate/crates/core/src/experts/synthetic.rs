use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Expert, ExpertId, ExpertPrediction};
use crate::dialogue::{SlotName, Triplet, TurnBelief, TurnKey};
use crate::error::{Error, Result};
use crate::rng::substream;

/// Region of the input space where a synthetic expert is competent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "tokens")]
pub enum Competence {
    Always,
    /// The user utterance contains at least one of these words.
    AnyToken(BTreeSet<String>),
    /// The user utterance contains none of these words.
    NoToken(BTreeSet<String>),
}

impl Competence {
    pub fn holds(&self, triplet: &Triplet) -> bool {
        let words = || {
            triplet
                .user_utterance
                .split(|c: char| !c.is_alphanumeric())
                .filter(|w| !w.is_empty())
                .map(str::to_lowercase)
        };
        match self {
            Competence::Always => true,
            Competence::AnyToken(tokens) => words().any(|w| tokens.contains(&w)),
            Competence::NoToken(tokens) => !words().any(|w| tokens.contains(&w)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpertProfile {
    pub competence: Competence,
    pub accuracy_in: f64,
    pub accuracy_out: f64,
    pub confidence_when_correct: f64,
    pub confidence_when_wrong: f64,
}

impl ExpertProfile {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("accuracy_in", self.accuracy_in),
            ("accuracy_out", self.accuracy_out),
            ("confidence_when_correct", self.confidence_when_correct),
            ("confidence_when_wrong", self.confidence_when_wrong),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must be in [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

/// Simulated expert that emits the gold belief with a profile-dependent
/// probability and a corrupted one otherwise.
///
/// Randomness is drawn from a stream keyed by `(seed, turn key)`, so the
/// output for a turn does not depend on evaluation order.
#[derive(Clone, Debug)]
pub struct SyntheticExpert {
    id: ExpertId,
    profile: ExpertProfile,
    seed: u64,
    gold: Arc<HashMap<TurnKey, TurnBelief>>,
}

impl SyntheticExpert {
    pub fn new(
        id: ExpertId,
        profile: ExpertProfile,
        seed: u64,
        gold: Arc<HashMap<TurnKey, TurnBelief>>,
    ) -> Result<Self> {
        profile.validate()?;
        Ok(Self {
            id,
            profile,
            seed,
            gold,
        })
    }

    pub fn profile(&self) -> &ExpertProfile {
        &self.profile
    }
}

/// Drops one entry or replaces one value with `corrupted-<k>`, with equal
/// probability. An empty belief gains a spurious entry instead.
fn corrupt<R: Rng>(gold: &TurnBelief, rng: &mut R) -> TurnBelief {
    let k: u32 = rng.random_range(0..1000);
    let entries: Vec<(SlotName, String)> = gold.iter().map(|(s, v)| (s.clone(), v.to_string())).collect();
    if entries.is_empty() {
        let mut out = TurnBelief::new();
        out.insert(SlotName::new("corrupted", &format!("slot{k}")).expect("valid"), "corrupted");
        return out;
    }
    let victim = rng.random_range(0..entries.len());
    let mut out = TurnBelief::new();
    let drop = rng.random_bool(0.5);
    for (i, (slot, value)) in entries.into_iter().enumerate() {
        if i != victim {
            out.insert(slot, &value);
        } else if !drop {
            out.insert(slot, &format!("corrupted-{k}"));
        }
    }
    out
}

impl Expert for SyntheticExpert {
    fn id(&self) -> &ExpertId {
        &self.id
    }

    fn predict(&self, triplet: &Triplet) -> Result<ExpertPrediction> {
        let key = triplet.key();
        let gold = self.gold.get(&key).ok_or_else(|| Error::MissingPrediction {
            expert: self.id.name.clone(),
            key: key.to_string(),
        })?;
        let mut rng = substream(self.seed, &format!("{}/{}", self.id.name, key));
        let accuracy = if self.profile.competence.holds(triplet) {
            self.profile.accuracy_in
        } else {
            self.profile.accuracy_out
        };
        let correct = rng.random::<f64>() < accuracy;
        let (tlb, confidence) = if correct {
            (gold.clone(), self.profile.confidence_when_correct)
        } else {
            (corrupt(gold, &mut rng), self.profile.confidence_when_wrong)
        };
        Ok(ExpertPrediction {
            dialogue_id: triplet.dialogue_id.clone(),
            turn_id: triplet.turn_id,
            expert: self.id.clone(),
            tlb,
            confidence: Some(confidence),
        })
    }
}
