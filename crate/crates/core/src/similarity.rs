//! F1-based similarities between beliefs and states.
//!
//! `sim(a, b) = F1(slot-value pairs) + F1(slot names) - 1`, which lies in
//! `[-1, 1]`. The combined turn similarity adds half the similarity of the
//! prior states to the similarity of the turn beliefs, so it lies in
//! `[-1.5, 1.5]`.

use std::collections::BTreeSet;

use crate::dialogue::{DialogueState, LabeledTurn, SlotName, SlotValues, TurnBelief};

/// F1 between two finite sets. Two empty sets score 1; one empty set scores 0.
pub fn f1_sets<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let common = a.intersection(b).count() as f64;
    let precision = common / a.len() as f64;
    let recall = common / b.len() as f64;
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// The two F1 terms behind a slot-value similarity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct F1Terms {
    pub slot_value: f64,
    pub slot: f64,
}

impl F1Terms {
    pub fn of(a: &SlotValues, b: &SlotValues) -> Self {
        let pairs = |v: &SlotValues| -> BTreeSet<(SlotName, String)> {
            v.iter().map(|(k, x)| (k.clone(), x.to_string())).collect()
        };
        let slots = |v: &SlotValues| -> BTreeSet<SlotName> { v.slots().cloned().collect() };
        Self {
            slot_value: f1_sets(&pairs(a), &pairs(b)),
            slot: f1_sets(&slots(a), &slots(b)),
        }
    }

    pub fn score(self) -> f64 {
        self.slot_value + self.slot - 1.0
    }
}

pub fn slot_values_similarity(a: &SlotValues, b: &SlotValues) -> f64 {
    F1Terms::of(a, b).score()
}

pub fn tlb_similarity(a: &TurnBelief, b: &TurnBelief) -> f64 {
    slot_values_similarity(a.values(), b.values())
}

pub fn state_similarity(a: &DialogueState, b: &DialogueState) -> f64 {
    slot_values_similarity(a.values(), b.values())
}

/// Weight of the prior-state term in [`turn_similarity`].
pub const CONTEXT_WEIGHT: f64 = 0.5;

/// `0.5 * state_similarity(prev) + tlb_similarity(tlb)` over gold labels.
pub fn turn_similarity(a: &LabeledTurn, b: &LabeledTurn) -> f64 {
    CONTEXT_WEIGHT * state_similarity(&a.triplet.prev_state, &b.triplet.prev_state)
        + tlb_similarity(&a.gold_tlb, &b.gold_tlb)
}

/// Graded correctness of a prediction; used for expert labels.
pub fn graded_accuracy(pred: &TurnBelief, gold: &TurnBelief) -> f64 {
    tlb_similarity(pred, gold)
}
