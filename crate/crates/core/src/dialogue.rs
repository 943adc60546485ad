//! Dialogue data model: slots, turn-level beliefs, accumulated states and
//! the line-delimited corpus format.
//!
//! A turn-level belief (TLB) holds only the slots a turn adds or updates.
//! The dialogue state at turn `t` is the fold of every TLB up to `t`, later
//! values replacing earlier ones.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Separator between the domain and slot parts of a rendered slot name.
pub const SLOT_SEPARATOR: char = '-';

/// Lowercase, trim, and collapse internal whitespace runs to one space.
pub fn canonicalize_value(raw: &str) -> String {
    raw.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Canonical spellings that mean "no value".
pub fn is_null_value(canonical: &str) -> bool {
    canonical.is_empty() || canonical == "none"
}

/// A `(domain, slot)` pair, rendered as `domain-slot`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SlotName {
    domain: String,
    slot: String,
}

impl SlotName {
    pub fn new(domain: &str, slot: &str) -> Result<Self> {
        let domain = canonicalize_value(domain);
        let slot = canonicalize_value(slot);
        if domain.is_empty()
            || slot.is_empty()
            || domain.contains(SLOT_SEPARATOR)
            || slot.contains(SLOT_SEPARATOR)
        {
            return Err(Error::InvalidSlot(format!("{domain}{SLOT_SEPARATOR}{slot}")));
        }
        Ok(Self { domain, slot })
    }

    /// Parse a rendered `domain-slot` name.
    pub fn parse(rendered: &str) -> Result<Self> {
        let (domain, slot) = rendered
            .split_once(SLOT_SEPARATOR)
            .ok_or_else(|| Error::InvalidSlot(rendered.to_string()))?;
        Self::new(domain, slot).map_err(|_| Error::InvalidSlot(rendered.to_string()))
    }

    pub fn domain(&self) -> &str {
        &self.domain
    }

    pub fn slot(&self) -> &str {
        &self.slot
    }
}

impl fmt::Display for SlotName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}{}", self.domain, SLOT_SEPARATOR, self.slot)
    }
}

/// Slot-to-value map shared by [`TurnBelief`] and [`DialogueState`].
///
/// Values are canonical and never null.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct SlotValues(BTreeMap<SlotName, String>);

impl SlotValues {
    /// Builds a map from raw pairs, canonicalizing values and dropping nulls.
    /// Returns the map and the number of dropped entries.
    pub fn from_raw<'a, I>(pairs: I) -> Result<(Self, usize)>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let mut map = BTreeMap::new();
        let mut dropped = 0;
        for (slot, value) in pairs {
            let slot = SlotName::parse(slot)?;
            let value = canonicalize_value(value);
            if is_null_value(&value) {
                dropped += 1;
                continue;
            }
            map.insert(slot, value);
        }
        Ok((Self(map), dropped))
    }

    pub fn get(&self, slot: &SlotName) -> Option<&str> {
        self.0.get(slot).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&SlotName, &str)> {
        self.0.iter().map(|(k, v)| (k, v.as_str()))
    }

    pub fn slots(&self) -> impl Iterator<Item = &SlotName> {
        self.0.keys()
    }

    /// Inserts a canonical, non-null value. Null values are ignored.
    pub fn insert(&mut self, slot: SlotName, value: &str) {
        let value = canonicalize_value(value);
        if !is_null_value(&value) {
            self.0.insert(slot, value);
        }
    }

    fn to_string_map(&self) -> BTreeMap<String, String> {
        self.0
            .iter()
            .map(|(k, v)| (k.to_string(), v.clone()))
            .collect()
    }
}

macro_rules! slot_values_newtype {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
        #[serde(try_from = "BTreeMap<String, String>", into = "BTreeMap<String, String>")]
        pub struct $name(SlotValues);

        impl $name {
            pub fn new() -> Self {
                Self::default()
            }

            /// Builds from raw `("domain-slot", value)` pairs; null values are dropped.
            pub fn from_pairs<'a, I>(pairs: I) -> Result<Self>
            where
                I: IntoIterator<Item = (&'a str, &'a str)>,
            {
                SlotValues::from_raw(pairs).map(|(v, _)| Self(v))
            }

            pub fn values(&self) -> &SlotValues {
                &self.0
            }

            pub fn get(&self, slot: &SlotName) -> Option<&str> {
                self.0.get(slot)
            }

            pub fn len(&self) -> usize {
                self.0.len()
            }

            pub fn is_empty(&self) -> bool {
                self.0.is_empty()
            }

            pub fn iter(&self) -> impl Iterator<Item = (&SlotName, &str)> {
                self.0.iter()
            }

            pub fn insert(&mut self, slot: SlotName, value: &str) {
                self.0.insert(slot, value);
            }
        }

        impl From<SlotValues> for $name {
            fn from(values: SlotValues) -> Self {
                Self(values)
            }
        }

        impl TryFrom<BTreeMap<String, String>> for $name {
            type Error = Error;

            fn try_from(raw: BTreeMap<String, String>) -> Result<Self> {
                Self::from_pairs(raw.iter().map(|(k, v)| (k.as_str(), v.as_str())))
            }
        }

        impl From<$name> for BTreeMap<String, String> {
            fn from(value: $name) -> Self {
                value.0.to_string_map()
            }
        }
    };
}

slot_values_newtype!(
    /// Slots expressed or updated in a single turn.
    TurnBelief
);

slot_values_newtype!(
    /// Non-null slot values accumulated up to a turn.
    DialogueState
);

/// Identifier of one turn, rendered `dialogue_id:turn_id`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TurnKey(String);

impl TurnKey {
    pub fn new(dialogue_id: &str, turn_id: u32) -> Self {
        Self(format!("{dialogue_id}:{turn_id}"))
    }

    /// Splits at the last `:`; dialogue ids may themselves contain colons.
    pub fn parse(raw: &str) -> Option<(String, u32)> {
        let (dialogue, turn) = raw.rsplit_once(':')?;
        Some((dialogue.to_string(), turn.parse().ok()?))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for TurnKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for TurnKey {
    fn from(raw: &str) -> Self {
        Self(raw.to_string())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Turn {
    pub turn_id: u32,
    pub system_utterance: String,
    pub user_utterance: String,
    pub gold_tlb: TurnBelief,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dialogue {
    pub dialogue_id: String,
    pub domains: BTreeSet<String>,
    pub turns: Vec<Turn>,
}

impl Dialogue {
    pub fn validate(&self) -> Result<()> {
        let invalid = |reason: &str| Error::InvalidDialogue {
            dialogue_id: self.dialogue_id.clone(),
            reason: reason.to_string(),
        };
        if self.dialogue_id.is_empty() {
            return Err(invalid("empty dialogue id"));
        }
        if self.turns.is_empty() {
            return Err(invalid("no turns"));
        }
        for pair in self.turns.windows(2) {
            if pair[1].turn_id <= pair[0].turn_id {
                return Err(Error::NonMonotoneTurn {
                    dialogue_id: self.dialogue_id.clone(),
                    turn_id: pair[1].turn_id,
                    previous: pair[0].turn_id,
                });
            }
        }
        if let Some(turn) = self.turns.iter().find(|t| t.user_utterance.trim().is_empty()) {
            return Err(invalid(&format!("turn {} has an empty user utterance", turn.turn_id)));
        }
        Ok(())
    }

    pub fn turn_key(&self, index: usize) -> TurnKey {
        TurnKey::new(&self.dialogue_id, self.turns[index].turn_id)
    }

    /// Gold states accumulated after each turn.
    pub fn gold_states(&self) -> Vec<DialogueState> {
        let tlbs: Vec<TurnBelief> = self.turns.iter().map(|t| t.gold_tlb.clone()).collect();
        accumulate_dialogue(&tlbs)
    }
}

/// Insert or overwrite every entry of `tlb` into a copy of `prev`.
pub fn aggregate_state(prev: &DialogueState, tlb: &TurnBelief) -> DialogueState {
    let mut next = prev.clone();
    for (slot, value) in tlb.iter() {
        next.insert(slot.clone(), value);
    }
    next
}

/// `result[t]` is the fold of `tlbs[0..=t]` starting from the empty state.
pub fn accumulate_dialogue(tlbs: &[TurnBelief]) -> Vec<DialogueState> {
    tlbs.iter()
        .scan(DialogueState::new(), |state, tlb| {
            *state = aggregate_state(state, tlb);
            Some(state.clone())
        })
        .collect()
}

/// Router and expert input: `(DST_{t-1}, A_{t-1}, U_t)` plus identifiers.
#[derive(Clone, Debug, PartialEq)]
pub struct Triplet {
    pub dialogue_id: String,
    pub turn_id: u32,
    pub prev_state: DialogueState,
    pub system_utterance: String,
    pub user_utterance: String,
}

impl Triplet {
    pub fn key(&self) -> TurnKey {
        TurnKey::new(&self.dialogue_id, self.turn_id)
    }
}

/// Builds the triplet for turn index `t`. The first turn always gets an
/// empty prior state.
pub fn triplet_of_turn(dialogue: &Dialogue, t: usize, prev_state: &DialogueState) -> Result<Triplet> {
    let turn = dialogue.turns.get(t).ok_or_else(|| Error::TurnOutOfRange {
        dialogue_id: dialogue.dialogue_id.clone(),
        index: t,
        len: dialogue.turns.len(),
    })?;
    let prev_state = if t == 0 {
        DialogueState::new()
    } else {
        prev_state.clone()
    };
    Ok(Triplet {
        dialogue_id: dialogue.dialogue_id.clone(),
        turn_id: turn.turn_id,
        prev_state,
        system_utterance: turn.system_utterance.clone(),
        user_utterance: turn.user_utterance.clone(),
    })
}

/// A triplet built from gold history, paired with the gold TLB of its turn.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledTurn {
    pub triplet: Triplet,
    pub gold_tlb: TurnBelief,
}

impl LabeledTurn {
    pub fn key(&self) -> TurnKey {
        self.triplet.key()
    }
}

/// Every turn of every dialogue with its gold-accumulated prior state.
pub fn labeled_turns(dialogues: &[Dialogue]) -> Vec<LabeledTurn> {
    let mut out = Vec::new();
    for dialogue in dialogues {
        let mut prev = DialogueState::new();
        for (t, turn) in dialogue.turns.iter().enumerate() {
            let triplet = triplet_of_turn(dialogue, t, &prev).expect("index in range");
            prev = aggregate_state(&prev, &turn.gold_tlb);
            out.push(LabeledTurn {
                triplet,
                gold_tlb: turn.gold_tlb.clone(),
            });
        }
    }
    out
}

#[derive(Serialize, Deserialize)]
struct TurnRecord {
    turn_id: u32,
    system: String,
    user: String,
    gold_tlb: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct DialogueRecord {
    dialogue_id: String,
    domains: Vec<String>,
    turns: Vec<TurnRecord>,
}

/// A parsed corpus and the number of null gold values dropped on ingestion.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParsedCorpus {
    pub dialogues: Vec<Dialogue>,
    pub dropped_values: usize,
}

/// Reads one dialogue per line. Blank lines are skipped.
pub fn parse_dialogues<R: BufRead>(reader: R) -> Result<ParsedCorpus> {
    let mut parsed = ParsedCorpus::default();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |reason: String| Error::MalformedRecord { line: line_no, reason };
        let record: DialogueRecord =
            serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;

        let mut turns = Vec::with_capacity(record.turns.len());
        for turn in record.turns {
            let (values, dropped) = SlotValues::from_raw(
                turn.gold_tlb.iter().map(|(k, v)| (k.as_str(), v.as_str())),
            )
            .map_err(|e| malformed(e.to_string()))?;
            parsed.dropped_values += dropped;
            turns.push(Turn {
                turn_id: turn.turn_id,
                system_utterance: turn.system,
                user_utterance: turn.user,
                gold_tlb: values.into(),
            });
        }
        let dialogue = Dialogue {
            dialogue_id: record.dialogue_id,
            domains: record.domains.iter().map(|d| canonicalize_value(d)).collect(),
            turns,
        };
        match dialogue.validate() {
            Ok(()) => {}
            Err(e @ Error::NonMonotoneTurn { .. }) => return Err(e),
            Err(e) => return Err(malformed(e.to_string())),
        }
        if !seen.insert(dialogue.dialogue_id.clone()) {
            return Err(Error::DuplicateDialogue(dialogue.dialogue_id));
        }
        parsed.dialogues.push(dialogue);
    }
    if parsed.dropped_values > 0 {
        log::warn!("dropped {} null gold values", parsed.dropped_values);
    }
    Ok(parsed)
}

/// Writes dialogues in the corpus format, one per line.
pub fn write_dialogues<W: Write>(mut writer: W, dialogues: &[Dialogue]) -> Result<()> {
    for dialogue in dialogues {
        let record = DialogueRecord {
            dialogue_id: dialogue.dialogue_id.clone(),
            domains: dialogue.domains.iter().cloned().collect(),
            turns: dialogue
                .turns
                .iter()
                .map(|t| TurnRecord {
                    turn_id: t.turn_id,
                    system: t.system_utterance.clone(),
                    user: t.user_utterance.clone(),
                    gold_tlb: t.gold_tlb.clone().into(),
                })
                .collect(),
        };
        serde_json::to_writer(&mut writer, &record)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}
