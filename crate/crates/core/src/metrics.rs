//! Accuracy metrics, cost accounting and run reports.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dialogue::{Dialogue, TurnKey};
use crate::error::{Error, Result};
use crate::experts::judge_correct;
use crate::routing::{index_records, RoutedRun, RunSnapshot, TurnRecord};

/// Inference cost of one LLM call.
pub const LLM_TERAFLOPS_PER_TURN: f64 = 3000.0;
/// Inference cost of one retriever or classifier forward pass.
pub const ROUTER_TERAFLOPS_PER_TURN: f64 = 0.02;

fn default_router_cost() -> f64 {
    ROUTER_TERAFLOPS_PER_TURN
}

/// TeraFLOPs charged per turn, by expert name and for the router.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostTable {
    pub experts: BTreeMap<String, f64>,
    #[serde(default = "default_router_cost")]
    pub router: f64,
}

impl Default for CostTable {
    fn default() -> Self {
        Self {
            experts: BTreeMap::new(),
            router: ROUTER_TERAFLOPS_PER_TURN,
        }
    }
}

impl CostTable {
    pub fn new(experts: BTreeMap<String, f64>, router: f64) -> Result<Self> {
        let table = Self { experts, router };
        table.validate()?;
        Ok(table)
    }

    /// `slm` at the given cost, `llm` at the LLM constant.
    pub fn slm_llm(slm_per_turn: f64) -> Self {
        Self {
            experts: [
                ("slm".to_string(), slm_per_turn),
                ("llm".to_string(), LLM_TERAFLOPS_PER_TURN),
            ]
            .into(),
            router: ROUTER_TERAFLOPS_PER_TURN,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, &c) in self.experts.iter().map(|(n, c)| (n.as_str(), c)).chain([("router", &self.router)]) {
            if !c.is_finite() || c < 0.0 {
                return Err(Error::Config(format!("cost of `{name}` must be finite and non-negative, got {c}")));
            }
        }
        Ok(())
    }

    pub fn expert(&self, name: &str) -> Result<f64> {
        self.experts
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownExpert(name.to_string()))
    }
}

/// Pairs each corpus turn with its run record, failing unless the run
/// covers exactly the corpus turns.
fn align<'a>(run: &'a RoutedRun, gold: &'a [Dialogue]) -> Result<Vec<(&'a Dialogue, usize, &'a TurnRecord)>> {
    let index = index_records(run)?;
    let mut aligned = Vec::with_capacity(run.records.len());
    for d in gold {
        for t in 0..d.turns.len() {
            let key = d.turn_key(t);
            let record = index
                .get(&key)
                .ok_or_else(|| Error::Coverage(format!("turn `{key}` missing from run")))?;
            aligned.push((d, t, *record));
        }
    }
    if aligned.len() != run.records.len() {
        let known: BTreeSet<TurnKey> = gold
            .iter()
            .flat_map(|d| (0..d.turns.len()).map(move |t| d.turn_key(t)))
            .collect();
        let extra = run
            .records
            .iter()
            .find(|r| !known.contains(&r.key))
            .map(|r| r.key.to_string())
            .unwrap_or_default();
        return Err(Error::Coverage(format!("run has turn `{extra}` not in the corpus")));
    }
    Ok(aligned)
}

fn fraction(hits: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

/// Fraction of turns whose chosen turn-level belief matches the gold one.
pub fn tlb_jga(run: &RoutedRun, gold: &[Dialogue]) -> Result<f64> {
    let aligned = align(run, gold)?;
    let hits = aligned
        .iter()
        .filter(|(d, t, r)| judge_correct(&r.prediction.tlb, &d.turns[*t].gold_tlb))
        .count();
    Ok(fraction(hits, aligned.len()))
}

/// Fraction of turns whose accumulated state equals the accumulated gold state.
pub fn dst_jga(run: &RoutedRun, gold: &[Dialogue]) -> Result<f64> {
    let aligned = align(run, gold)?;
    let states: BTreeMap<&str, _> = gold.iter().map(|d| (d.dialogue_id.as_str(), d.gold_states())).collect();
    let hits = aligned
        .iter()
        .filter(|(d, t, r)| r.state == states[d.dialogue_id.as_str()][*t])
        .count();
    Ok(fraction(hits, aligned.len()))
}

/// Sum of the costs of every invoked expert plus the router cost on turns
/// whose router ran a model.
pub fn total_cost(run: &RoutedRun, costs: &CostTable) -> Result<f64> {
    let mut total = 0.0;
    for r in &run.records {
        for expert in &r.invoked {
            total += costs.expert(&expert.name)?;
        }
        if r.router_charged {
            total += costs.router;
        }
    }
    Ok(total)
}

/// Share of turns routed to each expert that was chosen at least once.
pub fn assignment_ratio(run: &RoutedRun) -> Result<BTreeMap<String, f64>> {
    if run.is_empty() {
        return Err(Error::Empty("routed run"));
    }
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for r in &run.records {
        *counts.entry(r.decision.chosen.name.clone()).or_default() += 1;
    }
    let n = run.len() as f64;
    Ok(counts.into_iter().map(|(k, c)| (k, c as f64 / n)).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum OodCategory {
    #[serde(rename = "In-Domain")]
    InDomain,
    #[serde(rename = "Half OOD")]
    HalfOod,
    #[serde(rename = "OOD")]
    Ood,
}

impl OodCategory {
    pub fn label(self) -> &'static str {
        match self {
            OodCategory::InDomain => "In-Domain",
            OodCategory::HalfOod => "Half OOD",
            OodCategory::Ood => "OOD",
        }
    }
}

impl fmt::Display for OodCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

pub fn categorize_ood(dialogue_domains: &BTreeSet<String>, training_domains: &BTreeSet<String>) -> OodCategory {
    if dialogue_domains.is_subset(training_domains) {
        OodCategory::InDomain
    } else if dialogue_domains.is_disjoint(training_domains) {
        OodCategory::Ood
    } else {
        OodCategory::HalfOod
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoryStats {
    pub dialogues: usize,
    pub turns: usize,
    pub tlb_jga: f64,
    pub dst_jga: f64,
    pub assignment_ratio: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub dialogues: usize,
    pub turns: usize,
    pub tlb_jga: f64,
    pub dst_jga: f64,
    pub assignment_ratio: BTreeMap<String, f64>,
    pub total_teraflops: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub breakdown: Option<BTreeMap<OodCategory, CategoryStats>>,
    pub config: RunSnapshot,
}

fn subset_run(run: &RoutedRun, ids: &BTreeSet<&str>) -> RoutedRun {
    RoutedRun {
        records: run
            .records
            .iter()
            .filter(|r| ids.contains(r.dialogue_id.as_str()))
            .cloned()
            .collect(),
        snapshot: run.snapshot.clone(),
    }
}

pub fn make_report(
    run: &RoutedRun,
    gold: &[Dialogue],
    costs: &CostTable,
    training_domains: Option<&BTreeSet<String>>,
) -> Result<Report> {
    let breakdown = match training_domains {
        None => None,
        Some(train) => {
            let mut groups: BTreeMap<OodCategory, Vec<Dialogue>> = BTreeMap::new();
            for d in gold {
                groups.entry(categorize_ood(&d.domains, train)).or_default().push(d.clone());
            }
            let mut out = BTreeMap::new();
            for (category, dialogues) in groups {
                let ids: BTreeSet<&str> = dialogues.iter().map(|d| d.dialogue_id.as_str()).collect();
                let sub = subset_run(run, &ids);
                out.insert(
                    category,
                    CategoryStats {
                        dialogues: dialogues.len(),
                        turns: sub.len(),
                        tlb_jga: tlb_jga(&sub, &dialogues)?,
                        dst_jga: dst_jga(&sub, &dialogues)?,
                        assignment_ratio: if sub.is_empty() { BTreeMap::new() } else { assignment_ratio(&sub)? },
                    },
                );
            }
            Some(out)
        }
    };
    Ok(Report {
        dialogues: gold.len(),
        turns: run.len(),
        tlb_jga: tlb_jga(run, gold)?,
        dst_jga: dst_jga(run, gold)?,
        assignment_ratio: assignment_ratio(run)?,
        total_teraflops: total_cost(run, costs)?,
        breakdown,
        config: run.snapshot.clone(),
    })
}
