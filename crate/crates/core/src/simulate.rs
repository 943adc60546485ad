//! Seeded synthetic corpora with two latent turn clusters, cluster-specialized
//! synthetic experts, and an end-to-end harness that runs every router on them.
//!
//! Every user utterance carries a few register words of its cluster. The SLM
//! is competent on cluster A markers and the LLM on cluster B markers, so a
//! router that recovers the cluster from the text beats either expert alone.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dialogue::{labeled_turns, Dialogue, Turn, TurnBelief, TurnKey};
use crate::embedding::{Embedder, HashingEmbedder, ProjectionAdapter};
use crate::error::{Error, Result};
use crate::experts::{
    Competence, Expert, ExpertId, ExpertProfile, ExpertSet, PoolAssignment, PredictionTable, SyntheticExpert,
};
use crate::metrics::CostTable;
use crate::rng::substream;
use crate::routing::{run_pipeline, PipelineConfig, PriorState, Router, RoutedRun, DEFAULT_K};
use crate::supervision::{PairSet, TrainConfig, TrainedAdapter};
use crate::workflow::{embed_turns, fit_adapter, mine_supervision, prepare_pools, SupervisionKind};

pub const CLUSTER_A_MARKERS: [&str; 8] = ["cheers", "lovely", "mate", "reckon", "brilliant", "fancy", "gonna", "yeah"];
pub const CLUSTER_B_MARKERS: [&str; 8] = [
    "regarding",
    "furthermore",
    "ideally",
    "preferably",
    "kindly",
    "additionally",
    "require",
    "accordingly",
];

type SlotFamily = &'static [(&'static str, &'static [&'static str])];

/// Per domain: categorical slots (cluster A) and open-valued slots (cluster B).
const DOMAINS: [(&str, SlotFamily, SlotFamily); 5] = [
    (
        "hotel",
        &[
            ("area", &["north", "south", "east", "west", "centre"]),
            ("stars", &["2", "3", "4", "5"]),
            ("parking", &["yes", "no"]),
            ("pricerange", &["cheap", "moderate", "expensive"]),
        ],
        &[
            ("name", &["acorn guest house", "alpha milton", "city roomz", "the lensfield"]),
            ("bookstay", &["2 nights", "3 nights", "5 nights"]),
            ("bookday", &["next monday", "this weekend", "the 14th"]),
        ],
    ),
    (
        "restaurant",
        &[
            ("food", &["italian", "chinese", "indian", "french", "thai"]),
            ("area", &["north", "south", "east", "west", "centre"]),
            ("pricerange", &["cheap", "moderate", "expensive"]),
        ],
        &[
            ("name", &["golden curry", "pizza hut fen ditton", "the copper kettle", "midsummer house"]),
            ("booktime", &["18 30", "19 45", "12 15"]),
            ("bookpeople", &["party of 3", "group of 6", "two adults"]),
        ],
    ),
    (
        "taxi",
        &[("cartype", &["sedan", "estate", "minivan"])],
        &[
            ("leaveat", &["09 00", "11 30", "14 15", "after lunch"]),
            ("arriveby", &["by 17 00", "before noon", "by half past six"]),
            ("destination", &["kings college", "the grafton centre", "addenbrookes hospital"]),
        ],
    ),
    (
        "train",
        &[
            ("day", &["monday", "tuesday", "friday", "sunday"]),
            ("departure", &["cambridge", "london", "ely", "norwich"]),
        ],
        &[
            ("leaveat", &["05 11", "after 08 45", "around 13 00"]),
            ("arriveby", &["by 20 30", "before 10 15"]),
        ],
    ),
    (
        "attraction",
        &[
            ("type", &["museum", "park", "theatre", "college"]),
            ("area", &["north", "south", "east", "west", "centre"]),
        ],
        &[("name", &["whipple museum", "castle galleries", "jesus green pool", "the junction"])],
    ),
];

/// Words of no consequence for either the labels or the experts.
const NOISE: [&str; 48] = [
    "okay", "so", "well", "just", "maybe", "then", "now", "thing", "there", "here", "think", "know", "want", "see",
    "going", "still", "really", "quite", "some", "any", "other", "another", "that", "this", "those", "what", "which",
    "when", "where", "how", "could", "should", "might", "will", "can", "get", "find", "book", "make", "tell", "let",
    "me", "us", "we", "you", "it", "sure", "great",
];
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationConfig {
    pub seed: u64,
    pub holdout_dialogues: usize,
    pub test_dialogues: usize,
    pub min_turns: usize,
    pub max_turns: usize,
    /// Probability that a turn belongs to cluster B.
    pub cluster_b_share: f64,
    /// Puts every turn in cluster A.
    pub single_cluster: bool,
    /// Draws the cluster once per dialogue instead of once per turn.
    pub per_dialogue: bool,
    /// Distinct cluster markers in each user utterance.
    pub markers_per_turn: usize,
    /// Inclusive range of irrelevant words added to each utterance.
    pub noise_words: (usize, usize),
    pub dim: usize,
    pub k: usize,
    pub pool_size: usize,
    pub supervision: SupervisionKind,
    pub train: TrainConfig,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            holdout_dialogues: 100,
            test_dialogues: 200,
            min_turns: 3,
            max_turns: 6,
            cluster_b_share: 0.5,
            single_cluster: false,
            per_dialogue: true,
            markers_per_turn: 1,
            noise_words: (30, 50),
            dim: 256,
            k: DEFAULT_K,
            pool_size: 100,
            supervision: SupervisionKind::TaskExpert,
            train: TrainConfig {
                margin: 0.0,
                learning_rate: 5.0,
                epochs: 200,
                ..TrainConfig::default()
            },
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.holdout_dialogues == 0 || self.test_dialogues == 0 {
            return Err(Error::Config("simulation needs hold-out and test dialogues".into()));
        }
        if self.min_turns == 0 || self.min_turns > self.max_turns {
            return Err(Error::Config("turn range must satisfy 1 <= min_turns <= max_turns".into()));
        }
        if self.markers_per_turn == 0 || self.markers_per_turn > CLUSTER_A_MARKERS.len() {
            return Err(Error::Config(format!(
                "markers_per_turn must be in 1..={}",
                CLUSTER_A_MARKERS.len()
            )));
        }
        if self.noise_words.0 > self.noise_words.1 {
            return Err(Error::Config("noise_words range is empty".into()));
        }
        if !(0.0..=1.0).contains(&self.cluster_b_share) {
            return Err(Error::Config("cluster_b_share must be in [0, 1]".into()));
        }
        if self.k == 0 || self.pool_size == 0 {
            return Err(Error::Config("k and pool_size must be at least 1".into()));
        }
        self.train.validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticCorpus {
    pub holdout: Vec<Dialogue>,
    pub test: Vec<Dialogue>,
}

impl SyntheticCorpus {
    /// Gold belief of every turn in both splits.
    pub fn gold(&self) -> HashMap<TurnKey, TurnBelief> {
        self.holdout
            .iter()
            .chain(&self.test)
            .flat_map(|d| (0..d.turns.len()).map(move |t| (d.turn_key(t), d.turns[t].gold_tlb.clone())))
            .collect()
    }
}

fn noise<R: Rng>(rng: &mut R, lo: usize, hi: usize) -> Vec<String> {
    let n = rng.random_range(lo..=hi);
    (0..n).map(|_| NOISE.choose(rng).expect("noise").to_string()).collect()
}

fn dialogue<R: Rng>(id: String, config: &SimulationConfig, rng: &mut R) -> Dialogue {
    let n_domains = rng.random_range(1..=2);
    let picked: Vec<usize> = rand::seq::index::sample(rng, DOMAINS.len(), n_domains).into_vec();
    let domains: BTreeSet<String> = picked.iter().map(|&i| DOMAINS[i].0.to_string()).collect();
    let n_turns = rng.random_range(config.min_turns..=config.max_turns);
    let mut turns = Vec::with_capacity(n_turns);
    let dialogue_b = !config.single_cluster && rng.random_bool(config.cluster_b_share);
    for t in 0..n_turns {
        let cluster_b = if config.per_dialogue {
            dialogue_b
        } else {
            !config.single_cluster && rng.random_bool(config.cluster_b_share)
        };
        let (vocabulary, family) = {
            let (_, categorical, open) = DOMAINS[*picked.choose(rng).expect("domains")];
            if cluster_b {
                (&CLUSTER_B_MARKERS, open)
            } else {
                (&CLUSTER_A_MARKERS, categorical)
            }
        };
        let domain = DOMAINS.iter().find(|d| std::ptr::eq(d.1, family) || std::ptr::eq(d.2, family)).expect("domain").0;

        let mut words: Vec<String> = vocabulary
            .choose_multiple(rng, config.markers_per_turn)
            .map(|m| m.to_string())
            .collect();
        let mut pairs = Vec::new();
        // One turn in ten expresses nothing new.
        if rng.random_bool(0.9) {
            let n_slots = rng.random_range(1..=2.min(family.len()));
            for i in rand::seq::index::sample(rng, family.len(), n_slots) {
                let (slot, values) = family[i];
                let value = values.choose(rng).expect("values");
                words.extend([domain, slot, value].map(String::from));
                pairs.push((format!("{domain}-{slot}"), value.to_string()));
            }
        } else {
            words.extend(["no", "that", "is", "all"].map(String::from));
        }
        words.extend(noise(rng, config.noise_words.0, config.noise_words.1));
        words.shuffle(rng);

        turns.push(Turn {
            turn_id: t as u32,
            system_utterance: if t == 0 {
                String::new()
            } else {
                noise(rng, config.noise_words.0, config.noise_words.1).join(" ")
            },
            user_utterance: words.join(" "),
            gold_tlb: TurnBelief::from_pairs(pairs.iter().map(|(s, v)| (s.as_str(), v.as_str())))
                .expect("generated slots are valid"),
        });
    }
    Dialogue {
        dialogue_id: id,
        domains,
        turns,
    }
}

fn split<R: Rng>(prefix: &str, n: usize, config: &SimulationConfig, rng: &mut R) -> Vec<Dialogue> {
    (0..n).map(|i| dialogue(format!("{prefix}{i:04}"), config, rng)).collect()
}

pub fn generate_corpus(config: &SimulationConfig) -> Result<SyntheticCorpus> {
    config.validate()?;
    let mut rng: ChaCha8Rng = substream(config.seed, "corpus");
    Ok(SyntheticCorpus {
        holdout: split("holdout-", config.holdout_dialogues, config, &mut rng),
        test: split("test-", config.test_dialogues, config, &mut rng),
    })
}

fn markers(list: &[&str]) -> BTreeSet<String> {
    list.iter().map(|s| s.to_string()).collect()
}

/// SLM competent on cluster A markers, LLM on cluster B markers, each at
/// 0.95 inside its specialty and 0.30 outside.
pub fn cluster_profiles() -> (ExpertProfile, ExpertProfile) {
    let profile = |tokens| ExpertProfile {
        competence: Competence::AnyToken(tokens),
        accuracy_in: 0.95,
        accuracy_out: 0.30,
        confidence_when_correct: 0.9,
        confidence_when_wrong: 0.35,
    };
    (profile(markers(&CLUSTER_A_MARKERS)), profile(markers(&CLUSTER_B_MARKERS)))
}

pub fn cluster_experts(corpus: &SyntheticCorpus, seed: u64) -> Result<ExpertSet> {
    let gold = Arc::new(corpus.gold());
    let (slm, llm) = cluster_profiles();
    let experts: Vec<Arc<dyn Expert>> = vec![
        Arc::new(SyntheticExpert::new(ExpertId::slm(), slm, seed, gold.clone())?),
        Arc::new(SyntheticExpert::new(ExpertId::llm(), llm, seed, gold)?),
    ];
    ExpertSet::new(experts)
}

/// Artifacts and routed runs of one simulation.
pub struct Simulation {
    pub corpus: SyntheticCorpus,
    pub embedder: HashingEmbedder,
    pub holdout_predictions: PredictionTable,
    pub pairs: PairSet,
    pub trained: TrainedAdapter,
    /// Pools under the trained adapter.
    pub pools: PoolAssignment,
    /// Pools under the identity adapter.
    pub untrained_pools: PoolAssignment,
    /// Runs keyed by name: `slm`, `llm`, `oracle`, `retrieval` (trained
    /// adapter) and `retrieval-untrained`.
    pub runs: BTreeMap<String, RoutedRun>,
    /// Oracle choice on every test turn, from the test predictions.
    pub oracle_labels: HashMap<TurnKey, ExpertId>,
    pub costs: CostTable,
}

pub fn run_simulation(config: &SimulationConfig) -> Result<Simulation> {
    let corpus = generate_corpus(config)?;
    let experts = cluster_experts(&corpus, config.seed)?;
    let roster = experts.roster();
    let embedder = HashingEmbedder::new(config.dim, config.seed)?;
    let holdout = labeled_turns(&corpus.holdout);
    let holdout_predictions = PredictionTable::collect(&experts, holdout.iter().map(|t| &t.triplet))?;

    let embed = Embedder::Hashing(embedder.clone());
    let base = embed_turns(&embed, &holdout)?;
    let pairs = mine_supervision(config.supervision, &holdout, &base, &holdout_predictions, &roster, config.train.l)?;
    let trained = fit_adapter(config.supervision, &pairs, &base, config.dim, &config.train)?;
    let identity = ProjectionAdapter::identity(config.dim);
    let pools = prepare_pools(&holdout, &roster, &holdout_predictions, &base, &trained.adapter, config.pool_size, config.seed)?;
    let untrained_pools = prepare_pools(&holdout, &roster, &holdout_predictions, &base, &identity, config.pool_size, config.seed)?;

    // Synthetic expert costs: the LLM constant and a small SLM figure.
    let costs = CostTable::slm_llm(0.0371);
    let pipeline = PipelineConfig {
        prior: PriorState::Predicted,
        seed: config.seed,
        costs: costs.clone(),
    };
    let retrieval = |adapter: &ProjectionAdapter, pools: &PoolAssignment| Router::Retrieval {
        embedder: embed.clone(),
        adapter: adapter.clone(),
        pools: pools.pools.clone(),
        k: config.k,
    };
    let routers = [
        ("slm", Router::Constant(ExpertId::slm())),
        ("llm", Router::Constant(ExpertId::llm())),
        ("oracle", Router::Oracle),
        ("retrieval", retrieval(&trained.adapter, &pools)),
        ("retrieval-untrained", retrieval(&identity, &untrained_pools)),
    ];
    let mut runs = BTreeMap::new();
    for (name, router) in &routers {
        runs.insert(name.to_string(), run_pipeline(&corpus.test, &experts, router, &pipeline)?);
    }
    let oracle_labels = runs["oracle"]
        .records
        .iter()
        .map(|r| (r.key.clone(), r.decision.chosen.clone()))
        .collect();

    Ok(Simulation {
        corpus,
        embedder,
        holdout_predictions,
        pairs,
        trained,
        pools,
        untrained_pools,
        runs,
        oracle_labels,
        costs,
    })
}

/// Fraction of turns in `run` routed to the oracle's choice.
pub fn oracle_agreement(run: &RoutedRun, oracle_labels: &HashMap<TurnKey, ExpertId>) -> Result<f64> {
    if run.is_empty() {
        return Err(Error::Empty("routed run"));
    }
    let mut agree = 0usize;
    for r in &run.records {
        let label = oracle_labels
            .get(&r.key)
            .ok_or_else(|| Error::Coverage(format!("no oracle label for `{}`", r.key)))?;
        if label == &r.decision.chosen {
            agree += 1;
        }
    }
    Ok(agree as f64 / run.len() as f64)
}
