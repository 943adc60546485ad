//! Run configuration file and command-line overrides.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context};
use orchestra_core::embedding::HashingEmbedder;
use orchestra_core::metrics::{CostTable, ROUTER_TERAFLOPS_PER_TURN};
use orchestra_core::routing::{PriorState, DEFAULT_K};
use orchestra_core::simulate::SimulationConfig;
use orchestra_core::supervision::TrainConfig;
use orchestra_core::workflow::SupervisionKind;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum RouterKind {
    #[default]
    Retrieval,
    Oracle,
    Cascade,
    Classifier,
    /// Always picks the named expert.
    Constant(String),
}

impl RouterKind {
    /// File stem of the run produced with this router.
    pub fn label(&self) -> String {
        match self {
            RouterKind::Constant(name) => format!("constant-{name}"),
            other => other.to_string(),
        }
    }
}

impl fmt::Display for RouterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RouterKind::Retrieval => f.write_str("retrieval"),
            RouterKind::Oracle => f.write_str("oracle"),
            RouterKind::Cascade => f.write_str("cascade"),
            RouterKind::Classifier => f.write_str("classifier"),
            RouterKind::Constant(name) => write!(f, "constant:{name}"),
        }
    }
}

impl FromStr for RouterKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "retrieval" => Ok(RouterKind::Retrieval),
            "oracle" => Ok(RouterKind::Oracle),
            "cascade" => Ok(RouterKind::Cascade),
            "classifier" => Ok(RouterKind::Classifier),
            other => match other.strip_prefix("constant:") {
                Some(name) if !name.is_empty() => Ok(RouterKind::Constant(name.to_string())),
                _ => Err(format!(
                    "unknown router `{other}` (expected retrieval, oracle, cascade, classifier or constant:<expert>)"
                )),
            },
        }
    }
}

impl TryFrom<String> for RouterKind {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<RouterKind> for String {
    fn from(kind: RouterKind) -> String {
        kind.to_string()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    /// Test dialogues.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corpus: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub holdout: Option<PathBuf>,
    /// Imported embedding store; the hashing embedder is used when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub adapter: Option<PathBuf>,
    /// Directory of pool files.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pools: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpertConfig {
    pub name: String,
    /// Predictions file covering hold-out and test turns.
    pub predictions: PathBuf,
    /// TeraFLOPs per invocation.
    pub cost: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbedderConfig {
    pub dim: usize,
    /// Hashing seed; defaults to the run seed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        Self { dim: 256, seed: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    pub router: f64,
}

impl Default for CostConfig {
    fn default() -> Self {
        Self {
            router: ROUTER_TERAFLOPS_PER_TURN,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub router: RouterKind,
    pub supervision: SupervisionKind,
    pub prior: PriorState,
    pub k: usize,
    pub l: usize,
    pub pool_size: usize,
    pub margin: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Fixed cascade threshold; tuned on the hold-out when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cascade_threshold: Option<f64>,
    /// Enables the in-domain / OOD breakdown in reports.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub training_domains: Option<Vec<String>>,
    pub paths: Paths,
    pub embedder: EmbedderConfig,
    pub cost: CostConfig,
    pub experts: Vec<ExpertConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        Self {
            seed: 0,
            router: RouterKind::default(),
            supervision: SupervisionKind::default(),
            prior: PriorState::default(),
            k: DEFAULT_K,
            l: train.l,
            pool_size: 100,
            margin: train.margin,
            learning_rate: train.learning_rate,
            epochs: train.epochs,
            cascade_threshold: None,
            training_domains: None,
            paths: Paths::default(),
            embedder: EmbedderConfig::default(),
            cost: CostConfig::default(),
            experts: Vec::new(),
            simulation: None,
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub router: Option<RouterKind>,
    pub supervision: Option<SupervisionKind>,
}

impl RunConfig {
    /// Parses `path` and resolves relative paths against its directory.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config `{}`", path.display()))?;
        let mut config: RunConfig =
            toml::from_str(&text).with_context(|| format!("parsing config `{}`", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve(base);
        Ok(config)
    }

    fn resolve(&mut self, base: &Path) {
        let join = |p: &mut Option<PathBuf>| {
            if let Some(p) = p {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        };
        join(&mut self.paths.corpus);
        join(&mut self.paths.holdout);
        join(&mut self.paths.embeddings);
        join(&mut self.paths.adapter);
        join(&mut self.paths.pools);
        join(&mut self.paths.out);
        for e in &mut self.experts {
            if e.predictions.is_relative() {
                e.predictions = base.join(&e.predictions);
            }
        }
    }

    pub fn apply(&mut self, overrides: &Overrides) {
        if let Some(seed) = overrides.seed {
            self.seed = seed;
            if let Some(sim) = &mut self.simulation {
                sim.seed = seed;
            }
        }
        if let Some(out) = &overrides.out {
            self.paths.out = Some(out.clone());
        }
        if let Some(router) = &overrides.router {
            self.router = router.clone();
        }
        if let Some(kind) = overrides.supervision {
            self.supervision = kind;
        }
    }

    /// Checks hyperparameters and that every referenced input exists.
    pub fn validate_inputs(&self) -> anyhow::Result<()> {
        for (name, v) in [("k", self.k), ("l", self.l), ("pool_size", self.pool_size)] {
            if v < 1 {
                bail!("{name} must be at least 1");
            }
        }
        self.train_config().validate()?;
        if self.experts.is_empty() {
            bail!("no experts configured");
        }
        let mut names = BTreeSet::new();
        for e in &self.experts {
            if !names.insert(e.name.as_str()) {
                bail!("expert `{}` is configured twice", e.name);
            }
        }
        if let RouterKind::Constant(name) = &self.router {
            if !names.contains(name.as_str()) {
                bail!("constant router names unknown expert `{name}`");
            }
        }
        let mut inputs = vec![("corpus", self.corpus()?), ("holdout", self.holdout()?)];
        if let Some(store) = &self.paths.embeddings {
            inputs.push(("embeddings", store.as_path()));
        }
        for e in &self.experts {
            inputs.push(("predictions", e.predictions.as_path()));
        }
        for (what, path) in inputs {
            if !path.exists() {
                bail!("{what} file `{}` does not exist", path.display());
            }
        }
        self.costs()?;
        Ok(())
    }

    pub fn corpus(&self) -> anyhow::Result<&Path> {
        self.paths.corpus.as_deref().ok_or_else(|| anyhow!("paths.corpus is not set"))
    }

    pub fn holdout(&self) -> anyhow::Result<&Path> {
        self.paths.holdout.as_deref().ok_or_else(|| anyhow!("paths.holdout is not set"))
    }

    pub fn out_dir(&self) -> PathBuf {
        self.paths.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    /// Base embedding store: the imported one, or the one `embed` writes.
    pub fn store_path(&self) -> PathBuf {
        self.paths
            .embeddings
            .clone()
            .unwrap_or_else(|| self.out_dir().join("embeddings.jsonl"))
    }

    pub fn adapter_path(&self) -> PathBuf {
        self.paths.adapter.clone().unwrap_or_else(|| self.out_dir().join("adapter.json"))
    }

    pub fn pools_dir(&self) -> PathBuf {
        self.paths.pools.clone().unwrap_or_else(|| self.out_dir().join("pools"))
    }

    pub fn run_path(&self, label: &str) -> PathBuf {
        self.out_dir().join("runs").join(format!("{label}.jsonl"))
    }

    pub fn hashing_embedder(&self) -> anyhow::Result<HashingEmbedder> {
        Ok(HashingEmbedder::new(self.embedder.dim, self.embedder.seed.unwrap_or(self.seed))?)
    }

    pub fn imports_store(&self) -> bool {
        self.paths.embeddings.is_some()
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            l: self.l,
            margin: self.margin,
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            seed: orchestra_core::rng::substream_seed(self.seed, "training"),
        }
    }

    pub fn costs(&self) -> anyhow::Result<CostTable> {
        let experts = self.experts.iter().map(|e| (e.name.clone(), e.cost)).collect();
        Ok(CostTable::new(experts, self.cost.router)?)
    }

    pub fn training_domains(&self) -> Option<BTreeSet<String>> {
        self.training_domains
            .as_ref()
            .map(|d| d.iter().map(|s| orchestra_core::dialogue::canonicalize_value(s)).collect())
    }
}
