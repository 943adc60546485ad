use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, Context};
use orchestra_core::dialogue::{labeled_turns, parse_dialogues, write_dialogues, Dialogue, LabeledTurn, TurnKey};
use orchestra_core::embedding::{Embedder, EmbeddingStore, EmbeddingVector, ProjectionAdapter};
use orchestra_core::experts::{
    expert_labels, judge_correct, read_pool, read_prediction_records, write_pool, write_predictions, Expert,
    ExpertPrediction, ExpertSet, PredictionTable, ReplayExpert, Roster,
};
use orchestra_core::metrics::{dst_jga, make_report, tlb_jga, total_cost, CostTable};
use orchestra_core::routing::{
    read_run, run_pipeline, train_classifier_router, tune_cascade_threshold, write_run, CascadeSample,
    ClassifierConfig, PipelineConfig, Router, RoutedRun,
};
use orchestra_core::rng::substream_seed;
use orchestra_core::simulate::{cluster_experts, oracle_agreement, run_simulation, Simulation, SimulationConfig};
use orchestra_core::workflow::{embed_turns, fit_adapter, mine_supervision, prepare_pools};
use serde::Serialize;

use crate::config::{EmbedderConfig, ExpertConfig, Paths, RouterKind, RunConfig};
use crate::Failure;

type CmdResult<T = ()> = Result<T, Failure>;

fn open(path: &Path) -> CmdResult<BufReader<File>> {
    let file = File::open(path).with_context(|| format!("opening `{}`", path.display()))?;
    Ok(BufReader::new(file))
}

fn create(path: &Path) -> CmdResult<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating `{}`", dir.display()))?;
    }
    let file = File::create(path).with_context(|| format!("creating `{}`", path.display()))?;
    Ok(BufWriter::new(file))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CmdResult {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(anyhow::Error::from)?;
    w.write_all(b"\n").map_err(anyhow::Error::from)?;
    w.flush().map_err(anyhow::Error::from)?;
    Ok(())
}

fn write_with<F>(path: &Path, f: F) -> CmdResult
where
    F: FnOnce(&mut BufWriter<File>) -> orchestra_core::Result<()>,
{
    let mut w = create(path)?;
    f(&mut w).map_err(|e| Failure::from(e).context(format!("writing `{}`", path.display())))?;
    w.flush().map_err(anyhow::Error::from)?;
    Ok(())
}

fn read_corpus(path: &Path) -> CmdResult<(Vec<Dialogue>, usize)> {
    let parsed = parse_dialogues(open(path)?).map_err(|e| Failure::from(e).context(format!("in `{}`", path.display())))?;
    Ok((parsed.dialogues, parsed.dropped_values))
}

/// Parsed inputs of a configured run.
struct Inputs {
    test: Vec<Dialogue>,
    holdout: Vec<Dialogue>,
    experts: ExpertSet,
    roster: Roster,
}

impl Inputs {
    fn holdout_turns(&self) -> Vec<LabeledTurn> {
        labeled_turns(&self.holdout)
    }

    fn holdout_predictions(&self, turns: &[LabeledTurn]) -> CmdResult<PredictionTable> {
        Ok(PredictionTable::collect(&self.experts, turns.iter().map(|t| &t.triplet))?)
    }
}

/// Problems and notes gathered while checking the inputs.
#[derive(Default)]
struct Diagnostics {
    notes: Vec<String>,
    warnings: Vec<String>,
    errors: Vec<String>,
}

fn inspect(config: &RunConfig) -> CmdResult<(Diagnostics, Option<Inputs>)> {
    config.validate_inputs().map_err(Failure::Input)?;
    let mut diag = Diagnostics::default();
    let (test, dropped_test) = read_corpus(config.corpus()?)?;
    let (holdout, dropped_holdout) = read_corpus(config.holdout()?)?;
    let count = |ds: &[Dialogue]| ds.iter().map(|d| d.turns.len()).sum::<usize>();
    diag.notes.push(format!("test corpus: {} dialogues, {} turns", test.len(), count(&test)));
    diag.notes.push(format!("hold-out corpus: {} dialogues, {} turns", holdout.len(), count(&holdout)));
    if dropped_test + dropped_holdout > 0 {
        diag.warnings.push(format!(
            "dropped {} null gold values during canonicalization",
            dropped_test + dropped_holdout
        ));
    }
    if test.is_empty() {
        diag.errors.push("test corpus has no dialogues".into());
    }
    if holdout.is_empty() {
        diag.errors.push("hold-out corpus has no dialogues".into());
    }
    let test_ids: HashSet<&str> = test.iter().map(|d| d.dialogue_id.as_str()).collect();
    for d in &holdout {
        if test_ids.contains(d.dialogue_id.as_str()) {
            diag.errors.push(format!("dialogue `{}` is in both the hold-out and the test corpus", d.dialogue_id));
        }
    }

    let names: Vec<&str> = config.experts.iter().map(|e| e.name.as_str()).collect();
    let roster = Roster::from_names(&names)?;
    let keys: Vec<TurnKey> = holdout
        .iter()
        .chain(&test)
        .flat_map(|d| (0..d.turns.len()).map(move |t| d.turn_key(t)))
        .collect();
    let key_set: HashSet<&TurnKey> = keys.iter().collect();
    let mut experts: Vec<Arc<dyn Expert>> = Vec::new();
    for (e, id) in config.experts.iter().zip(roster.ids()) {
        let records = read_prediction_records(open(&e.predictions)?)
            .map_err(|err| Failure::from(err).context(format!("in `{}`", e.predictions.display())))?;
        let foreign = records.iter().filter(|r| r.expert != e.name).count();
        if foreign > 0 {
            diag.warnings.push(format!(
                "{}: skipped {foreign} records of other experts",
                e.predictions.display()
            ));
        }
        let expert = ReplayExpert::load(id.clone(), open(&e.predictions)?)
            .map_err(|err| Failure::from(err).context(format!("in `{}`", e.predictions.display())))?;
        diag.notes.push(format!("expert `{}`: {} predictions", e.name, expert.len()));
        let missing: Vec<&TurnKey> = keys.iter().filter(|k| !expert.covers(k)).collect();
        for key in missing.iter().take(20) {
            diag.errors.push(format!("expert `{}` has no prediction for turn `{key}`", e.name));
        }
        if missing.len() > 20 {
            diag.errors.push(format!("expert `{}`: {} more turns without predictions", e.name, missing.len() - 20));
        }
        let extra = records
            .iter()
            .filter(|r| r.expert == e.name && !key_set.contains(&TurnKey::new(&r.dialogue_id, r.turn_id)))
            .count();
        if extra > 0 {
            diag.warnings.push(format!("expert `{}`: {extra} predictions for turns not in either corpus", e.name));
        }
        if config.router == RouterKind::Cascade && id == roster.preferred() {
            let unconfident = records
                .iter()
                .filter(|r| r.expert == e.name && r.confidence.is_none())
                .count();
            if unconfident > 0 {
                diag.errors.push(format!(
                    "cascade routing needs confidences from `{}`; {unconfident} predictions have none",
                    e.name
                ));
            }
        }
        experts.push(Arc::new(expert));
    }
    if matches!(config.router, RouterKind::Cascade | RouterKind::Classifier) && roster.ids().len() != 2 {
        diag.errors.push(format!("{} routing needs exactly two experts", config.router));
    }
    let inputs = diag.errors.is_empty().then(|| -> CmdResult<Inputs> {
        Ok(Inputs {
            test,
            holdout,
            experts: ExpertSet::new(experts)?,
            roster,
        })
    });
    Ok((diag, inputs.transpose()?))
}

fn load_inputs(config: &RunConfig) -> CmdResult<Inputs> {
    let (diag, inputs) = inspect(config)?;
    for w in &diag.warnings {
        log::warn!("{w}");
    }
    inputs.ok_or_else(|| Failure::Input(anyhow!("{}", diag.errors.join("\n"))))
}

pub fn validate(config: &RunConfig) -> CmdResult {
    let (diag, _) = inspect(config)?;
    for n in &diag.notes {
        println!("{n}");
    }
    for w in &diag.warnings {
        println!("warning: {w}");
    }
    for e in &diag.errors {
        println!("error: {e}");
    }
    if diag.errors.is_empty() {
        println!("ok");
        Ok(())
    } else {
        Err(Failure::Input(anyhow!("{} problems found", diag.errors.len())))
    }
}

fn load_store(path: &Path) -> CmdResult<EmbeddingStore> {
    if !path.exists() {
        return Err(Failure::Input(anyhow!(
            "embedding store `{}` does not exist; run `embed` first",
            path.display()
        )));
    }
    EmbeddingStore::load(open(path)?).map_err(|e| Failure::from(e).context(format!("in `{}`", path.display())))
}

fn all_turns(inputs: &Inputs) -> Vec<LabeledTurn> {
    let mut turns = inputs.holdout_turns();
    turns.extend(labeled_turns(&inputs.test));
    turns
}

pub fn embed(config: &RunConfig) -> CmdResult {
    let inputs = load_inputs(config)?;
    let turns = all_turns(&inputs);
    if config.imports_store() {
        let store = load_store(&config.store_path())?;
        let missing: Vec<String> = turns
            .iter()
            .map(LabeledTurn::key)
            .filter(|k| !store.contains(k))
            .map(|k| k.to_string())
            .collect();
        if let Some(first) = missing.first() {
            return Err(Failure::Input(anyhow!(
                "embedding store lacks {} turns, first `{first}`",
                missing.len()
            )));
        }
        println!("store covers all {} turns (dim {})", turns.len(), store.dim());
        return Ok(());
    }
    let embedder = Embedder::Hashing(config.hashing_embedder()?);
    let vectors = embed_turns(&embedder, &turns)?;
    let mut store = EmbeddingStore::new(embedder.dim());
    for (key, v) in vectors {
        store.insert(key, v)?;
    }
    let path = config.store_path();
    write_with(&path, |w| store.write(w))?;
    println!("embedded {} turns into {}", store.len(), path.display());
    Ok(())
}

fn base_embeddings(config: &RunConfig, turns: &[LabeledTurn]) -> CmdResult<(HashMap<TurnKey, EmbeddingVector>, usize)> {
    let store = load_store(&config.store_path())?;
    let mut out = HashMap::with_capacity(turns.len());
    for t in turns {
        let key = t.key();
        out.insert(key.clone(), store.lookup(&key)?.clone());
    }
    Ok((out, store.dim()))
}

pub fn mine_and_train(config: &RunConfig) -> CmdResult {
    let inputs = load_inputs(config)?;
    let holdout = inputs.holdout_turns();
    let table = inputs.holdout_predictions(&holdout)?;
    let (base, dim) = base_embeddings(config, &holdout)?;
    let pairs = mine_supervision(config.supervision, &holdout, &base, &table, &inputs.roster, config.l)?;
    let out = config.out_dir();
    write_with(&out.join("pairs.jsonl"), |w| pairs.write(w))?;
    let trained = fit_adapter(config.supervision, &pairs, &base, dim, &config.train_config())?;
    write_json(&config.adapter_path(), &trained.adapter)?;
    write_json(&out.join("loss_history.json"), &trained.loss_history)?;
    println!(
        "supervision {}: {} positive and {} negative pairs",
        config.supervision,
        pairs.positives().len(),
        pairs.negatives().len()
    );
    match (trained.loss_history.first(), trained.loss_history.last()) {
        (Some(first), Some(last)) => println!("loss {first:.6} -> {last:.6} over {} epochs", config.epochs),
        _ => println!("identity adapter written"),
    }
    Ok(())
}

fn load_adapter(config: &RunConfig) -> CmdResult<ProjectionAdapter> {
    let path = config.adapter_path();
    if !path.exists() {
        return Err(Failure::Input(anyhow!(
            "adapter `{}` does not exist; run `mine-and-train` first",
            path.display()
        )));
    }
    let adapter = serde_json::from_reader(open(&path)?).with_context(|| format!("reading `{}`", path.display()))?;
    Ok(adapter)
}

fn pool_path(config: &RunConfig, expert: &str) -> PathBuf {
    config.pools_dir().join(format!("{expert}.json"))
}

pub fn build_pools(config: &RunConfig) -> CmdResult {
    let inputs = load_inputs(config)?;
    let holdout = inputs.holdout_turns();
    let table = inputs.holdout_predictions(&holdout)?;
    let (base, _) = base_embeddings(config, &holdout)?;
    let adapter = load_adapter(config)?;
    let assignment = prepare_pools(&holdout, &inputs.roster, &table, &base, &adapter, config.pool_size, config.seed)?;
    for pool in &assignment.pools {
        write_with(&pool_path(config, &pool.expert.name), |w| write_pool(w, pool))?;
        println!("pool `{}`: {} entries", pool.expert, pool.len());
    }
    let excluded: Vec<String> = assignment.excluded.iter().map(|k| k.to_string()).collect();
    write_json(&config.pools_dir().join("excluded.json"), &excluded)?;
    println!("excluded: {} turns", excluded.len());
    Ok(())
}

fn embedder(config: &RunConfig) -> CmdResult<Embedder> {
    if config.imports_store() {
        Ok(Embedder::Store(load_store(&config.store_path())?))
    } else {
        Ok(Embedder::Hashing(config.hashing_embedder()?))
    }
}

fn build_router(config: &RunConfig, inputs: &Inputs) -> CmdResult<Router> {
    let ids = inputs.roster.ids();
    Ok(match &config.router {
        RouterKind::Retrieval => {
            let mut pools = Vec::with_capacity(ids.len());
            for id in ids {
                let path = pool_path(config, &id.name);
                if !path.exists() {
                    return Err(Failure::Input(anyhow!(
                        "pool file `{}` does not exist; run `build-pools` first",
                        path.display()
                    )));
                }
                pools.push(
                    read_pool(open(&path)?, &inputs.roster)
                        .map_err(|e| Failure::from(e).context(format!("in `{}`", path.display())))?,
                );
            }
            Router::Retrieval {
                embedder: embedder(config)?,
                adapter: load_adapter(config)?,
                pools,
                k: config.k,
            }
        }
        RouterKind::Oracle => Router::Oracle,
        RouterKind::Constant(name) => Router::Constant(inputs.roster.get(name)?.clone()),
        RouterKind::Cascade => {
            let (slm, llm) = (&ids[0], &ids[1]);
            let threshold = match config.cascade_threshold {
                Some(t) => t,
                None => {
                    let holdout = inputs.holdout_turns();
                    let table = inputs.holdout_predictions(&holdout)?;
                    let mut samples = Vec::with_capacity(holdout.len());
                    for t in &holdout {
                        let key = t.key();
                        let s = table.get(&key, slm)?;
                        let l = table.get(&key, llm)?;
                        samples.push(CascadeSample {
                            slm_confidence: s.confidence.ok_or_else(|| {
                                orchestra_core::Error::MissingConfidence {
                                    expert: slm.name.clone(),
                                    key: key.to_string(),
                                }
                            })?,
                            slm_correct: judge_correct(&s.tlb, &t.gold_tlb),
                            llm_correct: judge_correct(&l.tlb, &t.gold_tlb),
                        });
                    }
                    let t = tune_cascade_threshold(&samples)?;
                    println!("cascade threshold tuned on the hold-out: {t}");
                    t
                }
            };
            Router::Cascade {
                threshold,
                slm: slm.clone(),
                llm: llm.clone(),
            }
        }
        RouterKind::Classifier => {
            let holdout = inputs.holdout_turns();
            let table = inputs.holdout_predictions(&holdout)?;
            let (base, _) = base_embeddings(config, &holdout)?;
            let labels = expert_labels(&holdout, &table, ids)?;
            let examples: Vec<(EmbeddingVector, _)> = holdout
                .iter()
                .zip(labels)
                .map(|(t, label)| (base[&t.key()].clone(), label))
                .collect();
            let model = train_classifier_router(
                &examples,
                (&ids[0], &ids[1]),
                &ClassifierConfig {
                    seed: substream_seed(config.seed, "classifier"),
                    ..ClassifierConfig::default()
                },
            )?;
            Router::Classifier {
                embedder: embedder(config)?,
                model,
            }
        }
    })
}

pub fn route(config: &RunConfig) -> CmdResult {
    let inputs = load_inputs(config)?;
    let router = build_router(config, &inputs)?;
    let pipeline = PipelineConfig {
        prior: config.prior,
        seed: config.seed,
        costs: config.costs()?,
    };
    let run = run_pipeline(&inputs.test, &inputs.experts, &router, &pipeline)?;
    let path = config.run_path(&config.router.label());
    write_with(&path, |w| write_run(w, &run))?;
    println!("routed {} turns with {} into {}", run.len(), config.router, path.display());
    Ok(())
}

/// One point of the accuracy-versus-compute series.
#[derive(Serialize)]
struct SeriesPoint {
    run: String,
    router: String,
    tlb_jga: f64,
    dst_jga: f64,
    teraflops: f64,
}

fn series_point(name: &str, run: &RoutedRun, gold: &[Dialogue], costs: &CostTable) -> CmdResult<SeriesPoint> {
    Ok(SeriesPoint {
        run: name.to_string(),
        router: run.snapshot.router.clone(),
        tlb_jga: tlb_jga(run, gold)?,
        dst_jga: dst_jga(run, gold)?,
        teraflops: total_cost(run, costs)?,
    })
}

pub fn report(config: &RunConfig) -> CmdResult {
    config.validate_inputs().map_err(Failure::Input)?;
    let (test, _) = read_corpus(config.corpus()?)?;
    let names: Vec<&str> = config.experts.iter().map(|e| e.name.as_str()).collect();
    let roster = Roster::from_names(&names)?;
    let costs = config.costs()?;
    let label = config.router.label();
    let path = config.run_path(&label);
    if !path.exists() {
        return Err(Failure::Input(anyhow!("run file `{}` does not exist; run `route` first", path.display())));
    }
    let run = read_run(open(&path)?, &roster).map_err(|e| Failure::from(e).context(format!("in `{}`", path.display())))?;
    let domains = config.training_domains();
    let report = make_report(&run, &test, &costs, domains.as_ref())?;
    let out = config.out_dir();
    write_json(&out.join("reports").join(format!("{label}.json")), &report)?;
    println!(
        "{label}: TLB JGA {:.4}, DST JGA {:.4}, {:.4e} TFLOPs",
        report.tlb_jga, report.dst_jga, report.total_teraflops
    );
    for (expert, share) in &report.assignment_ratio {
        println!("  {expert}: {:.1}% of turns", share * 100.0);
    }

    // Every run in the output directory becomes one point of the series.
    let mut points = Vec::new();
    let runs_dir = out.join("runs");
    let mut files: Vec<PathBuf> = fs::read_dir(&runs_dir)
        .with_context(|| format!("listing `{}`", runs_dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    files.sort();
    for file in files {
        let name = file.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let run = read_run(open(&file)?, &roster).map_err(|e| Failure::from(e).context(format!("in `{}`", file.display())))?;
        points.push(series_point(&name, &run, &test, &costs)?);
    }
    write_json(&out.join("series.json"), &points)?;
    Ok(())
}

#[derive(Serialize)]
struct SimulationSummary {
    seed: u64,
    holdout_turns: usize,
    test_turns: usize,
    pairs: usize,
    loss_initial: Option<f64>,
    loss_final: Option<f64>,
    pool_sizes: BTreeMap<String, usize>,
    excluded: usize,
    tlb_jga: BTreeMap<String, f64>,
    oracle_agreement: BTreeMap<String, f64>,
}

/// Config that reruns the step-by-step pipeline on the simulated inputs.
fn fixture_config(sim: &SimulationConfig, costs: &CostTable) -> RunConfig {
    RunConfig {
        seed: sim.seed,
        supervision: sim.supervision,
        k: sim.k,
        l: sim.train.l,
        pool_size: sim.pool_size,
        margin: sim.train.margin,
        learning_rate: sim.train.learning_rate,
        epochs: sim.train.epochs,
        paths: Paths {
            corpus: Some("corpus/test.jsonl".into()),
            holdout: Some("corpus/holdout.jsonl".into()),
            out: Some("pipeline".into()),
            ..Paths::default()
        },
        embedder: EmbedderConfig {
            dim: sim.dim,
            seed: Some(sim.seed),
        },
        experts: costs
            .experts
            .iter()
            .map(|(name, &cost)| ExpertConfig {
                name: name.clone(),
                predictions: format!("predictions/{name}.jsonl").into(),
                cost,
            })
            .rev()
            .collect(),
        ..RunConfig::default()
    }
}

fn write_simulation(sim: &Simulation, config: &SimulationConfig, out: &Path) -> CmdResult {
    let corpus = &sim.corpus;
    write_with(&out.join("corpus/holdout.jsonl"), |w| write_dialogues(w, &corpus.holdout))?;
    write_with(&out.join("corpus/test.jsonl"), |w| write_dialogues(w, &corpus.test))?;

    // Predictions on gold-prior triplets; the synthetic experts ignore the prior.
    let experts = cluster_experts(corpus, config.seed)?;
    let mut turns = labeled_turns(&corpus.holdout);
    turns.extend(labeled_turns(&corpus.test));
    for expert in experts.iter() {
        let preds = turns
            .iter()
            .map(|t| expert.predict(&t.triplet))
            .collect::<orchestra_core::Result<Vec<ExpertPrediction>>>()?;
        let name = &expert.id().name;
        write_with(&out.join(format!("predictions/{name}.jsonl")), |w| write_predictions(w, &preds))?;
    }

    let embedder = Embedder::Hashing(sim.embedder.clone());
    let mut store = EmbeddingStore::new(embedder.dim());
    for (key, v) in embed_turns(&embedder, &turns)? {
        store.insert(key, v)?;
    }
    write_with(&out.join("embeddings.jsonl"), |w| store.write(w))?;
    write_with(&out.join("pairs.jsonl"), |w| sim.pairs.write(w))?;
    write_json(&out.join("adapter.json"), &sim.trained.adapter)?;
    write_json(&out.join("loss_history.json"), &sim.trained.loss_history)?;
    for pool in &sim.pools.pools {
        write_with(&out.join(format!("pools/{}.json", pool.expert.name)), |w| write_pool(w, pool))?;
    }

    let mut points = Vec::new();
    let mut summary = SimulationSummary {
        seed: config.seed,
        holdout_turns: labeled_turns(&corpus.holdout).len(),
        test_turns: sim.runs.values().next().map_or(0, RoutedRun::len),
        pairs: sim.pairs.len(),
        loss_initial: sim.trained.loss_history.first().copied(),
        loss_final: sim.trained.loss_history.last().copied(),
        pool_sizes: sim.pools.pools.iter().map(|p| (p.expert.name.clone(), p.len())).collect(),
        excluded: sim.pools.excluded.len(),
        tlb_jga: BTreeMap::new(),
        oracle_agreement: BTreeMap::new(),
    };
    for (name, run) in &sim.runs {
        write_with(&out.join(format!("runs/{name}.jsonl")), |w| write_run(w, run))?;
        let report = make_report(run, &corpus.test, &sim.costs, None)?;
        write_json(&out.join(format!("reports/{name}.json")), &report)?;
        points.push(series_point(name, run, &corpus.test, &sim.costs)?);
        summary.tlb_jga.insert(name.clone(), report.tlb_jga);
        summary
            .oracle_agreement
            .insert(name.clone(), oracle_agreement(run, &sim.oracle_labels)?);
    }
    write_json(&out.join("series.json"), &points)?;
    write_json(&out.join("summary.json"), &summary)?;

    let fixture = fixture_config(config, &sim.costs);
    let text = toml::to_string(&fixture).context("serializing fixture config")?;
    fs::write(out.join("config.toml"), text).context("writing fixture config")?;

    for (name, tlb) in &summary.tlb_jga {
        println!(
            "{name:>20}: TLB JGA {tlb:.4}, oracle agreement {:.4}",
            summary.oracle_agreement[name]
        );
    }
    Ok(())
}

pub fn simulate(config: &RunConfig) -> CmdResult {
    let sim_config = config.simulation.clone().unwrap_or_else(|| SimulationConfig {
        seed: config.seed,
        ..SimulationConfig::default()
    });
    sim_config.validate()?;
    let sim = run_simulation(&sim_config)?;
    let out = config.out_dir();
    write_simulation(&sim, &sim_config, &out)?;
    println!("wrote simulation artifacts to {}", out.display());
    Ok(())
}
