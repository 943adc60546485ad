//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use ndarray::Array2;
use orchestra_core::dialogue::{
    aggregate_state, labeled_turns, Dialogue, DialogueState, LabeledTurn, Triplet, Turn, TurnBelief, TurnKey,
};
use orchestra_core::embedding::{serialize_triplet, EmbeddingVector, HashingEmbedder, ProjectionAdapter};
use orchestra_core::experts::{
    build_pools, judge_correct, write_pool, Expert, ExpertId, ExpertPool, ExpertPrediction, ExpertSet, PoolEntry,
    PredictionTable, ReplayExpert,
};
use orchestra_core::metrics::{dst_jga, tlb_jga, total_cost, CostTable, LLM_TERAFLOPS_PER_TURN};
use orchestra_core::routing::{
    route_retrieval, run_pipeline, write_run, PipelineConfig, PriorState, Router, RoutedRun, RoutingDecision,
    TurnRecord,
};
use orchestra_core::similarity::{tlb_similarity, F1Terms};
use orchestra_core::simulate::{generate_corpus, oracle_agreement, run_simulation, SimulationConfig};
use orchestra_core::supervision::{grad_check, Pair, PairSet, Provenance};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rel_err(actual: f64, target: f64) -> f64 {
    (actual - target).abs() / target
}

// ---------------------------------------------------------------- costs

/// Run over `n` one-turn dialogues where `share_slm` of turns go to the SLM.
fn synthetic_run(n: usize, share_slm: f64, cascade: bool, router_charged: bool) -> RoutedRun {
    let to_slm = (share_slm * n as f64).round() as usize;
    let records = (0..n)
        .map(|i| {
            let chosen = if i < to_slm { ExpertId::slm() } else { ExpertId::llm() };
            let invoked = if cascade && chosen == ExpertId::llm() {
                vec![ExpertId::slm(), ExpertId::llm()]
            } else {
                vec![chosen.clone()]
            };
            TurnRecord {
                key: TurnKey::new(&format!("d{i}"), 0),
                dialogue_id: format!("d{i}"),
                turn_id: 0,
                decision: RoutingDecision::fixed(chosen.clone()),
                prediction: ExpertPrediction {
                    dialogue_id: format!("d{i}"),
                    turn_id: 0,
                    expert: chosen,
                    tlb: TurnBelief::new(),
                    confidence: None,
                },
                invoked,
                router_charged,
                state: DialogueState::new(),
            }
        })
        .collect();
    RoutedRun {
        records,
        snapshot: Default::default(),
    }
}

/// `(label, share routed to the SLM, cascade, router charged, target TFLOPs)`.
type CostRow = (&'static str, f64, bool, bool, f64);

fn cost_rows(llm_total: f64, slm_total: f64, rows: &[CostRow]) -> Outcome {
    let n = (llm_total / LLM_TERAFLOPS_PER_TURN).round() as usize;
    let costs = CostTable::slm_llm(slm_total / n as f64);
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for &(label, share, cascade, charged, target) in rows {
        let run = synthetic_run(n, share, cascade, charged);
        let cost = total_cost(&run, &costs).map_err(|e| e.to_string())?;
        let err = rel_err(cost, target);
        worst = worst.max(err);
        parts.push(format!("{label} {:.2}M", cost / 1e6));
    }
    check(
        worst <= 0.03,
        format!("N={n}, {}; worst rel err {:.2}%", parts.join(", "), worst * 100.0),
    )
}

fn criterion_costs_multiwoz() -> Outcome {
    cost_rows(
        22e6,
        272.0,
        &[
            ("oracle", 0.73, false, false, 5.94e6),
            ("classifier", 0.91, false, true, 1.98e6),
            ("cascade", 0.13, true, false, 19.14e6),
            ("retrieval/base", 0.60, false, true, 8.8e6),
            ("retrieval/task+expert", 0.62, false, true, 8.3e6),
        ],
    )
}

fn criterion_costs_sgd() -> Outcome {
    cost_rows(
        121e6,
        8882.0,
        &[
            ("oracle", 0.62, false, false, 45.98e6),
            ("classifier", 0.38, false, true, 75.02e6),
            ("cascade", 0.079, true, false, 111.34e6),
            ("retrieval/task+expert", 0.57, false, true, 52.03e6),
        ],
    )
}

// ----------------------------------------------------------- similarity

const SLOTS: [&str; 6] = [
    "hotel-area",
    "hotel-name",
    "restaurant-food",
    "taxi-leaveat",
    "train-day",
    "attraction-type",
];
const VALUES: [&str; 4] = ["north", "south", "cheap", "friday"];

fn random_pairs(rng: &mut ChaCha8Rng) -> Vec<(&'static str, &'static str)> {
    let n = rng.random_range(0..=SLOTS.len());
    let mut slots = SLOTS.to_vec();
    slots.shuffle(rng);
    slots
        .into_iter()
        .take(n)
        .map(|s| (s, VALUES[rng.random_range(0..VALUES.len())]))
        .collect()
}

/// Brute-force F1 over plain vectors of distinct items.
fn f1_reference<T: PartialEq>(a: &[T], b: &[T]) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let mut common = 0usize;
    for x in a {
        for y in b {
            if x == y {
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let p = common as f64 / a.len() as f64;
    let r = common as f64 / b.len() as f64;
    2.0 * p * r / (p + r)
}

fn slot_names<'a>(pairs: &[(&'a str, &'a str)]) -> Vec<&'a str> {
    pairs.iter().map(|(s, _)| *s).collect()
}

fn criterion_similarity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    let mut violations = Vec::new();
    for i in 0..10_000 {
        let (pa, pb) = (random_pairs(&mut rng), random_pairs(&mut rng));
        let a = TurnBelief::from_pairs(pa.iter().copied()).map_err(|e| e.to_string())?;
        let b = TurnBelief::from_pairs(pb.iter().copied()).map_err(|e| e.to_string())?;
        let f_sv = f1_reference(&pa, &pb);
        let f_slot = f1_reference(&slot_names(&pa), &slot_names(&pb));
        let expected = f_sv + f_slot - 1.0;
        let got = tlb_similarity(&a, &b);
        worst = worst.max((got - expected).abs());
        let terms = F1Terms::of(a.values(), b.values());
        if tlb_similarity(&b, &a) != got
            || tlb_similarity(&a, &a) != 1.0
            || !(-1.0..=1.0).contains(&got)
            || terms.slot + 1e-12 < terms.slot_value
        {
            violations.push(i);
        }
    }
    check(
        worst == 0.0 && violations.is_empty(),
        format!("10000 pairs, max |diff| {worst:e}, invariant violations {}", violations.len()),
    )
}

// -------------------------------------------------------------- routing

fn vector(rng: &mut ChaCha8Rng, dim: usize) -> EmbeddingVector {
    // Small integer grid so exact score ties occur.
    EmbeddingVector::new((0..dim).map(|_| rng.random_range(-2i32..=2) as f32).collect())
}

fn cosine_reference(u: &[f32], v: &[f32]) -> f64 {
    let dot: f64 = u.iter().zip(v).map(|(&a, &b)| a as f64 * b as f64).sum();
    let nu: f64 = u.iter().map(|&a| a as f64 * a as f64).sum();
    let nv: f64 = v.iter().map(|&b| b as f64 * b as f64).sum();
    if nu == 0.0 || nv == 0.0 {
        0.0
    } else {
        (dot / (nu.sqrt() * nv.sqrt())).clamp(-1.0, 1.0)
    }
}

/// Exhaustive top-k: an entry is selected iff fewer than `k` entries beat it.
fn route_reference(query: &EmbeddingVector, pools: &[ExpertPool], k: usize) -> (ExpertId, Vec<String>) {
    let mut cands = Vec::new();
    for pool in pools {
        for e in &pool.entries {
            cands.push((
                cosine_reference(query.components(), e.vector.components()),
                e.key.as_str().to_string(),
                pool.expert.clone(),
            ));
        }
    }
    let beats = |a: &(f64, String, ExpertId), b: &(f64, String, ExpertId)| {
        a.0 > b.0 || a.0 == b.0 && (a.1 < b.1 || a.1 == b.1 && a.2 < b.2)
    };
    let mut ranked: Vec<(usize, &(f64, String, ExpertId))> = cands
        .iter()
        .map(|c| (cands.iter().filter(|o| beats(o, c)).count(), c))
        .filter(|(rank, _)| *rank < k)
        .collect();
    ranked.sort_by_key(|(rank, _)| *rank);
    let mut votes: Vec<(ExpertId, usize)> = pools.iter().map(|p| (p.expert.clone(), 0)).collect();
    for (_, c) in &ranked {
        votes.iter_mut().find(|(id, _)| *id == c.2).unwrap().1 += 1;
    }
    let best = votes.iter().map(|(_, n)| *n).max().unwrap();
    let chosen = votes
        .iter()
        .filter(|(_, n)| *n == best)
        .map(|(id, _)| id.clone())
        .min_by_key(|id| id.priority_rank)
        .unwrap();
    (chosen, ranked.iter().map(|(_, c)| c.1.clone()).collect())
}

fn tie_case() -> bool {
    let entry = |k: &str, v: [f32; 2]| PoolEntry {
        key: TurnKey::from(k),
        text: String::new(),
        vector: EmbeddingVector::normalized(v.to_vec()),
    };
    let slm = ExpertPool {
        expert: ExpertId::slm(),
        entries: (0..5).map(|i| entry(&format!("s{i}"), [1.0, 0.1 * i as f32])).collect(),
    };
    let llm = ExpertPool {
        expert: ExpertId::llm(),
        entries: (0..5).map(|i| entry(&format!("l{i}"), [1.0, 0.05 + 0.1 * i as f32])).collect(),
    };
    let query = EmbeddingVector::normalized(vec![1.0, 0.0]);
    route_retrieval(&query, &[llm, slm], 10).is_ok_and(|d| d.chosen == ExpertId::slm())
}

fn criterion_routing() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut mismatches = 0;
    for inst in 0..1000 {
        let dim = rng.random_range(2..=6);
        let n_experts = rng.random_range(2..=3);
        let total = rng.random_range(1..=20);
        let mut pools: Vec<ExpertPool> = (0..n_experts)
            .map(|r| ExpertPool::empty(ExpertId::new(&format!("e{r}"), r as u32)))
            .collect();
        for i in 0..total {
            let p = rng.random_range(0..n_experts);
            // Keys collide across pools now and then to exercise the last tie-break.
            let shared = rng.random_bool(0.2) && !pools[p].entries.iter().any(|e| e.key.as_str() == "k0");
            let key = format!("k{}", if shared { 0 } else { i + 1 });
            let v = vector(&mut rng, dim);
            pools[p].entries.push(PoolEntry {
                key: TurnKey::from(key.as_str()),
                text: String::new(),
                vector: v,
            });
        }
        pools.shuffle(&mut rng);
        let k = rng.random_range(1..=10);
        let query = vector(&mut rng, dim);
        let got = route_retrieval(&query, &pools, k).map_err(|e| format!("instance {inst}: {e}"))?;
        let (chosen, keys) = route_reference(&query, &pools, k);
        let got_keys: Vec<String> = got.neighbors.iter().map(|n| n.key.as_str().to_string()).collect();
        if got.chosen != chosen || got_keys != keys {
            mismatches += 1;
        }
    }
    let tie = tie_case();
    check(
        mismatches == 0 && tie,
        format!("1000 instances, {mismatches} mismatches; 5-5 tie to SLM: {tie}"),
    )
}

// --------------------------------------------------------- grad check

fn criterion_grad_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let dim = rng.random_range(2..=8);
        let n_turns = rng.random_range(3..=8);
        let embeddings: HashMap<TurnKey, EmbeddingVector> = (0..n_turns)
            .map(|i| {
                let v = (0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect();
                (TurnKey::from(format!("t{i}").as_str()), EmbeddingVector::normalized(v))
            })
            .collect();
        let mut pairs = PairSet::new();
        let n_pairs = rng.random_range(2..=10);
        while pairs.len() < n_pairs {
            let q = rng.random_range(0..n_turns);
            let c = rng.random_range(0..n_turns);
            if q == c {
                continue;
            }
            let pair = Pair {
                query: TurnKey::from(format!("t{q}").as_str()),
                candidate: TurnKey::from(format!("t{c}").as_str()),
                provenance: Provenance::Task,
            };
            if rng.random_bool(0.5) {
                pairs.push_positive(pair);
            } else {
                pairs.push_negative(pair);
            }
        }
        let matrix = Array2::from_shape_fn((dim, dim), |(i, j)| {
            (if i == j { 1.0 } else { 0.0 }) + rng.random_range(-0.3..0.3)
        });
        let adapter = ProjectionAdapter::from_matrix(matrix).map_err(|e| e.to_string())?;
        let margin = rng.random_range(-0.5..0.5);
        let err = grad_check(&adapter, &pairs, &embeddings, margin, 1e-5).map_err(|e| e.to_string())?;
        worst = worst.max(err);
    }
    check(worst < 1e-4, format!("50 instances, worst rel err {worst:.2e}"))
}

// --------------------------------------------- identity adapter parity

fn criterion_identity_adapter() -> Outcome {
    let config = SimulationConfig {
        holdout_dialogues: 60,
        test_dialogues: 130,
        seed: 5,
        ..SimulationConfig::default()
    };
    let corpus = generate_corpus(&config).map_err(|e| e.to_string())?;
    let embedder = HashingEmbedder::new(config.dim, config.seed).map_err(|e| e.to_string())?;
    let holdout = labeled_turns(&corpus.holdout);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pools: Vec<ExpertPool> = [ExpertId::slm(), ExpertId::llm()]
        .into_iter()
        .map(|id| ExpertPool {
            expert: id,
            entries: Vec::new(),
        })
        .collect();
    let mut pools = pools;
    for t in &holdout {
        pools[rng.random_range(0..2)].entries.push(PoolEntry {
            key: t.key(),
            text: String::new(),
            vector: embedder.embed_text(&serialize_triplet(&t.triplet)),
        });
    }
    let identity = ProjectionAdapter::identity(config.dim);
    let projected: Vec<ExpertPool> = pools
        .iter()
        .map(|p| ExpertPool {
            expert: p.expert.clone(),
            entries: p
                .entries
                .iter()
                .map(|e| PoolEntry {
                    vector: identity.project(&e.vector).unwrap(),
                    ..e.clone()
                })
                .collect(),
        })
        .collect();
    let test = labeled_turns(&corpus.test);
    let mut mismatches = 0;
    for t in test.iter().take(500) {
        let base = embedder.embed_text(&serialize_triplet(&t.triplet));
        let q = identity.project(&base).map_err(|e| e.to_string())?;
        let a = route_retrieval(&base, &pools, config.k).map_err(|e| e.to_string())?;
        let b = route_retrieval(&q, &projected, config.k).map_err(|e| e.to_string())?;
        let keys = |d: &RoutingDecision| d.neighbors.iter().map(|n| n.key.clone()).collect::<Vec<_>>();
        if a.chosen != b.chosen || keys(&a) != keys(&b) {
            mismatches += 1;
        }
    }
    let n = test.len().min(500);
    check(
        n == 500 && mismatches == 0,
        format!("{n} turns, {mismatches} mismatches"),
    )
}

// ----------------------------------------------------------- simulation

fn run_bytes(run: &RoutedRun) -> Vec<u8> {
    let mut out = Vec::new();
    write_run(&mut out, run).expect("in-memory write");
    out
}

fn criterion_simulation() -> Outcome {
    let config = SimulationConfig::default();
    let start = Instant::now();
    let sim = run_simulation(&config).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed().as_secs_f64();
    let test = &sim.corpus.test;
    let tlb = |name: &str| tlb_jga(&sim.runs[name], test).map_err(|e| e.to_string());
    let (slm, llm, oracle, retrieval) = (tlb("slm")?, tlb("llm")?, tlb("oracle")?, tlb("retrieval")?);
    let trained = oracle_agreement(&sim.runs["retrieval"], &sim.oracle_labels).map_err(|e| e.to_string())?;
    let untrained =
        oracle_agreement(&sim.runs["retrieval-untrained"], &sim.oracle_labels).map_err(|e| e.to_string())?;

    let again = run_simulation(&config).map_err(|e| e.to_string())?;
    let mut identical = sim.runs.len() == again.runs.len();
    for (name, run) in &sim.runs {
        identical &= again.runs.get(name).is_some_and(|r| run_bytes(r) == run_bytes(run));
    }
    let pool_bytes = |pools: &[ExpertPool]| {
        let mut out = Vec::new();
        for p in pools {
            write_pool(&mut out, p).expect("in-memory write");
        }
        out
    };
    identical &= pool_bytes(&sim.pools.pools) == pool_bytes(&again.pools.pools);
    identical &= serde_json::to_string(&sim.trained.adapter).ok() == serde_json::to_string(&again.trained.adapter).ok();

    let best_single = slm.max(llm);
    let a = oracle >= slm && oracle >= llm;
    let b = retrieval >= best_single + 0.05;
    let c = trained - untrained >= 0.03;
    check(
        a && b && c && identical && elapsed < 60.0,
        format!(
            "TLB slm {slm:.4} llm {llm:.4} oracle {oracle:.4} retrieval {retrieval:.4}; \
             oracle agreement trained {trained:.4} vs untrained {untrained:.4}; \
             oracle>=singles {a}, retrieval>=best+0.05 {b}, agreement +0.03 {c}, \
             byte-identical rerun {identical}, first run {elapsed:.1}s"
        ),
    )
}

// ---------------------------------------------------------------- pools

fn belief(pairs: &[(&str, &str)]) -> TurnBelief {
    TurnBelief::from_pairs(pairs.iter().copied()).expect("valid belief")
}

fn holdout_turn(id: &str, gold: TurnBelief) -> LabeledTurn {
    LabeledTurn {
        triplet: Triplet {
            dialogue_id: id.into(),
            turn_id: 0,
            prev_state: DialogueState::new(),
            system_utterance: String::new(),
            user_utterance: format!("utterance {id}"),
        },
        gold_tlb: gold,
    }
}

fn prediction(turn: &LabeledTurn, expert: &ExpertId, tlb: TurnBelief) -> ExpertPrediction {
    ExpertPrediction {
        dialogue_id: turn.triplet.dialogue_id.clone(),
        turn_id: turn.triplet.turn_id,
        expert: expert.clone(),
        tlb,
        confidence: None,
    }
}

fn pool_keys(pool: &ExpertPool) -> Vec<&str> {
    pool.entries.iter().map(|e| e.key.as_str()).collect()
}

fn unit(_: &Triplet) -> orchestra_core::Result<EmbeddingVector> {
    Ok(EmbeddingVector::normalized(vec![1.0, 0.0]))
}

fn four_turn_case() -> Result<bool, String> {
    let gold = belief(&[("hotel-area", "west")]);
    let wrong = belief(&[("hotel-area", "east")]);
    let turns: Vec<LabeledTurn> = ["a", "b", "c", "d"].iter().map(|id| holdout_turn(id, gold.clone())).collect();
    let (slm, llm) = (ExpertId::slm(), ExpertId::llm());
    // a: both right, b: SLM only, c: LLM only, d: neither.
    let outcomes = [(true, true), (true, false), (false, true), (false, false)];
    let mut table = PredictionTable::new();
    for (t, (s_ok, l_ok)) in turns.iter().zip(outcomes) {
        let pick = |ok: bool| if ok { gold.clone() } else { wrong.clone() };
        table.insert(prediction(t, &slm, pick(s_ok)));
        table.insert(prediction(t, &llm, pick(l_ok)));
    }
    let built = build_pools(&turns, &[llm.clone(), slm.clone()], &table, unit).map_err(|e| e.to_string())?;
    Ok(built.pools[0].expert == slm
        && pool_keys(&built.pools[0]) == ["a:0", "b:0"]
        && pool_keys(&built.pools[1]) == ["c:0"]
        && built.excluded.iter().map(TurnKey::as_str).collect::<Vec<_>>() == ["d:0"])
}

fn criterion_pools() -> Outcome {
    let four = four_turn_case()?;
    let mut rng = ChaCha8Rng::seed_from_u64(47);
    let mut failures = 0;
    for _ in 0..1000 {
        let n_experts = rng.random_range(2..=4);
        let roster: Vec<ExpertId> = (0..n_experts).map(|r| ExpertId::new(&format!("x{r}"), r as u32)).collect();
        let n_turns = rng.random_range(0..30);
        let gold_pairs = [("train-day", "monday")];
        let turns: Vec<LabeledTurn> = (0..n_turns)
            .map(|i| holdout_turn(&format!("h{i}"), belief(if rng.random_bool(0.1) { &[] } else { &gold_pairs })))
            .collect();
        let mut table = PredictionTable::new();
        for t in &turns {
            for id in &roster {
                let tlb = if rng.random_bool(0.4) {
                    t.gold_tlb.clone()
                } else {
                    belief(&[("train-day", "sunday")])
                };
                table.insert(prediction(t, id, tlb));
            }
        }
        let mut shuffled = roster.clone();
        shuffled.shuffle(&mut rng);
        let built = build_pools(&turns, &shuffled, &table, unit).map_err(|e| e.to_string())?;

        let mut seen: BTreeMap<String, usize> = BTreeMap::new();
        let mut ok = built.pools.len() == roster.len();
        for pool in &built.pools {
            for e in &pool.entries {
                *seen.entry(e.key.as_str().to_string()).or_default() += 1;
                let t = turns.iter().find(|t| t.key() == e.key).expect("pool key from hold-out");
                let pred = table.get(&e.key, &pool.expert).map_err(|e| e.to_string())?;
                ok &= judge_correct(&pred.tlb, &t.gold_tlb);
                // No lower-rank expert was also correct.
                ok &= roster.iter().filter(|id| id.priority_rank < pool.expert.priority_rank).all(|id| {
                    !judge_correct(&table.get(&e.key, id).unwrap().tlb, &t.gold_tlb)
                });
            }
        }
        for key in &built.excluded {
            *seen.entry(key.as_str().to_string()).or_default() += 1;
            ok &= roster
                .iter()
                .all(|id| !judge_correct(&table.get(key, id).unwrap().tlb, &turns.iter().find(|t| &t.key() == key).unwrap().gold_tlb));
        }
        ok &= seen.len() == turns.len() && seen.values().all(|&c| c == 1);
        if !ok {
            failures += 1;
        }
    }
    check(
        four && failures == 0,
        format!("four-turn case {four}; 1000 random hold-outs, {failures} failures"),
    )
}

// ------------------------------------------------------------------ DST

fn dialogue(id: &str, golds: Vec<TurnBelief>) -> Dialogue {
    Dialogue {
        dialogue_id: id.into(),
        domains: BTreeSet::new(),
        turns: golds
            .into_iter()
            .enumerate()
            .map(|(i, g)| Turn {
                turn_id: i as u32,
                system_utterance: String::new(),
                user_utterance: format!("turn {i}"),
                gold_tlb: g,
            })
            .collect(),
    }
}

/// Routes `d` through a single replayed expert producing `preds`.
fn replay_run(d: &Dialogue, preds: Vec<TurnBelief>) -> Result<RoutedRun, String> {
    let id = ExpertId::slm();
    let predictions = preds.into_iter().enumerate().map(|(i, tlb)| ExpertPrediction {
        dialogue_id: d.dialogue_id.clone(),
        turn_id: i as u32,
        expert: id.clone(),
        tlb,
        confidence: None,
    });
    let expert: Arc<dyn Expert> = Arc::new(ReplayExpert::from_predictions(id.clone(), predictions));
    let experts = ExpertSet::new(vec![expert]).map_err(|e| e.to_string())?;
    let config = PipelineConfig {
        prior: PriorState::Predicted,
        seed: 0,
        costs: CostTable::new([("slm".to_string(), 1.0)].into(), 0.0).map_err(|e| e.to_string())?,
    };
    run_pipeline(std::slice::from_ref(d), &experts, &Router::Constant(id), &config).map_err(|e| e.to_string())
}

fn criterion_dst() -> Outcome {
    let mut results = Vec::new();

    // Replacement: a later value overwrites, absent slots persist.
    let prev = DialogueState::from_pairs([("hotel-area", "west"), ("hotel-stars", "4")]).map_err(|e| e.to_string())?;
    let next = aggregate_state(&prev, &belief(&[("hotel-area", "east"), ("taxi-leaveat", "10:00")]));
    let expected = DialogueState::from_pairs([("hotel-area", "east"), ("hotel-stars", "4"), ("taxi-leaveat", "10:00")])
        .map_err(|e| e.to_string())?;
    results.push(("replacement", next == expected));

    // A wrong turn-1 belief leaves every later state wrong.
    let golds = vec![
        belief(&[("hotel-area", "west")]),
        belief(&[("hotel-stars", "4")]),
        belief(&[("hotel-parking", "yes")]),
    ];
    let d = dialogue("persist", golds.clone());
    let mut preds = golds.clone();
    preds[0] = belief(&[("hotel-area", "east")]);
    let run = replay_run(&d, preds)?;
    let t = tlb_jga(&run, std::slice::from_ref(&d)).map_err(|e| e.to_string())?;
    let s = dst_jga(&run, std::slice::from_ref(&d)).map_err(|e| e.to_string())?;
    results.push(("error persistence", (t - 2.0 / 3.0).abs() < 1e-12 && s == 0.0));

    // A later correct overwrite repairs the state from that turn on.
    let golds = vec![
        belief(&[("hotel-area", "west")]),
        belief(&[("hotel-stars", "4")]),
        belief(&[("hotel-area", "west")]),
    ];
    let d = dialogue("overwrite", golds.clone());
    let mut preds = golds.clone();
    preds[0] = belief(&[("hotel-area", "east")]);
    let run = replay_run(&d, preds)?;
    let s = dst_jga(&run, std::slice::from_ref(&d)).map_err(|e| e.to_string())?;
    results.push(("overwrite", (s - 1.0 / 3.0).abs() < 1e-12));

    // All-correct dialogue scores 1 on both.
    let run = replay_run(&d, golds)?;
    let t = tlb_jga(&run, std::slice::from_ref(&d)).map_err(|e| e.to_string())?;
    let s = dst_jga(&run, std::slice::from_ref(&d)).map_err(|e| e.to_string())?;
    results.push(("perfect", t == 1.0 && s == 1.0));

    let failed: Vec<&str> = results.iter().filter(|(_, ok)| !ok).map(|(n, _)| *n).collect();
    check(
        failed.is_empty(),
        format!(
            "{}/{} cases{}",
            results.len() - failed.len(),
            results.len(),
            if failed.is_empty() {
                String::new()
            } else {
                format!(", failed: {}", failed.join(", "))
            }
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, f64, fn() -> Outcome); 9] = [
        ("cost table, MultiWOZ rows within 3%", 1.0, criterion_costs_multiwoz),
        ("cost table, SGD rows within 3%", 1.0, criterion_costs_sgd),
        ("TLB similarity vs brute-force F1", 5.0, criterion_similarity),
        ("retrieval routing vs exhaustive reference", 5.0, criterion_routing),
        ("contrastive gradient vs finite differences", 10.0, criterion_grad_check),
        ("identity adapter leaves routing unchanged", 60.0, criterion_identity_adapter),
        ("synthetic end-to-end simulation", 60.0, criterion_simulation),
        ("expert pools", 5.0, criterion_pools),
        ("DST aggregation and joint accuracy", 1.0, criterion_dst),
    ];
    let mut failed = 0;
    for (i, (name, budget, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        let outcome = match outcome {
            Ok(d) if secs > *budget => Err(format!("{d}; over the {budget}s budget")),
            other => other,
        };
        match outcome {
            Ok(detail) => println!("PASS [{}] {name}: {detail} ({secs:.2}s)", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL [{}] {name}: {detail} ({secs:.2}s)", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
