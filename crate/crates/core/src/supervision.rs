//! Contrastive supervision for the projection adapter.
//!
//! Pairs come from two sources. Task pairs rank hold-out turns against each
//! other by gold-label similarity. Expert pairs rank them by base-embedding
//! cosine and keep same-label neighbors as positives and different-label
//! far turns as negatives.
//!
//! The loss over projected, normalized embeddings `p = norm(W v)` is
//!
//! ```text
//! L = mean_pos (1 - cos(p_q, p_c)) + mean_neg max(0, cos(p_q, p_c) - margin)
//! ```
//!
//! and is minimized by full-batch gradient descent starting from `W = I`.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{Read, Write};

use ndarray::{Array1, Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dialogue::{LabeledTurn, TurnKey};
use crate::embedding::{cosine, EmbeddingVector, ProjectionAdapter};
use crate::error::{Error, Result};
use crate::experts::ExpertId;
use crate::similarity::turn_similarity;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Task,
    Expert,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Pair {
    pub query: TurnKey,
    pub candidate: TurnKey,
    pub provenance: Provenance,
}

/// Positive and negative pairs. No self-pairs, and no ordered pair appears
/// twice within one polarity.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PairSet {
    positives: Vec<Pair>,
    negatives: Vec<Pair>,
}

impl PairSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn positives(&self) -> &[Pair] {
        &self.positives
    }

    pub fn negatives(&self) -> &[Pair] {
        &self.negatives
    }

    pub fn len(&self) -> usize {
        self.positives.len() + self.negatives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positives.is_empty() && self.negatives.is_empty()
    }

    /// Returns false when the pair was a self-pair or already present.
    pub fn push_positive(&mut self, pair: Pair) -> bool {
        push_unique(&mut self.positives, pair)
    }

    pub fn push_negative(&mut self, pair: Pair) -> bool {
        push_unique(&mut self.negatives, pair)
    }

    fn keys(&self) -> impl Iterator<Item = &TurnKey> {
        self.positives
            .iter()
            .chain(&self.negatives)
            .flat_map(|p| [&p.query, &p.candidate])
    }

    pub fn write<W: Write>(&self, writer: W) -> Result<()> {
        let as_pairs = |v: &[Pair]| -> Vec<[String; 2]> {
            v.iter()
                .map(|p| [p.query.to_string(), p.candidate.to_string()])
                .collect()
        };
        let mut provenance = BTreeMap::new();
        for p in self.positives.iter().chain(&self.negatives) {
            provenance
                .entry(format!("{}:{}", p.query, p.candidate))
                .or_insert(p.provenance);
        }
        let file = PairFile {
            positives: as_pairs(&self.positives),
            negatives: as_pairs(&self.negatives),
            provenance,
        };
        serde_json::to_writer(writer, &file)?;
        Ok(())
    }

    pub fn read<R: Read>(reader: R) -> Result<Self> {
        let file: PairFile = serde_json::from_reader(reader)?;
        let mut out = Self::new();
        let lift = |[q, c]: [String; 2]| -> Result<Pair> {
            let provenance = *file
                .provenance
                .get(&format!("{q}:{c}"))
                .ok_or_else(|| Error::Config(format!("pair {q} -> {c} has no provenance")))?;
            Ok(Pair {
                query: TurnKey::from(q.as_str()),
                candidate: TurnKey::from(c.as_str()),
                provenance,
            })
        };
        for p in file.positives.clone() {
            out.push_positive(lift(p)?);
        }
        for p in file.negatives.clone() {
            out.push_negative(lift(p)?);
        }
        Ok(out)
    }
}

fn push_unique(list: &mut Vec<Pair>, pair: Pair) -> bool {
    if pair.query == pair.candidate
        || list
            .iter()
            .any(|p| p.query == pair.query && p.candidate == pair.candidate)
    {
        return false;
    }
    list.push(pair);
    true
}

#[derive(Serialize, Deserialize)]
struct PairFile {
    positives: Vec<[String; 2]>,
    negatives: Vec<[String; 2]>,
    provenance: BTreeMap<String, Provenance>,
}

/// Union of both sets with duplicate ordered pairs removed per polarity.
pub fn merge_pairs(a: &PairSet, b: &PairSet) -> PairSet {
    let mut out = PairSet::new();
    let mut seen_pos = HashSet::new();
    let mut seen_neg = HashSet::new();
    for p in a.positives.iter().chain(&b.positives) {
        if p.query != p.candidate && seen_pos.insert((p.query.clone(), p.candidate.clone())) {
            out.positives.push(p.clone());
        }
    }
    for p in a.negatives.iter().chain(&b.negatives) {
        if p.query != p.candidate && seen_neg.insert((p.query.clone(), p.candidate.clone())) {
            out.negatives.push(p.clone());
        }
    }
    out
}

fn effective_l(n: usize, l: usize) -> usize {
    let available = n.saturating_sub(1);
    if available < l {
        log::warn!("hold-out has {n} turns; shrinking pairs per query from {l} to {available}");
        available
    } else {
        l
    }
}

/// Candidates of one query ranked best-first and worst-first.
/// Ties on score are broken by ascending turn key in both orders.
fn rank_candidates(scored: &mut [(f64, usize)], keys: &[TurnKey]) -> (Vec<usize>, Vec<usize>) {
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| keys[a.1].cmp(&keys[b.1])));
    let best: Vec<usize> = scored.iter().map(|s| s.1).collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| keys[a.1].cmp(&keys[b.1])));
    let worst: Vec<usize> = scored.iter().map(|s| s.1).collect();
    (best, worst)
}

/// For each hold-out turn, its `l` most similar turns (by gold-label turn
/// similarity) become positives and its `l` least similar become negatives.
pub fn mine_task_pairs(holdout: &[LabeledTurn], l: usize) -> PairSet {
    let l = effective_l(holdout.len(), l);
    let keys: Vec<TurnKey> = holdout.iter().map(LabeledTurn::key).collect();
    let per_query: Vec<(Vec<usize>, Vec<usize>)> = (0..holdout.len())
        .into_par_iter()
        .map(|q| {
            let mut scored: Vec<(f64, usize)> = (0..holdout.len())
                .filter(|&c| c != q)
                .map(|c| (turn_similarity(&holdout[q], &holdout[c]), c))
                .collect();
            let (best, worst) = rank_candidates(&mut scored, &keys);
            (best[..l].to_vec(), worst[..l].to_vec())
        })
        .collect();
    collect_pairs(&keys, per_query, Provenance::Task)
}

/// A hold-out turn with its expert label and base (pre-adapter) embedding.
#[derive(Clone, Debug)]
pub struct LabeledEmbedding {
    pub key: TurnKey,
    pub label: ExpertId,
    pub embedding: EmbeddingVector,
}

/// For each turn, ranks the others by base-embedding cosine. Same-label
/// turns among the top `l` become positives; different-label turns among the
/// bottom `l` become negatives.
pub fn mine_expert_pairs(samples: &[LabeledEmbedding], l: usize) -> Result<PairSet> {
    let l = effective_l(samples.len(), l);
    let keys: Vec<TurnKey> = samples.iter().map(|s| s.key.clone()).collect();
    let per_query = (0..samples.len())
        .into_par_iter()
        .map(|q| {
            let mut scored = Vec::with_capacity(samples.len());
            for c in (0..samples.len()).filter(|&c| c != q) {
                scored.push((cosine(&samples[q].embedding, &samples[c].embedding)?, c));
            }
            let (best, worst) = rank_candidates(&mut scored, &keys);
            let label = &samples[q].label;
            let pos = best[..l].iter().copied().filter(|&c| &samples[c].label == label).collect();
            let neg = worst[..l].iter().copied().filter(|&c| &samples[c].label != label).collect();
            Ok((pos, neg))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(collect_pairs(&keys, per_query, Provenance::Expert))
}

fn collect_pairs(keys: &[TurnKey], per_query: Vec<(Vec<usize>, Vec<usize>)>, provenance: Provenance) -> PairSet {
    let mut out = PairSet::new();
    for (q, (pos, neg)) in per_query.into_iter().enumerate() {
        let pair = |c: usize| Pair {
            query: keys[q].clone(),
            candidate: keys[c].clone(),
            provenance,
        };
        out.positives.extend(pos.into_iter().map(pair));
        out.negatives.extend(neg.into_iter().map(pair));
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Pairs per query for each polarity.
    pub l: usize,
    pub margin: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            l: 25,
            margin: 0.2,
            learning_rate: 0.01,
            epochs: 30,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.l < 1 {
            return Err(Error::Config("l must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.margin) {
            return Err(Error::Config(format!("margin must be in [0, 1), got {}", self.margin)));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct LossAndGradient {
    pub loss: f64,
    pub gradient: Array2<f64>,
}

/// Base vectors of every key in `pairs` as rows of a matrix, with pairs
/// rewritten as row indices.
struct Batch {
    rows: Array2<f64>,
    positives: Vec<(usize, usize)>,
    negatives: Vec<(usize, usize)>,
}

impl Batch {
    fn new(pairs: &PairSet, embeddings: &HashMap<TurnKey, EmbeddingVector>, dim: usize) -> Result<Self> {
        let mut index = HashMap::new();
        let mut order = Vec::new();
        for key in pairs.keys() {
            if !index.contains_key(key) {
                let v = embeddings
                    .get(key)
                    .ok_or_else(|| Error::MissingEmbedding(key.to_string()))?;
                if v.dim() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        actual: v.dim(),
                    });
                }
                index.insert(key.clone(), order.len());
                order.push(v);
            }
        }
        let mut rows = Array2::zeros((order.len(), dim));
        for (i, v) in order.iter().enumerate() {
            rows.row_mut(i).assign(&v.to_f64());
        }
        let lookup = |list: &[Pair]| list.iter().map(|p| (index[&p.query], index[&p.candidate])).collect();
        Ok(Self {
            positives: lookup(&pairs.positives),
            negatives: lookup(&pairs.negatives),
            rows,
        })
    }

    fn evaluate(&self, matrix: &Array2<f64>, margin: f64, with_gradient: bool) -> LossAndGradient {
        // Row i of `projected` is p_i = W v_i; row i of `units` is p_i / |p_i|,
        // or zero when p_i vanishes.
        let projected = self.rows.dot(&matrix.t());
        let norms: Array1<f64> = projected.map_axis(Axis(1), |r| r.dot(&r).sqrt());
        let live: Vec<bool> = norms.iter().map(|&n| n > 1e-12).collect();
        let mut units = projected;
        for (mut row, &n) in units.rows_mut().into_iter().zip(&norms) {
            if n > 1e-12 {
                row /= n;
            } else {
                row.fill(0.0);
            }
        }
        let cos = units.dot(&units.t());

        // d loss / d cos for every pair with a live gradient, symmetrized.
        let mut coeffs = Array2::<f64>::zeros(cos.raw_dim());
        let mut loss = 0.0;
        if !self.positives.is_empty() {
            let w = 1.0 / self.positives.len() as f64;
            for &(q, c) in &self.positives {
                loss += w * (1.0 - cos[[q, c]]);
                if live[q] && live[c] {
                    coeffs[[q, c]] -= w;
                    coeffs[[c, q]] -= w;
                }
            }
        }
        if !self.negatives.is_empty() {
            let w = 1.0 / self.negatives.len() as f64;
            for &(q, c) in &self.negatives {
                let s = cos[[q, c]];
                if s > margin {
                    loss += w * (s - margin);
                    if live[q] && live[c] {
                        coeffs[[q, c]] += w;
                        coeffs[[c, q]] += w;
                    }
                }
            }
        }
        if !with_gradient {
            return LossAndGradient {
                loss,
                gradient: Array2::zeros(matrix.raw_dim()),
            };
        }

        // d cos(p_i, p_j) / d p_i = (u_j - cos_ij u_i) / |p_i|, so the
        // gradient w.r.t. p_i is (sum_j a_ij u_j - (sum_j a_ij cos_ij) u_i) / |p_i|.
        let mut row_grads = coeffs.dot(&units);
        let self_terms = (&coeffs * &cos).sum_axis(Axis(1));
        for (i, mut row) in row_grads.rows_mut().into_iter().enumerate() {
            if live[i] {
                row.scaled_add(-self_terms[i], &units.row(i));
                row /= norms[i];
            }
        }
        let gradient = row_grads.t().dot(&self.rows);
        LossAndGradient { loss, gradient }
    }
}

/// Loss and its exact gradient with respect to the adapter matrix.
pub fn contrastive_loss(
    adapter: &ProjectionAdapter,
    pairs: &PairSet,
    embeddings: &HashMap<TurnKey, EmbeddingVector>,
    margin: f64,
) -> Result<LossAndGradient> {
    let batch = Batch::new(pairs, embeddings, adapter.dim())?;
    Ok(batch.evaluate(adapter.matrix(), margin, true))
}

#[derive(Clone, Debug)]
pub struct TrainedAdapter {
    pub adapter: ProjectionAdapter,
    /// Initial loss followed by the loss after each epoch.
    pub loss_history: Vec<f64>,
}

/// Full-batch gradient descent from the identity adapter.
pub fn train_adapter(
    pairs: &PairSet,
    embeddings: &HashMap<TurnKey, EmbeddingVector>,
    dim: usize,
    config: &TrainConfig,
) -> Result<TrainedAdapter> {
    config.validate()?;
    if pairs.is_empty() {
        return Err(Error::NoPairs);
    }
    let batch = Batch::new(pairs, embeddings, dim)?;
    let mut adapter = ProjectionAdapter::identity(dim);
    let mut history = Vec::with_capacity(config.epochs + 1);
    for epoch in 0..=config.epochs {
        let step = batch.evaluate(adapter.matrix(), config.margin, epoch < config.epochs);
        if !step.loss.is_finite() {
            return Err(Error::NonFinite { what: "loss", epoch });
        }
        history.push(step.loss);
        if epoch == config.epochs {
            break;
        }
        if step.gradient.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite {
                what: "gradient",
                epoch,
            });
        }
        adapter
            .matrix_mut()
            .scaled_add(-config.learning_rate, &step.gradient);
        log::debug!("epoch {epoch}: loss {:.6}", step.loss);
    }
    Ok(TrainedAdapter {
        adapter,
        loss_history: history,
    })
}

/// Largest entry-wise relative error between the analytic gradient and
/// central finite differences, with denominator `max(|a|, |b|, 1e-8)`.
pub fn grad_check(
    adapter: &ProjectionAdapter,
    pairs: &PairSet,
    embeddings: &HashMap<TurnKey, EmbeddingVector>,
    margin: f64,
    epsilon: f64,
) -> Result<f64> {
    let batch = Batch::new(pairs, embeddings, adapter.dim())?;
    let analytic = batch.evaluate(adapter.matrix(), margin, true).gradient;
    let mut worst: f64 = 0.0;
    let mut probe = adapter.matrix().clone();
    for ((i, j), &a) in analytic.indexed_iter() {
        let original = probe[[i, j]];
        probe[[i, j]] = original + epsilon;
        let up = batch.evaluate(&probe, margin, false).loss;
        probe[[i, j]] = original - epsilon;
        let down = batch.evaluate(&probe, margin, false).loss;
        probe[[i, j]] = original;
        let numeric = (up - down) / (2.0 * epsilon);
        let denom = a.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((a - numeric).abs() / denom);
    }
    Ok(worst)
}
