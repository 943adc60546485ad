use rand::Rng;
use serde::{Deserialize, Serialize};

use super::RoutingDecision;
use crate::embedding::EmbeddingVector;
use crate::error::{Error, Result};
use crate::experts::ExpertId;
use crate::rng::substream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            epochs: 300,
            l2: 1e-4,
            seed: 0,
        }
    }
}

/// Binary logistic-regression router over frozen embeddings.
///
/// `p = sigmoid(w . x + b)` is the probability of the costlier expert; the
/// preferred expert is chosen unless `p > 0.5`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticRouter {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub preferred: ExpertId,
    pub other: ExpertId,
    /// Set when training saw a single class; every query goes to it.
    pub constant: Option<ExpertId>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl LogisticRouter {
    pub fn probability(&self, x: &EmbeddingVector) -> Result<f64> {
        if x.dim() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.len(),
                actual: x.dim(),
            });
        }
        let z: f64 = self
            .weights
            .iter()
            .zip(x.components())
            .map(|(w, &v)| w * v as f64)
            .sum::<f64>()
            + self.bias;
        Ok(sigmoid(z))
    }

    pub fn route(&self, x: &EmbeddingVector) -> Result<RoutingDecision> {
        if let Some(only) = &self.constant {
            return Ok(RoutingDecision::fixed(only.clone()));
        }
        let p = self.probability(x)?;
        let chosen = if p > 0.5 { &self.other } else { &self.preferred };
        Ok(RoutingDecision::fixed(chosen.clone()))
    }
}

/// Full-batch gradient descent on the mean cross-entropy (plus a small L2
/// term). Weights start from small seeded noise, the bias from zero.
pub fn train_classifier_router(
    examples: &[(EmbeddingVector, ExpertId)],
    experts: (&ExpertId, &ExpertId),
    config: &ClassifierConfig,
) -> Result<LogisticRouter> {
    let (preferred, other) = if experts.0 <= experts.1 {
        (experts.0.clone(), experts.1.clone())
    } else {
        (experts.1.clone(), experts.0.clone())
    };
    let first = examples.first().ok_or(Error::Empty("classifier training set"))?;
    let dim = first.0.dim();
    let mut positives = 0usize;
    for (x, label) in examples {
        if x.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: x.dim(),
            });
        }
        if label == &other {
            positives += 1;
        } else if label != &preferred {
            return Err(Error::UnknownExpert(label.name.clone()));
        }
    }
    let mut rng = substream(config.seed, "classifier");
    let mut router = LogisticRouter {
        weights: (0..dim).map(|_| rng.random_range(-0.01..0.01)).collect(),
        bias: 0.0,
        preferred: preferred.clone(),
        other: other.clone(),
        constant: None,
    };
    if positives == 0 || positives == examples.len() {
        let only = if positives == 0 { preferred } else { other };
        log::warn!("classifier training data has a single class; routing everything to `{only}`");
        router.constant = Some(only);
        return Ok(router);
    }

    let n = examples.len() as f64;
    let xs: Vec<Vec<f64>> = examples
        .iter()
        .map(|(x, _)| x.components().iter().map(|&v| v as f64).collect())
        .collect();
    let ys: Vec<f64> = examples
        .iter()
        .map(|(_, l)| if l == &other { 1.0 } else { 0.0 })
        .collect();
    for _ in 0..config.epochs {
        let mut grad_w = vec![0.0; dim];
        let mut grad_b = 0.0;
        for (x, &y) in xs.iter().zip(&ys) {
            let z: f64 = router.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + router.bias;
            let err = sigmoid(z) - y;
            for (g, v) in grad_w.iter_mut().zip(x) {
                *g += err * v;
            }
            grad_b += err;
        }
        for (w, g) in router.weights.iter_mut().zip(&grad_w) {
            *w -= config.learning_rate * (g / n + config.l2 * *w);
        }
        router.bias -= config.learning_rate * grad_b / n;
    }
    Ok(router)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cluster(center: [f32; 3], n: usize, label: ExpertId) -> Vec<(EmbeddingVector, ExpertId)> {
        (0..n)
            .map(|i| {
                let j = (i as f32 - n as f32 / 2.0) * 0.02;
                (
                    EmbeddingVector::normalized(vec![center[0] + j, center[1] - j, center[2] + j]),
                    label.clone(),
                )
            })
            .collect()
    }

    #[test]
    fn separable_clusters() {
        let mut data = cluster([1.0, 0.2, 0.0], 10, ExpertId::slm());
        data.extend(cluster([0.0, 0.2, 1.0], 10, ExpertId::llm()));
        let router = train_classifier_router(
            &data,
            (&ExpertId::slm(), &ExpertId::llm()),
            &ClassifierConfig::default(),
        )
        .unwrap();
        let correct = data
            .iter()
            .filter(|(x, l)| &router.route(x).unwrap().chosen == l)
            .count();
        assert_eq!(correct, data.len());
    }

    #[test]
    fn boundary_goes_to_preferred() {
        let router = LogisticRouter {
            weights: vec![1.0, -1.0],
            bias: 0.0,
            preferred: ExpertId::slm(),
            other: ExpertId::llm(),
            constant: None,
        };
        let on_boundary = EmbeddingVector::new(vec![0.5, 0.5]);
        assert_eq!(router.probability(&on_boundary).unwrap(), 0.5);
        assert_eq!(router.route(&on_boundary).unwrap().chosen, ExpertId::slm());
        let zero = EmbeddingVector::new(vec![0.0, 0.0]);
        assert_eq!(router.route(&zero).unwrap().chosen, ExpertId::slm());
    }

    #[test]
    fn single_class_is_degenerate() {
        let data = cluster([1.0, 0.0, 0.0], 4, ExpertId::llm());
        let router = train_classifier_router(
            &data,
            (&ExpertId::llm(), &ExpertId::slm()),
            &ClassifierConfig::default(),
        )
        .unwrap();
        assert_eq!(router.constant, Some(ExpertId::llm()));
        assert_eq!(
            router.route(&EmbeddingVector::new(vec![0.0, 1.0, 0.0])).unwrap().chosen,
            ExpertId::llm()
        );
    }
}
