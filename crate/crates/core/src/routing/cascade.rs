use super::RoutingDecision;
use crate::error::{Error, Result};
use crate::experts::ExpertId;

/// One hold-out turn as seen by the cascade tuner.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CascadeSample {
    pub slm_confidence: f64,
    pub slm_correct: bool,
    pub llm_correct: bool,
}

fn correct_count(samples: &[CascadeSample], threshold: f64) -> usize {
    samples
        .iter()
        .filter(|s| {
            if s.slm_confidence >= threshold {
                s.slm_correct
            } else {
                s.llm_correct
            }
        })
        .count()
}

/// Threshold maximizing hold-out exact-match accuracy of the cascade.
///
/// Candidates are the distinct hold-out confidences plus 0 and 1. Among
/// equally accurate thresholds the largest wins.
pub fn tune_cascade_threshold(samples: &[CascadeSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("cascade hold-out"));
    }
    let mut grid: Vec<f64> = samples.iter().map(|s| s.slm_confidence).collect();
    grid.extend([0.0, 1.0]);
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let mut best = (0usize, 0.0f64);
    for &t in &grid {
        let count = correct_count(samples, t);
        if count >= best.0 {
            best = (count, t);
        }
    }
    Ok(best.1)
}

/// Keeps the SLM answer when its confidence reaches the threshold and
/// defers to the LLM otherwise.
pub fn route_cascade(confidence: Option<f64>, threshold: f64, slm: &ExpertId, llm: &ExpertId) -> Result<RoutingDecision> {
    let confidence = confidence.ok_or_else(|| Error::MissingConfidence {
        expert: slm.name.clone(),
        key: String::new(),
    })?;
    let chosen = if confidence >= threshold { slm } else { llm };
    Ok(RoutingDecision {
        confidence: Some(confidence),
        ..RoutingDecision::fixed(chosen.clone())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(conf: f64, slm: bool, llm: bool) -> CascadeSample {
        CascadeSample {
            slm_confidence: conf,
            slm_correct: slm,
            llm_correct: llm,
        }
    }

    #[test]
    fn slm_always_correct_keeps_everything() {
        let samples = [s(0.4, true, false), s(0.7, true, true), s(0.9, true, false)];
        assert_eq!(tune_cascade_threshold(&samples).unwrap(), 0.4);
    }

    #[test]
    fn slm_never_correct_defers_everything() {
        let samples = [s(0.4, false, true), s(0.7, false, true), s(0.9, false, true)];
        assert_eq!(tune_cascade_threshold(&samples).unwrap(), 1.0);
    }

    #[test]
    fn mixed_set_grid_optimum() {
        // Grid accuracy (correct turns out of 6), computed by hand:
        //   t=0.0/0.1: slm on all -> 3
        //   t=0.3: defer 0.1 -> 4
        //   t=0.5: defer 0.1, 0.3 -> 5
        //   t=0.6: defer up to 0.5 -> 4
        //   t=0.8: defer up to 0.6 -> 4
        //   t=0.95: defer up to 0.8 -> 3
        //   t=1.0: defer all -> 3
        let samples = [
            s(0.1, false, true),
            s(0.3, false, true),
            s(0.5, true, false),
            s(0.6, false, false),
            s(0.8, true, false),
            s(0.95, true, true),
        ];
        assert_eq!(tune_cascade_threshold(&samples).unwrap(), 0.5);
    }

    #[test]
    fn empty_holdout() {
        assert!(tune_cascade_threshold(&[]).is_err());
    }

    #[test]
    fn routing_boundary() {
        let (slm, llm) = (ExpertId::slm(), ExpertId::llm());
        assert_eq!(route_cascade(Some(0.9), 0.5, &slm, &llm).unwrap().chosen, slm);
        assert_eq!(route_cascade(Some(0.3), 0.5, &slm, &llm).unwrap().chosen, llm);
        assert_eq!(route_cascade(Some(0.5), 0.5, &slm, &llm).unwrap().chosen, slm);
        assert!(route_cascade(None, 0.5, &slm, &llm).is_err());
    }
}
