//! Decision-level fusion of per-modality session decisions.
//!
//! Each reporting modality casts one vote; abstentions cast none. Ties on
//! the vote count go to the emotion with the larger summed probability
//! across the tracked-point modalities, then to the lowest emotion code.

use std::fmt;

use crate::classifier::SessionPrediction;
use crate::error::{Error, Result};
use crate::session::{Emotion, Modality};

#[derive(Debug, Clone, PartialEq)]
pub struct ModalityDecision {
    pub modality: Modality,
    /// `None` is an abstention.
    pub decision: Option<Emotion>,
    /// `P_0..P_6`; present only for tracked-point modalities.
    pub probabilities: Option<[f64; Emotion::COUNT]>,
    /// Samples the decision was drawn from.
    pub samples: usize,
}

impl ModalityDecision {
    pub fn from_prediction(modality: Modality, prediction: &SessionPrediction) -> Self {
        Self {
            modality,
            decision: Some(prediction.decided),
            probabilities: Some(prediction.probabilities),
            samples: prediction.len(),
        }
    }

    /// A side-channel (template or speech) decision.
    pub fn side_channel(modality: Modality, decision: Option<Emotion>, samples: usize) -> Self {
        Self {
            modality,
            decision,
            probabilities: None,
            samples,
        }
    }

    fn check(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidDecision(format!("{}: {msg}", self.modality)));
        match self.modality {
            m if m.is_geometric() => {
                if self.decision.is_none() {
                    return bad("tracked-point modalities never abstain");
                }
                match &self.probabilities {
                    None => return bad("probabilities missing"),
                    Some(p) if p.iter().any(|v| !(0.0..=1.0).contains(v)) => {
                        return bad("probability outside [0, 1]")
                    }
                    _ => {}
                }
            }
            Modality::Template => {
                if !matches!(self.decision, None | Some(Emotion::Happiness)) {
                    return bad("the smile template only decides happiness");
                }
            }
            _ => {}
        }
        if !self.modality.is_geometric() && self.probabilities.is_some() {
            return bad("side channels carry no probabilities");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingBreakdown {
    /// Seconds per frame for each modality.
    pub per_modality: Vec<(Modality, f64)>,
    pub fusion: f64,
    /// `max(per_modality) + fusion`.
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionResult {
    pub decisions: Vec<ModalityDecision>,
    pub fused: Emotion,
    pub votes: [usize; Emotion::COUNT],
    pub timing: Option<TimingBreakdown>,
}

/// Majority vote over the non-abstaining decisions.
pub fn fuse(decisions: &[ModalityDecision]) -> Result<FusionResult> {
    for d in decisions {
        d.check()?;
    }
    let mut votes = [0usize; Emotion::COUNT];
    for e in decisions.iter().filter_map(|d| d.decision) {
        votes[e.code()] += 1;
    }
    let top = *votes.iter().max().unwrap_or(&0);
    if top == 0 {
        return Err(Error::NoDecision);
    }
    let tied: Vec<Emotion> = Emotion::ALL
        .iter()
        .copied()
        .filter(|e| votes[e.code()] == top)
        .collect();
    let fused = if tied.len() == 1 {
        tied[0]
    } else {
        let mut best = (tied[0], probability_sum(decisions, tied[0]));
        for &e in &tied[1..] {
            let s = probability_sum(decisions, e);
            if s > best.1 {
                best = (e, s);
            }
        }
        best.0
    };
    Ok(FusionResult {
        decisions: decisions.to_vec(),
        fused,
        votes,
        timing: None,
    })
}

/// Sum of `P_e` over decisions that carry probabilities. Terms are added in
/// ascending order so the sum does not depend on decision order.
fn probability_sum(decisions: &[ModalityDecision], emotion: Emotion) -> f64 {
    let mut terms: Vec<f64> = decisions
        .iter()
        .filter_map(|d| d.probabilities.map(|p| p[emotion.code()]))
        .collect();
    terms.sort_by(f64::total_cmp);
    terms.iter().sum()
}

/// Per-frame total time: slowest modality plus fusion.
pub fn compose_timing(per_modality: &[f64], fusion: f64) -> Result<f64> {
    if let Some(&t) = per_modality
        .iter()
        .chain(std::iter::once(&fusion))
        .find(|t| !(**t >= 0.0) || !t.is_finite())
    {
        return Err(Error::NegativeTime(t));
    }
    let slowest = per_modality
        .iter()
        .copied()
        .reduce(f64::max)
        .ok_or_else(|| Error::Bench("no modality timings to compose".into()))?;
    Ok(slowest + fusion)
}

impl FusionResult {
    pub fn with_timing(mut self, per_modality: Vec<(Modality, f64)>, fusion: f64) -> Result<Self> {
        let times: Vec<f64> = per_modality.iter().map(|&(_, t)| t).collect();
        let total = compose_timing(&times, fusion)?;
        self.timing = Some(TimingBreakdown {
            per_modality,
            fusion,
            total,
        });
        Ok(self)
    }

    /// One report line: `session,modality=decision;...,fused,total_seconds`.
    pub fn report_line(&self, session_id: &str) -> String {
        let decisions: Vec<String> = self
            .decisions
            .iter()
            .map(|d| {
                format!(
                    "{}={}",
                    d.modality,
                    d.decision.map_or("abstain", Emotion::name)
                )
            })
            .collect();
        let total = self
            .timing
            .as_ref()
            .map_or_else(|| "-".to_string(), |t| t.total.to_string());
        format!("{session_id},{},{},{total}", decisions.join(";"), self.fused)
    }
}

/// Product-feedback reading of a fused emotion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ProductVerdict {
    Positive,
    Negative,
    Neutral,
}

impl ProductVerdict {
    /// Happiness is positive; anger and disgust are negative; the rest neutral.
    pub fn of(emotion: Emotion) -> Self {
        match emotion {
            Emotion::Happiness => ProductVerdict::Positive,
            Emotion::Anger | Emotion::Disgust => ProductVerdict::Negative,
            _ => ProductVerdict::Neutral,
        }
    }
}

impl fmt::Display for ProductVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProductVerdict::Positive => "positive",
            ProductVerdict::Negative => "negative",
            ProductVerdict::Neutral => "neutral",
        })
    }
}
