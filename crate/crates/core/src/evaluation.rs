//! Cross-validation, confusion-matrix metrics and the timing benchmark.

use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::classifier::{train, ClassifierModel, Hyperparams};
use crate::error::{Error, Result};
use crate::fusion::{compose_timing, fuse, ModalityDecision};
use crate::geometry::extract_session;
use crate::session::{Emotion, Modality, Session};

/// Rows are true emotions, columns predicted emotions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionMatrix {
    pub counts: [[u64; Emotion::COUNT]; Emotion::COUNT],
}

impl ConfusionMatrix {
    pub fn add(&mut self, truth: Emotion, predicted: Emotion) {
        self.counts[truth.code()][predicted.code()] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..Emotion::COUNT).map(|i| self.counts[i][i]).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassMetrics {
    pub emotion: Emotion,
    pub true_positives: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
    /// `TP / (TP + FP)`; `None` when nothing was predicted as this class.
    pub precision: Option<f64>,
    /// `TP / (TP + FN)`; `None` when the class never occurs.
    pub recall: Option<f64>,
    /// `TP / total`.
    pub classification_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub modality: Option<Modality>,
    pub folds: usize,
    pub total: u64,
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    pub confusion: ConfusionMatrix,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn metrics(confusion: &ConfusionMatrix) -> Result<MetricsReport> {
    let total = confusion.total();
    if total == 0 {
        return Err(Error::Parameter("confusion matrix is empty".into()));
    }
    let per_class = Emotion::ALL
        .iter()
        .map(|&e| {
            let c = e.code();
            let tp = confusion.counts[c][c];
            let predicted: u64 = (0..Emotion::COUNT).map(|r| confusion.counts[r][c]).sum();
            let actual: u64 = confusion.counts[c].iter().sum();
            ClassMetrics {
                emotion: e,
                true_positives: tp,
                false_positives: predicted - tp,
                false_negatives: actual - tp,
                precision: ratio(tp, predicted),
                recall: ratio(tp, actual),
                classification_rate: tp as f64 / total as f64,
            }
        })
        .collect();
    Ok(MetricsReport {
        modality: None,
        folds: 0,
        total,
        accuracy: confusion.correct() as f64 / total as f64,
        per_class,
        confusion: *confusion,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |v| format!("{v:.4}"))
}

impl MetricsReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let modality = self.modality.map_or("-", Modality::token);
        writeln!(
            out,
            "modality {modality}  folds {}  units {}  accuracy {:.4}",
            self.folds, self.total, self.accuracy
        )
        .unwrap();
        writeln!(
            out,
            "{:<10} {:>19} {:>10} {:>10} {:>5} {:>5} {:>5}",
            "emotion", "classification_rate", "recall", "precision", "tp", "fp", "fn"
        )
        .unwrap();
        for m in &self.per_class {
            writeln!(
                out,
                "{:<10} {:>19.4} {:>10} {:>10} {:>5} {:>5} {:>5}",
                m.emotion.name(),
                m.classification_rate,
                fmt_opt(m.recall),
                fmt_opt(m.precision),
                m.true_positives,
                m.false_positives,
                m.false_negatives
            )
            .unwrap();
        }
        out
    }

    pub fn csv_header() -> &'static str {
        "modality,emotion,classification_rate,recall,precision,tp,fp,fn\n"
    }

    /// Rows only; prefix with [`MetricsReport::csv_header`].
    pub fn to_csv_rows(&self) -> String {
        let modality = self.modality.map_or("-", Modality::token);
        let opt = |v: Option<f64>| v.map_or_else(|| "undefined".to_string(), |v| v.to_string());
        let mut out = String::new();
        for m in &self.per_class {
            writeln!(
                out,
                "{modality},{},{},{},{},{},{},{}",
                m.emotion.name(),
                m.classification_rate,
                opt(m.recall),
                opt(m.precision),
                m.true_positives,
                m.false_positives,
                m.false_negatives
            )
            .unwrap();
        }
        out
    }
}

/// Stratified split of item indices into `k` folds.
///
/// Each emotion's items are shuffled with the seeded generator and dealt
/// round-robin; the dealing position carries over between emotions, so both
/// per-emotion and overall fold sizes differ by at most one.
pub fn kfold_split(labels: &[Emotion], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 || labels.len() < k {
        return Err(Error::Fold {
            items: labels.len(),
            k,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut position = 0;
    for e in Emotion::ALL {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == e).collect();
        members.shuffle(&mut rng);
        for i in members {
            folds[position % k].push(i);
            position += 1;
        }
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    Ok(folds)
}

/// Training seed for fold `fold` of a run seeded with `seed`.
pub fn fold_seed(seed: u64, fold: usize) -> u64 {
    seed ^ 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(fold as u64 + 1)
}

/// Trains on every frame of the sessions listed in `train_idx`.
pub fn train_fold(
    modality: Modality,
    features: &[Vec<Vec<f64>>],
    labels: &[Emotion],
    train_idx: &[usize],
    hyperparams: Hyperparams,
    seed: u64,
) -> Result<ClassifierModel> {
    let mut vectors: Vec<&[f64]> = Vec::new();
    let mut frame_labels = Vec::new();
    for &i in train_idx {
        for v in &features[i] {
            vectors.push(v);
            frame_labels.push(labels[i]);
        }
    }
    train(modality, &vectors, &frame_labels, hyperparams, seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvOutcome {
    pub folds: Vec<Vec<usize>>,
    /// Decided emotion per session, in input order.
    pub decisions: Vec<Emotion>,
    pub report: MetricsReport,
}

/// Feature rows per frame, per session.
pub type SessionFeatures = Vec<Vec<Vec<f64>>>;

/// Session features and labels, checked against `modality`.
pub fn session_features(
    sessions: &[Session],
    modality: Modality,
) -> Result<(SessionFeatures, Vec<Emotion>)> {
    let mut features = Vec::with_capacity(sessions.len());
    let mut labels = Vec::with_capacity(sessions.len());
    for s in sessions {
        if s.modality != modality {
            return Err(Error::Parameter(format!(
                "session {}/{} is {}, expected {modality}",
                s.subject_id, s.session_id, s.modality
            )));
        }
        let label = s.label.ok_or_else(|| {
            Error::Parameter(format!("session {}/{} is unlabeled", s.subject_id, s.session_id))
        })?;
        if s.is_empty() {
            return Err(Error::EmptySession);
        }
        features.push(
            extract_session(s)?
                .into_iter()
                .map(|v| v.values)
                .collect::<Vec<_>>(),
        );
        labels.push(label);
    }
    Ok((features, labels))
}

/// k-fold cross-validation with the session as the unit.
///
/// Each fold trains (standardizer included) on the other folds' frames and
/// scores the held-out sessions by their majority-frame decision.
pub fn cross_validate(
    sessions: &[Session],
    modality: Modality,
    hyperparams: Hyperparams,
    k: usize,
    seed: u64,
) -> Result<CvOutcome> {
    let (features, labels) = session_features(sessions, modality)?;
    let folds = kfold_split(&labels, k, seed)?;
    let mut decisions = vec![Emotion::Anger; sessions.len()];
    let mut confusion = ConfusionMatrix::default();
    for (f, held_out) in folds.iter().enumerate() {
        let train_idx: Vec<usize> = folds
            .iter()
            .enumerate()
            .filter(|&(g, _)| g != f)
            .flat_map(|(_, idx)| idx.iter().copied())
            .collect();
        let model = train_fold(
            modality,
            &features,
            &labels,
            &train_idx,
            hyperparams,
            fold_seed(seed, f),
        )?;
        for &i in held_out {
            let decided = model.predict_session(&features[i])?.decided;
            decisions[i] = decided;
            confusion.add(labels[i], decided);
        }
    }
    let mut report = metrics(&confusion)?;
    report.modality = Some(modality);
    report.folds = k;
    Ok(CvOutcome {
        folds,
        decisions,
        report,
    })
}

/// Median; the mean of the two middle values for even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[mid]
    } else {
        (v[mid - 1] + v[mid]) / 2.0
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModalityTiming {
    pub modality: Modality,
    pub frames: usize,
    pub seconds_per_frame: f64,
    pub frames_per_second: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingReport {
    pub repetitions: usize,
    pub per_modality: Vec<ModalityTiming>,
    /// Fusion seconds per frame.
    pub fusion_seconds: f64,
    /// `max(seconds_per_frame) + fusion_seconds`.
    pub total_seconds: f64,
    /// `1 / total_seconds`.
    pub throughput: f64,
    /// `1 / fusion_seconds`, the rate counting fusion alone.
    pub fusion_only_rate: f64,
}

impl TimingReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{:<10} {:>8} {:>14} {:>12}", "stage", "frames", "seconds/frame", "frames/sec").unwrap();
        for m in &self.per_modality {
            writeln!(
                out,
                "{:<10} {:>8} {:>14.3e} {:>12.1}",
                m.modality.token(),
                m.frames,
                m.seconds_per_frame,
                m.frames_per_second
            )
            .unwrap();
        }
        writeln!(
            out,
            "{:<10} {:>8} {:>14.3e} {:>12.1}",
            "fusion", "", self.fusion_seconds, self.fusion_only_rate
        )
        .unwrap();
        writeln!(
            out,
            "{:<10} {:>8} {:>14.3e} {:>12.1}",
            "total", "", self.total_seconds, self.throughput
        )
        .unwrap();
        writeln!(out, "median of {} repetitions", self.repetitions).unwrap();
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("stage,frames,seconds_per_frame,frames_per_second\n");
        for m in &self.per_modality {
            writeln!(
                out,
                "{},{},{},{}",
                m.modality.token(),
                m.frames,
                m.seconds_per_frame,
                m.frames_per_second
            )
            .unwrap();
        }
        writeln!(out, "fusion,,{},{}", self.fusion_seconds, self.fusion_only_rate).unwrap();
        writeln!(out, "total,,{},{}", self.total_seconds, self.throughput).unwrap();
        out
    }
}

/// Times per-frame classification (extraction plus prediction) for each
/// model's modality and per-frame fusion of the resulting decisions.
/// Reports medians over `repetitions` sequential runs.
pub fn bench_timing(
    models: &[ClassifierModel],
    sessions: &[Session],
    repetitions: usize,
) -> Result<TimingReport> {
    if repetitions < 3 {
        return Err(Error::Bench(format!(
            "need at least 3 repetitions, got {repetitions}"
        )));
    }
    if models.is_empty() {
        return Err(Error::Bench("no models to benchmark".into()));
    }
    let mut stage_samples: Vec<Vec<f64>> = vec![Vec::new(); models.len()];
    let mut fusion_samples = Vec::new();
    let mut frame_counts = vec![0; models.len()];
    for _ in 0..repetitions {
        let mut per_frame: Vec<Vec<crate::classifier::SessionPrediction>> = Vec::new();
        for (mi, model) in models.iter().enumerate() {
            let mine: Vec<&Session> = sessions
                .iter()
                .filter(|s| s.modality == model.modality && !s.is_empty())
                .collect();
            let frames: usize = mine.iter().map(|s| s.len()).sum();
            if frames == 0 {
                return Err(Error::Bench(format!("no {} frames to classify", model.modality)));
            }
            let start = Instant::now();
            let mut predictions = Vec::with_capacity(mine.len());
            for s in &mine {
                let vectors = extract_session(s)?;
                predictions.push(model.predict_session(&vectors)?);
            }
            stage_samples[mi].push(start.elapsed().as_secs_f64() / frames as f64);
            frame_counts[mi] = frames;
            per_frame.push(predictions);
        }
        // One fused decision per frame, across the benchmarked modalities.
        let streams: Vec<Vec<Emotion>> = per_frame
            .iter()
            .map(|preds| preds.iter().flat_map(|p| p.frames.iter().copied()).collect())
            .collect();
        let fused_frames = streams.iter().map(Vec::len).min().unwrap_or(0);
        let start = Instant::now();
        for n in 0..fused_frames {
            let decisions: Vec<ModalityDecision> = models
                .iter()
                .zip(&streams)
                .map(|(m, s)| {
                    let mut p = [0.0; Emotion::COUNT];
                    p[s[n].code()] = 1.0;
                    ModalityDecision {
                        modality: m.modality,
                        decision: Some(s[n]),
                        probabilities: Some(p),
                        samples: 1,
                    }
                })
                .collect();
            std::hint::black_box(fuse(&decisions)?);
        }
        fusion_samples.push(start.elapsed().as_secs_f64() / fused_frames.max(1) as f64);
    }
    let per_modality: Vec<ModalityTiming> = models
        .iter()
        .zip(&stage_samples)
        .zip(&frame_counts)
        .map(|((m, samples), &frames)| {
            let spf = median(samples).expect("repetitions >= 3");
            ModalityTiming {
                modality: m.modality,
                frames,
                seconds_per_frame: spf,
                frames_per_second: 1.0 / spf,
            }
        })
        .collect();
    let fusion_seconds = median(&fusion_samples).expect("repetitions >= 3");
    let stage_times: Vec<f64> = per_modality.iter().map(|m| m.seconds_per_frame).collect();
    let total_seconds = compose_timing(&stage_times, fusion_seconds)?;
    Ok(TimingReport {
        repetitions,
        per_modality,
        fusion_seconds,
        total_seconds,
        throughput: 1.0 / total_seconds,
        fusion_only_rate: 1.0 / fusion_seconds,
    })
}
