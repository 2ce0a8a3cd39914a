//! Per-modality linear SVM over frame feature vectors.
//!
//! One-versus-rest hinge-loss classifiers with L2 regularization, trained by
//! seeded stochastic subgradient descent (step `1 / (lambda * t)`, projection
//! onto the `1 / sqrt(lambda)` ball). The bias is learned as the weight of a
//! constant unit input. Features are standardized with statistics fitted on
//! the training data only.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{feature_dimension, FeatureVector};
use crate::session::{Emotion, Modality};

impl AsRef<[f64]> for FeatureVector {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    /// Population standard deviation; 1 for constant features.
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn dimension(&self) -> usize {
        self.mean.len()
    }

    pub fn standardize(&self, vector: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; vector.len()];
        self.standardize_into(vector, &mut out)?;
        Ok(out)
    }

    fn standardize_into(&self, vector: &[f64], out: &mut [f64]) -> Result<()> {
        check_dim(self.dimension(), vector.len())?;
        for (((o, x), m), s) in out.iter_mut().zip(vector).zip(&self.mean).zip(&self.scale) {
            *o = (x - m) / s;
        }
        Ok(())
    }
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Shape { expected, found })
    }
}

pub fn fit_standardizer<V: AsRef<[f64]>>(vectors: &[V]) -> Result<Standardizer> {
    let first = vectors
        .first()
        .ok_or_else(|| Error::Parameter("standardizer needs at least one vector".into()))?;
    let dim = first.as_ref().len();
    let n = vectors.len() as f64;
    let mut mean = vec![0.0; dim];
    for v in vectors {
        let v = v.as_ref();
        check_dim(dim, v.len())?;
        mean.iter_mut().zip(v).for_each(|(m, x)| *m += x);
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; dim];
    for v in vectors {
        for ((s, x), m) in var.iter_mut().zip(v.as_ref()).zip(&mean) {
            *s += (x - m) * (x - m);
        }
    }
    let scale = var
        .into_iter()
        .map(|s| {
            let sd = (s / n).sqrt();
            if sd > 0.0 && sd.is_finite() {
                sd
            } else {
                1.0
            }
        })
        .collect();
    Ok(Standardizer { mean, scale })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub lambda: f64,
    pub epochs: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            lambda: 1e-4,
            epochs: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierModel {
    pub modality: Modality,
    /// Classes seen in training, ascending by code. Absent classes never win.
    pub classes: Vec<Emotion>,
    /// One weight vector per entry of `classes`, in standardized space.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
    pub standardizer: Standardizer,
    pub hyperparams: Hyperparams,
    pub seed: u64,
}

/// Weight vector `scale * direction`, so the per-step shrink is O(1).
struct ScaledVector {
    scale: f64,
    direction: Vec<f64>,
    norm_sq: f64,
}

impl ScaledVector {
    fn new(dim: usize) -> Self {
        Self {
            scale: 1.0,
            direction: vec![0.0; dim],
            norm_sq: 0.0,
        }
    }

    fn dot(&self, x: &[f64], bias_input: f64) -> f64 {
        let (w, b) = self.direction.split_at(x.len());
        self.scale * (dot(w, x) + b[0] * bias_input)
    }

    fn shrink(&mut self, factor: f64) {
        if factor == 0.0 {
            self.direction.iter_mut().for_each(|v| *v = 0.0);
            self.scale = 1.0;
            self.norm_sq = 0.0;
        } else {
            self.scale *= factor;
            if self.scale < 1e-9 {
                let s = self.scale;
                self.direction.iter_mut().for_each(|v| *v *= s);
                self.norm_sq *= s * s;
                self.scale = 1.0;
            }
        }
    }

    /// `w += step * [x, bias_input]`.
    fn add(&mut self, step: f64, x: &[f64], bias_input: f64, x_norm_sq: f64) {
        let c = step / self.scale;
        let (w, b) = self.direction.split_at_mut(x.len());
        let cross = dot(w, x) + b[0] * bias_input;
        w.iter_mut().zip(x).for_each(|(wi, xi)| *wi += c * xi);
        b[0] += c * bias_input;
        self.norm_sq += 2.0 * c * cross + c * c * x_norm_sq;
    }

    fn norm(&self) -> f64 {
        self.scale.abs() * self.norm_sq.max(0.0).sqrt()
    }

    fn into_weights(self) -> (Vec<f64>, f64) {
        let s = self.scale;
        let mut w: Vec<f64> = self.direction.into_iter().map(|v| v * s).collect();
        let b = w.pop().unwrap_or(0.0);
        (w, b)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn histogram(labels: &[Emotion]) -> Vec<(Emotion, usize)> {
    Emotion::ALL
        .iter()
        .map(|&e| (e, labels.iter().filter(|&&l| l == e).count()))
        .filter(|&(_, n)| n > 0)
        .collect()
}

/// Trains the one-versus-rest model. `(vectors, labels, hyperparams, seed)`
/// fully determine the result.
pub fn train<V: AsRef<[f64]>>(
    modality: Modality,
    vectors: &[V],
    labels: &[Emotion],
    hyperparams: Hyperparams,
    seed: u64,
) -> Result<ClassifierModel> {
    let dim = feature_dimension(modality)?;
    if vectors.len() != labels.len() {
        return Err(Error::Parameter(format!(
            "{} vectors but {} labels",
            vectors.len(),
            labels.len()
        )));
    }
    let hist = histogram(labels);
    if hist.len() < 2 {
        return Err(Error::DegenerateTraining { histogram: hist });
    }
    if !(hyperparams.lambda > 0.0 && hyperparams.lambda.is_finite()) || hyperparams.epochs == 0 {
        return Err(Error::Parameter(format!(
            "lambda must be positive and epochs >= 1, got {hyperparams:?}"
        )));
    }
    for v in vectors {
        check_dim(dim, v.as_ref().len())?;
    }
    let standardizer = fit_standardizer(vectors)?;
    let classes: Vec<Emotion> = hist.iter().map(|&(e, _)| e).collect();
    let lambda = hyperparams.lambda;
    let radius = 1.0 / lambda.sqrt();
    let mut models: Vec<ScaledVector> = classes.iter().map(|_| ScaledVector::new(dim + 1)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..vectors.len()).collect();
    let mut x = vec![0.0; dim];
    let mut t = 0u64;
    for _ in 0..hyperparams.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            standardizer.standardize_into(vectors[i].as_ref(), &mut x)?;
            let x_norm_sq = dot(&x, &x) + 1.0;
            for (model, &class) in models.iter_mut().zip(&classes) {
                let y = if labels[i] == class { 1.0 } else { -1.0 };
                let margin = y * model.dot(&x, 1.0);
                model.shrink(1.0 - 1.0 / t as f64);
                if margin < 1.0 {
                    model.add(eta * y, &x, 1.0, x_norm_sq);
                }
                let norm = model.norm();
                if norm > radius {
                    model.shrink(radius / norm);
                }
            }
        }
    }
    let (weights, biases) = models.into_iter().map(ScaledVector::into_weights).unzip();
    Ok(ClassifierModel {
        modality,
        classes,
        weights,
        biases,
        standardizer,
        hyperparams,
        seed,
    })
}

impl ClassifierModel {
    pub fn dimension(&self) -> usize {
        self.standardizer.dimension()
    }

    /// `w . x + b` per trained class, on the standardized vector.
    pub fn scores(&self, vector: &[f64]) -> Result<Vec<(Emotion, f64)>> {
        let x = self.standardizer.standardize(vector)?;
        Ok(self
            .classes
            .iter()
            .zip(self.weights.iter().zip(&self.biases))
            .map(|(&e, (w, b))| (e, dot(w, &x) + b))
            .collect())
    }

    /// Highest-scoring class; ties go to the lowest emotion code.
    pub fn predict_frame(&self, vector: &[f64]) -> Result<Emotion> {
        Ok(argmax_lowest_code(&self.scores(vector)?))
    }

    pub fn predict_session<V: AsRef<[f64]>>(&self, vectors: &[V]) -> Result<SessionPrediction> {
        let frames = vectors
            .iter()
            .map(|v| self.predict_frame(v.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        SessionPrediction::from_frames(frames)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            modality: self.modality,
            dimension: self.dimension(),
            classes: self.classes.iter().map(|e| e.code()).collect(),
            weights: self.weights.clone(),
            biases: self.biases.clone(),
            mean: self.standardizer.mean.clone(),
            scale: self.standardizer.scale.clone(),
            lambda: self.hyperparams.lambda,
            epochs: self.hyperparams.epochs,
            seed: self.seed,
        };
        let mut bytes = serde_json::to_vec(&file).expect("model serializes");
        bytes.push(b'\n');
        bytes
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let file: ModelFile =
            serde_json::from_slice(bytes).map_err(|e| Error::Model(e.to_string()))?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(Error::Model(format!(
                "unsupported format {} v{}",
                file.format, file.version
            )));
        }
        let expected = feature_dimension(file.modality)?;
        let inconsistent = file.dimension != expected
            || file.mean.len() != expected
            || file.scale.len() != expected
            || file.weights.len() != file.classes.len()
            || file.biases.len() != file.classes.len()
            || file.weights.iter().any(|w| w.len() != expected);
        if inconsistent {
            return Err(Error::Model(format!(
                "dimensions inconsistent with {} (expected {expected})",
                file.modality
            )));
        }
        if file.scale.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Model("standardization scale must be positive".into()));
        }
        let classes = file
            .classes
            .iter()
            .map(|&c| Emotion::from_code(c as i64))
            .collect::<Result<Vec<_>>>()?;
        if classes.len() < 2 || classes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Model(
                "class codes must be at least two, strictly ascending".into(),
            ));
        }
        Ok(Self {
            modality: file.modality,
            classes,
            weights: file.weights,
            biases: file.biases,
            standardizer: Standardizer {
                mean: file.mean,
                scale: file.scale,
            },
            hyperparams: Hyperparams {
                lambda: file.lambda,
                epochs: file.epochs,
            },
            seed: file.seed,
        })
    }
}

const MODEL_FORMAT: &str = "affect-linear-svm";
const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    modality: Modality,
    dimension: usize,
    classes: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<f64>,
    mean: Vec<f64>,
    scale: Vec<f64>,
    lambda: f64,
    epochs: usize,
    seed: u64,
}

fn argmax_lowest_code(scores: &[(Emotion, f64)]) -> Emotion {
    let mut best = scores[0];
    for &(e, s) in &scores[1..] {
        if s > best.1 || (s == best.1 && e < best.0) {
            best = (e, s);
        }
    }
    best.0
}

/// Per-frame decisions of one session and their empirical probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionPrediction {
    pub frames: Vec<Emotion>,
    pub counts: [usize; Emotion::COUNT],
    /// `P_e = n_e / N`.
    pub probabilities: [f64; Emotion::COUNT],
    /// `argmax P_e`, lowest code on ties.
    pub decided: Emotion,
}

impl SessionPrediction {
    pub fn from_frames(frames: Vec<Emotion>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::EmptySession);
        }
        let mut counts = [0usize; Emotion::COUNT];
        for e in &frames {
            counts[e.code()] += 1;
        }
        let n = frames.len() as f64;
        let probabilities = counts.map(|c| c as f64 / n);
        let mut decided = 0;
        for c in 1..Emotion::COUNT {
            if counts[c] > counts[decided] {
                decided = c;
            }
        }
        Ok(Self {
            frames,
            counts,
            probabilities,
            decided: Emotion::ALL[decided],
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    /// Two hand-modality clusters 10 apart along feature 0, unit noise elsewhere.
    fn two_clusters(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<Emotion>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..n {
            let label = if i % 2 == 0 { Emotion::Anger } else { Emotion::Happiness };
            let mut v: Vec<f64> = (0..72).map(|_| noise.sample(&mut rng)).collect();
            v[0] = if label == Emotion::Anger { 0.0 } else { 12.0 } + rng.gen_range(-1.0..1.0);
            xs.push(v);
            ys.push(label);
        }
        (xs, ys)
    }

    fn nearest_centroid(xs: &[Vec<f64>], ys: &[Emotion], x: &[f64]) -> Emotion {
        let mut best = (Emotion::Anger, f64::INFINITY);
        for e in [Emotion::Anger, Emotion::Happiness] {
            let members: Vec<&Vec<f64>> =
                xs.iter().zip(ys).filter(|(_, &y)| y == e).map(|(v, _)| v).collect();
            let d: f64 = (0..x.len())
                .map(|j| {
                    let c = members.iter().map(|v| v[j]).sum::<f64>() / members.len() as f64;
                    (x[j] - c).powi(2)
                })
                .sum();
            if d < best.1 {
                best = (e, d);
            }
        }
        best.0
    }

    #[test]
    fn standardizer_basics() {
        let s = fit_standardizer(&[vec![0.0], vec![2.0]]).unwrap();
        assert_eq!((s.mean[0], s.scale[0]), (1.0, 1.0));
        assert_eq!(s.standardize(&[0.0]).unwrap(), vec![-1.0]);
        assert_eq!(s.standardize(&[2.0]).unwrap(), vec![1.0]);

        let s = fit_standardizer(&[vec![5.0, 1.0], vec![5.0, 3.0], vec![5.0, 8.0]]).unwrap();
        assert_eq!(s.scale[0], 1.0);
        assert_eq!(s.standardize(&[5.0, 1.0]).unwrap()[0], 0.0);
        assert!(s.standardize(&s.mean.clone()).unwrap().iter().all(|&v| v == 0.0));
        assert!(matches!(s.standardize(&[1.0]), Err(Error::Shape { .. })));
        assert!(fit_standardizer::<Vec<f64>>(&[]).is_err());
        assert!(fit_standardizer(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn separable_clusters_are_learned() {
        let (xs, ys) = two_clusters(1000, 1);
        let model = train(Modality::Hand, &xs, &ys, Hyperparams::default(), 9).unwrap();
        let train_acc = xs
            .iter()
            .zip(&ys)
            .filter(|(x, &y)| model.predict_frame(x).unwrap() == y)
            .count() as f64
            / 1000.0;
        assert!(train_acc >= 0.99, "train accuracy {train_acc}");

        let (tx, ty) = two_clusters(200, 2);
        let held_out = tx
            .iter()
            .zip(&ty)
            .filter(|(x, &y)| model.predict_frame(x).unwrap() == y)
            .count() as f64
            / 200.0;
        let oracle = tx
            .iter()
            .zip(&ty)
            .filter(|(x, &y)| nearest_centroid(&xs, &ys, x) == y)
            .count() as f64
            / 200.0;
        assert!(held_out >= 0.99, "held-out accuracy {held_out}");
        assert!(oracle >= 0.99, "nearest-centroid accuracy {oracle}");

        // Deep inside the anger cluster.
        let mut deep = vec![0.0; 72];
        deep[0] = -3.0;
        assert_eq!(model.predict_frame(&deep).unwrap(), Emotion::Anger);
    }

    #[test]
    fn training_is_deterministic() {
        let (xs, ys) = two_clusters(100, 3);
        let a = train(Modality::Hand, &xs, &ys, Hyperparams::default(), 5).unwrap();
        let b = train(Modality::Hand, &xs, &ys, Hyperparams::default(), 5).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
    }

    #[test]
    fn degenerate_and_shape_errors() {
        let xs = vec![vec![0.0; 72]; 4];
        let ys = vec![Emotion::Anger; 4];
        match train(Modality::Hand, &xs, &ys, Hyperparams::default(), 0) {
            Err(Error::DegenerateTraining { histogram }) => {
                assert_eq!(histogram, vec![(Emotion::Anger, 4)])
            }
            other => panic!("{other:?}"),
        }
        let xs = vec![vec![0.0; 72], vec![0.0; 71]];
        let ys = vec![Emotion::Anger, Emotion::Fear];
        assert!(matches!(
            train(Modality::Hand, &xs, &ys, Hyperparams::default(), 0),
            Err(Error::Shape { expected: 72, found: 71 })
        ));
    }

    fn zero_model(classes: Vec<Emotion>) -> ClassifierModel {
        ClassifierModel {
            modality: Modality::Hand,
            weights: vec![vec![0.0; 72]; classes.len()],
            biases: vec![0.0; classes.len()],
            classes,
            standardizer: Standardizer {
                mean: vec![0.0; 72],
                scale: vec![1.0; 72],
            },
            hyperparams: Hyperparams::default(),
            seed: 0,
        }
    }

    #[test]
    fn ties_go_to_lowest_code() {
        let m = zero_model(vec![Emotion::Surprise, Emotion::Fear, Emotion::Neutral]);
        assert_eq!(m.predict_frame(&[3.0; 72]).unwrap(), Emotion::Surprise);
        assert!(matches!(m.predict_frame(&[0.0; 10]), Err(Error::Shape { .. })));
    }

    #[test]
    fn session_probabilities() {
        let mut frames = vec![Emotion::Anger; 60];
        frames.extend(vec![Emotion::Happiness; 40]);
        let p = SessionPrediction::from_frames(frames).unwrap();
        assert_eq!(p.probabilities[0], 0.6);
        assert_eq!(p.decided, Emotion::Anger);

        let mut frames = vec![Emotion::Happiness; 50];
        frames.extend(vec![Emotion::Anger; 50]);
        assert_eq!(SessionPrediction::from_frames(frames).unwrap().decided, Emotion::Anger);
        assert!(matches!(
            SessionPrediction::from_frames(vec![]),
            Err(Error::EmptySession)
        ));
    }

    #[test]
    fn model_bytes_round_trip_and_validation() {
        let (xs, ys) = two_clusters(60, 4);
        let model = train(Modality::Hand, &xs, &ys, Hyperparams { lambda: 1e-3, epochs: 3 }, 2).unwrap();
        let bytes = model.to_bytes();
        assert_eq!(ClassifierModel::from_bytes(&bytes).unwrap(), model);

        let mut value: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
        value["weights"][0].as_array_mut().unwrap().pop();
        let broken = serde_json::to_vec(&value).unwrap();
        assert!(matches!(ClassifierModel::from_bytes(&broken), Err(Error::Model(_))));

        let mut value: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
        value["modality"] = "head".into();
        let broken = serde_json::to_vec(&value).unwrap();
        assert!(ClassifierModel::from_bytes(&broken).is_err());
    }

    proptest! {
        #[test]
        fn positive_score_scaling_keeps_the_argmax(
            weights in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 72), 3),
            biases in prop::collection::vec(-3.0f64..3.0, 3),
            x in prop::collection::vec(-5.0f64..5.0, 72),
            exponent in -6i32..7,
        ) {
            // Powers of two scale every product and partial sum exactly.
            let k = 2f64.powi(exponent);
            let mut m = zero_model(vec![Emotion::Anger, Emotion::Disgust, Emotion::Sadness]);
            m.weights = weights;
            m.biases = biases;
            let before = m.predict_frame(&x).unwrap();
            m.weights.iter_mut().flatten().for_each(|w| *w *= k);
            m.biases.iter_mut().for_each(|b| *b *= k);
            prop_assert_eq!(before, m.predict_frame(&x).unwrap());
        }
    }
}
