//! Emotion from transcribed speech by confidence-gated keyword lookup.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::session::Emotion;

/// Words recognized below or at this confidence are ignored.
pub const DEFAULT_THRESHOLD: f64 = 0.3;

/// The disgust keyword set.
pub const DISGUST_WORDS: [&str; 14] = [
    "nasty", "foul", "bad", "ugly", "hideous", "awful", "terrible", "stink", "pathetic",
    "pitiful", "sick", "uggh", "eeks", "yuck",
];

#[derive(Debug, Clone, PartialEq)]
pub struct RecognizedWord {
    token: String,
    confidence: f64,
}

impl RecognizedWord {
    /// Normalizes `raw`; returns `Ok(None)` when nothing is left after stripping.
    pub fn new(raw: &str, confidence: f64) -> Result<Option<Self>> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::Parameter(format!(
                "word confidence {confidence} outside [0, 1]"
            )));
        }
        Ok(normalize_token(raw).map(|token| Self { token, confidence }))
    }

    pub fn token(&self) -> &str {
        &self.token
    }

    pub fn confidence(&self) -> f64 {
        self.confidence
    }
}

/// Lowercases and strips surrounding punctuation. Empty results are `None`.
pub fn normalize_token(raw: &str) -> Option<String> {
    let token = raw
        .trim_matches(|c: char| !c.is_alphanumeric())
        .to_lowercase();
    (!token.is_empty()).then_some(token)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    entries: BTreeMap<Emotion, BTreeSet<String>>,
    threshold: f64,
}

impl Vocabulary {
    /// Word sets must be pairwise disjoint across emotions.
    pub fn new(entries: BTreeMap<Emotion, BTreeSet<String>>, threshold: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&threshold) {
            return Err(Error::Vocabulary(format!(
                "threshold {threshold} outside [0, 1]"
            )));
        }
        let mut owner: BTreeMap<&str, Emotion> = BTreeMap::new();
        for (&emotion, words) in &entries {
            for w in words {
                if let Some(prev) = owner.insert(w, emotion) {
                    return Err(Error::Vocabulary(format!(
                        "word `{w}` listed under both {prev} and {emotion}"
                    )));
                }
            }
        }
        Ok(Self { entries, threshold })
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn with_threshold(mut self, threshold: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&threshold) {
            return Err(Error::Vocabulary(format!(
                "threshold {threshold} outside [0, 1]"
            )));
        }
        self.threshold = threshold;
        Ok(self)
    }

    pub fn words(&self, emotion: Emotion) -> Option<&BTreeSet<String>> {
        self.entries.get(&emotion)
    }

    pub fn emotions(&self) -> impl Iterator<Item = Emotion> + '_ {
        self.entries.keys().copied()
    }

    fn emotion_of(&self, token: &str) -> Option<Emotion> {
        self.entries
            .iter()
            .find(|(_, words)| words.contains(token))
            .map(|(&e, _)| e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeechDecision {
    /// `None` when nothing matched or the top tally is shared.
    pub emotion: Option<Emotion>,
    /// Matches per emotion code.
    pub tallies: [usize; Emotion::COUNT],
    /// Words that passed the confidence gate.
    pub accepted: usize,
}

pub fn lookup(words: &[RecognizedWord], vocab: &Vocabulary) -> SpeechDecision {
    let mut tallies = [0usize; Emotion::COUNT];
    let mut accepted = 0;
    for w in words.iter().filter(|w| w.confidence > vocab.threshold) {
        accepted += 1;
        if let Some(e) = vocab.emotion_of(&w.token) {
            tallies[e.code()] += 1;
        }
    }
    let best = tallies.iter().copied().max().unwrap_or(0);
    let emotion = if best == 0 || tallies.iter().filter(|&&n| n == best).count() > 1 {
        None
    } else {
        tallies
            .iter()
            .position(|&n| n == best)
            .map(|c| Emotion::ALL[c])
    };
    SpeechDecision {
        emotion,
        tallies,
        accepted,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vocab() -> Vocabulary {
        let mut entries = BTreeMap::new();
        entries.insert(
            Emotion::Disgust,
            DISGUST_WORDS.iter().map(|w| w.to_string()).collect(),
        );
        entries.insert(
            Emotion::Happiness,
            ["great", "love"].iter().map(|w| w.to_string()).collect(),
        );
        Vocabulary::new(entries, DEFAULT_THRESHOLD).unwrap()
    }

    fn word(raw: &str, c: f64) -> RecognizedWord {
        RecognizedWord::new(raw, c).unwrap().unwrap()
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_token("Nasty!").as_deref(), Some("nasty"));
        assert_eq!(normalize_token("YUCK").as_deref(), Some("yuck"));
        assert_eq!(normalize_token("..."), None);
        assert!(RecognizedWord::new("...", 0.5).unwrap().is_none());
        assert!(RecognizedWord::new("bad", 1.2).is_err());
    }

    #[test]
    fn keyword_decisions() {
        let v = vocab();
        assert_eq!(lookup(&[word("nasty", 0.5)], &v).emotion, Some(Emotion::Disgust));
        assert_eq!(lookup(&[word("nasty", 0.2)], &v).emotion, None);
        assert_eq!(lookup(&[word("nasty", 0.3)], &v).emotion, None);
        let d = lookup(&[word("yuck", 0.9), word("terrible", 0.8)], &v);
        assert_eq!(d.emotion, Some(Emotion::Disgust));
        assert_eq!(d.tallies[Emotion::Disgust.code()], 2);
        assert_eq!(lookup(&[word("table", 0.99)], &v).emotion, None);
    }

    #[test]
    fn tie_abstains() {
        let v = vocab();
        let d = lookup(&[word("bad", 0.9), word("love", 0.9)], &v);
        assert_eq!(d.emotion, None);
        let d = lookup(&[word("bad", 0.9), word("love", 0.9), word("sick", 0.4)], &v);
        assert_eq!(d.emotion, Some(Emotion::Disgust));
    }

    #[test]
    fn overlapping_sets_rejected() {
        let mut entries = BTreeMap::new();
        entries.insert(Emotion::Disgust, BTreeSet::from(["bad".to_string()]));
        entries.insert(Emotion::Anger, BTreeSet::from(["bad".to_string()]));
        assert!(Vocabulary::new(entries, 0.3).is_err());
        assert!(Vocabulary::new(BTreeMap::new(), 1.5).is_err());
    }

    fn words() -> impl Strategy<Value = Vec<RecognizedWord>> {
        let pool = prop::sample::select(vec![
            "nasty", "bad", "yuck", "great", "love", "table", "chair", "sick",
        ]);
        prop::collection::vec((pool, 0.0f64..=1.0), 0..12)
            .prop_map(|v| v.into_iter().map(|(w, c)| word(w, c)).collect())
    }

    proptest! {
        #[test]
        fn permutation_invariant(ws in words(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let v = vocab();
            let mut shuffled = ws.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(lookup(&ws, &v), lookup(&shuffled, &v));
        }

        #[test]
        fn higher_threshold_never_adds_matches(ws in words(), lo in 0.0f64..=1.0, hi in 0.0f64..=1.0) {
            let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
            let a = lookup(&ws, &vocab().with_threshold(lo).unwrap());
            let b = lookup(&ws, &vocab().with_threshold(hi).unwrap());
            for c in 0..Emotion::COUNT {
                prop_assert!(b.tallies[c] <= a.tallies[c]);
            }
        }
    }
}
