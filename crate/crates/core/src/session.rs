//! Emotions, modalities, tracked-point frames and recorded sessions.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nominal number of frames in one enacted recording.
pub const NOMINAL_FRAMES: usize = 100;

/// The seven emotion classes, with their fixed integer codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Emotion {
    Anger = 0,
    Happiness = 1,
    Surprise = 2,
    Disgust = 3,
    Fear = 4,
    Sadness = 5,
    Neutral = 6,
}

impl Emotion {
    pub const COUNT: usize = 7;

    /// All emotions in ascending code order.
    pub const ALL: [Emotion; 7] = [
        Emotion::Anger,
        Emotion::Happiness,
        Emotion::Surprise,
        Emotion::Disgust,
        Emotion::Fear,
        Emotion::Sadness,
        Emotion::Neutral,
    ];

    pub fn from_code(code: i64) -> Result<Self> {
        usize::try_from(code)
            .ok()
            .and_then(|c| Self::ALL.get(c).copied())
            .ok_or(Error::InvalidCode(code))
    }

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Emotion::Anger => "anger",
            Emotion::Happiness => "happiness",
            Emotion::Surprise => "surprise",
            Emotion::Disgust => "disgust",
            Emotion::Fear => "fear",
            Emotion::Sadness => "sadness",
            Emotion::Neutral => "neutral",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|e| e.name() == name)
            .ok_or_else(|| Error::UnknownEmotion(name.to_string()))
    }
}

impl fmt::Display for Emotion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One input channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Face,
    Head,
    Hand,
    Body,
    Template,
    Speech,
}

impl Modality {
    /// The four tracked-point modalities classified per frame.
    pub const GEOMETRIC: [Modality; 4] = [
        Modality::Face,
        Modality::Head,
        Modality::Hand,
        Modality::Body,
    ];

    pub const ALL: [Modality; 6] = [
        Modality::Face,
        Modality::Head,
        Modality::Hand,
        Modality::Body,
        Modality::Template,
        Modality::Speech,
    ];

    /// Tracked points per frame: the 60 non-rigid face points, 12 head
    /// points, 8 arm joints, 14 upper-body joints. Side channels have none.
    pub fn point_count(self) -> usize {
        match self {
            Modality::Face => 60,
            Modality::Head => 12,
            Modality::Hand => 8,
            Modality::Body => 14,
            Modality::Template | Modality::Speech => 0,
        }
    }

    pub fn is_geometric(self) -> bool {
        self.point_count() > 0
    }

    pub fn token(self) -> &'static str {
        match self {
            Modality::Face => "face",
            Modality::Head => "head",
            Modality::Hand => "hand",
            Modality::Body => "body",
            Modality::Template => "template",
            Modality::Speech => "speech",
        }
    }

    pub fn from_token(token: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|m| m.token() == token)
            .ok_or_else(|| Error::UnknownModality(token.to_string()))
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// Screen coordinate of a tracked point, in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self::new(self.x + dx, self.y + dy)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub index: u64,
    pub points: Vec<Point2>,
}

impl Frame {
    pub fn new(index: u64, points: Vec<Point2>) -> Self {
        Self { index, points }
    }
}

/// One recording of one subject in one modality.
#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub subject_id: String,
    pub session_id: String,
    pub label: Option<Emotion>,
    pub modality: Modality,
    pub frames: Vec<Frame>,
}

impl Session {
    /// Frame count N. Not required to equal [`NOMINAL_FRAMES`].
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    PointCount {
        position: usize,
        expected: usize,
        found: usize,
    },
    NonMonotonicIndex {
        position: usize,
        previous: u64,
        index: u64,
    },
    NonFinite {
        position: usize,
        point: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::PointCount {
                position,
                expected,
                found,
            } => write!(f, "frame #{position}: {found} points, expected {expected}"),
            Violation::NonMonotonicIndex {
                position,
                previous,
                index,
            } => write!(
                f,
                "frame #{position}: index {index} does not follow {previous}"
            ),
            Violation::NonFinite { position, point } => {
                write!(f, "frame #{position}: point {point} is not finite")
            }
        }
    }
}

/// Lists every broken session invariant. An empty list means the session is valid.
pub fn validate_session(session: &Session) -> Vec<Violation> {
    let expected = session.modality.point_count();
    let mut report = Vec::new();
    let mut previous: Option<u64> = None;
    for (position, frame) in session.frames.iter().enumerate() {
        if frame.points.len() != expected {
            report.push(Violation::PointCount {
                position,
                expected,
                found: frame.points.len(),
            });
        }
        if let Some(prev) = previous {
            if frame.index <= prev {
                report.push(Violation::NonMonotonicIndex {
                    position,
                    previous: prev,
                    index: frame.index,
                });
            }
        }
        previous = Some(frame.index);
        for (point, p) in frame.points.iter().enumerate() {
            if !p.is_finite() {
                report.push(Violation::NonFinite { position, point });
            }
        }
    }
    report
}
