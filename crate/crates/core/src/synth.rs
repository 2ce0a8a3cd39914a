//! Deterministic synthetic tracked-point sessions.
//!
//! Frame `t` of a session is `base + ramp(t) * offset + noise`, where the ramp
//! rises linearly from 0 on the first frame to 1 on the last and the noise is
//! isotropic Gaussian drawn from a seeded ChaCha stream.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::session::{Emotion, Frame, Modality, Point2, Session};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticArchetype {
    pub emotion: Emotion,
    pub modality: Modality,
    pub base_pose: Vec<Point2>,
    /// Full-expression displacement of each point, in pixels.
    pub offsets: Vec<Point2>,
    /// Standard deviation of the per-coordinate noise, in pixels.
    pub noise: f64,
}

impl SyntheticArchetype {
    fn check(&self) -> Result<()> {
        let m = self.modality.point_count();
        if m == 0 {
            return Err(Error::NoGeometry(self.modality));
        }
        if self.base_pose.len() != m || self.offsets.len() != m {
            return Err(Error::Shape {
                expected: m,
                found: if self.base_pose.len() != m {
                    self.base_pose.len()
                } else {
                    self.offsets.len()
                },
            });
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Parameter(format!(
                "noise scale {} must be finite and >= 0",
                self.noise
            )));
        }
        Ok(())
    }
}

/// Generates one session. Subject is `synthetic`, session id is the seed.
pub fn synth_generate(archetype: &SyntheticArchetype, frames: usize, seed: u64) -> Result<Session> {
    archetype.check()?;
    if frames == 0 {
        return Err(Error::Parameter("a session needs at least one frame".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, archetype.noise)
        .map_err(|e| Error::Parameter(e.to_string()))?;
    let frames = (0..frames)
        .map(|t| {
            let ramp = if frames > 1 {
                t as f64 / (frames - 1) as f64
            } else {
                1.0
            };
            let points = archetype
                .base_pose
                .iter()
                .zip(&archetype.offsets)
                .map(|(b, o)| {
                    let nx = normal.sample(&mut rng);
                    let ny = normal.sample(&mut rng);
                    Point2::new(b.x + ramp * o.x + nx, b.y + ramp * o.y + ny)
                })
                .collect();
            Frame::new(t as u64, points)
        })
        .collect();
    Ok(Session {
        subject_id: "synthetic".into(),
        session_id: seed.to_string(),
        label: Some(archetype.emotion),
        modality: archetype.modality,
        frames,
    })
}

/// Shared base pose plus one offset field per emotion, for one modality.
///
/// Point `i` of emotion `e` is displaced by radius `r` at angle
/// `phase_i + 2*pi*e/7`, with `r` chosen so the chord between any two
/// emotions' displacements is at least `separation` pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchetypeSet {
    pub modality: Modality,
    pub base_pose: Vec<Point2>,
    pub offsets: Vec<Vec<Point2>>,
    pub noise: f64,
}

impl ArchetypeSet {
    pub fn new(modality: Modality, separation: f64, noise: f64, seed: u64) -> Result<Self> {
        let m = modality.point_count();
        if m == 0 {
            return Err(Error::NoGeometry(modality));
        }
        if !(separation >= 0.0 && separation.is_finite()) {
            return Err(Error::Parameter(format!(
                "separation {separation} must be finite and >= 0"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Points spread over a 400x300 patch of a 640x480 screen.
        let base_pose: Vec<Point2> = (0..m)
            .map(|_| Point2::new(rng.gen_range(120.0..520.0), rng.gen_range(90.0..390.0)))
            .collect();
        let phases: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
        let radius = separation / (2.0 * (PI / Emotion::COUNT as f64).sin());
        let offsets = Emotion::ALL
            .iter()
            .map(|e| {
                let turn = 2.0 * PI * e.code() as f64 / Emotion::COUNT as f64;
                phases
                    .iter()
                    .map(|phi| Point2::new(radius * (phi + turn).cos(), radius * (phi + turn).sin()))
                    .collect()
            })
            .collect();
        Ok(Self {
            modality,
            base_pose,
            offsets,
            noise,
        })
    }

    pub fn archetype(&self, emotion: Emotion) -> SyntheticArchetype {
        SyntheticArchetype {
            emotion,
            modality: self.modality,
            base_pose: self.base_pose.clone(),
            offsets: self.offsets[emotion.code()].clone(),
            noise: self.noise,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusConfig {
    pub modalities: Vec<Modality>,
    pub sessions_per_emotion: usize,
    pub frames: usize,
    pub separation: f64,
    pub noise: f64,
    pub subjects: usize,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            modalities: Modality::GEOMETRIC.to_vec(),
            sessions_per_emotion: 10,
            frames: crate::session::NOMINAL_FRAMES,
            separation: 20.0,
            noise: 1.0,
            subjects: 5,
            seed: 42,
        }
    }
}

/// Generates the corpus: for each modality, every emotion, `sessions_per_emotion` sessions.
///
/// Subjects cycle `s01..`; session ids count `001..` per (modality, emotion).
/// The same `(subject, session)` pair names one recording across modalities.
pub fn synth_corpus(config: &CorpusConfig) -> Result<Vec<Session>> {
    if config.subjects == 0 {
        return Err(Error::Parameter("at least one subject is required".into()));
    }
    let mut master = ChaCha8Rng::seed_from_u64(config.seed);
    let mut sessions = Vec::new();
    for &modality in &config.modalities {
        let set = ArchetypeSet::new(modality, config.separation, config.noise, master.gen())?;
        for emotion in Emotion::ALL {
            let archetype = set.archetype(emotion);
            for i in 0..config.sessions_per_emotion {
                let mut s = synth_generate(&archetype, config.frames, master.gen())?;
                s.subject_id = format!("s{:02}", i % config.subjects + 1);
                s.session_id = format!("{}{:03}", emotion.code(), i + 1);
                sessions.push(s);
            }
        }
    }
    Ok(sessions)
}
