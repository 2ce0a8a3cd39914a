//! Multimodal affect recognition for product-feedback sessions.
//!
//! Tracked-point streams (face, head, hand, body) are turned into per-frame
//! geometric feature vectors and classified by per-modality linear SVMs. A
//! smile template on face snapshots and keyword lookup on speech transcripts
//! add two side channels. Session decisions from every channel are fused by
//! majority vote.

pub mod classifier;
pub mod error;
pub mod evaluation;
pub mod fusion;
pub mod geometry;
pub mod ingest;
pub mod session;
pub mod snapshot;
pub mod speech;
pub mod synth;

pub use error::{Error, Result};
pub use session::{Emotion, Frame, Modality, Point2, Session};
