//! Run metadata written next to every command's outputs.

use std::fs;
use std::path::Path;

use affect_core::classifier::Hyperparams;
use affect_core::snapshot::TemplateParams;
use affect_core::Modality;
use anyhow::Context;
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct SnapshotParams {
    pub canny_low: f64,
    pub canny_high: f64,
    pub at_window: u32,
    pub at_offset: f64,
}

impl From<TemplateParams> for SnapshotParams {
    fn from(p: TemplateParams) -> Self {
        Self {
            canny_low: p.canny_low,
            canny_high: p.canny_high,
            at_window: p.window,
            at_offset: p.offset,
        }
    }
}

/// Everything needed to rerun a command. Holds no timestamps, so identical
/// invocations write identical records.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub modalities: Vec<Modality>,
    /// `null` for commands that draw no random numbers.
    pub seed: Option<u64>,
    pub hyperparameters: Option<Hyperparams>,
    pub k: Option<usize>,
    pub vocabulary: Option<String>,
    pub snapshot: Option<SnapshotParams>,
    pub extra: serde_json::Value,
}

impl RunConfig {
    pub fn new(command: &'static str) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            inputs: Vec::new(),
            outputs: Vec::new(),
            modalities: Vec::new(),
            seed: None,
            hyperparameters: None,
            k: None,
            vocabulary: None,
            snapshot: None,
            extra: serde_json::Value::Null,
        }
    }

    pub fn input(mut self, path: &Path) -> Self {
        self.inputs.push(path.display().to_string());
        self
    }

    pub fn output(mut self, path: &Path) -> Self {
        self.outputs.push(path.display().to_string());
        self
    }

    pub fn write(&self, path: &Path) -> anyhow::Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))
    }
}
