//! Subcommand implementations. Each returns `Ok(false)` when some items
//! failed but the run completed.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use affect_core::classifier::{train as train_model, ClassifierModel, Hyperparams};
use affect_core::evaluation::{bench_timing, cross_validate, MetricsReport};
use affect_core::fusion::{fuse, FusionResult, ModalityDecision, ProductVerdict};
use affect_core::geometry::extract_session;
use affect_core::ingest::{
    default_vocabulary, load_vocabulary, read_feature_file, read_raw_points, read_roi,
    read_snapshot, read_transcript, write_feature_file, write_raw_points, SessionMeta,
};
use affect_core::snapshot::{template_classify, TemplateParams};
use affect_core::speech::{lookup, Vocabulary};
use affect_core::synth::{synth_corpus, CorpusConfig};
use affect_core::{Emotion, Modality, Session};
use anyhow::{anyhow, bail, Context, Result};
use serde_json::json;

use crate::run_config::RunConfig;
use crate::Format;

/// Files in `dir` with extension `ext`, sorted by path.
fn list_files(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).with_context(|| format!("reading directory {}", dir.display()))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == ext) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn load_vocab(path: Option<&Path>) -> Result<Vocabulary> {
    match path {
        Some(p) => load_vocabulary(p).with_context(|| format!("loading vocabulary {}", p.display())),
        None => Ok(default_vocabulary()),
    }
}

fn load_sessions(dir: &Path) -> Result<Vec<Session>> {
    let files = list_files(dir, "csv")?;
    if files.is_empty() {
        bail!("no input: {} holds no .csv files", dir.display());
    }
    files
        .iter()
        .map(|p| read_raw_points(p).map_err(anyhow::Error::from))
        .collect()
}

fn load_model(path: &Path) -> Result<ClassifierModel> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    ClassifierModel::from_bytes(&bytes).with_context(|| format!("loading {}", path.display()))
}

fn sorted_unique(mut modalities: Vec<Modality>) -> Vec<Modality> {
    modalities.sort();
    modalities.dedup();
    modalities
}

pub fn extract(input: &Path, out: &Path) -> Result<bool> {
    let files = list_files(input, "csv")?;
    if files.is_empty() {
        bail!("no input: {} holds no .csv files", input.display());
    }
    create_dir(out)?;
    if fs::canonicalize(input)? == fs::canonicalize(out)? {
        bail!("output directory must differ from the input directory");
    }
    let mut failed = 0;
    for path in &files {
        let result = (|| -> Result<(String, usize, usize)> {
            let session = read_raw_points(path)?;
            let features = extract_session(&session)?;
            let meta = SessionMeta::of_session(&session).ok_or_else(|| anyhow!("unlabeled session"))?;
            let name = meta.file_name();
            write_feature_file(&features, &out.join(&name))?;
            let width = features.first().map_or(0, |f| f.values.len());
            Ok((name, features.len(), width))
        })();
        match result {
            Ok((name, frames, width)) => println!("ok {name}: {frames} frames x {width} features"),
            Err(e) => {
                failed += 1;
                eprintln!("failed {}: {e:#}", path.display());
            }
        }
    }
    println!("{} of {} files extracted", files.len() - failed, files.len());
    RunConfig::new("extract")
        .input(input)
        .output(out)
        .write(&out.join("run.json"))?;
    Ok(failed == 0)
}

pub fn train(input: &Path, modality: Modality, out: &Path, seed: u64, hp: Hyperparams) -> Result<bool> {
    let mut tables = Vec::new();
    for path in list_files(input, "csv")? {
        let meta = SessionMeta::from_path(&path)?;
        if meta.modality == modality {
            tables.push(read_feature_file(&path)?);
        }
    }
    if tables.is_empty() {
        bail!("no input: no {modality} feature files in {}", input.display());
    }
    let mut vectors: Vec<&[f64]> = Vec::new();
    let mut labels = Vec::new();
    for t in &tables {
        for row in &t.rows {
            vectors.push(row);
            labels.push(t.meta.label);
        }
    }
    let model = train_model(modality, &vectors, &labels, hp, seed)?;
    write_file(out, model.to_bytes())?;
    let classes: Vec<String> = model
        .classes
        .iter()
        .map(|&c| format!("{}:{}", c.name(), labels.iter().filter(|&&l| l == c).count()))
        .collect();
    println!(
        "trained {modality} model on {} frames from {} sessions; classes {}",
        vectors.len(),
        tables.len(),
        classes.join(" ")
    );
    let mut meta = RunConfig::new("train").input(input).output(out);
    meta.modalities = vec![modality];
    meta.seed = Some(seed);
    meta.hyperparameters = Some(hp);
    meta.write(&out.with_extension("run.json"))?;
    Ok(true)
}

pub struct DetectConfig {
    pub input: Option<PathBuf>,
    pub models: Vec<PathBuf>,
    pub modalities: Vec<Modality>,
    pub transcripts: Option<PathBuf>,
    pub snapshots: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub template: TemplateParams,
    pub format: Format,
    pub out: Option<PathBuf>,
}

#[derive(Default)]
struct SessionInputs {
    raw: Vec<(Modality, PathBuf)>,
    transcript: Option<PathBuf>,
    snapshots: Vec<PathBuf>,
}

/// `(subject, session)` from a `{subject}_{session}` stem.
fn session_key(stem: &str) -> Option<(String, String)> {
    let (subject, session) = stem.rsplit_once('_')?;
    (!subject.is_empty() && !session.is_empty()).then(|| (subject.to_string(), session.to_string()))
}

fn stem(path: &Path) -> &str {
    path.file_stem().and_then(|s| s.to_str()).unwrap_or("")
}

struct Detector<'a> {
    models: &'a BTreeMap<Modality, ClassifierModel>,
    vocab: &'a Vocabulary,
    template: TemplateParams,
}

impl Detector<'_> {
    fn run(&self, inputs: &SessionInputs) -> Result<FusionResult> {
        let mut decisions = Vec::new();
        let mut timings = Vec::new();
        for (modality, path) in &inputs.raw {
            let model = &self.models[modality];
            let start = Instant::now();
            let session = read_raw_points(path)?;
            let features = extract_session(&session)?;
            let prediction = model.predict_session(&features)?;
            timings.push((*modality, start.elapsed().as_secs_f64() / features.len() as f64));
            decisions.push(ModalityDecision::from_prediction(*modality, &prediction));
        }
        if !inputs.snapshots.is_empty() {
            let mut smiles = 0;
            for path in &inputs.snapshots {
                let snap = read_snapshot(path)?;
                let roi = snap
                    .roi
                    .ok_or_else(|| anyhow!("{} has no .roi sidecar", path.display()))?;
                let outcome = template_classify(&snap.image, &roi, &self.template)
                    .with_context(|| format!("snapshot {}", path.display()))?;
                smiles += usize::from(outcome.decision.is_some());
            }
            let n = inputs.snapshots.len();
            // Happiness when most snapshots show a smile.
            let decision = (2 * smiles > n).then_some(Emotion::Happiness);
            decisions.push(ModalityDecision::side_channel(Modality::Template, decision, n));
        }
        if let Some(path) = &inputs.transcript {
            let words = read_transcript(path)?;
            let d = lookup(&words, self.vocab);
            decisions.push(ModalityDecision::side_channel(Modality::Speech, d.emotion, d.accepted));
        }
        let start = Instant::now();
        let result = fuse(&decisions)?;
        let fusion = start.elapsed().as_secs_f64();
        if timings.is_empty() {
            Ok(result)
        } else {
            Ok(result.with_timing(timings, fusion)?)
        }
    }
}

pub fn detect(cfg: DetectConfig) -> Result<bool> {
    let mut models = BTreeMap::new();
    for path in &cfg.models {
        let model = load_model(path)?;
        let modality = model.modality;
        if models.insert(modality, model).is_some() {
            bail!("more than one model for modality {modality}");
        }
    }
    let modalities = if cfg.modalities.is_empty() {
        models.keys().copied().collect()
    } else {
        sorted_unique(cfg.modalities.clone())
    };
    for m in &modalities {
        if !m.is_geometric() {
            bail!("{m} takes no model; pass --snapshots or --transcripts instead");
        }
        if !models.contains_key(m) {
            bail!("no model for requested modality {m}");
        }
    }
    if cfg.input.is_some() && modalities.is_empty() {
        bail!("--input needs at least one --model");
    }
    if cfg.input.is_none() && cfg.transcripts.is_none() && cfg.snapshots.is_none() {
        bail!("no input: pass --input, --transcripts or --snapshots");
    }
    let vocab = load_vocab(cfg.vocab.as_deref())?;

    let mut failed = 0;
    let mut report_failure = |what: &Path, e: &dyn std::fmt::Display| {
        failed += 1;
        eprintln!("failed {}: {e}", what.display());
    };
    let mut sessions: BTreeMap<(String, String), SessionInputs> = BTreeMap::new();
    if let Some(dir) = &cfg.input {
        for path in list_files(dir, "csv")? {
            match SessionMeta::from_path(&path) {
                Ok(meta) if modalities.contains(&meta.modality) => sessions
                    .entry((meta.subject, meta.session))
                    .or_default()
                    .raw
                    .push((meta.modality, path)),
                Ok(_) => {}
                Err(e) => report_failure(&path, &e),
            }
        }
    }
    if let Some(dir) = &cfg.transcripts {
        for path in list_files(dir, "csv")? {
            match session_key(stem(&path)) {
                Some(key) => sessions.entry(key).or_default().transcript = Some(path),
                None => report_failure(&path, &"expected {subject}_{session}.csv"),
            }
        }
    }
    if let Some(dir) = &cfg.snapshots {
        for path in list_files(dir, "png")? {
            match stem(&path).rsplit_once('_').and_then(|(s, _)| session_key(s)) {
                Some(key) => sessions.entry(key).or_default().snapshots.push(path),
                None => report_failure(&path, &"expected {subject}_{session}_{n}.png"),
            }
        }
    }
    if sessions.is_empty() {
        bail!("no input sessions found");
    }

    let detector = Detector {
        models: &models,
        vocab: &vocab,
        template: cfg.template,
    };
    let mut lines = Vec::new();
    let mut records = Vec::new();
    let mut verdicts: BTreeMap<ProductVerdict, usize> = BTreeMap::new();
    for ((subject, session), inputs) in &mut sessions {
        let id = format!("{subject}_{session}");
        inputs.raw.sort();
        if let Some(w) = inputs.raw.windows(2).find(|w| w[0].0 == w[1].0) {
            failed += 1;
            eprintln!("failed {id}: two {} files for one session", w[0].0);
            continue;
        }
        match detector.run(inputs) {
            Ok(result) => {
                let verdict = ProductVerdict::of(result.fused);
                *verdicts.entry(verdict).or_default() += 1;
                lines.push(format!("{},{verdict}", result.report_line(&id)));
                records.push(json!({
                    "session": id,
                    "decisions": result.decisions.iter().map(|d| json!({
                        "modality": d.modality,
                        "decision": d.decision,
                        "samples": d.samples,
                    })).collect::<Vec<_>>(),
                    "votes": result.votes,
                    "fused": result.fused,
                    "verdict": verdict.to_string(),
                    "total_seconds": result.timing.as_ref().map(|t| t.total),
                }));
            }
            Err(e) => {
                failed += 1;
                eprintln!("failed {id}: {e:#}");
            }
        }
    }
    let counts = [ProductVerdict::Positive, ProductVerdict::Negative, ProductVerdict::Neutral]
        .map(|v| (v, verdicts.get(&v).copied().unwrap_or(0)));
    let report = match cfg.format {
        Format::Json => {
            let summary: BTreeMap<String, usize> = counts.iter().map(|(v, n)| (v.to_string(), *n)).collect();
            let mut s = serde_json::to_string_pretty(&json!({
                "sessions": records,
                "verdicts": summary,
                "failed": failed,
            }))?;
            s.push('\n');
            s
        }
        Format::Text | Format::Csv => {
            let mut s = String::from("session,decisions,fused,total_seconds,verdict\n");
            for l in &lines {
                s.push_str(l);
                s.push('\n');
            }
            if cfg.format == Format::Text {
                let summary: Vec<String> = counts.iter().map(|(v, n)| format!("{v} {n}")).collect();
                s.push_str(&format!("verdicts: {}; failed {failed}\n", summary.join(", ")));
            }
            s
        }
    };
    print!("{report}");
    if let Some(dir) = &cfg.out {
        create_dir(dir)?;
        let report_path = dir.join(report_name("detect", cfg.format));
        write_file(&report_path, &report)?;
        let mut meta = RunConfig::new("detect").output(&report_path);
        for p in [&cfg.input, &cfg.transcripts, &cfg.snapshots].into_iter().flatten() {
            meta = meta.input(p);
        }
        for p in &cfg.models {
            meta = meta.input(p);
        }
        meta.modalities = modalities;
        meta.vocabulary = cfg.vocab.as_ref().map(|p| p.display().to_string());
        meta.snapshot = Some(cfg.template.into());
        meta.write(&dir.join("run.json"))?;
    }
    Ok(failed == 0)
}

fn report_name(stem: &str, format: Format) -> String {
    let ext = match format {
        Format::Text => "txt",
        Format::Json => "json",
        Format::Csv => "csv",
    };
    format!("{stem}.{ext}")
}

fn metrics_json(report: &MetricsReport) -> serde_json::Value {
    json!({
        "modality": report.modality,
        "folds": report.folds,
        "sessions": report.total,
        "accuracy": report.accuracy,
        "per_class": report.per_class.iter().map(|m| json!({
            "emotion": m.emotion,
            "classification_rate": m.classification_rate,
            "recall": m.recall,
            "precision": m.precision,
            "tp": m.true_positives,
            "fp": m.false_positives,
            "fn": m.false_negatives,
        })).collect::<Vec<_>>(),
        "confusion": report.confusion.counts,
    })
}

pub fn evaluate(
    input: &Path,
    modalities: Vec<Modality>,
    k: usize,
    seed: u64,
    hp: Hyperparams,
    format: Format,
    out: Option<&Path>,
) -> Result<bool> {
    let sessions = load_sessions(input)?;
    let present = sorted_unique(sessions.iter().map(|s| s.modality).collect());
    let modalities = if modalities.is_empty() {
        present
    } else {
        let wanted = sorted_unique(modalities);
        if let Some(m) = wanted.iter().find(|m| !present.contains(m)) {
            bail!("no {m} sessions in {}", input.display());
        }
        wanted
    };
    let mut reports = Vec::new();
    for &m in &modalities {
        let mine: Vec<Session> = sessions.iter().filter(|s| s.modality == m).cloned().collect();
        let outcome = cross_validate(&mine, m, hp, k, seed).with_context(|| format!("evaluating {m}"))?;
        reports.push(outcome.report);
    }
    let text = match format {
        Format::Text => reports.iter().map(MetricsReport::to_text).collect::<Vec<_>>().join("\n"),
        Format::Csv => {
            let rows: String = reports.iter().map(MetricsReport::to_csv_rows).collect();
            format!("{}{rows}", MetricsReport::csv_header())
        }
        Format::Json => {
            let v: Vec<_> = reports.iter().map(metrics_json).collect();
            format!("{}\n", serde_json::to_string_pretty(&v)?)
        }
    };
    print!("{text}");
    if let Some(dir) = out {
        create_dir(dir)?;
        let path = dir.join(report_name("metrics", format));
        write_file(&path, &text)?;
        let mut meta = RunConfig::new("evaluate").input(input).output(&path);
        meta.modalities = modalities;
        meta.seed = Some(seed);
        meta.hyperparameters = Some(hp);
        meta.k = Some(k);
        meta.write(&dir.join("run.json"))?;
    }
    Ok(true)
}

pub fn bench(input: &Path, model_paths: &[PathBuf], repetitions: usize, format: Format, out: Option<&Path>) -> Result<bool> {
    let models: Vec<ClassifierModel> = model_paths.iter().map(|p| load_model(p)).collect::<Result<_>>()?;
    let sessions = load_sessions(input)?;
    let report = bench_timing(&models, &sessions, repetitions)?;
    let text = match format {
        Format::Text => report.to_text(),
        Format::Csv => report.to_csv(),
        Format::Json => {
            let v = json!({
                "repetitions": report.repetitions,
                "per_modality": report.per_modality.iter().map(|m| json!({
                    "modality": m.modality,
                    "frames": m.frames,
                    "seconds_per_frame": m.seconds_per_frame,
                    "frames_per_second": m.frames_per_second,
                })).collect::<Vec<_>>(),
                "fusion_seconds": report.fusion_seconds,
                "total_seconds": report.total_seconds,
                "throughput": report.throughput,
                "fusion_only_rate": report.fusion_only_rate,
            });
            format!("{}\n", serde_json::to_string_pretty(&v)?)
        }
    };
    print!("{text}");
    if let Some(dir) = out {
        create_dir(dir)?;
        let path = dir.join(report_name("bench", format));
        write_file(&path, &text)?;
        let mut meta = RunConfig::new("bench").input(input).output(&path);
        for p in model_paths {
            meta = meta.input(p);
        }
        meta.modalities = models.iter().map(|m| m.modality).collect();
        meta.extra = json!({ "repetitions": repetitions });
        meta.write(&dir.join("run.json"))?;
    }
    Ok(true)
}

pub fn synth(out: &Path, config: CorpusConfig) -> Result<bool> {
    let sessions = synth_corpus(&config)?;
    create_dir(out)?;
    for s in &sessions {
        write_raw_points(s, out)?;
    }
    println!("wrote {} sessions to {}", sessions.len(), out.display());
    let mut meta = RunConfig::new("synth").output(out);
    meta.modalities = config.modalities.clone();
    meta.seed = Some(config.seed);
    meta.extra = json!({
        "sessions_per_emotion": config.sessions_per_emotion,
        "frames": config.frames,
        "separation": config.separation,
        "noise": config.noise,
        "subjects": config.subjects,
    });
    meta.write(&out.join("run.json"))?;
    Ok(true)
}

pub fn smile(image: &Path, roi: Option<&Path>, params: TemplateParams, format: Format) -> Result<bool> {
    let snap = read_snapshot(image)?;
    let roi = match roi {
        Some(p) => read_roi(p)?,
        None => snap
            .roi
            .ok_or_else(|| anyhow!("{} has no .roi sidecar; pass --roi", image.display()))?,
    };
    let outcome = template_classify(&snap.image, &roi, &params)?;
    let v = outcome.verdict;
    let decision = outcome.decision.map_or("abstain", Emotion::name);
    match format {
        Format::Json => println!(
            "{}",
            serde_json::to_string_pretty(&json!({
                "decision": decision,
                "smile": v.is_smile,
                "edges": v.total,
                "qualifying": v.qualifying,
                "ratio": v.ratio,
                "left_hits": v.left_hits,
                "right_hits": v.right_hits,
            }))?
        ),
        Format::Csv => {
            println!("decision,smile,edges,qualifying,ratio,left_hits,right_hits");
            println!(
                "{decision},{},{},{},{},{},{}",
                v.is_smile, v.total, v.qualifying, v.ratio, v.left_hits, v.right_hits
            );
        }
        Format::Text => println!(
            "{decision}: {} of {} edges qualify (ratio {:.4}; left {}, right {})",
            v.qualifying, v.total, v.ratio, v.left_hits, v.right_hits
        ),
    }
    Ok(true)
}

pub fn speech(transcript: &Path, vocab: Option<&Path>, format: Format) -> Result<bool> {
    let vocabulary = load_vocab(vocab)?;
    let words = read_transcript(transcript)?;
    let d = lookup(&words, &vocabulary);
    let decision = d.emotion.map_or("abstain", Emotion::name);
    let tallies: BTreeMap<&str, usize> = Emotion::ALL
        .iter()
        .filter(|e| d.tallies[e.code()] > 0)
        .map(|e| (e.name(), d.tallies[e.code()]))
        .collect();
    match format {
        Format::Json => println!(
            "{}",
            serde_json::to_string_pretty(&json!({
                "decision": decision,
                "accepted": d.accepted,
                "words": words.len(),
                "tallies": tallies,
            }))?
        ),
        Format::Csv => {
            println!("decision,accepted,words");
            println!("{decision},{},{}", d.accepted, words.len());
        }
        Format::Text => {
            let t: Vec<String> = tallies.iter().map(|(e, n)| format!("{e} {n}")).collect();
            println!(
                "{decision}: {} of {} words above threshold; matches: {}",
                d.accepted,
                words.len(),
                if t.is_empty() { "none".into() } else { t.join(", ") }
            );
        }
    }
    Ok(true)
}
