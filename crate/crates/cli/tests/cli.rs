use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use affect_core::ingest::format_roi;
use affect_core::snapshot::{Rect, SnapshotRoi};
use image::{Rgb, RgbImage};
use tempfile::TempDir;

fn affect(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_affect"))
        .args(args)
        .output()
        .expect("run affect")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn ok(args: &[&str]) -> String {
    let o = affect(args);
    assert!(o.status.success(), "{args:?} failed: {}", stderr(&o));
    stdout(&o)
}

fn csv_names(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    names.sort();
    names
}

/// Synthesizes a corpus, returning its directory.
fn synth(tmp: &TempDir, name: &str, modalities: &str, sessions: &str) -> PathBuf {
    let dir = tmp.path().join(name);
    ok(&["synth", "--out", s(&dir), "--modality", modalities, "--sessions", sessions, "--frames", "20"]);
    dir
}

/// Copies the raw files whose names start with `prefix` into a new directory.
fn subset(tmp: &TempDir, from: &Path, name: &str, prefix: &str) -> PathBuf {
    let dir = tmp.path().join(name);
    fs::create_dir_all(&dir).unwrap();
    for n in csv_names(from).into_iter().filter(|n| n.starts_with(prefix)) {
        fs::copy(from.join(&n), dir.join(&n)).unwrap();
    }
    dir
}

#[test]
fn extract_writes_one_feature_file_per_session() {
    let tmp = TempDir::new().unwrap();
    let raw = synth(&tmp, "raw", "hand", "1");
    let three = subset(&tmp, &raw, "three", "");
    for n in csv_names(&three).into_iter().skip(3) {
        fs::remove_file(three.join(n)).unwrap();
    }
    let feat = tmp.path().join("feat");
    let out = ok(&["extract", "--input", s(&three), "--out", s(&feat)]);
    assert!(out.contains("3 of 3 files extracted"), "{out}");
    let names = csv_names(&feat);
    assert_eq!(names.len(), 3);
    for n in &names {
        let text = fs::read_to_string(feat.join(n)).unwrap();
        let widths: Vec<usize> = text.lines().map(|l| l.split(',').count()).collect();
        assert!(widths.iter().all(|&w| w == 72), "{n}: {widths:?}");
    }
    assert!(feat.join("run.json").is_file());
}

#[test]
fn extract_reports_corrupt_files_and_continues() {
    let tmp = TempDir::new().unwrap();
    let raw = synth(&tmp, "raw", "hand", "1");
    let dir = subset(&tmp, &raw, "mixed", "");
    let names = csv_names(&dir);
    for n in names.iter().skip(3) {
        fs::remove_file(dir.join(n)).unwrap();
    }
    fs::write(dir.join(&names[2]), "0,1.0,2.0\n").unwrap();
    let feat = tmp.path().join("feat");
    let o = affect(&["extract", "--input", s(&dir), "--out", s(&feat)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains(&names[2]), "{}", stderr(&o));
    assert_eq!(csv_names(&feat).len(), 2);
}

#[test]
fn extract_of_an_empty_directory_is_an_error() {
    let tmp = TempDir::new().unwrap();
    let empty = tmp.path().join("empty");
    fs::create_dir(&empty).unwrap();
    let o = affect(&["extract", "--input", s(&empty), "--out", s(&tmp.path().join("f"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no input"), "{}", stderr(&o));
}

#[test]
fn training_is_reproducible_and_loadable() {
    let tmp = TempDir::new().unwrap();
    let raw = synth(&tmp, "raw", "hand", "2");
    let feat = tmp.path().join("feat");
    ok(&["extract", "--input", s(&raw), "--out", s(&feat)]);
    let a = tmp.path().join("a.json");
    let b = tmp.path().join("b.json");
    for m in [&a, &b] {
        ok(&["train", "--input", s(&feat), "--modality", "hand", "--out", s(m), "--seed", "3", "--epochs", "5"]);
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let meta = fs::read_to_string(tmp.path().join("a.run.json")).unwrap();
    assert!(meta.contains("\"seed\": 3"), "{meta}");
    let out = ok(&["detect", "--input", s(&raw), "--model", s(&a)]);
    assert!(out.lines().count() > 14, "{out}");
}

#[test]
fn single_emotion_training_reports_the_histogram() {
    let tmp = TempDir::new().unwrap();
    let raw = synth(&tmp, "raw", "hand", "2");
    let anger = subset(&tmp, &raw, "anger", "0_");
    let feat = tmp.path().join("feat");
    ok(&["extract", "--input", s(&anger), "--out", s(&feat)]);
    let o = affect(&["train", "--input", s(&feat), "--modality", "hand", "--out", s(&tmp.path().join("m.json"))]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("at least two classes") && err.contains("anger"), "{err}");
}

/// Trains one model per modality on `raw`, returning `--model` arguments.
fn train_all(tmp: &TempDir, raw: &Path, modalities: &[&str]) -> Vec<String> {
    let feat = tmp.path().join("feat");
    ok(&["extract", "--input", s(raw), "--out", s(&feat)]);
    let mut args = Vec::new();
    for m in modalities {
        let path = tmp.path().join(format!("{m}.json"));
        ok(&["train", "--input", s(&feat), "--modality", m, "--out", s(&path), "--epochs", "5"]);
        args.push("--model".to_string());
        args.push(path.display().to_string());
    }
    args
}

#[test]
fn unanimous_disgust_reads_negative_and_happiness_positive() {
    let tmp = TempDir::new().unwrap();
    let raw = synth(&tmp, "raw", "face,head,hand,body", "3");
    let models = train_all(&tmp, &raw, &["face", "head", "hand", "body"]);
    let disgust = subset(&tmp, &raw, "disgust", "3_");
    let happy = subset(&tmp, &raw, "happy", "1_");

    let mut args = vec!["detect", "--input", s(&disgust)];
    args.extend(models.iter().map(String::as_str));
    let out = ok(&args);
    let rows: Vec<&str> = out.lines().skip(1).filter(|l| l.contains('=')).collect();
    assert_eq!(rows.len(), 3, "{out}");
    for row in rows {
        assert!(row.contains("face=disgust;head=disgust;hand=disgust;body=disgust,disgust,"), "{row}");
        assert!(row.ends_with(",negative"), "{row}");
    }
    assert!(out.contains("negative 3"), "{out}");

    let mut args = vec!["detect", "--input", s(&happy), "--format", "json"];
    args.extend(models.iter().map(String::as_str));
    let report: serde_json::Value = serde_json::from_str(&ok(&args)).unwrap();
    for session in report["sessions"].as_array().unwrap() {
        assert_eq!(session["fused"], "happiness");
        assert_eq!(session["verdict"], "positive");
    }
    assert_eq!(report["verdicts"]["positive"], 3);
}

#[test]
fn missing_model_is_a_configuration_error() {
    let tmp = TempDir::new().unwrap();
    let raw = synth(&tmp, "raw", "hand", "1");
    let models = train_all(&tmp, &raw, &["hand"]);
    let mut args = vec!["detect", "--input", s(&raw), "--modality", "hand,face"];
    args.extend(models.iter().map(String::as_str));
    let o = affect(&args);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no model for requested modality face"), "{}", stderr(&o));
}

fn write_snapshot(dir: &Path, name: &str, dimples: bool) {
    let mut img = RgbImage::from_pixel(320, 240, Rgb([200, 120, 90]));
    if dimples {
        for (bx, by) in [(125, 160), (205, 160)] {
            for y in by..by + 3 {
                for x in bx..bx + 3 {
                    img.put_pixel(x, y, Rgb([40, 20, 20]));
                }
            }
        }
    }
    let path = dir.join(name);
    img.save(&path).unwrap();
    let roi = SnapshotRoi {
        face: Rect::new(0, 0, 320, 240),
        mouth: Rect::new(80, 120, 160, 60),
    };
    fs::write(path.with_extension("roi"), format_roi(&roi)).unwrap();
}

#[test]
fn side_channels_alone() {
    let tmp = TempDir::new().unwrap();
    let words = tmp.path().join("words");
    let snaps = tmp.path().join("snaps");
    fs::create_dir_all(&words).unwrap();
    fs::create_dir_all(&snaps).unwrap();
    // both channels abstain for s01_a; the smile fuses s01_b to happiness
    fs::write(words.join("s01_a.csv"), "hello,0.9\nthere,0.8\n").unwrap();
    write_snapshot(&snaps, "s01_a_0.png", false);
    write_snapshot(&snaps, "s01_b_0.png", true);
    write_snapshot(&snaps, "s01_b_1.png", true);
    let o = affect(&["detect", "--transcripts", s(&words), "--snapshots", s(&snaps)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("s01_a") && stderr(&o).contains("abstained"), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("s01_b,template=happiness,happiness,-,positive"), "{out}");
}

#[test]
fn smile_and_speech_commands() {
    let tmp = TempDir::new().unwrap();
    write_snapshot(tmp.path(), "smile.png", true);
    write_snapshot(tmp.path(), "flat.png", false);
    let out = ok(&["smile", s(&tmp.path().join("smile.png"))]);
    assert!(out.starts_with("happiness: 2 of 2 edges qualify"), "{out}");
    let out = ok(&["smile", s(&tmp.path().join("flat.png")), "--format", "json"]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["decision"], "abstain");

    let t = tmp.path().join("t.csv");
    fs::write(&t, "that,0.9\nis,0.9\nYuck!,0.8\nnasty,0.31\nfoul,0.3\n").unwrap();
    let out = ok(&["speech", s(&t)]);
    assert!(out.starts_with("disgust: 4 of 5 words above threshold; matches: disgust 2"), "{out}");
}

#[test]
fn synth_is_regenerable() {
    let tmp = TempDir::new().unwrap();
    let a = synth(&tmp, "a", "head", "2");
    let b = synth(&tmp, "b", "head", "2");
    let names = csv_names(&a);
    assert_eq!(names.len(), 14);
    assert_eq!(names, csv_names(&b));
    for n in names {
        assert_eq!(fs::read(a.join(&n)).unwrap(), fs::read(b.join(&n)).unwrap(), "{n}");
    }
}

#[test]
fn evaluate_prints_a_metrics_table() {
    let tmp = TempDir::new().unwrap();
    let raw = synth(&tmp, "raw", "hand", "3");
    let out_dir = tmp.path().join("eval");
    let out = ok(&["evaluate", "--input", s(&raw), "--k", "3", "--epochs", "5", "--out", s(&out_dir)]);
    assert!(out.starts_with("modality hand  folds 3  units 21"), "{out}");
    assert!(out.contains("classification_rate"), "{out}");
    assert_eq!(out.lines().count(), 9);
    assert_eq!(fs::read_to_string(out_dir.join("metrics.txt")).unwrap(), out);
    let again = ok(&["evaluate", "--input", s(&raw), "--k", "3", "--epochs", "5"]);
    assert_eq!(again, out);
}

#[test]
fn bench_total_is_slowest_stage_plus_fusion() {
    let tmp = TempDir::new().unwrap();
    let raw = synth(&tmp, "raw", "head,hand", "1");
    let models = train_all(&tmp, &raw, &["head", "hand"]);
    let mut args = vec!["bench", "--input", s(&raw), "--repetitions", "3", "--format", "json"];
    args.extend(models.iter().map(String::as_str));
    let v: serde_json::Value = serde_json::from_str(&ok(&args)).unwrap();
    let slowest = v["per_modality"]
        .as_array()
        .unwrap()
        .iter()
        .map(|m| m["seconds_per_frame"].as_f64().unwrap())
        .fold(0.0, f64::max);
    let fusion = v["fusion_seconds"].as_f64().unwrap();
    assert_eq!(v["total_seconds"].as_f64().unwrap(), slowest + fusion);
}
