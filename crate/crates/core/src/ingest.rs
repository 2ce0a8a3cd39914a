//! Readers and writers for every on-disk artifact.
//!
//! File names carry the metadata: `{emotion_code}_{modality}_{subject}_{session}.csv`.
//! CSV files have no header, LF line endings and `.` as decimal separator.
//! Reals are written in shortest round-trip form so a write/read cycle is
//! bit-exact.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use image::RgbImage;

use crate::error::{Error, Result};
use crate::geometry::feature_dimension;
use crate::session::{validate_session, Emotion, Frame, Modality, Point2, Session};
use crate::snapshot::{Rect, SnapshotRoi};
use crate::speech::{normalize_token, RecognizedWord, Vocabulary, DEFAULT_THRESHOLD};

/// Largest snapshot accepted, in pixels.
pub const MAX_SNAPSHOT_PIXELS: u64 = 16 * 1024 * 1024;

const DEFAULT_VOCABULARY: &str = include_str!("../data/default_vocabulary.xml");

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SessionMeta {
    pub label: Emotion,
    pub modality: Modality,
    pub subject: String,
    pub session: String,
}

impl SessionMeta {
    pub fn from_path(path: &Path) -> Result<Self> {
        let format_err = |message: String| Error::Format {
            path: path.to_path_buf(),
            message,
        };
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| format_err("file name is not valid UTF-8".into()))?;
        let mut parts = stem.splitn(3, '_');
        let (code, modality, rest) = match (parts.next(), parts.next(), parts.next()) {
            (Some(c), Some(m), Some(r)) => (c, m, r),
            _ => {
                return Err(format_err(format!(
                    "`{stem}` does not match {{emotion_code}}_{{modality}}_{{subject}}_{{session}}"
                )))
            }
        };
        let (subject, session) = rest.rsplit_once('_').ok_or_else(|| {
            format_err(format!("`{stem}` is missing the subject or session field"))
        })?;
        if subject.is_empty() || session.is_empty() {
            return Err(format_err(format!("`{stem}` has an empty subject or session")));
        }
        let code: i64 = code
            .parse()
            .map_err(|_| format_err(format!("emotion code `{code}` is not an integer")))?;
        Ok(Self {
            label: Emotion::from_code(code)?,
            modality: Modality::from_token(modality)?,
            subject: subject.to_string(),
            session: session.to_string(),
        })
    }

    pub fn file_name(&self) -> String {
        format!(
            "{}_{}_{}_{}.csv",
            self.label.code(),
            self.modality,
            self.subject,
            self.session
        )
    }

    pub fn of_session(session: &Session) -> Option<Self> {
        Some(Self {
            label: session.label?,
            modality: session.modality,
            subject: session.subject_id.clone(),
            session: session.session_id.clone(),
        })
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Non-blank lines with their 1-based line numbers.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
}

fn parse_real(path: &Path, row: usize, column: usize, field: &str) -> Result<f64> {
    field.trim().parse().map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        row,
        message: format!("field {} `{field}` is not a real number", column + 1),
    })
}

pub fn read_raw_points(path: &Path) -> Result<Session> {
    let meta = SessionMeta::from_path(path)?;
    if !meta.modality.is_geometric() {
        return Err(Error::NoGeometry(meta.modality));
    }
    let m = meta.modality.point_count();
    let width = 1 + 2 * m;
    let text = read_text(path)?;
    let mut frames = Vec::new();
    for (row, line) in data_lines(&text) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != width {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                row,
                message: format!("{} fields, expected {width}", fields.len()),
            });
        }
        let index: u64 = fields[0].trim().parse().map_err(|_| Error::Parse {
            path: path.to_path_buf(),
            row,
            message: format!("frame index `{}` is not a non-negative integer", fields[0]),
        })?;
        let mut points = Vec::with_capacity(m);
        for i in 0..m {
            let x = parse_real(path, row, 1 + 2 * i, fields[1 + 2 * i])?;
            let y = parse_real(path, row, 2 + 2 * i, fields[2 + 2 * i])?;
            points.push(Point2::new(x, y));
        }
        frames.push(Frame::new(index, points));
    }
    let session = Session {
        subject_id: meta.subject,
        session_id: meta.session,
        label: Some(meta.label),
        modality: meta.modality,
        frames,
    };
    let report = validate_session(&session);
    if let Some(first) = report.first() {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: format!("{} invariant violation(s), first: {first}", report.len()),
        });
    }
    Ok(session)
}

pub fn format_raw_points(session: &Session) -> String {
    let mut out = String::new();
    for frame in &session.frames {
        write!(out, "{}", frame.index).unwrap();
        for p in &frame.points {
            write!(out, ",{},{}", p.x, p.y).unwrap();
        }
        out.push('\n');
    }
    out
}

/// Writes `session` into `dir` under its metadata file name and returns the path.
pub fn write_raw_points(session: &Session, dir: &Path) -> Result<PathBuf> {
    let meta = SessionMeta::of_session(session).ok_or_else(|| Error::Format {
        path: dir.to_path_buf(),
        message: "an unlabeled session has no file name".into(),
    })?;
    let path = dir.join(meta.file_name());
    write_text(&path, &format_raw_points(session))?;
    Ok(path)
}

/// Labeled feature rows read from a feature file.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub meta: SessionMeta,
    pub rows: Vec<Vec<f64>>,
}

impl FeatureTable {
    pub fn width(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }
}

pub fn write_feature_file<R: AsRef<[f64]>>(rows: &[R], path: &Path) -> Result<()> {
    let mut out = String::new();
    let width = rows.first().map(|r| r.as_ref().len());
    for (i, row) in rows.iter().enumerate() {
        let row = row.as_ref();
        if Some(row.len()) != width {
            return Err(Error::RaggedRow {
                path: path.to_path_buf(),
                row: i + 1,
                expected: width.unwrap_or(0),
                found: row.len(),
            });
        }
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            write!(out, "{v}").unwrap();
        }
        out.push('\n');
    }
    write_text(path, &out)
}

pub fn read_feature_file(path: &Path) -> Result<FeatureTable> {
    let meta = SessionMeta::from_path(path)?;
    let expected = feature_dimension(meta.modality)?;
    let text = read_text(path)?;
    let mut rows = Vec::new();
    for (row, line) in data_lines(&text) {
        let values = line
            .split(',')
            .enumerate()
            .map(|(j, f)| parse_real(path, row, j, f))
            .collect::<Result<Vec<f64>>>()?;
        let width = rows.first().map_or(values.len(), |r: &Vec<f64>| r.len());
        if values.len() != width {
            return Err(Error::RaggedRow {
                path: path.to_path_buf(),
                row,
                expected: width,
                found: values.len(),
            });
        }
        rows.push(values);
    }
    if let Some(first) = rows.first() {
        if first.len() != expected {
            return Err(Error::Format {
                path: path.to_path_buf(),
                message: format!(
                    "row width {} does not match the {} feature dimension {expected}",
                    first.len(),
                    meta.modality
                ),
            });
        }
    }
    Ok(FeatureTable { meta, rows })
}

/// Parses the vocabulary XML:
/// `<vocabulary threshold=".."><emotion name=".." code=".."><word>..</word></emotion></vocabulary>`.
pub fn parse_vocabulary(xml: &str) -> Result<Vocabulary> {
    let doc = roxmltree::Document::parse(xml).map_err(|e| Error::Vocabulary(e.to_string()))?;
    let root = doc.root_element();
    if root.tag_name().name() != "vocabulary" {
        return Err(Error::Vocabulary(format!(
            "root element is <{}>, expected <vocabulary>",
            root.tag_name().name()
        )));
    }
    let threshold = match root.attribute("threshold") {
        Some(t) => t
            .trim()
            .parse::<f64>()
            .map_err(|_| Error::Vocabulary(format!("threshold `{t}` is not a number")))?,
        None => DEFAULT_THRESHOLD,
    };
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Vocabulary(format!(
            "threshold {threshold} outside [0, 1]"
        )));
    }
    let mut entries: BTreeMap<Emotion, BTreeSet<String>> = BTreeMap::new();
    for node in root.children().filter(|n| n.is_element()) {
        if node.tag_name().name() != "emotion" {
            return Err(Error::Vocabulary(format!(
                "unexpected element <{}>",
                node.tag_name().name()
            )));
        }
        let name = node
            .attribute("name")
            .ok_or_else(|| Error::Vocabulary("<emotion> without a name".into()))?;
        let emotion = Emotion::from_name(name)?;
        if let Some(code) = node.attribute("code") {
            let code: i64 = code
                .trim()
                .parse()
                .map_err(|_| Error::Vocabulary(format!("code `{code}` is not an integer")))?;
            if Emotion::from_code(code)? != emotion {
                return Err(Error::Vocabulary(format!(
                    "code {code} does not belong to {emotion}"
                )));
            }
        }
        let words = entries.entry(emotion).or_default();
        for w in node.children().filter(|n| n.is_element()) {
            if w.tag_name().name() != "word" {
                return Err(Error::Vocabulary(format!(
                    "unexpected element <{}> under {emotion}",
                    w.tag_name().name()
                )));
            }
            let raw = w.text().unwrap_or("");
            let token = normalize_token(raw)
                .ok_or_else(|| Error::Vocabulary(format!("empty word under {emotion}")))?;
            if !words.insert(token.clone()) {
                return Err(Error::Vocabulary(format!(
                    "duplicate word `{token}` under {emotion}"
                )));
            }
        }
    }
    Vocabulary::new(entries, threshold)
}

pub fn load_vocabulary(path: &Path) -> Result<Vocabulary> {
    parse_vocabulary(&read_text(path)?)
}

/// The bundled vocabulary: the disgust keyword set, empty anger and happiness sets.
pub fn default_vocabulary() -> Vocabulary {
    parse_vocabulary(DEFAULT_VOCABULARY).expect("bundled vocabulary is valid")
}

pub fn default_vocabulary_xml() -> &'static str {
    DEFAULT_VOCABULARY
}

/// Reads a `word,confidence` transcript. Words that normalize to nothing are skipped.
pub fn read_transcript(path: &Path) -> Result<Vec<RecognizedWord>> {
    let text = read_text(path)?;
    let mut words = Vec::new();
    for (row, line) in data_lines(&text) {
        let (word, conf) = line.rsplit_once(',').ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            row,
            message: "expected `word,confidence`".into(),
        })?;
        let conf = parse_real(path, row, 1, conf)?;
        let word = RecognizedWord::new(word, conf).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            row,
            message: e.to_string(),
        })?;
        words.extend(word);
    }
    Ok(words)
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub image: RgbImage,
    pub roi: Option<SnapshotRoi>,
}

/// Sidecar path for a snapshot: same stem, `.roi` extension.
pub fn roi_sidecar_path(image_path: &Path) -> PathBuf {
    image_path.with_extension("roi")
}

/// Parses `face_x,face_y,face_w,face_h,mouth_x,mouth_y,mouth_w,mouth_h`.
pub fn parse_roi(line: &str) -> std::result::Result<SnapshotRoi, String> {
    let fields: Vec<u32> = line
        .trim()
        .split(',')
        .map(|f| {
            f.trim()
                .parse::<u32>()
                .map_err(|_| format!("`{f}` is not a non-negative integer"))
        })
        .collect::<std::result::Result<_, _>>()?;
    if fields.len() != 8 {
        return Err(format!("{} fields, expected 8", fields.len()));
    }
    Ok(SnapshotRoi {
        face: Rect::new(fields[0], fields[1], fields[2], fields[3]),
        mouth: Rect::new(fields[4], fields[5], fields[6], fields[7]),
    })
}

pub fn format_roi(roi: &SnapshotRoi) -> String {
    let (f, m) = (roi.face, roi.mouth);
    format!(
        "{},{},{},{},{},{},{},{}\n",
        f.x, f.y, f.width, f.height, m.x, m.y, m.width, m.height
    )
}

pub fn read_roi(path: &Path) -> Result<SnapshotRoi> {
    let text = read_text(path)?;
    let (row, line) = data_lines(&text).next().ok_or_else(|| Error::Format {
        path: path.to_path_buf(),
        message: "empty ROI file".into(),
    })?;
    parse_roi(line).map_err(|message| Error::Parse {
        path: path.to_path_buf(),
        row,
        message,
    })
}

/// Loads a PNG as 8-bit RGB (grayscale is promoted) plus its ROI sidecar, if any.
pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    let image_err = |message: String| Error::Image {
        path: path.to_path_buf(),
        message,
    };
    let (w, h) = image::image_dimensions(path).map_err(|e| image_err(e.to_string()))?;
    if u64::from(w) * u64::from(h) > MAX_SNAPSHOT_PIXELS {
        return Err(image_err(format!(
            "{w}x{h} exceeds the {MAX_SNAPSHOT_PIXELS} pixel limit"
        )));
    }
    let image = image::open(path)
        .map_err(|e| image_err(e.to_string()))?
        .to_rgb8();
    let sidecar = roi_sidecar_path(path);
    let roi = if sidecar.is_file() {
        Some(read_roi(&sidecar)?)
    } else {
        None
    };
    Ok(Snapshot { image, roi })
}
