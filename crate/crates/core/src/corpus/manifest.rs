//! JSON manifest, label lists and binary score matrices.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{BankKind, Corpus, CorpusBuilder, ScoreBank, Shot, Violation};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub videos: Vec<VideoRecord>,
    pub shots: Vec<ShotRecord>,
    #[serde(default)]
    pub banks: Vec<BankRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VideoRecord {
    pub id: String,
    pub duration_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShotRecord {
    pub id: String,
    pub video_id: String,
    pub start_s: f64,
    pub end_s: f64,
    pub keyframe: PathBuf,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub speech: String,
    #[serde(default)]
    pub ocr: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BankRecord {
    pub kind: BankKind,
    pub labels_file: PathBuf,
    pub matrix_file: PathBuf,
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed record at {locus}: {message}")]
    Malformed { locus: String, message: String },
    #[error("dangling reference at {locus}: {target:?} does not exist")]
    DanglingReference { locus: String, target: String },
    #[error("score out of [0,1] at {locus}: {value}")]
    ScoreOutOfRange { locus: String, value: f32 },
    #[error("duplicate id at {locus}: {id:?}")]
    DuplicateId { locus: String, id: String },
    #[error("corpus invariant violated: {}", .0.first().map(ToString::to_string).unwrap_or_default())]
    Invalid(Vec<Violation>),
}

fn read(path: &Path) -> Result<Vec<u8>, LoadError> {
    std::fs::read(path).map_err(|source| LoadError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Loads and validates a corpus manifest. Either everything loads or
/// nothing does.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Corpus, LoadError> {
    let path = path.as_ref();
    let bytes = read(path)?;
    let manifest: Manifest = serde_json::from_slice(&bytes).map_err(|e| LoadError::Malformed {
        locus: format!("{}:{}:{}", path.display(), e.line(), e.column()),
        message: e.to_string(),
    })?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();

    let mut video_ids = HashSet::new();
    for (i, v) in manifest.videos.iter().enumerate() {
        if !video_ids.insert(v.id.as_str()) {
            return Err(LoadError::DuplicateId {
                locus: format!("videos[{i}]"),
                id: v.id.clone(),
            });
        }
    }
    let mut shot_ids = HashSet::new();
    for (i, s) in manifest.shots.iter().enumerate() {
        if !shot_ids.insert(s.id.as_str()) {
            return Err(LoadError::DuplicateId {
                locus: format!("shots[{i}]"),
                id: s.id.clone(),
            });
        }
        if !video_ids.contains(s.video_id.as_str()) {
            return Err(LoadError::DanglingReference {
                locus: format!("shots[{i}] ({})", s.id),
                target: s.video_id.clone(),
            });
        }
    }

    let mut builder = CorpusBuilder::new().base_dir(&base_dir);
    for v in &manifest.videos {
        builder = builder.video(&v.id, v.duration_s, v.title.as_deref());
    }
    for s in &manifest.shots {
        builder = builder.shot(Shot {
            id: s.id.clone(),
            video_id: s.video_id.clone(),
            start_s: s.start_s,
            end_s: s.end_s,
            keyframe: s.keyframe.clone(),
            description: s.description.clone(),
            speech: s.speech.clone(),
            ocr: s.ocr.clone(),
        });
    }
    let mut kinds = HashSet::new();
    for (i, b) in manifest.banks.iter().enumerate() {
        let locus = format!("banks[{i}] ({})", b.kind.as_str());
        if !kinds.insert(b.kind) {
            return Err(LoadError::DuplicateId {
                locus,
                id: b.kind.as_str().to_string(),
            });
        }
        let labels_path = base_dir.join(&b.labels_file);
        let labels = String::from_utf8(read(&labels_path)?).map_err(|e| LoadError::Malformed {
            locus: labels_path.display().to_string(),
            message: e.to_string(),
        })?;
        let labels: Vec<String> = labels.lines().map(str::to_string).collect();
        let matrix_path = base_dir.join(&b.matrix_file);
        let (rows, cols, scores) =
            read_matrix(&read(&matrix_path)?).map_err(|message| LoadError::Malformed {
                locus: matrix_path.display().to_string(),
                message,
            })?;
        if let Some((at, &value)) = scores
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            let row = at / cols.max(1);
            return Err(LoadError::ScoreOutOfRange {
                locus: format!(
                    "{locus} row {row} (shot {}), column {}",
                    manifest.shots.get(row).map_or("?", |s| s.id.as_str()),
                    labels.get(at % cols.max(1)).map_or("?", String::as_str),
                ),
                value,
            });
        }
        debug_assert_eq!(scores.len(), rows * cols);
        builder = builder.bank(ScoreBank::new(b.kind, labels, cols, scores));
    }
    builder.build().map_err(LoadError::Invalid)
}

/// Parses a score matrix: `u32 rows, u32 cols` header then row-major
/// `f32` values, all little-endian.
pub fn read_matrix(bytes: &[u8]) -> Result<(usize, usize, Vec<f32>), String> {
    if bytes.len() < 8 {
        return Err(format!("matrix header needs 8 bytes, file has {}", bytes.len()));
    }
    let rows = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(4))
        .ok_or("matrix dimensions overflow")?;
    let body = &bytes[8..];
    if body.len() != expected {
        return Err(format!(
            "{rows}x{cols} matrix needs {expected} payload bytes, file has {}",
            body.len()
        ));
    }
    let scores = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((rows, cols, scores))
}

pub fn write_matrix(rows: usize, cols: usize, scores: &[f32]) -> Vec<u8> {
    assert_eq!(rows * cols, scores.len());
    let mut out = Vec::with_capacity(8 + scores.len() * 4);
    out.extend_from_slice(&(rows as u32).to_le_bytes());
    out.extend_from_slice(&(cols as u32).to_le_bytes());
    for v in scores {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{validate_corpus, Rule};
    use serde_json::json;

    fn write(dir: &Path, name: &str, bytes: &[u8]) {
        std::fs::write(dir.join(name), bytes).unwrap();
    }

    fn minimal() -> serde_json::Value {
        json!({
            "videos": [{"id": "v1", "duration_s": 20.0}],
            "shots": [
                {"id": "s1", "video_id": "v1", "start_s": 0.0, "end_s": 10.0, "keyframe": "s1.ppm",
                 "description": "red car"},
                {"id": "s2", "video_id": "v1", "start_s": 10.0, "end_s": 20.0, "keyframe": "s2.ppm"}
            ]
        })
    }

    #[test]
    fn minimal_manifest_loads() {
        let dir = tempfile::tempdir().unwrap();
        write(dir.path(), "m.json", minimal().to_string().as_bytes());
        let c = load_manifest(dir.path().join("m.json")).unwrap();
        assert_eq!(c.shots().len(), 2);
        assert_eq!(c.banks().count(), 0);
        assert_eq!(c.shot("s1").unwrap().description, "red car");
        assert!(validate_corpus(&c).is_empty());
    }

    #[test]
    fn dangling_video_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = minimal();
        m["shots"][1]["video_id"] = json!("vX");
        write(dir.path(), "m.json", m.to_string().as_bytes());
        match load_manifest(dir.path().join("m.json")) {
            Err(LoadError::DanglingReference { target, locus }) => {
                assert_eq!(target, "vX");
                assert!(locus.contains("s2"), "{locus}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_file_and_malformed_json() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_manifest(dir.path().join("nope.json")),
            Err(LoadError::Io { .. })
        ));
        write(dir.path(), "m.json", b"{\"videos\": [}");
        assert!(matches!(
            load_manifest(dir.path().join("m.json")),
            Err(LoadError::Malformed { .. })
        ));
        let mut m = minimal();
        m["shots"][0]["bogus"] = json!(1);
        write(dir.path(), "m.json", m.to_string().as_bytes());
        assert!(matches!(
            load_manifest(dir.path().join("m.json")),
            Err(LoadError::Malformed { .. })
        ));
    }

    #[test]
    fn duplicate_shot_id() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = minimal();
        m["shots"][1]["id"] = json!("s1");
        write(dir.path(), "m.json", m.to_string().as_bytes());
        match load_manifest(dir.path().join("m.json")) {
            Err(LoadError::DuplicateId { id, locus }) => {
                assert_eq!(id, "s1");
                assert_eq!(locus, "shots[1]");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    fn with_bank(dir: &Path, labels: &str, matrix: Vec<u8>) -> Result<Corpus, LoadError> {
        let mut m = minimal();
        m["banks"] = json!([{"kind": "concept", "labels_file": "c.txt", "matrix_file": "c.bin"}]);
        write(dir, "m.json", m.to_string().as_bytes());
        write(dir, "c.txt", labels.as_bytes());
        write(dir, "c.bin", &matrix);
        load_manifest(dir.join("m.json"))
    }

    #[test]
    fn banks_load_and_reject_bad_scores() {
        let dir = tempfile::tempdir().unwrap();
        let c = with_bank(dir.path(), "car\nsky\n", write_matrix(2, 2, &[0.1, 0.9, 1.0, 0.0])).unwrap();
        let bank = c.bank(BankKind::Concept).unwrap();
        assert_eq!(bank.labels(), ["car", "sky"]);
        assert_eq!(bank.row(1), &[1.0, 0.0]);

        match with_bank(dir.path(), "car\nsky\n", write_matrix(2, 2, &[0.1, 0.9, 1.5, 0.0])) {
            Err(LoadError::ScoreOutOfRange { locus, value }) => {
                assert_eq!(value, 1.5);
                assert!(locus.contains("s2") && locus.contains("car"), "{locus}");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            with_bank(dir.path(), "car\nsky\n", write_matrix(2, 2, &[0.1, f32::NAN, 0.0, 0.0])),
            Err(LoadError::ScoreOutOfRange { .. })
        ));
        // label/column disagreement surfaces as an invariant violation
        match with_bank(dir.path(), "car\nsky\nsea\n", write_matrix(2, 2, &[0.0; 4])) {
            Err(LoadError::Invalid(v)) => assert_eq!(v[0].rule, Rule::BankDimension),
            other => panic!("unexpected {other:?}"),
        }
        let mut truncated = write_matrix(2, 2, &[0.0; 4]);
        truncated.pop();
        assert!(matches!(
            with_bank(dir.path(), "car\nsky\n", truncated),
            Err(LoadError::Malformed { .. })
        ));
    }
}
