//! Deterministic synthetic corpora for tests, benchmarks and demos.
//!
//! Keyframes are random block mosaics, so every keyframe is distinct.
//! A configurable share of shots is rendered grayscale or letterboxed to
//! exercise the shot filters, and text fields and score banks are drawn
//! from small fixed vocabularies.

use std::collections::BTreeSet;
use std::io;
use std::path::{Path, PathBuf};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{
    write_matrix, BankKind, BankRecord, Corpus, CorpusBuilder, Keyframe, Manifest, ScoreBank, Shot,
    ShotRecord, VideoRecord,
};
use crate::service::{KisTask, TaskKind};
use crate::sketch::{ColorSignature, LabColor, SignatureCentroid};

const WORDS: &[&str] = &[
    "red", "car", "street", "night", "person", "dog", "beach", "sunset", "city", "crowd", "snow",
    "mountain", "river", "boat", "kitchen", "cooking", "interview", "studio", "news", "anchor",
    "football", "stadium", "forest", "bird", "aircraft", "runway", "market", "bicycle", "bridge",
    "train", "station", "concert", "guitar", "classroom", "children", "garden", "flower", "rain",
    "umbrella", "office", "computer", "screen", "desert", "camel", "ocean", "diver", "fish",
    "church", "wedding", "dance",
];

const CONCEPTS: &[&str] = &[
    "person", "indoor", "outdoor", "car", "dog", "cat", "face", "crowd", "sky", "water", "tree",
    "building", "road", "night", "daytime", "snow", "beach", "kitchen", "text_overlay", "animal",
];

/// Shape of a generated corpus.
#[derive(Debug, Clone)]
pub struct SyntheticSpec {
    pub videos: usize,
    pub shots_per_video: usize,
    pub seed: u64,
    pub width: u32,
    pub height: u32,
    /// Mosaic blocks per side.
    pub blocks: u32,
    pub concept_labels: usize,
    /// Object bank width; `None` omits the bank.
    pub object_labels: Option<usize>,
    /// Every n-th shot (by global index) is grayscale; 0 disables.
    pub bw_every: usize,
    /// Every n-th shot is letterboxed with black bars; 0 disables.
    pub letterbox_every: usize,
    pub letterbox_px: u32,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            videos: 20,
            shots_per_video: 10,
            seed: 2018,
            width: 48,
            height: 36,
            blocks: 3,
            concept_labels: CONCEPTS.len(),
            object_labels: None,
            bw_every: 7,
            letterbox_every: 5,
            letterbox_px: 6,
        }
    }
}

/// A generated corpus plus the ground truth baked into it.
#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub manifest: Manifest,
    pub keyframes: Vec<Keyframe>,
    pub concept_labels: Vec<String>,
    pub concept_scores: Vec<f32>,
    pub object_labels: Vec<String>,
    pub object_scores: Vec<f32>,
    pub bw_shots: BTreeSet<String>,
    pub letterboxed_shots: BTreeSet<String>,
}

pub fn concept_label(i: usize) -> String {
    match CONCEPTS.get(i) {
        Some(c) => (*c).to_string(),
        None => format!("concept_{i:04}"),
    }
}

/// Object labels `obj_000`, `obj_001`, ...
pub fn object_label(i: usize) -> String {
    format!("obj_{i:03}")
}

fn words(rng: &mut ChaCha8Rng, n: usize) -> String {
    (0..n)
        .map(|_| WORDS[rng.random_range(0..WORDS.len())])
        .collect::<Vec<_>>()
        .join(" ")
}

fn scores(rng: &mut ChaCha8Rng, n: usize) -> Vec<f32> {
    (0..n)
        .map(|_| {
            // roughly a fifth of entries are exactly zero, like sparse
            // detector output
            if rng.random_range(0..5) == 0 {
                0.0
            } else {
                rng.random::<f32>()
            }
        })
        .collect()
}

fn mosaic(spec: &SyntheticSpec, rng: &mut ChaCha8Rng, gray: bool, bars: u32) -> Keyframe {
    let blocks = spec.blocks.max(1);
    let colors: Vec<[u8; 3]> = (0..blocks * blocks)
        .map(|_| {
            if gray {
                let v = rng.random::<u8>();
                [v, v, v]
            } else {
                // keep chroma clearly above the grayscale threshold
                loop {
                    let c: [u8; 3] = rng.random();
                    let spread = c.iter().max().unwrap() - c.iter().min().unwrap();
                    if spread > 60 {
                        break c;
                    }
                }
            }
        })
        .collect();
    let (w, h) = (spec.width, spec.height);
    Keyframe::from_fn(w, h, |x, y| {
        if y < bars || y >= h - bars {
            return [0, 0, 0];
        }
        let bx = x * blocks / w;
        let by = (y - bars) * blocks / (h - 2 * bars);
        colors[(by * blocks + bx) as usize]
    })
}

impl SyntheticCorpus {
    pub fn generate(spec: &SyntheticSpec) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut manifest = Manifest {
            videos: Vec::new(),
            shots: Vec::new(),
            banks: Vec::new(),
        };
        let mut keyframes = Vec::new();
        let mut seen = std::collections::HashSet::new();
        let mut bw_shots = BTreeSet::new();
        let mut letterboxed_shots = BTreeSet::new();
        let mut global = 0usize;
        for v in 0..spec.videos {
            let video_id = format!("v{v:03}");
            let mut t = 0.0;
            for s in 0..spec.shots_per_video {
                let id = format!("{video_id}_s{s:03}");
                let len = rng.random_range(4..16) as f64;
                global += 1;
                let gray = spec.bw_every > 0 && global.is_multiple_of(spec.bw_every);
                let bars = if spec.letterbox_every > 0 && global.is_multiple_of(spec.letterbox_every) {
                    spec.letterbox_px
                } else {
                    0
                };
                let kf = loop {
                    let kf = mosaic(spec, &mut rng, gray, bars);
                    if seen.insert(kf.encode_ppm()) {
                        break kf;
                    }
                };
                if gray {
                    bw_shots.insert(id.clone());
                }
                if bars > 0 {
                    letterboxed_shots.insert(id.clone());
                }
                let nd = rng.random_range(3..7);
                let ns = rng.random_range(0..10);
                let ocr = if rng.random_range(0..3) == 0 {
                    format!("{} {}", words(&mut rng, 1), rng.random_range(0..100))
                } else {
                    String::new()
                };
                manifest.shots.push(ShotRecord {
                    id: id.clone(),
                    video_id: video_id.clone(),
                    start_s: t,
                    end_s: t + len,
                    keyframe: PathBuf::from(format!("keyframes/{id}.ppm")),
                    description: words(&mut rng, nd),
                    speech: words(&mut rng, ns),
                    ocr,
                });
                keyframes.push(kf);
                t += len;
            }
            manifest.videos.push(VideoRecord {
                id: video_id.clone(),
                duration_s: t.max(30.0),
                title: Some(format!("Synthetic video {v}")),
            });
        }
        let n = manifest.shots.len();
        let concept_labels: Vec<String> = (0..spec.concept_labels).map(concept_label).collect();
        let concept_scores = scores(&mut rng, n * concept_labels.len());
        let object_labels: Vec<String> =
            (0..spec.object_labels.unwrap_or(0)).map(object_label).collect();
        let object_scores = scores(&mut rng, n * object_labels.len());
        if !concept_labels.is_empty() {
            manifest.banks.push(BankRecord {
                kind: BankKind::Concept,
                labels_file: "concept_labels.txt".into(),
                matrix_file: "concept_scores.bin".into(),
            });
        }
        if spec.object_labels.is_some() {
            manifest.banks.push(BankRecord {
                kind: BankKind::Object,
                labels_file: "object_labels.txt".into(),
                matrix_file: "object_scores.bin".into(),
            });
        }
        Self {
            manifest,
            keyframes,
            concept_labels,
            concept_scores,
            object_labels,
            object_scores,
            bw_shots,
            letterboxed_shots,
        }
    }

    /// In-memory corpus with inline keyframes.
    pub fn corpus(&self) -> Corpus {
        let mut b = CorpusBuilder::new();
        for v in &self.manifest.videos {
            b = b.video(&v.id, v.duration_s, v.title.as_deref());
        }
        for (s, kf) in self.manifest.shots.iter().zip(&self.keyframes) {
            b = b
                .shot(Shot {
                    id: s.id.clone(),
                    video_id: s.video_id.clone(),
                    start_s: s.start_s,
                    end_s: s.end_s,
                    keyframe: s.keyframe.clone(),
                    description: s.description.clone(),
                    speech: s.speech.clone(),
                    ocr: s.ocr.clone(),
                })
                .inline_keyframe(&s.id, kf);
        }
        if !self.concept_labels.is_empty() {
            b = b.bank(ScoreBank::new(
                BankKind::Concept,
                self.concept_labels.clone(),
                self.concept_labels.len(),
                self.concept_scores.clone(),
            ));
        }
        if self.manifest.banks.iter().any(|r| r.kind == BankKind::Object) {
            b = b.bank(ScoreBank::new(
                BankKind::Object,
                self.object_labels.clone(),
                self.object_labels.len(),
                self.object_scores.clone(),
            ));
        }
        b.build().expect("generated corpus is valid")
    }

    /// Writes manifest, keyframes, label lists and matrices under `dir` and
    /// returns the manifest path.
    pub fn write(&self, dir: &Path) -> io::Result<PathBuf> {
        std::fs::create_dir_all(dir.join("keyframes"))?;
        for (s, kf) in self.manifest.shots.iter().zip(&self.keyframes) {
            std::fs::write(dir.join(&s.keyframe), kf.encode_ppm())?;
        }
        let n = self.manifest.shots.len();
        for rec in &self.manifest.banks {
            let (labels, scores) = match rec.kind {
                BankKind::Concept => (&self.concept_labels, &self.concept_scores),
                BankKind::Object => (&self.object_labels, &self.object_scores),
            };
            let mut text = labels.join("\n");
            text.push('\n');
            std::fs::write(dir.join(&rec.labels_file), text)?;
            std::fs::write(
                dir.join(&rec.matrix_file),
                write_matrix(n, labels.len(), scores),
            )?;
        }
        let path = dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_vec_pretty(&self.manifest)?)?;
        Ok(path)
    }

    /// One task per listed shot: a visual KIS target of `segment_s` seconds
    /// overlapping the shot and lying inside its video.
    pub fn plant_tasks(&self, shot_ids: &[&str], segment_s: f64, budget_s: f64) -> Vec<KisTask> {
        shot_ids
            .iter()
            .enumerate()
            .map(|(i, sid)| {
                let shot = self
                    .manifest
                    .shots
                    .iter()
                    .find(|s| s.id == *sid)
                    .expect("planted shot exists");
                let video = self
                    .manifest
                    .videos
                    .iter()
                    .find(|v| v.id == shot.video_id)
                    .expect("video exists");
                let start = shot.start_s.min(video.duration_s - segment_s).max(0.0);
                KisTask {
                    id: format!("task{i:02}"),
                    video_id: video.id.clone(),
                    target_start_s: start,
                    target_end_s: start + segment_s,
                    budget_s,
                    kind: TaskKind::Visual,
                    prompt: format!("clip:task{i:02}"),
                }
            })
            .collect()
    }
}

/// Single-video corpus of 10-second shots `s0, s1, ...`, each with a
/// uniform 16x16 keyframe of the given color.
pub fn tiny_corpus(colors: &[[u8; 3]]) -> (Corpus, Vec<String>) {
    let mut b = CorpusBuilder::new().video("v0", 10.0 * colors.len().max(1) as f64, None);
    let mut ids = Vec::new();
    for (i, c) in colors.iter().enumerate() {
        let id = format!("s{i}");
        b = b
            .shot(Shot {
                id: id.clone(),
                video_id: "v0".into(),
                start_s: 10.0 * i as f64,
                end_s: 10.0 * (i + 1) as f64,
                keyframe: PathBuf::from(format!("{id}.ppm")),
                description: String::new(),
                speech: String::new(),
                ocr: String::new(),
            })
            .inline_keyframe(&id, &Keyframe::uniform(16, 16, *c));
        ids.push(id);
    }
    (b.build().expect("tiny corpus is valid"), ids)
}

/// Random signatures for an existing corpus, bypassing keyframe
/// extraction. Used to build large indexes quickly.
pub fn random_signatures(corpus: &Corpus, k: usize, seed: u64) -> Vec<ColorSignature> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    corpus
        .shots()
        .iter()
        .map(|s| {
            let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
            let total: f64 = raw.iter().sum();
            ColorSignature {
                shot_id: s.id.clone(),
                centroids: raw
                    .iter()
                    .map(|w| SignatureCentroid {
                        x: rng.random(),
                        y: rng.random(),
                        color: LabColor::from_rgb(rng.random()),
                        weight: w / total,
                    })
                    .collect(),
            }
        })
        .collect()
}

/// Bare corpus of `n` shots spread over videos of `per_video` shots, with
/// no keyframes on disk. Pair with [`random_signatures`].
pub fn skeleton_corpus(n: usize, per_video: usize) -> Corpus {
    let per_video = per_video.max(1);
    let videos = n.div_ceil(per_video);
    let mut b = CorpusBuilder::new();
    for v in 0..videos {
        b = b.video(&format!("v{v:05}"), 10.0 * per_video as f64, None);
    }
    for i in 0..n {
        let (v, s) = (i / per_video, i % per_video);
        b = b.shot(Shot {
            id: format!("v{v:05}_s{s:03}"),
            video_id: format!("v{v:05}"),
            start_s: 10.0 * s as f64,
            end_s: 10.0 * (s + 1) as f64,
            keyframe: PathBuf::from("missing.ppm"),
            description: String::new(),
            speech: String::new(),
            ocr: String::new(),
        });
    }
    b.build().expect("skeleton corpus is valid")
}
