//! Position-color signatures via k-means over sampled pixels.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::lab::LabColor;
use crate::corpus::Keyframe;

/// Upper bound on centroids per signature.
pub const K_MAX: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignatureCentroid {
    pub x: f64,
    pub y: f64,
    pub color: LabColor,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColorSignature {
    pub shot_id: String,
    pub centroids: Vec<SignatureCentroid>,
}

/// Sampling and clustering knobs for signature extraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractParams {
    /// Centroids requested per keyframe, clamped to `1..=K_MAX`.
    pub k: usize,
    /// Pixels sampled uniformly with replacement. Images with at most this
    /// many pixels use every pixel.
    pub sample_size: usize,
    pub seed: u64,
    /// Independent k-means++ restarts; the lowest-inertia run wins.
    pub restarts: usize,
    pub max_iters: usize,
    /// Clusters whose mean colors lie within this ΔE76 are merged.
    pub merge_delta_e: f64,
}

impl Default for ExtractParams {
    fn default() -> Self {
        Self {
            k: 8,
            sample_size: 2048,
            seed: 0x5eed_c010,
            restarts: 3,
            max_iters: 50,
            merge_delta_e: 1.0,
        }
    }
}

#[derive(Clone, Copy)]
struct Sample {
    feat: [f64; 5],
    x: f64,
    y: f64,
    lab: LabColor,
}

fn features(x: f64, y: f64, lab: LabColor) -> [f64; 5] {
    [x, y, lab.l / 100.0, lab.a / 256.0, lab.b / 256.0]
}

fn dist2(a: &[f64; 5], b: &[f64; 5]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

fn sample_pixels(kf: &Keyframe, params: &ExtractParams, rng: &mut ChaCha8Rng) -> Vec<Sample> {
    let (w, h) = (kf.width() as usize, kf.height() as usize);
    let n = w * h;
    let mut lab_cache = std::collections::HashMap::new();
    let mut make = |idx: usize| {
        let (px, py) = (idx % w, idx / w);
        let rgb = kf.pixels()[idx];
        let lab = *lab_cache
            .entry(rgb)
            .or_insert_with(|| LabColor::from_rgb(rgb));
        let x = (px as f64 + 0.5) / w as f64;
        let y = (py as f64 + 0.5) / h as f64;
        Sample {
            feat: features(x, y, lab),
            x,
            y,
            lab,
        }
    };
    if n <= params.sample_size {
        (0..n).map(make).collect()
    } else {
        (0..params.sample_size)
            .map(|_| make(rng.random_range(0..n)))
            .collect()
    }
}

/// k-means++ seeding followed by Lloyd iterations. Returns per-sample
/// assignments and total inertia.
fn kmeans(samples: &[Sample], k: usize, max_iters: usize, rng: &mut ChaCha8Rng) -> (Vec<usize>, f64) {
    let mut centers: Vec<[f64; 5]> = vec![samples[rng.random_range(0..samples.len())].feat];
    let mut d2: Vec<f64> = samples.iter().map(|s| dist2(&s.feat, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            break;
        }
        let mut target = rng.random::<f64>() * total;
        let mut pick = samples.len() - 1;
        for (i, d) in d2.iter().enumerate() {
            if target < *d {
                pick = i;
                break;
            }
            target -= d;
        }
        let c = samples[pick].feat;
        for (d, s) in d2.iter_mut().zip(samples) {
            *d = d.min(dist2(&s.feat, &c));
        }
        centers.push(c);
    }

    let mut assign = vec![usize::MAX; samples.len()];
    for _ in 0..max_iters.max(1) {
        let mut changed = false;
        for (a, s) in assign.iter_mut().zip(samples) {
            let best = nearest(&centers, &s.feat);
            if *a != best {
                *a = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![[0.0; 5]; centers.len()];
        let mut counts = vec![0usize; centers.len()];
        for (a, s) in assign.iter().zip(samples) {
            counts[*a] += 1;
            for (acc, v) in sums[*a].iter_mut().zip(&s.feat) {
                *acc += v;
            }
        }
        for ((c, sum), n) in centers.iter_mut().zip(&sums).zip(&counts) {
            if *n > 0 {
                *c = sum.map(|v| v / *n as f64);
            }
        }
    }
    let inertia = assign
        .iter()
        .zip(samples)
        .map(|(a, s)| dist2(&s.feat, &centers[*a]))
        .sum();
    (assign, inertia)
}

fn nearest(centers: &[[f64; 5]], p: &[f64; 5]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, c) in centers.iter().enumerate() {
        let d = dist2(c, p);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// Summarises a keyframe as at most `k` weighted position-color centroids.
///
/// Empty clusters are dropped and clusters of (nearly) the same color are
/// merged, so flat images collapse to a single centroid.
pub fn extract_signature(
    shot_id: &str,
    kf: &Keyframe,
    k: usize,
    params: &ExtractParams,
) -> ColorSignature {
    let k = k.clamp(1, K_MAX);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let samples = sample_pixels(kf, params, &mut rng);

    let mut best: Option<(Vec<usize>, f64)> = None;
    for _ in 0..params.restarts.max(1) {
        let run = kmeans(&samples, k, params.max_iters, &mut rng);
        if best.as_ref().is_none_or(|b| run.1 < b.1) {
            best = Some(run);
        }
    }
    let (assign, _) = best.expect("at least one restart");

    let clusters = assign.iter().copied().max().map_or(0, |m| m + 1);
    let mut acc = vec![[0.0f64; 5]; clusters];
    let mut counts = vec![0usize; clusters];
    for (a, s) in assign.iter().zip(&samples) {
        let e = &mut acc[*a];
        e[0] += s.x;
        e[1] += s.y;
        e[2] += s.lab.l;
        e[3] += s.lab.a;
        e[4] += s.lab.b;
        counts[*a] += 1;
    }
    let total = samples.len() as f64;
    let raw = acc
        .iter()
        .zip(&counts)
        .filter(|(_, n)| **n > 0)
        .map(|(e, n)| {
            let n = *n as f64;
            SignatureCentroid {
                x: e[0] / n,
                y: e[1] / n,
                color: LabColor {
                    l: e[2] / n,
                    a: e[3] / n,
                    b: e[4] / n,
                },
                weight: n / total,
            }
        });

    let mut merged: Vec<SignatureCentroid> = Vec::new();
    for c in raw {
        match merged
            .iter_mut()
            .find(|m| m.color.delta_e76(&c.color) <= params.merge_delta_e)
        {
            Some(m) => {
                let w = m.weight + c.weight;
                let mix = |p: f64, q: f64| (p * m.weight + q * c.weight) / w;
                *m = SignatureCentroid {
                    x: mix(m.x, c.x),
                    y: mix(m.y, c.y),
                    color: LabColor {
                        l: mix(m.color.l, c.color.l),
                        a: mix(m.color.a, c.color.a),
                        b: mix(m.color.b, c.color.b),
                    },
                    weight: w,
                };
            }
            None => merged.push(c),
        }
    }
    merged.sort_by(|p, q| {
        q.weight
            .total_cmp(&p.weight)
            .then(p.x.total_cmp(&q.x))
            .then(p.y.total_cmp(&q.y))
    });
    ColorSignature {
        shot_id: shot_id.to_string(),
        centroids: merged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const RED: [u8; 3] = [255, 0, 0];

    fn weight_sum(sig: &ColorSignature) -> f64 {
        sig.centroids.iter().map(|c| c.weight).sum()
    }

    #[test]
    fn uniform_image_collapses() {
        let kf = Keyframe::uniform(64, 64, RED);
        let sig = extract_signature("s", &kf, 4, &ExtractParams::default());
        assert_eq!(sig.centroids.len(), 1);
        let c = sig.centroids[0];
        assert!((c.x - 0.5).abs() < 0.02 && (c.y - 0.5).abs() < 0.02, "{c:?}");
        assert!(c.color.delta_e76(&LabColor::from_rgb(RED)) < 1e-9);
        assert!((c.weight - 1.0).abs() < 1e-12);
    }

    #[test]
    fn half_black_half_white() {
        let kf = Keyframe::from_fn(64, 64, |x, _| if x < 32 { [0; 3] } else { [255; 3] });
        let sig = extract_signature("s", &kf, 2, &ExtractParams::default());
        assert_eq!(sig.centroids.len(), 2);
        let mut xs: Vec<f64> = sig.centroids.iter().map(|c| c.x).collect();
        xs.sort_by(f64::total_cmp);
        assert!((xs[0] - 0.25).abs() < 0.05 && (xs[1] - 0.75).abs() < 0.05, "{xs:?}");
        for c in &sig.centroids {
            assert!((c.weight - 0.5).abs() <= 0.05);
        }
        assert!((weight_sum(&sig) - 1.0).abs() < 1e-6);
    }

    fn quadrants(x: u32, y: u32) -> [u8; 3] {
        match (x < 32, y < 32) {
            (true, true) => [255, 0, 0],
            (false, true) => [0, 255, 0],
            (true, false) => [0, 0, 255],
            (false, false) => [255, 255, 0],
        }
    }

    #[test]
    fn four_quadrants_match_exhaustive_means() {
        let kf = Keyframe::from_fn(64, 64, quadrants);
        // Oracle: exact per-quadrant mean position and color over all pixels.
        let mut oracle = Vec::new();
        for (qx, qy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
            let (mut sx, mut sy, mut n) = (0.0, 0.0, 0.0);
            for y in 0..64u32 {
                for x in 0..64u32 {
                    if (x / 32, y / 32) == (qx, qy) {
                        sx += (x as f64 + 0.5) / 64.0;
                        sy += (y as f64 + 0.5) / 64.0;
                        n += 1.0;
                    }
                }
            }
            oracle.push((sx / n, sy / n, LabColor::from_rgb(quadrants(qx * 32, qy * 32))));
        }
        let sig = extract_signature("s", &kf, 4, &ExtractParams::default());
        assert_eq!(sig.centroids.len(), 4);
        for (ox, oy, color) in oracle {
            let c = sig
                .centroids
                .iter()
                .find(|c| c.color.delta_e76(&color) < 1e-6)
                .expect("quadrant color present");
            assert!((c.x - ox).abs() <= 0.1 && (c.y - oy).abs() <= 0.1, "{c:?}");
            assert!((c.weight - 0.25).abs() <= 0.05, "{c:?}");
        }
    }

    #[test]
    fn deterministic_and_bounded() {
        let kf = Keyframe::from_fn(40, 30, |x, y| [(x * 6) as u8, (y * 8) as u8, ((x + y) * 3) as u8]);
        let p = ExtractParams::default();
        let a = extract_signature("s", &kf, 16, &p);
        let b = extract_signature("s", &kf, 16, &p);
        assert_eq!(a, b);
        assert!(!a.centroids.is_empty() && a.centroids.len() <= K_MAX);
        assert!((weight_sum(&a) - 1.0).abs() < 1e-6);
        for c in &a.centroids {
            assert!((0.0..=1.0).contains(&c.x) && (0.0..=1.0).contains(&c.y));
        }
        // k beyond K_MAX is clamped
        assert!(extract_signature("s", &kf, 100, &p).centroids.len() <= K_MAX);
    }

    #[test]
    fn tiny_image() {
        let kf = Keyframe::uniform(1, 1, [9, 9, 9]);
        let sig = extract_signature("s", &kf, 8, &ExtractParams::default());
        assert_eq!(sig.centroids.len(), 1);
        assert_eq!((sig.centroids[0].x, sig.centroids[0].y), (0.5, 0.5));
    }
}
