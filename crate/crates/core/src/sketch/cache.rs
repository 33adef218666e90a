//! On-disk color index cache.
//!
//! Layout, all little-endian: magic `KISCIDX\0`, `u32` format version,
//! `u64` corpus fingerprint, the JSON-encoded [`ColorIndexParams`] as
//! `u32` length + bytes, `u32` signature count, then per signature a
//! `u32`-length-prefixed shot id, `u32` centroid count and six `f64`
//! (x, y, L, a, b, weight) per centroid. Histograms are recomputed on read.

use std::io::{self, Read, Write};

use thiserror::Error;

use super::index::{ColorIndex, ColorIndexParams, IndexError};
use super::lab::LabColor;
use super::signature::{ColorSignature, SignatureCentroid};
use crate::corpus::Corpus;

const MAGIC: &[u8; 8] = b"KISCIDX\0";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("cache i/o: {0}")]
    Io(#[from] io::Error),
    #[error("not a color index cache")]
    BadMagic,
    #[error("unsupported cache version {0}")]
    Version(u32),
    #[error("cache was built from a different corpus")]
    StaleCorpus,
    #[error("cache was built with different parameters")]
    StaleParams,
    #[error("corrupt cache: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Index(#[from] IndexError),
}

pub fn write_index_cache(idx: &ColorIndex, mut out: impl Write) -> Result<(), CacheError> {
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&idx.corpus_fingerprint().to_le_bytes())?;
    let params = serde_json::to_vec(idx.params()).map_err(|e| CacheError::Corrupt(e.to_string()))?;
    out.write_all(&(params.len() as u32).to_le_bytes())?;
    out.write_all(&params)?;
    out.write_all(&(idx.signatures().len() as u32).to_le_bytes())?;
    for sig in idx.signatures() {
        out.write_all(&(sig.shot_id.len() as u32).to_le_bytes())?;
        out.write_all(sig.shot_id.as_bytes())?;
        out.write_all(&(sig.centroids.len() as u32).to_le_bytes())?;
        for c in &sig.centroids {
            for v in [c.x, c.y, c.color.l, c.color.a, c.color.b, c.weight] {
                out.write_all(&v.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

/// Reads a cache and checks it against the corpus and the parameters the
/// caller would otherwise build with. The recommendation toggle is not part
/// of the check; it is taken from `expected`.
pub fn read_index_cache(
    mut input: impl Read,
    corpus: &Corpus,
    expected: &ColorIndexParams,
) -> Result<ColorIndex, CacheError> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CacheError::BadMagic);
    }
    let version = read_u32(&mut input)?;
    if version != VERSION {
        return Err(CacheError::Version(version));
    }
    let mut fp = [0u8; 8];
    input.read_exact(&mut fp)?;
    let fingerprint = u64::from_le_bytes(fp);
    if fingerprint != corpus.fingerprint() {
        return Err(CacheError::StaleCorpus);
    }
    let len = read_u32(&mut input)? as usize;
    let mut params = vec![0u8; len];
    input.read_exact(&mut params)?;
    let params: ColorIndexParams =
        serde_json::from_slice(&params).map_err(|e| CacheError::Corrupt(e.to_string()))?;
    let comparable = |p: &ColorIndexParams| ColorIndexParams {
        recommend: true,
        grid: p.grid.max(1),
        ..p.clone()
    };
    if comparable(&params) != comparable(expected) {
        return Err(CacheError::StaleParams);
    }
    let count = read_u32(&mut input)? as usize;
    if count != corpus.shots().len() {
        return Err(CacheError::Corrupt(format!(
            "{count} signatures for {} shots",
            corpus.shots().len()
        )));
    }
    let mut signatures = Vec::with_capacity(count);
    for _ in 0..count {
        let id_len = read_u32(&mut input)? as usize;
        let mut id = vec![0u8; id_len];
        input.read_exact(&mut id)?;
        let shot_id = String::from_utf8(id).map_err(|e| CacheError::Corrupt(e.to_string()))?;
        let n = read_u32(&mut input)? as usize;
        let mut centroids = Vec::with_capacity(n.min(64));
        for _ in 0..n {
            let mut v = [0f64; 6];
            for slot in &mut v {
                let mut b = [0u8; 8];
                input.read_exact(&mut b)?;
                *slot = f64::from_le_bytes(b);
            }
            centroids.push(SignatureCentroid {
                x: v[0],
                y: v[1],
                color: LabColor {
                    l: v[2],
                    a: v[3],
                    b: v[4],
                },
                weight: v[5],
            });
        }
        signatures.push(ColorSignature { shot_id, centroids });
    }
    let params = ColorIndexParams {
        recommend: expected.recommend,
        ..params
    };
    Ok(ColorIndex::from_parts(fingerprint, signatures, params, corpus)?)
}

fn read_u32(input: &mut impl Read) -> io::Result<u32> {
    let mut b = [0u8; 4];
    input.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}
