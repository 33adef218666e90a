//! Binary PPM (P6, maxval 255) keyframe codec.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A decoded keyframe: row-major RGB, 8 bits per channel.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Keyframe {
    width: u32,
    height: u32,
    pixels: Vec<[u8; 3]>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KeyframeError {
    #[error("bad magic: expected P6")]
    BadMagic,
    #[error("malformed header: {0}")]
    Header(String),
    #[error("unsupported maxval {0}, only 255 is accepted")]
    MaxVal(u32),
    #[error("truncated payload: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("{0} bytes of trailing data after the pixel payload")]
    TrailingData(usize),
    #[error("image dimensions must be at least 1x1, got {0}x{1}")]
    Empty(u32, u32),
    #[error("pixel count {actual} does not match {width}x{height}")]
    PixelCount {
        width: u32,
        height: u32,
        actual: usize,
    },
}

impl Keyframe {
    pub fn new(width: u32, height: u32, pixels: Vec<[u8; 3]>) -> Result<Self, KeyframeError> {
        if width == 0 || height == 0 {
            return Err(KeyframeError::Empty(width, height));
        }
        if pixels.len() != width as usize * height as usize {
            return Err(KeyframeError::PixelCount {
                width,
                height,
                actual: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Builds a keyframe by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> [u8; 3]) -> Self {
        assert!(width >= 1 && height >= 1, "keyframe must be nonempty");
        let mut pixels = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn uniform(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        Self::from_fn(width, height, |_, _| rgb)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.pixels
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        self.pixels[y as usize * self.width as usize + x as usize]
    }

    /// Canonical P6 encoding: `P6\n<w> <h>\n255\n` followed by the payload.
    pub fn encode_ppm(&self) -> Vec<u8> {
        let header = format!("P6\n{} {}\n255\n", self.width, self.height);
        let mut out = Vec::with_capacity(header.len() + self.pixels.len() * 3);
        out.extend_from_slice(header.as_bytes());
        for p in &self.pixels {
            out.extend_from_slice(p);
        }
        out
    }
}

/// Decodes a binary PPM. Header comments (`#` to end of line) are accepted.
pub fn decode_keyframe(bytes: &[u8]) -> Result<Keyframe, KeyframeError> {
    if bytes.len() < 2 || &bytes[..2] != b"P6" {
        return Err(KeyframeError::BadMagic);
    }
    let mut cursor = HeaderCursor { bytes, pos: 2 };
    let width = cursor.number("width")?;
    let height = cursor.number("height")?;
    let maxval = cursor.number("maxval")?;
    if maxval != 255 {
        return Err(KeyframeError::MaxVal(maxval));
    }
    // Exactly one whitespace byte separates the header from the payload.
    match bytes.get(cursor.pos) {
        Some(b) if b.is_ascii_whitespace() => cursor.pos += 1,
        _ => return Err(KeyframeError::Header("missing separator after maxval".into())),
    }
    if width == 0 || height == 0 {
        return Err(KeyframeError::Empty(width, height));
    }
    let expected = width as usize * height as usize * 3;
    let payload = &bytes[cursor.pos..];
    if payload.len() < expected {
        return Err(KeyframeError::Truncated {
            expected,
            actual: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(KeyframeError::TrailingData(payload.len() - expected));
    }
    let pixels = payload
        .chunks_exact(3)
        .map(|c| [c[0], c[1], c[2]])
        .collect();
    Ok(Keyframe {
        width,
        height,
        pixels,
    })
}

struct HeaderCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl HeaderCursor<'_> {
    fn skip_whitespace_and_comments(&mut self) -> usize {
        let start = self.pos;
        while let Some(&b) = self.bytes.get(self.pos) {
            if b.is_ascii_whitespace() {
                self.pos += 1;
            } else if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' {
                        break;
                    }
                }
            } else {
                break;
            }
        }
        self.pos - start
    }

    fn number(&mut self, what: &str) -> Result<u32, KeyframeError> {
        if self.skip_whitespace_and_comments() == 0 {
            return Err(KeyframeError::Header(format!("expected whitespace before {what}")));
        }
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(KeyframeError::Header(format!("expected {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| KeyframeError::Header(format!("{what} out of range")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn decodes_two_pixel_image() {
        let mut bytes = b"P6\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[255, 0, 0, 0, 0, 255]);
        let kf = decode_keyframe(&bytes).unwrap();
        assert_eq!((kf.width(), kf.height()), (2, 1));
        assert_eq!(kf.pixels(), &[[255, 0, 0], [0, 0, 255]]);
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let mut bytes = b"P6 4 4 255\n".to_vec();
        bytes.extend_from_slice(&[7; 9]);
        assert_eq!(
            decode_keyframe(&bytes),
            Err(KeyframeError::Truncated {
                expected: 48,
                actual: 9
            })
        );
    }

    #[test]
    fn generated_gray_file_decodes_exactly() {
        let mut bytes = b"P6\n64 64\n255\n".to_vec();
        bytes.extend(std::iter::repeat_n(128u8, 64 * 64 * 3));
        let kf = decode_keyframe(&bytes).unwrap();
        assert_eq!(kf.pixels().len(), 4096);
        assert!(kf.pixels().iter().all(|p| *p == [128, 128, 128]));
    }

    #[test]
    fn header_errors() {
        assert_eq!(decode_keyframe(b"P3 1 1 255\n"), Err(KeyframeError::BadMagic));
        assert_eq!(decode_keyframe(b""), Err(KeyframeError::BadMagic));
        assert_eq!(
            decode_keyframe(b"P6 1 1 65535\n\0\0\0\0\0\0"),
            Err(KeyframeError::MaxVal(65535))
        );
        assert!(matches!(
            decode_keyframe(b"P6 x 1 255\n"),
            Err(KeyframeError::Header(_))
        ));
        assert_eq!(
            decode_keyframe(b"P6 0 1 255\n"),
            Err(KeyframeError::Empty(0, 1))
        );
        assert_eq!(
            decode_keyframe(b"P6 1 1 255\n\x01\x02\x03\x04"),
            Err(KeyframeError::TrailingData(1))
        );
    }

    #[test]
    fn comments_in_header() {
        let bytes = b"P6\n# made by hand\n1 1\n# max\n255\n\x0a\x0b\x0c";
        let kf = decode_keyframe(bytes).unwrap();
        assert_eq!(kf.pixel(0, 0), [10, 11, 12]);
    }

    proptest! {
        #[test]
        fn canonical_encoding_round_trips(
            w in 1u32..12,
            h in 1u32..12,
            seed in proptest::collection::vec(any::<u8>(), 432),
        ) {
            let n = (w * h) as usize;
            let pixels: Vec<[u8; 3]> = (0..n).map(|i| [seed[3 * i], seed[3 * i + 1], seed[3 * i + 2]]).collect();
            let bytes = Keyframe::new(w, h, pixels).unwrap().encode_ppm();
            let decoded = decode_keyframe(&bytes).unwrap();
            prop_assert_eq!(decoded.encode_ppm(), bytes);
        }
    }
}
