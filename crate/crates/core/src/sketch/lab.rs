use serde::{Deserialize, Serialize};

/// CIELAB color under D65 / 2° observer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabColor {
    pub l: f64,
    pub a: f64,
    pub b: f64,
}

// sRGB (D65) to XYZ.
const M: [[f64; 3]; 3] = [
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
];

// Reference white as the image of linear (1, 1, 1), so sRGB white maps to
// L = 100, a = b = 0 exactly.
const WHITE: [f64; 3] = [
    M[0][0] + M[0][1] + M[0][2],
    M[1][0] + M[1][1] + M[1][2],
    M[2][0] + M[2][1] + M[2][2],
];

const DELTA: f64 = 6.0 / 29.0;

fn srgb_to_linear(c: u8) -> f64 {
    let c = c as f64 / 255.0;
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn lab_f(t: f64) -> f64 {
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

pub fn rgb_to_lab(r: u8, g: u8, b: u8) -> LabColor {
    let lin = [srgb_to_linear(r), srgb_to_linear(g), srgb_to_linear(b)];
    let xyz: [f64; 3] =
        std::array::from_fn(|i| M[i][0] * lin[0] + M[i][1] * lin[1] + M[i][2] * lin[2]);
    let fx = lab_f(xyz[0] / WHITE[0]);
    let fy = lab_f(xyz[1] / WHITE[1]);
    let fz = lab_f(xyz[2] / WHITE[2]);
    LabColor {
        l: 116.0 * fy - 16.0,
        a: 500.0 * (fx - fy),
        b: 200.0 * (fy - fz),
    }
}

impl LabColor {
    pub fn from_rgb(rgb: [u8; 3]) -> Self {
        rgb_to_lab(rgb[0], rgb[1], rgb[2])
    }

    /// CIE76 color difference (Euclidean distance in Lab).
    pub fn delta_e76(&self, other: &LabColor) -> f64 {
        let dl = self.l - other.l;
        let da = self.a - other.a;
        let db = self.b - other.b;
        (dl * dl + da * da + db * db).sqrt()
    }

    pub fn is_valid(&self) -> bool {
        (0.0..=100.0).contains(&self.l)
            && (-128.0..=128.0).contains(&self.a)
            && (-128.0..=128.0).contains(&self.b)
    }
}
