//! Severity-parameterized image corruptions in [0,1] pixel space.
//!
//! Randomness is counter-based and keyed by (seed, kind, severity, pixel
//! index), so outputs are bit-identical across runs and platforms and
//! independent of iteration order. Severity constants live in a versioned
//! data file, not in code.

use std::collections::HashMap;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::rng::CounterRng;
use crate::scalar::Real;

const SEVERITY_TABLE: &str = include_str!("../data/severity_table.txt");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CorruptionKind {
    GaussianNoise,
    ShotNoise,
    ImpulseNoise,
    SpeckleNoise,
    GaussianBlur,
    DefocusBlur,
    MotionBlur,
    ZoomBlur,
    Pixelate,
    Contrast,
    Brightness,
    Saturate,
    Identity,
}

use CorruptionKind::*;

/// Every non-identity kind, in reporting order.
pub const ALL_KINDS: [CorruptionKind; 12] = [
    GaussianNoise,
    ShotNoise,
    ImpulseNoise,
    SpeckleNoise,
    GaussianBlur,
    DefocusBlur,
    MotionBlur,
    ZoomBlur,
    Pixelate,
    Contrast,
    Brightness,
    Saturate,
];

/// The blur family used for the robustness headline numbers.
pub const BLUR_KINDS: [CorruptionKind; 4] = [GaussianBlur, DefocusBlur, MotionBlur, ZoomBlur];

impl CorruptionKind {
    pub fn name(self) -> &'static str {
        match self {
            GaussianNoise => "gaussian_noise",
            ShotNoise => "shot_noise",
            ImpulseNoise => "impulse_noise",
            SpeckleNoise => "speckle_noise",
            GaussianBlur => "gaussian_blur",
            DefocusBlur => "defocus_blur",
            MotionBlur => "motion_blur",
            ZoomBlur => "zoom_blur",
            Pixelate => "pixelate",
            Contrast => "contrast",
            Brightness => "brightness",
            Saturate => "saturate",
            Identity => "identity",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        ALL_KINDS
            .iter()
            .copied()
            .chain([Identity])
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let wanted = [
                    "frost",
                    "fog",
                    "snow",
                    "spatter",
                    "glass_blur",
                    "elastic_transform",
                    "jpeg_compression",
                ];
                if wanted.contains(&s) {
                    Error::Spec(format!(
                        "corruption kind '{s}' needs external assets or codecs and is \
                         not implemented; supported kinds: {}",
                        ALL_KINDS.iter().map(|k| k.name()).collect::<Vec<_>>().join(", ")
                    ))
                } else {
                    Error::Spec(format!(
                        "unknown corruption kind '{s}'; supported kinds: {}",
                        ALL_KINDS.iter().map(|k| k.name()).collect::<Vec<_>>().join(", ")
                    ))
                }
            })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct CorruptionSpec {
    pub kind: CorruptionKind,
    /// 0 disables the corruption entirely.
    pub severity: u8,
    pub seed: u64,
}

impl CorruptionSpec {
    pub fn validate(&self) -> Result<()> {
        if self.severity > 5 {
            return Err(Error::Spec(format!(
                "severity {} out of range 0-5",
                self.severity
            )));
        }
        Ok(())
    }
}

fn table() -> &'static HashMap<(&'static str, u8), Vec<f64>> {
    static TABLE: OnceLock<HashMap<(&'static str, u8), Vec<f64>>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut map = HashMap::new();
        for line in SEVERITY_TABLE.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let kind = parts.next().expect("non-empty line");
            let sev: u8 = parts.next().and_then(|s| s.parse().ok()).expect("severity");
            let params: Vec<f64> = parts.map(|p| p.parse().expect("numeric param")).collect();
            map.insert((kind, sev), params);
        }
        map
    })
}

/// Look up the frozen parameter tuple for a kind at severity 1-5.
pub fn severity_params(kind: CorruptionKind, severity: u8) -> Result<&'static [f64]> {
    if severity == 0 {
        return Err(Error::Contract(
            "severity 0 is the identity, not a table entry".into(),
        ));
    }
    if severity > 5 {
        return Err(Error::Spec(format!("severity {severity} out of range 1-5")));
    }
    if kind == Identity {
        return Err(Error::Contract("identity has no severity parameters".into()));
    }
    table()
        .get(&(kind.name(), severity))
        .map(|v| v.as_slice())
        .ok_or_else(|| Error::Spec(format!("no table entry for {} {severity}", kind.name())))
}

/// Apply `spec` to a C×H×W image with pixels in [0,1]. Pure: the input is
/// untouched and the output is a deterministic function of (image, spec).
pub fn corrupt<T: Real>(image: &[T], c: usize, h: usize, w: usize, spec: &CorruptionSpec) -> Result<Vec<T>> {
    spec.validate()?;
    if image.len() != c * h * w {
        return Err(Error::Dimension(format!(
            "image length {} != {c}x{h}x{w}",
            image.len()
        )));
    }
    if spec.severity == 0 || spec.kind == Identity {
        return Ok(image.to_vec());
    }
    let p = severity_params(spec.kind, spec.severity)?;
    let rng = CounterRng::new(spec.seed)
        .stream("corrupt")
        .stream(spec.kind.name())
        .substream(spec.severity as u64);
    let out = match spec.kind {
        GaussianNoise => map_pixels(image, |v, i| v + T::of(rng.normal_at(i, 0) * p[0])),
        ShotNoise => map_pixels(image, |v, i| {
            let lam = (v.as_f64() * p[0]).max(0.0);
            T::of(rng.poisson_at(i, 0, lam) as f64 / p[0])
        }),
        ImpulseNoise => map_pixels(image, |v, i| {
            let u = rng.uniform_at(i, 0);
            if u < p[0] / 2.0 {
                T::zero()
            } else if u < p[0] {
                T::one()
            } else {
                v
            }
        }),
        SpeckleNoise => map_pixels(image, |v, i| v + v * T::of(rng.normal_at(i, 0) * p[0])),
        GaussianBlur => {
            let k = gaussian_kernel(p[0]);
            convolve_sep(image, c, h, w, &k)
        }
        DefocusBlur => {
            let k = disk_kernel(p[0], p[1]);
            convolve_2d(image, c, h, w, &k)
        }
        MotionBlur => {
            // per-image streak direction, drawn off the pixel counter range
            let angle = rng.stream("angle").uniform_at(0, 0) * std::f64::consts::PI;
            motion_blur(image, c, h, w, p[0], p[1], angle)
        }
        ZoomBlur => zoom_blur(image, c, h, w, p[0], p[1]),
        Pixelate => pixelate(image, c, h, w, p[0]),
        Contrast => {
            let mut out = Vec::with_capacity(image.len());
            for ch in 0..c {
                let plane = &image[ch * h * w..(ch + 1) * h * w];
                let mut mean = T::zero();
                for v in plane {
                    mean += *v;
                }
                mean *= T::of(1.0 / (h * w) as f64);
                let f = T::of(p[0]);
                out.extend(plane.iter().map(|v| (*v - mean) * f + mean));
            }
            out
        }
        Brightness => map_pixels(image, |v, _| v + T::of(p[0])),
        Saturate => {
            let hw = h * w;
            let mut out = vec![T::zero(); image.len()];
            let f = T::of(p[0]);
            let off = T::of(p[1]);
            let third = T::of(1.0 / 3.0);
            for i in 0..hw {
                let mut gray = T::zero();
                for ch in 0..c {
                    gray += image[ch * hw + i];
                }
                gray *= third;
                for ch in 0..c {
                    out[ch * hw + i] = gray + f * (image[ch * hw + i] - gray) + off;
                }
            }
            out
        }
        Identity => unreachable!(),
    };
    Ok(out.into_iter().map(clamp01).collect())
}

fn clamp01<T: Real>(v: T) -> T {
    v.max(T::zero()).min(T::one())
}

fn map_pixels<T: Real>(image: &[T], f: impl Fn(T, u64) -> T) -> Vec<T> {
    image
        .iter()
        .enumerate()
        .map(|(i, v)| f(*v, i as u64))
        .collect()
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Clamp-to-edge separable convolution with a symmetric 1D kernel.
fn convolve_sep<T: Real>(image: &[T], c: usize, h: usize, w: usize, k: &[f64]) -> Vec<T> {
    let radius = (k.len() / 2) as isize;
    let hw = h * w;
    let mut tmp = vec![T::zero(); image.len()];
    let mut out = vec![T::zero(); image.len()];
    for ch in 0..c {
        let plane = &image[ch * hw..(ch + 1) * hw];
        for y in 0..h {
            for x in 0..w {
                let mut acc = T::zero();
                for (ki, kv) in k.iter().enumerate() {
                    let xx = (x as isize + ki as isize - radius).clamp(0, w as isize - 1);
                    acc += plane[y * w + xx as usize] * T::of(*kv);
                }
                tmp[ch * hw + y * w + x] = acc;
            }
        }
        for y in 0..h {
            for x in 0..w {
                let mut acc = T::zero();
                for (ki, kv) in k.iter().enumerate() {
                    let yy = (y as isize + ki as isize - radius).clamp(0, h as isize - 1);
                    acc += tmp[ch * hw + yy as usize * w + x] * T::of(*kv);
                }
                out[ch * hw + y * w + x] = acc;
            }
        }
    }
    out
}

/// Anti-aliased disk kernel: a hard disk softened by a small Gaussian.
fn disk_kernel(radius: f64, alias_sigma: f64) -> Vec<Vec<f64>> {
    let r = radius.ceil() as isize + 1;
    let n = (2 * r + 1) as usize;
    let mut k = vec![vec![0.0; n]; n];
    for (i, row) in k.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let dy = i as f64 - r as f64;
            let dx = j as f64 - r as f64;
            if (dx * dx + dy * dy).sqrt() <= radius {
                *v = 1.0;
            }
        }
    }
    let g = gaussian_kernel(alias_sigma.max(0.05));
    let gr = g.len() / 2;
    let mut soft = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for (gi, gvi) in g.iter().enumerate() {
                for (gj, gvj) in g.iter().enumerate() {
                    let y = (i + gi).saturating_sub(gr).min(n - 1);
                    let x = (j + gj).saturating_sub(gr).min(n - 1);
                    acc += k[y][x] * gvi * gvj;
                }
            }
            soft[i][j] = acc;
        }
    }
    let sum: f64 = soft.iter().flatten().sum();
    for row in &mut soft {
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    soft
}

fn convolve_2d<T: Real>(image: &[T], c: usize, h: usize, w: usize, k: &[Vec<f64>]) -> Vec<T> {
    let radius = (k.len() / 2) as isize;
    let hw = h * w;
    let mut out = vec![T::zero(); image.len()];
    for ch in 0..c {
        let plane = &image[ch * hw..(ch + 1) * hw];
        for y in 0..h {
            for x in 0..w {
                let mut acc = T::zero();
                for (ki, row) in k.iter().enumerate() {
                    let yy = (y as isize + ki as isize - radius).clamp(0, h as isize - 1);
                    for (kj, kv) in row.iter().enumerate() {
                        let xx = (x as isize + kj as isize - radius).clamp(0, w as isize - 1);
                        acc += plane[yy as usize * w + xx as usize] * T::of(*kv);
                    }
                }
                out[ch * hw + y * w + x] = acc;
            }
        }
    }
    out
}

/// Bilinear sample with clamp-to-edge, one channel plane.
fn bilinear<T: Real>(plane: &[T], h: usize, w: usize, y: f64, x: f64) -> T {
    let yc = y.clamp(0.0, (h - 1) as f64);
    let xc = x.clamp(0.0, (w - 1) as f64);
    let y0 = yc.floor() as usize;
    let x0 = xc.floor() as usize;
    let y1 = (y0 + 1).min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    let fy = T::of(yc - y0 as f64);
    let fx = T::of(xc - x0 as f64);
    let one = T::one();
    plane[y0 * w + x0] * (one - fy) * (one - fx)
        + plane[y0 * w + x1] * (one - fy) * fx
        + plane[y1 * w + x0] * fy * (one - fx)
        + plane[y1 * w + x1] * fy * fx
}

/// Gaussian-weighted average of translated bilinear resamples along a line.
fn motion_blur<T: Real>(
    image: &[T],
    c: usize,
    h: usize,
    w: usize,
    extent: f64,
    sigma: f64,
    angle: f64,
) -> Vec<T> {
    let taps = extent.ceil() as isize;
    let (dy, dx) = (angle.sin(), angle.cos());
    let weights: Vec<f64> = (-taps..=taps)
        .map(|t| (-(t * t) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let wsum: f64 = weights.iter().sum();
    let hw = h * w;
    let mut out = vec![T::zero(); image.len()];
    for ch in 0..c {
        let plane = &image[ch * hw..(ch + 1) * hw];
        for y in 0..h {
            for x in 0..w {
                let mut acc = T::zero();
                for (wi, t) in (-taps..=taps).enumerate() {
                    let sy = y as f64 + dy * t as f64 * extent / (2.0 * taps as f64);
                    let sx = x as f64 + dx * t as f64 * extent / (2.0 * taps as f64);
                    acc += bilinear(plane, h, w, sy, sx) * T::of(weights[wi] / wsum);
                }
                out[ch * hw + y * w + x] = acc;
            }
        }
    }
    out
}

/// Average of center-zoomed bilinear resamples from factor 1 to `max_zoom`.
fn zoom_blur<T: Real>(image: &[T], c: usize, h: usize, w: usize, max_zoom: f64, step: f64) -> Vec<T> {
    let mut factors = Vec::new();
    let mut f = 1.0;
    while f < max_zoom + 1e-9 {
        factors.push(f);
        f += step;
    }
    let hw = h * w;
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let inv = T::of(1.0 / factors.len() as f64);
    let mut out = vec![T::zero(); image.len()];
    for ch in 0..c {
        let plane = &image[ch * hw..(ch + 1) * hw];
        for y in 0..h {
            for x in 0..w {
                let mut acc = T::zero();
                for &z in &factors {
                    let sy = cy + (y as f64 - cy) / z;
                    let sx = cx + (x as f64 - cx) / z;
                    acc += bilinear(plane, h, w, sy, sx);
                }
                out[ch * hw + y * w + x] = acc * inv;
            }
        }
    }
    out
}

/// Index of the low-res cell a full-res coordinate collapses into.
pub fn pixelate_cell(dim: usize, low: usize, i: usize) -> usize {
    i * low / dim
}

fn pixelate<T: Real>(image: &[T], c: usize, h: usize, w: usize, fraction: f64) -> Vec<T> {
    let lh = ((h as f64 * fraction).round() as usize).max(1);
    let lw = ((w as f64 * fraction).round() as usize).max(1);
    let hw = h * w;
    let mut out = vec![T::zero(); image.len()];
    for ch in 0..c {
        let plane = &image[ch * hw..(ch + 1) * hw];
        // nearest-neighbor downscale
        let mut low = vec![T::zero(); lh * lw];
        for ly in 0..lh {
            for lx in 0..lw {
                let sy = ly * h / lh;
                let sx = lx * w / lw;
                low[ly * lw + lx] = plane[sy * w + sx];
            }
        }
        for y in 0..h {
            for x in 0..w {
                out[ch * hw + y * w + x] =
                    low[pixelate_cell(h, lh, y) * lw + pixelate_cell(w, lw, x)];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests;
