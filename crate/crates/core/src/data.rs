//! CIFAR-10 binary ingestion, stratified subset selection, normalization,
//! and the crop/flip augmentation pipeline.
//!
//! Pipeline order is fixed: load -> (corrupt, eval only) -> normalize ->
//! (augment, train only). Corruption happens in [0,1] pixel space before
//! normalization because corrupted datasets are distributed as pixels.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::CounterRng;
use crate::scalar::Real;

pub const IMAGE_CHANNELS: usize = 3;
pub const IMAGE_SIDE: usize = 32;
pub const IMAGE_LEN: usize = IMAGE_CHANNELS * IMAGE_SIDE * IMAGE_SIDE;
const RECORD_LEN: usize = 1 + IMAGE_LEN;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug)]
pub struct Dataset<T> {
    /// [N, 3, 32, 32] row-major, pixels in [0,1].
    pub images: Vec<T>,
    pub labels: Vec<u8>,
    pub source: String,
}

impl<T: Real> Dataset<T> {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[T] {
        &self.images[i * IMAGE_LEN..(i + 1) * IMAGE_LEN]
    }
}

/// Parse one CIFAR-10 binary batch file: 3073-byte records of one label
/// byte followed by 3072 pixel bytes (R, G, B planes, row-major).
pub fn load_cifar10_file<T: Real>(path: &Path) -> Result<Dataset<T>> {
    let bytes = fs::read(path)?;
    if bytes.is_empty() || bytes.len() % RECORD_LEN != 0 {
        return Err(Error::Format(format!(
            "{}: size {} is not a positive multiple of {RECORD_LEN}",
            path.display(),
            bytes.len()
        )));
    }
    let n = bytes.len() / RECORD_LEN;
    let mut images = Vec::with_capacity(n * IMAGE_LEN);
    let mut labels = Vec::with_capacity(n);
    for r in 0..n {
        let rec = &bytes[r * RECORD_LEN..(r + 1) * RECORD_LEN];
        if rec[0] >= 10 {
            return Err(Error::Format(format!(
                "{}: record {r} has label byte {} >= 10",
                path.display(),
                rec[0]
            )));
        }
        labels.push(rec[0]);
        images.extend(rec[1..].iter().map(|&b| T::of(b as f64 / 255.0)));
    }
    Ok(Dataset {
        images,
        labels,
        source: path.display().to_string(),
    })
}

/// Load a standard CIFAR-10 directory. Train reads data_batch_1..5.bin
/// (tolerating missing trailing batches), test reads test_batch.bin.
pub fn load_cifar10<T: Real>(dir: &Path, split: Split) -> Result<Dataset<T>> {
    let names: Vec<String> = match split {
        Split::Train => (1..=5).map(|i| format!("data_batch_{i}.bin")).collect(),
        Split::Test => vec!["test_batch.bin".to_string()],
    };
    let mut merged: Option<Dataset<T>> = None;
    for name in &names {
        let path = dir.join(name);
        if !path.exists() {
            continue;
        }
        let part = load_cifar10_file(&path)?;
        match &mut merged {
            None => merged = Some(part),
            Some(ds) => {
                ds.images.extend(part.images);
                ds.labels.extend(part.labels);
                ds.source.push(',');
                ds.source.push_str(&part.source);
            }
        }
    }
    merged.ok_or_else(|| {
        Error::Data(format!(
            "no batch files found in {} (expected {})",
            dir.display(),
            names.join(", ")
        ))
    })
}

/// Deterministic stratified sample: exactly `per_class` examples of each
/// listed class, chosen by seed-keyed ranking of the candidate indices.
pub fn subset<T: Real>(
    ds: &Dataset<T>,
    classes: &[u8],
    per_class: usize,
    seed: u64,
) -> Result<Dataset<T>> {
    let rng = CounterRng::new(seed).stream("subset");
    let mut images = Vec::with_capacity(classes.len() * per_class * IMAGE_LEN);
    let mut labels = Vec::with_capacity(classes.len() * per_class);
    for &class in classes {
        let mut idx: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels[i] == class).collect();
        if idx.len() < per_class {
            return Err(Error::Data(format!(
                "class {class}: requested {per_class}, only {} available",
                idx.len()
            )));
        }
        idx.sort_by_key(|&i| rng.u64_at(i as u64, class as u64));
        for &i in idx.iter().take(per_class) {
            images.extend_from_slice(ds.image(i));
            labels.push(class);
        }
    }
    Ok(Dataset {
        images,
        labels,
        source: format!("{} (subset)", ds.source),
    })
}

#[derive(Clone, Copy, Debug)]
pub struct AugmentPolicy {
    pub crop_padding: usize,
    pub flip_probability: f64,
    pub seed: u64,
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        Self {
            crop_padding: 4,
            flip_probability: 0.5,
            seed: 0,
        }
    }
}

impl AugmentPolicy {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.flip_probability) {
            return Err(Error::Parameter(format!(
                "flip_probability {} out of [0,1]",
                self.flip_probability
            )));
        }
        Ok(())
    }

    /// Randomness stream for one (epoch, sample) draw: replayable exactly.
    pub fn stream(&self, epoch: u64, sample: u64) -> CounterRng {
        CounterRng::new(self.seed)
            .stream("augment")
            .substream(epoch)
            .substream(sample)
    }
}

pub fn hflip<T: Real>(image: &[T], c: usize, h: usize, w: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(image.len());
    for ch in 0..c {
        for y in 0..h {
            let row = &image[(ch * h + y) * w..(ch * h + y + 1) * w];
            out.extend(row.iter().rev().copied());
        }
    }
    out
}

/// Zero-pad, take a random window of the original size, flip with the
/// configured probability. Draws come only from `rng`, so a replayed stream
/// reproduces the output bit-exactly.
pub fn augment<T: Real>(image: &[T], policy: &AugmentPolicy, rng: &CounterRng) -> Vec<T> {
    let (c, h, w) = (IMAGE_CHANNELS, IMAGE_SIDE, IMAGE_SIDE);
    debug_assert_eq!(image.len(), c * h * w);
    let pad = policy.crop_padding;
    let dy = rng.index_at(0, 0, 2 * pad + 1);
    let dx = rng.index_at(0, 1, 2 * pad + 1);
    let mut out = vec![T::zero(); image.len()];
    for ch in 0..c {
        for y in 0..h {
            // source row in padded coordinates
            let sy = y + dy;
            if sy < pad || sy >= pad + h {
                continue;
            }
            for x in 0..w {
                let sx = x + dx;
                if sx < pad || sx >= pad + w {
                    continue;
                }
                out[(ch * h + y) * w + x] = image[(ch * h + sy - pad) * w + sx - pad];
            }
        }
    }
    if rng.uniform_at(1, 0) < policy.flip_probability {
        out = hflip(&out, c, h, w);
    }
    out
}

/// Per-channel standardization with configured channel statistics.
pub fn normalize<T: Real>(image: &[T], means: &[f64; 3], stds: &[f64; 3]) -> Vec<T> {
    let hw = IMAGE_SIDE * IMAGE_SIDE;
    let mut out = Vec::with_capacity(image.len());
    for ch in 0..IMAGE_CHANNELS {
        let m = T::of(means[ch]);
        let inv = T::of(1.0 / stds[ch]);
        out.extend(image[ch * hw..(ch + 1) * hw].iter().map(|&v| (v - m) * inv));
    }
    out
}

pub fn denormalize<T: Real>(image: &[T], means: &[f64; 3], stds: &[f64; 3]) -> Vec<T> {
    let hw = IMAGE_SIDE * IMAGE_SIDE;
    let mut out = Vec::with_capacity(image.len());
    for ch in 0..IMAGE_CHANNELS {
        let m = T::of(means[ch]);
        let s = T::of(stds[ch]);
        out.extend(image[ch * hw..(ch + 1) * hw].iter().map(|&v| v * s + m));
    }
    out
}

/// Procedural CIFAR-shaped dataset for demos, fixtures, and smoke training
/// runs without a dataset download. Each class pairs a distinctive smooth
/// low-frequency shape with a class-correlated fine texture, so both
/// spectral bands carry label information and blurring is genuinely lossy.
pub fn synthetic_dataset<T: Real>(classes: &[u8], per_class: usize, seed: u64) -> Dataset<T> {
    let rng = CounterRng::new(seed).stream("synthetic");
    let n = classes.len() * per_class;
    let mut images = Vec::with_capacity(n * IMAGE_LEN);
    let mut labels = Vec::with_capacity(n);
    let side = IMAGE_SIDE as f64;
    for (ci, &class) in classes.iter().enumerate() {
        for k in 0..per_class {
            let r = rng.substream(class as u64).substream(k as u64);
            let cls = class as f64;
            // class-keyed blob position on a circle, jittered per sample
            let ang = cls / 10.0 * std::f64::consts::TAU;
            let cy = side / 2.0 + side / 4.0 * ang.sin() + r.normal_at(0, 0) * 1.5;
            let cx = side / 2.0 + side / 4.0 * ang.cos() + r.normal_at(0, 2) * 1.5;
            let sg = 3.5 + 0.4 * cls;
            // class-keyed grating orientation and phase
            let gr_ang = cls * std::f64::consts::PI / 10.0;
            let (gdy, gdx) = (gr_ang.sin(), gr_ang.cos());
            let phase = r.uniform_at(1, 0) * std::f64::consts::TAU;
            let freq = 0.35 * std::f64::consts::TAU;
            // the grating is deliberately the stronger cue: a classifier free
            // to use high frequencies will prefer it, while the blob's
            // size/channel profile is the cue that survives blurring
            for ch in 0..IMAGE_CHANNELS {
                let chf = ch as f64;
                let blob_amp = 0.22 + 0.08 * ((cls + chf) % 3.0);
                for y in 0..IMAGE_SIDE {
                    for x in 0..IMAGE_SIDE {
                        let dy = y as f64 - cy;
                        let dx = x as f64 - cx;
                        let blob = blob_amp * (-(dy * dy + dx * dx) / (2.0 * sg * sg)).exp();
                        let tex = 0.25
                            * (freq * (gdy * y as f64 + gdx * x as f64) + phase).sin();
                        let noise = 0.05 * r.normal_at((ch * 1024 + y * 32 + x) as u64, 4);
                        let v = (0.45 + blob + tex + noise).clamp(0.0, 1.0);
                        images.push(T::of(v));
                    }
                }
            }
            labels.push(class);
            let _ = ci;
        }
    }
    Dataset {
        images,
        labels,
        source: format!("synthetic(seed={seed})"),
    }
}

/// Write a dataset as a CIFAR-10 binary batch file.
pub fn write_cifar_batch<T: Real>(ds: &Dataset<T>, path: &Path) -> Result<()> {
    let mut bytes = Vec::with_capacity(ds.len() * RECORD_LEN);
    for i in 0..ds.len() {
        bytes.push(ds.labels[i]);
        bytes.extend(
            ds.image(i)
                .iter()
                .map(|v| (v.as_f64() * 255.0).round().clamp(0.0, 255.0) as u8),
        );
    }
    fs::write(path, bytes)?;
    Ok(())
}
