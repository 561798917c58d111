//! File-based visualization emitters: spectral panels and activation maps
//! as plain portable graymaps (dependency-free, byte-exact goldens).

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::layers::Mode;
use crate::model::Network;
use crate::scalar::Real;
use crate::spectral::{fft2, gaussian_mask, lowpass_reconstruct, GaussianMaskSpec};
use crate::tensor::{Graph, Value};

/// Scale to 0-255 and write a plain (P2) graymap. Returns the (min, max)
/// used for scaling; a constant image maps to all zeros.
pub fn write_pgm(path: &Path, data: &[f64], h: usize, w: usize) -> Result<(f64, f64)> {
    if data.len() != h * w {
        return Err(Error::Dimension(format!(
            "graymap data {} != {h}x{w}",
            data.len()
        )));
    }
    let min = data.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let scale = if max > min { 255.0 / (max - min) } else { 0.0 };
    let mut out = format!("P2\n{w} {h}\n255\n");
    for row in data.chunks(w) {
        let line: Vec<String> = row
            .iter()
            .map(|v| (((v - min) * scale).round() as i64).clamp(0, 255).to_string())
            .collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok((min, max))
}

/// Read a plain (P2) graymap back to [0,1] values.
pub fn read_pgm(path: &Path) -> Result<(Vec<f64>, usize, usize)> {
    let text = fs::read_to_string(path)?;
    let mut tokens = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .flat_map(|l| l.split_whitespace());
    if tokens.next() != Some("P2") {
        return Err(Error::Format("not a plain graymap (expected P2)".into()));
    }
    let mut next_num = |what: &str| -> Result<f64> {
        tokens
            .next()
            .and_then(|t| t.parse::<f64>().ok())
            .ok_or_else(|| Error::Format(format!("graymap missing {what}")))
    };
    let w = next_num("width")? as usize;
    let h = next_num("height")? as usize;
    let maxval = next_num("maxval")?;
    let mut data = Vec::with_capacity(h * w);
    for _ in 0..h * w {
        data.push(next_num("pixel")? / maxval);
    }
    Ok((data, h, w))
}

/// Emit the five spectral panels for a 3x32x32 image in [0,1]: original
/// luma, frequency mask, log-magnitude spectrum, filtered log-magnitude
/// spectrum, and the low-pass reconstruction. Scaling factors go into
/// `scaling.txt`.
pub fn visualize_spectral(image: &[f64], sigma: f64, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let (h, w) = (32usize, 32usize);
    if image.len() != 3 * h * w {
        return Err(Error::Dimension(format!(
            "expected 3x{h}x{w} image, got {} values",
            image.len()
        )));
    }
    fs::create_dir_all(out_dir)?;
    let hw = h * w;
    let luma: Vec<f64> = (0..hw)
        .map(|i| (image[i] + image[hw + i] + image[2 * hw + i]) / 3.0)
        .collect();
    let spec = GaussianMaskSpec::centered(sigma);
    let mask: Vec<f64> = gaussian_mask(&spec, h, w)?;
    let spectrum = fft2(&luma, h, w)?;
    let log_mag: Vec<f64> = spectrum.values.iter().map(|c| (1.0 + c.norm()).ln()).collect();
    let filtered_log_mag: Vec<f64> = spectrum
        .values
        .iter()
        .zip(&mask)
        .map(|(c, m)| (1.0 + c.norm() * m).ln())
        .collect();
    let recon = lowpass_reconstruct(&luma, h, w, &spec)?;

    let panels: [(&str, &[f64], usize, usize); 5] = [
        ("01_original.pgm", &luma, h, w),
        ("02_mask.pgm", &mask, h, w),
        ("03_spectrum.pgm", &log_mag, h, w),
        ("04_filtered_spectrum.pgm", &filtered_log_mag, h, w),
        ("05_reconstruction.pgm", &recon, h, w),
    ];
    let mut files = Vec::new();
    let mut sidecar = format!("panel_size {h} {w}\npadded_size {h} {w}\n");
    for (name, data, ph, pw) in panels {
        let path = out_dir.join(name);
        let (min, max) = write_pgm(&path, data, ph, pw)?;
        sidecar.push_str(&format!("{name} min {min:.17} max {max:.17}\n"));
        files.push(path);
    }
    fs::write(out_dir.join("scaling.txt"), sidecar)?;
    Ok(files)
}

/// Emit activation graymaps (first 8 channels) of the conv layer at
/// `layer_index` for each normalized input image. Files are named
/// `{tag}_img{i}_ch{c}.pgm` so runs with different tags sit side by side
/// in one directory.
pub fn visualize_activations<T: Real>(
    net: &mut Network<T>,
    layer_index: usize,
    images: &[Vec<T>],
    tag: &str,
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir)?;
    let mut files = Vec::new();
    for (i, img) in images.iter().enumerate() {
        let maps = activation_maps(net, layer_index, img)?;
        for (c, (map, mh, mw)) in maps.iter().enumerate() {
            let path = out_dir.join(format!("{tag}_img{i}_ch{c}.pgm"));
            write_pgm(&path, map, *mh, *mw)?;
            files.push(path);
        }
    }
    Ok(files)
}

/// Per-channel activation planes (up to 8) of one conv layer, eval mode.
pub fn activation_maps<T: Real>(
    net: &mut Network<T>,
    layer_index: usize,
    image: &[T],
) -> Result<Vec<(Vec<f64>, usize, usize)>> {
    let (c, h, w) = net.config.input_size;
    if image.len() != c * h * w {
        return Err(Error::Dimension(format!(
            "expected {c}x{h}x{w} image, got {} values",
            image.len()
        )));
    }
    let mut g: Graph<T> = Graph::new();
    net.bind(&mut g);
    let x = g.leaf(Value::new(vec![1, c, h, w], image.to_vec()), false);
    let (_, _, taps) = net.forward_with_taps(&mut g, x, Mode::Eval)?;
    let tap = *taps.get(layer_index).ok_or_else(|| {
        Error::Config(format!(
            "layer index {layer_index} out of range (network has {} conv layers)",
            taps.len()
        ))
    })?;
    let shape = g.shape(tap).to_vec();
    let (channels, th, tw) = (shape[1], shape[2], shape[3]);
    let vals = g.value(tap);
    Ok((0..channels.min(8))
        .map(|ch| {
            let plane = vals[ch * th * tw..(ch + 1) * th * tw]
                .iter()
                .map(|v| v.as_f64())
                .collect();
            (plane, th, tw)
        })
        .collect())
}

/// Pearson correlation between two equally long series.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    cov / (va * vb).sqrt()
}
