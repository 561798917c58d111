use super::*;
use crate::rng::CounterRng;

fn test_image(seed: u64, lo: f64, hi: f64) -> Vec<f64> {
    let rng = CounterRng::new(seed).stream("img");
    (0..3 * 32 * 32)
        .map(|i| lo + (hi - lo) * rng.uniform_at(i as u64, 0))
        .collect()
}

#[test]
fn severity_zero_is_bit_exact_identity_for_every_kind() {
    let img = test_image(1, 0.0, 1.0);
    for kind in ALL_KINDS.iter().copied().chain([CorruptionKind::Identity]) {
        let spec = CorruptionSpec { kind, severity: 0, seed: 9 };
        assert_eq!(corrupt(&img, 3, 32, 32, &spec).unwrap(), img, "{}", kind.name());
    }
}

#[test]
fn gaussian_noise_folded_mean_matches_sigma() {
    // mean |out - in| of zero-mean Gaussian noise is sigma * sqrt(2/pi);
    // pixels kept away from the clamp boundaries
    let img = test_image(2, 0.35, 0.65);
    for severity in 1..=5u8 {
        let sigma = severity_params(CorruptionKind::GaussianNoise, severity).unwrap()[0];
        let spec = CorruptionSpec { kind: CorruptionKind::GaussianNoise, severity, seed: 3 };
        let out = corrupt(&img, 3, 32, 32, &spec).unwrap();
        let mean_abs: f64 = img
            .iter()
            .zip(&out)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / img.len() as f64;
        let expect = sigma * (2.0 / std::f64::consts::PI).sqrt();
        assert!(
            (mean_abs - expect).abs() / expect < 0.05,
            "severity {severity}: {mean_abs} vs {expect}"
        );
    }
}

#[test]
fn pixelate_is_piecewise_constant_on_the_block_grid() {
    let img = test_image(4, 0.0, 1.0);
    let spec = CorruptionSpec { kind: CorruptionKind::Pixelate, severity: 5, seed: 0 };
    let out = corrupt(&img, 3, 32, 32, &spec).unwrap();
    let frac = severity_params(CorruptionKind::Pixelate, 5).unwrap()[0];
    let low = ((32.0 * frac).round() as usize).max(1);
    for ch in 0..3 {
        for y in 0..32 {
            for x in 0..32 {
                // every pixel equals the representative of its cell
                let ry = (0..32).find(|&i| pixelate_cell(32, low, i) == pixelate_cell(32, low, y)).unwrap();
                let rx = (0..32).find(|&i| pixelate_cell(32, low, i) == pixelate_cell(32, low, x)).unwrap();
                assert_eq!(out[ch * 1024 + y * 32 + x], out[ch * 1024 + ry * 32 + rx]);
            }
        }
    }
}

#[test]
fn table_lookups_are_frozen_and_monotone() {
    let inc = [
        CorruptionKind::GaussianNoise,
        CorruptionKind::SpeckleNoise,
        CorruptionKind::ImpulseNoise,
        CorruptionKind::GaussianBlur,
        CorruptionKind::Brightness,
    ];
    for kind in inc {
        let vals: Vec<f64> = (1..=5)
            .map(|s| severity_params(kind, s).unwrap()[0])
            .collect();
        assert!(vals.windows(2).all(|p| p[1] > p[0]), "{}", kind.name());
    }
    let contrast: Vec<f64> = (1..=5)
        .map(|s| severity_params(CorruptionKind::Contrast, s).unwrap()[0])
        .collect();
    assert!(contrast.windows(2).all(|p| p[1] < p[0]));
    assert!(contrast.iter().all(|&v| v < 1.0));
    // shot noise strength grows as the photon scale shrinks
    let shot: Vec<f64> = (1..=5)
        .map(|s| severity_params(CorruptionKind::ShotNoise, s).unwrap()[0])
        .collect();
    assert!(shot.windows(2).all(|p| p[1] < p[0]));

    assert_eq!(
        severity_params(CorruptionKind::MotionBlur, 3).unwrap(),
        severity_params(CorruptionKind::MotionBlur, 3).unwrap()
    );
    assert!(matches!(
        severity_params(CorruptionKind::GaussianNoise, 0),
        Err(Error::Contract(_))
    ));
    assert!(severity_params(CorruptionKind::GaussianNoise, 6).is_err());
    assert!(CorruptionKind::parse("fog").is_err());
    assert_eq!(CorruptionKind::parse("zoom_blur").unwrap(), CorruptionKind::ZoomBlur);
}

#[test]
fn corrupt_is_deterministic_and_pure() {
    let img = test_image(5, 0.0, 1.0);
    let before = img.clone();
    for kind in ALL_KINDS {
        let spec = CorruptionSpec { kind, severity: 3, seed: 77 };
        let a = corrupt(&img, 3, 32, 32, &spec).unwrap();
        let b = corrupt(&img, 3, 32, 32, &spec).unwrap();
        assert_eq!(a, b, "{}", kind.name());
        assert_eq!(img, before);
        // a different seed must decorrelate the stochastic kinds
        let other = CorruptionSpec { seed: 78, ..spec };
        let c = corrupt(&img, 3, 32, 32, &other).unwrap();
        match kind {
            CorruptionKind::GaussianNoise
            | CorruptionKind::ShotNoise
            | CorruptionKind::ImpulseNoise
            | CorruptionKind::SpeckleNoise
            | CorruptionKind::MotionBlur => assert_ne!(a, c, "{}", kind.name()),
            _ => assert_eq!(a, c, "{}", kind.name()),
        }
    }
}

#[test]
fn output_stays_in_unit_range() {
    let img = test_image(6, 0.0, 1.0);
    for kind in ALL_KINDS {
        for severity in 1..=5u8 {
            let spec = CorruptionSpec { kind, severity, seed: 11 };
            let out = corrupt(&img, 3, 32, 32, &spec).unwrap();
            assert!(
                out.iter().all(|&v| (0.0..=1.0).contains(&v)),
                "{} s{severity}",
                kind.name()
            );
        }
    }
}

#[test]
fn photometric_kinds_barely_clip_mid_gray() {
    let img = vec![0.5f64; 3 * 32 * 32];
    for kind in [
        CorruptionKind::Brightness,
        CorruptionKind::Contrast,
        CorruptionKind::Saturate,
    ] {
        for severity in 1..=5u8 {
            let spec = CorruptionSpec { kind, severity, seed: 1 };
            let out = corrupt(&img, 3, 32, 32, &spec).unwrap();
            let clipped = out.iter().filter(|&&v| v == 0.0 || v == 1.0).count();
            assert!(
                clipped <= img.len() / 5,
                "{} s{severity}: {clipped} clipped",
                kind.name()
            );
        }
    }
}

#[test]
fn blurs_reduce_high_frequency_energy() {
    // checkerboard: the harshest high-frequency content
    let img: Vec<f64> = (0..3 * 32 * 32)
        .map(|i| {
            let y = (i / 32) % 32;
            let x = i % 32;
            ((x + y) % 2) as f64
        })
        .collect();
    let var = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64
    };
    for kind in BLUR_KINDS {
        let spec = CorruptionSpec { kind, severity: 5, seed: 2 };
        let out = corrupt(&img, 3, 32, 32, &spec).unwrap();
        assert!(var(&out) < var(&img) * 0.9, "{}", kind.name());
    }
}

#[test]
fn shot_noise_preserves_mean_brightness() {
    let img = test_image(7, 0.3, 0.7);
    let spec = CorruptionSpec { kind: CorruptionKind::ShotNoise, severity: 1, seed: 5 };
    let out = corrupt(&img, 3, 32, 32, &spec).unwrap();
    let mean_in: f64 = img.iter().sum::<f64>() / img.len() as f64;
    let mean_out: f64 = out.iter().sum::<f64>() / out.len() as f64;
    assert!((mean_in - mean_out).abs() < 0.01, "{mean_in} vs {mean_out}");
}
