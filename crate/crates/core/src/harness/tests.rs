use std::fs;

use tempfile::tempdir;

use crate::corruptions::CorruptionKind;
use crate::data::{self, Dataset};
use crate::model::{build_model, Method, Network};

use super::checkpoint;
use super::config::{DataSource, TrainConfig};
use super::evaluate::{evaluate_clean, evaluate_corrupted, predict};
use super::gradcheck::gradcheck_suite;
use super::report::RunReport;
use super::train::{epoch_means, load_eval_dataset, load_train_dataset, train};
use super::viz;

fn smoke_config(method: Method) -> TrainConfig {
    TrainConfig {
        method,
        epochs: 2,
        batch_size: 16,
        lr: 0.02,
        data: DataSource::Synthetic,
        classes: vec![0, 1],
        per_class: 24,
        eval_per_class: 16,
        widths: vec![6],
        blocks_per_stage: 1,
        projection_dim: 8,
        replaced_layers: 1,
        ..TrainConfig::default()
    }
}

#[test]
fn config_parses_and_rejects_unknown_keys() {
    let text = "\
# comment line
method = freq
epochs = 12     # trailing comment
lambda = 0.3
classes = 0, 2, 5
widths = 8,16
lr_decay_epochs = 6,9
";
    let cfg = TrainConfig::parse(text).unwrap();
    assert_eq!(cfg.method, Method::Freq);
    assert_eq!(cfg.epochs, 12);
    assert_eq!(cfg.weights.lambda, 0.3);
    assert_eq!(cfg.classes, vec![0, 2, 5]);
    assert_eq!(cfg.widths, vec![8, 16]);
    assert_eq!(cfg.decay_epochs(), vec![6, 9]);

    assert!(TrainConfig::parse("learningrate = 0.1").is_err());
    assert!(TrainConfig::parse("epochs").is_err());
    assert!(TrainConfig::parse("batch_size = 1").is_err());
    assert!(TrainConfig::parse("classes = 0,0").is_err());
}

#[test]
fn default_lr_schedule_decays_at_half_and_three_quarters() {
    let cfg = TrainConfig {
        epochs: 20,
        lr: 0.1,
        ..TrainConfig::default()
    };
    assert_eq!(cfg.lr_at_epoch(0), 0.1);
    assert_eq!(cfg.lr_at_epoch(9), 0.1);
    assert!((cfg.lr_at_epoch(10) - 0.01).abs() < 1e-15);
    assert!((cfg.lr_at_epoch(15) - 0.001).abs() < 1e-15);
}

#[test]
fn crc32_matches_known_vectors() {
    assert_eq!(checkpoint::crc32(b"123456789"), 0xCBF4_3926);
    assert_eq!(checkpoint::crc32(b""), 0);
}

#[test]
fn checkpoint_round_trip_is_byte_identical() {
    let cfg = smoke_config(Method::Freq);
    let mut net: Network<f64> = build_model(&cfg.model_config(), 3).unwrap();
    let vel: Vec<Vec<f64>> = net
        .params_mut()
        .iter()
        .map(|p| vec![0.25; p.value.numel()])
        .collect();
    let ck = checkpoint::snapshot(&mut net, &vel, 7, 3);
    let bytes = checkpoint::encode(&ck);
    let decoded = checkpoint::decode(&bytes).unwrap();
    assert_eq!(checkpoint::encode(&decoded), bytes);

    // a flipped payload byte must be rejected
    let mut bad = bytes.clone();
    bad[20] ^= 0x40;
    assert!(checkpoint::decode(&bad).is_err());
    assert!(checkpoint::decode(&bytes[..bytes.len() - 6]).is_err());
}

#[test]
fn restored_checkpoint_reproduces_forward_bit_exactly() {
    let cfg = smoke_config(Method::Freq);
    let ds: Dataset<f64> = load_train_dataset(&cfg, None).unwrap();
    let out = train(&cfg, &ds).unwrap();
    let mut net = out.net;
    let mut velocities = out.velocities;
    let ck = checkpoint::snapshot(&mut net, &velocities, cfg.epochs, cfg.seed);
    let (mut restored, rvel, epoch, seed) = checkpoint::restore::<f64>(&ck).unwrap();
    assert_eq!(epoch, cfg.epochs);
    assert_eq!(seed, cfg.seed);
    for (a, b) in velocities.iter_mut().zip(&rvel) {
        assert_eq!(a, b);
    }
    let eval: Dataset<f64> = load_eval_dataset(&cfg, None).unwrap();
    let images = data::normalize(eval.image(0), &cfg.channel_means, &cfg.channel_stds);
    let a = predict(&mut net, &images, 1).unwrap();
    let b = predict(&mut restored, &images, 1).unwrap();
    assert_eq!(a, b);
    // byte-level: snapshotting the restored net reproduces the same file
    let ck2 = checkpoint::snapshot(&mut restored, &rvel, epoch, seed);
    assert_eq!(checkpoint::encode(&ck), checkpoint::encode(&ck2));
}

#[test]
fn zero_epochs_leaves_initialization_untouched() {
    let cfg = TrainConfig {
        epochs: 0,
        ..smoke_config(Method::Baseline)
    };
    let ds: Dataset<f64> = load_train_dataset(&cfg, None).unwrap();
    let mut out = train(&cfg, &ds).unwrap();
    let mut fresh: Network<f64> = build_model(&cfg.model_config(), cfg.seed).unwrap();
    for (a, b) in out.net.params_mut().iter().zip(fresh.params_mut().iter()) {
        assert_eq!(a.value.data, b.value.data, "{}", a.name);
    }
    assert!(out.steps.is_empty());
}

#[test]
fn training_reduces_cross_entropy() {
    let cfg = TrainConfig {
        epochs: 8,
        per_class: 30,
        lr: 0.05,
        ..smoke_config(Method::Baseline)
    };
    let ds: Dataset<f64> = load_train_dataset(&cfg, None).unwrap();
    let out = train(&cfg, &ds).unwrap();
    let epochs = epoch_means(&out.steps);
    let first = epochs.first().unwrap().ce;
    let last = epochs.last().unwrap().ce;
    assert!(
        last <= 0.5 * first,
        "CE did not halve: {first} -> {last}"
    );
}

#[test]
fn lambda_zero_matches_baseline_trajectory_bit_exactly() {
    let base_cfg = smoke_config(Method::Baseline);
    let mut freq_cfg = smoke_config(Method::Freq);
    freq_cfg.weights.lambda = 0.0;
    let ds: Dataset<f64> = load_train_dataset(&base_cfg, None).unwrap();
    let mut a = train(&base_cfg, &ds).unwrap();
    let mut b = train(&freq_cfg, &ds).unwrap();
    for (pa, pb) in a.net.params_mut().iter().zip(b.net.params_mut().iter()) {
        assert_eq!(pa.value.data, pb.value.data, "{}", pa.name);
    }
}

#[test]
fn loss_decomposition_identity_holds_each_step() {
    let mut cfg = smoke_config(Method::Both);
    cfg.weights.lambda = 0.2;
    cfg.weights.alpha = 0.7;
    let ds: Dataset<f64> = load_train_dataset(&cfg, None).unwrap();
    let out = train(&cfg, &ds).unwrap();
    assert!(!out.steps.is_empty());
    for s in &out.steps {
        let expect = s.ce + cfg.weights.lambda * s.aux + cfg.weights.alpha * s.supcon;
        assert!((s.total - expect).abs() < 1e-12, "{s:?}");
        assert!(s.aux > 0.0, "dual path must produce a nonzero aux term");
    }
}

#[test]
fn zeroed_classifier_head_predicts_class_zero_frequency() {
    let cfg = smoke_config(Method::Baseline);
    let mut net: Network<f64> = build_model(&cfg.model_config(), 1).unwrap();
    net.class_w.value.data.iter_mut().for_each(|v| *v = 0.0);
    net.class_b.value.data.iter_mut().for_each(|v| *v = 0.0);
    let eval: Dataset<f64> = load_eval_dataset(&cfg, None).unwrap();
    let acc = evaluate_clean(&mut net, &cfg, &eval, 8).unwrap();
    let freq0 = eval
        .labels
        .iter()
        .filter(|&&l| cfg.class_index(l).unwrap() == 0)
        .count() as f64
        / eval.len() as f64;
    assert_eq!(acc, freq0);
}

#[test]
fn accuracy_is_independent_of_batch_size_and_matches_argmax_oracle() {
    let cfg = smoke_config(Method::Baseline);
    let ds: Dataset<f64> = load_train_dataset(&cfg, None).unwrap();
    let mut out = train(&cfg, &ds).unwrap();
    let eval: Dataset<f64> = load_eval_dataset(&cfg, None).unwrap();
    let a = evaluate_clean(&mut out.net, &cfg, &eval, 7).unwrap();
    let b = evaluate_clean(&mut out.net, &cfg, &eval, 64).unwrap();
    assert_eq!(a, b);
    // oracle: one image at a time
    let mut correct = 0;
    for i in 0..eval.len() {
        let img = data::normalize(eval.image(i), &cfg.channel_means, &cfg.channel_stds);
        let p = predict(&mut out.net, &img, 1).unwrap()[0];
        if p == cfg.class_index(eval.labels[i]).unwrap() {
            correct += 1;
        }
    }
    assert_eq!(a, correct as f64 / eval.len() as f64);
}

#[test]
fn identity_kind_equals_clean_and_chance_level_for_random_weights() {
    let cfg = smoke_config(Method::Baseline);
    let mut net: Network<f64> = build_model(&cfg.model_config(), 5).unwrap();
    let eval: Dataset<f64> = load_eval_dataset(&cfg, None).unwrap();
    let report = evaluate_corrupted(
        &mut net,
        &cfg,
        &eval,
        &[CorruptionKind::Identity, CorruptionKind::GaussianNoise],
        &[1, 3],
        42,
        16,
    )
    .unwrap();
    let clean = report.clean;
    for cell in report.cells.iter().filter(|c| c.kind == CorruptionKind::Identity) {
        assert_eq!(cell.accuracy, clean);
    }
    // untrained 2-class balanced eval: all cells near chance
    for cell in &report.cells {
        assert!(
            (cell.accuracy - 0.5).abs() <= 0.35,
            "{cell:?} far from chance"
        );
    }
}

#[test]
fn report_csv_round_trips_and_aggregates() {
    let report = RunReport {
        clean: 0.8125,
        cells: vec![
            super::report::Cell { kind: CorruptionKind::GaussianBlur, severity: 1, accuracy: 0.75 },
            super::report::Cell { kind: CorruptionKind::GaussianBlur, severity: 2, accuracy: 0.5 },
            super::report::Cell { kind: CorruptionKind::Pixelate, severity: 1, accuracy: 0.625 },
            super::report::Cell { kind: CorruptionKind::Pixelate, severity: 2, accuracy: 0.375 },
        ],
    };
    let dir = tempdir().unwrap();
    report.emit(dir.path()).unwrap();
    let csv = fs::read_to_string(dir.path().join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4 + 1 + 1); // header + clean + cells
    let parsed = RunReport::from_csv(&csv).unwrap();
    assert_eq!(parsed, report);
    let expect_mca = ((0.75 + 0.5) / 2.0 + (0.625 + 0.375) / 2.0) / 2.0;
    assert!((report.mean_corruption_accuracy() - expect_mca).abs() < 1e-12);
    let md = fs::read_to_string(dir.path().join("summary.md")).unwrap();
    let line = md
        .lines()
        .find(|l| l.contains("Mean Corruption Acc"))
        .expect("summary has the aggregate row");
    assert!(line.contains(&format!("{expect_mca:.4}")));
}

#[test]
fn spectral_panels_obey_their_contracts() {
    let dir = tempdir().unwrap();
    // constant image: reconstruction file must equal the original file
    let flat = vec![0.6f64; 3 * 32 * 32];
    let files = viz::visualize_spectral(&flat, 0.1, dir.path()).unwrap();
    assert_eq!(files.len(), 5);
    let orig = fs::read(dir.path().join("01_original.pgm")).unwrap();
    let recon = fs::read(dir.path().join("05_reconstruction.pgm")).unwrap();
    assert_eq!(orig, recon);
    assert!(dir.path().join("scaling.txt").exists());

    // natural image: DC dominates, so the spectrum panel peaks at center
    let ds: Dataset<f64> = data::synthetic_dataset(&[3], 1, 77);
    let dir2 = tempdir().unwrap();
    viz::visualize_spectral(ds.image(0), 0.1, dir2.path()).unwrap();
    let (spec, h, w) = viz::read_pgm(&dir2.path().join("03_spectrum.pgm")).unwrap();
    assert_eq!((h, w), (32, 32));
    let peak = spec
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap()
        .0;
    assert_eq!((peak / 32, peak % 32), (16, 16));
}

#[test]
fn activation_maps_are_deterministic_with_contracted_count() {
    let cfg = smoke_config(Method::Freq);
    let mut net: Network<f64> = build_model(&cfg.model_config(), 8).unwrap();
    let ds: Dataset<f64> = load_eval_dataset(&cfg, None).unwrap();
    let imgs: Vec<Vec<f64>> = (0..2)
        .map(|i| data::normalize(ds.image(i), &cfg.channel_means, &cfg.channel_stds))
        .collect();
    let d1 = tempdir().unwrap();
    let files = viz::visualize_activations(&mut net, 0, &imgs, "freq", d1.path()).unwrap();
    assert_eq!(files.len(), 2 * 6.min(8)); // first layer has width-many channels
    let d2 = tempdir().unwrap();
    viz::visualize_activations(&mut net, 0, &imgs, "freq", d2.path()).unwrap();
    for f in &files {
        let name = f.file_name().unwrap();
        assert_eq!(
            fs::read(f).unwrap(),
            fs::read(d2.path().join(name)).unwrap()
        );
    }
    assert!(viz::visualize_activations(&mut net, 99, &imgs, "x", d1.path()).is_err());
}

#[test]
fn gradcheck_suite_passes_at_default_tolerance_and_detects_at_absurd_one() {
    let checks = gradcheck_suite(1e-4).unwrap();
    let names: Vec<&str> = checks.iter().map(|c| c.name.as_str()).collect();
    for expected in [
        "conv2d",
        "matmul",
        "add",
        "sub",
        "mul",
        "scale",
        "relu",
        "sum_axes",
        "mean_axes",
        "global_avg_pool",
        "add_row_bias",
        "reshape",
        "batch_norm",
        "lowpass_filter",
        "cross_entropy",
        "mse",
        "aux_mse_total",
        "l2_normalize_rows",
        "supcon_loss",
        "model_end_to_end",
    ] {
        assert!(names.contains(&expected), "missing {expected}");
    }
    for c in &checks {
        assert!(c.pass, "{} failed: {} > {}", c.name, c.max_rel_err, c.tolerance);
    }
    let strict = gradcheck_suite(1e-12).unwrap();
    assert!(strict.iter().any(|c| !c.pass));
}
