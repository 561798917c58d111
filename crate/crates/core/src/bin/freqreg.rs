//! Command-line harness: training, corrupted evaluation, corruption and
//! visualization utilities, and the gradient-check suite.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use freqreg::corruptions::{corrupt, CorruptionKind, CorruptionSpec, ALL_KINDS};
use freqreg::data::{self, Dataset, IMAGE_CHANNELS, IMAGE_LEN, IMAGE_SIDE, Split};
use freqreg::harness::checkpoint;
use freqreg::harness::config::{DataSource, TrainConfig};
use freqreg::harness::evaluate::evaluate_corrupted;
use freqreg::harness::gradcheck::gradcheck_suite;
use freqreg::harness::train::{epoch_means, load_eval_dataset, load_train_dataset, train};
use freqreg::harness::viz;
use freqreg::model::Network;
use freqreg::{Error, Result};

#[derive(Parser)]
#[command(name = "freqreg", about = "Corruption-robust CNN training toolkit")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a model from a config file, then evaluate and report.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// CIFAR-10 binary batch directory (required when data = cifar).
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the config file.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a checkpoint on clean and corrupted test images.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// CIFAR-10 binary batch directory; omitted = procedural test set.
        #[arg(long)]
        data_dir: Option<PathBuf>,
        /// Comma-separated corruption kinds, or "all".
        #[arg(long, default_value = "all")]
        kinds: String,
        /// Comma-separated severity levels within 1-5.
        #[arg(long, default_value = "1,2,3,4,5")]
        severities: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply one corruption to a graymap (.pgm) or raw CIFAR record.
    Corrupt {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        kind: String,
        #[arg(long)]
        severity: u8,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
    },
    /// Emit the five spectral-filtering panels for one image.
    VizSpectral {
        /// Test-set index, or a path to a 32x32 graymap.
        #[arg(long)]
        input: String,
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[arg(long, default_value_t = 0.1)]
        sigma: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Emit per-channel activation maps for a conv layer of a checkpoint.
    VizActivations {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        layer: usize,
        /// Comma-separated test-set indices.
        #[arg(long)]
        inputs: String,
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference check of every differentiable operation.
    Gradcheck {
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Train { config, data_dir, out, seed } => {
            cmd_train(&config, data_dir.as_deref(), &out, seed)
        }
        Cmd::Eval { checkpoint, data_dir, kinds, severities, seed, out } => {
            cmd_eval(&checkpoint, data_dir.as_deref(), &kinds, &severities, seed, &out)
        }
        Cmd::Corrupt { input, kind, severity, seed, output } => {
            cmd_corrupt(&input, &kind, severity, seed, &output)
        }
        Cmd::VizSpectral { input, data_dir, sigma, out } => {
            cmd_viz_spectral(&input, data_dir.as_deref(), sigma, &out)
        }
        Cmd::VizActivations { checkpoint, layer, inputs, data_dir, out } => {
            cmd_viz_activations(&checkpoint, layer, &inputs, data_dir.as_deref(), &out)
        }
        Cmd::Gradcheck { tolerance } => cmd_gradcheck(tolerance),
    }
}

fn cmd_train(
    config: &Path,
    data_dir: Option<&Path>,
    out: &Path,
    seed: Option<u64>,
) -> Result<()> {
    let text = fs::read_to_string(config)?;
    let mut cfg = TrainConfig::parse(&text)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    fs::create_dir_all(out)?;

    let train_ds: Dataset<f64> = load_train_dataset(&cfg, data_dir)?;
    println!(
        "training method={} on {} images for {} epochs (seed {})",
        cfg.method.name(),
        train_ds.len(),
        cfg.epochs,
        cfg.seed
    );
    let mut result = train(&cfg, &train_ds)?;

    let mut log = String::from("epoch,ce,aux,supcon,total,lr\n");
    for e in epoch_means(&result.steps) {
        log.push_str(&format!(
            "{},{:.17},{:.17},{:.17},{:.17},{}\n",
            e.epoch, e.ce, e.aux, e.supcon, e.total, e.lr
        ));
        println!(
            "epoch {:>3}  ce {:.4}  aux {:.4}  supcon {:.4}  total {:.4}  lr {}",
            e.epoch, e.ce, e.aux, e.supcon, e.total, e.lr
        );
    }
    fs::write(out.join("train_log.csv"), log)?;

    let mut ck = checkpoint::snapshot(&mut result.net, &result.velocities, cfg.epochs, cfg.seed);
    checkpoint::attach_eval_context(&mut ck, &cfg);
    checkpoint::save(&ck, &out.join("checkpoint.bin"))?;

    let eval_ds: Dataset<f64> = load_eval_dataset(&cfg, data_dir)?;
    let report = evaluate_corrupted(
        &mut result.net,
        &cfg,
        &eval_ds,
        &ALL_KINDS,
        &[1, 2, 3, 4, 5],
        cfg.seed,
        cfg.batch_size,
    )?;
    report.emit(out)?;
    println!(
        "clean accuracy {:.4}, mean corruption accuracy {:.4}",
        report.clean,
        report.mean_corruption_accuracy()
    );
    println!("wrote checkpoint.bin, train_log.csv, results.csv, summary.md to {}", out.display());
    Ok(())
}

fn parse_kinds(list: &str) -> Result<Vec<CorruptionKind>> {
    if list == "all" {
        return Ok(ALL_KINDS.to_vec());
    }
    list.split(',')
        .map(|s| CorruptionKind::parse(s.trim()))
        .collect()
}

fn parse_severities(list: &str) -> Result<Vec<u8>> {
    list.split(',')
        .map(|s| {
            s.trim()
                .parse::<u8>()
                .map_err(|_| Error::Config(format!("bad severity '{s}'")))
        })
        .collect()
}

/// Rebuild a network and an evaluation config from a self-contained checkpoint.
fn load_eval_setup(
    path: &Path,
    data_dir: Option<&Path>,
) -> Result<(Network<f64>, TrainConfig)> {
    let ck = checkpoint::load(path)?;
    let (net, _, _, _) = checkpoint::restore::<f64>(&ck)?;
    let (classes, means, stds) = checkpoint::eval_context(&ck)?;
    let cfg = TrainConfig {
        classes,
        channel_means: means,
        channel_stds: stds,
        data: if data_dir.is_some() {
            DataSource::Cifar
        } else {
            DataSource::Synthetic
        },
        ..TrainConfig::default()
    };
    Ok((net, cfg))
}

fn cmd_eval(
    ck_path: &Path,
    data_dir: Option<&Path>,
    kinds: &str,
    severities: &str,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let kinds = parse_kinds(kinds)?;
    let severities = parse_severities(severities)?;
    let (mut net, cfg) = load_eval_setup(ck_path, data_dir)?;
    let ds: Dataset<f64> = load_eval_dataset(&cfg, data_dir)?;
    fs::create_dir_all(out)?;
    let report = evaluate_corrupted(&mut net, &cfg, &ds, &kinds, &severities, seed, cfg.batch_size)?;
    report.emit(out)?;
    println!(
        "clean accuracy {:.4}, mean corruption accuracy {:.4} over {} kinds",
        report.clean,
        report.mean_corruption_accuracy(),
        kinds.len()
    );
    println!("wrote results.csv and summary.md to {}", out.display());
    Ok(())
}

fn cmd_corrupt(
    input: &Path,
    kind: &str,
    severity: u8,
    seed: u64,
    output: &Path,
) -> Result<()> {
    let spec = CorruptionSpec {
        kind: CorruptionKind::parse(kind)?,
        severity,
        seed,
    };
    spec.validate()?;
    if input.extension().is_some_and(|e| e == "pgm") {
        let (pixels, h, w) = viz::read_pgm(input)?;
        let result = corrupt(&pixels, 1, h, w, &spec)?;
        viz::write_pgm(output, &result, h, w)?;
    } else {
        // raw CIFAR record: 3x32x32 channel-major bytes, optional leading label
        let bytes = fs::read(input)?;
        let offset = match bytes.len() {
            n if n == IMAGE_LEN => 0,
            n if n == IMAGE_LEN + 1 => 1,
            n => {
                return Err(Error::Format(format!(
                    "raw input must be {IMAGE_LEN} or {} bytes, got {n}",
                    IMAGE_LEN + 1
                )))
            }
        };
        let pixels: Vec<f64> = bytes[offset..].iter().map(|&b| b as f64 / 255.0).collect();
        let result = corrupt(&pixels, IMAGE_CHANNELS, IMAGE_SIDE, IMAGE_SIDE, &spec)?;
        let mut out_bytes = bytes[..offset].to_vec();
        out_bytes.extend(result.iter().map(|&v| (v * 255.0).round() as u8));
        fs::write(output, out_bytes)?;
    }
    println!("wrote {}", output.display());
    Ok(())
}

/// Fetch one 3x32x32 image either by test-set index or from a graymap file
/// (the graymap is replicated across the three channels).
fn resolve_image(input: &str, data_dir: Option<&Path>) -> Result<Vec<f64>> {
    if let Ok(idx) = input.parse::<usize>() {
        let ds: Dataset<f64> = match data_dir {
            Some(dir) => data::load_cifar10(dir, Split::Test)?,
            None => {
                let classes: Vec<u8> = (0..10).collect();
                data::synthetic_dataset(&classes, idx / 10 + 1, freqreg::harness::train::SYNTH_EVAL_SEED)
            }
        };
        if idx >= ds.len() {
            return Err(Error::Config(format!(
                "image index {idx} out of range ({} images)",
                ds.len()
            )));
        }
        return Ok(ds.image(idx).to_vec());
    }
    let (pixels, h, w) = viz::read_pgm(Path::new(input))?;
    if (h, w) != (IMAGE_SIDE, IMAGE_SIDE) {
        return Err(Error::Config(format!(
            "graymap must be {IMAGE_SIDE}x{IMAGE_SIDE}, got {h}x{w}"
        )));
    }
    let mut image = Vec::with_capacity(IMAGE_LEN);
    for _ in 0..IMAGE_CHANNELS {
        image.extend_from_slice(&pixels);
    }
    Ok(image)
}

fn cmd_viz_spectral(
    input: &str,
    data_dir: Option<&Path>,
    sigma: f64,
    out: &Path,
) -> Result<()> {
    let image = resolve_image(input, data_dir)?;
    fs::create_dir_all(out)?;
    let files = viz::visualize_spectral(&image, sigma, out)?;
    println!("wrote {} panels to {}", files.len(), out.display());
    Ok(())
}

fn cmd_viz_activations(
    ck_path: &Path,
    layer: usize,
    inputs: &str,
    data_dir: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let (mut net, cfg) = load_eval_setup(ck_path, data_dir)?;
    let ds: Dataset<f64> = load_eval_dataset(&cfg, data_dir)?;
    let mut images = Vec::new();
    for part in inputs.split(',') {
        let idx: usize = part
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad image index '{part}'")))?;
        if idx >= ds.len() {
            return Err(Error::Config(format!(
                "image index {idx} out of range ({} images)",
                ds.len()
            )));
        }
        images.push(data::normalize(
            ds.image(idx),
            &cfg.channel_means,
            &cfg.channel_stds,
        ));
    }
    fs::create_dir_all(out)?;
    let tag = net.config.method.name().to_string();
    let files = viz::visualize_activations(&mut net, layer, &images, &tag, out)?;
    println!("wrote {} activation maps to {}", files.len(), out.display());
    Ok(())
}

fn cmd_gradcheck(tolerance: f64) -> Result<()> {
    let checks = gradcheck_suite(tolerance)?;
    let mut failures = 0;
    for c in &checks {
        println!(
            "{:<24} max rel err {:>12.3e}  tolerance {:>9.1e}  {}",
            c.name,
            c.max_rel_err,
            c.tolerance,
            if c.pass { "PASS" } else { "FAIL" }
        );
        if !c.pass {
            failures += 1;
        }
    }
    if failures > 0 {
        return Err(Error::Numeric(format!(
            "{failures} of {} gradient checks failed",
            checks.len()
        )));
    }
    println!("all {} gradient checks passed", checks.len());
    Ok(())
}
