//! SGD training loop with per-step loss decomposition logging.

use std::path::Path;

use crate::data::{self, AugmentPolicy, Dataset, Split};
use crate::error::{Error, Result};
use crate::layers::Mode;
use crate::model::{build_model, Network};
use crate::rng::CounterRng;
use crate::scalar::Real;
use crate::tensor::{Graph, Value};

use super::config::{DataSource, TrainConfig};

/// Fixed generator keys for the procedural dataset so train/eval splits are
/// disjoint and stable across model seeds (comparable runs see the same data).
pub const SYNTH_TRAIN_SEED: u64 = 0xD47A;
pub const SYNTH_EVAL_SEED: u64 = 0xD47A + 1;

#[derive(Clone, Copy, Debug)]
pub struct StepLog {
    pub epoch: usize,
    pub ce: f64,
    pub aux: f64,
    pub supcon: f64,
    pub total: f64,
    pub lr: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutput<T> {
    pub net: Network<T>,
    pub velocities: Vec<Vec<T>>,
    pub steps: Vec<StepLog>,
}

pub fn load_train_dataset<T: Real>(
    cfg: &TrainConfig,
    data_dir: Option<&Path>,
) -> Result<Dataset<T>> {
    match cfg.data {
        DataSource::Synthetic => Ok(data::synthetic_dataset(
            &cfg.classes,
            cfg.per_class,
            SYNTH_TRAIN_SEED,
        )),
        DataSource::Cifar => {
            let dir = data_dir.ok_or_else(|| {
                Error::Config("data=cifar requires a data directory".into())
            })?;
            let full = data::load_cifar10(dir, Split::Train)?;
            data::subset(&full, &cfg.classes, cfg.per_class, cfg.seed)
        }
    }
}

pub fn load_eval_dataset<T: Real>(
    cfg: &TrainConfig,
    data_dir: Option<&Path>,
) -> Result<Dataset<T>> {
    match cfg.data {
        DataSource::Synthetic => Ok(data::synthetic_dataset(
            &cfg.classes,
            cfg.eval_per_class,
            SYNTH_EVAL_SEED,
        )),
        DataSource::Cifar => {
            let dir = data_dir.ok_or_else(|| {
                Error::Config("data=cifar requires a data directory".into())
            })?;
            let full = data::load_cifar10(dir, Split::Test)?;
            data::subset(&full, &cfg.classes, cfg.eval_per_class, cfg.seed)
        }
    }
}

/// One optimization run. Deterministic given (config, dataset): shuffling and
/// augmentation draw from counter streams keyed by (seed, epoch, sample).
pub fn train<T: Real>(cfg: &TrainConfig, ds: &Dataset<T>) -> Result<TrainOutput<T>> {
    cfg.validate()?;
    if ds.is_empty() {
        return Err(Error::Data("training dataset is empty".into()));
    }
    let mut net: Network<T> = build_model(&cfg.model_config(), cfg.seed)?;
    let mut velocities: Vec<Vec<T>> = net
        .params_mut()
        .iter()
        .map(|p| vec![T::zero(); p.value.numel()])
        .collect();
    let labels: Vec<usize> = ds
        .labels
        .iter()
        .map(|&l| cfg.class_index(l))
        .collect::<Result<_>>()?;
    // normalize once; augmentation operates on normalized pixels
    let normalized: Vec<Vec<T>> = (0..ds.len())
        .map(|i| data::normalize(ds.image(i), &cfg.channel_means, &cfg.channel_stds))
        .collect();
    let policy = AugmentPolicy {
        crop_padding: cfg.crop_padding,
        flip_probability: cfg.flip_probability,
        seed: cfg.seed,
    };
    let shuffle_rng = CounterRng::new(cfg.seed).stream("shuffle");
    let mut steps = Vec::new();

    for epoch in 0..cfg.epochs {
        let lr = cfg.lr_at_epoch(epoch);
        let mut order: Vec<usize> = (0..ds.len()).collect();
        order.sort_by_key(|&i| shuffle_rng.substream(epoch as u64).u64_at(i as u64, 0));
        for batch in order.chunks(cfg.batch_size) {
            if batch.len() < 2 {
                // batch statistics and the contrastive loss need >= 2 samples
                continue;
            }
            let step = train_step(cfg, &mut net, &mut velocities, batch, &normalized, &labels, &policy, epoch, lr)?;
            steps.push(step);
        }
    }
    Ok(TrainOutput {
        net,
        velocities,
        steps,
    })
}

#[allow(clippy::too_many_arguments)]
fn train_step<T: Real>(
    cfg: &TrainConfig,
    net: &mut Network<T>,
    velocities: &mut [Vec<T>],
    batch: &[usize],
    normalized: &[Vec<T>],
    labels: &[usize],
    policy: &AugmentPolicy,
    epoch: usize,
    lr: f64,
) -> Result<StepLog> {
    let mut g: Graph<T> = Graph::new();
    net.bind(&mut g);
    let mut xdata = Vec::with_capacity(batch.len() * normalized[0].len());
    let mut ydata = Vec::with_capacity(batch.len());
    for &i in batch {
        xdata.extend(data::augment(
            &normalized[i],
            policy,
            &policy.stream(epoch as u64, i as u64),
        ));
        ydata.push(labels[i]);
    }
    let (c, h, w) = net.config.input_size;
    let x = g.leaf(Value::new(vec![batch.len(), c, h, w], xdata), false);
    let (logits, proj) = net.forward_dual_head(&mut g, x, Mode::Train)?;
    let pairs = net.drain_aux_pairs();

    let ce = g.cross_entropy(logits, &ydata)?;
    let mut total = ce;
    let mut aux_val = 0.0;
    let mut supcon_val = 0.0;
    if cfg.method.uses_filter() {
        let aux = g.aux_mse_total(&pairs)?;
        aux_val = g.value(aux)[0].as_f64();
        total = g.total_loss_freq(total, aux, &cfg.weights)?;
    }
    if cfg.method.uses_contrastive() {
        let sc = g.supcon_loss(proj, &ydata, cfg.weights.tau)?;
        supcon_val = g.value(sc)[0].as_f64();
        total = g.total_loss_supcon(total, sc, &cfg.weights)?;
    }
    let ce_val = g.value(ce)[0].as_f64();
    let total_val = g.value(total)[0].as_f64();
    if !total_val.is_finite() {
        return Err(Error::Numeric(format!(
            "non-finite loss at epoch {epoch} (lr {lr}): ce {ce_val}, aux {aux_val}, supcon {supcon_val}"
        )));
    }
    g.backward(total)?;

    let (momentum, wd, lr_t) = (T::of(cfg.momentum), T::of(cfg.weight_decay), T::of(lr));
    for (p, v) in net.params_mut().iter_mut().zip(velocities.iter_mut()) {
        let grad = p.grad(&g);
        for j in 0..v.len() {
            let gj = grad.map_or(T::zero(), |gr| gr[j]) + wd * p.value.data[j];
            v[j] = momentum * v[j] + gj;
            p.value.data[j] -= lr_t * v[j];
        }
    }
    Ok(StepLog {
        epoch,
        ce: ce_val,
        aux: aux_val,
        supcon: supcon_val,
        total: total_val,
        lr,
    })
}

/// Mean loss decomposition per epoch, for the training log file.
pub fn epoch_means(steps: &[StepLog]) -> Vec<StepLog> {
    let mut out: Vec<StepLog> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    for s in steps {
        match out.last_mut() {
            Some(last) if last.epoch == s.epoch => {
                last.ce += s.ce;
                last.aux += s.aux;
                last.supcon += s.supcon;
                last.total += s.total;
                *counts.last_mut().unwrap() += 1;
            }
            _ => {
                out.push(*s);
                counts.push(1);
            }
        }
    }
    for (e, n) in out.iter_mut().zip(counts) {
        let inv = 1.0 / n as f64;
        e.ce *= inv;
        e.aux *= inv;
        e.supcon *= inv;
        e.total *= inv;
    }
    out
}
