//! Clean and corrupted evaluation on a frozen network.

use crate::corruptions::{corrupt, CorruptionKind, CorruptionSpec};
use crate::data::{self, Dataset, IMAGE_CHANNELS, IMAGE_SIDE};
use crate::error::{Error, Result};
use crate::layers::Mode;
use crate::model::Network;
use crate::rng::CounterRng;
use crate::scalar::Real;
use crate::tensor::{Graph, Value};

use super::config::TrainConfig;
use super::report::{Cell, RunReport};

/// Argmax class indices for a stack of already-normalized images.
pub fn predict<T: Real>(net: &mut Network<T>, images: &[T], n: usize) -> Result<Vec<usize>> {
    let (c, h, w) = net.config.input_size;
    let classes = net.config.num_classes;
    let mut g: Graph<T> = Graph::new();
    net.bind(&mut g);
    let x = g.leaf(Value::new(vec![n, c, h, w], images.to_vec()), false);
    let (logits, _) = net.forward_dual_head(&mut g, x, Mode::Eval)?;
    let vals = g.value(logits);
    Ok((0..n)
        .map(|i| {
            let row = &vals[i * classes..(i + 1) * classes];
            let mut best = 0;
            for j in 1..classes {
                if row[j] > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect())
}

fn accuracy_over<T: Real>(
    net: &mut Network<T>,
    cfg: &TrainConfig,
    ds: &Dataset<T>,
    batch_size: usize,
    prepare: impl Fn(usize, &[T]) -> Result<Vec<T>>,
) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::Data("evaluation dataset is empty".into()));
    }
    let mut correct = 0usize;
    let indices: Vec<usize> = (0..ds.len()).collect();
    for batch in indices.chunks(batch_size) {
        let mut images = Vec::new();
        for &i in batch {
            let prepared = prepare(i, ds.image(i))?;
            images.extend(data::normalize(
                &prepared,
                &cfg.channel_means,
                &cfg.channel_stds,
            ));
        }
        let preds = predict(net, &images, batch.len())?;
        for (&i, &p) in batch.iter().zip(&preds) {
            if cfg.class_index(ds.labels[i])? == p {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / ds.len() as f64)
}

/// Top-1 accuracy on the unmodified dataset.
pub fn evaluate_clean<T: Real>(
    net: &mut Network<T>,
    cfg: &TrainConfig,
    ds: &Dataset<T>,
    batch_size: usize,
) -> Result<f64> {
    accuracy_over(net, cfg, ds, batch_size, |_, img| Ok(img.to_vec()))
}

/// Accuracy matrix over (kind, severity); corruption happens in pixel space
/// before normalization. Each image gets its own corruption seed derived from
/// `seed`, the kind, and the image index.
pub fn evaluate_corrupted<T: Real>(
    net: &mut Network<T>,
    cfg: &TrainConfig,
    ds: &Dataset<T>,
    kinds: &[CorruptionKind],
    severities: &[u8],
    seed: u64,
    batch_size: usize,
) -> Result<RunReport> {
    if severities.iter().any(|&s| s == 0 || s > 5) {
        return Err(Error::Spec("severities must be within 1-5".into()));
    }
    let clean = evaluate_clean(net, cfg, ds, batch_size)?;
    let seeder = CounterRng::new(seed).stream("eval-corruption");
    let mut cells = Vec::new();
    for (ki, &kind) in kinds.iter().enumerate() {
        for &severity in severities {
            let acc = accuracy_over(net, cfg, ds, batch_size, |i, img| {
                let spec = CorruptionSpec {
                    kind,
                    severity,
                    seed: seeder.u64_at(i as u64, (ki * 8 + severity as usize) as u64),
                };
                corrupt(img, IMAGE_CHANNELS, IMAGE_SIDE, IMAGE_SIDE, &spec)
            })?;
            cells.push(Cell {
                kind,
                severity,
                accuracy: acc,
            });
        }
    }
    Ok(RunReport { clean, cells })
}
