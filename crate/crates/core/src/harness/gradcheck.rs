//! Finite-difference verification of every differentiable op, runnable from
//! the CLI. Each entry names the op it covers; the end-to-end composite runs
//! at 10x the op tolerance (deep chains accumulate rounding).

use crate::layers::Mode;
use crate::losses::LossWeights;
use crate::model::{build_model, Method, ModelConfig, Network};
use crate::rng::CounterRng;
use crate::spectral::GaussianMaskSpec;
use crate::tensor::{grad_check, Graph, TensorId, Value};

use crate::error::Result;

#[derive(Clone, Debug)]
pub struct OpCheck {
    pub name: String,
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub pass: bool,
}

fn rand_value(shape: Vec<usize>, tag: &str) -> Value<f64> {
    let rng = CounterRng::new(0xC0FFEE).stream(tag);
    let n = shape.iter().product();
    Value::new(
        shape,
        (0..n)
            .map(|i| rng.uniform_at(i as u64, 0) * 2.0 - 1.0)
            .collect(),
    )
}

/// Scalarize a tensor with a fixed non-uniform weighting so gradients of
/// every element matter.
fn weighted(g: &mut Graph<f64>, x: TensorId) -> Result<TensorId> {
    let shape = g.shape(x).to_vec();
    let n: usize = shape.iter().product();
    let w = g.leaf(
        Value::new(shape, (0..n).map(|i| 0.05 * i as f64 - 0.3).collect()),
        false,
    );
    let prod = g.mul(x, w)?;
    Ok(g.sum_all(prod))
}

pub fn gradcheck_suite(tolerance: f64) -> Result<Vec<OpCheck>> {
    let eps = 1e-5;
    let mut checks = Vec::new();
    let mut run = |name: &str,
                   tol: f64,
                   params: &[(&str, Value<f64>)],
                   f: &dyn Fn(&mut Graph<f64>, &[TensorId]) -> Result<TensorId>|
     -> Result<()> {
        let report = grad_check(f, params, eps, tol)?;
        checks.push(OpCheck {
            name: name.to_string(),
            max_rel_err: report.max_rel_err,
            tolerance: tol,
            pass: report.pass,
        });
        Ok(())
    };

    run(
        "conv2d",
        tolerance,
        &[
            ("x", rand_value(vec![2, 2, 6, 6], "cx")),
            ("w", rand_value(vec![3, 2, 3, 3], "cw")),
            ("b", rand_value(vec![3], "cb")),
        ],
        &|g, ids| {
            let y = g.conv2d(ids[0], ids[1], ids[2], 1, 1)?;
            weighted(g, y)
        },
    )?;
    run(
        "matmul",
        tolerance,
        &[
            ("a", rand_value(vec![3, 4], "ma")),
            ("b", rand_value(vec![4, 2], "mb")),
        ],
        &|g, ids| {
            let y = g.matmul(ids[0], ids[1])?;
            weighted(g, y)
        },
    )?;
    run(
        "add",
        tolerance,
        &[
            ("a", rand_value(vec![2, 3], "aa")),
            ("b", rand_value(vec![2, 3], "ab")),
        ],
        &|g, ids| {
            let y = g.add(ids[0], ids[1])?;
            weighted(g, y)
        },
    )?;
    run(
        "sub",
        tolerance,
        &[
            ("a", rand_value(vec![2, 3], "sa")),
            ("b", rand_value(vec![2, 3], "sb")),
        ],
        &|g, ids| {
            let y = g.sub(ids[0], ids[1])?;
            weighted(g, y)
        },
    )?;
    run(
        "mul",
        tolerance,
        &[
            ("a", rand_value(vec![2, 3], "ua")),
            ("b", rand_value(vec![2, 3], "ub")),
        ],
        &|g, ids| {
            let y = g.mul(ids[0], ids[1])?;
            weighted(g, y)
        },
    )?;
    run(
        "scale",
        tolerance,
        &[("x", rand_value(vec![2, 3], "sc"))],
        &|g, ids| {
            let y = g.scale(ids[0], 0.37);
            weighted(g, y)
        },
    )?;
    {
        // keep inputs away from the relu kink
        let mut v = rand_value(vec![2, 4], "rl");
        for x in &mut v.data {
            if x.abs() < 0.2 {
                *x += 0.4;
            }
        }
        run("relu", tolerance, &[("x", v)], &|g, ids| {
            let y = g.relu(ids[0]);
            weighted(g, y)
        })?;
    }
    run(
        "sum_axes",
        tolerance,
        &[("x", rand_value(vec![2, 3, 4], "sx"))],
        &|g, ids| {
            let y = g.sum(ids[0], Some(&[1]))?;
            weighted(g, y)
        },
    )?;
    run(
        "mean_axes",
        tolerance,
        &[("x", rand_value(vec![2, 3, 4], "mx"))],
        &|g, ids| {
            let y = g.mean(ids[0], Some(&[0, 2]))?;
            weighted(g, y)
        },
    )?;
    run(
        "global_avg_pool",
        tolerance,
        &[("x", rand_value(vec![2, 3, 4, 4], "gp"))],
        &|g, ids| {
            let y = g.global_avg_pool(ids[0])?;
            weighted(g, y)
        },
    )?;
    run(
        "add_row_bias",
        tolerance,
        &[
            ("x", rand_value(vec![3, 4], "rb")),
            ("b", rand_value(vec![4], "rbb")),
        ],
        &|g, ids| {
            let y = g.add_row_bias(ids[0], ids[1])?;
            weighted(g, y)
        },
    )?;
    run(
        "reshape",
        tolerance,
        &[("x", rand_value(vec![2, 6], "rs"))],
        &|g, ids| {
            let y = g.reshape(ids[0], vec![3, 4])?;
            weighted(g, y)
        },
    )?;
    run(
        "batch_norm",
        tolerance,
        &[
            ("x", rand_value(vec![2, 2, 3, 3], "bx")),
            ("gamma", rand_value(vec![2], "bg")),
            ("beta", rand_value(vec![2], "bb")),
        ],
        &|g, ids| {
            let shape = g.shape(ids[0]).to_vec();
            let (mean, var) = channel_stats(g.value(ids[0]), &shape);
            let y = g.batch_norm(ids[0], ids[1], ids[2], &mean, &var, 1e-5, true)?;
            weighted(g, y)
        },
    )?;
    run(
        "lowpass_filter",
        tolerance,
        &[("x", rand_value(vec![1, 2, 8, 8], "lp"))],
        &|g, ids| {
            let y = g.lowpass_nchw(ids[0], GaussianMaskSpec::centered(0.1))?;
            weighted(g, y)
        },
    )?;
    run(
        "cross_entropy",
        tolerance,
        &[("logits", rand_value(vec![4, 3], "ce"))],
        &|g, ids| g.cross_entropy(ids[0], &[0, 2, 1, 2]),
    )?;
    run(
        "mse",
        tolerance,
        &[
            ("a", rand_value(vec![2, 5], "ea")),
            ("b", rand_value(vec![2, 5], "eb")),
        ],
        &|g, ids| g.mse(ids[0], ids[1]),
    )?;
    run(
        "aux_mse_total",
        tolerance,
        &[
            ("a1", rand_value(vec![2, 4], "x1")),
            ("b1", rand_value(vec![2, 4], "y1")),
            ("a2", rand_value(vec![3, 2], "x2")),
            ("b2", rand_value(vec![3, 2], "y2")),
        ],
        &|g, ids| g.aux_mse_total(&[(ids[0], ids[1]), (ids[2], ids[3])]),
    )?;
    run(
        "l2_normalize_rows",
        tolerance,
        &[("x", rand_value(vec![3, 4], "l2"))],
        &|g, ids| {
            let y = g.l2_normalize_rows(ids[0])?;
            weighted(g, y)
        },
    )?;
    run(
        "supcon_loss",
        tolerance,
        &[("emb", rand_value(vec![6, 4], "scn"))],
        &|g, ids| {
            let y = g.l2_normalize_rows(ids[0])?;
            g.supcon_loss(y, &[0, 1, 0, 2, 1, 2], 0.1)
        },
    )?;
    {
        let (name, max_rel_err) = end_to_end_check()?;
        let tol = tolerance * 10.0;
        checks.push(OpCheck {
            name,
            max_rel_err,
            tolerance: tol,
            pass: max_rel_err < tol,
        });
    }
    Ok(checks)
}

fn channel_stats(x: &[f64], shape: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
    let hw = h * w;
    let count = (n * hw) as f64;
    let mut mean = vec![0.0; c];
    let mut var = vec![0.0; c];
    for ni in 0..n {
        for ci in 0..c {
            for v in &x[(ni * c + ci) * hw..(ni * c + ci + 1) * hw] {
                mean[ci] += v;
            }
        }
    }
    for m in &mut mean {
        *m /= count;
    }
    for ni in 0..n {
        for ci in 0..c {
            for v in &x[(ni * c + ci) * hw..(ni * c + ci + 1) * hw] {
                var[ci] += (v - mean[ci]) * (v - mean[ci]);
            }
        }
    }
    for v in &mut var {
        *v /= count;
    }
    (mean, var)
}

/// Full composite: tiny dual-path model, frequency + contrastive objective,
/// every parameter checked against central differences.
fn end_to_end_check() -> Result<(String, f64)> {
    let cfg = ModelConfig {
        method: Method::Both,
        replaced_layers: 1,
        mask_sigma: 0.1,
        widths: vec![4],
        blocks_per_stage: 1,
        num_classes: 2,
        projection_dim: 4,
        input_size: (3, 8, 8),
    };
    let mut net: Network<f64> = build_model(&cfg, 99)?;
    let xv = rand_value(vec![2, 3, 8, 8], "e2e");
    let labels = [0usize, 1];
    let weights = LossWeights::default();

    let eval = |net: &mut Network<f64>, backward: bool| -> Result<(f64, Vec<Vec<f64>>)> {
        let mut g: Graph<f64> = Graph::new();
        net.bind(&mut g);
        let x = g.leaf(xv.clone(), false);
        let (logits, proj) = net.forward_dual_head(&mut g, x, Mode::Train)?;
        let pairs = net.drain_aux_pairs();
        let ce = g.cross_entropy(logits, &labels)?;
        let aux = g.aux_mse_total(&pairs)?;
        let sc = g.supcon_loss(proj, &labels, weights.tau)?;
        let t = g.total_loss_freq(ce, aux, &weights)?;
        let total = g.total_loss_supcon(t, sc, &weights)?;
        let value = g.value(total)[0];
        let mut grads = Vec::new();
        if backward {
            g.backward(total)?;
            for p in net.params_mut() {
                grads.push(
                    p.grad(&g)
                        .map(|s| s.to_vec())
                        .unwrap_or_else(|| vec![0.0; p.value.numel()]),
                );
            }
        }
        Ok((value, grads))
    };

    let (_, analytic) = eval(&mut net, true)?;
    let eps = 1e-5;
    let mut max_rel = 0.0f64;
    let n_params = net.params_mut().len();
    for pi in 0..n_params {
        for i in 0..net.params_mut()[pi].value.numel() {
            let orig = net.params_mut()[pi].value.data[i];
            net.params_mut()[pi].value.data[i] = orig + eps;
            let (up, _) = eval(&mut net, false)?;
            net.params_mut()[pi].value.data[i] = orig - eps;
            let (down, _) = eval(&mut net, false)?;
            net.params_mut()[pi].value.data[i] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let a = analytic[pi][i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-2);
            max_rel = max_rel.max(rel);
        }
    }
    Ok(("model_end_to_end".to_string(), max_rel))
}
