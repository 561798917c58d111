use super::*;
use crate::losses::LossWeights;
use crate::rng::CounterRng;

fn tiny_config(method: Method) -> ModelConfig {
    ModelConfig {
        method,
        replaced_layers: 1,
        mask_sigma: 0.1,
        widths: vec![8, 16],
        blocks_per_stage: 1,
        num_classes: 4,
        projection_dim: 8,
        input_size: (3, 8, 8),
    }
}

fn rand_batch(n: usize, c: usize, h: usize, w: usize, seed: u64) -> Value<f64> {
    let rng = CounterRng::new(seed).stream("batch");
    let len = n * c * h * w;
    Value::new(
        vec![n, c, h, w],
        (0..len).map(|i| rng.uniform_at(i as u64, 0) - 0.5).collect(),
    )
}

#[test]
fn baseline_has_no_filtered_layers() {
    let mut net: Network<f64> = build_model(&ModelConfig::default(), 1).unwrap();
    assert_eq!(net.filtered_layer_count(), 0);
}

#[test]
fn freq_default_replaces_first_three() {
    let cfg = ModelConfig {
        method: Method::Freq,
        ..ModelConfig::default()
    };
    let mut net: Network<f64> = build_model(&cfg, 1).unwrap();
    assert_eq!(net.filtered_layer_count(), 3);
    // replacement hits the earliest conv ops: stem + first block's two convs
    assert!(matches!(net.stem, ConvSlot::Filtered(_)));
    assert!(matches!(net.blocks[0].conv1, ConvSlot::Filtered(_)));
    assert!(matches!(net.blocks[0].conv2, ConvSlot::Filtered(_)));
    assert!(matches!(net.blocks[1].conv1, ConvSlot::Plain(_)));
}

#[test]
fn same_seed_is_bit_identical_and_different_seed_is_not() {
    let cfg = tiny_config(Method::Baseline);
    let mut a: Network<f64> = build_model(&cfg, 7).unwrap();
    let mut b: Network<f64> = build_model(&cfg, 7).unwrap();
    for (pa, pb) in a.params_mut().iter().zip(b.params_mut().iter()) {
        assert_eq!(pa.name, pb.name);
        assert_eq!(pa.value.data, pb.value.data);
    }
    let mut c: Network<f64> = build_model(&cfg, 8).unwrap();
    let differs = a
        .params_mut()
        .iter()
        .zip(c.params_mut().iter())
        .any(|(pa, pc)| pa.value.data != pc.value.data);
    assert!(differs);
}

#[test]
fn head_widths_match_defaults() {
    let mut net: Network<f64> = build_model(&ModelConfig::default(), 3).unwrap();
    let mut g: crate::Graph = Graph::new();
    net.bind(&mut g);
    let x = g.leaf(rand_batch(2, 3, 32, 32, 30), false);
    let (logits, proj) = net.forward_dual_head(&mut g, x, Mode::Eval).unwrap();
    assert_eq!(g.shape(logits), [2, 10]);
    assert_eq!(g.shape(proj), [2, 64]);
    for row in 0..2 {
        let norm: f64 = g.value(proj)[row * 64..(row + 1) * 64]
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt();
        assert!((norm - 1.0).abs() < 1e-9);
    }
}

#[test]
fn parameter_count_matches_closed_form() {
    let conv = |out: usize, inp: usize, k: usize| out * inp * k * k + out;
    let bn = |c: usize| 2 * c;
    for cfg in [ModelConfig::default(), tiny_config(Method::Freq)] {
        let mut expect = conv(cfg.widths[0], cfg.input_size.0, 3) + bn(cfg.widths[0]);
        let mut prev = cfg.widths[0];
        for (si, &w) in cfg.widths.iter().enumerate() {
            for bi in 0..cfg.blocks_per_stage {
                let stride = if si > 0 && bi == 0 { 2 } else { 1 };
                expect += conv(w, prev, 3) + bn(w) + conv(w, w, 3) + bn(w);
                if stride != 1 || prev != w {
                    expect += conv(w, prev, 1) + bn(w);
                }
                prev = w;
            }
        }
        let feat = *cfg.widths.last().unwrap();
        expect += feat * cfg.num_classes + cfg.num_classes;
        expect += feat * cfg.projection_dim + cfg.projection_dim;
        let mut net: Network<f64> = build_model(&cfg, 5).unwrap();
        assert_eq!(net.param_count(), expect);
    }
}

#[test]
fn zeros_input_forward_is_finite_and_deterministic() {
    let run = || -> Vec<f64> {
        let mut net: Network<f64> = build_model(&tiny_config(Method::Freq), 11).unwrap();
        let mut g: crate::Graph = Graph::new();
        net.bind(&mut g);
        let x = g.leaf(Value::zeros(vec![2, 3, 8, 8]), false);
        let (logits, _) = net.forward_dual_head(&mut g, x, Mode::Train).unwrap();
        net.drain_aux_pairs();
        g.value(logits).to_vec()
    };
    let a = run();
    assert!(a.iter().all(|v| v.is_finite()));
    assert_eq!(a, run());
}

#[test]
fn baseline_and_freq_share_main_path_exactly() {
    let base_cfg = tiny_config(Method::Baseline);
    let freq_cfg = tiny_config(Method::Freq);
    let mut base: Network<f64> = build_model(&base_cfg, 21).unwrap();
    let mut freq: Network<f64> = build_model(&freq_cfg, 21).unwrap();
    let xv = rand_batch(2, 3, 8, 8, 22);
    let run = |net: &mut Network<f64>| -> Vec<f64> {
        let mut g: crate::Graph = Graph::new();
        net.bind(&mut g);
        let x = g.leaf(xv.clone(), false);
        let (logits, _) = net.forward_dual_head(&mut g, x, Mode::Train).unwrap();
        net.drain_aux_pairs();
        g.value(logits).to_vec()
    };
    assert_eq!(run(&mut base), run(&mut freq));
}

#[test]
fn constant_planes_give_exactly_zero_aux_loss() {
    let mut net: Network<f64> = build_model(&tiny_config(Method::Freq), 31).unwrap();
    let mut g: crate::Graph = Graph::new();
    net.bind(&mut g);
    let mut data = Vec::new();
    for plane in 0..2 * 3 {
        data.extend(std::iter::repeat(0.1 * plane as f64 - 0.2).take(64));
    }
    let x = g.leaf(Value::new(vec![2, 3, 8, 8], data), false);
    net.forward_dual_head(&mut g, x, Mode::Train).unwrap();
    let pairs = net.drain_aux_pairs();
    assert_eq!(pairs.len(), 1);
    let aux = g.aux_mse_total(&pairs).unwrap();
    assert_eq!(g.value(aux)[0], 0.0);
}

#[test]
fn rejects_inconsistent_configs() {
    let mut cfg = tiny_config(Method::Freq);
    cfg.replaced_layers = 0;
    assert!(matches!(
        build_model::<f64>(&cfg, 1),
        Err(Error::Config(_))
    ));
    let mut cfg = tiny_config(Method::Baseline);
    cfg.replaced_layers = 99;
    assert!(build_model::<f64>(&cfg, 1).is_err());
    let mut cfg = tiny_config(Method::Baseline);
    cfg.projection_dim = 1;
    assert!(build_model::<f64>(&cfg, 1).is_err());
    let mut cfg = tiny_config(Method::Baseline);
    cfg.widths = vec![8, 16, 32, 64];
    // 8x8 input cannot survive three downsampling stages
    assert!(build_model::<f64>(&cfg, 1).is_err());
}

/// One train-mode forward + frequency total loss; returns the loss value and,
/// when `backward` is set, the analytic gradient of every parameter.
fn freq_loss(
    net: &mut Network<f64>,
    xv: &Value<f64>,
    labels: &[usize],
    weights: &LossWeights,
    backward: bool,
) -> (f64, Vec<Vec<f64>>) {
    let mut g: crate::Graph = Graph::new();
    net.bind(&mut g);
    let x = g.leaf(xv.clone(), false);
    let (logits, _) = net.forward_dual_head(&mut g, x, Mode::Train).unwrap();
    let pairs = net.drain_aux_pairs();
    let ce = g.cross_entropy(logits, labels).unwrap();
    let aux = g.aux_mse_total(&pairs).unwrap();
    let loss = g.total_loss_freq(ce, aux, weights).unwrap();
    let value = g.value(loss)[0];
    let mut grads = Vec::new();
    if backward {
        g.backward(loss).unwrap();
        for p in net.params_mut() {
            // params off the loss path (projection head here) get zero grads
            grads.push(
                p.grad(&g)
                    .map(|s| s.to_vec())
                    .unwrap_or_else(|| vec![0.0; p.value.numel()]),
            );
        }
    }
    (value, grads)
}

#[test]
fn end_to_end_freq_gradient_matches_finite_differences() {
    let mut net: Network<f64> = build_model(&tiny_config(Method::Freq), 41).unwrap();
    let xv = rand_batch(4, 3, 8, 8, 42);
    let labels = [0usize, 1, 2, 3];
    let weights = LossWeights::default();
    let (_, analytic) = freq_loss(&mut net, &xv, &labels, &weights, true);

    let eps = 1e-5;
    let mut max_rel = 0.0f64;
    let n_params = net.params_mut().len();
    for pi in 0..n_params {
        for i in 0..net.params_mut()[pi].value.numel() {
            let orig = net.params_mut()[pi].value.data[i];
            net.params_mut()[pi].value.data[i] = orig + eps;
            let (up, _) = freq_loss(&mut net, &xv, &labels, &weights, false);
            net.params_mut()[pi].value.data[i] = orig - eps;
            let (down, _) = freq_loss(&mut net, &xv, &labels, &weights, false);
            net.params_mut()[pi].value.data[i] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let a = analytic[pi][i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-2);
            if rel > max_rel {
                max_rel = rel;
            }
        }
    }
    assert!(max_rel < 1e-3, "max rel err {max_rel}");
}
