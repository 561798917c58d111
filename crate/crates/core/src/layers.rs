//! Network layers: plain convolution, the dual-path frequency-filtered
//! convolution, and batch normalization.
//!
//! Parameters live outside the per-step graph as [`Param`] values; `bind`
//! inserts them as gradient leaves at the start of each step. The filtered
//! conv records both activation paths through one shared weight leaf, so the
//! auxiliary MSE gradient reaches the weights from both sides.

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::spectral::{lowpass_adjoint_padded, lowpass_reconstruct_padded, GaussianMaskSpec};
use crate::tensor::{Graph, TensorId, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Named persistent parameter with its leaf id for the current graph.
#[derive(Clone, Debug)]
pub struct Param<T> {
    pub name: String,
    pub value: Value<T>,
    id: Option<TensorId>,
}

impl<T: Real> Param<T> {
    pub fn new(name: impl Into<String>, value: Value<T>) -> Self {
        Self {
            name: name.into(),
            value,
            id: None,
        }
    }

    /// Insert this parameter into the graph as a gradient leaf.
    pub fn bind(&mut self, g: &mut Graph<T>) -> TensorId {
        let id = g.leaf(self.value.clone(), true);
        self.id = Some(id);
        id
    }

    pub fn id(&self) -> TensorId {
        self.id.expect("param not bound to the current graph")
    }

    pub fn grad<'g>(&self, g: &'g Graph<T>) -> Option<&'g [T]> {
        self.id.and_then(|id| g.grad(id))
    }
}

/// Plain 2D convolution layer.
#[derive(Clone, Debug)]
pub struct ConvLayer<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    pub stride: usize,
    pub padding: usize,
}

impl<T: Real> ConvLayer<T> {
    pub fn forward(&self, g: &mut Graph<T>, x: TensorId) -> Result<TensorId> {
        g.conv2d(x, self.weight.id(), self.bias.id(), self.stride, self.padding)
    }
}

/// Dual-path convolution: the main path convolves the input; in train mode a
/// second path convolves the Gaussian low-pass reconstruction of the input
/// with the SAME weights and the (a_x, a_x') pair is cached for the auxiliary
/// loss. Only a_x feeds downstream.
#[derive(Clone, Debug)]
pub struct FrequencyFilterConv<T> {
    pub inner: ConvLayer<T>,
    pub mask_spec: GaussianMaskSpec,
    cached_pair: Option<(TensorId, TensorId)>,
}

impl<T: Real> FrequencyFilterConv<T> {
    pub fn new(inner: ConvLayer<T>, mask_spec: GaussianMaskSpec) -> Self {
        Self {
            inner,
            mask_spec,
            cached_pair: None,
        }
    }

    pub fn forward(&mut self, g: &mut Graph<T>, x: TensorId, mode: Mode) -> Result<TensorId> {
        let a_x = self.inner.forward(g, x)?;
        if mode == Mode::Train {
            if self.cached_pair.is_some() {
                return Err(Error::Contract(
                    "FrequencyFilterConv cache overwrite without drain (missed loss collection)"
                        .into(),
                ));
            }
            let x_prime = g.lowpass_nchw(x, self.mask_spec)?;
            let a_x_prime = self.inner.forward(g, x_prime)?;
            self.cached_pair = Some((a_x, a_x_prime));
        }
        Ok(a_x)
    }

    /// Remove and return the cached activation pair, if any.
    pub fn take_cached(&mut self) -> Option<(TensorId, TensorId)> {
        self.cached_pair.take()
    }

    pub fn cached(&self) -> Option<(TensorId, TensorId)> {
        self.cached_pair
    }
}

/// Collect cached (a_x, a_x') pairs in layer order, clearing every cache.
/// Layers without a cache (eval mode, already drained) contribute nothing.
pub fn drain_aux_pairs<'a, T: Real + 'a>(
    layers: impl Iterator<Item = &'a mut FrequencyFilterConv<T>>,
) -> Vec<(TensorId, TensorId)> {
    layers.filter_map(|l| l.take_cached()).collect()
}

/// Per-channel batch normalization over (N, H, W).
#[derive(Clone, Debug)]
pub struct BatchNormLayer<T> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub momentum: f64,
    pub epsilon: f64,
}

impl<T: Real> BatchNormLayer<T> {
    pub fn new(name: &str, channels: usize, momentum: f64, epsilon: f64) -> Self {
        Self {
            gamma: Param::new(format!("{name}.gamma"), Value::new(vec![channels], vec![T::one(); channels])),
            beta: Param::new(format!("{name}.beta"), Value::zeros(vec![channels])),
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            momentum,
            epsilon,
        }
    }

    pub fn forward(&mut self, g: &mut Graph<T>, x: TensorId, mode: Mode) -> Result<TensorId> {
        let c = self.running_mean.len();
        let shape = g.shape(x).to_vec();
        if shape.len() != 4 || shape[1] != c {
            return Err(Error::Dimension(format!(
                "batch_norm: input {shape:?} incompatible with {c} channels"
            )));
        }
        let (mean, var) = match mode {
            Mode::Train => {
                let count = shape[0] * shape[2] * shape[3];
                if count < 2 {
                    return Err(Error::Data(format!(
                        "batch_norm train mode needs N*H*W >= 2, got {count}"
                    )));
                }
                let (m, v) = channel_stats(g.value(x), &shape);
                // side effect at record time: running stats track batch stats
                let mom = T::of(self.momentum);
                let keep = T::one() - mom;
                for i in 0..c {
                    self.running_mean[i] = keep * self.running_mean[i] + mom * m[i];
                    self.running_var[i] = keep * self.running_var[i] + mom * v[i];
                }
                (m, v)
            }
            Mode::Eval => (self.running_mean.clone(), self.running_var.clone()),
        };
        g.batch_norm(
            x,
            self.gamma.id(),
            self.beta.id(),
            &mean,
            &var,
            self.epsilon,
            mode == Mode::Train,
        )
    }
}

/// Per-channel mean and biased variance over (N, H, W).
fn channel_stats<T: Real>(x: &[T], shape: &[usize]) -> (Vec<T>, Vec<T>) {
    let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
    let hw = h * w;
    let count = n * hw;
    let inv = T::of(1.0 / count as f64);
    let mut mean = vec![T::zero(); c];
    let mut var = vec![T::zero(); c];
    for ni in 0..n {
        for ci in 0..c {
            let plane = &x[(ni * c + ci) * hw..(ni * c + ci + 1) * hw];
            let mut acc = T::zero();
            for v in plane {
                acc += *v;
            }
            mean[ci] += acc;
        }
    }
    for m in &mut mean {
        *m *= inv;
    }
    for ni in 0..n {
        for ci in 0..c {
            let plane = &x[(ni * c + ci) * hw..(ni * c + ci + 1) * hw];
            let m = mean[ci];
            let mut acc = T::zero();
            for v in plane {
                let d = *v - m;
                acc += d * d;
            }
            var[ci] += acc;
        }
    }
    for v in &mut var {
        *v *= inv;
    }
    (mean, var)
}

impl<T: Real> Graph<T> {
    /// Gaussian low-pass reconstruction applied independently to every
    /// (sample, channel) plane of an `[N,C,H,W]` tensor. The filter is a
    /// fixed self-adjoint linear map: the backward pass applies the same
    /// filter to the gradient.
    pub fn lowpass_nchw(&mut self, x: TensorId, spec: GaussianMaskSpec) -> Result<TensorId> {
        let shape = self.shape(x).to_vec();
        if shape.len() != 4 {
            return Err(Error::Dimension(format!(
                "lowpass_nchw expects [N,C,H,W], got {shape:?}"
            )));
        }
        let (h, w) = (shape[2], shape[3]);
        if h < 2 || w < 2 {
            return Err(Error::Dimension(format!(
                "lowpass_nchw needs H, W >= 2, got {h}x{w}"
            )));
        }
        let planes = shape[0] * shape[1];
        let xv = self.value(x);
        let mut out = Vec::with_capacity(xv.len());
        for p in 0..planes {
            out.extend(lowpass_reconstruct_padded(
                &xv[p * h * w..(p + 1) * h * w],
                h,
                w,
                &spec,
            )?);
        }
        Ok(self.push_op(
            shape,
            out,
            vec![x],
            Box::new(move |g| {
                let mut gx = Vec::with_capacity(g.len());
                for p in 0..planes {
                    gx.extend(
                        lowpass_adjoint_padded(&g[p * h * w..(p + 1) * h * w], h, w, &spec)
                            .expect("filter dims validated at record time"),
                    );
                }
                vec![gx]
            }),
        ))
    }

    /// Batch-norm graph op with externally supplied per-channel statistics.
    /// In train mode gradients flow through the batch statistics; in eval
    /// mode the statistics are constants.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn batch_norm(
        &mut self,
        x: TensorId,
        gamma: TensorId,
        beta: TensorId,
        mean: &[T],
        var: &[T],
        epsilon: f64,
        stats_from_batch: bool,
    ) -> Result<TensorId> {
        let shape = self.shape(x).to_vec();
        let (n, c, h, w) = (shape[0], shape[1], shape[2], shape[3]);
        if self.shape(gamma) != [c] || self.shape(beta) != [c] {
            return Err(Error::Dimension(format!(
                "batch_norm: gamma/beta must be [{c}]"
            )));
        }
        let hw = h * w;
        let count = n * hw;
        let eps = T::of(epsilon);
        let xv = self.value_arc(x);
        let gv = self.value_arc(gamma);
        let inv_std: Vec<T> = var.iter().map(|v| T::one() / (*v + eps).sqrt()).collect();
        let mean = mean.to_vec();
        let bv = self.value(beta);
        let mut out = vec![T::zero(); xv.len()];
        for ni in 0..n {
            for ci in 0..c {
                let base = (ni * c + ci) * hw;
                let (m, s, ga, be) = (mean[ci], inv_std[ci], gv[ci], bv[ci]);
                for i in 0..hw {
                    out[base + i] = (xv[base + i] - m) * s * ga + be;
                }
            }
        }
        Ok(self.push_op(
            shape,
            out,
            vec![x, gamma, beta],
            Box::new(move |g| {
                let mut dx = vec![T::zero(); xv.len()];
                let mut dgamma = vec![T::zero(); c];
                let mut dbeta = vec![T::zero(); c];
                let inv_count = T::of(1.0 / count as f64);
                for ci in 0..c {
                    let (m, s, ga) = (mean[ci], inv_std[ci], gv[ci]);
                    // channel-wide sums of g and g*xhat
                    let mut sum_g = T::zero();
                    let mut sum_gx = T::zero();
                    for ni in 0..n {
                        let base = (ni * c + ci) * hw;
                        for i in 0..hw {
                            let xhat = (xv[base + i] - m) * s;
                            sum_g += g[base + i];
                            sum_gx += g[base + i] * xhat;
                        }
                    }
                    dgamma[ci] = sum_gx;
                    dbeta[ci] = sum_g;
                    let mean_g = sum_g * inv_count;
                    let mean_gx = sum_gx * inv_count;
                    for ni in 0..n {
                        let base = (ni * c + ci) * hw;
                        for i in 0..hw {
                            let xhat = (xv[base + i] - m) * s;
                            dx[base + i] = if stats_from_batch {
                                ga * s * (g[base + i] - mean_g - xhat * mean_gx)
                            } else {
                                ga * s * g[base + i]
                            };
                        }
                    }
                }
                vec![dx, dgamma, dbeta]
            }),
        ))
    }
}
