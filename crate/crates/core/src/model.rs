//! Configurable mini-ResNet backbone with dual heads and optional
//! frequency-filtered substitution of the first k conv layers.
//!
//! The classification head and the projection head both read the pooled
//! penultimate feature. Every built model carries both heads so that runs
//! differing only in loss weights share a parameter set name-for-name;
//! initialization is keyed by parameter name, making shared parameters
//! bit-identical across methods for a given seed.

use crate::error::{Error, Result};
use crate::layers::{BatchNormLayer, ConvLayer, FrequencyFilterConv, Mode, Param};
use crate::rng::CounterRng;
use crate::scalar::Real;
use crate::spectral::GaussianMaskSpec;
use crate::tensor::{Graph, TensorId, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Baseline,
    Freq,
    Supcon,
    Both,
}

impl Method {
    pub fn uses_filter(self) -> bool {
        matches!(self, Method::Freq | Method::Both)
    }

    pub fn uses_contrastive(self) -> bool {
        matches!(self, Method::Supcon | Method::Both)
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Method::Baseline),
            "freq" => Ok(Method::Freq),
            "supcon" => Ok(Method::Supcon),
            "both" => Ok(Method::Both),
            other => Err(Error::Config(format!(
                "unknown method '{other}' (expected baseline|freq|supcon|both)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Baseline => "baseline",
            Method::Freq => "freq",
            Method::Supcon => "supcon",
            Method::Both => "both",
        }
    }
}

#[derive(Clone, Debug)]
pub struct ModelConfig {
    pub method: Method,
    /// Number of leading conv layers replaced by the dual-path filtered conv.
    pub replaced_layers: usize,
    pub mask_sigma: f64,
    /// Channel count per stage; the stage count is the vector length.
    pub widths: Vec<usize>,
    pub blocks_per_stage: usize,
    pub num_classes: usize,
    pub projection_dim: usize,
    /// (C, H, W)
    pub input_size: (usize, usize, usize),
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            method: Method::Baseline,
            replaced_layers: 3,
            mask_sigma: 0.1,
            widths: vec![16, 32, 64],
            blocks_per_stage: 2,
            num_classes: 10,
            projection_dim: 64,
            input_size: (3, 32, 32),
        }
    }
}

impl ModelConfig {
    /// Total replaceable conv ops (stem + two per residual block; projection
    /// shortcuts are excluded -- they are 1x1 channel adapters, not image
    /// processing layers).
    pub fn conv_layer_count(&self) -> usize {
        1 + 2 * self.widths.len() * self.blocks_per_stage
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.is_empty() || self.widths.contains(&0) {
            return Err(Error::Config("widths must be non-empty and positive".into()));
        }
        if self.blocks_per_stage == 0 {
            return Err(Error::Config("blocks_per_stage must be >= 1".into()));
        }
        if self.num_classes < 2 {
            return Err(Error::Config("num_classes must be >= 2".into()));
        }
        if self.projection_dim < 2 {
            return Err(Error::Config("projection_dim must be >= 2".into()));
        }
        if self.method.uses_filter() {
            if self.replaced_layers == 0 {
                return Err(Error::Config(
                    "filter methods need replaced_layers >= 1".into(),
                ));
            }
            if self.mask_sigma <= 0.0 {
                return Err(Error::Config("mask_sigma must be > 0".into()));
            }
        }
        if self.replaced_layers > self.conv_layer_count() {
            return Err(Error::Config(format!(
                "replaced_layers {} exceeds the {} conv layers in this config",
                self.replaced_layers,
                self.conv_layer_count()
            )));
        }
        let (c, h, w) = self.input_size;
        if c == 0 || h < 2 || w < 2 {
            return Err(Error::Config(format!(
                "input_size {c}x{h}x{w} is too small"
            )));
        }
        // every stage past the first halves the spatial dims
        let down = self.widths.len() - 1;
        if h >> down < 2 || w >> down < 2 {
            return Err(Error::Config(
                "input too small for the configured stage count".into(),
            ));
        }
        Ok(())
    }
}

/// Conv position that is either plain or dual-path filtered.
#[derive(Clone, Debug)]
pub enum ConvSlot<T> {
    Plain(ConvLayer<T>),
    Filtered(FrequencyFilterConv<T>),
}

impl<T: Real> ConvSlot<T> {
    fn forward(
        &mut self,
        g: &mut Graph<T>,
        x: TensorId,
        mode: Mode,
        taps: &mut Vec<TensorId>,
    ) -> Result<TensorId> {
        let out = match self {
            ConvSlot::Plain(c) => c.forward(g, x),
            ConvSlot::Filtered(f) => f.forward(g, x, mode),
        }?;
        taps.push(out);
        Ok(out)
    }

    pub fn conv_mut(&mut self) -> &mut ConvLayer<T> {
        match self {
            ConvSlot::Plain(c) => c,
            ConvSlot::Filtered(f) => &mut f.inner,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ResidualBlock<T> {
    pub conv1: ConvSlot<T>,
    pub bn1: BatchNormLayer<T>,
    pub conv2: ConvSlot<T>,
    pub bn2: BatchNormLayer<T>,
    /// 1x1 projection when the stride or channel count changes.
    pub shortcut: Option<(ConvLayer<T>, BatchNormLayer<T>)>,
}

impl<T: Real> ResidualBlock<T> {
    fn forward(
        &mut self,
        g: &mut Graph<T>,
        x: TensorId,
        mode: Mode,
        taps: &mut Vec<TensorId>,
    ) -> Result<TensorId> {
        let h = self.conv1.forward(g, x, mode, taps)?;
        let h = self.bn1.forward(g, h, mode)?;
        let h = g.relu(h);
        let h = self.conv2.forward(g, h, mode, taps)?;
        let h = self.bn2.forward(g, h, mode)?;
        let sc = match &mut self.shortcut {
            Some((conv, bn)) => {
                let s = conv.forward(g, x)?;
                bn.forward(g, s, mode)?
            }
            None => x,
        };
        let sum = g.add(h, sc)?;
        Ok(g.relu(sum))
    }
}

#[derive(Clone, Debug)]
pub struct Network<T> {
    pub config: ModelConfig,
    pub stem: ConvSlot<T>,
    pub stem_bn: BatchNormLayer<T>,
    pub blocks: Vec<ResidualBlock<T>>,
    pub class_w: Param<T>,
    pub class_b: Param<T>,
    pub proj_w: Param<T>,
    pub proj_b: Param<T>,
}

pub fn build_model<T: Real>(config: &ModelConfig, seed: u64) -> Result<Network<T>> {
    config.validate()?;
    let rng = CounterRng::new(seed).stream("init");
    let mut remaining = if config.method.uses_filter() {
        config.replaced_layers
    } else {
        0
    };
    let spec = GaussianMaskSpec::centered(config.mask_sigma);
    let mut slot = |name: String, out_c: usize, in_c: usize, k: usize, stride: usize| {
        let conv = ConvLayer {
            weight: he_param(&rng, &format!("{name}.weight"), vec![out_c, in_c, k, k]),
            bias: Param::new(format!("{name}.bias"), Value::zeros(vec![out_c])),
            stride,
            padding: k / 2,
        };
        if remaining > 0 {
            remaining -= 1;
            ConvSlot::Filtered(FrequencyFilterConv::new(conv, spec))
        } else {
            ConvSlot::Plain(conv)
        }
    };

    let (in_c, _, _) = config.input_size;
    let stem = slot("stem".into(), config.widths[0], in_c, 3, 1);
    let mut blocks = Vec::new();
    let mut prev = config.widths[0];
    for (si, &width) in config.widths.iter().enumerate() {
        for bi in 0..config.blocks_per_stage {
            let stride = if si > 0 && bi == 0 { 2 } else { 1 };
            let name = format!("s{si}.b{bi}");
            let conv1 = slot(format!("{name}.conv1"), width, prev, 3, stride);
            let conv2 = slot(format!("{name}.conv2"), width, width, 3, 1);
            let shortcut = if stride != 1 || prev != width {
                Some((
                    ConvLayer {
                        weight: he_param(&rng, &format!("{name}.sc.weight"), vec![width, prev, 1, 1]),
                        bias: Param::new(format!("{name}.sc.bias"), Value::zeros(vec![width])),
                        stride,
                        padding: 0,
                    },
                    BatchNormLayer::new(&format!("{name}.sc_bn"), width, 0.1, 1e-5),
                ))
            } else {
                None
            };
            blocks.push(ResidualBlock {
                conv1,
                bn1: BatchNormLayer::new(&format!("{name}.bn1"), width, 0.1, 1e-5),
                conv2,
                bn2: BatchNormLayer::new(&format!("{name}.bn2"), width, 0.1, 1e-5),
                shortcut,
            });
            prev = width;
        }
    }
    let feat = *config.widths.last().unwrap();
    Ok(Network {
        config: config.clone(),
        stem,
        stem_bn: BatchNormLayer::new("stem_bn", config.widths[0], 0.1, 1e-5),
        blocks,
        class_w: he_param(&rng, "class.weight", vec![feat, config.num_classes]),
        class_b: Param::new("class.bias", Value::zeros(vec![config.num_classes])),
        proj_w: he_param(&rng, "proj.weight", vec![feat, config.projection_dim]),
        proj_b: Param::new("proj.bias", Value::zeros(vec![config.projection_dim])),
    })
}

/// He fan-in normal init, keyed by parameter name so identical names get
/// identical values regardless of build order or method.
fn he_param<T: Real>(rng: &CounterRng, name: &str, shape: Vec<usize>) -> Param<T> {
    // fan-in: all dims but the output dim. Conv shapes are [out,in,kh,kw];
    // linear weights are stored [in,out], so take the first dim there.
    let fan_in = if shape.len() == 4 {
        shape[1] * shape[2] * shape[3]
    } else {
        shape[0]
    };
    let std = (2.0 / fan_in as f64).sqrt();
    let r = rng.stream(name);
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|i| T::of(r.normal_at(i as u64, 0) * std))
        .collect();
    Param::new(name, Value::new(shape, data))
}

impl<T: Real> Network<T> {
    /// Bind every parameter into a fresh graph. Call once per step.
    pub fn bind(&mut self, g: &mut Graph<T>) {
        for p in self.params_mut() {
            p.bind(g);
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut out: Vec<&mut Param<T>> = Vec::new();
        {
            let c = self.stem.conv_mut();
            out.push(&mut c.weight);
            out.push(&mut c.bias);
        }
        out.push(&mut self.stem_bn.gamma);
        out.push(&mut self.stem_bn.beta);
        for b in &mut self.blocks {
            {
                let c = b.conv1.conv_mut();
                out.push(&mut c.weight);
                out.push(&mut c.bias);
            }
            out.push(&mut b.bn1.gamma);
            out.push(&mut b.bn1.beta);
            {
                let c = b.conv2.conv_mut();
                out.push(&mut c.weight);
                out.push(&mut c.bias);
            }
            out.push(&mut b.bn2.gamma);
            out.push(&mut b.bn2.beta);
            if let Some((sc, bn)) = &mut b.shortcut {
                out.push(&mut sc.weight);
                out.push(&mut sc.bias);
                out.push(&mut bn.gamma);
                out.push(&mut bn.beta);
            }
        }
        out.push(&mut self.class_w);
        out.push(&mut self.class_b);
        out.push(&mut self.proj_w);
        out.push(&mut self.proj_b);
        out
    }

    pub fn bn_layers_mut(&mut self) -> Vec<&mut BatchNormLayer<T>> {
        let mut out = vec![&mut self.stem_bn];
        for b in &mut self.blocks {
            out.push(&mut b.bn1);
            out.push(&mut b.bn2);
            if let Some((_, bn)) = &mut b.shortcut {
                out.push(bn);
            }
        }
        out
    }

    pub fn freq_layers_mut(&mut self) -> Vec<&mut FrequencyFilterConv<T>> {
        let mut out = Vec::new();
        if let ConvSlot::Filtered(f) = &mut self.stem {
            out.push(f);
        }
        for b in &mut self.blocks {
            if let ConvSlot::Filtered(f) = &mut b.conv1 {
                out.push(f);
            }
            if let ConvSlot::Filtered(f) = &mut b.conv2 {
                out.push(f);
            }
        }
        out
    }

    /// Collect the cached dual-path activation pairs, clearing the caches.
    pub fn drain_aux_pairs(&mut self) -> Vec<(TensorId, TensorId)> {
        crate::layers::drain_aux_pairs(self.freq_layers_mut().into_iter())
    }

    /// Forward to (logits, unit-norm projection). Both heads read the same
    /// globally pooled feature.
    pub fn forward_dual_head(
        &mut self,
        g: &mut Graph<T>,
        x: TensorId,
        mode: Mode,
    ) -> Result<(TensorId, TensorId)> {
        let (logits, proj, _) = self.forward_with_taps(g, x, mode)?;
        Ok((logits, proj))
    }

    /// Forward that also returns every conv layer's raw output (main path),
    /// in topological order, for activation visualization.
    pub fn forward_with_taps(
        &mut self,
        g: &mut Graph<T>,
        x: TensorId,
        mode: Mode,
    ) -> Result<(TensorId, TensorId, Vec<TensorId>)> {
        let shape = g.shape(x).to_vec();
        let (c, h, w) = self.config.input_size;
        if shape.len() != 4 || shape[1] != c || shape[2] != h || shape[3] != w {
            return Err(Error::Dimension(format!(
                "input {shape:?} does not match configured size {c}x{h}x{w}"
            )));
        }
        let mut taps = Vec::new();
        let mut cur = self.stem.forward(g, x, mode, &mut taps)?;
        cur = self.stem_bn.forward(g, cur, mode)?;
        cur = g.relu(cur);
        for b in &mut self.blocks {
            cur = b.forward(g, cur, mode, &mut taps)?;
        }
        let feat = g.global_avg_pool(cur)?;
        let logits = g.matmul(feat, self.class_w.id())?;
        let logits = g.add_row_bias(logits, self.class_b.id())?;
        let proj = g.matmul(feat, self.proj_w.id())?;
        let proj = g.add_row_bias(proj, self.proj_b.id())?;
        let proj = g.l2_normalize_rows(proj)?;
        Ok((logits, proj, taps))
    }

    pub fn filtered_layer_count(&mut self) -> usize {
        self.freq_layers_mut().len()
    }

    pub fn param_count(&mut self) -> usize {
        self.params_mut().iter().map(|p| p.value.numel()).sum()
    }
}

#[cfg(test)]
mod tests;
