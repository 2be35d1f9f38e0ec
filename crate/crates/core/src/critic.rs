//! 1-D convolutional Wasserstein critic.
//!
//! Convolutions with ReLU, a flatten, then dense layers with ReLU except for
//! the final single linear neuron. Dense layers are evaluated as width-1
//! convolutions over a `[B, features, 1]` view, so the whole network is
//! built from the primitives in [`crate::autodiff`] and every gradient,
//! including the gradient penalty's second-order one, comes from the same
//! graph machinery.

use std::io::{BufRead, Write};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autodiff::{ConvGeom, Graph, Tensor, Var};
use crate::rng;

#[derive(Debug, Error)]
pub enum CriticError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid critic config: {0}")]
    InvalidConfig(String),
    #[error("non-finite input at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("tape already consumed by a backward pass")]
    StaleTape,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvLayer {
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
}

fn default_conv_layers() -> Vec<ConvLayer> {
    vec![ConvLayer { filters: 32, kernel: 5, stride: 1 }, ConvLayer { filters: 64, kernel: 5, stride: 2 }]
}

fn default_dense_layers() -> Vec<usize> {
    vec![64, 1]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriticConfig {
    /// Window length `m`; 0 means "take it from the data".
    #[serde(default)]
    pub input_length: usize,
    #[serde(default = "default_conv_layers")]
    pub conv_layers: Vec<ConvLayer>,
    #[serde(default = "default_dense_layers")]
    pub dense_layers: Vec<usize>,
    #[serde(default)]
    pub seed: u64,
    /// Zero-pad so each convolution outputs `ceil(len / stride)` positions.
    #[serde(default)]
    pub same_padding: bool,
}

impl CriticConfig {
    pub fn new(input_length: usize, seed: u64) -> Self {
        Self {
            input_length,
            conv_layers: default_conv_layers(),
            dense_layers: default_dense_layers(),
            seed,
            same_padding: false,
        }
    }

    /// Per conv layer geometry plus the flattened feature count.
    fn geometry(&self) -> Result<(Vec<ConvGeom>, usize), CriticError> {
        if self.input_length == 0 {
            return Err(CriticError::InvalidConfig("input_length must be positive".into()));
        }
        let mut len = self.input_length;
        let mut channels = 1;
        let mut geoms = Vec::new();
        for (i, layer) in self.conv_layers.iter().enumerate() {
            if layer.filters == 0 || layer.stride == 0 || layer.kernel == 0 {
                return Err(CriticError::InvalidConfig(format!("conv layer {i}: filters, kernel and stride must be >= 1")));
            }
            let geom = if self.same_padding {
                let out_len = len.div_ceil(layer.stride);
                let total = ((out_len - 1) * layer.stride + layer.kernel).saturating_sub(len);
                ConvGeom { stride: layer.stride, pad_left: total / 2, in_len: len, out_len, kernel: layer.kernel }
            } else {
                if layer.kernel > len {
                    return Err(CriticError::InvalidConfig(format!(
                        "conv layer {i}: kernel {} exceeds input length {len}",
                        layer.kernel
                    )));
                }
                let out_len = (len - layer.kernel) / layer.stride + 1;
                ConvGeom { stride: layer.stride, pad_left: 0, in_len: len, out_len, kernel: layer.kernel }
            };
            len = geom.out_len;
            channels = layer.filters;
            geoms.push(geom);
        }
        Ok((geoms, channels * len))
    }

    pub fn validate(&self) -> Result<(), CriticError> {
        self.geometry()?;
        match self.dense_layers.last() {
            Some(1) => {}
            _ => return Err(CriticError::InvalidConfig("last dense layer must have width 1".into())),
        }
        if self.dense_layers.contains(&0) {
            return Err(CriticError::InvalidConfig("dense widths must be >= 1".into()));
        }
        Ok(())
    }

    /// `[out, in, kernel]` for every layer, convolutions first.
    pub fn weight_shapes(&self) -> Result<Vec<[usize; 3]>, CriticError> {
        self.validate()?;
        let (_, mut features) = self.geometry()?;
        let mut shapes = Vec::new();
        let mut channels = 1;
        for layer in &self.conv_layers {
            shapes.push([layer.filters, channels, layer.kernel]);
            channels = layer.filters;
        }
        for &width in &self.dense_layers {
            shapes.push([width, features, 1]);
            features = width;
        }
        Ok(shapes)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    pub shape: [usize; 3],
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticParameters {
    pub layers: Vec<LayerParams>,
}

impl CriticParameters {
    pub fn zeros(cfg: &CriticConfig) -> Result<Self, CriticError> {
        let layers = cfg
            .weight_shapes()?
            .into_iter()
            .map(|shape| LayerParams { shape, weight: vec![0.0; shape.iter().product()], bias: vec![0.0; shape[0]] })
            .collect();
        Ok(Self { layers })
    }

    /// Weights and biases from `U[-k, k]`, `k = fan_in^{-1/2}`, seeded by `cfg.seed`.
    pub fn init(cfg: &CriticConfig) -> Result<Self, CriticError> {
        let mut params = Self::zeros(cfg)?;
        let mut r = rng::stream(cfg.seed, rng::label::INIT, &[1]);
        for layer in &mut params.layers {
            let k = ((layer.shape[1] * layer.shape[2]) as f64).powf(-0.5);
            for w in layer.weight.iter_mut().chain(layer.bias.iter_mut()) {
                *w = r.random_range(-k..=k);
            }
        }
        Ok(params)
    }

    pub fn len(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        for l in &self.layers {
            out.extend_from_slice(&l.weight);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.len(), "flat parameter length");
        let mut i = 0;
        for l in &mut self.layers {
            for w in l.weight.iter_mut().chain(l.bias.iter_mut()) {
                *w = flat[i];
                i += 1;
            }
        }
    }

    fn matches(&self, cfg: &CriticConfig) -> Result<(), CriticError> {
        let shapes = cfg.weight_shapes()?;
        let ok = shapes.len() == self.layers.len()
            && shapes.iter().zip(&self.layers).all(|(s, l)| {
                *s == l.shape && l.weight.len() == s.iter().product::<usize>() && l.bias.len() == s[0]
            });
        if ok {
            Ok(())
        } else {
            Err(CriticError::ShapeMismatch("parameters do not match critic config".into()))
        }
    }
}

/// One recorded forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    graph: Graph,
    input: Var,
    params: Vec<(Var, Var)>,
    output: Var,
    preacts: Vec<Var>,
    batch: usize,
    width: usize,
    consumed: bool,
}

impl Tape {
    pub fn is_consumed(&self) -> bool {
        self.consumed
    }

    /// Every pre-activation value feeding a ReLU.
    pub fn pre_activations(&self) -> Vec<f64> {
        self.preacts.iter().flat_map(|&v| self.graph.value(v).data.iter().copied()).collect()
    }
}

fn check_batch(batch: &[Vec<f64>], width: usize) -> Result<Tensor, CriticError> {
    if batch.is_empty() {
        return Err(CriticError::ShapeMismatch("empty batch".into()));
    }
    let mut data = Vec::with_capacity(batch.len() * width);
    for (row, x) in batch.iter().enumerate() {
        if x.len() != width {
            return Err(CriticError::ShapeMismatch(format!("row {row} has width {}, expected {width}", x.len())));
        }
        if let Some(col) = x.iter().position(|v| !v.is_finite()) {
            return Err(CriticError::NonFinite { row, col });
        }
        data.extend_from_slice(x);
    }
    Ok(Tensor::new(vec![batch.len(), 1, width], data))
}

fn param_leaves(g: &mut Graph, params: &CriticParameters) -> Vec<(Var, Var)> {
    params
        .layers
        .iter()
        .map(|l| {
            let w = g.leaf(Tensor::new(l.shape.to_vec(), l.weight.clone()));
            let b = g.leaf(Tensor::new(vec![l.shape[0]], l.bias.clone()));
            (w, b)
        })
        .collect()
}

/// Records the network on `x` (`[B, 1, m]`); returns `[B, 1, 1]` scores and the ReLU inputs.
fn build(g: &mut Graph, cfg: &CriticConfig, params: &[(Var, Var)], x: Var) -> Result<(Var, Vec<Var>), CriticError> {
    let (geoms, features) = cfg.geometry()?;
    let b = g.value(x).shape[0];
    let mut preacts = Vec::new();
    let mut h = x;
    let mut layer = 0;
    for geom in geoms {
        let (w, bias) = params[layer];
        let y = g.conv1d(h, w, geom);
        let filters = g.value(w).shape[0];
        let bb = g.broadcast_channel(bias, [b, filters, geom.out_len]);
        let y = g.add(y, bb);
        preacts.push(y);
        h = g.relu(y);
        layer += 1;
    }
    h = g.reshape(h, vec![b, features, 1]);
    let dense = ConvGeom { stride: 1, pad_left: 0, in_len: 1, out_len: 1, kernel: 1 };
    for (j, &width) in cfg.dense_layers.iter().enumerate() {
        let (w, bias) = params[layer];
        let y = g.conv1d(h, w, dense);
        let bb = g.broadcast_channel(bias, [b, width, 1]);
        let y = g.add(y, bb);
        if j + 1 < cfg.dense_layers.len() {
            preacts.push(y);
            h = g.relu(y);
        } else {
            h = y;
        }
        layer += 1;
    }
    Ok((h, preacts))
}

fn collect_grads(g: &Graph, params: &CriticParameters, grads: &[Var]) -> CriticParameters {
    let layers = params
        .layers
        .iter()
        .enumerate()
        .map(|(i, l)| LayerParams {
            shape: l.shape,
            weight: g.value(grads[2 * i]).data.clone(),
            bias: g.value(grads[2 * i + 1]).data.clone(),
        })
        .collect();
    CriticParameters { layers }
}

fn flat_vars(params: &[(Var, Var)]) -> Vec<Var> {
    params.iter().flat_map(|&(w, b)| [w, b]).collect()
}

/// Scores of a `B x m` batch.
pub fn forward(cfg: &CriticConfig, params: &CriticParameters, batch: &[Vec<f64>]) -> Result<(Vec<f64>, Tape), CriticError> {
    params.matches(cfg)?;
    let x = check_batch(batch, cfg.input_length)?;
    let mut graph = Graph::new();
    let pvars = param_leaves(&mut graph, params);
    let input = graph.leaf(x);
    let (output, preacts) = build(&mut graph, cfg, &pvars, input)?;
    let scores = graph.value(output).data.clone();
    let tape = Tape { graph, input, params: pvars, output, preacts, batch: batch.len(), width: cfg.input_length, consumed: false };
    Ok((scores, tape))
}

/// Gradients of `sum_b upstream[b] * score[b]` with respect to the parameters and inputs.
pub fn backward(tape: &mut Tape, upstream: &[f64]) -> Result<(CriticParameters, Vec<Vec<f64>>), CriticError> {
    if tape.consumed {
        return Err(CriticError::StaleTape);
    }
    if upstream.len() != tape.batch {
        return Err(CriticError::ShapeMismatch(format!("upstream length {}, batch {}", upstream.len(), tape.batch)));
    }
    tape.consumed = true;
    let g = &mut tape.graph;
    let seed = g.leaf(Tensor::new(vec![tape.batch, 1, 1], upstream.to_vec()));
    let mut wrt = vec![tape.input];
    wrt.extend(flat_vars(&tape.params));
    let grads = g.gradients(tape.output, seed, &wrt);
    let input_grads = g.value(grads[0]).data.chunks(tape.width).map(<[f64]>::to_vec).collect();
    let shapes = CriticParameters {
        layers: tape
            .params
            .iter()
            .map(|&(w, _)| {
                let s = &g.value(w).shape;
                LayerParams { shape: [s[0], s[1], s[2]], weight: vec![], bias: vec![] }
            })
            .collect(),
    };
    Ok((collect_grads(g, &shapes, &grads[1..]), input_grads))
}

/// Scores and per-sample input gradients `d score_b / d x_b`.
pub fn input_gradients(
    cfg: &CriticConfig,
    params: &CriticParameters,
    batch: &[Vec<f64>],
) -> Result<(Vec<f64>, Vec<Vec<f64>>), CriticError> {
    let (scores, mut tape) = forward(cfg, params, batch)?;
    let (_, gx) = backward(&mut tape, &vec![1.0; batch.len()])?;
    Ok((scores, gx))
}

fn interpolate(real: &[Vec<f64>], fake: &[Vec<f64>], eps: &[f64], width: usize) -> Result<Tensor, CriticError> {
    if real.len() != fake.len() || eps.len() != real.len() {
        return Err(CriticError::ShapeMismatch(format!(
            "real {} rows, fake {} rows, {} epsilons",
            real.len(),
            fake.len(),
            eps.len()
        )));
    }
    let r = check_batch(real, width)?;
    let f = check_batch(fake, width)?;
    let mut data = Vec::with_capacity(r.len());
    for (b, &e) in eps.iter().enumerate() {
        for j in 0..width {
            let k = b * width + j;
            data.push(e * r.data[k] + (1.0 - e) * f.data[k]);
        }
    }
    Ok(Tensor::new(r.shape.clone(), data))
}

/// Records `lambda * mean_b (|grad_x D(xh_b)| - 1)^2` on `g`.
fn penalty_node(
    g: &mut Graph,
    cfg: &CriticConfig,
    pvars: &[(Var, Var)],
    xhat: Tensor,
    lambda_gp: f64,
) -> Result<Var, CriticError> {
    let b = xhat.shape[0];
    let x = g.leaf(xhat);
    let (scores, _) = build(g, cfg, pvars, x)?;
    let ones = g.leaf(Tensor::filled(vec![b, 1, 1], 1.0));
    let gx = g.gradients(scores, ones, &[x])[0];
    let sq = g.mul(gx, gx);
    let norms = g.sum_rows(sq);
    let norms = g.sqrt(norms);
    let d = g.add_scalar(norms, -1.0);
    let d2 = g.mul(d, d);
    let total = g.sum_all(d2);
    Ok(g.scale(total, lambda_gp / b as f64))
}

/// Penalty at `xh_b = eps_b real_b + (1 - eps_b) fake_b` and its parameter gradient.
pub fn gradient_penalty(
    cfg: &CriticConfig,
    params: &CriticParameters,
    real: &[Vec<f64>],
    fake: &[Vec<f64>],
    eps: &[f64],
    lambda_gp: f64,
) -> Result<(f64, CriticParameters), CriticError> {
    params.matches(cfg)?;
    let xhat = interpolate(real, fake, eps, cfg.input_length)?;
    let mut g = Graph::new();
    let pvars = param_leaves(&mut g, params);
    let pen = penalty_node(&mut g, cfg, &pvars, xhat, lambda_gp)?;
    let one = g.leaf(Tensor::filled(vec![1], 1.0));
    let grads = g.gradients(pen, one, &flat_vars(&pvars));
    Ok((g.value(pen).data[0], collect_grads(&g, params, &grads)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticObjective {
    /// `mean D(real) - mean D(fake) - penalty`, the quantity the critic maximizes.
    pub loss: f64,
    pub mean_real: f64,
    pub mean_fake: f64,
    pub penalty: f64,
    /// Gradient of `loss`.
    pub grads: CriticParameters,
}

pub fn critic_objective(
    cfg: &CriticConfig,
    params: &CriticParameters,
    real: &[Vec<f64>],
    fake: &[Vec<f64>],
    eps: &[f64],
    lambda_gp: f64,
) -> Result<CriticObjective, CriticError> {
    params.matches(cfg)?;
    let xhat = interpolate(real, fake, eps, cfg.input_length)?;
    let b = real.len() as f64;
    let mut g = Graph::new();
    let pvars = param_leaves(&mut g, params);
    let mean_score = |g: &mut Graph, rows: &[Vec<f64>]| -> Result<Var, CriticError> {
        let x = g.leaf(check_batch(rows, cfg.input_length)?);
        let (s, _) = build(g, cfg, &pvars, x)?;
        let total = g.sum_all(s);
        Ok(g.scale(total, 1.0 / b))
    };
    let mr = mean_score(&mut g, real)?;
    let mf = mean_score(&mut g, fake)?;
    let neg_mf = g.scale(mf, -1.0);
    let gap = g.add(mr, neg_mf);
    let loss = if lambda_gp != 0.0 {
        let pen = penalty_node(&mut g, cfg, &pvars, xhat, lambda_gp)?;
        let neg_pen = g.scale(pen, -1.0);
        g.add(gap, neg_pen)
    } else {
        gap
    };
    let one = g.leaf(Tensor::filled(vec![1], 1.0));
    let grads = g.gradients(loss, one, &flat_vars(&pvars));
    let (l, r, f) = (g.value(loss).data[0], g.value(mr).data[0], g.value(mf).data[0]);
    Ok(CriticObjective { loss: l, mean_real: r, mean_fake: f, penalty: r - f - l, grads: collect_grads(&g, params, &grads) })
}

const CHECKPOINT_MAGIC: &str = "qgan-critic 1";

/// Text manifest (config and shapes) followed by one CSV row per tensor.
pub fn write_checkpoint(
    out: &mut impl Write,
    cfg: &CriticConfig,
    params: &CriticParameters,
    provenance: &[String],
) -> Result<(), CriticError> {
    params.matches(cfg)?;
    for line in provenance {
        writeln!(out, "# {line}")?;
    }
    writeln!(out, "{CHECKPOINT_MAGIC}")?;
    writeln!(out, "config {}", serde_json::to_string(cfg).map_err(|e| CriticError::Checkpoint(e.to_string()))?)?;
    for (i, l) in params.layers.iter().enumerate() {
        writeln!(out, "layer {i} weight {}x{}x{} bias {}", l.shape[0], l.shape[1], l.shape[2], l.bias.len())?;
    }
    writeln!(out, "data")?;
    for (i, l) in params.layers.iter().enumerate() {
        let join = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        writeln!(out, "w{i},{}", join(&l.weight))?;
        writeln!(out, "b{i},{}", join(&l.bias))?;
    }
    Ok(())
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<(CriticConfig, CriticParameters), CriticError> {
    let file = std::fs::File::open(path.as_ref())?;
    let bad = |msg: String| CriticError::Checkpoint(msg);
    let mut lines = std::io::BufReader::new(file)
        .lines()
        .filter(|l| l.as_ref().map(|s| !s.starts_with('#')).unwrap_or(true));
    let mut next = || -> Result<String, CriticError> { Ok(lines.next().ok_or_else(|| bad("truncated".into()))??) };
    if next()? != CHECKPOINT_MAGIC {
        return Err(bad("missing header".into()));
    }
    let line = next()?;
    let json = line.strip_prefix("config ").ok_or_else(|| bad("missing config".into()))?;
    let cfg: CriticConfig = serde_json::from_str(json).map_err(|e| bad(e.to_string()))?;
    let mut params = CriticParameters::zeros(&cfg).map_err(|e| bad(e.to_string()))?;
    for (i, l) in params.layers.iter().enumerate() {
        let expect = format!("layer {i} weight {}x{}x{} bias {}", l.shape[0], l.shape[1], l.shape[2], l.bias.len());
        let got = next()?;
        if got != expect {
            return Err(CriticError::ShapeMismatch(format!("manifest `{got}`, config implies `{expect}`")));
        }
    }
    if next()? != "data" {
        return Err(bad("missing data section".into()));
    }
    for i in 0..params.layers.len() {
        for (tag, target) in [("w", 0), ("b", 1)] {
            let line = next()?;
            let (name, rest) = line.split_once(',').unwrap_or((&line, ""));
            if name != format!("{tag}{i}") {
                return Err(bad(format!("expected row {tag}{i}, found {name}")));
            }
            let values: Vec<f64> = if rest.is_empty() {
                vec![]
            } else {
                rest.split(',').map(|v| v.parse().map_err(|_| bad(format!("bad value `{v}`")))).collect::<Result<_, _>>()?
            };
            let l = &mut params.layers[i];
            let dst = if target == 0 { &mut l.weight } else { &mut l.bias };
            if values.len() != dst.len() {
                return Err(CriticError::ShapeMismatch(format!("{tag}{i}: {} values, expected {}", values.len(), dst.len())));
            }
            *dst = values;
        }
    }
    Ok((cfg, params))
}
