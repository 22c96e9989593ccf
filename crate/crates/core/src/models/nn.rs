//! Feed-forward networks (dense and 1x1-convolution layers) with hand-written
//! reverse-mode gradients, softmax cross-entropy and Adam.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::codec::{Reader, Writer};
use super::{argmax, Samples};
use crate::error::{LulcError, Result};
use crate::seed;

/// Samples per gradient work unit. Fixed so the reduction order, and hence
/// the result, does not depend on the thread count.
const GRAD_CHUNK: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Dense {
        inputs: usize,
        outputs: usize,
        offset: usize,
    },
    /// Per-pixel channel mixing over a `(pixel, channel)` feature map.
    Conv1x1 {
        pixels: usize,
        in_channels: usize,
        out_channels: usize,
        offset: usize,
    },
    Relu,
    Dropout {
        rate: f64,
    },
}

impl Layer {
    fn affine(&self) -> Option<(usize, usize, usize, usize)> {
        match *self {
            Layer::Dense {
                inputs,
                outputs,
                offset,
            } => Some((1, inputs, outputs, offset)),
            Layer::Conv1x1 {
                pixels,
                in_channels,
                out_channels,
                offset,
            } => Some((pixels, in_channels, out_channels, offset)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
    params: Vec<f64>,
    input_dim: usize,
    n_classes: usize,
}

struct Trace {
    outputs: Vec<Vec<f64>>,
    dropout: Vec<Option<Vec<f64>>>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Cross-entropy of integer label `y` under `softmax(logits)`, via log-sum-exp.
pub fn cross_entropy(logits: &[f64], y: usize) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    lse - logits[y]
}

pub(crate) struct NetworkBuilder {
    layers: Vec<Layer>,
    n_params: usize,
    input_dim: usize,
    pixels: usize,
    width: usize,
}

impl NetworkBuilder {
    pub fn new(pixels: usize, channels: usize) -> Self {
        NetworkBuilder {
            layers: Vec::new(),
            n_params: 0,
            input_dim: pixels * channels,
            pixels,
            width: channels,
        }
    }

    pub fn conv(mut self, out_channels: usize) -> Self {
        self.layers.push(Layer::Conv1x1 {
            pixels: self.pixels,
            in_channels: self.width,
            out_channels,
            offset: self.n_params,
        });
        self.n_params += out_channels * (self.width + 1);
        self.width = out_channels;
        self
    }

    pub fn dense(mut self, outputs: usize) -> Self {
        let inputs = self.pixels * self.width;
        self.layers.push(Layer::Dense {
            inputs,
            outputs,
            offset: self.n_params,
        });
        self.n_params += outputs * (inputs + 1);
        self.pixels = 1;
        self.width = outputs;
        self
    }

    pub fn relu(mut self) -> Self {
        self.layers.push(Layer::Relu);
        self
    }

    pub fn dropout(mut self, rate: f64) -> Self {
        if rate > 0.0 {
            self.layers.push(Layer::Dropout { rate });
        }
        self
    }

    /// He-uniform weights, zero biases.
    pub fn build(self, seed: u64) -> Network {
        let mut params = vec![0.0; self.n_params];
        for (i, layer) in self.layers.iter().enumerate() {
            if let Some((_, fan_in, out, offset)) = layer.affine() {
                let mut rng = seed::rng(seed, &format!("nn/init/{i}"));
                let limit = (6.0 / fan_in as f64).sqrt();
                for w in &mut params[offset..offset + out * fan_in] {
                    *w = rng.random_range(-limit..limit);
                }
            }
        }
        Network {
            layers: self.layers,
            params,
            input_dim: self.input_dim,
            n_classes: self.width,
        }
    }
}

impl Network {
    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    /// `(weights, biases)` slices of an affine layer.
    pub fn layer_params(&self, layer: usize) -> Option<(&[f64], &[f64])> {
        let (_, i, o, off) = self.layers.get(layer)?.affine()?;
        Some((
            &self.params[off..off + o * i],
            &self.params[off + o * i..off + o * (i + 1)],
        ))
    }

    pub fn layer_params_mut(&mut self, layer: usize) -> Option<(&mut [f64], &mut [f64])> {
        let (_, i, o, off) = self.layers.get(layer)?.affine()?;
        let (w, b) = self.params[off..off + o * (i + 1)].split_at_mut(o * i);
        Some((w, b))
    }

    fn forward_trace(&self, x: &[f64], upto: usize, mut rng: Option<&mut ChaCha8Rng>) -> Trace {
        let mut outputs: Vec<Vec<f64>> = Vec::with_capacity(upto);
        let mut dropout = Vec::with_capacity(upto);
        for (i, layer) in self.layers[..upto].iter().enumerate() {
            let input: &[f64] = if i == 0 { x } else { &outputs[i - 1] };
            let mut mask = None;
            let out = match layer {
                Layer::Dense { .. } | Layer::Conv1x1 { .. } => {
                    let (pixels, n_in, n_out, off) = layer.affine().unwrap();
                    let w = &self.params[off..off + n_out * n_in];
                    let b = &self.params[off + n_out * n_in..off + n_out * (n_in + 1)];
                    let mut y = vec![0.0; pixels * n_out];
                    for p in 0..pixels {
                        let xp = &input[p * n_in..(p + 1) * n_in];
                        for o in 0..n_out {
                            y[p * n_out + o] = b[o] + dot(&w[o * n_in..(o + 1) * n_in], xp);
                        }
                    }
                    y
                }
                Layer::Relu => input.iter().map(|&v| if v < 0.0 { 0.0 } else { v }).collect(),
                Layer::Dropout { rate } => match rng.as_deref_mut() {
                    Some(r) => {
                        let keep = 1.0 - rate;
                        let m: Vec<f64> = (0..input.len())
                            .map(|_| if r.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                            .collect();
                        let y = input.iter().zip(&m).map(|(v, s)| v * s).collect();
                        mask = Some(m);
                        y
                    }
                    None => input.to_vec(),
                },
            };
            outputs.push(out);
            dropout.push(mask);
        }
        Trace { outputs, dropout }
    }

    /// Accumulates d(loss)/d(params) into `grad` given d(loss)/d(logits).
    fn backward(&self, x: &[f64], trace: &Trace, mut delta: Vec<f64>, grad: &mut [f64]) {
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let input: &[f64] = if i == 0 { x } else { &trace.outputs[i - 1] };
            match layer {
                Layer::Dense { .. } | Layer::Conv1x1 { .. } => {
                    let (pixels, n_in, n_out, off) = layer.affine().unwrap();
                    let w = &self.params[off..off + n_out * n_in];
                    let (gw, gb) = grad[off..off + n_out * (n_in + 1)].split_at_mut(n_out * n_in);
                    for p in 0..pixels {
                        let xp = &input[p * n_in..(p + 1) * n_in];
                        let dp = &delta[p * n_out..(p + 1) * n_out];
                        for (o, &d) in dp.iter().enumerate() {
                            if d != 0.0 {
                                axpy(d, xp, &mut gw[o * n_in..(o + 1) * n_in]);
                                gb[o] += d;
                            }
                        }
                    }
                    if i > 0 {
                        let mut dx = vec![0.0; pixels * n_in];
                        for p in 0..pixels {
                            let dxp = &mut dx[p * n_in..(p + 1) * n_in];
                            for (o, &d) in delta[p * n_out..(p + 1) * n_out].iter().enumerate() {
                                if d != 0.0 {
                                    axpy(d, &w[o * n_in..(o + 1) * n_in], dxp);
                                }
                            }
                        }
                        delta = dx;
                    }
                }
                Layer::Relu => {
                    for (d, &y) in delta.iter_mut().zip(&trace.outputs[i]) {
                        if y <= 0.0 {
                            *d = 0.0;
                        }
                    }
                }
                Layer::Dropout { .. } => {
                    if let Some(m) = &trace.dropout[i] {
                        for (d, s) in delta.iter_mut().zip(m) {
                            *d *= s;
                        }
                    }
                }
            }
        }
    }

    /// Inference-mode logits.
    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.forward_trace(x, self.layers.len(), None).outputs.pop().unwrap()
    }

    /// Activations after the first `upto` layers, dropout disabled.
    pub fn activations(&self, x: &[f64], upto: usize) -> Vec<f64> {
        if upto == 0 {
            return x.to_vec();
        }
        self.forward_trace(x, upto.min(self.layers.len()), None)
            .outputs
            .pop()
            .unwrap()
    }

    pub fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        softmax(&self.logits(x))
    }

    /// Loss and gradient summed over a slice of samples. `dropout_seeds`
    /// enables training mode with one RNG stream per sample.
    fn loss_grad(&self, data: &Samples, idx: &[usize], dropout_seeds: Option<&[u64]>) -> (f64, usize, Vec<f64>) {
        let mut grad = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        let mut correct = 0;
        for (k, &i) in idx.iter().enumerate() {
            let x = data.row(i);
            let y = data.labels[i];
            let mut rng = dropout_seeds.map(|s| rand::SeedableRng::seed_from_u64(s[k]));
            let trace = self.forward_trace(x, self.layers.len(), rng.as_mut());
            let logits = trace.outputs.last().unwrap();
            loss += cross_entropy(logits, y);
            if argmax(logits) == y {
                correct += 1;
            }
            let mut delta = softmax(logits);
            delta[y] -= 1.0;
            self.backward(x, &trace, delta, &mut grad);
        }
        (loss, correct, grad)
    }

    fn batch_loss_grad(&self, data: &Samples, idx: &[usize], dropout_seeds: Option<&[u64]>) -> (f64, usize, Vec<f64>) {
        let parts: Vec<(f64, usize, Vec<f64>)> = idx
            .par_chunks(GRAD_CHUNK)
            .enumerate()
            .map(|(c, chunk)| {
                let seeds = dropout_seeds.map(|s| &s[c * GRAD_CHUNK..c * GRAD_CHUNK + chunk.len()]);
                self.loss_grad(data, chunk, seeds)
            })
            .collect();
        let mut iter = parts.into_iter();
        let (mut loss, mut correct, mut grad) = iter.next().unwrap_or((0.0, 0, vec![0.0; self.params.len()]));
        for (l, c, g) in iter {
            loss += l;
            correct += c;
            for (a, b) in grad.iter_mut().zip(&g) {
                *a += b;
            }
        }
        (loss, correct, grad)
    }

    /// Mean cross-entropy and its gradient, dropout disabled.
    pub fn mean_loss_grad(&self, data: &Samples) -> (f64, Vec<f64>) {
        let idx: Vec<usize> = (0..data.len()).collect();
        let (loss, _, mut grad) = self.batch_loss_grad(data, &idx, None);
        let n = data.len() as f64;
        grad.iter_mut().for_each(|g| *g /= n);
        (loss / n, grad)
    }

    pub fn mean_loss(&self, data: &Samples) -> f64 {
        (0..data.len())
            .map(|i| cross_entropy(&self.logits(data.row(i)), data.labels[i]))
            .sum::<f64>()
            / data.len() as f64
    }

    pub(crate) fn encode(&self, w: &mut Writer) {
        w.usize(self.input_dim);
        w.usize(self.n_classes);
        w.usize(self.layers.len());
        for layer in &self.layers {
            match *layer {
                Layer::Dense {
                    inputs,
                    outputs,
                    offset,
                } => {
                    w.u8(0);
                    w.usizes(&[inputs, outputs, offset]);
                }
                Layer::Conv1x1 {
                    pixels,
                    in_channels,
                    out_channels,
                    offset,
                } => {
                    w.u8(1);
                    w.usizes(&[pixels, in_channels, out_channels, offset]);
                }
                Layer::Relu => w.u8(2),
                Layer::Dropout { rate } => {
                    w.u8(3);
                    w.f64(rate);
                }
            }
        }
        w.f64s(&self.params);
    }

    pub(crate) fn decode(r: &mut Reader) -> Result<Network> {
        let input_dim = r.usize()?;
        let n_classes = r.usize()?;
        let n_layers = r.usize()?;
        let mut layers = Vec::new();
        for _ in 0..n_layers {
            let layer = match r.u8()? {
                0 => match r.usizes()?[..] {
                    [inputs, outputs, offset] => Layer::Dense {
                        inputs,
                        outputs,
                        offset,
                    },
                    _ => return Err(LulcError::Format("bad dense layer".into())),
                },
                1 => match r.usizes()?[..] {
                    [pixels, in_channels, out_channels, offset] => Layer::Conv1x1 {
                        pixels,
                        in_channels,
                        out_channels,
                        offset,
                    },
                    _ => return Err(LulcError::Format("bad conv layer".into())),
                },
                2 => Layer::Relu,
                3 => Layer::Dropout { rate: r.f64()? },
                t => return Err(LulcError::Format(format!("unknown layer tag {t}"))),
            };
            layers.push(layer);
        }
        let params = r.f64s()?;
        let needed = layers
            .iter()
            .filter_map(Layer::affine)
            .map(|(_, i, o, off)| off + o * (i + 1))
            .max()
            .unwrap_or(0);
        if needed > params.len() {
            return Err(LulcError::Format("network parameters truncated".into()));
        }
        Ok(Network {
            layers,
            params,
            input_dim,
            n_classes,
        })
    }
}

/// Models trained by [`nn_fit`].
pub trait NeuralModel {
    fn network(&self) -> &Network;
    fn network_mut(&mut self) -> &mut Network;
}

/// Input chip → one hidden ReLU layer → class logits.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub hidden: usize,
    net: Network,
}

impl MlpModel {
    pub const DEFAULT_HIDDEN: usize = 32;

    pub fn new(input_dim: usize, hidden: usize, n_classes: usize, seed: u64) -> Self {
        let net = NetworkBuilder::new(1, input_dim)
            .dense(hidden)
            .relu()
            .dense(n_classes)
            .build(seed);
        MlpModel { hidden, net }
    }

    pub(crate) fn from_network(net: Network) -> Result<Self> {
        match net.layers() {
            [Layer::Dense { outputs, .. }, Layer::Relu, Layer::Dense { .. }] => Ok(MlpModel { hidden: *outputs, net }),
            _ => Err(LulcError::Format("layer stack is not an MLP".into())),
        }
    }
}

impl NeuralModel for MlpModel {
    fn network(&self) -> &Network {
        &self.net
    }

    fn network_mut(&mut self) -> &mut Network {
        &mut self.net
    }
}

/// Convolution widths and the dropout rate after each convolution block.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnSpec {
    pub widths: Vec<usize>,
    pub dropout: Vec<f64>,
}

impl Default for CnnSpec {
    fn default() -> Self {
        CnnSpec {
            widths: vec![32, 48, 64],
            dropout: vec![0.0, 0.25, 0.5],
        }
    }
}

/// 1x1 convolutions with ReLU, optional dropout, then flatten straight into
/// the class logits.
#[derive(Debug, Clone, PartialEq)]
pub struct CnnModel {
    pub spec: CnnSpec,
    pub chip_size: usize,
    pub channels: usize,
    net: Network,
}

impl CnnModel {
    pub fn new(chip_size: usize, channels: usize, spec: CnnSpec, n_classes: usize, seed: u64) -> Result<Self> {
        if spec.widths.is_empty() || spec.dropout.len() != spec.widths.len() {
            return Err(LulcError::Config("CNN needs one dropout rate per convolution".into()));
        }
        if let Some(r) = spec.dropout.iter().find(|r| !(0.0..1.0).contains(*r)) {
            return Err(LulcError::Config(format!("dropout rate {r} outside [0, 1)")));
        }
        let mut b = NetworkBuilder::new(chip_size * chip_size, channels);
        for (&w, &d) in spec.widths.iter().zip(&spec.dropout) {
            b = b.conv(w).relu().dropout(d);
        }
        let net = b.dense(n_classes).build(seed);
        Ok(CnnModel {
            spec,
            chip_size,
            channels,
            net,
        })
    }

    /// Parameter count of the default architecture:
    /// `sum(w_in*w_out + w_out)` over convolutions plus the dense head.
    pub fn parameter_count(chip_size: usize, channels: usize, spec: &CnnSpec, n_classes: usize) -> usize {
        let mut prev = channels;
        let mut n = 0;
        for &w in &spec.widths {
            n += prev * w + w;
            prev = w;
        }
        n + chip_size * chip_size * prev * n_classes + n_classes
    }

    /// The `(pixel, channel)` map entering the flatten step.
    pub fn feature_map(&self, x: &[f64]) -> Vec<f64> {
        self.net.activations(x, self.net.layers().len() - 1)
    }

    pub(crate) fn from_network(net: Network, chip_size: usize, channels: usize) -> Result<Self> {
        let mut widths = Vec::new();
        let mut dropout = Vec::new();
        for layer in net.layers() {
            match layer {
                Layer::Conv1x1 { out_channels, .. } => {
                    widths.push(*out_channels);
                    dropout.push(0.0);
                }
                Layer::Dropout { rate } => match dropout.last_mut() {
                    Some(d) => *d = *rate,
                    None => return Err(LulcError::Format("dropout before convolution".into())),
                },
                Layer::Relu => {}
                Layer::Dense { .. } => {}
            }
        }
        if widths.is_empty() {
            return Err(LulcError::Format("layer stack is not a CNN".into()));
        }
        Ok(CnnModel {
            spec: CnnSpec { widths, dropout },
            chip_size,
            channels,
            net,
        })
    }
}

impl NeuralModel for CnnModel {
    fn network(&self) -> &Network {
        &self.net
    }

    fn network_mut(&mut self) -> &mut Network {
        &mut self.net
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            max_epochs: 150,
            batch_size: 32,
            patience: 15,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 {
            return Err(LulcError::Config("max_epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(LulcError::Config("batch_size must be at least 1".into()));
        }
        if self.patience == 0 || self.patience >= self.max_epochs {
            return Err(LulcError::Config(format!(
                "patience {} must be in 1..max_epochs ({})",
                self.patience, self.max_epochs
            )));
        }
        if !(self.learning_rate > 0.0) {
            return Err(LulcError::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LearningCurve {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose parameters were restored.
    pub best_epoch: usize,
}

impl LearningCurve {
    pub fn epochs_run(&self) -> usize {
        self.epochs.len()
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn step(&mut self, params: &mut [f64], grad: &[f64], cfg: &TrainConfig) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * g;
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * g * g;
            let mhat = self.m[i] / c1;
            let vhat = self.v[i] / c2;
            params[i] -= cfg.learning_rate * mhat / (vhat.sqrt() + cfg.epsilon);
        }
    }
}

fn check_samples(net: &Network, data: &Samples, what: &str) -> Result<()> {
    if data.is_empty() {
        return Err(LulcError::EmptyInput(format!("{what} set is empty")));
    }
    if data.dim != net.input_dim() {
        return Err(LulcError::Shape(format!(
            "{what} rows have {} features, network expects {}",
            data.dim,
            net.input_dim()
        )));
    }
    if let Some(&l) = data.labels.iter().find(|&&l| l >= net.n_classes()) {
        return Err(LulcError::Config(format!(
            "{what} label {l} exceeds class count {}",
            net.n_classes()
        )));
    }
    Ok(())
}

/// Accuracy and mean loss in inference mode.
pub fn evaluate_network(net: &Network, data: &Samples) -> (f64, f64) {
    let per: Vec<(f64, bool)> = (0..data.len())
        .into_par_iter()
        .map(|i| {
            let logits = net.logits(data.row(i));
            (
                cross_entropy(&logits, data.labels[i]),
                argmax(&logits) == data.labels[i],
            )
        })
        .collect();
    let n = data.len() as f64;
    let loss = per.iter().map(|p| p.0).sum::<f64>() / n;
    let acc = per.iter().filter(|p| p.1).count() as f64 / n;
    (loss, acc)
}

/// Mini-batch Adam on cross-entropy with early stopping on validation
/// accuracy. The parameters of the best validation epoch are restored.
pub fn nn_fit<M: NeuralModel>(
    model: &mut M,
    train: &Samples,
    val: &Samples,
    cfg: &TrainConfig,
) -> Result<LearningCurve> {
    cfg.validate()?;
    check_samples(model.network(), train, "training")?;
    check_samples(model.network(), val, "validation")?;

    let n_params = model.network().param_count();
    let mut adam = Adam {
        m: vec![0.0; n_params],
        v: vec![0.0; n_params],
        t: 0,
    };
    let mut curve = LearningCurve::default();
    let mut best_acc = f64::NEG_INFINITY;
    let mut best_params = model.network().params().to_vec();
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=cfg.max_epochs {
        let mut rng = seed::rng(cfg.seed, &format!("nn/epoch/{epoch}"));
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut correct = 0;
        for batch in order.chunks(cfg.batch_size) {
            let seeds: Vec<u64> = (0..batch.len()).map(|_| rng.random()).collect();
            let net = model.network();
            let (loss, c, mut grad) = net.batch_loss_grad(train, batch, Some(&seeds));
            if !loss.is_finite() {
                return Err(LulcError::Divergence { epoch });
            }
            loss_sum += loss;
            correct += c;
            let scale = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            adam.step(model.network_mut().params_mut(), &grad, cfg);
        }
        let (val_loss, val_accuracy) = evaluate_network(model.network(), val);
        if val_loss.is_nan() {
            return Err(LulcError::Divergence { epoch });
        }
        let record = EpochRecord {
            epoch,
            train_loss: loss_sum / train.len() as f64,
            train_accuracy: correct as f64 / train.len() as f64,
            val_loss,
            val_accuracy,
        };
        tracing::debug!(epoch, train_loss = record.train_loss, val_accuracy, "epoch");
        curve.epochs.push(record);
        if val_accuracy > best_acc {
            best_acc = val_accuracy;
            best_params.copy_from_slice(model.network().params());
            curve.best_epoch = epoch;
        }
        if epoch - curve.best_epoch >= cfg.patience {
            break;
        }
    }
    model.network_mut().params_mut().copy_from_slice(&best_params);
    Ok(curve)
}

/// Largest relative difference between analytic and central-difference
/// gradients of the mean batch loss, over every parameter. Dropout is off.
/// Relative error is `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn gradient_check(net: &Network, batch: &Samples, epsilon: f64) -> f64 {
    let (_, analytic) = net.mean_loss_grad(batch);
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for i in 0..net.param_count() {
        let orig = probe.params[i];
        probe.params[i] = orig + epsilon;
        let up = probe.mean_loss(batch);
        probe.params[i] = orig - epsilon;
        let down = probe.mean_loss(batch);
        probe.params[i] = orig;
        let numeric = (up - down) / (2.0 * epsilon);
        let a = analytic[i];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(err);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize, dim: usize, seed: u64) -> Samples {
        let mut rng = seed::rng(seed, "toy");
        let mut data = Vec::with_capacity(n * dim);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let y = i % 2;
            for d in 0..dim {
                let shift = if d == 0 { y as f64 * 2.0 - 1.0 } else { 0.0 };
                data.push(shift + rng.random_range(-0.5..0.5));
            }
            labels.push(y);
        }
        Samples::new(data, dim, labels).unwrap()
    }

    #[test]
    fn softmax_simplex_and_perfect_loss() {
        let p = softmax(&[1000.0, 0.0, -1000.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(cross_entropy(&[800.0, 0.0], 0) < 1e-12);
    }

    #[test]
    fn default_cnn_parameter_count() {
        let m = CnnModel::new(9, 10, CnnSpec::default(), 7, 1).unwrap();
        assert_eq!(m.network().param_count(), 41_367);
        assert_eq!(CnnModel::parameter_count(9, 10, &CnnSpec::default(), 7), 41_367);
        let mlp = MlpModel::new(810, 32, 7, 1);
        assert_eq!(mlp.network().param_count(), 810 * 32 + 32 + 32 * 7 + 7);
    }

    #[test]
    fn tiny_mlp_gradient() {
        let net = MlpModel::new(12, 4, 3, 5).net;
        let mut rng = seed::rng(9, "batch");
        let data: Vec<f64> = (0..60).map(|_| rng.random_range(-1.0..1.0)).collect();
        let batch = Samples::new(data, 12, vec![0, 1, 2, 1, 0]).unwrap();
        assert!(gradient_check(&net, &batch, 1e-5) < 1e-4);
    }

    #[test]
    fn zero_network_bias_gradient_is_closed_form() {
        let mut net = MlpModel::new(3, 2, 3, 0).net;
        net.params_mut().iter_mut().for_each(|p| *p = 0.0);
        let batch = Samples::new(vec![0.0; 6], 3, vec![2, 2]).unwrap();
        let (_, g) = net.mean_loss_grad(&batch);
        let Layer::Dense {
            inputs,
            outputs,
            offset,
        } = net.layers()[2]
        else {
            unreachable!()
        };
        let bias_grad = &g[offset + inputs * outputs..offset + (inputs + 1) * outputs];
        // uniform softmax minus one-hot
        assert_eq!(bias_grad, &[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0 - 1.0]);
        assert!(gradient_check(&net, &batch, 1e-5) < 1e-4);
    }

    #[test]
    fn training_reduces_loss() {
        let train = toy(64, 4, 1);
        let val = toy(32, 4, 2);
        let mut m = MlpModel::new(4, 8, 2, 3);
        let cfg = TrainConfig {
            max_epochs: 20,
            patience: 19,
            learning_rate: 1e-2,
            ..Default::default()
        };
        let curve = nn_fit(&mut m, &train, &val, &cfg).unwrap();
        let first = curve.epochs[0].train_loss;
        let last = curve.epochs.last().unwrap().train_loss;
        assert!(last <= 0.5 * first, "{first} -> {last}");
    }

    #[test]
    fn config_errors() {
        let train = toy(8, 2, 1);
        let mut m = MlpModel::new(2, 2, 2, 0);
        let cfg = TrainConfig {
            max_epochs: 0,
            ..Default::default()
        };
        assert!(matches!(
            nn_fit(&mut m, &train, &train, &cfg),
            Err(LulcError::Config(_))
        ));
        let wrong = toy(8, 3, 1);
        let cfg = TrainConfig::default();
        assert!(matches!(nn_fit(&mut m, &wrong, &wrong, &cfg), Err(LulcError::Shape(_))));
    }

    #[test]
    fn divergence_reports_epoch() {
        let mut train = toy(8, 2, 1);
        train.data[0] = f64::NAN;
        let mut m = MlpModel::new(2, 2, 2, 0);
        let err = nn_fit(&mut m, &train, &toy(4, 2, 2), &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, LulcError::Divergence { epoch: 1 }));
    }
}
