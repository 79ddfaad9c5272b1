use rand::Rng;
use serde::{Deserialize, Serialize};

use super::conv::{im2col, ConvLayer, Geometry};
use super::Real;
use crate::error::{Error, Result};
use crate::field::{check_grid, GridField2D};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
}

impl Activation {
    fn apply<T: Real>(self, v: &mut [T]) {
        match self {
            Activation::Tanh => v.iter_mut().for_each(|x| *x = tanh_exp(*x)),
        }
    }

    /// Derivative expressed through the activation output.
    fn derivative_from_output<T: Real>(self, y: T) -> T {
        match self {
            Activation::Tanh => T::one() - y * y,
        }
    }
}

/// `tanh` through a single `exp`, whose cost does not depend on the argument,
/// unlike the libm routine. `|x|` is clamped at 20, where `tanh` is 1 in f64.
fn tanh_exp<T: Real>(x: T) -> T {
    let limit = T::from_f64(20.0).unwrap();
    let e = (x.max(-limit).min(limit) * T::from_f64(2.0).unwrap()).exp();
    (e - T::one()) / (e + T::one())
}

/// Architecture of the residual convolutional predictor.
///
/// `lift` maps the input channels to `hidden_channels`, `n_blocks` residual
/// blocks compute `h ← h + act(conv(h))`, and `project` maps back to one
/// channel. With `residual` the first input channel is added to the output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictorConfig {
    pub in_channels: usize,
    pub hidden_channels: usize,
    pub n_blocks: usize,
    pub kernel: usize,
    pub activation: Activation,
    pub residual: bool,
}

impl PredictorConfig {
    /// Default architecture for `1 + 4·n_freq` input channels.
    pub fn for_n_freq(n_freq: usize) -> Self {
        Self {
            in_channels: 1 + 4 * n_freq,
            hidden_channels: 32,
            n_blocks: 4,
            kernel: 3,
            activation: Activation::Tanh,
            residual: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel % 2 == 0 {
            return Err(Error::Precondition(format!("kernel {} must be odd", self.kernel)));
        }
        if self.in_channels == 0 || self.hidden_channels == 0 {
            return Err(Error::Precondition("channel counts must be positive".into()));
        }
        Ok(())
    }

    /// Parameter names and shapes in storage order.
    pub fn parameter_layout(&self) -> Vec<(String, Vec<usize>)> {
        let k = self.kernel;
        let mut out = Vec::new();
        let mut push = |prefix: String, cin: usize, cout: usize| {
            out.push((format!("{prefix}.weight"), vec![cout, cin, k, k]));
            out.push((format!("{prefix}.bias"), vec![cout]));
        };
        push("lift".into(), self.in_channels, self.hidden_channels);
        for b in 0..self.n_blocks {
            push(format!("blocks.{b}"), self.hidden_channels, self.hidden_channels);
        }
        push("project".into(), self.hidden_channels, 1);
        out
    }
}

/// Multi-channel input stack, laid out `[channel][batch][row][col]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedBatch<T> {
    pub channels: usize,
    pub geometry: Geometry,
    pub data: Vec<T>,
}

impl<T: Real> EncodedBatch<T> {
    /// Stacks fields with shared extra channels (each `rows × cols`) that are
    /// repeated for every batch element.
    pub fn from_fields(fields: &[&GridField2D], shared: &[Vec<f64>]) -> Result<Self> {
        let first = fields
            .first()
            .ok_or_else(|| Error::Precondition("empty batch".into()))?;
        let (rows, cols) = first.shape();
        if let Some(f) = fields.iter().find(|f| f.shape() != (rows, cols)) {
            return Err(Error::Shape(format!(
                "batch mixes {rows}x{cols} with {}x{}",
                f.rows(),
                f.cols()
            )));
        }
        let plane = rows * cols;
        if let Some(c) = shared.iter().find(|c| c.len() != plane) {
            return Err(Error::Shape(format!(
                "shared channel has {} values, expected {plane}",
                c.len()
            )));
        }
        let geometry = Geometry { batch: fields.len(), rows, cols };
        let mut data = Vec::with_capacity((1 + shared.len()) * geometry.span());
        for f in fields {
            data.extend(f.data().iter().map(|&v| T::from_f64_lossy(v)));
        }
        for c in shared {
            for _ in 0..fields.len() {
                data.extend(c.iter().map(|&v| T::from_f64_lossy(v)));
            }
        }
        Ok(Self { channels: 1 + shared.len(), geometry, data })
    }
}

/// Residual convolutional predictor. Layer 0 is the lift, the last layer the projection.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictor<T> {
    config: PredictorConfig,
    layers: Vec<ConvLayer<T>>,
}

/// Parameter gradients with the same structure as a [`Predictor`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub layers: Vec<ConvLayer<T>>,
}

impl<T: Real> Gradients<T> {
    pub fn tensors(&self) -> Vec<&[T]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }
}

struct Record<T> {
    geometry: Geometry,
    input: Vec<T>,
    /// Hidden states `h_0 … h_n`.
    hidden: Vec<Vec<T>>,
    /// Activation outputs of the residual blocks.
    block_act: Vec<Vec<T>>,
}

/// Recording of one forward pass, consumed by [`Tape::backward`].
pub struct Tape<T> {
    record: Option<Record<T>>,
}

impl<T> Default for Tape<T> {
    fn default() -> Self {
        Self { record: None }
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_recorded(&self) -> bool {
        self.record.is_some()
    }

    /// Reverse pass for `d_out = dL/d(output)` (`batch × rows × cols`).
    pub fn backward(&mut self, model: &Predictor<T>, d_out: &[T]) -> Result<Gradients<T>> {
        let rec = self
            .record
            .take()
            .ok_or_else(|| Error::Usage("backward called without a recorded forward pass".into()))?;
        let g = rec.geometry;
        if d_out.len() != g.span() {
            return Err(Error::Shape(format!(
                "output gradient has {} values, expected {}",
                d_out.len(),
                g.span()
            )));
        }
        let cfg = &model.config;
        let mut grads = model.zero_gradients();
        let n = model.layers.len();
        let mut cols = Vec::new();

        im2col(&rec.hidden[cfg.n_blocks], cfg.hidden_channels, g, cfg.kernel, &mut cols);
        let mut dh = model.layers[n - 1]
            .backward(d_out, &cols, g, &mut grads.layers[n - 1], true)
            .expect("input gradient requested");

        for b in (0..cfg.n_blocks).rev() {
            let layer = b + 1;
            let act = &rec.block_act[b];
            let dz: Vec<T> = dh
                .iter()
                .zip(act)
                .map(|(&d, &a)| d * cfg.activation.derivative_from_output(a))
                .collect();
            im2col(&rec.hidden[b], cfg.hidden_channels, g, cfg.kernel, &mut cols);
            let dprev = model.layers[layer]
                .backward(&dz, &cols, g, &mut grads.layers[layer], true)
                .expect("input gradient requested");
            for (d, p) in dh.iter_mut().zip(dprev) {
                *d += p;
            }
        }

        let dz: Vec<T> = dh
            .iter()
            .zip(&rec.hidden[0])
            .map(|(&d, &a)| d * cfg.activation.derivative_from_output(a))
            .collect();
        im2col(&rec.input, cfg.in_channels, g, cfg.kernel, &mut cols);
        model.layers[0].backward(&dz, &cols, g, &mut grads.layers[0], false);
        Ok(grads)
    }
}

impl<T: Real> Predictor<T> {
    /// All-zero parameters; with `residual` this is the identity map.
    pub fn zeros(config: PredictorConfig) -> Result<Self> {
        config.validate()?;
        let k = config.kernel;
        let mut layers = vec![ConvLayer::zeros(config.in_channels, config.hidden_channels, k)];
        for _ in 0..config.n_blocks {
            layers.push(ConvLayer::zeros(config.hidden_channels, config.hidden_channels, k));
        }
        layers.push(ConvLayer::zeros(config.hidden_channels, 1, k));
        Ok(Self { config, layers })
    }

    /// Fan-in uniform initialization `U(±1/√fan_in)` for weights and biases,
    /// with the projection left at zero so training starts from the identity.
    pub fn init<R: Rng + ?Sized>(config: PredictorConfig, rng: &mut R) -> Result<Self> {
        let mut model = Self::zeros(config)?;
        let n = model.layers.len();
        for layer in model.layers[..n - 1].iter_mut() {
            let bound = 1.0 / (layer.fan_in() as f64).sqrt();
            for v in layer.weight.iter_mut().chain(layer.bias.iter_mut()) {
                *v = T::from_f64_lossy(rng.random_range(-bound..bound));
            }
        }
        Ok(model)
    }

    pub fn config(&self) -> &PredictorConfig {
        &self.config
    }

    pub fn layers(&self) -> &[ConvLayer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [ConvLayer<T>] {
        &mut self.layers
    }

    pub fn zero_gradients(&self) -> Gradients<T> {
        Gradients {
            layers: self
                .layers
                .iter()
                .map(|l| ConvLayer::zeros(l.in_channels, l.out_channels, l.kernel))
                .collect(),
        }
    }

    /// Parameter tensors in [`PredictorConfig::parameter_layout`] order.
    pub fn tensors(&self) -> Vec<&[T]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weight.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn n_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Converts parameters to another precision.
    pub fn cast<U: Real>(&self) -> Predictor<U> {
        let cvt = |v: &[T]| v.iter().map(|&x| U::from_f64_lossy(x.as_f64())).collect();
        Predictor {
            config: self.config.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| ConvLayer {
                    in_channels: l.in_channels,
                    out_channels: l.out_channels,
                    kernel: l.kernel,
                    weight: cvt(&l.weight),
                    bias: cvt(&l.bias),
                })
                .collect(),
        }
    }

    /// Runs the network on a batch and returns the `batch × rows × cols`
    /// prediction. When `tape` is given the pass is recorded for
    /// [`Tape::backward`].
    pub fn forward(&self, input: &EncodedBatch<T>, tape: Option<&mut Tape<T>>) -> Result<Vec<T>> {
        let cfg = &self.config;
        if input.channels != cfg.in_channels {
            return Err(Error::Shape(format!(
                "input has {} channels, model expects {}",
                input.channels, cfg.in_channels
            )));
        }
        let g = input.geometry;
        check_grid(g.rows, g.cols)?;
        if input.data.len() != input.channels * g.span() {
            return Err(Error::Shape("input buffer does not match its geometry".into()));
        }
        let recording = tape.is_some();
        let mut cols = Vec::new();
        let mut h = self.layers[0].forward(&input.data, g, &mut cols);
        cfg.activation.apply(&mut h);
        let mut hidden = Vec::new();
        let mut block_act = Vec::new();
        for b in 0..cfg.n_blocks {
            let mut z = self.layers[b + 1].forward(&h, g, &mut cols);
            cfg.activation.apply(&mut z);
            let next: Vec<T> = h.iter().zip(&z).map(|(&a, &d)| a + d).collect();
            if recording {
                hidden.push(std::mem::replace(&mut h, next));
                block_act.push(z);
            } else {
                h = next;
            }
        }
        let mut out = self.layers[cfg.n_blocks + 1].forward(&h, g, &mut cols);
        if cfg.residual {
            for (o, &u) in out.iter_mut().zip(&input.data[..g.span()]) {
                *o += u;
            }
        }
        if let Some(tape) = tape {
            hidden.push(h);
            tape.record = Some(Record { geometry: g, input: input.data.clone(), hidden, block_act });
        }
        Ok(out)
    }
}
