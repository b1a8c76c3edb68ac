//! A small dense feed-forward engine with hand-written backpropagation and
//! Adam. Only the fixed activation menu used by the forecasting models is
//! supported.

use ndarray::{Array1, Array2, Axis, Zip};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Tanh,
    Relu,
    Softmax,
    Softplus,
}

/// Numerically stable `ln(1 + e^x)`.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub const POSITIVE_SHIFT: f64 = 1e-5;
pub const POSITIVE_FLOOR: f64 = 1e-3;

/// `softplus(o + 1e-5) + 1e-3`: maps any finite output to `[1e-3, inf)`.
pub fn positive_transform(o: f64) -> f64 {
    softplus(o + POSITIVE_SHIFT) + POSITIVE_FLOOR
}

pub fn positive_transform_grad(o: f64) -> f64 {
    sigmoid(o + POSITIVE_SHIFT)
}

impl Activation {
    fn apply(self, z: &mut Array2<f64>) {
        match self {
            Activation::Identity => {}
            Activation::Tanh => z.mapv_inplace(f64::tanh),
            Activation::Relu => z.mapv_inplace(|x| x.max(0.0)),
            Activation::Softplus => z.mapv_inplace(softplus),
            Activation::Softmax => {
                for mut row in z.rows_mut() {
                    let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
                    row.mapv_inplace(|x| (x - max).exp());
                    let sum = row.sum();
                    row.mapv_inplace(|x| x / sum);
                }
            }
        }
    }

    /// Gradient w.r.t. the pre-activation given the activation output `a`.
    fn backprop(self, a: &Array2<f64>, grad: &Array2<f64>) -> Array2<f64> {
        match self {
            Activation::Identity => grad.clone(),
            Activation::Tanh => Zip::from(grad).and(a).map_collect(|g, y| g * (1.0 - y * y)),
            Activation::Relu => {
                Zip::from(grad)
                    .and(a)
                    .map_collect(|g, y| if *y > 0.0 { *g } else { 0.0 })
            }
            // a = ln(1 + e^z)  =>  sigmoid(z) = 1 - e^{-a}
            Activation::Softplus => Zip::from(grad).and(a).map_collect(|g, y| g * -(-y).exp_m1()),
            Activation::Softmax => {
                let mut out = Array2::zeros(a.raw_dim());
                for ((mut o, y), g) in out.rows_mut().into_iter().zip(a.rows()).zip(grad.rows()) {
                    let dot = y.dot(&g);
                    Zip::from(&mut o)
                        .and(&y)
                        .and(&g)
                        .for_each(|o, y, g| *o = y * (g - dot));
                }
                out
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `fan_in x fan_out`
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
}

impl Layer {
    pub fn input_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.ncols()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DenseNet {
    layers: Vec<Layer>,
    #[serde(skip)]
    generation: u64,
}

impl PartialEq for DenseNet {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
    }
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to each layer; `inputs[0]` is the network input.
    inputs: Vec<Array2<f64>>,
    output: Array2<f64>,
    generation: u64,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }

    pub fn into_output(self) -> Array2<f64> {
        self.output
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    pub input: Array2<f64>,
}

impl Gradients {
    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|x| x.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|x| x.is_finite()))
    }

    pub fn scale(&mut self, k: f64) {
        for w in &mut self.weights {
            *w *= k;
        }
        for b in &mut self.biases {
            *b *= k;
        }
    }
}

impl DenseNet {
    /// Builds a network with `uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))`
    /// weights and biases.
    pub fn new<R: Rng + ?Sized>(
        input_dim: usize,
        spec: &[(usize, Activation)],
        rng: &mut R,
    ) -> Result<Self> {
        if input_dim == 0 || spec.is_empty() || spec.iter().any(|(d, _)| *d == 0) {
            return Err(Error::Config("network dimensions must be positive".into()));
        }
        let mut layers = Vec::with_capacity(spec.len());
        let mut fan_in = input_dim;
        for &(fan_out, activation) in spec {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
            let weights = Array2::from_shape_fn((fan_in, fan_out), |_| dist.sample(rng));
            let bias = Array1::from_shape_fn(fan_out, |_| dist.sample(rng));
            layers.push(Layer {
                weights,
                bias,
                activation,
            });
            fan_in = fan_out;
        }
        Ok(DenseNet {
            layers,
            generation: 0,
        })
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("network needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.output_dim() {
                return Err(Error::dim("layer bias", l.output_dim(), l.bias.len()));
            }
            if i > 0 && layers[i - 1].output_dim() != l.input_dim() {
                return Err(Error::dim(
                    "consecutive layer dims",
                    layers[i - 1].output_dim(),
                    l.input_dim(),
                ));
            }
        }
        Ok(DenseNet {
            layers,
            generation: 0,
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        self.generation += 1;
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").output_dim()
    }

    pub fn n_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn forward(&self, input: &Array2<f64>) -> Result<ForwardCache> {
        if input.ncols() != self.input_dim() {
            return Err(Error::dim("network input columns", self.input_dim(), input.ncols()));
        }
        if input.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric("non-finite network input".into()));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut current = input.to_owned();
        for layer in &self.layers {
            let mut z = current.dot(&layer.weights);
            z += &layer.bias;
            layer.activation.apply(&mut z);
            inputs.push(std::mem::replace(&mut current, z));
        }
        if current.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric("non-finite network output".into()));
        }
        Ok(ForwardCache {
            inputs,
            output: current,
            generation: self.generation,
        })
    }

    pub fn predict(&self, input: &Array2<f64>) -> Result<Array2<f64>> {
        self.forward(input).map(ForwardCache::into_output)
    }

    pub fn backward(&self, cache: &ForwardCache, grad_output: &Array2<f64>) -> Result<Gradients> {
        if cache.generation != self.generation || cache.inputs.len() != self.layers.len() {
            return Err(Error::Numeric(
                "stale forward cache: parameters changed since forward".into(),
            ));
        }
        if grad_output.raw_dim() != cache.output.raw_dim() {
            return Err(Error::dim("output gradient rows", cache.output.nrows(), grad_output.nrows()));
        }
        let n = self.layers.len();
        let mut weights = vec![Array2::zeros((0, 0)); n];
        let mut biases = vec![Array1::zeros(0); n];
        let mut grad = grad_output.to_owned();
        for i in (0..n).rev() {
            let layer = &self.layers[i];
            let activated = if i + 1 < n { &cache.inputs[i + 1] } else { &cache.output };
            let dz = layer.activation.backprop(activated, &grad);
            weights[i] = cache.inputs[i].t().dot(&dz);
            biases[i] = dz.sum_axis(Axis(0));
            grad = dz.dot(&layer.weights.t());
        }
        Ok(Gradients {
            weights,
            biases,
            input: grad,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m_w: Vec<Array2<f64>>,
    m_b: Vec<Array1<f64>>,
    v_w: Vec<Array2<f64>>,
    v_b: Vec<Array1<f64>>,
}

impl AdamState {
    pub fn new(net: &DenseNet, lr: f64) -> Self {
        Self::with_betas(net, lr, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(net: &DenseNet, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        let zw: Vec<_> = net.layers.iter().map(|l| Array2::zeros(l.weights.raw_dim())).collect();
        let zb: Vec<_> = net.layers.iter().map(|l| Array1::zeros(l.bias.raw_dim())).collect();
        AdamState {
            lr,
            beta1,
            beta2,
            eps,
            step: 0,
            m_w: zw.clone(),
            m_b: zb.clone(),
            v_w: zw,
            v_b: zb,
        }
    }

    pub fn first_moment(&self, layer: usize) -> (&Array2<f64>, &Array1<f64>) {
        (&self.m_w[layer], &self.m_b[layer])
    }

    pub fn second_moment(&self, layer: usize) -> (&Array2<f64>, &Array1<f64>) {
        (&self.v_w[layer], &self.v_b[layer])
    }
}

/// One bias-corrected Adam update. Non-finite gradients are rejected and
/// leave both the network and the optimizer state untouched.
pub fn adam_step(net: &mut DenseNet, grads: &Gradients, state: &mut AdamState) -> Result<()> {
    if grads.weights.len() != net.layers.len() || state.m_w.len() != net.layers.len() {
        return Err(Error::dim("gradient layers", net.layers.len(), grads.weights.len()));
    }
    for (l, (gw, gb)) in net.layers.iter().zip(grads.weights.iter().zip(&grads.biases)) {
        if gw.raw_dim() != l.weights.raw_dim() || gb.raw_dim() != l.bias.raw_dim() {
            return Err(Error::dim("gradient shape", l.weights.len(), gw.len()));
        }
    }
    if !grads.is_finite() {
        return Err(Error::Numeric("non-finite gradient; Adam step rejected".into()));
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2, lr, eps) = (state.beta1, state.beta2, state.lr, state.eps);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    net.generation += 1;
    for (i, layer) in net.layers.iter_mut().enumerate() {
        Zip::from(&mut layer.weights)
            .and(&mut state.m_w[i])
            .and(&mut state.v_w[i])
            .and(&grads.weights[i])
            .for_each(|p, m, v, &g| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            });
        Zip::from(&mut layer.bias)
            .and(&mut state.m_b[i])
            .and(&mut state.v_b[i])
            .and(&grads.biases[i])
            .for_each(|p, m, v, &g| {
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
            });
    }
    Ok(())
}

/// Z-score scaling fitted on a training span.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: f64,
    pub scale: f64,
}

impl Standardizer {
    pub fn fit(values: &[f64]) -> Self {
        if values.is_empty() {
            return Standardizer {
                mean: 0.0,
                scale: 1.0,
            };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let sd = var.sqrt();
        // constant spans keep unit scale
        let scale = if sd > 1e-12 * mean.abs().max(1.0) { sd } else { 1.0 };
        Standardizer { mean, scale }
    }

    pub fn transform(&self, x: f64) -> f64 {
        (x - self.mean) / self.scale
    }

    pub fn inverse(&self, z: f64) -> f64 {
        self.mean + self.scale * z
    }
}

/// Shuffled mini-batch index sets covering `0..n`.
pub fn minibatches<R: Rng + ?Sized>(n: usize, batch: usize, rng: &mut R) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.chunks(batch.max(1)).map(<[usize]>::to_vec).collect()
}
