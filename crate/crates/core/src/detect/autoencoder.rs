//! Dense autoencoder `d → h → b → h → d` with tanh hidden layers and a
//! linear output, trained by full-batch gradient descent on the mean squared
//! reconstruction error. The anomaly score of a vector is its own mean
//! squared reconstruction error.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::bytes::{ByteReader, ByteWriter};
use super::{check_dim, quantile, AnomalyScore, DetectError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderParams {
    /// Width of both hidden layers; `None` means `max(b + 1, d / 2)`.
    #[serde(default)]
    pub hidden: Option<usize>,
    /// Bottleneck width; `None` means `max(1, d / 4)`.
    #[serde(default)]
    pub bottleneck: Option<usize>,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    pub threshold_quantile: f64,
}

impl Default for AutoencoderParams {
    fn default() -> Self {
        Self {
            hidden: None,
            bottleneck: None,
            epochs: 200,
            lr: 0.1,
            seed: 0,
            threshold_quantile: 0.99,
        }
    }
}

impl AutoencoderParams {
    /// `(hidden, bottleneck)` for input width `d`.
    pub fn resolve(&self, d: usize) -> (usize, usize) {
        let b = self.bottleneck.unwrap_or((d / 4).max(1));
        let h = self.hidden.unwrap_or((b + 1).max(d / 2));
        (h, b)
    }
}

/// `y = W x + b`, `W` is `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl DenseLayer {
    fn init(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        Self {
            weights: Array2::from_shape_simple_fn((fan_out, fan_in), || {
                rng.random_range(-bound..=bound)
            }),
            bias: Array1::zeros(fan_out),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weights.ncols()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderModel {
    layers: Vec<DenseLayer>,
    threshold: f64,
    epochs: usize,
    lr: f64,
    seed: u64,
    loss_history: Vec<f64>,
}

impl AutoencoderModel {
    /// Freshly initialized network; the threshold is 0 until fitted.
    pub fn init(
        d: usize,
        hidden: usize,
        bottleneck: usize,
        seed: u64,
    ) -> Result<Self, DetectError> {
        if d < 2 {
            return Err(DetectError::BadArchitecture(format!("input width {d} < 2")));
        }
        if bottleneck == 0 || bottleneck >= d {
            return Err(DetectError::BadArchitecture(format!(
                "bottleneck {bottleneck} must lie in [1, {d})"
            )));
        }
        if hidden == 0 {
            return Err(DetectError::BadArchitecture("hidden width 0".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sizes = [d, hidden, bottleneck, hidden, d];
        let layers = sizes
            .windows(2)
            .map(|w| DenseLayer::init(w[0], w[1], &mut rng))
            .collect();
        Ok(Self {
            layers,
            threshold: 0.0,
            epochs: 0,
            lr: 0.0,
            seed,
            loss_history: Vec::new(),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    /// `[d, h, b, h, d]`.
    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(DenseLayer::fan_out))
            .collect()
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn epochs(&self) -> usize {
        self.epochs
    }

    pub fn learning_rate(&self) -> f64 {
        self.lr
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Training loss at the start of each epoch.
    pub fn loss_history(&self) -> &[f64] {
        &self.loss_history
    }

    /// Activations of every layer for a batch (rows are samples); entry 0 is
    /// the input.
    fn forward(&self, x: ArrayView2<'_, f64>) -> Vec<Array2<f64>> {
        let mut acts = vec![x.to_owned()];
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = acts[i].dot(&l.weights.t()) + &l.bias;
            if i < last {
                z.mapv_inplace(f64::tanh);
            }
            acts.push(z);
        }
        acts
    }

    pub fn reconstruct(&self, x: ArrayView1<'_, f64>) -> Array1<f64> {
        let batch = x.insert_axis(Axis(0));
        self.forward(batch)
            .pop()
            .expect("output")
            .index_axis_move(Axis(0), 0)
    }

    /// Mean squared error over all `n × d` entries.
    pub fn loss(&self, x: ArrayView2<'_, f64>) -> f64 {
        let out = self.forward(x).pop().expect("output");
        (&out - &x).mapv(|v| v * v).sum() / x.len() as f64
    }

    /// Loss and its gradient with respect to every layer's parameters.
    pub fn loss_and_gradients(&self, x: ArrayView2<'_, f64>) -> (f64, Vec<LayerGradient>) {
        let acts = self.forward(x);
        let out = acts.last().expect("output");
        let diff = out - &x;
        let loss = diff.mapv(|v| v * v).sum() / x.len() as f64;
        let mut delta = diff * (2.0 / x.len() as f64);
        let mut grads = Vec::with_capacity(self.layers.len());
        for i in (0..self.layers.len()).rev() {
            grads.push(LayerGradient {
                weights: delta.t().dot(&acts[i]),
                bias: delta.sum_axis(Axis(0)),
            });
            if i > 0 {
                // acts[i] = tanh(z), d tanh = 1 - a²
                delta = delta.dot(&self.layers[i].weights) * acts[i].mapv(|a| 1.0 - a * a);
            }
        }
        grads.reverse();
        (loss, grads)
    }

    fn errors(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        let out = self.forward(x).pop().expect("output");
        let d = x.ncols() as f64;
        (&out - &x)
            .rows()
            .into_iter()
            .map(|r| r.mapv(|v| v * v).sum() / d)
            .collect()
    }

    pub(crate) fn to_payload(&self) -> Vec<u8> {
        let mut w = ByteWriter::default();
        w.u64(self.layers.len() as u64);
        for l in &self.layers {
            w.u64(l.fan_in() as u64)
                .u64(l.fan_out() as u64)
                .f64s(
                    l.weights
                        .as_standard_layout()
                        .as_slice()
                        .expect("contiguous"),
                )
                .f64s(l.bias.as_slice().expect("contiguous"));
        }
        w.f64(self.threshold)
            .u64(self.epochs as u64)
            .f64(self.lr)
            .u64(self.seed)
            .f64s(&self.loss_history);
        w.finish()
    }

    pub(crate) fn from_payload(payload: &[u8]) -> Result<Self, DetectError> {
        let bad = |m: &str| DetectError::MalformedPayload(m.to_string());
        let mut r = ByteReader::new(payload);
        let n_layers = r.usize()?;
        if n_layers != 4 {
            return Err(bad("expected 4 layers"));
        }
        let mut layers: Vec<DenseLayer> = Vec::with_capacity(4);
        for _ in 0..n_layers {
            let fan_in = r.usize()?;
            let fan_out = r.usize()?;
            let weights = r.f64s()?;
            let bias = r.f64s()?;
            if fan_in == 0
                || fan_out == 0
                || bias.len() != fan_out
                || Some(weights.len()) != fan_in.checked_mul(fan_out)
                || layers.last().is_some_and(|p| p.fan_out() != fan_in)
            {
                return Err(bad("layer shape"));
            }
            layers.push(DenseLayer {
                weights: Array2::from_shape_vec((fan_out, fan_in), weights)
                    .map_err(|_| bad("layer shape"))?,
                bias: Array1::from(bias),
            });
        }
        let threshold = r.f64()?;
        let epochs = r.usize()?;
        let lr = r.f64()?;
        let seed = r.u64()?;
        let loss_history = r.f64s()?;
        r.finish()?;
        if layers[0].fan_in() != layers[3].fan_out() {
            return Err(bad("output width differs from input width"));
        }
        Ok(Self {
            layers,
            threshold,
            epochs,
            lr,
            seed,
            loss_history,
        })
    }
}

pub fn ae_fit(
    train: ArrayView2<'_, f64>,
    params: &AutoencoderParams,
) -> Result<AutoencoderModel, DetectError> {
    let (n, d) = train.dim();
    if n == 0 {
        return Err(DetectError::TooFewSamples { needed: 1, got: 0 });
    }
    if !(params.lr >= 0.0 && params.lr.is_finite()) {
        return Err(DetectError::InvalidParameter(format!(
            "learning rate {}",
            params.lr
        )));
    }
    if !(0.0..=1.0).contains(&params.threshold_quantile) {
        return Err(DetectError::InvalidParameter(format!(
            "threshold quantile {}",
            params.threshold_quantile
        )));
    }
    let (h, b) = params.resolve(d);
    let mut model = AutoencoderModel::init(d, h, b, params.seed)?;
    for _ in 0..params.epochs {
        let (loss, grads) = model.loss_and_gradients(train);
        model.loss_history.push(loss);
        for (l, g) in model.layers.iter_mut().zip(&grads) {
            l.weights.scaled_add(-params.lr, &g.weights);
            l.bias.scaled_add(-params.lr, &g.bias);
        }
    }
    if model
        .layers
        .iter()
        .any(|l| l.weights.iter().chain(&l.bias).any(|v| !v.is_finite()))
    {
        return Err(DetectError::InvalidParameter("training diverged".into()));
    }
    model.epochs = params.epochs;
    model.lr = params.lr;
    model.threshold = quantile(&model.errors(train), params.threshold_quantile);
    Ok(model)
}

pub fn ae_score(model: &AutoencoderModel, x: &[f64]) -> Result<AnomalyScore, DetectError> {
    check_dim(model.input_dim(), x)?;
    let x = ArrayView1::from(x);
    let err = (&model.reconstruct(x) - &x).mapv(|v| v * v).sum() / x.len() as f64;
    Ok(AnomalyScore {
        value: err,
        normalized: false,
    })
}
