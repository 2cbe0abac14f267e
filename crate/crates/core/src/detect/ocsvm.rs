//! ν-one-class SVM in primal form over an explicit feature map.
//!
//! Objective: `½‖w‖² + (1/(νn)) Σ max(0, ρ − ⟨w, φ(x)⟩) − ρ`, minimized by
//! full-batch sub-gradient descent with step `lr / √(t+1)` and iterate
//! averaging over the second half of training. A final exact step sets `ρ`
//! to the `⌈νn⌉`-th smallest training margin, so at most `⌈νn⌉ − 1` training
//! points lie strictly outside.

use std::f64::consts::PI;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::bytes::{ByteReader, ByteWriter};
use super::{check_dim, AnomalyScore, DetectError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomFourierParams {
    pub dim: usize,
    /// RBF bandwidth; `None` means `1 / d`.
    #[serde(default)]
    pub gamma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "map", rename_all = "snake_case")]
pub enum FeatureMap {
    Linear,
    RandomFourier(RandomFourierParams),
}

impl Default for FeatureMap {
    fn default() -> Self {
        FeatureMap::RandomFourier(RandomFourierParams {
            dim: 128,
            gamma: None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OcsvmParams {
    pub nu: f64,
    #[serde(default)]
    pub map: FeatureMap,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for OcsvmParams {
    fn default() -> Self {
        Self {
            nu: 0.1,
            map: FeatureMap::default(),
            epochs: 200,
            lr: 1.0,
            seed: 0,
        }
    }
}

/// Sampled feature map; `omega` is `D × d`.
#[derive(Debug, Clone, PartialEq)]
enum FittedMap {
    Linear,
    RandomFourier {
        gamma: f64,
        omega: Array2<f64>,
        beta: Array1<f64>,
    },
}

impl FittedMap {
    fn out_dim(&self, n_features: usize) -> usize {
        match self {
            FittedMap::Linear => n_features,
            FittedMap::RandomFourier { beta, .. } => beta.len(),
        }
    }

    fn apply(&self, x: ArrayView1<'_, f64>) -> Array1<f64> {
        match self {
            FittedMap::Linear => x.to_owned(),
            FittedMap::RandomFourier { omega, beta, .. } => {
                let scale = (2.0 / beta.len() as f64).sqrt();
                (omega.dot(&x) + beta).mapv(|v| scale * v.cos())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OneClassSvmModel {
    n_features: usize,
    nu: f64,
    seed: u64,
    map: FittedMap,
    w: Array1<f64>,
    rho: f64,
}

impl OneClassSvmModel {
    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn weights(&self) -> ArrayView1<'_, f64> {
        self.w.view()
    }

    /// RBF bandwidth, `None` for the linear map.
    pub fn gamma(&self) -> Option<f64> {
        match &self.map {
            FittedMap::Linear => None,
            FittedMap::RandomFourier { gamma, .. } => Some(*gamma),
        }
    }

    /// Signed margin `⟨w, φ(x)⟩ − ρ`; negative means outside the support.
    pub fn raw_decision(&self, x: &[f64]) -> Result<f64, DetectError> {
        check_dim(self.n_features, x)?;
        Ok(self.w.dot(&self.map.apply(ArrayView1::from(x))) - self.rho)
    }

    pub(crate) fn to_payload(&self) -> Vec<u8> {
        let mut w = ByteWriter::default();
        w.u64(self.n_features as u64).f64(self.nu).u64(self.seed);
        match &self.map {
            FittedMap::Linear => {
                w.u8(0);
            }
            FittedMap::RandomFourier { gamma, omega, beta } => {
                w.u8(1)
                    .f64(*gamma)
                    .f64s(omega.as_standard_layout().as_slice().expect("contiguous"))
                    .f64s(beta.as_slice().expect("contiguous"));
            }
        }
        w.f64s(self.w.as_slice().expect("contiguous")).f64(self.rho);
        w.finish()
    }

    pub(crate) fn from_payload(payload: &[u8]) -> Result<Self, DetectError> {
        let bad = |m: &str| DetectError::MalformedPayload(m.to_string());
        let mut r = ByteReader::new(payload);
        let n_features = r.usize()?;
        let nu = r.f64()?;
        let seed = r.u64()?;
        let map = match r.u8()? {
            0 => FittedMap::Linear,
            1 => {
                let gamma = r.f64()?;
                let omega = r.f64s()?;
                let beta = Array1::from(r.f64s()?);
                if beta.is_empty() || omega.len() != beta.len() * n_features {
                    return Err(bad("feature map shape"));
                }
                let omega = Array2::from_shape_vec((beta.len(), n_features), omega)
                    .map_err(|_| bad("feature map shape"))?;
                FittedMap::RandomFourier { gamma, omega, beta }
            }
            t => return Err(bad(&format!("feature map tag {t}"))),
        };
        let w = Array1::from(r.f64s()?);
        let rho = r.f64()?;
        r.finish()?;
        if n_features == 0 || w.len() != map.out_dim(n_features) {
            return Err(bad("weight vector length"));
        }
        Ok(Self {
            n_features,
            nu,
            seed,
            map,
            w,
            rho,
        })
    }
}

pub fn ocsvm_fit(
    train: ArrayView2<'_, f64>,
    params: &OcsvmParams,
) -> Result<OneClassSvmModel, DetectError> {
    if !(params.nu > 0.0 && params.nu < 1.0) {
        return Err(DetectError::InvalidNu(params.nu));
    }
    let (n, d) = train.dim();
    if n == 0 {
        return Err(DetectError::TooFewSamples { needed: 1, got: 0 });
    }
    if d == 0 {
        return Err(DetectError::InvalidParameter(
            "zero-dimensional input".into(),
        ));
    }
    if !(params.lr > 0.0 && params.lr.is_finite()) {
        return Err(DetectError::InvalidParameter(format!(
            "learning rate {}",
            params.lr
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let map = match &params.map {
        FeatureMap::Linear => FittedMap::Linear,
        FeatureMap::RandomFourier(rf) => {
            let gamma = rf.gamma.unwrap_or(1.0 / d as f64);
            if rf.dim == 0 || !(gamma > 0.0 && gamma.is_finite()) {
                return Err(DetectError::InvalidParameter(format!(
                    "random Fourier dim {} gamma {gamma}",
                    rf.dim
                )));
            }
            // variance 2γ
            let normal = Normal::new(0.0, (2.0 * gamma).sqrt()).expect("finite std");
            let omega = Array2::from_shape_simple_fn((rf.dim, d), || normal.sample(&mut rng));
            let beta = Array1::from_shape_simple_fn(rf.dim, || rng.random_range(0.0..2.0 * PI));
            FittedMap::RandomFourier { gamma, omega, beta }
        }
    };
    let dim = map.out_dim(d);
    let mut phi = Array2::zeros((n, dim));
    for (i, row) in train.rows().into_iter().enumerate() {
        phi.row_mut(i).assign(&map.apply(row));
    }

    let inv_nun = 1.0 / (params.nu * n as f64);
    let mut w = Array1::<f64>::zeros(dim);
    let mut rho = 0.0;
    let mut w_avg = Array1::<f64>::zeros(dim);
    let mut averaged = 0usize;
    let avg_from = params.epochs / 2;
    for t in 0..params.epochs {
        let margins = phi.dot(&w);
        let mut grad_w = w.clone();
        let mut violators = 0usize;
        for (i, &m) in margins.iter().enumerate() {
            if m < rho {
                grad_w.scaled_add(-inv_nun, &phi.row(i));
                violators += 1;
            }
        }
        let grad_rho = violators as f64 * inv_nun - 1.0;
        let eta = params.lr / ((t + 1) as f64).sqrt();
        w.scaled_add(-eta, &grad_w);
        rho -= eta * grad_rho;
        if t >= avg_from {
            w_avg += &w;
            averaged += 1;
        }
    }
    if averaged > 0 {
        w = w_avg / averaged as f64;
    }
    let mut margins = phi.dot(&w).to_vec();
    margins.sort_by(f64::total_cmp);
    let k = ((params.nu * n as f64).ceil() as usize).clamp(1, n);
    rho = margins[k - 1];

    if !w.iter().all(|v| v.is_finite()) || !rho.is_finite() {
        return Err(DetectError::InvalidParameter("training diverged".into()));
    }
    Ok(OneClassSvmModel {
        n_features: d,
        nu: params.nu,
        seed: params.seed,
        map,
        w,
        rho,
    })
}

/// Score `−tanh(raw)`: in (−1, 1), positive outside the support.
pub fn ocsvm_decision(model: &OneClassSvmModel, x: &[f64]) -> Result<AnomalyScore, DetectError> {
    Ok(AnomalyScore {
        value: -model.raw_decision(x)?.tanh(),
        normalized: true,
    })
}
