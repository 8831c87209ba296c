//! Mini-batch training loop.

use log::debug;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{OptimizerKind, TrainConfig};
use super::model::GConvLstm;
use crate::dataset::WindowBatch;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Sample-weighted mean MSE over the epoch's batches, measured before each step.
    pub mse: f64,
    /// Same average for the full objective (MSE plus penalty).
    pub loss: f64,
}

/// Optimizer state for one training call.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, n_params: usize) -> Self {
        let (m, v) = match kind {
            OptimizerKind::Sgd => (Vec::new(), Vec::new()),
            OptimizerKind::AdaptiveMoments { .. } => (vec![0.0; n_params], vec![0.0; n_params]),
        };
        Self {
            kind,
            lr,
            m,
            v,
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grad) {
                    *p -= self.lr * g;
                }
            }
            OptimizerKind::AdaptiveMoments { beta1, beta2, eps } => {
                self.t += 1;
                let c1 = 1.0 - beta1.powi(self.t);
                let c2 = 1.0 - beta2.powi(self.t);
                for i in 0..params.len() {
                    let g = grad[i];
                    self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
                    self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
                    let m_hat = self.m[i] / c1;
                    let v_hat = self.v[i] / c2;
                    params[i] -= self.lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
    }
}

/// Runs `cfg.epochs` passes over `batches` in a seeded shuffled order.
///
/// `anchor` is the `ω*` of the regularized loss. A non-finite loss aborts
/// with [`Error::Divergence`] and leaves the model at its last finite state.
pub fn train(
    model: &mut GConvLstm,
    batches: &[WindowBatch],
    cfg: &TrainConfig,
    anchor: Option<&[f64]>,
) -> Result<Vec<EpochMetrics>> {
    cfg.validate()?;
    if batches.is_empty() {
        return Err(Error::InvalidArgument(
            "training needs at least one batch".into(),
        ));
    }
    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate, model.num_params());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..batches.len()).collect();
    let mut params = model.flat().to_vec();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut mse_sum, mut loss_sum, mut weight) = (0.0, 0.0, 0.0);
        for &b in &order {
            let lg = model
                .loss_and_grad(&batches[b], cfg.loss, anchor)
                .map_err(|e| match e {
                    Error::Divergence(msg) => {
                        Error::Divergence(format!("epoch {epoch}, batch {b}: {msg}"))
                    }
                    other => other,
                })?;
            let w = batches[b].num_samples() as f64;
            mse_sum += lg.mse * w;
            loss_sum += lg.loss * w;
            weight += w;
            opt.step(&mut params, &lg.grad);
            if params.iter().any(|p| !p.is_finite()) {
                return Err(Error::Divergence(format!(
                    "epoch {epoch}, batch {b}: non-finite weights"
                )));
            }
            model.set_flat(&params)?;
        }
        let m = EpochMetrics {
            epoch,
            mse: mse_sum / weight,
            loss: loss_sum / weight,
        };
        debug!("epoch {epoch}: mse {:.6}", m.mse);
        history.push(m);
    }
    Ok(history)
}

/// Sample-weighted MSE of the model over `batches`.
pub fn evaluate_mse(model: &GConvLstm, batches: &[WindowBatch]) -> Result<f64> {
    let (mut sum, mut count) = (0.0, 0usize);
    for b in batches {
        let pred = model.forward(b)?;
        sum += pred
            .iter()
            .zip(b.y.iter())
            .map(|(p, y)| (p - y) * (p - y))
            .sum::<f64>();
        count += pred.len();
    }
    if count == 0 {
        return Err(Error::InvalidArgument(
            "evaluation needs at least one batch".into(),
        ));
    }
    Ok(sum / count as f64)
}
