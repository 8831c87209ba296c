use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of the recurrent graph model. Defaults follow the tuned
/// connected-signals configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub embed_dim: usize,
    /// Number of stacked recurrent layers.
    pub depth: usize,
    /// Number of Chebyshev terms `T_0 .. T_{Kc-1}`.
    pub cheb_order: usize,
    pub history: usize,
    pub horizon: usize,
    pub feature_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            embed_dim: 64,
            depth: 2,
            cheb_order: 2,
            history: 192,
            horizon: 1,
            feature_dim: 1,
        }
    }
}

impl ModelConfig {
    /// Tuned configuration for independent (unconnected) signals.
    pub fn independent() -> Self {
        Self {
            embed_dim: 16,
            depth: 1,
            history: 96,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("embed_dim", self.embed_dim),
            ("depth", self.depth),
            ("cheb_order", self.cheb_order),
            ("history", self.history),
            ("horizon", self.horizon),
            ("feature_dim", self.feature_dim),
        ];
        for (name, v) in fields {
            if v == 0 {
                return Err(Error::Config(format!("model {name} must be positive")));
            }
        }
        Ok(())
    }

    pub(crate) fn layer_input_dim(&self, layer: usize) -> usize {
        if layer == 0 {
            self.feature_dim
        } else {
            self.embed_dim
        }
    }

    pub(crate) fn output_dim(&self) -> usize {
        self.feature_dim * self.horizon
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum LossMode {
    #[default]
    Mse,
    /// `MSE + λ ||ω - ω*||²`, anchored at incoming weights `ω*`.
    MseReg { lambda: f64 },
}

impl LossMode {
    pub fn lambda(&self) -> f64 {
        match *self {
            LossMode::Mse => 0.0,
            LossMode::MseReg { lambda } => lambda,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum OptimizerKind {
    Sgd,
    AdaptiveMoments { beta1: f64, beta2: f64, eps: f64 },
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::AdaptiveMoments {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub loss: LossMode,
    pub optimizer: OptimizerKind,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 3e-3,
            batch_size: 64,
            epochs: 50,
            loss: LossMode::Mse,
            optimizer: OptimizerKind::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(
                "learning_rate must be a non-negative number".into(),
            ));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.loss.lambda() >= 0.0) {
            return Err(Error::Config("regularization factor must be >= 0".into()));
        }
        Ok(())
    }
}
