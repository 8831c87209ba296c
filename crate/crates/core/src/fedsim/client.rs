use serde::{Deserialize, Serialize};

use crate::dataset::{training_batches, LabelSet, TimeSeriesPanel, WindowBatch};
use crate::detect::{detect_panel, residual_mse, residuals, DetectorConfig};
use crate::error::{Error, Result};
use crate::graph::{NwGraph, SwGraph};
use crate::metrics::prf1;
use crate::nn::{evaluate_mse, train, GConvLstm, LossMode, ModelConfig, TrainConfig};

/// Scores a client reports for one model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalMetrics {
    pub loss: f64,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

/// What a client sends to the server after local training.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpdate {
    pub client: usize,
    pub weights: Vec<f64>,
    pub metrics: LocalMetrics,
}

/// Client-side reference used to score local detections.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientEval {
    pub reference: LabelSet,
    pub detector: DetectorConfig,
}

/// One RAN cell acting as an FL client. Its data never leaves this record.
#[derive(Debug, Clone)]
pub struct ClientState {
    index: usize,
    cell_id: String,
    data: TimeSeriesPanel,
    sw_graph: SwGraph,
    batches: Vec<WindowBatch>,
    model_cfg: ModelConfig,
    eval: Option<ClientEval>,
    /// `ω[i]`: weights after the latest local training.
    pub weights: Vec<f64>,
    /// `ω*[i]`: weights received from the server.
    pub incoming: Vec<f64>,
    pub history: Vec<LocalMetrics>,
}

impl ClientState {
    pub fn new(
        index: usize,
        data: TimeSeriesPanel,
        sw_graph: &SwGraph,
        model_cfg: ModelConfig,
        batch_size: usize,
        stride: usize,
        init: &[f64],
    ) -> Result<Self> {
        if data.num_cells() != 1 {
            return Err(Error::InvalidArgument(
                "a client holds exactly one cell".into(),
            ));
        }
        let batches = training_batches(
            &data,
            model_cfg.history,
            model_cfg.horizon,
            stride,
            batch_size,
            sw_graph,
            index as u64,
        )?;
        if batches.is_empty() {
            return Err(Error::Data(format!(
                "cell {} has no training windows",
                data.cell_ids()[0]
            )));
        }
        Ok(Self {
            index,
            cell_id: data.cell_ids()[0].clone(),
            data,
            sw_graph: sw_graph.clone(),
            batches,
            model_cfg,
            eval: None,
            weights: init.to_vec(),
            incoming: init.to_vec(),
            history: Vec::new(),
        })
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn cell_id(&self) -> &str {
        &self.cell_id
    }

    /// Local data, for client-side code and tests only.
    pub fn data(&self) -> &TimeSeriesPanel {
        &self.data
    }

    pub fn batches(&self) -> &[WindowBatch] {
        &self.batches
    }

    pub fn num_data_points(&self) -> usize {
        self.data.num_signals() * self.data.len()
    }

    pub fn set_eval(&mut self, eval: ClientEval) -> Result<()> {
        if eval.reference.cell_ids() != self.data.cell_ids() {
            return Err(Error::shape(format!(
                "reference labels are not for cell {}",
                self.cell_id
            )));
        }
        self.eval = Some(eval);
        Ok(())
    }

    pub fn model(&self, weights: &[f64]) -> Result<GConvLstm> {
        let mut m = GConvLstm::zeros(self.model_cfg)?;
        m.set_flat(weights)?;
        Ok(m)
    }

    /// Loss and, when a reference is attached, detection scores of `weights`
    /// on the local data. Returns the local detections too.
    pub fn evaluate(&self, weights: &[f64]) -> Result<(LocalMetrics, Option<LabelSet>)> {
        let model = self.model(weights)?;
        let batch = self.batches[0].num_samples().max(1);
        let (loss, labels) = match &self.eval {
            Some(eval) => {
                let res = residuals(&model, &self.data, &self.sw_graph, batch)?;
                let det = detect_panel(&res, &eval.detector)?;
                let loss = if self.model_cfg.horizon == 1 {
                    residual_mse(&res)
                } else {
                    evaluate_mse(&model, &self.batches)?
                };
                (loss, Some(det.labels))
            }
            None => (evaluate_mse(&model, &self.batches)?, None),
        };
        let mut metrics = LocalMetrics {
            loss,
            precision: None,
            recall: None,
            f1: None,
        };
        if let (Some(eval), Some(pred)) = (&self.eval, &labels) {
            let s = prf1(pred, &eval.reference)?;
            metrics.precision = Some(s.precision);
            metrics.recall = Some(s.recall);
            metrics.f1 = Some(s.f1);
        }
        Ok((metrics, labels))
    }
}

/// One client per cell, each holding only its own slice.
pub fn partition_clients(
    panel: &TimeSeriesPanel,
    nw_graph: &NwGraph,
    sw_graph: &SwGraph,
    model_cfg: ModelConfig,
    batch_size: usize,
    stride: usize,
    init: &[f64],
) -> Result<Vec<ClientState>> {
    let ids: Vec<&str> = nw_graph.cells().iter().map(|c| c.id.as_str()).collect();
    let panel_ids: Vec<&str> = panel.cell_ids().iter().map(String::as_str).collect();
    if ids != panel_ids {
        return Err(Error::shape(
            "panel cells do not align with the network graph".to_string(),
        ));
    }
    (0..panel.num_cells())
        .map(|c| {
            ClientState::new(
                c,
                panel.select_cells(&[c])?,
                sw_graph,
                model_cfg,
                batch_size,
                stride,
                init,
            )
        })
        .collect()
}

/// Trains the client from `ω*_in` for `epochs` epochs on its own windows.
///
/// The regularized loss is anchored at `ω*_in`.
pub fn local_train(
    client: &mut ClientState,
    omega_star_in: &[f64],
    epochs: usize,
    loss_mode: LossMode,
    train_cfg: &TrainConfig,
    seed: u64,
) -> Result<ClientUpdate> {
    let mut model = client.model(omega_star_in)?;
    let cfg = TrainConfig {
        epochs,
        loss: loss_mode,
        seed,
        ..*train_cfg
    };
    let anchor = matches!(loss_mode, LossMode::MseReg { .. }).then_some(omega_star_in);
    train(&mut model, &client.batches, &cfg, anchor)?;
    client.incoming = omega_star_in.to_vec();
    client.weights = model.flat().to_vec();
    let (metrics, _) = client.evaluate(&client.weights)?;
    client.history.push(metrics);
    Ok(ClientUpdate {
        client: client.index,
        weights: client.weights.clone(),
        metrics,
    })
}
