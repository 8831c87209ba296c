use ndarray::{Array2, Array3, Axis};

use crate::dataset::{assemble_batches, window_refs, TimeSeriesPanel, WindowBatch};
use crate::error::{Error, Result};
use crate::graph::SwGraph;
use crate::nn::GConvLstm;

/// Absolute next-step prediction errors aligned with the panel timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualPanel {
    cell_ids: Vec<String>,
    signal_names: Vec<String>,
    timestamps: Vec<i64>,
    /// Per cell `K x T`; zero where not evaluable.
    values: Vec<Array2<f64>>,
    /// Per cell, per time step.
    evaluable: Vec<Vec<bool>>,
}

impl ResidualPanel {
    pub fn new(
        panel: &TimeSeriesPanel,
        values: Vec<Array2<f64>>,
        evaluable: Vec<Vec<bool>>,
    ) -> Result<Self> {
        let shape = (panel.num_signals(), panel.len());
        if values.len() != panel.num_cells()
            || evaluable.len() != panel.num_cells()
            || values.iter().any(|v| v.dim() != shape)
            || evaluable.iter().any(|e| e.len() != panel.len())
        {
            return Err(Error::shape(
                "residuals do not match the panel layout".to_string(),
            ));
        }
        if values.iter().flatten().any(|v| !(*v >= 0.0)) {
            return Err(Error::Data("residuals must be non-negative".into()));
        }
        Ok(Self {
            cell_ids: panel.cell_ids().to_vec(),
            signal_names: panel.signal_names().to_vec(),
            timestamps: panel.timestamps().to_vec(),
            values,
            evaluable,
        })
    }

    pub fn cell_ids(&self) -> &[String] {
        &self.cell_ids
    }

    pub fn signal_names(&self) -> &[String] {
        &self.signal_names
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    pub fn num_cells(&self) -> usize {
        self.values.len()
    }

    pub fn num_signals(&self) -> usize {
        self.signal_names.len()
    }

    pub fn cell(&self, c: usize) -> &Array2<f64> {
        &self.values[c]
    }

    pub fn evaluable(&self) -> &[Vec<bool>] {
        &self.evaluable
    }

    /// Time indices of evaluable points for a cell.
    pub fn evaluable_steps(&self, c: usize) -> Vec<usize> {
        (0..self.timestamps.len())
            .filter(|&t| self.evaluable[c][t])
            .collect()
    }

    /// Evaluable residuals of one (cell, signal) pair, in time order.
    pub fn series(&self, c: usize, s: usize) -> Vec<f64> {
        let row = self.values[c].row(s);
        self.evaluable_steps(c)
            .into_iter()
            .map(|t| row[t])
            .collect()
    }

    /// Number of evaluable steps `T'` of a cell.
    pub fn width(&self, c: usize) -> usize {
        self.evaluable[c].iter().filter(|&&e| e).count()
    }

    pub fn select_cells(&self, idx: &[usize]) -> Self {
        Self {
            cell_ids: idx.iter().map(|&i| self.cell_ids[i].clone()).collect(),
            signal_names: self.signal_names.clone(),
            timestamps: self.timestamps.clone(),
            values: idx.iter().map(|&i| self.values[i].clone()).collect(),
            evaluable: idx.iter().map(|&i| self.evaluable[i].clone()).collect(),
        }
    }
}

/// Residuals from any batch predictor returning `(K*B, 1, horizon)`.
///
/// Windows slide with stride 1. When several windows predict the same
/// point, the one with the shortest lead wins.
pub fn residuals_with<F>(
    panel: &TimeSeriesPanel,
    sw_graph: &SwGraph,
    history: usize,
    horizon: usize,
    batch_size: usize,
    mut predict: F,
) -> Result<ResidualPanel>
where
    F: FnMut(&WindowBatch) -> Result<Array3<f64>>,
{
    let k = panel.num_signals();
    let t_len = panel.len();
    let refs = window_refs(panel, history, horizon, 1)?;
    let mut values = vec![Array2::<f64>::zeros((k, t_len)); panel.num_cells()];
    let mut lead = vec![vec![usize::MAX; t_len]; panel.num_cells()];
    for batch in assemble_batches(panel, &refs, history, horizon, batch_size, sw_graph)? {
        let pred = predict(&batch)?;
        if pred.dim() != batch.y.dim() {
            return Err(Error::shape(format!(
                "predictor returned {:?}, expected {:?}",
                pred.dim(),
                batch.y.dim()
            )));
        }
        for (b, r) in batch.samples.iter().enumerate() {
            for h in 0..horizon {
                let t = r.start + history + h;
                if h >= lead[r.cell][t] {
                    continue;
                }
                lead[r.cell][t] = h;
                for s in 0..k {
                    let row = b * k + s;
                    values[r.cell][[s, t]] = (pred[[row, 0, h]] - batch.y[[row, 0, h]]).abs();
                }
            }
        }
    }
    let evaluable = lead
        .into_iter()
        .map(|l| l.into_iter().map(|v| v != usize::MAX).collect())
        .collect();
    ResidualPanel::new(panel, values, evaluable)
}

/// Residuals of a trained model over every stride-1 window of `panel`.
pub fn residuals(
    model: &GConvLstm,
    panel: &TimeSeriesPanel,
    sw_graph: &SwGraph,
    batch_size: usize,
) -> Result<ResidualPanel> {
    let cfg = model.config();
    if cfg.feature_dim != 1 {
        return Err(Error::shape(
            "panel windows carry one feature per node".to_string(),
        ));
    }
    residuals_with(panel, sw_graph, cfg.history, cfg.horizon, batch_size, |b| {
        model.forward(b)
    })
}

/// Mean squared residual over evaluable points.
pub fn residual_mse(res: &ResidualPanel) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for c in 0..res.num_cells() {
        for t in res.evaluable_steps(c) {
            for v in res.cell(c).index_axis(Axis(1), t) {
                sum += v * v;
                n += 1;
            }
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}
