use ndarray::{Array3, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::panel::TimeSeriesPanel;
use crate::error::{Error, Result};
use crate::graph::{disjoint_union_batch, BatchedGraph, SwGraph};

/// One sliding window: cell index and first time step of the history.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct WindowRef {
    pub cell: usize,
    pub start: usize,
}

/// Mini-batch of windows over the disjoint union of per-sample graphs.
///
/// `x` is `(K*B, F, history)` and `y` is `(K*B, F, horizon)`; node `k` of
/// sample `b` sits at row `b*K + k`.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowBatch {
    pub x: Array3<f64>,
    pub y: Array3<f64>,
    pub graph: BatchedGraph,
    pub samples: Vec<WindowRef>,
    pub history: usize,
    pub horizon: usize,
}

impl WindowBatch {
    pub fn num_samples(&self) -> usize {
        self.samples.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.x.len_of(Axis(0))
    }

    pub fn nodes_per_sample(&self) -> usize {
        self.num_nodes() / self.samples.len().max(1)
    }
}

pub fn num_windows(t_len: usize, history: usize, horizon: usize, stride: usize) -> usize {
    if history + horizon > t_len || stride == 0 {
        0
    } else {
        (t_len - history - horizon) / stride + 1
    }
}

/// Window starts for every cell, cell-major.
pub fn window_refs(
    panel: &TimeSeriesPanel,
    history: usize,
    horizon: usize,
    stride: usize,
) -> Result<Vec<WindowRef>> {
    if history == 0 || horizon == 0 || stride == 0 {
        return Err(Error::InvalidArgument(
            "history, horizon and stride must be positive".into(),
        ));
    }
    if history + horizon > panel.len() {
        return Err(Error::InvalidArgument(format!(
            "history + horizon = {} exceeds series length {}",
            history + horizon,
            panel.len()
        )));
    }
    let per_cell = num_windows(panel.len(), history, horizon, stride);
    Ok((0..panel.num_cells())
        .flat_map(|cell| {
            (0..per_cell).map(move |w| WindowRef {
                cell,
                start: w * stride,
            })
        })
        .collect())
}

/// Seeded permutation of window refs, for training batches.
pub fn shuffle_refs(refs: &mut [WindowRef], seed: u64) {
    refs.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
}

/// Packs windows into batches of `batch_size` (last batch may be smaller).
pub fn assemble_batches(
    panel: &TimeSeriesPanel,
    refs: &[WindowRef],
    history: usize,
    horizon: usize,
    batch_size: usize,
    sw_graph: &SwGraph,
) -> Result<Vec<WindowBatch>> {
    if batch_size == 0 {
        return Err(Error::InvalidArgument(
            "batch_size must be at least 1".into(),
        ));
    }
    let k = panel.num_signals();
    if sw_graph.num_nodes() != k {
        return Err(Error::shape(format!(
            "execution graph has {} nodes, panel has {k} signals",
            sw_graph.num_nodes()
        )));
    }
    for r in refs {
        if r.cell >= panel.num_cells() || r.start + history + horizon > panel.len() {
            return Err(Error::InvalidArgument(format!("window {r:?} out of range")));
        }
    }
    let full = disjoint_union_batch(sw_graph, batch_size)?;
    refs.chunks(batch_size)
        .map(|chunk| {
            let b = chunk.len();
            let graph = if b == batch_size {
                full.clone()
            } else {
                disjoint_union_batch(sw_graph, b)?
            };
            let mut x = Array3::zeros((k * b, 1, history));
            let mut y = Array3::zeros((k * b, 1, horizon));
            for (i, r) in chunk.iter().enumerate() {
                let m = panel.cell(r.cell);
                for s in 0..k {
                    for h in 0..history {
                        x[[i * k + s, 0, h]] = m[[s, r.start + h]];
                    }
                    for h in 0..horizon {
                        y[[i * k + s, 0, h]] = m[[s, r.start + history + h]];
                    }
                }
            }
            Ok(WindowBatch {
                x,
                y,
                graph,
                samples: chunk.to_vec(),
                history,
                horizon,
            })
        })
        .collect()
}

/// Sliding windows over every cell, batched in cell-major order.
pub fn window_split(
    panel: &TimeSeriesPanel,
    history: usize,
    horizon: usize,
    stride: usize,
    batch_size: usize,
    sw_graph: &SwGraph,
) -> Result<Vec<WindowBatch>> {
    let refs = window_refs(panel, history, horizon, stride)?;
    assemble_batches(panel, &refs, history, horizon, batch_size, sw_graph)
}

/// Windows in a seeded random order, so each batch mixes cells and times.
pub fn training_batches(
    panel: &TimeSeriesPanel,
    history: usize,
    horizon: usize,
    stride: usize,
    batch_size: usize,
    sw_graph: &SwGraph,
    seed: u64,
) -> Result<Vec<WindowBatch>> {
    let mut refs = window_refs(panel, history, horizon, stride)?;
    shuffle_refs(&mut refs, seed);
    assemble_batches(panel, &refs, history, horizon, batch_size, sw_graph)
}
