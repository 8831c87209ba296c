//! Synthetic counter telemetry standing in for operator data.
//!
//! Every counter is a baseline plus a daily sinusoid plus Gaussian noise.
//! Noise also flows along the execution graph: a counter receives
//! `flow_coupling` times the previous-step noise of each of its predecessors,
//! so neighbour history carries information that an isolated model cannot
//! see.

use std::f64::consts::PI;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::panel::{TimeSeriesPanel, DEFAULT_START, DEFAULT_STEP_SECONDS};
use crate::error::{Error, Result};
use crate::graph::{area_split, Area, CellMeta, SwGraph};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthProfile {
    /// Steps per day (96 at 15-minute sampling).
    pub period: usize,
    pub step_seconds: i64,
    pub start: i64,
    pub baseline_min: f64,
    pub baseline_max: f64,
    /// Sinusoid amplitude as a fraction of the baseline.
    pub amplitude_frac: f64,
    /// Noise standard deviation as a fraction of the sinusoid amplitude.
    pub noise_std: f64,
    /// Weight of each predecessor's previous-step noise.
    pub flow_coupling: f64,
}

impl Default for SynthProfile {
    fn default() -> Self {
        Self {
            period: 96,
            step_seconds: DEFAULT_STEP_SECONDS,
            start: DEFAULT_START,
            baseline_min: 50.0,
            baseline_max: 150.0,
            amplitude_frac: 0.3,
            noise_std: 0.4,
            flow_coupling: 0.8,
        }
    }
}

/// Per-(cell, signal) closed-form parameters of the deterministic part.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignalShape {
    pub baseline: f64,
    pub amplitude: f64,
    pub phase: f64,
}

impl SignalShape {
    pub fn at(&self, t: usize, period: usize) -> f64 {
        self.baseline + self.amplitude * (2.0 * PI * t as f64 / period as f64 + self.phase).sin()
    }
}

/// Generated panel plus the closed-form shapes used to build it.
#[derive(Debug, Clone)]
pub struct SyntheticPanel {
    pub panel: TimeSeriesPanel,
    /// `shapes[cell][signal]`.
    pub shapes: Vec<Vec<SignalShape>>,
}

pub fn cell_id(i: usize) -> String {
    format!("cell_{i:03}")
}

pub fn signal_names(k: usize) -> Vec<String> {
    (1..=k).map(|i| format!("signal_{i}")).collect()
}

/// Cells split over airport/downtown/rural areas in the 12/29/26 proportion,
/// each area a cluster of positions in a 100 x 100 square.
pub fn synthetic_cells(n_cells: usize, seed: u64) -> Vec<CellMeta> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_ce11);
    let centres = [(20.0, 20.0), (50.0, 80.0), (80.0, 30.0)];
    let split = area_split(n_cells);
    let mut cells = Vec::with_capacity(n_cells);
    for (a, (&area, &count)) in Area::ALL.iter().zip(&split).enumerate() {
        for _ in 0..count {
            let (cx, cy) = centres[a];
            let pos = (
                cx + rng.random_range(-10.0..10.0),
                cy + rng.random_range(-10.0..10.0),
            );
            cells.push(CellMeta {
                id: cell_id(cells.len()),
                area,
                position: Some(pos),
            });
        }
    }
    cells
}

/// Generates `n_cells` cells of `T` steps over the counters of `sw_graph`.
pub fn generate_synthetic_panel(
    n_cells: usize,
    sw_graph: &SwGraph,
    t_len: usize,
    seed: u64,
    profile: &SynthProfile,
) -> Result<SyntheticPanel> {
    let k = sw_graph.num_nodes();
    if n_cells == 0 || k == 0 || t_len == 0 {
        return Err(Error::InvalidArgument(
            "panel dimensions must be positive".into(),
        ));
    }
    if profile.period == 0 || profile.step_seconds <= 0 {
        return Err(Error::InvalidArgument(
            "period and step must be positive".into(),
        ));
    }
    if profile.baseline_max < profile.baseline_min || profile.noise_std < 0.0 {
        return Err(Error::InvalidArgument("invalid synthetic profile".into()));
    }
    let preds: Vec<Vec<usize>> = (0..k).map(|v| sw_graph.predecessors(v).collect()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(n_cells);
    let mut shapes = Vec::with_capacity(n_cells);
    for _ in 0..n_cells {
        let cell_phase = rng.random_range(-0.5..0.5);
        let cell_shapes: Vec<SignalShape> = (0..k)
            .map(|_| {
                let baseline = if profile.baseline_max > profile.baseline_min {
                    rng.random_range(profile.baseline_min..profile.baseline_max)
                } else {
                    profile.baseline_min
                };
                SignalShape {
                    baseline,
                    amplitude: profile.amplitude_frac * baseline,
                    phase: cell_phase + rng.random_range(-0.3..0.3),
                }
            })
            .collect();
        let mut noise = Array2::<f64>::zeros((k, t_len));
        if profile.noise_std > 0.0 {
            for v in noise.iter_mut() {
                *v = rng.sample(StandardNormal);
            }
        }
        let mut m = Array2::<f64>::zeros((k, t_len));
        for (s, shape) in cell_shapes.iter().enumerate() {
            let sigma = profile.noise_std * shape.amplitude;
            for t in 0..t_len {
                let mut dev = noise[[s, t]];
                if t > 0 {
                    dev += profile.flow_coupling
                        * preds[s].iter().map(|&u| noise[[u, t - 1]]).sum::<f64>();
                }
                m[[s, t]] = shape.at(t, profile.period) + sigma * dev;
            }
        }
        values.push(m);
        shapes.push(cell_shapes);
    }
    let timestamps = (0..t_len as i64)
        .map(|t| profile.start + t * profile.step_seconds)
        .collect();
    let panel = TimeSeriesPanel::new(
        (0..n_cells).map(cell_id).collect(),
        sw_graph.node_names().to_vec(),
        timestamps,
        values,
    )?;
    Ok(SyntheticPanel { panel, shapes })
}
