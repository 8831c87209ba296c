//! Artificial fault injection with ground-truth labels.
//!
//! Cells picked by a sampling rule are marked abnormal. Every point of every
//! counter of an abnormal cell is degraded independently with probability
//! `p`; the degradation can optionally propagate one hop downstream in the
//! execution graph with damping `γ`.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::panel::{LabelSet, TimeSeriesPanel};
use super::scale::robust_std;
use crate::error::{Error, Result};
use crate::graph::{Area, CellMeta, SwGraph};

/// Which cells are marked abnormal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellRule {
    All,
    None,
    Area(Area),
    Ids(Vec<String>),
}

impl CellRule {
    pub fn matches(&self, cell: &CellMeta) -> bool {
        match self {
            CellRule::All => true,
            CellRule::None => false,
            CellRule::Area(a) => cell.area == *a,
            CellRule::Ids(ids) => ids.contains(&cell.id),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Adds `A(s) * robust_std` at the point.
    #[default]
    Spike,
    /// Sets the point to zero.
    DropToZero,
    /// Adds `A(s) * robust_std` over `shift_len` steps starting at the point.
    LevelShift,
}

/// Degradation amplitude per signal, in units of that signal's robust std.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeMap {
    pub default: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_signal: BTreeMap<String, f64>,
}

impl AmplitudeMap {
    pub fn uniform(a: f64) -> Self {
        Self {
            default: a,
            per_signal: BTreeMap::new(),
        }
    }

    pub fn get(&self, signal: &str) -> f64 {
        self.per_signal.get(signal).copied().unwrap_or(self.default)
    }
}

impl Default for AmplitudeMap {
    fn default() -> Self {
        Self::uniform(8.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnotationConfig {
    pub anomaly_prob: f64,
    pub cell_rule: CellRule,
    pub amplitude: AmplitudeMap,
    pub propagate: bool,
    pub propagation_damping: f64,
    pub scenario: Scenario,
    pub shift_len: usize,
}

impl Default for AnnotationConfig {
    fn default() -> Self {
        Self {
            anomaly_prob: 0.01,
            cell_rule: CellRule::Area(Area::Airport),
            amplitude: AmplitudeMap::default(),
            propagate: false,
            propagation_damping: 0.5,
            scenario: Scenario::Spike,
            shift_len: 8,
        }
    }
}

impl AnnotationConfig {
    /// Presets for the three evaluation datasets: 0 = untouched,
    /// 1 = airport cells at p = 0.01, 2 = same with propagation.
    pub fn dataset(id: u8) -> Result<Self> {
        match id {
            0 => Ok(Self {
                anomaly_prob: 0.0,
                cell_rule: CellRule::None,
                ..Self::default()
            }),
            1 => Ok(Self::default()),
            2 => Ok(Self {
                propagate: true,
                ..Self::default()
            }),
            _ => Err(Error::Config(format!("unknown dataset id {id}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.anomaly_prob) {
            return Err(Error::Config("anomaly_prob must lie in [0, 1]".into()));
        }
        if !(self.propagation_damping > 0.0 && self.propagation_damping <= 1.0) {
            return Err(Error::Config(
                "propagation_damping must lie in (0, 1]".into(),
            ));
        }
        if self.scenario == Scenario::LevelShift && self.shift_len == 0 {
            return Err(Error::Config("shift_len must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationReport {
    pub abnormal_cells: Vec<String>,
    /// Points picked by the sampling step.
    pub injected_points: usize,
    /// Points labelled anomalous, propagation included.
    pub labeled_points: usize,
    /// Whether the panel was robust-scaled when anomalies were injected.
    pub injected_into_scaled: bool,
}

#[derive(Debug, Clone)]
pub struct Annotated {
    pub panel: TimeSeriesPanel,
    pub labels: LabelSet,
    pub report: AnnotationReport,
}

/// Injects anomalies into the cells selected by `cfg.cell_rule`.
///
/// `cells` must be aligned with the panel's cell order.
pub fn annotate(
    panel: &TimeSeriesPanel,
    cfg: &AnnotationConfig,
    sw_graph: &SwGraph,
    cells: &[CellMeta],
    seed: u64,
) -> Result<Annotated> {
    cfg.validate()?;
    if cells.len() != panel.num_cells()
        || cells
            .iter()
            .zip(panel.cell_ids())
            .any(|(c, id)| c.id != *id)
    {
        return Err(Error::shape(
            "cell metadata not aligned with panel".to_string(),
        ));
    }
    if sw_graph.num_nodes() != panel.num_signals() {
        return Err(Error::shape(format!(
            "execution graph has {} nodes, panel has {} signals",
            sw_graph.num_nodes(),
            panel.num_signals()
        )));
    }
    let k = panel.num_signals();
    let t_len = panel.len();
    let successors: Vec<Vec<usize>> = (0..k).map(|s| sw_graph.successors(s).collect()).collect();
    let amps: Vec<f64> = panel
        .signal_names()
        .iter()
        .map(|n| cfg.amplitude.get(n))
        .collect();
    let gamma = cfg.propagation_damping;

    let mut out = panel.clone();
    let mut labels = LabelSet::empty_like(panel);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut abnormal = Vec::new();
    let mut injected = 0;

    for (c, meta) in cells.iter().enumerate() {
        if !cfg.cell_rule.matches(meta) {
            continue;
        }
        abnormal.push(meta.id.clone());
        let rstd: Vec<f64> = panel
            .cell(c)
            .rows()
            .into_iter()
            .map(|r| robust_std(&r.to_vec()))
            .collect();
        // Draw every event before touching the data.
        let mut events = Vec::new();
        for s in 0..k {
            for t in 0..t_len {
                if rng.random::<f64>() < cfg.anomaly_prob {
                    events.push((s, t));
                }
            }
        }
        injected += events.len();
        let values = out.cell_mut(c);
        let flags = labels.cell_mut(c);
        for (s, t) in events {
            let span = match cfg.scenario {
                Scenario::LevelShift => t..(t + cfg.shift_len).min(t_len),
                _ => t..t + 1,
            };
            let mut degrade = |sig: usize, factor: f64| {
                for tau in span.clone() {
                    match cfg.scenario {
                        Scenario::Spike | Scenario::LevelShift => {
                            values[[sig, tau]] += factor * amps[s] * rstd[sig];
                        }
                        Scenario::DropToZero => {
                            values[[sig, tau]] *= 1.0 - factor;
                        }
                    }
                    flags[[sig, tau]] = true;
                }
            };
            degrade(s, 1.0);
            if cfg.propagate {
                for &v in &successors[s] {
                    degrade(v, gamma);
                }
            }
        }
    }
    if abnormal.is_empty() && cfg.cell_rule != CellRule::None {
        log::warn!("annotation cell rule matched no cells; labels are empty");
    }
    let report = AnnotationReport {
        abnormal_cells: abnormal,
        injected_points: injected,
        labeled_points: labels.count(),
        injected_into_scaled: panel.is_scaled(),
    };
    Ok(Annotated {
        panel: out,
        labels,
        report,
    })
}
