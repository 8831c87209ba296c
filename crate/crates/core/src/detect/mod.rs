//! Outlier decision on reconstruction residuals.

mod outlier;
mod residual;
pub mod stats;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use log::warn;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

pub use outlier::{
    esd_critical, esd_detect, esd_test, mean_std, validate_esd, zscore_detect, zscore_scores,
    EsdOutcome, MAD_SCALE,
};
pub use residual::{residual_mse, residuals, residuals_with, ResidualPanel};
pub use stats::t_quantile;

use crate::dataset::{format_timestamp, LabelSet};
use crate::error::{Error, Result};
use crate::metrics::ClassificationScores;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Zscore,
    Esd,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Zscore => "zscore",
            Method::Esd => "esd",
        }
    }
}

/// Signal name to detector.
pub type MethodMap = BTreeMap<String, Method>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub z_threshold: f64,
    pub esd_alpha: f64,
    /// `k_max` as a fraction of the residual series length.
    pub esd_kmax_frac: f64,
    pub robust: bool,
    pub method_map: MethodMap,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            z_threshold: 3.0,
            esd_alpha: 0.05,
            esd_kmax_frac: 0.10,
            robust: false,
            method_map: MethodMap::new(),
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.z_threshold > 0.0) {
            return Err(Error::Config("z_threshold must be > 0".into()));
        }
        if !(self.esd_alpha > 0.0 && self.esd_alpha < 1.0) {
            return Err(Error::Config("esd_alpha must lie in (0, 1)".into()));
        }
        if !(self.esd_kmax_frac > 0.0 && self.esd_kmax_frac <= 0.5) {
            return Err(Error::Config("esd_kmax_frac must lie in (0, 0.5]".into()));
        }
        Ok(())
    }

    pub fn k_max(&self, n: usize) -> usize {
        ((self.esd_kmax_frac * n as f64).floor() as usize).max(1)
    }

    pub fn with_methods(mut self, map: MethodMap) -> Self {
        self.method_map = map;
        self
    }

    /// Same method for every signal.
    pub fn uniform(mut self, signals: &[String], method: Method) -> Self {
        self.method_map = signals.iter().map(|s| (s.clone(), method)).collect();
        self
    }
}

/// Flags and scores for one residual series.
pub fn detect_series(
    series: &[f64],
    method: Method,
    cfg: &DetectorConfig,
) -> Result<(Vec<bool>, Vec<f64>)> {
    match method {
        Method::Zscore => {
            let scores = zscore_scores(series).unwrap_or_else(|| vec![0.0; series.len()]);
            let flags = scores.iter().map(|&z| z > cfg.z_threshold).collect();
            Ok((flags, scores))
        }
        Method::Esd => {
            let k_max = cfg.k_max(series.len());
            if series.len() <= k_max + 2 {
                warn!(
                    "series of {} points too short for ESD; no flags",
                    series.len()
                );
                return Ok((vec![false; series.len()], vec![0.0; series.len()]));
            }
            let out = esd_test(series, cfg.esd_alpha, k_max, cfg.robust)?;
            Ok((out.flags, out.scores))
        }
    }
}

/// Detector output over a residual panel.
#[derive(Debug, Clone, PartialEq)]
pub struct Detections {
    pub labels: LabelSet,
    /// Per cell `K x T`; zero where not evaluable.
    pub scores: Vec<Array2<f64>>,
    pub evaluable: Vec<Vec<bool>>,
    pub methods: Vec<Method>,
}

impl Detections {
    /// `cell_id,signal,timestamp,flag,score,method` for every evaluable point.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["cell_id", "signal", "timestamp", "flag", "score", "method"])?;
        let ts = self.labels.timestamps();
        for (c, id) in self.labels.cell_ids().iter().enumerate() {
            let flags = self.labels.cell(c);
            for (s, name) in self.labels.signal_names().iter().enumerate() {
                for (t, &stamp) in ts.iter().enumerate() {
                    if !self.evaluable[c][t] {
                        continue;
                    }
                    out.write_record([
                        id.as_str(),
                        name.as_str(),
                        &format_timestamp(stamp),
                        if flags[[s, t]] { "1" } else { "0" },
                        &format!("{}", self.scores[c][[s, t]]),
                        self.methods[s].as_str(),
                    ])?;
                }
            }
        }
        out.flush().map_err(|e| Error::io("<detections>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

fn methods_for(res: &ResidualPanel, cfg: &DetectorConfig) -> Result<Vec<Method>> {
    res.signal_names()
        .iter()
        .map(|s| {
            cfg.method_map
                .get(s)
                .copied()
                .ok_or_else(|| Error::Config(format!("no detection method for signal {s}")))
        })
        .collect()
}

/// Applies the mapped detector to every (cell, signal) residual series.
pub fn detect_panel(res: &ResidualPanel, cfg: &DetectorConfig) -> Result<Detections> {
    cfg.validate()?;
    let methods = methods_for(res, cfg)?;
    let k = res.num_signals();
    let t_len = res.timestamps().len();
    let mut flags = Vec::with_capacity(res.num_cells());
    let mut scores = Vec::with_capacity(res.num_cells());
    for c in 0..res.num_cells() {
        let steps = res.evaluable_steps(c);
        let mut f = Array2::from_elem((k, t_len), false);
        let mut sc = Array2::zeros((k, t_len));
        for (s, &method) in methods.iter().enumerate() {
            let (fl, scr) = detect_series(&res.series(c, s), method, cfg)?;
            for ((&t, flag), score) in steps.iter().zip(fl).zip(scr) {
                f[[s, t]] = flag;
                sc[[s, t]] = score;
            }
        }
        flags.push(f);
        scores.push(sc);
    }
    let labels = LabelSet::new(
        res.cell_ids().to_vec(),
        res.signal_names().to_vec(),
        res.timestamps().to_vec(),
        flags,
    )?;
    Ok(Detections {
        labels,
        scores,
        evaluable: res.evaluable().to_vec(),
        methods,
    })
}

fn check_layout(res: &ResidualPanel, labels: &LabelSet) -> Result<()> {
    if labels.cell_ids() != res.cell_ids()
        || labels.signal_names() != res.signal_names()
        || labels.timestamps() != res.timestamps()
    {
        return Err(Error::shape(
            "validation labels do not match residual layout".to_string(),
        ));
    }
    Ok(())
}

/// Per-signal F1 of both detectors, pooled across cells.
pub fn method_scores(
    res: &ResidualPanel,
    labels: &LabelSet,
    cfg: &DetectorConfig,
) -> Result<Vec<(ClassificationScores, ClassificationScores)>> {
    check_layout(res, labels)?;
    let mut out = vec![
        (
            ClassificationScores::default(),
            ClassificationScores::default()
        );
        res.num_signals()
    ];
    for c in 0..res.num_cells() {
        let steps = res.evaluable_steps(c);
        for (s, slot) in out.iter_mut().enumerate() {
            let series = res.series(c, s);
            let truth: Vec<bool> = steps.iter().map(|&t| labels.cell(c)[[s, t]]).collect();
            let (z, _) = detect_series(&series, Method::Zscore, cfg)?;
            let (e, _) = detect_series(&series, Method::Esd, cfg)?;
            slot.0 = slot.0.merge(&ClassificationScores::from_flags(&z, &truth));
            slot.1 = slot.1.merge(&ClassificationScores::from_flags(&e, &truth));
        }
    }
    Ok(out)
}

/// Picks, per signal, the detector with the higher validation F1 (ties to z-score).
pub fn calibrate_methods(
    res: &ResidualPanel,
    labels: &LabelSet,
    cfg: &DetectorConfig,
) -> Result<MethodMap> {
    cfg.validate()?;
    check_layout(res, labels)?;
    let positives: usize = (0..res.num_cells())
        .flat_map(|c| res.evaluable_steps(c).into_iter().map(move |t| (c, t)))
        .map(|(c, t)| labels.cell(c).column(t).iter().filter(|&&b| b).count())
        .sum();
    if positives == 0 {
        warn!("no labeled anomalies in the validation data; using z-score for every signal");
        return Ok(res
            .signal_names()
            .iter()
            .map(|s| (s.clone(), Method::Zscore))
            .collect());
    }
    let scores = method_scores(res, labels, cfg)?;
    Ok(res
        .signal_names()
        .iter()
        .zip(scores)
        .map(|(name, (z, e))| {
            (
                name.clone(),
                if e.f1 > z.f1 {
                    Method::Esd
                } else {
                    Method::Zscore
                },
            )
        })
        .collect())
}
