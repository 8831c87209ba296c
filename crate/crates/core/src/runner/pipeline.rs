use std::fs;

use log::info;

use super::config::{DataSource, ExperimentConfig};
use crate::dataset::synth::signal_names;
use crate::dataset::{
    annotate, generate_synthetic_panel, robust_scale, synthetic_cells, training_batches,
    AnnotationReport, LabelSet, ScalerParams, TimeSeriesPanel,
};
use crate::detect::{
    calibrate_methods, detect_panel, residuals, Detections, DetectorConfig, Method, ResidualPanel,
};
use crate::error::{Error, Result};
use crate::fedsim::{
    partition_clients, run_rounds, ClientEval, FinalEvaluation, FlConfig, RoundRecord,
};
use crate::graph::{area_split, Area, CellMeta, NwGraph, RelationRule, SwGraph};
use crate::metrics::{prf1, ClReference, ClassificationScores, FlOutcome, ReportRow};
use crate::nn::{evaluate_mse, train, EpochMetrics, GConvLstm};

/// Seed offset for fault injection, so it does not replay the generator stream.
const ANNOTATE_SALT: u64 = 0xa11_0c8e;

/// Panel ready for training: annotated, then robust-scaled.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub dataset: u8,
    pub cells: Vec<CellMeta>,
    pub sw_graph: SwGraph,
    /// Annotated panel in raw units.
    pub raw: TimeSeriesPanel,
    pub panel: TimeSeriesPanel,
    pub scaler: ScalerParams,
    pub labels: LabelSet,
    pub report: Option<AnnotationReport>,
}

/// Execution graph from the configured file, else a forward DAG.
pub fn load_sw_graph(cfg: &ExperimentConfig, signals: &[String]) -> Result<SwGraph> {
    match &cfg.data.sw_graph {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            let g = SwGraph::from_json(&text)?;
            if g.node_names() != signals {
                return Err(Error::Config(format!(
                    "execution graph nodes {:?} do not match panel signals",
                    g.node_names()
                )));
            }
            Ok(g)
        }
        None => SwGraph::forward_dag(signals.to_vec(), cfg.data.sw_fanout),
    }
}

/// Area assignment for cells that come without metadata.
fn default_cells(ids: &[String]) -> Vec<CellMeta> {
    let split = area_split(ids.len());
    let areas = Area::ALL
        .iter()
        .zip(split)
        .flat_map(|(&a, n)| std::iter::repeat_n(a, n));
    ids.iter()
        .zip(areas)
        .map(|(id, area)| CellMeta {
            id: id.clone(),
            area,
            position: None,
        })
        .collect()
}

pub fn prepare_data(cfg: &ExperimentConfig) -> Result<PreparedData> {
    let ann = cfg.annotation.config()?;
    let seed = cfg.data.seed;
    let (panel, cells, sw_graph, given_labels) = match &cfg.data.source {
        DataSource::Generate => {
            let g = load_sw_graph(cfg, &signal_names(cfg.data.signals))?;
            let cells = synthetic_cells(cfg.data.n_cells, seed);
            let synth = generate_synthetic_panel(
                cfg.data.n_cells,
                &g,
                cfg.data.length,
                seed,
                &cfg.data.profile,
            )?;
            (synth.panel, cells, g, None)
        }
        DataSource::Csv {
            panel,
            labels,
            cells,
        } => {
            let p = TimeSeriesPanel::load_csv(panel)?;
            let g = load_sw_graph(cfg, p.signal_names())?;
            let meta = match cells {
                Some(path) => {
                    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                    serde_json::from_str::<Vec<CellMeta>>(&text)?
                }
                None => default_cells(p.cell_ids()),
            };
            let l = labels.as_ref().map(LabelSet::load_csv).transpose()?;
            (p, meta, g, l)
        }
    };
    let (raw, labels, report) = match given_labels {
        Some(l) => {
            if !l.same_layout(&LabelSet::empty_like(&panel)) {
                return Err(Error::shape(
                    "label file does not match the panel".to_string(),
                ));
            }
            (panel, l, None)
        }
        None => {
            let a = annotate(&panel, &ann, &sw_graph, &cells, seed ^ ANNOTATE_SALT)?;
            (a.panel, a.labels, Some(a.report))
        }
    };
    let (scaled, scaler) = robust_scale(&raw)?;
    info!(
        "dataset {}: {} cells x {} signals x {} steps, {} labeled points",
        cfg.annotation.dataset,
        scaled.num_cells(),
        scaled.num_signals(),
        scaled.len(),
        labels.count()
    );
    Ok(PreparedData {
        dataset: cfg.annotation.dataset,
        cells,
        sw_graph,
        raw,
        panel: scaled,
        scaler,
        labels,
        report,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeMode {
    Graph,
    /// Execution graph with every edge removed.
    None,
}

impl EdgeMode {
    pub fn label(self) -> &'static str {
        match self {
            EdgeMode::Graph => "GNN",
            EdgeMode::None => "Baseline",
        }
    }
}

/// Training and evaluation panels, with truth labels for the latter.
fn split_panels(
    cfg: &ExperimentConfig,
    data: &PreparedData,
) -> Result<(TimeSeriesPanel, TimeSeriesPanel, LabelSet)> {
    if !cfg.model.holdout {
        return Ok((data.panel.clone(), data.panel.clone(), data.labels.clone()));
    }
    let t = data.panel.len();
    let history = cfg.model.model.history;
    let split = ((1.0 - cfg.model.holdout_frac) * t as f64).round() as usize;
    if split < history + cfg.model.model.horizon || split >= t {
        return Err(Error::Config(format!(
            "holdout split at {split} of {t} leaves no windows"
        )));
    }
    // The evaluation slice starts `history` early; those steps are not scored.
    let eval = split - history..t;
    Ok((
        data.panel.slice_time(0..split)?,
        data.panel.slice_time(eval.clone())?,
        data.labels.slice_time(eval)?,
    ))
}

#[derive(Debug, Clone)]
pub struct CentralRun {
    pub edges: EdgeMode,
    pub model: GConvLstm,
    pub history: Vec<EpochMetrics>,
    /// MSE over all training windows after the last epoch.
    pub train_mse: f64,
    pub residuals: ResidualPanel,
    pub detector: DetectorConfig,
    pub detections: Detections,
    /// Detections against the injected labels at evaluable points.
    pub scores: ClassificationScores,
}

impl CentralRun {
    pub fn report_row(&self, dataset: u8) -> ReportRow {
        ReportRow {
            strategy: self.edges.label().to_string(),
            dataset,
            loss: self.train_mse,
            loss_ratio: 1.0,
            precision: self.scores.precision,
            recall: self.scores.recall,
            f1: self.scores.f1,
            footprint: 0.0,
        }
    }
}

/// Detector with a method for every signal: the configured map, or one
/// calibrated on `labels`.
pub fn resolve_detector(
    cfg: &ExperimentConfig,
    res: &ResidualPanel,
    labels: &LabelSet,
) -> Result<DetectorConfig> {
    let det = cfg.detect.detector.clone();
    if !det.method_map.is_empty() {
        return Ok(det);
    }
    if cfg.detect.calibrate {
        let map = calibrate_methods(res, labels, &det)?;
        Ok(det.with_methods(map))
    } else {
        Ok(det.uniform(res.signal_names(), Method::Zscore))
    }
}

pub fn train_central(
    cfg: &ExperimentConfig,
    data: &PreparedData,
    edges: EdgeMode,
) -> Result<CentralRun> {
    let graph = match edges {
        EdgeMode::Graph => data.sw_graph.clone(),
        EdgeMode::None => data.sw_graph.without_edges(),
    };
    let m = &cfg.model;
    let (train_panel, eval_panel, truth) = split_panels(cfg, data)?;
    let mut model = GConvLstm::new(m.model, m.train.seed)?;
    let batches = training_batches(
        &train_panel,
        m.model.history,
        m.model.horizon,
        m.train_stride,
        m.train.batch_size,
        &graph,
        m.train.seed,
    )?;
    info!(
        "{}: {} parameters, {} training batches",
        edges.label(),
        model.num_params(),
        batches.len()
    );
    let history = train(&mut model, &batches, &m.train, None)?;
    let train_mse = evaluate_mse(&model, &batches)?;
    info!("{}: final training MSE {train_mse:.5}", edges.label());
    let res = residuals(&model, &eval_panel, &graph, m.train.batch_size)?;
    let detector = resolve_detector(cfg, &res, &truth)?;
    let detections = detect_panel(&res, &detector)?;
    let scores = prf1(&detections.labels, &truth.masked(res.evaluable())?)?;
    Ok(CentralRun {
        edges,
        model,
        history,
        train_mse,
        residuals: res,
        detector,
        detections,
        scores,
    })
}

impl CentralRun {
    /// Detections of this run as the reference for federated scoring.
    pub fn reference(&self, data: &PreparedData) -> ClReference {
        ClReference {
            panel_fingerprint: data.panel.fingerprint(),
            labels: self.detections.labels.clone(),
            loss: self.train_mse,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FedRun {
    pub config: FlConfig,
    pub records: Vec<RoundRecord>,
    pub evaluation: FinalEvaluation,
    pub outcome: FlOutcome,
}

impl FedRun {
    /// Mean over clients of the personalized models' local MSE.
    pub fn final_loss(&self) -> f64 {
        self.evaluation.personalized_loss()
    }
}

/// Simulates one federated run, one client per cell, scored against the
/// centralized reference with the centralized detector.
pub fn train_federated(
    cfg: &ExperimentConfig,
    data: &PreparedData,
    fl: &FlConfig,
    reference: &ClReference,
    detector: &DetectorConfig,
) -> Result<FedRun> {
    if reference.panel_fingerprint != data.panel.fingerprint() {
        return Err(Error::Data(
            "reference labels were produced on a different panel".into(),
        ));
    }
    let m = &cfg.model;
    let nw = NwGraph::build(data.cells.clone(), RelationRule::AreaComplete)?;
    let init = GConvLstm::new(m.model, fl.seed)?.flat().to_vec();
    let mut clients = partition_clients(
        &data.panel,
        &nw,
        &data.sw_graph,
        m.model,
        m.train.batch_size,
        m.train_stride,
        &init,
    )?;
    for (c, client) in clients.iter_mut().enumerate() {
        client.set_eval(ClientEval {
            reference: reference.labels.select_cells(&[c]),
            detector: detector.clone(),
        })?;
    }
    let records = run_rounds(&mut clients, fl, &m.train, &init)?;
    let last = records.last().expect("at least one round");
    let evaluation = FinalEvaluation::run(&clients, &last.global)?;
    let detections = evaluation
        .personalized_labels
        .clone()
        .ok_or_else(|| Error::Data("clients returned no detections".into()))?;
    let outcome = FlOutcome {
        strategy: fl.name(),
        panel_fingerprint: data.panel.fingerprint(),
        detections,
        loss: evaluation.personalized_loss(),
        footprint: last.footprint,
    };
    info!("{}: final local MSE {:.5}", outcome.strategy, outcome.loss);
    Ok(FedRun {
        config: *fl,
        records,
        evaluation,
        outcome,
    })
}

/// One row per round, one column per client pair `(j, k)` with `j < k`.
pub fn similarity_series(records: &[RoundRecord]) -> (Vec<String>, Vec<Vec<f64>>) {
    let n = records.first().map_or(0, |r| r.similarity.len());
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|j| (j + 1..n).map(move |k| (j, k)))
        .collect();
    let names = records.first().map(|r| {
        r.clients
            .iter()
            .map(|c| c.cell_id.clone())
            .collect::<Vec<_>>()
    });
    let header = pairs
        .iter()
        .map(|&(j, k)| match &names {
            Some(ids) => format!("{}:{}", ids[j], ids[k]),
            None => format!("{j}:{k}"),
        })
        .collect();
    let rows = records
        .iter()
        .map(|r| pairs.iter().map(|&(j, k)| r.similarity[j][k]).collect())
        .collect();
    (header, rows)
}
