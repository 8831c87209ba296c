//! Artifact-writing commands. Every file except `metadata.json` is a pure
//! function of the config, so reruns are byte-identical.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::pipeline::{
    prepare_data, similarity_series, train_central, train_federated, CentralRun, EdgeMode,
};
use crate::dataset::LabelSet;
use crate::detect::{detect_panel, residuals, DetectorConfig};
use crate::error::{Error, Result};
use crate::fedsim::write_round_log;
use crate::metrics::{fl_vs_cl_report, prf1, ClReference, ClassificationScores, Report, ReportRow};
use crate::nn::{load_checkpoint, save_checkpoint, EpochMetrics, GConvLstm};

pub const REFERENCE_LABELS: &str = "reference_labels.csv";
pub const REFERENCE_META: &str = "cl_reference.json";
pub const CENTRAL_REPORT: &str = "central_report.csv";
pub const FED_REPORT: &str = "fed_report.csv";

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Serialize)]
struct Metadata<'a> {
    generated_at: String,
    dataset: u8,
    panel_fingerprint: String,
    labeled_points: usize,
    config: &'a ExperimentConfig,
}

/// Writes `panel.csv`, `labels.csv`, `cells.json`, `sw_graph.json` and
/// `metadata.json` into `out`. Returns the written paths.
pub fn cmd_generate(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let data = prepare_data(cfg)?;
    ensure_dir(out)?;
    let paths: Vec<PathBuf> = [
        "panel.csv",
        "labels.csv",
        "cells.json",
        "sw_graph.json",
        "metadata.json",
    ]
    .iter()
    .map(|f| out.join(f))
    .collect();
    data.raw.save_csv(&paths[0])?;
    data.labels.save_csv(&paths[1])?;
    write_text(&paths[2], &serde_json::to_string_pretty(&data.cells)?)?;
    write_text(&paths[3], &data.sw_graph.to_json()?)?;
    let meta = Metadata {
        generated_at: chrono::Utc::now().to_rfc3339(),
        dataset: data.dataset,
        panel_fingerprint: data.raw.fingerprint(),
        labeled_points: data.labels.count(),
        config: cfg,
    };
    write_text(&paths[4], &serde_json::to_string_pretty(&meta)?)?;
    info!(
        "wrote {} labeled points to {}",
        data.labels.count(),
        out.display()
    );
    Ok(paths)
}

/// Reference stored by `train-central` for federated scoring.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceMeta {
    pub panel_fingerprint: String,
    pub loss: f64,
    pub detector: DetectorConfig,
}

fn write_history(path: &Path, history: &[EpochMetrics]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for h in history {
        w.serialize(h)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_report(out: &Path, stem: &str, report: &Report) -> Result<()> {
    let csv_path = out.join(stem);
    report.write_csv(create(&csv_path)?)?;
    write_text(&csv_path.with_extension("json"), &report.to_json()?)
}

fn save_run(out: &Path, run: &CentralRun) -> Result<()> {
    let tag = run.edges.label().to_lowercase();
    save_checkpoint(out.join(&tag), run.model.config(), run.model.weights())?;
    write_history(&out.join(format!("history_{tag}.csv")), &run.history)?;
    run.detections
        .save_csv(out.join(format!("detections_{tag}.csv")))
}

/// Trains the centralized model (`Graph`: with the baseline too when the
/// config asks for it; `None`: the baseline only), detects, and stores the
/// reference labels for `train-fed`.
pub fn cmd_train_central(
    cfg: &ExperimentConfig,
    out: &Path,
    edges: EdgeMode,
) -> Result<Vec<CentralRun>> {
    let data = prepare_data(cfg)?;
    ensure_dir(out)?;
    let mut modes = vec![edges];
    if edges == EdgeMode::Graph && cfg.model.baseline {
        modes.push(EdgeMode::None);
    }
    let mut runs = Vec::new();
    for mode in modes {
        let run = train_central(cfg, &data, mode)?;
        save_run(out, &run)?;
        runs.push(run);
    }
    let primary = &runs[0];
    let reference = primary.reference(&data);
    reference.labels.save_csv(out.join(REFERENCE_LABELS))?;
    let meta = ReferenceMeta {
        panel_fingerprint: reference.panel_fingerprint,
        loss: reference.loss,
        detector: primary.detector.clone(),
    };
    write_text(
        &out.join(REFERENCE_META),
        &serde_json::to_string_pretty(&meta)?,
    )?;
    let report = Report {
        rows: runs.iter().map(|r| r.report_row(data.dataset)).collect(),
    };
    write_report(out, CENTRAL_REPORT, &report)?;
    Ok(runs)
}

pub fn load_reference(out: &Path) -> Result<(ClReference, DetectorConfig)> {
    let meta_path = out.join(REFERENCE_META);
    let labels_path = out.join(REFERENCE_LABELS);
    if !meta_path.exists() || !labels_path.exists() {
        return Err(Error::Config(format!(
            "no centralized reference in {}; run train-central first",
            out.display()
        )));
    }
    let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: ReferenceMeta = serde_json::from_str(&text)?;
    let reference = ClReference {
        panel_fingerprint: meta.panel_fingerprint,
        labels: LabelSet::load_csv(&labels_path)?,
        loss: meta.loss,
    };
    Ok((reference, meta.detector))
}

fn write_similarity(path: &Path, header: &[String], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let mut head = vec!["round".to_string()];
    head.extend(header.iter().cloned());
    w.write_record(&head)?;
    for (i, row) in rows.iter().enumerate() {
        let mut rec = vec![(i + 1).to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Runs every configured strategy and schedule against the stored reference.
pub fn cmd_train_fed(cfg: &ExperimentConfig, out: &Path) -> Result<Report> {
    let fl = cfg
        .fl
        .as_ref()
        .ok_or_else(|| Error::Config("config has no fl section".into()))?;
    let runs = fl.runs()?;
    let (reference, detector) = load_reference(out)?;
    let data = prepare_data(cfg)?;
    let mut outcomes = Vec::with_capacity(runs.len());
    for run_cfg in &runs {
        let run = train_federated(cfg, &data, run_cfg, &reference, &detector)?;
        let name = run_cfg.name();
        write_round_log(
            &run.records,
            create(&out.join(format!("rounds_{name}.ndjson")))?,
        )?;
        let (header, rows) = similarity_series(&run.records);
        write_similarity(&out.join(format!("similarity_{name}.csv")), &header, &rows)?;
        outcomes.push(run.outcome);
    }
    let report = fl_vs_cl_report(&outcomes, &reference, data.dataset)?;
    write_report(out, FED_REPORT, &report)?;
    Ok(report)
}

/// Detections of a stored checkpoint on the configured panel.
pub fn cmd_detect(
    cfg: &ExperimentConfig,
    out: &Path,
    checkpoint: &Path,
    edges: EdgeMode,
) -> Result<PathBuf> {
    let data = prepare_data(cfg)?;
    let (model_cfg, weights) = load_checkpoint(checkpoint)?;
    let model = GConvLstm::from_weights(model_cfg, weights)?;
    let graph = match edges {
        EdgeMode::Graph => data.sw_graph.clone(),
        EdgeMode::None => data.sw_graph.without_edges(),
    };
    let res = residuals(&model, &data.panel, &graph, cfg.model.train.batch_size)?;
    let detector = match load_reference(out) {
        Ok((_, d)) => d,
        Err(_) => super::pipeline::resolve_detector(cfg, &res, &data.labels)?,
    };
    let det = detect_panel(&res, &detector)?;
    ensure_dir(out)?;
    let path = out.join("detections.csv");
    det.save_csv(&path)?;
    det.labels.save_csv(out.join("predicted_labels.csv"))?;
    Ok(path)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub scores: ClassificationScores,
    pub row: ReportRow,
}

/// Scores a predicted label file against a truth label file.
pub fn cmd_evaluate(pred: &Path, truth: &Path, dataset: u8) -> Result<Evaluation> {
    let p = LabelSet::load_csv(pred)?;
    let t = LabelSet::load_csv(truth)?;
    let scores = prf1(&p, &t)?;
    let row = ReportRow {
        strategy: pred
            .file_stem()
            .map_or_else(|| "prediction".into(), |s| s.to_string_lossy().into_owned()),
        dataset,
        loss: f64::NAN,
        loss_ratio: f64::NAN,
        precision: scores.precision,
        recall: scores.recall,
        f1: scores.f1,
        footprint: 0.0,
    };
    Ok(Evaluation { scores, row })
}

fn read_report(path: &Path) -> Result<Vec<ReportRow>> {
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .map(|row| row.map_err(Error::from))
        .collect()
}

/// Merges the centralized and federated reports found in `out`.
pub fn cmd_report(out: &Path) -> Result<Report> {
    let mut rows = Vec::new();
    for name in [CENTRAL_REPORT, FED_REPORT] {
        let path = out.join(name);
        if path.exists() {
            rows.extend(read_report(&path)?);
        }
    }
    if rows.is_empty() {
        return Err(Error::Config(format!("no reports in {}", out.display())));
    }
    let report = Report { rows };
    write_report(out, "report.csv", &report)?;
    Ok(report)
}
