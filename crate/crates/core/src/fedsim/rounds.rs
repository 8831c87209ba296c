use std::io::Write;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::aggregate::{fedavg_aggregate, fedgraph_aggregate, similarity_matrix, Aggregation};
use super::client::{local_train, ClientState, ClientUpdate, LocalMetrics};
use super::{FlConfig, Strategy};
use crate::dataset::LabelSet;
use crate::error::{Error, Result};
use crate::nn::TrainConfig;

/// `I * |parameters| / |data points|`; zero rounds cost nothing.
pub fn comm_footprint(rounds: usize, n_params: usize, n_data_points: usize) -> Result<f64> {
    if n_data_points == 0 {
        return Err(Error::InvalidArgument(
            "footprint needs at least one data point".into(),
        ));
    }
    Ok(rounds as f64 * n_params as f64 / n_data_points as f64)
}

/// Per-(round, client) training seed.
pub fn local_seed(seed: u64, round: usize, client: usize) -> u64 {
    let mut z = seed
        .wrapping_add((round as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add((client as u64).wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientRoundMetrics {
    pub cell_id: String,
    pub failed: bool,
    pub loss: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// 1-based round index.
    pub round: usize,
    pub strategy: String,
    pub clients: Vec<ClientRoundMetrics>,
    /// Raw cosine similarities between post-training local models.
    pub similarity: Vec<Vec<f64>>,
    pub footprint: f64,
    #[serde(skip)]
    pub local_weights: Option<Vec<Vec<f64>>>,
    #[serde(skip)]
    pub personalized: Option<Vec<Vec<f64>>>,
    #[serde(skip)]
    pub global: Vec<f64>,
}

impl RoundRecord {
    /// Mean loss over clients that completed the round.
    pub fn mean_loss(&self) -> f64 {
        let losses: Vec<f64> = self.clients.iter().filter_map(|c| c.loss).collect();
        losses.iter().sum::<f64>() / losses.len().max(1) as f64
    }
}

/// Server step: combines client updates according to the strategy.
pub fn aggregate_updates(
    updates: &[ClientUpdate],
    strategy: Strategy,
    clamp: bool,
    mp_steps: usize,
) -> Result<Aggregation> {
    let weights: Vec<Vec<f64>> = updates.iter().map(|u| u.weights.clone()).collect();
    if strategy.is_graph() {
        fedgraph_aggregate(&weights, clamp, mp_steps)
    } else {
        fedavg_aggregate(&weights)
    }
}

/// Runs `cfg.rounds` rounds of local training and aggregation.
///
/// Clients start from `init`. A client whose training diverges is left out of
/// that round's aggregation and receives the global model.
pub fn run_rounds(
    clients: &mut [ClientState],
    cfg: &FlConfig,
    train_cfg: &TrainConfig,
    init: &[f64],
) -> Result<Vec<RoundRecord>> {
    cfg.validate()?;
    train_cfg.validate()?;
    if clients.is_empty() {
        return Err(Error::InvalidArgument("no clients".into()));
    }
    for c in clients.iter_mut() {
        c.incoming = init.to_vec();
        c.weights = init.to_vec();
    }
    let n_points: usize = clients.iter().map(ClientState::num_data_points).sum();
    let n = clients.len();
    let mode = cfg.strategy.loss_mode();
    let mut records = Vec::with_capacity(cfg.rounds);
    for round in 0..cfg.rounds {
        let mut updates = Vec::with_capacity(n);
        let mut metrics: Vec<Option<LocalMetrics>> = vec![None; n];
        for (idx, client) in clients.iter_mut().enumerate() {
            let incoming = client.incoming.clone();
            let seed = local_seed(cfg.seed, round, idx);
            match local_train(client, &incoming, cfg.local_epochs, mode, train_cfg, seed) {
                Ok(u) => {
                    metrics[idx] = Some(u.metrics);
                    updates.push(u);
                }
                Err(Error::Divergence(msg)) => {
                    warn!(
                        "round {}: client {} dropped: {msg}",
                        round + 1,
                        client.cell_id()
                    );
                }
                Err(e) => return Err(e),
            }
        }
        if updates.is_empty() {
            return Err(Error::Divergence(format!(
                "every client diverged in round {}",
                round + 1
            )));
        }
        let agg = aggregate_updates(&updates, cfg.strategy, cfg.sim_clamp, cfg.mp_steps)?;
        let sims = similarity_matrix(
            &updates
                .iter()
                .map(|u| u.weights.clone())
                .collect::<Vec<_>>(),
        );
        let mut similarity = vec![vec![f64::NAN; n]; n];
        for (a, ua) in updates.iter().enumerate() {
            for (b, ub) in updates.iter().enumerate() {
                similarity[ua.client][ub.client] = sims[[a, b]];
            }
        }
        for client in clients.iter_mut() {
            client.incoming = agg.global.clone();
        }
        for (u, w) in updates.iter().zip(&agg.personalized) {
            clients[u.client].incoming = w.clone();
        }
        let footprint = comm_footprint(round + 1, init.len(), n_points)?;
        let record = RoundRecord {
            round: round + 1,
            strategy: cfg.name(),
            clients: clients
                .iter()
                .zip(&metrics)
                .map(|(c, m)| ClientRoundMetrics {
                    cell_id: c.cell_id().to_string(),
                    failed: m.is_none(),
                    loss: m.map(|m| m.loss),
                    precision: m.and_then(|m| m.precision),
                    recall: m.and_then(|m| m.recall),
                    f1: m.and_then(|m| m.f1),
                })
                .collect(),
            similarity,
            footprint,
            local_weights: cfg
                .record_weights
                .then(|| clients.iter().map(|c| c.weights.clone()).collect()),
            personalized: cfg
                .record_weights
                .then(|| clients.iter().map(|c| c.incoming.clone()).collect()),
            global: agg.global,
        };
        info!(
            "{} round {}: mean local loss {:.5}",
            record.strategy,
            record.round,
            record.mean_loss()
        );
        records.push(record);
    }
    Ok(records)
}

/// Newline-delimited JSON, one object per round.
pub fn write_round_log<W: Write>(records: &[RoundRecord], mut w: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")
            .map_err(|e| Error::io("<round log>", e))?;
    }
    Ok(())
}

/// Scores of the final personalized and global models on every client.
#[derive(Debug, Clone, PartialEq)]
pub struct FinalEvaluation {
    pub personalized: Vec<LocalMetrics>,
    pub central: Vec<LocalMetrics>,
    pub personalized_labels: Option<LabelSet>,
    pub central_labels: Option<LabelSet>,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

impl FinalEvaluation {
    /// Evaluates `ω*[j]` and the global model on each client's data.
    pub fn run(clients: &[ClientState], global: &[f64]) -> Result<Self> {
        let mut personalized = Vec::with_capacity(clients.len());
        let mut central = Vec::with_capacity(clients.len());
        let mut p_labels = Vec::new();
        let mut c_labels = Vec::new();
        for c in clients {
            let (pm, pl) = c.evaluate(&c.incoming)?;
            let (cm, cl) = c.evaluate(global)?;
            personalized.push(pm);
            central.push(cm);
            p_labels.extend(pl);
            c_labels.extend(cl);
        }
        let concat = |parts: Vec<LabelSet>| -> Result<Option<LabelSet>> {
            if parts.len() == clients.len() {
                Ok(Some(LabelSet::concat(&parts)?))
            } else {
                Ok(None)
            }
        };
        Ok(Self {
            personalized,
            central,
            personalized_labels: concat(p_labels)?,
            central_labels: concat(c_labels)?,
        })
    }

    pub fn personalized_loss(&self) -> f64 {
        mean(self.personalized.iter().map(|m| m.loss))
    }

    pub fn central_loss(&self) -> f64 {
        mean(self.central.iter().map(|m| m.loss))
    }
}
