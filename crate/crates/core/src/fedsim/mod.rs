//! Single-process simulation of federated training across cells.

mod aggregate;
mod client;
mod rounds;

use serde::{Deserialize, Serialize};

pub use aggregate::{
    cosine_sim, fedavg_aggregate, fedgraph_aggregate, mean_weights, relation_matrix,
    similarity_matrix, Aggregation,
};
pub use client::{
    local_train, partition_clients, ClientEval, ClientState, ClientUpdate, LocalMetrics,
};
pub use rounds::{
    aggregate_updates, comm_footprint, local_seed, run_rounds, write_round_log, ClientRoundMetrics,
    FinalEvaluation, RoundRecord,
};

use crate::error::{Error, Result};
use crate::nn::LossMode;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Strategy {
    Fedavg,
    FedavgReg { lambda: f64 },
    Fedgraph,
    FedgraphReg { lambda: f64 },
}

impl Strategy {
    pub fn label(&self) -> &'static str {
        match self {
            Strategy::Fedavg => "FedAvg",
            Strategy::FedavgReg { .. } => "FedAvgReg",
            Strategy::Fedgraph => "FedGraph",
            Strategy::FedgraphReg { .. } => "FedGraphReg",
        }
    }

    pub fn loss_mode(&self) -> LossMode {
        match *self {
            Strategy::Fedavg | Strategy::Fedgraph => LossMode::Mse,
            Strategy::FedavgReg { lambda } | Strategy::FedgraphReg { lambda } => {
                LossMode::MseReg { lambda }
            }
        }
    }

    pub fn is_graph(&self) -> bool {
        matches!(self, Strategy::Fedgraph | Strategy::FedgraphReg { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FlConfig {
    pub strategy: Strategy,
    pub rounds: usize,
    pub local_epochs: usize,
    pub seed: u64,
    /// Clamp negative cosine similarities to 0.
    pub sim_clamp: bool,
    pub mp_steps: usize,
    /// Keep per-client weight vectors in every round record.
    pub record_weights: bool,
}

impl Default for FlConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Fedavg,
            rounds: 5,
            local_epochs: 20,
            seed: 0,
            sim_clamp: true,
            mp_steps: 1,
            record_weights: true,
        }
    }
}

impl FlConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 || self.local_epochs == 0 {
            return Err(Error::Config(
                "rounds and local_epochs must be at least 1".into(),
            ));
        }
        if self.mp_steps == 0 {
            return Err(Error::Config("mp_steps must be at least 1".into()));
        }
        if !(self.strategy.loss_mode().lambda() >= 0.0) {
            return Err(Error::Config("regularization factor must be >= 0".into()));
        }
        Ok(())
    }

    pub fn total_epochs(&self) -> usize {
        self.rounds * self.local_epochs
    }

    /// `"<Strategy>-<I>x<E>"`, e.g. `FedGraph-20x5`.
    pub fn name(&self) -> String {
        format!(
            "{}-{}x{}",
            self.strategy.label(),
            self.rounds,
            self.local_epochs
        )
    }

    /// The 5x20, 10x10 and 20x5 schedules for a strategy.
    pub fn presets(strategy: Strategy, seed: u64) -> Vec<FlConfig> {
        [(5, 20), (10, 10), (20, 5)]
            .into_iter()
            .map(|(rounds, local_epochs)| FlConfig {
                strategy,
                rounds,
                local_epochs,
                seed,
                ..FlConfig::default()
            })
            .collect()
    }

    /// Same schedules with the local epochs scaled to a different budget.
    pub fn presets_with_budget(
        strategy: Strategy,
        seed: u64,
        budget: usize,
    ) -> Result<Vec<FlConfig>> {
        [5usize, 10, 20]
            .into_iter()
            .map(|rounds| {
                if !budget.is_multiple_of(rounds) || budget < rounds {
                    return Err(Error::Config(format!(
                        "budget {budget} not divisible into {rounds} rounds"
                    )));
                }
                Ok(FlConfig {
                    strategy,
                    rounds,
                    local_epochs: budget / rounds,
                    seed,
                    ..FlConfig::default()
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_names_and_budget() {
        let p = FlConfig::presets(Strategy::Fedgraph, 1);
        let names: Vec<_> = p.iter().map(FlConfig::name).collect();
        assert_eq!(names, ["FedGraph-5x20", "FedGraph-10x10", "FedGraph-20x5"]);
        assert!(p.iter().all(|c| c.total_epochs() == 100));
        let r = FlConfig::presets(Strategy::FedavgReg { lambda: 0.1 }, 0);
        assert_eq!(r[0].name(), "FedAvgReg-5x20");
        assert!(FlConfig::presets_with_budget(Strategy::Fedavg, 0, 30).is_err());
        assert!(FlConfig::presets_with_budget(Strategy::Fedavg, 0, 40)
            .unwrap()
            .iter()
            .all(|c| c.total_epochs() == 40));
    }

    #[test]
    fn config_round_trip() {
        let c = FlConfig {
            strategy: Strategy::FedgraphReg { lambda: 0.5 },
            ..FlConfig::default()
        };
        let back: FlConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }
}
