//! FedAvg over a pluggable transport.
//!
//! The server owns the round loop: it broadcasts the global parameters,
//! every client runs exactly one local epoch and answers, and the server
//! aggregates once all answers are in. Results depend only on the plan.

mod aggregate;
mod inproc;
mod tcp;
mod wire;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    train_epoch, Dataset, ModelError, ModelParams, ModelSpec, Optimizer, OptimizerState,
    TrainConfig,
};

pub use aggregate::aggregate_fedavg;
pub use inproc::InProcessTransport;
pub use tcp::{run_tcp_client, TcpServerTransport, DEFAULT_IDLE_TIMEOUT};
pub use wire::{
    decode_params_message, encode_params_message, ParamsMessage, MAX_PAYLOAD, WIRE_VERSION,
};

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("malformed length prefix: {0}")]
    MalformedLength(String),
    #[error("unknown wire version {0:#04x}")]
    UnknownVersion(u8),
    #[error("truncated payload: expected {expected} bytes, got {actual}")]
    TruncatedPayload { expected: usize, actual: usize },
    #[error("message encoding: {0}")]
    Encoding(String),
    #[error("no client updates to aggregate")]
    EmptyUpdates,
    #[error("incompatible update from client {client_id}: {message}")]
    Incompatible { client_id: u32, message: String },
    #[error("invalid federation plan: {0}")]
    InvalidPlan(String),
    #[error("round {round} failed at client {client_id}: {message}")]
    ClientFailure {
        round: usize,
        client_id: u32,
        message: String,
    },
    #[error("client {client_id} unreachable for longer than {timeout_ms} ms")]
    Timeout { client_id: u32, timeout_ms: u128 },
    #[error("transport i/o: {0}")]
    Io(String),
}

/// One federated participant and its private training partition.
#[derive(Clone, Debug)]
pub struct ClientSite {
    pub client_id: u32,
    pub sample_count: usize,
    pub local_data: Dataset,
    pub local_seed: u64,
}

impl ClientSite {
    pub fn new(client_id: u32, local_data: Dataset, local_seed: u64) -> Self {
        ClientSite {
            client_id,
            sample_count: local_data.len(),
            local_data,
            local_seed,
        }
    }
}

/// A client's parameters after one local epoch, with its mean training loss.
#[derive(Clone, Debug, PartialEq)]
pub struct ClientUpdate {
    pub client_id: u32,
    pub sample_count: usize,
    pub params: ModelParams,
    pub loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round_index: usize,
    pub client_losses: BTreeMap<u32, f64>,
    /// SHA-256 of the aggregated parameters.
    pub checksum: String,
}

/// Everything the server needs to run a federation. The global model starts
/// from `model.init_params(dim, train_cfg.intercept_init, train_cfg.seed)`;
/// the learning rate of round `r` is `train_cfg.schedule.value(r)`.
#[derive(Clone, Debug)]
pub struct FederationPlan {
    pub clients: Vec<ClientSite>,
    pub rounds: usize,
    pub train_cfg: TrainConfig,
    pub model: ModelSpec,
}

impl FederationPlan {
    pub fn input_dim(&self) -> usize {
        self.clients.first().map_or(0, |c| c.local_data.dim())
    }

    pub fn client_ids(&self) -> Vec<u32> {
        self.clients.iter().map(|c| c.client_id).collect()
    }

    pub fn initial_params(&self) -> ModelParams {
        self.model.init_params(
            self.input_dim(),
            self.train_cfg.intercept_init,
            self.train_cfg.seed,
        )
    }

    pub fn validate(&self) -> Result<(), ProtocolError> {
        let bad = |m: String| Err(ProtocolError::InvalidPlan(m));
        if self.rounds == 0 {
            return bad("rounds must be positive".into());
        }
        if self.clients.is_empty() {
            return bad("no clients".into());
        }
        self.train_cfg
            .validate()
            .map_err(|e| ProtocolError::InvalidPlan(e.to_string()))?;
        if self.train_cfg.optimizer != Optimizer::Sgd {
            return bad("federated clients train with plain SGD".into());
        }
        if self.train_cfg.schedule.horizon() < self.rounds {
            return bad(format!(
                "schedule horizon {} shorter than {} rounds",
                self.train_cfg.schedule.horizon(),
                self.rounds
            ));
        }
        let dim = self.input_dim();
        let mut seen = BTreeSet::new();
        for c in &self.clients {
            if !seen.insert(c.client_id) {
                return bad(format!("duplicate client id {}", c.client_id));
            }
            if c.sample_count == 0 || c.sample_count != c.local_data.len() {
                return bad(format!(
                    "client {} declares {} samples but holds {}",
                    c.client_id,
                    c.sample_count,
                    c.local_data.len()
                ));
            }
            if c.local_data.dim() != dim {
                return bad(format!(
                    "client {} has {} features, expected {dim}",
                    c.client_id,
                    c.local_data.dim()
                ));
            }
        }
        Ok(())
    }
}

/// One local epoch on `client`'s data starting from `global`, at the
/// learning rate of schedule step `round`.
pub fn local_epoch(
    client: &ClientSite,
    global: &ModelParams,
    round: usize,
    cfg: &TrainConfig,
) -> Result<ClientUpdate, ModelError> {
    if client.local_data.dim() != global.input_dim() {
        return Err(ModelError::Shape {
            expected: global.input_dim(),
            actual: client.local_data.dim(),
        });
    }
    let mut params = global.clone();
    let mut state = OptimizerState::new(cfg.optimizer, params.len());
    let loss = train_epoch(
        &mut params,
        &client.local_data,
        cfg,
        round,
        client.local_seed,
        &mut state,
    )?;
    Ok(ClientUpdate {
        client_id: client.client_id,
        sample_count: client.sample_count,
        params,
        loss,
    })
}

/// Moves parameters between the server and its clients.
pub trait Transport {
    /// Sends `global` for `round` to every client and returns their updates.
    /// Any client failure fails the whole call.
    fn request_updates(
        &mut self,
        round: usize,
        global: &ModelParams,
    ) -> Result<Vec<ClientUpdate>, ProtocolError>;

    /// Releases the clients. Called once after the last round.
    fn shutdown(&mut self) -> Result<(), ProtocolError> {
        Ok(())
    }
}

/// Runs `plan.rounds` synchronous FedAvg rounds.
pub fn run_federation(
    plan: &FederationPlan,
    transport: &mut dyn Transport,
) -> Result<(ModelParams, Vec<RoundRecord>), ProtocolError> {
    plan.validate()?;
    let roster: BTreeMap<u32, usize> = plan
        .clients
        .iter()
        .map(|c| (c.client_id, c.sample_count))
        .collect();
    let mut global = plan.initial_params();
    let mut history = Vec::with_capacity(plan.rounds);
    for round in 1..=plan.rounds {
        let updates = transport.request_updates(round, &global)?;
        let mut answered = BTreeSet::new();
        for u in &updates {
            match roster.get(&u.client_id) {
                Some(&n) if n == u.sample_count => {}
                Some(&n) => {
                    return Err(ProtocolError::Incompatible {
                        client_id: u.client_id,
                        message: format!("reported {} samples, plan has {n}", u.sample_count),
                    })
                }
                None => {
                    return Err(ProtocolError::Incompatible {
                        client_id: u.client_id,
                        message: "not in the plan".into(),
                    })
                }
            }
            answered.insert(u.client_id);
        }
        if let Some(&missing) = roster.keys().find(|id| !answered.contains(id)) {
            return Err(ProtocolError::ClientFailure {
                round,
                client_id: missing,
                message: "no update received".into(),
            });
        }
        global = aggregate_fedavg(&updates)?;
        log::debug!("round {round}: aggregated {} updates", updates.len());
        history.push(RoundRecord {
            round_index: round,
            client_losses: updates.iter().map(|u| (u.client_id, u.loss)).collect(),
            checksum: global.checksum(),
        });
    }
    transport.shutdown()?;
    Ok((global, history))
}
