use rayon::prelude::*;

use super::{local_epoch, ClientSite, ClientUpdate, FederationPlan, ProtocolError, Transport};
use crate::model::{ModelParams, TrainConfig};

/// Runs every client's local epoch in this process, in parallel.
pub struct InProcessTransport {
    clients: Vec<ClientSite>,
    cfg: TrainConfig,
}

impl InProcessTransport {
    pub fn new(plan: &FederationPlan) -> Self {
        InProcessTransport {
            clients: plan.clients.clone(),
            cfg: plan.train_cfg.clone(),
        }
    }
}

impl Transport for InProcessTransport {
    fn request_updates(
        &mut self,
        round: usize,
        global: &ModelParams,
    ) -> Result<Vec<ClientUpdate>, ProtocolError> {
        let cfg = &self.cfg;
        let results: Vec<_> = self
            .clients
            .par_iter()
            .map(|c| (c.client_id, local_epoch(c, global, round, cfg)))
            .collect();
        results
            .into_iter()
            .map(|(client_id, r)| {
                r.map_err(|e| ProtocolError::ClientFailure {
                    round,
                    client_id,
                    message: e.to_string(),
                })
            })
            .collect()
    }
}
