//! TCP transport: one persistent connection per client.
//!
//! A client connects, sends a hello (round 0, its id and sample count) and
//! then answers every broadcast with its update. A broadcast with round 0
//! ends the session.

use std::collections::BTreeMap;
use std::io::ErrorKind;
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::time::{Duration, Instant};

use super::wire::{read_frame, write_frame, ParamsMessage};
use super::{local_epoch, ClientSite, ClientUpdate, ProtocolError, Transport};
use crate::model::{ModelParams, TrainConfig};

pub const DEFAULT_IDLE_TIMEOUT: Duration = Duration::from_secs(60);

const POLL: Duration = Duration::from_millis(20);

fn io_err(e: std::io::Error) -> ProtocolError {
    ProtocolError::Io(e.to_string())
}

fn is_timeout(e: &std::io::Error) -> bool {
    matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut)
}

struct Connection {
    client_id: u32,
    n_samples: usize,
    stream: TcpStream,
}

/// Server side of the TCP transport.
pub struct TcpServerTransport {
    conns: Vec<Connection>,
    timeout: Duration,
}

impl TcpServerTransport {
    /// Waits until every client in `roster` (id → sample count) has said
    /// hello. Fails if one is still missing after `timeout`.
    pub fn accept(
        listener: &TcpListener,
        roster: &BTreeMap<u32, usize>,
        timeout: Duration,
    ) -> Result<Self, ProtocolError> {
        listener.set_nonblocking(true).map_err(io_err)?;
        let deadline = Instant::now() + timeout;
        let mut conns: BTreeMap<u32, Connection> = BTreeMap::new();
        while conns.len() < roster.len() {
            match listener.accept() {
                Ok((stream, peer)) => {
                    stream.set_nonblocking(false).map_err(io_err)?;
                    stream.set_read_timeout(Some(timeout)).map_err(io_err)?;
                    stream.set_nodelay(true).map_err(io_err)?;
                    let mut s = stream;
                    let hello = match read_frame(&mut s) {
                        Ok(Some(m)) => m,
                        Ok(None) => continue,
                        Err(e) => return Err(ProtocolError::Io(format!("hello from {peer}: {e}"))),
                    };
                    let id = hello.client_id;
                    let expected = roster.get(&id).copied();
                    if hello.round != 0
                        || expected != Some(hello.n_samples as usize)
                        || conns.contains_key(&id)
                    {
                        return Err(ProtocolError::Incompatible {
                            client_id: id,
                            message: format!(
                                "unexpected hello (round {}, {} samples, expected {:?})",
                                hello.round, hello.n_samples, expected
                            ),
                        });
                    }
                    log::info!("client {id} connected from {peer}");
                    conns.insert(
                        id,
                        Connection {
                            client_id: id,
                            n_samples: hello.n_samples as usize,
                            stream: s,
                        },
                    );
                }
                Err(e) if e.kind() == ErrorKind::WouldBlock => {
                    if Instant::now() >= deadline {
                        let missing = roster
                            .keys()
                            .find(|id| !conns.contains_key(id))
                            .copied()
                            .unwrap_or_default();
                        return Err(ProtocolError::Timeout {
                            client_id: missing,
                            timeout_ms: timeout.as_millis(),
                        });
                    }
                    std::thread::sleep(POLL);
                }
                Err(e) => return Err(io_err(e)),
            }
        }
        Ok(TcpServerTransport {
            conns: conns.into_values().collect(),
            timeout,
        })
    }
}

impl Transport for TcpServerTransport {
    fn request_updates(
        &mut self,
        round: usize,
        global: &ModelParams,
    ) -> Result<Vec<ClientUpdate>, ProtocolError> {
        let fail = |client_id: u32, message: String| ProtocolError::ClientFailure {
            round,
            client_id,
            message,
        };
        for c in &mut self.conns {
            let msg = ParamsMessage::new(round as u64, c.client_id, c.n_samples as u64, global);
            write_frame(&mut c.stream, &msg).map_err(|e| fail(c.client_id, e.to_string()))?;
        }
        let mut updates = Vec::with_capacity(self.conns.len());
        for c in &mut self.conns {
            let m = match read_frame(&mut c.stream) {
                Ok(Some(m)) => m,
                Ok(None) => return Err(fail(c.client_id, "connection closed".into())),
                Err(e) if is_timeout(&e) => {
                    return Err(ProtocolError::Timeout {
                        client_id: c.client_id,
                        timeout_ms: self.timeout.as_millis(),
                    })
                }
                Err(e) => return Err(fail(c.client_id, e.to_string())),
            };
            if let Some(err) = m.error {
                return Err(fail(c.client_id, err));
            }
            if m.round != round as u64 || m.client_id != c.client_id {
                return Err(fail(
                    c.client_id,
                    format!("answer for round {} from client {}", m.round, m.client_id),
                ));
            }
            let loss = m
                .loss
                .ok_or_else(|| fail(c.client_id, "update without loss".into()))?;
            updates.push(ClientUpdate {
                client_id: c.client_id,
                sample_count: m.n_samples as usize,
                params: m.params(),
                loss,
            });
        }
        Ok(updates)
    }

    fn shutdown(&mut self) -> Result<(), ProtocolError> {
        for c in &mut self.conns {
            if let Err(e) = write_frame(&mut c.stream, &ParamsMessage::control(0, c.client_id, 0)) {
                log::warn!("shutdown notice to client {} failed: {e}", c.client_id);
            }
        }
        Ok(())
    }
}

fn connect_with_retry(addr: &str, timeout: Duration) -> Result<TcpStream, ProtocolError> {
    let deadline = Instant::now() + timeout;
    loop {
        let attempt = addr
            .to_socket_addrs()
            .map_err(io_err)?
            .find_map(|a| TcpStream::connect(a).ok());
        if let Some(s) = attempt {
            return Ok(s);
        }
        if Instant::now() >= deadline {
            return Err(ProtocolError::Io(format!(
                "could not reach server at {addr}"
            )));
        }
        std::thread::sleep(POLL * 5);
    }
}

/// Client side: connects to `addr`, serves rounds until the server says
/// stop, and returns the number of rounds served.
pub fn run_tcp_client(
    addr: &str,
    site: &ClientSite,
    cfg: &TrainConfig,
    timeout: Duration,
) -> Result<usize, ProtocolError> {
    let mut stream = connect_with_retry(addr, timeout)?;
    stream.set_read_timeout(Some(timeout)).map_err(io_err)?;
    stream.set_nodelay(true).map_err(io_err)?;
    write_frame(
        &mut stream,
        &ParamsMessage::control(0, site.client_id, site.sample_count as u64),
    )?;
    let mut served = 0;
    loop {
        let m = match read_frame(&mut stream) {
            Ok(Some(m)) => m,
            Ok(None) => return Err(ProtocolError::Io("server closed the connection".into())),
            Err(e) if is_timeout(&e) => {
                return Err(ProtocolError::Timeout {
                    client_id: site.client_id,
                    timeout_ms: timeout.as_millis(),
                })
            }
            Err(e) => return Err(io_err(e)),
        };
        if m.round == 0 {
            return Ok(served);
        }
        let round = m.round as usize;
        match local_epoch(site, &m.params(), round, cfg) {
            Ok(u) => {
                let mut reply = ParamsMessage::new(
                    m.round,
                    site.client_id,
                    site.sample_count as u64,
                    &u.params,
                );
                reply.loss = Some(u.loss);
                write_frame(&mut stream, &reply)?;
                served += 1;
            }
            Err(e) => {
                let mut reply =
                    ParamsMessage::control(m.round, site.client_id, site.sample_count as u64);
                reply.error = Some(e.to_string());
                write_frame(&mut stream, &reply)?;
                return Err(ProtocolError::ClientFailure {
                    round,
                    client_id: site.client_id,
                    message: e.to_string(),
                });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::federation::{run_federation, FederationPlan, InProcessTransport};
    use crate::model::{Dataset, LrSchedule, ModelSpec, Optimizer};

    fn site(id: u32, n: usize) -> ClientSite {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(id as u64);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..4).map(|_| rng.random::<f64>()).collect())
            .collect();
        let t = rows
            .iter()
            .map(|r| 40.0 + 30.0 * r[0] + 5.0 * r[3] + rng.random::<f64>())
            .collect();
        ClientSite::new(id, Dataset::new(rows, t).unwrap(), 100 + id as u64)
    }

    fn plan(model: ModelSpec) -> FederationPlan {
        FederationPlan {
            clients: vec![site(1, 30), site(2, 11), site(5, 47)],
            rounds: 8,
            train_cfg: TrainConfig {
                epochs: 8,
                batch_size: 8,
                l2_penalty: 1e-3,
                schedule: LrSchedule::LinearDecay {
                    eta0: 0.05,
                    eta_end: 0.005,
                    horizon: 8,
                },
                optimizer: Optimizer::Sgd,
                seed: 3,
                intercept_init: 50.0,
            },
            model,
        }
    }

    fn run_tcp(
        p: &FederationPlan,
    ) -> Result<(ModelParams, Vec<super::super::RoundRecord>), ProtocolError> {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap().to_string();
        let roster = p
            .clients
            .iter()
            .map(|c| (c.client_id, c.sample_count))
            .collect();
        let timeout = Duration::from_secs(10);
        std::thread::scope(|s| {
            let handles: Vec<_> = p
                .clients
                .iter()
                .map(|c| s.spawn(|| run_tcp_client(&addr, c, &p.train_cfg, timeout)))
                .collect();
            let mut t = TcpServerTransport::accept(&listener, &roster, timeout)?;
            let out = run_federation(p, &mut t);
            for h in handles {
                h.join().unwrap()?;
            }
            out
        })
    }

    #[test]
    fn tcp_matches_in_process() {
        for model in [
            ModelSpec::Linear,
            ModelSpec::Feedforward { hidden: vec![6, 4] },
        ] {
            let p = plan(model);
            let a = run_federation(&p, &mut InProcessTransport::new(&p)).unwrap();
            let b = run_tcp(&p).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn missing_client_times_out() {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let roster = BTreeMap::from([(1, 10), (2, 10)]);
        match TcpServerTransport::accept(&listener, &roster, Duration::from_millis(200)) {
            Err(ProtocolError::Timeout { client_id: 1, .. }) => {}
            Err(e) => panic!("unexpected error {e}"),
            Ok(_) => panic!("accepted without clients"),
        }
    }
}
