use std::collections::VecDeque;
use std::fmt::Write as _;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::wire::{encode, MessageKind, Payload, WireError, WireMessage};
use crate::dtg::AgentId;

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    /// Base one-way delay in seconds.
    pub latency: f64,
    /// Extra uniform delay in `[0, jitter)` seconds, drawn per copy.
    pub jitter: f64,
    pub drop_probability: f64,
    pub seed: u64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            latency: 0.0,
            jitter: 0.0,
            drop_probability: 0.0,
            seed: 0,
        }
    }
}

/// Cumulative traffic. Broadcast copies are counted once per recipient;
/// the `single_*` counters count each message once.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ByteLedger {
    pub cooperation: u64,
    pub mapping: u64,
    pub single_cooperation: u64,
    pub single_mapping: u64,
    pub messages: u64,
    pub dropped: u64,
}

impl ByteLedger {
    fn record(&mut self, kind: MessageKind, len: usize, recipients: usize) {
        let len = len as u64;
        let copies = recipients as u64;
        self.messages += 1;
        if kind.is_cooperation() {
            self.cooperation += len * copies;
            self.single_cooperation += len;
        } else {
            self.mapping += len * copies;
            self.single_mapping += len;
        }
    }
}

/// One sent message as it appeared on the air.
#[derive(Debug, Clone, PartialEq)]
pub struct LogEntry {
    pub time: f64,
    pub bytes: Arc<Vec<u8>>,
    pub recipients: Vec<AgentId>,
}

/// A message copy handed to a recipient.
#[derive(Debug, Clone, PartialEq)]
pub struct Delivery {
    pub recipient: AgentId,
    pub sender: AgentId,
    pub bytes: Arc<Vec<u8>>,
}

#[derive(Debug, Clone)]
struct InFlight {
    deliver_at: f64,
    bytes: Arc<Vec<u8>>,
}

/// Broadcast medium between a fixed set of agents. Copies from one sender
/// to one recipient arrive in send order; the interleaving between senders
/// at a flush is drawn from the seeded generator.
#[derive(Debug, Clone)]
pub struct NetworkSim {
    cfg: NetworkConfig,
    agents: usize,
    rng: ChaCha8Rng,
    next_seq: Vec<u32>,
    /// `queues[recipient][sender]`
    queues: Vec<Vec<VecDeque<InFlight>>>,
    ledger: ByteLedger,
    log: Option<Vec<LogEntry>>,
    dropped: Vec<Delivery>,
}

impl NetworkSim {
    pub fn new(agents: usize, cfg: NetworkConfig) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            cfg,
            agents,
            next_seq: vec![0; agents],
            queues: vec![vec![VecDeque::new(); agents]; agents],
            ledger: ByteLedger::default(),
            log: None,
            dropped: Vec::new(),
        }
    }

    /// Keeps a copy of every sent message for offline audit.
    pub fn enable_log(&mut self) {
        self.log.get_or_insert_with(Vec::new);
    }

    pub fn log(&self) -> &[LogEntry] {
        self.log.as_deref().unwrap_or(&[])
    }

    pub fn ledger(&self) -> &ByteLedger {
        &self.ledger
    }

    /// Copies lost in transit, in drop order.
    pub fn dropped(&self) -> &[Delivery] {
        &self.dropped
    }

    pub fn in_flight(&self) -> usize {
        self.queues.iter().flatten().map(VecDeque::len).sum()
    }

    fn stamp(&mut self, sender: AgentId, payload: Payload) -> Result<(Arc<Vec<u8>>, MessageKind), WireError> {
        let seq = &mut self.next_seq[sender as usize];
        let msg = WireMessage {
            sender,
            seq: *seq,
            payload,
        };
        *seq += 1;
        Ok((Arc::new(encode(&msg)?), msg.payload.kind()))
    }

    /// Sends `payload` from `sender` to every other agent.
    pub fn broadcast(&mut self, sender: AgentId, payload: Payload, now: f64) -> Result<(), WireError> {
        let (bytes, kind) = self.stamp(sender, payload)?;
        let recipients: Vec<AgentId> = (0..self.agents as AgentId).filter(|r| *r != sender).collect();
        self.ledger.record(kind, bytes.len(), recipients.len());
        if let Some(log) = &mut self.log {
            log.push(LogEntry {
                time: now,
                bytes: bytes.clone(),
                recipients: recipients.clone(),
            });
        }
        for r in recipients {
            if self.cfg.drop_probability > 0.0 && self.rng.gen::<f64>() < self.cfg.drop_probability {
                self.ledger.dropped += 1;
                self.dropped.push(Delivery {
                    recipient: r,
                    sender,
                    bytes: bytes.clone(),
                });
                continue;
            }
            let jitter = if self.cfg.jitter > 0.0 {
                self.rng.gen::<f64>() * self.cfg.jitter
            } else {
                0.0
            };
            let queue = &mut self.queues[r as usize][sender as usize];
            // A copy never overtakes an earlier one on the same link.
            let floor = queue.back().map_or(f64::NEG_INFINITY, |m| m.deliver_at);
            queue.push_back(InFlight {
                deliver_at: (now + self.cfg.latency + jitter).max(floor),
                bytes: bytes.clone(),
            });
        }
        Ok(())
    }

    /// Counts a message that receivers would discard unread, without
    /// queueing it. Used for the map-sharing baseline, whose content never
    /// influences the run.
    pub fn broadcast_ledger_only(&mut self, sender: AgentId, payload: Payload, now: f64) -> Result<(), WireError> {
        let (bytes, kind) = self.stamp(sender, payload)?;
        let recipients: Vec<AgentId> = (0..self.agents as AgentId).filter(|r| *r != sender).collect();
        self.ledger.record(kind, bytes.len(), recipients.len());
        if let Some(log) = &mut self.log {
            log.push(LogEntry {
                time: now,
                bytes,
                recipients,
            });
        }
        Ok(())
    }

    /// Hands out every copy due by `now`, grouped by recipient in ascending
    /// id order.
    pub fn flush(&mut self, now: f64) -> Vec<Delivery> {
        let mut out = Vec::new();
        for r in 0..self.agents {
            loop {
                let ready: Vec<usize> = (0..self.agents)
                    .filter(|s| self.queues[r][*s].front().is_some_and(|m| m.deliver_at <= now))
                    .collect();
                if ready.is_empty() {
                    break;
                }
                let s = if ready.len() == 1 {
                    ready[0]
                } else {
                    ready[self.rng.gen_range(0..ready.len())]
                };
                let m = self.queues[r][s].pop_front().expect("ready queue");
                out.push(Delivery {
                    recipient: r as AgentId,
                    sender: s as AgentId,
                    bytes: m.bytes,
                });
            }
        }
        out
    }

    /// Delivers everything still in flight regardless of due time.
    pub fn drain(&mut self) -> Vec<Delivery> {
        self.flush(f64::INFINITY)
    }
}

/// One line per sent message: time, recipients, hex bytes.
pub fn dump_log(entries: &[LogEntry]) -> String {
    let mut s = String::new();
    for e in entries {
        let rec: Vec<String> = e.recipients.iter().map(|r| r.to_string()).collect();
        let _ = writeln!(s, "{:.3} {} {}", e.time, rec.join(","), hex::encode(e.bytes.as_slice()));
    }
    s
}

/// Recomputes the ledger byte counters from a log dump.
pub fn ledger_from_dump(text: &str) -> Result<ByteLedger, String> {
    let mut ledger = ByteLedger::default();
    for (i, line) in text.lines().enumerate() {
        let mut parts = line.split_whitespace();
        let (Some(_), Some(rec), Some(hexed)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(format!("line {}: expected three fields", i + 1));
        };
        let bytes = hex::decode(hexed).map_err(|e| format!("line {}: {e}", i + 1))?;
        let kind = bytes
            .first()
            .and_then(|k| MessageKind::from_u8(*k))
            .ok_or_else(|| format!("line {}: bad kind", i + 1))?;
        let recipients = rec.split(',').filter(|s| !s.is_empty()).count();
        ledger.record(kind, bytes.len(), recipients);
    }
    Ok(ledger)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::comms::{decode, NodeRecord};
    use crate::dtg::NodeId;

    fn node_add(c: u32) -> Payload {
        Payload::NodeAdd(vec![NodeRecord {
            id: NodeId::new(0, c),
            position: [0.0; 3],
        }])
    }

    #[test]
    fn broadcast_counts_every_recipient_copy() {
        let mut net = NetworkSim::new(3, NetworkConfig::default());
        net.broadcast(0, node_add(0), 0.0).unwrap();
        assert_eq!(net.ledger().cooperation, 58);
        assert_eq!(net.ledger().single_cooperation, 29);
        let got = net.flush(0.0);
        assert_eq!(got.len(), 2);
        assert_eq!(got[0].recipient, 1);
        assert_eq!(got[1].recipient, 2);
    }

    #[test]
    fn total_loss_counts_drops() {
        let cfg = NetworkConfig {
            drop_probability: 1.0,
            ..NetworkConfig::default()
        };
        let mut net = NetworkSim::new(4, cfg);
        net.broadcast(1, node_add(0), 0.0).unwrap();
        assert!(net.drain().is_empty());
        assert_eq!(net.ledger().dropped, 3);
        assert_eq!(net.dropped().len(), 3);
    }

    #[test]
    fn latency_holds_messages_back() {
        let cfg = NetworkConfig {
            latency: 0.25,
            ..NetworkConfig::default()
        };
        let mut net = NetworkSim::new(2, cfg);
        net.broadcast(0, node_add(0), 1.0).unwrap();
        assert!(net.flush(1.1).is_empty());
        assert_eq!(net.flush(1.25).len(), 1);
        assert_eq!(net.in_flight(), 0);
    }

    #[test]
    fn per_sender_order_survives_jitter() {
        let cfg = NetworkConfig {
            latency: 0.1,
            jitter: 1.0,
            seed: 9,
            ..NetworkConfig::default()
        };
        let mut net = NetworkSim::new(4, cfg);
        for i in 0..50 {
            for s in 0..4 {
                net.broadcast(s, node_add(i), i as f64 * 0.05).unwrap();
            }
        }
        let got = net.drain();
        assert_eq!(got.len(), 50 * 4 * 3);
        let mut last = vec![vec![None; 4]; 4];
        for d in &got {
            let seq = decode(&d.bytes).unwrap().seq;
            let slot = &mut last[d.recipient as usize][d.sender as usize];
            assert!(slot.is_none_or(|p| seq > p));
            *slot = Some(seq);
        }
    }

    #[test]
    fn same_seed_same_interleaving() {
        let run = |seed| {
            let cfg = NetworkConfig {
                seed,
                ..NetworkConfig::default()
            };
            let mut net = NetworkSim::new(3, cfg);
            for s in 0..3 {
                for i in 0..5 {
                    net.broadcast(s, node_add(i), 0.0).unwrap();
                }
            }
            net.flush(0.0).iter().map(|d| d.sender).collect::<Vec<_>>()
        };
        assert_eq!(run(4), run(4));
    }

    #[test]
    fn dump_reproduces_ledger() {
        let mut net = NetworkSim::new(3, NetworkConfig::default());
        net.enable_log();
        net.broadcast(0, node_add(0), 0.0).unwrap();
        net.broadcast(2, node_add(1), 0.5).unwrap();
        net.broadcast_ledger_only(
            1,
            Payload::MapChunk(crate::comms::MapChunk {
                voxels: vec![(1, 1); 10],
            }),
            0.5,
        )
        .unwrap();
        let text = dump_log(net.log());
        assert_eq!(text.lines().count(), 3);
        let audit = ledger_from_dump(&text).unwrap();
        assert_eq!(audit.cooperation, net.ledger().cooperation);
        assert_eq!(audit.mapping, net.ledger().mapping);
        assert_eq!(audit.mapping, 2 * (11 + 50));
    }
}
