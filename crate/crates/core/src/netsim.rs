//! Deterministic message-counting communicator.
//!
//! Algorithms append sends and compute charges to an ordered log, in an
//! order consistent with each domain's program order. [`Communicator::cost_report`]
//! replays the log: every domain keeps a clock, compute advances it by
//! `flops / rate`, and a receive sets the destination clock to at least the
//! sender's clock plus `latency + bytes / bandwidth` of the link used. The
//! same replay tracks the longest chain of messages (a Lamport clock) and
//! the volume and flops carried along it.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::topology::Topology;

/// Bytes of a packed upper triangle of order `n` with `elem` bytes per value.
pub fn packed_triangle_bytes(n: usize, elem: u64) -> u64 {
    (n * (n + 1) / 2) as u64 * elem
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MessageKind {
    /// Moves data towards a reduction root.
    Reduce,
    /// Moves data away from it (allreduce fan-out, Q reconstruction).
    Broadcast,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MessageRecord {
    pub src: usize,
    pub dst: usize,
    pub bytes: u64,
    pub inter_cluster: bool,
    pub step: u64,
    pub kind: MessageKind,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComputeRecord {
    pub domain: usize,
    pub flops: f64,
    pub step: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "event", rename_all = "lowercase")]
pub enum Event {
    Message(MessageRecord),
    Compute(ComputeRecord),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct CostReport {
    pub msg_count: u64,
    pub inter_cluster_msg_count: u64,
    /// Messages of kind [`MessageKind::Reduce`] only.
    pub reduce_msg_count: u64,
    pub volume_bytes: u64,
    pub inter_cluster_volume_bytes: u64,
    /// Longest causal chain of messages, all kinds.
    pub critical_path_msgs: u64,
    /// Longest causal chain counting only reduce messages.
    pub critical_path_reduce_msgs: u64,
    pub critical_path_volume_bytes: u64,
    /// Distinct logical steps carrying at least one message, i.e. the
    /// number of synchronous communication rounds.
    pub message_rounds: u64,
    pub flops_total: f64,
    pub flops_critical_path: f64,
    pub modeled_time_seconds: f64,
}

#[derive(Clone, Debug)]
pub struct Communicator {
    topo: Topology,
    log: Vec<Event>,
    flops: Vec<f64>,
    step: u64,
}

impl Communicator {
    pub fn new(topo: Topology) -> Self {
        let p = topo.domain_count();
        Self {
            topo,
            log: Vec::new(),
            flops: vec![0.0; p],
            step: 0,
        }
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    pub fn log(&self) -> &[Event] {
        &self.log
    }

    pub fn messages(&self) -> impl Iterator<Item = &MessageRecord> {
        self.log.iter().filter_map(|e| match e {
            Event::Message(m) => Some(m),
            Event::Compute(_) => None,
        })
    }

    /// Flops charged to each domain so far.
    pub fn flop_ledger(&self) -> &[f64] {
        &self.flops
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn set_step(&mut self, step: u64) {
        self.step = step;
    }

    pub fn advance_step(&mut self) {
        self.step += 1;
    }

    /// A reduce-kind point-to-point message.
    pub fn send(&mut self, src: usize, dst: usize, bytes: u64) -> Result<()> {
        self.send_kind(src, dst, bytes, MessageKind::Reduce)
    }

    pub fn send_kind(&mut self, src: usize, dst: usize, bytes: u64, kind: MessageKind) -> Result<()> {
        let cs = self.topo.cluster_of(src)?;
        let cd = self.topo.cluster_of(dst)?;
        if src == dst {
            return Err(Error::InvalidSend(format!("domain {src} sending to itself")));
        }
        self.log.push(Event::Message(MessageRecord {
            src,
            dst,
            bytes,
            inter_cluster: cs != cd,
            step: self.step,
            kind,
        }));
        Ok(())
    }

    pub fn charge_flops(&mut self, domain: usize, flops: f64) -> Result<()> {
        if domain >= self.flops.len() {
            return Err(Error::InvalidDomain(domain));
        }
        if !(flops >= 0.0) {
            return Err(Error::InvalidSend(format!("negative flop charge {flops}")));
        }
        if flops == 0.0 {
            return Ok(());
        }
        self.flops[domain] += flops;
        self.log.push(Event::Compute(ComputeRecord {
            domain,
            flops,
            step: self.step,
        }));
        Ok(())
    }

    pub fn cost_report(&self) -> CostReport {
        let p = self.topo.domain_count();
        let rates: Vec<f64> = (0..p)
            .map(|d| self.topo.flop_rate(d).expect("valid domain"))
            .collect();
        let mut clock = vec![0.0f64; p];
        let mut chain = vec![0u64; p];
        let mut reduce_chain = vec![0u64; p];
        let mut chain_volume = vec![0u64; p];
        let mut path_flops = vec![0.0f64; p];
        let mut rep = CostReport::default();
        let mut rounds = std::collections::BTreeSet::new();

        for event in &self.log {
            match event {
                Event::Compute(c) => {
                    clock[c.domain] += c.flops / rates[c.domain];
                    path_flops[c.domain] += c.flops;
                    rep.flops_total += c.flops;
                }
                Event::Message(m) => {
                    let link = self.topo.link(m.src, m.dst).expect("validated on send");
                    let arrival = clock[m.src] + link.latency + m.bytes as f64 / link.bandwidth;
                    clock[m.dst] = clock[m.dst].max(arrival);
                    path_flops[m.dst] = path_flops[m.dst].max(path_flops[m.src]);

                    let via = chain[m.src] + 1;
                    let carried = chain_volume[m.src] + m.bytes;
                    if via > chain[m.dst] {
                        chain[m.dst] = via;
                        chain_volume[m.dst] = carried;
                    } else if via == chain[m.dst] {
                        chain_volume[m.dst] = chain_volume[m.dst].max(carried);
                    }
                    let step = u64::from(m.kind == MessageKind::Reduce);
                    reduce_chain[m.dst] = reduce_chain[m.dst].max(reduce_chain[m.src] + step);

                    rounds.insert(m.step);
                    rep.msg_count += 1;
                    rep.volume_bytes += m.bytes;
                    if m.kind == MessageKind::Reduce {
                        rep.reduce_msg_count += 1;
                    }
                    if m.inter_cluster {
                        rep.inter_cluster_msg_count += 1;
                        rep.inter_cluster_volume_bytes += m.bytes;
                    }
                }
            }
        }

        rep.message_rounds = rounds.len() as u64;
        rep.critical_path_msgs = chain.iter().copied().max().unwrap_or(0);
        rep.critical_path_reduce_msgs = reduce_chain.iter().copied().max().unwrap_or(0);
        rep.critical_path_volume_bytes = chain_volume.iter().copied().max().unwrap_or(0);
        rep.flops_critical_path = path_flops.iter().copied().fold(0.0, f64::max);
        rep.modeled_time_seconds = clock.iter().copied().fold(0.0, f64::max);
        rep
    }
}
