//! Hierarchical exploration planning: greedy choice among locally
//! allocated regions, falling back to history-node targets ranked by gain.

mod motion;
mod route;

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

pub use motion::{advance_motion, yaw_towards};
pub use route::{frontier_route, retrieve_path, DirectSearch, RouteError};

use crate::dtg::{AgentId, EroiId, EroiState, MrDtg, NodeId, NodeRef};
use crate::world::Vec3;

#[derive(Debug, Clone, PartialEq)]
pub struct PlannerConfig {
    /// Regions explored per second by one agent.
    pub n_tau: f64,
    pub g_l: f64,
    pub lambda: f64,
    pub vel_max: f64,
    /// Peer intents older than this many seconds are ignored.
    pub intent_timeout: f64,
    /// Distance and yaw at which a viewpoint counts as reached.
    pub arrival_radius: f64,
    pub arrival_yaw_deg: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            n_tau: 0.2,
            g_l: 0.08,
            lambda: 0.1,
            vel_max: 1.5,
            intent_timeout: 5.0,
            arrival_radius: 0.5,
            arrival_yaw_deg: 10.0,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), String> {
        if [self.n_tau, self.g_l, self.lambda].iter().any(|v| !(*v >= 0.0)) {
            return Err("n_tau, g_l and lambda must be non-negative".into());
        }
        if !(self.vel_max > 0.0) {
            return Err(format!("vel_max must be positive, got {}", self.vel_max));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplorationTarget {
    pub eroi: EroiId,
    pub viewpoint: u8,
    pub node: Option<NodeId>,
    pub t_i: f64,
    pub path: Vec<Vec3>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlanOutcome {
    Target(ExplorationTarget),
    Finished,
    Idle,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intent {
    pub seq: u32,
    pub eroi: EroiId,
    pub node: Option<NodeId>,
    pub t_j: f64,
    pub received_at: f64,
}

/// Latest target announcement of every peer.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PeerIntents {
    latest: BTreeMap<AgentId, Intent>,
}

impl PeerIntents {
    /// Keeps the intent with the highest sequence number per peer.
    pub fn update(&mut self, sender: AgentId, intent: Intent) -> bool {
        match self.latest.get(&sender) {
            Some(old) if old.seq >= intent.seq => false,
            _ => {
                self.latest.insert(sender, intent);
                true
            }
        }
    }

    pub fn get(&self, sender: AgentId) -> Option<&Intent> {
        self.latest.get(&sender)
    }

    /// Arrival times of peers heading for a region hanging off `node`.
    pub fn times_for(&self, node: NodeId, me: AgentId, now: f64, cfg: &PlannerConfig) -> Vec<f64> {
        self.latest
            .iter()
            .filter(|(a, i)| **a != me && i.node == Some(node) && now - i.received_at <= cfg.intent_timeout)
            .map(|(_, i)| i.t_j)
            .collect()
    }
}

/// Gain of relocating to a history node with `n_e` attached regions when
/// peers with arrival times `peer_times` already head there and this agent
/// would need `t_i` seconds.
pub fn history_gain(n_e: usize, t_i: f64, peer_times: &[f64], cfg: &PlannerConfig) -> f64 {
    let n_e = n_e as f64;
    let claimed: f64 = peer_times.iter().map(|t_j| (t_i - t_j).max(0.0) * cfg.n_tau).sum();
    let remaining = (n_e - claimed).max(0.0);
    (remaining + n_e * cfg.g_l) / (peer_times.len() as f64 + 1.0) * (-cfg.lambda * t_i).exp()
}

/// Graph distance from the agent to every history node it can reach over
/// its links and the history edges.
pub fn graph_distances(dtg: &MrDtg, agent: AgentId) -> BTreeMap<NodeId, f64> {
    let mut dist: BTreeMap<NodeId, f64> = BTreeMap::new();
    let mut heap = BinaryHeap::new();
    if let Some(links) = dtg.links_of(agent) {
        for (r, d) in links {
            if let NodeRef::History(n) = r {
                if dtg.node(*n).is_some() && dist.get(n).is_none_or(|x| d < x) {
                    dist.insert(*n, *d);
                    heap.push(Reverse((crate::dtg::ordered(*d), *n)));
                }
            }
        }
    }
    let adj = history_adjacency(dtg);
    let mut done = std::collections::BTreeSet::new();
    while let Some(Reverse((d, n))) = heap.pop() {
        if !done.insert(n) {
            continue;
        }
        for (m, w) in adj.get(&n).into_iter().flatten() {
            let c = d.0 + w;
            if dist.get(m).is_none_or(|x| c < *x) {
                dist.insert(*m, c);
                heap.push(Reverse((crate::dtg::ordered(c), *m)));
            }
        }
    }
    dist
}

pub(crate) fn history_adjacency(dtg: &MrDtg) -> BTreeMap<NodeId, Vec<(NodeId, f64)>> {
    let mut adj: BTreeMap<NodeId, Vec<(NodeId, f64)>> = BTreeMap::new();
    for e in dtg.history_edges().values() {
        if let Some((x, y)) = e.id.as_history_edge() {
            if dtg.node(x).is_some() && dtg.node(y).is_some() {
                adj.entry(x).or_default().push((y, e.weight));
                adj.entry(y).or_default().push((x, e.weight));
            }
        }
    }
    adj
}

/// Active regions attached to each node, nearest first.
pub fn active_regions_by_node(dtg: &MrDtg) -> BTreeMap<NodeId, Vec<(EroiId, f64)>> {
    let mut m = dtg.eroi_edges_by_node();
    for v in m.values_mut() {
        v.retain(|(e, _)| dtg.eroi(*e).is_some_and(|r| r.state == EroiState::Active));
        v.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    }
    m.retain(|_, v| !v.is_empty());
    m
}

/// Seconds to reach `node` and then its nearest region, given the graph
/// distances from `graph_distances`. Infinite when unreachable.
pub fn estimate_time_cost(
    node: NodeId,
    dist: &BTreeMap<NodeId, f64>,
    regions: &BTreeMap<NodeId, Vec<(EroiId, f64)>>,
    cfg: &PlannerConfig,
) -> f64 {
    let Some(d) = dist.get(&node) else { return f64::INFINITY };
    let to_region = regions.get(&node).and_then(|v| v.first()).map_or(0.0, |(_, w)| *w);
    (d + to_region) / cfg.vel_max
}

/// A region to try, in planner preference order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub eroi: EroiId,
    pub node: Option<NodeId>,
    pub t_i: f64,
}

pub struct PlanInput<'a> {
    pub agent: AgentId,
    pub dtg: &'a MrDtg,
    /// Locally allocated regions with their graph distance.
    pub local: &'a BTreeMap<EroiId, f64>,
    /// Globally allocated history nodes with their graph distance.
    pub global: &'a BTreeMap<NodeId, f64>,
    pub intents: &'a PeerIntents,
    pub now: f64,
}

/// Candidates of the first applicable rule: local regions by distance;
/// else regions of the closest owned node that has any; else regions of
/// the history node with the highest positive gain. Empty means finished.
pub fn plan_candidates(input: &PlanInput, cfg: &PlannerConfig) -> Vec<Candidate> {
    let dtg = input.dtg;
    let attached = |e: EroiId| dtg.eroi_edge(e).and_then(|x| x.id.as_eroi_edge()).map(|(_, n)| n);
    if !input.local.is_empty() {
        let mut v: Vec<(EroiId, f64)> = input.local.iter().map(|(e, d)| (*e, *d)).collect();
        v.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        return v
            .into_iter()
            .map(|(eroi, d)| Candidate {
                eroi,
                node: attached(eroi),
                t_i: d / cfg.vel_max,
            })
            .collect();
    }
    let regions = active_regions_by_node(dtg);
    let dist = graph_distances(dtg, input.agent);
    let expand = |nodes: Vec<NodeId>| -> Vec<Candidate> {
        nodes
            .into_iter()
            .flat_map(|n| {
                let t_i = estimate_time_cost(n, &dist, &regions, cfg);
                regions[&n].iter().map(move |(eroi, _)| Candidate {
                    eroi: *eroi,
                    node: Some(n),
                    t_i,
                })
            })
            .collect()
    };
    let mut owned: Vec<(f64, NodeId)> = input
        .global
        .iter()
        .filter(|(n, _)| regions.contains_key(n))
        .map(|(n, d)| (*d, *n))
        .collect();
    if !owned.is_empty() {
        owned.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        return expand(owned.into_iter().map(|(_, n)| n).collect());
    }
    let mut gains: Vec<(f64, NodeId)> = regions
        .iter()
        .filter_map(|(n, v)| {
            let t_i = estimate_time_cost(*n, &dist, &regions, cfg);
            if !t_i.is_finite() {
                return None;
            }
            let peers = input.intents.times_for(*n, input.agent, input.now, cfg);
            let g = history_gain(v.len(), t_i, &peers, cfg);
            (g > 0.0).then_some((g, *n))
        })
        .collect();
    gains.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    expand(gains.into_iter().map(|(_, n)| n).collect())
}

/// Picks the first candidate that `route` can reach. `route` returns the
/// chosen viewpoint index and the path to it.
pub fn plan(
    input: &PlanInput,
    cfg: &PlannerConfig,
    mut route: impl FnMut(&Candidate) -> Option<(u8, Vec<Vec3>)>,
) -> PlanOutcome {
    let candidates = plan_candidates(input, cfg);
    if candidates.is_empty() {
        let open = input.dtg.erois().iter().any(|e| e.state == EroiState::Active);
        return if open { PlanOutcome::Idle } else { PlanOutcome::Finished };
    }
    for c in &candidates {
        if let Some((viewpoint, path)) = route(c) {
            return PlanOutcome::Target(ExplorationTarget {
                eroi: c.eroi,
                viewpoint,
                node: c.node,
                t_i: c.t_i,
                path,
            });
        }
    }
    PlanOutcome::Idle
}
