use std::collections::BTreeMap;

use super::eroi::{Eroi, EroiLayout, EroiState, ViewpointState};
use super::{quantize, AgentId, DtgError, EroiId, NodeId, NodeRef};
use crate::world::Vec3;

/// Trajectory sample of some agent. Replicas only hold id and position; the
/// Dijkstra tree stays with the creating agent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryNode {
    pub id: NodeId,
    pub position: Vec3,
}

/// Canonical edge key: endpoints in ascending order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeId {
    pub a: NodeRef,
    pub b: NodeRef,
}

impl EdgeId {
    /// `None` for a self-loop or an edge between two regions.
    pub fn new(x: NodeRef, y: NodeRef) -> Option<Self> {
        if x == y || (matches!(x, NodeRef::Eroi(_)) && matches!(y, NodeRef::Eroi(_))) {
            return None;
        }
        let (a, b) = if x < y { (x, y) } else { (y, x) };
        Some(Self { a, b })
    }

    /// `(region, node)` for a region edge.
    pub fn as_eroi_edge(&self) -> Option<(EroiId, NodeId)> {
        match (self.a, self.b) {
            (NodeRef::History(n), NodeRef::Eroi(e)) => Some((e, n)),
            _ => None,
        }
    }

    pub fn as_history_edge(&self) -> Option<(NodeId, NodeId)> {
        match (self.a, self.b) {
            (NodeRef::History(x), NodeRef::History(y)) => Some((x, y)),
            _ => None,
        }
    }
}

/// Traversable path between two graph vertices, ordered from `id.a` to
/// `id.b`. The weight is the summed segment length of the stored path.
#[derive(Debug, Clone, PartialEq)]
pub struct TopoEdge {
    pub id: EdgeId,
    /// Viewpoint index reached at the region end of a region edge.
    pub viewpoint: Option<u8>,
    pub path: Vec<Vec3>,
    pub weight: f64,
    pub writer: AgentId,
}

impl TopoEdge {
    pub fn new(id: EdgeId, viewpoint: Option<u8>, path: &[Vec3], writer: AgentId) -> Self {
        let path: Vec<Vec3> = path.iter().map(quantize).collect();
        let weight = path_length(&path);
        Self {
            id,
            viewpoint,
            path,
            weight,
            writer,
        }
    }

    /// Merge order: shorter first, then lower writer id.
    fn beats(&self, other: &TopoEdge) -> bool {
        (self.weight, self.writer) < (other.weight, other.writer)
    }
}

pub fn path_length(path: &[Vec3]) -> f64 {
    path.windows(2).map(|w| (w[1] - w[0]).norm()).sum()
}

/// Counts lifecycle transitions applied to a replica. Every applied
/// transition must move strictly forward in `Inactive < Active < Dead`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TransitionRecorder {
    pub eroi_transitions: u64,
    pub viewpoint_transitions: u64,
    pub illegal: Vec<String>,
    /// Records that would have moved a state backwards and were ignored.
    pub stale_ignored: u64,
}

impl TransitionRecorder {
    fn eroi(&mut self, id: EroiId, from: EroiState, to: EroiState) {
        self.eroi_transitions += 1;
        if to <= from {
            self.illegal.push(format!("region {id}: {from:?} -> {to:?}"));
        }
    }

    fn viewpoint(&mut self, id: EroiId, idx: u8, from: ViewpointState, to: ViewpointState) {
        self.viewpoint_transitions += 1;
        if to <= from {
            self.illegal.push(format!("viewpoint {id}/{idx}: {from:?} -> {to:?}"));
        }
    }
}

/// One agent's replica of the shared graph.
#[derive(Debug, Clone)]
pub struct MrDtg {
    layout: EroiLayout,
    nodes: BTreeMap<NodeId, HistoryNode>,
    erois: Vec<Eroi>,
    history_edges: BTreeMap<EdgeId, TopoEdge>,
    /// Region connection proposals keyed by region then history node. The
    /// region's connecting edge is the shortest live proposal.
    eroi_candidates: BTreeMap<EroiId, BTreeMap<NodeId, TopoEdge>>,
    uav_links: BTreeMap<AgentId, BTreeMap<NodeRef, f64>>,
    recorder: TransitionRecorder,
}

impl MrDtg {
    pub fn new(layout: EroiLayout, erois: Vec<Eroi>) -> Self {
        Self {
            layout,
            nodes: BTreeMap::new(),
            erois,
            history_edges: BTreeMap::new(),
            eroi_candidates: BTreeMap::new(),
            uav_links: BTreeMap::new(),
            recorder: TransitionRecorder::default(),
        }
    }

    pub fn layout(&self) -> &EroiLayout {
        &self.layout
    }

    pub fn nodes(&self) -> &BTreeMap<NodeId, HistoryNode> {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> Option<&HistoryNode> {
        self.nodes.get(&id)
    }

    pub fn erois(&self) -> &[Eroi] {
        &self.erois
    }

    pub fn eroi(&self, id: EroiId) -> Option<&Eroi> {
        self.erois.get(id as usize)
    }

    pub(crate) fn eroi_mut(&mut self, id: EroiId) -> Option<&mut Eroi> {
        self.erois.get_mut(id as usize)
    }

    pub fn history_edges(&self) -> &BTreeMap<EdgeId, TopoEdge> {
        &self.history_edges
    }

    pub fn history_edge(&self, x: NodeId, y: NodeId) -> Option<&TopoEdge> {
        EdgeId::new(NodeRef::History(x), NodeRef::History(y)).and_then(|id| self.history_edges.get(&id))
    }

    pub fn eroi_candidates(&self, id: EroiId) -> impl Iterator<Item = &TopoEdge> {
        self.eroi_candidates.get(&id).into_iter().flat_map(|m| m.values())
    }

    pub fn all_eroi_candidates(&self) -> impl Iterator<Item = &TopoEdge> {
        self.eroi_candidates.values().flat_map(|m| m.values())
    }

    /// The single edge connecting a live region to the graph, if any: the
    /// shortest proposal whose history node is known, ties by node id.
    pub fn eroi_edge(&self, id: EroiId) -> Option<&TopoEdge> {
        if self.eroi(id)?.state == EroiState::Dead {
            return None;
        }
        self.eroi_candidates
            .get(&id)?
            .iter()
            .filter(|(n, _)| self.nodes.contains_key(n))
            .min_by(|(na, ea), (nb, eb)| ea.weight.total_cmp(&eb.weight).then(na.cmp(nb)))
            .map(|(_, e)| e)
    }

    /// Every edge of the graph: history edges between known nodes and the
    /// connecting edge of each region.
    pub fn edges(&self) -> impl Iterator<Item = &TopoEdge> {
        let hist = self.history_edges.values().filter(|e| {
            e.id.as_history_edge()
                .is_some_and(|(x, y)| self.nodes.contains_key(&x) && self.nodes.contains_key(&y))
        });
        hist.chain((0..self.erois.len() as EroiId).filter_map(|e| self.eroi_edge(e)))
    }

    /// Connecting edges of non-dead regions grouped by their history node:
    /// `node -> [(region, weight)]`.
    pub fn eroi_edges_by_node(&self) -> BTreeMap<NodeId, Vec<(EroiId, f64)>> {
        let mut out: BTreeMap<NodeId, Vec<(EroiId, f64)>> = BTreeMap::new();
        for e in 0..self.erois.len() as EroiId {
            if let Some(edge) = self.eroi_edge(e) {
                let (_, n) = edge.id.as_eroi_edge().expect("region edge");
                out.entry(n).or_default().push((e, edge.weight));
            }
        }
        out
    }

    pub fn uav_links(&self) -> &BTreeMap<AgentId, BTreeMap<NodeRef, f64>> {
        &self.uav_links
    }

    pub fn links_of(&self, agent: AgentId) -> Option<&BTreeMap<NodeRef, f64>> {
        self.uav_links.get(&agent)
    }

    pub fn recorder(&self) -> &TransitionRecorder {
        &self.recorder
    }

    pub fn active_eroi_count(&self) -> usize {
        self.erois.iter().filter(|e| e.state == EroiState::Active).count()
    }

    // --- monotone mutation primitives -------------------------------------

    /// Adds a node; re-adding a known id is a no-op.
    pub fn add_node(&mut self, id: NodeId, position: Vec3) -> bool {
        if self.nodes.contains_key(&id) {
            return false;
        }
        self.nodes.insert(
            id,
            HistoryNode {
                id,
                position: quantize(&position),
            },
        );
        true
    }

    fn check_eroi(&self, id: EroiId) -> Result<&Eroi, DtgError> {
        self.eroi(id).ok_or(DtgError::UnknownEroi(id))
    }

    /// Inserts an edge, keeping the shorter (then lower-writer) edge when the
    /// id is already present. Proposals for dead regions or dead viewpoints
    /// are dropped.
    pub fn upsert_edge(&mut self, edge: TopoEdge) -> Result<bool, DtgError> {
        if let Some((e, n)) = edge.id.as_eroi_edge() {
            let eroi = self.check_eroi(e)?;
            let vp = edge.viewpoint.ok_or(DtgError::UnknownViewpoint(e, u8::MAX))?;
            let vstate = eroi
                .viewpoints
                .get(vp as usize)
                .ok_or(DtgError::UnknownViewpoint(e, vp))?
                .state;
            if eroi.state == EroiState::Dead || vstate == ViewpointState::Dead {
                return Ok(false);
            }
            let slot = self.eroi_candidates.entry(e).or_default();
            match slot.get(&n) {
                Some(old) if !edge.beats(old) => Ok(false),
                _ => {
                    slot.insert(n, edge);
                    Ok(true)
                }
            }
        } else {
            match self.history_edges.get(&edge.id) {
                Some(old) if !edge.beats(old) => Ok(false),
                _ => {
                    self.history_edges.insert(edge.id, edge);
                    Ok(true)
                }
            }
        }
    }

    /// Removes an edge; absent edges are a no-op.
    pub fn remove_edge(&mut self, id: &EdgeId) -> bool {
        if let Some((e, n)) = id.as_eroi_edge() {
            let Some(slot) = self.eroi_candidates.get_mut(&e) else {
                return false;
            };
            let removed = slot.remove(&n).is_some();
            if slot.is_empty() {
                self.eroi_candidates.remove(&e);
            }
            removed
        } else {
            self.history_edges.remove(id).is_some()
        }
    }

    /// Moves a region's state forward; older states are ignored. A dead
    /// region loses all of its edges.
    pub fn advance_eroi(&mut self, id: EroiId, to: EroiState) -> Result<bool, DtgError> {
        let from = self.check_eroi(id)?.state;
        if to <= from {
            if to < from {
                self.recorder.stale_ignored += 1;
            }
            return Ok(false);
        }
        self.recorder.eroi(id, from, to);
        self.erois[id as usize].state = to;
        if to == EroiState::Dead {
            self.eroi_candidates.remove(&id);
        }
        Ok(true)
    }

    /// Moves a viewpoint's state forward; a dead viewpoint invalidates the
    /// proposals that end at it.
    pub fn advance_viewpoint(&mut self, id: EroiId, idx: u8, to: ViewpointState) -> Result<bool, DtgError> {
        let eroi = self.check_eroi(id)?;
        let from = eroi
            .viewpoints
            .get(idx as usize)
            .ok_or(DtgError::UnknownViewpoint(id, idx))?
            .state;
        if to <= from {
            if to < from {
                self.recorder.stale_ignored += 1;
            }
            return Ok(false);
        }
        self.recorder.viewpoint(id, idx, from, to);
        self.erois[id as usize].viewpoints[idx as usize].state = to;
        if to == ViewpointState::Dead {
            if let Some(slot) = self.eroi_candidates.get_mut(&id) {
                slot.retain(|_, e| e.viewpoint != Some(idx));
                if slot.is_empty() {
                    self.eroi_candidates.remove(&id);
                }
            }
        }
        Ok(true)
    }

    /// Replaces an agent's link set wholesale. Distances are stored at wire
    /// precision.
    pub fn set_links(&mut self, agent: AgentId, links: BTreeMap<NodeRef, f64>) -> bool {
        let links: BTreeMap<NodeRef, f64> = links.into_iter().map(|(k, d)| (k, d as f32 as f64)).collect();
        if self.uav_links.get(&agent) == Some(&links) {
            return false;
        }
        self.uav_links.insert(agent, links);
        true
    }
}
