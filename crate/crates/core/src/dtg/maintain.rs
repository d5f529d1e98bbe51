use std::collections::BTreeMap;
use std::sync::Arc;

use super::eroi::{EroiState, ViewpointState};
use super::field::{expand_uav_dijkstra, LocalField};
use super::gain::viewpoint_gain;
use super::graph::{EdgeId, MrDtg, TopoEdge};
use super::tree::DijkstraTree;
use super::{AgentId, DtgConfig, DtgError, EroiId, NodeId, NodeRef};
use crate::comms::{to_wire, EdgeRecord, EroiStateRecord, GraphDelta, NodeRecord, ViewpointStateRecord};
use crate::world::{AgentPose, OccupancyState, SensorModel, Vec3, VoxelGrid, VoxelIndex};

/// What one maintenance pass did.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MaintenanceReport {
    pub spawned: Option<NodeId>,
    pub absorbed_into: Option<NodeId>,
    pub eroi_changes: Vec<(EroiId, EroiState)>,
    pub viewpoint_changes: Vec<(EroiId, u8, ViewpointState)>,
    pub gains_evaluated: usize,
}

/// Applies a local change to the replica and records it for broadcast, so
/// the local replica evolves exactly as the receivers' will.
struct Emitter<'a> {
    me: AgentId,
    replica: &'a mut MrDtg,
    out: &'a mut GraphDelta,
}

impl Emitter<'_> {
    fn node(&mut self, id: NodeId, position: Vec3) {
        if self.replica.add_node(id, position) {
            self.out.nodes.push(NodeRecord {
                id,
                position: to_wire(&position),
            });
        }
    }

    fn edge(&mut self, edge: TopoEdge) -> Result<bool, DtgError> {
        let rec = EdgeRecord::from_edge(&edge);
        let applied = self.replica.upsert_edge(edge)?;
        if applied {
            // A pending record for the same id is superseded; receivers must
            // not merge it against the newer one.
            self.out.edges_added.retain(|r| r.id != rec.id);
            self.out.edges_added.push(rec);
        }
        Ok(applied)
    }

    fn remove(&mut self, id: EdgeId) {
        self.replica.remove_edge(&id);
        self.out.edges_added.retain(|r| r.id != id);
        if !self.out.edges_removed.contains(&id) {
            self.out.edges_removed.push(id);
        }
    }

    fn eroi(&mut self, id: EroiId, state: EroiState) -> Result<bool, DtgError> {
        let applied = self.replica.advance_eroi(id, state)?;
        if applied {
            self.out.eroi_states.push(EroiStateRecord { id, state });
        }
        Ok(applied)
    }

    fn viewpoint(&mut self, eroi: EroiId, index: u8, state: ViewpointState) -> Result<bool, DtgError> {
        let applied = self.replica.advance_viewpoint(eroi, index, state)?;
        if applied {
            self.out.viewpoint_states.push(ViewpointStateRecord { eroi, index, state });
        }
        Ok(applied)
    }
}

/// The region connection this agent last broadcast.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Proposal {
    node: NodeId,
    viewpoint: u8,
    weight: f64,
}

/// Agent-local half of graph maintenance: Dijkstra trees of the nodes this
/// agent created, the latest local field, and outstanding region proposals.
#[derive(Debug, Clone)]
pub struct DtgAgent {
    id: AgentId,
    next_counter: u32,
    trees: BTreeMap<NodeId, DijkstraTree>,
    field: Option<LocalField>,
    proposals: BTreeMap<EroiId, Proposal>,
    voxel_eroi: Arc<Vec<EroiId>>,
}

impl DtgAgent {
    /// `voxel_eroi` maps each voxel to the region containing its centre.
    pub fn new(id: AgentId, voxel_eroi: Arc<Vec<EroiId>>) -> Self {
        Self {
            id,
            next_counter: 0,
            trees: BTreeMap::new(),
            field: None,
            proposals: BTreeMap::new(),
            voxel_eroi,
        }
    }

    pub fn id(&self) -> AgentId {
        self.id
    }

    pub fn field(&self) -> Option<&LocalField> {
        self.field.as_ref()
    }

    pub fn trees(&self) -> &BTreeMap<NodeId, DijkstraTree> {
        &self.trees
    }

    pub fn tree(&self, id: NodeId) -> Option<&DijkstraTree> {
        self.trees.get(&id)
    }

    fn emitter<'a>(&self, replica: &'a mut MrDtg, out: &'a mut GraphDelta) -> Emitter<'a> {
        Emitter {
            me: self.id,
            replica,
            out,
        }
    }

    /// One full maintenance pass after a map update: local search, node
    /// spawning or tree expansion, region lifecycle, region connection.
    #[allow(clippy::too_many_arguments)]
    pub fn maintain(
        &mut self,
        replica: &mut MrDtg,
        grid: &VoxelGrid,
        pose: &AgentPose,
        changed: &[VoxelIndex],
        gain_sensor: &SensorModel,
        cfg: &DtgConfig,
        out: &mut GraphDelta,
    ) -> Result<MaintenanceReport, DtgError> {
        let mut report = MaintenanceReport::default();
        let field = expand_uav_dijkstra(grid, pose, cfg)?;
        match self.maybe_spawn_history_node(&field, replica, grid, cfg, out)? {
            SpawnOutcome::Spawned(id) => report.spawned = Some(id),
            SpawnOutcome::Absorbed(id) => report.absorbed_into = Some(id),
        }
        self.field = Some(field);
        self.update_erois(replica, grid, changed, gain_sensor, cfg, out, &mut report)?;
        self.connect_erois(replica, grid, cfg, out)?;
        Ok(report)
    }

    /// Creates a node at the agent when no own node lies in the field within
    /// `p_th`; otherwise the closest own node absorbs the field.
    pub fn maybe_spawn_history_node(
        &mut self,
        field: &LocalField,
        replica: &mut MrDtg,
        grid: &VoxelGrid,
        cfg: &DtgConfig,
        out: &mut GraphDelta,
    ) -> Result<SpawnOutcome, DtgError> {
        let closest = self
            .trees
            .iter()
            .filter_map(|(id, t)| field.cost(t.root()).map(|c| (c, *id)))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        match closest {
            Some((c, id)) if c <= cfg.p_th => {
                let tree = self.trees.get_mut(&id).expect("own tree");
                let fresh = tree.absorb_field(field, grid, cfg.connectivity);
                if !fresh.is_empty() {
                    self.connect_absorbed(id, &fresh, replica, grid, cfg, out)?;
                }
                Ok(SpawnOutcome::Absorbed(id))
            }
            _ => {
                let id = NodeId::new(self.id, self.next_counter);
                self.next_counter += 1;
                let position = grid.center(field.root());
                let tree = DijkstraTree::from_field(field);
                let mut em = self.emitter(replica, out);
                em.node(id, position);
                let edges = connect_new_node(id, &tree, &self.trees, em.replica, grid);
                for e in edges {
                    em.edge(e)?;
                }
                self.trees.insert(id, tree);
                Ok(SpawnOutcome::Spawned(id))
            }
        }
    }

    /// After node `id` absorbed `fresh` voxels: connect it to nodes its tree
    /// now reaches, and to own nodes through handshakes on the fresh voxels.
    /// Existing edges are replaced only when clearly shorter.
    fn connect_absorbed(
        &mut self,
        id: NodeId,
        fresh: &[VoxelIndex],
        replica: &mut MrDtg,
        grid: &VoxelGrid,
        cfg: &DtgConfig,
        out: &mut GraphDelta,
    ) -> Result<(), DtgError> {
        let tree = &self.trees[&id];
        let mut best: BTreeMap<NodeId, (f64, Vec<VoxelIndex>)> = BTreeMap::new();
        for (other, node) in replica.nodes() {
            if *other == id {
                continue;
            }
            let Some(v) = grid.voxel_at(&node.position) else { continue };
            if let Some(c) = tree.cost(v) {
                let mut p = tree.path_to_root(v).expect("tree path");
                p.reverse();
                best.insert(*other, (c, p));
            }
        }
        for (other, otree) in &self.trees {
            if *other == id {
                continue;
            }
            let hs = fresh
                .iter()
                .filter_map(|h| Some((tree.cost(*h)? + otree.cost(*h)?, *h)))
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            if let Some((c, h)) = hs {
                if best.get(other).is_none_or(|(bc, _)| c < *bc) {
                    best.insert(*other, (c, handshake_path(tree, otree, h)));
                }
            }
        }
        let mut em = self.emitter(replica, out);
        for (other, (c, voxels)) in best {
            let existing = em.replica.history_edge(id, other).map(|e| e.weight);
            if existing.is_some_and(|w| c >= w - cfg.edge_resend_margin) {
                continue;
            }
            em.edge(oriented_edge(id, other, &voxels, grid, em.me))?;
        }
        Ok(())
    }

    /// Region lifecycle for this tick's newly known voxels: activation,
    /// viewpoint scoring, and death by coverage or by dead viewpoints.
    #[allow(clippy::too_many_arguments)]
    pub fn update_erois(
        &mut self,
        replica: &mut MrDtg,
        grid: &VoxelGrid,
        changed: &[VoxelIndex],
        sensor: &SensorModel,
        cfg: &DtgConfig,
        out: &mut GraphDelta,
        report: &mut MaintenanceReport,
    ) -> Result<(), DtgError> {
        let mut touched: BTreeMap<EroiId, usize> = BTreeMap::new();
        for v in changed {
            let e = self.voxel_eroi[*v as usize];
            if e != EroiId::MAX {
                *touched.entry(e).or_default() += 1;
            }
        }
        let mut em = self.emitter(replica, out);
        for (&e, &n) in &touched {
            let eroi = em.replica.eroi_mut(e).ok_or(DtgError::UnknownEroi(e))?;
            eroi.known_voxels += n;
            if eroi.state == EroiState::Inactive && em.eroi(e, EroiState::Active)? {
                report.eroi_changes.push((e, EroiState::Active));
            }
        }
        for &e in touched.keys() {
            if em.replica.eroi(e).map(|r| r.state) != Some(EroiState::Active) {
                continue;
            }
            let count = em.replica.eroi(e).map_or(0, |r| r.viewpoints.len());
            for i in 0..count {
                let vp = &em.replica.eroi(e).expect("region").viewpoints[i];
                if vp.state == ViewpointState::Dead {
                    continue;
                }
                let next = match grid.voxel_at(&vp.position).map(|v| grid.state(v)) {
                    None | Some(OccupancyState::Occupied) => Some(ViewpointState::Dead),
                    Some(OccupancyState::Unknown) => None,
                    Some(OccupancyState::Free) => {
                        let gain = viewpoint_gain(grid, vp, sensor);
                        report.gains_evaluated += 1;
                        em.replica.eroi_mut(e).expect("region").viewpoints[i].gain = gain;
                        Some(if gain >= cfg.g_th {
                            ViewpointState::Active
                        } else {
                            ViewpointState::Dead
                        })
                    }
                };
                if let Some(state) = next {
                    if em.viewpoint(e, i as u8, state)? {
                        report.viewpoint_changes.push((e, i as u8, state));
                    }
                }
            }
        }
        let dying: Vec<EroiId> = em
            .replica
            .erois()
            .iter()
            .filter(|r| r.state == EroiState::Active)
            .filter(|r| {
                r.coverage() >= cfg.e_th || r.viewpoints.iter().all(|v| v.state == ViewpointState::Dead)
            })
            .map(|r| r.id)
            .collect();
        for e in dying {
            if em.eroi(e, EroiState::Dead)? {
                report.eroi_changes.push((e, EroiState::Dead));
            }
        }
        Ok(())
    }

    /// Keeps each active region connected through its shortest
    /// (active viewpoint, own node) pair found in this agent's trees.
    pub fn connect_erois(
        &mut self,
        replica: &mut MrDtg,
        grid: &VoxelGrid,
        cfg: &DtgConfig,
        out: &mut GraphDelta,
    ) -> Result<(), DtgError> {
        let me = self.id;
        let mut plans: Vec<(EroiId, Option<(f64, NodeId, u8)>)> = Vec::new();
        for eroi in replica.erois() {
            if eroi.state != EroiState::Active {
                if eroi.state == EroiState::Dead {
                    self.proposals.remove(&eroi.id);
                }
                continue;
            }
            let mut best: Option<(f64, NodeId, u8)> = None;
            for (i, vp) in eroi.viewpoints.iter().enumerate() {
                if vp.state != ViewpointState::Active {
                    continue;
                }
                let Some(v) = grid.voxel_at(&vp.position) else { continue };
                for (nid, tree) in &self.trees {
                    if let Some(c) = tree.cost(v) {
                        let cand = (c, *nid, i as u8);
                        if best.is_none_or(|b| (cand.0, cand.1, cand.2) < (b.0, b.1, b.2)) {
                            best = Some(cand);
                        }
                    }
                }
            }
            plans.push((eroi.id, best));
        }
        for (e, best) in plans {
            let prev = self.proposals.get(&e).copied();
            let eroi_ref = NodeRef::Eroi(e);
            match best {
                None => {
                    if let Some(p) = prev {
                        let mut em = Emitter { me, replica, out };
                        em.remove(EdgeId::new(eroi_ref, NodeRef::History(p.node)).expect("edge id"));
                        self.proposals.remove(&e);
                    }
                }
                Some((c, node, vp)) => {
                    if let Some(p) = prev {
                        let same = p.node == node && p.viewpoint == vp;
                        if same && c >= p.weight - cfg.edge_resend_margin {
                            continue;
                        }
                        if !same {
                            let mut em = Emitter { me, replica, out };
                            em.remove(EdgeId::new(eroi_ref, NodeRef::History(p.node)).expect("edge id"));
                        }
                    }
                    let tree = &self.trees[&node];
                    let target = grid
                        .voxel_at(&replica.eroi(e).expect("region").viewpoints[vp as usize].position)
                        .expect("viewpoint voxel");
                    let mut voxels = tree.path_to_root(target).expect("tree path");
                    voxels.reverse();
                    let path: Vec<Vec3> = voxels.iter().map(|v| grid.center(*v)).collect();
                    let id = EdgeId::new(NodeRef::History(node), eroi_ref).expect("edge id");
                    let edge = TopoEdge::new(id, Some(vp), &path, me);
                    let weight = edge.weight;
                    let mut em = Emitter { me, replica, out };
                    em.edge(edge)?;
                    self.proposals.insert(
                        e,
                        Proposal {
                            node,
                            viewpoint: vp,
                            weight,
                        },
                    );
                }
            }
        }
        Ok(())
    }

    /// Rebuilds this agent's link set from its current field: every history
    /// node and every active region (through its closest active viewpoint)
    /// that the field reaches.
    pub fn refresh_uav_links(&self, replica: &mut MrDtg, grid: &VoxelGrid) -> BTreeMap<NodeRef, f64> {
        let links = match &self.field {
            Some(field) => compute_links(replica, grid, field),
            None => BTreeMap::new(),
        };
        replica.set_links(self.id, links.clone());
        replica.links_of(self.id).cloned().unwrap_or_default()
    }

    /// Marks a viewpoint as explored after the agent has visited it.
    pub fn retire_viewpoint(
        &mut self,
        replica: &mut MrDtg,
        eroi: EroiId,
        index: u8,
        out: &mut GraphDelta,
    ) -> Result<bool, DtgError> {
        self.emitter(replica, out).viewpoint(eroi, index, ViewpointState::Dead)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpawnOutcome {
    Spawned(NodeId),
    Absorbed(NodeId),
}

/// Link map for a field: `node -> field cost`, regions at their closest
/// active viewpoint.
pub fn compute_links(replica: &MrDtg, grid: &VoxelGrid, field: &LocalField) -> BTreeMap<NodeRef, f64> {
    let mut links = BTreeMap::new();
    for (id, node) in replica.nodes() {
        if let Some(c) = grid.voxel_at(&node.position).and_then(|v| field.cost(v)) {
            links.insert(NodeRef::History(*id), c);
        }
    }
    for eroi in replica.erois() {
        if eroi.state != EroiState::Active {
            continue;
        }
        let best = eroi
            .viewpoints
            .iter()
            .filter(|vp| vp.state == ViewpointState::Active)
            .filter_map(|vp| grid.voxel_at(&vp.position).and_then(|v| field.cost(v)))
            .min_by(|a, b| a.total_cmp(b));
        if let Some(c) = best {
            links.insert(NodeRef::Eroi(eroi.id), c);
        }
    }
    links
}

fn handshake_path(from: &DijkstraTree, to: &DijkstraTree, h: VoxelIndex) -> Vec<VoxelIndex> {
    let mut p = from.path_to_root(h).expect("tree path");
    p.reverse();
    let back = to.path_to_root(h).expect("tree path");
    p.extend_from_slice(&back[1..]);
    p
}

/// Edge between two history nodes from a voxel path running `from -> to`.
fn oriented_edge(from: NodeId, to: NodeId, voxels: &[VoxelIndex], grid: &VoxelGrid, writer: AgentId) -> TopoEdge {
    let id = EdgeId::new(NodeRef::History(from), NodeRef::History(to)).expect("distinct nodes");
    let mut path: Vec<Vec3> = voxels.iter().map(|v| grid.center(*v)).collect();
    if id.a != NodeRef::History(from) {
        path.reverse();
    }
    TopoEdge::new(id, None, &path, writer)
}

/// Edges for a freshly created node: to every node whose voxel its tree
/// covers, and to every own node whose tree shares a voxel with it through
/// the cheapest shared ("handshake") voxel. One edge per pair, shortest kept.
pub fn connect_new_node(
    new: NodeId,
    tree: &DijkstraTree,
    own_trees: &BTreeMap<NodeId, DijkstraTree>,
    replica: &MrDtg,
    grid: &VoxelGrid,
) -> Vec<TopoEdge> {
    let mut best: BTreeMap<NodeId, (f64, Vec<VoxelIndex>)> = BTreeMap::new();
    for (id, node) in replica.nodes() {
        if *id == new {
            continue;
        }
        let Some(v) = grid.voxel_at(&node.position) else { continue };
        if let Some(c) = tree.cost(v) {
            let mut p = tree.path_to_root(v).expect("tree path");
            p.reverse();
            best.insert(*id, (c, p));
        }
    }
    for (id, other) in own_trees {
        if *id == new {
            continue;
        }
        let (small, large) = if tree.len() <= other.len() { (tree, other) } else { (other, tree) };
        let hs = small
            .iter()
            .filter_map(|(h, e)| large.cost(h).map(|c| (e.cost + c, h)))
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        if let Some((c, h)) = hs {
            if best.get(id).is_none_or(|(bc, _)| c < *bc) {
                best.insert(*id, (c, handshake_path(tree, other, h)));
            }
        }
    }
    best.into_iter()
        .map(|(id, (_, voxels))| oriented_edge(new, id, &voxels, grid, new.agent))
        .collect()
}
