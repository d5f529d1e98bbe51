use crate::dtg::{
    AgentId, DtgError, EdgeId, EroiId, EroiState, MrDtg, NodeId, TopoEdge, ViewpointState,
};
use crate::world::Vec3;

pub type WirePoint = [f32; 3];

pub fn to_wire(p: &Vec3) -> WirePoint {
    [p.x as f32, p.y as f32, p.z as f32]
}

pub fn from_wire(p: &WirePoint) -> Vec3 {
    Vec3::new(p[0] as f64, p[1] as f64, p[2] as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeRecord {
    pub id: NodeId,
    pub position: WirePoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeRecord {
    pub id: EdgeId,
    pub viewpoint: Option<u8>,
    pub weight: f32,
    pub path: Vec<WirePoint>,
}

impl EdgeRecord {
    pub fn from_edge(e: &TopoEdge) -> Self {
        Self {
            id: e.id,
            viewpoint: e.viewpoint,
            weight: e.weight as f32,
            path: e.path.iter().map(to_wire).collect(),
        }
    }

    /// Rebuilds the edge; the weight is recomputed from the path so sender
    /// and receivers agree bit for bit.
    pub fn to_edge(&self, writer: AgentId) -> TopoEdge {
        let path: Vec<Vec3> = self.path.iter().map(from_wire).collect();
        TopoEdge::new(self.id, self.viewpoint, &path, writer)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EroiStateRecord {
    pub id: EroiId,
    pub state: EroiState,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ViewpointStateRecord {
    pub eroi: EroiId,
    pub index: u8,
    pub state: ViewpointState,
}

/// Incremental graph changes produced by one agent since its last
/// broadcast. Only changed elements are listed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GraphDelta {
    pub nodes: Vec<NodeRecord>,
    pub edges_added: Vec<EdgeRecord>,
    pub edges_removed: Vec<EdgeId>,
    pub eroi_states: Vec<EroiStateRecord>,
    pub viewpoint_states: Vec<ViewpointStateRecord>,
}

impl GraphDelta {
    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
            && self.edges_added.is_empty()
            && self.edges_removed.is_empty()
            && self.eroi_states.is_empty()
            && self.viewpoint_states.is_empty()
    }

    pub fn clear(&mut self) {
        *self = Self::default();
    }

    pub fn record_count(&self) -> usize {
        self.nodes.len()
            + self.edges_added.len()
            + self.edges_removed.len()
            + self.eroi_states.len()
            + self.viewpoint_states.len()
    }
}

/// Applies a delta written by `writer`. Order: nodes, region states,
/// viewpoint states, edge removals, edge additions. Node/edge additions are
/// idempotent and states merge by maximum, so deltas from different writers
/// commute. Returns the number of records that changed the replica.
pub fn apply_delta(replica: &mut MrDtg, delta: &GraphDelta, writer: AgentId) -> Result<usize, DtgError> {
    validate(replica, delta)?;
    let mut changed = 0;
    for n in &delta.nodes {
        changed += replica.add_node(n.id, from_wire(&n.position)) as usize;
    }
    for s in &delta.eroi_states {
        changed += replica.advance_eroi(s.id, s.state)? as usize;
    }
    for s in &delta.viewpoint_states {
        changed += replica.advance_viewpoint(s.eroi, s.index, s.state)? as usize;
    }
    for id in &delta.edges_removed {
        changed += replica.remove_edge(id) as usize;
    }
    for e in &delta.edges_added {
        changed += replica.upsert_edge(e.to_edge(writer))? as usize;
    }
    Ok(changed)
}

/// Rejects a delta that names a region or viewpoint outside the fixed
/// layout before any of it is applied.
fn validate(replica: &MrDtg, delta: &GraphDelta) -> Result<(), DtgError> {
    let check_vp = |e: EroiId, i: u8| -> Result<(), DtgError> {
        let eroi = replica.eroi(e).ok_or(DtgError::UnknownEroi(e))?;
        if (i as usize) < eroi.viewpoints.len() {
            Ok(())
        } else {
            Err(DtgError::UnknownViewpoint(e, i))
        }
    };
    for s in &delta.eroi_states {
        replica.eroi(s.id).ok_or(DtgError::UnknownEroi(s.id))?;
    }
    for s in &delta.viewpoint_states {
        check_vp(s.eroi, s.index)?;
    }
    for id in delta.edges_removed.iter().chain(delta.edges_added.iter().map(|e| &e.id)) {
        if let Some((e, _)) = id.as_eroi_edge() {
            replica.eroi(e).ok_or(DtgError::UnknownEroi(e))?;
        }
    }
    for e in &delta.edges_added {
        if let Some((eroi, _)) = e.id.as_eroi_edge() {
            check_vp(eroi, e.viewpoint.unwrap_or(u8::MAX))?;
        }
    }
    Ok(())
}
