//! The multi-robot dynamic topological graph: history nodes with Dijkstra
//! trees, explorable regions (EROIs) with viewpoints, and path edges.
//!
//! Each agent owns one [`MrDtg`] replica. Shared content (nodes, edges,
//! region and viewpoint states, agent links) only changes through the
//! monotone mutation primitives on [`MrDtg`], which are used both for local
//! maintenance and for applying deltas received from peers. Dijkstra trees
//! never leave the agent that built them and live in [`DtgAgent`].

mod eroi;
mod field;
mod gain;
mod graph;
mod maintain;
mod tree;

pub use eroi::{eroi_layout, Eroi, EroiLayout, EroiState, Viewpoint, ViewpointState};
pub use field::{expand_uav_dijkstra, FieldEntry, LocalField};
pub(crate) use field::ordered;
pub use gain::{frontier_area, viewpoint_gain};
pub use graph::{path_length, EdgeId, HistoryNode, MrDtg, TopoEdge, TransitionRecorder};
pub use maintain::{compute_links, connect_new_node, DtgAgent, MaintenanceReport, SpawnOutcome};
pub use tree::DijkstraTree;

use thiserror::Error;

/// Agent (UAV) identifier. Also the tie-break key for partitions.
pub type AgentId = u16;

/// Index of a region in the fixed pre-partition of space.
pub type EroiId = u32;

/// History-node id; unique without coordination because each agent only
/// mints ids under its own agent id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId {
    pub agent: AgentId,
    pub counter: u32,
}

impl NodeId {
    pub fn new(agent: AgentId, counter: u32) -> Self {
        Self { agent, counter }
    }
}

impl std::fmt::Display for NodeId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "h{}.{}", self.agent, self.counter)
    }
}

/// A vertex of the topological graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeRef {
    History(NodeId),
    Eroi(EroiId),
}

impl std::fmt::Display for NodeRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NodeRef::History(n) => n.fmt(f),
            NodeRef::Eroi(e) => write!(f, "e{e}"),
        }
    }
}

/// Grid adjacency used by every voxel-level shortest-path search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Connectivity {
    #[default]
    Six,
    TwentySix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DtgConfig {
    /// Manhattan bound of the agent's local Dijkstra search (m).
    pub d_max: f64,
    /// Distance beyond which a new history node is spawned (m).
    pub p_th: f64,
    /// Minimum viewpoint gain for a viewpoint to stay active (m^2).
    pub g_th: f64,
    /// Region coverage at which it counts as explored.
    pub e_th: f64,
    /// Side of the cubic regions (m).
    pub eroi_side: f64,
    pub viewpoint_azimuths: usize,
    /// Sampling radii as fractions of half the region side.
    pub viewpoint_radii: Vec<f64>,
    pub connectivity: Connectivity,
    /// Edges are re-sent only when they shorten by more than this (m).
    pub edge_resend_margin: f64,
}

impl Default for DtgConfig {
    fn default() -> Self {
        Self {
            d_max: 10.0,
            p_th: 5.5,
            g_th: 1.3,
            e_th: 0.85,
            eroi_side: 5.0,
            viewpoint_azimuths: 8,
            viewpoint_radii: vec![0.35, 0.7],
            connectivity: Connectivity::Six,
            edge_resend_margin: 0.5,
        }
    }
}

impl DtgConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.p_th > 0.0 && self.p_th <= self.d_max) {
            return Err(format!("need 0 < p_th <= d_max, got p_th={} d_max={}", self.p_th, self.d_max));
        }
        if !(self.e_th > 0.0 && self.e_th <= 1.0) {
            return Err(format!("e_th must lie in (0, 1], got {}", self.e_th));
        }
        if !(self.g_th >= 0.0) {
            return Err(format!("g_th must be non-negative, got {}", self.g_th));
        }
        if !(self.eroi_side > 0.0) {
            return Err("eroi_side must be positive".into());
        }
        if self.viewpoint_azimuths == 0 || self.viewpoint_radii.is_empty() {
            return Err("at least one viewpoint per region is required".into());
        }
        if self.viewpoint_azimuths * self.viewpoint_radii.len() > 255 {
            return Err("at most 255 viewpoints per region".into());
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum DtgError {
    #[error("agent voxel is not known free")]
    PoseNotFree,
    #[error("unknown region id {0}")]
    UnknownEroi(EroiId),
    #[error("region {0} has no viewpoint {1}")]
    UnknownViewpoint(EroiId, u8),
}

/// Rounds a point to the precision carried on the wire so that local and
/// remote replicas hold identical values.
pub fn quantize(p: &crate::world::Vec3) -> crate::world::Vec3 {
    crate::world::Vec3::new(p.x as f32 as f64, p.y as f32 as f64, p.z as f32 as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        assert!(DtgConfig::default().validate().is_ok());
        let bad = DtgConfig {
            p_th: 11.0,
            ..DtgConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = DtgConfig {
            e_th: 0.0,
            ..DtgConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn node_ref_order_puts_history_first() {
        let h = NodeRef::History(NodeId::new(9, 9));
        let e = NodeRef::Eroi(0);
        assert!(h < e);
        assert!(NodeId::new(0, 5) < NodeId::new(1, 0));
    }
}
