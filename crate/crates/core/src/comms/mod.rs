//! Incremental graph synchronization: wire format, simulated broadcast
//! network, byte accounting, and the voxel-chunk sharing baseline.

mod delta;
mod network;
mod wire;

use std::collections::BTreeMap;

use thiserror::Error;

pub use delta::*;
pub use network::{dump_log, ledger_from_dump, ByteLedger, Delivery, LogEntry, NetworkConfig, NetworkSim};
pub use wire::{
    decode, encode, encoded_len, MapChunk, MessageKind, Payload, TargetIntentMsg, UavLinksMsg, WireError,
    WireMessage, HEADER_LEN, VOXEL_RECORD_LEN,
};

use crate::dtg::{AgentId, DtgError, MrDtg, NodeRef};
use crate::world::{VoxelGrid, VoxelIndex};

/// Largest baseline chunk payload.
pub const CHUNK_PAYLOAD: usize = 1400;

#[derive(Debug, Error, PartialEq)]
pub enum ProtocolError {
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error(transparent)]
    Graph(#[from] DtgError),
}

/// What a received message meant to the receiver beyond graph changes.
#[derive(Debug, Clone, PartialEq)]
pub enum Received {
    Graph { changed: usize },
    Links { changed: bool },
    Intent { sender: AgentId, seq: u32, intent: TargetIntentMsg },
    MapChunk,
}

/// Decodes a message and applies it to `replica`.
pub fn receive(replica: &mut MrDtg, bytes: &[u8]) -> Result<Received, ProtocolError> {
    let msg = decode(bytes)?;
    if let Some(delta) = msg.payload.as_delta() {
        let changed = apply_delta(replica, &delta, msg.sender)?;
        return Ok(Received::Graph { changed });
    }
    Ok(match msg.payload {
        Payload::UavLinks(l) => {
            let links: BTreeMap<NodeRef, f64> = l.links.iter().map(|(n, d)| (*n, *d as f64)).collect();
            Received::Links {
                changed: replica.set_links(msg.sender, links),
            }
        }
        Payload::TargetIntent(intent) => Received::Intent {
            sender: msg.sender,
            seq: msg.seq,
            intent,
        },
        Payload::MapChunk(_) => Received::MapChunk,
        _ => unreachable!("graph payloads handled above"),
    })
}

pub fn links_payload(links: &BTreeMap<NodeRef, f64>) -> Payload {
    Payload::UavLinks(UavLinksMsg {
        links: links.iter().map(|(n, d)| (*n, *d as f32)).collect(),
    })
}

/// Baseline map sharing: newly known voxels packed into chunks of at most
/// `CHUNK_PAYLOAD` bytes.
pub fn baseline_chunks(grid: &VoxelGrid, changed: &[VoxelIndex]) -> Vec<Payload> {
    changed
        .chunks(CHUNK_PAYLOAD / VOXEL_RECORD_LEN)
        .map(|c| {
            Payload::MapChunk(MapChunk {
                voxels: c.iter().map(|v| (*v, grid.state(*v) as u8)).collect(),
            })
        })
        .collect()
}

/// Shares a tick's newly known voxels through the baseline channel.
pub fn baseline_chunk_share(
    net: &mut NetworkSim,
    grid: &VoxelGrid,
    changed: &[VoxelIndex],
    sender: AgentId,
    now: f64,
) -> Result<(), WireError> {
    for p in baseline_chunks(grid, changed) {
        net.broadcast_ledger_only(sender, p, now)?;
    }
    Ok(())
}

/// Byte serialization of the shared part of a replica (nodes, edges,
/// region and viewpoint states) in ascending id order. Equal replicas give
/// equal bytes.
pub fn canonical_bytes(g: &MrDtg) -> Vec<u8> {
    let mut out = Vec::new();
    let nodes: Vec<NodeRecord> = g
        .nodes()
        .values()
        .map(|n| NodeRecord {
            id: n.id,
            position: to_wire(&n.position),
        })
        .collect();
    let edges = |it: &mut dyn Iterator<Item = &crate::dtg::TopoEdge>, out: &mut Vec<u8>| {
        let recs: Vec<EdgeRecord> = it.map(EdgeRecord::from_edge).collect();
        out.extend(encode_body(Payload::EdgeAdd(recs)));
    };
    out.extend(encode_body(Payload::NodeAdd(nodes)));
    edges(&mut g.history_edges().values(), &mut out);
    edges(&mut g.all_eroi_candidates(), &mut out);
    for e in g.history_edges().values().chain(g.all_eroi_candidates()) {
        out.extend_from_slice(&e.writer.to_le_bytes());
    }
    for e in g.erois() {
        out.push(e.state as u8);
        out.extend(e.viewpoints.iter().map(|v| v.state as u8));
    }
    out
}

fn encode_body(p: Payload) -> Vec<u8> {
    let bytes = encode(&WireMessage {
        sender: 0,
        seq: 0,
        payload: p,
    })
    .expect("replica fits the length field");
    bytes[HEADER_LEN - 4..].to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dtg::{eroi_layout, DtgConfig, EdgeId, EroiState, NodeId, TopoEdge};
    use crate::world::{Aabb, OccupancyState, Vec3};

    fn replica() -> MrDtg {
        let bounds = Aabb::new(Vec3::zeros(), Vec3::new(10.0, 5.0, 3.0));
        let grid = VoxelGrid::new(&bounds, 0.2);
        let (layout, erois) = eroi_layout(&bounds, &grid, &DtgConfig::default());
        MrDtg::new(layout, erois)
    }

    fn h(a: u16, c: u32) -> NodeRef {
        NodeRef::History(NodeId::new(a, c))
    }

    #[test]
    fn chunk_sizes() {
        let bounds = Aabb::new(Vec3::zeros(), Vec3::new(10.0, 10.0, 3.0));
        let mut grid = VoxelGrid::new(&bounds, 0.2);
        grid.mark(0, OccupancyState::Occupied);
        let v: Vec<VoxelIndex> = (0..281).collect();
        let one = baseline_chunks(&grid, &v[..280]);
        assert_eq!(one.len(), 1);
        assert_eq!(encoded_len(&one[0]), HEADER_LEN + 1400);
        assert_eq!(baseline_chunks(&grid, &v).len(), 2);
        assert!(baseline_chunks(&grid, &[]).is_empty());
        let Payload::MapChunk(c) = &one[0] else { panic!() };
        assert_eq!(c.voxels[0], (0, 2));
    }

    #[test]
    fn baseline_share_is_ledgered_as_mapping() {
        let bounds = Aabb::new(Vec3::zeros(), Vec3::new(10.0, 10.0, 3.0));
        let grid = VoxelGrid::new(&bounds, 0.2);
        let mut net = NetworkSim::new(3, NetworkConfig::default());
        let v: Vec<VoxelIndex> = (0..281).collect();
        baseline_chunk_share(&mut net, &grid, &v, 0, 0.0).unwrap();
        assert_eq!(net.ledger().mapping, 2 * (2 * 11 + 281 * 5));
        assert_eq!(net.ledger().cooperation, 0);
        assert_eq!(net.in_flight(), 0);
    }

    #[test]
    fn duplicate_delta_is_a_no_op() {
        let mut g = replica();
        let mut d = GraphDelta::default();
        d.nodes.push(NodeRecord {
            id: NodeId::new(0, 0),
            position: [1.0, 1.0, 1.0],
        });
        d.eroi_states.push(EroiStateRecord {
            id: 1,
            state: EroiState::Active,
        });
        assert_eq!(apply_delta(&mut g, &d, 0).unwrap(), 2);
        let before = canonical_bytes(&g);
        assert_eq!(apply_delta(&mut g, &d, 0).unwrap(), 0);
        assert_eq!(canonical_bytes(&g), before);
    }

    #[test]
    fn dead_before_active_ends_dead() {
        let mut a = replica();
        let mut b = replica();
        let dead = GraphDelta {
            eroi_states: vec![EroiStateRecord {
                id: 1,
                state: EroiState::Dead,
            }],
            ..GraphDelta::default()
        };
        let active = GraphDelta {
            eroi_states: vec![EroiStateRecord {
                id: 1,
                state: EroiState::Active,
            }],
            ..GraphDelta::default()
        };
        apply_delta(&mut a, &dead, 0).unwrap();
        apply_delta(&mut a, &active, 1).unwrap();
        apply_delta(&mut b, &active, 1).unwrap();
        apply_delta(&mut b, &dead, 0).unwrap();
        assert_eq!(a.eroi(1).unwrap().state, EroiState::Dead);
        assert_eq!(canonical_bytes(&a), canonical_bytes(&b));
        assert!(a.recorder().illegal.is_empty());
    }

    #[test]
    fn concurrent_edges_merge_to_shorter_then_lower_writer() {
        let id = EdgeId::new(h(0, 0), h(1, 0)).unwrap();
        let short = TopoEdge::new(id, None, &[Vec3::zeros(), Vec3::new(2.0, 0.0, 0.0)], 1);
        let long = TopoEdge::new(id, None, &[Vec3::zeros(), Vec3::new(0.0, 2.0, 0.0), Vec3::new(2.0, 2.0, 0.0)], 0);
        let tie = TopoEdge::new(id, None, &[Vec3::zeros(), Vec3::new(0.0, 2.0, 0.0)], 0);
        let d = |e: &TopoEdge| GraphDelta {
            edges_added: vec![EdgeRecord::from_edge(e)],
            ..GraphDelta::default()
        };
        for order in [[&short, &long, &tie], [&tie, &long, &short], [&long, &short, &tie]] {
            let mut g = replica();
            for e in order {
                apply_delta(&mut g, &d(e), e.writer).unwrap();
            }
            let kept = g.history_edges().get(&id).unwrap();
            assert_eq!(kept.writer, 0);
            assert!((kept.weight - 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn unknown_region_is_rejected_whole() {
        let mut g = replica();
        let d = GraphDelta {
            nodes: vec![NodeRecord {
                id: NodeId::new(0, 0),
                position: [0.0; 3],
            }],
            eroi_states: vec![EroiStateRecord {
                id: 999,
                state: EroiState::Active,
            }],
            ..GraphDelta::default()
        };
        assert_eq!(apply_delta(&mut g, &d, 0), Err(DtgError::UnknownEroi(999)));
        assert!(g.nodes().is_empty());
    }

    #[test]
    fn links_and_intents_through_receive() {
        let mut g = replica();
        let mut links = BTreeMap::new();
        links.insert(h(0, 0), 7.2);
        let bytes = encode(&WireMessage {
            sender: 2,
            seq: 0,
            payload: links_payload(&links),
        })
        .unwrap();
        assert_eq!(receive(&mut g, &bytes).unwrap(), Received::Links { changed: true });
        assert!((g.links_of(2).unwrap()[&h(0, 0)] - 7.2).abs() < 1e-6);
        let intent = TargetIntentMsg {
            eroi: 3,
            node: None,
            t_i: 8.0,
        };
        let bytes = encode(&WireMessage {
            sender: 1,
            seq: 4,
            payload: Payload::TargetIntent(intent),
        })
        .unwrap();
        assert_eq!(
            receive(&mut g, &bytes).unwrap(),
            Received::Intent {
                sender: 1,
                seq: 4,
                intent
            }
        );
    }
}
