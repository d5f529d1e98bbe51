//! Little-endian, fixed-width wire format. Every message is an 11-byte
//! header (kind u8, sender u16, sequence u32, payload length u32) followed
//! by a payload of back-to-back records of the kind's layout.

use thiserror::Error;

use super::delta::{EdgeRecord, EroiStateRecord, GraphDelta, NodeRecord, ViewpointStateRecord, WirePoint};
use crate::dtg::{AgentId, EdgeId, EroiId, EroiState, NodeId, NodeRef, ViewpointState};

pub const HEADER_LEN: usize = 11;
/// Bytes per voxel in a baseline map chunk: linear index u32 + state u8.
pub const VOXEL_RECORD_LEN: usize = 5;

const NODE_RECORD_LEN: usize = 6 + 12;
const ENDPOINT_LEN: usize = 7;
const EDGE_FIXED_LEN: usize = 2 * ENDPOINT_LEN + 4 + 2;
const EROI_STATE_LEN: usize = 5;
const VIEWPOINT_STATE_LEN: usize = 6;
const LINK_LEN: usize = ENDPOINT_LEN + 4;
const INTENT_LEN: usize = 4 + 6 + 4;

const NO_VIEWPOINT: u8 = u8::MAX;
const NO_AGENT: u16 = u16::MAX;

#[derive(Debug, Error, PartialEq)]
pub enum WireError {
    #[error("payload of {0} bytes exceeds the 32-bit length field")]
    PayloadTooLarge(usize),
    #[error("truncated message: need {need} bytes, have {have}")]
    Truncated { need: usize, have: usize },
    #[error("unknown message kind {0}")]
    UnknownKind(u8),
    #[error("malformed payload: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum MessageKind {
    NodeAdd = 1,
    EdgeAdd = 2,
    EdgeDel = 3,
    EroiState = 4,
    ViewpointState = 5,
    UavLinks = 6,
    TargetIntent = 7,
    MapChunk = 8,
}

impl MessageKind {
    pub fn from_u8(v: u8) -> Option<Self> {
        use MessageKind::*;
        Some(match v {
            1 => NodeAdd,
            2 => EdgeAdd,
            3 => EdgeDel,
            4 => EroiState,
            5 => ViewpointState,
            6 => UavLinks,
            7 => TargetIntent,
            8 => MapChunk,
            _ => return None,
        })
    }

    /// Graph synchronization traffic as opposed to the map-sharing baseline.
    pub fn is_cooperation(self) -> bool {
        self != MessageKind::MapChunk
    }
}

/// Nodes an agent is directly connected to and its distance to each.
#[derive(Debug, Clone, PartialEq)]
pub struct UavLinksMsg {
    pub links: Vec<(NodeRef, f32)>,
}

/// Current exploration target of the sender and its estimated arrival time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetIntentMsg {
    pub eroi: EroiId,
    pub node: Option<NodeId>,
    pub t_i: f32,
}

/// Baseline map sharing: newly known voxels as (linear index, state).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MapChunk {
    pub voxels: Vec<(u32, u8)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    NodeAdd(Vec<NodeRecord>),
    EdgeAdd(Vec<EdgeRecord>),
    EdgeDel(Vec<EdgeId>),
    EroiState(Vec<EroiStateRecord>),
    ViewpointState(Vec<ViewpointStateRecord>),
    UavLinks(UavLinksMsg),
    TargetIntent(TargetIntentMsg),
    MapChunk(MapChunk),
}

impl Payload {
    pub fn kind(&self) -> MessageKind {
        match self {
            Payload::NodeAdd(_) => MessageKind::NodeAdd,
            Payload::EdgeAdd(_) => MessageKind::EdgeAdd,
            Payload::EdgeDel(_) => MessageKind::EdgeDel,
            Payload::EroiState(_) => MessageKind::EroiState,
            Payload::ViewpointState(_) => MessageKind::ViewpointState,
            Payload::UavLinks(_) => MessageKind::UavLinks,
            Payload::TargetIntent(_) => MessageKind::TargetIntent,
            Payload::MapChunk(_) => MessageKind::MapChunk,
        }
    }

    /// Graph records carried by this payload as a delta, if it is one.
    pub fn as_delta(&self) -> Option<GraphDelta> {
        let mut d = GraphDelta::default();
        match self {
            Payload::NodeAdd(v) => d.nodes = v.clone(),
            Payload::EdgeAdd(v) => d.edges_added = v.clone(),
            Payload::EdgeDel(v) => d.edges_removed = v.clone(),
            Payload::EroiState(v) => d.eroi_states = v.clone(),
            Payload::ViewpointState(v) => d.viewpoint_states = v.clone(),
            _ => return None,
        }
        Some(d)
    }
}

impl GraphDelta {
    /// Splits into one payload per non-empty record kind, in the order a
    /// receiver applies them.
    pub fn to_payloads(&self) -> Vec<Payload> {
        let mut out = Vec::new();
        if !self.nodes.is_empty() {
            out.push(Payload::NodeAdd(self.nodes.clone()));
        }
        if !self.eroi_states.is_empty() {
            out.push(Payload::EroiState(self.eroi_states.clone()));
        }
        if !self.viewpoint_states.is_empty() {
            out.push(Payload::ViewpointState(self.viewpoint_states.clone()));
        }
        if !self.edges_removed.is_empty() {
            out.push(Payload::EdgeDel(self.edges_removed.clone()));
        }
        if !self.edges_added.is_empty() {
            out.push(Payload::EdgeAdd(self.edges_added.clone()));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WireMessage {
    pub sender: AgentId,
    pub seq: u32,
    pub payload: Payload,
}

pub fn encode(msg: &WireMessage) -> Result<Vec<u8>, WireError> {
    let mut body = Vec::new();
    encode_payload(&msg.payload, &mut body);
    let len = u32::try_from(body.len()).map_err(|_| WireError::PayloadTooLarge(body.len()))?;
    let mut out = Vec::with_capacity(HEADER_LEN + body.len());
    out.push(msg.payload.kind() as u8);
    out.extend_from_slice(&msg.sender.to_le_bytes());
    out.extend_from_slice(&msg.seq.to_le_bytes());
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(&body);
    Ok(out)
}

/// Size of the encoded message without building it.
pub fn encoded_len(payload: &Payload) -> usize {
    HEADER_LEN
        + match payload {
            Payload::NodeAdd(v) => v.len() * NODE_RECORD_LEN,
            Payload::EdgeAdd(v) => v.iter().map(|e| EDGE_FIXED_LEN + 12 * e.path.len()).sum(),
            Payload::EdgeDel(v) => v.len() * 2 * ENDPOINT_LEN,
            Payload::EroiState(v) => v.len() * EROI_STATE_LEN,
            Payload::ViewpointState(v) => v.len() * VIEWPOINT_STATE_LEN,
            Payload::UavLinks(m) => m.links.len() * LINK_LEN,
            Payload::TargetIntent(_) => INTENT_LEN,
            Payload::MapChunk(c) => c.voxels.len() * VOXEL_RECORD_LEN,
        }
}

pub fn decode(bytes: &[u8]) -> Result<WireMessage, WireError> {
    if bytes.len() < HEADER_LEN {
        return Err(WireError::Truncated {
            need: HEADER_LEN,
            have: bytes.len(),
        });
    }
    let kind = MessageKind::from_u8(bytes[0]).ok_or(WireError::UnknownKind(bytes[0]))?;
    let sender = u16::from_le_bytes([bytes[1], bytes[2]]);
    let seq = u32::from_le_bytes(bytes[3..7].try_into().unwrap());
    let len = u32::from_le_bytes(bytes[7..11].try_into().unwrap()) as usize;
    if bytes.len() != HEADER_LEN + len {
        return Err(WireError::Truncated {
            need: HEADER_LEN + len,
            have: bytes.len(),
        });
    }
    let mut r = Reader { buf: &bytes[HEADER_LEN..] };
    let payload = decode_payload(kind, &mut r)?;
    if !r.buf.is_empty() {
        return Err(WireError::Malformed(format!("{} trailing bytes", r.buf.len())));
    }
    Ok(WireMessage { sender, seq, payload })
}

fn put_point(out: &mut Vec<u8>, p: &WirePoint) {
    for c in p {
        out.extend_from_slice(&c.to_le_bytes());
    }
}

fn put_node_id(out: &mut Vec<u8>, id: NodeId) {
    out.extend_from_slice(&id.agent.to_le_bytes());
    out.extend_from_slice(&id.counter.to_le_bytes());
}

fn put_endpoint(out: &mut Vec<u8>, r: NodeRef, viewpoint: u8) {
    match r {
        NodeRef::History(id) => {
            out.push(0);
            put_node_id(out, id);
        }
        NodeRef::Eroi(id) => {
            out.push(1);
            out.extend_from_slice(&id.to_le_bytes());
            out.push(viewpoint);
            out.push(0);
        }
    }
}

fn encode_payload(p: &Payload, out: &mut Vec<u8>) {
    match p {
        Payload::NodeAdd(v) => {
            for n in v {
                put_node_id(out, n.id);
                put_point(out, &n.position);
            }
        }
        Payload::EdgeAdd(v) => {
            for e in v {
                let vp = e.viewpoint.unwrap_or(NO_VIEWPOINT);
                put_endpoint(out, e.id.a, vp);
                put_endpoint(out, e.id.b, vp);
                out.extend_from_slice(&e.weight.to_le_bytes());
                out.extend_from_slice(&(e.path.len() as u16).to_le_bytes());
                for w in &e.path {
                    put_point(out, w);
                }
            }
        }
        Payload::EdgeDel(v) => {
            for id in v {
                put_endpoint(out, id.a, NO_VIEWPOINT);
                put_endpoint(out, id.b, NO_VIEWPOINT);
            }
        }
        Payload::EroiState(v) => {
            for s in v {
                out.extend_from_slice(&s.id.to_le_bytes());
                out.push(s.state as u8);
            }
        }
        Payload::ViewpointState(v) => {
            for s in v {
                out.extend_from_slice(&s.eroi.to_le_bytes());
                out.push(s.index);
                out.push(s.state as u8);
            }
        }
        Payload::UavLinks(m) => {
            for (r, d) in &m.links {
                put_endpoint(out, *r, NO_VIEWPOINT);
                out.extend_from_slice(&d.to_le_bytes());
            }
        }
        Payload::TargetIntent(m) => {
            out.extend_from_slice(&m.eroi.to_le_bytes());
            put_node_id(out, m.node.unwrap_or(NodeId::new(NO_AGENT, u32::MAX)));
            out.extend_from_slice(&m.t_i.to_le_bytes());
        }
        Payload::MapChunk(c) => {
            for (v, s) in &c.voxels {
                out.extend_from_slice(&v.to_le_bytes());
                out.push(*s);
            }
        }
    }
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        if self.buf.len() < n {
            return Err(WireError::Truncated {
                need: n,
                have: self.buf.len(),
            });
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8, WireError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, WireError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32, WireError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn point(&mut self) -> Result<WirePoint, WireError> {
        Ok([self.f32()?, self.f32()?, self.f32()?])
    }

    fn node_id(&mut self) -> Result<NodeId, WireError> {
        Ok(NodeId::new(self.u16()?, self.u32()?))
    }

    fn endpoint(&mut self) -> Result<(NodeRef, u8), WireError> {
        match self.u8()? {
            0 => Ok((NodeRef::History(self.node_id()?), NO_VIEWPOINT)),
            1 => {
                let id = self.u32()?;
                let vp = self.u8()?;
                self.u8()?;
                Ok((NodeRef::Eroi(id), vp))
            }
            t => Err(WireError::Malformed(format!("endpoint tag {t}"))),
        }
    }

    fn edge_id(&mut self) -> Result<(EdgeId, u8), WireError> {
        let (a, va) = self.endpoint()?;
        let (b, vb) = self.endpoint()?;
        let id = EdgeId::new(a, b).ok_or_else(|| WireError::Malformed("invalid edge endpoints".into()))?;
        if id.a != a {
            return Err(WireError::Malformed("edge endpoints out of order".into()));
        }
        Ok((id, if va != NO_VIEWPOINT { va } else { vb }))
    }
}

fn records<T>(r: &mut Reader, mut f: impl FnMut(&mut Reader) -> Result<T, WireError>) -> Result<Vec<T>, WireError> {
    let mut out = Vec::new();
    while !r.buf.is_empty() {
        out.push(f(r)?);
    }
    Ok(out)
}

fn decode_payload(kind: MessageKind, r: &mut Reader) -> Result<Payload, WireError> {
    Ok(match kind {
        MessageKind::NodeAdd => Payload::NodeAdd(records(r, |r| {
            Ok(NodeRecord {
                id: r.node_id()?,
                position: r.point()?,
            })
        })?),
        MessageKind::EdgeAdd => Payload::EdgeAdd(records(r, |r| {
            let (id, vp) = r.edge_id()?;
            let weight = r.f32()?;
            let n = r.u16()? as usize;
            let path = (0..n).map(|_| r.point()).collect::<Result<_, _>>()?;
            let viewpoint = id.as_eroi_edge().map(|_| vp);
            Ok(EdgeRecord {
                id,
                viewpoint,
                weight,
                path,
            })
        })?),
        MessageKind::EdgeDel => Payload::EdgeDel(records(r, |r| Ok(r.edge_id()?.0))?),
        MessageKind::EroiState => Payload::EroiState(records(r, |r| {
            let id = r.u32()?;
            let s = r.u8()?;
            let state = EroiState::from_u8(s).ok_or_else(|| WireError::Malformed(format!("region state {s}")))?;
            Ok(EroiStateRecord { id, state })
        })?),
        MessageKind::ViewpointState => Payload::ViewpointState(records(r, |r| {
            let eroi = r.u32()?;
            let index = r.u8()?;
            let s = r.u8()?;
            let state =
                ViewpointState::from_u8(s).ok_or_else(|| WireError::Malformed(format!("viewpoint state {s}")))?;
            Ok(ViewpointStateRecord { eroi, index, state })
        })?),
        MessageKind::UavLinks => Payload::UavLinks(UavLinksMsg {
            links: records(r, |r| Ok((r.endpoint()?.0, r.f32()?)))?,
        }),
        MessageKind::TargetIntent => {
            let eroi = r.u32()?;
            let node = r.node_id()?;
            let t_i = r.f32()?;
            Payload::TargetIntent(TargetIntentMsg {
                eroi,
                node: (node.agent != NO_AGENT).then_some(node),
                t_i,
            })
        }
        MessageKind::MapChunk => Payload::MapChunk(MapChunk {
            voxels: records(r, |r| Ok((r.u32()?, r.u8()?)))?,
        }),
    })
}
