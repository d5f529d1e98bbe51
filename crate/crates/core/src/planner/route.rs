use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};

use thiserror::Error;

use super::history_adjacency;
use crate::dtg::{ordered, EroiId, EroiState, LocalField, MrDtg, NodeId, ViewpointState};
use crate::world::{AgentPose, OccupancyState, Vec3, VoxelGrid, VoxelIndex};

#[derive(Debug, Error, PartialEq)]
pub enum RouteError {
    #[error("region {0} is not active")]
    NotActive(EroiId),
    #[error("no route to region {0}")]
    Unreachable(EroiId),
}

const UNSEEN: u32 = u32::MAX;

/// Breadth-first search over the agent's known-free voxels, run once and
/// shared by every route query of a planning call.
#[derive(Debug)]
pub struct DirectSearch {
    root: VoxelIndex,
    depth: Vec<u32>,
    parent: Vec<VoxelIndex>,
    order: Vec<VoxelIndex>,
}

impl DirectSearch {
    pub fn new(grid: &VoxelGrid, start: VoxelIndex) -> Self {
        let mut depth = vec![UNSEEN; grid.len()];
        let mut parent = vec![0; grid.len()];
        let mut queue = VecDeque::new();
        let mut order = Vec::new();
        if grid.is_free(start) {
            depth[start as usize] = 0;
            queue.push_back(start);
        }
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let d = depth[v as usize];
            for n in grid.neighbors6(v) {
                if depth[n as usize] == UNSEEN && grid.is_free(n) {
                    depth[n as usize] = d + 1;
                    parent[n as usize] = v;
                    queue.push_back(n);
                }
            }
        }
        Self {
            root: start,
            depth,
            parent,
            order,
        }
    }

    /// Reached voxels in breadth-first order.
    pub fn order(&self) -> &[VoxelIndex] {
        &self.order
    }

    pub fn steps(&self, v: VoxelIndex) -> Option<u32> {
        match self.depth.get(v as usize) {
            Some(&d) if d != UNSEEN => Some(d),
            _ => None,
        }
    }

    /// Voxels from the start to `v`, inclusive.
    pub fn path(&self, v: VoxelIndex) -> Option<Vec<VoxelIndex>> {
        self.steps(v)?;
        let mut out = vec![v];
        let mut cur = v;
        while cur != self.root {
            cur = self.parent[cur as usize];
            out.push(cur);
        }
        out.reverse();
        Some(out)
    }
}

/// Appends `p`, merging it into the last waypoint when they coincide.
fn push_point(path: &mut Vec<Vec3>, p: Vec3) {
    match path.last_mut() {
        Some(q) if (*q - p).norm() <= 1e-6 => *q = p,
        _ => path.push(p),
    }
}

/// Path from the agent to a viewpoint of `eroi`. Prefers a direct search
/// through the agent's own map, picking the nearest active viewpoint;
/// otherwise follows the graph: field path to a nearby node, history edges,
/// then the region's connecting edge.
pub fn retrieve_path(
    dtg: &MrDtg,
    grid: &VoxelGrid,
    field: &LocalField,
    pose: &AgentPose,
    eroi: EroiId,
    direct: &DirectSearch,
) -> Result<(u8, Vec<Vec3>), RouteError> {
    let region = dtg.eroi(eroi).filter(|r| r.state == EroiState::Active).ok_or(RouteError::NotActive(eroi))?;
    let best = region
        .viewpoints
        .iter()
        .enumerate()
        .filter(|(_, vp)| vp.state == ViewpointState::Active)
        .filter_map(|(i, vp)| {
            let v = grid.voxel_at(&vp.position)?;
            Some((direct.steps(v)?, i, v))
        })
        .min();
    if let Some((_, i, v)) = best {
        let mut path = vec![pose.position];
        for w in direct.path(v).expect("reached").into_iter().skip(1) {
            push_point(&mut path, grid.center(w));
        }
        push_point(&mut path, region.viewpoints[i].position);
        return Ok((i as u8, path));
    }
    graph_route(dtg, grid, field, pose, eroi).ok_or(RouteError::Unreachable(eroi))
}

/// Nearest reachable Free voxel `v` with an Unknown horizontal neighbour
/// `n` such that `accept(v, n)` holds. Returns `v`, the path and the yaw
/// facing `n`.
pub fn frontier_route(
    grid: &VoxelGrid,
    pose: &AgentPose,
    direct: &DirectSearch,
    mut accept: impl FnMut(VoxelIndex, VoxelIndex) -> bool,
) -> Option<(VoxelIndex, Vec<Vec3>, f64)> {
    for &v in direct.order() {
        let c = grid.center(v);
        let unknown = grid.neighbors6(v).find(|n| {
            let d = grid.center(*n) - c;
            d.z.abs() < 1e-9 && grid.state(*n) == OccupancyState::Unknown && accept(v, *n)
        });
        let Some(n) = unknown else { continue };
        let mut path = vec![pose.position];
        for w in direct.path(v).expect("reached").into_iter().skip(1) {
            push_point(&mut path, grid.center(w));
        }
        let d = grid.center(n) - c;
        return Some((v, path, d.y.atan2(d.x)));
    }
    None
}

fn graph_route(
    dtg: &MrDtg,
    grid: &VoxelGrid,
    field: &LocalField,
    pose: &AgentPose,
    eroi: EroiId,
) -> Option<(u8, Vec<Vec3>)> {
    let edge = dtg.eroi_edge(eroi)?;
    let vp = edge.viewpoint?;
    let (_, goal) = edge.id.as_eroi_edge()?;
    let adj = history_adjacency(dtg);
    let mut dist: BTreeMap<NodeId, f64> = BTreeMap::new();
    let mut prev: BTreeMap<NodeId, NodeId> = BTreeMap::new();
    let mut heap = BinaryHeap::new();
    for (id, node) in dtg.nodes() {
        if let Some(c) = grid.voxel_at(&node.position).and_then(|v| field.cost(v)) {
            dist.insert(*id, c);
            heap.push(Reverse((ordered(c), *id)));
        }
    }
    let mut done = std::collections::BTreeSet::new();
    while let Some(Reverse((d, n))) = heap.pop() {
        if !done.insert(n) {
            continue;
        }
        if n == goal {
            break;
        }
        for (m, w) in adj.get(&n).into_iter().flatten() {
            let c = d.0 + w;
            if dist.get(m).is_none_or(|x| c < *x) {
                dist.insert(*m, c);
                prev.insert(*m, n);
                heap.push(Reverse((ordered(c), *m)));
            }
        }
    }
    if !done.contains(&goal) {
        return None;
    }
    let mut chain = vec![goal];
    while let Some(p) = prev.get(chain.last().unwrap()) {
        chain.push(*p);
    }
    chain.reverse();
    let first = dtg.node(chain[0])?;
    let mut path = vec![pose.position];
    for v in field.path_from_root(grid.voxel_at(&first.position)?)?.into_iter().skip(1) {
        push_point(&mut path, grid.center(v));
    }
    push_point(&mut path, first.position);
    for w in chain.windows(2) {
        let e = dtg.history_edge(w[0], w[1])?;
        let forward = e.id.as_history_edge()?.0 == w[0];
        let pts: Box<dyn Iterator<Item = &Vec3>> = if forward {
            Box::new(e.path.iter())
        } else {
            Box::new(e.path.iter().rev())
        };
        for p in pts {
            push_point(&mut path, *p);
        }
    }
    for p in &edge.path {
        push_point(&mut path, *p);
    }
    push_point(&mut path, dtg.eroi(eroi)?.viewpoints[vp as usize].position);
    Some((vp, erase_loops(grid, path)))
}

/// Cuts out every stretch that returns to an already visited voxel, so a
/// route never doubles back. End points are kept as given.
fn erase_loops(grid: &VoxelGrid, path: Vec<Vec3>) -> Vec<Vec3> {
    let Some(&goal) = path.last() else { return path };
    let mut out: Vec<Vec3> = Vec::with_capacity(path.len());
    let mut seen: BTreeMap<VoxelIndex, usize> = BTreeMap::new();
    for p in path {
        let Some(v) = grid.voxel_at(&p) else {
            out.push(p);
            continue;
        };
        if let Some(&i) = seen.get(&v) {
            for q in out.drain(i + 1..) {
                if let Some(w) = grid.voxel_at(&q) {
                    seen.remove(&w);
                }
            }
            continue;
        }
        seen.insert(v, out.len());
        out.push(p);
    }
    if let Some(last) = out.last_mut() {
        if grid.voxel_at(last) == grid.voxel_at(&goal) {
            *last = goal;
        } else {
            out.push(goal);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dtg::{eroi_layout, expand_uav_dijkstra, path_length, DtgConfig, EdgeId, NodeRef, TopoEdge};
    use crate::world::{Aabb, OccupancyState};

    struct Scene {
        grid: VoxelGrid,
        dtg: MrDtg,
    }

    fn scene() -> Scene {
        let bounds = Aabb::new(Vec3::zeros(), Vec3::new(10.0, 5.0, 1.0));
        let mut grid = VoxelGrid::new(&bounds, 0.2);
        let cfg = DtgConfig::default();
        let (layout, erois) = eroi_layout(&bounds, &grid, &cfg);
        // Only a corridor along y = 0.5 is known free.
        for x in 0..50 {
            for z in 0..5 {
                grid.mark(grid.linear([x, 2, z]), OccupancyState::Free);
            }
        }
        Scene {
            grid,
            dtg: MrDtg::new(layout, erois),
        }
    }

    #[test]
    fn direct_route_to_nearest_viewpoint() {
        let mut s = scene();
        s.dtg.advance_eroi(1, EroiState::Active).unwrap();
        // Put viewpoint 0 of region 1 on the corridor.
        let vp_pos = Vec3::new(7.1, 0.5, 0.5);
        s.dtg.eroi_mut(1).unwrap().viewpoints[0].position = vp_pos;
        s.dtg.advance_viewpoint(1, 0, ViewpointState::Active).unwrap();
        let pose = AgentPose::new(Vec3::new(1.05, 0.5, 0.5), 0.0);
        let field = expand_uav_dijkstra(&s.grid, &pose, &DtgConfig::default()).unwrap();
        let direct = DirectSearch::new(&s.grid, s.grid.voxel_at(&pose.position).unwrap());
        let (vp, path) = retrieve_path(&s.dtg, &s.grid, &field, &pose, 1, &direct).unwrap();
        assert_eq!(vp, 0);
        assert_eq!(path[0], pose.position);
        assert_eq!(*path.last().unwrap(), vp_pos);
        for w in path.windows(2) {
            assert!((w[1] - w[0]).norm() <= 0.2 * 3f64.sqrt() + 1e-9);
            assert!(s.grid.is_free(s.grid.voxel_at(&w[1]).unwrap()));
        }
        assert!((path_length(&path) - 6.05).abs() < 1e-6);
    }

    #[test]
    fn graph_route_when_viewpoint_is_beyond_the_map() {
        let mut s = scene();
        let a = NodeId::new(0, 0);
        let b = NodeId::new(1, 0);
        s.dtg.add_node(a, Vec3::new(1.1, 0.5, 0.5));
        s.dtg.add_node(b, Vec3::new(3.1, 0.5, 0.5));
        let along = |x0: f64, x1: f64| -> Vec<Vec3> {
            let n = ((x1 - x0) / 0.2).round() as usize;
            (0..=n).map(|i| Vec3::new(x0 + 0.2 * i as f64, 0.5, 0.5)).collect()
        };
        // Stored from b to a to check that the route reverses it.
        let id = EdgeId::new(NodeRef::History(a), NodeRef::History(b)).unwrap();
        let mut back = along(1.1, 3.1);
        back.reverse();
        let mut e = TopoEdge::new(id, None, &back, 1);
        e.path.reverse();
        s.dtg.upsert_edge(e).unwrap();
        s.dtg.advance_eroi(1, EroiState::Active).unwrap();
        s.dtg.advance_viewpoint(1, 3, ViewpointState::Active).unwrap();
        let vp_pos = s.dtg.eroi(1).unwrap().viewpoints[3].position;
        let mut tail = along(3.1, 4.9);
        tail.push(Vec3::new(4.9, 0.5 + 0.2, 0.5));
        let rid = EdgeId::new(NodeRef::History(b), NodeRef::Eroi(1)).unwrap();
        s.dtg.upsert_edge(TopoEdge::new(rid, Some(3), &tail, 1)).unwrap();

        let pose = AgentPose::new(Vec3::new(0.3, 0.5, 0.5), 0.0);
        let field = expand_uav_dijkstra(&s.grid, &pose, &DtgConfig { d_max: 1.0, p_th: 1.0, ..DtgConfig::default() }).unwrap();
        let direct = DirectSearch::new(&s.grid, s.grid.voxel_at(&pose.position).unwrap());
        let (vp, path) = retrieve_path(&s.dtg, &s.grid, &field, &pose, 1, &direct).unwrap();
        assert_eq!(vp, 3);
        assert_eq!(*path.last().unwrap(), vp_pos);
        for w in path.windows(2) {
            assert!((w[1] - w[0]).norm() > 0.0);
        }
        let xs: Vec<f64> = path.iter().map(|p| p.x).collect();
        assert!(xs.windows(2).all(|w| w[1] >= w[0] - 1e-6), "{xs:?}");
    }

    #[test]
    fn frontier_is_the_nearest_open_edge() {
        let s = scene();
        let pose = AgentPose::new(Vec3::new(1.05, 0.5, 0.5), 0.0);
        let direct = DirectSearch::new(&s.grid, s.grid.voxel_at(&pose.position).unwrap());
        // The corridor borders unknown space along y, so the start voxel
        // itself is a frontier facing -y or +y.
        let (v, path, yaw) = frontier_route(&s.grid, &pose, &direct, |_, _| true).unwrap();
        assert_eq!(v, s.grid.voxel_at(&pose.position).unwrap());
        assert_eq!(path, vec![pose.position]);
        assert!((yaw.abs() - std::f64::consts::FRAC_PI_2).abs() < 1e-9);
        // Only voxels at x >= 3 accepted: walk there.
        let far = |v: VoxelIndex, _| s.grid.center(v).x >= 3.0;
        let (v, path, _) = frontier_route(&s.grid, &pose, &direct, far).unwrap();
        assert!((s.grid.center(v).x - 3.1).abs() < 1e-9);
        assert_eq!(*path.last().unwrap(), s.grid.center(v));
        assert!(frontier_route(&s.grid, &pose, &direct, |_, _| false).is_none());
    }

    #[test]
    fn loops_are_cut_out() {
        let s = scene();
        let p = |x: f64| Vec3::new(x, 0.5, 0.5);
        let path = vec![p(1.05), p(0.9), p(0.7), p(0.9), p(1.1), p(1.3), p(1.5)];
        let out = erase_loops(&s.grid, path);
        assert_eq!(out, vec![p(1.05), p(1.3), p(1.5)]);
        let direct = vec![p(0.1), p(0.3), p(0.5)];
        assert_eq!(erase_loops(&s.grid, direct.clone()), direct);
    }

    #[test]
    fn unreachable_and_inactive_regions() {
        let s = scene();
        let pose = AgentPose::new(Vec3::new(1.05, 0.5, 0.5), 0.0);
        let field = expand_uav_dijkstra(&s.grid, &pose, &DtgConfig::default()).unwrap();
        let direct = DirectSearch::new(&s.grid, s.grid.voxel_at(&pose.position).unwrap());
        assert_eq!(
            retrieve_path(&s.dtg, &s.grid, &field, &pose, 0, &direct),
            Err(RouteError::NotActive(0))
        );
        let mut dtg = s.dtg.clone();
        dtg.advance_eroi(0, EroiState::Active).unwrap();
        assert_eq!(
            retrieve_path(&dtg, &s.grid, &field, &pose, 0, &direct),
            Err(RouteError::Unreachable(0))
        );
    }
}
