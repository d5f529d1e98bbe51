use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use super::{Connectivity, DtgConfig, DtgError};
use crate::world::{AgentPose, VoxelGrid, VoxelIndex};

const ABSENT: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldEntry {
    pub voxel: VoxelIndex,
    pub cost: f64,
    pub parent: VoxelIndex,
}

/// Shortest-path field around the agent: every free voxel reachable within
/// the Manhattan bound, with its grid path cost and predecessor.
#[derive(Debug, Clone)]
pub struct LocalField {
    root: VoxelIndex,
    entries: Vec<FieldEntry>,
    slots: Vec<u32>,
}

impl LocalField {
    pub fn root(&self) -> VoxelIndex {
        self.root
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in settle order (non-decreasing cost).
    pub fn entries(&self) -> &[FieldEntry] {
        &self.entries
    }

    pub fn contains(&self, v: VoxelIndex) -> bool {
        self.slots.get(v as usize).is_some_and(|s| *s != ABSENT)
    }

    pub fn get(&self, v: VoxelIndex) -> Option<&FieldEntry> {
        match self.slots.get(v as usize) {
            Some(&s) if s != ABSENT => Some(&self.entries[s as usize]),
            _ => None,
        }
    }

    pub fn cost(&self, v: VoxelIndex) -> Option<f64> {
        self.get(v).map(|e| e.cost)
    }

    /// Voxels from the root to `v`, inclusive.
    pub fn path_from_root(&self, v: VoxelIndex) -> Option<Vec<VoxelIndex>> {
        let mut cur = self.get(v)?;
        let mut out = vec![cur.voxel];
        while cur.voxel != self.root {
            cur = self.get(cur.parent)?;
            out.push(cur.voxel);
        }
        out.reverse();
        Some(out)
    }
}

fn manhattan_steps(a: [usize; 3], b: [usize; 3]) -> usize {
    (0..3).map(|i| a[i].abs_diff(b[i])).sum()
}

/// Dijkstra search from the agent over known-free voxels, limited to voxels
/// whose Manhattan distance from the agent is at most `d_max`.
pub fn expand_uav_dijkstra(grid: &VoxelGrid, pose: &AgentPose, cfg: &DtgConfig) -> Result<LocalField, DtgError> {
    let root = grid.voxel_at(&pose.position).ok_or(DtgError::PoseNotFree)?;
    if !grid.is_free(root) {
        return Err(DtgError::PoseNotFree);
    }
    let res = grid.resolution();
    let bound = (cfg.d_max / res + 1e-9).floor() as usize;
    let rc = grid.coords(root);
    let mut field = LocalField {
        root,
        entries: Vec::new(),
        slots: vec![ABSENT; grid.len()],
    };
    let within = |v: VoxelIndex| grid.is_free(v) && manhattan_steps(grid.coords(v), rc) <= bound;

    match cfg.connectivity {
        Connectivity::Six => {
            // Unit steps: breadth-first order is Dijkstra order.
            let mut queue = VecDeque::from([(root, 0usize)]);
            field.slots[root as usize] = 0;
            field.entries.push(FieldEntry {
                voxel: root,
                cost: 0.0,
                parent: root,
            });
            while let Some((v, d)) = queue.pop_front() {
                for n in grid.neighbors6(v) {
                    if field.slots[n as usize] != ABSENT || !within(n) {
                        continue;
                    }
                    field.slots[n as usize] = field.entries.len() as u32;
                    field.entries.push(FieldEntry {
                        voxel: n,
                        cost: (d + 1) as f64 * res,
                        parent: v,
                    });
                    queue.push_back((n, d + 1));
                }
            }
        }
        Connectivity::TwentySix => {
            let mut best: rustc_hash::FxHashMap<VoxelIndex, (f64, VoxelIndex)> = Default::default();
            let mut heap = BinaryHeap::new();
            best.insert(root, (0.0, root));
            heap.push(Reverse((ordered(0.0), root)));
            while let Some(Reverse((c, v))) = heap.pop() {
                let c = c.0;
                if field.slots[v as usize] != ABSENT || best[&v].0 < c {
                    continue;
                }
                field.slots[v as usize] = field.entries.len() as u32;
                field.entries.push(FieldEntry {
                    voxel: v,
                    cost: c,
                    parent: best[&v].1,
                });
                for (n, step) in grid.neighbors26(v) {
                    if field.slots[n as usize] != ABSENT || !within(n) {
                        continue;
                    }
                    let nc = c + step;
                    if best.get(&n).is_none_or(|(bc, _)| nc < *bc) {
                        best.insert(n, (nc, v));
                        heap.push(Reverse((ordered(nc), n)));
                    }
                }
            }
        }
    }
    Ok(field)
}

/// Total order wrapper for non-NaN costs in heaps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Cost(pub f64);

impl Eq for Cost {}

impl Ord for Cost {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl PartialOrd for Cost {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

pub(crate) fn ordered(c: f64) -> Cost {
    Cost(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{Aabb, OccupancyState, Vec3};

    fn all_free(ext: [f64; 3], res: f64) -> VoxelGrid {
        let mut g = VoxelGrid::new(&Aabb::new(Vec3::zeros(), Vec3::new(ext[0], ext[1], ext[2])), res);
        for v in 0..g.len() as u32 {
            g.mark(v, OccupancyState::Free);
        }
        g
    }

    #[test]
    fn open_grid_field_is_manhattan_ball() {
        let g = all_free([6.0, 6.0, 1.0], 0.2);
        let pose = AgentPose::new(Vec3::new(3.1, 3.1, 0.5), 0.0);
        let cfg = DtgConfig {
            d_max: 2.0,
            ..DtgConfig::default()
        };
        let f = expand_uav_dijkstra(&g, &pose, &cfg).unwrap();
        let rc = g.coords(f.root());
        let expected: Vec<u32> = (0..g.len() as u32)
            .filter(|v| manhattan_steps(g.coords(*v), rc) <= 10)
            .collect();
        assert_eq!(f.len(), expected.len());
        for v in expected {
            let c = f.cost(v).unwrap();
            // unobstructed: cost equals Manhattan distance
            assert!((c - manhattan_steps(g.coords(v), rc) as f64 * 0.2).abs() < 1e-9);
        }
    }

    #[test]
    fn corridor_costs_are_index_distance() {
        let bounds = Aabb::new(Vec3::zeros(), Vec3::new(4.0, 0.6, 0.6));
        let mut g = VoxelGrid::new(&bounds, 0.2);
        // one-voxel corridor along x at (y, z) = (1, 1), everything else occupied
        for v in 0..g.len() as u32 {
            let c = g.coords(v);
            let state = if c[1] == 1 && c[2] == 1 {
                OccupancyState::Free
            } else {
                OccupancyState::Occupied
            };
            g.mark(v, state);
        }
        let pose = AgentPose::new(g.center(g.linear([3, 1, 1])), 0.0);
        let f = expand_uav_dijkstra(&g, &pose, &DtgConfig::default()).unwrap();
        assert_eq!(f.len(), 20);
        // breadth-first oracle with unit steps
        for x in 0..20usize {
            let v = g.linear([x, 1, 1]);
            assert!((f.cost(v).unwrap() - x.abs_diff(3) as f64 * 0.2).abs() < 1e-9);
        }
        let path = f.path_from_root(g.linear([0, 1, 1])).unwrap();
        assert_eq!(path.len(), 4);
    }

    #[test]
    fn walls_block_expansion() {
        let mut g = VoxelGrid::new(&Aabb::new(Vec3::zeros(), Vec3::new(2.0, 2.0, 0.2)), 0.2);
        for v in 0..g.len() as u32 {
            let x = g.coords(v)[0];
            g.mark(v, if x == 3 { OccupancyState::Occupied } else { OccupancyState::Free });
        }
        let pose = AgentPose::new(Vec3::new(0.5, 1.0, 0.1), 0.0);
        let f = expand_uav_dijkstra(&g, &pose, &DtgConfig::default()).unwrap();
        assert!(f.entries().iter().all(|e| g.coords(e.voxel)[0] < 3));
    }

    #[test]
    fn pose_must_be_free() {
        let g = VoxelGrid::new(&Aabb::new(Vec3::zeros(), Vec3::new(1.0, 1.0, 1.0)), 0.2);
        let pose = AgentPose::new(Vec3::new(0.5, 0.5, 0.5), 0.0);
        assert_eq!(
            expand_uav_dijkstra(&g, &pose, &DtgConfig::default()).unwrap_err(),
            DtgError::PoseNotFree
        );
    }

    #[test]
    fn twenty_six_connectivity_uses_diagonals() {
        let g = all_free([2.0, 2.0, 2.0], 0.2);
        let pose = AgentPose::new(Vec3::new(0.1, 0.1, 0.1), 0.0);
        let cfg = DtgConfig {
            connectivity: Connectivity::TwentySix,
            ..DtgConfig::default()
        };
        let f = expand_uav_dijkstra(&g, &pose, &cfg).unwrap();
        let corner = g.linear([3, 3, 3]);
        assert!((f.cost(corner).unwrap() - 3.0 * 0.2 * 3f64.sqrt()).abs() < 1e-9);
        let costs: Vec<f64> = f.entries().iter().map(|e| e.cost).collect();
        assert!(costs.windows(2).all(|w| w[0] <= w[1] + 1e-12));
    }
}
