use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rustc_hash::{FxHashMap, FxHashSet};

use super::field::{ordered, LocalField};
use super::Connectivity;
use crate::world::{VoxelGrid, VoxelIndex};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeEntry {
    pub cost: f64,
    pub parent: VoxelIndex,
}

/// Shortest-path tree rooted at a history node over the free voxels it has
/// absorbed. Entries are never removed: the world is static and every voxel
/// was free when recorded.
#[derive(Debug, Clone)]
pub struct DijkstraTree {
    root: VoxelIndex,
    entries: FxHashMap<VoxelIndex, TreeEntry>,
}

impl DijkstraTree {
    /// Tree equal to a field rooted at the same voxel.
    pub fn from_field(field: &LocalField) -> Self {
        let entries = field
            .entries()
            .iter()
            .map(|e| (e.voxel, TreeEntry { cost: e.cost, parent: e.parent }))
            .collect();
        Self {
            root: field.root(),
            entries,
        }
    }

    pub fn root(&self) -> VoxelIndex {
        self.root
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, v: VoxelIndex) -> bool {
        self.entries.contains_key(&v)
    }

    pub fn get(&self, v: VoxelIndex) -> Option<&TreeEntry> {
        self.entries.get(&v)
    }

    pub fn cost(&self, v: VoxelIndex) -> Option<f64> {
        self.entries.get(&v).map(|e| e.cost)
    }

    pub fn iter(&self) -> impl Iterator<Item = (VoxelIndex, &TreeEntry)> {
        self.entries.iter().map(|(k, v)| (*k, v))
    }

    /// Voxels from `v` back to the root, inclusive.
    pub fn path_to_root(&self, v: VoxelIndex) -> Option<Vec<VoxelIndex>> {
        let mut cur = v;
        let mut out = vec![v];
        let mut e = self.entries.get(&cur)?;
        while cur != self.root {
            cur = e.parent;
            out.push(cur);
            e = self.entries.get(&cur)?;
            if out.len() > self.entries.len() + 1 {
                return None;
            }
        }
        Some(out)
    }

    /// Extends the tree over a field that contains the root, keeping for
    /// each voxel the cheaper of the existing route and any route through
    /// the union of tree and field voxels. Returns the voxels that were not
    /// in the tree before.
    pub fn absorb_field(
        &mut self,
        field: &LocalField,
        grid: &VoxelGrid,
        connectivity: Connectivity,
    ) -> Vec<VoxelIndex> {
        let fresh: Vec<VoxelIndex> = field
            .entries()
            .iter()
            .map(|e| e.voxel)
            .filter(|v| !self.entries.contains_key(v))
            .collect();
        if fresh.is_empty() {
            return fresh;
        }
        let fresh_set: FxHashSet<VoxelIndex> = fresh.iter().copied().collect();
        let neighbours = |v: VoxelIndex| -> Vec<(VoxelIndex, f64)> {
            match connectivity {
                Connectivity::Six => grid.neighbors6(v).map(|n| (n, grid.resolution())).collect(),
                Connectivity::TwentySix => grid.neighbors26(v).collect(),
            }
        };

        // Any improvement must pass through a fresh voxel, so it is enough to
        // seed from tree voxels bordering the fresh set.
        let mut heap = BinaryHeap::new();
        let mut seeded = FxHashSet::default();
        for &f in &fresh {
            for (n, _) in neighbours(f) {
                if let Some(e) = self.entries.get(&n) {
                    if seeded.insert(n) {
                        heap.push(Reverse((ordered(e.cost), n)));
                    }
                }
            }
        }
        let mut pending: FxHashMap<VoxelIndex, TreeEntry> = FxHashMap::default();
        while let Some(Reverse((c, v))) = heap.pop() {
            let c = c.0;
            let current = self.entries.get(&v).or_else(|| pending.get(&v)).map(|e| e.cost);
            if current.is_some_and(|cur| cur < c) {
                continue;
            }
            if let Some(e) = pending.remove(&v) {
                self.entries.insert(v, e);
            }
            for (n, step) in neighbours(v) {
                let in_union = self.entries.contains_key(&n) || fresh_set.contains(&n);
                if !in_union {
                    continue;
                }
                let nc = c + step;
                let known = self.entries.get(&n).or_else(|| pending.get(&n)).map(|e| e.cost);
                if known.is_none_or(|k| nc < k - 1e-12) {
                    let entry = TreeEntry { cost: nc, parent: v };
                    if let std::collections::hash_map::Entry::Occupied(mut e) = self.entries.entry(n) {
                        e.insert(entry);
                    } else {
                        pending.insert(n, entry);
                    }
                    heap.push(Reverse((ordered(nc), n)));
                }
            }
        }
        debug_assert!(pending.is_empty());
        fresh
    }
}
