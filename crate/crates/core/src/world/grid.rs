use super::geometry::{Aabb, Vec3};

/// Linear index of a voxel, `x + nx * (y + ny * z)`.
pub type VoxelIndex = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum OccupancyState {
    Unknown = 0,
    Free = 1,
    Occupied = 2,
}

/// Dense three-state occupancy grid owned by a single agent.
///
/// Knowledge is monotone: a voxel leaves `Unknown` at most once and never
/// returns to it.
#[derive(Debug, Clone)]
pub struct VoxelGrid {
    origin: Vec3,
    resolution: f64,
    dims: [usize; 3],
    states: Vec<OccupancyState>,
    known: usize,
}

impl VoxelGrid {
    pub fn new(bounds: &Aabb, resolution: f64) -> Self {
        assert!(resolution > 0.0, "voxel resolution must be positive");
        let ext = bounds.extent();
        let dims = [0, 1, 2].map(|i| ((ext[i] / resolution) - 1e-9).ceil().max(1.0) as usize);
        let len = dims[0] * dims[1] * dims[2];
        assert!(len <= u32::MAX as usize, "grid too large for 32-bit voxel indices");
        Self {
            origin: bounds.min,
            resolution,
            dims,
            states: vec![OccupancyState::Unknown; len],
            known: 0,
        }
    }

    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn known_count(&self) -> usize {
        self.known
    }

    pub fn states(&self) -> &[OccupancyState] {
        &self.states
    }

    #[inline]
    pub fn linear(&self, c: [usize; 3]) -> VoxelIndex {
        (c[0] + self.dims[0] * (c[1] + self.dims[1] * c[2])) as VoxelIndex
    }

    #[inline]
    pub fn coords(&self, idx: VoxelIndex) -> [usize; 3] {
        let i = idx as usize;
        let x = i % self.dims[0];
        let yz = i / self.dims[0];
        [x, yz % self.dims[1], yz / self.dims[1]]
    }

    /// Signed voxel coordinates containing `p`; may lie outside the grid.
    pub fn cell_of(&self, p: &Vec3) -> [i64; 3] {
        [0, 1, 2].map(|i| ((p[i] - self.origin[i]) / self.resolution).floor() as i64)
    }

    pub fn in_grid(&self, c: [i64; 3]) -> bool {
        (0..3).all(|i| c[i] >= 0 && (c[i] as usize) < self.dims[i])
    }

    /// Voxel containing `p`. Points on the far boundary face map to the last
    /// layer.
    pub fn voxel_at(&self, p: &Vec3) -> Option<VoxelIndex> {
        let mut c = self.cell_of(p);
        for i in 0..3 {
            if c[i] == self.dims[i] as i64 {
                let upper = self.origin[i] + self.dims[i] as f64 * self.resolution;
                if (p[i] - upper).abs() < 1e-9 {
                    c[i] -= 1;
                }
            }
        }
        self.in_grid(c)
            .then(|| self.linear([c[0] as usize, c[1] as usize, c[2] as usize]))
    }

    pub fn center(&self, idx: VoxelIndex) -> Vec3 {
        let c = self.coords(idx);
        Vec3::new(
            self.origin.x + (c[0] as f64 + 0.5) * self.resolution,
            self.origin.y + (c[1] as f64 + 0.5) * self.resolution,
            self.origin.z + (c[2] as f64 + 0.5) * self.resolution,
        )
    }

    #[inline]
    pub fn state(&self, idx: VoxelIndex) -> OccupancyState {
        self.states[idx as usize]
    }

    #[inline]
    pub fn is_free(&self, idx: VoxelIndex) -> bool {
        self.states[idx as usize] == OccupancyState::Free
    }

    /// Records an observation. Returns true if the voxel was Unknown and is
    /// now known; observations of known voxels are ignored.
    pub fn mark(&mut self, idx: VoxelIndex, state: OccupancyState) -> bool {
        let slot = &mut self.states[idx as usize];
        if *slot != OccupancyState::Unknown || state == OccupancyState::Unknown {
            return false;
        }
        *slot = state;
        self.known += 1;
        true
    }

    /// Face neighbours of a voxel.
    pub fn neighbors6(&self, idx: VoxelIndex) -> impl Iterator<Item = VoxelIndex> + '_ {
        let c = self.coords(idx);
        const OFFSETS: [[i64; 3]; 6] = [
            [-1, 0, 0],
            [1, 0, 0],
            [0, -1, 0],
            [0, 1, 0],
            [0, 0, -1],
            [0, 0, 1],
        ];
        OFFSETS.iter().filter_map(move |o| self.offset(c, *o))
    }

    /// All 26 neighbours with their step length in meters.
    pub fn neighbors26(&self, idx: VoxelIndex) -> impl Iterator<Item = (VoxelIndex, f64)> + '_ {
        let c = self.coords(idx);
        let res = self.resolution;
        (-1i64..=1)
            .flat_map(|dz| (-1i64..=1).flat_map(move |dy| (-1i64..=1).map(move |dx| [dx, dy, dz])))
            .filter(|o| *o != [0, 0, 0])
            .filter_map(move |o| {
                let n = self.offset(c, o)?;
                let k = o.iter().filter(|v| **v != 0).count() as f64;
                Some((n, res * k.sqrt()))
            })
    }

    fn offset(&self, c: [usize; 3], o: [i64; 3]) -> Option<VoxelIndex> {
        let n = [c[0] as i64 + o[0], c[1] as i64 + o[1], c[2] as i64 + o[2]];
        self.in_grid(n)
            .then(|| self.linear([n[0] as usize, n[1] as usize, n[2] as usize]))
    }

    /// Voxels pierced by the ray `origin + t * dir` for `t` in `[0, max_t)`,
    /// in order. `dir` must be unit length for `t` to be in meters.
    pub fn traverse(&self, origin: Vec3, dir: Vec3, max_t: f64) -> Traversal<'_> {
        Traversal::new(self, origin, dir, max_t)
    }
}

/// One voxel visited by a [`Traversal`], with the ray parameter interval
/// spent inside it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraversalStep {
    pub voxel: VoxelIndex,
    pub t_enter: f64,
    pub t_exit: f64,
}

/// Amanatides–Woo voxel walk. Voxels the ray only touches at an edge or
/// corner (zero-length overlap) are skipped.
pub struct Traversal<'a> {
    grid: &'a VoxelGrid,
    origin: Vec3,
    dir: Vec3,
    max_t: f64,
    cell: [i64; 3],
    step: [i64; 3],
    t_max: [f64; 3],
    t: f64,
}

impl<'a> Traversal<'a> {
    fn new(grid: &'a VoxelGrid, origin: Vec3, dir: Vec3, max_t: f64) -> Self {
        let cell = grid.cell_of(&origin);
        let mut step = [0i64; 3];
        let mut t_max = [f64::INFINITY; 3];
        for i in 0..3 {
            if dir[i] > 0.0 {
                step[i] = 1;
            } else if dir[i] < 0.0 {
                step[i] = -1;
            }
        }
        let mut tr = Self {
            grid,
            origin,
            dir,
            max_t,
            cell,
            step,
            t_max,
            t: 0.0,
        };
        for i in 0..3 {
            t_max[i] = tr.boundary_t(i);
        }
        tr.t_max = t_max;
        tr
    }

    fn boundary_t(&self, axis: usize) -> f64 {
        if self.step[axis] == 0 {
            return f64::INFINITY;
        }
        let k = if self.step[axis] > 0 {
            self.cell[axis] + 1
        } else {
            self.cell[axis]
        };
        let plane = self.grid.origin[axis] + k as f64 * self.grid.resolution;
        (plane - self.origin[axis]) / self.dir[axis]
    }
}

impl Iterator for Traversal<'_> {
    type Item = TraversalStep;

    fn next(&mut self) -> Option<TraversalStep> {
        loop {
            if self.t >= self.max_t || !self.grid.in_grid(self.cell) {
                return None;
            }
            let axis = if self.t_max[0] <= self.t_max[1] && self.t_max[0] <= self.t_max[2] {
                0
            } else if self.t_max[1] <= self.t_max[2] {
                1
            } else {
                2
            };
            let t_exit = self.t_max[axis];
            if !t_exit.is_finite() {
                // Zero direction: stay in the origin voxel for the whole range.
                let c = self.cell;
                self.t = self.max_t;
                return Some(TraversalStep {
                    voxel: self.grid.linear([c[0] as usize, c[1] as usize, c[2] as usize]),
                    t_enter: 0.0,
                    t_exit: f64::INFINITY,
                });
            }
            let c = self.cell;
            let t_enter = self.t;
            self.cell[axis] += self.step[axis];
            self.t_max[axis] = self.boundary_t(axis);
            self.t = t_exit.max(t_enter);
            if t_exit > t_enter {
                return Some(TraversalStep {
                    voxel: self.grid.linear([c[0] as usize, c[1] as usize, c[2] as usize]),
                    t_enter,
                    t_exit,
                });
            }
        }
    }
}
