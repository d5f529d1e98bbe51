use std::f64::consts::PI;

use super::{quantize, DtgConfig, EroiId};
use crate::world::{Aabb, Vec3, VoxelGrid, VoxelIndex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum EroiState {
    Inactive = 0,
    Active = 1,
    Dead = 2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum ViewpointState {
    Inactive = 0,
    Active = 1,
    Dead = 2,
}

impl EroiState {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Self::Inactive),
            1 => Some(Self::Active),
            2 => Some(Self::Dead),
            _ => None,
        }
    }
}

impl ViewpointState {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(Self::Inactive),
            1 => Some(Self::Active),
            2 => Some(Self::Dead),
            _ => None,
        }
    }
}

/// Candidate sensor pose around a region, yawed at the region centre.
#[derive(Debug, Clone, PartialEq)]
pub struct Viewpoint {
    pub position: Vec3,
    pub yaw: f64,
    pub state: ViewpointState,
    /// Last evaluated gain (m^2); local to the evaluating agent.
    pub gain: f64,
}

/// Explorable region of interest: one cube of the fixed space partition.
#[derive(Debug, Clone, PartialEq)]
pub struct Eroi {
    pub id: EroiId,
    pub cube: Aabb,
    pub state: EroiState,
    pub viewpoints: Vec<Viewpoint>,
    /// Voxels of the cube known to the owning agent.
    pub known_voxels: usize,
    pub total_voxels: usize,
}

impl Eroi {
    pub fn coverage(&self) -> f64 {
        if self.total_voxels == 0 {
            1.0
        } else {
            self.known_voxels as f64 / self.total_voxels as f64
        }
    }

    pub fn center(&self) -> Vec3 {
        self.cube.center()
    }
}

/// Fixed partition of the world into cubes of side `eroi_side` (clipped at
/// the bounds) and the region each voxel centre falls in.
#[derive(Debug, Clone)]
pub struct EroiLayout {
    origin: Vec3,
    side: f64,
    counts: [usize; 3],
}

impl EroiLayout {
    pub fn new(bounds: &Aabb, side: f64) -> Self {
        let ext = bounds.extent();
        let counts = [0, 1, 2].map(|i| ((ext[i] / side) - 1e-9).ceil().max(1.0) as usize);
        Self {
            origin: bounds.min,
            side,
            counts,
        }
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn eroi_of_point(&self, p: &Vec3) -> Option<EroiId> {
        let mut c = [0usize; 3];
        for i in 0..3 {
            let k = ((p[i] - self.origin[i]) / self.side).floor();
            if k < 0.0 || k as usize >= self.counts[i] {
                return None;
            }
            c[i] = k as usize;
        }
        Some((c[0] + self.counts[0] * (c[1] + self.counts[1] * c[2])) as EroiId)
    }

    /// Region of every voxel centre, indexed by voxel.
    pub fn voxel_map(&self, grid: &VoxelGrid) -> Vec<EroiId> {
        (0..grid.len() as VoxelIndex)
            .map(|v| self.eroi_of_point(&grid.center(v)).unwrap_or(EroiId::MAX))
            .collect()
    }

    fn cube(&self, id: EroiId, bounds: &Aabb) -> Aabb {
        let i = id as usize;
        let c = [
            i % self.counts[0],
            (i / self.counts[0]) % self.counts[1],
            i / (self.counts[0] * self.counts[1]),
        ];
        let min = Vec3::new(
            self.origin.x + c[0] as f64 * self.side,
            self.origin.y + c[1] as f64 * self.side,
            self.origin.z + c[2] as f64 * self.side,
        );
        let max = (min.add_scalar(self.side)).inf(&bounds.max);
        Aabb::new(min, max)
    }
}

/// Builds every region in its initial state with its sampled viewpoints:
/// one ring per radius at the cube centre height, `viewpoint_azimuths`
/// evenly spaced positions per ring, all facing the centre.
pub fn eroi_layout(bounds: &Aabb, grid: &VoxelGrid, cfg: &DtgConfig) -> (EroiLayout, Vec<Eroi>) {
    let layout = EroiLayout::new(bounds, cfg.eroi_side);
    let mut totals = vec![0usize; layout.len()];
    for e in layout.voxel_map(grid) {
        if e != EroiId::MAX {
            totals[e as usize] += 1;
        }
    }
    let erois = (0..layout.len() as EroiId)
        .map(|id| {
            let cube = layout.cube(id, bounds);
            let center = cube.center();
            let mut viewpoints = Vec::new();
            for frac in &cfg.viewpoint_radii {
                let r = frac * cfg.eroi_side / 2.0;
                for k in 0..cfg.viewpoint_azimuths {
                    let a = 2.0 * PI * k as f64 / cfg.viewpoint_azimuths as f64;
                    let position = quantize(&(center + Vec3::new(r * a.cos(), r * a.sin(), 0.0)));
                    let to_center = center - position;
                    viewpoints.push(Viewpoint {
                        position,
                        yaw: to_center.y.atan2(to_center.x),
                        state: ViewpointState::Inactive,
                        gain: 0.0,
                    });
                }
            }
            Eroi {
                id,
                cube,
                state: EroiState::Inactive,
                viewpoints,
                known_voxels: 0,
                total_voxels: totals[id as usize],
            }
        })
        .collect();
    (layout, erois)
}
