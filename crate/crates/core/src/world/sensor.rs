use std::f64::consts::PI;

use super::geometry::Vec3;
use super::grid::{OccupancyState, VoxelGrid, VoxelIndex};
use super::GroundTruthWorld;

/// Tolerance for comparing ray parameters against voxel boundaries.
const T_EPS: f64 = 1e-9;

/// Frustum of an ideal depth camera, angles in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorModel {
    pub fov_theta_left: f64,
    pub fov_theta_right: f64,
    pub fov_phi_up: f64,
    pub fov_phi_down: f64,
    pub r_max: f64,
    pub delta_theta: f64,
    pub delta_phi: f64,
}

impl Default for SensorModel {
    fn default() -> Self {
        Self {
            fov_theta_left: 57.3,
            fov_theta_right: -57.3,
            fov_phi_up: 45.0,
            fov_phi_down: -45.0,
            r_max: 5.0,
            delta_theta: 7.5,
            delta_phi: 7.5,
        }
    }
}

impl SensorModel {
    /// Same frustum with a different angular pitch.
    pub fn with_pitch(self, delta_theta: f64, delta_phi: f64) -> Self {
        Self {
            delta_theta,
            delta_phi,
            ..self
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.fov_theta_left <= self.fov_theta_right {
            return Err("fov_theta_left must exceed fov_theta_right".into());
        }
        if self.fov_phi_up <= self.fov_phi_down {
            return Err("fov_phi_up must exceed fov_phi_down".into());
        }
        if self.fov_phi_up > 90.0 || self.fov_phi_down < -90.0 {
            return Err("pitch limits must lie within [-90, 90] degrees".into());
        }
        if !(self.r_max > 0.0) {
            return Err("r_max must be positive".into());
        }
        if !(self.delta_theta > 0.0 && self.delta_phi > 0.0) {
            return Err("angular pitch must be positive".into());
        }
        if self.ray_counts().0 == 0 || self.ray_counts().1 == 0 {
            return Err("angular pitch exceeds the field of view".into());
        }
        Ok(())
    }

    /// Number of angular cells along yaw and pitch: `floor(span / delta)`.
    pub fn ray_counts(&self) -> (usize, usize) {
        let m = ((self.fov_theta_left - self.fov_theta_right) / self.delta_theta + 1e-9).floor();
        let n = ((self.fov_phi_up - self.fov_phi_down) / self.delta_phi + 1e-9).floor();
        (m.max(0.0) as usize, n.max(0.0) as usize)
    }

    pub fn ray_count(&self) -> usize {
        let (m, n) = self.ray_counts();
        m * n
    }

    /// Cell-centre ray angles `(yaw offset, pitch)` in radians, yaw-major.
    /// The whole cells are centred inside the field of view.
    pub fn ray_angles(&self) -> Vec<(f64, f64)> {
        let (m, n) = self.ray_counts();
        let yaw_margin = (self.fov_theta_left - self.fov_theta_right - m as f64 * self.delta_theta) / 2.0;
        let pitch_margin = (self.fov_phi_up - self.fov_phi_down - n as f64 * self.delta_phi) / 2.0;
        let mut out = Vec::with_capacity(m * n);
        for j in 0..m {
            let theta = self.fov_theta_right + yaw_margin + (j as f64 + 0.5) * self.delta_theta;
            for k in 0..n {
                let phi = self.fov_phi_down + pitch_margin + (k as f64 + 0.5) * self.delta_phi;
                out.push((theta.to_radians(), phi.to_radians()));
            }
        }
        out
    }
}

/// Unit vector for a yaw (about +z, from +x) and pitch (up from the xy plane).
pub fn direction(yaw: f64, pitch: f64) -> Vec3 {
    Vec3::new(pitch.cos() * yaw.cos(), pitch.cos() * yaw.sin(), pitch.sin())
}

/// Wraps an angle to `[-pi, pi)`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w >= PI {
        -PI
    } else {
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentPose {
    pub position: Vec3,
    pub yaw: f64,
}

impl AgentPose {
    pub fn new(position: Vec3, yaw: f64) -> Self {
        Self {
            position,
            yaw: wrap_angle(yaw),
        }
    }
}

/// One simulated depth return.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanRay {
    pub direction: Vec3,
    pub range: f64,
    pub hit: bool,
}

/// Casts every sensor ray against the ground truth. Rays that leave the
/// world bounds stop there without a hit.
pub fn simulate_scan(world: &GroundTruthWorld, pose: &AgentPose, sensor: &SensorModel) -> Vec<ScanRay> {
    sensor
        .ray_angles()
        .into_iter()
        .map(|(dyaw, pitch)| {
            let dir = direction(pose.yaw + dyaw, pitch);
            let limit = world
                .bounds
                .ray_interval(&pose.position, &dir)
                .map_or(0.0, |(_, t1)| t1.max(0.0))
                .min(sensor.r_max);
            match world.first_hit(&pose.position, &dir, limit) {
                Some(t) => ScanRay {
                    direction: dir,
                    range: t,
                    hit: true,
                },
                None => ScanRay {
                    direction: dir,
                    range: limit,
                    hit: false,
                },
            }
        })
        .collect()
}

/// Folds a scan into the grid. Voxels the ray crosses before its return are
/// Free and the voxel holding the return is Occupied. Returns the voxels
/// whose state changed, in first-seen order.
pub fn integrate_scan(grid: &mut VoxelGrid, pose: &AgentPose, scan: &[ScanRay]) -> Vec<VoxelIndex> {
    let mut changed = Vec::new();
    for ray in scan {
        let limit = if ray.hit { f64::INFINITY } else { ray.range };
        let steps: Vec<_> = grid.traverse(pose.position, ray.direction, limit).collect();
        for s in steps {
            if ray.hit && s.t_exit > ray.range + T_EPS {
                if grid.mark(s.voxel, OccupancyState::Occupied) {
                    changed.push(s.voxel);
                }
                break;
            }
            if !ray.hit && s.t_enter >= ray.range - T_EPS {
                break;
            }
            if grid.mark(s.voxel, OccupancyState::Free) {
                changed.push(s.voxel);
            }
        }
    }
    changed
}

/// Walks the grid from `origin` and reports the distance to the first voxel
/// that is not Free together with its state. Leaving the grid counts as
/// striking an Occupied wall. `(max_range, None)` means the whole segment is
/// known free.
pub fn raycast_known(
    grid: &VoxelGrid,
    origin: Vec3,
    direction: Vec3,
    max_range: f64,
) -> (f64, Option<OccupancyState>) {
    let mut last_exit = 0.0;
    for s in grid.traverse(origin, direction, max_range) {
        let state = grid.state(s.voxel);
        if state != OccupancyState::Free {
            return (s.t_enter, Some(state));
        }
        last_exit = s.t_exit;
    }
    if last_exit < max_range - T_EPS {
        (last_exit, Some(OccupancyState::Occupied))
    } else {
        (max_range, None)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::Aabb;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn open_world(ext: [f64; 3]) -> GroundTruthWorld {
        GroundTruthWorld::new(Aabb::new(Vec3::zeros(), Vec3::new(ext[0], ext[1], ext[2])), vec![]).unwrap()
    }

    /// Brute-force oracle: dense sampling along the segment.
    fn sampled_voxels(grid: &VoxelGrid, o: Vec3, d: Vec3, len: f64) -> BTreeSet<VoxelIndex> {
        let h = 1e-4;
        let n = (len / h) as usize;
        (0..n)
            .filter_map(|k| grid.voxel_at(&(o + d * ((k as f64 + 0.5) * h))))
            .collect()
    }

    #[test]
    fn paper_camera_ray_count() {
        let s = SensorModel::default();
        assert_eq!(s.ray_counts(), (15, 12));
        assert_eq!(s.ray_count(), 180);
        let angles = s.ray_angles();
        // centred cells: symmetric about the optical axis
        let (first, last) = (angles.first().unwrap(), angles.last().unwrap());
        assert!((first.0 + last.0).abs() < 1e-12);
        assert!((first.1 + last.1).abs() < 1e-12);
        assert!(s.validate().is_ok());
        assert!(s.with_pitch(200.0, 7.5).validate().is_err());
    }

    #[test]
    fn free_space_scan_reports_max_range() {
        let world = open_world([40.0, 40.0, 20.0]);
        let pose = AgentPose::new(Vec3::new(20.0, 20.0, 10.0), 0.3);
        let scan = simulate_scan(&world, &pose, &SensorModel::default());
        assert_eq!(scan.len(), 180);
        assert!(scan.iter().all(|r| !r.hit && r.range == 5.0));
    }

    #[test]
    fn frontal_wall_range() {
        let world = GroundTruthWorld::new(
            Aabb::new(Vec3::zeros(), Vec3::new(10.0, 10.0, 3.0)),
            vec![Aabb::new(Vec3::new(6.0, 0.0, 0.0), Vec3::new(6.4, 10.0, 3.0))],
        )
        .unwrap();
        let pose = AgentPose::new(Vec3::new(4.0, 5.0, 1.5), 0.0);
        let sensor = SensorModel::default().with_pitch(2.0, 2.0);
        let scan = simulate_scan(&world, &pose, &sensor);
        // Analytic oracle for a plane at x = 6: range = 2 / (cos(pitch) cos(yaw)).
        for (ray, (dyaw, pitch)) in scan.iter().zip(sensor.ray_angles()) {
            let expect = 2.0 / (pitch.cos() * dyaw.cos());
            let z = pose.position.z + expect * pitch.sin();
            if expect <= 5.0 && z > 0.0 && z < 3.0 {
                assert!(ray.hit);
                assert!((ray.range - expect).abs() < 1e-9);
            }
        }
        let frontal = scan
            .iter()
            .filter(|r| r.direction.x > 0.999)
            .collect::<Vec<_>>();
        assert!(!frontal.is_empty());
        assert!(frontal.iter().all(|r| r.hit && (r.range - 2.0).abs() <= 0.2));
    }

    #[test]
    fn single_ray_one_metre_marks_five_voxels() {
        let mut grid = VoxelGrid::new(&Aabb::new(Vec3::zeros(), Vec3::new(4.0, 1.0, 1.0)), 0.2);
        let pose = AgentPose::new(Vec3::new(0.0, 0.5, 0.5), 0.0);
        let ray = ScanRay {
            direction: Vec3::x(),
            range: 1.0,
            hit: false,
        };
        let changed = integrate_scan(&mut grid, &pose, &[ray]);
        let oracle = sampled_voxels(&grid, pose.position, Vec3::x(), 1.0);
        assert_eq!(changed.len(), 5);
        assert_eq!(changed.iter().copied().collect::<BTreeSet<_>>(), oracle);
        assert!(changed.iter().all(|v| grid.is_free(*v)));
        // idempotent
        assert!(integrate_scan(&mut grid, &pose, &[ray]).is_empty());
    }

    #[test]
    fn hit_at_half_metre() {
        let world = GroundTruthWorld::new(
            Aabb::new(Vec3::zeros(), Vec3::new(2.0, 1.0, 1.0)),
            vec![Aabb::new(Vec3::new(0.5, 0.0, 0.0), Vec3::new(1.0, 1.0, 1.0))],
        )
        .unwrap();
        let mut grid = VoxelGrid::new(&world.bounds, 0.25);
        let pose = AgentPose::new(Vec3::new(0.0, 0.375, 0.375), 0.0);
        let t = world.first_hit(&pose.position, &Vec3::x(), 5.0).unwrap();
        assert_eq!(t, 0.5);
        let ray = ScanRay {
            direction: Vec3::x(),
            range: t,
            hit: true,
        };
        let changed = integrate_scan(&mut grid, &pose, &[ray]);
        let free: Vec<_> = changed.iter().filter(|v| grid.is_free(**v)).collect();
        let occ: Vec<_> = changed
            .iter()
            .filter(|v| grid.state(**v) == OccupancyState::Occupied)
            .collect();
        assert_eq!((free.len(), occ.len()), (2, 1));
        assert!(world.is_blocked(&grid.center(*occ[0])));
    }

    #[test]
    fn raycast_known_cases() {
        let bounds = Aabb::new(Vec3::zeros(), Vec3::new(8.0, 1.0, 1.0));
        let mut grid = VoxelGrid::new(&bounds, 0.2);
        let row: Vec<_> = (0..40).map(|x| grid.linear([x, 2, 2])).collect();
        for v in &row {
            grid.mark(*v, OccupancyState::Free);
        }
        let o = grid.center(row[0]);
        assert_eq!(raycast_known(&grid, o, Vec3::x(), 5.0), (5.0, None));

        let mut g2 = VoxelGrid::new(&bounds, 0.2);
        // Unknown voxel whose centre is 3.0 m from the origin centre.
        for v in &row[..15] {
            g2.mark(*v, OccupancyState::Free);
        }
        let (r, s) = raycast_known(&g2, o, Vec3::x(), 5.0);
        assert_eq!(s, Some(OccupancyState::Unknown));
        assert!((r - 3.0).abs() <= 0.2, "{r}");

        let mut g3 = VoxelGrid::new(&bounds, 0.2);
        for v in &row[..10] {
            g3.mark(*v, OccupancyState::Free);
        }
        g3.mark(row[10], OccupancyState::Occupied);
        let (r, s) = raycast_known(&g2, o, Vec3::x(), 5.0);
        let (r3, s3) = raycast_known(&g3, o, Vec3::x(), 5.0);
        assert_eq!(s3, Some(OccupancyState::Occupied));
        assert!(r3 < r && (r3 - 1.9).abs() < 1e-9);
        assert_eq!(s, Some(OccupancyState::Unknown));
    }

    #[test]
    fn leaving_grid_counts_as_wall() {
        let bounds = Aabb::new(Vec3::zeros(), Vec3::new(1.0, 1.0, 1.0));
        let mut grid = VoxelGrid::new(&bounds, 0.25);
        for v in 0..grid.len() as u32 {
            grid.mark(v, OccupancyState::Free);
        }
        let (r, s) = raycast_known(&grid, Vec3::new(0.5, 0.5, 0.5), Vec3::x(), 5.0);
        assert_eq!(s, Some(OccupancyState::Occupied));
        assert!((r - 0.5).abs() < 1e-12);
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), -PI);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
        assert!((wrap_angle(-PI / 4.0) + PI / 4.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn traversal_matches_sampling(
            ox in 0.05f64..3.95, oy in 0.05f64..1.95, oz in 0.05f64..1.95,
            yaw in -3.1f64..3.1, pitch in -1.5f64..1.5, len in 0.1f64..3.0,
        ) {
            let grid = VoxelGrid::new(&Aabb::new(Vec3::zeros(), Vec3::new(4.0, 2.0, 2.0)), 0.2);
            let o = Vec3::new(ox, oy, oz);
            let d = direction(yaw, pitch);
            let dda: Vec<_> = grid.traverse(o, d, len).collect();
            let dda_set: BTreeSet<_> = dda.iter().map(|s| s.voxel).collect();
            prop_assert_eq!(dda_set.len(), dda.len());
            let sampled = sampled_voxels(&grid, o, d, len);
            prop_assert!(sampled.is_subset(&dda_set));
            for s in &dda {
                let overlap = s.t_exit.min(len) - s.t_enter;
                if overlap > 1e-3 {
                    prop_assert!(sampled.contains(&s.voxel));
                }
            }
        }

        #[test]
        fn integration_is_sound_on_aligned_worlds(
            x in 0.3f64..3.7, y in 0.3f64..3.7, yaw in -3.1f64..3.1,
        ) {
            let world = GroundTruthWorld::new(
                Aabb::new(Vec3::zeros(), Vec3::new(4.0, 4.0, 2.0)),
                vec![
                    Aabb::new(Vec3::new(1.0, 1.0, 0.0), Vec3::new(1.4, 3.0, 2.0)),
                    Aabb::new(Vec3::new(2.4, 0.0, 0.0), Vec3::new(3.0, 1.6, 1.2)),
                ],
            ).unwrap();
            let pos = Vec3::new(x, y, 1.5);
            prop_assume!(!world.is_blocked(&pos));
            let pose = AgentPose::new(pos, yaw);
            let sensor = SensorModel::default().with_pitch(3.0, 3.0);
            let mut grid = VoxelGrid::new(&world.bounds, 0.2);
            let scan = simulate_scan(&world, &pose, &sensor);
            let changed = integrate_scan(&mut grid, &pose, &scan);
            let diag = 0.2 * 3f64.sqrt();
            for v in changed {
                let c = grid.center(v);
                match grid.state(v) {
                    OccupancyState::Free => prop_assert!(!world.is_blocked(&c)),
                    OccupancyState::Occupied => {
                        let near = world.obstacles.iter().any(|b| {
                            let inflated = Aabb::new(b.min.add_scalar(-diag), b.max.add_scalar(diag));
                            inflated.contains_point(&c, 0.0)
                        });
                        prop_assert!(near);
                    }
                    OccupancyState::Unknown => prop_assert!(false),
                }
            }
        }
    }
}
