use super::Viewpoint;
use crate::world::sensor_direction;
use crate::world::{raycast_known, OccupancyState, SensorModel, VoxelGrid};

/// Frontier surface element seen by one ray: the spherical patch of radius
/// `r` spanning `d_theta` in azimuth and `d_phi` in polar angle around the
/// polar angle `polar` (all radians), `2 r^2 d_theta sin(polar) sin(d_phi / 2)`.
pub fn frontier_area(r: f64, d_theta: f64, polar: f64, d_phi: f64) -> f64 {
    2.0 * r * r * d_theta * polar.sin() * (d_phi / 2.0).sin()
}

/// Frontier area (m^2) visible from a viewpoint: every ray of the sensor
/// grid that first leaves known-free space into an Unknown voxel within
/// `r_max` contributes its surface element at that range. Viewpoints outside
/// known-free space score zero.
pub fn viewpoint_gain(grid: &VoxelGrid, vp: &Viewpoint, sensor: &SensorModel) -> f64 {
    match grid.voxel_at(&vp.position) {
        Some(v) if grid.is_free(v) => {}
        _ => return 0.0,
    }
    let d_theta = sensor.delta_theta.to_radians();
    let d_phi = sensor.delta_phi.to_radians();
    sensor
        .ray_angles()
        .into_iter()
        .map(|(dyaw, pitch)| {
            let dir = sensor_direction(vp.yaw + dyaw, pitch);
            match raycast_known(grid, vp.position, dir, sensor.r_max) {
                (r, Some(OccupancyState::Unknown)) => {
                    frontier_area(r, d_theta, std::f64::consts::FRAC_PI_2 - pitch, d_phi)
                }
                _ => 0.0,
            }
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dtg::ViewpointState;
    use crate::world::{Aabb, Vec3};
    use proptest::prelude::*;

    /// Composite Gauss–Legendre (5-point) quadrature of r^2 sin(phi) over
    /// the angular cell, independent of the closed form.
    fn quadrature(r: f64, d_theta: f64, polar: f64, d_phi: f64) -> f64 {
        const X: [f64; 5] = [
            0.0,
            -0.538_469_310_105_683_1,
            0.538_469_310_105_683_1,
            -0.906_179_845_938_664,
            0.906_179_845_938_664,
        ];
        const W: [f64; 5] = [
            0.568_888_888_888_888_9,
            0.478_628_670_499_366_5,
            0.478_628_670_499_366_5,
            0.236_926_885_056_189_1,
            0.236_926_885_056_189_1,
        ];
        let panels = 8;
        let (a, b) = (polar - d_phi / 2.0, polar + d_phi / 2.0);
        let h = (b - a) / panels as f64;
        let mut inner = 0.0;
        for p in 0..panels {
            let mid = a + (p as f64 + 0.5) * h;
            for (x, w) in X.iter().zip(W) {
                inner += w * (mid + x * h / 2.0).sin() * h / 2.0;
            }
        }
        // the integrand does not depend on theta
        r * r * inner * d_theta
    }

    #[test]
    fn single_ray_worked_value() {
        let d = 7.5f64.to_radians();
        let ds = frontier_area(5.0, d, 90f64.to_radians(), d);
        let q = quadrature(5.0, d, 90f64.to_radians(), d);
        assert!(((ds - q) / q).abs() <= 1e-6);
        assert!((ds - 0.4281).abs() < 5e-5, "{ds}");
        let doubled = frontier_area(10.0, d, 90f64.to_radians(), d);
        assert!((doubled / ds - 4.0).abs() < 1e-12);
    }

    fn vp_at(p: Vec3, yaw: f64) -> Viewpoint {
        Viewpoint {
            position: p,
            yaw,
            state: ViewpointState::Inactive,
            gain: 0.0,
        }
    }

    #[test]
    fn fully_known_surroundings_score_zero() {
        let mut g = VoxelGrid::new(&Aabb::new(Vec3::zeros(), Vec3::new(12.0, 12.0, 4.0)), 0.2);
        for v in 0..g.len() as u32 {
            g.mark(v, OccupancyState::Free);
        }
        let vp = vp_at(Vec3::new(6.1, 6.1, 2.1), 0.4);
        assert_eq!(viewpoint_gain(&g, &vp, &SensorModel::default()), 0.0);
    }

    #[test]
    fn unknown_world_gain_is_bounded() {
        let mut g = VoxelGrid::new(&Aabb::new(Vec3::zeros(), Vec3::new(12.0, 12.0, 4.0)), 0.2);
        let vp = vp_at(Vec3::new(6.1, 6.1, 2.1), 0.0);
        assert_eq!(viewpoint_gain(&g, &vp, &SensorModel::default()), 0.0);
        let v = g.voxel_at(&vp.position).unwrap();
        g.mark(v, OccupancyState::Free);
        let s = SensorModel::default();
        let gain = viewpoint_gain(&g, &vp, &s);
        let d = 7.5f64.to_radians();
        let bound = s.ray_count() as f64 * frontier_area(s.r_max, d, std::f64::consts::FRAC_PI_2, d);
        assert!(gain > 0.0 && gain <= bound);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(500))]
        #[test]
        fn closed_form_matches_quadrature(
            r in 0.01f64..5.0, polar_deg in 1.0f64..179.0,
            dt_deg in 0.5f64..15.0, dp_deg in 0.5f64..15.0,
        ) {
            let dp = dp_deg.to_radians();
            let polar = polar_deg.to_radians().clamp(dp / 2.0 + 1e-3, std::f64::consts::PI - dp / 2.0 - 1e-3);
            let closed = frontier_area(r, dt_deg.to_radians(), polar, dp);
            let q = quadrature(r, dt_deg.to_radians(), polar, dp);
            prop_assert!(((closed - q) / q).abs() <= 1e-6);
        }
    }
}
