use crate::world::{wrap_angle, AgentPose, Vec3};

pub fn yaw_towards(from: &Vec3, to: &Vec3) -> Option<f64> {
    let d = to - from;
    (d.x.hypot(d.y) > 1e-9).then(|| d.y.atan2(d.x))
}

/// Moves `speed * dt` meters along `path`, dropping the waypoints passed.
/// Yaw follows the direction of travel; `final_yaw` is applied once the
/// last waypoint is reached.
pub fn advance_motion(pose: &AgentPose, path: &mut Vec<Vec3>, dt: f64, speed: f64, final_yaw: Option<f64>) -> AgentPose {
    let mut pos = pose.position;
    let mut yaw = pose.yaw;
    let mut budget = speed * dt;
    let mut next = 0;
    while next < path.len() {
        let d = path[next] - pos;
        let len = d.norm();
        if let Some(y) = yaw_towards(&pos, &path[next]) {
            yaw = y;
        }
        if len <= budget {
            budget -= len;
            pos = path[next];
            next += 1;
        } else {
            pos += d * (budget / len);
            break;
        }
    }
    path.drain(..next);
    if path.is_empty() {
        if let Some(y) = final_yaw {
            yaw = y;
        }
    }
    AgentPose {
        position: pos,
        yaw: wrap_angle(yaw),
    }
}
