//! Ground-truth environment, per-agent occupancy grids and the simulated
//! depth sensor.

mod geometry;
mod grid;
mod sensor;

pub use geometry::{Aabb, Vec3};
pub use grid::{OccupancyState, Traversal, TraversalStep, VoxelGrid, VoxelIndex};
pub use sensor::{
    direction as sensor_direction, integrate_scan, raycast_known, simulate_scan, wrap_angle, AgentPose,
    ScanRay, SensorModel,
};

use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid world: {0}")]
    Invalid(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Static scene geometry: the explorable volume and the boxes inside it.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthWorld {
    pub bounds: Aabb,
    pub obstacles: Vec<Aabb>,
}

impl GroundTruthWorld {
    pub fn new(bounds: Aabb, obstacles: Vec<Aabb>) -> Result<Self, WorldError> {
        let world = Self { bounds, obstacles };
        world.validate()?;
        Ok(world)
    }

    fn validate(&self) -> Result<(), WorldError> {
        let ext = self.bounds.extent();
        if !(ext.x > 0.0 && ext.y > 0.0 && ext.z > 0.0) {
            return Err(WorldError::Invalid(format!(
                "bounds extents must be positive, got {:?}",
                ext.as_slice()
            )));
        }
        for (i, ob) in self.obstacles.iter().enumerate() {
            let e = ob.extent();
            if !(e.x > 0.0 && e.y > 0.0 && e.z > 0.0) {
                return Err(WorldError::Invalid(format!("obstacle {i} is degenerate")));
            }
            if !self.bounds.contains_box(ob, 1e-9) {
                return Err(WorldError::Invalid(format!(
                    "obstacle {i} extends outside the world bounds"
                )));
            }
        }
        Ok(())
    }

    /// True if `p` lies inside (or on the surface of) any obstacle.
    pub fn is_blocked(&self, p: &Vec3) -> bool {
        self.obstacles.iter().any(|b| b.contains_point(p, 0.0))
    }

    /// Distance to the first obstacle surface along a unit ray, if any lies
    /// within `max_range`.
    pub fn first_hit(&self, origin: &Vec3, dir: &Vec3, max_range: f64) -> Option<f64> {
        let mut best: Option<f64> = None;
        for ob in &self.obstacles {
            if let Some((t0, _)) = ob.ray_interval(origin, dir) {
                let t = t0.max(0.0);
                if t <= max_range && best.is_none_or(|b| t < b) {
                    best = Some(t);
                }
            }
        }
        best
    }

    /// Parses a world from text. Lines other than `bounds`, `box` and
    /// comments are rejected.
    pub fn parse(text: &str) -> Result<Self, WorldError> {
        Self::from_lines(text.lines().enumerate().map(|(i, l)| (i + 1, l)))
    }

    pub(crate) fn from_lines<'a>(
        lines: impl Iterator<Item = (usize, &'a str)>,
    ) -> Result<Self, WorldError> {
        let mut bounds = None;
        let mut obstacles = Vec::new();
        for (lineno, raw) in lines {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let head = parts.next().unwrap_or_default();
            let nums = parse_numbers(parts, lineno)?;
            match head {
                "bounds" => {
                    if bounds.is_some() {
                        return Err(WorldError::Parse {
                            line: lineno,
                            msg: "duplicate bounds line".into(),
                        });
                    }
                    bounds = Some(box_from(&nums, lineno)?);
                }
                "box" => obstacles.push(box_from(&nums, lineno)?),
                other => {
                    return Err(WorldError::Parse {
                        line: lineno,
                        msg: format!("unknown directive `{other}`"),
                    })
                }
            }
        }
        let bounds = bounds.ok_or_else(|| WorldError::Parse {
            line: 0,
            msg: "missing bounds line".into(),
        })?;
        Self::new(bounds, obstacles)
    }
}

fn parse_numbers<'a>(
    parts: impl Iterator<Item = &'a str>,
    line: usize,
) -> Result<Vec<f64>, WorldError> {
    parts
        .map(|p| {
            p.parse::<f64>().map_err(|_| WorldError::Parse {
                line,
                msg: format!("not a number: `{p}`"),
            })
        })
        .collect()
}

fn box_from(nums: &[f64], line: usize) -> Result<Aabb, WorldError> {
    if nums.len() != 6 {
        return Err(WorldError::Parse {
            line,
            msg: format!("expected 6 numbers, found {}", nums.len()),
        });
    }
    if nums.iter().any(|v| !v.is_finite()) {
        return Err(WorldError::Parse {
            line,
            msg: "non-finite coordinate".into(),
        });
    }
    Ok(Aabb::new(
        Vec3::new(nums[0], nums[1], nums[2]),
        Vec3::new(nums[3], nums[4], nums[5]),
    ))
}

/// Reads and validates a world file.
pub fn load_world(path: impl AsRef<Path>) -> Result<GroundTruthWorld, WorldError> {
    let text = std::fs::read_to_string(path)?;
    GroundTruthWorld::parse(&text)
}
