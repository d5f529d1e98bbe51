use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::comms::NetworkConfig;
use crate::dtg::{Connectivity, DtgConfig};
use crate::planner::PlannerConfig;
use crate::world::{Aabb, AgentPose, GroundTruthWorld, SensorModel, Vec3, VoxelGrid, WorldError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error(transparent)]
    World(#[from] WorldError),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("reading {}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Everything that determines a run.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub world: GroundTruthWorld,
    pub resolution: f64,
    pub agents: usize,
    /// Explicit start poses; missing ones are drawn from `start_region`.
    pub starts: Vec<AgentPose>,
    pub start_region: Option<Aabb>,
    pub seed: u64,
    /// Camera used for gain evaluation.
    pub sensor: SensorModel,
    /// Angular pitch of the simulated depth scans, degrees.
    pub scan_pitch: f64,
    pub dtg: DtgConfig,
    pub planner: PlannerConfig,
    pub network: NetworkConfig,
    pub dt: f64,
    pub plan_hz: f64,
    pub coverage_target: f64,
    pub time_limit: f64,
    pub baseline: bool,
    /// Link sets are re-sent only when a distance moved by more than this.
    pub link_tolerance: f64,
    pub spin_rate_deg: f64,
}

impl ScenarioConfig {
    pub fn new(world: GroundTruthWorld) -> Self {
        Self {
            world,
            resolution: 0.2,
            agents: 1,
            starts: Vec::new(),
            start_region: None,
            seed: 0,
            sensor: SensorModel::default(),
            scan_pitch: 2.0,
            dtg: DtgConfig::default(),
            planner: PlannerConfig::default(),
            network: NetworkConfig::default(),
            dt: 0.1,
            plan_hz: 2.0,
            coverage_target: 0.95,
            time_limit: 600.0,
            baseline: true,
            link_tolerance: 0.0,
            spin_rate_deg: 90.0,
        }
    }

    /// World directives plus `key = value` parameters and `start x y z [yaw]`
    /// lines.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut world_lines = Vec::new();
        let mut params = Vec::new();
        let mut starts = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = raw.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            if let Some((k, v)) = line.split_once('=') {
                params.push((lineno, k.trim().to_string(), v.trim().to_string()));
            } else if let Some(rest) = line.strip_prefix("start ") {
                let nums = numbers(rest, lineno)?;
                if !(nums.len() == 3 || nums.len() == 4) {
                    return Err(parse_err(lineno, "start takes x y z [yaw]"));
                }
                let yaw = nums.get(3).copied().unwrap_or(0.0);
                starts.push(AgentPose::new(Vec3::new(nums[0], nums[1], nums[2]), yaw));
            } else {
                world_lines.push((lineno, line));
            }
        }
        let mut cfg = Self::new(GroundTruthWorld::from_lines(world_lines.into_iter())?);
        cfg.starts = starts;
        for (line, k, v) in params {
            cfg.set(&k, &v).map_err(|msg| parse_err(line, &msg))?;
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Sets one parameter by name.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let num = || value.parse::<f64>().map_err(|_| format!("{key}: not a number: `{value}`"));
        let int = || value.parse::<u64>().map_err(|_| format!("{key}: not an integer: `{value}`"));
        match key {
            "resolution" => self.resolution = num()?,
            "agents" => self.agents = int()? as usize,
            "seed" => self.seed = int()?,
            "dt" => self.dt = num()?,
            "plan_hz" => self.plan_hz = num()?,
            "coverage" => self.coverage_target = num()?,
            "time_limit" => self.time_limit = num()?,
            "baseline" => {
                self.baseline = match value {
                    "on" | "true" | "1" => true,
                    "off" | "false" | "0" => false,
                    _ => return Err(format!("baseline: expected on/off, got `{value}`")),
                }
            }
            "latency" => self.network.latency = num()?,
            "jitter" => self.network.jitter = num()?,
            "drop" => self.network.drop_probability = num()?,
            "link_tolerance" => self.link_tolerance = num()?,
            "spin_rate" => self.spin_rate_deg = num()?,
            "fov_theta_left" => self.sensor.fov_theta_left = num()?,
            "fov_theta_right" => self.sensor.fov_theta_right = num()?,
            "fov_phi_up" => self.sensor.fov_phi_up = num()?,
            "fov_phi_down" => self.sensor.fov_phi_down = num()?,
            "r_max" => self.sensor.r_max = num()?,
            "delta_theta" => self.sensor.delta_theta = num()?,
            "delta_phi" => self.sensor.delta_phi = num()?,
            "scan_pitch" => self.scan_pitch = num()?,
            "d_max" => self.dtg.d_max = num()?,
            "p_th" => self.dtg.p_th = num()?,
            "g_th" => self.dtg.g_th = num()?,
            "e_th" => self.dtg.e_th = num()?,
            "eroi_side" => self.dtg.eroi_side = num()?,
            "viewpoint_azimuths" => self.dtg.viewpoint_azimuths = int()? as usize,
            "viewpoint_radii" => {
                self.dtg.viewpoint_radii = value
                    .split(',')
                    .map(|s| s.trim().parse::<f64>().map_err(|_| format!("viewpoint_radii: bad entry `{s}`")))
                    .collect::<Result<_, _>>()?
            }
            "connectivity" => {
                self.dtg.connectivity = match value {
                    "6" => Connectivity::Six,
                    "26" => Connectivity::TwentySix,
                    _ => return Err(format!("connectivity: expected 6 or 26, got `{value}`")),
                }
            }
            "edge_resend_margin" => self.dtg.edge_resend_margin = num()?,
            "n_tau" => self.planner.n_tau = num()?,
            "g_l" => self.planner.g_l = num()?,
            "lambda" => self.planner.lambda = num()?,
            "vel_max" => self.planner.vel_max = num()?,
            "start_region" => {
                let n = numbers(value, 0).map_err(|_| format!("start_region: bad numbers `{value}`"))?;
                if n.len() != 6 {
                    return Err("start_region takes x0 y0 z0 x1 y1 z1".into());
                }
                self.start_region = Some(Aabb::new(Vec3::new(n[0], n[1], n[2]), Vec3::new(n[3], n[4], n[5])));
            }
            _ => return Err(format!("unknown parameter `{key}`")),
        }
        Ok(())
    }

    pub fn scan_sensor(&self) -> SensorModel {
        self.sensor.with_pitch(self.scan_pitch, self.scan_pitch)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.agents == 0 || self.agents > u16::MAX as usize / 2 {
            return bad(format!("agent count {} out of range", self.agents));
        }
        if !(self.resolution > 0.0) {
            return bad("resolution must be positive".into());
        }
        if !(self.dt > 0.0) {
            return bad("dt must be positive".into());
        }
        if !(self.plan_hz > 0.0) {
            return bad("plan_hz must be positive".into());
        }
        if !(self.coverage_target > 0.0 && self.coverage_target <= 1.0) {
            return bad(format!("coverage target must lie in (0, 1], got {}", self.coverage_target));
        }
        if !(self.time_limit >= 0.0) {
            return bad("time limit must be non-negative".into());
        }
        if !(0.0..1.0).contains(&self.network.drop_probability) {
            return bad("drop probability must lie in [0, 1)".into());
        }
        if !(self.network.latency >= 0.0 && self.network.jitter >= 0.0) {
            return bad("latency and jitter must be non-negative".into());
        }
        if !(self.scan_pitch > 0.0) {
            return bad("scan_pitch must be positive".into());
        }
        self.sensor.validate().map_err(ConfigError::Invalid)?;
        self.dtg.validate().map_err(ConfigError::Invalid)?;
        self.planner.validate().map_err(ConfigError::Invalid)?;
        if self.starts.len() > self.agents {
            return bad(format!("{} start poses for {} agents", self.starts.len(), self.agents));
        }
        if self.starts.len() < self.agents && self.start_region.is_none() {
            return bad("not enough start poses and no start_region".into());
        }
        Ok(())
    }

    /// Start poses: explicit ones first, the rest drawn from the start
    /// region with the run seed. All lie in free space, pairwise at least
    /// 1 m apart.
    pub fn start_poses(&self) -> Result<Vec<AgentPose>, ConfigError> {
        let grid = VoxelGrid::new(&self.world.bounds, self.resolution);
        let ok = |p: &Vec3, placed: &[AgentPose]| -> bool {
            self.world.bounds.contains_point(p, 0.0)
                && !self.world.is_blocked(p)
                && grid.voxel_at(p).is_some_and(|v| !self.world.is_blocked(&grid.center(v)))
                && placed.iter().all(|q| (q.position - p).norm() >= 1.0)
        };
        let mut poses: Vec<AgentPose> = Vec::new();
        for s in &self.starts {
            if !ok(&s.position, &poses) {
                return Err(ConfigError::Invalid(format!(
                    "start {:?} is blocked, outside the world or closer than 1 m to another start",
                    s.position
                )));
            }
            poses.push(*s);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x5eed_57a7);
        while poses.len() < self.agents {
            let region = self.start_region.expect("validated");
            let mut placed = false;
            for _ in 0..10_000 {
                let p = Vec3::new(
                    rng.gen_range(region.min.x..=region.max.x),
                    rng.gen_range(region.min.y..=region.max.y),
                    rng.gen_range(region.min.z..=region.max.z),
                );
                if ok(&p, &poses) {
                    let yaw = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
                    poses.push(AgentPose::new(p, yaw));
                    placed = true;
                    break;
                }
            }
            if !placed {
                return Err(ConfigError::Invalid("could not place agents in the start region".into()));
            }
        }
        Ok(poses)
    }
}

fn parse_err(line: usize, msg: &str) -> ConfigError {
    ConfigError::Parse {
        line,
        msg: msg.to_string(),
    }
}

fn numbers(s: &str, line: usize) -> Result<Vec<f64>, ConfigError> {
    s.split_whitespace()
        .map(|p| p.parse::<f64>().map_err(|_| parse_err(line, &format!("not a number: `{p}`"))))
        .collect()
}
