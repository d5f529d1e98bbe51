use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::comms::ByteLedger;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    CoverageReached,
    AllFinished,
    TimeLimit,
}

impl Termination {
    pub fn as_str(self) -> &'static str {
        match self {
            Termination::CoverageReached => "coverage",
            Termination::AllFinished => "finished",
            Termination::TimeLimit => "time-limit",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageSample {
    pub time: f64,
    pub union: f64,
    pub per_agent: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommSample {
    pub time: f64,
    pub cooperation: u64,
    pub mapping: u64,
}

/// Wall-clock durations per operation, milliseconds.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Timings {
    samples: BTreeMap<&'static str, Vec<f64>>,
}

impl Timings {
    pub fn record(&mut self, op: &'static str, ms: f64) {
        self.samples.entry(op).or_default().push(ms);
    }

    pub fn samples(&self, op: &str) -> &[f64] {
        self.samples.get(op).map_or(&[], Vec::as_slice)
    }

    /// `(op, mean, std, max)` per recorded operation.
    pub fn summary(&self) -> Vec<(&'static str, f64, f64, f64)> {
        self.samples
            .iter()
            .map(|(op, v)| {
                let n = v.len() as f64;
                let mean = v.iter().sum::<f64>() / n;
                let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
                let max = v.iter().cloned().fold(0.0, f64::max);
                (*op, mean, var.sqrt(), max)
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    pub agents: usize,
    pub seed: u64,
    pub coverage: Vec<CoverageSample>,
    pub comm: Vec<CommSample>,
    pub timings: Timings,
    pub termination: Option<Termination>,
    /// First time the union coverage reached the target.
    pub exploration_time: Option<f64>,
    pub ledger: ByteLedger,
    pub protocol_errors: u64,
    pub illegal_transitions: usize,
    pub allocation_checks: u64,
    pub allocation_violations: Vec<String>,
}

impl RunMetrics {
    pub fn new(agents: usize, seed: u64) -> Self {
        Self {
            agents,
            seed,
            coverage: Vec::new(),
            comm: Vec::new(),
            timings: Timings::default(),
            termination: None,
            exploration_time: None,
            ledger: ByteLedger::default(),
            protocol_errors: 0,
            illegal_transitions: 0,
            allocation_checks: 0,
            allocation_violations: Vec::new(),
        }
    }

    pub fn final_coverage(&self) -> f64 {
        self.coverage.last().map_or(0.0, |s| s.union)
    }
}

/// Writes coverage.csv, comm.csv, timing.csv and summary.csv into `dir`.
pub fn export_metrics(m: &RunMetrics, dir: &Path) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("coverage.csv"))?;
    let mut header = vec!["time".to_string(), "union".to_string()];
    header.extend((0..m.agents).map(|i| format!("agent{i}")));
    w.write_record(&header)?;
    for s in &m.coverage {
        let mut row = vec![format!("{:.1}", s.time), format!("{:.6}", s.union)];
        row.extend(s.per_agent.iter().map(|c| format!("{c:.6}")));
        w.write_record(&row)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("comm.csv"))?;
    w.write_record(["time", "cooperation_bytes", "mapping_bytes"])?;
    for s in &m.comm {
        w.write_record([format!("{:.1}", s.time), s.cooperation.to_string(), s.mapping.to_string()])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("timing.csv"))?;
    w.write_record(["op", "mean_ms", "std_ms", "max_ms"])?;
    for (op, mean, std, max) in m.timings.summary() {
        w.write_record([op.to_string(), format!("{mean:.4}"), format!("{std:.4}"), format!("{max:.4}")])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("summary.csv"))?;
    w.write_record([
        "agents",
        "seed",
        "exploration_time",
        "reason",
        "final_coverage",
        "sim_time",
        "cooperation_bytes",
        "mapping_bytes",
        "cooperation_single_bytes",
        "mapping_single_bytes",
        "messages",
        "dropped",
    ])?;
    w.write_record([
        m.agents.to_string(),
        m.seed.to_string(),
        m.exploration_time.map(|t| format!("{t:.1}")).unwrap_or_default(),
        m.termination.map(|t| t.as_str().to_string()).unwrap_or_default(),
        format!("{:.6}", m.final_coverage()),
        m.coverage.last().map(|s| format!("{:.1}", s.time)).unwrap_or_default(),
        m.ledger.cooperation.to_string(),
        m.ledger.mapping.to_string(),
        m.ledger.single_cooperation.to_string(),
        m.ledger.single_mapping.to_string(),
        m.ledger.messages.to_string(),
        m.ledger.dropped.to_string(),
    ])?;
    w.flush()?;
    Ok(())
}
