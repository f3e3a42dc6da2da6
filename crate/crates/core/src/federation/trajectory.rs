use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Exploration,
    Optimistic,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Exploration => "I",
            Phase::Optimistic => "II",
        })
    }
}

/// One interaction with the environment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Record {
    /// 1-based global interaction index.
    pub t: usize,
    pub phase: Phase,
    /// 1-based client id.
    pub client: usize,
    pub arm: usize,
    pub reward: f64,
    pub inst_regret: f64,
    pub cum_regret: f64,
    pub cum_comm: u64,
    pub sync: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub final_regret: f64,
    pub final_comm: u64,
    pub phase1_comm: u64,
    pub phase2_comm: u64,
    pub sync_count: u64,
    pub param_dim: usize,
    pub beta: f64,
    pub gamma: f64,
    pub lambda: f64,
    pub phase1_len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub records: Vec<Record>,
    pub summary: Summary,
}

pub const CSV_HEADER: &str = "t,phase,client,arm,reward,inst_regret,cum_regret,cum_comm,sync";

impl Trajectory {
    /// CSV with a fixed column order. Floats use Rust's shortest round-trip
    /// formatting, which never depends on locale.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.records.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.t,
                r.phase,
                r.client,
                r.arm,
                r.reward,
                r.inst_regret,
                r.cum_regret,
                r.cum_comm,
                u8::from(r.sync)
            ));
        }
        out
    }
}
