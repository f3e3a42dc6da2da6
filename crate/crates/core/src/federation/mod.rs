//! The simulation engine: uniform exploration, the Phase-I oracle, the
//! event-triggered Phase-II protocol and the baselines.
//!
//! Clients act in round-robin order: interaction `t` belongs to client
//! `((t − 1) mod N) + 1`.

mod engine;
mod ledger;
mod trajectory;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

pub use engine::{FederatedEngine, StepOutcome, SyncPolicy};
pub use ledger::{stat_size, CommLedger};
pub use trajectory::{Phase, Record, Summary, Trajectory, CSV_HEADER};

use crate::confidence::BetaSchedule;
use crate::error::{Error, Result};
use crate::models::{MlpLayout, Model, ParamVector, DEFAULT_HIDDEN};
use crate::objectives::{build_armset_from_csv, build_synthetic_armset, ArmSet, SyntheticKind};
use crate::oracle::{distributed_gld, GldConfig, LocalDataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    FedGo,
    DisLinUcb,
    OneGo,
    NGo,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::FedGo, Algorithm::DisLinUcb, Algorithm::OneGo, Algorithm::NGo];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::FedGo => "fedgo",
            Algorithm::DisLinUcb => "dislinucb",
            Algorithm::OneGo => "one_go",
            Algorithm::NGo => "n_go",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown algorithm `{s}` (expected fedgo, dislinucb, one_go or n_go)")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Environment {
    Synthetic { kind: SyntheticKind, arms: usize },
    Csv { path: PathBuf, clusters: usize },
}

impl Environment {
    pub fn build(&self, noise_sigma: f64, seed: u64) -> Result<ArmSet> {
        match self {
            Environment::Synthetic { kind, arms } => build_synthetic_armset(*kind, *arms, noise_sigma, seed),
            Environment::Csv { path, clusters } => build_armset_from_csv(path, *clusters, noise_sigma, seed),
        }
    }
}

/// Event-trigger threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gamma {
    /// `scale · d·F⁴·T / (μ²·N)` with `F` and `μ` taken from [`BetaConfig`].
    Auto { scale: f64 },
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaConfig {
    pub scale: f64,
    /// Reward bound used by the β and γ schedules. `None` means the largest
    /// absolute mean reward of the arm set.
    pub f_bound: Option<f64>,
    pub mu: f64,
    /// Defaults to the environment noise level.
    pub sigma: Option<f64>,
    /// Radius used by the linear baseline.
    pub linear: f64,
}

pub const DEFAULT_BETA_SCALE: f64 = 1e-7;
pub const DEFAULT_GAMMA_SCALE: f64 = 3e-4;
pub const DEFAULT_F_BOUND: f64 = 1.0;
pub const DEFAULT_LAMBDA_SCALE: f64 = 3e-3;
pub const DEFAULT_BETA_LINEAR: f64 = 1.0;

impl Default for BetaConfig {
    fn default() -> Self {
        Self {
            scale: DEFAULT_BETA_SCALE,
            f_bound: Some(DEFAULT_F_BOUND),
            mu: 1.0,
            sigma: None,
            linear: DEFAULT_BETA_LINEAR,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    pub clients: usize,
    /// Phase-II rounds per client.
    pub rounds: usize,
    /// Defaults to `⌈√(N·T)⌉`.
    pub phase1_len: Option<usize>,
    pub hidden: usize,
    pub lambda_scale: f64,
    pub gamma: Gamma,
    pub beta: BetaConfig,
    pub gld: GldConfig,
    pub seed: u64,
    pub environment: Environment,
    pub noise_sigma: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::FedGo,
            clients: 20,
            rounds: 100,
            phase1_len: None,
            hidden: DEFAULT_HIDDEN,
            lambda_scale: DEFAULT_LAMBDA_SCALE,
            gamma: Gamma::Auto {
                scale: DEFAULT_GAMMA_SCALE,
            },
            beta: BetaConfig::default(),
            gld: GldConfig::default(),
            seed: 0,
            environment: Environment::Synthetic {
                kind: SyntheticKind::Hartmann6,
                arms: 50,
            },
            noise_sigma: 0.01,
        }
    }
}

impl RunConfig {
    pub fn phase1_len(&self) -> usize {
        self.phase1_len
            .unwrap_or_else(|| ((self.clients * self.rounds) as f64).sqrt().ceil() as usize)
    }

    /// `C_λ·√(N·T)`, floored at `C_λ` so that a zero horizon still yields a
    /// valid regularizer.
    pub fn lambda(&self) -> f64 {
        self.lambda_scale * ((self.clients * self.rounds) as f64).sqrt().max(1.0)
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.clients == 0 {
            problems.push("clients: must be >= 1".to_string());
        }
        if self.hidden == 0 {
            problems.push("hidden: must be >= 1".to_string());
        }
        if !(self.lambda_scale > 0.0 && self.lambda_scale.is_finite()) {
            problems.push(format!("lambda_scale: must be positive, got {}", self.lambda_scale));
        }
        match self.gamma {
            Gamma::Auto { scale } if !(scale >= 0.0 && scale.is_finite()) => {
                problems.push(format!("gamma_scale: must be >= 0, got {scale}"))
            }
            Gamma::Fixed(g) if g.is_nan() || g < 0.0 => problems.push(format!("gamma: must be >= 0, got {g}")),
            _ => {}
        }
        if !(self.beta.scale >= 0.0 && self.beta.scale.is_finite()) {
            problems.push(format!("beta_scale: must be >= 0, got {}", self.beta.scale));
        }
        if !(self.beta.mu > 0.0 && self.beta.mu.is_finite()) {
            problems.push(format!("beta_mu: must be positive, got {}", self.beta.mu));
        }
        if !(self.beta.linear >= 0.0 && self.beta.linear.is_finite()) {
            problems.push(format!("beta_linear: must be >= 0, got {}", self.beta.linear));
        }
        if let Some(f) = self.beta.f_bound {
            if !(f >= 0.0 && f.is_finite()) {
                problems.push(format!("beta_f_bound: must be >= 0, got {f}"));
            }
        }
        if let Some(s) = self.beta.sigma {
            if !(s >= 0.0 && s.is_finite()) {
                problems.push(format!("beta_sigma: must be >= 0, got {s}"));
            }
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            problems.push(format!("noise_sigma: must be >= 0, got {}", self.noise_sigma));
        }
        if let Err(e) = self.gld.validate() {
            problems.push(format!("gld: {e}"));
        }
        match &self.environment {
            Environment::Synthetic { arms: 0, .. } => problems.push("arms: must be >= 1".to_string()),
            Environment::Csv { clusters: 0, .. } => problems.push("clusters: must be >= 1".to_string()),
            _ => {}
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}

const STREAM_ARMS: u64 = 1;
const STREAM_EXPLORE: u64 = 2;
const STREAM_NOISE: u64 = 3;
const STREAM_GLD: u64 = 4;

/// Independent generators derived from one master seed. Every algorithm
/// run with the same seed sees the same arm set, the same Phase-I arm
/// draws and the same noise sequence.
#[derive(Debug, Clone)]
pub struct Streams {
    pub arms: ChaCha20Rng,
    pub explore: ChaCha20Rng,
    pub noise: ChaCha20Rng,
    pub gld: ChaCha20Rng,
}

impl Streams {
    pub fn new(seed: u64) -> Self {
        let stream = |id| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(id);
            rng
        };
        Self {
            arms: stream(STREAM_ARMS),
            explore: stream(STREAM_EXPLORE),
            noise: stream(STREAM_NOISE),
            gld: stream(STREAM_GLD),
        }
    }
}

/// Running regret/communication totals used to build records.
#[derive(Debug, Default)]
struct Accumulator {
    records: Vec<Record>,
    cum_regret: f64,
}

impl Accumulator {
    #[allow(clippy::too_many_arguments)]
    fn push(&mut self, phase: Phase, client: usize, arm: usize, reward: f64, arms: &ArmSet, comm: u64, sync: bool) {
        let inst = arms.regret(arm);
        self.cum_regret += inst;
        self.records.push(Record {
            t: self.records.len() + 1,
            phase,
            client: client + 1,
            arm,
            reward,
            inst_regret: inst,
            cum_regret: self.cum_regret,
            cum_comm: comm,
            sync,
        });
    }
}

pub fn mlp_model(arms: &ArmSet, hidden: usize) -> Result<Model> {
    Ok(Model::Mlp(MlpLayout::new(arms.dim(), hidden)?))
}

/// Output of uniform exploration.
#[derive(Debug, Clone)]
pub struct Phase1Outcome {
    pub w0: ParamVector,
    pub datasets: Vec<LocalDataset>,
    pub records: Vec<Record>,
}

/// `T₀` uniform draws from the arm set, split round-robin over clients.
pub fn explore_uniform(
    cfg: &RunConfig,
    arms: &ArmSet,
    streams: &mut Streams,
) -> Result<(Vec<LocalDataset>, Vec<Record>)> {
    let mut datasets = vec![LocalDataset::new(); cfg.clients];
    let mut acc = Accumulator::default();
    for t in 0..cfg.phase1_len() {
        let client = t % cfg.clients;
        let arm = streams.explore.random_range(0..arms.len());
        let reward = arms.sample_reward(arm, &mut streams.noise)?;
        datasets[client].push(arms.arm(arm).to_vec(), reward)?;
        acc.push(Phase::Exploration, client, arm, reward, arms, 0, false);
    }
    Ok((datasets, acc.records))
}

/// Uniform exploration followed by the distributed oracle over all clients.
/// With `T₀ = 0` there is nothing to fit and `ŵ₀ = 0`.
pub fn run_phase1(
    cfg: &RunConfig,
    arms: &ArmSet,
    model: &Model,
    ledger: &mut CommLedger,
    streams: &mut Streams,
) -> Result<Phase1Outcome> {
    let (datasets, mut records) = explore_uniform(cfg, arms, streams)?;
    let gld = GldConfig {
        seed: streams.gld.random(),
        ..cfg.gld
    };
    let w0 = if records.is_empty() {
        model.zeros()
    } else {
        distributed_gld(&datasets, model, &gld, ledger)?
    };
    if let Some(last) = records.last_mut() {
        last.cum_comm = ledger.total();
    }
    Ok(Phase1Outcome { w0, datasets, records })
}

fn beta_for(cfg: &RunConfig, arms: &ArmSet, dim: usize) -> f64 {
    BetaSchedule {
        c_beta: cfg.beta.scale,
        dim,
        sigma_noise: cfg.beta.sigma.unwrap_or(cfg.noise_sigma),
        f_bound: cfg.beta.f_bound.unwrap_or_else(|| arms.max_abs_reward()),
        mu: cfg.beta.mu,
    }
    .value()
}

/// Resolved trigger threshold for statistics of dimension `dim`.
pub fn gamma_for(cfg: &RunConfig, arms: &ArmSet, dim: usize) -> f64 {
    match cfg.gamma {
        Gamma::Fixed(g) => g,
        Gamma::Auto { scale } => {
            let f = cfg.beta.f_bound.unwrap_or_else(|| arms.max_abs_reward());
            let mu = cfg.beta.mu;
            scale * dim as f64 * f.powi(4) * cfg.rounds as f64 / (mu * mu * cfg.clients as f64)
        }
    }
}

fn drive_phase2(
    cfg: &RunConfig,
    arms: &ArmSet,
    engine: &mut FederatedEngine,
    ledger: &mut CommLedger,
    streams: &mut Streams,
    t_offset: usize,
) -> Result<Vec<Record>> {
    let mut acc = Accumulator::default();
    let n = engine.n_clients();
    for step in 0..cfg.clients * cfg.rounds {
        let client = step % n;
        let out = engine
            .step(client, arms, &mut streams.noise, ledger)
            .map_err(|e| Error::breakdown(format!("phase II at t={}: {e}", t_offset + step + 1)))?;
        acc.push(Phase::Optimistic, client, out.arm, out.reward, arms, ledger.total(), out.synced);
    }
    Ok(acc.records)
}

/// Phase II of the federated algorithm with the trigger threshold `gamma`.
pub fn run_phase2_fedgo(
    cfg: &RunConfig,
    arms: &ArmSet,
    model: Model,
    w0: ParamVector,
    gamma: f64,
    ledger: &mut CommLedger,
    streams: &mut Streams,
) -> Result<Vec<Record>> {
    let beta = beta_for(cfg, arms, model.param_dim());
    let mut engine =
        FederatedEngine::shared(model, w0, cfg.lambda(), cfg.clients, arms, beta, SyncPolicy::Threshold(gamma))?;
    drive_phase2(cfg, arms, &mut engine, ledger, streams, cfg.phase1_len())
}

/// Linear UCB on raw arm features with the same trigger and accounting.
pub fn run_phase2_dislinucb(
    cfg: &RunConfig,
    arms: &ArmSet,
    gamma: f64,
    ledger: &mut CommLedger,
    streams: &mut Streams,
) -> Result<Vec<Record>> {
    let model = Model::Linear { dim: arms.dim() };
    let beta = cfg.beta.linear;
    let mut engine = FederatedEngine::shared(
        model,
        model.zeros(),
        cfg.lambda(),
        cfg.clients,
        arms,
        beta,
        SyncPolicy::Threshold(gamma),
    )?;
    drive_phase2(cfg, arms, &mut engine, ledger, streams, cfg.phase1_len())
}

/// One shared model, synchronized after every interaction.
pub fn run_one_go(
    cfg: &RunConfig,
    arms: &ArmSet,
    model: Model,
    w0: ParamVector,
    ledger: &mut CommLedger,
    streams: &mut Streams,
) -> Result<Vec<Record>> {
    let beta = beta_for(cfg, arms, model.param_dim());
    let mut engine = FederatedEngine::shared(model, w0, cfg.lambda(), cfg.clients, arms, beta, SyncPolicy::Always)?;
    drive_phase2(cfg, arms, &mut engine, ledger, streams, cfg.phase1_len())
}

/// Independent clients: each fits its own anchor on its own Phase-I data
/// (no communication) and never synchronizes.
pub fn run_n_go(
    cfg: &RunConfig,
    arms: &ArmSet,
    model: Model,
    datasets: &[LocalDataset],
    ledger: &mut CommLedger,
    streams: &mut Streams,
) -> Result<Vec<Record>> {
    let mut anchors = Vec::with_capacity(datasets.len());
    for data in datasets {
        let gld = GldConfig {
            seed: streams.gld.random(),
            ..cfg.gld
        };
        let w0 = if data.is_empty() {
            model.zeros()
        } else {
            // Local training involves no transfer.
            distributed_gld(std::slice::from_ref(data), &model, &gld, &mut CommLedger::new())?
        };
        anchors.push(w0);
    }
    let beta = beta_for(cfg, arms, model.param_dim());
    let mut engine = FederatedEngine::per_client(model, anchors, cfg.lambda(), arms, beta)?;
    drive_phase2(cfg, arms, &mut engine, ledger, streams, cfg.phase1_len())
}

/// Builds the environment from the config and runs one full simulation.
pub fn run(cfg: &RunConfig) -> Result<Trajectory> {
    cfg.validate()?;
    let mut streams = Streams::new(cfg.seed);
    let arm_seed: u64 = streams.arms.random();
    let arms = cfg.environment.build(cfg.noise_sigma, arm_seed)?;
    run_on(cfg, &arms, &mut streams)
}

/// Runs one simulation against a prepared arm set.
pub fn run_on(cfg: &RunConfig, arms: &ArmSet, streams: &mut Streams) -> Result<Trajectory> {
    cfg.validate()?;
    let mut ledger = CommLedger::new();
    let mlp = mlp_model(arms, cfg.hidden)?;
    let (mut records, phase2, dim) = match cfg.algorithm {
        Algorithm::FedGo | Algorithm::OneGo => {
            let p1 = run_phase1(cfg, arms, &mlp, &mut ledger, streams)?;
            let phase2 = if cfg.algorithm == Algorithm::FedGo {
                let gamma = gamma_for(cfg, arms, mlp.param_dim());
                run_phase2_fedgo(cfg, arms, mlp, p1.w0, gamma, &mut ledger, streams)?
            } else {
                run_one_go(cfg, arms, mlp, p1.w0, &mut ledger, streams)?
            };
            (p1.records, phase2, mlp.param_dim())
        }
        Algorithm::NGo => {
            let (datasets, records) = explore_uniform(cfg, arms, streams)?;
            let phase2 = run_n_go(cfg, arms, mlp, &datasets, &mut ledger, streams)?;
            (records, phase2, mlp.param_dim())
        }
        Algorithm::DisLinUcb => {
            let (_, records) = explore_uniform(cfg, arms, streams)?;
            let gamma = gamma_for(cfg, arms, arms.dim());
            let phase2 = run_phase2_dislinucb(cfg, arms, gamma, &mut ledger, streams)?;
            (records, phase2, arms.dim())
        }
    };

    let offset = records.len();
    let base_regret = records.last().map_or(0.0, |r| r.cum_regret);
    records.extend(phase2.into_iter().map(|mut r| {
        r.t += offset;
        r.cum_regret += base_regret;
        r
    }));

    let gamma = match cfg.algorithm {
        Algorithm::OneGo => 0.0,
        Algorithm::NGo => f64::INFINITY,
        _ => gamma_for(cfg, arms, dim),
    };
    let summary = Summary {
        final_regret: records.last().map_or(0.0, |r| r.cum_regret),
        final_comm: ledger.total(),
        phase1_comm: ledger.phase1_scalars,
        phase2_comm: ledger.phase2_scalars(),
        sync_count: ledger.sync_count,
        param_dim: dim,
        beta: match cfg.algorithm {
            Algorithm::DisLinUcb => cfg.beta.linear,
            _ => beta_for(cfg, arms, dim),
        },
        gamma,
        lambda: cfg.lambda(),
        phase1_len: cfg.phase1_len(),
    };
    Ok(Trajectory { records, summary })
}
