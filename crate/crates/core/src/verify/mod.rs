//! Self-checks behind `fedgo verify`.
//!
//! Each check returns a [`CheckOutcome`] instead of panicking so the CLI can
//! print a full table. Checks 1-8 are mechanism properties and run in
//! seconds; 9-11 are directional comparisons over full-size batches.

mod dense;

use std::fmt;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::confidence::ConfState;
use crate::error::Result;
use crate::federation::{
    run, stat_size, Algorithm, CommLedger, Environment, FederatedEngine, Gamma, Phase, RunConfig, Summary, SyncPolicy,
};
use crate::linalg::SpdMatrix;
use crate::models::{mlp_forward, mlp_grad_w, MlpLayout, Model, ParamVector};
use crate::objectives::{ArmSet, SyntheticKind};
use crate::oracle::{distributed_gld, pooled_loss, GldConfig, LocalDataset};

pub use dense::{logdet as dense_logdet, solve as dense_solve};

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub id: u8,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed: Duration,
    pub budget: Duration,
}

impl CheckOutcome {
    fn finish(id: u8, title: &'static str, budget_s: u64, start: Instant, res: Result<(bool, String)>) -> Self {
        let elapsed = start.elapsed();
        let budget = Duration::from_secs(budget_s);
        let (ok, mut detail) = match res {
            Ok(v) => v,
            Err(e) => (false, format!("error: {e}")),
        };
        if elapsed > budget {
            detail.push_str(&format!("; over time budget ({:.1}s > {budget_s}s)", elapsed.as_secs_f64()));
        }
        Self {
            id,
            title,
            passed: ok && elapsed <= budget,
            detail,
            elapsed,
            budget,
        }
    }
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {:>2}. {:<28} {:>7.2}s  {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.elapsed.as_secs_f64(),
            self.detail
        )
    }
}

fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

fn normals(rng: &mut ChaCha20Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

// ---------------------------------------------------------------- 1

/// Analytic MLP gradient against central finite differences.
pub fn check_gradient() -> CheckOutcome {
    let start = Instant::now();
    let res = (|| {
        let layout = MlpLayout::new(6, 25)?;
        let model = Model::Mlp(layout);
        let mut r = rng(101);
        let h = 1e-5;
        let mut worst = 0.0f64;
        for _ in 0..100 {
            let w = model.params(normals(&mut r, layout.param_dim()))?;
            let x: Vec<f64> = (0..6).map(|_| r.random::<f64>()).collect();
            let g = mlp_grad_w(&layout, &w, &x)?;
            let mut probe = w.clone();
            for (j, &gj) in g.iter().enumerate() {
                let orig = probe.values()[j];
                probe.values_mut()[j] = orig + h;
                let up = mlp_forward(&layout, &probe, &x)?;
                probe.values_mut()[j] = orig - h;
                let down = mlp_forward(&layout, &probe, &x)?;
                probe.values_mut()[j] = orig;
                let fd = (up - down) / (2.0 * h);
                worst = worst.max((fd - gj).abs() / gj.abs().max(1.0));
            }
        }
        Ok((worst < 1e-4, format!("max rel err {worst:.2e} over 100 draws (tol 1e-4)")))
    })();
    CheckOutcome::finish(1, "gradient vs finite diff", 5, start, res)
}

// ---------------------------------------------------------------- 2

/// Maintained Cholesky against dense refactorization, using the library's
/// rank-1 update.
pub fn check_linalg() -> CheckOutcome {
    check_linalg_with(|m, g| m.rank1_update_in_place(g))
}

/// As [`check_linalg`] with a caller-supplied update, so that a broken
/// update can be shown to fail the check.
pub fn check_linalg_with<F>(update: F) -> CheckOutcome
where
    F: Fn(&mut SpdMatrix, &[f64]) -> Result<()>,
{
    let start = Instant::now();
    let res = (|| {
        let mut r = rng(202);
        let (mut worst_logdet, mut worst_lemma, mut worst_factor) = (0.0f64, 0.0f64, 0.0f64);
        for _ in 0..100 {
            let dim = r.random_range(1..=64);
            let lambda = r.random_range(0.1..2.0);
            let steps = r.random_range(1..=30);
            let mut m = SpdMatrix::identity(dim, lambda)?;
            let mut dense = vec![0.0; dim * dim];
            (0..dim).for_each(|i| dense[i * dim + i] = lambda);
            for _ in 0..steps {
                let g = normals(&mut r, dim);
                let before = m.logdet();
                let q = m.quad_form_inv(&g)?;
                update(&mut m, &g)?;
                dense::add_outer(dim, &mut dense, &g);
                worst_lemma = worst_lemma.max(((m.logdet() - before) - q.ln_1p()).abs());
            }
            let reference = dense::logdet(dim, &dense).unwrap_or(f64::NAN);
            worst_logdet = worst_logdet.max((m.logdet() - reference).abs());
            let refactored = SpdMatrix::from_dense(dim, &dense)?;
            let scale = 1.0 + dense.iter().map(|v| v * v).sum::<f64>().sqrt();
            worst_factor = worst_factor.max(dense::frobenius_diff(&m.to_dense(), &refactored.to_dense()) / scale);
        }
        let ok = worst_logdet < 1e-8 && worst_lemma < 1e-10 && worst_factor < 1e-8;
        Ok((
            ok,
            format!(
                "logdet err {worst_logdet:.1e} (tol 1e-8), lemma err {worst_lemma:.1e} (tol 1e-10), factor rel err {worst_factor:.1e}"
            ),
        ))
    })();
    CheckOutcome::finish(2, "cholesky vs refactorization", 10, start, res)
}

// ---------------------------------------------------------------- 3

fn toy_arms(r: &mut ChaCha20Rng, k: usize, dim: usize, sigma: f64) -> Result<ArmSet> {
    let arms: Vec<Vec<f64>> = (0..k).map(|_| (0..dim).map(|_| r.random::<f64>()).collect()).collect();
    let means = arms
        .iter()
        .map(|x| x.iter().enumerate().map(|(i, v)| ((i + 1) as f64 * v * 3.0).sin()).sum())
        .collect();
    ArmSet::new(arms, means, sigma)
}

/// Centralized statistics over a list of absorbed points.
fn centralized(model: &Model, w0: &ParamVector, lambda: f64, data: &[(Vec<f64>, f64)]) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = model.param_dim();
    let mut sigma = vec![0.0; d * d];
    (0..d).for_each(|i| sigma[i * d + i] = lambda);
    let mut b = vec![0.0; d];
    for (x, y) in data {
        let (f0, g) = model.forward_grad(w0, x)?;
        dense::add_outer(d, &mut sigma, &g);
        let gw: f64 = g.iter().zip(w0.values()).map(|(a, c)| a * c).sum();
        for (bi, gi) in b.iter_mut().zip(&g) {
            *bi += gi * (gw + y - f0);
        }
    }
    Ok((sigma, b))
}

/// Replays an engine run and compares each client's statistics with the
/// centralized ones right after every sync. Returns (syncs, worst error,
/// whether all clients were pairwise identical).
pub fn aggregation_replay(gamma: f64, seed: u64) -> Result<(usize, f64, bool)> {
    let mut r = rng(seed);
    let layout = MlpLayout::new(3, 4)?;
    let model = Model::Mlp(layout);
    let arms = toy_arms(&mut r, 12, 3, 0.05)?;
    let w0 = model.params(normals(&mut r, layout.param_dim()))?;
    let lambda = 0.5;
    let n = 5;
    let mut engine = FederatedEngine::shared(model, w0.clone(), lambda, n, &arms, 0.3, SyncPolicy::Threshold(gamma))?;
    let mut ledger = CommLedger::new();
    let mut noise = rng(seed ^ 0xA5A5);
    let mut data = Vec::new();
    let (mut syncs, mut worst, mut identical) = (0, 0.0f64, true);
    for t in 0..50 {
        let out = engine.step(t % n, &arms, &mut noise, &mut ledger)?;
        data.push((arms.arm(out.arm).to_vec(), out.reward));
        if !out.synced {
            continue;
        }
        syncs += 1;
        let (sigma, b) = centralized(&model, &w0, lambda, &data)?;
        let first = &engine.clients()[0];
        for c in engine.clients() {
            let ds = dense::frobenius_diff(&c.sigma().to_dense(), &sigma);
            let db = dense::frobenius_diff(c.b(), &b);
            worst = worst.max(ds).max(db);
            identical &= c.sigma() == first.sigma() && c.b() == first.b();
        }
    }
    Ok((syncs, worst, identical))
}

pub fn check_aggregation() -> CheckOutcome {
    let start = Instant::now();
    let res = (|| {
        // Pick the largest threshold from a ladder that still fires at least
        // three syncs, so the check exercises both idle and sync steps.
        let mut chosen = None;
        for gamma in [8.0, 4.0, 2.0, 1.0, 0.5, 0.25, 0.1, 0.0] {
            let out = aggregation_replay(gamma, 303)?;
            if out.0 >= 3 {
                chosen = Some((gamma, out));
                break;
            }
        }
        let Some((gamma, (syncs, worst, identical))) = chosen else {
            return Ok((false, "no threshold produced 3 syncs".to_string()));
        };
        Ok((
            worst < 1e-8 && identical,
            format!("gamma {gamma}: {syncs} syncs, max deviation {worst:.1e} (tol 1e-8), clients identical: {identical}"),
        ))
    })();
    CheckOutcome::finish(3, "aggregation exactness", 10, start, res)
}

// ---------------------------------------------------------------- 4

fn random_small_config(r: &mut ChaCha20Rng, seed: u64) -> RunConfig {
    let kind = if r.random_bool(0.5) {
        SyntheticKind::Hartmann6
    } else {
        SyntheticKind::Cosine8
    };
    let gamma = [0.0, 0.1, 1.0, 10.0, f64::INFINITY][r.random_range(0..5)];
    let mut cfg = RunConfig {
        algorithm: Algorithm::ALL[r.random_range(0..4)],
        clients: r.random_range(1..=6),
        rounds: r.random_range(0..=15),
        hidden: r.random_range(1..=5),
        gamma: Gamma::Fixed(gamma),
        seed,
        environment: Environment::Synthetic {
            kind,
            arms: r.random_range(3..=20),
        },
        ..RunConfig::default()
    };
    cfg.phase1_len = Some(r.random_range(1..=12));
    cfg.gld.iterations = r.random_range(0..=20);
    cfg
}

pub fn check_accounting() -> CheckOutcome {
    let start = Instant::now();
    let res = (|| {
        let mut r = rng(404);
        let mut problems = Vec::new();
        for i in 0..20 {
            let cfg = random_small_config(&mut r, i);
            let traj = run(&cfg)?;
            let s = &traj.summary;
            let n = cfg.clients as u64;
            let expected_p1 = match cfg.algorithm {
                Algorithm::FedGo | Algorithm::OneGo => 2 * cfg.gld.iterations as u64 * n * s.param_dim as u64,
                Algorithm::NGo | Algorithm::DisLinUcb => 0,
            };
            let expected_p2 = s.sync_count * 2 * n * (stat_size(s.param_dim));
            let recorded_syncs = traj.records.iter().filter(|r| r.sync).count() as u64;
            let monotone = traj.records.windows(2).all(|w| w[1].cum_comm >= w[0].cum_comm);
            let last_comm = traj.records.last().map_or(0, |r| r.cum_comm);
            if s.phase1_comm != expected_p1
                || s.phase2_comm != expected_p2
                || recorded_syncs != s.sync_count
                || !monotone
                || last_comm != s.final_comm
            {
                problems.push(format!(
                    "config {i} ({}): phase1 {} vs {expected_p1}, phase2 {} vs {expected_p2}",
                    cfg.algorithm, s.phase1_comm, s.phase2_comm
                ));
            }
            if cfg.algorithm == Algorithm::NGo && s.phase2_comm != 0 {
                problems.push(format!("config {i}: n_go communicated"));
            }
            if cfg.algorithm == Algorithm::OneGo && s.sync_count != (cfg.clients * cfg.rounds) as u64 {
                problems.push(format!("config {i}: one_go synced {} times", s.sync_count));
            }
        }
        Ok(if problems.is_empty() {
            (true, "20 random configs, ledgers exact".to_string())
        } else {
            (false, problems.join("; "))
        })
    })();
    CheckOutcome::finish(4, "communication accounting", 10, start, res)
}

// ---------------------------------------------------------------- 5

pub fn trigger_config(gamma: f64) -> RunConfig {
    RunConfig {
        clients: 5,
        rounds: 40,
        hidden: 10,
        gamma: Gamma::Fixed(gamma),
        seed: 5,
        environment: Environment::Synthetic {
            kind: SyntheticKind::Hartmann6,
            arms: 30,
        },
        ..RunConfig::default()
    }
}

pub fn check_trigger() -> CheckOutcome {
    let start = Instant::now();
    let res = (|| {
        let gammas = [0.0, 0.1, 1.0, 10.0, f64::INFINITY];
        let mut counts = Vec::new();
        let mut zero_ok = true;
        for &g in &gammas {
            let cfg = trigger_config(g);
            let traj = run(&cfg)?;
            counts.push(traj.summary.sync_count);
            if g == 0.0 {
                // Every Phase-II gradient of the MLP has ∂f/∂c₂ = 1, so each
                // step has a nonzero gradient and must sync.
                let model = Model::Mlp(MlpLayout::new(6, cfg.hidden)?);
                let nonzero = model.param_dim() > 0;
                let phase2: Vec<_> = traj.records.iter().filter(|r| r.phase == Phase::Optimistic).collect();
                zero_ok = nonzero
                    && phase2.iter().all(|r| r.sync)
                    && traj.summary.sync_count == phase2.len() as u64;
            }
        }
        let monotone = counts.windows(2).all(|w| w[0] >= w[1]);
        let inf_zero = *counts.last().unwrap() == 0;
        Ok((
            monotone && inf_zero && zero_ok,
            format!("sync counts for gamma 0/0.1/1/10/inf: {counts:?}"),
        ))
    })();
    CheckOutcome::finish(5, "trigger semantics", 30, start, res)
}

// ---------------------------------------------------------------- 6

pub fn check_determinism() -> CheckOutcome {
    let start = Instant::now();
    let res = (|| {
        let mut mismatches = Vec::new();
        for alg in Algorithm::ALL {
            let cfg = RunConfig {
                algorithm: alg,
                clients: 10,
                rounds: 30,
                seed: 66,
                ..RunConfig::default()
            };
            let first = run(&cfg)?.to_csv();
            for _ in 0..2 {
                if run(&cfg)?.to_csv() != first {
                    mismatches.push(alg.name());
                }
            }
        }
        Ok(if mismatches.is_empty() {
            (true, "3 repeats per algorithm, CSVs byte-identical".to_string())
        } else {
            (false, format!("differing output: {mismatches:?}"))
        })
    })();
    CheckOutcome::finish(6, "determinism", 30, start, res)
}

// ---------------------------------------------------------------- 7

fn back_solve_transposed(l: &[f64], d: usize, rhs: &[f64]) -> Vec<f64> {
    // solves Lᵀ x = rhs for lower-triangular row-major L
    let mut x = rhs.to_vec();
    for i in (0..d).rev() {
        let mut s = x[i];
        for k in i + 1..d {
            s -= l[k * d + i] * x[k];
        }
        x[i] = s / l[i * d + i];
    }
    x
}

/// Samples points of the confidence ball and evaluates the first-order
/// model there. Returns (closed-form ucb, best sampled value, whether any
/// sample exceeded the closed form).
pub fn ucb_sampling(state: &ConfState, beta: f64, x: &[f64], samples: usize, seed: u64) -> Result<(f64, f64, bool)> {
    let ucb = state.ucb_score(beta, x)?;
    let (f0, g) = state.model().forward_grad(state.w0(), x)?;
    let d = state.dim();
    let l = state.sigma().factor();
    let center = state.w_hat();
    let w0 = state.w0().values();
    let mut r = rng(seed);
    let mut best = f64::NEG_INFINITY;
    let mut exceeded = false;
    for draw in 0..samples {
        let z = normals(&mut r, d);
        let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
        // Alternate interior and boundary points: the maximum of a linear
        // functional sits on the boundary, interior points guard the bound.
        let radius = if draw % 2 == 0 { 1.0 } else { r.random::<f64>().powf(1.0 / d as f64) };
        let u: Vec<f64> = z.iter().map(|v| v / norm * radius * beta.sqrt()).collect();
        let step = back_solve_transposed(l, d, &u);
        let value: f64 = f0
            + g.iter()
                .zip(center.iter().zip(&step).zip(w0))
                .map(|(gi, ((c, s), a))| gi * (c + s - a))
                .sum::<f64>();
        exceeded |= value > ucb + 1e-12 * (1.0 + ucb.abs());
        best = best.max(value);
    }
    Ok((ucb, best, exceeded))
}

pub fn check_ucb() -> CheckOutcome {
    let start = Instant::now();
    let res = (|| {
        let mut r = rng(707);
        let mut worst_gap = 0.0f64;
        let mut any_exceeded = false;
        for i in 0..20 {
            // Low-dimensional parameter spaces keep 10⁵ samples dense enough
            // near the maximizing boundary point.
            let model = match i % 3 {
                0 => Model::Linear { dim: 2 },
                1 => Model::Linear { dim: 3 },
                _ => Model::Mlp(MlpLayout::new(1, 1)?),
            };
            let dx = model.input_dim();
            let w0 = model.params(normals(&mut r, model.param_dim()))?;
            let lambda = r.random_range(0.5..2.0);
            let mut state = ConfState::new(model, w0, lambda)?;
            for _ in 0..r.random_range(0..15) {
                let x: Vec<f64> = (0..dx).map(|_| r.random::<f64>()).collect();
                state.absorb(&x, r.random_range(-1.0..1.0))?;
            }
            let beta = r.random_range(0.05..1.0);
            let x: Vec<f64> = (0..dx).map(|_| r.random::<f64>()).collect();
            let (ucb, best, exceeded) = ucb_sampling(&state, beta, &x, 100_000, 7000 + i)?;
            any_exceeded |= exceeded;
            worst_gap = worst_gap.max(ucb - best);
        }
        Ok((
            !any_exceeded && worst_gap < 1e-3,
            format!("20 states x 1e5 ball samples: none above ucb: {}, max gap {worst_gap:.1e} (tol 1e-3)", !any_exceeded),
        ))
    })();
    CheckOutcome::finish(7, "ucb closed form", 30, start, res)
}

// ---------------------------------------------------------------- 8

pub fn check_gld() -> CheckOutcome {
    let start = Instant::now();
    let res = (|| {
        let mut r = rng(808);
        let model = Model::Linear { dim: 3 };
        let theta = [0.7, -1.2, 0.4];
        let mut datasets = vec![LocalDataset::new(); 4];
        let mut rows = Vec::new();
        for s in 0..40 {
            let x: Vec<f64> = (0..3).map(|_| r.random_range(-1.0..1.0)).collect();
            let y: f64 = x.iter().zip(theta).map(|(a, b)| a * b).sum();
            datasets[s % 4].push(x.clone(), y)?;
            rows.push((x, y));
        }
        // closed-form least squares: (XᵀX)θ = Xᵀy
        let mut xtx = vec![0.0; 9];
        let mut xty = vec![0.0; 3];
        for (x, y) in &rows {
            dense::add_outer(3, &mut xtx, x);
            (0..3).for_each(|i| xty[i] += x[i] * y);
        }
        let ls = dense::solve(3, &xtx, &xty).expect("design matrix is nonsingular");
        let optimum = pooled_loss(&datasets, &model, &model.params(ls)?)?;
        let cfg = GldConfig {
            iterations: 3000,
            step_size: 0.1,
            inverse_temperature: f64::INFINITY,
            seed: 8,
        };
        let mut ledger = CommLedger::new();
        let w = distributed_gld(&datasets, &model, &cfg, &mut ledger)?;
        let reached = pooled_loss(&datasets, &model, &w)?;
        let gap = reached - optimum;
        Ok((
            gap.abs() < 1e-3,
            format!("final loss {reached:.3e} vs least squares {optimum:.3e} (tol 1e-3)"),
        ))
    })();
    CheckOutcome::finish(8, "noiseless gld", 10, start, res)
}

// ---------------------------------------------------------------- 9-11

/// Per-seed summaries of one algorithm on the default experiment shape.
#[derive(Debug, Clone)]
pub struct Batch {
    pub algorithm: Algorithm,
    pub summaries: Vec<Summary>,
    /// Fraction of syncs in the first half of Phase II, per seed (NaN when a
    /// run never synced).
    pub early_sync_fraction: Vec<f64>,
}

impl Batch {
    pub fn mean_regret(&self) -> f64 {
        mean(self.summaries.iter().map(|s| s.final_regret))
    }

    pub fn mean_phase2_comm(&self) -> f64 {
        mean(self.summaries.iter().map(|s| s.phase2_comm as f64))
    }

    pub fn max_syncs(&self) -> u64 {
        self.summaries.iter().map(|s| s.sync_count).max().unwrap_or(0)
    }
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = it.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

pub const BENCHMARK_SEEDS: std::ops::Range<u64> = 0..10;

pub fn benchmark_config(kind: SyntheticKind, algorithm: Algorithm, seed: u64) -> RunConfig {
    RunConfig {
        algorithm,
        seed,
        environment: Environment::Synthetic { kind, arms: 50 },
        ..RunConfig::default()
    }
}

/// Runs `algorithms × seeds` at N=20, T=100, |X|=50, h=25 in parallel.
pub fn benchmark_batch(kind: SyntheticKind, algorithms: &[Algorithm], seeds: std::ops::Range<u64>) -> Result<Vec<Batch>> {
    let jobs: Vec<(Algorithm, u64)> = algorithms
        .iter()
        .flat_map(|&a| seeds.clone().map(move |s| (a, s)))
        .collect();
    let results: Vec<(Algorithm, Summary, f64)> = jobs
        .par_iter()
        .map(|&(alg, seed)| {
            let cfg = benchmark_config(kind, alg, seed);
            let traj = run(&cfg)?;
            let t0 = cfg.phase1_len();
            let half = t0 + cfg.clients * cfg.rounds / 2;
            let early = traj.records.iter().filter(|r| r.sync && r.t <= half).count() as f64;
            let frac = early / traj.summary.sync_count as f64;
            Ok((alg, traj.summary, frac))
        })
        .collect::<Result<_>>()?;
    Ok(algorithms
        .iter()
        .map(|&a| {
            let mine: Vec<_> = results.iter().filter(|r| r.0 == a).collect();
            Batch {
                algorithm: a,
                summaries: mine.iter().map(|r| r.1).collect(),
                early_sync_fraction: mine.iter().map(|r| r.2).collect(),
            }
        })
        .collect())
}

fn find(batches: &[Batch], alg: Algorithm) -> Option<&Batch> {
    batches.iter().find(|b| b.algorithm == alg)
}

fn regret_ordering(batches: &[Batch]) -> (bool, String) {
    match (find(batches, Algorithm::FedGo), find(batches, Algorithm::DisLinUcb)) {
        (Some(f), Some(l)) => {
            let (a, b) = (f.mean_regret(), l.mean_regret());
            (a < b, format!("mean final regret fedgo {a:.2} vs dislinucb {b:.2}"))
        }
        _ => (false, "batch is missing fedgo or dislinucb".to_string()),
    }
}

pub fn regret_check(id: u8, title: &'static str, start: Instant, batches: &Result<Vec<Batch>>) -> CheckOutcome {
    let res = match batches {
        Ok(b) => Ok(regret_ordering(b)),
        Err(e) => Ok((false, format!("batch failed: {e}"))),
    };
    CheckOutcome::finish(id, title, 600, start, res)
}

/// `start` should be when the shared batch began, so the time budget
/// covers the runs as well as the comparison.
pub fn comm_check(start: Instant, batches: &Result<Vec<Batch>>) -> CheckOutcome {
    let res = match batches {
        Err(e) => Ok((false, format!("batch failed: {e}"))),
        Ok(b) => {
            let (Some(n), Some(f), Some(o)) = (
                find(b, Algorithm::NGo),
                find(b, Algorithm::FedGo),
                find(b, Algorithm::OneGo),
            ) else {
                return CheckOutcome::finish(
                    10,
                    "communication ordering",
                    600,
                    start,
                    Ok((false, "batch is missing n_go, fedgo or one_go".into())),
                );
            };
            let (cn, cf, co) = (n.mean_phase2_comm(), f.mean_phase2_comm(), o.mean_phase2_comm());
            let cap = (20 * 100 / 5) as u64;
            let early: Vec<f64> = f.early_sync_fraction.iter().copied().filter(|v| v.is_finite()).collect();
            let early_mean = if early.is_empty() { f64::NAN } else { mean(early.into_iter()) };
            Ok((
                cn == 0.0 && cn < cf && cf < co && f.max_syncs() <= cap,
                format!(
                    "phase-II comm n_go {cn:.0} < fedgo {cf:.0} < one_go {co:.0}; fedgo max syncs {} (cap {cap}); {:.0}% of syncs in first half",
                    f.max_syncs(),
                    100.0 * early_mean
                ),
            ))
        }
    };
    CheckOutcome::finish(10, "communication ordering", 600, start, res)
}

pub const PROPERTY_CHECKS: [fn() -> CheckOutcome; 8] = [
    check_gradient,
    check_linalg,
    check_aggregation,
    check_accounting,
    check_trigger,
    check_determinism,
    check_ucb,
    check_gld,
];

/// Runs every check. `quick` skips the full-size batches (9-11).
pub fn verify_suite(quick: bool, mut report: impl FnMut(&CheckOutcome)) -> Vec<CheckOutcome> {
    let mut out = Vec::new();
    for check in PROPERTY_CHECKS {
        let o = check();
        report(&o);
        out.push(o);
    }
    if quick {
        return out;
    }
    let start = Instant::now();
    let hartmann = benchmark_batch(SyntheticKind::Hartmann6, &Algorithm::ALL, BENCHMARK_SEEDS);
    let nine = regret_check(9, "hartmann6 regret ordering", start, &hartmann);
    report(&nine);
    out.push(nine);
    // Criterion 10 reuses the same runs; its clock includes their cost.
    let ten = comm_check(start, &hartmann);
    report(&ten);
    out.push(ten);
    let start = Instant::now();
    let cosine = benchmark_batch(SyntheticKind::Cosine8, &[Algorithm::FedGo, Algorithm::DisLinUcb], BENCHMARK_SEEDS);
    let eleven = regret_check(11, "cosine8 regret ordering", start, &cosine);
    report(&eleven);
    out.push(eleven);
    out
}
