use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::config::ExperimentSpec;
use super::svg::{line_chart, Series};
use crate::error::{Error, Result};
use crate::federation::{run, Algorithm, RunConfig, Summary};

pub const THREADS_ENV: &str = "FEDGO_THREADS";
pub const SUMMARY_HEADER: &str = "algorithm,t,runs,cum_regret_mean,cum_regret_std,cum_comm_mean,cum_comm_std";

/// Outcome of one (algorithm, seed) job.
#[derive(Debug, Clone)]
pub struct RunStatus {
    pub algorithm: Algorithm,
    pub seed: u64,
    pub csv_path: PathBuf,
    pub result: std::result::Result<Summary, String>,
}

#[derive(Debug, Clone)]
pub struct BatchReport {
    pub runs: Vec<RunStatus>,
    pub files: Vec<PathBuf>,
}

impl BatchReport {
    pub fn failures(&self) -> impl Iterator<Item = &RunStatus> {
        self.runs.iter().filter(|r| r.result.is_err())
    }

    pub fn exit_code(&self) -> i32 {
        i32::from(self.failures().next().is_some())
    }
}

/// Worker cap from `FEDGO_THREADS`; unset or empty means "let rayon decide".
pub fn threads_from_env() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) if v.trim().is_empty() => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(Some(n)),
            _ => Err(Error::Config(format!("{THREADS_ENV}: expected a positive integer, got `{v}`"))),
        },
    }
}

pub fn trajectory_file_name(alg: Algorithm, seed: u64) -> String {
    format!("{}_seed{}.csv", alg.name(), seed)
}

// (cum_regret, cum_comm) per t
type Curve = Vec<(f64, u64)>;

struct Finished {
    status: RunStatus,
    // present only for successful runs
    curve: Option<Curve>,
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn execute(alg: Algorithm, cfg: &RunConfig, seed: u64, out_dir: &Path) -> Finished {
    let csv_path = out_dir.join(trajectory_file_name(alg, seed));
    let cfg = RunConfig { seed, ..cfg.clone() };
    let outcome = run(&cfg).and_then(|traj| {
        write_file(&csv_path, &traj.to_csv())?;
        Ok(traj)
    });
    match outcome {
        Ok(traj) => Finished {
            curve: Some(traj.records.iter().map(|r| (r.cum_regret, r.cum_comm)).collect()),
            status: RunStatus {
                algorithm: alg,
                seed,
                csv_path,
                result: Ok(traj.summary),
            },
        },
        Err(e) => Finished {
            curve: None,
            status: RunStatus {
                algorithm: alg,
                seed,
                csv_path,
                result: Err(e.to_string()),
            },
        },
    }
}

/// Runs every (algorithm, seed) job, writes per-run CSVs, then the summary
/// files. A failing run is recorded and the rest continue; only an
/// unusable output directory aborts the batch.
pub fn run_experiment(spec: &ExperimentSpec, threads: Option<usize>) -> Result<BatchReport> {
    spec.validate()?;
    fs::create_dir_all(&spec.out_dir).map_err(|source| Error::Io {
        path: spec.out_dir.clone(),
        source,
    })?;

    let jobs: Vec<(Algorithm, &RunConfig, u64)> = spec
        .jobs
        .iter()
        .flat_map(|(alg, cfg)| spec.seeds.iter().map(move |&s| (*alg, cfg, s)))
        .collect();
    let work = || -> Vec<Finished> {
        jobs.par_iter()
            .map(|&(alg, cfg, seed)| execute(alg, cfg, seed, &spec.out_dir))
            .collect()
    };
    let finished = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("{THREADS_ENV}: {e}")))?
            .install(work),
        None => work(),
    };

    let mut files: Vec<PathBuf> = finished
        .iter()
        .filter(|f| f.status.result.is_ok())
        .map(|f| f.status.csv_path.clone())
        .collect();

    let groups: Vec<(Algorithm, Vec<&Curve>)> = spec
        .jobs
        .iter()
        .map(|(alg, _)| {
            let curves = finished
                .iter()
                .filter(|f| f.status.algorithm == *alg)
                .filter_map(|f| f.curve.as_ref())
                .collect();
            (*alg, curves)
        })
        .collect();
    let stats: Vec<(Algorithm, Vec<PointStats>)> =
        groups.iter().map(|(alg, curves)| (*alg, curve_stats(curves))).collect();

    let summary_path = spec.out_dir.join("summary.csv");
    write_file(&summary_path, &summary_csv(&stats))?;
    files.push(summary_path);

    let runs: Vec<RunStatus> = finished.into_iter().map(|f| f.status).collect();
    let runs_path = spec.out_dir.join("runs.csv");
    write_file(&runs_path, &runs_csv(&runs))?;
    files.push(runs_path);

    if spec.emit_svg {
        for (name, label, pick) in [
            ("regret.svg", "cumulative regret", 0usize),
            ("comm.svg", "cumulative communication (scalars)", 1),
        ] {
            let series: Vec<Series> = stats
                .iter()
                .filter(|(_, s)| !s.is_empty())
                .map(|(alg, s)| Series {
                    name: alg.name().to_string(),
                    mean: s.iter().map(|p| p.mean[pick]).collect(),
                    std: s.iter().map(|p| p.std[pick]).collect(),
                })
                .collect();
            let path = spec.out_dir.join(name);
            write_file(&path, &line_chart(label, &series))?;
            files.push(path);
        }
    }

    Ok(BatchReport { runs, files })
}

/// Mean and sample standard deviation of `[cum_regret, cum_comm]` at one t.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointStats {
    pub runs: usize,
    pub mean: [f64; 2],
    pub std: [f64; 2],
}

fn curve_stats(curves: &[&Curve]) -> Vec<PointStats> {
    let len = curves.iter().map(|c| c.len()).min().unwrap_or(0);
    (0..len)
        .map(|t| {
            let regret: Vec<f64> = curves.iter().map(|c| c[t].0).collect();
            let comm: Vec<f64> = curves.iter().map(|c| c[t].1 as f64).collect();
            let (rm, rs) = mean_std(&regret);
            let (cm, cs) = mean_std(&comm);
            PointStats {
                runs: curves.len(),
                mean: [rm, cm],
                std: [rs, cs],
            }
        })
        .collect()
}

/// Sample standard deviation (n − 1); zero for a single value.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn summary_csv(stats: &[(Algorithm, Vec<PointStats>)]) -> String {
    let mut out = String::from(SUMMARY_HEADER);
    out.push('\n');
    for (alg, points) in stats {
        for (i, p) in points.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                alg.name(),
                i + 1,
                p.runs,
                p.mean[0],
                p.std[0],
                p.mean[1],
                p.std[1]
            );
        }
    }
    out
}

fn runs_csv(runs: &[RunStatus]) -> String {
    let mut out = String::from(
        "algorithm,seed,status,final_regret,final_comm,phase1_comm,phase2_comm,sync_count,param_dim,beta,gamma,lambda,phase1_len,error\n",
    );
    for r in runs {
        match &r.result {
            Ok(s) => {
                let _ = writeln!(
                    out,
                    "{},{},ok,{},{},{},{},{},{},{},{},{},{},",
                    r.algorithm.name(),
                    r.seed,
                    s.final_regret,
                    s.final_comm,
                    s.phase1_comm,
                    s.phase2_comm,
                    s.sync_count,
                    s.param_dim,
                    s.beta,
                    s.gamma,
                    s.lambda,
                    s.phase1_len
                );
            }
            Err(e) => {
                let msg = e.replace(['"', '\n'], " ");
                let _ = writeln!(out, "{},{},failed,,,,,,,,,,,\"{}\"", r.algorithm.name(), r.seed, msg);
            }
        }
    }
    out
}
