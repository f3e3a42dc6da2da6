//! TOML experiment files.
//!
//! ```toml
//! algorithms = ["fedgo", "dislinucb"]
//! seeds = "0..9"
//!
//! [environment]
//! kind = "hartmann6"
//!
//! [run]
//! clients = 20
//!
//! [overrides.dislinucb.run]
//! beta_linear = 0.5
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::federation::{Algorithm, Environment, Gamma, RunConfig};
use crate::objectives::SyntheticKind;

pub const DEFAULT_OUT_DIR: &str = "fedgo-out";
pub const DEFAULT_SEEDS: std::ops::RangeInclusive<u64> = 0..=9;

/// A batch of runs: every algorithm job is executed once per seed.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    /// Fully resolved configuration per algorithm; `seed` is overwritten per run.
    pub jobs: Vec<(Algorithm, RunConfig)>,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    pub emit_svg: bool,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.jobs.is_empty() {
            return Err(Error::Config("algorithms: list must not be empty".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds: list must not be empty".into()));
        }
        for (alg, cfg) in &self.jobs {
            cfg.validate()
                .map_err(|e| Error::Config(format!("{alg}: {}", strip_prefix(&e))))?;
        }
        Ok(())
    }
}

fn strip_prefix(e: &Error) -> String {
    match e {
        Error::Config(m) => m.clone(),
        other => other.to_string(),
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    algorithms: Option<Vec<String>>,
    seeds: Option<RawSeeds>,
    out: Option<PathBuf>,
    svg: Option<bool>,
    environment: Option<RawEnvironment>,
    run: Option<RawRun>,
    gld: Option<RawGld>,
    overrides: Option<BTreeMap<String, RawOverride>>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawSeeds {
    List(Vec<u64>),
    Text(String),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEnvironment {
    kind: Option<String>,
    arms: Option<usize>,
    path: Option<PathBuf>,
    clusters: Option<usize>,
    noise_sigma: Option<f64>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    clients: Option<usize>,
    rounds: Option<usize>,
    phase1_len: Option<usize>,
    hidden: Option<usize>,
    lambda_scale: Option<f64>,
    gamma: Option<RawNumberOr>,
    gamma_scale: Option<f64>,
    beta_scale: Option<f64>,
    beta_mu: Option<f64>,
    beta_sigma: Option<f64>,
    beta_linear: Option<f64>,
    f_bound: Option<RawNumberOr>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGld {
    iterations: Option<usize>,
    step_size: Option<f64>,
    inverse_temperature: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOverride {
    run: Option<RawRun>,
    gld: Option<RawGld>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum RawNumberOr {
    Number(f64),
    Word(String),
}

/// Reads and resolves an experiment file. Relative dataset paths are taken
/// relative to the file's directory.
pub fn parse_config(path: &Path) -> Result<ExperimentSpec> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config_str(&text, base).map_err(|e| match e {
        Error::Parse { line, message, .. } => Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        },
        other => other,
    })
}

/// Parses config text. Syntax errors carry a 1-based line number.
pub fn parse_config_str(text: &str, base_dir: &Path) -> Result<ExperimentSpec> {
    let raw: RawSpec = toml::from_str(text).map_err(|e| Error::Parse {
        path: PathBuf::from("<config>"),
        line: e.span().map_or(1, |s| line_of(text, s.start)),
        message: e.message().to_string(),
    })?;
    resolve(raw, base_dir)
}

fn line_of(text: &str, offset: usize) -> usize {
    text.as_bytes()[..offset.min(text.len())]
        .iter()
        .filter(|&&b| b == b'\n')
        .count()
        + 1
}

fn resolve(raw: RawSpec, base_dir: &Path) -> Result<ExperimentSpec> {
    let algorithms: Vec<Algorithm> = match &raw.algorithms {
        None => Algorithm::ALL.to_vec(),
        Some(names) => names.iter().map(|n| n.parse()).collect::<Result<_>>()?,
    };

    let mut base = RunConfig::default();
    if let Some(env) = &raw.environment {
        apply_environment(&mut base, env, base_dir)?;
    }
    if let Some(run) = &raw.run {
        apply_run(&mut base, run)?;
    }
    if let Some(gld) = &raw.gld {
        apply_gld(&mut base, gld);
    }

    let mut overrides = raw.overrides.unwrap_or_default();
    for name in overrides.keys() {
        let alg: Algorithm = name
            .parse()
            .map_err(|_| Error::Config(format!("overrides.{name}: unknown algorithm")))?;
        if !algorithms.contains(&alg) {
            return Err(Error::Config(format!("overrides.{name}: algorithm is not in `algorithms`")));
        }
    }

    let mut jobs = Vec::with_capacity(algorithms.len());
    for alg in algorithms {
        let mut cfg = RunConfig {
            algorithm: alg,
            ..base.clone()
        };
        if let Some(o) = overrides.remove(alg.name()) {
            if let Some(run) = &o.run {
                apply_run(&mut cfg, run)?;
            }
            if let Some(gld) = &o.gld {
                apply_gld(&mut cfg, gld);
            }
        }
        jobs.push((alg, cfg));
    }

    let seeds = match raw.seeds {
        None => DEFAULT_SEEDS.collect(),
        Some(RawSeeds::List(v)) => v,
        Some(RawSeeds::Text(s)) => parse_seeds(&s)?,
    };

    let spec = ExperimentSpec {
        jobs,
        seeds,
        out_dir: raw.out.unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR)),
        emit_svg: raw.svg.unwrap_or(false),
    };
    spec.validate()?;
    Ok(spec)
}

fn apply_environment(cfg: &mut RunConfig, env: &RawEnvironment, base_dir: &Path) -> Result<()> {
    let kind = env.kind.as_deref().unwrap_or("hartmann6");
    cfg.environment = match kind {
        "hartmann6" | "cosine8" => {
            if env.path.is_some() || env.clusters.is_some() {
                return Err(Error::Config(format!(
                    "environment: `path`/`clusters` only apply to kind = \"csv\", not {kind}"
                )));
            }
            let kind = if kind == "hartmann6" {
                SyntheticKind::Hartmann6
            } else {
                SyntheticKind::Cosine8
            };
            Environment::Synthetic {
                kind,
                arms: env.arms.unwrap_or(50),
            }
        }
        "csv" => {
            if env.arms.is_some() {
                return Err(Error::Config("environment.arms: use `clusters` for csv data".into()));
            }
            let path = env
                .path
                .as_ref()
                .ok_or_else(|| Error::Config("environment.path: required for kind = \"csv\"".into()))?;
            Environment::Csv {
                path: base_dir.join(path),
                clusters: env.clusters.unwrap_or(20),
            }
        }
        other => {
            return Err(Error::Config(format!(
                "environment.kind: unknown `{other}` (expected hartmann6, cosine8 or csv)"
            )))
        }
    };
    if let Some(s) = env.noise_sigma {
        cfg.noise_sigma = s;
    }
    Ok(())
}

fn apply_run(cfg: &mut RunConfig, run: &RawRun) -> Result<()> {
    macro_rules! set {
        ($field:ident => $target:expr) => {
            if let Some(v) = run.$field.clone() {
                $target = v;
            }
        };
    }
    set!(clients => cfg.clients);
    set!(rounds => cfg.rounds);
    set!(hidden => cfg.hidden);
    set!(lambda_scale => cfg.lambda_scale);
    set!(beta_scale => cfg.beta.scale);
    set!(beta_mu => cfg.beta.mu);
    set!(beta_linear => cfg.beta.linear);
    if let Some(t0) = run.phase1_len {
        cfg.phase1_len = Some(t0);
    }
    if let Some(s) = run.beta_sigma {
        cfg.beta.sigma = Some(s);
    }
    match &run.gamma {
        None => {}
        Some(RawNumberOr::Number(g)) => cfg.gamma = Gamma::Fixed(*g),
        Some(RawNumberOr::Word(w)) if w == "auto" => {
            if !matches!(cfg.gamma, Gamma::Auto { .. }) {
                cfg.gamma = Gamma::Auto {
                    scale: crate::federation::DEFAULT_GAMMA_SCALE,
                };
            }
        }
        Some(RawNumberOr::Word(w)) => {
            return Err(Error::Config(format!("run.gamma: expected a number or \"auto\", got \"{w}\"")))
        }
    }
    if let Some(scale) = run.gamma_scale {
        if matches!(run.gamma, Some(RawNumberOr::Number(_))) {
            return Err(Error::Config("run.gamma_scale: cannot be combined with a fixed gamma".into()));
        }
        cfg.gamma = Gamma::Auto { scale };
    }
    match &run.f_bound {
        None => {}
        Some(RawNumberOr::Number(f)) => cfg.beta.f_bound = Some(*f),
        Some(RawNumberOr::Word(w)) if w == "observed" => cfg.beta.f_bound = None,
        Some(RawNumberOr::Word(w)) => {
            return Err(Error::Config(format!(
                "run.f_bound: expected a number or \"observed\", got \"{w}\""
            )))
        }
    }
    Ok(())
}

fn apply_gld(cfg: &mut RunConfig, gld: &RawGld) {
    if let Some(n) = gld.iterations {
        cfg.gld.iterations = n;
    }
    if let Some(t) = gld.step_size {
        cfg.gld.step_size = t;
    }
    if let Some(t) = gld.inverse_temperature {
        cfg.gld.inverse_temperature = t;
    }
}

/// Accepts `a..b` (inclusive), `a..=b`, a single integer or a comma list.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let bad = || Error::Config(format!("seeds: cannot parse `{text}` (try 0..9 or 1,2,5)"));
    let num = |s: &str| s.trim().parse::<u64>().map_err(|_| bad());
    let text_t = text.trim();
    if let Some((lo, hi)) = text_t.split_once("..") {
        let hi = hi.strip_prefix('=').unwrap_or(hi);
        let (lo, hi) = (num(lo)?, num(hi)?);
        if lo > hi {
            return Err(bad());
        }
        return Ok((lo..=hi).collect());
    }
    text_t.split(',').map(num).collect()
}
