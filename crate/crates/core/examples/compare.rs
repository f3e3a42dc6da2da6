//! Mean final regret and communication per algorithm over a few seeds.
//!
//! cargo run --release --example compare -- [hartmann6|cosine8] [seeds] [key=value ...]

use fedgo::federation::{run, Algorithm, Environment, Gamma, RunConfig};
use fedgo::objectives::SyntheticKind;
use rayon::prelude::*;

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let kind = match args.first().map(String::as_str) {
        Some("cosine8") => SyntheticKind::Cosine8,
        _ => SyntheticKind::Hartmann6,
    };
    let seeds: u64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(10);
    let mut base = RunConfig {
        environment: Environment::Synthetic { kind, arms: 50 },
        ..RunConfig::default()
    };
    for kv in args.iter().skip(2) {
        let (k, v) = kv.split_once('=').expect("key=value");
        let f: f64 = v.parse().expect("number");
        match k {
            "beta" => base.beta.scale = f,
            "beta_lin" => base.beta.linear = f,
            "gamma_scale" => base.gamma = Gamma::Auto { scale: f },
            "gamma" => base.gamma = Gamma::Fixed(f),
            "lambda" => base.lambda_scale = f,
            "tau1" => base.gld.step_size = f,
            "tau2" => base.gld.inverse_temperature = f,
            "n" => base.gld.iterations = f as usize,
            "t0" => base.phase1_len = Some(f as usize),
            "fbound" => base.beta.f_bound = Some(f),
            _ => panic!("unknown key {k}"),
        }
    }
    let algs: Vec<Algorithm> = match std::env::var("ALGS") {
        Ok(list) => list.split(',').map(|a| a.parse().expect("algorithm")).collect(),
        Err(_) => Algorithm::ALL.to_vec(),
    };
    for alg in algs {
        let results: Vec<_> = (0..seeds)
            .into_par_iter()
            .map(|seed| {
                let cfg = RunConfig { algorithm: alg, seed, ..base.clone() };
                run(&cfg).expect("run failed").summary
            })
            .collect();
        let n = results.len() as f64;
        let regret = results.iter().map(|s| s.final_regret).sum::<f64>() / n;
        let comm = results.iter().map(|s| s.phase2_comm as f64).sum::<f64>() / n;
        let syncs = results.iter().map(|s| s.sync_count as f64).sum::<f64>() / n;
        println!(
            "{:<10} regret {:>9.2}  phase2 comm {:>12.0}  syncs {:>7.1}  beta {:.3e} gamma {:.3e}",
            alg.name(), regret, comm, syncs, results[0].beta, results[0].gamma
        );
    }
}
