//! Phase-I regression oracle: distributed Gradient Langevin Dynamics on the
//! pooled squared loss.
//!
//! Each iteration the server broadcasts `w` (`d_w` scalars per client),
//! every client returns the gradient of its unnormalized local loss
//! (`d_w` scalars per client), and the server applies
//! `w ← w − τ₁·(1/T₀)Σᵢ∇L̂ᵢ(w) + √(2τ₁/τ₂)·z`.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_len, Error, Result};
use crate::federation::CommLedger;
use crate::models::{Model, ParamVector};

pub const DEFAULT_ITERATIONS: usize = 500;
pub const DEFAULT_STEP_SIZE: f64 = 1e-2;
pub const DEFAULT_INVERSE_TEMPERATURE: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GldConfig {
    pub iterations: usize,
    pub step_size: f64,
    /// `f64::INFINITY` turns the update into plain gradient descent.
    pub inverse_temperature: f64,
    pub seed: u64,
}

impl Default for GldConfig {
    fn default() -> Self {
        Self {
            iterations: DEFAULT_ITERATIONS,
            step_size: DEFAULT_STEP_SIZE,
            inverse_temperature: DEFAULT_INVERSE_TEMPERATURE,
            seed: 0,
        }
    }
}

impl GldConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::invalid(format!(
                "gld step size must be positive, got {}",
                self.step_size
            )));
        }
        if self.inverse_temperature.is_nan() || self.inverse_temperature <= 0.0 {
            return Err(Error::invalid(format!(
                "gld inverse temperature must be positive or inf, got {}",
                self.inverse_temperature
            )));
        }
        Ok(())
    }

    /// Standard deviation of the injected noise, `√(2τ₁/τ₂)`.
    pub fn noise_scale(&self) -> f64 {
        (2.0 * self.step_size / self.inverse_temperature).sqrt()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LocalDataset {
    points: Vec<(Vec<f64>, f64)>,
}

impl LocalDataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: Vec<f64>, y: f64) -> Result<()> {
        if let Some((first, _)) = self.points.first() {
            check_len("local dataset point", x.len(), first.len())?;
        }
        self.points.push((x, y));
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f64], f64)> {
        self.points.iter().map(|(x, y)| (x.as_slice(), *y))
    }
}

impl FromIterator<(Vec<f64>, f64)> for LocalDataset {
    fn from_iter<I: IntoIterator<Item = (Vec<f64>, f64)>>(iter: I) -> Self {
        Self {
            points: iter.into_iter().collect(),
        }
    }
}

/// `Σ_s (y_s − f_w(x_s))²`
pub fn local_sq_loss(data: &LocalDataset, model: &Model, w: &ParamVector) -> Result<f64> {
    data.iter()
        .map(|(x, y)| model.forward(w, x).map(|f| (y - f).powi(2)))
        .sum()
}

/// Gradient of the unnormalized local loss: `Σ_s 2(f_w(x_s) − y_s)·∇f_{x_s}(w)`.
pub fn local_sq_loss_grad(data: &LocalDataset, model: &Model, w: &ParamVector) -> Result<Vec<f64>> {
    let mut grad = vec![0.0; model.param_dim()];
    for (x, y) in data.iter() {
        let (f, g) = model.forward_grad(w, x)?;
        let scale = 2.0 * (f - y);
        for (acc, gi) in grad.iter_mut().zip(&g) {
            *acc += scale * gi;
        }
    }
    Ok(grad)
}

/// Pooled loss `(1/T₀)·Σᵢ L̂ᵢ(w)`.
pub fn pooled_loss(datasets: &[LocalDataset], model: &Model, w: &ParamVector) -> Result<f64> {
    let total: usize = datasets.iter().map(LocalDataset::len).sum();
    if total == 0 {
        return Err(Error::invalid("pooled loss over empty data"));
    }
    let mut sum = 0.0;
    for d in datasets {
        sum += local_sq_loss(d, model, w)?;
    }
    Ok(sum / total as f64)
}

/// `(1/T₀)·Σᵢ ∇L̂ᵢ(w)`, summed in client order.
pub fn pooled_grad(datasets: &[LocalDataset], model: &Model, w: &ParamVector) -> Result<Vec<f64>> {
    let total: usize = datasets.iter().map(LocalDataset::len).sum();
    if total == 0 {
        return Err(Error::invalid("pooled gradient over empty data"));
    }
    let mut grad = vec![0.0; model.param_dim()];
    for d in datasets {
        let local = local_sq_loss_grad(d, model, w)?;
        for (acc, g) in grad.iter_mut().zip(&local) {
            *acc += g;
        }
    }
    let inv = 1.0 / total as f64;
    grad.iter_mut().for_each(|g| *g *= inv);
    Ok(grad)
}

pub fn gld_step<R: Rng + ?Sized>(
    w: &ParamVector,
    grad: &[f64],
    cfg: &GldConfig,
    rng: &mut R,
) -> Result<ParamVector> {
    check_len("gld step gradient", grad.len(), w.len())?;
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::breakdown(format!(
            "non-finite gradient component {i}: {}",
            grad[i]
        )));
    }
    let noise = cfg.noise_scale();
    let mut next = w.clone();
    for (wi, gi) in next.values_mut().iter_mut().zip(grad) {
        *wi -= cfg.step_size * gi;
        if noise > 0.0 {
            let z: f64 = StandardNormal.sample(rng);
            *wi += noise * z;
        }
    }
    Ok(next)
}

/// Runs `cfg.iterations` rounds of the distributed update from `w = 0` and
/// charges `2·N·d_w` scalars per round to the Phase-I ledger.
pub fn distributed_gld(
    datasets: &[LocalDataset],
    model: &Model,
    cfg: &GldConfig,
    ledger: &mut CommLedger,
) -> Result<ParamVector> {
    distributed_gld_traced(datasets, model, cfg, ledger, |_, _| {})
}

/// As [`distributed_gld`], calling `observe(k, w⁽ᵏ⁾)` before every update
/// and once more with the final iterate.
pub fn distributed_gld_traced<F: FnMut(usize, &ParamVector)>(
    datasets: &[LocalDataset],
    model: &Model,
    cfg: &GldConfig,
    ledger: &mut CommLedger,
    mut observe: F,
) -> Result<ParamVector> {
    cfg.validate()?;
    if datasets.is_empty() {
        return Err(Error::invalid("distributed gld needs at least one client"));
    }
    if datasets.iter().all(LocalDataset::is_empty) {
        return Err(Error::invalid("distributed gld over empty data"));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut w = model.zeros();
    let per_round = 2 * datasets.len() as u64 * model.param_dim() as u64;
    for k in 0..cfg.iterations {
        observe(k, &w);
        let grad = pooled_grad(datasets, model, &w)?;
        w = gld_step(&w, &grad, cfg, &mut rng)
            .map_err(|e| Error::breakdown(format!("gld iteration {k}: {e}")))?;
        ledger.record_phase1(per_round);
    }
    observe(cfg.iterations, &w);
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::MlpLayout;

    fn noiseless(iterations: usize, step_size: f64) -> GldConfig {
        GldConfig {
            iterations,
            step_size,
            inverse_temperature: f64::INFINITY,
            seed: 0,
        }
    }

    fn random_data(n: usize, d: usize, seed: u64) -> LocalDataset {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
                (x, rng.random_range(-1.0..1.0))
            })
            .collect()
    }

    #[test]
    fn empty_and_perfect_fit_gradients() {
        let model = Model::Mlp(MlpLayout::new(3, 4).unwrap());
        let w = model.params((0..model.param_dim()).map(|i| 0.05 * i as f64).collect()).unwrap();
        let g = local_sq_loss_grad(&LocalDataset::new(), &model, &w).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));

        let mut data = LocalDataset::new();
        for x in [[0.1, 0.2, 0.3], [0.9, -0.4, 0.0]] {
            let y = model.forward(&w, &x).unwrap();
            data.push(x.to_vec(), y).unwrap();
        }
        let g = local_sq_loss_grad(&data, &model, &w).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn loss_grad_matches_finite_differences() {
        let model = Model::Mlp(MlpLayout::new(3, 5).unwrap());
        let data = random_data(12, 3, 2);
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let v: Vec<f64> = (0..model.param_dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w = model.params(v.clone()).unwrap();
        let g = local_sq_loss_grad(&data, &model, &w).unwrap();
        let h = 1e-5;
        for i in 0..v.len() {
            let mut p = v.clone();
            p[i] += h;
            let mut m = v.clone();
            m[i] -= h;
            let fd = (local_sq_loss(&data, &model, &model.params(p).unwrap()).unwrap()
                - local_sq_loss(&data, &model, &model.params(m).unwrap()).unwrap())
                / (2.0 * h);
            assert!((fd - g[i]).abs() / g[i].abs().max(1.0) < 1e-4);
        }
    }

    #[test]
    fn gld_step_noiseless() {
        let model = Model::Linear { dim: 1 };
        let w = model.params(vec![1.0]).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        let cfg = noiseless(1, 0.1);
        assert_eq!(gld_step(&w, &[0.0], &cfg, &mut rng).unwrap(), w);
        // quadratic ‖w‖²/2 has gradient w
        let next = gld_step(&w, w.values(), &cfg, &mut rng).unwrap();
        assert!((next.values()[0] - 0.9).abs() < 1e-15);
        assert!(matches!(
            gld_step(&w, &[f64::NAN], &cfg, &mut rng),
            Err(Error::NumericBreakdown(_))
        ));
    }

    #[test]
    fn gld_noise_scale() {
        let model = Model::Linear { dim: 1 };
        let w = model.zeros();
        let cfg = GldConfig {
            iterations: 1,
            step_size: 0.01,
            inverse_temperature: 4.0,
            seed: 0,
        };
        let mut rng = ChaCha20Rng::seed_from_u64(21);
        let n = 100_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| gld_step(&w, &[0.0], &cfg, &mut rng).unwrap().values()[0])
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let std = (draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        let expected = (2.0f64 * 0.01 / 4.0).sqrt();
        assert!((std - expected).abs() < 0.02 * expected);
    }

    #[test]
    fn ledger_counts_rounds() {
        let model = Model::Linear { dim: 5 };
        let datasets: Vec<LocalDataset> = (0..4).map(|i| random_data(3, 5, i)).collect();
        let mut ledger = CommLedger::new();
        distributed_gld(&datasets, &model, &noiseless(10, 0.01), &mut ledger).unwrap();
        assert_eq!(ledger.phase1_scalars, 400);
        assert_eq!(ledger.phase2_scalars(), 0);
    }

    #[test]
    fn zero_iterations_return_origin() {
        let model = Model::Mlp(MlpLayout::new(2, 3).unwrap());
        let datasets = vec![random_data(3, 2, 0)];
        let mut ledger = CommLedger::new();
        let w = distributed_gld(&datasets, &model, &noiseless(0, 0.1), &mut ledger).unwrap();
        assert_eq!(w, model.zeros());
        assert_eq!(ledger.total(), 0);
    }

    #[test]
    fn empty_data_rejected() {
        let model = Model::Linear { dim: 2 };
        let mut ledger = CommLedger::new();
        let r = distributed_gld(
            &[LocalDataset::new(), LocalDataset::new()],
            &model,
            &noiseless(3, 0.1),
            &mut ledger,
        );
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
        assert!(distributed_gld(&[], &model, &noiseless(3, 0.1), &mut ledger).is_err());
    }

    #[test]
    fn splitting_data_keeps_gradient() {
        let model = Model::Mlp(MlpLayout::new(3, 4).unwrap());
        let pooled = random_data(30, 3, 5);
        let points: Vec<(Vec<f64>, f64)> = pooled.iter().map(|(x, y)| (x.to_vec(), y)).collect();
        let split: Vec<LocalDataset> = (0..4)
            .map(|c| points.iter().skip(c).step_by(4).cloned().collect())
            .collect();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let w = model
            .params((0..model.param_dim()).map(|_| rng.random_range(-1.0..1.0)).collect())
            .unwrap();
        let a = pooled_grad(&[pooled], &model, &w).unwrap();
        let b = pooled_grad(&split, &model, &w).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).abs() < 1e-10);
        }
    }

    #[test]
    fn noiseless_descent_is_monotone_on_quadratic() {
        let model = Model::Linear { dim: 3 };
        let datasets: Vec<LocalDataset> = (0..3).map(|i| random_data(10, 3, 10 + i)).collect();
        let mut losses = Vec::new();
        let mut ledger = CommLedger::new();
        distributed_gld_traced(&datasets, &model, &noiseless(200, 0.05), &mut ledger, |_, w| {
            losses.push(pooled_loss(&datasets, &model, w).unwrap());
        })
        .unwrap();
        for pair in losses.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-15);
        }
    }
}
