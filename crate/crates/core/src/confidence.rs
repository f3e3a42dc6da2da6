//! Per-client confidence statistics anchored at the Phase-I model `ŵ₀`.
//!
//! Every gradient that enters `Σ` and `b` is evaluated at the same `ŵ₀`, so
//! statistics collected by different clients add up exactly. The ball
//! center is `ŵ = Σ⁻¹(b + λŵ₀)`.

use crate::error::{check_len, Error, Result};
use crate::linalg::SpdMatrix;
use crate::models::{Model, ParamVector};
use crate::objectives::ArmSet;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfState {
    model: Model,
    w0: ParamVector,
    lambda: f64,
    sigma: SpdMatrix,
    b: Vec<f64>,
    delta_sigma: Vec<f64>,
    delta_b: Vec<f64>,
    w_hat: Vec<f64>,
    logdet_at_last_sync: f64,
    n_local_since_sync: usize,
}

impl ConfState {
    /// `Σ = λI`, `b = 0`, `ŵ = ŵ₀`.
    pub fn new(model: Model, w0: ParamVector, lambda: f64) -> Result<Self> {
        if w0.model() != model {
            return Err(Error::invalid("anchor parameters do not match the model"));
        }
        let d = model.param_dim();
        let sigma = SpdMatrix::identity(d, lambda)?;
        Ok(Self {
            model,
            lambda,
            logdet_at_last_sync: sigma.logdet(),
            sigma,
            b: vec![0.0; d],
            delta_sigma: vec![0.0; d * d],
            delta_b: vec![0.0; d],
            w_hat: w0.values().to_vec(),
            w0,
            n_local_since_sync: 0,
        })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn w0(&self) -> &ParamVector {
        &self.w0
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn sigma(&self) -> &SpdMatrix {
        &self.sigma
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    /// Dense row-major `ΔΣ`.
    pub fn delta_sigma(&self) -> &[f64] {
        &self.delta_sigma
    }

    pub fn delta_b(&self) -> &[f64] {
        &self.delta_b
    }

    pub fn w_hat(&self) -> &[f64] {
        &self.w_hat
    }

    pub fn logdet_at_last_sync(&self) -> f64 {
        self.logdet_at_last_sync
    }

    pub fn n_local_since_sync(&self) -> usize {
        self.n_local_since_sync
    }

    /// Absorbs one observation `(x, y)`.
    pub fn absorb(&mut self, x: &[f64], y: f64) -> Result<()> {
        let (f0, g) = self.model.forward_grad(&self.w0, x)?;
        self.absorb_features(f0, &g, y)
    }

    /// Absorbs an observation given `f_x(ŵ₀)` and `g = ∇f_x(ŵ₀)`.
    pub fn absorb_features(&mut self, f0: f64, g: &[f64], y: f64) -> Result<()> {
        let d = self.dim();
        check_len("absorb gradient", g.len(), d)?;
        self.sigma.rank1_update_in_place(g)?;
        let anchored: f64 = g.iter().zip(self.w0.values()).map(|(a, b)| a * b).sum();
        let coef = anchored + y - f0;
        for i in 0..d {
            let inc = g[i] * coef;
            self.b[i] += inc;
            self.delta_b[i] += inc;
            let gi = g[i];
            if gi != 0.0 {
                let row = &mut self.delta_sigma[i * d..(i + 1) * d];
                for (r, gj) in row.iter_mut().zip(g) {
                    *r += gi * gj;
                }
            }
        }
        self.n_local_since_sync += 1;
        self.refresh_center()
    }

    fn refresh_center(&mut self) -> Result<()> {
        let rhs: Vec<f64> = self
            .b
            .iter()
            .zip(self.w0.values())
            .map(|(b, w)| b + self.lambda * w)
            .collect();
        self.w_hat = self.sigma.solve(&rhs)?;
        if let Some(i) = self.w_hat.iter().position(|v| !v.is_finite()) {
            return Err(Error::breakdown(format!("ball center component {i} is not finite")));
        }
        Ok(())
    }

    /// `n_local_since_sync · ln(det Σ / det Σ_last)`. `Σ − ΔΣ` is exactly the
    /// matrix at the last sync, so its log-determinant is cached there.
    pub fn trigger_value(&self) -> f64 {
        self.n_local_since_sync as f64 * (self.sigma.logdet() - self.logdet_at_last_sync)
    }

    /// Replaces the local statistics with the global ones and clears deltas.
    pub fn install_global(&mut self, sigma: SpdMatrix, b: Vec<f64>) -> Result<()> {
        check_len("global sigma", sigma.dim(), self.dim())?;
        check_len("global b", b.len(), self.dim())?;
        self.logdet_at_last_sync = sigma.logdet();
        self.sigma = sigma;
        self.b = b;
        self.delta_sigma.iter_mut().for_each(|v| *v = 0.0);
        self.delta_b.iter_mut().for_each(|v| *v = 0.0);
        self.n_local_since_sync = 0;
        self.refresh_center()
    }

    /// Optimistic value from precomputed anchor features:
    /// `f₀ + gᵀ(ŵ − ŵ₀) + √β·‖g‖_{Σ⁻¹}`.
    pub fn ucb_from_features(&self, beta: f64, f0: f64, g: &[f64]) -> Result<f64> {
        check_len("ucb gradient", g.len(), self.dim())?;
        let shift: f64 = g
            .iter()
            .zip(self.w_hat.iter().zip(self.w0.values()))
            .map(|(gi, (wh, w0))| gi * (wh - w0))
            .sum();
        let width = if beta > 0.0 {
            beta.sqrt() * self.sigma.quad_form_inv(g)?.sqrt()
        } else {
            0.0
        };
        Ok(f0 + shift + width)
    }

    /// Exact maximum of the first-order model of `f_x` around `ŵ₀` over the
    /// ellipsoid `‖w − ŵ‖²_Σ ≤ β`.
    pub fn ucb_score(&self, beta: f64, x: &[f64]) -> Result<f64> {
        if beta.is_nan() || beta < 0.0 {
            return Err(Error::invalid(format!("beta must be >= 0, got {beta}")));
        }
        let (f0, g) = self.model.forward_grad(&self.w0, x)?;
        self.ucb_from_features(beta, f0, &g)
    }

    pub fn select_arm(&self, beta: f64, arms: &ArmSet) -> Result<usize> {
        let features = AnchoredArms::new(&self.model, &self.w0, arms)?;
        self.select_arm_anchored(beta, &features)
    }

    /// Argmax of the UCB over all arms; ties go to the lowest index.
    pub fn select_arm_anchored(&self, beta: f64, features: &AnchoredArms) -> Result<usize> {
        let mut best = (0, f64::NEG_INFINITY);
        for k in 0..features.len() {
            let score = self.ucb_from_features(beta, features.values[k], &features.grads[k])?;
            if score > best.1 {
                best = (k, score);
            }
        }
        if !best.1.is_finite() {
            return Err(Error::breakdown("no arm has a finite ucb score"));
        }
        Ok(best.0)
    }
}

/// `f_x(ŵ₀)` and `∇f_x(ŵ₀)` for every arm. The anchor never moves during
/// Phase II, so these are computed once per run.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchoredArms {
    values: Vec<f64>,
    grads: Vec<Vec<f64>>,
}

impl AnchoredArms {
    pub fn new(model: &Model, w0: &ParamVector, arms: &ArmSet) -> Result<Self> {
        let mut values = Vec::with_capacity(arms.len());
        let mut grads = Vec::with_capacity(arms.len());
        for x in arms.arms() {
            let (f, g) = model.forward_grad(w0, x)?;
            values.push(f);
            grads.push(g);
        }
        Ok(Self { values, grads })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, k: usize) -> f64 {
        self.values[k]
    }

    pub fn grad(&self, k: usize) -> &[f64] {
        &self.grads[k]
    }
}

/// Confidence radius `c_β·(d·σ² + d·F²/μ + d³·F⁴/μ²)`, constant in time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaSchedule {
    pub c_beta: f64,
    pub dim: usize,
    pub sigma_noise: f64,
    pub f_bound: f64,
    pub mu: f64,
}

impl BetaSchedule {
    pub fn value(&self) -> f64 {
        let d = self.dim as f64;
        let f2 = self.f_bound * self.f_bound;
        self.c_beta
            * (d * self.sigma_noise * self.sigma_noise + d * f2 / self.mu + d.powi(3) * f2 * f2 / (self.mu * self.mu))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::MlpLayout;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense_solve(d: usize, m: &[f64], rhs: &[f64]) -> Vec<f64> {
        let mut a = m.to_vec();
        let mut x = rhs.to_vec();
        for c in 0..d {
            let p = (c..d).max_by(|&i, &j| a[i * d + c].abs().total_cmp(&a[j * d + c].abs())).unwrap();
            for k in 0..d {
                a.swap(c * d + k, p * d + k);
            }
            x.swap(c, p);
            for r in c + 1..d {
                let f = a[r * d + c] / a[c * d + c];
                for k in c..d {
                    a[r * d + k] -= f * a[c * d + k];
                }
                x[r] -= f * x[c];
            }
        }
        for r in (0..d).rev() {
            let mut s = x[r];
            for k in r + 1..d {
                s -= a[r * d + k] * x[k];
            }
            x[r] = s / a[r * d + r];
        }
        x
    }

    fn random_params(model: &Model, rng: &mut ChaCha8Rng) -> ParamVector {
        model
            .params((0..model.param_dim()).map(|_| rng.random_range(-1.0..1.0)).collect())
            .unwrap()
    }

    #[test]
    fn fresh_state() {
        let model = Model::Mlp(MlpLayout::new(3, 4).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let w0 = random_params(&model, &mut rng);
        let s = ConfState::new(model, w0.clone(), 2.5).unwrap();
        assert_eq!(s.w_hat(), w0.values());
        assert!((s.logdet_at_last_sync() - 21.0 * 2.5f64.ln()).abs() < 1e-12);
        assert_eq!(s.n_local_since_sync(), 0);
        assert_eq!(s.trigger_value(), 0.0);
        assert!(ConfState::new(model, w0, 0.0).is_err());
    }

    #[test]
    fn zero_gradient_only_counts() {
        let model = Model::Linear { dim: 3 };
        let mut s = ConfState::new(model, model.zeros(), 1.0).unwrap();
        let before = s.clone();
        s.absorb(&[0.0, 0.0, 0.0], 5.0).unwrap();
        assert_eq!(s.sigma(), before.sigma());
        assert_eq!(s.b(), before.b());
        assert_eq!(s.n_local_since_sync(), 1);
        assert_eq!(s.trigger_value(), 0.0);
    }

    #[test]
    fn ridge_by_hand() {
        let model = Model::Linear { dim: 3 };
        let mut s = ConfState::new(model, model.zeros(), 1.0).unwrap();
        s.absorb(&[1.0, 0.0, 0.0], 1.0).unwrap();
        let expected = [2.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        for (a, b) in s.sigma().to_dense().iter().zip(expected) {
            assert!((a - b).abs() < 1e-14);
        }
        assert_eq!(s.b(), &[1.0, 0.0, 0.0]);
        for (a, b) in s.w_hat().iter().zip([0.5, 0.0, 0.0]) {
            assert!((a - b).abs() < 1e-15);
        }
        let g2 = 1.0f64;
        assert!((s.trigger_value() - (1.0 + g2).ln()).abs() < 1e-15);
    }

    #[test]
    fn center_matches_dense_recomputation() {
        let model = Model::Mlp(MlpLayout::new(3, 4).unwrap());
        let d = model.param_dim();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let w0 = random_params(&model, &mut rng);
        let lambda = 0.7;
        let mut s = ConfState::new(model, w0.clone(), lambda).unwrap();
        let mut dense = vec![0.0; d * d];
        (0..d).for_each(|i| dense[i * d + i] = lambda);
        let mut b = vec![0.0; d];
        for _ in 0..10 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y = rng.random_range(-2.0..2.0);
            s.absorb(&x, y).unwrap();
            let g = model.grad(&w0, &x).unwrap();
            let f0 = model.forward(&w0, &x).unwrap();
            let c: f64 = g.iter().zip(w0.values()).map(|(a, b)| a * b).sum::<f64>() + y - f0;
            for i in 0..d {
                b[i] += g[i] * c;
                for j in 0..d {
                    dense[i * d + j] += g[i] * g[j];
                }
            }
            let rhs: Vec<f64> = b.iter().zip(w0.values()).map(|(b, w)| b + lambda * w).collect();
            let expected = dense_solve(d, &dense, &rhs);
            for (a, e) in s.w_hat().iter().zip(&expected) {
                assert!((a - e).abs() < 1e-8);
            }
            let resid = s.sigma().multiply(s.w_hat()).unwrap();
            let norm_b = s.b().iter().map(|v| v * v).sum::<f64>().sqrt();
            let r: f64 = resid.iter().zip(&rhs).map(|(a, e)| (a - e).powi(2)).sum::<f64>().sqrt();
            assert!(r <= 1e-8 * (1.0 + norm_b));
            // ΔΣ tracks Σ − λI before any sync
            for i in 0..d {
                for j in 0..d {
                    let lam = if i == j { lambda } else { 0.0 };
                    assert!((s.delta_sigma()[i * d + j] - (dense[i * d + j] - lam)).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn trigger_matches_dense_determinants() {
        let model = Model::Linear { dim: 4 };
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut s = ConfState::new(model, model.zeros(), 1.5).unwrap();
        let start = SpdMatrix::from_dense(4, &s.sigma().to_dense()).unwrap().logdet();
        for n in 1..=6 {
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            s.absorb(&x, 0.3).unwrap();
            let now = SpdMatrix::from_dense(4, &s.sigma().to_dense()).unwrap().logdet();
            assert!((s.trigger_value() - n as f64 * (now - start)).abs() < 1e-7);
        }
    }

    #[test]
    fn beta_formula() {
        let sched = BetaSchedule {
            c_beta: 1.0,
            dim: 1,
            sigma_noise: 1.0,
            f_bound: 1.0,
            mu: 1.0,
        };
        assert_eq!(sched.value(), 3.0);
        assert_eq!(BetaSchedule { c_beta: 0.0, ..sched }.value(), 0.0);
    }

    #[test]
    fn ucb_fresh_state_and_scaling() {
        let model = Model::Mlp(MlpLayout::new(2, 3).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w0 = random_params(&model, &mut rng);
        let lambda = 3.0;
        let s = ConfState::new(model, w0.clone(), lambda).unwrap();
        let x = [0.4, -0.7];
        let f0 = model.forward(&w0, &x).unwrap();
        let g = model.grad(&w0, &x).unwrap();
        let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert_eq!(s.ucb_score(0.0, &x).unwrap(), f0);
        let beta = 2.0;
        assert!((s.ucb_score(beta, &x).unwrap() - (f0 + beta.sqrt() * gnorm / lambda.sqrt())).abs() < 1e-12);
        let bonus1 = s.ucb_score(beta, &x).unwrap() - f0;
        let bonus4 = s.ucb_score(4.0 * beta, &x).unwrap() - f0;
        assert!((bonus4 - 2.0 * bonus1).abs() < 1e-12);
        assert!(s.ucb_score(-1.0, &x).is_err());
    }

    #[test]
    fn ucb_monotone_in_beta() {
        let model = Model::Linear { dim: 3 };
        let mut s = ConfState::new(model, model.zeros(), 1.0).unwrap();
        s.absorb(&[1.0, 0.5, -0.2], 0.4).unwrap();
        let x = [0.3, 0.3, 0.9];
        let mut prev = f64::NEG_INFINITY;
        for beta in [0.0, 0.1, 1.0, 2.0, 10.0, 100.0] {
            let v = s.ucb_score(beta, &x).unwrap();
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn select_arm_tie_break_and_scan() {
        let model = Model::Linear { dim: 2 };
        let mut s = ConfState::new(model, model.zeros(), 1.0).unwrap();
        let single = ArmSet::new(vec![vec![0.2, 0.1]], vec![0.0], 0.0).unwrap();
        assert_eq!(s.select_arm(1.0, &single).unwrap(), 0);

        let dup = ArmSet::new(
            vec![vec![0.1, 0.1], vec![1.0, 1.0], vec![1.0, 1.0]],
            vec![0.0; 3],
            0.0,
        )
        .unwrap();
        assert_eq!(s.select_arm(1.0, &dup).unwrap(), 1);

        s.absorb(&[1.0, -1.0], 2.0).unwrap();
        let arms = ArmSet::new(
            vec![vec![0.5, 0.1], vec![-0.3, 0.9], vec![0.8, -0.6], vec![0.0, 0.2]],
            vec![0.0; 4],
            0.0,
        )
        .unwrap();
        for beta in [0.0, 0.5, 5.0] {
            let scan = (0..4)
                .map(|k| (k, s.ucb_score(beta, arms.arm(k)).unwrap()))
                .fold((0, f64::NEG_INFINITY), |best, (k, v)| if v > best.1 { (k, v) } else { best });
            assert_eq!(s.select_arm(beta, &arms).unwrap(), scan.0);
        }
    }

    #[test]
    fn sync_resets_deltas() {
        let model = Model::Linear { dim: 2 };
        let mut s = ConfState::new(model, model.zeros(), 1.0).unwrap();
        s.absorb(&[1.0, 2.0], 1.0).unwrap();
        let global = s.sigma().rank1_update(&[0.5, 0.0]).unwrap();
        s.install_global(global.clone(), vec![1.0, 1.0]).unwrap();
        assert_eq!(s.trigger_value(), 0.0);
        assert!(s.delta_sigma().iter().all(|&v| v == 0.0));
        assert_eq!(s.logdet_at_last_sync(), global.logdet());
        let resid = s.sigma().multiply(s.w_hat()).unwrap();
        assert!((resid[0] - 1.0).abs() < 1e-12 && (resid[1] - 1.0).abs() < 1e-12);
    }
}
