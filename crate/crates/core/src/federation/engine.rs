use rand::Rng;

use super::ledger::{stat_size, CommLedger};
use crate::confidence::{AnchoredArms, ConfState};
use crate::error::{Error, Result};
use crate::linalg::SpdMatrix;
use crate::models::{Model, ParamVector};
use crate::objectives::ArmSet;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SyncPolicy {
    /// Synchronize when the acting client's trigger value exceeds the threshold.
    Threshold(f64),
    Always,
    Never,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub arm: usize,
    pub reward: f64,
    pub synced: bool,
}

/// Server plus `N` clients running the Phase-II protocol.
///
/// The server keeps the dense global `Σ_g` (starting at `λI`) and `b_g`.
/// Clients only ever upload their deltas, which never contain `λI`.
#[derive(Debug, Clone)]
pub struct FederatedEngine {
    clients: Vec<ConfState>,
    features: Vec<AnchoredArms>,
    // index into `features` for each client
    anchor_of: Vec<usize>,
    server_sigma: Vec<f64>,
    server_b: Vec<f64>,
    beta: f64,
    policy: SyncPolicy,
}

impl FederatedEngine {
    /// All clients share the anchor `w0`.
    pub fn shared(
        model: Model,
        w0: ParamVector,
        lambda: f64,
        n_clients: usize,
        arms: &ArmSet,
        beta: f64,
        policy: SyncPolicy,
    ) -> Result<Self> {
        if n_clients == 0 {
            return Err(Error::invalid("engine needs at least one client"));
        }
        let features = AnchoredArms::new(&model, &w0, arms)?;
        let state = ConfState::new(model, w0, lambda)?;
        Self::build(vec![state; n_clients], vec![features], vec![0; n_clients], lambda, beta, policy)
    }

    /// One anchor per client. Clients with different anchors cannot pool
    /// statistics, so the policy must be [`SyncPolicy::Never`].
    pub fn per_client(
        model: Model,
        anchors: Vec<ParamVector>,
        lambda: f64,
        arms: &ArmSet,
        beta: f64,
    ) -> Result<Self> {
        if anchors.is_empty() {
            return Err(Error::invalid("engine needs at least one client"));
        }
        let mut states = Vec::with_capacity(anchors.len());
        let mut features = Vec::with_capacity(anchors.len());
        for w0 in anchors {
            features.push(AnchoredArms::new(&model, &w0, arms)?);
            states.push(ConfState::new(model, w0, lambda)?);
        }
        let n = states.len();
        Self::build(states, features, (0..n).collect(), lambda, beta, SyncPolicy::Never)
    }

    fn build(
        clients: Vec<ConfState>,
        features: Vec<AnchoredArms>,
        anchor_of: Vec<usize>,
        lambda: f64,
        beta: f64,
        policy: SyncPolicy,
    ) -> Result<Self> {
        if !(beta >= 0.0 && beta.is_finite()) {
            return Err(Error::invalid(format!("beta must be finite and >= 0, got {beta}")));
        }
        if let SyncPolicy::Threshold(g) = policy {
            if g.is_nan() || g < 0.0 {
                return Err(Error::invalid(format!("gamma must be >= 0, got {g}")));
            }
        }
        let d = clients[0].dim();
        let mut server_sigma = vec![0.0; d * d];
        (0..d).for_each(|i| server_sigma[i * d + i] = lambda);
        Ok(Self {
            clients,
            features,
            anchor_of,
            server_sigma,
            server_b: vec![0.0; d],
            beta,
            policy,
        })
    }

    pub fn clients(&self) -> &[ConfState] {
        &self.clients
    }

    pub fn n_clients(&self) -> usize {
        self.clients.len()
    }

    pub fn dim(&self) -> usize {
        self.server_b.len()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Dense global `Σ_g` as of the last sync.
    pub fn server_sigma(&self) -> &[f64] {
        &self.server_sigma
    }

    pub fn server_b(&self) -> &[f64] {
        &self.server_b
    }

    /// Client `client` (0-based) selects an arm, observes a reward, absorbs
    /// it and checks the trigger.
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        client: usize,
        arms: &ArmSet,
        noise: &mut R,
        ledger: &mut CommLedger,
    ) -> Result<StepOutcome> {
        let features = &self.features[self.anchor_of[client]];
        let state = &mut self.clients[client];
        let arm = state.select_arm_anchored(self.beta, features)?;
        let reward = arms.sample_reward(arm, noise)?;
        state.absorb_features(features.value(arm), features.grad(arm), reward)?;
        let fire = match self.policy {
            SyncPolicy::Always => true,
            SyncPolicy::Never => false,
            SyncPolicy::Threshold(gamma) => state.trigger_value() > gamma,
        };
        if fire {
            self.sync(ledger)?;
        }
        Ok(StepOutcome {
            arm,
            reward,
            synced: fire,
        })
    }

    /// Upload all deltas, aggregate on the server, broadcast the result.
    pub fn sync(&mut self, ledger: &mut CommLedger) -> Result<()> {
        let d = self.dim();
        for c in &self.clients {
            for (s, v) in self.server_sigma.iter_mut().zip(c.delta_sigma()) {
                *s += v;
            }
            for (s, v) in self.server_b.iter_mut().zip(c.delta_b()) {
                *s += v;
            }
        }
        let global = SpdMatrix::from_dense(d, &self.server_sigma)?;
        for c in &mut self.clients {
            c.install_global(global.clone(), self.server_b.clone())?;
        }
        ledger.record_sync(self.clients.len(), stat_size(d));
        Ok(())
    }
}
