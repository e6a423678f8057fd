//! Goal-conditioned DDPG: a tanh actor `mu(s, g)` and a critic
//! `Q(s, g, a)`, both fed normalized observation and goal vectors, with
//! slowly tracking target copies and Gaussian/uniform exploration.

mod normalizer;

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::envs::{EnvSpec, State};
use crate::error::{check_len, MepError, Result};
use crate::nn::checkpoint::{expect_magic, read_f64s, read_u32, write_f64s, write_u32};
use crate::nn::{
    adam_step, read_params, write_params, AdamConfig, AdamState, MlpGrads, MlpParams,
    OutputActivation,
};
use crate::replay::{RelabeledSample, Trajectory};

pub use normalizer::Normalizer;

pub const AGENT_MAGIC: &[u8; 6] = b"MEPAG1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub hidden: Vec<usize>,
    pub gamma: f64,
    /// Fraction of the old target kept on every soft update.
    pub polyak: f64,
    /// Gaussian exploration noise, as a fraction of the action bound.
    pub noise_sigma: f64,
    /// Probability of a uniformly random exploratory action.
    pub random_eps: f64,
    /// Penalty on the squared (bound-scaled) actor output.
    pub action_l2: f64,
    pub norm_clip: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64, 64],
            gamma: 0.98,
            polyak: 0.95,
            noise_sigma: 0.2,
            random_eps: 0.3,
            action_l2: 0.1,
            norm_clip: 5.0,
            actor_lr: 1e-3,
            critic_lr: 1e-3,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(MepError::InvalidArgument(msg));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad(format!("gamma = {} must lie in [0, 1)", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.polyak) {
            return bad(format!("polyak = {} must lie in [0, 1]", self.polyak));
        }
        if !(0.0..=1.0).contains(&self.random_eps) {
            return bad(format!("random_eps = {} must lie in [0, 1]", self.random_eps));
        }
        if !(self.noise_sigma >= 0.0) || !(self.action_l2 >= 0.0) {
            return bad("noise_sigma and action_l2 must be non-negative".into());
        }
        if !(self.norm_clip > 0.0) || !(self.actor_lr > 0.0) || !(self.critic_lr > 0.0) {
            return bad("norm_clip and learning rates must be positive".into());
        }
        if self.hidden.contains(&0) {
            return bad("hidden layer sizes must be positive".into());
        }
        Ok(())
    }
}

/// Anything that maps a state and goal to an action.
pub trait Policy {
    fn action(&self, state: &State, goal: &[f64]) -> Result<Vec<f64>>;
}

impl<F> Policy for F
where
    F: Fn(&State, &[f64]) -> Vec<f64>,
{
    fn action(&self, state: &State, goal: &[f64]) -> Result<Vec<f64>> {
        Ok(self(state, goal))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub actor_loss: f64,
    /// `|y - Q(s, g, a)|` per sample, before the update.
    pub abs_td_errors: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Agent {
    pub actor: MlpParams,
    pub critic: MlpParams,
    pub actor_target: MlpParams,
    pub critic_target: MlpParams,
    pub actor_opt: AdamState,
    pub critic_opt: AdamState,
    pub obs_norm: Normalizer,
    pub goal_norm: Normalizer,
    pub config: AgentConfig,
    spec: EnvSpec,
}

fn actor_sizes(spec: &EnvSpec, hidden: &[usize]) -> Vec<usize> {
    let mut s = vec![spec.state_dim + spec.goal_dim];
    s.extend_from_slice(hidden);
    s.push(spec.action_dim);
    s
}

fn critic_sizes(spec: &EnvSpec, hidden: &[usize]) -> Vec<usize> {
    let mut s = vec![spec.state_dim + spec.goal_dim + spec.action_dim];
    s.extend_from_slice(hidden);
    s.push(1);
    s
}

impl Agent {
    pub fn new(spec: &EnvSpec, config: AgentConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let actor = MlpParams::init(&actor_sizes(spec, &config.hidden), OutputActivation::Tanh, &mut rng)?;
        let critic =
            MlpParams::init(&critic_sizes(spec, &config.hidden), OutputActivation::Identity, &mut rng)?;
        Ok(Self::from_networks(spec, config, actor, critic))
    }

    fn from_networks(spec: &EnvSpec, config: AgentConfig, actor: MlpParams, critic: MlpParams) -> Self {
        let actor_opt = AdamState::new(
            &actor,
            AdamConfig {
                learning_rate: config.actor_lr,
                ..AdamConfig::default()
            },
        );
        let critic_opt = AdamState::new(
            &critic,
            AdamConfig {
                learning_rate: config.critic_lr,
                ..AdamConfig::default()
            },
        );
        Self {
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            actor,
            critic,
            actor_opt,
            critic_opt,
            obs_norm: Normalizer::new(spec.state_dim, config.norm_clip),
            goal_norm: Normalizer::new(spec.goal_dim, config.norm_clip),
            config,
            spec: *spec,
        }
    }

    pub fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    /// Magnitude of the most negative achievable return, `1 / (1 - gamma)`.
    pub fn clip_return(&self) -> f64 {
        1.0 / (1.0 - self.config.gamma)
    }

    /// Normalized `s ‖ g`.
    pub fn actor_input(&self, state: &State, goal: &[f64]) -> Result<Vec<f64>> {
        check_len(self.spec.goal_dim, state.achieved_goal.len())?;
        check_len(self.spec.state_dim - self.spec.goal_dim, state.context.len())?;
        check_len(self.spec.goal_dim, goal.len())?;
        let mut x = Vec::with_capacity(self.spec.state_dim + self.spec.goal_dim + self.spec.action_dim);
        self.obs_norm.normalize_into(&state.observation(), &mut x);
        self.goal_norm.normalize_into(goal, &mut x);
        Ok(x)
    }

    /// Normalized `s ‖ g ‖ a / bound`.
    fn critic_input(&self, state: &State, goal: &[f64], action: &[f64]) -> Result<Vec<f64>> {
        check_len(self.spec.action_dim, action.len())?;
        let mut x = self.actor_input(state, goal)?;
        let bound = self.spec.action_bound;
        x.extend(action.iter().map(|a| a / bound));
        Ok(x)
    }

    pub fn deterministic_action(&self, state: &State, goal: &[f64]) -> Result<Vec<f64>> {
        let x = self.actor_input(state, goal)?;
        let bound = self.spec.action_bound;
        Ok(self.actor.forward(&x)?.into_iter().map(|u| u * bound).collect())
    }

    /// Behaviour action. Exploring: a uniform action with probability
    /// `random_eps`, otherwise the deterministic action plus Gaussian noise,
    /// clamped to the bounds.
    pub fn act<R: Rng + ?Sized>(
        &self,
        state: &State,
        goal: &[f64],
        explore: bool,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        let mut a = self.deterministic_action(state, goal)?;
        if !explore {
            return Ok(a);
        }
        let bound = self.spec.action_bound;
        if rng.random::<f64>() < self.config.random_eps {
            for v in &mut a {
                *v = rng.random_range(-bound..=bound);
            }
        } else {
            let noise = Normal::new(0.0, self.config.noise_sigma * bound)
                .map_err(|e| MepError::InvalidArgument(e.to_string()))?;
            for v in &mut a {
                *v = (*v + noise.sample(rng)).clamp(-bound, bound);
            }
        }
        Ok(a)
    }

    pub fn q_value(&self, state: &State, goal: &[f64], action: &[f64]) -> Result<f64> {
        Ok(self.critic.forward(&self.critic_input(state, goal, action)?)?[0])
    }

    /// `y = r + gamma Q'(s', g, mu'(s', g))`, clipped to `[-1/(1-gamma), 0]`.
    pub fn critic_target_value(&self, sample: &RelabeledSample) -> Result<f64> {
        let x = self.actor_input(&sample.next_state, &sample.goal)?;
        let mu = self.actor_target.forward(&x)?;
        let mut cin = x;
        cin.extend_from_slice(&mu);
        let q = self.critic_target.forward(&cin)?[0];
        let y = sample.reward + self.config.gamma * q;
        Ok(y.clamp(-self.clip_return(), 0.0))
    }

    pub fn critic_target_values(&self, batch: &[RelabeledSample]) -> Result<Vec<f64>> {
        if batch.is_empty() {
            return Err(MepError::InvalidArgument("empty batch".into()));
        }
        batch.iter().map(|s| self.critic_target_value(s)).collect()
    }

    /// `y - Q(s, g, a)` for every sample under the current networks.
    pub fn td_errors(&self, batch: &[RelabeledSample]) -> Result<Vec<f64>> {
        batch
            .iter()
            .map(|s| Ok(self.critic_target_value(s)? - self.q_value(&s.state, &s.goal, &s.action)?))
            .collect()
    }

    /// Weighted critic loss `Σ w (Q - y)^2 / Σ w` of `critic` on `batch`,
    /// with targets from the current target networks. Accumulates the
    /// gradient into `grads` when given; also returns `y - Q` per sample.
    pub fn critic_loss_at(
        &self,
        critic: &MlpParams,
        batch: &[RelabeledSample],
        mut grads: Option<&mut MlpGrads>,
    ) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return Err(MepError::InvalidArgument("empty batch".into()));
        }
        let sum_w: f64 = batch.iter().map(|s| s.td_weight).sum();
        if batch.iter().any(|s| !(s.td_weight >= 0.0) || !s.td_weight.is_finite()) || !(sum_w > 0.0) {
            return Err(MepError::InvalidArgument(
                "td weights must be finite, non-negative and not all zero".into(),
            ));
        }
        let mut loss = 0.0;
        let mut td = Vec::with_capacity(batch.len());
        for s in batch {
            let y = self.critic_target_value(s)?;
            let cache = critic.forward_cached(&self.critic_input(&s.state, &s.goal, &s.action)?)?;
            let diff = cache.output()[0] - y;
            loss += s.td_weight * diff * diff;
            td.push(-diff);
            if let Some(g) = grads.as_deref_mut() {
                critic.backward_into(&cache, &[2.0 * s.td_weight * diff / sum_w], g)?;
            }
        }
        Ok((loss / sum_w, td))
    }

    /// Actor loss `-mean Q(s, g, mu(s, g)) + action_l2 · mean(mu^2)` of
    /// `actor` through the current online critic.
    pub fn actor_loss_at(
        &self,
        actor: &MlpParams,
        batch: &[RelabeledSample],
        mut grads: Option<&mut MlpGrads>,
    ) -> Result<f64> {
        if batch.is_empty() {
            return Err(MepError::InvalidArgument("empty batch".into()));
        }
        let b = batch.len() as f64;
        let l2 = self.config.action_l2 / (b * self.spec.action_dim as f64);
        let mut loss = 0.0;
        for s in batch {
            let x = self.actor_input(&s.state, &s.goal)?;
            let ac = actor.forward_cached(&x)?;
            let mu = ac.output();
            let n_x = x.len();
            let mut cin = x;
            cin.extend_from_slice(mu);
            let cc = self.critic.forward_cached(&cin)?;
            loss += -cc.output()[0] / b + l2 * mu.iter().map(|u| u * u).sum::<f64>();
            if let Some(g) = grads.as_deref_mut() {
                let dcin = self.critic.input_gradient(&cc, &[-1.0 / b])?;
                let dmu: Vec<f64> = dcin[n_x..]
                    .iter()
                    .zip(mu)
                    .map(|(d, u)| d + 2.0 * l2 * u)
                    .collect();
                actor.backward_into(&ac, &dmu, g)?;
            }
        }
        Ok(loss)
    }

    pub fn critic_gradient(&self, batch: &[RelabeledSample]) -> Result<(f64, MlpGrads)> {
        let mut g = MlpGrads::zeros_like(&self.critic);
        let (loss, _) = self.critic_loss_at(&self.critic, batch, Some(&mut g))?;
        Ok((loss, g))
    }

    pub fn actor_gradient(&self, batch: &[RelabeledSample]) -> Result<(f64, MlpGrads)> {
        let mut g = MlpGrads::zeros_like(&self.actor);
        let loss = self.actor_loss_at(&self.actor, batch, Some(&mut g))?;
        Ok((loss, g))
    }

    /// One Adam step on each network. Both gradients are taken at the
    /// pre-update parameters; nothing changes if either loss is non-finite.
    pub fn update(&mut self, batch: &[RelabeledSample]) -> Result<UpdateStats> {
        let mut cg = MlpGrads::zeros_like(&self.critic);
        let (critic_loss, td) = self.critic_loss_at(&self.critic, batch, Some(&mut cg))?;
        let (actor_loss, ag) = self.actor_gradient(batch)?;
        if !critic_loss.is_finite() {
            return Err(MepError::NonFinite("critic loss"));
        }
        if !actor_loss.is_finite() {
            return Err(MepError::NonFinite("actor loss"));
        }
        if !cg.all_finite() || !ag.all_finite() {
            return Err(MepError::NonFinite("gradient"));
        }
        adam_step(&mut self.critic, &cg, &mut self.critic_opt)?;
        adam_step(&mut self.actor, &ag, &mut self.actor_opt)?;
        Ok(UpdateStats {
            critic_loss,
            actor_loss,
            abs_td_errors: td.into_iter().map(f64::abs).collect(),
        })
    }

    /// `target <- polyak · target + (1 - polyak) · online`.
    pub fn soft_update_targets(&mut self) -> Result<()> {
        let p = self.config.polyak;
        self.actor_target.blend_towards(&self.actor, p)?;
        self.critic_target.blend_towards(&self.critic, p)
    }

    /// Feeds every observation and goal of an episode to the normalizers.
    pub fn observe_trajectory(&mut self, trajectory: &Trajectory) -> Result<()> {
        for s in &trajectory.states {
            self.obs_norm.push(&s.observation())?;
        }
        self.goal_norm.push(&trajectory.env_goal)?;
        for g in &trajectory.achieved_goals {
            self.goal_norm.push(g)?;
        }
        self.obs_norm.recompute();
        self.goal_norm.recompute();
        Ok(())
    }

    /// Magic `MEPAG1`, a `u32` section count (4), the actor, critic and
    /// their targets as network sections, then for the observation and goal
    /// normalizers a `u32` dimension followed by mean and std.
    pub fn save<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(AGENT_MAGIC)?;
        write_u32(w, 4)?;
        for net in [&self.actor, &self.critic, &self.actor_target, &self.critic_target] {
            write_params(w, net)?;
        }
        for n in [&self.obs_norm, &self.goal_norm] {
            write_u32(w, n.dim())?;
            write_f64s(w, &n.mean)?;
            write_f64s(w, &n.std)?;
        }
        Ok(())
    }

    /// Restores networks and normalizer statistics; optimizer state starts
    /// fresh.
    pub fn load<R: Read>(r: &mut R, spec: &EnvSpec, config: AgentConfig) -> Result<Self> {
        config.validate()?;
        expect_magic(r, AGENT_MAGIC)?;
        let sections = read_u32(r)?;
        if sections != 4 {
            return Err(MepError::Checkpoint(format!("expected 4 network sections, found {sections}")));
        }
        let actor = read_params(r, OutputActivation::Tanh)?;
        let critic = read_params(r, OutputActivation::Identity)?;
        let actor_target = read_params(r, OutputActivation::Tanh)?;
        let critic_target = read_params(r, OutputActivation::Identity)?;
        let (want_a, want_c) = (actor_sizes(spec, &config.hidden), critic_sizes(spec, &config.hidden));
        for (net, want) in [(&actor, &want_a), (&critic, &want_c), (&actor_target, &want_a), (&critic_target, &want_c)] {
            if &net.layer_sizes != want {
                return Err(MepError::Checkpoint(format!(
                    "layer sizes {:?} do not match {:?}",
                    net.layer_sizes, want
                )));
            }
        }
        let mut agent = Self::from_networks(spec, config, actor, critic);
        agent.actor_target = actor_target;
        agent.critic_target = critic_target;
        for n in [&mut agent.obs_norm, &mut agent.goal_norm] {
            let dim = read_u32(r)?;
            check_len(n.dim(), dim)?;
            let mean = read_f64s(r, dim)?;
            let std = read_f64s(r, dim)?;
            n.set_stats(mean, std)?;
        }
        Ok(agent)
    }
}

impl Policy for Agent {
    fn action(&self, state: &State, goal: &[f64]) -> Result<Vec<f64>> {
        self.deterministic_action(state, goal)
    }
}
