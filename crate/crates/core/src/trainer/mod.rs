//! The training loop: collect exploratory episodes, rebuild trajectory
//! priorities from the density model fitted at the end of the previous
//! epoch, run agent updates, refit the density model, then evaluate and
//! record diagnostics.

mod record;

use std::fmt;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{Agent, AgentConfig, Policy};
use crate::density::{buffer_goal_entropy, fit_mog, MogConfig, MogParams, Standardizer};
use crate::envs::{EnvKind, EnvSpec, PointEnv};
use crate::error::{MepError, Result};
use crate::replay::{
    sample_batch, EpisodicBuffer, HerConfig, PerConfig, PerState, PriorityTable, RelabeledSample,
    Sampler, Trajectory,
};
use crate::stats::{mean, pearson};

pub use record::{
    aggregate, aggregate_header, read_curves, read_records, write_aggregate, AggregateRow,
    EpochRecord, MeanStd, MetricCurves, RecordWriter, AGGREGATED_METRICS, RAW_HEADER,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Ddpg,
    DdpgHer,
    DdpgMep,
    DdpgHerMep,
    DdpgPer,
    DdpgHerPer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SamplingKind {
    Uniform,
    Mep,
    Per,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Ddpg,
        Method::DdpgHer,
        Method::DdpgMep,
        Method::DdpgHerMep,
        Method::DdpgPer,
        Method::DdpgHerPer,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Ddpg => "ddpg",
            Method::DdpgHer => "ddpg_her",
            Method::DdpgMep => "ddpg_mep",
            Method::DdpgHerMep => "ddpg_her_mep",
            Method::DdpgPer => "ddpg_per",
            Method::DdpgHerPer => "ddpg_her_per",
        }
    }

    pub fn uses_her(self) -> bool {
        matches!(self, Method::DdpgHer | Method::DdpgHerMep | Method::DdpgHerPer)
    }

    pub fn sampling(self) -> SamplingKind {
        match self {
            Method::Ddpg | Method::DdpgHer => SamplingKind::Uniform,
            Method::DdpgMep | Method::DdpgHerMep => SamplingKind::Mep,
            Method::DdpgPer | Method::DdpgHerPer => SamplingKind::Per,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = MepError;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| MepError::UnknownName {
                kind: "method",
                name: s.to_string(),
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub env: EnvKind,
    pub method: Method,
    pub epochs: usize,
    pub episodes_per_epoch: usize,
    pub optimization_steps: usize,
    /// Targets are soft-updated after every this many optimization steps
    /// and after the last one of the epoch.
    pub target_update_interval: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub buffer_capacity: usize,
    pub eval_episodes: usize,
    pub density: MogConfig,
    /// At most this many buffered trajectories (a seeded random subset) are
    /// used to fit the density model; all of them are scored.
    pub density_fit_samples: usize,
    pub her: HerConfig,
    pub per: PerConfig,
    pub agent: AgentConfig,
    /// Grid cells per axis for the achieved-goal entropy estimate.
    pub entropy_resolution: usize,
    /// The correlation diagnostic runs on every epoch whose 1-based index
    /// is a multiple of this; 0 disables it.
    pub pearson_interval: usize,
}

impl TrainConfig {
    pub fn new(env: EnvKind, method: Method) -> Self {
        Self {
            env,
            method,
            epochs: 50,
            episodes_per_epoch: 20,
            optimization_steps: 100,
            target_update_interval: 10,
            batch_size: 128,
            seed: 0,
            buffer_capacity: 10_000,
            eval_episodes: 50,
            density: MogConfig::default(),
            density_fit_samples: 2_000,
            her: HerConfig::default(),
            per: PerConfig::default(),
            agent: AgentConfig::default(),
            entropy_resolution: 10,
            pearson_interval: 5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("epochs", self.epochs),
            ("episodes_per_epoch", self.episodes_per_epoch),
            ("target_update_interval", self.target_update_interval),
            ("batch_size", self.batch_size),
            ("buffer_capacity", self.buffer_capacity),
            ("eval_episodes", self.eval_episodes),
            ("density_fit_samples", self.density_fit_samples),
            ("entropy_resolution", self.entropy_resolution),
            ("density.components", self.density.components),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(MepError::InvalidArgument(format!("{name} must be positive")));
        }
        if !(0.0..=1.0).contains(&self.her.relabel_prob) {
            return Err(MepError::InvalidArgument(format!(
                "relabel_prob = {} must lie in [0, 1]",
                self.her.relabel_prob
            )));
        }
        if !(self.per.alpha >= 0.0) || !(self.per.priority_floor > 0.0) {
            return Err(MepError::InvalidArgument(
                "per alpha must be non-negative and the priority floor positive".into(),
            ));
        }
        self.agent.validate()
    }
}

/// A density model over standardized achieved-goal trajectories.
#[derive(Debug, Clone)]
pub struct DensityModel {
    pub standardizer: Standardizer,
    pub params: MogParams,
}

impl DensityModel {
    pub fn log_density(&self, trajectory: &Trajectory) -> Result<f64> {
        self.params
            .log_density(&self.standardizer.featurize(trajectory)?.vector)
    }

    /// Rank priorities for the whole buffer.
    pub fn priority_table(&self, buffer: &EpisodicBuffer) -> Result<PriorityTable> {
        let features = buffer
            .iter()
            .map(|t| Ok(self.standardizer.featurize(t)?.vector))
            .collect::<Result<Vec<_>>>()?;
        let logs = self.params.log_densities(&features)?;
        PriorityTable::from_log_densities(&buffer.ids(), &logs)
    }
}

/// Fits the density model on (a seeded subset of) the buffer.
pub fn fit_density_model(
    buffer: &EpisodicBuffer,
    config: &MogConfig,
    max_samples: usize,
    seed: u64,
) -> Result<DensityModel> {
    if buffer.is_empty() {
        return Err(MepError::EmptyBuffer);
    }
    let standardizer = Standardizer::fit(buffer.iter())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: Vec<usize> = if buffer.len() > max_samples {
        rand::seq::index::sample(&mut rng, buffer.len(), max_samples).into_vec()
    } else {
        (0..buffer.len()).collect()
    };
    chosen.sort_unstable();
    let features = chosen
        .iter()
        .map(|&i| standardizer.featurize(buffer.get(i).expect("index in range")))
        .collect::<Result<Vec<_>>>()?;
    let fit = fit_mog(
        &features,
        &MogConfig {
            seed: rng.random(),
            ..*config
        },
    )?;
    Ok(DensityModel {
        standardizer,
        params: fit.params,
    })
}

/// Plays one episode from `env.reset(seed)`.
pub fn rollout<R: Rng + ?Sized>(
    env: &mut PointEnv,
    agent: &Agent,
    seed: u64,
    explore: bool,
    rng: &mut R,
) -> Result<Trajectory> {
    let (mut state, goal) = env.reset(seed);
    let horizon = env.spec().horizon;
    let mut states = Vec::with_capacity(horizon + 1);
    let mut actions = Vec::with_capacity(horizon);
    let mut rewards = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let action = agent.act(&state, &goal, explore, rng)?;
        let out = env.step(&action)?;
        states.push(std::mem::replace(&mut state, out.state));
        actions.push(action);
        rewards.push(out.reward);
    }
    states.push(state);
    Trajectory::new(states, actions, rewards, goal)
}

/// Fraction of `n_episodes` noiseless episodes whose final step is a
/// success. Reset seeds are drawn from a generator seeded with `seed`.
pub fn evaluate<P: Policy + ?Sized>(
    policy: &P,
    env: &mut PointEnv,
    n_episodes: usize,
    seed: u64,
) -> Result<f64> {
    if n_episodes == 0 {
        return Err(MepError::InvalidArgument("evaluation needs at least one episode".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let horizon = env.spec().horizon;
    let mut successes = 0usize;
    for _ in 0..n_episodes {
        let (mut state, goal) = env.reset(rng.random());
        let mut success = false;
        for _ in 0..horizon {
            let out = env.step(&policy.action(&state, &goal)?)?;
            success = out.is_success;
            state = out.state;
        }
        successes += success as usize;
    }
    Ok(successes as f64 / n_episodes as f64)
}

/// Correlation between the complementary normalized density `1 - p_i` of
/// each buffered trajectory and the mean absolute TD error of its
/// transitions under the environment goal. `None` when either side has
/// zero variance.
pub fn pearson_diagnostic(
    buffer: &EpisodicBuffer,
    table: &PriorityTable,
    agent: &Agent,
) -> Result<Option<f64>> {
    table.check_current(buffer)?;
    let mut x = Vec::with_capacity(buffer.len());
    let mut y = Vec::with_capacity(buffer.len());
    for (traj, p) in buffer.iter().zip(&table.normalized_prob) {
        let mut total = 0.0;
        for t in 0..traj.horizon() {
            let s = RelabeledSample {
                state: traj.states[t].clone(),
                action: traj.actions[t].clone(),
                next_state: traj.states[t + 1].clone(),
                goal: traj.env_goal.clone(),
                reward: traj.rewards[t],
                td_weight: 1.0,
                trajectory_id: traj.id,
                t,
                goal_index: None,
                leaf: None,
            };
            let q = agent.q_value(&s.state, &s.goal, &s.action)?;
            total += (agent.critic_target_value(&s)? - q).abs();
        }
        x.push(1.0 - p);
        y.push(total / traj.horizon() as f64);
    }
    Ok(pearson(&x, &y))
}

/// One training run's mutable state.
pub struct Trainer {
    config: TrainConfig,
    env: PointEnv,
    eval_env: PointEnv,
    agent: Agent,
    buffer: EpisodicBuffer,
    per: Option<PerState>,
    density_model: Option<DensityModel>,
    last_table: Option<PriorityTable>,
    rng: ChaCha8Rng,
    epoch: usize,
    env_steps: u64,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let env = PointEnv::new(config.env);
        let spec = *env.spec();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let agent = Agent::new(&spec, config.agent.clone(), rng.random())?;
        let per = (config.method.sampling() == SamplingKind::Per)
            .then(|| PerState::new(config.buffer_capacity, spec.horizon, config.per));
        Ok(Self {
            buffer: EpisodicBuffer::new(config.buffer_capacity)?,
            eval_env: PointEnv::new(config.env),
            env,
            agent,
            per,
            density_model: None,
            last_table: None,
            rng,
            epoch: 0,
            env_steps: 0,
            config,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn spec(&self) -> &EnvSpec {
        self.env.spec()
    }

    pub fn agent(&self) -> &Agent {
        &self.agent
    }

    pub fn buffer(&self) -> &EpisodicBuffer {
        &self.buffer
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    /// The model fitted at the end of the last epoch, if any.
    pub fn density_model(&self) -> Option<&DensityModel> {
        self.density_model.as_ref()
    }

    /// The priority table used for sampling in the last epoch.
    pub fn last_priority_table(&self) -> Option<&PriorityTable> {
        self.last_table.as_ref()
    }

    /// Seed of the fixed evaluation goal set.
    fn eval_seed(&self) -> u64 {
        self.config.seed ^ 0x9e37_79b9_7f4a_7c15
    }

    /// Stores `episodes` exploratory rollouts without any agent update.
    pub fn warm_up(&mut self, episodes: usize) -> Result<()> {
        self.collect(episodes)
    }

    fn collect(&mut self, episodes: usize) -> Result<()> {
        for _ in 0..episodes {
            let reset_seed = self.rng.random();
            let traj = rollout(&mut self.env, &self.agent, reset_seed, true, &mut self.rng)?;
            self.agent.observe_trajectory(&traj)?;
            let receipt = self.buffer.store_episode(traj)?;
            if let Some(per) = &mut self.per {
                per.on_store(receipt.slot)?;
            }
            self.env_steps += self.spec().horizon as u64;
        }
        Ok(())
    }

    fn optimize(&mut self, table: Option<&PriorityTable>) -> Result<(f64, f64)> {
        let steps = self.config.optimization_steps;
        let her = self.config.method.uses_her().then_some(self.config.her);
        let progress = self.epoch as f64 / (self.config.epochs.max(2) - 1) as f64;
        let beta = self.config.per.beta_at(progress);
        let spec = *self.spec();
        let (mut critic, mut actor) = (Vec::with_capacity(steps), Vec::with_capacity(steps));
        for step in 0..steps {
            let sampler = match (self.config.method.sampling(), table, &self.per) {
                (SamplingKind::Mep, Some(t), _) => Sampler::Mep(t),
                (SamplingKind::Per, _, Some(state)) => Sampler::Per { state, beta },
                _ => Sampler::Uniform,
            };
            let batch = sample_batch(
                &self.buffer,
                sampler,
                self.config.batch_size,
                her.as_ref(),
                &spec,
                &mut self.rng,
            )?;
            let stats = self.agent.update(&batch)?;
            if let Some(per) = &mut self.per {
                let leaves: Vec<usize> = batch.iter().filter_map(|s| s.leaf).collect();
                per.update_priorities(&leaves, &stats.abs_td_errors)?;
            }
            critic.push(stats.critic_loss);
            actor.push(stats.actor_loss);
            if (step + 1) % self.config.target_update_interval == 0 || step + 1 == steps {
                self.agent.soft_update_targets()?;
            }
        }
        Ok((mean(&critic), mean(&actor)))
    }

    pub fn run_epoch(&mut self) -> Result<EpochRecord> {
        let start = Instant::now();
        let mep = self.config.method.sampling() == SamplingKind::Mep;
        self.collect(self.config.episodes_per_epoch)?;

        // Priorities come from the model fitted at the end of the previous
        // epoch; the first epoch samples uniformly.
        let table = match (&self.density_model, mep) {
            (Some(model), true) => Some(model.priority_table(&self.buffer)?),
            _ => None,
        };
        let (critic_loss, actor_loss) = self.optimize(table.as_ref())?;
        self.last_table = table;

        let mut density_fallback = false;
        if mep {
            let seed = self.rng.random();
            match fit_density_model(
                &self.buffer,
                &self.config.density,
                self.config.density_fit_samples,
                seed,
            ) {
                Ok(model) => self.density_model = Some(model),
                Err(_) => {
                    self.density_model = None;
                    density_fallback = true;
                }
            }
        }

        let eval_seed = self.eval_seed();
        let success_rate = evaluate(
            &self.agent,
            &mut self.eval_env,
            self.config.eval_episodes,
            eval_seed,
        )?;
        let goal_entropy = buffer_goal_entropy(&self.buffer, self.config.entropy_resolution)?;
        let interval = self.config.pearson_interval;
        let pearson_r = match &self.density_model {
            Some(model) if mep && interval > 0 && (self.epoch + 1).is_multiple_of(interval) => {
                let table = model.priority_table(&self.buffer)?;
                pearson_diagnostic(&self.buffer, &table, &self.agent)?
            }
            _ => None,
        };

        let record = EpochRecord {
            epoch: self.epoch,
            env_steps: self.env_steps,
            success_rate,
            goal_entropy,
            critic_loss,
            actor_loss,
            pearson_r,
            wall_seconds: start.elapsed().as_secs_f64(),
            density_fallback,
        };
        self.epoch += 1;
        Ok(record)
    }
}

/// Where a run writes its artifacts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunPaths {
    pub csv: PathBuf,
    pub checkpoint: PathBuf,
    pub plot: PathBuf,
}

impl RunPaths {
    /// `<dir>/<stem>.csv`, `<dir>/<stem>_best.ckpt` and `<dir>/<stem>.svg`.
    pub fn in_dir(dir: &Path, stem: &str) -> Self {
        Self {
            csv: dir.join(format!("{stem}.csv")),
            checkpoint: dir.join(format!("{stem}_best.ckpt")),
            plot: dir.join(format!("{stem}.svg")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub records: Vec<EpochRecord>,
    /// Epoch and success rate of the saved checkpoint.
    pub best: Option<(usize, f64)>,
}

pub fn run_experiment(config: &TrainConfig, paths: Option<&RunPaths>) -> Result<ExperimentOutput> {
    run_experiment_with(config, paths, |_| ControlFlow::Continue(()))
}

/// Runs all epochs, appending each record to the CSV as soon as it exists
/// and keeping the checkpoint of the best evaluation so far (ties keep the
/// earlier one). `on_epoch` may stop the run early; the files then hold
/// the completed epochs only.
pub fn run_experiment_with<F>(
    config: &TrainConfig,
    paths: Option<&RunPaths>,
    mut on_epoch: F,
) -> Result<ExperimentOutput>
where
    F: FnMut(&EpochRecord) -> ControlFlow<()>,
{
    let mut trainer = Trainer::new(config.clone())?;
    let mut writer = match paths {
        Some(p) => Some(RecordWriter::create(&p.csv)?),
        None => None,
    };
    let mut records = Vec::with_capacity(config.epochs);
    let mut best: Option<(usize, f64)> = None;
    for _ in 0..config.epochs {
        let rec = trainer.run_epoch()?;
        if let Some(w) = &mut writer {
            w.append(&rec)?;
        }
        if best.is_none_or(|(_, s)| rec.success_rate > s) {
            best = Some((rec.epoch, rec.success_rate));
            if let Some(p) = paths {
                let mut bytes = Vec::new();
                trainer.agent().save(&mut bytes)?;
                record::write_atomic(&p.checkpoint, &bytes)?;
            }
        }
        let flow = on_epoch(&rec);
        records.push(rec);
        if flow.is_break() {
            break;
        }
    }
    if let Some(p) = paths {
        let curves = read_curves(&p.csv)?;
        crate::plot::render_curves(&[(config.method.name().to_string(), curves)], &p.plot)?;
    }
    Ok(ExperimentOutput { records, best })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(method: Method) -> TrainConfig {
        TrainConfig {
            epochs: 2,
            episodes_per_epoch: 3,
            optimization_steps: 4,
            batch_size: 16,
            eval_episodes: 4,
            buffer_capacity: 50,
            agent: AgentConfig {
                hidden: vec![16, 16],
                ..AgentConfig::default()
            },
            ..TrainConfig::new(EnvKind::DriftReach, method)
        }
    }

    #[test]
    fn method_names_roundtrip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert!("ddpg_mep_her".parse::<Method>().is_err());
    }

    #[test]
    fn no_update_epoch_leaves_agent_unchanged() {
        let mut cfg = tiny(Method::Ddpg);
        cfg.episodes_per_epoch = 1;
        cfg.optimization_steps = 0;
        let mut tr = Trainer::new(cfg).unwrap();
        let (actor, critic) = (tr.agent().actor.clone(), tr.agent().critic.clone());
        let rec = tr.run_epoch().unwrap();
        assert_eq!(tr.buffer().len(), 1);
        assert_eq!(rec.env_steps, 50);
        assert_eq!((&tr.agent().actor, &tr.agent().critic), (&actor, &critic));
    }

    #[test]
    fn mep_epochs_build_full_tables() {
        let mut tr = Trainer::new(tiny(Method::DdpgHerMep)).unwrap();
        tr.run_epoch().unwrap();
        assert!(tr.last_priority_table().is_none());
        assert!(tr.density_model().is_some());
        tr.run_epoch().unwrap();
        let t = tr.last_priority_table().unwrap();
        assert_eq!(t.len(), tr.buffer().len());
        assert!((t.sample_prob.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn epochs_are_deterministic() {
        for m in [Method::DdpgHerMep, Method::DdpgHerPer] {
            let run = || {
                let mut tr = Trainer::new(tiny(m)).unwrap();
                let mut a = tr.run_epoch().unwrap();
                let mut b = tr.run_epoch().unwrap();
                a.wall_seconds = 0.0;
                b.wall_seconds = 0.0;
                (a, b)
            };
            assert_eq!(run(), run());
        }
    }

    #[test]
    fn evaluate_examples() {
        let mut env = PointEnv::new(EnvKind::PointReach);
        let greedy = |s: &crate::envs::State, g: &[f64]| -> Vec<f64> {
            (0..2).map(|i| ((g[i] - s.achieved_goal[i]) / 0.05).clamp(-1.0, 1.0)).collect()
        };
        assert_eq!(evaluate(&greedy, &mut env, 100, 3).unwrap(), 1.0);
        let idle = |_: &crate::envs::State, _: &[f64]| vec![0.0, 0.0];
        assert!(evaluate(&idle, &mut env, 1000, 3).unwrap() < 0.05);
        let one = evaluate(&idle, &mut env, 1, 8).unwrap();
        assert!(one == 0.0 || one == 1.0);
        assert!(evaluate(&idle, &mut env, 0, 8).is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = tiny(Method::Ddpg);
        c.batch_size = 0;
        assert!(c.validate().unwrap_err().to_string().contains("batch_size"));
        let mut c = tiny(Method::Ddpg);
        c.her.relabel_prob = 1.5;
        assert!(c.validate().is_err());
    }
}
