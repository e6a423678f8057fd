//! Browser demo: the proposal distribution on a toy simplex, and density
//! prioritization of a simulated drift buffer. Every export returns JSON.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

use mep_core::density::{check_entropy_increase, goal_entropy_estimate, proposal_distribution, MogConfig};
use mep_core::envs::{EnvKind, PointEnv};
use mep_core::replay::{EpisodicBuffer, PriorityTable, Trajectory};
use mep_core::trainer::fit_density_model;
use mep_core::MepError;

const MAX_EPISODES: usize = 2000;
const MAX_OUTCOMES: usize = 200;

#[derive(Serialize)]
struct Proposal {
    p: Vec<f64>,
    q: Vec<f64>,
    z: f64,
    h_p: f64,
    h_q: f64,
    delta: f64,
}

#[derive(Serialize)]
struct Point {
    x: f64,
    y: f64,
    rank: usize,
    sample_prob: f64,
}

#[derive(Serialize)]
struct BufferView {
    points: Vec<Point>,
    uniform_fallback: bool,
}

#[derive(Serialize)]
struct Resampled {
    draws: usize,
    uniform_entropy: f64,
    mep_entropy: f64,
    uniform_goals: Vec<[f64; 2]>,
    mep_goals: Vec<[f64; 2]>,
}

#[derive(Serialize)]
struct Failure {
    error: String,
}

fn to_json<T: Serialize>(r: Result<T, MepError>) -> String {
    match r {
        Ok(v) => serde_json::to_string(&v),
        Err(e) => serde_json::to_string(&Failure { error: e.to_string() }),
    }
    .expect("plain structs serialize")
}

/// `p_i ∝ exp(-skew · i / n)` over `n` outcomes, with its proposal.
pub fn proposal(n: usize, skew: f64) -> Result<String, MepError> {
    if !(2..=MAX_OUTCOMES).contains(&n) {
        return Err(MepError::InvalidArgument(format!("outcomes must be in 2..={MAX_OUTCOMES}")));
    }
    if !skew.is_finite() || skew < 0.0 {
        return Err(MepError::InvalidArgument("skew must be a non-negative number".into()));
    }
    let w: Vec<f64> = (0..n).map(|i| (-skew * i as f64 / n as f64).exp()).collect();
    let s: f64 = w.iter().sum();
    let p: Vec<f64> = w.iter().map(|x| x / s).collect();
    let (q, z) = proposal_distribution(&p)?;
    let r = check_entropy_increase(&p)?;
    Ok(to_json(Ok(Proposal {
        p,
        q,
        z,
        h_p: r.h_p,
        h_q: r.h_q,
        delta: r.delta,
    })))
}

/// Episodes in the drifting arena under a constant random heading per
/// episode, scaled by `spread` in `[0, 1]`.
pub fn simulate_buffer(episodes: usize, spread: f64, seed: u64) -> Result<EpisodicBuffer, MepError> {
    if !(2..=MAX_EPISODES).contains(&episodes) {
        return Err(MepError::InvalidArgument(format!("episodes must be in 2..={MAX_EPISODES}")));
    }
    if !(0.0..=1.0).contains(&spread) {
        return Err(MepError::InvalidArgument("spread must be in [0, 1]".into()));
    }
    let mut env = PointEnv::new(EnvKind::DriftReach);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buffer = EpisodicBuffer::new(episodes)?;
    for _ in 0..episodes {
        let (mut state, goal) = env.reset(rng.random());
        let heading = rng.random_range(0.0..std::f64::consts::TAU);
        let speed = spread * rng.random::<f64>();
        let (mut states, mut actions, mut rewards) = (vec![state.clone()], Vec::new(), Vec::new());
        for _ in 0..env.spec().horizon {
            let a = vec![
                speed * heading.cos() + 0.3 * rng.random_range(-1.0..1.0),
                speed * heading.sin() + 0.3 * rng.random_range(-1.0..1.0),
            ];
            let out = env.step(&a)?;
            state = out.state;
            states.push(state.clone());
            actions.push(a);
            rewards.push(out.reward);
        }
        buffer.store_episode(Trajectory::new(states, actions, rewards, goal)?)?;
    }
    Ok(buffer)
}

fn prioritize(buffer: &EpisodicBuffer, components: usize, seed: u64) -> Result<PriorityTable, MepError> {
    let cfg = MogConfig {
        components,
        seed,
        ..MogConfig::default()
    };
    fit_density_model(buffer, &cfg, buffer.len(), seed)?.priority_table(buffer)
}

fn final_goal(t: &Trajectory) -> [f64; 2] {
    let g = t.achieved_goals.last().expect("trajectories are non-empty");
    [g[0], g[1]]
}

/// Where each episode ended, with its sampling rank and probability.
pub fn buffer_priorities(episodes: usize, spread: f64, components: usize, seed: u64) -> Result<String, MepError> {
    let buffer = simulate_buffer(episodes, spread, seed)?;
    let table = prioritize(&buffer, components, seed)?;
    let points = buffer
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let [x, y] = final_goal(t);
            Point {
                x,
                y,
                rank: table.rank[i],
                sample_prob: table.sample_prob[i],
            }
        })
        .collect();
    Ok(to_json(Ok(BufferView {
        points,
        uniform_fallback: table.uniform_fallback,
    })))
}

/// Goal entropy (10×10 grid) of `draws` episodes resampled uniformly and by
/// density rank.
pub fn resample_entropy(
    episodes: usize,
    spread: f64,
    components: usize,
    draws: usize,
    seed: u64,
) -> Result<String, MepError> {
    if draws == 0 || draws > 20 * MAX_EPISODES {
        return Err(MepError::InvalidArgument("draws out of range".into()));
    }
    let buffer = simulate_buffer(episodes, spread, seed)?;
    let table = prioritize(&buffer, components, seed)?;
    let goals: Vec<[f64; 2]> = buffer.iter().map(final_goal).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let uniform_goals: Vec<[f64; 2]> = (0..draws).map(|_| goals[rng.random_range(0..goals.len())]).collect();
    let mep_goals: Vec<[f64; 2]> = (0..draws).map(|_| goals[table.sample_index(&mut rng)]).collect();
    let h = |g: &[[f64; 2]]| goal_entropy_estimate(g.iter().map(|x| &x[..]), 10, 0.0, 1.0);
    Ok(to_json(Ok(Resampled {
        draws,
        uniform_entropy: h(&uniform_goals)?,
        mep_entropy: h(&mep_goals)?,
        uniform_goals,
        mep_goals,
    })))
}

#[wasm_bindgen(js_name = proposal)]
pub fn proposal_js(n: usize, skew: f64) -> String {
    proposal(n, skew).unwrap_or_else(|e| to_json::<()>(Err(e)))
}

#[wasm_bindgen(js_name = bufferPriorities)]
pub fn buffer_priorities_js(episodes: usize, spread: f64, components: usize, seed: u32) -> String {
    buffer_priorities(episodes, spread, components, seed.into()).unwrap_or_else(|e| to_json::<()>(Err(e)))
}

#[wasm_bindgen(js_name = resampleEntropy)]
pub fn resample_entropy_js(episodes: usize, spread: f64, components: usize, draws: usize, seed: u32) -> String {
    resample_entropy(episodes, spread, components, draws, seed.into()).unwrap_or_else(|e| to_json::<()>(Err(e)))
}
