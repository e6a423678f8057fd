use std::ops::ControlFlow;

use mep_core::agent::{Agent, AgentConfig};
use mep_core::envs::EnvKind;
use mep_core::stats::pearson;
use mep_core::trainer::{read_records, run_experiment, run_experiment_with, Method, RunPaths, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small(method: Method, seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: 4,
        episodes_per_epoch: 4,
        optimization_steps: 8,
        batch_size: 32,
        eval_episodes: 5,
        buffer_capacity: 100,
        pearson_interval: 2,
        seed,
        agent: AgentConfig {
            hidden: vec![16, 16],
            ..AgentConfig::default()
        },
        ..TrainConfig::new(EnvKind::DriftReach, method)
    }
}

#[test]
fn pearson_of_independent_samples_is_near_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let x: Vec<f64> = (0..10_000).map(|_| rng.random()).collect();
    let y: Vec<f64> = (0..10_000).map(|_| rng.random()).collect();
    let r = pearson(&x, &y).unwrap();
    assert!(r.abs() < 0.05, "r = {r}");
    let z: Vec<f64> = x.iter().map(|v| 3.0 * v - 1.0).collect();
    assert!((pearson(&x, &z).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn same_seed_same_records() {
    for method in [Method::DdpgHerMep, Method::DdpgPer, Method::Ddpg] {
        let strip = |cfg: &TrainConfig| -> Vec<String> {
            run_experiment(cfg, None)
                .unwrap()
                .records
                .into_iter()
                .map(|r| format!("{:?}", (r.epoch, r.success_rate, r.goal_entropy, r.critic_loss, r.actor_loss, r.pearson_r)))
                .collect()
        };
        let a = strip(&small(method, 3));
        assert_eq!(a, strip(&small(method, 3)), "{method}");
        assert_ne!(a, strip(&small(method, 4)), "{method}");
    }
}

#[test]
fn diagnostics_only_on_interval_epochs() {
    let out = run_experiment(&small(Method::DdpgHerMep, 0), None).unwrap();
    let has: Vec<bool> = out.records.iter().map(|r| r.pearson_r.is_some()).collect();
    assert_eq!(has, [false, true, false, true]);
    assert!(out.records.iter().all(|r| !r.density_fallback));
    let plain = run_experiment(&small(Method::DdpgHer, 0), None).unwrap();
    assert!(plain.records.iter().all(|r| r.pearson_r.is_none()));
}

#[test]
fn stopped_run_keeps_completed_rows_and_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let paths = RunPaths::in_dir(dir.path(), "run");
    let cfg = small(Method::DdpgHerMep, 1);
    let out = run_experiment_with(&cfg, Some(&paths), |r| {
        if r.epoch == 1 {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    })
    .unwrap();
    assert_eq!(out.records.len(), 2);
    let rows = read_records(&paths.csv).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1].epoch, 1);
    let mut f = std::fs::File::open(&paths.checkpoint).unwrap();
    let spec = *mep_core::envs::PointEnv::new(cfg.env).spec();
    Agent::load(&mut f, &spec, cfg.agent.clone()).unwrap();
}

#[test]
fn crashed_run_leaves_flushed_rows() {
    let dir = tempfile::tempdir().unwrap();
    let paths = RunPaths::in_dir(dir.path(), "crash");
    let cfg = small(Method::DdpgHer, 2);
    let result = std::panic::catch_unwind(|| {
        run_experiment_with(&cfg, Some(&paths), |r| {
            if r.epoch == 2 {
                panic!("simulated crash");
            }
            ControlFlow::Continue(())
        })
    });
    assert!(result.is_err());
    assert_eq!(read_records(&paths.csv).unwrap().len(), 3);
}
