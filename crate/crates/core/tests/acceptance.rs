//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Run with `cargo test -p mep-core --test acceptance`.

use std::time::Instant;

use mep_core::density::verify::{sweep_entropy_increase, sweep_lower_bound, sweep_majorization};
use mep_core::density::{fit_mog, MogConfig};
use mep_core::envs::EnvKind;
use mep_core::nn::gradient_check;
use mep_core::replay::{sample_batch, HerConfig, PriorityTable, Sampler, SumTree};
use mep_core::stats::mean;
use mep_core::trainer::{run_experiment, EpochRecord, Method, TrainConfig, Trainer};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn entropy_suite() -> Outcome {
    let start = Instant::now();
    let s = sweep_entropy_increase(10_000, (2, 50), 101).unwrap();
    let secs = start.elapsed().as_secs_f64();
    outcome(
        s.all_passed() && secs < 5.0,
        format!(
            "{}/{} (incl. uniform ties), min margin {:.3e}, {secs:.2}s",
            s.passed, s.checked, s.worst_margin
        ),
    )
}

fn bound_suite() -> Outcome {
    let start = Instant::now();
    let s = sweep_lower_bound(10_000, (2, 50), 202).unwrap();
    let secs = start.elapsed().as_secs_f64();
    outcome(
        s.all_passed() && secs < 5.0,
        format!("{}/{}, min gap {:.3e}, {secs:.2}s", s.passed, s.checked, s.worst_margin),
    )
}

fn majorization_suite() -> Outcome {
    let s = sweep_majorization(1_000, (2, 50), 303).unwrap();
    outcome(
        s.all_passed(),
        format!("{}/{}, min partial-sum gap {:.3e}", s.passed, s.checked, s.worst_margin),
    )
}

fn rank_sampler_frequencies() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst: f64 = 0.0;
    for n in [3usize, 100] {
        let logs: Vec<f64> = (0..n).map(|_| rng.random_range(-20.0..0.0)).collect();
        let ids: Vec<u64> = (0..n as u64).collect();
        let table = PriorityTable::from_log_densities(&ids, &logs).unwrap();
        let draws = 600_000;
        let mut counts = vec![0usize; n];
        for _ in 0..draws {
            counts[table.sample_index(&mut rng)] += 1;
        }
        let total = (n * (n + 1) / 2) as f64;
        for (c, r) in counts.iter().zip(&table.rank) {
            worst = worst.max((*c as f64 / draws as f64 - *r as f64 / total).abs());
        }
    }
    outcome(worst <= 0.01, format!("N = 3 and 100, max abs deviation {worst:.2e}"))
}

fn sum_tree_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut tree = SumTree::new(1000);
    let mut flat = vec![0.0f64; tree.capacity()];
    let mut mismatches = 0;
    let (mut updates, mut queries) = (0, 0);
    for _ in 0..10_000 {
        if rng.random::<bool>() {
            let i = rng.random_range(0..1000);
            let p = rng.random_range(0..1000u32) as f64;
            tree.update(i, p).unwrap();
            flat[i] = p;
            updates += 1;
        } else {
            queries += 1;
            let total: f64 = flat.iter().sum();
            if tree.total() != total {
                mismatches += 1;
                continue;
            }
            if total == 0.0 {
                continue;
            }
            let v = rng.random_range(0..total as u64) as f64;
            let mut cum = 0.0;
            let want = flat
                .iter()
                .position(|p| {
                    cum += p;
                    *p > 0.0 && v < cum
                })
                .unwrap();
            if tree.find_prefix(v) != want {
                mismatches += 1;
            }
        }
    }
    outcome(
        mismatches == 0 && tree.is_consistent(),
        format!("{updates} updates, {queries} queries, {mismatches} mismatches"),
    )
}

fn em_monotonicity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut worst_drop: f64 = 0.0;
    for d in 0..100 {
        let dim = rng.random_range(1..6);
        let n = rng.random_range(20..200);
        let data: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let c = rng.random_range(0..3) as f64 * 2.0;
                (0..dim).map(|_| c + rng.random_range(-1.0..1.0)).collect()
            })
            .collect();
        let cfg = MogConfig {
            components: rng.random_range(1..5),
            max_iters: 40,
            tol: 0.0,
            seed: d,
        };
        let fit = fit_mog(&data, &cfg).unwrap();
        for w in fit.log_likelihood.windows(2) {
            worst_drop = worst_drop.max(w[0] - w[1]);
        }
    }
    let data: Vec<Vec<f64>> = (0..500)
        .map(|_| vec![rng.random_range(-3.0..1.0), rng.random_range(0.0..10.0)])
        .collect();
    let fit = fit_mog(&data, &MogConfig { components: 1, ..MogConfig::default() }).unwrap();
    let mut moment_err: f64 = 0.0;
    for j in 0..2 {
        let col: Vec<f64> = data.iter().map(|x| x[j]).collect();
        let m = mean(&col);
        let v = col.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / col.len() as f64;
        moment_err = moment_err
            .max((fit.params.means[0][j] - m).abs())
            .max((fit.params.variances[0][j] - v).abs());
    }
    outcome(
        worst_drop <= 1e-9 && moment_err <= 1e-9,
        format!("largest log-likelihood drop {worst_drop:.2e}, K=1 moment error {moment_err:.2e}"),
    )
}

fn gradient_checks() -> Outcome {
    let mut cfg = TrainConfig::new(EnvKind::DriftReach, Method::DdpgHer);
    cfg.seed = 707;
    let mut trainer = Trainer::new(cfg.clone()).unwrap();
    trainer.warm_up(20).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let batch = sample_batch(
        trainer.buffer(),
        Sampler::Uniform,
        16,
        Some(&HerConfig::default()),
        trainer.spec(),
        &mut rng,
    )
    .unwrap();
    let agent = trainer.agent();
    let (_, cg) = agent.critic_gradient(&batch).unwrap();
    let c = gradient_check(&agent.critic, |p| agent.critic_loss_at(p, &batch, None).unwrap().0, &cg, 1e-3, 1e-4)
        .unwrap();
    let (_, ag) = agent.actor_gradient(&batch).unwrap();
    let a = gradient_check(&agent.actor, |p| agent.actor_loss_at(p, &batch, None).unwrap(), &ag, 1e-3, 1e-4).unwrap();
    outcome(
        a.pass && c.pass,
        format!(
            "actor max rel err {:.2e} over {} params, critic {:.2e} over {}",
            a.max_relative_error, a.checked, c.max_relative_error, c.checked
        ),
    )
}

fn runs(env: EnvKind, method: Method) -> Vec<Vec<EpochRecord>> {
    SEEDS
        .iter()
        .map(|&seed| {
            let cfg = TrainConfig {
                seed,
                ..TrainConfig::new(env, method)
            };
            run_experiment(&cfg, None).unwrap().records
        })
        .collect()
}

/// Per-epoch mean over seeds of one metric.
fn seed_mean(runs: &[Vec<EpochRecord>], f: fn(&EpochRecord) -> f64) -> Vec<f64> {
    let epochs = runs.iter().map(Vec::len).min().unwrap();
    (0..epochs)
        .map(|e| mean(&runs.iter().map(|r| f(&r[e])).collect::<Vec<_>>()))
        .collect()
}

fn learning(point_her: &[Vec<EpochRecord>]) -> Outcome {
    let curve = seed_mean(point_her, |r| r.success_rate);
    let best = curve.iter().copied().fold(0.0, f64::max);
    let first = curve.iter().position(|s| *s >= 0.9);
    let per_seed: f64 = point_her
        .iter()
        .map(|r| r.iter().map(|e| e.wall_seconds).sum::<f64>())
        .fold(0.0, f64::max);
    outcome(
        best >= 0.9 && per_seed < 600.0,
        format!(
            "best seed-mean success {best:.3} (first >= 0.9 at epoch {}), slowest seed {per_seed:.0}s",
            first.map_or("-".to_string(), |e| e.to_string())
        ),
    )
}

fn entropy_trend(her: &[Vec<EpochRecord>], mep: &[Vec<EpochRecord>]) -> Outcome {
    let last = |r: &Vec<EpochRecord>| r.last().unwrap().goal_entropy;
    let diffs: Vec<f64> = mep.iter().zip(her).map(|(m, h)| last(m) - last(h)).collect();
    let d = mean(&diffs);
    outcome(
        d >= 0.0,
        format!(
            "final entropy MEP {:.4} vs HER {:.4}, paired mean diff {d:+.4}",
            mean(&mep.iter().map(last).collect::<Vec<_>>()),
            mean(&her.iter().map(last).collect::<Vec<_>>())
        ),
    )
}

fn non_inferiority(her: &[Vec<EpochRecord>], mep: &[Vec<EpochRecord>]) -> Outcome {
    let auc = |runs: &[Vec<EpochRecord>]| mean(&seed_mean(runs, |r| r.success_rate));
    let (h, m) = (auc(her), auc(mep));
    outcome(m >= 0.95 * h, format!("mean success AUC MEP {m:.4} vs HER {h:.4} (ratio {:.3})", m / h))
}

fn pearson_trend(mep: &[Vec<EpochRecord>]) -> Outcome {
    let epochs = mep[0].len();
    // The diagnostic epoch nearest the middle of training.
    let mid = mep[0]
        .iter()
        .filter(|r| r.pearson_r.is_some())
        .map(|r| r.epoch)
        .min_by_key(|e| e.abs_diff(epochs / 2));
    let Some(mid) = mid else {
        return outcome(false, "no diagnostic recorded".into());
    };
    let rs: Vec<f64> = mep.iter().filter_map(|r| r[mid].pearson_r).collect();
    let r = mean(&rs);
    outcome(
        rs.len() == mep.len() && r > 0.2,
        format!("epoch {mid}: mean r {r:.3} over {} seeds (min {:.3})", rs.len(), rs.iter().copied().fold(1.0, f64::min)),
    )
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn timed_epochs(method: Method) -> f64 {
    let cfg = TrainConfig {
        pearson_interval: 0,
        seed: 808,
        ..TrainConfig::new(EnvKind::DriftReach, method)
    };
    let mut trainer = Trainer::new(cfg.clone()).unwrap();
    trainer.warm_up(cfg.buffer_capacity - cfg.episodes_per_epoch).unwrap();
    // The first epoch fits the density model that later epochs sample from.
    trainer.run_epoch().unwrap();
    let times: Vec<f64> = (0..5).map(|_| trainer.run_epoch().unwrap().wall_seconds).collect();
    median(&times)
}

fn overhead() -> Outcome {
    let uniform = timed_epochs(Method::DdpgHer);
    let mep = timed_epochs(Method::DdpgHerMep);
    let per = timed_epochs(Method::DdpgHerPer);
    outcome(
        mep <= 1.5 * uniform && per >= mep,
        format!(
            "buffer 1e4, median epoch: uniform {uniform:.3}s, MEP {mep:.3}s ({:.2}x), PER {per:.3}s ({:.2}x)",
            mep / uniform,
            per / uniform
        ),
    )
}

fn main() {
    let mut failed = Vec::new();
    let mut report = |id: usize, name: &str, o: Outcome| {
        println!("{} {id:>2} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed.push(id);
        }
    };
    report(1, "proposal entropy increase", entropy_suite());
    report(2, "weighted-entropy lower bound", bound_suite());
    report(3, "majorization", majorization_suite());
    report(4, "rank sampler frequencies", rank_sampler_frequencies());
    report(5, "sum-tree oracle", sum_tree_oracle());
    report(6, "EM monotonicity", em_monotonicity());
    report(7, "gradient checks", gradient_checks());

    let point_her = runs(EnvKind::PointReach, Method::DdpgHer);
    report(8, "learning on point_reach", learning(&point_her));
    let drift_her = runs(EnvKind::DriftReach, Method::DdpgHer);
    let drift_mep = runs(EnvKind::DriftReach, Method::DdpgHerMep);
    report(9, "goal entropy trend", entropy_trend(&drift_her, &drift_mep));
    report(10, "MEP non-inferiority", non_inferiority(&drift_her, &drift_mep));
    report(11, "density/TD correlation", pearson_trend(&drift_mep));
    report(12, "prioritization overhead", overhead());

    if failed.is_empty() {
        println!("acceptance: all 12 criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
