use std::fmt::Write as _;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::Serialize;
use sha1::{Digest, Sha1};

use mep_core::density::verify::{sweep_entropy_increase, sweep_lower_bound, sweep_majorization, SweepSummary};
use mep_core::plot::render_curves;
use mep_core::trainer::{
    aggregate, read_curves, run_experiment_with, write_aggregate, EpochRecord, RunPaths, TrainConfig,
};
use mep_core::MepError;

use crate::config::render_config;

#[derive(Debug, thiserror::Error)]
pub enum CommandError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] MepError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{failed} of {total} seed runs failed: {details}")]
    SeedsFailed {
        failed: usize,
        total: usize,
        details: String,
    },
    #[error("verification failed: {0}")]
    VerifyFailed(String),
}

/// `N` means seeds `0..N`; a comma-separated list (`3,7` or `5,`) is taken
/// as given.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>, CommandError> {
    let bad = || CommandError::Usage(format!("--seeds expects N or a comma-separated list, got `{text}`"));
    let seeds: Vec<u64> = if text.contains(',') {
        text.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|_| bad()))
            .collect::<Result<_, _>>()?
    } else {
        let n: u64 = text.trim().parse().map_err(|_| bad())?;
        (0..n).collect()
    };
    if seeds.is_empty() {
        return Err(bad());
    }
    let mut sorted = seeds.clone();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != seeds.len() {
        return Err(CommandError::Usage(format!("--seeds lists a seed twice: `{text}`")));
    }
    Ok(seeds)
}

/// Git blob id of `content`: SHA-1 over `blob <len>\0<content>`.
pub fn git_blob_hash(content: &[u8]) -> String {
    let mut h = Sha1::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(content);
    h.finalize().iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub config: TrainConfig,
    /// The config in `key: value` form (seed as configured).
    pub config_text: String,
    /// Git blob hash of `config_text`.
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    pub seed_csvs: Vec<PathBuf>,
    pub aggregate_csv: PathBuf,
}

pub fn seed_paths(out: &Path, seed: u64) -> RunPaths {
    RunPaths::in_dir(out, &format!("seed_{seed}"))
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub manifest_path: PathBuf,
    pub aggregate_csv: PathBuf,
    pub completed: Vec<u64>,
}

type SeedResult = Result<Vec<EpochRecord>, String>;

/// Runs one experiment per seed on up to `jobs` worker threads, then writes
/// the per-epoch mean/std over the completed seeds.
pub fn cmd_train(
    config: &TrainConfig,
    seeds: &[u64],
    out: &Path,
    jobs: usize,
    verbose: bool,
) -> Result<TrainOutcome, CommandError> {
    if seeds.is_empty() {
        return Err(CommandError::Usage("no seeds to run".into()));
    }
    std::fs::create_dir_all(out)?;
    let config_text = render_config(config);
    let manifest = RunManifest {
        config: config.clone(),
        config_hash: git_blob_hash(config_text.as_bytes()),
        config_text,
        seeds: seeds.to_vec(),
        output_dir: out.to_path_buf(),
        seed_csvs: seeds.iter().map(|s| seed_paths(out, *s).csv).collect(),
        aggregate_csv: out.join("aggregate.csv"),
    };
    let manifest_path = out.join("manifest.json");
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)? + "\n")?;

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<SeedResult>>> = Mutex::new(vec![None; seeds.len()]);
    let workers = jobs.clamp(1, seeds.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(&seed) = seeds.get(i) else { break };
                let cfg = TrainConfig {
                    seed,
                    ..config.clone()
                };
                let paths = seed_paths(out, seed);
                let epochs = cfg.epochs;
                let result = run_experiment_with(&cfg, Some(&paths), |r| {
                    if verbose {
                        eprintln!(
                            "[seed {seed}] epoch {}/{epochs} success {:.3} entropy {:.3}",
                            r.epoch + 1,
                            r.success_rate,
                            r.goal_entropy
                        );
                    }
                    ControlFlow::Continue(())
                })
                .map(|o| o.records)
                .map_err(|e| e.to_string());
                results.lock().expect("no worker panics while holding the lock")[i] = Some(result);
            });
        }
    });

    let results = results.into_inner().expect("workers joined");
    let mut completed = Vec::new();
    let mut runs = Vec::new();
    let mut failures = Vec::new();
    for (seed, r) in seeds.iter().zip(results) {
        match r {
            Some(Ok(records)) => {
                completed.push(*seed);
                runs.push(records);
            }
            Some(Err(e)) => failures.push(format!("seed {seed}: {e}")),
            None => failures.push(format!("seed {seed}: worker did not finish")),
        }
    }
    if !runs.is_empty() {
        let rows = aggregate(&runs)?;
        write_aggregate(&manifest.aggregate_csv, &rows)?;
        let curves = read_curves(&manifest.aggregate_csv)?;
        render_curves(&[(config.method.to_string(), curves)], &out.join("aggregate.svg"))?;
    }
    if !failures.is_empty() {
        return Err(CommandError::SeedsFailed {
            failed: failures.len(),
            total: seeds.len(),
            details: failures.join("; "),
        });
    }
    Ok(TrainOutcome {
        manifest_path,
        aggregate_csv: manifest.aggregate_csv,
        completed,
    })
}

fn describe(s: &SweepSummary, margin_name: &str) -> String {
    let mut line = format!(
        "{}: {}/{} passed, min {margin_name} {:.3e}",
        s.name, s.passed, s.checked, s.worst_margin
    );
    if let Some(bad) = &s.first_failure {
        let _ = write!(line, "; first violation at {bad:?}");
    }
    line
}

/// Runs the three randomized inequality sweeps with `n` instances each.
/// Returns the report lines; fails if any instance violates its inequality.
pub fn cmd_verify(n: usize, seed: u64) -> Result<Vec<String>, CommandError> {
    if n == 0 {
        return Err(CommandError::Usage("--n must be positive".into()));
    }
    let sizes = (2, 50);
    let sweeps = [
        (sweep_entropy_increase(n, sizes, seed)?, "entropy gain"),
        (sweep_lower_bound(n, sizes, seed.wrapping_add(1))?, "bound gap"),
        (sweep_majorization(n, sizes, seed.wrapping_add(2))?, "partial-sum gap"),
    ];
    let lines: Vec<String> = sweeps.iter().map(|(s, m)| describe(s, m)).collect();
    let failed: Vec<&str> = sweeps
        .iter()
        .filter(|(s, _)| !s.all_passed())
        .map(|(s, _)| s.name)
        .collect();
    if failed.is_empty() {
        Ok(lines)
    } else {
        Err(CommandError::VerifyFailed(format!("{}\n{}", failed.join(", "), lines.join("\n"))))
    }
}

/// One labeled curve set per CSV (label = file stem) in a single SVG.
pub fn cmd_plot(csvs: &[PathBuf], output: &Path) -> Result<(), CommandError> {
    if csvs.is_empty() {
        return Err(CommandError::Usage("no CSV files given".into()));
    }
    let mut curves = Vec::with_capacity(csvs.len());
    for path in csvs {
        let label = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        let c = read_curves(path).map_err(|e| CommandError::Usage(format!("{}: {e}", path.display())))?;
        curves.push((label, c));
    }
    if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    render_curves(&curves, output)?;
    Ok(())
}
