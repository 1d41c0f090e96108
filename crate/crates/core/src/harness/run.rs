//! Training runs, evaluation and single-episode traces.

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::compare::mean_std;
use super::config::{Method, RunConfig, Task};
use crate::baselines::{discretize_catalog, optimize_fix_seq, EePoseEnv, FixSeq, FixSeqParams};
use crate::env::{in_contact, PamdpEnv};
use crate::error::{Error, Result};
use crate::policy::{ActionSpace, Checkpoint, Policy, PolicyInput};
use crate::primitives::{build_catalog, ManipulationPrimitive, MpStatus};
use crate::ppo::{train, CurvePoint, TrainOptions};

pub const MANIFEST_FILE: &str = "run.json";
pub const CONFIG_FILE: &str = "config.toml";
pub const CURVE_FILE: &str = "curve.csv";
pub const FIX_SEQ_FILE: &str = "fix_seq.json";
pub const TRACE_FILE: &str = "trace.csv";

pub fn seed_dir(run: &Path, seed: u64) -> PathBuf {
    run.join(format!("seed_{seed}"))
}

pub fn final_checkpoint(run: &Path, seed: u64) -> PathBuf {
    seed_dir(run, seed).join("checkpoints").join("final.json")
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let s = serde_json::to_string_pretty(value).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    std::fs::write(path, s + "\n").map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&s).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Primitive set the method acts over.
pub fn method_catalog(cfg: &RunConfig) -> Result<Vec<ManipulationPrimitive>> {
    let base = build_catalog(&cfg.catalog);
    match cfg.method {
        Method::Discrete => Ok(discretize_catalog(&base, cfg.discrete.values_per_param)?.primitives),
        _ => Ok(base),
    }
}

pub fn action_space(cfg: &RunConfig) -> Result<ActionSpace> {
    match cfg.method {
        Method::EePose => Ok(EePoseEnv::action_space()),
        _ => Ok(ActionSpace::from_catalog(&method_catalog(cfg)?)),
    }
}

pub fn pamdp_env(cfg: &RunConfig) -> Result<PamdpEnv> {
    let task = cfg.task.resolve()?;
    PamdpEnv::new(
        method_catalog(cfg)?,
        cfg.effective_sim()?,
        task.peg,
        task.hole,
        cfg.episode.clone(),
        cfg.exec.clone(),
    )
}

pub fn ee_pose_env(cfg: &RunConfig) -> Result<EePoseEnv> {
    let task = cfg.task.resolve()?;
    EePoseEnv::new(cfg.effective_sim()?, task.peg, task.hole, cfg.episode.clone(), cfg.ee_pose.clone())
}

pub fn fix_seq(cfg: &RunConfig) -> Result<FixSeq> {
    let task = cfg.task.resolve()?;
    FixSeq::new(
        build_catalog(&cfg.catalog),
        cfg.effective_sim()?,
        task.peg,
        task.hole,
        cfg.episode.clone(),
        cfg.exec.clone(),
        cfg.fix_seq.clone(),
    )
}

/// Per-seed outcome recorded in the run manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub seed: u64,
    pub cum_sim_steps: u64,
    pub updates: usize,
    pub steps_to_60: Option<u64>,
    pub final_success_rate: Option<f64>,
    /// Relative path of the artifact eval loads (checkpoint or parameters).
    pub artifact: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub env_hash: String,
    pub method: Method,
    pub task: String,
    pub clearance_scale: f64,
    pub budget_sim_steps: u64,
    pub seeds: Vec<SeedRecord>,
}

impl RunManifest {
    pub fn load(run: &Path) -> Result<Self> {
        read_json(&run.join(MANIFEST_FILE))
    }
}

/// Stored result of a fixed-sequence search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixSeqArtifact {
    pub config_hash: String,
    pub params: FixSeqParams,
    pub best_objective: f64,
    pub evaluations: usize,
}

impl FixSeqArtifact {
    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }
}

fn train_seed(cfg: &RunConfig, out: &Path, seed: u64, hash: &str) -> Result<SeedRecord> {
    let dir = seed_dir(out, seed);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    if cfg.method == Method::FixSeq {
        let mut seq = fix_seq(cfg)?;
        let s = &cfg.fix_seq_search;
        let opt = optimize_fix_seq(&mut seq, &FixSeqParams::default(), s.trials_per_eval, s.generations, s.sigma0, seed)?;
        opt.result.write_trace(&dir.join(TRACE_FILE), hash)?;
        write_json(
            &dir.join(FIX_SEQ_FILE),
            &FixSeqArtifact {
                config_hash: hash.to_string(),
                params: opt.best,
                best_objective: opt.result.best_f,
                evaluations: opt.result.evaluations,
            },
        )?;
        return Ok(SeedRecord {
            seed,
            cum_sim_steps: 0,
            updates: 0,
            steps_to_60: None,
            final_success_rate: None,
            artifact: format!("seed_{seed}/{FIX_SEQ_FILE}"),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut policy = Policy::new(action_space(cfg)?, cfg.policy.clone(), &mut rng)?;
    let ppo = crate::ppo::PpoConfig {
        seed,
        ..cfg.ppo.clone()
    };
    let opts = TrainOptions {
        budget_sim_steps: cfg.budget_sim_steps,
        max_updates: None,
        rolling_window: cfg.rolling_window,
        curve_path: Some(dir.join(CURVE_FILE)),
        checkpoint_dir: Some(dir.join("checkpoints")),
        checkpoint_every: cfg.checkpoint_every,
        config_hash: hash.to_string(),
    };
    let summary = match cfg.method {
        Method::EePose => train(vec![ee_pose_env(cfg)?; ppo.workers], &mut policy, &ppo, &opts)?,
        _ => train(vec![pamdp_env(cfg)?; ppo.workers], &mut policy, &ppo, &opts)?,
    };
    Ok(SeedRecord {
        seed,
        cum_sim_steps: summary.cum_sim_steps,
        updates: summary.updates.len(),
        steps_to_60: summary.steps_to(0.6),
        final_success_rate: summary.curve.last().map(|p| p.success_rate),
        artifact: format!("seed_{seed}/checkpoints/final.json"),
    })
}

/// Trains one instance per seed (seeds run on separate threads) and writes
/// the run directory: `config.toml`, `run.json` and `seed_<s>/`.
pub fn train_run(cfg: &RunConfig, out: &Path) -> Result<RunManifest> {
    cfg.validate()?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let cfg_path = out.join(CONFIG_FILE);
    std::fs::write(&cfg_path, cfg.to_toml()).map_err(|e| Error::io(&cfg_path, e))?;
    let hash = cfg.config_hash();
    let results: Vec<Result<SeedRecord>> = std::thread::scope(|s| {
        let handles: Vec<_> = cfg
            .seeds
            .iter()
            .map(|&seed| {
                let hash = &hash;
                s.spawn(move || train_seed(cfg, out, seed, hash))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("training thread panicked")).collect()
    });
    let task = cfg.task.resolve()?;
    let manifest = RunManifest {
        config_hash: hash,
        env_hash: cfg.env_hash()?,
        method: cfg.method,
        task: task.name,
        clearance_scale: task.clearance_scale,
        budget_sim_steps: cfg.budget_sim_steps,
        seeds: results.into_iter().collect::<Result<_>>()?,
    };
    write_json(&out.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

/// What eval and rollout drive.
#[derive(Debug, Clone)]
pub enum Controller {
    Policy(Box<Policy>),
    FixSeq(FixSeqParams),
}

impl Controller {
    /// Loads a checkpoint or a fixed-sequence result and checks it fits the
    /// configured method.
    pub fn load(cfg: &RunConfig, path: &Path) -> Result<Self> {
        if cfg.method == Method::FixSeq {
            return Ok(Controller::FixSeq(FixSeqArtifact::load(path)?.params));
        }
        let ck = Checkpoint::load(path)?;
        if ck.policy.space != action_space(cfg)? {
            return Err(Error::Checkpoint(format!(
                "{}: action space does not match method `{}`",
                path.display(),
                cfg.method
            )));
        }
        Ok(Controller::Policy(Box::new(ck.policy)))
    }
}

/// One step of an evaluated episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub step: usize,
    pub action: String,
    /// Physical parameter values (SI units) or, for `ee-pose`, the clipped
    /// normalized displacement.
    pub params: Vec<f64>,
    pub status: Option<MpStatus>,
    pub duration_s: f64,
    pub pose_error_m: f64,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub seed: u64,
    pub success: bool,
    pub execution_time_s: f64,
    pub steps: usize,
    pub sequence: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config_hash: String,
    pub method: Method,
    pub task: Task,
    pub source: String,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub mean_time_s: f64,
    pub std_time_s: f64,
    pub records: Vec<TrialRecord>,
}

pub const EVAL_CSV_HEADER: &str = "seed,success,execution_time_s,steps,sequence";

impl EvalReport {
    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }

    /// Writes `<stem>.json` and `<stem>.csv`.
    pub fn write(&self, json_path: &Path) -> Result<()> {
        if let Some(dir) = json_path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        write_json(json_path, self)?;
        let csv = json_path.with_extension("csv");
        let mut s = format!("# config_hash={}\n{EVAL_CSV_HEADER}\n", self.config_hash);
        for r in &self.records {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                r.seed,
                r.success as u8,
                r.execution_time_s,
                r.steps,
                r.sequence.join(";")
            ));
        }
        std::fs::write(&csv, s).map_err(|e| Error::io(&csv, e))
    }
}

/// Episode seeds for evaluation, a pure function of `seed`.
pub fn trial_seeds(seed: u64, trials: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..trials).map(|_| rng.random()).collect()
}

/// Runs one episode in inference mode (argmax primitive, mean parameters).
pub fn run_episode(cfg: &RunConfig, controller: &Controller, seed: u64) -> Result<(TrialRecord, Vec<TraceStep>)> {
    let mut trace = Vec::new();
    let success;
    match (cfg.method, controller) {
        (Method::FixSeq, Controller::FixSeq(params)) => {
            let mut seq = fix_seq(cfg)?;
            let t = seq.run(params, seed)?;
            let fixed = [vec![], vec![], vec![params.lateral_speed, params.lateral_distance], vec![params.align_angle], vec![
                cfg.fix_seq.insert_k,
                params.insert_force,
                cfg.fix_seq.insert_timeout_s,
            ]];
            for i in 0..t.sequence.len() {
                trace.push(TraceStep {
                    step: i,
                    action: t.sequence[i].clone(),
                    params: fixed[i].clone(),
                    status: Some(t.statuses[i]),
                    duration_s: t.durations_s[i],
                    pose_error_m: t.pose_errors_m[i],
                    reward: t.rewards[i],
                });
            }
            let record = TrialRecord {
                seed,
                success: t.success,
                execution_time_s: t.execution_time_s,
                steps: t.mps_attempted,
                sequence: t.sequence,
            };
            return Ok((record, trace));
        }
        (Method::EePose, Controller::Policy(policy)) => {
            let mut env = ee_pose_env(cfg)?;
            let thr = cfg.episode.contact_threshold_n;
            let dt = cfg.sim.dt_s;
            let mut obs = env.reset(seed)?;
            loop {
                let act = policy.act_deterministic(&PolicyInput::new(&obs, in_contact(&obs, thr)));
                let (next, reward, done, info) = env.step(&act.params)?;
                trace.push(TraceStep {
                    step: trace.len(),
                    action: "displace".into(),
                    params: act.params.iter().map(|v| v.clamp(-1.0, 1.0)).collect(),
                    status: None,
                    duration_s: info.ticks as f64 * dt,
                    pose_error_m: info.true_distance_m,
                    reward,
                });
                obs = next;
                if done {
                    success = info.success;
                    break;
                }
            }
        }
        (Method::Hybrid | Method::Discrete, Controller::Policy(policy)) => {
            let mut env = pamdp_env(cfg)?;
            let mut obs = env.reset(seed)?;
            loop {
                let act = policy.act_deterministic(&PolicyInput::new(&obs, env.is_contact(&obs)));
                let (next, reward, done, info) = env.step(&act)?;
                trace.push(TraceStep {
                    step: trace.len(),
                    action: env.catalog()[info.mp_index].name.clone(),
                    params: info.params.clone(),
                    status: Some(info.status),
                    duration_s: info.duration_s,
                    pose_error_m: info.true_distance_m,
                    reward,
                });
                obs = next;
                if done {
                    success = info.success;
                    break;
                }
            }
        }
        _ => {
            return Err(Error::InvalidArgument(format!("controller does not fit method `{}`", cfg.method)));
        }
    }
    let record = TrialRecord {
        seed,
        success,
        execution_time_s: trace.iter().map(|t| t.duration_s).sum(),
        steps: trace.len(),
        sequence: if cfg.method.uses_primitives() {
            trace.iter().map(|t| t.action.clone()).collect()
        } else {
            Vec::new()
        },
    };
    Ok((record, trace))
}

/// Evaluates `controller` on `trials` deterministic episodes. Trials are
/// split over `workers` threads; records stay in seed order.
pub fn evaluate(cfg: &RunConfig, controller: &Controller, trials: usize, seed: u64, workers: usize, source: &str) -> Result<EvalReport> {
    if trials == 0 {
        return Err(Error::config("eval.trials", "must be >= 1"));
    }
    let seeds = trial_seeds(seed, trials);
    let chunk = trials.div_ceil(workers.max(1));
    let parts: Vec<Result<Vec<TrialRecord>>> = std::thread::scope(|s| {
        let handles: Vec<_> = seeds
            .chunks(chunk)
            .map(|c| s.spawn(move || c.iter().map(|&t| run_episode(cfg, controller, t).map(|r| r.0)).collect()))
            .collect();
        handles.into_iter().map(|h| h.join().expect("evaluation thread panicked")).collect()
    });
    let mut records = Vec::with_capacity(trials);
    for p in parts {
        records.extend(p?);
    }
    let successes = records.iter().filter(|r| r.success).count();
    let times: Vec<f64> = records.iter().map(|r| r.execution_time_s).collect();
    let (mean_time_s, std_time_s) = mean_std(&times);
    Ok(EvalReport {
        config_hash: cfg.config_hash(),
        method: cfg.method,
        task: cfg.task.resolve()?,
        source: source.to_string(),
        trials,
        successes,
        success_rate: successes as f64 / trials as f64,
        mean_time_s,
        std_time_s,
        records,
    })
}

/// Evaluates every seed's final artifact of a run directory and writes
/// `seed_<s>/eval.json` (+ `.csv`) next to it.
pub fn evaluate_run(cfg: &RunConfig, run: &Path, trials: usize, seed: u64) -> Result<Vec<EvalReport>> {
    let manifest = RunManifest::load(run)?;
    if manifest.method != cfg.method {
        return Err(Error::InvalidArgument(format!(
            "{}: run used method `{}`, config says `{}`",
            run.display(),
            manifest.method,
            cfg.method
        )));
    }
    let mut reports = Vec::new();
    for s in &manifest.seeds {
        let path = run.join(&s.artifact);
        let controller = Controller::load(cfg, &path)?;
        let report = evaluate(cfg, &controller, trials, seed, cfg.eval.workers, &path.display().to_string())?;
        report.write(&seed_dir(run, s.seed).join("eval.json"))?;
        reports.push(report);
    }
    Ok(reports)
}

pub const TRACE_CSV_HEADER: &str = "step,action,params,status,duration_s,pose_error_m,reward";

pub fn write_trace_csv(path: &Path, config_hash: &str, trace: &[TraceStep]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    let mut s = format!("# config_hash={config_hash}\n{TRACE_CSV_HEADER}\n");
    for t in trace {
        let params: Vec<String> = t.params.iter().map(|v| v.to_string()).collect();
        let status = t.status.map(|s| s.to_string()).unwrap_or_default();
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            t.step,
            t.action,
            params.join(";"),
            status,
            t.duration_s,
            t.pose_error_m,
            t.reward
        ));
    }
    f.write_all(s.as_bytes()).map_err(|e| Error::io(path, e))?;
    f.flush().map_err(|e| Error::io(path, e))
}

pub fn format_trace(trace: &[TraceStep]) -> String {
    let mut s = String::new();
    for t in trace {
        let params: Vec<String> = t.params.iter().map(|v| format!("{v:.4}")).collect();
        let status = t.status.map(|s| s.to_string()).unwrap_or_else(|| "-".into());
        s.push_str(&format!(
            "{:>2}  {:<28} [{}]  {:<7}  {:>6.3} s  err {:.2} mm\n",
            t.step,
            t.action,
            params.join(", "),
            status,
            t.duration_s,
            t.pose_error_m * 1e3
        ));
    }
    s
}

/// Reads a training-curve CSV, returning the embedded config hash and rows.
pub fn read_curve(path: &Path) -> Result<(String, Vec<CurvePoint>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |m: String| Error::Parse {
        path: path.to_path_buf(),
        message: m,
    };
    let mut lines = text.lines();
    let hash = lines
        .next()
        .and_then(|l| l.strip_prefix("# config_hash="))
        .ok_or_else(|| bad("missing `# config_hash=` line".into()))?
        .to_string();
    if lines.next() != Some(crate::ppo::CURVE_HEADER) {
        return Err(bad("unexpected header".into()));
    }
    let mut rows = Vec::new();
    for (i, l) in lines.enumerate() {
        let f: Vec<&str> = l.split(',').collect();
        if f.len() != 5 {
            return Err(bad(format!("row {}: expected 5 fields", i + 1)));
        }
        let num = |j: usize| f[j].parse::<f64>().map_err(|e| bad(format!("row {}: {e}", i + 1)));
        rows.push(CurvePoint {
            cum_sim_steps: f[0].parse().map_err(|e| bad(format!("row {}: {e}", i + 1)))?,
            updates: f[1].parse().map_err(|e| bad(format!("row {}: {e}", i + 1)))?,
            success_rate: num(2)?,
            mean_return: num(3)?,
            mean_ep_len: num(4)?,
        });
    }
    Ok((hash, rows))
}
