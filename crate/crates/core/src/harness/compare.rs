//! Cross-run comparison: aligned learning curves, steps-to-threshold and
//! success/time tables.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::Method;
use super::run::{read_curve, seed_dir, EvalReport, RunManifest, CURVE_FILE};
use crate::error::{Error, Result};
use crate::ppo::CurvePoint;

pub const SUCCESS_THRESHOLD: f64 = 0.6;
pub const GRID_POINTS: usize = 101;

#[derive(Debug, Clone, PartialEq)]
pub struct RunData {
    pub label: String,
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub curves: Vec<(u64, Vec<CurvePoint>)>,
    pub evals: Vec<EvalReport>,
}

fn label_of(dir: &Path) -> String {
    dir.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| dir.display().to_string())
}

/// Loads the manifest, every seed's curve (learned methods) and any
/// `eval.json` reports found next to them.
pub fn load_run(dir: &Path) -> Result<RunData> {
    let label = label_of(dir);
    let manifest = RunManifest::load(dir)
        .map_err(|e| Error::InvalidArgument(format!("run `{label}` ({}): {e}", dir.display())))?;
    let mut curves = Vec::new();
    let mut evals = Vec::new();
    for s in &manifest.seeds {
        let sd = seed_dir(dir, s.seed);
        if manifest.method.is_learned() {
            let path = sd.join(CURVE_FILE);
            if !path.exists() {
                return Err(Error::InvalidArgument(format!(
                    "run `{label}`: missing curve file {}",
                    path.display()
                )));
            }
            let (hash, rows) = read_curve(&path)?;
            if hash != manifest.config_hash {
                return Err(Error::InvalidArgument(format!(
                    "run `{label}`: {} was written by config {hash}, manifest says {}",
                    path.display(),
                    manifest.config_hash
                )));
            }
            curves.push((s.seed, rows));
        }
        let ev = sd.join("eval.json");
        if ev.exists() {
            evals.push(EvalReport::load(&ev)?);
        }
    }
    Ok(RunData {
        label,
        dir: dir.to_path_buf(),
        manifest,
        curves,
        evals,
    })
}

/// Value of a step-wise curve at `x`: the last row logged at or before `x`,
/// 0 before the first row.
pub fn curve_at(rows: &[CurvePoint], x: u64) -> f64 {
    rows.iter()
        .take_while(|p| p.cum_sim_steps <= x)
        .last()
        .map_or(0.0, |p| p.success_rate)
}

pub fn steps_to(rows: &[CurvePoint], threshold: f64) -> Option<u64> {
    rows.iter().find(|p| p.success_rate >= threshold).map(|p| p.cum_sim_steps)
}

/// Median where `None` (never reached) ranks above every value.
pub fn median_steps(values: &[Option<u64>]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v: Vec<f64> = values.iter().map(|x| x.map_or(f64::INFINITY, |s| s as f64)).collect();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    let m = if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 };
    m.is_finite().then_some(m)
}

/// Sample mean and standard deviation (0 for a single value).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedPoint {
    pub cum_sim_steps: u64,
    pub mean_success: f64,
    pub std_success: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub label: String,
    pub method: Method,
    pub config_hash: String,
    pub seeds: Vec<u64>,
    pub steps_to_60: Vec<Option<u64>>,
    pub median_steps_to_60: Option<f64>,
    pub eval_trials: usize,
    pub success_rate_mean: Option<f64>,
    pub success_rate_std: Option<f64>,
    pub time_mean_s: Option<f64>,
    pub time_std_s: Option<f64>,
    pub curve: Vec<AlignedPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub env_hash: String,
    pub task: String,
    pub clearance_scale: f64,
    pub runs: Vec<RunSummary>,
}

fn summarize(run: &RunData, grid: &[u64]) -> RunSummary {
    let steps: Vec<Option<u64>> = run.curves.iter().map(|(_, c)| steps_to(c, SUCCESS_THRESHOLD)).collect();
    let curve = if run.curves.is_empty() {
        Vec::new()
    } else {
        grid.iter()
            .map(|&x| {
                let ys: Vec<f64> = run.curves.iter().map(|(_, c)| curve_at(c, x)).collect();
                let (mean_success, std_success) = mean_std(&ys);
                AlignedPoint {
                    cum_sim_steps: x,
                    mean_success,
                    std_success,
                }
            })
            .collect()
    };
    let rates: Vec<f64> = run.evals.iter().map(|e| e.success_rate).collect();
    let times: Vec<f64> = run.evals.iter().map(|e| e.mean_time_s).collect();
    let some = |v: &[f64]| {
        if v.is_empty() {
            (None, None)
        } else {
            let (m, s) = mean_std(v);
            (Some(m), Some(s))
        }
    };
    let (success_rate_mean, success_rate_std) = some(&rates);
    let (time_mean_s, time_std_s) = some(&times);
    RunSummary {
        label: run.label.clone(),
        method: run.manifest.method,
        config_hash: run.manifest.config_hash.clone(),
        seeds: run.manifest.seeds.iter().map(|s| s.seed).collect(),
        median_steps_to_60: median_steps(&steps),
        steps_to_60: steps,
        eval_trials: run.evals.iter().map(|e| e.trials).sum(),
        success_rate_mean,
        success_rate_std,
        time_mean_s,
        time_std_s,
        curve,
    }
}

/// Builds the comparison of two or more runs on the same environment.
pub fn compare(runs: &[RunData]) -> Result<Comparison> {
    if runs.len() < 2 {
        return Err(Error::InvalidArgument("compare needs at least two runs".into()));
    }
    let env_hash = runs[0].manifest.env_hash.clone();
    for r in &runs[1..] {
        if r.manifest.env_hash != env_hash {
            return Err(Error::InvalidArgument(format!(
                "run `{}` uses a different task/simulator setup than `{}`",
                r.label, runs[0].label
            )));
        }
    }
    let max_x = runs
        .iter()
        .flat_map(|r| r.curves.iter().filter_map(|(_, c)| c.last().map(|p| p.cum_sim_steps)))
        .max()
        .unwrap_or(0);
    let grid: Vec<u64> = (0..GRID_POINTS)
        .map(|i| (max_x as u128 * i as u128 / (GRID_POINTS as u128 - 1)) as u64)
        .collect();
    Ok(Comparison {
        env_hash,
        task: runs[0].manifest.task.clone(),
        clearance_scale: runs[0].manifest.clearance_scale,
        runs: runs.iter().map(|r| summarize(r, &grid)).collect(),
    })
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl Comparison {
    /// Writes `comparison.json`, `curves.csv`, `steps_to_60.csv` and
    /// `summary.csv` into `out`.
    pub fn write(&self, out: &Path) -> Result<()> {
        std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        let hashes: Vec<&str> = self.runs.iter().map(|r| r.config_hash.as_str()).collect();
        let head = format!("# env_hash={} config_hashes={}\n", self.env_hash, hashes.join(";"));
        let put = |name: &str, body: String| {
            let p = out.join(name);
            std::fs::write(&p, body).map_err(|e| Error::io(&p, e))
        };
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        put("comparison.json", json + "\n")?;

        let mut c = head.clone() + "label,method,cum_sim_steps,mean_success,std_success\n";
        for r in &self.runs {
            for p in &r.curve {
                c.push_str(&format!("{},{},{},{},{}\n", r.label, r.method, p.cum_sim_steps, p.mean_success, p.std_success));
            }
        }
        put("curves.csv", c)?;

        let mut s = head.clone() + "label,method,seed,steps_to_60\n";
        for r in &self.runs {
            for (seed, v) in r.seeds.iter().zip(&r.steps_to_60) {
                s.push_str(&format!("{},{},{},{}\n", r.label, r.method, seed, opt(*v)));
            }
        }
        put("steps_to_60.csv", s)?;

        let mut t = head
            + "label,method,median_steps_to_60,eval_trials,success_rate_mean,success_rate_std,time_mean_s,time_std_s\n";
        for r in &self.runs {
            t.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.label,
                r.method,
                opt(r.median_steps_to_60),
                r.eval_trials,
                opt(r.success_rate_mean),
                opt(r.success_rate_std),
                opt(r.time_mean_s),
                opt(r.time_std_s)
            ));
        }
        put("summary.csv", t)
    }

    pub fn table(&self) -> String {
        let mut s = format!("task {} (clearance x{})\n", self.task, self.clearance_scale);
        s.push_str(&format!(
            "{:<20} {:<9} {:>14} {:>10} {:>10}\n",
            "run", "method", "steps_to_60", "success", "time_s"
        ));
        for r in &self.runs {
            let fmt = |v: Option<f64>, p: usize| v.map_or("-".to_string(), |x| format!("{x:.p$}"));
            s.push_str(&format!(
                "{:<20} {:<9} {:>14} {:>10} {:>10}\n",
                r.label,
                r.method.as_str(),
                match (r.method.is_learned(), r.median_steps_to_60) {
                    (false, _) => "-".to_string(),
                    (true, None) => "never".to_string(),
                    (true, Some(x)) => format!("{x:.0}"),
                },
                fmt(r.success_rate_mean, 2),
                fmt(r.time_mean_s, 2)
            ));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(x: u64, y: f64) -> CurvePoint {
        CurvePoint {
            cum_sim_steps: x,
            updates: 0,
            success_rate: y,
            mean_return: 0.0,
            mean_ep_len: 0.0,
        }
    }

    #[test]
    fn step_curve_lookup() {
        let c = [pt(10, 0.2), pt(20, 0.7), pt(30, 0.5)];
        assert_eq!(curve_at(&c, 5), 0.0);
        assert_eq!(curve_at(&c, 10), 0.2);
        assert_eq!(curve_at(&c, 29), 0.7);
        assert_eq!(curve_at(&c, 1000), 0.5);
        assert_eq!(steps_to(&c, 0.6), Some(20));
        assert_eq!(steps_to(&c, 0.9), None);
    }

    #[test]
    fn medians() {
        assert_eq!(median_steps(&[Some(3), None, Some(1)]), Some(3.0));
        assert_eq!(median_steps(&[None, None, Some(1)]), None);
        assert_eq!(median_steps(&[Some(2), Some(4)]), Some(3.0));
        assert_eq!(median_steps(&[]), None);
    }

    #[test]
    fn moments() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_std(&[7.0]), (7.0, 0.0));
    }
}
