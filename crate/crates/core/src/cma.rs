//! (μ/μ_w, λ)-CMA-ES with box constraints handled by resampling.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};

const MAX_RESAMPLES: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct CmaOptions {
    pub sigma0: f64,
    /// Per-coordinate `(low, high)`; `None` for an unbounded search.
    pub bounds: Option<Vec<(f64, f64)>>,
    pub max_generations: usize,
    pub population: Option<usize>,
    /// Stop once the best value is at or below this.
    pub target: Option<f64>,
    pub seed: u64,
}

impl Default for CmaOptions {
    fn default() -> Self {
        Self {
            sigma0: 0.5,
            bounds: None,
            max_generations: 200,
            population: None,
            target: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CmaState {
    pub mean: DVector<f64>,
    pub sigma: f64,
    pub cov: DMatrix<f64>,
    pub p_sigma: DVector<f64>,
    pub p_c: DVector<f64>,
    pub generation: usize,
    pub lambda: usize,
    mu: usize,
    weights: Vec<f64>,
    mu_eff: f64,
    c_sigma: f64,
    d_sigma: f64,
    c_c: f64,
    c1: f64,
    c_mu: f64,
    chi_n: f64,
    b: DMatrix<f64>,
    d: DVector<f64>,
}

pub fn default_population(n: usize) -> usize {
    4 + (3.0 * (n as f64).ln()).floor() as usize
}

impl CmaState {
    pub fn new(x0: &[f64], sigma0: f64, lambda: usize) -> Result<Self> {
        let n = x0.len();
        if n == 0 {
            return Err(Error::InvalidArgument("dimension must be >= 1".into()));
        }
        if !(sigma0 > 0.0 && sigma0.is_finite()) {
            return Err(Error::InvalidArgument(format!("sigma0 must be > 0, got {sigma0}")));
        }
        if lambda < 2 {
            return Err(Error::InvalidArgument("population must be >= 2".into()));
        }
        let nf = n as f64;
        let mu = lambda / 2;
        let raw: Vec<f64> = (0..mu)
            .map(|i| ((lambda as f64 + 1.0) / 2.0).ln() - ((i + 1) as f64).ln())
            .collect();
        let sum: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / sum).collect();
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        let c_sigma = (mu_eff + 2.0) / (nf + mu_eff + 5.0);
        let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
        let c_c = (4.0 + mu_eff / nf) / (nf + 4.0 + 2.0 * mu_eff / nf);
        let c1 = 2.0 / ((nf + 1.3).powi(2) + mu_eff);
        let c_mu = (1.0 - c1).min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((nf + 2.0).powi(2) + mu_eff));
        let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));
        Ok(Self {
            mean: DVector::from_column_slice(x0),
            sigma: sigma0,
            cov: DMatrix::identity(n, n),
            p_sigma: DVector::zeros(n),
            p_c: DVector::zeros(n),
            generation: 0,
            lambda,
            mu,
            weights,
            mu_eff,
            c_sigma,
            d_sigma,
            c_c,
            c1,
            c_mu,
            chi_n,
            b: DMatrix::identity(n, n),
            d: DVector::from_element(n, 1.0),
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn sample_one(&self, rng: &mut impl Rng) -> DVector<f64> {
        let n = self.dim();
        let z = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let y = &self.b * self.d.component_mul(&z);
        &self.mean + self.sigma * y
    }

    /// Draws λ candidates, resampling any outside `bounds` (clipping after
    /// too many attempts).
    pub fn ask(&self, rng: &mut impl Rng, bounds: Option<&[(f64, f64)]>) -> Vec<DVector<f64>> {
        (0..self.lambda)
            .map(|_| {
                let inside = |x: &DVector<f64>| match bounds {
                    Some(b) => x.iter().zip(b).all(|(v, (lo, hi))| v >= lo && v <= hi),
                    None => true,
                };
                let mut x = self.sample_one(rng);
                let mut tries = 1;
                while !inside(&x) && tries < MAX_RESAMPLES {
                    x = self.sample_one(rng);
                    tries += 1;
                }
                if let Some(b) = bounds {
                    for (v, (lo, hi)) in x.iter_mut().zip(b) {
                        *v = v.clamp(*lo, *hi);
                    }
                }
                x
            })
            .collect()
    }

    /// Updates the distribution from candidates and their values (lower is
    /// better; non-finite values rank last).
    pub fn tell(&mut self, xs: &[DVector<f64>], fs: &[f64]) {
        let n = self.dim() as f64;
        let mut order: Vec<usize> = (0..xs.len()).collect();
        let key = |f: f64| if f.is_finite() { f } else { f64::INFINITY };
        order.sort_by(|&a, &b| key(fs[a]).total_cmp(&key(fs[b])));

        let old = self.mean.clone();
        let mut mean = DVector::zeros(self.dim());
        for (w, &i) in self.weights.iter().zip(&order) {
            mean += *w * &xs[i];
        }
        self.mean = mean;
        let y_w = (&self.mean - &old) / self.sigma;

        let inv_sqrt = &self.b * DMatrix::from_diagonal(&self.d.map(|v| 1.0 / v)) * self.b.transpose();
        self.p_sigma = (1.0 - self.c_sigma) * &self.p_sigma
            + (self.c_sigma * (2.0 - self.c_sigma) * self.mu_eff).sqrt() * (&inv_sqrt * &y_w);
        self.generation += 1;
        let ps_norm = self.p_sigma.norm();
        let h_sigma = ps_norm / (1.0 - (1.0 - self.c_sigma).powi(2 * self.generation as i32)).sqrt() / self.chi_n
            < 1.4 + 2.0 / (n + 1.0);
        let hs = if h_sigma { 1.0 } else { 0.0 };
        self.p_c = (1.0 - self.c_c) * &self.p_c + hs * (self.c_c * (2.0 - self.c_c) * self.mu_eff).sqrt() * &y_w;

        let mut rank_mu = DMatrix::zeros(self.dim(), self.dim());
        for (w, &i) in self.weights.iter().zip(&order).take(self.mu) {
            let y = (&xs[i] - &old) / self.sigma;
            rank_mu += *w * &y * y.transpose();
        }
        let delta_h = (1.0 - hs) * self.c_c * (2.0 - self.c_c);
        self.cov = (1.0 - self.c1 - self.c_mu) * &self.cov
            + self.c1 * (&self.p_c * self.p_c.transpose() + delta_h * &self.cov)
            + self.c_mu * rank_mu;
        self.cov = (&self.cov + self.cov.transpose()) * 0.5;

        self.sigma *= ((self.c_sigma / self.d_sigma) * (ps_norm / self.chi_n - 1.0)).exp();

        let eig = SymmetricEigen::new(self.cov.clone());
        self.b = eig.eigenvectors;
        self.d = eig.eigenvalues.map(|v| v.max(1e-300).sqrt());
    }
}

pub const TRACE_HEADER: &str = "generation,best_f,mean_f,sigma";

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GenerationRecord {
    pub generation: usize,
    pub best_f: f64,
    pub mean_f: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CmaResult {
    pub best_x: Vec<f64>,
    pub best_f: f64,
    pub history: Vec<GenerationRecord>,
    pub evaluations: usize,
}

impl CmaResult {
    /// Writes the per-generation CSV, preceded by a `# config_hash=` line
    /// when `config_hash` is non-empty.
    pub fn write_trace(&self, path: &Path, config_hash: &str) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut s = String::new();
        if !config_hash.is_empty() {
            s.push_str(&format!("# config_hash={config_hash}\n"));
        }
        s.push_str(TRACE_HEADER);
        s.push('\n');
        for r in &self.history {
            s.push_str(&format!("{},{:e},{:e},{:e}\n", r.generation, r.best_f, r.mean_f, r.sigma));
        }
        f.write_all(s.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Minimizes `objective`, which sees a whole generation at once (so callers
/// may evaluate candidates in parallel). `history[g].best_f` is the best
/// value seen up to and including generation `g`.
pub fn minimize_batch(
    mut objective: impl FnMut(usize, &[Vec<f64>]) -> Vec<f64>,
    x0: &[f64],
    opts: &CmaOptions,
) -> Result<CmaResult> {
    if opts.max_generations == 0 {
        return Err(Error::InvalidArgument("budget must be >= 1 generation".into()));
    }
    if let Some(b) = &opts.bounds {
        if b.len() != x0.len() || b.iter().any(|(lo, hi)| !(lo < hi)) {
            return Err(Error::InvalidArgument("bounds must match the dimension with low < high".into()));
        }
        if x0.iter().zip(b).any(|(x, (lo, hi))| x < lo || x > hi) {
            return Err(Error::InvalidArgument("x0 outside bounds".into()));
        }
    }
    let lambda = opts.population.unwrap_or_else(|| default_population(x0.len()));
    let mut state = CmaState::new(x0, opts.sigma0, lambda)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut best_x = x0.to_vec();
    let mut best_f = f64::INFINITY;
    let mut history = Vec::new();
    let mut evaluations = 0;
    for g in 0..opts.max_generations {
        let xs = state.ask(&mut rng, opts.bounds.as_deref());
        let cands: Vec<Vec<f64>> = xs.iter().map(|x| x.iter().copied().collect()).collect();
        let fs = objective(g, &cands);
        evaluations += fs.len();
        for (x, &f) in cands.iter().zip(&fs) {
            if f.is_finite() && f < best_f {
                best_f = f;
                best_x = x.clone();
            }
        }
        let finite: Vec<f64> = fs.iter().copied().filter(|f| f.is_finite()).collect();
        let mean_f = if finite.is_empty() {
            f64::NAN
        } else {
            finite.iter().sum::<f64>() / finite.len() as f64
        };
        history.push(GenerationRecord {
            generation: g,
            best_f,
            mean_f,
            sigma: state.sigma,
        });
        if opts.target.is_some_and(|t| best_f <= t) {
            break;
        }
        state.tell(&xs, &fs);
        if !state.sigma.is_finite() || state.sigma < 1e-300 {
            break;
        }
    }
    Ok(CmaResult {
        best_x,
        best_f,
        history,
        evaluations,
    })
}

pub fn minimize(mut objective: impl FnMut(&[f64]) -> f64, x0: &[f64], opts: &CmaOptions) -> Result<CmaResult> {
    minimize_batch(|_, xs| xs.iter().map(|x| objective(x)).collect(), x0, opts)
}
