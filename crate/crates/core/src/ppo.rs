//! Proximal policy optimization over a parameterized-action environment.

use std::io::Write;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{HybridAction, PamdpEnv};
use crate::error::{Error, Result};
use crate::policy::{Checkpoint, Policy, PolicyInput};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub clip_ratio: f64,
    pub minibatch: usize,
    pub gamma: f64,
    pub learning_rate: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub samples_per_update: usize,
    pub gae_lambda: f64,
    pub epochs_per_update: usize,
    pub max_grad_norm: f64,
    pub adam_eps: f64,
    /// Parallel rollout workers; 1 gives bit-reproducible single-thread runs.
    pub workers: usize,
    pub seed: u64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip_ratio: 0.1,
            minibatch: 64,
            gamma: 0.99,
            learning_rate: 5e-4,
            entropy_coef: 0.001,
            value_coef: 0.5,
            samples_per_update: 2048,
            gae_lambda: 0.95,
            epochs_per_update: 10,
            max_grad_norm: 0.5,
            adam_eps: 1e-5,
            workers: 1,
            seed: 0,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = [
            ("clip_ratio", self.clip_ratio),
            ("gamma", self.gamma),
            ("learning_rate", self.learning_rate),
            ("gae_lambda", self.gae_lambda),
            ("max_grad_norm", self.max_grad_norm),
            ("adam_eps", self.adam_eps),
        ];
        for (name, v) in pos {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("trainer.{name}"), format!("must be > 0, got {v}")));
            }
        }
        if self.clip_ratio >= 1.0 {
            return Err(Error::config("trainer.clip_ratio", "must be < 1"));
        }
        if self.gamma > 1.0 || self.gae_lambda > 1.0 {
            return Err(Error::config("trainer.gamma", "gamma and gae_lambda must be <= 1"));
        }
        for (name, v) in [("entropy_coef", self.entropy_coef), ("value_coef", self.value_coef)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(format!("trainer.{name}"), format!("must be >= 0, got {v}")));
            }
        }
        for (name, v) in [
            ("minibatch", self.minibatch),
            ("samples_per_update", self.samples_per_update),
            ("epochs_per_update", self.epochs_per_update),
            ("workers", self.workers),
        ] {
            if v == 0 {
                return Err(Error::config(format!("trainer.{name}"), "must be >= 1"));
            }
        }
        if self.samples_per_update % self.workers != 0 {
            return Err(Error::config("trainer.workers", "must divide samples_per_update"));
        }
        Ok(())
    }
}

/// Result of one environment decision step.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvStep {
    pub next: PolicyInput,
    pub reward: f64,
    pub done: bool,
    pub success: bool,
    pub sim_steps: u64,
}

/// What the trainer needs from an environment.
pub trait PpoEnv: Clone + Send {
    fn reset(&mut self, seed: u64) -> Result<PolicyInput>;
    fn step(&mut self, action: &HybridAction) -> Result<EnvStep>;
}

impl PpoEnv for PamdpEnv {
    fn reset(&mut self, seed: u64) -> Result<PolicyInput> {
        let obs = PamdpEnv::reset(self, seed)?;
        Ok(PolicyInput::new(&obs, self.is_contact(&obs)))
    }

    fn step(&mut self, action: &HybridAction) -> Result<EnvStep> {
        let (obs, reward, done, info) = PamdpEnv::step(self, action)?;
        Ok(EnvStep {
            next: PolicyInput::new(&obs, self.is_contact(&obs)),
            reward,
            done,
            success: info.success,
            sim_steps: info.control_steps,
        })
    }
}

/// One-state, one-decision bandit with two primitives of one parameter each.
/// Reward of primitive `i` at clipped parameter `x` is
/// `offsets[i] - (x - target)^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyBandit {
    pub offsets: [f64; 2],
    pub target: f64,
    pub tolerance: f64,
}

impl Default for ToyBandit {
    fn default() -> Self {
        Self {
            offsets: [0.0, 0.3],
            target: 0.5,
            tolerance: 0.05,
        }
    }
}

impl ToyBandit {
    pub fn action_space() -> crate::policy::ActionSpace {
        crate::policy::ActionSpace {
            free: vec![0, 1],
            contact: vec![0, 1],
            dims: vec![1, 1],
        }
    }

    pub fn best(&self) -> usize {
        if self.offsets[1] > self.offsets[0] {
            1
        } else {
            0
        }
    }

    pub fn input() -> PolicyInput {
        PolicyInput {
            obs: [0.0; crate::env::OBS_DIM],
            contact: false,
        }
    }
}

impl PpoEnv for ToyBandit {
    fn reset(&mut self, _seed: u64) -> Result<PolicyInput> {
        Ok(Self::input())
    }

    fn step(&mut self, action: &HybridAction) -> Result<EnvStep> {
        if action.mp_index > 1 || action.params.len() != 1 {
            return Err(Error::InvalidArgument("bandit takes primitive 0 or 1 with one parameter".into()));
        }
        let x = action.params[0].clamp(-1.0, 1.0);
        Ok(EnvStep {
            next: Self::input(),
            reward: self.offsets[action.mp_index] - (x - self.target).powi(2),
            done: true,
            success: action.mp_index == self.best() && (x - self.target).abs() <= self.tolerance,
            sim_steps: 1,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub input: PolicyInput,
    pub action: HybridAction,
    pub log_prob: f64,
    pub value: f64,
    pub reward: f64,
    pub done: bool,
    pub sim_steps: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpisodeSummary {
    pub ret: f64,
    pub length: usize,
    pub success: bool,
    pub sim_steps: u64,
}

/// Transitions of one collection round. Multi-worker batches are the
/// concatenation of per-worker segments, each with its own bootstrap value.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBatch {
    pub transitions: Vec<Transition>,
    /// `(end index, bootstrap value)` of every segment.
    pub segments: Vec<(usize, f64)>,
    pub episodes: Vec<EpisodeSummary>,
}

impl RolloutBatch {
    pub fn sim_steps(&self) -> u64 {
        self.transitions.iter().map(|t| t.sim_steps).sum()
    }
}

/// Runs one environment across batch boundaries.
#[derive(Debug, Clone)]
pub struct Collector<E> {
    pub env: E,
    rng: ChaCha8Rng,
    current: Option<PolicyInput>,
    ep_return: f64,
    ep_len: usize,
    ep_steps: u64,
}

impl<E: PpoEnv> Collector<E> {
    pub fn new(env: E, seed: u64) -> Self {
        Self {
            env,
            rng: ChaCha8Rng::seed_from_u64(seed),
            current: None,
            ep_return: 0.0,
            ep_len: 0,
            ep_steps: 0,
        }
    }

    /// `n` transitions from sequential episodes; an unfinished episode
    /// carries over to the next call.
    pub fn collect(&mut self, policy: &Policy, n: usize) -> Result<RolloutBatch> {
        let mut transitions = Vec::with_capacity(n);
        let mut episodes = Vec::new();
        while transitions.len() < n {
            let input = match self.current {
                Some(i) => i,
                None => {
                    let seed = self.rng.random();
                    self.env.reset(seed)?
                }
            };
            let (action, log_prob, value) = policy.sample(&input, &mut self.rng)?;
            let step = self.env.step(&action)?;
            if !step.reward.is_finite() {
                return Err(Error::NonFinite(format!("reward for primitive {}", action.mp_index)));
            }
            self.ep_return += step.reward;
            self.ep_len += 1;
            self.ep_steps += step.sim_steps;
            transitions.push(Transition {
                input,
                action,
                log_prob,
                value,
                reward: step.reward,
                done: step.done,
                sim_steps: step.sim_steps,
            });
            if step.done {
                episodes.push(EpisodeSummary {
                    ret: self.ep_return,
                    length: self.ep_len,
                    success: step.success,
                    sim_steps: self.ep_steps,
                });
                self.ep_return = 0.0;
                self.ep_len = 0;
                self.ep_steps = 0;
                self.current = None;
            } else {
                self.current = Some(step.next);
            }
        }
        let bootstrap = match &self.current {
            Some(i) => policy.value(i),
            None => 0.0,
        };
        Ok(RolloutBatch {
            segments: vec![(transitions.len(), bootstrap)],
            transitions,
            episodes,
        })
    }
}

/// Collects `n` transitions split evenly over `collectors`, merging in
/// worker order.
pub fn collect<E: PpoEnv>(collectors: &mut [Collector<E>], policy: &Policy, n: usize) -> Result<RolloutBatch> {
    let per = n / collectors.len();
    let parts: Vec<Result<RolloutBatch>> = if collectors.len() == 1 {
        vec![collectors[0].collect(policy, n)]
    } else {
        std::thread::scope(|s| {
            let handles: Vec<_> = collectors
                .iter_mut()
                .map(|c| s.spawn(move || c.collect(policy, per)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|_| Err(Error::InvalidArgument("rollout worker panicked".into()))))
                .collect()
        })
    };
    let mut out = RolloutBatch {
        transitions: Vec::with_capacity(n),
        segments: Vec::new(),
        episodes: Vec::new(),
    };
    for part in parts {
        let part = part?;
        let base = out.transitions.len();
        out.transitions.extend(part.transitions);
        out.segments.extend(part.segments.into_iter().map(|(e, v)| (base + e, v)));
        out.episodes.extend(part.episodes);
    }
    Ok(out)
}

/// GAE(γ, λ) advantages and return targets for one contiguous segment.
/// `last_value` bootstraps a segment that ends mid-episode.
pub fn gae(rewards: &[f64], values: &[f64], dones: &[bool], last_value: f64, gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut acc = 0.0;
    for t in (0..n).rev() {
        let (next_value, nonterminal) = if dones[t] {
            (0.0, 0.0)
        } else if t + 1 < n {
            (values[t + 1], 1.0)
        } else {
            (last_value, 1.0)
        };
        let delta = rewards[t] + gamma * next_value * nonterminal - values[t];
        acc = delta + gamma * lambda * nonterminal * acc;
        adv[t] = acc;
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, ret)
}

pub fn advantages(batch: &RolloutBatch, gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let mut adv = Vec::with_capacity(batch.transitions.len());
    let mut ret = Vec::with_capacity(batch.transitions.len());
    let mut start = 0;
    for &(end, last) in &batch.segments {
        let seg = &batch.transitions[start..end];
        let r: Vec<f64> = seg.iter().map(|t| t.reward).collect();
        let v: Vec<f64> = seg.iter().map(|t| t.value).collect();
        let d: Vec<bool> = seg.iter().map(|t| t.done).collect();
        let (a, g) = gae(&r, &v, &d, last, gamma, lambda);
        adv.extend(a);
        ret.extend(g);
        start = end;
    }
    (adv, ret)
}

/// Shifts and scales to mean 0, std 1 (population std).
pub fn normalize(values: &mut [f64]) {
    let n = values.len() as f64;
    if values.is_empty() {
        return;
    }
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    for v in values.iter_mut() {
        *v = if std > 1e-12 { (*v - mean) / std } else { 0.0 };
    }
}

/// One training sample with its fixed targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub input: PolicyInput,
    pub action: HybridAction,
    pub old_log_prob: f64,
    pub advantage: f64,
    pub ret: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct LossParts {
    pub total: f64,
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub max_ratio_dev: f64,
}

/// Mean clipped-surrogate + value + entropy loss over `samples` and its
/// gradient (written into `grad`, which is overwritten).
pub fn loss_and_grad(policy: &Policy, samples: &[Sample], cfg: &PpoConfig, grad: &mut [f64]) -> Result<LossParts> {
    grad.iter_mut().for_each(|g| *g = 0.0);
    let n = samples.len() as f64;
    let mut parts = LossParts::default();
    for s in samples {
        let ev = policy.evaluate(&s.input, &s.action)?;
        let ratio = (ev.log_prob - s.old_log_prob).exp();
        let lo = 1.0 - cfg.clip_ratio;
        let hi = 1.0 + cfg.clip_ratio;
        let unclipped = ratio * s.advantage;
        let clipped = ratio.clamp(lo, hi) * s.advantage;
        let surrogate = unclipped.min(clipped);
        let d_logp = if unclipped <= clipped { -s.advantage * ratio / n } else { 0.0 };
        let verr = ev.value - s.ret;
        let d_value = cfg.value_coef * 2.0 * verr / n;
        let d_entropy = -cfg.entropy_coef / n;
        policy.backward(&ev, d_logp, d_entropy, d_value, grad);

        parts.policy -= surrogate / n;
        parts.value += verr * verr / n;
        parts.entropy += ev.entropy / n;
        parts.approx_kl += (s.old_log_prob - ev.log_prob) / n;
        if ratio < lo || ratio > hi {
            parts.clip_fraction += 1.0 / n;
        }
        parts.max_ratio_dev = parts.max_ratio_dev.max((ratio - 1.0).abs());
    }
    parts.total = parts.policy + cfg.value_coef * parts.value - cfg.entropy_coef * parts.entropy;
    if !parts.total.is_finite() {
        return Err(Error::NonFinite(format!("loss {parts:?}")));
    }
    Ok(parts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(n: usize, lr: f64, eps: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps,
            t: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mh = self.m[i] / b1t;
            let vh = self.v[i] / b2t;
            params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
        }
    }
}

/// Scales `grad` so its L2 norm is at most `max_norm`; returns the original
/// norm.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    /// Largest `|ρ - 1|` over the first pass of the first epoch.
    pub first_pass_ratio_dev: f64,
    pub grad_norm: f64,
    pub minibatches: usize,
}

/// Epochs × shuffled minibatches of Adam steps on the clipped loss.
pub fn update(
    policy: &mut Policy,
    adam: &mut Adam,
    batch: &RolloutBatch,
    cfg: &PpoConfig,
    rng: &mut impl Rng,
) -> Result<UpdateStats> {
    let (mut adv, ret) = advantages(batch, cfg.gamma, cfg.gae_lambda);
    normalize(&mut adv);
    let samples: Vec<Sample> = batch
        .transitions
        .iter()
        .zip(adv.iter().zip(&ret))
        .map(|(t, (a, r))| Sample {
            input: t.input,
            action: t.action.clone(),
            old_log_prob: t.log_prob,
            advantage: *a,
            ret: *r,
        })
        .collect();
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut grad = vec![0.0; policy.num_params()];
    let mut stats = UpdateStats::default();
    let mut mb = Vec::with_capacity(cfg.minibatch);
    for epoch in 0..cfg.epochs_per_update {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.minibatch) {
            mb.clear();
            mb.extend(chunk.iter().map(|&i| samples[i].clone()));
            let parts = loss_and_grad(policy, &mb, cfg, &mut grad)?;
            if epoch == 0 {
                stats.first_pass_ratio_dev = stats.first_pass_ratio_dev.max(parts.max_ratio_dev);
            }
            stats.grad_norm += clip_grad_norm(&mut grad, cfg.max_grad_norm);
            adam.step(&mut policy.params, &grad);
            if policy.params.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("weights after minibatch {}", stats.minibatches)));
            }
            stats.policy_loss += parts.policy;
            stats.value_loss += parts.value;
            stats.entropy += parts.entropy;
            stats.approx_kl += parts.approx_kl;
            stats.clip_fraction += parts.clip_fraction;
            stats.minibatches += 1;
        }
    }
    let k = stats.minibatches.max(1) as f64;
    stats.policy_loss /= k;
    stats.value_loss /= k;
    stats.entropy /= k;
    stats.approx_kl /= k;
    stats.clip_fraction /= k;
    stats.grad_norm /= k;
    Ok(stats)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub cum_sim_steps: u64,
    pub updates: usize,
    pub success_rate: f64,
    pub mean_return: f64,
    pub mean_ep_len: f64,
}

pub const CURVE_HEADER: &str = "cum_sim_steps,updates,success_rate,mean_return,mean_ep_len";

impl CurvePoint {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.6},{:.6},{:.6}",
            self.cum_sim_steps, self.updates, self.success_rate, self.mean_return, self.mean_ep_len
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOptions {
    pub budget_sim_steps: u64,
    /// Hard cap on updates regardless of the step budget.
    pub max_updates: Option<usize>,
    pub rolling_window: usize,
    pub curve_path: Option<PathBuf>,
    pub checkpoint_dir: Option<PathBuf>,
    /// Save `ckpt_<updates>.json` every this many updates (0: only initial
    /// and final).
    pub checkpoint_every: usize,
    pub config_hash: String,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            budget_sim_steps: 2_000_000,
            max_updates: None,
            rolling_window: 50,
            curve_path: None,
            checkpoint_dir: None,
            checkpoint_every: 0,
            config_hash: String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub curve: Vec<CurvePoint>,
    pub updates: Vec<UpdateStats>,
    pub cum_sim_steps: u64,
    pub episodes: Vec<EpisodeSummary>,
}

impl TrainSummary {
    /// First cumulative step count at which the rolling success rate
    /// reached `threshold`.
    pub fn steps_to(&self, threshold: f64) -> Option<u64> {
        self.curve.iter().find(|p| p.success_rate >= threshold).map(|p| p.cum_sim_steps)
    }
}

fn write_checkpoint(opts: &TrainOptions, policy: &Policy, updates: usize, steps: u64, name: &str) -> Result<()> {
    if let Some(dir) = &opts.checkpoint_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Checkpoint::new(policy.clone(), opts.config_hash.clone(), updates, steps).save(&dir.join(name))?;
    }
    Ok(())
}

/// Alternates collection and updates until the simulator-step budget (or
/// update cap) is spent. One curve row is logged per update.
pub fn train<E: PpoEnv>(envs: Vec<E>, policy: &mut Policy, cfg: &PpoConfig, opts: &TrainOptions) -> Result<TrainSummary> {
    cfg.validate()?;
    if envs.len() != cfg.workers {
        return Err(Error::InvalidArgument(format!("{} envs for {} workers", envs.len(), cfg.workers)));
    }
    let mut seeder = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut collectors: Vec<Collector<E>> = envs.into_iter().map(|e| Collector::new(e, seeder.random())).collect();
    let mut update_rng = ChaCha8Rng::seed_from_u64(seeder.random());
    let mut adam = Adam::new(policy.num_params(), cfg.learning_rate, cfg.adam_eps);

    let mut curve_file = match &opts.curve_path {
        Some(p) => {
            if let Some(dir) = p.parent() {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            let mut f = std::io::BufWriter::new(std::fs::File::create(p).map_err(|e| Error::io(p, e))?);
            writeln!(f, "# config_hash={}", opts.config_hash).map_err(|e| Error::io(p, e))?;
            writeln!(f, "{CURVE_HEADER}").map_err(|e| Error::io(p, e))?;
            Some((f, p.clone()))
        }
        None => None,
    };

    write_checkpoint(opts, policy, 0, 0, "ckpt_0.json")?;
    let mut summary = TrainSummary {
        curve: Vec::new(),
        updates: Vec::new(),
        cum_sim_steps: 0,
        episodes: Vec::new(),
    };
    let window = opts.rolling_window.max(1);
    while summary.cum_sim_steps < opts.budget_sim_steps && opts.max_updates.is_none_or(|m| summary.updates.len() < m) {
        let batch = collect(&mut collectors, policy, cfg.samples_per_update)?;
        summary.cum_sim_steps += batch.sim_steps();
        summary.episodes.extend(batch.episodes.iter().copied());
        let stats = update(policy, &mut adam, &batch, cfg, &mut update_rng)?;
        let obs: Vec<_> = batch.transitions.iter().map(|t| t.input.obs).collect();
        policy.obs_norm.update(&obs);
        summary.updates.push(stats);

        let recent = &summary.episodes[summary.episodes.len().saturating_sub(window)..];
        let k = recent.len().max(1) as f64;
        let point = CurvePoint {
            cum_sim_steps: summary.cum_sim_steps,
            updates: summary.updates.len(),
            success_rate: recent.iter().filter(|e| e.success).count() as f64 / k,
            mean_return: recent.iter().map(|e| e.ret).sum::<f64>() / k,
            mean_ep_len: recent.iter().map(|e| e.length as f64).sum::<f64>() / k,
        };
        if let Some((f, p)) = curve_file.as_mut() {
            writeln!(f, "{}", point.csv_row()).map_err(|e| Error::io(&*p, e))?;
        }
        summary.curve.push(point);
        let n = summary.updates.len();
        if opts.checkpoint_every > 0 && n % opts.checkpoint_every == 0 {
            write_checkpoint(opts, policy, n, summary.cum_sim_steps, &format!("ckpt_{n}.json"))?;
        }
    }
    if let Some((mut f, p)) = curve_file {
        f.flush().map_err(|e| Error::io(&p, e))?;
    }
    write_checkpoint(opts, policy, summary.updates.len(), summary.cum_sim_steps, "final.json")?;
    Ok(summary)
}
