//! Hybrid discrete/continuous policy and value function.
//!
//! All weights live in one flat `Vec<f64>`; [`Layout`] records where each
//! block starts. Forward passes keep the activations needed for the manual
//! backward pass used by the trainer.

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::env::{ActionPartition, HybridAction, Observation, OBS_DIM};
use crate::error::{Error, Result};
use crate::primitives::ManipulationPrimitive;

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const NORM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub discrete_hidden: usize,
    pub discrete_layers: usize,
    pub param_hidden: usize,
    pub param_layers: usize,
    pub value_hidden: usize,
    pub value_layers: usize,
    pub init_log_std: f64,
    /// Gain on the initial output-layer weights of the policy heads.
    pub head_init_gain: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            discrete_hidden: 128,
            discrete_layers: 2,
            param_hidden: 24,
            param_layers: 2,
            value_hidden: 24,
            value_layers: 2,
            init_log_std: 0.5f64.ln(),
            head_init_gain: 0.01,
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("discrete_hidden", self.discrete_hidden),
            ("param_hidden", self.param_hidden),
            ("value_hidden", self.value_hidden),
        ] {
            if v == 0 {
                return Err(Error::config(format!("policy.{name}"), "must be >= 1"));
            }
        }
        if !self.init_log_std.is_finite() {
            return Err(Error::config("policy.init_log_std", "must be finite"));
        }
        Ok(())
    }
}

/// Which primitive indices are selectable in each contact state and how many
/// continuous parameters each one takes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSpace {
    pub free: Vec<usize>,
    pub contact: Vec<usize>,
    pub dims: Vec<usize>,
}

impl ActionSpace {
    pub fn from_catalog(catalog: &[ManipulationPrimitive]) -> Self {
        let p = ActionPartition::of(catalog);
        Self {
            free: p.free,
            contact: p.contact,
            dims: catalog.iter().map(|m| m.dim()).collect(),
        }
    }

    pub fn feasible(&self, contact: bool) -> &[usize] {
        if contact {
            &self.contact
        } else {
            &self.free
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dims.len();
        if self.free.is_empty() || self.contact.is_empty() {
            return Err(Error::InvalidArgument("both contact states need a feasible primitive".into()));
        }
        if self.free.iter().chain(&self.contact).any(|&i| i >= n) {
            return Err(Error::InvalidArgument("feasible index out of range".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Dense {
    input: usize,
    output: usize,
    offset: usize,
}

impl Dense {
    fn weights(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.input * self.output
    }

    fn bias(&self) -> std::ops::Range<usize> {
        let b = self.offset + self.input * self.output;
        b..b + self.output
    }

    fn size(&self) -> usize {
        (self.input + 1) * self.output
    }
}

/// tanh hidden layers, linear output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<Dense>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpCache {
    /// `acts[0]` is the input, `acts[i]` the output of layer `i - 1`.
    acts: Vec<Vec<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("non-empty")
    }
}

impl Mlp {
    fn new(sizes: &[usize], offset: &mut usize) -> Self {
        let layers = sizes
            .windows(2)
            .map(|w| {
                let d = Dense {
                    input: w[0],
                    output: w[1],
                    offset: *offset,
                };
                *offset += d.size();
                d
            })
            .collect();
        Self { layers }
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        let first = self.layers.first().expect("non-empty").offset;
        let last = self.layers.last().expect("non-empty");
        first..last.offset + last.size()
    }

    fn init(&self, params: &mut [f64], rng: &mut impl Rng, out_gain: f64) {
        let n = self.layers.len();
        for (i, l) in self.layers.iter().enumerate() {
            let gain = if i + 1 == n { out_gain } else { 1.0 };
            let a = gain * (6.0 / (l.input + l.output) as f64).sqrt();
            for w in &mut params[l.weights()] {
                *w = rng.random_range(-a..a);
            }
            for b in &mut params[l.bias()] {
                *b = 0.0;
            }
        }
    }

    pub fn forward(&self, params: &[f64], x: &[f64]) -> MlpCache {
        let n = self.layers.len();
        let mut acts = Vec::with_capacity(n + 1);
        acts.push(x.to_vec());
        for (i, l) in self.layers.iter().enumerate() {
            let w = &params[l.weights()];
            let b = &params[l.bias()];
            let input = &acts[i];
            let mut out = b.to_vec();
            for (o, out_o) in out.iter_mut().enumerate() {
                let row = &w[o * l.input..(o + 1) * l.input];
                *out_o += row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>();
            }
            if i + 1 < n {
                for v in &mut out {
                    *v = v.tanh();
                }
            }
            acts.push(out);
        }
        MlpCache { acts }
    }

    /// Accumulates `d loss / d params` into `grad` and returns
    /// `d loss / d input`.
    pub fn backward(&self, params: &[f64], cache: &MlpCache, grad_out: &[f64], grad: &mut [f64]) -> Vec<f64> {
        let n = self.layers.len();
        let mut delta = grad_out.to_vec();
        for i in (0..n).rev() {
            let l = &self.layers[i];
            if i + 1 < n {
                for (d, y) in delta.iter_mut().zip(&cache.acts[i + 1]) {
                    *d *= 1.0 - y * y;
                }
            }
            let input = &cache.acts[i];
            let w = &params[l.weights()];
            let mut next = vec![0.0; l.input];
            let wr = l.weights();
            let br = l.bias();
            for o in 0..l.output {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                grad[br.start + o] += d;
                let gw = &mut grad[wr.start + o * l.input..wr.start + (o + 1) * l.input];
                for (g, x) in gw.iter_mut().zip(input) {
                    *g += d * x;
                }
                for (nx, wv) in next.iter_mut().zip(&w[o * l.input..(o + 1) * l.input]) {
                    *nx += d * wv;
                }
            }
            delta = next;
        }
        delta
    }
}

/// Offsets of every parameter block inside the flat vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub gamma: usize,
    pub beta: usize,
    pub free: Mlp,
    pub contact: Mlp,
    pub heads: Vec<Option<Mlp>>,
    pub log_std: Vec<Option<usize>>,
    pub value: Mlp,
    pub total: usize,
}

impl Layout {
    fn new(space: &ActionSpace, cfg: &PolicyConfig) -> Self {
        let hidden = |width: usize, layers: usize, out: usize| {
            let mut s = vec![OBS_DIM];
            s.extend(std::iter::repeat_n(width, layers));
            s.push(out);
            s
        };
        let mut off = 0;
        let gamma = off;
        off += OBS_DIM;
        let beta = off;
        off += OBS_DIM;
        let free = Mlp::new(&hidden(cfg.discrete_hidden, cfg.discrete_layers, space.free.len()), &mut off);
        let contact = Mlp::new(&hidden(cfg.discrete_hidden, cfg.discrete_layers, space.contact.len()), &mut off);
        let heads = space
            .dims
            .iter()
            .map(|&d| (d > 0).then(|| Mlp::new(&hidden(cfg.param_hidden, cfg.param_layers, d), &mut off)))
            .collect();
        let log_std = space
            .dims
            .iter()
            .map(|&d| {
                (d > 0).then(|| {
                    let o = off;
                    off += d;
                    o
                })
            })
            .collect();
        let value = Mlp::new(&hidden(cfg.value_hidden, cfg.value_layers, 1), &mut off);
        Self {
            gamma,
            beta,
            free,
            contact,
            heads,
            log_std,
            value,
            total: off,
        }
    }

    /// Named parameter blocks, for diagnostics and gradient checks.
    pub fn blocks(&self) -> Vec<(String, std::ops::Range<usize>)> {
        let mut out = vec![
            ("norm.gamma".to_string(), self.gamma..self.gamma + OBS_DIM),
            ("norm.beta".to_string(), self.beta..self.beta + OBS_DIM),
            ("discrete.free".to_string(), self.free.range()),
            ("discrete.contact".to_string(), self.contact.range()),
        ];
        for (i, h) in self.heads.iter().enumerate() {
            if let Some(h) = h {
                out.push((format!("head.{i}"), h.range()));
            }
        }
        for (i, (o, h)) in self.log_std.iter().zip(&self.heads).enumerate() {
            if let (Some(o), Some(h)) = (o, h) {
                let d = h.layers.last().expect("non-empty").output;
                out.push((format!("log_std.{i}"), *o..*o + d));
            }
        }
        out.push(("value".to_string(), self.value.range()));
        out
    }
}

/// Running observation statistics (parallel Welford merge).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningNorm {
    pub count: f64,
    pub mean: Vec<f64>,
    pub m2: Vec<f64>,
}

impl Default for RunningNorm {
    fn default() -> Self {
        Self {
            count: 0.0,
            mean: vec![0.0; OBS_DIM],
            m2: vec![0.0; OBS_DIM],
        }
    }
}

impl RunningNorm {
    pub fn update(&mut self, batch: &[[f64; OBS_DIM]]) {
        if batch.is_empty() {
            return;
        }
        let nb = batch.len() as f64;
        for j in 0..OBS_DIM {
            let mb = batch.iter().map(|x| x[j]).sum::<f64>() / nb;
            let m2b = batch.iter().map(|x| (x[j] - mb).powi(2)).sum::<f64>();
            let n = self.count + nb;
            let delta = mb - self.mean[j];
            self.mean[j] += delta * nb / n;
            self.m2[j] += m2b + delta * delta * self.count * nb / n;
        }
        self.count += nb;
    }

    pub fn std(&self, j: usize) -> f64 {
        if self.count < 2.0 {
            return 1.0;
        }
        (self.m2[j] / self.count + NORM_EPS).sqrt()
    }

    pub fn standardize(&self, x: &[f64; OBS_DIM]) -> [f64; OBS_DIM] {
        let mut z = [0.0; OBS_DIM];
        for j in 0..OBS_DIM {
            z[j] = (x[j] - self.mean[j]) / self.std(j);
        }
        z
    }
}

/// A policy input: observation plus the contact flag that selects the
/// feasible set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyInput {
    pub obs: [f64; OBS_DIM],
    pub contact: bool,
}

impl PolicyInput {
    pub fn new(obs: &Observation, contact: bool) -> Self {
        Self {
            obs: obs.to_array(),
            contact,
        }
    }
}

/// Everything one forward pass of one sample produced.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub log_prob: f64,
    pub log_prob_discrete: f64,
    pub log_prob_continuous: f64,
    pub entropy: f64,
    pub value: f64,
    cache: EvalCache,
}

#[derive(Debug, Clone)]
struct EvalCache {
    z: [f64; OBS_DIM],
    contact: bool,
    slot: usize,
    mp: usize,
    probs: Vec<f64>,
    log_probs: Vec<f64>,
    discrete: MlpCache,
    head: Option<(MlpCache, Vec<f64>)>,
    value: MlpCache,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub config: PolicyConfig,
    pub space: ActionSpace,
    pub layout: Layout,
    pub params: Vec<f64>,
    pub obs_norm: RunningNorm,
}

/// `log softmax` of `logits`.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|l| (l - m).exp()).sum::<f64>().ln();
    logits.iter().map(|l| l - lse).collect()
}

fn check_input(input: &PolicyInput) -> Result<()> {
    if input.obs.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("observation {:?}", input.obs)))
    }
}

pub fn gaussian_log_prob(x: f64, mean: f64, log_std: f64) -> f64 {
    let s = log_std.exp();
    let u = (x - mean) / s;
    -0.5 * u * u - log_std - 0.5 * LN_2PI
}

impl Policy {
    pub fn new(space: ActionSpace, config: PolicyConfig, rng: &mut impl Rng) -> Result<Self> {
        space.validate()?;
        config.validate()?;
        let layout = Layout::new(&space, &config);
        let mut params = vec![0.0; layout.total];
        params[layout.gamma..layout.gamma + OBS_DIM].fill(1.0);
        layout.free.init(&mut params, rng, config.head_init_gain);
        layout.contact.init(&mut params, rng, config.head_init_gain);
        for h in layout.heads.iter().flatten() {
            h.init(&mut params, rng, config.head_init_gain);
        }
        for (o, d) in layout.log_std.iter().zip(&space.dims) {
            if let Some(o) = o {
                params[*o..*o + d].fill(config.init_log_std);
            }
        }
        layout.value.init(&mut params, rng, 1.0);
        Ok(Self {
            config,
            space,
            layout,
            params,
            obs_norm: RunningNorm::default(),
        })
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn normalized(&self, obs: &[f64; OBS_DIM]) -> ([f64; OBS_DIM], [f64; OBS_DIM]) {
        let z = self.obs_norm.standardize(obs);
        let mut h = [0.0; OBS_DIM];
        for j in 0..OBS_DIM {
            h[j] = self.params[self.layout.gamma + j] * z[j] + self.params[self.layout.beta + j];
        }
        (z, h)
    }

    fn subnet(&self, contact: bool) -> &Mlp {
        if contact {
            &self.layout.contact
        } else {
            &self.layout.free
        }
    }

    /// Categorical distribution over the feasible set of `input`. Returned
    /// as a full-catalog probability vector (infeasible entries exactly 0).
    pub fn mp_probabilities(&self, input: &PolicyInput) -> Vec<f64> {
        let (_, h) = self.normalized(&input.obs);
        let logits = self.subnet(input.contact).forward(&self.params, &h);
        let lp = log_softmax(logits.output());
        let mut out = vec![0.0; self.space.dims.len()];
        for (slot, &mp) in self.space.feasible(input.contact).iter().enumerate() {
            out[mp] = lp[slot].exp();
        }
        out
    }

    /// Mean and log-std of primitive `mp`'s parameter Gaussian.
    pub fn param_distribution(&self, input: &PolicyInput, mp: usize) -> (Vec<f64>, Vec<f64>) {
        let (_, h) = self.normalized(&input.obs);
        match (&self.layout.heads[mp], self.layout.log_std[mp]) {
            (Some(head), Some(o)) => {
                let d = self.space.dims[mp];
                (head.forward(&self.params, &h).output().to_vec(), self.params[o..o + d].to_vec())
            }
            _ => (vec![], vec![]),
        }
    }

    pub fn value(&self, input: &PolicyInput) -> f64 {
        let (_, h) = self.normalized(&input.obs);
        self.layout.value.forward(&self.params, &h).output()[0]
    }

    /// Draws an action; `params` are the raw (unclipped) Gaussian samples in
    /// normalized units.
    pub fn sample(&self, input: &PolicyInput, rng: &mut impl Rng) -> Result<(HybridAction, f64, f64)> {
        check_input(input)?;
        let probs = self.mp_probabilities(input);
        let u: f64 = rng.random();
        let feasible = self.space.feasible(input.contact);
        let mut acc = 0.0;
        let mut mp = *feasible.last().expect("non-empty");
        for &i in feasible {
            acc += probs[i];
            if u < acc {
                mp = i;
                break;
            }
        }
        let (mean, log_std) = self.param_distribution(input, mp);
        let params: Vec<f64> = mean
            .iter()
            .zip(&log_std)
            .map(|(m, s)| m + s.exp() * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let action = HybridAction { mp_index: mp, params };
        let ev = self.evaluate(input, &action)?;
        Ok((action, ev.log_prob, ev.value))
    }

    /// Argmax primitive with mean parameters.
    pub fn act_deterministic(&self, input: &PolicyInput) -> HybridAction {
        let probs = self.mp_probabilities(input);
        let feasible = self.space.feasible(input.contact);
        let mut mp = feasible[0];
        for &i in feasible {
            if probs[i] > probs[mp] {
                mp = i;
            }
        }
        let (mean, _) = self.param_distribution(input, mp);
        HybridAction { mp_index: mp, params: mean }
    }

    /// Log-probability, entropy and value of `action` at `input`, keeping
    /// what [`Policy::backward`] needs. The entropy is the categorical
    /// entropy plus the chosen head's Gaussian entropy.
    pub fn evaluate(&self, input: &PolicyInput, action: &HybridAction) -> Result<Evaluation> {
        check_input(input)?;
        if action.params.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("action parameters".into()));
        }
        let feasible = self.space.feasible(input.contact);
        let slot = feasible
            .iter()
            .position(|&i| i == action.mp_index)
            .ok_or_else(|| Error::InfeasibleAction(format!("primitive {}", action.mp_index)))?;
        let mp = action.mp_index;
        if action.params.len() != self.space.dims[mp] {
            return Err(Error::InvalidArgument(format!(
                "primitive {mp} takes {} parameters, got {}",
                self.space.dims[mp],
                action.params.len()
            )));
        }
        let (z, h) = self.normalized(&input.obs);
        let discrete = self.subnet(input.contact).forward(&self.params, &h);
        let log_probs = log_softmax(discrete.output());
        let probs: Vec<f64> = log_probs.iter().map(|l| l.exp()).collect();
        let lp_d = log_probs[slot];
        let h_d = -probs.iter().zip(&log_probs).map(|(p, l)| p * l).sum::<f64>();

        let mut lp_c = 0.0;
        let mut h_c = 0.0;
        let head = match (&self.layout.heads[mp], self.layout.log_std[mp]) {
            (Some(head), Some(o)) => {
                let c = head.forward(&self.params, &h);
                let ls = &self.params[o..o + self.space.dims[mp]];
                for ((x, m), s) in action.params.iter().zip(c.output()).zip(ls) {
                    lp_c += gaussian_log_prob(*x, *m, *s);
                    h_c += 0.5 + 0.5 * LN_2PI + s;
                }
                Some((c, action.params.clone()))
            }
            _ => None,
        };
        let value = self.layout.value.forward(&self.params, &h);
        Ok(Evaluation {
            log_prob: lp_d + lp_c,
            log_prob_discrete: lp_d,
            log_prob_continuous: lp_c,
            entropy: h_d + h_c,
            value: value.output()[0],
            cache: EvalCache {
                z,
                contact: input.contact,
                slot,
                mp,
                probs,
                log_probs,
                discrete,
                head,
                value,
            },
        })
    }

    /// Accumulates into `grad` the gradient of
    /// `d_logp·log_prob + d_entropy·entropy + d_value·value`.
    pub fn backward(&self, ev: &Evaluation, d_logp: f64, d_entropy: f64, d_value: f64, grad: &mut [f64]) {
        let c = &ev.cache;
        let mut d_h = [0.0; OBS_DIM];
        let mut add = |v: Vec<f64>| {
            for (a, b) in d_h.iter_mut().zip(v) {
                *a += b;
            }
        };

        let h_d = -c.probs.iter().zip(&c.log_probs).map(|(p, l)| p * l).sum::<f64>();
        let d_logits: Vec<f64> = c
            .probs
            .iter()
            .zip(&c.log_probs)
            .enumerate()
            .map(|(j, (p, l))| {
                let onehot = if j == c.slot { 1.0 } else { 0.0 };
                d_logp * (onehot - p) - d_entropy * p * (l + h_d)
            })
            .collect();
        add(self.subnet(c.contact).backward(&self.params, &c.discrete, &d_logits, grad));

        if let (Some((hc, x)), Some(o)) = (&c.head, self.layout.log_std[c.mp]) {
            let head = self.layout.heads[c.mp].as_ref().expect("head");
            let d = x.len();
            let mean = hc.output();
            let mut d_mean = vec![0.0; d];
            for k in 0..d {
                let s = self.params[o + k];
                let var = (2.0 * s).exp();
                let u2 = (x[k] - mean[k]).powi(2) / var;
                d_mean[k] = d_logp * (x[k] - mean[k]) / var;
                grad[o + k] += d_logp * (u2 - 1.0) + d_entropy;
            }
            add(head.backward(&self.params, hc, &d_mean, grad));
        }

        if d_value != 0.0 {
            add(self.layout.value.backward(&self.params, &c.value, &[d_value], grad));
        }

        for j in 0..OBS_DIM {
            grad[self.layout.gamma + j] += d_h[j] * c.z[j];
            grad[self.layout.beta + j] += d_h[j];
        }
    }

    fn check(&self) -> std::result::Result<(), String> {
        if self.params.len() != self.layout.total || self.layout != Layout::new(&self.space, &self.config) {
            return Err("parameter layout mismatch".into());
        }
        if self.params.iter().any(|v| !v.is_finite()) {
            return Err("non-finite parameters".into());
        }
        Ok(())
    }
}

pub const CHECKPOINT_VERSION: u32 = 1;

/// On-disk policy snapshot (JSON, floats round-trip exactly).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config_hash: String,
    pub updates: usize,
    pub cum_sim_steps: u64,
    pub policy: Policy,
}

impl Checkpoint {
    pub fn new(policy: Policy, config_hash: impl Into<String>, updates: usize, cum_sim_steps: u64) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            config_hash: config_hash.into(),
            updates,
            cum_sim_steps,
            policy,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let s = serde_json::to_string(self).map_err(|e| Error::Checkpoint(e.to_string()))?;
        std::fs::write(path, s).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let c: Checkpoint =
            serde_json::from_str(&s).map_err(|e| Error::Checkpoint(format!("{}: {e}", path.display())))?;
        if c.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "{}: format version {} (expected {CHECKPOINT_VERSION})",
                path.display(),
                c.version
            )));
        }
        c.policy
            .check()
            .map_err(|m| Error::Checkpoint(format!("{}: {m}", path.display())))?;
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primitives::{build_catalog, CatalogConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn policy(seed: u64) -> Policy {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let space = ActionSpace::from_catalog(&build_catalog(&CatalogConfig::default()));
        Policy::new(space, PolicyConfig::default(), &mut rng).unwrap()
    }

    fn random_input(rng: &mut impl Rng) -> PolicyInput {
        let mut obs = [0.0; OBS_DIM];
        for o in &mut obs {
            *o = rng.random_range(-2.0..2.0);
        }
        PolicyInput { obs, contact: rng.random() }
    }

    #[test]
    fn initial_state() {
        let p = policy(0);
        for (o, d) in p.layout.log_std.iter().zip(&p.space.dims) {
            if let Some(o) = o {
                assert!(p.params[*o..o + d].iter().all(|&s| s == 0.5f64.ln()));
            }
        }
        assert_eq!(p.layout.total, p.params.len());
        let blocks = p.layout.blocks();
        // 2 norm + 2 discrete + 12 heads + 12 log-std + value
        assert_eq!(blocks.len(), 29);
        let mut covered: Vec<_> = blocks.iter().flat_map(|(_, r)| r.clone()).collect();
        covered.sort();
        assert_eq!(covered, (0..p.layout.total).collect::<Vec<_>>());
    }

    #[test]
    fn infeasible_primitives_have_zero_probability() {
        let p = policy(1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let input = random_input(&mut rng);
            let probs = p.mp_probabilities(&input);
            let feasible = p.space.feasible(input.contact);
            for (i, pr) in probs.iter().enumerate() {
                if !feasible.contains(&i) {
                    assert_eq!(*pr, 0.0);
                }
            }
            assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let (a, _, _) = p.sample(&input, &mut rng).unwrap();
            assert!(feasible.contains(&a.mp_index));
        }
    }

    #[test]
    fn running_norm_matches_direct_statistics() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data: Vec<[f64; OBS_DIM]> = (0..300)
            .map(|_| {
                let mut x = [0.0; OBS_DIM];
                for (j, v) in x.iter_mut().enumerate() {
                    *v = rng.random_range(-1.0..1.0) * (j + 1) as f64 + j as f64;
                }
                x
            })
            .collect();
        let mut n = RunningNorm::default();
        n.update(&data[..17]);
        n.update(&data[17..200]);
        n.update(&data[200..]);
        for j in 0..OBS_DIM {
            let m = data.iter().map(|x| x[j]).sum::<f64>() / 300.0;
            let v = data.iter().map(|x| (x[j] - m).powi(2)).sum::<f64>() / 300.0;
            assert!((n.mean[j] - m).abs() < 1e-12);
            assert!((n.std(j) - (v + NORM_EPS).sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn checkpoint_round_trip_is_bit_identical() {
        let mut p = policy(4);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        p.obs_norm.update(&[[0.3; OBS_DIM], [0.1; OBS_DIM], [-0.7; OBS_DIM]]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.json");
        Checkpoint::new(p.clone(), "abc", 3, 99).save(&path).unwrap();
        let c = Checkpoint::load(&path).unwrap();
        assert_eq!((c.config_hash.as_str(), c.updates, c.cum_sim_steps), ("abc", 3, 99));
        let q = c.policy;
        assert_eq!(p, q);
        for _ in 0..50 {
            let input = random_input(&mut rng);
            assert_eq!(p.mp_probabilities(&input), q.mp_probabilities(&input));
            assert_eq!(p.value(&input).to_bits(), q.value(&input).to_bits());
        }
    }

    #[test]
    fn non_finite_observation_is_rejected() {
        let p = policy(8);
        let mut input = PolicyInput { obs: [0.0; OBS_DIM], contact: false };
        input.obs[3] = f64::NAN;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(p.sample(&input, &mut rng), Err(Error::NonFinite(_))));
    }

    #[test]
    fn truncated_checkpoint_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.json");
        std::fs::write(&path, "{\"config\":").unwrap();
        assert!(matches!(Checkpoint::load(&path), Err(Error::Checkpoint(_))));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut p = policy(6);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        p.obs_norm.update(&[[0.5; OBS_DIM], [-0.2; OBS_DIM], [0.9; OBS_DIM]]);
        let input = PolicyInput { contact: true, ..random_input(&mut rng) };
        let action = HybridAction { mp_index: 12, params: vec![0.3, -0.4, 1.2] };
        let (a, b, c) = (0.7, -0.3, 0.9);
        let f = |p: &Policy| {
            let e = p.evaluate(&input, &action).unwrap();
            a * e.log_prob + b * e.entropy + c * e.value
        };
        let mut grad = vec![0.0; p.num_params()];
        p.backward(&p.evaluate(&input, &action).unwrap(), a, b, c, &mut grad);
        for (name, range) in p.layout.blocks() {
            if name == "discrete.free" || (name.starts_with("head.") || name.starts_with("log_std.")) && !name.ends_with(".12") {
                assert!(grad[range].iter().all(|g| *g == 0.0), "{name}");
                continue;
            }
            for i in range.step_by(7) {
                let h = 1e-6;
                let orig = p.params[i];
                p.params[i] = orig + h;
                let fp = f(&p);
                p.params[i] = orig - h;
                let fm = f(&p);
                p.params[i] = orig;
                let fd = (fp - fm) / (2.0 * h);
                assert!((fd - grad[i]).abs() <= 1e-6 * (1.0 + fd.abs()), "{name}[{i}]: {fd} vs {}", grad[i]);
            }
        }
    }
}
