//! On-policy training: generalized advantage estimation, rollout collection
//! over parallel environments, and the clipped-surrogate update with an
//! entropy bonus, optimized by Adam.

use rand::seq::SliceRandom as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mlp::{ACT_DIM, MlpPolicy};
use crate::env::{Env, EpisodeConfig, Outcome};
use crate::{Error, Result, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PpoConfig {
    pub batch_size: usize,
    pub minibatch_size: usize,
    /// Discount factor gamma.
    pub discount: f64,
    pub gae_lambda: f64,
    pub clip_epsilon: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub learning_rate: f64,
    /// Optimization epochs per collected batch.
    pub epochs: usize,
    pub max_grad_norm: f64,
    /// Environments stepped per batch; fixed by config, not by thread count.
    pub num_envs: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            batch_size: 5000,
            minibatch_size: 500,
            discount: 0.99,
            gae_lambda: 0.95,
            clip_epsilon: 0.2,
            entropy_coef: 0.01,
            value_coef: 0.5,
            learning_rate: 3e-4,
            epochs: 4,
            max_grad_norm: 0.5,
            num_envs: 8,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.minibatch_size == 0 || self.batch_size % self.minibatch_size != 0 {
            return Err(Error::Contract(
                "minibatch size must divide batch size".into(),
            ));
        }
        if !(0.0 < self.discount && self.discount <= 1.0) {
            return Err(Error::Contract("discount must be in (0, 1]".into()));
        }
        if self.num_envs == 0 || self.batch_size % self.num_envs != 0 {
            return Err(Error::Contract("num_envs must divide batch size".into()));
        }
        Ok(())
    }
}

/// One stored transition.
#[derive(Debug, Clone)]
pub struct Transition {
    pub obs: Vec<f64>,
    /// Pre-squash action vector.
    pub u: [f64; ACT_DIM],
    pub terminate: bool,
    pub log_prob: f64,
    pub value: f64,
    pub reward: f64,
    pub done: bool,
}

#[derive(Debug, Clone, Default)]
pub struct RolloutBatch {
    pub transitions: Vec<Transition>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    pub episode_returns: Vec<f64>,
    pub episode_outcomes: Vec<Outcome>,
}

impl RolloutBatch {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }
}

/// Generalized advantage estimation over one contiguous segment. `bootstrap`
/// is the value estimate of the state after the final transition (0 when it
/// ended an episode). Returns (advantages, returns = advantages + values).
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    let mut next_val = bootstrap;
    for t in (0..n).rev() {
        let nonterminal = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_val * nonterminal - values[t];
        next_adv = delta + gamma * lambda * nonterminal * next_adv;
        adv[t] = next_adv;
        next_val = values[t];
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, ret)
}

/// Run `cfg.batch_size` env steps split evenly over `cfg.num_envs` parallel
/// environments and assemble the training batch. Deterministic in
/// (policy, configs, seed_base, iteration) regardless of thread count.
pub fn collect_rollouts(
    env_cfg: &EpisodeConfig,
    cfg: &PpoConfig,
    policy: &MlpPolicy,
    seed_base: u64,
    iteration: usize,
) -> Result<RolloutBatch> {
    cfg.validate()?;
    let steps_each = cfg.batch_size / cfg.num_envs;

    struct Segment {
        transitions: Vec<Transition>,
        bootstrap: f64,
        episode_returns: Vec<f64>,
        episode_outcomes: Vec<Outcome>,
    }

    let segments: Vec<Result<Segment>> = (0..cfg.num_envs)
        .into_par_iter()
        .map(|e| {
            let lane = (iteration as u64) << 24 | (e as u64) << 16;
            let ep_seed =
                |k: u64| seed_base ^ 0x526f6c6c ^ (lane | k).wrapping_mul(0x9e3779b97f4a7c15);
            let mut act_rng: Rng = crate::seeded_rng(seed_base ^ 0xac7 ^ lane);
            let mut episode = 0u64;
            let mut env = Env::reset(env_cfg, ep_seed(episode))?;
            let mut ep_return = 0.0;
            let mut transitions = Vec::with_capacity(steps_each);
            let mut episode_returns = Vec::new();
            let mut episode_outcomes = Vec::new();
            let mut last_done = false;
            for _ in 0..steps_each {
                let cache = policy.forward_cached(&env.observation().0);
                let (u, term) = policy.sample(&cache.out, &mut act_rng);
                let log_prob = MlpPolicy::log_prob(&cache.out, &u, term);
                let action = MlpPolicy::action_from(&u, term);
                let obs = env.observation().0.clone();
                let res = env.step(&action)?;
                ep_return += res.reward;
                transitions.push(Transition {
                    obs,
                    u,
                    terminate: term,
                    log_prob,
                    value: cache.out.value,
                    reward: res.reward,
                    done: res.done,
                });
                last_done = res.done;
                if res.done {
                    episode_returns.push(ep_return);
                    episode_outcomes.push(res.outcome);
                    ep_return = 0.0;
                    episode += 1;
                    env = Env::reset(env_cfg, ep_seed(episode))?;
                }
            }
            let bootstrap = if last_done {
                0.0
            } else {
                policy.forward(&env.observation().0).value
            };
            Ok(Segment {
                transitions,
                bootstrap,
                episode_returns,
                episode_outcomes,
            })
        })
        .collect();

    let mut batch = RolloutBatch::default();
    for seg in segments {
        let seg = seg?;
        let rewards: Vec<f64> = seg.transitions.iter().map(|t| t.reward).collect();
        let values: Vec<f64> = seg.transitions.iter().map(|t| t.value).collect();
        let dones: Vec<bool> = seg.transitions.iter().map(|t| t.done).collect();
        let (adv, ret) = gae(
            &rewards,
            &values,
            &dones,
            seg.bootstrap,
            cfg.discount,
            cfg.gae_lambda,
        );
        batch.transitions.extend(seg.transitions);
        batch.advantages.extend(adv);
        batch.returns.extend(ret);
        batch.episode_returns.extend(seg.episode_returns);
        batch.episode_outcomes.extend(seg.episode_outcomes);
    }
    normalize_advantages(&mut batch.advantages);
    Ok(batch)
}

/// Zero-mean, unit-variance advantage normalization with a degenerate-batch
/// guard (all-equal advantages are centered only).
pub fn normalize_advantages(adv: &mut [f64]) {
    if adv.is_empty() {
        return;
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    for a in adv.iter_mut() {
        *a -= mean;
        if std > 1e-8 {
            *a /= std;
        }
    }
}

/// Adam optimizer over the flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(lr: f64, n: usize) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-5,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let b1c = 1.0 - self.beta1.powi(self.t as i32);
        let b2c = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let mhat = self.m[i] / b1c;
            let vhat = self.v[i] / b2c;
            params[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct PpoStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub approx_kl: f64,
}

/// Mean loss and per-parameter gradient over the indexed minibatch.
/// Loss = clipped surrogate + value_coef * value MSE - entropy_coef * entropy.
pub fn minibatch_loss_and_grad(
    policy: &MlpPolicy,
    batch: &RolloutBatch,
    indices: &[usize],
    cfg: &PpoConfig,
    grad: Option<&mut Vec<f64>>,
) -> (f64, PpoStats) {
    let scale = 1.0 / indices.len() as f64;
    let mut loss = 0.0;
    let mut stats = PpoStats::default();
    let mut grad = grad;
    for &i in indices {
        let t = &batch.transitions[i];
        let adv = batch.advantages[i];
        let ret = batch.returns[i];
        let cache = policy.forward_cached(&t.obs);
        let out = &cache.out;
        let lp = MlpPolicy::log_prob(out, &t.u, t.terminate);
        let ratio = (lp - t.log_prob).exp();
        let clipped = ratio.clamp(1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon);
        let surr1 = ratio * adv;
        let surr2 = clipped * adv;
        let pg = -surr1.min(surr2);
        let verr = out.value - ret;
        let vloss = 0.5 * verr * verr;
        let ent = MlpPolicy::entropy(out);
        loss += scale * (pg + cfg.value_coef * vloss - cfg.entropy_coef * ent);

        stats.policy_loss += scale * pg;
        stats.value_loss += scale * vloss;
        stats.entropy += scale * ent;
        stats.approx_kl += scale * (t.log_prob - lp);
        if (ratio - 1.0).abs() > cfg.clip_epsilon {
            stats.clip_fraction += scale;
        }

        if let Some(g) = grad.as_deref_mut() {
            // d pg / d log_prob: gradient flows through the active branch;
            // outside the clip band with the clipped branch active it is zero.
            let d_lp = if surr1 <= surr2 {
                -ratio * adv
            } else if (ratio - (1.0 - cfg.clip_epsilon)) > 0.0
                && ((1.0 + cfg.clip_epsilon) - ratio) > 0.0
            {
                -ratio * adv
            } else {
                0.0
            };
            let (mut d_mean, mut d_log_std, d_term_lp) =
                MlpPolicy::log_prob_grad(out, &t.u, t.terminate);
            for v in d_mean.iter_mut() {
                *v *= d_lp * scale;
            }
            for v in d_log_std.iter_mut() {
                *v *= d_lp * scale;
            }
            let mut d_term = d_term_lp * d_lp * scale;

            let (ent_ls, ent_term) = MlpPolicy::entropy_grad(out);
            for (v, e) in d_log_std.iter_mut().zip(ent_ls.iter()) {
                *v -= cfg.entropy_coef * e * scale;
            }
            d_term -= cfg.entropy_coef * ent_term * scale;

            let d_value = cfg.value_coef * verr * scale;
            policy.backward(&cache, &d_mean, &d_log_std, d_value, d_term, g);
        }
    }
    (loss, stats)
}

/// One PPO update over the batch: `epochs` passes of shuffled minibatches.
/// Errors (without touching the parameters further) if a loss goes
/// non-finite.
pub fn ppo_update(
    policy: &mut MlpPolicy,
    opt: &mut Adam,
    batch: &RolloutBatch,
    cfg: &PpoConfig,
    rng: &mut Rng,
) -> Result<PpoStats> {
    cfg.validate()?;
    let n = batch.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut grad = vec![0.0; policy.layout.total()];
    let mut agg = PpoStats::default();
    let mut updates = 0usize;
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for mb in order.chunks(cfg.minibatch_size.min(n.max(1))) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let (loss, stats) = minibatch_loss_and_grad(policy, batch, mb, cfg, Some(&mut grad));
            if !loss.is_finite() {
                return Err(Error::Contract(
                    "non-finite PPO loss; update aborted".into(),
                ));
            }
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm > cfg.max_grad_norm {
                let s = cfg.max_grad_norm / norm;
                grad.iter_mut().for_each(|g| *g *= s);
            }
            opt.step(&mut policy.params, &grad);
            policy.clamp_log_std();
            agg.policy_loss += stats.policy_loss;
            agg.value_loss += stats.value_loss;
            agg.entropy += stats.entropy;
            agg.clip_fraction += stats.clip_fraction;
            agg.approx_kl += stats.approx_kl;
            updates += 1;
        }
    }
    let k = updates.max(1) as f64;
    agg.policy_loss /= k;
    agg.value_loss /= k;
    agg.entropy /= k;
    agg.clip_fraction /= k;
    agg.approx_kl /= k;
    Ok(agg)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub episode: EpisodeConfig,
    pub ppo: PpoConfig,
    pub total_steps: usize,
    pub hidden: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct IterStats {
    pub iteration: usize,
    pub env_steps: usize,
    pub episodes: usize,
    pub mean_return: f64,
    pub success_rate: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub approx_kl: f64,
}

pub struct TrainRun {
    pub policy: MlpPolicy,
    pub history: Vec<IterStats>,
}

/// Full training loop; `on_iter` observes per-iteration statistics (metrics
/// CSV, checkpointing, progress printing).
pub fn train(
    cfg: &TrainConfig,
    mut on_iter: impl FnMut(&IterStats, &MlpPolicy),
) -> Result<TrainRun> {
    cfg.ppo.validate()?;
    let mut env_cfg = cfg.episode.clone();
    env_cfg.resolve_explore_scale();
    let mut policy = MlpPolicy::init(cfg.hidden, cfg.seed);
    let mut opt = Adam::new(cfg.ppo.learning_rate, policy.layout.total());
    let mut update_rng = crate::seeded_rng(cfg.seed ^ 0x555044);
    let iterations = cfg.total_steps / cfg.ppo.batch_size;
    let mut history = Vec::with_capacity(iterations);
    for iter in 0..iterations {
        let batch = collect_rollouts(&env_cfg, &cfg.ppo, &policy, cfg.seed, iter)?;
        let stats = ppo_update(&mut policy, &mut opt, &batch, &cfg.ppo, &mut update_rng)?;
        let episodes = batch.episode_returns.len();
        let mean_return = if episodes > 0 {
            batch.episode_returns.iter().sum::<f64>() / episodes as f64
        } else {
            f64::NAN
        };
        let successes = batch
            .episode_outcomes
            .iter()
            .filter(|o| o.is_success())
            .count();
        let it = IterStats {
            iteration: iter,
            env_steps: (iter + 1) * cfg.ppo.batch_size,
            episodes,
            mean_return,
            success_rate: if episodes > 0 {
                successes as f64 / episodes as f64
            } else {
                0.0
            },
            entropy: stats.entropy,
            clip_fraction: stats.clip_fraction,
            policy_loss: stats.policy_loss,
            value_loss: stats.value_loss,
            approx_kl: stats.approx_kl,
        };
        on_iter(&it, &policy);
        history.push(it);
    }
    Ok(TrainRun { policy, history })
}
