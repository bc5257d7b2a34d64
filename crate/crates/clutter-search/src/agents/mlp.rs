//! Actor-critic multilayer perceptron with hand-written backpropagation.
//!
//! Two tanh hidden layers feed four heads: the action mean (5 continuous
//! dimensions), a state-independent log-std vector, a value estimate, and a
//! terminate logit. Continuous actions are squashed through tanh and scaled
//! to the per-dimension limits; termination is an independent Bernoulli.
//! Parameters live in one flat vector so gradients, the optimizer, and
//! finite-difference checks all share the same indexing.

use std::io::{Read, Write};

use rand::RngExt as _;
use rand_distr::{Distribution, StandardNormal};

use crate::encoder::STATE_LEN;
use crate::env::{Action, MAX_ROTATION, MAX_TRANSLATION};
use crate::{Error, Result, Rng};

/// Continuous action dimensions (dx, dy, dz, droll, dyaw).
pub const ACT_DIM: usize = 5;
/// Per-dimension action scale applied after the tanh squash.
pub const ACTION_LIMITS: [f64; ACT_DIM] = [
    MAX_TRANSLATION,
    MAX_TRANSLATION,
    MAX_TRANSLATION,
    MAX_ROTATION,
    MAX_ROTATION,
];
/// Bounds enforced on the log-std parameters after every update.
pub const LOG_STD_RANGE: (f64, f64) = (-5.0, 2.0);

const LN_2PI: f64 = 1.8378770664093453;

/// Flat parameter layout offsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub input: usize,
    pub hidden: usize,
}

impl Layout {
    pub fn new(hidden: usize) -> Self {
        Self {
            input: STATE_LEN,
            hidden,
        }
    }

    pub fn w1(&self) -> usize {
        0
    }
    pub fn b1(&self) -> usize {
        self.w1() + self.hidden * self.input
    }
    pub fn w2(&self) -> usize {
        self.b1() + self.hidden
    }
    pub fn b2(&self) -> usize {
        self.w2() + self.hidden * self.hidden
    }
    pub fn w_mean(&self) -> usize {
        self.b2() + self.hidden
    }
    pub fn b_mean(&self) -> usize {
        self.w_mean() + ACT_DIM * self.hidden
    }
    pub fn log_std(&self) -> usize {
        self.b_mean() + ACT_DIM
    }
    pub fn w_value(&self) -> usize {
        self.log_std() + ACT_DIM
    }
    pub fn b_value(&self) -> usize {
        self.w_value() + self.hidden
    }
    pub fn w_term(&self) -> usize {
        self.b_value() + 1
    }
    pub fn b_term(&self) -> usize {
        self.w_term() + self.hidden
    }
    pub fn total(&self) -> usize {
        self.b_term() + 1
    }
}

/// Head outputs for one state.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOut {
    pub mean: [f64; ACT_DIM],
    pub log_std: [f64; ACT_DIM],
    pub value: f64,
    pub term_logit: f64,
}

/// Activations cached for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub x: Vec<f64>,
    pub h1: Vec<f64>,
    pub h2: Vec<f64>,
    pub out: PolicyOut,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpPolicy {
    pub layout: Layout,
    pub params: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 { x } else { x.exp().ln_1p() }
}

/// log(1 - tanh(u)^2), stable for large |u|.
fn ln_sech2(u: f64) -> f64 {
    let a = u.abs();
    2.0 * (std::f64::consts::LN_2 - a - softplus(-2.0 * a))
}

impl MlpPolicy {
    /// All-zero parameters: zero means, value 0, terminate probability 1/2.
    pub fn zeros(hidden: usize) -> Self {
        let layout = Layout::new(hidden);
        Self {
            params: vec![0.0; layout.total()],
            layout,
        }
    }

    /// Seeded initialization: uniform Xavier hidden layers, small head
    /// weights, log-std 0, and a terminate bias pushed negative so fresh
    /// policies rarely end episodes by accident.
    pub fn init(hidden: usize, seed: u64) -> Self {
        let mut p = Self::zeros(hidden);
        let mut rng = crate::seeded_rng(seed);
        let l = p.layout;
        let mut fill = |range: std::ops::Range<usize>, scale: f64, rng: &mut Rng| {
            for i in range {
                p.params[i] = rng.random_range(-scale..scale);
            }
        };
        let xav = |fan_in: usize, fan_out: usize| (6.0 / (fan_in + fan_out) as f64).sqrt();
        fill(l.w1()..l.b1(), xav(l.input, hidden), &mut rng);
        fill(l.w2()..l.b2(), xav(hidden, hidden), &mut rng);
        fill(l.w_mean()..l.b_mean(), 0.01, &mut rng);
        fill(l.w_value()..l.b_value(), xav(hidden, 1), &mut rng);
        fill(l.w_term()..l.b_term(), 0.01, &mut rng);
        p.params[l.b_term()] = -2.0;
        p
    }

    pub fn hidden(&self) -> usize {
        self.layout.hidden
    }

    pub fn forward(&self, x: &[f64]) -> PolicyOut {
        self.forward_cached(x).out
    }

    pub fn forward_cached(&self, x: &[f64]) -> ForwardCache {
        assert_eq!(x.len(), self.layout.input, "bad state length");
        assert!(x.iter().all(|v| v.is_finite()), "non-finite state");
        let l = self.layout;
        let p = &self.params;
        let h = l.hidden;
        let mut h1 = vec![0.0; h];
        for i in 0..h {
            let row = l.w1() + i * l.input;
            let mut acc = p[l.b1() + i];
            for j in 0..l.input {
                acc += p[row + j] * x[j];
            }
            h1[i] = acc.tanh();
        }
        let mut h2 = vec![0.0; h];
        for i in 0..h {
            let row = l.w2() + i * h;
            let mut acc = p[l.b2() + i];
            for j in 0..h {
                acc += p[row + j] * h1[j];
            }
            h2[i] = acc.tanh();
        }
        let mut mean = [0.0; ACT_DIM];
        for i in 0..ACT_DIM {
            let row = l.w_mean() + i * h;
            let mut acc = p[l.b_mean() + i];
            for j in 0..h {
                acc += p[row + j] * h2[j];
            }
            mean[i] = acc;
        }
        let mut log_std = [0.0; ACT_DIM];
        log_std.copy_from_slice(&p[l.log_std()..l.log_std() + ACT_DIM]);
        let mut value = p[l.b_value()];
        for j in 0..h {
            value += p[l.w_value() + j] * h2[j];
        }
        let mut term_logit = p[l.b_term()];
        for j in 0..h {
            term_logit += p[l.w_term() + j] * h2[j];
        }
        ForwardCache {
            x: x.to_vec(),
            h1,
            h2,
            out: PolicyOut {
                mean,
                log_std,
                value,
                term_logit,
            },
        }
    }

    /// Accumulate parameter gradients for head-level upstream gradients.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        d_mean: &[f64; ACT_DIM],
        d_log_std: &[f64; ACT_DIM],
        d_value: f64,
        d_term: f64,
        grad: &mut [f64],
    ) {
        let l = self.layout;
        let h = l.hidden;
        let p = &self.params;
        let mut dh2 = vec![0.0; h];
        for i in 0..ACT_DIM {
            let row = l.w_mean() + i * h;
            for j in 0..h {
                grad[row + j] += d_mean[i] * cache.h2[j];
                dh2[j] += d_mean[i] * p[row + j];
            }
            grad[l.b_mean() + i] += d_mean[i];
            grad[l.log_std() + i] += d_log_std[i];
        }
        for j in 0..h {
            grad[l.w_value() + j] += d_value * cache.h2[j];
            dh2[j] += d_value * p[l.w_value() + j];
            grad[l.w_term() + j] += d_term * cache.h2[j];
            dh2[j] += d_term * p[l.w_term() + j];
        }
        grad[l.b_value()] += d_value;
        grad[l.b_term()] += d_term;

        let mut dh1 = vec![0.0; h];
        for i in 0..h {
            let dz = dh2[i] * (1.0 - cache.h2[i] * cache.h2[i]);
            let row = l.w2() + i * h;
            for j in 0..h {
                grad[row + j] += dz * cache.h1[j];
                dh1[j] += dz * p[row + j];
            }
            grad[l.b2() + i] += dz;
        }
        for i in 0..h {
            let dz = dh1[i] * (1.0 - cache.h1[i] * cache.h1[i]);
            let row = l.w1() + i * l.input;
            for j in 0..l.input {
                grad[row + j] += dz * cache.x[j];
            }
            grad[l.b1() + i] += dz;
        }
    }

    /// Sample a pre-squash action vector and terminate bit.
    pub fn sample(&self, out: &PolicyOut, rng: &mut Rng) -> ([f64; ACT_DIM], bool) {
        let mut u = [0.0; ACT_DIM];
        for i in 0..ACT_DIM {
            let z: f64 = StandardNormal.sample(rng);
            u[i] = out.mean[i] + out.log_std[i].exp() * z;
        }
        let terminate = rng.random_range(0.0..1.0) < sigmoid(out.term_logit);
        (u, terminate)
    }

    /// Map a pre-squash vector and terminate bit to the env action.
    pub fn action_from(u: &[f64; ACT_DIM], terminate: bool) -> Action {
        Action {
            dx: ACTION_LIMITS[0] * u[0].tanh(),
            dy: ACTION_LIMITS[1] * u[1].tanh(),
            dz: ACTION_LIMITS[2] * u[2].tanh(),
            droll: ACTION_LIMITS[3] * u[3].tanh(),
            dyaw: ACTION_LIMITS[4] * u[4].tanh(),
            terminate,
        }
    }

    /// Greedy action: squashed mean, terminate when its probability passes 1/2.
    pub fn greedy_action(&self, out: &PolicyOut) -> Action {
        let mut u = [0.0; ACT_DIM];
        u.copy_from_slice(&out.mean);
        Self::action_from(&u, out.term_logit > 0.0)
    }

    /// Log-probability of the squashed action identified by (u, terminate):
    /// diagonal Gaussian density of u, minus the tanh-and-scale change of
    /// variables, plus the Bernoulli term.
    pub fn log_prob(out: &PolicyOut, u: &[f64; ACT_DIM], terminate: bool) -> f64 {
        let mut lp = 0.0;
        for i in 0..ACT_DIM {
            let std = out.log_std[i].exp();
            let z = (u[i] - out.mean[i]) / std;
            lp += -0.5 * z * z - out.log_std[i] - 0.5 * LN_2PI;
            lp -= ACTION_LIMITS[i].ln() + ln_sech2(u[i]);
        }
        lp += if terminate {
            -softplus(-out.term_logit)
        } else {
            -softplus(out.term_logit)
        };
        lp
    }

    /// Gradient of [`Self::log_prob`] with respect to the head outputs.
    pub fn log_prob_grad(
        out: &PolicyOut,
        u: &[f64; ACT_DIM],
        terminate: bool,
    ) -> ([f64; ACT_DIM], [f64; ACT_DIM], f64) {
        let mut d_mean = [0.0; ACT_DIM];
        let mut d_log_std = [0.0; ACT_DIM];
        for i in 0..ACT_DIM {
            let std = out.log_std[i].exp();
            let z = (u[i] - out.mean[i]) / std;
            d_mean[i] = z / std;
            d_log_std[i] = z * z - 1.0;
        }
        let p = sigmoid(out.term_logit);
        let d_term = if terminate { 1.0 - p } else { -p };
        (d_mean, d_log_std, d_term)
    }

    /// Policy entropy surrogate: diagonal-Gaussian entropy of the pre-squash
    /// distribution plus the Bernoulli entropy of the terminate head.
    pub fn entropy(out: &PolicyOut) -> f64 {
        let mut e = 0.0;
        for i in 0..ACT_DIM {
            e += out.log_std[i] + 0.5 * (1.0 + LN_2PI);
        }
        let p = sigmoid(out.term_logit);
        if p > 0.0 && p < 1.0 {
            e += -p * p.ln() - (1.0 - p) * (1.0 - p).ln();
        }
        e
    }

    /// Gradient of [`Self::entropy`] w.r.t. (log_std, term_logit).
    pub fn entropy_grad(out: &PolicyOut) -> ([f64; ACT_DIM], f64) {
        let p = sigmoid(out.term_logit);
        ([1.0; ACT_DIM], -out.term_logit * p * (1.0 - p))
    }

    pub fn clamp_log_std(&mut self) {
        let l = self.layout;
        for i in l.log_std()..l.log_std() + ACT_DIM {
            self.params[i] = self.params[i].clamp(LOG_STD_RANGE.0, LOG_STD_RANGE.1);
        }
    }

    /// Checkpoint layout: magic `CSPOL1\n`, u64 hidden, u64 param count,
    /// little-endian f64 parameters.
    pub fn save(&self, mut w: impl Write) -> Result<()> {
        w.write_all(b"CSPOL1\n")?;
        w.write_all(&(self.layout.hidden as u64).to_le_bytes())?;
        w.write_all(&(self.params.len() as u64).to_le_bytes())?;
        for v in &self.params {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn load(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 7];
        r.read_exact(&mut magic)?;
        if &magic != b"CSPOL1\n" {
            return Err(Error::Format {
                format: "policy checkpoint",
                detail: "bad magic".into(),
            });
        }
        let mut buf = [0u8; 8];
        r.read_exact(&mut buf)?;
        let hidden = u64::from_le_bytes(buf) as usize;
        r.read_exact(&mut buf)?;
        let count = u64::from_le_bytes(buf) as usize;
        let layout = Layout::new(hidden);
        if count != layout.total() {
            return Err(Error::Format {
                format: "policy checkpoint",
                detail: format!("parameter count {count} does not match hidden size {hidden}"),
            });
        }
        let mut params = vec![0.0; count];
        for v in params.iter_mut() {
            r.read_exact(&mut buf)?;
            *v = f64::from_le_bytes(buf);
        }
        Ok(Self { layout, params })
    }
}

/// Evaluation-time agent wrapping a policy.
pub struct PolicyAgent {
    pub policy: MlpPolicy,
    pub deterministic: bool,
    rng: Rng,
}

impl PolicyAgent {
    pub fn new(policy: MlpPolicy, deterministic: bool) -> Self {
        Self {
            policy,
            deterministic,
            rng: crate::seeded_rng(0),
        }
    }
}

impl super::Agent for PolicyAgent {
    fn name(&self) -> &'static str {
        "ppo"
    }

    fn begin_episode(&mut self, _env: &crate::env::Env, seed: u64) {
        self.rng = crate::seeded_rng(seed ^ 0x504f4c49);
    }

    fn act(&mut self, env: &crate::env::Env) -> Action {
        let out = self.policy.forward(&env.observation().0);
        if self.deterministic {
            self.policy.greedy_action(&out)
        } else {
            let (u, term) = self.policy.sample(&out, &mut self.rng);
            MlpPolicy::action_from(&u, term)
        }
    }
}
