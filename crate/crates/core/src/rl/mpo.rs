//! Off-policy actor-critic updates: maximum a posteriori policy optimization
//! with decoupled KL trust regions, and an advantage-weighted regression
//! fallback behind the same interface.
//!
//! The critic is an action-value network Q(s, a) evaluated on the normalized
//! observation and tanh of the pre-squash action. Sampled actions in the
//! E-step are scored by the target critic directly.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::buffer::StoredTransition;
use super::mlp::{Adam, Mlp, MlpSpec};
use super::policy::{ActionBounds, GaussianPolicy, PolicyOutput, ACTION_DIM, OBS_DIM};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    #[default]
    Mpo,
    Awr,
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mpo" => Ok(Algorithm::Mpo),
            "awr" => Ok(Algorithm::Awr),
            other => Err(Error::Config(format!("unknown algorithm '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpoConfig {
    pub algorithm: Algorithm,
    pub hidden: Vec<usize>,
    pub gamma: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Transitions stored before the first update.
    pub warmup: usize,
    /// Gradient steps per environment step.
    pub updates_per_step: usize,
    /// Actions sampled per state in the E-step.
    pub action_samples: usize,
    /// Next-state actions averaged in the critic target.
    pub target_samples: usize,
    /// E-step KL bound.
    pub epsilon: f64,
    pub epsilon_mean: f64,
    pub epsilon_cov: f64,
    pub alpha_mean_init: f64,
    pub alpha_cov_init: f64,
    pub dual_lr: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub max_grad_norm: f64,
    pub target_period: u64,
    /// Halvings tried before a policy step violating the trust region is
    /// rejected.
    pub backtrack_steps: usize,
    /// Multiplies rewards inside the learner only.
    pub reward_scale: f64,
    /// Fixed temperature of the regression fallback.
    pub awr_temperature: f64,
}

impl Default for MpoConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Mpo,
            hidden: vec![64, 64, 64],
            gamma: 0.99,
            batch_size: 256,
            buffer_capacity: 100_000,
            warmup: 256,
            updates_per_step: 1,
            action_samples: 20,
            target_samples: 8,
            epsilon: 0.1,
            epsilon_mean: 0.05,
            epsilon_cov: 1e-3,
            alpha_mean_init: 1.0,
            alpha_cov_init: 10.0,
            dual_lr: 1.0,
            actor_lr: 3e-4,
            critic_lr: 3e-4,
            max_grad_norm: 10.0,
            target_period: 100,
            backtrack_steps: 20,
            reward_scale: 0.01,
            awr_temperature: 0.1,
        }
    }
}

impl MpoConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = [
            self.epsilon,
            self.dual_lr,
            self.actor_lr,
            self.critic_lr,
            self.reward_scale,
            self.awr_temperature,
        ];
        if !(self.gamma > 0.0 && self.gamma < 1.0)
            || pos.iter().any(|v| !(*v > 0.0))
            || !(self.epsilon_mean >= 0.0 && self.epsilon_cov >= 0.0)
            || !(self.alpha_mean_init >= 0.0 && self.alpha_cov_init >= 0.0)
            || self.batch_size == 0
            || self.buffer_capacity == 0
            || self.action_samples == 0
            || self.target_samples == 0
            || self.target_period == 0
            || self.hidden.is_empty()
        {
            return Err(Error::Config("invalid learner settings".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainMetrics {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub kl_mean: f64,
    pub kl_cov: f64,
    pub eta: f64,
    pub alpha_mean: f64,
    pub alpha_cov: f64,
    pub q_mean: f64,
}

/// Critic input rows: observation followed by tanh of the pre-squash action.
pub fn critic_input(obs: &Array2<f64>, u: &Array2<f64>) -> Array2<f64> {
    let n = obs.nrows();
    let mut x = Array2::zeros((n, OBS_DIM + ACTION_DIM));
    for r in 0..n {
        for c in 0..OBS_DIM {
            x[[r, c]] = obs[[r, c]];
        }
        for c in 0..ACTION_DIM {
            x[[r, OBS_DIM + c]] = u[[r, c]].tanh();
        }
    }
    x
}

/// Half mean squared error of Q against fixed targets and its gradient.
pub fn critic_loss_and_grad(critic: &Mlp, x: &Array2<f64>, y: &Array1<f64>) -> (f64, Vec<f64>) {
    let (q, cache) = critic.forward_cached(x);
    let n = x.nrows() as f64;
    let err = &q.column(0) - y;
    let loss = 0.5 * err.mapv(|e| e * e).sum() / n;
    let g_out = (err / n).insert_axis(Axis(1));
    (loss, critic.backward(&cache, &g_out).0)
}

/// Pre-step policy heads of a reference policy.
#[derive(Debug, Clone)]
pub struct ReferenceHeads {
    pub mean: Array2<f64>,
    pub logvar: Array2<f64>,
}

/// Mean KL of the decoupled mean and covariance parts between the reference
/// and `out`, per state.
pub fn decoupled_kl(reference: &ReferenceHeads, out: &PolicyOutput) -> (f64, f64) {
    let b = out.mean.nrows() as f64;
    let mut kl_m = 0.0;
    let mut kl_c = 0.0;
    for ((&mt, &lt), (&m, &l)) in reference
        .mean
        .iter()
        .zip(reference.logvar.iter())
        .zip(out.mean.iter().zip(out.logvar.iter()))
    {
        kl_m += 0.5 * (m - mt).powi(2) * (-lt).exp();
        kl_c += 0.5 * (l - lt + (lt - l).exp() - 1.0);
    }
    (kl_m / b, kl_c / b)
}

/// Weighted maximum-likelihood loss of the M-step with KL penalties, and
/// its gradient. `samples` holds `n` pre-squash actions per state laid out
/// state-major; `weights` is states x n.
#[allow(clippy::too_many_arguments)]
pub fn mpo_actor_loss_and_grad(
    actor: &GaussianPolicy,
    obs: &Array2<f64>,
    samples: &Array2<f64>,
    weights: &Array2<f64>,
    reference: &ReferenceHeads,
    alpha_mean: f64,
    alpha_cov: f64,
) -> (f64, Vec<f64>, f64, f64) {
    let (out, cache) = actor.forward_batch_cached(obs);
    let b = obs.nrows();
    let n = weights.ncols();
    let bf = b as f64;
    let mut loss = 0.0;
    let mut g_raw = Array2::zeros((b, 2 * ACTION_DIM));
    for s in 0..b {
        for i in 0..ACTION_DIM {
            let (m, l) = (out.mean[[s, i]], out.logvar[[s, i]]);
            let (mt, lt) = (reference.mean[[s, i]], reference.logvar[[s, i]]);
            let (inv_vt, inv_v) = ((-lt).exp(), (-l).exp());
            let mut gm = 0.0;
            let mut gl = 0.0;
            for j in 0..n {
                let q = weights[[s, j]];
                let u = samples[[s * n + j, i]];
                let ll_m = -0.5 * ((u - m).powi(2) * inv_vt + lt);
                let ll_c = -0.5 * ((u - mt).powi(2) * inv_v + l);
                loss -= q * (ll_m + ll_c) / bf;
                gm -= q * (u - m) * inv_vt / bf;
                gl -= q * 0.5 * ((u - mt).powi(2) * inv_v - 1.0) / bf;
            }
            loss += alpha_mean * 0.5 * (m - mt).powi(2) * inv_vt / bf;
            gm += alpha_mean * (m - mt) * inv_vt / bf;
            loss += alpha_cov * 0.5 * (l - lt + (lt - l).exp() - 1.0) / bf;
            gl += alpha_cov * 0.5 * (1.0 - (lt - l).exp()) / bf;
            g_raw[[s, i]] = gm;
            g_raw[[s, ACTION_DIM + i]] = gl * out.dlogvar[[s, i]];
        }
    }
    let (kl_m, kl_c) = decoupled_kl(reference, &out);
    let grad = actor.net.backward(&cache, &g_raw).0;
    // the Gaussian normalizer constant is omitted from the loss
    (loss, grad, kl_m, kl_c)
}

/// Weighted maximum likelihood of the full Gaussian, used by the fallback.
pub fn awr_actor_loss_and_grad(
    actor: &GaussianPolicy,
    obs: &Array2<f64>,
    samples: &Array2<f64>,
    weights: &Array2<f64>,
) -> (f64, Vec<f64>) {
    let (out, cache) = actor.forward_batch_cached(obs);
    let b = obs.nrows();
    let n = weights.ncols();
    let bf = b as f64;
    let mut loss = 0.0;
    let mut g_raw = Array2::zeros((b, 2 * ACTION_DIM));
    for s in 0..b {
        for i in 0..ACTION_DIM {
            let (m, l) = (out.mean[[s, i]], out.logvar[[s, i]]);
            let inv_v = (-l).exp();
            let mut gm = 0.0;
            let mut gl = 0.0;
            for j in 0..n {
                let q = weights[[s, j]];
                let u = samples[[s * n + j, i]];
                loss += q * 0.5 * ((u - m).powi(2) * inv_v + l) / bf;
                gm -= q * (u - m) * inv_v / bf;
                gl -= q * 0.5 * ((u - m).powi(2) * inv_v - 1.0) / bf;
            }
            g_raw[[s, i]] = gm;
            g_raw[[s, ACTION_DIM + i]] = gl * out.dlogvar[[s, i]];
        }
    }
    (loss, actor.net.backward(&cache, &g_raw).0)
}

fn log_mean_exp(row: ndarray::ArrayView1<f64>, eta: f64) -> f64 {
    let mx = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b)) / eta;
    let s: f64 = row.iter().map(|q| (q / eta - mx).exp()).sum();
    mx + (s / row.len() as f64).ln()
}

/// Dual of the E-step: eta eps + eta mean_s log mean_j exp(Q_sj / eta).
pub fn temperature_dual(q: &Array2<f64>, eta: f64, epsilon: f64) -> f64 {
    let b = q.nrows() as f64;
    let s: f64 = q.rows().into_iter().map(|r| log_mean_exp(r, eta)).sum();
    eta * epsilon + eta * s / b
}

/// Minimizes the convex temperature dual by golden-section search in log eta.
pub fn solve_temperature(q: &Array2<f64>, epsilon: f64) -> f64 {
    let f = |x: f64| temperature_dual(q, x.exp(), epsilon);
    let (mut a, mut b) = ((1e-6f64).ln(), (1e6f64).ln());
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..60 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    (0.5 * (a + b)).exp()
}

/// Per-state softmax of Q / eta.
pub fn softmax_weights(q: &Array2<f64>, eta: f64) -> Array2<f64> {
    let mut w = q.mapv(|v| v / eta);
    for mut row in w.rows_mut() {
        let mx = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - mx).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    w
}

fn repeat_rows(x: &Array2<f64>, n: usize) -> Array2<f64> {
    let mut out = Array2::zeros((x.nrows() * n, x.ncols()));
    for (r, row) in x.rows().into_iter().enumerate() {
        for j in 0..n {
            out.row_mut(r * n + j).assign(&row);
        }
    }
    out
}

/// `n` draws per state from N(mean, exp(logvar)), state-major.
fn sample_gaussian(heads: &PolicyOutput, n: usize, rng: &mut impl Rng) -> Array2<f64> {
    let b = heads.mean.nrows();
    let mut u = Array2::zeros((b * n, ACTION_DIM));
    for s in 0..b {
        for j in 0..n {
            for i in 0..ACTION_DIM {
                let z: f64 = rng.sample(StandardNormal);
                u[[s * n + j, i]] = heads.mean[[s, i]] + (0.5 * heads.logvar[[s, i]]).exp() * z;
            }
        }
    }
    u
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Learner {
    pub cfg: MpoConfig,
    pub actor: GaussianPolicy,
    pub critic: Mlp,
    pub target_actor: GaussianPolicy,
    pub target_critic: Mlp,
    actor_opt: Adam,
    critic_opt: Adam,
    pub alpha_mean: f64,
    pub alpha_cov: f64,
    pub eta: f64,
    pub steps: u64,
}

struct Batch {
    obs: Array2<f64>,
    u: Array2<f64>,
    reward: Array1<f64>,
    next_obs: Array2<f64>,
    not_done: Array1<f64>,
}

impl Batch {
    fn new(items: &[&StoredTransition]) -> Self {
        let b = items.len();
        let mut obs = Array2::zeros((b, OBS_DIM));
        let mut next_obs = Array2::zeros((b, OBS_DIM));
        let mut u = Array2::zeros((b, ACTION_DIM));
        let mut reward = Array1::zeros(b);
        let mut not_done = Array1::zeros(b);
        for (r, t) in items.iter().enumerate() {
            for c in 0..OBS_DIM {
                obs[[r, c]] = t.obs[c];
                next_obs[[r, c]] = t.next_obs[c];
            }
            for c in 0..ACTION_DIM {
                u[[r, c]] = t.u[c];
            }
            reward[r] = t.reward;
            not_done[r] = if t.done { 0.0 } else { 1.0 };
        }
        Self {
            obs,
            u,
            reward,
            next_obs,
            not_done,
        }
    }
}

impl Learner {
    pub fn new(cfg: MpoConfig, bounds: ActionBounds, rng: &mut impl Rng) -> Result<Self> {
        cfg.validate()?;
        let actor = GaussianPolicy::new(&cfg.hidden, bounds, rng);
        let critic = Mlp::new(MlpSpec::new(OBS_DIM + ACTION_DIM, &cfg.hidden, 1), rng);
        let actor_opt = Adam::new(actor.net.num_params(), cfg.actor_lr, cfg.max_grad_norm);
        let critic_opt = Adam::new(critic.num_params(), cfg.critic_lr, cfg.max_grad_norm);
        Ok(Self {
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            actor,
            critic,
            actor_opt,
            critic_opt,
            alpha_mean: cfg.alpha_mean_init,
            alpha_cov: cfg.alpha_cov_init,
            eta: 1.0,
            steps: 0,
            cfg,
        })
    }

    pub fn policy(&self) -> &GaussianPolicy {
        &self.actor
    }

    fn critic_targets(&self, batch: &Batch, rng: &mut impl Rng) -> Array1<f64> {
        let n = self.cfg.target_samples;
        let heads = self.target_actor.forward_batch(&batch.next_obs);
        let u = sample_gaussian(&heads, n, rng);
        let x = critic_input(&repeat_rows(&batch.next_obs, n), &u);
        let q = self.target_critic.forward(&x);
        let v = Array1::from_iter(q.column(0).exact_chunks(n).into_iter().map(|c| c.sum() / n as f64));
        &batch.reward * self.cfg.reward_scale + &(v * &batch.not_done) * self.cfg.gamma
    }

    fn update_critic(&mut self, batch: &Batch, rng: &mut impl Rng) -> (f64, f64) {
        let y = self.critic_targets(batch, rng);
        let x = critic_input(&batch.obs, &batch.u);
        let (loss, grad) = critic_loss_and_grad(&self.critic, &x, &y);
        let mut p = self.critic.to_flat();
        self.critic_opt.step(&mut p, &grad);
        self.critic.set_flat(&p);
        (loss, y.mean().unwrap_or(0.0))
    }

    fn update_actor(&mut self, batch: &Batch, rng: &mut impl Rng) -> (f64, f64, f64) {
        let n = self.cfg.action_samples;
        let heads = self.target_actor.forward_batch(&batch.obs);
        let u = sample_gaussian(&heads, n, rng);
        let x = critic_input(&repeat_rows(&batch.obs, n), &u);
        let q_flat = self.target_critic.forward(&x);
        let q = Array2::from_shape_vec((batch.obs.nrows(), n), q_flat.column(0).to_vec()).expect("shape");
        let reference = ReferenceHeads {
            mean: heads.mean,
            logvar: heads.logvar,
        };
        match self.cfg.algorithm {
            Algorithm::Mpo => {
                self.eta = solve_temperature(&q, self.cfg.epsilon);
                let w = softmax_weights(&q, self.eta);
                let (loss, grad, kl_m, kl_c) = mpo_actor_loss_and_grad(
                    &self.actor,
                    &batch.obs,
                    &u,
                    &w,
                    &reference,
                    self.alpha_mean,
                    self.alpha_cov,
                );
                let old = self.actor.net.to_flat();
                let mut new = old.clone();
                self.actor_opt.step(&mut new, &grad);
                self.apply_trust_region(&batch.obs, &reference, &old, &new);
                self.alpha_mean = (self.alpha_mean + self.cfg.dual_lr * (kl_m - self.cfg.epsilon_mean)).max(0.0);
                self.alpha_cov = (self.alpha_cov + self.cfg.dual_lr * (kl_c - self.cfg.epsilon_cov)).max(0.0);
                let (kl_m, kl_c) = decoupled_kl(&reference, &self.actor.forward_batch(&batch.obs));
                (loss, kl_m, kl_c)
            }
            Algorithm::Awr => {
                let w = softmax_weights(&q, self.cfg.awr_temperature);
                self.eta = self.cfg.awr_temperature;
                let (loss, grad) = awr_actor_loss_and_grad(&self.actor, &batch.obs, &u, &w);
                let mut p = self.actor.net.to_flat();
                self.actor_opt.step(&mut p, &grad);
                self.actor.net.set_flat(&p);
                let (kl_m, kl_c) = decoupled_kl(&reference, &self.actor.forward_batch(&batch.obs));
                (loss, kl_m, kl_c)
            }
        }
    }

    /// Backtracks toward `old` until both KL parts are within bounds on the
    /// batch; rejects the step if none qualifies.
    fn apply_trust_region(&mut self, obs: &Array2<f64>, reference: &ReferenceHeads, old: &[f64], new: &[f64]) {
        let mut frac = 1.0;
        for _ in 0..=self.cfg.backtrack_steps {
            let p: Vec<f64> = old.iter().zip(new).map(|(o, n)| o + frac * (n - o)).collect();
            self.actor.net.set_flat(&p);
            let (kl_m, kl_c) = decoupled_kl(reference, &self.actor.forward_batch(obs));
            if kl_m <= self.cfg.epsilon_mean && kl_c <= self.cfg.epsilon_cov {
                return;
            }
            frac *= 0.5;
        }
        self.actor.net.set_flat(old);
    }

    /// One critic and one policy update on a sampled batch.
    pub fn train_step(&mut self, items: &[&StoredTransition], rng: &mut impl Rng) -> Result<TrainMetrics> {
        if items.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        let batch = Batch::new(items);
        let (critic_loss, q_mean) = self.update_critic(&batch, rng);
        let (actor_loss, kl_mean, kl_cov) = self.update_actor(&batch, rng);
        self.steps += 1;
        if self.steps % self.cfg.target_period == 0 {
            self.target_actor = self.actor.clone();
            self.target_critic = self.critic.clone();
        }
        let m = TrainMetrics {
            critic_loss,
            actor_loss,
            kl_mean,
            kl_cov,
            eta: self.eta,
            alpha_mean: self.alpha_mean,
            alpha_cov: self.alpha_cov,
            q_mean,
        };
        let finite = [critic_loss, actor_loss, kl_mean, kl_cov, self.eta].iter().all(|v| v.is_finite());
        if !finite || self.actor.net.check_finite().is_err() || self.critic.check_finite().is_err() {
            return Err(Error::TrainingDivergence(format!(
                "step {}: metrics {m:?}, actor |p| = {:.3e}, critic |p| = {:.3e}",
                self.steps,
                norm(&self.actor.net.to_flat()),
                norm(&self.critic.to_flat()),
            )));
        }
        Ok(m)
    }
}

fn norm(p: &[f64]) -> f64 {
    p.iter().map(|v| v * v).sum::<f64>().sqrt()
}
