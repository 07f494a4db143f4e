//! Diagonal Gaussian policy over the three actions, squashed onto the
//! physical action box.

use ndarray::{s, Array2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::mlp::{ForwardCache, Mlp, MlpSpec};
use crate::env::{EnvConfig, Observation};
use crate::error::{Error, Result};
use crate::supervisor::ActionProposal;

pub const ACTION_DIM: usize = 3;
pub const OBS_DIM: usize = Observation::DIM;

/// Log-variance is mapped smoothly into (MID - HALF, MID + HALF) = (-10, 2).
const LOGVAR_MID: f64 = -4.0;
const LOGVAR_HALF: f64 = 6.0;
/// Log-variance of a fresh network.
const LOGVAR_INIT: f64 = -1.0;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActionBounds {
    pub lo: [f64; ACTION_DIM],
    pub hi: [f64; ACTION_DIM],
}

impl ActionBounds {
    pub fn from_env(cfg: &EnvConfig) -> Self {
        Self {
            lo: [0.0; ACTION_DIM],
            hi: [
                cfg.ptc.v_max,
                cfg.supervisor.max_charge_current,
                cfg.supervisor.max_discharge_current,
            ],
        }
    }

    /// Map from the unbounded Gaussian variable to the box.
    pub fn squash(&self, u: &[f64; ACTION_DIM]) -> ActionProposal {
        let a: Vec<f64> = (0..ACTION_DIM)
            .map(|i| self.lo[i] + (self.hi[i] - self.lo[i]) * 0.5 * (1.0 + u[i].tanh()))
            .collect();
        ActionProposal {
            v_ptc: a[0],
            i_c: a[1],
            i_d: a[2],
        }
    }

    /// log |da/du| summed over dimensions.
    pub fn log_jacobian(&self, u: &[f64; ACTION_DIM]) -> f64 {
        (0..ACTION_DIM)
            .map(|i| {
                // ln(1 - tanh^2 u) = 2 (ln 2 - |u| - ln(1 + e^{-2|u|}))
                let x = u[i].abs();
                let ln_sech2 = 2.0 * (std::f64::consts::LN_2 - x - (-2.0 * x).exp().ln_1p());
                (0.5 * (self.hi[i] - self.lo[i])).ln() + ln_sech2
            })
            .sum()
    }

    pub fn sample_uniform(&self, rng: &mut impl Rng) -> ActionProposal {
        let a: Vec<f64> = (0..ACTION_DIM)
            .map(|i| rng.random_range(self.lo[i]..=self.hi[i]))
            .collect();
        ActionProposal {
            v_ptc: a[0],
            i_c: a[1],
            i_d: a[2],
        }
    }
}

/// Smooth clamp of the raw log-variance head and its derivative.
pub fn clamp_logvar(raw: f64) -> (f64, f64) {
    let t = (raw / LOGVAR_HALF).tanh();
    (LOGVAR_MID + LOGVAR_HALF * t, 1.0 - t * t)
}

/// Log-density of `u` under N(mean, exp(logvar)), diagonal.
pub fn gaussian_log_density(u: &[f64], mean: &[f64], logvar: &[f64]) -> f64 {
    u.iter()
        .zip(mean)
        .zip(logvar)
        .map(|((u, m), lv)| -0.5 * ((u - m).powi(2) * (-lv).exp() + lv + LN_2PI))
        .sum()
}

/// Batched policy heads.
pub struct PolicyOutput {
    pub mean: Array2<f64>,
    pub logvar: Array2<f64>,
    /// d logvar / d raw head.
    pub dlogvar: Array2<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicySample {
    /// Pre-squash Gaussian variable.
    pub u: [f64; ACTION_DIM],
    pub proposal: ActionProposal,
    /// Log-density of the proposal in action space.
    pub log_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPolicy {
    pub net: Mlp,
    pub bounds: ActionBounds,
}

impl GaussianPolicy {
    pub fn new(hidden: &[usize], bounds: ActionBounds, rng: &mut impl Rng) -> Self {
        let mut net = Mlp::new(MlpSpec::new(OBS_DIM, hidden, 2 * ACTION_DIM), rng);
        let last = net.layers.last_mut().expect("at least one layer");
        let raw0 = LOGVAR_HALF * ((LOGVAR_INIT - LOGVAR_MID) / LOGVAR_HALF).atanh();
        for i in ACTION_DIM..2 * ACTION_DIM {
            last.b[i] = raw0;
        }
        Self { net, bounds }
    }

    fn heads(&self, raw: &Array2<f64>) -> PolicyOutput {
        let mean = raw.slice(s![.., ..ACTION_DIM]).to_owned();
        let r = raw.slice(s![.., ACTION_DIM..]);
        let logvar = r.mapv(|v| clamp_logvar(v).0);
        let dlogvar = r.mapv(|v| clamp_logvar(v).1);
        PolicyOutput { mean, logvar, dlogvar }
    }

    pub fn forward_batch(&self, obs: &Array2<f64>) -> PolicyOutput {
        self.heads(&self.net.forward(obs))
    }

    pub fn forward_batch_cached(&self, obs: &Array2<f64>) -> (PolicyOutput, ForwardCache) {
        let (raw, cache) = self.net.forward_cached(obs);
        (self.heads(&raw), cache)
    }

    /// Mean and variance of the pre-squash Gaussian at one normalized
    /// observation.
    pub fn forward_policy(&self, obs: &[f64; OBS_DIM]) -> Result<([f64; ACTION_DIM], [f64; ACTION_DIM])> {
        let x = Array2::from_shape_vec((1, OBS_DIM), obs.to_vec()).expect("shape");
        let out = self.forward_batch(&x);
        let mut mean = [0.0; ACTION_DIM];
        let mut var = [0.0; ACTION_DIM];
        for i in 0..ACTION_DIM {
            mean[i] = out.mean[[0, i]];
            var[i] = out.logvar[[0, i]].exp();
        }
        if mean.iter().chain(&var).any(|v| !v.is_finite()) {
            return Err(Error::ParameterCorruption(format!(
                "policy output not finite: mean {mean:?}, var {var:?}"
            )));
        }
        Ok((mean, var))
    }

    /// Log-density in action space of the action squashed from `u`.
    pub fn log_prob(&self, u: &[f64; ACTION_DIM], mean: &[f64; ACTION_DIM], var: &[f64; ACTION_DIM]) -> f64 {
        let lv: Vec<f64> = var.iter().map(|v| v.ln()).collect();
        gaussian_log_density(u, mean, &lv) - self.bounds.log_jacobian(u)
    }

    pub fn sample_action(&self, obs: &[f64; OBS_DIM], rng: &mut impl Rng) -> Result<PolicySample> {
        let (mean, var) = self.forward_policy(obs)?;
        let mut u = [0.0; ACTION_DIM];
        for i in 0..ACTION_DIM {
            let z: f64 = rng.sample(StandardNormal);
            u[i] = mean[i] + var[i].sqrt() * z;
        }
        Ok(PolicySample {
            u,
            proposal: self.bounds.squash(&u),
            log_prob: self.log_prob(&u, &mean, &var),
        })
    }

    /// Squashed mean, used for deterministic rollouts.
    pub fn mean_action(&self, obs: &[f64; OBS_DIM]) -> Result<ActionProposal> {
        let (mean, _) = self.forward_policy(obs)?;
        Ok(self.bounds.squash(&mean))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn policy() -> GaussianPolicy {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        GaussianPolicy::new(&[64, 64, 64], ActionBounds::from_env(&EnvConfig::default()), &mut rng)
    }

    const OBS: [f64; OBS_DIM] = [0.2, -0.5, -0.3, 0.1, 1.0];

    #[test]
    fn deterministic_and_bounded() {
        let p = policy();
        let a = p.forward_policy(&OBS).unwrap();
        assert_eq!(a, p.forward_policy(&OBS).unwrap());
        for v in a.1 {
            assert!(v > (-10.0f64).exp() && v < 2.0f64.exp());
        }
        let m = p.mean_action(&OBS).unwrap();
        assert!(m.v_ptc > 0.0 && m.v_ptc < 10.0);
        assert!(m.i_c > 0.0 && m.i_c < 4.0 && m.i_d > 0.0 && m.i_d < 4.2);
        // fresh log-variance sits near its initial value
        for v in a.1 {
            assert!((v.ln() - LOGVAR_INIT).abs() < 1.0);
        }
    }

    #[test]
    fn logvar_clamp_is_bounded_and_smooth() {
        for raw in [-1e6, -30.0, 0.0, 30.0, 1e6] {
            let (lv, d) = clamp_logvar(raw);
            assert!((-10.0..=2.0).contains(&lv));
            assert!((0.0..=1.0).contains(&d));
        }
        let h = 1e-6;
        let fd = (clamp_logvar(0.7 + h).0 - clamp_logvar(0.7 - h).0) / (2.0 * h);
        assert!((fd - clamp_logvar(0.7).1).abs() < 1e-8);
    }

    #[test]
    fn mode_log_prob() {
        let p = policy();
        let (mean, var) = p.forward_policy(&OBS).unwrap();
        let lp = p.log_prob(&mean, &mean, &var);
        let expected: f64 = var.iter().map(|v| -0.5 * (2.0 * std::f64::consts::PI * v).ln()).sum::<f64>()
            - p.bounds.log_jacobian(&mean);
        assert!((lp - expected).abs() < 1e-12);
    }

    #[test]
    fn zero_variance_limit_gives_squashed_mean() {
        let mut p = policy();
        let last = p.net.layers.last_mut().unwrap();
        for i in ACTION_DIM..2 * ACTION_DIM {
            last.w.row_mut(i).fill(0.0);
            last.b[i] = -1e3;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = p.sample_action(&OBS, &mut rng).unwrap();
        let m = p.mean_action(&OBS).unwrap();
        // variance bottoms out at exp(-10), i.e. sigma ~ 7e-3 in u
        let (_, var) = p.forward_policy(&OBS).unwrap();
        assert!(var.iter().all(|v| (v.ln() + 10.0).abs() < 1e-9));
        let tol = |i: usize| 0.01 * (p.bounds.hi[i] - p.bounds.lo[i]);
        assert!((s.proposal.v_ptc - m.v_ptc).abs() < tol(0));
        assert!((s.proposal.i_c - m.i_c).abs() < tol(1));
        assert!((s.proposal.i_d - m.i_d).abs() < tol(2));
    }

    #[test]
    fn monte_carlo_moments() {
        let p = policy();
        let (mean, var) = p.forward_policy(&OBS).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let mut s1 = [0.0; ACTION_DIM];
        let mut s2 = [0.0; ACTION_DIM];
        for _ in 0..n {
            let a = p.sample_action(&OBS, &mut rng).unwrap();
            assert!(a.log_prob.is_finite());
            for i in 0..ACTION_DIM {
                s1[i] += a.u[i];
                s2[i] += a.u[i] * a.u[i];
            }
        }
        let nf = n as f64;
        for i in 0..ACTION_DIM {
            let m = s1[i] / nf;
            let v = s2[i] / nf - m * m;
            let se_m = (var[i] / nf).sqrt();
            let se_v = var[i] * (2.0 / nf).sqrt();
            assert!((m - mean[i]).abs() < 3.0 * se_m, "mean {i}: {m} vs {}", mean[i]);
            assert!((v - var[i]).abs() < 3.0 * se_v, "var {i}: {v} vs {}", var[i]);
        }
    }

    #[test]
    fn squashed_density_integrates_to_one() {
        let b = ActionBounds::from_env(&EnvConfig::default());
        let mean = [0.3, -0.4, 0.1];
        let var = [0.5, 0.8, 0.3];
        let lv: Vec<f64> = var.iter().map(|v: &f64| v.ln()).collect();
        let n = 200;
        // midpoint rule on a 2-D grid over (v_ptc, i_c) with i_d fixed at the
        // image of its mean; the 1-D marginal density of i_d is integrated
        // separately
        let atanh_of = |i: usize, a: f64| (2.0 * (a - b.lo[i]) / (b.hi[i] - b.lo[i]) - 1.0).atanh();
        let dens = |i: usize, a: f64| {
            let u = atanh_of(i, a);
            let ld = -0.5 * ((u - mean[i]).powi(2) / var[i] + lv[i] + LN_2PI);
            let lj = {
                let x = u.abs();
                (0.5 * (b.hi[i] - b.lo[i])).ln()
                    + 2.0 * (std::f64::consts::LN_2 - x - (-2.0 * x).exp().ln_1p())
            };
            (ld - lj).exp()
        };
        let mut total = 0.0;
        let (h0, h1) = (b.hi[0] / n as f64, b.hi[1] / n as f64);
        for j in 0..n {
            for k in 0..n {
                let a0 = (j as f64 + 0.5) * h0;
                let a1 = (k as f64 + 0.5) * h1;
                total += dens(0, a0) * dens(1, a1) * h0 * h1;
            }
        }
        assert!((total - 1.0).abs() < 1e-2, "2-D mass {total}");
        let m = 20_000;
        let h2 = b.hi[2] / m as f64;
        let mass: f64 = (0..m).map(|k| dens(2, (k as f64 + 0.5) * h2) * h2).sum();
        assert!((mass - 1.0).abs() < 1e-2, "1-D mass {mass}");
        // joint log-density agrees with the factorized one
        let u = [0.1, 0.2, -0.3];
        let joint = gaussian_log_density(&u, &mean, &lv) - b.log_jacobian(&u);
        let a = b.squash(&u);
        let fact = dens(0, a.v_ptc).ln() + dens(1, a.i_c).ln() + dens(2, a.i_d).ln();
        assert!((joint - fact).abs() < 1e-9);
    }
}
