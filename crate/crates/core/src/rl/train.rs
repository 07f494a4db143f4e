//! Episode loop, checkpoints and per-episode metrics.

use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::buffer::{ReplayBuffer, StoredTransition};
use super::mpo::{Learner, MpoConfig, TrainMetrics};
use super::policy::ActionBounds;
use crate::env::{EnvConfig, PreheatEnv};
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::params::DfnParameters;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub episodes: usize,
    pub seed: u64,
    /// Save a checkpoint every this many episodes; 0 disables.
    pub checkpoint_every: usize,
    pub learner: MpoConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            episodes: 500,
            seed: 0,
            checkpoint_every: 0,
            learner: MpoConfig::default(),
        }
    }
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeMetrics {
    pub episode: usize,
    pub episode_return: f64,
    pub holds: usize,
    pub duration: f64,
    pub reached_target: bool,
    pub final_t_range: f64,
    pub updates: u64,
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub kl_mean: f64,
    pub kl_cov: f64,
    pub eta: f64,
    pub alpha_mean: f64,
    pub alpha_cov: f64,
}

/// Everything needed to continue training bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub params: DfnParameters,
    pub env: EnvConfig,
    pub train: TrainConfig,
    pub learner: Learner,
    pub buffer: ReplayBuffer<StoredTransition>,
    pub rng: ChaCha8Rng,
    pub env_rng: ChaCha8Rng,
    pub episodes_done: usize,
}

impl Checkpoint {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path, &serde_json::to_vec(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path)
            .map_err(|e| Error::Config(format!("cannot read checkpoint {}: {e}", path.display())))?;
        let c: Checkpoint = serde_json::from_slice(&bytes)?;
        if c.version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "checkpoint version {} unsupported (expected {CHECKPOINT_VERSION})",
                c.version
            )));
        }
        Ok(c)
    }
}

pub struct Trainer {
    cfg: TrainConfig,
    env: PreheatEnv,
    learner: Learner,
    buffer: ReplayBuffer<StoredTransition>,
    rng: ChaCha8Rng,
    episodes_done: usize,
}

impl Trainer {
    pub fn new(params: Arc<DfnParameters>, mut env_cfg: EnvConfig, cfg: TrainConfig) -> Result<Self> {
        env_cfg.episode.seed = cfg.seed;
        let env = PreheatEnv::new(params, env_cfg)?;
        // separate stream from the environment's
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x6a09_e667_f3bc_c908));
        let learner = Learner::new(cfg.learner.clone(), ActionBounds::from_env(env.config()), &mut rng)?;
        let buffer = ReplayBuffer::new(cfg.learner.buffer_capacity)?;
        Ok(Self {
            cfg,
            env,
            learner,
            buffer,
            rng,
            episodes_done: 0,
        })
    }

    pub fn from_checkpoint(c: Checkpoint) -> Result<Self> {
        let mut env = PreheatEnv::new(Arc::new(c.params), c.env)?;
        env.set_rng(c.env_rng);
        Ok(Self {
            cfg: c.train,
            env,
            learner: c.learner,
            buffer: c.buffer,
            rng: c.rng,
            episodes_done: c.episodes_done,
        })
    }

    /// Changes the total episode budget, e.g. to extend a resumed run.
    pub fn set_episode_budget(&mut self, episodes: usize) {
        self.cfg.episodes = episodes;
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            params: (**self.env.params()).clone(),
            env: self.env.config().clone(),
            train: self.cfg.clone(),
            learner: self.learner.clone(),
            buffer: self.buffer.clone(),
            rng: self.rng.clone(),
            env_rng: self.env.rng().clone(),
            episodes_done: self.episodes_done,
        }
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn learner(&self) -> &Learner {
        &self.learner
    }

    pub fn env(&self) -> &PreheatEnv {
        &self.env
    }

    pub fn episodes_done(&self) -> usize {
        self.episodes_done
    }

    /// Collects one episode with the stochastic policy, updating after every
    /// hold once the buffer holds `warmup` transitions.
    pub fn run_episode(&mut self) -> Result<EpisodeMetrics> {
        let lc = self.cfg.learner.clone();
        let mut obs = self.env.reset()?;
        let mut ret = 0.0;
        let mut holds = 0;
        let mut acc = TrainMetrics::default();
        let mut updates = 0u64;
        loop {
            let x = obs.normalized();
            let s = self.learner.policy().sample_action(&x, &mut self.rng)?;
            let tr = self.env.step(&s.proposal)?;
            ret += tr.reward;
            holds += 1;
            self.buffer.store(StoredTransition {
                obs: x,
                u: s.u,
                log_prob: s.log_prob,
                reward: tr.reward,
                next_obs: tr.next_obs.normalized(),
                done: tr.done,
            });
            if self.buffer.len() >= lc.warmup.max(1) {
                for _ in 0..lc.updates_per_step {
                    let batch = self.buffer.sample(lc.batch_size, &mut self.rng)?;
                    let m = self.learner.train_step(&batch, &mut self.rng)?;
                    acc.critic_loss += m.critic_loss;
                    acc.actor_loss += m.actor_loss;
                    acc.kl_mean += m.kl_mean;
                    acc.kl_cov += m.kl_cov;
                    updates += 1;
                }
            }
            obs = tr.next_obs;
            if tr.done {
                self.episodes_done += 1;
                let n = updates.max(1) as f64;
                let d = tr.diagnostics;
                return Ok(EpisodeMetrics {
                    episode: self.episodes_done,
                    episode_return: ret,
                    holds,
                    duration: d.time,
                    reached_target: !d.failed && d.t_avg >= self.env.config().episode.t_des,
                    final_t_range: d.t_range,
                    updates,
                    critic_loss: acc.critic_loss / n,
                    actor_loss: acc.actor_loss / n,
                    kl_mean: acc.kl_mean / n,
                    kl_cov: acc.kl_cov / n,
                    eta: self.learner.eta,
                    alpha_mean: self.learner.alpha_mean,
                    alpha_cov: self.learner.alpha_cov,
                });
            }
        }
    }

    /// Trains until `cfg.episodes` episodes are done. `on_episode` sees each
    /// row and the trainer, e.g. to log or checkpoint.
    pub fn train(
        &mut self,
        mut on_episode: impl FnMut(&EpisodeMetrics, &Trainer) -> Result<()>,
    ) -> Result<Vec<EpisodeMetrics>> {
        let mut rows = Vec::new();
        while self.episodes_done < self.cfg.episodes {
            let m = self.run_episode()?;
            on_episode(&m, self)?;
            rows.push(m);
        }
        Ok(rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::electrochem::Fidelity;

    fn setup() -> (Arc<DfnParameters>, EnvConfig, TrainConfig) {
        let mut env = EnvConfig {
            fidelity: Fidelity::Reduced,
            ..EnvConfig::default()
        };
        env.episode.max_duration = 30.0;
        let train = TrainConfig {
            episodes: 4,
            seed: 3,
            checkpoint_every: 0,
            learner: MpoConfig {
                hidden: vec![8, 8],
                batch_size: 8,
                warmup: 8,
                action_samples: 4,
                target_samples: 2,
                target_period: 5,
                ..MpoConfig::default()
            },
        };
        (Arc::new(DfnParameters::marquis2019()), env, train)
    }

    #[test]
    fn resume_from_checkpoint_is_bitwise_identical() {
        let (p, e, t) = setup();
        let mut full = Trainer::new(p.clone(), e.clone(), t.clone()).unwrap();
        let rows_full = full.train(|_, _| Ok(())).unwrap();

        let mut a = Trainer::new(p, e, t).unwrap();
        a.run_episode().unwrap();
        a.run_episode().unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        a.checkpoint().save(&path).unwrap();
        let loaded = Checkpoint::load(&path).unwrap();
        assert_eq!(loaded, a.checkpoint());
        let mut b = Trainer::from_checkpoint(loaded).unwrap();
        let rows_b = b.train(|_, _| Ok(())).unwrap();
        assert_eq!(&rows_full[2..], &rows_b[..]);
        assert_eq!(full.checkpoint(), b.checkpoint());
    }

    #[test]
    fn rejects_other_checkpoint_versions() {
        let (p, e, t) = setup();
        let mut c = Trainer::new(p, e, t).unwrap().checkpoint();
        c.version = 99;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, serde_json::to_vec(&c).unwrap()).unwrap();
        assert!(Checkpoint::load(&path).is_err());
        assert!(Checkpoint::load(dir.path().join("missing.json")).is_err());
    }
}
