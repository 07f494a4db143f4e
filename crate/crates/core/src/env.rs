//! Preheating decision process.
//!
//! Each action is held for one pulse hold (5 s by default). Inside a hold the
//! electrochemical model and the thermal model advance together in substeps:
//! the cell is stepped at the current mean temperature, its heat output and
//! the film power drive one thermal step.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::electrochem::{CellModel, Fidelity, MeshSpec};
use crate::error::{Error, Result};
use crate::params::DfnParameters;
use crate::ptc::PtcParameters;
use crate::supervisor::{
    supervise, synthesize_pulse_waveform, ActionProposal, PulseConfig, SafeAction, SupervisorConfig,
};
use crate::thermal::{step_thermal, TemperatureStats, ThermalParameters, ThermalState};

/// Centre and scale of the affine observation normalization.
const SOC_CENTRE: f64 = 0.5;
const SOC_SCALE: f64 = 0.5;
const T_CENTRE: f64 = 263.15;
const T_SCALE: f64 = 10.0;
const V_CENTRE: f64 = 3.7;
const V_SCALE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub soc: f64,
    /// K
    pub t_m: f64,
    /// K
    pub t_out: f64,
    /// V
    pub v_t: f64,
    /// K
    pub t_des: f64,
}

impl Observation {
    pub const DIM: usize = 5;

    /// Affine scaling to roughly [-1, 1], as fed to the networks.
    pub fn normalized(&self) -> [f64; Self::DIM] {
        [
            (self.soc - SOC_CENTRE) / SOC_SCALE,
            (self.t_m - T_CENTRE) / T_SCALE,
            (self.t_out - T_CENTRE) / T_SCALE,
            (self.v_t - V_CENTRE) / V_SCALE,
            (self.t_des - T_CENTRE) / T_SCALE,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub w_rtr: f64,
    pub w_tr: f64,
    pub w_dt: f64,
    /// Gradient threshold, K.
    pub threshold: f64,
    pub r_term: f64,
    /// Hold length, s.
    pub dt: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            w_rtr: 1.0,
            w_tr: 2.0,
            w_dt: 1.0,
            threshold: 0.5,
            r_term: 200.0,
            dt: 5.0,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        let w = [self.w_rtr, self.w_tr, self.w_dt, self.r_term];
        if w.iter().any(|x| !(*x >= 0.0)) || !(self.threshold > 0.0) || !(self.dt > 0.0) {
            return Err(Error::Config("invalid reward settings".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub r_rtr: f64,
    pub r_g: f64,
    pub total: f64,
}

/// Reward from scalar inputs: mean-temperature rise over the hold, the
/// current gradient and its change since the previous hold.
pub fn reward_terms(
    delta_t_avg: f64,
    t_range: f64,
    delta_t_range: f64,
    done: bool,
    cfg: &RewardConfig,
) -> RewardBreakdown {
    let r_rtr = delta_t_avg / cfg.dt;
    let base = cfg.w_rtr * r_rtr;
    let (r_g, total) = if done {
        let r_g = if t_range < cfg.threshold { cfg.r_term } else { -cfg.r_term };
        (r_g, base + r_g)
    } else if t_range > cfg.threshold {
        let r_g = -cfg.w_tr * t_range - cfg.w_dt * delta_t_range;
        (r_g, base - cfg.w_dt * delta_t_range - cfg.w_tr * t_range)
    } else {
        (0.0, base)
    };
    RewardBreakdown { r_rtr, r_g, total }
}

/// Reward between the statistics of two consecutive holds.
pub fn compute_reward(
    prev: &TemperatureStats,
    cur: &TemperatureStats,
    done: bool,
    cfg: &RewardConfig,
) -> RewardBreakdown {
    reward_terms(
        cur.t_avg - prev.t_avg,
        cur.t_range,
        cur.t_range - prev.t_range,
        done,
        cfg,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeConfig {
    /// Initial temperature is uniform in [min, max), K.
    pub t_init_min: f64,
    pub t_init_max: f64,
    pub soc_min: f64,
    pub soc_max: f64,
    /// Target mean temperature, K.
    pub t_des: f64,
    /// s
    pub max_duration: f64,
    /// Ambient temperature, K. Defaults to the initial temperature.
    pub ambient: Option<f64>,
    pub seed: u64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            t_init_min: 253.15,
            t_init_max: 273.15,
            soc_min: 0.2,
            soc_max: 0.9,
            t_des: 273.15,
            max_duration: 1800.0,
            ambient: None,
            seed: 0,
        }
    }
}

impl EpisodeConfig {
    pub fn validate(&self, hold: f64) -> Result<()> {
        if !(self.t_init_min > 0.0 && self.t_init_min < self.t_init_max) {
            return Err(Error::Config("empty initial temperature range".into()));
        }
        if !(self.soc_min >= 0.0 && self.soc_min < self.soc_max && self.soc_max <= 1.0) {
            return Err(Error::Config("empty initial SOC range".into()));
        }
        let r = self.max_duration / hold;
        if !(r >= 1.0 && (r - r.round()).abs() < 1e-9) {
            return Err(Error::Config("max duration must be a multiple of the hold".into()));
        }
        if !(self.t_des > 0.0) || self.ambient.is_some_and(|a| !(a > 0.0)) {
            return Err(Error::Config("temperatures must be > 0 K".into()));
        }
        Ok(())
    }
}

/// Everything the environment needs apart from the cell parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub fidelity: Fidelity,
    pub mesh: MeshSpec,
    pub thermal: ThermalParameters,
    pub ptc: PtcParameters,
    pub pulse: PulseConfig,
    pub supervisor: SupervisorConfig,
    pub reward: RewardConfig,
    pub episode: EpisodeConfig,
    /// Keep every substep in the hold diagnostics.
    pub record_substeps: bool,
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.mesh.validate()?;
        self.thermal.validate()?;
        self.ptc.validate()?;
        self.pulse.validate(self.mesh.dt)?;
        self.supervisor.validate()?;
        self.reward.validate()?;
        self.episode.validate(self.pulse.hold)?;
        if (self.reward.dt - self.pulse.hold).abs() > 1e-12 {
            return Err(Error::Config("reward dt must equal the pulse hold".into()));
        }
        Ok(())
    }
}

/// State of the coupled system at one substep boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    /// s
    pub t: f64,
    /// Cell current over the preceding substep, A (discharge positive).
    pub current: f64,
    pub v_ptc: f64,
    pub v_t: f64,
    pub soc: f64,
    pub stats: TemperatureStats,
    /// W/m^3
    pub q_gen: f64,
    /// Total film power, W.
    pub q_ptc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldDiagnostics {
    /// End of the hold, s.
    pub time: f64,
    pub t_avg: f64,
    pub t_range: f64,
    pub stats: TemperatureStats,
    /// Film electrical energy over the hold, J.
    pub ptc_energy: f64,
    /// Heat generated inside the cell over the hold, J.
    pub pulse_heat_energy: f64,
    /// Electrical energy delivered by the cell over the hold, J.
    pub lib_energy: f64,
    /// Hold-mean cell current, A.
    pub mean_current: f64,
    /// Hold-mean heat generation, W/m^3.
    pub mean_q_gen: f64,
    /// Hold-mean film power, W.
    pub mean_q_ptc: f64,
    pub reward: RewardBreakdown,
    /// Set when a solver failed inside the hold.
    pub failed: bool,
    pub failure: Option<String>,
    pub substeps: Vec<Sample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub obs: Observation,
    pub proposal: ActionProposal,
    pub action: SafeAction,
    pub reward: f64,
    pub next_obs: Observation,
    pub done: bool,
    pub diagnostics: HoldDiagnostics,
}

pub struct PreheatEnv {
    params: Arc<DfnParameters>,
    cfg: EnvConfig,
    rng: ChaCha8Rng,
    cell: Option<CellModel>,
    thermal: Option<ThermalState>,
    ambient: f64,
    time: f64,
    active: bool,
}

impl PreheatEnv {
    pub fn new(params: Arc<DfnParameters>, cfg: EnvConfig) -> Result<Self> {
        params.validate()?;
        cfg.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(cfg.episode.seed);
        Ok(Self {
            params,
            cfg,
            rng,
            cell: None,
            thermal: None,
            ambient: 0.0,
            time: 0.0,
            active: false,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn params(&self) -> &Arc<DfnParameters> {
        &self.params
    }

    pub fn rng(&self) -> &ChaCha8Rng {
        &self.rng
    }

    pub fn set_rng(&mut self, rng: ChaCha8Rng) {
        self.rng = rng;
    }

    /// Restarts the episode RNG stream.
    pub fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    /// Starts an episode at a random temperature and SOC.
    pub fn reset(&mut self) -> Result<Observation> {
        let e = self.cfg.episode;
        let t0 = self.rng.random_range(e.t_init_min..e.t_init_max);
        let soc = self.rng.random_range(e.soc_min..=e.soc_max);
        self.reset_to(t0, soc)
    }

    /// Starts an episode from rest at a given uniform temperature and SOC.
    pub fn reset_to(&mut self, temperature: f64, soc: f64) -> Result<Observation> {
        let cell = CellModel::new(self.cfg.fidelity, self.params.clone(), self.cfg.mesh, soc, temperature)?;
        self.thermal = Some(ThermalState::uniform(&self.cfg.thermal, temperature)?);
        self.cell = Some(cell);
        self.ambient = self.cfg.episode.ambient.unwrap_or(temperature);
        self.time = 0.0;
        self.active = true;
        Ok(self.observation().expect("state was just set"))
    }

    pub fn is_active(&self) -> bool {
        self.active
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn ambient(&self) -> f64 {
        self.ambient
    }

    pub fn cell(&self) -> Option<&CellModel> {
        self.cell.as_ref()
    }

    pub fn thermal_state(&self) -> Option<&ThermalState> {
        self.thermal.as_ref()
    }

    pub fn observation(&self) -> Option<Observation> {
        let (cell, th) = (self.cell.as_ref()?, self.thermal.as_ref()?);
        Some(Observation {
            soc: cell.soc().clamp(0.0, 1.0),
            t_m: th.stats.t_m,
            t_out: th.stats.t_out,
            v_t: cell.terminal_voltage(),
            t_des: self.cfg.episode.t_des,
        })
    }

    /// Current state of the coupled system as a sample.
    pub fn sample(&self) -> Option<Sample> {
        let (cell, th) = (self.cell.as_ref()?, self.thermal.as_ref()?);
        Some(Sample {
            t: self.time,
            current: 0.0,
            v_ptc: 0.0,
            v_t: cell.terminal_voltage(),
            soc: cell.soc(),
            stats: th.stats,
            q_gen: 0.0,
            q_ptc: 0.0,
        })
    }

    /// Supervises and applies one action for a full hold.
    pub fn step(&mut self, proposal: &ActionProposal) -> Result<Transition> {
        if !self.active {
            return Err(Error::EpisodeInactive);
        }
        let obs = self.observation().expect("active episode has state");
        let cell = self.cell.as_ref().expect("active episode has a cell");
        let th = self.thermal.as_ref().expect("active episode has a thermal state");
        let prev_stats = th.stats;
        let action = supervise(
            proposal,
            cell,
            prev_stats.t_avg,
            self.cfg.ptc.v_max,
            &self.cfg.pulse,
            &self.cfg.supervisor,
        );
        let dt = self.cfg.mesh.dt;
        let currents = synthesize_pulse_waveform(&self.cfg.pulse, action.i_c, action.i_d, dt)?.samples(dt);

        let mut cell = cell.clone();
        let mut th = th.clone();
        let volume = self.cfg.thermal.cell_volume();
        let mut acc = HoldDiagnostics {
            time: self.time,
            t_avg: prev_stats.t_avg,
            t_range: prev_stats.t_range,
            stats: prev_stats,
            ptc_energy: 0.0,
            pulse_heat_energy: 0.0,
            lib_energy: 0.0,
            mean_current: 0.0,
            mean_q_gen: 0.0,
            mean_q_ptc: 0.0,
            reward: RewardBreakdown { r_rtr: 0.0, r_g: 0.0, total: 0.0 },
            failed: false,
            failure: None,
            substeps: Vec::new(),
        };
        let mut failure = None;
        for (k, &i) in currents.iter().enumerate() {
            let t_avg = th.stats.t_avg;
            let q_ptc = match self.cfg.ptc.power(action.v_ptc, th.stats.t_out) {
                Ok(q) => q,
                Err(e) => {
                    failure = Some(e);
                    break;
                }
            };
            if let Err(e) = cell.step(self.params.current_density(i), t_avg, dt) {
                failure = Some(e);
                break;
            }
            let q_gen = cell.heat_generation(t_avg);
            match step_thermal(&th, q_gen, q_ptc, self.ambient, &self.cfg.thermal, dt) {
                Ok(next) => th = next,
                Err(e) => {
                    failure = Some(e);
                    break;
                }
            }
            let v_t = cell.terminal_voltage();
            acc.ptc_energy += q_ptc * dt;
            acc.pulse_heat_energy += q_gen * volume * dt;
            acc.lib_energy += v_t * i * dt;
            acc.mean_current += i;
            acc.mean_q_gen += q_gen;
            acc.mean_q_ptc += q_ptc;
            if self.cfg.record_substeps {
                acc.substeps.push(Sample {
                    t: self.time + (k + 1) as f64 * dt,
                    current: i,
                    v_ptc: action.v_ptc,
                    v_t,
                    soc: cell.soc(),
                    stats: th.stats,
                    q_gen,
                    q_ptc,
                });
            }
        }
        let n = currents.len() as f64;
        acc.mean_current /= n;
        acc.mean_q_gen /= n;
        acc.mean_q_ptc /= n;

        self.time += self.cfg.pulse.hold;
        acc.time = self.time;
        if let Some(e) = failure {
            // the hold is discarded; the episode ends with the terminal penalty
            self.active = false;
            acc.failed = true;
            acc.failure = Some(e.to_string());
            let r = -self.cfg.reward.r_term;
            acc.reward = RewardBreakdown { r_rtr: 0.0, r_g: r, total: r };
            return Ok(Transition {
                obs,
                proposal: *proposal,
                action,
                reward: r,
                next_obs: obs,
                done: true,
                diagnostics: acc,
            });
        }

        let stats = th.stats;
        let done = stats.t_avg >= self.cfg.episode.t_des
            || self.time >= self.cfg.episode.max_duration - 1e-9;
        let reward = compute_reward(&prev_stats, &stats, done, &self.cfg.reward);
        acc.stats = stats;
        acc.t_avg = stats.t_avg;
        acc.t_range = stats.t_range;
        acc.reward = reward;
        self.cell = Some(cell);
        self.thermal = Some(th);
        if done {
            self.active = false;
        }
        let next_obs = self.observation().expect("state present");
        Ok(Transition {
            obs,
            proposal: *proposal,
            action,
            reward: reward.total,
            next_obs,
            done,
            diagnostics: acc,
        })
    }
}
