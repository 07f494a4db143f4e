//! Safety supervisor between the policy and the cell.
//!
//! Proposals are turned into square bidirectional pulse trains. Charge
//! amplitude is capped by a predictive check on a copy of the cell held at
//! frozen temperature: over one charge half-period the terminal voltage must
//! stay at or below the upper cutoff and the negative electrode must keep a
//! nonnegative plating margin. The discharge amplitude is kept above the
//! charge amplitude by a margin and checked against the lower cutoff the
//! same way. Finally the whole hold is re-simulated and both amplitudes are
//! scaled back until it passes.

use serde::{Deserialize, Serialize};

use crate::electrochem::CellModel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PulseConfig {
    /// Hz
    pub frequency: f64,
    /// Fraction of each period spent charging.
    pub duty: f64,
    /// Length of one action hold, s.
    pub hold: f64,
    pub charge_first: bool,
}

impl Default for PulseConfig {
    fn default() -> Self {
        Self {
            frequency: 1.0,
            duty: 0.5,
            hold: 5.0,
            charge_first: true,
        }
    }
}

fn is_multiple(x: f64, step: f64) -> bool {
    let r = x / step;
    (r - r.round()).abs() < 1e-9 && r.round() >= 1.0
}

impl PulseConfig {
    pub fn period(&self) -> f64 {
        1.0 / self.frequency
    }

    pub fn cycles(&self) -> usize {
        (self.hold * self.frequency).round() as usize
    }

    pub fn charge_time(&self) -> f64 {
        self.duty * self.period()
    }

    pub fn discharge_time(&self) -> f64 {
        (1.0 - self.duty) * self.period()
    }

    /// Checks the pulse shape against an electrochemical step `dt`.
    pub fn validate(&self, dt: f64) -> Result<()> {
        if !(self.frequency > 0.0 && self.frequency.is_finite()) {
            return Err(Error::Config("pulse frequency must be > 0".into()));
        }
        if !(self.duty > 0.0 && self.duty < 1.0) {
            return Err(Error::Config("duty cycle must lie in (0, 1)".into()));
        }
        if !is_multiple(self.hold * self.frequency, 1.0) {
            return Err(Error::Config("hold must be a whole number of pulse periods".into()));
        }
        if !is_multiple(self.charge_time(), dt) || !is_multiple(self.discharge_time(), dt) {
            return Err(Error::Config(format!(
                "pulse segments do not align with the {dt} s step"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SupervisorConfig {
    /// Required excess of discharge over charge amplitude.
    pub discharge_margin: f64,
    /// Relative tolerance of the amplitude bisections.
    pub bisection_tolerance: f64,
    /// Upper end of the charge bisection bracket, A.
    pub max_charge_current: f64,
    /// Upper end of the discharge bisection bracket, A.
    pub max_discharge_current: f64,
    /// Factor applied per backoff round of the full-hold check.
    pub backoff: f64,
    pub max_backoff_rounds: usize,
}

impl Default for SupervisorConfig {
    fn default() -> Self {
        Self {
            discharge_margin: 0.05,
            bisection_tolerance: 0.01,
            max_charge_current: 4.0,
            max_discharge_current: 4.2,
            backoff: 0.9,
            max_backoff_rounds: 40,
        }
    }
}

impl SupervisorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.discharge_margin >= 0.0)
            || !(self.bisection_tolerance > 0.0 && self.bisection_tolerance < 1.0)
            || !(self.max_charge_current > 0.0)
            || !(self.max_discharge_current > 0.0)
            || !(self.backoff > 0.0 && self.backoff < 1.0)
        {
            return Err(Error::Config("invalid supervisor settings".into()));
        }
        Ok(())
    }
}

/// Raw policy output in physical units.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ActionProposal {
    /// V
    pub v_ptc: f64,
    /// Charge amplitude, A.
    pub i_c: f64,
    /// Discharge amplitude, A.
    pub i_d: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClampFlags {
    pub voltage_clamped: bool,
    pub charge_limited: bool,
    pub discharge_raised: bool,
    pub discharge_limited: bool,
    pub charge_reduced_for_discharge: bool,
    pub hold_backoff: bool,
}

impl ClampFlags {
    pub fn any(&self) -> bool {
        self.voltage_clamped
            || self.charge_limited
            || self.discharge_raised
            || self.discharge_limited
            || self.charge_reduced_for_discharge
            || self.hold_backoff
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SafeAction {
    pub v_ptc: f64,
    pub i_c: f64,
    pub i_d: f64,
    pub flags: ClampFlags,
}

impl SafeAction {
    pub fn proposal(&self) -> ActionProposal {
        ActionProposal {
            v_ptc: self.v_ptc,
            i_c: self.i_c,
            i_d: self.i_d,
        }
    }
}

/// Piecewise-constant cell current; positive is discharge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurrentProfile {
    /// (duration s, current A)
    pub segments: Vec<(f64, f64)>,
}

impl CurrentProfile {
    pub fn duration(&self) -> f64 {
        self.segments.iter().map(|s| s.0).sum()
    }

    pub fn mean_current(&self) -> f64 {
        self.segments.iter().map(|(d, i)| d * i).sum::<f64>() / self.duration()
    }

    /// Current for each step of length `dt`.
    pub fn samples(&self, dt: f64) -> Vec<f64> {
        let mut out = Vec::new();
        for &(d, i) in &self.segments {
            let n = (d / dt).round() as usize;
            out.extend(std::iter::repeat_n(i, n));
        }
        out
    }
}

pub fn synthesize_pulse_waveform(cfg: &PulseConfig, i_c: f64, i_d: f64, dt: f64) -> Result<CurrentProfile> {
    cfg.validate(dt)?;
    if !(i_c >= 0.0 && i_d >= 0.0) {
        return Err(Error::CommandRange(format!(
            "pulse amplitudes must be >= 0, got {i_c} and {i_d}"
        )));
    }
    let charge = (cfg.charge_time(), -i_c);
    let discharge = (cfg.discharge_time(), i_d);
    let mut segments = Vec::with_capacity(2 * cfg.cycles());
    for _ in 0..cfg.cycles() {
        if cfg.charge_first {
            segments.push(charge);
            segments.push(discharge);
        } else {
            segments.push(discharge);
            segments.push(charge);
        }
    }
    Ok(CurrentProfile { segments })
}

/// Replays `currents` (A) on a copy of the cell at frozen temperature and
/// reports whether the voltage window, and optionally the plating margin
/// during charge, held throughout.
pub fn replay_is_safe(model: &CellModel, currents: &[f64], temperature: f64, check_plating: bool) -> bool {
    let p = model.params();
    let (v_min, v_max) = (p.cell.lower_cutoff, p.cell.upper_cutoff);
    let dt = model.mesh().dt;
    let mut m = model.clone();
    for &i in currents {
        if m.step(p.current_density(i), temperature, dt).is_err() {
            return false;
        }
        let v = m.terminal_voltage();
        if !(v <= v_max && v >= v_min) {
            return false;
        }
        if check_plating && i < 0.0 && m.plating_margin() < 0.0 {
            return false;
        }
    }
    true
}

fn half_period_steps(model: &CellModel, seconds: f64) -> usize {
    ((seconds / model.mesh().dt).round() as usize).max(1)
}

/// Largest amplitude in [0, upper] passing `ok`, to relative tolerance `tol`.
fn bisect(upper: f64, tol: f64, ok: impl Fn(f64) -> bool) -> f64 {
    if !ok(0.0) {
        return 0.0;
    }
    if ok(upper) {
        return upper;
    }
    let (mut lo, mut hi) = (0.0, upper);
    // absolute floor keeps near-zero limits finite
    while hi - lo > tol * lo.max(1e-3 * upper) {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Largest charge amplitude (A) keeping one charge half-period below the
/// upper cutoff with a nonnegative plating margin.
pub fn max_safe_charge_current(model: &CellModel, temperature: f64, pulse: &PulseConfig, cfg: &SupervisorConfig) -> f64 {
    let n = half_period_steps(model, pulse.charge_time());
    bisect(cfg.max_charge_current, cfg.bisection_tolerance, |i| {
        replay_is_safe(model, &vec![-i; n], temperature, true)
    })
}

/// Largest discharge amplitude (A) keeping one discharge half-period above
/// the lower cutoff.
pub fn max_safe_discharge_current(model: &CellModel, temperature: f64, pulse: &PulseConfig, cfg: &SupervisorConfig) -> f64 {
    let n = half_period_steps(model, pulse.discharge_time());
    bisect(cfg.max_discharge_current, cfg.bisection_tolerance, |i| {
        replay_is_safe(model, &vec![i; n], temperature, false)
    })
}

/// State-dependent amplitude limits, reusable for many proposals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupervisorLimits {
    pub charge: f64,
    pub discharge: f64,
}

pub fn supervisor_limits(model: &CellModel, temperature: f64, pulse: &PulseConfig, cfg: &SupervisorConfig) -> SupervisorLimits {
    SupervisorLimits {
        charge: max_safe_charge_current(model, temperature, pulse, cfg),
        discharge: max_safe_discharge_current(model, temperature, pulse, cfg),
    }
}

pub fn supervise(
    proposal: &ActionProposal,
    model: &CellModel,
    temperature: f64,
    v_max: f64,
    pulse: &PulseConfig,
    cfg: &SupervisorConfig,
) -> SafeAction {
    let limits = supervisor_limits(model, temperature, pulse, cfg);
    supervise_with_limits(proposal, model, temperature, v_max, pulse, cfg, &limits)
}

pub fn supervise_with_limits(
    proposal: &ActionProposal,
    model: &CellModel,
    temperature: f64,
    v_max: f64,
    pulse: &PulseConfig,
    cfg: &SupervisorConfig,
    limits: &SupervisorLimits,
) -> SafeAction {
    let mut flags = ClampFlags::default();
    let finite_or_zero = |x: f64| if x.is_finite() { x } else { 0.0 };

    let raw_v = finite_or_zero(proposal.v_ptc);
    let v_ptc = raw_v.clamp(0.0, v_max);
    flags.voltage_clamped = v_ptc != proposal.v_ptc;

    let mut i_c = finite_or_zero(proposal.i_c).max(0.0);
    if i_c > limits.charge {
        i_c = limits.charge;
        flags.charge_limited = true;
    }
    let floor = |i_c: f64| i_c * (1.0 + cfg.discharge_margin);
    let mut i_d = finite_or_zero(proposal.i_d).max(0.0);
    if i_d < floor(i_c) {
        i_d = floor(i_c);
        flags.discharge_raised = true;
    }
    // 1e-12 slack absorbs the rounding of i_c (1 + margin) / (1 + margin)
    if i_d > limits.discharge * (1.0 + 1e-12) {
        i_d = limits.discharge;
        flags.discharge_limited = true;
        if i_d < floor(i_c) {
            i_c = limits.discharge / (1.0 + cfg.discharge_margin);
            i_d = floor(i_c);
            flags.charge_reduced_for_discharge = true;
        }
    }

    // whole-hold verification at frozen temperature
    let dt = model.mesh().dt;
    for _ in 0..cfg.max_backoff_rounds {
        let profile = match synthesize_pulse_waveform(pulse, i_c, i_d, dt) {
            Ok(p) => p,
            Err(_) => break,
        };
        if replay_is_safe(model, &profile.samples(dt), temperature, true) {
            return SafeAction { v_ptc, i_c, i_d, flags };
        }
        flags.hold_backoff = true;
        i_c *= cfg.backoff;
        i_d = (i_d * cfg.backoff).max(floor(i_c));
    }
    flags.hold_backoff = true;
    SafeAction {
        v_ptc,
        i_c: 0.0,
        i_d: 0.0,
        flags,
    }
}
