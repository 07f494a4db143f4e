//! Trace rows, CSV input/output and energy accounting.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::Sample;
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::rl::EpisodeRecord;

/// Field order is the CSV column order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    /// s
    pub t: f64,
    /// A, discharge positive; per-hold rows hold the hold mean.
    pub current: f64,
    pub v_ptc: f64,
    pub v_t: f64,
    pub soc: f64,
    pub t_m: f64,
    pub t_out: f64,
    pub t_avg: f64,
    pub t_range: f64,
    /// W/m^3
    pub q_gen: f64,
    /// W
    pub q_ptc: f64,
    pub reward: f64,
}

pub const TRACE_HEADER: [&str; 12] = [
    "t", "current", "v_ptc", "v_t", "soc", "t_m", "t_out", "t_avg", "t_range", "q_gen", "q_ptc", "reward",
];

impl TraceRecord {
    fn from_sample(s: &Sample, reward: f64) -> Self {
        Self {
            t: s.t,
            current: s.current,
            v_ptc: s.v_ptc,
            v_t: s.v_t,
            soc: s.soc,
            t_m: s.stats.t_m,
            t_out: s.stats.t_out,
            t_avg: s.stats.t_avg,
            t_range: s.stats.t_range,
            q_gen: s.q_gen,
            q_ptc: s.q_ptc,
            reward,
        }
    }

    fn is_finite(&self) -> bool {
        [
            self.t, self.current, self.v_ptc, self.v_t, self.soc, self.t_m, self.t_out, self.t_avg, self.t_range,
            self.q_gen, self.q_ptc, self.reward,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// Rows for one episode: the initial state, then one row per hold holding
/// hold-mean powers and current, or one row per substep when
/// `per_substep` is set and substeps were recorded. Each row's powers apply
/// over the interval since the previous row.
pub fn trace_from_record(rec: &EpisodeRecord, per_substep: bool) -> Vec<TraceRecord> {
    let mut rows = vec![TraceRecord::from_sample(&rec.initial, 0.0)];
    for tr in &rec.transitions {
        let d = &tr.diagnostics;
        if per_substep && !d.substeps.is_empty() {
            let last = d.substeps.len() - 1;
            for (k, s) in d.substeps.iter().enumerate() {
                rows.push(TraceRecord::from_sample(s, if k == last { tr.reward } else { 0.0 }));
            }
        } else {
            rows.push(TraceRecord {
                t: d.time,
                current: d.mean_current,
                v_ptc: tr.action.v_ptc,
                v_t: tr.next_obs.v_t,
                soc: tr.next_obs.soc,
                t_m: d.stats.t_m,
                t_out: d.stats.t_out,
                t_avg: d.stats.t_avg,
                t_range: d.stats.t_range,
                q_gen: d.mean_q_gen,
                q_ptc: d.mean_q_ptc,
                reward: tr.reward,
            });
        }
    }
    rows
}

pub fn trace_to_csv(rows: &[TraceRecord]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record(TRACE_HEADER)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

pub fn write_trace_csv(path: impl AsRef<Path>, rows: &[TraceRecord]) -> Result<()> {
    write_atomic(path, &trace_to_csv(rows)?)
}

pub fn read_trace_csv(path: impl AsRef<Path>) -> Result<Vec<TraceRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header != TRACE_HEADER {
        return Err(Error::Config(format!("unexpected trace header {header:?}")));
    }
    let rows = r.deserialize().collect::<std::result::Result<Vec<TraceRecord>, _>>()?;
    Ok(rows)
}

/// Validates monotone time and finite fields.
pub fn check_trace(rows: &[TraceRecord]) -> Result<()> {
    if let Some(r) = rows.iter().find(|r| !r.is_finite()) {
        return Err(Error::Domain(format!("non-finite trace row at t = {}", r.t)));
    }
    if rows.windows(2).any(|w| w[1].t <= w[0].t) {
        return Err(Error::Domain("trace time is not increasing".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    /// Film electrical energy, J.
    pub ptc_energy: f64,
    /// Heat generated in the cell while pulsing, J.
    pub pulse_energy: f64,
    /// ptc_energy + pulse_energy, J.
    pub total_energy: f64,
    /// Net electrical energy delivered by the cell, J (auxiliary column,
    /// from row-end voltages and row-mean currents).
    pub lib_energy: f64,
    /// First time the mean temperature reached the target, s.
    pub time_to_target: Option<f64>,
    pub final_t_range: f64,
    /// False when the trace never reached the target.
    pub complete: bool,
}

/// Integrates the row powers over their preceding intervals. Internal heat
/// counts only where the cell current is nonzero.
pub fn energy_accounting(rows: &[TraceRecord], t_des: f64, cell_volume: f64) -> EnergyReport {
    let mut ptc = 0.0;
    let mut pulse = 0.0;
    let mut lib = 0.0;
    for w in rows.windows(2) {
        let dt = w[1].t - w[0].t;
        let r = &w[1];
        ptc += r.q_ptc * dt;
        if r.current != 0.0 {
            pulse += r.q_gen * cell_volume * dt;
        }
        lib += r.v_t * r.current * dt;
    }
    let time_to_target = rows.iter().find(|r| r.t_avg >= t_des).map(|r| r.t);
    EnergyReport {
        ptc_energy: ptc,
        pulse_energy: pulse,
        total_energy: ptc + pulse,
        lib_energy: lib,
        time_to_target,
        final_t_range: rows.last().map_or(0.0, |r| r.t_range),
        complete: time_to_target.is_some(),
    }
}

/// Trace of a film held at constant power, bypassing the resistance law.
pub fn constant_power_trace(power: f64, duration: f64, dt: f64, temperature: f64) -> Vec<TraceRecord> {
    let n = (duration / dt).round() as usize;
    (0..=n)
        .map(|k| TraceRecord {
            t: k as f64 * dt,
            current: 0.0,
            v_ptc: 0.0,
            v_t: 0.0,
            soc: 0.5,
            t_m: temperature,
            t_out: temperature,
            t_avg: temperature,
            t_range: 0.0,
            q_gen: 0.0,
            q_ptc: if k == 0 { 0.0 } else { power },
            reward: 0.0,
        })
        .collect()
}
