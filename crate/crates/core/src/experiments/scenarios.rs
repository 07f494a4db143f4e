//! Scenario runs, comparisons, the film-voltage sweep, and the training and
//! evaluation drivers.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::plots::{energy_bars, trace_plot, write_plot};
use super::trace::{energy_accounting, trace_from_record, write_trace_csv, EnergyReport, TraceRecord};
use super::{RunConfig, ScenarioKind};
use crate::env::{EnvConfig, PreheatEnv};
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::params::DfnParameters;
use crate::rl::{
    evaluate_with_records, rollout, ActionBounds, Checkpoint, Controller, EpisodeMetrics, EpisodeRecord, EvalStats,
    GaussianPolicy, Trainer,
};
use crate::supervisor::ActionProposal;

/// Published energy totals for the three heating strategies, J per film
/// side: film only, combined, pulse only.
pub const REFERENCE_TOTAL_ENERGY: [(ScenarioKind, f64); 3] = [
    (ScenarioKind::PtcOnly, 5563.0),
    (ScenarioKind::CombinedPolicy, 6448.0),
    (ScenarioKind::PulseOnly, 9628.0),
];

pub fn reference_total(kind: ScenarioKind) -> Option<f64> {
    REFERENCE_TOTAL_ENERGY.iter().find(|(k, _)| *k == kind).map(|(_, e)| *e)
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

fn write_csv_rows<T: Serialize>(path: impl AsRef<Path>, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_atomic(path, &bytes)
}

/// Environment for scenario runs: substeps recorded when per-substep
/// traces are requested.
pub fn scenario_env(cfg: &RunConfig, params: Arc<DfnParameters>) -> Result<PreheatEnv> {
    let env = EnvConfig {
        record_substeps: cfg.per_substep,
        ..cfg.env.clone()
    };
    PreheatEnv::new(params, env)
}

/// Fixed proposals of the two baselines: full film voltage, or the largest
/// charge amplitude the supervisor allows with the smallest admissible
/// discharge amplitude.
pub fn baseline_proposal(kind: ScenarioKind, env: &EnvConfig) -> Option<ActionProposal> {
    match kind {
        ScenarioKind::PtcOnly => Some(ActionProposal {
            v_ptc: env.ptc.v_max,
            i_c: 0.0,
            i_d: 0.0,
        }),
        ScenarioKind::PulseOnly => Some(ActionProposal {
            v_ptc: 0.0,
            i_c: env.supervisor.max_charge_current,
            i_d: 0.0,
        }),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOutput {
    pub kind: ScenarioKind,
    pub record: EpisodeRecord,
    pub trace: Vec<TraceRecord>,
    pub report: EnergyReport,
}

/// Runs one heating strategy from the configured initial state until the
/// target or the time limit.
pub fn run_scenario(
    kind: ScenarioKind,
    cfg: &RunConfig,
    params: Arc<DfnParameters>,
    policy: Option<&GaussianPolicy>,
) -> Result<ScenarioOutput> {
    let mut env = scenario_env(cfg, params)?;
    let controller = match (kind, policy) {
        (ScenarioKind::CombinedPolicy, Some(p)) => Controller::Policy {
            policy: p,
            deterministic: true,
        },
        (ScenarioKind::CombinedPolicy, None) => {
            return Err(Error::Config("combined-policy needs a checkpoint".into()))
        }
        (k, _) => Controller::Fixed(
            baseline_proposal(k, env.config())
                .ok_or_else(|| Error::Config(format!("'{k}' is not a single-run scenario")))?,
        ),
    };
    let mut rng = rand::SeedableRng::seed_from_u64(cfg.seed);
    let record = rollout(
        &mut env,
        &controller,
        &mut rng,
        Some((cfg.initial_temperature, cfg.initial_soc)),
    )?;
    let trace = trace_from_record(&record, cfg.per_substep);
    let report = energy_accounting(&trace, env.config().episode.t_des, env.config().thermal.cell_volume());
    Ok(ScenarioOutput {
        kind,
        record,
        trace,
        report,
    })
}

/// Writes `trace_<name>.csv`, `report_<name>.json` and `plot_<name>.vl.json`.
pub fn write_scenario(out: &Path, name: &str, s: &ScenarioOutput) -> Result<()> {
    let trace_file = format!("trace_{name}.csv");
    write_trace_csv(out.join(&trace_file), &s.trace)?;
    write_json(out.join(format!("report_{name}.json")), &s.report)?;
    write_plot(out.join(format!("plot_{name}.vl.json")), &trace_plot(name, &trace_file))
}

pub fn load_policy(path: &Path) -> Result<GaussianPolicy> {
    Ok(Checkpoint::load(path)?.learner.actor)
}

/// Mean heating rate to the target, K/s; uses the final state when the
/// target was not reached.
pub fn heating_rate(trace: &[TraceRecord], report: &EnergyReport) -> f64 {
    let (first, last) = match (trace.first(), trace.last()) {
        (Some(a), Some(b)) => (a, b),
        _ => return 0.0,
    };
    let (t, temp) = match report.time_to_target {
        Some(t) => (t, trace.iter().find(|r| r.t == t).map_or(last.t_avg, |r| r.t_avg)),
        None => (last.t, last.t_avg),
    };
    if t > first.t {
        (temp - first.t_avg) / (t - first.t)
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub scenario: String,
    pub ptc_energy: f64,
    pub pulse_energy: f64,
    pub total_energy: f64,
    pub lib_energy: f64,
    /// Total for one film side, the basis of the published values, J.
    pub total_energy_per_side: f64,
    pub reference_total_per_side: f64,
    pub time_to_target: Option<f64>,
    pub heating_rate: f64,
    pub final_t_range: f64,
    pub complete: bool,
}

impl CompareRow {
    pub fn new(s: &ScenarioOutput) -> Self {
        let r = &s.report;
        Self {
            scenario: s.kind.name().to_owned(),
            ptc_energy: r.ptc_energy,
            pulse_energy: r.pulse_energy,
            total_energy: r.total_energy,
            lib_energy: r.lib_energy,
            total_energy_per_side: r.total_energy / 2.0,
            reference_total_per_side: reference_total(s.kind).unwrap_or(f64::NAN),
            time_to_target: r.time_to_target,
            heating_rate: heating_rate(&s.trace, r),
            final_t_range: r.final_t_range,
            complete: r.complete,
        }
    }
}

/// Ordering checks across the three strategies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompareChecks {
    pub time_ptc_lt_combined: bool,
    pub time_combined_lt_pulse: bool,
    pub t_range_ptc_gt_combined: bool,
    pub energy_pulse_greatest: bool,
    pub energy_order_matches_reference: bool,
    pub magnitudes_within_50_percent: bool,
    pub pulse_excess_over_ptc: f64,
    pub pulse_excess_over_30_percent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub rows: Vec<CompareRow>,
    pub checks: CompareChecks,
}

impl CompareReport {
    pub fn new(ptc: &ScenarioOutput, combined: &ScenarioOutput, pulse: &ScenarioOutput) -> Self {
        let time = |s: &ScenarioOutput| s.report.time_to_target.unwrap_or(f64::INFINITY);
        let e = |s: &ScenarioOutput| s.report.total_energy;
        let within = |s: &ScenarioOutput| {
            let r = reference_total(s.kind).unwrap_or(f64::NAN);
            ((e(s) / 2.0 - r) / r).abs() <= 0.5
        };
        let sign = |a: f64, b: f64| a.partial_cmp(&b);
        let excess = e(pulse) / e(ptc) - 1.0;
        let checks = CompareChecks {
            time_ptc_lt_combined: time(ptc) < time(combined),
            time_combined_lt_pulse: time(combined) < time(pulse),
            t_range_ptc_gt_combined: ptc.report.final_t_range > combined.report.final_t_range,
            energy_pulse_greatest: e(pulse) > e(ptc) && e(pulse) > e(combined),
            energy_order_matches_reference: sign(e(ptc), e(combined)) == sign(5563.0, 6448.0)
                && sign(e(combined), e(pulse)) == sign(6448.0, 9628.0)
                && sign(e(ptc), e(pulse)) == sign(5563.0, 9628.0),
            magnitudes_within_50_percent: within(ptc) && within(combined) && within(pulse),
            pulse_excess_over_ptc: excess,
            pulse_excess_over_30_percent: excess > 0.3,
        };
        Self {
            rows: vec![CompareRow::new(ptc), CompareRow::new(combined), CompareRow::new(pulse)],
            checks,
        }
    }
}

/// Film-only, combined-policy and pulse-only runs from the same state.
pub fn compare(
    cfg: &RunConfig,
    params: Arc<DfnParameters>,
    policy: &GaussianPolicy,
) -> Result<(Vec<ScenarioOutput>, CompareReport)> {
    let ptc = run_scenario(ScenarioKind::PtcOnly, cfg, params.clone(), None)?;
    let combined = run_scenario(ScenarioKind::CombinedPolicy, cfg, params.clone(), Some(policy))?;
    let pulse = run_scenario(ScenarioKind::PulseOnly, cfg, params, None)?;
    let report = CompareReport::new(&ptc, &combined, &pulse);
    Ok((vec![ptc, combined, pulse], report))
}

pub fn write_compare(out: &Path, runs: &[ScenarioOutput], report: &CompareReport) -> Result<()> {
    for s in runs {
        write_scenario(out, s.kind.name(), s)?;
    }
    write_csv_rows(out.join("compare.csv"), &report.rows)?;
    write_json(out.join("compare.json"), report)?;
    write_plot(
        out.join("plot_compare_energy.vl.json"),
        &energy_bars("Heating energy by strategy", "compare.csv", "scenario"),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub v_max: f64,
    pub heating_rate: f64,
    pub time_to_target: Option<f64>,
    pub ptc_energy: f64,
    pub pulse_energy: f64,
    pub total_energy: f64,
    pub pulse_share: f64,
    pub final_t_range: f64,
    /// Mean commanded film voltage over the run, V.
    pub mean_v_ptc: f64,
    /// Fraction of holds with the film voltage within 5 % of its limit.
    pub saturated_fraction: f64,
}

impl SweepRow {
    pub fn new(v_max: f64, s: &ScenarioOutput) -> Self {
        let r = &s.report;
        let holds = &s.record.transitions;
        let n = holds.len().max(1) as f64;
        Self {
            v_max,
            heating_rate: heating_rate(&s.trace, r),
            time_to_target: r.time_to_target,
            ptc_energy: r.ptc_energy,
            pulse_energy: r.pulse_energy,
            total_energy: r.total_energy,
            pulse_share: if r.total_energy > 0.0 { r.pulse_energy / r.total_energy } else { 0.0 },
            final_t_range: r.final_t_range,
            mean_v_ptc: holds.iter().map(|t| t.action.v_ptc).sum::<f64>() / n,
            saturated_fraction: holds.iter().filter(|t| t.action.v_ptc >= 0.95 * v_max).count() as f64 / n,
        }
    }
}

/// Combined heating at each film voltage limit. `policy_for` supplies a
/// policy for the config with the limit applied, e.g. by training one.
pub fn run_vmax_sweep(
    cfg: &RunConfig,
    params: Arc<DfnParameters>,
    mut policy_for: impl FnMut(&RunConfig) -> Result<GaussianPolicy>,
) -> Result<(Vec<ScenarioOutput>, Vec<SweepRow>)> {
    if cfg.v_max_list.is_empty() {
        return Err(Error::Config("sweep needs a nonempty v_max_list".into()));
    }
    let mut runs = Vec::new();
    let mut rows = Vec::new();
    for &v in &cfg.v_max_list {
        let mut level = cfg.clone();
        level.env.ptc.v_max = v;
        let policy = policy_for(&level)?;
        let s = run_scenario(ScenarioKind::CombinedPolicy, &level, params.clone(), Some(&policy))?;
        rows.push(SweepRow::new(v, &s));
        runs.push(s);
    }
    Ok((runs, rows))
}

pub fn write_sweep(out: &Path, runs: &[ScenarioOutput], rows: &[SweepRow]) -> Result<()> {
    for (s, r) in runs.iter().zip(rows) {
        write_scenario(out, &format!("vmax_{}", r.v_max), s)?;
    }
    write_csv_rows(out.join("sweep.csv"), rows)?;
    write_plot(
        out.join("plot_sweep_energy.vl.json"),
        &energy_bars("Heating energy by film voltage limit", "sweep.csv", "v_max"),
    )
}

/// Trains one seed, optionally writing the metrics log and checkpoints to
/// `out`. Resumes from `cfg.resume` when set, continuing to a total of
/// `cfg.train.episodes` episodes and extending an existing log in `out`.
pub fn train_policy(cfg: &RunConfig, params: Arc<DfnParameters>, seed: u64, out: Option<&Path>) -> Result<(Trainer, Vec<EpisodeMetrics>)> {
    let mut log: Vec<EpisodeMetrics> = Vec::new();
    let mut trainer = match &cfg.resume {
        Some(p) => {
            let mut t = Trainer::from_checkpoint(Checkpoint::load(p)?)?;
            t.set_episode_budget(cfg.train.episodes);
            if let Some(prev) = out.map(|o| o.join("training_metrics.csv")).filter(|f| f.exists()) {
                for row in csv::Reader::from_path(prev)?.deserialize::<EpisodeMetrics>() {
                    let row = row?;
                    if row.episode <= t.episodes_done() {
                        log.push(row);
                    }
                }
            }
            t
        }
        None => {
            let train = crate::rl::TrainConfig {
                seed,
                ..cfg.train.clone()
            };
            Trainer::new(params, cfg.env.clone(), train)?
        }
    };
    let every = trainer.config().checkpoint_every;
    let rows = trainer.train(|m, t| {
        if let Some(out) = out {
            log.push(*m);
            write_csv_rows(out.join("training_metrics.csv"), &log)?;
            if every > 0 && m.episode % every == 0 {
                t.checkpoint().save(out.join(format!("checkpoint_{:05}.json", m.episode)))?;
            }
        }
        Ok(())
    })?;
    if let Some(out) = out {
        trainer.checkpoint().save(out.join("checkpoint.json"))?;
        write_plot(
            out.join("plot_training.vl.json"),
            &super::plots::line_panels(
                "Training",
                "training_metrics.csv",
                "episode",
                &[("Return", &["episode_return"]), ("Critic loss", &["critic_loss"])],
            ),
        )?;
    }
    Ok((trainer, rows))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub policy: EvalStats,
    pub random: EvalStats,
}

/// Deterministic rollouts of `policy` and of uniform random proposals from
/// the same initial states drawn with `seed`. Writes per-episode traces of
/// the policy when `out` is given.
pub fn evaluate_run(
    cfg: &RunConfig,
    params: Arc<DfnParameters>,
    policy: &GaussianPolicy,
    seed: u64,
    out: Option<&Path>,
) -> Result<EvaluationReport> {
    let mut env = scenario_env(cfg, params)?;
    let controller = Controller::Policy {
        policy,
        deterministic: true,
    };
    let (records, stats) = evaluate_with_records(&controller, &mut env, cfg.eval_episodes, seed)?;
    let random_ctl = Controller::Random(ActionBounds::from_env(env.config()));
    let (_, random) = evaluate_with_records(&random_ctl, &mut env, cfg.eval_episodes, seed)?;
    let report = EvaluationReport { policy: stats, random };
    if let Some(out) = out {
        for (k, rec) in records.iter().enumerate() {
            let name = format!("episode_{k:03}");
            write_trace_csv(out.join(format!("trace_{name}.csv")), &trace_from_record(rec, cfg.per_substep))?;
        }
        write_json(out.join("evaluation.json"), &report)?;
    }
    Ok(report)
}
