//! Acceptance suite. Each criterion prints one PASS/FAIL line to stdout
//! (bypassing the test harness capture) and fails the test on FAIL.
//! Criteria run one at a time so that their runtimes are measured alone.

use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::sync::{Arc, Mutex, MutexGuard, OnceLock};
use std::time::{Duration, Instant};

use ndarray::{Array1, Array2};
use preheat_core::electrochem::kinetics::{butler_volmer_flux, open_circuit_potential};
use preheat_core::electrochem::{CellModel, DfnModel, Fidelity, MeshSpec};
use preheat_core::env::{compute_reward, reward_terms, EnvConfig, RewardConfig};
use preheat_core::experiments::{compare, evaluate_run, run_scenario, train_policy, CompareReport, RunConfig, ScenarioKind};
use preheat_core::ptc::PtcParameters;
use preheat_core::rl::mlp::{finite_difference, max_relative_error, Activation, Mlp, MlpSpec};
use preheat_core::rl::mpo::{
    awr_actor_loss_and_grad, critic_input, critic_loss_and_grad, mpo_actor_loss_and_grad, softmax_weights,
    ReferenceHeads,
};
use preheat_core::rl::policy::{ACTION_DIM, OBS_DIM};
use preheat_core::rl::{ActionBounds, EvalStats, GaussianPolicy};
use preheat_core::supervisor::{
    supervise_with_limits, supervisor_limits, synthesize_pulse_waveform, ActionProposal, PulseConfig, SupervisorConfig,
};
use preheat_core::thermal::{step_thermal, TemperatureStats, ThermalParameters, ThermalState};
use preheat_core::{DfnParameters, Electrode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

/// Prints the verdict line and fails the test when a check failed or the
/// runtime budget was exceeded.
fn report(id: u32, name: &str, checks: &[(&str, bool)], elapsed: Duration, budget: Duration) {
    let mut failed: Vec<&str> = checks.iter().filter(|(_, ok)| !ok).map(|(n, _)| *n).collect();
    if elapsed > budget {
        failed.push("runtime budget");
    }
    let verdict = if failed.is_empty() { "PASS" } else { "FAIL" };
    let mut line = format!(
        "criterion {id} [{name}]: {verdict} ({:.1} s of {:.0} s budget)",
        elapsed.as_secs_f64(),
        budget.as_secs_f64()
    );
    if !failed.is_empty() {
        line.push_str(&format!("; failed: {}", failed.join(", ")));
    }
    let mut out = std::io::stdout().lock();
    writeln!(out, "{line}").unwrap();
    for (n, ok) in checks {
        writeln!(out, "    {} {n}", if *ok { "ok  " } else { "FAIL" }).unwrap();
    }
    out.flush().unwrap();
    assert!(failed.is_empty(), "{line}");
}

fn note(text: &str) {
    let mut out = std::io::stdout().lock();
    writeln!(out, "    {text}").unwrap();
    out.flush().unwrap();
}

fn params() -> Arc<DfnParameters> {
    Arc::new(DfnParameters::marquis2019())
}

fn reduced_config() -> RunConfig {
    let mut c = RunConfig::default();
    c.env.fidelity = Fidelity::Reduced;
    c
}

#[test]
fn criterion_1_conservation() {
    let _g = serial();
    let start = Instant::now();
    let p = params();
    let mut m = DfnModel::new(p.clone(), MeshSpec::default(), 0.5, 258.15).unwrap();
    let pulse = PulseConfig::default();
    let profile = synthesize_pulse_waveform(&pulse, 1.0, 1.5, 0.05).unwrap().samples(0.05);
    let initial = m.total_lithium();
    let mut worst_step: f64 = 0.0;
    let mut prev = initial;
    for &i in profile.iter().cycle().take(100) {
        m.step(p.current_density(i), 258.15, 0.05).unwrap();
        let now = m.total_lithium();
        worst_step = worst_step.max((now - prev).abs() / prev);
        prev = now;
    }
    let drift = (prev - initial).abs() / initial;
    note(&format!("lithium drift over 100 pulsed steps {drift:.2e}, worst step {worst_step:.2e}"));

    let tp = ThermalParameters {
        convection: 0.0,
        ..ThermalParameters::default()
    };
    let mut s = ThermalState::uniform(&tp, 253.15).unwrap();
    let mut worst_thermal: f64 = 0.0;
    for k in 0..200 {
        let q_gen = 2e4 * (1.0 + (k as f64 * 0.3).sin());
        let q_ptc = if k % 7 < 4 { 180.0 } else { 0.0 };
        let next = step_thermal(&s, q_gen, q_ptc, 253.15, &tp, 0.05).unwrap();
        // stored-energy change summed node by node, free of the cancellation
        // in differencing two absolute totals
        let gained = 2.0 * tp.area() * tp.heat_capacity * tp.dx()
            * next.temperatures.iter().zip(&s.temperatures).map(|(a, b)| a - b).sum::<f64>();
        let input = (q_gen * tp.cell_volume() + q_ptc) * 0.05;
        worst_thermal = worst_thermal.max((gained - input).abs() / input);
        s = next;
    }
    note(&format!("adiabatic energy balance worst relative error per step {worst_thermal:.2e}"));
    report(
        1,
        "conservation",
        &[
            ("lithium conserved within 1e-8 relative over 100 steps", drift < 1e-8 && worst_step < 1e-8),
            ("adiabatic thermal balance within 1e-9 relative per step", worst_thermal < 1e-9),
        ],
        start.elapsed(),
        Duration::from_secs(60),
    );
}

#[test]
fn criterion_2_analytic_limits() {
    let _g = serial();
    let start = Instant::now();
    let p = params();
    let mut worst_ocv: f64 = 0.0;
    for soc in [0.1, 0.3, 0.5, 0.7, 0.9] {
        let mut m = DfnModel::new(p.clone(), MeshSpec::default(), soc, 263.15).unwrap();
        for _ in 0..20 {
            m.step(0.0, 263.15, 0.05).unwrap();
        }
        let u_pos = open_circuit_potential(&p, Electrode::Positive, m.mean_stoichiometry(Electrode::Positive)).unwrap();
        let u_neg = open_circuit_potential(&p, Electrode::Negative, m.mean_stoichiometry(Electrode::Negative)).unwrap();
        worst_ocv = worst_ocv.max((m.terminal_voltage() - (u_pos - u_neg)).abs());
    }
    note(&format!("equilibrium voltage worst deviation {worst_ocv:.2e} V"));

    let mut worst_bv: f64 = 0.0;
    for t in [253.15, 273.15, 298.15] {
        for k in -200..=200 {
            let eta = k as f64 * 1e-3;
            let a = butler_volmer_flux(&p, 3.0, eta, t, 0.5).unwrap();
            let b = butler_volmer_flux(&p, 3.0, -eta, t, 0.5).unwrap();
            if a != 0.0 {
                worst_bv = worst_bv.max((a + b).abs() / a.abs());
            }
        }
    }
    note(&format!("Butler-Volmer antisymmetry worst relative residual {worst_bv:.2e}"));

    let ptc = PtcParameters::default();
    let tc = ptc.curie_temperature().unwrap();
    let below = ptc.r0 * (ptc.alpha0 * (tc - ptc.t0)).exp();
    let above = ptc.r1 * (ptc.alpha1 * (tc - ptc.t1)).exp();
    let continuity = (below - above).abs() / above;
    let curie = PtcParameters {
        r1: ptc.r0 * (ptc.alpha0 * (ptc.t1 - ptc.t0)).exp(),
        ..ptc
    };
    let identity = (curie.curie_temperature().unwrap() - curie.t1).abs() / curie.t1;
    note(&format!("PTC continuity {continuity:.2e}, Curie identity {identity:.2e}"));
    report(
        2,
        "analytic limits",
        &[
            ("equilibrium terminal voltage equals U+ - U- within 1e-6 V", worst_ocv < 1e-6),
            ("Butler-Volmer antisymmetric at alpha = 0.5 to machine precision", worst_bv <= 4.0 * f64::EPSILON),
            ("PTC resistance continuous at the Curie point within 1e-9", continuity < 1e-9),
            ("Curie temperature equals T1 when R1 = R0 exp(alpha0 (T1 - T0))", identity < 1e-12),
        ],
        start.elapsed(),
        Duration::from_secs(10),
    );
}

#[test]
fn criterion_3_reward_oracle() {
    let _g = serial();
    let start = Instant::now();
    let c = RewardConfig::default();
    // the examples are stated in hold differences, the form reward_terms takes
    let a = reward_terms(0.5, 0.3, 0.0, false, &c).total;
    let b = reward_terms(0.5, 0.8, 0.1, false, &c).total;
    let d = reward_terms(0.5, 0.6, 0.0, true, &c).r_g;
    // the same examples from consecutive hold statistics
    let s = |t_avg: f64, t_range: f64| TemperatureStats {
        t_avg,
        t_m: t_avg,
        t_out: t_avg + t_range,
        t_range,
    };
    let sa = compute_reward(&s(260.0, 0.3), &s(260.5, 0.3), false, &c).total;
    let sb = compute_reward(&s(260.0, 0.7), &s(260.5, 0.8), false, &c).total;
    let sd = compute_reward(&s(260.0, 0.6), &s(260.5, 0.6), true, &c).r_g;
    note(&format!("from differences {a}, {b}, {d}; from statistics {sa}, {sb}, {sd}"));
    report(
        3,
        "reward oracle",
        &[
            ("rise 0.5 K in 5 s, range 0.3 K gives exactly 0.1", a == 0.1 && sa == 0.1),
            ("rise 0.5 K, range 0.8 K, range change 0.1 K gives exactly -1.6", b == -1.6),
            // 0.8 - 0.7 is not 0.1 in binary, so the statistics form is one rounding away
            ("same example from statistics within 1e-15", (sb + 1.6).abs() < 1e-15),
            ("terminal with range 0.6 K gives r_g exactly -200", d == -200.0 && sd == -200.0),
        ],
        start.elapsed(),
        Duration::from_secs(1),
    );
}

struct SafetyTally {
    total: usize,
    safe: usize,
    ratio_ok: usize,
    v_lo: f64,
    v_hi: f64,
}

/// Supervises random proposals at random states and replays each supervised
/// hold on a copy of the cell, recording the voltage excursion.
fn safety_sweep(fidelity: Fidelity, states: usize, per_state: usize, seed: u64) -> SafetyTally {
    let p = params();
    let pulse = PulseConfig::default();
    let cfg = SupervisorConfig::default();
    let (v_min, v_max) = (p.cell.lower_cutoff, p.cell.upper_cutoff);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = SafetyTally {
        total: 0,
        safe: 0,
        ratio_ok: 0,
        v_lo: f64::INFINITY,
        v_hi: f64::NEG_INFINITY,
    };
    for _ in 0..states {
        let t = rng.random_range(253.15..273.15);
        let soc = rng.random_range(0.2..0.9);
        let m = CellModel::new(fidelity, p.clone(), MeshSpec::default(), soc, t).unwrap();
        let limits = supervisor_limits(&m, t, &pulse, &cfg);
        for _ in 0..per_state {
            let proposal = ActionProposal {
                v_ptc: rng.random_range(-2.0..12.0),
                i_c: rng.random_range(0.0..5.0),
                i_d: rng.random_range(0.0..5.0),
            };
            let a = supervise_with_limits(&proposal, &m, t, 10.0, &pulse, &cfg, &limits);
            tally.total += 1;
            if a.i_d >= 1.05 * a.i_c {
                tally.ratio_ok += 1;
            }
            let mut sim = m.clone();
            let mut ok = true;
            for i in synthesize_pulse_waveform(&pulse, a.i_c, a.i_d, 0.05).unwrap().samples(0.05) {
                sim.step(p.current_density(i), t, 0.05).unwrap();
                let v = sim.terminal_voltage();
                tally.v_lo = tally.v_lo.min(v);
                tally.v_hi = tally.v_hi.max(v);
                ok &= (v_min..=v_max).contains(&v);
            }
            if ok {
                tally.safe += 1;
            }
        }
    }
    tally
}

#[test]
fn criterion_4_supervisor_safety() {
    let _g = serial();
    let start = Instant::now();
    // the full count on the reduced model used for training and comparison,
    // plus a sample on the full model
    let reduced = safety_sweep(Fidelity::Reduced, 100, 100, 2024);
    let full = safety_sweep(Fidelity::Dfn, 20, 25, 2025);
    for (name, t) in [("reduced", &reduced), ("full", &full)] {
        note(&format!(
            "{name}: {}/{} holds inside the voltage window (observed {:.4} to {:.4} V), {}/{} with i_d >= 1.05 i_c",
            t.safe, t.total, t.v_lo, t.v_hi, t.ratio_ok, t.total
        ));
    }
    report(
        4,
        "supervisor safety",
        &[
            ("10^4 proposals on the reduced model", reduced.total == 10_000),
            ("every supervised hold keeps the terminal voltage in the window", reduced.safe == reduced.total),
            ("every supervised action has i_d >= 1.05 i_c", reduced.ratio_ok == reduced.total),
            ("same on a 500-proposal sample of the full model", full.safe == full.total && full.ratio_ok == full.total),
        ],
        start.elapsed(),
        Duration::from_secs(600),
    );
}

struct SeedResult {
    seed: u64,
    policy: GaussianPolicy,
    eval: EvalStats,
    random: EvalStats,
    train_time: Duration,
}

/// Default-budget training of every configured seed, shared by criteria 5
/// and 6.
fn trained() -> &'static Vec<SeedResult> {
    static TRAINED: OnceLock<Vec<SeedResult>> = OnceLock::new();
    TRAINED.get_or_init(|| {
        let cfg = reduced_config();
        let params = cfg.load_params().unwrap();
        cfg.seeds
            .iter()
            .map(|&seed| {
                let t0 = Instant::now();
                let (trainer, _) = train_policy(&cfg, params.clone(), seed, None).unwrap();
                let train_time = t0.elapsed();
                let policy = trainer.learner().policy().clone();
                let r = evaluate_run(&cfg, params.clone(), &policy, 10_000 + seed, None).unwrap();
                SeedResult {
                    seed,
                    policy,
                    eval: r.policy,
                    random: r.random,
                    train_time,
                }
            })
            .collect()
    })
}

#[test]
fn criterion_5_baseline_ordering() {
    let _g = serial();
    let policy = &trained()[0].policy;
    let start = Instant::now();
    let cfg = reduced_config();
    let (_, r): (_, CompareReport) = compare(&cfg, cfg.load_params().unwrap(), policy).unwrap();
    for row in &r.rows {
        note(&format!(
            "{}: time {:?} s, final range {:.3} K, film {:.0} J, pulse {:.0} J, total {:.0} J ({:.0} J per side, published {:.0} J)",
            row.scenario,
            row.time_to_target,
            row.final_t_range,
            row.ptc_energy,
            row.pulse_energy,
            row.total_energy,
            row.total_energy_per_side,
            row.reference_total_per_side
        ));
    }
    note(&format!("pulse-only excess over film-only {:+.1} %", 100.0 * r.checks.pulse_excess_over_ptc));
    let c = r.checks;
    report(
        5,
        "baseline ordering",
        &[
            ("time to target: film-only < combined", c.time_ptc_lt_combined),
            ("time to target: combined < pulse-only", c.time_combined_lt_pulse),
            ("final range: film-only > combined", c.t_range_ptc_gt_combined),
            ("total energy: pulse-only strictly greatest", c.energy_pulse_greatest),
            ("total energy ordering matches the published table", c.energy_order_matches_reference),
            ("per-side totals within 50 % of the published values", c.magnitudes_within_50_percent),
            ("pulse-only excess over film-only above 30 %", c.pulse_excess_over_30_percent),
        ],
        start.elapsed(),
        Duration::from_secs(1800),
    );
}

#[test]
fn criterion_6_rl_training() {
    let _g = serial();
    let start = Instant::now();
    let seeds = trained();
    let cfg = reduced_config();
    let params = cfg.load_params().unwrap();
    let pulse = run_scenario(ScenarioKind::PulseOnly, &cfg, params.clone(), None).unwrap();
    let pulse_time = pulse.report.time_to_target.unwrap_or(f64::INFINITY);
    let mut beats_random = true;
    let mut faster = true;
    let mut uniform = true;
    let mut ptc_phase = true;
    let mut pulse_phase = true;
    for s in seeds {
        let combined = run_scenario(ScenarioKind::CombinedPolicy, &cfg, params.clone(), Some(&s.policy)).unwrap();
        let time = combined.report.time_to_target.unwrap_or(f64::INFINITY);
        // phase means over evaluation episodes long enough to have thirds
        let long: Vec<_> = s.eval.episodes.iter().filter(|e| e.holds >= 3).collect();
        let n = long.len().max(1) as f64;
        let mean = |f: fn(&preheat_core::rl::EpisodeSummary) -> f64| long.iter().map(|e| f(e)).sum::<f64>() / n;
        let (ptc_first, ptc_last) = (mean(|e| e.ptc_power_first_third), mean(|e| e.ptc_power_last_third));
        let (pulse_first, pulse_last) = (mean(|e| e.pulse_power_first_third), mean(|e| e.pulse_power_last_third));
        note(&format!(
            "seed {}: trained in {:.0} s; return {:.2} vs random {:.2}; from 253.15 K reached in {time} s (pulse-only {pulse_time} s), final range {:.4} K; film power {ptc_first:.1} -> {ptc_last:.1} W, pulse heat {pulse_first:.1} -> {pulse_last:.1} W over {} episodes",
            s.seed,
            s.train_time.as_secs_f64(),
            s.eval.mean_return,
            s.random.mean_return,
            combined.report.final_t_range,
            long.len()
        ));
        beats_random &= s.eval.mean_return > s.random.mean_return;
        faster &= time < pulse_time;
        uniform &= combined.report.complete && combined.report.final_t_range < 0.5;
        ptc_phase &= !long.is_empty() && ptc_first > ptc_last;
        pulse_phase &= !long.is_empty() && pulse_last > pulse_first;
    }
    let train_total: Duration = seeds.iter().map(|s| s.train_time).sum();
    report(
        6,
        "RL training",
        &[
            ("three seeds trained on the default budget", seeds.len() == 3),
            ("(a) every seed's evaluation return exceeds the random baseline", beats_random),
            ("(b) combined policy reaches 0 C faster than pulse-only", faster),
            ("(b) combined policy final range below 0.5 K", uniform),
            ("(c) film power higher in the first third than in the last", ptc_phase),
            ("(c) pulse heat higher in the last third than in the first", pulse_phase),
        ],
        train_total + start.elapsed(),
        Duration::from_secs(7200),
    );
}

#[test]
fn criterion_7_gradient_checks() {
    let _g = serial();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut results = Vec::new();

    let x = Array2::from_shape_fn((5, OBS_DIM), |(i, j)| ((i * 3 + j) as f64 * 0.77).sin());
    let u = Array2::from_shape_fn((5, ACTION_DIM), |(i, j)| ((i + 2 * j) as f64 * 0.53).cos());
    let y = Array1::from_shape_fn(5, |i| (i as f64 * 0.9).sin());
    let critic = Mlp::new(MlpSpec::new(OBS_DIM + ACTION_DIM, &[4, 4], 1), &mut rng);
    let cx = critic_input(&x, &u);
    let (_, g) = critic_loss_and_grad(&critic, &cx, &y);
    let fd = finite_difference(&critic.to_flat(), 1e-6, |p| {
        let mut c = critic.clone();
        c.set_flat(p);
        critic_loss_and_grad(&c, &cx, &y).0
    });
    results.push(("critic", max_relative_error(&g, &fd, 1e-7)));

    for act in [Activation::Tanh, Activation::Relu] {
        let spec = MlpSpec {
            activation: act,
            ..MlpSpec::new(3, &[4, 4], 2)
        };
        let net = Mlp::new(spec, &mut rng);
        let xin = Array2::from_shape_fn((4, 3), |(i, j)| ((i * 3 + j) as f64 * 0.41).sin());
        let loss = |m: &Mlp| m.forward(&xin).mapv(|v| v * v).sum() * 0.5;
        let (out, cache) = net.forward_cached(&xin);
        let (g, _) = net.backward(&cache, &out);
        let fd = finite_difference(&net.to_flat(), 1e-6, |p| {
            let mut m = net.clone();
            m.set_flat(p);
            loss(&m)
        });
        results.push((if act == Activation::Tanh { "tanh body" } else { "relu body" }, max_relative_error(&g, &fd, 1e-7)));
    }

    let bounds = ActionBounds::from_env(&EnvConfig::default());
    let actor = GaussianPolicy::new(&[4, 4], bounds, &mut rng);
    let mut reference_net = actor.clone();
    let mut p = reference_net.net.to_flat();
    for v in &mut p {
        *v += rng.random_range(-0.2..0.2);
    }
    reference_net.net.set_flat(&p);
    let obs = Array2::from_shape_fn((4, OBS_DIM), |(i, j)| ((i * 5 + j) as f64 * 0.61).sin());
    let heads = reference_net.forward_batch(&obs);
    let n = 3;
    let samples = Array2::from_shape_fn((4 * n, ACTION_DIM), |(r, c)| {
        heads.mean[[r / n, c]] + (0.5 * heads.logvar[[r / n, c]]).exp() * ((r * 3 + c) as f64 * 1.3).sin()
    });
    let w = softmax_weights(&Array2::from_shape_fn((4, n), |(i, j)| (i as f64 - j as f64) * 0.3), 0.7);
    let reference = ReferenceHeads {
        mean: heads.mean.clone(),
        logvar: heads.logvar.clone(),
    };
    let (_, g, _, _) = mpo_actor_loss_and_grad(&actor, &obs, &samples, &w, &reference, 0.8, 1.7);
    let fd = finite_difference(&actor.net.to_flat(), 1e-6, |p| {
        let mut a = actor.clone();
        a.net.set_flat(p);
        mpo_actor_loss_and_grad(&a, &obs, &samples, &w, &reference, 0.8, 1.7).0
    });
    results.push(("MPO actor", max_relative_error(&g, &fd, 1e-7)));
    let (_, g) = awr_actor_loss_and_grad(&actor, &obs, &samples, &w);
    let fd = finite_difference(&actor.net.to_flat(), 1e-6, |p| {
        let mut a = actor.clone();
        a.net.set_flat(p);
        awr_actor_loss_and_grad(&a, &obs, &samples, &w).0
    });
    results.push(("AWR actor", max_relative_error(&g, &fd, 1e-7)));

    for (name, e) in &results {
        note(&format!("{name}: max relative error {e:.2e}"));
    }
    let checks: Vec<(String, bool)> = results
        .iter()
        .map(|(name, e)| (format!("{name} gradient within 1e-4 relative"), *e < 1e-4))
        .collect();
    let checks: Vec<(&str, bool)> = checks.iter().map(|(n, ok)| (n.as_str(), *ok)).collect();
    report(7, "gradient checks", &checks, start.elapsed(), Duration::from_secs(60));
}

fn preheat(args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_preheat")).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "preheat {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn same_files(a: &Path, b: &Path, names: &[&str]) -> bool {
    names.iter().all(|n| {
        let (x, y) = (std::fs::read(a.join(n)), std::fs::read(b.join(n)));
        matches!((x, y), (Ok(x), Ok(y)) if x == y && !x.is_empty())
    })
}

#[test]
fn criterion_8_determinism() {
    let _g = serial();
    let start = Instant::now();
    let d = tempfile::tempdir().unwrap();
    let p = |s: &str| d.path().join(s).to_string_lossy().into_owned();
    for run in ["a", "b"] {
        preheat(&["simulate", "--scenario", "ptc-only", "--fidelity", "dfn", "--seed", "3", "--out", &p(run)]);
        preheat(&["simulate", "--scenario", "pulse-only", "--fidelity", "reduced", "--seed", "3", "--out", &p(run)]);
    }
    preheat(&["train", "--episodes", "3", "--fidelity", "reduced", "--seed", "5", "--out", &p("ck")]);
    let ck = p("ck/checkpoint.json");
    for run in ["ea", "eb"] {
        preheat(&[
            "evaluate", "--checkpoint", &ck, "--episodes", "3", "--fidelity", "reduced", "--seed", "9", "--out", &p(run),
        ]);
    }
    let sim = same_files(
        &d.path().join("a"),
        &d.path().join("b"),
        &["trace_ptc-only.csv", "trace_pulse-only.csv"],
    );
    let eval = same_files(
        &d.path().join("ea"),
        &d.path().join("eb"),
        &["trace_episode_000.csv", "trace_episode_001.csv", "trace_episode_002.csv"],
    );
    report(
        8,
        "determinism",
        &[
            ("simulate traces byte-identical across runs", sim),
            ("evaluate traces byte-identical across runs", eval),
        ],
        start.elapsed(),
        Duration::from_secs(300),
    );
}
