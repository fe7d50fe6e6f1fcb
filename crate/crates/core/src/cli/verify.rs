use std::collections::HashSet;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::commands::{fmt_float, CsvTable};
use super::{CliError, RunConfig};
use crate::channels::{
    caves_number_out, check_pegg_barnett, clean_region_deviation, commutator, ideal_schrodinger_map,
    linear_number_target, nonlinear_bout, phase_sensitive_number_out, random_phase, shift_operator,
};
use crate::error::Result;
use crate::filter::{
    filtered_amplified_stats, filtered_stats, log_occupancy_slope, lorentzian_transfer, ThermalEnv, HBAR_OVER_K,
};
use crate::fock::{
    annihilation, check_truncation, fock_state, make_space, moments, number_op, recommended_cutoff, thermal_state,
    DiagonalState, NumberStats, OperatorMatrix,
};
use crate::noise::{self, Mechanism, MechanismKind};

/// One row of the verification table.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub value: f64,
    pub limit: f64,
    pub detail: String,
}

struct Measured {
    value: f64,
    limit: f64,
    detail: String,
}

fn measured(value: f64, limit: f64) -> Measured {
    Measured { value, limit, detail: String::new() }
}

fn violations(count: usize) -> Measured {
    measured(count as f64, 0.0)
}

fn rel_diff(x: f64, y: f64) -> f64 {
    (x - y).abs() / y.abs().max(1.0)
}

fn run(name: &'static str, check: impl FnOnce() -> Result<Measured>) -> CheckOutcome {
    match check() {
        Ok(m) => CheckOutcome { name, passed: m.value <= m.limit, value: m.value, limit: m.limit, detail: m.detail },
        Err(e) => CheckOutcome { name, passed: false, value: f64::NAN, limit: f64::NAN, detail: e.to_string() },
    }
}

fn max_diff(x: &OperatorMatrix, y: &OperatorMatrix) -> Result<f64> {
    x.max_abs_diff(y)
}

/// Parameters shared by the checks, after defaults and overrides.
struct Setup {
    gain: u64,
    n_a: u64,
    nbar: f64,
    phase: f64,
    cutoff_b: usize,
    cutoff_override: Option<usize>,
    linear_gains: Vec<f64>,
}

fn setup(config: &RunConfig) -> std::result::Result<Setup, CliError> {
    let v = &config.verify;
    if !(v.reservoir_nbar >= 0.0) || !v.reservoir_nbar.is_finite() {
        return Err(CliError::Config(format!("reservoir occupation must be >= 0, got {}", v.reservoir_nbar)));
    }
    if v.linear_gains.iter().any(|g| !(*g >= 1.0) || !g.is_finite()) {
        return Err(CliError::Config("linear gains must be >= 1".into()));
    }
    let phase = match config.fixed_phase {
        Some(phase) => phase,
        None => random_phase(&mut ChaCha8Rng::seed_from_u64(config.seed)),
    };
    let cutoff_b = config.cutoff.unwrap_or_else(|| {
        recommended_cutoff(NumberStats::thermal(v.reservoir_nbar), config.gain as f64, v.n_a)
    });
    Ok(Setup {
        gain: config.gain,
        n_a: v.n_a,
        nbar: v.reservoir_nbar,
        phase,
        cutoff_b,
        cutoff_override: config.cutoff,
        linear_gains: v.linear_gains.clone(),
    })
}

/// Output distribution of `n_b + G·n_a` on the reservoir space.
fn shifted_thermal(s: &Setup) -> Result<DiagonalState> {
    let space = make_space(s.cutoff_b);
    let shift = (s.gain * s.n_a) as usize;
    let ratio = s.nbar / (s.nbar + 1.0);
    let weights = (0..space.dim())
        .map(|n| if n < shift { 0.0 } else { (1.0 - ratio) * ratio.powi((n - shift) as i32) })
        .collect();
    DiagonalState::from_weights(space, weights)
}

fn fock_checks(s: &Setup, out: &mut Vec<CheckOutcome>) {
    let space = make_space(s.cutoff_b);
    out.push(run("fock.ladder_commutator", || {
        let a = annihilation(space);
        let comm = commutator(&a, &a.adjoint())?;
        let mut diag = vec![1.0; space.dim()];
        diag[space.cutoff()] = -(space.cutoff() as f64);
        Ok(measured(max_diff(&comm, &OperatorMatrix::diagonal(vec![space], &diag)?)?, 1e-12))
    }));
    out.push(run("fock.number_operator", || {
        let a = annihilation(space);
        Ok(measured(max_diff(&a.adjoint().compose(&a)?, &number_op(space))?, 1e-12))
    }));
    out.push(run("fock.thermal_normalization", || {
        let st = thermal_state(space, s.nbar)?;
        let total: f64 = st.probs().iter().sum();
        let monotone = st.probs().windows(2).all(|w| w[1] <= w[0]);
        Ok(measured((total - 1.0).abs() + if monotone { 0.0 } else { 1.0 }, 1e-12))
    }));
    out.push(run("fock.thermal_moments", || {
        let st = thermal_state(space, s.nbar)?;
        let direct = st.stats();
        let via_op = moments(std::slice::from_ref(&st), &number_op(space))?;
        Ok(measured(rel_diff(via_op.mean, direct.mean).max(rel_diff(via_op.variance, direct.variance)), 1e-9))
    }));
    out.push(run("fock.fock_moments", || {
        let mut worst = 0.0f64;
        for n in 0..=space.cutoff().min(3) as u64 {
            let st = moments(&[fock_state(space, n)?], &number_op(space))?;
            worst = worst.max((st.mean - n as f64).abs()).max(st.variance);
        }
        Ok(measured(worst, 1e-12))
    }));
    out.push(run("fock.truncation_guard", || {
        let leak = match shifted_thermal(s) {
            Ok(state) => match check_truncation(&state) {
                Ok(()) => crate::fock::leakage(&state, crate::fock::LEAKAGE_LEVELS),
                Err(crate::Error::TruncationLeakage { leakage, .. }) => leakage,
                Err(e) => return Err(e),
            },
            Err(_) => 1.0,
        };
        let mut m = measured(leak, crate::fock::LEAKAGE_LIMIT);
        m.detail = format!("cutoff {} for G={} n_a={} nbar={}", s.cutoff_b, s.gain, s.n_a, s.nbar);
        Ok(m)
    }));
}

/// Moments of `b_out†b_out` on `thermal(n̄)_b ⊗ Fock(n_a)_a`.
fn nonlinear_moments(s: &Setup, phase: f64) -> Result<(NumberStats, DiagonalState)> {
    let (space_b, space_a) = (make_space(s.cutoff_b), make_space(s.n_a as usize + 1));
    let b_out = nonlinear_bout(space_b, space_a, s.gain, phase)?;
    let states = [thermal_state(space_b, s.nbar)?, fock_state(space_a, s.n_a)?];
    let stats = moments(&states, &b_out.adjoint().compose(&b_out)?)?;
    Ok((stats, states[0].clone()))
}

fn channel_checks(s: &Setup, out: &mut Vec<CheckOutcome>) -> Option<NumberStats> {
    let space_b = make_space(s.cutoff_b);
    let space_a = make_space(s.n_a as usize + 1);
    out.push(run("channels.shift_unitary", || {
        let shift = shift_operator(space_b, s.phase);
        let op = shift.operator();
        let product = op.compose(&op.adjoint())?;
        Ok(measured(max_diff(&product, &OperatorMatrix::identity(vec![space_b]))?, 1e-12))
    }));
    let b_out = nonlinear_bout(space_b, space_a, s.gain, s.phase);
    out.push(run("channels.nonlinear_number_identity", || {
        let b_out = b_out.clone()?;
        let target = linear_number_target(space_b, space_a, s.gain)?;
        Ok(measured(max_diff(&b_out.adjoint().compose(&b_out)?, &target)?, 1e-12))
    }));
    let comm = b_out.clone().and_then(|b| commutator(&b, &b.adjoint()));
    out.push(run("channels.pegg_barnett", || {
        let report = check_pegg_barnett(&comm.clone()?, space_b);
        let mut m = measured(report.max_deviation, crate::channels::PEGG_BARNETT_TOLERANCE);
        m.detail = format!("diag 1 with -{} at the top b level", space_b.cutoff());
        Ok(m)
    }));
    out.push(run("channels.clean_region", || {
        Ok(measured(clean_region_deviation(&comm.clone()?, space_b, space_b.cutoff())?, 1e-12))
    }));

    let mut reported = None;
    out.push(run("channels.phase_invariance", || {
        let (at_phase, _) = nonlinear_moments(s, s.phase)?;
        let (at_zero, _) = nonlinear_moments(s, 0.0)?;
        reported = Some(at_phase);
        let mut m = measured(rel_diff(at_phase.mean, at_zero.mean).max(rel_diff(at_phase.variance, at_zero.variance)), 1e-12);
        m.detail = moment_line(at_phase);
        Ok(m)
    }));
    out.push(run("channels.nonlinear_moments", || {
        let (stats, b_state) = nonlinear_moments(s, s.phase)?;
        let b = b_state.stats();
        let expected_var = noise::var_single_mode(s.gain, NumberStats::fixed(s.n_a as f64), b)?;
        let expected_mean = b.mean + (s.gain * s.n_a) as f64;
        Ok(measured(rel_diff(stats.variance, expected_var).max(rel_diff(stats.mean, expected_mean)), 1e-9))
    }));

    let cutoff_a = s.cutoff_override.unwrap_or(s.n_a as usize + 2);
    let cutoff_lin = s.cutoff_override.unwrap_or_else(|| recommended_cutoff(NumberStats::thermal(s.nbar), 1.0, 1));
    out.push(run("channels.caves_oracle", || {
        let (sa, sb) = (make_space(cutoff_a), make_space(cutoff_lin));
        let states = [fock_state(sa, s.n_a)?, thermal_state(sb, s.nbar)?];
        let mut worst = 0.0f64;
        for &g in &s.linear_gains {
            let stats = moments(&states, &caves_number_out(sa, sb, g)?)?;
            let expected = noise::var_caves(g, states[0].stats(), states[1].stats())?;
            worst = worst.max(rel_diff(stats.variance, expected));
        }
        Ok(measured(worst, 1e-8))
    }));
    out.push(run("channels.phase_sensitive_oracle", || {
        let sa = make_space(cutoff_a);
        let mut worst = 0.0f64;
        for n in [0, s.n_a] {
            let state = fock_state(sa, n)?;
            for &g in &s.linear_gains {
                let stats = moments(std::slice::from_ref(&state), &phase_sensitive_number_out(sa, g)?)?;
                worst = worst.max(rel_diff(stats.variance, noise::var_phase_sensitive(g, state.stats())?));
            }
        }
        Ok(measured(worst, 1e-8))
    }));
    out.push(run("channels.ideal_map", || {
        let mut bad = 0;
        for gain in 1..=5u64 {
            let mut seen = HashSet::new();
            for n in 0..=3u64 {
                for m in 0..=20u64 {
                    for big_n in 0..=20u64 {
                        match ideal_schrodinger_map(n, m, big_n, gain, s.phase, 1.0) {
                            Ok(r) => {
                                bad += usize::from(r.m_out + r.n_out != m + big_n);
                                bad += usize::from(r.n_out - big_n != gain * n);
                                bad += usize::from(m < gain * n);
                                bad += usize::from(!seen.insert((r.n_in, r.m_out, r.n_out)));
                            }
                            Err(_) => bad += usize::from(m >= gain * n),
                        }
                    }
                }
            }
        }
        Ok(violations(bad))
    }));
    reported
}

fn noise_checks(s: &Setup, out: &mut Vec<CheckOutcome>) {
    let n_a = s.n_a.max(1);
    out.push(run("noise.snr_matches_variance", || {
        let b = NumberStats::new(0.0, 1.0)?;
        let a = NumberStats::fixed(n_a as f64);
        let mut worst = 0.0f64;
        for gain in [4u64, 16, 64] {
            let g = gain as f64;
            let cases = [
                (Mechanism::new(MechanismKind::SingleMode, g, None)?, noise::var_single_mode(gain, a, b)?),
                (Mechanism::new(MechanismKind::GModes, g, None)?, noise::var_g_modes(gain, a, b)?),
                (
                    Mechanism::new(MechanismKind::MultiStepSingleMode, g, Some(2))?,
                    noise::var_multistep_single(gain, 2, a, b)?,
                ),
                (
                    Mechanism::new(MechanismKind::MultiStepMultiMode, g, Some(4))?,
                    noise::var_multistep_multi(gain, 4, a, b)?,
                ),
            ];
            for (mech, var) in cases {
                worst = worst.max(rel_diff(noise::snr(&mech, n_a, 1.0)?, g * n_a as f64 / var.sqrt()));
            }
        }
        Ok(measured(worst, 1e-12))
    }));
    out.push(run("noise.hierarchy", || {
        let mut bad = 0;
        for gain in [4.0, 16.0, 64.0, 256.0] {
            let snr = |kind, step| Mechanism::new(kind, gain, step).and_then(|m| noise::snr(&m, 1, 1.0));
            let sm = snr(MechanismKind::SingleMode, None)?;
            let gm = snr(MechanismKind::GModes, None)?;
            let mss = snr(MechanismKind::MultiStepSingleMode, Some(2))?;
            let msm = snr(MechanismKind::MultiStepMultiMode, Some(2))?;
            let pi = snr(MechanismKind::PhaseInsensitive, None)?;
            bad += usize::from(!(sm > gm && gm > mss && mss > msm && msm < pi));
        }
        let mut m = violations(bad);
        m.detail = "SingleMode > GModes > MultiStepSingle(2) > MultiStepMulti(2) < PhaseInsensitive".into();
        Ok(m)
    }));
    out.push(run("noise.linear_saturation", || {
        let pi = noise::snr(&Mechanism::new(MechanismKind::PhaseInsensitive, 1e4, None)?, 1, 1.0)?;
        let ps = noise::snr(&Mechanism::new(MechanismKind::PhaseSensitive, 1e4, None)?, 1, 1.0)?;
        Ok(measured(rel_diff(pi, 1.0).max((ps / 2f64.sqrt() - 1.0).abs()), 0.01))
    }));
    out.push(run("noise.unit_gain_infinite", || {
        let pi = noise::snr(&Mechanism::new(MechanismKind::PhaseInsensitive, 1.0, None)?, 1, 1.0)?;
        let ps = noise::snr(&Mechanism::new(MechanismKind::PhaseSensitive, 1.0, None)?, 1, 1.0)?;
        Ok(violations(usize::from(pi != f64::INFINITY) + usize::from(ps != f64::INFINITY)))
    }));
    out.push(run("noise.nonlinear_beats_linear", || {
        let mut bad = 0;
        // GModes only overtakes the linear bound once √G·(G−1) > G
        for k in 2..=10 {
            let g = f64::from(1u32 << k);
            let snr = |kind| Mechanism::new(kind, g, None).and_then(|m| noise::snr(&m, 1, 1.0));
            let pi = snr(MechanismKind::PhaseInsensitive)?;
            bad += usize::from(snr(MechanismKind::SingleMode)? <= pi) + usize::from(snr(MechanismKind::GModes)? <= pi);
        }
        Ok(violations(bad))
    }));
}

fn filter_checks(s: &Setup, out: &mut Vec<CheckOutcome>) {
    out.push(run("filter.unitarity_scan", || {
        let mut worst = 0.0f64;
        for i in 0..10_000 {
            let omega = -5.0 + 10.0 * i as f64 / 9999.0;
            worst = worst.max(lorentzian_transfer(omega, 0.3, 0.7)?.unitarity_deviation());
        }
        Ok(measured(worst, 1e-12))
    }));
    out.push(run("filter.resonance", || {
        let tp = lorentzian_transfer(2.0e15, 2.0e15, 3.0e9)?;
        Ok(violations(usize::from(tp.t != Complex64::new(1.0, 0.0)) + usize::from(tp.r != Complex64::new(0.0, 0.0))))
    }));
    out.push(run("filter.thermal_slope", || {
        let env = ThermalEnv::new(1.0)?;
        let omegas: Vec<f64> = (0..=3000).map(|i| env.omega_at_ratio(10.0 + 30.0 * i as f64 / 3000.0)).collect();
        let slope = log_occupancy_slope(env, &omegas)?;
        Ok(measured((slope / (-HBAR_OVER_K / env.temperature()) - 1.0).abs(), 1e-6))
    }));
    let sa = make_space(s.n_a as usize + 1);
    let sc = make_space(recommended_cutoff(NumberStats::thermal(0.5), 0.0, 0));
    out.push(run("filter.pipeline_single_mode", || {
        let perfect = lorentzian_transfer(1.0, 1.0, 1.0)?;
        let a = fock_state(sa, s.n_a)?;
        let b = NumberStats::thermal(s.nbar);
        let stats = filtered_amplified_stats(perfect, &a, &thermal_state(sc, 0.5)?, s.gain, b)?;
        Ok(measured(rel_diff(stats.variance, noise::var_single_mode(s.gain, a.stats(), b)?), 1e-12))
    }));
    out.push(run("filter.half_transmission", || {
        let half = lorentzian_transfer(1.5, 1.0, 1.0)?;
        let stats = filtered_stats(half, &fock_state(sa, 1)?, &fock_state(sc, 0)?)?;
        Ok(measured((stats.mean - 0.5).abs().max((stats.variance - 0.25).abs()), 1e-12))
    }));
    out.push(run("filter.internal_noise_amplified", || {
        let a = fock_state(sa, s.n_a)?;
        let c = thermal_state(sc, 0.5)?;
        let b = NumberStats::thermal(s.nbar);
        let perfect = filtered_amplified_stats(lorentzian_transfer(1.0, 1.0, 1.0)?, &a, &c, s.gain, b)?;
        let leaky = filtered_amplified_stats(lorentzian_transfer(1.2, 1.0, 1.0)?, &a, &c, s.gain, b)?;
        Ok(violations(usize::from(leaky.variance <= perfect.variance)))
    }));
}

fn moment_line(stats: NumberStats) -> String {
    format!("mean={:.10e} variance={:.10e}", stats.mean, stats.variance)
}

/// Runs every check; configuration problems are reported before any check.
pub fn run_checks(config: &RunConfig) -> std::result::Result<(Vec<CheckOutcome>, Option<NumberStats>), CliError> {
    let s = setup(config)?;
    let mut out = Vec::new();
    fock_checks(&s, &mut out);
    let reported = channel_checks(&s, &mut out);
    noise_checks(&s, &mut out);
    filter_checks(&s, &mut out);
    Ok((out, reported))
}

pub(super) fn cmd_verify(config: &RunConfig) -> std::result::Result<(CsvTable, std::result::Result<(), CliError>), CliError> {
    let (checks, reported) = run_checks(config)?;
    let mut table = CsvTable::new(&["check", "passed", "value", "limit", "detail"]);
    let width = checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
    for c in &checks {
        let status = if c.passed { "PASS" } else { "FAIL" };
        println!("{status}  {:width$}  {:>12.3e} <= {:<8.1e} {}", c.name, c.value, c.limit, c.detail);
        table.push(vec![
            c.name.to_string(),
            c.passed.to_string(),
            fmt_float(c.value),
            fmt_float(c.limit),
            c.detail.clone(),
        ]);
    }
    if let Some(stats) = reported {
        println!("moments of b_out^dag b_out: {}", moment_line(stats));
    }
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
    println!("{} of {} checks passed", checks.len() - failed.len(), checks.len());
    let outcome = if failed.is_empty() { Ok(()) } else { Err(CliError::CheckFailed(failed.join(", "))) };
    Ok((table, outcome))
}
