use std::fs::File;

use super::{CliError, RunConfig};
use crate::filter::{
    filtered_amplified_stats, lorentzian_transfer, read_transfer_table, thermal_occupancy, ThermalEnv, TransferPair,
};
use crate::fock::{check_truncation, fock_state, make_space, recommended_cutoff, thermal_state, NumberStats};
use crate::mc::{run_scenario, run_shelving, Model, ScenarioSpec};
use crate::noise::{self, Mechanism};

/// 17 significant digits, so parsing the text recovers the value exactly.
/// Infinities are written `inf`/`-inf`.
pub fn fmt_float(x: f64) -> String {
    if x == f64::INFINITY {
        "inf".into()
    } else if x == f64::NEG_INFINITY {
        "-inf".into()
    } else if x.is_nan() {
        "nan".into()
    } else {
        format!("{x:.16e}")
    }
}

fn opt<T: ToString>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        f64::INFINITY
    } else {
        num / den
    }
}

/// Rows of text fields under a fixed header.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        CsvTable { header: header.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, csv::Error> {
        let mut writer = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        writer.write_record(&self.header)?;
        for row in &self.rows {
            writer.write_record(row)?;
        }
        writer.into_inner().map_err(|e| e.into_error().into())
    }
}

pub(super) fn cmd_snr_table(config: &RunConfig) -> Result<CsvTable, CliError> {
    let c = &config.snr;
    if c.n_a < 1 || !(c.dn_b >= 0.0) || !c.dn_b.is_finite() {
        return Err(CliError::Config(format!("SNR needs n_a >= 1 and dn_b >= 0, got n_a={} dn_b={}", c.n_a, c.dn_b)));
    }
    let mut table = CsvTable::new(&["mechanism", "G", "g", "N", "n_a", "dn_b", "snr"]);
    let mut skipped = 0;
    for &kind in &c.mechanisms {
        let step_gains: Vec<Option<u64>> =
            if kind.is_multistep() { c.step_gains.iter().copied().map(Some).collect() } else { vec![None] };
        for &step in &step_gains {
            for &gain in &c.gains {
                let value = Mechanism::new(kind, gain, step).and_then(|m| Ok((m, noise::snr(&m, c.n_a, c.dn_b)?)));
                match value {
                    Ok((m, snr)) => table.push(vec![
                        kind.name().into(),
                        fmt_float(gain),
                        opt(m.step_gain()),
                        opt(m.steps()),
                        c.n_a.to_string(),
                        fmt_float(c.dn_b),
                        fmt_float(snr),
                    ]),
                    Err(e) => {
                        skipped += 1;
                        log::warn!("skipping {} at G={gain}{}: {e}", kind.name(), step.map(|g| format!(", g={g}")).unwrap_or_default());
                    }
                }
            }
        }
    }
    println!("snr-table: {} rows, {skipped} skipped", table.rows.len());
    Ok(table)
}

fn scenario_specs(config: &RunConfig) -> Result<Vec<ScenarioSpec>, CliError> {
    config
        .mc
        .scenarios
        .iter()
        .map(|entry| {
            let spec = ScenarioSpec {
                model: entry.model.clone(),
                input_n_a: entry.input_n_a,
                reservoir: entry.reservoir.clone(),
                trials: config.trials,
                seed: config.seed,
            };
            spec.validate()?;
            Ok(spec)
        })
        .collect()
}

pub(super) fn cmd_mc(config: &RunConfig) -> Result<CsvTable, CliError> {
    let specs = scenario_specs(config)?;
    if specs.is_empty() {
        return Err(CliError::Config("no scenarios configured".into()));
    }
    let mut table = CsvTable::new(&[
        "model", "G", "g", "N", "n_a", "reservoir", "trials", "seed", "mean", "variance", "analytic_variance", "z_score",
    ]);
    for spec in &specs {
        let stats = run_scenario(spec)?;
        let analytic = spec.analytic_variance()?;
        let z = stats.variance_z_score(analytic);
        println!(
            "{:<16} G={:<5} n_a={} {:<14} mean={:.6} variance={:.6} analytic={:.6} z={:+.3}",
            spec.model.name(),
            spec.model.gain()?,
            spec.input_n_a,
            spec.reservoir.to_string(),
            stats.mean,
            stats.variance,
            analytic,
            z
        );
        table.push(vec![
            spec.model.name().into(),
            spec.model.gain()?.to_string(),
            opt(spec.model.step_gain()),
            opt(spec.model.steps()),
            spec.input_n_a.to_string(),
            spec.reservoir.to_string(),
            spec.trials.to_string(),
            spec.seed.to_string(),
            fmt_float(stats.mean),
            fmt_float(stats.variance),
            fmt_float(analytic),
            fmt_float(z),
        ]);
    }
    Ok(table)
}

fn transfer_pairs(config: &RunConfig) -> Result<Vec<TransferPair>, CliError> {
    let f = &config.filter;
    if let Some(path) = &f.table {
        let file = File::open(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        return read_transfer_table(file).map_err(|e| CliError::Config(format!("{}: {e}", path.display())));
    }
    if f.points < 1 || !(f.omega_min <= f.omega_max) {
        return Err(CliError::Config(format!(
            "frequency grid needs points >= 1 and omega_min <= omega_max, got {} points on [{}, {}]",
            f.points, f.omega_min, f.omega_max
        )));
    }
    (0..f.points)
        .map(|i| {
            let omega = if f.points == 1 {
                f.omega_min
            } else {
                f.omega_min + (f.omega_max - f.omega_min) * i as f64 / (f.points - 1) as f64
            };
            Ok(lorentzian_transfer(omega, f.omega0, f.gamma)?)
        })
        .collect()
}

pub(super) fn cmd_filter_scan(config: &RunConfig) -> Result<CsvTable, CliError> {
    let f = &config.filter;
    let env = ThermalEnv::new(f.temperature)?;
    let nbar_amp = thermal_occupancy(f.omega_amp, env)?;
    if f.internal_nbar.is_some_and(|n| !(n >= 0.0) || !n.is_finite()) {
        return Err(CliError::Config("internal occupation must be >= 0".into()));
    }
    let pairs = transfer_pairs(config)?;
    let b_env = NumberStats::thermal(nbar_amp);
    // â_out†â_out moves at most one excitation between a and c, so one spare
    // level above the input suffices for exact moments of a number state.
    let space_a = make_space(f.n_a as usize + 1);
    let signal_in = fock_state(space_a, f.n_a)?;
    let dark_in = fock_state(space_a, 0)?;

    let mut table = CsvTable::new(&["omega", "abs_T2", "abs_R2", "nbar_at_omega_amp", "snr_end_to_end"]);
    let mut best: Option<(f64, f64)> = None;
    for tp in pairs {
        let nbar_c = match f.internal_nbar {
            Some(n) => n,
            None => thermal_occupancy(tp.omega, env)?,
        };
        let cutoff = config.cutoff.unwrap_or_else(|| recommended_cutoff(NumberStats::thermal(nbar_c), 0.0, 0));
        let c = thermal_state(make_space(cutoff), nbar_c)?;
        check_truncation(&c)
            .map_err(|e| CliError::CheckFailed(format!("internal mode at omega={}: {e}", tp.omega)))?;
        let with = filtered_amplified_stats(tp, &signal_in, &c, config.gain, b_env)?;
        let dark = filtered_amplified_stats(tp, &dark_in, &c, config.gain, b_env)?;
        let snr = ratio(with.mean - dark.mean, with.variance.sqrt());
        if best.is_none_or(|(_, s)| snr > s) {
            best = Some((tp.omega, snr));
        }
        table.push(vec![
            fmt_float(tp.omega),
            fmt_float(tp.transmission()),
            fmt_float(tp.reflection()),
            fmt_float(nbar_amp),
            fmt_float(snr),
        ]);
    }
    if let Some((omega, snr)) = best {
        println!("filter-scan: {} points, nbar(omega_amp)={nbar_amp:.6e}, best SNR {snr:.6} at omega={omega:.6e}", table.rows.len());
    }
    Ok(table)
}

pub(super) fn cmd_shelving_demo(config: &RunConfig) -> Result<CsvTable, CliError> {
    let c = &config.shelving;
    let gain = config.gain;
    let specs = (1..=gain)
        .rev()
        .map(|modes| {
            let spec = ScenarioSpec {
                model: Model::Shelving { gain, cavity_modes: modes },
                input_n_a: c.n_a,
                reservoir: c.reservoir.clone(),
                trials: config.trials,
                seed: config.seed,
            };
            spec.validate()?;
            Ok(spec)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut table = CsvTable::new(&[
        "cavity_modes", "G", "n_a", "reservoir", "trials", "seed", "mean", "variance", "analytic_variance", "z_score",
        "snr_mc", "snr_analytic",
    ]);
    let signal = (gain * c.n_a) as f64;
    for spec in &specs {
        let Model::Shelving { cavity_modes, .. } = spec.model else { unreachable!() };
        let stats = run_shelving(spec)?;
        let analytic = spec.analytic_variance()?;
        let snr_mc = ratio(signal, stats.variance.sqrt());
        let snr_analytic = ratio(signal, analytic.sqrt());
        println!("cavity modes {cavity_modes:>4}: SNR {snr_mc:.4} (closed form {snr_analytic:.4})");
        table.push(vec![
            cavity_modes.to_string(),
            gain.to_string(),
            c.n_a.to_string(),
            spec.reservoir.to_string(),
            spec.trials.to_string(),
            spec.seed.to_string(),
            fmt_float(stats.mean),
            fmt_float(stats.variance),
            fmt_float(analytic),
            fmt_float(stats.variance_z_score(analytic)),
            fmt_float(snr_mc),
            fmt_float(snr_analytic),
        ]);
    }
    Ok(table)
}
