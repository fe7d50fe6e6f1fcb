//! Lossless spectral filtering ahead of amplification, and thermal
//! occupancy of the amplification frequency.

use std::io::Read;

use num_complex::Complex64;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::fock::{annihilation, embed, moments, DiagonalState, FockSpace, NumberStats, OperatorMatrix};

/// ħ/k_B in kelvin-seconds.
pub const HBAR_OVER_K: f64 = 1.054_571_817e-34 / 1.380_649e-23;

/// Tolerance on `|T|² + |R|² = 1` for externally supplied pairs.
pub const TABLE_UNITARITY_TOLERANCE: f64 = 1e-9;

/// Transmission `T` of the input mode and admixture `R` of the internal
/// mode `c` at angular frequency `omega`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferPair {
    pub omega: f64,
    pub t: Complex64,
    pub r: Complex64,
}

impl TransferPair {
    /// Validates `| |T|² + |R|² − 1 | ≤ tolerance`.
    pub fn new(omega: f64, t: Complex64, r: Complex64, tolerance: f64) -> Result<Self> {
        let pair = TransferPair { omega, t, r };
        let deviation = pair.unitarity_deviation();
        if !(deviation <= tolerance) {
            return Err(Error::NonUnitary { deviation, row: None });
        }
        Ok(pair)
    }

    pub fn transmission(&self) -> f64 {
        self.t.norm_sqr()
    }

    pub fn reflection(&self) -> f64 {
        self.r.norm_sqr()
    }

    pub fn unitarity_deviation(&self) -> f64 {
        (self.transmission() + self.reflection() - 1.0).abs()
    }
}

/// Single-pole resonance of full width `gamma` centred on `omega0`.
pub fn lorentzian_transfer(omega: f64, omega0: f64, gamma: f64) -> Result<TransferPair> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidParameter(format!("linewidth must be > 0, got {gamma}")));
    }
    let detuning = omega - omega0;
    let half = gamma / 2.0;
    let denom = detuning * detuning + half * half;
    // T = h/(iΔ + h) and R = iΔ/(iΔ + h), multiplied through by the conjugate
    let t = Complex64::new(half * half / denom, -detuning * half / denom);
    let r = Complex64::new(detuning * detuning / denom, detuning * half / denom);
    Ok(TransferPair { omega, t, r })
}

/// Bath temperature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalEnv {
    temperature: f64,
}

impl ThermalEnv {
    pub fn new(temperature: f64) -> Result<Self> {
        if !(temperature > 0.0) || !temperature.is_finite() {
            return Err(Error::InvalidParameter(format!("temperature must be > 0, got {temperature}")));
        }
        Ok(ThermalEnv { temperature })
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    /// Dimensionless `ħω/kT`.
    pub fn ratio(&self, omega: f64) -> Result<f64> {
        if !(omega > 0.0) || !omega.is_finite() {
            return Err(Error::InvalidParameter(format!("frequency must be > 0, got {omega}")));
        }
        Ok(HBAR_OVER_K * omega / self.temperature)
    }

    /// Angular frequency at which `ħω/kT = x`.
    pub fn omega_at_ratio(&self, x: f64) -> f64 {
        x * self.temperature / HBAR_OVER_K
    }
}

/// Bose-Einstein occupancy `1/(e^x − 1)`.
pub fn occupancy_from_ratio(x: f64) -> f64 {
    1.0 / x.exp_m1()
}

/// `ln(1/(e^x − 1))`, finite for any `x > 0`.
pub fn ln_occupancy_from_ratio(x: f64) -> f64 {
    if x < 1.0 {
        -x.exp_m1().ln()
    } else {
        -x - (-(-x).exp()).ln_1p()
    }
}

pub fn thermal_occupancy(omega: f64, env: ThermalEnv) -> Result<f64> {
    Ok(occupancy_from_ratio(env.ratio(omega)?))
}

pub fn ln_thermal_occupancy(omega: f64, env: ThermalEnv) -> Result<f64> {
    Ok(ln_occupancy_from_ratio(env.ratio(omega)?))
}

/// Least-squares slope of `ln n̄(ω)` against `ω` over `omegas`.
pub fn log_occupancy_slope(env: ThermalEnv, omegas: &[f64]) -> Result<f64> {
    if omegas.len() < 2 {
        return Err(Error::InvalidParameter("slope fit needs at least two frequencies".into()));
    }
    let logs = omegas.iter().map(|&w| ln_thermal_occupancy(w, env)).collect::<Result<Vec<_>>>()?;
    let n = omegas.len() as f64;
    let mean_w = omegas.iter().sum::<f64>() / n;
    let mean_l = logs.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (w, l) in omegas.iter().zip(&logs) {
        sxy += (w - mean_w) * (l - mean_l);
        sxx += (w - mean_w) * (w - mean_w);
    }
    Ok(sxy / sxx)
}

/// Suppression `n̄(ω_amp)/n̄(ω_in)` gained by amplifying at `omega_amp`.
pub fn amplification_frequency_gain(omega_in: f64, omega_amp: f64, env: ThermalEnv) -> Result<f64> {
    let x_in = env.ratio(omega_in)?;
    let x_amp = env.ratio(omega_amp)?;
    Ok((ln_occupancy_from_ratio(x_amp) - ln_occupancy_from_ratio(x_in)).exp())
}

/// `â_out† â_out` with `â_out = T â ⊗ 1 + R 1 ⊗ ĉ`, on the `[a, c]` space.
pub fn filtered_output_operator(space_a: FockSpace, space_c: FockSpace, tp: TransferPair) -> Result<OperatorMatrix> {
    let shape = [space_a, space_c];
    let a = embed(&annihilation(space_a), 0, &shape)?;
    let c = embed(&annihilation(space_c), 1, &shape)?;
    let out = a.scaled(tp.t).plus(&c.scaled(tp.r))?;
    out.adjoint().compose(&out)
}

/// Statistics of the filtered mode for the product input `a ⊗ c`.
pub fn filtered_stats(tp: TransferPair, a: &DiagonalState, c: &DiagonalState) -> Result<NumberStats> {
    let op = filtered_output_operator(a.space(), c.space(), tp)?;
    moments(&[a.clone(), c.clone()], &op)
}

/// Filtered mode amplified into a single reservoir mode with statistics
/// `b_env`: `(n̄_b + G·n̄_f, Δn_b² + G²·Δn_f²)`.
pub fn filtered_amplified_stats(
    tp: TransferPair,
    a: &DiagonalState,
    c: &DiagonalState,
    gain: u64,
    b_env: NumberStats,
) -> Result<NumberStats> {
    if gain < 1 {
        return Err(Error::InvalidGain { gain: gain as f64, requirement: "integer G >= 1" });
    }
    let filtered = filtered_stats(tp, a, c)?;
    let g = gain as f64;
    NumberStats::new(b_env.mean + g * filtered.mean, b_env.variance + g * g * filtered.variance)
}

#[derive(Debug, Deserialize)]
struct TableRow {
    omega: f64,
    #[serde(rename = "T_re")]
    t_re: f64,
    #[serde(rename = "T_im")]
    t_im: f64,
    #[serde(rename = "R_re")]
    r_re: f64,
    #[serde(rename = "R_im")]
    r_im: f64,
}

/// Reads a filter table with header `omega,T_re,T_im,R_re,R_im`. Rows are
/// numbered from 1 after the header in errors.
pub fn read_transfer_table<R: Read>(reader: R) -> Result<Vec<TransferPair>> {
    let mut csv = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut pairs = Vec::new();
    for (index, record) in csv.deserialize::<TableRow>().enumerate() {
        let row = index + 1;
        let record = record.map_err(|e| Error::Table(format!("row {row}: {e}")))?;
        let pair = TransferPair {
            omega: record.omega,
            t: Complex64::new(record.t_re, record.t_im),
            r: Complex64::new(record.r_re, record.r_im),
        };
        let deviation = pair.unitarity_deviation();
        if !(deviation <= TABLE_UNITARITY_TOLERANCE) {
            return Err(Error::NonUnitary { deviation, row: Some(row) });
        }
        pairs.push(pair);
    }
    if pairs.is_empty() {
        return Err(Error::Table("no rows".into()));
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{fock_state, make_space, thermal_state};
    use crate::noise::var_single_mode;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn half_pair() -> TransferPair {
        lorentzian_transfer(1.5, 1.0, 1.0).unwrap()
    }

    #[test]
    fn resonance_is_perfect() {
        let tp = lorentzian_transfer(3.0e15, 3.0e15, 1.0e9).unwrap();
        assert_eq!(tp.t, Complex64::new(1.0, 0.0));
        assert_eq!(tp.r, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn half_width_point() {
        let tp = half_pair();
        assert_abs_diff_eq!(tp.transmission(), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(tp.reflection(), 0.5, epsilon = 1e-15);
        let below = lorentzian_transfer(0.5, 1.0, 1.0).unwrap();
        assert_abs_diff_eq!(below.transmission(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn matches_complex_division() {
        for (w, w0, gamma) in [(1.2, 1.0, 0.3), (-4.0, 2.0, 7.0), (10.0, 10.5, 0.01)] {
            let tp = lorentzian_transfer(w, w0, gamma).unwrap();
            let denom = Complex64::new(gamma / 2.0, w - w0);
            let t = Complex64::new(gamma / 2.0, 0.0) / denom;
            let r = Complex64::new(0.0, w - w0) / denom;
            assert!((tp.t - t).norm() < 1e-14 && (tp.r - r).norm() < 1e-14);
        }
    }

    #[test]
    fn rejects_bad_linewidth() {
        assert!(lorentzian_transfer(1.0, 1.0, 0.0).is_err());
        assert!(lorentzian_transfer(1.0, 1.0, -2.0).is_err());
        assert!(TransferPair::new(1.0, Complex64::new(0.9, 0.0), Complex64::new(0.0, 0.0), 1e-9).is_err());
    }

    #[test]
    fn occupancy_examples() {
        let ln2 = std::f64::consts::LN_2;
        assert_abs_diff_eq!(occupancy_from_ratio(ln2), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(occupancy_from_ratio(2.0 * ln2), 1.0 / 3.0, epsilon = 1e-15);
        // 1/(e^x − 1) = e^{−x}/(1 − e^{−x}) = Σ e^{−kx}
        let x = 30.0f64;
        let series: f64 = (1..6).map(|k| (-(k as f64) * x).exp()).sum();
        assert!((occupancy_from_ratio(x) - series).abs() <= 1e-15 * series);
        assert!((occupancy_from_ratio(x) / (-x).exp() - 1.0).abs() < 1e-6);
        for x in [0.01, 0.5, 1.0, 3.0, 25.0] {
            assert!((ln_occupancy_from_ratio(x) - occupancy_from_ratio(x).ln()).abs() < 1e-13);
        }
        assert!(ln_occupancy_from_ratio(2000.0).is_finite());
    }

    #[test]
    fn physical_units() {
        let env = ThermalEnv::new(0.5).unwrap();
        let omega = env.omega_at_ratio(std::f64::consts::LN_2);
        assert_abs_diff_eq!(thermal_occupancy(omega, env).unwrap(), 1.0, epsilon = 1e-12);
        assert!(thermal_occupancy(0.0, env).is_err());
        assert!(ThermalEnv::new(0.0).is_err());
        assert!(ThermalEnv::new(-1.0).is_err());
        assert_abs_diff_eq!(HBAR_OVER_K, 7.638_232_577_577_646e-12, epsilon = 1e-24);
    }

    #[test]
    fn occupancy_is_exponential_deep_in_the_tail() {
        let env = ThermalEnv::new(2.5).unwrap();
        let omegas: Vec<f64> = (0..=3000).map(|i| env.omega_at_ratio(10.0 + 30.0 * i as f64 / 3000.0)).collect();
        let slope = log_occupancy_slope(env, &omegas).unwrap();
        let expected = -HBAR_OVER_K / env.temperature();
        assert!((slope / expected - 1.0).abs() < 1e-6);
        assert!(log_occupancy_slope(env, &omegas[..1]).is_err());
    }

    #[test]
    fn suppression_ratio() {
        let env = ThermalEnv::new(1.0).unwrap();
        let w = env.omega_at_ratio(std::f64::consts::LN_2);
        assert_eq!(amplification_frequency_gain(w, w, env).unwrap(), 1.0);
        assert_abs_diff_eq!(amplification_frequency_gain(w, 2.0 * w, env).unwrap(), 1.0 / 3.0, epsilon = 1e-14);
        for (x_in, x_amp) in [(20.0, 25.0), (20.0, 60.0), (35.0, 300.0)] {
            let ratio = amplification_frequency_gain(env.omega_at_ratio(x_in), env.omega_at_ratio(x_amp), env).unwrap();
            let asymptote = (-(x_amp - x_in) as f64).exp();
            assert!((ratio / asymptote - 1.0).abs() < 0.01);
        }
        assert!(amplification_frequency_gain(-1.0, w, env).is_err());
    }

    #[test]
    fn filtered_operator_means() {
        let (sa, sc) = (make_space(4), make_space(4));
        let perfect = lorentzian_transfer(1.0, 1.0, 1.0).unwrap();
        for n in 0..=3 {
            let a = fock_state(sa, n).unwrap();
            let c = thermal_state(sc, 0.3).unwrap();
            assert_abs_diff_eq!(filtered_stats(perfect, &a, &c).unwrap().mean, n as f64, epsilon = 1e-12);
        }
        let swap = TransferPair { omega: 0.0, t: Complex64::new(0.0, 0.0), r: Complex64::new(0.0, 1.0) };
        let c = fock_state(sc, 2).unwrap();
        let stats = filtered_stats(swap, &fock_state(sa, 3).unwrap(), &c).unwrap();
        assert_abs_diff_eq!(stats.mean, 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(stats.variance, 0.0, epsilon = 1e-12);

        let stats = filtered_stats(half_pair(), &fock_state(sa, 1).unwrap(), &fock_state(sc, 0).unwrap()).unwrap();
        assert_abs_diff_eq!(stats.mean, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(stats.variance, 0.25, epsilon = 1e-12);
    }

    #[test]
    fn beam_splitter_oracle() {
        // Fock(n) ⊗ vacuum through transmission τ is Binomial(n, τ)
        let tp = lorentzian_transfer(1.3, 1.0, 1.0).unwrap();
        let tau = tp.transmission();
        let (sa, sc) = (make_space(5), make_space(5));
        for n in 0..=5u64 {
            let stats = filtered_stats(tp, &fock_state(sa, n).unwrap(), &fock_state(sc, 0).unwrap()).unwrap();
            assert_abs_diff_eq!(stats.mean, n as f64 * tau, epsilon = 1e-12);
            assert_abs_diff_eq!(stats.variance, n as f64 * tau * (1.0 - tau), epsilon = 1e-12);
        }
    }

    #[test]
    fn amplified_pipeline_examples() {
        let (sa, sc) = (make_space(3), make_space(3));
        let one = fock_state(sa, 1).unwrap();
        let perfect = lorentzian_transfer(2.0, 2.0, 0.1).unwrap();
        let c = thermal_state(sc, 0.2).unwrap();
        let b = NumberStats::thermal(0.7);
        let out = filtered_amplified_stats(perfect, &one, &c, 50, b).unwrap();
        assert_abs_diff_eq!(out.mean, b.mean + 50.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out.variance, b.variance, epsilon = 1e-12);

        let dark = TransferPair { omega: 0.0, t: Complex64::new(0.0, 0.0), r: Complex64::new(1.0, 0.0) };
        let vac = fock_state(sc, 0).unwrap();
        assert_eq!(filtered_amplified_stats(dark, &one, &vac, 9, b).unwrap(), b);

        let out = filtered_amplified_stats(half_pair(), &one, &vac, 2, NumberStats::fixed(0.0)).unwrap();
        assert_abs_diff_eq!(out.mean, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out.variance, 1.0, epsilon = 1e-12);
        assert!(filtered_amplified_stats(half_pair(), &one, &vac, 0, b).is_err());
    }

    #[test]
    fn perfect_transmission_reproduces_single_mode() {
        let (sa, sc) = (make_space(30), make_space(2));
        let perfect = lorentzian_transfer(0.0, 0.0, 1.0).unwrap();
        let b = NumberStats::thermal(1.3);
        for (a, exact) in [(fock_state(sa, 2).unwrap(), true), (thermal_state(sa, 0.4).unwrap(), false)] {
            let c = thermal_state(sc, 0.5).unwrap();
            for gain in [1u64, 3, 10] {
                let out = filtered_amplified_stats(perfect, &a, &c, gain, b).unwrap();
                let expected = var_single_mode(gain, a.stats(), b).unwrap();
                if exact {
                    assert_eq!(out.variance, expected);
                } else {
                    assert!((out.variance - expected).abs() <= 1e-12 * expected);
                }
            }
        }
    }

    #[test]
    fn internal_mode_noise_is_amplified() {
        let (sa, sc) = (make_space(3), make_space(40));
        let a = fock_state(sa, 1).unwrap();
        let c = thermal_state(sc, 0.5).unwrap();
        let b = NumberStats::thermal(0.1);
        let perfect = filtered_amplified_stats(lorentzian_transfer(1.0, 1.0, 1.0).unwrap(), &a, &c, 5, b).unwrap();
        let leaky = filtered_amplified_stats(lorentzian_transfer(1.2, 1.0, 1.0).unwrap(), &a, &c, 5, b).unwrap();
        assert!(leaky.variance > perfect.variance);
    }

    #[test]
    fn table_parsing() {
        let good = "omega,T_re,T_im,R_re,R_im\n1.0,1.0,0.0,0.0,0.0\n2.0,0.6,0.0,0.0,0.8\n";
        let pairs = read_transfer_table(good.as_bytes()).unwrap();
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[1].r, Complex64::new(0.0, 0.8));

        let bad = "omega,T_re,T_im,R_re,R_im\n1.0,1.0,0.0,0.0,0.0\n2.0,0.6,0.0,0.0,0.9\n";
        match read_transfer_table(bad.as_bytes()) {
            Err(Error::NonUnitary { row: Some(2), .. }) => {}
            other => panic!("{other:?}"),
        }
        let err = read_transfer_table(bad.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("row 2"), "{err}");
        assert!(read_transfer_table("omega,T_re\n1,1\n".as_bytes()).is_err());
        assert!(read_transfer_table("omega,T_re,T_im,R_re,R_im\n".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn lorentzian_unitarity(w in -1e3f64..1e3, w0 in -1e3f64..1e3, gamma in 1e-3f64..1e3) {
            let tp = lorentzian_transfer(w, w0, gamma).unwrap();
            prop_assert!(tp.unitarity_deviation() <= 1e-12);
        }

        #[test]
        fn transmission_falls_with_detuning(d1 in 0.0f64..50.0, extra in 1e-6f64..50.0, gamma in 0.1f64..10.0) {
            let near = lorentzian_transfer(d1, 0.0, gamma).unwrap();
            let far = lorentzian_transfer(-(d1 + extra), 0.0, gamma).unwrap();
            prop_assert!(far.transmission() < near.transmission());
        }
    }
}
