//! Closed-form output-number variances and signal-to-noise ratios.
//!
//! Every variance is written in terms of the input statistics of the signal
//! mode `a` and the reservoir mode `b`. The SNRs assume a fixed input photon
//! number (`Δn_a = 0`) and measure the signal as output minus background.
//! Linear-amplifier SNRs are upper bounds; they are returned as the bound.
//! A vanishing noise denominator yields `f64::INFINITY`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::NumberStats;

/// Amplification mechanisms whose SNR is available in closed form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MechanismKind {
    PhaseInsensitive,
    PhaseSensitive,
    SingleMode,
    GModes,
    MultiStepSingleMode,
    MultiStepMultiMode,
}

impl MechanismKind {
    pub const ALL: [MechanismKind; 6] = [
        MechanismKind::PhaseInsensitive,
        MechanismKind::PhaseSensitive,
        MechanismKind::SingleMode,
        MechanismKind::GModes,
        MechanismKind::MultiStepSingleMode,
        MechanismKind::MultiStepMultiMode,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            MechanismKind::PhaseInsensitive => "PhaseInsensitive",
            MechanismKind::PhaseSensitive => "PhaseSensitive",
            MechanismKind::SingleMode => "SingleMode",
            MechanismKind::GModes => "GModes",
            MechanismKind::MultiStepSingleMode => "MultiStepSingleMode",
            MechanismKind::MultiStepMultiMode => "MultiStepMultiMode",
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, MechanismKind::PhaseInsensitive | MechanismKind::PhaseSensitive)
    }

    pub fn is_multistep(&self) -> bool {
        matches!(self, MechanismKind::MultiStepSingleMode | MechanismKind::MultiStepMultiMode)
    }
}

impl std::str::FromStr for MechanismKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MechanismKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown mechanism '{s}'")))
    }
}

/// A mechanism with validated gain parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mechanism {
    kind: MechanismKind,
    gain: f64,
    step_gain: Option<u64>,
    steps: Option<u32>,
}

impl Mechanism {
    /// Validates `gain` (and `step_gain` for the multi-step kinds) for `kind`.
    /// `step_gain` is ignored by single-step mechanisms.
    pub fn new(kind: MechanismKind, gain: f64, step_gain: Option<u64>) -> Result<Self> {
        if kind.is_linear() {
            check_linear_gain(gain)?;
            return Ok(Mechanism { kind, gain, step_gain: None, steps: None });
        }
        let g = check_integer_gain(gain)?;
        if !kind.is_multistep() {
            return Ok(Mechanism { kind, gain, step_gain: None, steps: None });
        }
        let step_gain = step_gain.ok_or_else(|| Error::InvalidParameter(format!("{} needs a step gain", kind.name())))?;
        let steps = steps_for(g, step_gain)?;
        Ok(Mechanism { kind, gain, step_gain: Some(step_gain), steps: Some(steps) })
    }

    pub fn multistep(kind: MechanismKind, step_gain: u64, steps: u32) -> Result<Self> {
        let gain = step_gain
            .checked_pow(steps)
            .ok_or_else(|| Error::InvalidParameter(format!("{step_gain}^{steps} overflows")))?;
        Mechanism::new(kind, gain as f64, Some(step_gain))
    }

    pub fn kind(&self) -> MechanismKind {
        self.kind
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }

    pub fn step_gain(&self) -> Option<u64> {
        self.step_gain
    }

    pub fn steps(&self) -> Option<u32> {
        self.steps
    }
}

fn check_linear_gain(gain: f64) -> Result<()> {
    if gain >= 1.0 && gain.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidGain { gain, requirement: "real G >= 1" })
    }
}

fn check_integer_gain(gain: f64) -> Result<u64> {
    crate::channels::integer_gain(gain)
}

/// Number of stages `N` with `step_gain^N == gain`, in exact integer
/// arithmetic.
pub fn steps_for(gain: u64, step_gain: u64) -> Result<u32> {
    if step_gain < 2 {
        return Err(Error::InvalidParameter(format!("step gain must be >= 2, got {step_gain}")));
    }
    let mut power = step_gain;
    let mut steps = 1;
    while power < gain {
        power = match power.checked_mul(step_gain) {
            Some(p) => p,
            None => break,
        };
        steps += 1;
    }
    if power == gain {
        Ok(steps)
    } else {
        Err(Error::NotAPower { gain, step_gain })
    }
}

/// Phase-insensitive linear amplifier:
/// `G²Δn_a² + (G−1)²Δn_b² + G(G−1)(2n̄_a n̄_b + n̄_a + n̄_b + 1)`.
pub fn var_caves(gain: f64, a: NumberStats, b: NumberStats) -> Result<f64> {
    check_linear_gain(gain)?;
    let g1 = gain - 1.0;
    Ok(gain * gain * a.variance
        + g1 * g1 * b.variance
        + gain * g1 * (2.0 * a.mean * b.mean + a.mean + b.mean + 1.0))
}

/// Phase-sensitive linear amplifier:
/// `(6G(G−1) + 1)Δn_a² + 2G(G−1)(n̄_a² + n̄_a + 1)`.
pub fn var_phase_sensitive(gain: f64, a: NumberStats) -> Result<f64> {
    check_linear_gain(gain)?;
    let gg = gain * (gain - 1.0);
    Ok((6.0 * gg + 1.0) * a.variance + 2.0 * gg * (a.mean * a.mean + a.mean + 1.0))
}

/// Amplification into a single reservoir mode: `Δn_b² + G²Δn_a²`.
/// The reservoir prefactor is exactly one.
pub fn var_single_mode(gain: u64, a: NumberStats, b: NumberStats) -> Result<f64> {
    check_integer_gain(gain as f64)?;
    let g = gain as f64;
    Ok(b.variance + g * g * a.variance)
}

/// Amplification into `G` independent reservoir modes: `G·Δn_b² + G²Δn_a²`.
pub fn var_g_modes(gain: u64, a: NumberStats, b: NumberStats) -> Result<f64> {
    check_integer_gain(gain as f64)?;
    let g = gain as f64;
    Ok(g * b.variance + g * g * a.variance)
}

/// `N`-stage cascade into one mode per stage:
/// `((G²−1)/(g²−1))·Δn_b² + G²Δn_a²`.
pub fn var_multistep_single(gain: u64, step_gain: u64, a: NumberStats, b: NumberStats) -> Result<f64> {
    steps_for(gain, step_gain)?;
    let (big, small) = (gain as f64, step_gain as f64);
    Ok((big * big - 1.0) / (small * small - 1.0) * b.variance + big * big * a.variance)
}

/// `N`-stage cascade into `g` modes per excitation:
/// `G·((G−1)/(g−1))·Δn_b² + G²Δn_a²`.
pub fn var_multistep_multi(gain: u64, step_gain: u64, a: NumberStats, b: NumberStats) -> Result<f64> {
    steps_for(gain, step_gain)?;
    let (big, small) = (gain as f64, step_gain as f64);
    Ok(big * (big - 1.0) / (small - 1.0) * b.variance + big * big * a.variance)
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        f64::INFINITY
    } else {
        num / den
    }
}

/// SNR for a fixed input of `n_a` photons and reservoir fluctuation `dn_b`
/// (a standard deviation).
pub fn snr(mechanism: &Mechanism, n_a: u64, dn_b: f64) -> Result<f64> {
    if n_a < 1 {
        return Err(Error::InvalidParameter("SNR needs at least one input photon".into()));
    }
    if !(dn_b >= 0.0) || !dn_b.is_finite() {
        return Err(Error::InvalidParameter(format!("reservoir fluctuation must be >= 0, got {dn_b}")));
    }
    let n = n_a as f64;
    let g = mechanism.gain;
    let value = match mechanism.kind {
        MechanismKind::PhaseInsensitive => ratio(g * n, (g - 1.0) * dn_b),
        MechanismKind::PhaseSensitive => ratio((2.0 * g - 1.0) * n, (2.0 * g * (g - 1.0)).sqrt()),
        MechanismKind::SingleMode => ratio(g * n, dn_b),
        MechanismKind::GModes => ratio(g.sqrt() * n, dn_b),
        MechanismKind::MultiStepSingleMode => {
            let s = mechanism.step_gain.expect("validated") as f64;
            ratio(g * (s * s - 1.0).sqrt() * n, (g * g - 1.0).sqrt() * dn_b)
        }
        MechanismKind::MultiStepMultiMode => {
            let s = mechanism.step_gain.expect("validated") as f64;
            ratio((g * (s - 1.0)).sqrt() * n, (g - 1.0).sqrt() * dn_b)
        }
    };
    Ok(value)
}

/// SNR sampled over a grid of total gains.
#[derive(Debug, Clone, PartialEq)]
pub struct SnrCurve {
    pub kind: MechanismKind,
    pub step_gain: Option<u64>,
    pub grid: Vec<f64>,
    pub snr: Vec<f64>,
    pub n_a: u64,
    pub dn_b: f64,
}

pub fn snr_curve(kind: MechanismKind, step_gain: Option<u64>, grid: &[f64], n_a: u64, dn_b: f64) -> Result<SnrCurve> {
    let snr = grid
        .iter()
        .map(|&g| snr(&Mechanism::new(kind, g, step_gain)?, n_a, dn_b))
        .collect::<Result<Vec<_>>>()?;
    Ok(SnrCurve { kind, step_gain, grid: grid.to_vec(), snr, n_a, dn_b })
}
