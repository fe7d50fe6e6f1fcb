//! Amplification channels as explicit operators and basis maps.
//!
//! * the Pegg-Barnett shift `Ŝ` with `Ŝ|N⟩ = e^{iφ}|N−1⟩`, `Ŝ|0⟩ = |s⟩`;
//! * the nonlinear output `b̂_out = Ŝ·√(n̂_b + G·n̂_a)` on the two-mode space `b ⊗ a`;
//! * output number operators of phase-insensitive and phase-sensitive
//!   linear amplifiers;
//! * the ideal number-state map `|n⟩|M⟩|N⟩ ↦ |n⟩|M−Gn⟩|N+Gn⟩` followed by
//!   absorption of the input photons.

use std::f64::consts::TAU;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::fock::{annihilation, embed, number_op, FockSpace, OperatorMatrix};

/// Entrywise tolerance used when matching a commutator against the
/// Pegg-Barnett form.
pub const PEGG_BARNETT_TOLERANCE: f64 = 1e-10;

/// Unitary cyclic lowering operator on one truncated mode.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftOperator {
    space: FockSpace,
    phase: f64,
    op: OperatorMatrix,
}

impl ShiftOperator {
    pub fn space(&self) -> FockSpace {
        self.space
    }

    /// Phase in `[0, 2π)`.
    pub fn phase(&self) -> f64 {
        self.phase
    }

    pub fn operator(&self) -> &OperatorMatrix {
        &self.op
    }
}

pub fn shift_operator(space: FockSpace, phase: f64) -> ShiftOperator {
    let phase = phase.rem_euclid(TAU);
    let dim = space.dim();
    let factor = Complex64::from_polar(1.0, phase);
    let mut entries = DMatrix::zeros(dim, dim);
    for n in 1..dim {
        entries[(n - 1, n)] = factor;
    }
    entries[(dim - 1, 0)] += Complex64::new(1.0, 0.0);
    let op = OperatorMatrix::new(vec![space], entries).expect("square by construction");
    ShiftOperator { space, phase, op }
}

/// Uniform phase in `[0, 2π)` drawn from the caller's generator.
pub fn random_phase<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random_range(0.0..TAU)
}

/// Converts a gain given as a real number into the positive integer the
/// nonlinear schemes require.
pub fn integer_gain(gain: f64) -> Result<u64> {
    if gain >= 1.0 && gain.fract() == 0.0 && gain <= u64::MAX as f64 {
        Ok(gain as u64)
    } else {
        Err(Error::InvalidGain { gain, requirement: "integer G >= 1" })
    }
}

fn linear_gain(gain: f64) -> Result<f64> {
    if gain >= 1.0 && gain.is_finite() {
        Ok(gain)
    } else {
        Err(Error::InvalidGain { gain, requirement: "real G >= 1" })
    }
}

/// `(Ŝ⊗𝟙_a)·√(n̂_b⊗𝟙 + G·𝟙⊗n̂_a)` on `b ⊗ a`.
///
/// The square-root argument is diagonal in the number basis, so the root is
/// taken entrywise and the product reduces to scaling the columns of `Ŝ⊗𝟙`.
pub fn nonlinear_bout(space_b: FockSpace, space_a: FockSpace, gain: u64, phase: f64) -> Result<OperatorMatrix> {
    if gain < 1 {
        return Err(Error::InvalidGain { gain: gain as f64, requirement: "integer G >= 1" });
    }
    let shape = vec![space_b, space_a];
    let shift = embed(shift_operator(space_b, phase).operator(), 0, &shape)?;
    let mut entries = shift.into_matrix();
    for nb in 0..space_b.dim() {
        for na in 0..space_a.dim() {
            let col = nb * space_a.dim() + na;
            let root = (nb as f64 + gain as f64 * na as f64).sqrt();
            entries.column_mut(col).scale_mut(root);
        }
    }
    OperatorMatrix::new(shape, entries)
}

/// `xy − yx`.
pub fn commutator(x: &OperatorMatrix, y: &OperatorMatrix) -> Result<OperatorMatrix> {
    x.compose(y)?.minus(&y.compose(x)?)
}

/// Outcome of matching a commutator against `𝟙 − (s+1)|s⟩⟨s|` on the b mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeggBarnettReport {
    pub holds: bool,
    pub max_deviation: f64,
}

/// Checks that `comm` (on `b ⊗ rest`) equals `(𝟙_b − (s_b+1)|s_b⟩⟨s_b|) ⊗ 𝟙_rest`,
/// i.e. within every sector of the remaining modes the commutator is the
/// identity with a single rank-one correction at the top b level.
pub fn check_pegg_barnett(comm: &OperatorMatrix, space_b: FockSpace) -> PeggBarnettReport {
    if comm.shape().first() != Some(&space_b) {
        return PeggBarnettReport { holds: false, max_deviation: f64::INFINITY };
    }
    let rest = comm.dim() / space_b.dim();
    let top = space_b.cutoff();
    let m = comm.matrix();
    let mut max_deviation = 0.0f64;
    for i in 0..comm.dim() {
        for j in 0..comm.dim() {
            let expected = if i != j {
                0.0
            } else if i / rest == top {
                -(top as f64)
            } else {
                1.0
            };
            max_deviation = max_deviation.max((m[(i, j)] - Complex64::new(expected, 0.0)).norm());
        }
    }
    PeggBarnettReport { holds: max_deviation <= PEGG_BARNETT_TOLERANCE, max_deviation }
}

/// Largest `|comm − 𝟙|` entry among rows and columns whose b level is below
/// `below_level`.
pub fn clean_region_deviation(comm: &OperatorMatrix, space_b: FockSpace, below_level: usize) -> Result<f64> {
    if comm.shape().first() != Some(&space_b) {
        return Err(Error::ShapeMismatch("first factor must be the b mode".into()));
    }
    let rest = comm.dim() / space_b.dim();
    let limit = below_level.min(space_b.dim()) * rest;
    let m = comm.matrix();
    let mut worst = 0.0f64;
    for i in 0..limit {
        for j in 0..limit {
            let expected = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((m[(i, j)] - Complex64::new(expected, 0.0)).norm());
        }
    }
    Ok(worst)
}

/// `â_out†â_out` for `â_out = √G·â⊗𝟙 + √(G−1)·𝟙⊗b̂†` on `a ⊗ b`.
///
/// Expanded as `G·â†â⊗𝟙 + (G−1)·𝟙⊗b̂b̂† + √(G(G−1))·(â†⊗b̂† + â⊗b̂)`. By the
/// mixed-product rule this equals the product of the truncated two-mode
/// matrices entry for entry, without forming a full-size product.
pub fn caves_number_out(space_a: FockSpace, space_b: FockSpace, gain: f64) -> Result<OperatorMatrix> {
    let gain = linear_gain(gain)?;
    let a = annihilation(space_a);
    let b = annihilation(space_b);
    let id_a = OperatorMatrix::identity(vec![space_a]);
    let id_b = OperatorMatrix::identity(vec![space_b]);
    let signal = number_op(space_a).tensor(&id_b).scaled_real(gain);
    let idler = id_a.tensor(&b.compose(&b.adjoint())?).scaled_real(gain - 1.0);
    let cross = a.adjoint().tensor(&b.adjoint()).plus(&a.tensor(&b))?;
    signal.plus(&idler)?.plus(&cross.scaled_real((gain * (gain - 1.0)).sqrt()))
}

/// `â_out†â_out` for `â_out = √G·â + √(G−1)·â†`.
pub fn phase_sensitive_number_out(space_a: FockSpace, gain: f64) -> Result<OperatorMatrix> {
    let gain = linear_gain(gain)?;
    let a = annihilation(space_a);
    let a_out = a.scaled_real(gain.sqrt()).plus(&a.adjoint().scaled_real((gain - 1.0).sqrt()))?;
    a_out.adjoint().compose(&a_out)
}

/// `n̂_b⊗𝟙 + G·𝟙⊗n̂_a` on `b ⊗ a`: the number relation the nonlinear output
/// must reproduce.
pub fn linear_number_target(space_b: FockSpace, space_a: FockSpace, gain: u64) -> Result<OperatorMatrix> {
    let shape = [space_b, space_a];
    embed(&number_op(space_b), 0, &shape)?.plus(&embed(&number_op(space_a), 1, &shape)?.scaled_real(gain as f64))
}

/// Result of the ideal number-state map plus the absorber step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdealMapRecord {
    /// Photons in mode a before absorption.
    pub n_in: u64,
    /// Photons left in mode a after absorption; always zero.
    pub n_after: u64,
    /// First reservoir, which supplies the energy.
    pub m_out: u64,
    /// Second reservoir, which receives `G·n` excitations.
    pub n_out: u64,
    /// Energy deposited in the absorber, in units of ħ.
    pub absorber_energy: f64,
    pub phase: f64,
}

/// `|n⟩_a|M⟩_1|N⟩_2 ↦ e^{iφ}|n⟩_a|M−Gn⟩_1|N+Gn⟩_2`, then `|n⟩_a|E⟩ ↦ |0⟩_a|E+nω⟩`.
pub fn ideal_schrodinger_map(n: u64, m: u64, big_n: u64, gain: u64, phase: f64, omega: f64) -> Result<IdealMapRecord> {
    if gain < 1 {
        return Err(Error::InvalidGain { gain: gain as f64, requirement: "integer G >= 1" });
    }
    let transfer = n
        .checked_mul(gain)
        .ok_or_else(|| Error::InvalidParameter(format!("G·n overflows for G={gain}, n={n}")))?;
    if m < transfer {
        return Err(Error::InsufficientReservoir { required: transfer, available: m });
    }
    let n_out = big_n
        .checked_add(transfer)
        .ok_or_else(|| Error::InvalidParameter("second reservoir overflows".into()))?;
    Ok(IdealMapRecord {
        n_in: n,
        n_after: 0,
        m_out: m - transfer,
        n_out,
        absorber_energy: n as f64 * omega,
        phase: phase.rem_euclid(TAU),
    })
}
