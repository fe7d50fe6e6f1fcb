//! Truncated bosonic Fock spaces.
//!
//! A mode truncated at occupation `s` lives in an `(s+1)`-dimensional space
//! spanned by the number states `|0⟩ … |s⟩`. Operators are stored as dense
//! complex matrices together with the list of factor spaces they act on, so
//! that two-mode expressions can be lifted with Kronecker products and
//! checked against each other without any symbolic algebra.
//!
//! States are number-diagonal: only the probability of each occupation is
//! kept. Expectation values are still computed from the full operator
//! matrix, so off-diagonal structure of the observable is never assumed away.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Number of top levels inspected by the truncation guard.
pub const LEAKAGE_LEVELS: usize = 3;
/// Largest probability tolerated in the top [`LEAKAGE_LEVELS`] levels.
pub const LEAKAGE_LIMIT: f64 = 1e-10;

/// A single bosonic mode truncated at occupation `cutoff`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FockSpace {
    cutoff: usize,
}

impl FockSpace {
    pub fn new(cutoff: usize) -> Self {
        FockSpace { cutoff }
    }

    /// Highest representable occupation number.
    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn dim(&self) -> usize {
        self.cutoff + 1
    }
}

pub fn make_space(cutoff: usize) -> FockSpace {
    FockSpace::new(cutoff)
}

/// Dense operator on a tensor product of Fock spaces.
///
/// Factor 0 is the most significant index of the Kronecker product, so the
/// basis state `|n₀⟩⊗|n₁⟩` sits at row `n₀·dim₁ + n₁`.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    shape: Vec<FockSpace>,
    entries: DMatrix<Complex64>,
}

fn shape_dim(shape: &[FockSpace]) -> usize {
    shape.iter().map(FockSpace::dim).product()
}

impl OperatorMatrix {
    pub fn new(shape: Vec<FockSpace>, entries: DMatrix<Complex64>) -> Result<Self> {
        let dim = shape_dim(&shape);
        if shape.is_empty() {
            return Err(Error::ShapeMismatch("operator needs at least one factor".into()));
        }
        if entries.nrows() != dim || entries.ncols() != dim {
            return Err(Error::ShapeMismatch(format!(
                "matrix is {}x{}, factors require {dim}x{dim}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        Ok(OperatorMatrix { shape, entries })
    }

    pub fn identity(shape: Vec<FockSpace>) -> Self {
        let dim = shape_dim(&shape);
        OperatorMatrix { shape, entries: DMatrix::identity(dim, dim) }
    }

    pub fn zeros(shape: Vec<FockSpace>) -> Self {
        let dim = shape_dim(&shape);
        OperatorMatrix { shape, entries: DMatrix::zeros(dim, dim) }
    }

    /// Diagonal operator with the given real entries.
    pub fn diagonal(shape: Vec<FockSpace>, diag: &[f64]) -> Result<Self> {
        let dim = shape_dim(&shape);
        if diag.len() != dim {
            return Err(Error::ShapeMismatch(format!(
                "{} diagonal entries for dimension {dim}",
                diag.len()
            )));
        }
        let mut entries = DMatrix::zeros(dim, dim);
        for (i, &d) in diag.iter().enumerate() {
            entries[(i, i)] = Complex64::new(d, 0.0);
        }
        Ok(OperatorMatrix { shape, entries })
    }

    pub fn shape(&self) -> &[FockSpace] {
        &self.shape
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.entries
    }

    pub fn adjoint(&self) -> OperatorMatrix {
        OperatorMatrix { shape: self.shape.clone(), entries: self.entries.adjoint() }
    }

    fn same_shape(&self, other: &OperatorMatrix) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch(format!(
                "operands act on {:?} and {:?}",
                cutoffs(&self.shape),
                cutoffs(&other.shape)
            )));
        }
        Ok(())
    }

    /// Operator product `self · other`.
    pub fn compose(&self, other: &OperatorMatrix) -> Result<OperatorMatrix> {
        self.same_shape(other)?;
        Ok(OperatorMatrix { shape: self.shape.clone(), entries: &self.entries * &other.entries })
    }

    /// `self ⊗ other` on the concatenated shape.
    pub fn tensor(&self, other: &OperatorMatrix) -> OperatorMatrix {
        let mut shape = self.shape.clone();
        shape.extend_from_slice(&other.shape);
        OperatorMatrix { shape, entries: self.entries.kronecker(&other.entries) }
    }

    pub fn plus(&self, other: &OperatorMatrix) -> Result<OperatorMatrix> {
        self.same_shape(other)?;
        Ok(OperatorMatrix { shape: self.shape.clone(), entries: &self.entries + &other.entries })
    }

    pub fn minus(&self, other: &OperatorMatrix) -> Result<OperatorMatrix> {
        self.same_shape(other)?;
        Ok(OperatorMatrix { shape: self.shape.clone(), entries: &self.entries - &other.entries })
    }

    pub fn scaled(&self, factor: Complex64) -> OperatorMatrix {
        OperatorMatrix { shape: self.shape.clone(), entries: &self.entries * factor }
    }

    pub fn scaled_real(&self, factor: f64) -> OperatorMatrix {
        self.scaled(Complex64::new(factor, 0.0))
    }

    /// Largest entrywise modulus of `self − other`.
    pub fn max_abs_diff(&self, other: &OperatorMatrix) -> Result<f64> {
        self.same_shape(other)?;
        Ok(self
            .entries
            .iter()
            .zip(other.entries.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }

    pub fn trace(&self) -> Complex64 {
        self.entries.trace()
    }

    /// Real part of the diagonal.
    pub fn real_diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.entries[(i, i)].re).collect()
    }
}

fn cutoffs(shape: &[FockSpace]) -> Vec<usize> {
    shape.iter().map(FockSpace::cutoff).collect()
}

/// Ladder operator with `⟨n−1|â|n⟩ = √n`.
pub fn annihilation(space: FockSpace) -> OperatorMatrix {
    let dim = space.dim();
    let mut entries = DMatrix::zeros(dim, dim);
    for n in 1..dim {
        entries[(n - 1, n)] = Complex64::new((n as f64).sqrt(), 0.0);
    }
    OperatorMatrix { shape: vec![space], entries }
}

pub fn creation(space: FockSpace) -> OperatorMatrix {
    annihilation(space).adjoint()
}

/// `diag(0, 1, …, s)`.
pub fn number_op(space: FockSpace) -> OperatorMatrix {
    let diag: Vec<f64> = (0..space.dim()).map(|n| n as f64).collect();
    OperatorMatrix::diagonal(vec![space], &diag).expect("diagonal length equals dimension")
}

/// Lifts a single-factor operator onto `full_shape`, acting as the identity
/// on every other factor.
pub fn embed(op: &OperatorMatrix, factor_index: usize, full_shape: &[FockSpace]) -> Result<OperatorMatrix> {
    if factor_index >= full_shape.len() {
        return Err(Error::FactorIndex { index: factor_index, factors: full_shape.len() });
    }
    if op.shape.len() != 1 || op.shape[0] != full_shape[factor_index] {
        return Err(Error::ShapeMismatch(format!(
            "operator on {:?} cannot act on factor {factor_index} ({} levels)",
            cutoffs(&op.shape),
            full_shape[factor_index].dim()
        )));
    }
    let mut entries = DMatrix::<Complex64>::identity(1, 1);
    for (i, space) in full_shape.iter().enumerate() {
        let factor = if i == factor_index {
            op.entries.clone()
        } else {
            DMatrix::identity(space.dim(), space.dim())
        };
        entries = entries.kronecker(&factor);
    }
    Ok(OperatorMatrix { shape: full_shape.to_vec(), entries })
}

/// Mean and variance of a number-like observable.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NumberStats {
    pub mean: f64,
    pub variance: f64,
}

impl NumberStats {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        if !(variance >= 0.0) || !mean.is_finite() || !variance.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "number statistics need finite mean and variance >= 0, got ({mean}, {variance})"
            )));
        }
        Ok(NumberStats { mean, variance })
    }

    /// Fixed occupation `n`: zero variance.
    pub fn fixed(n: f64) -> Self {
        NumberStats { mean: n, variance: 0.0 }
    }

    /// Untruncated thermal statistics `(n̄, n̄(n̄+1))`.
    pub fn thermal(nbar: f64) -> Self {
        NumberStats { mean: nbar, variance: nbar * (nbar + 1.0) }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }
}

/// Number-diagonal state of a single mode.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalState {
    space: FockSpace,
    probs: Vec<f64>,
}

impl DiagonalState {
    /// Accepts any nonnegative weight vector of the right length and
    /// normalizes it.
    pub fn from_weights(space: FockSpace, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != space.dim() {
            return Err(Error::ShapeMismatch(format!(
                "{} weights for a {}-level space",
                weights.len(),
                space.dim()
            )));
        }
        if let Some(bad) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidDistribution(format!("entry {bad} is not a finite nonnegative weight")));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidDistribution("weights sum to zero".into()));
        }
        let probs = weights.into_iter().map(|w| w / total).collect();
        Ok(DiagonalState { space, probs })
    }

    pub fn space(&self) -> FockSpace {
        self.space
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Occupation statistics, computed directly from the distribution.
    pub fn stats(&self) -> NumberStats {
        let mean: f64 = self.probs.iter().enumerate().map(|(n, p)| n as f64 * p).sum();
        let variance: f64 = self
            .probs
            .iter()
            .enumerate()
            .map(|(n, p)| (n as f64 - mean).powi(2) * p)
            .sum();
        NumberStats { mean, variance }
    }
}

pub fn fock_state(space: FockSpace, n: u64) -> Result<DiagonalState> {
    if n as usize > space.cutoff() {
        return Err(Error::ExceedsCutoff { n, cutoff: space.cutoff() });
    }
    let mut probs = vec![0.0; space.dim()];
    probs[n as usize] = 1.0;
    Ok(DiagonalState { space, probs })
}

/// Thermal (geometric) distribution with mean occupation `nbar`, truncated
/// at the cutoff and renormalized.
pub fn thermal_state(space: FockSpace, nbar: f64) -> Result<DiagonalState> {
    if !(nbar >= 0.0) || !nbar.is_finite() {
        return Err(Error::InvalidParameter(format!("thermal occupation must be >= 0, got {nbar}")));
    }
    if nbar == 0.0 {
        return fock_state(space, 0);
    }
    let ratio = nbar / (nbar + 1.0);
    let mut weights = Vec::with_capacity(space.dim());
    let mut w = 1.0;
    for _ in 0..space.dim() {
        weights.push(w);
        w *= ratio;
    }
    DiagonalState::from_weights(space, weights)
}

/// Probability held by the `top_k` highest number states.
pub fn leakage(state: &DiagonalState, top_k: usize) -> f64 {
    let dim = state.probs.len();
    let k = top_k.min(dim);
    state.probs[dim - k..].iter().sum()
}

/// Fails if the state puts more than [`LEAKAGE_LIMIT`] of its weight in the
/// top [`LEAKAGE_LEVELS`] levels.
pub fn check_truncation(state: &DiagonalState) -> Result<()> {
    let leak = leakage(state, LEAKAGE_LEVELS);
    if leak > LEAKAGE_LIMIT {
        return Err(Error::TruncationLeakage { leakage: leak, levels: LEAKAGE_LEVELS, limit: LEAKAGE_LIMIT });
    }
    Ok(())
}

/// Default cutoff `ceil(n̄_b + G·n_max + 23·√(Δn_b² + 1/4) + 10)` for a mode
/// with statistics `reservoir` that may receive `gain · n_max` excitations.
/// For a thermal state `√(Δn² + 1/4) = n̄ + 1/2` is the decay length of the
/// tail, and 23 decay lengths bring it below `1e-10`.
pub fn recommended_cutoff(reservoir: NumberStats, gain: f64, n_max: u64) -> usize {
    let s = reservoir.mean + gain * n_max as f64 + 23.0 * (reservoir.variance + 0.25).sqrt() + 10.0;
    s.ceil() as usize
}

/// Joint distribution of a product of diagonal states, in Kronecker order.
pub fn product_probs(states: &[DiagonalState]) -> Vec<f64> {
    let mut joint = vec![1.0];
    for state in states {
        let mut next = Vec::with_capacity(joint.len() * state.probs.len());
        for &p in &joint {
            next.extend(state.probs.iter().map(|q| p * q));
        }
        joint = next;
    }
    joint
}

/// `(tr ρO, tr ρO² − (tr ρO)²)` for the product state `ρ = ⊗ states`.
///
/// Only the diagonal of `O²` is needed, so it is accumulated row by row
/// rather than forming the full square.
pub fn moments(states: &[DiagonalState], observable: &OperatorMatrix) -> Result<NumberStats> {
    let spaces: Vec<FockSpace> = states.iter().map(DiagonalState::space).collect();
    if spaces != observable.shape {
        return Err(Error::ShapeMismatch(format!(
            "states on {:?}, observable on {:?}",
            cutoffs(&spaces),
            cutoffs(&observable.shape)
        )));
    }
    let probs = product_probs(states);
    let m = &observable.entries;
    let mut first = 0.0;
    let mut second = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        first += p * m[(i, i)].re;
        let square_ii: Complex64 = (0..m.ncols()).map(|j| m[(i, j)] * m[(j, i)]).sum();
        second += p * square_ii.re;
    }
    let variance = (second - first * first).max(0.0);
    Ok(NumberStats { mean: first, variance })
}
