//! Seeded Monte Carlo photon counting.
//!
//! Each trial draws independent reservoir occupations and combines them with
//! the deterministic amplified signal according to the amplification model.
//! Every model reduces to a [`DrawPlan`]: groups of reservoir modes whose
//! draws are summed and multiplied by the number of times a background
//! excitation in that group is re-amplified downstream.
//!
//! Trial `t` of a run with seed `s` uses ChaCha8 stream `t` under key `s`, so
//! trials can be evaluated in any order or split across runs. Output counts
//! are integers and are reduced by exact integer power sums, which makes the
//! reduction independent of scheduling.

use std::fmt;
use std::ops::Range;

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::NumberStats;
use crate::noise;

const BLOCK_TRIALS: u64 = 1 << 15;

/// Initial-state law of one reservoir mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReservoirSpec {
    Fock(u64),
    /// Untruncated geometric law with mean occupation `n̄`.
    Thermal(f64),
    /// `probs[n]` is the probability of `n` excitations.
    Empirical(Vec<f64>),
}

impl ReservoirSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            ReservoirSpec::Fock(_) => Ok(()),
            ReservoirSpec::Thermal(nbar) if *nbar >= 0.0 && nbar.is_finite() => Ok(()),
            ReservoirSpec::Thermal(nbar) => Err(Error::InvalidParameter(format!("thermal occupation {nbar} is not >= 0"))),
            ReservoirSpec::Empirical(probs) => {
                if probs.is_empty() || probs.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
                    return Err(Error::InvalidDistribution("empirical probabilities must be finite and nonnegative".into()));
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > 1e-12 {
                    return Err(Error::InvalidDistribution(format!("empirical probabilities sum to {total}")));
                }
                Ok(())
            }
        }
    }

    /// Exact statistics of the law (no truncation).
    pub fn stats(&self) -> NumberStats {
        match self {
            ReservoirSpec::Fock(n) => NumberStats::fixed(*n as f64),
            ReservoirSpec::Thermal(nbar) => NumberStats::thermal(*nbar),
            ReservoirSpec::Empirical(probs) => {
                let mean: f64 = probs.iter().enumerate().map(|(n, p)| n as f64 * p).sum();
                let variance = probs.iter().enumerate().map(|(n, p)| (n as f64 - mean).powi(2) * p).sum();
                NumberStats { mean, variance }
            }
        }
    }

    pub fn sampler(&self) -> Result<ReservoirSampler> {
        self.validate()?;
        Ok(match self {
            ReservoirSpec::Fock(n) => ReservoirSampler::Constant(*n),
            ReservoirSpec::Thermal(nbar) if *nbar == 0.0 => ReservoirSampler::Constant(0),
            ReservoirSpec::Thermal(nbar) => ReservoirSampler::Geometric(
                Geometric::new(1.0 / (1.0 + nbar)).map_err(|e| Error::InvalidParameter(e.to_string()))?,
            ),
            ReservoirSpec::Empirical(probs) => ReservoirSampler::Weighted(
                WeightedIndex::new(probs).map_err(|e| Error::InvalidDistribution(e.to_string()))?,
            ),
        })
    }
}

impl fmt::Display for ReservoirSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReservoirSpec::Fock(n) => write!(f, "fock({n})"),
            ReservoirSpec::Thermal(nbar) => write!(f, "thermal({nbar})"),
            ReservoirSpec::Empirical(probs) => {
                let parts: Vec<String> = probs.iter().map(f64::to_string).collect();
                write!(f, "empirical({})", parts.join(";"))
            }
        }
    }
}

/// Prepared sampler for a [`ReservoirSpec`].
#[derive(Debug, Clone)]
pub enum ReservoirSampler {
    Constant(u64),
    Geometric(Geometric),
    Weighted(WeightedIndex<f64>),
}

impl ReservoirSampler {
    #[inline]
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match self {
            ReservoirSampler::Constant(n) => *n,
            ReservoirSampler::Geometric(geo) => geo.sample(rng),
            ReservoirSampler::Weighted(w) => w.sample(rng) as u64,
        }
    }
}

pub fn sample_reservoir<R: Rng + ?Sized>(spec: &ReservoirSpec, rng: &mut R) -> Result<u64> {
    Ok(spec.sampler()?.draw(rng))
}

/// Amplification model simulated by a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model")]
pub enum Model {
    /// One reservoir mode receives `G·n_a` excitations.
    SingleMode { gain: u64 },
    /// `G` reservoir modes each receive `n_a` excitations.
    GModes { gain: u64 },
    /// `N` stages into one mode each; stage `k` background is re-amplified
    /// `g^{N−k}` times.
    MultiStepSingle { step_gain: u64, steps: u32 },
    /// `N` stages into `g` modes per excitation; the `g^n` modes of stage `n`
    /// are re-amplified `g^{N−n}` times.
    MultiStepMulti { step_gain: u64, steps: u32 },
    /// `mode_budget` background modes, `G·n_a` of which carry one signal
    /// excitation.
    Multiplexed { gain: u64, mode_budget: u64 },
    /// `G` fluorescence excitations per photon spread over `cavity_modes`
    /// output modes.
    Shelving { gain: u64, cavity_modes: u64 },
}

impl Model {
    pub fn name(&self) -> &'static str {
        match self {
            Model::SingleMode { .. } => "SingleMode",
            Model::GModes { .. } => "GModes",
            Model::MultiStepSingle { .. } => "MultiStepSingle",
            Model::MultiStepMulti { .. } => "MultiStepMulti",
            Model::Multiplexed { .. } => "Multiplexed",
            Model::Shelving { .. } => "Shelving",
        }
    }

    /// Total gain `G`.
    pub fn gain(&self) -> Result<u64> {
        match *self {
            Model::SingleMode { gain }
            | Model::GModes { gain }
            | Model::Multiplexed { gain, .. }
            | Model::Shelving { gain, .. } => Ok(gain),
            Model::MultiStepSingle { step_gain, steps } | Model::MultiStepMulti { step_gain, steps } => step_gain
                .checked_pow(steps)
                .ok_or_else(|| Error::InvalidParameter(format!("{step_gain}^{steps} overflows"))),
        }
    }

    pub fn step_gain(&self) -> Option<u64> {
        match *self {
            Model::MultiStepSingle { step_gain, .. } | Model::MultiStepMulti { step_gain, .. } => Some(step_gain),
            _ => None,
        }
    }

    pub fn steps(&self) -> Option<u32> {
        match *self {
            Model::MultiStepSingle { steps, .. } | Model::MultiStepMulti { steps, .. } => Some(steps),
            _ => None,
        }
    }
}

/// A fully specified Monte Carlo run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub model: Model,
    pub input_n_a: u64,
    pub reservoir: ReservoirSpec,
    pub trials: u64,
    pub seed: u64,
}

/// One group of reservoir modes: `count` independent draws whose sum is
/// multiplied by `weight`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DrawGroup {
    pub weight: u64,
    pub count: u64,
}

/// Per-trial recipe: `signal + Σ_groups weight · Σ_{count} draw`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DrawPlan {
    pub groups: Vec<DrawGroup>,
    pub signal: u64,
}

impl DrawPlan {
    pub fn background_mean(&self, reservoir: NumberStats) -> f64 {
        self.groups.iter().map(|g| (g.weight * g.count) as f64).sum::<f64>() * reservoir.mean
    }

    /// Variance of the summed output implied by independence of the draws.
    pub fn variance(&self, reservoir: NumberStats) -> f64 {
        self.groups.iter().map(|g| (g.weight * g.weight * g.count) as f64).sum::<f64>() * reservoir.variance
    }

    pub fn draw_count(&self) -> u64 {
        self.groups.iter().map(|g| g.count).sum()
    }
}

/// Even integer split of `gain` excitations over `modes`, remainder to the
/// lowest-index modes.
pub fn shelving_split(gain: u64, modes: u64) -> Result<Vec<u64>> {
    if modes < 1 || modes > gain {
        return Err(Error::InvalidParameter(format!("cavity mode count {modes} must lie in 1..={gain}")));
    }
    let (base, extra) = (gain / modes, gain % modes);
    Ok((0..modes).map(|k| base + u64::from(k < extra)).collect())
}

fn positive_gain(gain: u64) -> Result<()> {
    if gain < 1 {
        return Err(Error::InvalidGain { gain: gain as f64, requirement: "integer G >= 1" });
    }
    Ok(())
}

fn overflow(what: &str) -> Error {
    Error::InvalidParameter(format!("{what} overflows 64 bits"))
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(Error::InvalidParameter("at least one trial is required".into()));
        }
        self.reservoir.validate()?;
        self.plan().map(|_| ())
    }

    /// Resolves the model into its draw plan.
    pub fn plan(&self) -> Result<DrawPlan> {
        let n_a = self.input_n_a;
        let signal_for = |gain: u64| gain.checked_mul(n_a).ok_or_else(|| overflow("G·n_a"));
        match self.model {
            Model::SingleMode { gain } => {
                positive_gain(gain)?;
                Ok(DrawPlan { groups: vec![DrawGroup { weight: 1, count: 1 }], signal: signal_for(gain)? })
            }
            Model::GModes { gain } => {
                positive_gain(gain)?;
                Ok(DrawPlan { groups: vec![DrawGroup { weight: 1, count: gain }], signal: signal_for(gain)? })
            }
            Model::MultiStepSingle { step_gain, steps } | Model::MultiStepMulti { step_gain, steps } => {
                if step_gain < 2 || steps < 1 {
                    return Err(Error::InvalidParameter(format!(
                        "cascade needs step gain >= 2 and at least one step, got g={step_gain}, N={steps}"
                    )));
                }
                let gain = self.model.gain()?;
                let multimode = matches!(self.model, Model::MultiStepMulti { .. });
                let groups = (1..=steps)
                    .map(|stage| DrawGroup {
                        weight: step_gain.pow(steps - stage),
                        count: if multimode { step_gain.pow(stage) } else { 1 },
                    })
                    .collect();
                Ok(DrawPlan { groups, signal: signal_for(gain)? })
            }
            Model::Multiplexed { gain, mode_budget } => {
                positive_gain(gain)?;
                let signal = signal_for(gain)?;
                if signal > mode_budget {
                    return Err(Error::InvalidParameter(format!(
                        "mode budget {mode_budget} cannot hold {signal} single-excitation modes"
                    )));
                }
                Ok(DrawPlan { groups: vec![DrawGroup { weight: 1, count: mode_budget }], signal })
            }
            Model::Shelving { gain, cavity_modes } => {
                positive_gain(gain)?;
                let split = shelving_split(gain, cavity_modes)?;
                let signal = split
                    .iter()
                    .try_fold(0u64, |acc, share| acc.checked_add(share.checked_mul(n_a)?))
                    .ok_or_else(|| overflow("shelving signal"))?;
                Ok(DrawPlan { groups: vec![DrawGroup { weight: 1, count: cavity_modes }], signal })
            }
        }
    }

    /// Closed-form output variance for the fixed input `n_a`.
    pub fn analytic_variance(&self) -> Result<f64> {
        let a = NumberStats::fixed(self.input_n_a as f64);
        let b = self.reservoir.stats();
        match self.model {
            Model::SingleMode { gain } => noise::var_single_mode(gain, a, b),
            Model::GModes { gain } => noise::var_g_modes(gain, a, b),
            Model::MultiStepSingle { step_gain, .. } => noise::var_multistep_single(self.model.gain()?, step_gain, a, b),
            Model::MultiStepMulti { step_gain, .. } => noise::var_multistep_multi(self.model.gain()?, step_gain, a, b),
            Model::Multiplexed { mode_budget, .. } => Ok(mode_budget as f64 * b.variance),
            Model::Shelving { cavity_modes, .. } => Ok(cavity_modes as f64 * b.variance),
        }
    }

    /// Expected output: amplified signal plus background.
    pub fn analytic_mean(&self) -> Result<f64> {
        let plan = self.plan()?;
        Ok(plan.signal as f64 + plan.background_mean(self.reservoir.stats()))
    }
}

/// Estimator summary of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleStats {
    pub count: u64,
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    /// Standard error of `variance`, from the fourth central moment.
    pub std_error_of_variance: f64,
    pub std_error_of_mean: f64,
}

impl SampleStats {
    /// `(variance − reference) / SE`, with an exact match scoring zero.
    pub fn variance_z_score(&self, reference: f64) -> f64 {
        z_score(self.variance, reference, self.std_error_of_variance)
    }

    pub fn mean_z_score(&self, reference: f64) -> f64 {
        z_score(self.mean, reference, self.std_error_of_mean)
    }
}

fn z_score(value: f64, reference: f64, se: f64) -> f64 {
    let diff = value - reference;
    if diff == 0.0 {
        0.0
    } else {
        diff / se
    }
}

/// Exact power sums of `x − pivot` over integer samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MomentSums {
    pub count: u64,
    pub pivot: i64,
    pub s1: i128,
    pub s2: i128,
    pub s3: i128,
    pub s4: i128,
}

impl MomentSums {
    pub fn new(pivot: i64) -> Self {
        MomentSums { count: 0, pivot, s1: 0, s2: 0, s3: 0, s4: 0 }
    }

    #[inline]
    pub fn push(&mut self, x: u64) {
        let y = x as i128 - self.pivot as i128;
        let y2 = y * y;
        self.count += 1;
        self.s1 += y;
        self.s2 += y2;
        self.s3 += y2 * y;
        self.s4 += y2 * y2;
    }

    pub fn merge(&self, other: &MomentSums) -> Result<MomentSums> {
        if self.pivot != other.pivot {
            return Err(Error::InvalidParameter(format!(
                "cannot merge sums with pivots {} and {}",
                self.pivot, other.pivot
            )));
        }
        Ok(MomentSums {
            count: self.count + other.count,
            pivot: self.pivot,
            s1: self.s1 + other.s1,
            s2: self.s2 + other.s2,
            s3: self.s3 + other.s3,
            s4: self.s4 + other.s4,
        })
    }

    pub fn finish(&self) -> SampleStats {
        let count = self.count;
        if count == 0 {
            return SampleStats { count, mean: f64::NAN, variance: f64::NAN, std_error_of_variance: f64::NAN, std_error_of_mean: f64::NAN };
        }
        let n = count as f64;
        let mean_y = self.s1 as f64 / n;
        let mean = self.pivot as f64 + mean_y;
        if count < 2 {
            return SampleStats { count, mean, variance: 0.0, std_error_of_variance: 0.0, std_error_of_mean: 0.0 };
        }
        // n·S2 − S1² is computed exactly before the single rounding.
        let numerator = count as i128 * self.s2 - self.s1 * self.s1;
        let variance = numerator as f64 / (n * (n - 1.0));
        let m4 = self.s4 as f64 / n - 4.0 * mean_y * self.s3 as f64 / n + 6.0 * mean_y * mean_y * self.s2 as f64 / n
            - 3.0 * mean_y.powi(4);
        let var_of_var = (m4 - (n - 3.0) / (n - 1.0) * variance * variance) / n;
        SampleStats {
            count,
            mean,
            variance,
            std_error_of_variance: var_of_var.max(0.0).sqrt(),
            std_error_of_mean: (variance / n).sqrt(),
        }
    }
}

/// Generator for trial `trial` of a run keyed by `seed`.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

#[inline]
fn run_trial(plan: &DrawPlan, sampler: &ReservoirSampler, rng: &mut ChaCha8Rng) -> u64 {
    let mut total = plan.signal;
    for group in &plan.groups {
        let mut sum = 0u64;
        for _ in 0..group.count {
            sum += sampler.draw(rng);
        }
        total += group.weight * sum;
    }
    total
}

/// Pivot used for the power sums; depends only on the scenario so partial runs
/// can be merged.
pub fn pivot_for(spec: &ScenarioSpec) -> Result<i64> {
    Ok(spec.analytic_mean()?.round() as i64)
}

/// Runs trials `range` of `spec` and returns their exact power sums.
pub fn run_trials(spec: &ScenarioSpec, range: Range<u64>) -> Result<MomentSums> {
    spec.reservoir.validate()?;
    let plan = spec.plan()?;
    let sampler = spec.reservoir.sampler()?;
    let pivot = pivot_for(spec)?;
    let base = ChaCha8Rng::seed_from_u64(spec.seed);
    let first_block = range.start / BLOCK_TRIALS;
    let last_block = range.end.div_ceil(BLOCK_TRIALS);
    let sums = (first_block..last_block)
        .into_par_iter()
        .map(|block| {
            let start = (block * BLOCK_TRIALS).max(range.start);
            let end = ((block + 1) * BLOCK_TRIALS).min(range.end);
            let mut acc = MomentSums::new(pivot);
            for trial in start..end {
                let mut rng = base.clone();
                rng.set_stream(trial);
                acc.push(run_trial(&plan, &sampler, &mut rng));
            }
            acc
        })
        .reduce(|| MomentSums::new(pivot), |x, y| x.merge(&y).expect("shared pivot"));
    Ok(sums)
}

pub fn run_scenario(spec: &ScenarioSpec) -> Result<SampleStats> {
    spec.validate()?;
    Ok(run_trials(spec, 0..spec.trials)?.finish())
}

/// Shelving readout; `spec.model` must be [`Model::Shelving`].
pub fn run_shelving(spec: &ScenarioSpec) -> Result<SampleStats> {
    if !matches!(spec.model, Model::Shelving { .. }) {
        return Err(Error::InvalidParameter(format!("expected a Shelving model, got {}", spec.model.name())));
    }
    run_scenario(spec)
}

pub fn run_multiplexed(gain: u64, n: u64, mode_budget: u64, reservoir: ReservoirSpec, trials: u64, seed: u64) -> Result<SampleStats> {
    run_scenario(&ScenarioSpec {
        model: Model::Multiplexed { gain, mode_budget },
        input_n_a: n,
        reservoir,
        trials,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{make_space, thermal_state};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn spec(model: Model, n_a: u64, reservoir: ReservoirSpec, trials: u64, seed: u64) -> ScenarioSpec {
        ScenarioSpec { model, input_n_a: n_a, reservoir, trials, seed }
    }

    #[test]
    fn fock_reservoirs_are_constant() {
        let mut rng = trial_rng(1, 0);
        for _ in 0..100 {
            assert_eq!(sample_reservoir(&ReservoirSpec::Fock(0), &mut rng).unwrap(), 0);
            assert_eq!(sample_reservoir(&ReservoirSpec::Fock(3), &mut rng).unwrap(), 3);
        }
    }

    #[test]
    fn thermal_draw_moments() {
        let sampler = ReservoirSpec::Thermal(1.0).sampler().unwrap();
        let mut rng = trial_rng(99, 0);
        let mut acc = MomentSums::new(1);
        for _ in 0..1_000_000 {
            acc.push(sampler.draw(&mut rng));
        }
        let stats = acc.finish();
        assert!((stats.mean - 1.0).abs() < 0.01, "{stats:?}");
        assert!((stats.variance - 2.0).abs() < 0.03, "{stats:?}");
        // same law as the truncated oracle state at large cutoff
        let oracle = thermal_state(make_space(200), 1.0).unwrap().stats();
        assert_abs_diff_eq!(oracle.mean, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(oracle.variance, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn reservoir_validation() {
        assert!(ReservoirSpec::Thermal(-1.0).validate().is_err());
        assert!(ReservoirSpec::Empirical(vec![0.5, 0.4]).validate().is_err());
        assert!(ReservoirSpec::Empirical(vec![0.5, -0.5, 1.0]).validate().is_err());
        assert!(ReservoirSpec::Empirical(vec![0.25, 0.75]).validate().is_ok());
        let stats = ReservoirSpec::Empirical(vec![0.25, 0.75]).stats();
        assert_eq!((stats.mean, stats.variance), (0.75, 0.1875));
        assert_eq!(ReservoirSpec::Thermal(0.5).to_string(), "thermal(0.5)");
        assert_eq!(ReservoirSpec::Empirical(vec![0.25, 0.75]).to_string(), "empirical(0.25;0.75)");
    }

    #[test]
    fn empirical_sampling() {
        let s = spec(Model::GModes { gain: 3 }, 1, ReservoirSpec::Empirical(vec![0.2, 0.5, 0.3]), 200_000, 5);
        let stats = run_scenario(&s).unwrap();
        let expected = s.analytic_variance().unwrap();
        assert!(stats.variance_z_score(expected).abs() < 4.0, "{stats:?} vs {expected}");
    }

    #[test]
    fn deterministic_single_mode() {
        let s = spec(Model::SingleMode { gain: 50 }, 1, ReservoirSpec::Fock(0), 1000, 3);
        let stats = run_scenario(&s).unwrap();
        assert_eq!(stats.mean, 50.0);
        assert_eq!(stats.variance, 0.0);
        assert_eq!(stats.count, 1000);
        assert_eq!(stats.variance_z_score(0.0), 0.0);
    }

    #[test]
    fn g_modes_matches_closed_form() {
        let s = spec(Model::GModes { gain: 4 }, 1, ReservoirSpec::Thermal(1.0), 200_000, 11);
        let stats = run_scenario(&s).unwrap();
        assert_eq!(s.analytic_variance().unwrap(), 8.0);
        assert!(stats.variance_z_score(8.0).abs() < 3.0, "{stats:?}");
        assert!(stats.mean_z_score(4.0 + 4.0).abs() < 4.0);
    }

    #[test]
    fn cascade_single_matches_closed_form() {
        let s = spec(Model::MultiStepSingle { step_gain: 2, steps: 3 }, 0, ReservoirSpec::Thermal(0.5), 200_000, 12);
        let expected = 21.0 * 0.75;
        assert_abs_diff_eq!(s.analytic_variance().unwrap(), expected, epsilon = 1e-12);
        let stats = run_scenario(&s).unwrap();
        assert!(stats.variance_z_score(expected).abs() < 3.0, "{stats:?}");
    }

    #[test]
    fn cascade_plans_reproduce_closed_forms() {
        let b = NumberStats::thermal(0.7);
        for (g, n) in [(2u64, 1u32), (2, 4), (3, 3), (4, 2), (5, 1)] {
            for multi in [false, true] {
                let model = if multi {
                    Model::MultiStepMulti { step_gain: g, steps: n }
                } else {
                    Model::MultiStepSingle { step_gain: g, steps: n }
                };
                let s = spec(model, 2, ReservoirSpec::Thermal(0.7), 1, 0);
                let plan = s.plan().unwrap();
                assert_eq!(plan.signal, 2 * g.pow(n));
                let analytic = s.analytic_variance().unwrap();
                assert!((plan.variance(b) - analytic).abs() <= 1e-9 * analytic);
            }
        }
    }

    #[test]
    fn plan_shapes() {
        let plan = spec(Model::MultiStepMulti { step_gain: 2, steps: 3 }, 1, ReservoirSpec::Fock(0), 1, 0).plan().unwrap();
        assert_eq!(
            plan.groups,
            vec![DrawGroup { weight: 4, count: 2 }, DrawGroup { weight: 2, count: 4 }, DrawGroup { weight: 1, count: 8 }]
        );
        assert_eq!(plan.draw_count(), 14);
        let plan = spec(Model::MultiStepSingle { step_gain: 3, steps: 2 }, 1, ReservoirSpec::Fock(0), 1, 0).plan().unwrap();
        assert_eq!(plan.groups, vec![DrawGroup { weight: 3, count: 1 }, DrawGroup { weight: 1, count: 1 }]);
    }

    #[test]
    fn invalid_specs() {
        let bad = [
            spec(Model::SingleMode { gain: 0 }, 1, ReservoirSpec::Fock(0), 10, 0),
            spec(Model::GModes { gain: 2 }, 1, ReservoirSpec::Fock(0), 0, 0),
            spec(Model::MultiStepMulti { step_gain: 1, steps: 3 }, 1, ReservoirSpec::Fock(0), 10, 0),
            spec(Model::MultiStepSingle { step_gain: 2, steps: 0 }, 1, ReservoirSpec::Fock(0), 10, 0),
            spec(Model::MultiStepSingle { step_gain: 2, steps: 64 }, 1, ReservoirSpec::Fock(0), 10, 0),
            spec(Model::Shelving { gain: 4, cavity_modes: 5 }, 1, ReservoirSpec::Fock(0), 10, 0),
            spec(Model::Shelving { gain: 4, cavity_modes: 0 }, 1, ReservoirSpec::Fock(0), 10, 0),
            spec(Model::Multiplexed { gain: 5, mode_budget: 9 }, 2, ReservoirSpec::Fock(0), 10, 0),
            spec(Model::GModes { gain: 2 }, 1, ReservoirSpec::Thermal(f64::NAN), 10, 0),
        ];
        for s in bad {
            assert!(run_scenario(&s).is_err(), "{s:?}");
        }
        let not_shelving = spec(Model::GModes { gain: 2 }, 1, ReservoirSpec::Fock(0), 10, 0);
        assert!(run_shelving(&not_shelving).is_err());
    }

    #[test]
    fn shelving_split_is_even() {
        assert_eq!(shelving_split(10, 3).unwrap(), vec![4, 3, 3]);
        assert_eq!(shelving_split(8, 8).unwrap(), vec![1; 8]);
        assert_eq!(shelving_split(8, 1).unwrap(), vec![8]);
    }

    #[test]
    fn shelving_reduces_to_single_and_g_modes() {
        let gain = 6;
        let res = ReservoirSpec::Thermal(1.0);
        for (modes, expected) in [(1, 2.0), (gain, 12.0), (3, 6.0)] {
            let s = spec(Model::Shelving { gain, cavity_modes: modes }, 1, res.clone(), 200_000, 21);
            assert_eq!(s.analytic_variance().unwrap(), expected);
            let stats = run_shelving(&s).unwrap();
            assert!(stats.variance_z_score(expected).abs() < 3.0, "m={modes}: {stats:?}");
            assert!(stats.mean_z_score(gain as f64 + modes as f64).abs() < 4.0);
        }
        // one cavity mode and the single-mode model consume identical draws
        let shelved = run_shelving(&spec(Model::Shelving { gain, cavity_modes: 1 }, 1, res.clone(), 5000, 4)).unwrap();
        let single = run_scenario(&spec(Model::SingleMode { gain }, 1, res.clone(), 5000, 4)).unwrap();
        assert_eq!(shelved, single);
        let spread = run_shelving(&spec(Model::Shelving { gain, cavity_modes: gain }, 1, res.clone(), 5000, 4)).unwrap();
        let g_modes = run_scenario(&spec(Model::GModes { gain }, 1, res, 5000, 4)).unwrap();
        assert_eq!(spread, g_modes);
    }

    #[test]
    fn multiplexed_examples() {
        let stats = run_multiplexed(5, 2, 10, ReservoirSpec::Fock(0), 1000, 1).unwrap();
        assert_eq!((stats.mean, stats.variance), (10.0, 0.0));

        let stats = run_multiplexed(5, 0, 12, ReservoirSpec::Thermal(0.4), 100_000, 2).unwrap();
        assert!(stats.mean_z_score(12.0 * 0.4).abs() < 4.0);
        let expected = 12.0 * 0.4 * 1.4;
        assert!(stats.variance_z_score(expected).abs() < 3.0, "{stats:?}");

        let stats = run_multiplexed(3, 2, 20, ReservoirSpec::Thermal(0.4), 100_000, 3).unwrap();
        assert!(stats.variance_z_score(20.0 * 0.56).abs() < 3.0, "{stats:?}");
        assert!(stats.mean_z_score(6.0 + 20.0 * 0.4).abs() < 4.0);
    }

    #[test]
    fn reproducible_and_seed_sensitive() {
        let s = spec(Model::MultiStepMulti { step_gain: 2, steps: 2 }, 1, ReservoirSpec::Thermal(0.2), 50_000, 77);
        let first = run_scenario(&s).unwrap();
        assert_eq!(first, run_scenario(&s).unwrap());
        let other = run_scenario(&ScenarioSpec { seed: 78, ..s.clone() }).unwrap();
        assert_ne!(first, other);
        let se = (first.std_error_of_mean.powi(2) + other.std_error_of_mean.powi(2)).sqrt();
        assert!((first.mean - other.mean).abs() < 5.0 * se);
    }

    #[test]
    fn split_runs_pool_exactly() {
        let s = spec(Model::GModes { gain: 3 }, 2, ReservoirSpec::Thermal(0.6), 2 * 40_001, 9);
        let whole = run_trials(&s, 0..s.trials).unwrap();
        let left = run_trials(&s, 0..40_001).unwrap();
        let right = run_trials(&s, 40_001..s.trials).unwrap();
        assert_eq!(left.merge(&right).unwrap(), whole);
        assert_eq!(whole.finish(), run_scenario(&s).unwrap());
    }

    #[test]
    fn moment_sums_match_direct_formulas() {
        let xs = [3u64, 7, 7, 10, 0, 4, 12];
        let mut acc = MomentSums::new(5);
        xs.iter().for_each(|&x| acc.push(x));
        let stats = acc.finish();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<u64>() as f64 / n;
        let var = xs.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let m4 = xs.iter().map(|&x| (x as f64 - mean).powi(4)).sum::<f64>() / n;
        assert_abs_diff_eq!(stats.mean, mean, epsilon = 1e-12);
        assert_abs_diff_eq!(stats.variance, var, epsilon = 1e-12);
        let se = ((m4 - (n - 3.0) / (n - 1.0) * var * var) / n).sqrt();
        assert_abs_diff_eq!(stats.std_error_of_variance, se, epsilon = 1e-12);
        assert!(MomentSums::new(1).merge(&MomentSums::new(2)).is_err());
    }

    #[test]
    fn scenario_json_shape() {
        let s = spec(Model::MultiStepMulti { step_gain: 4, steps: 2 }, 1, ReservoirSpec::Thermal(1.0), 10, 3);
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(
            json,
            r#"{"model":{"model":"MultiStepMulti","step_gain":4,"steps":2},"input_n_a":1,"reservoir":{"thermal":1.0},"trials":10,"seed":3}"#
        );
        assert_eq!(serde_json::from_str::<ScenarioSpec>(&json).unwrap(), s);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn mean_carries_gain_times_input(gain in 1u64..8, n_a in 0u64..3, nbar in 0.0f64..1.5, seed in any::<u64>()) {
            let s = spec(Model::GModes { gain }, n_a, ReservoirSpec::Thermal(nbar), 20_000, seed);
            let stats = run_scenario(&s).unwrap();
            let background = gain as f64 * nbar;
            let excess = stats.mean - background - (gain * n_a) as f64;
            prop_assert!(excess.abs() <= 4.0 * stats.std_error_of_mean.max(1e-300), "{:?}", stats);
        }
    }
}
