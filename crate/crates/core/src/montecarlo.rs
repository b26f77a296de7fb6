//! Run-by-run simulation of the measurement protocols.
//!
//! Every trial draws from its own random stream `(seed, trial index)` (see
//! [`stream_rng`]), trials are collected in index order, and all reductions
//! run sequentially with compensated sums, so records and statistics are
//! identical for any thread count.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::pointer::{gaussian, stream_rng, Basis, GaussianTerm, InverseCdfSampler, PointerWavefunction, SamplerConfig};
use crate::protocols::{
    conditional_mean, conditional_system_state, kick_amplitude, postselection_probability, sequential_moments,
    MeasurementOrder, MeasurementSetup, SequentialSetup,
};
use crate::quantum::{CVector, Complex, Observable, PureState};

/// Number of standard errors allowed between an estimate and its target.
pub const AGREEMENT_SIGMAS: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Single,
    Kick,
    Sequential,
    Threshold,
}

/// Everything a Monte Carlo run needs besides the physical setup.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunOptions {
    pub trials: usize,
    pub seed: u64,
    /// Worker threads; 0 lets rayon decide.
    pub threads: usize,
    pub sampler: SamplerConfig,
}

impl RunOptions {
    pub fn new(trials: usize, seed: u64) -> Self {
        Self {
            trials,
            seed,
            threads: 0,
            sampler: SamplerConfig::default(),
        }
    }

    pub fn with_threads(self, threads: usize) -> Self {
        Self { threads, ..self }
    }

    fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidArgument("trials must be >= 1".into()));
        }
        self.sampler.validate()
    }
}

/// Selection on the meter reading alone, with no post-selection on the system.
#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdSetup {
    pub observable: Observable,
    pub lambda: f64,
    pub psi: PureState,
    /// Runs with `x >= threshold_multiple * λ` are kept.
    pub threshold_multiple: f64,
}

impl ThresholdSetup {
    pub fn threshold(&self) -> f64 {
        self.threshold_multiple * self.lambda
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ProtocolPlan {
    Single(MeasurementSetup),
    Kick(MeasurementSetup),
    Sequential(SequentialSetup),
    Threshold(ThresholdSetup),
}

impl ProtocolPlan {
    pub fn protocol(&self) -> Protocol {
        match self {
            ProtocolPlan::Single(_) => Protocol::Single,
            ProtocolPlan::Kick(_) => Protocol::Kick,
            ProtocolPlan::Sequential(_) => Protocol::Sequential,
            ProtocolPlan::Threshold(_) => Protocol::Threshold,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialPlan {
    pub protocol: ProtocolPlan,
    pub options: RunOptions,
}

/// One run: meter reading(s) and whether the run was kept.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ExperimentRecord {
    pub x: f64,
    pub x2: Option<f64>,
    pub postselected: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialStatistics {
    pub n_total: usize,
    pub n_postselected: usize,
    pub postselection_rate: f64,
    pub rate_standard_error: f64,
    /// Means over kept runs, one per meter.
    pub conditional_means: Vec<f64>,
    pub standard_errors: Vec<f64>,
    /// Means over all runs, one per meter.
    pub unconditional_means: Vec<f64>,
    pub unconditional_standard_errors: Vec<f64>,
    /// Conditional covariance of the two meters (sequential runs only).
    pub covariance: Option<f64>,
    /// Jackknife standard error of `covariance`.
    pub covariance_standard_error: Option<f64>,
}

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
struct Compensated {
    sum: f64,
    carry: f64,
}

impl Compensated {
    fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.carry += (self.sum - t) + v;
        } else {
            self.carry += (v - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut s = Compensated::default();
    for v in values {
        s.add(v);
    }
    s.value()
}

/// Sample mean and its standard error.
pub fn mean_and_standard_error(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = compensated_sum(values.iter().copied()) / n;
    if values.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = compensated_sum(values.iter().map(|v| (v - mean).powi(2))) / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Plug-in covariance `mean(xy) - mean(x) mean(y)` and its leave-one-out
/// jackknife standard error, in O(n).
pub fn covariance_jackknife(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    if n < 3 {
        return (f64::NAN, f64::NAN);
    }
    let nf = n as f64;
    let mx = compensated_sum(xs.iter().copied()) / nf;
    let my = compensated_sum(ys.iter().copied()) / nf;
    // centered sums keep the leave-one-out updates well conditioned
    let sxy = compensated_sum(xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)));
    let cov = sxy / nf;
    let m = nf - 1.0;
    let loo: Vec<f64> = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let (dx, dy) = (x - mx, y - my);
            // sums of centered values over all runs are zero
            let (sx, sy) = (-dx, -dy);
            (sxy - dx * dy) / m - (sx / m) * (sy / m)
        })
        .collect();
    let mean_loo = compensated_sum(loo.iter().copied()) / nf;
    let var = compensated_sum(loo.iter().map(|c| (c - mean_loo).powi(2)));
    (cov, (var * (nf - 1.0) / nf).sqrt())
}

fn statistics(records: &[ExperimentRecord], meters: usize) -> Result<TrialStatistics> {
    let n_total = records.len();
    let kept: Vec<&ExperimentRecord> = records.iter().filter(|r| r.postselected).collect();
    let n_postselected = kept.len();
    if n_postselected == 0 {
        return Err(Error::NoPostselectedRuns);
    }
    let rate = n_postselected as f64 / n_total as f64;
    let reading = |r: &ExperimentRecord, m: usize| if m == 0 { r.x } else { r.x2.unwrap_or(f64::NAN) };
    let mut conditional_means = Vec::new();
    let mut standard_errors = Vec::new();
    let mut unconditional_means = Vec::new();
    let mut unconditional_standard_errors = Vec::new();
    for m in 0..meters {
        let cond: Vec<f64> = kept.iter().map(|r| reading(r, m)).collect();
        let (mean, se) = mean_and_standard_error(&cond);
        conditional_means.push(mean);
        standard_errors.push(se);
        let all: Vec<f64> = records.iter().map(|r| reading(r, m)).collect();
        let (mean, se) = mean_and_standard_error(&all);
        unconditional_means.push(mean);
        unconditional_standard_errors.push(se);
    }
    let (covariance, covariance_standard_error) = if meters == 2 {
        let xs: Vec<f64> = kept.iter().map(|r| r.x).collect();
        let ys: Vec<f64> = kept.iter().map(|r| reading(r, 1)).collect();
        let (c, se) = covariance_jackknife(&xs, &ys);
        (Some(c), Some(se))
    } else {
        (None, None)
    };
    Ok(TrialStatistics {
        n_total,
        n_postselected,
        postselection_rate: rate,
        rate_standard_error: (rate * (1.0 - rate) / n_total as f64).sqrt(),
        conditional_means,
        standard_errors,
        unconditional_means,
        unconditional_standard_errors,
        covariance,
        covariance_standard_error,
    })
}

/// Runs `trial(index, rng)` for every index and collects the records in order.
fn run_trials<F>(opts: &RunOptions, trial: F) -> Result<Vec<ExperimentRecord>>
where
    F: Fn(&mut rand_chacha::ChaCha8Rng) -> ExperimentRecord + Sync,
{
    opts.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    let seed = opts.seed;
    let records: Vec<ExperimentRecord> = pool.install(|| {
        (0..opts.trials as u64)
            .into_par_iter()
            .map(|i| trial(&mut stream_rng(seed, i)))
            .collect()
    });
    if records.iter().any(|r| !r.x.is_finite() || r.x2.is_some_and(|v| !v.is_finite())) {
        return Err(Error::NumericQuality("non-finite meter reading".into()));
    }
    Ok(records)
}

/// Meter density before post-selection as a weighted mixture of displaced Gaussians.
fn unconditional_components(a: &Observable, lambda: f64, psi: &PureState) -> Vec<(f64, PointerWavefunction)> {
    let es = a.eigensystem();
    es.components(psi.amplitudes())
        .iter()
        .zip(&es.eigenvalues)
        .map(|(v, ai)| {
            (
                v.norm_squared(),
                PointerWavefunction::new_unchecked(
                    vec![GaussianTerm::new(Complex::new(1.0, 0.0), lambda * ai, 0.0)],
                    Basis::X,
                ),
            )
        })
        .collect()
}

/// `Σ_i √G(x - λ a_i) P_i v`, unnormalized.
fn apply_kraus(a: &Observable, lambda: f64, v: &CVector, x: f64) -> CVector {
    let es = a.eigensystem();
    let mut out = CVector::zeros(v.len());
    for (comp, ai) in es.components(v).iter().zip(&es.eigenvalues) {
        out += comp * Complex::new(gaussian(x - lambda * ai).sqrt(), 0.0);
    }
    out
}

/// Meter reading sampled from the unconditional density, then a Bernoulli
/// post-selection with probability `|<φ|χ_x>|^2`.
pub fn run_single(setup: &MeasurementSetup, opts: &RunOptions) -> Result<(Vec<ExperimentRecord>, TrialStatistics)> {
    let comps = unconditional_components(&setup.observable, setup.lambda, &setup.psi);
    let sampler = InverseCdfSampler::for_mixture(&comps, &opts.sampler)?;
    let records = run_trials(opts, |rng| {
        let x = sampler.draw(rng);
        let keep = match conditional_system_state(&setup.observable, setup.lambda, &setup.psi, x) {
            Ok(chi) => rng.random::<f64>() < setup.phi.inner(&chi).norm_sqr(),
            Err(_) => false,
        };
        ExperimentRecord {
            x,
            x2: None,
            postselected: keep,
        }
    })?;
    let stats = statistics(&records, 1)?;
    Ok((records, stats))
}

/// Pre-drawn `x' ~ N(0, 1)` drives `exp(-iλ A x'/2)`; then post-selection.
pub fn run_kick(setup: &MeasurementSetup, opts: &RunOptions) -> Result<(Vec<ExperimentRecord>, TrialStatistics)> {
    let records = run_trials(opts, |rng| {
        let x: f64 = rng.sample(StandardNormal);
        // <φ|exp(-iλAx'/2)|ψ> for a normalized ψ
        let p = kick_amplitude(setup, x).norm_sqr();
        ExperimentRecord {
            x,
            x2: None,
            postselected: rng.random::<f64>() < p,
        }
    })?;
    let stats = statistics(&records, 1)?;
    Ok((records, stats))
}

/// Draws from the Gaussian mixture `Σ_i ‖P_i v‖^2 G(x - λ a_i)` by first
/// picking the component, then the Gaussian.
fn draw_and_collapse<R: Rng + ?Sized>(a: &Observable, lambda: f64, v: &CVector, rng: &mut R) -> (f64, CVector) {
    let es = a.eigensystem();
    let comps = es.components(v);
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut pick = comps.len() - 1;
    for (i, c) in comps.iter().enumerate() {
        acc += c.norm_squared();
        if u < acc {
            pick = i;
            break;
        }
    }
    let z: f64 = rng.sample(StandardNormal);
    let x = lambda * es.eigenvalues[pick] + z;
    let mut chi = apply_kraus(a, lambda, v, x);
    let n = chi.norm();
    chi /= Complex::new(n, 0.0);
    (x, chi)
}

/// Two meters read in sequence, each collapsing the system, then post-selection.
pub fn run_sequential(sq: &SequentialSetup, opts: &RunOptions) -> Result<(Vec<ExperimentRecord>, TrialStatistics)> {
    if sq.bases != [Basis::X, Basis::X] {
        return Err(Error::InvalidArgument(
            "sequential simulation reads both meters in x".into(),
        ));
    }
    let records = run_trials(opts, |rng| {
        let v = sq.psi.amplitudes();
        let (x1, x2, chi) = match sq.order {
            MeasurementOrder::AThenB => {
                let (x1, c1) = draw_and_collapse(&sq.a, sq.lambda_a, v, rng);
                let (x2, c2) = draw_and_collapse(&sq.b, sq.lambda_b, &c1, rng);
                (x1, x2, c2)
            }
            MeasurementOrder::BThenA => {
                let (x2, c2) = draw_and_collapse(&sq.b, sq.lambda_b, v, rng);
                let (x1, c1) = draw_and_collapse(&sq.a, sq.lambda_a, &c2, rng);
                (x1, x2, c1)
            }
        };
        ExperimentRecord {
            x: x1,
            x2: Some(x2),
            postselected: rng.random::<f64>() < sq.phi.bra(&chi).norm_sqr(),
        }
    })?;
    let stats = statistics(&records, 2)?;
    Ok((records, stats))
}

/// No post-selection on the system: runs are kept when `x >= threshold_multiple·λ`.
pub fn run_threshold(ts: &ThresholdSetup, opts: &RunOptions) -> Result<(Vec<ExperimentRecord>, TrialStatistics)> {
    let comps = unconditional_components(&ts.observable, ts.lambda, &ts.psi);
    let sampler = InverseCdfSampler::for_mixture(&comps, &opts.sampler)?;
    let t = ts.threshold();
    let records = run_trials(opts, |rng| {
        let x = sampler.draw(rng);
        ExperimentRecord {
            x,
            x2: None,
            postselected: x >= t,
        }
    })?;
    let stats = statistics(&records, 1)?;
    Ok((records, stats))
}

pub fn run(plan: &TrialPlan) -> Result<(Vec<ExperimentRecord>, TrialStatistics)> {
    match &plan.protocol {
        ProtocolPlan::Single(s) => run_single(s, &plan.options),
        ProtocolPlan::Kick(s) => run_kick(s, &plan.options),
        ProtocolPlan::Sequential(s) => run_sequential(s, &plan.options),
        ProtocolPlan::Threshold(s) => run_threshold(s, &plan.options),
    }
}

/// Exact values the estimators of a plan converge to.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AnalyticTargets {
    pub postselection_rate: f64,
    pub conditional_means: Vec<f64>,
    pub unconditional_means: Vec<f64>,
    pub covariance: Option<f64>,
}

/// `(P(x >= t), E[x | x >= t])` for the unconditional meter mixture.
pub fn truncated_mixture(a: &Observable, lambda: f64, psi: &PureState, t: f64) -> (f64, f64) {
    let normal = Normal::standard();
    let es = a.eigensystem();
    let (mut mass, mut first) = (0.0, 0.0);
    for (v, ai) in es.components(psi.amplitudes()).iter().zip(&es.eigenvalues) {
        let p = v.norm_squared();
        let mu = lambda * ai;
        let tail = normal.sf(t - mu);
        mass += p * tail;
        first += p * (mu * tail + gaussian(t - mu));
    }
    (mass, first / mass)
}

pub fn analytic_targets(plan: &ProtocolPlan) -> AnalyticTargets {
    match plan {
        ProtocolPlan::Single(s) => AnalyticTargets {
            postselection_rate: postselection_probability(s),
            conditional_means: vec![conditional_mean(s, Basis::X)],
            unconditional_means: vec![s.lambda * crate::quantum::expectation(&s.observable, &s.psi)],
            covariance: None,
        },
        ProtocolPlan::Kick(s) => AnalyticTargets {
            postselection_rate: postselection_probability(s),
            conditional_means: vec![conditional_mean(s, Basis::XPrime)],
            unconditional_means: vec![0.0],
            covariance: None,
        },
        ProtocolPlan::Sequential(sq) => {
            let m = sequential_moments(sq);
            let ea = crate::quantum::expectation(&sq.a, &sq.psi);
            let eb = crate::quantum::expectation(&sq.b, &sq.psi);
            AnalyticTargets {
                postselection_rate: m.probability,
                conditional_means: vec![m.mean_1, m.mean_2],
                unconditional_means: vec![sq.lambda_a * ea, sq.lambda_b * eb],
                covariance: Some(m.covariance),
            }
        }
        ProtocolPlan::Threshold(ts) => {
            let (mass, mean) = truncated_mixture(&ts.observable, ts.lambda, &ts.psi, ts.threshold());
            AnalyticTargets {
                postselection_rate: mass,
                conditional_means: vec![mean],
                unconditional_means: vec![ts.lambda * crate::quantum::expectation(&ts.observable, &ts.psi)],
                covariance: None,
            }
        }
    }
}

/// One estimator compared with its target.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimatorCheck {
    pub name: String,
    pub estimate: f64,
    pub standard_error: f64,
    pub target: f64,
    /// `|estimate - target| / standard_error`
    pub z: f64,
}

impl EstimatorCheck {
    fn new(name: &str, estimate: f64, standard_error: f64, target: f64) -> Self {
        let gap = (estimate - target).abs();
        let z = if gap == 0.0 { 0.0 } else { gap / standard_error };
        Self {
            name: name.to_string(),
            estimate,
            standard_error,
            target,
            z,
        }
    }

    pub fn within(&self, sigmas: f64) -> bool {
        self.z <= sigmas
    }
}

/// Every estimator of `stats` next to its analytic target.
pub fn compare(stats: &TrialStatistics, targets: &AnalyticTargets) -> Vec<EstimatorCheck> {
    let mut out = vec![EstimatorCheck::new(
        "postselection_rate",
        stats.postselection_rate,
        stats.rate_standard_error,
        targets.postselection_rate,
    )];
    for (m, t) in targets.conditional_means.iter().enumerate() {
        out.push(EstimatorCheck::new(
            &format!("conditional_mean_{}", m + 1),
            stats.conditional_means[m],
            stats.standard_errors[m],
            *t,
        ));
    }
    for (m, t) in targets.unconditional_means.iter().enumerate() {
        out.push(EstimatorCheck::new(
            &format!("unconditional_mean_{}", m + 1),
            stats.unconditional_means[m],
            stats.unconditional_standard_errors[m],
            *t,
        ));
    }
    if let (Some(c), Some(se), Some(t)) = (stats.covariance, stats.covariance_standard_error, targets.covariance) {
        out.push(EstimatorCheck::new("covariance", c, se, t));
    }
    out
}

/// Kolmogorov–Smirnov statistic of `samples` against `cdf`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic 1% critical value of the KS statistic for `n` samples.
pub fn ks_critical_1pct(n: usize) -> f64 {
    1.627_62 / (n as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn up() -> PureState {
        PureState::basis(2, 0).unwrap()
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let v = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(v), 2.0);
    }

    #[test]
    fn jackknife_matches_direct_leave_one_out() {
        let mut rng = stream_rng(1, 0);
        let xs: Vec<f64> = (0..200).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 0.5 * x + rng.sample::<f64, _>(StandardNormal)).collect();
        let (c, se) = covariance_jackknife(&xs, &ys);
        let plug = |xs: &[f64], ys: &[f64]| {
            let n = xs.len() as f64;
            let mx = xs.iter().sum::<f64>() / n;
            let my = ys.iter().sum::<f64>() / n;
            xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / n
        };
        assert_abs_diff_eq!(c, plug(&xs, &ys), epsilon = 1e-12);
        let loo: Vec<f64> = (0..xs.len())
            .map(|i| {
                let (mut a, mut b) = (xs.clone(), ys.clone());
                a.remove(i);
                b.remove(i);
                plug(&a, &b)
            })
            .collect();
        let n = loo.len() as f64;
        let m = loo.iter().sum::<f64>() / n;
        let direct = ((n - 1.0) / n * loo.iter().map(|c| (c - m).powi(2)).sum::<f64>()).sqrt();
        assert_abs_diff_eq!(se, direct, epsilon = 1e-12);
    }

    #[test]
    fn truncated_mixture_closed_form() {
        let (mass, mean) = truncated_mixture(&Observable::sigma_z(), 0.0, &up(), 0.0);
        assert_abs_diff_eq!(mass, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(mean, (2.0 / std::f64::consts::PI).sqrt(), epsilon = 1e-14);
        let (_, mean) = truncated_mixture(&Observable::sigma_x(), 0.01, &up(), 1.0);
        assert!(mean > 1.0);
    }

    #[test]
    fn single_run_agrees_with_analytic_values() {
        let phi = PureState::from_real(&[0.6, 0.8]).unwrap();
        let s = MeasurementSetup::new(Observable::sigma_x(), 0.1, up(), phi).unwrap();
        let (records, stats) = run_single(&s, &RunOptions::new(200_000, 7)).unwrap();
        assert_eq!(records.len(), 200_000);
        for c in compare(&stats, &analytic_targets(&ProtocolPlan::Single(s))) {
            assert!(c.within(AGREEMENT_SIGMAS), "{c:?}");
        }
    }

    #[test]
    fn eigenstate_is_always_postselected() {
        let s = MeasurementSetup::new(Observable::sigma_z(), 0.3, up(), up()).unwrap();
        let (_, stats) = run_single(&s, &RunOptions::new(20_000, 1)).unwrap();
        assert_eq!(stats.n_postselected, stats.n_total);
        assert!((stats.conditional_means[0] - 0.3).abs() < 4.0 * stats.standard_errors[0]);
    }

    #[test]
    fn results_do_not_depend_on_thread_count() {
        let phi = PureState::from_real(&[0.6, 0.8]).unwrap();
        let s = MeasurementSetup::new(Observable::sigma_x(), 0.4, up(), phi).unwrap();
        let a = run_single(&s, &RunOptions::new(5_000, 3).with_threads(1)).unwrap();
        let b = run_single(&s, &RunOptions::new(5_000, 3).with_threads(4)).unwrap();
        assert_eq!(a, b);
        let c = run_single(&s, &RunOptions::new(5_000, 4).with_threads(1)).unwrap();
        assert_ne!(a.0, c.0);
    }

    #[test]
    fn empty_selection_is_an_error() {
        let ts = ThresholdSetup {
            observable: Observable::sigma_z(),
            lambda: 0.01,
            psi: up(),
            threshold_multiple: 1e5,
        };
        assert_eq!(run_threshold(&ts, &RunOptions::new(1000, 0)).unwrap_err(), Error::NoPostselectedRuns);
        assert!(run_threshold(&ts, &RunOptions::new(0, 0)).is_err());
    }
}
