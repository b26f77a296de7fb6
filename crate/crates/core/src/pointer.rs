//! Meter wavefunctions as finite sums of displaced, phase-modulated Gaussians.
//!
//! A [`PointerWavefunction`] represents
//!
//! ```text
//! ξ(x) = Σ_t w_t · exp(i k_t x) · (2π)^{-1/4} · exp(-(x - c_t)^2 / 4)
//! ```
//!
//! so a single term with unit weight has `|ξ(x)|^2 = G(x - c)`, the unit
//! variance normal density. Overlaps, moments and the change to the `x' = 2p`
//! basis are all closed form.
//!
//! Fourier convention: `<p|x> = (2π)^{-1/2} exp(-i p x)` and `x' = 2p`, with
//! `|x'>` normalized so that `∫ |x'><x'| dx' = 1`. Under this convention a
//! term `(w, c, k)` in the `x` basis becomes `(w·exp(i k c), 2k, -c/2)` in
//! the `x'` basis and the initial meter is form-invariant.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::trapezoid;
use crate::quantum::{Complex, ZERO};

/// Terms closer than this in both center and phase slope are merged.
pub const MERGE_TOL: f64 = 1e-12;

/// `(2π)^{-1/4}`
fn gauss_amp_norm() -> f64 {
    (2.0 * PI).powf(-0.25)
}

/// Standard normal density `G(x)`.
pub fn gaussian(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Which meter observable a wavefunction is expressed in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    /// Position `x`.
    X,
    /// Rescaled momentum `x' = 2p`.
    #[value(name = "xprime")]
    XPrime,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianTerm {
    pub weight: Complex,
    pub center: f64,
    pub phase_slope: f64,
}

impl GaussianTerm {
    pub fn new(weight: Complex, center: f64, phase_slope: f64) -> Self {
        Self {
            weight,
            center,
            phase_slope,
        }
    }

    fn is_finite(&self) -> bool {
        self.weight.re.is_finite()
            && self.weight.im.is_finite()
            && self.center.is_finite()
            && self.phase_slope.is_finite()
    }

    pub fn amplitude(&self, x: f64) -> Complex {
        let dx = x - self.center;
        self.weight
            * Complex::from_polar(gauss_amp_norm() * (-0.25 * dx * dx).exp(), self.phase_slope * x)
    }

    /// Unweighted basis change `x -> x'` applied to one term.
    pub(crate) fn to_xprime(self) -> Self {
        Self {
            weight: self.weight * Complex::from_polar(1.0, self.phase_slope * self.center),
            center: 2.0 * self.phase_slope,
            phase_slope: -0.5 * self.center,
        }
    }

    /// Inverse of [`GaussianTerm::to_xprime`].
    fn from_xprime(self) -> Self {
        Self {
            weight: self.weight * Complex::from_polar(1.0, self.center * self.phase_slope),
            center: -2.0 * self.phase_slope,
            phase_slope: 0.5 * self.center,
        }
    }
}

/// `∫ conj(g_a) g_b dx` for unit-weight terms, times the moment kernel
/// selected by `power` (0, 1 or 2).
pub(crate) fn pair_integral(a: &GaussianTerm, b: &GaussianTerm, power: u8) -> Complex {
    let dc = a.center - b.center;
    let dk = b.phase_slope - a.phase_slope;
    let m = 0.5 * (a.center + b.center);
    let base = Complex::from_polar((-dc * dc / 8.0 - dk * dk / 2.0).exp(), dk * m);
    // E[x^n e^{i dk x}] / E[e^{i dk x}] for x ~ N(m, 1)
    let shifted = Complex::new(m, dk);
    match power {
        0 => base,
        1 => base * shifted,
        _ => base * (Complex::new(1.0, 0.0) + shifted * shifted),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointerWavefunction {
    terms: Vec<GaussianTerm>,
    basis: Basis,
}

impl PointerWavefunction {
    /// Validates, merges duplicate terms and rejects zero states.
    pub fn new(terms: Vec<GaussianTerm>, basis: Basis) -> Result<Self> {
        if terms.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("pointer term"));
        }
        let w = Self {
            terms: merge_terms(terms),
            basis,
        };
        if w.terms.is_empty() || w.norm_sqr() <= 0.0 {
            return Err(Error::InvalidArgument("pointer wavefunction has zero norm".into()));
        }
        Ok(w)
    }

    /// Like [`PointerWavefunction::new`] but allows a vanishing norm.
    pub(crate) fn new_unchecked(terms: Vec<GaussianTerm>, basis: Basis) -> Self {
        Self {
            terms: merge_terms(terms),
            basis,
        }
    }

    /// `√G(x)`: one term, unit weight, centered at the origin.
    pub fn initial_meter() -> Self {
        Self {
            terms: vec![GaussianTerm::new(Complex::new(1.0, 0.0), 0.0, 0.0)],
            basis: Basis::X,
        }
    }

    pub fn terms(&self) -> &[GaussianTerm] {
        &self.terms
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    pub fn amplitude(&self, x: f64) -> Complex {
        self.terms.iter().map(|t| t.amplitude(x)).sum()
    }

    /// `|ξ(x)|^2` (not divided by the norm).
    pub fn density(&self, x: f64) -> f64 {
        self.amplitude(x).norm_sqr()
    }

    /// `<self|other>`.
    pub fn overlap(&self, other: &PointerWavefunction) -> Result<Complex> {
        if self.basis != other.basis {
            return Err(Error::BasisMismatch);
        }
        Ok(self.raw_moment(other, 0))
    }

    pub fn norm_sqr(&self) -> f64 {
        self.raw_moment(self, 0).re
    }

    fn raw_moment(&self, other: &PointerWavefunction, power: u8) -> Complex {
        let mut acc = ZERO;
        for a in &self.terms {
            for b in &other.terms {
                acc += a.weight.conj() * b.weight * pair_integral(a, b, power);
            }
        }
        acc
    }

    /// `∫ x^n |ξ|^2 dx / ∫ |ξ|^2 dx` for `n ∈ {0, 1, 2}`.
    pub fn moment(&self, n: u8) -> Result<f64> {
        if n > 2 {
            return Err(Error::InvalidArgument(format!("moment order {n} not supported")));
        }
        if n == 0 {
            return Ok(1.0);
        }
        Ok(self.raw_moment(self, n).re / self.norm_sqr())
    }

    pub fn mean(&self) -> f64 {
        self.raw_moment(self, 1).re / self.norm_sqr()
    }

    pub fn variance(&self) -> f64 {
        let n = self.norm_sqr();
        let m1 = self.raw_moment(self, 1).re / n;
        self.raw_moment(self, 2).re / n - m1 * m1
    }

    pub fn scaled(&self, factor: Complex) -> Self {
        Self {
            terms: self
                .terms
                .iter()
                .map(|t| GaussianTerm {
                    weight: t.weight * factor,
                    ..*t
                })
                .collect(),
            basis: self.basis,
        }
    }

    pub fn normalized(&self) -> Self {
        self.scaled(Complex::new(1.0 / self.norm_sqr().sqrt(), 0.0))
    }

    /// Exact change from the `x` basis to the `x' = 2p` basis.
    pub fn to_xprime_basis(&self) -> Result<Self> {
        if self.basis != Basis::X {
            return Err(Error::BasisMismatch);
        }
        Ok(Self::new_unchecked(
            self.terms.iter().map(|t| t.to_xprime()).collect(),
            Basis::XPrime,
        ))
    }

    /// Exact inverse of [`PointerWavefunction::to_xprime_basis`].
    pub fn from_xprime_basis(&self) -> Result<Self> {
        if self.basis != Basis::XPrime {
            return Err(Error::BasisMismatch);
        }
        Ok(Self::new_unchecked(
            self.terms.iter().map(|t| t.from_xprime()).collect(),
            Basis::X,
        ))
    }

    /// The wavefunction expressed in `basis`.
    pub fn in_basis(&self, basis: Basis) -> Self {
        match (self.basis, basis) {
            (Basis::X, Basis::XPrime) => self.to_xprime_basis().unwrap(),
            (Basis::XPrime, Basis::X) => self.from_xprime_basis().unwrap(),
            _ => self.clone(),
        }
    }

    /// Smallest and largest term centers.
    pub fn center_range(&self) -> (f64, f64) {
        self.terms.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| {
            (lo.min(t.center), hi.max(t.center))
        })
    }
}

/// Sums terms whose `(center, phase_slope)` agree within [`MERGE_TOL`].
/// Output is sorted by center, then phase slope.
pub(crate) fn merge_terms(mut terms: Vec<GaussianTerm>) -> Vec<GaussianTerm> {
    terms.sort_by(|a, b| {
        a.center
            .total_cmp(&b.center)
            .then(a.phase_slope.total_cmp(&b.phase_slope))
    });
    let mut out: Vec<GaussianTerm> = Vec::with_capacity(terms.len());
    let mut cluster_start = 0;
    for t in terms {
        if out
            .get(cluster_start)
            .is_none_or(|first| t.center - first.center > MERGE_TOL)
        {
            cluster_start = out.len();
        }
        match out[cluster_start..]
            .iter_mut()
            .find(|o| (o.phase_slope - t.phase_slope).abs() <= MERGE_TOL)
        {
            Some(o) => o.weight += t.weight,
            None => out.push(t),
        }
    }
    out.retain(|t| t.weight != ZERO);
    out
}

/// Grid settings for the inverse-CDF sampler.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerConfig {
    /// Margin added beyond the extreme term centers.
    pub grid_halfwidth: f64,
    pub grid_points: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            grid_halfwidth: 10.0,
            grid_points: 16384,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_points < 256 {
            return Err(Error::InvalidArgument(format!(
                "grid_points must be >= 256, got {}",
                self.grid_points
            )));
        }
        if !(self.grid_halfwidth >= 6.0) {
            return Err(Error::InvalidArgument(format!(
                "grid_halfwidth must be >= 6, got {}",
                self.grid_halfwidth
            )));
        }
        Ok(())
    }
}

/// Random stream `stream` of the run seeded by `seed`.
///
/// ChaCha8 keyed by `seed_from_u64(seed)` with the ChaCha stream id set to
/// `stream`; streams are independent and need no coordination, so results do
/// not depend on how work is split across threads.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Tabulated CDF on a uniform grid, inverted by linear interpolation.
#[derive(Clone, Debug)]
pub struct InverseCdfSampler {
    lo: f64,
    step: f64,
    cdf: Vec<f64>,
}

impl InverseCdfSampler {
    /// `total_mass` is the exact integral of `density` over the real line; the
    /// grid is rejected when more than `1e-9` of it falls outside `[lo, hi]`.
    pub fn from_density(
        lo: f64,
        hi: f64,
        points: usize,
        total_mass: f64,
        density: impl Fn(f64) -> f64,
    ) -> Result<Self> {
        if !(hi > lo) || points < 2 || !(total_mass > 0.0) {
            return Err(Error::InvalidArgument("degenerate sampling grid".into()));
        }
        let step = (hi - lo) / (points - 1) as f64;
        let values: Vec<f64> = (0..points)
            .map(|i| density(lo + i as f64 * step).max(0.0))
            .collect();
        let inside = trapezoid(&values, step);
        let tail = (total_mass - inside) / total_mass;
        if tail > 1e-9 {
            return Err(Error::GridTooCoarse(tail));
        }
        let mut cdf = Vec::with_capacity(points);
        let mut acc = 0.0;
        cdf.push(0.0);
        for w in values.windows(2) {
            acc += 0.5 * step * (w[0] + w[1]);
            cdf.push(acc);
        }
        for c in &mut cdf {
            *c /= acc;
        }
        Ok(Self { lo, step, cdf })
    }

    pub fn for_wavefunction(w: &PointerWavefunction, cfg: &SamplerConfig) -> Result<Self> {
        cfg.validate()?;
        let (lo, hi) = w.center_range();
        let n = w.norm_sqr();
        Self::from_density(
            lo - cfg.grid_halfwidth,
            hi + cfg.grid_halfwidth,
            cfg.grid_points,
            n,
            |x| w.density(x),
        )
    }

    /// Incoherent mixture `Σ p_j |ξ_j|^2 / ‖ξ_j‖^2` (weights need not sum to one).
    pub fn for_mixture(components: &[(f64, PointerWavefunction)], cfg: &SamplerConfig) -> Result<Self> {
        cfg.validate()?;
        let comps: Vec<(f64, &PointerWavefunction)> = components
            .iter()
            .filter(|(p, _)| *p > 0.0)
            .map(|(p, w)| (p / w.norm_sqr(), w))
            .collect();
        if comps.is_empty() {
            return Err(Error::InvalidArgument("empty mixture".into()));
        }
        let (lo, hi) = comps.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, w)| {
            let (a, b) = w.center_range();
            (lo.min(a), hi.max(b))
        });
        let total: f64 = components.iter().filter(|(p, _)| *p > 0.0).map(|(p, _)| p).sum();
        Self::from_density(
            lo - cfg.grid_halfwidth,
            hi + cfg.grid_halfwidth,
            cfg.grid_points,
            total,
            |x| comps.iter().map(|(s, w)| s * w.density(x)).sum(),
        )
    }

    /// Inverse CDF at `u ∈ [0, 1)`.
    pub fn quantile(&self, u: f64) -> f64 {
        let j = self.cdf.partition_point(|&c| c <= u).clamp(1, self.cdf.len() - 1);
        let (c0, c1) = (self.cdf[j - 1], self.cdf[j]);
        let frac = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.5 };
        self.lo + ((j - 1) as f64 + frac) * self.step
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(rng.random::<f64>())
    }

    /// Grid CDF at `x` (linear between nodes).
    pub fn cdf(&self, x: f64) -> f64 {
        let pos = (x - self.lo) / self.step;
        if pos <= 0.0 {
            return 0.0;
        }
        let j = pos.floor() as usize;
        if j + 1 >= self.cdf.len() {
            return 1.0;
        }
        let frac = pos - j as f64;
        self.cdf[j] + frac * (self.cdf[j + 1] - self.cdf[j])
    }
}

/// `count` i.i.d. draws from `|ξ|^2 / ‖ξ‖^2`, deterministic in `cfg.seed`.
pub fn sample(w: &PointerWavefunction, cfg: &SamplerConfig, count: usize) -> Result<Vec<f64>> {
    sample_stream(w, cfg, 0, count)
}

/// As [`sample`], drawing from stream `stream` of `cfg.seed` (see [`stream_rng`]).
pub fn sample_stream(
    w: &PointerWavefunction,
    cfg: &SamplerConfig,
    stream: u64,
    count: usize,
) -> Result<Vec<f64>> {
    if count == 0 {
        return Err(Error::InvalidArgument("count must be >= 1".into()));
    }
    let sampler = InverseCdfSampler::for_wavefunction(w, cfg)?;
    let mut rng = stream_rng(cfg.seed, stream);
    Ok((0..count).map(|_| sampler.draw(&mut rng)).collect())
}
