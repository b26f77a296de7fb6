//! One meter coupled to the average `Ā = N⁻¹ Σ_n A_n` of `N` identically
//! prepared systems.
//!
//! After post-selecting every system in `φ`, the meter amplitude is
//! `(<φ| exp(-iλ A p / N) |ψ>)^N |ξ>`. Expanding the power gives a multinomial
//! sum of displaced Gaussians ([`collective_postselected_pointer`]), with
//! weights carried as log-magnitude and phase. The expansion is exact but its
//! terms cancel heavily once `N` is large: their magnitudes sum to roughly
//! `(Σ_i |w_i|)^N` while the result is of order `|<φ|ψ>|^N`.
//!
//! Densities, means and the post-selection ratio are therefore evaluated from
//! the characteristic function `u(k) = <φ|exp(-iλ A k / N)|ψ> / <φ|ψ>`, whose
//! `N`-th power is formed as `exp(N log u)` and never cancels:
//!
//! * `x'` density: `G(x') |u(x'/2)|^{2N} / R`
//! * `x` amplitude: `(2π)^{-1/4} π^{-1/2} ∫ exp(-k^2 + ikx) u(k)^N dk`
//! * ratio `R = P(φ^N|ψ^N) / |<φ|ψ>|^{2N} = ∫ G(x') |u(x'/2)|^{2N} dx'`

use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::pointer::{gaussian, Basis, GaussianTerm, PointerWavefunction};
use crate::quadrature::GaussLegendre;
use crate::quantum::{Complex, Observable, PureState, WeakValueResult, weak_value, ORTHOGONALITY_TOL};

pub const DEFAULT_MAX_SYSTEMS: usize = 2000;
pub const DEFAULT_TERM_CAP: u128 = 1_000_000;

/// Grid spacing of the trapezoid rule for the `x` amplitude.
const K_STEP: f64 = 0.02;

#[derive(Clone, Debug, PartialEq)]
pub struct CollectiveSetup {
    pub observable: Observable,
    pub lambda: f64,
    pub psi: PureState,
    pub phi: PureState,
    pub n: usize,
    pub max_systems: usize,
    pub term_cap: u128,
}

impl CollectiveSetup {
    pub fn new(observable: Observable, lambda: f64, psi: PureState, phi: PureState, n: usize) -> Result<Self> {
        let cs = Self {
            observable,
            lambda,
            psi,
            phi,
            n,
            max_systems: DEFAULT_MAX_SYSTEMS,
            term_cap: DEFAULT_TERM_CAP,
        };
        cs.validate()?;
        Ok(cs)
    }

    fn validate(&self) -> Result<()> {
        if !self.lambda.is_finite() {
            return Err(Error::NonFinite("coupling lambda"));
        }
        for s in [&self.psi, &self.phi] {
            if s.dim() != self.observable.dim() {
                return Err(Error::DimensionMismatch {
                    expected: self.observable.dim(),
                    got: s.dim(),
                });
            }
        }
        let ov = self.phi.inner(&self.psi).norm();
        if ov <= ORTHOGONALITY_TOL {
            return Err(Error::OrthogonalPostselection(ov));
        }
        if self.n == 0 || self.n > self.max_systems {
            return Err(Error::InvalidArgument(format!(
                "number of systems {} outside 1..={}",
                self.n, self.max_systems
            )));
        }
        Ok(())
    }

    pub fn with_n(&self, n: usize) -> Result<Self> {
        let cs = Self { n, ..self.clone() };
        cs.validate()?;
        Ok(cs)
    }

    pub fn with_caps(&self, max_systems: usize, term_cap: u128) -> Result<Self> {
        let cs = Self {
            max_systems,
            term_cap,
            ..self.clone()
        };
        cs.validate()?;
        Ok(cs)
    }

    pub fn weak_value(&self) -> WeakValueResult {
        weak_value(&self.observable, &self.psi, &self.phi).expect("validated at construction")
    }

    /// `(a_i, <φ|P_i|ψ>)` per distinct eigenvalue.
    fn eigen_weights(&self) -> Vec<(f64, Complex)> {
        let es = self.observable.eigensystem();
        es.eigenvalues
            .iter()
            .zip(es.components(self.psi.amplitudes()))
            .map(|(a, v)| (*a, self.phi.bra(&v)))
            .collect()
    }
}

/// Underflow-safe term `exp(log_magnitude + i phase) g(x - center)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LogWeightedTerm {
    pub log_magnitude: f64,
    pub phase: f64,
    pub center: f64,
}

/// Post-selected collective meter amplitude (unnormalized).
#[derive(Clone, Debug, PartialEq)]
pub struct CollectivePointer {
    /// Sorted by center.
    pub terms: Vec<LogWeightedTerm>,
    /// Largest `log_magnitude`; the wavefunction is scaled by `exp(-log_scale)`.
    pub log_scale: f64,
}

impl CollectivePointer {
    /// The amplitude divided by `exp(log_scale)`.
    pub fn wavefunction(&self) -> PointerWavefunction {
        PointerWavefunction::new_unchecked(
            self.terms
                .iter()
                .map(|t| {
                    GaussianTerm::new(
                        Complex::from_polar((t.log_magnitude - self.log_scale).exp(), t.phase),
                        t.center,
                        0.0,
                    )
                })
                .collect(),
            Basis::X,
        )
    }

    /// `ln P(φ^N|ψ^N)`.
    pub fn log_postselection_probability(&self) -> f64 {
        2.0 * self.log_scale + self.wavefunction().norm_sqr().ln()
    }
}

/// `C(n + k - 1, k - 1)`, saturating.
pub fn term_count(n: usize, k: usize) -> u128 {
    if k == 0 {
        return 0;
    }
    let mut c: u128 = 1;
    for j in 1..k as u128 {
        c = match c.checked_mul(n as u128 + j) {
            Some(v) => v / j,
            None => return u128::MAX,
        };
    }
    c
}

/// Calls `f` with every composition of `n` into `k` non-negative parts, in
/// lexicographic order (or reverse lexicographic when `reverse`).
fn for_each_composition(n: usize, k: usize, reverse: bool, f: &mut impl FnMut(&[usize])) {
    fn rec(rest: usize, slot: usize, counts: &mut Vec<usize>, reverse: bool, f: &mut impl FnMut(&[usize])) {
        if slot + 1 == counts.len() {
            counts[slot] = rest;
            f(counts);
            return;
        }
        let mut visit = |v: usize, counts: &mut Vec<usize>| {
            counts[slot] = v;
            rec(rest - v, slot + 1, counts, reverse, f);
        };
        if reverse {
            for v in (0..=rest).rev() {
                visit(v, counts);
            }
        } else {
            for v in 0..=rest {
                visit(v, counts);
            }
        }
    }
    let mut counts = vec![0; k];
    rec(n, 0, &mut counts, reverse, f);
}

fn expand(cs: &CollectiveSetup, reverse: bool) -> Result<CollectivePointer> {
    let ew = cs.eigen_weights();
    let needed = term_count(cs.n, ew.len());
    if needed > cs.term_cap {
        return Err(Error::TermBudgetExceeded {
            needed,
            cap: cs.term_cap,
        });
    }
    let nf = cs.n as f64;
    let log_n_fact = ln_gamma(nf + 1.0);
    let mut raw = Vec::with_capacity(needed as usize);
    for_each_composition(cs.n, ew.len(), reverse, &mut |counts| {
        let mut lm = log_n_fact;
        let mut phase = 0.0;
        let mut shift = 0.0;
        for (&c, (a, w)) in counts.iter().zip(&ew) {
            if c == 0 {
                continue;
            }
            if w.norm() == 0.0 {
                return;
            }
            let c = c as f64;
            lm += c * w.norm().ln() - ln_gamma(c + 1.0);
            phase += c * w.arg();
            shift += c * a;
        }
        raw.push(LogWeightedTerm {
            log_magnitude: lm,
            phase,
            center: cs.lambda * shift / nf,
        });
    });
    raw.sort_by(|a, b| a.center.total_cmp(&b.center));
    let radius = cs.observable.eigensystem().spectral_radius();
    let tol = 1e-12 * cs.lambda.abs() * (radius + 1.0) / nf;
    let mut terms: Vec<LogWeightedTerm> = Vec::new();
    let mut i = 0;
    while i < raw.len() {
        let mut j = i + 1;
        while j < raw.len() && raw[j].center - raw[i].center <= tol {
            j += 1;
        }
        let cluster = &raw[i..j];
        let m = cluster.iter().map(|t| t.log_magnitude).fold(f64::NEG_INFINITY, f64::max);
        let sum: Complex = cluster
            .iter()
            .map(|t| Complex::from_polar((t.log_magnitude - m).exp(), t.phase))
            .sum();
        if sum.norm() > 0.0 {
            terms.push(LogWeightedTerm {
                log_magnitude: m + sum.norm().ln(),
                phase: sum.arg(),
                center: cluster[0].center,
            });
        }
        i = j;
    }
    let log_scale = terms
        .iter()
        .map(|t| t.log_magnitude)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(CollectivePointer { terms, log_scale })
}

/// Multinomial expansion of `(Σ_i w_i D(λ a_i / N))^N |ξ>` with `w_i = <φ|P_i|ψ>`.
pub fn collective_postselected_pointer(cs: &CollectiveSetup) -> Result<CollectivePointer> {
    expand(cs, false)
}

/// Collective distributions evaluated through the characteristic function.
#[derive(Clone, Debug)]
pub struct CollectiveDistribution {
    lambda_per_system: f64,
    n: f64,
    /// `(a_i, <φ|P_i|ψ> / <φ|ψ>)`
    weights: Vec<(f64, Complex)>,
    ratio: f64,
    xprime_nodes: Vec<(f64, f64)>,
    /// `(k_j, h C exp(-k_j^2) u(k_j)^N)` on the trapezoid grid.
    k_nodes: Vec<(f64, Complex)>,
    x_range: f64,
}

impl CollectiveDistribution {
    pub fn new(cs: &CollectiveSetup) -> Self {
        let overlap = cs.phi.inner(&cs.psi);
        let weights: Vec<(f64, Complex)> = cs
            .eigen_weights()
            .into_iter()
            .map(|(a, w)| (a, w / overlap))
            .collect();
        // |u(k)|^N ≤ exp(λ K |k|) with K = Σ |ŵ_i| |a_i|
        let spread = cs.lambda.abs() * weights.iter().map(|(a, w)| w.norm() * a.abs()).sum::<f64>();
        let mut d = Self {
            lambda_per_system: cs.lambda / cs.n as f64,
            n: cs.n as f64,
            weights,
            ratio: 1.0,
            xprime_nodes: Vec::new(),
            k_nodes: Vec::new(),
            x_range: 12.0 + spread,
        };
        let r = 2.0 * spread + 12.0;
        let panels = (2.0 * r / 2.0).ceil() as usize;
        d.xprime_nodes = GaussLegendre::new(48).composite_points(-r, r, panels);
        d.ratio = d
            .xprime_nodes
            .iter()
            .map(|&(x, w)| gaussian(x) * d.char_power(0.5 * x).norm_sqr() * w)
            .sum();
        let l = 0.5 * spread + 7.0;
        let m = (2.0 * l / K_STEP).ceil() as usize;
        let h = 2.0 * l / m as f64;
        let c = (2.0 * std::f64::consts::PI).powf(-0.25) / std::f64::consts::PI.sqrt();
        d.k_nodes = (0..=m)
            .map(|j| {
                let k = -l + j as f64 * h;
                let end = if j == 0 || j == m { 0.5 } else { 1.0 };
                (k, d.char_power(k) * (end * h * c * (-k * k).exp()))
            })
            .collect();
        d
    }

    /// `u(k) = Σ_i ŵ_i exp(-iλ a_i k / N)`.
    pub fn char_fn(&self, k: f64) -> Complex {
        self.weights
            .iter()
            .map(|(a, w)| w * Complex::from_polar(1.0, -self.lambda_per_system * a * k))
            .sum()
    }

    /// `u(k)^N`.
    pub fn char_power(&self, k: f64) -> Complex {
        let u = self.char_fn(k);
        if u.norm() == 0.0 {
            return Complex::new(0.0, 0.0);
        }
        (u.ln() * self.n).exp()
    }

    /// `P(φ^N|ψ^N) / |<φ|ψ>|^{2N}`.
    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    /// Meter amplitude in `x`, divided by `<φ|ψ>^N`.
    pub fn x_amplitude(&self, x: f64) -> Complex {
        self.k_nodes
            .iter()
            .map(|(k, f)| f * Complex::from_polar(1.0, k * x))
            .sum()
    }

    pub fn density(&self, basis: Basis, x: f64) -> f64 {
        match basis {
            Basis::X => self.x_amplitude(x).norm_sqr() / self.ratio,
            Basis::XPrime => gaussian(x) * self.char_power(0.5 * x).norm_sqr() / self.ratio,
        }
    }

    pub fn mean(&self, basis: Basis) -> f64 {
        match basis {
            Basis::XPrime => self
                .xprime_nodes
                .iter()
                .map(|&(x, w)| x * self.density(Basis::XPrime, x) * w)
                .sum(),
            Basis::X => {
                let r = self.x_range;
                GaussLegendre::new(48)
                    .composite_points(-r, r, (r).ceil() as usize)
                    .iter()
                    .map(|&(x, w)| x * self.density(Basis::X, x) * w)
                    .sum()
            }
        }
    }
}

/// Normalized conditional meter density after post-selecting all `N` systems.
pub fn collective_conditional_density(cs: &CollectiveSetup, basis: Basis, x: f64) -> f64 {
    CollectiveDistribution::new(cs).density(basis, x)
}

/// `P(φ^N|ψ^N) / |<φ|ψ>|^{2N}`.
pub fn collective_postselection_ratio(cs: &CollectiveSetup) -> f64 {
    CollectiveDistribution::new(cs).ratio()
}

/// Distance of the finite-`N` results from their large-`N` limits.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CollectiveDiscrepancy {
    pub n: usize,
    /// `max_x |P(x) - G(x - λ Re A_w)|` on a 512-point grid.
    pub x_density_sup: f64,
    /// `|E[x'] - λ Im A_w|`
    pub xprime_mean_gap: f64,
    /// `|R - exp(λ^2 (Im A_w)^2 / 2)|`
    pub ratio_gap: f64,
}

pub fn collective_discrepancy(cs: &CollectiveSetup) -> CollectiveDiscrepancy {
    let d = CollectiveDistribution::new(cs);
    let aw = cs.weak_value().value;
    let shift = cs.lambda * aw.re;
    let x_density_sup = (0..512)
        .map(|j| {
            let x = shift - 8.0 + 16.0 * j as f64 / 511.0;
            (d.density(Basis::X, x) - gaussian(x - shift)).abs()
        })
        .fold(0.0, f64::max);
    let im = cs.lambda * aw.im;
    CollectiveDiscrepancy {
        n: cs.n,
        x_density_sup,
        xprime_mean_gap: (d.mean(Basis::XPrime) - im).abs(),
        ratio_gap: (d.ratio() - (0.5 * im * im).exp()).abs(),
    }
}
