//! Exact meter distributions for the post-selected measurement protocols.
//!
//! System and meters are kept as a branch decomposition
//! `Σ_b |s_b> ⊗ Π_m |g(c_bm, k_bm)>`, where `|g(c, k)>` is a unit Gaussian
//! term centered at `c` with phase slope `k` (see [`crate::pointer`]). A von
//! Neumann coupling `exp(-iλ A p_m)` splits every branch over the spectral
//! projectors of `A` and shifts meter `m` by `λ a_i`; a position kick
//! `exp(-iλ A x_m / 2)` instead changes the phase slope by `-λ a_i / 2`.
//! Post-selection contracts the system with `<φ|` and leaves a sum of
//! product Gaussians whose overlaps and moments are closed form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pointer::{gaussian, pair_integral, Basis, GaussianTerm, PointerWavefunction, MERGE_TOL};
use crate::quantum::{
    expectation, matrix_weak_value, weak_value, CMatrix, CVector, Complex, DensityMatrix,
    Observable, PureState, WeakValueResult, ORTHOGONALITY_TOL, ZERO,
};

/// Post-selection probabilities below this are flagged as numerically degenerate.
pub const DEGENERATE_PROBABILITY: f64 = 1e-12;

/// One observable measured with coupling `λ` between pre- and post-selection.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementSetup {
    pub observable: Observable,
    pub lambda: f64,
    pub psi: PureState,
    pub phi: PureState,
}

impl MeasurementSetup {
    pub fn new(observable: Observable, lambda: f64, psi: PureState, phi: PureState) -> Result<Self> {
        if !lambda.is_finite() {
            return Err(Error::NonFinite("coupling lambda"));
        }
        for s in [&psi, &phi] {
            if s.dim() != observable.dim() {
                return Err(Error::DimensionMismatch {
                    expected: observable.dim(),
                    got: s.dim(),
                });
            }
        }
        let ov = phi.inner(&psi).norm();
        if ov <= ORTHOGONALITY_TOL {
            return Err(Error::OrthogonalPostselection(ov));
        }
        Ok(Self {
            observable,
            lambda,
            psi,
            phi,
        })
    }

    pub fn with_lambda(&self, lambda: f64) -> Self {
        Self {
            lambda,
            ..self.clone()
        }
    }

    pub fn weak_value(&self) -> WeakValueResult {
        weak_value(&self.observable, &self.psi, &self.phi).expect("validated at construction")
    }

    /// `<φ|P_i|ψ>` per distinct eigenvalue.
    pub fn branch_weights(&self) -> Vec<Complex> {
        self.observable
            .eigensystem()
            .components(self.psi.amplitudes())
            .iter()
            .map(|v| self.phi.bra(v))
            .collect()
    }
}

/// One term of the system–meter branch decomposition.
#[derive(Clone, Debug, PartialEq)]
pub struct JointBranch {
    /// Unnormalized system vector; its norm is the branch amplitude.
    pub system: CVector,
    /// Eigenvalue index selected by each coupling so far (`None` once
    /// branches from different eigenvalues have merged).
    pub eigen_indices: Vec<Option<usize>>,
    pub centers: Vec<f64>,
    pub phase_slopes: Vec<f64>,
}

impl JointBranch {
    pub fn amplitude(&self) -> f64 {
        self.system.norm()
    }

    fn same_meters(&self, other: &JointBranch) -> bool {
        self.centers
            .iter()
            .zip(&other.centers)
            .all(|(a, b)| (a - b).abs() <= MERGE_TOL)
            && self
                .phase_slopes
                .iter()
                .zip(&other.phase_slopes)
                .all(|(a, b)| (a - b).abs() <= MERGE_TOL)
    }
}

/// Meter `m` of a branch as a unit-weight Gaussian term.
fn meter_term(centers: &[f64], slopes: &[f64], m: usize) -> GaussianTerm {
    GaussianTerm::new(Complex::new(1.0, 0.0), centers[m], slopes[m])
}

/// System ⊗ meters after a sequence of couplings, all meters starting in `√G`.
#[derive(Clone, Debug, PartialEq)]
pub struct JointState {
    pub branches: Vec<JointBranch>,
    pub meter_count: usize,
    dim: usize,
}

impl JointState {
    /// `|ψ> ⊗ |ξ>^{⊗ meters}`.
    pub fn product(psi: &PureState, meters: usize) -> Self {
        Self {
            branches: vec![JointBranch {
                system: psi.amplitudes().clone(),
                eigen_indices: Vec::new(),
                centers: vec![0.0; meters],
                phase_slopes: vec![0.0; meters],
            }],
            meter_count: meters,
            dim: psi.dim(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The unnormalized system vectors `|s_b>`.
    pub fn system_vectors(&self) -> Vec<&CVector> {
        self.branches.iter().map(|b| &b.system).collect()
    }

    /// `<Ψ|Ψ>`, including the overlaps between non-orthogonal meter states.
    pub fn norm_sqr(&self) -> f64 {
        let mut acc = ZERO;
        for a in &self.branches {
            for b in &self.branches {
                let mut meters = Complex::new(1.0, 0.0);
                for m in 0..self.meter_count {
                    meters *= pair_integral(
                        &meter_term(&a.centers, &a.phase_slopes, m),
                        &meter_term(&b.centers, &b.phase_slopes, m),
                        0,
                    );
                }
                acc += a.system.dotc(&b.system) * meters;
            }
        }
        acc.re
    }

    fn check(&self, a: &Observable, meter: usize) -> Result<()> {
        if a.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: a.dim(),
            });
        }
        if meter >= self.meter_count {
            return Err(Error::InvalidArgument(format!(
                "meter index {meter} out of range ({} meters)",
                self.meter_count
            )));
        }
        Ok(())
    }

    /// Splits every branch over the eigenprojectors of `a` and applies
    /// `shift(a_i)` to the chosen meter's `(center, phase_slope)`.
    fn couple(&self, a: &Observable, meter: usize, shift: impl Fn(f64) -> (f64, f64)) -> Result<Self> {
        self.check(a, meter)?;
        let es = a.eigensystem();
        let mut out: Vec<JointBranch> = Vec::new();
        for br in &self.branches {
            for (i, (ai, proj)) in es.eigenvalues.iter().zip(&es.projectors).enumerate() {
                let system = proj * &br.system;
                if system.iter().all(|z| *z == ZERO) {
                    continue;
                }
                let (dc, dk) = shift(*ai);
                let mut centers = br.centers.clone();
                let mut slopes = br.phase_slopes.clone();
                centers[meter] += dc;
                slopes[meter] += dk;
                let mut eigen_indices = br.eigen_indices.clone();
                eigen_indices.push(Some(i));
                let nb = JointBranch {
                    system,
                    eigen_indices,
                    centers,
                    phase_slopes: slopes,
                };
                match out.iter_mut().find(|o| o.same_meters(&nb)) {
                    Some(o) => {
                        o.system += &nb.system;
                        for (x, y) in o.eigen_indices.iter_mut().zip(&nb.eigen_indices) {
                            if x != y {
                                *x = None;
                            }
                        }
                    }
                    None => out.push(nb),
                }
            }
        }
        Ok(Self {
            branches: out,
            meter_count: self.meter_count,
            dim: self.dim,
        })
    }

    /// Applies `exp(-iλ A p_meter)`.
    pub fn apply_von_neumann(&self, a: &Observable, lambda: f64, meter: usize) -> Result<Self> {
        self.couple(a, meter, |ai| (lambda * ai, 0.0))
    }

    /// Applies `exp(-iλ A x_meter / 2)`.
    pub fn apply_position_kick(&self, a: &Observable, lambda: f64, meter: usize) -> Result<Self> {
        self.couple(a, meter, |ai| (0.0, -0.5 * lambda * ai))
    }

    /// Contracts the system with `<φ|`.
    pub fn postselect(&self, phi: &PureState) -> Result<Postselected> {
        if phi.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: phi.dim(),
            });
        }
        let terms: Vec<MeterTerm> = self
            .branches
            .iter()
            .map(|b| MeterTerm {
                weight: phi.bra(&b.system),
                centers: b.centers.clone(),
                phase_slopes: b.phase_slopes.clone(),
            })
            .collect();
        let amplitude = MeterAmplitude {
            terms,
            bases: vec![Basis::X; self.meter_count],
        };
        let probability = amplitude.norm_sqr();
        Ok(Postselected {
            amplitude,
            probability,
        })
    }
}

/// Free-function form of [`JointState::apply_von_neumann`].
pub fn apply_von_neumann(js: &JointState, a: &Observable, lambda: f64, meter: usize) -> Result<JointState> {
    js.apply_von_neumann(a, lambda, meter)
}

/// Free-function form of [`JointState::postselect`].
pub fn postselect(js: &JointState, phi: &PureState) -> Result<Postselected> {
    js.postselect(phi)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeterTerm {
    pub weight: Complex,
    pub centers: Vec<f64>,
    pub phase_slopes: Vec<f64>,
}

/// Unnormalized multi-meter amplitude `Σ_t w_t Π_m g(c_tm, k_tm)(x_m)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MeterAmplitude {
    pub terms: Vec<MeterTerm>,
    /// Basis each meter is expressed in.
    pub bases: Vec<Basis>,
}

impl MeterAmplitude {
    pub fn meter_count(&self) -> usize {
        self.bases.len()
    }

    /// Re-expresses each meter in the requested basis.
    pub fn in_bases(&self, bases: &[Basis]) -> Result<Self> {
        if bases.len() != self.meter_count() {
            return Err(Error::InvalidArgument(format!(
                "expected {} meter bases, got {}",
                self.meter_count(),
                bases.len()
            )));
        }
        let terms = self
            .terms
            .iter()
            .map(|t| {
                let mut t = t.clone();
                for m in 0..bases.len() {
                    let g = GaussianTerm::new(t.weight, t.centers[m], t.phase_slopes[m]);
                    let g = match (self.bases[m], bases[m]) {
                        (Basis::X, Basis::XPrime) => {
                            PointerWavefunction::new_unchecked(vec![g], Basis::X)
                                .to_xprime_basis()
                                .unwrap()
                                .terms()
                                .first()
                                .copied()
                        }
                        (Basis::XPrime, Basis::X) => {
                            PointerWavefunction::new_unchecked(vec![g], Basis::XPrime)
                                .from_xprime_basis()
                                .unwrap()
                                .terms()
                                .first()
                                .copied()
                        }
                        _ => Some(g),
                    };
                    match g {
                        Some(g) => {
                            t.weight = g.weight;
                            t.centers[m] = g.center;
                            t.phase_slopes[m] = g.phase_slope;
                        }
                        None => t.weight = ZERO,
                    }
                }
                t
            })
            .collect();
        Ok(Self {
            terms,
            bases: bases.to_vec(),
        })
    }

    pub fn amplitude(&self, xs: &[f64]) -> Complex {
        self.terms
            .iter()
            .map(|t| {
                (0..xs.len()).fold(t.weight, |acc, m| {
                    acc * meter_term(&t.centers, &t.phase_slopes, m).amplitude(xs[m])
                })
            })
            .sum()
    }

    /// `|amplitude|^2` at the meter readings `xs`.
    pub fn density(&self, xs: &[f64]) -> f64 {
        self.amplitude(xs).norm_sqr()
    }

    /// `∫ Π_m x_m^{powers[m]} |amplitude|^2`, closed form (powers ≤ 2).
    pub fn raw_moment(&self, powers: &[u8]) -> f64 {
        let mut acc = ZERO;
        for a in &self.terms {
            for b in &self.terms {
                let mut v = a.weight.conj() * b.weight;
                for (m, &p) in powers.iter().enumerate() {
                    v *= pair_integral(
                        &meter_term(&a.centers, &a.phase_slopes, m),
                        &meter_term(&b.centers, &b.phase_slopes, m),
                        p,
                    );
                }
                acc += v;
            }
        }
        acc.re
    }

    pub fn norm_sqr(&self) -> f64 {
        self.raw_moment(&vec![0; self.meter_count()])
    }

    /// Single-meter amplitude as a [`PointerWavefunction`].
    pub fn to_pointer(&self) -> Result<PointerWavefunction> {
        if self.meter_count() != 1 {
            return Err(Error::InvalidArgument(format!(
                "{} meters cannot be viewed as one pointer",
                self.meter_count()
            )));
        }
        Ok(PointerWavefunction::new_unchecked(
            self.terms
                .iter()
                .map(|t| GaussianTerm::new(t.weight, t.centers[0], t.phase_slopes[0]))
                .collect(),
            self.bases[0],
        ))
    }
}

/// Meter amplitude left after a successful post-selection.
#[derive(Clone, Debug, PartialEq)]
pub struct Postselected {
    pub amplitude: MeterAmplitude,
    /// `P_λ(φ|ψ)`, the squared norm of `amplitude`.
    pub probability: f64,
}

impl Postselected {
    /// True when the probability is too small for conditional quantities to be trusted.
    pub fn is_degenerate(&self) -> bool {
        self.probability < DEGENERATE_PROBABILITY
    }
}

/// Post-selected single-meter state (unnormalized) and `P_λ(φ|ψ)`.
pub fn postselected_pointer(setup: &MeasurementSetup) -> (PointerWavefunction, f64) {
    let ps = JointState::product(&setup.psi, 1)
        .apply_von_neumann(&setup.observable, setup.lambda, 0)
        .and_then(|js| js.postselect(&setup.phi))
        .expect("setup dimensions validated");
    let w = ps.amplitude.to_pointer().expect("one meter");
    (w, ps.probability)
}

/// `P_λ(φ|ψ)`.
pub fn postselection_probability(setup: &MeasurementSetup) -> f64 {
    postselected_pointer(setup).1
}

/// `P_λ(x|φ,ψ)` in the `x` basis, or `P_λ(x'|φ,ψ)` in the `x'` basis.
pub fn conditional_meter_density(setup: &MeasurementSetup, basis: Basis, x: f64) -> f64 {
    let (w, p) = postselected_pointer(setup);
    w.in_basis(basis).density(x) / p
}

/// Mean of the conditional meter distribution in `basis`.
pub fn conditional_mean(setup: &MeasurementSetup, basis: Basis) -> f64 {
    postselected_pointer(setup).0.in_basis(basis).mean()
}

/// `P_λ(x|ψ) = Σ_i ‖P_i ψ‖^2 G(x - λ a_i)`, no post-selection.
pub fn unconditional_meter_density(a: &Observable, lambda: f64, psi: &PureState, x: f64) -> f64 {
    let es = a.eigensystem();
    es.components(psi.amplitudes())
        .iter()
        .zip(&es.eigenvalues)
        .map(|(v, ai)| v.norm_squared() * gaussian(x - lambda * ai))
        .sum()
}

/// `<φ| exp(-iλ A x'/2) |ψ>` evaluated in the eigenbasis of `A`.
pub fn kick_amplitude(setup: &MeasurementSetup, x_prime: f64) -> Complex {
    let es = setup.observable.eigensystem();
    setup
        .branch_weights()
        .iter()
        .zip(&es.eigenvalues)
        .map(|(w, ai)| w * Complex::from_polar(1.0, -0.5 * setup.lambda * ai * x_prime))
        .sum()
}

/// `P'_λ(φ|ψ) = ∫ G(x') |<φ|exp(-iλ A x'/2)|ψ>|^2 dx'`, via the Gaussian
/// characteristic function `E[exp(i t x')] = exp(-t^2/2)`.
pub fn kick_postselection_probability(setup: &MeasurementSetup) -> f64 {
    let es = setup.observable.eigensystem();
    let w = setup.branch_weights();
    let mut acc = ZERO;
    for (i, ai) in es.eigenvalues.iter().enumerate() {
        for (j, aj) in es.eigenvalues.iter().enumerate() {
            let t = 0.5 * setup.lambda * (ai - aj);
            acc += w[i].conj() * w[j] * (-0.5 * t * t).exp();
        }
    }
    acc.re
}

/// Conditional density of the pre-drawn kick variable `x'` given post-selection.
pub fn kick_protocol_conditional_density(setup: &MeasurementSetup, x_prime: f64) -> f64 {
    gaussian(x_prime) * kick_amplitude(setup, x_prime).norm_sqr() / kick_postselection_probability(setup)
}

/// Post-selected meter for the swapped coupling `exp(-iλ A x/2)` (read out in `x`).
pub fn kick_in_x_postselected(setup: &MeasurementSetup) -> (PointerWavefunction, f64) {
    let ps = JointState::product(&setup.psi, 1)
        .apply_position_kick(&setup.observable, setup.lambda, 0)
        .and_then(|js| js.postselect(&setup.phi))
        .expect("setup dimensions validated");
    (ps.amplitude.to_pointer().expect("one meter"), ps.probability)
}

/// Conditional `x` density under the coupling `exp(-iλ A x/2)`.
pub fn kick_in_x_protocol(setup: &MeasurementSetup, x: f64) -> f64 {
    let (w, p) = kick_in_x_postselected(setup);
    w.density(x) / p
}

/// Post-selects first and returns the normalized meter state in the basis
/// chosen afterwards.
pub fn delayed_choice(setup: &MeasurementSetup, choice: Basis) -> PointerWavefunction {
    postselected_pointer(setup).0.normalized().in_basis(choice)
}

/// Order in which the two couplings of a [`SequentialSetup`] act.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementOrder {
    /// `exp(-iλ_b B p_2) exp(-iλ_a A p_1)`: `A` acts first.
    #[default]
    AThenB,
    BThenA,
}

/// Two weak measurements between pre- and post-selection.
///
/// Meter 1 always couples to `a` and meter 2 to `b`; `order` decides which
/// unitary acts first.
#[derive(Clone, Debug, PartialEq)]
pub struct SequentialSetup {
    pub a: Observable,
    pub lambda_a: f64,
    pub b: Observable,
    pub lambda_b: f64,
    pub psi: PureState,
    pub phi: PureState,
    pub bases: [Basis; 2],
    pub order: MeasurementOrder,
}

impl SequentialSetup {
    pub fn new(
        a: Observable,
        lambda_a: f64,
        b: Observable,
        lambda_b: f64,
        psi: PureState,
        phi: PureState,
    ) -> Result<Self> {
        // reuse the single-measurement validation for both observables
        MeasurementSetup::new(a.clone(), lambda_a, psi.clone(), phi.clone())?;
        MeasurementSetup::new(b.clone(), lambda_b, psi.clone(), phi.clone())?;
        Ok(Self {
            a,
            lambda_a,
            b,
            lambda_b,
            psi,
            phi,
            bases: [Basis::X, Basis::X],
            order: MeasurementOrder::AThenB,
        })
    }

    pub fn with_order(&self, order: MeasurementOrder) -> Self {
        Self {
            order,
            ..self.clone()
        }
    }

    pub fn with_bases(&self, bases: [Basis; 2]) -> Self {
        Self {
            bases,
            ..self.clone()
        }
    }

    pub fn with_lambdas(&self, lambda_a: f64, lambda_b: f64) -> Self {
        Self {
            lambda_a,
            lambda_b,
            ..self.clone()
        }
    }

    pub fn reversed(&self) -> Self {
        self.with_order(match self.order {
            MeasurementOrder::AThenB => MeasurementOrder::BThenA,
            MeasurementOrder::BThenA => MeasurementOrder::AThenB,
        })
    }

    /// Product of the two observables in operator order: `B A` when `A` acts first.
    pub fn ordered_product(&self) -> CMatrix {
        match self.order {
            MeasurementOrder::AThenB => self.b.matrix() * self.a.matrix(),
            MeasurementOrder::BThenA => self.a.matrix() * self.b.matrix(),
        }
    }
}

/// Post-selected two-meter amplitude in the setup's bases.
pub fn sequential_postselected(sq: &SequentialSetup) -> Postselected {
    let js = JointState::product(&sq.psi, 2);
    let js = match sq.order {
        MeasurementOrder::AThenB => js
            .apply_von_neumann(&sq.a, sq.lambda_a, 0)
            .and_then(|j| j.apply_von_neumann(&sq.b, sq.lambda_b, 1)),
        MeasurementOrder::BThenA => js
            .apply_von_neumann(&sq.b, sq.lambda_b, 1)
            .and_then(|j| j.apply_von_neumann(&sq.a, sq.lambda_a, 0)),
    }
    .expect("setup dimensions validated");
    let mut ps = js.postselect(&sq.phi).expect("setup dimensions validated");
    ps.amplitude = ps.amplitude.in_bases(&sq.bases).expect("two meters");
    ps
}

/// `P(x_1, x_2 | φ, ψ)`, meter 1 reading `x1` and meter 2 reading `x2`.
pub fn sequential_joint_density(sq: &SequentialSetup, x1: f64, x2: f64) -> f64 {
    let ps = sequential_postselected(sq);
    ps.amplitude.density(&[x1, x2]) / ps.probability
}

/// Conditional first and second moments of the two meter readings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SequentialMoments {
    pub probability: f64,
    pub mean_1: f64,
    pub mean_2: f64,
    pub cross: f64,
    pub covariance: f64,
}

pub fn sequential_moments(sq: &SequentialSetup) -> SequentialMoments {
    let ps = sequential_postselected(sq);
    let p = ps.probability;
    let amp = &ps.amplitude;
    let mean_1 = amp.raw_moment(&[1, 0]) / p;
    let mean_2 = amp.raw_moment(&[0, 1]) / p;
    let cross = amp.raw_moment(&[1, 1]) / p;
    SequentialMoments {
        probability: p,
        mean_1,
        mean_2,
        cross,
        covariance: cross - mean_1 * mean_2,
    }
}

/// Small-coupling coefficient `c` in `cov(x_1, x_2) ≈ c λ_a λ_b / 2`:
/// `Re[(BA)_w - A_w B_w]` in the `x` basis (with `BA` in operator order) and
/// `Re[A_w B_w - (BA)_w]` when both meters are read in `x'`.
pub fn sequential_cross_coefficient(sq: &SequentialSetup) -> Result<f64> {
    let aw = weak_value(&sq.a, &sq.psi, &sq.phi)?.value;
    let bw = weak_value(&sq.b, &sq.psi, &sq.phi)?.value;
    let prod = matrix_weak_value(&sq.ordered_product(), &sq.psi, &sq.phi)?;
    match sq.bases {
        [Basis::X, Basis::X] => Ok((prod - aw * bw).re),
        [Basis::XPrime, Basis::XPrime] => Ok((aw * bw - prod).re),
        _ => Err(Error::InvalidArgument(
            "cross coefficient defined for matching meter bases only".into(),
        )),
    }
}

/// Change of the cross coefficient when the order is reversed:
/// `Re[(BA)_w - (AB)_w]` for `A` first, the negative for `B` first.
pub fn sequential_order_gap(sq: &SequentialSetup) -> Result<f64> {
    let here = matrix_weak_value(&sq.ordered_product(), &sq.psi, &sq.phi)?;
    let there = matrix_weak_value(&sq.reversed().ordered_product(), &sq.psi, &sq.phi)?;
    Ok((here - there).re)
}

/// System state conditioned on the meter reading `x`:
/// `Σ_i √G(x - λ a_i) P_i ψ / √P_λ(x|ψ)`.
pub fn conditional_system_state(a: &Observable, lambda: f64, psi: &PureState, x: f64) -> Result<PureState> {
    if psi.dim() != a.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: psi.dim(),
        });
    }
    if !x.is_finite() {
        return Err(Error::NonFinite("meter reading"));
    }
    let es = a.eigensystem();
    let mut v = CVector::zeros(psi.dim());
    for (comp, ai) in es.components(psi.amplitudes()).iter().zip(&es.eigenvalues) {
        v += comp * Complex::new(gaussian(x - lambda * ai).sqrt(), 0.0);
    }
    if v.norm_squared() == 0.0 {
        return Err(Error::ZeroProbabilityOutcome(x));
    }
    PureState::from_vector_normalized(v)
}

/// Non-selective update `ρ = ∫ P_λ(x|ψ) |χ_x><χ_x| dx`, closed form
/// `Σ_ij exp(-λ^2 (a_i - a_j)^2 / 8) P_i |ψ><ψ| P_j`.
pub fn nonselective_state(a: &Observable, lambda: f64, psi: &PureState) -> Result<DensityMatrix> {
    if psi.dim() != a.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: psi.dim(),
        });
    }
    let es = a.eigensystem();
    let comps = es.components(psi.amplitudes());
    let d = psi.dim();
    let mut rho = CMatrix::zeros(d, d);
    for (i, ai) in es.eigenvalues.iter().enumerate() {
        for (j, aj) in es.eigenvalues.iter().enumerate() {
            let damp = (-lambda * lambda * (ai - aj).powi(2) / 8.0).exp();
            rho += (&comps[i] * comps[j].adjoint()) * Complex::new(damp, 0.0);
        }
    }
    DensityMatrix::new(rho)
}

/// How much the intermediate measurement disturbs the pre-selected state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceReport {
    /// `P_λ(φ|ψ)`
    pub postselect_prob_exact: f64,
    /// `|<φ|ψ>|^2`
    pub postselect_prob_unperturbed: f64,
    /// `|<φ|ψ>|^2 (|A_w|^2 - Re[(A^2)_w]) / 4`, the `λ^2` coefficient.
    pub second_order_coeff: f64,
    /// `tr ρ^2` of the non-selective state.
    pub nonselective_purity: f64,
    /// `<ψ|ρ|ψ>`
    pub fidelity_to_initial: f64,
    /// `(P_λ(φ|ψ) - |<φ|ψ>|^2) - <φ|ρ - |ψ><ψ||φ>`
    pub identity_residual: f64,
}

pub fn disturbance_report(setup: &MeasurementSetup) -> DisturbanceReport {
    let exact = postselection_probability(setup);
    let wv = setup.weak_value();
    let unperturbed = wv.postselect_probability();
    let a2 = setup.observable.matrix() * setup.observable.matrix();
    let a2w = matrix_weak_value(&a2, &setup.psi, &setup.phi).expect("validated setup");
    let second_order_coeff = unperturbed * (wv.value.norm_sqr() - a2w.re) / 4.0;
    let rho = nonselective_state(&setup.observable, setup.lambda, &setup.psi)
        .expect("validated setup");
    let disturbed = rho.expectation_in(&setup.phi) - unperturbed;
    let identity_residual = (exact - unperturbed) - disturbed;
    debug_assert!(identity_residual.abs() < 1e-10, "residual {identity_residual}");
    DisturbanceReport {
        postselect_prob_exact: exact,
        postselect_prob_unperturbed: unperturbed,
        second_order_coeff,
        nonselective_purity: rho.purity(),
        fidelity_to_initial: rho.expectation_in(&setup.psi),
        identity_residual,
    }
}

/// `<A>_ψ` re-exported for callers comparing unconditional means.
pub fn unconditional_mean(a: &Observable, lambda: f64, psi: &PureState) -> f64 {
    lambda * expectation(a, psi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fit::extrapolate_even;
    use crate::quadrature::GaussLegendre;
    use crate::quantum::{pauli_x, pauli_y, WeakValuePart};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    fn c(re: f64, im: f64) -> Complex {
        Complex::new(re, im)
    }

    fn up() -> PureState {
        PureState::basis(2, 0).unwrap()
    }

    fn quad() -> Vec<(f64, f64)> {
        GaussLegendre::new(200).composite_points(-30.0, 30.0, 6)
    }

    fn random_setup(rng: &mut rand_chacha::ChaCha8Rng, d: usize, lambda: f64) -> MeasurementSetup {
        loop {
            let a = Observable::random(rng, d);
            let psi = PureState::random(rng, d);
            let phi = PureState::random(rng, d);
            if phi.inner(&psi).norm() > 0.2 {
                return MeasurementSetup::new(a, lambda, psi, phi).unwrap();
            }
        }
    }

    #[test]
    fn zero_coupling_leaves_joint_state_unchanged() {
        let psi = PureState::from_real(&[0.3, 0.9]).unwrap();
        let js = JointState::product(&psi, 1);
        let after = js.apply_von_neumann(&Observable::sigma_x(), 0.0, 0).unwrap();
        assert_eq!(after.branches.len(), 1);
        assert!((&after.branches[0].system - psi.amplitudes()).norm() < 1e-14);
        assert_eq!(after.branches[0].centers, vec![0.0]);
    }

    #[test]
    fn eigenstate_coupling_does_not_entangle() {
        let js = JointState::product(&up(), 1)
            .apply_von_neumann(&Observable::sigma_z(), 0.7, 0)
            .unwrap();
        assert_eq!(js.branches.len(), 1);
        assert_abs_diff_eq!(js.branches[0].centers[0], 0.7);
        assert!((&js.branches[0].system - up().amplitudes()).norm() < 1e-14);
    }

    #[test]
    fn sigma_x_coupling_matches_discretized_tensor_product() {
        let lambda = 0.3;
        let js = JointState::product(&up(), 1)
            .apply_von_neumann(&Observable::sigma_x(), lambda, 0)
            .unwrap();
        assert_eq!(js.branches.len(), 2);
        let mut centers: Vec<f64> = js.branches.iter().map(|b| b.centers[0]).collect();
        centers.sort_by(f64::total_cmp);
        assert_abs_diff_eq!(centers[0], -0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(centers[1], 0.3, epsilon = 1e-15);
        for b in &js.branches {
            assert_abs_diff_eq!(b.amplitude(), FRAC_1_SQRT_2, epsilon = 1e-14);
        }
        assert_abs_diff_eq!(js.norm_sqr(), 1.0, epsilon = 1e-12);
        // Oracle: ψ(x) = Σ_i P_i ψ ξ(x - λ a_i) on a grid, componentwise.
        let es = Observable::sigma_x().eigensystem().clone();
        let xi = PointerWavefunction::initial_meter();
        for k in 0..41 {
            let x = -4.0 + 0.2 * k as f64;
            let mut expected = CVector::zeros(2);
            for (ai, p) in es.eigenvalues.iter().zip(&es.projectors) {
                expected += (p * up().amplitudes()) * xi.amplitude(x - lambda * ai);
            }
            let mut got = CVector::zeros(2);
            for b in &js.branches {
                got += &b.system * meter_term(&b.centers, &b.phase_slopes, 0).amplitude(x);
            }
            assert!((expected - got).norm() < 1e-14);
        }
    }

    #[test]
    fn norm_is_conserved_by_couplings() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for d in [2, 3, 4] {
            let psi = PureState::random(&mut rng, d);
            let a = Observable::random(&mut rng, d);
            let b = Observable::random(&mut rng, d);
            let js = JointState::product(&psi, 2)
                .apply_von_neumann(&a, 0.8, 0)
                .unwrap()
                .apply_von_neumann(&b, 1.3, 1)
                .unwrap()
                .apply_position_kick(&a, 0.4, 1)
                .unwrap();
            assert_abs_diff_eq!(js.norm_sqr(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn dimension_and_meter_errors() {
        let js = JointState::product(&up(), 1);
        let a3 = Observable::from_real_diagonal(&[1.0, 2.0, 3.0]).unwrap();
        assert!(matches!(js.apply_von_neumann(&a3, 0.1, 0), Err(Error::DimensionMismatch { .. })));
        assert!(js.apply_von_neumann(&Observable::sigma_x(), 0.1, 1).is_err());
    }

    #[test]
    fn postselection_probability_examples() {
        let s0 = MeasurementSetup::new(Observable::sigma_x(), 0.0, PureState::from_real(&[0.6, 0.8]).unwrap(), up()).unwrap();
        assert_abs_diff_eq!(postselection_probability(&s0), 0.36, epsilon = 1e-14);

        let s = MeasurementSetup::new(Observable::sigma_x(), 0.1, up(), up()).unwrap();
        let p = postselection_probability(&s);
        // Σ_ij w_i* w_j exp(-λ^2 (a_i - a_j)^2 / 8) with w = (1/2, 1/2)
        let closed = 0.5 + 0.5 * (-0.1f64 * 0.1 / 2.0).exp();
        assert_abs_diff_eq!(p, closed, epsilon = 1e-15);
        assert_abs_diff_eq!(p, 0.997_506_24, epsilon = 1e-8);
        // quadrature of ∫ |<φ|<x| e^{-iλAp} |ψ>|ξ>|^2 dx
        let (w, _) = postselected_pointer(&s);
        let q: f64 = quad().iter().map(|&(x, wt)| w.density(x) * wt).sum();
        assert_abs_diff_eq!(q, p, epsilon = 1e-9);
        // second-order expansion: 1 + λ^2/4 (|A_w|^2 - Re(A^2)_w) = 1 + 0.0025 (1 - ... )
        let wv = s.weak_value().value;
        let second = 1.0 + 0.01 / 4.0 * (wv.norm_sqr() - 1.0);
        assert!((p - second).abs() < 1e-5);
    }

    #[test]
    fn small_coupling_limit_is_initial_gaussian() {
        let pair = crate::quantum::anomalous_pair(&Observable::sigma_x(), 0.5, WeakValuePart::Re).unwrap();
        let s = MeasurementSetup::new(Observable::sigma_x(), 1e-7, pair.psi, pair.phi).unwrap();
        for x in [-2.0, 0.0, 1.5] {
            assert_abs_diff_eq!(conditional_meter_density(&s, Basis::X, x), gaussian(x), epsilon = 1e-6);
        }
    }

    #[test]
    fn conditional_means_extrapolate_to_weak_value() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let base = random_setup(&mut rng, 3, 0.0);
        let wv = base.weak_value().value;
        let grid = [0.2, 0.1, 0.05, 0.025];
        for (basis, target) in [(Basis::X, wv.re), (Basis::XPrime, wv.im)] {
            let ys: Vec<f64> = grid
                .iter()
                .map(|&l| conditional_mean(&base.with_lambda(l), basis) / l)
                .collect();
            let fit = extrapolate_even(&grid, &ys);
            assert!((fit.intercept - target).abs() < 1e-3 * target.abs().max(0.1), "{fit:?} {target}");
        }
    }

    #[test]
    fn conditional_density_normalized() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let s = random_setup(&mut rng, 2, 0.9);
        for basis in [Basis::X, Basis::XPrime] {
            let m: f64 = quad().iter().map(|&(x, w)| conditional_meter_density(&s, basis, x) * w).sum();
            assert_abs_diff_eq!(m, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn unconditional_density_examples() {
        let a = Observable::sigma_x();
        let plus = PureState::from_real(&[1.0, 1.0]).unwrap();
        assert_abs_diff_eq!(unconditional_meter_density(&a, 0.4, &plus, 0.4), gaussian(0.0), epsilon = 1e-15);
        assert_abs_diff_eq!(unconditional_meter_density(&a, 0.4, &plus, 1.0), gaussian(0.6), epsilon = 1e-15);
        // resolved peaks with weights 1/2
        assert_abs_diff_eq!(unconditional_meter_density(&a, 10.0, &up(), 10.0), 0.5 * gaussian(0.0), epsilon = 1e-15);
        assert_abs_diff_eq!(unconditional_meter_density(&a, 10.0, &up(), -10.0), 0.5 * gaussian(0.0), epsilon = 1e-15);
        // mixture mean = λ<A>
        let psi = PureState::from_real(&[0.8, 0.6]).unwrap();
        let lam = 0.05;
        let m: f64 = quad().iter().map(|&(x, w)| x * unconditional_meter_density(&a, lam, &psi, x) * w).sum();
        assert_abs_diff_eq!(m, lam * expectation(&a, &psi), epsilon = 1e-12);
    }

    #[test]
    fn kick_protocol_equals_xprime_readout() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        for d in [2, 3] {
            let s0 = random_setup(&mut rng, d, 0.0);
            for lambda in [0.1, 0.5, 2.0] {
                let s = s0.with_lambda(lambda);
                let p_vn = postselection_probability(&s);
                assert_abs_diff_eq!(kick_postselection_probability(&s), p_vn, epsilon = 1e-12);
                let (_, p_x) = kick_in_x_postselected(&s);
                assert_abs_diff_eq!(p_x, p_vn, epsilon = 1e-12);
                for k in 0..60 {
                    let x = -6.0 + 0.2 * k as f64;
                    let vn = conditional_meter_density(&s, Basis::XPrime, x);
                    assert_abs_diff_eq!(kick_protocol_conditional_density(&s, x), vn, epsilon = 1e-12);
                    assert_abs_diff_eq!(kick_in_x_protocol(&s, x), vn, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn kick_mean_extrapolates_to_imaginary_weak_value() {
        let phi = PureState::new(vec![c(FRAC_1_SQRT_2, 0.0), c(0.0, FRAC_1_SQRT_2)]).unwrap();
        let s = MeasurementSetup::new(Observable::sigma_x(), 0.0, up(), phi).unwrap();
        assert_abs_diff_eq!(s.weak_value().value.im, -1.0, epsilon = 1e-14);
        let grid = [0.2, 0.1, 0.05, 0.025];
        let q = quad();
        let ys: Vec<f64> = grid
            .iter()
            .map(|&l| {
                let sl = s.with_lambda(l);
                q.iter().map(|&(x, w)| x * kick_protocol_conditional_density(&sl, x) * w).sum::<f64>() / l
            })
            .collect();
        assert_abs_diff_eq!(extrapolate_even(&grid, &ys).intercept, -1.0, epsilon = 1e-3);
        let ys: Vec<f64> = grid
            .iter()
            .map(|&l| kick_in_x_postselected(&s.with_lambda(l)).0.mean() / l)
            .collect();
        assert_abs_diff_eq!(extrapolate_even(&grid, &ys).intercept, -1.0, epsilon = 1e-3);
        assert_abs_diff_eq!(kick_protocol_conditional_density(&s, 0.7), gaussian(0.7), epsilon = 1e-15);
    }

    #[test]
    fn delayed_choice_reproduces_both_bases() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(41);
        let s = random_setup(&mut rng, 3, 0.6);
        for basis in [Basis::X, Basis::XPrime] {
            let w = delayed_choice(&s, basis);
            assert_abs_diff_eq!(w.norm_sqr(), 1.0, epsilon = 1e-12);
            for k in 0..50 {
                let x = -5.0 + 0.2 * k as f64;
                assert_abs_diff_eq!(w.density(x), conditional_meter_density(&s, basis, x), epsilon = 1e-12);
            }
        }
        let w0 = delayed_choice(&s.with_lambda(0.0), Basis::X);
        assert_eq!(w0.terms().len(), 1);
        assert_abs_diff_eq!(w0.terms()[0].weight.norm(), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(w0.terms()[0].center, 0.0);
    }

    fn sxy_setup(lambda: f64) -> SequentialSetup {
        let psi = PureState::from_real(&[1.0, 1.0]).unwrap();
        let phi = PureState::normalized(vec![c(1.0, 0.0), Complex::from_polar(1.0, PI / 4.0)]).unwrap();
        SequentialSetup::new(Observable::sigma_x(), lambda, Observable::sigma_y(), lambda, psi, phi).unwrap()
    }

    #[test]
    fn commuting_order_swap_is_identity() {
        let psi = PureState::from_real(&[0.6, 0.8]).unwrap();
        let phi = PureState::from_real(&[0.8, 0.2]).unwrap();
        let sq = SequentialSetup::new(Observable::sigma_z(), 0.4, Observable::sigma_z(), 0.7, psi, phi).unwrap();
        for i in 0..10 {
            for j in 0..10 {
                let (x1, x2) = (-2.0 + 0.4 * i as f64, -2.0 + 0.4 * j as f64);
                assert_abs_diff_eq!(
                    sequential_joint_density(&sq, x1, x2),
                    sequential_joint_density(&sq.reversed(), x1, x2),
                    epsilon = 1e-12
                );
            }
        }
        assert_abs_diff_eq!(sequential_order_gap(&sq).unwrap(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn sequential_reduces_to_single_when_second_coupling_vanishes() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(51);
        let s = random_setup(&mut rng, 3, 0.5);
        let b = Observable::random(&mut rng, 3);
        let sq = SequentialSetup::new(s.observable.clone(), 0.5, b, 0.0, s.psi.clone(), s.phi.clone()).unwrap();
        for (x1, x2) in [(-1.0, 0.3), (0.5, -2.0), (1.7, 1.1)] {
            let expect = conditional_meter_density(&s, Basis::X, x1) * gaussian(x2);
            assert_abs_diff_eq!(sequential_joint_density(&sq, x1, x2), expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn sequential_moments_match_2d_quadrature() {
        let sq = sxy_setup(0.3);
        let m = sequential_moments(&sq);
        let pts = GaussLegendre::new(120).composite_points(-12.0, 12.0, 4);
        let (mut z, mut e1, mut e2, mut e12) = (0.0, 0.0, 0.0, 0.0);
        for &(x1, w1) in &pts {
            for &(x2, w2) in &pts {
                let p = sequential_joint_density(&sq, x1, x2) * w1 * w2;
                z += p;
                e1 += x1 * p;
                e2 += x2 * p;
                e12 += x1 * x2 * p;
            }
        }
        assert_abs_diff_eq!(z, 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(m.mean_1, e1, epsilon = 1e-10);
        assert_abs_diff_eq!(m.mean_2, e2, epsilon = 1e-10);
        assert_abs_diff_eq!(m.covariance, e12 - e1 * e2, epsilon = 1e-10);
    }

    #[test]
    fn sequential_cross_covariance_and_order_gap() {
        let grid = [0.2, 0.1, 0.05, 0.025];
        for order in [MeasurementOrder::AThenB, MeasurementOrder::BThenA] {
            for bases in [[Basis::X, Basis::X], [Basis::XPrime, Basis::XPrime]] {
                let base = sxy_setup(0.0).with_order(order).with_bases(bases);
                let target = sequential_cross_coefficient(&base).unwrap();
                let ys: Vec<f64> = grid
                    .iter()
                    .map(|&l| sequential_moments(&base.with_lambdas(l, l)).covariance / (l * l / 2.0))
                    .collect();
                let fit = extrapolate_even(&grid, &ys);
                assert!((fit.intercept - target).abs() < (0.02 * target.abs()).max(1e-10), "{order:?} {bases:?} {fit:?} {target}");
            }
        }
        let gap = sequential_order_gap(&sxy_setup(0.1)).unwrap();
        assert_abs_diff_eq!(gap.abs(), 2.0 * (PI / 8.0).tan(), epsilon = 1e-12);
        assert_abs_diff_eq!(sequential_order_gap(&sxy_setup(0.1).reversed()).unwrap(), -gap, epsilon = 1e-14);
        let fwd = sequential_cross_coefficient(&sxy_setup(0.1)).unwrap();
        let rev = sequential_cross_coefficient(&sxy_setup(0.1).reversed()).unwrap();
        assert_abs_diff_eq!(fwd - rev, gap, epsilon = 1e-12);
        // A = B commutes with itself
        let psi = PureState::from_real(&[1.0, 1.0]).unwrap();
        let sq = SequentialSetup::new(Observable::sigma_x(), 0.1, Observable::sigma_x(), 0.1, psi.clone(), up()).unwrap();
        assert_abs_diff_eq!(sequential_order_gap(&sq).unwrap(), 0.0, epsilon = 1e-14);
        let _ = (pauli_x(), pauli_y());
    }

    #[test]
    fn conditional_state_examples() {
        let chi = conditional_system_state(&Observable::sigma_z(), 0.8, &up(), 1.3).unwrap();
        assert!((chi.inner(&up()).norm() - 1.0).abs() < 1e-14);
        let psi = PureState::from_real(&[0.6, 0.8]).unwrap();
        let chi0 = conditional_system_state(&Observable::sigma_x(), 0.0, &psi, 0.4).unwrap();
        assert!((chi0.inner(&psi).norm() - 1.0).abs() < 1e-14);
        // first order: χ ≈ (1 + λ (A - <A>) x / 2) ψ
        let a = Observable::sigma_x();
        let x = 0.9;
        let mean = expectation(&a, &psi);
        let mut ratios = Vec::new();
        for lam in [0.1, 0.05, 0.025] {
            let chi = conditional_system_state(&a, lam, &psi, x).unwrap();
            let approx = psi.amplitudes() + (a.apply(&psi) - psi.amplitudes() * c(mean, 0.0)) * c(lam * x / 2.0, 0.0);
            ratios.push((chi.amplitudes() - approx).norm() / (lam * lam));
        }
        assert!(ratios.iter().all(|r| *r < 1.0), "{ratios:?}");
        assert!((ratios[2] / ratios[0] - 1.0).abs() < 0.1, "{ratios:?}");
        assert!(matches!(
            conditional_system_state(&a, 0.1, &psi, 1e4),
            Err(Error::ZeroProbabilityOutcome(_))
        ));
    }

    #[test]
    fn nonselective_state_examples() {
        let rho = nonselective_state(&Observable::sigma_z(), 0.5, &up()).unwrap();
        assert_abs_diff_eq!(rho.purity(), 1.0, epsilon = 1e-14);
        let rho = nonselective_state(&Observable::sigma_x(), 0.2, &up()).unwrap();
        // in the σx eigenbasis |±>: off-diagonal = 1/2 * exp(-0.04 * 4 / 8)
        let plus = PureState::from_real(&[1.0, 1.0]).unwrap();
        let minus = PureState::from_real(&[1.0, -1.0]).unwrap();
        let off = plus.bra(&(rho.matrix() * minus.amplitudes()));
        // quadrature oracle of ∫ G(x') exp(-i λ Δa x'/2) dx' with Δa = 2
        let damping: f64 = quad().iter().map(|&(x, w)| gaussian(x) * (0.2 * x).cos() * w).sum();
        assert_abs_diff_eq!(off.norm(), 0.5 * damping, epsilon = 1e-12);
        assert_abs_diff_eq!(damping, 0.980_198_673_306_755, epsilon = 1e-12);
        assert!(rho.purity() < 1.0);
    }

    #[test]
    fn nonselective_state_is_average_of_conditional_states() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(61);
        let a = Observable::random(&mut rng, 3);
        let psi = PureState::random(&mut rng, 3);
        let lam = 0.7;
        let r = 10.0 + lam * a.eigensystem().spectral_radius();
        let pts = GaussLegendre::new(400).points(-r, r);
        let mut acc = CMatrix::zeros(3, 3);
        for (x, w) in pts {
            let p = unconditional_meter_density(&a, lam, &psi, x);
            let chi = conditional_system_state(&a, lam, &psi, x).unwrap();
            acc += chi.projector() * c(p * w, 0.0);
        }
        let rho = nonselective_state(&a, lam, &psi).unwrap();
        assert!((acc - rho.matrix()).camax() < 1e-8);
    }

    #[test]
    fn disturbance_report_identities() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(71);
        let s = random_setup(&mut rng, 2, 0.0);
        let r0 = disturbance_report(&s);
        assert_abs_diff_eq!(r0.postselect_prob_exact - r0.postselect_prob_unperturbed, 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(r0.nonselective_purity, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(r0.fidelity_to_initial, 1.0, epsilon = 1e-14);
        for _ in 0..100 {
            let d = 2 + (rng.random::<u32>() % 3) as usize;
            let lam = rng.random::<f64>() * 2.0;
            let r = disturbance_report(&random_setup(&mut rng, d, lam));
            assert!(r.identity_residual.abs() < 1e-12, "{r:?}");
            assert!(r.nonselective_purity <= 1.0 + 1e-12 && r.nonselective_purity > 0.0);
        }
    }

    #[test]
    fn fidelity_equals_self_postselection() {
        let a = Observable::sigma_x();
        let psi = PureState::from_real(&[0.8, 0.6]).unwrap();
        let var = 1.0 - expectation(&a, &psi).powi(2);
        for lam in [0.1, 0.05] {
            let s = MeasurementSetup::new(a.clone(), lam, psi.clone(), psi.clone()).unwrap();
            let r = disturbance_report(&s);
            assert_abs_diff_eq!(r.fidelity_to_initial, r.postselect_prob_exact, epsilon = 1e-14);
            let approx = 1.0 - lam * lam * var / 4.0;
            assert!((r.fidelity_to_initial - approx).abs() < lam.powi(4));
        }
    }

    use rand::Rng;
}
