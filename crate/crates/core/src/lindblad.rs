//! Kraus-operator view of the von Neumann measurement and the split of the
//! joint outcome density into an anticommutator part and a Lindblad-form
//! error term.
//!
//! `M_x = <x| exp(-iλ A p) |ξ> = Σ_i √G(x - λ a_i) P_i`, taken on its
//! Hermitian non-negative branch. With `O = |φ><φ|`:
//!
//! * joint density `P(x, φ|ψ) = |<φ|M_x|ψ>|^2`
//! * `P^w(x) = ½ <{M_x† M_x, O}>_ψ`
//! * `ℰ(x) = <L[M_x](O)>_ψ`, `L[M](O) = ½([M†, O] M + M† [O, M])`
//!
//! and `P = P^w + ℰ` pointwise.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::pointer::gaussian;
use crate::quadrature::GaussLegendre;
use crate::quantum::{matrix_weak_value, weak_value, CMatrix, Complex, Observable, PureState};

/// Gauss–Legendre nodes used for every `x` integral in this module.
pub const QUADRATURE_NODES: usize = 400;

/// The outcome-indexed operators `M_x` of a von Neumann measurement of `A`.
#[derive(Clone, Debug, PartialEq)]
pub struct KrausFamily {
    pub observable: Observable,
    pub lambda: f64,
}

impl KrausFamily {
    pub fn new(observable: Observable, lambda: f64) -> Result<Self> {
        if !lambda.is_finite() {
            return Err(Error::NonFinite("coupling lambda"));
        }
        Ok(Self { observable, lambda })
    }

    pub fn at(&self, x: f64) -> CMatrix {
        kraus_at(&self.observable, self.lambda, x)
    }

    /// `M_x† M_x = Σ_i G(x - λ a_i) P_i`.
    pub fn effect(&self, x: f64) -> CMatrix {
        self.observable
            .eigensystem()
            .apply_fn(|a| Complex::new(gaussian(x - self.lambda * a), 0.0))
    }

    /// Half-width of the integration window, `10 + |λ|·spectral radius`.
    pub fn window(&self) -> f64 {
        10.0 + self.lambda.abs() * self.observable.eigensystem().spectral_radius()
    }

    /// Quadrature `(x, weight)` pairs over [`KrausFamily::window`].
    pub fn nodes(&self) -> Vec<(f64, f64)> {
        let r = self.window();
        GaussLegendre::new(QUADRATURE_NODES).points(-r, r)
    }

    /// `∫ M_x† M_x dx` by quadrature.
    pub fn completeness(&self) -> CMatrix {
        let d = self.observable.dim();
        self.nodes()
            .iter()
            .fold(CMatrix::zeros(d, d), |acc, &(x, w)| acc + self.effect(x) * Complex::new(w, 0.0))
    }

    fn check(&self, psi: &PureState, phi: &PureState) -> Result<()> {
        for s in [psi, phi] {
            if s.dim() != self.observable.dim() {
                return Err(Error::DimensionMismatch {
                    expected: self.observable.dim(),
                    got: s.dim(),
                });
            }
        }
        Ok(())
    }

    pub fn decompose(&self, psi: &PureState, phi: &PureState, x: f64) -> Result<DecompositionSample> {
        self.check(psi, phi)?;
        let m = self.at(x);
        let mpsi = &m * psi.amplitudes();
        let joint_p = phi.bra(&mpsi).norm_sqr();
        let pw = (psi.inner(phi) * phi.bra(&(self.effect(x) * psi.amplitudes()))).re;
        let o = phi.projector();
        let md = m.adjoint();
        let l = ((&md * &o - &o * &md) * &m + &md * (&o * &m - &m * &o)) * Complex::new(0.5, 0.0);
        let error = psi.bra(&(l * psi.amplitudes())).re;
        Ok(DecompositionSample {
            x,
            joint_p,
            pw,
            error,
        })
    }
}

/// `Σ_i √G(x - λ a_i) P_i`.
pub fn kraus_at(a: &Observable, lambda: f64, x: f64) -> CMatrix {
    a.eigensystem()
        .apply_fn(|ai| Complex::new(gaussian(x - lambda * ai).sqrt(), 0.0))
}

/// Joint density, anticommutator part and error term at one outcome.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DecompositionSample {
    pub x: f64,
    pub joint_p: f64,
    pub pw: f64,
    pub error: f64,
}

/// `|<φ|M_x|ψ>|^2`
pub fn joint_probability_density(a: &Observable, lambda: f64, psi: &PureState, phi: &PureState, x: f64) -> Result<f64> {
    Ok(KrausFamily::new(a.clone(), lambda)?.decompose(psi, phi, x)?.joint_p)
}

/// `|<φ|ψ>|^2 Re[(M_x† M_x)_w]`; not a probability and may be negative.
pub fn pw_density(a: &Observable, lambda: f64, psi: &PureState, phi: &PureState, x: f64) -> Result<f64> {
    Ok(KrausFamily::new(a.clone(), lambda)?.decompose(psi, phi, x)?.pw)
}

/// `<L[M_x](|φ><φ|)>_ψ`
pub fn error_term_density(a: &Observable, lambda: f64, psi: &PureState, phi: &PureState, x: f64) -> Result<f64> {
    Ok(KrausFamily::new(a.clone(), lambda)?.decompose(psi, phi, x)?.error)
}

/// `∫ x M_x† M_x dx = Σ_i λ a_i P_i = λ A`.
pub fn first_moment_operator(a: &Observable, lambda: f64) -> CMatrix {
    a.eigensystem().apply_fn(|ai| Complex::new(lambda * ai, 0.0))
}

/// Small-coupling form of the error term,
/// `λ^2 |<φ|ψ>|^2 G(x) x^2 (|A_w|^2 - Re[(A^2)_w]) / 4`.
pub fn leading_error_term(a: &Observable, lambda: f64, psi: &PureState, phi: &PureState, x: f64) -> Result<f64> {
    let wv = weak_value(a, psi, phi)?;
    let a2w = matrix_weak_value(&(a.matrix() * a.matrix()), psi, phi)?;
    Ok(lambda * lambda * wv.postselect_probability() * gaussian(x) * x * x * (wv.value.norm_sqr() - a2w.re) / 4.0)
}

/// Numbers bearing on whether the error term may be neglected.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GdiReport {
    pub lambda: f64,
    /// `max_x |ℰ(x)| / λ^2` over the quadrature nodes.
    pub max_error_over_lambda2: f64,
    /// `∫ ℰ dx / λ^2`
    pub integrated_error_over_lambda2: f64,
    /// Conditional mean of `x` under the full joint density.
    pub mean_full: f64,
    /// Conditional mean of `x` under `P^w`.
    pub mean_pw: f64,
    /// `mean_full - mean_pw`
    pub mean_gap: f64,
}

pub fn gdi_diagnostic(a: &Observable, lambda: f64, psi: &PureState, phi: &PureState) -> Result<GdiReport> {
    let fam = KrausFamily::new(a.clone(), lambda)?;
    let (mut z, mut zx, mut w, mut wx, mut e, mut emax) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0f64);
    for (x, q) in fam.nodes() {
        let s = fam.decompose(psi, phi, x)?;
        z += q * s.joint_p;
        zx += q * x * s.joint_p;
        w += q * s.pw;
        wx += q * x * s.pw;
        e += q * s.error;
        emax = emax.max(s.error.abs());
    }
    let l2 = lambda * lambda;
    let (max_error_over_lambda2, integrated_error_over_lambda2) = if l2 > 0.0 {
        (emax / l2, e / l2)
    } else {
        (0.0, 0.0)
    };
    let mean_full = zx / z;
    let mean_pw = wx / w;
    Ok(GdiReport {
        lambda,
        max_error_over_lambda2,
        integrated_error_over_lambda2,
        mean_full,
        mean_pw,
        mean_gap: mean_full - mean_pw,
    })
}
