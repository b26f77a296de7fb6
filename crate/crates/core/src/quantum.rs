//! Finite-dimensional states, Hermitian observables and weak values.
//!
//! Everything is dense: the systems of interest are desk-scale (d <= 16), so
//! a full Hermitian eigendecomposition is cheap and is cached on the
//! [`Observable`] the first time it is needed.

use std::fmt;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub type Complex = nalgebra::Complex<f64>;
pub type CMatrix = DMatrix<Complex>;
pub type CVector = DVector<Complex>;

/// Maximum elementwise |M - M^dagger| accepted for an observable.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Accepted deviation of a pure state's norm from one.
pub const NORM_TOL: f64 = 1e-12;
/// Below this |<phi|psi>| a weak value is not defined.
pub const ORTHOGONALITY_TOL: f64 = 1e-10;

pub(crate) const ZERO: Complex = Complex::new(0.0, 0.0);
pub(crate) const ONE: Complex = Complex::new(1.0, 0.0);
pub(crate) const I: Complex = Complex::new(0.0, 1.0);

fn all_finite<'a>(it: impl IntoIterator<Item = &'a Complex>) -> bool {
    it.into_iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Max elementwise |M - M^dagger|.
pub fn hermiticity_defect(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// A normalized vector in a d-dimensional Hilbert space (d >= 2).
#[derive(Clone, Debug, PartialEq)]
pub struct PureState {
    amps: CVector,
}

impl PureState {
    /// Accepts amplitudes that are already normalized within [`NORM_TOL`].
    pub fn new(amps: Vec<Complex>) -> Result<Self> {
        Self::check_shape(&amps)?;
        let norm = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized(norm));
        }
        Ok(Self {
            amps: CVector::from_vec(amps),
        })
    }

    /// Rescales the amplitudes to unit norm.
    pub fn normalized(amps: Vec<Complex>) -> Result<Self> {
        Self::check_shape(&amps)?;
        let norm = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::NotNormalized(0.0));
        }
        let amps = CVector::from_vec(amps).unscale(norm);
        Ok(Self { amps })
    }

    pub fn from_real(amps: &[f64]) -> Result<Self> {
        Self::normalized(amps.iter().map(|&a| Complex::new(a, 0.0)).collect())
    }

    pub(crate) fn from_vector_normalized(v: CVector) -> Result<Self> {
        Self::normalized(v.iter().copied().collect())
    }

    /// Computational basis vector `e_index`.
    pub fn basis(dim: usize, index: usize) -> Result<Self> {
        if index >= dim {
            return Err(Error::InvalidArgument(format!(
                "basis index {index} out of range for dimension {dim}"
            )));
        }
        let mut amps = vec![ZERO; dim];
        amps[index] = ONE;
        Self::new(amps)
    }

    /// Haar-like random state from i.i.d. complex Gaussian amplitudes.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Self {
        loop {
            let amps: Vec<Complex> = (0..dim)
                .map(|_| Complex::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
                .collect();
            if let Ok(s) = Self::normalized(amps) {
                return s;
            }
        }
    }

    fn check_shape(amps: &[Complex]) -> Result<()> {
        if amps.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "state dimension must be >= 2, got {}",
                amps.len()
            )));
        }
        if !all_finite(amps) {
            return Err(Error::NonFinite("state amplitudes"));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amps
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &PureState) -> Complex {
        self.amps.dotc(&other.amps)
    }

    /// `<self|v>` for an arbitrary vector.
    pub fn bra(&self, v: &CVector) -> Complex {
        self.amps.dotc(v)
    }

    pub fn with_global_phase(&self, theta: f64) -> Self {
        Self {
            amps: &self.amps * Complex::from_polar(1.0, theta),
        }
    }

    /// `|self><self|`.
    pub fn projector(&self) -> CMatrix {
        &self.amps * self.amps.adjoint()
    }
}

impl Serialize for PureState {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let pairs: Vec<[f64; 2]> = self.amps.iter().map(|z| [z.re, z.im]).collect();
        pairs.serialize(s)
    }
}

impl<'de> Deserialize<'de> for PureState {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let pairs = Vec::<[f64; 2]>::deserialize(d)?;
        PureState::new(pairs.iter().map(|p| Complex::new(p[0], p[1])).collect())
            .map_err(D::Error::custom)
    }
}

/// Distinct eigenvalues in ascending order with their spectral projectors.
#[derive(Clone, Debug)]
pub struct EigenSystem {
    pub eigenvalues: Vec<f64>,
    pub projectors: Vec<CMatrix>,
}

impl EigenSystem {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn spectral_radius(&self) -> f64 {
        self.eigenvalues.iter().fold(0.0f64, |m, a| m.max(a.abs()))
    }

    /// `P_i v` for every distinct eigenvalue.
    pub fn components(&self, v: &CVector) -> Vec<CVector> {
        self.projectors.iter().map(|p| p * v).collect()
    }

    /// `f(A) = sum_i f(a_i) P_i`.
    pub fn apply_fn(&self, f: impl Fn(f64) -> Complex) -> CMatrix {
        let d = self.projectors[0].nrows();
        let mut out = CMatrix::zeros(d, d);
        for (a, p) in self.eigenvalues.iter().zip(&self.projectors) {
            out += p * f(*a);
        }
        out
    }
}

/// Spectral decomposition with degenerate eigenvalues merged.
///
/// Eigenvalues closer than `1e-10 * (spectral radius + 1)` share one projector.
pub fn eigendecompose(matrix: &CMatrix) -> Result<EigenSystem> {
    if matrix.nrows() != matrix.ncols() {
        return Err(Error::NotSquare {
            rows: matrix.nrows(),
            cols: matrix.ncols(),
        });
    }
    let defect = hermiticity_defect(matrix);
    if defect > HERMITIAN_TOL {
        return Err(Error::NotHermitian(defect));
    }
    let d = matrix.nrows();
    let eig = matrix.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let radius = eig.eigenvalues.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    let tol = 1e-10 * (radius + 1.0);

    let mut eigenvalues: Vec<f64> = Vec::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut last = f64::NEG_INFINITY;
    for &k in &order {
        let a = eig.eigenvalues[k];
        if a - last <= tol {
            groups.last_mut().unwrap().push(k);
        } else {
            groups.push(vec![k]);
        }
        last = a;
    }
    let mut projectors = Vec::with_capacity(groups.len());
    for g in &groups {
        let mut p = CMatrix::zeros(d, d);
        let mut mean = 0.0;
        for &k in g {
            let v = eig.eigenvectors.column(k);
            p += &v * v.adjoint();
            mean += eig.eigenvalues[k];
        }
        eigenvalues.push(mean / g.len() as f64);
        projectors.push(p);
    }
    Ok(EigenSystem {
        eigenvalues,
        projectors,
    })
}

/// A Hermitian matrix with a lazily computed, cached eigensystem.
#[derive(Clone)]
pub struct Observable {
    matrix: CMatrix,
    eigen: OnceLock<EigenSystem>,
}

impl fmt::Debug for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Observable")
            .field("matrix", &self.matrix)
            .finish()
    }
}

impl PartialEq for Observable {
    fn eq(&self, other: &Self) -> bool {
        self.matrix == other.matrix
    }
}

impl Observable {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::NotSquare {
                rows: matrix.nrows(),
                cols: matrix.ncols(),
            });
        }
        if matrix.nrows() < 2 {
            return Err(Error::InvalidArgument(
                "observable dimension must be >= 2".into(),
            ));
        }
        if !all_finite(matrix.iter()) {
            return Err(Error::NonFinite("observable matrix"));
        }
        let defect = hermiticity_defect(&matrix);
        if defect > HERMITIAN_TOL {
            return Err(Error::NotHermitian(defect));
        }
        Ok(Self {
            matrix,
            eigen: OnceLock::new(),
        })
    }

    /// Row-major complex entries.
    pub fn from_rows(rows: &[Vec<Complex>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::NotSquare {
                rows: n,
                cols: rows.first().map_or(0, |r| r.len()),
            });
        }
        Self::new(CMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Result<Self> {
        let n = diag.len();
        Self::new(CMatrix::from_fn(n, n, |i, j| {
            if i == j {
                Complex::new(diag[i], 0.0)
            } else {
                ZERO
            }
        }))
    }

    pub fn sigma_x() -> Self {
        Self::new(pauli_x()).expect("Pauli X is Hermitian")
    }

    pub fn sigma_y() -> Self {
        Self::new(pauli_y()).expect("Pauli Y is Hermitian")
    }

    pub fn sigma_z() -> Self {
        Self::new(pauli_z()).expect("Pauli Z is Hermitian")
    }

    /// Random Hermitian matrix `(G + G^dagger) / 2` with complex Gaussian entries.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Self {
        let g = CMatrix::from_fn(dim, dim, |_, _| {
            Complex::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
        });
        let h = (&g + g.adjoint()).scale(0.5);
        Self::new(h).expect("symmetrized matrix is Hermitian")
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn eigensystem(&self) -> &EigenSystem {
        self.eigen.get_or_init(|| {
            eigendecompose(&self.matrix).expect("Hermiticity checked at construction")
        })
    }

    pub fn apply(&self, state: &PureState) -> CVector {
        &self.matrix * state.amplitudes()
    }

    fn check_dim(&self, state: &PureState) -> Result<()> {
        if state.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: state.dim(),
            });
        }
        Ok(())
    }
}

impl Serialize for Observable {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let n = self.dim();
        let rows: Vec<Vec<[f64; 2]>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| [self.matrix[(i, j)].re, self.matrix[(i, j)].im])
                    .collect()
            })
            .collect();
        rows.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Observable {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<[f64; 2]>>::deserialize(d)?;
        let rows: Vec<Vec<Complex>> = rows
            .iter()
            .map(|r| r.iter().map(|p| Complex::new(p[0], p[1])).collect())
            .collect();
        Observable::from_rows(&rows).map_err(D::Error::custom)
    }
}

pub fn pauli_x() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO])
}

pub fn pauli_y() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ZERO, -I, I, ZERO])
}

pub fn pauli_z() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE])
}

/// Weak value together with the pre/post-selection overlap it was divided by.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeakValueResult {
    pub value: Complex,
    /// `<phi|psi>`
    pub preselect_overlap: Complex,
}

impl WeakValueResult {
    /// `|<phi|psi>|^2`, the unperturbed post-selection probability.
    pub fn postselect_probability(&self) -> f64 {
        self.preselect_overlap.norm_sqr()
    }
}

fn checked_overlap(psi: &PureState, phi: &PureState) -> Result<Complex> {
    if psi.dim() != phi.dim() {
        return Err(Error::DimensionMismatch {
            expected: psi.dim(),
            got: phi.dim(),
        });
    }
    let ov = phi.inner(psi);
    if ov.norm() <= ORTHOGONALITY_TOL {
        return Err(Error::OrthogonalPostselection(ov.norm()));
    }
    Ok(ov)
}

/// `<phi|A|psi> / <phi|psi>`.
pub fn weak_value(a: &Observable, psi: &PureState, phi: &PureState) -> Result<WeakValueResult> {
    a.check_dim(psi)?;
    let ov = checked_overlap(psi, phi)?;
    let value = phi.bra(&a.apply(psi)) / ov;
    Ok(WeakValueResult {
        value,
        preselect_overlap: ov,
    })
}

/// `<phi|M|psi> / <phi|psi>` for any square matrix, e.g. `A^2` or `BA`.
pub fn matrix_weak_value(m: &CMatrix, psi: &PureState, phi: &PureState) -> Result<Complex> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    if m.nrows() != psi.dim() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            got: psi.dim(),
        });
    }
    let ov = checked_overlap(psi, phi)?;
    Ok(phi.bra(&(m * psi.amplitudes())) / ov)
}

/// `<psi|A|psi>`.
pub fn expectation(a: &Observable, psi: &PureState) -> f64 {
    psi.bra(&a.apply(psi)).re
}

/// Which part of the weak value an anomalous pair should blow up.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeakValuePart {
    Re,
    Im,
}

/// Pre- and post-selected states with a large weak value.
#[derive(Clone, Debug, Serialize)]
pub struct AnomalousPair {
    pub psi: PureState,
    pub phi: PureState,
    /// Unit vector orthogonal to `psi` with `<perp|A|psi>` real and positive.
    pub perp: PureState,
    /// `<perp|A|psi>`
    pub matrix_element: f64,
    /// `|<phi|psi>|^2 = epsilon^2`
    pub postselect_probability: f64,
}

/// Builds `psi`, `phi` whose weak value part scales like `<perp|A|psi> / epsilon`.
///
/// `psi` is the first candidate among `e_i`, then `(e_i + e_j)/sqrt 2`, that is
/// not an eigenvector of `A`.
pub fn anomalous_pair(a: &Observable, epsilon: f64, target: WeakValuePart) -> Result<AnomalousPair> {
    check_epsilon(epsilon)?;
    let es = a.eigensystem();
    let spread = es.eigenvalues.last().unwrap() - es.eigenvalues[0];
    if spread <= 1e-10 * (es.spectral_radius() + 1.0) {
        return Err(Error::ProportionalToIdentity);
    }
    let d = a.dim();
    let mut candidates = Vec::new();
    for i in 0..d {
        candidates.push(PureState::basis(d, i)?);
    }
    for i in 0..d {
        for j in (i + 1)..d {
            let mut amps = vec![ZERO; d];
            amps[i] = ONE;
            amps[j] = ONE;
            candidates.push(PureState::normalized(amps)?);
        }
    }
    for psi in candidates {
        if let Some(perp) = orthogonal_response(a, &psi) {
            return Ok(build_pair(a, psi, perp, epsilon, target));
        }
    }
    // Some e_i or e_i + e_j is always outside every eigenspace when A is not
    // a multiple of the identity.
    Err(Error::ProportionalToIdentity)
}

/// Same as [`anomalous_pair`] for a caller-chosen pre-selection.
pub fn anomalous_pair_from(
    a: &Observable,
    psi: &PureState,
    epsilon: f64,
    target: WeakValuePart,
) -> Result<AnomalousPair> {
    check_epsilon(epsilon)?;
    a.check_dim(psi)?;
    let perp = orthogonal_response(a, psi).ok_or_else(|| {
        Error::InvalidArgument("pre-selected state is an eigenstate of the observable".into())
    })?;
    Ok(build_pair(a, psi.clone(), perp, epsilon, target))
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon.is_finite() && epsilon != 0.0 && epsilon.abs() <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "epsilon must satisfy 0 < |epsilon| <= 1, got {epsilon}"
        )));
    }
    Ok(())
}

/// Normalized component of `A psi` orthogonal to `psi`, if non-negligible.
fn orthogonal_response(a: &Observable, psi: &PureState) -> Option<PureState> {
    let apsi = a.apply(psi);
    let mean = psi.bra(&apsi);
    let resid = apsi - psi.amplitudes() * mean;
    let scale = a.eigensystem().spectral_radius() + 1.0;
    if resid.norm() <= 1e-8 * scale {
        return None;
    }
    PureState::from_vector_normalized(resid).ok()
}

fn build_pair(
    a: &Observable,
    psi: PureState,
    perp: PureState,
    epsilon: f64,
    target: WeakValuePart,
) -> AnomalousPair {
    let element = perp.bra(&a.apply(&psi)).re;
    let c = (1.0 - epsilon * epsilon).max(0.0).sqrt();
    let coeff = match target {
        WeakValuePart::Re => Complex::new(c, 0.0),
        WeakValuePart::Im => Complex::new(0.0, c),
    };
    let phi_vec = perp.amplitudes() * coeff + psi.amplitudes() * Complex::new(epsilon, 0.0);
    let phi = PureState::from_vector_normalized(phi_vec).expect("non-zero by construction");
    let postselect_probability = phi.inner(&psi).norm_sqr();
    AnomalousPair {
        psi,
        phi,
        perp,
        matrix_element: element,
        postselect_probability,
    }
}

/// A mixed state: Hermitian, unit trace, positive semidefinite.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    matrix: CMatrix,
}

impl DensityMatrix {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::NotSquare {
                rows: matrix.nrows(),
                cols: matrix.ncols(),
            });
        }
        let defect = hermiticity_defect(&matrix);
        if defect > 1e-10 {
            return Err(Error::NotHermitian(defect));
        }
        let tr = matrix.trace();
        if (tr.re - 1.0).abs() > 1e-10 || tr.im.abs() > 1e-10 {
            return Err(Error::InvalidArgument(format!("trace is {tr}, expected 1")));
        }
        let min_eig = matrix
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .fold(f64::INFINITY, |m, &v| m.min(v));
        if min_eig < -1e-10 {
            return Err(Error::InvalidArgument(format!(
                "density matrix has negative eigenvalue {min_eig:e}"
            )));
        }
        Ok(Self { matrix })
    }

    pub fn pure(psi: &PureState) -> Self {
        Self {
            matrix: psi.projector(),
        }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn purity(&self) -> f64 {
        (&self.matrix * &self.matrix).trace().re
    }

    /// `<phi|rho|phi>`.
    pub fn expectation_in(&self, phi: &PureState) -> f64 {
        phi.bra(&(&self.matrix * phi.amplitudes())).re
    }
}
