//! Dense operator algebra and Liouvillian machinery for small open quantum
//! systems.
//!
//! Everything here is dense `ndarray` + LAPACK at tiny Hilbert-space
//! dimension; the two-level system is the primary target but the assembly
//! routines are dimension-generic. Superoperators act on column-stacked
//! operators with the convention `vec(AρB) = (Bᵀ ⊗ A) vec(ρ)`.

use ndarray::prelude::*;
use ndarray_linalg::{Eig, EigValsh, Eigh, LeastSquaresSvd, Norm, SVD, UPLO};
use num_complex::Complex64 as C64;

use crate::error::{CurvworkError, Result};

/// Complex square matrix used for operators throughout the crate.
pub type CMatrix = Array2<C64>;

/// Elementwise Hermiticity tolerance for operator construction.
pub const HERMITICITY_TOL: f64 = 1e-12;
/// Tolerance on `|Tr ρ - 1|` for density matrices.
pub const TRACE_TOL: f64 = 1e-12;
/// Most negative eigenvalue tolerated in a density matrix.
pub const DENSITY_MIN_EIG: f64 = -1e-10;
/// Uniqueness threshold for the stationary state: the two smallest singular
/// values of the scale-normalized Liouvillian must differ by more than this.
pub const DEGENERACY_THRESHOLD: f64 = 1e-8;
/// Residual bound `‖L[ρ*]‖_F` (scale-normalized) for an accepted stationary
/// state.
pub const STATIONARY_RESIDUAL_TOL: f64 = 1e-10;
/// Back-substitution residual bound for the reduced pseudo-inverse.
pub const PSEUDOINVERSE_RESIDUAL_TOL: f64 = 1e-9;
/// Spectral gap below which the reduced pseudo-inverse is refused.
pub const GAP_FLOOR: f64 = 1e-10;

// ---------------------------------------------------------------------------
// Small helpers
// ---------------------------------------------------------------------------

/// Trace of a square complex matrix.
pub(crate) fn trace(a: &CMatrix) -> C64 {
    a.diag().sum()
}

/// Trace of a product, `Tr[AB] = Σ_ij A_ij B_ji`, without forming `AB`.
pub(crate) fn trace_product(a: &CMatrix, b: &CMatrix) -> C64 {
    let n = a.nrows();
    let mut s = C64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            s += a[[i, j]] * b[[j, i]];
        }
    }
    s
}

/// Column-stack a matrix: `vec(M)[j*d + i] = M[i, j]`.
pub(crate) fn vec_op(a: &CMatrix) -> Array1<C64> {
    let (n, m) = a.dim();
    Array1::from_iter((0..m).flat_map(|j| (0..n).map(move |i| a[[i, j]])))
}

/// Inverse of [`vec_op`] for a `dim × dim` matrix.
pub(crate) fn unvec_op(v: ArrayView1<C64>, dim: usize) -> CMatrix {
    Array2::from_shape_fn((dim, dim), |(i, j)| v[j * dim + i])
}

/// Hermitian part `(M + M†)/2`.
pub(crate) fn hermitian_part(a: &CMatrix) -> CMatrix {
    let at = a.t().mapv(|z| z.conj());
    (a + &at).mapv(|z| z * 0.5)
}

/// Max elementwise deviation from Hermiticity.
fn hermiticity_deviation(a: &CMatrix) -> f64 {
    let n = a.nrows();
    let mut dev: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            dev = dev.max((a[[i, j]] - a[[j, i]].conj()).norm());
        }
    }
    dev
}

/// Hermitian eigendecomposition with eigenvectors guaranteed to be the
/// *columns* of the returned matrix.
///
/// LAPACK wrappers differ in how they hand back complex eigenvector layouts
/// (some return the conjugate of the eigenvector matrix for row-major
/// inputs), so both candidates are verified against `A·V = V·Λ` and the one
/// that actually diagonalizes is returned.
pub(crate) fn eigh_columns(a: &CMatrix) -> Result<(Array1<f64>, CMatrix)> {
    let (evals, vecs) = a.eigh(UPLO::Lower)?;
    let scaled = |v: &CMatrix| {
        let mut out = v.clone();
        for (k, lam) in evals.iter().enumerate() {
            out.column_mut(k).mapv_inplace(|z| z * lam);
        }
        out
    };
    let res_direct = (a.dot(&vecs) - scaled(&vecs)).norm_l2();
    let conj = vecs.mapv(|z| z.conj());
    let res_conj = (a.dot(&conj) - scaled(&conj)).norm_l2();
    if res_conj < res_direct {
        Ok((evals, conj))
    } else {
        Ok((evals, vecs))
    }
}

/// Kronecker product `a ⊗ b`.
pub(crate) fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ra, ca) = a.dim();
    let (rb, cb) = b.dim();
    let mut out = CMatrix::zeros((ra * rb, ca * cb));
    for i in 0..ra {
        for j in 0..ca {
            let aij = a[[i, j]];
            for k in 0..rb {
                for l in 0..cb {
                    out[[i * rb + k, j * cb + l]] = aij * b[[k, l]];
                }
            }
        }
    }
    out
}

/// Pauli matrix σ_x.
pub fn sigma_x() -> CMatrix {
    array![
        [C64::new(0.0, 0.0), C64::new(1.0, 0.0)],
        [C64::new(1.0, 0.0), C64::new(0.0, 0.0)]
    ]
}

/// Pauli matrix σ_y.
pub fn sigma_y() -> CMatrix {
    array![
        [C64::new(0.0, 0.0), C64::new(0.0, -1.0)],
        [C64::new(0.0, 1.0), C64::new(0.0, 0.0)]
    ]
}

/// Pauli matrix σ_z.
pub fn sigma_z() -> CMatrix {
    array![
        [C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
        [C64::new(0.0, 0.0), C64::new(-1.0, 0.0)]
    ]
}

/// Lowering operator `σ_- = |0⟩⟨1|` in the fixed laboratory basis, where
/// `|0⟩` is the `σ_z = +1` state. Its dissipator drives population toward
/// `σ_z = +1`.
pub fn sigma_minus() -> CMatrix {
    array![
        [C64::new(0.0, 0.0), C64::new(1.0, 0.0)],
        [C64::new(0.0, 0.0), C64::new(0.0, 0.0)]
    ]
}

/// Raising operator `σ_+ = |1⟩⟨0|`, the adjoint of [`sigma_minus`].
pub fn sigma_plus() -> CMatrix {
    array![
        [C64::new(0.0, 0.0), C64::new(0.0, 0.0)],
        [C64::new(1.0, 0.0), C64::new(0.0, 0.0)]
    ]
}

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

/// A Hermitian operator (energy units), validated on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator {
    mat: CMatrix,
}

impl HermitianOperator {
    /// Wrap a matrix, checking Hermiticity elementwise to [`HERMITICITY_TOL`].
    pub fn new(mat: CMatrix) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(CurvworkError::DimensionMismatch {
                context: format!("Hermitian operator must be square, got {:?}", mat.dim()),
            });
        }
        let dev = hermiticity_deviation(&mat);
        if dev > HERMITICITY_TOL {
            return Err(CurvworkError::NotHermitian { deviation: dev });
        }
        Ok(Self { mat })
    }

    /// Hilbert-space dimension.
    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    /// The underlying matrix.
    pub fn matrix(&self) -> &CMatrix {
        &self.mat
    }

    /// Real eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Result<Array1<f64>> {
        Ok(self.mat.eigvalsh(UPLO::Lower)?)
    }
}

/// A density matrix: Hermitian, unit trace, positive semidefinite
/// (eigenvalues ≥ [`DENSITY_MIN_EIG`]), validated on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    mat: CMatrix,
}

impl DensityMatrix {
    /// Wrap a matrix, checking all density-matrix invariants.
    pub fn new(mat: CMatrix) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(CurvworkError::InvalidDensity {
                reason: format!("must be square, got {:?}", mat.dim()),
            });
        }
        let dev = hermiticity_deviation(&mat);
        if dev > HERMITICITY_TOL {
            return Err(CurvworkError::InvalidDensity {
                reason: format!("not Hermitian: max |ρ - ρ†| = {dev:.3e}"),
            });
        }
        let tr = trace(&mat);
        if (tr - C64::new(1.0, 0.0)).norm() > TRACE_TOL {
            return Err(CurvworkError::InvalidDensity {
                reason: format!("trace {tr} differs from 1 beyond {TRACE_TOL:.0e}"),
            });
        }
        let evals = mat.eigvalsh(UPLO::Lower)?;
        let min_eig = evals.iter().cloned().fold(f64::INFINITY, f64::min);
        if min_eig < DENSITY_MIN_EIG {
            return Err(CurvworkError::InvalidDensity {
                reason: format!("min eigenvalue {min_eig:.3e} below {DENSITY_MIN_EIG:.0e}"),
            });
        }
        Ok(Self { mat })
    }

    /// The maximally mixed state `I/dim`.
    pub fn maximally_mixed(dim: usize) -> Self {
        let mat = CMatrix::eye(dim).mapv(|z| z / dim as f64);
        Self { mat }
    }

    /// Hilbert-space dimension.
    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    /// The underlying matrix.
    pub fn matrix(&self) -> &CMatrix {
        &self.mat
    }

    /// Expectation value `Tr[ρ O]` of a Hermitian observable (real part).
    pub fn expectation(&self, observable: &CMatrix) -> f64 {
        trace(&self.mat.dot(observable)).re
    }
}

/// A Bloch vector for a qubit state, `|r| ≤ 1` up to roundoff.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochVector {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl BlochVector {
    /// Construct, checking `x² + y² + z² ≤ 1 + 1e-10`.
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        let norm2 = x * x + y * y + z * z;
        if norm2 > 1.0 + 1e-10 {
            return Err(CurvworkError::InvalidInput(format!(
                "Bloch vector norm² = {norm2} exceeds 1"
            )));
        }
        Ok(Self { x, y, z })
    }

    /// Euclidean norm.
    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }
}

/// One dissipation channel: a jump operator with a nonnegative rate
/// (inverse time).
#[derive(Debug, Clone, PartialEq)]
pub struct LindbladTerm {
    operator: CMatrix,
    rate: f64,
}

impl LindbladTerm {
    /// Construct, checking squareness and `rate ≥ 0`.
    pub fn new(operator: CMatrix, rate: f64) -> Result<Self> {
        if operator.nrows() != operator.ncols() {
            return Err(CurvworkError::DimensionMismatch {
                context: format!("jump operator must be square, got {:?}", operator.dim()),
            });
        }
        if !(rate >= 0.0) {
            return Err(CurvworkError::InvalidInput(format!(
                "Lindblad rate must be ≥ 0, got {rate}"
            )));
        }
        Ok(Self { operator, rate })
    }

    /// The jump operator.
    pub fn operator(&self) -> &CMatrix {
        &self.operator
    }

    /// The channel rate.
    pub fn rate(&self) -> f64 {
        self.rate
    }
}

/// The two fixed-laboratory-basis channels `σ_-` at `γ↓` and `σ_+` at `γ↑`.
///
/// With this sign convention a bias `γ↓ > γ↑` pumps population toward
/// `σ_z = +1`, matching the closed-form stationary state of
/// [`analytic_ness_bloch`].
pub fn fixed_basis_terms(gamma_down: f64, gamma_up: f64) -> Result<Vec<LindbladTerm>> {
    Ok(vec![
        LindbladTerm::new(sigma_minus(), gamma_down)?,
        LindbladTerm::new(sigma_plus(), gamma_up)?,
    ])
}

/// A superoperator: a `dim² × dim²` matrix acting on column-stacked
/// operators.
#[derive(Debug, Clone)]
pub struct Superoperator {
    mat: CMatrix,
    dim: usize,
}

impl Superoperator {
    /// Wrap a raw `dim² × dim²` matrix.
    pub fn from_matrix(mat: CMatrix, dim: usize) -> Result<Self> {
        if mat.dim() != (dim * dim, dim * dim) {
            return Err(CurvworkError::DimensionMismatch {
                context: format!(
                    "superoperator for dim {dim} must be {0}×{0}, got {1:?}",
                    dim * dim,
                    mat.dim()
                ),
            });
        }
        Ok(Self { mat, dim })
    }

    /// Hilbert-space dimension the superoperator acts on.
    pub fn hilbert_dim(&self) -> usize {
        self.dim
    }

    /// The underlying `dim² × dim²` matrix.
    pub fn matrix(&self) -> &CMatrix {
        &self.mat
    }

    /// Apply the map to an operator.
    pub fn apply(&self, op: &CMatrix) -> CMatrix {
        let v = self.mat.dot(&vec_op(op));
        unvec_op(v.view(), self.dim)
    }

    /// Frobenius norm used to normalize degeneracy and residual thresholds;
    /// clamped away from zero so the thresholds stay meaningful for the zero
    /// map.
    pub fn scale(&self) -> f64 {
        self.mat.norm_l2().max(f64::MIN_POSITIVE)
    }
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// Two-level Hamiltonian `H(ω, g) = ½ (ω σ_z + g σ_x)`, eigenvalues
/// `±½ √(ω² + g²)`.
pub fn build_hamiltonian(omega: f64, g: f64) -> HermitianOperator {
    let mat = array![
        [C64::new(0.5 * omega, 0.0), C64::new(0.5 * g, 0.0)],
        [C64::new(0.5 * g, 0.0), C64::new(-0.5 * omega, 0.0)]
    ];
    HermitianOperator { mat }
}

/// Gibbs state `e^{-βH}/Z`, computed by spectral decomposition with a
/// smallest-eigenvalue shift so large `β` cannot overflow.
pub fn gibbs_state(h: &HermitianOperator, beta: f64) -> Result<DensityMatrix> {
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(CurvworkError::InvalidInput(format!(
            "inverse temperature must be finite and ≥ 0, got {beta}"
        )));
    }
    let (evals, evecs) = eigh_columns(&h.mat)?;
    let e_min = evals.iter().cloned().fold(f64::INFINITY, f64::min);
    let weights: Vec<f64> = evals.iter().map(|e| (-beta * (e - e_min)).exp()).collect();
    let z: f64 = weights.iter().sum();
    let dim = h.dim();
    let mut mat = CMatrix::zeros((dim, dim));
    for (k, w) in weights.iter().enumerate() {
        let vk = evecs.column(k);
        let p = w / z;
        for i in 0..dim {
            for j in 0..dim {
                mat[[i, j]] += vk[i] * vk[j].conj() * p;
            }
        }
    }
    DensityMatrix::new(hermitian_part(&mat))
}

/// Assemble the Liouvillian superoperator of
/// `ρ̇ = -i[H, ρ] + Σ_k γ_k (L_k ρ L_k† - ½{L_k†L_k, ρ})`
/// under column stacking.
pub fn build_liouvillian(h: &HermitianOperator, terms: &[LindbladTerm]) -> Result<Superoperator> {
    let dim = h.dim();
    for t in terms {
        if t.operator.nrows() != dim {
            return Err(CurvworkError::DimensionMismatch {
                context: format!(
                    "jump operator dim {} does not match Hamiltonian dim {dim}",
                    t.operator.nrows()
                ),
            });
        }
    }
    let id = CMatrix::eye(dim);
    let ht = h.mat.t().to_owned();
    // -i (I⊗H - Hᵀ⊗I)
    let mut l = (kron(&id, &h.mat) - kron(&ht, &id)).mapv(|z| z * C64::new(0.0, -1.0));
    for t in terms {
        let lk = &t.operator;
        let lk_conj = lk.mapv(|z| z.conj());
        let lk_dag = lk.t().mapv(|z| z.conj());
        let ldl = lk_dag.dot(lk);
        let ldl_t = ldl.t().to_owned();
        let dissipator = kron(&lk_conj, lk)
            - (kron(&id, &ldl) + kron(&ldl_t, &id)).mapv(|z| z * 0.5);
        l = l + dissipator.mapv(|z| z * t.rate);
    }
    Superoperator::from_matrix(l, dim)
}

/// The unique stationary state `ρ*` with `L[ρ*] = 0`, found as the right
/// singular vector of the smallest singular value, Hermitized and normalized
/// to unit trace.
///
/// Errors with [`CurvworkError::DegenerateSteadyState`] when the two smallest
/// singular values of the scale-normalized matrix are within
/// [`DEGENERACY_THRESHOLD`] of each other, and with
/// [`CurvworkError::NonPositive`] when the candidate state has an eigenvalue
/// below `-1e-8`. Eigenvalues in `(-1e-8, 0)` are treated as roundoff and
/// clamped to zero before renormalization.
pub fn stationary_state(l: &Superoperator) -> Result<DensityMatrix> {
    let scale = l.scale();
    let (_, s, vt) = l.mat.svd(false, true)?;
    let vt = vt.expect("requested right singular vectors");
    let n = s.len();
    let s0 = s[n - 1] / scale;
    let s1 = s[n - 2] / scale;
    if s1 - s0 < DEGENERACY_THRESHOLD {
        return Err(CurvworkError::DegenerateSteadyState {
            s0,
            s1,
            threshold: DEGENERACY_THRESHOLD,
        });
    }
    let null_vec = vt.row(n - 1).mapv(|z| z.conj());
    let rho = hermitian_part(&unvec_op(null_vec.view(), l.dim));
    let tr = trace(&rho);
    if tr.norm() < 1e-10 {
        return Err(CurvworkError::InvalidInput(
            "stationary null vector is traceless; no stationary density exists".into(),
        ));
    }
    let rho = rho.mapv(|z| z / tr);
    let (evals, evecs) = eigh_columns(&rho)?;
    let min_eig = evals.iter().cloned().fold(f64::INFINITY, f64::min);
    if min_eig < -1e-8 {
        return Err(CurvworkError::NonPositive { min_eig });
    }
    let rho = if min_eig < 0.0 {
        // Clamp roundoff-negative populations and renormalize.
        let clamped: Vec<f64> = evals.iter().map(|e| e.max(0.0)).collect();
        let total: f64 = clamped.iter().sum();
        let mut mat = CMatrix::zeros((l.dim, l.dim));
        for (k, p) in clamped.iter().enumerate() {
            let vk = evecs.column(k);
            for i in 0..l.dim {
                for j in 0..l.dim {
                    mat[[i, j]] += vk[i] * vk[j].conj() * (p / total);
                }
            }
        }
        hermitian_part(&mat)
    } else {
        rho
    };
    let residual = l.apply(&rho).norm_l2() / scale;
    if residual > STATIONARY_RESIDUAL_TOL {
        return Err(CurvworkError::ResidualTooLarge {
            residual,
            tolerance: STATIONARY_RESIDUAL_TOL,
        });
    }
    DensityMatrix::new(rho)
}

/// The Liouvillian spectral gap: `min |Re λ|` over the nonzero eigenvalues.
///
/// Errors with [`CurvworkError::DegenerateSteadyState`] when more than one
/// eigenvalue sits at zero (scale-normalized threshold
/// [`DEGENERACY_THRESHOLD`]).
pub fn spectral_gap(l: &Superoperator) -> Result<f64> {
    let (evals, _) = l.mat.eig()?;
    let scale = l.scale();
    let mut mags: Vec<(f64, f64)> = evals.iter().map(|z| (z.norm(), z.re.abs())).collect();
    mags.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    if mags.len() > 1 && mags[1].0 / scale < DEGENERACY_THRESHOLD {
        return Err(CurvworkError::DegenerateSteadyState {
            s0: mags[0].0 / scale,
            s1: mags[1].0 / scale,
            threshold: DEGENERACY_THRESHOLD,
        });
    }
    Ok(mags[1..]
        .iter()
        .map(|m| m.1)
        .fold(f64::INFINITY, f64::min))
}

/// Solve `L[Y] = X` for traceless `X`, restricted to the sector
/// complementary to the stationary direction: the returned `Y` satisfies
/// `Tr[Y] = 0`, i.e. `P[Y] = 0` for the projector `P[·] = ρ* Tr[·]`.
///
/// The solve is a minimum-norm least-squares solve against the (singular)
/// superoperator matrix followed by removal of the `ρ*` component; the
/// back-substitution residual is verified against
/// [`PSEUDOINVERSE_RESIDUAL_TOL`].
pub fn reduced_pseudoinverse_apply(
    l: &Superoperator,
    rho_ss: &DensityMatrix,
    x: &CMatrix,
) -> Result<CMatrix> {
    if x.nrows() != l.dim || x.ncols() != l.dim {
        return Err(CurvworkError::DimensionMismatch {
            context: format!("operand is {:?}, superoperator dim {}", x.dim(), l.dim),
        });
    }
    let tr_norm = trace(x).norm();
    if tr_norm > 1e-10 {
        return Err(CurvworkError::NotTraceless { trace_norm: tr_norm });
    }
    let gap = spectral_gap(l)?;
    if gap < GAP_FLOOR {
        return Err(CurvworkError::SingularSolve {
            gap,
            threshold: GAP_FLOOR,
        });
    }
    let rhs = vec_op(x);
    let sol = l.mat.least_squares(&rhs)?;
    let y = unvec_op(sol.solution.view(), l.dim);
    let y = hermitian_part(&y);
    // Remove the stationary-direction component so that Tr[Y] = 0 exactly.
    let tr_y = trace(&y);
    let y = &y - &rho_ss.matrix().mapv(|z| z * tr_y);
    let residual = (&l.apply(&y) - x).norm_l2() / x.norm_l2().max(1.0);
    if residual > PSEUDOINVERSE_RESIDUAL_TOL {
        return Err(CurvworkError::ResidualTooLarge {
            residual,
            tolerance: PSEUDOINVERSE_RESIDUAL_TOL,
        });
    }
    Ok(y)
}

/// Bloch components `(Tr[ρσ_x], Tr[ρσ_y], Tr[ρσ_z])` of a qubit state.
pub fn bloch_from_density(rho: &DensityMatrix) -> Result<BlochVector> {
    if rho.dim() != 2 {
        return Err(CurvworkError::DimensionMismatch {
            context: format!("Bloch map needs dim 2, got {}", rho.dim()),
        });
    }
    let m = rho.matrix();
    let x = (m[[0, 1]] + m[[1, 0]]).re;
    let y = (C64::new(0.0, 1.0) * (m[[0, 1]] - m[[1, 0]])).re;
    let z = (m[[0, 0]] - m[[1, 1]]).re;
    BlochVector::new(x, y, z)
}

/// The qubit state `½ (I + x σ_x + y σ_y + z σ_z)`.
pub fn density_from_bloch(b: &BlochVector) -> Result<DensityMatrix> {
    let mat = array![
        [
            C64::new(0.5 * (1.0 + b.z), 0.0),
            C64::new(0.5 * b.x, -0.5 * b.y)
        ],
        [
            C64::new(0.5 * b.x, 0.5 * b.y),
            C64::new(0.5 * (1.0 - b.z), 0.0)
        ]
    ];
    DensityMatrix::new(mat)
}

/// Closed-form stationary Bloch vector of the fixed-basis two-channel model:
/// with `γ = γ↓ + γ↑`, `s = γ↓ - γ↑`, and `D = 2ω² + g² + γ²/2`,
///
/// ```text
/// x* = 2 s ω g / (γ D),   y* = -s g / D,   z* = s (4ω² + γ²) / (2 γ D).
/// ```
pub fn analytic_ness_bloch(
    omega: f64,
    g: f64,
    gamma_down: f64,
    gamma_up: f64,
) -> Result<BlochVector> {
    if gamma_down < 0.0 || gamma_up < 0.0 {
        return Err(CurvworkError::InvalidInput(format!(
            "rates must be ≥ 0, got ({gamma_down}, {gamma_up})"
        )));
    }
    let gamma = gamma_down + gamma_up;
    if gamma <= 0.0 {
        return Err(CurvworkError::InvalidInput(
            "total rate γ↓ + γ↑ must be positive".into(),
        ));
    }
    let s = gamma_down - gamma_up;
    let d = 2.0 * omega * omega + g * g + 0.5 * gamma * gamma;
    BlochVector::new(
        2.0 * s * omega * g / (gamma * d),
        -s * g / d,
        s * (4.0 * omega * omega + gamma * gamma) / (2.0 * gamma * d),
    )
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
