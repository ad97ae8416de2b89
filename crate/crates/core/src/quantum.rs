//! Finite-dimensional quantum primitives.
//!
//! Two-qubit states use the computational ordering |00⟩, |01⟩, |10⟩, |11⟩
//! with Alice's qubit as the most significant factor. Bell-basis quantities
//! are always ordered (Φ+, Φ−, Ψ+, Ψ−).

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Tolerance for Hermiticity, normalisation and positivity checks.
pub const STATE_TOL: f64 = 1e-10;
/// Eigenvalues below this contribute nothing to entropies.
pub const ENTROPY_CUTOFF: f64 = 1e-12;
/// Largest local dimension accepted by [`jordan_blocks`] and the simulator.
pub const MAX_LOCAL_DIM: usize = 16;

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

fn c(re: f64) -> C64 {
    Complex::new(re, 0.0)
}

pub fn identity(d: usize) -> CMatrix {
    CMatrix::identity(d, d)
}

pub fn pauli_x() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(0.0), c(1.0), c(1.0), c(0.0)])
}

pub fn pauli_y() -> CMatrix {
    let i = Complex::new(0.0, 1.0);
    CMatrix::from_row_slice(2, 2, &[c(0.0), -i, i, c(0.0)])
}

pub fn pauli_z() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(1.0), c(0.0), c(0.0), c(-1.0)])
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

pub fn ket(amplitudes: &[C64]) -> CVector {
    CVector::from_column_slice(amplitudes)
}

pub fn projector(v: &CVector) -> CMatrix {
    v * v.adjoint()
}

/// Largest entrywise magnitude of `m − m†`.
pub fn hermiticity_defect(m: &CMatrix) -> f64 {
    let diff = m - m.adjoint();
    diff.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Eigen-decomposition of a Hermitian matrix with eigenvalues sorted ascending.
pub fn hermitian_eigen(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let sym = (m + m.adjoint()).scale(0.5);
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = CMatrix::zeros(m.nrows(), m.ncols());
    for (col, &k) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(k));
    }
    (values, vectors)
}

fn clamp_spectrum(values: &[f64]) -> Result<Vec<f64>> {
    values
        .iter()
        .map(|&v| {
            if v < -STATE_TOL {
                Err(Error::NotPositive(v))
            } else if v > 1.0 + STATE_TOL {
                Err(Error::Numerical(format!("eigenvalue {v} exceeds 1")))
            } else {
                Ok(v.clamp(0.0, 1.0))
            }
        })
        .collect()
}

/// Shannon entropy in bits; entries below [`ENTROPY_CUTOFF`] are dropped.
pub fn shannon_entropy(p: &[f64]) -> f64 {
    p.iter()
        .filter(|&&x| x > ENTROPY_CUTOFF)
        .map(|&x| -x * x.log2())
        .sum()
}

/// A validated density matrix of arbitrary dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: CMatrix,
}

impl DensityMatrix {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch(matrix.nrows(), matrix.ncols()));
        }
        let herm = hermiticity_defect(&matrix);
        if herm > STATE_TOL {
            return Err(Error::NotHermitian(herm));
        }
        let tr = matrix.trace();
        if (tr.re - 1.0).abs() > STATE_TOL || tr.im.abs() > STATE_TOL {
            return Err(Error::InvalidTrace(tr.re));
        }
        let (values, _) = hermitian_eigen(&matrix);
        clamp_spectrum(&values)?;
        Ok(Self { matrix })
    }

    pub fn pure(psi: &CVector) -> Result<Self> {
        let norm = psi.norm();
        if norm == 0.0 {
            return Err(Error::InvalidTrace(0.0));
        }
        let v = psi.unscale(norm);
        Self::new(projector(&v))
    }

    pub fn maximally_mixed(d: usize) -> Self {
        Self {
            matrix: identity(d).unscale(d as f64),
        }
    }

    /// Wraps a matrix the caller has already validated or constructed to be a state.
    pub(crate) fn from_trusted(matrix: CMatrix) -> Self {
        Self { matrix }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    /// Eigenvalues sorted ascending, clamped into [0, 1].
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        let (values, _) = hermitian_eigen(&self.matrix);
        clamp_spectrum(&values)
    }

    pub fn expectation(&self, op: &CMatrix) -> f64 {
        (&self.matrix * op).trace().re
    }
}

/// Square root of a positive semidefinite matrix with eigenvalues below `cutoff` set to zero.
fn psd_sqrt(m: &CMatrix, cutoff: f64) -> Result<CMatrix> {
    let (values, vectors) = hermitian_eigen(m);
    let roots = clamp_spectrum(&values)?
        .into_iter()
        .map(|v| if v < cutoff { c(0.0) } else { c(v.sqrt()) })
        .collect::<Vec<_>>();
    let diag = CMatrix::from_diagonal(&CVector::from_vec(roots));
    Ok(&vectors * diag * vectors.adjoint())
}

/// Which subsystem a partial trace keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    A,
    B,
}

/// Partial trace of a bipartite matrix on `dims.0 ⊗ dims.1`.
pub fn partial_trace_dims(m: &CMatrix, dims: (usize, usize), keep: Side) -> Result<CMatrix> {
    let (da, db) = dims;
    if m.nrows() != da * db || m.ncols() != da * db {
        return Err(Error::DimensionMismatch(m.nrows(), da * db));
    }
    let out = match keep {
        Side::A => CMatrix::from_fn(da, da, |i, j| {
            (0..db).map(|k| m[(i * db + k, j * db + k)]).sum()
        }),
        Side::B => CMatrix::from_fn(db, db, |i, j| {
            (0..da).map(|k| m[(k * db + i, k * db + j)]).sum()
        }),
    };
    Ok(out)
}

/// A validated two-qubit density matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoQubitState {
    rho: DensityMatrix,
}

impl TwoQubitState {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if matrix.nrows() != 4 || matrix.ncols() != 4 {
            return Err(Error::DimensionMismatch(matrix.nrows(), 4));
        }
        Ok(Self {
            rho: DensityMatrix::new(matrix)?,
        })
    }

    pub fn from_density(rho: DensityMatrix) -> Result<Self> {
        if rho.dim() != 4 {
            return Err(Error::DimensionMismatch(rho.dim(), 4));
        }
        Ok(Self { rho })
    }

    pub fn pure(psi: &CVector) -> Result<Self> {
        Self::from_density(DensityMatrix::pure(psi)?)
    }

    pub fn product(a: &DensityMatrix, b: &DensityMatrix) -> Result<Self> {
        Self::new(kron(a.matrix(), b.matrix()))
    }

    pub fn maximally_mixed() -> Self {
        Self {
            rho: DensityMatrix::maximally_mixed(4),
        }
    }

    pub fn bell(which: BellState) -> Self {
        Self {
            rho: DensityMatrix::from_trusted(projector(&which.vector())),
        }
    }

    pub(crate) fn from_trusted(matrix: CMatrix) -> Self {
        Self {
            rho: DensityMatrix::from_trusted(matrix),
        }
    }

    pub fn density(&self) -> &DensityMatrix {
        &self.rho
    }

    pub fn matrix(&self) -> &CMatrix {
        self.rho.matrix()
    }

    /// Matrix elements in the Bell basis (Φ+, Φ−, Ψ+, Ψ−).
    pub fn in_bell_basis(&self) -> CMatrix {
        let u = bell_basis_matrix();
        u.adjoint() * self.matrix() * u
    }
}

/// The four Bell states in their canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BellState {
    PhiPlus,
    PhiMinus,
    PsiPlus,
    PsiMinus,
}

impl BellState {
    pub const ALL: [BellState; 4] = [
        BellState::PhiPlus,
        BellState::PhiMinus,
        BellState::PsiPlus,
        BellState::PsiMinus,
    ];

    pub fn vector(self) -> CVector {
        let s = FRAC_1_SQRT_2;
        let amps = match self {
            BellState::PhiPlus => [s, 0.0, 0.0, s],
            BellState::PhiMinus => [s, 0.0, 0.0, -s],
            BellState::PsiPlus => [0.0, s, s, 0.0],
            BellState::PsiMinus => [0.0, s, -s, 0.0],
        };
        CVector::from_iterator(4, amps.into_iter().map(c))
    }
}

/// Unitary whose columns are the Bell states in canonical order.
pub fn bell_basis_matrix() -> CMatrix {
    let mut u = CMatrix::zeros(4, 4);
    for (k, b) in BellState::ALL.iter().enumerate() {
        u.set_column(k, &b.vector());
    }
    u
}

/// Eigenvalues of a Bell-diagonal state, ordered (Φ+, Φ−, Ψ+, Ψ−).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BellDiagonalSpectrum {
    pub phi_plus: f64,
    pub phi_minus: f64,
    pub psi_plus: f64,
    pub psi_minus: f64,
}

impl BellDiagonalSpectrum {
    pub const SUM_TOL: f64 = 1e-12;

    pub fn new(phi_plus: f64, phi_minus: f64, psi_plus: f64, psi_minus: f64) -> Result<Self> {
        let s = Self {
            phi_plus,
            phi_minus,
            psi_plus,
            psi_minus,
        };
        let arr = s.to_array();
        if arr.iter().any(|&x| !x.is_finite() || x < 0.0) {
            return Err(Error::InvalidDistribution(format!(
                "negative or non-finite Bell eigenvalue in {arr:?}"
            )));
        }
        let sum: f64 = arr.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOL {
            return Err(Error::InvalidDistribution(format!(
                "Bell spectrum sums to {sum}"
            )));
        }
        Ok(s)
    }

    pub fn from_array(a: [f64; 4]) -> Result<Self> {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.phi_plus, self.phi_minus, self.psi_plus, self.psi_minus]
    }

    /// H(ÂB̂) of the corresponding state, which is the Shannon entropy of the spectrum.
    pub fn entropy(&self) -> f64 {
        shannon_entropy(&self.to_array())
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.to_array()
            .iter()
            .zip(other.to_array())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn to_state(&self) -> TwoQubitState {
        let u = bell_basis_matrix();
        let d = CMatrix::from_diagonal(&CVector::from_iterator(
            4,
            self.to_array().into_iter().map(c),
        ));
        TwoQubitState::from_trusted(&u * d * u.adjoint())
    }
}

/// Reduced state of one qubit.
pub fn partial_trace(state: &TwoQubitState, keep: Side) -> Result<DensityMatrix> {
    let m = partial_trace_dims(state.matrix(), (2, 2), keep)?;
    DensityMatrix::new(m)
}

/// Von Neumann entropy in bits.
pub fn von_neumann_entropy(rho: &DensityMatrix) -> Result<f64> {
    Ok(shannon_entropy(&rho.eigenvalues()?))
}

/// H(Â|B̂) = H(ÂB̂) − H(B̂), in bits.
pub fn conditional_entropy(state: &TwoQubitState) -> Result<f64> {
    let joint = von_neumann_entropy(state.density())?;
    let marginal = von_neumann_entropy(&partial_trace(state, Side::B)?)?;
    Ok(joint - marginal)
}

const FIDELITY_CUTOFF: f64 = 1e-13;

/// Uhlmann fidelity F(ρ, σ) = ‖√ρ √σ‖₁².
pub fn fidelity(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch(rho.dim(), sigma.dim()));
    }
    let sr = psd_sqrt(rho.matrix(), FIDELITY_CUTOFF)?;
    let ss = psd_sqrt(sigma.matrix(), FIDELITY_CUTOFF)?;
    let trace_norm: f64 = (sr * ss).singular_values().iter().sum();
    Ok((trace_norm * trace_norm).clamp(0.0, 1.0))
}

/// Average of (U⊗U) ρ (U⊗U)† over U ∈ {I, σx, σy, σz}.
pub fn twirl(state: &TwoQubitState) -> TwoQubitState {
    let paulis = [identity(2), pauli_x(), pauli_y(), pauli_z()];
    let mut acc = CMatrix::zeros(4, 4);
    for u in &paulis {
        let uu = kron(u, u);
        acc += &uu * state.matrix() * uu.adjoint();
    }
    TwoQubitState::from_trusted(acc.unscale(4.0))
}

/// Largest off-diagonal magnitude in the Bell basis.
pub fn bell_off_diagonal(state: &TwoQubitState) -> f64 {
    let m = state.in_bell_basis();
    let mut worst = 0.0_f64;
    for i in 0..4 {
        for j in 0..4 {
            if i != j {
                worst = worst.max(m[(i, j)].norm());
            }
        }
    }
    worst
}

/// Bell-basis diagonal, whether or not the state is Bell-diagonal.
pub fn bell_diagonal_entries(state: &TwoQubitState) -> [f64; 4] {
    let m = state.in_bell_basis();
    [m[(0, 0)].re, m[(1, 1)].re, m[(2, 2)].re, m[(3, 3)].re]
}

/// Spectrum of a Bell-diagonal state; rejects states with Bell-basis coherences.
pub fn bell_spectrum(state: &TwoQubitState) -> Result<BellDiagonalSpectrum> {
    let off = bell_off_diagonal(state);
    if off > STATE_TOL {
        return Err(Error::NotBellDiagonal(off));
    }
    let mut d = bell_diagonal_entries(state);
    for x in d.iter_mut() {
        if *x < -STATE_TOL {
            return Err(Error::NotPositive(*x));
        }
        *x = x.max(0.0);
    }
    let sum: f64 = d.iter().sum();
    for x in d.iter_mut() {
        *x /= sum;
    }
    BellDiagonalSpectrum::from_array(d)
}

/// (1 − ξ)|Φ+⟩⟨Φ+| + ξ I/4.
pub fn werner_state(xi: f64) -> Result<TwoQubitState> {
    crate::error::check_range("xi", xi, 0.0, 1.0, "[0, 1]")?;
    let phi = projector(&BellState::PhiPlus.vector());
    let m = phi.scale(1.0 - xi) + identity(4).scale(xi / 4.0);
    TwoQubitState::new(m)
}

/// Haar-ish random mixed state from a Ginibre matrix of the given rank.
pub fn random_density<R: Rng + ?Sized>(rng: &mut R, dim: usize, rank: usize) -> DensityMatrix {
    let mut gaussian = || {
        // Box-Muller
        let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
        let u2: f64 = rng.random();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    };
    let g = CMatrix::from_fn(dim, rank.max(1), |_, _| {
        Complex::new(gaussian(), gaussian())
    });
    let m = &g * g.adjoint();
    let tr = m.trace().re;
    DensityMatrix::from_trusted(m.unscale(tr))
}

pub fn random_two_qubit_state<R: Rng + ?Sized>(rng: &mut R) -> TwoQubitState {
    TwoQubitState {
        rho: random_density(rng, 4, 4),
    }
}

/// H(Â|B̂K) of Σ_k p_k |k⟩⟨k| ⊗ ρ_k, evaluated on the full classical-quantum matrix.
pub fn cq_conditional_entropy(parts: &[(f64, TwoQubitState)]) -> Result<f64> {
    let k = parts.len();
    let total: f64 = parts.iter().map(|(p, _)| p).sum();
    if k == 0 || parts.iter().any(|(p, _)| *p < 0.0) || (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidDistribution(format!(
            "side-information weights sum to {total}"
        )));
    }
    let mut joint = CMatrix::zeros(4 * k, 4 * k);
    for (idx, (p, rho)) in parts.iter().enumerate() {
        joint
            .view_mut((4 * idx, 4 * idx), (4, 4))
            .copy_from(&rho.matrix().scale(*p));
    }
    // Ordering K ⊗ Â ⊗ B̂: tracing out Â leaves K ⊗ B̂.
    let mut kb = CMatrix::zeros(2 * k, 2 * k);
    for i in 0..2 * k {
        for j in 0..2 * k {
            let (ki, bi) = (i / 2, i % 2);
            let (kj, bj) = (j / 2, j % 2);
            kb[(i, j)] = (0..2)
                .map(|a| joint[(ki * 4 + a * 2 + bi, kj * 4 + a * 2 + bj)])
                .sum();
        }
    }
    let h_joint = shannon_entropy(&clamp_spectrum(&hermitian_eigen(&joint).0)?);
    let h_kb = shannon_entropy(&clamp_spectrum(&hermitian_eigen(&kb).0)?);
    Ok(h_joint - h_kb)
}

/// Random unitary from the eigenbasis of a random density matrix.
pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> CMatrix {
    let g = random_density(rng, dim, dim);
    hermitian_eigen(g.matrix()).1
}

/// Random reflection with `plus` eigenvalues equal to +1.
pub fn random_observable<R: Rng + ?Sized>(rng: &mut R, dim: usize, plus: usize) -> Observable {
    let u = random_unitary(rng, dim);
    let d = CMatrix::from_diagonal(&CVector::from_iterator(
        dim,
        (0..dim).map(|k| c(if k < plus { 1.0 } else { -1.0 })),
    ));
    Observable {
        matrix: &u * d * u.adjoint(),
    }
}

/// A ±1-valued binary observable: Hermitian with M² = I.
#[derive(Debug, Clone, PartialEq)]
pub struct Observable {
    matrix: CMatrix,
}

impl Observable {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::DimensionMismatch(matrix.nrows(), matrix.ncols()));
        }
        let herm = hermiticity_defect(&matrix);
        if herm > STATE_TOL {
            return Err(Error::NotHermitian(herm));
        }
        let d = matrix.nrows();
        let sq = &matrix * &matrix - identity(d);
        let defect = sq.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if defect > STATE_TOL {
            return Err(Error::NotReflection(defect));
        }
        Ok(Self { matrix })
    }

    pub fn identity(d: usize) -> Self {
        Self {
            matrix: identity(d),
        }
    }

    pub fn sigma_x() -> Self {
        Self { matrix: pauli_x() }
    }

    pub fn sigma_z() -> Self {
        Self { matrix: pauli_z() }
    }

    /// cos θ σz + sin θ σx.
    pub fn in_xz_plane(theta: f64) -> Self {
        Self {
            matrix: pauli_z().scale(theta.cos()) + pauli_x().scale(theta.sin()),
        }
    }

    pub fn negated(&self) -> Self {
        Self {
            matrix: -self.matrix.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    /// Projector onto outcome `bit` (0 ↔ eigenvalue +1, 1 ↔ eigenvalue −1).
    pub fn projector(&self, bit: u8) -> CMatrix {
        let d = self.dim();
        let sign = if bit == 0 { 1.0 } else { -1.0 };
        (identity(d) + self.matrix.scale(sign)).unscale(2.0)
    }

    /// Conjugates by an isometry, i.e. restricts to the span of its columns.
    pub fn restrict(&self, isometry: &CMatrix) -> CMatrix {
        isometry.adjoint() * &self.matrix * isometry
    }
}

/// One two-dimensional block in the simultaneous block form of two reflections.
#[derive(Debug, Clone, PartialEq)]
pub struct JordanBlock {
    /// Relative angle in [0, π]; the product of the restricted observables has trace 2·cos(angle).
    pub angle: f64,
    /// Orthonormal vectors spanning the block. When `canonical` holds, obs0 acts
    /// as σz and obs1 as cos(angle)σz + sin(angle)σx in this basis.
    pub basis: [CVector; 2],
    /// False for blocks assembled from two one-dimensional invariant lines on
    /// which obs0 has equal signs, where no σz form exists.
    pub canonical: bool,
}

impl JordanBlock {
    /// The d×2 isometry whose columns are the block basis.
    pub fn isometry(&self) -> CMatrix {
        let d = self.basis[0].len();
        let mut v = CMatrix::zeros(d, 2);
        v.set_column(0, &self.basis[0]);
        v.set_column(1, &self.basis[1]);
        v
    }

    pub fn projector(&self) -> CMatrix {
        let v = self.isometry();
        &v * v.adjoint()
    }
}

const CLUSTER_TOL: f64 = 1e-8;

fn eigen_clusters(values: &[f64]) -> Vec<(f64, Vec<usize>)> {
    let mut clusters: Vec<(f64, Vec<usize>)> = Vec::new();
    for (k, &v) in values.iter().enumerate() {
        match clusters.last_mut() {
            Some((anchor, members)) if (v - *anchor).abs() <= CLUSTER_TOL => members.push(k),
            _ => clusters.push((v, vec![k])),
        }
    }
    for (anchor, members) in clusters.iter_mut() {
        *anchor = members.iter().map(|&k| values[k]).sum::<f64>() / members.len() as f64;
    }
    clusters
}

fn columns(m: &CMatrix, idx: &[usize]) -> CMatrix {
    let mut out = CMatrix::zeros(m.nrows(), idx.len());
    for (col, &k) in idx.iter().enumerate() {
        out.set_column(col, &m.column(k));
    }
    out
}

/// Simultaneous 2×2 block decomposition of two reflections on an even-dimensional space.
///
/// The blocks are read off the spectral decomposition of (obs0·obs1 + obs1·obs0)/2,
/// which commutes with both observables and equals cos(angle)·I on each block.
/// When obs1 = ±obs0 on an eigenspace the obs0 eigenbasis is used; lines of equal
/// obs0 sign that cannot be paired into a σz block are joined into non-canonical blocks.
pub fn jordan_blocks(obs0: &Observable, obs1: &Observable) -> Result<Vec<JordanBlock>> {
    let d = obs0.dim();
    if obs1.dim() != d {
        return Err(Error::DimensionMismatch(d, obs1.dim()));
    }
    if d % 2 != 0 {
        return Err(Error::OddDimension(d));
    }
    if d > MAX_LOCAL_DIM {
        return Err(Error::InvalidParameters(format!(
            "local dimension {d} exceeds the supported maximum {MAX_LOCAL_DIM}"
        )));
    }
    let a0 = obs0.matrix();
    let a1 = obs1.matrix();
    let anti = (a0 * a1 + a1 * a0).scale(0.5);
    let (values, vectors) = hermitian_eigen(&anti);

    let mut blocks = Vec::with_capacity(d / 2);
    // (obs0 sign, obs1 sign, vector) for one-dimensional invariant lines.
    let mut leftovers: Vec<(f64, f64, CVector)> = Vec::new();

    for (cos, members) in eigen_clusters(&values) {
        let q = columns(&vectors, &members);
        let restricted = obs0.restrict(&q);
        let (signs, local) = hermitian_eigen(&restricted);
        let plus: Vec<CVector> = signs
            .iter()
            .enumerate()
            .filter(|(_, &s)| s > 0.0)
            .map(|(k, _)| &q * local.column(k))
            .collect();
        let minus: Vec<CVector> = signs
            .iter()
            .enumerate()
            .filter(|(_, &s)| s <= 0.0)
            .map(|(k, _)| &q * local.column(k))
            .collect();

        if cos.abs() < 1.0 - 1e-9 {
            let cos = cos.clamp(-1.0, 1.0);
            let angle = cos.acos();
            let sin = angle.sin();
            if plus.len() != minus.len() {
                return Err(Error::Numerical(format!(
                    "unbalanced eigenspace at cos = {cos}: {} vs {}",
                    plus.len(),
                    minus.len()
                )));
            }
            for v in plus {
                let w = (a1 * &v - v.scale(cos)).unscale(sin);
                blocks.push(JordanBlock {
                    angle,
                    basis: [v, w],
                    canonical: true,
                });
            }
        } else {
            let angle = if cos > 0.0 { 0.0 } else { std::f64::consts::PI };
            let obs1_sign = if cos > 0.0 { 1.0 } else { -1.0 };
            let pairs = plus.len().min(minus.len());
            let mut plus = plus.into_iter();
            let mut minus = minus.into_iter();
            for _ in 0..pairs {
                let v = plus.next().expect("counted");
                let w = minus.next().expect("counted");
                blocks.push(JordanBlock {
                    angle,
                    basis: [v, w],
                    canonical: true,
                });
            }
            leftovers.extend(plus.map(|v| (1.0, obs1_sign, v)));
            leftovers.extend(minus.map(|v| (-1.0, -obs1_sign, v)));
        }
    }

    // Lines pair into blocks whose restricted observables are diagonal ±1 matrices.
    leftovers.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut it = leftovers.into_iter();
    while let (Some((s0, t0, v)), Some((s1, t1, w))) = (it.next(), it.next()) {
        let tr = s0 * t0 + s1 * t1;
        blocks.push(JordanBlock {
            angle: (tr / 2.0).clamp(-1.0, 1.0).acos(),
            basis: [v, w],
            canonical: s0 > 0.0 && s1 < 0.0 && (t0 - s0 * tr / 2.0).abs() < 1e-12,
        });
    }

    if blocks.len() * 2 != d {
        return Err(Error::Numerical(format!(
            "found {} blocks for dimension {d}",
            blocks.len()
        )));
    }
    Ok(blocks)
}

/// Block-diagonal reflections with obs0 = ⊕σz and obs1 = ⊕(cos θ σz + sin θ σx).
pub fn block_observables(angles: &[f64]) -> (Observable, Observable) {
    let d = 2 * angles.len();
    let mut a0 = CMatrix::zeros(d, d);
    let mut a1 = CMatrix::zeros(d, d);
    for (k, &theta) in angles.iter().enumerate() {
        a0.view_mut((2 * k, 2 * k), (2, 2)).copy_from(&pauli_z());
        a1.view_mut((2 * k, 2 * k), (2, 2))
            .copy_from(Observable::in_xz_plane(theta).matrix());
    }
    (Observable { matrix: a0 }, Observable { matrix: a1 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use proptest::prelude::{any, prop_assert, prop_assert_eq, proptest};

    fn reconstruct(blocks: &[JordanBlock], which: usize) -> CMatrix {
        let d = blocks[0].basis[0].len();
        let mut m = CMatrix::zeros(d, d);
        for b in blocks {
            let v = b.isometry();
            let local = if which == 0 {
                pauli_z()
            } else {
                Observable::in_xz_plane(b.angle).matrix().clone()
            };
            m += &v * local * v.adjoint();
        }
        m
    }

    proptest! {
        #[test]
        fn twirl_is_idempotent_and_keeps_bell_diagonal(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rho = random_two_qubit_state(&mut rng);
            let once = twirl(&rho);
            let twice = twirl(&once);
            prop_assert!(max_diff(once.matrix(), twice.matrix()) < 1e-12);
            prop_assert!(bell_off_diagonal(&once) < 1e-12);
            let before = bell_diagonal_entries(&rho);
            let after = bell_diagonal_entries(&once);
            for k in 0..4 {
                prop_assert!((before[k] - after[k]).abs() < 1e-12);
            }
        }

        #[test]
        fn conditional_entropy_in_range(seed in any::<u64>(), rank in 1usize..=4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rho = TwoQubitState::from_density(random_density(&mut rng, 4, rank)).unwrap();
            let h = conditional_entropy(&rho).unwrap();
            prop_assert!((-1.0 - 1e-9..=1.0 + 1e-9).contains(&h));
        }

        #[test]
        fn jordan_blocks_are_complete(seed in any::<u64>(), half in 1usize..=3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = 2 * half;
            let a0 = random_observable(&mut rng, d, half);
            let a1 = random_observable(&mut rng, d, half);
            let blocks = jordan_blocks(&a0, &a1).unwrap();
            prop_assert_eq!(blocks.len(), half);
            let mut total = CMatrix::zeros(d, d);
            for b in &blocks {
                total += b.projector();
                let r0 = a0.restrict(&b.isometry());
                let r1 = a1.restrict(&b.isometry());
                let tr = (&r0 * &r1).trace().re;
                prop_assert!((tr - 2.0 * b.angle.cos()).abs() < 1e-8);
                prop_assert!(b.canonical);
            }
            prop_assert!(max_diff(&total, &identity(d)) < 1e-10);
            prop_assert!(max_diff(&reconstruct(&blocks, 0), a0.matrix()) < 1e-8);
            prop_assert!(max_diff(&reconstruct(&blocks, 1), a1.matrix()) < 1e-8);
        }

        #[test]
        fn jordan_blocks_handle_unbalanced_signatures(seed in any::<u64>(), plus in 0usize..=4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a0 = random_observable(&mut rng, 4, plus);
            let a1 = random_observable(&mut rng, 4, 2);
            let blocks = jordan_blocks(&a0, &a1).unwrap();
            let mut total = CMatrix::zeros(4, 4);
            for b in &blocks {
                total += b.projector();
                let r0 = a0.restrict(&b.isometry());
                let r1 = a1.restrict(&b.isometry());
                prop_assert!(max_diff(&(&r0 * &r0), &identity(2)) < 1e-8);
                prop_assert!(max_diff(&(&r1 * &r1), &identity(2)) < 1e-8);
                prop_assert!(((&r0 * &r1).trace().re - 2.0 * b.angle.cos()).abs() < 1e-8);
            }
            prop_assert!(max_diff(&total, &identity(4)) < 1e-10);
        }

        #[test]
        fn twirl_decouples_side_information(seed in any::<u64>(), k in 1usize..=4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 0.05).collect();
            let sum: f64 = raw.iter().sum();
            let parts: Vec<(f64, TwoQubitState)> = raw
                .iter()
                .map(|w| (w / sum, twirl(&random_two_qubit_state(&mut rng))))
                .collect();
            let mut average = 0.0;
            for (p, rho) in &parts {
                prop_assert!(bell_off_diagonal(rho) < 1e-12);
                average += p * conditional_entropy(rho).unwrap();
            }
            let joint = cq_conditional_entropy(&parts).unwrap();
            prop_assert!((joint - average).abs() < 1e-9);
        }
    }

    fn max_diff(a: &CMatrix, b: &CMatrix) -> f64 {
        (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn partial_trace_examples() {
        let phi = TwoQubitState::bell(BellState::PhiPlus);
        let rb = partial_trace(&phi, Side::B).unwrap();
        assert!(max_diff(rb.matrix(), &identity(2).unscale(2.0)) < 1e-14);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_density(&mut rng, 2, 2);
        let b = random_density(&mut rng, 2, 2);
        let prod = TwoQubitState::product(&a, &b).unwrap();
        let ra = partial_trace(&prod, Side::A).unwrap();
        assert!(max_diff(ra.matrix(), a.matrix()) < 1e-12);

        let w = werner_state(0.3).unwrap();
        let wb = partial_trace(&w, Side::B).unwrap();
        assert!(max_diff(wb.matrix(), &identity(2).unscale(2.0)) < 1e-14);
    }

    #[test]
    fn rejects_unnormalised_input() {
        let m = identity(4).unscale(2.0);
        assert!(matches!(TwoQubitState::new(m), Err(Error::InvalidTrace(_))));
        let mut m = identity(4).unscale(4.0);
        m[(0, 1)] = c(0.3);
        assert!(matches!(DensityMatrix::new(m), Err(Error::NotHermitian(_))));
        let neg = CMatrix::from_diagonal(&CVector::from_vec(vec![c(1.2), c(-0.2)]));
        assert!(matches!(
            DensityMatrix::new(neg),
            Err(Error::NotPositive(_))
        ));
    }

    #[test]
    fn entropy_examples() {
        let phi = TwoQubitState::bell(BellState::PsiMinus);
        assert!(von_neumann_entropy(phi.density()).unwrap().abs() < 1e-12);
        let mixed = DensityMatrix::maximally_mixed(4);
        assert!((von_neumann_entropy(&mixed).unwrap() - 2.0).abs() < 1e-12);
        // −0.625 log 0.625 − 3·0.125 log 0.125
        let w = werner_state(0.5).unwrap();
        assert!((von_neumann_entropy(w.density()).unwrap() - 1.548_794_940_695_398).abs() < 1e-9);
    }

    #[test]
    fn conditional_entropy_examples() {
        for b in BellState::ALL {
            let s = TwoQubitState::bell(b);
            assert!((conditional_entropy(&s).unwrap() + 1.0).abs() < 1e-12);
        }
        let mixed = TwoQubitState::maximally_mixed();
        assert!((conditional_entropy(&mixed).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fidelity_examples() {
        let phi = TwoQubitState::bell(BellState::PhiPlus);
        let mixed = TwoQubitState::maximally_mixed();
        assert!((fidelity(phi.density(), phi.density()).unwrap() - 1.0).abs() < 1e-10);
        assert!((fidelity(phi.density(), mixed.density()).unwrap() - 0.25).abs() < 1e-10);
        let psi = TwoQubitState::bell(BellState::PsiMinus);
        assert!(fidelity(phi.density(), psi.density()).unwrap().abs() < 1e-10);
        let q = DensityMatrix::maximally_mixed(2);
        assert!(matches!(
            fidelity(phi.density(), &q),
            Err(Error::DimensionMismatch(4, 2))
        ));
    }

    #[test]
    fn fidelity_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let a = random_density(&mut rng, 4, 4);
            let b = random_density(&mut rng, 4, 2);
            let f1 = fidelity(&a, &b).unwrap();
            let f2 = fidelity(&b, &a).unwrap();
            assert!((f1 - f2).abs() < 1e-10, "{f1} vs {f2}");
            assert!((fidelity(&a, &a).unwrap() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn twirl_examples() {
        let phi = TwoQubitState::bell(BellState::PhiPlus);
        assert!(max_diff(twirl(&phi).matrix(), phi.matrix()) < 1e-14);
        let mixed = TwoQubitState::maximally_mixed();
        assert!(max_diff(twirl(&mixed).matrix(), mixed.matrix()) < 1e-14);

        let zero = TwoQubitState::pure(&ket(&[c(1.0), c(0.0), c(0.0), c(0.0)])).unwrap();
        let spec = bell_spectrum(&twirl(&zero)).unwrap();
        assert!(spec.max_abs_diff(&BellDiagonalSpectrum::new(0.5, 0.5, 0.0, 0.0).unwrap()) < 1e-14);
    }

    #[test]
    fn bell_spectrum_examples() {
        let psi = TwoQubitState::bell(BellState::PsiMinus);
        assert_eq!(
            bell_spectrum(&psi)
                .unwrap()
                .to_array()
                .map(|x| (x * 1e12).round() / 1e12),
            [0.0, 0.0, 0.0, 1.0]
        );
        let mixed = TwoQubitState::maximally_mixed();
        assert!(
            bell_spectrum(&mixed)
                .unwrap()
                .max_abs_diff(&BellDiagonalSpectrum::new(0.25, 0.25, 0.25, 0.25).unwrap())
                < 1e-14
        );
        let zero = TwoQubitState::pure(&ket(&[c(1.0), c(0.0), c(0.0), c(0.0)])).unwrap();
        match bell_spectrum(&zero) {
            Err(Error::NotBellDiagonal(m)) => assert!((m - 0.5).abs() < 1e-12),
            other => panic!("expected NotBellDiagonal, got {other:?}"),
        }
    }

    #[test]
    fn werner_examples() {
        let w0 = werner_state(0.0).unwrap();
        assert!(
            max_diff(
                w0.matrix(),
                TwoQubitState::bell(BellState::PhiPlus).matrix()
            ) < 1e-15
        );
        let w1 = werner_state(1.0).unwrap();
        assert!(max_diff(w1.matrix(), TwoQubitState::maximally_mixed().matrix()) < 1e-15);
        let s = bell_spectrum(&werner_state(0.5).unwrap()).unwrap();
        assert!(
            s.max_abs_diff(&BellDiagonalSpectrum::new(0.625, 0.125, 0.125, 0.125).unwrap()) < 1e-14
        );
        assert!(werner_state(1.5).is_err());
        assert!(werner_state(-0.1).is_err());
    }

    #[test]
    fn jordan_examples() {
        let blocks = jordan_blocks(&Observable::sigma_z(), &Observable::sigma_x()).unwrap();
        assert_eq!(blocks.len(), 1);
        assert!((blocks[0].angle - std::f64::consts::FRAC_PI_2).abs() < 1e-10);

        let blocks = jordan_blocks(&Observable::sigma_z(), &Observable::sigma_z()).unwrap();
        assert_eq!(blocks.len(), 1);
        assert!(blocks[0].angle.abs() < 1e-10);
        assert!(blocks[0].canonical);

        let (a0, a1) = block_observables(&[0.3, 1.2]);
        let blocks = jordan_blocks(&a0, &a1).unwrap();
        let mut angles: Vec<f64> = blocks.iter().map(|b| b.angle).collect();
        angles.sort_by(f64::total_cmp);
        assert!((angles[0] - 0.3).abs() < 1e-8);
        assert!((angles[1] - 1.2).abs() < 1e-8);
    }

    #[test]
    fn jordan_errors() {
        let three = Observable::identity(3);
        assert!(matches!(
            jordan_blocks(&three, &three),
            Err(Error::OddDimension(3))
        ));
        let bad = CMatrix::from_diagonal(&CVector::from_vec(vec![c(1.0), c(0.5)]));
        assert!(matches!(Observable::new(bad), Err(Error::NotReflection(_))));
        assert!(matches!(
            jordan_blocks(&Observable::sigma_z(), &Observable::identity(4)),
            Err(Error::DimensionMismatch(2, 4))
        ));
    }

    #[test]
    fn jordan_handles_degenerate_pairs() {
        let id = Observable::identity(2);
        let blocks = jordan_blocks(&id, &id).unwrap();
        assert_eq!(blocks.len(), 1);
        assert!(!blocks[0].canonical);
        assert!(blocks[0].angle.abs() < 1e-12);

        let blocks = jordan_blocks(&id, &Observable::sigma_z()).unwrap();
        assert_eq!(blocks.len(), 1);
        assert!((blocks[0].angle - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        let proj = blocks[0].projector();
        assert!(max_diff(&proj, &identity(2)) < 1e-12);
    }
}
