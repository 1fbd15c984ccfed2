//! Finite-dimensional complex linear algebra: state vectors, operators,
//! configuration observables and exact unitary propagation.

use std::collections::BTreeSet;
use std::fmt;

use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Max entry of `A - A^dagger` tolerated for an operator to count as Hermitian,
/// scaled by `max(1, max |A_ij|)`.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Default relative gap below which eigenvalues are merged into one sector.
pub const DEFAULT_CLUSTER_TOL: f64 = 1e-8;
/// Default cap on the Hilbert-space dimension of dense models.
pub const DEFAULT_DIM_CAP: usize = 4096;
/// Tolerance on `| ||psi|| - 1 |` for physical states.
pub const NORM_TOL: f64 = 1e-10;

pub(crate) const ZERO: C64 = Complex { re: 0.0, im: 0.0 };
pub(crate) const ONE: C64 = Complex { re: 1.0, im: 0.0 };

/// Largest entry magnitude of a matrix (0 for empty matrices).
pub fn max_entry(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn hermiticity_defect(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut defect = 0.0_f64;
    for i in 0..n {
        for j in i..n {
            defect = defect.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    defect
}

#[derive(Clone, PartialEq)]
pub struct StateVector {
    amplitudes: CVector,
}

impl StateVector {
    /// Wraps raw amplitudes; no normalisation is enforced.
    pub fn new(amplitudes: CVector) -> Self {
        Self { amplitudes }
    }

    pub fn from_slice(amplitudes: &[C64]) -> Self {
        Self::new(CVector::from_column_slice(amplitudes))
    }

    pub fn from_real(amplitudes: &[f64]) -> Self {
        Self::new(CVector::from_iterator(
            amplitudes.len(),
            amplitudes.iter().map(|&x| Complex::new(x, 0.0)),
        ))
    }

    /// Rescales `amplitudes` to unit norm.
    pub fn normalized(amplitudes: CVector) -> Result<Self> {
        let norm = amplitudes.norm();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::domain(format!("cannot normalise vector of norm {norm}")));
        }
        Ok(Self::new(amplitudes.unscale(norm)))
    }

    pub fn basis(dim: usize, index: usize) -> Self {
        let mut v = CVector::zeros(dim);
        v[index] = ONE;
        Self::new(v)
    }

    /// Haar-random unit vector.
    pub fn random<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        let v = CVector::from_fn(dim, |_, _| {
            Complex::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
        });
        Self::normalized(v).expect("gaussian vector has positive norm")
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> CVector {
        self.amplitudes
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    pub fn norm_squared(&self) -> f64 {
        self.amplitudes.norm_squared()
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm() - 1.0).abs() <= NORM_TOL
    }

    pub fn renormalized(&self) -> Result<Self> {
        Self::normalized(self.amplitudes.clone())
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &StateVector) -> C64 {
        self.amplitudes.dotc(&other.amplitudes)
    }

    pub fn distance(&self, other: &StateVector) -> f64 {
        (&self.amplitudes - &other.amplitudes).norm()
    }

    pub(crate) fn check_dim(&self, dim: usize) -> Result<()> {
        if self.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: self.dim(),
            });
        }
        Ok(())
    }
}

impl fmt::Debug for StateVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.amplitudes.iter()).finish()
    }
}

/// Dense square operator with a cached hermiticity flag.
#[derive(Clone)]
pub struct Operator {
    matrix: CMatrix,
    hermitian: bool,
}

impl Operator {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::domain(format!(
                "operator matrix must be square, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let scale = max_entry(&matrix).max(1.0);
        let hermitian = hermiticity_defect(&matrix) <= HERMITIAN_TOL * scale;
        Ok(Self { matrix, hermitian })
    }

    /// Like [`Operator::new`] but rejects non-Hermitian input.
    pub fn hermitian(matrix: CMatrix) -> Result<Self> {
        let op = Self::new(matrix)?;
        op.require_hermitian()?;
        Ok(op)
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            matrix: CMatrix::zeros(dim, dim),
            hermitian: true,
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: CMatrix::identity(dim, dim),
            hermitian: true,
        }
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = CMatrix::zeros(n, n);
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = Complex::new(v, 0.0);
        }
        Self {
            matrix: m,
            hermitian: true,
        }
    }

    pub fn from_real(rows: usize, data: &[f64]) -> Result<Self> {
        if data.len() != rows * rows {
            return Err(Error::domain("real matrix data has wrong length"));
        }
        Self::new(CMatrix::from_row_iterator(
            rows,
            rows,
            data.iter().map(|&x| Complex::new(x, 0.0)),
        ))
    }

    /// Random Hermitian matrix with complex Gaussian entries.
    pub fn random_hermitian<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        let a = CMatrix::from_fn(dim, dim, |_, _| {
            Complex::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
        });
        let h = (&a + a.adjoint()).scale(0.5);
        Self {
            matrix: h,
            hermitian: true,
        }
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

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn require_hermitian(&self) -> Result<()> {
        if self.hermitian {
            Ok(())
        } else {
            Err(Error::NotHermitian(hermiticity_defect(&self.matrix)))
        }
    }

    pub fn adjoint(&self) -> Self {
        Self {
            matrix: self.matrix.adjoint(),
            hermitian: self.hermitian,
        }
    }

    pub fn apply(&self, psi: &StateVector) -> Result<StateVector> {
        psi.check_dim(self.dim())?;
        Ok(StateVector::new(&self.matrix * psi.amplitudes()))
    }

    /// `<psi|A|psi>`.
    pub fn expectation(&self, psi: &StateVector) -> Result<C64> {
        psi.check_dim(self.dim())?;
        Ok(psi.amplitudes().dotc(&(&self.matrix * psi.amplitudes())))
    }

    pub fn compose(&self, other: &Operator) -> Result<Operator> {
        self.check_same_dim(other)?;
        Operator::new(&self.matrix * &other.matrix)
    }

    pub fn add(&self, other: &Operator) -> Result<Operator> {
        self.check_same_dim(other)?;
        Operator::new(&self.matrix + &other.matrix)
    }

    pub fn sub(&self, other: &Operator) -> Result<Operator> {
        self.check_same_dim(other)?;
        Operator::new(&self.matrix - &other.matrix)
    }

    pub fn scale(&self, factor: f64) -> Operator {
        Self {
            matrix: self.matrix.scale(factor),
            hermitian: self.hermitian,
        }
    }

    /// `U A U^dagger`.
    pub fn conjugate_by(&self, u: &Operator) -> Result<Operator> {
        self.check_same_dim(u)?;
        Operator::new(&u.matrix * &self.matrix * u.matrix.adjoint())
    }

    /// Kronecker product `self (x) other`; `other` is the fast index.
    pub fn kron(&self, other: &Operator) -> Operator {
        Self {
            matrix: self.matrix.kronecker(&other.matrix),
            hermitian: self.hermitian && other.hermitian,
        }
    }

    /// Max entry magnitude of `self - other`.
    pub fn max_distance(&self, other: &Operator) -> Result<f64> {
        self.check_same_dim(other)?;
        Ok(max_entry(&(&self.matrix - &other.matrix)))
    }

    pub(crate) fn check_same_dim(&self, other: &Operator) -> Result<()> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(())
    }
}

impl fmt::Debug for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Operator(dim={}, hermitian={})", self.dim(), self.hermitian)
    }
}

/// A configuration record: a human-readable label plus its structured
/// content (occupation numbers or particle positions).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Config {
    pub label: String,
    pub content: Vec<i64>,
}

impl Config {
    pub fn new(label: impl Into<String>, content: Vec<i64>) -> Self {
        Self {
            label: label.into(),
            content,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ConfigurationSpace {
    configs: Vec<Config>,
    component_of: Vec<usize>,
    adjacency: Option<BTreeSet<(usize, usize)>>,
}

impl ConfigurationSpace {
    /// `adjacency` pairs are stored normalised as `(min, max)`.
    pub fn new(
        configs: Vec<Config>,
        component_of: Vec<usize>,
        adjacency: Option<BTreeSet<(usize, usize)>>,
    ) -> Result<Self> {
        if component_of.len() != configs.len() {
            return Err(Error::domain(format!(
                "component map has {} entries for {} configurations",
                component_of.len(),
                configs.len()
            )));
        }
        let adjacency = match adjacency {
            Some(pairs) => {
                let mut normalised = BTreeSet::new();
                for (a, b) in pairs {
                    if a >= configs.len() || b >= configs.len() || a == b {
                        return Err(Error::domain(format!(
                            "adjacency pair ({a}, {b}) does not link two distinct configurations"
                        )));
                    }
                    normalised.insert((a.min(b), a.max(b)));
                }
                Some(normalised)
            }
            None => None,
        };
        Ok(Self {
            configs,
            component_of,
            adjacency,
        })
    }

    /// Every configuration in its own component, no adjacency.
    pub fn discrete(configs: Vec<Config>) -> Self {
        let n = configs.len();
        Self {
            configs,
            component_of: (0..n).collect(),
            adjacency: None,
        }
    }

    pub fn len(&self) -> usize {
        self.configs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configs.is_empty()
    }

    pub fn configs(&self) -> &[Config] {
        &self.configs
    }

    pub fn config(&self, q: usize) -> &Config {
        &self.configs[q]
    }

    pub fn component_of(&self, q: usize) -> usize {
        self.component_of[q]
    }

    pub fn components(&self) -> &[usize] {
        &self.component_of
    }

    pub fn n_components(&self) -> usize {
        self.component_of
            .iter()
            .collect::<BTreeSet<_>>()
            .len()
    }

    pub fn adjacency(&self) -> Option<&BTreeSet<(usize, usize)>> {
        self.adjacency.as_ref()
    }
}

/// Configuration observable: a partition of basis indices into cells, one
/// cell per configuration.
#[derive(Clone, Debug)]
pub struct Pvm {
    cell_of: Vec<usize>,
    cells: Vec<Vec<usize>>,
}

impl Pvm {
    pub fn new(cell_of: Vec<usize>, n_configs: usize) -> Result<Self> {
        let mut cells = vec![Vec::new(); n_configs];
        for (i, &q) in cell_of.iter().enumerate() {
            if q >= n_configs {
                return Err(Error::domain(format!(
                    "basis index {i} assigned to configuration {q} of {n_configs}"
                )));
            }
            cells[q].push(i);
        }
        Ok(Self { cell_of, cells })
    }

    /// One basis index per configuration.
    pub fn trivial(dim: usize) -> Self {
        Self {
            cell_of: (0..dim).collect(),
            cells: (0..dim).map(|i| vec![i]).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.cell_of.len()
    }

    pub fn n_configs(&self) -> usize {
        self.cells.len()
    }

    pub fn cell_of(&self, basis_index: usize) -> usize {
        self.cell_of[basis_index]
    }

    pub fn cell_map(&self) -> &[usize] {
        &self.cell_of
    }

    pub fn cell(&self, q: usize) -> &[usize] {
        &self.cells[q]
    }

    pub fn cells(&self) -> &[Vec<usize>] {
        &self.cells
    }

    pub fn projector(&self, q: usize) -> Operator {
        let n = self.dim();
        let mut m = CMatrix::zeros(n, n);
        for &i in &self.cells[q] {
            m[(i, i)] = ONE;
        }
        Operator {
            matrix: m,
            hermitian: true,
        }
    }

    /// `<psi|P(q)|psi>`.
    pub fn occupation(&self, psi: &StateVector, q: usize) -> f64 {
        self.cells[q]
            .iter()
            .map(|&i| psi.amplitudes()[i].norm_sqr())
            .sum()
    }

    /// `<psi|P(q)|psi>` for every configuration.
    pub fn occupations(&self, psi: &StateVector) -> Vec<f64> {
        let mut out = vec![0.0; self.n_configs()];
        for (i, z) in psi.amplitudes().iter().enumerate() {
            out[self.cell_of[i]] += z.norm_sqr();
        }
        out
    }
}

/// Builds `F = sum_q f(q) P(q)`.
pub fn build_operator_from_config_function<F>(f: F, pvm: &Pvm) -> Result<Operator>
where
    F: Fn(usize) -> Option<f64>,
{
    let mut diag = vec![0.0; pvm.dim()];
    for (q, cell) in pvm.cells().iter().enumerate() {
        if cell.is_empty() {
            continue;
        }
        let value = f(q).ok_or_else(|| {
            Error::domain(format!("configuration function undefined at configuration {q}"))
        })?;
        for &i in cell {
            diag[i] = value;
        }
    }
    Ok(Operator::diagonal(&diag))
}

/// Max entry magnitude of `AB - BA`.
pub fn commutator_norm(a: &Operator, b: &Operator) -> Result<f64> {
    a.check_same_dim(b)?;
    let ab = a.matrix() * b.matrix();
    let ba = b.matrix() * a.matrix();
    Ok(max_entry(&(ab - ba)))
}

/// Spectral decomposition `G = sum_nu nu P_G(nu)` with clustered eigenvalues.
#[derive(Clone, Debug)]
pub struct EigDecomposition {
    eigenvalues: Vec<f64>,
    /// Orthonormal eigenvectors, one matrix of columns per eigenvalue.
    bases: Vec<CMatrix>,
    projectors: Vec<Operator>,
    cluster_threshold: f64,
}

impl EigDecomposition {
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn projectors(&self) -> &[Operator] {
        &self.projectors
    }

    pub fn projector(&self, k: usize) -> &Operator {
        &self.projectors[k]
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn rank(&self, k: usize) -> usize {
        self.bases[k].ncols()
    }

    /// Absolute gap below which eigenvalues were merged.
    pub fn cluster_threshold(&self) -> f64 {
        self.cluster_threshold
    }

    /// Index of the eigenvalue within the clustering threshold of `value`.
    pub fn index_of(&self, value: f64) -> Option<usize> {
        self.eigenvalues
            .iter()
            .position(|&nu| (nu - value).abs() <= self.cluster_threshold.max(1e-12))
    }

    /// `P_G(nu_k) psi`, unnormalised.
    pub fn project(&self, k: usize, psi: &StateVector) -> StateVector {
        let basis = &self.bases[k];
        StateVector::new(basis * (basis.adjoint() * psi.amplitudes()))
    }

    /// `sum_nu nu P_G(nu)`.
    pub fn reconstruct(&self) -> Operator {
        let n = self.projectors.first().map_or(0, Operator::dim);
        let mut m = CMatrix::zeros(n, n);
        for (nu, p) in self.eigenvalues.iter().zip(&self.projectors) {
            m += p.matrix().scale(*nu);
        }
        Operator {
            matrix: m,
            hermitian: true,
        }
    }

    /// Smallest distance between distinct eigenvalues (infinite if only one).
    pub fn min_gap(&self) -> f64 {
        self.eigenvalues
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }
}

/// Eigen-decomposes a Hermitian operator, merging eigenvalues whose sorted
/// neighbours differ by at most `tol * max(1, spectral range)`.
pub fn eigendecompose(g: &Operator, tol: f64) -> Result<EigDecomposition> {
    g.require_hermitian()?;
    let n = g.dim();
    if n == 0 {
        return Err(Error::domain("cannot decompose an empty operator"));
    }
    let sym = (g.matrix() + g.matrix().adjoint()).scale(0.5);
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let lo = eig.eigenvalues[order[0]];
    let hi = eig.eigenvalues[order[n - 1]];
    let threshold = tol * (hi - lo).max(1.0);

    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut last = f64::NEG_INFINITY;
    for &k in &order {
        let lambda = eig.eigenvalues[k];
        if groups.is_empty() || lambda - last > threshold {
            groups.push(vec![k]);
        } else {
            groups.last_mut().expect("nonempty").push(k);
        }
        last = lambda;
    }

    let mut eigenvalues = Vec::with_capacity(groups.len());
    let mut bases = Vec::with_capacity(groups.len());
    let mut projectors = Vec::with_capacity(groups.len());
    for group in groups {
        let mean = group.iter().map(|&k| eig.eigenvalues[k]).sum::<f64>() / group.len() as f64;
        let columns: Vec<CVector> = group
            .iter()
            .map(|&k| eig.eigenvectors.column(k).into_owned())
            .collect();
        let basis = CMatrix::from_columns(&columns);
        let p = &basis * basis.adjoint();
        eigenvalues.push(mean);
        bases.push(basis);
        projectors.push(Operator {
            matrix: p,
            hermitian: true,
        });
    }
    Ok(EigDecomposition {
        eigenvalues,
        bases,
        projectors,
        cluster_threshold: threshold,
    })
}

/// Exact propagator `exp(-iHt/hbar)` from a one-off diagonalisation of `H`.
#[derive(Clone, Debug)]
pub struct Propagator {
    energies: Vec<f64>,
    vectors: CMatrix,
    hbar: f64,
}

impl Propagator {
    pub fn new(h: &Operator, hbar: f64) -> Result<Self> {
        h.require_hermitian()?;
        if !(hbar > 0.0) {
            return Err(Error::domain(format!("hbar must be positive, got {hbar}")));
        }
        let sym = (h.matrix() + h.matrix().adjoint()).scale(0.5);
        let eig = SymmetricEigen::new(sym);
        Ok(Self {
            energies: eig.eigenvalues.iter().copied().collect(),
            vectors: eig.eigenvectors,
            hbar,
        })
    }

    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn apply(&self, psi: &StateVector, t: f64) -> Result<StateVector> {
        psi.check_dim(self.dim())?;
        if !t.is_finite() {
            return Err(Error::domain(format!("propagation time must be finite, got {t}")));
        }
        let mut coeffs = self.vectors.adjoint() * psi.amplitudes();
        for (c, &e) in coeffs.iter_mut().zip(&self.energies) {
            *c *= Complex::from_polar(1.0, -e * t / self.hbar);
        }
        Ok(StateVector::new(&self.vectors * coeffs))
    }

    /// The unitary matrix `exp(-iHt/hbar)`.
    pub fn unitary(&self, t: f64) -> Operator {
        let phases = CVector::from_iterator(
            self.dim(),
            self.energies
                .iter()
                .map(|&e| Complex::from_polar(1.0, -e * t / self.hbar)),
        );
        let scaled = CMatrix::from_fn(self.dim(), self.dim(), |i, j| {
            self.vectors[(i, j)] * phases[j]
        });
        Operator::new(scaled * self.vectors.adjoint()).expect("square")
    }
}

/// `exp(-iHt/hbar) psi` by exact diagonalisation.
pub fn propagate(h: &Operator, psi: &StateVector, t: f64, hbar: f64) -> Result<StateVector> {
    Propagator::new(h, hbar)?.apply(psi, t)
}
