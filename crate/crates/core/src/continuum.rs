//! Bohmian mechanics on a uniform 1D grid.
//!
//! Wavefunctions are spinor-valued on the grid points `x_i = x0 + i dx` and
//! evolve by Crank-Nicolson with the finite-difference Schrödinger
//! Hamiltonian. The velocity field is
//! `v = (hbar/m) Im(sum_s psi_s^* d psi_s) / sum_s |psi_s|^2` with central
//! differences.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{Complex, SymmetricEigen, LU};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::hilbert::{
    commutator_norm, CMatrix, CVector, Config, ConfigurationSpace, Operator, Pvm, StateVector, C64,
    ZERO,
};
use crate::models::{spin_matrices, Model};
use crate::rng::{sample_weighted, stream_rng};
use crate::{Error, Result};

/// Density below which the velocity is undefined.
pub const DENSITY_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    /// Wavefunction vanishes just outside the grid; trajectories reflect.
    Reflecting,
    Periodic,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Grid {
    pub x0: f64,
    pub dx: f64,
    pub n: usize,
}

impl Grid {
    pub fn new(x0: f64, dx: f64, n: usize) -> Result<Self> {
        if n < 3 || !(dx > 0.0) || !x0.is_finite() {
            return Err(Error::domain(format!("invalid grid (x0 {x0}, dx {dx}, n {n})")));
        }
        Ok(Self { x0, dx, n })
    }

    /// Grid symmetric about the origin: `x_i = (i - (n-1)/2) dx`.
    pub fn symmetric(n: usize, dx: f64) -> Result<Self> {
        Self::new(-(n as f64 - 1.0) / 2.0 * dx, dx, n)
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x0 + i as f64 * self.dx
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(|i| self.x(i))
    }

    pub fn x_max(&self) -> f64 {
        self.x(self.n - 1)
    }

    /// Period of a periodic grid.
    pub fn length(&self) -> f64 {
        self.n as f64 * self.dx
    }

    /// Index of the nearest grid point, clamped to the grid.
    pub fn nearest(&self, x: f64) -> usize {
        (((x - self.x0) / self.dx).round().max(0.0) as usize).min(self.n - 1)
    }
}

/// Spinor wavefunction on a grid; value index is `i * spin_dim + s`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridWavefunction {
    pub grid: Grid,
    pub spin_dim: usize,
    pub values: CVector,
    pub time: f64,
}

impl GridWavefunction {
    pub fn new(grid: Grid, spin_dim: usize, values: CVector) -> Result<Self> {
        if spin_dim == 0 || values.len() != grid.n * spin_dim {
            return Err(Error::DimensionMismatch {
                expected: grid.n * spin_dim.max(1),
                found: values.len(),
            });
        }
        Ok(Self {
            grid,
            spin_dim,
            values,
            time: 0.0,
        })
    }

    /// Samples `f(x)` (one entry per spin component) and normalises.
    pub fn from_fn<F: Fn(f64) -> Vec<C64>>(grid: Grid, spin_dim: usize, f: F) -> Result<Self> {
        let mut values = CVector::zeros(grid.n * spin_dim);
        for i in 0..grid.n {
            let v = f(grid.x(i));
            if v.len() != spin_dim {
                return Err(Error::DimensionMismatch {
                    expected: spin_dim,
                    found: v.len(),
                });
            }
            for (s, z) in v.into_iter().enumerate() {
                values[i * spin_dim + s] = z;
            }
        }
        Self::new(grid, spin_dim, values)?.normalized()
    }

    pub fn value(&self, i: usize, s: usize) -> C64 {
        self.values[i * self.spin_dim + s]
    }

    /// `sum_x sum_s |psi_s(x)|^2 dx`.
    pub fn norm_squared(&self) -> f64 {
        self.values.norm_squared() * self.grid.dx
    }

    pub fn normalized(mut self) -> Result<Self> {
        let n = self.norm_squared().sqrt();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::domain("cannot normalise a zero wavefunction"));
        }
        self.values.unscale_mut(n);
        Ok(self)
    }

    /// `sum_s |psi_s(x_i)|^2`.
    pub fn density(&self, i: usize) -> f64 {
        (0..self.spin_dim).map(|s| self.value(i, s).norm_sqr()).sum()
    }

    /// Probability mass per grid point, `|psi(x_i)|^2 dx`.
    pub fn point_masses(&self) -> Vec<f64> {
        (0..self.grid.n).map(|i| self.density(i) * self.grid.dx).collect()
    }

    /// Unit vector in the finite basis (`psi * sqrt(dx)`).
    pub fn to_state_vector(&self) -> StateVector {
        StateVector::new(self.values.scale(self.grid.dx.sqrt()))
    }

    pub fn from_state_vector(grid: Grid, spin_dim: usize, psi: &StateVector) -> Result<Self> {
        Self::new(grid, spin_dim, psi.amplitudes().unscale(grid.dx.sqrt()))
    }

    /// Applies `u` to the spin factor at every point.
    pub fn map_spin(&self, u: &Operator) -> Result<Self> {
        if u.dim() != self.spin_dim {
            return Err(Error::DimensionMismatch {
                expected: self.spin_dim,
                found: u.dim(),
            });
        }
        let mut out = self.clone();
        for i in 0..self.grid.n {
            let block = self.values.rows(i * self.spin_dim, self.spin_dim).into_owned();
            out.values
                .rows_mut(i * self.spin_dim, self.spin_dim)
                .copy_from(&(u.matrix() * block));
        }
        Ok(out)
    }

    /// Multiplies by a global phase.
    pub fn with_phase(&self, theta: f64) -> Self {
        let mut out = self.clone();
        out.values *= Complex::from_polar(1.0, theta);
        out
    }

    /// `(psi(x) + psi(-x)) / 2` and `(psi(x) - psi(-x)) / 2` on a symmetric grid.
    pub fn parity_parts(&self) -> (Self, Self) {
        let mut even = self.clone();
        let mut odd = self.clone();
        let (n, d) = (self.grid.n, self.spin_dim);
        for i in 0..n {
            for s in 0..d {
                let a = self.value(i, s);
                let b = self.value(n - 1 - i, s);
                even.values[i * d + s] = (a + b) * 0.5;
                odd.values[i * d + s] = (a - b) * 0.5;
            }
        }
        (even, odd)
    }
}

#[derive(Clone, Debug)]
pub struct ContinuumModel {
    pub grid: Grid,
    pub mass: f64,
    pub potential: Vec<f64>,
    pub spin_dim: usize,
    /// Hermitian spin matrix added at each grid point.
    pub spin_coupling: Option<Vec<CMatrix>>,
    pub boundary: Boundary,
    pub hbar: f64,
}

impl ContinuumModel {
    pub fn new(grid: Grid, mass: f64, potential: Vec<f64>, boundary: Boundary) -> Result<Self> {
        let m = Self {
            grid,
            mass,
            potential,
            spin_dim: 1,
            spin_coupling: None,
            boundary,
            hbar: 1.0,
        };
        m.validate()?;
        Ok(m)
    }

    /// Adds an internal spin factor of dimension `spin_dim` with an optional
    /// per-point coupling.
    pub fn with_spin(mut self, spin_dim: usize, coupling: Option<Vec<CMatrix>>) -> Result<Self> {
        self.spin_dim = spin_dim;
        self.spin_coupling = coupling;
        self.validate()?;
        Ok(self)
    }

    pub fn with_hbar(mut self, hbar: f64) -> Result<Self> {
        self.hbar = hbar;
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        if !(self.mass > 0.0) || !(self.hbar > 0.0) {
            return Err(Error::domain("mass and hbar must be positive"));
        }
        if self.spin_dim == 0 {
            return Err(Error::domain("spin_dim must be at least 1"));
        }
        if self.potential.len() != self.grid.n || self.potential.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("potential must have one finite value per grid point"));
        }
        if let Some(c) = &self.spin_coupling {
            if c.len() != self.grid.n {
                return Err(Error::domain("spin coupling needs one matrix per grid point"));
            }
            for m in c {
                if m.nrows() != self.spin_dim || m.ncols() != self.spin_dim {
                    return Err(Error::domain("spin coupling matrix has the wrong size"));
                }
                Operator::hermitian(m.clone())?;
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.grid.n * self.spin_dim
    }

    /// Hopping amplitude `hbar^2 / (2 m dx^2)`.
    pub fn hopping(&self) -> f64 {
        self.hbar * self.hbar / (2.0 * self.mass * self.grid.dx * self.grid.dx)
    }

    /// Dense finite-difference Hamiltonian.
    pub fn hamiltonian(&self) -> Operator {
        let (n, d) = (self.grid.n, self.spin_dim);
        let t = self.hopping();
        let mut h = CMatrix::zeros(n * d, n * d);
        for i in 0..n {
            for s in 0..d {
                h[(i * d + s, i * d + s)] = Complex::new(2.0 * t + self.potential[i], 0.0);
            }
            if let Some(c) = &self.spin_coupling {
                for a in 0..d {
                    for b in 0..d {
                        h[(i * d + a, i * d + b)] += c[i][(a, b)];
                    }
                }
            }
        }
        for (i, j) in self.links() {
            for s in 0..d {
                h[(i * d + s, j * d + s)] -= Complex::new(t, 0.0);
                h[(j * d + s, i * d + s)] -= Complex::new(t, 0.0);
            }
        }
        Operator::hermitian(h).expect("finite-difference Hamiltonian is Hermitian")
    }

    /// Nearest-neighbour pairs of grid points.
    fn links(&self) -> Vec<(usize, usize)> {
        let n = self.grid.n;
        let mut links: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
        if self.boundary == Boundary::Periodic {
            links.push((n - 1, 0));
        }
        links
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        let n = self.grid.n;
        let centred = (self.grid.x0 + self.grid.x_max()).abs() <= tol.max(1e-12 * self.grid.dx);
        let v_sym = (0..n).all(|i| (self.potential[i] - self.potential[n - 1 - i]).abs() <= tol);
        let c_sym = self.spin_coupling.as_ref().is_none_or(|c| {
            (0..n).all(|i| crate::hilbert::max_entry(&(&c[i] - &c[n - 1 - i])) <= tol)
        });
        centred && v_sym && c_sym
    }

    /// Reflection `x -> -x` acting on the position factor.
    pub fn parity_operator(&self) -> Operator {
        let (n, d) = (self.grid.n, self.spin_dim);
        let mut p = CMatrix::zeros(n * d, n * d);
        for i in 0..n {
            for s in 0..d {
                p[((n - 1 - i) * d + s, i * d + s)] = Complex::new(1.0, 0.0);
            }
        }
        Operator::hermitian(p).expect("reflection is Hermitian")
    }

    /// Finite model with one configuration per grid point. Hopping between
    /// points becomes the jump part. Observables: `parity` (symmetric
    /// grids) and `sigma_x/y/z` (spin-1/2).
    pub fn to_model(&self) -> Result<Model> {
        let (n, d) = (self.grid.n, self.spin_dim);
        let configs = (0..n)
            .map(|i| Config::new(format!("x={:.6}", self.grid.x(i)), vec![i as i64]))
            .collect();
        let adjacency: BTreeSet<(usize, usize)> = self.links().into_iter().collect();
        let space = ConfigurationSpace::new(configs, vec![0; n], Some(adjacency))?;
        let pvm = Pvm::new((0..n * d).map(|k| k / d).collect(), n)?;
        let mut observables = BTreeMap::new();
        if self.is_symmetric(1e-12) {
            observables.insert("parity".to_string(), self.parity_operator());
        }
        if d == 2 {
            let names = ["sigma_x", "sigma_y", "sigma_z"];
            for (name, s) in names.iter().zip(spin_matrices(2)) {
                observables.insert(name.to_string(), Operator::identity(n).kron(&s.scale(2.0)));
            }
        }
        let name = if self.spin_coupling.is_some() { "continuum-field" } else { "continuum" };
        Model::from_hamiltonian(name, space, pvm, &self.hamiltonian(), observables, self.hbar)
    }

    fn check(&self, psi: &GridWavefunction) -> Result<()> {
        if psi.grid != self.grid || psi.spin_dim != self.spin_dim {
            return Err(Error::domain("wavefunction grid or spin dimension does not match the model"));
        }
        Ok(())
    }
}

/// Crank-Nicolson stepper for a fixed `dt`: solves
/// `(1 + iH dt/2hbar) psi' = (1 - iH dt/2hbar) psi` with a cached LU factorisation.
pub struct CrankNicolson {
    dt: f64,
    lu: LU<C64, nalgebra::Dyn, nalgebra::Dyn>,
    explicit: CMatrix,
    model: ContinuumModel,
}

impl CrankNicolson {
    pub fn new(model: &ContinuumModel, dt: f64) -> Result<Self> {
        if dt == 0.0 || !dt.is_finite() {
            return Err(Error::domain(format!("time step must be finite and nonzero, got {dt}")));
        }
        let h = model.hamiltonian().into_matrix();
        let k = Complex::new(0.0, dt / (2.0 * model.hbar));
        let id = CMatrix::identity(h.nrows(), h.ncols());
        let implicit = &id + &h * k;
        let explicit = &id - &h * k;
        let lu = implicit.lu();
        if !lu.is_invertible() {
            return Err(Error::Numeric("Crank-Nicolson matrix is singular".to_string()));
        }
        Ok(Self {
            dt,
            lu,
            explicit,
            model: model.clone(),
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn step(&self, psi: &GridWavefunction) -> Result<GridWavefunction> {
        self.model.check(psi)?;
        let rhs = &self.explicit * &psi.values;
        let values = self
            .lu
            .solve(&rhs)
            .ok_or_else(|| Error::Numeric("Crank-Nicolson solve failed".to_string()))?;
        Ok(GridWavefunction {
            grid: psi.grid,
            spin_dim: psi.spin_dim,
            values,
            time: psi.time + self.dt,
        })
    }

    /// `psi_0, psi_dt, ..., psi_{n dt}`.
    pub fn snapshots(&self, psi0: &GridWavefunction, n_steps: usize) -> Result<Vec<GridWavefunction>> {
        let mut out = Vec::with_capacity(n_steps + 1);
        out.push(psi0.clone());
        for _ in 0..n_steps {
            let next = self.step(out.last().expect("nonempty"))?;
            out.push(next);
        }
        Ok(out)
    }
}

/// One Crank-Nicolson step (factorises the system every call).
pub fn cn_step(psi: &GridWavefunction, model: &ContinuumModel, dt: f64) -> Result<GridWavefunction> {
    CrankNicolson::new(model, dt)?.step(psi)
}

/// Velocity at every grid point; `None` where the density is below
/// [`DENSITY_FLOOR`].
pub fn velocity_field(psi: &GridWavefunction, model: &ContinuumModel) -> Result<Vec<Option<f64>>> {
    model.check(psi)?;
    let (n, d) = (psi.grid.n, psi.spin_dim);
    let neighbour = |i: usize, s: usize, offset: isize| -> C64 {
        let j = i as isize + offset;
        if j >= 0 && (j as usize) < n {
            psi.value(j as usize, s)
        } else if model.boundary == Boundary::Periodic {
            psi.value(j.rem_euclid(n as isize) as usize, s)
        } else {
            ZERO
        }
    };
    Ok((0..n)
        .map(|i| {
            let rho = psi.density(i);
            if rho < DENSITY_FLOOR {
                return None;
            }
            let current: f64 = (0..d)
                .map(|s| {
                    let deriv = (neighbour(i, s, 1) - neighbour(i, s, -1)) / (2.0 * psi.grid.dx);
                    (psi.value(i, s).conj() * deriv).im
                })
                .sum();
            Some(model.hbar / model.mass * current / rho)
        })
        .collect())
}

/// Velocity fields at consecutive snapshot times, shared by trajectories.
#[derive(Clone, Debug)]
pub struct VelocityHistory {
    pub grid: Grid,
    pub boundary: Boundary,
    pub dt: f64,
    pub t0: f64,
    pub fields: Vec<Vec<Option<f64>>>,
}

impl VelocityHistory {
    pub fn new(snapshots: &[GridWavefunction], model: &ContinuumModel, dt: f64) -> Result<Self> {
        let first = snapshots.first().ok_or_else(|| Error::domain("no snapshots"))?;
        let fields = snapshots
            .par_iter()
            .map(|s| velocity_field(s, model))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            grid: model.grid,
            boundary: model.boundary,
            dt,
            t0: first.time,
            fields,
        })
    }

    /// Linear interpolation of snapshot `k` at `x`.
    fn at(&self, k: usize, x: f64) -> Result<f64> {
        let g = self.grid;
        let time = self.t0 + k as f64 * self.dt;
        let undefined = || Error::UndefinedVelocity { x, time };
        let field = &self.fields[k];
        let u = (x - g.x0) / g.dx;
        let (i, frac) = match self.boundary {
            Boundary::Reflecting => {
                let u = u.clamp(0.0, (g.n - 1) as f64);
                let i = (u.floor() as usize).min(g.n - 2);
                (i, u - i as f64)
            }
            Boundary::Periodic => {
                let u = u.rem_euclid(g.n as f64);
                let i = (u.floor() as usize).min(g.n - 1);
                (i, u - i as f64)
            }
        };
        let j = (i + 1) % g.n;
        let a = field[i].ok_or_else(undefined)?;
        let b = field[j].ok_or_else(undefined)?;
        Ok(a + frac * (b - a))
    }

    fn confine(&self, x: f64) -> f64 {
        let g = self.grid;
        match self.boundary {
            Boundary::Periodic => g.x0 + (x - g.x0).rem_euclid(g.length()),
            Boundary::Reflecting => {
                let (lo, hi) = (g.x0, g.x_max());
                let span = hi - lo;
                let mut y = (x - lo).rem_euclid(2.0 * span);
                if y > span {
                    y = 2.0 * span - y;
                }
                lo + y
            }
        }
    }

    /// Explicit midpoint integration from `x0`; one step per snapshot interval.
    pub fn integrate(&self, x0: f64) -> Result<Vec<f64>> {
        let g = self.grid;
        if !(x0 >= g.x0 && x0 <= g.x_max() + if self.boundary == Boundary::Periodic { g.dx } else { 0.0 }) {
            return Err(Error::domain(format!("starting point {x0} lies outside the grid")));
        }
        let mut xs = Vec::with_capacity(self.fields.len());
        let mut x = x0;
        xs.push(x);
        for k in 0..self.fields.len() - 1 {
            let v0 = self.at(k, x)?;
            let mid = self.confine(x + 0.5 * self.dt * v0);
            let vm = 0.5 * (self.at(k, mid)? + self.at(k + 1, mid)?);
            x = self.confine(x + self.dt * vm);
            xs.push(x);
        }
        Ok(xs)
    }
}

/// Trajectory through `psi_t` snapshots spaced by `dt`.
pub fn integrate_trajectory(
    x0: f64,
    snapshots: &[GridWavefunction],
    model: &ContinuumModel,
    dt: f64,
) -> Result<Vec<f64>> {
    VelocityHistory::new(snapshots, model, dt)?.integrate(x0)
}

/// Draws `n` starting points from `|psi|^2`: a grid point by its mass, then
/// uniformly within its cell.
pub fn sample_initial_positions(psi: &GridWavefunction, n: usize, seed: u64) -> Vec<f64> {
    let masses = psi.point_masses();
    (0..n as u64)
        .map(|k| {
            let mut rng = stream_rng(seed, k);
            let i = sample_weighted(&masses, &mut rng).expect("nonzero wavefunction");
            let mut x = psi.grid.x(i) + (rng.random::<f64>() - 0.5) * psi.grid.dx;
            if i == 0 || i == psi.grid.n - 1 {
                x = x.clamp(psi.grid.x0, psi.grid.x_max());
            }
            x
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct EquivarianceResult {
    pub time: f64,
    pub total_variation: f64,
}

/// Integrates an ensemble started from `|psi_0|^2` and compares the binned
/// positions with `|psi_t|^2` at the requested snapshot indices.
pub fn equivariance_check(
    snapshots: &[GridWavefunction],
    model: &ContinuumModel,
    dt: f64,
    n: usize,
    seed: u64,
    check_steps: &[usize],
) -> Result<Vec<EquivarianceResult>> {
    let history = VelocityHistory::new(snapshots, model, dt)?;
    let starts = sample_initial_positions(&snapshots[0], n, seed);
    let paths = starts
        .par_iter()
        .map(|&x| history.integrate(x))
        .collect::<Result<Vec<_>>>()?;
    check_steps
        .iter()
        .map(|&k| {
            let snap = snapshots
                .get(k)
                .ok_or_else(|| Error::domain(format!("no snapshot {k}")))?;
            let empirical = crate::stats::empirical_distribution(
                paths.iter().map(|p| model.grid.nearest(p[k])),
                model.grid.n,
            );
            Ok(EquivarianceResult {
                time: snap.time,
                total_variation: crate::stats::total_variation(&empirical, &snap.point_masses()),
            })
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct ParityReport {
    /// `||[Pi, H]||` for the discretised Hamiltonian.
    pub commutator_parity_h: f64,
    /// `max_x |v^psi(x) - v^{psi_even}(x)|` over points where both are defined.
    pub max_diff_even: f64,
    pub max_diff_odd: f64,
    pub even_weight: f64,
    pub odd_weight: f64,
    /// Both parity components carry weight.
    pub generic: bool,
}

impl ParityReport {
    pub fn demonstrates(&self, threshold: f64) -> bool {
        self.generic && self.max_diff_even >= threshold && self.max_diff_odd >= threshold
    }
}

/// Weight below which a parity component counts as absent.
const PARITY_WEIGHT_FLOOR: f64 = 1e-10;

fn max_velocity_gap(a: &[Option<f64>], b: &[Option<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .filter_map(|(x, y)| Some((x.as_ref()? - y.as_ref()?).abs()))
        .fold(0.0, f64::max)
}

pub fn parity_counterexample(model: &ContinuumModel, psi: &GridWavefunction) -> Result<ParityReport> {
    model.check(psi)?;
    if !model.is_symmetric(1e-12) {
        return Err(Error::domain("parity counterexample needs a symmetric grid and potential"));
    }
    let commutator_parity_h = commutator_norm(&model.parity_operator(), &model.hamiltonian())?;
    let (even, odd) = psi.parity_parts();
    let (even_weight, odd_weight) = (even.norm_squared(), odd.norm_squared());
    let generic = even_weight > PARITY_WEIGHT_FLOOR && odd_weight > PARITY_WEIGHT_FLOOR;
    let v = velocity_field(psi, model)?;
    let gap = |part: GridWavefunction, weight: f64| -> Result<f64> {
        if weight <= PARITY_WEIGHT_FLOOR {
            return Ok(0.0);
        }
        Ok(max_velocity_gap(&v, &velocity_field(&part.normalized()?, model)?))
    };
    Ok(ParityReport {
        commutator_parity_h,
        max_diff_even: gap(even, even_weight)?,
        max_diff_odd: gap(odd, odd_weight)?,
        even_weight,
        odd_weight,
        generic,
    })
}

/// Symmetric double well `V = a (x^2 - b^2)^2` with reflecting walls.
pub fn double_well(n: usize, dx: f64, a: f64, b: f64) -> Result<ContinuumModel> {
    let grid = Grid::symmetric(n, dx)?;
    let potential = grid.points().map(|x| a * (x * x - b * b).powi(2)).collect();
    ContinuumModel::new(grid, 1.0, potential, Boundary::Reflecting)
}

/// `(phi_even + i phi_odd) / sqrt 2` from Gaussians of width `sigma` at `+-b`.
pub fn gaussian_parity_mix(grid: Grid, b: f64, sigma: f64) -> Result<GridWavefunction> {
    let g = |x: f64| (-(x * x) / (4.0 * sigma * sigma)).exp();
    let even = GridWavefunction::from_fn(grid, 1, |x| vec![Complex::new(g(x - b) + g(x + b), 0.0)])?;
    let odd = GridWavefunction::from_fn(grid, 1, |x| vec![Complex::new(g(x - b) - g(x + b), 0.0)])?;
    let values = (even.values + odd.values * Complex::new(0.0, 1.0)).unscale(std::f64::consts::SQRT_2);
    GridWavefunction::new(grid, 1, values)?.normalized()
}

/// Gaussian packet `exp(-(x-c)^2 / 4 sigma^2 + i k x)` times a spinor.
pub fn gaussian_packet(grid: Grid, centre: f64, sigma: f64, k: f64, spinor: &[C64]) -> Result<GridWavefunction> {
    GridWavefunction::from_fn(grid, spinor.len(), |x| {
        let amp = Complex::from_polar((-(x - centre).powi(2) / (4.0 * sigma * sigma)).exp(), k * x);
        spinor.iter().map(|c| c * amp).collect()
    })
}

/// Lowest eigenstates of the discretised Hamiltonian, sorted by energy.
pub fn lowest_eigenstates(model: &ContinuumModel, count: usize) -> Result<Vec<(f64, GridWavefunction)>> {
    let h = model.hamiltonian().into_matrix();
    let eig = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    order
        .into_iter()
        .take(count)
        .map(|k| {
            let psi = StateVector::new(eig.eigenvectors.column(k).into_owned());
            Ok((
                eig.eigenvalues[k],
                GridWavefunction::from_state_vector(model.grid, model.spin_dim, &psi)?,
            ))
        })
        .collect()
}

/// Spin-1/2 coupling `B(x) sigma_z` for a field profile.
pub fn z_field_coupling(profile: &[f64]) -> Vec<CMatrix> {
    let [_, _, sz] = spin_matrices(2);
    profile.iter().map(|&b| sz.matrix().scale(2.0 * b)).collect()
}
