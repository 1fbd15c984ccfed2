//! GRW collapse dynamics with a flash or matter-density ontology on a finite
//! set of locations.
//!
//! Between flashes the state evolves by `W_t = exp(-iHt/hbar - (1/2) sum_x Lambda(x) t)`.
//! The joint density of the first `n` flashes is
//! `|| Lambda(x_n)^{1/2} W_{t_n - t_{n-1}} ... Lambda(x_1)^{1/2} W_{t_1} psi ||^2`.

use std::collections::HashMap;

use log::warn;
use nalgebra::SymmetricEigen;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::hilbert::{commutator_norm, CMatrix, Operator, Pvm, StateVector, C64};
use crate::models::Model;
use crate::rng::{sample_weighted, stream_rng};
use crate::superselection::build_mixture;
use crate::{Error, Result};

/// Smallest eigenvalue accepted for a rate operator.
pub const PSD_TOL: f64 = 1e-10;
/// Largest `max rate * dt` accepted without a warning.
pub const FLASH_RATE_DT_GUARD: f64 = 0.1;
/// Conditional state norms below this abort sampling.
pub const UNDERFLOW_NORM: f64 = 1e-150;

/// Positive operators `Lambda(x)` with cached square roots.
#[derive(Clone, Debug)]
pub struct FlashRateFamily {
    locations: Vec<String>,
    operators: Vec<Operator>,
    square_roots: Vec<Operator>,
    total: Operator,
}

fn psd_sqrt(op: &Operator) -> Result<(Operator, f64)> {
    op.require_hermitian()?;
    let sym = (op.matrix() + op.matrix().adjoint()).scale(0.5);
    let eig = SymmetricEigen::new(sym);
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let n = op.dim();
    let roots = CMatrix::from_fn(n, n, |i, j| {
        if i == j {
            C64::new(eig.eigenvalues[i].max(0.0).sqrt(), 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    let r = &eig.eigenvectors * roots * eig.eigenvectors.adjoint();
    Ok((Operator::hermitian((&r + r.adjoint()).scale(0.5))?, min))
}

impl FlashRateFamily {
    pub fn new(locations: Vec<String>, operators: Vec<Operator>) -> Result<Self> {
        if locations.len() != operators.len() || operators.is_empty() {
            return Err(Error::domain("need one rate operator per location"));
        }
        let dim = operators[0].dim();
        let mut square_roots = Vec::with_capacity(operators.len());
        let mut total = Operator::zeros(dim);
        for (label, op) in locations.iter().zip(&operators) {
            if op.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: op.dim(),
                });
            }
            let (root, min) = psd_sqrt(op)?;
            if min < -PSD_TOL {
                return Err(Error::domain(format!(
                    "rate operator at `{label}` is not positive semidefinite (min eigenvalue {min:.3e})"
                )));
            }
            square_roots.push(root);
            total = total.add(op)?;
        }
        Ok(Self {
            locations,
            operators,
            square_roots,
            total,
        })
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.total.dim()
    }

    pub fn locations(&self) -> &[String] {
        &self.locations
    }

    pub fn operator(&self, x: usize) -> &Operator {
        &self.operators[x]
    }

    pub fn operators(&self) -> &[Operator] {
        &self.operators
    }

    pub fn square_root(&self, x: usize) -> &Operator {
        &self.square_roots[x]
    }

    /// `sum_x Lambda(x)`.
    pub fn total(&self) -> &Operator {
        &self.total
    }

    /// Largest eigenvalue of the total rate.
    pub fn max_total_rate(&self) -> f64 {
        let sym = (self.total.matrix() + self.total.matrix().adjoint()).scale(0.5);
        SymmetricEigen::new(sym).eigenvalues.iter().copied().fold(0.0, f64::max)
    }
}

/// Hamiltonian plus rate operators: everything needed for `W_t`.
#[derive(Clone, Debug)]
pub struct GrwDynamics {
    pub h: Operator,
    pub rates: FlashRateFamily,
    pub hbar: f64,
    generator: CMatrix,
}

impl GrwDynamics {
    pub fn new(h: &Operator, rates: FlashRateFamily, hbar: f64) -> Result<Self> {
        h.require_hermitian()?;
        if h.dim() != rates.dim() {
            return Err(Error::DimensionMismatch {
                expected: h.dim(),
                found: rates.dim(),
            });
        }
        if !(hbar > 0.0) {
            return Err(Error::domain("hbar must be positive"));
        }
        let generator = h.matrix() * C64::new(0.0, -1.0 / hbar) - rates.total().matrix().scale(0.5);
        Ok(Self {
            h: h.clone(),
            rates,
            hbar,
            generator,
        })
    }

    pub fn dim(&self) -> usize {
        self.h.dim()
    }

    /// The matrix `W_t`.
    pub fn w(&self, t: f64) -> Result<CMatrix> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::domain(format!("W_t is only defined for finite t >= 0, got {t}")));
        }
        if t == 0.0 {
            return Ok(CMatrix::identity(self.dim(), self.dim()));
        }
        Ok((&self.generator * C64::new(t, 0.0)).exp())
    }
}

/// `W_t psi` (unnormalised).
pub fn grw_propagate(psi: &StateVector, dynamics: &GrwDynamics, t: f64) -> Result<StateVector> {
    psi.check_dim(dynamics.dim())?;
    Ok(StateVector::new(dynamics.w(t)? * psi.amplitudes()))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Flash {
    pub location: usize,
    pub time: f64,
}

fn check_times(flashes: &[Flash]) -> Result<()> {
    let mut last = 0.0;
    for (k, f) in flashes.iter().enumerate() {
        if f.time < last || (k > 0 && f.time <= last) || !f.time.is_finite() {
            return Err(Error::domain(format!("flash times must increase from 0 (flash {k} at {})", f.time)));
        }
        last = f.time;
    }
    Ok(())
}

/// Joint density of the flash sequence (per location, per unit time^n).
pub fn flash_joint_density(psi: &StateVector, dynamics: &GrwDynamics, flashes: &[Flash]) -> Result<f64> {
    psi.check_dim(dynamics.dim())?;
    check_times(flashes)?;
    let mut v = psi.amplitudes().clone();
    let mut last = 0.0;
    for f in flashes {
        if f.location >= dynamics.rates.len() {
            return Err(Error::domain(format!("unknown location {}", f.location)));
        }
        v = dynamics.rates.square_root(f.location).matrix() * (dynamics.w(f.time - last)? * v);
        last = f.time;
    }
    Ok(v.norm_squared())
}

#[derive(Clone, Debug, Serialize)]
pub struct FlashHistory {
    pub flashes: Vec<Flash>,
    pub horizon: f64,
    /// `W_{T - t_last}` applied to the normalised post-flash state; its
    /// squared norm is the probability of no further flash before `T`.
    #[serde(skip)]
    pub terminal_state: StateVector,
    pub stream: u64,
}

/// Flash process sampler with a cached step propagator.
pub struct FlashSampler<'a> {
    dynamics: &'a GrwDynamics,
    dt: f64,
    n_steps: usize,
    horizon: f64,
    w_dt: CMatrix,
}

impl<'a> FlashSampler<'a> {
    pub fn new(dynamics: &'a GrwDynamics, horizon: f64, dt: f64) -> Result<Self> {
        let grid = crate::belljump::TimeGrid::new(horizon, dt)?;
        let dt = grid.dt();
        let guard = dynamics.rates.max_total_rate() * dt;
        if guard > FLASH_RATE_DT_GUARD {
            warn!("max flash rate * dt = {guard:.3} exceeds {FLASH_RATE_DT_GUARD}; reduce dt");
        }
        Ok(Self {
            dynamics,
            dt,
            n_steps: grid.n_steps,
            horizon,
            w_dt: dynamics.w(dt)?,
        })
    }

    /// Per step: the no-flash probability is `||W_dt phi||^2` for normalised
    /// `phi`. On a flash the time inside the step is drawn as if the rate
    /// were constant over the step, the location with weight
    /// `||Lambda(x)^{1/2} W_tau phi||^2`, and `phi` continues from
    /// `Lambda(x)^{1/2} W_tau phi` (renormalised).
    pub fn sample(&self, psi: &StateVector, seed: u64, stream: u64) -> Result<FlashHistory> {
        psi.check_dim(self.dynamics.dim())?;
        let mut rng = stream_rng(seed, stream);
        let rates = &self.dynamics.rates;
        let mut phi = psi.renormalized()?.into_amplitudes();
        let mut flashes = Vec::new();
        // time already elapsed inside the current step after a flash
        for k in 0..self.n_steps {
            let t_k = self.horizon * k as f64 / self.n_steps as f64;
            let next = &self.w_dt * &phi;
            let survive = next.norm_squared() / phi.norm_squared();
            if rng.random::<f64>() < survive {
                phi = next;
                continue;
            }
            let p_flash = (1.0 - survive).max(f64::MIN_POSITIVE);
            let rate = -survive.ln() / self.dt;
            // truncated exponential on [0, dt)
            let u: f64 = rng.random();
            let tau = if rate * self.dt < 1e-12 {
                u * self.dt
            } else {
                (-(1.0 - u * p_flash).ln() / rate).min(self.dt * (1.0 - f64::EPSILON))
            };
            let before = self.dynamics.w(tau)? * &phi;
            let weights: Vec<f64> = (0..rates.len())
                .map(|x| (rates.square_root(x).matrix() * &before).norm_squared())
                .collect();
            let x = sample_weighted(&weights, &mut rng)
                .ok_or_else(|| Error::Numeric("flash drawn with zero location weights".to_string()))?;
            let after = rates.square_root(x).matrix() * before;
            let norm = after.norm();
            if !(norm > UNDERFLOW_NORM) {
                return Err(Error::Numeric(format!("conditional state norm underflow ({norm:.3e}) at t = {}", t_k + tau)));
            }
            let time = (t_k + tau).max(flashes.last().map_or(0.0, |f: &Flash| f.time.next_up()));
            flashes.push(Flash { location: x, time });
            phi = self.dynamics.w(self.dt - tau)? * after.unscale(norm);
        }
        Ok(FlashHistory {
            flashes,
            horizon: self.horizon,
            terminal_state: StateVector::new(phi),
            stream,
        })
    }
}

pub fn sample_flashes(
    psi: &StateVector,
    dynamics: &GrwDynamics,
    horizon: f64,
    dt: f64,
    seed: u64,
) -> Result<FlashHistory> {
    FlashSampler::new(dynamics, horizon, dt)?.sample(psi, seed, 0)
}

/// `n` histories, history `i` on substream `i`.
pub fn sample_flash_ensemble(
    psi: &StateVector,
    dynamics: &GrwDynamics,
    horizon: f64,
    dt: f64,
    n: usize,
    seed: u64,
) -> Result<Vec<FlashHistory>> {
    let sampler = FlashSampler::new(dynamics, horizon, dt)?;
    (0..n as u64)
        .into_par_iter()
        .map(|i| sampler.sample(psi, seed, i))
        .collect()
}

/// Exact probability that the first flash happens at `x` within `[a, b)`,
/// by composite Simpson quadrature with `panels` (even) panels.
pub fn first_flash_probability(
    psi: &StateVector,
    dynamics: &GrwDynamics,
    x: usize,
    a: f64,
    b: f64,
    panels: usize,
) -> Result<f64> {
    let panels = panels.max(2) + panels % 2;
    let h = (b - a) / panels as f64;
    let w_h = dynamics.w(h)?;
    let mut v = dynamics.w(a)? * psi.amplitudes();
    let root = dynamics.rates.square_root(x).matrix();
    let mut acc = 0.0;
    for k in 0..=panels {
        let weight = if k == 0 || k == panels {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc += weight * (root * &v).norm_squared();
        v = &w_h * v;
    }
    Ok(acc * h / 3.0)
}

#[derive(Clone, Debug, Serialize)]
pub struct FlashSuperselectionReport {
    pub commutator_g_h: f64,
    /// Max over locations of `||[G, Lambda(x)]||`.
    pub commutator_g_lambda: f64,
    pub max_deviation: f64,
    pub max_density: f64,
    pub sequences_checked: u64,
    pub grid_points: usize,
}

impl FlashSuperselectionReport {
    pub fn conditions_hold(&self, tol: f64) -> bool {
        self.commutator_g_h <= tol && self.commutator_g_lambda <= tol
    }
}

/// Compares `P_n^psi` with `sum_nu w_nu P_n^{psi^nu}` on every increasing
/// flash sequence of length `1..=n_max` drawn from `locations x times`.
pub fn verify_flash_superselection(
    psi: &StateVector,
    g: &Operator,
    dynamics: &GrwDynamics,
    times: &[f64],
    n_max: usize,
) -> Result<FlashSuperselectionReport> {
    psi.check_dim(dynamics.dim())?;
    if times.windows(2).any(|w| w[1] <= w[0]) || times.first().is_some_and(|&t| t <= 0.0) {
        return Err(Error::domain("flash time grid must be positive and increasing"));
    }
    let commutator_g_h = commutator_norm(g, &dynamics.h)?;
    let commutator_g_lambda = dynamics
        .rates
        .operators()
        .iter()
        .map(|l| commutator_norm(g, l))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let mixture = build_mixture(psi, g)?;
    let weights: Vec<f64> = mixture.members.iter().map(|m| m.weight).collect();

    // W for every gap between grid times (and from 0)
    let mut gaps: HashMap<(usize, usize), CMatrix> = HashMap::new();
    let all: Vec<f64> = std::iter::once(0.0).chain(times.iter().copied()).collect();
    for i in 0..all.len() {
        for j in i + 1..all.len() {
            gaps.insert((i, j), dynamics.w(all[j] - all[i])?);
        }
    }
    let roots: Vec<&CMatrix> = (0..dynamics.rates.len()).map(|x| dynamics.rates.square_root(x).matrix()).collect();

    struct Walker<'a> {
        gaps: &'a HashMap<(usize, usize), CMatrix>,
        roots: &'a [&'a CMatrix],
        weights: &'a [f64],
        n_time_nodes: usize,
        n_max: usize,
    }

    #[derive(Default)]
    struct Acc {
        max_deviation: f64,
        max_density: f64,
        count: u64,
    }

    impl Walker<'_> {
        // vectors[0] is psi's branch, the rest are mixture members
        fn visit(&self, vectors: &[nalgebra::DVector<C64>], last: usize, depth: usize, acc: &mut Acc) {
            for next in last + 1..self.n_time_nodes {
                let w = &self.gaps[&(last, next)];
                let evolved: Vec<_> = vectors.iter().map(|v| w * v).collect();
                for root in self.roots {
                    let hit: Vec<_> = evolved.iter().map(|v| *root * v).collect();
                    let p_psi = hit[0].norm_squared();
                    let p_mix: f64 = hit[1..].iter().zip(self.weights).map(|(v, w)| w * v.norm_squared()).sum();
                    acc.max_deviation = acc.max_deviation.max((p_psi - p_mix).abs());
                    acc.max_density = acc.max_density.max(p_psi);
                    acc.count += 1;
                    if depth + 1 < self.n_max {
                        self.visit(&hit, next, depth + 1, acc);
                    }
                }
            }
        }
    }

    let walker = Walker {
        gaps: &gaps,
        roots: &roots,
        weights: &weights,
        n_time_nodes: all.len(),
        n_max,
    };
    let start: Vec<_> = std::iter::once(psi.amplitudes().clone())
        .chain(mixture.members.iter().map(|m| m.state.amplitudes().clone()))
        .collect();
    // parallel over the first flash time, each branch walked depth-first
    let parts: Vec<Acc> = (1..all.len())
        .into_par_iter()
        .map(|first| {
            let mut acc = Acc::default();
            if n_max == 0 {
                return acc;
            }
            let w = &gaps[&(0, first)];
            let evolved: Vec<_> = start.iter().map(|v| w * v).collect();
            for root in &roots {
                let hit: Vec<_> = evolved.iter().map(|v| *root * v).collect();
                let p_psi = hit[0].norm_squared();
                let p_mix: f64 = hit[1..].iter().zip(&weights).map(|(v, w)| w * v.norm_squared()).sum();
                acc.max_deviation = acc.max_deviation.max((p_psi - p_mix).abs());
                acc.max_density = acc.max_density.max(p_psi);
                acc.count += 1;
                if n_max > 1 {
                    walker.visit(&hit, first, 1, &mut acc);
                }
            }
            acc
        })
        .collect();
    let mut report = FlashSuperselectionReport {
        commutator_g_h,
        commutator_g_lambda,
        max_deviation: 0.0,
        max_density: 0.0,
        sequences_checked: 0,
        grid_points: times.len() * dynamics.rates.len(),
    };
    for a in parts {
        report.max_deviation = report.max_deviation.max(a.max_deviation);
        report.max_density = report.max_density.max(a.max_density);
        report.sequences_checked += a.count;
    }
    Ok(report)
}

/// `m(x) = <psi|Lambda(x)|psi>` for every location.
pub fn matter_density(psi: &StateVector, rates: &FlashRateFamily) -> Result<Vec<f64>> {
    psi.check_dim(rates.dim())?;
    rates
        .operators()
        .iter()
        .map(|l| Ok(l.expectation(psi)?.re))
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct MatterDensityField {
    pub locations: Vec<String>,
    pub times: Vec<f64>,
    /// `values[k][x]` at `times[k]`.
    pub values: Vec<Vec<f64>>,
}

/// Matter density of the normalised no-collapse state `W_t psi / ||W_t psi||`.
pub fn matter_density_field(psi: &StateVector, dynamics: &GrwDynamics, times: &[f64]) -> Result<MatterDensityField> {
    let values = times
        .iter()
        .map(|&t| matter_density(&grw_propagate(psi, dynamics, t)?.renormalized()?, &dynamics.rates))
        .collect::<Result<_>>()?;
    Ok(MatterDensityField {
        locations: dynamics.rates.locations().to_vec(),
        times: times.to_vec(),
        values,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct MemberMasses {
    pub eigenvalue: f64,
    pub weight: f64,
    pub component_mass: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct GrwmReport {
    pub time: f64,
    /// Fraction of `sum_x m^psi(x)` on each connected component.
    pub component_mass_psi: Vec<f64>,
    pub members: Vec<MemberMasses>,
    /// `max` over members and components of `|mass_psi - mass_member|`.
    pub discrepancy: f64,
}

/// Per-component matter of `psi` against each mixture member for `G`, at a
/// time `t` before the first collapse. Locations are assigned to components
/// through `location_component`.
pub fn grwm_counterexample(
    model: &Model,
    psi: &StateVector,
    g: &Operator,
    dynamics: &GrwDynamics,
    location_component: &[usize],
    t: f64,
) -> Result<GrwmReport> {
    if location_component.len() != dynamics.rates.len() {
        return Err(Error::domain("need a component for every location"));
    }
    let n_components = model.space().n_components();
    let fractions = |state: &StateVector| -> Result<Vec<f64>> {
        let evolved = grw_propagate(state, dynamics, t)?.renormalized()?;
        let m = matter_density(&evolved, &dynamics.rates)?;
        let total: f64 = m.iter().sum();
        let mut by_component = vec![0.0; n_components];
        for (x, v) in m.iter().enumerate() {
            by_component[location_component[x]] += v;
        }
        if total > 0.0 {
            by_component.iter_mut().for_each(|v| *v /= total);
        }
        Ok(by_component)
    };
    let component_mass_psi = fractions(psi)?;
    let mixture = build_mixture(psi, g)?;
    let members = mixture
        .members
        .iter()
        .map(|m| {
            Ok(MemberMasses {
                eigenvalue: m.eigenvalue,
                weight: m.weight,
                component_mass: fractions(&m.state)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let discrepancy = members
        .iter()
        .flat_map(|m| m.component_mass.iter().zip(&component_mass_psi).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max);
    Ok(GrwmReport {
        time: t,
        component_mass_psi,
        members,
        discrepancy,
    })
}

/// Diagonal rates `Lambda(x)_{ii} = f(x, config of i)`.
pub fn config_diagonal_rates<F: Fn(usize, usize) -> f64>(
    pvm: &Pvm,
    locations: Vec<String>,
    f: F,
) -> Result<FlashRateFamily> {
    let operators = (0..locations.len())
        .map(|x| Operator::diagonal(&(0..pvm.dim()).map(|i| f(x, pvm.cell_of(i))).collect::<Vec<_>>()))
        .collect();
    FlashRateFamily::new(locations, operators)
}

/// Gaussian-smeared particle-number densities for models whose configuration
/// content lists occupation numbers of `species` blocks of `sites` entries:
/// `Lambda(x) = lambda sum_y exp(-(x-y)^2 / 2 w^2) N_y`.
pub fn smeared_number_rates(
    model: &Model,
    sites: usize,
    species: usize,
    width: f64,
    lambda: f64,
) -> Result<FlashRateFamily> {
    for q in 0..model.n_configs() {
        if model.space().config(q).content.len() != sites * species {
            return Err(Error::domain("configuration content does not hold per-site occupation numbers"));
        }
    }
    let kernel = |x: usize, y: usize| (-((x as f64 - y as f64).powi(2)) / (2.0 * width * width)).exp();
    config_diagonal_rates(model.pvm(), (0..sites).map(|x| format!("x{x}")).collect(), |x, q| {
        let content = &model.space().config(q).content;
        lambda
            * (0..sites)
                .map(|y| kernel(x, y) * (0..species).map(|s| content[s * sites + y] as f64).sum::<f64>())
                .sum::<f64>()
    })
}

/// Adds `kappa |u_x><u_x|` to each `Lambda(x)`, with `u_x` an equal-weight
/// superposition of basis states `a` and `b[x]`; with `a` and `b[x]` in
/// different sectors this breaks `[G, Lambda(x)] = 0`.
pub fn with_cross_sector_rates(rates: &FlashRateFamily, a: usize, b: &[usize], kappa: f64) -> Result<FlashRateFamily> {
    let dim = rates.dim();
    let operators = rates
        .operators()
        .iter()
        .zip(b)
        .map(|(op, &bx)| {
            let mut u = nalgebra::DVector::<C64>::zeros(dim);
            u[a] = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
            u[bx] = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
            op.add(&Operator::hermitian((&u * u.adjoint()).scale(kappa))?)
        })
        .collect::<Result<Vec<_>>>()?;
    FlashRateFamily::new(rates.locations().to_vec(), operators)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::ks_one_sample;

    fn scalar_setup(lambda: f64) -> GrwDynamics {
        let rates = FlashRateFamily::new(
            vec!["x1".into(), "x2".into()],
            vec![Operator::diagonal(&[lambda, 0.0]), Operator::diagonal(&[0.0, lambda])],
        )
        .unwrap();
        GrwDynamics::new(&Operator::zeros(2), rates, 1.0).unwrap()
    }

    #[test]
    fn propagator_examples() {
        let d = scalar_setup(0.7);
        let psi = StateVector::random(2, &mut stream_rng(1, 0));
        assert!(grw_propagate(&psi, &d, 0.0).unwrap().distance(&psi) < 1e-15);
        let t = 1.3;
        let out = grw_propagate(&psi, &d, t).unwrap();
        let expected = psi.amplitudes() * C64::new((-0.7 * t / 2.0f64).exp(), 0.0);
        assert!((out.amplitudes() - expected).norm() < 1e-12);
        assert!(grw_propagate(&psi, &d, -0.1).is_err());
    }

    #[test]
    fn contraction_and_semigroup() {
        let mut rng = stream_rng(2, 0);
        for _ in 0..5 {
            let h = Operator::random_hermitian(5, &mut rng);
            let a = Operator::random_hermitian(5, &mut rng);
            let lam = a.compose(&a).unwrap().scale(0.3);
            let rates = FlashRateFamily::new(vec!["x".into()], vec![lam]).unwrap();
            let d = GrwDynamics::new(&h, rates, 1.0).unwrap();
            let psi = StateVector::random(5, &mut rng);
            for t in [0.1, 0.8, 2.0] {
                assert!(grw_propagate(&psi, &d, t).unwrap().norm() <= 1.0 + 1e-10);
            }
            let ws = d.w(0.4).unwrap() * d.w(0.9).unwrap();
            assert!(crate::hilbert::max_entry(&(ws - d.w(1.3).unwrap())) <= 1e-9);
        }
    }

    #[test]
    fn square_roots_reproduce_rates() {
        let mut rng = stream_rng(3, 0);
        let a = Operator::random_hermitian(4, &mut rng);
        let lam = a.compose(&a).unwrap();
        let fam = FlashRateFamily::new(vec!["x".into()], vec![lam.clone()]).unwrap();
        let r = fam.square_root(0);
        assert!(r.compose(r).unwrap().max_distance(&lam).unwrap() <= 1e-10);
        assert!(FlashRateFamily::new(vec!["x".into()], vec![Operator::diagonal(&[1.0, -0.1])]).is_err());
    }

    #[test]
    fn single_flash_density_closed_form() {
        let lambda = 0.8;
        let d = scalar_setup(lambda);
        let psi = StateVector::from_real(&[0.6, 0.8]);
        for t in [0.0, 0.5, 2.0] {
            let p = flash_joint_density(&psi, &d, &[Flash { location: 0, time: t }]).unwrap();
            assert!((p - lambda * (-lambda * t).exp() * 0.36).abs() < 1e-12);
        }
        // total mass over both locations and all times: integral of lambda e^{-lambda t}
        let tail = 40.0;
        let total: f64 = (0..2)
            .map(|x| first_flash_probability(&psi, &d, x, 0.0, tail, 4000).unwrap())
            .sum();
        assert!((total - 1.0).abs() <= 1e-6, "{total}");
    }

    #[test]
    fn eigenvector_density_factorises() {
        let d = scalar_setup(1.5);
        let psi = StateVector::basis(2, 1);
        let seq = [Flash { location: 1, time: 0.2 }, Flash { location: 1, time: 0.9 }];
        let p = flash_joint_density(&psi, &d, &seq).unwrap();
        let expected = 1.5 * (-1.5f64 * 0.2).exp() * 1.5 * (-1.5f64 * 0.7).exp();
        assert!((p - expected).abs() < 1e-12);
        assert!(flash_joint_density(&psi, &d, &[seq[1], seq[0]]).is_err());
    }

    #[test]
    fn no_rates_no_flashes() {
        let rates = FlashRateFamily::new(vec!["x".into()], vec![Operator::zeros(3)]).unwrap();
        let mut rng = stream_rng(4, 0);
        let d = GrwDynamics::new(&Operator::random_hermitian(3, &mut rng), rates, 1.0).unwrap();
        let h = sample_flashes(&StateVector::random(3, &mut rng), &d, 5.0, 0.01, 1).unwrap();
        assert!(h.flashes.is_empty());
        assert!((h.terminal_state.norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn first_flash_time_is_exponential() {
        let lambda = 1.0;
        let d = scalar_setup(lambda);
        let psi = StateVector::from_real(&[0.6, 0.8]);
        let hist = sample_flash_ensemble(&psi, &d, 12.0, 0.02, 10_000, 9).unwrap();
        let firsts: Vec<f64> = hist.iter().filter_map(|h| h.flashes.first().map(|f| f.time)).collect();
        // horizon truncation: condition the CDF on a flash before T
        let cut = 1.0 - (-lambda * 12.0f64).exp();
        let ks = ks_one_sample(&firsts, |t| (1.0 - (-lambda * t).exp()) / cut);
        assert!(ks.p_value >= 0.01, "{ks:?}");
        for h in &hist {
            assert!(h.flashes.windows(2).all(|w| w[0].time < w[1].time));
            assert!(h.flashes.iter().all(|f| f.time <= h.horizon));
        }
    }

    #[test]
    fn flash_identity_trivial_for_eigenvector() {
        let d = scalar_setup(1.0);
        let g = Operator::diagonal(&[0.0, 1.0]);
        let r = verify_flash_superselection(&StateVector::basis(2, 0), &g, &d, &[0.5, 1.0, 1.5], 3).unwrap();
        assert!(r.max_deviation <= 1e-15);
        // 2 locations, 3 times: 6 + C(3,2) 4 + C(3,3) 8
        assert_eq!(r.sequences_checked, 6 + 12 + 8);
    }

    #[test]
    fn matter_density_basics() {
        let d = scalar_setup(2.0);
        let psi = StateVector::random(2, &mut stream_rng(5, 0));
        let m = matter_density(&psi, &d.rates).unwrap();
        let total = d.rates.total().expectation(&psi).unwrap().re;
        assert!((m.iter().sum::<f64>() - total).abs() < 1e-14);
        assert!(m.iter().all(|&v| v >= -1e-12));
        let only_first = matter_density(&StateVector::basis(2, 0), &d.rates).unwrap();
        assert_eq!(only_first[1], 0.0);
    }
}
