//! Bell-type jump process on a finite configuration space.
//!
//! Jumps `q' -> q` occur with rate
//! `(2/hbar) [Im <psi_t|P(q) H_I P(q')|psi_t>]^+ / <psi_t|P(q')|psi_t>`,
//! where `H_I` is the model's `h_jump`. Rates depend on time through `psi_t`,
//! so paths are simulated on a fixed time grid with first-order thinning:
//! in each step of length `dt` the process leaves `q'` with probability
//! `min(1, total_rate * dt)`. The same kernel drives [`exact_path_law`], so
//! Monte-Carlo skeleton frequencies and the enumerated law can be compared
//! exactly.

use std::collections::BTreeMap;

use log::warn;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::hilbert::{CMatrix, Operator, Propagator, Pvm, StateVector, C64, ZERO};
use crate::models::Model;
use crate::rng::{sample_weighted, stream_rng, PathRng};
use crate::{Error, Result};

/// Occupation below which rates at a configuration are undefined.
pub const OCCUPATION_FLOOR: f64 = 1e-14;
/// Largest `total_rate * dt` accepted without a warning.
pub const RATE_DT_GUARD: f64 = 0.1;
/// Skeletons whose mass falls below this may be dropped by the exact law
/// when they reach a configuration where rates are undefined.
pub const NEGLIGIBLE_MASS: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JumpEvent {
    pub time: f64,
    pub from: usize,
    pub to: usize,
}

/// Piecewise-constant configuration history.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Path {
    pub initial_config: usize,
    pub events: Vec<JumpEvent>,
    pub horizon: f64,
    pub sector_value: Option<f64>,
    /// RNG substream the path was drawn from.
    pub stream: u64,
}

impl Path {
    /// Configuration occupied at time `t` (jumps at exactly `t` included).
    pub fn config_at(&self, t: f64) -> usize {
        self.events
            .iter()
            .take_while(|e| e.time <= t)
            .last()
            .map_or(self.initial_config, |e| e.to)
    }

    pub fn final_config(&self) -> usize {
        self.events.last().map_or(self.initial_config, |e| e.to)
    }

    pub fn jump_count(&self) -> usize {
        self.events.len()
    }

    pub fn first_jump_time(&self) -> Option<f64> {
        self.events.first().map(|e| e.time)
    }

    /// Every configuration the path visits, in order.
    pub fn visited(&self) -> impl Iterator<Item = usize> + '_ {
        std::iter::once(self.initial_config).chain(self.events.iter().map(|e| e.to))
    }

    /// Configurations at the grid times `t_0, ..., t_K`.
    pub fn skeleton(&self, grid: &TimeGrid) -> Vec<usize> {
        (0..=grid.n_steps).map(|k| self.config_at(grid.time(k))).collect()
    }

    /// Checks ordering, chaining and the horizon bound.
    pub fn validate(&self) -> Result<()> {
        let mut current = self.initial_config;
        let mut last_time = f64::NEG_INFINITY;
        for e in &self.events {
            if !(e.time > last_time) || e.time > self.horizon {
                return Err(Error::domain(format!("event time {} out of order", e.time)));
            }
            if e.from != current {
                return Err(Error::domain(format!(
                    "event at {} starts from {} but path is at {current}",
                    e.time, e.from
                )));
            }
            current = e.to;
            last_time = e.time;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PathEnsemble {
    pub paths: Vec<Path>,
    pub model_id: String,
    pub psi_id: String,
    pub seed: u64,
    pub dt: f64,
    pub horizon: f64,
}

impl PathEnsemble {
    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    /// Empirical distribution of `Q_t` over `n_configs` configurations.
    pub fn config_distribution(&self, t: f64, n_configs: usize) -> Vec<f64> {
        crate::stats::empirical_distribution(self.paths.iter().map(|p| p.config_at(t)), n_configs)
    }

    /// Records `f(Q_0)` on every path.
    pub fn assign_sector_values(&mut self, f: &[Option<f64>]) {
        for p in &mut self.paths {
            p.sector_value = f.get(p.initial_config).copied().flatten();
        }
    }
}

/// Jump rates out of one configuration.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateMap {
    pub from: usize,
    /// Destination -> rate; only strictly positive rates are stored.
    pub rates: BTreeMap<usize, f64>,
}

impl RateMap {
    pub fn total(&self) -> f64 {
        self.rates.values().sum()
    }

    pub fn rate(&self, to: usize) -> f64 {
        self.rates.get(&to).copied().unwrap_or(0.0)
    }
}

/// Rates out of `from` for an arbitrary designated interaction operator.
pub fn rates_for(
    h_interaction: &CMatrix,
    pvm: &Pvm,
    psi: &StateVector,
    from: usize,
    hbar: f64,
) -> Result<RateMap> {
    let occupation = pvm.occupation(psi, from);
    if !(occupation > OCCUPATION_FLOOR) {
        return Err(Error::UnoccupiedConfiguration {
            config: from,
            occupation,
            time: f64::NAN,
        });
    }
    let amps = psi.amplitudes();
    let n = pvm.dim();
    let source = pvm.cell(from);
    // currents[q] = <psi|P(q) H_I P(from)|psi>
    let mut currents = vec![ZERO; pvm.n_configs()];
    for i in 0..n {
        let q = pvm.cell_of(i);
        if q == from {
            continue;
        }
        let w: C64 = source.iter().map(|&j| h_interaction[(i, j)] * amps[j]).sum();
        currents[q] += amps[i].conj() * w;
    }
    let rates = currents
        .iter()
        .enumerate()
        .filter(|&(q, _)| q != from)
        .filter_map(|(q, j)| {
            let rate = 2.0 / hbar * j.im.max(0.0) / occupation;
            (rate > 0.0).then_some((q, rate))
        })
        .collect();
    Ok(RateMap { from, rates })
}

/// Bell jump rates out of `from` for the model's `h_jump`.
pub fn jump_rates(psi: &StateVector, from: usize, model: &Model) -> Result<RateMap> {
    psi.check_dim(model.dim())?;
    rates_for(model.h_jump().matrix(), model.pvm(), psi, from, model.hbar())
}

/// Uniform grid `t_k = horizon * k / n_steps`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TimeGrid {
    pub horizon: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    /// Smallest grid with step at most `dt`.
    pub fn new(horizon: f64, dt: f64) -> Result<Self> {
        if !(horizon >= 0.0) || !horizon.is_finite() {
            return Err(Error::domain(format!("horizon must be finite and nonnegative, got {horizon}")));
        }
        if !(dt > 0.0) {
            return Err(Error::domain(format!("dt must be positive, got {dt}")));
        }
        let n_steps = ((horizon / dt) - 1e-9).ceil().max(0.0) as usize;
        Ok(Self { horizon, n_steps })
    }

    pub fn dt(&self) -> f64 {
        if self.n_steps == 0 {
            0.0
        } else {
            self.horizon / self.n_steps as f64
        }
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.n_steps {
            self.horizon
        } else {
            self.horizon * k as f64 / self.n_steps as f64
        }
    }
}

/// Jump rates at every grid time and configuration for one initial state.
/// Shared read-only by all paths of an ensemble.
#[derive(Clone, Debug)]
pub struct RateSchedule {
    grid: TimeGrid,
    /// `[step][config]`: `None` where the configuration is unoccupied.
    rates: Vec<Vec<Option<Vec<(usize, f64)>>>>,
    /// `[step][config]` occupations `<psi_t|P(q)|psi_t>`.
    occupations: Vec<Vec<f64>>,
    max_rate_dt: f64,
}

impl RateSchedule {
    pub fn new(model: &Model, psi0: &StateVector, grid: TimeGrid) -> Result<Self> {
        psi0.check_dim(model.dim())?;
        if !psi0.is_normalized() {
            return Err(Error::domain(format!(
                "initial state must be normalised (norm {})",
                psi0.norm()
            )));
        }
        let propagator = Propagator::new(model.h_total(), model.hbar())?;
        Self::with_propagator(model, &propagator, psi0, grid)
    }

    pub fn with_propagator(
        model: &Model,
        propagator: &Propagator,
        psi0: &StateVector,
        grid: TimeGrid,
    ) -> Result<Self> {
        let dt = grid.dt();
        let steps: Vec<(Vec<Option<Vec<(usize, f64)>>>, Vec<f64>)> = (0..=grid.n_steps)
            .into_par_iter()
            .map(|k| -> Result<_> {
                let psi = propagator.apply(psi0, grid.time(k))?;
                let occupations = model.pvm().occupations(&psi);
                let rates = (0..model.n_configs())
                    .map(|q| {
                        if occupations[q] > OCCUPATION_FLOOR {
                            rates_for(model.h_jump().matrix(), model.pvm(), &psi, q, model.hbar())
                                .map(|r| Some(r.rates.into_iter().collect()))
                        } else {
                            Ok(None)
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok((rates, occupations))
            })
            .collect::<Result<_>>()?;
        let (rates, occupations): (Vec<_>, Vec<_>) = steps.into_iter().unzip();
        let max_rate_dt = rates
            .iter()
            .take(grid.n_steps)
            .flatten()
            .flatten()
            .map(|r: &Vec<(usize, f64)>| r.iter().map(|x| x.1).sum::<f64>() * dt)
            .fold(0.0, f64::max);
        if max_rate_dt > RATE_DT_GUARD {
            warn!(
                "max total rate * dt = {max_rate_dt:.3} exceeds {RATE_DT_GUARD}; \
                 first-order thinning is inaccurate (reduce dt)"
            );
        }
        Ok(Self {
            grid,
            rates,
            occupations,
            max_rate_dt,
        })
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn max_rate_dt(&self) -> f64 {
        self.max_rate_dt
    }

    pub fn occupations(&self, k: usize) -> &[f64] {
        &self.occupations[k]
    }

    fn rates(&self, k: usize, q: usize) -> Result<&[(usize, f64)]> {
        self.rates[k][q].as_deref().ok_or(Error::UnoccupiedConfiguration {
            config: q,
            occupation: self.occupations[k][q],
            time: self.grid.time(k),
        })
    }

    /// Transition kernel of step `k` out of `q`: `(stay, [(to, prob)])`.
    pub fn kernel(&self, k: usize, q: usize) -> Result<(f64, Vec<(usize, f64)>)> {
        let rates = self.rates(k, q)?;
        let total: f64 = rates.iter().map(|r| r.1).sum();
        if total <= 0.0 {
            return Ok((1.0, Vec::new()));
        }
        let p = (total * self.grid.dt()).min(1.0);
        Ok((1.0 - p, rates.iter().map(|&(to, r)| (to, p * r / total)).collect()))
    }

    /// Draws one path. `initial` overrides sampling `Q_0 ~ |psi_0|^2`.
    pub fn sample(&self, initial: Option<usize>, rng: &mut PathRng, stream: u64) -> Result<Path> {
        let mut q = match initial {
            Some(q) => q,
            None => sample_weighted(&self.occupations[0], rng)
                .ok_or_else(|| Error::domain("initial state has no occupied configuration"))?,
        };
        let initial_config = q;
        let dt = self.grid.dt();
        let mut events = Vec::new();
        for k in 0..self.grid.n_steps {
            let rates = self.rates(k, q)?;
            let total: f64 = rates.iter().map(|r| r.1).sum();
            if total <= 0.0 {
                continue;
            }
            let p = (total * dt).min(1.0);
            if rng.random::<f64>() >= p {
                continue;
            }
            let weights: Vec<f64> = rates.iter().map(|r| r.1).collect();
            let to = rates[sample_weighted(&weights, rng).expect("positive total rate")].0;
            let end = self.grid.time(k + 1);
            let time = (self.grid.time(k) + rng.random::<f64>() * dt).min(end.next_down());
            events.push(JumpEvent { time, from: q, to });
            q = to;
        }
        Ok(Path {
            initial_config,
            events,
            horizon: self.grid.horizon,
            sector_value: None,
            stream,
        })
    }
}

/// Initial configuration of a single trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitialConfig {
    Fixed(usize),
    /// Draw from `<psi_0|P(q)|psi_0>`.
    Sample,
}

/// One trajectory from substream 0 of `seed`.
pub fn sample_trajectory(
    model: &Model,
    psi0: &StateVector,
    q0: InitialConfig,
    horizon: f64,
    dt: f64,
    seed: u64,
) -> Result<Path> {
    let schedule = RateSchedule::new(model, psi0, TimeGrid::new(horizon, dt)?)?;
    let initial = match q0 {
        InitialConfig::Fixed(q) => {
            if q >= model.n_configs() {
                return Err(Error::domain(format!("initial configuration {q} out of range")));
            }
            Some(q)
        }
        InitialConfig::Sample => None,
    };
    schedule.sample(initial, &mut stream_rng(seed, 0), 0)
}

/// `n` independent paths with `Q_0 ~ |psi_0|^2`; path `i` uses substream `i`.
pub fn sample_ensemble(
    model: &Model,
    psi0: &StateVector,
    n: usize,
    horizon: f64,
    dt: f64,
    seed: u64,
) -> Result<PathEnsemble> {
    if n == 0 {
        return Err(Error::domain("ensemble size must be at least 1"));
    }
    let grid = TimeGrid::new(horizon, dt)?;
    let schedule = RateSchedule::new(model, psi0, grid)?;
    let paths = (0..n as u64)
        .into_par_iter()
        .map(|i| schedule.sample(None, &mut stream_rng(seed, i), i))
        .collect::<Result<Vec<_>>>()?;
    Ok(PathEnsemble {
        paths,
        model_id: model.name().to_string(),
        psi_id: "psi".to_string(),
        seed,
        dt: grid.dt(),
        horizon,
    })
}

/// Paths from a statistical mixture: each path first draws a member by
/// weight, then evolves from that member's state.
pub fn sample_mixture_ensemble(
    model: &Model,
    members: &[(f64, StateVector)],
    n: usize,
    horizon: f64,
    dt: f64,
    seed: u64,
) -> Result<PathEnsemble> {
    if n == 0 {
        return Err(Error::domain("ensemble size must be at least 1"));
    }
    if members.is_empty() {
        return Err(Error::domain("mixture has no members"));
    }
    let grid = TimeGrid::new(horizon, dt)?;
    let propagator = Propagator::new(model.h_total(), model.hbar())?;
    let schedules = members
        .iter()
        .map(|(_, psi)| RateSchedule::with_propagator(model, &propagator, psi, grid))
        .collect::<Result<Vec<_>>>()?;
    let weights: Vec<f64> = members.iter().map(|m| m.0).collect();
    let paths = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i);
            let k = sample_weighted(&weights, &mut rng)
                .ok_or_else(|| Error::domain("mixture weights are all zero"))?;
            schedules[k].sample(None, &mut rng, i)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PathEnsemble {
        paths,
        model_id: model.name().to_string(),
        psi_id: "mixture".to_string(),
        seed,
        dt: grid.dt(),
        horizon,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct DeterminismReport {
    pub deterministic: bool,
    /// Max over cells `B` of `||[H_I, P(B)]||`.
    pub max_commutator: f64,
    /// First cell whose commutator exceeds the tolerance, with its norm.
    pub witness: Option<(usize, f64)>,
    /// Largest rate seen for random states.
    pub max_sampled_rate: f64,
    /// Whether the random-state rate check agrees with the commutator test.
    pub rate_crosscheck_agrees: bool,
}

/// Max entry of `[H, P(B)]`: `[H, P]_{ij} = H_ij (p_j - p_i)`.
pub(crate) fn projector_commutator_norm(h: &CMatrix, pvm: &Pvm, cell: usize) -> f64 {
    let n = pvm.dim();
    let mut norm = 0.0_f64;
    for &i in pvm.cell(cell) {
        for j in 0..n {
            if pvm.cell_of(j) != cell {
                norm = norm.max(h[(i, j)].norm()).max(h[(j, i)].norm());
            }
        }
    }
    norm
}

/// Random-state sample count for the rate cross-check.
pub const DETERMINISM_SAMPLES: usize = 20;

/// Determinism criterion for a designated interaction operator: the process
/// has no jumps iff `H_I` commutes with every configuration projector.
pub fn is_deterministic_for(
    h_interaction: &Operator,
    pvm: &Pvm,
    hbar: f64,
    tol: f64,
    seed: u64,
) -> Result<DeterminismReport> {
    if h_interaction.dim() != pvm.dim() {
        return Err(Error::DimensionMismatch {
            expected: pvm.dim(),
            found: h_interaction.dim(),
        });
    }
    let h = h_interaction.matrix();
    let mut max_commutator = 0.0_f64;
    let mut witness = None;
    for b in 0..pvm.n_configs() {
        let norm = projector_commutator_norm(h, pvm, b);
        max_commutator = max_commutator.max(norm);
        if norm > tol && witness.is_none() {
            witness = Some((b, norm));
        }
    }
    let deterministic = witness.is_none();

    let mut rng = stream_rng(seed, 0);
    let mut max_sampled_rate = 0.0_f64;
    for _ in 0..DETERMINISM_SAMPLES {
        let psi = StateVector::random(pvm.dim(), &mut rng);
        for q in 0..pvm.n_configs() {
            if pvm.occupation(&psi, q) <= OCCUPATION_FLOOR {
                continue;
            }
            let r = rates_for(h, pvm, &psi, q, hbar)?;
            max_sampled_rate = r.rates.values().copied().fold(max_sampled_rate, f64::max);
        }
    }
    let rates_vanish = max_sampled_rate <= tol;
    Ok(DeterminismReport {
        deterministic,
        max_commutator,
        witness,
        max_sampled_rate,
        rate_crosscheck_agrees: rates_vanish == deterministic,
    })
}

pub fn is_deterministic(model: &Model, tol: f64) -> Result<DeterminismReport> {
    is_deterministic_for(model.h_jump(), model.pvm(), model.hbar(), tol, 0)
}

/// Guards for [`exact_path_law`].
pub const EXACT_MAX_CONFIGS: usize = 8;
pub const EXACT_MAX_STEPS: usize = 12;

/// Exact law of the time-discretised chain over configuration skeletons
/// `(Q_{t_0}, ..., Q_{t_K})`.
#[derive(Clone, Debug, Serialize)]
pub struct ExactPathLaw {
    pub grid: TimeGrid,
    pub probabilities: BTreeMap<Vec<usize>, f64>,
    /// Mass of skeletons dropped at unoccupied configurations.
    pub pruned_mass: f64,
}

impl ExactPathLaw {
    pub fn total_mass(&self) -> f64 {
        self.probabilities.values().sum()
    }

    pub fn probability(&self, skeleton: &[usize]) -> f64 {
        self.probabilities.get(skeleton).copied().unwrap_or(0.0)
    }

    /// `max |P(s) - Q(s)|` over the union of supports.
    pub fn max_deviation(&self, other: &ExactPathLaw) -> f64 {
        self.probabilities
            .keys()
            .chain(other.probabilities.keys())
            .map(|s| (self.probability(s) - other.probability(s)).abs())
            .fold(0.0, f64::max)
    }

    /// `sum_i w_i law_i` over a common grid.
    pub fn mixture(parts: &[(f64, ExactPathLaw)]) -> Result<ExactPathLaw> {
        let grid = parts
            .first()
            .ok_or_else(|| Error::domain("empty mixture"))?
            .1
            .grid;
        let mut probabilities = BTreeMap::new();
        let mut pruned_mass = 0.0;
        for (w, law) in parts {
            if law.grid != grid {
                return Err(Error::domain("mixture components use different time grids"));
            }
            for (s, p) in &law.probabilities {
                *probabilities.entry(s.clone()).or_insert(0.0) += w * p;
            }
            pruned_mass += w * law.pruned_mass;
        }
        Ok(ExactPathLaw {
            grid,
            probabilities,
            pruned_mass,
        })
    }
}

pub fn exact_path_law(model: &Model, psi0: &StateVector, horizon: f64, dt: f64) -> Result<ExactPathLaw> {
    let grid = TimeGrid::new(horizon, dt)?;
    if model.n_configs() > EXACT_MAX_CONFIGS || grid.n_steps > EXACT_MAX_STEPS {
        return Err(Error::GuardExceeded(format!(
            "exact path law needs at most {EXACT_MAX_CONFIGS} configurations and \
             {EXACT_MAX_STEPS} steps (got {} and {})",
            model.n_configs(),
            grid.n_steps
        )));
    }
    let schedule = RateSchedule::new(model, psi0, grid)?;
    let mut layer: BTreeMap<Vec<usize>, f64> = schedule
        .occupations(0)
        .iter()
        .enumerate()
        .filter(|&(_, &p)| p > 0.0)
        .map(|(q, &p)| (vec![q], p))
        .collect();
    let mut pruned_mass = 0.0;
    for k in 0..grid.n_steps {
        let mut next = BTreeMap::new();
        for (skeleton, mass) in layer {
            let q = *skeleton.last().expect("nonempty skeleton");
            let (stay, moves) = match schedule.kernel(k, q) {
                Ok(kernel) => kernel,
                Err(_) if mass < NEGLIGIBLE_MASS => {
                    pruned_mass += mass;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let mut extend = |to: usize, p: f64| {
                if p > 0.0 {
                    let mut s = skeleton.clone();
                    s.push(to);
                    *next.entry(s).or_insert(0.0) += mass * p;
                }
            };
            extend(q, stay);
            for (to, p) in moves {
                extend(to, p);
            }
        }
        layer = next;
    }
    Ok(ExactPathLaw {
        grid,
        probabilities: layer,
        pruned_mass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::commutator_norm;
    use crate::models::{build_fermion_boson_model, build_matrix_model, FockBasisSpec};
    use nalgebra::Complex;

    fn sigma_x_model(h_diag: Operator) -> Model {
        let h_jump = Operator::from_real(2, &[0.0, 1.0, 1.0, 0.0]).unwrap();
        build_matrix_model("sigma-x", vec![0, 1], h_diag, h_jump, BTreeMap::new(), 1.0).unwrap()
    }

    fn psi_one_i() -> StateVector {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        StateVector::from_slice(&[Complex::new(s, 0.0), Complex::new(0.0, s)])
    }

    #[test]
    fn two_level_rates_by_hand() {
        // Im(psi_1^* psi_2) = 1/2, occupation 1/2: rate(1 <- 2) = 2 * (1/2) / (1/2)
        let m = sigma_x_model(Operator::zeros(2));
        let psi = psi_one_i();
        let from2 = jump_rates(&psi, 1, &m).unwrap();
        assert!((from2.rate(0) - 2.0).abs() < 1e-14);
        let from1 = jump_rates(&psi, 0, &m).unwrap();
        assert_eq!(from1.rate(1), 0.0);
    }

    #[test]
    fn real_states_have_zero_rates() {
        let m = sigma_x_model(Operator::diagonal(&[0.2, -0.4]));
        let psi = StateVector::from_real(&[0.6, 0.8]);
        for q in 0..2 {
            assert_eq!(jump_rates(&psi, q, &m).unwrap().total(), 0.0);
        }
    }

    #[test]
    fn unoccupied_configuration_is_an_error() {
        let m = sigma_x_model(Operator::zeros(2));
        let psi = StateVector::basis(2, 0);
        assert!(matches!(
            jump_rates(&psi, 1, &m),
            Err(Error::UnoccupiedConfiguration { config: 1, .. })
        ));
    }

    #[test]
    fn rates_vanish_across_fermion_sectors() {
        let m = build_fermion_boson_model(&FockBasisSpec::default()).unwrap();
        let n = m.observable("fermion_number").unwrap();
        let e = crate::hilbert::eigendecompose(n, 1e-8).unwrap();
        let mut rng = stream_rng(3, 0);
        let raw = StateVector::random(m.dim(), &mut rng);
        let psi = e.project(0, &raw).renormalized().unwrap();
        let nf = |q: usize| n.matrix()[(q, q)].re;
        for q in 0..m.n_configs() {
            if m.pvm().occupation(&psi, q) <= OCCUPATION_FLOOR {
                continue;
            }
            for (to, rate) in jump_rates(&psi, q, &m).unwrap().rates {
                assert!(nf(to) == nf(q) || rate == 0.0);
            }
        }
    }

    #[test]
    fn one_sided_rates_for_random_states() {
        let m = build_fermion_boson_model(&FockBasisSpec::default()).unwrap();
        let mut rng = stream_rng(5, 0);
        for _ in 0..5 {
            let psi = StateVector::random(m.dim(), &mut rng);
            for a in 0..m.n_configs() {
                let ra = jump_rates(&psi, a, &m).unwrap();
                for b in 0..m.n_configs() {
                    let rb = jump_rates(&psi, b, &m).unwrap();
                    assert_eq!(ra.rate(b) * rb.rate(a), 0.0);
                }
            }
        }
    }

    #[test]
    fn no_jump_term_means_no_events() {
        let m = build_matrix_model(
            "static",
            vec![0, 1, 2],
            Operator::diagonal(&[0.0, 1.0, 2.0]),
            Operator::zeros(3),
            BTreeMap::new(),
            1.0,
        )
        .unwrap();
        let psi = StateVector::random(3, &mut stream_rng(1, 0));
        let path = sample_trajectory(&m, &psi, InitialConfig::Sample, 5.0, 0.01, 9).unwrap();
        assert!(path.events.is_empty());
    }

    #[test]
    fn initial_hazard_matches_rate() {
        // snapshot near t = 0 from configuration 2 of the sigma_x example
        let m = sigma_x_model(Operator::zeros(2));
        let psi = psi_one_i();
        let tau = 0.01;
        let grid = TimeGrid::new(tau, 0.0005).unwrap();
        let schedule = RateSchedule::new(&m, &psi, grid).unwrap();
        let n = 200_000u64;
        let jumped: u64 = (0..n)
            .into_par_iter()
            .map(|i| {
                let p = schedule.sample(Some(1), &mut stream_rng(77, i), i).unwrap();
                u64::from(p.first_jump_time().is_some())
            })
            .sum();
        let frac = jumped as f64 / n as f64;
        let hazard = -(1.0 - frac).ln() / tau;
        let expected = jump_rates(&psi, 1, &m).unwrap().rate(0);
        assert!((hazard / expected - 1.0).abs() < 0.05, "hazard {hazard}");
    }

    #[test]
    fn sampled_paths_keep_fermion_number() {
        let m = build_fermion_boson_model(&FockBasisSpec::default()).unwrap();
        let psi = StateVector::random(m.dim(), &mut stream_rng(2, 0));
        let ens = sample_ensemble(&m, &psi, 500, 3.0, 0.01, 4).unwrap();
        let n = m.observable("fermion_number").unwrap();
        let nf = |q: usize| n.matrix()[(q, q)].re;
        let mut jumps = 0;
        for p in &ens.paths {
            p.validate().unwrap();
            let f0 = nf(p.initial_config);
            assert!(p.visited().all(|q| nf(q) == f0));
            jumps += p.jump_count();
        }
        assert!(jumps > 0);
    }

    #[test]
    fn ensemble_of_one_matches_single_trajectory() {
        let m = build_fermion_boson_model(&FockBasisSpec::default()).unwrap();
        let psi = StateVector::random(m.dim(), &mut stream_rng(8, 0));
        let ens = sample_ensemble(&m, &psi, 1, 2.0, 0.01, 123).unwrap();
        let single = sample_trajectory(&m, &psi, InitialConfig::Sample, 2.0, 0.01, 123).unwrap();
        assert_eq!(ens.paths[0], single);
    }

    #[test]
    fn initial_distribution_matches_born_rule() {
        let m = build_fermion_boson_model(&FockBasisSpec::default()).unwrap();
        let psi = StateVector::random(m.dim(), &mut stream_rng(10, 0));
        let n = 4000;
        let ens = sample_ensemble(&m, &psi, n, 0.0, 0.01, 1).unwrap();
        let emp = ens.config_distribution(0.0, m.n_configs());
        let exact = m.pvm().occupations(&psi);
        let tv = crate::stats::total_variation(&emp, &exact);
        assert!(tv <= 3.0 * (m.n_configs() as f64 / n as f64).sqrt(), "tv {tv}");
    }

    #[test]
    fn determinism_examples() {
        let none = build_matrix_model(
            "static",
            vec![0, 1],
            Operator::diagonal(&[0.0, 1.0]),
            Operator::zeros(2),
            BTreeMap::new(),
            1.0,
        )
        .unwrap();
        let r = is_deterministic(&none, 1e-12).unwrap();
        assert!(r.deterministic && r.rate_crosscheck_agrees);

        let sx = sigma_x_model(Operator::zeros(2));
        let r = is_deterministic(&sx, 1e-12).unwrap();
        assert!(!r.deterministic);
        assert_eq!(r.witness, Some((0, 1.0)));
        assert!(r.rate_crosscheck_agrees);
    }

    #[test]
    fn projector_commutator_shortcut_matches_full_commutator() {
        let mut rng = stream_rng(4, 0);
        let h = Operator::random_hermitian(6, &mut rng);
        let pvm = Pvm::new(vec![0, 0, 1, 2, 2, 2], 3).unwrap();
        for b in 0..3 {
            let full = commutator_norm(&h, &pvm.projector(b)).unwrap();
            assert!((projector_commutator_norm(h.matrix(), &pvm, b) - full).abs() < 1e-14);
        }
    }

    #[test]
    fn block_diagonal_interaction_is_deterministic() {
        let mut rng = stream_rng(6, 0);
        let cell_of = vec![0, 0, 1, 1, 1, 2];
        let pvm = Pvm::new(cell_of.clone(), 3).unwrap();
        let full = Operator::random_hermitian(6, &mut rng);
        let mut block = CMatrix::zeros(6, 6);
        for i in 0..6 {
            for j in 0..6 {
                if cell_of[i] == cell_of[j] {
                    block[(i, j)] = full.matrix()[(i, j)];
                }
            }
        }
        let h_i = Operator::hermitian(block).unwrap();
        let r = is_deterministic_for(&h_i, &pvm, 1.0, 1e-12, 1).unwrap();
        assert!(r.deterministic);
        assert!(r.max_sampled_rate <= 1e-12);
        let r = is_deterministic_for(&full, &pvm, 1.0, 1e-12, 1).unwrap();
        assert!(!r.deterministic && r.max_sampled_rate > 0.0);
    }

    #[test]
    fn exact_law_without_jumps_is_constant() {
        let m = build_matrix_model(
            "static",
            vec![0, 1],
            Operator::diagonal(&[0.0, 1.0]),
            Operator::zeros(2),
            BTreeMap::new(),
            1.0,
        )
        .unwrap();
        let psi = StateVector::from_real(&[0.6, 0.8]);
        let law = exact_path_law(&m, &psi, 1.0, 0.25).unwrap();
        assert_eq!(law.probabilities.len(), 2);
        assert!((law.probability(&[0; 5]) - 0.36).abs() < 1e-12);
        assert!((law.probability(&[1; 5]) - 0.64).abs() < 1e-12);
    }

    #[test]
    fn exact_law_two_steps_normalised() {
        let m = sigma_x_model(Operator::zeros(2));
        let law = exact_path_law(&m, &psi_one_i(), 0.1, 0.05).unwrap();
        assert!(law.probabilities.len() <= 8);
        assert!((law.total_mass() - 1.0).abs() < 1e-9);
        // from config 2, the first step jumps with probability rate * dt = 2 * 0.05
        let p_start2: f64 = law
            .probabilities
            .iter()
            .filter(|(s, _)| s[0] == 1)
            .map(|(_, p)| p)
            .sum();
        let p_jump_first: f64 = law
            .probabilities
            .iter()
            .filter(|(s, _)| s[0] == 1 && s[1] == 0)
            .map(|(_, p)| p)
            .sum();
        assert!((p_jump_first / p_start2 - 0.1).abs() < 1e-12);
    }

    #[test]
    fn exact_law_guard() {
        let m = build_fermion_boson_model(&FockBasisSpec::default()).unwrap();
        let psi = StateVector::random(m.dim(), &mut stream_rng(1, 0));
        assert!(matches!(
            exact_path_law(&m, &psi, 1.0, 0.1),
            Err(Error::GuardExceeded(_))
        ));
        let small = sigma_x_model(Operator::zeros(2));
        assert!(exact_path_law(&small, &psi_one_i(), 1.0, 0.05).is_err());
    }

    #[test]
    fn time_grid_hits_horizon() {
        let g = TimeGrid::new(1.0, 0.3).unwrap();
        assert_eq!(g.n_steps, 4);
        assert_eq!(g.time(4), 1.0);
        assert_eq!(TimeGrid::new(1.0, 0.25).unwrap().n_steps, 4);
        assert!(TimeGrid::new(1.0, 0.0).is_err());
    }
}
