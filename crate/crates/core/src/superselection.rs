//! Condition checkers and verifiers for strong and weak superselection.
//!
//! A Hermitian `G` is strongly superselected when trajectories started from
//! `psi` have the same law as trajectories from the mixture of normalised
//! sector components `P_G(nu) psi`. Sufficient conditions: `G` is a function
//! of the configuration observable and commutes with `H`. Weak
//! superselection only asks that no experiment tell `psi` from the mixture.

use std::collections::BTreeMap;

use nalgebra::{Complex, SymmetricEigen};
use serde::Serialize;

use crate::belljump::{
    exact_path_law, projector_commutator_norm, rates_for, sample_ensemble,
    sample_mixture_ensemble, ExactPathLaw, PathEnsemble, TimeGrid, EXACT_MAX_CONFIGS,
    EXACT_MAX_STEPS, OCCUPATION_FLOOR,
};
use crate::hilbert::{
    commutator_norm, eigendecompose, max_entry, CMatrix, EigDecomposition, Operator, Propagator,
    Pvm, StateVector, DEFAULT_CLUSTER_TOL,
};
use crate::models::Model;
use crate::rng::stream_rng;
use crate::stats::{chi2_two_sample, ks_two_sample};
use crate::{Error, Result};

/// Sectors with `||P_G(nu) psi||^2` at or below this are skipped.
pub const SECTOR_FLOOR: f64 = 1e-14;
/// Default significance level before the Bonferroni split.
pub const DEFAULT_ALPHA: f64 = 0.01;
/// Ensembles smaller than this are too weak to certify anything.
pub const MIN_POWER_SAMPLES: usize = 1000;
/// Exact path laws must agree this closely.
pub const EXACT_LAW_TOL: f64 = 1e-8;

// ---------------------------------------------------------------------------
// configuration functions

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum WitnessKind {
    /// `G` couples two different configuration cells.
    CrossCell,
    /// Within one cell `G` is not a multiple of the identity.
    NotScalar,
}

/// Matrix entry showing that `G` is not a configuration function.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConfigWitness {
    pub row: usize,
    pub col: usize,
    pub deviation: f64,
    pub kind: WitnessKind,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FunctionExtraction {
    /// `f(q)` per configuration; `None` for configurations without basis states.
    Function(Vec<Option<f64>>),
    NotAFunction(ConfigWitness),
}

impl FunctionExtraction {
    pub fn function(&self) -> Option<&[Option<f64>]> {
        match self {
            Self::Function(f) => Some(f),
            Self::NotAFunction(_) => None,
        }
    }

    pub fn is_function(&self) -> bool {
        matches!(self, Self::Function(_))
    }
}

/// Decides whether `g = sum_q f(q) P(q)` within `tol` and returns `f`, or
/// the worst offending entry.
pub fn extract_config_function(g: &Operator, pvm: &Pvm, tol: f64) -> Result<FunctionExtraction> {
    g.require_hermitian()?;
    if g.dim() != pvm.dim() {
        return Err(Error::DimensionMismatch {
            expected: pvm.dim(),
            found: g.dim(),
        });
    }
    let m = g.matrix();
    let f: Vec<Option<f64>> = pvm
        .cells()
        .iter()
        .map(|cell| cell.first().map(|&i| m[(i, i)].re))
        .collect();
    let mut worst: Option<ConfigWitness> = None;
    for i in 0..g.dim() {
        for j in 0..g.dim() {
            let (qi, qj) = (pvm.cell_of(i), pvm.cell_of(j));
            let (deviation, kind) = if qi == qj {
                let expected = if i == j { f[qi].unwrap_or(0.0) } else { 0.0 };
                ((m[(i, j)] - Complex::new(expected, 0.0)).norm(), WitnessKind::NotScalar)
            } else {
                (m[(i, j)].norm(), WitnessKind::CrossCell)
            };
            if deviation > tol && worst.as_ref().is_none_or(|w| deviation > w.deviation) {
                worst = Some(ConfigWitness {
                    row: i,
                    col: j,
                    deviation,
                    kind,
                });
            }
        }
    }
    Ok(match worst {
        Some(w) => FunctionExtraction::NotAFunction(w),
        None => FunctionExtraction::Function(f),
    })
}

// ---------------------------------------------------------------------------
// strong conditions

#[derive(Clone, Debug, Serialize)]
pub struct StrongConditions {
    pub tolerance: f64,
    pub cluster_threshold: f64,
    pub eigenvalues: Vec<f64>,
    pub config_function: FunctionExtraction,
    /// `||[G, H]||`.
    pub commutator_g_h: f64,
    /// Max over `nu != nu'` of `||P_G(nu) H_I P_G(nu')||`.
    pub cross_sector_jump: f64,
    /// Whether `f` is constant on every connected component (`None` without `f`).
    pub constant_on_components: Option<bool>,
    /// Component on which `f` takes two values.
    pub component_witness: Option<usize>,
}

impl StrongConditions {
    pub fn config_function_holds(&self) -> bool {
        self.config_function.is_function()
    }

    pub fn commutation_holds(&self) -> bool {
        self.commutator_g_h <= self.tolerance
    }

    pub fn passed(&self) -> bool {
        self.config_function_holds() && self.commutation_holds()
    }
}

fn cross_sector_norm(op: &Operator, e: &EigDecomposition) -> f64 {
    let mut worst = 0.0_f64;
    for a in 0..e.len() {
        let left = e.projector(a).matrix() * op.matrix();
        for b in 0..e.len() {
            if a != b {
                worst = worst.max(max_entry(&(&left * e.projector(b).matrix())));
            }
        }
    }
    worst
}

pub fn check_strong_conditions(g: &Operator, model: &Model, tol: f64) -> Result<StrongConditions> {
    let config_function = extract_config_function(g, model.pvm(), tol)?;
    let commutator_g_h = commutator_norm(g, model.h_total())?;
    let e = eigendecompose(g, DEFAULT_CLUSTER_TOL)?;
    let cross_sector_jump = cross_sector_norm(model.h_jump(), &e);
    let (constant_on_components, component_witness) = match config_function.function() {
        Some(f) => {
            let mut value_of: BTreeMap<usize, f64> = BTreeMap::new();
            let mut witness = None;
            for (q, v) in f.iter().enumerate() {
                let Some(v) = *v else { continue };
                let c = model.space().component_of(q);
                let first = *value_of.entry(c).or_insert(v);
                if (first - v).abs() > tol && witness.is_none() {
                    witness = Some(c);
                }
            }
            (Some(witness.is_none()), witness)
        }
        None => (None, None),
    };
    Ok(StrongConditions {
        tolerance: tol,
        cluster_threshold: e.cluster_threshold(),
        eigenvalues: e.eigenvalues().to_vec(),
        config_function,
        commutator_g_h,
        cross_sector_jump,
        constant_on_components,
        component_witness,
    })
}

// ---------------------------------------------------------------------------
// conservation

#[derive(Clone, Debug, Serialize)]
pub struct ConservationCheck {
    pub paths_checked: usize,
    /// Paths along which `f(Q_t)` changed (`None` when `G` is not a
    /// configuration function).
    pub violating_paths: Option<usize>,
    pub first_violation: Option<u64>,
    /// `max_t |<G>_t - <G>_0|` over the sampled times.
    pub expectation_drift: f64,
    /// Largest `|(i/hbar) <[H, G]>_t|`.
    pub max_derivative: f64,
    /// Largest gap between a central difference of `<G>_t` and the
    /// commutator formula.
    pub derivative_mismatch: f64,
}

impl ConservationCheck {
    pub fn passed(&self, tol: f64) -> bool {
        self.violating_paths == Some(0) && self.expectation_drift <= tol
    }
}

/// Step used for the finite-difference derivative of `<G>_t`.
const FD_STEP: f64 = 1e-4;

pub fn check_conservation_conditions(
    g: &Operator,
    model: &Model,
    psi0: &StateVector,
    ensemble: Option<&PathEnsemble>,
    t_samples: &[f64],
) -> Result<ConservationCheck> {
    psi0.check_dim(model.dim())?;
    let extraction = extract_config_function(g, model.pvm(), 1e-12)?;
    let (paths_checked, violating_paths, first_violation) = match (ensemble, extraction.function()) {
        (Some(ens), Some(f)) => {
            let mut bad = 0;
            let mut first = None;
            for p in &ens.paths {
                let f0 = f[p.initial_config];
                if p.visited().any(|q| f[q] != f0) {
                    bad += 1;
                    first.get_or_insert(p.stream);
                }
            }
            (ens.len(), Some(bad), first)
        }
        (Some(ens), None) => (ens.len(), None, None),
        (None, Some(_)) => (0, Some(0), None),
        (None, None) => (0, None, None),
    };
    let propagator = Propagator::new(model.h_total(), model.hbar())?;
    let expect = |t: f64| -> Result<f64> { Ok(g.expectation(&propagator.apply(psi0, t)?)?.re) };
    let h = model.h_total().matrix();
    let comm = h * g.matrix() - g.matrix() * h;
    let comm = Operator::new(comm)?;
    let g0 = expect(0.0)?;
    let mut drift = 0.0_f64;
    let mut max_derivative = 0.0_f64;
    let mut mismatch = 0.0_f64;
    for &t in t_samples {
        drift = drift.max((expect(t)? - g0).abs());
        let psi_t = propagator.apply(psi0, t)?;
        let formula = (Complex::new(0.0, 1.0 / model.hbar()) * comm.expectation(&psi_t)?).re;
        let fd = (expect(t + FD_STEP)? - expect(t - FD_STEP)?) / (2.0 * FD_STEP);
        max_derivative = max_derivative.max(formula.abs());
        mismatch = mismatch.max((fd - formula).abs());
    }
    Ok(ConservationCheck {
        paths_checked,
        violating_paths,
        first_violation,
        expectation_drift: drift,
        max_derivative,
        derivative_mismatch: mismatch,
    })
}

// ---------------------------------------------------------------------------
// mixtures

#[derive(Clone, Debug, Serialize)]
pub struct MixtureMember {
    pub eigenvalue: f64,
    pub weight: f64,
    #[serde(skip)]
    pub state: StateVector,
}

#[derive(Clone, Debug, Serialize)]
pub struct Mixture {
    pub members: Vec<MixtureMember>,
    /// Sectors below [`SECTOR_FLOOR`]: `(eigenvalue, weight)`.
    pub skipped: Vec<(f64, f64)>,
    pub cluster_threshold: f64,
    pub source_observable: Option<String>,
}

impl Mixture {
    pub fn total_weight(&self) -> f64 {
        self.members.iter().map(|m| m.weight).sum()
    }

    pub fn weighted_states(&self) -> Vec<(f64, StateVector)> {
        self.members.iter().map(|m| (m.weight, m.state.clone())).collect()
    }

    /// Same members with replacement weights (used for power checks).
    pub fn with_weights(&self, weights: &[f64]) -> Result<Mixture> {
        if weights.len() != self.members.len() {
            return Err(Error::domain(format!(
                "{} weights for {} members",
                weights.len(),
                self.members.len()
            )));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) || !((weights.iter().sum::<f64>() - 1.0).abs() <= 1e-12) {
            return Err(Error::domain("mixture weights must be nonnegative and sum to 1"));
        }
        let mut out = self.clone();
        for (m, &w) in out.members.iter_mut().zip(weights) {
            m.weight = w;
        }
        Ok(out)
    }

    /// `sum_nu w_nu |psi^nu><psi^nu|`.
    pub fn density_matrix(&self) -> DensityMatrix {
        let n = self.members.first().map_or(0, |m| m.state.dim());
        let mut rho = CMatrix::zeros(n, n);
        for m in &self.members {
            let a = m.state.amplitudes();
            rho += (a * a.adjoint()).scale(m.weight);
        }
        DensityMatrix { matrix: rho }
    }
}

fn mixture_from_decomposition(psi: &StateVector, e: &EigDecomposition) -> Result<Mixture> {
    let mut members = Vec::new();
    let mut skipped = Vec::new();
    for (k, &nu) in e.eigenvalues().iter().enumerate() {
        let component = e.project(k, psi);
        let weight = component.norm_squared();
        if weight > SECTOR_FLOOR {
            members.push(MixtureMember {
                eigenvalue: nu,
                weight,
                state: component.renormalized()?,
            });
        } else {
            skipped.push((nu, weight));
        }
    }
    Ok(Mixture {
        members,
        skipped,
        cluster_threshold: e.cluster_threshold(),
        source_observable: None,
    })
}

pub fn build_mixture(psi: &StateVector, g: &Operator) -> Result<Mixture> {
    psi.check_dim(g.dim())?;
    if !psi.is_normalized() {
        return Err(Error::domain("mixture source state must be normalised"));
    }
    mixture_from_decomposition(psi, &eigendecompose(g, DEFAULT_CLUSTER_TOL)?)
}

#[derive(Clone, Debug)]
pub struct DensityMatrix {
    pub matrix: CMatrix,
}

impl DensityMatrix {
    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    pub fn hermiticity_defect(&self) -> f64 {
        max_entry(&(&self.matrix - self.matrix.adjoint()))
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let sym = (&self.matrix + self.matrix.adjoint()).scale(0.5);
        SymmetricEigen::new(sym).eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn operator(&self) -> Result<Operator> {
        Operator::new(self.matrix.clone())
    }
}

/// `sum_nu P_G(nu)|psi><psi|P_G(nu)`.
pub fn mixture_density_matrix(psi: &StateVector, g: &Operator) -> Result<DensityMatrix> {
    psi.check_dim(g.dim())?;
    let e = eigendecompose(g, DEFAULT_CLUSTER_TOL)?;
    let n = g.dim();
    let mut rho = CMatrix::zeros(n, n);
    for k in 0..e.len() {
        let a = e.project(k, psi).into_amplitudes();
        rho += &a * a.adjoint();
    }
    Ok(DensityMatrix { matrix: rho })
}

// ---------------------------------------------------------------------------
// exact identities

#[derive(Clone, Debug, Serialize)]
pub struct RateIdentityReport {
    /// `max |sigma^{psi_t}(q|q') - sigma^{(psi^nu)_t}(q|q')|`.
    pub max_rate_deviation: f64,
    /// `max ||(psi_t)^nu - (psi^nu)_t||`.
    pub max_state_deviation: f64,
    pub comparisons: usize,
    /// Whether `q'` was restricted to `f(q') = nu`.
    pub used_config_function: bool,
}

pub fn verify_rate_identity(
    psi: &StateVector,
    g: &Operator,
    model: &Model,
    t_samples: &[f64],
) -> Result<RateIdentityReport> {
    psi.check_dim(model.dim())?;
    let e = eigendecompose(g, DEFAULT_CLUSTER_TOL)?;
    let mixture = mixture_from_decomposition(psi, &e)?;
    let f = extract_config_function(g, model.pvm(), 1e-12)?;
    let propagator = Propagator::new(model.h_total(), model.hbar())?;
    let (h, pvm, hbar) = (model.h_jump().matrix(), model.pvm(), model.hbar());
    let mut report = RateIdentityReport {
        max_rate_deviation: 0.0,
        max_state_deviation: 0.0,
        comparisons: 0,
        used_config_function: f.is_function(),
    };
    for &t in t_samples {
        let psi_t = propagator.apply(psi, t)?;
        let occ_full = pvm.occupations(&psi_t);
        for member in &mixture.members {
            let k = e.index_of(member.eigenvalue).expect("member eigenvalue");
            let member_t = propagator.apply(&member.state, t)?;
            let projected = e.project(k, &psi_t);
            if projected.norm_squared() > SECTOR_FLOOR {
                let d = projected.renormalized()?.distance(&member_t);
                report.max_state_deviation = report.max_state_deviation.max(d);
            }
            let occ_member = pvm.occupations(&member_t);
            for from in 0..model.n_configs() {
                if let Some(values) = f.function() {
                    match values[from] {
                        Some(v) if e.index_of(v) == Some(k) => {}
                        _ => continue,
                    }
                }
                if occ_full[from] <= OCCUPATION_FLOOR || occ_member[from] <= OCCUPATION_FLOOR {
                    continue;
                }
                let a = rates_for(h, pvm, &psi_t, from, hbar)?;
                let b = rates_for(h, pvm, &member_t, from, hbar)?;
                for to in 0..model.n_configs() {
                    let d = (a.rate(to) - b.rate(to)).abs();
                    report.max_rate_deviation = report.max_rate_deviation.max(d);
                }
                report.comparisons += 1;
            }
        }
    }
    Ok(report)
}

#[derive(Clone, Debug, Serialize)]
pub struct ConditionalReport {
    pub max_deviation: f64,
    /// Eigenvalues whose sector weight at `t` is below [`SECTOR_FLOOR`].
    pub skipped_sectors: Vec<f64>,
}

/// Compares `<psi^nu_t|P(q)|psi^nu_t>` with
/// `1{f(q)=nu} <psi_t|P(q)|psi_t> / ||P_G(nu) psi_t||^2`.
pub fn verify_conditional_distribution(
    psi: &StateVector,
    g: &Operator,
    model: &Model,
    t: f64,
) -> Result<ConditionalReport> {
    psi.check_dim(model.dim())?;
    let f = match extract_config_function(g, model.pvm(), 1e-12)? {
        FunctionExtraction::Function(f) => f,
        FunctionExtraction::NotAFunction(w) => {
            return Err(Error::domain(format!(
                "observable is not a configuration function (entry ({}, {}) off by {:.3e})",
                w.row, w.col, w.deviation
            )))
        }
    };
    let e = eigendecompose(g, DEFAULT_CLUSTER_TOL)?;
    let psi_t = propagate_model(model, psi, t)?;
    let occ = model.pvm().occupations(&psi_t);
    let mut report = ConditionalReport {
        max_deviation: 0.0,
        skipped_sectors: Vec::new(),
    };
    for (k, &nu) in e.eigenvalues().iter().enumerate() {
        let component = e.project(k, &psi_t);
        let weight = component.norm_squared();
        if weight <= SECTOR_FLOOR {
            report.skipped_sectors.push(nu);
            continue;
        }
        let conditioned = component.renormalized()?;
        let left = model.pvm().occupations(&conditioned);
        for q in 0..model.n_configs() {
            let indicator = f[q].is_some_and(|v| e.index_of(v) == Some(k));
            let right = if indicator { occ[q] / weight } else { 0.0 };
            report.max_deviation = report.max_deviation.max((left[q] - right).abs());
        }
    }
    Ok(report)
}

fn propagate_model(model: &Model, psi: &StateVector, t: f64) -> Result<StateVector> {
    Propagator::new(model.h_total(), model.hbar())?.apply(psi, t)
}

// ---------------------------------------------------------------------------
// statistical path-law comparison

#[derive(Clone, Debug)]
pub struct StrongTestOptions {
    pub n: usize,
    pub horizon: f64,
    pub dt: f64,
    pub seed: u64,
    pub alpha: f64,
    /// Try the exact skeleton-law comparison when guards allow it.
    pub exact: bool,
}

impl Default for StrongTestOptions {
    fn default() -> Self {
        Self {
            n: 10_000,
            horizon: 1.2,
            dt: 0.1,
            seed: 1,
            alpha: DEFAULT_ALPHA,
            exact: true,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FeatureTest {
    pub feature: String,
    pub test: String,
    pub statistic: f64,
    pub p_value: f64,
    pub pass: bool,
    pub n_a: usize,
    pub n_b: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExactComparison {
    pub n_steps: usize,
    pub dt: f64,
    pub max_deviation: f64,
    pub mass_psi: f64,
    pub mass_mixture: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct PathEvidence {
    pub n: usize,
    pub alpha: f64,
    /// Per-feature level after the Bonferroni split.
    pub level: f64,
    pub features: Vec<FeatureTest>,
    pub exact: Option<ExactComparison>,
}

impl PathEvidence {
    pub fn rejected(&self) -> bool {
        self.features.iter().any(|f| !f.pass) || self.exact.as_ref().is_some_and(|e| !e.passed)
    }

    /// Enough evidence to back a positive verdict.
    pub fn sufficient(&self) -> bool {
        self.exact.is_some() || self.n >= MIN_POWER_SAMPLES
    }
}

fn counts<K: Ord>(items: impl Iterator<Item = K>) -> BTreeMap<K, u64> {
    let mut m = BTreeMap::new();
    for k in items {
        *m.entry(k).or_insert(0) += 1;
    }
    m
}

/// Sector label of a configuration: index of `f(q)` among the eigenvalues,
/// or the configuration itself when `G` is not a configuration function.
fn sector_labels(f: Option<&[Option<f64>]>, e: &EigDecomposition, n_configs: usize) -> Vec<usize> {
    (0..n_configs)
        .map(|q| match f {
            Some(f) => f[q].and_then(|v| e.index_of(v)).unwrap_or(usize::MAX),
            None => q,
        })
        .collect()
}

fn compare_ensembles(
    a: &PathEnsemble,
    b: &PathEnsemble,
    sectors: &[usize],
    sector_feature: &str,
    level: f64,
) -> Vec<FeatureTest> {
    let horizon = a.horizon;
    let mut out = Vec::new();
    let mut push = |feature: String, test: &str, outcome: crate::stats::TestOutcome| {
        out.push(FeatureTest {
            feature,
            test: test.to_string(),
            statistic: outcome.statistic,
            p_value: outcome.p_value,
            pass: outcome.p_value >= level,
            n_a: a.len(),
            n_b: b.len(),
        });
    };
    for (label, frac) in [("T/3", 1.0 / 3.0), ("2T/3", 2.0 / 3.0), ("T", 1.0)] {
        let t = horizon * frac;
        push(
            format!("occupancy@{label}"),
            "chi2",
            chi2_two_sample(
                &counts(a.paths.iter().map(|p| p.config_at(t))),
                &counts(b.paths.iter().map(|p| p.config_at(t))),
            ),
        );
    }
    push(
        "jump_count".to_string(),
        "chi2",
        chi2_two_sample(
            &counts(a.paths.iter().map(|p| p.jump_count())),
            &counts(b.paths.iter().map(|p| p.jump_count())),
        ),
    );
    let firsts = |e: &PathEnsemble| -> Vec<f64> { e.paths.iter().filter_map(|p| p.first_jump_time()).collect() };
    push("first_jump_time".to_string(), "ks", ks_two_sample(&firsts(a), &firsts(b)));
    push(
        sector_feature.to_string(),
        "chi2",
        chi2_two_sample(
            &counts(a.paths.iter().map(|p| sectors[p.initial_config])),
            &counts(b.paths.iter().map(|p| sectors[p.initial_config])),
        ),
    );
    out
}

/// Seed offset separating the mixture ensemble from the pure-state one.
const MIXTURE_SEED_OFFSET: u64 = 0x9E37_79B9_7F4A_7C15;

/// Path-law comparison between `psi` and an arbitrary mixture.
pub fn path_evidence(
    model: &Model,
    g: &Operator,
    psi: &StateVector,
    mixture: &Mixture,
    opts: &StrongTestOptions,
) -> Result<PathEvidence> {
    let e = eigendecompose(g, DEFAULT_CLUSTER_TOL)?;
    let f = extract_config_function(g, model.pvm(), 1e-12)?;
    let sectors = sector_labels(f.function(), &e, model.n_configs());
    let members = mixture.weighted_states();
    let (a, b) = rayon::join(
        || sample_ensemble(model, psi, opts.n, opts.horizon, opts.dt, opts.seed),
        || {
            sample_mixture_ensemble(
                model,
                &members,
                opts.n,
                opts.horizon,
                opts.dt,
                opts.seed.wrapping_add(MIXTURE_SEED_OFFSET),
            )
        },
    );
    let (a, b) = (a?, b?);
    let n_features = 6.0;
    let level = opts.alpha / n_features;
    let sector_feature = if f.is_function() { "sector_value" } else { "initial_config" };
    let features = compare_ensembles(&a, &b, &sectors, sector_feature, level);

    let exact = if opts.exact && model.n_configs() <= EXACT_MAX_CONFIGS {
        let fine = TimeGrid::new(opts.horizon, opts.dt)?;
        let steps = fine.n_steps.clamp(1, EXACT_MAX_STEPS);
        let dt = opts.horizon / steps as f64;
        if opts.horizon > 0.0 {
            let law_psi = exact_path_law(model, psi, opts.horizon, dt)?;
            let parts = members
                .iter()
                .map(|(w, s)| Ok((*w, exact_path_law(model, s, opts.horizon, dt)?)))
                .collect::<Result<Vec<(f64, ExactPathLaw)>>>()?;
            let law_mix = ExactPathLaw::mixture(&parts)?;
            let max_deviation = law_psi.max_deviation(&law_mix);
            Some(ExactComparison {
                n_steps: law_psi.grid.n_steps,
                dt,
                max_deviation,
                mass_psi: law_psi.total_mass(),
                mass_mixture: law_mix.total_mass(),
                passed: max_deviation <= EXACT_LAW_TOL,
            })
        } else {
            None
        }
    } else {
        None
    };
    Ok(PathEvidence {
        n: opts.n,
        alpha: opts.alpha,
        level,
        features,
        exact,
    })
}

/// Runs the strong conditions and the path-law comparison against the
/// mixture built from `g`, and assigns a verdict.
pub fn strong_superselection_test(
    model: &Model,
    g: &Operator,
    psi: &StateVector,
    opts: &StrongTestOptions,
) -> Result<SuperselectionReport> {
    let conditions = check_strong_conditions(g, model, 1e-12)?;
    let mixture = build_mixture(psi, g)?;
    let evidence = path_evidence(model, g, psi, &mixture, opts)?;
    let mut report = SuperselectionReport::new(model.name());
    report.cluster_threshold = Some(mixture.cluster_threshold);
    report.mixture = Some(mixture);
    report.strong = Some(conditions);
    report.weak = Some(check_weak_conditions(g, model, 1e-12)?);
    report.evidence = Some(evidence);
    report.decide();
    Ok(report)
}

// ---------------------------------------------------------------------------
// weak superselection

#[derive(Clone, Debug, Serialize)]
pub struct WeakConditions {
    pub tolerance: f64,
    pub commutator_g_h: f64,
    /// Max over cells `B` of `||[G, P(B)]||`.
    pub commutator_g_pvm: f64,
}

impl WeakConditions {
    pub fn passed(&self) -> bool {
        self.commutator_g_h <= self.tolerance && self.commutator_g_pvm <= self.tolerance
    }
}

pub fn check_weak_conditions(g: &Operator, model: &Model, tol: f64) -> Result<WeakConditions> {
    let commutator_g_h = commutator_norm(g, model.h_total())?;
    let pvm = model.pvm();
    let commutator_g_pvm = (0..pvm.n_configs())
        .map(|b| projector_commutator_norm(g.matrix(), pvm, b))
        .fold(0.0, f64::max);
    Ok(WeakConditions {
        tolerance: tol,
        commutator_g_h,
        commutator_g_pvm,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct WeakDistributionReport {
    pub conditions: WeakConditions,
    /// `max |tr(P(q) rho_t) - <psi_t|P(q)|psi_t>|` with `rho_t` the evolved mixture.
    pub max_deviation: f64,
    /// The identity is only claimed when the conditions hold.
    pub asserted: bool,
}

impl WeakDistributionReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.asserted && self.max_deviation <= tol
    }
}

pub fn weak_config_distribution_check(
    psi: &StateVector,
    g: &Operator,
    model: &Model,
    t_samples: &[f64],
) -> Result<WeakDistributionReport> {
    psi.check_dim(model.dim())?;
    let conditions = check_weak_conditions(g, model, 1e-12)?;
    let rho = mixture_density_matrix(psi, g)?;
    let propagator = Propagator::new(model.h_total(), model.hbar())?;
    let pvm = model.pvm();
    let mut max_deviation = 0.0_f64;
    for &t in t_samples {
        let u = propagator.unitary(t);
        let rho_t = u.matrix() * &rho.matrix * u.matrix().adjoint();
        let psi_t = propagator.apply(psi, t)?;
        let occ = pvm.occupations(&psi_t);
        for (q, cell) in pvm.cells().iter().enumerate() {
            let mixed: f64 = cell.iter().map(|&i| rho_t[(i, i)].re).sum();
            max_deviation = max_deviation.max((mixed - occ[q]).abs());
        }
    }
    Ok(WeakDistributionReport {
        asserted: conditions.passed(),
        conditions,
        max_deviation,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct DecoherencePoint {
    pub s: f64,
    pub distance: f64,
    pub bound: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DecoherenceReport {
    pub min_gap: f64,
    pub points: Vec<DecoherencePoint>,
}

impl DecoherenceReport {
    pub fn within_bound(&self) -> bool {
        self.points.iter().all(|p| p.distance <= p.bound * (1.0 + 1e-12) + 1e-15)
    }
}

/// `(e^{i d S} - 1) / (i d S)`, continuous at `d S = 0`.
fn phase_average(d: f64, s: f64) -> Complex<f64> {
    let x = d * s;
    if x.abs() < 1e-8 {
        return Complex::new(1.0, x / 2.0);
    }
    let half = x / 2.0;
    Complex::from_polar(half.sin() / half, half)
}

/// `rho_S = (1/S) int_0^S e^{iGs}|psi><psi|e^{-iGs} ds` in closed form.
pub fn time_averaged_state(psi: &StateVector, e: &EigDecomposition, s: f64) -> CMatrix {
    let n = psi.dim();
    let parts: Vec<_> = (0..e.len()).map(|k| e.project(k, psi).into_amplitudes()).collect();
    let mut rho = CMatrix::zeros(n, n);
    for (a, pa) in parts.iter().enumerate() {
        for (b, pb) in parts.iter().enumerate() {
            let c = phase_average(e.eigenvalues()[a] - e.eigenvalues()[b], s);
            rho += (pa * pb.adjoint()) * c;
        }
    }
    rho
}

fn spectral_norm_hermitian(m: CMatrix) -> f64 {
    let sym = (&m + m.adjoint()).scale(0.5);
    SymmetricEigen::new(sym).eigenvalues.iter().fold(0.0, |acc: f64, v| acc.max(v.abs()))
}

pub fn decoherence_convergence(psi: &StateVector, g: &Operator, s_values: &[f64]) -> Result<DecoherenceReport> {
    psi.check_dim(g.dim())?;
    let e = eigendecompose(g, DEFAULT_CLUSTER_TOL)?;
    let rho = mixture_density_matrix(psi, g)?;
    let min_gap = e.min_gap();
    let points = s_values
        .iter()
        .map(|&s| {
            if !(s > 0.0) {
                return Err(Error::domain(format!("averaging length must be positive, got {s}")));
            }
            let distance = spectral_norm_hermitian(time_averaged_state(psi, &e, s) - &rho.matrix);
            Ok(DecoherencePoint {
                s,
                distance,
                bound: 2.0 / (min_gap * s),
            })
        })
        .collect::<Result<_>>()?;
    Ok(DecoherenceReport { min_gap, points })
}

#[derive(Clone, Debug, Serialize)]
pub struct SubsystemReport {
    pub tolerance: f64,
    /// `||[G, H_S]||`.
    pub commutator_g_hs: f64,
    /// `||[G (x) 1, H_SE]||`.
    pub commutator_g_hse: f64,
    /// Largest spread over `s` of `<Psi_t(s)|1 (x) P_E(B)|Psi_t(s)>`.
    pub probability_spread: f64,
    pub s_values: Vec<f64>,
    pub times: Vec<f64>,
}

impl SubsystemReport {
    pub fn conditions_hold(&self) -> bool {
        self.commutator_g_hs <= self.tolerance && self.commutator_g_hse <= self.tolerance
    }

    pub fn passed(&self) -> bool {
        self.conditions_hold() && self.probability_spread <= 1e-9
    }
}

/// Subsystem form of weak superselection: checks the two commutators and
/// measures environment-region probabilities for `Psi_0(s) = e^{iGs} psi (x) phi`.
pub fn weak_superselection_subsystem_check(
    model: &Model,
    g_system: &Operator,
    tol: f64,
    seed: u64,
) -> Result<SubsystemReport> {
    let fac = model
        .factorization()
        .ok_or_else(|| Error::domain(format!("model `{}` declares no tensor factorisation", model.name())))?;
    if g_system.dim() != fac.system_dim {
        return Err(Error::DimensionMismatch {
            expected: fac.system_dim,
            found: g_system.dim(),
        });
    }
    g_system.require_hermitian()?;
    let commutator_g_hs = commutator_norm(g_system, &fac.h_system)?;
    let g_full = fac.embed_system(g_system);
    let commutator_g_hse = commutator_norm(&g_full, &fac.h_interaction)?;

    let mut rng = stream_rng(seed, 0);
    let psi_s = StateVector::random(fac.system_dim, &mut rng);
    let phi_e = StateVector::random(fac.env_dim, &mut rng);
    let g_prop = Propagator::new(g_system, 1.0)?;
    let h_prop = Propagator::new(model.h_total(), model.hbar())?;
    let s_values = vec![0.0, 0.7, 1.9, 3.1];
    let times = vec![0.0, 0.5, 1.3, 2.9];
    let n_env = fac.n_env_configs();
    let mut probs: Vec<Vec<Vec<f64>>> = Vec::new();
    for &s in &s_values {
        // exp(iGs) = Propagator(G, hbar = 1) at time -s
        let rotated = g_prop.apply(&psi_s, -s)?;
        let psi0 = fac.product_state(&rotated, &phi_e)?;
        let mut per_time = Vec::new();
        for &t in &times {
            let psi_t = h_prop.apply(&psi0, t)?;
            let mut p = vec![0.0; n_env];
            for (i, a) in psi_t.amplitudes().iter().enumerate() {
                let env = if fac.system_inner { i / fac.system_dim } else { i % fac.env_dim };
                p[fac.env_cell_of[env]] += a.norm_sqr();
            }
            per_time.push(p);
        }
        probs.push(per_time);
    }
    let mut spread = 0.0_f64;
    for run in &probs[1..] {
        for (pt, p0) in run.iter().zip(&probs[0]) {
            for (a, b) in pt.iter().zip(p0) {
                spread = spread.max((a - b).abs());
            }
        }
    }
    Ok(SubsystemReport {
        tolerance: tol,
        commutator_g_hs,
        commutator_g_hse,
        probability_spread: spread,
        s_values,
        times,
    })
}

// ---------------------------------------------------------------------------
// report and verdict

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Strong,
    WeakOnly,
    Neither,
    Inconclusive,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Strong => "strong",
            Self::WeakOnly => "weak-only",
            Self::Neither => "neither",
            Self::Inconclusive => "inconclusive",
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SuperselectionReport {
    pub model: String,
    pub observable: Option<String>,
    pub cluster_threshold: Option<f64>,
    pub strong: Option<StrongConditions>,
    pub weak: Option<WeakConditions>,
    pub subsystem: Option<SubsystemReport>,
    pub conservation: Option<ConservationCheck>,
    pub rate_identity: Option<RateIdentityReport>,
    pub conditional: Option<ConditionalReport>,
    pub weak_distribution: Option<WeakDistributionReport>,
    pub decoherence: Option<DecoherenceReport>,
    pub mixture: Option<Mixture>,
    pub evidence: Option<PathEvidence>,
    pub verdict: Verdict,
}

impl SuperselectionReport {
    pub fn new(model: &str) -> Self {
        Self {
            model: model.to_string(),
            observable: None,
            cluster_threshold: None,
            strong: None,
            weak: None,
            subsystem: None,
            conservation: None,
            rate_identity: None,
            conditional: None,
            weak_distribution: None,
            decoherence: None,
            mixture: None,
            evidence: None,
            verdict: Verdict::Inconclusive,
        }
    }

    /// Verdict implied by the recorded results:
    /// strong when the strong conditions hold and path evidence is sufficient
    /// and does not reject; inconclusive when the conditions hold but the
    /// evidence is missing, weak or rejecting; weak-only when the weak
    /// (projector or subsystem) conditions hold; otherwise neither.
    pub fn decide(&mut self) -> Verdict {
        let strong_ok = self.strong.as_ref().is_some_and(StrongConditions::passed);
        let weak_ok = self.weak.as_ref().is_some_and(WeakConditions::passed)
            || self.subsystem.as_ref().is_some_and(SubsystemReport::conditions_hold);
        self.verdict = if strong_ok {
            match &self.evidence {
                Some(ev) if ev.sufficient() && !ev.rejected() => Verdict::Strong,
                _ => Verdict::Inconclusive,
            }
        } else if weak_ok {
            Verdict::WeakOnly
        } else {
            Verdict::Neither
        };
        self.verdict
    }

    /// Every scalar condition norm in the report, keyed by name.
    pub fn condition_norms(&self) -> BTreeMap<String, f64> {
        let mut m = BTreeMap::new();
        if let Some(s) = &self.strong {
            m.insert("strong.commutator_g_h".into(), s.commutator_g_h);
            m.insert("strong.cross_sector_jump".into(), s.cross_sector_jump);
            if let FunctionExtraction::NotAFunction(w) = &s.config_function {
                m.insert("strong.config_function_witness".into(), w.deviation);
            }
        }
        if let Some(w) = &self.weak {
            m.insert("weak.commutator_g_h".into(), w.commutator_g_h);
            m.insert("weak.commutator_g_pvm".into(), w.commutator_g_pvm);
        }
        if let Some(s) = &self.subsystem {
            m.insert("subsystem.commutator_g_hs".into(), s.commutator_g_hs);
            m.insert("subsystem.commutator_g_hse".into(), s.commutator_g_hse);
            m.insert("subsystem.probability_spread".into(), s.probability_spread);
        }
        if let Some(c) = &self.conservation {
            m.insert("conservation.expectation_drift".into(), c.expectation_drift);
            m.insert("conservation.derivative_mismatch".into(), c.derivative_mismatch);
        }
        if let Some(r) = &self.rate_identity {
            m.insert("rate_identity.max_rate_deviation".into(), r.max_rate_deviation);
            m.insert("rate_identity.max_state_deviation".into(), r.max_state_deviation);
        }
        if let Some(c) = &self.conditional {
            m.insert("conditional.max_deviation".into(), c.max_deviation);
        }
        if let Some(w) = &self.weak_distribution {
            m.insert("weak_distribution.max_deviation".into(), w.max_deviation);
        }
        if let Some(ex) = self.evidence.as_ref().and_then(|e| e.exact.as_ref()) {
            m.insert("exact_law.max_deviation".into(), ex.max_deviation);
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::ONE;
    use crate::models::{
        build_fermion_boson_model, build_matrix_model, build_spin_lattice_model,
        build_two_component_model, FockBasisSpec, SpinLatticeSpec, TwoComponentSpec,
    };

    fn fermion_model() -> Model {
        build_fermion_boson_model(&FockBasisSpec::default()).unwrap()
    }

    fn small_fermion_model() -> Model {
        build_fermion_boson_model(&FockBasisSpec {
            sites: 3,
            fermion_counts: vec![1, 2],
            max_total_bosons: 0,
            ..FockBasisSpec::default()
        })
        .unwrap()
    }

    fn pvm2() -> Pvm {
        Pvm::new(vec![0, 1], 2).unwrap()
    }

    #[test]
    fn extraction_examples() {
        let f = extract_config_function(&Operator::diagonal(&[1.0, 2.0]), &pvm2(), 1e-12).unwrap();
        assert_eq!(f, FunctionExtraction::Function(vec![Some(1.0), Some(2.0)]));
        let sx = Operator::from_real(2, &[0.0, 1.0, 1.0, 0.0]).unwrap();
        match extract_config_function(&sx, &pvm2(), 1e-12).unwrap() {
            FunctionExtraction::NotAFunction(w) => {
                assert_eq!(w.kind, WitnessKind::CrossCell);
                assert_ne!(w.row, w.col);
            }
            other => panic!("unexpected {other:?}"),
        }
        let spin = build_spin_lattice_model(&SpinLatticeSpec::default()).unwrap();
        match extract_config_function(spin.observable("sigma_z").unwrap(), spin.pvm(), 1e-12).unwrap() {
            FunctionExtraction::NotAFunction(w) => assert_eq!(w.kind, WitnessKind::NotScalar),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn strong_conditions_pass_for_sector_observables() {
        let m = fermion_model();
        let c = check_strong_conditions(m.observable("fermion_number").unwrap(), &m, 1e-12).unwrap();
        assert!(c.passed(), "{c:?}");
        assert!(c.cross_sector_jump <= 1e-12);
        assert_eq!(c.constant_on_components, Some(true));

        let two = build_two_component_model(&TwoComponentSpec::default()).unwrap();
        let c = check_strong_conditions(two.observable("component_index").unwrap(), &two, 1e-12).unwrap();
        assert!(c.passed() && c.constant_on_components == Some(true));
    }

    #[test]
    fn conservation_holds_for_fermion_number() {
        let m = fermion_model();
        let g = m.observable("fermion_number").unwrap();
        let psi = StateVector::random(m.dim(), &mut stream_rng(3, 0));
        let ens = sample_ensemble(&m, &psi, 300, 2.0, 0.01, 5).unwrap();
        let c = check_conservation_conditions(g, &m, &psi, Some(&ens), &[0.3, 1.0, 2.0]).unwrap();
        assert_eq!(c.violating_paths, Some(0));
        assert!(c.expectation_drift <= 1e-9);
        assert!(c.passed(1e-9));
    }

    #[test]
    fn conservation_negative_control_matches_commutator_formula() {
        let m = fermion_model();
        let g = m.observable("boson_number").unwrap();
        let psi = StateVector::random(m.dim(), &mut stream_rng(4, 0));
        let c = check_conservation_conditions(g, &m, &psi, None, &[0.2, 0.9]).unwrap();
        assert!(c.max_derivative > 1e-3);
        assert!(c.derivative_mismatch <= 1e-6, "{}", c.derivative_mismatch);
    }

    #[test]
    fn trivially_conserved_without_jumps() {
        let m = build_matrix_model(
            "static",
            vec![0, 1, 2],
            Operator::diagonal(&[0.0, 0.5, 1.0]),
            Operator::zeros(3),
            BTreeMap::new(),
            1.0,
        )
        .unwrap();
        let g = Operator::diagonal(&[3.0, -1.0, 2.0]);
        let psi = StateVector::random(3, &mut stream_rng(1, 0));
        let ens = sample_ensemble(&m, &psi, 50, 1.0, 0.1, 1).unwrap();
        let c = check_conservation_conditions(&g, &m, &psi, Some(&ens), &[0.5, 1.0]).unwrap();
        assert!(c.passed(1e-12));
    }

    #[test]
    fn mixture_examples() {
        let g = Operator::diagonal(&[0.0, 1.0, 2.0]);
        let eig = build_mixture(&StateVector::basis(3, 1), &g).unwrap();
        assert_eq!(eig.members.len(), 1);
        assert!((eig.members[0].weight - 1.0).abs() < 1e-15);

        let psi = StateVector::from_real(&[(1.0f64 / 3.0).sqrt(), 0.0, (2.0f64 / 3.0).sqrt()]);
        let mix = build_mixture(&psi, &g).unwrap();
        let w: Vec<f64> = mix.members.iter().map(|m| m.weight).collect();
        assert!((w[0] - 1.0 / 3.0).abs() < 1e-14 && (w[1] - 2.0 / 3.0).abs() < 1e-14);
        assert_eq!(mix.skipped.len(), 1);
    }

    #[test]
    fn mixture_members_are_eigenvectors() {
        let m = fermion_model();
        let g = m.observable("fermion_number").unwrap();
        let psi = StateVector::random(m.dim(), &mut stream_rng(7, 0));
        let mix = build_mixture(&psi, g).unwrap();
        assert!((mix.total_weight() - 1.0).abs() <= 1e-12);
        for member in &mix.members {
            let gphi = g.apply(&member.state).unwrap();
            let resid = gphi.amplitudes() - member.state.amplitudes() * Complex::new(member.eigenvalue, 0.0);
            assert!(resid.norm() <= 1e-9);
            assert!(member.state.is_normalized());
        }
    }

    #[test]
    fn density_matrix_properties() {
        let g = Operator::diagonal(&[0.0, 0.0, 1.0, 1.0]);
        let psi = StateVector::from_real(&[0.5, 0.5, 0.5, 0.5]);
        let rho = mixture_density_matrix(&psi, &g).unwrap();
        for i in 0..2 {
            for j in 2..4 {
                assert!(rho.matrix[(i, j)].norm() <= 1e-14);
            }
        }
        assert!((rho.trace() - 1.0).abs() <= 1e-10);
        assert!(rho.min_eigenvalue() >= -1e-10);
        let mix = build_mixture(&psi, &g).unwrap();
        assert!(max_entry(&(&rho.matrix - &mix.density_matrix().matrix)) <= 1e-12);
        assert!(commutator_norm(&rho.operator().unwrap(), &g).unwrap() <= 1e-12);

        let eig = StateVector::basis(4, 2);
        let rho = mixture_density_matrix(&eig, &g).unwrap();
        let a = eig.amplitudes();
        assert!(max_entry(&(&rho.matrix - a * a.adjoint())) <= 1e-15);
    }

    #[test]
    fn rate_identity_holds_across_sectors() {
        let m = fermion_model();
        let g = m.observable("fermion_number").unwrap();
        let psi = StateVector::random(m.dim(), &mut stream_rng(11, 0));
        let r = verify_rate_identity(&psi, g, &m, &[0.0, 0.4, 1.1, 2.5, 4.0]).unwrap();
        assert!(r.used_config_function && r.comparisons > 0);
        assert!(r.max_rate_deviation <= 1e-9, "{}", r.max_rate_deviation);
        assert!(r.max_state_deviation <= 1e-10);

        let mix = build_mixture(&psi, g).unwrap();
        let r = verify_rate_identity(&mix.members[0].state, g, &m, &[0.0, 1.0]).unwrap();
        assert!(r.max_rate_deviation <= 1e-12);
    }

    #[test]
    fn rate_identity_fails_for_non_conserved_observable() {
        let m = fermion_model();
        let g = m.observable("boson_number").unwrap();
        let psi = StateVector::random(m.dim(), &mut stream_rng(12, 0));
        let r = verify_rate_identity(&psi, g, &m, &[0.5, 1.5]).unwrap();
        assert!(r.max_rate_deviation > 1e-3 || r.max_state_deviation > 1e-3);
    }

    #[test]
    fn conditional_distribution_identity() {
        let m = fermion_model();
        let g = m.observable("fermion_number").unwrap();
        let psi = StateVector::random(m.dim(), &mut stream_rng(13, 0));
        let r = verify_conditional_distribution(&psi, g, &m, 1.7).unwrap();
        assert!(r.max_deviation <= 1e-10);
        assert!(r.skipped_sectors.is_empty());

        // one empty sector is reported, not compared
        let mix = build_mixture(&psi, g).unwrap();
        let r = verify_conditional_distribution(&mix.members[0].state, g, &m, 0.3).unwrap();
        assert_eq!(r.skipped_sectors.len(), 1);
        assert!(r.max_deviation <= 1e-10);
    }

    #[test]
    fn exact_path_laws_agree_for_small_instance() {
        let m = small_fermion_model();
        assert!(m.dim() <= 8);
        let g = m.observable("fermion_number").unwrap();
        let psi = StateVector::random(m.dim(), &mut stream_rng(21, 0));
        let opts = StrongTestOptions {
            n: 2000,
            ..StrongTestOptions::default()
        };
        let report = strong_superselection_test(&m, g, &psi, &opts).unwrap();
        let exact = report.evidence.as_ref().unwrap().exact.as_ref().unwrap();
        assert!(exact.max_deviation <= 1e-8, "{}", exact.max_deviation);
        assert!((exact.mass_psi - 1.0).abs() < 1e-9);
        assert_eq!(report.verdict, Verdict::Strong);
    }

    #[test]
    fn eigenvector_passes_trivially() {
        let m = small_fermion_model();
        let g = m.observable("fermion_number").unwrap();
        let psi = StateVector::random(m.dim(), &mut stream_rng(22, 0));
        let member = build_mixture(&psi, g).unwrap().members[1].state.clone();
        let opts = StrongTestOptions {
            n: 1000,
            ..StrongTestOptions::default()
        };
        let report = strong_superselection_test(&m, g, &member, &opts).unwrap();
        assert_eq!(report.verdict, Verdict::Strong);
        assert!(report.evidence.unwrap().exact.unwrap().max_deviation <= 1e-15);
    }

    #[test]
    fn verdict_table() {
        let mut r = SuperselectionReport::new("m");
        assert_eq!(r.decide(), Verdict::Neither);
        r.weak = Some(WeakConditions {
            tolerance: 1e-12,
            commutator_g_h: 0.0,
            commutator_g_pvm: 0.0,
        });
        assert_eq!(r.decide(), Verdict::WeakOnly);
        let m = fermion_model();
        r.strong = Some(check_strong_conditions(m.observable("fermion_number").unwrap(), &m, 1e-12).unwrap());
        assert_eq!(r.decide(), Verdict::Inconclusive);
        r.evidence = Some(PathEvidence {
            n: 10,
            alpha: 0.01,
            level: 0.01 / 6.0,
            features: Vec::new(),
            exact: None,
        });
        assert_eq!(r.decide(), Verdict::Inconclusive);
        r.evidence.as_mut().unwrap().n = 5000;
        assert_eq!(r.decide(), Verdict::Strong);
        assert_eq!(Verdict::WeakOnly.to_string(), "weak-only");
    }

    #[test]
    fn weak_distribution_examples() {
        let m = fermion_model();
        let psi = StateVector::random(m.dim(), &mut stream_rng(30, 0));
        let r = weak_config_distribution_check(&psi, m.observable("fermion_number").unwrap(), &m, &[0.5, 2.0]).unwrap();
        assert!(r.passed(1e-10), "{r:?}");

        let field = build_spin_lattice_model(&SpinLatticeSpec {
            magnetic_profile: Some(vec![0.3, -0.5, 0.8]),
            ..SpinLatticeSpec::default()
        })
        .unwrap();
        let psi = StateVector::random(field.dim(), &mut stream_rng(31, 0));
        let r = weak_config_distribution_check(&psi, field.observable("sigma_z").unwrap(), &field, &[0.4, 1.3]).unwrap();
        assert!(r.passed(1e-10), "{r:?}");
        let r = weak_config_distribution_check(&psi, field.observable("sigma_x").unwrap(), &field, &[0.4]).unwrap();
        assert!(!r.asserted && r.conditions.commutator_g_h > 1e-3);
    }

    #[test]
    fn decoherence_two_level_closed_form() {
        let psi = StateVector::from_real(&[std::f64::consts::FRAC_1_SQRT_2; 2]);
        let g = Operator::diagonal(&[0.0, 1.0]);
        let r = decoherence_convergence(&psi, &g, &[1.0, 10.0, 100.0]).unwrap();
        for p in &r.points {
            // only the off-diagonal pair survives: |1 - e^{-iS}| / (2S)
            let expected = (ONE - Complex::from_polar(1.0, -p.s)).norm() / (2.0 * p.s);
            assert!((p.distance - expected).abs() < 1e-14);
        }
        assert!(r.points[2].distance <= 0.01);
        assert!(r.within_bound());
        let eig = decoherence_convergence(&StateVector::basis(2, 0), &g, &[1.0, 50.0]).unwrap();
        assert!(eig.points.iter().all(|p| p.distance <= 1e-15));
    }

    #[test]
    fn decoherence_matches_quadrature() {
        let mut rng = stream_rng(40, 0);
        let g = Operator::random_hermitian(4, &mut rng);
        let psi = StateVector::random(4, &mut rng);
        let e = eigendecompose(&g, DEFAULT_CLUSTER_TOL).unwrap();
        let s = 2.5;
        let closed = time_averaged_state(&psi, &e, s);
        // composite Simpson on e^{iGs}|psi><psi|e^{-iGs}
        let prop = Propagator::new(&g, 1.0).unwrap();
        let n = 400;
        let h = s / n as f64;
        let mut acc = CMatrix::zeros(4, 4);
        for k in 0..=n {
            let w = if k == 0 || k == n { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
            let v = prop.apply(&psi, -(k as f64) * h).unwrap().into_amplitudes();
            acc += (&v * v.adjoint()).scale(w);
        }
        let quad = acc.scale(h / 3.0 / s);
        assert!(max_entry(&(closed - quad)) < 1e-8);
    }

    #[test]
    fn subsystem_examples() {
        let free = build_spin_lattice_model(&SpinLatticeSpec::default()).unwrap();
        let [sx, sy, sz] = crate::models::spin_matrices(2);
        for s in [&sx, &sy, &sz] {
            let r = weak_superselection_subsystem_check(&free, &s.scale(2.0), 1e-12, 3).unwrap();
            assert!(r.passed(), "{r:?}");
        }
        let field = build_spin_lattice_model(&SpinLatticeSpec {
            magnetic_profile: Some(vec![0.3, -0.5, 0.8]),
            ..SpinLatticeSpec::default()
        })
        .unwrap();
        assert!(weak_superselection_subsystem_check(&field, &sz.scale(2.0), 1e-12, 3).unwrap().passed());
        let r = weak_superselection_subsystem_check(&field, &sx.scale(2.0), 1e-12, 3).unwrap();
        assert!(!r.conditions_hold() && r.commutator_g_hse > 1e-3);
    }
}
