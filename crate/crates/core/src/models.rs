//! Example systems as finite-dimensional [`Model`]s.
//!
//! Every model carries a configuration space, its configuration observable
//! and a Hamiltonian split into a configuration-diagonal part (`h_diag`, block
//! diagonal over configuration cells) and a jump-generating part (`h_jump`,
//! everything that connects different cells). On a lattice the kinetic
//! hopping term is off-diagonal in configuration and therefore ends up in
//! `h_jump`, which turns the Bell process into Bell's original lattice
//! process.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use nalgebra::Complex;
use serde_json::{Map, Value};

use crate::hilbert::{
    build_operator_from_config_function, max_entry, CMatrix, Config, ConfigurationSpace,
    Operator, Pvm, DEFAULT_DIM_CAP, HERMITIAN_TOL, ONE, ZERO,
};
use crate::{Error, Result};

/// Tensor split `H = H_S (x) 1 + 1 (x) H_E + H_SE` of a model whose Hilbert
/// space factorises into a system and an environment.
#[derive(Clone, Debug)]
pub struct Factorization {
    pub system_dim: usize,
    pub env_dim: usize,
    /// Full basis index is `env * system_dim + sys` when true, otherwise
    /// `sys * env_dim + env`.
    pub system_inner: bool,
    pub h_system: Operator,
    pub h_env: Operator,
    /// Interaction term on the full space.
    pub h_interaction: Operator,
    /// Environment basis index -> environment configuration.
    pub env_cell_of: Vec<usize>,
}

impl Factorization {
    /// `A (x) 1_E` in the model's basis ordering.
    pub fn embed_system(&self, op: &Operator) -> Operator {
        let id = Operator::identity(self.env_dim);
        if self.system_inner {
            id.kron(op)
        } else {
            op.kron(&id)
        }
    }

    /// `1_S (x) B` in the model's basis ordering.
    pub fn embed_env(&self, op: &Operator) -> Operator {
        let id = Operator::identity(self.system_dim);
        if self.system_inner {
            op.kron(&id)
        } else {
            id.kron(op)
        }
    }

    pub fn product_state(
        &self,
        system: &crate::hilbert::StateVector,
        env: &crate::hilbert::StateVector,
    ) -> Result<crate::hilbert::StateVector> {
        system.check_dim(self.system_dim)?;
        env.check_dim(self.env_dim)?;
        let (outer, inner) = if self.system_inner {
            (env, system)
        } else {
            (system, env)
        };
        Ok(crate::hilbert::StateVector::new(
            outer.amplitudes().kronecker(inner.amplitudes()),
        ))
    }

    pub fn full_hamiltonian(&self) -> Result<Operator> {
        self.embed_system(&self.h_system)
            .add(&self.embed_env(&self.h_env))?
            .add(&self.h_interaction)
    }

    pub fn n_env_configs(&self) -> usize {
        self.env_cell_of.iter().copied().max().map_or(0, |m| m + 1)
    }
}

#[derive(Clone, Debug)]
pub struct Model {
    name: String,
    space: ConfigurationSpace,
    pvm: Pvm,
    h_total: Operator,
    h_diag: Operator,
    h_jump: Operator,
    observables: BTreeMap<String, Operator>,
    hbar: f64,
    factorization: Option<Factorization>,
}

/// Deviations from the model invariants (all zero for builder output).
#[derive(Clone, Debug, Default, serde::Serialize)]
pub struct SplitDefects {
    /// `max |h_total - h_diag - h_jump|`.
    pub sum_mismatch: f64,
    /// Largest `h_diag` entry linking two different cells.
    pub diag_cross_cell: f64,
    /// Largest `h_jump` entry inside one cell.
    pub jump_within_cell: f64,
}

impl SplitDefects {
    pub fn max(&self) -> f64 {
        self.sum_mismatch
            .max(self.diag_cross_cell)
            .max(self.jump_within_cell)
    }
}

impl Model {
    /// Assembles a model from an explicit split. Both parts must be
    /// Hermitian; the block structure is not enforced (see
    /// [`Model::split_defects`]).
    pub fn from_split(
        name: impl Into<String>,
        space: ConfigurationSpace,
        pvm: Pvm,
        h_diag: Operator,
        h_jump: Operator,
        observables: BTreeMap<String, Operator>,
        hbar: f64,
    ) -> Result<Self> {
        let dim = pvm.dim();
        if pvm.n_configs() != space.len() {
            return Err(Error::domain(format!(
                "PVM has {} cells for {} configurations",
                pvm.n_configs(),
                space.len()
            )));
        }
        for (label, op) in [("h_diag", &h_diag), ("h_jump", &h_jump)] {
            if op.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: op.dim(),
                });
            }
            op.require_hermitian()
                .map_err(|e| Error::domain(format!("{label}: {e}")))?;
        }
        for (label, op) in &observables {
            if op.dim() != dim {
                return Err(Error::domain(format!(
                    "observable `{label}` has dimension {} instead of {dim}",
                    op.dim()
                )));
            }
        }
        if !(hbar > 0.0) {
            return Err(Error::domain(format!("hbar must be positive, got {hbar}")));
        }
        let h_total = h_diag.add(&h_jump)?;
        Ok(Self {
            name: name.into(),
            space,
            pvm,
            h_total,
            h_diag,
            h_jump,
            observables,
            hbar,
            factorization: None,
        })
    }

    /// Splits `h_total` into its cell-block-diagonal part and the rest.
    pub fn from_hamiltonian(
        name: impl Into<String>,
        space: ConfigurationSpace,
        pvm: Pvm,
        h_total: &Operator,
        observables: BTreeMap<String, Operator>,
        hbar: f64,
    ) -> Result<Self> {
        h_total.require_hermitian()?;
        let n = pvm.dim();
        if h_total.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: h_total.dim(),
            });
        }
        let mut diag = CMatrix::zeros(n, n);
        let mut jump = CMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let z = h_total.matrix()[(i, j)];
                if pvm.cell_of(i) == pvm.cell_of(j) {
                    diag[(i, j)] = z;
                } else {
                    jump[(i, j)] = z;
                }
            }
        }
        Self::from_split(
            name,
            space,
            pvm,
            Operator::hermitian(diag)?,
            Operator::hermitian(jump)?,
            observables,
            hbar,
        )
    }

    pub fn with_factorization(mut self, factorization: Factorization) -> Result<Self> {
        if factorization.system_dim * factorization.env_dim != self.dim() {
            return Err(Error::domain(format!(
                "factorization {}x{} does not match dimension {}",
                factorization.system_dim,
                factorization.env_dim,
                self.dim()
            )));
        }
        let rebuilt = factorization.full_hamiltonian()?;
        let mismatch = rebuilt.max_distance(&self.h_total)?;
        if mismatch > 1e-12 {
            return Err(Error::domain(format!(
                "factorization does not reproduce the Hamiltonian (max deviation {mismatch:e})"
            )));
        }
        self.factorization = Some(factorization);
        Ok(self)
    }

    pub fn with_observable(mut self, name: impl Into<String>, op: Operator) -> Result<Self> {
        if op.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: op.dim(),
            });
        }
        self.observables.insert(name.into(), op);
        Ok(self)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.pvm.dim()
    }

    pub fn space(&self) -> &ConfigurationSpace {
        &self.space
    }

    pub fn pvm(&self) -> &Pvm {
        &self.pvm
    }

    pub fn n_configs(&self) -> usize {
        self.pvm.n_configs()
    }

    pub fn h_total(&self) -> &Operator {
        &self.h_total
    }

    pub fn h_diag(&self) -> &Operator {
        &self.h_diag
    }

    pub fn h_jump(&self) -> &Operator {
        &self.h_jump
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn observables(&self) -> &BTreeMap<String, Operator> {
        &self.observables
    }

    pub fn observable(&self, name: &str) -> Result<&Operator> {
        self.observables
            .get(name)
            .ok_or_else(|| Error::domain(format!("model `{}` has no observable `{name}`", self.name)))
    }

    pub fn factorization(&self) -> Option<&Factorization> {
        self.factorization.as_ref()
    }

    pub fn split_defects(&self) -> SplitDefects {
        let n = self.dim();
        let mut d = SplitDefects {
            sum_mismatch: max_entry(
                &(self.h_total.matrix() - self.h_diag.matrix() - self.h_jump.matrix()),
            ),
            ..Default::default()
        };
        for i in 0..n {
            for j in 0..n {
                if self.pvm.cell_of(i) == self.pvm.cell_of(j) {
                    d.jump_within_cell = d.jump_within_cell.max(self.h_jump.matrix()[(i, j)].norm());
                } else {
                    d.diag_cross_cell = d.diag_cross_cell.max(self.h_diag.matrix()[(i, j)].norm());
                }
            }
        }
        d
    }

    /// Checks hermiticity of all three Hamiltonian parts and the split.
    pub fn check_invariants(&self) -> Result<()> {
        for (label, op) in [
            ("h_total", &self.h_total),
            ("h_diag", &self.h_diag),
            ("h_jump", &self.h_jump),
        ] {
            op.require_hermitian()
                .map_err(|e| Error::domain(format!("{label}: {e}")))?;
        }
        let d = self.split_defects();
        if d.max() > HERMITIAN_TOL {
            return Err(Error::domain(format!("Hamiltonian split violated: {d:?}")));
        }
        Ok(())
    }
}

fn check_cap(dim: usize, cap: usize) -> Result<()> {
    if dim > cap {
        return Err(Error::DimensionCap { dim, cap });
    }
    Ok(())
}

/// Lattice fermion-boson field theory with a truncated boson Fock space.
#[derive(Clone, Debug, PartialEq)]
pub struct FockBasisSpec {
    pub sites: usize,
    /// Allowed total fermion numbers.
    pub fermion_counts: Vec<usize>,
    pub max_total_bosons: usize,
    pub fermion_mass: f64,
    pub boson_mass: f64,
    pub lattice_spacing: f64,
    /// Emission/absorption profile `phi(d)` for site distance `d`; missing
    /// distances couple with zero.
    pub coupling: Vec<f64>,
    pub hbar: f64,
    pub dim_cap: usize,
}

impl Default for FockBasisSpec {
    fn default() -> Self {
        Self {
            sites: 2,
            fermion_counts: vec![1, 2],
            max_total_bosons: 1,
            fermion_mass: 1.0,
            boson_mass: 1.0,
            lattice_spacing: 1.0,
            coupling: vec![0.5],
            hbar: 1.0,
            dim_cap: DEFAULT_DIM_CAP,
        }
    }
}

impl FockBasisSpec {
    /// Nearest-neighbour hopping `hbar^2 / (2 m dx^2)` of the discrete Laplacian.
    pub fn hopping(&self, mass: f64) -> f64 {
        self.hbar * self.hbar / (2.0 * mass * self.lattice_spacing * self.lattice_spacing)
    }

    fn phi(&self, distance: usize) -> f64 {
        self.coupling.get(distance).copied().unwrap_or(0.0)
    }
}

fn fermion_configs(sites: usize, counts: &BTreeSet<usize>) -> Vec<Vec<u8>> {
    let mut out: Vec<Vec<u8>> = (0u64..1 << sites)
        .filter(|bits| counts.contains(&(bits.count_ones() as usize)))
        .map(|bits| (0..sites).map(|x| ((bits >> x) & 1) as u8).collect())
        .collect();
    out.sort_by_key(|occ| (occ.iter().map(|&n| n as usize).sum::<usize>(), occ.clone()));
    out
}

fn boson_configs(sites: usize, max_total: usize) -> Vec<Vec<u32>> {
    fn rec(prefix: &mut Vec<u32>, sites: usize, left: usize, out: &mut Vec<Vec<u32>>) {
        if prefix.len() == sites {
            out.push(prefix.clone());
            return;
        }
        for n in 0..=left {
            prefix.push(n as u32);
            rec(prefix, sites, left - n, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), sites, max_total, &mut out);
    out.sort_by_key(|occ| (occ.iter().sum::<u32>(), occ.clone()));
    out
}

pub fn build_fermion_boson_model(spec: &FockBasisSpec) -> Result<Model> {
    if spec.sites == 0 {
        return Err(Error::domain("fermion-boson model needs at least one site"));
    }
    if spec.fermion_counts.is_empty() {
        return Err(Error::domain("fermion sector list is empty"));
    }
    if spec.sites > 20 {
        return Err(Error::domain("fermion-boson model supports at most 20 sites"));
    }
    let counts: BTreeSet<usize> = spec.fermion_counts.iter().copied().collect();
    if let Some(&c) = counts.iter().find(|&&c| c > spec.sites) {
        return Err(Error::domain(format!(
            "fermion count {c} exceeds the number of sites {}",
            spec.sites
        )));
    }
    if !(spec.fermion_mass > 0.0 && spec.boson_mass > 0.0 && spec.lattice_spacing > 0.0) {
        return Err(Error::domain("masses and lattice spacing must be positive"));
    }
    let fermions = fermion_configs(spec.sites, &counts);
    let bosons = boson_configs(spec.sites, spec.max_total_bosons);
    let dim = fermions.len() * bosons.len();
    check_cap(dim, spec.dim_cap)?;

    let l = spec.sites;
    let mut configs = Vec::with_capacity(dim);
    let mut index: HashMap<Vec<i64>, usize> = HashMap::with_capacity(dim);
    let mut sectors: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut component_of = Vec::with_capacity(dim);
    for f in &fermions {
        for b in &bosons {
            let content: Vec<i64> = f
                .iter()
                .map(|&n| n as i64)
                .chain(b.iter().map(|&n| n as i64))
                .collect();
            let label = format!(
                "f={}|b={}",
                f.iter().map(|n| n.to_string()).collect::<String>(),
                b.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(",")
            );
            let nf = f.iter().map(|&n| n as usize).sum::<usize>();
            let nb = b.iter().sum::<u32>() as usize;
            let next = sectors.len();
            component_of.push(*sectors.entry((nf, nb)).or_insert(next));
            index.insert(content.clone(), configs.len());
            configs.push(Config::new(label, content));
        }
    }

    let tf = spec.hopping(spec.fermion_mass);
    let tb = spec.hopping(spec.boson_mass);
    let mut h_diag = vec![0.0; dim];
    let mut jump = CMatrix::zeros(dim, dim);
    let mut adjacency = BTreeSet::new();
    let add = |from: usize, to_content: &[i64], amp: f64, jump: &mut CMatrix| {
        let to = index[to_content];
        jump[(to, from)] += Complex::new(amp, 0.0);
        to
    };

    for (i, config) in configs.iter().enumerate() {
        let occ = &config.content;
        let (nf, nb) = occ.split_at(l);
        let n_fermions: i64 = nf.iter().sum();
        let n_bosons: i64 = nb.iter().sum();
        h_diag[i] = 2.0 * tf * n_fermions as f64 + 2.0 * tb * n_bosons as f64;

        for x in 0..l.saturating_sub(1) {
            for (src, dst) in [(x, x + 1), (x + 1, x)] {
                // adjacent sites: the Jordan-Wigner string between them is empty
                if nf[src] == 1 && nf[dst] == 0 {
                    let mut to = occ.clone();
                    to[src] = 0;
                    to[dst] = 1;
                    let j = add(i, &to, -tf, &mut jump);
                    adjacency.insert((i.min(j), i.max(j)));
                }
                if nb[src] > 0 {
                    let mut to = occ.clone();
                    to[l + src] -= 1;
                    to[l + dst] += 1;
                    let amp = -tb * (nb[src] as f64).sqrt() * ((nb[dst] + 1) as f64).sqrt();
                    let j = add(i, &to, amp, &mut jump);
                    adjacency.insert((i.min(j), i.max(j)));
                }
            }
        }

        // sum_{x,y} n_f(x) phi(|x-y|) (b_y^dagger + b_y)
        for y in 0..l {
            let c: f64 = (0..l)
                .map(|x| nf[x] as f64 * spec.phi(x.abs_diff(y)))
                .sum();
            if c == 0.0 {
                continue;
            }
            if (n_bosons as usize) < spec.max_total_bosons {
                let mut to = occ.clone();
                to[l + y] += 1;
                add(i, &to, c * ((nb[y] + 1) as f64).sqrt(), &mut jump);
            }
            if nb[y] > 0 {
                let mut to = occ.clone();
                to[l + y] -= 1;
                add(i, &to, c * (nb[y] as f64).sqrt(), &mut jump);
            }
        }
    }

    let space = ConfigurationSpace::new(configs, component_of, Some(adjacency))?;
    let pvm = Pvm::trivial(dim);
    let fermion_number = build_operator_from_config_function(
        |q| Some(space.config(q).content[..l].iter().sum::<i64>() as f64),
        &pvm,
    )?;
    let boson_number = build_operator_from_config_function(
        |q| Some(space.config(q).content[l..].iter().sum::<i64>() as f64),
        &pvm,
    )?;
    let observables = BTreeMap::from([
        ("fermion_number".to_string(), fermion_number),
        ("boson_number".to_string(), boson_number),
    ]);
    Model::from_split(
        "fermion-boson",
        space,
        pvm,
        Operator::diagonal(&h_diag),
        Operator::hermitian(jump)?,
        observables,
        spec.hbar,
    )
}

/// `n` distinguishable particles on `sites` sites, lexicographic order.
fn position_tuples(sites: usize, particles: usize) -> Vec<Vec<usize>> {
    let total = sites.pow(particles as u32);
    (0..total)
        .map(|mut k| {
            let mut pos = vec![0; particles];
            for p in (0..particles).rev() {
                pos[p] = k % sites;
                k /= sites;
            }
            pos
        })
        .collect()
}

fn tuple_index(pos: &[usize], sites: usize) -> usize {
    pos.iter().fold(0, |acc, &p| acc * sites + p)
}

fn tuple_label(pos: &[usize]) -> String {
    format!(
        "({})",
        pos.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(",")
    )
}

/// Single-particle moves `site -> site +- 1` allowed by `linked`.
fn hopping_matrix<F>(configs: &[Vec<usize>], sites: usize, hopping: f64, linked: F) -> (CMatrix, BTreeSet<(usize, usize)>)
where
    F: Fn(usize, usize) -> bool,
{
    let n = configs.len();
    let mut m = CMatrix::zeros(n, n);
    let mut adjacency = BTreeSet::new();
    for (i, pos) in configs.iter().enumerate() {
        for p in 0..pos.len() {
            for dst in [pos[p].wrapping_sub(1), pos[p] + 1] {
                if dst >= sites || !linked(pos[p], dst) {
                    continue;
                }
                let mut to = pos.clone();
                to[p] = dst;
                let j = tuple_index(&to, sites);
                m[(j, i)] += Complex::new(-hopping, 0.0);
                adjacency.insert((i.min(j), i.max(j)));
            }
        }
    }
    (m, adjacency)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TwoComponentSpec {
    pub sites_per_component: usize,
    pub particles: usize,
    /// Site potential over the disjoint union, `2 * sites_per_component`
    /// entries (component 1 first); empty means zero.
    pub potential: Vec<f64>,
    pub hopping: f64,
    pub hbar: f64,
    pub dim_cap: usize,
}

impl Default for TwoComponentSpec {
    fn default() -> Self {
        Self {
            sites_per_component: 2,
            particles: 1,
            potential: Vec::new(),
            hopping: 1.0,
            hbar: 1.0,
            dim_cap: DEFAULT_DIM_CAP,
        }
    }
}

/// Particles hopping on two disconnected copies `C1 (+) C2` of a chain. The
/// configuration component records which copy particle 1 occupies.
pub fn build_two_component_model(spec: &TwoComponentSpec) -> Result<Model> {
    let n = spec.sites_per_component;
    if n == 0 || spec.particles == 0 {
        return Err(Error::domain("two-component model needs sites and at least one particle"));
    }
    let sites = 2 * n;
    if !spec.potential.is_empty() && spec.potential.len() != sites {
        return Err(Error::domain(format!(
            "potential has {} entries, expected {sites}",
            spec.potential.len()
        )));
    }
    let dim = sites
        .checked_pow(spec.particles as u32)
        .ok_or(Error::DimensionCap {
            dim: usize::MAX,
            cap: spec.dim_cap,
        })?;
    check_cap(dim, spec.dim_cap)?;
    let positions = position_tuples(sites, spec.particles);
    let component = |site: usize| usize::from(site >= n);
    let (hop, adjacency) = hopping_matrix(&positions, sites, spec.hopping, |a, b| {
        component(a) == component(b)
    });
    let potential = |s: usize| spec.potential.get(s).copied().unwrap_or(0.0);
    let diag: Vec<f64> = positions
        .iter()
        .map(|pos| pos.iter().map(|&s| potential(s)).sum())
        .collect();

    let configs = positions
        .iter()
        .map(|pos| Config::new(tuple_label(pos), pos.iter().map(|&p| p as i64).collect()))
        .collect();
    let component_of = positions.iter().map(|pos| component(pos[0])).collect();
    let space = ConfigurationSpace::new(configs, component_of, Some(adjacency))?;
    let pvm = Pvm::trivial(dim);
    let component_index = build_operator_from_config_function(
        |q| Some(1.0 + component(positions[q][0]) as f64),
        &pvm,
    )?;
    Model::from_split(
        "two-component",
        space,
        pvm,
        Operator::diagonal(&diag),
        Operator::hermitian(hop)?,
        BTreeMap::from([("component_index".to_string(), component_index)]),
        spec.hbar,
    )
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpinLatticeSpec {
    pub sites: usize,
    pub particles: usize,
    pub spin_dim: usize,
    pub hopping: f64,
    /// One-body site potential (empty means zero).
    pub potential: Vec<f64>,
    /// On-site pair interaction standing in for the Coulomb term.
    pub pair_coupling: f64,
    /// Field strength per site coupling to `S_z` of the spinful particle.
    pub magnetic_profile: Option<Vec<f64>>,
    pub hbar: f64,
    pub dim_cap: usize,
}

impl Default for SpinLatticeSpec {
    fn default() -> Self {
        Self {
            sites: 3,
            particles: 1,
            spin_dim: 2,
            hopping: 1.0,
            potential: Vec::new(),
            pair_coupling: 1.0,
            magnetic_profile: None,
            hbar: 1.0,
            dim_cap: DEFAULT_DIM_CAP,
        }
    }
}

/// Spin matrices `(S_x, S_y, S_z)` for spin `(d - 1) / 2`, basis ordered by
/// decreasing `m`.
pub fn spin_matrices(d: usize) -> [Operator; 3] {
    let s = (d as f64 - 1.0) / 2.0;
    let m = |k: usize| s - k as f64;
    let mut plus = CMatrix::zeros(d, d);
    for k in 1..d {
        // S+ |m_k> = sqrt(s(s+1) - m_k(m_k+1)) |m_{k-1}>
        let mk = m(k);
        plus[(k - 1, k)] = Complex::new((s * (s + 1.0) - mk * (mk + 1.0)).sqrt(), 0.0);
    }
    let minus = plus.adjoint();
    let sx = (&plus + &minus).scale(0.5);
    let sy = (&plus - &minus) * Complex::new(0.0, -0.5);
    let sz = CMatrix::from_fn(d, d, |i, j| if i == j { Complex::new(m(i), 0.0) } else { ZERO });
    [
        Operator::hermitian(sx).expect("hermitian"),
        Operator::hermitian(sy).expect("hermitian"),
        Operator::hermitian(sz).expect("hermitian"),
    ]
}

/// Permutation unitary on a `d`-dimensional internal space,
/// `|k> -> |perm[k]>`.
pub fn permutation_unitary(perm: &[usize]) -> Result<Operator> {
    let d = perm.len();
    let mut seen = vec![false; d];
    let mut m = CMatrix::zeros(d, d);
    for (k, &p) in perm.iter().enumerate() {
        if p >= d || seen[p] {
            return Err(Error::domain(format!("{perm:?} is not a permutation")));
        }
        seen[p] = true;
        m[(p, k)] = ONE;
    }
    Operator::new(m)
}

/// Particles with an internal spin factor: basis = position configuration
/// (x) spin index, cells = position configurations only. The spin factor
/// belongs to particle 1; the optional field couples `B(x_1) S_z`.
pub fn build_spin_lattice_model(spec: &SpinLatticeSpec) -> Result<Model> {
    if spec.spin_dim < 2 {
        return Err(Error::domain("spin_dim must be at least 2"));
    }
    if spec.sites == 0 || spec.particles == 0 {
        return Err(Error::domain("spin lattice needs sites and at least one particle"));
    }
    if !spec.potential.is_empty() && spec.potential.len() != spec.sites {
        return Err(Error::domain("potential length must equal the number of sites"));
    }
    if let Some(b) = &spec.magnetic_profile {
        if b.len() != spec.sites {
            return Err(Error::domain("magnetic profile length must equal the number of sites"));
        }
    }
    let n_pos = spec
        .sites
        .checked_pow(spec.particles as u32)
        .ok_or(Error::DimensionCap {
            dim: usize::MAX,
            cap: spec.dim_cap,
        })?;
    let dim = n_pos * spec.spin_dim;
    check_cap(dim, spec.dim_cap)?;

    let positions = position_tuples(spec.sites, spec.particles);
    let (hop, adjacency) = hopping_matrix(&positions, spec.sites, spec.hopping, |_, _| true);
    let potential = |s: usize| spec.potential.get(s).copied().unwrap_or(0.0);
    let diag: Vec<f64> = positions
        .iter()
        .map(|pos| {
            let one_body: f64 = pos.iter().map(|&s| potential(s)).sum();
            let mut pairs = 0.0;
            for a in 0..pos.len() {
                for b in a + 1..pos.len() {
                    if pos[a] == pos[b] {
                        pairs += spec.pair_coupling;
                    }
                }
            }
            one_body + pairs
        })
        .collect();
    let h_pos = Operator::hermitian(hop + Operator::diagonal(&diag).into_matrix())?;

    let [sx, sy, sz] = spin_matrices(spec.spin_dim);
    let id_pos = Operator::identity(n_pos);
    let h_interaction = match &spec.magnetic_profile {
        Some(field) => {
            let b: Vec<f64> = positions.iter().map(|pos| field[pos[0]]).collect();
            Operator::diagonal(&b).kron(&sz)
        }
        None => Operator::zeros(dim),
    };
    let factorization = Factorization {
        system_dim: spec.spin_dim,
        env_dim: n_pos,
        system_inner: true,
        h_system: Operator::zeros(spec.spin_dim),
        h_env: h_pos.clone(),
        h_interaction: h_interaction.clone(),
        env_cell_of: (0..n_pos).collect(),
    };
    let h_total = h_pos.kron(&Operator::identity(spec.spin_dim)).add(&h_interaction)?;

    let configs = positions
        .iter()
        .map(|pos| Config::new(tuple_label(pos), pos.iter().map(|&p| p as i64).collect()))
        .collect();
    let component_of = vec![0; n_pos];
    let space = ConfigurationSpace::new(configs, component_of, Some(adjacency))?;
    let pvm = Pvm::new((0..dim).map(|i| i / spec.spin_dim).collect(), n_pos)?;
    let observables = BTreeMap::from([
        ("sigma_x".to_string(), id_pos.kron(&sx.scale(2.0))),
        ("sigma_y".to_string(), id_pos.kron(&sy.scale(2.0))),
        ("sigma_z".to_string(), id_pos.kron(&sz.scale(2.0))),
    ]);
    let name = if spec.magnetic_profile.is_some() {
        "spin-lattice-zfield"
    } else {
        "spin-lattice"
    };
    Model::from_hamiltonian(name, space, pvm, &h_total, observables, spec.hbar)?
        .with_factorization(factorization)
}

/// Generic model from explicit matrices. `cell_of` maps basis indices to
/// configurations; observables are given as configuration functions.
pub fn build_matrix_model(
    name: &str,
    cell_of: Vec<usize>,
    h_diag: Operator,
    h_jump: Operator,
    config_observables: BTreeMap<String, Vec<f64>>,
    hbar: f64,
) -> Result<Model> {
    let n_configs = cell_of.iter().copied().max().map_or(0, |m| m + 1);
    let pvm = Pvm::new(cell_of, n_configs)?;
    let configs = (0..n_configs)
        .map(|q| Config::new(format!("q{q}"), vec![q as i64]))
        .collect();
    let space = ConfigurationSpace::discrete(configs);
    let mut observables = BTreeMap::new();
    for (label, values) in config_observables {
        if values.len() != n_configs {
            return Err(Error::domain(format!(
                "observable `{label}` has {} values for {n_configs} configurations",
                values.len()
            )));
        }
        let op = build_operator_from_config_function(|q| values.get(q).copied(), &pvm)?;
        observables.insert(label, op);
    }
    Model::from_split(name, space, pvm, h_diag, h_jump, observables, hbar)
}

// ---------------------------------------------------------------------------
// config documents

/// Builder names accepted by [`load_model_from_config`].
pub const BUILDERS: &[&str] = &["fermion_boson", "two_component", "spin_lattice", "matrix"];

struct Params<'a> {
    map: &'a Map<String, Value>,
    prefix: String,
    used: BTreeSet<&'a str>,
}

impl<'a> Params<'a> {
    fn new(map: &'a Map<String, Value>, prefix: &str) -> Self {
        Self {
            map,
            prefix: prefix.to_string(),
            used: BTreeSet::new(),
        }
    }

    fn path(&self, key: &str) -> String {
        format!("{}.{key}", self.prefix)
    }

    fn get(&mut self, key: &'a str) -> Option<&'a Value> {
        self.used.insert(key);
        self.map.get(key)
    }

    fn require(&mut self, key: &'a str) -> Result<&'a Value> {
        let path = self.path(key);
        self.get(key)
            .ok_or_else(|| Error::config(path, "required field is missing"))
    }

    fn as_f64(&self, key: &str, v: &Value) -> Result<f64> {
        v.as_f64()
            .ok_or_else(|| Error::config(self.path(key), "expected a number"))
    }

    fn as_usize(&self, key: &str, v: &Value) -> Result<usize> {
        v.as_u64()
            .map(|x| x as usize)
            .ok_or_else(|| Error::config(self.path(key), "expected a nonnegative integer"))
    }

    fn req_usize(&mut self, key: &'a str) -> Result<usize> {
        let v = self.require(key)?;
        self.as_usize(key, v)
    }

    fn opt_usize(&mut self, key: &'a str, default: usize) -> Result<usize> {
        match self.get(key) {
            Some(v) => self.as_usize(key, v),
            None => Ok(default),
        }
    }

    fn opt_f64(&mut self, key: &'a str, default: f64) -> Result<f64> {
        match self.get(key) {
            Some(v) => self.as_f64(key, v),
            None => Ok(default),
        }
    }

    fn f64_array(&self, key: &str, v: &Value) -> Result<Vec<f64>> {
        let arr = v
            .as_array()
            .ok_or_else(|| Error::config(self.path(key), "expected an array of numbers"))?;
        arr.iter()
            .enumerate()
            .map(|(i, x)| {
                x.as_f64()
                    .ok_or_else(|| Error::config(format!("{}[{i}]", self.path(key)), "expected a number"))
            })
            .collect()
    }

    fn opt_f64_array(&mut self, key: &'a str) -> Result<Option<Vec<f64>>> {
        match self.get(key) {
            Some(v) => self.f64_array(key, v).map(Some),
            None => Ok(None),
        }
    }

    fn usize_array(&self, key: &str, v: &Value) -> Result<Vec<usize>> {
        let arr = v
            .as_array()
            .ok_or_else(|| Error::config(self.path(key), "expected an array of integers"))?;
        arr.iter()
            .enumerate()
            .map(|(i, x)| {
                x.as_u64().map(|u| u as usize).ok_or_else(|| {
                    Error::config(format!("{}[{i}]", self.path(key)), "expected a nonnegative integer")
                })
            })
            .collect()
    }

    fn matrix(&self, key: &str, v: &Value, dim: usize) -> Result<CMatrix> {
        let rows = v
            .as_array()
            .ok_or_else(|| Error::config(self.path(key), "expected a nested array (matrix rows)"))?;
        if rows.len() != dim {
            return Err(Error::config(
                self.path(key),
                format!("expected {dim} rows, found {}", rows.len()),
            ));
        }
        let mut m = CMatrix::zeros(dim, dim);
        for (i, row) in rows.iter().enumerate() {
            let row_key = format!("{key}[{i}]");
            let values = self.f64_array(&row_key, row)?;
            if values.len() != dim {
                return Err(Error::config(
                    self.path(&row_key),
                    format!("expected {dim} columns, found {}", values.len()),
                ));
            }
            for (j, x) in values.into_iter().enumerate() {
                m[(i, j)] = Complex::new(x, 0.0);
            }
        }
        Ok(m)
    }

    fn complex_matrix(&mut self, key: &'a str, dim: usize) -> Result<CMatrix> {
        let re = self.require(key)?;
        let mut m = self.matrix(key, re, dim)?;
        let im_key: &'a str = match key {
            "h_diag" => "h_diag_im",
            "h_jump" => "h_jump_im",
            _ => return Ok(m),
        };
        if let Some(im) = self.get(im_key) {
            let im = self.matrix(im_key, im, dim)?;
            m += im * Complex::new(0.0, 1.0);
        }
        Ok(m)
    }

    fn finish(self) -> Result<()> {
        for key in self.map.keys() {
            if !self.used.contains(key.as_str()) {
                return Err(Error::config(self.path(key), "unknown field"));
            }
        }
        Ok(())
    }
}

/// Parses a model document (`{"builder": ..., "params": {...}, "hbar": ...}`).
pub fn load_model_from_config(text: &str) -> Result<Model> {
    let value: Value = serde_json::from_str(text)
        .map_err(|e| Error::config("$", format!("malformed document: {e}")))?;
    load_model_from_value(&value, "")
}

/// Like [`load_model_from_config`] for an already parsed document located at
/// `path` inside a larger one (used for error messages).
pub fn load_model_from_value(value: &Value, path: &str) -> Result<Model> {
    let join = |key: &str| {
        if path.is_empty() {
            key.to_string()
        } else {
            format!("{path}.{key}")
        }
    };
    let obj = value
        .as_object()
        .ok_or_else(|| Error::config(if path.is_empty() { "$" } else { path }, "expected an object"))?;
    for key in obj.keys() {
        if !matches!(key.as_str(), "builder" | "params" | "hbar") {
            return Err(Error::config(join(key), "unknown field"));
        }
    }
    let builder = obj
        .get("builder")
        .ok_or_else(|| Error::config(join("builder"), "required field is missing"))?
        .as_str()
        .ok_or_else(|| Error::config(join("builder"), "expected a string"))?;
    let hbar = match obj.get("hbar") {
        Some(v) => v
            .as_f64()
            .ok_or_else(|| Error::config(join("hbar"), "expected a number"))?,
        None => 1.0,
    };
    let empty = Map::new();
    let params_map = match obj.get("params") {
        Some(v) => v
            .as_object()
            .ok_or_else(|| Error::config(join("params"), "expected an object"))?,
        None => &empty,
    };
    let mut p = Params::new(params_map, &join("params"));

    let model = match builder {
        "fermion_boson" => {
            let d = FockBasisSpec::default();
            let sites = p.req_usize("sites")?;
            let counts_value = p.require("fermion_counts")?;
            let fermion_counts = p.usize_array("fermion_counts", counts_value)?;
            let spec = FockBasisSpec {
                sites,
                fermion_counts,
                max_total_bosons: p.req_usize("max_total_bosons")?,
                fermion_mass: p.opt_f64("fermion_mass", d.fermion_mass)?,
                boson_mass: p.opt_f64("boson_mass", d.boson_mass)?,
                lattice_spacing: p.opt_f64("lattice_spacing", d.lattice_spacing)?,
                coupling: p.opt_f64_array("coupling")?.unwrap_or(d.coupling),
                hbar,
                dim_cap: p.opt_usize("dim_cap", d.dim_cap)?,
            };
            p.finish()?;
            build_fermion_boson_model(&spec)?
        }
        "two_component" => {
            let d = TwoComponentSpec::default();
            let spec = TwoComponentSpec {
                sites_per_component: p.req_usize("sites_per_component")?,
                particles: p.opt_usize("particles", d.particles)?,
                potential: p.opt_f64_array("potential")?.unwrap_or_default(),
                hopping: p.opt_f64("hopping", d.hopping)?,
                hbar,
                dim_cap: p.opt_usize("dim_cap", d.dim_cap)?,
            };
            p.finish()?;
            build_two_component_model(&spec)?
        }
        "spin_lattice" => {
            let d = SpinLatticeSpec::default();
            let spec = SpinLatticeSpec {
                sites: p.req_usize("sites")?,
                particles: p.opt_usize("particles", d.particles)?,
                spin_dim: p.opt_usize("spin_dim", d.spin_dim)?,
                hopping: p.opt_f64("hopping", d.hopping)?,
                potential: p.opt_f64_array("potential")?.unwrap_or_default(),
                pair_coupling: p.opt_f64("pair_coupling", d.pair_coupling)?,
                magnetic_profile: p.opt_f64_array("magnetic_profile")?,
                hbar,
                dim_cap: p.opt_usize("dim_cap", d.dim_cap)?,
            };
            p.finish()?;
            build_spin_lattice_model(&spec)?
        }
        "matrix" => {
            let cell_value = p.require("cell_of")?;
            let cell_of = p.usize_array("cell_of", cell_value)?;
            let dim = cell_of.len();
            let h_diag = p.complex_matrix("h_diag", dim)?;
            let h_jump = p.complex_matrix("h_jump", dim)?;
            let mut observables = BTreeMap::new();
            if let Some(obs) = p.get("observables") {
                let obs_path = p.path("observables");
                let obs = obs
                    .as_object()
                    .ok_or_else(|| Error::config(obs_path.clone(), "expected an object"))?;
                let sub = Params::new(obs, &obs_path);
                for (label, values) in obs {
                    observables.insert(label.clone(), sub.f64_array(label, values)?);
                }
            }
            p.finish()?;
            let wrap = |m: CMatrix, key: &str| {
                Operator::hermitian(m).map_err(|e| Error::config(join(&format!("params.{key}")), e.to_string()))
            };
            build_matrix_model(
                "matrix",
                cell_of,
                wrap(h_diag, "h_diag")?,
                wrap(h_jump, "h_jump")?,
                observables,
                hbar,
            )?
        }
        other => return Err(Error::UnknownBuilder(other.to_string())),
    };
    Ok(model)
}

/// The number operator `sum_x a_x^dagger a_x` assembled from raw occupation
/// bits, independent of the configuration-function route.
pub fn occupation_number_operator(model: &Model, first: usize, len: usize) -> Operator {
    let diag: Vec<f64> = (0..model.dim())
        .map(|i| {
            let q = model.pvm().cell_of(i);
            model.space().config(q).content[first..first + len]
                .iter()
                .sum::<i64>() as f64
        })
        .collect();
    Operator::diagonal(&diag)
}
