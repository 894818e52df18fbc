//! Radical-pair description, Hamiltonian, initial state and the
//! singlet–triplet mixing spectrum.
//!
//! Units: time in ns, frequencies in rad/ns, rates in 1/ns.

use std::fmt;
use std::str::FromStr;

use nalgebra::SymmetricEigen;

use crate::numerics::NumericalPolicy;
use crate::spin_algebra::{dot, singlet_projector, spin_vector, triplet_projector, C64, DensityMatrix, OperatorMatrix};
use crate::{Error, Result};

pub const MAX_NUCLEI: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Electron {
    One,
    Two,
}

impl Electron {
    pub fn slot(self) -> usize {
        match self {
            Electron::One => 0,
            Electron::Two => 1,
        }
    }

    pub fn number(self) -> u8 {
        match self {
            Electron::One => 1,
            Electron::Two => 2,
        }
    }

    pub fn from_number(n: u8) -> Option<Self> {
        match n {
            1 => Some(Electron::One),
            2 => Some(Electron::Two),
            _ => None,
        }
    }
}

/// A spin-1/2 nucleus isotropically coupled to one of the electrons.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Nucleus {
    /// Hyperfine coupling A, rad/ns.
    pub coupling: f64,
    pub electron: Electron,
}

impl Nucleus {
    pub fn on_electron_one(coupling: f64) -> Self {
        Self {
            coupling,
            electron: Electron::One,
        }
    }
}

/// How recombination acts on the spin state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ReactionModel {
    HamiltonianOnly,
    Haberkorn,
    Kominis,
    JonesHore,
    /// Haberkorn removal plus extra singlet–triplet dephasing `eta` (1/ns).
    CustomDephasing { eta: f64 },
}

impl ReactionModel {
    pub const NAMES: [&'static str; 5] = ["hamiltonian_only", "haberkorn", "kominis", "jones_hore", "custom_dephasing"];

    pub fn name(&self) -> &'static str {
        match self {
            ReactionModel::HamiltonianOnly => "hamiltonian_only",
            ReactionModel::Haberkorn => "haberkorn",
            ReactionModel::Kominis => "kominis",
            ReactionModel::JonesHore => "jones_hore",
            ReactionModel::CustomDephasing { .. } => "custom_dephasing",
        }
    }

    /// Extra singlet–triplet dephasing rate on top of the Haberkorn term.
    pub fn extra_dephasing(&self, k_singlet: f64, k_triplet: f64) -> f64 {
        match *self {
            ReactionModel::HamiltonianOnly | ReactionModel::Haberkorn => 0.0,
            ReactionModel::Kominis => 0.5 * (k_singlet + k_triplet),
            ReactionModel::JonesHore => k_singlet + k_triplet,
            ReactionModel::CustomDephasing { eta } => eta,
        }
    }
}

impl fmt::Display for ReactionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ReactionModel {
    type Err = Error;

    /// Parses every model except `custom_dephasing`, whose rate must be
    /// supplied separately; that name yields `eta = 0`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hamiltonian_only" => Ok(ReactionModel::HamiltonianOnly),
            "haberkorn" => Ok(ReactionModel::Haberkorn),
            "kominis" => Ok(ReactionModel::Kominis),
            "jones_hore" => Ok(ReactionModel::JonesHore),
            "custom_dephasing" => Ok(ReactionModel::CustomDephasing { eta: 0.0 }),
            other => Err(Error::usage(format!(
                "unknown reaction model '{other}' (valid: {})",
                Self::NAMES.join(", ")
            ))),
        }
    }
}

/// Declarative radical-pair system.
#[derive(Clone, Debug, PartialEq)]
pub struct SpinSystemSpec {
    pub nuclei: Vec<Nucleus>,
    /// Electron Larmor frequency ω = γₑB, rad/ns.
    pub larmor: f64,
    pub k_singlet: f64,
    pub k_triplet: f64,
    pub model: ReactionModel,
}

impl SpinSystemSpec {
    /// One nucleus on electron 1 with coupling `a`, no recombination.
    pub fn single_nucleus(a: f64, larmor: f64) -> Self {
        Self {
            nuclei: vec![Nucleus::on_electron_one(a)],
            larmor,
            k_singlet: 0.0,
            k_triplet: 0.0,
            model: ReactionModel::HamiltonianOnly,
        }
    }

    /// Sets `k_S = k_T = k` and the reaction model.
    pub fn with_reaction(mut self, model: ReactionModel, k: f64) -> Self {
        self.model = model;
        self.k_singlet = k;
        self.k_triplet = k;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.nuclei.len() > MAX_NUCLEI {
            return Err(Error::config(format!(
                "{} nuclei requested, at most {MAX_NUCLEI} supported",
                self.nuclei.len()
            )));
        }
        for (i, n) in self.nuclei.iter().enumerate() {
            if !n.coupling.is_finite() {
                return Err(Error::config(format!("nucleus {} has non-finite coupling", i + 1)));
            }
        }
        if !self.larmor.is_finite() {
            return Err(Error::config("larmor frequency must be finite"));
        }
        for (name, k) in [("k_S", self.k_singlet), ("k_T", self.k_triplet)] {
            if !(k.is_finite() && k >= 0.0) {
                return Err(Error::config(format!("{name} must be finite and non-negative, got {k}")));
            }
        }
        match self.model {
            ReactionModel::HamiltonianOnly if self.k_singlet != 0.0 || self.k_triplet != 0.0 => Err(Error::config(
                "hamiltonian_only requires k_S = k_T = 0",
            )),
            ReactionModel::CustomDephasing { eta } if !(eta.is_finite() && eta >= 0.0) => {
                Err(Error::config(format!("custom dephasing rate must be non-negative, got {eta}")))
            }
            _ => Ok(()),
        }
    }

    pub fn n_nuclei(&self) -> usize {
        self.nuclei.len()
    }

    /// Nuclear spin multiplicity M = 2^N.
    pub fn multiplicity(&self) -> usize {
        1 << self.nuclei.len()
    }

    pub fn dim(&self) -> usize {
        4 * self.multiplicity()
    }

    pub fn layout(&self) -> Vec<usize> {
        vec![2; 2 + self.nuclei.len()]
    }

    pub fn extra_dephasing(&self) -> f64 {
        self.model.extra_dephasing(self.k_singlet, self.k_triplet)
    }

    /// Fastest frequency or rate, which sets the step limit.
    pub fn fastest_rate(&self) -> f64 {
        let a_max = self.nuclei.iter().map(|n| n.coupling.abs()).fold(0.0, f64::max);
        [a_max, self.larmor.abs(), self.k_singlet, self.k_triplet, self.extra_dephasing()]
            .into_iter()
            .fold(0.0, f64::max)
    }

    /// Same system with every hyperfine coupling negated.
    pub fn with_flipped_couplings(&self) -> Self {
        let mut out = self.clone();
        for n in &mut out.nuclei {
            n.coupling = -n.coupling;
        }
        out
    }
}

/// Every operator the integrators and observables need for one system.
#[derive(Clone, Debug)]
pub struct SpinOperators {
    pub s1: [OperatorMatrix; 3],
    pub s2: [OperatorMatrix; 3],
    pub nuclei: Vec<[OperatorMatrix; 3]>,
    pub singlet: OperatorMatrix,
    pub triplet: OperatorMatrix,
    /// Total nuclear z-spin Σᵢ I_iz.
    pub iz: OperatorMatrix,
    /// Q_S I_z Q_S.
    pub iz_singlet: OperatorMatrix,
    /// Q_T I_z Q_T.
    pub iz_triplet: OperatorMatrix,
    /// s₁z + s₂z + Σᵢ I_iz.
    pub jz: OperatorMatrix,
}

impl SpinOperators {
    pub fn new(n_nuclei: usize) -> Result<Self> {
        if n_nuclei > MAX_NUCLEI {
            return Err(Error::config(format!("at most {MAX_NUCLEI} nuclei supported")));
        }
        let layout = vec![2; 2 + n_nuclei];
        let dim: usize = layout.iter().product();
        let s1 = spin_vector(0, &layout)?;
        let s2 = spin_vector(1, &layout)?;
        let nuclei = (0..n_nuclei)
            .map(|k| spin_vector(2 + k, &layout))
            .collect::<Result<Vec<_>>>()?;
        let singlet = singlet_projector(&layout)?;
        let triplet = triplet_projector(&singlet);
        let iz = nuclei
            .iter()
            .fold(OperatorMatrix::zeros(dim), |acc, n| acc.add(&n[2]));
        let iz_singlet = singlet.mul(&iz).mul(&singlet);
        let iz_triplet = triplet.mul(&iz).mul(&triplet);
        let jz = s1[2].add(&s2[2]).add(&iz);
        Ok(Self {
            s1,
            s2,
            nuclei,
            singlet,
            triplet,
            iz,
            iz_singlet,
            iz_triplet,
            jz,
        })
    }

    pub fn for_spec(spec: &SpinSystemSpec) -> Result<Self> {
        Self::new(spec.n_nuclei())
    }

    pub fn dim(&self) -> usize {
        self.singlet.dim()
    }
}

/// `H = Σᵢ Aᵢ Iᵢ·s_{e(i)} + ω(s₁z + s₂z)`.
pub fn build_hamiltonian(spec: &SpinSystemSpec) -> Result<OperatorMatrix> {
    spec.validate()?;
    let ops = SpinOperators::for_spec(spec)?;
    Ok(hamiltonian_from_operators(spec, &ops))
}

pub(crate) fn hamiltonian_from_operators(spec: &SpinSystemSpec, ops: &SpinOperators) -> OperatorMatrix {
    let zeeman = ops.s1[2].add(&ops.s2[2]).scaled(spec.larmor);
    spec.nuclei.iter().zip(&ops.nuclei).fold(zeeman, |h, (n, i)| {
        let s = match n.electron {
            Electron::One => &ops.s1,
            Electron::Two => &ops.s2,
        };
        h.add(&dot(i, s).scaled(n.coupling))
    })
}

/// Singlet state with unpolarized nuclei: `ρ₀ = Q_S / Tr(Q_S)`.
pub fn initial_state(spec: &SpinSystemSpec) -> Result<DensityMatrix> {
    spec.validate()?;
    let qs = singlet_projector(&spec.layout())?;
    let tr = qs.trace().re;
    Ok(DensityMatrix::from_matrix_unchecked(qs.into_matrix() * C64::new(1.0 / tr, 0.0)))
}

/// One oscillating component of ⟨Q_S⟩(t).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MixingComponent {
    pub m: usize,
    pub n: usize,
    /// ω_m − ω_n, rad/ns.
    pub freq: f64,
    pub weight: f64,
}

/// Diagonalizes H and lists the Q_S matrix elements between distinct
/// eigenspaces, sorted by descending weight.
///
/// Eigenvalues closer than the degeneracy tolerance are grouped; the weight
/// between two groups is the Frobenius norm of that Q_S block, so the result
/// does not depend on the arbitrary basis inside a degenerate eigenspace.
/// `m` and `n` are the first eigen-indices (ascending energy) of each group.
pub fn st_spectrum_analysis(spec: &SpinSystemSpec) -> Result<Vec<MixingComponent>> {
    let policy = NumericalPolicy::DEFAULT;
    let ops = SpinOperators::for_spec(spec)?;
    spec.validate()?;
    let h = hamiltonian_from_operators(spec, &ops);
    let eig = SymmetricEigen::new(h.matrix().clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = nalgebra::DMatrix::from_fn(values.len(), values.len(), |r, c| eig.eigenvectors[(r, order[c])]);

    let scale = values.iter().fold(1.0_f64, |acc, v| acc.max(v.abs()));
    let mut groups: Vec<(usize, usize)> = Vec::new();
    let mut start = 0;
    for i in 1..=values.len() {
        if i == values.len() || values[i] - values[i - 1] > policy.degeneracy * scale {
            groups.push((start, i));
            start = i;
        }
    }

    let qs_eigen = vectors.adjoint() * ops.singlet.matrix() * &vectors;
    let mut out = Vec::new();
    for &(a0, a1) in &groups {
        for &(b0, b1) in &groups {
            if a0 == b0 {
                continue;
            }
            let mut sq = 0.0;
            for r in a0..a1 {
                for c in b0..b1 {
                    sq += qs_eigen[(r, c)].norm_sqr();
                }
            }
            let weight = sq.sqrt();
            if weight > policy.spectrum_weight {
                let mean = |lo: usize, hi: usize| values[lo..hi].iter().sum::<f64>() / (hi - lo) as f64;
                out.push(MixingComponent {
                    m: a0,
                    n: b0,
                    freq: mean(a0, a1) - mean(b0, b1),
                    weight,
                });
            }
        }
    }
    out.sort_by(|x, y| y.weight.total_cmp(&x.weight).then(x.m.cmp(&y.m)).then(x.n.cmp(&y.n)));
    Ok(out)
}
