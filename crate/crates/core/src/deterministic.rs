//! Density-matrix master equation `dρ/dt = −i[H, ρ] + L(ρ)` integrated with
//! fixed-step RK4.
//!
//! Every reaction model is one member of a single family:
//!
//! ```text
//! L(ρ) = −k_S Q_S ρ Q_S − k_T Q_T ρ Q_T − ((k_S + k_T)/2 + η)(Q_S ρ Q_T + Q_T ρ Q_S)
//! ```
//!
//! With `η = 0` this is the anticommutator (Haberkorn) form; `η > 0` adds
//! dephasing of the singlet–triplet coherences.

use crate::numerics::{step_count, NumericalPolicy};
use crate::spin_algebra::{expectation_raw, hermitize, CMatrix, DensityMatrix, C64};
use crate::system::{hamiltonian_from_operators, initial_state, SpinOperators, SpinSystemSpec};
use crate::estimates::iz_proj_raw;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReactionParams {
    pub k_singlet: f64,
    pub k_triplet: f64,
    /// Extra singlet–triplet dephasing rate, 1/ns.
    pub eta: f64,
}

impl ReactionParams {
    pub fn for_spec(spec: &SpinSystemSpec) -> Self {
        Self {
            k_singlet: spec.k_singlet,
            k_triplet: spec.k_triplet,
            eta: spec.extra_dephasing(),
        }
    }

    /// Total decay rate of the Q_S ρ Q_T coherences.
    pub fn coherence_rate(&self) -> f64 {
        0.5 * (self.k_singlet + self.k_triplet) + self.eta
    }
}

/// The reaction superoperator bound to a system's projectors.
#[derive(Clone, Debug)]
pub struct ReactionSuperoperator {
    params: ReactionParams,
    singlet: CMatrix,
}

impl ReactionSuperoperator {
    pub fn new(params: ReactionParams, ops: &SpinOperators) -> Self {
        Self {
            params,
            singlet: ops.singlet.matrix().clone(),
        }
    }

    pub fn params(&self) -> ReactionParams {
        self.params
    }

    /// Evaluates L(ρ).
    pub fn apply(&self, rho: &CMatrix) -> CMatrix {
        let qs = &self.singlet;
        // X = Q_S ρ and Y = Q_T ρ = ρ − X; then Q_S ρ Q_S = X Q_S, Q_S ρ Q_T = X − X Q_S,
        // Q_T ρ Q_S = Y Q_S and Q_T ρ Q_T = Y − Y Q_S.
        let x = qs * rho;
        let y = rho - &x;
        let xs = &x * qs;
        let ys = &y * qs;
        let ss = &xs;
        let st = &x - &xs;
        let ts = &ys;
        let tt = &y - &ys;
        let p = self.params;
        let c = p.coherence_rate();
        -(ss * C64::from(p.k_singlet) + tt * C64::from(p.k_triplet) + (st + ts) * C64::from(c))
    }
}

/// Convenience form of [`ReactionSuperoperator::apply`].
pub fn apply_reaction(params: ReactionParams, ops: &SpinOperators, rho: &DensityMatrix) -> CMatrix {
    ReactionSuperoperator::new(params, ops).apply(rho.matrix())
}

/// Sampled observables of one integration run.
///
/// `iz`, `iz_singlet`, `iz_triplet` and `jz` are unnormalized traces
/// `Tr(ρ·op)`; `iz_norm` divides by the surviving population and `iz_proj`
/// is evaluated on the normalized state.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TimeSeries {
    pub times: Vec<f64>,
    pub trace: Vec<f64>,
    pub qs: Vec<f64>,
    pub iz: Vec<f64>,
    pub iz_norm: Vec<f64>,
    pub iz_singlet: Vec<f64>,
    pub iz_triplet: Vec<f64>,
    pub jz: Vec<f64>,
    pub iz_proj: Vec<f64>,
}

impl TimeSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    fn push(&mut self, t: f64, rho: &CMatrix, ops: &SpinOperators) -> Result<()> {
        let trace = rho.trace().re;
        let iz = expectation_raw(rho, ops.iz.matrix())?;
        self.times.push(t);
        self.trace.push(trace);
        self.qs.push(expectation_raw(rho, ops.singlet.matrix())?);
        self.iz.push(iz);
        self.iz_norm.push(if trace > 0.0 { iz / trace } else { 0.0 });
        self.iz_singlet.push(expectation_raw(rho, ops.iz_singlet.matrix())?);
        self.iz_triplet.push(expectation_raw(rho, ops.iz_triplet.matrix())?);
        self.jz.push(expectation_raw(rho, ops.jz.matrix())?);
        self.iz_proj.push(if trace > 0.0 { iz_proj_raw(rho, ops)? } else { 0.0 });
        Ok(())
    }
}

/// Fixed-step integration controls.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntegrationGrid {
    pub t_end: f64,
    pub dt: f64,
    pub sample_every: usize,
}

impl IntegrationGrid {
    pub fn new(t_end: f64, dt: f64, sample_every: usize) -> Self {
        Self { t_end, dt, sample_every }
    }

    pub fn validate(&self, fastest_rate: f64) -> Result<usize> {
        if self.sample_every == 0 {
            return Err(Error::config("sample_every must be at least 1"));
        }
        NumericalPolicy::DEFAULT.check_step("integration", self.dt, fastest_rate)?;
        step_count(self.t_end, self.dt)
    }
}

/// Integrates the master equation from `ρ₀ = Q_S/Tr(Q_S)`.
pub fn integrate(spec: &SpinSystemSpec, t_end: f64, dt: f64, sample_every: usize) -> Result<TimeSeries> {
    integrate_grid(spec, IntegrationGrid::new(t_end, dt, sample_every))
}

pub fn integrate_grid(spec: &SpinSystemSpec, grid: IntegrationGrid) -> Result<TimeSeries> {
    spec.validate()?;
    let n_steps = grid.validate(spec.fastest_rate())?;
    let ops = SpinOperators::for_spec(spec)?;
    let h = hamiltonian_from_operators(spec, &ops).into_matrix();
    let reaction = ReactionSuperoperator::new(ReactionParams::for_spec(spec), &ops);
    let policy = NumericalPolicy::DEFAULT;

    let minus_i = C64::new(0.0, -1.0);
    let rhs = |rho: &CMatrix| -> CMatrix {
        let comm = &h * rho - rho * &h;
        comm * minus_i + reaction.apply(rho)
    };

    let mut rho = initial_state(spec)?.matrix().clone();
    let mut series = TimeSeries::default();
    let dt = grid.dt;
    let half = C64::from(0.5 * dt);
    let full = C64::from(dt);
    let sixth = C64::from(dt / 6.0);
    let two = C64::from(2.0);

    for step in 0..=n_steps {
        if step % grid.sample_every == 0 || step == n_steps {
            let t = step as f64 * dt;
            check_positivity(&rho, t, &policy)?;
            series.push(t, &rho, &ops)?;
        }
        if step == n_steps {
            break;
        }
        let k1 = rhs(&rho);
        let k2 = rhs(&(&rho + &k1 * half));
        let k3 = rhs(&(&rho + &k2 * half));
        let k4 = rhs(&(&rho + &k3 * full));
        rho += (k1 + k2 * two + k3 * two + k4) * sixth;
        hermitize(&mut rho);
    }
    Ok(series)
}

fn check_positivity(rho: &CMatrix, t: f64, policy: &NumericalPolicy) -> Result<()> {
    let min_eig = DensityMatrix::from_matrix_unchecked(rho.clone()).min_eigenvalue();
    if min_eig < policy.positivity_fail {
        return Err(Error::NumericalIntegrity(format!(
            "density matrix lost positivity at t = {t} ns (min eigenvalue {min_eig:e})"
        )));
    }
    if min_eig < policy.positivity_warn {
        log::warn!("density matrix min eigenvalue {min_eig:e} at t = {t} ns");
    }
    Ok(())
}

/// Largest |⟨I_z⟩| sample of a run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Peak {
    pub t_peak: f64,
    /// Signed ⟨I_z⟩ at the peak.
    pub value: f64,
}

/// Sample of maximum |⟨I_z⟩|, earliest on ties.
pub fn peak_polarization(series: &TimeSeries) -> Result<Peak> {
    peak_of(&series.times, &series.iz)
}

pub fn peak_of(times: &[f64], values: &[f64]) -> Result<Peak> {
    if times.is_empty() || values.is_empty() {
        return Err(Error::usage("cannot take the peak of an empty series"));
    }
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if v.abs() > values[best].abs() {
            best = i;
        }
    }
    Ok(Peak {
        t_peak: times[best],
        value: values[best],
    })
}
