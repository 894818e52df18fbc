//! Quantum-trajectory unraveling of singlet–triplet dephasing.
//!
//! Each trajectory is a pure state. Per step it evolves by the exact
//! propagator `exp(−iH·dt)`, then with probability `1 − e^{−η·dt}` it is
//! projected onto the singlet or triplet manifold (outcome probabilities
//! ⟨Q_S⟩ and ⟨Q_T⟩), and finally loses population at rate `k`. Averaged over
//! trajectories this reproduces the dephasing master equation for
//! `k_S = k_T = k`.
//!
//! Trajectory `i` draws from ChaCha stream `i` of the master seed and the
//! ensemble is reduced in fixed-size batches in index order, so the
//! statistics do not depend on the number of worker threads.

use nalgebra::{DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::numerics::{event_probability, step_count, NumericalPolicy};
use crate::spin_algebra::{max_abs, CMatrix, OperatorMatrix, C64};
use crate::system::{hamiltonian_from_operators, initial_state, ReactionModel, SpinOperators, SpinSystemSpec};
use crate::{Error, Result};

const BATCH: usize = 256;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum RemovalMode {
    /// Every trajectory survives and carries the weight `e^{−kt}`.
    #[default]
    AnalyticWeight,
    /// Trajectories are killed with probability `1 − e^{−k·dt}` per step.
    StochasticKill,
}

impl RemovalMode {
    pub fn name(&self) -> &'static str {
        match self {
            RemovalMode::AnalyticWeight => "analytic_weight",
            RemovalMode::StochasticKill => "stochastic_kill",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "analytic_weight" => Some(RemovalMode::AnalyticWeight),
            "stochastic_kill" => Some(RemovalMode::StochasticKill),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryConfig {
    pub n_trajectories: usize,
    pub master_seed: u64,
    pub dt: f64,
    pub t_end: f64,
    pub sample_every: usize,
    pub removal_mode: RemovalMode,
}

impl TrajectoryConfig {
    pub fn new(n_trajectories: usize, master_seed: u64, dt: f64, t_end: f64) -> Self {
        Self {
            n_trajectories,
            master_seed,
            dt,
            t_end,
            sample_every: 1,
            removal_mode: RemovalMode::AnalyticWeight,
        }
    }

    pub fn validate(&self, spec: &SpinSystemSpec) -> Result<usize> {
        if self.n_trajectories == 0 {
            return Err(Error::config("n_trajectories must be at least 1"));
        }
        if self.sample_every == 0 {
            return Err(Error::config("sample_every must be at least 1"));
        }
        NumericalPolicy::DEFAULT.check_step("trajectory", self.dt, spec.fastest_rate())?;
        step_count(self.t_end, self.dt)
    }
}

/// Ensemble means and standard errors on the sample grid. Means are
/// population weighted, so they compare directly with unnormalized
/// `Tr(ρ·op)` from the deterministic integrator.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrajectoryEnsembleStats {
    pub times: Vec<f64>,
    pub mean_iz: Vec<f64>,
    pub se_iz: Vec<f64>,
    pub mean_qs: Vec<f64>,
    pub se_qs: Vec<f64>,
    pub surviving_weight: Vec<f64>,
}

/// `exp(−iH·dt)` for Hermitian `H`, via eigendecomposition.
pub fn propagator(h: &OperatorMatrix, dt: f64) -> Result<OperatorMatrix> {
    let policy = NumericalPolicy::DEFAULT;
    if !h.is_hermitian(1e-12 * h.max_abs().max(1.0)) {
        return Err(Error::NumericalIntegrity("propagator needs a Hermitian generator".into()));
    }
    let eig = SymmetricEigen::try_new(h.matrix().clone(), 1e-15, 0)
        .ok_or_else(|| Error::NumericalIntegrity("eigendecomposition did not converge".into()))?;
    let v = &eig.eigenvectors;
    let phases = CMatrix::from_diagonal(&DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&e| C64::from_polar(1.0, -e * dt)),
    ));
    let u = v * phases * v.adjoint();
    let dim = u.nrows();
    let defect = max_abs(&(&u * u.adjoint() - CMatrix::identity(dim, dim)));
    if defect > policy.unitarity {
        return Err(Error::NumericalIntegrity(format!("propagator unitarity defect {defect:e}")));
    }
    OperatorMatrix::new(u)
}

/// Everything a trajectory needs, precomputed once per ensemble.
struct TrajectoryKernel {
    propagator: CMatrix,
    singlet: CMatrix,
    iz: CMatrix,
    initial_states: Vec<DVector<C64>>,
    initial_cdf: Vec<f64>,
    projection_probability: f64,
    kill_probability: f64,
    decay_rate: f64,
    dt: f64,
    n_steps: usize,
    sample_steps: Vec<usize>,
    mode: RemovalMode,
    seed: u64,
}

/// One pure-state trajectory; public so individual projection steps can be
/// exercised directly.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub state: DVector<C64>,
    pub alive: bool,
}

/// Outcome of a projective measurement of Q_S.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProjectionOutcome {
    Singlet,
    Triplet,
}

impl Trajectory {
    /// Projects onto the singlet or triplet manifold using the uniform draw
    /// `u`; a branch whose probability is below the policy threshold is never
    /// taken.
    pub fn project(&mut self, singlet: &CMatrix, u: f64) -> ProjectionOutcome {
        let eps = NumericalPolicy::DEFAULT.projection_branch;
        let ps_vec = singlet * &self.state;
        let p_singlet = self.state.dotc(&ps_vec).re.clamp(0.0, 1.0);
        let singlet_outcome = if p_singlet < eps {
            false
        } else if 1.0 - p_singlet < eps {
            true
        } else {
            u < p_singlet
        };
        if singlet_outcome {
            self.state = ps_vec.unscale(p_singlet.sqrt());
            ProjectionOutcome::Singlet
        } else {
            let pt_vec = &self.state - &ps_vec;
            self.state = pt_vec.unscale((1.0 - p_singlet).sqrt());
            ProjectionOutcome::Triplet
        }
    }

    pub fn norm(&self) -> f64 {
        self.state.norm()
    }
}

#[derive(Clone)]
struct Sums {
    iz: Vec<f64>,
    iz_sq: Vec<f64>,
    qs: Vec<f64>,
    qs_sq: Vec<f64>,
    alive: Vec<f64>,
}

impl Sums {
    fn zeros(n: usize) -> Self {
        Self {
            iz: vec![0.0; n],
            iz_sq: vec![0.0; n],
            qs: vec![0.0; n],
            qs_sq: vec![0.0; n],
            alive: vec![0.0; n],
        }
    }

    fn merge(&mut self, other: &Sums) {
        for (dst, src) in [
            (&mut self.iz, &other.iz),
            (&mut self.iz_sq, &other.iz_sq),
            (&mut self.qs, &other.qs),
            (&mut self.qs_sq, &other.qs_sq),
            (&mut self.alive, &other.alive),
        ] {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }
}

impl TrajectoryKernel {
    fn new(spec: &SpinSystemSpec, config: &TrajectoryConfig) -> Result<Self> {
        spec.validate()?;
        match spec.model {
            ReactionModel::Kominis | ReactionModel::CustomDephasing { .. } => {}
            other => {
                return Err(Error::Unsupported(format!(
                    "trajectory unraveling needs the kominis or custom_dephasing model, got {other}"
                )))
            }
        }
        if spec.k_singlet != spec.k_triplet {
            return Err(Error::Unsupported(format!(
                "trajectory unraveling requires k_S = k_T (got {} and {})",
                spec.k_singlet, spec.k_triplet
            )));
        }
        let n_steps = config.validate(spec)?;
        let ops = SpinOperators::for_spec(spec)?;
        let h = hamiltonian_from_operators(spec, &ops);
        let propagator = propagator(&h, config.dt)?.into_matrix();

        let rho0 = initial_state(spec)?;
        let eig = SymmetricEigen::new(rho0.matrix().clone());
        let mut initial_states = Vec::new();
        let mut weights = Vec::new();
        for (i, &w) in eig.eigenvalues.iter().enumerate() {
            if w > 1e-12 {
                let v = eig.eigenvectors.column(i).into_owned();
                initial_states.push(v.unscale(v.norm()));
                weights.push(w);
            }
        }
        let total: f64 = weights.iter().sum();
        let mut acc = 0.0;
        let initial_cdf = weights
            .iter()
            .map(|w| {
                acc += w / total;
                acc
            })
            .collect();

        let mut sample_steps: Vec<usize> = (0..=n_steps).step_by(config.sample_every).collect();
        if *sample_steps.last().unwrap() != n_steps {
            sample_steps.push(n_steps);
        }
        let k = spec.k_singlet;
        Ok(Self {
            propagator,
            singlet: ops.singlet.into_matrix(),
            iz: ops.iz.into_matrix(),
            initial_states,
            initial_cdf,
            projection_probability: event_probability(spec.extra_dephasing(), config.dt),
            kill_probability: event_probability(k, config.dt),
            decay_rate: k,
            dt: config.dt,
            n_steps,
            sample_steps,
            mode: config.removal_mode,
            seed: config.master_seed,
        })
    }

    fn rng_for(&self, index: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index as u64);
        rng
    }

    fn start(&self, rng: &mut ChaCha8Rng) -> Trajectory {
        let u: f64 = rng.random();
        let idx = self.initial_cdf.iter().position(|&c| u < c).unwrap_or(self.initial_cdf.len() - 1);
        Trajectory {
            state: self.initial_states[idx].clone(),
            alive: true,
        }
    }

    /// Runs trajectory `index`, adding its sample contributions to `sums`.
    fn run_one(&self, index: usize, sums: &mut Sums, scratch: &mut DVector<C64>) -> Result<()> {
        let mut rng = self.rng_for(index);
        let mut traj = self.start(&mut rng);
        let mut next_sample = 0;
        let tol = NumericalPolicy::DEFAULT.state_norm;
        for step in 0..=self.n_steps {
            if self.sample_steps.get(next_sample) == Some(&step) {
                let weight = match self.mode {
                    RemovalMode::AnalyticWeight => (-self.decay_rate * step as f64 * self.dt).exp(),
                    RemovalMode::StochasticKill => f64::from(u8::from(traj.alive)),
                };
                if weight > 0.0 {
                    let iz = traj.state.dotc(&(&self.iz * &traj.state)).re * weight;
                    let qs = traj.state.dotc(&(&self.singlet * &traj.state)).re * weight;
                    sums.iz[next_sample] += iz;
                    sums.iz_sq[next_sample] += iz * iz;
                    sums.qs[next_sample] += qs;
                    sums.qs_sq[next_sample] += qs * qs;
                    sums.alive[next_sample] += weight;
                }
                next_sample += 1;
            }
            if step == self.n_steps {
                break;
            }
            self.propagator.mul_to(&traj.state, scratch);
            std::mem::swap(&mut traj.state, scratch);
            if rng.random::<f64>() < self.projection_probability {
                let u: f64 = rng.random();
                traj.project(&self.singlet, u);
            }
            let norm = traj.norm();
            if (norm - 1.0).abs() > tol {
                return Err(Error::NumericalIntegrity(format!(
                    "trajectory {index} state norm {norm} at step {step}"
                )));
            }
            if self.mode == RemovalMode::StochasticKill && rng.random::<f64>() < self.kill_probability {
                // Contributes zero to every later sample.
                traj.alive = false;
                break;
            }
        }
        Ok(())
    }

    fn run_batch(&self, batch: usize, n_total: usize) -> Result<Sums> {
        let n_samples = self.sample_steps.len();
        let mut sums = Sums::zeros(n_samples);
        let mut scratch = DVector::zeros(self.singlet.nrows());
        let lo = batch * BATCH;
        let hi = (lo + BATCH).min(n_total);
        for index in lo..hi {
            self.run_one(index, &mut sums, &mut scratch)?;
        }
        Ok(sums)
    }
}

/// Runs the ensemble on the current rayon pool.
pub fn run_ensemble(spec: &SpinSystemSpec, config: &TrajectoryConfig) -> Result<TrajectoryEnsembleStats> {
    let kernel = TrajectoryKernel::new(spec, config)?;
    let n = config.n_trajectories;
    let n_batches = n.div_ceil(BATCH);
    let batches: Vec<Sums> = (0..n_batches)
        .into_par_iter()
        .map(|b| kernel.run_batch(b, n))
        .collect::<Result<_>>()?;
    let mut total = Sums::zeros(kernel.sample_steps.len());
    for b in &batches {
        total.merge(b);
    }

    let nf = n as f64;
    let stat = |sum: f64, sum_sq: f64| -> (f64, f64) {
        let mean = sum / nf;
        if n < 2 {
            return (mean, 0.0);
        }
        let var = ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0);
        (mean, (var / nf).sqrt())
    };
    let mut out = TrajectoryEnsembleStats::default();
    for (j, &step) in kernel.sample_steps.iter().enumerate() {
        let t = step as f64 * config.dt;
        let (miz, seiz) = stat(total.iz[j], total.iz_sq[j]);
        let (mqs, seqs) = stat(total.qs[j], total.qs_sq[j]);
        out.times.push(t);
        out.mean_iz.push(miz);
        out.se_iz.push(seiz);
        out.mean_qs.push(mqs);
        out.se_qs.push(seqs);
        out.surviving_weight.push(total.alive[j] / nf);
    }
    Ok(out)
}

/// Runs the ensemble on a dedicated pool with `workers` threads.
pub fn run_ensemble_with_workers(
    spec: &SpinSystemSpec,
    config: &TrajectoryConfig,
    workers: usize,
) -> Result<TrajectoryEnsembleStats> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::config(format!("cannot build worker pool: {e}")))?;
    pool.install(|| run_ensemble(spec, config))
}
