//! Classical analog of singlet–triplet dephasing: an ensemble of coupled
//! pendulum pairs started in the anti-symmetric mode, randomly re-kicked and
//! removed from the ensemble at a constant rate.
//!
//! Equations of motion, with `c` the coupling frequency:
//! `x₁'' = −ω₀² x₁ − c² (x₁ − x₂)`, `x₂'' = −ω₀² x₂ − c² (x₂ − x₁)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::numerics::{event_probability, step_count, NumericalPolicy};
use crate::{Error, Result};

const BATCH: usize = 512;

/// What a kick does to pendulum 1.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum KickConvention {
    /// `x₁ = 1, v₁ = 0`.
    #[default]
    Position,
    /// Unit amplitude at pendulum 1's current phase.
    Energy,
}

impl KickConvention {
    pub fn name(&self) -> &'static str {
        match self {
            KickConvention::Position => "position",
            KickConvention::Energy => "energy",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "position" => Some(KickConvention::Position),
            "energy" => Some(KickConvention::Energy),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PendulumConfig {
    pub omega0: f64,
    pub coupling: f64,
    pub kick_rate: f64,
    pub decay_rate: f64,
    pub n_systems: usize,
    pub dt: f64,
    pub t_end: f64,
    pub seed: u64,
    pub sample_every: usize,
    pub kick: KickConvention,
}

impl Default for PendulumConfig {
    fn default() -> Self {
        Self {
            omega0: 1.0,
            coupling: 0.2,
            kick_rate: 0.05,
            decay_rate: 0.02,
            n_systems: 10_000,
            dt: 0.05,
            t_end: 300.0,
            seed: 0,
            sample_every: 10,
            kick: KickConvention::Position,
        }
    }
}

impl PendulumConfig {
    pub fn validate(&self) -> Result<usize> {
        if self.n_systems == 0 {
            return Err(Error::config("n_systems must be at least 1"));
        }
        if self.sample_every == 0 {
            return Err(Error::config("sample_every must be at least 1"));
        }
        for (name, v) in [
            ("omega0", self.omega0),
            ("coupling", self.coupling),
            ("kick_rate", self.kick_rate),
            ("decay_rate", self.decay_rate),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(format!("pendulum {name} must be non-negative, got {v}")));
            }
        }
        let fastest = [self.omega0, self.coupling, self.kick_rate, self.decay_rate]
            .into_iter()
            .fold(0.0, f64::max);
        NumericalPolicy::DEFAULT.check_step("pendulum", self.dt, fastest)?;
        step_count(self.t_end, self.dt)
    }
}

/// Positions and velocities of one coupled pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PendulumPair {
    pub x1: f64,
    pub v1: f64,
    pub x2: f64,
    pub v2: f64,
}

impl PendulumPair {
    /// Anti-symmetric normal mode, each displacement amplitude 1/√2.
    pub fn antisymmetric() -> Self {
        let a = std::f64::consts::FRAC_1_SQRT_2;
        Self {
            x1: a,
            v1: 0.0,
            x2: -a,
            v2: 0.0,
        }
    }

    fn accel(&self, omega0: f64, coupling: f64) -> (f64, f64) {
        let w2 = omega0 * omega0;
        let c2 = coupling * coupling;
        (-w2 * self.x1 - c2 * (self.x1 - self.x2), -w2 * self.x2 - c2 * (self.x2 - self.x1))
    }

    /// One velocity-Verlet step.
    pub fn step(&mut self, omega0: f64, coupling: f64, dt: f64) {
        let (a1, a2) = self.accel(omega0, coupling);
        self.v1 += 0.5 * dt * a1;
        self.v2 += 0.5 * dt * a2;
        self.x1 += dt * self.v1;
        self.x2 += dt * self.v2;
        let (a1, a2) = self.accel(omega0, coupling);
        self.v1 += 0.5 * dt * a1;
        self.v2 += 0.5 * dt * a2;
    }

    pub fn kick(&mut self, convention: KickConvention, omega0: f64) {
        match convention {
            KickConvention::Position => {
                self.x1 = 1.0;
                self.v1 = 0.0;
            }
            KickConvention::Energy => {
                let w = if omega0 > 0.0 { omega0 } else { 1.0 };
                let phase = (-self.v1 / w).atan2(self.x1);
                self.x1 = phase.cos();
                self.v1 = -w * phase.sin();
            }
        }
        self.x2 = 0.0;
        self.v2 = 0.0;
    }

    pub fn energy(&self, omega0: f64, coupling: f64) -> f64 {
        let d = self.x1 - self.x2;
        0.5 * (self.v1 * self.v1 + self.v2 * self.v2)
            + 0.5 * omega0 * omega0 * (self.x1 * self.x1 + self.x2 * self.x2)
            + 0.5 * coupling * coupling * d * d
    }

    pub fn displacement_sum(&self) -> f64 {
        self.x1 + self.x2
    }
}

/// Population-weighted ensemble mean of `x₁ + x₂`, i.e. the mean over
/// surviving systems times the surviving fraction.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PendulumSeries {
    pub times: Vec<f64>,
    pub mean_sum: Vec<f64>,
    pub se_sum: Vec<f64>,
    pub surviving_fraction: Vec<f64>,
}

#[derive(Clone)]
struct Sums {
    sum: Vec<f64>,
    sum_sq: Vec<f64>,
    alive: Vec<f64>,
}

fn run_system(cfg: &PendulumConfig, index: usize, n_steps: usize, sums: &mut Sums) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);
    let p_kick = event_probability(cfg.kick_rate, cfg.dt);
    let p_decay = event_probability(cfg.decay_rate, cfg.dt);
    let mut pair = PendulumPair::antisymmetric();
    for step in 0..=n_steps {
        if step % cfg.sample_every == 0 || step == n_steps {
            let j = sample_index(step, cfg.sample_every);
            let s = pair.displacement_sum();
            sums.sum[j] += s;
            sums.sum_sq[j] += s * s;
            sums.alive[j] += 1.0;
        }
        if step == n_steps {
            break;
        }
        pair.step(cfg.omega0, cfg.coupling, cfg.dt);
        if p_kick > 0.0 && rng.random::<f64>() < p_kick {
            pair.kick(cfg.kick, cfg.omega0);
        }
        if p_decay > 0.0 && rng.random::<f64>() < p_decay {
            return;
        }
    }
}

fn sample_index(step: usize, every: usize) -> usize {
    step.div_ceil(every)
}

pub fn simulate_pendulums(cfg: &PendulumConfig) -> Result<PendulumSeries> {
    let n_steps = cfg.validate()?;
    let n_samples = sample_index(n_steps, cfg.sample_every) + 1;
    let n = cfg.n_systems;
    let zeros = || Sums {
        sum: vec![0.0; n_samples],
        sum_sq: vec![0.0; n_samples],
        alive: vec![0.0; n_samples],
    };
    let batches: Vec<Sums> = (0..n.div_ceil(BATCH))
        .into_par_iter()
        .map(|b| {
            let mut sums = zeros();
            for index in b * BATCH..((b + 1) * BATCH).min(n) {
                run_system(cfg, index, n_steps, &mut sums);
            }
            sums
        })
        .collect();
    let mut total = zeros();
    for b in &batches {
        for j in 0..n_samples {
            total.sum[j] += b.sum[j];
            total.sum_sq[j] += b.sum_sq[j];
            total.alive[j] += b.alive[j];
        }
    }

    let nf = n as f64;
    let mut out = PendulumSeries::default();
    for j in 0..n_samples {
        let step = (j * cfg.sample_every).min(n_steps);
        let mean = total.sum[j] / nf;
        let se = if n > 1 {
            (((total.sum_sq[j] - nf * mean * mean) / (nf - 1.0)).max(0.0) / nf).sqrt()
        } else {
            0.0
        };
        out.times.push(step as f64 * cfg.dt);
        out.mean_sum.push(mean);
        out.se_sum.push(se);
        out.surviving_fraction.push(total.alive[j] / nf);
    }
    Ok(out)
}

pub fn simulate_pendulums_with_workers(cfg: &PendulumConfig, workers: usize) -> Result<PendulumSeries> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::config(format!("cannot build worker pool: {e}")))?;
    pool.install(|| simulate_pendulums(cfg))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unkicked_ensemble_stays_zero() {
        let cfg = PendulumConfig {
            kick_rate: 0.0,
            decay_rate: 0.0,
            n_systems: 50,
            t_end: 100.0,
            ..PendulumConfig::default()
        };
        let s = simulate_pendulums(&cfg).unwrap();
        assert!(s.mean_sum.iter().all(|v| v.abs() < 1e-10));
        assert!(s.surviving_fraction.iter().all(|&f| f == 1.0));
    }

    #[test]
    fn kick_sets_unit_sum() {
        let mut p = PendulumPair::antisymmetric();
        for _ in 0..37 {
            p.step(1.0, 0.2, 0.05);
        }
        p.kick(KickConvention::Position, 1.0);
        assert_eq!(p.displacement_sum(), 1.0);
        let mut q = PendulumPair::antisymmetric();
        for _ in 0..37 {
            q.step(1.0, 0.2, 0.05);
        }
        q.kick(KickConvention::Energy, 1.0);
        assert!((q.x1 * q.x1 + q.v1 * q.v1 - 1.0).abs() < 1e-12);
        assert_eq!((q.x2, q.v2), (0.0, 0.0));
    }

    #[test]
    fn verlet_conserves_energy() {
        let cfg = PendulumConfig::default();
        let mut p = PendulumPair::antisymmetric();
        p.kick(KickConvention::Position, cfg.omega0);
        let e0 = p.energy(cfg.omega0, cfg.coupling);
        let mut worst: f64 = 0.0;
        for _ in 0..10_000 {
            p.step(cfg.omega0, cfg.coupling, cfg.dt);
            worst = worst.max((p.energy(cfg.omega0, cfg.coupling) / e0 - 1.0).abs());
        }
        assert!(worst < 1e-3, "{worst}");
    }

    #[test]
    fn dephasing_without_decay_reaches_stationary_band() {
        // Stationary mean of x1+x2 under position kicks at rate λ is λ²/(λ²+ω₀²).
        let cfg = PendulumConfig {
            kick_rate: 0.5,
            decay_rate: 0.0,
            n_systems: 4000,
            t_end: 60.0,
            dt: 0.05,
            sample_every: 4,
            ..PendulumConfig::default()
        };
        let s = simulate_pendulums(&cfg).unwrap();
        let expected = 0.25 / 1.25;
        let window = |lo: f64, hi: f64| {
            let v: Vec<f64> = s
                .times
                .iter()
                .zip(&s.mean_sum)
                .filter(|(t, _)| **t >= lo && **t < hi)
                .map(|(_, m)| *m)
                .collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        let mid = window(20.0, 40.0);
        let late = window(40.0, 60.0);
        assert!((mid - expected).abs() < 0.03, "{mid}");
        assert!((late - expected).abs() < 0.03, "{late}");
        assert!(s.surviving_fraction.iter().all(|&f| f == 1.0));
    }

    #[test]
    fn deterministic_across_workers() {
        let cfg = PendulumConfig {
            n_systems: 1500,
            t_end: 20.0,
            ..PendulumConfig::default()
        };
        let a = simulate_pendulums_with_workers(&cfg, 1).unwrap();
        let b = simulate_pendulums_with_workers(&cfg, 4).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn step_policy() {
        let cfg = PendulumConfig {
            dt: 0.1,
            ..PendulumConfig::default()
        };
        assert!(matches!(simulate_pendulums(&cfg), Err(Error::Config(_))));
    }
}
