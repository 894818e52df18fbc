//! Tolerances and step-size rules shared by every integrator and check.

/// Numerical thresholds. Everything that compares a floating-point residual
/// against a limit reads it from here.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NumericalPolicy {
    /// Max-abs deviation of `rho - rho^dagger` accepted for a density matrix.
    pub hermiticity: f64,
    /// Lowest eigenvalue below which a positivity warning is logged.
    pub positivity_warn: f64,
    /// Lowest eigenvalue below which integration aborts.
    pub positivity_fail: f64,
    /// Allowed excess of the trace over one.
    pub trace_excess: f64,
    /// Largest imaginary part tolerated in the trace of `rho * op`.
    pub expectation_imag: f64,
    /// Matrix elements of Q_S below this are treated as zero.
    pub spectrum_weight: f64,
    /// Relative spacing under which eigenvalues count as degenerate.
    pub degeneracy: f64,
    /// Branch probability under which a projection outcome is refused.
    pub projection_branch: f64,
    /// Unit-norm tolerance for trajectory states.
    pub state_norm: f64,
    /// A step is admissible when `dt * max_rate <= 1 / step_factor`.
    pub step_factor: f64,
    /// Propagator unitarity tolerance.
    pub unitarity: f64,
}

impl NumericalPolicy {
    pub const DEFAULT: NumericalPolicy = NumericalPolicy {
        hermiticity: 1e-12,
        positivity_warn: -1e-9,
        positivity_fail: -1e-6,
        trace_excess: 1e-12,
        expectation_imag: 1e-10,
        spectrum_weight: 1e-10,
        degeneracy: 1e-9,
        projection_branch: 1e-12,
        state_norm: 1e-10,
        step_factor: 20.0,
        unitarity: 1e-12,
    };

    /// Largest step allowed for the fastest rate or frequency in a problem.
    pub fn max_step(&self, fastest_rate: f64) -> f64 {
        if fastest_rate > 0.0 {
            1.0 / (self.step_factor * fastest_rate)
        } else {
            f64::INFINITY
        }
    }

    /// Checks `dt` against the step rule, naming `what` in the error.
    pub fn check_step(&self, what: &str, dt: f64, fastest_rate: f64) -> crate::Result<()> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(crate::Error::config(format!("{what}: dt must be positive, got {dt}")));
        }
        let limit = self.max_step(fastest_rate);
        // Allow a few ulps so that dt = 1/(20 r) itself is admissible.
        if dt > limit * (1.0 + 1e-12) {
            return Err(crate::Error::config(format!(
                "{what}: dt = {dt} exceeds the step limit {limit} (1/({} x fastest rate {fastest_rate}))",
                self.step_factor
            )));
        }
        Ok(())
    }
}

impl Default for NumericalPolicy {
    fn default() -> Self {
        Self::DEFAULT
    }
}

/// Probability that a Poisson process of the given rate fires within `dt`.
pub fn event_probability(rate: f64, dt: f64) -> f64 {
    -(-rate * dt).exp_m1()
}

/// Number of whole steps of size `dt` covering `t_end`.
pub fn step_count(t_end: f64, dt: f64) -> crate::Result<usize> {
    if !(t_end.is_finite() && dt.is_finite() && dt > 0.0) {
        return Err(crate::Error::config(format!(
            "t_end = {t_end} and dt = {dt} must be finite with dt > 0"
        )));
    }
    if t_end < dt * (1.0 - 1e-12) {
        return Err(crate::Error::config(format!("t_end = {t_end} is shorter than dt = {dt}")));
    }
    Ok((t_end / dt).round().max(1.0) as usize)
}
