//! Closed-form polarization estimates, thermal reference values and unit
//! conversions between simulation units (rad/ns) and laboratory units.

use std::f64::consts::PI;

use crate::deterministic::TimeSeries;
use crate::spin_algebra::{expectation_raw, CMatrix, DensityMatrix};
use crate::system::SpinOperators;
use crate::{Error, Result};

/// Room temperature used wherever a temperature is needed and none is given.
pub const DEFAULT_TEMPERATURE_K: f64 = 300.0;

/// Physical constants and unit conversions; the single source for both.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhysicalConstants {
    /// Electron gyromagnetic ratio 2π × 2.8 MHz/G, expressed in rad/ns per G.
    pub gamma_e: f64,
    /// |μₑ/μₚ|.
    pub gamma_ratio: f64,
    /// Proton magnetic moment, J/T.
    pub mu_p: f64,
    /// Vacuum permeability, T·m/A.
    pub mu_0: f64,
    /// Boltzmann constant, J/K.
    pub k_b: f64,
    /// Reduced Planck constant, J·s.
    pub hbar: f64,
    /// Avogadro constant, 1/mol.
    pub avogadro: f64,
}

impl PhysicalConstants {
    pub const SI: PhysicalConstants = PhysicalConstants {
        gamma_e: 2.0 * PI * 2.8e-3,
        gamma_ratio: 658.5,
        mu_p: 1.410_606_797_36e-26,
        mu_0: 1.256_637_062_12e-6,
        k_b: 1.380_649e-23,
        hbar: 1.054_571_817e-34,
        avogadro: 6.022_140_76e23,
    };

    /// Electron Larmor frequency in rad/ns for a field in gauss.
    pub fn larmor_from_gauss(&self, b_gauss: f64) -> f64 {
        self.gamma_e * b_gauss
    }

    /// Field in gauss whose electron Larmor frequency is `omega` rad/ns.
    pub fn gauss_from_larmor(&self, omega: f64) -> f64 {
        omega / self.gamma_e
    }
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self::SI
    }
}

/// Nuclear polarization carried by projected pairs:
/// `⟨Q_S⟩⟨I_z⟩^S + ⟨Q_T⟩⟨I_z⟩^T` on the normalized state.
pub fn iz_proj(rho: &DensityMatrix, ops: &SpinOperators) -> Result<f64> {
    iz_proj_raw(rho.matrix(), ops)
}

pub(crate) fn iz_proj_raw(rho: &CMatrix, ops: &SpinOperators) -> Result<f64> {
    let tr = rho.trace().re;
    if tr <= 0.0 {
        return Err(Error::usage("iz_proj needs a state with positive trace"));
    }
    let qs = expectation_raw(rho, ops.singlet.matrix())? / tr;
    let qt = expectation_raw(rho, ops.triplet.matrix())? / tr;
    let izs = expectation_raw(rho, ops.iz_singlet.matrix())? / tr;
    let izt = expectation_raw(rho, ops.iz_triplet.matrix())? / tr;
    let weighted = qs * izs + qt * izt;
    // When sorting is exact (izT = −izS) the weighted sum collapses to
    // izS (2⟨Q_S⟩ − 1); the two differ by exactly (1 − ⟨Q_S⟩)(izS + izT).
    let residual = (izs + izt).abs();
    if residual <= 1e-10 {
        let collapsed = izs * (2.0 * qs - 1.0);
        if (weighted - collapsed).abs() > 1e-12 + residual {
            return Err(Error::NumericalIntegrity(format!(
                "projected polarization forms disagree: {weighted:e} vs {collapsed:e}"
            )));
        }
    }
    Ok(weighted)
}

fn require_positive_k(k: f64) -> Result<()> {
    if k > 0.0 {
        Ok(())
    } else {
        Err(Error::usage(format!("recombination rate k must be positive, got {k}")))
    }
}

/// Singlet-pair nuclear polarization after one reaction time, `−ωA/k²`.
pub fn estimate_izs(omega: f64, a: f64, k: f64) -> Result<f64> {
    require_positive_k(k)?;
    Ok(-omega * a / (k * k))
}

/// Decoherence-induced net polarization, `ωΩ²A/k⁴`.
pub fn estimate_izqc(omega: f64, mixing: f64, a: f64, k: f64) -> Result<f64> {
    require_positive_k(k)?;
    Ok(omega * mixing * mixing * a / k.powi(4))
}

/// Thermal proton polarization `ħω/(4γk_BT)` with `ω = γₑB`.
pub fn thermal_polarization(b_gauss: f64, temperature_k: f64) -> Result<f64> {
    thermal_polarization_with(&PhysicalConstants::SI, b_gauss, temperature_k)
}

pub fn thermal_polarization_with(c: &PhysicalConstants, b_gauss: f64, temperature_k: f64) -> Result<f64> {
    if !(temperature_k > 0.0) {
        return Err(Error::usage(format!("temperature must be positive, got {temperature_k} K")));
    }
    if !(b_gauss >= 0.0) {
        return Err(Error::usage(format!("field must be non-negative, got {b_gauss} G")));
    }
    // rad/ns → rad/s
    let omega_si = c.larmor_from_gauss(b_gauss) * 1e9;
    let ratio = c.hbar * omega_si / (c.gamma_ratio * c.k_b * temperature_k);
    if ratio > 0.01 {
        log::warn!("high-temperature expansion of the thermal polarization is poor (ħω/γk_BT = {ratio:.3})");
    }
    Ok(ratio / 4.0)
}

/// Enhancement over thermal polarization,
/// `10³ (Ω/0.01 ns⁻¹)² (A/0.1 ns⁻¹) / (k/1 ns⁻¹)⁴`.
pub fn enhancement_factor(mixing: f64, a: f64, k: f64) -> Result<f64> {
    require_positive_k(k)?;
    Ok(1e3 * (mixing / 0.01).powi(2) * (a / 0.1) / k.powi(4))
}

/// Upper field (gauss) of the low-field window, `k/γₑ`.
pub fn field_window(k: f64) -> Result<f64> {
    require_positive_k(k)?;
    Ok(PhysicalConstants::SI.gauss_from_larmor(k))
}

/// Field (tesla) of a polarized proton sample, `P μₚ μ₀ n`, for a
/// concentration in mol/L. Geometry factors are not modeled.
pub fn sample_field(polarization: f64, conc_mol_per_l: f64) -> Result<f64> {
    if !(polarization >= 0.0 && conc_mol_per_l >= 0.0) {
        return Err(Error::usage("polarization and concentration must be non-negative"));
    }
    let c = PhysicalConstants::SI;
    let number_density = conc_mol_per_l * 1e3 * c.avogadro;
    Ok(polarization * c.mu_p * c.mu_0 * number_density)
}

/// Singlet–triplet mixing frequency from a Hamiltonian-only ⟨Q_S⟩(t):
/// `Ω = π / t_min`, with `t_min` the time of the first deep minimum.
///
/// Hyperfine terms superimpose fast shallow wiggles on the slow mixing
/// envelope, so `t_min` is the earliest local minimum whose value lies
/// within 1% of the series range of the global minimum, refined by a
/// three-point parabola.
pub fn extract_mixing_frequency(series: &TimeSeries) -> Result<f64> {
    mixing_frequency_from(&series.times, &series.qs)
}

pub fn mixing_frequency_from(times: &[f64], qs: &[f64]) -> Result<f64> {
    let n = qs.len().min(times.len());
    let no_min = || Error::Range("no minimum of <Q_S> found; run longer to cover a full S-T oscillation".into());
    if n < 3 {
        return Err(no_min());
    }
    let (lo, hi) = qs[..n].iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = hi - lo;
    if !(range > 1e-9) {
        return Err(no_min());
    }
    let minima: Vec<usize> = (1..n - 1).filter(|&i| qs[i] < qs[i - 1] && qs[i] <= qs[i + 1]).collect();
    let deepest = minima.iter().map(|&i| qs[i]).fold(f64::INFINITY, f64::min);
    let Some(&i) = minima.iter().find(|&&i| qs[i] <= deepest + 0.01 * range) else {
        return Err(no_min());
    };
    let (y0, y1, y2) = (qs[i - 1], qs[i], qs[i + 1]);
    let denom = y0 - 2.0 * y1 + y2;
    let h = times[i + 1] - times[i];
    let shift = if denom > 0.0 { 0.5 * (y0 - y2) / denom } else { 0.0 };
    let t_min = times[i] + shift.clamp(-0.5, 0.5) * h;
    if t_min <= 0.0 {
        return Err(no_min());
    }
    Ok(PI / t_min)
}
