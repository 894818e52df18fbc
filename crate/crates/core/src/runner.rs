//! Runs scenarios and writes their CSV outputs.

use std::fmt;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::deterministic::{integrate_grid, peak_of, peak_polarization, Peak, TimeSeries};
use crate::estimates::{
    enhancement_factor, estimate_izqc, estimate_izs, field_window, sample_field, thermal_polarization,
    PhysicalConstants, DEFAULT_TEMPERATURE_K,
};
use crate::pendulum::{simulate_pendulums_with_workers, PendulumSeries};
use crate::scenario::Scenario;
use crate::stochastic::{run_ensemble_with_workers, TrajectoryEnsembleStats};
use crate::system::SpinSystemSpec;
use crate::{Error, Result};

pub const SERIES_HEADER: &str = "t,trace,qs,iz,iz_norm,izS,izT,jz,iz_proj";
pub const MC_HEADER: &str = "t,mean_iz,se_iz,mean_qs,se_qs,weight";
pub const PENDULUM_HEADER: &str = "t,mean_sum,se_sum,surviving";
pub const SCAN_HEADER: &str = "value,peak_iz,t_peak,enhancement";

pub fn series_csv(series: &TimeSeries) -> String {
    let mut out = String::from(SERIES_HEADER);
    out.push('\n');
    for i in 0..series.len() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            series.times[i],
            series.trace[i],
            series.qs[i],
            series.iz[i],
            series.iz_norm[i],
            series.iz_singlet[i],
            series.iz_triplet[i],
            series.jz[i],
            series.iz_proj[i]
        );
    }
    out
}

pub fn mc_csv(stats: &TrajectoryEnsembleStats) -> String {
    let mut out = String::from(MC_HEADER);
    out.push('\n');
    for i in 0..stats.times.len() {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            stats.times[i], stats.mean_iz[i], stats.se_iz[i], stats.mean_qs[i], stats.se_qs[i], stats.surviving_weight[i]
        );
    }
    out
}

pub fn pendulum_csv(series: &PendulumSeries) -> String {
    let mut out = String::from(PENDULUM_HEADER);
    out.push('\n');
    for i in 0..series.times.len() {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            series.times[i], series.mean_sum[i], series.se_sum[i], series.surviving_fraction[i]
        );
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Field (G) used for the thermal reference of a scenario.
pub fn reference_field(scenario: &Scenario, spec: &SpinSystemSpec) -> f64 {
    scenario
        .outputs
        .field_gauss
        .unwrap_or_else(|| PhysicalConstants::SI.gauss_from_larmor(spec.larmor.abs()))
}

/// Headline numbers of a deterministic run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub peak: Peak,
    /// Peak of ⟨I_z⟩/Tr(ρ), when requested.
    pub peak_normalized: Option<Peak>,
    pub field_gauss: f64,
    pub temperature_k: f64,
    /// Thermal polarization at the reference field; `None` at zero field.
    pub thermal: Option<f64>,
    /// |peak| over the thermal polarization.
    pub enhancement: Option<f64>,
    pub csv_path: Option<PathBuf>,
}

impl fmt::Display for RunSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "peak <Iz> = {:e} at t = {} ns", self.peak.value, self.peak.t_peak)?;
        if let Some(p) = self.peak_normalized {
            writeln!(f, "peak <Iz>/Tr(rho) = {:e} at t = {} ns", p.value, p.t_peak)?;
        }
        match (self.thermal, self.enhancement) {
            (Some(th), Some(en)) => writeln!(
                f,
                "thermal I_th({} G, {} K) = {:e}; enhancement = {:.3e}",
                self.field_gauss, self.temperature_k, th, en
            )?,
            _ => writeln!(f, "thermal reference undefined at zero field")?,
        }
        if let Some(p) = &self.csv_path {
            writeln!(f, "wrote {}", p.display())?;
        }
        Ok(())
    }
}

fn require_system(scenario: &Scenario) -> Result<&SpinSystemSpec> {
    scenario
        .system
        .as_ref()
        .ok_or_else(|| Error::usage("scenario has no system section"))
}

/// Integrates the scenario without writing anything.
pub fn simulate(scenario: &Scenario) -> Result<(TimeSeries, RunSummary)> {
    let spec = require_system(scenario)?;
    let run = scenario
        .run
        .as_ref()
        .ok_or_else(|| Error::usage("scenario has no run section"))?;
    let series = integrate_grid(spec, run.grid())?;
    let peak = peak_polarization(&series)?;
    let peak_normalized = if scenario.outputs.emit_normalized {
        Some(peak_of(&series.times, &series.iz_norm)?)
    } else {
        None
    };
    let field_gauss = reference_field(scenario, spec);
    let temperature_k = scenario.outputs.temperature_k;
    let thermal = if field_gauss > 0.0 {
        Some(thermal_polarization(field_gauss, temperature_k)?)
    } else {
        None
    };
    let summary = RunSummary {
        peak,
        peak_normalized,
        field_gauss,
        temperature_k,
        thermal,
        enhancement: thermal.map(|th| peak.value.abs() / th),
        csv_path: None,
    };
    Ok((series, summary))
}

/// Integrates the scenario and writes `outputs.csv`.
pub fn run_scenario(scenario: &Scenario) -> Result<RunSummary> {
    let (series, mut summary) = simulate(scenario)?;
    let path = scenario.outputs.csv_path.clone();
    write_text(&path, &series_csv(&series))?;
    summary.csv_path = Some(path);
    Ok(summary)
}

/// Result of a trajectory run.
#[derive(Clone, Debug)]
pub struct McSummary {
    pub stats: TrajectoryEnsembleStats,
    /// Sample of largest |mean ⟨I_z⟩|.
    pub peak: Peak,
    pub se_at_peak: f64,
    pub csv_path: PathBuf,
}

impl fmt::Display for McSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "trajectory mean <Iz> peak = {:e} +/- {:e} at t = {} ns",
            self.peak.value, self.se_at_peak, self.peak.t_peak
        )?;
        writeln!(f, "wrote {}", self.csv_path.display())
    }
}

/// Runs the trajectory ensemble of the scenario and writes its CSV.
pub fn run_monte_carlo(scenario: &Scenario, workers: usize) -> Result<McSummary> {
    let spec = require_system(scenario)?;
    let cfg = scenario
        .mc
        .as_ref()
        .ok_or_else(|| Error::usage("scenario has no mc section"))?;
    let stats = run_ensemble_with_workers(spec, cfg, workers)?;
    let peak = peak_of(&stats.times, &stats.mean_iz)?;
    let idx = stats.times.iter().position(|&t| t == peak.t_peak).unwrap_or(0);
    let path = scenario.outputs.mc_csv();
    write_text(&path, &mc_csv(&stats))?;
    Ok(McSummary {
        se_at_peak: stats.se_iz[idx],
        peak,
        stats,
        csv_path: path,
    })
}

/// Runs the pendulum ensemble of the scenario and writes `outputs.csv`.
pub fn run_pendulum(scenario: &Scenario, workers: usize) -> Result<(PendulumSeries, PathBuf)> {
    let cfg = scenario
        .pendulum
        .as_ref()
        .ok_or_else(|| Error::usage("scenario has no pendulum section"))?;
    let series = simulate_pendulums_with_workers(cfg, workers)?;
    let path = scenario.outputs.csv_path.clone();
    write_text(&path, &pendulum_csv(&series))?;
    Ok((series, path))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScanRow {
    pub value: f64,
    pub peak_iz: f64,
    pub t_peak: f64,
    /// `NaN` when the thermal reference is undefined.
    pub enhancement: f64,
}

/// Runs the scenario once per value of `param`, rows in input order.
pub fn scan(scenario: &Scenario, param: &str, values: &[f64], workers: usize) -> Result<Vec<ScanRow>> {
    if values.is_empty() {
        return Err(Error::usage("scan needs at least one value"));
    }
    let variants = values
        .iter()
        .map(|&v| {
            let mut s = scenario.clone();
            s.set_numeric(param, v)?;
            s.validate().map_err(|e| Error::Config(format!("{param} = {v}: {e}")))?;
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()?;
    let body = || {
        variants
            .par_iter()
            .zip(values.par_iter())
            .map(|(s, &v)| {
                let (_, summary) = simulate(s)?;
                Ok(ScanRow {
                    value: v,
                    peak_iz: summary.peak.value,
                    t_peak: summary.peak.t_peak,
                    enhancement: summary.enhancement.unwrap_or(f64::NAN),
                })
            })
            .collect::<Result<Vec<_>>>()
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?
        .install(body)
}

pub fn scan_csv(rows: &[ScanRow]) -> String {
    let mut out = String::from(SCAN_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.value, r.peak_iz, r.t_peak, r.enhancement);
    }
    out
}

/// Inputs of the closed-form estimates. Any may be absent.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EstimateInputs {
    /// Hyperfine coupling (rad/ns).
    pub a: Option<f64>,
    /// Recombination rate (1/ns).
    pub k: Option<f64>,
    /// Singlet-triplet mixing frequency Ω (rad/ns).
    pub mixing: Option<f64>,
    /// Electron Larmor frequency (rad/ns).
    pub omega: Option<f64>,
    /// Field (G).
    pub b_gauss: Option<f64>,
    pub temperature_k: Option<f64>,
    /// Nuclear polarization for the sample field.
    pub polarization: Option<f64>,
    /// Concentration (mol/L).
    pub conc: Option<f64>,
}

impl EstimateInputs {
    fn larmor(&self) -> Option<f64> {
        self.omega
            .or_else(|| self.b_gauss.map(|b| PhysicalConstants::SI.larmor_from_gauss(b)))
    }

    fn field(&self) -> Option<f64> {
        self.b_gauss
            .or_else(|| self.omega.map(|w| PhysicalConstants::SI.gauss_from_larmor(w.abs())))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimateLine {
    pub name: &'static str,
    pub formula: &'static str,
    /// Inputs as `name=value` pairs in default units.
    pub inputs: String,
    pub value: f64,
    pub unit: &'static str,
}

pub const ESTIMATE_NAMES: &[&str] = &["izs", "izqc", "enhancement", "thermal", "field_window", "sample_field"];

/// Outer error lists the missing flags; inner error is an invalid value.
fn estimate_one(name: &str, x: &EstimateInputs) -> std::result::Result<Result<EstimateLine>, String> {
    let omega = ("omega", x.larmor(), "--omega or --B");
    let a = ("A", x.a, "--A");
    let k = ("k", x.k, "--k");
    let mixing = ("Omega", x.mixing, "--Omega");
    let inputs = match name {
        "izs" => vec![omega, a, k],
        "izqc" => vec![omega, mixing, a, k],
        "enhancement" => vec![mixing, a, k],
        "thermal" => vec![
            ("B", x.field(), "--B or --omega"),
            ("T", Some(x.temperature_k.unwrap_or(DEFAULT_TEMPERATURE_K)), "--T"),
        ],
        "field_window" => vec![k],
        "sample_field" => vec![("P", x.polarization, "--P"), ("conc", x.conc, "--conc")],
        _ => unreachable!("checked against ESTIMATE_NAMES"),
    };
    let missing: Vec<&str> = inputs.iter().filter(|i| i.1.is_none()).map(|i| i.2).collect();
    if !missing.is_empty() {
        return Err(missing.join(", "));
    }
    let v: Vec<f64> = inputs.iter().map(|i| i.1.unwrap_or(f64::NAN)).collect();
    let echo = inputs
        .iter()
        .zip(&v)
        .map(|(i, v)| format!("{}={v}", i.0))
        .collect::<Vec<_>>()
        .join(" ");
    let (formula, value, unit) = match name {
        "izs" => ("Iz_S ~ -omega A / k^2", estimate_izs(v[0], v[1], v[2]), ""),
        "izqc" => ("Iz_qc ~ omega Omega^2 A / k^4", estimate_izqc(v[0], v[1], v[2], v[3]), ""),
        "enhancement" => ("Iz_qc/I_th ~ 1e3 (Omega/0.01)^2 (A/0.1) / k^4", enhancement_factor(v[0], v[1], v[2]), ""),
        "thermal" => ("I_th = hbar gamma_n B / (4 k_B T)", thermal_polarization(v[0], v[1]), ""),
        "field_window" => ("B_max = k / gamma_e", field_window(v[0]), "G"),
        _ => ("B_n = P mu_p mu_0 n", sample_field(v[0], v[1]), "T"),
    };
    Ok(value.map(|value| EstimateLine {
        name: ESTIMATE_NAMES.iter().find(|n| **n == name).copied().unwrap_or("?"),
        formula,
        inputs: echo,
        value,
        unit,
    }))
}

/// Evaluates the requested estimates, or every estimate whose inputs are
/// present when `requested` is empty.
pub fn estimate_table(inputs: &EstimateInputs, requested: &[String]) -> Result<Vec<EstimateLine>> {
    for r in requested {
        if !ESTIMATE_NAMES.contains(&r.as_str()) {
            return Err(Error::usage(format!(
                "unknown estimate '{r}' (valid: {})",
                ESTIMATE_NAMES.join(", ")
            )));
        }
    }
    if requested.is_empty() {
        let lines = ESTIMATE_NAMES
            .iter()
            .filter_map(|n| estimate_one(n, inputs).ok())
            .collect::<Result<Vec<_>>>()?;
        if lines.is_empty() {
            return Err(Error::usage("no estimate can be computed from the given inputs"));
        }
        return Ok(lines);
    }
    requested
        .iter()
        .map(|n| {
            estimate_one(n, inputs).map_err(|flag| Error::usage(format!("estimate '{n}' needs {flag}")))?
        })
        .collect()
}

pub fn estimate_report(lines: &[EstimateLine]) -> String {
    let mut out = String::new();
    for l in lines {
        let unit = if l.unit.is_empty() { String::new() } else { format!(" {}", l.unit) };
        let _ = writeln!(out, "{:<13} {:<48} = {:e}{unit}  [{}]", l.name, l.formula, l.value, l.inputs);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::parse_scenario;

    fn kominis(dir: &Path) -> Scenario {
        let text = format!(
            "system.model = kominis\nsystem.A = 1\nsystem.omega = 0.1\nsystem.k = 4\n\
             run.t_end = 3\nrun.dt = 0.005\nrun.sample_every = 2\noutputs.csv = {}\n",
            dir.join("out.csv").display()
        );
        parse_scenario(&text).unwrap()
    }

    #[test]
    fn csv_header_and_rows() {
        let dir = tempfile::tempdir().unwrap();
        let s = kominis(dir.path());
        let summary = run_scenario(&s).unwrap();
        let text = std::fs::read_to_string(dir.path().join("out.csv")).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(SERIES_HEADER));
        let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
        assert_eq!(rows.len(), 301);
        assert!(rows.iter().all(|r| r.len() == 9));
        assert_eq!(rows[0][1], 1.0);
        assert!(summary.peak.value > 0.0);
        assert!(summary.peak_normalized.is_some());
        assert!(summary.enhancement.unwrap() > 1e3);
    }

    #[test]
    fn single_value_scan_matches_run() {
        let dir = tempfile::tempdir().unwrap();
        let s = kominis(dir.path());
        let (_, summary) = simulate(&s).unwrap();
        let rows = scan(&s, "system.omega", &[0.1], 1).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].peak_iz, summary.peak.value);
        assert_eq!(rows[0].t_peak, summary.peak.t_peak);
        assert_eq!(rows[0].enhancement, summary.enhancement.unwrap());
    }

    #[test]
    fn scan_keeps_input_order_and_rejects_bad_keys() {
        let dir = tempfile::tempdir().unwrap();
        let s = kominis(dir.path());
        let rows = scan(&s, "system.omega", &[0.1, 0.01, 0.05], 3).unwrap();
        assert_eq!(rows.iter().map(|r| r.value).collect::<Vec<_>>(), vec![0.1, 0.01, 0.05]);
        assert!(rows[0].peak_iz > rows[2].peak_iz && rows[2].peak_iz > rows[1].peak_iz);
        assert!(matches!(scan(&s, "system.model", &[1.0], 1), Err(Error::Usage(_))));
        assert!(matches!(scan(&s, "run.dt", &[1.0], 1), Err(Error::Config(_))));
    }

    #[test]
    fn estimates_need_inputs() {
        let x = EstimateInputs {
            b_gauss: Some(1.0),
            temperature_k: Some(300.0),
            ..Default::default()
        };
        let lines = estimate_table(&x, &[]).unwrap();
        assert_eq!(lines.len(), 1);
        assert_eq!(lines[0].name, "thermal");
        assert!((lines[0].value - 1.7e-10).abs() < 0.05e-10);
        let err = estimate_table(&x, &["izqc".to_string()]).unwrap_err();
        assert!(err.to_string().contains("--Omega"), "{err}");
        assert!(estimate_table(&EstimateInputs::default(), &[]).is_err());
        assert!(estimate_table(&x, &["bogus".to_string()]).is_err());
    }

    #[test]
    fn estimate_values() {
        let x = EstimateInputs {
            a: Some(0.1),
            k: Some(1.0),
            mixing: Some(0.01),
            omega: Some(0.01),
            polarization: Some(1e-6),
            conc: Some(1e-3),
            ..Default::default()
        };
        let lines = estimate_table(&x, &[]).unwrap();
        let get = |n: &str| lines.iter().find(|l| l.name == n).unwrap().value;
        assert_eq!(lines.len(), ESTIMATE_NAMES.len());
        assert!((get("enhancement") - 1e3).abs() / 1e3 < 0.05);
        assert!((get("field_window") - 56.84).abs() < 0.01);
        assert!((get("sample_field") - 1.07e-14).abs() < 0.01e-14);
        assert!(get("izs") < 0.0);
        let report = estimate_report(&lines);
        assert_eq!(report.lines().count(), lines.len());
    }
}
