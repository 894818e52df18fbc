//! Line-oriented scenario files.
//!
//! ```text
//! # comment
//! system.model = kominis
//! system.A = 1.0 rad/ns
//! system.omega = 0.1 rad/ns
//! system.k = 4 ns^-1
//! run.t_end = 5 ns
//! run.dt = 0.0025 ns
//! ```
//!
//! Sections are `system`, `run`, `mc`, `pendulum` and `outputs`. Keys are
//! `section.key = value`; values are numbers (optionally with a unit
//! suffix), booleans, identifiers, lists or paths. Unknown and duplicate
//! keys are errors. [`Scenario::render`] writes the canonical form, which
//! parses back to an equal scenario.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::deterministic::IntegrationGrid;
use crate::estimates::DEFAULT_TEMPERATURE_K;
use crate::pendulum::{KickConvention, PendulumConfig};
use crate::stochastic::{RemovalMode, TrajectoryConfig};
use crate::system::{Electron, Nucleus, ReactionModel, SpinSystemSpec};
use crate::units::{parse_quantity, render_quantity, UnitKind};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunConfig {
    pub t_end: f64,
    pub dt: f64,
    pub sample_every: usize,
}

impl RunConfig {
    pub fn grid(&self) -> IntegrationGrid {
        IntegrationGrid::new(self.t_end, self.dt, self.sample_every)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutputConfig {
    pub csv_path: PathBuf,
    /// Monte-Carlo CSV; defaults to `<csv stem>_mc.csv`.
    pub mc_csv_path: Option<PathBuf>,
    /// Also report the peak of ⟨I_z⟩/Tr(ρ) in the run summary.
    pub emit_normalized: bool,
    /// Field (G) for the thermal reference; defaults to ω/γₑ.
    pub field_gauss: Option<f64>,
    pub temperature_k: f64,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            csv_path: PathBuf::from("results.csv"),
            mc_csv_path: None,
            emit_normalized: true,
            field_gauss: None,
            temperature_k: DEFAULT_TEMPERATURE_K,
        }
    }
}

impl OutputConfig {
    pub fn mc_csv(&self) -> PathBuf {
        self.mc_csv_path.clone().unwrap_or_else(|| {
            let stem = self.csv_path.file_stem().and_then(|s| s.to_str()).unwrap_or("results");
            self.csv_path.with_file_name(format!("{stem}_mc.csv"))
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub system: Option<SpinSystemSpec>,
    pub run: Option<RunConfig>,
    pub mc: Option<TrajectoryConfig>,
    pub pendulum: Option<PendulumConfig>,
    pub outputs: OutputConfig,
}

#[derive(Clone, Copy)]
enum ValueKind {
    Quantity(UnitKind),
    Count,
    Seed,
    Bool,
    Ident(&'static [&'static str]),
    Nuclei,
    Path,
}

const REMOVAL_MODES: &[&str] = &["analytic_weight", "stochastic_kill"];
const KICKS: &[&str] = &["position", "energy"];

const KEYS: &[(&str, ValueKind)] = &[
    ("system.model", ValueKind::Ident(&ReactionModel::NAMES)),
    ("system.A", ValueKind::Quantity(UnitKind::Frequency)),
    ("system.nuclei", ValueKind::Nuclei),
    ("system.omega", ValueKind::Quantity(UnitKind::Frequency)),
    ("system.k", ValueKind::Quantity(UnitKind::Frequency)),
    ("system.k_S", ValueKind::Quantity(UnitKind::Frequency)),
    ("system.k_T", ValueKind::Quantity(UnitKind::Frequency)),
    ("system.eta", ValueKind::Quantity(UnitKind::Frequency)),
    ("run.t_end", ValueKind::Quantity(UnitKind::Time)),
    ("run.dt", ValueKind::Quantity(UnitKind::Time)),
    ("run.sample_every", ValueKind::Count),
    ("mc.n_trajectories", ValueKind::Count),
    ("mc.seed", ValueKind::Seed),
    ("mc.dt", ValueKind::Quantity(UnitKind::Time)),
    ("mc.t_end", ValueKind::Quantity(UnitKind::Time)),
    ("mc.sample_every", ValueKind::Count),
    ("mc.removal", ValueKind::Ident(REMOVAL_MODES)),
    ("pendulum.omega0", ValueKind::Quantity(UnitKind::ClassicalRate)),
    ("pendulum.coupling", ValueKind::Quantity(UnitKind::ClassicalRate)),
    ("pendulum.kick_rate", ValueKind::Quantity(UnitKind::ClassicalRate)),
    ("pendulum.decay_rate", ValueKind::Quantity(UnitKind::ClassicalRate)),
    ("pendulum.n_systems", ValueKind::Count),
    ("pendulum.dt", ValueKind::Quantity(UnitKind::ClassicalTime)),
    ("pendulum.t_end", ValueKind::Quantity(UnitKind::ClassicalTime)),
    ("pendulum.seed", ValueKind::Seed),
    ("pendulum.sample_every", ValueKind::Count),
    ("pendulum.kick", ValueKind::Ident(KICKS)),
    ("outputs.csv", ValueKind::Path),
    ("outputs.mc_csv", ValueKind::Path),
    ("outputs.emit_normalized", ValueKind::Bool),
    ("outputs.field", ValueKind::Quantity(UnitKind::Field)),
    ("outputs.temperature", ValueKind::Quantity(UnitKind::Temperature)),
];

/// Keys that [`Scenario::set_numeric`] accepts.
pub const NUMERIC_KEYS: &[&str] = &[
    "system.A",
    "system.omega",
    "system.k",
    "system.k_S",
    "system.k_T",
    "system.eta",
    "run.t_end",
    "run.dt",
    "outputs.field",
    "outputs.temperature",
];

#[derive(Clone, Debug, PartialEq)]
enum Value {
    Number(f64),
    Count(usize),
    Seed(u64),
    Bool(bool),
    Ident(String),
    Nuclei(Vec<Nucleus>),
    Path(PathBuf),
}

struct Entries {
    values: BTreeMap<&'static str, (usize, Value)>,
    notices: Vec<String>,
}

impl Entries {
    fn take(&mut self, key: &str) -> Option<(usize, Value)> {
        self.values.remove(key)
    }

    fn has_section(&self, section: &str) -> Option<usize> {
        self.values
            .iter()
            .filter(|(k, _)| k.split('.').next() == Some(section))
            .map(|(_, (line, _))| *line)
            .min()
    }

    fn number(&mut self, key: &str) -> Option<(usize, f64)> {
        match self.take(key) {
            Some((line, Value::Number(v))) => Some((line, v)),
            Some(_) => unreachable!("key {key} is numeric"),
            None => None,
        }
    }

    fn count(&mut self, key: &str) -> Option<(usize, usize)> {
        match self.take(key) {
            Some((line, Value::Count(v))) => Some((line, v)),
            Some(_) => unreachable!("key {key} is a count"),
            None => None,
        }
    }

    fn seed(&mut self, key: &str) -> Option<u64> {
        match self.take(key) {
            Some((_, Value::Seed(v))) => Some(v),
            Some(_) => unreachable!("key {key} is a seed"),
            None => None,
        }
    }

    fn ident(&mut self, key: &str) -> Option<(usize, String)> {
        match self.take(key) {
            Some((line, Value::Ident(v))) => Some((line, v)),
            Some(_) => unreachable!("key {key} is an identifier"),
            None => None,
        }
    }

    fn path(&mut self, key: &str) -> Option<PathBuf> {
        match self.take(key) {
            Some((_, Value::Path(p))) => Some(p),
            Some(_) => unreachable!("key {key} is a path"),
            None => None,
        }
    }
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn parse_count(text: &str) -> std::result::Result<usize, String> {
    if let Ok(v) = text.parse::<usize>() {
        return Ok(v);
    }
    match text.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.fract() == 0.0 && v < 1e15 => Ok(v as usize),
        _ => Err(format!("'{text}' is not a non-negative integer")),
    }
}

fn parse_nuclei(text: &str) -> std::result::Result<Vec<Nucleus>, String> {
    if text == "none" {
        return Ok(Vec::new());
    }
    text.split(',')
        .map(|item| {
            let (coupling, electron) = item
                .split_once('@')
                .ok_or_else(|| format!("nucleus '{}' must be written as <coupling>@<electron>", item.trim()))?;
            let a = parse_quantity(coupling, UnitKind::Frequency)?.value;
            let e: u8 = electron
                .trim()
                .parse()
                .map_err(|_| format!("electron index '{}' must be 1 or 2", electron.trim()))?;
            let electron = Electron::from_number(e).ok_or_else(|| format!("electron index {e} must be 1 or 2"))?;
            Ok(Nucleus { coupling: a, electron })
        })
        .collect()
}

fn parse_value(key: &str, kind: ValueKind, raw: &str, notices: &mut Vec<String>) -> std::result::Result<Value, String> {
    match kind {
        ValueKind::Quantity(unit) => {
            let q = parse_quantity(raw, unit)?;
            if !q.explicit_unit && unit != UnitKind::Dimensionless {
                notices.push(format!("{key}: no unit given, assuming {}", unit.canonical()));
            }
            Ok(Value::Number(q.value))
        }
        ValueKind::Count => parse_count(raw).map(Value::Count),
        ValueKind::Seed => raw
            .parse::<u64>()
            .map(Value::Seed)
            .map_err(|_| format!("'{raw}' is not a 64-bit unsigned seed")),
        ValueKind::Bool => match raw {
            "true" => Ok(Value::Bool(true)),
            "false" => Ok(Value::Bool(false)),
            _ => Err(format!("'{raw}' is not a boolean (true or false)")),
        },
        ValueKind::Ident(valid) => {
            if valid.contains(&raw) {
                Ok(Value::Ident(raw.to_string()))
            } else {
                Err(format!("'{raw}' is not valid for {key} (valid: {})", valid.join(", ")))
            }
        }
        ValueKind::Nuclei => parse_nuclei(raw).map(Value::Nuclei),
        ValueKind::Path => {
            if raw.is_empty() {
                Err("path must not be empty".into())
            } else {
                Ok(Value::Path(PathBuf::from(raw)))
            }
        }
    }
}

fn tokenize(text: &str) -> Result<Entries> {
    let mut entries = Entries {
        values: BTreeMap::new(),
        notices: Vec::new(),
    };
    for (idx, raw_line) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw_line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| parse_err(line, format!("expected 'section.key = value', got '{content}'")))?;
        let key = key.trim();
        let value = value.trim();
        let Some(&(canonical, kind)) = KEYS.iter().find(|(k, _)| *k == key) else {
            let section = key.split('.').next().unwrap_or("");
            let known: Vec<&str> = KEYS
                .iter()
                .map(|(k, _)| *k)
                .filter(|k| k.split('.').next() == Some(section))
                .collect();
            let hint = if known.is_empty() {
                "sections are system, run, mc, pendulum, outputs".to_string()
            } else {
                format!("known keys: {}", known.join(", "))
            };
            return Err(parse_err(line, format!("unknown key '{key}' ({hint})")));
        };
        if let Some((first, _)) = entries.values.get(canonical) {
            return Err(parse_err(line, format!("duplicate key '{key}' (first set on line {first})")));
        }
        let parsed = parse_value(canonical, kind, value, &mut entries.notices).map_err(|m| parse_err(line, m))?;
        entries.values.insert(canonical, (line, parsed));
    }
    Ok(entries)
}

fn build_system(entries: &mut Entries) -> Result<Option<(SpinSystemSpec, usize)>> {
    let Some(section_line) = entries.has_section("system") else {
        return Ok(None);
    };
    let missing = |key: &str| parse_err(section_line, format!("missing required key '{key}'"));
    let (model_line, model_name) = entries.ident("system.model").ok_or_else(|| missing("system.model"))?;
    let mut model: ReactionModel = model_name.parse().map_err(|e: Error| parse_err(model_line, e.to_string()))?;
    let eta = entries.number("system.eta");
    match (&mut model, eta) {
        (ReactionModel::CustomDephasing { eta }, Some((_, v))) => *eta = v,
        (ReactionModel::CustomDephasing { .. }, None) => {
            return Err(parse_err(model_line, "custom_dephasing requires system.eta"));
        }
        (_, Some((line, _))) => {
            return Err(parse_err(line, "system.eta only applies to model custom_dephasing"));
        }
        _ => {}
    }
    let single = entries.number("system.A");
    let list = entries.take("system.nuclei");
    let nuclei = match (single, list) {
        (Some(_), Some((line, _))) => {
            return Err(parse_err(line, "give either system.A or system.nuclei, not both"));
        }
        (Some((_, a)), None) => vec![Nucleus::on_electron_one(a)],
        (None, Some((_, Value::Nuclei(n)))) => n,
        (None, Some(_)) => unreachable!(),
        (None, None) => return Err(missing("system.A")),
    };
    let (_, larmor) = entries.number("system.omega").ok_or_else(|| missing("system.omega"))?;
    let k = entries.number("system.k");
    let ks = entries.number("system.k_S");
    let kt = entries.number("system.k_T");
    let (k_singlet, k_triplet) = match (k, ks, kt) {
        (Some((line, _)), Some(_), _) | (Some((line, _)), _, Some(_)) => {
            return Err(parse_err(line, "system.k sets both rates; do not combine it with system.k_S or system.k_T"));
        }
        (Some((_, k)), None, None) => (k, k),
        (None, s, t) => (s.map_or(0.0, |v| v.1), t.map_or(0.0, |v| v.1)),
    };
    let spec = SpinSystemSpec {
        nuclei,
        larmor,
        k_singlet,
        k_triplet,
        model,
    };
    spec.validate().map_err(|e| parse_err(model_line, e.to_string()))?;
    Ok(Some((spec, model_line)))
}

pub fn parse_scenario(text: &str) -> Result<Scenario> {
    parse_scenario_with_notices(text).map(|(s, _)| s)
}

/// Parses and validates a scenario, also returning one notice per value
/// that was given without a unit.
pub fn parse_scenario_with_notices(text: &str) -> Result<(Scenario, Vec<String>)> {
    let mut e = tokenize(text)?;
    let system = build_system(&mut e)?;

    let run_line = e.has_section("run");
    let run = match run_line {
        Some(section_line) => {
            let missing = |key: &str| parse_err(section_line, format!("missing required key '{key}'"));
            let (_, t_end) = e.number("run.t_end").ok_or_else(|| missing("run.t_end"))?;
            let (dt_line, dt) = e.number("run.dt").ok_or_else(|| missing("run.dt"))?;
            let sample_every = e.count("run.sample_every").map_or(1, |v| v.1);
            Some((RunConfig { t_end, dt, sample_every }, dt_line))
        }
        None => None,
    };

    let mc = match e.has_section("mc") {
        Some(section_line) => {
            let (_, n) = e
                .count("mc.n_trajectories")
                .ok_or_else(|| parse_err(section_line, "missing required key 'mc.n_trajectories'"))?;
            let base = run.map(|r| r.0);
            let inherit = |v: Option<(usize, f64)>, from: Option<f64>, key: &str| {
                v.map(|x| x.1)
                    .or(from)
                    .ok_or_else(|| parse_err(section_line, format!("missing '{key}' (no run section to inherit from)")))
            };
            let dt = e.number("mc.dt");
            let dt = inherit(dt, base.map(|r| r.dt), "mc.dt")?;
            let t_end = e.number("mc.t_end");
            let t_end = inherit(t_end, base.map(|r| r.t_end), "mc.t_end")?;
            let sample_every = e
                .count("mc.sample_every")
                .map(|v| v.1)
                .or(base.map(|r| r.sample_every))
                .unwrap_or(1);
            let removal_mode = e
                .ident("mc.removal")
                .map(|(_, s)| RemovalMode::parse(&s).expect("validated identifier"))
                .unwrap_or_default();
            Some((
                TrajectoryConfig {
                    n_trajectories: n,
                    master_seed: e.seed("mc.seed").unwrap_or(0),
                    dt,
                    t_end,
                    sample_every,
                    removal_mode,
                },
                section_line,
            ))
        }
        None => None,
    };

    let pendulum = match e.has_section("pendulum") {
        Some(section_line) => {
            let d = PendulumConfig::default();
            let mut num = |key: &str, default: f64| e.number(key).map_or(default, |v| v.1);
            let omega0 = num("pendulum.omega0", d.omega0);
            let coupling = num("pendulum.coupling", d.coupling);
            let kick_rate = num("pendulum.kick_rate", d.kick_rate);
            let decay_rate = num("pendulum.decay_rate", d.decay_rate);
            let dt = num("pendulum.dt", d.dt);
            let t_end = num("pendulum.t_end", d.t_end);
            let cfg = PendulumConfig {
                omega0,
                coupling,
                kick_rate,
                decay_rate,
                dt,
                t_end,
                n_systems: e.count("pendulum.n_systems").map_or(d.n_systems, |v| v.1),
                seed: e.seed("pendulum.seed").unwrap_or(d.seed),
                sample_every: e.count("pendulum.sample_every").map_or(d.sample_every, |v| v.1),
                kick: e
                    .ident("pendulum.kick")
                    .map(|(_, s)| KickConvention::parse(&s).expect("validated identifier"))
                    .unwrap_or_default(),
            };
            Some((cfg, section_line))
        }
        None => None,
    };

    let d = OutputConfig::default();
    let outputs = OutputConfig {
        csv_path: e.path("outputs.csv").unwrap_or(d.csv_path),
        mc_csv_path: e.path("outputs.mc_csv"),
        emit_normalized: match e.take("outputs.emit_normalized") {
            Some((_, Value::Bool(b))) => b,
            _ => d.emit_normalized,
        },
        field_gauss: e.number("outputs.field").map(|v| v.1),
        temperature_k: e.number("outputs.temperature").map_or(d.temperature_k, |v| v.1),
    };
    debug_assert!(e.values.is_empty(), "unconsumed keys: {:?}", e.values.keys());

    // Cross-section validation, reported against the most relevant line.
    if system.is_none() && pendulum.is_none() {
        return Err(parse_err(1, "scenario needs a system section or a pendulum section"));
    }
    if let Some((spec, model_line)) = &system {
        let Some((run, dt_line)) = &run else {
            return Err(parse_err(*model_line, "a system section needs a run section (run.t_end, run.dt)"));
        };
        run.grid()
            .validate(spec.fastest_rate())
            .map_err(|err| parse_err(*dt_line, err.to_string()))?;
        if let Some((cfg, mc_line)) = &mc {
            cfg.validate(spec).map_err(|err| parse_err(*mc_line, err.to_string()))?;
        }
    } else if let Some((_, mc_line)) = &mc {
        return Err(parse_err(*mc_line, "mc section needs a system section"));
    }
    if let Some((cfg, line)) = &pendulum {
        cfg.validate().map_err(|err| parse_err(*line, err.to_string()))?;
    }
    if !(outputs.temperature_k > 0.0) {
        return Err(parse_err(1, "outputs.temperature must be positive"));
    }
    if outputs.field_gauss.is_some_and(|b| b < 0.0) {
        return Err(parse_err(1, "outputs.field must be non-negative"));
    }

    let notices = std::mem::take(&mut e.notices);
    Ok((
        Scenario {
            system: system.map(|s| s.0),
            run: run.map(|r| r.0),
            mc: mc.map(|m| m.0),
            pendulum: pendulum.map(|p| p.0),
            outputs,
        },
        notices,
    ))
}

impl Scenario {
    pub fn load(path: &Path) -> Result<(Scenario, Vec<String>)> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        parse_scenario_with_notices(&text)
    }

    /// Canonical text form with explicit units.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let q = |v: f64, k: UnitKind| render_quantity(v, k);
        if let Some(s) = &self.system {
            let _ = writeln!(out, "system.model = {}", s.model.name());
            if let ReactionModel::CustomDephasing { eta } = s.model {
                let _ = writeln!(out, "system.eta = {}", q(eta, UnitKind::Frequency));
            }
            let nuclei = if s.nuclei.is_empty() {
                "none".to_string()
            } else {
                s.nuclei
                    .iter()
                    .map(|n| format!("{}@{}", q(n.coupling, UnitKind::Frequency), n.electron.number()))
                    .collect::<Vec<_>>()
                    .join(", ")
            };
            let _ = writeln!(out, "system.nuclei = {nuclei}");
            let _ = writeln!(out, "system.omega = {}", q(s.larmor, UnitKind::Frequency));
            let _ = writeln!(out, "system.k_S = {}", q(s.k_singlet, UnitKind::Frequency));
            let _ = writeln!(out, "system.k_T = {}", q(s.k_triplet, UnitKind::Frequency));
        }
        if let Some(r) = &self.run {
            let _ = writeln!(out, "run.t_end = {}", q(r.t_end, UnitKind::Time));
            let _ = writeln!(out, "run.dt = {}", q(r.dt, UnitKind::Time));
            let _ = writeln!(out, "run.sample_every = {}", r.sample_every);
        }
        if let Some(m) = &self.mc {
            let _ = writeln!(out, "mc.n_trajectories = {}", m.n_trajectories);
            let _ = writeln!(out, "mc.seed = {}", m.master_seed);
            let _ = writeln!(out, "mc.dt = {}", q(m.dt, UnitKind::Time));
            let _ = writeln!(out, "mc.t_end = {}", q(m.t_end, UnitKind::Time));
            let _ = writeln!(out, "mc.sample_every = {}", m.sample_every);
            let _ = writeln!(out, "mc.removal = {}", m.removal_mode.name());
        }
        if let Some(p) = &self.pendulum {
            let _ = writeln!(out, "pendulum.omega0 = {}", q(p.omega0, UnitKind::ClassicalRate));
            let _ = writeln!(out, "pendulum.coupling = {}", q(p.coupling, UnitKind::ClassicalRate));
            let _ = writeln!(out, "pendulum.kick_rate = {}", q(p.kick_rate, UnitKind::ClassicalRate));
            let _ = writeln!(out, "pendulum.decay_rate = {}", q(p.decay_rate, UnitKind::ClassicalRate));
            let _ = writeln!(out, "pendulum.n_systems = {}", p.n_systems);
            let _ = writeln!(out, "pendulum.dt = {}", q(p.dt, UnitKind::ClassicalTime));
            let _ = writeln!(out, "pendulum.t_end = {}", q(p.t_end, UnitKind::ClassicalTime));
            let _ = writeln!(out, "pendulum.seed = {}", p.seed);
            let _ = writeln!(out, "pendulum.sample_every = {}", p.sample_every);
            let _ = writeln!(out, "pendulum.kick = {}", p.kick.name());
        }
        let o = &self.outputs;
        let _ = writeln!(out, "outputs.csv = {}", o.csv_path.display());
        if let Some(p) = &o.mc_csv_path {
            let _ = writeln!(out, "outputs.mc_csv = {}", p.display());
        }
        let _ = writeln!(out, "outputs.emit_normalized = {}", o.emit_normalized);
        if let Some(b) = o.field_gauss {
            let _ = writeln!(out, "outputs.field = {}", q(b, UnitKind::Field));
        }
        let _ = writeln!(out, "outputs.temperature = {}", q(o.temperature_k, UnitKind::Temperature));
        out
    }

    /// Overrides one numeric key, as a parameter scan does.
    pub fn set_numeric(&mut self, key: &str, value: f64) -> Result<()> {
        if !NUMERIC_KEYS.contains(&key) {
            return Err(Error::usage(format!(
                "'{key}' is not a numeric scenario key (numeric keys: {})",
                NUMERIC_KEYS.join(", ")
            )));
        }
        let (section, _) = key.split_once('.').expect("dotted key");
        let no_section = || Error::usage(format!("scenario has no {section} section to set '{key}'"));
        match key {
            "outputs.field" => self.outputs.field_gauss = Some(value),
            "outputs.temperature" => self.outputs.temperature_k = value,
            "run.t_end" => self.run.as_mut().ok_or_else(no_section)?.t_end = value,
            "run.dt" => self.run.as_mut().ok_or_else(no_section)?.dt = value,
            _ => {
                let s = self.system.as_mut().ok_or_else(no_section)?;
                match key {
                    "system.A" => match s.nuclei.as_mut_slice() {
                        [only] => only.coupling = value,
                        _ => {
                            return Err(Error::usage(format!(
                                "system.A needs exactly one nucleus, scenario has {}",
                                s.nuclei.len()
                            )))
                        }
                    },
                    "system.omega" => s.larmor = value,
                    "system.k" => {
                        s.k_singlet = value;
                        s.k_triplet = value;
                    }
                    "system.k_S" => s.k_singlet = value,
                    "system.k_T" => s.k_triplet = value,
                    "system.eta" => match &mut s.model {
                        ReactionModel::CustomDephasing { eta } => *eta = value,
                        _ => return Err(Error::usage("system.eta only applies to model custom_dephasing")),
                    },
                    _ => unreachable!(),
                }
            }
        }
        Ok(())
    }

    /// Re-runs the checks applied at parse time.
    pub fn validate(&self) -> Result<()> {
        parse_scenario(&self.render()).map(|_| ())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const MINIMAL: &str = "\
system.A = 1.0
system.omega = 0.1
system.model = hamiltonian_only
run.t_end = 200
run.dt = 0.01
";

    #[test]
    fn minimal_scenario() {
        let (s, notices) = parse_scenario_with_notices(MINIMAL).unwrap();
        let spec = s.system.unwrap();
        assert_eq!(spec.nuclei, vec![Nucleus::on_electron_one(1.0)]);
        assert_eq!(spec.larmor, 0.1);
        assert_eq!(spec.model, ReactionModel::HamiltonianOnly);
        assert_eq!(s.run.unwrap(), RunConfig { t_end: 200.0, dt: 0.01, sample_every: 1 });
        assert_eq!(notices.len(), 4);
        assert_eq!(s.outputs, OutputConfig::default());
    }

    #[test]
    fn model_typo_names_line_and_choices() {
        let text = MINIMAL.replace("hamiltonian_only", "habercorn");
        let err = parse_scenario(&text).unwrap_err();
        let Error::Parse { line, message } = &err else { panic!("{err}") };
        assert_eq!(*line, 3);
        assert!(message.contains("haberkorn") && message.contains("kominis"), "{message}");
    }

    #[test]
    fn unknown_key_is_error() {
        let err = parse_scenario(&format!("{MINIMAL}system.omgea = 3\n")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 6, .. }), "{err}");
        let err = parse_scenario(&format!("{MINIMAL}foo.bar = 3\n")).unwrap_err();
        assert!(err.to_string().contains("sections are"), "{err}");
    }

    #[test]
    fn duplicate_and_missing_keys() {
        let err = parse_scenario(&format!("{MINIMAL}run.dt = 0.02\n")).unwrap_err();
        assert!(err.to_string().contains("duplicate"), "{err}");
        let err = parse_scenario(&MINIMAL.replace("system.omega = 0.1\n", "")).unwrap_err();
        assert!(err.to_string().contains("system.omega"), "{err}");
        let err = parse_scenario(&MINIMAL.replace("run.dt = 0.01\n", "")).unwrap_err();
        assert!(err.to_string().contains("run.dt"), "{err}");
    }

    #[test]
    fn unit_mismatch_and_range_errors() {
        let err = parse_scenario(&MINIMAL.replace("system.omega = 0.1", "system.omega = 0.1 G")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = parse_scenario(&MINIMAL.replace("run.dt = 0.01", "run.dt = 0.1")).unwrap_err();
        assert!(matches!(&err, Error::Parse { line: 5, message } if message.contains("step limit")), "{err}");
        let err = parse_scenario(&format!("{MINIMAL}system.k = 1\n")).unwrap_err();
        assert!(err.to_string().contains("k_S = k_T = 0"), "{err}");
    }

    #[test]
    fn units_and_comments() {
        let text = "\
# Fig. 4 style run
system.model = kominis   # measurement-induced dephasing
system.A = 1 rad/ns
system.omega = 0.1 ns^-1
system.k = 4 1/ns
run.t_end = 5 ns
run.dt = 2.5 ps
run.sample_every = 4
outputs.field = 0.1 mT
";
        let (s, notices) = parse_scenario_with_notices(text).unwrap();
        assert!(notices.is_empty(), "{notices:?}");
        assert_eq!(s.run.unwrap().dt, 2.5e-3);
        assert_eq!(s.outputs.field_gauss, Some(1.0));
        let spec = s.system.unwrap();
        assert_eq!((spec.k_singlet, spec.k_triplet), (4.0, 4.0));
    }

    #[test]
    fn custom_dephasing_needs_eta() {
        let text = MINIMAL.replace("hamiltonian_only", "custom_dephasing");
        assert!(parse_scenario(&text).unwrap_err().to_string().contains("system.eta"));
        let ok = parse_scenario(&format!("{text}system.eta = 0.5\n")).unwrap();
        assert_eq!(ok.system.unwrap().model, ReactionModel::CustomDephasing { eta: 0.5 });
        let err = parse_scenario(&format!("{MINIMAL}system.eta = 0.5\n")).unwrap_err();
        assert!(err.to_string().contains("custom_dephasing"));
    }

    #[test]
    fn nuclei_lists() {
        let text = MINIMAL.replace("system.A = 1.0", "system.nuclei = 1.0@1, -0.4 rad/ns@2");
        let s = parse_scenario(&text).unwrap().system.unwrap();
        assert_eq!(s.nuclei[1], Nucleus { coupling: -0.4, electron: Electron::Two });
        let none = MINIMAL.replace("system.A = 1.0", "system.nuclei = none");
        assert!(parse_scenario(&none).unwrap().system.unwrap().nuclei.is_empty());
        let bad = MINIMAL.replace("system.A = 1.0", "system.nuclei = 1.0@3");
        assert!(parse_scenario(&bad).is_err());
    }

    #[test]
    fn mc_inherits_run_grid() {
        let text = MINIMAL.replace("hamiltonian_only", "kominis") + "system.k = 4\nmc.n_trajectories = 1e5\nmc.seed = 7\n";
        let text = text.replace("run.dt = 0.01", "run.dt = 0.0025");
        let s = parse_scenario(&text).unwrap();
        let mc = s.mc.unwrap();
        assert_eq!(mc.n_trajectories, 100_000);
        assert_eq!((mc.dt, mc.t_end, mc.master_seed), (0.0025, 200.0, 7));
        assert_eq!(mc.removal_mode, RemovalMode::AnalyticWeight);
    }

    #[test]
    fn pendulum_only_scenario() {
        let s = parse_scenario("pendulum.n_systems = 100\npendulum.kick = energy\n").unwrap();
        let p = s.pendulum.unwrap();
        assert_eq!(p.n_systems, 100);
        assert_eq!(p.kick, KickConvention::Energy);
        assert!(s.system.is_none());
        assert!(parse_scenario("outputs.csv = x.csv\n").is_err());
    }

    #[test]
    fn set_numeric_keys() {
        let mut s = parse_scenario(MINIMAL).unwrap();
        s.set_numeric("system.omega", 0.2).unwrap();
        assert_eq!(s.system.as_ref().unwrap().larmor, 0.2);
        assert!(matches!(s.set_numeric("system.model", 1.0), Err(Error::Usage(_))));
        assert!(matches!(s.set_numeric("outputs.csv", 1.0), Err(Error::Usage(_))));
        s.set_numeric("system.A", -1.0).unwrap();
        assert_eq!(s.system.unwrap().nuclei[0].coupling, -1.0);
    }

    fn arb_scenario() -> impl Strategy<Value = Scenario> {
        let model = prop_oneof![
            Just(ReactionModel::Haberkorn),
            Just(ReactionModel::Kominis),
            Just(ReactionModel::JonesHore),
            (0.0..3.0f64).prop_map(|eta| ReactionModel::CustomDephasing { eta }),
        ];
        (
            prop::collection::vec((-2.0..2.0f64, prop::bool::ANY), 0..=3),
            -1.0..1.0f64,
            0.0..2.0f64,
            model,
            1usize..20,
            prop::option::of((1usize..1000, any::<u64>(), prop::bool::ANY)),
            prop::option::of(0.0..10.0f64),
            prop::bool::ANY,
        )
            .prop_map(|(nuclei, larmor, k, model, every, mc, field, norm)| {
                let spec = SpinSystemSpec {
                    nuclei: nuclei
                        .into_iter()
                        .map(|(a, one)| Nucleus {
                            coupling: a,
                            electron: if one { Electron::One } else { Electron::Two },
                        })
                        .collect(),
                    larmor,
                    k_singlet: k,
                    k_triplet: k,
                    model,
                };
                let dt = 1.0 / (20.0 * spec.fastest_rate().max(1.0)) * 0.9;
                let run = RunConfig {
                    t_end: 100.0 * dt,
                    dt,
                    sample_every: every,
                };
                let mc = mc.map(|(n, seed, kill)| TrajectoryConfig {
                    n_trajectories: n,
                    master_seed: seed,
                    dt,
                    t_end: 50.0 * dt,
                    sample_every: every,
                    removal_mode: if kill { RemovalMode::StochasticKill } else { RemovalMode::AnalyticWeight },
                });
                Scenario {
                    system: Some(spec),
                    run: Some(run),
                    mc,
                    pendulum: None,
                    outputs: OutputConfig {
                        csv_path: PathBuf::from("out/run.csv"),
                        mc_csv_path: None,
                        emit_normalized: norm,
                        field_gauss: field,
                        temperature_k: 300.0,
                    },
                }
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn render_parse_round_trip(s in arb_scenario()) {
            let text = s.render();
            let (back, notices) = parse_scenario_with_notices(&text).unwrap();
            prop_assert_eq!(back, s);
            prop_assert!(notices.is_empty());
        }
    }

    #[test]
    fn pendulum_round_trip() {
        let s = Scenario {
            system: None,
            run: None,
            mc: None,
            pendulum: Some(PendulumConfig::default()),
            outputs: OutputConfig::default(),
        };
        assert_eq!(parse_scenario(&s.render()).unwrap(), s);
    }
}
