use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cidnp_core::render::{render_svg, Table};
use cidnp_core::runner::{
    estimate_report, estimate_table, run_monte_carlo, run_pendulum, run_scenario, scan, scan_csv, write_text,
    EstimateInputs,
};
use cidnp_core::scenario::Scenario;
use cidnp_core::units::{parse_quantity, UnitKind};
use cidnp_core::Error;

/// Radical-pair nuclear polarization simulator.
#[derive(Parser)]
#[command(name = "cidnp", version)]
struct Cli {
    /// Worker threads for trajectory, pendulum and scan runs
    /// (default: $CIDNP_WORKERS, else all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the density matrix and write the observables CSV.
    Simulate {
        scenario: PathBuf,
        /// Overrides outputs.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the trajectory ensemble of the mc section.
    Mc {
        scenario: PathBuf,
        /// Overrides outputs.mc_csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Peak polarization over values of one numeric key.
    Scan {
        scenario: PathBuf,
        /// Scenario key, e.g. system.omega.
        #[arg(long)]
        param: String,
        /// Comma-separated values in the key's default unit.
        #[arg(long, value_delimiter = ',', num_args = 1.., allow_hyphen_values = true)]
        values: Vec<String>,
        /// Write the table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Closed-form order-of-magnitude estimates.
    Estimate {
        /// Hyperfine coupling (rad/ns).
        #[arg(long = "A")]
        a: Option<String>,
        /// Recombination rate (1/ns).
        #[arg(long)]
        k: Option<String>,
        /// Singlet-triplet mixing frequency (rad/ns).
        #[arg(long = "Omega")]
        mixing: Option<String>,
        /// Electron Larmor frequency (rad/ns).
        #[arg(long)]
        omega: Option<String>,
        /// Field (G, or with mT/T suffix).
        #[arg(long = "B")]
        b: Option<String>,
        /// Temperature (K).
        #[arg(long = "T")]
        t: Option<String>,
        /// Nuclear polarization.
        #[arg(long = "P")]
        p: Option<String>,
        /// Concentration (M, or mM/uM suffix).
        #[arg(long)]
        conc: Option<String>,
        /// Only these estimates (izs, izqc, enhancement, thermal,
        /// field_window, sample_field).
        #[arg(long = "only", value_delimiter = ',')]
        only: Vec<String>,
    },
    /// Simulate the kicked coupled-pendulum analog.
    Pendulum {
        scenario: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Plot columns of a CSV as SVG.
    Render {
        csv: PathBuf,
        /// Output file (default: the CSV path with .svg).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Columns to plot (default: all but the first).
        #[arg(long, value_delimiter = ',')]
        columns: Vec<String>,
    },
    /// Parse a scenario and print its canonical form.
    Check { scenario: PathBuf },
}

fn workers(flag: Option<usize>) -> Result<usize, Error> {
    if let Some(n) = flag {
        return Ok(n.max(1));
    }
    match std::env::var("CIDNP_WORKERS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map(|n| n.max(1))
            .map_err(|_| Error::Usage(format!("CIDNP_WORKERS must be a positive integer, got '{v}'"))),
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn load(path: &Path) -> Result<Scenario, Error> {
    let (scenario, notices) = Scenario::load(path)?;
    for n in notices {
        log::info!("{}: {n}", path.display());
    }
    Ok(scenario)
}

fn quantity(text: Option<String>, kind: UnitKind, flag: &str) -> Result<Option<f64>, Error> {
    text.map(|t| {
        let q = parse_quantity(&t, kind).map_err(|m| Error::Usage(format!("{flag}: {m}")))?;
        if !q.explicit_unit && kind != UnitKind::Dimensionless {
            log::info!("{flag}: no unit given, assuming {}", kind.canonical());
        }
        Ok(q.value)
    })
    .transpose()
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Simulate { scenario, out } => {
            let mut s = load(&scenario)?;
            if let Some(out) = out {
                s.outputs.csv_path = out;
            }
            print!("{}", run_scenario(&s)?);
        }
        Command::Mc { scenario, out } => {
            let mut s = load(&scenario)?;
            if out.is_some() {
                s.outputs.mc_csv_path = out;
            }
            print!("{}", run_monte_carlo(&s, workers(cli.workers)?)?);
        }
        Command::Scan {
            scenario,
            param,
            values,
            out,
        } => {
            let s = load(&scenario)?;
            let values = values
                .iter()
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Usage(format!("scan value '{v}' is not a number")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let table = scan_csv(&scan(&s, &param, &values, workers(cli.workers)?)?);
            match out {
                Some(path) => {
                    write_text(&path, &table)?;
                    println!("wrote {}", path.display());
                }
                None => print!("{table}"),
            }
        }
        Command::Estimate {
            a,
            k,
            mixing,
            omega,
            b,
            t,
            p,
            conc,
            only,
        } => {
            let inputs = EstimateInputs {
                a: quantity(a, UnitKind::Frequency, "--A")?,
                k: quantity(k, UnitKind::Frequency, "--k")?,
                mixing: quantity(mixing, UnitKind::Frequency, "--Omega")?,
                omega: quantity(omega, UnitKind::Frequency, "--omega")?,
                b_gauss: quantity(b, UnitKind::Field, "--B")?,
                temperature_k: quantity(t, UnitKind::Temperature, "--T")?,
                polarization: quantity(p, UnitKind::Dimensionless, "--P")?,
                conc: quantity(conc, UnitKind::Concentration, "--conc")?,
            };
            print!("{}", estimate_report(&estimate_table(&inputs, &only)?));
        }
        Command::Pendulum { scenario, out } => {
            let mut s = load(&scenario)?;
            if let Some(out) = out {
                s.outputs.csv_path = out;
            }
            let (series, path) = run_pendulum(&s, workers(cli.workers)?)?;
            let n = series.mean_sum.len();
            let tail = &series.mean_sum[n - n / 4..];
            let mean = tail.iter().sum::<f64>() / tail.len().max(1) as f64;
            println!("late-time mean <x1 + x2> = {mean:e} (last quarter of samples)");
            println!("wrote {}", path.display());
        }
        Command::Render { csv, out, columns } => {
            let text = std::fs::read_to_string(&csv).map_err(|e| Error::Io {
                path: csv.clone(),
                source: e,
            })?;
            let svg = render_svg(&Table::parse(&text)?, &columns)?;
            let out = out.unwrap_or_else(|| csv.with_extension("svg"));
            write_text(&out, &svg)?;
            println!("wrote {}", out.display());
        }
        Command::Check { scenario } => {
            print!("{}", load(&scenario)?.render());
        }
    }
    Ok(())
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Usage(_) | Error::Parse { .. } => 2,
        Error::Config(_) | Error::Unsupported(_) | Error::Range(_) => 3,
        Error::NumericalIntegrity(_) => 4,
        Error::Io { .. } => 5,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
