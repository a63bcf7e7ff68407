//! `dml`: return times of polynomial orbits.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dml_core::engine::{analyze, analyze_full_orbit, recurrence_to_model, EngineError, RunConfig};
use dml_core::interpolator::interpolate;
use dml_core::mahler::MahlerSeries;
use dml_core::model::{parse_rational, to_padic_map, AffineModel, MapFile, ModelError};
use dml_core::padic::{PadicContext, PadicInt, PadicVec};
use dml_core::poly::SelfMap;
use num_rational::BigRational;

const EXIT_ENGINE: u8 = 1;
const EXIT_PARSE: u8 = 2;
const EXIT_INCONCLUSIVE: u8 = 3;

/// Highest `z` at which the interpolate command checks `f(z+1) = phi(f(z))`.
const FUNCTIONAL_CHECKS: u64 = 20;

#[derive(Parser)]
#[command(name = "dml", version, about = "Return times of polynomial orbits to subvarieties, via p-adic interpolation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analyze a model file and print the return-time report.
    Analyze {
        model: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Zero set of a linear recurrence a_{n+g} = c_1 a_{n+g-1} + ... + c_g a_n.
    Recurrence {
        /// Coefficients c_1,..,c_g.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        rec: Vec<String>,
        /// Initial values a_0,..,a_{g-1}.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        init: Vec<String>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Print the interpolating Mahler coefficients of a map's orbit.
    Interpolate {
        map: PathBuf,
        /// Start point, one rational per coordinate.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        omega: Vec<String>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Two-sided analysis over all integers; the model needs an inverse.
    Orbit {
        model: PathBuf,
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(Args, Clone, Debug)]
struct RunArgs {
    #[arg(long)]
    prime: Option<u64>,
    #[arg(long, default_value_t = 40)]
    precision: u32,
    #[arg(long)]
    stages: Option<u32>,
    #[arg(long, default_value_t = 2000)]
    scan_bound: u64,
    #[arg(long, default_value_t = 25)]
    verify_count: usize,
    #[arg(long, default_value_t = 4)]
    retry_max: u32,
    /// Write output here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn config(&self) -> RunConfig {
        RunConfig {
            prime: self.prime,
            precision: self.precision,
            stages: self.stages,
            scan_bound: self.scan_bound,
            verify_count: self.verify_count,
            retry_max: self.retry_max,
            ..RunConfig::default()
        }
    }
}

enum Failure {
    Parse(String),
    Engine(String),
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        Failure::Parse(e.to_string())
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Model(m) => Failure::Parse(m.to_string()),
            other => Failure::Engine(other.to_string()),
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Parse(format!("{}: {e}", path.display())))
}

fn emit(out: &Option<PathBuf>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, format!("{text}\n")).map_err(|e| Failure::Engine(format!("{}: {e}", path.display()))),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn rationals(items: &[String]) -> Result<Vec<BigRational>, Failure> {
    items.iter().map(|s| parse_rational(s).map_err(Failure::from)).collect()
}

/// Returns whether every branch reached a verdict.
fn run(cli: Cli) -> Result<bool, Failure> {
    match cli.command {
        Command::Analyze { model, run } => {
            let model = AffineModel::from_json(&read(&model)?)?;
            let report = analyze(&model, &run.config())?;
            emit(&run.out, &report.to_json())?;
            Ok(!report.has_inconclusive())
        }
        Command::Recurrence { rec, init, run } => {
            let model = recurrence_to_model(&rationals(&rec)?, &rationals(&init)?)?;
            let report = analyze(&model, &run.config())?;
            emit(&run.out, &report.to_json())?;
            Ok(!report.has_inconclusive())
        }
        Command::Orbit { model, run } => {
            let model = AffineModel::from_json(&read(&model)?)?;
            let report = analyze_full_orbit(&model, &run.config())?;
            emit(&run.out, &report.to_json())?;
            Ok(!report.has_inconclusive())
        }
        Command::Interpolate { map, omega, run } => {
            let phi = MapFile::parse(&read(&map)?)?;
            let omega = rationals(&omega)?;
            let text = interpolate_command(&phi, &omega, &run)?;
            emit(&run.out, &text)?;
            Ok(true)
        }
    }
}

fn interpolate_command(phi: &[dml_core::model::RatPoly], omega: &[BigRational], run: &RunArgs) -> Result<String, Failure> {
    let config = run.config();
    config.validate()?;
    let p = run.prime.ok_or_else(|| Failure::Parse("interpolate needs --prime".into()))?;
    if omega.len() != phi.len() {
        return Err(Failure::Parse(format!("--omega has {} values, the map has dimension {}", omega.len(), phi.len())));
    }
    let k = config.precision;
    let engine = |e: String| Failure::Engine(e);
    let ctx = PadicContext::new(p, k).map_err(|e| engine(e.to_string()))?;
    let map = to_padic_map(phi, &ctx, k + 1).map_err(|e| engine(e.to_string()))?;
    let start = omega.iter().map(|q| PadicInt::from_rational(&ctx, q)).collect::<Result<Vec<_>, _>>().map_err(|e| engine(e.to_string()))?;
    let start = PadicVec(start);
    let series = interpolate(&map, &start, run.stages.unwrap_or(2 * k)).map_err(|e| engine(e.to_string()))?;
    check_functional_equation(&map, &series, &start)?;

    let mut out = format!("p = {p}, K = {k}\n");
    for (i, s) in series.iter().enumerate() {
        out.push_str(&format!("component {i}\n  k  v(b_k)  b_k mod p^K\n"));
        for (j, b) in s.coeffs().iter().enumerate() {
            let v = b.valuation();
            let shown = if v.at_floor { format!(">={}", v.value) } else { v.value.to_string() };
            out.push_str(&format!("{j:>3}  {shown:>6}  {b}\n"));
        }
    }
    out.push_str(&format!("f(z+1) = phi(f(z)) mod p^{k} for z = 0..={FUNCTIONAL_CHECKS}"));
    Ok(out)
}

fn check_functional_equation<M: SelfMap>(map: &M, series: &[MahlerSeries], omega: &PadicVec) -> Result<(), Failure> {
    let ctx = map.ctx().clone();
    let at = |z: u64| -> Result<PadicVec, Failure> {
        let z = PadicInt::from_u64(&ctx, z);
        let v = series.iter().map(|s| s.evaluate(&z)).collect::<Result<Vec<_>, _>>().map_err(|e| Failure::Engine(e.to_string()))?;
        Ok(PadicVec(v))
    };
    let mut current = at(0)?;
    if current != *omega {
        return Err(Failure::Engine("interpolation does not start at omega".into()));
    }
    for z in 0..=FUNCTIONAL_CHECKS {
        let next = at(z + 1)?;
        if next != map.apply(&current) {
            return Err(Failure::Engine(format!("functional equation fails at z = {z}")));
        }
        current = next;
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_INCONCLUSIVE),
        Err(Failure::Parse(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_PARSE)
        }
        Err(Failure::Engine(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_ENGINE)
        }
    }
}
