//! `spinmeas`: ground states, time evolution, measurement scenarios and
//! spectra for XXZ rings.
//!
//! Exit codes: 0 success, 2 invalid input, 3 convergence or precision
//! failure, 4 impossible measurement outcome, 1 anything else (I/O).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use spinmeas_core::presets::{preset_scenarios, PRESETS};
use spinmeas_core::scenario::{human_bytes, DEFAULT_MAX_MEMORY};
use spinmeas_core::{
    bethe_reference_energy_per_site, energy, fourier_spectrum, import_table, lanczos_ground_state,
    load_scenarios, read_state, run_scenario, table, validate_scenario, Axis, ChainSpec, Error,
    LanczosConfig, ObservableId, PhaseConvention, Propagator, PropagatorConfig, RunOptions, Scenario,
    TableFormat, Window,
};

#[derive(Parser)]
#[command(name = "spinmeas", version, about = "Projective measurements on antiferromagnetic spin-1/2 rings")]
struct Cli {
    /// Log verbosity: -v for progress, -vv for solver details.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Lanczos ground state with an energy report.
    Gs(GsArgs),
    /// Evolve a state file by a time step.
    Evolve(EvolveArgs),
    /// Run or check scenario files.
    #[command(subcommand)]
    Scenario(ScenarioCommand),
    /// Fourier spectrum of one series in a table.
    Spectrum(SpectrumArgs),
    /// Built-in scenario presets.
    #[command(subcommand)]
    Presets(PresetsCommand),
}

#[derive(Clone, Copy, ValueEnum)]
enum Toggle {
    On,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

impl From<Format> for TableFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => TableFormat::Csv,
            Format::Json => TableFormat::Json,
        }
    }
}

#[derive(Args)]
struct SolverArgs {
    /// Solve the ground state in the S^z = 0 sector.
    #[arg(long, value_enum, default_value = "on")]
    sector: Toggle,
    /// Seed of the Lanczos start vector.
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

impl SolverArgs {
    fn lanczos(&self) -> LanczosConfig {
        LanczosConfig {
            seed: self.seed,
            use_sector: matches!(self.sector, Toggle::On),
            ..LanczosConfig::default()
        }
    }
}

#[derive(Args)]
struct PropagatorArgs {
    /// Chebyshev coefficients below this magnitude are dropped.
    #[arg(long, default_value = "1e-16")]
    cutoff: f64,
}

impl PropagatorArgs {
    fn config(&self) -> PropagatorConfig {
        PropagatorConfig {
            coefficient_cutoff: self.cutoff,
            ..PropagatorConfig::default()
        }
    }
}

#[derive(Args)]
struct ChainArgs {
    /// Number of sites (even, at least 4).
    #[arg(short = 'n', long)]
    n_sites: usize,
    /// Exchange constant J > 0.
    #[arg(long, default_value_t = 1.0)]
    j: f64,
    /// Ising anisotropy Δ.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    delta: f64,
}

#[derive(Args)]
struct GsArgs {
    #[command(flatten)]
    chain: ChainArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Write the ground state to this state file.
    #[arg(long)]
    save: Option<PathBuf>,
    /// Print the report as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct EvolveArgs {
    /// Input state file.
    #[arg(long)]
    input: PathBuf,
    /// Output state file.
    #[arg(long)]
    output: PathBuf,
    /// Time step in units of 1/J (negative runs backwards).
    #[arg(long, allow_hyphen_values = true)]
    time: f64,
    #[command(flatten)]
    propagator: PropagatorArgs,
}

#[derive(Subcommand)]
enum ScenarioCommand {
    /// Execute scenarios and write tables and manifests.
    Run(RunArgs),
    /// Check scenarios without running them.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file, preset name (`fig3`) or preset scenario (`fig3-n20`).
    target: String,
    /// Run only the scenarios with these names.
    #[arg(long)]
    only: Vec<String>,
    #[command(flatten)]
    solver: SolverArgs,
    #[command(flatten)]
    propagator: PropagatorArgs,
    /// Override the sampling step of every scenario.
    #[arg(long)]
    dt: Option<f64>,
    /// Directory receiving one subdirectory per scenario.
    #[arg(long, default_value = "spinmeas-out")]
    out_dir: PathBuf,
    /// Table format of the series and spectrum files.
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Refuse runs whose memory estimate exceeds this size (e.g. 512M, 16G).
    #[arg(long, value_parser = parse_size)]
    max_memory: Option<u64>,
    /// Save branch states after every event.
    #[arg(long)]
    checkpoint: bool,
    /// Continue from a checkpoint left in the output directory.
    #[arg(long)]
    resume: bool,
}

#[derive(Args)]
struct ValidateArgs {
    /// Scenario file, preset name or preset scenario.
    target: String,
    #[arg(long, value_enum, default_value = "on")]
    sector: Toggle,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long, value_parser = parse_size)]
    max_memory: Option<u64>,
    /// Print the reports as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct SpectrumArgs {
    /// Series table (`.csv` or `.json`).
    series: PathBuf,
    /// Site of the magnetization series.
    #[arg(long, default_value_t = 1)]
    site: usize,
    #[arg(long, default_value = "z")]
    axis: Axis,
    /// Use samples from this time on (post-event values at repeated times).
    #[arg(long)]
    from: Option<f64>,
    #[arg(long, default_value = "rectangular")]
    window: Window,
    /// Keep the mean instead of subtracting it.
    #[arg(long)]
    no_detrend: bool,
    /// Write the spectrum table here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Spectrum table format (default: from the file extension).
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Subcommand)]
enum PresetsCommand {
    /// Names and scenario counts.
    List,
    /// Print a preset file.
    Show { name: String },
}

fn parse_size(s: &str) -> Result<u64, String> {
    let s = s.trim();
    let (digits, unit) = s.split_at(s.find(|c: char| c.is_ascii_alphabetic()).unwrap_or(s.len()));
    let value: f64 = digits.trim().parse().map_err(|_| format!("bad size {s:?}"))?;
    let scale: u64 = match unit.trim().to_ascii_uppercase().trim_end_matches("IB").trim_end_matches('B') {
        "" => 1,
        "K" => 1 << 10,
        "M" => 1 << 20,
        "G" => 1 << 30,
        "T" => 1 << 40,
        _ => return Err(format!("unknown size unit in {s:?}")),
    };
    if !(value >= 0.0) {
        return Err(format!("bad size {s:?}"));
    }
    Ok((value * scale as f64) as u64)
}

fn load_target(target: &str) -> Result<Vec<Scenario>, Error> {
    let path = Path::new(target);
    if path.exists() {
        load_scenarios(path)
    } else {
        preset_scenarios(target)
    }
}

fn gs(args: GsArgs) -> Result<(), Error> {
    let spec = ChainSpec::new(args.chain.n_sites, args.chain.j, args.chain.delta)?;
    let result = lanczos_ground_state(&spec, &args.solver.lanczos())?;
    if let Some(path) = &args.save {
        spinmeas_core::write_state(path, &result.state, PhaseConvention::LargestRealPositive)?;
    }
    let n = spec.n_sites as f64;
    let report = serde_json::json!({
        "n_sites": spec.n_sites,
        "exchange_j": spec.exchange_j,
        "anisotropy_delta": spec.anisotropy_delta,
        "energy": result.energy,
        "energy_per_site": result.energy / n,
        "bethe_energy_per_site": spec.exchange_j * bethe_reference_energy_per_site(),
        "residual": result.residual,
        "iterations": result.iterations,
        "sector_total_sz": result.sector_used,
        "state_file": args.save,
    });
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report).unwrap());
    } else {
        println!("N = {}  J = {}  Δ = {}", spec.n_sites, spec.exchange_j, spec.anisotropy_delta);
        println!("E0      = {:.15}", result.energy);
        println!("E0/N    = {:.15}", result.energy / n);
        println!("Bethe   = {:.15} (N → ∞, Δ = 0)", spec.exchange_j * bethe_reference_energy_per_site());
        println!("residual {:.3e} after {} Lanczos steps", result.residual, result.iterations);
        match result.sector_used {
            Some(sz) => println!("solved in the S^z = {sz} sector"),
            None => println!("solved in the full space"),
        }
        if let Some(path) = &args.save {
            println!("state written to {}", path.display());
        }
    }
    Ok(())
}

fn evolve(args: EvolveArgs) -> Result<(), Error> {
    let (header, psi) = read_state(&args.input)?;
    let mut propagator = Propagator::new(header.spec, args.propagator.config())?;
    let out = propagator.evolve(&psi, args.time)?;
    spinmeas_core::write_state(&args.output, &out, PhaseConvention::Unfixed)?;
    println!(
        "evolved by t = {} (norm {:.15}, energy {:.12}) -> {}",
        args.time,
        out.norm(),
        energy(&out, &header.spec)?,
        args.output.display()
    );
    Ok(())
}

fn scenario_run(args: RunArgs) -> Result<(), Error> {
    let mut scenarios = load_target(&args.target)?;
    if !args.only.is_empty() {
        let missing: Vec<String> = args
            .only
            .iter()
            .filter(|n| !scenarios.iter().any(|s| &s.name == *n))
            .map(|n| format!("no scenario named {n:?} in {}", args.target))
            .collect();
        if !missing.is_empty() {
            return Err(Error::Validation(missing));
        }
        scenarios.retain(|s| args.only.contains(&s.name));
    }
    let opts = RunOptions {
        lanczos: args.solver.lanczos(),
        propagator: args.propagator.config(),
        dt: args.dt,
        out_dir: Some(args.out_dir.clone()),
        format: args.format.into(),
        max_memory: args.max_memory.unwrap_or(DEFAULT_MAX_MEMORY),
        checkpoint: args.checkpoint,
        resume: args.resume,
        stop_after_event: None,
    };
    for s in &scenarios {
        let out = run_scenario(s, &opts)?;
        let m = &out.manifest;
        print!("{}: {} samples", s.name, out.records.first().map_or(0, |r| r.len()));
        if let Some(g) = &m.ground_state {
            print!(", E0 = {:.12}", g.energy);
        }
        for e in &m.events {
            let probs: Vec<String> = e.probabilities.iter().map(|p| format!("{}:{:.6}", p.sign, p.probability)).collect();
            print!(", event {} at t = {} [{}]", e.index, e.time, probs.join(" "));
        }
        if let Some(w) = m.dominant_frequency {
            print!(", dominant ω = {w:.6}");
        }
        println!(" ({:.1} s)", m.wall_clock_seconds);
        if let Some(dir) = &out.output_dir {
            println!("  -> {}", dir.display());
        }
    }
    Ok(())
}

fn scenario_validate(args: ValidateArgs) -> Result<(), Error> {
    let scenarios = load_target(&args.target)?;
    let opts = RunOptions {
        lanczos: LanczosConfig {
            use_sector: matches!(args.sector, Toggle::On),
            ..LanczosConfig::default()
        },
        dt: args.dt,
        max_memory: args.max_memory.unwrap_or(DEFAULT_MAX_MEMORY),
        ..RunOptions::default()
    };
    let mut failures = Vec::new();
    let mut reports = Vec::new();
    for s in &scenarios {
        let report = validate_scenario(s, &opts);
        if args.json {
            reports.push(serde_json::json!({ "name": s.name, "report": report }));
        } else {
            let status = if report.is_ok() { "ok" } else { "INVALID" };
            println!("{}: {status}, memory estimate {}", s.name, human_bytes(report.memory_estimate_bytes));
            for v in &report.violations {
                println!("  violation: {v}");
            }
            for w in &report.warnings {
                println!("  warning: {w}");
            }
        }
        failures.extend(report.violations.iter().map(|v| format!("{}: {v}", s.name)));
    }
    if args.json {
        println!("{}", serde_json::to_string_pretty(&reports).unwrap());
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Error::Validation(failures))
    }
}

fn spectrum(args: SpectrumArgs) -> Result<(), Error> {
    let records = import_table(&args.series)?;
    let id = ObservableId::Magnetization {
        site: args.site,
        axis: args.axis,
    };
    let record = records
        .iter()
        .find(|r| r.id == id)
        .ok_or_else(|| Error::Validation(vec![format!("{} has no series {id}", args.series.display())]))?;
    let from = args.from.unwrap_or(f64::NEG_INFINITY);
    let spec = fourier_spectrum(&record.post_event_view(from), args.window, !args.no_detrend)?;
    match spec.dominant_frequency() {
        Some(w) => println!("dominant ω = {w:.9} ({} samples, dt = {})", spec.n_samples, spec.dt),
        None => println!("no positive frequencies ({} samples)", spec.n_samples),
    }
    if let Some(path) = &args.out {
        let format = args.format.map(TableFormat::from).unwrap_or_else(|| TableFormat::from_path(path));
        table::export_spectrum(&spec, format, path)?;
        println!("spectrum written to {}", path.display());
    }
    Ok(())
}

fn presets(cmd: PresetsCommand) -> Result<(), Error> {
    match cmd {
        PresetsCommand::List => {
            for p in PRESETS {
                let names: Vec<String> = p.scenarios()?.into_iter().map(|s| s.name).collect();
                println!("{:<6} {}", p.name, p.summary);
                println!("       {}", names.join(" "));
            }
        }
        PresetsCommand::Show { name } => match spinmeas_core::presets::preset(&name) {
            Some(p) => print!("{}", p.source),
            None => return Err(Error::Validation(vec![format!("no preset named {name:?}")])),
        },
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::Gs(a) => gs(a),
        Command::Evolve(a) => evolve(a),
        Command::Scenario(ScenarioCommand::Run(a)) => scenario_run(a),
        Command::Scenario(ScenarioCommand::Validate(a)) => scenario_validate(a),
        Command::Spectrum(a) => spectrum(a),
        Command::Presets(c) => presets(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes() {
        assert_eq!(parse_size("512").unwrap(), 512);
        assert_eq!(parse_size("4G").unwrap(), 4 << 30);
        assert_eq!(parse_size("1.5KiB").unwrap(), 1536);
        assert_eq!(parse_size("16 MB").unwrap(), 16 << 20);
        assert!(parse_size("3X").is_err());
        assert!(parse_size("-1G").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
