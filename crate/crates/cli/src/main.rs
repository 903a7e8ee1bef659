use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use latmetric::config::ScenarioConfig;
use latmetric::experiments::{run_config, sample_random, RunOptions, SolverSettings};
use latmetric::inversion::{invert_density, InversionOptions};
use latmetric::metrics::{density_distance, potential_distance_a, potential_distance_b, wavefunction_distance};
use latmetric::{Error, ManyBodyState, SiteField, SpinSector};

#[derive(Parser, Debug)]
#[command(name = "latmetric", version, about = "Distances between exact and LDA Hubbard chains")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Worker threads (defaults to LATMETRIC_THREADS, then all cores).
    #[arg(long, global = true, env = "LATMETRIC_THREADS")]
    threads: Option<usize>,

    /// Only print errors.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a scenario config and write its CSV.
    Run(RunArgs),
    /// Find the potential reproducing a target density.
    Invert(InvertArgs),
    /// Distance between two wave functions, densities or potentials.
    Distance(DistanceArgs),
    /// Mean distances of random states from the exact ground state.
    SampleRandom(SampleArgs),
    /// Check a config without running it.
    Validate(ValidateArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output CSV (defaults to the config's output.path, then stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the random-sample seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Largest sector dimension solved exactly.
    #[arg(long)]
    max_dim: Option<usize>,
    #[arg(long)]
    no_inversion: bool,
    /// Directory for per-point inversion traces.
    #[arg(long)]
    trace_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    max_dim: Option<usize>,
}

#[derive(Args, Debug)]
struct SectorArgs {
    #[arg(long)]
    d: usize,
    #[arg(long)]
    n_up: usize,
    #[arg(long)]
    n_down: usize,
    #[arg(long = "U", alias = "u")]
    u: f64,
    #[arg(long, default_value_t = 1.0)]
    t: f64,
}

#[derive(Args, Debug)]
struct InvertArgs {
    #[command(flatten)]
    sector: SectorArgs,
    /// Target density, one value per site.
    #[arg(long)]
    density: PathBuf,
    /// Starting potential (defaults to zero).
    #[arg(long)]
    v0: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-8)]
    threshold: f64,
    #[arg(long, default_value_t = 50_000)]
    max_iter: usize,
    #[arg(long, default_value_t = 1e-6)]
    empty_floor: f64,
    #[arg(long)]
    max_dim: Option<usize>,
    /// Recovered potential (defaults to stdout).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Binary ground state of the recovered system.
    #[arg(long)]
    state_out: Option<PathBuf>,
    /// Per-iteration trace CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum DistanceKind {
    Psi,
    Rho,
    Va,
    Vb,
}

#[derive(Args, Debug)]
struct DistanceArgs {
    #[arg(long, value_enum)]
    kind: DistanceKind,
    #[arg(long)]
    v1: Option<PathBuf>,
    #[arg(long)]
    v2: Option<PathBuf>,
    #[arg(long)]
    rho1: Option<PathBuf>,
    #[arg(long)]
    rho2: Option<PathBuf>,
    /// Particle number for the density distance (defaults to the sum of rho1).
    #[arg(long)]
    particles: Option<f64>,
    /// Binary state files.
    #[arg(long)]
    psi1: Option<PathBuf>,
    #[arg(long)]
    psi2: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SampleArgs {
    #[command(flatten)]
    sector: SectorArgs,
    #[arg(long)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size thread pool: {e}");
        }
    }
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> ExitCode {
    if e.is_numerical() {
        ExitCode::from(2)
    } else {
        ExitCode::from(1)
    }
}

fn dispatch(command: Command) -> latmetric::Result<ExitCode> {
    match command {
        Command::Run(a) => run(a),
        Command::Validate(a) => validate(a),
        Command::Invert(a) => invert(a),
        Command::Distance(a) => distance(a),
        Command::SampleRandom(a) => sample(a),
    }
}

fn output(path: Option<&Path>) -> latmetric::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn run(a: RunArgs) -> latmetric::Result<ExitCode> {
    let config = ScenarioConfig::from_path(&a.config)?;
    let opts = RunOptions {
        max_dim: a.max_dim,
        inversion: a.no_inversion.then_some(false),
        trace_dir: a.trace_dir.or_else(|| config.output.trace_dir.clone()),
        seed: a.seed,
    };
    let result = run_config(&config, &opts)?;
    let out = a.out.or_else(|| config.output.path.clone());
    result.write_csv(output(out.as_deref())?)?;
    if result.has_failures() {
        eprintln!("error: some grid points failed; see the log and empty CSV fields");
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn validate(a: ValidateArgs) -> latmetric::Result<ExitCode> {
    let config = ScenarioConfig::from_path(&a.config)?;
    config.validate_with_max_dim(a.max_dim.unwrap_or(config.solver.max_dim))?;
    eprintln!("{}: ok", a.config.display());
    Ok(ExitCode::SUCCESS)
}

/// Reads numbers separated by whitespace or commas; `#` starts a comment.
fn read_field(path: &Path) -> latmetric::Result<SiteField> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
    let mut values = Vec::new();
    for line in text.lines() {
        let line = line.split('#').next().unwrap_or("");
        for token in line.split(|c: char| c.is_whitespace() || c == ',').filter(|s| !s.is_empty()) {
            let x: f64 = token.parse().map_err(|_| {
                Error::InvalidInput(format!("{}: cannot parse {token:?}", path.display()))
            })?;
            values.push(x);
        }
    }
    SiteField::new(values)
}

fn required<'a>(p: &'a Option<PathBuf>, flag: &str) -> latmetric::Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| Error::InvalidInput(format!("--{flag} is required for this distance kind")))
}

fn read_state(path: &Path) -> latmetric::Result<ManyBodyState> {
    ManyBodyState::read_binary(BufReader::new(File::open(path)?))
}

fn distance(a: DistanceArgs) -> latmetric::Result<ExitCode> {
    let mut out = output(a.out.as_deref())?;
    match a.kind {
        DistanceKind::Psi => {
            let x = read_state(required(&a.psi1, "psi1")?)?;
            let y = read_state(required(&a.psi2, "psi2")?)?;
            let r = wavefunction_distance(&x, &y)?;
            writeln!(out, "raw,scaled\n{},{}", r.raw, r.scaled)?;
        }
        DistanceKind::Rho => {
            let x = read_field(required(&a.rho1, "rho1")?)?;
            let y = read_field(required(&a.rho2, "rho2")?)?;
            let r = density_distance(&x, &y, a.particles.unwrap_or_else(|| x.sum()))?;
            writeln!(out, "raw,scaled\n{},{}", r.raw, r.scaled)?;
        }
        DistanceKind::Va | DistanceKind::Vb => {
            let x = read_field(required(&a.v1, "v1")?)?;
            let y = read_field(required(&a.v2, "v2")?)?;
            let r = match a.kind {
                DistanceKind::Va => potential_distance_a(&x, &y)?,
                _ => potential_distance_b(&x, &y)?,
            };
            writeln!(out, "raw,scaled,c_min\n{},{},{}", r.raw, r.scaled, r.c_min)?;
        }
    }
    out.flush()?;
    Ok(ExitCode::SUCCESS)
}

fn sector(s: &SectorArgs) -> latmetric::Result<SpinSector> {
    SpinSector::new(s.d, s.n_up, s.n_down)
}

fn invert(a: InvertArgs) -> latmetric::Result<ExitCode> {
    let sector = sector(&a.sector)?;
    let target = read_field(&a.density)?;
    let v0 = match &a.v0 {
        Some(p) => read_field(p)?,
        None => SiteField::zeros(sector.d()),
    };
    let mut opts = InversionOptions {
        threshold: a.threshold,
        max_iter: a.max_iter,
        empty_floor: a.empty_floor,
        ..InversionOptions::default()
    };
    if let Some(m) = a.max_dim {
        opts.operator.max_dimension = m;
    }
    let r = invert_density(&target, a.sector.u, a.sector.t, sector, &v0, &opts)?;
    log::info!(
        "converged in {} iterations, mean density error {:.3e}, energy {}",
        r.iterations,
        r.final_error,
        r.energy
    );
    if let Some(p) = &a.trace {
        r.write_trace(p)?;
    }
    if let Some(p) = &a.state_out {
        r.state.write_binary(BufWriter::new(File::create(p)?))?;
    }
    let mut out = output(a.out.as_deref())?;
    for v in r.v.iter() {
        writeln!(out, "{v}")?;
    }
    out.flush()?;
    Ok(ExitCode::SUCCESS)
}

fn sample(a: SampleArgs) -> latmetric::Result<ExitCode> {
    let sector = sector(&a.sector)?;
    let settings = SolverSettings::for_sector(&Default::default(), sector, false);
    let s = sample_random(sector, a.sector.u, a.sector.t, a.samples, a.seed, &settings)?;
    let mut out = output(a.out.as_deref())?;
    writeln!(
        out,
        "samples,mean_d_psi,stderr_d_psi,mean_d_rho,stderr_d_rho\n{},{},{},{},{}",
        s.samples, s.mean_d_psi, s.stderr_d_psi, s.mean_d_rho, s.stderr_d_rho
    )?;
    out.flush()?;
    Ok(ExitCode::SUCCESS)
}
