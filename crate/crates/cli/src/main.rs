//! `logcap`: batch front end. Each run persists its resolved configuration
//! next to its outputs; `--config` replays it.
//!
//! Exit codes: 0 success, 1 numerical failure, 2 input error.

mod config;
mod run;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use logcap::geometry::{GeometryFile, LogPolarPoint};
use logcap::hdp::BoundaryData;
use logcap::mc::McOptions;
use logcap::operator::FieldSpec;
use logcap::wiener::FamilyParams;
use serde_json::json;

use config::*;

#[derive(Parser, Debug)]
#[command(name = "logcap", version, about = "h-capacities, Wiener series, h-Dirichlet solves and h-path sampling")]
struct Cli {
    /// Replay a persisted run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Machine output only.
    #[arg(long, global = true)]
    quiet: bool,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Capacity and equilibrium measure of a geometry.
    Capacity(CapacityArgs),
    /// Wiener series report for a family or geometry.
    Wiener(WienerArgs),
    /// h-Dirichlet problem, uniqueness gap and harmonic measure of the singular point.
    Solve(SolveArgs),
    /// Monte Carlo hitting statistics of h-paths.
    Simulate(SimulateArgs),
    /// Emit the geometry JSON of a built-in family.
    Family(FamilyArgs),
}

#[derive(Args, Debug)]
struct SourceArgs {
    /// Geometry JSON file.
    #[arg(long, conflicts_with = "family")]
    geometry: Option<PathBuf>,
    /// Built-in family name.
    #[arg(long)]
    family: Option<String>,
    #[command(flatten)]
    params: ParamArgs,
}

#[derive(Args, Debug)]
struct ParamArgs {
    #[arg(long, default_value_t = 2.0)]
    a: f64,
    /// Shell range `lo..hi`, inclusive.
    #[arg(long, default_value = "1..8", value_parser = parse_range)]
    n: (i32, i32),
    #[arg(long, default_value_t = 1.0)]
    eps: f64,
    #[arg(long, default_value_t = 1)]
    k: u32,
    #[arg(long, default_value_t = 2)]
    big_n: i32,
    #[arg(long, default_value_t = 1.0)]
    t_min: f64,
}

impl ParamArgs {
    fn params(&self) -> FamilyParams {
        FamilyParams {
            a: self.a,
            n_min: self.n.0,
            n_max: self.n.1,
            k: self.k,
            eps: self.eps,
            big_n: self.big_n,
            t_min: self.t_min,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Kernel {
    Laplace,
    Operator,
}

impl From<Kernel> for KernelChoice {
    fn from(k: Kernel) -> Self {
        match k {
            Kernel::Laplace => KernelChoice::Laplace,
            Kernel::Operator => KernelChoice::Operator,
        }
    }
}

#[derive(Args, Debug)]
struct CapacityArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Route name, or `both`.
    #[arg(long, default_value = "equilibrium_qp")]
    route: String,
    #[arg(long, value_enum, default_value_t = Kernel::Laplace)]
    kernel: Kernel,
    /// Coefficient field JSON, e.g. `{"kind":"diag","a11":2,"a22":0.5}`.
    #[arg(long)]
    field: Option<String>,
    #[arg(long, default_value_t = 40.0)]
    panels_per_unit: f64,
    #[arg(long, default_value_t = 128)]
    n_theta: usize,
}

#[derive(Args, Debug)]
struct WienerArgs {
    #[command(flatten)]
    source: SourceArgs,
    #[arg(long, default_value = "equilibrium_qp")]
    route: String,
    #[arg(long, value_enum, default_value_t = Kernel::Laplace)]
    kernel: Kernel,
    #[arg(long)]
    field: Option<String>,
    #[arg(long, default_value_t = 128)]
    n_theta: usize,
    /// Also compute the Greenian columns.
    #[arg(long)]
    classical: bool,
    /// Radii for the integral form of the test, comma separated.
    #[arg(long, value_delimiter = ',')]
    rho: Option<Vec<f64>>,
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Boundary data JSON file.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = [16.0, 32.0, 64.0])]
    truncations: Vec<f64>,
    /// Probes `t:theta`, comma separated.
    #[arg(long, value_delimiter = ',', value_parser = parse_point, default_value = "1:1.5708,2:1.5708,4:1.5708")]
    probes: Vec<LogPolarPoint>,
    #[arg(long)]
    field: Option<String>,
    #[arg(long, default_value_t = 64)]
    n_theta: usize,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    source: SourceArgs,
    /// Start point `t:theta`.
    #[arg(long, value_parser = parse_point, default_value = "1:3.14159")]
    start: LogPolarPoint,
    #[arg(long, default_value_t = 10_000)]
    n_paths: u64,
    #[arg(long, default_value_t = 0.01)]
    step: f64,
    #[arg(long, default_value_t = 64.0)]
    t_max: f64,
    /// Stop paths at their first hit.
    #[arg(long)]
    first_hit: bool,
    /// Shell range compared with potential theory, `lo..hi`.
    #[arg(long, value_parser = parse_range)]
    check: Option<(i32, i32)>,
    #[arg(long, default_value_t = 0)]
    dump_paths: u64,
}

#[derive(Args, Debug)]
struct FamilyArgs {
    name: String,
    #[command(flatten)]
    params: ParamArgs,
}

fn parse_range(s: &str) -> Result<(i32, i32), String> {
    let (a, b) = s.split_once("..").ok_or_else(|| format!("expected lo..hi, got {s}"))?;
    let lo = a.trim().parse().map_err(|e| format!("{e}"))?;
    let hi = b.trim().parse().map_err(|e| format!("{e}"))?;
    Ok((lo, hi))
}

fn parse_point(s: &str) -> Result<LogPolarPoint, String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("expected t:theta, got {s}"))?;
    let t: f64 = a.trim().parse().map_err(|e| format!("{e}"))?;
    let th: f64 = b.trim().parse().map_err(|e| format!("{e}"))?;
    LogPolarPoint::new(t, th).map_err(|e| e.to_string())
}

/// Failure classes, each with its machine-readable tag and exit code.
#[derive(Debug)]
enum Failure {
    Parse(String),
    Usage(String),
    Input(String),
    Io(String),
    Numerical(String),
}

impl Failure {
    fn tag(&self) -> &'static str {
        match self {
            Failure::Parse(_) => "parse",
            Failure::Usage(_) => "usage",
            Failure::Input(_) => "input",
            Failure::Io(_) => "io",
            Failure::Numerical(_) => "numerical",
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Parse(m) | Failure::Usage(m) | Failure::Input(m) | Failure::Io(m) | Failure::Numerical(m) => m,
        }
    }

    fn code(&self) -> u8 {
        match self {
            Failure::Numerical(_) => 1,
            _ => 2,
        }
    }
}

impl From<logcap::Error> for Failure {
    fn from(e: logcap::Error) -> Self {
        if e.is_input_error() {
            Failure::Input(e.to_string())
        } else {
            Failure::Numerical(e.to_string())
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn parse_json<T: serde::de::DeserializeOwned>(text: &str, what: &str) -> Result<T, Failure> {
    serde_json::from_str(text).map_err(|e| Failure::Parse(format!("{what}: {e}")))
}

fn field(spec: &Option<String>) -> Result<FieldSpec, Failure> {
    match spec {
        None => Ok(FieldSpec::default()),
        Some(s) => Ok(FieldSpec(parse_json(s, "field")?)),
    }
}

fn source(s: &SourceArgs) -> Result<Source, Failure> {
    match (&s.geometry, &s.family) {
        (Some(path), None) => Ok(Source::Geometry(parse_json::<GeometryFile>(&read(path)?, "geometry")?)),
        (None, Some(name)) => Ok(Source::Family { name: name.clone(), params: s.params.params() }),
        _ => Err(Failure::Usage("give exactly one of --geometry or --family".into())),
    }
}

fn build_config(cli: &Cli) -> Result<RunConfig, Failure> {
    if let Some(path) = &cli.config {
        let mut cfg: RunConfig = parse_json(&read(path)?, "config")?;
        if let Some(seed) = cli.seed {
            cfg.seed = seed;
        }
        return Ok(cfg);
    }
    let command = match cli.command.as_ref().ok_or_else(|| Failure::Usage("no command given".into()))? {
        Command::Capacity(c) => CommandConfig::Capacity(CapacityConfig {
            source: source(&c.source)?,
            routes: if c.route == "both" {
                vec!["equilibrium_qp".into(), "obstacle_fem".into()]
            } else {
                vec![c.route.clone()]
            },
            kernel: c.kernel.into(),
            field: field(&c.field)?,
            panels_per_unit: c.panels_per_unit,
            n_theta: c.n_theta,
        }),
        Command::Wiener(c) => {
            let src = source(&c.source)?;
            let a = match &src {
                Source::Geometry(g) if c.source.params.a == 2.0 => g.a.unwrap_or(2.0),
                _ => c.source.params.a,
            };
            CommandConfig::Wiener(WienerConfig {
                source: src,
                a,
                n_min: c.source.params.n.0,
                n_max: c.source.params.n.1,
                route: c.route.clone(),
                kernel: c.kernel.into(),
                field: field(&c.field)?,
                n_theta: c.n_theta,
                classical: c.classical,
                rho_grid: c.rho.clone(),
            })
        }
        Command::Solve(c) => CommandConfig::Solve(SolveConfig {
            source: source(&c.source)?,
            data: match &c.data {
                Some(p) => Some(parse_json::<BoundaryData>(&read(p)?, "boundary data")?),
                None => None,
            },
            truncations: c.truncations.clone(),
            probes: c.probes.clone(),
            field: field(&c.field)?,
            n_theta: c.n_theta,
        }),
        Command::Simulate(c) => CommandConfig::Simulate(SimulateConfig {
            source: source(&c.source)?,
            start: c.start,
            n_paths: c.n_paths,
            mc: McOptions {
                step: c.step,
                t_max: c.t_max,
                a: c.source.params.a,
                stop_at_first_hit: c.first_hit,
                ..McOptions::default()
            },
            check: c.check,
            dump_paths: c.dump_paths,
        }),
        Command::Family(c) => CommandConfig::Family(FamilyConfig { name: c.name.clone(), params: c.params.params() }),
    };
    Ok(RunConfig { seed: cli.seed.unwrap_or(0), out: None, command })
}

/// Writes through a temporary file in the same directory, then renames.
fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), Failure> {
    let io = |e: std::io::Error| Failure::Io(format!("{}: {e}", dir.join(name).display()));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.persist(dir.join(name)).map_err(|e| io(e.error))?;
    Ok(())
}

fn pretty(v: &impl serde::Serialize) -> Vec<u8> {
    let mut s = serde_json::to_vec_pretty(v).expect("serializable");
    s.push(b'\n');
    s
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let mut cfg = build_config(cli)?;
    if let Some(out) = &cli.out {
        cfg.out = Some(out.display().to_string());
    }
    let outputs = run::execute(&cfg)?;
    let result = pretty(&outputs.result);
    if let Some(dir) = cfg.out.as_deref().map(PathBuf::from) {
        fs::create_dir_all(&dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
        // the persisted config never pins the output directory
        let persisted = RunConfig { out: None, ..cfg.clone() };
        write_atomic(&dir, "config.json", &pretty(&persisted))?;
        write_atomic(&dir, "result.json", &result)?;
        for (name, bytes) in &outputs.files {
            write_atomic(&dir, name, bytes)?;
        }
    }
    std::io::stdout().write_all(&result).map_err(|e| Failure::Io(e.to_string()))?;
    if !cli.quiet {
        eprintln!("{}: {}", cfg.command.name(), outputs.summary);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            e.exit()
        }
        Err(e) => {
            let f = Failure::Usage(e.to_string().trim().to_string());
            println!("{}", json!({ "error": f.tag(), "message": f.message() }));
            return ExitCode::from(f.code());
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            println!("{}", json!({ "error": f.tag(), "message": f.message() }));
            ExitCode::from(f.code())
        }
    }
}
