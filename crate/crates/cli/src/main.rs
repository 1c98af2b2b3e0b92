use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use bpve::asymptotics::{check_conditions, fit_rate, predictors, RateModel};
use bpve::config::EnvSpec;
use bpve::dist::{eta_cf, eta_direct, DistRow, Initial};
use bpve::report::{read_dist_csv, write_asym_csv, write_compare_csv, write_dist_csv, write_dist_tables};
use bpve::sim::{compare, run_sim, SimConfig, SimResult};
use bpve::transform::build_a;
use bpve::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

#[derive(Parser)]
#[command(name = "bpve", version, about = "Extinction-time laws of two-type linear-fractional branching processes in varying environments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Exact law of the extinction time as CSV.
    Dist(DistArgs),
    /// Exact values beside the radius predictors, plus a rate fit.
    Asym(AsymArgs),
    /// Regularity conditions of an environment as JSON.
    Check(CheckArgs),
    /// Monte Carlo extinction-time histogram as JSON.
    Sim(SimArgs),
    /// Per-generation z-scores of a simulation against exact masses.
    Compare(CompareArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum InitialArg {
    E1,
    E2,
}

impl From<InitialArg> for Initial {
    fn from(i: InitialArg) -> Initial {
        match i {
            InitialArg::E1 => Initial::E1,
            InitialArg::E2 => Initial::E2,
        }
    }
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum Method {
    Direct,
    Cf,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum FitModel {
    Power,
    PowerLog2,
    IteratedLog,
}

#[derive(Clone, Copy, ValueEnum)]
enum Series {
    Mass,
    Tail,
}

#[derive(Args)]
struct DistArgs {
    /// Environment spec (.json or .toml).
    env: PathBuf,
    #[arg(long)]
    n_max: usize,
    #[arg(long, value_enum, default_value = "e1")]
    initial: InitialArg,
    #[arg(long, value_enum, default_value = "direct")]
    method: Method,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AsymArgs {
    env: PathBuf,
    #[arg(long)]
    n_max: usize,
    #[arg(long, value_enum, default_value = "power")]
    fit_model: FitModel,
    /// Depth of the iterated logarithm for `iterated-log`.
    #[arg(long, default_value_t = 2)]
    fit_k: u32,
    /// Leading power of n for `iterated-log`.
    #[arg(long, default_value_t = 2.0)]
    fit_lead: f64,
    /// Fit window as `LO,HI`.
    #[arg(long, value_parser = parse_window)]
    window: Option<(usize, usize)>,
    #[arg(long, value_enum, default_value = "mass")]
    series: Series,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CheckArgs {
    env: PathBuf,
    /// Comma-separated probe indices.
    #[arg(long, value_delimiter = ',')]
    probe_grid: Option<Vec<usize>>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimArgs {
    env: PathBuf,
    #[arg(long)]
    runs: u64,
    #[arg(long)]
    horizon: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, value_enum, default_value = "e1")]
    initial: InitialArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    dist: PathBuf,
    sim: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn parse_window(s: &str) -> Result<(usize, usize), String> {
    let (lo, hi) = s.split_once(',').ok_or("expected LO,HI")?;
    let lo = lo.trim().parse().map_err(|e| format!("{e}"))?;
    let hi = hi.trim().parse().map_err(|e| format!("{e}"))?;
    Ok((lo, hi))
}

enum Failure {
    Validation(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Validation(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Validation(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Validation(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

struct Manifest {
    command: &'static str,
    digest: String,
    params: Value,
    outputs: Vec<PathBuf>,
    extra: Value,
    start: Instant,
}

impl Manifest {
    fn new(command: &'static str, digest: String, params: Value) -> Self {
        Manifest { command, digest, params, outputs: Vec::new(), extra: json!({}), start: Instant::now() }
    }

    fn write(self, primary: &Path) -> Outcome {
        let path = manifest_path(primary);
        let doc = json!({
            "command": self.command,
            "env_digest": self.digest,
            "parameters": self.params,
            "outputs": self.outputs.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
            "tool_version": env!("CARGO_PKG_VERSION"),
            "wall_time_s": self.start.elapsed().as_secs_f64(),
            "extra": self.extra,
        });
        std::fs::write(path, serde_json::to_string_pretty(&doc)? + "\n")?;
        Ok(())
    }
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}{suffix}"))
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Loads a spec and digests its canonical JSON form, so equivalent JSON and
/// TOML files share a digest.
fn load_env(path: &Path) -> Result<(EnvSpec, bpve::env::EnvSequence, String), Failure> {
    let spec = EnvSpec::load(path)?;
    let env = spec.build()?;
    let digest = sha256_hex(serde_json::to_string(&spec)?.as_bytes());
    Ok((spec, env, digest))
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?))
}

fn cmd_dist(a: &DistArgs) -> Outcome {
    let (_, env, digest) = load_env(&a.env)?;
    if a.n_max == 0 {
        return Err(Failure::Validation("--n-max must be at least 1".into()));
    }
    let initial: Initial = a.initial.into();
    let mut man = Manifest::new(
        "dist",
        digest,
        json!({ "env": a.env, "n_max": a.n_max, "initial": initial, "method": a.method.to_possible_value().unwrap().get_name() }),
    );
    let direct = || eta_direct(&env, a.n_max, initial).collect::<Vec<DistRow>>();
    let cf = || -> Result<Vec<DistRow>, Failure> {
        if initial != Initial::E1 {
            return Err(Failure::Validation("the cf method supports --initial e1 only".into()));
        }
        let t = build_a(&env)?;
        Ok(eta_cf(&t, a.n_max).map(|r| r.map(DistRow::from)).collect::<Result<_, _>>()?)
    };
    let mut w = create(&a.out)?;
    match a.method {
        Method::Direct => write_dist_csv(&mut w, &direct(), "direct")?,
        Method::Cf => write_dist_csv(&mut w, &cf()?, "cf")?,
        Method::Both => {
            let (d, c) = (direct(), cf()?);
            let worst = d
                .iter()
                .zip(&c)
                .map(|(x, y)| (x.eta - y.eta).abs() / x.eta.abs().max(f64::MIN_POSITIVE))
                .fold(0.0f64, f64::max);
            write_dist_tables(&mut w, &[(&d, "direct"), (&c, "cf")])?;
            man.extra = json!({ "max_rel_discrepancy": worst });
        }
    }
    drop(w);
    man.outputs.push(a.out.clone());
    man.write(&a.out)
}

fn cmd_asym(a: &AsymArgs) -> Outcome {
    let (_, env, digest) = load_env(&a.env)?;
    let model = match a.fit_model {
        FitModel::Power => RateModel::Power,
        FitModel::PowerLog2 => RateModel::PowerLog2,
        FitModel::IteratedLog => RateModel::IteratedLog { k: a.fit_k, lead: a.fit_lead },
    };
    let mut man = Manifest::new(
        "asym",
        digest,
        json!({ "env": a.env, "n_max": a.n_max, "fit_model": model, "window": a.window,
                "series": a.series.to_possible_value().unwrap().get_name() }),
    );
    let rows = predictors(&env, a.n_max)?;
    write_asym_csv(create(&a.out)?, &rows)?;
    let series: Vec<(usize, f64)> = rows
        .iter()
        .map(|r| match a.series {
            Series::Mass => (r.n, r.mass),
            Series::Tail => (r.n, r.eta),
        })
        .collect();
    let fit = fit_rate(&series, model, a.window)?;
    let fit_path = sibling(&a.out, ".fit.json");
    let doc = json!({
        "model": fit.model,
        "params": { "exponent": fit.exponent, "c": fit.c },
        "resid": fit.resid,
        "window": [fit.window.0, fit.window.1],
        "points": fit.points,
    });
    std::fs::write(&fit_path, serde_json::to_string_pretty(&doc)? + "\n")?;
    man.outputs.extend([a.out.clone(), fit_path]);
    man.write(&a.out)
}

fn cmd_check(a: &CheckArgs) -> Outcome {
    let (_, env, digest) = load_env(&a.env)?;
    let mut man = Manifest::new("check", digest, json!({ "env": a.env, "probe_grid": a.probe_grid }));
    let report = check_conditions(&env, a.probe_grid.as_deref())?;
    std::fs::write(&a.out, serde_json::to_string_pretty(&report)? + "\n")?;
    man.outputs.push(a.out.clone());
    man.write(&a.out)
}

fn cmd_sim(a: &SimArgs) -> Outcome {
    let (_, env, digest) = load_env(&a.env)?;
    let cfg = SimConfig { runs: a.runs, horizon: a.horizon, seed: a.seed, initial: a.initial.into() };
    let mut man = Manifest::new("sim", digest, serde_json::to_value(cfg)?);
    let res = run_sim(&env, &cfg)?;
    std::fs::write(&a.out, serde_json::to_string_pretty(&res)? + "\n")?;
    man.outputs.push(a.out.clone());
    man.write(&a.out)
}

fn cmd_compare(a: &CompareArgs) -> Outcome {
    let dist_bytes = std::fs::read(&a.dist)?;
    let sim_bytes = std::fs::read(&a.sim)?;
    let mut hasher = Sha256::new();
    hasher.update(&dist_bytes);
    hasher.update(&sim_bytes);
    let mut man = Manifest::new(
        "compare",
        hex::encode(hasher.finalize()),
        json!({ "dist": a.dist, "sim": a.sim }),
    );
    let (rows, method) = read_dist_csv(dist_bytes.as_slice())?;
    let sim: SimResult = serde_json::from_slice(&sim_bytes)?;
    let table = compare(&rows, &sim);
    let max_z = table
        .iter()
        .filter(|r| r.exact * sim.runs as f64 >= 10.0)
        .map(|r| r.z.abs())
        .fold(0.0f64, f64::max);
    write_compare_csv(create(&a.out)?, &table)?;
    man.extra = json!({ "method": method, "max_abs_z_expected_ge_10": max_z });
    man.outputs.push(a.out.clone());
    man.write(&a.out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = match &cli.cmd {
        Cmd::Dist(a) => cmd_dist(a),
        Cmd::Asym(a) => cmd_asym(a),
        Cmd::Check(a) => cmd_check(a),
        Cmd::Sim(a) => cmd_sim(a),
        Cmd::Compare(a) => cmd_compare(a),
    };
    match out {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(m)) => {
            eprintln!("numerical error: {m}");
            ExitCode::from(3)
        }
    }
}
