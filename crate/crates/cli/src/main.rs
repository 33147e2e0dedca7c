use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nusrecon::analysis::{self, CorrelationOptions, GroupSpec, Method, Scenario};
use nusrecon::io::{self, Table};
use nusrecon::ist::{IstConfig, ThresholdMode};
use nusrecon::pipeline::{self, MethodName, ReconConfig};
use nusrecon::sampling::{self, POISSON_GAP_GENERATOR, UNIFORM_GENERATOR};
use nusrecon::spectral::{Shape, ShrinkMode};
use nusrecon::training::{self, DatasetSpec, TrainConfig};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "nusrecon", version, about = "Reconstruction of non-uniformly sampled NMR signals")]
struct Cli {
    /// Seed for every random draw; overrides seeds in spec/config files.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (1 = fully deterministic scheduling).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic training set.
    GenDataset {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a sampling schedule (Poisson-gap for lines, uniform for planes).
    MakeMask {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        n2: Option<usize>,
        #[arg(long)]
        density: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Zero every sample of a fully sampled fid that is off the schedule.
    Undersample {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        mask: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    Reconstruct(ReconArgs),
    /// Train the unrolled network.
    Train {
        #[arg(long, conflicts_with = "spec", required_unless_present = "spec")]
        dataset: Option<PathBuf>,
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Compare a reconstruction with a reference spectrum.
    Evaluate {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long)]
        hat: PathBuf,
        /// Peak positions (flat indices, one per line); picked from the
        /// reference when absent.
        #[arg(long)]
        peaks: Option<PathBuf>,
        #[command(flatten)]
        picking: PickArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reconstruct-and-score across sampling densities.
    Sweep {
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Sweep IST instead of a network.
        #[arg(long, conflicts_with = "weights")]
        ist: bool,
        #[arg(long, value_delimiter = ',', required = true)]
        densities: Vec<f64>,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time-zero extrapolation and relative concentrations.
    Quantify {
        #[arg(long)]
        volumes: PathBuf,
        #[arg(long)]
        groups: PathBuf,
        #[arg(long)]
        reference: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the HTTP job service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: std::net::SocketAddr,
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long)]
        weights_dir: Option<PathBuf>,
        #[arg(long, default_value_t = 64 << 20)]
        max_upload_bytes: usize,
        /// Shared secret required in the x-nusrecon-secret header.
        #[arg(long, env = "NUSRECON_SECRET")]
        secret: Option<String>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OnOff {
    On,
    Off,
}

impl From<OnOff> for bool {
    fn from(v: OnOff) -> bool {
        v == OnOff::On
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Ist,
    Modern,
}

#[derive(Clone, Copy, ValueEnum)]
enum ShrinkArg {
    Complex,
    Separable,
}

/// Reconstruct a spectrum from non-uniformly sampled data.
#[derive(Args)]
struct ReconArgs {
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    mask: PathBuf,
    /// Full reconstruction config (same document the service accepts).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    ve: Option<OnOff>,
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long)]
    ist_max_iters: Option<usize>,
    #[arg(long)]
    ist_tol: Option<f64>,
    /// Absolute threshold (switches to absolute mode).
    #[arg(long, conflicts_with_all = ["ist_rho", "ist_decay"])]
    ist_lambda: Option<f64>,
    #[arg(long)]
    ist_rho: Option<f64>,
    #[arg(long)]
    ist_decay: Option<f64>,
    #[arg(long, value_enum)]
    ist_shrink: Option<ShrinkArg>,
    #[arg(long, value_enum)]
    ist_final_dc: Option<OnOff>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    diagnostics: Option<PathBuf>,
}

#[derive(Args)]
struct PickArgs {
    #[arg(long, default_value_t = 0.01)]
    min_rel: f64,
    #[arg(long, default_value_t = 2)]
    window: usize,
    #[arg(long, default_value_t = 2)]
    match_tol: usize,
    /// Only correlate peaks below this fraction of the tallest reference peak.
    #[arg(long)]
    weak_fraction: Option<f64>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn emit_table(t: &Table, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => {
            let body = if p.extension().is_some_and(|e| e == "json") { t.to_json() } else { t.to_text() };
            io::write_atomic(p, body.as_bytes())?;
        }
        None => print!("{}", t.to_text()),
    }
    Ok(())
}

fn num(v: f64) -> Value {
    serde_json::Number::from_f64(v).map_or(Value::Null, Value::Number)
}

fn recon_config(a: &ReconArgs) -> Result<ReconConfig> {
    let mut cfg: ReconConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => ReconConfig::default(),
    };
    if let Some(m) = a.method {
        cfg.method = match m {
            MethodArg::Ist => MethodName::Ist,
            MethodArg::Modern => MethodName::Modern,
        };
    }
    if let Some(v) = a.ve {
        cfg.ve = Some(v.into());
    }
    let ist: &mut IstConfig = &mut cfg.ist;
    if let Some(v) = a.ist_max_iters {
        ist.max_iters = v;
    }
    if let Some(v) = a.ist_tol {
        ist.tol = v;
    }
    if let Some(lambda) = a.ist_lambda {
        ist.threshold = ThresholdMode::Absolute { lambda };
    }
    if a.ist_rho.is_some() || a.ist_decay.is_some() {
        let (rho0, decay0) = match ist.threshold {
            ThresholdMode::Relative { rho, decay } => (rho, decay),
            ThresholdMode::Absolute { .. } => (0.99, 0.98),
        };
        ist.threshold = ThresholdMode::Relative { rho: a.ist_rho.unwrap_or(rho0), decay: a.ist_decay.unwrap_or(decay0) };
    }
    if let Some(s) = a.ist_shrink {
        ist.shrinkage = match s {
            ShrinkArg::Complex => ShrinkMode::ComplexMagnitude,
            ShrinkArg::Separable => ShrinkMode::SeparableReal,
        };
    }
    if let Some(v) = a.ist_final_dc {
        ist.final_dc = v.into();
    }
    Ok(cfg)
}

fn reconstruct(a: &ReconArgs) -> Result<()> {
    let cfg = recon_config(a)?;
    let input = io::read_container(&a.input)?;
    let schedule = io::read_schedule(&a.mask)?;
    let weights_path = a.weights.clone().or_else(|| cfg.weights.as_ref().map(PathBuf::from));
    let weights = match (cfg.method, weights_path) {
        (MethodName::Modern, Some(p)) => Some(io::read_weights(&p)?),
        (MethodName::Modern, None) => bail!("--method modern needs --weights"),
        (MethodName::Ist, _) => None,
    };
    let out = pipeline::reconstruct(&input, &schedule, &cfg, weights.as_ref())?;
    io::write_container(&out.spectrum, &a.out)?;
    if let Some(p) = &a.diagnostics {
        io::write_atomic(p, serde_json::to_string_pretty(&out.diagnostics)?.as_bytes())?;
    }
    Ok(())
}

fn make_mask(n: usize, n2: Option<usize>, density: f64, seed: u64, out: &Path) -> Result<()> {
    let (schedule, generator) = match n2 {
        None => {
            let count = sampling::count_for_density(n, density)?;
            (sampling::poisson_gap_schedule(n, count, seed)?, POISSON_GAP_GENERATOR)
        }
        Some(m) => {
            let grid = Shape::Plane(n, m);
            let count = sampling::count_for_density(grid.len(), density)?;
            (sampling::uniform_schedule(grid, count, seed)?, UNIFORM_GENERATOR)
        }
    };
    io::write_schedule(&schedule, generator, out)?;
    Ok(())
}

fn train(
    dataset: Option<&Path>,
    spec: Option<&Path>,
    config: Option<&Path>,
    seed: Option<u64>,
    out: &Path,
    history: Option<&Path>,
) -> Result<()> {
    let data = match (dataset, spec) {
        (Some(dir), _) => io::read_dataset::<f64>(dir)?.0,
        (None, Some(p)) => {
            let mut s: DatasetSpec = read_json(p)?;
            if let Some(seed) = seed {
                s.seed = seed;
            }
            training::generate_dataset(&s)?
        }
        (None, None) => bail!("give --dataset or --spec"),
    };
    let mut cfg: TrainConfig = match config {
        Some(p) => read_json(p)?,
        None => TrainConfig::default(),
    };
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let result = training::train_with(&data, &cfg, |e| {
        eprintln!("epoch {:>3}  train {:.5}  valid {:.5}  lr {:.3e}", e.epoch, e.train_rlne, e.valid_rlne, e.lr);
    })?;
    io::write_weights(&result.weights, out)?;
    if let Some(h) = history {
        let mut t = Table::new(["epoch", "train_rlne", "valid_rlne", "lr"]);
        for e in &result.history {
            t.push(vec![json!(e.epoch), num(e.train_rlne), num(e.valid_rlne), num(e.lr)]);
        }
        emit_table(&t, Some(h))?;
    }
    eprintln!("best epoch {}", result.best_epoch);
    Ok(())
}

fn evaluate(reference: &Path, hat: &Path, peaks: Option<&Path>, pick: &PickArgs, out: Option<&Path>) -> Result<()> {
    let r = io::read_container(reference)?;
    let h = io::read_container(hat)?;
    if r.header.shape != h.header.shape {
        bail!("shapes differ: {:?} vs {:?}", r.header.shape, h.header.shape);
    }
    let shape = r.shape()?;
    let rlne = analysis::rlne(&r.payload, &h.payload)?;
    let mr: Vec<f64> = r.payload.iter().map(|v| v.norm()).collect();
    let mh: Vec<f64> = h.payload.iter().map(|v| v.norm()).collect();
    let positions: Vec<usize> = match peaks {
        Some(p) => std::fs::read_to_string(p)?
            .lines()
            .map(|l| l.split('#').next().unwrap_or("").trim())
            .filter(|l| !l.is_empty())
            .map(|l| l.parse::<usize>().with_context(|| format!("peak position '{l}'")))
            .collect::<Result<_>>()?,
        None => analysis::pick_peaks(&mr, shape, pick.min_rel, pick.window)?.iter().map(|p| p.index).collect(),
    };
    let opts = CorrelationOptions { match_tol: pick.match_tol, weak_fraction: pick.weak_fraction };
    let r2 = analysis::intensity_correlation(&positions, &mr, &mh, shape, &opts);
    let mut t = Table::new(["rlne", "r2", "peaks"]);
    t.push(vec![num(rlne), r2.as_ref().map_or(Value::Null, |v| num(*v)), json!(positions.len())]);
    emit_table(&t, out)?;
    if let Err(e) = r2 {
        eprintln!("r2 unavailable: {e}");
    }
    Ok(())
}

fn sweep(
    weights: Option<&Path>,
    ist: bool,
    densities: &[f64],
    trials: usize,
    scenario: Option<&Path>,
    seed: Option<u64>,
    out: Option<&Path>,
) -> Result<()> {
    let mut sc: Scenario = match scenario {
        Some(p) => read_json(p)?,
        None => analysis::preset_scenario(256, 1e-4, 0),
    };
    if let Some(s) = seed {
        sc.seed = s;
    }
    let ist_cfg = IstConfig::default();
    let w;
    let method = match (weights, ist) {
        (Some(p), _) => {
            w = io::read_weights(p)?;
            Method::Modern(&w)
        }
        (None, true) => Method::Ist(&ist_cfg),
        (None, false) => bail!("give --weights or --ist"),
    };
    let rows = analysis::robustness_sweep(method, densities, trials, &sc)?;
    let mut t = Table::new(["density", "trials", "mean_r2", "std_r2", "median_r2", "mean_rlne", "std_rlne", "median_rlne"]);
    for r in rows {
        t.push(vec![
            num(r.density),
            json!(r.trials),
            num(r.mean_r2),
            num(r.std_r2),
            num(r.median_r2),
            num(r.mean_rlne),
            num(r.std_rlne),
            num(r.median_rlne),
        ]);
    }
    emit_table(&t, out)
}

fn quantify(volumes: &Path, groups: &Path, reference: &str, out: Option<&Path>) -> Result<()> {
    let vols = io::parse_volumes(&std::fs::read_to_string(volumes).with_context(|| format!("reading {}", volumes.display()))?)?;
    let groups: Vec<GroupSpec> = read_json(groups)?;
    let q = analysis::quantify(&vols, &groups, reference)?;
    if out.is_some_and(|p| p.extension().is_some_and(|e| e == "json")) {
        io::write_atomic(out.expect("checked"), serde_json::to_string_pretty(&q)?.as_bytes())?;
        return Ok(());
    }
    let mut t = Table::new(["group", "subgroup", "peak", "a0", "f", "average", "std", "value", "ratio"]);
    for p in &q.peaks {
        t.push(vec![json!(""), json!(""), json!(p.id), num(p.a0), num(p.f), json!(""), json!(""), json!(""), json!("")]);
    }
    for g in &q.groups {
        for s in &g.subgroups {
            t.push(vec![json!(g.name), json!(s.name), json!(""), json!(""), json!(""), num(s.average), num(s.std), json!(""), json!("")]);
        }
        t.push(vec![json!(g.name), json!(""), json!(""), json!(""), json!(""), json!(""), json!(""), num(g.value), num(g.ratio)]);
    }
    emit_table(&t, out)
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let seed = cli.seed;
    match cli.command {
        Command::GenDataset { spec, out } => {
            let mut s: DatasetSpec = read_json(&spec)?;
            if let Some(seed) = seed {
                s.seed = seed;
            }
            let data = training::generate_dataset::<f64>(&s)?;
            let m = io::write_dataset(&data, Some(&s), &out)?;
            eprintln!("{} training and {} validation pairs in {}", m.n_train, m.n_valid, out.display());
        }
        Command::MakeMask { n, n2, density, out } => make_mask(n, n2, density, seed.unwrap_or(0), &out)?,
        Command::Undersample { input, mask, out } => {
            let fid = io::read_container(&input)?;
            let s = io::read_schedule(&mask)?;
            io::write_container(&pipeline::undersample(&fid, &s)?, &out)?;
        }
        Command::Reconstruct(a) => reconstruct(&a)?,
        Command::Train { dataset, spec, config, out, history } => {
            train(dataset.as_deref(), spec.as_deref(), config.as_deref(), seed, &out, history.as_deref())?
        }
        Command::Evaluate { reference, hat, peaks, picking, out } => {
            evaluate(&reference, &hat, peaks.as_deref(), &picking, out.as_deref())?
        }
        Command::Sweep { weights, ist, densities, trials, scenario, out } => {
            sweep(weights.as_deref(), ist, &densities, trials, scenario.as_deref(), seed, out.as_deref())?
        }
        Command::Quantify { volumes, groups, reference, out } => quantify(&volumes, &groups, &reference, out.as_deref())?,
        Command::Serve { addr, data_dir, workers, weights_dir, max_upload_bytes, secret } => {
            let mut cfg = nusrecon_service::ServiceConfig::new(data_dir);
            cfg.workers = workers;
            cfg.weights_dir = weights_dir;
            cfg.max_upload_bytes = max_upload_bytes;
            cfg.secret = secret;
            let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
            rt.block_on(nusrecon_service::serve(cfg, addr))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
