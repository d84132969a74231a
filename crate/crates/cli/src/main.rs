use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use vmcollab::analysis::{conflict_count, conflict_monte_carlo, MetricsRecord};
use vmcollab::harness::config::HandConfig;
use vmcollab::harness::serve::{serve, ServeOptions};
use vmcollab::harness::{
    read_trace, replay, replay_session, resimulate, run, sweep, write_metrics_json, write_sweep_csv, write_trace, RunConfig,
    RunStatus, SimTrace,
};
use vmcollab::scenario::Layout;
use vmcollab::Vec3;

/// Exit code when a replayed trace's metrics differ from a reference file.
const METRICS_DIFFER: u8 = 4;

#[derive(Parser)]
#[command(name = "vmcollab", version, about = "Virtual-mechanism multi-robot collaboration simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration headlessly; exit code 0 completed, 2 capped, 3 faulted.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Verify a trace's hash chain and recompute its metrics.
    Replay {
        trace: PathBuf,
        /// Compare against a metrics file and list the fields that changed.
        #[arg(long)]
        against: Option<PathBuf>,
        /// Also re-run the recorded configuration and require identical records.
        #[arg(long)]
        resimulate: bool,
        /// Write the recomputed metrics here instead of stdout.
        #[arg(long)]
        metrics_out: Option<PathBuf>,
    },
    /// Run every (value, seed) pair and write one aggregated row per value.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        /// Dotted config path to vary, or `preset` to sweep over preset names.
        #[arg(long)]
        axis: String,
        /// Comma-separated values in TOML syntax (bare words are taken as strings).
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        values: Vec<String>,
        /// Seeds as a list (1,2,3) or an inclusive range (1..5).
        #[arg(long, default_value = "1..5")]
        seeds: String,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Exact probability that some transfer paths cross, per robot count.
    EnumerateConflicts {
        /// Layout file (TOML or JSON); the canonical layout otherwise.
        #[arg(long)]
        layout: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
        robots: Vec<usize>,
        /// Also estimate each probability from this many random assignments.
        #[arg(long)]
        monte_carlo: Option<u64>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Serve a live session over TCP until interrupted; session traces are written on exit.
    Serve {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value = "127.0.0.1:7878")]
        addr: String,
        /// Simulated seconds per wall-clock second.
        #[arg(long, default_value_t = 1.0)]
        realtime: f64,
        #[arg(long, default_value_t = 40.0)]
        snapshot_hz: f64,
        /// Start stepping without waiting for a start command.
        #[arg(long)]
        autostart: bool,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Print a preset as TOML, or list presets.
    Preset { name: Option<String> },
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

impl From<Switch> for bool {
    fn from(s: Switch) -> bool {
        matches!(s, Switch::On)
    }
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Configuration file (TOML).
    #[arg(long, short, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in preset name (see `vmcollab preset`).
    #[arg(long, short)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    negotiation: Option<Switch>,
    #[arg(long)]
    damper: Option<Switch>,
    #[arg(long)]
    duration_cap: Option<f64>,
    /// Override any field: `--set robot.filter_speed=0.6` (repeatable).
    #[arg(long = "set", value_name = "PATH=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct OutArgs {
    #[arg(long, env = "VMCOLLAB_OUT_DIR", default_value = "runs")]
    out_dir: PathBuf,
}

impl OutArgs {
    fn dir(&self) -> Result<&Path> {
        fs::create_dir_all(&self.out_dir).with_context(|| format!("creating {}", self.out_dir.display()))?;
        Ok(&self.out_dir)
    }
}

/// Bare words become strings so `--values profile1` and `--set scenario.kind=b` work unquoted.
fn parse_value(text: &str) -> toml::Value {
    let text = text.trim();
    toml::from_str::<toml::Table>(&format!("v = {text}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(text.to_owned()))
}

fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    if let Some((a, b)) = text.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse()?, b.trim().parse()?);
        if a > b {
            bail!("empty seed range {text}");
        }
        return Ok((a..=b).collect());
    }
    text.split(',').map(|s| s.trim().parse().with_context(|| format!("bad seed {s:?}"))).collect()
}

fn load_config(args: &ConfigArgs) -> Result<RunConfig> {
    let mut cfg = match (&args.config, &args.preset) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            RunConfig::from_toml(&text).with_context(|| format!("in {}", path.display()))?
        }
        (None, Some(name)) => RunConfig::preset(name)?,
        (None, None) => RunConfig::preset("medium")?,
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(n) = args.negotiation {
        cfg.features.negotiation = n.into();
    }
    if let Some(d) = args.damper {
        cfg.features.damper = d.into();
    }
    if let Some(cap) = args.duration_cap {
        cfg.duration_cap = cap;
    }
    for o in &args.overrides {
        let (path, value) = o.split_once('=').with_context(|| format!("expected PATH=VALUE, got {o:?}"))?;
        cfg = cfg.with_override(path.trim(), parse_value(value))?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn stem(cfg: &RunConfig) -> String {
    let name = if cfg.name.is_empty() { "run" } else { &cfg.name };
    format!("{name}-seed{}", cfg.seed)
}

fn save_trace(trace: &SimTrace, path: &Path) -> Result<String> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    let head = write_trace(trace, &mut w)?;
    w.flush()?;
    Ok(head)
}

fn save_metrics(m: &MetricsRecord, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    write_metrics_json(m, &mut w)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn fmt_opt(v: Option<f64>, unit: &str) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.3} {unit}"))
}

fn summary(m: &MetricsRecord) -> String {
    let unresolved = m.stall_events.iter().filter(|s| s.resolved.is_none()).count();
    format!(
        "blocks placed {}, completion {}, d_min RR {}, d_min RH {}, T<Sp {:.2} s, T_cross {:.2} s, T_nm {:.2} s, stalls {} ({} unresolved)",
        m.blocks_placed,
        fmt_opt(m.completion_time, "s"),
        fmt_opt(m.d_min_rr, "m"),
        fmt_opt(m.d_min_rh, "m"),
        m.t_below_sp,
        m.t_cross,
        m.t_nm,
        m.stall_events.len(),
        unresolved
    )
}

fn status_word(s: &RunStatus) -> String {
    match s {
        RunStatus::Completed => "completed".into(),
        RunStatus::Capped => "capped".into(),
        RunStatus::Faulted { reason } => format!("faulted: {reason}"),
    }
}

fn cmd_run(config: &ConfigArgs, out: &OutArgs) -> Result<ExitCode> {
    let cfg = load_config(config)?;
    let dir = out.dir()?;
    let r = run(&cfg)?;
    let base = dir.join(stem(&cfg));
    let trace_path = base.with_extension("trace.ndjson");
    let head = save_trace(&r.trace, &trace_path)?;
    save_metrics(&r.metrics, &base.with_extension("metrics.json"))?;
    let end = r.metrics.end_time;
    println!("{} after {end:.2} s: {}", status_word(r.status()), summary(&r.metrics));
    println!("trace {} (head {})", trace_path.display(), &head[..16]);
    Ok(ExitCode::from(r.status().exit_code() as u8))
}

/// Top-level metric fields whose values differ between two metrics documents.
fn metric_diff(old: &serde_json::Value, new: &serde_json::Value) -> Vec<String> {
    let empty = serde_json::Map::new();
    let (a, b) = (old.as_object().unwrap_or(&empty), new.as_object().unwrap_or(&empty));
    let mut keys: Vec<&String> = a.keys().chain(b.keys()).collect();
    keys.sort();
    keys.dedup();
    keys.into_iter()
        .filter(|k| a.get(*k) != b.get(*k))
        .map(|k| {
            let show = |v: Option<&serde_json::Value>| v.map_or("(absent)".to_owned(), |v| v.to_string());
            format!("{k}: {} -> {}", show(a.get(k)), show(b.get(k)))
        })
        .collect()
}

fn cmd_replay(path: &Path, against: Option<&Path>, resim: bool, metrics_out: Option<&Path>) -> Result<ExitCode> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let trace = read_trace(BufReader::new(file)).with_context(|| format!("{} failed verification", path.display()))?;
    let metrics = replay(&trace);
    match metrics_out {
        Some(p) => save_metrics(&metrics, p)?,
        None => {
            write_metrics_json(&metrics, io::stdout().lock())?;
            println!();
        }
    }
    if resim {
        // Served sessions depend on live hand input, so they re-run from the recorded inputs.
        let same = if matches!(trace.header.config.hand, HandConfig::Live) {
            replay_session(&trace)?.trace.records == trace.records
        } else {
            resimulate(&trace)?
        };
        if !same {
            bail!("re-running the recorded configuration produced different records");
        }
        eprintln!("re-run reproduces all {} records", trace.records.len());
    }
    if let Some(p) = against {
        let old: serde_json::Value = serde_json::from_reader(BufReader::new(File::open(p)?))?;
        let diff = metric_diff(&old, &serde_json::to_value(&metrics)?);
        if !diff.is_empty() {
            eprintln!("metrics differ from {}:", p.display());
            for d in diff {
                eprintln!("  {d}");
            }
            return Ok(ExitCode::from(METRICS_DIFFER));
        }
        eprintln!("metrics match {}", p.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(config: &ConfigArgs, axis: &str, values: &[String], seeds: &str, out: &OutArgs) -> Result<ExitCode> {
    let seeds = parse_seeds(seeds)?;
    let progress = |label: &str, seed: u64, r: Result<&vmcollab::harness::RunResult, &str>| match r {
        Ok(r) => eprintln!("{} seed {seed}: {}", label.trim_matches('"'), status_word(r.status())),
        Err(e) => eprintln!("{label} seed {seed}: setup failed: {e}"),
    };
    let cells = if axis == "preset" {
        // Each preset is its own base; the cell label is the preset name.
        let mut cells = Vec::new();
        for name in values {
            let mut args = config.clone();
            args.config = None;
            args.preset = Some(name.clone());
            let base = load_config(&args)?;
            let same = toml::Value::String(base.name.clone());
            let mut c = sweep(&base, "name", &[same], &seeds, progress)?;
            c[0].value = name.clone();
            cells.append(&mut c);
        }
        cells
    } else {
        let base = load_config(config)?;
        let values: Vec<toml::Value> = values.iter().map(|v| parse_value(v)).collect();
        sweep(&base, axis, &values, &seeds, progress)?
    };
    let path = out.dir()?.join(format!("sweep-{}.csv", axis.replace('.', "_")));
    write_sweep_csv(&cells, File::create(&path)?)?;
    println!("{:<24} {:>5} {:>9} {:>16} {:>16} {:>16} {:>16}", "value", "runs", "completed", "completion (s)", "d_min RR (m)", "d_min RH (m)", "T<Sp (s)");
    for c in &cells {
        println!(
            "{:<24} {:>5} {:>9} {:>16} {:>16} {:>16} {:>16}",
            c.value,
            c.runs,
            c.completed,
            c.completion_time.to_string(),
            c.d_min_rr.to_string(),
            c.d_min_rh.to_string(),
            c.t_below_sp.to_string()
        );
    }
    println!("table {}", path.display());
    let faulted: usize = cells.iter().map(|c| c.faulted).sum();
    Ok(if faulted > 0 { ExitCode::from(3) } else { ExitCode::SUCCESS })
}

fn load_layout(path: &Path) -> Result<Layout> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let layout: Layout = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text)?
    } else {
        toml::from_str(&text)?
    };
    layout.validate()?;
    Ok(layout)
}

fn cmd_conflicts(layout: Option<&Path>, robots: &[usize], mc: Option<u64>, seed: u64) -> Result<ExitCode> {
    let layout = match layout {
        Some(p) => load_layout(p)?,
        None => Layout::canonical(),
    };
    let cells: Vec<Vec3> = layout.grid.cells().map(|c| layout.grid.cell_center(c)).collect();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    println!("robots,conflicting,total,probability{}", if mc.is_some() { ",monte_carlo,standard_error" } else { "" });
    for &n in robots {
        let c = conflict_count(&layout.blocks, &cells, n)?;
        print!("{n},{},{},{:.6}", c.conflicting, c.total, c.probability());
        if let Some(samples) = mc {
            let (p, se) = conflict_monte_carlo(&layout.blocks, &cells, n, samples, &mut rng)?;
            print!(",{p:.6},{se:.6}");
        }
        println!();
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_serve(config: &ConfigArgs, addr: &str, opts: ServeOptions, out: &OutArgs) -> Result<ExitCode> {
    let cfg = load_config(config)?;
    let dir = out.dir()?.to_owned();
    let handle = serve(&cfg, addr, opts)?;
    let stop = handle.stop_flag();
    ctrlc::set_handler(move || stop.store(true, std::sync::atomic::Ordering::SeqCst))?;
    println!("listening on {}", handle.local_addr());
    io::stdout().flush()?;
    let traces = handle.wait();
    for (i, t) in traces.iter().enumerate() {
        let path = dir.join(format!("{}-session{}.trace.ndjson", stem(&cfg), i + 1));
        save_trace(t, &path)?;
        println!("session {} ({} records) -> {}", i + 1, t.records.len(), path.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_preset(name: Option<&str>) -> Result<ExitCode> {
    match name {
        Some(n) => print!("{}", RunConfig::preset(n)?.to_toml()),
        None => RunConfig::preset_names().iter().for_each(|n| println!("{n}")),
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config, out } => cmd_run(config, out),
        Command::Replay { trace, against, resimulate, metrics_out } => {
            cmd_replay(trace, against.as_deref(), *resimulate, metrics_out.as_deref())
        }
        Command::Sweep { config, axis, values, seeds, out } => cmd_sweep(config, axis, values, seeds, out),
        Command::EnumerateConflicts { layout, robots, monte_carlo, seed } => {
            cmd_conflicts(layout.as_deref(), robots, *monte_carlo, *seed)
        }
        Command::Serve { config, addr, realtime, snapshot_hz, autostart, out } => {
            let opts = ServeOptions { realtime_factor: *realtime, snapshot_hz: *snapshot_hz, autostart: *autostart };
            cmd_serve(config, addr, opts, out)
        }
        Command::Preset { name } => cmd_preset(name.as_deref()),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
