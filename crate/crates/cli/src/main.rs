use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use ecplane::pipeline::{
    read_manifest, render_report, run_pipeline, run_stage, PipelineConfig, PipelineError, Stage, StageStatus,
};
use ecplane::synth::{
    generate_nested_panel, nestedness_test, planted_trajectories, ranking_distortion_study, CapabilityModel,
    DistortionConfig, PlantedDynamics, SynthError,
};

#[derive(Parser, Debug)]
#[command(
    name = "ecplane",
    version,
    about = "Product dynamics on the ranked Complexity-logPRODY plane"
)]
struct Cli {
    #[command(flatten)]
    opts: GlobalOpts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct GlobalOpts {
    /// Pipeline configuration (JSON).
    #[arg(long, global = true, env = "ECPLANE_CONFIG")]
    config: Option<PathBuf>,
    /// Root seed for stochastic steps.
    #[arg(long, global = true, env = "ECPLANE_SEED")]
    seed: Option<u64>,
    /// Grid size.
    #[arg(long, global = true, num_args = 2, value_names = ["NX", "NY"], env = "ECPLANE_GRID", value_delimiter = ' ')]
    grid: Option<Vec<usize>>,
    /// Lags in years: `1..10`, `1,2,5` or `3`.
    #[arg(long, global = true, env = "ECPLANE_LAGS", value_parser = parse_lags)]
    lags: Option<Lags>,
    /// Bootstrap resamples for minima intervals.
    #[arg(long, global = true, env = "ECPLANE_BOOTSTRAP")]
    bootstrap: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, env = "ECPLANE_OUT")]
    out: Option<PathBuf>,
    /// Worker thread cap.
    #[arg(long, global = true, env = "ECPLANE_JOBS")]
    jobs: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Load, clean and align trade and GDP inputs.
    Ingest,
    /// RCA, Fitness-Complexity and product indices per year.
    Metrics,
    /// Points and displacements on the ranked plane.
    Plane,
    /// Velocity and H fields, the gradient-flow fit, minima curves and stationarity.
    Fields,
    /// Market-shape histograms and the profile along the H minima.
    Market,
    /// All stages, then the report.
    Run,
    /// Summary JSON and figures for a finished run.
    Report,
    /// Synthetic data generators.
    #[command(subcommand)]
    Synth(SynthCommand),
}

#[derive(Subcommand, Debug)]
enum SynthCommand {
    /// Capability-model trade panel with GDP per capita.
    Panel {
        /// Model parameters (JSON); defaults otherwise.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Degree-preserving null draws for the nestedness check.
        #[arg(long, default_value_t = 100)]
        null_draws: usize,
    },
    /// Trajectories descending a planted potential.
    Planted {
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Ranking distortion of random walkers.
    Distortion {
        #[arg(long)]
        model: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, PartialEq)]
struct Lags(Vec<u32>);

fn parse_lags(s: &str) -> Result<Lags, String> {
    let s = s.trim();
    let num = |t: &str| t.trim().parse::<u32>().map_err(|_| format!("bad lag `{t}`"));
    let lags: Vec<u32> = if let Some((a, b)) = s.split_once("..") {
        let (a, b) = match b.strip_prefix('=') {
            Some(b) => (num(a)?, num(b)?),
            None => (num(a)?, num(b)?),
        };
        if a > b {
            return Err(format!("empty lag range {s}"));
        }
        (a..=b).collect()
    } else {
        s.split(',').map(num).collect::<Result<_, _>>()?
    };
    if lags.is_empty() || lags.contains(&0) {
        return Err("lags must be positive".into());
    }
    Ok(Lags(lags))
}

/// An error with the process exit code it maps to.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Failure {
            code: e.exit_code() as u8,
            error: e.into(),
        }
    }
}

impl From<SynthError> for Failure {
    fn from(e: SynthError) -> Self {
        let code = match e {
            SynthError::InvalidModel(_) => 2,
            _ => 3,
        };
        Failure { code, error: e.into() }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Failure { code: 3, error }
    }
}

fn validation(msg: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        error: anyhow::anyhow!(msg.into()),
    }
}

fn resolve_config(opts: &GlobalOpts) -> Result<PipelineConfig, Failure> {
    let path = opts
        .config
        .as_ref()
        .ok_or_else(|| validation("a pipeline configuration is required (--config or ECPLANE_CONFIG)"))?;
    let mut cfg = PipelineConfig::load(path)?;
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    if let Some(g) = &opts.grid {
        cfg.grid.nx = g[0];
        cfg.grid.ny = g[1];
    }
    if let Some(Lags(l)) = &opts.lags {
        cfg.lags = l.clone();
    }
    if let Some(n) = opts.bootstrap {
        cfg.bootstrap.n_resamples = n;
    }
    if let Some(o) = &opts.out {
        cfg.out_dir = o.clone();
    }
    if opts.jobs.is_some() {
        cfg.jobs = opts.jobs;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn read_model<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, Failure> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str(&text).map_err(|e| validation(format!("{}: {e}", p.display())))
        }
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, Failure> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let p = dir.join(name);
    Ok(BufWriter::new(
        File::create(&p).with_context(|| format!("creating {}", p.display()))?,
    ))
}

fn write_json<T: serde::Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), Failure> {
    let w = create(dir, name)?;
    serde_json::to_writer_pretty(w, value).context("writing JSON")?;
    Ok(())
}

fn synth(cmd: &SynthCommand, opts: &GlobalOpts) -> Result<u8, Failure> {
    let out = opts.out.clone().unwrap_or_else(|| PathBuf::from("synth"));
    match cmd {
        SynthCommand::Panel { model, null_draws } => {
            let mut m: CapabilityModel = read_model(model.as_deref())?;
            if let Some(s) = opts.seed {
                m.seed = s;
            }
            let s = generate_nested_panel(&m)?;
            s.panel
                .write_csv(create(&out, "trade.csv")?)
                .context("writing trade.csv")?;
            s.gdp.write_csv(create(&out, "gdp.csv")?).context("writing gdp.csv")?;
            let report = nestedness_test(&s.incidence, *null_draws, m.seed);
            write_json(&out, "nestedness.json", &report)?;
            write_json(&out, "model.json", &m)?;
            println!(
                "panel: {} countries x {} products x {} years, NODF {:.2} (null {:.2} ± {:.2}, exceeded in {:.0}% of draws)",
                s.panel.countries.len(),
                s.panel.products.len(),
                s.panel.years.len(),
                report.nodf,
                report.null_mean,
                report.null_sd,
                100.0 * report.exceeds_fraction
            );
        }
        SynthCommand::Planted { model } => {
            let mut d: PlantedDynamics = read_model(model.as_deref())?;
            if let Some(s) = opts.seed {
                d.seed = s;
            }
            let lags = opts.lags.clone().map_or(vec![1], |l| l.0);
            let run = planted_trajectories(&d, &lags)?;
            run.data
                .write_points_csv(create(&out, "points.csv")?)
                .context("writing points.csv")?;
            run.data
                .write_displacements_csv(create(&out, "displacements.csv")?)
                .context("writing displacements.csv")?;
            write_json(&out, "model.json", &d)?;
            println!(
                "planted: {} products x {} years, {} reflected steps",
                run.data.products.len(),
                run.data.points.len(),
                run.reflections
            );
        }
        SynthCommand::Distortion { model } => {
            let mut c: DistortionConfig = read_model(model.as_deref())?;
            if let Some(s) = opts.seed {
                c.seed = s;
            }
            let r = ranking_distortion_study(&c)?;
            write_json(&out, "distortion.json", &r)?;
            write_json(&out, "model.json", &c)?;
            println!(
                "distortion: edge {:.4} vs central {:.4}, t = {:.2}, p = {:.3e}",
                r.edge_mean, r.central_mean, r.t_statistic, r.p_value
            );
        }
    }
    Ok(0)
}

fn execute(cli: &Cli) -> Result<u8, Failure> {
    let stage = match cli.command {
        Command::Ingest => Stage::Ingest,
        Command::Metrics => Stage::Metrics,
        Command::Plane => Stage::Plane,
        Command::Fields => Stage::Fields,
        Command::Market => Stage::Market,
        Command::Run => {
            let cfg = resolve_config(&cli.opts)?;
            let manifest = run_pipeline(&cfg)?;
            let summary = render_report(&cfg.out_dir, &manifest)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&summary).context("serializing summary")?
            );
            return Ok(if manifest.converged { 0 } else { 4 });
        }
        Command::Report => {
            let out = match (&cli.opts.out, &cli.opts.config) {
                (Some(o), _) => o.clone(),
                (None, Some(_)) => resolve_config(&cli.opts)?.out_dir,
                (None, None) => return Err(validation("--out or --config is required")),
            };
            let manifest = read_manifest(&out)?;
            let summary = render_report(&out, &manifest)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&summary).context("serializing summary")?
            );
            return Ok(if manifest.converged { 0 } else { 4 });
        }
        Command::Synth(ref cmd) => return synth(cmd, &cli.opts),
    };
    let cfg = resolve_config(&cli.opts)?;
    let record = run_stage(stage, &cfg)?;
    println!(
        "{stage}: {:?}, {} files in {:.2}s",
        record.status,
        record.outputs.len(),
        record.seconds
    );
    Ok(if record.status == StageStatus::NotConverged {
        4
    } else {
        0
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ECPLANE_LOG", "warn")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
