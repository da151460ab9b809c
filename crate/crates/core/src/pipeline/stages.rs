use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{InputSource, PipelineConfig};
use super::{PipelineError, Stage};
use crate::fields::{
    bootstrap_column_minima, box_average, curve_distance, direction_agreement, fit_potential,
    fit_potential_with_intercept, gaussian_smooth, gradient, stationarity_diagnostics, CurveDistance, DirectionTest,
    GridField, MinimaCurve, PotentialFit, Sample,
};
use crate::ingest::{clean_and_align, load_gdp_table, load_trade_panel, GdpTable, TradePanel, TradeSchema};
use crate::market::{
    asymptotic_profile, box_market_histograms, fitness_deciles, write_histograms_csv, AsymptoticProfile, MarketYear,
    Pooling,
};
use crate::metrics::{compute_metrics, rca, MetricPanel};
use crate::plane::{place_on_plane, PlaneData, PlanePoint};
use crate::synth::{generate_nested_panel, planted_trajectories};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Ok,
    Skipped,
    /// Results were written but some year's ranking did not stabilize.
    NotConverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: Stage,
    pub status: StageStatus,
    pub seconds: f64,
    pub outputs: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub seed: u64,
    pub converged: bool,
    pub stages: Vec<StageRecord>,
    /// SHA-256 of every stage artifact, keyed by path relative to the output directory.
    pub checksums: BTreeMap<String, String>,
}

impl Manifest {
    pub fn stage(&self, stage: Stage) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.stage == stage)
    }
}

pub(crate) struct Out<'a> {
    root: &'a Path,
    stage: Stage,
    written: Vec<String>,
}

impl<'a> Out<'a> {
    pub(crate) fn new(root: &'a Path, stage: Stage) -> Self {
        Self {
            root,
            stage,
            written: Vec::new(),
        }
    }

    fn io(&self, path: &Path, source: std::io::Error) -> PipelineError {
        PipelineError::Io {
            stage: self.stage,
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn create(&mut self, rel: &str) -> Result<BufWriter<File>, PipelineError> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir).map_err(|e| self.io(dir, e))?;
        }
        let f = File::create(&path).map_err(|e| self.io(&path, e))?;
        self.written.push(rel.to_string());
        Ok(BufWriter::new(f))
    }

    pub(crate) fn write_bytes(&mut self, rel: &str, bytes: &[u8]) -> Result<(), PipelineError> {
        let mut w = self.create(rel)?;
        let path = self.root.join(rel);
        w.write_all(bytes)
            .and_then(|_| w.flush())
            .map_err(|e| self.io(&path, e))
    }

    pub(crate) fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<(), PipelineError> {
        let mut text =
            serde_json::to_string_pretty(value).map_err(|e| PipelineError::data(self.stage, e.to_string()))?;
        text.push('\n');
        self.write_bytes(rel, text.as_bytes())
    }

    pub(crate) fn open(&self, rel: &str) -> Result<BufReader<File>, PipelineError> {
        let path = self.root.join(rel);
        match File::open(&path) {
            Ok(f) => Ok(BufReader::new(f)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(PipelineError::MissingArtifact {
                stage: self.stage,
                path,
            }),
            Err(e) => Err(self.io(&path, e)),
        }
    }

    pub(crate) fn read_json<T: DeserializeOwned>(&self, rel: &str) -> Result<T, PipelineError> {
        let mut text = String::new();
        self.open(rel)?
            .read_to_string(&mut text)
            .map_err(|e| self.io(&self.root.join(rel), e))?;
        serde_json::from_str(&text).map_err(|e| PipelineError::data(self.stage, format!("{rel}: {e}")))
    }

    pub(crate) fn exists(&self, rel: &str) -> bool {
        self.root.join(rel).is_file()
    }

    pub(crate) fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }
}

struct StageOutcome {
    status: StageStatus,
    warnings: Vec<String>,
}

impl StageOutcome {
    fn ok() -> Self {
        Self {
            status: StageStatus::Ok,
            warnings: Vec::new(),
        }
    }

    fn skipped(reason: &str) -> Self {
        Self {
            status: StageStatus::Skipped,
            warnings: vec![reason.to_string()],
        }
    }
}

fn with_jobs<T: Send>(cfg: &PipelineConfig, f: impl FnOnce() -> T + Send) -> Result<T, PipelineError> {
    match cfg.jobs {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| PipelineError::validation(Stage::Config, e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

/// Runs one stage on the artifacts already present under `cfg.out_dir`.
pub fn run_stage(stage: Stage, cfg: &PipelineConfig) -> Result<StageRecord, PipelineError> {
    cfg.validate()?;
    with_jobs(cfg, || stage_inner(stage, cfg))?
}

fn stage_inner(stage: Stage, cfg: &PipelineConfig) -> Result<StageRecord, PipelineError> {
    let start = Instant::now();
    let mut out = Out::new(&cfg.out_dir, stage);
    let outcome = match stage {
        Stage::Ingest => ingest(cfg, &mut out),
        Stage::Metrics => metrics(cfg, &mut out),
        Stage::Plane => plane(cfg, &mut out),
        Stage::Fields => fields(cfg, &mut out),
        Stage::Market => market(cfg, &mut out),
        Stage::Config | Stage::Report => {
            return Err(PipelineError::validation(stage, "not a pipeline stage"));
        }
    }?;
    for w in &outcome.warnings {
        log::warn!("{stage}: {w}");
    }
    log::info!("{stage}: {:?} in {:.2}s", outcome.status, start.elapsed().as_secs_f64());
    Ok(StageRecord {
        stage,
        status: outcome.status,
        seconds: start.elapsed().as_secs_f64(),
        outputs: out.written,
        warnings: outcome.warnings,
    })
}

/// Executes ingest → metrics → plane → fields → market and writes `manifest.json`.
///
/// A run whose metrics did not converge still completes; the manifest records
/// `converged: false`.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<Manifest, PipelineError> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out_dir).map_err(|source| PipelineError::Io {
        stage: Stage::Config,
        path: cfg.out_dir.clone(),
        source,
    })?;
    let stages = with_jobs(cfg, || {
        Stage::PIPELINE
            .iter()
            .map(|&s| stage_inner(s, cfg))
            .collect::<Result<Vec<_>, _>>()
    })??;
    let mut checksums = BTreeMap::new();
    for s in &stages {
        for rel in &s.outputs {
            checksums.insert(rel.clone(), checksum(&cfg.out_dir.join(rel), s.stage)?);
        }
    }
    let manifest = Manifest {
        config_hash: cfg.hash(),
        seed: cfg.seed,
        converged: stages.iter().all(|s| s.status != StageStatus::NotConverged),
        stages,
        checksums,
    };
    Out::new(&cfg.out_dir, Stage::Config).write_json(MANIFEST_FILE, &manifest)?;
    Ok(manifest)
}

pub fn read_manifest(out_dir: &Path) -> Result<Manifest, PipelineError> {
    Out::new(out_dir, Stage::Report).read_json(MANIFEST_FILE)
}

fn checksum(path: &Path, stage: Stage) -> Result<String, PipelineError> {
    let bytes = fs::read(path).map_err(|source| PipelineError::Io {
        stage,
        path: path.to_path_buf(),
        source,
    })?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// SHA-256 of every file below `dir`, keyed by relative path with `/` separators.
pub fn file_checksums(dir: &Path) -> Result<BTreeMap<String, String>, PipelineError> {
    fn walk(root: &Path, dir: &Path, acc: &mut BTreeMap<String, String>) -> Result<(), PipelineError> {
        let io = |source| PipelineError::Io {
            stage: Stage::Report,
            path: dir.to_path_buf(),
            source,
        };
        let mut entries: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(io)?
            .map(|e| e.map(|e| e.path()))
            .collect::<Result<_, _>>()
            .map_err(io)?;
        entries.sort();
        for p in entries {
            if p.is_dir() {
                walk(root, &p, acc)?;
            } else {
                let rel = p.strip_prefix(root).expect("below root");
                let key = rel
                    .components()
                    .map(|c| c.as_os_str().to_string_lossy())
                    .collect::<Vec<_>>()
                    .join("/");
                acc.insert(key, checksum(&p, Stage::Report)?);
            }
        }
        Ok(())
    }
    let mut acc = BTreeMap::new();
    walk(dir, dir, &mut acc)?;
    Ok(acc)
}

pub(crate) const TRADE: &str = "ingest/trade.csv";
pub(crate) const GDP: &str = "ingest/gdp.csv";
pub(crate) const METRICS: &str = "metrics/metrics.csv";
pub(crate) const POINTS: &str = "plane/points.csv";
pub(crate) const OBSERVABLES: &str = "plane/observables.csv";
pub(crate) const FIELDS_SUMMARY: &str = "fields/fields.json";
pub(crate) const POTENTIAL: &str = "fields/potential.json";
pub(crate) const MINIMA_V: &str = "fields/minima_velocity.json";
pub(crate) const MINIMA_H: &str = "fields/minima_h.json";
pub(crate) const PROFILE: &str = "market/profile.json";

fn is_planted(cfg: &PipelineConfig) -> bool {
    matches!(cfg.input, InputSource::Planted(_))
}

fn ingest(cfg: &PipelineConfig, out: &mut Out) -> Result<StageOutcome, PipelineError> {
    let st = Stage::Ingest;
    let (panel, gdp) = match &cfg.input {
        InputSource::Planted(_) => return Ok(StageOutcome::skipped("planted input has no trade data")),
        InputSource::Files { trade, gdp, schema } => {
            let (Some(trade), Some(gdp)) = (trade, gdp) else {
                return Err(PipelineError::validation(st, "trade and gdp paths are required"));
            };
            let panel = load_trade_panel(trade, schema).map_err(|e| PipelineError::from_ingest(st, e))?;
            let gdp = load_gdp_table(gdp).map_err(|e| PipelineError::from_ingest(st, e))?;
            (panel, gdp)
        }
        InputSource::Capability(model) => {
            let s = generate_nested_panel(model).map_err(|e| PipelineError::from_synth(st, e))?;
            (s.panel, s.gdp)
        }
    };
    let (panel, gdp, report) =
        clean_and_align(&panel, &gdp, &cfg.cleaning).map_err(|e| PipelineError::from_ingest(st, e))?;
    let csv_err = |e: crate::ingest::IngestError| PipelineError::from_ingest(st, e);
    panel.write_csv(out.create(TRADE)?).map_err(csv_err)?;
    gdp.write_csv(out.create(GDP)?).map_err(csv_err)?;
    out.write_json("ingest/cleaning.json", &report)?;
    Ok(StageOutcome::ok())
}

fn load_inputs(out: &Out) -> Result<(TradePanel, GdpTable), PipelineError> {
    let st = out.stage;
    out.open(TRADE)?;
    out.open(GDP)?;
    let panel =
        load_trade_panel(&out.path(TRADE), &TradeSchema::default()).map_err(|e| PipelineError::from_ingest(st, e))?;
    let gdp = load_gdp_table(&out.path(GDP)).map_err(|e| PipelineError::from_ingest(st, e))?;
    Ok((panel, gdp))
}

fn load_metrics(out: &Out) -> Result<MetricPanel, PipelineError> {
    MetricPanel::read_csv(out.open(METRICS)?).map_err(|e| PipelineError::from_metrics(out.stage, e))
}

fn metrics(cfg: &PipelineConfig, out: &mut Out) -> Result<StageOutcome, PipelineError> {
    if is_planted(cfg) {
        return Ok(StageOutcome::skipped("planted input has no trade data"));
    }
    let st = Stage::Metrics;
    let (panel, gdp) = load_inputs(out)?;
    let result = compute_metrics(&panel, &gdp, &cfg.metrics).map_err(|e| PipelineError::from_metrics(st, e))?;
    result
        .panel
        .write_csv(out.create(METRICS)?)
        .map_err(|e| PipelineError::from_metrics(st, e))?;
    out.write_json("metrics/diagnostics.json", &result.diagnostics)?;
    let mut outcome = StageOutcome::ok();
    for d in result.diagnostics.iter().filter(|d| !d.fitness_complexity.stabilized) {
        outcome.status = StageStatus::NotConverged;
        outcome.warnings.push(format!(
            "{}: ranking not stable after {} iterations",
            d.year, d.fitness_complexity.iterations
        ));
    }
    Ok(outcome)
}

/// Per point values carried alongside the plane coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct Observable {
    product: usize,
    year: i32,
    h: Option<f64>,
    exporter_r2: Option<f64>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn write_observables<W: Write>(products: &[String], obs: &[Observable], w: W) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(["product", "year", "h", "exporter_r2"])?;
    for o in obs {
        w.write_record([
            products[o.product].clone(),
            o.year.to_string(),
            fmt_opt(o.h),
            fmt_opt(o.exporter_r2),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `(product code, year) → (h, exporter_r2)`.
type ObservableMap = HashMap<(String, i32), (Option<f64>, Option<f64>)>;

fn read_observables<R: Read>(r: R, stage: Stage) -> Result<ObservableMap, PipelineError> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut map = HashMap::new();
    let bad = |line: usize| PipelineError::data(stage, format!("{OBSERVABLES}: malformed line {line}"));
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| PipelineError::data(stage, e.to_string()))?;
        if rec.len() != 4 {
            return Err(bad(n + 2));
        }
        let opt = |s: &str| -> Result<Option<f64>, PipelineError> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| bad(n + 2))
            }
        };
        let year: i32 = rec[1].parse().map_err(|_| bad(n + 2))?;
        map.insert((rec[0].to_string(), year), (opt(&rec[2])?, opt(&rec[3])?));
    }
    Ok(map)
}

fn plane(cfg: &PipelineConfig, out: &mut Out) -> Result<StageOutcome, PipelineError> {
    let st = Stage::Plane;
    let (data, obs) = match &cfg.input {
        InputSource::Planted(d) => {
            let run = planted_trajectories(d, &cfg.lags).map_err(|e| PipelineError::from_synth(st, e))?;
            let obs: Vec<Observable> = run
                .data
                .all_points()
                .map(|p| Observable {
                    product: p.product,
                    year: p.year,
                    h: Some(run.surface.h(p.x, p.y)),
                    exporter_r2: None,
                })
                .collect();
            (run.data, obs)
        }
        _ => {
            let m = load_metrics(out)?;
            let data = place_on_plane(&m, &cfg.lags).map_err(|e| PipelineError::from_plane(st, e))?;
            let obs: Vec<Observable> = data
                .all_points()
                .map(|p| {
                    let ym = m.year(p.year).expect("points come from metric years");
                    Observable {
                        product: p.product,
                        year: p.year,
                        h: ym.herfindahl.get(p.product).copied().flatten(),
                        exporter_r2: ym.exporter_r2.get(p.product).copied().flatten(),
                    }
                })
                .collect();
            (data, obs)
        }
    };
    let plane_err = |e| PipelineError::from_plane(st, e);
    data.write_points_csv(out.create(POINTS)?).map_err(plane_err)?;
    data.write_displacements_csv(out.create("plane/displacements.csv")?)
        .map_err(plane_err)?;
    write_observables(&data.products, &obs, out.create(OBSERVABLES)?)
        .map_err(|e| PipelineError::data(st, e.to_string()))?;
    out.write_json("plane/coverage.json", &data.coverage)?;
    let mut outcome = StageOutcome::ok();
    if !data.has_displacements() {
        outcome
            .warnings
            .push("no product is present at both ends of any lag; the velocity field will be empty".into());
    }
    Ok(outcome)
}

pub(crate) fn load_plane(cfg: &PipelineConfig, out: &Out) -> Result<PlaneData, PipelineError> {
    PlaneData::read_points_csv(out.open(POINTS)?, &cfg.lags).map_err(|e| PipelineError::from_plane(out.stage, e))
}

/// Summary of the fields stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct FieldsSummary {
    pub velocity_lag: u32,
    pub velocity_samples: usize,
    pub h_samples: usize,
    pub velocity_field_empty: bool,
    pub potential_error: Option<String>,
    pub direction: Option<DirectionTest>,
    pub minima_distance: Option<CurveDistance>,
}

fn group_by_product(n_products: usize, items: impl Iterator<Item = (usize, Sample)>) -> Vec<Vec<Sample>> {
    let mut groups = vec![Vec::new(); n_products];
    for (p, s) in items {
        groups[p].push(s);
    }
    groups.retain(|g| !g.is_empty());
    groups
}

fn flatten(groups: &[&Vec<Sample>]) -> Vec<Sample> {
    groups.iter().flat_map(|g| g.iter().cloned()).collect()
}

fn fields(cfg: &PipelineConfig, out: &mut Out) -> Result<StageOutcome, PipelineError> {
    let st = Stage::Fields;
    let ferr = |e| PipelineError::from_fields(st, e);
    let grid = cfg.grid;
    let data = load_plane(cfg, out)?;
    let obs = read_observables(out.open(OBSERVABLES)?, st)?;
    let lookup = |p: &PlanePoint| {
        obs.get(&(data.products[p.product].clone(), p.year))
            .copied()
            .unwrap_or((None, None))
    };

    let vlag = cfg.velocity_lag();
    let displacements = data.displacements.get(&vlag).map(Vec::as_slice).unwrap_or_default();
    let vel_groups = group_by_product(
        data.products.len(),
        displacements.iter().map(|d| {
            let s = Sample::vector(d.start.x, d.start.y, d.dx / vlag as f64, d.dy / vlag as f64);
            (d.start.product, s)
        }),
    );
    let h_groups = group_by_product(
        data.products.len(),
        data.all_points()
            .filter_map(|p| lookup(p).0.map(|h| (p.product, Sample::scalar(p.x, p.y, h)))),
    );
    let vel_samples: Vec<Sample> = vel_groups.iter().flatten().cloned().collect();
    let h_samples: Vec<Sample> = h_groups.iter().flatten().cloned().collect();

    let v = if vel_samples.is_empty() {
        GridField::empty(grid, 2)
    } else {
        box_average(&vel_samples, &grid).map_err(ferr)?
    };
    let h = box_average(&h_samples, &grid).map_err(ferr)?;
    let h_smooth = if h.populated_cells() > 0 {
        gaussian_smooth(&h, cfg.bandwidths.h)
    } else {
        h.clone()
    };
    let grad_h = gradient(&h_smooth);
    let r2_samples: Vec<Sample> = data
        .all_points()
        .filter_map(|p| lookup(p).1.map(|r| Sample::scalar(p.x, p.y, r)))
        .collect();
    let r2 = box_average(&r2_samples, &grid).map_err(ferr)?;
    let all_points: Vec<Sample> = data.all_points().map(|p| Sample::scalar(p.x, p.y, 1.0)).collect();
    let occupancy = box_average(&all_points, &grid).map_err(ferr)?;

    let fit = if cfg.free_intercept {
        fit_potential_with_intercept(&v, &grad_h)
    } else {
        fit_potential(&v, &grad_h)
    };
    let (potential, potential_error): (Option<PotentialFit>, Option<String>) = match fit {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };

    let boot = cfg.bootstrap_config();
    let bw = cfg.bandwidths.minima;
    let minima_v = if vel_groups.is_empty() {
        None
    } else {
        Some(
            bootstrap_column_minima(
                &vel_groups,
                |g| Ok(box_average(&flatten(g), &grid)?.modulus()),
                bw,
                &boot,
            )
            .map_err(ferr)?,
        )
    };
    let minima_h = if h_groups.is_empty() {
        None
    } else {
        Some(bootstrap_column_minima(&h_groups, |g| box_average(&flatten(g), &grid), bw, &boot).map_err(ferr)?)
    };
    let cell_h = 1.0 / grid.ny as f64;
    let minima_distance = match (&minima_v, &minima_h) {
        (Some(a), Some(b)) => curve_distance(a, b, cell_h),
        _ => None,
    };

    let csv = |e| PipelineError::from_fields(st, e);
    v.write_csv(out.create("fields/velocity.csv")?, &["vx", "vy"])
        .map_err(csv)?;
    v.modulus()
        .write_csv(out.create("fields/velocity_modulus.csv")?, &["speed"])
        .map_err(csv)?;
    h.write_csv(out.create("fields/h.csv")?, &["h"]).map_err(csv)?;
    h_smooth
        .write_csv(out.create("fields/h_smooth.csv")?, &["h"])
        .map_err(csv)?;
    grad_h
        .write_csv(out.create("fields/grad_h.csv")?, &["dh_dx", "dh_dy"])
        .map_err(csv)?;
    r2.write_csv(out.create("fields/exporter_r2.csv")?, &["exporter_r2"])
        .map_err(csv)?;
    occupancy
        .write_csv(out.create("fields/occupancy.csv")?, &["present"])
        .map_err(csv)?;

    let mut outcome = StageOutcome::ok();
    if data.points.len() >= 2 {
        let s = stationarity_diagnostics(&data.points, displacements, &grid).map_err(ferr)?;
        s.inward
            .write_csv(out.create("fields/inward.csv")?, &["vx", "vy"])
            .map_err(csv)?;
        s.density
            .write_csv(out.create("fields/density.csv")?, &["density"])
            .map_err(csv)?;
        s.density_change
            .write_csv(out.create("fields/density_change.csv")?, &["slope"])
            .map_err(csv)?;
        s.density_change_p
            .write_csv(out.create("fields/density_change_p.csv")?, &["p_value"])
            .map_err(csv)?;
    } else {
        outcome
            .warnings
            .push("a single year: no stationarity diagnostics".into());
    }
    out.write_json(POTENTIAL, &potential)?;
    out.write_json(MINIMA_V, &minima_v)?;
    out.write_json(MINIMA_H, &minima_h)?;
    let direction = direction_agreement(&v, &grad_h);
    if vel_samples.is_empty() {
        outcome.warnings.push("velocity field is empty".into());
    }
    out.write_json(
        FIELDS_SUMMARY,
        &FieldsSummary {
            velocity_lag: vlag,
            velocity_samples: vel_samples.len(),
            h_samples: h_samples.len(),
            velocity_field_empty: v.populated_cells() == 0,
            potential_error,
            direction,
            minima_distance,
        },
    )?;
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct ProfileFile {
    pub profile: Option<AsymptoticProfile>,
    /// Spearman correlation of peakedness with column index along the `H` minima.
    pub trend: Option<f64>,
}

fn market(cfg: &PipelineConfig, out: &mut Out) -> Result<StageOutcome, PipelineError> {
    if is_planted(cfg) {
        return Ok(StageOutcome::skipped("planted input has no trade data"));
    }
    let st = Stage::Market;
    let (panel, _) = load_inputs(out)?;
    let m = load_metrics(out)?;
    let data = load_plane(cfg, out)?;
    let minima: Option<MinimaCurve> = out.read_json(MINIMA_H)?;
    if m.countries != panel.countries {
        return Err(PipelineError::data(st, "metric and trade country registries differ"));
    }
    let p_index: HashMap<&str, usize> = panel
        .products
        .iter()
        .enumerate()
        .map(|(i, p)| (p.as_str(), i))
        .collect();
    let mut points = Vec::with_capacity(data.points.len());
    for (year, pts) in &data.points {
        let remapped = pts
            .iter()
            .map(|p| {
                let code = data.products[p.product].as_str();
                let product = *p_index
                    .get(code)
                    .ok_or_else(|| PipelineError::data(st, format!("product {code} is not in the trade panel")))?;
                Ok(PlanePoint { product, ..*p })
            })
            .collect::<Result<Vec<_>, PipelineError>>()?;
        points.push((*year, remapped));
    }
    let years = points
        .iter()
        .map(|(year, _)| {
            let weights = rca(&panel, *year)
                .map_err(|e| PipelineError::from_metrics(st, e))?
                .weights;
            let ym = m
                .year(*year)
                .ok_or_else(|| PipelineError::data(st, format!("no metrics for {year}")))?;
            let deciles = fitness_deciles(&ym.fitness).map_err(|e| PipelineError::from_market(st, e))?;
            Ok(MarketYear {
                year: *year,
                weights,
                deciles,
            })
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;
    let mut outcome = StageOutcome::ok();
    for y in years.iter().filter(|y| y.deciles.degenerate) {
        outcome
            .warnings
            .push(format!("{}: tied Fitness leaves a decile empty", y.year));
    }
    let mkt = |e| PipelineError::from_market(st, e);
    let hist = box_market_histograms(&points, &years, &cfg.grid, cfg.pooling).map_err(mkt)?;
    write_histograms_csv(&hist, out.create("market/histograms.csv")?).map_err(mkt)?;
    let pooled = if cfg.pooling == Pooling::Pooled {
        hist
    } else {
        box_market_histograms(&points, &years, &cfg.grid, Pooling::Pooled).map_err(mkt)?
    };
    let profile = minima.map(|c| asymptotic_profile(&pooled, &c, &cfg.grid));
    let trend = profile.as_ref().and_then(AsymptoticProfile::trend);
    out.write_json(PROFILE, &ProfileFile { profile, trend })?;
    Ok(outcome)
}
