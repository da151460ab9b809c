use std::path::Path;

use serde::{Deserialize, Serialize};

use super::stages::{
    FieldsSummary, Manifest, Out, ProfileFile, FIELDS_SUMMARY, MINIMA_H, MINIMA_V, POINTS, POTENTIAL, PROFILE,
};
use super::svg::{ramp, Svg};
use super::{PipelineError, Stage};
use crate::fields::{CurveDistance, DirectionTest, Grid, GridField, MinimaCurve, PotentialFit};
use crate::market::N_BINS;
use crate::stats::spearman;

/// Machine-readable numbers behind the report figures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub config_hash: String,
    pub converged: bool,
    pub points: usize,
    /// Spearman correlation of `x` and `y` over all plane points.
    pub spearman_xy: Option<f64>,
    /// `log10(max / min)` of the number of points over occupied cells.
    pub density_span_orders: Option<f64>,
    pub velocity_samples: usize,
    pub velocity_field_empty: bool,
    pub k_x: Option<f64>,
    pub k_y: Option<f64>,
    pub r2_x: Option<f64>,
    pub r2_y: Option<f64>,
    pub potential_error: Option<String>,
    pub direction: Option<DirectionTest>,
    pub minima_distance: Option<CurveDistance>,
    pub market_trend: Option<f64>,
}

struct FieldCsv {
    field: GridField,
}

fn read_field(out: &Out, rel: &str) -> Result<FieldCsv, PipelineError> {
    let bad = |m: String| PipelineError::data(Stage::Report, format!("{rel}: {m}"));
    let mut rdr = csv::Reader::from_reader(out.open(rel)?);
    let dim = rdr.headers().map_err(|e| bad(e.to_string()))?.len().saturating_sub(3);
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let num = |k: usize| {
            rec[k]
                .parse::<usize>()
                .map_err(|_| bad(format!("bad integer `{}`", &rec[k])))
        };
        let (i, j, n) = (num(0)?, num(1)?, num(2)?);
        let vals = (0..dim)
            .map(|k| {
                let s = &rec[3 + k];
                if s.is_empty() {
                    Ok(None)
                } else {
                    s.parse().map(Some).map_err(|_| bad(format!("bad value `{s}`")))
                }
            })
            .collect::<Result<Vec<Option<f64>>, _>>()?;
        rows.push((i, j, n, vals));
    }
    let nx = rows.iter().map(|r| r.0 + 1).max().unwrap_or(0);
    let ny = rows.iter().map(|r| r.1 + 1).max().unwrap_or(0);
    let grid = Grid::new(nx, ny, 0).map_err(|e| bad(e.to_string()))?;
    let mut field = GridField::empty(grid, dim);
    for (i, j, n, vals) in rows {
        field.counts[grid.index(i, j)] = n;
        for (k, v) in vals.into_iter().enumerate() {
            field.set(i, j, k, v);
        }
    }
    Ok(FieldCsv { field })
}

fn read_points(out: &Out) -> Result<(Vec<f64>, Vec<f64>), PipelineError> {
    let mut rdr = csv::Reader::from_reader(out.open(POINTS)?);
    let bad = |m: String| PipelineError::data(Stage::Report, format!("{POINTS}: {m}"));
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        xs.push(rec[2].parse().map_err(|_| bad("bad x".into()))?);
        ys.push(rec[3].parse().map_err(|_| bad("bad y".into()))?);
    }
    Ok((xs, ys))
}

const PLOT: f64 = 400.0;
const MARGIN: f64 = 50.0;

fn to_svg(x: f64, y: f64) -> (f64, f64) {
    (MARGIN + x * PLOT, MARGIN + (1.0 - y) * PLOT)
}

fn heatmap(svg: &mut Svg, f: &GridField) {
    let vals = f.defined_values(0);
    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (cw, ch) = (PLOT / f.grid.nx as f64, PLOT / f.grid.ny as f64);
    for (i, j) in f.grid.cells() {
        let (x, y) = to_svg(i as f64 / f.grid.nx as f64, (j + 1) as f64 / f.grid.ny as f64);
        match f.scalar(i, j) {
            Some(v) => {
                let t = if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
                svg.rect(x, y, cw, ch, &ramp(t), None);
            }
            None => svg.rect(x, y, cw, ch, "#e8e8e8", Some("#ffffff")),
        }
    }
    if lo.is_finite() {
        svg.text(
            MARGIN + PLOT,
            MARGIN + PLOT + 40.0,
            10.0,
            "end",
            &format!("colour range {lo:.4} to {hi:.4}"),
        );
    }
}

fn frame(svg: &mut Svg, title: &str) {
    svg.text(MARGIN + PLOT / 2.0, 30.0, 14.0, "middle", title);
    svg.rect(MARGIN, MARGIN, PLOT, PLOT, "none", Some("#333333"));
    svg.text(
        MARGIN + PLOT / 2.0,
        MARGIN + PLOT + 22.0,
        12.0,
        "middle",
        "rank(Complexity)",
    );
    svg.text(15.0, MARGIN + PLOT / 2.0, 12.0, "middle", "rank(logPRODY)");
}

fn curve(svg: &mut Svg, c: &MinimaCurve, stroke: &str, dashed: bool) {
    let pts: Vec<(f64, f64)> = c.columns.iter().flatten().map(|m| to_svg(m.x, m.y)).collect();
    svg.polyline(&pts, stroke, 2.0, dashed);
    for m in c.columns.iter().flatten() {
        let (x, lo) = to_svg(m.x, m.ci_low);
        let (_, hi) = to_svg(m.x, m.ci_high);
        svg.line(x, lo, x, hi, stroke, 1.0);
    }
}

fn fields_svg(h: &GridField, v: &GridField, minima_v: Option<&MinimaCurve>, minima_h: Option<&MinimaCurve>) -> String {
    let mut svg = Svg::new(PLOT + 2.0 * MARGIN, PLOT + 2.0 * MARGIN);
    heatmap(&mut svg, h);
    frame(&mut svg, "Smoothed H with mean velocity");
    let speeds = v.modulus().defined_values(0);
    let vmax = speeds.iter().copied().fold(0.0, f64::max);
    let cell = PLOT / v.grid.nx.max(v.grid.ny) as f64;
    if vmax > 0.0 {
        for (i, j) in v.grid.cells() {
            if let (Some(vx), Some(vy)) = (v.get(i, j, 0), v.get(i, j, 1)) {
                let (cx, cy) = v.grid.center(i, j);
                let (x, y) = to_svg(cx, cy);
                let s = 0.9 * cell / vmax;
                svg.arrow(x, y, vx * s, -vy * s, "#ffffff");
            }
        }
    } else {
        svg.text(
            MARGIN + PLOT / 2.0,
            MARGIN + PLOT / 2.0,
            16.0,
            "middle",
            "velocity field empty",
        );
    }
    if let Some(c) = minima_v {
        curve(&mut svg, c, "#ff7f0e", false);
    }
    if let Some(c) = minima_h {
        curve(&mut svg, c, "#d62728", true);
    }
    svg.text(
        MARGIN,
        MARGIN + PLOT + 40.0,
        10.0,
        "start",
        "solid: velocity minima, dashed: H minima",
    );
    svg.finish()
}

fn scalar_svg(f: &GridField, title: &str) -> String {
    let mut svg = Svg::new(PLOT + 2.0 * MARGIN, PLOT + 2.0 * MARGIN);
    heatmap(&mut svg, f);
    frame(&mut svg, title);
    svg.finish()
}

fn market_svg(profile: Option<&ProfileFile>) -> String {
    let cols: Vec<_> = profile
        .and_then(|p| p.profile.as_ref())
        .map(|p| p.columns.iter().flatten().collect())
        .unwrap_or_default();
    let (pw, ph, gap) = (110.0, 90.0, 12.0);
    let width = (cols.len().max(1) as f64) * (pw + gap) + gap;
    let mut svg = Svg::new(width, ph + 80.0);
    svg.text(
        width / 2.0,
        20.0,
        13.0,
        "middle",
        "Mean normalized RCA by Fitness decile along the H minima",
    );
    if cols.is_empty() {
        svg.text(width / 2.0, 60.0, 12.0, "middle", "no market profile");
        return svg.finish();
    }
    for (k, c) in cols.iter().enumerate() {
        let x0 = gap + k as f64 * (pw + gap);
        let y0 = 35.0;
        svg.rect(x0, y0, pw, ph, "none", Some("#999999"));
        let vmax = c.histogram.values.iter().flatten().copied().fold(0.0, f64::max);
        let bw = pw / N_BINS as f64;
        for (b, v) in c.histogram.values.iter().enumerate() {
            if let Some(v) = v {
                let hgt = if vmax > 0.0 { v / vmax * (ph - 4.0) } else { 0.0 };
                svg.rect(x0 + b as f64 * bw + 1.0, y0 + ph - hgt, bw - 2.0, hgt, "#3b528b", None);
            }
        }
        svg.text(
            x0 + pw / 2.0,
            y0 + ph + 14.0,
            10.0,
            "middle",
            &format!("column {}", c.column),
        );
        let p = c.peakedness.map_or("n/a".to_string(), |p| format!("{p:.2}"));
        svg.text(
            x0 + pw / 2.0,
            y0 + ph + 28.0,
            10.0,
            "middle",
            &format!("peakedness {p}"),
        );
    }
    svg.finish()
}

/// Writes `report/summary.json` and the SVG figures for a finished run.
pub fn render_report(out_dir: &Path, manifest: &Manifest) -> Result<ReportSummary, PipelineError> {
    let mut out = Out::new(out_dir, Stage::Report);
    for rel in manifest.checksums.keys() {
        if !out.exists(rel) {
            return Err(PipelineError::MissingArtifact {
                stage: Stage::Report,
                path: out.path(rel),
            });
        }
    }
    let fs: FieldsSummary = out.read_json(FIELDS_SUMMARY)?;
    let potential: Option<PotentialFit> = out.read_json(POTENTIAL)?;
    let minima_v: Option<MinimaCurve> = out.read_json(MINIMA_V)?;
    let minima_h: Option<MinimaCurve> = out.read_json(MINIMA_H)?;
    let profile: Option<ProfileFile> = if out.exists(PROFILE) {
        Some(out.read_json(PROFILE)?)
    } else {
        None
    };
    let (xs, ys) = read_points(&out)?;
    let occupancy = read_field(&out, "fields/occupancy.csv")?.field;
    let counts: Vec<f64> = occupancy.counts.iter().filter(|&&c| c > 0).map(|&c| c as f64).collect();
    let density_span_orders = (!counts.is_empty()).then(|| {
        let hi = counts.iter().copied().fold(0.0, f64::max);
        let lo = counts.iter().copied().fold(f64::INFINITY, f64::min);
        (hi / lo).log10()
    });
    let summary = ReportSummary {
        config_hash: manifest.config_hash.clone(),
        converged: manifest.converged,
        points: xs.len(),
        spearman_xy: spearman(&xs, &ys),
        density_span_orders,
        velocity_samples: fs.velocity_samples,
        velocity_field_empty: fs.velocity_field_empty,
        k_x: potential.as_ref().map(|p| p.k_x),
        k_y: potential.as_ref().map(|p| p.k_y),
        r2_x: potential.as_ref().map(|p| p.r2_x),
        r2_y: potential.as_ref().map(|p| p.r2_y),
        potential_error: fs.potential_error.clone(),
        direction: fs.direction,
        minima_distance: fs.minima_distance,
        market_trend: profile.as_ref().and_then(|p| p.trend),
    };

    let h = read_field(&out, "fields/h_smooth.csv")?.field;
    let v = read_field(&out, "fields/velocity.csv")?.field;
    let r2 = read_field(&out, "fields/exporter_r2.csv")?.field;
    out.write_json("report/summary.json", &summary)?;
    out.write_bytes(
        "report/fields.svg",
        fields_svg(&h, &v, minima_v.as_ref(), minima_h.as_ref()).as_bytes(),
    )?;
    out.write_bytes("report/market.svg", market_svg(profile.as_ref()).as_bytes())?;
    out.write_bytes(
        "report/exporter_r2.svg",
        scalar_svg(&r2, "Fitness-GDP agreement of top exporters").as_bytes(),
    )?;
    if summary.velocity_field_empty {
        log::warn!("report: velocity field is empty");
    }
    Ok(summary)
}
