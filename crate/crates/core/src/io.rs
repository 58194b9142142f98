//! Readers and writers for every artifact the pipeline emits, plus the
//! command-level operations behind the CLI.
//!
//! Formats:
//! - visibilities: CSV with columns `u,v,re,im,sigma` (floats printed with
//!   Rust's shortest round-trip representation, so re-reading is lossless);
//! - images: headerless CSV of pixel rows with `# pixel_size=` metadata, and
//!   16-bit binary PGM (quantized export);
//! - selections: a JSON document `{mode, kernel, order, indicator_trace}`;
//! - metrics: CSV with the frozen column order
//!   `mode,method,chi2,chi2_sq,rmse,mre,n_used`, plus an aligned text table;
//! - experiment configuration: TOML.
//!
//! Every artifact records the experiment seed in a comment or field.

use std::fs;
use std::io::{BufRead, BufReader, Read};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourier::{ndft_forward, ImageGrid};
use crate::geometry::Point2;
use crate::greedy::{SelectionMode, SelectionResult};
use crate::kernel::KernelConfig;
use crate::metrics::Metrics;
use crate::pipeline::{ExperimentConfig, Pipeline, ReconstructionReport, Selection};
use crate::simulate::FrequencySample;

/// Method label recorded in metric tables for this reconstructor
/// (interpolation/extrapolation followed by projected Landweber).
pub const METHOD_NAME: &str = "uv_smooth";

fn format_error(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format { path: path.display().to_string(), reason: reason.into() }
}

// ---------------------------------------------------------------------------
// visibilities

pub fn write_visibilities_csv(path: &Path, samples: &[FrequencySample], seed: u64) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("# seed={seed}\n"));
    out.push_str("u,v,re,im,sigma\n");
    for s in samples {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            s.xi.x, s.xi.y, s.value.re, s.value.im, s.sigma
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_visibilities_csv(path: &Path) -> Result<Vec<FrequencySample>> {
    let file = fs::File::open(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .has_headers(true)
        .from_reader(file);
    let mut samples = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| format_error(path, e.to_string()))?;
        if record.len() != 5 {
            return Err(format_error(path, format!("expected 5 columns, got {}", record.len())));
        }
        let field = |i: usize| -> Result<f64> {
            record[i]
                .trim()
                .parse()
                .map_err(|e| format_error(path, format!("column {i}: {e}")))
        };
        samples.push(FrequencySample {
            xi: Point2::new(field(0)?, field(1)?),
            value: Complex64::new(field(2)?, field(3)?),
            sigma: field(4)?,
        });
    }
    Ok(samples)
}

// ---------------------------------------------------------------------------
// images

pub fn write_image_csv(path: &Path, image: &ImageGrid, seed: u64) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("# seed={seed}\n"));
    out.push_str(&format!("# pixel_size={}\n", image.pixel_size()));
    for row in image.pixels().rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_image_csv(path: &Path) -> Result<ImageGrid> {
    let file = fs::File::open(path)?;
    let reader = BufReader::new(file);
    let mut pixel_size = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for line in reader.lines() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(comment) = trimmed.strip_prefix('#') {
            if let Some(v) = comment.trim().strip_prefix("pixel_size=") {
                pixel_size =
                    Some(v.parse().map_err(|e| format_error(path, format!("pixel_size: {e}")))?);
            }
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> =
            trimmed.split(',').map(|c| c.trim().parse::<f64>()).collect();
        rows.push(row.map_err(|e| format_error(path, e.to_string()))?);
    }
    let pixel_size =
        pixel_size.ok_or_else(|| format_error(path, "missing '# pixel_size=' metadata"))?;
    let m = rows.len();
    if m == 0 || rows.iter().any(|r| r.len() != m) {
        return Err(format_error(path, "pixel rows do not form a square grid"));
    }
    let pixels = Array2::from_shape_fn((m, m), |(a, b)| rows[a][b]);
    ImageGrid::new(pixels, pixel_size)
}

/// Write a 16-bit binary PGM (P5). Pixels are clamped at zero and scaled so
/// the maximum maps to 65535; the scale, seed and pixel size are recorded in
/// a header comment.
pub fn write_image_pgm(path: &Path, image: &ImageGrid, seed: u64) -> Result<()> {
    let m = image.size();
    let peak = image.pixels().iter().cloned().fold(0.0f64, f64::max);
    let scale = if peak > 0.0 { peak } else { 1.0 };
    let mut out = Vec::new();
    out.extend_from_slice(
        format!(
            "P5\n# seed={seed} scale={scale} pixel_size={}\n{m} {m}\n65535\n",
            image.pixel_size()
        )
        .as_bytes(),
    );
    for v in image.pixels().iter() {
        let q = ((v / scale) * 65535.0).round().clamp(0.0, 65535.0) as u16;
        out.extend_from_slice(&q.to_be_bytes());
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_image_pgm(path: &Path) -> Result<ImageGrid> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;

    // Header tokens are whitespace-separated; comment lines run to '\n'.
    let mut pos = 0usize;
    let mut scale = 1.0f64;
    let mut pixel_size = 1.0f64;
    let mut tokens: Vec<String> = Vec::new();
    while tokens.len() < 4 {
        if pos >= bytes.len() {
            return Err(format_error(path, "truncated PGM header"));
        }
        let c = bytes[pos] as char;
        if c == '#' {
            let end = bytes[pos..]
                .iter()
                .position(|&b| b == b'\n')
                .map(|e| pos + e)
                .unwrap_or(bytes.len());
            let comment = String::from_utf8_lossy(&bytes[pos + 1..end]);
            for word in comment.split_whitespace() {
                if let Some(v) = word.strip_prefix("scale=") {
                    scale = v.parse().map_err(|e| format_error(path, format!("scale: {e}")))?;
                }
                if let Some(v) = word.strip_prefix("pixel_size=") {
                    pixel_size =
                        v.parse().map_err(|e| format_error(path, format!("pixel_size: {e}")))?;
                }
            }
            pos = end + 1;
        } else if c.is_whitespace() {
            pos += 1;
        } else {
            let start = pos;
            while pos < bytes.len() && !(bytes[pos] as char).is_whitespace() {
                pos += 1;
            }
            tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
    }
    if tokens[0] != "P5" {
        return Err(format_error(path, format!("expected P5 magic, got {}", tokens[0])));
    }
    let width: usize = tokens[1].parse().map_err(|e| format_error(path, format!("width: {e}")))?;
    let height: usize =
        tokens[2].parse().map_err(|e| format_error(path, format!("height: {e}")))?;
    let maxval: u32 = tokens[3].parse().map_err(|e| format_error(path, format!("maxval: {e}")))?;
    if maxval != 65535 || width != height {
        return Err(format_error(path, "expected a square 16-bit PGM"));
    }
    pos += 1; // single whitespace after maxval
    let need = width * height * 2;
    if bytes.len() < pos + need {
        return Err(format_error(path, "truncated PGM payload"));
    }
    let mut pixels = Array2::zeros((height, width));
    for a in 0..height {
        for b in 0..width {
            let o = pos + 2 * (a * width + b);
            let q = u16::from_be_bytes([bytes[o], bytes[o + 1]]);
            pixels[[a, b]] = q as f64 / 65535.0 * scale;
        }
    }
    ImageGrid::new(pixels, pixel_size)
}

// ---------------------------------------------------------------------------
// selections

/// On-disk form of a greedy selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionDocument {
    pub mode: SelectionMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelConfig>,
    pub order: Vec<usize>,
    pub indicator_trace: Vec<f64>,
    pub seed: u64,
}

impl SelectionDocument {
    pub fn from_result(result: &SelectionResult, seed: u64) -> Self {
        SelectionDocument {
            mode: result.mode,
            kernel: result.kernel,
            order: result.order.clone(),
            indicator_trace: result.indicator_trace.clone(),
            seed,
        }
    }

    pub fn into_result(self) -> SelectionResult {
        SelectionResult {
            mode: self.mode,
            kernel: self.kernel,
            order: self.order,
            indicator_trace: self.indicator_trace,
        }
    }
}

pub fn write_selection_json(path: &Path, result: &SelectionResult, seed: u64) -> Result<()> {
    let doc = SelectionDocument::from_result(result, seed);
    let json = serde_json::to_string_pretty(&doc)
        .map_err(|e| format_error(path, e.to_string()))?;
    fs::write(path, json + "\n")?;
    Ok(())
}

pub fn read_selection_json(path: &Path) -> Result<SelectionResult> {
    let text = fs::read_to_string(path)?;
    let doc: SelectionDocument =
        serde_json::from_str(&text).map_err(|e| format_error(path, e.to_string()))?;
    Ok(doc.into_result())
}

// ---------------------------------------------------------------------------
// metrics tables

/// One row of the metrics table.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub mode: String,
    pub method: String,
    pub metrics: Metrics,
    pub n_used: usize,
}

impl MetricsRow {
    pub fn new(mode: &str, metrics: Metrics, n_used: usize) -> Self {
        MetricsRow { mode: mode.to_string(), method: METHOD_NAME.to_string(), metrics, n_used }
    }
}

pub const METRICS_CSV_HEADER: &str = "mode,method,chi2,chi2_sq,rmse,mre,n_used";

pub fn write_metrics_csv(path: &Path, rows: &[MetricsRow], seed: u64) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("# seed={seed}\n"));
    out.push_str(METRICS_CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.mode, r.method, r.metrics.chi2, r.metrics.chi2_sq, r.metrics.rmse, r.metrics.mre,
            r.n_used
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRow>> {
    let file = fs::File::open(path)?;
    let mut reader =
        csv::ReaderBuilder::new().comment(Some(b'#')).has_headers(true).from_reader(file);
    {
        let headers = reader.headers().map_err(|e| format_error(path, e.to_string()))?;
        let joined = headers.iter().collect::<Vec<_>>().join(",");
        if joined != METRICS_CSV_HEADER {
            return Err(format_error(path, format!("unexpected header '{joined}'")));
        }
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| format_error(path, e.to_string()))?;
        let num = |i: usize| -> Result<f64> {
            record[i].parse().map_err(|e| format_error(path, format!("column {i}: {e}")))
        };
        rows.push(MetricsRow {
            mode: record[0].to_string(),
            method: record[1].to_string(),
            metrics: Metrics { chi2: num(2)?, chi2_sq: num(3)?, rmse: num(4)?, mre: num(5)? },
            n_used: record[6]
                .parse()
                .map_err(|e| format_error(path, format!("n_used: {e}")))?,
        });
    }
    Ok(rows)
}

/// Aligned three-row text table for one configuration.
pub fn format_metrics_table(title: &str, rows: &[(&str, &ReconstructionReport)]) -> String {
    let mut out = String::new();
    out.push_str(&format!("{title} configuration — {METHOD_NAME}\n"));
    out.push_str(&format!("{:<16}{:>10}{:>10}{:>10}{:>8}\n", "Sampling", "chi2", "RMSE", "MRE", "n"));
    for (label, report) in rows {
        out.push_str(&format!(
            "{:<16}{:>10.4}{:>10.4}{:>10.4}{:>8}\n",
            label, report.metrics.chi2, report.metrics.rmse, report.metrics.mre, report.n_used
        ));
    }
    out
}

// ---------------------------------------------------------------------------
// configuration

pub fn read_config_toml(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path)?;
    let cfg: ExperimentConfig =
        toml::from_str(&text).map_err(|e| Error::InvalidConfig(format!(
            "{}: {e}",
            path.display()
        )))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn write_config_toml(path: &Path, cfg: &ExperimentConfig) -> Result<()> {
    let text =
        toml::to_string_pretty(cfg).map_err(|e| format_error(path, e.to_string()))?;
    fs::write(path, text)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// command-level operations

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    Ok(())
}

/// Artifacts produced by [`cmd_simulate`].
#[derive(Debug, Clone)]
pub struct SimulateArtifacts {
    pub truth_csv: PathBuf,
    pub truth_pgm: PathBuf,
    pub visibilities: PathBuf,
    pub samples: Vec<FrequencySample>,
}

/// Render the ground truth and write it with the simulated visibilities.
pub fn cmd_simulate(cfg: &ExperimentConfig, out_dir: &Path) -> Result<SimulateArtifacts> {
    cfg.validate()?;
    ensure_dir(out_dir)?;
    let truth = crate::simulate::render_source(&cfg.source, &cfg.image)?;
    let nodes = crate::simulate::fibonacci_nodes(cfg.n_samples, cfg.r_max)?;
    let samples =
        crate::simulate::simulate_visibilities(&truth, &nodes, cfg.noise_level, cfg.seed)?;

    let truth_csv = out_dir.join("ground_truth.csv");
    let truth_pgm = out_dir.join("ground_truth.pgm");
    let visibilities = out_dir.join("visibilities.csv");
    write_image_csv(&truth_csv, &truth, cfg.seed)?;
    write_image_pgm(&truth_pgm, &truth, cfg.seed)?;
    write_visibilities_csv(&visibilities, &samples, cfg.seed)?;
    Ok(SimulateArtifacts { truth_csv, truth_pgm, visibilities, samples })
}

/// Run the configured greedy selection and write the selection document.
/// `samples` overrides the simulated visibilities (e.g. loaded from disk).
pub fn cmd_select(
    cfg: &ExperimentConfig,
    samples: Option<Vec<FrequencySample>>,
    mode: SelectionMode,
    out_dir: &Path,
) -> Result<(SelectionResult, PathBuf)> {
    ensure_dir(out_dir)?;
    let pipeline = match samples {
        Some(s) => Pipeline::with_samples(cfg.clone(), s)?,
        None => Pipeline::prepare(cfg.clone())?,
    };
    let result = match mode {
        SelectionMode::ErrorBased => pipeline.select_error_based()?,
        SelectionMode::ResidualBased => pipeline.select_residual()?,
    };
    let path = out_dir.join(format!("selection_{}.json", sampling_id(mode)));
    write_selection_json(&path, &result, cfg.seed)?;
    Ok((result, path))
}

fn sampling_id(mode: SelectionMode) -> &'static str {
    match mode {
        SelectionMode::ErrorBased => "error_based",
        SelectionMode::ResidualBased => "residual_based",
    }
}

/// Reconstruct from an optional selection (all points when absent) and write
/// the image pair plus a one-row metrics table.
pub fn cmd_reconstruct(
    cfg: &ExperimentConfig,
    samples: Option<Vec<FrequencySample>>,
    selection: Option<&SelectionResult>,
    out_dir: &Path,
) -> Result<ReconstructionReport> {
    ensure_dir(out_dir)?;
    let pipeline = match samples {
        Some(s) => Pipeline::with_samples(cfg.clone(), s)?,
        None => Pipeline::prepare(cfg.clone())?,
    };
    let sel = match selection {
        Some(s) => Selection::Subset(s),
        None => Selection::AllPoints,
    };
    let mut output = pipeline.reconstruct(sel)?;
    let id = output.report.sampling_mode.id();
    let csv = out_dir.join(format!("image_{id}.csv"));
    let pgm = out_dir.join(format!("image_{id}.pgm"));
    write_image_csv(&csv, &output.image, cfg.seed)?;
    write_image_pgm(&pgm, &output.image, cfg.seed)?;
    let metrics_path = out_dir.join(format!("metrics_{id}.csv"));
    write_metrics_csv(
        &metrics_path,
        &[MetricsRow::new(id, output.report.metrics, output.report.n_used)],
        cfg.seed,
    )?;
    for p in [&csv, &pgm, &metrics_path] {
        output.report.artifacts.push(p.display().to_string());
    }
    Ok(output.report)
}

/// Artifacts produced by [`cmd_experiment`].
#[derive(Debug, Clone)]
pub struct ExperimentArtifacts {
    pub reports: Vec<ReconstructionReport>,
    pub metrics_csv: PathBuf,
    pub table_txt: PathBuf,
    pub files: Vec<PathBuf>,
}

/// Run all three sampling strategies and emit the full artifact set.
pub fn cmd_experiment(
    cfg: &ExperimentConfig,
    title: &str,
    out_dir: &Path,
) -> Result<ExperimentArtifacts> {
    ensure_dir(out_dir)?;
    let pipeline = Pipeline::prepare(cfg.clone())?;
    let bundle = pipeline.run_experiment()?;
    let seed = cfg.seed;
    let mut files = Vec::new();

    let truth_csv = out_dir.join("ground_truth.csv");
    let truth_pgm = out_dir.join("ground_truth.pgm");
    write_image_csv(&truth_csv, pipeline.truth(), seed)?;
    write_image_pgm(&truth_pgm, pipeline.truth(), seed)?;
    files.push(truth_csv);
    files.push(truth_pgm);

    let vis_path = out_dir.join("visibilities.csv");
    write_visibilities_csv(&vis_path, pipeline.samples(), seed)?;
    files.push(vis_path);

    let sel_err = out_dir.join("selection_error_based.json");
    write_selection_json(&sel_err, &bundle.error_selection, seed)?;
    files.push(sel_err);
    let sel_res = out_dir.join("selection_residual_based.json");
    write_selection_json(&sel_res, &bundle.residual_selection, seed)?;
    files.push(sel_res);

    let mut reports = Vec::new();
    for output in [&bundle.all_points, &bundle.error_based, &bundle.residual_based] {
        let id = output.report.sampling_mode.id();
        let csv = out_dir.join(format!("image_{id}.csv"));
        let pgm = out_dir.join(format!("image_{id}.pgm"));
        write_image_csv(&csv, &output.image, seed)?;
        write_image_pgm(&pgm, &output.image, seed)?;
        let mut report = output.report.clone();
        report.artifacts = vec![csv.display().to_string(), pgm.display().to_string()];
        files.push(csv);
        files.push(pgm);
        reports.push(report);
    }

    let rows: Vec<MetricsRow> = reports
        .iter()
        .map(|r| MetricsRow::new(r.sampling_mode.id(), r.metrics, r.n_used))
        .collect();
    let metrics_csv = out_dir.join("metrics.csv");
    write_metrics_csv(&metrics_csv, &rows, seed)?;

    let table: Vec<(&str, &ReconstructionReport)> =
        reports.iter().map(|r| (r.sampling_mode.label(), r)).collect();
    let table_txt = out_dir.join("metrics.txt");
    fs::write(&table_txt, format_metrics_table(title, &table))?;

    files.push(metrics_csv.clone());
    files.push(table_txt.clone());
    Ok(ExperimentArtifacts { reports, metrics_csv, table_txt, files })
}

/// Compute metrics of an existing image against a visibility file.
pub fn cmd_metrics(vis_path: &Path, image_path: &Path) -> Result<(Metrics, usize)> {
    let samples = read_visibilities_csv(vis_path)?;
    let image = if image_path.extension().is_some_and(|e| e == "pgm") {
        read_image_pgm(image_path)?
    } else {
        read_image_csv(image_path)?
    };
    let points: Vec<Point2> = samples.iter().map(|s| s.xi).collect();
    let predicted = ndft_forward(&image, &points);
    Ok((Metrics::compute(&samples, &predicted)?, samples.len()))
}
