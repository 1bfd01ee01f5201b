use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::plot::{cell_scale, heatmap, hstack, line_plot, PALETTE};
use super::probe::{AttentionDiffMap, SUPPORT_FRACTION};
use super::rollout::RolloutResult;
use crate::nn::FieldGrid;
use crate::train::MetricsReport;

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("nothing to report")]
    Empty,
    #[error("cannot write report to {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutRecord {
    pub benchmark: String,
    pub seed: u64,
    pub result: RolloutResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeRecord {
    pub label: String,
    pub map: AttentionDiffMap,
}

/// Passthrough and update of one PITT prediction next to the truth.
#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionPanel {
    pub label: String,
    pub grid: FieldGrid,
    pub passthrough: Vec<f64>,
    pub update: Vec<f64>,
    pub truth: Vec<f64>,
}

/// Absolute prediction error over a 2D grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorMap {
    pub label: String,
    pub grid: FieldGrid,
    pub values: Vec<f64>,
}

/// Everything one `emit_report` call writes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub mae: Vec<MetricsReport>,
    pub rollouts: Vec<RolloutRecord>,
    pub probes: Vec<ProbeRecord>,
    pub decompositions: Vec<DecompositionPanel>,
    pub error_maps: Vec<ErrorMap>,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSummary {
    pub label: String,
    pub max_change: f64,
    pub support_size: usize,
    pub heads: usize,
}

/// Machine-readable metrics; contains no timings so reruns match byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsDocument {
    pub mae: Vec<MetricsReport>,
    pub rollouts: Vec<RolloutRecord>,
    pub probes: Vec<ProbeSummary>,
    pub flags: Vec<String>,
}

impl Report {
    pub fn is_empty(&self) -> bool {
        self.mae.is_empty() && self.rollouts.is_empty() && self.probes.is_empty() && self.decompositions.is_empty() && self.error_maps.is_empty()
    }

    pub fn document(&self) -> MetricsDocument {
        let mut flags = self.flags.clone();
        for r in &self.rollouts {
            if let Some(step) = r.result.blow_up {
                flags.push(format!("{} {} seed {} sample {}: rollout blew up at step {step}", r.benchmark, r.result.model, r.seed, r.result.sample));
            }
        }
        MetricsDocument {
            mae: self.mae.clone(),
            rollouts: self.rollouts.clone(),
            probes: self
                .probes
                .iter()
                .map(|p| ProbeSummary {
                    label: p.label.clone(),
                    max_change: p.map.max(),
                    support_size: p.map.support(SUPPORT_FRACTION).len(),
                    heads: p.map.heads.len(),
                })
                .collect(),
            flags,
        }
    }
}

/// MAE table with one row per benchmark and one column per model.
pub fn mae_table(rows: &[MetricsReport]) -> String {
    let mut models: Vec<&str> = Vec::new();
    let mut cells: BTreeMap<&str, BTreeMap<&str, String>> = BTreeMap::new();
    for r in rows {
        if !models.contains(&r.model.as_str()) {
            models.push(&r.model);
        }
        cells.entry(&r.benchmark).or_default().insert(&r.model, r.cell());
    }
    let mut out = format!("| Benchmark | {} |\n|---|{}\n", models.join(" | "), "---|".repeat(models.len()));
    for (bench, row) in &cells {
        let vals: Vec<&str> = models.iter().map(|m| row.get(m).map_or("-", String::as_str)).collect();
        out.push_str(&format!("| {bench} | {} |\n", vals.join(" | ")));
    }
    out
}

fn slug(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' { c.to_ascii_lowercase() } else { '_' }).collect()
}

/// Writes `metrics.json`, `mae_table.md` and one PNG per figure into `dir`.
pub fn emit_report(report: &Report, dir: &Path) -> Result<Vec<PathBuf>, ReportError> {
    if report.is_empty() {
        return Err(ReportError::Empty);
    }
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| ReportError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let mut written = Vec::new();
    let write_text = |name: &str, text: String, written: &mut Vec<PathBuf>| -> Result<(), ReportError> {
        let p = dir.join(name);
        fs::write(&p, text).map_err(io(&p))?;
        written.push(p);
        Ok(())
    };
    let doc = serde_json::to_string_pretty(&report.document()).expect("metrics serialize");
    write_text("metrics.json", doc + "\n", &mut written)?;
    if !report.mae.is_empty() {
        write_text("mae_table.md", mae_table(&report.mae), &mut written)?;
    }
    let save = |name: String, img: image::RgbImage, written: &mut Vec<PathBuf>| -> Result<(), ReportError> {
        let p = dir.join(name);
        img.save(&p)?;
        written.push(p);
        Ok(())
    };

    let mut by_bench: BTreeMap<&str, Vec<&RolloutRecord>> = BTreeMap::new();
    for r in &report.rollouts {
        by_bench.entry(&r.benchmark).or_default().push(r);
    }
    for (bench, records) in by_bench {
        let mut models: Vec<&str> = Vec::new();
        let series: Vec<_> = records
            .iter()
            .map(|r| {
                let m = models.iter().position(|&m| m == r.result.model).unwrap_or_else(|| {
                    models.push(&r.result.model);
                    models.len() - 1
                });
                (r.result.times.clone(), r.result.per_step.clone(), PALETTE[m % PALETTE.len()])
            })
            .collect();
        save(format!("rollout_{}.png", slug(bench)), line_plot(&series, true, 640, 400), &mut written)?;
    }
    for (i, p) in report.probes.iter().enumerate() {
        let m = p.map.mean_map();
        let img = heatmap(&m.data, m.rows, m.cols, cell_scale(m.rows, m.cols, 400), None);
        save(format!("probe_{i}_{}.png", slug(&p.label)), img, &mut written)?;
    }
    for (i, d) in report.decompositions.iter().enumerate() {
        let sum: Vec<f64> = d.passthrough.iter().zip(&d.update).map(|(a, b)| a + b).collect();
        let img = if d.grid.dims() == 1 {
            let x: Vec<f64> = (0..d.grid.points()).map(|j| j as f64).collect();
            let panel = |y: &Vec<f64>, c| line_plot(&[(x.clone(), y.clone(), c)], false, 300, 220);
            hstack(&[
                panel(&d.passthrough, PALETTE[0]),
                panel(&d.update, PALETTE[1]),
                line_plot(&[(x.clone(), sum.clone(), PALETTE[2]), (x.clone(), d.truth.clone(), PALETTE[5])], false, 300, 220),
            ])
        } else {
            let s = cell_scale(d.grid.n1, d.grid.n2, 256);
            let field = |v: &[f64]| heatmap(v, d.grid.n1, d.grid.n2, s, None);
            hstack(&[field(&d.passthrough), field(&d.update), field(&sum), field(&d.truth)])
        };
        save(format!("decomposition_{i}_{}.png", slug(&d.label)), img, &mut written)?;
    }
    for (i, e) in report.error_maps.iter().enumerate() {
        let img = heatmap(&e.values, e.grid.n1, e.grid.n2, cell_scale(e.grid.n1, e.grid.n2, 400), None);
        save(format!("error_map_{i}_{}.png", slug(&e.label)), img, &mut written)?;
    }
    Ok(written)
}

/// Reads a metrics document written by [`emit_report`].
pub fn load_metrics(path: &Path) -> Result<MetricsDocument, ReportError> {
    let text = fs::read_to_string(path).map_err(|source| ReportError::Io { path: path.display().to_string(), source })?;
    serde_json::from_str(&text).map_err(|e| ReportError::Io {
        path: path.display().to_string(),
        source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
    })
}
