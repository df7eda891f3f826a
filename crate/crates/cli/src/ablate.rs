//! One-axis ablation sweeps: train every point under the same budget,
//! score it next to bicubic on the validation set, write CSV and SVG.

use std::fmt;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use gmfn::model::FeedbackMode;

use crate::checkpoint::Checkpoint;
use crate::commands::{create_dir, eval_dataset, train_on, write_file, Upscaler, LATEST_CHECKPOINT};
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::plot::{LinePlot, Series};

pub const CSV_HEADER: &str = "axis_value,psnr,ssim,bicubic_psnr,bicubic_ssim,gain_db,iterations,param_count,run";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    N,
    M,
    MBar,
    T,
    Gate,
}

impl FromStr for Axis {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "n" | "N" => Ok(Axis::N),
            "m" | "M" => Ok(Axis::M),
            "m_bar" | "M_bar" | "mbar" => Ok(Axis::MBar),
            "t" | "T" | "steps" => Ok(Axis::T),
            "gate" | "gate_unit" => Ok(Axis::Gate),
            other => Err(CliError::InvalidAxis(other.to_string())),
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::N => "n",
            Axis::M => "m",
            Axis::MBar => "m_bar",
            Axis::T => "t",
            Axis::Gate => "gate",
        })
    }
}

impl Axis {
    /// The configuration of one sweep point and its numeric sort key.
    pub fn apply(self, base: &RunConfig, value: &str) -> Result<(RunConfig, f64)> {
        let mut c = base.clone();
        let int = |v: &str| v.parse::<usize>().map_err(|e| CliError::invalid("sweep_values", format!("`{v}`: {e}")));
        let key = match self {
            Axis::N | Axis::M => {
                if c.feedback != FeedbackMode::Feedback {
                    return Err(CliError::invalid("feedback", format!("axis {self} needs feedback = feedback")));
                }
                let v = int(value)?;
                if self == Axis::N {
                    c.n = v;
                } else {
                    c.m = v;
                }
                v as f64
            }
            Axis::MBar => {
                c.feedback = FeedbackMode::AntiFeedback;
                let v = int(value)?;
                c.m = v;
                v as f64
            }
            Axis::T => {
                let v = int(value)?;
                c.model.steps = v;
                v as f64
            }
            Axis::Gate => {
                c.set("gate_unit", value)?;
                if c.model.gate_unit {
                    1.0
                } else {
                    0.0
                }
            }
        };
        c.validate()?;
        Ok((c, key))
    }

    fn label(self, c: &RunConfig) -> String {
        match self {
            Axis::N => c.n.to_string(),
            Axis::M | Axis::MBar => c.m.to_string(),
            Axis::T => c.model.steps.to_string(),
            Axis::Gate => if c.model.gate_unit { "on" } else { "off" }.to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub axis_value: String,
    pub psnr: f64,
    pub ssim: f64,
    pub bicubic_psnr: f64,
    pub bicubic_ssim: f64,
    pub iterations: u64,
    pub param_count: usize,
    /// Directory name of the training run under `<out>/runs`.
    pub run: String,
}

impl AblationRow {
    pub fn gain_db(&self) -> f64 {
        self.psnr - self.bicubic_psnr
    }
}

#[derive(Clone, Debug)]
pub struct AblationResult {
    pub axis: Axis,
    pub rows: Vec<AblationRow>,
    pub csv_path: PathBuf,
    pub plot_path: PathBuf,
}

pub fn rows_to_csv(rows: &[AblationRow]) -> String {
    let mut s = format!("{CSV_HEADER}\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{:.4},{:.4},{:.4},{:.4},{:.4},{},{},{}",
            r.axis_value,
            r.psnr,
            r.ssim,
            r.bicubic_psnr,
            r.bicubic_ssim,
            r.gain_db(),
            r.iterations,
            r.param_count,
            r.run
        );
    }
    s
}

/// Run directory name: CRC32 of the configuration snapshot. Sweeps sharing
/// an output directory reuse finished runs of identical configurations.
pub fn run_id(config: &RunConfig) -> String {
    format!("{:08x}", crc32fast::hash(config.snapshot_text().as_bytes()))
}

fn finished_run(dir: &Path, config: &RunConfig) -> Option<Checkpoint> {
    let ck = Checkpoint::load(&dir.join(LATEST_CHECKPOINT)).ok()?;
    (ck.config.snapshot_text() == config.snapshot_text() && ck.iteration == config.train.iterations).then_some(ck)
}

/// Sweeps `axis` over `values` starting from `base`; points run one after
/// another in ascending axis order.
pub fn cmd_ablate(base: &RunConfig, axis: &str, values: &[String], mut progress: impl FnMut(&str)) -> Result<AblationResult> {
    let axis: Axis = axis.parse()?;
    if values.is_empty() {
        return Err(CliError::invalid("sweep_values", "no sweep values given"));
    }
    let defaults = RunConfig::default();
    let mut points = values
        .iter()
        .map(|v| {
            // a point is a plain run; the sweep keys must not split run ids
            let (mut c, key) = axis.apply(base, v)?;
            c.sweep_axis = defaults.sweep_axis.clone();
            c.sweep_values = defaults.sweep_values.clone();
            Ok((c, key))
        })
        .collect::<Result<Vec<_>>>()?;
    points.sort_by(|a, b| a.1.total_cmp(&b.1));
    if points.windows(2).any(|w| w[0].1 == w[1].1) {
        return Err(CliError::invalid("sweep_values", "duplicate sweep value"));
    }

    let scale = base.model.scale;
    let train = base.train_dataset.load(scale, true)?;
    let val = base.val_dataset.load(scale, false)?;
    let bicubic = eval_dataset(&Upscaler::Bicubic, &val, None)?;
    progress(&format!("bicubic {}", bicubic.summary()));

    let out = &base.output_dir;
    create_dir(out)?;
    let mut rows = Vec::with_capacity(points.len());
    for (config, _) in &points {
        let label = axis.label(config);
        let id = run_id(config);
        let dir = out.join("runs").join(&id);
        let ck = match finished_run(&dir, config) {
            Some(ck) => {
                progress(&format!("{axis}={label}: reusing run {id}"));
                ck
            }
            None => {
                progress(&format!("{axis}={label}: training run {id} for {} iterations", config.train.iterations));
                let (summary, _) = train_on(config, &train, &dir, |l| progress(&format!("  {axis}={label} {l}")))?;
                Checkpoint { config: config.clone(), iteration: summary.iterations, params: summary.params }
            }
        };
        let report = eval_dataset(&Upscaler::Model(&ck), &val, None)?;
        let row = AblationRow {
            axis_value: label,
            psnr: report.mean_psnr,
            ssim: report.mean_ssim,
            bicubic_psnr: bicubic.mean_psnr,
            bicubic_ssim: bicubic.mean_ssim,
            iterations: config.train.iterations,
            param_count: ck.params.param_count(),
            run: id,
        };
        progress(&format!("{axis}={}: psnr {:.4} ssim {:.4} gain {:+.4} dB", row.axis_value, row.psnr, row.ssim, row.gain_db()));
        rows.push(row);
    }

    let csv_path = out.join(format!("ablate_{axis}.csv"));
    write_file(&csv_path, rows_to_csv(&rows))?;
    let iterations = base.train.iterations;
    let plot = LinePlot {
        title: format!("PSNR vs {axis} ({iterations} iterations, x{scale})"),
        x_label: axis.to_string(),
        y_label: "PSNR (dB)".into(),
        x_ticks: rows.iter().map(|r| r.axis_value.clone()).collect(),
        series: vec![
            Series { label: "model".into(), values: rows.iter().map(|r| r.psnr).collect(), dashed: false },
            Series { label: "bicubic".into(), values: rows.iter().map(|r| r.bicubic_psnr).collect(), dashed: true },
        ],
    };
    let plot_path = out.join(format!("ablate_{axis}.svg"));
    write_file(&plot_path, plot.to_svg())?;
    Ok(AblationResult { axis, rows, csv_path, plot_path })
}
