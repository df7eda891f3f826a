//! `train`, `eval` and `info`, plus the helpers the other commands share.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use gmfn::imaging::{save_image, Dataset, Domain, Image, SrPair};
use gmfn::metrics::{bicubic_upscale, evaluate, EvalReport};
use gmfn::model::{forward_unroll, ParamStore, Unrolled};
use gmfn::tensor::{Backend, Eager, EagerValue};
use gmfn::train::{init_params, train_loop, TrainEvent, LOG_HEADER};

use crate::checkpoint::{checkpoint_path, Checkpoint};
use crate::config::{preset, DataSource, RunConfig};
use crate::error::{CliError, Result};

pub const LOG_FILE: &str = "train_log.csv";
pub const LATEST_CHECKPOINT: &str = "latest.gmfn";

/// Preset (or the default final configuration), then the config file.
pub fn resolve_config(preset_name: Option<&str>, config: Option<&Path>) -> Result<RunConfig> {
    let base = match preset_name {
        Some(p) => preset(p)?,
        None => RunConfig::default(),
    };
    match config {
        Some(path) => RunConfig::load(path, base),
        None => Ok(base),
    }
}

pub(crate) fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub(crate) fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn to_rgb(img: &Image) -> Image {
    if img.channels() == 3 {
        return img.clone();
    }
    Image::from_fn(3, img.height(), img.width(), img.domain(), |_, y, x| img.at(0, y, x)).expect("valid dims")
}

/// Full forward pass on one LR image, keeping every intermediate.
pub fn run_network(config: &RunConfig, params: &ParamStore<f32>, lr: &Image) -> Result<(Eager<f32>, Unrolled<EagerValue<f32>>)> {
    let topo = config.topology()?;
    let mut be = Eager::new(params.iter());
    let x = be.input(to_rgb(lr).to_tensor::<f32>());
    let out = forward_unroll(&mut be, &config.model, &topo, &x)?;
    Ok((be, out))
}

/// SR image from the last time step, with as many channels as `lr`.
pub fn super_resolve(config: &RunConfig, params: &ParamStore<f32>, lr: &Image) -> Result<Image> {
    let (be, out) = run_network(config, params, lr)?;
    let last = out.outputs.last().ok_or_else(|| CliError::invalid("steps", "network produced no output"))?;
    let sr = Image::from_tensor(be.value(last), 0)?;
    if lr.channels() == 3 {
        return Ok(sr);
    }
    let gray = Image::from_fn(1, sr.height(), sr.width(), sr.domain(), |_, y, x| {
        (sr.at(0, y, x) + sr.at(1, y, x) + sr.at(2, y, x)) / 3.0
    })?;
    Ok(gray)
}

#[derive(Clone, Debug)]
pub struct TrainSummary {
    pub output_dir: PathBuf,
    pub iterations: u64,
    pub final_loss: f64,
    pub checkpoints: Vec<PathBuf>,
    pub params: ParamStore<f32>,
}

/// Trains from He initialization, writing `config.txt`, the CSV loss log and
/// checkpoints (each also copied to `latest.gmfn`) under the output dir.
pub fn cmd_train(config: &RunConfig, progress: impl FnMut(&str)) -> Result<TrainSummary> {
    config.validate()?;
    let dataset = config.train_dataset.load(config.model.scale, true)?;
    train_on(config, &dataset, &config.output_dir, progress).map(|(summary, _)| summary)
}

/// Trains on an already loaded dataset into `dir`. Also returns the log.
pub(crate) fn train_on(
    config: &RunConfig,
    dataset: &Dataset,
    dir: &Path,
    mut progress: impl FnMut(&str),
) -> Result<(TrainSummary, String)> {
    config.validate()?;
    let topo = config.topology()?;
    create_dir(dir)?;
    write_file(&dir.join("config.txt"), config.to_text())?;

    let log_path = dir.join(LOG_FILE);
    let mut log = BufWriter::new(File::create(&log_path).map_err(|e| CliError::io(&log_path, e))?);
    let mut log_text = format!("{LOG_HEADER}\n");
    let mut checkpoints = Vec::new();
    let mut last_loss = f64::NAN;
    let mut window = 0.0;
    let report_every = (config.train.iterations / 20).max(1);
    let init = init_params::<f32>(&config.model, &topo, config.train.seed)?;

    let result = train_loop(&config.train, &config.model, &topo, dataset, init, |event| {
        match event {
            TrainEvent::Record(r) => {
                let line = r.csv_line();
                log_text.push_str(&line);
                log_text.push('\n');
                last_loss = r.loss;
                window += r.loss;
                if (r.iter + 1) % report_every == 0 {
                    progress(&format!("iter {} lr {:e} mean_loss {:.6}", r.iter + 1, r.lr, window / report_every as f64));
                    window = 0.0;
                }
            }
            TrainEvent::Checkpoint { iter, params } => {
                let ck = Checkpoint { config: config.clone(), iteration: iter, params: params.clone() };
                let bytes = ck.to_bytes();
                let path = checkpoint_path(dir, iter);
                std::fs::write(&path, &bytes).map_err(|e| gmfn::Error::Io { path: path.clone(), source: e })?;
                let latest = dir.join(LATEST_CHECKPOINT);
                std::fs::write(&latest, &bytes).map_err(|e| gmfn::Error::Io { path: latest, source: e })?;
                checkpoints.push(path);
            }
        }
        Ok(())
    });
    log.write_all(log_text.as_bytes()).and_then(|_| log.flush()).map_err(|e| CliError::io(&log_path, e))?;
    let outcome = result?;
    let summary = TrainSummary {
        output_dir: dir.to_path_buf(),
        iterations: config.train.iterations,
        final_loss: last_loss,
        checkpoints,
        params: outcome.params,
    };
    Ok((summary, log_text))
}

/// What `eval` scores.
pub enum Upscaler<'a> {
    Bicubic,
    Model(&'a Checkpoint),
}

/// Scores `dataset` with `upscaler`, saving SR images under `out/SR` when
/// `out` is given, plus `eval.csv` and `summary.txt`.
pub fn eval_dataset(upscaler: &Upscaler<'_>, dataset: &Dataset, out: Option<&Path>) -> Result<EvalReport> {
    let sr_dir = out.map(|o| o.join("SR"));
    if let Some(d) = &sr_dir {
        create_dir(d)?;
    }
    let report = evaluate(dataset, |name, pair: &SrPair| {
        let sr = match upscaler {
            Upscaler::Bicubic => bicubic_upscale(pair)?,
            Upscaler::Model(ck) => super_resolve(&ck.config, &ck.params, &pair.lr).map_err(|e| match e {
                CliError::Core(c) => c,
                other => gmfn::Error::Config(other.to_string()),
            })?,
        };
        if let Some(d) = &sr_dir {
            save_image(&sr.to_domain(Domain::Byte), d.join(format!("{name}.png")))?;
        }
        Ok(sr)
    })?;
    if let Some(o) = out {
        write_file(&o.join("eval.csv"), report.to_csv())?;
        write_file(&o.join("summary.txt"), format!("{}\n", report.summary()))?;
    }
    Ok(report)
}

/// `eval`: the scale comes from `--scale`, else from the checkpoint; the
/// dataset from `--dataset`, else the checkpoint's validation set.
pub fn cmd_eval(
    checkpoint: Option<&Checkpoint>,
    baseline: bool,
    dataset: Option<&DataSource>,
    scale: Option<usize>,
    out: &Path,
) -> Result<EvalReport> {
    let (upscaler, scale, source) = match (baseline, checkpoint) {
        (true, _) => {
            let scale = scale
                .or(checkpoint.map(|c| c.config.model.scale))
                .ok_or_else(|| CliError::Usage("--baseline bicubic needs --scale".into()))?;
            let source = dataset
                .cloned()
                .or(checkpoint.map(|c| c.config.val_dataset.clone()))
                .ok_or_else(|| CliError::Usage("--baseline bicubic needs --dataset".into()))?;
            (Upscaler::Bicubic, scale, source)
        }
        (false, Some(ck)) => {
            let own = ck.config.model.scale;
            if let Some(s) = scale.filter(|&s| s != own) {
                return Err(CliError::ScaleMismatch { checkpoint: own, requested: s });
            }
            (Upscaler::Model(ck), own, dataset.cloned().unwrap_or_else(|| ck.config.val_dataset.clone()))
        }
        (false, None) => return Err(CliError::Usage("eval needs --checkpoint or --baseline bicubic".into())),
    };
    let data = source.load(scale, false)?;
    create_dir(out)?;
    eval_dataset(&upscaler, &data, Some(out))
}

/// `info`: configuration, parameter count and per-module breakdown.
pub fn cmd_info(ck: &Checkpoint) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# checkpoint after {} iterations", ck.iteration);
    s.push_str(&ck.config.snapshot_text());
    let _ = writeln!(s, "param_count = {}", ck.params.param_count());
    let _ = writeln!(s, "tensors = {}", ck.params.len());
    let _ = writeln!(s, "checkpoint_bytes = {}", ck.to_bytes().len());
    for (module, n) in ck.params.breakdown() {
        let _ = writeln!(s, "params.{module} = {n}");
    }
    s
}
