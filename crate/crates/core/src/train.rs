//! Training runs, clean/noisy evaluation and experiment sweeps.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::arch::{build, Mode, Network, NetworkSpec, Vertex};
pub use crate::dataset::{Dataset, Split};
use crate::error::{Error, Result};
use crate::io::{self, Checkpoint};
use crate::ops::{argmax_rows, softmax_cross_entropy};
use crate::optim::{adam_init, adam_step, AdamConfig, AdamState};
use crate::rng::{labeled_seed, seeded, sub_seed};
use crate::slicing::{corrupt_indexed, NoiseMode, NoiseSpec};
use crate::tensor::Tensor;

/// Images per forward pass during evaluation.
const EVAL_BATCH: usize = 100;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TrainNoise {
    /// Train on clean images, evaluate on clean and corrupted test images.
    #[default]
    Clean,
    /// Corrupt training images too, with a fresh mask every epoch.
    Noisy,
}

impl FromStr for TrainNoise {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "clean" => Ok(TrainNoise::Clean),
            "noisy" => Ok(TrainNoise::Noisy),
            other => Err(format!("expected clean or noisy, got `{other}`")),
        }
    }
}

impl fmt::Display for TrainNoise {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrainNoise::Clean => "clean",
            TrainNoise::Noisy => "noisy",
        })
    }
}

/// One cell of the architecture x noise x seed matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub network: NetworkSpec,
    /// Name used in output file names.
    pub dataset: String,
    pub noise_ratio: f64,
    pub noise_mode: NoiseMode,
    pub train_noise: TrainNoise,
    pub epochs: usize,
    pub batch_size: usize,
    /// Evaluate after every `eval_every` epochs (and always after the last).
    pub eval_every: usize,
    /// No evaluation before this epoch apart from the initial row and the last epoch.
    pub eval_from: usize,
    /// Seeds shuffling and noise masks. The network seed lives in `network.seed`.
    pub seed: u64,
    pub adam: AdamConfig,
    /// Record elapsed milliseconds in the log; zeros otherwise.
    pub log_wall_time: bool,
    /// Evaluation points averaged into the final accuracy.
    pub final_window: usize,
}

impl ExperimentConfig {
    pub fn new(network: NetworkSpec, dataset: impl Into<String>) -> Self {
        let seed = network.seed;
        ExperimentConfig {
            network,
            dataset: dataset.into(),
            noise_ratio: 0.5,
            noise_mode: NoiseMode::Location,
            train_noise: TrainNoise::Clean,
            epochs: 30,
            batch_size: 32,
            eval_every: 1,
            eval_from: 0,
            seed,
            adam: AdamConfig::default(),
            log_wall_time: true,
            final_window: 10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        let tenths = self.noise_ratio * 10.0;
        if !(0.0..=9.0).contains(&tenths) || (tenths - tenths.round()).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "noise ratio {} is not one of 0.0, 0.1, ..., 0.9",
                self.noise_ratio
            )));
        }
        if self.batch_size == 0 || self.eval_every == 0 || self.final_window == 0 {
            return Err(Error::InvalidArgument(
                "batch_size, eval_every and final_window must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn tag(&self) -> String {
        experiment_tag(&self.network, self.noise_ratio, &self.adam)
    }

    /// File stem `{dataset}_{tag}_{seed}`.
    pub fn file_stem(&self) -> String {
        format!("{}_{}_{}", self.dataset, self.tag(), self.seed)
    }

    /// Seed of the evaluation noise masks; shared by every architecture under one sweep seed.
    pub fn test_noise_seed(&self) -> u64 {
        labeled_seed(self.seed, "test-noise")
    }

    /// Same configuration with a different noise ratio.
    pub fn with_noise(&self, ratio: f64) -> Self {
        ExperimentConfig {
            noise_ratio: ratio,
            ..self.clone()
        }
    }
}

/// Architecture part of the legend tag: stream count plus a vertex marker
/// for the variants that are neither the simple nor the streaming network.
pub fn arch_tag(spec: &NetworkSpec, adam: &AdamConfig) -> String {
    let slices = spec.slice_spec.as_ref().map_or(0, |s| s.len());
    let mut tag = match spec.vertex {
        Vertex::V1 | Vertex::V8 => format!("{}", spec.n_streams),
        Vertex::V5 => format!("1_wide{}", spec.width_multiplier),
        Vertex::V6 => format!("{}_same", spec.n_streams),
        Vertex::V7 => format!("1_slice{}_wide{}", slices, spec.width_multiplier),
    };
    if *adam == AdamConfig::conventional() {
        tag.push_str("_cb");
    } else if (adam.beta1, adam.beta2) != (AdamConfig::default().beta1, AdamConfig::default().beta2) {
        tag.push_str(&format!("_b{}_{}", adam.beta1, adam.beta2));
    }
    tag
}

/// `noise_{ratio*10:02}_{arch}`, e.g. `noise_05_5` for a 5-stream streaming network at ratio 0.5.
pub fn experiment_tag(spec: &NetworkSpec, ratio: f64, adam: &AdamConfig) -> String {
    format!("noise_{:02}_{}", (ratio * 10.0).round() as u32, arch_tag(spec, adam))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub clean_acc: f64,
    pub noisy_acc: f64,
    pub wall_ms: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingLog {
    pub tag: String,
    pub rows: Vec<LogRow>,
}

impl TrainingLog {
    pub const HEADER: &'static str = "epoch,train_loss,clean_acc,noisy_acc,wall_ms";

    /// CSV text with [`Self::HEADER`]; floats print in shortest round-trip form.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                r.epoch, r.train_loss, r.clean_acc, r.noisy_acc, r.wall_ms
            ));
        }
        s
    }

    /// Mean `(clean, noisy)` accuracy over the last `window` rows.
    pub fn final_accuracy(&self, window: usize) -> (f64, f64) {
        let start = self.rows.len().saturating_sub(window);
        let tail = &self.rows[start..];
        let n = tail.len().max(1) as f64;
        (
            tail.iter().map(|r| r.clean_acc).sum::<f64>() / n,
            tail.iter().map(|r| r.noisy_acc).sum::<f64>() / n,
        )
    }
}

fn predict(net: &Network, images: &[Tensor]) -> Result<Vec<usize>> {
    let mut preds = Vec::with_capacity(images.len());
    for chunk in images.chunks(EVAL_BATCH) {
        let batch = Tensor::stack(chunk)?;
        preds.extend(argmax_rows(&net.logits(&batch)?));
    }
    Ok(preds)
}

fn accuracy(preds: &[usize], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    preds.iter().zip(labels).filter(|(p, l)| p == l).count() as f64 / labels.len() as f64
}

/// Test images corrupted with per-image masks keyed by `(noise.seed, index)`.
pub fn corrupted_images(data: &Dataset, noise: &NoiseSpec, mode: NoiseMode) -> Vec<Tensor> {
    data.images()
        .iter()
        .enumerate()
        .map(|(i, img)| corrupt_indexed(img, noise, mode, i as u64))
        .collect()
}

/// Top-1 accuracy on `data` after zero-noise corruption (location mode).
pub fn evaluate(net: &Network, data: &Dataset, noise: &NoiseSpec) -> Result<f64> {
    evaluate_with(net, data, noise, NoiseMode::Location)
}

pub fn evaluate_with(net: &Network, data: &Dataset, noise: &NoiseSpec, mode: NoiseMode) -> Result<f64> {
    let images = if noise.ratio > 0.0 {
        corrupted_images(data, noise, mode)
    } else {
        data.images().to_vec()
    };
    Ok(accuracy(&predict(net, &images)?, data.labels()))
}

/// Mean cross-entropy of `net` over a dataset.
fn mean_loss(net: &Network, data: &Dataset) -> Result<f64> {
    let mut total = 0.0;
    for (i, chunk) in data.images().chunks(EVAL_BATCH).enumerate() {
        let batch = Tensor::stack(chunk)?;
        let labels = &data.labels()[i * EVAL_BATCH..i * EVAL_BATCH + chunk.len()];
        total += softmax_cross_entropy(&net.logits(&batch)?, labels)?.loss * chunk.len() as f64;
    }
    Ok(total / data.len() as f64)
}

/// A training run in progress. It evaluates one clean test set and one
/// corrupted test set per requested noise ratio, producing one log each;
/// the trained weights do not depend on the evaluation ratios.
pub struct TrainRun {
    pub config: ExperimentConfig,
    pub net: Network,
    pub adam: AdamState,
    pub epochs_done: usize,
    pub ratios: Vec<f64>,
    pub logs: Vec<TrainingLog>,
    noisy_tests: Vec<Vec<Tensor>>,
    started: Instant,
    elapsed_before: u64,
}

impl TrainRun {
    /// Fresh network and optimizer; records the initial evaluation row.
    pub fn start(config: &ExperimentConfig, ratios: &[f64], train: &Dataset, test: &Dataset) -> Result<Self> {
        config.validate()?;
        let net = build(&config.network)?;
        let adam = adam_init(&net, config.adam);
        let mut run = Self::assemble(config, ratios, net, adam, 0, Vec::new(), 0, test)?;
        run.evaluate_point(0, None, train, test)?;
        Ok(run)
    }

    /// Continues from a checkpoint written by [`TrainRun::checkpoint`].
    pub fn resume(config: &ExperimentConfig, ratios: &[f64], ckpt: Checkpoint, test: &Dataset) -> Result<Self> {
        config.validate()?;
        if ckpt.network.spec() != &config.network {
            return Err(Error::InvalidArgument("checkpoint network spec differs from the config".into()));
        }
        let progress = ckpt
            .progress
            .ok_or_else(|| Error::InvalidArgument("checkpoint carries no training progress".into()))?;
        let adam = ckpt
            .adam
            .ok_or_else(|| Error::InvalidArgument("checkpoint carries no optimizer state".into()))?;
        let tags: Vec<String> = ratios.iter().map(|&r| config.with_noise(r).tag()).collect();
        let logs_by_tag: BTreeMap<String, TrainingLog> =
            progress.logs.into_iter().map(|l| (l.tag.clone(), l)).collect();
        let logs = tags
            .iter()
            .map(|t| {
                logs_by_tag
                    .get(t)
                    .cloned()
                    .ok_or_else(|| Error::InvalidArgument(format!("checkpoint has no log for `{t}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        let elapsed = logs.first().and_then(|l| l.rows.last()).map_or(0, |r| r.wall_ms);
        Self::assemble(config, ratios, ckpt.network, adam, progress.epochs_done, logs, elapsed, test)
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        config: &ExperimentConfig,
        ratios: &[f64],
        net: Network,
        adam: AdamState,
        epochs_done: usize,
        logs: Vec<TrainingLog>,
        elapsed_before: u64,
        test: &Dataset,
    ) -> Result<Self> {
        if test.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let noise_seed = config.test_noise_seed();
        let noisy_tests = ratios
            .iter()
            .map(|&r| Ok(corrupted_images(test, &NoiseSpec::new(r, noise_seed)?, config.noise_mode)))
            .collect::<Result<Vec<_>>>()?;
        let logs = if logs.is_empty() {
            ratios
                .iter()
                .map(|&r| TrainingLog {
                    tag: config.with_noise(r).tag(),
                    rows: Vec::new(),
                })
                .collect()
        } else {
            logs
        };
        Ok(TrainRun {
            config: config.clone(),
            net,
            adam,
            epochs_done,
            ratios: ratios.to_vec(),
            logs,
            noisy_tests,
            started: Instant::now(),
            elapsed_before,
        })
    }

    pub fn is_finished(&self) -> bool {
        self.epochs_done >= self.config.epochs
    }

    fn wall_ms(&self) -> u64 {
        if self.config.log_wall_time {
            self.elapsed_before + self.started.elapsed().as_millis() as u64
        } else {
            0
        }
    }

    fn evaluate_point(&mut self, epoch: usize, train_loss: Option<f64>, train: &Dataset, test: &Dataset) -> Result<()> {
        let train_loss = match train_loss {
            Some(l) => l,
            None => mean_loss(&self.net, train)?,
        };
        let clean = accuracy(&predict(&self.net, test.images())?, test.labels());
        let mut noisy = Vec::with_capacity(self.ratios.len());
        for (r, images) in self.ratios.iter().zip(&self.noisy_tests) {
            noisy.push(if *r > 0.0 {
                accuracy(&predict(&self.net, images)?, test.labels())
            } else {
                clean
            });
        }
        let wall_ms = self.wall_ms();
        for (log, noisy_acc) in self.logs.iter_mut().zip(noisy) {
            log.rows.push(LogRow {
                epoch,
                train_loss,
                clean_acc: clean,
                noisy_acc,
                wall_ms,
            });
        }
        Ok(())
    }

    /// One pass over the shuffled training set, then evaluation if due.
    pub fn run_epoch(&mut self, train: &Dataset, test: &Dataset) -> Result<()> {
        if train.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let epoch = self.epochs_done;
        let cfg = &self.config;
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut seeded(sub_seed(labeled_seed(cfg.seed, "shuffle"), epoch as u64)));
        let train_noise = NoiseSpec::new(cfg.noise_ratio, sub_seed(labeled_seed(cfg.seed, "train-noise"), epoch as u64))?;
        let mut loss_sum = 0.0;
        for idx in order.chunks(cfg.batch_size) {
            let (mut batch, labels) = train.batch(idx)?;
            if cfg.train_noise == TrainNoise::Noisy && train_noise.ratio > 0.0 {
                let items: Vec<Tensor> = idx
                    .iter()
                    .map(|&i| corrupt_indexed(&train.images()[i], &train_noise, cfg.noise_mode, i as u64))
                    .collect();
                batch = Tensor::stack(&items)?;
            }
            let pass = self.net.forward(&batch, Mode::Train)?;
            let ce = softmax_cross_entropy(&pass.logits, &labels)?;
            self.net.zero_grad();
            self.net.backward(pass.cache.expect("train mode"), &ce.grad_logits)?;
            adam_step(&mut self.adam, &mut self.net)?;
            loss_sum += ce.loss * idx.len() as f64;
        }
        self.epochs_done += 1;
        let done = self.epochs_done;
        let due = done.is_multiple_of(self.config.eval_every) && done >= self.config.eval_from;
        if due || done == self.config.epochs {
            self.evaluate_point(done, Some(loss_sum / train.len() as f64), train, test)?;
        }
        Ok(())
    }

    /// Snapshot for [`TrainRun::resume`].
    pub fn checkpoint(&self) -> Checkpoint {
        let mut net = self.net.clone();
        net.zero_grad();
        Checkpoint {
            network: net,
            adam: Some(self.adam.clone()),
            seeds: vec![self.config.network.seed, self.config.seed],
            progress: Some(io::checkpoint::Progress {
                epochs_done: self.epochs_done,
                logs: self.logs.clone(),
            }),
        }
    }

    /// Trains to the configured epoch count, calling `after_epoch` after each epoch.
    pub fn run_to_end(
        &mut self,
        train: &Dataset,
        test: &Dataset,
        mut after_epoch: impl FnMut(&TrainRun) -> Result<()>,
    ) -> Result<()> {
        while !self.is_finished() {
            self.run_epoch(train, test)?;
            after_epoch(self)?;
        }
        Ok(())
    }
}

/// Trains one configuration and returns the network and its log.
pub fn train(config: &ExperimentConfig, train_set: &Dataset, test_set: &Dataset) -> Result<(Network, TrainingLog)> {
    let mut run = TrainRun::start(config, &[config.noise_ratio], train_set, test_set)?;
    run.run_to_end(train_set, test_set, |_| Ok(()))?;
    let log = run.logs.pop().expect("one ratio");
    Ok((run.net, log))
}

#[derive(Clone, Debug)]
pub struct SweepOptions {
    /// Concurrent training runs.
    pub workers: usize,
    /// Where CSVs and checkpoints go; nothing is written when `None`.
    pub out_dir: Option<PathBuf>,
    /// Epochs between resumable checkpoints, 0 to disable.
    pub checkpoint_every: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            workers: 1,
            out_dir: None,
            checkpoint_every: 1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct CellOutcome {
    pub config: ExperimentConfig,
    pub result: std::result::Result<TrainingLog, String>,
}

impl CellOutcome {
    pub fn tag(&self) -> String {
        self.config.tag()
    }
}

/// Cells that can share one training run: everything but the evaluation
/// noise ratio agrees and training images are clean.
fn group_cells(cells: &[ExperimentConfig]) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, c) in cells.iter().enumerate() {
        let shared = c.train_noise == TrainNoise::Clean;
        let found = groups.iter_mut().find(|g| {
            let head = &cells[g[0]];
            shared
                && head.train_noise == TrainNoise::Clean
                && head.with_noise(c.noise_ratio) == *c
                && g.iter().all(|&j| cells[j].noise_ratio != c.noise_ratio)
        });
        match found {
            Some(g) => g.push(i),
            None => groups.push(vec![i]),
        }
    }
    groups
}

/// File stem of a group's checkpoint: `{dataset}_net_{arch}_{seed}` (plus the ratio for noisy training).
pub fn group_stem(config: &ExperimentConfig) -> String {
    let arch = arch_tag(&config.network, &config.adam);
    match config.train_noise {
        TrainNoise::Clean => format!("{}_net_{}_{}", config.dataset, arch, config.seed),
        TrainNoise::Noisy => format!(
            "{}_net_{}_trainnoise{:02}_{}",
            config.dataset,
            arch,
            (config.noise_ratio * 10.0).round() as u32,
            config.seed
        ),
    }
}

pub fn final_checkpoint_path(dir: &Path, config: &ExperimentConfig) -> PathBuf {
    dir.join(format!("{}.ckpt", group_stem(config)))
}

fn partial_checkpoint_path(dir: &Path, config: &ExperimentConfig) -> PathBuf {
    dir.join(format!("{}.partial.ckpt", group_stem(config)))
}

pub fn cell_csv_path(dir: &Path, config: &ExperimentConfig) -> PathBuf {
    dir.join(format!("{}.csv", config.file_stem()))
}

fn run_group(
    cells: &[&ExperimentConfig],
    train_set: &Dataset,
    test_set: &Dataset,
    opts: &SweepOptions,
) -> Result<Vec<TrainingLog>> {
    for c in cells {
        c.validate()?;
    }
    let head = cells[0];
    let ratios: Vec<f64> = cells.iter().map(|c| c.noise_ratio).collect();

    if let Some(dir) = &opts.out_dir {
        if final_checkpoint_path(dir, head).exists() {
            let done: Option<Vec<TrainingLog>> = cells
                .iter()
                .map(|c| io::csv::read_log(&cell_csv_path(dir, c), c.tag()).ok())
                .collect();
            if let Some(logs) = done {
                return Ok(logs);
            }
        }
    }

    let mut run = match &opts.out_dir {
        Some(dir) if partial_checkpoint_path(dir, head).exists() => {
            let ckpt = io::load_checkpoint(&partial_checkpoint_path(dir, head))?;
            TrainRun::resume(head, &ratios, ckpt, test_set)?
        }
        _ => TrainRun::start(head, &ratios, train_set, test_set)?,
    };
    run.run_to_end(train_set, test_set, |r| {
        if let (Some(dir), true) = (&opts.out_dir, opts.checkpoint_every > 0) {
            if r.epochs_done % opts.checkpoint_every == 0 && !r.is_finished() {
                r.checkpoint().save(&partial_checkpoint_path(dir, head))?;
            }
        }
        Ok(())
    })?;

    if let Some(dir) = &opts.out_dir {
        for (c, log) in cells.iter().zip(&run.logs) {
            io::write_atomic(&cell_csv_path(dir, c), log.to_csv().as_bytes())?;
        }
        run.checkpoint().save(&final_checkpoint_path(dir, head))?;
        let partial = partial_checkpoint_path(dir, head);
        if partial.exists() {
            std::fs::remove_file(&partial).map_err(|e| Error::io(&partial, e))?;
        }
    }
    Ok(run.logs)
}

/// Runs every cell, sharing training between cells that differ only in the
/// evaluation noise ratio. A failing cell is reported in its outcome and the
/// sweep carries on. Outcomes are sorted by `(tag, seed)`.
pub fn sweep(cells: &[ExperimentConfig], train_set: &Dataset, test_set: &Dataset, opts: &SweepOptions) -> Vec<CellOutcome> {
    let groups = group_cells(cells);
    let work = || -> Vec<CellOutcome> {
        groups
            .par_iter()
            .flat_map_iter(|g| {
                let members: Vec<&ExperimentConfig> = g.iter().map(|&i| &cells[i]).collect();
                let result = run_group(&members, train_set, test_set, opts);
                let outcomes: Vec<CellOutcome> = match result {
                    Ok(logs) => members
                        .iter()
                        .zip(logs)
                        .map(|(c, log)| CellOutcome {
                            config: (*c).clone(),
                            result: Ok(log),
                        })
                        .collect(),
                    Err(e) => members
                        .iter()
                        .map(|c| CellOutcome {
                            config: (*c).clone(),
                            result: Err(e.to_string()),
                        })
                        .collect(),
                };
                outcomes
            })
            .collect()
    };
    let mut out = match rayon::ThreadPoolBuilder::new().num_threads(opts.workers.max(1)).build() {
        Ok(pool) => pool.install(work),
        Err(_) => work(),
    };
    out.sort_by_key(|o| (o.tag(), o.config.seed));
    out
}

/// Combined summary CSV: one row per cell with the final-window accuracies.
pub fn summary_csv(outcomes: &[CellOutcome]) -> String {
    let mut s = String::from("tag,seed,vertex,n_streams,noise_ratio,final_clean_acc,final_noisy_acc,status\n");
    for o in outcomes {
        let c = &o.config;
        let (clean, noisy, status) = match &o.result {
            Ok(log) => {
                let (cl, no) = log.final_accuracy(c.final_window);
                (cl.to_string(), no.to_string(), "ok".to_string())
            }
            Err(e) => (String::new(), String::new(), format!("\"failed: {}\"", e.replace('"', "'"))),
        };
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            o.tag(),
            c.seed,
            c.network.vertex,
            c.network.n_streams,
            c.noise_ratio,
            clean,
            noisy,
            status
        ));
    }
    s
}
