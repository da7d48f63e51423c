mod preview;
mod svg;

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use streamnet::analysis::{diversity_report, histogram_csv};
use streamnet::config::KEYS;
use streamnet::io::{csv::read_log, load_checkpoint, write_atomic};
use streamnet::train::{cell_csv_path, summary_csv, sweep, CellOutcome, ExperimentConfig, SweepOptions};
use streamnet::{Dataset, Error, RunConfig};

#[derive(Parser)]
#[command(name = "streamnet", version, about = "Train and analyse multi-stream CNNs over intensity slices")]
#[command(after_help = config_help())]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// Run configuration file (`key = value` lines)
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set noise_ratio=0.5` (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration; writes the log CSV, final checkpoint and config echo
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Run the architecture x noise x seed matrix and write a summary CSV
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Print the cells without training
        #[arg(long)]
        dry_run: bool,
    },
    /// KL divergence of first-layer weights for a set of checkpoints
    Analyze {
        #[arg(required = true)]
        checkpoints: Vec<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Render training-log or histogram CSVs as an SVG chart
    Plot {
        #[arg(required = true)]
        csvs: Vec<PathBuf>,
        /// Output SVG file
        #[arg(long, short)]
        out: PathBuf,
        /// Log column to plot against epoch
        #[arg(long, value_enum, default_value = "noisy")]
        metric: Metric,
        /// Histogram channel to plot (`0`, `1`, `2` or `pooled`)
        #[arg(long, default_value = "pooled")]
        channel: String,
        #[arg(long)]
        title: Option<String>,
    },
    /// Write PPM images of each intensity slice and of noise-corrupted copies
    SlicePreview {
        /// Input image (PPM/PGM)
        image: PathBuf,
        #[arg(long, default_value_t = 10)]
        slices: usize,
        /// Comma-separated noise ratios
        #[arg(long, default_value = "0.0,0.5,0.9", value_delimiter = ',')]
        noise: Vec<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory
        #[arg(long, short)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Metric {
    Noisy,
    Clean,
    Loss,
}

fn config_help() -> String {
    let mut s = String::from("Config keys (file or --set):\n");
    for (k, default, doc) in KEYS {
        s.push_str(&format!("  {k:<27} {doc} [default: {default}]\n"));
    }
    s.push_str("\nEnvironment: STREAMNET_THREADS sets the worker thread count (default: logical cores).\n");
    s.push_str("Exit codes: 0 success, 1 runtime failure, 2 configuration error.");
    s
}

/// Marks errors that should exit with code 2.
#[derive(Debug)]
struct ConfigError(String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn load_config(args: &ConfigArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
    .map_err(config_or_runtime)?;
    cfg.apply_overrides(&args.overrides).map_err(config_or_runtime)?;
    Ok(cfg)
}

fn config_or_runtime(e: Error) -> anyhow::Error {
    match e {
        Error::Config { .. } => ConfigError(e.to_string()).into(),
        other => other.into(),
    }
}

/// Train set, test set, class count and `(c, h, w)` image shape.
type Loaded = (Dataset, Dataset, usize, (usize, usize, usize));

fn datasets(cfg: &RunConfig) -> Result<Loaded> {
    let (train, test) = cfg.load_datasets().map_err(config_or_runtime)?;
    let shape = train.image_shape().ok_or(Error::EmptyDataset)?;
    if test.image_shape() != Some(shape) {
        bail!("train and test images differ in shape");
    }
    let n_classes = train.n_classes;
    Ok((train, test, n_classes, shape))
}

fn echo_config(cfg: &RunConfig, dir: &Path) -> Result<()> {
    write_atomic(&dir.join("config.txt"), cfg.to_text().as_bytes())?;
    Ok(())
}

fn report(outcomes: &[CellOutcome]) -> bool {
    let mut ok = true;
    for o in outcomes {
        match &o.result {
            Ok(log) => {
                let (clean, noisy) = log.final_accuracy(o.config.final_window);
                println!("{} seed {}: clean {clean:.4} noisy {noisy:.4}", o.tag(), o.config.seed);
            }
            Err(e) => {
                ok = false;
                eprintln!("{} seed {}: failed: {e}", o.tag(), o.config.seed);
            }
        }
    }
    ok
}

fn cmd_train(args: &ConfigArgs) -> Result<()> {
    let cfg = load_config(args)?;
    let (train, test, n_classes, shape) = datasets(&cfg)?;
    let spec = cfg
        .network_spec(cfg.architecture()?, n_classes, shape)
        .map_err(config_or_runtime)?;
    let exp = cfg.experiment(spec, cfg.dataset_name()).map_err(config_or_runtime)?;
    let mut opts = cfg.sweep_options()?;
    opts.workers = 1;
    echo_config(&cfg, &cfg.out_dir())?;
    let outcomes = sweep(&[exp], &train, &test, &opts);
    if !report(&outcomes) {
        bail!("training failed");
    }
    println!("wrote {}", cell_csv_path(&cfg.out_dir(), &outcomes[0].config).display());
    Ok(())
}

fn cmd_sweep(args: &ConfigArgs, dry_run: bool) -> Result<()> {
    let cfg = load_config(args)?;
    let (cells, data): (Vec<ExperimentConfig>, Option<(Dataset, Dataset)>) = if dry_run {
        // shapes only matter for validation; the listing does not load data
        (cfg.sweep_cells(10, (3, 32, 32)).map_err(config_or_runtime)?, None)
    } else {
        let (train, test, n_classes, shape) = datasets(&cfg)?;
        (
            cfg.sweep_cells(n_classes, shape).map_err(config_or_runtime)?,
            Some((train, test)),
        )
    };
    let Some((train, test)) = data else {
        for c in &cells {
            println!("{}\t{}\tseed {}", c.tag(), c.network.vertex, c.seed);
        }
        println!("{} cells", cells.len());
        return Ok(());
    };
    let opts: SweepOptions = cfg.sweep_options()?;
    let out = cfg.out_dir();
    echo_config(&cfg, &out)?;
    let outcomes = sweep(&cells, &train, &test, &opts);
    write_atomic(&out.join("summary.csv"), summary_csv(&outcomes).as_bytes())?;
    println!("wrote {}", out.join("summary.csv").display());
    if !report(&outcomes) {
        bail!("{} of {} cells failed", outcomes.iter().filter(|o| o.result.is_err()).count(), outcomes.len());
    }
    Ok(())
}

fn cmd_analyze(checkpoints: &[PathBuf], args: &ConfigArgs) -> Result<()> {
    let cfg = load_config(args)?;
    let opts = cfg.analysis_options().map_err(config_or_runtime)?;
    let mut tags = BTreeSet::new();
    let mut nets = Vec::new();
    for p in checkpoints {
        let ckpt = load_checkpoint(p)?;
        let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or("net").to_string();
        let mut tag = stem.clone();
        let mut k = 2;
        while !tags.insert(tag.clone()) {
            tag = format!("{stem}#{k}");
            k += 1;
        }
        nets.push((tag, ckpt.network));
    }
    let refs: Vec<(String, &streamnet::Network)> = nets.iter().map(|(t, n)| (t.clone(), n)).collect();
    let report = diversity_report(&refs, opts)?;
    let out = cfg.out_dir();
    write_atomic(&out.join("kl_report.csv"), report.to_csv().as_bytes())?;
    for (tag, net) in &nets {
        write_atomic(&out.join(format!("{tag}_hist.csv")), histogram_csv(net, &report)?.as_bytes())?;
    }
    print!("{}", report.to_csv());
    println!("wrote {}", out.join("kl_report.csv").display());
    Ok(())
}

/// Legend tag from a `{dataset}_{tag}_{seed}` file name.
fn legend_tag(path: &Path) -> String {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("series");
    match (stem.find("noise_"), stem.rfind('_')) {
        (Some(a), Some(b)) if b > a + 6 => format!("{} (seed {})", &stem[a..b], &stem[b + 1..]),
        _ => stem.to_string(),
    }
}

fn first_line(path: &Path) -> Result<String> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(text.lines().next().unwrap_or("").trim().to_string())
}

fn read_histogram(path: &Path, channel: &str) -> Result<svg::Bars> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut edges = Vec::new();
    let mut counts = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            anyhow!("{}: line {line}: {e}", path.display())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 6 {
            bail!("{}: line {line}: expected 6 fields, found {}", path.display(), rec.len());
        }
        if &rec[0] != channel || !rec[1].is_empty() {
            continue;
        }
        let num = |i: usize| -> Result<f64> {
            rec[i]
                .trim()
                .parse()
                .map_err(|_| anyhow!("{}: line {line}: `{}` is not a number", path.display(), &rec[i]))
        };
        if edges.is_empty() {
            edges.push(num(3)?);
        }
        edges.push(num(4)?);
        counts.push(num(5)? as u64);
    }
    if counts.is_empty() {
        bail!("{}: no whole-network rows for channel `{channel}`", path.display());
    }
    Ok(svg::Bars {
        label: path.file_stem().and_then(|s| s.to_str()).unwrap_or("").to_string(),
        edges,
        counts,
    })
}

fn cmd_plot(csvs: &[PathBuf], out: &Path, metric: Metric, channel: &str, title: Option<&str>) -> Result<()> {
    let headers = csvs.iter().map(|p| first_line(p)).collect::<Result<Vec<_>>>()?;
    let is_hist = |h: &String| h.starts_with("channel,stream,bin");
    let svg = if headers.iter().all(is_hist) {
        let panels = csvs.iter().map(|p| read_histogram(p, channel)).collect::<Result<Vec<_>>>()?;
        svg::histogram_chart(title.unwrap_or("First-layer weight distribution"), &panels).map_err(|e| anyhow!(e))?
    } else if headers.iter().any(is_hist) {
        bail!("cannot mix training logs and histograms in one chart");
    } else {
        let mut series = Vec::new();
        for p in csvs {
            let log = read_log(p, legend_tag(p))?;
            let points = log
                .rows
                .iter()
                .map(|r| {
                    let y = match metric {
                        Metric::Noisy => r.noisy_acc,
                        Metric::Clean => r.clean_acc,
                        Metric::Loss => r.train_loss,
                    };
                    (r.epoch as f64, y)
                })
                .collect();
            series.push(svg::Series { label: log.tag, points });
        }
        let y_label = match metric {
            Metric::Noisy => "noisy test accuracy",
            Metric::Clean => "clean test accuracy",
            Metric::Loss => "training loss",
        };
        svg::line_chart(title.unwrap_or(y_label), "epoch", y_label, &series).map_err(|e| anyhow!(e))?
    };
    write_atomic(out, svg.as_bytes())?;
    println!("wrote {}", out.display());
    Ok(())
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("STREAMNET_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| ConfigError(format!("STREAMNET_THREADS must be a positive integer, got `{v}`")))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    init_threads()?;
    match cli.command {
        Command::Train { cfg } => cmd_train(&cfg),
        Command::Sweep { cfg, dry_run } => cmd_sweep(&cfg, dry_run),
        Command::Analyze { checkpoints, cfg } => cmd_analyze(&checkpoints, &cfg),
        Command::Plot {
            csvs,
            out,
            metric,
            channel,
            title,
        } => cmd_plot(&csvs, &out, metric, &channel, title.as_deref()),
        Command::SlicePreview {
            image,
            slices,
            noise,
            seed,
            out,
        } => {
            let written = preview::slice_preview(&image, slices, &noise, seed, &out)?;
            println!("wrote {} files to {}", written.len(), out.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
