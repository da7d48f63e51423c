//! Flat `key = value` run configuration shared by every command.
//!
//! Lines are `key = value`; `#` starts a comment; blank lines are ignored.
//! Unknown keys, repeated keys and unparsable values are errors naming the key.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::analysis::AnalysisOptions;
use crate::arch::{NetworkSpec, Padding, Vertex};
use crate::dataset::{Dataset, Split};
use crate::error::{Error, Result};
use crate::io::{load_cifar10, load_raw_dataset, synthetic};
use crate::optim::AdamConfig;
use crate::slicing::{make_slice_spec, NoiseMode, SliceMembership};
use crate::train::{ExperimentConfig, SweepOptions, TrainNoise};

/// Every recognised key with its default and a one-line description.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("dataset", "synthetic", "synthetic | cifar10 | raw"),
    ("data_dir", "", "directory with the CIFAR-10 binary batches"),
    ("train_path", "", "raw tensor dump with the training split"),
    ("test_path", "", "raw tensor dump with the test split"),
    ("train_subset", "0", "stratified training subset size, 0 keeps everything"),
    ("test_subset", "0", "stratified test subset size, 0 keeps everything"),
    ("subset_seed", "0", "seed of the stratified subsets"),
    ("synthetic_classes", "10", "synthetic set: number of classes"),
    ("synthetic_size", "16", "synthetic set: image height and width"),
    ("synthetic_train_per_class", "200", "synthetic set: training images per class"),
    ("synthetic_test_per_class", "100", "synthetic set: test images per class"),
    ("synthetic_seed", "0", "synthetic set: generator seed"),
    ("architecture", "v8", "v1 | v5 | v6 | v7 | v8, optionally with -N (streams, width or slices)"),
    ("n_streams", "5", "streams of v6/v8"),
    ("width_multiplier", "5", "filter multiplier of v5/v7"),
    ("n_slices", "5", "intensity slices of v7 (v8 uses one per stream)"),
    ("slice_membership", "per_channel", "per_channel | luminance"),
    ("base_filters", "32,64,128,256", "filters of conv stages 1 to 4 before the divisor"),
    ("conv5_filters", "0", "filters of the last conv stage, 0 = number of classes"),
    ("fc_hidden", "64", "width of the hidden dense layers"),
    ("fc_layers", "1", "hidden dense layers after concatenation"),
    ("filter_divisor", "4", "divides every entry of base_filters"),
    ("padding", "same", "same | valid"),
    ("noise_ratio", "0.5", "fraction of pixel locations zeroed at test time"),
    ("noise_mode", "location", "location | per_channel"),
    ("train_noise", "clean", "clean | noisy"),
    ("epochs", "30", "training epochs"),
    ("batch_size", "32", "mini-batch size"),
    ("eval_every", "1", "epochs between evaluations"),
    ("eval_from", "0", "first epoch evaluated after the initial row"),
    ("final_window", "10", "evaluation points averaged into the final accuracy"),
    ("seed", "0", "seed of initialization, shuffling and noise"),
    ("lr", "0.0001", "Adam learning rate"),
    ("beta1", "0.99", "Adam first-moment decay"),
    ("beta2", "0.9", "Adam second-moment decay"),
    ("adam_conventional_betas", "false", "use beta1 = 0.9, beta2 = 0.999 in place of beta1/beta2"),
    ("epsilon", "0.00000001", "Adam epsilon"),
    ("log_wall_time", "true", "record elapsed milliseconds in logs"),
    ("checkpoint_every", "1", "epochs between resumable checkpoints, 0 disables"),
    ("out_dir", "out", "output directory"),
    ("sweep_architectures", "v1,v5,v6,v7,v8", "sweep: comma-separated architectures"),
    ("sweep_noise", "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9", "sweep: comma-separated noise ratios"),
    ("sweep_seeds", "0", "sweep: comma-separated seeds"),
    ("workers", "1", "sweep: concurrent training runs"),
    ("bins", "50", "analysis: histogram bins"),
    ("alpha", "1", "analysis: additive smoothing"),
];

/// One architecture choice, e.g. `v8-10` (ten streams) or `v5` (default width).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ArchChoice {
    pub vertex: Vertex,
    /// Streams (v6, v8), width (v5) or slice count (v7); `None` uses the config key.
    pub count: Option<usize>,
}

impl FromStr for ArchChoice {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (v, count) = match s.split_once('-') {
            Some((v, n)) => (
                v,
                Some(n.parse::<usize>().map_err(|_| format!("bad count in architecture `{s}`"))?),
            ),
            None => (s, None),
        };
        let vertex: Vertex = v.trim().parse()?;
        if vertex == Vertex::V1 && count.is_some_and(|n| n != 1) {
            return Err(format!("v1 takes no count, got `{s}`"));
        }
        Ok(ArchChoice { vertex, count })
    }
}

impl std::fmt::Display for ArchChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.count {
            Some(n) => write!(f, "{}-{n}", self.vertex),
            None => write!(f, "{}", self.vertex),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum DataSource {
    Synthetic(synthetic::SyntheticSpec),
    Cifar10 { dir: PathBuf },
    Raw { train: PathBuf, test: PathBuf },
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

fn parse_value<T: FromStr>(key: &str, raw: &str) -> Result<T>
where
    T::Err: Display,
{
    raw.trim()
        .parse()
        .map_err(|e: T::Err| Error::config(key, format!("cannot parse `{raw}`: {e}")))
}

fn parse_list<T: FromStr>(key: &str, raw: &str) -> Result<Vec<T>>
where
    T::Err: Display,
{
    let items: Vec<T> = raw
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_value(key, s))
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(Error::config(key, "list is empty"));
    }
    Ok(items)
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            values: KEYS.iter().map(|(k, v, _)| (k.to_string(), v.to_string())).collect(),
        }
    }
}

impl RunConfig {
    /// Parses config text over the defaults and validates the result.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}", i + 1), format!("expected `key = value`, got `{line}`")))?;
            let k = k.trim();
            if let Some(prev) = seen.insert(k.to_string(), i + 1) {
                return Err(Error::config(k, format!("set twice (lines {prev} and {})", i + 1)));
            }
            cfg.set_raw(k, v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    fn set_raw(&mut self, key: &str, value: &str) -> Result<()> {
        match self.values.get_mut(key) {
            Some(slot) => {
                *slot = value.to_string();
                Ok(())
            }
            None => Err(Error::config(key, "unknown key")),
        }
    }

    /// Applies `key=value` overrides, then revalidates.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let o = o.as_ref();
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::config(o, "override must look like key=value"))?;
            self.set_raw(k.trim(), v.trim())?;
        }
        self.validate()
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    pub fn value<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: Display,
    {
        parse_value(key, self.get(key))
    }

    /// Effective configuration in the input syntax, keys in table order.
    pub fn to_text(&self) -> String {
        KEYS.iter().map(|(k, _, _)| format!("{k} = {}\n", self.get(k))).collect()
    }

    /// Parses every key, so a config that validates cannot fail later on a value.
    pub fn validate(&self) -> Result<()> {
        self.data_source()?;
        for key in ["train_subset", "test_subset", "subset_seed"] {
            self.value::<u64>(key)?;
        }
        for arch in self.sweep_architectures()? {
            self.network_spec(arch, 10, (3, 16, 16))?;
        }
        self.network_spec(self.architecture()?, 10, (3, 16, 16))?;
        self.experiment(self.network_spec(self.architecture()?, 10, (3, 16, 16))?, "x")?
            .validate()
            .map_err(|e| Error::config("noise_ratio", e.to_string()))?;
        for r in self.sweep_noise()? {
            self.experiment(self.network_spec(self.architecture()?, 10, (3, 16, 16))?, "x")?
                .with_noise(r)
                .validate()
                .map_err(|e| Error::config("sweep_noise", e.to_string()))?;
        }
        self.sweep_seeds()?;
        self.sweep_options()?;
        self.analysis_options()?;
        Ok(())
    }

    pub fn architecture(&self) -> Result<ArchChoice> {
        self.value("architecture")
    }

    pub fn sweep_architectures(&self) -> Result<Vec<ArchChoice>> {
        parse_list("sweep_architectures", self.get("sweep_architectures"))
    }

    pub fn sweep_noise(&self) -> Result<Vec<f64>> {
        parse_list("sweep_noise", self.get("sweep_noise"))
    }

    pub fn sweep_seeds(&self) -> Result<Vec<u64>> {
        parse_list("sweep_seeds", self.get("sweep_seeds"))
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(self.get("out_dir"))
    }

    pub fn data_source(&self) -> Result<DataSource> {
        let path = |key: &str| -> Result<PathBuf> {
            match self.get(key) {
                "" => Err(Error::config(key, format!("required when dataset = {}", self.get("dataset")))),
                p => Ok(PathBuf::from(p)),
            }
        };
        match self.get("dataset") {
            "synthetic" => Ok(DataSource::Synthetic(synthetic::SyntheticSpec {
                n_classes: self.value("synthetic_classes")?,
                train_per_class: self.value("synthetic_train_per_class")?,
                test_per_class: self.value("synthetic_test_per_class")?,
                size: self.value("synthetic_size")?,
                seed: self.value("synthetic_seed")?,
                ..synthetic::SyntheticSpec::default()
            })),
            "cifar10" => Ok(DataSource::Cifar10 { dir: path("data_dir")? }),
            "raw" => Ok(DataSource::Raw {
                train: path("train_path")?,
                test: path("test_path")?,
            }),
            other => Err(Error::config("dataset", format!("expected synthetic, cifar10 or raw, got `{other}`"))),
        }
    }

    /// Loads both splits and applies the configured stratified subsets.
    pub fn load_datasets(&self) -> Result<(Dataset, Dataset)> {
        let (train, test) = match self.data_source()? {
            DataSource::Synthetic(spec) => {
                if spec.n_classes < 2 || spec.size == 0 {
                    return Err(Error::config("synthetic_classes", "need at least 2 classes and a positive size"));
                }
                synthetic::generate_synthetic(&spec)
            }
            DataSource::Cifar10 { dir } => load_cifar10(&dir)?,
            DataSource::Raw { train, test } => (
                load_raw_dataset(&train, Split::Train)?,
                load_raw_dataset(&test, Split::Test)?,
            ),
        };
        let seed: u64 = self.value("subset_seed")?;
        let subset = |d: Dataset, key: &str| -> Result<Dataset> {
            match self.value::<usize>(key)? {
                0 => Ok(d),
                n => d.stratified_subset(n, seed),
            }
        };
        Ok((subset(train, "train_subset")?, subset(test, "test_subset")?))
    }

    /// Network spec for `arch` on data with `n_classes` classes of shape `input_shape`.
    pub fn network_spec(&self, arch: ArchChoice, n_classes: usize, input_shape: (usize, usize, usize)) -> Result<NetworkSpec> {
        let mut spec = NetworkSpec::new(arch.vertex, n_classes, input_shape);
        let streams: usize = self.value("n_streams")?;
        let width: usize = self.value("width_multiplier")?;
        let slices: usize = self.value("n_slices")?;
        match arch.vertex {
            Vertex::V1 => {}
            Vertex::V5 => spec.width_multiplier = arch.count.unwrap_or(width),
            Vertex::V6 => spec.n_streams = arch.count.unwrap_or(streams),
            Vertex::V7 => {
                spec.width_multiplier = width;
                let s = arch.count.unwrap_or(slices);
                spec.slice_spec = Some(make_slice_spec(s).map_err(|e| Error::config("n_slices", e.to_string()))?);
            }
            Vertex::V8 => spec = spec.with_streams(arch.count.unwrap_or(streams)),
        }
        spec.slice_membership = self.value::<SliceMembership>("slice_membership")?;
        let base: Vec<usize> = parse_list("base_filters", self.get("base_filters"))?;
        spec.base_filters = base
            .try_into()
            .map_err(|_| Error::config("base_filters", "needs exactly four counts"))?;
        let conv5: usize = self.value("conv5_filters")?;
        if conv5 > 0 {
            spec.conv5_filters = conv5;
        }
        spec.fc_hidden = self.value("fc_hidden")?;
        spec.fc_layers = self.value("fc_layers")?;
        spec.filter_divisor = self.value("filter_divisor")?;
        if spec.filter_divisor == 0 {
            return Err(Error::config("filter_divisor", "must be positive"));
        }
        spec.padding = self.value::<Padding>("padding")?;
        spec.seed = self.value("seed")?;
        spec.validate().map_err(|e| {
            let key = match arch.vertex {
                Vertex::V6 | Vertex::V8 => "n_streams",
                Vertex::V5 | Vertex::V7 => "width_multiplier",
                Vertex::V1 => "architecture",
            };
            Error::config(key, format!("{arch}: {e}"))
        })?;
        Ok(spec)
    }

    /// Experiment around `network`; the training seed is the network seed.
    pub fn experiment(&self, network: NetworkSpec, dataset_name: &str) -> Result<ExperimentConfig> {
        let mut c = ExperimentConfig::new(network, dataset_name);
        c.noise_ratio = self.value("noise_ratio")?;
        c.noise_mode = self.value::<NoiseMode>("noise_mode")?;
        c.train_noise = self.value::<TrainNoise>("train_noise")?;
        c.epochs = self.value("epochs")?;
        c.batch_size = self.value("batch_size")?;
        c.eval_every = self.value("eval_every")?;
        c.eval_from = self.value("eval_from")?;
        c.final_window = self.value("final_window")?;
        c.adam = AdamConfig {
            lr: self.value("lr")?,
            beta1: self.value("beta1")?,
            beta2: self.value("beta2")?,
            epsilon: self.value("epsilon")?,
        };
        if self.value::<bool>("adam_conventional_betas")? {
            let AdamConfig { beta1, beta2, .. } = AdamConfig::conventional();
            c.adam.beta1 = beta1;
            c.adam.beta2 = beta2;
        }
        c.log_wall_time = self.value("log_wall_time")?;
        for (key, v) in [("batch_size", c.batch_size), ("eval_every", c.eval_every), ("final_window", c.final_window)] {
            if v == 0 {
                return Err(Error::config(key, "must be positive"));
            }
        }
        Ok(c)
    }

    /// Name used in output files: the dataset kind.
    pub fn dataset_name(&self) -> &str {
        self.get("dataset")
    }

    /// Cells of the sweep matrix for data of the given shape, in
    /// architecture, seed, noise order.
    pub fn sweep_cells(&self, n_classes: usize, input_shape: (usize, usize, usize)) -> Result<Vec<ExperimentConfig>> {
        let mut cells = Vec::new();
        for arch in self.sweep_architectures()? {
            for seed in self.sweep_seeds()? {
                let mut spec = self.network_spec(arch, n_classes, input_shape)?;
                spec.seed = seed;
                let base = self.experiment(spec, self.dataset_name())?;
                for r in self.sweep_noise()? {
                    cells.push(base.with_noise(r));
                }
            }
        }
        Ok(cells)
    }

    pub fn sweep_options(&self) -> Result<SweepOptions> {
        let workers: usize = self.value("workers")?;
        if workers == 0 {
            return Err(Error::config("workers", "must be positive"));
        }
        Ok(SweepOptions {
            workers,
            out_dir: Some(self.out_dir()),
            checkpoint_every: self.value("checkpoint_every")?,
        })
    }

    pub fn analysis_options(&self) -> Result<AnalysisOptions> {
        let bins: usize = self.value("bins")?;
        if bins < 2 {
            return Err(Error::config("bins", "need at least 2 bins"));
        }
        let alpha: f64 = self.value("alpha")?;
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::config("alpha", "must be positive"));
        }
        Ok(AnalysisOptions { bins, alpha })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key_of(e: Error) -> String {
        match e {
            Error::Config { key, .. } => key,
            other => panic!("expected a config error, got {other}"),
        }
    }

    #[test]
    fn defaults_validate_and_echo_round_trips() {
        let c = RunConfig::default();
        c.validate().unwrap();
        assert_eq!(RunConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn comments_blank_lines_and_overrides() {
        let mut c = RunConfig::parse("# header\n\nepochs = 3   # short\nnoise_ratio=0.2\n").unwrap();
        assert_eq!(c.value::<usize>("epochs").unwrap(), 3);
        c.apply_overrides(&["noise_ratio=0.5"]).unwrap();
        assert_eq!(c.value::<f64>("noise_ratio").unwrap(), 0.5);
    }

    #[test]
    fn errors_name_the_key() {
        assert_eq!(key_of(RunConfig::parse("colour = red").unwrap_err()), "colour");
        assert_eq!(key_of(RunConfig::parse("epochs = many").unwrap_err()), "epochs");
        assert_eq!(key_of(RunConfig::parse("epochs = 1\nepochs = 2").unwrap_err()), "epochs");
        assert_eq!(key_of(RunConfig::parse("dataset = cifar10").unwrap_err()), "data_dir");
        assert_eq!(key_of(RunConfig::parse("noise_ratio = 0.55").unwrap_err()), "noise_ratio");
        assert_eq!(key_of(RunConfig::parse("workers = 0").unwrap_err()), "workers");
        assert_eq!(key_of(RunConfig::parse("just words").unwrap_err()), "line 1");
    }

    #[test]
    fn conventional_betas_flag() {
        let c = RunConfig::parse("adam_conventional_betas = true").unwrap();
        let spec = c.network_spec(c.architecture().unwrap(), 10, (3, 16, 16)).unwrap();
        let e = c.experiment(spec, "x").unwrap();
        assert_eq!((e.adam.beta1, e.adam.beta2), (0.9, 0.999));
        assert!(e.tag().ends_with("_cb"));
    }

    #[test]
    fn architecture_tokens() {
        let a: ArchChoice = "v8-10".parse().unwrap();
        assert_eq!((a.vertex, a.count), (Vertex::V8, Some(10)));
        assert!("v1-3".parse::<ArchChoice>().is_err());
        assert!("v9".parse::<ArchChoice>().is_err());
        let c = RunConfig::default();
        let spec = c.network_spec(a, 10, (3, 16, 16)).unwrap();
        assert_eq!(spec.n_streams, 10);
        assert_eq!(spec.slice_spec.as_ref().unwrap().len(), 10);
        assert_eq!(spec.stream_filters(), [8, 16, 32, 64, 10]);
        let v5 = c.network_spec("v5-3".parse().unwrap(), 10, (3, 16, 16)).unwrap();
        assert_eq!(v5.width_multiplier, 3);
    }

    #[test]
    fn sweep_matrix_counts() {
        let c = RunConfig::parse("sweep_architectures = v1, v8-5\nsweep_seeds = 1,2\n").unwrap();
        let cells = c.sweep_cells(10, (3, 16, 16)).unwrap();
        assert_eq!(cells.len(), 2 * 2 * 9);
        assert_eq!(cells[0].tag(), "noise_01_1");
        assert_eq!(cells[0].seed, 1);
        assert_eq!(cells[9].seed, 2);
    }
}
