//! Config-driven runs: TOML in, metrics and summaries out.
//!
//! Training configs have `[data]`, `[network]`, `[channel]` and `[train]`
//! sections; ODE configs have `[system]`, `[init]` and `[integrate]`. Unknown
//! keys are rejected. Relative paths resolve against the config file.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelConfig, ChannelParams};
use crate::data::{
    gen_bianchini, gen_linear_stats, load_delimited, load_idx, BianchiniSpec, Dataset, DatasetKind, DelimitedSpec,
    InputDistribution, LinearStatsSpec, TargetRule,
};
use crate::error::{Error, Result};
use crate::init::{Initializer, ScaleRule};
use crate::net::{LayerSpec, NetworkParams};
use crate::ode::{self, IntegrateOptions, InvariantReport, OdeSystem, Trajectory, Variant};
use crate::rng::RngStream;
use crate::trainer::{train, MetricsRecord, TrainConfig, TrainStatus};
use crate::transfer::TransferFunction;

// ---------------------------------------------------------------- schema

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataConfig {
    Idx {
        images: PathBuf,
        labels: PathBuf,
        #[serde(default)]
        limit: Option<usize>,
        #[serde(default)]
        validation_images: Option<PathBuf>,
        #[serde(default)]
        validation_labels: Option<PathBuf>,
    },
    Bianchini {
        k: u32,
        n_train: usize,
        #[serde(default)]
        n_validation: usize,
        seed: u64,
    },
    Delimited {
        path: PathBuf,
        target_column: usize,
        #[serde(default)]
        feature_columns: Option<Vec<usize>>,
        #[serde(default)]
        header: bool,
        #[serde(default = "default_separator")]
        separator: char,
        #[serde(default)]
        limit: Option<usize>,
        #[serde(default = "default_kind")]
        kind: DatasetKind,
        /// Trailing fraction of rows held out for validation.
        #[serde(default)]
        validation_fraction: f64,
    },
    Linear {
        n: usize,
        input_dim: usize,
        output_dim: usize,
        input: InputDistribution,
        target: TargetRule,
        seed: u64,
    },
}

fn default_separator() -> char {
    ','
}

fn default_kind() -> DatasetKind {
    DatasetKind::Classification
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub hidden: Vec<usize>,
    pub hidden_transfer: TransferFunction,
    pub output_transfer: TransferFunction,
    #[serde(default = "default_true")]
    pub bias: bool,
    #[serde(default = "default_init")]
    pub init: Initializer,
}

fn default_true() -> bool {
    true
}

fn default_init() -> Initializer {
    Initializer::scaled_normal(ScaleRule::Glorot)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub data: DataConfig,
    pub network: NetworkConfig,
    pub channel: ChannelConfig,
    pub train: TrainConfig,
}

/// A file holding only a `[data]` section, for the dataset utilities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataFile {
    pub data: DataConfig,
}

fn parse_toml<T: for<'de> Deserialize<'de>>(text: &str, path: &Path) -> Result<T> {
    toml::from_str(text).map_err(|e| Error::Schema(format!("{}: {}", path.display(), e.message())))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl DataConfig {
    fn resolve_paths(&mut self, base: &Path) {
        match self {
            DataConfig::Idx { images, labels, validation_images, validation_labels, .. } => {
                resolve(base, images);
                resolve(base, labels);
                for p in [validation_images, validation_labels].into_iter().flatten() {
                    resolve(base, p);
                }
            }
            DataConfig::Delimited { path, .. } => resolve(base, path),
            _ => {}
        }
    }

    /// Training set and optional validation set.
    pub fn load(&self) -> Result<(Dataset, Option<Dataset>)> {
        match self {
            DataConfig::Idx { images, labels, limit, validation_images, validation_labels } => {
                let mut train = load_idx(images, labels)?;
                if let Some(n) = limit {
                    train = train.rows(0, (*n).min(train.len()));
                }
                let val = match (validation_images, validation_labels) {
                    (Some(i), Some(l)) => Some(load_idx(i, l)?),
                    (None, None) => None,
                    _ => return Err(Error::Schema("validation_images and validation_labels go together".into())),
                };
                Ok((train, val))
            }
            DataConfig::Bianchini { k, n_train, n_validation, seed } => {
                let train = gen_bianchini(&BianchiniSpec { k: *k, n_samples: *n_train, seed: *seed })?;
                let val = if *n_validation > 0 {
                    let s = RngStream::substream(*seed, 1).next_u64();
                    Some(gen_bianchini(&BianchiniSpec { k: *k, n_samples: *n_validation, seed: s })?)
                } else {
                    None
                };
                Ok((train, val))
            }
            DataConfig::Delimited {
                path,
                target_column,
                feature_columns,
                header,
                separator,
                limit,
                kind,
                validation_fraction,
            } => {
                if !(0.0..1.0).contains(validation_fraction) {
                    return Err(Error::Schema("validation_fraction must lie in [0, 1)".into()));
                }
                let spec = DelimitedSpec {
                    target_column: *target_column,
                    feature_columns: feature_columns.clone(),
                    header: *header,
                    separator: *separator,
                    limit: *limit,
                    kind: *kind,
                };
                let all = load_delimited(path, &spec)?;
                let n_val = (all.len() as f64 * validation_fraction).floor() as usize;
                if n_val == 0 {
                    return Ok((all, None));
                }
                let (train, val) = all.split_at(all.len() - n_val)?;
                Ok((train, Some(val)))
            }
            DataConfig::Linear { n, input_dim, output_dim, input, target, seed } => {
                let stats = gen_linear_stats(&LinearStatsSpec {
                    n: *n,
                    input_dim: *input_dim,
                    output_dim: *output_dim,
                    input: *input,
                    target: *target,
                    seed: *seed,
                })?;
                Ok((stats.dataset, None))
            }
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        let mut cfg: Self = parse_toml(text, path)?;
        cfg.data.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&read_text(path)?, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment configs serialize")
    }

    /// Builds the network for a dataset with the given dimensions.
    pub fn build_network(&self, input_dim: usize, output_dim: usize) -> Result<NetworkParams> {
        let n = &self.network;
        let mut layers: Vec<LayerSpec> = n.hidden.iter().map(|&s| LayerSpec::new(s, n.hidden_transfer, n.bias)).collect();
        layers.push(LayerSpec::new(output_dim, n.output_transfer, n.bias));
        let mut rng = RngStream::substream(self.train.seed, 2);
        NetworkParams::new(input_dim, layers, &n.init, &mut rng)
    }

    pub fn build_channel(&self, net: &NetworkParams) -> Result<ChannelParams> {
        let mut rng = RngStream::substream(self.train.seed, 3);
        ChannelParams::new(&self.channel, net, &mut rng)
    }
}

impl DataFile {
    pub fn load(path: &Path) -> Result<Self> {
        let mut f: Self = parse_toml(&read_text(path)?, path)?;
        f.data.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(f)
    }
}

// ---------------------------------------------------------------- training runs

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum MetricsLine<'a> {
    Header { seed: u64, config: &'a ExperimentConfig },
    Epoch(&'a MetricsRecord),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub name: Option<String>,
    pub seed: u64,
    pub status: TrainStatus,
    pub epochs_run: usize,
    pub final_metrics: Option<MetricsRecord>,
    pub best_train_accuracy: Option<f64>,
    pub best_val_accuracy: Option<f64>,
    /// Wall-clock; not reproducible.
    pub elapsed_secs: f64,
    pub config: ExperimentConfig,
}

impl RunSummary {
    pub fn diverged(&self) -> bool {
        matches!(self.status, TrainStatus::Diverged { .. })
    }
}

fn best(metrics: &[MetricsRecord], f: impl Fn(&MetricsRecord) -> Option<f64>) -> Option<f64> {
    metrics.iter().filter_map(f).fold(None, |m, v| Some(m.map_or(v, |m: f64| m.max(v))))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Data(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Trains per `cfg`. With `out` set, writes `metrics.jsonl`, `summary.json`
/// and `config.resolved.toml` there.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    out: Option<&Path>,
    observe: &mut dyn FnMut(&MetricsRecord),
) -> Result<RunSummary> {
    let (train_set, val_set) = cfg.data.load()?;
    let net = cfg.build_network(train_set.input_dim(), train_set.output_dim())?;
    let channel = cfg.build_channel(&net)?;

    let mut sink = match out {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let resolved = dir.join("config.resolved.toml");
            fs::write(&resolved, format!("# seed = {}\n{}", cfg.train.seed, cfg.to_toml()))
                .map_err(|e| Error::io(&resolved, e))?;
            let path = dir.join("metrics.jsonl");
            let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            let mut w = BufWriter::new(file);
            let header = serde_json::to_string(&MetricsLine::Header { seed: cfg.train.seed, config: cfg })
                .map_err(|e| Error::Data(e.to_string()))?;
            writeln!(w, "{header}").map_err(|e| Error::io(&path, e))?;
            Some((w, path))
        }
        None => None,
    };
    let mut write_err = None;
    let start = Instant::now();
    let outcome = train(net, &cfg.channel, channel, &train_set, val_set.as_ref(), &cfg.train, &mut |rec| {
        if let Some((w, path)) = sink.as_mut() {
            let line = serde_json::to_string(&MetricsLine::Epoch(rec)).expect("metrics serialize");
            if let Err(e) = writeln!(w, "{line}").and_then(|_| w.flush()) {
                write_err.get_or_insert(Error::io(path.clone(), e));
            }
        }
        observe(rec);
    })?;
    if let Some(e) = write_err {
        return Err(e);
    }
    let elapsed_secs = start.elapsed().as_secs_f64();
    let summary = RunSummary {
        name: cfg.name.clone(),
        seed: cfg.train.seed,
        status: outcome.status.clone(),
        epochs_run: outcome.metrics.iter().filter(|m| m.epoch > 0).count(),
        final_metrics: outcome.metrics.last().cloned(),
        best_train_accuracy: best(&outcome.metrics, |m| m.train_accuracy),
        best_val_accuracy: best(&outcome.metrics, |m| m.val_accuracy),
        elapsed_secs,
        config: cfg.clone(),
    };
    if let Some(dir) = out {
        write_json(&dir.join("summary.json"), &summary)?;
    }
    Ok(summary)
}

// ---------------------------------------------------------------- ODE runs

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeacherConfig {
    #[serde(default = "default_teacher_n")]
    pub n: usize,
    /// Rank of the teacher map; full rank when absent.
    #[serde(default)]
    pub rank: Option<usize>,
    #[serde(default)]
    pub noise_std_dev: f64,
    pub seed: u64,
}

fn default_teacher_n() -> usize {
    1000
}

fn default_one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SystemConfig {
    Chain {
        depth: usize,
        variant: Variant,
        #[serde(default = "default_one")]
        alpha: f64,
        #[serde(default = "default_one")]
        beta: f64,
    },
    ChainStdp {
        #[serde(default = "default_one")]
        alpha: f64,
        #[serde(default = "default_one")]
        beta: f64,
    },
    Expansive {
        width: usize,
        #[serde(default = "default_one")]
        alpha: f64,
        #[serde(default = "default_one")]
        beta: f64,
    },
    Compressive {
        width: usize,
        teacher: TeacherConfig,
    },
    GeneralLinear {
        dims: Vec<usize>,
        variant: Variant,
        teacher: TeacherConfig,
    },
    Power {
        mu: f64,
        #[serde(default = "default_one")]
        alpha: f64,
        #[serde(default = "default_one")]
        beta: f64,
    },
}

impl SystemConfig {
    pub fn build(&self) -> Result<OdeSystem> {
        let teacher_moments = |t: &TeacherConfig, n0: usize, nl: usize| -> Result<ode::Moments> {
            let stats = gen_linear_stats(&LinearStatsSpec {
                n: t.n,
                input_dim: n0,
                output_dim: nl,
                input: InputDistribution::Normal { mean: 0.0, std_dev: 1.0 },
                target: TargetRule::RandomLinear { noise_std_dev: t.noise_std_dev, rank: t.rank },
                seed: t.seed,
            })?;
            ode::moments_for(&stats.dataset, None)
        };
        match self {
            SystemConfig::Chain { depth, variant, alpha, beta } => OdeSystem::chain(*depth, *variant, *alpha, *beta),
            SystemConfig::ChainStdp { alpha, beta } => OdeSystem::chain_stdp(*alpha, *beta),
            SystemConfig::Expansive { width, alpha, beta } => OdeSystem::expansive(*width, *alpha, *beta),
            SystemConfig::Power { mu, alpha, beta } => OdeSystem::nonlinear_power(*mu, *alpha, *beta),
            SystemConfig::Compressive { width, teacher } => {
                if *width == 0 {
                    return Err(Error::config("compressive width must be at least 1"));
                }
                let m = teacher_moments(teacher, *width, *width)?;
                OdeSystem::compressive(*width, m.sigma_ti, m.sigma_ii, m.target_energy)
            }
            SystemConfig::GeneralLinear { dims, variant, teacher } => {
                if dims.len() < 3 || dims.contains(&0) {
                    return Err(Error::config("general-linear dims need ≥ 3 positive sizes"));
                }
                let m = teacher_moments(teacher, dims[0], dims[dims.len() - 1])?;
                OdeSystem::general_linear(dims, *variant, m.sigma_ti, m.sigma_ii, m.target_energy)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitConfig {
    /// Explicit initial state; overrides random draws.
    #[serde(default)]
    pub values: Option<Vec<f64>>,
    #[serde(default = "default_low")]
    pub low: f64,
    #[serde(default = "default_high")]
    pub high: f64,
    /// Set channel entries so every tracking constant starts at zero.
    #[serde(default)]
    pub zero_tracking: bool,
    pub seed: u64,
}

fn default_low() -> f64 {
    -0.5
}

fn default_high() -> f64 {
    0.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegrateConfig {
    pub t_max: f64,
    /// Fixed RK4 step. Exactly one of `h` and `tol` must be set.
    #[serde(default)]
    pub h: Option<f64>,
    /// Adaptive tolerance.
    #[serde(default)]
    pub tol: Option<f64>,
    #[serde(default = "default_sample")]
    pub sample_interval: f64,
    #[serde(default = "default_divergence")]
    pub divergence_bound: f64,
}

fn default_sample() -> f64 {
    0.1
}

fn default_divergence() -> f64 {
    1e8
}

impl IntegrateConfig {
    pub fn options(&self) -> Result<IntegrateOptions> {
        let mut opts = match (self.h, self.tol) {
            (Some(h), None) => IntegrateOptions::fixed(self.t_max, h),
            (None, Some(tol)) => IntegrateOptions::adaptive(self.t_max, tol),
            _ => return Err(Error::Schema("[integrate] needs exactly one of h and tol".into())),
        };
        opts.sample_interval = self.sample_interval;
        opts.divergence_bound = self.divergence_bound;
        opts.validate()?;
        Ok(opts)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdeConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub system: SystemConfig,
    pub init: InitConfig,
    pub integrate: IntegrateConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OdeRun {
    pub seed: u64,
    pub initial_state: Vec<f64>,
    pub report: InvariantReport,
    pub config: OdeConfig,
}

impl OdeConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        parse_toml(text, path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&read_text(path)?, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("ODE configs serialize")
    }

    pub fn initial_state(&self, sys: &OdeSystem) -> Result<Vec<f64>> {
        let init = &self.init;
        let mut x = match &init.values {
            Some(v) => {
                sys.check_state(v)?;
                v.clone()
            }
            None => {
                if !(init.low < init.high) {
                    return Err(Error::Schema("[init] needs low < high".into()));
                }
                let mut rng = RngStream::new(init.seed);
                (0..sys.len()).map(|_| rng.uniform_range(init.low, init.high)).collect()
            }
        };
        if init.zero_tracking {
            sys.zero_tracking(&mut x);
        }
        Ok(x)
    }
}

/// Integrates and analyzes one configured system. With `out` set, writes
/// `trajectory.csv`, `report.json` and `config.resolved.toml`.
pub fn run_ode(cfg: &OdeConfig, out: Option<&Path>) -> Result<(OdeRun, Trajectory)> {
    let sys = cfg.system.build()?;
    let opts = cfg.integrate.options()?;
    let x0 = cfg.initial_state(&sys)?;
    let traj = ode::integrate(&sys, &x0, &opts)?;
    let report = ode::analyze(&traj, &sys);
    let run = OdeRun { seed: cfg.init.seed, initial_state: x0, report, config: cfg.clone() };
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let header = serde_json::to_string(&serde_json::json!({ "seed": cfg.init.seed, "config": cfg }))
            .map_err(|e| Error::Data(e.to_string()))?;
        let csv = dir.join("trajectory.csv");
        fs::write(&csv, format!("# {header}\n{}", traj.to_csv())).map_err(|e| Error::io(&csv, e))?;
        write_json(&dir.join("report.json"), &run)?;
        let resolved = dir.join("config.resolved.toml");
        fs::write(&resolved, format!("# seed = {}\n{}", cfg.init.seed, cfg.to_toml()))
            .map_err(|e| Error::io(&resolved, e))?;
    }
    Ok((run, traj))
}

/// Runs `count` copies with init seeds `seed, seed + 1, …` in parallel
/// workers, each writing into `out/run-NNN`.
pub fn run_ode_sweep(cfg: &OdeConfig, count: usize, out: Option<&Path>) -> Result<Vec<OdeRun>> {
    if count == 0 {
        return Err(Error::config("sweep count must be at least 1"));
    }
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(count);
    let jobs: Vec<(usize, OdeConfig)> = (0..count)
        .map(|i| {
            let mut c = cfg.clone();
            c.init.seed = cfg.init.seed.wrapping_add(i as u64);
            (i, c)
        })
        .collect();
    let results: Vec<Result<OdeRun>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let jobs = &jobs;
                scope.spawn(move || {
                    jobs.iter()
                        .skip(w)
                        .step_by(workers)
                        .map(|(i, c)| {
                            let dir = out.map(|d| d.join(format!("run-{i:03}")));
                            run_ode(c, dir.as_deref()).map(|(r, _)| (*i, r))
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        let mut all: Vec<(usize, Result<OdeRun>)> = Vec::with_capacity(count);
        for h in handles {
            for r in h.join().expect("sweep worker panicked") {
                match r {
                    Ok((i, run)) => all.push((i, Ok(run))),
                    Err(e) => all.push((usize::MAX, Err(e))),
                }
            }
        }
        all.sort_by_key(|(i, _)| *i);
        all.into_iter().map(|(_, r)| r).collect()
    });
    let runs = results.into_iter().collect::<Result<Vec<_>>>()?;
    if let Some(dir) = out {
        let summary: Vec<_> = runs
            .iter()
            .map(|r| serde_json::json!({ "seed": r.seed, "verdict": r.report.verdict, "final_residual": r.report.final_residual }))
            .collect();
        write_json(&dir.join("sweep.json"), &summary)?;
    }
    Ok(runs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode::StepControl;

    const TRAIN: &str = r#"
        [data]
        source = "bianchini"
        k = 0
        n_train = 200
        n_validation = 50
        seed = 1

        [network]
        hidden = [8]
        hidden_transfer = "tanh"
        output_transfer = "logistic"

        [channel]
        algorithm = "srbp"

        [train]
        epochs = 2
        batch_size = 20
        learning_rate = 0.1
        seed = 4
    "#;

    #[test]
    fn training_config_round_trips() {
        let cfg = ExperimentConfig::from_toml(TRAIN, Path::new("x.toml")).unwrap();
        let again = ExperimentConfig::from_toml(&cfg.to_toml(), Path::new("x.toml")).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn unknown_keys_are_schema_errors() {
        let bad = TRAIN.replace("seed = 4", "seed = 4\nspeed = 2");
        assert!(matches!(ExperimentConfig::from_toml(&bad, Path::new("x.toml")), Err(Error::Schema(_))));
        let bad = TRAIN.replace("source = \"bianchini\"", "source = \"mystery\"");
        assert!(matches!(ExperimentConfig::from_toml(&bad, Path::new("x.toml")), Err(Error::Schema(_))));
    }

    #[test]
    fn same_seed_same_metrics() {
        let cfg = ExperimentConfig::from_toml(TRAIN, Path::new("x.toml")).unwrap();
        let a = run_experiment(&cfg, None, &mut |_| {}).unwrap();
        let b = run_experiment(&cfg, None, &mut |_| {}).unwrap();
        assert_eq!(a.final_metrics, b.final_metrics);
        assert_eq!(a.epochs_run, 2);
    }

    #[test]
    fn ode_config_builds_chain() {
        let text = r#"
            [system]
            kind = "chain"
            depth = 4
            variant = "arbp"

            [init]
            seed = 3

            [integrate]
            t_max = 5.0
            h = 0.01
        "#;
        let cfg = OdeConfig::from_toml(text, Path::new("o.toml")).unwrap();
        let (run, traj) = run_ode(&cfg, None).unwrap();
        assert_eq!(run.report.tracking_count(), 3);
        assert_eq!(traj.columns.len(), 7);
        assert!(matches!(cfg.integrate.options().unwrap().step, StepControl::Fixed { .. }));
    }
}
