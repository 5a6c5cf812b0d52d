//! The acceptance battery: ten checks, each timed against its budget.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::channel::{
    backward_bp, backward_rbp, backward_srbp, forward_weight_update, stdp_phases, Adaptivity, Algorithm,
    ChannelConfig, ChannelParams, ChannelTransfer,
};
use crate::data::{gen_linear_stats, Dataset, InputDistribution, LinearStatsSpec, TargetRule};
use crate::error::Result;
use crate::experiment::{run_experiment, ExperimentConfig};
use crate::init::{Initializer, ScaleRule};
use crate::linalg::Matrix;
use crate::loss::output_delta;
use crate::net::{forward, LayerSpec, NetworkParams};
use crate::ode::{
    analyze, gradient_flow, integrate, moments_for, sgd_vs_ode, IntegrateOptions, InvariantReport, Moments,
    OdeSystem, Variant,
};
use crate::rng::RngStream;
use crate::trainer::{train_step, MetricsRecord, Optimizer, TrainStatus};
use crate::transfer::TransferFunction;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriterionResult {
    pub id: u8,
    pub title: String,
    pub passed: bool,
    pub detail: String,
    pub elapsed_secs: f64,
    /// Time budget for the whole criterion, or per run for training rows.
    pub budget_secs: f64,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        format!(
            "[{}] {:>2}. {:<34} {:>8.2}s  {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.elapsed_secs,
            self.detail
        )
    }
}

/// Inputs for the data-driven rows.
#[derive(Clone, Debug)]
pub struct VerifyOptions {
    /// Directory holding the bundled experiment configs.
    pub configs_dir: PathBuf,
}

impl VerifyOptions {
    pub fn new(configs_dir: impl Into<PathBuf>) -> Self {
        Self { configs_dir: configs_dir.into() }
    }
}

pub const TITLES: [&str; 10] = [
    "gradient oracle",
    "reduction oracle",
    "MNIST desk scale",
    "Bianchini k=0,1",
    "Hebbian ARBP instability",
    "ARBP chain battery",
    "ASRBP chain battery",
    "expansive/compressive/general",
    "STDP consistency",
    "Euler consistency",
];

const BUDGETS: [f64; 10] = [1.0, 1.0, 300.0, 600.0, f64::INFINITY, 30.0, 30.0, 60.0, 5.0, 10.0];

/// Outcome of one check before timing is attached.
pub struct Check {
    pub passed: bool,
    pub detail: String,
    /// Longest single run, for rows whose budget is per run.
    pub per_run_secs: Option<f64>,
}

impl Check {
    fn new(passed: bool, detail: String) -> Self {
        Self { passed, detail, per_run_secs: None }
    }
}

fn failed(e: impl std::fmt::Display) -> Check {
    Check::new(false, format!("error: {e}"))
}

/// Runs criterion `id` (1–10).
pub fn run_criterion(id: u8, opts: &VerifyOptions) -> CriterionResult {
    assert!((1..=10).contains(&id), "criteria are numbered 1 to 10");
    let start = Instant::now();
    let check = match id {
        1 => gradient_oracle(),
        2 => reduction_oracle(),
        3 => mnist_desk_scale(&opts.configs_dir),
        4 => bianchini(&opts.configs_dir),
        5 => hebbian_instability(&opts.configs_dir),
        6 => arbp_chain_battery(),
        7 => asrbp_chain_battery(),
        8 => matrix_battery(),
        9 => stdp_consistency(),
        _ => euler_consistency(),
    }
    .unwrap_or_else(failed);
    let elapsed_secs = start.elapsed().as_secs_f64();
    let budget_secs = BUDGETS[id as usize - 1];
    let timed = check.per_run_secs.unwrap_or(elapsed_secs);
    let in_budget = timed <= budget_secs;
    let mut detail = check.detail;
    if !in_budget {
        detail.push_str(&format!("; over budget ({timed:.1}s > {budget_secs}s)"));
    }
    CriterionResult {
        id,
        title: TITLES[id as usize - 1].into(),
        passed: check.passed && in_budget,
        detail,
        elapsed_secs,
        budget_secs,
    }
}

/// Runs the listed criteria in order, reporting each as it finishes.
pub fn run_all(ids: &[u8], opts: &VerifyOptions, report: &mut dyn FnMut(&CriterionResult)) -> Vec<CriterionResult> {
    ids.iter()
        .map(|&id| {
            let r = run_criterion(id, opts);
            report(&r);
            r
        })
        .collect()
}

// ---------------------------------------------------------------- 1, 2

fn random_net(sizes: &[usize], hidden: TransferFunction, output: TransferFunction, seed: u64) -> Result<NetworkParams> {
    let mut rng = RngStream::new(seed);
    let layers: Vec<LayerSpec> = sizes[1..]
        .iter()
        .enumerate()
        .map(|(i, &n)| LayerSpec::new(n, if i + 2 == sizes.len() { output } else { hidden }, true))
        .collect();
    let net = NetworkParams::new(sizes[0], layers, &Initializer::scaled_normal(ScaleRule::Glorot), &mut rng)?;
    let mut rng = RngStream::substream(seed, 9);
    // Non-zero biases so their gradients are exercised too.
    let mut net = net;
    for b in &mut net.biases {
        for v in b.iter_mut() {
            *v = rng.normal(0.0, 0.3);
        }
    }
    Ok(net)
}

fn random_batch(rows: usize, inputs: usize, classes: usize, seed: u64) -> (Matrix, Matrix) {
    let mut rng = RngStream::new(seed);
    let x = Matrix::from_fn(rows, inputs, |_, _| rng.normal(0.0, 1.0));
    let mut t = Matrix::zeros(rows, classes);
    for r in 0..rows {
        let c = (rng.next_u64() % classes as u64) as usize;
        t.set(r, c, 1.0);
    }
    (x, t)
}

fn mean_loss(net: &NetworkParams, x: &Matrix, t: &Matrix) -> Result<f64> {
    let (out, _) = forward(net, x, None)?;
    net.loss().mean(t, &out)
}

/// BP deltas against central finite differences of the mean batch loss.
pub fn gradient_oracle() -> Result<Check> {
    let mut net = random_net(&[10, 7, 5, 3], TransferFunction::Tanh, TransferFunction::Softmax, 11)?;
    let (x, t) = random_batch(4, 10, 3, 12);
    let eta = 0.1;
    let (out, trace) = forward(&net, &x, None)?;
    let delta = output_delta(net.loss(), net.output_transfer(), &t, &out)?;
    let signals = backward_bp(&net, &trace, &delta, ChannelTransfer::Linear, None)?;
    let deltas = forward_weight_update(&net, &trace, &signals, eta)?;

    let eps = 1e-6;
    let (mut diff2, mut ref2) = (0.0, 0.0);
    for l in 0..net.depth() {
        for i in 0..net.weights[l].data().len() {
            let orig = net.weights[l].data()[i];
            net.weights[l].data_mut()[i] = orig + eps;
            let up = mean_loss(&net, &x, &t)?;
            net.weights[l].data_mut()[i] = orig - eps;
            let down = mean_loss(&net, &x, &t)?;
            net.weights[l].data_mut()[i] = orig;
            let fd = -eta * (up - down) / (2.0 * eps);
            diff2 += (deltas.weights[l].data()[i] - fd).powi(2);
            ref2 += fd * fd;
        }
        for i in 0..net.biases[l].len() {
            let orig = net.biases[l][i];
            net.biases[l][i] = orig + eps;
            let up = mean_loss(&net, &x, &t)?;
            net.biases[l][i] = orig - eps;
            let down = mean_loss(&net, &x, &t)?;
            net.biases[l][i] = orig;
            let fd = -eta * (up - down) / (2.0 * eps);
            diff2 += (deltas.biases[l][i] - fd).powi(2);
            ref2 += fd * fd;
        }
    }
    let rel = (diff2 / ref2).sqrt();
    Ok(Check::new(rel <= 1e-5, format!("relative error {rel:.2e} (≤ 1e-5)")))
}

/// RBP with live transposes equals BP; RBP equals SRBP with one hidden layer.
pub fn reduction_oracle() -> Result<Check> {
    let mut bp_net = random_net(&[6, 5, 4, 3], TransferFunction::Tanh, TransferFunction::Softmax, 21)?;
    let mut rbp_net = bp_net.clone();
    let bp_cfg = ChannelConfig::new(Algorithm::Bp);
    let rbp_cfg = ChannelConfig::new(Algorithm::Rbp);
    let mut bp_channel = ChannelParams::new(&bp_cfg, &bp_net, &mut RngStream::new(0))?;
    let mut bp_opt = Optimizer::new(&bp_net, &bp_channel, 0.0);
    let mut rbp_channel = ChannelParams::transposes(&rbp_net);
    let mut rbp_opt = Optimizer::new(&rbp_net, &rbp_channel, 0.0);
    let mut rng = RngStream::new(1);
    let mut worst = 0.0f64;
    for step in 0..50 {
        let (x, t) = random_batch(8, 6, 3, 100 + step);
        rbp_channel = ChannelParams::transposes(&rbp_net);
        train_step(&mut bp_net, &bp_cfg, &mut bp_channel, &mut bp_opt, &x, &t, 0.1, 0.1, 0.0, &mut rng)?;
        train_step(&mut rbp_net, &rbp_cfg, &mut rbp_channel, &mut rbp_opt, &x, &t, 0.1, 0.1, 0.0, &mut rng)?;
        for (a, b) in bp_net.weights.iter().zip(&rbp_net.weights) {
            worst = worst.max(a.max_abs_diff(b)?);
        }
        for (a, b) in bp_net.biases.iter().zip(&rbp_net.biases) {
            worst = worst.max(a.iter().zip(b).fold(0.0f64, |m, (u, v)| m.max((u - v).abs())));
        }
    }

    let net = random_net(&[6, 5, 3], TransferFunction::Tanh, TransferFunction::Softmax, 31)?;
    let channel = ChannelParams::new(&rbp_cfg, &net, &mut RngStream::new(32))?;
    let (x, t) = random_batch(8, 6, 3, 33);
    let (out, trace) = forward(&net, &x, None)?;
    let delta = output_delta(net.loss(), net.output_transfer(), &t, &out)?;
    let r = backward_rbp(&net, &channel, &trace, &delta, ChannelTransfer::Tanh, None)?;
    let s = backward_srbp(&net, &channel, &trace, &delta, ChannelTransfer::Tanh, None)?;
    let one_hidden = r.hidden[0].max_abs_diff(&s.hidden[0])?;
    Ok(Check::new(
        worst <= 1e-12 && one_hidden <= 1e-12,
        format!("BP vs live-transpose RBP {worst:.1e}; RBP vs SRBP one hidden layer {one_hidden:.1e} (≤ 1e-12)"),
    ))
}

// ---------------------------------------------------------------- 3, 4, 5

fn load_config(dir: &Path, name: &str) -> Result<ExperimentConfig> {
    ExperimentConfig::load(&dir.join(format!("{name}.toml")))
}

fn final_metrics(records: &[MetricsRecord]) -> Option<&MetricsRecord> {
    records.iter().rev().find(|r| r.epoch > 0)
}

/// Trains one bundled config, returning its per-epoch records and wall time.
fn train_config(cfg: &ExperimentConfig) -> Result<(Vec<MetricsRecord>, TrainStatus, f64)> {
    let mut records = Vec::new();
    let summary = run_experiment(cfg, None, &mut |r| records.push(r.clone()))?;
    Ok((records, summary.status, summary.elapsed_secs))
}

pub fn mnist_desk_scale(configs: &Path) -> Result<Check> {
    let runs = [
        ("mnist-conjoined-bp", 0.97),
        ("mnist-conjoined-rbp", 0.97),
        ("mnist-conjoined-srbp", 0.97),
        ("mnist-distinct-srbp", 0.90),
    ];
    let mut passed = true;
    let mut parts = Vec::new();
    let mut slowest = 0.0f64;
    for (name, threshold) in runs {
        let cfg = load_config(configs, name)?;
        let (records, status, secs) = train_config(&cfg)?;
        slowest = slowest.max(secs);
        let acc = final_metrics(&records).and_then(|r| r.train_accuracy).unwrap_or(0.0);
        let ok = acc >= threshold && matches!(status, TrainStatus::Completed);
        passed &= ok;
        parts.push(format!("{}: {:.2}% (≥ {:.0}%)", name.trim_start_matches("mnist-"), 100.0 * acc, 100.0 * threshold));
    }
    Ok(Check { passed, detail: parts.join(", "), per_run_secs: Some(slowest) })
}

pub fn bianchini(configs: &Path) -> Result<Check> {
    let mut passed = true;
    let mut parts = Vec::new();
    let mut slowest = 0.0f64;
    for k in [0, 1] {
        for alg in ["bp", "rbp", "srbp"] {
            let cfg = load_config(configs, &format!("bianchini-k{k}-{alg}"))?;
            let (records, _, secs) = train_config(&cfg)?;
            slowest = slowest.max(secs);
            let acc = final_metrics(&records).and_then(|r| r.val_accuracy).unwrap_or(0.0);
            passed &= acc >= 0.95;
            parts.push(format!("k{k} {alg} {:.2}%", 100.0 * acc));
        }
    }
    Ok(Check { passed, detail: format!("held-out {} (≥ 95%)", parts.join(", ")), per_run_secs: Some(slowest) })
}

pub fn hebbian_instability(configs: &Path) -> Result<Check> {
    let arbp = load_config(configs, "mnist-hebbian-arbp")?;
    let asrbp = load_config(configs, "mnist-hebbian-asrbp")?;
    let mut arbp_hits = 0;
    let mut asrbp_hits = 0;
    let mut drops = Vec::new();
    let mut finals = Vec::new();
    for seed in 1..=3u64 {
        let mut cfg = arbp.clone();
        cfg.train.seed = seed;
        let (records, _, _) = train_config(&cfg)?;
        let epochs: Vec<&MetricsRecord> = records.iter().filter(|r| r.epoch > 0).collect();
        let last = epochs.last().and_then(|r| r.train_accuracy).unwrap_or(0.0);
        let peak = epochs.iter().filter_map(|r| r.train_accuracy).fold(0.0f64, f64::max);
        let drop = peak - last;
        if drop >= 0.05 {
            arbp_hits += 1;
        }
        drops.push(format!("{:.1}", 100.0 * drop));

        let mut cfg = asrbp.clone();
        cfg.train.seed = seed;
        let (records, _, _) = train_config(&cfg)?;
        let acc = final_metrics(&records).and_then(|r| r.train_accuracy).unwrap_or(0.0);
        if acc >= 0.95 {
            asrbp_hits += 1;
        }
        finals.push(format!("{:.1}%", 100.0 * acc));
    }
    Ok(Check::new(
        arbp_hits >= 2 && asrbp_hits >= 2,
        format!(
            "ARBP peak-to-final drop [{}] pts (need ≥ 5 in 2 of 3); ASRBP final [{}] (need ≥ 95% in 2 of 3)",
            drops.join(", "),
            finals.join(", ")
        ),
    ))
}

// ---------------------------------------------------------------- 6, 7, 8

/// Options used by the chain batteries.
pub fn chain_options() -> IntegrateOptions {
    // Adaptive: some ASRBP runs pass through a stiff transient that a fixed
    // step of 1e-2 turns into a spurious blow-up.
    let mut opts = IntegrateOptions::adaptive(2000.0, 1e-11);
    opts.sample_interval = 0.5;
    opts
}

fn uniform_state(n: usize, rng: &mut RngStream) -> Vec<f64> {
    (0..n).map(|_| rng.uniform_range(-0.5, 0.5)).collect()
}

struct BatteryTally {
    runs: usize,
    converged: usize,
    worst_residual: f64,
    worst_tracking: f64,
    worst_error_gap: f64,
}

impl BatteryTally {
    fn new() -> Self {
        Self { runs: 0, converged: 0, worst_residual: 0.0, worst_tracking: 0.0, worst_error_gap: 0.0 }
    }

    fn add(&mut self, r: &InvariantReport) {
        self.runs += 1;
        if r.verdict.is_converged() {
            self.converged += 1;
        }
        self.worst_residual = self.worst_residual.max(r.final_residual);
        self.worst_tracking = self.worst_tracking.max(r.max_tracking_drift);
        self.worst_error_gap = self.worst_error_gap.max(r.error_gap().unwrap_or(f64::INFINITY));
    }

    fn passes(&self) -> bool {
        self.converged == self.runs && self.worst_residual <= 1e-6 && self.worst_tracking <= 1e-9 && self.worst_error_gap <= 1e-8
    }

    fn detail(&self) -> String {
        format!(
            "{}/{} converged, max |1−P| {:.1e}, tracking drift {:.1e}, |E−E*| {:.1e}",
            self.converged, self.runs, self.worst_residual, self.worst_tracking, self.worst_error_gap
        )
    }
}

pub fn arbp_chain_battery() -> Result<Check> {
    let mut tally = BatteryTally::new();
    let opts = chain_options();
    let mut by_depth = Vec::new();
    for depth in 2..=5 {
        let sys = OdeSystem::chain(depth, Variant::Arbp, 1.0, 1.0)?;
        let mut rng = RngStream::new(600 + depth as u64);
        let before = tally.converged;
        for _ in 0..20 {
            let x0 = uniform_state(sys.len(), &mut rng);
            tally.add(&analyze(&integrate(&sys, &x0, &opts)?, &sys));
        }
        by_depth.push(format!("L{depth} {}/20", tally.converged - before));
    }
    Ok(Check::new(tally.passes(), format!("{} [{}]", tally.detail(), by_depth.join(", "))))
}

/// `c₁ = a₁ = f`, `a₂ = e^{−f}`, `c₂ = a₃ = −e^{−f}`: an exact solution of
/// the three-layer ASRBP chain with `α = β = 1` along which `f` grows without
/// bound; every `K_i` is zero.
pub fn asrbp_counterexample(f0: f64) -> Vec<f64> {
    let e = (-f0).exp();
    vec![f0, e, -e, f0, -e]
}

pub fn asrbp_chain_battery() -> Result<Check> {
    let mut tally = BatteryTally::new();
    let opts = chain_options();
    let mut skipped = 0;
    for depth in 2..=5 {
        let sys = OdeSystem::chain(depth, Variant::Asrbp, 1.0, 1.0)?;
        let mut rng = RngStream::new(700 + depth as u64);
        let mut done = 0;
        while done < 20 {
            let x0 = uniform_state(sys.len(), &mut rng);
            let k_nonzero = (0..depth - 1).all(|i| x0[depth + i].powi(2) - x0[i].powi(2) != 0.0);
            if !k_nonzero {
                skipped += 1;
                continue;
            }
            tally.add(&analyze(&integrate(&sys, &x0, &opts)?, &sys));
            done += 1;
        }
    }
    let sys = OdeSystem::chain(3, Variant::Asrbp, 1.0, 1.0)?;
    let counter = analyze(&integrate(&sys, &asrbp_counterexample(1.0), &opts)?, &sys);
    let flagged = !counter.verdict.is_converged();
    Ok(Check::new(
        tally.passes() && flagged,
        format!(
            "{}; {skipped} draws with some K_i = 0 skipped; counterexample verdict {:?} at t = {:.1}",
            tally.detail(),
            counter.verdict,
            counter.t_final
        ),
    ))
}

/// Moments of a noiseless rank-`rank` teacher on standard normal inputs.
pub fn teacher_moments(n0: usize, nl: usize, rank: usize, seed: u64) -> Result<Moments> {
    let stats = gen_linear_stats(&LinearStatsSpec {
        n: 1000,
        input_dim: n0,
        output_dim: nl,
        input: InputDistribution::Normal { mean: 0.0, std_dev: 1.0 },
        target: TargetRule::RandomLinear { noise_std_dev: 0.0, rank: Some(rank) },
        seed,
    })?;
    moments_for(&stats.dataset, None)
}

/// Largest gap between the forward matrices of a zero-offset trajectory and
/// an independent gradient-flow integration on the same grid.
pub fn gradient_flow_gap(sys: &OdeSystem, x0: &[f64], h: f64, steps: usize, stride: usize) -> Result<f64> {
    let mut x0 = x0.to_vec();
    sys.zero_tracking(&mut x0);
    let mut opts = IntegrateOptions::fixed(steps as f64 * h, h);
    opts.sample_interval = stride as f64 * h;
    opts.rest_steps = None;
    let traj = integrate(sys, &x0, &opts)?;
    let reference = gradient_flow(&sys.forward_matrices(&x0), &sys.moments.sigma_ti, &sys.moments.sigma_ii, h, steps, stride)?;
    let mut worst = 0.0f64;
    for (state, (_, weights)) in traj.states.iter().zip(&reference) {
        for (a, b) in sys.forward_matrices(state).iter().zip(weights) {
            worst = worst.max(a.max_abs_diff(b)?);
        }
    }
    if traj.states.len() != reference.len() {
        worst = f64::INFINITY;
    }
    Ok(worst)
}

pub fn matrix_battery() -> Result<Check> {
    let m = teacher_moments(8, 8, 1, 81)?;
    let compressive = OdeSystem::compressive(8, m.sigma_ti, m.sigma_ii, m.target_energy)?;
    let m = teacher_moments(5, 4, 3, 82)?;
    let general = OdeSystem::general_linear(&[5, 3, 4], Variant::Arbp, m.sigma_ti, m.sigma_ii, m.target_energy)?;
    let systems = [OdeSystem::expansive(8, 1.0, 1.0)?, compressive, general];

    let mut passed = true;
    let mut parts = Vec::new();
    for (i, sys) in systems.iter().enumerate() {
        let mut rng = RngStream::new(800 + i as u64);
        let x0 = uniform_state(sys.len(), &mut rng);
        let mut opts = IntegrateOptions::fixed(100.0, 1e-3);
        opts.sample_interval = 0.5;
        let report = analyze(&integrate(sys, &x0, &opts)?, sys);
        let gap = gradient_flow_gap(sys, &x0, 1e-3, 20_000, 500)?;
        let ok = report.max_drift() <= 1e-9 && report.verdict.is_converged() && gap <= 1e-8;
        passed &= ok;
        parts.push(format!(
            "{}: drift {:.1e}, {:?}, residual {:.1e}, gradient-flow gap {:.1e}",
            sys.name,
            report.max_drift(),
            report.verdict,
            report.final_residual,
            gap
        ));
    }
    Ok(Check::new(passed, parts.join("; ")))
}

// ---------------------------------------------------------------- 9, 10

/// `‖ΔO − R_SRBP‖` summed over hidden layers for a channel of scale `s`.
pub fn stdp_gap(net: &NetworkParams, directions: &[Matrix], x: &Matrix, t: &Matrix, s: f64) -> Result<f64> {
    let cfg = ChannelConfig::new(Algorithm::Srbp).with_adaptivity(Adaptivity::Stdp);
    let channel = ChannelParams::from_matrices(&cfg, net, directions.iter().map(|d| d.scale(s)).collect(), Vec::new())?;
    let (out, trace) = forward(net, x, None)?;
    let delta = output_delta(net.loss(), net.output_transfer(), t, &out)?;
    let r = backward_srbp(net, &channel, &trace, &delta, ChannelTransfer::Linear, None)?;
    let change = stdp_phases(net, &channel, &trace, t)?.change()?;
    let mut sq = 0.0;
    for (d, rl) in change.iter().zip(&r.hidden) {
        sq += d.sub(rl)?.frobenius_norm().powi(2);
    }
    Ok(sq.sqrt())
}

pub fn stdp_consistency() -> Result<Check> {
    let scales = [1e-2, 5e-3, 2.5e-3];
    let mut ratios = Vec::new();
    for seed in 0..5u64 {
        let net = random_net(&[8, 6, 5, 4], TransferFunction::Tanh, TransferFunction::Softmax, 900 + seed)?;
        let mut rng = RngStream::substream(900 + seed, 1);
        let directions: Vec<Matrix> = [6, 5].iter().map(|&n| Matrix::from_fn(n, 4, |_, _| rng.normal(0.0, 1.0))).collect();
        let (x, t) = random_batch(16, 8, 4, 950 + seed);
        let gaps = scales.iter().map(|&s| stdp_gap(&net, &directions, &x, &t, s)).collect::<Result<Vec<_>>>()?;
        ratios.push(gaps[0] / gaps[1]);
        ratios.push(gaps[1] / gaps[2]);
    }
    let ok = ratios.iter().all(|r| (3.5..=4.5).contains(r));
    let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &r| (lo.min(r), hi.max(r)));
    Ok(Check::new(ok, format!("{} halving ratios in [{lo:.3}, {hi:.3}] (need [3.5, 4.5])", ratios.len())))
}

/// Regression set shared by the Euler consistency check.
pub fn euler_dataset() -> Result<Dataset> {
    Ok(gen_linear_stats(&LinearStatsSpec {
        n: 100,
        input_dim: 1,
        output_dim: 1,
        input: InputDistribution::Normal { mean: 0.0, std_dev: 1.0 },
        target: TargetRule::RandomLinear { noise_std_dev: 0.2, rank: None },
        seed: 1001,
    })?
    .dataset)
}

pub fn euler_consistency() -> Result<Check> {
    let data = euler_dataset()?;
    let sys = OdeSystem::chain_with(2, Variant::Arbp, moments_for(&data, None)?)?;
    let x0 = [0.3, 0.2, -0.1];
    let etas = [1e-2, 5e-3, 2.5e-3];
    let gaps = etas
        .iter()
        .map(|&eta| sgd_vs_ode(&sys, &data, &x0, eta, (5.0 / eta).round() as usize).map(|c| c.final_gap))
        .collect::<Result<Vec<_>>>()?;
    let r1 = gaps[0] / gaps[1];
    let r2 = gaps[1] / gaps[2];
    let ok = [r1, r2].iter().all(|r| (1.7..=2.3).contains(r));
    Ok(Check::new(
        ok,
        format!("gaps at t=5 {:.2e}, {:.2e}, {:.2e}; ratios {r1:.3}, {r2:.3} (need [1.7, 2.3])", gaps[0], gaps[1], gaps[2]),
    ))
}
