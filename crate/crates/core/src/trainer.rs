//! Minibatch SGD over the forward and learning channels.

use serde::{Deserialize, Serialize};

use crate::channel::{
    backward, channel_dropout_mask, forward_weight_update, hebbian_channel_update, stdp_updates,
    tracking_gaps, Adaptivity, ChannelConfig, ChannelParams, WeightDeltas,
};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::loss::output_delta;
use crate::net::{forward, predict_and_score, Dropout, NetworkParams};
use crate::rng::RngStream;

/// Stop when validation loss rises by more than `threshold_percent` between
/// two checks taken `window` updates apart.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EarlyStop {
    pub threshold_percent: f64,
    pub window: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    #[serde(default)]
    pub momentum: f64,
    /// Per-update multiplicative decay: `η ← η(1 − decay)`.
    #[serde(default)]
    pub lr_decay: f64,
    /// Forward dropout probability for every hidden layer.
    #[serde(default)]
    pub dropout: f64,
    #[serde(default)]
    pub early_stop: Option<EarlyStop>,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(epochs: usize, batch_size: usize, learning_rate: f64, seed: u64) -> Self {
        Self {
            epochs,
            batch_size,
            learning_rate,
            momentum: 0.0,
            lr_decay: 0.0,
            dropout: 0.0,
            early_stop: None,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate must be finite and non-negative"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("momentum must lie in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.lr_decay) {
            return Err(Error::config("lr_decay must lie in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config("dropout must lie in [0, 1)"));
        }
        if let Some(es) = self.early_stop {
            if es.window == 0 || es.threshold_percent < 0.0 {
                return Err(Error::config("early_stop needs window ≥ 1 and threshold ≥ 0"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub iterations: usize,
    pub learning_rate: f64,
    pub train_loss: f64,
    pub train_accuracy: Option<f64>,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
    /// Mean `|C_l − W_{l+1}ᵗ|` where the shapes line up.
    pub tracking_gap: Vec<Option<f64>>,
    pub channel_norms: Vec<f64>,
    pub weight_norms: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "status")]
pub enum TrainStatus {
    Completed,
    EarlyStopped { iteration: usize },
    Diverged { epoch: usize, iteration: usize, reason: String },
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub status: TrainStatus,
    pub metrics: Vec<MetricsRecord>,
    pub net: NetworkParams,
    pub channel: ChannelParams,
}

/// Tracks the early-stopping rule over a stream of validation losses.
#[derive(Clone, Debug)]
pub struct EarlyStopper {
    rule: EarlyStop,
    previous: Option<f64>,
}

impl EarlyStopper {
    pub fn new(rule: EarlyStop) -> Self {
        Self { rule, previous: None }
    }

    /// Feeds the next check; true when training should stop.
    pub fn observe(&mut self, val_loss: f64) -> bool {
        let stop = self
            .previous
            .is_some_and(|p| val_loss > p * (1.0 + self.rule.threshold_percent / 100.0));
        self.previous = Some(val_loss);
        stop
    }
}

/// Momentum buffers matching the parameter shapes.
#[derive(Clone, Debug)]
pub struct Optimizer {
    momentum: f64,
    weights: Vec<Matrix>,
    biases: Vec<Vec<f64>>,
    channel: Vec<Matrix>,
}

impl Optimizer {
    pub fn new(net: &NetworkParams, channel: &ChannelParams, momentum: f64) -> Self {
        Self {
            momentum,
            weights: net.weights.iter().map(|w| Matrix::zeros(w.rows(), w.cols())).collect(),
            biases: net.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
            channel: channel
                .backward
                .iter()
                .map(|c| Matrix::zeros(c.rows(), c.cols()))
                .collect(),
        }
    }

    /// `v ← m·v + Δ; w ← w + v`.
    pub fn apply(
        &mut self,
        net: &mut NetworkParams,
        channel: &mut ChannelParams,
        forward: WeightDeltas,
        channel_deltas: Option<Vec<Matrix>>,
    ) -> Result<()> {
        let m = self.momentum;
        for (l, dw) in forward.weights.into_iter().enumerate() {
            let v = &mut self.weights[l];
            if m == 0.0 {
                *v = dw;
            } else {
                v.scale_assign(m);
                v.add_scaled(1.0, &dw)?;
            }
            net.weights[l].add_scaled(1.0, v)?;
        }
        for (l, db) in forward.biases.into_iter().enumerate() {
            for ((v, d), b) in self.biases[l].iter_mut().zip(db).zip(net.biases[l].iter_mut()) {
                *v = m * *v + d;
                *b += *v;
            }
        }
        if let Some(deltas) = channel_deltas {
            for (l, dc) in deltas.into_iter().enumerate() {
                let v = &mut self.channel[l];
                if m == 0.0 {
                    *v = dc;
                } else {
                    v.scale_assign(m);
                    v.add_scaled(1.0, &dc)?;
                }
                channel.backward[l].add_scaled(1.0, v)?;
            }
        }
        Ok(())
    }
}

/// One update on a batch: forward, signals, deltas from the pre-update
/// parameters, then everything applied together.
#[allow(clippy::too_many_arguments)]
pub fn train_step(
    net: &mut NetworkParams,
    config: &ChannelConfig,
    channel: &mut ChannelParams,
    optimizer: &mut Optimizer,
    inputs: &Matrix,
    targets: &Matrix,
    eta: f64,
    channel_eta: f64,
    dropout: f64,
    rng: &mut RngStream,
) -> Result<()> {
    let rates = vec![dropout; net.depth() - 1];
    let drop = (dropout > 0.0).then(|| Dropout {
        rates: &rates,
        rng: &mut *rng,
    });
    let (output, trace) = forward(net, inputs, drop)?;
    if config.adaptivity == Adaptivity::Stdp {
        let (fw, dc) = stdp_updates(config, net, channel, &trace, targets, eta, channel_eta)?;
        return optimizer.apply(net, channel, fw, Some(dc));
    }
    let delta = output_delta(net.loss(), net.output_transfer(), targets, &output)?;
    let masks = channel_dropout_mask(config, net, inputs.rows(), rng);
    let signals = backward(config, net, channel, &trace, &delta, masks.as_deref())?;
    let fw = forward_weight_update(net, &trace, &signals, eta)?;
    let dc = match config.adaptivity {
        Adaptivity::Hebbian => Some(hebbian_channel_update(config, net, &trace, &signals, channel_eta)?),
        _ => None,
    };
    optimizer.apply(net, channel, fw, dc)
}

fn record(
    epoch: usize,
    iterations: usize,
    eta: f64,
    net: &NetworkParams,
    config: &ChannelConfig,
    channel: &ChannelParams,
    train: &Dataset,
    validation: Option<&Dataset>,
) -> Result<MetricsRecord> {
    let tr = predict_and_score(net, train)?;
    let va = validation.map(|v| predict_and_score(net, v)).transpose()?;
    Ok(MetricsRecord {
        epoch,
        iterations,
        learning_rate: eta,
        train_loss: tr.loss,
        train_accuracy: tr.accuracy,
        val_loss: va.map(|s| s.loss),
        val_accuracy: va.and_then(|s| s.accuracy),
        tracking_gap: tracking_gaps(config, net, channel),
        channel_norms: channel.norms(),
        weight_norms: net.weights.iter().map(Matrix::frobenius_norm).collect(),
    })
}

fn diverged_record(epoch: usize, iterations: usize, eta: f64) -> MetricsRecord {
    MetricsRecord {
        epoch,
        iterations,
        learning_rate: eta,
        train_loss: f64::NAN,
        train_accuracy: None,
        val_loss: None,
        val_accuracy: None,
        tracking_gap: vec![],
        channel_norms: vec![],
        weight_norms: vec![],
    }
}

/// Trains for `cfg.epochs` epochs, calling `observe` after each record.
///
/// Examples are reshuffled every epoch; the last batch may be smaller.
/// Non-finite parameters stop training with [`TrainStatus::Diverged`] and a
/// final diagnostic record.
pub fn train(
    mut net: NetworkParams,
    config: &ChannelConfig,
    mut channel: ChannelParams,
    train_data: &Dataset,
    validation: Option<&Dataset>,
    cfg: &TrainConfig,
    observe: &mut dyn FnMut(&MetricsRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    config.validate(&net)?;
    if train_data.input_dim() != net.input_size() || train_data.output_dim() != net.output_size() {
        return Err(Error::Dimension {
            op: "train",
            lhs: (train_data.input_dim(), train_data.output_dim()),
            rhs: (net.input_size(), net.output_size()),
        });
    }
    let mut shuffle_rng = RngStream::substream(cfg.seed, 0);
    let mut noise_rng = RngStream::substream(cfg.seed, 1);
    let mut optimizer = Optimizer::new(&net, &channel, cfg.momentum);
    let mut stopper = cfg.early_stop.map(EarlyStopper::new);
    let mut eta = cfg.learning_rate;
    let mut channel_eta = config.learning_rate.unwrap_or(cfg.learning_rate);
    let mut iterations = 0usize;
    let mut metrics = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..train_data.len()).collect();

    for epoch in 1..=cfg.epochs {
        shuffle_rng.shuffle(&mut order);
        for batch in order.chunks(cfg.batch_size) {
            let x = train_data.features.select_rows(batch);
            let t = train_data.targets.select_rows(batch);
            let step = train_step(
                &mut net,
                config,
                &mut channel,
                &mut optimizer,
                &x,
                &t,
                eta,
                channel_eta,
                cfg.dropout,
                &mut noise_rng,
            );
            iterations += 1;
            let reason = match step {
                Err(Error::Domain(msg)) => Some(msg),
                Err(e) => return Err(e),
                Ok(()) if !net.is_finite() || !channel.is_finite() => {
                    Some("non-finite parameters".to_string())
                }
                Ok(()) => None,
            };
            if let Some(reason) = reason {
                let rec = diverged_record(epoch, iterations, eta);
                observe(&rec);
                metrics.push(rec);
                return Ok(TrainOutcome {
                    status: TrainStatus::Diverged {
                        epoch,
                        iteration: iterations,
                        reason,
                    },
                    metrics,
                    net,
                    channel,
                });
            }
            eta *= 1.0 - cfg.lr_decay;
            channel_eta *= 1.0 - cfg.lr_decay;

            if let (Some(es), Some(stopper), Some(val)) = (cfg.early_stop, stopper.as_mut(), validation) {
                if iterations % es.window == 0 && stopper.observe(predict_and_score(&net, val)?.loss) {
                    let rec = record(epoch, iterations, eta, &net, config, &channel, train_data, validation)?;
                    observe(&rec);
                    metrics.push(rec);
                    return Ok(TrainOutcome {
                        status: TrainStatus::EarlyStopped { iteration: iterations },
                        metrics,
                        net,
                        channel,
                    });
                }
            }
        }
        let rec = record(epoch, iterations, eta, &net, config, &channel, train_data, validation)?;
        observe(&rec);
        metrics.push(rec);
    }
    Ok(TrainOutcome {
        status: TrainStatus::Completed,
        metrics,
        net,
        channel,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::Algorithm;
    use crate::data::DatasetKind;
    use crate::net::LayerSpec;
    use crate::transfer::TransferFunction;

    fn regression(n: usize, seed: u64) -> Dataset {
        let mut rng = RngStream::new(seed);
        let x = Matrix::from_fn(n, 1, |_, _| rng.normal(0.5, 1.0));
        let t = Matrix::from_fn(n, 1, |r, _| 1.7 * x.get(r, 0) + 0.3 * rng.standard_normal());
        Dataset::new(x, t, DatasetKind::Regression).unwrap()
    }

    fn scalar_net(w: f64) -> NetworkParams {
        NetworkParams::from_weights(
            1,
            vec![LayerSpec::new(1, TransferFunction::Identity, false)],
            vec![Matrix::scalar(w)],
            None,
        )
        .unwrap()
    }

    #[test]
    fn least_squares_fixed_point() {
        let data = regression(200, 3);
        let n = data.len() as f64;
        let eti: f64 = (0..data.len()).map(|r| data.features.get(r, 0) * data.targets.get(r, 0)).sum::<f64>() / n;
        let ei2: f64 = data.features.data().iter().map(|v| v * v).sum::<f64>() / n;
        let cfg = TrainConfig::new(400, data.len(), 0.5, 1);
        let ch_cfg = ChannelConfig::new(Algorithm::Bp);
        let out = train(scalar_net(0.0), &ch_cfg, ChannelParams { backward: vec![], laterals: vec![] }, &data, None, &cfg, &mut |_| {}).unwrap();
        assert!((out.net.weights[0].get(0, 0) - eti / ei2).abs() < 1e-6);
    }

    #[test]
    fn zero_rate_keeps_parameters() {
        let data = regression(30, 4);
        let cfg = TrainConfig::new(3, 7, 0.0, 1);
        let ch_cfg = ChannelConfig::new(Algorithm::Bp);
        let empty = ChannelParams { backward: vec![], laterals: vec![] };
        let out = train(scalar_net(0.25), &ch_cfg, empty, &data, None, &cfg, &mut |_| {}).unwrap();
        assert_eq!(out.net.weights[0].get(0, 0), 0.25);
        assert!(out.metrics.windows(2).all(|w| w[0].train_loss == w[1].train_loss));
    }

    #[test]
    fn early_stop_rule() {
        let mut s = EarlyStopper::new(EarlyStop { threshold_percent: 1.0, window: 10 });
        assert!(!s.observe(1.0));
        assert!(!s.observe(1.005));
        assert!(!s.observe(1.0));
        assert!(s.observe(1.0101));
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = TrainConfig::new(1, 0, 0.1, 0);
        assert!(cfg.validate().is_err());
        cfg.batch_size = 1;
        cfg.momentum = 1.0;
        assert!(cfg.validate().is_err());
    }
}
