//! Learning channels: how the output error reaches deep synapses, and how
//! the channel itself may adapt.
//!
//! Indexing is 0-based over weight layers. Hidden layer `l` is the output of
//! `weights[l]` (width `N_{l+1}`), for `l < L - 1`. Channel matrices are
//! oriented with rows on the receiving (deeper) side:
//!
//! | variant           | `backward[l]`           | `laterals[l]`       |
//! |-------------------|-------------------------|---------------------|
//! | RBP, Conjoined    | `N_{l+1} × N_{l+2}`     | none                |
//! | SRBP, Conjoined   | `N_{l+1} × N_L`         | none                |
//! | RBP, Distinct     | `m_l × m_{l+1}`         | `N_{l+1} × m_l`     |
//! | SRBP, Distinct    | `m_l × N_L`             | `N_{l+1} × m_l`     |
//!
//! where `m_l` are the channel layer widths and `m_{L-1} = N_L`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::init::{Initializer, ScaleRule};
use crate::linalg::Matrix;
use crate::net::{sample_mask, ForwardTrace, NetworkParams};
use crate::rng::RngStream;
use crate::transfer::TransferFunction;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Bp,
    Rbp,
    Srbp,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    Conjoined,
    /// Widths of the channel layers facing hidden layers `1 … L−1`.
    Distinct(Vec<usize>),
}

/// Transfer function of the channel's own units, applied to each incoming
/// summation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelTransfer {
    Linear,
    Tanh,
    Logistic,
}

impl ChannelTransfer {
    pub fn function(self) -> TransferFunction {
        match self {
            ChannelTransfer::Linear => TransferFunction::Identity,
            ChannelTransfer::Tanh => TransferFunction::Tanh,
            ChannelTransfer::Logistic => TransferFunction::Logistic,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Adaptivity {
    Fixed,
    Hebbian,
    Stdp,
}

/// Which activity pairs with `ΔO` in the STDP rules.
///
/// `Target`: channel synapses see the clamped target `T`, forward synapses
/// see free-phase presynaptic activity. `Feedback`: channel synapses see the
/// fed-back output `O^L` and forward synapses see presynaptic activity from
/// the feedback phase; this is the form whose averaged dynamics on `A[1,1,1]`
/// give `dc₁/dt = c₁P(α − βP)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StdpVariant {
    #[default]
    Target,
    Feedback,
}

/// Backward factor of the Hebbian RBP channel rule `ΔC_h ∝ O^h ⊗ (·)`.
///
/// `Delivered` uses `R^{h+1}`, which already carries the forward derivative
/// of layer `h+1`, so the channel increment equals the transposed forward
/// increment. `Carried` uses what the channel itself transmits at layer
/// `h+1`, before that derivative.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HebbianSignal {
    Carried,
    #[default]
    Delivered,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub algorithm: Algorithm,
    #[serde(default = "default_architecture")]
    pub architecture: Architecture,
    #[serde(default = "default_channel_transfer")]
    pub transfer: ChannelTransfer,
    #[serde(default = "default_adaptivity")]
    pub adaptivity: Adaptivity,
    /// Channel dropout probability `p_lc`.
    #[serde(default)]
    pub dropout: f64,
    #[serde(default = "default_glorot")]
    pub init: Initializer,
    /// Lateral matrices of a Distinct channel.
    #[serde(default = "default_glorot")]
    pub lateral_init: Initializer,
    /// Channel learning rate; the forward rate when `None`.
    #[serde(default)]
    pub learning_rate: Option<f64>,
    #[serde(default)]
    pub stdp_variant: StdpVariant,
    #[serde(default)]
    pub hebbian_signal: HebbianSignal,
}

fn default_architecture() -> Architecture {
    Architecture::Conjoined
}

fn default_channel_transfer() -> ChannelTransfer {
    ChannelTransfer::Linear
}

fn default_adaptivity() -> Adaptivity {
    Adaptivity::Fixed
}

fn default_glorot() -> Initializer {
    Initializer::scaled_normal(ScaleRule::Glorot)
}

impl ChannelConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        Self {
            algorithm,
            architecture: Architecture::Conjoined,
            transfer: ChannelTransfer::Linear,
            adaptivity: Adaptivity::Fixed,
            dropout: 0.0,
            init: Initializer::scaled_normal(ScaleRule::Glorot),
            lateral_init: Initializer::scaled_normal(ScaleRule::Glorot),
            learning_rate: None,
            stdp_variant: StdpVariant::Target,
            hebbian_signal: HebbianSignal::default(),
        }
    }

    pub fn with_transfer(mut self, transfer: ChannelTransfer) -> Self {
        self.transfer = transfer;
        self
    }

    pub fn with_adaptivity(mut self, adaptivity: Adaptivity) -> Self {
        self.adaptivity = adaptivity;
        self
    }

    pub fn with_architecture(mut self, architecture: Architecture) -> Self {
        self.architecture = architecture;
        self
    }

    pub fn is_distinct(&self) -> bool {
        matches!(self.architecture, Architecture::Distinct(_))
    }

    pub fn validate(&self, net: &NetworkParams) -> Result<()> {
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config(format!(
                "channel dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        if let Some(eta) = self.learning_rate {
            if !(eta > 0.0 && eta.is_finite()) {
                return Err(Error::config("channel learning_rate must be positive"));
            }
        }
        if self.algorithm == Algorithm::Bp {
            if self.is_distinct() {
                return Err(Error::config("BP uses the forward weights; Distinct is not allowed"));
            }
            if self.adaptivity != Adaptivity::Fixed {
                return Err(Error::config("BP's channel is the transposed forward weights; adaptivity must be fixed"));
            }
        }
        if let Architecture::Distinct(sizes) = &self.architecture {
            if sizes.len() != net.depth() - 1 {
                return Err(Error::config(format!(
                    "Distinct channel needs {} layer sizes, got {}",
                    net.depth() - 1,
                    sizes.len()
                )));
            }
            if sizes.contains(&0) {
                return Err(Error::config("Distinct channel layer sizes must be ≥ 1"));
            }
            if self.adaptivity != Adaptivity::Fixed {
                return Err(Error::config(
                    "adaptive Distinct channels need forward-to-channel matrices, which are not supported",
                ));
            }
        }
        if self.adaptivity == Adaptivity::Stdp
            && (self.algorithm != Algorithm::Srbp || self.transfer != ChannelTransfer::Linear)
        {
            return Err(Error::config("STDP adaptivity requires SRBP with a linear channel"));
        }
        Ok(())
    }

    /// Shapes of `(backward, laterals)` for `net`.
    pub fn shapes(&self, net: &NetworkParams) -> (Vec<(usize, usize)>, Vec<(usize, usize)>) {
        let sizes = net.sizes();
        let depth = net.depth();
        let top = sizes[depth];
        let hidden = 0..depth - 1;
        match (&self.architecture, self.algorithm) {
            (_, Algorithm::Bp) => (vec![], vec![]),
            (Architecture::Conjoined, Algorithm::Rbp) => {
                (hidden.map(|l| (sizes[l + 1], sizes[l + 2])).collect(), vec![])
            }
            (Architecture::Conjoined, Algorithm::Srbp) => {
                (hidden.map(|l| (sizes[l + 1], top)).collect(), vec![])
            }
            (Architecture::Distinct(m), alg) => {
                let above = |l: usize| if l + 1 < m.len() { m[l + 1] } else { top };
                let backward = hidden
                    .clone()
                    .map(|l| match alg {
                        Algorithm::Srbp => (m[l], top),
                        _ => (m[l], above(l)),
                    })
                    .collect();
                let laterals = hidden.map(|l| (sizes[l + 1], m[l])).collect();
                (backward, laterals)
            }
        }
    }

    /// Widths of the layers that channel dropout acts on.
    pub fn dropout_widths(&self, net: &NetworkParams) -> Vec<usize> {
        match &self.architecture {
            Architecture::Conjoined => net.sizes()[1..net.depth()].to_vec(),
            Architecture::Distinct(m) => m.clone(),
        }
    }
}

/// Channel matrices. `backward` is empty for BP.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub backward: Vec<Matrix>,
    pub laterals: Vec<Matrix>,
}

impl ChannelParams {
    pub fn new(config: &ChannelConfig, net: &NetworkParams, rng: &mut RngStream) -> Result<Self> {
        config.validate(net)?;
        let (b, lat) = config.shapes(net);
        Ok(Self {
            backward: b.iter().map(|&(r, c)| config.init.sample(r, c, rng)).collect(),
            laterals: lat
                .iter()
                .map(|&(r, c)| config.lateral_init.sample(r, c, rng))
                .collect(),
        })
    }

    pub fn from_matrices(
        config: &ChannelConfig,
        net: &NetworkParams,
        backward: Vec<Matrix>,
        laterals: Vec<Matrix>,
    ) -> Result<Self> {
        config.validate(net)?;
        let (bs, ls) = config.shapes(net);
        let got_b: Vec<_> = backward.iter().map(Matrix::shape).collect();
        let got_l: Vec<_> = laterals.iter().map(Matrix::shape).collect();
        if got_b != bs || got_l != ls {
            return Err(Error::config(format!(
                "channel matrices {got_b:?}/{got_l:?} do not match expected {bs:?}/{ls:?}"
            )));
        }
        Ok(Self { backward, laterals })
    }

    /// Conjoined RBP matrices equal to the current forward transposes.
    pub fn transposes(net: &NetworkParams) -> Self {
        Self {
            backward: net.weights[1..].iter().map(Matrix::transpose).collect(),
            laterals: vec![],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.backward.iter().chain(&self.laterals).all(Matrix::is_finite)
    }

    pub fn norms(&self) -> Vec<f64> {
        self.backward.iter().map(Matrix::frobenius_norm).collect()
    }
}

/// Mean `|C_l − W_{l+1}ᵗ|` for every channel matrix facing the same pair of
/// layers as a forward matrix, `None` elsewhere.
pub fn tracking_gaps(config: &ChannelConfig, net: &NetworkParams, channel: &ChannelParams) -> Vec<Option<f64>> {
    let depth = net.depth();
    channel
        .backward
        .iter()
        .enumerate()
        .map(|(l, c)| {
            let comparable = match (&config.architecture, config.algorithm) {
                (Architecture::Conjoined, Algorithm::Rbp) => true,
                (Architecture::Conjoined, Algorithm::Srbp) => l + 2 == depth,
                _ => false,
            };
            if !comparable {
                return None;
            }
            let w = &net.weights[l + 1];
            let n = c.data().len() as f64;
            let total: f64 = (0..c.rows())
                .flat_map(|i| (0..c.cols()).map(move |j| (i, j)))
                .map(|(i, j)| (c.get(i, j) - w.get(j, i)).abs())
                .sum();
            Some(total / n)
        })
        .collect()
}

/// Error signals for one batch.
#[derive(Clone, Debug)]
pub struct ErrorSignals {
    /// `R` for hidden layers, batch × `N_{l+1}`.
    pub hidden: Vec<Matrix>,
    /// `T − O`.
    pub delta: Matrix,
    /// Incoming channel summation at each channel layer, before the channel
    /// transfer function.
    pub summations: Vec<Matrix>,
    /// Channel output at each hidden layer before the receiving forward
    /// layer applies `f′` (Distinct: the activities feeding the laterals).
    pub channel_activity: Vec<Matrix>,
}

impl ErrorSignals {
    /// Post-synaptic signal of weight layer `l`.
    pub fn signal(&self, l: usize) -> &Matrix {
        if l < self.hidden.len() {
            &self.hidden[l]
        } else {
            &self.delta
        }
    }

    pub fn is_finite(&self) -> bool {
        self.delta.is_finite() && self.hidden.iter().all(Matrix::is_finite)
    }
}

/// Per-layer inverted-dropout masks for the channel; `None` when `p_lc = 0`.
pub fn channel_dropout_mask(
    config: &ChannelConfig,
    net: &NetworkParams,
    batch: usize,
    rng: &mut RngStream,
) -> Option<Vec<Matrix>> {
    if config.dropout == 0.0 {
        return None;
    }
    Some(
        config
            .dropout_widths(net)
            .into_iter()
            .map(|w| sample_mask(batch, w, config.dropout, rng))
            .collect(),
    )
}

fn check_trace(net: &NetworkParams, trace: &ForwardTrace, delta: &Matrix) -> Result<()> {
    if trace.derivatives.len() + 1 != net.depth() || delta.shape() != trace.output().shape() {
        return Err(Error::Dimension {
            op: "backward",
            lhs: delta.shape(),
            rhs: trace.output().shape(),
        });
    }
    Ok(())
}

/// `R = f′ ⊙ g(u) ⊙ mask`.
/// Returns the channel output `g(u) ⊙ mask` and the delivered `f′ ⊙ g(u) ⊙ mask`.
fn finish_signal(
    u: &Matrix,
    deriv: &Matrix,
    g: TransferFunction,
    mask: Option<&Matrix>,
) -> Result<(Matrix, Matrix)> {
    let mut carried = g.apply_rows(u)?;
    if let Some(m) = mask {
        carried.hadamard_assign(m)?;
    }
    let r = carried.hadamard(deriv)?;
    Ok((carried, r))
}

/// Backpropagation: `R^h = f′ ⊙ g((W^{h+1})ᵗ R^{h+1})` with `g` the channel
/// transfer (identity for the exact gradient).
pub fn backward_bp(
    net: &NetworkParams,
    trace: &ForwardTrace,
    delta: &Matrix,
    transfer: ChannelTransfer,
    masks: Option<&[Matrix]>,
) -> Result<ErrorSignals> {
    check_trace(net, trace, delta)?;
    let hidden_count = net.depth() - 1;
    let mut hidden = vec![Matrix::zeros(0, 0); hidden_count];
    let mut summations = vec![Matrix::zeros(0, 0); hidden_count];
    let mut carried = vec![Matrix::zeros(0, 0); hidden_count];
    for l in (0..hidden_count).rev() {
        let above = if l + 1 < hidden_count { &hidden[l + 1] } else { delta };
        let u = above.matmul(&net.weights[l + 1])?;
        (carried[l], hidden[l]) = finish_signal(&u, &trace.derivatives[l], transfer.function(), masks.map(|m| &m[l]))?;
        summations[l] = u;
    }
    Ok(ErrorSignals {
        hidden,
        delta: delta.clone(),
        summations,
        channel_activity: carried,
    })
}

/// Random backpropagation: `R^h = f′ ⊙ g(C_h R^{h+1})`.
pub fn backward_rbp(
    net: &NetworkParams,
    channel: &ChannelParams,
    trace: &ForwardTrace,
    delta: &Matrix,
    transfer: ChannelTransfer,
    masks: Option<&[Matrix]>,
) -> Result<ErrorSignals> {
    check_trace(net, trace, delta)?;
    let hidden_count = net.depth() - 1;
    let mut hidden = vec![Matrix::zeros(0, 0); hidden_count];
    let mut summations = vec![Matrix::zeros(0, 0); hidden_count];
    let mut carried = vec![Matrix::zeros(0, 0); hidden_count];
    for l in (0..hidden_count).rev() {
        let above = if l + 1 < hidden_count { &hidden[l + 1] } else { delta };
        let u = above.matmul_nt(&channel.backward[l])?;
        (carried[l], hidden[l]) = finish_signal(&u, &trace.derivatives[l], transfer.function(), masks.map(|m| &m[l]))?;
        summations[l] = u;
    }
    Ok(ErrorSignals {
        hidden,
        delta: delta.clone(),
        summations,
        channel_activity: carried,
    })
}

/// Skipped random backpropagation: `R^h = f′ ⊙ g(C_h (T − O))`.
pub fn backward_srbp(
    net: &NetworkParams,
    channel: &ChannelParams,
    trace: &ForwardTrace,
    delta: &Matrix,
    transfer: ChannelTransfer,
    masks: Option<&[Matrix]>,
) -> Result<ErrorSignals> {
    check_trace(net, trace, delta)?;
    let hidden_count = net.depth() - 1;
    let mut hidden = Vec::with_capacity(hidden_count);
    let mut summations = Vec::with_capacity(hidden_count);
    let mut carried = Vec::with_capacity(hidden_count);
    for l in 0..hidden_count {
        let u = delta.matmul_nt(&channel.backward[l])?;
        let (c, r) = finish_signal(&u, &trace.derivatives[l], transfer.function(), masks.map(|m| &m[l]))?;
        hidden.push(r);
        carried.push(c);
        summations.push(u);
    }
    Ok(ErrorSignals {
        hidden,
        delta: delta.clone(),
        summations,
        channel_activity: carried,
    })
}

/// Distinct channel: the error travels through the channel's own units
/// (sequentially for RBP, skipping from the top for SRBP), then reaches each
/// forward layer through the lateral matrix: `R^h = f′ ⊙ C′_h z_h`.
///
/// Channel units have no access to forward derivatives, so only the local
/// `f′` of the receiving forward layer enters.
pub fn backward_distinct(
    net: &NetworkParams,
    config: &ChannelConfig,
    channel: &ChannelParams,
    trace: &ForwardTrace,
    delta: &Matrix,
    masks: Option<&[Matrix]>,
) -> Result<ErrorSignals> {
    check_trace(net, trace, delta)?;
    let hidden_count = net.depth() - 1;
    let g = config.transfer.function();
    let mut activity = vec![Matrix::zeros(0, 0); hidden_count];
    let mut summations = vec![Matrix::zeros(0, 0); hidden_count];
    for l in (0..hidden_count).rev() {
        let source = match config.algorithm {
            Algorithm::Srbp => delta,
            _ if l + 1 < hidden_count => &activity[l + 1],
            _ => delta,
        };
        let u = source.matmul_nt(&channel.backward[l])?;
        let mut z = g.apply_rows(&u)?;
        if let Some(m) = masks {
            z.hadamard_assign(&m[l])?;
        }
        activity[l] = z;
        summations[l] = u;
    }
    let hidden = (0..hidden_count)
        .map(|l| {
            let mut r = activity[l].matmul_nt(&channel.laterals[l])?;
            r.hadamard_assign(&trace.derivatives[l])?;
            Ok(r)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ErrorSignals {
        hidden,
        delta: delta.clone(),
        summations,
        channel_activity: activity,
    })
}

/// Dispatches on the configured algorithm and architecture.
pub fn backward(
    config: &ChannelConfig,
    net: &NetworkParams,
    channel: &ChannelParams,
    trace: &ForwardTrace,
    delta: &Matrix,
    masks: Option<&[Matrix]>,
) -> Result<ErrorSignals> {
    if config.is_distinct() {
        return backward_distinct(net, config, channel, trace, delta, masks);
    }
    match config.algorithm {
        Algorithm::Bp => backward_bp(net, trace, delta, config.transfer, masks),
        Algorithm::Rbp => backward_rbp(net, channel, trace, delta, config.transfer, masks),
        Algorithm::Srbp => backward_srbp(net, channel, trace, delta, config.transfer, masks),
    }
}

/// Weight and bias increments for the forward channel.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightDeltas {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

/// `ΔW = η/B · Rᵗ X` per layer, with `X` the presynaptic activity; bias
/// increments use presynaptic activity 1.
pub fn outer_updates(
    net: &NetworkParams,
    post: &[&Matrix],
    pre: &[&Matrix],
    eta: f64,
) -> Result<WeightDeltas> {
    let batch = post.first().map_or(1, |m| m.rows()).max(1);
    let scale = eta / batch as f64;
    let mut weights = Vec::with_capacity(net.depth());
    let mut biases = Vec::with_capacity(net.depth());
    for l in 0..net.depth() {
        let mut dw = post[l].matmul_tn(pre[l])?;
        dw.scale_assign(scale);
        weights.push(dw);
        let db = if net.layers()[l].has_bias {
            post[l].column_sums().into_iter().map(|v| v * scale).collect()
        } else {
            vec![0.0; net.layers()[l].size]
        };
        biases.push(db);
    }
    Ok(WeightDeltas { weights, biases })
}

/// `Δw^h_ij = η R^h_i O^{h−1}_j`, averaged over the batch.
pub fn forward_weight_update(
    net: &NetworkParams,
    trace: &ForwardTrace,
    signals: &ErrorSignals,
    eta: f64,
) -> Result<WeightDeltas> {
    let post: Vec<&Matrix> = (0..net.depth()).map(|l| signals.signal(l)).collect();
    let pre: Vec<&Matrix> = (0..net.depth()).map(|l| trace.presynaptic(l)).collect();
    outer_updates(net, &post, &pre, eta)
}

/// Hebbian channel update: the backward-flowing signal entering a channel
/// matrix times the forward activity of the receiving neuron,
/// `ΔC_h = η/B · (O^h)ᵗ R^{h+1}` for RBP and `η/B · (O^h)ᵗ (T − O)` for SRBP.
/// With a non-linear channel the forward activity is multiplied by the
/// channel unit's derivative at its incoming summation.
pub fn hebbian_channel_update(
    config: &ChannelConfig,
    net: &NetworkParams,
    trace: &ForwardTrace,
    signals: &ErrorSignals,
    eta: f64,
) -> Result<Vec<Matrix>> {
    if config.adaptivity != Adaptivity::Hebbian {
        return Err(Error::config(format!(
            "hebbian channel update requested with {:?} adaptivity",
            config.adaptivity
        )));
    }
    if config.is_distinct() || config.algorithm == Algorithm::Bp {
        return Err(Error::config("hebbian adaptation needs a Conjoined RBP or SRBP channel"));
    }
    let hidden_count = net.depth() - 1;
    let batch = signals.delta.rows().max(1) as f64;
    let g = config.transfer.function();
    (0..hidden_count)
        .map(|l| {
            let mut post = trace.outputs[l].clone();
            if config.transfer != ChannelTransfer::Linear {
                post.hadamard_assign(&g.derivative_rows(&signals.summations[l])?)?;
            }
            let incoming = match (config.algorithm, config.hebbian_signal) {
                (Algorithm::Srbp, _) => &signals.delta,
                (_, HebbianSignal::Delivered) => signals.signal(l + 1),
                (_, HebbianSignal::Carried) if l + 1 < hidden_count => &signals.channel_activity[l + 1],
                (_, HebbianSignal::Carried) => &signals.delta,
            };
            let mut dc = post.matmul_tn(incoming)?;
            dc.scale_assign(eta / batch);
            Ok(dc)
        })
        .collect()
}

/// Hidden-layer activity in the two non-free STDP phases.
#[derive(Clone, Debug)]
pub struct StdpPhases {
    /// `f(S^h + C_h O^L)`: output fed back through the channel.
    pub feedback: Vec<Matrix>,
    /// `f(S^h + C_h T)`: target clamped.
    pub clamped: Vec<Matrix>,
}

impl StdpPhases {
    /// `ΔO^h = O^h(clamped) − O^h(feedback)` for hidden layers.
    pub fn change(&self) -> Result<Vec<Matrix>> {
        self.clamped
            .iter()
            .zip(&self.feedback)
            .map(|(c, f)| c.sub(f))
            .collect()
    }
}

/// Each hidden layer receives its free-phase input plus the channel's
/// projection of either the output or the target; the perturbation is
/// local to the layer.
pub fn stdp_phases(
    net: &NetworkParams,
    channel: &ChannelParams,
    trace: &ForwardTrace,
    target: &Matrix,
) -> Result<StdpPhases> {
    let hidden_count = net.depth() - 1;
    let output = trace.output();
    let mut feedback = Vec::with_capacity(hidden_count);
    let mut clamped = Vec::with_capacity(hidden_count);
    for l in 0..hidden_count {
        let f = net.layers()[l].transfer;
        let mask = trace.masks[l].as_ref();
        let phase = |x: &Matrix| -> Result<Matrix> {
            let mut s = x.matmul_nt(&channel.backward[l])?;
            s.add_scaled(1.0, &trace.pre_activations[l])?;
            let mut o = f.apply_rows(&s)?;
            if let Some(m) = mask {
                o.hadamard_assign(m)?;
            }
            Ok(o)
        };
        feedback.push(phase(output)?);
        clamped.push(phase(target)?);
    }
    Ok(StdpPhases { feedback, clamped })
}

/// STDP increments: forward `ΔW^h = η ΔO^h (O^{h−1})ᵗ` with `ΔO^L = T − O`,
/// channel `ΔC_h = η_c (ΔO^h)ᵗ X` with `X = T` or `O^L` per the variant.
pub fn stdp_updates(
    config: &ChannelConfig,
    net: &NetworkParams,
    channel: &ChannelParams,
    trace: &ForwardTrace,
    target: &Matrix,
    eta: f64,
    channel_eta: f64,
) -> Result<(WeightDeltas, Vec<Matrix>)> {
    let phases = stdp_phases(net, channel, trace, target)?;
    let change = phases.change()?;
    let top = target.sub(trace.output())?;
    let depth = net.depth();
    let post: Vec<&Matrix> = change.iter().chain(std::iter::once(&top)).collect();
    let pre: Vec<&Matrix> = (0..depth)
        .map(|l| match config.stdp_variant {
            StdpVariant::Feedback if l > 0 => &phases.feedback[l - 1],
            _ => trace.presynaptic(l),
        })
        .collect();
    let forward = outer_updates(net, &post, &pre, eta)?;
    let partner = match config.stdp_variant {
        StdpVariant::Target => target,
        StdpVariant::Feedback => trace.output(),
    };
    let batch = target.rows().max(1) as f64;
    let channel_deltas = change
        .iter()
        .map(|d| {
            let mut dc = d.matmul_tn(partner)?;
            dc.scale_assign(channel_eta / batch);
            Ok(dc)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((forward, channel_deltas))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{forward, LayerSpec};

    fn linear_net(dims: &[usize], weights: Vec<Matrix>) -> NetworkParams {
        let layers = dims[1..]
            .iter()
            .map(|&n| LayerSpec::new(n, TransferFunction::Identity, false))
            .collect();
        NetworkParams::from_weights(dims[0], layers, weights, None).unwrap()
    }

    fn chain(a: &[f64]) -> NetworkParams {
        let dims = vec![1; a.len() + 1];
        linear_net(&dims, a.iter().map(|&v| Matrix::scalar(v)).collect())
    }

    #[test]
    fn bp_scalar_chain() {
        let net = chain(&[2.0, 3.0]);
        let (_, trace) = forward(&net, &Matrix::scalar(1.0), None).unwrap();
        let s = backward_bp(&net, &trace, &Matrix::scalar(0.4), ChannelTransfer::Linear, None).unwrap();
        assert!((s.hidden[0].get(0, 0) - 1.2).abs() < 1e-15);
    }

    #[test]
    fn saturated_derivatives_zero_signals() {
        let net = chain(&[2.0, 3.0, 4.0]);
        let (_, mut trace) = forward(&net, &Matrix::scalar(1.0), None).unwrap();
        for d in &mut trace.derivatives {
            *d = Matrix::zeros(1, 1);
        }
        let s = backward_bp(&net, &trace, &Matrix::scalar(0.4), ChannelTransfer::Linear, None).unwrap();
        assert!(s.hidden.iter().all(|r| r.get(0, 0) == 0.0));
    }

    #[test]
    fn srbp_dot_product() {
        let net = linear_net(&[1, 1, 2], vec![Matrix::scalar(1.0), Matrix::filled(2, 1, 1.0)]);
        let cfg = ChannelConfig::new(Algorithm::Srbp);
        let ch = ChannelParams::from_matrices(&cfg, &net, vec![Matrix::row_vector(&[1.0, -1.0])], vec![]).unwrap();
        let (_, trace) = forward(&net, &Matrix::scalar(1.0), None).unwrap();
        let delta = Matrix::row_vector(&[0.5, 0.25]);
        let s = backward_srbp(&net, &ch, &trace, &delta, ChannelTransfer::Linear, None).unwrap();
        assert_eq!(s.hidden[0].get(0, 0), 0.25);
        let zero = backward_srbp(&net, &ch, &trace, &Matrix::zeros(1, 2), ChannelTransfer::Linear, None).unwrap();
        assert_eq!(zero.hidden[0].get(0, 0), 0.0);
    }

    #[test]
    fn single_example_update() {
        // R = 0.5, O = 2, η = 0.1 → Δw = 0.1.
        let net = chain(&[1.0]);
        let post = Matrix::scalar(0.5);
        let pre = Matrix::scalar(2.0);
        let d = outer_updates(&net, &[&post], &[&pre], 0.1).unwrap();
        assert!((d.weights[0].get(0, 0) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn hebbian_chain_matches_forward_update() {
        // A[1,1,1]: Δc₁ = η(T − O)a₁I = Δa₂.
        let net = chain(&[0.7, -0.3]);
        let cfg = ChannelConfig::new(Algorithm::Rbp).with_adaptivity(Adaptivity::Hebbian);
        let ch = ChannelParams::from_matrices(&cfg, &net, vec![Matrix::scalar(0.2)], vec![]).unwrap();
        let x = Matrix::scalar(1.5);
        let (o, trace) = forward(&net, &x, None).unwrap();
        let t = Matrix::scalar(1.0);
        let delta = t.sub(&o).unwrap();
        let s = backward(&cfg, &net, &ch, &trace, &delta, None).unwrap();
        let dw = forward_weight_update(&net, &trace, &s, 0.05).unwrap();
        let dc = hebbian_channel_update(&cfg, &net, &trace, &s, 0.05).unwrap();
        let expected = 0.05 * delta.get(0, 0) * 0.7 * 1.5;
        assert!((dc[0].get(0, 0) - expected).abs() < 1e-15);
        assert_eq!(dc[0].get(0, 0), dw.weights[1].get(0, 0));
    }

    #[test]
    fn hebbian_rejects_fixed() {
        let net = chain(&[1.0, 1.0]);
        let cfg = ChannelConfig::new(Algorithm::Rbp);
        let (_, trace) = forward(&net, &Matrix::scalar(1.0), None).unwrap();
        let s = backward_bp(&net, &trace, &Matrix::scalar(1.0), ChannelTransfer::Linear, None).unwrap();
        assert!(matches!(
            hebbian_channel_update(&cfg, &net, &trace, &s, 0.1),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn stdp_chain_matches_averaged_system() {
        // One example: Δc₁ = η O c₁ (T − O), Δa₂ = η(T − O)(a₁I + c₁O).
        let (a1, a2, c1, i, t) = (0.6, -0.4, 0.3, 1.2, 0.9);
        let net = chain(&[a1, a2]);
        let mut cfg = ChannelConfig::new(Algorithm::Srbp).with_adaptivity(Adaptivity::Stdp);
        cfg.stdp_variant = StdpVariant::Feedback;
        let ch = ChannelParams::from_matrices(&cfg, &net, vec![Matrix::scalar(c1)], vec![]).unwrap();
        let (o, trace) = forward(&net, &Matrix::scalar(i), None).unwrap();
        let o = o.get(0, 0);
        let eta = 0.01;
        let (fw, dc) = stdp_updates(&cfg, &net, &ch, &trace, &Matrix::scalar(t), eta, eta).unwrap();
        assert!((dc[0].get(0, 0) - eta * o * c1 * (t - o)).abs() < 1e-15);
        assert!((fw.weights[1].get(0, 0) - eta * (t - o) * (a1 * i + c1 * o)).abs() < 1e-15);
        assert!((fw.weights[0].get(0, 0) - eta * c1 * (t - o) * i).abs() < 1e-15);
    }

    #[test]
    fn stdp_correct_output_is_stationary() {
        let net = chain(&[0.5, 2.0]);
        let cfg = ChannelConfig::new(Algorithm::Srbp).with_adaptivity(Adaptivity::Stdp);
        let ch = ChannelParams::from_matrices(&cfg, &net, vec![Matrix::scalar(0.3)], vec![]).unwrap();
        let (o, trace) = forward(&net, &Matrix::scalar(1.0), None).unwrap();
        let (fw, dc) = stdp_updates(&cfg, &net, &ch, &trace, &o, 0.1, 0.1).unwrap();
        assert!(fw.weights.iter().chain(&dc).all(|m| m.max_abs() == 0.0));
    }

    #[test]
    fn config_validation() {
        let net = chain(&[1.0, 1.0, 1.0]);
        let distinct_bp = ChannelConfig::new(Algorithm::Bp).with_architecture(Architecture::Distinct(vec![1, 1]));
        assert!(distinct_bp.validate(&net).is_err());
        let adaptive_bp = ChannelConfig::new(Algorithm::Bp).with_adaptivity(Adaptivity::Hebbian);
        assert!(adaptive_bp.validate(&net).is_err());
        let short = ChannelConfig::new(Algorithm::Rbp).with_architecture(Architecture::Distinct(vec![1]));
        assert!(short.validate(&net).is_err());
        let stdp_rbp = ChannelConfig::new(Algorithm::Rbp).with_adaptivity(Adaptivity::Stdp);
        assert!(stdp_rbp.validate(&net).is_err());
        let mut bad_drop = ChannelConfig::new(Algorithm::Rbp);
        bad_drop.dropout = 1.0;
        assert!(bad_drop.validate(&net).is_err());
    }

    #[test]
    fn zero_channel_dropout_is_no_mask() {
        let net = chain(&[1.0, 1.0]);
        let cfg = ChannelConfig::new(Algorithm::Rbp);
        assert!(channel_dropout_mask(&cfg, &net, 4, &mut RngStream::new(0)).is_none());
    }
}
