//! The forward channel: a layered, fully connected network.
//!
//! Layer `h` (1-based, as in `A[N_0, …, N_L]`) owns a weight matrix of shape
//! `N_h × N_{h-1}` and an optional bias vector. Inputs are batches with one
//! example per row. Internally everything is 0-based: `weights[l]` maps layer
//! `l` activity onto layer `l + 1`.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, DatasetKind};
use crate::error::{Error, Result};
use crate::init::Initializer;
use crate::linalg::Matrix;
use crate::loss::Loss;
use crate::rng::RngStream;
use crate::transfer::TransferFunction;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub size: usize,
    pub transfer: TransferFunction,
    pub has_bias: bool,
}

impl LayerSpec {
    pub fn new(size: usize, transfer: TransferFunction, has_bias: bool) -> Self {
        Self {
            size,
            transfer,
            has_bias,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    input_size: usize,
    layers: Vec<LayerSpec>,
    loss: Loss,
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

impl NetworkParams {
    /// Samples weights with `init`; biases start at zero.
    pub fn new(
        input_size: usize,
        layers: Vec<LayerSpec>,
        init: &Initializer,
        rng: &mut RngStream,
    ) -> Result<Self> {
        let loss = validate_layers(input_size, &layers)?;
        let mut weights = Vec::with_capacity(layers.len());
        let mut fan_in = input_size;
        for layer in &layers {
            weights.push(init.sample(layer.size, fan_in, rng));
            fan_in = layer.size;
        }
        let biases = layers.iter().map(|l| vec![0.0; l.size]).collect();
        Ok(Self {
            input_size,
            layers,
            loss,
            weights,
            biases,
        })
    }

    /// Wraps explicit weights; biases default to zero when `None`.
    pub fn from_weights(
        input_size: usize,
        layers: Vec<LayerSpec>,
        weights: Vec<Matrix>,
        biases: Option<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        let loss = validate_layers(input_size, &layers)?;
        if weights.len() != layers.len() {
            return Err(Error::config(format!(
                "{} weight matrices for {} layers",
                weights.len(),
                layers.len()
            )));
        }
        let mut fan_in = input_size;
        for (w, layer) in weights.iter().zip(&layers) {
            if w.shape() != (layer.size, fan_in) {
                return Err(Error::Dimension {
                    op: "NetworkParams::from_weights",
                    lhs: w.shape(),
                    rhs: (layer.size, fan_in),
                });
            }
            fan_in = layer.size;
        }
        let biases = biases.unwrap_or_else(|| layers.iter().map(|l| vec![0.0; l.size]).collect());
        if biases.len() != layers.len() || biases.iter().zip(&layers).any(|(b, l)| b.len() != l.size)
        {
            return Err(Error::config("bias vectors do not match layer sizes"));
        }
        Ok(Self {
            input_size,
            layers,
            loss,
            weights,
            biases,
        })
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    /// Number of weight layers, `L`.
    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn output_size(&self) -> usize {
        self.layers.last().map_or(0, |l| l.size)
    }

    /// `[N_0, N_1, …, N_L]`.
    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_size)
            .chain(self.layers.iter().map(|l| l.size))
            .collect()
    }

    pub fn loss(&self) -> Loss {
        self.loss
    }

    pub fn output_transfer(&self) -> TransferFunction {
        self.layers.last().expect("validated non-empty").transfer
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(Matrix::is_finite)
            && self.biases.iter().flatten().all(|v| v.is_finite())
    }
}

fn validate_layers(input_size: usize, layers: &[LayerSpec]) -> Result<Loss> {
    if input_size == 0 {
        return Err(Error::config("input layer must have at least one unit"));
    }
    let Some(last) = layers.last() else {
        return Err(Error::config("network needs at least one layer"));
    };
    if let Some(i) = layers.iter().position(|l| l.size == 0) {
        return Err(Error::config(format!("layer {} has size 0", i + 1)));
    }
    if layers[..layers.len() - 1].iter().any(|l| l.transfer.is_softmax()) {
        return Err(Error::config("softmax is only allowed on the output layer"));
    }
    Loss::for_output(last.transfer).ok_or_else(|| {
        Error::config(format!(
            "output transfer {:?} has no matched loss (use identity, logistic or softmax)",
            last.transfer
        ))
    })
}

/// Per-hidden-layer dropout probabilities and the stream that draws masks.
pub struct Dropout<'a> {
    pub rates: &'a [f64],
    pub rng: &'a mut RngStream,
}

/// Everything the learning channels need from one forward pass.
///
/// `derivatives[l]` is the derivative of the activity hidden layer `l + 1`
/// actually emits, so it already carries that layer's dropout mask.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    pub inputs: Matrix,
    /// `S^h` for every layer.
    pub pre_activations: Vec<Matrix>,
    /// `f(S^h)` before any mask.
    pub activations: Vec<Matrix>,
    /// Emitted activity: `f(S^h) ⊙ mask` where a mask exists.
    pub outputs: Vec<Matrix>,
    /// Hidden layers only.
    pub derivatives: Vec<Matrix>,
    /// Hidden layers only; entries are 0 or `1/(1-p)`.
    pub masks: Vec<Option<Matrix>>,
}

impl ForwardTrace {
    pub fn batch_size(&self) -> usize {
        self.inputs.rows()
    }

    /// Presynaptic activity for weight layer `l` (0-based).
    pub fn presynaptic(&self, l: usize) -> &Matrix {
        if l == 0 {
            &self.inputs
        } else {
            &self.outputs[l - 1]
        }
    }

    pub fn output(&self) -> &Matrix {
        self.outputs.last().expect("trace of a non-empty network")
    }
}

fn pre_activation(net: &NetworkParams, l: usize, below: &Matrix) -> Result<Matrix> {
    let mut s = below.matmul_nt(&net.weights[l])?;
    if net.layers[l].has_bias {
        s.add_row_broadcast(&net.biases[l])?;
    }
    Ok(s)
}

/// Runs the forward channel on a batch.
///
/// With `dropout`, each hidden unit is dropped with its layer's probability
/// and survivors are scaled by `1/(1-p)`. The output layer is never dropped.
pub fn forward(
    net: &NetworkParams,
    inputs: &Matrix,
    mut dropout: Option<Dropout<'_>>,
) -> Result<(Matrix, ForwardTrace)> {
    if inputs.cols() != net.input_size {
        return Err(Error::Dimension {
            op: "forward",
            lhs: inputs.shape(),
            rhs: (inputs.rows(), net.input_size),
        });
    }
    let depth = net.depth();
    if let Some(d) = &dropout {
        if d.rates.len() != depth - 1 {
            return Err(Error::config(format!(
                "{} dropout rates for {} hidden layers",
                d.rates.len(),
                depth - 1
            )));
        }
        if let Some(p) = d.rates.iter().find(|p| !(0.0..1.0).contains(*p)) {
            return Err(Error::config(format!("dropout probability {p} outside [0, 1)")));
        }
    }

    let mut trace = ForwardTrace {
        inputs: inputs.clone(),
        pre_activations: Vec::with_capacity(depth),
        activations: Vec::with_capacity(depth),
        outputs: Vec::with_capacity(depth),
        derivatives: Vec::with_capacity(depth.saturating_sub(1)),
        masks: Vec::with_capacity(depth.saturating_sub(1)),
    };
    for l in 0..depth {
        let s = pre_activation(net, l, trace.presynaptic(l))?;
        let transfer = net.layers[l].transfer;
        let o = transfer.apply_rows(&s)?;
        if l + 1 < depth {
            let mut deriv = transfer.derivative_rows(&s)?;
            let mask = match dropout.as_mut() {
                Some(d) if d.rates[l] > 0.0 => Some(sample_mask(s.rows(), s.cols(), d.rates[l], d.rng)),
                _ => None,
            };
            let emitted = match &mask {
                Some(m) => {
                    deriv.hadamard_assign(m)?;
                    o.hadamard(m)?
                }
                None => o.clone(),
            };
            trace.derivatives.push(deriv);
            trace.masks.push(mask);
            trace.outputs.push(emitted);
        } else {
            trace.outputs.push(o.clone());
        }
        trace.pre_activations.push(s);
        trace.activations.push(o);
    }
    Ok((trace.output().clone(), trace))
}

/// Inverted-dropout mask: 0 with probability `p`, else `1/(1-p)`.
pub fn sample_mask(rows: usize, cols: usize, p: f64, rng: &mut RngStream) -> Matrix {
    let keep = 1.0 / (1.0 - p);
    Matrix::from_fn(rows, cols, |_, _| if rng.bernoulli(p) { 0.0 } else { keep })
}

/// Forward pass without a trace or dropout.
pub fn predict(net: &NetworkParams, inputs: &Matrix) -> Result<Matrix> {
    if inputs.cols() != net.input_size {
        return Err(Error::Dimension {
            op: "predict",
            lhs: inputs.shape(),
            rhs: (inputs.rows(), net.input_size),
        });
    }
    let mut o = inputs.clone();
    for l in 0..net.depth() {
        let s = pre_activation(net, l, &o)?;
        o = net.layers[l].transfer.apply_rows(&s)?;
    }
    Ok(o)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Score {
    /// Mean per-example loss.
    pub loss: f64,
    /// `None` for regression data.
    pub accuracy: Option<f64>,
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Predicted class of one output row. A single logistic unit is read as a
/// binary classifier thresholded at 0.5 (exactly 0.5 counts as class 0).
pub fn predicted_class(row: &[f64]) -> usize {
    if row.len() == 1 {
        usize::from(row[0] > 0.5)
    } else {
        argmax(row)
    }
}

const EVAL_CHUNK: usize = 1000;

/// Loss and accuracy over a dataset, always without dropout.
pub fn predict_and_score(net: &NetworkParams, data: &Dataset) -> Result<Score> {
    let n = data.len();
    if n == 0 {
        return Err(Error::Data("cannot score an empty dataset".into()));
    }
    if data.features.cols() != net.input_size || data.targets.cols() != net.output_size() {
        return Err(Error::Dimension {
            op: "predict_and_score",
            lhs: (data.features.cols(), data.targets.cols()),
            rhs: (net.input_size, net.output_size()),
        });
    }
    let mut total_loss = 0.0;
    let mut correct = 0usize;
    let mut start = 0;
    while start < n {
        let end = (start + EVAL_CHUNK).min(n);
        let x = data.features.row_range(start, end);
        let t = data.targets.row_range(start, end);
        let o = predict(net, &x)?;
        total_loss += net.loss.total(&t, &o)?;
        for r in 0..o.rows() {
            if predicted_class(o.row(r)) == predicted_class(t.row(r)) {
                correct += 1;
            }
        }
        start = end;
    }
    let accuracy = match data.kind {
        DatasetKind::Classification => Some(correct as f64 / n as f64),
        DatasetKind::Regression => None,
    };
    Ok(Score {
        loss: total_loss / n as f64,
        accuracy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init::ScaleRule;

    fn linear_chain(weights: &[f64]) -> NetworkParams {
        let layers = weights
            .iter()
            .map(|_| LayerSpec::new(1, TransferFunction::Identity, false))
            .collect();
        let w = weights.iter().map(|&a| Matrix::scalar(a)).collect();
        NetworkParams::from_weights(1, layers, w, None).unwrap()
    }

    #[test]
    fn linear_chain_multiplies_weights() {
        let net = linear_chain(&[2.0, 3.0]);
        let (o, trace) = forward(&net, &Matrix::scalar(1.0), None).unwrap();
        assert_eq!(o.get(0, 0), 6.0);
        assert_eq!(trace.outputs[0].get(0, 0), 2.0);
    }

    #[test]
    fn zero_tanh_net_is_uniform() {
        let layers = vec![
            LayerSpec::new(4, TransferFunction::Tanh, true),
            LayerSpec::new(3, TransferFunction::Softmax, true),
        ];
        let net = NetworkParams::new(5, layers, &Initializer::zero(), &mut RngStream::new(0)).unwrap();
        let x = Matrix::from_fn(2, 5, |r, c| (r + c) as f64 - 2.0);
        let (o, trace) = forward(&net, &x, None).unwrap();
        assert!(trace.outputs[0].data().iter().all(|&v| v == 0.0));
        assert!(o.data().iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn zero_rate_dropout_matches_plain_pass() {
        let layers = vec![
            LayerSpec::new(6, TransferFunction::Tanh, true),
            LayerSpec::new(2, TransferFunction::Softmax, true),
        ];
        let mut rng = RngStream::new(4);
        let net = NetworkParams::new(3, layers, &Initializer::scaled_normal(ScaleRule::Glorot), &mut rng).unwrap();
        let x = Matrix::from_fn(4, 3, |r, c| (r as f64 - c as f64) * 0.3);
        let (plain, _) = forward(&net, &x, None).unwrap();
        let mut drng = RngStream::new(5);
        let (dropped, trace) = forward(
            &net,
            &x,
            Some(Dropout {
                rates: &[0.0],
                rng: &mut drng,
            }),
        )
        .unwrap();
        assert_eq!(plain, dropped);
        assert!(trace.masks[0].is_none());
    }

    #[test]
    fn trace_recomputes_activations() {
        let layers = vec![
            LayerSpec::new(5, TransferFunction::Logistic, true),
            LayerSpec::new(5, TransferFunction::Tanh, true),
            LayerSpec::new(2, TransferFunction::Softmax, true),
        ];
        let mut rng = RngStream::new(11);
        let net = NetworkParams::new(3, layers, &Initializer::scaled_normal(ScaleRule::Glorot), &mut rng).unwrap();
        let x = Matrix::from_fn(3, 3, |r, c| (r * 3 + c) as f64 * 0.1);
        let mut drng = RngStream::new(12);
        let (_, trace) = forward(
            &net,
            &x,
            Some(Dropout {
                rates: &[0.5, 0.5],
                rng: &mut drng,
            }),
        )
        .unwrap();
        for l in 0..net.depth() {
            let again = net.layers()[l].transfer.apply_rows(&trace.pre_activations[l]).unwrap();
            assert_eq!(again, trace.activations[l]);
        }
    }

    #[test]
    fn width_mismatch_is_error() {
        let net = linear_chain(&[1.0]);
        assert!(forward(&net, &Matrix::zeros(1, 2), None).is_err());
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(predicted_class(&[0.5]), 0);
        assert_eq!(predicted_class(&[0.51]), 1);
    }

    #[test]
    fn softmax_hidden_layer_rejected() {
        let layers = vec![
            LayerSpec::new(2, TransferFunction::Softmax, false),
            LayerSpec::new(2, TransferFunction::Softmax, false),
        ];
        assert!(NetworkParams::new(2, layers, &Initializer::zero(), &mut RngStream::new(0)).is_err());
        let bad_out = vec![LayerSpec::new(2, TransferFunction::Tanh, false)];
        assert!(NetworkParams::new(2, bad_out, &Initializer::zero(), &mut RngStream::new(0)).is_err());
    }
}
