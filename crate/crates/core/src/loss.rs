use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::transfer::TransferFunction;

/// Error functions, each tied to the output transfer that makes its output
/// delta `∂E/∂S^L` collapse to `O − T` (the learning signal is `T − O`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Loss {
    /// `½‖T − O‖²` with an identity output.
    SquaredError,
    /// `−Σ T ln O` with a softmax output.
    CrossEntropySoftmax,
    /// `−Σ [T ln O + (1 − T) ln(1 − O)]` with logistic outputs.
    CrossEntropyLogistic,
}

const LOG_FLOOR: f64 = 1e-300;

impl Loss {
    /// The loss that pairs with a given output transfer, if any.
    pub fn for_output(output: TransferFunction) -> Option<Loss> {
        match output {
            TransferFunction::Identity => Some(Loss::SquaredError),
            TransferFunction::Softmax => Some(Loss::CrossEntropySoftmax),
            TransferFunction::Logistic => Some(Loss::CrossEntropyLogistic),
            _ => None,
        }
    }

    pub fn check_pairing(&self, output: TransferFunction) -> Result<()> {
        let expected = match self {
            Loss::SquaredError => TransferFunction::Identity,
            Loss::CrossEntropySoftmax => TransferFunction::Softmax,
            Loss::CrossEntropyLogistic => TransferFunction::Logistic,
        };
        if output != expected {
            return Err(Error::config(format!(
                "loss {self:?} requires a {expected:?} output layer, found {output:?}"
            )));
        }
        Ok(())
    }

    /// Sum of the per-example loss over a batch.
    pub fn total(&self, targets: &Matrix, outputs: &Matrix) -> Result<f64> {
        if targets.shape() != outputs.shape() {
            return Err(Error::Dimension {
                op: "loss",
                lhs: targets.shape(),
                rhs: outputs.shape(),
            });
        }
        let pairs = targets.data().iter().zip(outputs.data());
        Ok(match self {
            Loss::SquaredError => 0.5 * pairs.map(|(t, o)| (t - o) * (t - o)).sum::<f64>(),
            Loss::CrossEntropySoftmax => pairs
                .filter(|(t, _)| **t != 0.0)
                .map(|(t, o)| -t * o.max(LOG_FLOOR).ln())
                .sum(),
            Loss::CrossEntropyLogistic => pairs
                .map(|(t, o)| {
                    let mut v = 0.0;
                    if *t != 0.0 {
                        v -= t * o.max(LOG_FLOOR).ln();
                    }
                    if *t != 1.0 {
                        v -= (1.0 - t) * (1.0 - o).max(LOG_FLOOR).ln();
                    }
                    v
                })
                .sum(),
        })
    }

    pub fn mean(&self, targets: &Matrix, outputs: &Matrix) -> Result<f64> {
        Ok(self.total(targets, outputs)? / targets.rows().max(1) as f64)
    }
}

/// The top-layer learning signal `T − O`.
///
/// `output` is the transfer function of the top layer; a pairing other than
/// the matched one for `loss` is rejected because `T − O` would then not be
/// the negative gradient with respect to the top pre-activations.
pub fn output_delta(
    loss: Loss,
    output_transfer: TransferFunction,
    target: &Matrix,
    output: &Matrix,
) -> Result<Matrix> {
    loss.check_pairing(output_transfer)?;
    target.sub(output)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delta_is_target_minus_output() {
        let t = Matrix::row_vector(&[1.0, 0.0]);
        let o = Matrix::row_vector(&[0.6, 0.4]);
        let d = output_delta(Loss::CrossEntropySoftmax, TransferFunction::Softmax, &t, &o).unwrap();
        assert!((d.get(0, 0) - 0.4).abs() < 1e-15);
        assert!((d.get(0, 1) + 0.4).abs() < 1e-15);
        let zero = output_delta(Loss::SquaredError, TransferFunction::Identity, &t, &t).unwrap();
        assert!(zero.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mismatched_pairing_rejected() {
        let t = Matrix::row_vector(&[1.0]);
        let r = output_delta(Loss::SquaredError, TransferFunction::Tanh, &t, &t);
        assert!(matches!(r, Err(Error::Config(_))));
        assert!(Loss::for_output(TransferFunction::Relu).is_none());
    }

    #[test]
    fn squared_error_delta_is_negative_gradient() {
        // E = ½‖T − S‖² with identity output; central differences in S.
        let t = Matrix::row_vector(&[0.3, -1.2, 2.0]);
        let s = Matrix::row_vector(&[0.1, 0.5, -0.7]);
        let delta = output_delta(Loss::SquaredError, TransferFunction::Identity, &t, &s).unwrap();
        let h = 1e-5;
        for j in 0..3 {
            let mut plus = s.clone();
            let mut minus = s.clone();
            plus.set(0, j, s.get(0, j) + h);
            minus.set(0, j, s.get(0, j) - h);
            let grad = (Loss::SquaredError.total(&t, &plus).unwrap()
                - Loss::SquaredError.total(&t, &minus).unwrap())
                / (2.0 * h);
            assert!((delta.get(0, j) + grad).abs() < 1e-7);
        }
    }

    #[test]
    fn perfect_prediction_has_zero_cross_entropy() {
        let t = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert!(Loss::CrossEntropySoftmax.mean(&t, &t).unwrap().abs() < 1e-9);
        assert!(Loss::CrossEntropyLogistic.mean(&t, &t).unwrap().abs() < 1e-9);
    }
}
