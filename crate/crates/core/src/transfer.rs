use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Neuron transfer functions.
///
/// `Power(μ)` computes `s^μ`. For integer μ it is defined on the whole line;
/// otherwise only on `s ≥ 0`, and negative inputs are a domain error.
/// `Softmax` acts on a full layer and has no elementwise derivative, so it is
/// only legal on an output layer paired with cross-entropy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransferFunction {
    Identity,
    Tanh,
    Logistic,
    Relu,
    Softmax,
    Power(f64),
}

fn is_integer(mu: f64) -> bool {
    mu.fract() == 0.0
}

fn logistic(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

fn power(mu: f64, s: f64) -> Result<f64> {
    if is_integer(mu) && mu.abs() <= i32::MAX as f64 {
        Ok(s.powi(mu as i32))
    } else if s < 0.0 {
        Err(Error::Domain(format!(
            "power({mu}) is undefined for negative input {s}"
        )))
    } else {
        Ok(s.powf(mu))
    }
}

fn power_derivative(mu: f64, s: f64) -> Result<f64> {
    if is_integer(mu) && mu.abs() <= i32::MAX as f64 {
        return Ok(mu * s.powi(mu as i32 - 1));
    }
    if s < 0.0 {
        return Err(Error::Domain(format!(
            "power({mu}) derivative is undefined for negative input {s}"
        )));
    }
    let d = mu * s.powf(mu - 1.0);
    if !d.is_finite() {
        return Err(Error::Domain(format!(
            "power({mu}) derivative is unbounded at {s}"
        )));
    }
    Ok(d)
}

impl TransferFunction {
    pub fn is_softmax(&self) -> bool {
        matches!(self, TransferFunction::Softmax)
    }

    /// Applies the function to one layer vector.
    pub fn apply(&self, s: &[f64]) -> Result<Vec<f64>> {
        let mut out = s.to_vec();
        self.apply_in_place(&mut out)?;
        Ok(out)
    }

    pub fn apply_in_place(&self, s: &mut [f64]) -> Result<()> {
        match *self {
            TransferFunction::Identity => {}
            TransferFunction::Tanh => s.iter_mut().for_each(|v| *v = v.tanh()),
            TransferFunction::Logistic => s.iter_mut().for_each(|v| *v = logistic(*v)),
            TransferFunction::Relu => s.iter_mut().for_each(|v| *v = v.max(0.0)),
            TransferFunction::Softmax => softmax_in_place(s),
            TransferFunction::Power(mu) => {
                for v in s.iter_mut() {
                    *v = power(mu, *v)?;
                }
            }
        }
        Ok(())
    }

    /// Elementwise derivative at `s`.
    pub fn derivative(&self, s: &[f64]) -> Result<Vec<f64>> {
        s.iter().map(|&v| self.derivative_at(v)).collect()
    }

    pub fn derivative_at(&self, s: f64) -> Result<f64> {
        Ok(match *self {
            TransferFunction::Identity => 1.0,
            TransferFunction::Tanh => {
                let t = s.tanh();
                1.0 - t * t
            }
            TransferFunction::Logistic => {
                let l = logistic(s);
                l * (1.0 - l)
            }
            TransferFunction::Relu => {
                if s > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            TransferFunction::Softmax => {
                return Err(Error::config(
                    "softmax has no elementwise derivative; use it only as an output paired with cross-entropy",
                ))
            }
            TransferFunction::Power(mu) => power_derivative(mu, s)?,
        })
    }

    /// Row-wise application to a batch.
    pub fn apply_rows(&self, s: &Matrix) -> Result<Matrix> {
        let mut out = s.clone();
        for r in 0..out.rows() {
            self.apply_in_place(out.row_mut(r))?;
        }
        Ok(out)
    }

    pub fn derivative_rows(&self, s: &Matrix) -> Result<Matrix> {
        let mut out = s.clone();
        for v in out.data_mut() {
            *v = self.derivative_at(*v)?;
        }
        Ok(out)
    }
}

fn softmax_in_place(s: &mut [f64]) {
    let max = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in s.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in s.iter_mut() {
        *v /= total;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use TransferFunction::*;

    #[test]
    fn point_values() {
        assert_eq!(Tanh.apply(&[0.0]).unwrap(), vec![0.0]);
        assert_eq!(Softmax.apply(&[0.0, 0.0]).unwrap(), vec![0.5, 0.5]);
        let cube_root = Power(1.0 / 3.0).apply(&[8.0]).unwrap()[0];
        assert!((cube_root - 2.0).abs() < 1e-12);
    }

    #[test]
    fn derivative_values() {
        assert_eq!(Tanh.derivative_at(0.0).unwrap(), 1.0);
        assert_eq!(Relu.derivative_at(-1.0).unwrap(), 0.0);
        assert_eq!(Relu.derivative_at(2.0).unwrap(), 1.0);
        let h = 1e-5;
        let fd = (logistic(0.3 + h) - logistic(0.3 - h)) / (2.0 * h);
        assert!((Logistic.derivative_at(0.3).unwrap() - fd).abs() < 1e-8);
    }

    #[test]
    fn power_domain() {
        assert!(matches!(Power(0.5).apply(&[-1.0]), Err(Error::Domain(_))));
        assert!(Power(0.5).derivative_at(-1.0).is_err());
        assert_eq!(Power(3.0).apply(&[-2.0]).unwrap(), vec![-8.0]);
        assert_eq!(Power(2.0).derivative_at(-3.0).unwrap(), -6.0);
    }

    #[test]
    fn softmax_derivative_rejected() {
        assert!(matches!(Softmax.derivative_at(0.0), Err(Error::Config(_))));
    }

    #[test]
    fn bounded_ranges() {
        for s in [-50.0, -1.0, 0.0, 1.0, 50.0] {
            let t = Tanh.apply(&[s]).unwrap()[0];
            let l = Logistic.apply(&[s]).unwrap()[0];
            assert!((-1.0..=1.0).contains(&t));
            assert!((0.0..=1.0).contains(&l));
        }
        let big = Softmax.apply(&[1000.0, 0.0, -1000.0]).unwrap();
        assert!((big.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
