//! Gradient flow on `E = ½E‖T − A_L⋯A_1 I‖²`, integrated on its own so it can
//! serve as a reference for the channel dynamics with zero tracking offset.

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// `−∂E/∂A_i = (A_L⋯A_{i+1})ᵗ (Σ_TI − PΣ_II) (A_{i−1}⋯A_1)ᵗ`.
pub fn negative_gradient(weights: &[Matrix], sigma_ti: &Matrix, sigma_ii: &Matrix) -> Result<Vec<Matrix>> {
    let l = weights.len();
    if l == 0 {
        return Err(Error::config("gradient flow needs at least one weight matrix"));
    }
    // below[i] = A_i ⋯ A_1, with below[0] the identity on the input.
    let mut below = vec![Matrix::identity(weights[0].cols())];
    for w in weights {
        let next = w.matmul(below.last().expect("non-empty"))?;
        below.push(next);
    }
    let residual = sigma_ti.sub(&below[l].matmul(sigma_ii)?)?;
    // above[i] = A_L ⋯ A_{i+1}, with above[l] the identity on the output.
    let mut above = vec![Matrix::identity(weights[l - 1].rows()); l + 1];
    for i in (0..l).rev() {
        above[i] = above[i + 1].matmul(&weights[i])?;
    }
    (0..l)
        .map(|i| above[i + 1].matmul_tn(&residual)?.matmul_nt(&below[i]))
        .collect()
}

/// Fixed-step RK4 of the gradient flow; returns `(t, weights)` every `stride` steps.
pub fn gradient_flow(
    init: &[Matrix],
    sigma_ti: &Matrix,
    sigma_ii: &Matrix,
    h: f64,
    steps: usize,
    stride: usize,
) -> Result<Vec<(f64, Vec<Matrix>)>> {
    if !(h > 0.0 && h.is_finite()) || stride == 0 {
        return Err(Error::config("gradient flow needs h > 0 and stride ≥ 1"));
    }
    let shift = |w: &[Matrix], k: &[Matrix], s: f64| -> Result<Vec<Matrix>> {
        w.iter()
            .zip(k)
            .map(|(a, d)| {
                let mut out = a.clone();
                out.add_scaled(s, d)?;
                Ok(out)
            })
            .collect()
    };
    let mut w = init.to_vec();
    let mut out = vec![(0.0, w.clone())];
    for n in 1..=steps {
        let k1 = negative_gradient(&w, sigma_ti, sigma_ii)?;
        let k2 = negative_gradient(&shift(&w, &k1, h / 2.0)?, sigma_ti, sigma_ii)?;
        let k3 = negative_gradient(&shift(&w, &k2, h / 2.0)?, sigma_ti, sigma_ii)?;
        let k4 = negative_gradient(&shift(&w, &k3, h)?, sigma_ti, sigma_ii)?;
        for (i, a) in w.iter_mut().enumerate() {
            a.add_scaled(h / 6.0, &k1[i])?;
            a.add_scaled(h / 3.0, &k2[i])?;
            a.add_scaled(h / 3.0, &k3[i])?;
            a.add_scaled(h / 6.0, &k4[i])?;
        }
        if n % stride == 0 || n == steps {
            out.push((n as f64 * h, w.clone()));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_gradient() {
        let w = [Matrix::scalar(0.5), Matrix::scalar(2.0)];
        let g = negative_gradient(&w, &Matrix::scalar(3.0), &Matrix::scalar(1.0)).unwrap();
        // r = 3 − 1; dE/da1 = −a2 r, dE/da2 = −a1 r.
        assert_eq!(g[0].get(0, 0), 4.0);
        assert_eq!(g[1].get(0, 0), 1.0);
    }

    #[test]
    fn flow_decreases_error() {
        let w = vec![Matrix::from_rows(&[vec![0.1, 0.2], vec![-0.3, 0.1]]).unwrap(), Matrix::from_rows(&[vec![0.4, 0.2]]).unwrap()];
        let sti = Matrix::from_rows(&[vec![1.0, -0.5]]).unwrap();
        let sii = Matrix::identity(2);
        let err = |w: &[Matrix]| {
            let p = w[1].matmul(&w[0]).unwrap();
            sti.sub(&p).unwrap().frobenius_norm()
        };
        let path = gradient_flow(&w, &sti, &sii, 1e-2, 2000, 100).unwrap();
        assert!(err(&path.last().unwrap().1) < err(&w) * 1e-3);
    }
}
