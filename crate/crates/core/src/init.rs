use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use crate::rng::RngStream;

/// How the variance of a scaled initializer is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScaleRule {
    /// Variance `2 / (fanin + fanout)`.
    Glorot,
    /// Variance `1 / (fanin + fanout)`.
    HalfGlorot,
    /// Variance given directly.
    Variance(f64),
}

impl ScaleRule {
    pub fn variance(&self, fan_in: usize, fan_out: usize) -> f64 {
        let fans = (fan_in + fan_out) as f64;
        match *self {
            ScaleRule::Glorot => 2.0 / fans,
            ScaleRule::HalfGlorot => 1.0 / fans,
            ScaleRule::Variance(v) => v,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitKind {
    ScaledNormal,
    ScaledUniform,
    Zero,
    Constant,
}

/// Weight initializer.
///
/// For a `rows × cols` matrix the fan-in is `cols` and the fan-out is `rows`
/// (weights map a `cols`-wide layer onto a `rows`-wide one). Scaled-uniform
/// draws from `U(-√(3v), √(3v))`, which has the same variance `v` as the
/// scaled-normal variant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Initializer {
    pub kind: InitKind,
    #[serde(default = "default_rule")]
    pub scale: ScaleRule,
    /// Only read by [`InitKind::Constant`].
    #[serde(default)]
    pub value: f64,
}

fn default_rule() -> ScaleRule {
    ScaleRule::Glorot
}

impl Initializer {
    pub fn scaled_normal(scale: ScaleRule) -> Self {
        Self {
            kind: InitKind::ScaledNormal,
            scale,
            value: 0.0,
        }
    }

    pub fn scaled_uniform(scale: ScaleRule) -> Self {
        Self {
            kind: InitKind::ScaledUniform,
            scale,
            value: 0.0,
        }
    }

    pub fn zero() -> Self {
        Self {
            kind: InitKind::Zero,
            scale: ScaleRule::Glorot,
            value: 0.0,
        }
    }

    pub fn constant(value: f64) -> Self {
        Self {
            kind: InitKind::Constant,
            scale: ScaleRule::Glorot,
            value,
        }
    }

    pub fn sample(&self, rows: usize, cols: usize, rng: &mut RngStream) -> Matrix {
        match self.kind {
            InitKind::Zero => Matrix::zeros(rows, cols),
            InitKind::Constant => Matrix::filled(rows, cols, self.value),
            InitKind::ScaledNormal => {
                let sd = self.scale.variance(cols, rows).sqrt();
                Matrix::from_fn(rows, cols, |_, _| sd * rng.standard_normal())
            }
            InitKind::ScaledUniform => {
                let half_width = (3.0 * self.scale.variance(cols, rows)).sqrt();
                Matrix::from_fn(rows, cols, |_, _| rng.uniform_range(-half_width, half_width))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn moments(m: &[f64]) -> (f64, f64) {
        let n = m.len() as f64;
        let mean = m.iter().sum::<f64>() / n;
        let var = m.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, var)
    }

    #[test]
    fn zero_init_is_zero() {
        let m = Initializer::zero().sample(3, 3, &mut RngStream::new(1));
        assert!(m.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scaled_normal_variance_matches_glorot() {
        let mut rng = RngStream::new(2024);
        let init = Initializer::scaled_normal(ScaleRule::Glorot);
        let mut pooled = Vec::with_capacity(1_000_000);
        for _ in 0..100 {
            pooled.extend_from_slice(init.sample(100, 100, &mut rng).data());
        }
        let (mean, var) = moments(&pooled);
        assert!((var - 0.01).abs() <= 0.05 * 0.01, "var={var}");
        assert!(mean.abs() < 1e-3);
    }

    #[test]
    fn scaled_uniform_variance_matches_rule() {
        let mut rng = RngStream::new(5);
        let init = Initializer::scaled_uniform(ScaleRule::HalfGlorot);
        let m = init.sample(300, 500, &mut rng);
        let (mean, var) = moments(m.data());
        assert!((var - 1.0 / 800.0).abs() <= 0.05 / 800.0);
        assert!(mean.abs() < 1e-3);
    }

    #[test]
    fn deterministic_from_seed() {
        let init = Initializer::scaled_normal(ScaleRule::Glorot);
        let a = init.sample(10, 20, &mut RngStream::new(9));
        let b = init.sample(10, 20, &mut RngStream::new(9));
        assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}
