//! Discrete full-batch learning on a matching network, compared with the ODE.

use serde::{Deserialize, Serialize};

use super::integrate::{integrate, IntegrateOptions, Termination};
use super::system::{Moments, OdeSystem, SystemKind, Variant};
use crate::channel::{Adaptivity, Algorithm, ChannelConfig, ChannelParams, StdpVariant};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::net::{LayerSpec, NetworkParams};
use crate::rng::RngStream;
use crate::trainer::{train_step, Optimizer};
use crate::transfer::TransferFunction;

/// RK4 substeps per learning step.
const SUBSTEPS: usize = 8;

/// Moments a system built for `dataset` must carry. `mu` selects the power
/// system's `α' = E(TI^μ)`, `β' = E(I^{2μ})`.
pub fn moments_for(dataset: &Dataset, mu: Option<f64>) -> Result<Moments> {
    let n = dataset.len();
    if n == 0 {
        return Err(Error::Data("empty dataset".into()));
    }
    let features = match mu {
        None => dataset.features.clone(),
        Some(mu) => {
            if dataset.input_dim() != 1 || dataset.output_dim() != 1 {
                return Err(Error::config("the power system needs scalar inputs and targets"));
            }
            dataset.features.map(|x| x.powf(mu))
        }
    };
    let scale = 1.0 / n as f64;
    let sigma_ii = features.matmul_tn(&features)?.scale(scale);
    let sigma_ti = dataset.targets.matmul_tn(&features)?.scale(scale);
    let target_energy = dataset.targets.data().iter().map(|t| t * t).sum::<f64>() * scale;
    Ok(Moments { sigma_ti, sigma_ii, target_energy })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgdComparison {
    pub eta: f64,
    pub steps: usize,
    pub t_final: f64,
    /// Sup over matched times of `‖x_sgd − x_ode‖∞`.
    pub max_gap: f64,
    pub final_gap: f64,
}

/// Network, channel configuration and channel matrices realizing `sys` at `x`.
pub fn network_for(sys: &OdeSystem, x: &[f64]) -> Result<(NetworkParams, ChannelConfig, ChannelParams)> {
    sys.check_state(x)?;
    let forward = sys.forward_matrices(x);
    let backward = sys.channel_matrices(x);
    let (hidden, config) = match &sys.kind {
        SystemKind::Chain { variant, .. } | SystemKind::GeneralLinear { variant, .. } => {
            let alg = match variant {
                Variant::Arbp => Algorithm::Rbp,
                Variant::Asrbp => Algorithm::Srbp,
            };
            (TransferFunction::Identity, ChannelConfig::new(alg).with_adaptivity(Adaptivity::Hebbian))
        }
        SystemKind::Expansive { .. } => (
            TransferFunction::Identity,
            ChannelConfig::new(Algorithm::Rbp).with_adaptivity(Adaptivity::Hebbian),
        ),
        SystemKind::ChainStdp => {
            let mut cfg = ChannelConfig::new(Algorithm::Srbp).with_adaptivity(Adaptivity::Stdp);
            cfg.stdp_variant = StdpVariant::Feedback;
            (TransferFunction::Identity, cfg)
        }
        SystemKind::NonlinearPower { mu } => (
            TransferFunction::Power(*mu),
            ChannelConfig::new(Algorithm::Rbp).with_adaptivity(Adaptivity::Hebbian),
        ),
    };
    let depth = forward.len();
    let layers: Vec<LayerSpec> = forward
        .iter()
        .enumerate()
        .map(|(l, w)| {
            let transfer = if l + 1 < depth { hidden } else { TransferFunction::Identity };
            LayerSpec::new(w.rows(), transfer, false)
        })
        .collect();
    let net = NetworkParams::from_weights(forward[0].cols(), layers, forward, None)?;
    let channel = ChannelParams::from_matrices(&config, &net, backward, Vec::new())?;
    Ok((net, config, channel))
}

/// Runs `steps` full-batch updates with rate `eta` from `x0` and compares
/// them with the ODE solution at `t = k·eta`.
pub fn sgd_vs_ode(sys: &OdeSystem, dataset: &Dataset, x0: &[f64], eta: f64, steps: usize) -> Result<SgdComparison> {
    if !(eta > 0.0 && eta.is_finite()) || steps == 0 {
        return Err(Error::config("sgd_vs_ode needs eta > 0 and steps ≥ 1"));
    }
    let mu = match sys.kind {
        SystemKind::NonlinearPower { mu } => Some(mu),
        _ => None,
    };
    let expected = moments_for(dataset, mu)?;
    let close = |a: &Matrix, b: &Matrix| {
        a.shape() == b.shape() && a.data().iter().zip(b.data()).all(|(u, v)| (u - v).abs() <= 1e-9 * u.abs().max(1.0))
    };
    if !close(&expected.sigma_ti, &sys.moments.sigma_ti) || !close(&expected.sigma_ii, &sys.moments.sigma_ii) {
        return Err(Error::config("system moments do not match the dataset"));
    }

    let h = eta / SUBSTEPS as f64;
    let mut opts = IntegrateOptions::fixed(steps as f64 * eta, h);
    opts.sample_interval = eta;
    opts.rest_steps = None;
    let traj = integrate(sys, x0, &opts)?;
    if traj.termination != Termination::Completed {
        return Err(Error::Domain(format!("ODE run ended early: {:?}", traj.termination)));
    }

    let (mut net, config, mut channel) = network_for(sys, x0)?;
    let mut optimizer = Optimizer::new(&net, &channel, 0.0);
    let mut rng = RngStream::new(0);
    let mut max_gap = 0.0f64;
    let mut final_gap = 0.0;
    for k in 1..=steps {
        train_step(
            &mut net,
            &config,
            &mut channel,
            &mut optimizer,
            &dataset.features,
            &dataset.targets,
            eta,
            eta,
            0.0,
            &mut rng,
        )?;
        if !net.is_finite() || !channel.is_finite() {
            return Err(Error::Domain(format!("discrete run diverged at step {k}")));
        }
        let x = sys.pack(&net.weights, &channel.backward)?;
        let ode = &traj.states[k.min(traj.states.len() - 1)];
        final_gap = x.iter().zip(ode).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        max_gap = max_gap.max(final_gap);
    }
    Ok(SgdComparison {
        eta,
        steps,
        t_final: traj.t_final(),
        max_gap,
        final_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_linear_stats, InputDistribution, LinearStatsSpec, TargetRule};

    fn data() -> Dataset {
        gen_linear_stats(&LinearStatsSpec {
            n: 50,
            input_dim: 1,
            output_dim: 1,
            input: InputDistribution::Normal { mean: 0.0, std_dev: 1.0 },
            target: TargetRule::Scaled(1.5),
            seed: 3,
        })
        .unwrap()
        .dataset
    }

    #[test]
    fn small_eta_tracks_ode() {
        let d = data();
        let sys = OdeSystem::chain_with(2, Variant::Arbp, moments_for(&d, None).unwrap()).unwrap();
        let cmp = sgd_vs_ode(&sys, &d, &[0.1, 0.1, 0.1], 1e-3, 5000).unwrap();
        assert!(cmp.final_gap <= 1e-2, "{cmp:?}");
        assert!((cmp.t_final - 5.0).abs() < 1e-9);
    }

    #[test]
    fn fixed_point_start_has_zero_gap() {
        let d = data();
        let m = moments_for(&d, None).unwrap();
        let p = m.alpha() / m.beta();
        let sys = OdeSystem::chain_with(2, Variant::Arbp, m).unwrap();
        let cmp = sgd_vs_ode(&sys, &d, &[p, 1.0, 1.0], 1e-2, 50).unwrap();
        assert!(cmp.max_gap < 1e-12, "{cmp:?}");
    }

    #[test]
    fn mismatched_moments_rejected() {
        let d = data();
        let sys = OdeSystem::chain(2, Variant::Arbp, 7.0, 1.0).unwrap();
        assert!(sgd_vs_ode(&sys, &d, &[0.1, 0.1, 0.1], 1e-2, 10).is_err());
    }
}
