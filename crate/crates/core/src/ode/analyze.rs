//! Convergence verdicts and invariant summaries for integrated trajectories.

use serde::{Deserialize, Serialize};

use super::integrate::{InvariantTrack, Termination, Trajectory};
use super::system::{InvariantClass, OdeSystem, RootClass};

/// Thresholds used by [`analyze`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeOptions {
    /// Length in time units of the trailing Cauchy window.
    pub cauchy_window: f64,
    /// Largest sup-norm movement inside the window that counts as settled.
    pub cauchy_tol: f64,
    /// Final `‖RHS‖∞` below which the state counts as stationary.
    pub rhs_tol: f64,
    /// Largest manifold residual compatible with a converged verdict.
    pub residual_tol: f64,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        Self {
            cauchy_window: 10.0,
            cauchy_tol: 1e-9,
            rhs_tol: 1e-9,
            residual_tol: 1e-6,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    /// Settled on the fixed-point manifold.
    Converged,
    /// Still moving at the end of the run.
    NotConverged,
    /// Settled, but away from the manifold.
    OffManifold,
    /// Left every bounded region or could not be continued.
    Diverged,
}

impl Verdict {
    pub fn is_converged(self) -> bool {
        self == Verdict::Converged
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvariantReport {
    pub system: String,
    pub t_final: f64,
    pub steps: usize,
    pub termination: Termination,
    pub invariants: Vec<InvariantTrack>,
    pub max_tracking_drift: f64,
    pub max_quadratic_drift: f64,
    /// `|α − βP|` or `‖Σ_TI − PΣ_II‖_F` at the final state.
    pub final_residual: f64,
    pub final_error: f64,
    pub error_minimum: Option<f64>,
    /// Largest sup-norm distance from the final state within the window.
    pub cauchy_movement: f64,
    pub cauchy_settled: bool,
    pub final_rhs_norm: f64,
    pub rhs_settled: bool,
    pub verdict: Verdict,
    pub root: Option<RootClass>,
    /// Convergence hypotheses that fail at the initial state.
    pub notes: Vec<String>,
}

impl InvariantReport {
    pub fn tracking_count(&self) -> usize {
        self.invariants.iter().filter(|i| i.class == InvariantClass::Tracking).count()
    }

    pub fn max_drift(&self) -> f64 {
        self.max_tracking_drift.max(self.max_quadratic_drift)
    }

    /// `|E_final − E_min|` when the minimum is known.
    pub fn error_gap(&self) -> Option<f64> {
        self.error_minimum.map(|m| (self.final_error - m).abs())
    }
}

pub fn analyze(traj: &Trajectory, sys: &OdeSystem) -> InvariantReport {
    analyze_with(traj, sys, &AnalyzeOptions::default())
}

pub fn analyze_with(traj: &Trajectory, sys: &OdeSystem, opts: &AnalyzeOptions) -> InvariantReport {
    let last = traj.last();
    let t_final = traj.t_final();
    let window_start = t_final - opts.cauchy_window;
    let cauchy_movement = traj
        .times
        .iter()
        .zip(&traj.states)
        .filter(|(t, _)| **t >= window_start)
        .map(|(_, x)| x.iter().zip(last).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())))
        .fold(0.0f64, f64::max);
    // A window shorter than requested only counts if the run came to rest.
    let full_window = traj.times[0] <= window_start || traj.termination == Termination::AtRest;
    let cauchy_settled = full_window && cauchy_movement <= opts.cauchy_tol;
    let rhs_settled = traj.final_rhs_norm <= opts.rhs_tol;
    let final_residual = sys.residual(last);

    let verdict = match traj.termination {
        Termination::Diverged { .. } | Termination::Aborted { .. } => Verdict::Diverged,
        _ if !last.iter().all(|v| v.is_finite()) => Verdict::Diverged,
        _ if cauchy_settled || rhs_settled => {
            if final_residual <= opts.residual_tol {
                Verdict::Converged
            } else {
                Verdict::OffManifold
            }
        }
        _ => Verdict::NotConverged,
    };

    let drift = |class| {
        traj.invariants
            .iter()
            .filter(|i| i.class == class)
            .map(|i| i.max_drift)
            .fold(0.0f64, f64::max)
    };
    let root = if verdict == Verdict::Converged { sys.classify_root(last, traj.initial()) } else { None };

    InvariantReport {
        system: sys.name.clone(),
        t_final,
        steps: traj.steps,
        termination: traj.termination.clone(),
        invariants: traj.invariants.clone(),
        max_tracking_drift: drift(InvariantClass::Tracking),
        max_quadratic_drift: drift(InvariantClass::Quadratic),
        final_residual,
        final_error: sys.error(last),
        error_minimum: sys.error_minimum(),
        cauchy_movement,
        cauchy_settled,
        final_rhs_norm: traj.final_rhs_norm,
        rhs_settled,
        verdict,
        root,
        notes: sys.hypothesis_notes(traj.initial()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode::integrate::{integrate, IntegrateOptions};
    use crate::ode::system::{Stability, Variant};

    #[test]
    fn constant_trajectory_on_manifold_converges() {
        let sys = OdeSystem::chain(2, Variant::Arbp, 1.0, 1.0).unwrap();
        let traj = integrate(&sys, &[2.0, 0.5, 0.5], &IntegrateOptions::fixed(5.0, 1e-2)).unwrap();
        let report = analyze(&traj, &sys);
        assert_eq!(report.verdict, Verdict::Converged);
        assert_eq!(report.max_drift(), 0.0);
    }

    #[test]
    fn small_init_converges_with_tracking() {
        let sys = OdeSystem::chain(2, Variant::Arbp, 1.0, 1.0).unwrap();
        let traj = integrate(&sys, &[0.1, 0.1, 0.1], &IntegrateOptions::fixed(100.0, 1e-3)).unwrap();
        let report = analyze(&traj, &sys);
        assert_eq!(report.verdict, Verdict::Converged);
        assert!(report.final_residual <= 1e-6);
        assert!(report.max_tracking_drift <= 1e-10);
        assert_eq!(report.root.unwrap().stability, Stability::Attractor);
    }

    #[test]
    fn zero_state_with_target_is_off_manifold() {
        let sys = OdeSystem::chain(3, Variant::Arbp, 1.0, 1.0).unwrap();
        let traj = integrate(&sys, &[0.0; 5], &IntegrateOptions::fixed(20.0, 1e-2)).unwrap();
        assert_eq!(analyze(&traj, &sys).verdict, Verdict::OffManifold);
    }
}
