//! Averaged learning dynamics: system builders, RK4 integration, invariant
//! monitoring, convergence verdicts and discrete-versus-continuous checks.

mod analyze;
mod gradient;
mod integrate;
mod sgd;
mod system;

pub use analyze::{analyze, analyze_with, AnalyzeOptions, InvariantReport, Verdict};
pub use gradient::{gradient_flow, negative_gradient};
pub use integrate::{integrate, IntegrateOptions, InvariantTrack, StepControl, Termination, Trajectory};
pub use sgd::{moments_for, network_for, sgd_vs_ode, SgdComparison};
pub use system::{
    classify_signs, Block, InvariantClass, InvariantSpec, Moments, OdeSystem, RootClass, Sign, Stability, SystemKind,
    Variant, MAX_STATE_ENTRIES,
};
