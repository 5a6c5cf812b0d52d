//! The ten acceptance criteria, one test each. Tests take a shared lock so
//! timings are not skewed by running side by side; each prints one line to
//! the real stderr handle, which the harness does not capture.

use std::io::Write;
use std::path::PathBuf;
use std::sync::Mutex;

use learnchan::verify::{run_criterion, CriterionResult, VerifyOptions};

static SERIAL: Mutex<()> = Mutex::new(());

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn criterion(id: u8) -> CriterionResult {
    let _guard = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let r = run_criterion(id, &VerifyOptions::new(configs()));
    let _ = writeln!(std::io::stderr(), "{}", r.line());
    r
}

fn check(id: u8) {
    let r = criterion(id);
    assert!(r.passed, "criterion {id} ({}) failed: {}", r.title, r.detail);
}

#[test]
fn c01_bp_matches_finite_differences() {
    check(1);
}

#[test]
fn c02_rbp_with_live_transposes_is_bp() {
    check(2);
}

#[test]
fn c03_mnist_desk_scale() {
    check(3);
}

#[test]
fn c04_bianchini_held_out() {
    check(4);
}

#[test]
fn c05_hebbian_arbp_instability() {
    check(5);
}

#[test]
fn c06_arbp_chains_converge() {
    check(6);
}

#[test]
fn c07_asrbp_chains_converge() {
    check(7);
}

#[test]
fn c08_matrix_systems() {
    check(8);
}

#[test]
fn c09_stdp_consistency() {
    check(9);
}

#[test]
fn c10_euler_consistency() {
    check(10);
}

/// Tolerances and budgets as the battery applies them.
#[test]
fn tolerances_are_pinned() {
    use learnchan::ode::AnalyzeOptions;
    let a = AnalyzeOptions::default();
    assert_eq!(a.residual_tol, 1e-6);
    assert_eq!(a.cauchy_tol, 1e-9);
    assert_eq!(a.rhs_tol, 1e-9);
    let src = include_str!("../src/verify.rs");
    for pinned in [
        "rel <= 1e-5",
        "worst <= 1e-12 && one_hidden <= 1e-12",
        "(\"mnist-conjoined-bp\", 0.97)",
        "(\"mnist-distinct-srbp\", 0.90)",
        "acc >= 0.95",
        "drop >= 0.05",
        "arbp_hits >= 2 && asrbp_hits >= 2",
        "self.worst_residual <= 1e-6 && self.worst_tracking <= 1e-9 && self.worst_error_gap <= 1e-8",
        "report.max_drift() <= 1e-9 && report.verdict.is_converged() && gap <= 1e-8",
        "(3.5..=4.5).contains(r)",
        "(1.7..=2.3).contains(r)",
        "[1.0, 1.0, 300.0, 600.0, f64::INFINITY, 30.0, 30.0, 60.0, 5.0, 10.0]",
    ] {
        assert!(src.contains(pinned), "tolerance changed: {pinned}");
    }
}
