//! Classical RK4 with fixed or step-doubling adaptive control.

use serde::{Deserialize, Serialize};

use super::system::{InvariantClass, InvariantSpec, OdeSystem};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum StepControl {
    Fixed { h: f64 },
    /// Step doubling; `tol` bounds the local error relative to `max(1, ‖x‖∞)`.
    Adaptive { tol: f64, h0: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegrateOptions {
    pub t_max: f64,
    pub step: StepControl,
    /// Time between stored snapshots.
    pub sample_interval: f64,
    /// Halt once `‖RHS‖∞` stays below this for `rest_steps` steps.
    pub rest_tol: f64,
    /// `None` disables the rest halt.
    pub rest_steps: Option<usize>,
    /// State sup-norm above which the run is declared divergent.
    pub divergence_bound: f64,
    /// Smallest allowed step as a fraction of the nominal step.
    pub min_step_fraction: f64,
}

impl IntegrateOptions {
    pub fn fixed(t_max: f64, h: f64) -> Self {
        Self {
            t_max,
            step: StepControl::Fixed { h },
            sample_interval: 0.1,
            rest_tol: 1e-12,
            rest_steps: Some(100),
            divergence_bound: 1e8,
            min_step_fraction: 2f64.powi(-20),
        }
    }

    pub fn adaptive(t_max: f64, tol: f64) -> Self {
        Self {
            step: StepControl::Adaptive { tol, h0: 1e-3 },
            ..Self::fixed(t_max, 1e-3)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        let step_ok = match self.step {
            StepControl::Fixed { h } => ok(h),
            StepControl::Adaptive { tol, h0 } => ok(tol) && ok(h0),
        };
        if !(ok(self.t_max) && step_ok && ok(self.sample_interval) && ok(self.divergence_bound)) {
            return Err(Error::config("t_max, step, sample_interval and divergence_bound must be positive"));
        }
        if !(self.min_step_fraction > 0.0 && self.min_step_fraction < 1.0) {
            return Err(Error::config("min_step_fraction must lie in (0, 1)"));
        }
        Ok(())
    }

    fn nominal_step(&self) -> f64 {
        match self.step {
            StepControl::Fixed { h } => h,
            StepControl::Adaptive { h0, .. } => h0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Termination {
    /// Reached `t_max`.
    Completed,
    /// Right-hand side stayed negligible.
    AtRest,
    /// State exceeded the divergence bound.
    Diverged { reason: String },
    /// The right-hand side could not be evaluated even at the smallest step.
    Aborted { reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvariantTrack {
    pub name: String,
    pub class: InvariantClass,
    pub initial: Vec<f64>,
    /// Largest `|I(x(t)) − I(x(0))|` over every accepted step.
    pub max_drift: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub system: String,
    pub columns: Vec<String>,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub step_size: f64,
    pub order: u32,
    pub steps: usize,
    pub termination: Termination,
    pub final_rhs_norm: f64,
    pub invariants: Vec<InvariantTrack>,
}

impl Trajectory {
    pub fn initial(&self) -> &[f64] {
        &self.states[0]
    }

    pub fn last(&self) -> &[f64] {
        self.states.last().expect("trajectory holds the initial state")
    }

    pub fn t_final(&self) -> f64 {
        *self.times.last().expect("trajectory holds the initial time")
    }

    /// State at the first snapshot with time ≥ `t`, or the last one.
    pub fn state_at(&self, t: f64) -> &[f64] {
        let i = self.times.partition_point(|&s| s < t - 1e-12);
        &self.states[i.min(self.states.len() - 1)]
    }

    /// Delimited text: a `t` column followed by one column per state entry.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for c in &self.columns {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (t, x) in self.times.iter().zip(&self.states) {
            out.push_str(&format!("{t}"));
            for v in x {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

fn sup_norm(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

struct Stepper<'a> {
    sys: &'a OdeSystem,
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
}

enum StepFailure {
    NonFinite,
    Domain(String),
}

impl<'a> Stepper<'a> {
    fn new(sys: &'a OdeSystem) -> Self {
        let n = sys.len();
        Self {
            sys,
            k: [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            tmp: vec![0.0; n],
        }
    }

    fn eval(&mut self, x: &[f64], slot: usize) -> std::result::Result<(), StepFailure> {
        match self.sys.rhs(x, &mut self.k[slot]) {
            Ok(()) if self.k[slot].iter().all(|v| v.is_finite()) => Ok(()),
            Ok(()) => Err(StepFailure::NonFinite),
            Err(Error::Domain(msg)) => Err(StepFailure::Domain(msg)),
            Err(e) => Err(StepFailure::Domain(e.to_string())),
        }
    }

    /// One classical RK4 step.
    fn rk4(&mut self, x: &[f64], h: f64) -> std::result::Result<Vec<f64>, StepFailure> {
        let n = x.len();
        self.eval(x, 0)?;
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * h * self.k[0][i];
        }
        let tmp = std::mem::take(&mut self.tmp);
        let r = self.eval(&tmp, 1);
        self.tmp = tmp;
        r?;
        for i in 0..n {
            self.tmp[i] = x[i] + 0.5 * h * self.k[1][i];
        }
        let tmp = std::mem::take(&mut self.tmp);
        let r = self.eval(&tmp, 2);
        self.tmp = tmp;
        r?;
        for i in 0..n {
            self.tmp[i] = x[i] + h * self.k[2][i];
        }
        let tmp = std::mem::take(&mut self.tmp);
        let r = self.eval(&tmp, 3);
        self.tmp = tmp;
        r?;
        let out: Vec<f64> = (0..n)
            .map(|i| x[i] + h / 6.0 * (self.k[0][i] + 2.0 * self.k[1][i] + 2.0 * self.k[2][i] + self.k[3][i]))
            .collect();
        if out.iter().all(|v| v.is_finite()) {
            Ok(out)
        } else {
            Err(StepFailure::NonFinite)
        }
    }

    /// RK4 over `h`, splitting into halves whenever a stage fails.
    fn advance(&mut self, x: &[f64], h: f64, floor: f64) -> std::result::Result<Vec<f64>, String> {
        match self.rk4(x, h) {
            Ok(y) => Ok(y),
            Err(fail) => {
                if h / 2.0 < floor {
                    return Err(match fail {
                        StepFailure::NonFinite => format!("non-finite right-hand side at step floor {floor:e}"),
                        StepFailure::Domain(msg) => msg,
                    });
                }
                let mid = self.advance(x, h / 2.0, floor)?;
                self.advance(&mid, h / 2.0, floor)
            }
        }
    }

    fn rhs_norm(&mut self, x: &[f64]) -> f64 {
        match self.eval(x, 0) {
            Ok(()) => sup_norm(&self.k[0]),
            Err(_) => f64::NAN,
        }
    }
}

struct Monitor {
    specs: Vec<InvariantSpec>,
    tracks: Vec<InvariantTrack>,
}

impl Monitor {
    fn new(sys: &OdeSystem, x0: &[f64]) -> Self {
        let specs = sys.invariants(x0);
        let tracks = specs
            .iter()
            .map(|s| InvariantTrack {
                name: s.name.clone(),
                class: s.class,
                initial: sys.invariant_values(s, x0),
                max_drift: 0.0,
            })
            .collect();
        Self { specs, tracks }
    }

    fn observe(&mut self, sys: &OdeSystem, x: &[f64]) {
        for (spec, track) in self.specs.iter().zip(&mut self.tracks) {
            let now = sys.invariant_values(spec, x);
            for (a, b) in now.iter().zip(&track.initial) {
                let d = (a - b).abs();
                if d > track.max_drift || d.is_nan() {
                    track.max_drift = if d.is_nan() { f64::INFINITY } else { d };
                }
            }
        }
    }
}

/// Integrates `sys` from `x0` at `t = 0`.
pub fn integrate(sys: &OdeSystem, x0: &[f64], opts: &IntegrateOptions) -> Result<Trajectory> {
    sys.check_state(x0)?;
    opts.validate()?;
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::config("initial state must be finite"));
    }
    let mut stepper = Stepper::new(sys);
    let mut monitor = Monitor::new(sys, x0);
    let h_nominal = opts.nominal_step();
    let floor = h_nominal * opts.min_step_fraction;

    let mut times = vec![0.0];
    let mut states = vec![x0.to_vec()];
    let mut x = x0.to_vec();
    let mut t = 0.0;
    let mut steps = 0usize;
    let mut quiet = 0usize;
    let mut termination = Termination::Completed;
    let mut next_sample = opts.sample_interval;

    let fixed_count = match opts.step {
        StepControl::Fixed { h } => Some(((opts.t_max / h) - 1e-9).ceil().max(1.0) as usize),
        StepControl::Adaptive { .. } => None,
    };
    let stride = match opts.step {
        StepControl::Fixed { h } => ((opts.sample_interval / h).round() as usize).max(1),
        StepControl::Adaptive { .. } => 0,
    };
    let mut h_adapt = h_nominal;

    loop {
        let (y, t_new) = match (opts.step, fixed_count) {
            (StepControl::Fixed { h }, Some(n)) => {
                if steps >= n {
                    break;
                }
                let t_new = if steps + 1 == n { opts.t_max } else { (steps + 1) as f64 * h };
                match stepper.advance(&x, t_new - t, floor) {
                    Ok(y) => (y, t_new),
                    Err(reason) => {
                        termination = Termination::Aborted { reason };
                        break;
                    }
                }
            }
            (StepControl::Adaptive { tol, .. }, _) => {
                if t >= opts.t_max {
                    break;
                }
                match adaptive_step(&mut stepper, &x, &mut h_adapt, tol, opts.t_max - t, floor) {
                    Ok((y, taken)) => {
                        let t_new = if (opts.t_max - t - taken).abs() < 1e-12 * opts.t_max { opts.t_max } else { t + taken };
                        (y, t_new)
                    }
                    Err(reason) => {
                        termination = Termination::Aborted { reason };
                        break;
                    }
                }
            }
            _ => unreachable!(),
        };
        steps += 1;
        x = y;
        t = t_new;
        monitor.observe(sys, &x);

        let record = match opts.step {
            StepControl::Fixed { .. } => steps % stride == 0 || Some(steps) == fixed_count,
            StepControl::Adaptive { .. } => {
                let due = t >= next_sample - 1e-12 || t >= opts.t_max;
                while next_sample <= t + 1e-12 {
                    next_sample += opts.sample_interval;
                }
                due
            }
        };
        if sup_norm(&x) > opts.divergence_bound {
            times.push(t);
            states.push(x.clone());
            termination = Termination::Diverged {
                reason: format!("‖x‖∞ exceeded {:e} at t = {t}", opts.divergence_bound),
            };
            break;
        }
        let rhs = stepper.rhs_norm(&x);
        if let Some(limit) = opts.rest_steps {
            quiet = if rhs < opts.rest_tol { quiet + 1 } else { 0 };
            if quiet >= limit {
                times.push(t);
                states.push(x.clone());
                termination = Termination::AtRest;
                break;
            }
        }
        if record {
            times.push(t);
            states.push(x.clone());
        }
    }
    if times.last() != Some(&t) {
        times.push(t);
        states.push(x.clone());
    }
    let final_rhs_norm = stepper.rhs_norm(&x);
    Ok(Trajectory {
        system: sys.name.clone(),
        columns: sys.column_names(),
        times,
        states,
        step_size: h_nominal,
        order: 4,
        steps,
        termination,
        final_rhs_norm,
        invariants: monitor.tracks,
    })
}

/// Step doubling: compares one step of `h` with two of `h/2`; returns the
/// accepted fine solution and the step actually taken.
fn adaptive_step(
    stepper: &mut Stepper<'_>,
    x: &[f64],
    h: &mut f64,
    tol: f64,
    remaining: f64,
    floor: f64,
) -> std::result::Result<(Vec<f64>, f64), String> {
    loop {
        let step = h.min(remaining);
        let coarse = stepper.advance(x, step, floor);
        let fine = stepper
            .advance(x, step / 2.0, floor)
            .and_then(|mid| stepper.advance(&mid, step / 2.0, floor));
        let (coarse, fine) = match (coarse, fine) {
            (Ok(c), Ok(f)) => (c, f),
            (Err(e), _) | (_, Err(e)) => return Err(e),
        };
        let err = coarse.iter().zip(&fine).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / 15.0;
        let scale = sup_norm(&fine).max(1.0);
        let bound = tol * scale;
        let factor = if err == 0.0 { 5.0 } else { (0.9 * (bound / err).powf(0.2)).clamp(0.2, 5.0) };
        if err <= bound {
            *h = step * factor;
            return Ok((fine, step));
        }
        *h = step * factor;
        if *h < floor {
            return Err(format!("adaptive step fell below {floor:e}"));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode::system::Variant;


    // STDP chain with c1 = 0 and a1 = 1, α = 0, β = 1 reduces to da2/dt = −a2.
    fn decay() -> OdeSystem {
        OdeSystem::chain_stdp(0.0, 1.0).unwrap()
    }

    #[test]
    fn rk4_matches_exponential_decay() {
        let traj = integrate(&decay(), &[1.0, 1.0, 0.0], &IntegrateOptions::fixed(1.0, 1e-3)).unwrap();
        assert!((traj.last()[1] - (-1.0f64).exp()).abs() < 1e-8);
        assert_eq!(traj.t_final(), 1.0);
    }

    #[test]
    fn fourth_order_convergence() {
        let err = |h: f64| {
            let traj = integrate(&decay(), &[1.0, 1.0, 0.0], &IntegrateOptions::fixed(1.0, h)).unwrap();
            (traj.last()[1] - (-1.0f64).exp()).abs()
        };
        let ratio = err(0.1) / err(0.05);
        assert!((14.0..18.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn stationary_state_halts_at_rest() {
        let sys = OdeSystem::chain(2, Variant::Arbp, 1.0, 1.0).unwrap();
        let traj = integrate(&sys, &[1.0, 1.0, 0.5], &IntegrateOptions::fixed(10.0, 1e-2)).unwrap();
        assert_eq!(traj.termination, Termination::AtRest);
        assert!(traj.states.iter().all(|s| s == &[1.0, 1.0, 0.5]));
    }

    #[test]
    fn times_strictly_increase_and_sampling() {
        let sys = OdeSystem::chain(3, Variant::Arbp, 1.0, 1.0).unwrap();
        let traj = integrate(&sys, &[0.3, 0.2, 0.1, 0.2, 0.4], &IntegrateOptions::fixed(2.0, 1e-2)).unwrap();
        assert!(traj.times.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(traj.times.len(), 21);
        assert!((traj.times[10] - 1.0).abs() < 1e-12);
        let adaptive = integrate(&sys, &[0.3, 0.2, 0.1, 0.2, 0.4], &IntegrateOptions::adaptive(2.0, 1e-10)).unwrap();
        assert!(adaptive.times.windows(2).all(|w| w[1] > w[0]));
        let d = adaptive.last().iter().zip(traj.last()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(d < 1e-7, "adaptive vs fixed {d}");
    }

    #[test]
    fn domain_exit_aborts_with_partial_trajectory() {
        // μ = 1/2 with a target pulling a2 negative drives a1 to zero.
        let sys = OdeSystem::nonlinear_power(0.5, -1.0, 1.0).unwrap();
        let traj = integrate(&sys, &[0.05, 0.5, 0.5], &IntegrateOptions::fixed(50.0, 1e-2)).unwrap();
        assert!(matches!(traj.termination, Termination::Aborted { .. }), "{:?}", traj.termination);
        assert!(traj.t_final() < 50.0);
    }

    #[test]
    fn csv_has_header_and_rows() {
        let sys = OdeSystem::chain(2, Variant::Arbp, 1.0, 1.0).unwrap();
        let traj = integrate(&sys, &[0.1, 0.1, 0.1], &IntegrateOptions::fixed(0.2, 0.1)).unwrap();
        let csv = traj.to_csv();
        assert!(csv.starts_with("t,a1,a2,c1\n"));
        assert_eq!(csv.lines().count(), 1 + traj.times.len());
    }
}
