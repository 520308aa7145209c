//! Steady states of the constant-flow cascade and their continuation in Da.
//!
//! The branch is walked with the determinant-sign scheme: the state follows
//! the Euler predictor `-J^-1 w sign(det J) dp` while the parameter moves by
//! `sign(det J) dp`, so the walk turns around by itself at every fold. Newton
//! corrections at fixed Da are interleaved to keep the predictor on the curve.

use log::debug;

use crate::continuation::{walk, Branch};
use crate::error::{Error, Result};
use crate::linalg::{sign, Mat2, SINGULAR_DET};
use crate::model::{
    alpha_out, dphi_dalpha, dphi_dda, phi, CascadeState, Damkohler, FlowDirection, ModelParams,
    Phase,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyResidual {
    pub f1: f64,
    pub f2: f64,
}

impl SteadyResidual {
    pub fn norm_inf(&self) -> f64 {
        self.f1.abs().max(self.f2.abs())
    }
}

/// Initial direction of travel in the continuation parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Increasing,
    Decreasing,
}

/// Settings shared by the steady and periodic branch tracers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContinuationSettings {
    /// Parameter increment per continuation step.
    pub dp: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub max_steps: usize,
    /// Apply a Newton correction every this many steps (0 disables it).
    pub refine_every: usize,
    /// Skip the correction when `|det J|` is below this value.
    pub det_threshold: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Corrections moving the state further than this are rejected as branch jumps.
    pub max_correction: f64,
    /// How often a failing step may be retried with half the increment.
    pub max_halvings: usize,
    pub direction: Direction,
}

impl Default for ContinuationSettings {
    fn default() -> Self {
        Self {
            dp: 1e-5,
            p_min: 0.001,
            p_max: 0.06,
            max_steps: 2_000_000,
            refine_every: 1,
            det_threshold: 1e-8,
            newton_tol: 1e-12,
            newton_max_iter: 20,
            max_correction: 1e-2,
            max_halvings: 8,
            direction: Direction::Increasing,
        }
    }
}

impl ContinuationSettings {
    pub fn with_range(p_min: f64, p_max: f64) -> Self {
        Self {
            p_min,
            p_max,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dp.is_finite() && self.dp > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "continuation increment must be positive, got {}",
                self.dp
            )));
        }
        if self.p_min.partial_cmp(&self.p_max) != Some(std::cmp::Ordering::Less) {
            return Err(Error::InvalidParameter(format!(
                "empty parameter range [{}, {}]",
                self.p_min, self.p_max
            )));
        }
        Ok(())
    }

    pub(crate) fn direction_factor(&self) -> i8 {
        match self.direction {
            Direction::Increasing => 1,
            Direction::Decreasing => -1,
        }
    }

    pub(crate) fn contains(&self, p: f64) -> bool {
        p >= self.p_min - 1e-6 * self.dp && p <= self.p_max + 1e-6 * self.dp
    }
}

/// One point of a traced steady branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchPoint {
    /// Continuation parameter (Da).
    pub p: f64,
    pub state: CascadeState,
    pub alpha_out: f64,
    /// Sign of the Jacobian determinant, +1 or -1.
    pub det_sign: i8,
    pub stable: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CurveKind {
    Ss,
    Beg,
    End,
    Av,
}

impl CurveKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Ss => "ss",
            Self::Beg => "beg",
            Self::End => "end",
            Self::Av => "av",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ss" => Some(Self::Ss),
            "beg" => Some(Self::Beg),
            "end" => Some(Self::End),
            "av" => Some(Self::Av),
            _ => None,
        }
    }
}

/// Ordered branch of a bifurcation diagram.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagramCurve {
    pub kind: CurveKind,
    pub points: Vec<BranchPoint>,
}

impl DiagramCurve {
    /// Indices of points where the walk reverses its direction in `p`.
    pub fn fold_indices(&self) -> Vec<usize> {
        let mut folds = Vec::new();
        let mut last_dir = 0.0;
        for (i, w) in self.points.windows(2).enumerate() {
            let d = w[1].p - w[0].p;
            if d == 0.0 {
                continue;
            }
            if last_dir * d < 0.0 {
                folds.push(i);
            }
            last_dir = d;
        }
        folds
    }
}

pub fn residual_ss(
    state: CascadeState,
    io: FlowDirection,
    da: Damkohler,
    params: &ModelParams,
) -> Result<SteadyResidual> {
    let x = io.io();
    Ok(SteadyResidual {
        f1: x * state.alpha2 + phi(state.alpha1, da, params)? - state.alpha1,
        f2: (1.0 - x) * state.alpha1 + phi(state.alpha2, da, params)? - state.alpha2,
    })
}

pub fn jacobian_ss(
    state: CascadeState,
    io: FlowDirection,
    da: Damkohler,
    params: &ModelParams,
) -> Result<Mat2> {
    let x = io.io();
    Ok(Mat2([
        [dphi_dalpha(state.alpha1, da, params)? - 1.0, x],
        [1.0 - x, dphi_dalpha(state.alpha2, da, params)? - 1.0],
    ]))
}

/// Derivative of the residual with respect to Da.
pub fn w_vector(state: CascadeState, params: &ModelParams) -> Result<[f64; 2]> {
    Ok([
        dphi_dda(state.alpha1, params)?,
        dphi_dda(state.alpha2, params)?,
    ])
}

/// Both eigenvalues of `J` in the open left half-plane.
pub fn is_stable(jacobian: &Mat2) -> bool {
    jacobian.eigenvalues().iter().all(|&(re, _)| re < 0.0)
}

/// Builds a branch point with determinant sign and stability filled in.
pub fn branch_point(
    p: f64,
    state: CascadeState,
    io: FlowDirection,
    params: &ModelParams,
) -> Result<BranchPoint> {
    let j = jacobian_ss(state, io, Damkohler::new(p)?, params)?;
    Ok(BranchPoint {
        p,
        state,
        alpha_out: alpha_out(state, io, Phase::Series),
        det_sign: sign(j.det()) as i8,
        stable: Some(is_stable(&j)),
    })
}

/// One Euler predictor step of the determinant-sign scheme. `dp` may be
/// negative to flip the orientation of travel along the branch.
pub fn continuation_step_ss(
    point: &BranchPoint,
    io: FlowDirection,
    params: &ModelParams,
    dp: f64,
) -> Result<BranchPoint> {
    let det = jacobian_ss(point.state, io, Damkohler::new(point.p)?, params)?.det();
    let delta = sign(det) * dp;
    let state = predictor(point, io, params, delta)?;
    branch_point(point.p + delta, state, io, params)
}

/// State after moving the parameter by `delta` along `-J^-1 w`.
fn predictor(
    point: &BranchPoint,
    io: FlowDirection,
    params: &ModelParams,
    delta: f64,
) -> Result<CascadeState> {
    let j = jacobian_ss(point.state, io, Damkohler::new(point.p)?, params)?;
    let det = j.det();
    if det.abs() < SINGULAR_DET {
        return Err(Error::SingularJacobian { det });
    }
    let tangent = j.solve(w_vector(point.state, params)?)?;
    Ok(CascadeState::new(
        point.state.alpha1 - tangent[0] * delta,
        point.state.alpha2 - tangent[1] * delta,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonOutcome {
    pub state: CascadeState,
    pub iterations: usize,
    /// Residual infinity norms, starting with the initial iterate.
    pub residuals: Vec<f64>,
}

/// Newton iteration on the steady residual at fixed Da.
pub fn newton_refine_ss(
    state: CascadeState,
    io: FlowDirection,
    da: Damkohler,
    params: &ModelParams,
    tol: f64,
    max_iter: usize,
) -> Result<NewtonOutcome> {
    let mut x = state;
    let mut residuals = Vec::with_capacity(max_iter + 1);
    for iterations in 0..=max_iter {
        let r = residual_ss(x, io, da, params)?;
        residuals.push(r.norm_inf());
        if r.norm_inf() < tol {
            return Ok(NewtonOutcome {
                state: x,
                iterations,
                residuals,
            });
        }
        if iterations == max_iter {
            break;
        }
        let dx = jacobian_ss(x, io, da, params)?.solve([r.f1, r.f2])?;
        x = CascadeState::new(x.alpha1 - dx[0], x.alpha2 - dx[1]);
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        residual: *residuals.last().unwrap_or(&f64::NAN),
    })
}

fn scan_roots(grid_size: usize, f: impl Fn(f64) -> Result<f64>) -> Result<Vec<f64>> {
    let n = grid_size;
    let mut roots = Vec::new();
    let mut a_prev = 0.0;
    let mut g_prev = f(0.0)?;
    for i in 1..=n {
        let a = i as f64 / n as f64;
        let g = f(a)?;
        if g_prev == 0.0 {
            roots.push(a_prev);
        } else if g != 0.0 && (g < 0.0) != (g_prev < 0.0) {
            let (mut lo, mut hi, neg_lo) = (a_prev, a, g_prev < 0.0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                let gm = f(mid)?;
                if gm == 0.0 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if (gm < 0.0) == neg_lo {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            roots.push(0.5 * (lo + hi));
        }
        a_prev = a;
        g_prev = g;
    }
    if g_prev == 0.0 {
        roots.push(1.0);
    }
    Ok(roots)
}

/// Brute-force enumeration of steady states. With fixed direction the
/// balances are triangular: the fed reactor decouples, so each reactor is a
/// scalar root-finding problem solved by grid scan plus bisection.
pub fn find_steady_states_oracle(
    da: Damkohler,
    io: FlowDirection,
    params: &ModelParams,
    grid_size: usize,
) -> Result<Vec<CascadeState>> {
    let grid_size = grid_size.max(10);
    let fed = scan_roots(grid_size, |a| Ok(phi(a, da, params)? - a))?;
    let mut states = Vec::new();
    for &a_fed in &fed {
        let downstream = scan_roots(grid_size, |a| Ok(a_fed + phi(a, da, params)? - a))?;
        for a_out in downstream {
            states.push(match io {
                FlowDirection::Forward => CascadeState::new(a_fed, a_out),
                FlowDirection::Reverse => CascadeState::new(a_out, a_fed),
            });
        }
    }
    Ok(states)
}

/// Walks the steady branch from `start` until the parameter leaves
/// `[p_min, p_max]` or `max_steps` is reached.
pub fn trace_branch_ss(
    start: &BranchPoint,
    io: FlowDirection,
    params: &ModelParams,
    settings: &ContinuationSettings,
) -> Result<DiagramCurve> {
    let branch = SteadyBranch {
        io,
        params,
        settings,
    };
    let first = branch_point(start.p, start.state, io, params)?;
    Ok(DiagramCurve {
        kind: CurveKind::Ss,
        points: walk(&branch, first, settings)?,
    })
}

struct SteadyBranch<'a> {
    io: FlowDirection,
    params: &'a ModelParams,
    settings: &'a ContinuationSettings,
}

impl Branch for SteadyBranch<'_> {
    type Point = BranchPoint;

    fn param(&self, pt: &BranchPoint) -> f64 {
        pt.p
    }

    fn det_sign(&self, pt: &BranchPoint) -> i8 {
        pt.det_sign
    }

    fn predict(&self, pt: &BranchPoint, p_new: f64) -> Result<CascadeState> {
        predictor(pt, self.io, self.params, p_new - pt.p)
    }

    fn evaluate(&self, p: f64, state: CascadeState) -> Result<BranchPoint> {
        branch_point(p, state, self.io, self.params)
    }

    fn correct(&self, p: f64, state: CascadeState) -> Result<BranchPoint> {
        let da = Damkohler::new(p)?;
        let det = jacobian_ss(state, self.io, da, self.params)?.det();
        if det.abs() <= self.settings.det_threshold {
            return Err(Error::SingularJacobian { det });
        }
        let out = newton_refine_ss(
            state,
            self.io,
            da,
            self.params,
            self.settings.newton_tol,
            self.settings.newton_max_iter,
        )?;
        let moved = out.state.max_abs_diff(state);
        if moved > self.settings.max_correction {
            debug!("rejected steady correction of {moved:e} at p = {p}");
            return Err(Error::NonConvergence {
                iterations: out.iterations,
                residual: moved,
            });
        }
        branch_point(p, out.state, self.io, self.params)
    }
}

/// Aborts a walk whose parameter stays inside a narrow window for too long.
pub(crate) struct StallGuard {
    anchor: f64,
    since: usize,
    window: f64,
}

impl StallGuard {
    const LIMIT: usize = 10_000;

    pub(crate) fn new(p: f64, dp: f64) -> Self {
        Self {
            anchor: p,
            since: 0,
            window: 10.0 * dp,
        }
    }

    pub(crate) fn observe(&mut self, p: f64, step: usize) -> Result<()> {
        if (p - self.anchor).abs() > self.window {
            self.anchor = p;
            self.since = step;
        } else if step - self.since > Self::LIMIT {
            return Err(Error::Stall { p, steps: step });
        }
        Ok(())
    }
}

/// Stable steady state reached by integrating the constant-flow system from
/// `state0` until it stops moving, polished by Newton.
pub fn settle_constant_flow(
    state0: CascadeState,
    io: FlowDirection,
    da: Damkohler,
    params: &ModelParams,
) -> Result<CascadeState> {
    use crate::integrator::{integrate, IntegratorSettings};
    let settings = IntegratorSettings::with_step(5e-3).silent();
    let mut state = state0;
    for _ in 0..2000 {
        let run = integrate(Phase::Series, state, io, da, params, 10.0, &settings)?;
        let moved = run.end_state.max_abs_diff(state);
        state = run.end_state;
        if moved < 1e-11 {
            return Ok(newton_refine_ss(state, io, da, params, 1e-13, 20)
                .map(|o| o.state)
                .unwrap_or(state));
        }
    }
    Err(Error::NotSettled {
        cycles: 2000,
        trailing: vec![state],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn da(v: f64) -> Damkohler {
        Damkohler::new(v).unwrap()
    }

    const FWD: FlowDirection = FlowDirection::Forward;

    #[test]
    fn residual_structure() {
        let p = ModelParams::default();
        let r = residual_ss(CascadeState::default(), FlowDirection::Reverse, da(0.0), &p).unwrap();
        assert_eq!(r.norm_inf(), 0.0);
        let s = CascadeState::new(0.2, 0.5);
        let r = residual_ss(s, FWD, da(0.03), &p).unwrap();
        let r_other = residual_ss(CascadeState::new(0.2, 0.9), FWD, da(0.03), &p).unwrap();
        assert_eq!(r.f1, r_other.f1);
        assert_ne!(r.f2, r_other.f2);
    }

    #[test]
    fn jacobian_at_zero_da() {
        let p = ModelParams::default();
        for io in [FlowDirection::Forward, FlowDirection::Reverse] {
            let j = jacobian_ss(CascadeState::new(0.4, 0.7), io, da(0.0), &p).unwrap();
            assert_eq!(j.0, [[-1.0, io.io()], [1.0 - io.io(), -1.0]]);
            assert_eq!(j.det(), 1.0);
        }
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let p = ModelParams::default();
        let s = CascadeState::new(0.3, 0.6);
        let d = da(0.028);
        let j = jacobian_ss(s, FWD, d, &p).unwrap();
        let h = 1e-6;
        for col in 0..2 {
            let mut plus = s.to_array();
            let mut minus = s.to_array();
            plus[col] += h;
            minus[col] -= h;
            let rp = residual_ss(CascadeState::from_array(plus), FWD, d, &p).unwrap();
            let rm = residual_ss(CascadeState::from_array(minus), FWD, d, &p).unwrap();
            let fd = [(rp.f1 - rm.f1) / (2.0 * h), (rp.f2 - rm.f2) / (2.0 * h)];
            for (row, fd) in fd.iter().enumerate() {
                let an = j.0[row][col];
                let err = (an - fd).abs() / an.abs().max(1e-300);
                assert!(err < 1e-6 || (an - fd).abs() < 1e-10, "{row}{col}");
            }
        }
    }

    #[test]
    fn w_vector_values() {
        let p = ModelParams::default();
        assert_eq!(
            w_vector(CascadeState::new(0.0, 0.0), &p).unwrap(),
            [1.0, 1.0]
        );
        assert_eq!(
            w_vector(CascadeState::new(1.0, 1.0), &p).unwrap(),
            [0.0, 0.0]
        );
        let w = w_vector(CascadeState::new(0.3, 0.6), &p).unwrap();
        assert_eq!(w, [dphi_dda(0.3, &p).unwrap(), dphi_dda(0.6, &p).unwrap()]);
    }

    #[test]
    fn first_step_from_origin() {
        let p = ModelParams::default();
        let start = branch_point(0.0, CascadeState::default(), FWD, &p).unwrap();
        assert_eq!(start.det_sign, 1);
        assert_eq!(start.alpha_out, 0.0);
        let dp = 1e-5;
        let next = continuation_step_ss(&start, FWD, &p, dp).unwrap();
        assert_eq!(next.p, dp);
        // J = [[-1, 0], [1, -1]], w = (1, 1): -J^-1 w = (1, 2)
        assert!((next.state.alpha1 - dp).abs() < 1e-18);
        assert!((next.state.alpha2 - 2.0 * dp).abs() < 1e-18);
        let same = continuation_step_ss(&start, FWD, &p, 0.0).unwrap();
        assert_eq!(same.state, start.state);
    }

    #[test]
    fn oracle_trivial_and_low_cases() {
        let p = ModelParams::default();
        let states = find_steady_states_oracle(da(0.0), FWD, &p, 100_000).unwrap();
        assert_eq!(states, vec![CascadeState::new(0.0, 0.0)]);
        let states = find_steady_states_oracle(da(0.01), FWD, &p, 100_000).unwrap();
        assert_eq!(states.len(), 1);
        assert!(states[0].alpha2 < 0.1);
    }

    #[test]
    fn oracle_mirrors_under_reverse_flow() {
        let p = ModelParams::default();
        let fwd = find_steady_states_oracle(da(0.04), FWD, &p, 100_000).unwrap();
        let rev = find_steady_states_oracle(da(0.04), FlowDirection::Reverse, &p, 100_000).unwrap();
        assert_eq!(fwd.len(), rev.len());
        for (a, b) in fwd.iter().zip(&rev) {
            assert_eq!(*a, b.swap());
        }
    }

    #[test]
    fn newton_fixed_point_and_recovery() {
        let p = ModelParams::default();
        let d = da(0.04);
        for s in find_steady_states_oracle(d, FWD, &p, 100_000).unwrap() {
            let out = newton_refine_ss(s, FWD, d, &p, 1e-12, 20).unwrap();
            assert!(out.iterations <= 1);
            let perturbed = CascadeState::new(s.alpha1 + 1e-4, s.alpha2 + 1e-4);
            let out = newton_refine_ss(perturbed, FWD, d, &p, 1e-12, 20).unwrap();
            assert!(out.state.max_abs_diff(s) < 1e-10);
        }
    }

    #[test]
    fn newton_reports_non_convergence() {
        let p = ModelParams::default();
        let err =
            newton_refine_ss(CascadeState::new(0.3, 0.3), FWD, da(0.04), &p, 1e-12, 0).unwrap_err();
        assert!(matches!(err, Error::NonConvergence { .. }));
    }

    #[test]
    fn stall_guard_trips() {
        let mut g = StallGuard::new(0.0, 1e-5);
        let mut res = Ok(());
        for step in 1..=10_002 {
            let p = if step % 2 == 0 { 0.0 } else { 1e-5 };
            res = g.observe(p, step);
            if res.is_err() {
                break;
            }
        }
        assert!(matches!(res, Err(Error::Stall { .. })));
    }

    #[test]
    fn settings_validation() {
        assert!(ContinuationSettings::with_range(0.05, 0.01)
            .validate()
            .is_err());
        let zero_step = ContinuationSettings {
            dp: 0.0,
            ..Default::default()
        };
        assert!(zero_step.validate().is_err());
    }
}
