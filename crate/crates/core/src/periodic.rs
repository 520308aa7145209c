//! Enforced periodic regimes of the reverse-flow cascade.
//!
//! Under periodic reversal the cascade is symmetric: a cycle with `IO = 1` is
//! the mirror image of a cycle with `IO = 0`. A regime that repeats every two
//! reversals is therefore a start state `s` whose image under one forward
//! half-cycle is its own mirror, `P(s) = swap(s)`. Those points are found by
//! shooting on `F(s) = P(s) - swap(s)` and continued in Da with the same
//! determinant-sign scheme as the steady states.

use log::{debug, warn};
use rayon::prelude::*;

use crate::continuation::{walk, Branch};
use crate::error::{Error, Result};
use crate::integrator::{integrate_cycle, CycleSummary, IntegratorSettings};
use crate::linalg::{sign, Mat2, SINGULAR_DET};
use crate::model::{CascadeState, Damkohler, FlowDirection, ModelParams};
use crate::steady::{BranchPoint, ContinuationSettings, CurveKind, DiagramCurve};

/// Default finite-difference step on the conversions.
pub const FD_STEP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShootingResidual {
    /// `alpha1(tau_rf) - alpha2(0)`
    pub f1: f64,
    /// `alpha2(tau_rf) - alpha1(0)`
    pub f2: f64,
}

impl ShootingResidual {
    pub fn norm_inf(&self) -> f64 {
        self.f1.abs().max(self.f2.abs())
    }

    fn to_array(self) -> [f64; 2] {
        [self.f1, self.f2]
    }
}

/// Derivatives of the shooting residual.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShootingJacobian {
    /// `dF / d alpha(0)`
    pub a: Mat2,
    /// `dF / dDa`
    pub b: [f64; 2],
}

impl ShootingJacobian {
    /// Derivative of the half-cycle map, `dP/ds = A + swap`.
    pub fn flow_derivative(&self) -> Mat2 {
        let m = self.a.0;
        Mat2([[m[0][0], m[0][1] + 1.0], [m[1][0] + 1.0, m[1][1]]])
    }

    /// Multipliers of the full (two-reversal) period. By the mirror symmetry
    /// the second half-cycle's sensitivity is `swap * dP * swap`, so the
    /// monodromy matrix is `(swap * dP)^2`.
    pub fn monodromy(&self) -> Mat2 {
        let half = Mat2::SWAP.mul(&self.flow_derivative());
        half.mul(&half)
    }

    pub fn floquet_stable(&self) -> bool {
        self.monodromy().spectral_radius() < 1.0
    }
}

/// A symmetric enforced-periodic regime.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodicPoint {
    pub da: f64,
    /// Reactor conversions at the start of a forward (`IO = 0`) cycle.
    pub start_state: CascadeState,
    pub summary: CycleSummary,
    pub det_sign: i8,
    pub floquet_stable: Option<bool>,
    /// Jacobian at (or next to) `start_state`, reused by the predictor.
    pub jacobian: ShootingJacobian,
    pub residual: f64,
    pub newton_iterations: usize,
}

/// Setup shared by all shooting evaluations.
#[derive(Debug, Clone, Copy)]
pub struct ShootingSetup<'a> {
    pub io: FlowDirection,
    pub params: &'a ModelParams,
    pub tau_rf: f64,
    pub settings: &'a IntegratorSettings,
}

impl<'a> ShootingSetup<'a> {
    pub fn new(params: &'a ModelParams, tau_rf: f64, settings: &'a IntegratorSettings) -> Self {
        Self {
            io: FlowDirection::Forward,
            params,
            tau_rf,
            settings,
        }
    }
}

/// State after one half-cycle with fixed direction.
pub fn period_map(
    state0: CascadeState,
    io: FlowDirection,
    da: Damkohler,
    params: &ModelParams,
    tau_rf: f64,
    settings: &IntegratorSettings,
) -> Result<CascadeState> {
    let silent = settings.silent();
    Ok(integrate_cycle(state0, io, da, params, tau_rf, &silent)?.0)
}

pub fn residual_periodic(
    state0: CascadeState,
    io: FlowDirection,
    da: Damkohler,
    params: &ModelParams,
    tau_rf: f64,
    settings: &IntegratorSettings,
) -> Result<ShootingResidual> {
    let end = period_map(state0, io, da, params, tau_rf, settings)?;
    Ok(ShootingResidual {
        f1: end.alpha1 - state0.alpha2,
        f2: end.alpha2 - state0.alpha1,
    })
}

/// Finite-difference Jacobian of the shooting residual: central differences
/// in both start conversions and in Da, one-sided next to the box boundary.
pub fn shooting_jacobian(
    state0: CascadeState,
    io: FlowDirection,
    da: Damkohler,
    params: &ModelParams,
    tau_rf: f64,
    settings: &IntegratorSettings,
    fd_step: f64,
) -> Result<ShootingJacobian> {
    let res = |s: CascadeState, d: f64| -> Result<[f64; 2]> {
        Ok(residual_periodic(s, io, Damkohler::new(d)?, params, tau_rf, settings)?.to_array())
    };
    let d = da.value();
    let base = state0.to_array();
    let mut a = [[0.0; 2]; 2];
    for col in 0..2 {
        let x = base[col];
        let (mut lo, mut hi) = (x - fd_step, x + fd_step);
        if lo < 0.0 || hi > 1.0 {
            warn!(
                "one-sided difference for alpha{} = {x} near the box boundary",
                col + 1
            );
            if lo < 0.0 {
                lo = x;
            } else {
                hi = x;
            }
        }
        let at = |v: f64| {
            let mut s = base;
            s[col] = v;
            CascadeState::from_array(s)
        };
        let fl = res(at(lo), d)?;
        let fh = res(at(hi), d)?;
        for row in 0..2 {
            a[row][col] = (fh[row] - fl[row]) / (hi - lo);
        }
    }
    let hd = 1e-8 * d.max(1e-3);
    let (dlo, dhi) = if d - hd < 0.0 {
        (d, d + hd)
    } else {
        (d - hd, d + hd)
    };
    let fl = res(state0, dlo)?;
    let fh = res(state0, dhi)?;
    let b = [(fh[0] - fl[0]) / (dhi - dlo), (fh[1] - fl[1]) / (dhi - dlo)];
    Ok(ShootingJacobian { a: Mat2(a), b })
}

/// Shooting residual together with the outlet statistics of the same cycle.
fn shoot_eval(
    setup: &ShootingSetup,
    da: Damkohler,
    state: CascadeState,
) -> Result<(ShootingResidual, CycleSummary)> {
    let silent = setup.settings.silent();
    let (end, summary, _) =
        integrate_cycle(state, setup.io, da, setup.params, setup.tau_rf, &silent)?;
    Ok((
        ShootingResidual {
            f1: end.alpha1 - state.alpha2,
            f2: end.alpha2 - state.alpha1,
        },
        summary,
    ))
}

fn point_from_parts(
    da: f64,
    state: CascadeState,
    summary: CycleSummary,
    jacobian: ShootingJacobian,
    residual: f64,
    newton_iterations: usize,
) -> PeriodicPoint {
    PeriodicPoint {
        da,
        start_state: state,
        summary,
        det_sign: sign(jacobian.a.det()) as i8,
        floquet_stable: Some(jacobian.floquet_stable()),
        jacobian,
        residual,
        newton_iterations,
    }
}

/// Periodic point at `(da, state)` without any correction.
pub fn evaluate_periodic_point(
    setup: &ShootingSetup,
    da: f64,
    state: CascadeState,
) -> Result<PeriodicPoint> {
    let d = Damkohler::new(da)?;
    let jac = shooting_jacobian(
        state,
        setup.io,
        d,
        setup.params,
        setup.tau_rf,
        setup.settings,
        FD_STEP,
    )?;
    let (r, summary) = shoot_eval(setup, d, state)?;
    Ok(point_from_parts(da, state, summary, jac, r.norm_inf(), 0))
}

/// Damped Newton on the shooting residual at fixed Da.
pub fn newton_shoot(
    guess: CascadeState,
    setup: &ShootingSetup,
    da: f64,
    tol: f64,
    max_iter: usize,
) -> Result<PeriodicPoint> {
    let d = Damkohler::new(da)?;
    let residual = |s: CascadeState| shoot_eval(setup, d, s);
    let jacobian = |s: CascadeState| {
        shooting_jacobian(
            s,
            setup.io,
            d,
            setup.params,
            setup.tau_rf,
            setup.settings,
            FD_STEP,
        )
    };

    let mut x = guess;
    let (mut r, mut summary) = residual(x)?;
    let mut last_jac = None;
    for iteration in 0..=max_iter {
        if r.norm_inf() < tol {
            let jac = match last_jac {
                Some(j) => j,
                None => jacobian(x)?,
            };
            return Ok(point_from_parts(
                da,
                x,
                summary,
                jac,
                r.norm_inf(),
                iteration,
            ));
        }
        if iteration == max_iter {
            break;
        }
        let jac = jacobian(x)?;
        let det = jac.a.det();
        if det.abs() < SINGULAR_DET {
            return Err(Error::SingularJacobian { det });
        }
        let dx = jac.a.solve(r.to_array())?;
        last_jac = Some(jac);

        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..20 {
            let trial = CascadeState::new(x.alpha1 - lambda * dx[0], x.alpha2 - lambda * dx[1]);
            if trial.in_unit_box() {
                if let Ok((rt, st)) = residual(trial) {
                    if rt.norm_inf() < r.norm_inf() || lambda < 1e-3 {
                        accepted = Some((trial, rt, st));
                        break;
                    }
                }
            }
            lambda *= 0.5;
        }
        let Some((xn, rn, sn)) = accepted else {
            return Err(Error::NonConvergence {
                iterations: iteration + 1,
                residual: r.norm_inf(),
            });
        };
        x = xn;
        r = rn;
        summary = sn;
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        residual: r.norm_inf(),
    })
}

/// Euler predictor of the shooting continuation: the start state moves by
/// `-A^-1 b sign(det A) dDa` and Da by `sign(det A) dDa`.
fn shooting_predictor(point: &PeriodicPoint, delta: f64) -> Result<CascadeState> {
    let tangent = point.jacobian.a.solve(point.jacobian.b)?;
    Ok(CascadeState::new(
        point.start_state.alpha1 - tangent[0] * delta,
        point.start_state.alpha2 - tangent[1] * delta,
    ))
}

/// One predictor-corrector step along the periodic branch. `dda` may be
/// negative to flip the orientation of travel.
pub fn continuation_step_periodic(
    point: &PeriodicPoint,
    setup: &ShootingSetup,
    settings: &ContinuationSettings,
    dda: f64,
) -> Result<PeriodicPoint> {
    let delta = sign(point.jacobian.a.det()) * dda;
    if delta == 0.0 {
        return Ok(*point);
    }
    let predicted = shooting_predictor(point, delta)?;
    PeriodicBranch { setup, settings }.correct(point.da + delta, predicted)
}

/// Aligned `beg`, `end` and `av` curves of a traced periodic branch.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicDiagram {
    pub points: Vec<PeriodicPoint>,
}

impl PeriodicDiagram {
    pub fn curves(&self) -> [DiagramCurve; 3] {
        let build = |kind: CurveKind| DiagramCurve {
            kind,
            points: self
                .points
                .iter()
                .map(|pt| {
                    let (state, value) = match kind {
                        CurveKind::End => (pt.summary.end_state, pt.summary.alpha_end),
                        CurveKind::Av => (pt.start_state, pt.summary.alpha_avg),
                        _ => (pt.start_state, pt.summary.alpha_beg),
                    };
                    BranchPoint {
                        p: pt.da,
                        state,
                        alpha_out: value,
                        det_sign: pt.det_sign,
                        stable: pt.floquet_stable,
                    }
                })
                .collect(),
        };
        [
            build(CurveKind::Beg),
            build(CurveKind::End),
            build(CurveKind::Av),
        ]
    }
}

/// Walks the branch of symmetric periodic regimes through `start`.
pub fn trace_branch_periodic(
    start: &PeriodicPoint,
    setup: &ShootingSetup,
    settings: &ContinuationSettings,
) -> Result<PeriodicDiagram> {
    let branch = PeriodicBranch { setup, settings };
    Ok(PeriodicDiagram {
        points: walk(&branch, *start, settings)?,
    })
}

struct PeriodicBranch<'s, 'a> {
    setup: &'s ShootingSetup<'a>,
    settings: &'s ContinuationSettings,
}

impl Branch for PeriodicBranch<'_, '_> {
    type Point = PeriodicPoint;

    fn param(&self, pt: &PeriodicPoint) -> f64 {
        pt.da
    }

    fn det_sign(&self, pt: &PeriodicPoint) -> i8 {
        pt.det_sign
    }

    fn predict(&self, pt: &PeriodicPoint, p_new: f64) -> Result<CascadeState> {
        let det = pt.jacobian.a.det();
        if det.abs() < SINGULAR_DET {
            return Err(Error::SingularJacobian { det });
        }
        shooting_predictor(pt, p_new - pt.da)
    }

    fn evaluate(&self, p: f64, state: CascadeState) -> Result<PeriodicPoint> {
        evaluate_periodic_point(self.setup, p, state)
    }

    fn correct(&self, p: f64, state: CascadeState) -> Result<PeriodicPoint> {
        let pt = newton_shoot(
            state,
            self.setup,
            p,
            self.settings.newton_tol,
            self.settings.newton_max_iter,
        )?;
        let moved = pt.start_state.max_abs_diff(state);
        if moved > self.settings.max_correction {
            debug!("rejected periodic correction of {moved:e} at Da = {p}");
            return Err(Error::NonConvergence {
                iterations: pt.newton_iterations,
                residual: moved,
            });
        }
        if pt.jacobian.a.det().abs() <= self.settings.det_threshold {
            return Err(Error::SingularJacobian {
                det: pt.jacobian.a.det(),
            });
        }
        Ok(pt)
    }
}

/// Settling criteria for simulated reverse-flow operation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SettleOptions {
    /// Cap on the number of reversal cycles (`tau_rf` intervals).
    pub max_cycles: usize,
    /// Largest change of the forward-cycle start state accepted as settled.
    pub tol: f64,
}

impl Default for SettleOptions {
    fn default() -> Self {
        Self {
            max_cycles: 5000,
            tol: 1e-9,
        }
    }
}

/// Runs alternating cycles from `state0` (forward first) until the state at
/// the start of successive forward cycles stops changing. `cycle` advances
/// one `tau_rf` interval with the given direction.
pub(crate) fn settle_cycles(
    state0: CascadeState,
    options: &SettleOptions,
    mut cycle: impl FnMut(CascadeState, FlowDirection) -> Result<CascadeState>,
) -> Result<(CascadeState, usize)> {
    let mut start = state0;
    let mut trailing = vec![start];
    let mut cycles = 0;
    while cycles + 2 <= options.max_cycles {
        let mid = cycle(start, FlowDirection::Forward)?;
        let next = cycle(mid, FlowDirection::Reverse)?;
        cycles += 2;
        let change = next.max_abs_diff(start);
        start = next;
        trailing.push(start);
        if trailing.len() > 4 {
            trailing.remove(0);
        }
        if change < options.tol {
            return Ok((start, cycles));
        }
    }
    Err(Error::NotSettled { cycles, trailing })
}

/// Simulates reverse-flow operation until it settles and returns the regime
/// as a periodic point (not Newton-polished).
pub fn settle_to_attractor(
    state0: CascadeState,
    da: f64,
    setup: &ShootingSetup,
    options: &SettleOptions,
) -> Result<PeriodicPoint> {
    let d = Damkohler::new(da)?;
    let silent = setup.settings.silent();
    let (start, _) = settle_cycles(state0, options, |s, io| {
        Ok(integrate_cycle(s, io, d, setup.params, setup.tau_rf, &silent)?.0)
    })?;
    evaluate_periodic_point(setup, da, start)
}

/// Distinct settled oscillation states reached from a `grid x grid` set of
/// initial conversions in `[0, 0.9]^2`, sorted by cycle average. Regimes whose
/// averages differ by less than `1e-4` are merged.
pub fn find_oscillation_states(
    da: f64,
    setup: &ShootingSetup,
    options: &SettleOptions,
    grid: usize,
) -> Result<Vec<PeriodicPoint>> {
    let grid = grid.max(1);
    let step = if grid > 1 {
        0.9 / (grid - 1) as f64
    } else {
        0.0
    };
    let seeds: Vec<CascadeState> = (0..grid * grid)
        .map(|k| CascadeState::new((k / grid) as f64 * step, (k % grid) as f64 * step))
        .collect();
    let settled: Vec<Result<PeriodicPoint>> = seeds
        .par_iter()
        .map(|&s| settle_to_attractor(s, da, setup, options))
        .collect();
    let mut found: Vec<PeriodicPoint> = Vec::new();
    for (seed, res) in seeds.iter().zip(settled) {
        match res {
            Ok(pt) => {
                if found
                    .iter()
                    .all(|f| (f.summary.alpha_avg - pt.summary.alpha_avg).abs() > 1e-4)
                {
                    found.push(pt);
                }
            }
            Err(Error::NotSettled { .. }) => debug!("seed {seed:?} did not settle at Da = {da}"),
            Err(e) => return Err(e),
        }
    }
    found.sort_by(|a, b| a.summary.alpha_avg.total_cmp(&b.summary.alpha_avg));
    Ok(found)
}
