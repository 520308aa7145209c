//! Relaxation operating policy: after every switch of the feed direction the
//! outlet reactor is cut off and runs as a batch reactor for `tau_rel`, while
//! the fed reactor discharges directly.

use log::{debug, warn};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::integrator::{integrate_relax_cycle, CycleSummary, IntegratorSettings, Trajectory};
use crate::model::{alpha_out, CascadeState, Damkohler, FlowDirection, ModelParams, Phase};
use crate::periodic::{settle_cycles, SettleOptions};
use crate::steady::settle_constant_flow;

/// Cold and warm starts at the optimum may land on different attractors;
/// larger disagreements are reported.
const CROSS_CHECK_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelaxationPolicy {
    tau_rf: f64,
    tau_rel: f64,
}

impl RelaxationPolicy {
    pub fn new(tau_rf: f64, tau_rel: f64) -> Result<Self> {
        if !(tau_rf.is_finite() && tau_rf > 0.0) {
            return Err(Error::Domain {
                name: "tau_rf",
                value: tau_rf,
            });
        }
        if !(tau_rel.is_finite() && (0.0..=tau_rf).contains(&tau_rel)) {
            return Err(Error::InvalidParameter(format!(
                "relaxation time {tau_rel} must lie in [0, {tau_rf}]"
            )));
        }
        Ok(Self { tau_rf, tau_rel })
    }

    /// Plain reverse flow.
    pub fn reverse_only(tau_rf: f64) -> Result<Self> {
        Self::new(tau_rf, 0.0)
    }

    pub fn tau_rf(&self) -> f64 {
        self.tau_rf
    }

    pub fn tau_rel(&self) -> f64 {
        self.tau_rel
    }

    fn cycle(
        &self,
        state: CascadeState,
        io: FlowDirection,
        da: Damkohler,
        params: &ModelParams,
        settings: &IntegratorSettings,
    ) -> Result<(CascadeState, CycleSummary, Trajectory)> {
        integrate_relax_cycle(state, io, da, params, self.tau_rf, self.tau_rel, settings)
    }
}

/// Runs `n_cycles` cycles, alternating the feed direction from forward.
/// Returned trajectory times are measured from the start of the first cycle.
pub fn simulate_relaxation(
    state0: CascadeState,
    da: Damkohler,
    params: &ModelParams,
    policy: &RelaxationPolicy,
    settings: &IntegratorSettings,
    n_cycles: usize,
) -> Result<(Trajectory, Vec<CycleSummary>)> {
    let mut trajectory = Trajectory::new();
    let mut summaries = Vec::with_capacity(n_cycles);
    let mut state = state0;
    for j in 0..n_cycles {
        let (end, summary, segment) =
            policy.cycle(state, FlowDirection::for_cycle(j), da, params, settings)?;
        trajectory.append_shifted(segment, j as f64 * policy.tau_rf);
        summaries.push(summary);
        state = end;
    }
    Ok((trajectory, summaries))
}

/// Settled regime of a policy: the start of a forward cycle that repeats
/// after one forward and one reverse cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelaxedRegime {
    pub start_state: CascadeState,
    pub forward: CycleSummary,
    pub reverse: CycleSummary,
    /// Outlet average of the forward cycle; the reverse cycle mirrors it.
    pub average: f64,
    pub cycles: usize,
}

pub fn settle_relaxation(
    state0: CascadeState,
    da: Damkohler,
    params: &ModelParams,
    policy: &RelaxationPolicy,
    settings: &IntegratorSettings,
    options: &SettleOptions,
) -> Result<RelaxedRegime> {
    let silent = settings.silent();
    let (start, cycles) = settle_cycles(state0, options, |s, io| {
        Ok(policy.cycle(s, io, da, params, &silent)?.0)
    })?;
    let (mid, forward, _) = policy.cycle(start, FlowDirection::Forward, da, params, &silent)?;
    let (_, reverse, _) = policy.cycle(mid, FlowDirection::Reverse, da, params, &silent)?;
    Ok(RelaxedRegime {
        start_state: start,
        forward,
        reverse,
        average: forward.alpha_avg,
        cycles,
    })
}

/// `{0, step, 2 step, ...}` below `tau_rf`, closed by `tau_rf` itself.
pub fn relaxation_grid(tau_rf: f64, grid_step: f64) -> Result<Vec<f64>> {
    if !(grid_step.is_finite() && grid_step > 0.0) {
        return Err(Error::Domain {
            name: "grid_step",
            value: grid_step,
        });
    }
    RelaxationPolicy::reverse_only(tau_rf)?;
    let mut grid = Vec::new();
    let mut k = 0u64;
    loop {
        let t = k as f64 * grid_step;
        if t >= tau_rf * (1.0 - 1e-9) {
            break;
        }
        grid.push(t);
        k += 1;
    }
    grid.push(tau_rf);
    Ok(grid)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanEntry {
    pub tau_rel: f64,
    /// Settled cycle average, or `None` when the cycles did not settle.
    pub average: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanResult {
    pub table: Vec<ScanEntry>,
    pub best_tau_rel: f64,
    pub best_average: f64,
    /// Settled average at the optimum when started from the empty cascade.
    pub cold_start_average: f64,
    pub reverse_average: f64,
    pub constant_average: f64,
    pub gain_vs_reverse: Option<f64>,
    pub gain_vs_constant: Option<f64>,
}

/// `a / b`, undefined when the reference conversion vanishes.
pub fn ratio(a: f64, b: f64) -> Option<f64> {
    let r = a / b;
    (b > 0.0 && r.is_finite()).then_some(r)
}

/// Scans the relaxation time on a grid. Each point starts from the settled
/// state of the previous one; the first starts from the empty cascade.
pub fn scan_tau_rel(
    da: Damkohler,
    params: &ModelParams,
    tau_rf: f64,
    grid_step: f64,
    settings: &IntegratorSettings,
    options: &SettleOptions,
) -> Result<ScanResult> {
    let grid = relaxation_grid(tau_rf, grid_step)?;
    let mut table = Vec::with_capacity(grid.len());
    let mut state = CascadeState::default();
    let mut reverse_average = None;
    for &tau_rel in &grid {
        let policy = RelaxationPolicy::new(tau_rf, tau_rel)?;
        match settle_relaxation(state, da, params, &policy, settings, options) {
            Ok(regime) => {
                debug!(
                    "tau_rel {tau_rel}: average {} after {} cycles",
                    regime.average, regime.cycles
                );
                if tau_rel == 0.0 {
                    reverse_average = Some(regime.average);
                }
                state = regime.start_state;
                table.push(ScanEntry {
                    tau_rel,
                    average: Some(regime.average),
                });
            }
            Err(Error::NotSettled { cycles, trailing }) => {
                warn!("tau_rel {tau_rel}: not settled after {cycles} cycles");
                if let Some(last) = trailing.last() {
                    state = *last;
                }
                table.push(ScanEntry {
                    tau_rel,
                    average: None,
                });
            }
            Err(e) => return Err(e),
        }
    }

    let (best_tau_rel, best_average) = table
        .iter()
        .filter_map(|e| e.average.map(|a| (e.tau_rel, a)))
        .fold(None, |best: Option<(f64, f64)>, (t, a)| match best {
            Some((_, b)) if b >= a => best,
            _ => Some((t, a)),
        })
        .ok_or_else(|| Error::NotSettled {
            cycles: options.max_cycles,
            trailing: vec![state],
        })?;

    let best_policy = RelaxationPolicy::new(tau_rf, best_tau_rel)?;
    let cold = settle_relaxation(
        CascadeState::default(),
        da,
        params,
        &best_policy,
        settings,
        options,
    )?;
    if (cold.average - best_average).abs() > CROSS_CHECK_TOL {
        warn!(
            "tau_rel {best_tau_rel}: cold start settles at {} instead of {best_average}",
            cold.average
        );
    }

    let reverse_average = match reverse_average {
        Some(a) => a,
        None => {
            let policy = RelaxationPolicy::reverse_only(tau_rf)?;
            settle_relaxation(
                CascadeState::default(),
                da,
                params,
                &policy,
                settings,
                options,
            )?
            .average
        }
    };
    let constant_average = constant_flow_conversion(da, params)?;

    Ok(ScanResult {
        table,
        best_tau_rel,
        best_average,
        cold_start_average: cold.average,
        reverse_average,
        constant_average,
        gain_vs_reverse: ratio(best_average, reverse_average),
        gain_vs_constant: ratio(best_average, constant_average),
    })
}

/// Outlet conversion of the stable steady state reached from the empty cascade.
pub fn constant_flow_conversion(da: Damkohler, params: &ModelParams) -> Result<f64> {
    let io = FlowDirection::Forward;
    let state = settle_constant_flow(CascadeState::default(), io, da, params)?;
    Ok(alpha_out(state, io, Phase::Series))
}

/// Settled averages of the three operating modes at one parameter point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainReport {
    pub constant: f64,
    pub reverse: f64,
    pub relaxation: f64,
    pub reverse_vs_constant: Option<f64>,
    pub relaxation_vs_reverse: Option<f64>,
    pub relaxation_vs_constant: Option<f64>,
}

/// All three modes start from the empty cascade.
pub fn compare_modes(
    da: Damkohler,
    params: &ModelParams,
    tau_rf: f64,
    tau_rel: f64,
    settings: &IntegratorSettings,
    options: &SettleOptions,
) -> Result<GainReport> {
    let reverse_policy = RelaxationPolicy::reverse_only(tau_rf)?;
    let relax_policy = RelaxationPolicy::new(tau_rf, tau_rel)?;
    let start = CascadeState::default();
    let policies = [reverse_policy, relax_policy];
    let (constant, settled) = rayon::join(
        || constant_flow_conversion(da, params),
        || {
            policies
                .par_iter()
                .map(|p| settle_relaxation(start, da, params, p, settings, options))
                .collect::<Result<Vec<_>>>()
        },
    );
    let constant = constant?;
    let settled = settled?;
    let (reverse, relaxation) = (settled[0].average, settled[1].average);
    Ok(GainReport {
        constant,
        reverse,
        relaxation,
        reverse_vs_constant: ratio(reverse, constant),
        relaxation_vs_reverse: ratio(relaxation, reverse),
        relaxation_vs_constant: ratio(relaxation, constant),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn da(v: f64) -> Damkohler {
        Damkohler::new(v).unwrap()
    }

    #[test]
    fn policy_validation() {
        assert!(RelaxationPolicy::new(6.0, 4.5).is_ok());
        assert!(RelaxationPolicy::new(6.0, 6.0).is_ok());
        assert!(RelaxationPolicy::new(6.0, 6.5).is_err());
        assert!(RelaxationPolicy::new(6.0, -0.1).is_err());
        assert!(RelaxationPolicy::new(0.0, 0.0).is_err());
    }

    #[test]
    fn grid_shapes() {
        let g = relaxation_grid(6.0, 0.1).unwrap();
        assert_eq!(g.len(), 61);
        assert_eq!(g[0], 0.0);
        assert_eq!(*g.last().unwrap(), 6.0);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(relaxation_grid(1.0, 2.5).unwrap(), vec![0.0, 1.0]);
        assert!(relaxation_grid(1.0, 0.0).is_err());
    }

    #[test]
    fn zero_relaxation_matches_reverse_flow() {
        let p = ModelParams::default();
        let settings = IntegratorSettings::for_period(1.0);
        let policy = RelaxationPolicy::reverse_only(1.0).unwrap();
        let (traj, sums) = simulate_relaxation(
            CascadeState::new(0.2, 0.1),
            da(0.025),
            &p,
            &policy,
            &settings,
            4,
        )
        .unwrap();
        let mut s = CascadeState::new(0.2, 0.1);
        for (j, got) in sums.iter().enumerate() {
            let (end, want, _) = crate::integrator::integrate_cycle(
                s,
                FlowDirection::for_cycle(j),
                da(0.025),
                &p,
                1.0,
                &settings,
            )
            .unwrap();
            assert_eq!(got, &want);
            s = end;
        }
        assert!(traj.samples.windows(2).all(|w| w[1].tau > w[0].tau));
        assert!((traj.samples.last().unwrap().tau - 4.0).abs() < 1e-12);
    }

    #[test]
    fn empty_reactor_stays_empty_without_reaction() {
        let p = ModelParams::default();
        let settings = IntegratorSettings::for_period(2.0);
        let policy = RelaxationPolicy::new(2.0, 0.7).unwrap();
        let (_, sums) = simulate_relaxation(
            CascadeState::new(0.5, 0.3),
            da(0.0),
            &p,
            &policy,
            &settings,
            6,
        )
        .unwrap();
        assert!(sums
            .windows(2)
            .all(|w| w[1].end_state.alpha1.max(w[1].end_state.alpha2)
                <= w[0].end_state.alpha1.max(w[0].end_state.alpha2)));
        let report =
            compare_modes(da(0.0), &p, 2.0, 0.7, &settings, &SettleOptions::default()).unwrap();
        assert_eq!(report.constant, 0.0);
        assert!(report.reverse.abs() < 1e-9 && report.relaxation.abs() < 1e-9);
        assert_eq!(report.reverse_vs_constant, None);
    }

    #[test]
    fn ratio_markers() {
        assert_eq!(ratio(1.0, 0.0), None);
        assert_eq!(ratio(0.0, 0.0), None);
        assert_eq!(ratio(2.0, 4.0), Some(0.5));
    }
}
