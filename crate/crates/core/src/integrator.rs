//! Fixed-step RK4 integration of cascade trajectories.
//!
//! Every phase is integrated on a uniform grid whose step divides the phase
//! length exactly (and uses an even number of steps), so switching instants
//! are hit without event detection and the outlet conversion can be averaged
//! with composite Simpson weights on the same grid.

use crate::error::{Error, Result};
use crate::model::{
    alpha_out, rhs_relaxation, rhs_series, CascadeState, Damkohler, FlowDirection, ModelParams,
    Phase,
};

/// Grid points per reverse period used by [`IntegratorSettings::for_period`].
pub const STEPS_PER_PERIOD: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorSettings {
    /// Largest admissible step; each phase uses the largest divisor-compatible step not above it.
    pub step: f64,
    /// Record every `record_every`-th grid point; 0 disables trajectory recording.
    pub record_every: usize,
}

impl IntegratorSettings {
    pub fn for_period(tau_rf: f64) -> Self {
        Self {
            step: tau_rf / STEPS_PER_PERIOD as f64,
            record_every: 10,
        }
    }

    pub fn with_step(step: f64) -> Self {
        Self {
            step,
            record_every: 10,
        }
    }

    pub fn recording(self, record_every: usize) -> Self {
        Self {
            record_every,
            ..self
        }
    }

    pub fn silent(self) -> Self {
        self.recording(0)
    }

    /// Number of (even) steps for a phase of length `duration`.
    pub fn steps_for(&self, duration: f64) -> Result<usize> {
        if !(self.step.is_finite() && self.step > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "integration step must be positive, got {}",
                self.step
            )));
        }
        if !(duration.is_finite() && duration >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "integration duration must be nonnegative, got {duration}"
            )));
        }
        if duration == 0.0 {
            return Ok(0);
        }
        if duration < self.step * (1.0 - 1e-9) {
            return Err(Error::StepAdjustment {
                duration,
                step: self.step,
            });
        }
        let mut n = (duration / self.step - 1e-9).ceil() as usize;
        if n % 2 == 1 {
            n += 1;
        }
        Ok(n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub tau: f64,
    pub state: CascadeState,
    pub alpha_out: f64,
    pub io: FlowDirection,
    pub phase: Phase,
}

/// Time-ordered samples of a simulation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
}

impl Trajectory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Sample> {
        self.samples.iter()
    }

    /// Appends `other` shifted by `offset`. At a shared instant the later
    /// segment's sample wins, keeping `tau` strictly increasing.
    pub fn append_shifted(&mut self, other: Trajectory, offset: f64) {
        let mut incoming = other.samples.into_iter().map(|mut s| {
            s.tau += offset;
            s
        });
        if let Some(first) = incoming.next() {
            while self
                .samples
                .last()
                .is_some_and(|last| last.tau >= first.tau)
            {
                self.samples.pop();
            }
            self.samples.push(first);
        }
        self.samples.extend(incoming);
    }
}

/// Outlet statistics of one cycle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleSummary {
    pub alpha_beg: f64,
    pub alpha_end: f64,
    /// Integral mean of the outlet conversion over the cycle.
    pub alpha_avg: f64,
    pub end_state: CascadeState,
    /// Smallest outlet conversion on the integration grid.
    pub out_min: f64,
    /// Largest outlet conversion on the integration grid.
    pub out_max: f64,
}

/// Result of integrating one phase with fixed direction.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseRun {
    pub end_state: CascadeState,
    pub trajectory: Trajectory,
    /// Simpson integral of the outlet conversion over the phase.
    pub integral: f64,
    pub out_min: f64,
    pub out_max: f64,
    pub steps: usize,
}

#[inline]
fn axpy(s: CascadeState, h: f64, d: CascadeState) -> CascadeState {
    CascadeState::new(s.alpha1 + h * d.alpha1, s.alpha2 + h * d.alpha2)
}

/// Integrates a single phase of fixed direction for `duration`.
pub fn integrate(
    phase: Phase,
    state0: CascadeState,
    io: FlowDirection,
    da: Damkohler,
    params: &ModelParams,
    duration: f64,
    settings: &IntegratorSettings,
) -> Result<PhaseRun> {
    integrate_from(0.0, phase, state0, io, da, params, duration, settings)
}

#[allow(clippy::too_many_arguments)]
fn integrate_from(
    tau0: f64,
    phase: Phase,
    state0: CascadeState,
    io: FlowDirection,
    da: Damkohler,
    params: &ModelParams,
    duration: f64,
    settings: &IntegratorSettings,
) -> Result<PhaseRun> {
    let n = settings.steps_for(duration)?;
    let rhs = |s: CascadeState| match phase {
        Phase::Series => rhs_series(s, io, da, params),
        Phase::Relaxing => rhs_relaxation(s, io, da, params),
    };
    let h = if n == 0 { 0.0 } else { duration / n as f64 };
    let stride = settings.record_every;
    let mut trajectory = Trajectory::new();
    let mut record = |i: usize, s: CascadeState, out: f64| {
        if stride > 0 && (i.is_multiple_of(stride) || i == n) {
            trajectory.samples.push(Sample {
                tau: tau0 + i as f64 * h,
                state: s,
                alpha_out: out,
                io,
                phase,
            });
        }
    };

    let mut state = state0;
    let mut out = alpha_out(state, io, phase);
    let (mut out_min, mut out_max) = (out, out);
    let mut weighted = out;
    record(0, state, out);
    for i in 1..=n {
        let k1 = rhs(state)?;
        let k2 = rhs(axpy(state, 0.5 * h, k1))?;
        let k3 = rhs(axpy(state, 0.5 * h, k2))?;
        let k4 = rhs(axpy(state, h, k3))?;
        state = CascadeState::new(
            state.alpha1 + h / 6.0 * (k1.alpha1 + 2.0 * (k2.alpha1 + k3.alpha1) + k4.alpha1),
            state.alpha2 + h / 6.0 * (k1.alpha2 + 2.0 * (k2.alpha2 + k3.alpha2) + k4.alpha2),
        );
        out = alpha_out(state, io, phase);
        out_min = out_min.min(out);
        out_max = out_max.max(out);
        let w = if i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        weighted += w * out;
        record(i, state, out);
    }
    Ok(PhaseRun {
        end_state: state,
        trajectory,
        integral: if n == 0 { 0.0 } else { weighted * h / 3.0 },
        out_min,
        out_max,
        steps: n,
    })
}

fn check_period(tau_rf: f64) -> Result<()> {
    if tau_rf.is_finite() && tau_rf > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain {
            name: "tau_rf",
            value: tau_rf,
        })
    }
}

/// One reverse period in series with fixed direction `io`.
pub fn integrate_cycle(
    state0: CascadeState,
    io: FlowDirection,
    da: Damkohler,
    params: &ModelParams,
    tau_rf: f64,
    settings: &IntegratorSettings,
) -> Result<(CascadeState, CycleSummary, Trajectory)> {
    check_period(tau_rf)?;
    let run = integrate(Phase::Series, state0, io, da, params, tau_rf, settings)?;
    let summary = CycleSummary {
        alpha_beg: alpha_out(state0, io, Phase::Series),
        alpha_end: alpha_out(run.end_state, io, Phase::Series),
        alpha_avg: run.integral / tau_rf,
        end_state: run.end_state,
        out_min: run.out_min,
        out_max: run.out_max,
    };
    Ok((run.end_state, summary, run.trajectory))
}

/// One reverse period that starts with `tau_rel` of relaxation followed by
/// series operation for the remainder of the period.
pub fn integrate_relax_cycle(
    state0: CascadeState,
    io: FlowDirection,
    da: Damkohler,
    params: &ModelParams,
    tau_rf: f64,
    tau_rel: f64,
    settings: &IntegratorSettings,
) -> Result<(CascadeState, CycleSummary, Trajectory)> {
    check_period(tau_rf)?;
    if !(tau_rel >= 0.0 && tau_rel <= tau_rf) {
        return Err(Error::InvalidParameter(format!(
            "relaxation time {tau_rel} must lie in [0, {tau_rf}]"
        )));
    }
    if tau_rel == 0.0 {
        return integrate_cycle(state0, io, da, params, tau_rf, settings);
    }
    // a phase shorter than one step is covered by a shortened step
    let fitted = |duration: f64| IntegratorSettings {
        step: settings.step.min(duration),
        ..*settings
    };
    let relax = integrate(
        Phase::Relaxing,
        state0,
        io,
        da,
        params,
        tau_rel,
        &fitted(tau_rel),
    )?;
    let alpha_beg = alpha_out(state0, io, Phase::Relaxing);
    let mut trajectory = relax.trajectory;
    let (end_state, alpha_end, integral, out_min, out_max) = if tau_rel < tau_rf {
        let series = integrate_from(
            tau_rel,
            Phase::Series,
            relax.end_state,
            io,
            da,
            params,
            tau_rf - tau_rel,
            &fitted(tau_rf - tau_rel),
        )?;
        trajectory.append_shifted(series.trajectory, 0.0);
        (
            series.end_state,
            alpha_out(series.end_state, io, Phase::Series),
            relax.integral + series.integral,
            relax.out_min.min(series.out_min),
            relax.out_max.max(series.out_max),
        )
    } else {
        (
            relax.end_state,
            alpha_out(relax.end_state, io, Phase::Relaxing),
            relax.integral,
            relax.out_min,
            relax.out_max,
        )
    };
    let summary = CycleSummary {
        alpha_beg,
        alpha_end,
        alpha_avg: integral / tau_rf,
        end_state,
        out_min,
        out_max,
    };
    Ok((end_state, summary, trajectory))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn da(v: f64) -> Damkohler {
        Damkohler::new(v).unwrap()
    }

    #[test]
    fn linear_closed_form_at_zero_da() {
        let p = ModelParams::default();
        let (a0, b0) = (0.7, 0.2);
        let run = integrate(
            Phase::Series,
            CascadeState::new(a0, b0),
            FlowDirection::Forward,
            da(0.0),
            &p,
            1.0,
            &IntegratorSettings::with_step(1e-3),
        )
        .unwrap();
        let e = (-1.0f64).exp();
        assert!((run.end_state.alpha1 - a0 * e).abs() < 1e-10);
        assert!((run.end_state.alpha2 - (b0 + a0) * e).abs() < 1e-10);
    }

    #[test]
    fn zero_duration_is_identity() {
        let p = ModelParams::default();
        let s = CascadeState::new(0.3, 0.4);
        let run = integrate(
            Phase::Series,
            s,
            FlowDirection::Forward,
            da(0.03),
            &p,
            0.0,
            &IntegratorSettings::with_step(1e-3),
        )
        .unwrap();
        assert_eq!(run.end_state, s);
        assert_eq!(run.integral, 0.0);
        let run = integrate(
            Phase::Series,
            s,
            FlowDirection::Forward,
            da(0.03),
            &p,
            1e-7,
            &IntegratorSettings::with_step(1e-8),
        )
        .unwrap();
        assert!(run.end_state.max_abs_diff(s) < 1e-6);
    }

    #[test]
    fn duration_below_one_step_is_rejected() {
        let p = ModelParams::default();
        let err = integrate(
            Phase::Series,
            CascadeState::default(),
            FlowDirection::Forward,
            da(0.03),
            &p,
            1e-4,
            &IntegratorSettings::with_step(1e-3),
        )
        .unwrap_err();
        assert!(matches!(err, Error::StepAdjustment { .. }));
    }

    #[test]
    fn step_count_divides_phase() {
        let s = IntegratorSettings::for_period(6.0);
        assert_eq!(s.steps_for(6.0).unwrap(), 2000);
        assert_eq!(s.steps_for(4.5).unwrap(), 1500);
        assert_eq!(s.steps_for(0.1).unwrap(), 34);
        assert_eq!(
            IntegratorSettings::for_period(1.0).steps_for(1.0).unwrap(),
            2000
        );
    }

    #[test]
    fn simpson_is_exact_for_linear_decay_average() {
        // Da = 0, io = 0 from (0, 1): alpha2 = e^-tau, mean over [0,1] is 1 - 1/e.
        let p = ModelParams::default();
        let (_, summary, _) = integrate_cycle(
            CascadeState::new(0.0, 1.0),
            FlowDirection::Forward,
            da(0.0),
            &p,
            1.0,
            &IntegratorSettings::for_period(1.0),
        )
        .unwrap();
        assert!((summary.alpha_avg - (1.0 - (-1.0f64).exp())).abs() < 1e-12);
        assert_eq!(summary.alpha_beg, 1.0);
    }

    #[test]
    fn relaxation_cycle_degenerates_to_series_cycle() {
        let p = ModelParams::default();
        let s = CascadeState::new(0.2, 0.6);
        let settings = IntegratorSettings::for_period(6.0);
        let a = integrate_cycle(s, FlowDirection::Reverse, da(0.0265), &p, 6.0, &settings).unwrap();
        let b = integrate_relax_cycle(
            s,
            FlowDirection::Reverse,
            da(0.0265),
            &p,
            6.0,
            0.0,
            &settings,
        )
        .unwrap();
        assert_eq!(a, b);
        assert!(integrate_relax_cycle(
            s,
            FlowDirection::Reverse,
            da(0.02),
            &p,
            6.0,
            6.5,
            &settings
        )
        .is_err());
    }

    #[test]
    fn relaxation_cycle_phase_boundary() {
        let p = ModelParams::default();
        let settings = IntegratorSettings::for_period(6.0).recording(1);
        let s = CascadeState::new(0.2, 0.6);
        let (_, summary, traj) = integrate_relax_cycle(
            s,
            FlowDirection::Reverse,
            da(0.0265),
            &p,
            6.0,
            4.5,
            &settings,
        )
        .unwrap();
        // beginning reads the fed reactor (2) for io = 1
        assert_eq!(summary.alpha_beg, 0.6);
        assert!(traj.samples.windows(2).all(|w| w[0].tau < w[1].tau));
        let switch = traj.iter().find(|s| s.phase == Phase::Series).unwrap();
        assert!((switch.tau - 4.5).abs() < 1e-12);
        assert!((traj.samples.last().unwrap().tau - 6.0).abs() < 1e-12);
        for s in traj.iter() {
            let expected = alpha_out(s.state, s.io, s.phase);
            assert_eq!(s.alpha_out, expected);
        }

        // whole period relaxing
        let (_, full, traj) = integrate_relax_cycle(
            s,
            FlowDirection::Reverse,
            da(0.0265),
            &p,
            6.0,
            6.0,
            &settings,
        )
        .unwrap();
        assert!(traj.iter().all(|s| s.phase == Phase::Relaxing));
        assert!(full.out_min <= full.alpha_avg && full.alpha_avg <= full.out_max);
    }

    #[test]
    fn short_phases_use_a_shortened_step() {
        let p = ModelParams::default();
        let settings = IntegratorSettings::with_step(0.02).recording(1);
        let s = CascadeState::new(0.4, 0.1);
        for tau_rel in [0.005, 0.995] {
            let (end, _, traj) = integrate_relax_cycle(
                s,
                FlowDirection::Forward,
                da(0.0),
                &p,
                1.0,
                tau_rel,
                &settings,
            )
            .unwrap();
            assert!((traj.samples.last().unwrap().tau - 1.0).abs() < 1e-12);
            assert!((end.alpha1 - 0.4 * (-1.0f64).exp()).abs() < 1e-8);
        }
    }

    #[test]
    fn append_keeps_time_strictly_increasing() {
        let p = ModelParams::default();
        let settings = IntegratorSettings::for_period(1.0);
        let (end, _, t1) = integrate_cycle(
            CascadeState::default(),
            FlowDirection::Forward,
            da(0.02),
            &p,
            1.0,
            &settings,
        )
        .unwrap();
        let (_, _, t2) =
            integrate_cycle(end, FlowDirection::Reverse, da(0.02), &p, 1.0, &settings).unwrap();
        let mut all = t1.clone();
        all.append_shifted(t2, 1.0);
        assert_eq!(all.len(), t1.len() * 2 - 1);
        assert!(all.samples.windows(2).all(|w| w[0].tau < w[1].tau));
        assert_eq!(all.samples[t1.len() - 1].io, FlowDirection::Reverse);
    }
}
