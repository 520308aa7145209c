//! Command orchestration behind the `cascade` binary. Each command resolves
//! what it needs from a [`RunConfig`], runs the computation and writes its
//! tables into the configured output directory.

use std::path::{Path, PathBuf};

use log::info;
use thiserror::Error;

use crate::config::{ConfigError, DaSelection, OperatingMode, RelaxationTime, RunConfig};
use crate::error::Error as ModelError;
use crate::integrator::{integrate, CycleSummary, IntegratorSettings, Trajectory};
use crate::model::{alpha_out, CascadeState, Damkohler, FlowDirection, Phase};
use crate::output::{self, fmt_f64, fmt_ratio, OutputError, Table};
use crate::periodic::{
    newton_shoot, settle_to_attractor, trace_branch_periodic, PeriodicDiagram, ShootingSetup,
};
use crate::relaxation::{ratio, scan_tau_rel, simulate_relaxation, RelaxationPolicy};
use crate::steady::{
    branch_point, find_steady_states_oracle, trace_branch_ss, CurveKind, DiagramCurve,
};
use crate::svg::{line_plot, Series};

const ORACLE_GRID: usize = 4000;

#[derive(Debug, Error)]
pub enum CommandError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{context}: {source}")]
    Numerical { context: String, source: ModelError },
    #[error(transparent)]
    Output(#[from] OutputError),
}

impl CommandError {
    /// 2 for usage errors, 3 for numerical failures, 1 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) | Self::Config(_) => 2,
            Self::Numerical { source, .. } => match source {
                ModelError::Domain { .. }
                | ModelError::InvalidParameter(_)
                | ModelError::StepAdjustment { .. } => 2,
                _ => 3,
            },
            Self::Output(_) => 1,
        }
    }
}

type Result<T> = std::result::Result<T, CommandError>;

fn numerical(context: impl Into<String>) -> impl FnOnce(ModelError) -> CommandError {
    let context = context.into();
    move |source| CommandError::Numerical { context, source }
}

/// Files written by a command and a short human-readable summary.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CommandOutput {
    pub files: Vec<PathBuf>,
    pub summary: Vec<String>,
}

impl CommandOutput {
    fn write(&mut self, path: PathBuf, bytes: &[u8]) -> Result<()> {
        output::write_atomic(&path, bytes)?;
        self.files.push(path);
        Ok(())
    }

    fn table(&mut self, path: PathBuf, table: Table) -> Result<()> {
        self.write(path, &table.into_bytes())
    }
}

/// Runs `body`; a numerical failure leaves a sidecar log next to `primary`.
fn guarded(
    config: &RunConfig,
    primary: &Path,
    body: impl FnOnce() -> Result<CommandOutput>,
) -> Result<CommandOutput> {
    let result = body();
    if let Err(e @ CommandError::Numerical { .. }) = &result {
        let mut text = format!("aborted: {e}\n");
        for (k, v) in config.echo() {
            text.push_str(&format!("{k} = {v}\n"));
        }
        output::write_atomic(&output::sidecar_path(primary), text.as_bytes())?;
    }
    result
}

fn single_da(config: &RunConfig, command: &str) -> Result<Damkohler> {
    match config.da {
        DaSelection::Single(d) => Damkohler::new(d).map_err(numerical("Da")),
        DaSelection::Range { .. } => Err(CommandError::Usage(format!(
            "`{command}` needs a single `da`"
        ))),
    }
}

fn reverse_period(config: &RunConfig, command: &str) -> Result<f64> {
    config.mode.tau_rf().ok_or_else(|| {
        CommandError::Usage(format!(
            "`{command}` needs a flow-reversal mode with `tau_rf`"
        ))
    })
}

fn diagram_plot(curves: &[DiagramCurve]) -> String {
    let series: Vec<Series> = curves
        .iter()
        .map(|c| Series {
            label: c.kind.as_str().to_string(),
            points: c.points.iter().map(|p| (p.p, p.alpha_out)).collect(),
        })
        .collect();
    line_plot("Da", "alpha_out", &series)
}

/// Steady-state diagram of constant-flow operation (`ss` curve).
pub fn cmd_steady(config: &RunConfig) -> Result<CommandOutput> {
    let path = config.out.join("steady.csv");
    guarded(config, &path, || {
        let io = match config.mode {
            OperatingMode::ConstantFlow(io) => io,
            _ => FlowDirection::Forward,
        };
        let params = &config.params;
        let points = match config.da {
            DaSelection::Single(d) => {
                let da = Damkohler::new(d).map_err(numerical("Da"))?;
                let mut states = find_steady_states_oracle(da, io, params, ORACLE_GRID)
                    .map_err(numerical(format!("steady states at Da = {d}")))?;
                states.sort_by(|a, b| {
                    alpha_out(*a, io, Phase::Series).total_cmp(&alpha_out(*b, io, Phase::Series))
                });
                states
                    .into_iter()
                    .map(|s| branch_point(d, s, io, params))
                    .collect::<crate::Result<Vec<_>>>()
                    .map_err(numerical(format!("steady states at Da = {d}")))?
            }
            DaSelection::Range { min, .. } => {
                let da = Damkohler::new(min).map_err(numerical("Da"))?;
                let lowest = find_steady_states_oracle(da, io, params, ORACLE_GRID)
                    .map_err(numerical(format!("steady states at Da = {min}")))?
                    .into_iter()
                    .min_by(|a, b| {
                        alpha_out(*a, io, Phase::Series).total_cmp(&alpha_out(
                            *b,
                            io,
                            Phase::Series,
                        ))
                    })
                    .ok_or_else(|| CommandError::Numerical {
                        context: format!("steady states at Da = {min}"),
                        source: ModelError::NonConvergence {
                            iterations: 0,
                            residual: f64::NAN,
                        },
                    })?;
                let start =
                    branch_point(min, lowest, io, params).map_err(numerical("branch start"))?;
                trace_branch_ss(&start, io, params, &config.continuation)
                    .map_err(numerical("steady continuation"))?
                    .points
            }
        };
        let curve = DiagramCurve {
            kind: CurveKind::Ss,
            points,
        };
        let folds = curve.fold_indices();
        let mut out = CommandOutput::default();
        out.summary.push(format!(
            "{} steady points, {} folds",
            curve.points.len(),
            folds.len()
        ));
        for i in folds {
            out.summary
                .push(format!("fold near Da = {:.6}", curve.points[i].p));
        }
        let curves = [curve];
        let meta = output::metadata("steady", &config.echo());
        out.table(path.clone(), output::diagram_table(&meta, &curves))?;
        if config.svg {
            out.write(
                config.out.join("steady.svg"),
                diagram_plot(&curves).as_bytes(),
            )?;
        }
        Ok(out)
    })
}

/// Diagram of symmetric reverse-flow regimes (`beg`, `end`, `av` curves).
pub fn cmd_periodic(config: &RunConfig) -> Result<CommandOutput> {
    let path = config.out.join("periodic.csv");
    guarded(config, &path, || {
        let tau_rf = match config.mode {
            OperatingMode::ReverseFlow { tau_rf } => tau_rf,
            _ => {
                return Err(CommandError::Usage(
                    "`periodic` traces plain reverse flow; set `mode = reverse`".into(),
                ))
            }
        };
        let settings = config.integrator(tau_rf);
        let setup = ShootingSetup::new(&config.params, tau_rf, &settings);
        let cont = &config.continuation;
        let start_da = match config.da {
            DaSelection::Single(d) => d,
            DaSelection::Range { min, .. } => min,
        };
        let settled = settle_to_attractor(config.seed, start_da, &setup, &config.settle)
            .map_err(numerical(format!("settling at Da = {start_da}")))?;
        let start = newton_shoot(
            settled.start_state,
            &setup,
            start_da,
            cont.newton_tol,
            cont.newton_max_iter,
        )
        .map_err(numerical(format!("shooting at Da = {start_da}")))?;
        let diagram = match config.da {
            DaSelection::Single(_) => PeriodicDiagram {
                points: vec![start],
            },
            DaSelection::Range { .. } => trace_branch_periodic(&start, &setup, cont)
                .map_err(numerical("periodic continuation"))?,
        };
        let curves = diagram.curves();
        let mut out = CommandOutput::default();
        let folds = curves[0].fold_indices();
        out.summary.push(format!(
            "{} periodic points, {} folds",
            diagram.points.len(),
            folds.len()
        ));
        for i in folds {
            out.summary
                .push(format!("fold near Da = {:.6}", curves[0].points[i].p));
        }
        let meta = output::metadata("periodic", &config.echo());
        out.table(path.clone(), output::diagram_table(&meta, &curves))?;
        if config.svg {
            out.write(
                config.out.join("periodic.svg"),
                diagram_plot(&curves).as_bytes(),
            )?;
        }
        Ok(out)
    })
}

/// Constant-flow simulation in unit-length blocks, one summary per block.
fn simulate_constant(
    state0: CascadeState,
    io: FlowDirection,
    da: Damkohler,
    config: &RunConfig,
) -> crate::Result<(Trajectory, Vec<CycleSummary>)> {
    let settings = IntegratorSettings {
        step: 1.0 / config.steps_per_period as f64,
        record_every: config.record_every,
    };
    let mut trajectory = Trajectory::new();
    let mut summaries = Vec::with_capacity(config.cycles);
    let mut state = state0;
    for j in 0..config.cycles {
        let run = integrate(Phase::Series, state, io, da, &config.params, 1.0, &settings)?;
        summaries.push(CycleSummary {
            alpha_beg: alpha_out(state, io, Phase::Series),
            alpha_end: alpha_out(run.end_state, io, Phase::Series),
            alpha_avg: run.integral,
            end_state: run.end_state,
            out_min: run.out_min,
            out_max: run.out_max,
        });
        trajectory.append_shifted(run.trajectory, j as f64);
        state = run.end_state;
    }
    Ok((trajectory, summaries))
}

/// Time series of one operating mode from the configured seed state.
pub fn cmd_simulate(config: &RunConfig) -> Result<CommandOutput> {
    let path = config.out.join("series.csv");
    guarded(config, &path, || {
        let da = single_da(config, "simulate")?;
        let (trajectory, summaries) = match config.mode {
            OperatingMode::ConstantFlow(io) => simulate_constant(config.seed, io, da, config),
            OperatingMode::ReverseFlow { tau_rf } => {
                let policy = RelaxationPolicy::reverse_only(tau_rf).map_err(numerical("policy"))?;
                simulate_relaxation(
                    config.seed,
                    da,
                    &config.params,
                    &policy,
                    &config.integrator(tau_rf),
                    config.cycles,
                )
            }
            OperatingMode::Relaxation {
                tau_rf,
                tau_rel: RelaxationTime::Fixed(tau_rel),
            } => {
                let policy = RelaxationPolicy::new(tau_rf, tau_rel).map_err(numerical("policy"))?;
                simulate_relaxation(
                    config.seed,
                    da,
                    &config.params,
                    &policy,
                    &config.integrator(tau_rf),
                    config.cycles,
                )
            }
            OperatingMode::Relaxation {
                tau_rel: RelaxationTime::Scan,
                ..
            } => {
                return Err(CommandError::Usage(
                    "`simulate` needs a fixed `tau_rel`; use `relax-scan` to scan it".into(),
                ))
            }
        }
        .map_err(numerical("simulation"))?;

        let mut out = CommandOutput::default();
        if let Some(last) = summaries.last() {
            out.summary.push(format!(
                "{} cycles, last cycle average {:.6}",
                summaries.len(),
                last.alpha_avg
            ));
        }
        let meta = output::metadata("simulate", &config.echo());
        out.table(path.clone(), output::series_table(&meta, trajectory.iter()))?;
        out.table(
            config.out.join("cycles.csv"),
            output::cycles_table(&meta, &summaries),
        )?;
        if config.svg {
            let pick = |f: fn(&crate::integrator::Sample) -> f64| {
                trajectory.iter().map(|s| (s.tau, f(s))).collect()
            };
            let series = [
                Series {
                    label: "alpha_out".into(),
                    points: pick(|s| s.alpha_out),
                },
                Series {
                    label: "alpha1".into(),
                    points: pick(|s| s.state.alpha1),
                },
                Series {
                    label: "alpha2".into(),
                    points: pick(|s| s.state.alpha2),
                },
            ];
            out.write(
                config.out.join("series.svg"),
                line_plot("tau", "alpha", &series).as_bytes(),
            )?;
        }
        Ok(out)
    })
}

/// Scan of the relaxation time with a gain report against the other modes.
pub fn cmd_relax_scan(config: &RunConfig) -> Result<CommandOutput> {
    let path = config.out.join("relax_scan.csv");
    guarded(config, &path, || {
        let da = single_da(config, "relax-scan")?;
        let tau_rf = reverse_period(config, "relax-scan")?;
        let settings = config.integrator(tau_rf);
        let scan = scan_tau_rel(
            da,
            &config.params,
            tau_rf,
            config.grid_step,
            &settings,
            &config.settle,
        )
        .map_err(numerical(format!("relaxation scan at Da = {}", da.value())))?;
        info!(
            "best tau_rel {} with average {}",
            scan.best_tau_rel, scan.best_average
        );

        let meta = output::metadata("relax-scan", &config.echo());
        let mut table = Table::new(&meta, &output::SCAN_HEADER);
        for e in &scan.table {
            table.row([
                fmt_f64(e.tau_rel),
                e.average.map(fmt_f64).unwrap_or_default(),
                e.average.is_some().to_string(),
            ]);
        }
        let mut report = Table::new(&meta, &output::REPORT_HEADER);
        let rows = [
            ("best_tau_rel", fmt_f64(scan.best_tau_rel)),
            ("best_average", fmt_f64(scan.best_average)),
            ("cold_start_average", fmt_f64(scan.cold_start_average)),
            ("reverse_average", fmt_f64(scan.reverse_average)),
            ("constant_average", fmt_f64(scan.constant_average)),
            ("gain_vs_reverse", fmt_ratio(scan.gain_vs_reverse)),
            ("gain_vs_constant", fmt_ratio(scan.gain_vs_constant)),
            (
                "reverse_vs_constant",
                fmt_ratio(ratio(scan.reverse_average, scan.constant_average)),
            ),
        ];
        for (k, v) in rows {
            report.row([k.to_string(), v]);
        }

        let mut out = CommandOutput::default();
        out.summary.push(format!(
            "best tau_rel = {} (average {:.6}, {} x reverse flow)",
            scan.best_tau_rel,
            scan.best_average,
            scan.gain_vs_reverse
                .map_or_else(|| output::UNDEFINED.to_string(), |g| format!("{g:.3}"))
        ));
        out.table(path.clone(), table)?;
        out.table(config.out.join("gain_report.csv"), report)?;
        if config.svg {
            let series = [Series {
                label: "av".into(),
                points: scan
                    .table
                    .iter()
                    .filter_map(|e| e.average.map(|a| (e.tau_rel, a)))
                    .collect(),
            }];
            out.write(
                config.out.join("relax_scan.svg"),
                line_plot("tau_rel", "alpha_out", &series).as_bytes(),
            )?;
        }
        Ok(out)
    })
}
