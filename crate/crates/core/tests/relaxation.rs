use cascade_core::integrator::IntegratorSettings;
use cascade_core::periodic::{settle_to_attractor, SettleOptions, ShootingSetup};
use cascade_core::relaxation::{
    compare_modes, scan_tau_rel, settle_relaxation, simulate_relaxation, RelaxationPolicy,
};
use cascade_core::{CascadeState, Damkohler, FlowDirection, ModelParams, Phase};

fn da(v: f64) -> Damkohler {
    Damkohler::new(v).unwrap()
}

#[test]
fn batch_reactor_never_loses_conversion() {
    let p = ModelParams::default();
    let cases = [
        (0.0265, 6.0, 4.5),
        (0.022, 1.0, 0.3),
        (0.04, 2.0, 2.0),
        (0.01, 3.0, 1.7),
    ];
    for (d, tau_rf, tau_rel) in cases {
        let policy = RelaxationPolicy::new(tau_rf, tau_rel).unwrap();
        let settings = IntegratorSettings::for_period(tau_rf).recording(1);
        let (traj, _) = simulate_relaxation(
            CascadeState::new(0.3, 0.1),
            da(d),
            &p,
            &policy,
            &settings,
            12,
        )
        .unwrap();
        assert!(traj.iter().any(|s| s.phase == Phase::Relaxing));
        for w in traj.samples.windows(2) {
            if w[0].phase == Phase::Relaxing && w[1].phase == Phase::Relaxing && w[0].io == w[1].io
            {
                let batch = |s: &cascade_core::integrator::Sample| match s.io {
                    FlowDirection::Forward => s.state.alpha2,
                    FlowDirection::Reverse => s.state.alpha1,
                };
                assert!(
                    batch(&w[1]) >= batch(&w[0]),
                    "Da {d}: batch conversion fell at tau {}",
                    w[1].tau
                );
            }
        }
    }
}

#[test]
fn settled_regimes_alternate_by_swap() {
    let p = ModelParams::default();
    let policy = RelaxationPolicy::new(6.0, 4.5).unwrap();
    let settings = IntegratorSettings::for_period(6.0);
    let regime = settle_relaxation(
        CascadeState::default(),
        da(0.0265),
        &p,
        &policy,
        &settings,
        &SettleOptions::default(),
    )
    .unwrap();
    assert!(
        regime
            .forward
            .end_state
            .max_abs_diff(regime.start_state.swap())
            < 1e-8
    );
    assert!((regime.forward.alpha_avg - regime.reverse.alpha_avg).abs() < 1e-8);
}

#[test]
fn scan_optimum_and_degeneracy() {
    let p = ModelParams::default();
    let settings = IntegratorSettings::for_period(6.0);
    let options = SettleOptions::default();
    let scan = scan_tau_rel(da(0.0265), &p, 6.0, 0.1, &settings, &options).unwrap();
    assert_eq!(scan.table.len(), 61);
    assert!(scan
        .table
        .iter()
        .all(|e| e.average.is_some_and(|a| a <= scan.best_average)));
    assert!((scan.best_tau_rel - 4.5).abs() <= 0.5);
    assert!((scan.cold_start_average - scan.best_average).abs() < 1e-6);

    let setup = ShootingSetup::new(&p, 6.0, &settings);
    let reverse = settle_to_attractor(CascadeState::default(), 0.0265, &setup, &options).unwrap();
    let at_zero = scan.table[0].average.unwrap();
    assert!((at_zero - reverse.summary.alpha_avg).abs() < 1e-10);
    assert_eq!(scan.reverse_average, at_zero);
}

#[test]
fn optimum_reaches_the_full_period_at_low_conversion() {
    let p = ModelParams::default();
    let scan = scan_tau_rel(
        da(0.02),
        &p,
        6.0,
        0.5,
        &IntegratorSettings::for_period(6.0),
        &SettleOptions::default(),
    )
    .unwrap();
    assert_eq!(scan.best_tau_rel, 6.0);
}

#[test]
fn no_reaction_gives_a_flat_table() {
    let p = ModelParams::default();
    let scan = scan_tau_rel(
        da(0.0),
        &p,
        2.0,
        0.5,
        &IntegratorSettings::for_period(2.0),
        &SettleOptions::default(),
    )
    .unwrap();
    assert_eq!(scan.table.len(), 5);
    assert!(scan.table.iter().all(|e| e.average == Some(0.0)));
    assert_eq!(scan.best_tau_rel, 0.0);
    assert_eq!(scan.gain_vs_reverse, None);
    assert_eq!(scan.gain_vs_constant, None);
}

#[test]
fn operating_mode_gains() {
    let p = ModelParams::default();
    let options = SettleOptions::default();
    let r = compare_modes(
        da(0.028),
        &p,
        1.0,
        0.0,
        &IntegratorSettings::for_period(1.0),
        &options,
    )
    .unwrap();
    let gain = r.reverse_vs_constant.unwrap();
    assert!((5.0..=12.0).contains(&gain), "{gain}");
    assert_eq!(r.relaxation, r.reverse);

    let r = compare_modes(
        da(0.0265),
        &p,
        6.0,
        4.5,
        &IntegratorSettings::for_period(6.0),
        &options,
    )
    .unwrap();
    let gain = r.relaxation_vs_reverse.unwrap();
    assert!((3.0..=7.0).contains(&gain), "{gain}");
}
