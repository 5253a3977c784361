use std::fs;
use std::path::Path;

use spinmeas_core::presets::preset_scenarios;
use spinmeas_core::scenario::EventOutcome;
use spinmeas_core::{
    import_table, lanczos_ground_state, magnetization, measure_nonselective, parse_scenarios, project,
    run_scenario, write_state, Axis, ChainSpec, Error, LanczosConfig, ObservableId, PhaseConvention,
    ProjectorSpec, Propagator, PropagatorConfig, RunOptions, Scenario, Sign, StateVector, TableFormat,
    TimeSeriesRecord,
};

fn one(text: &str, base: Option<&Path>) -> Scenario {
    parse_scenarios(text, base).unwrap().remove(0)
}

fn two_events(outcome2: &str) -> Scenario {
    one(
        &format!(
            r#"
            [[scenario]]
            name = "two"
            chain = {{ n_sites = 8, anisotropy_delta = 0.5 }}
            events = [
              {{ time = 0.5, site = 1, axis = "z", outcome = "+" }},
              {{ time = 2.0, site = 4, axis = "x", outcome = "{outcome2}" }},
            ]
            [scenario.sampling]
            t_end = 4.0
            dt = 0.25
            observables = [
              {{ kind = "magnetization", axis = "z", sites = "all" }},
              {{ kind = "magnetization", axis = "x", sites = [4, 5] }},
              {{ kind = "correlation", axis = "z", sites = [3], anchor = 1 }},
              {{ kind = "energy" }},
              {{ kind = "staggered" }},
            ]
            "#
        ),
        None,
    )
}

fn opts_in(dir: &Path) -> RunOptions {
    RunOptions {
        out_dir: Some(dir.to_path_buf()),
        ..RunOptions::default()
    }
}

fn last_at(r: &TimeSeriesRecord, t: f64) -> f64 {
    let view = r.post_event_view(t - 1e-9);
    assert!((view.times[0] - t).abs() < 1e-12);
    view.values[0]
}

#[test]
fn selective_chain_matches_direct_evolution() {
    let s = two_events("-");
    let out = run_scenario(&s, &RunOptions::default()).unwrap();

    let spec = s.chain;
    let g = lanczos_ground_state(&spec, &LanczosConfig::default()).unwrap();
    let mut prop = Propagator::new(spec, PropagatorConfig::default()).unwrap();
    let a = project(&prop.evolve(&g.state, 0.5).unwrap(), ProjectorSpec::new(1, Axis::Z, Sign::Plus)).unwrap();
    let b = project(&prop.evolve(&a.state, 1.5).unwrap(), ProjectorSpec::new(4, Axis::X, Sign::Minus)).unwrap();
    let end = prop.evolve(&b.state, 2.0).unwrap();

    let m = &out.manifest;
    assert!((m.events[0].probabilities[0].probability - a.probability).abs() < 1e-12);
    assert!((m.events[1].probabilities[0].probability - b.probability).abs() < 1e-12);
    assert!((m.selective_probability_product - a.probability * b.probability).abs() < 1e-12);

    for site in 1..=8 {
        let r = out
            .records
            .iter()
            .find(|r| r.id == ObservableId::Magnetization { site, axis: Axis::Z })
            .unwrap();
        assert!((last_at(r, 4.0) - magnetization(&end, site, Axis::Z).unwrap()).abs() < 1e-10);
        // Pre-event value of the second event is the evolved first-event state.
        let pre = r.values[r.times.iter().position(|&t| t == 2.0).unwrap()];
        let before = prop.evolve(&a.state, 1.5).unwrap();
        assert!((pre - magnetization(&before, site, Axis::Z).unwrap()).abs() < 1e-10);
    }
}

#[test]
fn nonselective_event_matches_weighted_branches() {
    let s = two_events("nonselective");
    let out = run_scenario(&s, &RunOptions::default()).unwrap();
    assert_eq!(out.branches.len(), 2);
    assert_eq!(out.manifest.events[1].outcome, EventOutcome::Nonselective);
    let total: f64 = out.manifest.events[1].probabilities.iter().map(|p| p.probability).sum();
    assert!((total - 1.0).abs() < 1e-12);

    let spec = s.chain;
    let g = lanczos_ground_state(&spec, &LanczosConfig::default()).unwrap();
    let mut prop = Propagator::new(spec, PropagatorConfig::default()).unwrap();
    let a = project(&prop.evolve(&g.state, 0.5).unwrap(), ProjectorSpec::new(1, Axis::Z, Sign::Plus)).unwrap();
    let branches = measure_nonselective(&prop.evolve(&a.state, 1.5).unwrap(), 4, Axis::X).unwrap();
    let mut expected = 0.0;
    for b in &branches {
        let end = prop.evolve(b.state.as_ref().unwrap(), 2.0).unwrap();
        expected += b.probability * magnetization(&end, 4, Axis::X).unwrap();
    }
    let r = out
        .records
        .iter()
        .find(|r| r.id == ObservableId::Magnetization { site: 4, axis: Axis::X })
        .unwrap();
    assert!((last_at(r, 4.0) - expected).abs() < 1e-10);
}

#[test]
fn runs_are_byte_identical() {
    let s = two_events("+");
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let a = run_scenario(&s, &opts_in(d1.path())).unwrap();
    let b = run_scenario(&s, &opts_in(d2.path())).unwrap();
    assert_eq!(a.manifest.outputs, b.manifest.outputs);
    let series = |d: &Path| fs::read(d.join("two/series.csv")).unwrap();
    assert_eq!(series(d1.path()), series(d2.path()));
}

#[test]
fn resumed_run_matches_uninterrupted_run() {
    let s = two_events("nonselective");
    let full_dir = tempfile::tempdir().unwrap();
    let full = run_scenario(&s, &opts_in(full_dir.path())).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let stopped = run_scenario(
        &s,
        &RunOptions {
            checkpoint: true,
            stop_after_event: Some(0),
            ..opts_in(dir.path())
        },
    )
    .unwrap();
    assert!(!stopped.completed);
    assert!(dir.path().join("two/checkpoint/progress.json").exists());

    let resumed = run_scenario(
        &s,
        &RunOptions {
            checkpoint: true,
            resume: true,
            ..opts_in(dir.path())
        },
    )
    .unwrap();
    assert!(resumed.completed && resumed.manifest.resumed);
    assert_eq!(resumed.records, full.records);
    assert!(!dir.path().join("two/checkpoint").exists());
    assert_eq!(
        fs::read(dir.path().join("two/series.csv")).unwrap(),
        fs::read(full_dir.path().join("two/series.csv")).unwrap()
    );
}

#[test]
fn resume_rejects_a_changed_scenario() {
    let s = two_events("+");
    let dir = tempfile::tempdir().unwrap();
    let cp = RunOptions {
        checkpoint: true,
        stop_after_event: Some(0),
        ..opts_in(dir.path())
    };
    run_scenario(&s, &cp).unwrap();
    let mut changed = s.clone();
    changed.chain.anisotropy_delta = 0.75;
    let err = run_scenario(
        &changed,
        &RunOptions {
            resume: true,
            ..opts_in(dir.path())
        },
    )
    .unwrap_err();
    assert_eq!(err.exit_code(), 2, "{err}");
}

#[test]
fn json_tables_round_trip() {
    let s = two_events("+");
    let dir = tempfile::tempdir().unwrap();
    let out = run_scenario(
        &s,
        &RunOptions {
            format: TableFormat::Json,
            ..opts_in(dir.path())
        },
    )
    .unwrap();
    assert_eq!(import_table(&dir.path().join("two/series.json")).unwrap(), out.records);
}

#[test]
fn state_file_initial_state() {
    let dir = tempfile::tempdir().unwrap();
    let spec = ChainSpec::new(6, 1.0, 1.0).unwrap();
    let g = lanczos_ground_state(&spec, &LanczosConfig::default()).unwrap();
    write_state(&dir.path().join("gs.state"), &g.state, PhaseConvention::LargestRealPositive).unwrap();
    let text = |kind: &str| {
        format!(
            r#"
            [[scenario]]
            name = "from-file"
            chain = {{ n_sites = 6, anisotropy_delta = 1.0 }}
            initial_state = {kind}
            [scenario.sampling]
            t_end = 1.0
            observables = [{{ kind = "energy" }}]
            "#
        )
    };
    let from_file = one(&text(r#"{ kind = "file", path = "gs.state" }"#), Some(dir.path()));
    let from_gs = one(&text(r#"{ kind = "ground_state" }"#), None);
    let a = run_scenario(&from_file, &RunOptions::default()).unwrap();
    let b = run_scenario(&from_gs, &RunOptions::default()).unwrap();
    for (x, y) in a.records[0].values.iter().zip(&b.records[0].values) {
        assert!((x - y).abs() < 1e-12);
    }

    // A state of another chain is rejected.
    let other = text(r#"{ kind = "file", path = "gs.state" }"#).replace("n_sites = 6", "n_sites = 8");
    let err = run_scenario(&one(&other, Some(dir.path())), &RunOptions::default()).unwrap_err();
    assert_eq!(err.exit_code(), 2, "{err}");
}

#[test]
fn neel_product_state_oscillates() {
    let s = one(
        r#"
        [[scenario]]
        name = "neel"
        chain = { n_sites = 8, anisotropy_delta = 1.0 }
        initial_state = { kind = "product", pattern = "neel" }
        [scenario.sampling]
        t_end = 3.0
        observables = [{ kind = "staggered" }, { kind = "energy" }]
        "#,
        None,
    );
    let out = run_scenario(&s, &RunOptions::default()).unwrap();
    assert!(out.manifest.ground_state.is_none());
    let stag = &out.records[0];
    assert!((stag.values[0] - 0.5).abs() < 1e-15);
    assert!(stag.values.iter().any(|&v| v < 0.3));
    let e = &out.records[1].values;
    assert!(e.iter().all(|x| (x - e[0]).abs() < 1e-10));
}

#[test]
fn impossible_selective_outcome_is_reported() {
    let s = one(
        r#"
        [[scenario]]
        name = "impossible"
        chain = { n_sites = 6 }
        initial_state = { kind = "product", pattern = "neel" }
        events = [{ time = 0.0, site = 2, axis = "z", outcome = "+" }]
        [scenario.sampling]
        t_end = 1.0
        observables = [{ kind = "energy" }]
        "#,
        None,
    );
    let err = run_scenario(&s, &RunOptions::default()).unwrap_err();
    assert_eq!(err.exit_code(), 4);
    assert!(matches!(err, Error::AtEvent { index: 0, .. }), "{err}");
}

/// Later measurements in the fig7 schedule should leave a much weaker
/// pattern than the first: the odd-site profile right after event 2 has at
/// most half the contrast (max - min over sites) of the profile right after
/// event 1.
#[test]
fn fig7_repeated_measurements_add_no_new_wave() {
    let s = preset_scenarios("fig7-n10").unwrap().remove(0);
    let out = run_scenario(&s, &RunOptions::default()).unwrap();
    let contrast = |t: f64| {
        let profile: Vec<f64> = out
            .records
            .iter()
            .filter(|r| matches!(r.id, ObservableId::Magnetization { .. }))
            .map(|r| last_at(r, t))
            .collect();
        profile.iter().copied().fold(f64::MIN, f64::max) - profile.iter().copied().fold(f64::MAX, f64::min)
    };
    let (c1, c2) = (contrast(s.events[0].time), contrast(s.events[1].time));
    assert!(c2 <= 0.5 * c1, "contrast after event 1 = {c1}, after event 2 = {c2}");
}

#[test]
fn every_preset_parses_and_validates() {
    for p in spinmeas_core::presets::PRESETS {
        for s in p.scenarios().unwrap() {
            let report = spinmeas_core::validate_scenario(&s, &RunOptions::default());
            assert!(report.is_ok(), "{}: {:?}", s.name, report.violations);
        }
    }
}

#[test]
fn run_reports_ground_state_and_final_branches() {
    let s = two_events("+");
    let out = run_scenario(&s, &RunOptions::default()).unwrap();
    let info = out.manifest.ground_state.unwrap();
    assert_eq!(info.sector_total_sz, Some(0.0));
    assert!(info.residual < 1e-8);
    let psi: &StateVector = &out.branches[0].1;
    assert!((psi.norm() - 1.0).abs() < 1e-12);
}
