use transec_core::experiment::{
    replay, run_experiment, DetectorParams, EnsembleParams, ExperimentSpec, GreedyVsExhaustiveParams, PpcParams,
};
use transec_core::netgen::GreParams;

fn assert_replays(spec: ExperimentSpec) {
    let dir = std::env::temp_dir().join(format!("transec-replay-{}-{}", spec.kind(), std::process::id()));
    let first = run_experiment(&spec).unwrap();
    let written = first.write_to(&dir).unwrap();
    assert_eq!(written.len(), first.tables.len() + first.timing_tables.len() + 1);
    for t in first.tables.iter().chain(&first.timing_tables) {
        let text = std::fs::read_to_string(dir.join(t.file_name())).unwrap();
        assert!(text.starts_with(&format!("# schema: transec.{}.v1\n", t.name)));
    }
    let second = replay(&dir.join("manifest.json")).unwrap();
    assert_eq!(second.spec, spec);
    assert_eq!(first.tables, second.tables);
    assert_eq!(first.summary, second.summary);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn game_experiment_replays_bit_identically() {
    assert_replays(ExperimentSpec::GreedyVsExhaustive(GreedyVsExhaustiveParams {
        ensemble: EnsembleParams {
            networks: 3,
            seed: 5,
            gre: GreParams {
                width: 3,
                height: 3,
                ..GreParams::default()
            },
            ..EnsembleParams::default()
        },
        max_budget: 2,
        ..GreedyVsExhaustiveParams::default()
    }));
}

#[test]
fn detector_experiment_replays_bit_identically() {
    assert_replays(ExperimentSpec::Ppc(PpcParams {
        detector: DetectorParams {
            train_hours: 24.0,
            test_hours: 12.0,
            ..DetectorParams::default()
        },
        n_rep: 1000,
    }));
}

#[test]
fn gadget_experiment_replays_bit_identically() {
    let spec = ExperimentSpec::default_for("gadget-check").unwrap().with_seed(11);
    assert_replays(spec);
}
