use std::path::Path;

use fext_turbo::channel::{synthesize_channel, write_channel_csv, CableModelParams, ToneGrid};
use fext_turbo::harness::{
    parse_csv, run_experiment, to_csv, Algorithm, ChannelSource, ExperimentConfig, ExperimentKind, DESK_GRID_TONES,
};

fn per_tone_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::defaults(ExperimentKind::PerTone);
    cfg.detectors = vec![Algorithm::Zf, Algorithm::Sud, Algorithm::LsCe];
    cfg.snr_db = vec![20.0];
    cfg.seeds = vec![1, 2];
    cfg.vectors = 50;
    cfg
}

#[test]
fn per_tone_rows_cover_the_grid() {
    let cfg = per_tone_config();
    let rows = run_experiment(&cfg).unwrap();
    // 8 tones x 2 seeds x 3 algorithms x 2 metrics.
    assert_eq!(rows.len(), 96);
    assert!(rows.iter().all(|r| r.experiment == "per-tone" && r.tone.is_some()));
    assert!(rows.iter().all(|r| r.value.is_finite() && r.value >= 0.0));
    let metrics = |d: &str| {
        let mut m: Vec<&str> = rows.iter().filter(|r| r.detector == d).map(|r| r.metric.as_str()).collect();
        m.sort();
        m.dedup();
        m
    };
    assert_eq!(metrics("zf"), ["ber", "ser"]);
    assert_eq!(metrics("ls-ce"), ["cf", "nmse"]);
}

#[test]
fn output_is_byte_identical_across_runs() {
    let cfg = per_tone_config();
    let a = to_csv(&run_experiment(&cfg).unwrap()).unwrap();
    let b = to_csv(&run_experiment(&cfg).unwrap()).unwrap();
    assert_eq!(a, b);
    let back = parse_csv(&a, Path::new("per-tone.csv")).unwrap();
    assert_eq!(to_csv(&back).unwrap(), a);
}

#[test]
fn complexity_reports_exhaustive_search_size() {
    let mut cfg = ExperimentConfig::defaults(ExperimentKind::Complexity);
    cfg.tones = 2;
    cfg.vectors = 3;
    cfg.snr_db = vec![30.0];
    cfg.bandwidth_cases = vec![4096];
    let rows = run_experiment(&cfg).unwrap();
    let ml: Vec<_> = rows.iter().filter(|r| r.detector == "ml").collect();
    assert!(!ml.is_empty());
    assert!(ml.iter().all(|r| r.eval_count == 65536));
    let pct = rows
        .iter()
        .find(|r| r.detector == "dea" && r.metric == "complexity_pct")
        .unwrap();
    assert!(pct.value > 0.0 && pct.value < 100.0);
    // DE costs come in whole generations of the population.
    let dea = rows.iter().find(|r| r.detector == "dea" && r.metric == "evals_mean").unwrap();
    assert_eq!(dea.eval_count % cfg.mud_params.pop_size as u64, 0);
}

#[test]
fn csv_channel_matches_synthetic_source() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("chan.csv");
    let grid = ToneGrid::gfast(DESK_GRID_TONES);
    let chans = synthesize_channel(&grid, &CableModelParams::default(), 4).unwrap();
    write_channel_csv(&path, &chans).unwrap();

    let synth = per_tone_config();
    let mut from_file = per_tone_config();
    from_file.channel = ChannelSource::Csv(path);
    let a = run_experiment(&synth).unwrap();
    let b = run_experiment(&from_file).unwrap();
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        assert_eq!((x.tone, &x.detector, &x.metric), (y.tone, &y.detector, &y.metric));
        assert!((x.value - y.value).abs() <= 1e-9 * x.value.abs().max(1e-12), "{x:?} {y:?}");
    }
}

#[test]
fn invalid_configs_are_rejected_before_running() {
    let mut cfg = per_tone_config();
    cfg.tone_indices = Some(vec![DESK_GRID_TONES]);
    assert!(matches!(run_experiment(&cfg), Err(fext_turbo::Error::Config(_))));
    let mut cfg = per_tone_config();
    cfg.channel = ChannelSource::Csv("/nonexistent/chan.csv".into());
    assert!(matches!(run_experiment(&cfg), Err(fext_turbo::Error::Config(_))));
}
