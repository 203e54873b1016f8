use doacal_core::estimators::{ids, EstimatorRegistry};
use doacal_core::harness::{
    run_experiment, write_detail_file, write_summary_file, Experiment, ExperimentConfig,
    DETAIL_HEADER, SUMMARY_HEADER,
};

#[test]
fn small_sweep_writes_both_files() {
    let registry = EstimatorRegistry::with_builtins();
    let mut config = ExperimentConfig::defaults(Experiment::MutualCoupling);
    config.snr_list_db = vec![0.0, 15.0];
    config.trials = 3;
    config.algorithms = vec![ids::SOMP.into(), ids::MUSIC.into()];
    config.music_scan_step_deg = 0.1;
    let out = run_experiment(&config, &registry, 2).unwrap();

    let dir = std::env::temp_dir().join(format!("doacal-harness-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let detail = dir.join("d.csv");
    let summary = dir.join("s.csv");
    write_detail_file(&detail, &out.rows).unwrap();
    write_summary_file(&summary, &out.summary).unwrap();
    let detail = std::fs::read_to_string(detail).unwrap();
    let summary = std::fs::read_to_string(summary).unwrap();
    std::fs::remove_dir_all(&dir).unwrap();

    let lines: Vec<&str> = detail.lines().collect();
    assert_eq!(lines[0], DETAIL_HEADER);
    assert_eq!(lines.len(), 1 + 2 * 2 * 3);
    assert!(lines[1].starts_with("mutual,somp,0.0,0,"));
    assert!(lines[12].starts_with("mutual,music,15.0,2,"));

    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines, [SUMMARY_HEADER, lines[1], lines[2], lines[3], lines[4]]);
    assert!(lines[1..].iter().all(|l| l.ends_with(",3")));
    assert!(!detail.contains('\r') && !summary.contains('\r'));
}
