use wmg::optimizer::OptimizerConfig;
use wmg::surveillance::{build_grid, run_surveillance_study, write_study, GridSpec, StudyMode};

fn grid_from_config(name: &str) -> GridSpec {
    let path = format!("{}/../../configs/{name}", env!("CARGO_MANIFEST_DIR"));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    GridSpec::from_json(&v["grid"].to_string()).unwrap()
}

#[test]
fn configs_match_presets() {
    assert_eq!(grid_from_config("grid4x4.json"), GridSpec::grid4x4());
    assert_eq!(grid_from_config("grid8x8.json"), GridSpec::grid8x8());
}

#[test]
fn grid_moves_are_neighbours() {
    let inst = build_grid(&GridSpec::grid8x8()).unwrap();
    for &(i, j) in inst.graph.edges() {
        let (a, b) = (inst.cells[i], inst.cells[j]);
        assert_eq!(a.0.abs_diff(b.0) + a.1.abs_diff(b.1), 1);
    }
}

#[test]
fn short_study_writes_its_files() {
    let cfg = OptimizerConfig { iterations: 100, ..OptimizerConfig::default() };
    let result = run_surveillance_study(&GridSpec::grid4x4(), &cfg, &[StudyMode::MaxSurprise]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let written = write_study(&result, dir.path()).unwrap();
    let names: Vec<String> = written.iter().map(|p| p.file_name().unwrap().to_string_lossy().into_owned()).collect();
    assert_eq!(names, ["study_summary.csv", "policy_baseline.json", "policy_max-surprise.json", "trace_max-surprise.csv"]);
    let summary = std::fs::read_to_string(dir.path().join("study_summary.csv")).unwrap();
    assert!(summary.starts_with("policy,K_W,sqrtV_W,S,gain\n"), "{summary}");
    assert!(result.get(StudyMode::MaxSurprise).unwrap().gain.unwrap() >= 0.0);
}
