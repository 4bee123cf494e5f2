use roughavg::experiment::{run_convergence_study, ExperimentConfig, Scenario};
use roughavg::fbm::sample_fbm;
use roughavg::io::{load_path_binary, save_path_binary, save_path_csv, PathMeta};
use roughavg::rng::RngSeed;
use roughavg::HurstIndex;

#[test]
fn binary_and_csv_files() {
    let dir = tempfile::tempdir().unwrap();
    let x = sample_fbm(HurstIndex::new(0.4).unwrap(), 2, 0.5, 0.01, 100, RngSeed::new(5)).unwrap();
    let meta = PathMeta { hurst: Some(0.4), seed: 5 };
    save_path_binary(&x, meta, dir.path().join("x.bin")).unwrap();
    let (y, back) = load_path_binary(dir.path().join("x.bin")).unwrap();
    assert_eq!(back, meta);
    assert_eq!(y, x);

    save_path_csv(&x, dir.path().join("x.csv")).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("x.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,x_1,x_2"));
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|c| c.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 101);
    for (i, r) in rows.iter().enumerate() {
        assert!((r[0] - x.time(i)).abs() < 1e-12);
        assert_eq!(&r[1..], x.node(i));
    }
}

#[test]
fn truncated_binary_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let x = sample_fbm(HurstIndex::brownian(), 1, 0.0, 0.1, 10, RngSeed::new(1)).unwrap();
    let file = dir.path().join("x.bin");
    save_path_binary(&x, PathMeta { hurst: None, seed: 1 }, &file).unwrap();
    let bytes = std::fs::read(&file).unwrap();
    std::fs::write(&file, &bytes[..bytes.len() - 3]).unwrap();
    assert!(load_path_binary(&file).is_err());
}

#[test]
fn study_writes_all_tables() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::for_scenario(Scenario::Degenerate);
    cfg.study.eps = vec![0.5, 0.25];
    cfg.study.delta = vec![0.25];
    cfg.study.seeds = 2;
    cfg.grid.fast_resolution = 0.0625;
    let res = run_convergence_study(&cfg).unwrap();
    res.write(dir.path()).unwrap();
    for (name, rows) in [("study.csv", 4), ("aux.csv", 4), ("diagnostics.csv", 4), ("summary.csv", 2)] {
        let text = std::fs::read_to_string(dir.path().join(name)).unwrap();
        assert_eq!(text.lines().count(), 1 + rows, "{name}");
    }
}
