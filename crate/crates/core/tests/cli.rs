use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use recf::harness::ExperimentConfig;

fn recf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_recf"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load(name: &str) -> ExperimentConfig {
    let text = std::fs::read_to_string(configs_dir().join(name)).unwrap();
    ExperimentConfig::from_json(&text).unwrap()
}

fn write_config(dir: &Path, cfg: &ExperimentConfig) -> String {
    let path = dir.join("cfg.json");
    std::fs::write(&path, cfg.to_json()).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn unknown_subcommand_is_usage_error() {
    assert_eq!(recf(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(recf(&[]).status.code(), Some(2));
    assert_eq!(recf(&["identify"]).status.code(), Some(2));
    assert_eq!(recf(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_config_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere.json");
    let out = recf(&[
        "identify",
        "--config",
        missing.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("nowhere.json"), "{stderr}");
}

#[test]
fn invalid_config_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"scenario": {}, "filters": []}"#).unwrap();
    let out = recf(&[
        "identify",
        "--config",
        path.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));

    let mut cfg = load("system2.json");
    cfg.filters[0].mu = -1.0;
    let p = write_config(dir.path(), &cfg);
    let out = recf(&[
        "identify",
        "--config",
        &p,
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn theory_dimension_cap_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = load("theory_small.json");
    // augmented walk with d = 20 gives L = 40 > 32
    if let recf::scenarios::PlantSpec::RandomWalk { d, .. } = &mut cfg.scenario.plant {
        *d = 20;
    }
    cfg.run.runs = 1;
    cfg.run.samples = 10;
    let p = write_config(dir.path(), &cfg);
    let out = recf(&[
        "theory",
        "--quiet",
        "--config",
        &p,
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(4),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn divergence_limit_exits_5() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = load("system2.json");
    cfg.filters.truncate(1);
    cfg.filters[0].mu = 50.0;
    cfg.run.runs = 4;
    cfg.run.samples = 2000;
    let p = write_config(dir.path(), &cfg);
    let out = recf(&[
        "identify",
        "--quiet",
        "--config",
        &p,
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(5),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn curves_csv_parses_back() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = load("system1_noncircular.json");
    cfg.run.runs = 2;
    cfg.run.samples = 1000;
    let p = write_config(dir.path(), &cfg);
    let out = recf(&[
        "identify",
        "--quiet",
        "--config",
        &p,
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(dir.path().join("curves.csv"))
        .unwrap();
    let header = reader.headers().unwrap().clone();
    assert_eq!(
        header.iter().collect::<Vec<_>>(),
        ["iteration", "filter", "mse_db", "emse_db", "msd_db"]
    );
    let mut rows = 0;
    for rec in reader.records() {
        let rec = rec.unwrap();
        assert_eq!(rec.len(), 5);
        rec[0].parse::<usize>().unwrap();
        rec[2].parse::<f64>().unwrap();
        rec[3].parse::<f64>().unwrap();
        // fixed plant: MSD undefined, column present but empty
        assert!(rec[4].is_empty());
        rows += 1;
    }
    assert_eq!(rows, 3 * 1000);

    let sidecar: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("curves.json")).unwrap())
            .unwrap();
    assert_eq!(sidecar["run_seeds"].as_array().unwrap().len(), 2);
}

#[test]
fn msd_column_filled_under_random_walk() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = load("theory_small.json");
    cfg.run.runs = 2;
    cfg.run.samples = 50;
    let p = write_config(dir.path(), &cfg);
    let out = recf(&[
        "identify",
        "--quiet",
        "--config",
        &p,
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let mut reader = csv::Reader::from_path(dir.path().join("curves.csv")).unwrap();
    let mut rows = 0;
    for rec in reader.records() {
        let rec = rec.unwrap();
        assert_eq!(rec.len(), 5);
        rec[4].parse::<f64>().unwrap();
        rows += 1;
    }
    assert_eq!(rows, 3 * 50);
}

#[test]
fn seed_override_changes_output() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = load("system2.json");
    cfg.run.runs = 2;
    cfg.run.samples = 200;
    let p = write_config(dir.path(), &cfg);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for (out, seed) in [(&a, "10"), (&b, "11")] {
        let o = recf(&[
            "identify",
            "--quiet",
            "--seed",
            seed,
            "--config",
            &p,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0));
    }
    let ca = std::fs::read(a.join("curves.csv")).unwrap();
    let cb = std::fs::read(b.join("curves.csv")).unwrap();
    assert_ne!(ca, cb);
}

#[test]
fn sweep_and_bench_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = load("sweep_mu.json");
    cfg.run.runs = 2;
    cfg.run.samples = 500;
    cfg.sweep.as_mut().unwrap().points = 3;
    cfg.theory.as_mut().unwrap().moment_samples = 5000;
    let p = write_config(dir.path(), &cfg);
    let out = recf(&[
        "sweep",
        "--quiet",
        "--config",
        &p,
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let mut reader = csv::Reader::from_path(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(reader.headers().unwrap().len(), 4);
    assert_eq!(reader.records().count(), 3);

    let mut cfg = load("bench.json");
    cfg.run.samples = 100;
    for f in &mut cfg.filters {
        if let Some(fs) = &mut f.features {
            fs.d = 16;
        }
    }
    let p = write_config(dir.path(), &cfg);
    let out = recf(&[
        "bench",
        "--quiet",
        "--config",
        &p,
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let reader = csv::Reader::from_path(dir.path().join("bench.csv")).unwrap();
    assert_eq!(reader.into_records().count(), cfg.filters.len());
}
