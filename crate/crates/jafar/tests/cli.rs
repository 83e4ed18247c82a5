use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use jafar::archive::{read_archive, read_truth};
use jafar::csvio::read_dataset;

const SIM: &str = r#"
p = [20, 30]
n = 40
n_test = 25
k_true = 2
k_m_true = [2, 2]
supervised = true
response_active = 3
seed = 3
"#;

const MODEL: &str = r#"
supervised = true
prior_variant = "dcusp"

[rank_bounds]
k_max = 6
k_m_max = [4]

[mcmc]
t_mcmc = 300
t_burnin = 150
t_thin = 5
seed = 7
progress_every = 100
"#;

fn jafar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jafar")).args(args).env("RUST_LOG", "warn").output().expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = jafar(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn pipeline(root: &Path) {
    let sim_cfg = root.join("sim.toml");
    let model_cfg = root.join("model.toml");
    fs::write(&sim_cfg, SIM).unwrap();
    fs::write(&model_cfg, MODEL).unwrap();
    let sim = root.join("sim");
    let fit = root.join("fit");
    let aligned = root.join("aligned");
    ok(&["simulate", "--config", s(&sim_cfg), "--out", s(&sim)]);
    ok(&["fit", "--config", s(&model_cfg), "--data", s(&sim.join("train")), "--out", s(&fit), "--threads", "1"]);
    ok(&["align", "--archive", s(&fit), "--out", s(&aligned)]);
    ok(&["predict", "--archive", s(&fit), "--data", s(&sim.join("test")), "--out", s(&root.join("pred"))]);
    ok(&[
        "metrics",
        "--archive",
        s(&fit),
        "--truth",
        s(&sim.join("truth")),
        "--test",
        s(&sim.join("test")),
        "--out",
        s(&root.join("metrics")),
    ]);
}

#[test]
fn full_pipeline_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    pipeline(a.path());
    pipeline(b.path());

    let ma = fs::read(a.path().join("metrics/metrics.json")).unwrap();
    let mb = fs::read(b.path().join("metrics/metrics.json")).unwrap();
    assert_eq!(ma, mb);
    let report: serde_json::Value = serde_json::from_slice(&ma).unwrap();
    for key in ["specific", "shared_total", "shared_per_view", "shared_one_only"] {
        assert!(report["active"].get(key).is_some(), "missing {key}");
    }
    assert!(report["prediction"]["r2"].is_number());

    let pred = fs::read_to_string(a.path().join("pred/predictions.csv")).unwrap();
    assert_eq!(pred.lines().next().unwrap(), "id,mean,sd,lower,upper");
    assert_eq!(pred.lines().count(), 26);

    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(a.path().join("aligned/align_report.json")).unwrap()).unwrap();
    assert!(report["n_aligned"].as_u64().unwrap() > 0);
}

#[test]
fn archive_round_trip_preserves_states() {
    let dir = tempfile::tempdir().unwrap();
    pipeline(dir.path());
    let fit = dir.path().join("fit");
    let stored = read_archive(&fit).unwrap();
    assert_eq!(stored.archive.len(), 30);
    assert_eq!(stored.archive.ranks.len(), 300);

    // Refit in-process and compare with what was read back.
    let cfg: jafar_core::config::ModelConfig = toml::from_str(MODEL).unwrap();
    let data = read_dataset(&dir.path().join("sim/train"), b',').unwrap();
    let fresh = jafar_core::fit::fit(&cfg, &data, false).unwrap();
    assert_eq!(fresh.archive.states, stored.archive.states);
    assert_eq!(fresh.archive.events, stored.archive.events);
    assert_eq!(fresh.preprocessing, stored.preprocessing);

    let (_, truth) = read_truth(&dir.path().join("sim/truth")).unwrap();
    let sim: jafar_core::sim::SimConfig = toml::from_str(SIM).unwrap();
    let (_, _, expected) = jafar_core::sim::gen_dataset(&sim).unwrap();
    assert_eq!(truth, expected);
}

#[test]
fn missing_data_directory_exits_with_data_code() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere");
    let out = jafar(&["fit", "--data", s(&missing), "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere"));
}

#[test]
fn bad_config_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "[mcmc]\nt_mcmc = 10\nt_burnin = 20\n").unwrap();
    let data = dir.path().join("d");
    fs::create_dir_all(&data).unwrap();
    fs::write(data.join("a.csv"), "id,x\ns1,1\ns2,2\n").unwrap();
    let out = jafar(&["fit", "--config", s(&cfg), "--data", s(&data), "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    fs::write(&cfg, "no_such_key = 1\n").unwrap();
    let out = jafar(&["simulate", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn csv_missing_markers() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("a.csv"), "id,x,y\ns1,1,NA\ns2,,2\ns3,3,4\n").unwrap();
    fs::write(dir.path().join("response.csv"), "id,y\ns1,0.5\ns2,1\ns3,2\n").unwrap();
    let d = read_dataset(dir.path(), b',').unwrap();
    let v = &d.views[0];
    assert_eq!(v.get(0, 1), None);
    assert_eq!(v.get(1, 0), None);
    assert_eq!(v.get(2, 1), Some(4.0));
    assert_eq!(d.subject_ids, vec!["s1", "s2", "s3"]);
    assert_eq!(d.response.as_ref().unwrap()[2], 2.0);
    fs::write(dir.path().join("a.csv"), "id,x\ns1,1\ns2,oops\n").unwrap();
    assert!(matches!(read_dataset(dir.path(), b','), Err(jafar::Error::Parse { .. })));
}
