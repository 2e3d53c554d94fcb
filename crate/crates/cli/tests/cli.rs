use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use s2l_core::traj::{default_checkpoint_steps, write_features};
use s2l_core::{load_trajectories, write_trajectories, FeatureMatrix, TrajFormat, TrajectoryStore};
use tempfile::TempDir;

fn s2l(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_s2l")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Three sources, two loss shapes, 60 rows.
fn small_store(dir: &Path) -> PathBuf {
    let mut ids = Vec::new();
    let mut sources = Vec::new();
    let mut rows = Vec::new();
    for i in 0..60 {
        ids.push(format!("ex{i}"));
        sources.push(format!("s{}", i % 3));
        let wobble = (i as f32) * 0.01;
        rows.push(if i % 4 == 0 {
            vec![1.0 + wobble, 2.0, 3.0, 4.0]
        } else {
            vec![4.0 - wobble, 3.0, 2.0, 1.0]
        });
    }
    let store = TrajectoryStore::new(ids, sources, rows, default_checkpoint_steps(4)).unwrap();
    let path = dir.join("t.bin");
    write_trajectories(&store, &path, TrajFormat::Binary).unwrap();
    path
}

#[test]
fn help_lists_every_flag() {
    let top = s2l(&["--help"]);
    assert_eq!(code(&top), 0);
    let text = String::from_utf8(top.stdout).unwrap();
    for name in [
        "synth",
        "cluster",
        "select",
        "baseline",
        "report",
        "convert",
        "--seed",
        "--workers",
    ] {
        assert!(text.contains(name), "{name} missing from --help");
    }
    let sel = String::from_utf8(s2l(&["select", "--help"]).stdout).unwrap();
    for flag in [
        "--traj",
        "--format",
        "--budget",
        "--k",
        "--iters",
        "--per-source",
        "--normalize",
        "--no-topup",
        "--config",
        "--out",
        "--seed",
        "--workers",
    ] {
        assert!(sel.contains(flag), "{flag} missing from select --help");
    }
    let base = String::from_utf8(s2l(&["baseline", "--help"]).stdout).unwrap();
    for flag in [
        "--method",
        "--features",
        "--early-index",
        "--late-index",
        "facility-location",
    ] {
        assert!(base.contains(flag), "{flag} missing from baseline --help");
    }
}

#[test]
fn usage_errors_exit_one() {
    let dir = TempDir::new().unwrap();
    let traj = small_store(dir.path());
    let out = dir.path().join("m.jsonl");

    let unknown = s2l(&[
        "select",
        "--traj",
        p(&traj),
        "--budget",
        "3",
        "--out",
        p(&out),
        "--frobnicate",
    ]);
    assert_eq!(code(&unknown), 1);
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("Usage"));

    let fl = s2l(&[
        "baseline",
        "--method",
        "facility-location",
        "--traj",
        p(&traj),
        "--budget",
        "3",
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&fl), 1);
    assert!(String::from_utf8_lossy(&fl.stderr).contains("--features"));

    let no_budget = s2l(&["select", "--traj", p(&traj), "--out", p(&out)]);
    assert_eq!(code(&no_budget), 1);

    let bad_ext = dir.path().join("t.dat");
    fs::copy(&traj, &bad_ext).unwrap();
    assert_eq!(code(&s2l(&["convert", "--traj", p(&bad_ext), "--out", p(&out)])), 1);
    assert!(!out.exists());
}

#[test]
fn data_errors_exit_two() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("m.jsonl");
    let broken = dir.path().join("bad.bin");
    fs::write(&broken, b"S2LTjunk").unwrap();
    assert_eq!(
        code(&s2l(&[
            "select",
            "--traj",
            p(&broken),
            "--budget",
            "3",
            "--out",
            p(&out)
        ])),
        2
    );

    let missing = dir.path().join("absent.jsonl");
    assert_eq!(
        code(&s2l(&[
            "select",
            "--traj",
            p(&missing),
            "--budget",
            "3",
            "--out",
            p(&out)
        ])),
        2
    );

    let ragged = dir.path().join("ragged.jsonl");
    fs::write(
        &ragged,
        "{\"id\":\"a\",\"source\":\"x\",\"losses\":[1,2]}\n{\"id\":\"b\",\"source\":\"x\",\"losses\":[1]}\n",
    )
    .unwrap();
    assert_eq!(
        code(&s2l(&[
            "convert",
            "--traj",
            p(&ragged),
            "--out",
            p(&out.with_extension("bin"))
        ])),
        2
    );
}

#[test]
fn convert_roundtrip_is_bit_identical() {
    let dir = TempDir::new().unwrap();
    let traj = small_store(dir.path());
    let jsonl = dir.path().join("t.jsonl");
    let back = dir.path().join("back.bin");
    let a = s2l(&["convert", "--traj", p(&traj), "--out", p(&jsonl)]);
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stderr));
    assert!(String::from_utf8_lossy(&a.stdout).contains("config_digest="));
    assert_eq!(code(&s2l(&["convert", "--traj", p(&jsonl), "--out", p(&back)])), 0);
    assert_eq!(fs::read(&traj).unwrap(), fs::read(&back).unwrap());
    let original = load_trajectories(&traj, TrajFormat::Binary).unwrap();
    let via_json = load_trajectories(&jsonl, TrajFormat::Jsonl).unwrap();
    assert_eq!(original, via_json);
}

#[test]
fn select_budget_beyond_n_returns_everything() {
    let dir = TempDir::new().unwrap();
    let traj = small_store(dir.path());
    let out = dir.path().join("m.jsonl");
    let run = s2l(&[
        "select",
        "--traj",
        p(&traj),
        "--budget",
        "1000",
        "--k",
        "4",
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 1 + 60);
}

#[test]
fn select_is_reproducible_and_worker_independent() {
    let dir = TempDir::new().unwrap();
    let traj = small_store(dir.path());
    let mut outputs = Vec::new();
    for (i, workers) in ["1", "8", "8"].iter().enumerate() {
        let out = dir.path().join(format!("m{i}.jsonl"));
        let run = s2l(&[
            "select",
            "--traj",
            p(&traj),
            "--budget",
            "17",
            "--k",
            "5",
            "--per-source",
            "--seed",
            "7",
            "--workers",
            workers,
            "--out",
            p(&out),
        ]);
        assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
        outputs.push(fs::read(&out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[1], outputs[2]);
    let text = String::from_utf8(outputs.remove(0)).unwrap();
    assert_eq!(text.lines().count(), 1 + 17);
    assert!(text.lines().next().unwrap().contains("\"seed\":7"));
}

#[test]
fn config_file_fills_in_and_flags_win() {
    let dir = TempDir::new().unwrap();
    let traj = small_store(dir.path());
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"budget": 9, "k": 3, "seed": 11}"#).unwrap();

    let from_cfg = dir.path().join("a.jsonl");
    assert_eq!(
        code(&s2l(&[
            "select",
            "--traj",
            p(&traj),
            "--config",
            p(&cfg),
            "--out",
            p(&from_cfg)
        ])),
        0
    );
    let header = fs::read_to_string(&from_cfg).unwrap();
    let header = header.lines().next().unwrap();
    assert!(header.contains("\"budget\":9") && header.contains("\"k\":3") && header.contains("\"seed\":11"));

    let overridden = dir.path().join("b.jsonl");
    let run = s2l(&[
        "select",
        "--traj",
        p(&traj),
        "--config",
        p(&cfg),
        "--budget",
        "5",
        "--seed",
        "0",
        "--out",
        p(&overridden),
    ]);
    assert_eq!(code(&run), 0);
    let text = fs::read_to_string(&overridden).unwrap();
    let header = text.lines().next().unwrap();
    assert!(header.contains("\"budget\":5") && header.contains("\"seed\":0"));
    assert_eq!(text.lines().count(), 1 + 5);

    fs::write(&cfg, r#"{"budget": 9, "colour": "red"}"#).unwrap();
    assert_eq!(
        code(&s2l(&[
            "select",
            "--traj",
            p(&traj),
            "--config",
            p(&cfg),
            "--out",
            p(&overridden)
        ])),
        2
    );
}

#[test]
fn baselines_write_comparable_manifests() {
    let dir = TempDir::new().unwrap();
    let traj = small_store(dir.path());
    for method in ["random", "least-confidence", "middle-perplexity", "high-learnability"] {
        let out = dir.path().join(format!("{method}.jsonl"));
        let run = s2l(&[
            "baseline",
            "--method",
            method,
            "--traj",
            p(&traj),
            "--budget",
            "6",
            "--out",
            p(&out),
        ]);
        assert_eq!(code(&run), 0, "{method}: {}", String::from_utf8_lossy(&run.stderr));
        let text = fs::read_to_string(&out).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().contains(&format!("\"tool\":\"{method}\"")));
        assert_eq!(lines.count(), 6);
    }

    // rising rows (every fourth) end at loss 4.0; equal scores go by id
    let lc = fs::read_to_string(dir.path().join("least-confidence.jsonl")).unwrap();
    let picked: Vec<&str> = lc.lines().skip(1).map(|l| l.split('"').nth(3).unwrap()).collect();
    assert_eq!(picked, ["ex0", "ex12", "ex16", "ex20", "ex24", "ex28"]);
}

#[test]
fn facility_location_from_features() {
    let dir = TempDir::new().unwrap();
    let traj = small_store(dir.path());
    let feats = dir.path().join("f.bin");
    let ids: Vec<String> = (0..60).map(|i| format!("ex{i}")).collect();
    let values: Vec<f32> = (0..60)
        .flat_map(|i| [((i % 3) as f32), 1.0, ((i % 5) as f32) * 0.1])
        .collect();
    write_features(&FeatureMatrix::from_flat(ids, values, 3).unwrap(), &feats).unwrap();

    let out = dir.path().join("fl.jsonl");
    let run = s2l(&[
        "baseline",
        "--method",
        "facility-location",
        "--features",
        p(&feats),
        "--traj",
        p(&traj),
        "--budget",
        "4",
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 1 + 4);
    assert!(text.lines().nth(1).unwrap().contains("\"source\":\"s"));

    let wrong = s2l(&[
        "baseline",
        "--method",
        "random",
        "--features",
        p(&feats),
        "--traj",
        p(&traj),
        "--budget",
        "4",
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&wrong), 1);
}

#[test]
fn synth_cluster_report_chain() {
    let dir = TempDir::new().unwrap();
    let templates = dir.path().join("templates.json");
    fs::write(
        &templates,
        r#"[{"name":"big","shape":"decreasing","count":90,"noise_sigma":0.01},
            {"name":"a","shape":"increasing","count":5,"noise_sigma":0.01},
            {"name":"b","shape":"flat","count":5,"noise_sigma":0.01}]"#,
    )
    .unwrap();
    let traj = dir.path().join("s.jsonl");
    let labels = dir.path().join("labels.json");
    let model = dir.path().join("model.json");
    let manifest = dir.path().join("sel.jsonl");
    let report = dir.path().join("report.json");

    let run = s2l(&[
        "synth",
        "--templates",
        p(&templates),
        "-t",
        "6",
        "--out",
        p(&traj),
        "--labels-out",
        p(&labels),
        "--seed",
        "2",
    ]);
    assert_eq!(code(&run), 0, "{}", String::from_utf8_lossy(&run.stderr));
    let label_list: Vec<usize> = serde_json::from_str(&fs::read_to_string(&labels).unwrap()).unwrap();
    assert_eq!(label_list.len(), 100);

    assert_eq!(
        code(&s2l(&["cluster", "--traj", p(&traj), "--k", "3", "--out", p(&model)])),
        0
    );
    assert_eq!(
        code(&s2l(&[
            "select",
            "--traj",
            p(&traj),
            "--budget",
            "15",
            "--k",
            "3",
            "--out",
            p(&manifest)
        ])),
        0
    );

    let text_run = s2l(&["report", "--model", p(&model)]);
    assert_eq!(code(&text_run), 0);
    assert!(String::from_utf8_lossy(&text_run.stdout).contains("config_digest="));

    let sel = s2l(&[
        "report",
        "--model",
        p(&model),
        "--traj",
        p(&traj),
        "--manifest",
        p(&manifest),
        "--json",
        "--out",
        p(&report),
    ]);
    assert_eq!(code(&sel), 0, "{}", String::from_utf8_lossy(&sel.stderr));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert!(json["cluster_entropy_delta"].as_f64().unwrap() > 0.0);
    assert_eq!(json["uncovered_clusters"].as_array().unwrap().len(), 0);

    let missing_traj = s2l(&["report", "--model", p(&model), "--manifest", p(&manifest)]);
    assert_eq!(code(&missing_traj), 1);
}
