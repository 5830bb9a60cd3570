use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use acp_core::episode::{Episode, EpisodeMeta, PoseSample, Wrench};
use acp_core::labeling::read_labels;
use acp_core::se3::{encode_pose9, Pose};
use nalgebra::Vector3;
use serde_json::Value;

fn acp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_acp"))
        .args(args)
        .env_remove("ACP_CONFIG")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn episode(seconds: f64, force: Vector3<f64>) -> Episode {
    let poses = (0..=(seconds * 500.0) as usize)
        .map(|i| {
            let t = i as f64 / 500.0;
            PoseSample {
                t,
                pose: encode_pose9(&Pose::from_translation(Vector3::new(0.3, 0.0, 0.2 + 0.01 * t))),
            }
        })
        .collect();
    let wrenches = (0..=(seconds * 1000.0) as usize)
        .map(|i| Wrench::from_force(i as f64 / 1000.0, force))
        .collect();
    Episode::new(EpisodeMeta::default(), poses, wrenches).unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("acp.toml");
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn label_without_contact_reports_zero_percent() {
    let dir = tempfile::tempdir().unwrap();
    let ep = dir.path().join("free.txt");
    episode(2.0, Vector3::zeros()).write(&ep).unwrap();
    let out_path = dir.path().join("free.labels");
    let o = acp(&["label", ep.to_str().unwrap(), "--out", out_path.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let s = stdout(&o);
    assert!(s.starts_with("# acp "), "{s}");
    assert!(s.contains("config sha256 "));
    assert!(s.contains("contact steps: 0 (0.0%)"), "{s}");
    let labels = read_labels(&fs::read_to_string(&out_path).unwrap()).unwrap();
    assert_eq!(labels.len(), 21);
}

#[test]
fn constant_force_histogram_sits_at_k_min() {
    let dir = tempfile::tempdir().unwrap();
    let ep = dir.path().join("push.acpe");
    episode(2.0, Vector3::new(0.0, 0.0, -12.0)).write(&ep).unwrap();
    let o = acp(&["label", ep.to_str().unwrap(), "--format", "records"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let lines: Vec<Value> = stdout(&o).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines[0]["type"], "provenance");
    let summary = &lines[1]["summary"];
    assert_eq!(summary["contact_percent"], 100.0);
    let hist = summary["k_low_histogram"].as_array().unwrap();
    assert_eq!(hist[0]["count"], summary["steps"]);
    assert!(dir.path().join("push.labels").is_file());
}

#[test]
fn truncated_episode_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let ep = dir.path().join("cut.acpe");
    let bytes = episode(1.0, Vector3::zeros()).to_binary();
    fs::write(&ep, &bytes[..bytes.len() - 20]).unwrap();
    let o = acp(&["label", ep.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("record"), "{}", stderr(&o));

    let txt = dir.path().join("cut.txt");
    let text = episode(1.0, Vector3::zeros()).to_text();
    fs::write(&txt, &text[..text.len() - 30]).unwrap();
    let o = acp(&["label", txt.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line"), "{}", stderr(&o));
}

fn contact_file(dir: &Path, name: &str, jacobian: &str, lambda: &str) -> String {
    let p = dir.join(name);
    fs::write(
        &p,
        format!("format = \"acp-contact-model\"\nversion = 1\njacobian = {jacobian}\nlambda = {lambda}\n"),
    )
    .unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn analyze_contact_verdicts_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let pinch = contact_file(dir.path(), "pinch.toml", "[[1.0, 0.0], [-1.0, 0.0]]", "[1.0, 1.0]");
    let o = acp(&["analyze-contact", &pinch]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("pinching: true"));

    let wall = contact_file(dir.path(), "wall.toml", "[[0.0, 1.0]]", "[2.0]");
    let o = acp(&["analyze-contact", &wall, "--v0", "0.5,-1.0"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let s = stdout(&o);
    assert!(s.contains("pinching: false"));
    assert!(s.contains("escape k: 0.500000000"), "{s}");
    assert!(s.contains("escape v: [0.500000, 0.000000]"), "{s}");

    let zero = contact_file(dir.path(), "zero.toml", "[[0.0, 1.0], [1.0, 0.0]]", "[1.0, 0.0]");
    let o = acp(&["analyze-contact", &zero]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("contact 1"));

    let bad = dir.path().join("bad.toml");
    fs::write(
        &bad,
        "format = \"acp-contact-model\"\nversion = 1\njacobian = [[2.0]]\nlambda = [1.0]\n",
    )
    .unwrap();
    assert_eq!(acp(&["analyze-contact", bad.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn spectrogram_file_is_self_describing() {
    let dir = tempfile::tempdir().unwrap();
    let ep = dir.path().join("e.acpe");
    episode(2.0, Vector3::new(1.0, 2.0, 3.0)).write(&ep).unwrap();
    let out = dir.path().join("s.json");
    let o = acp(&[
        "spectrogram",
        ep.to_str().unwrap(),
        "--t",
        "1.5",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("6x30x17"));
    let doc: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(doc["format"], "acp-spectrogram");
    assert_eq!(doc["shape"], serde_json::json!([6, 30, 17]));
    assert_eq!(doc["axes"][2]["spacing"], 15.5);
    assert_eq!(doc["data"].as_array().unwrap().len(), 6);
    assert_eq!(doc["data"][0][0].as_array().unwrap().len(), 17);
    // Too early: the window would start before the recording.
    let o = acp(&["spectrogram", ep.to_str().unwrap(), "--t", "0.5"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn compare_is_deterministic_and_single_trial_is_extreme() {
    let dir = tempfile::tempdir().unwrap();
    let sc = acp_core::sim::FlipScenario::nominal().without_noise();
    fs::write(
        dir.path().join("quiet.toml"),
        acp_cli::config::scenario_file_text(&sc).unwrap(),
    )
    .unwrap();
    let cfg = write_config(
        dir.path(),
        "scenarios = [\"quiet.toml\"]\ntrials = 1\n[[policies]]\nkind = \"stiff\"\nk_high = 2000.0\n",
    );
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = acp(&[
            "--config",
            &cfg,
            "--seed",
            "4",
            "compare-policies",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        fs::read(&out).unwrap()
    };
    let a = run("a.txt");
    assert_eq!(a, run("b.txt"));
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("ACP-BENCHMARK 1\n# acp "));
    assert!(text.contains("# seed 4"));
    let rows: Vec<&str> = text
        .lines()
        .filter(|l| l.starts_with("stiff ") && l.ends_with('%'))
        .collect();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].ends_with("100.0%") || rows[0].ends_with("0.0%"), "{}", rows[0]);
    assert!(dir.path().join("a.trials.jsonl").is_file());
}

#[test]
fn config_from_environment_and_bad_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "trials = 1\nscenarios = [\"builtin:nominal\"]\n");
    let o = Command::new(env!("CARGO_BIN_EXE_acp"))
        .args(["simulate", "--policy", "adaptive", "--format", "records"])
        .env("ACP_CONFIG", &cfg)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let lines: Vec<Value> = stdout(&o).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[1]["policy"], "adaptive");

    let bad = write_config(dir.path(), "units = \"imperial\"\n");
    assert_eq!(acp(&["--config", &bad, "compare-policies"]).status.code(), Some(2));
    let missing = write_config(dir.path(), "scenarios = [\"absent.toml\"]\n");
    assert_eq!(acp(&["--config", &missing, "compare-policies"]).status.code(), Some(2));
}

#[test]
fn simulated_trajectories_can_be_labeled() {
    let dir = tempfile::tempdir().unwrap();
    let dump = dir.path().join("dump");
    let o = acp(&[
        "simulate",
        "--scenario",
        "builtin:nominal",
        "--policy",
        "adaptive",
        "--trials",
        "2",
        "--dump",
        dump.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("adaptive"));
    let ep = dump.join("nominal_adaptive_0001.acpe");
    let o = acp(&["label", ep.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let pct: f64 = stdout(&o)
        .lines()
        .find_map(|l| l.strip_prefix("contact steps: "))
        .and_then(|r| r.split('(').nth(1))
        .and_then(|r| r.trim_end_matches("%)").parse().ok())
        .unwrap();
    assert!(pct > 20.0, "{pct}");
}
