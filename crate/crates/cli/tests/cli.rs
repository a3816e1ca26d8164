//! End-to-end runs of the `zscore` binary.

use std::path::Path;
use std::process::{Command, Output};

fn zscore(workdir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zscore"))
        .arg("--workdir")
        .arg(workdir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn assert_ok(output: &Output, what: &str) -> String {
    let stdout = String::from_utf8_lossy(&output.stdout).to_string();
    assert!(
        output.status.success(),
        "{what} failed\nstdout: {stdout}\nstderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    stdout
}

fn write_small_run_config(dir: &Path) -> std::path::PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(
        &path,
        r#"
seed = 11
epoch = 1

[paths]
roster = "ground_truth.csv"
net_config = "net.json"

[cluster]
iterations = 12

[cohort.liquidation]
k_lower = 2
k_upper = 4
particles = 6

[cohort.non-liquidation]
k_lower = 3
k_upper = 6
particles = 8
"#,
    )
    .unwrap();
    path
}

fn write_small_net_config(workdir: &Path) {
    std::fs::write(
        workdir.join("net.json"),
        r#"{
  "hidden_dim": 16,
  "latent_dim": 8,
  "embedding_dim": 8,
  "head_width": 8,
  "max_epochs": 6,
  "batch_size": 128
}"#,
    )
    .unwrap();
}

#[test]
fn full_pipeline_through_query_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let workdir = tmp.path();
    let config = write_small_run_config(workdir);
    let config = config.to_str().unwrap();
    write_small_net_config(workdir);

    assert_ok(
        &zscore(workdir, &["gen", "--users", "150", "--seed", "11"]),
        "gen",
    );
    let ingest_out = assert_ok(
        &zscore(workdir, &["--config", config, "ingest"]),
        "ingest",
    );
    assert!(ingest_out.contains("0 rejected") || ingest_out.contains("(0 rejected)"));
    assert_ok(&zscore(workdir, &["--config", config, "features"]), "features");
    assert_ok(&zscore(workdir, &["--config", config, "cluster"]), "cluster");
    assert_ok(&zscore(workdir, &["--config", config, "label"]), "label");
    assert_ok(&zscore(workdir, &["--config", config, "train"]), "train");
    assert_ok(&zscore(workdir, &["--config", config, "score"]), "score");

    let attest_out = assert_ok(
        &zscore(workdir, &["--config", config, "attest", "--epoch", "1"]),
        "attest",
    );
    let root = attest_out.trim().rsplit(' ').next().unwrap().to_string();
    assert_eq!(root.len(), 64);

    let epoch_out = assert_ok(
        &zscore(workdir, &["--config", config, "epoch", "--epoch", "1"]),
        "epoch",
    );
    assert!(epoch_out.contains("published"), "{epoch_out}");

    // Query a scored wallet and confirm verification.
    let scores = std::fs::read_to_string(workdir.join("scores.jsonl")).unwrap();
    let first: serde_json::Value = serde_json::from_str(scores.lines().next().unwrap()).unwrap();
    let wallet = first["wallet"].as_str().unwrap();
    let query_out = assert_ok(
        &zscore(workdir, &["query", "--wallet", wallet, "--epoch", "1"]),
        "query",
    );
    let response: serde_json::Value = serde_json::from_str(&query_out).unwrap();
    assert_eq!(response["verified"], serde_json::Value::Bool(true));
    assert_eq!(response["root"].as_str().unwrap(), root);

    assert_ok(&zscore(workdir, &["report"]), "report");
    assert!(workdir.join("report/histogram_overall.csv").exists());
    assert!(workdir.join("report/histogram_overall.svg").exists());
    assert!(workdir.join("report/histogram_clusters.csv").exists());
    assert!(workdir.join("manifest.json").exists());
}

#[test]
fn failed_quorum_exits_one_and_blocks_queries() {
    let tmp = tempfile::tempdir().unwrap();
    let workdir = tmp.path();
    let config = write_small_run_config(workdir);
    let config = config.to_str().unwrap();
    write_small_net_config(workdir);
    std::fs::write(
        workdir.join("validators.toml"),
        r#"
[[validators]]
id = 0
behavior = "Honest"
sample_fraction = 0.5
seed = 1

[[validators]]
id = 1
behavior = "RejectAll"
sample_fraction = 0.5
seed = 2

[[validators]]
id = 2
behavior = "RejectAll"
sample_fraction = 0.5
seed = 3
"#,
    )
    .unwrap();

    for args in [
        vec!["gen", "--users", "100", "--seed", "11"],
        vec!["--config", config, "ingest"],
        vec!["--config", config, "features"],
        vec!["--config", config, "cluster"],
        vec!["--config", config, "label"],
        vec!["--config", config, "train"],
        vec!["--config", config, "score"],
        vec!["--config", config, "attest"],
    ] {
        assert_ok(&zscore(workdir, &args), args[0]);
    }

    let output = zscore(
        workdir,
        &["--config", config, "epoch", "--roster", "validators.toml"],
    );
    assert_eq!(output.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&output.stdout).contains("NOT published"));

    // Unpublished epoch: queries refuse with exit 1.
    let output = zscore(workdir, &["query", "--wallet", "0x000000", "--epoch", "1"]);
    assert_eq!(output.status.code(), Some(1));
}

#[test]
fn missing_artifacts_give_actionable_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let output = zscore(tmp.path(), &["features"]);
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("ingest"), "stderr: {stderr}");
}

#[test]
fn usage_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let output = zscore(tmp.path(), &["cluster", "--cohort", "nonsense"]);
    assert_eq!(output.status.code(), Some(2));
    let output = zscore(tmp.path(), &["no-such-command"]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn query_serve_mode_answers_line_requests() {
    use std::io::Write;
    use std::process::Stdio;

    let tmp = tempfile::tempdir().unwrap();
    let workdir = tmp.path();
    let config = write_small_run_config(workdir);
    let config = config.to_str().unwrap();
    write_small_net_config(workdir);

    for args in [
        vec!["gen", "--users", "120", "--seed", "11"],
        vec!["--config", config, "ingest"],
        vec!["--config", config, "features"],
        vec!["--config", config, "cluster"],
        vec!["--config", config, "label"],
        vec!["--config", config, "train"],
        vec!["--config", config, "score"],
        vec!["--config", config, "attest"],
        vec!["--config", config, "epoch"],
    ] {
        assert_ok(&zscore(workdir, &args), args[0]);
    }

    let scores = std::fs::read_to_string(workdir.join("scores.jsonl")).unwrap();
    let first: serde_json::Value = serde_json::from_str(scores.lines().next().unwrap()).unwrap();
    let wallet = first["wallet"].as_str().unwrap();

    let mut child = Command::new(env!("CARGO_BIN_EXE_zscore"))
        .arg("--workdir")
        .arg(workdir)
        .args(["query", "--serve", "--epoch", "1"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    {
        let stdin = child.stdin.as_mut().unwrap();
        writeln!(stdin, r#"{{"wallet":"{wallet}","epoch":1}}"#).unwrap();
        writeln!(stdin, r#"{{"wallet":"0xmissing","epoch":1}}"#).unwrap();
    }
    let output = child.wait_with_output().unwrap();
    let stdout = String::from_utf8_lossy(&output.stdout);
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.len(), 2, "{stdout}");
    let good: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
    assert_eq!(good["verified"], serde_json::Value::Bool(true));
    let bad: serde_json::Value = serde_json::from_str(lines[1]).unwrap();
    assert!(bad["error"].as_str().unwrap().contains("not found"));
}
