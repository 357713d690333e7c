use std::path::Path;
use std::process::{Command, Output};

use gridbench::harness::read_records;

fn gridbench(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gridbench"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env_remove("GRIDBENCH_ENDPOINT_URL")
        .env_remove("GRIDBENCH_MODEL")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn generate_validate_run_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    let g = gridbench(
        out,
        &["generate", "--domains", "course,meal", "--h", "1,3", "--b", "0,4"],
    );
    assert_eq!(code(&g), 0, "{}", stderr(&g));
    assert!(out.join("manifest.json").exists());

    let v = gridbench(out, &["validate"]);
    assert_eq!(code(&v), 0, "{}", stderr(&v));
    assert!(String::from_utf8_lossy(&v.stdout).contains("8 of 8"));

    let records = out.join("oracle.jsonl");
    let r = gridbench(
        out,
        &[
            "run",
            "--agent",
            "oracle",
            "--b",
            "0",
            "--records",
            records.to_str().unwrap(),
            "--transcripts",
        ],
    );
    assert_eq!(code(&r), 0, "{}", stderr(&r));
    let recs = read_records(&records).unwrap();
    assert_eq!(recs.len(), 4);
    assert!(recs.iter().all(|r| r.reward == 1 && r.transcript_path.is_some()));

    let rep = gridbench(out, &["report", records.to_str().unwrap()]);
    assert_eq!(code(&rep), 0, "{}", stderr(&rep));
    for f in ["by_domain.csv", "heatmap_h_b.csv", "summary.csv"] {
        assert!(out.join("report").join(f).exists(), "{f}");
    }
    let by_domain = std::fs::read_to_string(out.join("report/by_domain.csv")).unwrap();
    assert!(by_domain.ends_with("avg,4,100.0\n"), "{by_domain}");
}

#[test]
fn broken_instances_fail_validation() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    assert_eq!(
        code(&gridbench(
            out,
            &["generate", "--domains", "travel", "--h", "3", "--b", "4"]
        )),
        0
    );
    let key = out.join("instances/travel/travel_h3_b4.key.json");
    std::fs::remove_file(&key).unwrap();
    let v = gridbench(out, &["validate"]);
    assert_eq!(code(&v), 1);
    assert!(stderr(&v).contains("travel_h3_b4.key.json"));
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    assert_eq!(code(&gridbench(&out.join("missing"), &["validate"])), 2);
    assert_eq!(code(&gridbench(out, &["run"])), 2);
    assert_eq!(
        code(&gridbench(out, &["generate", "--h", "1", "--b", "0", "--k", "1"])),
        2
    );
    assert_eq!(
        code(&gridbench(
            out,
            &["generate", "--domains", "course", "--h", "1", "--b", "0"]
        )),
        0
    );
    assert_eq!(code(&gridbench(out, &["run", "--fail-rate", "1.5"])), 2);
    assert_eq!(code(&gridbench(out, &["run", "--h", "9"])), 2);
    let e = gridbench(out, &["run", "--agent", "endpoint"]);
    assert_eq!(code(&e), 2);
    assert!(stderr(&e).contains("--endpoint-url"));
    assert_eq!(code(&gridbench(out, &["report", "nothing.jsonl"])), 2);
    assert_eq!(code(&gridbench(out, &["frobnicate"])), 2);
}
