use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_poisonpill"))
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin().args(args).current_dir(dir).output().expect("spawn")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[test]
fn run_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &[
            "run", "--protocol", "elect", "--n", "8", "--trials", "5", "--seed", "42", "--csv", "out.csv", "--summary",
            "out.json",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("out.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "metric,n,k,adversary,mean,stderr,max,trials,seed,config_digest"
    );
    let rounds = lines.find(|l| l.starts_with("rounds,")).expect("rounds row");
    assert!(rounds.contains(",8,8,fifo,"));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out.json")).unwrap()).unwrap();
    assert_eq!(summary["trials"], 5);
    assert_eq!(summary["master_seed"], 42);
    assert_eq!(summary["seeds"].as_array().unwrap().len(), 5);
    assert!(summary["metrics"]["messages"]["mean"].as_f64().unwrap() > 0.0);
    assert_eq!(summary["config_digest"].as_str().unwrap(), csv.lines().nth(1).unwrap().rsplit(',').next().unwrap());
}

#[test]
fn config_file_and_flags_agree() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("exp.toml"),
        "protocol = \"rename\"\nn = 8\nadversary = \"random\"\ntrials = 3\nseed = 7\n",
    )
    .unwrap();
    let from_file = run(&["run", "--config", "exp.toml"], dir.path());
    let from_flags = run(
        &["run", "--protocol", "rename", "--n", "8", "--adversary", "random", "--trials", "3", "--seed", "7"],
        dir.path(),
    );
    assert_eq!(code(&from_file), 0);
    assert_eq!(stdout(&from_file), stdout(&from_flags));

    // Flags override file values.
    let overridden = run(&["run", "--config", "exp.toml", "--seed", "8"], dir.path());
    assert_eq!(code(&overridden), 0);
    assert_ne!(stdout(&overridden), stdout(&from_file));
    assert!(stdout(&overridden).contains(",8,"));
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(&["run", "--protocol", "elect"], dir.path())), 2);
    assert_eq!(code(&run(&["run", "--protocol", "elect", "--n", "4", "--t", "2"], dir.path())), 2);
    assert_eq!(code(&run(&["run", "--protocol", "elect", "--n", "4", "--k", "5"], dir.path())), 2);
    assert_eq!(code(&run(&["run", "--protocol", "vote", "--n", "4"], dir.path())), 2);
    std::fs::write(dir.path().join("bad.toml"), "protocol = \"elect\"\nn = 4\ncolour = 1\n").unwrap();
    assert_eq!(code(&run(&["run", "--config", "bad.toml"], dir.path())), 2);
    assert_eq!(code(&run(&["explore", "--n", "4", "--protocol", "elect"], dir.path())), 2);
}

#[test]
fn explore_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["explore", "--n", "1", "--protocol", "elect"], dir.path());
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("p0=win"), "{}", stdout(&out));

    let out = run(&["explore", "--n", "2", "--protocol", "sift-hetero", "--json", "r.json"], dir.path());
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("all branches: >= 1 SURVIVE"));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(report["report"]["incomplete"], 0);

    let out = run(&["explore", "--n", "2", "--protocol", "elect", "--depth", "6"], dir.path());
    assert_eq!(code(&out), 3);
}

#[test]
fn trace_then_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &["trace", "--protocol", "rename", "--n", "6", "--adversary", "random", "--seed", "5", "-o", "t.jsonl"],
        dir.path(),
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let out = run(&["analyze", "t.jsonl"], dir.path());
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    for check in ["closure", "commit-order", "leader-history", "name-order", "groups", "replay"] {
        assert!(stdout(&out).contains(&format!("PASS {check}")), "{check}: {}", stdout(&out));
    }

    let out = run(&["analyze", "t.jsonl", "--check", "name-order,groups"], dir.path());
    assert_eq!(code(&out), 0);
    assert!(!stdout(&out).contains("closure"));

    assert_eq!(code(&run(&["analyze", "t.jsonl", "--check", "bogus"], dir.path())), 2);
    assert_eq!(code(&run(&["analyze", "missing.jsonl"], dir.path())), 2);
    std::fs::write(dir.path().join("junk.jsonl"), "not json\n").unwrap();
    assert_eq!(code(&run(&["analyze", "junk.jsonl"], dir.path())), 2);
}

#[test]
fn corrupted_trace_prints_witness() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(
        &["trace", "--protocol", "rename", "--n", "4", "--adversary", "random", "--seed", "1", "-o", "t.jsonl"],
        dir.path(),
    );
    assert_eq!(code(&out), 0);
    // Give every processor name 1.
    let text = std::fs::read_to_string(dir.path().join("t.jsonl")).unwrap();
    let re_named: String = text
        .lines()
        .map(|l| {
            let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
            if let Some(ms) = v.get_mut("milestones").and_then(|m| m.as_array_mut()) {
                for m in ms {
                    if m["tag"] == "respond" {
                        m["outcome"]["name"] = 1.into();
                    }
                }
            }
            v.to_string() + "\n"
        })
        .collect();
    std::fs::write(dir.path().join("bad.jsonl"), re_named).unwrap();
    let out = run(&["analyze", "bad.jsonl", "--check", "name-order"], dir.path());
    assert_eq!(code(&out), 1);
    assert!(stdout(&out).contains("FAIL name-order"), "{}", stdout(&out));
}

#[test]
fn failing_trial_exports_trace() {
    let dir = tempfile::tempdir().unwrap();
    // An event cap this small cannot finish an election.
    let out = run(
        &["run", "--protocol", "elect", "--n", "8", "--max-events", "50", "--failure-dir", "fails"],
        dir.path(),
    );
    assert_eq!(code(&out), 1);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("no termination"), "{stderr}");
    let files: Vec<_> = std::fs::read_dir(dir.path().join("fails")).unwrap().collect();
    assert_eq!(files.len(), 1);
    let trace = files[0].as_ref().unwrap().path();
    assert_eq!(code(&run(&["analyze", trace.to_str().unwrap()], dir.path())), 0);
}
