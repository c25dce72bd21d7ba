use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_reqconflict"));
    cmd.env_remove("REQCONFLICT_OUT").env_remove("RUST_LOG");
    cmd
}

fn run(cmd: &mut Command) -> (i32, String, String) {
    let Output { status, stdout, stderr } = cmd.output().expect("binary runs");
    (status.code().unwrap_or(-1), String::from_utf8_lossy(&stdout).into(), String::from_utf8_lossy(&stderr).into())
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/data").join(name)
}

#[test]
fn validate_accepts_bundled_set() {
    let (code, out, _) = run(bin().arg("validate").arg(data("synthetic.csv")));
    assert_eq!(code, 0);
    assert!(out.contains("60 requirements, 24 conflicting"), "{out}");
}

#[test]
fn validate_reports_rows_and_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    fs::write(&path, "id,text,conflict,conflict_label\n1,The UAV shall land.,Yes,\"Yes (1, 9)\"\n1,Dup.,No,No\n")
        .unwrap();
    let (code, _, err) = run(bin().arg("validate").arg(&path));
    assert_eq!(code, 1, "{err}");
    assert!(err.contains("row"), "{err}");
}

#[test]
fn missing_file_is_a_runtime_error() {
    let (code, _, err) = run(bin().args(["validate", "/nonexistent/reqs.csv"]));
    assert_eq!(code, 3, "{err}");
}

#[test]
fn bad_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    fs::write(&cfg, "folds = many\n").unwrap();
    let (code, _, err) = run(bin().arg("phase1").arg("--config").arg(&cfg).arg("--output").arg(dir.path()));
    assert_eq!(code, 2, "{err}");
    let (code, _, _) = run(bin().args(["phase1", "--set", "colour=red"]).arg("--output").arg(dir.path()));
    assert_eq!(code, 2);
    let (code, _, _) = run(bin().args(["phase1", "--set", "folds=1"]).arg("--output").arg(dir.path()));
    assert_eq!(code, 2);
}

#[test]
fn phase2_writes_run_layout() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let (code, stdout, err) = run(bin().arg("phase2").arg("--output").arg(&out));
    assert_eq!(code, 0, "{err}");
    assert!(stdout.contains("F1 change"), "{stdout}");
    for f in ["config.snapshot", "similarity.csv", "summary.txt", "report.md"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    for i in 0..3 {
        let fd = out.join("folds").join(i.to_string());
        for f in ["roc.csv", "candidates.csv", "confusion.csv", "final.csv", "confusion-phase2-general.csv"] {
            assert!(fd.join(f).is_file(), "fold {i}: {f}");
        }
        let roc = fs::read_to_string(fd.join("roc.csv")).unwrap();
        assert_eq!(roc.lines().count(), 101);
    }
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("phase2.backend = general"), "{summary}");

    fs::remove_file(out.join("report.md")).unwrap();
    let (code, report, _) = run(bin().arg("report").arg(&out));
    assert_eq!(code, 0);
    assert_eq!(fs::read_to_string(out.join("report.md")).unwrap(), report);
}

#[test]
fn output_defaults_to_env_var() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("from-env");
    let (code, _, err) = run(bin().arg("phase1").env("REQCONFLICT_OUT", &out));
    assert_eq!(code, 0, "{err}");
    assert!(out.join("summary.txt").is_file());
    let snapshot = fs::read_to_string(out.join("config.snapshot")).unwrap();
    assert!(!snapshot.contains("backend = crf"));
}

#[test]
fn synth_is_deterministic_and_matches_bundle() {
    let (code, a, _) = run(bin().args(["synth", "--conflicts", "12", "--seed", "7"]));
    assert_eq!(code, 0);
    assert_eq!(a, fs::read_to_string(data("synthetic.csv")).unwrap());
    let (_, b, _) = run(bin().args(["synth", "--conflicts", "5", "--seed", "3"]));
    let (_, c, _) = run(bin().args(["synth", "--conflicts", "5", "--seed", "3"]));
    assert_eq!(b, c);
}

#[test]
fn train_ner_writes_loadable_model() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("crf.model");
    let (code, out, err) = run(bin().args(["train-ner", "--max-iterations", "20", "--model-out"]).arg(&model));
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("training accuracy"), "{out}");
    let runs = dir.path().join("run");
    let (code, _, err) = run(bin()
        .arg("phase2")
        .arg("--output")
        .arg(&runs)
        .args(["--set", "backend=crf", "--set"])
        .arg(format!("ner_model={}", model.display())));
    assert_eq!(code, 0, "{err}");
    assert!(runs.join("folds/0/confusion-phase2-crf.csv").is_file());
}

fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn same_config_same_output_tree() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    assert_eq!(run(bin().arg("phase2").arg("--output").arg(&out)).0, 0);
    let first = tree(&out);
    fs::remove_dir_all(&out).unwrap();
    assert_eq!(run(bin().arg("phase2").arg("--output").arg(&out)).0, 0);
    assert_eq!(tree(&out), first);
}

#[test]
fn zero_overlap_threshold_keeps_every_candidate() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    assert_eq!(run(bin().args(["phase2", "--set", "t_o=0"]).arg("--output").arg(&out)).0, 0);
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    for i in 0..3 {
        let get = |k: String| summary.lines().find(|l| l.starts_with(&format!("{k} = "))).unwrap().to_string();
        let cands = get(format!("fold.{i}.candidates"));
        let kept = get(format!("phase2.fold.{i}.kept"));
        assert_eq!(cands.rsplit(' ').next(), kept.rsplit(' ').next());
    }
}

#[test]
fn report_compares_runs_under_a_directory() {
    let dir = tempfile::tempdir().unwrap();
    for (name, obj) in [("youden", "youden"), ("literal", "literal")] {
        let out = dir.path().join(name);
        let (code, _, err) =
            run(bin().arg("phase1").arg("--output").arg(&out).arg("--set").arg(format!("objective={obj}")));
        assert_eq!(code, 0, "{err}");
    }
    let (code, out, _) = run(bin().arg("report").arg(dir.path()));
    assert_eq!(code, 0);
    assert!(out.contains("| literal |") && out.contains("| youden |"), "{out}");
    let empty = tempfile::tempdir().unwrap();
    let (code, _, err) = run(bin().arg("report").arg(empty.path()));
    assert_eq!(code, 3);
    assert!(err.contains("no run directories"), "{err}");
}

#[test]
fn train_ner_grid_search_reports_every_cell() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out, err) = run(bin()
        .args(["train-ner", "--grid-c1", "0.1,1.0", "--grid-c2", "0.1,1.0", "--max-iterations", "10", "--folds", "3"])
        .arg("--model-out")
        .arg(dir.path().join("m")));
    assert_eq!(code, 0, "{err}");
    assert_eq!(out.lines().filter(|l| l.split('\t').count() == 3).count(), 5, "{out}");
    assert!(out.contains("best: c1 = "), "{out}");
}
