use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: [&str; 6] = ["--set", "network.n=30", "--set", "design.tests=150", "--set", "checkpoints={\"every\":50}"];

fn gtconn(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gtconn"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env_remove("GTCONN_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn files(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().into(), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn help_and_version_exit_zero() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(&gtconn(d.path(), &["--help"])), 0);
    assert_eq!(code(&gtconn(d.path(), &["--version"])), 0);
}

#[test]
fn usage_errors_exit_two() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(&gtconn(d.path(), &["infer", "--mode", "bogus"])), 2);
    assert_eq!(code(&gtconn(d.path(), &["infer"])), 2);
    assert_eq!(code(&gtconn(d.path(), &["frobnicate"])), 2);
    assert_eq!(code(&gtconn(d.path(), &["generate", "--set", "network.nn=3"])), 2);
    assert_eq!(code(&gtconn(d.path(), &["generate", "--set", "noise.alpha=0.9"])), 2);
    assert_eq!(code(&gtconn(d.path(), &["generate", "--set", "novalue"])), 2);
    assert_eq!(code(&gtconn(d.path(), &["generate", "--config", "/nonexistent/config.json"])), 1);
}

#[test]
fn resume_only_for_offline() {
    let d = tempfile::tempdir().unwrap();
    let mut args = vec!["infer", "--mode", "offline"];
    args.extend(SMALL);
    assert_eq!(code(&gtconn(d.path(), &args)), 0);
    let ck = d.path().join("checkpoint_offline.json");
    let o = gtconn(d.path(), &["infer", "--mode", "online", "--resume", ck.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn generate_writes_artifacts() {
    let d = tempfile::tempdir().unwrap();
    let o = gtconn(d.path(), &["generate", "--set", "network.n=1000"]);
    assert_eq!(code(&o), 0);
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("n=1000"), "{stdout}");
    for f in ["network.csv", "network.json", "design.csv", "config.json"] {
        assert!(d.path().join(f).exists(), "{f}");
    }
    // every CSV carries provenance
    for f in ["network.csv", "design.csv"] {
        let text = fs::read_to_string(d.path().join(f)).unwrap();
        assert!(text.starts_with("# gtconn 0.1.0 config="), "{f}");
        assert!(text.lines().next().unwrap().ends_with(" seed=0"));
    }
}

#[test]
fn k_override_zero_gives_empty_network() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(code(&gtconn(d.path(), &["generate", "--set", "network.k=0"])), 0);
    let text = fs::read_to_string(d.path().join("network.csv")).unwrap();
    assert_eq!(text.lines().count(), 2);
}

#[test]
fn out_dir_from_environment() {
    let d = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_gtconn"))
        .args(["bounds"])
        .env("GTCONN_OUT_DIR", d.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(d.path().join("bounds.json").exists());
}

#[test]
fn offline_resume_extends_budget() {
    let d = tempfile::tempdir().unwrap();
    let mut args = vec!["infer", "--mode", "offline"];
    args.extend(SMALL);
    assert_eq!(code(&gtconn(d.path(), &args)), 0);
    let ck = d.path().join("checkpoint_offline.json");
    let r = tempfile::tempdir().unwrap();
    let mut args = vec!["infer", "--mode", "offline", "--resume", ck.to_str().unwrap()];
    args.extend(SMALL);
    args.extend(["--set", "design.tests=300"]);
    let o = gtconn(r.path(), &args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    // a checkpoint from a different seed is refused
    let mut args = vec!["infer", "--mode", "offline", "--resume", ck.to_str().unwrap(), "--set", "seed=5"];
    args.extend(SMALL);
    assert_eq!(code(&gtconn(r.path(), &args)), 2);
}

fn run_everything(out: &Path, jobs: &str) {
    let base = ["--jobs", jobs];
    for cmd in [
        vec!["generate"],
        vec!["infer", "--mode", "offline"],
        vec!["infer", "--mode", "online"],
        vec!["infer", "--mode", "adaptive"],
        vec!["infer", "--mode", "naive"],
        vec!["oracle", "--set", "oracle.instances=8"],
        vec!["bounds"],
    ] {
        let mut args: Vec<&str> = base.to_vec();
        args.extend(cmd);
        args.extend(SMALL);
        let o = gtconn(out, &args);
        assert_eq!(code(&o), 0, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let sweep = out.join("sweep");
    let mut args: Vec<&str> = base.to_vec();
    args.extend(["sweep", "--out", sweep.to_str().unwrap(), "--set", "sweep.modes=[\"offline\",\"online\",\"naive\"]"]);
    args.extend(["--set", "sweep.seeds=[1,2]"]);
    args.extend(SMALL);
    assert_eq!(code(&gtconn(out, &args)), 0);
}

#[test]
fn reruns_are_byte_identical_across_parallelism() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    run_everything(a.path(), "1");
    run_everything(b.path(), "8");
    run_everything(c.path(), "1");
    let fa = files(a.path());
    assert!(fa.len() >= 14, "{}", fa.len());
    same(&fa, &files(b.path()));
    same(&fa, &files(c.path()));
    same(&files(&a.path().join("sweep")), &files(&b.path().join("sweep")));
}

fn same(x: &[(PathBuf, Vec<u8>)], y: &[(PathBuf, Vec<u8>)]) {
    let names = |v: &[(PathBuf, Vec<u8>)]| v.iter().map(|f| f.0.clone()).collect::<Vec<_>>();
    assert_eq!(names(x), names(y));
    for (fx, fy) in x.iter().zip(y) {
        assert!(fx.1 == fy.1, "{} differs", fx.0.display());
    }
}
