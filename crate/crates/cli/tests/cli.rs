use std::path::Path;
use std::process::{Command, Output};

fn mpqp(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mpqp")).args(args).current_dir(dir).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn pipeline_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(mpqp(&["generate", "p1:2/2", "-o", "p.json"], d).status.success());
    let solve = mpqp(&["solve", "p.json", "-o", "s.json"], d);
    assert!(solve.status.success());
    assert!(stdout(&solve).contains("R = 5"));
    assert!(stdout(&solve).contains("nc = 10"));
    let compress = mpqp(&["compress", "s.json", "-o", "t.bin", "--mpc", "--json", "t.json"], d);
    assert!(compress.status.success(), "{}", String::from_utf8_lossy(&compress.stderr));
    assert!(stdout(&compress).contains("m_LR"));
    assert!(d.join("t.json").exists());
    let verify = mpqp(&["verify", "t.bin", "s.json", "--samples", "10"], d);
    assert!(verify.status.success());
    assert!(stdout(&verify).contains("PASS"));
    let eval = mpqp(&["eval", "t.bin", "0.1,-0.2"], d);
    assert!(eval.status.success());
    assert!(stdout(&eval).starts_with("region "));
    let far = mpqp(&["eval", "t.bin", "100,0"], d);
    assert!(far.status.success());
    assert_eq!(stdout(&far).trim(), "Infeasible");
}

#[test]
fn input_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("bad.json"), "{not json").unwrap();
    assert_eq!(mpqp(&["solve", "bad.json", "-o", "s.json"], d).status.code(), Some(2));
    assert_eq!(mpqp(&["solve", "missing.json", "-o", "s.json"], d).status.code(), Some(2));
    assert_eq!(mpqp(&["frobnicate"], d).status.code(), Some(2));
    assert_eq!(mpqp(&["generate", "p9:1/1", "-o", "x.json"], d).status.code(), Some(2));
    std::fs::write(d.join("t.bin"), b"garbage").unwrap();
    assert_eq!(mpqp(&["eval", "t.bin", "0,0"], d).status.code(), Some(2));
}

#[test]
fn verify_rejects_foreign_solution() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for (inst, name) in [("p1:2/2", "a"), ("p1:4/2", "b")] {
        assert!(mpqp(&["generate", inst, "-o", &format!("{name}.json")], d).status.success());
        assert!(mpqp(&["solve", &format!("{name}.json"), "-o", &format!("{name}_s.json")], d).status.success());
    }
    assert!(mpqp(&["compress", "a_s.json", "-o", "a.bin"], d).status.success());
    let out = mpqp(&["verify", "a.bin", "b_s.json"], d);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("different problems"));
}

#[test]
fn bench_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = mpqp(&["bench", "--suite", "p1:2/2", "--samples", "5", "--csv", "b.csv"], d);
    assert!(out.status.success());
    assert!(stdout(&out).contains("deviation from reference"));
    let csv = std::fs::read_to_string(d.join("b.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("label,nc,R,delta"));
    assert!(lines.next().unwrap().starts_with("P1 n=2 N=2,10,5,2,"));
}

#[test]
fn compress_root_option() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(mpqp(&["generate", "p1:2/2", "-o", "p.json"], d).status.success());
    assert!(mpqp(&["solve", "p.json", "-o", "s.json"], d).status.success());
    assert!(mpqp(&["compress", "s.json", "-o", "t.bin", "--root", "region:2"], d).status.success());
    assert!(mpqp(&["verify", "t.bin", "s.json", "--samples", "5"], d).status.success());
    assert_eq!(mpqp(&["compress", "s.json", "-o", "t.bin", "--root", "region:0"], d).status.code(), Some(2));
}
