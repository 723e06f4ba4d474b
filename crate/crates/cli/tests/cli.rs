use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_dwellcert"));
    c.env_remove("DWELLCERT_THREADS");
    c
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

#[test]
fn bounds_csv_example1() {
    let ex1 = fixture("example1.json");
    let o = run(&["bounds", ex1.to_str().unwrap(), "--format", "csv"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("h,lb,ub,leading_cycle,epsilon,verdict"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "0.2");
    let lb: f64 = row[1].parse().unwrap();
    let ub: f64 = row[2].parse().unwrap();
    assert!((lb - 0.0325).abs() < 1e-3);
    assert!((ub - 0.0469).abs() < 1e-3);
    assert_eq!(row[5], "unstable");
}

#[test]
fn output_is_deterministic() {
    let ex1 = fixture("example1.json");
    let a = run(&["bounds", ex1.to_str().unwrap(), "--format", "json"]);
    let b = run(&["--threads", "2", "bounds", ex1.to_str().unwrap(), "--format", "json"]);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    let c = bin()
        .env("DWELLCERT_THREADS", "1")
        .args(["bounds", ex1.to_str().unwrap(), "--format", "json"])
        .output()
        .unwrap();
    assert_eq!(a.stdout, c.stdout);
}

#[test]
fn empty_steps() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(fixture("example1.json"))
        .unwrap()
        .replace("\"steps\": [\n      0.2\n    ]", "\"steps\": []");
    assert!(text.contains("\"steps\": []"), "{text}");
    let p = dir.path().join("empty.json");
    std::fs::write(&p, text).unwrap();
    let o = run(&["bounds", p.to_str().unwrap(), "--format", "csv"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o), "h,lb,ub,leading_cycle,epsilon,verdict\n");
}

#[test]
fn parse_and_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(fixture("example1.json"))
        .unwrap()
        .replace("\"dwell_time\": 1.0", "\"dwell_time\": 1.0,\n  \"dwel\": 2");
    let p = dir.path().join("bad.json");
    std::fs::write(&p, text).unwrap();
    let o = run(&["bounds", p.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("dwel"));

    assert_eq!(code(&run(&["bounds"])), 1);
    assert_eq!(code(&run(&["frobnicate"])), 1);
    assert_eq!(code(&run(&["bounds", "/nonexistent/x.json"])), 1);
    let ex1 = fixture("example1.json");
    assert_eq!(code(&run(&["bounds", ex1.to_str().unwrap(), "--steps", "2.5"])), 1);
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn jsr_certificate_verify_and_tamper() {
    let dir = tempfile::tempdir().unwrap();
    let ex1 = fixture("example1.json");
    let cert = dir.path().join("cert.json");
    let o = run(&[
        "jsr",
        ex1.to_str().unwrap(),
        "--step",
        "0.2",
        "--certificate",
        cert.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("(2.40; 37.40)"));

    let o = run(&["verify", cert.to_str().unwrap(), ex1.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    // Scale rho_hat by 1.1.
    let text = std::fs::read_to_string(&cert).unwrap();
    let line = text.lines().find(|l| l.trim_start().starts_with("\"rho_hat\"")).unwrap();
    let value: f64 = line.split(':').nth(1).unwrap().trim().trim_end_matches(',').parse().unwrap();
    let tampered = text.replace(line, &format!("  \"rho_hat\": {:.16e},", value * 1.1));
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, tampered).unwrap();
    assert_eq!(code(&run(&["verify", bad.to_str().unwrap(), ex1.to_str().unwrap()])), 2);

    let ex2 = fixture("example2.json");
    assert_eq!(code(&run(&["verify", cert.to_str().unwrap(), ex2.to_str().unwrap()])), 2);
}

#[test]
fn bounds_writes_verified_certificates() {
    let dir = tempfile::tempdir().unwrap();
    let ex1 = fixture("example1.json");
    let out = dir.path().join("table.csv");
    let certs = dir.path().join("certs");
    let o = run(&[
        "bounds",
        ex1.to_str().unwrap(),
        "--format",
        "csv",
        "-o",
        out.to_str().unwrap(),
        "--certificate-dir",
        certs.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(std::fs::read_to_string(&out).unwrap().starts_with("h,lb,ub"));
    let c = certs.join("cert_h0.2.json");
    assert_eq!(code(&run(&["verify", c.to_str().unwrap(), ex1.to_str().unwrap()])), 0);
}

#[test]
fn plot2d() {
    let dir = tempfile::tempdir().unwrap();
    let ex1 = fixture("example1.json");
    let svg = dir.path().join("p.svg");
    let o = run(&["plot2d", ex1.to_str().unwrap(), "--step", "0.2", "-o", svg.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(std::fs::read_to_string(&svg).unwrap().matches("<polygon").count(), 6);
    assert!(dir.path().join("p.json").exists());

    let ex2 = fixture("example2.json");
    let o = run(&["plot2d", ex2.to_str().unwrap(), "--step", "0.25", "-o", svg.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
}

#[test]
fn generate_is_seeded() {
    let a = run(&["generate", "--family", "metzler", "--dim", "4", "--seed", "3"]);
    let b = run(&["generate", "--family", "metzler", "--dim", "4", "--seed", "3"]);
    let c = run(&["generate", "--family", "metzler", "--dim", "4", "--seed", "4"]);
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    assert_ne!(a.stdout, c.stdout);

    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("g.json");
    let o = run(&["generate", "--dim", "2", "--dwell-time", "0.6", "--seed", "1", "-o", p.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let o = run(&["bounds", p.to_str().unwrap(), "--steps", "0.3", "--format", "csv"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).lines().count(), 2);
}
