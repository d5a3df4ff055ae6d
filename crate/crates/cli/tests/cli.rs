use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const E1: &str = "[environment]\ncookies = 0.7\n";

fn erw(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_erw"))
        .args(args)
        .current_dir(dir)
        .env_remove("ERW_CONFIG")
        .env_remove("ERW_SEED")
        .env_remove("ERW_WORKERS")
        .env_remove("ERW_OUT")
        .env_remove("ERW_FORMAT")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    fs::write(dir.join(name), text).unwrap();
    name.to_string()
}

fn record_value(dir: &Path, key: &str) -> String {
    let rec = fs::read_to_string(dir.join("record.txt")).unwrap();
    rec.lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("{key} missing from record:\n{rec}"))
        .to_string()
}

#[test]
fn regen_is_reproducible_byte_for_byte() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "e1.conf",
        &format!("{E1}[regen]\ncycles = 5000\ncap = 1000\n"),
    );
    let mut images = Vec::new();
    for (out, workers) in [("a", "1"), ("b", "3")] {
        let o = erw(
            dir.path(),
            &["regen", "--config", &cfg, "--out", out, "--workers", workers],
        );
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        images.push(fs::read(dir.path().join(out).join("regen.bin")).unwrap());
    }
    assert_eq!(images[0], images[1]);
}

#[test]
fn rate_refuses_damaged_or_foreign_caches() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "e1.conf",
        &format!("{E1}[regen]\ncycles = 2000\ncap = 1000\n"),
    );
    assert_eq!(code(&erw(dir.path(), &["regen", "--config", &cfg])), 0);

    let other = write_config(
        dir.path(),
        "other.conf",
        "[environment]\ncookies = 0.6\n[rate]\ncache = regen.bin\n",
    );
    let o = erw(dir.path(), &["rate", "--config", &other]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));

    let path = dir.path().join("out").join("regen.bin");
    let mut bytes = fs::read(&path).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x40;
    fs::write(&path, &bytes).unwrap();
    let same = write_config(dir.path(), "same.conf", &format!("{E1}[rate]\ncache = regen.bin\n"));
    assert_eq!(code(&erw(dir.path(), &["rate", "--config", &same])), 1);
}

#[test]
fn all_right_walk_has_flat_rate_function() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "right.conf",
        "[environment]\ncookies = 1 1\nellipticity = false\n[regen]\ncycles = 500\n[rate]\ncache = regen.bin\n",
    );
    assert_eq!(code(&erw(dir.path(), &["regen", "--config", &cfg])), 0);
    let o = erw(dir.path(), &["rate", "--config", &cfg]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("out").join("rate_i_v.csv")).unwrap();
    let mut rows = 0;
    for line in csv.lines().skip(1) {
        let value: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!(value.abs() < 1e-9, "{line}");
        rows += 1;
    }
    assert!(rows > 10);
}

#[test]
fn verify_exit_status_follows_verdicts() {
    let dir = TempDir::new().unwrap();
    let pass = write_config(dir.path(), "pass.conf", "[verify]\nscale = cheap\nonly = AC7\n");
    let o = erw(dir.path(), &["verify", "--config", &pass, "--out", "p"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let report = fs::read_to_string(dir.path().join("p").join("verify_report.txt")).unwrap();
    assert!(report.starts_with("PASS AC7"));

    let fail = write_config(dir.path(), "fail.conf", "[verify]\nscale = cheap\nonly = AC6\n");
    let o = erw(dir.path(), &["verify", "--config", &fail, "--out", "f"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL AC6"));
}

#[test]
fn bad_input_exits_with_one() {
    let dir = TempDir::new().unwrap();
    let cases = [
        ("unknown-key.conf", format!("{E1}[walk]\nsteps = 10\n")),
        ("unknown-section.conf", format!("{E1}[plot]\nn = 10\n")),
        ("bad-value.conf", format!("{E1}[walk]\nreps = many\n")),
        ("bad-cookie.conf", "[environment]\ncookies = 1.5\n".to_string()),
        ("no-env.conf", "[walk]\nn = 10\n".to_string()),
    ];
    for (name, text) in cases {
        let cfg = write_config(dir.path(), name, &text);
        let o = erw(dir.path(), &["walk", "--config", &cfg]);
        assert_eq!(code(&o), 1, "{name}: {}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(code(&erw(dir.path(), &["walk", "--config", "missing.conf"])), 1);
    assert_eq!(code(&erw(dir.path(), &["jump"])), 1);
    assert_eq!(code(&erw(dir.path(), &["--help"])), 0);
}

#[test]
fn flags_beat_environment_beat_file() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "walk.conf",
        &format!("{E1}[run]\nseed = 11\nout = from-file\n[walk]\nn = 20\nreps = 10\n"),
    );
    let run = |extra_env: Option<&str>, extra_flag: Option<&str>| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_erw"));
        c.args(["walk", "--config", &cfg]).current_dir(dir.path());
        c.env_remove("ERW_SEED").env_remove("ERW_OUT").env_remove("ERW_CONFIG");
        if let Some(s) = extra_env {
            c.env("ERW_SEED", s);
        }
        if let Some(s) = extra_flag {
            c.args(["--seed", s]);
        }
        let o = c.output().unwrap();
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        record_value(&dir.path().join("from-file"), "master_seed")
    };
    assert_eq!(run(None, None), "11");
    assert_eq!(run(Some("22"), None), "22");
    assert_eq!(run(Some("22"), Some("33")), "33");
}

#[test]
fn csv_output_carries_the_config_hash() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "walk.conf", &format!("{E1}[walk]\nn = 10 20\nreps = 50\n"));
    assert_eq!(code(&erw(dir.path(), &["walk", "--config", &cfg])), 0);
    let csv = fs::read_to_string(dir.path().join("out").join("walk_speed.csv")).unwrap();
    let hash = record_value(&dir.path().join("out"), "config_hash");
    assert!(csv.starts_with("n,reps,speed_mean,speed_se,config_hash\n"));
    assert_eq!(csv.lines().count(), 3);
    assert!(
        csv.lines().skip(1).all(|l| l.ends_with(&format!(",{}", &hash[..16]))),
        "{csv}"
    );
    assert!(!csv.contains('\r'));
}

#[test]
fn tails_reports_hill_exponents_with_stability_table() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "e2.conf",
        "[environment]\ncookies = 0.75 0.75 0.75 0.75 0.75\n[regen]\ncycles = 20000\n[tails]\ncache = regen.bin\n",
    );
    assert_eq!(code(&erw(dir.path(), &["regen", "--config", &cfg])), 0);
    let o = erw(dir.path(), &["tails", "--config", &cfg]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let ex = fs::read_to_string(dir.path().join("out").join("tails_exponents.csv")).unwrap();
    assert!(ex.lines().any(|l| l.starts_with("hill_sigma,")) && ex.lines().any(|l| l.starts_with("hill_w,")));
    let st = fs::read_to_string(dir.path().join("out").join("tails_hill_stability.csv")).unwrap();
    assert!(st.starts_with("field,k,exponent,config_hash\n"));
    assert!(st.lines().filter(|l| l.starts_with("hill_w,")).count() >= 10, "{st}");
}
