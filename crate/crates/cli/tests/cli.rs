use std::path::PathBuf;
use std::process::{Command, Output};

use tempfile::TempDir;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn cidre(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cidre"))
        .args(args)
        .env_remove("CIDRE_CONFIG")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn toy() -> String {
    fixture("toy.lst").display().to_string()
}

fn count(text: &str, key: &str) -> usize {
    text.lines()
        .find_map(|l| l.strip_prefix(key)?.trim().parse().ok())
        .unwrap()
}

#[test]
fn decode_flat_image() {
    let dir = TempDir::new().unwrap();
    let bin = dir.path().join("two.bin");
    let words: [u32; 2] = [0x00a5_8533, 0x0000_0073];
    std::fs::write(&bin, words.iter().flat_map(|w| w.to_le_bytes()).collect::<Vec<u8>>()).unwrap();
    let o = cidre(&["decode", "--input", bin.to_str().unwrap(), "--format", "flat", "--base", "0x1000"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("00001000: 00a58533"), "{}", lines[0]);
    assert!(lines[1].contains("ecall"));
}

#[test]
fn decode_listing_round_trips() {
    let o = cidre(&["decode", "--input", &toy()]);
    assert!(o.status.success());
    let dir = TempDir::new().unwrap();
    let copy = dir.path().join("copy.lst");
    std::fs::write(&copy, stdout(&o)).unwrap();
    let again = cidre(&["decode", "--input", copy.to_str().unwrap()]);
    assert_eq!(stdout(&again), stdout(&o));
}

#[test]
fn graph_prints_dot() {
    let o = cidre(&["graph", "--input", &toy(), "--block", "0x8000001c"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.starts_with("digraph"));
    assert!(text.trim_end().ends_with('}'));
    let by_index = cidre(&["graph", "--input", &toy(), "--block", "1"]);
    assert_eq!(stdout(&by_index), text);
    assert_eq!(cidre(&["graph", "--input", &toy(), "--block", "9"]).status.code(), Some(2));
}

#[test]
fn enumerate_counts_grow_with_shape() {
    let mut last = (0, 0);
    for io in ["2,1", "3,1", "3,2"] {
        let o = cidre(&["enumerate", "--input", &toy(), "--io", io]);
        assert!(o.status.success());
        let text = stdout(&o);
        let now = (count(&text, "patterns "), count(&text, "classes "));
        assert!(now.0 >= last.0 && now.0 > 0, "{io}: {now:?}");
        last = now;
    }
    assert_eq!(last, (64, 49));
}

#[test]
fn profile_reports_counts_and_exit() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("p.txt");
    let o = cidre(&["profile", "--input", &toy(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("8000001c 40"));
    assert!(text.contains("# f_total 692"));
    assert!(text.contains("# exit 194"));
    let saved = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with(&saved));
}

#[test]
fn run_then_verify() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("o");
    let o = cidre(&["run", "--input", &toy(), "--io", "3,1", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["report.json", "profile.txt", "model/index"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let v = cidre(&["verify", "--report", out.to_str().unwrap()]);
    assert!(v.status.success());
    assert!(stdout(&v).lines().any(|l| l == "exact"));
}

#[test]
fn file_profile_feeds_a_run() {
    let dir = TempDir::new().unwrap();
    let prof = dir.path().join("p.txt");
    std::fs::write(&prof, "80000000 1\n8000001c 40\n80000060 1\n").unwrap();
    let source = format!("file:{}", prof.display());
    let out = dir.path().join("o");
    let o = cidre(&["run", "--input", &toy(), "--profile", &source, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("f_total 692"));
}

#[test]
fn config_file_from_environment() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("c.toml");
    let out = dir.path().join("o");
    std::fs::write(
        &cfg,
        format!("[input]\npath = {}\n[constraints]\nio = 3,2\n[output]\ndir = {}\n", toy(), out.display()),
    )
    .unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_cidre"))
        .args(["run"])
        .env("CIDRE_CONFIG", &cfg)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["patterns"], 64);
}

#[test]
fn exit_codes_by_stage() {
    let dir = TempDir::new().unwrap();
    let out = |n: &str| dir.path().join(n).display().to_string();
    let cases: [(&[&str], i32, &str); 5] = [
        (&["--io", "4,2"], 2, "a"),
        (&["--profile", "file:/no/such/profile"], 4, "b"),
        (&["--io", "3,2", "--cap", "3"], 5, "c"),
        (&["--oracle-cmd", "false"], 6, "d"),
        (&["--umax", "0"], 2, "e"),
    ];
    for (extra, code, name) in cases {
        let o_dir = out(name);
        let input = toy();
        let mut argv: Vec<&str> = vec!["run", "--input", &input, "--out", &o_dir];
        argv.extend_from_slice(extra);
        let o = cidre(&argv);
        assert_eq!(o.status.code(), Some(code), "{extra:?}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!dir.path().join(name).join("report.json").exists());
        assert!(!dir.path().join(name).join("model").exists());
    }
    let o = cidre(&["run", "--input", "/no/such/program.elf", "--out", &out("f")]);
    assert_eq!(o.status.code(), Some(3));
}
