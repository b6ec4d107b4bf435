//! End-to-end runs on the bundled toy program: determinism, shape
//! monotonicity, the external cost protocol and cost monotonicity.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use cidre_core::canon::group;
use cidre_core::config::{Liveness, RunConfig};
use cidre_core::cost::{CostOracle, ExternalOracle, OracleConfig, OracleMode};
use cidre_core::emit::ModelEntry;
use cidre_core::encoding::EncodingAllocator;
use cidre_core::enumerate::{enumerate_all, ConstraintConfig, IoShape};
use cidre_core::pipeline::{analyze, execute, run, verify, write_artifacts, Program, Report};
use proptest::prelude::*;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn toy_config(out: &Path, io: &str) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.input = Some(fixture("toy.lst"));
    cfg.output = out.to_path_buf();
    cfg.set("constraints.io", io).unwrap();
    cfg
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(dir).unwrap().display().to_string();
                files.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    files
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = toy_config(&out, "3,2");
    run(&cfg).unwrap();
    let first = snapshot(&out);
    std::fs::remove_dir_all(&out).unwrap();
    run(&cfg).unwrap();
    assert_eq!(first, snapshot(&out));
    assert!(first.contains_key("report.json"));
    assert!(first.contains_key("model/index"));
    assert!(first.keys().any(|k| k.starts_with("graphs/")));
}

#[test]
fn thread_count_does_not_change_results() {
    let tmp = tempfile::tempdir().unwrap();
    let mut outs = Vec::new();
    for jobs in [1usize, 8] {
        let dir = tmp.path().join(format!("j{jobs}"));
        let mut cfg = toy_config(&dir, "3,2");
        cfg.jobs = jobs;
        let out = execute(&cfg).unwrap();
        write_artifacts(&out).unwrap();
        outs.push((dir, out.report));
    }
    let (a, b) = (&outs[0], &outs[1]);
    let strip = |r: &Report| {
        let mut v = serde_json::to_value(r).unwrap();
        v.as_object_mut().unwrap().remove("config");
        v.as_object_mut().unwrap().remove("config_text");
        v
    };
    assert_eq!(strip(&a.1), strip(&b.1));
    let (sa, sb) = (snapshot(&a.0), snapshot(&b.0));
    for (k, v) in &sa {
        if k != "report.json" {
            assert_eq!(Some(v), sb.get(k), "{k}");
        }
    }
    assert_eq!(sa.len(), sb.len());
}

#[test]
fn report_echo_reproduces_the_configuration() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = toy_config(tmp.path(), "3,1");
    cfg.set("oracle.delay.add", "0.75").unwrap();
    cfg.set("selection.strategy", "greedy").unwrap();
    let out = execute(&cfg).unwrap();
    let mut back = RunConfig::default();
    back.apply_text(&out.report.config_text).unwrap();
    assert_eq!(back.to_text(), cfg.to_text());
    let parsed = Report::from_json(&out.report.to_json()).unwrap();
    assert_eq!(parsed.to_json(), out.report.to_json());
}

#[test]
fn relaxing_the_shape_never_shrinks_candidates() {
    for liveness in [Liveness::Conservative, Liveness::Global] {
        let mut cfg = RunConfig::default();
        cfg.input = Some(fixture("toy.lst"));
        cfg.liveness = liveness;
        let program = Program::load(&cfg).unwrap();
        let mut last = (0, 0);
        for (i, o) in [(2, 1), (3, 1), (3, 2)] {
            let a = analyze(&program, &ConstraintConfig::with_io(IoShape::new(i, o).unwrap())).unwrap();
            let n = a.patterns.iter().map(Vec::len).sum::<usize>();
            eprintln!("{liveness:?} ({i},{o}): patterns {n} classes {}", a.classes.len());
            assert!(n >= last.0);
            last = (n, a.classes.len());
        }
    }
}

#[test]
fn verify_accepts_every_shape() {
    let tmp = tempfile::tempdir().unwrap();
    for io in ["2,1", "3,1", "3,2"] {
        let out = execute(&toy_config(tmp.path(), io)).unwrap();
        let v = verify(&out.report).unwrap();
        assert!(v.exact && v.matches_report, "{io}");
        assert_eq!(v.replay_cycles, v.f_total - v.saved);
        let s = &out.report.selection;
        if !s.selected.is_empty() {
            assert!(s.t_ex_custom_ns <= s.t_ex_base_ns);
            assert!(s.cycle_speedup >= 1.0);
        }
    }
}

fn toy_classes(io: (u8, u8)) -> Vec<cidre_core::canon::IsoClass> {
    let mut cfg = RunConfig::default();
    cfg.input = Some(fixture("toy.lst"));
    let program = Program::load(&cfg).unwrap();
    let c = ConstraintConfig::with_io(IoShape::new(io.0, io.1).unwrap());
    let patterns = enumerate_all(&program.dfgs, &c).unwrap();
    group(&program.dfgs, &patterns)
}

fn entries<'a>(classes: &'a [cidre_core::canon::IsoClass], pick: &[usize]) -> Vec<ModelEntry<'a>> {
    let mut alloc = EncodingAllocator::new(IoShape::new(3, 2).unwrap());
    pick.iter()
        .enumerate()
        .map(|(k, &c)| ModelEntry {
            name: format!("cid_{k}"),
            encoding: alloc.allocate(&classes[c].pattern).unwrap(),
            pattern: &classes[c].pattern,
            cf: &classes[c].cf,
            merit: 0,
        })
        .collect()
}

#[test]
fn external_stub_round_trips_exactly() {
    let classes = toy_classes((3, 2));
    let tmp = tempfile::tempdir().unwrap();
    let script = r#"test -f "$1/index" || exit 3; printf 'clock_period_ns=1.3125\narea_units=123.0625\n' > "$2""#;
    let cfg = OracleConfig {
        mode: OracleMode::External(ExternalOracle {
            command: vec!["sh".into(), "-c".into(), script.into(), "stub".into()],
            workdir: tmp.path().to_path_buf(),
        }),
        ..OracleConfig::default()
    };
    let oracle = CostOracle::new(cfg.clone()).unwrap();
    assert_eq!(oracle.estimate(&[]).unwrap(), cfg.baseline());
    assert!(!tmp.path().join("query-0001").exists());
    let est = oracle.estimate(&entries(&classes, &[0, 1])).unwrap();
    assert!(tmp.path().join("query-0002/model/index").exists());
    assert_eq!(est.t_clk_ns, 1.3125);
    assert_eq!(est.area, 123.0625);
    assert!(!est.met_baseline_timing);
    assert_eq!(oracle.calls(), 2);

    let failing = OracleConfig {
        mode: OracleMode::External(ExternalOracle {
            command: vec!["sh".into(), "-c".into(), "exit 9".into()],
            workdir: tmp.path().join("fail"),
        }),
        ..OracleConfig::default()
    };
    assert!(CostOracle::new(failing).unwrap().estimate(&entries(&classes, &[0])).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig {
        cases: 200,
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn adding_a_class_never_lowers_cost(
        picks in proptest::collection::vec(0usize..1000, 0..6),
        extra in 0usize..1000,
    ) {
        let classes = toy_classes((3, 2));
        let n = classes.len();
        let mut set: Vec<usize> = picks.iter().map(|p| p % n).collect();
        set.sort();
        set.dedup();
        let extra = extra % n;
        prop_assume!(!set.contains(&extra));
        let oracle = CostOracle::new(OracleConfig::default()).unwrap();
        let before = oracle.estimate(&entries(&classes, &set)).unwrap();
        set.push(extra);
        let after = oracle.estimate(&entries(&classes, &set)).unwrap();
        prop_assert!(after.t_clk_ns >= before.t_clk_ns);
        prop_assert!(after.area >= before.area);
        prop_assert!(before.t_clk_ns >= oracle.config().t_clk_base_ns);
    }
}
