use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use entmdi::config::*;
use entmdi::output::HEADER;
use proptest::prelude::*;

fn preset(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../presets").join(name)
}

fn entmdi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_entmdi")).args(args).output().expect("binary runs")
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

#[test]
fn presets_carry_the_published_parameters() {
    let f3 = ScenarioConfig::load(&preset("fig3.cfg")).unwrap();
    assert_eq!((f3.detector.eta_d, f3.detector.y0), (0.145, 6.02e-6));
    assert_eq!((f3.misalignment.e_d, f3.f_e, f3.mode), (0.03, 1.16, ModeKind::Asymptotic));
    let f4 = ScenarioConfig::load(&preset("fig4.cfg")).unwrap();
    assert_eq!((f4.detector.eta_d, f4.detector.y0), (0.93, 1e-6));
    assert_eq!(f4.mode, ModeKind::Finite);
    let fin = f4.finite.unwrap();
    assert_eq!((fin.n_pulses, fin.epsilon), (1e15, 1e-10));
    assert_eq!(fin.weak_decoy, WeakDecoy::Keyword(DecoyKeyword::Optimize));
    let f4a = ScenarioConfig::load(&preset("fig4_asymptotic.cfg")).unwrap();
    assert_eq!((f4a.detector, f4a.mode), (f4.detector, ModeKind::Asymptotic));
}

fn sampling() -> impl Strategy<Value = Sampling> {
    prop_oneof![
        Just(Sampling::Fixed),
        (any::<u64>(), 1u32..1000).prop_map(|(seed, draws)| Sampling::MonteCarlo { seed, draws }),
    ]
}

fn finite() -> impl Strategy<Value = FiniteConfig> {
    (1.0f64..1e18, 1e-20f64..0.5, prop_oneof![Just(None), (0.0f64..1.0).prop_map(Some)], 0.0f64..0.01).prop_map(
        |(n_pulses, epsilon, weak, vacuum_decoy)| FiniteConfig {
            n_pulses,
            epsilon,
            weak_decoy: match weak {
                Some(w) => WeakDecoy::Value(vacuum_decoy + 0.01 + w * 0.9),
                None => WeakDecoy::Keyword(DecoyKeyword::Optimize),
            },
            vacuum_decoy,
        },
    )
}

fn config() -> impl Strategy<Value = ScenarioConfig> {
    (
        (0.0f64..=1.0, 0.0f64..1e-3, 0.0f64..0.5, sampling()),
        (0.01f64..1.0, 1.0f64..2.0, 1u32..=8, 0.0f64..1.0),
        proptest::option::of(finite()),
    )
        .prop_map(|((eta_d, y0, e_d, sampling), (alpha, f_e, n_max, tail), finite)| ScenarioConfig {
            mode: if finite.is_some() { ModeKind::Finite } else { ModeKind::Asymptotic },
            f_e,
            detector: DetectorConfig { eta_d, y0 },
            misalignment: MisalignmentConfig { e_d, sampling },
            fiber: FiberConfig { alpha_db_per_km: alpha },
            truncation: TruncationConfig { n_max, tail_tolerance: tail },
            finite,
        })
}

proptest! {
    #[test]
    fn config_round_trips(c in config()) {
        prop_assert!(c.validate().is_ok());
        let s = c.to_toml();
        let back = ScenarioConfig::parse(&s).map_err(|e| TestCaseError::fail(format!("{e}\n{s}")))?;
        prop_assert_eq!(back, c);
    }
}

#[test]
fn malformed_config_exits_2_and_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let src = std::fs::read_to_string(preset("fig3.cfg")).unwrap();
    let cases = [
        (src.replace("eta_d = 0.145", "eta_d = 1.45"), "detector.eta_d"),
        (src.replace("y0 = 6.02e-6", "y0 = 6.02e-6\ndark_rate = 1"), "dark_rate"),
        (src.replace("n_max = 4", "n_max = \"four\""), "truncation.n_max"),
        (src.replace("mode = \"asymptotic\"", "mode = \"finite\""), "mode"),
        (src.replace("[detector]", "[detector"), ".cfg:5:"),
    ];
    for (i, (body, key)) in cases.iter().enumerate() {
        let path = dir.path().join(format!("bad{i}.cfg"));
        std::fs::write(&path, body).unwrap();
        let out = entmdi(&["point", path.to_str().unwrap(), "--loss-db", "0"]);
        assert_eq!(out.status.code(), Some(2), "{key}: {}", text(&out.stderr));
        let err = text(&out.stderr);
        assert!(err.contains(key), "{key}: {err}");
        assert!(err.contains(&format!("bad{i}.cfg:")), "{err}");
    }
}

#[test]
fn missing_config_and_bad_arguments_exit_2() {
    assert_eq!(entmdi(&["point", "/nonexistent.cfg", "--loss-db", "0"]).status.code(), Some(2));
    let f3 = preset("fig3.cfg");
    assert_eq!(entmdi(&["scan", f3.to_str().unwrap(), "--loss-range", "0:5"]).status.code(), Some(2));
    assert_eq!(entmdi(&["point", f3.to_str().unwrap(), "--loss-db", "-3"]).status.code(), Some(2));
    assert_eq!(entmdi(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(entmdi(&["--help"]).status.code(), Some(0));
}

#[test]
fn unwritable_output_exits_1() {
    let f3 = preset("fig3.cfg");
    let out = entmdi(&["scan", f3.to_str().unwrap(), "--loss-range", "10:10:1", "--out", "/nonexistent/dir/x.csv"]);
    assert_eq!(out.status.code(), Some(1), "{}", text(&out.stderr));
}

#[test]
fn point_prints_summary_and_record() {
    let f3 = preset("fig3.cfg");
    let out = entmdi(&["point", f3.to_str().unwrap(), "--loss-db", "0", "--fiber"]);
    assert_eq!(out.status.code(), Some(0));
    let s = text(&out.stdout);
    assert!(s.contains("key rate") && s.contains("km"));
    let lines: Vec<&str> = s.lines().collect();
    assert_eq!(lines[lines.len() - 2], format!("{},fiber_km", HEADER.join(",")));
    let far = entmdi(&["point", f3.to_str().unwrap(), "--loss-db", "200"]);
    assert_eq!(far.status.code(), Some(0));
    let s = text(&far.stdout);
    assert!(s.contains("dark_count_floor"), "{s}");
    assert!(s.lines().last().unwrap().starts_with("200,0e0,"));
}

#[test]
fn scan_output_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let f3 = preset("fig3.cfg");
    let mut files = Vec::new();
    for (i, threads) in ["1", "2", "1"].iter().enumerate() {
        let path = dir.path().join(format!("c{i}.csv"));
        let out = Command::new(env!("CARGO_BIN_EXE_entmdi"))
            .args(["scan", f3.to_str().unwrap(), "--loss-range", "0:30:10", "--out", path.to_str().unwrap()])
            .env("ENTMDI_THREADS", threads)
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
        files.push(std::fs::read(&path).unwrap());
    }
    assert!(files.windows(2).all(|w| w[0] == w[1]));
    let s = text(&files[0]);
    let lines: Vec<&str> = s.lines().collect();
    assert_eq!(lines[0], "loss_db,key_rate,mu_a,mu_b,mu_c,split_a,split_b,q_z,e_z,e11_x");
    assert_eq!(lines.len(), 5);
    let losses: Vec<&str> = lines[1..].iter().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(losses, ["0", "10", "20", "30"]);
}

#[test]
fn degenerate_range_gives_one_row() {
    let f3 = preset("fig3.cfg");
    let out = entmdi(&["scan", f3.to_str().unwrap(), "--loss-range", "20:20:1"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(text(&out.stdout).lines().count(), 2);
}

#[test]
fn invalid_thread_count_is_a_config_error() {
    let f3 = preset("fig3.cfg");
    let out = Command::new(env!("CARGO_BIN_EXE_entmdi"))
        .args(["point", f3.to_str().unwrap(), "--loss-db", "0"])
        .env("ENTMDI_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("ENTMDI_THREADS"));
}

#[test]
fn compare_reports_differences() {
    let dir = tempfile::tempdir().unwrap();
    let f3 = preset("fig3.cfg");
    let ent = dir.path().join("ent.csv");
    let base = dir.path().join("base.csv");
    let run = |extra: &[&str], path: &Path| {
        let mut args = vec!["scan", f3.to_str().unwrap(), "--loss-range", "0:60:20", "--out", path.to_str().unwrap()];
        args.extend_from_slice(extra);
        assert_eq!(entmdi(&args).status.code(), Some(0));
    };
    run(&[], &ent);
    run(&["--single-relay"], &base);

    let same = entmdi(&["compare", ent.to_str().unwrap(), ent.to_str().unwrap()]);
    assert_eq!(same.status.code(), Some(0));
    let s = text(&same.stdout);
    assert!(s.contains("cutoff difference (b - a): 0 dB") && s.contains("largest rate difference: 0e0"), "{s}");
    assert!(s.contains("crossover: none"));

    let joined = dir.path().join("joined.csv");
    let diff = entmdi(&["compare", ent.to_str().unwrap(), base.to_str().unwrap(), "--out", joined.to_str().unwrap()]);
    assert_eq!(diff.status.code(), Some(0));
    let s = text(&diff.stdout);
    // the two-fold curve starts higher and dies earlier
    assert!(s.contains("crossover: a is higher from"), "{s}");
    let rows = std::fs::read_to_string(&joined).unwrap();
    let first: Vec<f64> = rows.lines().nth(1).unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    assert!(first[1] < first[2]);

    let other = dir.path().join("other.csv");
    std::fs::write(&other, std::fs::read_to_string(&ent).unwrap().replace("\n0,", "\n1,").replace("\n20,", "\n21,").replace("\n40,", "\n41,").replace("\n60,", "\n61,")).unwrap();
    let disjoint = entmdi(&["compare", ent.to_str().unwrap(), other.to_str().unwrap()]);
    assert_eq!(disjoint.status.code(), Some(0));
    assert!(text(&disjoint.stderr).contains("share no loss values"));

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "loss,rate\n0,1\n").unwrap();
    let mismatch = entmdi(&["compare", ent.to_str().unwrap(), bad.to_str().unwrap()]);
    assert_eq!(mismatch.status.code(), Some(1));
    assert!(text(&mismatch.stderr).contains("header"));
}
