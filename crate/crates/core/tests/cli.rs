use std::path::PathBuf;
use std::process::{Command, Output};

use mcs_term::io::{parse_mcs, print_mcs};

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn example(name: &str) -> String {
    root().join("examples").join(name).display().to_string()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mcsterm")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 output")
}

fn golden(name: &str) -> String {
    std::fs::read_to_string(root().join("tests/golden").join(name)).expect("golden file")
}

#[test]
fn worked_examples_exit_zero_with_every_algorithm() {
    for f in ["ex21.mcs", "ex22.mcs", "ex23.mcs", "ex24.mcs", "ex25.mcs"] {
        for alg in ["stable-closure", "idempotent", "general", "cls"] {
            let out = run(&["analyze", &example(f), "--algorithm", alg]);
            assert_eq!(code(&out), 0, "{f} with {alg}");
        }
    }
}

#[test]
fn loop_geq_witness_has_requested_length() {
    let out = run(&["analyze", &example("loop_geq.mcs"), "--witness", "50", "--json"]);
    assert_eq!(code(&out), 1);
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["verdict"], "nonterminating");
    assert_eq!(v["witness"]["prefix"].as_array().unwrap().len(), 50);
}

#[test]
fn rooted_rank_depends_on_root() {
    let rooted = run(&["rank", &example("rooted.mcs"), "--root", "p0"]);
    assert_eq!(code(&rooted), 0);
    assert!(stdout(&rooted).contains("rho(p1)"));
    assert_eq!(code(&run(&["rank", &example("rooted.mcs")])), 1);
    assert_eq!(code(&run(&["rank", &example("rooted.mcs"), "--root", "0"])), 0);
}

#[test]
fn json_matches_golden_files() {
    let cases: [(&str, &[&str]); 6] = [
        ("ex21_analyze.json", &["analyze", "ex21.mcs", "--json"]),
        ("ex22_rank.json", &["rank", "ex22.mcs", "--json"]),
        ("ex25_rank.json", &["rank", "ex25.mcs", "--json"]),
        ("rooted_rank.json", &["rank", "rooted.mcs", "--root", "p0", "--json"]),
        ("rooted_witness.json", &["analyze", "rooted.mcs", "--witness", "10", "--json"]),
        ("loop_geq_witness.json", &["analyze", "loop_geq.mcs", "--witness", "50", "--json"]),
    ];
    for (file, args) in cases {
        let mut args: Vec<String> = args.iter().map(|s| s.to_string()).collect();
        args[1] = example(&args[1]);
        let argv: Vec<&str> = args.iter().map(String::as_str).collect();
        let first = stdout(&run(&argv));
        assert_eq!(first, golden(file), "{file}");
        assert_eq!(first, stdout(&run(&argv)), "{file} is not stable");
    }
}

#[test]
fn json_field_order_is_fixed() {
    let out = stdout(&run(&["analyze", &example("ex22.mcs"), "--json"]));
    let keys = ["\"verdict\"", "\"algorithm\"", "\"rooted\"", "\"witness\"", "\"ranking\""];
    let at: Vec<usize> = keys.iter().map(|k| out.find(k).expect("key present")).collect();
    assert!(at.windows(2).all(|w| w[0] < w[1]));
    assert!(out.contains("\"ranking\":null"));
}

#[test]
fn usage_and_parse_errors_exit_two() {
    let dir = std::env::temp_dir().join(format!("mcsterm-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let bad = dir.join("bad.mcs");
    std::fs::write(&bad, "vars x y\nedge f -> f { x'' > y }\n").unwrap();
    let out = run(&["analyze", bad.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("2:17"));
    assert_eq!(code(&run(&["analyze"])), 2);
    assert_eq!(code(&run(&["analyze", &example("ex21.mcs"), "--algorithm", "fast"])), 2);
    assert_eq!(code(&run(&["analyze", &example("ex21.mcs"), "--root", "nowhere"])), 2);
    assert_eq!(code(&run(&["transform", &example("ex21.mcs")])), 2);
    assert_eq!(code(&run(&["analyze", dir.join("missing.mcs").to_str().unwrap()])), 2);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn transform_output_round_trips() {
    for f in ["ex21.mcs", "ex23.mcs", "rooted.mcs"] {
        for args in [vec!["--stabilize"], vec!["--elaborate"], vec!["--elaborate", "--root", "0"]] {
            let path = example(f);
            let mut argv = vec!["transform", path.as_str()];
            argv.extend(args.iter().copied());
            let out = run(&argv);
            assert_eq!(code(&out), 0);
            let text = stdout(&out);
            let sys = parse_mcs(&text).unwrap_or_else(|e| panic!("{f} {args:?}: {e}\n{text}")).system;
            assert_eq!(print_mcs(&sys), text);
        }
    }
}

#[test]
fn transformed_systems_keep_the_verdict() {
    for f in ["ex22.mcs", "rooted.mcs", "loop_geq.mcs"] {
        let expected = code(&run(&["analyze", &example(f)]));
        for kind in ["--stabilize", "--elaborate"] {
            let text = stdout(&run(&["transform", &example(f), kind]));
            let dir = std::env::temp_dir().join(format!("mcsterm-tr-{}-{f}{kind}", std::process::id()));
            std::fs::write(&dir, text).unwrap();
            assert_eq!(code(&run(&["analyze", dir.to_str().unwrap()])), expected, "{f} {kind}");
            std::fs::remove_file(&dir).unwrap();
        }
    }
}

#[test]
fn shipped_examples_round_trip() {
    for f in ["ex21.mcs", "ex22.mcs", "ex23.mcs", "ex24.mcs", "ex25.mcs", "rooted.mcs", "loop_geq.mcs"] {
        let text = std::fs::read_to_string(example(f)).unwrap();
        let sys = parse_mcs(&text).unwrap().system;
        let again = parse_mcs(&print_mcs(&sys)).unwrap().system;
        assert_eq!(sys, again, "{f}");
    }
}

#[test]
fn selfcheck_small_corpus() {
    let out = run(&["selfcheck", "--seed", "3", "--count", "60"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("60 systems"));
}

#[test]
fn exit_codes_match_json_verdicts_on_corpus() {
    use mcs_term::oracle::{random_corpus, CorpusSpec};
    let corpus = random_corpus(&CorpusSpec { seed: 5, count: 40, ..CorpusSpec::default() }).unwrap();
    let dir = std::env::temp_dir().join(format!("mcsterm-codes-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    for (i, sys) in corpus.iter().enumerate() {
        let path = dir.join(format!("s{i}.mcs"));
        std::fs::write(&path, print_mcs(sys)).unwrap();
        for cmd in ["analyze", "rank"] {
            let out = run(&[cmd, path.to_str().unwrap(), "--json"]);
            let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
            let want = if v["verdict"] == "terminating" { 0 } else { 1 };
            assert_eq!(code(&out), want, "system {i} via {cmd}");
        }
    }
    std::fs::remove_dir_all(&dir).unwrap();
}
