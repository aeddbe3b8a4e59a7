//! End-to-end checks of the `ail` binary and the run loop.

use std::path::Path;
use std::process::Command;

use ail_core::classes::{eluder_dimension, normed_star_number, ComplexityQuery, SearchCap};
use ail_core::rng::RngStream;
use ail_harness::{load_config, parse_config, run_experiment};

fn ail(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_ail")).args(args).output().expect("binary runs");
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

const SS: &str = "[experiment]\nkind = \"ss\"\nT = 300\nseed = 5\n[class]\nkind = \"hard-margin\"\nsize = 8\ncontexts = 4\n";

fn quiet(_: &str) {}

#[test]
fn validate_good_config_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "ss.toml", SS);
    assert_eq!(ail(&["validate", "--config", &cfg]).0, 0);
}

#[test]
fn run_without_config_prints_usage_and_exits_one() {
    let (code, err) = ail(&["run"]);
    assert_eq!(code, 1);
    assert!(err.contains("Usage: ail run"), "{err}");
}

#[test]
fn config_errors_exit_one_with_lines() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", "[experiment]\nkind = \"il\"\nT = 5\nseed = 1\ndelta = 1.5\n");
    let (code, err) = ail(&["validate", "--config", &cfg]);
    assert_eq!(code, 1);
    assert!(err.contains("line 1: missing required key `H`") && err.contains("line 5: `delta` = 1.5"), "{err}");
    let missing =
        write(dir.path(), "missing.toml", "[experiment]\nkind = \"ss\"\nT = 5\nseed = 1\n[class]\nfile = \"nope.toml\"\n");
    assert_eq!(ail(&["run", "--config", &missing]).0, 1);
}

#[test]
fn unwritable_output_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "ss.toml", SS);
    let blocker = write(dir.path(), "file", "");
    let out = format!("{blocker}/sub");
    assert_eq!(ail(&["run", "--config", &cfg, "--out", &out, "--quiet"]).0, 2);
}

#[test]
fn seeded_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "ss.toml", SS);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let c = dir.path().join("c");
    for (out, seed) in [(&a, "7"), (&b, "7"), (&c, "8")] {
        assert_eq!(ail(&["run", "--config", &cfg, "--seed", seed, "--out", out.to_str().unwrap(), "--quiet"]).0, 0);
    }
    for f in ["runlog.csv", "summary.toml", "regret.svg", "queries.svg"] {
        let x = std::fs::read(a.join(f)).unwrap();
        assert_eq!(x, std::fs::read(b.join(f)).unwrap(), "{f}");
        if f == "runlog.csv" {
            assert_ne!(x, std::fs::read(c.join(f)).unwrap());
        }
    }
}

fn summary_value<'a>(summary: &'a str, key: &str) -> &'a str {
    summary.lines().find_map(|l| l.strip_prefix(&format!("{key} = "))).unwrap_or_else(|| panic!("{key} missing"))
}

#[test]
fn summary_totals_match_the_csv() {
    for text in [
        SS.to_string(),
        SS.replace("\"ss\"", "\"bandit\""),
        "[experiment]\nkind = \"il\"\nT = 20\nH = 4\nseed = 2\n".to_string(),
        "[experiment]\nkind = \"il-m\"\nT = 20\nH = 3\nseed = 2\n[env]\nregion_len = 3\nmembers = 3\n".to_string(),
    ] {
        let cfg = parse_config(&text).unwrap();
        let b = run_experiment(&cfg, &quiet).unwrap();
        let (csv, per_row): (&str, fn(&[&str]) -> f64) = match b.get("runlog.csv") {
            Some(c) => (c, |f| f[7].parse().unwrap()),
            None => (b.get("il_runlog.csv").unwrap(), |f| f[8].parse::<f64>().unwrap() - f[7].parse::<f64>().unwrap()),
        };
        let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
        let regret = rows.iter().fold(0.0, |acc, r| acc + per_row(r));
        let queries = rows.iter().filter(|r| r[if b.get("runlog.csv").is_some() { 3 } else { 4 }] == "1").count();
        let s = b.get("summary.toml").unwrap();
        assert_eq!(summary_value(s, "Reg_T").parse::<f64>().unwrap(), regret, "{text}");
        assert_eq!(summary_value(s, "N_T").parse::<usize>().unwrap(), queries);
        let t_eps: Vec<usize> = if b.get("runlog.csv").is_some() {
            summary_value(s, "T_eps").trim_matches(|c| c == '[' || c == ']').split(", ").map(|v| v.parse().unwrap()).collect()
        } else {
            vec![]
        };
        assert!(t_eps.windows(2).all(|w| w[0] <= w[1]), "T_eps nonincreasing as eps decreases");
    }
}

#[test]
fn bandit_csv_has_extra_columns() {
    let cfg = parse_config(&SS.replace("\"ss\"", "\"bandit\"")).unwrap();
    let b = run_experiment(&cfg, &quiet).unwrap();
    assert_eq!(
        b.get("runlog.csv").unwrap().lines().next().unwrap(),
        "t,context,action,queried,label,width,truth_margin,inst_regret,cum_regret,cum_queries,width_w,candidates,xi"
    );
}

#[test]
fn complexity_summary_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "class.toml",
        "kind = \"finite\"\nK = 2\nmembers = [\n [[0.7, 0.3], [0.4, 0.6], [0.5, 0.5]],\n [[0.3, 0.7], [0.6, 0.4], [0.45, 0.55]],\n [[0.7, 0.3], [0.6, 0.4], [0.5, 0.5]],\n]\n",
    );
    let cfg_path = write(
        dir.path(),
        "c.toml",
        "[experiment]\nkind = \"complexity\"\nseed = 0\nbeta = 0.1\n[class]\nfile = \"class.toml\"\n",
    );
    let cfg = load_config(Path::new(&cfg_path)).unwrap();
    let b = run_experiment(&cfg, &quiet).unwrap();
    let s = b.get("summary.toml").unwrap();
    let class = cfg.class.as_ref().unwrap().def.build(&RngStream::new(0)).unwrap();
    let q = ComplexityQuery { beta: 0.1, zeta: 0.5, truth: 0 };
    assert_eq!(summary_value(s, "eluder"), eluder_dimension(&class, &q, &SearchCap::default()).unwrap().to_string());
    assert_eq!(summary_value(s, "normed_star"), normed_star_number(&class, &q, &SearchCap::default()).unwrap().to_string());
}

#[test]
fn replicates_fan_out_into_seed_directories() {
    let cfg = parse_config(&SS.replace("seed = 5", "seed = 5\nreplicates = 3")).unwrap();
    let b = run_experiment(&cfg, &quiet).unwrap();
    let single = run_experiment(&parse_config(&SS.replace("seed = 5", "seed = 6")).unwrap(), &quiet).unwrap();
    assert_eq!(b.get("seed-6/runlog.csv"), single.get("runlog.csv"));
    assert!(b.get("seed-7/summary.toml").is_some());
}

#[test]
fn shipped_configs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for e in std::fs::read_dir(&dir).unwrap() {
        let p = e.unwrap().path();
        if p.extension().is_some_and(|x| x == "toml") {
            load_config(&p).unwrap_or_else(|err| panic!("{}: {err}", p.display()));
            n += 1;
        }
    }
    assert!(n >= 9);
}
