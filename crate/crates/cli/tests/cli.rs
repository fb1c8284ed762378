use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn biharm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_biharm")).args(args).output().expect("binary runs")
}

fn lines(out: &Output) -> Vec<Value> {
    String::from_utf8_lossy(&out.stdout).lines().map(|l| serde_json::from_str(l).expect("JSON line")).collect()
}

fn check<'a>(lines: &'a [Value], name: &str) -> &'a Value {
    lines.iter().find(|l| l["check"] == name).unwrap_or_else(|| panic!("no `{name}` line"))
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn kernel_reports_checks_with_resolved_config() {
    let out = biharm(&["kernel", "--dim", "1", "--eta-max", "20"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let ls = lines(&out);
    let c = check(&ls, "conservation");
    assert_eq!(c["pass"], true);
    assert!((c["mass"].as_f64().unwrap() - 1.0).abs() < 1e-8);
    assert_eq!(c["config"]["subcommand"], "kernel");
    assert_eq!(c["config"]["params"]["dim"], 1);
    assert_eq!(c["config"]["params"]["eta_max"].as_f64(), Some(20.0));
    assert!(check(&ls, "sign_changes")["count"].as_u64().unwrap() >= 3);
    assert_eq!(ls.last().unwrap()["check"], "summary");
}

#[test]
fn failed_check_exits_one() {
    // the literal two-dimensional decay fit misses the 4/3 band
    let out = biharm(&["kernel", "--dim", "2", "--eta-max", "20"]);
    assert_eq!(out.status.code(), Some(1));
    let ls = lines(&out);
    assert_eq!(check(&ls, "decay_fit")["pass"], false);
    assert_eq!(ls.last().unwrap()["pass"], false);
}

#[test]
fn config_errors_exit_two_and_name_the_key() {
    for (args, key) in [
        (vec!["kernel", "--dim", "-1"], "dim"),
        (vec!["kernel", "--dim", "x"], "dim"),
        (vec!["kernel"], "dim"),
        (vec!["kernel", "--dim", "1", "--colour", "red"], "colour"),
        (vec!["simulate", "--theta", "1.5"], "theta"),
        (vec!["weights", "--mode", "sideways"], "mode"),
    ] {
        let out = biharm(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(stderr(&out).contains(&format!("`{key}`")), "{args:?}: {}", stderr(&out));
        assert!(out.stdout.is_empty());
    }
}

#[test]
fn module_preconditions_exit_two() {
    let out = biharm(&["weights", "--mode", "l2decay", "--r", "4", "--horizon", "9"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("horizon"));
    let out = biharm(&["simulate", "--model", "hyperbolic", "--dim", "3", "--boundary", "clamped"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn config_file_merges_under_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# short run\ntheta=0.5\nt_end = 0.01\nnodes=101\nr_max=5\n").unwrap();
    let c = cfg.to_str().unwrap();
    let out = biharm(&["simulate", "--config", c, "--theta", "1.0"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let p = &lines(&out)[0]["config"]["params"];
    assert_eq!(p["theta"].as_f64(), Some(1.0));
    assert_eq!(p["t_end"].as_f64(), Some(0.01));
    assert_eq!(p["nodes"], 101);

    std::fs::write(&cfg, "theta=0.5\nthetta=1\n").unwrap();
    let out = biharm(&["simulate", "--config", c]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("`thetta`"));

    std::fs::write(&cfg, "nodes=many\n").unwrap();
    let out = biharm(&["simulate", "--config", c]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("`nodes`"));
}

#[test]
fn io_errors_exit_three() {
    let out = biharm(&["kernel", "--dim", "1", "--out", "/nonexistent-dir/report.jsonl"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("/nonexistent-dir/report.jsonl"));
    let out = biharm(&["kernel", "--config", "/nonexistent-dir/run.cfg"]);
    assert_eq!(out.status.code(), Some(3));
}

fn simulate_files(dir: &Path, tag: &str) -> (Vec<u8>, Vec<u8>, Vec<u8>) {
    let json = dir.join(format!("{tag}.jsonl"));
    let csv = dir.join(format!("{tag}.csv"));
    let out = biharm(&[
        "simulate",
        "--init",
        "bumps",
        "--seed",
        "7",
        "--r-max",
        "5",
        "--nodes",
        "161",
        "--t-end",
        "0.05",
        "--outputs",
        "2",
        "--out",
        json.to_str().unwrap(),
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    (out.stdout, std::fs::read(json).unwrap(), std::fs::read(csv).unwrap())
}

#[test]
fn identical_config_gives_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let a = simulate_files(dir.path(), "a");
    let b = simulate_files(dir.path(), "b");
    assert_eq!(a.0, a.1, "file copy of the JSON lines matches stdout");
    assert_eq!(a.0.len(), b.0.len());
    // the resolved config names the output paths, so compare with them blanked
    let blank = |v: &[u8]| String::from_utf8_lossy(v).replace("/a.", "/x.").replace("/b.", "/x.");
    assert_eq!(blank(&a.0), blank(&b.0));
    assert_eq!(a.2, b.2);

    let text = String::from_utf8(a.2).unwrap();
    let mut rows = text.lines();
    assert_eq!(rows.next(), Some("t,r,u"));
    let first: Vec<&str> = rows.next().unwrap().split(',').collect();
    assert_eq!(first.len(), 3);
    assert_eq!(text.lines().count(), 1 + 3 * 161);
}

#[test]
fn reals_carry_seventeen_significant_digits() {
    let out = biharm(&["kernel", "--dim", "1"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let mass = text.split("\"mass\":").nth(1).unwrap().split(',').next().unwrap();
    let mantissa = mass.trim_start_matches('-').split('e').next().unwrap().replace('.', "");
    assert_eq!(mantissa.len(), 17, "{mass}");
}

#[test]
fn counterexample_grows_linearly() {
    let out = biharm(&["counterexample", "--intervals", "1000"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let ls = lines(&out);
    let g = check(&ls, "linear_growth");
    let ratio = g["linf_final"].as_f64().unwrap() / g["linf_initial"].as_f64().unwrap();
    assert!((ratio - 10.0).abs() < 1e-9);
    assert!(check(&ls, "bounded")["f_sup"].as_f64().unwrap() > 0.0);
}

#[test]
fn suite_reports_criteria() {
    let out = biharm(&["suite", "--criteria", "1,10"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let ls = lines(&out);
    let ids: Vec<u64> = ls.iter().filter(|l| l["check"] == "criterion").map(|l| l["id"].as_u64().unwrap()).collect();
    assert_eq!(ids, vec![1, 10]);
    // criterion 3 is a recorded deviation and still counts as a failure here
    let out = biharm(&["suite", "--criteria", "3"]);
    assert_eq!(out.status.code(), Some(1));
    let l = &lines(&out)[0];
    assert_eq!(l["known_deviation"], true);
    assert_eq!(l["pass"], false);
    let out = biharm(&["suite", "--criteria", "12"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn thread_cap_from_environment() {
    let run = |v: &str| {
        Command::new(env!("CARGO_BIN_EXE_biharm"))
            .args(["weights", "--mode", "calibrate", "--r-max", "10", "--nodes", "401"])
            .env("BIHARM_THREADS", v)
            .output()
            .unwrap()
    };
    let one = run("1");
    assert_eq!(one.status.code(), Some(0), "{}", stderr(&one));
    assert_eq!(one.stdout, run("3").stdout);
    assert_eq!(run("0").status.code(), Some(2));
}
