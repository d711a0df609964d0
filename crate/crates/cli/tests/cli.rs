use std::path::Path;
use std::process::{Command, Output};

use gatefind_cli::artifacts::{self, Summary};

const SMALL: &str = "[pulse]\nn_terms = 1\nduration_ns = 5.0\n[optimizer]\nmax_goat_iterations = 3\n";

fn gatefind(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gatefind"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn gatefind")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path)
        .unwrap()
        .records()
        .map(Result::unwrap)
        .collect()
}

#[test]
fn optimize_writes_a_valid_run_directory() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("small.toml"), SMALL).unwrap();
    let o = gatefind(
        tmp.path(),
        &[
            "--preset",
            "desk-g2",
            "--config",
            "small.toml",
            "--out",
            "run",
            "optimize",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let run = tmp.path().join("run");
    for f in [
        artifacts::CONFIG,
        artifacts::SUMMARY,
        artifacts::TRACE,
        artifacts::THETA_REFRESH,
        artifacts::PULSE,
    ] {
        assert!(run.join(f).exists(), "{f}");
    }
    let s = Summary::read(&run.join(artifacts::SUMMARY)).unwrap();
    assert_eq!(s.kind, "g2");
    assert_eq!(s.alpha.len(), 3);
    assert_eq!(s.theta.as_ref().map(Vec::len), Some(18));
    assert!(s.iterations <= 3);
    assert_eq!(rows(&run.join(artifacts::TRACE)).len(), s.iterations + 1);

    let o = gatefind(tmp.path(), &["schema-check", "run"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn resolved_config_reproduces_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("small.toml"), SMALL).unwrap();
    let o = gatefind(
        tmp.path(),
        &[
            "--preset",
            "desk-g1",
            "--seed",
            "4",
            "--config",
            "small.toml",
            "--out",
            "a",
            "optimize",
        ],
    );
    assert_eq!(code(&o), 0);
    let o = gatefind(
        tmp.path(),
        &["--config", "a/config.resolved.toml", "--out", "b", "optimize"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let a = Summary::read(&tmp.path().join("a").join(artifacts::SUMMARY)).unwrap();
    let b = Summary::read(&tmp.path().join("b").join(artifacts::SUMMARY)).unwrap();
    assert_eq!(a.alpha, b.alpha);
    assert_eq!(a.final_objective, b.final_objective);
}

#[test]
fn config_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("bad.toml"), "[pulse]\nn_terms = 2\nwidth = 3.0\n").unwrap();
    let o = gatefind(tmp.path(), &["--config", "bad.toml", "optimize"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("width"));

    let o = gatefind(
        tmp.path(),
        &["--preset", "desk-g0", "--out", "p", "propagate", "--state", "ground"],
    );
    assert_eq!(code(&o), 2, "propagate without a pulse");
    let o = gatefind(
        tmp.path(),
        &[
            "--preset",
            "desk-g0",
            "--out",
            "p",
            "propagate",
            "--alpha",
            "0,0,0",
            "--state",
            "31",
        ],
    );
    assert_eq!(code(&o), 2, "level out of range");
}

#[test]
fn exhausted_step_budget_exits_with_three() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = format!("{SMALL}[integrator]\nmax_steps = 10\n");
    std::fs::write(tmp.path().join("tiny.toml"), cfg).unwrap();
    let o = gatefind(
        tmp.path(),
        &[
            "--preset",
            "desk-g0",
            "--config",
            "tiny.toml",
            "--out",
            "run",
            "optimize",
        ],
    );
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn schema_check_flags_missing_files() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::create_dir(tmp.path().join("empty")).unwrap();
    let o = gatefind(tmp.path(), &["schema-check", "empty"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn gradcheck_reports_one_row_per_parameter() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("g.toml"), "[pulse]\nn_terms = 2\nduration_ns = 10.0\n").unwrap();
    let o = gatefind(
        tmp.path(),
        &[
            "--preset",
            "desk-g1",
            "--config",
            "g.toml",
            "--out",
            "g",
            "gradcheck",
            "--alpha",
            "0,0.4,1.2,0.02,0.9,0.3",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let r = rows(&tmp.path().join("g").join(artifacts::GRADCHECK));
    assert_eq!(r.len(), 6);
    // zero amplitude kills the first term's freq and phase sensitivity
    for row in &r[1..3] {
        let analytic: f64 = row[2].parse().unwrap();
        let fd: f64 = row[3].parse().unwrap();
        assert!(analytic.abs() < 1e-8 && fd.abs() < 1e-8, "{row:?}");
    }
    for row in &r {
        assert!(row[5].parse::<f64>().unwrap() <= 1e-3, "{row:?}");
    }
}

#[test]
fn gradcheck_failure_exits_with_four() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("g.toml"), "[pulse]\nn_terms = 1\nduration_ns = 5.0\n").unwrap();
    // a huge step makes the finite differences useless
    let o = gatefind(
        tmp.path(),
        &[
            "--preset",
            "desk-g0",
            "--config",
            "g.toml",
            "--out",
            "g",
            "gradcheck",
            "--alpha",
            "0.05,0.3,1.0",
            "--step",
            "0.5",
        ],
    );
    assert_eq!(code(&o), 4);
}

#[test]
fn propagate_starts_from_the_requested_state() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("p.toml"), "[pulse]\nduration_ns = 20.0\n").unwrap();
    let o = gatefind(
        tmp.path(),
        &[
            "--preset",
            "desk-g0",
            "--config",
            "p.toml",
            "--out",
            "p",
            "propagate",
            "--alpha",
            "0.02,0.1,0,-0.01,0.3,1,0.015,0.5,2,0.0,0.7,0,0.01,0.2,0.3,-0.02,0.4,0.5",
            "--state",
            "11",
            "--samples",
            "21",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let path = tmp.path().join("p").join(artifacts::POPULATIONS);
    let mut rdr = csv::Reader::from_path(&path).unwrap();
    assert_eq!(rdr.headers().unwrap().get(5), Some("p_11"));
    let r = rows(&path);
    assert_eq!(r.len(), 21);
    assert_eq!(&r[0][5], "1e0");
    let end: f64 = r[20][0].parse().unwrap();
    assert!((end - 20.0).abs() < 1e-12);
}

#[test]
fn spectrum_peaks_near_the_carrier() {
    let tmp = tempfile::tempdir().unwrap();
    let o = gatefind(
        tmp.path(),
        &[
            "--preset",
            "desk-g0",
            "--out",
            "s",
            "spectrum",
            "--alpha",
            "0.01,0.2,0.0",
            "--points",
            "65536",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = rows(&tmp.path().join("s").join(artifacts::SPECTRUM));
    let (f, _) = r
        .iter()
        .map(|row| (row[0].parse::<f64>().unwrap(), row[1].parse::<f64>().unwrap()))
        .fold((0.0, 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
    assert!((f - 4.914).abs() < 0.1, "peak at {f} GHz");
}
