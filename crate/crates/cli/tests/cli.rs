//! End-to-end runs of the `fogbench` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use fogbench_cli::output::{FITS_DIR, MANIFEST, METRICS_DIR, REPORT_DIR, TRACES_DIR};

const SMALL_CONFIG: &str = r#"
seed = 5
frames_per_series = 2
render_scale = 0.1

[fog]
types = ["radiation"]
visibility_ranges_m = [[20.0, 30.0], [50.0, 60.0]]
"#;

fn fogbench(args: &[&str], env_out: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_fogbench"));
    cmd.args(args).env_remove("FOGBENCH_OUT");
    if let Some(dir) = env_out {
        cmd.env("FOGBENCH_OUT", dir);
    }
    cmd.output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn write_config(dir: &Path) -> String {
    let path = dir.join("small.toml");
    fs::write(&path, SMALL_CONFIG).unwrap();
    path.to_string_lossy().into_owned()
}

fn read_tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn full_pipeline_and_idempotent_report() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path());
    let run = tmp.path().join("run");
    let run_s = run.to_str().unwrap();
    for sub in ["simulate", "fit", "metrics", "report"] {
        let out = fogbench(&["--config", &config, "--out", run_s, "--strict", sub], None);
        assert_eq!(code(&out), 0, "{sub}: {}", String::from_utf8_lossy(&out.stderr));
    }
    assert!(run.join(MANIFEST).is_file());
    assert_eq!(fs::read_dir(run.join(TRACES_DIR)).unwrap().count(), 12);
    assert!(run.join(FITS_DIR).join("results.csv").is_file());
    assert!(run.join(METRICS_DIR).join("entropy.csv").is_file());
    let summary = fs::read_to_string(run.join(REPORT_DIR).join("summary.md")).unwrap();
    assert!(!summary.contains("missing"), "{summary}");

    let before = read_tree(&run.join(REPORT_DIR));
    let out = fogbench(&["--out", run_s, "report"], None);
    assert_eq!(code(&out), 0);
    assert_eq!(before, read_tree(&run.join(REPORT_DIR)));
}

#[test]
fn report_lists_gaps_for_partial_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path());
    let run = tmp.path().join("run");
    let run_s = run.to_str().unwrap();
    assert_eq!(code(&fogbench(&["--config", &config, "--out", run_s, "simulate"], None)), 0);
    let out = fogbench(&["--out", run_s, "report"], None);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("missing") && stdout.contains("fit_overlay"), "{stdout}");
    assert!(run.join(REPORT_DIR).join("intensity_vs_depth").is_dir());
}

#[test]
fn out_dir_falls_back_to_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path());
    let env_dir = tmp.path().join("from-env");
    let out = fogbench(&["--config", &config, "simulate"], Some(&env_dir));
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(env_dir.join(MANIFEST).is_file());

    let flag_dir = tmp.path().join("from-flag");
    let out = fogbench(&["--config", &config, "--out", flag_dir.to_str().unwrap(), "simulate"], Some(&env_dir));
    assert_eq!(code(&out), 0);
    assert!(flag_dir.join(MANIFEST).is_file());
}

#[test]
fn validation_errors_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let header_only = tmp.path().join("empty.csv");
    fs::write(&header_only, "depth_m,intensity_mean,intensity_std,target_rho\n").unwrap();
    let out_dir = tmp.path().join("run");
    let out = fogbench(
        &["--out", out_dir.to_str().unwrap(), "fit", "--trace", header_only.to_str().unwrap(), "--visibility", "30"],
        None,
    );
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("schema"));

    let bad = tmp.path().join("bad.toml");
    fs::write(&bad, "seed = 1\nbogus = 2\n").unwrap();
    assert_eq!(code(&fogbench(&["--config", bad.to_str().unwrap(), "simulate"], None)), 1);
    assert_eq!(code(&fogbench(&["fit", "--trace", "x.csv"], None)), 1);
}

#[test]
fn unwritable_output_exits_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path());
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "not a directory").unwrap();
    let out = fogbench(&["--config", &config, "--out", blocker.join("run").to_str().unwrap(), "simulate"], None);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn strict_non_convergence_exits_with_three() {
    let tmp = tempfile::tempdir().unwrap();
    // Alternating bright and dark bins with no decay structure; the solver
    // exhausts its iteration budget on this trace.
    let trace = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/nonconverging.csv");
    let out_dir = tmp.path().join("run");
    let args = ["--out", out_dir.to_str().unwrap(), "fit", "--trace", trace.to_str().unwrap(), "--visibility", "30"];
    let lenient = fogbench(&args, None);
    assert_eq!(code(&lenient), 0, "{}", String::from_utf8_lossy(&lenient.stderr));
    assert!(String::from_utf8_lossy(&lenient.stdout).contains("1 not converged"));
    let mut strict = vec!["--strict"];
    strict.extend_from_slice(&args);
    assert_eq!(code(&fogbench(&strict, None)), 3);
}
