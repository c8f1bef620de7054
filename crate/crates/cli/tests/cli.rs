//! End-to-end runs of the `fuse` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gmcfuse::io::{save_gray, BitDepth};
use gmcfuse::pipeline::{synth_pair, synth_scene};

fn fuse_bin() -> &'static str {
    env!("CARGO_BIN_EXE_fuse")
}

fn run(args: &[&str]) -> Output {
    Command::new(fuse_bin())
        .args(args)
        .output()
        .expect("binary should launch")
}

struct Fixture {
    dir: tempfile::TempDir,
    in1: PathBuf,
    in2: PathBuf,
}

fn fixture(seed: u64) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let gt = synth_scene::<f64>(40, 40, seed);
    let (y1, y2, _, _) = synth_pair(&gt, 1.5, 1.5, None).unwrap();
    let in1 = dir.path().join("left.pgm");
    let in2 = dir.path().join("right.pgm");
    save_gray(&y1, &in1, BitDepth::Sixteen).unwrap();
    save_gray(&y2, &in2, BitDepth::Sixteen).unwrap();
    Fixture { dir, in1, in2 }
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn fuses_with_flags_and_writes_report() {
    let fx = fixture(1);
    let out = fx.dir.path().join("fused.pgm");
    let csv = fx.dir.path().join("report.csv");
    let result = run(&[
        "--in1",
        path_str(&fx.in1),
        "--in2",
        path_str(&fx.in2),
        "--method",
        "gmc",
        "--iters",
        "40",
        "--out",
        path_str(&out),
        "--metrics",
        path_str(&csv),
    ]);
    assert!(result.status.success(), "stderr: {}", String::from_utf8_lossy(&result.stderr));
    assert!(out.exists());
    let report = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = report.lines().collect();
    assert_eq!(lines[0], "dataset,method,pe,q0,q,seconds");
    assert_eq!(lines.len(), 3, "one data row plus the average row");
    assert!(lines[1].starts_with("left,gmc,"));
    let stdout = String::from_utf8_lossy(&result.stdout);
    assert!(stdout.contains("solver time only"));
}

#[test]
fn l1_method_matches_gmc_with_zero_gamma() {
    let fx = fixture(2);
    let out_l1 = fx.dir.path().join("l1.pgm");
    let out_gmc = fx.dir.path().join("gmc0.pgm");
    let common = ["--iters", "30", "--tol", "0"];
    let r1 = run(
        &[&["--in1", path_str(&fx.in1), "--in2", path_str(&fx.in2), "--method", "l1", "--out", path_str(&out_l1)], &common[..]].concat(),
    );
    let r2 = run(
        &[&[
            "--in1",
            path_str(&fx.in1),
            "--in2",
            path_str(&fx.in2),
            "--method",
            "gmc",
            "--gamma",
            "0",
            "--out",
            path_str(&out_gmc),
        ], &common[..]]
        .concat(),
    );
    assert!(r1.status.success() && r2.status.success());
    assert_eq!(
        std::fs::read(&out_l1).unwrap(),
        std::fs::read(&out_gmc).unwrap(),
        "l1 and gmc with gamma 0 must produce identical files"
    );
}

#[test]
fn job_file_runs_and_flags_override_it() {
    let fx = fixture(3);
    let out = fx.dir.path().join("fused.pgm");
    let job = fx.dir.path().join("fusion.job");
    std::fs::write(
        &job,
        format!(
            "# fusion job\nin1 = {}\nin2 = {}\nout = {}\nmethod = gmc\nlambda = 0.05\niters = 25\n",
            fx.in1.display(),
            fx.in2.display(),
            out.display()
        ),
    )
    .unwrap();
    let r = run(&["--job", path_str(&job)]);
    assert!(r.status.success(), "stderr: {}", String::from_utf8_lossy(&r.stderr));
    let first = std::fs::read(&out).unwrap();

    // Overriding lambda changes the output; re-running the file alone does not.
    let r2 = run(&["--job", path_str(&job), "--lambda", "0.4"]);
    assert!(r2.status.success());
    let second = std::fs::read(&out).unwrap();
    assert_ne!(first, second);

    let r3 = run(&["--job", path_str(&job)]);
    assert!(r3.status.success());
    assert_eq!(first, std::fs::read(&out).unwrap());
}

#[test]
fn identity_psf_files_do_not_change_the_result() {
    let fx = fixture(4);
    let psf = fx.dir.path().join("identity.psf");
    std::fs::write(&psf, "1 1\n1.0\n").unwrap();
    let out_a = fx.dir.path().join("a.pgm");
    let out_b = fx.dir.path().join("b.pgm");
    let base = [
        "--in1",
        path_str(&fx.in1),
        "--in2",
        path_str(&fx.in2),
        "--iters",
        "20",
        "--tol",
        "0",
    ];
    let r1 = run(&[&base[..], &["--out", path_str(&out_a)]].concat());
    let r2 = run(
        &[&base[..], &[
            "--psf1",
            path_str(&psf),
            "--psf2",
            path_str(&psf),
            "--out",
            path_str(&out_b),
        ]]
        .concat(),
    );
    assert!(r1.status.success() && r2.status.success());
    assert_eq!(std::fs::read(&out_a).unwrap(), std::fs::read(&out_b).unwrap());
}

#[test]
fn missing_inputs_fail_with_a_message() {
    let fx = fixture(5);
    let r = run(&["--in1", path_str(&fx.in1), "--out", "x.pgm"]);
    assert!(!r.status.success());
    let stderr = String::from_utf8_lossy(&r.stderr);
    assert!(stderr.contains("in2"), "stderr: {}", stderr);
}

#[test]
fn wavelet_wa_reports_na_without_metrics() {
    let fx = fixture(6);
    let out = fx.dir.path().join("wa.pgm");
    let r = run(&[
        "--in1",
        path_str(&fx.in1),
        "--in2",
        path_str(&fx.in2),
        "--method",
        "wavelet-wa",
        "--out",
        path_str(&out),
    ]);
    assert!(r.status.success());
    let stdout = String::from_utf8_lossy(&r.stdout);
    assert!(stdout.contains("NA"), "stdout: {}", stdout);
    assert!(stdout.contains("wavelet-wa"));
}
