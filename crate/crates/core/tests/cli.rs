use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sinotv::io::{read_image, read_sinogram};

const GEOMETRY: &str = "33,33,40,24,7.5";

fn sinotv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sinotv")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn simulate(dir: &Path) -> std::path::PathBuf {
    let out = dir.join("sim");
    let res = sinotv(&[
        "simulate",
        "--geometry",
        GEOMETRY,
        "--phantom",
        "two_discs",
        "--r1",
        "6",
        "--r2",
        "2.5",
        "--noise-preset",
        "low",
        "--seed",
        "3",
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    out
}

#[test]
fn simulate_writes_files_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulate(dir.path());
    for name in ["manifest.toml", "phantom.img", "clean.sino", "noisy.sino", "noisy.pgm", "results.toml"] {
        assert!(sim.join(name).exists(), "{name}");
    }
    let noisy = read_sinogram(&sim.join("noisy.sino")).unwrap();
    assert_eq!(noisy.shape(), (40, 24));
    assert!(noisy.data.iter().all(|&x| x >= 0.0));
    let manifest = fs::read_to_string(sim.join("manifest.toml")).unwrap();
    assert!(manifest.contains("command = \"simulate\""));

    let again = dir.path().join("again");
    let res = sinotv(&["simulate", "--config", p(&sim.join("manifest.toml")), "--out", p(&again)]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    for name in ["phantom.img", "clean.sino", "noisy.sino"] {
        assert_eq!(fs::read(sim.join(name)).unwrap(), fs::read(again.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn reconstruct_reports_nonconvergence_and_reruns_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let sim = simulate(dir.path());
    let rec = dir.path().join("rec");
    let res = sinotv(&[
        "reconstruct",
        "--geometry",
        GEOMETRY,
        "--input",
        p(&sim.join("noisy.sino")),
        "--truth",
        p(&sim.join("phantom.img")),
        "--alpha",
        "0.5",
        "--beta",
        "0.01",
        "--outer-max-iters",
        "3",
        "--out",
        p(&rec),
    ]);
    assert_eq!(code(&res), 4, "{}", stderr(&res));
    assert!(stderr(&res).contains("did not converge"));
    let image = read_image(&rec.join("image.img")).unwrap();
    assert_eq!(image.shape(), (33, 33));
    assert!(image.data.iter().all(|&x| x >= 0.0));
    let results = fs::read_to_string(rec.join("results.toml")).unwrap();
    assert!(results.contains("snr_db") && results.contains("iterations = 3"));
    let diag = fs::read_to_string(rec.join("diagnostics.csv")).unwrap();
    assert_eq!(diag.lines().count(), 4);

    let again = dir.path().join("again");
    let res = sinotv(&["reconstruct", "--config", p(&rec.join("manifest.toml")), "--out", p(&again)]);
    assert_eq!(code(&res), 4);
    for name in ["image.img", "sinogram.sino", "diagnostics.csv", "results.toml"] {
        assert_eq!(fs::read(rec.join(name)).unwrap(), fs::read(again.join(name)).unwrap(), "{name}");
    }

    let em = dir.path().join("em");
    let res = sinotv(&[
        "reconstruct",
        "--geometry",
        GEOMETRY,
        "--input",
        p(&sim.join("noisy.sino")),
        "--method",
        "em",
        "--em-iters",
        "5",
        "--out",
        p(&em),
    ]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    assert_eq!(fs::read_to_string(em.join("diagnostics.csv")).unwrap().lines().count(), 7);
}

#[test]
fn scale_space_and_oracle_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ss");
    let res = sinotv(&[
        "scale-space",
        "--geometry",
        GEOMETRY,
        "--phantom",
        "disc",
        "--radius",
        "10",
        "--betas",
        "0.5,5",
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let table = fs::read_to_string(out.join("scale_space.csv")).unwrap();
    assert_eq!(table.lines().count(), 3);
    let tops: Vec<f64> = table.lines().skip(1).map(|l| l.split(',').nth(3).unwrap().parse().unwrap()).collect();
    assert!(tops[1] < tops[0]);
    assert!(out.join("beta_5").join("slice45.csv").exists());

    let out = dir.path().join("oracle");
    let res = sinotv(&["oracle-table", "--numeric", "false", "--out", p(&out)]);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    let table = fs::read_to_string(out.join("oracle_table.csv")).unwrap();
    assert_eq!(table.lines().count(), 22);
    let row = table.lines().find(|l| l.starts_with("15.5,10,")).unwrap();
    let delta: f64 = row.split(',').nth(3).unwrap().parse().unwrap();
    assert!((delta - 7.59).abs() < 0.01, "{row}");
}

#[test]
fn sweep_writes_one_row_per_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep");
    let res = sinotv(&[
        "sweep",
        "--geometry",
        GEOMETRY,
        "--phantom",
        "two_discs",
        "--r1",
        "6",
        "--r2",
        "2.5",
        "--noise-preset",
        "high",
        "--seeds",
        "0,1",
        "--alphas",
        "1,5",
        "--betas",
        "0,0.1",
        "--outer-max-iters",
        "2000",
        "--out",
        p(&out),
    ]);
    assert!(matches!(code(&res), 0 | 4), "{}", stderr(&res));
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 1 + 2 * 2 * 2);
}

#[test]
fn configuration_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = p(dir.path());
    let res = sinotv(&["scale-space", "--geometry", GEOMETRY, "--phantom", "disc", "--radius", "5", "--out", out]);
    assert_eq!(code(&res), 2);
    assert!(stderr(&res).contains("beta"));

    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "alpah = 3.0\n").unwrap();
    let res = sinotv(&["simulate", "--config", p(&cfg), "--out", out]);
    assert_eq!(code(&res), 2);
    assert!(stderr(&res).contains("alpah"));

    let res = sinotv(&["simulate", "--geometry", "10,10,0,4,1", "--out", out]);
    assert_eq!(code(&res), 2);
    let res = sinotv(&["reconstruct", "--geometry", GEOMETRY, "--out", out]);
    assert_eq!(code(&res), 2);
    let res = sinotv(&["simulate", "--geometry", GEOMETRY, "--phantom", "blob", "--out", out]);
    assert_eq!(code(&res), 2);
}

#[test]
fn file_errors_exit_with_3_and_name_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.sino");
    let out = dir.path().join("out");
    let res = sinotv(&["reconstruct", "--geometry", GEOMETRY, "--input", p(&missing), "--out", p(&out)]);
    assert_eq!(code(&res), 3);
    assert!(stderr(&res).contains("nope.sino"), "{}", stderr(&res));

    let corrupt = dir.path().join("corrupt.sino");
    fs::write(&corrupt, "not a grid\n").unwrap();
    let res = sinotv(&["reconstruct", "--geometry", GEOMETRY, "--input", p(&corrupt), "--out", p(&out)]);
    assert_eq!(code(&res), 3);
    assert!(stderr(&res).contains("corrupt.sino"), "{}", stderr(&res));
}
