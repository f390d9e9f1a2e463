use std::path::Path;
use std::process::{Command, Output};

fn straggle(args: &[&str], out_dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_straggle"))
        .args(args)
        .env("STRAGGLE_OUT_DIR", out_dir)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

#[test]
fn gen_laplacian_writes_matrix_market() {
    let dir = tempfile::tempdir().unwrap();
    let o = straggle(
        &["gen-laplacian", "--n", "3", "--out", "lap3.mtx"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(dir.path().join("lap3.mtx")).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('%'));
    // 27 diagonal entries and 2 * 3 * 18 neighbour entries.
    assert_eq!(lines.next().unwrap().trim(), "27 27 135");
}

#[test]
fn experiment_csv_schema_and_reproducibility() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &'static str, threads: &'static str| {
        vec![
            "experiment",
            "--laplacian",
            "4",
            "--method",
            "richardson",
            "--mode",
            "straggler_corrected",
            "--tau",
            "0.75",
            "--half-width",
            "5",
            "--m",
            "5,10",
            "--trials",
            "12",
            "--seed",
            "7",
            "--threads",
            threads,
            "--out",
            out,
        ]
    };
    let a = straggle(&args("a.csv", "1"), dir.path());
    let b = straggle(&args("b.csv", "4"), dir.path());
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(code(&b), 0);
    let csv_a = std::fs::read(dir.path().join("a.csv")).unwrap();
    let csv_b = std::fs::read(dir.path().join("b.csv")).unwrap();
    assert_eq!(csv_a, csv_b);
    let json_a = std::fs::read(dir.path().join("a.json")).unwrap();
    let json_b = std::fs::read(dir.path().join("b.json")).unwrap();
    assert_eq!(json_a, json_b);

    let text = String::from_utf8(csv_a).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "method,mode,tau,m,L,mse_vs_zm,mse_vs_z,avg_sample_variance,seed"
    );
    // Prefixes 1, 2, 5, 10, 12 for each of two m values.
    assert_eq!(lines.count(), 10);
    let json = String::from_utf8(json_b).unwrap();
    assert!(json.contains("corrected: step_hat = (N / E[T]) * step"));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "laplacian = 4\nmethod = \"chebyshev\"\nmode = \"straggler_uncorrected\"\n\
         tau = 0.5\nhalf_width = 3\nm = [2, 4]\ntrials = 3\nseed = 1\nout = \"from_config.csv\"\n",
    )
    .unwrap();
    let o = straggle(
        &[
            "experiment",
            "--config",
            cfg.to_str().unwrap(),
            "--tau",
            "0.9",
            "--out",
            "flag.csv",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!dir.path().join("from_config.csv").exists());
    let text = std::fs::read_to_string(dir.path().join("flag.csv")).unwrap();
    assert!(text
        .lines()
        .nth(1)
        .unwrap()
        .starts_with("chebyshev,straggler_uncorrected,0.9,2,1,"));

    std::fs::write(&cfg, "laplacian = 4\nbogus_key = 1\n").unwrap();
    let o = straggle(
        &["experiment", "--config", cfg.to_str().unwrap(), "--m", "2"],
        dir.path(),
    );
    assert_eq!(code(&o), 1);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert_eq!(code(&straggle(&["--help"], p)), 0);
    assert_eq!(code(&straggle(&["--version"], p)), 0);
    assert_eq!(code(&straggle(&[], p)), 1);
    assert_eq!(code(&straggle(&["experiment", "--no-such-flag"], p)), 1);
    assert_eq!(
        code(&straggle(
            &["experiment", "--laplacian", "3", "--tau", "1.5", "--m", "3"],
            p
        )),
        1
    );
    assert_eq!(
        code(&straggle(
            &["experiment", "--laplacian", "3", "--tau", "0", "--m", "3"],
            p
        )),
        1
    );
    assert_eq!(
        code(&straggle(
            &["experiment", "--matrix", "missing.mtx", "--m", "3"],
            p
        )),
        2
    );
    assert_eq!(
        code(&straggle(&["eig-bounds", "--matrix", "missing.mtx"], p)),
        2
    );
    assert_eq!(
        code(&straggle(
            &[
                "variance-sweep",
                "--laplacian",
                "3",
                "--m",
                "3",
                "--trials",
                "1"
            ],
            p
        )),
        1
    );
}

#[test]
fn solve_and_verify() {
    let dir = tempfile::tempdir().unwrap();
    let o = straggle(
        &[
            "solve",
            "--laplacian",
            "4",
            "--method",
            "chebyshev",
            "--m",
            "60",
            "--out",
            "z.txt",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let z: Vec<f64> = std::fs::read_to_string(dir.path().join("z.txt"))
        .unwrap()
        .lines()
        .map(|l| l.parse().unwrap())
        .collect();
    assert_eq!(z.len(), 64);
    // v = A 1, so the solution is the all-ones vector.
    assert!(z.iter().all(|x| (x - 1.0).abs() < 1e-6));

    let o = straggle(&["verify"], dir.path());
    assert_eq!(code(&o), 0);
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.lines().count() >= 7 && stdout.lines().all(|l| l.starts_with("PASS")));
}

#[test]
fn eig_bounds_prints_estimates() {
    let dir = tempfile::tempdir().unwrap();
    let o = straggle(&["eig-bounds", "--laplacian", "4"], dir.path());
    assert_eq!(code(&o), 0);
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("lambda_min") && stdout.contains("omega_cr"));
}
