use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use echo_cli::CSV_HEADER;

fn becho(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_becho"))
        .args(args)
        .output()
        .expect("failed to start becho")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.display().to_string()
}

fn run_ok(config: &str, out: &Path, extra: &[&str]) -> Output {
    let out_s = out.display().to_string();
    let mut args = vec!["run", config, "--output", &out_s];
    args.extend_from_slice(extra);
    let o = becho(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    o
}

#[test]
fn unperturbed_curve_is_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.txt",
        "experiment = echo_curve\nn = 64\ntimes = 0..10\nrealizations = 3\n",
    );
    run_ok(&cfg, &dir.path().join("out"), &["--workers", "1"]);
    let csv = fs::read_to_string(dir.path().join("out/curve.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 11);
    for row in rows {
        let cols: Vec<&str> = row.split(',').collect();
        let mean: f64 = cols[1].parse().unwrap();
        assert!((mean - 1.0).abs() < 1e-12, "{row}");
        assert_eq!(cols[3], "3");
    }
    let fit = fs::read_to_string(dir.path().join("out/fit.txt")).unwrap();
    assert!(fit.contains("[curve.csv]"));
}

#[test]
fn unknown_key_exits_2_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.txt", "experiment = echo_curve\n# note\nsigma = 0.1\n");
    let o = becho(&["run", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 3") && err.contains("sigma"), "{err}");
}

#[test]
fn budget_exceeded_exits_3_with_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.txt",
        "experiment = echo_curve\nn = 64\nt_max = 100\nrealizations = 5\nstep_budget = 1000\n",
    );
    let o = becho(&["run", &cfg, "--output", &dir.path().join("o").display().to_string()]);
    assert_eq!(o.status.code(), Some(3));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("floquet_steps ="), "{err}");
    assert!(!dir.path().join("o/curve.csv").exists());
}

#[test]
fn meta_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.txt",
        "experiment = echo_curve\nn = 32\nsigma1 = 0.05\neps = 0.02\ntimes = 0..20:2\nrealizations = 4\nseed = 5\n",
    );
    let first = dir.path().join("first");
    run_ok(&cfg, &first, &[]);
    let meta = fs::read_to_string(first.join("meta.txt")).unwrap();
    assert!(meta.contains("# hbar_eff = "));
    assert!(meta.contains(&format!("# becho {}", env!("CARGO_PKG_VERSION"))));
    let again = write_config(dir.path(), "meta.txt", &meta);
    let second = dir.path().join("second");
    run_ok(&again, &second, &[]);
    assert_eq!(
        fs::read(first.join("curve.csv")).unwrap(),
        fs::read(second.join("curve.csv")).unwrap()
    );
}

#[test]
fn estimate_reports_memory_and_steps() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.txt",
        "experiment = echo_curve\nn = 1024\ntimes = 0..100\nrealizations = 50\n",
    );
    let o = becho(&["estimate", &cfg, "--workers", "2"]);
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("state_memory_per_worker = 16.00 MiB"), "{text}");
    assert!(text.contains(&format!("floquet_steps = {}", 50 * (100 + 5050))), "{text}");
    assert!(text.contains("estimated_wall_time"));
}

#[test]
fn classical_experiments() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "l.txt", "experiment = lyapunov\ntrajectories = 50\nsteps = 2000\n");
    run_ok(&cfg, &dir.path().join("l"), &[]);
    let fit = fs::read_to_string(dir.path().join("l/fit.txt")).unwrap();
    let lambda: f64 = fit
        .lines()
        .find_map(|l| l.strip_prefix("lambda = "))
        .unwrap()
        .parse()
        .unwrap();
    assert!((lambda - 1.62).abs() < 0.1, "{lambda}");
    assert!(!dir.path().join("l/curve.csv").exists());

    let cfg = write_config(dir.path(), "g.txt", "experiment = gamma_estimate\nn = 1024\neps = 0.0037\n");
    run_ok(&cfg, &dir.path().join("g"), &[]);
    let fit = fs::read_to_string(dir.path().join("g/fit.txt")).unwrap();
    assert!(fit.contains("gamma_coupling_coefficient"));
}

#[test]
fn sweep_writes_one_csv_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "s.txt",
        "experiment = sigma_sweep\nn = 32\nsweep = 0.05, 0.1, 0.2\ntimes = 0..30\nrealizations = 2\n",
    );
    run_ok(&cfg, &dir.path().join("s"), &[]);
    for i in 0..3 {
        let csv = fs::read_to_string(dir.path().join(format!("s/curve_{i}.csv"))).unwrap();
        assert!(csv.starts_with(CSV_HEADER));
    }
    let fit = fs::read_to_string(dir.path().join("s/fit.txt")).unwrap();
    assert!(fit.contains("sigma1 = 0.1"));
}

#[test]
fn binary_output_independent_of_workers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.txt",
        "experiment = echo_curve\nn = 32\nsigma1 = 0.05\neps = 0.03\ntimes = 0..25\nrealizations = 6\nseed = 3\n",
    );
    run_ok(&cfg, &dir.path().join("w1"), &["--workers", "1"]);
    run_ok(&cfg, &dir.path().join("w4"), &["--workers", "4"]);
    assert_eq!(
        fs::read(dir.path().join("w1/curve.csv")).unwrap(),
        fs::read(dir.path().join("w4/curve.csv")).unwrap()
    );
}
