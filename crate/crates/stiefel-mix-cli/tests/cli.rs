//! End-to-end smoke tests driving the installed binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stiefel-mix"))
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary runs");
    assert!(
        out.status.success(),
        "command failed:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

const SMALL_CONFIG: &str = r#"
variant = "location-scale"
alpha = 1.0
iters = 40
burn_in = 10
thin = 2

[kappa_prior]
type = "gamma"
shape = 2.0
rate = 0.5
"#;

#[test]
fn synth_fit_summarize_pipeline_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data.csv");
    let labels = tmp.path().join("labels.csv");
    run_ok(bin()
        .arg("synth")
        .args(["--seed", "9"])
        .arg("--out")
        .arg(&data)
        .arg("--labels")
        .arg(&labels));
    assert_eq!(fs::read_to_string(&data).unwrap().lines().count(), 163);
    assert_eq!(fs::read_to_string(&labels).unwrap().lines().count(), 163);

    let config = tmp.path().join("run.toml");
    fs::write(&config, SMALL_CONFIG).unwrap();

    let fit = |out: &Path| {
        run_ok(bin()
            .arg("fit")
            .arg("--data")
            .arg(&data)
            .arg("--config")
            .arg(&config)
            .args(["--seed", "5"])
            .arg("--out")
            .arg(out))
    };
    let out1 = tmp.path().join("out1");
    let out2 = tmp.path().join("out2");
    fit(&out1);
    fit(&out2);
    for file in [
        "coclustering.csv",
        "cluster_counts.csv",
        "predictive_grid.csv",
        "summary.txt",
        "acceptance.csv",
        "coclustering.svg",
    ] {
        let a = fs::read(out1.join(file)).unwrap();
        assert!(!a.is_empty(), "{file} is empty");
        assert_eq!(a, fs::read(out2.join(file)).unwrap(), "{file} not deterministic");
    }
    // the config echo differs only in its out_dir line
    let strip_out_dir = |p: &Path| {
        fs::read_to_string(p.join("config_used.toml"))
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with("out_dir"))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(strip_out_dir(&out1), strip_out_dir(&out2));
    let echoed = fs::read_to_string(out1.join("config_used.toml")).unwrap();
    assert!(echoed.contains("seed = 5"), "echo misses the resolved seed: {echoed}");

    let digest = run_ok(bin().arg("summarize").arg("--dir").arg(&out1).arg("--svg"));
    let text = String::from_utf8(digest.stdout).unwrap();
    assert!(text.contains("modal cluster count"), "digest: {text}");
    assert!(text.contains("cluster-count histogram"), "digest: {text}");
}

#[test]
fn convert_orbits_identity_row() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("orbits.csv");
    fs::write(&input, "id,i_deg,node_deg,peri_deg\nneo-1,0,0,0\nneo-2,30,60,90\n").unwrap();
    let output = tmp.path().join("frames.csv");
    run_ok(bin()
        .arg("convert-orbits")
        .arg("--input")
        .arg(&input)
        .arg("--output")
        .arg(&output));
    let data = stiefel_mix::io::parse_frames_csv(&output).unwrap();
    assert_eq!(data.len(), 2);
    let m = data.frames[0].matrix();
    for i in 0..3 {
        for j in 0..2 {
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((m[(i, j)] - want).abs() < 1e-15);
        }
    }
}

#[test]
fn hypergeom_matches_scalar_closed_form() {
    let out = run_ok(bin()
        .arg("hypergeom")
        .args(["--d", "3", "--kappa", "5", "--mc-check", "50000", "--seed", "1"]));
    let text = String::from_utf8(out.stdout).unwrap();
    let log_line = text
        .lines()
        .find(|l| l.starts_with("log_0f1,"))
        .expect("log_0f1 line");
    let value: f64 = log_line.split(',').nth(1).unwrap().parse().unwrap();
    let expected = (5.0f64.sinh() / 5.0).ln();
    assert!((value - expected).abs() <= 1e-8, "{value} vs {expected}");
    assert!(text.contains("within_3se,true"), "MC check failed: {text}");
}

#[test]
fn sample_density_and_tail_smoke() {
    let tmp = tempfile::tempdir().unwrap();
    let samples = tmp.path().join("samples.csv");
    run_ok(bin()
        .arg("sample")
        .args(["--d", "3", "--kappa", "8,3", "--n", "40", "--seed", "2"])
        .arg("--out")
        .arg(&samples));
    let data = stiefel_mix::io::parse_frames_csv(&samples).unwrap();
    assert_eq!(data.len(), 40);

    let out = run_ok(bin()
        .arg("density")
        .arg("--data")
        .arg(&samples)
        .args(["--kappa", "8,3", "--location-seed", "2"]));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "id,log_density");
    assert_eq!(lines.len(), 41);
    for line in &lines[1..] {
        let v: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!(v.is_finite());
    }

    let config = tmp.path().join("run.toml");
    fs::write(&config, SMALL_CONFIG).unwrap();
    let out = run_ok(bin()
        .arg("diagnose")
        .arg("tail")
        .arg("--config")
        .arg(&config)
        .args(["--a", "0.03", "--beta", "0.01", "--n", "10000", "--draws", "20000", "--seed", "3"]));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "n,threshold,mass,bound,pass");
    // a gamma(2, 1/2) prior is far too heavy for the phi floor at this n
    assert!(lines[1].ends_with("false"), "tail row: {}", lines[1]);
}

#[test]
fn diagnose_lipschitz_emits_slope() {
    let out = run_ok(bin()
        .arg("diagnose")
        .arg("lipschitz")
        .args(["--mode", "concentration", "--grid", "5;10", "--trials", "1000", "--seed", "4"]));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("phi_bound,max_ratio\n"), "got: {text}");
    assert!(text.lines().any(|l| l.starts_with("slope,")), "got: {text}");
}
