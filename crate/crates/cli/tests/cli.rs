use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use asmcmc::diagnostics::effective_sample_size;
use asmcmc::io::{read_chain_csv, read_matrix_csv, write_chain_csv};
use asmcmc::rng::{standard_normal_vec, stream};
use asmcmc::sampler::{Chain, SpaceTag};
use serde_json::Value;
use tempfile::TempDir;

fn asmcmc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_asmcmc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

#[track_caller]
fn ok(out: Output) -> Output {
    assert_eq!(code(&out), 0, "stdout: {}\nstderr: {}", stdout(&out), stderr(&out));
    out
}

fn write_config(dir: &Path, name: &str, json: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, json).unwrap();
    p
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const QUADRATIC: &str = r#"{
  "problem": {"name": "quadratic", "eps": 0.01},
  "subspace": {"estimator": {"method": "quadrature", "points_per_dim": 50}},
  "surrogate": {"rule": "gauss_hermite", "points": 10},
  "sampler": {"variant": "active", "steps": 1000, "proposal_var": 0.5, "seed": 3}
}"#;

const LINEAR: &str = r#"{
  "problem": {"name": "linear_gaussian", "rows": 3, "cols": 6, "noise_var": 0.2, "seed": 5},
  "subspace": {"estimator": {"method": "monte_carlo", "samples": 400, "seed": 2}, "n": 2, "max_n": 4, "bootstrap": 20},
  "surrogate": {"rule": "monte_carlo", "samples": 4},
  "sampler": {"variant": "active", "steps": 600, "proposal_var": 0.4, "seed": 9, "burn_in": 100}
}"#;

const POISSON_DESK: &str = r#"{
  "problem": {"name": "poisson_kl", "grid_n": 32, "m_kl": 20, "beta": 0.02, "seed": 0},
  "subspace": {"estimator": {"method": "monte_carlo", "samples": 300, "seed": 0}, "max_n": 5, "bootstrap": 50},
  "sampler": {"variant": "vanilla", "steps": 20000, "proposal_var": 0.1, "seed": 0, "burn_in": 2000}
}"#;

#[test]
fn missing_problem_name_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"problem": {"eps": 0.01}}"#);
    let out = asmcmc(&["estimate-subspace", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("name"), "{}", stderr(&out));
    assert!(!dir.path().join("o").exists());
}

#[test]
fn unknown_keys_are_config_errors() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"problem": {"name": "quadratic", "eps": 0.01, "epsilon": 2}}"#,
    );
    let out = asmcmc(&["gen-problem", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("epsilon"), "{}", stderr(&out));
}

#[test]
fn quadratic_subspace_has_two_eigenvalues_and_gap_at_one() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "q.json", QUADRATIC);
    let o = dir.path().join("q");
    ok(asmcmc(&["estimate-subspace", "--config", s(&cfg), "--out", s(&o)]));
    let side = json(&o.join("subspace.json"));
    assert_eq!(side["eigenvalues"].as_array().unwrap().len(), 2);
    assert_eq!(side["flagged_n"], 1);
    assert_eq!(side["n"], 1);
    let gaps = fs::read_to_string(o.join("gaps.csv")).unwrap();
    let lines: Vec<&str> = gaps.lines().collect();
    assert_eq!(lines[0], "n,lambda_n,lambda_next,gap,flagged");
    assert!(lines[1].starts_with("1,") && lines[1].ends_with(",1"), "{gaps}");
    assert_eq!(read_matrix_csv(&o.join("eigenvectors.csv")).unwrap().shape(), (2, 2));
}

#[test]
fn outputs_are_not_overwritten_without_force() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "q.json", QUADRATIC);
    let o = dir.path().join("q");
    ok(asmcmc(&["gen-problem", "--config", s(&cfg), "--out", s(&o)]));
    let before = fs::read(o.join("problem.json")).unwrap();
    let again = asmcmc(&["gen-problem", "--config", s(&cfg), "--out", s(&o)]);
    assert_eq!(code(&again), 2);
    assert!(stderr(&again).contains("--force"));
    assert_eq!(fs::read(o.join("problem.json")).unwrap(), before);
    ok(asmcmc(&["gen-problem", "--config", s(&cfg), "--out", s(&o), "--force"]));
}

#[test]
fn zero_steps_write_a_header_only_chain() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "q.json", QUADRATIC);
    let o = dir.path().join("q");
    ok(asmcmc(&[
        "run-chain", "--config", s(&cfg), "--out", s(&o), "--variant", "vanilla", "--steps", "0",
    ]));
    assert_eq!(fs::read_to_string(o.join("vanilla.csv")).unwrap(), "step,x0,x1,log_density,accepted\n");
    assert_eq!(json(&o.join("vanilla.json"))["forward_calls"], 0);
}

#[test]
fn active_chain_needs_a_subspace() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "q.json", QUADRATIC);
    let out = asmcmc(&["run-chain", "--config", s(&cfg), "--out", s(&dir.path().join("q"))]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("estimate-subspace"), "{}", stderr(&out));
}

#[test]
fn forward_calls_are_inner_rule_times_steps() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "q.json", QUADRATIC);
    let o = dir.path().join("q");
    ok(asmcmc(&["estimate-subspace", "--config", s(&cfg), "--out", s(&o)]));
    ok(asmcmc(&["run-chain", "--config", s(&cfg), "--out", s(&o)]));
    ok(asmcmc(&["run-chain", "--config", s(&cfg), "--out", s(&o), "--variant", "vanilla", "--steps", "10000"]));
    let active = json(&o.join("active.json"));
    assert_eq!(active["forward_calls"], 10 * 1000);
    assert_eq!(active["dim"], 1);
    assert_eq!(json(&o.join("vanilla.json"))["forward_calls"], 10_000);
    assert_eq!(read_chain_csv(&o.join("active.csv")).unwrap().len(), 1000);
}

/// Every file of the pipeline, for byte comparison.
fn pipeline(dir: &Path, cfg: &Path, lanes: &str) -> Vec<(String, Vec<u8>)> {
    ok(asmcmc(&["--lanes", lanes, "gen-problem", "--config", s(cfg), "--out", s(dir)]));
    ok(asmcmc(&["--lanes", lanes, "estimate-subspace", "--config", s(cfg), "--out", s(dir)]));
    ok(asmcmc(&["--lanes", lanes, "run-chain", "--config", s(cfg), "--out", s(dir)]));
    ok(asmcmc(&[
        "--lanes", lanes, "reconstruct", "--chain", s(&dir.join("active.csv")), "--subspace", s(dir), "--draws", "3",
        "--seed", "4", "--out", s(&dir.join("full.csv")),
    ]));
    ok(asmcmc(&[
        "--lanes", lanes, "cov-study", "--config", s(cfg), "--out", s(dir), "--samples", "1,4,16", "--points", "20",
    ]));
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn reruns_and_lane_counts_give_identical_files() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "l.json", LINEAR);
    let a = pipeline(&dir.path().join("a"), &cfg, "1");
    let b = pipeline(&dir.path().join("b"), &cfg, "1");
    let c = pipeline(&dir.path().join("c"), &cfg, "3");
    assert!(a.len() >= 10);
    assert_eq!(a, b);
    assert_eq!(a, c);
}

#[test]
fn paused_run_resumes_to_the_uninterrupted_chain() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "l.json", LINEAR);
    let full = dir.path().join("full");
    let split = dir.path().join("split");
    for o in [&full, &split] {
        ok(asmcmc(&["estimate-subspace", "--config", s(&cfg), "--out", s(o)]));
    }
    ok(asmcmc(&["run-chain", "--config", s(&cfg), "--out", s(&full), "--checkpoint-every", "100"]));

    let paused = ok(asmcmc(&[
        "run-chain", "--config", s(&cfg), "--out", s(&split), "--checkpoint-every", "100", "--pause-after", "250",
    ]));
    assert!(stdout(&paused).contains("paused"));
    assert!(split.join("active.checkpoint.json").exists());
    assert!(!split.join("active.json").exists());
    // a second pause mid-way, then run to completion
    ok(asmcmc(&[
        "run-chain", "--config", s(&cfg), "--out", s(&split), "--checkpoint-every", "100", "--pause-after", "77",
        "--resume",
    ]));
    ok(asmcmc(&["run-chain", "--config", s(&cfg), "--out", s(&split), "--checkpoint-every", "100", "--resume"]));

    assert_eq!(fs::read(full.join("active.csv")).unwrap(), fs::read(split.join("active.csv")).unwrap());
    assert_eq!(fs::read(full.join("active.json")).unwrap(), fs::read(split.join("active.json")).unwrap());
    assert!(!split.join("active.checkpoint.json").exists());
}

#[test]
fn fresh_run_over_a_checkpoint_needs_force_and_resume_checks_settings() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "l.json", LINEAR);
    let o = dir.path().join("o");
    ok(asmcmc(&["estimate-subspace", "--config", s(&cfg), "--out", s(&o)]));
    ok(asmcmc(&["run-chain", "--config", s(&cfg), "--out", s(&o), "--pause-after", "10"]));
    let fresh = asmcmc(&["run-chain", "--config", s(&cfg), "--out", s(&o)]);
    assert_eq!(code(&fresh), 2);
    let changed = asmcmc(&["run-chain", "--config", s(&cfg), "--out", s(&o), "--resume", "--proposal-var", "0.9"]);
    assert_eq!(code(&changed), 2);
    assert!(stderr(&changed).contains("different settings"), "{}", stderr(&changed));
    let missing = asmcmc(&["run-chain", "--config", s(&cfg), "--out", s(&o), "--resume", "--name", "other"]);
    assert_eq!(code(&missing), 2);
}

#[test]
fn reconstruction_through_files() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "l.json", LINEAR);
    let o = dir.path().join("o");
    ok(asmcmc(&["estimate-subspace", "--config", s(&cfg), "--out", s(&o)]));
    ok(asmcmc(&["run-chain", "--config", s(&cfg), "--out", s(&o)]));
    let rec_path = o.join("full.csv");
    ok(asmcmc(&[
        "reconstruct", "--chain", s(&o.join("active.csv")), "--subspace", s(&o), "--draws", "4", "--out", s(&rec_path),
    ]));
    let active = read_chain_csv(&o.join("active.csv")).unwrap();
    let rec = read_chain_csv(&rec_path).unwrap();
    assert_eq!(rec.len(), 4 * active.len());
    assert_eq!(rec.dim(), 6);
    let w = read_matrix_csv(&o.join("eigenvectors.csv")).unwrap();
    for (k, x) in rec.states().enumerate() {
        let y = active.state(k / 4);
        for j in 0..2 {
            let proj: f64 = (0..6).map(|i| w[(i, j)] * x[i]).sum();
            assert!((proj - y[j]).abs() <= 1e-12, "state {k}: {proj} vs {}", y[j]);
        }
    }
    let side = json(&o.join("full.json"));
    assert_eq!(side["reconstruction_forward_calls"], 0);
    assert_eq!(side["forward_calls"], 4 * 600);
    assert_eq!(side["burn_in"], 400);

    let zero = asmcmc(&[
        "reconstruct", "--chain", s(&o.join("active.csv")), "--subspace", s(&o), "--draws", "0", "--out",
        s(&o.join("z.csv")),
    ]);
    assert_eq!(code(&zero), 2);
    let wrong = asmcmc(&[
        "reconstruct", "--chain", s(&rec_path), "--subspace", s(&o), "--out", s(&o.join("w.csv")),
    ]);
    assert_eq!(code(&wrong), 2);
}

fn iid_chain(path: &Path, n: usize, seed: u64) {
    let mut chain = Chain::new(2, 1.0, Some(seed), SpaceTag::Full);
    let mut rng = stream(seed, 0);
    for _ in 0..n {
        chain.push(&standard_normal_vec(&mut rng, 2), 0.0, true).unwrap();
    }
    write_chain_csv(path, &chain).unwrap();
}

#[test]
fn diagnose_iid_chain_has_ess_near_length() {
    let dir = TempDir::new().unwrap();
    let chain = dir.path().join("iid.csv");
    let n = 100_000;
    iid_chain(&chain, n, 1);
    let o = dir.path().join("d");
    ok(asmcmc(&["diagnose", s(&chain), "--out", s(&o)]));
    let d = json(&o.join("diagnostics.json"));
    let series = read_chain_csv(&chain).unwrap().coordinate(0);
    let expected = effective_sample_size(&series).unwrap().ess;
    let ess = d["chains"][0]["report"]["ess"][0]["ess"].as_f64().unwrap();
    assert_eq!(ess, expected);
    // summing 2000 noisy lags gives the estimate a spread of about 2·√(2000/N)
    let spread = 2.0 * (2000.0 / n as f64).sqrt();
    assert!((ess / n as f64 - 1.0).abs() < 2.0 * spread, "{ess}");
    let acf = fs::read_to_string(o.join("acf_iid.csv")).unwrap();
    assert!(acf.starts_with("lag,x0,x1\n0,1,1\n"), "{}", &acf[..40]);
}

#[test]
fn diagnose_prints_a_summary_for_three_chains() {
    let dir = TempDir::new().unwrap();
    let paths: Vec<PathBuf> = (0..3).map(|k| dir.path().join(format!("c{k}.csv"))).collect();
    for (k, p) in paths.iter().enumerate() {
        iid_chain(p, 5000, k as u64);
    }
    let o = dir.path().join("d");
    let out = ok(asmcmc(&[
        "diagnose", s(&paths[0]), s(&paths[1]), s(&paths[2]), "--labels", "vanilla,as-0.1,as-0.3", "--out", s(&o),
    ]));
    let text = stdout(&out);
    for needle in ["Min. eff. sample size", "Acceptance rate", "vanilla", "as-0.1", "as-0.3"] {
        assert!(text.contains(needle), "{text}");
    }
    let table = fs::read_to_string(o.join("table.csv")).unwrap();
    assert_eq!(table.lines().count(), 4);
    let d = json(&o.join("diagnostics.json"));
    assert!(d["chains"][0]["shifted_moments"].is_null());
    assert_eq!(d["chains"][2]["shifted_moments"].as_array().unwrap().len(), 2);
}

#[test]
fn diagnose_reports_malformed_lines_and_numerical_failures() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "step,x0,log_density,accepted\n0,0.5,-1,1\n1,oops,-1,0\n").unwrap();
    let out = asmcmc(&["diagnose", s(&bad), "--out", s(&dir.path().join("d"))]);
    assert_ne!(code(&out), 0);
    assert!(stderr(&out).contains(":3:"), "{}", stderr(&out));

    let flat = dir.path().join("flat.csv");
    let mut chain = Chain::new(1, 1.0, None, SpaceTag::Full);
    for _ in 0..500 {
        chain.push(&[0.25], -1.0, false).unwrap();
    }
    write_chain_csv(&flat, &chain).unwrap();
    let out = asmcmc(&["diagnose", s(&flat), "--out", s(&dir.path().join("e"))]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
}

#[test]
fn hellinger_refuses_higher_dimensional_problems() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "l.json", LINEAR);
    let out = asmcmc(&["hellinger", "--config", s(&cfg), "--out", s(&dir.path().join("o"))]);
    assert_eq!(code(&out), 2);
}

#[test]
fn quadratic_hellinger_is_below_its_bound() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "q.json", QUADRATIC);
    let o = dir.path().join("q");
    ok(asmcmc(&["estimate-subspace", "--config", s(&cfg), "--out", s(&o)]));
    ok(asmcmc(&["hellinger", "--config", s(&cfg), "--out", s(&o), "--grid-points", "161"]));
    let h = json(&o.join("hellinger.json"));
    let r = &h["result"];
    assert!(r["distance"].as_f64().unwrap() < r["bound"].as_f64().unwrap());
    assert!(r["misfit_error"].as_f64().unwrap() <= r["trailing_eigensum"].as_f64().unwrap());
    assert_eq!(h["bounds"].as_array().unwrap().len(), 3);
}

#[test]
fn poisson_desk_gap_report_and_transformed_marginals() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "p.json", POISSON_DESK);
    let o = dir.path().join("p");
    ok(asmcmc(&["gen-problem", "--config", s(&cfg), "--out", s(&o)]));
    assert_eq!(asmcmc::io::read_vector_csv(&o.join("x_true.csv")).unwrap().len(), 20);
    assert_eq!(asmcmc::io::read_vector_csv(&o.join("data.csv")).unwrap().len(), 7);

    ok(asmcmc(&["estimate-subspace", "--config", s(&cfg), "--out", s(&o)]));
    let side = json(&o.join("subspace.json"));
    let flagged = side["flagged_n"].as_u64().unwrap();
    assert!(flagged == 1 || flagged == 2, "{flagged}");
    assert_eq!(side["gradient_calls"], 300);
    let gradients = fs::read_to_string(o.join("gradients.csv")).unwrap();
    assert_eq!(gradients.lines().count(), 301);

    // vanilla chain seen through Ŵ: the leading coordinates carry the data
    ok(asmcmc(&["run-chain", "--config", s(&cfg), "--out", s(&o)]));
    ok(asmcmc(&[
        "diagnose", s(&o.join("vanilla.csv")), "--transform", s(&o.join("eigenvectors.csv")), "--out",
        s(&o.join("diag")),
    ]));
    let d = json(&o.join("diag/diagnostics.json"));
    let kl: Vec<f64> = d["chains"][0]["transformed"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| t["kl_to_standard_normal"].as_f64().unwrap())
        .collect();
    assert_eq!(kl.len(), 4);
    assert!(kl[0].min(kl[1]) > kl[2].max(kl[3]), "{kl:?}");
    assert!(o.join("diag/kde_vanilla.csv").exists());
}
