use std::path::Path;
use std::process::Command;

use logsp::energy::evaluate_energy;
use logsp::logconv::build_log_kernel;
use logsp_cli::config::{parse_config, CommandKind};
use logsp_cli::fieldio::read_field;
use logsp_cli::CliError;
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_logsp"))
}

fn run_in(dir: &Path, args: &[&str]) -> (i32, String, String) {
    let out = bin().args(args).arg("--out").arg(dir).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn args<'a>(dir: &'a Path, rest: &[&'a str]) -> Vec<String> {
    let mut v = vec!["logsp".to_string()];
    v.extend(rest.iter().map(|s| s.to_string()));
    v.push("--out".into());
    v.push(dir.to_str().unwrap().into());
    v
}

#[test]
fn rho_frac_resolves_against_rho_star() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = parse_config(args(dir.path(), &["solve", "--rho-frac", "0.9"])).unwrap();
    assert_eq!(cfg.command, CommandKind::Solve);
    assert!((cfg.rho_star - 11.7009).abs() < 1e-3);
    assert!((cfg.rho.unwrap() - 0.9 * cfg.rho_star).abs() < 1e-12);
    assert_eq!((cfg.half_width, cfg.n), (Some(6.0), Some(512)));
    // The ground state is cached after the first parse.
    assert_eq!(std::fs::read_dir(dir.path().join("cache")).unwrap().count(), 1);
}

#[test]
fn usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let bad = |rest: &[&str]| match parse_config(args(dir.path(), rest)) {
        Err(CliError::Usage(m)) => m,
        other => panic!("{rest:?} gave {other:?}"),
    };
    assert!(bad(&["solve", "--rho", "-1"]).contains("rho"));
    assert!(bad(&["solve"]).contains("rho"));
    assert!(bad(&["solve", "--rho", "3", "--rho-frac", "0.5"]).contains("conflicts"));
    assert!(bad(&["solve", "--rho-frac", "0.5", "--n", "100"]).starts_with("n:"));
    assert!(bad(&["sweep", "--fracs", "0.5,1.2"]).starts_with("fracs"));
    assert!(bad(&["probe-nonexistence", "--taus", "2,1"]).starts_with("taus"));
    assert!(bad(&["solve", "--rho-frac", "0.5", "--init", "provided"]).starts_with("input"));
    assert!(bad(&["solve", "--rho-frac", "0.5", "--workers", "0"]).starts_with("workers"));
    assert!(bad(&["solve", "--rho-frac", "abc"]).contains("abc"));
    assert!(matches!(parse_config(["logsp", "--help"]), Err(CliError::Help(_))));
}

#[test]
fn flags_override_file_values() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("run.json");
    std::fs::write(&file, r#"{"n": 512, "L": 8.0, "rho_frac": 0.5, "seed": 7}"#).unwrap();
    let f = file.to_str().unwrap();
    let cfg = parse_config(args(dir.path(), &["solve", "--config", f, "--n", "1024"])).unwrap();
    assert_eq!(cfg.n, Some(1024));
    assert_eq!(cfg.half_width, Some(8.0));
    assert_eq!(cfg.seed, 7);
    assert!((cfg.rho_frac.unwrap() - 0.5).abs() < 1e-15);
    // A mass flag replaces the file's mass.
    let cfg = parse_config(args(dir.path(), &["solve", "--config", f, "--rho", "2"])).unwrap();
    assert_eq!(cfg.rho, Some(2.0));

    std::fs::write(&file, r#"{"n": 512, "colour": "blue"}"#).unwrap();
    match parse_config(args(dir.path(), &["solve", "--config", f, "--rho", "2"])) {
        Err(CliError::Usage(m)) => assert!(m.contains("colour"), "{m}"),
        other => panic!("{other:?}"),
    }
    std::fs::write(&file, r#"{"command": "sweep"}"#).unwrap();
    assert!(matches!(parse_config(args(dir.path(), &["solve", "--config", f, "--rho", "2"])), Err(CliError::Usage(_))));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, err) = run_in(dir.path(), &["frobnicate"]);
    assert_eq!(code, 2);
    assert!(err.to_lowercase().contains("usage"));
    assert_eq!(run_in(dir.path(), &["solve", "--rho", "-1"]).0, 2);
    let (code, out, _) = {
        let o = bin().arg("--help").output().unwrap();
        (o.status.code().unwrap(), String::from_utf8_lossy(&o.stdout).into_owned(), ())
    };
    assert_eq!(code, 0);
    assert!(out.contains("verify") && out.contains("probe-uniqueness"));
    // A solve the minimizer refuses is a runtime failure.
    assert_eq!(run_in(dir.path(), &["solve", "--rho-frac", "0.99", "--L", "8", "--n", "256"]).0, 1);
}

#[test]
fn groundstate_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let (code, out, _) = run_in(dir.path(), &["groundstate"]);
    assert_eq!(code, 0);
    assert!(out.contains("q0 = 2.20620"));
    let summary = read_json(&dir.path().join("groundstate.json"));
    assert!((summary["q0"].as_f64().unwrap() - 2.20620).abs() < 1e-4);
    assert!((summary["kinetic_over_mass"].as_f64().unwrap() - 1.0).abs() < 1e-6);
    assert!(summary["kernel_residual_dx1"].as_f64().unwrap() < 1e-3);
    let csv = std::fs::read_to_string(dir.path().join("profile.csv")).unwrap();
    assert!(csv.starts_with("r,q,dq\n0,2.20620"));
    assert!(csv.lines().count() > 2000);
    assert_eq!(read_json(&dir.path().join("config.json"))["command"], "groundstate");
}

#[test]
fn output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("from-env");
    let status = bin().arg("groundstate").env(logsp_cli::config::OUT_ENV, &target).status().unwrap();
    assert!(status.success());
    assert!(target.join("groundstate.json").exists());
}

#[test]
fn solve_round_trip_and_determinism() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let common = ["solve", "--rho-frac", "0.5", "--L", "8", "--n", "256"];
    assert_eq!(run_in(a.path(), &common).0, 0);
    assert_eq!(run_in(b.path(), &common).0, 0);
    for name in ["solve.json", "field.bin"] {
        assert_eq!(std::fs::read(a.path().join(name)).unwrap(), std::fs::read(b.path().join(name)).unwrap(), "{name}");
    }
    let summary = read_json(&a.path().join("solve.json"));
    let stored = summary["result"]["e"].as_f64().unwrap();
    assert_eq!(summary["result"]["converged"], true);
    let field = read_field(&a.path().join("field.bin")).unwrap();
    let e = evaluate_energy(&field, &build_log_kernel(field.grid())).unwrap().total;
    assert!(((e - stored) / stored).abs() < 1e-12, "{e} vs {stored}");

    // Text dump, then a restart from it.
    let c = tempfile::tempdir().unwrap();
    assert_eq!(run_in(c.path(), &[&common[..], &["--field-format", "text"]].concat()).0, 0);
    let text = read_field(&c.path().join("field.txt")).unwrap();
    assert_eq!(text.values(), field.values());
    let input = c.path().join("field.txt");
    let d = tempfile::tempdir().unwrap();
    let (code, _, _) = run_in(d.path(), &["solve", "--rho-frac", "0.5", "--init", "provided", "--input", input.to_str().unwrap()]);
    assert_eq!(code, 0);
    let again = read_json(&d.path().join("solve.json"));
    assert_eq!(again["n"], 256);
    assert!(((again["result"]["e"].as_f64().unwrap() - stored) / stored).abs() < 1e-10);
    let iters = |v: &Value| v["result"]["iters"].as_u64().unwrap();
    assert!(iters(&again) < iters(&summary));
    assert!(again["result"]["residual"].as_f64().unwrap() < 1e-10);
}

#[test]
fn sweep_table() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cmd = ["sweep", "--fracs", "0.6,0.3", "--L", "8", "--n", "256"];
    assert_eq!(run_in(a.path(), &cmd).0, 0);
    assert_eq!(run_in(b.path(), &cmd).0, 0);
    let csv = std::fs::read_to_string(a.path().join("sweep.csv")).unwrap();
    assert_eq!(csv, std::fs::read_to_string(b.path().join("sweep.csv")).unwrap());
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("rho,rho_frac,L,n,converged"));
    let header: Vec<&str> = lines[0].split(',').collect();
    let frac = header.iter().position(|h| *h == "rho_frac").unwrap();
    let cells: Vec<Vec<&str>> = lines[1..].iter().map(|l| l.split(',').collect()).collect();
    assert!(cells.iter().all(|c| c.len() == header.len()));
    assert_eq!(cells[0][frac], "0.3");
    assert_eq!(cells[1][frac], "0.6");
    let rows = read_json(&a.path().join("sweep.json"));
    assert_eq!(rows.as_array().unwrap().len(), 2);
}

#[test]
fn probes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run_in(dir.path(), &["probe-nonexistence"]).0, 0);
    let rep = read_json(&dir.path().join("nonexistence.json"));
    assert_eq!(rep["passed"], true);
    assert_eq!(rep["energies"].as_array().unwrap().len(), 4);
    assert_eq!(run_in(dir.path(), &["probe-nonexistence", "--rho-frac", "0.5"]).0, 2);

    let (code, out, _) = run_in(dir.path(), &["probe-uniqueness", "--rho-frac", "0.5", "--starts", "3", "--L", "8", "--n", "256"]);
    assert_eq!(code, 0);
    assert!(out.contains("3 starts"));
    let rep = read_json(&dir.path().join("uniqueness.json"));
    assert_eq!(rep["pairwise"].as_array().unwrap().len(), 3);
    assert!(rep["energy_spread"].as_f64().unwrap() < 1e-6);
}

#[test]
fn verify_writes_a_complete_report() {
    // A reduced run: two sweep fractions and a single uniqueness start, so
    // the report is complete but criterion 12 cannot pass.
    let dir = tempfile::tempdir().unwrap();
    let (code, out, _) = run_in(dir.path(), &["verify", "--fracs", "0.8,0.9", "--starts", "1"]);
    let report = read_json(&dir.path().join("report.json"));
    let criteria = report["criteria"].as_array().unwrap();
    let ids: Vec<u64> = criteria.iter().map(|c| c["id"].as_u64().unwrap()).collect();
    assert_eq!(ids, (1..=13).collect::<Vec<_>>());
    assert!(criteria.iter().all(|c| c["measured"].is_object()));
    assert_eq!(criteria[11]["passed"], false);
    assert_eq!(report["all_passed"], false);
    assert_eq!(code, 1);
    assert_eq!(out.lines().filter(|l| l.contains("criterion")).count(), 13);
    for name in ["energy", "blowup_rate", "multiplier", "profile_distance"] {
        let svg = std::fs::read_to_string(dir.path().join("plots").join(format!("{name}.svg"))).unwrap();
        assert!(svg.starts_with("<svg"));
    }
    assert_eq!(std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap().lines().count(), 3);
    for id in [1, 2, 3, 4, 11, 13] {
        assert_eq!(criteria[id - 1]["passed"], true, "criterion {id}: {}", criteria[id - 1]);
    }
}
