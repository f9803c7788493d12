use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cis::formats::{read_jsonl, read_projector, write_projector, RunLine, Table};
use cis::ExperimentConfig;

const BIN: &str = env!("CARGO_BIN_EXE_cis");

fn cis(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("CIS_LOG").output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("config.toml");
    fs::write(&path, body).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL_CHECK: &str = "[blg_check]\ninstances = 6\nn_max = 8\nm_max = 4\nalternatives = 4\n";

const SMALL_LINEAR: &str = r#"
[method]
kind = "cis"
n_init = 300
n_ite = 4
chain_steps = 300

[sampler]
n_steps = 3000
burn_in = 500
"#;

#[test]
fn blg_check_reports_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), SMALL_CHECK);
    let out = cis(&["--config", s(&cfg), "--out", s(dir.path()), "blg-check"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("6 of 6 instances pass"));
    let t = Table::read(&dir.path().join("blg_check.csv")).unwrap();
    assert_eq!(t.column("pass").unwrap(), vec![1.0; 6]);
}

#[test]
fn failed_checks_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), &format!("{SMALL_CHECK}basis = \"leading\"\n"));
    let out = cis(&["--config", s(&cfg), "--out", s(dir.path()), "blg-check"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));
}

#[test]
fn invalid_configuration_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    for body in
        ["[problem]\nkind = \"linear\"\nn = 4\nm = 2\nbogus = 1\n", "schema_version = 99\n", "[rank]\nr_min = 5\nr_max = 2\n"]
    {
        let cfg = config(dir.path(), body);
        let out = cis(&["--config", s(&cfg), "--out", s(dir.path()), "reduce"]);
        assert_eq!(code(&out), 2, "{body}");
        assert!(!out.stderr.is_empty());
    }
    let out = cis(&["--config", s(&dir.path().join("missing.toml")), "reduce"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn degenerate_weights_exit_three_with_a_hint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        "[problem]\nkind = \"concentrated-2d\"\nvariance_ratio = 1e-6\n[method]\nkind = \"cis\"\nn_init = 200\nn_ite = 2\nchain_steps = 100\n[rank]\nr_max = 1\n",
    );
    let out = cis(&["--config", s(&cfg), "--out", s(dir.path()), "reduce"]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("cis-smc"));
}

#[test]
fn exhausted_stage_budget_exits_four() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        "[problem]\nkind = \"concentrated-2d\"\nvariance_ratio = 1e-6\ntheta = 0.2\ny = 4.0\n[method]\nkind = \"cis-smc\"\nn_samp = 20\nn_perp = 2\nmax_stages = 1\n[rank]\nrule = \"threshold\"\nthreshold = 0.5\nr_max = 1\n",
    );
    let out = cis(&["--config", s(&cfg), "--out", s(dir.path()), "reduce"]);
    assert_eq!(code(&out), 4, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn reduce_sample_diagnose_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), SMALL_LINEAR);
    let d = s(dir.path());
    for cmd in ["reduce", "sample", "diagnose", "compare"] {
        let out = cis(&["--config", s(&cfg), "--out", d, "--seed", "4", "--emit-plot-data", cmd]);
        assert_eq!(code(&out), 0, "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let p = read_projector(&dir.path().join("projector.txt")).unwrap();
    assert_eq!(p.dim(), 6);
    let lines = read_jsonl(&dir.path().join("run.jsonl")).unwrap();
    assert!(matches!(lines[0], RunLine::Run { seed: 4, dim: 6, .. }));
    let samples = Table::read(&dir.path().join("samples.csv")).unwrap();
    assert_eq!((samples.rows.len(), samples.header.len()), (2500, 6));
    assert_eq!(Table::read(&dir.path().join("diagnostics.csv")).unwrap().rows.len(), 4);
    for f in ["acf.csv", "stage2.csv", "moments.csv", "angles.csv", "spectra.csv", "compare.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    for f in [
        "estimator_convergence.csv",
        "weights.csv",
        "spectrum.csv",
        "bound_by_rank.csv",
        "successive_angles.csv",
        "marginals.csv",
    ] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
}

#[test]
fn sample_rejects_a_projector_of_the_wrong_dimension() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), SMALL_LINEAR);
    assert_eq!(code(&cis(&["--config", s(&cfg), "--out", s(dir.path()), "reduce"])), 0);
    let other = config(dir.path(), &format!("{SMALL_LINEAR}\n[problem]\nkind = \"linear\"\nn = 4\nm = 2\n"));
    let bundle = dir.path().join("projector.txt");
    let out = cis(&["--config", s(&other), "--out", s(dir.path()), "sample", "--projector", s(&bundle)]);
    assert_eq!(code(&out), 2);
}

fn run_all(dir: &Path, cfg: &Path, threads: &str) -> Vec<(String, Vec<u8>)> {
    for cmd in ["reduce", "sample", "compare"] {
        let out = cis(&["--config", s(cfg), "--out", s(dir), "--seed", "21", "--threads", threads, "--emit-plot-data", cmd]);
        assert_eq!(code(&out), 0, "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn fixed_seed_runs_are_byte_identical_for_any_thread_count() {
    let root = tempfile::tempdir().unwrap();
    let cfg = config(root.path(), SMALL_LINEAR);
    let outs: Vec<_> = ["1", "1", "4"]
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let d = root.path().join(format!("run{i}"));
            run_all(&d, &cfg, t)
        })
        .collect();
    assert!(outs[0].len() >= 10);
    assert_eq!(outs[0], outs[1]);
    assert_eq!(outs[0], outs[2]);

    let d = root.path().join("other-seed");
    let out = cis(&["--config", s(&cfg), "--out", s(&d), "--seed", "22", "reduce"]);
    assert_eq!(code(&out), 0);
    assert_ne!(fs::read(d.join("run.jsonl")).unwrap(), outs[0].iter().find(|(n, _)| n == "run.jsonl").unwrap().1);
}

#[test]
fn written_files_round_trip_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), SMALL_LINEAR);
    for cmd in ["reduce", "sample"] {
        assert_eq!(code(&cis(&["--config", s(&cfg), "--out", s(dir.path()), cmd])), 0);
    }
    for name in ["samples.csv", "acf.csv", "moments.csv"] {
        let path = dir.path().join(name);
        let t = Table::read(&path).unwrap();
        let copy = dir.path().join(format!("copy-{name}"));
        t.write(&copy).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&copy).unwrap(), "{name}");
        let back = Table::read(&copy).unwrap();
        for (a, b) in t.rows.iter().flatten().zip(back.rows.iter().flatten()) {
            assert!(a.to_bits() == b.to_bits() || (a - b).abs() <= 1e-15 * a.abs().max(1.0));
        }
    }
    let bundle = dir.path().join("projector.txt");
    let p = read_projector(&bundle).unwrap();
    let copy = dir.path().join("copy-projector.txt");
    write_projector(&copy, &p).unwrap();
    assert_eq!(fs::read(&bundle).unwrap(), fs::read(&copy).unwrap());
}

#[test]
fn shipped_configs_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut n = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        n += 1;
    }
    assert!(n >= 4);
}

#[test]
fn log_level_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), SMALL_LINEAR);
    let out =
        Command::new(BIN).args(["--config", s(&cfg), "--out", s(dir.path()), "reduce"]).env("CIS_LOG", "info").output().unwrap();
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stderr).contains("iteration 1"));
    assert!(cis(&["--config", s(&cfg), "--out", s(dir.path()), "reduce"]).stderr.is_empty());
}
