use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_unobs-stab"));
    c.env_remove("UNOBS_STAB_SEED");
    c
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let p = dir.join("scenario.cfg");
    std::fs::write(&p, text).unwrap();
    p
}

const FINITE: &str = "
strategy = finite
seed = 3
init.runs = 3
init.x_radius = 1
integrator.step = 1e-2
integrator.horizon = 2
integrator.record_every = 10
thresholds.x_max = 10
";

#[test]
fn zeros_prints_constants() {
    let out = bin().arg("zeros").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("j0=2.40482555769577"));
    assert!(text.contains("j1=1.84118378134065"));
    assert!(text.contains("nu="));
}

#[test]
fn equilibrium_gives_zero_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "strategy = finite\nfinite.rho = 1\ninit.x0 = 0, 0\ninit.xhat0 = 0, 0\nintegrator.horizon = 0.5\n",
    );
    let out = dir.path().join("out");
    let status = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(out.join("run_000.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,x1,x2,u,eps_norm,c_eps_abs"));
    for line in lines {
        assert!(
            line.split(',').skip(1).all(|v| v.parse::<f64>().unwrap() == 0.0),
            "{line}"
        );
    }
    let summary = std::fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("all_pass=true"));
}

#[test]
fn same_seed_gives_identical_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), FINITE);
    let run = |name: &str, jobs: &str| {
        let out = dir.path().join(name);
        let status = bin()
            .args(["simulate", "--jobs", jobs, "--svg", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success());
        out
    };
    let (a, b) = (run("a", "1"), run("b", "3"));
    for f in [
        "run_000.csv",
        "run_001.csv",
        "run_002.csv",
        "run_000.svg",
        "summary.txt",
    ] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn seed_variable_changes_draws() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), FINITE);
    let run = |name: &str, seed: Option<&str>| {
        let out = dir.path().join(name);
        let mut c = bin();
        if let Some(s) = seed {
            c.env("UNOBS_STAB_SEED", s);
        }
        assert!(c
            .args(["simulate", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap()
            .success());
        std::fs::read_to_string(out.join("summary.txt")).unwrap()
    };
    let base = run("base", None);
    let other = run("other", Some("4"));
    assert!(base.contains("seed=3") && other.contains("seed=4"));
    assert_ne!(
        base.lines().find(|l| l.starts_with("run.000.x0")),
        other.lines().find(|l| l.starts_with("run.000.x0"))
    );
}

#[test]
fn failing_thresholds_set_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &FINITE.replace("thresholds.x_max = 10", "thresholds.x_max = 1e-12"),
    );
    let out = dir.path().join("out");
    let status = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
    let summary = std::fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("all_pass=false"));
}

#[test]
fn invalid_config_lists_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "strategy = spectral\nspectral.mu = 0.1\nspectral.delta = 0.01\nspectral.big_delta = 4.0\ninit.x_radius = 1\n",
    );
    let out = bin()
        .args(["simulate", "--out", "unused", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("Delta must lie in (0, pi)"), "{err}");
    assert!(err.contains("integrator.horizon: missing key"), "{err}");
}

#[test]
fn large_delta_warns_on_stderr() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{FINITE}\nfinite.delta_ratio = 2"));
    let out = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("o"))
        .output()
        .unwrap();
    assert!(String::from_utf8(out.stderr).unwrap().contains("warning: delta"));
}

#[test]
fn analyze_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{FINITE}\nanalyze.trials = 10"));
    let out = dir.path().join("out");
    let run = bin()
        .args(["analyze", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(run.status.success());
    let report = std::fs::read_to_string(out.join("analysis.txt")).unwrap();
    assert!(report.contains("det_q.max_rel_err="));
    assert!(report.contains("finite.q_rank=4/4"));
    assert!(report.contains("finite.q_rank_at_zero_delta="));
}

#[test]
fn spectral_scenario_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "strategy = spectral\nspectral.mu = 0.5\nspectral.n = 10\nspectral.delta = 0.01\nspectral.big_delta = 0.1\n\
         init.runs = 2\ninit.x_radius = 0.5\nintegrator.horizon = 1\nthresholds.x_max = 10\n",
    );
    let out = dir.path().join("out");
    assert!(bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap()
        .success());
    let csv = std::fs::read_to_string(out.join("run_001.csv")).unwrap();
    assert!(csv.starts_with("t,x1,x2,u,eps_norm,c_eps_abs,weak_eps\n"));
    assert_eq!(csv.lines().count(), 12);
}

#[test]
fn shipped_scenarios_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "cfg") {
            let text = std::fs::read_to_string(&path).unwrap();
            if let Err(e) = unobs_stab_cli::config::parse_config_str(&text, None) {
                panic!("{}: {e}", path.display());
            }
            seen += 1;
        }
    }
    assert_eq!(seen, 4);
}
