//! Batch execution of a scenario and artifact emission.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use unobs_stab::finite::{tau_fin, FinParams};
use unobs_stab::sim::{convergence_metrics, run_finite_loop, run_spectral_loop, ConvergenceReport, Trajectory};

use crate::config::{InitialConditions, ScenarioConfig, Strategy, Thresholds};
use crate::svg::{line_plot, Series};

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub index: usize,
    pub x0: Vec<f64>,
    pub xhat0: Vec<f64>,
    pub report: Option<ConvergenceReport>,
    pub pass: bool,
    /// Why the run failed; empty when it passed.
    pub reasons: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioOutcome {
    pub runs: Vec<RunSummary>,
    pub all_pass: bool,
    pub summary_path: PathBuf,
}

fn in_ball(rng: &mut ChaCha8Rng, dim: usize, radius: f64) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        if v.iter().map(|a| a * a).sum::<f64>() <= 1.0 {
            return v.into_iter().map(|a| a * radius).collect();
        }
    }
}

/// Initial pairs `(x0, x̂0)`, drawn sequentially from the seed so the set does not depend on `--jobs`.
pub fn initial_pairs(cfg: &ScenarioConfig) -> Vec<(Vec<f64>, Vec<f64>)> {
    let dim = match &cfg.strategy {
        Strategy::Finite(f) => f.plant.dim(),
        Strategy::Spectral(_) => 2,
    };
    match &cfg.initial {
        InitialConditions::Explicit(p) => p.clone(),
        InitialConditions::Random {
            runs,
            x_radius,
            xhat_radius,
        } => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            (0..*runs)
                .map(|_| (in_ball(&mut rng, dim, *x_radius), in_ball(&mut rng, dim, *xhat_radius)))
                .collect()
        }
    }
}

fn simulate_one(cfg: &ScenarioConfig, x0: &[f64], xhat0: &[f64]) -> anyhow::Result<Trajectory> {
    match &cfg.strategy {
        Strategy::Finite(f) => {
            let p = FinParams::new(f.k.clone(), f.delta, f.alpha)?;
            Ok(run_finite_loop(&f.plant, &p, x0, &tau_fin(xhat0), &cfg.integrator)?)
        }
        Strategy::Spectral(s) => {
            let (x0, xhat0) = (pair(x0)?, pair(xhat0)?);
            Ok(run_spectral_loop(&s.output, &s.params, x0, xhat0, &cfg.integrator)?)
        }
    }
}

fn pair(v: &[f64]) -> anyhow::Result<[f64; 2]> {
    v.try_into()
        .map_err(|_| anyhow::anyhow!("the spectral plant is planar; got a point with {} coordinates", v.len()))
}

pub fn judge(report: &ConvergenceReport, th: &Thresholds) -> Vec<String> {
    let mut reasons = Vec::new();
    if report.diverged {
        reasons.push("diverged".to_string());
    }
    if report.violations > 0 {
        reasons.push(format!(
            "{} dissipativity violations (max step increase {:.3e})",
            report.violations, report.max_eps_increase
        ));
    }
    if !(report.trailing_max_x < th.x_max) {
        reasons.push(format!(
            "trailing max |x| = {:.3e} >= {:.3e}",
            report.trailing_max_x, th.x_max
        ));
    }
    if th.eps_decrease && !(report.final_eps <= report.initial_eps) {
        reasons.push(format!(
            "final error {:.3e} exceeds initial {:.3e}",
            report.final_eps, report.initial_eps
        ));
    }
    if let Some(c) = th.c_eps {
        if !(report.final_c_eps < c) {
            reasons.push(format!("final |C eps| = {:.3e} >= {c:.3e}", report.final_c_eps));
        }
    }
    reasons
}

pub fn csv_string(traj: &Trajectory) -> String {
    let dim = traj.x.first().map_or(2, Vec::len);
    let spectral = !traj.weak_eps.is_empty();
    let mut s = String::from("t");
    for i in 1..=dim {
        let _ = write!(s, ",x{i}");
    }
    s.push_str(",u,eps_norm,c_eps_abs");
    if spectral {
        s.push_str(",weak_eps");
    }
    s.push('\n');
    for i in 0..traj.len() {
        let _ = write!(s, "{:.16e}", traj.times[i]);
        for v in &traj.x[i] {
            let _ = write!(s, ",{v:.16e}");
        }
        let _ = write!(
            s,
            ",{:.16e},{:.16e},{:.16e}",
            traj.u[i], traj.eps_norm[i], traj.c_eps_abs[i]
        );
        if spectral {
            let _ = write!(s, ",{:.16e}", traj.weak_eps[i]);
        }
        s.push('\n');
    }
    s
}

fn svg_string(name: &str, index: usize, traj: &Trajectory) -> String {
    let xn: Vec<f64> = traj
        .x
        .iter()
        .map(|x| x.iter().map(|a| a * a).sum::<f64>().sqrt())
        .collect();
    line_plot(
        &format!("{name} run {index}"),
        &traj.times,
        &[
            Series {
                label: "|x(t)|",
                values: &xn,
            },
            Series {
                label: "‖ε(t)‖",
                values: &traj.eps_norm,
            },
        ],
    )
}

fn fmt_vec(v: &[f64]) -> String {
    v.iter().map(|a| format!("{a:.16e}")).collect::<Vec<_>>().join(",")
}

fn parameter_lines(cfg: &ScenarioConfig, s: &mut String) {
    let _ = writeln!(s, "name={}", cfg.name);
    let _ = writeln!(s, "strategy={}", cfg.strategy.name());
    let _ = writeln!(s, "seed={}", cfg.seed);
    match &cfg.strategy {
        Strategy::Finite(f) => {
            let _ = writeln!(s, "param.k={}", fmt_vec(f.k.as_slice()));
            let _ = writeln!(s, "param.delta={:.16e}", f.delta);
            let _ = writeln!(s, "param.delta0={:.16e}", f.delta0);
            let _ = writeln!(s, "param.alpha={:.16e}", f.alpha);
            let _ = writeln!(s, "param.rho={:.16e}", f.rho);
        }
        Strategy::Spectral(sp) => {
            let p = &sp.params;
            let _ = writeln!(s, "param.output={:?}", sp.output.kind());
            let _ = writeln!(s, "param.k={}", fmt_vec(p.k.as_slice()));
            let _ = writeln!(s, "param.delta={:.16e}", p.delta);
            let _ = writeln!(s, "param.big_delta={:.16e}", p.big_delta);
            let _ = writeln!(s, "param.alpha={:.16e}", p.alpha);
            let _ = writeln!(s, "param.mu={:.16e}", p.mu);
            let _ = writeln!(s, "param.j={:.16e}", p.j);
            let _ = writeln!(s, "param.n={}", p.n);
        }
    }
    let ic = &cfg.integrator;
    let _ = writeln!(s, "integrator.method={:?}", ic.method);
    let _ = writeln!(s, "integrator.step={:.16e}", ic.step);
    let _ = writeln!(s, "integrator.horizon={:.16e}", ic.horizon);
    for w in &cfg.warnings {
        let _ = writeln!(s, "warning={w}");
    }
}

fn summary_string(cfg: &ScenarioConfig, runs: &[RunSummary]) -> String {
    let mut s = String::new();
    parameter_lines(cfg, &mut s);
    let _ = writeln!(s, "runs={}", runs.len());
    for r in runs {
        let key = format!("run.{:03}", r.index);
        let _ = writeln!(s, "{key}.x0={}", fmt_vec(&r.x0));
        let _ = writeln!(s, "{key}.xhat0={}", fmt_vec(&r.xhat0));
        let status = match (&r.report, r.pass) {
            (None, _) => "error",
            (Some(_), true) => "pass",
            (Some(_), false) => "fail",
        };
        let _ = writeln!(s, "{key}.status={status}");
        if let Some(m) = &r.report {
            let _ = writeln!(s, "{key}.trailing_max_x={:.16e}", m.trailing_max_x);
            let _ = writeln!(s, "{key}.initial_eps={:.16e}", m.initial_eps);
            let _ = writeln!(s, "{key}.final_eps={:.16e}", m.final_eps);
            let _ = writeln!(s, "{key}.final_c_eps={:.16e}", m.final_c_eps);
            let _ = writeln!(s, "{key}.final_weak_eps={:.16e}", m.final_weak_eps);
            let _ = writeln!(s, "{key}.violations={}", m.violations);
            let _ = writeln!(s, "{key}.max_eps_increase={:.16e}", m.max_eps_increase);
            let _ = writeln!(s, "{key}.clamp_events={}", m.clamp_events);
            let _ = writeln!(s, "{key}.diverged={}", m.diverged);
        }
        if !r.reasons.is_empty() {
            let _ = writeln!(s, "{key}.reason={}", r.reasons.join("; "));
        }
    }
    let passed = runs.iter().filter(|r| r.pass).count();
    let _ = writeln!(s, "passed={passed}");
    let _ = writeln!(s, "all_pass={}", passed == runs.len());
    s
}

/// Runs every initial pair, writes `run_NNN.csv` (and `run_NNN.svg`) plus `summary.txt` into `out`.
pub fn run_scenario(
    cfg: &ScenarioConfig,
    out: &Path,
    jobs: Option<usize>,
    svg: bool,
) -> anyhow::Result<ScenarioOutcome> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let pairs = initial_pairs(cfg);
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        builder = builder.num_threads(j.max(1));
    }
    let pool = builder.build()?;
    let results: Vec<anyhow::Result<RunSummary>> = pool.install(|| {
        pairs
            .par_iter()
            .enumerate()
            .map(|(index, (x0, xhat0))| {
                let mut summary = RunSummary {
                    index,
                    x0: x0.clone(),
                    xhat0: xhat0.clone(),
                    report: None,
                    pass: false,
                    reasons: Vec::new(),
                };
                let traj = match simulate_one(cfg, x0, xhat0) {
                    Ok(t) => t,
                    Err(e) => {
                        summary.reasons.push(e.to_string());
                        return Ok(summary);
                    }
                };
                let csv = out.join(format!("run_{index:03}.csv"));
                std::fs::write(&csv, csv_string(&traj)).with_context(|| format!("writing {}", csv.display()))?;
                if svg {
                    let path = out.join(format!("run_{index:03}.svg"));
                    std::fs::write(&path, svg_string(&cfg.name, index, &traj))
                        .with_context(|| format!("writing {}", path.display()))?;
                }
                let report = convergence_metrics(&traj)?;
                summary.reasons = judge(&report, &cfg.thresholds);
                summary.pass = summary.reasons.is_empty();
                summary.report = Some(report);
                Ok(summary)
            })
            .collect()
    });
    let runs = results.into_iter().collect::<anyhow::Result<Vec<_>>>()?;
    let summary_path = out.join("summary.txt");
    std::fs::write(&summary_path, summary_string(cfg, &runs))
        .with_context(|| format!("writing {}", summary_path.display()))?;
    let all_pass = runs.iter().all(|r| r.pass);
    Ok(ScenarioOutcome {
        runs,
        all_pass,
        summary_path,
    })
}
