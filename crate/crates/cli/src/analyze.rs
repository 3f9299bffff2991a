//! Static analyses of a scenario: determinant identity, Gramians, control bound, radii.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context;
use unobs_stab::finite::build_q;
use unobs_stab::linalg::{rank, RANK_TOL};
use unobs_stab::observability::{check_bound_inequalities, choose_radii, det_q_check, observability_gramian, umax};
use unobs_stab::special::find_zeros;
use unobs_stab::spectral::{nu_constant, output_zeta, OutputKind, OutputSpec};

use crate::config::{ScenarioConfig, Strategy};

pub fn analyze_report(cfg: &ScenarioConfig) -> anyhow::Result<String> {
    let mut s = String::new();
    let _ = writeln!(s, "name={}", cfg.name);
    let _ = writeln!(s, "strategy={}", cfg.strategy.name());
    let _ = writeln!(s, "seed={}", cfg.seed);

    let det = det_q_check(cfg.analysis.trials, cfg.seed)?;
    let _ = writeln!(s, "det_q.trials={}", det.trials);
    let _ = writeln!(s, "det_q.max_rel_err={:.6e}", det.max_rel_err);
    let _ = writeln!(s, "det_q.max_rel_err_negated={:.6e}", det.max_rel_err_negated);
    let _ = writeln!(
        s,
        "det_q.singular_at_zero_delta={}/{}",
        det.singular_at_zero_delta, det.trials
    );

    match &cfg.strategy {
        Strategy::Finite(f) => {
            let _ = writeln!(s, "finite.delta={:.16e}", f.delta);
            let _ = writeln!(s, "finite.delta0={:.16e}", f.delta0);
            let _ = writeln!(s, "finite.delta_below_delta0={}", f.delta < f.delta0);
            let n = f.plant.dim();
            let q = build_q(&f.k, f.plant.a(), f.delta, f.alpha)?;
            let r = rank(&q, RANK_TOL);
            let _ = writeln!(s, "finite.q_rank={r}/{}", n + 2);
            let _ = writeln!(s, "finite.q_singular={}", r < n + 2);
            let q0 = build_q(&f.k, f.plant.a(), 0.0, f.alpha)?;
            let _ = writeln!(s, "finite.q_rank_at_zero_delta={}/{}", rank(&q0, RANK_TOL), n + 2);
        }
        Strategy::Spectral(sp) => {
            let a = &cfg.analysis;
            let spec = match sp.output.kind() {
                OutputKind::BesselSeries => OutputSpec::bessel_series(a.gramian_mu, sp.output.coeffs().to_vec())?,
                kind => OutputSpec::new(kind, a.gramian_mu)?,
            };
            let zeta = output_zeta(&spec, a.gramian_n)?;
            let _ = writeln!(s, "gramian.n={}", a.gramian_n);
            let _ = writeln!(s, "gramian.mu={:.6e}", a.gramian_mu);
            let _ = writeln!(s, "gramian.horizon={:.6e}", a.gramian_horizon);
            for (i, &u) in a.u_grid.iter().enumerate() {
                let g = observability_gramian(u, a.gramian_horizon, &zeta, a.gramian_mu, a.gramian_steps)?;
                let _ = writeln!(
                    s,
                    "gramian.{i}.u={u:.3}\ngramian.{i}.lambda_min={:.6e}\ngramian.{i}.lambda_max={:.6e}",
                    g.lambda_min, g.lambda_max
                );
            }
            let p = &sp.params;
            let um = umax(sp.constants.kappa, p.j, p.mu, p.delta)?;
            let _ = writeln!(s, "umax.value={:.6e}", um.umax);
            let _ = writeln!(s, "umax.j0={:.6e}", um.j0);
            let _ = writeln!(s, "umax.applicable={}", um.applicable);
            let _ = writeln!(s, "bounds.kappa={:.6e}", sp.constants.kappa);
            let _ = writeln!(s, "bounds.m={:.6e}", sp.constants.m);
            let _ = writeln!(s, "bounds.j={:.6e}", sp.constants.j);
            let r0 = sp.radii.as_ref().map_or(1.0, |b| b.r0);
            let certificate = match &sp.radii {
                Some(b) => Ok(b.clone()),
                None => choose_radii(r0, &sp.constants, Some(p.mu)),
            };
            match certificate {
                Ok(b) => {
                    let (i1, i2) = check_bound_inequalities(&b)?;
                    let _ = writeln!(
                        s,
                        "bounds.r0={:.6e}\nbounds.r1={:.6e}\nbounds.r2={:.6e}",
                        b.r0, b.r1, b.r2
                    );
                    let _ = writeln!(s, "bounds.delta={:.6e}\nbounds.big_delta={:.6e}", b.delta, b.big_delta);
                    let _ = writeln!(s, "bounds.ell_pi={:.6e}", b.ell_pi);
                    let _ = writeln!(s, "bounds.ineq1={i1:.6e}\nbounds.ineq2={i2:.6e}");
                    let _ = writeln!(s, "bounds.satisfied={}", i1 < 0.0 && i2 < 0.0);
                }
                Err(e) => {
                    let _ = writeln!(s, "bounds.r0={r0:.6e}");
                    let _ = writeln!(s, "bounds.satisfied=false");
                    let _ = writeln!(s, "bounds.error={e}");
                }
            }
        }
    }
    Ok(s)
}

pub fn analyze(cfg: &ScenarioConfig, out: &Path) -> anyhow::Result<PathBuf> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let path = out.join("analysis.txt");
    std::fs::write(&path, analyze_report(cfg)?).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

pub fn zeros_report() -> String {
    let z = find_zeros();
    format!("j0={:.16e}\nj1={:.16e}\nnu={:.16e}\n", z.j0, z.j1, nu_constant())
}
