//! Fixed-step integration of the two closed loops and their convergence metrics.

use num_complex::Complex64;
use thiserror::Error;

use crate::finite::{closed_loop_rhs_into, lambda_delta, tau_fin, FinParams, FiniteError, FinitePlant};
use crate::linalg::{expm, LinalgError};
use crate::spectral::{
    aop_matrix, apply_aop_into, assemble_aop, frak_h, output_zeta, plant_output, sample_hold_feedback, tau_spec,
    tau_spec_into, weak_norm_sq, Branch, OutputSpec, SpectralError, SpectralParams, SpectralVec,
};

/// States larger than this are treated as divergence.
pub const DIVERGENCE_THRESHOLD: f64 = 1e6;

/// Allowed per-step growth of `‖ε‖` before a step counts as a dissipativity violation.
pub const MONOTONE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite state at t = {0}")]
    NonFinite(f64),
    #[error(transparent)]
    Finite(#[from] FiniteError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Rk4Coupled,
    ExactLinear,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub method: Method,
    pub step: f64,
    pub horizon: f64,
    /// Record one sample every this many steps (the final time is always recorded).
    pub record_every: usize,
}

impl IntegratorConfig {
    pub fn new(method: Method, step: f64, horizon: f64) -> Self {
        Self {
            method,
            step,
            horizon,
            record_every: 1,
        }
    }

    pub fn with_record_every(self, record_every: usize) -> Self {
        Self { record_every, ..self }
    }

    fn steps(&self) -> Result<usize, SimError> {
        if !(self.step > 0.0 && self.step.is_finite()) || !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(SimError::InvalidConfig(format!(
                "step and horizon must be positive, got {} and {}",
                self.step, self.horizon
            )));
        }
        if self.record_every == 0 {
            return Err(SimError::InvalidConfig("record_every must be at least 1".into()));
        }
        Ok((self.horizon / self.step).round().max(1.0) as usize)
    }
}

/// Classical fourth-order Runge-Kutta with preallocated stage buffers.
#[derive(Debug, Clone)]
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub fn new(dim: usize) -> Self {
        Self {
            k1: vec![0.0; dim],
            k2: vec![0.0; dim],
            k3: vec![0.0; dim],
            k4: vec![0.0; dim],
            tmp: vec![0.0; dim],
        }
    }

    pub fn step(&mut self, mut f: impl FnMut(&[f64], &mut [f64]), y: &mut [f64], h: f64) {
        f(y, &mut self.k1);
        for i in 0..y.len() {
            self.tmp[i] = y[i] + 0.5 * h * self.k1[i];
        }
        f(&self.tmp, &mut self.k2);
        for i in 0..y.len() {
            self.tmp[i] = y[i] + 0.5 * h * self.k2[i];
        }
        f(&self.tmp, &mut self.k3);
        for i in 0..y.len() {
            self.tmp[i] = y[i] + h * self.k3[i];
        }
        f(&self.tmp, &mut self.k4);
        for i in 0..y.len() {
            y[i] += h / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
    }
}

/// Sampled solution of a generic ODE.
#[derive(Debug, Clone, PartialEq)]
pub struct StateHistory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

pub fn rk4_integrate(
    mut rhs: impl FnMut(f64, &[f64], &mut [f64]),
    s0: &[f64],
    cfg: &IntegratorConfig,
) -> Result<StateHistory, SimError> {
    let steps = cfg.steps()?;
    let h = cfg.step;
    let mut y = s0.to_vec();
    let mut rk = Rk4::new(y.len());
    let mut hist = StateHistory {
        times: vec![0.0],
        states: vec![y.clone()],
    };
    for i in 0..steps {
        let t = i as f64 * h;
        rk.step(|s, d| rhs(t, s, d), &mut y, h);
        let t_next = (i + 1) as f64 * h;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(SimError::NonFinite(t_next));
        }
        if (i + 1).is_multiple_of(cfg.record_every) || i + 1 == steps {
            hist.times.push(t_next);
            hist.states.push(y.clone());
        }
    }
    Ok(hist)
}

/// Observer samples: embedded vectors for the finite loop, Fourier coefficients for the spectral one.
#[derive(Debug, Clone, PartialEq)]
pub enum ObserverSamples {
    Finite(Vec<Vec<f64>>),
    Spectral(Vec<Vec<Complex64>>),
}

impl ObserverSamples {
    fn len(&self) -> usize {
        match self {
            Self::Finite(v) => v.len(),
            Self::Spectral(v) => v.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub zhat: ObserverSamples,
    pub u: Vec<f64>,
    pub eps_norm: Vec<f64>,
    pub c_eps_abs: Vec<f64>,
    /// `𝒩(ε)`; empty for the finite loop.
    pub weak_eps: Vec<f64>,
    /// Largest single-step increase of `‖ε‖` over every integration step.
    pub max_eps_increase: f64,
    /// Integration steps where `‖ε‖` grew by more than [`MONOTONE_TOL`].
    pub dissipativity_violations: usize,
    /// Sample instants where the left-inverse left its exact branch.
    pub clamp_events: usize,
    /// Time at which the state exceeded [`DIVERGENCE_THRESHOLD`] or became non-finite.
    pub diverged_at: Option<f64>,
}

impl Trajectory {
    fn new(finite: bool) -> Self {
        Self {
            times: Vec::new(),
            x: Vec::new(),
            zhat: if finite {
                ObserverSamples::Finite(Vec::new())
            } else {
                ObserverSamples::Spectral(Vec::new())
            },
            u: Vec::new(),
            eps_norm: Vec::new(),
            c_eps_abs: Vec::new(),
            weak_eps: Vec::new(),
            max_eps_increase: f64::NEG_INFINITY,
            dissipativity_violations: 0,
            clamp_events: 0,
            diverged_at: None,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    fn note_eps(&mut self, before: f64, after: f64) {
        let inc = after - before;
        self.max_eps_increase = self.max_eps_increase.max(inc);
        if inc > MONOTONE_TOL {
            self.dissipativity_violations += 1;
        }
    }

    /// Checks the structural invariants: equal lengths and strictly increasing times.
    pub fn is_consistent(&self) -> bool {
        let n = self.times.len();
        let same = [
            self.x.len(),
            self.zhat.len(),
            self.u.len(),
            self.eps_norm.len(),
            self.c_eps_abs.len(),
        ]
        .iter()
        .all(|&l| l == n)
            && (self.weak_eps.is_empty() || self.weak_eps.len() == n);
        same && self.times.windows(2).all(|w| w[1] > w[0])
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn cnorm(v: &[Complex64]) -> f64 {
    v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
}

/// Integrates the embedded-observer loop with continuous feedback `u = λ_δ(ẑ)`.
pub fn run_finite_loop(
    plant: &FinitePlant,
    p: &FinParams,
    x0: &[f64],
    zhat0: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Trajectory, SimError> {
    if cfg.method != Method::Rk4Coupled {
        return Err(SimError::InvalidConfig(
            "the finite loop is nonlinear; only rk4_coupled applies".into(),
        ));
    }
    let steps = cfg.steps()?;
    let n = plant.dim();
    if x0.len() != n || zhat0.len() != n + 1 || p.k.len() != n {
        return Err(SimError::InvalidConfig(format!(
            "dimension mismatch: plant n = {n}, x0 has {}, zhat0 has {}, K has {}",
            x0.len(),
            zhat0.len(),
            p.k.len()
        )));
    }
    let mut s: Vec<f64> = x0.iter().chain(zhat0).copied().collect();
    let mut eps = vec![0.0; n + 1];
    let error = |s: &[f64], eps: &mut [f64]| {
        let (x, z) = s.split_at(n);
        let t = tau_fin(x);
        for i in 0..=n {
            eps[i] = z[i] - t[i];
        }
    };
    let mut traj = Trajectory::new(true);
    let record = |traj: &mut Trajectory, t: f64, s: &[f64], eps: &[f64]| {
        traj.times.push(t);
        traj.x.push(s[..n].to_vec());
        if let ObserverSamples::Finite(v) = &mut traj.zhat {
            v.push(s[n..].to_vec());
        }
        traj.u.push(lambda_delta(&s[n..], &p.k, p.delta));
        traj.eps_norm.push(norm(eps));
        traj.c_eps_abs.push(eps[n].abs());
    };
    error(&s, &mut eps);
    record(&mut traj, 0.0, &s, &eps);
    let mut eps_prev = norm(&eps);
    let mut rk = Rk4::new(s.len());
    let h = cfg.step;
    for i in 0..steps {
        rk.step(
            |y, d| {
                closed_loop_rhs_into(y, p, plant, d);
            },
            &mut s,
            h,
        );
        let t = (i + 1) as f64 * h;
        if s.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_THRESHOLD) {
            traj.diverged_at = Some(t);
            break;
        }
        error(&s, &mut eps);
        let e = norm(&eps);
        traj.note_eps(eps_prev, e);
        eps_prev = e;
        if (i + 1).is_multiple_of(cfg.record_every) || i + 1 == steps {
            record(&mut traj, t, &s, &eps);
        }
    }
    Ok(traj)
}

fn rotate_with_input(xk: [f64; 2], u: f64, s: f64) -> [f64; 2] {
    // e^{sA} x_k + ∫_0^s e^{(s-σ)A} b u dσ with A the rotation and b = (0, 1).
    let (sn, cs) = s.sin_cos();
    [
        cs * xk[0] - sn * xk[1] + u * (cs - 1.0),
        sn * xk[0] + cs * xk[1] + u * sn,
    ]
}

struct SpectralSetup {
    zeta: SpectralVec,
    inv: crate::spectral::LeftInverse,
    per_interval: usize,
    steps: usize,
}

fn spectral_setup(spec: &OutputSpec, p: &SpectralParams, cfg: &IntegratorConfig) -> Result<SpectralSetup, SimError> {
    p.validate()?;
    if (spec.mu() - p.mu).abs() > 1e-15 * p.mu {
        return Err(SimError::InvalidConfig(format!(
            "output μ = {} differs from controller μ = {}",
            spec.mu(),
            p.mu
        )));
    }
    let steps = cfg.steps()?;
    let ratio = p.big_delta / cfg.step;
    let per_interval = ratio.round() as usize;
    if per_interval == 0 || (ratio - per_interval as f64).abs() > 1e-9 * ratio {
        return Err(SimError::InvalidConfig(format!(
            "Delta / step = {ratio} must be a positive integer"
        )));
    }
    Ok(SpectralSetup {
        zeta: output_zeta(spec, p.n)?,
        inv: p.left_inverse()?,
        per_interval,
        steps,
    })
}

/// Integrates the sample-and-hold spectral loop with `ẑ(0) = τ(x̂0)`.
pub fn run_spectral_loop(
    spec: &OutputSpec,
    p: &SpectralParams,
    x0: [f64; 2],
    xhat0: [f64; 2],
    cfg: &IntegratorConfig,
) -> Result<Trajectory, SimError> {
    let setup = spectral_setup(spec, p, cfg)?;
    match cfg.method {
        Method::ExactLinear => run_exact(p, &setup, x0, xhat0, cfg),
        Method::Rk4Coupled => run_coupled(spec, p, &setup, x0, xhat0, cfg),
    }
}

fn record_spectral(
    traj: &mut Trajectory,
    t: f64,
    x: [f64; 2],
    zhat: &[Complex64],
    u: f64,
    eps: &[Complex64],
    zeta: &SpectralVec,
) {
    traj.times.push(t);
    traj.x.push(x.to_vec());
    if let ObserverSamples::Spectral(v) = &mut traj.zhat {
        v.push(zhat.to_vec());
    }
    traj.u.push(u);
    traj.eps_norm.push(cnorm(eps));
    let c: Complex64 = eps.iter().zip(zeta.as_slice()).map(|(a, b)| a * b.conj()).sum();
    traj.c_eps_abs.push(c.norm());
    traj.weak_eps.push(weak_norm_sq(eps).sqrt());
}

fn run_exact(
    p: &SpectralParams,
    setup: &SpectralSetup,
    x0: [f64; 2],
    xhat0: [f64; 2],
    cfg: &IntegratorConfig,
) -> Result<Trajectory, SimError> {
    let n = p.n;
    let len = 2 * n + 1;
    let h = cfg.step;
    let mut z = tau_spec(x0, p.mu, n)?;
    let zhat0 = tau_spec(xhat0, p.mu, n)?;
    let mut eps: Vec<Complex64> = zhat0.as_slice().iter().zip(z.as_slice()).map(|(a, b)| a - b).collect();
    let mut next = vec![Complex64::new(0.0, 0.0); len];
    let mut zhat = vec![Complex64::new(0.0, 0.0); len];
    let mut traj = Trajectory::new(false);
    let mut x = x0;
    let mut eps_prev = cnorm(&eps);
    let mut step = 0usize;
    while step < setup.steps {
        // Left limit ẑ(t_k^-) = z(t_k) + ε(t_k).
        for i in 0..len {
            zhat[i] = z.as_slice()[i] + eps[i];
        }
        let zh = SpectralVec::from_coeffs(zhat.clone())?;
        let (u, branch) = sample_hold_feedback(&zh, p, &setup.inv);
        if branch != Branch::Exact {
            traj.clamp_events += 1;
        }
        if step == 0 {
            record_spectral(&mut traj, 0.0, x, &zhat, u, &eps, &setup.zeta);
        }
        let prop = expm(&assemble_aop(u, p.mu, p.alpha, &setup.zeta), h)?;
        let xk = x;
        let last = (step + setup.per_interval).min(setup.steps);
        for s in step + 1..=last {
            prop.mul_vec_into(&eps, &mut next);
            std::mem::swap(&mut eps, &mut next);
            let e = cnorm(&eps);
            traj.note_eps(eps_prev, e);
            eps_prev = e;
            x = rotate_with_input(xk, u, (s - step) as f64 * h);
            let t = s as f64 * h;
            if !(x[0].is_finite() && x[1].is_finite()) || x[0].hypot(x[1]) > DIVERGENCE_THRESHOLD || !e.is_finite() {
                traj.diverged_at = Some(t);
                return Ok(traj);
            }
            if s.is_multiple_of(cfg.record_every) || s == setup.steps {
                tau_spec_into(x, p.mu, &mut z)?;
                for i in 0..len {
                    zhat[i] = z.as_slice()[i] + eps[i];
                }
                record_spectral(&mut traj, t, x, &zhat, u, &eps, &setup.zeta);
            }
        }
        step = last;
        tau_spec_into(x, p.mu, &mut z)?;
    }
    Ok(traj)
}

fn run_coupled(
    spec: &OutputSpec,
    p: &SpectralParams,
    setup: &SpectralSetup,
    x0: [f64; 2],
    xhat0: [f64; 2],
    cfg: &IntegratorConfig,
) -> Result<Trajectory, SimError> {
    let n = p.n;
    let len = 2 * n + 1;
    let h = cfg.step;
    let zeta = setup.zeta.as_slice().to_vec();
    // Packed real state [x1, x2, Re ẑ, Im ẑ].
    let mut s = vec![0.0; 2 + 2 * len];
    s[0] = x0[0];
    s[1] = x0[1];
    let zhat0 = tau_spec(xhat0, p.mu, n)?;
    for (i, c) in zhat0.as_slice().iter().enumerate() {
        s[2 + i] = c.re;
        s[2 + len + i] = c.im;
    }
    let unpack = |s: &[f64], out: &mut [Complex64]| {
        for i in 0..len {
            out[i] = Complex64::new(s[2 + i], s[2 + len + i]);
        }
    };
    let mut zbuf = vec![Complex64::new(0.0, 0.0); len];
    let mut azbuf = vec![Complex64::new(0.0, 0.0); len];
    let mut zhat = vec![Complex64::new(0.0, 0.0); len];
    let mut z = SpectralVec::zeros(n);
    let mut eps = vec![Complex64::new(0.0, 0.0); len];
    let mut rk = Rk4::new(s.len());
    let mut traj = Trajectory::new(false);
    let mut failure: Option<SpectralError> = None;

    let error_of =
        |s: &[f64], z: &mut SpectralVec, zhat: &mut [Complex64], eps: &mut [Complex64]| -> Result<(), SpectralError> {
            unpack(s, zhat);
            tau_spec_into([s[0], s[1]], p.mu, z)?;
            for i in 0..len {
                eps[i] = zhat[i] - z.as_slice()[i];
            }
            Ok(())
        };

    error_of(&s, &mut z, &mut zhat, &mut eps)?;
    let mut eps_prev = cnorm(&eps);
    let mut u = 0.0;
    for step in 0..setup.steps {
        if step.is_multiple_of(setup.per_interval) {
            unpack(&s, &mut zhat);
            let zh = SpectralVec::from_coeffs(zhat.clone())?;
            let (uk, branch) = sample_hold_feedback(&zh, p, &setup.inv);
            u = uk;
            if branch != Branch::Exact {
                traj.clamp_events += 1;
            }
            if step == 0 {
                record_spectral(&mut traj, 0.0, [s[0], s[1]], &zhat, u, &eps, &setup.zeta);
            }
        }
        let uk = u;
        rk.step(
            |y, d| {
                let x = [y[0], y[1]];
                d[0] = -x[1];
                d[1] = x[0] + uk;
                let measured = plant_output(spec, x).and_then(|v| frak_h(spec, v));
                let measured = match measured {
                    Ok(m) => m,
                    Err(e) => {
                        failure.get_or_insert(e);
                        Complex64::new(f64::NAN, f64::NAN)
                    }
                };
                unpack(y, &mut zbuf);
                apply_aop_into(uk, p.mu, &zbuf, &mut azbuf);
                let innovation: Complex64 =
                    zbuf.iter().zip(&zeta).map(|(a, b)| a * b.conj()).sum::<Complex64>() - measured;
                for i in 0..len {
                    let v = azbuf[i] - p.alpha * zeta[i] * innovation;
                    d[2 + i] = v.re;
                    d[2 + len + i] = v.im;
                }
            },
            &mut s,
            h,
        );
        if let Some(e) = failure.take() {
            return Err(e.into());
        }
        let t = (step + 1) as f64 * h;
        if s.iter().any(|v| !v.is_finite()) || s[0].hypot(s[1]) > DIVERGENCE_THRESHOLD {
            traj.diverged_at = Some(t);
            return Ok(traj);
        }
        error_of(&s, &mut z, &mut zhat, &mut eps)?;
        let e = cnorm(&eps);
        traj.note_eps(eps_prev, e);
        eps_prev = e;
        if (step + 1).is_multiple_of(cfg.record_every) || step + 1 == setup.steps {
            record_spectral(&mut traj, t, [s[0], s[1]], &zhat, u, &eps, &setup.zeta);
        }
    }
    Ok(traj)
}

/// Largest `|‖e^{tA(u)} z0‖ - ‖z0‖|` when stepping the constant-input propagator.
pub fn unitary_drift(z0: &SpectralVec, u: f64, mu: f64, step: f64, horizon: f64) -> Result<f64, SimError> {
    let cfg = IntegratorConfig::new(Method::ExactLinear, step, horizon);
    let steps = cfg.steps()?;
    let prop = expm(&aop_matrix(u, mu, z0.truncation()), step)?;
    let mut v = z0.as_slice().to_vec();
    let mut next = v.clone();
    let start = z0.norm();
    let mut worst: f64 = 0.0;
    for _ in 0..steps {
        prop.mul_vec_into(&v, &mut next);
        std::mem::swap(&mut v, &mut next);
        worst = worst.max((cnorm(&v) - start).abs());
    }
    Ok(worst)
}

/// Sup over common samples of `max(|x_a - x_b|, ‖ẑ_a - ẑ_b‖)`.
pub fn sup_gap(a: &Trajectory, b: &Trajectory) -> Result<f64, SimError> {
    if a.times.len() != b.times.len() || a.times.iter().zip(&b.times).any(|(s, t)| (s - t).abs() > 1e-9) {
        return Err(SimError::InvalidConfig(
            "trajectories are sampled at different times".into(),
        ));
    }
    let mut worst: f64 = 0.0;
    for i in 0..a.len() {
        worst = worst.max(norm(
            &a.x[i].iter().zip(&b.x[i]).map(|(p, q)| p - q).collect::<Vec<_>>(),
        ));
        let gap = match (&a.zhat, &b.zhat) {
            (ObserverSamples::Spectral(za), ObserverSamples::Spectral(zb)) => {
                cnorm(&za[i].iter().zip(&zb[i]).map(|(p, q)| p - q).collect::<Vec<_>>())
            }
            (ObserverSamples::Finite(za), ObserverSamples::Finite(zb)) => {
                norm(&za[i].iter().zip(&zb[i]).map(|(p, q)| p - q).collect::<Vec<_>>())
            }
            _ => return Err(SimError::InvalidConfig("trajectories come from different loops".into())),
        };
        worst = worst.max(gap);
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    /// `max |x|` over the trailing 10% of the horizon.
    pub trailing_max_x: f64,
    pub initial_eps: f64,
    pub final_eps: f64,
    pub final_c_eps: f64,
    /// `𝒩(ε(T))`, or `‖ε(T)‖` for the finite loop.
    pub final_weak_eps: f64,
    pub violations: usize,
    pub max_eps_increase: f64,
    pub clamp_events: usize,
    pub diverged: bool,
}

pub fn convergence_metrics(traj: &Trajectory) -> Result<ConvergenceReport, SimError> {
    let last = traj
        .len()
        .checked_sub(1)
        .ok_or_else(|| SimError::InvalidConfig("empty trajectory".into()))?;
    let t_end = traj.times[last];
    let window_start = 0.9 * t_end;
    let trailing_max_x = traj
        .times
        .iter()
        .zip(&traj.x)
        .filter(|(t, _)| **t >= window_start)
        .map(|(_, x)| norm(x))
        .fold(0.0, f64::max);
    // Recorded series are checked as well, in case a run was assembled by hand.
    let recorded = traj.eps_norm.windows(2).filter(|w| w[1] - w[0] > MONOTONE_TOL).count();
    Ok(ConvergenceReport {
        trailing_max_x,
        initial_eps: traj.eps_norm[0],
        final_eps: traj.eps_norm[last],
        final_c_eps: traj.c_eps_abs[last],
        final_weak_eps: traj.weak_eps.get(last).copied().unwrap_or(traj.eps_norm[last]),
        violations: traj.dissipativity_violations.max(recorded),
        max_eps_increase: traj.max_eps_increase.max(0.0),
        clamp_events: traj.clamp_events,
        diverged: traj.diverged_at.is_some(),
    })
}
