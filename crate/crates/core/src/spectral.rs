//! Unitary embedding of the planar rotation plant `ẋ = Ax + bu`,
//! `A = [[0, -1], [1, 0]]`, `b = (0, 1)`, on truncated Fourier coefficients.
//!
//! A state `x = (r cos θ, r sin θ)` is sent to the function on the circle with
//! coefficients `z_k = i^k J_k(μr) e^{-ikθ}`. Along trajectories these obey
//! `ż = A(u)z` with the skew-adjoint generator
//! `(A(u)z)_k = -ik z_k + (uμ/2)(z_{k-1} - z_{k+1})`.

use std::f64::consts::PI;

use num_complex::Complex64;
use thiserror::Error;

use crate::linalg::{CMatrix, GainMatrix};
use crate::special::{bessel_j, bessel_j_prime, find_zeros, inv_j1, SpecialError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectralError {
    #[error("truncation mismatch: expected N = {expected}, got {found}")]
    Truncation { expected: usize, found: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("output value {0} outside the range of the output map")]
    OutputRange(Complex64),
    #[error(transparent)]
    Special(#[from] SpecialError),
}

fn i_pow(k: i32) -> Complex64 {
    match k.rem_euclid(4) {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

/// Coefficients `z_k`, `k = -N..=N`, stored at index `k + N`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralVec {
    n: usize,
    coeffs: Vec<Complex64>,
}

impl SpectralVec {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            coeffs: vec![Complex64::new(0.0, 0.0); 2 * n + 1],
        }
    }

    /// Basis vector `e_k`.
    pub fn unit(k: i32, n: usize) -> Self {
        let mut v = Self::zeros(n);
        v.set(k, Complex64::new(1.0, 0.0));
        v
    }

    /// The constant function `𝟙 = e_0`, image of the target `x = 0`.
    pub fn one(n: usize) -> Self {
        Self::unit(0, n)
    }

    pub fn from_coeffs(coeffs: Vec<Complex64>) -> Result<Self, SpectralError> {
        if coeffs.len().is_multiple_of(2) {
            return Err(SpectralError::InvalidParameter(format!(
                "coefficient vector must have odd length, got {}",
                coeffs.len()
            )));
        }
        Ok(Self {
            n: coeffs.len() / 2,
            coeffs,
        })
    }

    pub fn truncation(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.coeffs
    }

    fn index(&self, k: i32) -> Option<usize> {
        let idx = k + self.n as i32;
        (0..self.coeffs.len() as i32).contains(&idx).then_some(idx as usize)
    }

    /// `z_k`, zero outside the truncation.
    pub fn get(&self, k: i32) -> Complex64 {
        self.index(k).map_or(Complex64::new(0.0, 0.0), |i| self.coeffs[i])
    }

    /// Panics when `|k| > N`.
    pub fn set(&mut self, k: i32, v: Complex64) {
        let i = self.index(k).expect("index within truncation");
        self.coeffs[i] = v;
    }

    pub fn norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `⟨self, other⟩ = Σ self_k conj(other_k)`.
    pub fn inner(&self, other: &Self) -> Complex64 {
        self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a * b.conj()).sum()
    }

    pub fn sub(&self, other: &Self) -> Result<Self, SpectralError> {
        self.same_truncation(other)?;
        Ok(Self {
            n: self.n,
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self, SpectralError> {
        self.same_truncation(other)?;
        Ok(Self {
            n: self.n,
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect(),
        })
    }

    fn same_truncation(&self, other: &Self) -> Result<(), SpectralError> {
        if self.n != other.n {
            return Err(SpectralError::Truncation {
                expected: self.n,
                found: other.n,
            });
        }
        Ok(())
    }
}

/// `τ(x)` truncated to `|k| <= N`.
pub fn tau_spec(x: [f64; 2], mu: f64, n: usize) -> Result<SpectralVec, SpectralError> {
    let mut z = SpectralVec::zeros(n);
    tau_spec_into(x, mu, &mut z)?;
    Ok(z)
}

pub fn tau_spec_into(x: [f64; 2], mu: f64, z: &mut SpectralVec) -> Result<(), SpectralError> {
    let r = x[0].hypot(x[1]);
    let theta = x[1].atan2(x[0]);
    let n = z.n as i32;
    for k in -n..=n {
        let phase = Complex64::from_polar(1.0, -(k as f64) * theta);
        let v = i_pow(k) * bessel_j(k, mu * r)? * phase;
        z.coeffs[(k + n) as usize] = v;
    }
    Ok(())
}

/// `A(u)z` with neighbours outside the truncation taken as zero.
pub fn apply_aop(u: f64, mu: f64, z: &SpectralVec) -> SpectralVec {
    let mut out = SpectralVec::zeros(z.n);
    apply_aop_into(u, mu, z.as_slice(), out.as_mut_slice());
    out
}

pub fn apply_aop_into(u: f64, mu: f64, z: &[Complex64], out: &mut [Complex64]) {
    let len = z.len();
    let n = (len / 2) as i32;
    let c = 0.5 * u * mu;
    for idx in 0..len {
        let k = idx as i32 - n;
        let lower = if idx > 0 { z[idx - 1] } else { Complex64::new(0.0, 0.0) };
        let upper = if idx + 1 < len {
            z[idx + 1]
        } else {
            Complex64::new(0.0, 0.0)
        };
        out[idx] = Complex64::new(0.0, -(k as f64)) * z[idx] + c * (lower - upper);
    }
}

/// Matrix of `A(u)` on the truncated basis.
pub fn aop_matrix(u: f64, mu: f64, n: usize) -> CMatrix {
    let len = 2 * n + 1;
    let mut m = CMatrix::zeros(len, len);
    let c = 0.5 * u * mu;
    for idx in 0..len {
        m[(idx, idx)] = Complex64::new(0.0, -(idx as f64 - n as f64));
        if idx > 0 {
            m[(idx, idx - 1)] = Complex64::new(c, 0.0);
        }
        if idx + 1 < len {
            m[(idx, idx + 1)] = Complex64::new(-c, 0.0);
        }
    }
    m
}

/// Matrix of `A(u) - αζζ*`, the estimation error generator.
pub fn assemble_aop(u: f64, mu: f64, alpha: f64, zeta: &SpectralVec) -> CMatrix {
    let mut m = aop_matrix(u, mu, zeta.n);
    let z = zeta.as_slice();
    for i in 0..z.len() {
        for j in 0..z.len() {
            m[(i, j)] -= alpha * z[i] * z[j].conj();
        }
    }
    m
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OutputKind {
    /// `h(x) = |x|²/2`
    NormSq,
    /// `h(x) = J_0(μ|x|) - 1`
    J0Radial,
    /// `h(x) = J_2(μ|x|) cos 2θ`
    J2Cos2Theta,
    /// `h(x) = |x|`
    Norm,
    /// `h(x) = Σ c_k J_k(μr) e^{-ikθ}`, complex valued.
    BesselSeries,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSpec {
    kind: OutputKind,
    mu: f64,
    coeffs: Vec<(i32, Complex64)>,
}

impl OutputSpec {
    pub fn new(kind: OutputKind, mu: f64) -> Result<Self, SpectralError> {
        if kind == OutputKind::BesselSeries {
            return Err(SpectralError::InvalidParameter(
                "BesselSeries outputs need coefficients; use OutputSpec::bessel_series".into(),
            ));
        }
        check_mu(mu)?;
        Ok(Self {
            kind,
            mu,
            coeffs: Vec::new(),
        })
    }

    pub fn bessel_series(mu: f64, coeffs: Vec<(i32, Complex64)>) -> Result<Self, SpectralError> {
        check_mu(mu)?;
        if coeffs.iter().all(|(_, c)| *c == Complex64::new(0.0, 0.0)) {
            return Err(SpectralError::InvalidParameter(
                "BesselSeries needs at least one non-zero coefficient".into(),
            ));
        }
        Ok(Self {
            kind: OutputKind::BesselSeries,
            mu,
            coeffs,
        })
    }

    pub fn kind(&self) -> OutputKind {
        self.kind
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn coeffs(&self) -> &[(i32, Complex64)] {
        &self.coeffs
    }

    /// Largest `|k|` carried by the output functional.
    pub fn max_order(&self) -> usize {
        match self.kind {
            OutputKind::J2Cos2Theta => 2,
            OutputKind::BesselSeries => self
                .coeffs
                .iter()
                .map(|(k, _)| k.unsigned_abs() as usize)
                .max()
                .unwrap_or(0),
            _ => 0,
        }
    }
}

fn check_mu(mu: f64) -> Result<(), SpectralError> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(SpectralError::InvalidParameter(format!(
            "mu must be positive, got {mu}"
        )));
    }
    Ok(())
}

/// The measured output `h(x)`.
pub fn plant_output(spec: &OutputSpec, x: [f64; 2]) -> Result<Complex64, SpectralError> {
    let r = x[0].hypot(x[1]);
    let theta = x[1].atan2(x[0]);
    let mu = spec.mu;
    let real = |v: f64| Complex64::new(v, 0.0);
    Ok(match spec.kind {
        OutputKind::NormSq => real(0.5 * r * r),
        OutputKind::J0Radial => real(bessel_j(0, mu * r)? - 1.0),
        OutputKind::J2Cos2Theta => real(bessel_j(2, mu * r)? * (2.0 * theta).cos()),
        OutputKind::Norm => real(r),
        OutputKind::BesselSeries => {
            let mut acc = Complex64::new(0.0, 0.0);
            for &(k, c) in &spec.coeffs {
                acc += c * bessel_j(k, mu * r)? * Complex64::from_polar(1.0, -(k as f64) * theta);
            }
            acc
        }
    })
}

/// `𝔥`, turning the measured output into the linear measurement `𝒞τ(x)`.
pub fn frak_h(spec: &OutputSpec, y: Complex64) -> Result<Complex64, SpectralError> {
    let real_kind = spec.kind != OutputKind::BesselSeries;
    if real_kind && y.im != 0.0 {
        return Err(SpectralError::OutputRange(y));
    }
    let mu = spec.mu;
    Ok(match spec.kind {
        OutputKind::NormSq => {
            if y.re < 0.0 {
                return Err(SpectralError::OutputRange(y));
            }
            Complex64::new(bessel_j(0, mu * (2.0 * y.re).sqrt())?, 0.0)
        }
        OutputKind::J0Radial => Complex64::new(y.re + 1.0, 0.0),
        OutputKind::Norm => {
            if y.re < 0.0 {
                return Err(SpectralError::OutputRange(y));
            }
            Complex64::new(bessel_j(0, mu * y.re)?, 0.0)
        }
        OutputKind::J2Cos2Theta | OutputKind::BesselSeries => y,
    })
}

/// `ζ` with `⟨τ(x), ζ⟩ = 𝔥(h(x))`.
pub fn output_zeta(spec: &OutputSpec, n: usize) -> Result<SpectralVec, SpectralError> {
    let need = spec.max_order();
    if need > n {
        return Err(SpectralError::Truncation {
            expected: need,
            found: n,
        });
    }
    let mut zeta = SpectralVec::zeros(n);
    match spec.kind {
        OutputKind::NormSq | OutputKind::J0Radial | OutputKind::Norm => zeta.set(0, Complex64::new(1.0, 0.0)),
        OutputKind::J2Cos2Theta => {
            zeta.set(2, Complex64::new(-0.5, 0.0));
            zeta.set(-2, Complex64::new(-0.5, 0.0));
        }
        OutputKind::BesselSeries => {
            for &(k, c) in &spec.coeffs {
                let v = zeta.get(k) + c.conj() * i_pow(k);
                zeta.set(k, v);
            }
        }
    }
    Ok(zeta)
}

/// `𝒩(z) = sqrt(Σ |z_k|² / (k² + 1))`.
pub fn weak_norm(z: &SpectralVec) -> f64 {
    weak_norm_sq(z.as_slice()).sqrt()
}

pub(crate) fn weak_norm_sq(z: &[Complex64]) -> f64 {
    let n = (z.len() / 2) as f64;
    z.iter()
        .enumerate()
        .map(|(i, c)| {
            let k = i as f64 - n;
            c.norm_sqr() / (k * k + 1.0)
        })
        .sum()
}

/// `ν = sqrt(Σ_k 1/(k²+1)) = sqrt(π coth π)`, so that `𝒩(z) <= ν‖z‖`.
pub fn nu_constant() -> f64 {
    (PI / PI.tanh()).sqrt()
}

/// Which branch of the left-inverse produced a value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Branch {
    /// `|ζ| <= J_1(j)`: exact inverse of `J_1`.
    Exact,
    /// `J_1(j) < |ζ| < J_1(j1)`: Hermite blend.
    Blend,
    /// `|ζ| >= J_1(j1)`: radius saturated at `j1/μ`.
    Clamped,
}

/// The map `𝔣: ℂ → ℝ²` with its radial profile precomputed.
#[derive(Debug, Clone, PartialEq)]
pub struct LeftInverse {
    mu: f64,
    j: f64,
    j1: f64,
    lo: f64,
    hi: f64,
    slope_lo: f64,
}

impl LeftInverse {
    pub fn new(mu: f64, j: f64) -> Result<Self, SpectralError> {
        check_mu(mu)?;
        let j1 = find_zeros().j1;
        if !(j > 0.0 && j < j1) {
            return Err(SpectralError::InvalidParameter(format!(
                "j must lie in (0, j1 = {j1}), got {j}"
            )));
        }
        Ok(Self {
            mu,
            j,
            j1,
            lo: bessel_j(1, j)?,
            hi: bessel_j(1, j1)?,
            slope_lo: 1.0 / bessel_j_prime(1, j)?,
        })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn j(&self) -> f64 {
        self.j
    }

    /// Radius profile `g` with `|𝔣(ζ)| = g(|ζ|)/μ`.
    pub fn profile(&self, rho: f64) -> (f64, Branch) {
        if rho <= self.lo {
            let r = inv_j1(rho.max(0.0), self.j).expect("argument within [0, J1(j)]");
            (r, Branch::Exact)
        } else if rho >= self.hi {
            (self.j1, Branch::Clamped)
        } else {
            let h = self.hi - self.lo;
            let s = (rho - self.lo) / h;
            let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
            let h10 = s * (1.0 - s) * (1.0 - s);
            let h01 = s * s * (3.0 - 2.0 * s);
            (h00 * self.j + h10 * h * self.slope_lo + h01 * self.j1, Branch::Blend)
        }
    }

    fn profile_slope(&self, rho: f64) -> f64 {
        if rho <= self.lo {
            let r = self.profile(rho).0;
            1.0 / bessel_j_prime(1, r).expect("argument within [0, j]")
        } else if rho >= self.hi {
            0.0
        } else {
            let h = self.hi - self.lo;
            let s = (rho - self.lo) / h;
            let d00 = 6.0 * s * s - 6.0 * s;
            let d10 = 3.0 * s * s - 4.0 * s + 1.0;
            let d01 = 6.0 * s - 6.0 * s * s;
            (d00 * self.j + d01 * self.j1) / h + d10 * self.slope_lo
        }
    }

    pub fn eval(&self, zeta: Complex64) -> ([f64; 2], Branch) {
        let rho = zeta.norm();
        if rho == 0.0 {
            return ([0.0, 0.0], Branch::Exact);
        }
        let (g, branch) = self.profile(rho);
        let w = Complex64::i() * zeta.conj() / rho * (g / self.mu);
        ([w.re, w.im], branch)
    }

    /// Lipschitz constant of `𝔣` estimated on a fine radial grid: the larger of
    /// the radial slope `g'` and the angular stretch `g(ρ)/ρ`, over `μ`.
    pub fn lipschitz(&self) -> f64 {
        let top = self.hi * 1.05;
        let samples = 4000;
        let mut best: f64 = 2.0; // g(ρ)/ρ → 1/J1'(0) = 2 as ρ → 0
        for i in 1..=samples {
            let rho = top * i as f64 / samples as f64;
            best = best.max(self.profile_slope(rho).abs());
            best = best.max(self.profile(rho).0 / rho);
        }
        best / self.mu
    }

    /// Lipschitz constant of `𝔣` restricted to `|ζ| <= J_1(μR)` for `μR <= j`.
    pub fn local_lipschitz(&self, radius: f64) -> Result<f64, SpectralError> {
        let r = self.mu * radius;
        if !(r > 0.0 && r <= self.j) {
            return Err(SpectralError::InvalidParameter(format!(
                "local radius {radius} must satisfy 0 < μR <= j"
            )));
        }
        // On the exact branch g' = 1/J1'(g) is increasing and dominates g(ρ)/ρ.
        Ok(1.0 / (self.mu * bessel_j_prime(1, r)?))
    }
}

pub fn frak_f(zeta: Complex64, mu: f64, j: f64) -> Result<[f64; 2], SpectralError> {
    Ok(LeftInverse::new(mu, j)?.eval(zeta).0)
}

/// `π(z) = 𝔣(⟨z, e_1⟩)`.
pub fn pi_spec(z: &SpectralVec, inv: &LeftInverse) -> ([f64; 2], Branch) {
    inv.eval(z.get(1))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralParams {
    pub k: GainMatrix,
    pub delta: f64,
    pub alpha: f64,
    /// Sample period `Δ`.
    pub big_delta: f64,
    pub mu: f64,
    pub j: f64,
    pub n: usize,
}

impl SpectralParams {
    pub fn validate(&self) -> Result<(), SpectralError> {
        let bad = |msg: String| Err(SpectralError::InvalidParameter(msg));
        if self.k.len() != 2 {
            return bad(format!("K must have 2 entries, got {}", self.k.len()));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return bad(format!("delta must be non-negative, got {}", self.delta));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        if !(self.big_delta > 0.0 && self.big_delta < PI) {
            return bad(format!("Delta must lie in (0, pi), got {}", self.big_delta));
        }
        check_mu(self.mu)?;
        let j1 = find_zeros().j1;
        if !(self.j > 0.0 && self.j < j1) {
            return bad(format!("j must lie in (0, j1 = {j1}), got {}", self.j));
        }
        if self.n < 1 {
            return bad("truncation N must be at least 1".into());
        }
        Ok(())
    }

    pub fn left_inverse(&self) -> Result<LeftInverse, SpectralError> {
        LeftInverse::new(self.mu, self.j)
    }
}

/// `u = Kπ(ẑ) + δ𝒩²(ẑ - 𝟙)`.
pub fn sample_hold_feedback(zhat: &SpectralVec, p: &SpectralParams, inv: &LeftInverse) -> (f64, Branch) {
    let (x, branch) = pi_spec(zhat, inv);
    let mut w = zhat.clone();
    w.set(0, w.get(0) - Complex64::new(1.0, 0.0));
    (p.k.dot(&x) + p.delta * weak_norm_sq(w.as_slice()), branch)
}

/// `Σ_{|k|>N} J_k(r)² < 2 (r/2)^{2N+2} / ((N+1)!)²`, the truncation certificate.
pub fn truncation_tail_bound(r: f64, n: usize) -> f64 {
    let mut t = 1.0;
    for i in 1..=n + 1 {
        t *= 0.5 * r / i as f64;
    }
    2.0 * t * t
}
