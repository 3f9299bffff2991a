//! Embedded observer for plants `ẋ = Ax + bu` with skew-symmetric `A`,
//! measured through `y = |x|²/2`.
//!
//! The state is lifted to `z = τ(x) = (x, |x|²/2)`, on which the output is the
//! linear functional `𝒞z = z_{n+1}`. The observer gain `L_α(u) = (bu, α)`
//! makes the estimation error dissipative for every input.

use num_complex::Complex64;
use thiserror::Error;

use crate::linalg::{det, kalman_matrix, place_poles, solve_lyapunov, GainMatrix, KalmanMode, LinalgError, RMatrix};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FiniteError {
    #[error("state matrix A must be skew-symmetric")]
    NotSkewSymmetric,
    #[error("state matrix A must be invertible")]
    SingularA,
    #[error("dimension mismatch: {0}")]
    Shape(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// `ẋ = Ax + bu` with skew-symmetric `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct FinitePlant {
    a: RMatrix,
    b: Vec<f64>,
}

impl FinitePlant {
    pub fn new(a: RMatrix, b: Vec<f64>) -> Result<Self, FiniteError> {
        let n = a.require_square("FinitePlant").map_err(FiniteError::from)?;
        if b.len() != n {
            return Err(FiniteError::Shape(format!(
                "A is {n}x{n} but b has {} entries",
                b.len()
            )));
        }
        let tol = 1e-12 * a.max_abs().max(1.0);
        for i in 0..n {
            for j in 0..=i {
                if (a[(i, j)] + a[(j, i)]).abs() > tol {
                    return Err(FiniteError::NotSkewSymmetric);
                }
            }
        }
        Ok(Self { a, b })
    }

    /// Planar rotation `A = [[0, -1], [1, 0]]` actuated through `b = (0, 1)`.
    pub fn rotation() -> Self {
        let a = RMatrix::from_rows(&[vec![0.0, -1.0], vec![1.0, 0.0]]).expect("static shape");
        Self { a, b: vec![0.0, 1.0] }
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    pub fn a(&self) -> &RMatrix {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn output(&self, x: &[f64]) -> f64 {
        0.5 * x.iter().map(|v| v * v).sum::<f64>()
    }

    /// Gain placing the closed-loop poles at `-scale * (1, 2, ..., n)`.
    pub fn default_gain(&self, scale: f64) -> Result<GainMatrix, FiniteError> {
        if !(scale > 0.0) {
            return Err(FiniteError::InvalidParameter(format!(
                "pole scale must be positive, got {scale}"
            )));
        }
        let poles: Vec<Complex64> = (1..=self.dim())
            .map(|k| Complex64::new(-scale * k as f64, 0.0))
            .collect();
        Ok(place_poles(&self.a, &self.b, &poles)?)
    }
}

pub fn tau_fin(x: &[f64]) -> Vec<f64> {
    let mut z = x.to_vec();
    z.push(0.5 * x.iter().map(|v| v * v).sum::<f64>());
    z
}

pub fn pi_fin(z: &[f64]) -> Vec<f64> {
    z[..z.len().saturating_sub(1)].to_vec()
}

/// Observer matrices `𝒜(u)`, `ℬ`, `𝒞`, `L_α(u)` on `ℝ^{n+1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedSystem {
    pub a_cal: RMatrix,
    pub b_cal: Vec<f64>,
    pub c_cal: Vec<f64>,
    pub gain: Vec<f64>,
}

impl EmbeddedSystem {
    /// `𝒜(u) - L_α(u)𝒞`, the error dynamics matrix.
    pub fn error_matrix(&self) -> RMatrix {
        let n1 = self.c_cal.len();
        let mut m = self.a_cal.clone();
        for i in 0..n1 {
            for j in 0..n1 {
                m[(i, j)] -= self.gain[i] * self.c_cal[j];
            }
        }
        m
    }
}

pub fn assemble_embedded(u: f64, alpha: f64, plant: &FinitePlant) -> EmbeddedSystem {
    let n = plant.dim();
    let mut a_cal = RMatrix::zeros(n + 1, n + 1);
    for i in 0..n {
        for j in 0..n {
            a_cal[(i, j)] = plant.a[(i, j)];
        }
        a_cal[(n, i)] = u * plant.b[i];
    }
    let mut b_cal = plant.b.clone();
    b_cal.push(0.0);
    let mut c_cal = vec![0.0; n + 1];
    c_cal[n] = 1.0;
    let mut gain: Vec<f64> = plant.b.iter().map(|bi| bi * u).collect();
    gain.push(alpha);
    EmbeddedSystem {
        a_cal,
        b_cal,
        c_cal,
        gain,
    }
}

/// `λ_δ(z) = K z_{1..n} + δ z_{n+1}`.
pub fn lambda_delta(zhat: &[f64], k: &GainMatrix, delta: f64) -> f64 {
    let n = k.len();
    k.dot(&zhat[..n]) + delta * zhat[n]
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinParams {
    pub k: GainMatrix,
    pub delta: f64,
    pub alpha: f64,
}

impl FinParams {
    pub fn new(k: GainMatrix, delta: f64, alpha: f64) -> Result<Self, FiniteError> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(FiniteError::InvalidParameter(format!(
                "delta must be positive, got {delta}"
            )));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(FiniteError::InvalidParameter(format!(
                "alpha must be positive, got {alpha}"
            )));
        }
        Ok(Self { k, delta, alpha })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinLoopState {
    pub x: Vec<f64>,
    pub zhat: Vec<f64>,
}

impl FinLoopState {
    /// Packs into `[x; ẑ]`, the layout used by the integrator.
    pub fn pack(&self) -> Vec<f64> {
        let mut s = self.x.clone();
        s.extend_from_slice(&self.zhat);
        s
    }

    pub fn unpack(s: &[f64], n: usize) -> Self {
        Self {
            x: s[..n].to_vec(),
            zhat: s[n..].to_vec(),
        }
    }

    /// `ε = ẑ - τ(x)`.
    pub fn error(&self) -> Vec<f64> {
        self.zhat.iter().zip(tau_fin(&self.x)).map(|(a, b)| a - b).collect()
    }
}

/// Vector field of the closed loop on the packed state `s = [x; ẑ]`, written into `ds`.
/// Returns the applied control `u = λ_δ(ẑ)`.
pub fn closed_loop_rhs_into(s: &[f64], p: &FinParams, plant: &FinitePlant, ds: &mut [f64]) -> f64 {
    let n = plant.dim();
    let (x, zhat) = s.split_at(n);
    let u = lambda_delta(zhat, &p.k, p.delta);
    let y = plant.output(x);
    let innovation = zhat[n] - y;
    let (dx, dz) = ds.split_at_mut(n);
    let mut bz = 0.0;
    for i in 0..n {
        let row = plant.a.row_slice(i);
        let mut ax = 0.0;
        let mut az = 0.0;
        for j in 0..n {
            ax += row[j] * x[j];
            az += row[j] * zhat[j];
        }
        dx[i] = ax + plant.b[i] * u;
        dz[i] = az + plant.b[i] * u - plant.b[i] * u * innovation;
        bz += plant.b[i] * zhat[i];
    }
    dz[n] = u * bz - p.alpha * innovation;
    u
}

pub fn closed_loop_rhs(s: &FinLoopState, p: &FinParams, plant: &FinitePlant) -> FinLoopState {
    let n = plant.dim();
    let packed = s.pack();
    let mut ds = vec![0.0; packed.len()];
    closed_loop_rhs_into(&packed, p, plant, &mut ds);
    FinLoopState::unpack(&ds, n)
}

/// `δ₀ = 1 / (ρ|Pb|)` with `P` solving `F'P + PF = -2I`, `F = A + bK`.
pub fn delta0_bound(k: &GainMatrix, rho: f64, plant: &FinitePlant) -> Result<f64, FiniteError> {
    if !(rho > 0.0) {
        return Err(FiniteError::InvalidParameter(format!(
            "rho must be positive, got {rho}"
        )));
    }
    let f = k.closed_loop(&plant.a, &plant.b)?;
    let n = plant.dim();
    let p = solve_lyapunov(&f, &RMatrix::identity(n).scale(2.0))?;
    let pb = p.mul_vec(&plant.b)?;
    let norm = pb.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok(1.0 / (rho * norm))
}

fn check_invertible(a: &RMatrix) -> Result<usize, FiniteError> {
    let n = a.require_square("build_q")?;
    let d = det(a)?;
    if d.abs() <= 1e-12 * a.max_abs().max(1.0).powi(n as i32) {
        return Err(FiniteError::SingularA);
    }
    Ok(n)
}

/// The `(n+2) x (n+2)` matrix with rows `(K, δ, 0)` and `(KA^k, 0, δ(-α)^k)` for `k = 1..=n+1`.
pub fn build_q(k: &GainMatrix, a: &RMatrix, delta: f64, alpha: f64) -> Result<RMatrix, FiniteError> {
    let n = check_invertible(a)?;
    if k.len() != n {
        return Err(FiniteError::Shape(format!("K has {} entries, A is {n}x{n}", k.len())));
    }
    let mut q = RMatrix::zeros(n + 2, n + 2);
    let mut ka = k.as_slice().to_vec();
    for j in 0..n {
        q[(0, j)] = ka[j];
    }
    q[(0, n)] = delta;
    let mut power = 1.0;
    for row in 1..n + 2 {
        ka = (0..n).map(|j| (0..n).map(|i| ka[i] * a[(i, j)]).sum()).collect();
        power *= -alpha;
        for j in 0..n {
            q[(row, j)] = ka[j];
        }
        q[(row, n + 1)] = delta * power;
    }
    Ok(q)
}

/// Closed-form value `δ²αΔP(-α)` for `det Q`, with `P(s) = det(sI - A)` and `Δ`
/// the determinant of the observability matrix of `(KA, A)`.
pub fn det_q_factored(k: &GainMatrix, a: &RMatrix, delta: f64, alpha: f64) -> Result<f64, FiniteError> {
    let n = check_invertible(a)?;
    let ka = k.as_row().matmul(a)?;
    let (obs, _) = kalman_matrix(&ka, a, KalmanMode::Observability)?;
    let big_delta = det(&obs)?;
    let shifted = RMatrix::identity(n).scale(-alpha).sub(a)?;
    let char_poly = det(&shifted)?;
    Ok(delta * delta * alpha * big_delta * char_poly)
}
