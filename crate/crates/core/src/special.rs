//! Bessel functions of the first kind for integer order.
//!
//! `J_k(r)` is evaluated by its ascending power series for moderate
//! arguments and by Miller's backward recurrence (normalized with
//! `J_0 + 2 Σ J_{2m} = 1`) beyond that. Both routes are restricted to
//! `|r| < 50`, which covers every argument the observers ever produce.

use std::sync::OnceLock;

use thiserror::Error;

/// Arguments must satisfy `|r| < MAX_ARGUMENT`.
pub const MAX_ARGUMENT: f64 = 50.0;

/// Above this modulus the power series loses too many digits to cancellation.
const SERIES_LIMIT: f64 = 8.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecialError {
    #[error("Bessel argument {0} outside the supported range |r| < 50")]
    ArgumentOutOfRange(f64),
    #[error("inverse of J1 requested for y = {y} outside [0, J1({cap})]")]
    InverseOutOfRange { y: f64, cap: f64 },
    #[error("inverse of J1 cap {cap} must lie in (0, j1 = {j1}]")]
    InvalidCap { cap: f64, j1: f64 },
}

/// `J_k(r)` for any integer order.
pub fn bessel_j(k: i32, r: f64) -> Result<f64, SpecialError> {
    if !r.is_finite() || r.abs() >= MAX_ARGUMENT {
        return Err(SpecialError::ArgumentOutOfRange(r));
    }
    let n = k.unsigned_abs();
    // J_{-n} = (-1)^n J_n and J_n(-r) = (-1)^n J_n(r).
    let mut sign = 1.0;
    if k < 0 && n % 2 == 1 {
        sign = -sign;
    }
    if r < 0.0 && n % 2 == 1 {
        sign = -sign;
    }
    let x = r.abs();
    let value = if x <= SERIES_LIMIT { series(n, x) } else { miller(n, x) };
    Ok(sign * value)
}

/// `J_k'(r) = (J_{k-1}(r) - J_{k+1}(r)) / 2`.
pub fn bessel_j_prime(k: i32, r: f64) -> Result<f64, SpecialError> {
    Ok(0.5 * (bessel_j(k - 1, r)? - bessel_j(k + 1, r)?))
}

fn series(n: u32, x: f64) -> f64 {
    let half = 0.5 * x;
    // Leading term (x/2)^n / n!, built incrementally so large orders underflow to 0
    // instead of overflowing through n!.
    let mut term = 1.0;
    for i in 1..=n {
        term *= half / f64::from(i);
    }
    if term == 0.0 {
        return 0.0;
    }
    let q = half * half;
    let mut sum = term;
    let mut m = 0u32;
    loop {
        m += 1;
        term *= -q / (f64::from(m) * f64::from(m + n));
        sum += term;
        if f64::from(m) > half && term.abs() <= f64::EPSILON * 1e-3 * sum.abs().max(f64::MIN_POSITIVE) {
            break;
        }
        if m > 500 {
            break;
        }
    }
    sum
}

fn miller(n: u32, x: f64) -> f64 {
    let top = n.max(x.ceil() as u32) + 40 + (x.sqrt() * 6.0) as u32;
    let top = top + top % 2;
    let mut next = 0.0; // J_{m+1}
    let mut cur = 1e-300; // J_m
    let mut norm = 0.0;
    let mut wanted = 0.0;
    let mut m = top;
    while m > 0 {
        if m == n {
            wanted = cur;
        }
        if m.is_multiple_of(2) {
            norm += 2.0 * cur;
        }
        let prev = 2.0 * f64::from(m) / x * cur - next;
        next = cur;
        cur = prev;
        m -= 1;
        if cur.abs() > 1e250 {
            cur *= 1e-250;
            next *= 1e-250;
            norm *= 1e-250;
            wanted *= 1e-250;
        }
    }
    // cur now holds the unnormalized J_0.
    norm += cur;
    if n == 0 {
        wanted = cur;
    }
    wanted / norm
}

/// `1 - J_0(r)` without the cancellation of the direct difference at small `r`.
pub fn one_minus_j0(r: f64) -> Result<f64, SpecialError> {
    if r.abs() > 2.0 {
        return Ok(1.0 - bessel_j(0, r)?);
    }
    let q = 0.25 * r * r;
    let mut term = 1.0;
    let mut sum = 0.0;
    for m in 1..40 {
        term *= -q / f64::from(m * m);
        sum -= term;
        if term.abs() <= f64::EPSILON * 1e-3 * sum.abs() {
            break;
        }
    }
    Ok(sum)
}

/// First positive zeros relevant to the observers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BesselZeros {
    /// First positive zero of `J_1'`; `J_1` is increasing on `[0, j1]`.
    pub j1: f64,
    /// First positive zero of `J_0`.
    pub j0: f64,
}

/// Locates `j1` and `j0` by bisection on hard-coded sign-changing brackets.
pub fn find_zeros() -> BesselZeros {
    static ZEROS: OnceLock<BesselZeros> = OnceLock::new();
    *ZEROS.get_or_init(|| {
        let j1 = bisect(|r| bessel_j_prime(1, r).expect("bracket within range"), 1.5, 2.0);
        let j0 = bisect(|r| bessel_j(0, r).expect("bracket within range"), 2.0, 3.0);
        let zeros = BesselZeros { j1, j0 };
        debug_assert!(0.0 < zeros.j1 && zeros.j1 < zeros.j0);
        zeros
    })
}

/// Bisection to floating-point resolution. `f(lo)` and `f(hi)` must differ in sign.
pub(crate) fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut f_lo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return mid;
        }
        if (f_mid > 0.0) == (f_lo > 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Inverse of `J_1` restricted to `[0, cap]` with `0 < cap <= j1`.
pub fn inv_j1(y: f64, cap: f64) -> Result<f64, SpecialError> {
    let j1 = find_zeros().j1;
    if !(cap > 0.0 && cap <= j1) {
        return Err(SpecialError::InvalidCap { cap, j1 });
    }
    let y_max = bessel_j(1, cap)?;
    if !(0.0..=y_max).contains(&y) {
        return Err(SpecialError::InverseOutOfRange { y, cap });
    }
    if y == 0.0 {
        return Ok(0.0);
    }
    if y == y_max {
        return Ok(cap);
    }
    let j1_of = |r: f64| bessel_j(1, r).expect("argument within [0, j1]") - y;
    Ok(bisect(j1_of, 0.0, cap))
}
