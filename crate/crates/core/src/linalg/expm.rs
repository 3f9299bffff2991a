//! Matrix exponential by scaling and squaring with diagonal Padé approximants
//! (Higham 2005).

use super::{LinalgError, Lu, Matrix, Scalar};

/// Largest accepted `|t| * ||M||_1`.
pub const EXPM_MAX_NORM: f64 = 1e4;

const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.539_398_330_063_23e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
];
const THETA13: f64 = 5.371920351148152;

/// `e^{tM}`.
pub fn expm<T: Scalar>(m: &Matrix<T>, t: f64) -> Result<Matrix<T>, LinalgError> {
    let n = m.require_square("expm")?;
    let a = m.scale(T::from_f64(t));
    let norm = a.norm_1();
    if !norm.is_finite() || norm > EXPM_MAX_NORM {
        return Err(LinalgError::Overflow(norm));
    }
    let ident = Matrix::identity(n);
    if norm == 0.0 {
        return Ok(ident);
    }
    for &(deg, theta) in &THETA {
        if norm <= theta {
            let b: &[f64] = match deg {
                3 => &PADE3,
                5 => &PADE5,
                7 => &PADE7,
                _ => &PADE9,
            };
            let (u, v) = pade_low(&a, b)?;
            return pade_solve(&u, &v);
        }
    }
    let s = (norm / THETA13).log2().ceil().max(0.0) as i32;
    let a = a.scale(T::from_f64(2f64.powi(-s)));
    let (u, v) = pade13(&a)?;
    let mut r = pade_solve(&u, &v)?;
    for _ in 0..s {
        r = r.matmul(&r)?;
    }
    Ok(r)
}

fn pade_low<T: Scalar>(a: &Matrix<T>, b: &[f64]) -> Result<(Matrix<T>, Matrix<T>), LinalgError> {
    let n = a.rows();
    let a2 = a.matmul(a)?;
    let mut power = Matrix::identity(n);
    let mut odd = Matrix::zeros(n, n);
    let mut even = Matrix::zeros(n, n);
    for pair in b.chunks(2) {
        even = even.add(&power.scale(T::from_f64(pair[0])))?;
        odd = odd.add(&power.scale(T::from_f64(pair[1])))?;
        power = power.matmul(&a2)?;
    }
    Ok((a.matmul(&odd)?, even))
}

fn pade13<T: Scalar>(a: &Matrix<T>) -> Result<(Matrix<T>, Matrix<T>), LinalgError> {
    let n = a.rows();
    let b = |i: usize| T::from_f64(PADE13[i]);
    let ident = Matrix::identity(n);
    let a2 = a.matmul(a)?;
    let a4 = a2.matmul(&a2)?;
    let a6 = a4.matmul(&a2)?;
    let inner_u = a6.scale(b(13)).add(&a4.scale(b(11)))?.add(&a2.scale(b(9)))?;
    let u = a6
        .matmul(&inner_u)?
        .add(&a6.scale(b(7)))?
        .add(&a4.scale(b(5)))?
        .add(&a2.scale(b(3)))?
        .add(&ident.scale(b(1)))?;
    let u = a.matmul(&u)?;
    let inner_v = a6.scale(b(12)).add(&a4.scale(b(10)))?.add(&a2.scale(b(8)))?;
    let v = a6
        .matmul(&inner_v)?
        .add(&a6.scale(b(6)))?
        .add(&a4.scale(b(4)))?
        .add(&a2.scale(b(2)))?
        .add(&ident.scale(b(0)))?;
    Ok((u, v))
}

fn pade_solve<T: Scalar>(u: &Matrix<T>, v: &Matrix<T>) -> Result<Matrix<T>, LinalgError> {
    let p = v.add(u)?;
    let q = v.sub(u)?;
    Lu::new(&q)?.solve_mat(&p)
}
