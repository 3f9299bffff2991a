use super::{shape, LinalgError, Matrix, Scalar};

/// Relative tolerance for numerical rank decisions.
pub const RANK_TOL: f64 = 1e-10;

/// LU factorization with partial pivoting, `PA = LU` packed in one matrix.
#[derive(Debug, Clone)]
pub struct Lu<T> {
    lu: Matrix<T>,
    perm: Vec<usize>,
    parity: f64,
    singular: bool,
}

impl<T: Scalar> Lu<T> {
    pub fn new(a: &Matrix<T>) -> Result<Self, LinalgError> {
        let n = a.require_square("lu")?;
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut parity = 1.0;
        let mut singular = false;
        for k in 0..n {
            let (p, best) =
                (k..n)
                    .map(|i| (i, lu[(i, k)].modulus()))
                    .fold((k, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if best == 0.0 {
                singular = true;
                continue;
            }
            if p != k {
                for j in 0..n {
                    let tmp = lu[(k, j)];
                    lu[(k, j)] = lu[(p, j)];
                    lu[(p, j)] = tmp;
                }
                perm.swap(k, p);
                parity = -parity;
            }
            let pivot = lu[(k, k)];
            for i in k + 1..n {
                let f = lu[(i, k)] / pivot;
                lu[(i, k)] = f;
                if f == T::zero() {
                    continue;
                }
                for j in k + 1..n {
                    let v = lu[(k, j)];
                    lu[(i, j)] = lu[(i, j)] - f * v;
                }
            }
        }
        Ok(Self {
            lu,
            perm,
            parity,
            singular,
        })
    }

    pub fn det(&self) -> T {
        let n = self.lu.rows();
        let mut d = T::from_f64(self.parity);
        for i in 0..n {
            d = d * self.lu[(i, i)];
        }
        d
    }

    pub fn solve_vec(&self, b: &[T]) -> Result<Vec<T>, LinalgError> {
        let n = self.lu.rows();
        if b.len() != n {
            return Err(shape(
                "solve",
                format!("system of size {n}, right-hand side of length {}", b.len()),
            ));
        }
        if self.singular {
            return Err(LinalgError::Singular);
        }
        let mut x: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for j in 0..i {
                let l = self.lu[(i, j)];
                x[i] = x[i] - l * x[j];
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                let u = self.lu[(i, j)];
                x[i] = x[i] - u * x[j];
            }
            x[i] = x[i] / self.lu[(i, i)];
        }
        Ok(x)
    }

    pub fn solve_mat(&self, b: &Matrix<T>) -> Result<Matrix<T>, LinalgError> {
        let n = self.lu.rows();
        if b.rows() != n {
            return Err(shape(
                "solve",
                format!("system of size {n}, right-hand side {}x{}", b.rows(), b.cols()),
            ));
        }
        let mut out = Matrix::zeros(n, b.cols());
        let mut col = vec![T::zero(); n];
        for j in 0..b.cols() {
            for (i, c) in col.iter_mut().enumerate() {
                *c = b[(i, j)];
            }
            let x = self.solve_vec(&col)?;
            for (i, v) in x.into_iter().enumerate() {
                out[(i, j)] = v;
            }
        }
        Ok(out)
    }
}

pub fn det<T: Scalar>(a: &Matrix<T>) -> Result<T, LinalgError> {
    Ok(Lu::new(a)?.det())
}

pub fn solve<T: Scalar>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>, LinalgError> {
    Lu::new(a)?.solve_mat(b)
}

/// Numerical rank by fully pivoted elimination; a pivot counts when it exceeds
/// `tol` times the largest entry of the matrix.
pub fn rank<T: Scalar>(a: &Matrix<T>, tol: f64) -> usize {
    let scale = a.max_abs();
    if scale == 0.0 {
        return 0;
    }
    let mut m = a.clone();
    let (rows, cols) = (m.rows(), m.cols());
    let mut r = 0;
    while r < rows.min(cols) {
        let mut best = (r, r, 0.0);
        for i in r..rows {
            for j in r..cols {
                let v = m[(i, j)].modulus();
                if v > best.2 {
                    best = (i, j, v);
                }
            }
        }
        if best.2 <= tol * scale {
            break;
        }
        let (pi, pj, _) = best;
        for j in 0..cols {
            let tmp = m[(r, j)];
            m[(r, j)] = m[(pi, j)];
            m[(pi, j)] = tmp;
        }
        for i in 0..rows {
            let tmp = m[(i, r)];
            m[(i, r)] = m[(i, pj)];
            m[(i, pj)] = tmp;
        }
        let pivot = m[(r, r)];
        for i in r + 1..rows {
            let f = m[(i, r)] / pivot;
            for j in r..cols {
                let v = m[(r, j)];
                m[(i, j)] = m[(i, j)] - f * v;
            }
        }
        r += 1;
    }
    r
}
