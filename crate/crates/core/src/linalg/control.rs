use num_complex::Complex64;

use super::{eigenvalues, rank, shape, LinalgError, Lu, RMatrix, RANK_TOL};

/// Row gain `K` of a state feedback `u = Kx`.
#[derive(Debug, Clone, PartialEq)]
pub struct GainMatrix(Vec<f64>);

impl GainMatrix {
    pub fn new(k: Vec<f64>) -> Self {
        Self(k)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn dot(&self, x: &[f64]) -> f64 {
        self.0.iter().zip(x).map(|(k, x)| k * x).sum()
    }

    /// Euclidean norm, the `κ` of the spectral bounds.
    pub fn norm(&self) -> f64 {
        self.0.iter().map(|k| k * k).sum::<f64>().sqrt()
    }

    pub fn as_row(&self) -> RMatrix {
        RMatrix::row(&self.0)
    }

    /// `A + bK`.
    pub fn closed_loop(&self, a: &RMatrix, b: &[f64]) -> Result<RMatrix, LinalgError> {
        let n = a.require_square("closed_loop")?;
        if b.len() != n || self.0.len() != n {
            return Err(shape(
                "closed_loop",
                format!("A is {n}x{n}, b has {} entries, K has {}", b.len(), self.0.len()),
            ));
        }
        let mut f = a.clone();
        for i in 0..n {
            for j in 0..n {
                f[(i, j)] += b[i] * self.0[j];
            }
        }
        Ok(f)
    }
}

pub fn is_hurwitz(m: &RMatrix) -> Result<bool, LinalgError> {
    Ok(max_real_part(m)? < -1e-12)
}

fn max_real_part(m: &RMatrix) -> Result<f64, LinalgError> {
    Ok(eigenvalues(m)?.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max))
}

/// Solves `F'P + PF = -Qr` by vectorizing into an `n² x n²` linear system.
pub fn solve_lyapunov(f: &RMatrix, qr: &RMatrix) -> Result<RMatrix, LinalgError> {
    let n = f.require_square("solve_lyapunov")?;
    if (qr.rows(), qr.cols()) != (n, n) {
        return Err(shape(
            "solve_lyapunov",
            format!("F is {n}x{n}, Qr is {}x{}", qr.rows(), qr.cols()),
        ));
    }
    let lead = max_real_part(f)?;
    if lead >= -1e-12 {
        return Err(LinalgError::NotHurwitz(lead));
    }
    let nn = n * n;
    let mut big = RMatrix::zeros(nn, nn);
    let mut rhs = vec![0.0; nn];
    for i in 0..n {
        for j in 0..n {
            let row = i * n + j;
            rhs[row] = -qr[(i, j)];
            for k in 0..n {
                big[(row, k * n + j)] += f[(k, i)];
                big[(row, i * n + k)] += f[(k, j)];
            }
        }
    }
    let p = Lu::new(&big)?.solve_vec(&rhs)?;
    let mut out = RMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] = 0.5 * (p[i * n + j] + p[j * n + i]);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KalmanMode {
    /// `[C; CA; ...; CA^{n-1}]`
    Observability,
    /// `[b, Ab, ..., A^{n-1}b]`
    Controllability,
}

/// Kalman matrix and its numerical rank. For observability `m` is `p x n`; for
/// controllability it is `n x q`.
pub fn kalman_matrix(m: &RMatrix, a: &RMatrix, mode: KalmanMode) -> Result<(RMatrix, usize), LinalgError> {
    let n = a.require_square("kalman_matrix")?;
    let out = match mode {
        KalmanMode::Observability => {
            if m.cols() != n {
                return Err(shape(
                    "kalman_matrix",
                    format!("C has {} columns, A is {n}x{n}", m.cols()),
                ));
            }
            let p = m.rows();
            let mut out = RMatrix::zeros(p * n, n);
            let mut block = m.clone();
            for step in 0..n {
                for i in 0..p {
                    for j in 0..n {
                        out[(step * p + i, j)] = block[(i, j)];
                    }
                }
                block = block.matmul(a)?;
            }
            out
        }
        KalmanMode::Controllability => {
            if m.rows() != n {
                return Err(shape("kalman_matrix", format!("b has {} rows, A is {n}x{n}", m.rows())));
            }
            let q = m.cols();
            let mut out = RMatrix::zeros(n, q * n);
            let mut block = m.clone();
            for step in 0..n {
                for i in 0..n {
                    for j in 0..q {
                        out[(i, step * q + j)] = block[(i, j)];
                    }
                }
                block = a.matmul(&block)?;
            }
            out
        }
    };
    let r = rank(&out, RANK_TOL);
    Ok((out, r))
}

/// Ackermann's formula: returns `K` with `spec(A + bK)` equal to `poles`.
pub fn place_poles(a: &RMatrix, b: &[f64], poles: &[Complex64]) -> Result<GainMatrix, LinalgError> {
    let n = a.require_square("place_poles")?;
    if b.len() != n || poles.len() != n {
        return Err(shape(
            "place_poles",
            format!("A is {n}x{n}, b has {} entries, {} poles", b.len(), poles.len()),
        ));
    }
    if !conjugate_closed(poles) {
        return Err(LinalgError::PolesNotConjugateClosed);
    }
    let (ctrb, r) = kalman_matrix(&RMatrix::column(b), a, KalmanMode::Controllability)?;
    if r < n {
        return Err(LinalgError::Uncontrollable);
    }
    // Monic characteristic polynomial coefficients, lowest degree first.
    let mut coeffs = vec![Complex64::new(1.0, 0.0)];
    for &p in poles {
        let mut next = vec![Complex64::new(0.0, 0.0); coeffs.len() + 1];
        for (i, &c) in coeffs.iter().enumerate() {
            next[i + 1] += c;
            next[i] -= c * p;
        }
        coeffs = next;
    }
    let mut phi = RMatrix::zeros(n, n);
    let mut power = RMatrix::identity(n);
    for c in &coeffs {
        phi = phi.add(&power.scale(c.re))?;
        power = power.matmul(a)?;
    }
    // Last row of C^{-1}: solve C' w = e_n.
    let mut e_n = vec![0.0; n];
    e_n[n - 1] = 1.0;
    let w = Lu::new(&ctrb.transpose())?.solve_vec(&e_n)?;
    let k: Vec<f64> = (0..n)
        .map(|j| -(0..n).map(|i| w[i] * phi[(i, j)]).sum::<f64>())
        .collect();
    Ok(GainMatrix(k))
}

fn conjugate_closed(poles: &[Complex64]) -> bool {
    let scale = poles.iter().map(|p| p.norm()).fold(1.0, f64::max);
    let tol = 1e-10 * scale;
    let mut used = vec![false; poles.len()];
    for (i, p) in poles.iter().enumerate() {
        if used[i] {
            continue;
        }
        if p.im.abs() <= tol {
            used[i] = true;
            continue;
        }
        let partner = (0..poles.len()).find(|&j| j != i && !used[j] && (poles[j] - p.conj()).norm() <= tol);
        match partner {
            Some(j) => {
                used[i] = true;
                used[j] = true;
            }
            None => return false,
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::symmetric_eigenvalues;
    use proptest::prelude::*;

    fn rotation() -> RMatrix {
        RMatrix::from_rows(&[vec![0.0, -1.0], vec![1.0, 0.0]]).unwrap()
    }

    fn real_poles(p: &[f64]) -> Vec<Complex64> {
        p.iter().map(|&x| Complex64::new(x, 0.0)).collect()
    }

    fn sorted_spectrum(m: &RMatrix) -> Vec<Complex64> {
        let mut ev = eigenvalues(m).unwrap();
        ev.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        ev
    }

    #[test]
    fn lyapunov_identity_case() {
        let p = solve_lyapunov(&RMatrix::identity(2).scale(-1.0), &RMatrix::identity(2).scale(2.0)).unwrap();
        assert!(p.sub(&RMatrix::identity(2)).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn lyapunov_for_placed_rotation_loop() {
        let k = place_poles(&rotation(), &[0.0, 1.0], &real_poles(&[-1.0, -2.0])).unwrap();
        let f = k.closed_loop(&rotation(), &[0.0, 1.0]).unwrap();
        let q = RMatrix::identity(2).scale(2.0);
        let p = solve_lyapunov(&f, &q).unwrap();
        let res = f
            .transpose()
            .matmul(&p)
            .unwrap()
            .add(&p.matmul(&f).unwrap())
            .unwrap()
            .add(&q)
            .unwrap();
        assert!(res.max_abs() < 1e-10);
        // Independent hand solution of the 3x3 symmetric system for F = [[0,-1],[2,-3]].
        let want = [2.5, -0.5, -0.5, 0.5];
        for (g, w) in p.as_slice().iter().zip(want) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn lyapunov_rejects_unstable() {
        assert!(matches!(
            solve_lyapunov(&RMatrix::identity(2), &RMatrix::identity(2)),
            Err(LinalgError::NotHurwitz(_))
        ));
        assert!(matches!(
            solve_lyapunov(&rotation(), &RMatrix::identity(2)),
            Err(LinalgError::NotHurwitz(_))
        ));
    }

    #[test]
    fn ackermann_examples() {
        let k = place_poles(&rotation(), &[0.0, 1.0], &real_poles(&[-1.0, -2.0])).unwrap();
        assert!((k.as_slice()[0] - 1.0).abs() < 1e-12 && (k.as_slice()[1] + 3.0).abs() < 1e-12);

        let k = place_poles(&rotation(), &[0.0, 1.0], &real_poles(&[-1.0, -1.0])).unwrap();
        let f = k.closed_loop(&rotation(), &[0.0, 1.0]).unwrap();
        // Characteristic polynomial s^2 - tr(F) s + det(F) must be (s+1)^2.
        let tr = f[(0, 0)] + f[(1, 1)];
        let det = crate::linalg::det(&f).unwrap();
        assert!((tr + 2.0).abs() < 1e-8 && (det - 1.0).abs() < 1e-8);

        let k = place_poles(&RMatrix::zeros(1, 1), &[1.0], &real_poles(&[-3.0])).unwrap();
        assert!((k.as_slice()[0] + 3.0).abs() < 1e-14);

        assert_eq!(
            place_poles(&RMatrix::identity(2), &[1.0, 0.0], &real_poles(&[-1.0, -2.0])),
            Err(LinalgError::Uncontrollable)
        );
        assert_eq!(
            place_poles(
                &rotation(),
                &[0.0, 1.0],
                &[Complex64::new(-1.0, 1.0), Complex64::new(-1.0, 2.0)]
            ),
            Err(LinalgError::PolesNotConjugateClosed)
        );
    }

    #[test]
    fn complex_pole_pair() {
        let poles = [Complex64::new(-1.0, 2.0), Complex64::new(-1.0, -2.0)];
        let k = place_poles(&rotation(), &[0.0, 1.0], &poles).unwrap();
        let ev = sorted_spectrum(&k.closed_loop(&rotation(), &[0.0, 1.0]).unwrap());
        assert!((ev[0] - poles[1]).norm() < 1e-8 && (ev[1] - poles[0]).norm() < 1e-8);
    }

    #[test]
    fn kalman_examples() {
        let (o, r) = kalman_matrix(&RMatrix::row(&[1.0, 0.0]), &rotation(), KalmanMode::Observability).unwrap();
        assert_eq!(o.as_slice(), &[1.0, 0.0, 0.0, -1.0]);
        assert_eq!(r, 2);
        let (c, r) = kalman_matrix(&RMatrix::column(&[0.0, 1.0]), &rotation(), KalmanMode::Controllability).unwrap();
        assert_eq!(c.as_slice(), &[0.0, -1.0, 1.0, 0.0]);
        assert_eq!(r, 2);
        let (_, r) = kalman_matrix(
            &RMatrix::row(&[1.0, 0.0]),
            &RMatrix::identity(2),
            KalmanMode::Observability,
        )
        .unwrap();
        assert_eq!(r, 1);
        assert!(kalman_matrix(&RMatrix::row(&[1.0, 0.0, 0.0]), &rotation(), KalmanMode::Observability).is_err());
    }

    #[test]
    fn hurwitz_examples() {
        assert!(is_hurwitz(&RMatrix::identity(3).scale(-1.0)).unwrap());
        assert!(!is_hurwitz(&rotation()).unwrap());
        assert!(is_hurwitz(&RMatrix::zeros(2, 3)).is_err());
    }

    proptest! {
        #[test]
        fn placement_yields_hurwitz_and_positive_lyapunov(p1 in 0.2f64..4.0, p2 in 0.2f64..4.0, re in 0.2f64..3.0, im in 0.1f64..3.0) {
            let a = RMatrix::from_rows(&[
                vec![0.0, -1.0, 0.0, 0.0],
                vec![1.0, 0.0, 0.0, 0.0],
                vec![0.0, 0.0, 0.0, -2.0],
                vec![0.0, 0.0, 2.0, 0.0],
            ]).unwrap();
            let b = [0.0, 1.0, 0.0, 1.0];
            let poles = [
                Complex64::new(-p1, 0.0),
                Complex64::new(-p2 - 0.05, 0.0),
                Complex64::new(-re, im),
                Complex64::new(-re, -im),
            ];
            let k = place_poles(&a, &b, &poles).unwrap();
            let f = k.closed_loop(&a, &b).unwrap();
            prop_assert!(is_hurwitz(&f).unwrap());
            let p = solve_lyapunov(&f, &RMatrix::identity(4).scale(2.0)).unwrap();
            prop_assert!(p.sub(&p.transpose()).unwrap().max_abs() < 1e-12);
            prop_assert!(symmetric_eigenvalues(&p).unwrap()[0] > 0.0);
        }
    }
}
