//! Truncated SVD through the Gram matrix.
//!
//! Kernel unfoldings are short and wide (`O` rows against `I·K³` columns),
//! so the left singular vectors are taken as eigenvectors of the small
//! `M·Mᵀ`, computed with cyclic Jacobi rotations.

use crate::error::{Error, Result};
use crate::tensor::Matrix;

const MAX_SWEEPS: usize = 100;

/// Eigen-decomposition of a symmetric matrix.
///
/// Returns eigenvalues in descending order (ties keep their original
/// index order) and the matching eigenvectors as columns.
pub fn symmetric_eigen(a: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    let n = a.rows();
    if n != a.cols() {
        return Err(Error::DimensionMismatch(format!("{}x{} is not square", n, a.cols())));
    }
    if a.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("symmetric matrix"));
    }
    let mut m = a.data().to_vec();
    let mut v = Matrix::identity(n).into_data();

    let total: f64 = m.iter().map(|x| x * x).sum();
    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|p| (0..n).filter(move |&q| q != p).map(move |q| (p, q)))
            .map(|(p, q)| m[p * n + q] * m[p * n + q])
            .sum();
        if off <= 1e-32 * total || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                rotate(&mut m, n, p, q, c, s);
                // eigenvector accumulation: V ← V·J, columns p and q
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| m[y * n + y].total_cmp(&m[x * n + x]));
    let values = order.iter().map(|&i| m[i * n + i]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for k in 0..n {
            vectors.set(k, dst, v[k * n + src]);
        }
    }
    Ok((values, vectors))
}

/// Applies `A ← Jᵀ·A·J` for the rotation in the `(p, q)` plane.
fn rotate(m: &mut [f64], n: usize, p: usize, q: usize, c: f64, s: f64) {
    for k in 0..n {
        let akp = m[k * n + p];
        let akq = m[k * n + q];
        m[k * n + p] = c * akp - s * akq;
        m[k * n + q] = s * akp + c * akq;
    }
    for k in 0..n {
        let apk = m[p * n + k];
        let aqk = m[q * n + k];
        m[p * n + k] = c * apk - s * aqk;
        m[q * n + k] = s * apk + c * aqk;
    }
    m[p * n + q] = 0.0;
    m[q * n + p] = 0.0;
}

/// `M·Mᵀ`.
pub fn gram(m: &Matrix) -> Matrix {
    let rows = m.rows();
    let mut g = Matrix::zeros(rows, rows);
    for a in 0..rows {
        let ra = m.row(a);
        for b in a..rows {
            let dot: f64 = ra.iter().zip(m.row(b)).map(|(x, y)| x * y).sum();
            g.set(a, b, dot);
            g.set(b, a, dot);
        }
    }
    g
}

/// The `r` leading left singular vectors of `m`, as orthonormal columns.
///
/// `r` may go up to `m.rows()`. Beyond the column rank the extra columns
/// complete an orthonormal basis from the null space of `M·Mᵀ`. Each
/// column is signed so that its largest-magnitude entry is positive.
pub fn leading_left_singular_vectors(m: &Matrix, r: usize) -> Result<Matrix> {
    if r == 0 || r > m.rows() {
        return Err(Error::RankOutOfRange { rank: r, max: m.rows() });
    }
    if m.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix"));
    }
    let (_, vectors) = symmetric_eigen(&gram(m))?;
    let mut u = vectors.leading_columns(r)?;
    orthonormalize_columns(&mut u);
    fix_signs(&mut u);
    Ok(u)
}

/// Two passes of modified Gram-Schmidt; tightens orthonormality after the
/// rotations have accumulated round-off.
pub(crate) fn orthonormalize_columns(u: &mut Matrix) {
    let (rows, cols) = (u.rows(), u.cols());
    for _ in 0..2 {
        for j in 0..cols {
            for k in 0..j {
                let dot: f64 = (0..rows).map(|i| u.get(i, j) * u.get(i, k)).sum();
                for i in 0..rows {
                    let v = u.get(i, j) - dot * u.get(i, k);
                    u.set(i, j, v);
                }
            }
            let norm = (0..rows).map(|i| u.get(i, j).powi(2)).sum::<f64>().sqrt();
            for i in 0..rows {
                let v = u.get(i, j) / norm;
                u.set(i, j, v);
            }
        }
    }
}

pub(crate) fn fix_signs(u: &mut Matrix) {
    for j in 0..u.cols() {
        let mut pivot = 0;
        for i in 1..u.rows() {
            if u.get(i, j).abs() > u.get(pivot, j).abs() {
                pivot = i;
            }
        }
        if u.get(pivot, j) < 0.0 {
            for i in 0..u.rows() {
                let v = -u.get(i, j);
                u.set(i, j, v);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::XorShift64Star;

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
        Matrix::new(rows, cols, XorShift64Star::new(seed).fill_uniform(rows * cols)).unwrap()
    }

    #[test]
    fn diagonal_example() {
        let m = Matrix::from_rows(&[vec![3.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let u = leading_left_singular_vectors(&m, 1).unwrap();
        assert_eq!(u.data(), &[1.0, 0.0]);
    }

    #[test]
    fn sign_rule_flips_negative_pivot() {
        let m = Matrix::from_rows(&[vec![0.0, 0.0], vec![-5.0, 0.0]]).unwrap();
        let u = leading_left_singular_vectors(&m, 1).unwrap();
        assert_eq!(u.data(), &[0.0, 1.0]);
    }

    #[test]
    fn rank_out_of_range() {
        let m = random_matrix(3, 5, 1);
        assert!(matches!(leading_left_singular_vectors(&m, 0), Err(Error::RankOutOfRange { .. })));
        assert!(matches!(leading_left_singular_vectors(&m, 4), Err(Error::RankOutOfRange { .. })));
    }

    #[test]
    fn non_finite_rejected() {
        let mut data = vec![1.0; 6];
        data[4] = f64::NAN;
        let m = Matrix::new(2, 3, data).unwrap();
        assert!(matches!(leading_left_singular_vectors(&m, 1), Err(Error::NonFinite(_))));
    }

    #[test]
    fn columns_are_orthonormal() {
        for (rows, cols, seed) in [(8, 40, 3), (17, 17, 4), (12, 5, 5), (40, 300, 6)] {
            let m = random_matrix(rows, cols, seed);
            let u = leading_left_singular_vectors(&m, rows).unwrap();
            assert!(u.orthonormality_error() < 1e-12, "{rows}x{cols}");
        }
    }

    #[test]
    fn eigen_reconstructs_input() {
        let a = gram(&random_matrix(9, 14, 8));
        let (values, v) = symmetric_eigen(&a).unwrap();
        for w in values.windows(2) {
            assert!(w[0] >= w[1]);
        }
        for i in 0..9 {
            for j in 0..9 {
                let rebuilt: f64 = (0..9).map(|k| v.get(i, k) * values[k] * v.get(j, k)).sum();
                assert!((rebuilt - a.get(i, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn full_basis_reprojects_matrix() {
        let m = random_matrix(6, 30, 10);
        let u = leading_left_singular_vectors(&m, 6).unwrap();
        let proj = u.matmul(&u.transpose().matmul(&m).unwrap()).unwrap();
        let err: f64 = proj.data().iter().zip(m.data()).map(|(a, b)| (a - b).powi(2)).sum();
        assert!(err.sqrt() <= 1e-10 * m.frobenius_norm_sq().sqrt());
    }

    #[test]
    fn deterministic() {
        let m = random_matrix(10, 25, 12);
        let a = leading_left_singular_vectors(&m, 4).unwrap();
        let b = leading_left_singular_vectors(&m, 4).unwrap();
        assert_eq!(a, b);
    }
}
