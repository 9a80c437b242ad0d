//! Cyclic Jacobi eigensolver for dense symmetric matrices.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Relative off-diagonal Frobenius norm at which sweeps stop.
pub const OFF_DIAGONAL_TOL: f64 = 1e-10;
/// Largest asymmetry accepted on input.
pub const SYMMETRY_TOL: f64 = 1e-8;

const MAX_SWEEPS: usize = 100;

/// Eigen-decomposition `A = Q diag(values) Q^T` with values sorted non-increasing.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    /// Column `c` is the unit eigenvector of `values[c]`; present when requested.
    pub vectors: Option<Array2<f64>>,
}

pub fn check_symmetric(a: &Array2<f64>) -> Result<()> {
    let (n, c) = a.dim();
    if n != c {
        return Err(Error::Dimension(format!("expected a square matrix, got {n}x{c}")));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let diff = (a[[i, j]] - a[[j, i]]).abs();
            if diff > SYMMETRY_TOL {
                return Err(Error::Symmetry { i, j, diff });
            }
        }
    }
    Ok(())
}

fn off_norm_sq(a: &[f64], n: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            s += 2.0 * a[i * n + j] * a[i * n + j];
        }
    }
    s
}

/// Runs cyclic Jacobi sweeps until the off-diagonal mass drops below
/// `OFF_DIAGONAL_TOL * ||A||_F`.
pub fn jacobi_eigen(matrix: &Array2<f64>, with_vectors: bool) -> Result<SymmetricEigen> {
    check_symmetric(matrix)?;
    let n = matrix.nrows();
    // Work on the symmetrized copy so rounding asymmetry cannot accumulate.
    let mut a: Vec<f64> = (0..n * n)
        .map(|t| {
            let (i, j) = (t / n, t % n);
            0.5 * (matrix[[i, j]] + matrix[[j, i]])
        })
        .collect();
    let mut v = with_vectors.then(|| {
        let mut v = vec![0.0; n * n];
        for i in 0..n {
            v[i * n + i] = 1.0;
        }
        v
    });
    let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let target = (OFF_DIAGONAL_TOL * norm).powi(2);

    let mut sweeps = 0;
    while off_norm_sq(&a, n) > target {
        if sweeps == MAX_SWEEPS {
            return Err(Error::Numeric(format!("Jacobi did not converge in {MAX_SWEEPS} sweeps")));
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let (app, aqq) = (a[p * n + p], a[q * n + q]);
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                if let Some(v) = v.as_mut() {
                    for k in 0..n {
                        let vkp = v[k * n + p];
                        let vkq = v[k * n + q];
                        v[k * n + p] = c * vkp - s * vkq;
                        v[k * n + q] = s * vkp + c * vkq;
                    }
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a[y * n + y].total_cmp(&a[x * n + x]));
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let vectors = v.map(|v| Array2::from_shape_fn((n, n), |(r, c)| v[r * n + order[c]]));
    Ok(SymmetricEigen { values, vectors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn small_spectra() {
        let e = jacobi_eigen(&array![[3.0, 0.0], [0.0, 1.0]], false).unwrap();
        assert_eq!(e.values, vec![3.0, 1.0]);
        // det([[2-x,1],[1,2-x]]) = (x-1)(x-3)
        let e = jacobi_eigen(&array![[2.0, 1.0], [1.0, 2.0]], false).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-8 && (e.values[1] - 1.0).abs() < 1e-8);
        let e = jacobi_eigen(&Array2::eye(5), false).unwrap();
        assert_eq!(e.values, vec![1.0; 5]);
    }

    #[test]
    fn rejects_asymmetric() {
        assert!(matches!(
            jacobi_eigen(&array![[1.0, 2.0], [0.0, 1.0]], false),
            Err(Error::Symmetry { i: 0, j: 1, .. })
        ));
    }

    #[test]
    fn trace_and_reconstruction_on_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for n in [1usize, 2, 7, 20, 50] {
            let b = Array2::from_shape_fn((n, n), |_| rng.random_range(-1.0..1.0));
            let a = &b + &b.t();
            let e = jacobi_eigen(&a, true).unwrap();
            let tr: f64 = a.diag().sum();
            assert!((e.values.iter().sum::<f64>() - tr).abs() <= 1e-8 * tr.abs().max(1.0));
            assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
            let q = e.vectors.unwrap();
            let lam = Array2::from_diag(&ndarray::Array1::from(e.values.clone()));
            let rec = q.dot(&lam).dot(&q.t());
            let err = (&rec - &a).iter().map(|x| x * x).sum::<f64>().sqrt();
            let fro = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!(err < 1e-7 * fro, "n={n} err={err}");
        }
    }

    #[test]
    fn agrees_with_nalgebra() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 30;
        let b = Array2::from_shape_fn((n, n), |_| rng.random_range(-1.0..1.0));
        let a = b.dot(&b.t());
        let ours = jacobi_eigen(&a, false).unwrap().values;
        let na = nalgebra::DMatrix::from_fn(n, n, |i, j| a[[i, j]]);
        let mut theirs: Vec<f64> = na.symmetric_eigen().eigenvalues.iter().copied().collect();
        theirs.sort_by(|x, y| y.total_cmp(x));
        for (x, y) in ours.iter().zip(&theirs) {
            assert!((x - y).abs() < 1e-9 * theirs[0]);
        }
    }
}
