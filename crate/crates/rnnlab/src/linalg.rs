//! Small dense linear-algebra helpers: a cyclic Jacobi eigensolver for
//! symmetric matrices and a random-orthogonal-matrix sampler. The state
//! spaces here have at most ~20 dimensions, so simple dense algorithms are
//! robust and fast enough.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;

/// Random orthogonal matrix: Gaussian sample orthonormalized column by
/// column (modified Gram-Schmidt).
pub fn random_orthogonal(n: usize, rng: &mut impl Rng) -> Array2<f64> {
    let mut cols: Vec<Array1<f64>> = (0..n)
        .map(|_| Array1::from_shape_fn(n, |_| rng.sample(StandardNormal)))
        .collect();
    for k in 0..n {
        for j in 0..k {
            let proj = cols[k].dot(&cols[j]);
            let prev = cols[j].clone();
            cols[k].scaled_add(-proj, &prev);
        }
        let norm = cols[k].dot(&cols[k]).sqrt();
        cols[k] /= norm;
    }
    let mut out = Array2::zeros((n, n));
    for (j, col) in cols.iter().enumerate() {
        out.column_mut(j).assign(col);
    }
    out
}

/// Eigen-decomposition of a symmetric matrix: `a = vectors * diag(values) * vectors^T`.
///
/// `vectors` holds orthonormal eigenvectors as columns; `values` are sorted
/// in descending order.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Array1<f64>,
    pub vectors: Array2<f64>,
}

/// Cyclic Jacobi iteration. The input is symmetrized first, so tiny
/// asymmetries from rounding are tolerated; panics on a non-square matrix.
pub fn sym_eigen(m: &Array2<f64>) -> SymEigen {
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "sym_eigen needs a square matrix");

    let mut a = m.clone();
    for i in 0..n {
        for j in 0..i {
            let avg = 0.5 * (a[[i, j]] + a[[j, i]]);
            a[[i, j]] = avg;
            a[[j, i]] = avg;
        }
    }
    let mut v: Array2<f64> = Array2::eye(n);
    let frob = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = 1e-30 + 1e-15 * frob;

    for _sweep in 0..200 {
        let off: f64 = (0..n)
            .flat_map(|p| (p + 1..n).map(move |q| (p, q)))
            .map(|(p, q)| a[[p, q]] * a[[p, q]])
            .sum::<f64>()
            .sqrt();
        if off <= tol {
            break;
        }
        for p in 0..n.saturating_sub(1) {
            for q in p + 1..n {
                let apq = a[[p, q]];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[[j, j]].total_cmp(&a[[i, i]]));
    let values = Array1::from_iter(order.iter().map(|&i| a[[i, i]]));
    let mut vectors = Array2::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        vectors.column_mut(dst).assign(&v.column(src));
    }
    SymEigen { values, vectors }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_by_two_analytic() {
        let a = array![[2.0, 1.0], [1.0, 2.0]];
        let e = sym_eigen(&a);
        assert_abs_diff_eq!(e.values[0], 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(e.values[1], 1.0, epsilon = 1e-12);
        let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
        let v0 = e.vectors.column(0);
        assert_abs_diff_eq!(v0[0].abs(), inv_sqrt2, epsilon = 1e-12);
        assert_abs_diff_eq!(v0[1].abs(), inv_sqrt2, epsilon = 1e-12);
        assert_abs_diff_eq!(v0[0] * v0[1], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn random_symmetric_reconstruction_and_orthonormality() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [1usize, 2, 5, 12, 20] {
            let raw = Array2::from_shape_fn((n, n), |_| rng.gen_range(-1.0..1.0));
            let sym = 0.5 * (&raw + &raw.t());
            let e = sym_eigen(&sym);

            let lam = Array2::from_diag(&e.values);
            let rec = e.vectors.dot(&lam).dot(&e.vectors.t());
            let err = (&rec - &sym).iter().map(|v| v.abs()).fold(0.0, f64::max);
            assert!(err < 1e-11, "n={n} reconstruction error {err}");

            let gram = e.vectors.t().dot(&e.vectors);
            let eye: Array2<f64> = Array2::eye(n);
            let orth = (&gram - &eye).iter().map(|v| v.abs()).fold(0.0, f64::max);
            assert!(orth < 1e-10, "n={n} orthonormality error {orth}");
        }
    }

    #[test]
    fn random_orthogonal_matrices_are_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for n in [1usize, 4, 10, 20] {
            let q = random_orthogonal(n, &mut rng);
            let gram = q.t().dot(&q);
            let eye: Array2<f64> = Array2::eye(n);
            let err = (&gram - &eye).iter().map(|v| v.abs()).fold(0.0, f64::max);
            assert!(err < 1e-12, "n={n}: {err}");
        }
    }

    #[test]
    fn positive_semidefinite_spectrum_is_nonnegative() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in [3usize, 8, 15] {
            let b = Array2::from_shape_fn((n, n), |_| rng.gen_range(-1.0..1.0));
            let psd = b.t().dot(&b);
            let e = sym_eigen(&psd);
            assert!(e.values.iter().all(|&l| l >= -1e-10), "n={n}: {:?}", e.values);
            // descending order
            for k in 1..n {
                assert!(e.values[k - 1] >= e.values[k] - 1e-12);
            }
        }
    }
}
