use super::basis::Matrix;
use crate::error::{check_same_len, Error, Result};
use crate::scalar::Scalar;

/// Relative cutoff on |R_kk| / |R_00| after column equilibration. Equivalent
/// to 1e-10 on the diagonal of the Gram matrix XᵀWX.
const RANK_TOL: f64 = 1e-5;

/// Solves min_β Σ w_i (z_i − x_iᵀβ)² by Householder QR with column pivoting
/// on the column-equilibrated matrix diag(√w)·X.
pub fn weighted_least_squares<T: Scalar>(x: &Matrix<T>, w: &[T], z: &[T]) -> Result<Vec<T>> {
    let (n, p) = (x.rows(), x.cols());
    check_same_len("wls weights", n, w.len())?;
    check_same_len("wls response", n, z.len())?;
    if n < p {
        return Err(Error::Singular(format!("{n} rows for {p} coefficients")));
    }
    // column-major working copy
    let mut a: Vec<Vec<T>> = vec![vec![T::zero(); n]; p];
    let mut b = vec![T::zero(); n];
    for i in 0..n {
        if !(w[i] >= T::zero()) || !w[i].is_finite() || !z[i].is_finite() {
            return Err(Error::Divergence(format!(
                "non-finite working quantity at row {}",
                i + 1
            )));
        }
        let sw = w[i].sqrt();
        for (j, col) in a.iter_mut().enumerate() {
            col[i] = sw * x.get(i, j);
        }
        b[i] = sw * z[i];
    }
    let mut scale = vec![T::zero(); p];
    for (j, col) in a.iter_mut().enumerate() {
        let norm = norm2(col);
        if !(norm > T::zero()) {
            return Err(Error::Singular(format!("design column {j} has zero weighted norm")));
        }
        col.iter_mut().for_each(|v| *v = *v / norm);
        scale[j] = norm;
    }

    let mut perm: Vec<usize> = (0..p).collect();
    let mut r_top = T::zero();
    for k in 0..p {
        // pivot: remaining column with the largest trailing norm
        let (best, best_norm) = (k..p)
            .map(|j| (j, norm2(&a[j][k..])))
            .fold((k, T::neg_infinity()), |acc, c| if c.1 > acc.1 { c } else { acc });
        a.swap(k, best);
        perm.swap(k, best);
        if k == 0 {
            r_top = best_norm;
        }
        if !(best_norm > T::lit(RANK_TOL) * r_top) {
            return Err(Error::Singular(format!(
                "design matrix is rank deficient (rank {k} < {p} columns)"
            )));
        }
        // Householder reflector zeroing a[k][k+1..]
        let alpha = if a[k][k] > T::zero() { -best_norm } else { best_norm };
        let mut v: Vec<T> = a[k][k..].to_vec();
        v[0] = v[0] - alpha;
        let vnorm2 = v.iter().fold(T::zero(), |s, &t| s + t * t);
        if vnorm2 > T::zero() {
            let two = T::lit(2.0);
            for col in a.iter_mut().skip(k) {
                reflect(&v, vnorm2, two, &mut col[k..]);
            }
            reflect(&v, vnorm2, two, &mut b[k..]);
        }
        a[k][k] = alpha;
        a[k][k + 1..n].fill(T::zero());
    }

    let mut coef = vec![T::zero(); p];
    for k in (0..p).rev() {
        let mut s = b[k];
        for j in k + 1..p {
            s = s - a[j][k] * coef[j];
        }
        coef[k] = s / a[k][k];
    }
    let mut beta = vec![T::zero(); p];
    for (k, &j) in perm.iter().enumerate() {
        beta[j] = coef[k] / scale[j];
    }
    Ok(beta)
}

fn reflect<T: Scalar>(v: &[T], vnorm2: T, two: T, target: &mut [T]) {
    let dot = v.iter().zip(target.iter()).fold(T::zero(), |s, (&a, &b)| s + a * b);
    let f = two * dot / vnorm2;
    for (t, &vi) in target.iter_mut().zip(v) {
        *t = *t - f * vi;
    }
}

fn norm2<T: Scalar>(v: &[T]) -> T {
    // scaled to avoid overflow on large design entries
    let m = v.iter().fold(T::zero(), |m, &x| m.max(x.abs()));
    if m == T::zero() {
        return T::zero();
    }
    m * v.iter().fold(T::zero(), |s, &x| s + (x / m) * (x / m)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exact_fit_recovers_coefficients() {
        let rows: Vec<Vec<f64>> = (0..6).map(|i| vec![1.0, i as f64, (i * i) as f64]).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let z: Vec<f64> = (0..6).map(|i| 2.0 - 0.5 * i as f64 + 0.25 * (i * i) as f64).collect();
        let w = vec![1.0, 2.0, 0.5, 3.0, 1.0, 1.0];
        let beta = weighted_least_squares(&x, &w, &z).unwrap();
        assert_relative_eq!(beta[0], 2.0, epsilon = 1e-12);
        assert_relative_eq!(beta[1], -0.5, epsilon = 1e-12);
        assert_relative_eq!(beta[2], 0.25, epsilon = 1e-12);
    }

    #[test]
    fn weighted_mean_for_intercept_only() {
        let x = Matrix::from_rows(&[vec![1.0], vec![1.0], vec![1.0]]).unwrap();
        let beta = weighted_least_squares(&x, &[1.0, 1.0, 2.0], &[1.0, 2.0, 4.0]).unwrap();
        assert_relative_eq!(beta[0], 11.0 / 4.0, max_relative = 1e-14);
    }

    #[test]
    fn normal_equations_hold() {
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|i| {
                let t = i as f64 * 0.37;
                vec![1.0, t.sin(), t.cos() * 3.0, t]
            })
            .collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let z: Vec<f64> = (0..20).map(|i| ((i * 7 % 5) as f64).sqrt()).collect();
        let w: Vec<f64> = (0..20).map(|i| 0.5 + (i % 3) as f64).collect();
        let beta = weighted_least_squares(&x, &w, &z).unwrap();
        let fitted = x.mul_vec(&beta);
        for j in 0..4 {
            let g: f64 = (0..20).map(|i| w[i] * x.get(i, j) * (z[i] - fitted[i])).sum();
            assert!(g.abs() < 1e-10, "column {j}: {g}");
        }
    }

    #[test]
    fn rank_deficiency_detected() {
        let rows: Vec<Vec<f64>> = (0..5).map(|i| vec![1.0, i as f64, 2.0 * i as f64 + 1.0]).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let r = weighted_least_squares(&x, &[1.0; 5], &[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert!(matches!(r, Err(Error::Singular(_))));
        let x = Matrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap();
        assert!(matches!(
            weighted_least_squares(&x, &[1.0, 1.0], &[1.0, 1.0]),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn non_finite_inputs_flagged() {
        let x = Matrix::from_rows(&[vec![1.0], vec![1.0]]).unwrap();
        assert!(matches!(
            weighted_least_squares(&x, &[1.0, f64::NAN], &[1.0, 1.0]),
            Err(Error::Divergence(_))
        ));
    }
}
