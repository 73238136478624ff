use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Usage("ragged matrix rows".into()));
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    pub fn column(&self, j: usize) -> Vec<T> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    /// X·β, one entry per row.
    pub fn mul_vec(&self, beta: &[T]) -> Vec<T> {
        (0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(beta)
                    .fold(T::zero(), |acc, (&x, &b)| acc + x * b)
            })
            .collect()
    }
}

/// Expansion applied to one raw feature. Every variant contributes the
/// linear term; the intercept column is added once for the whole basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureBasis<T> {
    /// x
    Identity,
    /// x, x², …, x^d
    Polynomial { degree: u8 },
    /// x, …, x^d, (x − t₁)₊^d, …, (x − t_K)₊^d
    Spline { degree: u8, knots: Vec<T> },
}

impl<T: Scalar> FeatureBasis<T> {
    fn n_columns(&self) -> usize {
        match self {
            FeatureBasis::Identity => 1,
            FeatureBasis::Polynomial { degree } => *degree as usize,
            FeatureBasis::Spline { degree, knots } => *degree as usize + knots.len(),
        }
    }

    fn push_columns(&self, x: T, out: &mut Vec<T>) {
        match self {
            FeatureBasis::Identity => out.push(x),
            FeatureBasis::Polynomial { degree } => {
                out.extend((1..=*degree as i32).map(|d| x.powi(d)));
            }
            FeatureBasis::Spline { degree, knots } => {
                let d = *degree as i32;
                out.extend((1..=d).map(|k| x.powi(k)));
                out.extend(knots.iter().map(|&t| (x - t).max(T::zero()).powi(d)));
            }
        }
    }

    fn validate(&self, j: usize, range: Option<(T, T)>) -> Result<()> {
        let degree = match self {
            FeatureBasis::Identity => return Ok(()),
            FeatureBasis::Polynomial { degree } => *degree,
            FeatureBasis::Spline { degree, .. } => *degree,
        };
        if !(1..=3).contains(&degree) {
            return Err(Error::Usage(format!(
                "feature x{}: degree must be 1, 2 or 3, got {degree}",
                j + 1
            )));
        }
        if let FeatureBasis::Spline { knots, .. } = self {
            if knots.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::Usage(format!(
                    "feature x{}: knots must be strictly increasing",
                    j + 1
                )));
            }
            if let Some((lo, hi)) = range {
                if let Some(t) = knots.iter().find(|&&t| !(t > lo && t < hi)) {
                    return Err(Error::Usage(format!(
                        "feature x{}: knot {t} outside the observed range ({lo}, {hi})",
                        j + 1
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Per-feature expansions plus an optional pairwise tensor product, which is
/// only meaningful with exactly two features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec<T> {
    pub features: Vec<FeatureBasis<T>>,
    #[serde(default)]
    pub tensor: bool,
}

impl<T: Scalar> BasisSpec<T> {
    pub fn identity(n_features: usize) -> Self {
        Self {
            features: vec![FeatureBasis::Identity; n_features],
            tensor: false,
        }
    }

    /// Truncated-power splines of `degree` with `n_knots` equispaced interior
    /// knots over each feature's observed range.
    pub fn equispaced_splines(data: &Dataset<T>, degree: u8, n_knots: usize) -> Self {
        let features = data
            .features
            .iter()
            .map(|col| {
                let (lo, hi) = range_of(col).unwrap_or((T::zero(), T::one()));
                let step = (hi - lo) / T::from_count(n_knots + 1);
                let knots = (1..=n_knots).map(|k| lo + step * T::from_count(k)).collect();
                FeatureBasis::Spline { degree, knots }
            })
            .collect();
        Self {
            features,
            tensor: false,
        }
    }

    pub fn n_columns(&self) -> usize {
        let per: Vec<usize> = self.features.iter().map(FeatureBasis::n_columns).collect();
        let tensor = if self.tensor && per.len() == 2 {
            per[0] * per[1]
        } else {
            0
        };
        1 + per.iter().sum::<usize>() + tensor
    }

    /// Expands raw feature columns into design rows. Knots are not checked
    /// against the data here; [`design_matrix`] does that for training data.
    pub fn expand(&self, features: &[Vec<T>]) -> Result<Matrix<T>> {
        self.expand_rows(features, rows_of(features)?)
    }

    /// As [`expand`](Self::expand) with an explicit row count, which is the
    /// only way to size an intercept-only design.
    pub fn expand_rows(&self, features: &[Vec<T>], n: usize) -> Result<Matrix<T>> {
        if features.len() != self.features.len() {
            return Err(Error::Usage(format!(
                "basis expects {} features, got {}",
                self.features.len(),
                features.len()
            )));
        }
        if self.tensor && features.len() != 2 {
            return Err(Error::Usage("tensor product needs exactly two features".into()));
        }
        if features.iter().any(|c| c.len() != n) {
            return Err(Error::Usage(format!("feature columns must all have {n} rows")));
        }
        let cols = self.n_columns();
        let mut m = Matrix::zeros(n, cols);
        let mut row = Vec::with_capacity(cols);
        let mut blocks: Vec<Vec<T>> = vec![Vec::new(); features.len()];
        for i in 0..n {
            row.clear();
            row.push(T::one());
            for (j, (fb, col)) in self.features.iter().zip(features).enumerate() {
                let x = col[i];
                if !x.is_finite() {
                    return Err(Error::Usage(format!("row {}: feature x{} is not finite", i + 1, j + 1)));
                }
                blocks[j].clear();
                fb.push_columns(x, &mut blocks[j]);
                row.extend_from_slice(&blocks[j]);
            }
            if self.tensor {
                for &a in &blocks[0] {
                    for &b in &blocks[1] {
                        row.push(a * b);
                    }
                }
            }
            for (k, &v) in row.iter().enumerate() {
                m.set(i, k, v);
            }
        }
        Ok(m)
    }
}

/// Row count of a nonempty set of equal-length feature columns.
pub(crate) fn rows_of<T>(features: &[Vec<T>]) -> Result<usize> {
    let n = features
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::Usage("no feature columns to infer the row count from".into()))?;
    if features.iter().any(|c| c.len() != n) {
        return Err(Error::Usage("feature columns differ in length".into()));
    }
    Ok(n)
}

fn range_of<T: Scalar>(col: &[T]) -> Option<(T, T)> {
    let mut it = col.iter().copied();
    let first = it.next()?;
    Some(it.fold((first, first), |(lo, hi), x| (lo.min(x), hi.max(x))))
}

/// Design matrix together with the basis that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix<T> {
    pub matrix: Matrix<T>,
    pub basis: BasisSpec<T>,
}

/// Intercept column followed by the basis expansion of every feature.
pub fn design_matrix<T: Scalar>(data: &Dataset<T>, basis: &BasisSpec<T>) -> Result<DesignMatrix<T>> {
    if basis.features.len() != data.n_features() {
        return Err(Error::Usage(format!(
            "basis expects {} features, dataset has {}",
            basis.features.len(),
            data.n_features()
        )));
    }
    for (j, (fb, col)) in basis.features.iter().zip(&data.features).enumerate() {
        fb.validate(j, range_of(col))?;
    }
    Ok(DesignMatrix {
        matrix: basis.expand_rows(&data.features, data.len())?,
        basis: basis.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_feature(xs: &[f64]) -> Dataset<f64> {
        Dataset::new(vec![0.0; xs.len()], vec![1.0; xs.len()], vec![xs.to_vec()], None).unwrap()
    }

    #[test]
    fn identity_columns() {
        let d = one_feature(&[0.5, 2.0]);
        let x = design_matrix(&d, &BasisSpec::identity(1)).unwrap().matrix;
        assert_eq!(x.row(0), &[1.0, 0.5]);
        assert_eq!(x.row(1), &[1.0, 2.0]);
    }

    #[test]
    fn linear_spline_columns() {
        let d = one_feature(&[0.0, 4.0, 7.0, 10.0]);
        let basis = BasisSpec {
            features: vec![FeatureBasis::Spline {
                degree: 1,
                knots: vec![5.0],
            }],
            tensor: false,
        };
        let x = design_matrix(&d, &basis).unwrap().matrix;
        assert_eq!(x.row(1), &[1.0, 4.0, 0.0]);
        assert_eq!(x.row(2), &[1.0, 7.0, 2.0]);
        assert_eq!(x.row(3), &[1.0, 10.0, 5.0]);
    }

    #[test]
    fn polynomial_columns() {
        let d = one_feature(&[3.0]);
        let basis = BasisSpec {
            features: vec![FeatureBasis::Polynomial { degree: 2 }],
            tensor: false,
        };
        assert_eq!(design_matrix(&d, &basis).unwrap().matrix.row(0), &[1.0, 3.0, 9.0]);
    }

    #[test]
    fn tensor_product_columns() {
        let d = Dataset::new(vec![0.0], vec![1.0], vec![vec![2.0], vec![3.0]], None).unwrap();
        let basis = BasisSpec {
            features: vec![FeatureBasis::Polynomial { degree: 2 }, FeatureBasis::Identity],
            tensor: true,
        };
        assert_eq!(basis.n_columns(), 6);
        let x = design_matrix(&d, &basis).unwrap().matrix;
        assert_eq!(x.row(0), &[1.0, 2.0, 4.0, 3.0, 6.0, 12.0]);
    }

    #[test]
    fn invalid_bases_rejected() {
        let d = one_feature(&[0.0, 10.0]);
        let spline = |degree, knots: Vec<f64>| BasisSpec {
            features: vec![FeatureBasis::Spline { degree, knots }],
            tensor: false,
        };
        assert!(matches!(
            design_matrix(&d, &spline(1, vec![11.0])),
            Err(Error::Usage(_))
        ));
        assert!(matches!(
            design_matrix(&d, &spline(1, vec![10.0])),
            Err(Error::Usage(_))
        ));
        assert!(matches!(
            design_matrix(&d, &spline(1, vec![6.0, 4.0])),
            Err(Error::Usage(_))
        ));
        assert!(matches!(design_matrix(&d, &spline(4, vec![5.0])), Err(Error::Usage(_))));
        assert!(design_matrix(&d, &BasisSpec::identity(2)).is_err());
    }

    #[test]
    fn equispaced_knots() {
        let d = one_feature(&[0.0, 5.0, 10.0]);
        let b = BasisSpec::equispaced_splines(&d, 3, 4);
        assert_eq!(
            b.features[0],
            FeatureBasis::Spline {
                degree: 3,
                knots: vec![2.0, 4.0, 6.0, 8.0]
            }
        );
        assert_eq!(design_matrix(&d, &b).unwrap().matrix.cols(), 8);
    }
}
