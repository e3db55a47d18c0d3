//! Intrinsic dimensionality by principal components.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::FeatureMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PcaMode {
    /// Eigenvalues of the covariance matrix.
    #[default]
    Covariance,
    /// Eigenvalues of the correlation matrix; constant columns are dropped.
    Correlation,
}

/// Principal component variances in descending order.
pub fn pca_spectrum(x: &FeatureMatrix, mode: PcaMode) -> Result<Vec<f64>> {
    let (n, p) = (x.rows(), x.cols());
    if n < 2 || p == 0 {
        return Err(Error::input("PCA needs at least two rows and one column"));
    }
    let mut cols = Vec::with_capacity(p);
    for j in 0..p {
        let c = x.column(j);
        let m = c.iter().sum::<f64>() / n as f64;
        let centered: Vec<f64> = c.iter().map(|v| v - m).collect();
        match mode {
            PcaMode::Covariance => cols.push(centered),
            PcaMode::Correlation => {
                let ss: f64 = centered.iter().map(|v| v * v).sum();
                if ss > 0.0 {
                    let s = (ss / (n - 1) as f64).sqrt();
                    cols.push(centered.iter().map(|v| v / s).collect());
                }
            }
        }
    }
    if cols.is_empty() {
        return Err(Error::Undefined("PCA of data with zero total variance"));
    }
    let m = DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i]);
    let mut values: Vec<f64> = m
        .singular_values()
        .iter()
        .map(|s| s * s / (n - 1) as f64)
        .collect();
    values.sort_by(|a, b| b.total_cmp(a));
    if values.iter().sum::<f64>() <= 0.0 {
        return Err(Error::Undefined("PCA of data with zero total variance"));
    }
    Ok(values)
}

/// Smallest `m` whose leading `m` eigenvalues explain at least `fraction`
/// of the total, given descending eigenvalues.
pub fn components_for(eigenvalues: &[f64], fraction: f64) -> usize {
    let total: f64 = eigenvalues.iter().sum();
    // relative slack so exactly attained fractions are not lost to rounding
    let target = fraction * total * (1.0 - 1e-12);
    let mut acc = 0.0;
    for (i, v) in eigenvalues.iter().enumerate() {
        acc += v;
        if acc >= target {
            return i + 1;
        }
    }
    eigenvalues.len()
}

pub fn pca_components(x: &FeatureMatrix, fraction: f64, mode: PcaMode) -> Result<usize> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::input(format!(
            "explained fraction {fraction} outside (0, 1]"
        )));
    }
    Ok(components_for(&pca_spectrum(x, mode)?, fraction))
}

pub fn pca_components90(x: &FeatureMatrix) -> Result<usize> {
    pca_components(x, 0.9, PcaMode::Covariance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn random(n: usize, p: usize, seed: u64) -> FeatureMatrix {
        let mut r = rng::seeded(seed);
        FeatureMatrix::from_rows(
            (0..n)
                .map(|_| (0..p).map(|_| r.sample(StandardNormal)).collect())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn rank_one_needs_one_component() {
        let v = [1.0, -2.0, 0.5, 3.0];
        let rows = (0..20)
            .map(|i| v.iter().map(|c| 7.0 + c * (i as f64 - 4.5)).collect())
            .collect();
        let x = FeatureMatrix::from_rows(rows).unwrap();
        assert_eq!(pca_components90(&x).unwrap(), 1);
    }

    #[test]
    fn isotropic_needs_nine_of_ten() {
        // rows +-e_i give an exactly isotropic covariance
        let mut rows = Vec::new();
        for i in 0..10 {
            for s in [1.0, -1.0] {
                let mut r = vec![0.0; 10];
                r[i] = s;
                rows.push(r);
            }
        }
        let x = FeatureMatrix::from_rows(rows).unwrap();
        assert_eq!(pca_components90(&x).unwrap(), 9);
        assert_eq!(pca_components(&x, 0.9, PcaMode::Correlation).unwrap(), 9);
    }

    #[test]
    fn zero_variance_is_an_error() {
        let x = FeatureMatrix::from_rows(vec![vec![1.0, 2.0]; 5]).unwrap();
        assert!(pca_components90(&x).is_err());
        assert!(pca_components(&x, 0.9, PcaMode::Correlation).is_err());
        let one = FeatureMatrix::from_rows(vec![vec![1.0, 2.0]]).unwrap();
        assert!(pca_components90(&one).is_err());
    }

    #[test]
    fn invariant_to_permutation_and_constant_columns() {
        let x = random(40, 6, 1);
        let base = pca_spectrum(&x, PcaMode::Covariance).unwrap();
        let perm = [3, 0, 5, 1, 4, 2];
        let rows = (0..40)
            .map(|i| {
                let mut r: Vec<f64> = perm.iter().map(|&j| x.get(i, j)).collect();
                r.push(2.5);
                r
            })
            .collect();
        let y = FeatureMatrix::from_rows(rows).unwrap();
        let other = pca_spectrum(&y, PcaMode::Covariance).unwrap();
        for (a, b) in base.iter().zip(&other) {
            assert!((a - b).abs() < 1e-10 * base[0]);
        }
        for f in [0.5, 0.8, 0.9, 0.99] {
            for mode in [PcaMode::Covariance, PcaMode::Correlation] {
                assert_eq!(
                    pca_components(&x, f, mode).unwrap(),
                    pca_components(&y, f, mode).unwrap()
                );
            }
        }
    }

    #[test]
    fn spectrum_sums_to_total_variance() {
        let x = random(30, 5, 2);
        let spec = pca_spectrum(&x, PcaMode::Covariance).unwrap();
        let total: f64 = (0..5)
            .map(|j| {
                let c = x.column(j);
                let m = c.iter().sum::<f64>() / 30.0;
                c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 29.0
            })
            .sum();
        assert!((spec.iter().sum::<f64>() - total).abs() < 1e-10);
        let corr = pca_spectrum(&x, PcaMode::Correlation).unwrap();
        assert!((corr.iter().sum::<f64>() - 5.0).abs() < 1e-10);
    }
}
