//! Main-effects linear model grown by forward selection on AIC.
//!
//! Candidates are kept orthogonalized against the already selected columns
//! (modified Gram-Schmidt), so the residual sum of squares after adding any
//! candidate is available in `O(n)` without refitting.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::eval::FeatureMatrix;

/// Squared residual norm, relative to the centered column norm, below which
/// a candidate counts as collinear with the selected set.
const COLLINEAR_TOL: f64 = 1e-14;
/// RSS floor relative to the total sum of squares; keeps AIC finite at exact fits.
const RSS_FLOOR: f64 = 1e-20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LinearModel {
    /// Feature indices in selection order.
    pub selected: Vec<usize>,
    pub intercept: f64,
    /// One coefficient per entry of `selected`.
    pub coefficients: Vec<f64>,
    pub aic: f64,
    /// AIC of the intercept-only model followed by one value per selection step.
    pub aic_path: Vec<f64>,
    pub n_features: usize,
}

/// `n ln(RSS / n) + 2 (p + 1)` with `p` selected features.
pub fn aic(n: usize, rss: f64, p: usize) -> f64 {
    n as f64 * (rss / n as f64).ln() + 2.0 * (p as f64 + 1.0)
}

pub fn fit_linear_aic(x: &FeatureMatrix, y: &[f64], max_steps: usize) -> Result<LinearModel> {
    check_len(x.rows(), y.len())?;
    let n = y.len();
    if n < 3 {
        return Err(Error::input(
            "linear model needs at least three observations",
        ));
    }
    if !y.iter().all(|v| v.is_finite()) || !x.as_slice().iter().all(|v| v.is_finite()) {
        return Err(Error::input("linear model data must be finite"));
    }
    let p = x.cols();
    let y_mean = y.iter().sum::<f64>() / n as f64;
    let mut resid: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
    let tss = dot(&resid, &resid);
    let floor = if tss > 0.0 {
        tss * RSS_FLOOR
    } else {
        f64::MIN_POSITIVE
    };
    let score = |rss: f64, k: usize| aic(n, rss.max(floor), k);

    // centered candidate columns, later orthogonalized in place
    let mut cols: Vec<Vec<f64>> = (0..p)
        .map(|j| {
            let c = x.column(j);
            let m = c.iter().sum::<f64>() / n as f64;
            c.into_iter().map(|v| v - m).collect()
        })
        .collect();
    let base_norm: Vec<f64> = cols.iter().map(|c| dot(c, c)).collect();
    let mut active: Vec<bool> = base_norm.iter().map(|&v| v > 0.0).collect();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut selected = Vec::new();

    let mut rss = tss;
    let mut current = score(rss, 0);
    let mut aic_path = vec![current];
    let cap = max_steps.min(n - 2);

    while selected.len() < cap {
        let mut best: Option<(usize, f64)> = None;
        for j in 0..p {
            if !active[j] {
                continue;
            }
            let nr = dot(&cols[j], &cols[j]);
            if nr <= COLLINEAR_TOL * base_norm[j] {
                active[j] = false;
                continue;
            }
            let proj = dot(&cols[j], &resid);
            let gain = proj * proj / nr;
            if best.is_none_or(|(_, g)| gain > g) {
                best = Some((j, gain));
            }
        }
        let Some((j, _)) = best else { break };

        // re-orthogonalize the winner before it joins the basis
        let mut q = cols[j].clone();
        for b in &basis {
            let c = dot(b, &q);
            axpy(&mut q, -c, b);
        }
        let qn = dot(&q, &q);
        if qn <= COLLINEAR_TOL * base_norm[j] {
            active[j] = false;
            continue;
        }
        let scale = qn.sqrt().recip();
        q.iter_mut().for_each(|v| *v *= scale);

        let mut next_resid = resid.clone();
        let c = dot(&q, &next_resid);
        axpy(&mut next_resid, -c, &q);
        let next_rss = dot(&next_resid, &next_resid);
        let next = score(next_rss, selected.len() + 1);
        if next >= current {
            break;
        }

        resid = next_resid;
        rss = next_rss;
        current = next;
        aic_path.push(current);
        active[j] = false;
        selected.push(j);
        for (k, col) in cols.iter_mut().enumerate() {
            if active[k] {
                let c = dot(&q, col);
                axpy(col, -c, &q);
            }
        }
        basis.push(q);
    }
    let _ = rss;

    let (intercept, coefficients) = least_squares(x, y, &selected)?;
    Ok(LinearModel {
        selected,
        intercept,
        coefficients,
        aic: current,
        aic_path,
        n_features: p,
    })
}

/// Ordinary least squares of `y` on an intercept plus the `selected` columns.
pub fn least_squares(x: &FeatureMatrix, y: &[f64], selected: &[usize]) -> Result<(f64, Vec<f64>)> {
    let n = y.len();
    let a = DMatrix::from_fn(n, selected.len() + 1, |i, j| {
        if j == 0 {
            1.0
        } else {
            x.get(i, selected[j - 1])
        }
    });
    let b = DVector::from_column_slice(y);
    let svd = a.svd(true, true);
    let beta = svd
        .solve(&b, 1e-12 * svd.singular_values.max())
        .map_err(|e| Error::input(format!("least squares failed: {e}")))?;
    Ok((beta[0], beta.iter().skip(1).copied().collect()))
}

impl LinearModel {
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        check_len(self.n_features, x.len())?;
        Ok(self.intercept
            + self
                .selected
                .iter()
                .zip(&self.coefficients)
                .map(|(&j, c)| c * x[j])
                .sum::<f64>())
    }

    pub fn predict_many(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        x.iter_rows().map(|r| self.predict(r)).collect()
    }

    /// Number of selected features (intercept excluded).
    pub fn n_coefficients(&self) -> usize {
        self.selected.len()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}
