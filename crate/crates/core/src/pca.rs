//! Principal components of a covariate group.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, SymEigen};

/// Components with eigenvalue below this fraction of the largest are dropped.
const RANK_TOLERANCE: f64 = 1e-10;

/// PCA of the sample correlation matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    /// `q × k`, columns are unit loading vectors.
    pub loadings: DMatrix<f64>,
    /// `n × k` scores of the standardized data.
    pub scores: DMatrix<f64>,
    /// Eigenvalue of each kept component divided by `q`.
    pub variance_explained: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl Pca {
    pub fn components(&self) -> usize {
        self.loadings.ncols()
    }

    /// Maps PC scores back to the input scale.
    pub fn to_input(&self, scores: &[f64]) -> Result<Vec<f64>> {
        if scores.len() != self.components() {
            return Err(Error::DimensionMismatch(format!(
                "expected {} scores, got {}",
                self.components(),
                scores.len()
            )));
        }
        let z = &self.loadings * DVector::from_column_slice(scores);
        Ok(z.iter()
            .enumerate()
            .map(|(j, v)| self.means[j] + self.sds[j] * v)
            .collect())
    }
}

/// Components ordered by decreasing eigenvalue; each loading vector's
/// largest-magnitude entry is positive.
pub fn pca(x: &DMatrix<f64>) -> Result<Pca> {
    let (n, q) = x.shape();
    if q == 0 {
        return Err(Error::InvalidParameter("PCA needs at least one column".into()));
    }
    if n <= q {
        return Err(Error::InvalidParameter(format!(
            "PCA needs more rows than columns (got {n} x {q})"
        )));
    }
    linalg::check_finite("PCA input", x.as_slice())?;
    let mut z = x.clone();
    let mut means = Vec::with_capacity(q);
    let mut sds = Vec::with_capacity(q);
    for j in 0..q {
        let mean = x.column(j).mean();
        let sd = (x.column(j).iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        if !(sd > 0.0) {
            return Err(Error::Data(format!("PCA column {j} has zero variance")));
        }
        z.column_mut(j).apply(|v| *v = (*v - mean) / sd);
        means.push(mean);
        sds.push(sd);
    }
    let mut corr = z.tr_mul(&z) / (n - 1) as f64;
    linalg::symmetrize(&mut corr);
    let eig = SymEigen::new(&corr);
    let mut order: Vec<usize> = (0..q).collect();
    order.sort_by(|&a, &b| eig.values[b].total_cmp(&eig.values[a]));
    let top = eig.values[order[0]];
    let kept: Vec<usize> = order
        .into_iter()
        .filter(|&k| eig.values[k] > RANK_TOLERANCE * top)
        .collect();
    if kept.len() < q {
        log::warn!(
            "input is rank deficient; dropped {} zero-variance components",
            q - kept.len()
        );
    }
    let mut loadings = DMatrix::zeros(q, kept.len());
    for (c, &k) in kept.iter().enumerate() {
        let mut v = eig.vectors.column(k).clone_owned();
        let mut lead = 0;
        for i in 1..q {
            if v[i].abs() > v[lead].abs() {
                lead = i;
            }
        }
        if v[lead] < 0.0 {
            v.neg_mut();
        }
        loadings.set_column(c, &v);
    }
    let scores = &z * &loadings;
    let eigenvalues: Vec<f64> = kept.iter().map(|&k| eig.values[k]).collect();
    Ok(Pca {
        loadings,
        scores,
        variance_explained: eigenvalues.iter().map(|l| l / q as f64).collect(),
        eigenvalues,
        means,
        sds,
    })
}
