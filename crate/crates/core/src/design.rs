//! Covariate design partitioned into named groups.

use std::collections::HashSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Raw moments of one standardized column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnScaling {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
}

/// One named covariate group; columns are stored standardized.
#[derive(Debug, Clone)]
pub struct CovariateGroup {
    pub name: String,
    pub columns: Vec<String>,
    pub values: DMatrix<f64>,
    pub scaling: Vec<ColumnScaling>,
}

impl CovariateGroup {
    /// Maps standardized values back to the raw scale.
    pub fn to_raw(&self, standardized: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = standardized.clone();
        for (j, s) in self.scaling.iter().enumerate() {
            out.column_mut(j).apply(|v| *v = *v * s.sd + s.mean);
        }
        out
    }
}

/// Fixed effects `X` plus groups `Z_1, …, Z_M` of nonlinear covariates.
#[derive(Debug, Clone)]
pub struct GroupedDesign {
    x: DMatrix<f64>,
    x_names: Vec<String>,
    groups: Vec<CovariateGroup>,
}

/// Raw input for one group: name, column names, `n × q` values.
pub type GroupInput = (String, Vec<String>, DMatrix<f64>);

impl GroupedDesign {
    /// Validates and standardizes the groups. `x` is used as given and must
    /// already contain an intercept column if one is wanted.
    pub fn new(x: DMatrix<f64>, x_names: Vec<String>, groups: Vec<GroupInput>) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::Data("design needs at least one covariate group".into()));
        }
        let n = x.nrows();
        if x_names.len() != x.ncols() {
            return Err(Error::DimensionMismatch(
                "fixed-effect names do not match X columns".into(),
            ));
        }
        linalg::check_finite("fixed effects", x.as_slice())?;
        let mut seen_groups = HashSet::new();
        let mut seen_columns = HashSet::new();
        let mut out = Vec::with_capacity(groups.len());
        for (name, columns, values) in groups {
            if !seen_groups.insert(name.clone()) {
                return Err(Error::Data(format!("group '{name}' is declared twice")));
            }
            if values.ncols() == 0 || columns.is_empty() {
                return Err(Error::Data(format!("group '{name}' is empty")));
            }
            if columns.len() != values.ncols() {
                return Err(Error::DimensionMismatch(format!(
                    "group '{name}' names {} columns but has {}",
                    columns.len(),
                    values.ncols()
                )));
            }
            if values.nrows() != n {
                return Err(Error::DimensionMismatch(format!(
                    "group '{name}' has {} rows, expected {n}",
                    values.nrows()
                )));
            }
            for c in &columns {
                if !seen_columns.insert(c.clone()) {
                    return Err(Error::Data(format!(
                        "column '{c}' is assigned to more than one group"
                    )));
                }
            }
            linalg::check_finite(&format!("group '{name}'"), values.as_slice())?;
            let (standardized, scaling) = standardize_columns(&values, &columns)?;
            out.push(CovariateGroup {
                name,
                columns,
                values: standardized,
                scaling,
            });
        }
        Ok(Self {
            x,
            x_names,
            groups: out,
        })
    }

    /// Intercept-only design with columns named `<group>_<j>`.
    pub fn with_intercept(groups: Vec<(String, DMatrix<f64>)>) -> Result<Self> {
        let n = groups
            .first()
            .map(|(_, m)| m.nrows())
            .ok_or_else(|| Error::Data("design needs at least one covariate group".into()))?;
        let inputs = groups
            .into_iter()
            .map(|(name, m)| {
                let cols = (0..m.ncols()).map(|j| format!("{name}_{}", j + 1)).collect();
                (name, cols, m)
            })
            .collect();
        Self::new(DMatrix::from_element(n, 1, 1.0), vec!["intercept".into()], inputs)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn fixed_effects(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn fixed_effect_names(&self) -> &[String] {
        &self.x_names
    }

    pub fn groups(&self) -> &[CovariateGroup] {
        &self.groups
    }

    pub fn group_index(&self, name: &str) -> Option<usize> {
        self.groups.iter().position(|g| g.name == name)
    }

    pub fn group_names(&self) -> Vec<String> {
        self.groups.iter().map(|g| g.name.clone()).collect()
    }
}

fn standardize_columns(values: &DMatrix<f64>, names: &[String]) -> Result<(DMatrix<f64>, Vec<ColumnScaling>)> {
    let n = values.nrows();
    if n < 2 {
        return Err(Error::Data("need at least two observations".into()));
    }
    let mut out = values.clone();
    let mut scaling = Vec::with_capacity(values.ncols());
    for (j, name) in names.iter().enumerate() {
        let col = values.column(j);
        let mean = col.mean();
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let sd = var.sqrt();
        if !(sd > 0.0) {
            return Err(Error::Data(format!("column '{name}' has zero variance")));
        }
        out.column_mut(j).apply(|v| *v = (*v - mean) / sd);
        scaling.push(ColumnScaling {
            name: name.clone(),
            mean,
            sd,
        });
    }
    Ok((out, scaling))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_column_slice(v.len(), 1, v)
    }

    #[test]
    fn standardizes_and_retains_moments() {
        let d = GroupedDesign::with_intercept(vec![
            ("a".into(), col(&[1.0, 2.0, 3.0, 4.0])),
            ("b".into(), col(&[10.0, 0.0, 5.0, 1.0])),
        ])
        .unwrap();
        let g = &d.groups()[0];
        assert!(g.values.column(0).mean().abs() < 1e-15);
        assert_eq!(g.scaling[0].mean, 2.5);
        let back = g.to_raw(&g.values);
        assert!((back - col(&[1.0, 2.0, 3.0, 4.0])).abs().max() < 1e-14);
    }

    #[test]
    fn overlapping_columns_rejected() {
        let err = GroupedDesign::new(
            DMatrix::from_element(3, 1, 1.0),
            vec!["intercept".into()],
            vec![
                ("a".into(), vec!["z".into()], col(&[1.0, 2.0, 3.0])),
                ("b".into(), vec!["z".into()], col(&[1.0, 2.0, 3.0])),
            ],
        );
        assert!(matches!(err, Err(Error::Data(_))));
    }

    #[test]
    fn zero_variance_column_rejected() {
        assert!(GroupedDesign::with_intercept(vec![("a".into(), col(&[1.0, 1.0, 1.0]))]).is_err());
    }

    #[test]
    fn row_mismatch_rejected() {
        let err = GroupedDesign::with_intercept(vec![
            ("a".into(), col(&[1.0, 2.0, 3.0])),
            ("b".into(), col(&[1.0, 2.0])),
        ]);
        assert!(err.is_err());
    }
}
