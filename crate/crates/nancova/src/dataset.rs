//! Grouped observations and weighting modes.

use serde::{Deserialize, Serialize};

use crate::error::{NancovaError, Result};

/// How the average distribution pools the per-group distributions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightingMode {
    /// Group weights n_i / N (mid ranks).
    #[default]
    SampleSizeWeighted,
    /// Group weights 1 / a (pseudo ranks).
    Unweighted,
}

impl WeightingMode {
    /// Per-group weights; they sum to one.
    pub fn weights(self, sizes: &[usize]) -> Vec<f64> {
        match self {
            WeightingMode::SampleSizeWeighted => {
                let n: usize = sizes.iter().sum();
                sizes.iter().map(|&ni| ni as f64 / n as f64).collect()
            }
            WeightingMode::Unweighted => {
                let a = sizes.len() as f64;
                sizes.iter().map(|_| 1.0 / a).collect()
            }
        }
    }
}

/// One treatment group: a label and its observation rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    label: String,
    /// Each row holds d+1 values: component 0 is the outcome, 1..=d are covariates.
    rows: Vec<Vec<f64>>,
}

impl Group {
    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// A validated multi-group dataset with a common outcome and d covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    groups: Vec<Group>,
    covariates: usize,
}

impl Dataset {
    /// Build a dataset from `(label, rows)` pairs.
    ///
    /// Requires at least two groups, at least two rows per group, a common
    /// row width of d+1 >= 1 and only finite values.
    pub fn new(groups: Vec<(String, Vec<Vec<f64>>)>) -> Result<Self> {
        if groups.len() < 2 {
            return Err(NancovaError::InvalidInput(format!(
                "need at least 2 groups, got {}",
                groups.len()
            )));
        }
        let width = groups
            .first()
            .and_then(|(_, rows)| rows.first())
            .map(Vec::len)
            .unwrap_or(0);
        if width == 0 {
            return Err(NancovaError::InvalidInput(
                "rows must hold at least the outcome component".into(),
            ));
        }
        for (label, rows) in &groups {
            if rows.len() < 2 {
                return Err(NancovaError::InvalidInput(format!(
                    "group '{label}' has {} observation(s); need at least 2",
                    rows.len()
                )));
            }
            for row in rows {
                if row.len() != width {
                    return Err(NancovaError::InvalidInput(format!(
                        "group '{label}' has a row of width {}, expected {width}",
                        row.len()
                    )));
                }
                if row.iter().any(|v| !v.is_finite()) {
                    return Err(NancovaError::InvalidInput(format!(
                        "group '{label}' contains a non-finite value"
                    )));
                }
            }
        }
        Ok(Self {
            groups: groups
                .into_iter()
                .map(|(label, rows)| Group { label, rows })
                .collect(),
            covariates: width - 1,
        })
    }

    /// Number of groups a.
    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    /// Number of covariates d (0 means unadjusted analysis).
    pub fn covariate_count(&self) -> usize {
        self.covariates
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    pub fn labels(&self) -> Vec<String> {
        self.groups.iter().map(|g| g.label.clone()).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.groups.iter().map(Group::len).collect()
    }

    /// Total sample size N.
    pub fn total_n(&self) -> usize {
        self.groups.iter().map(Group::len).sum()
    }

    /// Component r over all rows, group-major order.
    pub fn pooled_component(&self, r: usize) -> Vec<f64> {
        self.groups
            .iter()
            .flat_map(|g| g.rows.iter().map(move |row| row[r]))
            .collect()
    }

    /// The same dataset with all covariate columns removed (d = 0).
    pub fn drop_covariates(&self) -> Dataset {
        Dataset {
            groups: self
                .groups
                .iter()
                .map(|g| Group {
                    label: g.label.clone(),
                    rows: g.rows.iter().map(|row| vec![row[0]]).collect(),
                })
                .collect(),
            covariates: 0,
        }
    }

    /// Apply a value transform to one component; used to check that analyses
    /// depend on the data only through its ordering.
    pub fn map_component(&self, r: usize, f: impl Fn(f64) -> f64) -> Result<Dataset> {
        Dataset::new(
            self.groups
                .iter()
                .map(|g| {
                    (
                        g.label.clone(),
                        g.rows
                            .iter()
                            .map(|row| {
                                let mut row = row.clone();
                                row[r] = f(row[r]);
                                row
                            })
                            .collect(),
                    )
                })
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_groups() -> Vec<(String, Vec<Vec<f64>>)> {
        vec![
            ("a".into(), vec![vec![1.0, 2.0], vec![2.0, 1.0]]),
            ("b".into(), vec![vec![3.0, 0.0], vec![4.0, 5.0]]),
        ]
    }

    #[test]
    fn builds_and_exposes_shape() {
        let d = Dataset::new(two_groups()).unwrap();
        assert_eq!(d.group_count(), 2);
        assert_eq!(d.covariate_count(), 1);
        assert_eq!(d.total_n(), 4);
        assert_eq!(d.sizes(), vec![2, 2]);
        assert_eq!(d.pooled_component(0), vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn rejects_single_group_and_singletons() {
        assert!(Dataset::new(vec![("a".into(), vec![vec![1.0], vec![2.0]])]).is_err());
        let mut g = two_groups();
        g[1].1.truncate(1);
        assert!(Dataset::new(g).is_err());
    }

    #[test]
    fn rejects_ragged_rows_and_nan() {
        let mut g = two_groups();
        g[0].1[0] = vec![1.0];
        assert!(Dataset::new(g).is_err());
        let mut g = two_groups();
        g[0].1[0][1] = f64::NAN;
        assert!(Dataset::new(g).is_err());
    }

    #[test]
    fn weights_sum_to_one() {
        let sizes = [3usize, 5, 2];
        for mode in [WeightingMode::SampleSizeWeighted, WeightingMode::Unweighted] {
            let w = mode.weights(&sizes);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        }
        assert_eq!(
            WeightingMode::SampleSizeWeighted.weights(&sizes),
            vec![0.3, 0.5, 0.2]
        );
    }

    #[test]
    fn drop_covariates_keeps_outcome() {
        let d = Dataset::new(two_groups()).unwrap().drop_covariates();
        assert_eq!(d.covariate_count(), 0);
        assert_eq!(d.pooled_component(0), vec![1.0, 2.0, 3.0, 4.0]);
    }
}
