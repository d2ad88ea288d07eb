//! Relative effects, variance-minimizing adjustment coefficients and
//! covariate-adjusted effects.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{NancovaError, Result};
use crate::linalg::{centering_vector, coefficient_matrix, spd_solve};
use crate::rankcore::RankFrame;
use crate::CONDITION_BOUND;

/// Residual bound for the normal-equation solve of the adjustment coefficients.
const SOLVE_RESIDUAL_TOL: f64 = 1e-10;

/// Relative effects per group and component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimates {
    /// `qhat[i][r]` for group i, component r (0 = outcome).
    qhat: Vec<Vec<f64>>,
}

impl EffectEstimates {
    pub fn new(qhat: Vec<Vec<f64>>) -> Self {
        Self { qhat }
    }

    pub fn group_count(&self) -> usize {
        self.qhat.len()
    }

    pub fn covariate_count(&self) -> usize {
        self.qhat[0].len() - 1
    }

    pub fn get(&self, group: usize, component: usize) -> f64 {
        self.qhat[group][component]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.qhat
    }

    /// Outcome effects (q_1^(0), ..., q_a^(0)).
    pub fn outcome(&self) -> Vec<f64> {
        self.qhat.iter().map(|row| row[0]).collect()
    }

    /// Group-major, component-minor flattening.
    pub fn as_vector(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.qhat.len() * self.qhat[0].len(),
            self.qhat.iter().flatten().copied(),
        )
    }

    /// Largest covariate deviation from 1/2; a randomization-balance
    /// diagnostic (covariate effects should be close to 1/2 by design).
    pub fn max_covariate_imbalance(&self) -> Option<f64> {
        if self.covariate_count() == 0 {
            return None;
        }
        self.qhat
            .iter()
            .flat_map(|row| row[1..].iter().map(|q| (q - 0.5).abs()))
            .max_by(|a, b| a.partial_cmp(b).unwrap())
    }
}

/// Group means of the rank transforms.
pub fn relative_effects(rf: &RankFrame) -> EffectEstimates {
    let a = rf.group_count();
    let comps = rf.covariate_count() + 1;
    let mut qhat = vec![vec![0.0; comps]; a];
    for (i, row) in qhat.iter_mut().enumerate() {
        let ni = rf.sizes()[i] as f64;
        for (r, q) in row.iter_mut().enumerate() {
            *q = rf.group_column(i, r).iter().sum::<f64>() / ni;
        }
    }
    EffectEstimates::new(qhat)
}

/// Pooled within-group cross products: C^(rs) = (1/N) sum_ik (Y_ik^(r) - q_i^(r))(Y_ik^(s) - q_i^(s)).
pub fn chat(rf: &RankFrame, q: &EffectEstimates) -> DMatrix<f64> {
    let comps = rf.covariate_count() + 1;
    let n = rf.total_n() as f64;
    let mut c = DMatrix::zeros(comps, comps);
    for i in 0..rf.group_count() {
        for r in 0..comps {
            let col_r = rf.group_column(i, r);
            let q_r = q.get(i, r);
            for s in r..comps {
                let col_s = rf.group_column(i, s);
                let q_s = q.get(i, s);
                let sum: f64 = col_r
                    .iter()
                    .zip(col_s)
                    .map(|(yr, ys)| (yr - q_r) * (ys - q_s))
                    .sum();
                c[(r, s)] += sum;
            }
        }
    }
    for r in 0..comps {
        for s in r..comps {
            c[(r, s)] /= n;
            c[(s, r)] = c[(r, s)];
        }
    }
    c
}

/// Covariate-adjusted effects for an arbitrary coefficient vector:
/// w_i = q_i^(0) - sum_r gamma^(r) (q_i^(r) - 1/2).
pub fn adjusted_effects(q: &EffectEstimates, gamma: &[f64]) -> Vec<f64> {
    (0..q.group_count())
        .map(|i| {
            q.get(i, 0)
                - gamma
                    .iter()
                    .enumerate()
                    .map(|(r, g)| g * (q.get(i, r + 1) - 0.5))
                    .sum::<f64>()
        })
        .collect()
}

/// The fitted adjustment: coefficients, pooled cross products, the
/// coefficient matrix and the adjusted effects.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjustmentFit {
    /// Variance-minimizing coefficients (length d).
    pub gamma: Vec<f64>,
    /// (d+1) x (d+1) pooled within-group cross products.
    pub cmat: DMatrix<f64>,
    /// I_a (x) (1, -gamma'), a x a(d+1).
    pub gamma_matrix: DMatrix<f64>,
    /// Adjusted effects (length a).
    pub what: Vec<f64>,
}

/// Fit the variance-minimizing adjustment coefficients and adjusted effects.
///
/// With d = 0 the fit is trivial: empty coefficients and `what` equal to the
/// outcome effects. Otherwise the covariate block of the cross-product matrix
/// must be positive definite with condition number below `condition_bound`.
pub fn fit_adjustment_with(
    rf: &RankFrame,
    q: &EffectEstimates,
    condition_bound: f64,
) -> Result<AdjustmentFit> {
    let a = rf.group_count();
    let d = rf.covariate_count();
    let cmat = chat(rf, q);

    let gamma = if d == 0 {
        Vec::new()
    } else {
        let cov_block = cmat.view((1, 1), (d, d)).into_owned();
        let rhs: Vec<f64> = (1..=d).map(|r| cmat[(0, r)]).collect();
        let gamma = spd_solve(&cov_block, &rhs, condition_bound).map_err(|reason| {
            NancovaError::DegenerateCovariate(format!(
                "covariate cross-product block: {reason}"
            ))
        })?;
        let residual = (&cov_block * DVector::from_column_slice(&gamma)
            - DVector::from_column_slice(&rhs))
        .amax();
        if residual > SOLVE_RESIDUAL_TOL {
            return Err(NancovaError::DegenerateCovariate(format!(
                "coefficient solve residual {residual:.3e} exceeds {SOLVE_RESIDUAL_TOL:.1e}"
            )));
        }
        gamma
    };

    let gamma_matrix = coefficient_matrix(a, &gamma);
    let what_vec = &gamma_matrix * (q.as_vector() - centering_vector(a, d));
    let what: Vec<f64> = what_vec.iter().copied().collect();
    if cfg!(debug_assertions) {
        // the matrix route must agree with the componentwise definition
        for (w_m, w_c) in what.iter().zip(adjusted_effects(q, &gamma)) {
            debug_assert!((w_m - w_c).abs() <= 1e-12, "{w_m} vs {w_c}");
        }
    }

    Ok(AdjustmentFit {
        gamma,
        cmat,
        gamma_matrix,
        what,
    })
}

/// [`fit_adjustment_with`] using the default condition bound of 1e12.
pub fn fit_adjustment(rf: &RankFrame, q: &EffectEstimates) -> Result<AdjustmentFit> {
    fit_adjustment_with(rf, q, CONDITION_BOUND)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Dataset, WeightingMode};
    use crate::rankcore::rank_transforms;

    fn frame(groups: Vec<Vec<Vec<f64>>>) -> (RankFrame, EffectEstimates) {
        let ds = Dataset::new(
            groups
                .into_iter()
                .enumerate()
                .map(|(i, rows)| (format!("g{i}"), rows))
                .collect(),
        )
        .unwrap();
        let rf = rank_transforms(&ds, WeightingMode::SampleSizeWeighted).unwrap();
        let q = relative_effects(&rf);
        (rf, q)
    }

    #[test]
    fn identical_groups_have_effect_one_half() {
        let (_, q) = frame(vec![
            vec![vec![1.0], vec![2.0], vec![3.0]],
            vec![vec![3.0], vec![1.0], vec![2.0]],
        ]);
        assert!((q.get(0, 0) - 0.5).abs() < 1e-15);
        assert!((q.get(1, 0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn separated_groups_example() {
        let (_, q) = frame(vec![vec![vec![1.0], vec![2.0]], vec![vec![3.0], vec![4.0]]]);
        assert_eq!(q.outcome(), vec![0.25, 0.75]);
    }

    #[test]
    fn weighted_effects_average_to_one_half() {
        let (rf, q) = frame(vec![
            vec![vec![1.0, 4.0], vec![5.0, 4.0], vec![2.0, 1.0]],
            vec![vec![9.0, 2.0], vec![3.0, 8.0]],
        ]);
        let n: usize = rf.sizes().iter().sum();
        for r in 0..=rf.covariate_count() {
            let avg: f64 = (0..rf.group_count())
                .map(|i| rf.sizes()[i] as f64 / n as f64 * q.get(i, r))
                .sum();
            assert!((avg - 0.5).abs() < 1e-14);
        }
    }

    #[test]
    fn chat_is_symmetric_with_zero_rows_for_within_group_constants() {
        // covariate constant within each group; centered values vanish
        let (rf, q) = frame(vec![
            vec![vec![1.0, 7.0], vec![5.0, 7.0]],
            vec![vec![9.0, 3.0], vec![3.0, 3.0]],
        ]);
        let c = chat(&rf, &q);
        assert_eq!(c[(0, 1)], 0.0);
        assert_eq!(c[(1, 0)], 0.0);
        assert_eq!(c[(1, 1)], 0.0);
        assert!(c[(0, 0)] > 0.0);
    }

    #[test]
    fn covariate_equal_to_outcome_gives_unit_gamma() {
        let rows = |vals: &[f64]| vals.iter().map(|&v| vec![v, v]).collect::<Vec<_>>();
        let (rf, q) = frame(vec![rows(&[1.0, 4.0, 2.0]), rows(&[3.0, 6.0, 5.0])]);
        let fit = fit_adjustment(&rf, &q).unwrap();
        assert!((fit.gamma[0] - 1.0).abs() < 1e-12);
        for i in 0..2 {
            let expected = q.get(i, 0) - (q.get(i, 1) - 0.5);
            assert!((fit.what[i] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn scalar_gamma_matches_normal_equation() {
        let (rf, q) = frame(vec![
            vec![vec![1.0, 2.0], vec![4.0, 1.0], vec![2.0, 5.0]],
            vec![vec![6.0, 4.0], vec![3.0, 3.0], vec![5.0, 6.0]],
        ]);
        let fit = fit_adjustment(&rf, &q).unwrap();
        let c = chat(&rf, &q);
        assert!((fit.gamma[0] - c[(0, 1)] / c[(1, 1)]).abs() < 1e-10);
    }

    #[test]
    fn worked_two_group_adjustment() {
        let q = EffectEstimates::new(vec![vec![0.38, 0.52], vec![0.62, 0.48]]);
        let w = adjusted_effects(&q, &[0.74]);
        assert!((w[0] - 0.3652).abs() < 1e-12);
        assert!((w[1] - 0.6348).abs() < 1e-12);
        assert_eq!(format!("{:.2}", w[0]), "0.37");
        assert_eq!(format!("{:.2}", w[1]), "0.63");
    }

    #[test]
    fn zero_gamma_returns_outcome_effects_exactly() {
        let q = EffectEstimates::new(vec![vec![0.31, 0.55], vec![0.69, 0.45]]);
        assert_eq!(adjusted_effects(&q, &[0.0]), q.outcome());
    }

    #[test]
    fn balanced_covariates_leave_effects_unchanged() {
        let q = EffectEstimates::new(vec![vec![0.3, 0.5, 0.5], vec![0.7, 0.5, 0.5]]);
        assert_eq!(adjusted_effects(&q, &[4.2, -1.7]), q.outcome());
    }

    #[test]
    fn constant_covariate_is_degenerate() {
        let (rf, q) = frame(vec![
            vec![vec![1.0, 2.0], vec![4.0, 2.0]],
            vec![vec![6.0, 2.0], vec![3.0, 2.0]],
        ]);
        match fit_adjustment(&rf, &q) {
            Err(NancovaError::DegenerateCovariate(_)) => {}
            other => panic!("expected DegenerateCovariate, got {other:?}"),
        }
    }

    #[test]
    fn d_zero_fit_short_circuits() {
        let (rf, q) = frame(vec![vec![vec![1.0], vec![4.0]], vec![vec![6.0], vec![3.0]]]);
        let fit = fit_adjustment(&rf, &q).unwrap();
        assert!(fit.gamma.is_empty());
        assert_eq!(fit.what, q.outcome());
        assert_eq!(fit.gamma_matrix, DMatrix::identity(2, 2));
    }
}
