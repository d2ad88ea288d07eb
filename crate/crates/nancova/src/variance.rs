//! Covariance estimation, contrast/projection machinery and degrees of
//! freedom for the ANOVA-type statistic.

use nalgebra::DMatrix;

use crate::effects::{AdjustmentFit, EffectEstimates};
use crate::error::{NancovaError, Result};
use crate::rankcore::RankFrame;
use crate::TRACE_EPS;

/// Singular values below this fraction of the largest one are treated as zero
/// when forming the projection.
const PSEUDO_INVERSE_RTOL: f64 = 1e-12;

/// Covariance block of group i, scaled by N / (n_i (n_i - 1)).
pub fn sigma_block(rf: &RankFrame, q: &EffectEstimates, i: usize) -> Result<DMatrix<f64>> {
    let ni = rf.sizes()[i];
    if ni < 2 {
        return Err(NancovaError::InvalidInput(format!(
            "group {i} has {ni} observation(s); variance needs at least 2"
        )));
    }
    let comps = rf.covariate_count() + 1;
    let scale = rf.total_n() as f64 / (ni as f64 * (ni as f64 - 1.0));
    let mut block = DMatrix::zeros(comps, comps);
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
            block[(r, s)] = scale * sum;
            block[(s, r)] = block[(r, s)];
        }
    }
    Ok(block)
}

/// Block-diagonal covariance estimate with one block per group.
pub fn shat(rf: &RankFrame, q: &EffectEstimates) -> Result<DMatrix<f64>> {
    let comps = rf.covariate_count() + 1;
    let a = rf.group_count();
    let mut s = DMatrix::zeros(a * comps, a * comps);
    for i in 0..a {
        let block = sigma_block(rf, q, i)?;
        s.view_mut((i * comps, i * comps), (comps, comps))
            .copy_from(&block);
    }
    Ok(s)
}

/// Contrast matrix of the no-factor-effect hypothesis: I_a - J_a / a.
pub fn contrast_no_effect(a: usize) -> DMatrix<f64> {
    DMatrix::from_fn(a, a, |r, c| {
        if r == c {
            1.0 - 1.0 / a as f64
        } else {
            -1.0 / a as f64
        }
    })
}

/// Idempotent symmetric projection onto the row space of a contrast matrix:
/// T = K' (K K')^- K, with the generalized inverse realized as the
/// Moore-Penrose pseudo-inverse.
pub fn projection_t(k: &DMatrix<f64>) -> DMatrix<f64> {
    let kkt = k * k.transpose();
    let svd = kkt.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return DMatrix::zeros(k.ncols(), k.ncols());
    }
    let pinv = svd
        .pseudo_inverse(PSEUDO_INVERSE_RTOL * smax)
        .expect("svd requested with both sets of vectors");
    k.transpose() * pinv * k
}

/// Adjusted covariance: Gamma S Gamma'.
pub fn adjusted_sigma(shat: &DMatrix<f64>, gamma_matrix: &DMatrix<f64>) -> DMatrix<f64> {
    gamma_matrix * shat * gamma_matrix.transpose()
}

/// Box-type degrees of freedom.
///
/// `f_hat = tr(T Sigma)^2 / tr(T Sigma T Sigma)` drives the chi-square
/// reference, `f0_hat = tr(D_T Sigma)^2 / tr(D_T^2 Sigma^2 Lambda)` the
/// second F degrees of freedom, with D_T the diagonal part of T and
/// Lambda = diag(1/(n_i - 1)).
pub fn dof_estimates(
    t: &DMatrix<f64>,
    sigma_hat: &DMatrix<f64>,
    sizes: &[usize],
) -> Result<(f64, f64)> {
    let ts = t * sigma_hat;
    let tr_ts = ts.trace();
    let tr_tsts = (&ts * &ts).trace();
    if tr_ts <= TRACE_EPS || tr_tsts <= TRACE_EPS {
        return Err(NancovaError::DegenerateVariance(format!(
            "tr(T Sigma) = {tr_ts:.3e}, tr(T Sigma T Sigma) = {tr_tsts:.3e}; \
             no usable variance (all observations tied?)"
        )));
    }
    let f_hat = tr_ts * tr_ts / tr_tsts;

    let a = sizes.len();
    let d_t = DMatrix::from_fn(a, a, |r, c| if r == c { t[(r, r)] } else { 0.0 });
    let tr_dts = (&d_t * sigma_hat).trace();
    let sigma_sq = sigma_hat * sigma_hat;
    let mut denom = 0.0;
    for i in 0..a {
        denom += d_t[(i, i)] * d_t[(i, i)] * sigma_sq[(i, i)] / (sizes[i] as f64 - 1.0);
    }
    if denom <= TRACE_EPS {
        return Err(NancovaError::DegenerateVariance(format!(
            "tr(D_T^2 Sigma^2 Lambda) = {denom:.3e}; no usable variance"
        )));
    }
    let f0_hat = tr_dts * tr_dts / denom;
    Ok((f_hat, f0_hat))
}

/// All covariance-level quantities of one analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceSet {
    /// Block-diagonal a(d+1) x a(d+1) covariance of the rank transforms.
    pub shat: DMatrix<f64>,
    /// Adjusted a x a covariance Gamma S Gamma'.
    pub sigma_hat: DMatrix<f64>,
    /// Projection of the tested contrast.
    pub t: DMatrix<f64>,
    pub f_hat: f64,
    pub f0_hat: f64,
    /// Smallest eigenvalue of `shat`; a minimal-variance diagnostic.
    pub shat_min_eigenvalue: f64,
}

/// Assemble the covariance set for a fitted analysis and contrast matrix.
pub fn covariance_set(
    rf: &RankFrame,
    q: &EffectEstimates,
    fit: &AdjustmentFit,
    k: &DMatrix<f64>,
) -> Result<CovarianceSet> {
    let shat = shat(rf, q)?;
    let sigma_hat = adjusted_sigma(&shat, &fit.gamma_matrix);
    let t = projection_t(k);
    let (f_hat, f0_hat) = dof_estimates(&t, &sigma_hat, rf.sizes())?;
    let shat_min_eigenvalue = shat
        .clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    Ok(CovarianceSet {
        shat,
        sigma_hat,
        t,
        f_hat,
        f0_hat,
        shat_min_eigenvalue,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Dataset, WeightingMode};
    use crate::effects::{chat, fit_adjustment, relative_effects};
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
    fn sigma_block_matches_two_pass_oracle() {
        let (rf, q) = frame(vec![
            vec![vec![1.0, 2.0], vec![4.0, 1.0], vec![2.0, 5.0]],
            vec![vec![6.0, 4.0], vec![3.0, 3.0]],
        ]);
        for i in 0..2 {
            let block = sigma_block(&rf, &q, i).unwrap();
            let ni = rf.sizes()[i] as f64;
            let scale = rf.total_n() as f64 / (ni * (ni - 1.0));
            for r in 0..2 {
                for s in 0..2 {
                    // independent two-pass covariance
                    let yr = rf.group_column(i, r);
                    let ys = rf.group_column(i, s);
                    let mr = yr.iter().sum::<f64>() / ni;
                    let ms = ys.iter().sum::<f64>() / ni;
                    let oracle: f64 = yr
                        .iter()
                        .zip(ys)
                        .map(|(a, b)| (a - mr) * (b - ms))
                        .sum::<f64>()
                        * scale;
                    assert!((block[(r, s)] - oracle).abs() < 1e-12);
                    assert_eq!(block[(r, s)], block[(s, r)]);
                }
            }
        }
    }

    #[test]
    fn sigma_block_zero_for_within_group_constant() {
        let (rf, q) = frame(vec![
            vec![vec![1.0, 9.0], vec![4.0, 9.0]],
            vec![vec![6.0, 4.0], vec![3.0, 3.0]],
        ]);
        let block = sigma_block(&rf, &q, 0).unwrap();
        assert_eq!(block[(1, 1)], 0.0);
        assert_eq!(block[(0, 1)], 0.0);
    }

    #[test]
    fn chat_equals_weighted_sigma_blocks() {
        // C^(rs) = sum_i (n_i/N)^2 (n_i-1)/n_i * sigma_i^(rs)
        let (rf, q) = frame(vec![
            vec![vec![1.0, 2.0], vec![4.0, 1.0], vec![2.0, 5.0]],
            vec![vec![6.0, 4.0], vec![3.0, 3.0], vec![5.0, 1.0], vec![2.0, 2.0]],
        ]);
        let c = chat(&rf, &q);
        let n = rf.total_n() as f64;
        let mut rebuilt = DMatrix::zeros(2, 2);
        for i in 0..rf.group_count() {
            let ni = rf.sizes()[i] as f64;
            rebuilt += sigma_block(&rf, &q, i).unwrap() * (ni / n).powi(2) * ((ni - 1.0) / ni);
        }
        assert!((c - rebuilt).amax() < 1e-12);
    }

    #[test]
    fn contrast_no_effect_examples() {
        let k2 = contrast_no_effect(2);
        assert_eq!(k2, DMatrix::from_row_slice(2, 2, &[0.5, -0.5, -0.5, 0.5]));
        for a in 2..6 {
            let k = contrast_no_effect(a);
            let ones = nalgebra::DVector::from_element(a, 1.0);
            assert!((&k * &ones).amax() < 1e-15);
            assert!((&k * &k - &k).amax() < 1e-14);
        }
    }

    #[test]
    fn projection_of_centering_contrast_is_itself() {
        let k = contrast_no_effect(3);
        let t = projection_t(&k);
        assert!((&t - &k).amax() < 1e-12);
    }

    #[test]
    fn projection_is_scale_invariant() {
        let k = DMatrix::from_row_slice(2, 3, &[1.0, -1.0, 0.0, 1.0, 0.0, -1.0]);
        let t1 = projection_t(&k);
        let t2 = projection_t(&(2.0 * &k));
        assert!((&t1 - &t2).amax() < 1e-12);
    }

    #[test]
    fn pairwise_contrasts_project_to_centering_matrix() {
        let k = DMatrix::from_row_slice(2, 3, &[1.0, -1.0, 0.0, 1.0, 0.0, -1.0]);
        let t = projection_t(&k);
        assert!((&t - contrast_no_effect(3)).amax() < 1e-12);
        // idempotent and symmetric
        assert!((&t * &t - &t).amax() < 1e-12);
        assert!((&t - t.transpose()).amax() < 1e-15);
    }

    #[test]
    fn adjusted_sigma_with_identity_gamma_is_outcome_diagonal() {
        let (rf, q) = frame(vec![
            vec![vec![1.0], vec![4.0], vec![2.0]],
            vec![vec![6.0], vec![3.0]],
        ]);
        let fit = fit_adjustment(&rf, &q).unwrap();
        let s = shat(&rf, &q).unwrap();
        let sigma = adjusted_sigma(&s, &fit.gamma_matrix);
        for i in 0..2 {
            assert_eq!(sigma[(i, i)], sigma_block(&rf, &q, i).unwrap()[(0, 0)]);
        }
        assert_eq!(sigma[(0, 1)], 0.0);
    }

    #[test]
    fn adjusted_sigma_matches_loop_oracle() {
        let (rf, q) = frame(vec![
            vec![vec![1.0, 2.0], vec![4.0, 1.0], vec![2.0, 5.0]],
            vec![vec![6.0, 4.0], vec![3.0, 3.0], vec![5.0, 1.0]],
        ]);
        let fit = fit_adjustment(&rf, &q).unwrap();
        let s = shat(&rf, &q).unwrap();
        let sigma = adjusted_sigma(&s, &fit.gamma_matrix);
        let g = &fit.gamma_matrix;
        let (a, m) = (g.nrows(), g.ncols());
        for i in 0..a {
            for j in 0..a {
                let mut acc = 0.0;
                for p in 0..m {
                    for r in 0..m {
                        acc += g[(i, p)] * s[(p, r)] * g[(j, r)];
                    }
                }
                assert!((sigma[(i, j)] - acc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dof_for_identity_sigma_is_group_count_minus_one() {
        for a in 2..6 {
            let t = contrast_no_effect(a);
            let sigma = DMatrix::identity(a, a);
            let (f, _) = dof_estimates(&t, &sigma, &vec![10; a]).unwrap();
            assert!((f - (a as f64 - 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn dof_is_scale_invariant() {
        let t = contrast_no_effect(3);
        let sigma = DMatrix::identity(3, 3);
        let (f1, _) = dof_estimates(&t, &sigma, &[7, 7, 7]).unwrap();
        let (f2, _) = dof_estimates(&t, &(42.0 * &sigma), &[7, 7, 7]).unwrap();
        assert!((f1 - f2).abs() < 1e-12);
    }

    #[test]
    fn f0_balanced_two_groups() {
        let n = 7;
        let t = contrast_no_effect(2);
        let sigma = DMatrix::identity(2, 2);
        let (_, f0) = dof_estimates(&t, &sigma, &[n, n]).unwrap();
        assert!((f0 - 2.0 * (n as f64 - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn all_tied_data_is_degenerate() {
        let (rf, q) = frame(vec![
            vec![vec![3.0], vec![3.0], vec![3.0]],
            vec![vec![3.0], vec![3.0]],
        ]);
        let fit = fit_adjustment(&rf, &q).unwrap();
        let err = covariance_set(&rf, &q, &fit, &contrast_no_effect(2)).unwrap_err();
        assert!(matches!(err, NancovaError::DegenerateVariance(_)));
    }

    #[test]
    fn trace_identities_for_idempotent_projection() {
        let (rf, q) = frame(vec![
            vec![vec![1.0, 2.0], vec![4.0, 1.0], vec![2.0, 5.0]],
            vec![vec![6.0, 4.0], vec![3.0, 3.0], vec![5.0, 1.0]],
        ]);
        let fit = fit_adjustment(&rf, &q).unwrap();
        let cov = covariance_set(&rf, &q, &fit, &contrast_no_effect(2)).unwrap();
        let ts = &cov.t * &cov.sigma_hat;
        let tst = &cov.t * &cov.sigma_hat * &cov.t;
        assert!((ts.trace() - tst.trace()).abs() < 1e-10);
        assert!(((&ts * &ts).trace() - (&tst * &tst).trace()).abs() < 1e-10);
    }

    #[test]
    fn shat_blocks_are_positive_semidefinite() {
        let (rf, q) = frame(vec![
            vec![vec![1.0, 2.0], vec![4.0, 1.0], vec![2.0, 5.0], vec![7.0, 3.0]],
            vec![vec![6.0, 4.0], vec![3.0, 3.0], vec![5.0, 1.0]],
        ]);
        for i in 0..2 {
            let eig = sigma_block(&rf, &q, i).unwrap().symmetric_eigen();
            assert!(eig.eigenvalues.iter().all(|&l| l >= -1e-12));
        }
    }
}
