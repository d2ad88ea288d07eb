//! Rank-based, covariate-adjusted relative-effect tests for factor effects
//! in randomized multi-group designs.
//!
//! The outcome and any number of covariates may be metric or ordinal; all
//! inference runs on rank transforms, so only the ordering of values matters.
//! The crate provides
//!
//! - relative-effect estimation with variance-minimizing covariate adjustment,
//! - chi-square and F approximate tests on the ANOVA-type statistic,
//! - an asymptotically exact resampling test (Efron or wild weights on the
//!   rank level), and
//! - data generators plus a Monte Carlo driver for type-I-error and power
//!   studies.
//!
//! ```
//! use nalgebra::DMatrix;
//! use nancova::{bootstrap_test, contrast_no_effect, Dataset, WeightScheme, WeightingMode};
//!
//! let data = Dataset::new(vec![
//!     ("placebo".into(), vec![
//!         vec![2.0, 5.0], vec![4.0, 6.0], vec![1.0, 2.0], vec![3.0, 4.0], vec![0.0, 1.0],
//!     ]),
//!     ("verum".into(), vec![
//!         vec![6.0, 4.0], vec![8.0, 7.0], vec![5.0, 3.0], vec![7.0, 8.0], vec![4.0, 2.0],
//!     ]),
//! ])?;
//! let report = bootstrap_test(
//!     &data,
//!     WeightingMode::SampleSizeWeighted,
//!     &contrast_no_effect(2),
//!     0.05,
//!     WeightScheme::Efron,
//!     999,
//!     Some(42),
//! )?;
//! println!("A_N = {:.3}, p = {:.3}", report.statistic, report.p_value);
//! # Ok::<(), nancova::NancovaError>(())
//! ```

mod dataset;
mod dist;
mod effects;
mod error;
mod linalg;
mod rankcore;
mod variance;

mod bootstrap;
mod inference;
pub mod rng;
pub mod simgen;

pub use dataset::{Dataset, Group, WeightingMode};
pub use dist::{chi_square_cdf, f_cdf};
pub use effects::{
    adjusted_effects, chat, fit_adjustment, fit_adjustment_with, relative_effects, AdjustmentFit,
    EffectEstimates,
};
pub use error::{NancovaError, Result};
pub use rankcore::{mid_ranks, normalized_ecdf, pseudo_ranks, rank_transforms, RankFrame};
pub use variance::{
    adjusted_sigma, contrast_no_effect, covariance_set, dof_estimates, projection_t, shat,
    sigma_block, CovarianceSet,
};

pub use bootstrap::{
    bootstrap_draw, bootstrap_statistics, bootstrap_test, draw_weights, BootstrapDraw,
    DrawWeights, WeightScheme,
};
pub use inference::{
    ats, chi2_test, f_test, weighted_chisq_null_sample, EffectsSummary, Method, TestReport,
};

/// Condition-number bound above which a covariate cross-product block is
/// treated as singular.
pub(crate) const CONDITION_BOUND: f64 = 1e12;

/// Variance traces at or below this value are treated as zero.
pub(crate) const TRACE_EPS: f64 = 1e-14;
