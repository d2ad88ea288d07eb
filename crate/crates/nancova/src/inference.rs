//! The ANOVA-type statistic, the chi-square and F approximate tests, and the
//! weighted-chi-square sampler for the limiting null law.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, WeightingMode};
use crate::dist::{chi_square_cdf, f_cdf};
use crate::effects::{fit_adjustment, relative_effects, AdjustmentFit, EffectEstimates};
use crate::error::{NancovaError, Result};
use crate::rankcore::{rank_transforms, RankFrame};
use crate::variance::{covariance_set, CovarianceSet};
use crate::TRACE_EPS;

/// Test methods. String forms: `fa1`, `ca`, `fa2`, `eb`, `wild`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// F approximation without covariate adjustment.
    #[serde(rename = "fa1")]
    FUnadjusted,
    /// Chi-square approximation with covariate adjustment.
    #[serde(rename = "ca")]
    ChiSqNancova,
    /// F approximation with covariate adjustment.
    #[serde(rename = "fa2")]
    FNancova,
    /// Efron (multinomial-weight) bootstrap with covariate adjustment.
    #[serde(rename = "eb")]
    EfronBootstrap,
    /// Wild (Rademacher-weight) bootstrap with covariate adjustment.
    #[serde(rename = "wild")]
    WildBootstrap,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::FUnadjusted => "fa1",
            Method::ChiSqNancova => "ca",
            Method::FNancova => "fa2",
            Method::EfronBootstrap => "eb",
            Method::WildBootstrap => "wild",
        }
    }

    pub fn describe(self) -> &'static str {
        match self {
            Method::FUnadjusted => "F approximation, unadjusted",
            Method::ChiSqNancova => "chi-square approximation, covariate-adjusted",
            Method::FNancova => "F approximation, covariate-adjusted",
            Method::EfronBootstrap => "Efron bootstrap, covariate-adjusted",
            Method::WildBootstrap => "wild bootstrap, covariate-adjusted",
        }
    }

    pub const ALL: [Method; 5] = [
        Method::FUnadjusted,
        Method::ChiSqNancova,
        Method::FNancova,
        Method::EfronBootstrap,
        Method::WildBootstrap,
    ];
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "fa1" => Ok(Method::FUnadjusted),
            "ca" => Ok(Method::ChiSqNancova),
            "fa2" => Ok(Method::FNancova),
            "eb" => Ok(Method::EfronBootstrap),
            "wild" => Ok(Method::WildBootstrap),
            other => Err(format!(
                "unknown method '{other}'; expected one of fa1, ca, fa2, eb, wild"
            )),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-group effect estimates echoed in every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectsSummary {
    pub labels: Vec<String>,
    pub sizes: Vec<usize>,
    /// Relative effects per group and component (0 = outcome).
    pub qhat: Vec<Vec<f64>>,
    /// Covariate-adjusted effects per group.
    pub adjusted: Vec<f64>,
}

/// Outcome of one hypothesis test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub method: Method,
    /// Chi-square-scale statistic A_N for `ca` and the bootstrap tests, the
    /// F-scale statistic A_N / f for `fa1`/`fa2`.
    pub statistic: f64,
    pub df1: f64,
    pub df2: Option<f64>,
    pub p_value: f64,
    /// Empirical bootstrap critical value at level alpha (bootstrap only).
    pub critical_value: Option<f64>,
    pub effects: EffectsSummary,
    /// Fitted adjustment coefficients (absent for the unadjusted test).
    pub gamma: Option<Vec<f64>>,
    pub n_boot: Option<u32>,
    pub seed: Option<u64>,
    pub alpha: f64,
    pub weighting: WeightingMode,
    /// Degenerate bootstrap resamples that were redrawn.
    pub degenerate_draws: Option<u64>,
}

impl TestReport {
    /// Test decision at the configured level.
    ///
    /// Approximate tests reject iff p < alpha (strict). Bootstrap tests
    /// reject iff the statistic exceeds the empirical critical value, which
    /// agrees with p <= alpha under the (1 + count) / (n_boot + 1) p-value
    /// convention.
    pub fn rejects(&self) -> bool {
        match self.critical_value {
            Some(critical) => self.statistic > critical,
            None => self.p_value < self.alpha,
        }
    }
}

/// Everything the tests share: rank transforms, effects, fit and covariances.
pub(crate) struct Pipeline {
    pub labels: Vec<String>,
    pub rf: RankFrame,
    pub q: EffectEstimates,
    pub fit: AdjustmentFit,
    pub cov: CovarianceSet,
}

impl Pipeline {
    pub(crate) fn build(data: &Dataset, mode: WeightingMode, k: &DMatrix<f64>) -> Result<Self> {
        if k.ncols() != data.group_count() {
            return Err(NancovaError::InvalidInput(format!(
                "contrast matrix has {} columns for {} groups",
                k.ncols(),
                data.group_count()
            )));
        }
        let rf = rank_transforms(data, mode)?;
        let q = relative_effects(&rf);
        let fit = fit_adjustment(&rf, &q)?;
        let cov = covariance_set(&rf, &q, &fit, k)?;
        Ok(Self {
            labels: data.labels(),
            rf,
            q,
            fit,
            cov,
        })
    }

    pub(crate) fn summary(&self) -> EffectsSummary {
        EffectsSummary {
            labels: self.labels.clone(),
            sizes: self.rf.sizes().to_vec(),
            qhat: self.q.rows().to_vec(),
            adjusted: self.fit.what.clone(),
        }
    }

    /// A_N and f_hat for this analysis.
    pub(crate) fn ats(&self) -> Result<(f64, f64)> {
        let (a_n, f_hat) = ats(
            &self.fit.what,
            &self.cov.t,
            &self.cov.sigma_hat,
            self.rf.total_n(),
        )?;
        if cfg!(debug_assertions) {
            // expanded form through Gamma q, valid because T Gamma e = 0
            let gq = &self.fit.gamma_matrix * self.q.as_vector();
            let quad_expanded = (gq.transpose() * &self.cov.t * &gq)[(0, 0)];
            let w = DVector::from_column_slice(&self.fit.what);
            let quad = (w.transpose() * &self.cov.t * &w)[(0, 0)];
            debug_assert!(
                (quad - quad_expanded).abs() <= 1e-10,
                "quadratic forms disagree: {quad} vs {quad_expanded}"
            );
        }
        Ok((a_n, f_hat))
    }
}

fn validate_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(NancovaError::InvalidInput(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    Ok(())
}

/// ANOVA-type statistic A_N = N f (w' T w) / tr(T Sigma) together with the
/// degrees of freedom estimate f.
pub fn ats(
    what: &[f64],
    t: &DMatrix<f64>,
    sigma_hat: &DMatrix<f64>,
    n_total: usize,
) -> Result<(f64, f64)> {
    let ts = t * sigma_hat;
    let tr_ts = ts.trace();
    let tr_tsts = (&ts * &ts).trace();
    if tr_ts <= TRACE_EPS || tr_tsts <= TRACE_EPS {
        return Err(NancovaError::DegenerateVariance(format!(
            "tr(T Sigma) = {tr_ts:.3e}; cannot scale the statistic"
        )));
    }
    let f_hat = tr_ts * tr_ts / tr_tsts;
    let w = DVector::from_column_slice(what);
    let quad = (w.transpose() * t * &w)[(0, 0)].max(0.0);
    Ok((n_total as f64 * f_hat * quad / tr_ts, f_hat))
}

/// Chi-square approximation NANCOVA (requires at least one covariate).
pub fn chi2_test(
    data: &Dataset,
    mode: WeightingMode,
    k: &DMatrix<f64>,
    alpha: f64,
) -> Result<TestReport> {
    validate_alpha(alpha)?;
    if data.covariate_count() == 0 {
        return Err(NancovaError::InvalidInput(
            "the chi-square NANCOVA test requires at least one covariate".into(),
        ));
    }
    let pipeline = Pipeline::build(data, mode, k)?;
    chi2_from(&pipeline, alpha)
}

pub(crate) fn chi2_from(pipeline: &Pipeline, alpha: f64) -> Result<TestReport> {
    let (a_n, f_hat) = pipeline.ats()?;
    Ok(TestReport {
        method: Method::ChiSqNancova,
        statistic: a_n,
        df1: f_hat,
        df2: None,
        p_value: 1.0 - chi_square_cdf(a_n, f_hat),
        critical_value: None,
        effects: pipeline.summary(),
        gamma: Some(pipeline.fit.gamma.clone()),
        n_boot: None,
        seed: None,
        alpha,
        weighting: pipeline.rf.mode(),
        degenerate_draws: None,
    })
}

/// F approximation: adjusted (`fa2`) when `adjusted` is set, otherwise the
/// unadjusted test (`fa1`), which runs the identical pipeline with all
/// covariate columns dropped.
pub fn f_test(
    data: &Dataset,
    mode: WeightingMode,
    k: &DMatrix<f64>,
    alpha: f64,
    adjusted: bool,
) -> Result<TestReport> {
    validate_alpha(alpha)?;
    if adjusted && data.covariate_count() == 0 {
        return Err(NancovaError::InvalidInput(
            "the adjusted F test requires at least one covariate".into(),
        ));
    }
    let data = if adjusted {
        data.clone()
    } else {
        data.drop_covariates()
    };
    let pipeline = Pipeline::build(&data, mode, k)?;
    f_from(&pipeline, alpha)
}

pub(crate) fn f_from(pipeline: &Pipeline, alpha: f64) -> Result<TestReport> {
    let adjusted = pipeline.rf.covariate_count() > 0;
    let (a_n, f_hat) = pipeline.ats()?;
    let f0_hat = pipeline.cov.f0_hat;
    let statistic = a_n / f_hat;
    Ok(TestReport {
        method: if adjusted {
            Method::FNancova
        } else {
            Method::FUnadjusted
        },
        statistic,
        df1: f_hat,
        df2: Some(f0_hat),
        p_value: 1.0 - f_cdf(statistic, f_hat, f0_hat),
        critical_value: None,
        effects: pipeline.summary(),
        gamma: adjusted.then(|| pipeline.fit.gamma.clone()),
        n_boot: None,
        seed: None,
        alpha,
        weighting: pipeline.rf.mode(),
        degenerate_draws: None,
    })
}

/// Monte Carlo sample from the limiting null law of the ANOVA-type statistic:
/// (f / tr(T Sigma)) * sum_i lambda_i U_i with lambda_i the eigenvalues of
/// T Sigma T and U_i iid chi-square(1).
///
/// This is a validation oracle for the test statistics, not part of any test.
pub fn weighted_chisq_null_sample<R: Rng + ?Sized>(
    t: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
    f: f64,
    draws: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if draws == 0 {
        return Err(NancovaError::InvalidInput("draws must be >= 1".into()));
    }
    let tr_ts = (t * sigma).trace();
    if tr_ts <= TRACE_EPS {
        return Err(NancovaError::DegenerateVariance(format!(
            "tr(T Sigma) = {tr_ts:.3e}; the limiting law is degenerate"
        )));
    }
    let tst = t * sigma * t;
    let eigenvalues: Vec<f64> = tst
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .map(|&l| l.max(0.0))
        .collect();
    let scale = f / tr_ts;
    Ok((0..draws)
        .map(|_| {
            let sum: f64 = eigenvalues
                .iter()
                .map(|&l| {
                    let z: f64 = StandardNormal.sample(rng);
                    l * z * z
                })
                .sum();
            scale * sum
        })
        .collect())
}
