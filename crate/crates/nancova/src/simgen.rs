//! Data generators for simulation studies and a Monte Carlo driver that
//! tabulates rejection rates with a Wald-interval verdict for null scenarios.

use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Exp1, Poisson, StandardNormal, StudentT};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::bootstrap::WeightScheme;
use crate::dataset::{Dataset, WeightingMode};
use crate::error::{NancovaError, Result};
use crate::inference::{Method, Pipeline, TestReport};
use crate::rng::{derive_seed, substream};
use crate::variance::contrast_no_effect;
use crate::{bootstrap, inference};

/// Calibration stops once the simulated discretized correlation is this close
/// to the target.
const CALIBRATION_TOL: f64 = 0.005;
/// Sample size of one calibration evaluation.
const CALIBRATION_SAMPLES: usize = 1_000_000;
/// Fixed key of the calibration RNG; calibration is a pure function of the
/// marginals and the target.
const CALIBRATION_SEED: u64 = 0x0C0_FFEE;

const Z_95: f64 = 1.959_963_984_540_054;

/// Error distribution of the linear-model generator; each variant is
/// standardized to zero mean and unit variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorDist {
    Normal,
    Exponential,
    T3,
}

/// Which generator a scenario uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    OrdinalCopula,
    LinearModel,
    ResamplePairs,
}

fn default_alpha() -> f64 {
    0.05
}

fn default_target_corr() -> f64 {
    0.6
}

// desk-scale defaults; full-scale studies set these explicitly
fn default_n_sim() -> u32 {
    2000
}

fn default_n_boot() -> u32 {
    1000
}

/// One simulation study: generator settings, test settings and run counts.
///
/// Fields that do not apply to `kind` must stay unset; `validate` reports
/// the offending field by name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub kind: ScenarioKind,
    /// Per-group sample sizes.
    pub sizes: Vec<usize>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_n_sim")]
    pub n_sim: u32,
    #[serde(default = "default_n_boot")]
    pub n_boot: u32,
    pub seed: u64,
    pub methods: Vec<Method>,
    #[serde(default)]
    pub weighting: WeightingMode,

    /// Ordinal copula: per-group outcome level probabilities (default:
    /// uniform over five levels for every group).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marginals: Option<Vec<Vec<f64>>>,
    /// Ordinal copula: covariate level probabilities, shared by all groups
    /// (default: uniform over five levels).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariate_marginal: Option<Vec<f64>>,
    /// Ordinal copula: target Pearson correlation on the discretized scale.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_corr: Option<f64>,

    /// Linear model: group intercepts (length must match `sizes`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<Vec<f64>>,
    /// Linear model: error distribution.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_dist: Option<ErrorDist>,

    /// Resampling: source (covariate, outcome) pairs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<Vec<(f64, f64)>>,
    /// Resampling: Poisson rate of the subtracted group-2 effect.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(NancovaError::InvalidInput(msg));
        if self.sizes.len() < 2 {
            return fail(format!("sizes: need at least 2 groups, got {}", self.sizes.len()));
        }
        if self.sizes.iter().any(|&n| n < 2) {
            return fail("sizes: every group needs at least 2 observations".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return fail(format!("alpha: must lie in (0, 1), got {}", self.alpha));
        }
        if self.n_sim == 0 {
            return fail("n_sim: must be >= 1".into());
        }
        if self.n_boot == 0 {
            return fail("n_boot: must be >= 1".into());
        }
        if self.methods.is_empty() {
            return fail("methods: select at least one method".into());
        }
        let allow = |field: &str, set: bool, wanted: bool| {
            if set && !wanted {
                Err(NancovaError::InvalidInput(format!(
                    "{field}: not applicable to kind {:?}",
                    self.kind
                )))
            } else {
                Ok(())
            }
        };
        let is = |k: ScenarioKind| self.kind == k;
        allow("marginals", self.marginals.is_some(), is(ScenarioKind::OrdinalCopula))?;
        allow(
            "covariate_marginal",
            self.covariate_marginal.is_some(),
            is(ScenarioKind::OrdinalCopula),
        )?;
        allow("target_corr", self.target_corr.is_some(), is(ScenarioKind::OrdinalCopula))?;
        allow("mu", self.mu.is_some(), is(ScenarioKind::LinearModel))?;
        allow("error_dist", self.error_dist.is_some(), is(ScenarioKind::LinearModel))?;
        allow("source", self.source.is_some(), is(ScenarioKind::ResamplePairs))?;
        allow("lambda", self.lambda.is_some(), is(ScenarioKind::ResamplePairs))?;

        match self.kind {
            ScenarioKind::OrdinalCopula => {
                if let Some(marginals) = &self.marginals {
                    if marginals.len() != self.sizes.len() {
                        return fail(format!(
                            "marginals: {} group entries for {} groups",
                            marginals.len(),
                            self.sizes.len()
                        ));
                    }
                    for (i, m) in marginals.iter().enumerate() {
                        check_marginal(&format!("marginals[{i}]"), m)?;
                    }
                }
                if let Some(m) = &self.covariate_marginal {
                    check_marginal("covariate_marginal", m)?;
                }
                let rho = self.target_corr.unwrap_or_else(default_target_corr);
                if !(-1.0..=1.0).contains(&rho) {
                    return fail(format!("target_corr: must lie in [-1, 1], got {rho}"));
                }
            }
            ScenarioKind::LinearModel => {
                let mu = self
                    .mu
                    .as_ref()
                    .ok_or_else(|| NancovaError::InvalidInput("mu: required for linear_model".into()))?;
                if mu.len() != self.sizes.len() {
                    return fail(format!(
                        "mu: {} entries for {} groups",
                        mu.len(),
                        self.sizes.len()
                    ));
                }
                if self.error_dist.is_none() {
                    return fail("error_dist: required for linear_model".into());
                }
            }
            ScenarioKind::ResamplePairs => {
                let source = self.source.as_ref().ok_or_else(|| {
                    NancovaError::InvalidInput("source: required for resample_pairs".into())
                })?;
                if source.is_empty() {
                    return fail("source: must not be empty".into());
                }
                if let Some(l) = self.lambda {
                    if l < 0.0 {
                        return fail(format!("lambda: must be >= 0, got {l}"));
                    }
                }
            }
        }
        Ok(())
    }

    /// Whether all groups share one outcome distribution.
    pub fn is_null(&self) -> bool {
        match self.kind {
            ScenarioKind::OrdinalCopula => match &self.marginals {
                None => true,
                Some(m) => m.windows(2).all(|w| w[0] == w[1]),
            },
            ScenarioKind::LinearModel => self
                .mu
                .as_ref()
                .map(|mu| mu.windows(2).all(|w| w[0] == w[1]))
                .unwrap_or(true),
            ScenarioKind::ResamplePairs => self.lambda.unwrap_or(0.0) == 0.0,
        }
    }
}

fn check_marginal(field: &str, probs: &[f64]) -> Result<()> {
    if probs.len() < 2 {
        return Err(NancovaError::InvalidInput(format!(
            "{field}: need at least 2 levels"
        )));
    }
    if probs.iter().any(|&p| p < 0.0) {
        return Err(NancovaError::InvalidInput(format!(
            "{field}: negative probability"
        )));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(NancovaError::InvalidInput(format!(
            "{field}: probabilities sum to {sum}, expected 1"
        )));
    }
    Ok(())
}

/// Latent-normal thresholds of a discrete marginal.
fn thresholds(probs: &[f64]) -> Vec<f64> {
    let normal = Normal::standard();
    let mut cum = 0.0;
    probs[..probs.len() - 1]
        .iter()
        .map(|&p| {
            cum += p;
            normal.inverse_cdf(cum.clamp(1e-12, 1.0 - 1e-12))
        })
        .collect()
}

/// Level (1-based, as f64) of a latent value under the given thresholds.
fn discretize(z: f64, thresholds: &[f64]) -> f64 {
    (thresholds.partition_point(|&t| t < z) + 1) as f64
}

fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Discretized correlation at latent correlation `rho`, evaluated on common
/// random numbers so the map is monotone in `rho`.
fn discretized_corr(rho: f64, thr_out: &[f64], thr_cov: &[f64]) -> f64 {
    let mut rng = substream(CALIBRATION_SEED, 0);
    let root = (1.0 - rho * rho).sqrt();
    let mut out = Vec::with_capacity(CALIBRATION_SAMPLES);
    let mut cov = Vec::with_capacity(CALIBRATION_SAMPLES);
    for _ in 0..CALIBRATION_SAMPLES {
        let z1: f64 = StandardNormal.sample(&mut rng);
        let z2: f64 = StandardNormal.sample(&mut rng);
        cov.push(discretize(z1, thr_cov));
        out.push(discretize(rho * z1 + root * z2, thr_out));
    }
    pearson(&out, &cov)
}

/// A calibrated Gaussian-copula generator for one group.
#[derive(Debug, Clone)]
struct GroupCopula {
    thr_outcome: Vec<f64>,
    thr_covariate: Vec<f64>,
    latent_rho: f64,
}

impl GroupCopula {
    fn sample_row<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z1: f64 = StandardNormal.sample(rng);
        let z2: f64 = StandardNormal.sample(rng);
        let latent_out = self.latent_rho * z1 + (1.0 - self.latent_rho * self.latent_rho).sqrt() * z2;
        vec![
            discretize(latent_out, &self.thr_outcome),
            discretize(z1, &self.thr_covariate),
        ]
    }
}

/// Gaussian-copula generator for correlated ordinal outcome/covariate pairs.
///
/// The latent correlation of each group is calibrated by bisection until the
/// simulated correlation of the discretized pair hits the target.
#[derive(Debug, Clone)]
pub struct OrdinalGenerator {
    groups: Vec<GroupCopula>,
}

impl OrdinalGenerator {
    pub fn calibrate(
        outcome_marginals: &[Vec<f64>],
        covariate_marginal: &[f64],
        target_corr: f64,
    ) -> Result<Self> {
        check_marginal("covariate_marginal", covariate_marginal)?;
        let thr_cov = thresholds(covariate_marginal);
        let mut calibrated: Vec<(Vec<f64>, f64)> = Vec::new();
        let mut groups = Vec::with_capacity(outcome_marginals.len());
        for (i, marginal) in outcome_marginals.iter().enumerate() {
            check_marginal(&format!("marginals[{i}]"), marginal)?;
            let latent_rho = match calibrated.iter().find(|(m, _)| m == marginal) {
                Some((_, rho)) => *rho,
                None => {
                    let thr_out = thresholds(marginal);
                    let rho = calibrate_latent_rho(target_corr, &thr_out, &thr_cov)?;
                    calibrated.push((marginal.clone(), rho));
                    rho
                }
            };
            groups.push(GroupCopula {
                thr_outcome: thresholds(marginal),
                thr_covariate: thr_cov.clone(),
                latent_rho,
            });
        }
        Ok(Self { groups })
    }

    pub fn sample<R: Rng + ?Sized>(&self, sizes: &[usize], rng: &mut R) -> Result<Dataset> {
        if sizes.len() != self.groups.len() {
            return Err(NancovaError::InvalidInput(format!(
                "{} sizes for {} calibrated groups",
                sizes.len(),
                self.groups.len()
            )));
        }
        Dataset::new(
            self.groups
                .iter()
                .zip(sizes)
                .enumerate()
                .map(|(i, (g, &n))| {
                    (
                        format!("group{}", i + 1),
                        (0..n).map(|_| g.sample_row(rng)).collect(),
                    )
                })
                .collect(),
        )
    }

    /// Calibrated latent correlations, one per group.
    pub fn latent_correlations(&self) -> Vec<f64> {
        self.groups.iter().map(|g| g.latent_rho).collect()
    }
}

fn calibrate_latent_rho(target: f64, thr_out: &[f64], thr_cov: &[f64]) -> Result<f64> {
    if target == 0.0 {
        return Ok(0.0);
    }
    let sign = target.signum();
    let limit = 0.999_999 * sign;
    let at_limit = discretized_corr(limit, thr_out, thr_cov);
    if target.abs() > at_limit.abs() + CALIBRATION_TOL {
        let other = discretized_corr(-limit, thr_out, thr_cov);
        let (lo, hi) = if at_limit < other {
            (at_limit, other)
        } else {
            (other, at_limit)
        };
        return Err(NancovaError::InfeasibleCorrelation {
            target,
            lo,
            hi,
        });
    }
    let (mut lo, mut hi) = if sign > 0.0 { (0.0, limit) } else { (limit, 0.0) };
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..30 {
        mid = 0.5 * (lo + hi);
        let c = discretized_corr(mid, thr_out, thr_cov);
        if (c - target).abs() <= CALIBRATION_TOL {
            return Ok(mid);
        }
        if c < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(mid)
}

/// Five-level uniform marginal.
pub fn uniform_five_levels() -> Vec<f64> {
    vec![0.2; 5]
}

/// Correlated ordinal dataset via a Gaussian copula (calibrates on every
/// call; use [`OrdinalGenerator`] to amortize the calibration).
pub fn gen_ordinal<R: Rng + ?Sized>(
    sizes: &[usize],
    outcome_marginals: &[Vec<f64>],
    covariate_marginal: &[f64],
    target_corr: f64,
    rng: &mut R,
) -> Result<Dataset> {
    OrdinalGenerator::calibrate(outcome_marginals, covariate_marginal, target_corr)?
        .sample(sizes, rng)
}

/// Linear-model dataset: two U(0,1) covariates, outcome
/// mu_i + 2.5 (X1 + X2) + standardized error.
pub fn gen_linear<R: Rng + ?Sized>(
    sizes: &[usize],
    mu: &[f64],
    error_dist: ErrorDist,
    rng: &mut R,
) -> Result<Dataset> {
    if sizes.len() != mu.len() {
        return Err(NancovaError::InvalidInput(format!(
            "{} sizes for {} group intercepts",
            sizes.len(),
            mu.len()
        )));
    }
    let t3 = StudentT::new(3.0).expect("valid dof");
    let draw_error = |rng: &mut R| -> f64 {
        match error_dist {
            ErrorDist::Normal => StandardNormal.sample(rng),
            ErrorDist::Exponential => {
                let e: f64 = Exp1.sample(rng);
                e - 1.0
            }
            // t with 3 dof has variance 3
            ErrorDist::T3 => {
                let t: f64 = t3.sample(rng);
                t / 3.0_f64.sqrt()
            }
        }
    };
    Dataset::new(
        sizes
            .iter()
            .zip(mu)
            .enumerate()
            .map(|(i, (&n, &mu_i))| {
                (
                    format!("group{}", i + 1),
                    (0..n)
                        .map(|_| {
                            let x1: f64 = rng.random();
                            let x2: f64 = rng.random();
                            let y = mu_i + 2.5 * (x1 + x2) + draw_error(rng);
                            vec![y, x1, x2]
                        })
                        .collect(),
                )
            })
            .collect(),
    )
}

/// Resample (covariate, outcome) pairs with replacement into groups. With
/// `effect_lambda` set, outcomes of the second group get an independent
/// Poisson(lambda) value subtracted and are clipped to [0, 10].
pub fn resample_pairs<R: Rng + ?Sized>(
    source: &[(f64, f64)],
    sizes: &[usize],
    effect_lambda: Option<f64>,
    rng: &mut R,
) -> Result<Dataset> {
    if source.is_empty() {
        return Err(NancovaError::InvalidInput("empty source table".into()));
    }
    let poisson = match effect_lambda {
        Some(l) if l > 0.0 => {
            Some(Poisson::new(l).map_err(|e| NancovaError::InvalidInput(format!("lambda: {e}")))?)
        }
        _ => None,
    };
    Dataset::new(
        sizes
            .iter()
            .enumerate()
            .map(|(i, &n)| {
                (
                    format!("group{}", i + 1),
                    (0..n)
                        .map(|_| {
                            let (covariate, mut outcome) =
                                source[rng.random_range(0..source.len())];
                            if i == 1 {
                                if let Some(p) = &poisson {
                                    let effect: f64 = p.sample(rng);
                                    outcome = (outcome - effect).clamp(0.0, 10.0);
                                }
                            }
                            vec![outcome, covariate]
                        })
                        .collect(),
                )
            })
            .collect(),
    )
}

/// Rejection tally of one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub rejections: u32,
    /// Runs this method completed without error.
    pub completed: u32,
    pub rate_percent: f64,
    /// Monte Carlo standard error of the rate, in percent.
    pub se_percent: f64,
    /// For null scenarios: whether the rate stays inside the Wald interval.
    pub within_wald: Option<bool>,
    pub mean_runtime_ms: f64,
}

/// Result of one Monte Carlo study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub scenario: Scenario,
    /// 95% Wald interval around the nominal level, in percent.
    pub wald_interval_percent: (f64, f64),
    /// Whether the scenario is a null (type-I error) setting.
    pub is_null: bool,
    pub errored_runs: u32,
    pub methods: Vec<MethodSummary>,
}

enum Generator {
    Ordinal(OrdinalGenerator),
    Linear { mu: Vec<f64>, error_dist: ErrorDist },
    Resample { source: Vec<(f64, f64)>, lambda: Option<f64> },
}

impl Generator {
    fn prepare(sc: &Scenario) -> Result<Self> {
        match sc.kind {
            ScenarioKind::OrdinalCopula => {
                let marginals = sc
                    .marginals
                    .clone()
                    .unwrap_or_else(|| vec![uniform_five_levels(); sc.sizes.len()]);
                let covariate = sc
                    .covariate_marginal
                    .clone()
                    .unwrap_or_else(uniform_five_levels);
                let target = sc.target_corr.unwrap_or_else(default_target_corr);
                Ok(Generator::Ordinal(OrdinalGenerator::calibrate(
                    &marginals, &covariate, target,
                )?))
            }
            ScenarioKind::LinearModel => Ok(Generator::Linear {
                mu: sc.mu.clone().expect("validated"),
                error_dist: sc.error_dist.expect("validated"),
            }),
            ScenarioKind::ResamplePairs => Ok(Generator::Resample {
                source: sc.source.clone().expect("validated"),
                lambda: sc.lambda,
            }),
        }
    }

    fn sample(&self, sizes: &[usize], rng: &mut ChaCha12Rng) -> Result<Dataset> {
        match self {
            Generator::Ordinal(g) => g.sample(sizes, rng),
            Generator::Linear { mu, error_dist } => gen_linear(sizes, mu, *error_dist, rng),
            Generator::Resample { source, lambda } => {
                resample_pairs(source, sizes, *lambda, rng)
            }
        }
    }
}

struct RunTally {
    rejections: Vec<u32>,
    completed: Vec<u32>,
    runtime: Vec<f64>,
    errors: u32,
    first_error: Option<String>,
}

/// Run a full Monte Carlo study. Deterministic for a fixed scenario,
/// independent of the worker count.
pub fn monte_carlo(sc: &Scenario) -> Result<SimResult> {
    sc.validate()?;
    let generator = Generator::prepare(sc)?;
    let k = contrast_no_effect(sc.sizes.len());

    let tally = (0..sc.n_sim as u64)
        .into_par_iter()
        .map(|run| {
            let mut rng = substream(sc.seed, run);
            let mut rejections = vec![0u32; sc.methods.len()];
            let mut completed = vec![0u32; sc.methods.len()];
            let mut runtime = vec![0.0f64; sc.methods.len()];
            let dataset = match generator.sample(&sc.sizes, &mut rng) {
                Ok(d) => d,
                Err(e) => {
                    return RunTally {
                        rejections,
                        completed,
                        runtime,
                        errors: 1,
                        first_error: Some(e.to_string()),
                    }
                }
            };
            let boot_seed = derive_seed(sc.seed, run);
            let mut first_error = None;
            let mut errors = 0;
            // pipelines shared by the adjusted methods / the unadjusted one
            let adjusted = Pipeline::build(&dataset, sc.weighting, &k);
            let unadjusted = Pipeline::build(&dataset.drop_covariates(), sc.weighting, &k);
            for (m, &method) in sc.methods.iter().enumerate() {
                let started = Instant::now();
                let report: Result<TestReport> = match method {
                    Method::FUnadjusted => unadjusted
                        .as_ref()
                        .map_err(clone_error)
                        .and_then(|p| inference::f_from(p, sc.alpha)),
                    Method::ChiSqNancova => adjusted
                        .as_ref()
                        .map_err(clone_error)
                        .and_then(|p| inference::chi2_from(p, sc.alpha)),
                    Method::FNancova => adjusted
                        .as_ref()
                        .map_err(clone_error)
                        .and_then(|p| inference::f_from(p, sc.alpha)),
                    Method::EfronBootstrap => adjusted.as_ref().map_err(clone_error).and_then(|p| {
                        bootstrap::bootstrap_from(
                            p,
                            sc.alpha,
                            WeightScheme::Efron,
                            sc.n_boot,
                            Some(boot_seed),
                        )
                    }),
                    Method::WildBootstrap => adjusted.as_ref().map_err(clone_error).and_then(|p| {
                        bootstrap::bootstrap_from(
                            p,
                            sc.alpha,
                            WeightScheme::Wild,
                            sc.n_boot,
                            Some(boot_seed),
                        )
                    }),
                };
                runtime[m] += started.elapsed().as_secs_f64() * 1e3;
                match report {
                    Ok(r) => {
                        completed[m] += 1;
                        if r.rejects() {
                            rejections[m] += 1;
                        }
                    }
                    Err(e) => {
                        errors = 1;
                        if first_error.is_none() {
                            first_error = Some(e.to_string());
                        }
                    }
                }
            }
            RunTally {
                rejections,
                completed,
                runtime,
                errors,
                first_error,
            }
        })
        .reduce(
            || RunTally {
                rejections: vec![0; sc.methods.len()],
                completed: vec![0; sc.methods.len()],
                runtime: vec![0.0; sc.methods.len()],
                errors: 0,
                first_error: None,
            },
            |mut acc, next| {
                for (a, b) in acc.rejections.iter_mut().zip(&next.rejections) {
                    *a += b;
                }
                for (a, b) in acc.completed.iter_mut().zip(&next.completed) {
                    *a += b;
                }
                for (a, b) in acc.runtime.iter_mut().zip(&next.runtime) {
                    *a += b;
                }
                acc.errors += next.errors;
                if acc.first_error.is_none() {
                    acc.first_error = next.first_error;
                }
                acc
            },
        );

    if tally.errors as f64 > 0.01 * sc.n_sim as f64 {
        return Err(NancovaError::SimulationFailed {
            failed: tally.errors as u64,
            total: sc.n_sim as u64,
            first: tally.first_error.unwrap_or_else(|| "unknown".into()),
        });
    }

    let half_width = Z_95 * (sc.alpha * (1.0 - sc.alpha) / sc.n_sim as f64).sqrt() * 100.0;
    let nominal = sc.alpha * 100.0;
    let interval = (nominal - half_width, nominal + half_width);
    let is_null = sc.is_null();

    let methods = sc
        .methods
        .iter()
        .enumerate()
        .map(|(m, &method)| {
            let completed = tally.completed[m];
            let rate = if completed > 0 {
                tally.rejections[m] as f64 / completed as f64
            } else {
                f64::NAN
            };
            let rate_percent = rate * 100.0;
            MethodSummary {
                method,
                rejections: tally.rejections[m],
                completed,
                rate_percent,
                se_percent: (rate * (1.0 - rate) / completed.max(1) as f64).sqrt() * 100.0,
                within_wald: is_null
                    .then_some(rate_percent >= interval.0 && rate_percent <= interval.1),
                mean_runtime_ms: tally.runtime[m] / completed.max(1) as f64,
            }
        })
        .collect();

    Ok(SimResult {
        scenario: sc.clone(),
        wald_interval_percent: interval,
        is_null,
        errored_runs: tally.errors,
        methods,
    })
}

fn clone_error(e: &NancovaError) -> NancovaError {
    NancovaError::InvalidInput(e.to_string())
}
