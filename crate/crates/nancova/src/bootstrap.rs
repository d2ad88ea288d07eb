//! Rank-level resampling: random weights, bootstrap estimators and the
//! resampling test.
//!
//! Resampling happens on the rank transforms; the average ECDF behind them is
//! the bootstrap population and is never recomputed from a resample. Draws
//! are independent across indices and each index owns an RNG substream keyed
//! by `(seed, index)`, so parallel and serial runs produce identical results.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, WeightingMode};
use crate::effects::EffectEstimates;
use crate::error::{NancovaError, Result};
use crate::inference::{Method, Pipeline, TestReport};
use crate::linalg::{coefficient_matrix, spd_solve};
use crate::rankcore::RankFrame;
use crate::rng::substream;
use crate::{CONDITION_BOUND, TRACE_EPS};

/// Maximum redraw attempts per draw index before giving up.
const MAX_ATTEMPTS: u64 = 1024;

/// Distribution of the random resampling weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightScheme {
    /// Multinomial(n_i, 1/n_i) per group: drawing with replacement.
    Efron,
    /// Rademacher +-1 per observation, applied to centered rank transforms.
    Wild,
}

impl WeightScheme {
    pub fn method(self) -> Method {
        match self {
            WeightScheme::Efron => Method::EfronBootstrap,
            WeightScheme::Wild => Method::WildBootstrap,
        }
    }
}

/// One realization of the random weights, per group.
#[derive(Debug, Clone, PartialEq)]
pub struct DrawWeights {
    scheme: WeightScheme,
    by_group: Vec<Vec<f64>>,
}

impl DrawWeights {
    /// Validate and wrap externally supplied weights.
    pub fn new(scheme: WeightScheme, by_group: Vec<Vec<f64>>) -> Result<Self> {
        for (i, w) in by_group.iter().enumerate() {
            match scheme {
                WeightScheme::Efron => {
                    if w.iter().any(|&m| m < 0.0 || m.fract() != 0.0) {
                        return Err(NancovaError::InvalidInput(format!(
                            "group {i}: Efron weights must be nonnegative integers"
                        )));
                    }
                    let total: f64 = w.iter().sum();
                    if total != w.len() as f64 {
                        return Err(NancovaError::InvalidInput(format!(
                            "group {i}: Efron weights must sum to the group size"
                        )));
                    }
                }
                WeightScheme::Wild => {
                    if w.iter().any(|&m| m != 1.0 && m != -1.0) {
                        return Err(NancovaError::InvalidInput(format!(
                            "group {i}: wild weights must be +-1"
                        )));
                    }
                }
            }
        }
        Ok(Self { scheme, by_group })
    }

    /// The no-op draw: every weight equal to one (resample equals sample).
    pub fn identity(scheme: WeightScheme, sizes: &[usize]) -> Self {
        Self {
            scheme,
            by_group: sizes.iter().map(|&n| vec![1.0; n]).collect(),
        }
    }

    pub fn scheme(&self) -> WeightScheme {
        self.scheme
    }

    pub fn by_group(&self) -> &[Vec<f64>] {
        &self.by_group
    }
}

/// Draw one set of random weights.
pub fn draw_weights<R: Rng + ?Sized>(
    scheme: WeightScheme,
    sizes: &[usize],
    rng: &mut R,
) -> DrawWeights {
    let by_group = sizes
        .iter()
        .map(|&n| match scheme {
            WeightScheme::Efron => {
                let mut counts = vec![0.0; n];
                for _ in 0..n {
                    counts[rng.random_range(0..n)] += 1.0;
                }
                counts
            }
            WeightScheme::Wild => (0..n)
                .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
                .collect(),
        })
        .collect();
    DrawWeights { scheme, by_group }
}

/// All bootstrap estimators computed from one weight realization.
#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapDraw {
    /// Mean bootstrap rank transforms, group-major component-minor.
    pub ybar_star: DVector<f64>,
    /// Block-diagonal bootstrap covariance.
    pub s_star: DMatrix<f64>,
    /// Bootstrap adjustment coefficients (length d).
    pub gamma_star: Vec<f64>,
    /// Adjusted bootstrap covariance Gamma* S* Gamma*'.
    pub sigma_star: DMatrix<f64>,
    /// Bootstrap degrees of freedom.
    pub f_star: f64,
    /// Bootstrap ANOVA-type statistic.
    pub a_star: f64,
}

/// Compute all bootstrap estimators for one draw.
///
/// For Efron weights the resampled multiset is the weight-replicated sample;
/// for wild weights the weights flip the sign of the centered rank
/// transforms. Either way the rank transforms themselves stay fixed.
pub fn bootstrap_draw(
    rf: &RankFrame,
    q: &EffectEstimates,
    t: &DMatrix<f64>,
    weights: &DrawWeights,
) -> Result<BootstrapDraw> {
    let a = rf.group_count();
    let comps = rf.covariate_count() + 1;
    let d = comps - 1;
    let n_total = rf.total_n() as f64;

    let mut ybar_star = DVector::zeros(a * comps);
    let mut s_star = DMatrix::zeros(a * comps, a * comps);
    let mut c_star = DMatrix::zeros(comps, comps);

    for i in 0..a {
        let ni = rf.sizes()[i];
        let w = &weights.by_group[i];
        if w.len() != ni {
            return Err(NancovaError::InvalidInput(format!(
                "group {i}: {} weights for {ni} observations",
                w.len()
            )));
        }
        let nif = ni as f64;

        // First pass: bootstrap group means.
        let mut mean = vec![0.0; comps];
        match weights.scheme {
            WeightScheme::Efron => {
                for (r, m) in mean.iter_mut().enumerate() {
                    let col = rf.group_column(i, r);
                    *m = col.iter().zip(w).map(|(y, wk)| wk * y).sum::<f64>() / nif;
                }
            }
            WeightScheme::Wild => {
                for (r, m) in mean.iter_mut().enumerate() {
                    let col = rf.group_column(i, r);
                    let q_ir = q.get(i, r);
                    let zbar =
                        col.iter().zip(w).map(|(y, wk)| wk * (y - q_ir)).sum::<f64>() / nif;
                    *m = q_ir + zbar;
                }
            }
        }
        for (r, m) in mean.iter().enumerate() {
            ybar_star[i * comps + r] = *m;
        }

        // Second pass: centered cross products of the resampled values.
        let scale_sigma = n_total / (nif * (nif - 1.0));
        for r in 0..comps {
            let col_r = rf.group_column(i, r);
            let q_r = q.get(i, r);
            for s in r..comps {
                let col_s = rf.group_column(i, s);
                let q_s = q.get(i, s);
                let cross: f64 = match weights.scheme {
                    WeightScheme::Efron => col_r
                        .iter()
                        .zip(col_s)
                        .zip(w)
                        .map(|((yr, ys), wk)| wk * (yr - mean[r]) * (ys - mean[s]))
                        .sum(),
                    WeightScheme::Wild => {
                        let zbar_r = mean[r] - q_r;
                        let zbar_s = mean[s] - q_s;
                        col_r
                            .iter()
                            .zip(col_s)
                            .zip(w)
                            .map(|((yr, ys), wk)| {
                                (wk * (yr - q_r) - zbar_r) * (wk * (ys - q_s) - zbar_s)
                            })
                            .sum()
                    }
                };
                let sig = scale_sigma * cross;
                s_star[(i * comps + r, i * comps + s)] = sig;
                s_star[(i * comps + s, i * comps + r)] = sig;
                c_star[(r, s)] += cross / n_total;
                if s != r {
                    c_star[(s, r)] = c_star[(r, s)];
                }
            }
        }
    }

    let gamma_star = if d == 0 {
        Vec::new()
    } else {
        let cov_block = c_star.view((1, 1), (d, d)).into_owned();
        let rhs: Vec<f64> = (1..=d).map(|r| c_star[(0, r)]).collect();
        spd_solve(&cov_block, &rhs, CONDITION_BOUND)
            .map_err(NancovaError::DegenerateDraw)?
    };

    let gamma_matrix = coefficient_matrix(a, &gamma_star);
    let sigma_star = &gamma_matrix * &s_star * gamma_matrix.transpose();
    let ts = t * &sigma_star;
    let tr_ts = ts.trace();
    let tr_tsts = (&ts * &ts).trace();
    if tr_ts <= TRACE_EPS || tr_tsts <= TRACE_EPS {
        return Err(NancovaError::DegenerateDraw(format!(
            "tr(T Sigma*) = {tr_ts:.3e}"
        )));
    }
    let f_star = tr_ts * tr_ts / tr_tsts;

    // Centered bootstrap covariate-adjusted effect.
    let centered = &gamma_matrix * (&ybar_star - q.as_vector());
    let quad = (centered.transpose() * t * &centered)[(0, 0)].max(0.0);
    let a_star = n_total * f_star * quad / tr_ts;

    Ok(BootstrapDraw {
        ybar_star,
        s_star,
        gamma_star,
        sigma_star,
        f_star,
        a_star,
    })
}

/// Outcome of the resampling loop.
struct BootstrapRun {
    a_stars: Vec<f64>,
    degenerate: u64,
}

/// Run `n_boot` draws deterministically; degenerate draws are redrawn on a
/// fresh substream and counted.
fn run_draws(
    pipeline: &Pipeline,
    scheme: WeightScheme,
    n_boot: u32,
    seed: u64,
) -> Result<BootstrapRun> {
    let results: Vec<Result<(f64, u64)>> = (0..n_boot as u64)
        .into_par_iter()
        .map(|index| {
            let mut degenerate = 0u64;
            for attempt in 0..MAX_ATTEMPTS {
                let mut rng = substream(seed, index | (attempt << 40));
                let weights = draw_weights(scheme, pipeline.rf.sizes(), &mut rng);
                match bootstrap_draw(&pipeline.rf, &pipeline.q, &pipeline.cov.t, &weights) {
                    Ok(draw) => return Ok((draw.a_star, degenerate)),
                    Err(NancovaError::DegenerateDraw(_)) => degenerate += 1,
                    Err(other) => return Err(other),
                }
            }
            Err(NancovaError::TooManyDegenerateDraws {
                degenerate,
                requested: n_boot as u64,
            })
        })
        .collect();

    let mut a_stars = Vec::with_capacity(n_boot as usize);
    let mut degenerate = 0u64;
    for r in results {
        let (a, d) = r?;
        a_stars.push(a);
        degenerate += d;
    }
    if degenerate as f64 > 0.05 * n_boot as f64 {
        return Err(NancovaError::TooManyDegenerateDraws {
            degenerate,
            requested: n_boot as u64,
        });
    }
    Ok(BootstrapRun { a_stars, degenerate })
}

/// Empirical (1 - alpha) critical value consistent with the
/// (1 + count) / (n_boot + 1) p-value: the k-th order statistic with
/// k = B + 1 - floor(alpha (B + 1)). Returns `None` when alpha is so small
/// that no finite draw can be exceeded (k > B); the test then never rejects.
fn critical_value(a_stars: &[f64], alpha: f64) -> Option<f64> {
    let b = a_stars.len();
    let k = b + 1 - (alpha * (b + 1) as f64).floor() as usize;
    if k > b {
        return None;
    }
    let mut sorted = a_stars.to_vec();
    sorted.sort_by(|x, y| x.partial_cmp(y).unwrap());
    Some(sorted[k - 1])
}

/// The resampling NANCOVA test.
///
/// The p-value is (1 + #{b : A*_b >= A_N}) / (n_boot + 1); the reported
/// critical value is the empirical (1 - alpha) quantile of the A* draws and
/// the decision "A_N > critical value" agrees with "p <= alpha".
pub fn bootstrap_test(
    data: &Dataset,
    mode: WeightingMode,
    k: &DMatrix<f64>,
    alpha: f64,
    scheme: WeightScheme,
    n_boot: u32,
    seed: Option<u64>,
) -> Result<TestReport> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(NancovaError::InvalidInput(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    if n_boot == 0 {
        return Err(NancovaError::InvalidInput("n_boot must be >= 1".into()));
    }
    let pipeline = Pipeline::build(data, mode, k)?;
    bootstrap_from(&pipeline, alpha, scheme, n_boot, seed)
}

pub(crate) fn bootstrap_from(
    pipeline: &Pipeline,
    alpha: f64,
    scheme: WeightScheme,
    n_boot: u32,
    seed: Option<u64>,
) -> Result<TestReport> {
    let seed = seed.unwrap_or_else(|| rand::rng().random());
    let (a_n, f_hat) = pipeline.ats()?;
    let run = run_draws(pipeline, scheme, n_boot, seed)?;

    let exceed = run.a_stars.iter().filter(|&&a| a >= a_n).count();
    let p_value = (1 + exceed) as f64 / (n_boot as f64 + 1.0);
    let critical = critical_value(&run.a_stars, alpha);

    Ok(TestReport {
        method: scheme.method(),
        statistic: a_n,
        df1: f_hat,
        df2: None,
        p_value,
        critical_value: critical,
        effects: pipeline.summary(),
        gamma: (pipeline.rf.covariate_count() > 0).then(|| pipeline.fit.gamma.clone()),
        n_boot: Some(n_boot),
        seed: Some(seed),
        alpha,
        weighting: pipeline.rf.mode(),
        degenerate_draws: Some(run.degenerate),
    })
}

/// The empirical bootstrap distribution of A* for one dataset; exposed for
/// distribution-level diagnostics.
pub fn bootstrap_statistics(
    data: &Dataset,
    mode: WeightingMode,
    k: &DMatrix<f64>,
    scheme: WeightScheme,
    n_boot: u32,
    seed: u64,
) -> Result<Vec<f64>> {
    let pipeline = Pipeline::build(data, mode, k)?;
    Ok(run_draws(&pipeline, scheme, n_boot, seed)?.a_stars)
}
