//! Distribution-level checks of the resampling machinery: the bootstrap has
//! to mimic the sampling distribution of the statistic, and the approximate
//! tests have to match the weighted-chi-square limiting law.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha12Rng;

use nancova::rng::substream;
use nancova::{
    bootstrap_draw, chi2_test, contrast_no_effect, draw_weights, fit_adjustment, projection_t,
    rank_transforms, relative_effects, shat, weighted_chisq_null_sample, Dataset, WeightScheme,
    WeightingMode,
};

/// Two-group null dataset with one covariate: both components continuous,
/// correlated within each row, identical across groups.
fn continuous_null(n_per_group: usize, rng: &mut ChaCha12Rng) -> Dataset {
    let mut normal = || {
        // Box-Muller keeps this generator independent of library samplers
        let u1: f64 = rng.random::<f64>().max(1e-12);
        let u2: f64 = rng.random::<f64>();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    };
    let mut rows = || {
        (0..n_per_group)
            .map(|_| {
                let cov = normal();
                let outcome = 0.6 * cov + 0.8 * normal();
                vec![outcome, cov]
            })
            .collect::<Vec<_>>()
    };
    Dataset::new(vec![("g1".into(), rows()), ("g2".into(), rows())]).unwrap()
}

/// Two-sample Kolmogorov-Smirnov distance.
fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
        let fa = i as f64 / a.len() as f64;
        let fb = j as f64 / b.len() as f64;
        d = d.max((fa - fb).abs());
    }
    d
}

#[test]
fn bootstrap_means_satisfy_the_conditional_clt_covariance() {
    // the covariance of sqrt(N)(Ybar* - qhat) over many draws has to match
    // the plug-in covariance estimate entrywise
    let mut rng = substream(2024, 0);
    let data = continuous_null(200, &mut rng);
    let rf = rank_transforms(&data, WeightingMode::SampleSizeWeighted).unwrap();
    let q = relative_effects(&rf);
    let fit = fit_adjustment(&rf, &q).unwrap();
    let s_hat = shat(&rf, &q).unwrap();
    let t = projection_t(&contrast_no_effect(2));
    let _ = fit;

    let draws = 10_000usize;
    let n_sqrt = (rf.total_n() as f64).sqrt();
    let dim = q.as_vector().len();
    let mut sum = DVector::<f64>::zeros(dim);
    let mut sum_sq = DMatrix::<f64>::zeros(dim, dim);
    for b in 0..draws {
        let mut draw_rng = substream(7, b as u64);
        let w = draw_weights(WeightScheme::Efron, rf.sizes(), &mut draw_rng);
        let d = bootstrap_draw(&rf, &q, &t, &w).unwrap();
        let centered = (d.ybar_star - q.as_vector()) * n_sqrt;
        sum += &centered;
        sum_sq += &centered * centered.transpose();
    }
    let mean = sum / draws as f64;
    let cov = sum_sq / draws as f64 - &mean * mean.transpose();

    for r in 0..dim {
        for s in 0..dim {
            let se = ((s_hat[(r, r)] * s_hat[(s, s)] + s_hat[(r, s)].powi(2))
                / draws as f64)
                .sqrt();
            assert!(
                (cov[(r, s)] - s_hat[(r, s)]).abs() <= 3.0 * se + 1e-3,
                "entry ({r},{s}): {} vs {} (se {se})",
                cov[(r, s)],
                s_hat[(r, s)]
            );
        }
    }
}

#[test]
fn bootstrap_estimators_concentrate_with_growing_samples() {
    // conditional consistency: gamma* and S* concentrate around the sample
    // estimates as groups grow
    let spread = |n_per_group: usize, seed: u64| -> (f64, f64) {
        let mut rng = substream(seed, 0);
        let data = continuous_null(n_per_group, &mut rng);
        let rf = rank_transforms(&data, WeightingMode::SampleSizeWeighted).unwrap();
        let q = relative_effects(&rf);
        let fit = fit_adjustment(&rf, &q).unwrap();
        let s_hat = shat(&rf, &q).unwrap();
        let t = projection_t(&contrast_no_effect(2));
        let draws = 500;
        let mut gamma_err: Vec<f64> = Vec::with_capacity(draws);
        let mut s_err: Vec<f64> = Vec::with_capacity(draws);
        for b in 0..draws {
            let mut draw_rng = substream(seed + 1, b as u64);
            let w = draw_weights(WeightScheme::Efron, rf.sizes(), &mut draw_rng);
            let d = bootstrap_draw(&rf, &q, &t, &w).unwrap();
            gamma_err.push((d.gamma_star[0] - fit.gamma[0]).abs());
            s_err.push((&d.s_star - &s_hat).amax());
        }
        let median = |v: &mut Vec<f64>| {
            v.sort_by(|x, y| x.partial_cmp(y).unwrap());
            v[v.len() / 2]
        };
        (median(&mut gamma_err), median(&mut s_err))
    };

    let (gamma_small, s_small) = spread(50, 100);
    let (gamma_large, s_large) = spread(500, 200);
    assert!(
        gamma_large < gamma_small,
        "gamma spread: {gamma_large} !< {gamma_small}"
    );
    assert!(s_large < s_small, "S spread: {s_large} !< {s_small}");
}

#[test]
fn chi_square_test_is_liberal_but_close_under_the_null() {
    // empirical size of the chi-square approximation at n = 100 per group
    let replications = 2000;
    let k = contrast_no_effect(2);
    let mut rejections = 0;
    for rep in 0..replications {
        let mut rng = substream(3000, rep);
        let data = continuous_null(100, &mut rng);
        let report = chi2_test(&data, WeightingMode::SampleSizeWeighted, &k, 0.05).unwrap();
        if report.rejects() {
            rejections += 1;
        }
    }
    let rate = rejections as f64 / replications as f64;
    assert!(
        (0.04..=0.09).contains(&rate),
        "chi-square null rejection rate {rate}"
    );
}

#[test]
fn statistic_follows_the_weighted_chi_square_law() {
    // the empirical null distribution of A_N matches the plug-in weighted
    // chi-square law from one large sample
    let replications = 2000;
    let k = contrast_no_effect(2);
    let mut stats = Vec::with_capacity(replications as usize);
    for rep in 0..replications {
        let mut rng = substream(4000, rep);
        let data = continuous_null(200, &mut rng);
        let report = chi2_test(&data, WeightingMode::SampleSizeWeighted, &k, 0.05).unwrap();
        stats.push(report.statistic);
    }

    // plug-in law from an independent large sample
    let mut rng = substream(5000, 0);
    let data = continuous_null(200, &mut rng);
    let rf = rank_transforms(&data, WeightingMode::SampleSizeWeighted).unwrap();
    let q = relative_effects(&rf);
    let fit = fit_adjustment(&rf, &q).unwrap();
    let s_hat = shat(&rf, &q).unwrap();
    let sigma = &fit.gamma_matrix * s_hat * fit.gamma_matrix.transpose();
    let t = projection_t(&k);
    let ts = &t * &sigma;
    let f_hat = ts.trace().powi(2) / (&ts * &ts).trace();
    let mut law_rng = substream(6000, 0);
    let law = weighted_chisq_null_sample(&t, &sigma, f_hat, 4000, &mut law_rng).unwrap();

    let d = ks_distance(&stats, &law);
    assert!(d <= 0.05, "KS distance {d}");
}
