//! Reference-distribution CDFs via regularized incomplete gamma/beta
//! functions. Degrees of freedom may be non-integer.

use statrs::function::{beta::beta_reg, gamma::gamma_lr};

/// Chi-square CDF with (possibly fractional) degrees of freedom `df > 0`.
pub fn chi_square_cdf(x: f64, df: f64) -> f64 {
    assert!(df > 0.0, "chi_square_cdf: df must be positive");
    if x <= 0.0 {
        return 0.0;
    }
    gamma_lr(df / 2.0, x / 2.0)
}

/// F CDF with degrees of freedom `df1, df2 > 0`.
pub fn f_cdf(x: f64, df1: f64, df2: f64) -> f64 {
    assert!(df1 > 0.0 && df2 > 0.0, "f_cdf: degrees of freedom must be positive");
    if x <= 0.0 {
        return 0.0;
    }
    let t = df1 * x / (df1 * x + df2);
    beta_reg(df1 / 2.0, df2 / 2.0, t)
}
