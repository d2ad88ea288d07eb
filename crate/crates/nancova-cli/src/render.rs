//! Human-readable rendering. Effects are rounded to two decimals here;
//! serialized output always carries full precision.

use nancova::simgen::SimResult;
use nancova::{Method, TestReport, WeightingMode};

fn weighting_name(mode: WeightingMode) -> &'static str {
    match mode {
        WeightingMode::SampleSizeWeighted => "weighted",
        WeightingMode::Unweighted => "unweighted",
    }
}

pub fn render_report(report: &TestReport) -> String {
    let e = &report.effects;
    let mut out = String::new();
    out.push_str("NANCOVA test report\n");
    out.push_str(&format!(
        "method:     {} ({})\n",
        report.method,
        report.method.describe()
    ));
    out.push_str(&format!(
        "weighting:  {}    alpha: {}\n",
        weighting_name(report.weighting),
        report.alpha
    ));
    let total: usize = e.sizes.iter().sum();
    out.push_str(&format!(
        "groups:     {}    N = {total}, covariates: {}\n",
        e.labels
            .iter()
            .zip(&e.sizes)
            .map(|(l, n)| format!("{l} (n={n})"))
            .collect::<Vec<_>>()
            .join(", "),
        e.qhat[0].len() - 1
    ));

    out.push_str("\nrelative effects (qhat)\n");
    let comps = e.qhat[0].len();
    let mut header = format!("  {:<12} {:>8}", "group", "outcome");
    for r in 1..comps {
        header.push_str(&format!(" {:>8}", format!("cov{r}")));
    }
    out.push_str(&header);
    out.push('\n');
    for (label, row) in e.labels.iter().zip(&e.qhat) {
        out.push_str(&format!("  {label:<12}"));
        for q in row {
            out.push_str(&format!(" {q:>8.2}"));
        }
        out.push('\n');
    }
    if comps > 1 {
        let imbalance = e
            .qhat
            .iter()
            .flat_map(|row| row[1..].iter().map(|q| (q - 0.5).abs()))
            .fold(0.0f64, f64::max);
        out.push_str(&format!(
            "covariate balance: max |qhat - 0.5| = {imbalance:.2} (should be small under randomization)\n"
        ));
    }

    if let Some(gamma) = &report.gamma {
        out.push_str(&format!(
            "\ngamma:            {}\n",
            gamma
                .iter()
                .map(|g| format!("{g:.4}"))
                .collect::<Vec<_>>()
                .join(", ")
        ));
    }
    out.push_str(&format!(
        "adjusted effects: {}\n",
        e.labels
            .iter()
            .zip(&e.adjusted)
            .map(|(l, w)| format!("{l} {w:.2}"))
            .collect::<Vec<_>>()
            .join(", ")
    ));

    let statistic_name = match report.method {
        Method::FUnadjusted | Method::FNancova => "A_N / f",
        _ => "A_N",
    };
    out.push_str(&format!(
        "\nstatistic:        {statistic_name} = {:.6}\n",
        report.statistic
    ));
    match report.df2 {
        Some(df2) => out.push_str(&format!(
            "df:               ({:.4}, {:.4})\n",
            report.df1, df2
        )),
        None => out.push_str(&format!("df:               {:.4}\n", report.df1)),
    }
    out.push_str(&format!("p-value:          {:.6}\n", report.p_value));
    if let Some(critical) = report.critical_value {
        out.push_str(&format!(
            "critical value:   {critical:.6} (empirical {:.0}% bootstrap quantile)\n",
            100.0 * (1.0 - report.alpha)
        ));
    }
    out.push_str(&format!(
        "decision:         {} H0 at alpha = {}\n",
        if report.rejects() { "reject" } else { "do not reject" },
        report.alpha
    ));
    if let Some(n_boot) = report.n_boot {
        out.push_str(&format!(
            "bootstrap:        {n_boot} draws, seed {}, degenerate redrawn: {}\n",
            report.seed.unwrap_or(0),
            report.degenerate_draws.unwrap_or(0)
        ));
    }
    out
}

pub fn render_sim_table(result: &SimResult) -> String {
    let sc = &result.scenario;
    let mut out = String::new();
    out.push_str(&format!(
        "scenario: {:?} ({}), sizes {}, alpha {}, weighting {}\n",
        sc.kind,
        if result.is_null { "null" } else { "power" },
        sc.sizes
            .iter()
            .map(|n| n.to_string())
            .collect::<Vec<_>>()
            .join(":"),
        sc.alpha,
        weighting_name(sc.weighting)
    ));
    out.push_str(&format!(
        "runs: {} simulations x {} bootstrap draws, seed {}\n",
        sc.n_sim, sc.n_boot, sc.seed
    ));
    out.push_str(&format!(
        "95% Wald interval for the nominal rate: [{:.2}, {:.2}]%\n",
        result.wald_interval_percent.0, result.wald_interval_percent.1
    ));
    if result.errored_runs > 0 {
        out.push_str(&format!("errored runs: {}\n", result.errored_runs));
    }
    out.push('\n');
    out.push_str(&format!(
        "{:<6} {:>10} {:>8} {:>6} {:>8} {:>12}\n",
        "method", "rejections", "rate%", "se%", "wald", "mean ms"
    ));
    for m in &result.methods {
        let verdict = match m.within_wald {
            Some(true) => "within",
            Some(false) => "outside",
            None => "-",
        };
        out.push_str(&format!(
            "{:<6} {:>10} {:>8.2} {:>6.2} {:>8} {:>12.3}\n",
            m.method.as_str(),
            m.rejections,
            m.rate_percent,
            m.se_percent,
            verdict,
            m.mean_runtime_ms
        ));
    }
    out
}

/// CSV rows mirroring the rendered table.
pub fn sim_result_csv(result: &SimResult) -> String {
    let mut out =
        String::from("method,rejections,completed,rate_percent,se_percent,within_wald,mean_runtime_ms\n");
    for m in &result.methods {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            m.method.as_str(),
            m.rejections,
            m.completed,
            m.rate_percent,
            m.se_percent,
            m.within_wald.map(|w| w.to_string()).unwrap_or_default(),
            m.mean_runtime_ms
        ));
    }
    out
}
