//! Command implementations: parse inputs, run the requested analysis, and
//! serialize the outcome together with the resolved configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use nancova::simgen::{monte_carlo, Scenario, SimResult};
use nancova::{
    bootstrap_test, chi2_test, contrast_no_effect, f_test, Dataset, Method, TestReport,
    WeightScheme, WeightingMode,
};

use crate::data::read_dataset;
use crate::errors::CliError;
use crate::render;

/// Fully resolved configuration of one `test` invocation; echoed into the
/// report for reproducibility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub data: PathBuf,
    pub group: String,
    pub outcome: String,
    pub covariates: Vec<String>,
    pub method: Method,
    pub alpha: f64,
    pub weighting: WeightingMode,
    pub n_boot: u32,
    pub seed: Option<u64>,
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.covariates.iter().any(|c| c == &self.outcome) {
            return Err(CliError::Usage(format!(
                "outcome column '{}' also listed as a covariate",
                self.outcome
            )));
        }
        let mut seen = self.covariates.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.covariates.len() {
            return Err(CliError::Usage("duplicate covariate columns".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(CliError::Usage(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        let needs_covariates = matches!(
            self.method,
            Method::ChiSqNancova | Method::FNancova
        );
        if needs_covariates && self.covariates.is_empty() {
            return Err(CliError::Usage(format!(
                "method '{}' requires at least one covariate (use --covariates)",
                self.method
            )));
        }
        let is_bootstrap = matches!(
            self.method,
            Method::EfronBootstrap | Method::WildBootstrap
        );
        if is_bootstrap && self.n_boot == 0 {
            return Err(CliError::Usage("--boot must be >= 1".into()));
        }
        Ok(())
    }
}

/// The serialized outcome of `test`: resolved config plus the full report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOutput {
    pub config: AnalysisConfig,
    pub report: TestReport,
}

pub fn run_test(config: &AnalysisConfig) -> Result<TestOutput, CliError> {
    config.validate()?;
    let dataset = read_dataset(
        &config.data,
        &config.group,
        &config.outcome,
        &config.covariates,
    )?;
    let report = dispatch(&dataset, config)?;
    // echo the fully resolved configuration, including a generated seed
    let mut config = config.clone();
    config.seed = report.seed.or(config.seed);
    Ok(TestOutput { config, report })
}

fn dispatch(dataset: &Dataset, config: &AnalysisConfig) -> Result<TestReport, CliError> {
    let k = contrast_no_effect(dataset.group_count());
    let mode = config.weighting;
    let report = match config.method {
        Method::FUnadjusted => f_test(dataset, mode, &k, config.alpha, false),
        Method::FNancova => f_test(dataset, mode, &k, config.alpha, true),
        Method::ChiSqNancova => chi2_test(dataset, mode, &k, config.alpha),
        Method::EfronBootstrap => bootstrap_test(
            dataset,
            mode,
            &k,
            config.alpha,
            WeightScheme::Efron,
            config.n_boot,
            config.seed,
        ),
        Method::WildBootstrap => bootstrap_test(
            dataset,
            mode,
            &k,
            config.alpha,
            WeightScheme::Wild,
            config.n_boot,
            config.seed,
        ),
    }?;
    Ok(report)
}

pub fn load_scenario(path: &Path) -> Result<Scenario, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read '{}': {e}", path.display())))?;
    let scenario: Scenario = serde_json::from_str(&text)
        .map_err(|e| CliError::Data(format!("scenario schema error: {e}")))?;
    scenario.validate()?;
    Ok(scenario)
}

pub fn run_simulate(scenario: &Scenario, out: Option<&Path>) -> Result<SimResult, CliError> {
    let result = monte_carlo(scenario)?;
    if let Some(path) = out {
        std::fs::write(path, render::sim_result_csv(&result))
            .map_err(|e| CliError::Data(format!("cannot write '{}': {e}", path.display())))?;
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn config(method: Method, covariates: Vec<String>) -> AnalysisConfig {
        AnalysisConfig {
            data: PathBuf::from("unused.csv"),
            group: "arm".into(),
            outcome: "score".into(),
            covariates,
            method,
            alpha: 0.05,
            weighting: WeightingMode::SampleSizeWeighted,
            n_boot: 100,
            seed: Some(1),
        }
    }

    #[test]
    fn config_validation_catches_usage_errors() {
        let c = config(Method::FNancova, vec!["score".into()]);
        assert_eq!(c.validate().unwrap_err().exit_code(), 1);
        let c = config(Method::ChiSqNancova, vec![]);
        assert_eq!(c.validate().unwrap_err().exit_code(), 1);
        let c = config(Method::EfronBootstrap, vec!["b".into(), "b".into()]);
        assert_eq!(c.validate().unwrap_err().exit_code(), 1);
        let mut c = config(Method::FUnadjusted, vec![]);
        c.alpha = 1.5;
        assert_eq!(c.validate().unwrap_err().exit_code(), 1);
    }

    #[test]
    fn test_output_round_trips_through_json() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        file.write_all(
            b"arm,score,base\na,1,5\na,2,3\na,4,6\na,7,9\na,0,2\na,3,8\n\
              b,3,2\nb,5,4\nb,6,1\nb,8,7\nb,9,10\nb,2,0\n",
        )
        .unwrap();
        let mut c = config(Method::EfronBootstrap, vec!["base".into()]);
        c.data = file.path().to_path_buf();
        let output = run_test(&c).unwrap();
        let json = serde_json::to_string_pretty(&output).unwrap();
        let parsed: TestOutput = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed, output);
    }

    #[test]
    fn constant_covariate_surfaces_as_degenerate() {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        file.write_all(b"arm,score,base\na,1,5\na,2,5\nb,3,5\nb,5,5\n")
            .unwrap();
        let mut c = config(Method::FNancova, vec!["base".into()]);
        c.data = file.path().to_path_buf();
        let err = run_test(&c).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        assert!(err.message().contains("hint"), "{}", err.message());
    }
}
