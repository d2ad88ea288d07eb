use nancova::NancovaError;

/// CLI failure classes; each maps to one exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags or flag combinations (exit 1).
    Usage(String),
    /// Missing files, parse failures, schema or validation problems (exit 2).
    Data(String),
    /// Degenerate statistics: singular covariate blocks, vanishing variance,
    /// collapsed bootstrap draws (exit 3).
    Degenerate(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Degenerate(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Degenerate(m) => m,
        }
    }
}

impl From<NancovaError> for CliError {
    fn from(e: NancovaError) -> Self {
        match e {
            NancovaError::DegenerateCovariate(_) => CliError::Degenerate(format!(
                "{e}\nhint: a covariate is constant or collinear; drop it (or merge \
                 categories) and rerun"
            )),
            NancovaError::DegenerateVariance(_)
            | NancovaError::DegenerateDraw(_)
            | NancovaError::TooManyDegenerateDraws { .. }
            | NancovaError::SimulationFailed { .. } => CliError::Degenerate(e.to_string()),
            NancovaError::InvalidInput(_) | NancovaError::InfeasibleCorrelation { .. } => {
                CliError::Data(e.to_string())
            }
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.message())
    }
}
