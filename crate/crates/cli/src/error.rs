use std::fmt;

/// A failure with a stable machine-readable code, printed to standard
/// error as `error[code]: message`.
#[derive(Debug)]
pub struct CliError {
    pub code: &'static str,
    pub message: String,
}

impl CliError {
    pub fn new(code: &'static str, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self::new("io", message)
    }

    pub fn serialize(e: impl fmt::Display) -> Self {
        Self::new("io", format!("serialization failed: {e}"))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error[{}]: {}", self.code, self.message)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::io(e.to_string())
    }
}

impl From<sonclust::Error> for CliError {
    fn from(e: sonclust::Error) -> Self {
        use sonclust::Error as E;
        let code = match &e {
            E::Parameter(_) => "invalid-parameter",
            E::Shape { .. } => "shape-mismatch",
            E::NumericalFailure(_) => "numerical-failure",
            E::Diverged { .. } => "diverged",
            E::LineSearch { .. } => "line-search",
            E::Infeasible { .. } => "infeasible",
            E::Parse { .. } => "parse",
            E::Io(_) => "io",
        };
        Self::new(code, e.to_string())
    }
}
