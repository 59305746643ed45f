use thiserror::Error;

pub type Result<T> = std::result::Result<T, GwError>;

/// Errors raised by the engine.
///
/// Variants fall into two families, which the CLI maps onto exit codes:
/// input/configuration problems and numerical failures.
#[derive(Debug, Error)]
pub enum GwError {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("non-finite coordinate at row {row}")]
    NonFiniteCoordinate { row: usize },

    #[error("degenerate bandwidth: {0}")]
    DegenerateBandwidth(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("degenerate window{}: weights sum to zero", at_location(*.location))]
    DegenerateWindow { location: Option<usize> },

    #[error("correlation undefined{}: zero local standard deviation", at_location(*.location))]
    UndefinedCorrelation { location: Option<usize> },

    #[error(
        "singular local design at calibration point(s) {locations:?}; try a larger bandwidth"
    )]
    SingularLocalFit { locations: Vec<usize> },

    #[error("AICc undefined: n - 2 - tr(S) = {denominator} is not positive")]
    AiccUndefined { denominator: f64 },

    #[error("class '{class}' has no weight in the window at calibration point {location}")]
    EmptyClassWindow { location: usize, class: String },

    #[error("no valid bandwidth: objective is infinite over the whole search range")]
    NoValidBandwidth,

    #[error("numerical failure at calibration point {location}: {message}")]
    Numeric { location: usize, message: String },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl GwError {
    /// True for failures that stem from the numerics rather than from the
    /// caller's input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            GwError::DegenerateWindow { .. }
                | GwError::UndefinedCorrelation { .. }
                | GwError::SingularLocalFit { .. }
                | GwError::AiccUndefined { .. }
                | GwError::EmptyClassWindow { .. }
                | GwError::NoValidBandwidth
                | GwError::Numeric { .. }
        )
    }
}

fn at_location(location: Option<usize>) -> String {
    location.map(|i| format!(" at calibration point {i}")).unwrap_or_default()
}

pub(crate) fn input<T>(msg: impl Into<String>) -> Result<T> {
    Err(GwError::Input(msg.into()))
}
