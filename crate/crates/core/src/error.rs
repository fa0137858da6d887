use thiserror::Error;

/// Errors raised by model construction, reformulation and certificate checks.
///
/// Solver outcomes (infeasible, unbounded, iteration limits) are reported
/// through status enums on the solution types, not through this type.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        got: usize,
    },

    #[error("polynomial degree {degree} exceeds the supported maximum {max}")]
    DegreeExceeded { degree: u32, max: u32 },

    #[error("variable index {index} out of range for {num_vars} variables")]
    VariableOutOfRange { index: usize, num_vars: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid instance field `{field}`: {message}")]
    InvalidInstance { field: String, message: String },

    #[error("point is infeasible: violation {violation:.3e} exceeds {tolerance:.1e}")]
    InfeasiblePoint { violation: f64, tolerance: f64 },

    #[error("enumeration bound exceeded: {pairs} complementarity pairs (max {max})")]
    EnumerationBound { pairs: usize, max: usize },

    #[error("certificate mapping residual {residual:.3e} exceeds {tolerance:.1e}")]
    MappingResidual { residual: f64, tolerance: f64 },

    #[error("problem structure: {0}")]
    Structure(String),
}

impl Error {
    pub(crate) fn dim(context: impl Into<String>, expected: usize, got: usize) -> Self {
        Error::DimensionMismatch {
            context: context.into(),
            expected,
            got,
        }
    }

    pub(crate) fn instance(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::InvalidInstance {
            field: field.into(),
            message: message.into(),
        }
    }
}

/// Best-effort name of the field a serde error message refers to.
pub(crate) fn json_field(message: &str) -> String {
    for marker in ["unknown field `", "missing field `", "field `"] {
        if let Some(start) = message.find(marker) {
            let rest = &message[start + marker.len()..];
            if let Some(end) = rest.find('`') {
                return rest[..end].to_string();
            }
        }
    }
    "<document>".to_string()
}

/// Parses JSON, reporting the path of the offending field on failure.
pub(crate) fn parse_json<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(path_error)
}

/// [`parse_json`] for an already parsed document.
pub(crate) fn parse_value<T: serde::de::DeserializeOwned>(value: &serde_json::Value) -> Result<T> {
    serde_path_to_error::deserialize(value).map_err(path_error)
}

fn path_error<E: std::fmt::Display>(e: serde_path_to_error::Error<E>) -> Error {
    let msg = e.inner().to_string();
    let path = e.path().to_string();
    let field = match json_field(&msg) {
        f if f != "<document>" => match path.as_str() {
            "." | "" => f,
            p => format!("{p}.{f}"),
        },
        _ if path != "." && !path.is_empty() => path,
        f => f,
    };
    Error::instance(field, msg)
}

pub type Result<T> = std::result::Result<T, Error>;
