use std::path::Path;

use super::Case;
use crate::error::{Error, Result};

/// Reads and validates a case in the native JSON format.
pub fn parse_case(path: impl AsRef<Path>) -> Result<Case> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Parse { path: path.to_path_buf(), line: None, message: format!("cannot read case: {e}") })?;
    parse_case_str(&text, path)
}

/// Parses case JSON held in memory; `origin` labels error messages.
pub fn parse_case_str(text: &str, origin: impl AsRef<Path>) -> Result<Case> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let case: Case = serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        let inner = e.into_inner();
        Error::Parse {
            path: origin.as_ref().to_path_buf(),
            line: Some(inner.line()),
            message: if field == "." { inner.to_string() } else { format!("field `{field}`: {inner}") },
        }
    })?;
    case.validate()?;
    Ok(case)
}

/// Serializes a case to pretty-printed JSON.
pub fn write_case(case: &Case) -> String {
    serde_json::to_string_pretty(case).expect("case serialization is infallible")
}
