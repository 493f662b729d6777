//! Output formatting shared by the JSON and CSV reports: floats with six decimals.

use serde::ser::Error as _;
use serde::{Serialize, Serializer};

/// Formats `v` with six decimals.
pub fn f6<T: std::fmt::Display>(v: T) -> String {
    format!("{v:.6}")
}

/// serde helper emitting a JSON number with exactly six decimals.
pub fn fixed6<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    let n: serde_json::Number = f6(v).parse().map_err(S::Error::custom)?;
    n.serialize(s)
}

/// serde helper emitting a JSON array of six-decimal numbers.
pub fn fixed6_seq<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for x in v {
        let n: serde_json::Number = f6(x).parse().map_err(S::Error::custom)?;
        seq.serialize_element(&n)?;
    }
    seq.end()
}
