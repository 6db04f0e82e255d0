use std::cmp::Ordering;
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Feature extraction technique.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Bkp,
    Lbp,
    Hc,
    Mc,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Bkp, Method::Lbp, Method::Hc, Method::Mc];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Bkp => "bkp",
            Method::Lbp => "lbp",
            Method::Hc => "hc",
            Method::Mc => "mc",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "bkp" => Ok(Method::Bkp),
            "lbp" => Ok(Method::Lbp),
            "hc" => Ok(Method::Hc),
            "mc" => Ok(Method::Mc),
            other => Err(Error::InvalidInput(format!(
                "unknown method {other:?} (expected bkp, lbp, hc or mc)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub method: Method,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(method: Method, values: Vec<f64>) -> Self {
        Self { method, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Class label order: numerically when both labels parse as numbers
/// (`"2.25"` before `"10"`), otherwise by text. Numbers sort first.
pub fn compare_labels(a: &str, b: &str) -> Ordering {
    match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) if x.is_finite() && y.is_finite() => x.total_cmp(&y).then_with(|| a.cmp(b)),
        (Ok(x), Err(_)) if x.is_finite() => Ordering::Less,
        (Err(_), Ok(y)) if y.is_finite() => Ordering::Greater,
        _ => a.cmp(b),
    }
}

/// Distinct labels in [`compare_labels`] order.
pub fn label_alphabet<S: AsRef<str>>(labels: &[S]) -> Vec<String> {
    let mut out: Vec<String> = labels.iter().map(|l| l.as_ref().to_string()).collect();
    out.sort_by(|a, b| compare_labels(a, b));
    out.dedup();
    out
}

/// Splits `0..len` into `n` consecutive ranges of `len / n` items, the last
/// one absorbing the remainder.
pub(crate) fn grid_ranges(len: usize, n: usize) -> Vec<Range<usize>> {
    let step = len / n;
    (0..n)
        .map(|i| {
            let start = i * step;
            let end = if i + 1 == n { len } else { start + step };
            start..end
        })
        .collect()
}
