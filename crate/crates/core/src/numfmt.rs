//! Lossless decimal text for `f64`: 17 significant digits in scientific
//! notation, e.g. `1.0000000000000000e-1`.

use serde::ser::{Error as _, SerializeSeq};
use serde::{Serialize, Serializer};
use serde_json::value::RawValue;

pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

struct Exact(f64);

impl Serialize for Exact {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if !self.0.is_finite() {
            return Err(S::Error::custom(format!(
                "cannot write non-finite number {}",
                self.0
            )));
        }
        RawValue::from_string(format_f64(self.0))
            .map_err(S::Error::custom)?
            .serialize(s)
    }
}

pub fn ser_f64<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    Exact(*v).serialize(s)
}

pub fn ser_vec<S: Serializer>(v: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for &x in v {
        seq.serialize_element(&Exact(x))?;
    }
    seq.end()
}

pub fn ser_mat<S: Serializer>(m: &[Vec<f64>], s: S) -> std::result::Result<S::Ok, S::Error> {
    struct Row<'a>(&'a [f64]);
    impl Serialize for Row<'_> {
        fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
            ser_vec(self.0, s)
        }
    }
    let mut seq = s.serialize_seq(Some(m.len()))?;
    for row in m {
        seq.serialize_element(&Row(row))?;
    }
    seq.end()
}
