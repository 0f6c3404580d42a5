//! JSON number conventions: `+∞` travels as the string `"inf"`.

use serde_json::Value;

use crate::{Error, Result};

pub fn num(x: f64) -> Value {
    if x == f64::INFINITY {
        Value::String("inf".into())
    } else if x == f64::NEG_INFINITY {
        Value::String("-inf".into())
    } else {
        serde_json::Number::from_f64(x).map(Value::Number).unwrap_or(Value::Null)
    }
}

pub fn parse_num(v: &Value) -> Result<f64> {
    match v {
        Value::Number(n) => n.as_f64().ok_or_else(|| Error::Domain(format!("bad number {n}"))),
        Value::String(s) if s == "inf" => Ok(f64::INFINITY),
        Value::String(s) if s == "-inf" => Ok(f64::NEG_INFINITY),
        _ => Err(Error::Domain(format!("expected a number, got {v}"))),
    }
}

/// Serde adapter for `f64` fields that may be infinite.
pub mod inf_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_infinite() {
            s.serialize_str(if *x > 0.0 { "inf" } else { "-inf" })
        } else {
            s.serialize_f64(*x)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        super::parse_num(&v).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        for x in [0.0, 1.5, 0.1 + 0.2, f64::INFINITY, 1e-300] {
            let s = serde_json::to_string(&num(x)).unwrap();
            let v: Value = serde_json::from_str(&s).unwrap();
            assert_eq!(parse_num(&v).unwrap().to_bits(), x.to_bits());
        }
        assert_eq!(num(f64::INFINITY), Value::String("inf".into()));
    }
}
