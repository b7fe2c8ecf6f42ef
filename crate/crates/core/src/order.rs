//! Renyi orders and norm orders.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Order of a Renyi divergence.
///
/// `OnePlus` is the `alpha -> 1+` limit (the KL divergence).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RenyiOrder {
    OnePlus,
    Finite(f64),
    Infinity,
}

impl RenyiOrder {
    /// Builds a finite order, rejecting `alpha <= 1` and NaN.
    pub fn finite(alpha: f64) -> Result<Self> {
        if alpha.is_nan() || alpha <= 1.0 {
            return Err(Error::domain(format!("Renyi order must exceed 1, got {alpha}")));
        }
        if alpha.is_infinite() {
            return Ok(RenyiOrder::Infinity);
        }
        Ok(RenyiOrder::Finite(alpha))
    }

    /// Numeric value, with `OnePlus` mapped to 1.
    pub fn value(self) -> f64 {
        match self {
            RenyiOrder::OnePlus => 1.0,
            RenyiOrder::Finite(a) => a,
            RenyiOrder::Infinity => f64::INFINITY,
        }
    }
}

impl fmt::Display for RenyiOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RenyiOrder::OnePlus => f.write_str("1+"),
            RenyiOrder::Finite(a) => write!(f, "{a}"),
            RenyiOrder::Infinity => f.write_str("inf"),
        }
    }
}

impl FromStr for RenyiOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "1+" | "one_plus" => Ok(RenyiOrder::OnePlus),
            "inf" | "infinity" => Ok(RenyiOrder::Infinity),
            other => {
                let a: f64 = other
                    .parse()
                    .map_err(|_| Error::param(format!("bad Renyi order {other:?}")))?;
                RenyiOrder::finite(a)
            }
        }
    }
}

impl Serialize for RenyiOrder {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            RenyiOrder::Finite(a) => s.serialize_f64(*a),
            other => s.serialize_str(&other.to_string()),
        }
    }
}

impl<'de> Deserialize<'de> for RenyiOrder {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        let parsed = match &v {
            serde_json::Value::Number(n) => n
                .as_f64()
                .ok_or_else(|| Error::param("bad number"))
                .and_then(RenyiOrder::finite),
            serde_json::Value::String(s) => s.parse(),
            _ => Err(Error::param("Renyi order must be a number or string")),
        };
        parsed.map_err(serde::de::Error::custom)
    }
}

/// The `d` of an l_d norm, `1 <= d <= inf`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct NormOrder(f64);

impl NormOrder {
    pub const ONE: NormOrder = NormOrder(1.0);
    pub const TWO: NormOrder = NormOrder(2.0);
    pub const INFINITY: NormOrder = NormOrder(f64::INFINITY);

    pub fn new(d: f64) -> Result<Self> {
        if d.is_nan() || d < 1.0 {
            return Err(Error::domain(format!("norm order must be in [1, inf], got {d}")));
        }
        Ok(NormOrder(d))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }

    /// `||v||_d`.
    pub fn norm(self, v: &[f64]) -> f64 {
        let d = self.0;
        if d.is_infinite() {
            v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
        } else if d == 1.0 {
            v.iter().map(|x| x.abs()).sum()
        } else if d == 2.0 {
            v.iter().map(|x| x * x).sum::<f64>().sqrt()
        } else {
            // Scale by the max entry so large d does not overflow.
            let scale = v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()));
            if scale == 0.0 {
                return 0.0;
            }
            scale * v.iter().map(|x| (x.abs() / scale).powf(d)).sum::<f64>().powf(1.0 / d)
        }
    }

    /// `||a - b||_d`.
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        self.norm(&diff)
    }
}

impl fmt::Display for NormOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_infinite() {
            f.write_str("inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl FromStr for NormOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" | "infinity" => Ok(NormOrder::INFINITY),
            other => {
                let d: f64 = other
                    .parse()
                    .map_err(|_| Error::param(format!("bad norm order {other:?}")))?;
                NormOrder::new(d)
            }
        }
    }
}

impl Serialize for NormOrder {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for NormOrder {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        let parsed = match &v {
            serde_json::Value::Number(n) => n
                .as_f64()
                .ok_or_else(|| Error::param("bad number"))
                .and_then(NormOrder::new),
            serde_json::Value::String(s) => s.parse(),
            _ => Err(Error::param("norm order must be a number or \"inf\"")),
        };
        parsed.map_err(serde::de::Error::custom)
    }
}
