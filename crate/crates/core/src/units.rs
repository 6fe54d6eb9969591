//! Duration strings with unit suffixes (`500us`, `7ms`, `1.5s`, `250ns`).

use std::fmt;

use serde::{Deserialize, Deserializer};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DurationParseError(String);

impl fmt::Display for DurationParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid duration '{}' (expected e.g. 500us, 7ms, 1.5s)", self.0)
    }
}

impl std::error::Error for DurationParseError {}

/// Parses a non-negative duration into seconds. A bare number is seconds.
pub fn parse_duration(s: &str) -> Result<f64, DurationParseError> {
    let t = s.trim();
    let err = || DurationParseError(s.to_string());
    let split = t.find(|c: char| c.is_ascii_alphabetic() || c == 'µ').unwrap_or(t.len());
    let (num, unit) = t.split_at(split);
    let value: f64 = num.trim().parse().map_err(|_| err())?;
    let per_second = match unit.trim() {
        "" | "s" => 1.0,
        "ms" => 1e3,
        "us" | "µs" => 1e6,
        "ns" => 1e9,
        _ => return Err(err()),
    };
    if !(value >= 0.0 && value.is_finite()) {
        return Err(err());
    }
    Ok(value / per_second)
}

/// Shortest exact rendering in the largest unit that keeps an integer, e.g.
/// `100ms`, `500us`; falls back to seconds.
pub fn format_duration(seconds: f64) -> String {
    for (unit, scale) in [("s", 1.0), ("ms", 1e3), ("us", 1e6), ("ns", 1e9)] {
        let v = seconds * scale;
        if (v - v.round()).abs() < 1e-9 * v.abs().max(1.0) && v.round() >= 1.0 {
            return format!("{}{unit}", v.round() as u64);
        }
    }
    format!("{seconds}s")
}

/// Accepts either a number of seconds or a suffixed string.
pub fn deserialize_seconds<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Str(String),
    }
    match Raw::deserialize(d)? {
        Raw::Num(v) if v >= 0.0 && v.is_finite() => Ok(v),
        Raw::Num(v) => Err(serde::de::Error::custom(format!("duration must be >= 0, got {v}"))),
        Raw::Str(s) => parse_duration(&s).map_err(serde::de::Error::custom),
    }
}

pub fn deserialize_opt_seconds<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
    deserialize_seconds(d).map(Some)
}
