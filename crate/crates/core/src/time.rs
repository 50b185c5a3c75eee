//! Fixed-point simulation time.
//!
//! Every event timestamp in the simulators is an integer count of
//! nanoseconds on the reference (MAC) timeline. One nanosecond is the
//! time quantum.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Smallest representable time increment, in nanoseconds.
pub const QUANTUM_NS: i64 = 1;

/// A signed duration or timestamp in integer nanoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Nanos(pub i64);

impl Nanos {
    pub const ZERO: Nanos = Nanos(0);

    pub const fn from_ns(ns: i64) -> Self {
        Nanos(ns)
    }

    pub const fn from_us(us: i64) -> Self {
        Nanos(us * 1_000)
    }

    pub const fn from_ms(ms: i64) -> Self {
        Nanos(ms * 1_000_000)
    }

    /// Rounds a (possibly fractional) nanosecond count to the nearest quantum.
    pub fn from_f64_ns(ns: f64) -> Self {
        Nanos(ns.round() as i64)
    }

    pub fn from_secs_f64(secs: f64) -> Self {
        Self::from_f64_ns(secs * 1e9)
    }

    pub const fn as_ns(self) -> i64 {
        self.0
    }

    pub fn as_f64_ns(self) -> f64 {
        self.0 as f64
    }

    pub fn as_us_f64(self) -> f64 {
        self.0 as f64 / 1e3
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e9
    }

    pub fn abs(self) -> Self {
        Nanos(self.0.abs())
    }

    pub fn is_negative(self) -> bool {
        self.0 < 0
    }
}

impl Add for Nanos {
    type Output = Nanos;
    fn add(self, rhs: Nanos) -> Nanos {
        Nanos(self.0 + rhs.0)
    }
}

impl Sub for Nanos {
    type Output = Nanos;
    fn sub(self, rhs: Nanos) -> Nanos {
        Nanos(self.0 - rhs.0)
    }
}

impl AddAssign for Nanos {
    fn add_assign(&mut self, rhs: Nanos) {
        self.0 += rhs.0;
    }
}

impl SubAssign for Nanos {
    fn sub_assign(&mut self, rhs: Nanos) {
        self.0 -= rhs.0;
    }
}

impl Neg for Nanos {
    type Output = Nanos;
    fn neg(self) -> Nanos {
        Nanos(-self.0)
    }
}

impl Mul<i64> for Nanos {
    type Output = Nanos;
    fn mul(self, rhs: i64) -> Nanos {
        Nanos(self.0 * rhs)
    }
}

impl fmt::Display for Nanos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ns", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DurationParseError {
    #[error("duration `{0}` has no unit (expected ns, us or ms)")]
    MissingUnit(String),
    #[error("duration `{0}` has unknown unit (expected ns, us or ms)")]
    UnknownUnit(String),
    #[error("duration `{0}` has an invalid number")]
    BadNumber(String),
    #[error("duration `{0}` is not a whole number of nanoseconds")]
    SubQuantum(String),
}

impl FromStr for Nanos {
    type Err = DurationParseError;

    /// Parses `"150us"`, `"9.6ms"`, `"30ns"`, `"-4.8us"`. A unit is mandatory.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        let split = t
            .find(|c: char| c.is_ascii_alphabetic())
            .ok_or_else(|| DurationParseError::MissingUnit(s.to_string()))?;
        let (num, unit) = t.split_at(split);
        let scale: i64 = match unit.trim() {
            "ns" => 1,
            "us" | "µs" => 1_000,
            "ms" => 1_000_000,
            "s" => 1_000_000_000,
            _ => return Err(DurationParseError::UnknownUnit(s.to_string())),
        };
        let num = num.trim();
        if num.is_empty() {
            return Err(DurationParseError::BadNumber(s.to_string()));
        }
        if let Ok(v) = num.parse::<i64>() {
            return Ok(Nanos(v * scale));
        }
        let v: f64 = num
            .parse()
            .map_err(|_| DurationParseError::BadNumber(s.to_string()))?;
        let ns = v * scale as f64;
        let rounded = ns.round();
        if (ns - rounded).abs() > 1e-6 {
            return Err(DurationParseError::SubQuantum(s.to_string()));
        }
        Ok(Nanos(rounded as i64))
    }
}

/// Renders with the coarsest unit that keeps the value exact.
pub fn format_duration(d: Nanos) -> String {
    let v = d.0;
    if v != 0 && v % 1_000_000 == 0 {
        format!("{}ms", v / 1_000_000)
    } else if v != 0 && v % 1_000 == 0 {
        format!("{}us", v / 1_000)
    } else {
        format!("{}ns", v)
    }
}

impl Serialize for Nanos {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&format_duration(*self))
    }
}

impl<'de> Deserialize<'de> for Nanos {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
