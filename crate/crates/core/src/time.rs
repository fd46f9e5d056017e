//! Simulation time as exact integer picoseconds.
//!
//! All time quantities in the simulator (module timesteps, sample
//! timestamps, interconnect latencies, event times) are [`SimTime`]
//! values. Integer picoseconds keep lcm/divisibility logic in the
//! scheduler exact; a `u64` covers runs up to ~10^6 simulated seconds.

use std::fmt;
use std::ops::{Add, AddAssign, Sub};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A point in (or span of) simulated time, in picoseconds.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SimTime(u64);

pub const PS_PER_NS: u64 = 1_000;
pub const PS_PER_US: u64 = 1_000_000;
pub const PS_PER_MS: u64 = 1_000_000_000;
pub const PS_PER_S: u64 = 1_000_000_000_000;

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub const fn from_ps(ps: u64) -> Self {
        SimTime(ps)
    }

    pub const fn from_ns(ns: u64) -> Self {
        SimTime(ns * PS_PER_NS)
    }

    pub const fn from_us(us: u64) -> Self {
        SimTime(us * PS_PER_US)
    }

    pub const fn from_ms(ms: u64) -> Self {
        SimTime(ms * PS_PER_MS)
    }

    pub const fn from_secs(s: u64) -> Self {
        SimTime(s * PS_PER_S)
    }

    pub const fn as_ps(self) -> u64 {
        self.0
    }

    pub fn checked_add(self, rhs: SimTime) -> Option<SimTime> {
        self.0.checked_add(rhs.0).map(SimTime)
    }

    pub fn checked_mul(self, k: u64) -> Option<SimTime> {
        self.0.checked_mul(k).map(SimTime)
    }

    /// True iff `self` is an exact multiple of `other`.
    pub fn is_multiple_of(self, other: SimTime) -> bool {
        other.0 != 0 && self.0.is_multiple_of(other.0)
    }

    /// Exact division; `None` when not divisible or divisor is zero.
    pub fn exact_div(self, other: SimTime) -> Option<u64> {
        if other.0 == 0 || !self.0.is_multiple_of(other.0) {
            None
        } else {
            Some(self.0 / other.0)
        }
    }

    /// Least common multiple, `None` on overflow.
    pub fn lcm(self, other: SimTime) -> Option<SimTime> {
        if self.0 == 0 || other.0 == 0 {
            return Some(SimTime(0));
        }
        let g = gcd(self.0, other.0);
        let wide = (self.0 / g) as u128 * other.0 as u128;
        if wide > u64::MAX as u128 {
            None
        } else {
            Some(SimTime(wide as u64))
        }
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        self.0 += rhs.0;
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl fmt::Debug for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ps", self.0)
    }
}

/// Raw picoseconds with a `ps` suffix; reports and logs rely on this
/// being unambiguous and byte-stable.
impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ps", self.0)
    }
}

/// Renders in the largest unit that divides the value exactly
/// (`4ms`, `10ns`, ...). Used when writing model files.
pub fn canonical_duration(t: SimTime) -> String {
    let ps = t.as_ps();
    for (unit, factor) in [
        ("s", PS_PER_S),
        ("ms", PS_PER_MS),
        ("us", PS_PER_US),
        ("ns", PS_PER_NS),
    ] {
        if ps != 0 && ps.is_multiple_of(factor) {
            return format!("{}{}", ps / factor, unit);
        }
    }
    format!("{}ps", ps)
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TimeParseError {
    #[error("empty duration")]
    Empty,
    #[error("missing unit suffix in `{0}` (expected ps|ns|us|ms|s)")]
    MissingUnit(String),
    #[error("bad numeric part in `{0}`")]
    BadNumber(String),
    #[error("duration `{0}` is not an exact number of picoseconds")]
    NotExact(String),
    #[error("duration `{0}` overflows the time range")]
    Overflow(String),
}

/// Parses `"100ms"`, `"10ns"`, `"0.5ms"`, ... into exact picoseconds.
///
/// Decimal fractions are accepted only when the unit conversion stays
/// exact (`0.5ms` is fine, `0.3ns` is not).
impl FromStr for SimTime {
    type Err = TimeParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() {
            return Err(TimeParseError::Empty);
        }
        let unit_start = s
            .find(|c: char| !(c.is_ascii_digit() || c == '.'))
            .ok_or_else(|| TimeParseError::MissingUnit(s.to_string()))?;
        let (num, unit) = s.split_at(unit_start);
        let factor = match unit {
            "ps" => 1,
            "ns" => PS_PER_NS,
            "us" => PS_PER_US,
            "ms" => PS_PER_MS,
            "s" => PS_PER_S,
            _ => return Err(TimeParseError::MissingUnit(s.to_string())),
        };
        if num.is_empty() {
            return Err(TimeParseError::BadNumber(s.to_string()));
        }
        let (int_part, frac_part) = match num.split_once('.') {
            Some((i, f)) => (i, f),
            None => (num, ""),
        };
        if int_part.chars().any(|c| !c.is_ascii_digit())
            || frac_part.chars().any(|c| !c.is_ascii_digit())
            || (int_part.is_empty() && frac_part.is_empty())
        {
            return Err(TimeParseError::BadNumber(s.to_string()));
        }
        let int_val: u128 = if int_part.is_empty() {
            0
        } else {
            int_part
                .parse()
                .map_err(|_| TimeParseError::BadNumber(s.to_string()))?
        };
        let mut total = int_val
            .checked_mul(factor as u128)
            .ok_or_else(|| TimeParseError::Overflow(s.to_string()))?;
        // fraction: digit d at position i contributes d * factor / 10^(i+1)
        let mut scale = factor as u128;
        for ch in frac_part.chars() {
            if !scale.is_multiple_of(10) {
                if ch != '0' {
                    return Err(TimeParseError::NotExact(s.to_string()));
                }
                continue;
            }
            scale /= 10;
            let d = ch.to_digit(10).unwrap() as u128;
            total = total
                .checked_add(d * scale)
                .ok_or_else(|| TimeParseError::Overflow(s.to_string()))?;
        }
        if total > u64::MAX as u128 {
            return Err(TimeParseError::Overflow(s.to_string()));
        }
        Ok(SimTime(total as u64))
    }
}

impl Serialize for SimTime {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&canonical_duration(*self))
    }
}

impl<'de> Deserialize<'de> for SimTime {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
