//! Quantities with unit suffixes.
//!
//! Frequencies are ordinary frequencies nu; callers convert to angular
//! frequency with omega = 2 pi nu. Bare numbers are read in the base unit
//! of the expected dimension (Hz, m, s, amu).

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dimension {
    Frequency,
    Length,
    Time,
    Mass,
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dimension::Frequency => "frequency",
            Dimension::Length => "length",
            Dimension::Time => "time",
            Dimension::Mass => "mass",
        })
    }
}

/// A quantity as written in the config; kept verbatim so the config echo
/// re-parses to the same structure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Quantity {
    Number(f64),
    Text(String),
}

const FREE: &str = "free";

fn scale(dim: Dimension, unit: &str) -> Option<f64> {
    let s = match (dim, unit) {
        (Dimension::Frequency, "Hz") => 1.0,
        (Dimension::Frequency, "kHz") => 1e3,
        (Dimension::Frequency, "MHz") => 1e6,
        (Dimension::Frequency, "GHz") => 1e9,
        (Dimension::Length, "m") => 1.0,
        (Dimension::Length, "mm") => 1e-3,
        (Dimension::Length, "um" | "μm" | "µm") => 1e-6,
        (Dimension::Length, "nm") => 1e-9,
        (Dimension::Time, "s") => 1.0,
        (Dimension::Time, "ms") => 1e-3,
        (Dimension::Time, "us" | "μs" | "µs") => 1e-6,
        (Dimension::Time, "ns") => 1e-9,
        (Dimension::Mass, "amu" | "u") => 1.0,
        _ => return None,
    };
    Some(s)
}

impl Quantity {
    pub fn text(s: &str) -> Self {
        Quantity::Text(s.to_string())
    }

    pub fn is_free(&self) -> bool {
        matches!(self, Quantity::Text(s) if s.trim() == FREE)
    }

    /// Value in the base unit of `dim`; `field` names the config key in errors.
    pub fn value(&self, dim: Dimension, field: &str) -> Result<f64, CliError> {
        let v = match self {
            Quantity::Number(x) => *x,
            Quantity::Text(s) => {
                let s = s.trim();
                let split = s
                    .char_indices()
                    .find(|&(i, c)| (c.is_alphabetic() && c != 'e' && c != 'E') || (i > 0 && c == ' '))
                    .map_or(s.len(), |(i, _)| i);
                let (num, unit) = s.split_at(split);
                let x: f64 = num
                    .trim()
                    .parse()
                    .map_err(|_| CliError::Config(format!("{field}: cannot read a number from {s:?}")))?;
                let unit = unit.trim();
                if unit.is_empty() {
                    x
                } else {
                    let k = scale(dim, unit)
                        .ok_or_else(|| CliError::Config(format!("{field}: unit {unit:?} is not a {dim} unit")))?;
                    x * k
                }
            }
        };
        if !v.is_finite() {
            return Err(CliError::Config(format!("{field}: value must be finite")));
        }
        Ok(v)
    }

    /// Like `value`, or `None` for the literal "free".
    pub fn value_or_free(&self, dim: Dimension, field: &str) -> Result<Option<f64>, CliError> {
        if self.is_free() {
            Ok(None)
        } else {
            self.value(dim, field).map(Some)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_suffixes() {
        let f = |s: &str, d| Quantity::text(s).value(d, "x").unwrap();
        assert_eq!(f("3 MHz", Dimension::Frequency), 3e6);
        assert_eq!(f("10kHz", Dimension::Frequency), 1e4);
        assert!((f("8.8 um", Dimension::Length) - 8.8e-6).abs() < 1e-20);
        assert!((f("8.8 μm", Dimension::Length) - 8.8e-6).abs() < 1e-20);
        assert_eq!(f("1 us", Dimension::Time), 1e-6);
        assert_eq!(f("171 amu", Dimension::Mass), 171.0);
        assert_eq!(f("2.5e-6", Dimension::Time), 2.5e-6);
        assert_eq!(f("1e3 Hz", Dimension::Frequency), 1e3);
        assert_eq!(Quantity::Number(4.0).value(Dimension::Length, "x").unwrap(), 4.0);
    }

    #[test]
    fn rejects_wrong_dimension() {
        assert!(Quantity::text("3 um").value(Dimension::Frequency, "x").is_err());
        assert!(Quantity::text("fast").value(Dimension::Frequency, "x").is_err());
        assert!(Quantity::text("free").value(Dimension::Time, "x").is_err());
        assert_eq!(
            Quantity::text("free").value_or_free(Dimension::Time, "x").unwrap(),
            None
        );
    }
}
