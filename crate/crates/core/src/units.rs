//! Numbers with optional unit suffixes, e.g. `0.1ns^-1`, `4 rad/ns`, `1G`,
//! `300 K`, `1mM`. A bare number is taken in the default unit of its kind.

use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnitKind {
    /// rad/ns (also accepts ns^-1, 1/ns, /ns).
    Frequency,
    /// ns.
    Time,
    /// gauss.
    Field,
    /// kelvin.
    Temperature,
    /// mol/L.
    Concentration,
    /// Arbitrary-unit rate of the classical analog (1/s).
    ClassicalRate,
    /// Arbitrary-unit time of the classical analog (s).
    ClassicalTime,
    Dimensionless,
}

impl UnitKind {
    /// Suffix written by the canonical renderer.
    pub fn canonical(self) -> &'static str {
        match self {
            UnitKind::Frequency => "rad/ns",
            UnitKind::Time => "ns",
            UnitKind::Field => "G",
            UnitKind::Temperature => "K",
            UnitKind::Concentration => "M",
            UnitKind::ClassicalRate => "1/s",
            UnitKind::ClassicalTime => "s",
            UnitKind::Dimensionless => "",
        }
    }

    /// Accepted suffixes with their factor to the default unit.
    fn suffixes(self) -> &'static [(&'static str, f64)] {
        match self {
            UnitKind::Frequency => &[("rad/ns", 1.0), ("ns^-1", 1.0), ("1/ns", 1.0), ("/ns", 1.0)],
            UnitKind::Time => &[("ns", 1.0), ("ps", 1e-3), ("us", 1e3)],
            UnitKind::Field => &[("G", 1.0), ("mT", 10.0), ("T", 1e4)],
            UnitKind::Temperature => &[("K", 1.0)],
            UnitKind::Concentration => &[("M", 1.0), ("mM", 1e-3), ("uM", 1e-6)],
            UnitKind::ClassicalRate => &[("1/s", 1.0), ("rad/s", 1.0), ("s^-1", 1.0), ("/s", 1.0)],
            UnitKind::ClassicalTime => &[("s", 1.0)],
            UnitKind::Dimensionless => &[],
        }
    }
}

impl fmt::Display for UnitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let accepted: Vec<&str> = self.suffixes().iter().map(|(s, _)| *s).collect();
        if accepted.is_empty() {
            f.write_str("no unit")
        } else {
            f.write_str(&accepted.join(", "))
        }
    }
}

/// A parsed number in the default unit of its kind.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quantity {
    pub value: f64,
    /// Whether the text carried a unit suffix.
    pub explicit_unit: bool,
}

/// Splits `text` into the longest numeric prefix and the rest.
fn split_number(text: &str) -> Option<(f64, &str)> {
    let text = text.trim();
    let mut ends: Vec<usize> = text.char_indices().map(|(i, _)| i).skip(1).collect();
    ends.push(text.len());
    for &end in ends.iter().rev() {
        if let Ok(v) = text[..end].trim_end().parse::<f64>() {
            return Some((v, text[end..].trim()));
        }
    }
    None
}

pub fn parse_quantity(text: &str, kind: UnitKind) -> Result<Quantity, String> {
    let (value, suffix) = split_number(text).ok_or_else(|| format!("'{}' is not a number", text.trim()))?;
    if !value.is_finite() {
        return Err(format!("'{}' is not finite", text.trim()));
    }
    if suffix.is_empty() {
        return Ok(Quantity {
            value,
            explicit_unit: false,
        });
    }
    kind.suffixes()
        .iter()
        .find(|(s, _)| *s == suffix)
        .map(|(_, factor)| Quantity {
            value: value * factor,
            explicit_unit: true,
        })
        .ok_or_else(|| format!("unit '{suffix}' does not match the expected unit ({kind})"))
}

/// Writes a value with the canonical suffix of its kind.
pub fn render_quantity(value: f64, kind: UnitKind) -> String {
    match kind.canonical() {
        "" => format!("{value:?}"),
        unit => format!("{value:?} {unit}"),
    }
}
