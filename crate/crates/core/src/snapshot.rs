//! Lossless parameter snapshots.
//!
//! Parameters are written as C99-style hexadecimal float literals
//! (`0x1.921fb54442d18p+1`), which round-trip every finite f64 exactly and
//! stay readable in diffs. Snapshots are JSON objects mapping named groups
//! to arrays of hex strings; key order is fixed by a BTreeMap so output is
//! byte-stable.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Formats a finite f64 as a C99 hex-float literal.
pub fn to_hex_float(v: f64) -> String {
    if v == 0.0 {
        return if v.is_sign_negative() {
            "-0x0p+0".to_string()
        } else {
            "0x0p+0".to_string()
        };
    }
    assert!(v.is_finite(), "non-finite value in snapshot: {v}");
    let bits = v.to_bits();
    let sign = if bits >> 63 == 1 { "-" } else { "" };
    let biased_exp = ((bits >> 52) & 0x7ff) as i64;
    let mantissa = bits & 0xf_ffff_ffff_ffff;
    let (lead, exp, mant) = if biased_exp == 0 {
        // subnormal: value = 0.mantissa × 2^-1022; normalize the leading bit
        let shift = mantissa.leading_zeros() as i64 - 11;
        let m = (mantissa << shift) & 0xf_ffff_ffff_ffff;
        (1u8, -1022 - shift, m)
    } else {
        (1u8, biased_exp - 1023, mantissa)
    };
    let mut hex = format!("{mant:013x}");
    while hex.len() > 1 && hex.ends_with('0') {
        hex.pop();
    }
    if mant == 0 {
        format!("{sign}0x{lead}p{exp:+}")
    } else {
        format!("{sign}0x{lead}.{hex}p{exp:+}")
    }
}

/// Parses a C99 hex-float literal back to f64, exactly.
pub fn from_hex_float(s: &str) -> Result<f64> {
    let bad = || Error::Domain(format!("invalid hex float: {s:?}"));
    let (sign, rest) = match s.strip_prefix('-') {
        Some(r) => (-1.0f64, r),
        None => (1.0, s.strip_prefix('+').unwrap_or(s)),
    };
    let rest = rest
        .strip_prefix("0x")
        .or_else(|| rest.strip_prefix("0X"))
        .ok_or_else(bad)?;
    let (mant_str, exp_str) = rest
        .split_once(['p', 'P'])
        .ok_or_else(bad)?;
    let exp: i32 = exp_str.parse().map_err(|_| bad())?;
    let (int_part, frac_part) = match mant_str.split_once('.') {
        Some((i, f)) => (i, f),
        None => (mant_str, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    let mut value = 0.0f64;
    for c in int_part.chars() {
        let d = c.to_digit(16).ok_or_else(bad)? as f64;
        value = value * 16.0 + d;
    }
    let mut scale = 1.0 / 16.0;
    for c in frac_part.chars() {
        let d = c.to_digit(16).ok_or_else(bad)? as f64;
        value += d * scale;
        scale /= 16.0;
    }
    Ok(sign * value * (exp as f64).exp2())
}

/// Named parameter groups, serialized as hex-float strings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Snapshot {
    pub groups: BTreeMap<String, Vec<String>>,
}

impl Snapshot {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, values: &[f64]) {
        self.groups.insert(
            name.to_string(),
            values.iter().map(|&v| to_hex_float(v)).collect(),
        );
    }

    pub fn get(&self, name: &str) -> Result<Vec<f64>> {
        let strs = self
            .groups
            .get(name)
            .ok_or_else(|| Error::Usage(format!("snapshot group {name:?} missing")))?;
        strs.iter().map(|s| from_hex_float(s)).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("snapshot serialization")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Domain(format!("snapshot parse: {e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn known_literals() {
        assert_eq!(to_hex_float(1.0), "0x1p+0");
        assert_eq!(to_hex_float(-2.0), "-0x1p+1");
        assert_eq!(to_hex_float(0.0), "0x0p+0");
        assert_eq!(to_hex_float(std::f64::consts::PI), "0x1.921fb54442d18p+1");
        assert_eq!(from_hex_float("0x1.8p+1").unwrap(), 3.0);
        assert_eq!(from_hex_float("-0x1.4p-2").unwrap(), -0.3125);
    }

    #[test]
    fn parse_errors() {
        for bad in ["", "1.5", "0x", "0xp+0", "0x1.zp+0", "0x1p", "0x1p+"] {
            assert!(from_hex_float(bad).is_err(), "{bad:?} should fail");
        }
    }

    #[test]
    fn snapshot_roundtrip_through_json() {
        let mut s = Snapshot::new();
        s.insert("layer0", &[1.5, -0.25, 1e-300, f64::MIN_POSITIVE]);
        s.insert("tails", &[0.1234567890123456789, -7.0]);
        let json = s.to_json();
        let back = Snapshot::from_json(&json).unwrap();
        assert_eq!(back.get("layer0").unwrap()[2], 1e-300);
        assert_eq!(
            back.get("tails").unwrap(),
            s.get("tails").unwrap()
        );
        assert_eq!(back, s);
        // byte stability
        assert_eq!(back.to_json(), json);
    }

    proptest! {
        #[test]
        fn hex_roundtrip_is_exact(bits in any::<u64>()) {
            let v = f64::from_bits(bits);
            prop_assume!(v.is_finite());
            let s = to_hex_float(v);
            let back = from_hex_float(&s).unwrap();
            prop_assert_eq!(v.to_bits(), back.to_bits(), "{} -> {} -> {}", v, s, back);
        }
    }
}
