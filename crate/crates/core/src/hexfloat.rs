//! Lossless text encoding of `f64` values as the 16 hex digits of their IEEE-754
//! bit pattern. Used by checkpoints so that a reload is bit-exact.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serializer};

pub fn encode(v: f64) -> String {
    format!("{:016x}", v.to_bits())
}

pub fn decode(s: &str) -> Result<f64, String> {
    if s.len() != 16 {
        return Err(format!("expected 16 hex digits, got `{s}`"));
    }
    u64::from_str_radix(s, 16)
        .map(f64::from_bits)
        .map_err(|e| format!("bad hex float `{s}`: {e}"))
}

pub mod scalar {
    use super::*;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&encode(*v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        let s = String::deserialize(d)?;
        decode(&s).map_err(D::Error::custom)
    }
}

pub mod vec {
    use super::*;
    use serde::ser::SerializeSeq;

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(v.len()))?;
        for x in v {
            seq.serialize_element(&encode(*x))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let raw = Vec::<String>::deserialize(d)?;
        raw.iter()
            .map(|s| decode(s).map_err(D::Error::custom))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn known_patterns() {
        assert_eq!(encode(1.0), "3ff0000000000000");
        assert_eq!(encode(-0.0), "8000000000000000");
        assert!(decode("3ff").is_err());
        assert!(decode("zzzzzzzzzzzzzzzz").is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(bits in any::<u64>()) {
            let v = f64::from_bits(bits);
            prop_assert_eq!(decode(&encode(v)).unwrap().to_bits(), bits);
        }
    }
}
