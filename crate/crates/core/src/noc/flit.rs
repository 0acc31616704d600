//! 64-bit flit payloads.

use serde::{Deserialize, Serialize};

use crate::ensemble::Code;

/// A partial sum travelling towards the co-processor.
///
/// Payload layout, least significant first: value (32), class (8), batch (8),
/// tag (16). The tag is the sample index modulo `2^16`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LogitFlit {
    pub value: i32,
    pub class: u8,
    pub batch: u8,
    pub tag: u16,
}

impl LogitFlit {
    pub fn pack(&self) -> u64 {
        (self.value as u32 as u64)
            | (self.class as u64) << 32
            | (self.batch as u64) << 40
            | (self.tag as u64) << 48
    }

    pub fn unpack(bits: u64) -> Self {
        LogitFlit {
            value: bits as u32 as i32,
            class: (bits >> 32) as u8,
            batch: (bits >> 40) as u8,
            tag: (bits >> 48) as u16,
        }
    }
}

/// Up to `64 / n_bits` feature codes broadcast towards the cores. `offset` is the
/// header giving the feature index of the first code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureFlit {
    pub offset: u16,
    pub payload: u64,
}

impl FeatureFlit {
    pub fn pack(offset: usize, codes: &[Code], n_bits: u8) -> Self {
        assert!(codes.len() * n_bits as usize <= 64, "too many codes for one flit");
        let mask = (1u64 << n_bits) - 1;
        let payload = codes
            .iter()
            .enumerate()
            .fold(0u64, |acc, (i, &c)| acc | ((c as u64 & mask) << (i * n_bits as usize)));
        FeatureFlit {
            offset: offset as u16,
            payload,
        }
    }

    pub fn unpack(&self, count: usize, n_bits: u8) -> Vec<Code> {
        let mask = (1u64 << n_bits) - 1;
        (0..count)
            .map(|i| ((self.payload >> (i * n_bits as usize)) & mask) as Code)
            .collect()
    }

    /// Splits a code vector into flits.
    pub fn packetize(codes: &[Code], n_bits: u8, per_flit: usize) -> Vec<FeatureFlit> {
        codes
            .chunks(per_flit)
            .enumerate()
            .map(|(i, chunk)| FeatureFlit::pack(i * per_flit, chunk, n_bits))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Flit {
    Feature(FeatureFlit),
    Logit(LogitFlit),
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn logit_round_trip(value: i32, class: u8, batch: u8, tag: u16) {
            let f = LogitFlit { value, class, batch, tag };
            prop_assert_eq!(LogitFlit::unpack(f.pack()), f);
        }

        #[test]
        fn feature_round_trip(codes in prop::collection::vec(0u16..256, 1..140)) {
            let flits = FeatureFlit::packetize(&codes, 8, 8);
            prop_assert_eq!(flits.len(), codes.len().div_ceil(8));
            let mut back = Vec::new();
            for f in &flits {
                let n = (codes.len() - f.offset as usize).min(8);
                back.extend(f.unpack(n, 8));
            }
            prop_assert_eq!(back, codes);
        }
    }
}
