use serde::{Deserialize, Serialize};

use super::CompileError;
use crate::acam::CellGeometry;

/// H-tree network parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NocConfig {
    pub arity: usize,
    /// Input buffer depth per router port, in flits.
    pub buffer_flits: usize,
    /// Cycles per router hop.
    pub hop_cycles: u64,
    /// Extra cycles when a router accumulates instead of forwarding.
    pub accumulate_cycles: u64,
    /// Feature flits the root can inject per cycle.
    pub injection_ports: usize,
    pub flit_bits: u32,
    /// Cycles the co-processor needs after the last logit of a sample arrives.
    pub coprocessor_cycles: u64,
}

impl Default for NocConfig {
    fn default() -> Self {
        NocConfig {
            arity: 4,
            buffer_flits: 4,
            hop_cycles: 1,
            accumulate_cycles: 1,
            injection_ports: 1,
            flit_bits: 64,
            coprocessor_cycles: 1,
        }
    }
}

impl NocConfig {
    pub fn codes_per_flit(&self, n_bits: u8) -> usize {
        (self.flit_bits / n_bits as u32) as usize
    }

    /// Feature flits per sample.
    pub fn feature_flits(&self, n_features: usize, n_bits: u8) -> usize {
        n_features.div_ceil(self.codes_per_flit(n_bits)).max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChipConfig {
    pub n_cores: usize,
    pub stacked_arrays: usize,
    pub rows_per_array: usize,
    pub queued_arrays: usize,
    pub cols_per_array: usize,
    pub n_bits: u8,
    pub memristor_bits: u8,
    pub clock_hz: f64,
    /// Cycles per array search: precharge, MSB search, LSB search, latch.
    pub lambda_cam: u64,
    pub noc: NocConfig,
}

impl Default for ChipConfig {
    fn default() -> Self {
        ChipConfig {
            n_cores: 4096,
            stacked_arrays: 2,
            rows_per_array: 128,
            queued_arrays: 2,
            cols_per_array: 65,
            n_bits: 8,
            memristor_bits: 4,
            clock_hz: 1e9,
            lambda_cam: 4,
            noc: NocConfig::default(),
        }
    }
}

impl ChipConfig {
    /// Addressable words per core, `N_words`.
    pub fn n_words(&self) -> usize {
        self.stacked_arrays * self.rows_per_array
    }

    pub fn feature_capacity(&self) -> usize {
        self.queued_arrays * self.cols_per_array
    }

    pub fn precision_doubling(&self) -> bool {
        self.n_bits == 2 * self.memristor_bits
    }

    pub fn cell_geometry(&self) -> CellGeometry {
        CellGeometry {
            m_bits: self.memristor_bits,
            doubled: self.precision_doubling(),
        }
    }

    pub fn total_rows(&self) -> usize {
        self.n_cores * self.n_words()
    }

    pub fn validate(&self) -> Result<(), CompileError> {
        let bad = |m: &str| Err(CompileError::Config(m.to_string()));
        if self.n_bits != self.memristor_bits && self.n_bits != 2 * self.memristor_bits {
            return bad("n_bits must equal memristor_bits or twice it");
        }
        if !(1..=15).contains(&self.n_bits) || self.memristor_bits > 8 {
            return bad("n_bits must be in 1..=15 and memristor_bits at most 8");
        }
        if self.stacked_arrays == 0
            || self.rows_per_array == 0
            || self.queued_arrays == 0
            || self.cols_per_array == 0
        {
            return bad("array dimensions must be positive");
        }
        if self.lambda_cam == 0 || !(self.clock_hz > 0.0) {
            return bad("lambda_cam and clock_hz must be positive");
        }
        if self.noc.arity < 2 || self.noc.buffer_flits == 0 || self.noc.injection_ports == 0 {
            return bad("noc arity must be >= 2 with nonzero buffers and injection ports");
        }
        if self.noc.flit_bits < self.n_bits as u32 {
            return bad("a flit must hold at least one code");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = ChipConfig::default();
        assert_eq!(c.n_words(), 256);
        assert_eq!(c.feature_capacity(), 130);
        assert!(c.precision_doubling());
        c.validate().unwrap();
        assert_eq!(c.noc.feature_flits(130, 8), 17);
        assert_eq!(c.noc.feature_flits(8, 8), 1);
        assert_eq!(c.noc.feature_flits(9, 8), 2);
    }

    #[test]
    fn partial_json_overrides() {
        let c: ChipConfig = serde_json::from_str(r#"{"n_cores": 64, "noc": {"arity": 2}}"#).unwrap();
        assert_eq!(c.n_cores, 64);
        assert_eq!(c.noc.arity, 2);
        assert_eq!(c.rows_per_array, 128);
        assert!(serde_json::from_str::<ChipConfig>(r#"{"cores": 1}"#).is_err());
    }

    #[test]
    fn rejects_mismatched_precision() {
        let c = ChipConfig {
            n_bits: 6,
            ..ChipConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
