use serde::{Deserialize, Serialize};

use super::cam::build_cam_table;
use super::chip::ChipConfig;
use super::noc_program::{configure_noc, NocProgram};
use super::place::{place_with, PlaceOptions, PlacementPlan};
use super::CompileError;
use crate::ensemble::{build_quant_grid, Ensemble, QuantizedEnsemble};

pub const PLAN_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompileOptions {
    pub batch_factor: usize,
    pub max_trees_per_core: Option<usize>,
}

impl Default for CompileOptions {
    fn default() -> Self {
        CompileOptions {
            batch_factor: 1,
            max_trees_per_core: None,
        }
    }
}

/// Everything the simulator needs: the quantized model, its placement and the
/// router program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanArtifact {
    pub plan_version: u32,
    pub model: QuantizedEnsemble,
    pub placement: PlacementPlan,
    pub noc: NocProgram,
}

impl PlanArtifact {
    pub fn chip(&self) -> &ChipConfig {
        &self.placement.chip
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("artifact serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, CompileError> {
        let art: PlanArtifact =
            serde_json::from_str(text).map_err(|e| CompileError::Artifact(e.to_string()))?;
        if art.plan_version != PLAN_VERSION {
            return Err(CompileError::Artifact(format!(
                "plan_version {} unsupported (expected {PLAN_VERSION})",
                art.plan_version
            )));
        }
        if art.noc.router_bits.len() * (art.noc.arity - 1) + 1 != art.placement.chip.n_cores {
            return Err(CompileError::Artifact("router bits do not match the chip".into()));
        }
        Ok(art)
    }
}

/// Quantizes `model` at the chip's bit width and compiles it.
pub fn compile(
    model: &Ensemble,
    chip: &ChipConfig,
    opts: &CompileOptions,
) -> Result<PlanArtifact, CompileError> {
    chip.validate()?;
    let q = QuantizedEnsemble::from_ensemble(model, build_quant_grid(model, chip.n_bits));
    compile_quantized(q, chip, opts)
}

pub fn compile_quantized(
    model: QuantizedEnsemble,
    chip: &ChipConfig,
    opts: &CompileOptions,
) -> Result<PlanArtifact, CompileError> {
    let table = build_cam_table(&model)?;
    let mut placement = place_with(
        &table,
        chip,
        &PlaceOptions {
            max_trees_per_core: opts.max_trees_per_core,
        },
    )?;
    let noc = configure_noc(&mut placement, &model, opts.batch_factor)?;
    Ok(PlanArtifact {
        plan_version: PLAN_VERSION,
        model,
        placement,
        noc,
    })
}
