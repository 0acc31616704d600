use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::place::{CorePlacement, PlacementPlan};
use super::CompileError;
use crate::ensemble::{QuantizedEnsemble, Task};
use crate::fixed::LogitFormat;
use crate::noc::{build_htree, HTreeTopology};

/// Final reduction applied by the co-processor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CpOp {
    Identity,
    Threshold,
    Argmax,
}

impl CpOp {
    pub fn for_task(task: Task) -> Self {
        match task {
            Task::Regression => CpOp::Identity,
            Task::BinaryClassification => CpOp::Threshold,
            Task::MulticlassClassification => CpOp::Argmax,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NocProgram {
    pub arity: usize,
    pub depth: usize,
    /// Router configuration bits in breadth-first router order, `1` = accumulate.
    #[serde(serialize_with = "bits_out", deserialize_with = "bits_in")]
    pub router_bits: Vec<bool>,
    pub batch_factor: usize,
    /// `(core, batch group)` for every occupied core.
    pub core_groups: Vec<(usize, usize)>,
    pub op: CpOp,
    pub task: Task,
    pub n_classes: usize,
    pub logit_format: LogitFormat,
    pub threshold_raw: i64,
}

fn bits_out<S: Serializer>(bits: &[bool], s: S) -> Result<S::Ok, S::Error> {
    let text: String = bits.iter().map(|&b| if b { '1' } else { '0' }).collect();
    s.serialize_str(&text)
}

fn bits_in<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<bool>, D::Error> {
    let text = String::deserialize(d)?;
    text.chars()
        .map(|c| match c {
            '0' => Ok(false),
            '1' => Ok(true),
            other => Err(serde::de::Error::custom(format!("bad router bit {other:?}"))),
        })
        .collect()
}

impl NocProgram {
    pub fn topology(&self) -> HTreeTopology {
        HTreeTopology {
            arity: self.arity,
            depth: self.depth,
            n_cores: self.arity.pow(self.depth as u32),
        }
    }

    pub fn accumulates(&self, router: usize) -> bool {
        self.router_bits[router]
    }
}

/// What the cores under a router hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Content {
    Empty,
    One { class: usize, group: usize },
    Mixed,
}

impl Content {
    fn join(self, other: Content) -> Content {
        match (self, other) {
            (Content::Empty, x) | (x, Content::Empty) => x,
            (a, b) if a == b => a,
            _ => Content::Mixed,
        }
    }

    fn of_core(core: &CorePlacement) -> Content {
        match core.classes().as_slice() {
            [] => Content::Empty,
            [class] => Content::One {
                class: *class,
                group: core.group,
            },
            _ => Content::Mixed,
        }
    }
}

/// Replicates the placement `batch_factor` times and derives router bits: a router
/// accumulates iff every occupied core below it holds the same class of the same
/// batch group.
pub fn configure_noc(
    plan: &mut PlacementPlan,
    model: &QuantizedEnsemble,
    batch_factor: usize,
) -> Result<NocProgram, CompileError> {
    if batch_factor == 0 || batch_factor > 256 {
        return Err(CompileError::Config(format!(
            "batch factor {batch_factor} outside 1..=256"
        )));
    }
    if model.model.n_classes > 256 {
        return Err(CompileError::Config("at most 256 classes fit a logit flit".into()));
    }
    let chip = plan.chip.clone();
    let topo = build_htree(chip.n_cores, chip.noc.arity)
        .map_err(|e| CompileError::Config(e.to_string()))?;

    plan.cores.retain(|c| c.group == 0);
    let used = plan.cores.last().map_or(0, |c| c.core + 1);
    let stride = if batch_factor == 1 {
        used
    } else {
        let mut block = 1;
        while block < used {
            block *= topo.arity;
        }
        block
    };
    let needed = stride * (batch_factor - 1) + used;
    if needed > chip.n_cores {
        return Err(CompileError::Replication {
            batch: batch_factor,
            needed,
            available: chip.n_cores,
        });
    }
    let base = plan.cores.clone();
    for g in 1..batch_factor {
        plan.cores.extend(base.iter().map(|c| CorePlacement {
            core: c.core + g * stride,
            group: g,
            ..c.clone()
        }));
    }
    plan.cores_per_replica = used;
    plan.replica_stride = stride;
    plan.replication_groups = (0..batch_factor)
        .map(|g| base.iter().map(|c| c.core + g * stride).collect())
        .collect();

    let mut per_core = vec![Content::Empty; chip.n_cores];
    for c in &plan.cores {
        per_core[c.core] = Content::of_core(c);
    }
    let n_routers = topo.n_routers();
    let mut content = vec![Content::Empty; n_routers];
    for r in (0..n_routers).rev() {
        let kids = topo.child_routers(r);
        content[r] = if kids.is_empty() {
            topo.core_range(r)
                .map(|c| per_core[c])
                .fold(Content::Empty, Content::join)
        } else {
            kids.map(|k| content[k]).fold(Content::Empty, Content::join)
        };
    }

    Ok(NocProgram {
        arity: topo.arity,
        depth: topo.depth,
        router_bits: content.iter().map(|&c| c != Content::Mixed).collect(),
        batch_factor,
        core_groups: plan.cores.iter().map(|c| (c.core, c.group)).collect(),
        op: CpOp::for_task(model.model.task),
        task: model.model.task,
        n_classes: model.model.n_classes,
        logit_format: model.logit_format,
        threshold_raw: model.threshold_raw(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::{build_cam_table, place_with, ChipConfig, PlaceOptions};
    use crate::ensemble::build_quant_grid;
    use crate::sim::synth::{random_ensemble, SynthSpec};

    fn compile(spec: &SynthSpec, cap: Option<usize>, batch: usize) -> (PlacementPlan, NocProgram) {
        let m = random_ensemble(spec, 1);
        let q = QuantizedEnsemble::from_ensemble(&m, build_quant_grid(&m, 8));
        let table = build_cam_table(&q).unwrap();
        let mut plan = place_with(
            &table,
            &ChipConfig::default(),
            &PlaceOptions {
                max_trees_per_core: cap,
            },
        )
        .unwrap();
        let prog = configure_noc(&mut plan, &q, batch).unwrap();
        (plan, prog)
    }

    #[test]
    fn binary_all_bits_set() {
        let (plan, prog) = compile(
            &SynthSpec {
                n_trees: 8,
                depth: 3,
                n_features: 4,
                task: Task::BinaryClassification,
                n_classes: 1,
            },
            Some(2),
            1,
        );
        assert_eq!(plan.cores.len(), 4);
        assert_eq!(prog.router_bits.len(), 1365);
        assert!(prog.router_bits.iter().all(|&b| b));
        assert_eq!(prog.op, CpOp::Threshold);
    }

    #[test]
    fn multiclass_bits_clear_above_class_subtrees() {
        // two estimators per class, four classes, one class per core
        let (plan, prog) = compile(
            &SynthSpec {
                n_trees: 8,
                depth: 3,
                n_features: 4,
                task: Task::MulticlassClassification,
                n_classes: 4,
            },
            None,
            1,
        );
        assert_eq!(plan.cores.len(), 4);
        let topo = prog.topology();
        for c in &plan.cores {
            assert_eq!(c.n_trees(), 2);
            // the leaf router joins all four classes
            let (leaf_router, _) = topo.core_parent(c.core);
            assert!(!prog.accumulates(leaf_router));
            for r in topo.path_to_root(c.core) {
                assert!(!prog.accumulates(r));
            }
        }
        assert_eq!(prog.op, CpOp::Argmax);
    }

    #[test]
    fn batching_sets_low_bits_and_clears_high_bits() {
        let (plan, prog) = compile(
            &SynthSpec {
                n_trees: 4,
                depth: 3,
                n_features: 4,
                task: Task::Regression,
                n_classes: 1,
            },
            Some(1),
            2,
        );
        assert_eq!(plan.replication_groups, vec![vec![0, 1, 2, 3], vec![4, 5, 6, 7]]);
        let topo = prog.topology();
        let (r0, _) = topo.core_parent(0);
        let (r1, _) = topo.core_parent(4);
        assert!(prog.accumulates(r0) && prog.accumulates(r1));
        // the router joining both replicas forwards
        let joint = topo.path_to_root(0)[1];
        assert_eq!(joint, topo.path_to_root(4)[1]);
        assert!(!prog.accumulates(joint));
        assert!(!prog.accumulates(0));
    }

    #[test]
    fn replication_overflow() {
        let m = random_ensemble(
            &SynthSpec {
                n_trees: 3,
                depth: 2,
                n_features: 2,
                task: Task::Regression,
                n_classes: 1,
            },
            1,
        );
        let q = QuantizedEnsemble::from_ensemble(&m, build_quant_grid(&m, 8));
        let chip = ChipConfig {
            n_cores: 16,
            ..ChipConfig::default()
        };
        let mut plan = place_with(
            &build_cam_table(&q).unwrap(),
            &chip,
            &PlaceOptions {
                max_trees_per_core: Some(1),
            },
        )
        .unwrap();
        assert!(configure_noc(&mut plan, &q, 4).is_ok());
        assert!(matches!(
            configure_noc(&mut plan, &q, 5),
            Err(CompileError::Replication { .. })
        ));
    }

    #[test]
    fn reconfiguring_replaces_replicas() {
        let spec = SynthSpec {
            n_trees: 4,
            depth: 2,
            n_features: 2,
            task: Task::BinaryClassification,
            n_classes: 1,
        };
        let m = random_ensemble(&spec, 3);
        let q = QuantizedEnsemble::from_ensemble(&m, build_quant_grid(&m, 8));
        let mut plan = place_with(
            &build_cam_table(&q).unwrap(),
            &ChipConfig::default(),
            &PlaceOptions {
                max_trees_per_core: Some(1),
            },
        )
        .unwrap();
        configure_noc(&mut plan, &q, 3).unwrap();
        assert_eq!(plan.cores.len(), 12);
        configure_noc(&mut plan, &q, 1).unwrap();
        assert_eq!(plan.cores.len(), 4);
        assert_eq!(plan.batch_factor(), 1);
    }
}
