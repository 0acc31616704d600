//! Tree ensembles: representation, interchange parsing, quantization and the
//! exact software oracle every hardware path is checked against.

mod interchange;
mod model;
mod oracle;
mod quant;

use thiserror::Error;

pub use interchange::{
    from_document, parse_ensemble, to_document, to_json, Document, NodeDoc, TreeDoc, FORMAT_VERSION,
};
pub use model::{Ensemble, NodeKind, Reduction, Task, Tree, TreeEnsemble, TreeNode};
pub use oracle::{decide, oracle_predict, Decision, Prediction, Predictor};
pub use quant::{build_quant_grid, quantize_input, Code, QuantizationGrid, QuantizedEnsemble};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EnsembleError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("structure error: {0}")]
    Structure(String),
    #[error("range error: {0}")]
    Range(String),
    #[error("dimension mismatch: expected {expected} values, got {got}")]
    Dimension { expected: usize, got: usize },
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::synth::{random_ensemble, SynthSpec};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const FIG1A: &str = include_str!("../../../../fixtures/fig1a.json");

    #[test]
    fn fig1a_shape() {
        let m = parse_ensemble(FIG1A.as_bytes()).unwrap();
        assert_eq!(m.trees[0].n_leaves(), 4);
        assert_eq!(m.trees[0].depth(), 2);
    }

    #[test]
    fn fig1a_single_tree_needs_no_reduction() {
        let m = parse_ensemble(FIG1A.as_bytes()).unwrap();
        // leftmost region: f0 < 0.3
        let p = m.oracle_predict(&[0.1, 0.1]).unwrap();
        assert_eq!(p.logits, vec![0.9]);
        assert_eq!(p.decision, Decision::Value(0.9));
    }

    #[test]
    fn sum_reduction_of_two_trees() {
        let doc = r#"{"format_version":1,"task":"regression","n_classes":1,"n_features":1,"reduction":"sum",
          "trees":[
            {"tree_id":0,"class_id":0,"nodes":[{"id":0,"feature":0,"threshold":0.5,"left":1,"right":2,"is_leaf":false},
              {"id":1,"value":0.7,"is_leaf":true},{"id":2,"value":0.0,"is_leaf":true}]},
            {"tree_id":1,"class_id":0,"nodes":[{"id":0,"feature":0,"threshold":0.5,"left":1,"right":2,"is_leaf":false},
              {"id":1,"value":-0.2,"is_leaf":true},{"id":2,"value":0.0,"is_leaf":true}]}]}"#;
        let m = parse_ensemble(doc.as_bytes()).unwrap();
        let p = m.oracle_predict(&[0.0]).unwrap();
        assert!((p.logits[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn dimension_error() {
        let m = parse_ensemble(FIG1A.as_bytes()).unwrap();
        assert!(matches!(
            m.oracle_predict(&[0.1]),
            Err(EnsembleError::Dimension { .. })
        ));
    }

    #[test]
    fn multiclass_ties_break_to_lowest_index() {
        assert_eq!(
            decide(Task::MulticlassClassification, &[0.2, 0.9, 0.9], 0.0),
            Decision::Class(1)
        );
        assert_eq!(
            decide(Task::BinaryClassification, &[0.0], 0.0),
            Decision::Class(1)
        );
    }

    /// Independently written traversal over the interchange document itself:
    /// resolves children by node id, never by vector index.
    fn naive_predict(doc: &Document, x: &[f64]) -> f64 {
        let mut total = 0.0;
        for t in &doc.trees {
            let by_id = |id: i64| t.nodes.iter().find(|n| n.id == id).unwrap();
            let referenced: Vec<i64> = t
                .nodes
                .iter()
                .flat_map(|n| [n.left, n.right])
                .flatten()
                .collect();
            let mut node = t.nodes.iter().find(|n| !referenced.contains(&n.id)).unwrap();
            while !node.is_leaf {
                let f = node.feature.unwrap() as usize;
                node = if x[f] < node.threshold.unwrap() {
                    by_id(node.left.unwrap())
                } else {
                    by_id(node.right.unwrap())
                };
            }
            total += node.value.unwrap();
        }
        total
    }

    #[test]
    fn random_binary_model_matches_naive_traversal() {
        let spec = SynthSpec {
            n_trees: 10,
            depth: 4,
            n_features: 5,
            task: Task::BinaryClassification,
            n_classes: 1,
        };
        let model = random_ensemble(&spec, 11);
        let doc = to_document(&model);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let x: Vec<f64> = (0..5).map(|_| rng.gen::<f64>()).collect();
            let naive = naive_predict(&doc, &x);
            let p = model.oracle_predict(&x).unwrap();
            assert_eq!(p.logits[0], naive);
            assert_eq!(p.decision, Decision::Class(usize::from(naive >= 0.0)));
        }
    }

    #[test]
    fn traversal_terminates_within_depth() {
        let model = random_ensemble(
            &SynthSpec {
                n_trees: 5,
                depth: 6,
                n_features: 3,
                task: Task::Regression,
                n_classes: 1,
            },
            2,
        );
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for tree in &model.trees {
            let depth = tree.depth();
            for _ in 0..100 {
                let x: Vec<f64> = (0..3).map(|_| rng.gen::<f64>()).collect();
                let mut idx = tree.root;
                let mut steps = 0;
                while let NodeKind::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } = tree.nodes[idx].kind
                {
                    idx = if x[feature] < threshold { left } else { right };
                    steps += 1;
                }
                assert!(steps <= depth);
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            /// With an exact grid every tree lands on the same leaf before and after
            /// quantization, and the decided output agrees unless the float sum sits
            /// within the leaf rounding error of the threshold.
            #[test]
            fn quantization_preserves_decisions(seed in 0u64..10_000, xs in prop::collection::vec(0.0f64..1.0, 4)) {
                let spec = SynthSpec { n_trees: 6, depth: 4, n_features: 4, task: Task::BinaryClassification, n_classes: 1 };
                let model = random_ensemble(&spec, seed);
                let grid = build_quant_grid(&model, 8);
                prop_assert!(grid.is_exact_for(&model));
                let q = QuantizedEnsemble::from_ensemble(&model, grid);
                let codes = q.quantize_input(&xs).unwrap();
                for (ft, qt) in model.trees.iter().zip(&q.model.trees) {
                    let fl = ft.leaf_index(&xs);
                    let ql = qt.leaf_index(&codes);
                    prop_assert_eq!(ft.nodes[fl].id, qt.nodes[ql].id);
                }
                let pf = model.oracle_predict(&xs).unwrap();
                let pq = q.oracle_predict(&codes).unwrap();
                let slack = model.trees.len() as f64 * q.logit_format.ulp();
                if (pf.logits[0] - model.decision_threshold).abs() > slack {
                    prop_assert_eq!(pf.decision, pq.decision);
                }
            }

            #[test]
            fn quantize_is_monotone(seed in 0u64..1000, a in -1.0f64..2.0, b in -1.0f64..2.0) {
                let model = random_ensemble(&SynthSpec { n_trees: 4, depth: 3, n_features: 2, task: Task::Regression, n_classes: 1 }, seed);
                let grid = build_quant_grid(&model, 4);
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                for f in 0..2 {
                    prop_assert!(grid.code(f, lo) <= grid.code(f, hi));
                    prop_assert!((grid.code(f, hi) as u32) < grid.levels());
                }
            }

            #[test]
            fn tree_order_does_not_change_the_class(seed in 0u64..1000, rot in 0usize..12) {
                let spec = SynthSpec { n_trees: 12, depth: 3, n_features: 3, task: Task::MulticlassClassification, n_classes: 4 };
                let model = random_ensemble(&spec, seed);
                let q = QuantizedEnsemble::from_ensemble(&model, build_quant_grid(&model, 8));
                let mut shuffled = q.clone();
                shuffled.model.trees.rotate_left(rot);
                shuffled.model.trees.swap(0, 11);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                for _ in 0..20 {
                    let codes: Vec<Code> = (0..3).map(|_| rand::Rng::gen_range(&mut rng, 0..256)).collect();
                    prop_assert_eq!(q.oracle_predict(&codes).unwrap(), shuffled.oracle_predict(&codes).unwrap());
                }
            }
        }
    }

    #[test]
    fn brute_force_code_scan_agrees_with_binary_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut cuts: Vec<f64> = (0..100).map(|_| rng.gen_range(-5.0..5.0)).collect();
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let grid = QuantizationGrid {
            n_bits: 8,
            cuts: vec![cuts.clone()],
        };
        for _ in 0..1000 {
            let x: f64 = rng.gen_range(-6.0..6.0);
            let scan = cuts.iter().filter(|&&c| c <= x).count() as Code;
            assert_eq!(quantize_input(&[x], &grid).unwrap(), vec![scan]);
        }
        // boundaries hit exactly
        for (i, &c) in cuts.iter().enumerate() {
            assert_eq!(grid.code(0, c), (i + 1) as Code);
        }
    }
}
