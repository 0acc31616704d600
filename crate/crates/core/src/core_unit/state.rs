use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};

use super::CoreError;
use crate::acam::{AcamArray, MacroCell};
use crate::compiler::{ChipConfig, CorePlacement};
use crate::ensemble::Code;

/// How a core reacts to a match count other than its tree count.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchPolicy {
    /// Any deviation is an error.
    #[default]
    Strict,
    /// Missing trees contribute nothing; extra matches are all accumulated.
    Lenient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SramWord {
    pub class_id: usize,
    pub value: i32,
}

/// Programmed state of one core. Word `r` of the core lives in stacked array
/// `r / H` at row `r % H`; feature `f` lives in queued array `f / W` at column
/// `f % W`. SRAM word `r` holds the leaf of CAM word `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoreState {
    pub core: usize,
    pub group: usize,
    n_features: usize,
    rows_per_array: usize,
    cols_per_array: usize,
    /// `arrays[stacked][queued]`.
    arrays: Vec<Vec<AcamArray>>,
    sram: Vec<SramWord>,
    classes: Vec<usize>,
    n_trees: usize,
}

impl CoreState {
    pub fn from_placement(
        placement: &CorePlacement,
        chip: &ChipConfig,
        n_features: usize,
    ) -> Result<Self, CoreError> {
        let core = placement.core;
        let (h, w) = (chip.rows_per_array, chip.cols_per_array);
        if placement.rows.len() > chip.n_words() {
            return Err(CoreError::Placement {
                core,
                msg: format!("{} rows exceed {} words", placement.rows.len(), chip.n_words()),
            });
        }
        if n_features > chip.feature_capacity() {
            return Err(CoreError::Placement {
                core,
                msg: format!("{n_features} features exceed capacity {}", chip.feature_capacity()),
            });
        }
        let geom = chip.cell_geometry();
        let mut arrays: Vec<Vec<AcamArray>> = (0..chip.stacked_arrays)
            .map(|_| {
                (0..chip.queued_arrays)
                    .map(|q| {
                        let mut a = AcamArray::new(h, w, geom);
                        a.set_active_cols(n_features.saturating_sub(q * w));
                        a
                    })
                    .collect()
            })
            .collect();
        let mut per_queued: Vec<Vec<(usize, MacroCell)>> = vec![Vec::new(); chip.queued_arrays];
        for (r, row) in placement.rows.iter().enumerate() {
            per_queued.iter_mut().for_each(Vec::clear);
            for cell in &row.cells {
                let f = cell.feature as usize;
                if f >= n_features {
                    return Err(CoreError::Placement {
                        core,
                        msg: format!("row {r} constrains feature {f} of {n_features}"),
                    });
                }
                let mc = MacroCell::from_range(cell.lo as u32, cell.hi as u32, geom)?;
                per_queued[f / w].push((f % w, mc));
            }
            for (q, cells) in per_queued.iter().enumerate() {
                arrays[r / h][q].program_row(r % h, cells)?;
            }
        }
        let mut classes: Vec<usize> = placement.trees.iter().map(|t| t.class_id).collect();
        classes.sort_unstable();
        classes.dedup();
        Ok(CoreState {
            core,
            group: placement.group,
            n_features,
            rows_per_array: h,
            cols_per_array: w,
            arrays,
            sram: placement
                .rows
                .iter()
                .map(|r| SramWord {
                    class_id: r.class_id,
                    value: r.leaf_value,
                })
                .collect(),
            classes,
            n_trees: placement.trees.len(),
        })
    }

    pub fn n_trees(&self) -> usize {
        self.n_trees
    }

    /// Classes held, ascending. The accumulator has one register per entry.
    pub fn classes(&self) -> &[usize] {
        &self.classes
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn feature_capacity(&self) -> usize {
        self.queued() * self.cols_per_array
    }

    pub fn n_words(&self) -> usize {
        self.stacked() * self.rows_per_array
    }

    pub fn stacked(&self) -> usize {
        self.arrays.len()
    }

    pub fn queued(&self) -> usize {
        self.arrays[0].len()
    }

    pub fn sram(&self) -> &[SramWord] {
        &self.sram
    }

    pub fn array(&self, stacked: usize, queued: usize) -> &AcamArray {
        &self.arrays[stacked][queued]
    }

    /// Arrays that are searched with content: programmed rows and wired columns.
    pub fn active_arrays(&self) -> usize {
        self.arrays
            .iter()
            .flatten()
            .filter(|a| a.active_cols() > 0 && a.programmed().count_ones(..) > 0)
            .count()
    }

    /// Arrays in `[stacked][queued]` order, flattened.
    pub fn arrays_flat(&self) -> Vec<AcamArray> {
        self.arrays.iter().flatten().cloned().collect()
    }

    /// Replaces the arrays, e.g. with defect-perturbed copies from [`Self::arrays_flat`].
    pub fn set_arrays_flat(&mut self, arrays: Vec<AcamArray>) {
        assert_eq!(arrays.len(), self.stacked() * self.queued(), "array count");
        let q = self.queued();
        let mut it = arrays.into_iter();
        for row in &mut self.arrays {
            for slot in row.iter_mut().take(q) {
                *slot = it.next().expect("counted");
            }
        }
    }

    /// Searches one padded query through a queued chain.
    pub(crate) fn search_chain(
        &self,
        stacked: usize,
        queued: usize,
        query: &[Code],
        precharge: &FixedBitSet,
    ) -> Result<FixedBitSet, CoreError> {
        let w = self.cols_per_array;
        Ok(self.arrays[stacked][queued].search(&query[queued * w..(queued + 1) * w], precharge)?)
    }

    /// Match buffer for a padded query: queued arrays chained through their
    /// precharge, stacked arrays concatenated.
    pub fn search(&self, query: &[Code]) -> Result<FixedBitSet, CoreError> {
        let mut buffer = FixedBitSet::with_capacity(self.n_words());
        for s in 0..self.stacked() {
            let mut lines = self.arrays[s][0].programmed().clone();
            for q in 0..self.queued() {
                lines = self.search_chain(s, q, query, &lines)?;
            }
            for r in lines.ones() {
                buffer.insert(s * self.rows_per_array + r);
            }
        }
        Ok(buffer)
    }

    /// Pads a feature vector to the full core width, or checks a padded one.
    pub fn prepare_query(&self, codes: &[Code]) -> Result<Vec<Code>, CoreError> {
        let cap = self.feature_capacity();
        if codes.len() == cap {
            Ok(codes.to_vec())
        } else if codes.len() == self.n_features {
            Ok(pad_query(codes, cap))
        } else {
            Err(CoreError::Dimension {
                expected: self.n_features,
                got: codes.len(),
            })
        }
    }

    pub(crate) fn class_slot(&self, class: usize) -> usize {
        self.classes
            .binary_search(&class)
            .expect("SRAM classes are core classes")
    }
}

/// Unused columns are don't-care, so padding with code 0 never mismatches.
pub fn pad_query(codes: &[Code], width: usize) -> Vec<Code> {
    let mut q = codes.to_vec();
    q.resize(width, 0);
    q
}

/// One one-hot vector per set bit, ascending.
pub fn mmr_resolve(matches: &FixedBitSet) -> Vec<FixedBitSet> {
    matches
        .ones()
        .map(|r| {
            let mut one = FixedBitSet::with_capacity(matches.len());
            one.insert(r);
            one
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoreOutput {
    /// `(class, raw sum)` for every class the core holds.
    pub logits: Vec<(usize, i64)>,
    pub matches: usize,
}

pub fn core_infer(state: &CoreState, codes: &[Code], policy: MatchPolicy) -> Result<CoreOutput, CoreError> {
    let query = state.prepare_query(codes)?;
    let buffer = state.search(&query)?;
    let matches = buffer.count_ones(..);
    if policy == MatchPolicy::Strict && matches != state.n_trees {
        return Err(CoreError::MatchCount {
            core: state.core,
            expected: state.n_trees,
            got: matches,
        });
    }
    let mut acc = vec![0i64; state.classes.len()];
    for one_hot in mmr_resolve(&buffer) {
        let word = state.sram[one_hot.ones().next().expect("one-hot")];
        acc[state.class_slot(word.class_id)] += word.value as i64;
    }
    Ok(CoreOutput {
        logits: state.classes.iter().copied().zip(acc).collect(),
        matches,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compiler::{compile_quantized, CompileOptions};
    use crate::ensemble::{build_quant_grid, parse_ensemble, QuantizedEnsemble, Task};
    use crate::sim::synth::{random_codes, random_ensemble, SynthSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fig1a() -> QuantizedEnsemble {
        let m = parse_ensemble(include_bytes!("../../../../fixtures/fig1a.json")).unwrap();
        QuantizedEnsemble::from_ensemble(&m, build_quant_grid(&m, 8))
    }

    #[test]
    fn fig1a_leaf_regions() {
        let q = fig1a();
        let art = compile_quantized(q.clone(), &ChipConfig::default(), &CompileOptions::default()).unwrap();
        let core = CoreState::from_placement(&art.placement.cores[0], &ChipConfig::default(), 2).unwrap();
        // f0 codes: 0 below 0.3, 1 in [0.3, 0.7), 2 above; f1: 0 below 0.5
        for (codes, leaf) in [([0, 0], 0.9), ([1, 1], 0.4), ([2, 0], -0.2), ([2, 1], -0.8)] {
            let out = core_infer(&core, &codes, MatchPolicy::Strict).unwrap();
            assert_eq!(out.matches, 1);
            assert_eq!(out.logits, vec![(0, q.logit_format.to_raw(leaf))]);
        }
    }

    #[test]
    fn five_trees_five_matches() {
        let m = random_ensemble(
            &SynthSpec {
                n_trees: 5,
                depth: 4,
                n_features: 10,
                task: Task::Regression,
                n_classes: 1,
            },
            9,
        );
        let q = QuantizedEnsemble::from_ensemble(&m, build_quant_grid(&m, 8));
        let art = compile_quantized(q.clone(), &ChipConfig::default(), &CompileOptions::default()).unwrap();
        assert_eq!(art.placement.cores.len(), 1);
        let core = CoreState::from_placement(&art.placement.cores[0], &ChipConfig::default(), 10).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for codes in random_codes(&q, 50, &mut rng) {
            let out = core_infer(&core, &codes, MatchPolicy::Strict).unwrap();
            assert_eq!(out.matches, 5);
            assert_eq!(out.logits[0].1, q.raw_sums(&codes).unwrap()[0]);
        }
    }

    #[test]
    fn random_cores_match_restricted_oracle() {
        let m = random_ensemble(
            &SynthSpec {
                n_trees: 24,
                depth: 5,
                n_features: 100,
                task: Task::MulticlassClassification,
                n_classes: 3,
            },
            4,
        );
        let q = QuantizedEnsemble::from_ensemble(&m, build_quant_grid(&m, 8));
        let art = compile_quantized(
            q.clone(),
            &ChipConfig::default(),
            &CompileOptions {
                max_trees_per_core: Some(3),
                ..CompileOptions::default()
            },
        )
        .unwrap();
        let chip = ChipConfig::default();
        let cores: Vec<CoreState> = art
            .placement
            .cores
            .iter()
            .map(|c| CoreState::from_placement(c, &chip, 100).unwrap())
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for codes in random_codes(&q, 1000, &mut rng) {
            for (core, placed) in cores.iter().zip(&art.placement.cores) {
                let out = core_infer(core, &codes, MatchPolicy::Strict).unwrap();
                let mut want = vec![0i64; 3];
                for slot in &placed.trees {
                    let tree = q.model.tree(slot.tree_id).unwrap();
                    let (v, c) = tree.leaf(tree.leaf_index(&codes)).unwrap();
                    want[c] += *v as i64;
                }
                for (class, got) in out.logits {
                    assert_eq!(got, want[class]);
                }
            }
        }
    }

    #[test]
    fn mmr_ascending() {
        let mut b = FixedBitSet::with_capacity(256);
        b.insert(17);
        b.insert(3);
        let seq: Vec<Vec<usize>> = mmr_resolve(&b).iter().map(|o| o.ones().collect()).collect();
        assert_eq!(seq, vec![vec![3], vec![17]]);
        assert!(mmr_resolve(&FixedBitSet::with_capacity(256)).is_empty());
        b.insert_range(..);
        assert_eq!(mmr_resolve(&b).len(), 256);
    }

    #[test]
    fn wrong_dimension() {
        let q = fig1a();
        let art = compile_quantized(q, &ChipConfig::default(), &CompileOptions::default()).unwrap();
        let core = CoreState::from_placement(&art.placement.cores[0], &ChipConfig::default(), 2).unwrap();
        assert!(matches!(
            core_infer(&core, &[0, 0, 0], MatchPolicy::Strict),
            Err(CoreError::Dimension { .. })
        ));
        assert_eq!(core.prepare_query(&[1, 2]).unwrap().len(), 130);
    }
}
