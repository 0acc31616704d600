use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use xtime::compiler::{compile_quantized, ChipConfig, CompileOptions, PlanArtifact};
use xtime::ensemble::{build_quant_grid, QuantizedEnsemble, Task};
use xtime::sim::synth::{random_codes, random_ensemble, SynthSpec};
use xtime::sim::{run_inference, SimOptions};

fn task_strategy() -> impl Strategy<Value = (Task, usize)> {
    prop_oneof![
        Just((Task::Regression, 1)),
        Just((Task::BinaryClassification, 1)),
        (3usize..=7).prop_map(|c| (Task::MulticlassClassification, c)),
    ]
}

fn build(spec: &SynthSpec, cap: usize, batch: usize, seed: u64) -> PlanArtifact {
    let m = random_ensemble(spec, seed);
    let q = QuantizedEnsemble::from_ensemble(&m, build_quant_grid(&m, 8));
    compile_quantized(
        q,
        &ChipConfig::default(),
        &CompileOptions {
            batch_factor: batch,
            max_trees_per_core: Some(cap),
        },
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Moving the accumulation between router levels (different caps and replica
    /// counts) never changes the final fixed-point sums.
    #[test]
    fn sums_independent_of_reduction_placement(
        (task, n_classes) in task_strategy(),
        n_trees in 4usize..40,
        depth in 2usize..6,
        n_features in 2usize..60,
        cap_a in 1usize..=8,
        cap_b in 1usize..=8,
        batch in 1usize..=4,
        seed in 0u64..1000,
    ) {
        let spec = SynthSpec { n_trees, depth, n_features, task, n_classes };
        let a = build(&spec, cap_a, 1, seed);
        let b = build(&spec, cap_b, batch, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples = random_codes(&a.model, 64, &mut rng);
        let ra = run_inference(&a.placement, &a.noc, &samples, &SimOptions::default()).unwrap();
        let rb = run_inference(&b.placement, &b.noc, &samples, &SimOptions::default()).unwrap();
        prop_assert_eq!(&ra.raw_sums, &rb.raw_sums);
        for (s, sums) in samples.iter().zip(&ra.raw_sums) {
            prop_assert_eq!(sums, &a.model.raw_sums(s).unwrap());
        }
    }

    /// Every logit flit a core sends is absorbed by an accumulator or delivered,
    /// and no sample beats the round trip through the tree.
    #[test]
    fn flow_is_conserved_and_latency_bounded(
        (task, n_classes) in task_strategy(),
        n_trees in 1usize..30,
        cap in 1usize..=8,
        batch in 1usize..=3,
        seed in 0u64..1000,
    ) {
        let spec = SynthSpec { n_trees, depth: 3, n_features: 12, task, n_classes };
        let art = build(&spec, cap, batch, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples = random_codes(&art.model, 50, &mut rng);
        let res = run_inference(&art.placement, &art.noc, &samples, &SimOptions::default()).unwrap();
        let m = &res.metrics;
        prop_assert!(m.flow.conserved());
        let per_sample_cores: u64 = (0..samples.len())
            .map(|i| art.placement.cores.iter().filter(|c| c.group == i % batch).map(|c| c.classes().len() as u64).sum::<u64>())
            .sum();
        prop_assert_eq!(m.flow.from_cores, per_sample_cores);
        let hop = art.chip().noc.hop_cycles;
        prop_assert!(m.latency.min_cycles >= 2 * art.noc.depth as u64 * hop);
        let rebuilt = m.throughput_sps * m.total_cycles as f64 / m.clock_hz;
        prop_assert!((rebuilt - samples.len() as f64).abs() < 1e-6);
    }
}

#[test]
fn artifact_round_trip_simulates_identically() {
    let art = build(
        &SynthSpec {
            n_trees: 24,
            task: Task::MulticlassClassification,
            n_classes: 3,
            ..SynthSpec::default()
        },
        2,
        2,
        5,
    );
    let back = PlanArtifact::from_json(&art.to_json()).unwrap();
    assert_eq!(back, art);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let samples = random_codes(&art.model, 100, &mut rng);
    let a = run_inference(&art.placement, &art.noc, &samples, &SimOptions::default()).unwrap();
    let b = run_inference(&back.placement, &back.noc, &samples, &SimOptions::default()).unwrap();
    assert_eq!(a, b);
}
