//! Randomized properties of the engine, covers and local models.

mod common;

use covermodel::covers::{ContextId, Cover, ExplicitCover, KdConfig, KdCover};
use covermodel::engine::oracle::{enumerate_predictive, TablePrior};
use covermodel::engine::{CoverModel, DirichletPrior, ModelPrior, StopRule, WalkDirection};
use covermodel::kernel::DoubleKernelCde;
use covermodel::local::{BayesTreeConfig, BayesTreeDensity, LocalModel, NormalWishart, NormalWishartPrior};
use covermodel::vmm::{CtwOracle, VmmConfig, VmmModel};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn engine_matches_enumeration(seed in any::<u64>(), n_obs in 0usize..=12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let alphabet = rng.random_range(2..=3);
        let spec = common::random_partition_spec(&mut rng, 3, alphabet);
        let cells = common::cell_count(&spec);
        let mut built = spec.build().unwrap();
        let mut data = Vec::new();
        for _ in 0..n_obs {
            let (c, y) = (rng.random_range(0..cells), rng.random_range(0..alphabet));
            built.model.absorb(&c, &y).unwrap();
            data.push((c, y));
        }
        for c in 0..cells {
            for y in 0..alphabet {
                let engine = built.model.predict_density(&c, &y).unwrap();
                let oracle = enumerate_predictive(&spec, &data, c, y).unwrap();
                prop_assert!((engine - oracle).abs() <= 1e-10, "cell {} y {}: {} vs {}", c, y, engine, oracle);
            }
        }
    }

    #[test]
    fn predictives_are_normalized_in_both_orientations(seed in any::<u64>(), n_obs in 0usize..=20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let alphabet = rng.random_range(2..=4);
        let spec = common::random_partition_spec(&mut rng, 4, alphabet);
        let cells = common::cell_count(&spec);
        for direction in [WalkDirection::Refining, WalkDirection::Coarsening] {
            let mut model = spec.build_with(direction).unwrap().model;
            let mut data_rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
            for _ in 0..n_obs {
                let (c, y) = (data_rng.random_range(0..cells), data_rng.random_range(0..alphabet));
                model.absorb(&c, &y).unwrap();
            }
            for c in 0..cells {
                let total: f64 = (0..alphabet).map(|y| model.predict_density(&c, &y).unwrap()).sum();
                prop_assert!((total - 1.0).abs() < 1e-12, "{:?} cell {}: {}", direction, c, total);
            }
        }
    }

    #[test]
    fn snapshots_restore_exactly(seed in any::<u64>(), n_obs in 0usize..=15) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = common::random_partition_spec(&mut rng, 3, 2);
        let cells = common::cell_count(&spec);
        let mut model = spec.build().unwrap().model;
        for _ in 0..n_obs {
            model.absorb(&rng.random_range(0..cells), &rng.random_range(0..2)).unwrap();
        }
        let mut buf = Vec::new();
        model.write_snapshot(&mut buf).unwrap();
        let back: CoverModel<ExplicitCover, TablePrior> = CoverModel::read_snapshot(&buf[..]).unwrap();
        prop_assert_eq!(back.states(), model.states());
        for c in 0..cells {
            prop_assert_eq!(back.ln_predict(&c, &0).unwrap().to_bits(), model.ln_predict(&c, &0).unwrap().to_bits());
        }
    }

    #[test]
    fn vmm_matches_ctw_on_larger_alphabets(seed in any::<u64>(), depth in 1usize..=4, len in 0usize..=30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let seq: Vec<u32> = (0..len).map(|_| rng.random_range(0..3)).collect();
        let mut vmm = VmmModel::new(&VmmConfig::new(3, depth)).unwrap();
        let ours = vmm.sequence_logprob(&seq).unwrap();
        let ctw = CtwOracle::kt(3, depth - 1).ctw_logprob(&seq).unwrap();
        prop_assert!((ours - ctw).abs() < 1e-9, "{} vs {}", ours, ctw);
    }

    #[test]
    fn bayes_tree_matches_stopped_tree_enumeration(
        seed in any::<u64>(),
        max_depth in 0usize..=3,
        n in 0usize..=5,
        split_prob in 0.05f64..0.95,
        beta_a in 0.3f64..3.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = BayesTreeConfig { lower: vec![-1.0, 0.0], upper: vec![1.0, 3.0], split_prob, beta_a, max_depth };
        let draw = |rng: &mut ChaCha8Rng| vec![rng.random_range(-1.0..1.0), rng.random_range(0.0..3.0)];
        let pts: Vec<Vec<f64>> = (0..n).map(|_| draw(&mut rng)).collect();
        let tree = BayesTreeDensity::from_batch(cfg.clone(), &pts).unwrap();
        let y = draw(&mut rng);
        let ours = tree.predictive(&y, None).unwrap();
        let oracle = common::bayes_tree_enumerate(&cfg, &pts, &y);
        prop_assert!((ours - oracle).abs() <= 1e-10, "{} vs {}", ours, oracle);
    }

    #[test]
    fn normal_wishart_batch_equals_sequential(seed in any::<u64>(), n in 0usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(-5.0..5.0), rng.random_range(-1.0..1.0)]).collect();
        let prior = NormalWishartPrior::weak(vec![0.5, -0.5]);
        let mut seq = NormalWishart::new(prior.clone()).unwrap();
        for p in &pts {
            seq.update(p, None).unwrap();
        }
        let batch = NormalWishart::from_batch(prior, &pts).unwrap();
        prop_assert!(seq.state_distance(&batch) <= 1e-10);
    }

    #[test]
    fn kernel_density_is_translation_invariant(seed in any::<u64>(), shift in -50.0f64..50.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<Vec<f64>> = (0..20).map(|_| vec![rng.random_range(0.0..4.0)]).collect();
        let ys: Vec<Vec<f64>> = (0..20).map(|_| vec![rng.random_range(0.0..1.0)]).collect();
        let moved: Vec<Vec<f64>> = xs.iter().map(|x| vec![x[0] + shift]).collect();
        let (q, y) = (rng.random_range(0.0..4.0), rng.random_range(0.0..1.0));
        let a = DoubleKernelCde::new(xs, ys.clone(), 0.4, 0.2).unwrap().ln_density(&[q], &[y]).unwrap();
        let b = DoubleKernelCde::new(moved, ys, 0.4, 0.2).unwrap().ln_density(&[q + shift], &[y]).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Growing the kd partition online gives the same predictions as running
    /// the final partition tree from the start.
    #[test]
    fn kd_growth_matches_the_final_static_tree(seed in any::<u64>(), n in 1usize..80, ratio in 0.2f64..0.9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let prior = DirichletPrior { alphabet: 3, concentration: 0.5, stop: StopRule::Geometric { ratio } };
        let kd = KdCover::new(KdConfig::new(vec![0.0, 0.0], vec![1.0, 2.0])).unwrap();
        let mut grown = CoverModel::new(kd, prior.clone(), WalkDirection::Refining).unwrap();
        let data: Vec<(Vec<f64>, usize)> = (0..n)
            .map(|_| {
                let x = vec![rng.random::<f64>().powi(2), 2.0 * rng.random::<f64>()];
                let y = usize::from(x[0] > 0.3) + usize::from(rng.random::<f64>() < 0.3);
                (x, y)
            })
            .collect();
        for (x, y) in &data {
            grown.absorb(x, y).unwrap();
        }

        let cover = grown.cover();
        let parents: Vec<Option<usize>> = (0..cover.len())
            .map(|i| cover.node(ContextId(i as u32)).parent.first().map(|p| p.index()))
            .collect();
        let (explicit, _, cell_of) = ExplicitCover::partition_tree(&parents).unwrap();
        let mut fixed = CoverModel::new(explicit, prior, WalkDirection::Refining).unwrap();
        let cell = |x: &[f64]| cell_of[cover.leaf(x).unwrap().index()].unwrap();
        for (x, y) in &data {
            fixed.absorb(&cell(x), y).unwrap();
        }
        for _ in 0..10 {
            let q = vec![rng.random::<f64>(), 2.0 * rng.random::<f64>()];
            for y in 0..3 {
                let a = grown.predict_density(&q, &y).unwrap();
                let b = fixed.predict_density(&cell(&q), &y).unwrap();
                prop_assert!((a - b).abs() <= 1e-10, "{:?} y {}: grown {} static {}", q, y, a, b);
            }
        }
    }
}

#[test]
fn prior_stop_rule_depends_only_on_depth() {
    let prior = DirichletPrior { alphabet: 2, concentration: 1.0, stop: StopRule::Geometric { ratio: 0.5 } };
    let region = covermodel::covers::Region::Cells { cells: vec![0] };
    assert_eq!(prior.stop_prob(ContextId(3), 2, &region), 0.25);
    assert_eq!(prior.stop_prob(ContextId(9), 2, &region), 0.25);
}
