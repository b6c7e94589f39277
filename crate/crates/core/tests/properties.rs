use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use roadsense::config::RunConfig;
use roadsense::embedding::mds_embed;
use roadsense::fusion::{check_equivalence, local_summary, wire};
use roadsense::geodesic::{shortest_path_distances, GeodesicMatrix};
use roadsense::gp::{greedy_select, posterior_full};
use roadsense::linalg::SpdFactor;
use roadsense::sensing::{build_coordination_graph, theorem2_check};
use roadsense::sim::bus::raw_observations;
use roadsense::sim::rmse;
use roadsense::verify::{random_fusion_instance, random_network, random_point_model, random_sensing_instance};
use roadsense::SegmentId;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn geodesic_distances_form_a_quasi_metric(seed in any::<u64>(), n in 2usize..20, extra in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = random_network(&mut rng, n, extra);
        let d = shortest_path_distances(&net);
        for a in net.segments() {
            prop_assert_eq!(d.get(a, a), 0.0);
            for b in net.segments() {
                prop_assert!(d.get(a, b) >= 0.0 && d.get(a, b).is_finite());
                for c in net.segments() {
                    prop_assert!(d.get(a, c) <= d.get(a, b) + d.get(b, c) + 1e-12);
                }
            }
        }
        for (a, b, w) in net.edges() {
            prop_assert!(d.get(a, b) <= w);
        }
    }

    #[test]
    fn decentralized_prediction_equals_the_pitc_oracle(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_fusion_instance(&mut rng);
        let r = check_equivalence(&inst.model, &inst.support, &inst.partition, &inst.z, &inst.targets, 1e-8);
        prop_assert!(r.passed, "{:?}", r);
    }

    #[test]
    fn local_summaries_survive_the_wire(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_fusion_instance(&mut rng);
        for (k, (d, z)) in inst.partition.iter().zip(&inst.z).enumerate() {
            let s = local_summary(&inst.model, &inst.support, k, d, z).unwrap();
            let bytes = wire::to_bytes(&s);
            prop_assert_eq!(bytes.len(), wire::encoded_len(inst.support.len()));
            let back = wire::from_bytes(&bytes, &inst.support).unwrap();
            prop_assert_eq!(back.z, s.z);
            prop_assert_eq!(back.sigma, s.sigma);
        }
    }

    #[test]
    fn conditioning_never_raises_variance(seed in any::<u64>(), n in 4usize..16) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = random_point_model(&mut rng, n, 0.1);
        let targets = vec![SegmentId(0), SegmentId(1)];
        let mut prev = posterior_full(&model, &[], &[], &targets).unwrap().variances();
        let mut observed = Vec::new();
        for i in 2..n {
            observed.push(SegmentId(i));
            let z = vec![0.5; observed.len()];
            let now = posterior_full(&model, &observed, &z, &targets).unwrap().variances();
            for (a, b) in now.iter().zip(&prev) {
                prop_assert!(*a <= *b + 1e-12);
                prop_assert!(*a > 0.0);
            }
            prev = now;
        }
    }

    #[test]
    fn greedy_selection_is_distinct_and_nested(seed in any::<u64>(), n in 3usize..14) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = random_point_model(&mut rng, n, 0.2);
        let cands: Vec<SegmentId> = (0..n).map(SegmentId).collect();
        let all = greedy_select(&model, &cands, n, &[]).unwrap();
        let mut sorted = all.clone();
        sorted.sort();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), n);
        for m in 0..n {
            prop_assert_eq!(&greedy_select(&model, &cands, m, &[]).unwrap()[..], &all[..m]);
        }
    }

    #[test]
    fn gram_matrices_factor(seed in any::<u64>(), n in 1usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = random_point_model(&mut rng, n, 0.0);
        let f = SpdFactor::new(model.cov().gram()).unwrap();
        prop_assert!(f.jitter() <= 1e-8);
    }

    #[test]
    fn mds_recovers_planar_distances(pts in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 3..15)) {
        let rows: Vec<Vec<f64>> = pts
            .iter()
            .map(|a| pts.iter().map(|b| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()).collect())
            .collect();
        let scale: f64 = rows.iter().flatten().map(|v| v * v).sum();
        let emb = mds_embed(&GeodesicMatrix::from_rows(rows), 2).unwrap();
        prop_assert!(emb.stress() <= 1e-9 * scale.max(1.0));
    }

    #[test]
    fn kappa_is_monotone_and_sandwich_holds(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = random_sensing_instance(&mut rng, 12, 3, 1).unwrap();
        let round = inst.round().unwrap();
        let phis = round.phis();
        let mut last = usize::MAX;
        for e in [1e-12, 1e-6, 1e-3, 1e-2, 1e-1, 1.0, 10.0] {
            let g = build_coordination_graph(&phis, e).unwrap();
            prop_assert!(g.kappa <= last && g.kappa >= 1);
            for (i, row) in g.adjacency.iter().enumerate() {
                prop_assert!(!row[i]);
                for (j, &a) in row.iter().enumerate() {
                    prop_assert_eq!(a, g.adjacency[j][i]);
                }
            }
            last = g.kappa;
        }
        let r = theorem2_check(&round, 1, 1e-3).unwrap();
        prop_assert_eq!(r.sandwich.violations, 0);
        prop_assert!(r.gap >= -1e-9);
    }

    #[test]
    fn config_round_trip_is_a_fixed_point(
        sensors in 1usize..9,
        walk_length in 1usize..4,
        support in 1usize..100,
        epsilon in 1e-6f64..10.0,
        budget in 0usize..2000,
        seeds in prop::collection::vec(0..=i64::MAX as u64, 1..5),
        ls in 0.1f64..50.0,
    ) {
        let mut cfg = RunConfig { sensors, walk_length, support_size: support, epsilon, budget, seeds, ..RunConfig::default() };
        cfg.kernel.length_scale = Some(ls);
        let text = cfg.to_toml();
        let back = RunConfig::parse(&text).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.to_toml(), text);
    }

    #[test]
    fn seeds_beyond_the_toml_range_are_rejected(seed in i64::MAX as u64 + 1..=u64::MAX) {
        let cfg = RunConfig { seeds: vec![seed], ..RunConfig::default() };
        prop_assert!(cfg.validate().is_err());
    }

    #[test]
    fn raw_observation_messages_grow_linearly(n in 0usize..200) {
        let ids: Vec<u64> = (0..n as u64).collect();
        let vals = vec![1.0; n];
        prop_assert_eq!(raw_observations(3, &ids, &vals).len(), 8 + 16 * n);
    }

    #[test]
    fn rmse_is_zero_only_for_exact_predictions(v in prop::collection::vec(-100.0f64..100.0, 1..50), shift in 0.001f64..5.0) {
        prop_assert_eq!(rmse(&v, &v), 0.0);
        let moved: Vec<f64> = v.iter().map(|x| x + shift).collect();
        prop_assert!((rmse(&moved, &v) - shift).abs() < 1e-9);
    }
}

#[test]
fn singular_matrices_are_rejected() {
    let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, -5.0]);
    assert!(SpdFactor::new(&m).is_err());
}
