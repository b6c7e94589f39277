use std::sync::Arc;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use roadsense::embedding::Embedding;
use roadsense::fusion::{global_summary, local_summary, GlobalSummary, SupportSet};
use roadsense::gp::GpModel;
use roadsense::kernel::{CovarianceModel, KernelHyper};
use roadsense::sensing::planner::{log_det_objective, structured_covariance};
use roadsense::sensing::{
    build_coordination_graph, enumerate_walks, theorem2_check, CoordinationGraph, SensingRound, WalkSet,
};
use roadsense::verify::random_sensing_instance;
use roadsense::{RoadNetwork, SegmentId};

fn ids(v: &[usize]) -> Vec<SegmentId> {
    v.iter().map(|&i| SegmentId(i)).collect()
}

/// A network on explicit planar points with a squared-exponential kernel.
struct Fixture {
    net: RoadNetwork,
    model: GpModel,
}

fn fixture(points: &[[f64; 2]], edges: &[(u64, u64)], length_scale: f64, noise: f64) -> Fixture {
    let n = points.len();
    let segments = (0..n as u64).map(|i| (i, vec![1.0])).collect();
    let net = RoadNetwork::new(segments, vec![1.0], edges).unwrap();
    let flat: Vec<f64> = points.iter().flatten().copied().collect();
    let emb = Embedding::from_coords(DMatrix::from_row_slice(n, 2, &flat), &DMatrix::zeros(n, n));
    let cov = CovarianceModel::new(&emb, KernelHyper::isotropic(1.0, length_scale, noise, 2)).unwrap();
    Fixture { net, model: GpModel::with_constant_mean(0.0, Arc::new(cov)) }
}

fn summary(model: &GpModel, u: &SupportSet, data: &[Vec<usize>]) -> GlobalSummary {
    let locals: Vec<_> = data
        .iter()
        .enumerate()
        .map(|(k, d)| {
            let z: Vec<f64> = d.iter().map(|&i| 0.3 * i as f64 - 1.0).collect();
            local_summary(model, u, k, &ids(d), &z).unwrap()
        })
        .collect();
    global_summary(u, &locals).unwrap()
}

fn mask(n: usize, observed: &[usize]) -> Vec<bool> {
    let mut m = vec![false; n];
    for &i in observed {
        m[i] = true;
    }
    m
}

#[test]
fn single_walk_is_chosen() {
    // a ring: one walk per origin
    let pts = [[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
    let f = fixture(&pts, &[(0, 1), (1, 2), (2, 3), (3, 0)], 1.0, 0.1);
    let u = SupportSet::new(&f.model, ids(&[1, 3])).unwrap();
    let g = summary(&f.model, &u, &[vec![0]]);
    let obs = mask(4, &[0]);
    let ws = enumerate_walks(&f.net, SegmentId(0), 2, &obs).unwrap();
    assert_eq!(ws.len(), 1);
    let round = SensingRound::new(&f.model, &u, &g, vec![ws], &obs).unwrap();
    let plan = round.component_joint_walk(&[0]).unwrap();
    assert_eq!(plan.choice, vec![0]);
    assert_eq!(round.joint_walk(&[0], &plan.choice).y, ids(&[1, 2]));
}

#[test]
fn nested_unobserved_sets_prefer_the_larger() {
    // 0 -> 1 -> {2, 3}; 3 is observed, so the walks see {1, 2} and {1}
    let pts = [[0.0, 0.0], [1.0, 0.0], [2.0, 0.5], [2.0, -0.5]];
    let f = fixture(&pts, &[(0, 1), (1, 2), (1, 3), (2, 0), (3, 0)], 1.0, 0.5);
    let u = SupportSet::new(&f.model, ids(&[0, 2])).unwrap();
    let g = summary(&f.model, &u, &[vec![0, 3]]);
    let obs = mask(4, &[0, 3]);
    let ws = enumerate_walks(&f.net, SegmentId(0), 2, &obs).unwrap();
    assert_eq!(ws.len(), 2);
    let round = SensingRound::new(&f.model, &u, &g, vec![ws], &obs).unwrap();
    let plan = round.component_joint_walk(&[0]).unwrap();
    assert_eq!(round.joint_walk(&[0], &plan.choice).y, ids(&[1, 2]));
    assert!(round.objective(&[0], &[0]) > round.objective(&[0], &[1]));
}

/// Brute force over every joint walk with the objective covariance built
/// from dense inverses. Returns the first maximizer and its objective.
fn brute_force(
    model: &GpModel,
    u: &SupportSet,
    g: &GlobalSummary,
    walk_sets: &[WalkSet],
    observed: &[bool],
) -> (Vec<usize>, f64) {
    let sizes: Vec<usize> = walk_sets.iter().map(WalkSet::len).collect();
    let total: usize = sizes.iter().product();
    let mut best = (Vec::new(), f64::NEG_INFINITY);
    for mut code in 0..total {
        let mut choice = vec![0; sizes.len()];
        for i in (0..sizes.len()).rev() {
            choice[i] = code % sizes[i];
            code /= sizes[i];
        }
        let per: Vec<Vec<SegmentId>> =
            walk_sets.iter().zip(&choice).map(|(w, &c)| w.walks[c].unobserved(observed)).collect();
        let m = structured_covariance(model, u, g, &per).unwrap();
        let n = m.nrows();
        let v = if n == 0 {
            0.0
        } else {
            n as f64 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln() + m.determinant().ln()
        };
        if v > best.1 {
            best = (choice, v);
        }
    }
    best
}

#[test]
fn two_sensor_search_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..10 {
        let inst = random_sensing_instance(&mut rng, 10, 2, 1).unwrap();
        assert!(inst.walk_sets.iter().all(|w| w.len() == 2));
        let round = inst.round().unwrap();
        let plan = round.component_joint_walk(&[0, 1]).unwrap();
        let (choice, value) = brute_force(&inst.model, &inst.support, &inst.global, &inst.walk_sets, &inst.observed);
        assert!((plan.objective - value).abs() <= 1e-8 * value.abs().max(1.0));
        let picked = round.objective(&[0, 1], &plan.choice);
        let best = round.objective(&[0, 1], &choice);
        assert!((picked - best).abs() <= 1e-9 * best.abs().max(1.0));
    }
}

#[test]
fn centralized_search_agrees_with_components() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..8 {
        // one sensor: the whole network is one component
        let inst = random_sensing_instance(&mut rng, 10, 1, 2).unwrap();
        let round = inst.round().unwrap();
        assert_eq!(round.centralized_walk_max().unwrap(), round.component_joint_walk(&[0]).unwrap());

        let inst = random_sensing_instance(&mut rng, 12, 2, 2).unwrap();
        let round = inst.round().unwrap();
        let complete = CoordinationGraph::from_rows(vec![vec![false, true], vec![true, false]]).unwrap();
        let plans = round.decentralized(&complete).unwrap();
        let star = round.centralized_walk_max().unwrap();
        assert_eq!(round.assemble(&plans), star.choice);
        assert_eq!(plans[0].objective, star.objective);
    }
}

#[test]
fn tiny_threshold_reproduces_the_centralized_choice() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut checked = 0;
    for _ in 0..20 {
        let inst = random_sensing_instance(&mut rng, 12, 2, 2).unwrap();
        let round = inst.round().unwrap();
        let graph = build_coordination_graph(&round.phis(), 1e-12).unwrap();
        if graph.kappa != 2 {
            continue;
        }
        checked += 1;
        let hat = round.assemble(&round.decentralized(&graph).unwrap());
        assert_eq!(hat, round.centralized_walk_max().unwrap().choice);
    }
    assert!(checked >= 10);
}

#[test]
fn phi_adjacency_matches_dense_evaluation() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..20 {
        let inst = random_sensing_instance(&mut rng, 14, 3, 2).unwrap();
        let round = inst.round().unwrap();
        let g_inv = inst.global.sigma.clone().try_inverse().unwrap();
        let cov = inst.model.cov();
        let us = inst.support.segments();
        for eps in [1e-1, 1e-2, 1e-4] {
            let graph = build_coordination_graph(&round.phis(), eps).unwrap();
            for a in 0..3 {
                for b in 0..3 {
                    let ya = &inst.walk_sets[a].unobserved;
                    let yb = &inst.walk_sets[b].unobserved;
                    let direct = if a == b || ya.is_empty() || yb.is_empty() {
                        false
                    } else {
                        (cov.cross(ya, us) * &g_inv * cov.cross(us, yb)).amax() > eps
                    };
                    assert_eq!(graph.adjacency[a][b], direct);
                }
            }
        }
    }
}

#[test]
fn component_optima_sum_to_the_block_diagonal_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    let mut split = 0;
    for _ in 0..20 {
        let inst = random_sensing_instance(&mut rng, 14, 3, 1).unwrap();
        let round = inst.round().unwrap();
        let graph = build_coordination_graph(&round.phis(), 1e-2).unwrap();
        if graph.components.len() > 1 {
            split += 1;
        }
        let plans = round.decentralized(&graph).unwrap();
        let sum: f64 = plans.iter().map(|p| p.objective).sum();
        let owner: Vec<usize> = (0..3).map(|k| graph.component_of(k)).collect();
        let all = [0, 1, 2];
        let mut best = f64::NEG_INFINITY;
        let sizes: Vec<usize> = round.sensors().iter().map(|s| s.walks.len()).collect();
        for a in 0..sizes[0] {
            for b in 0..sizes[1] {
                for c in 0..sizes[2] {
                    let choice = [a, b, c];
                    let full = round.joint_matrix(&all, &choice);
                    let tags: Vec<usize> = all
                        .iter()
                        .flat_map(|&k| std::iter::repeat_n(owner[k], round.sensors()[k].y_per_walk[choice[k]].len()))
                        .collect();
                    let hat = DMatrix::from_fn(full.nrows(), full.ncols(), |i, j| {
                        if tags[i] == tags[j] {
                            full[(i, j)]
                        } else {
                            0.0
                        }
                    });
                    best = best.max(log_det_objective(&hat));
                }
            }
        }
        assert!((sum - best).abs() <= 1e-9 * best.abs().max(1.0), "{sum} vs {best}");
    }
    assert!(split > 0);
}

#[test]
fn kappa_shrinks_as_the_threshold_grows() {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    for _ in 0..10 {
        let inst = random_sensing_instance(&mut rng, 16, 4, 1).unwrap();
        let phis = inst.round().unwrap().phis();
        let mut last = usize::MAX;
        for e in -12..=3 {
            let kappa = build_coordination_graph(&phis, 10f64.powi(e)).unwrap().kappa;
            assert!(kappa <= last);
            last = kappa;
        }
    }
}

#[test]
fn independent_regions_have_no_gap() {
    // two copies of a branching network, far apart in the embedding
    let mut pts = Vec::new();
    let mut edges = Vec::new();
    for (r, off) in [0.0, 1000.0].into_iter().enumerate() {
        let b = 4 * r as u64;
        pts.extend([[off, 0.0], [off + 1.0, 0.3], [off + 1.0, -0.3], [off + 2.0, 0.0]]);
        edges.extend([(b, b + 1), (b, b + 2), (b + 1, b + 3), (b + 2, b + 3), (b + 3, b)]);
    }
    let f = fixture(&pts, &edges, 1.0, 0.2);
    let u = SupportSet::new(&f.model, ids(&[3, 7])).unwrap();
    let g = summary(&f.model, &u, &[vec![0], vec![4]]);
    let obs = mask(8, &[0, 4]);
    let walk_sets = [0, 4]
        .iter()
        .map(|&o| enumerate_walks(&f.net, SegmentId(o), 1, &obs).unwrap())
        .collect();
    let round = SensingRound::new(&f.model, &u, &g, walk_sets, &obs).unwrap();
    let r = theorem2_check(&round, 1, 1e-300).unwrap();
    assert_eq!(r.kappa, 1);
    assert_eq!(r.gap, 0.0);
    assert!(r.condition_holds && r.bound_ok);
}

#[test]
fn failed_precondition_makes_the_bound_vacuous() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let inst = random_sensing_instance(&mut rng, 10, 2, 2).unwrap();
    let round = inst.round().unwrap();
    let r = theorem2_check(&round, 2, 1e6).unwrap();
    assert!(!r.condition_holds);
    assert!(r.eps_bar.is_infinite());
    assert!(r.gap >= -1e-9 && r.bound_ok);
}
