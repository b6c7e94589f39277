//! Random small instances and the property suites run by `verify`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::embedding::{mds_embed, mds_embed_auto, Embedding};
use crate::error::{Error, Result};
use crate::fusion::{check_equivalence, global_summary, local_summary, GlobalSummary, SupportSet};
use crate::geodesic::{shortest_path_distances, GeodesicMatrix};
use crate::gp::GpModel;
use crate::kernel::{CovarianceModel, KernelHyper};
use crate::linalg::SpdFactor;
use crate::network::{RoadNetwork, SegmentId};
use crate::sensing::bound::theorem2_check_with_graph;
use crate::sensing::coordination::build_coordination_graph;
use crate::sensing::planner::SensingRound;
use crate::sensing::walks::{enumerate_walks, WalkSet};

/// Names accepted by [`run_suite`].
pub const SUITES: [&str; 3] = ["equivalence", "bound", "kernel"];

/// Thresholds tried from largest to smallest when looking for one that
/// satisfies the guarantee's precondition.
pub const EPS_LADDER: [f64; 8] = [1e-1, 3e-2, 1e-2, 3e-3, 1e-3, 3e-4, 1e-4, 1e-5];

/// Random directed network: a ring through all `n` segments (so it is
/// strongly connected) plus, per segment, a second successor with
/// probability `extra`. Out-degree is at most 2.
pub fn random_network(rng: &mut impl Rng, n: usize, extra: f64) -> RoadNetwork {
    let segments = (0..n as u64)
        .map(|i| (i, vec![rng.random_range(0.0..100.0), rng.random_range(1.0..4.0)]))
        .collect();
    let mut edges: Vec<(u64, u64)> = (0..n as u64).map(|i| (i, (i + 1) % n as u64)).collect();
    if n > 2 {
        for i in 0..n as u64 {
            if rng.random_bool(extra) {
                // any segment other than itself and its ring successor
                let mut j = rng.random_range(0..n as u64 - 2);
                for skip in [i.min((i + 1) % n as u64), i.max((i + 1) % n as u64)] {
                    if j >= skip {
                        j += 1;
                    }
                }
                edges.push((i, j));
            }
        }
    }
    if n == 1 {
        edges.clear();
    }
    RoadNetwork::new(segments, vec![100.0, 3.0], &edges).expect("generated network is valid")
}

/// Embeds `net` and wraps it in a zero-mean model.
pub fn model_for(net: &RoadNetwork, signal: f64, length_scale: f64, noise: f64) -> Result<(Embedding, GpModel)> {
    let d = shortest_path_distances(net);
    let emb = mds_embed_auto(&d)?;
    let h = KernelHyper::isotropic(signal, length_scale, noise, emb.dimension());
    let cov = CovarianceModel::new(&emb, h)?;
    Ok((emb, GpModel::with_constant_mean(0.0, Arc::new(cov))))
}

/// Model with a random prior mean on random planar points.
pub fn random_point_model(rng: &mut impl Rng, n: usize, noise: f64) -> GpModel {
    let pts: Vec<f64> = (0..2 * n).map(|_| rng.random_range(0.0..4.0)).collect();
    let emb = Embedding::from_coords(DMatrix::from_row_slice(n, 2, &pts), &DMatrix::zeros(n, n));
    let h = KernelHyper::isotropic(rng.random_range(0.5..2.0), rng.random_range(0.5..1.5), noise, 2);
    let mean = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    GpModel::new(mean, Arc::new(CovarianceModel::new(&emb, h).expect("valid hyperparameters")))
        .expect("mean length matches")
}

/// One data-fusion instance: support set, partitioned data and targets.
pub struct FusionInstance {
    pub model: GpModel,
    pub support: SupportSet,
    pub partition: Vec<Vec<SegmentId>>,
    pub z: Vec<Vec<f64>>,
    pub targets: Vec<SegmentId>,
}

/// `|V|` in `[10, 40]`, `K` in `[1, 4]`, `|U|` in `[2, 8]`; the data blocks
/// are disjoint and disjoint from the targets.
pub fn random_fusion_instance(rng: &mut impl Rng) -> FusionInstance {
    let n = rng.random_range(10..=40);
    let noise = rng.random_range(0.05..0.5);
    let model = random_point_model(rng, n, noise);
    let k = rng.random_range(1..=4);
    let m = rng.random_range(2..=8);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let support = SupportSet::new(&model, order[..m].iter().map(|&i| SegmentId(i)).collect())
        .expect("noisy support covariance is positive definite");
    order.shuffle(rng);
    let n_targets = rng.random_range(1..=n / 3);
    let targets: Vec<SegmentId> = order[..n_targets].iter().map(|&i| SegmentId(i)).collect();
    let data = &order[n_targets..];
    let n_data = rng.random_range(0..=data.len());
    let mut partition = vec![Vec::new(); k];
    for &i in &data[..n_data] {
        partition[rng.random_range(0..k)].push(SegmentId(i));
    }
    let z = partition
        .iter()
        .map(|p| p.iter().map(|_| rng.random_range(-3.0..3.0)).collect())
        .collect();
    FusionInstance { model, support, partition, z, targets }
}

/// One active-sensing selection round on a small random network.
pub struct SensingInstance {
    pub net: RoadNetwork,
    pub model: GpModel,
    pub support: SupportSet,
    pub global: GlobalSummary,
    pub observed: Vec<bool>,
    pub observed_list: Vec<SegmentId>,
    pub z: Vec<f64>,
    pub origins: Vec<SegmentId>,
    pub walk_length: usize,
    pub walk_sets: Vec<WalkSet>,
}

impl SensingInstance {
    pub fn round(&self) -> Result<SensingRound> {
        SensingRound::new(&self.model, &self.support, &self.global, self.walk_sets.clone(), &self.observed)
    }
}

/// `k` sensors walking `l` steps on a random network of `n` segments with
/// out-degree exactly 2. Each sensor has observed its origin and a few
/// random segments.
pub fn random_sensing_instance(rng: &mut impl Rng, n: usize, k: usize, l: usize) -> Result<SensingInstance> {
    let fraction = rng.random_range(0.05..0.4);
    sensing_instance_with_scale(rng, n, k, l, fraction)
}

/// As [`random_sensing_instance`] with the length-scale fixed at `fraction`
/// of the embedding spread.
pub fn sensing_instance_with_scale(
    rng: &mut impl Rng,
    n: usize,
    k: usize,
    l: usize,
    fraction: f64,
) -> Result<SensingInstance> {
    let net = random_network(rng, n, 1.0);
    let d = shortest_path_distances(&net);
    let emb = mds_embed_auto(&d)?;
    let spread = embedding_spread(&emb);
    let h = KernelHyper::isotropic(1.0, spread * fraction, rng.random_range(0.05..0.3), emb.dimension());
    let model = GpModel::with_constant_mean(0.0, Arc::new(CovarianceModel::new(&emb, h)?));
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let origins: Vec<SegmentId> = order[..k].iter().map(|&i| SegmentId(i)).collect();
    let mut per_sensor: Vec<Vec<SegmentId>> = origins.iter().map(|&s| vec![s]).collect();
    for &i in &order[k..] {
        if rng.random_bool(0.2) {
            per_sensor[rng.random_range(0..k)].push(SegmentId(i));
        }
    }
    let truth = sample_prior(rng, &model)?;
    let z: Vec<Vec<f64>> = per_sensor.iter().map(|d| d.iter().map(|s| truth[s.0]).collect()).collect();
    let m = rng.random_range(2..=4.min(n));
    order.shuffle(rng);
    let support = SupportSet::new(&model, order[..m].iter().map(|&i| SegmentId(i)).collect())?;
    let locals = per_sensor
        .iter()
        .zip(&z)
        .enumerate()
        .map(|(i, (d, zk))| local_summary(&model, &support, i, d, zk))
        .collect::<Result<Vec<_>>>()?;
    let global = global_summary(&support, &locals)?;
    let mut observed = vec![false; n];
    let observed_list: Vec<SegmentId> = per_sensor.iter().flatten().copied().collect();
    for s in &observed_list {
        observed[s.0] = true;
    }
    let walk_sets = origins
        .iter()
        .map(|&o| enumerate_walks(&net, o, l, &observed))
        .collect::<Result<Vec<_>>>()?;
    Ok(SensingInstance {
        net,
        model,
        support,
        global,
        observed,
        observed_list,
        z: z.into_iter().flatten().collect(),
        origins,
        walk_length: l,
        walk_sets,
    })
}

fn sample_prior(rng: &mut impl Rng, model: &GpModel) -> Result<Vec<f64>> {
    let f = SpdFactor::new(model.cov().gram())?;
    let xi = DVector::from_iterator(model.len(), (0..model.len()).map(|_| rng.sample::<f64, _>(StandardNormal)));
    Ok((f.lower() * xi).iter().zip(model.prior_mean()).map(|(a, m)| a + m).collect())
}

/// Largest coordinate range over the embedding axes.
pub fn embedding_spread(emb: &Embedding) -> f64 {
    let c = emb.coords();
    (0..c.ncols())
        .map(|j| c.column(j).max() - c.column(j).min())
        .fold(0.0, f64::max)
        .max(1e-9)
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub trials: usize,
    pub seed: u64,
    pub passed: usize,
    pub failed: usize,
    /// Trials that did not exercise the property (for example, no threshold
    /// satisfied the guarantee's precondition).
    pub skipped: usize,
    pub all_passed: bool,
    pub details: Vec<serde_json::Value>,
}

impl SuiteReport {
    fn new(suite: &str, trials: usize, seed: u64) -> Self {
        Self {
            suite: suite.into(),
            trials,
            seed,
            passed: 0,
            failed: 0,
            skipped: 0,
            all_passed: true,
            details: Vec::new(),
        }
    }

    fn record(&mut self, ok: Option<bool>, detail: serde_json::Value) {
        match ok {
            Some(true) => self.passed += 1,
            Some(false) => {
                self.failed += 1;
                self.all_passed = false;
            }
            None => self.skipped += 1,
        }
        self.details.push(detail);
    }
}

pub fn run_suite(suite: &str, trials: usize, seed: u64) -> Result<SuiteReport> {
    match suite {
        "equivalence" => Ok(equivalence_suite(trials, seed)),
        "bound" => Ok(bound_suite(trials, seed)),
        "kernel" => Ok(kernel_suite(trials, seed)),
        other => Err(Error::Config(vec![format!(
            "unknown suite `{other}`; expected one of {}",
            SUITES.join(", ")
        )])),
    }
}

/// Decentralized prediction against the PITC oracle at tolerance `1e-8`.
pub fn equivalence_suite(trials: usize, seed: u64) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = SuiteReport::new("equivalence", trials, seed);
    for trial in 0..trials {
        let inst = random_fusion_instance(&mut rng);
        let r = check_equivalence(&inst.model, &inst.support, &inst.partition, &inst.z, &inst.targets, 1e-8);
        report.record(
            Some(r.passed),
            serde_json::json!({
                "trial": trial,
                "segments": inst.model.len(),
                "sensors": inst.partition.len(),
                "support": inst.support.len(),
                "report": r,
            }),
        );
    }
    report
}

/// Instance sizes used by the bound suite for a given trial.
pub fn bound_shape(rng: &mut impl Rng) -> (usize, usize, usize) {
    let n = rng.random_range(8..=16);
    let k = rng.random_range(2..=3);
    let l = rng.random_range(1..=2);
    (n, k, l)
}

/// Theorem-style guarantee on instances where some threshold from
/// [`EPS_LADDER`] satisfies the precondition.
pub fn bound_suite(trials: usize, seed: u64) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = SuiteReport::new("bound", trials, seed);
    for trial in 0..trials {
        let (n, k, l) = bound_shape(&mut rng);
        let outcome = bound_trial(&mut rng, n, k, l);
        match outcome {
            Ok(Some(r)) => {
                let ok = r.bound_ok && r.sandwich.violations == 0;
                report.record(Some(ok), serde_json::json!({ "trial": trial, "report": r }));
            }
            Ok(None) => report.record(None, serde_json::json!({ "trial": trial, "skipped": "no threshold met the precondition" })),
            Err(e) => report.record(Some(false), serde_json::json!({ "trial": trial, "error": e.to_string() })),
        }
    }
    report
}

/// Builds one instance and checks the largest ladder threshold whose
/// precondition holds.
pub fn bound_trial(
    rng: &mut impl Rng,
    n: usize,
    k: usize,
    l: usize,
) -> Result<Option<crate::sensing::BoundReport>> {
    let inst = random_sensing_instance(rng, n, k, l)?;
    let round = inst.round()?;
    let phis = round.phis();
    for eps in EPS_LADDER {
        let graph = build_coordination_graph(&phis, eps)?;
        let r = theorem2_check_with_graph(&round, l, eps, &graph)?;
        if r.condition_holds {
            return Ok(Some(r));
        }
    }
    Ok(None)
}

/// Prior gram matrices on random networks factor with jitter at most
/// `1e-8`, and MDS reproduces Euclidean point sets with stress at most
/// `1e-6`.
pub fn kernel_suite(trials: usize, seed: u64) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = SuiteReport::new("kernel", trials, seed);
    for trial in 0..trials {
        let r = kernel_trial(&mut rng);
        match r {
            Ok(t) => {
                let ok = t.jitter <= 1e-8 && t.stress <= 1e-6;
                report.record(Some(ok), serde_json::to_value(&t).unwrap_or_default());
            }
            Err(e) => report.record(Some(false), serde_json::json!({ "trial": trial, "error": e.to_string() })),
        }
    }
    report
}

#[derive(Clone, Debug, Serialize)]
pub struct KernelTrial {
    pub segments: usize,
    pub dimension: usize,
    pub jitter: f64,
    pub stress: f64,
    /// Stress over the sum of squared distances.
    pub relative_stress: f64,
}

pub fn kernel_trial(rng: &mut impl Rng) -> Result<KernelTrial> {
    let n = rng.random_range(5..=60);
    let extra = rng.random_range(0.0..1.0);
    let net = random_network(rng, n, extra);
    let d = shortest_path_distances(&net);
    let emb = mds_embed_auto(&d)?;
    let h = KernelHyper::isotropic(
        rng.random_range(0.1..500.0),
        embedding_spread(&emb) * rng.random_range(0.05..1.0),
        rng.random_range(0.0..2.0),
        emb.dimension(),
    );
    let cov = CovarianceModel::new(&emb, h)?;
    let all: Vec<SegmentId> = (0..n).map(SegmentId).collect();
    let f = SpdFactor::new(&cov.block(&all))?;

    let p = rng.random_range(1..=3);
    let m = rng.random_range(p + 1..=20);
    let pts = DMatrix::from_fn(m, p, |_, _| rng.random_range(-10.0..10.0));
    let rows: Vec<Vec<f64>> = (0..m)
        .map(|i| (0..m).map(|j| (pts.row(i) - pts.row(j)).norm()).collect())
        .collect();
    let total: f64 = rows.iter().flatten().map(|v| v * v).sum::<f64>() / 2.0;
    let g = GeodesicMatrix::from_rows(rows);
    let e = mds_embed(&g, p)?;
    Ok(KernelTrial {
        segments: n,
        dimension: emb.dimension(),
        jitter: f.jitter(),
        stress: e.stress(),
        relative_stress: e.stress() / total.max(f64::MIN_POSITIVE),
    })
}
