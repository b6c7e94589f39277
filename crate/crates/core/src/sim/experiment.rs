//! Experiment orchestration: scenario construction and repeated rounds.

use std::sync::Arc;

use rayon::prelude::*;

use crate::config::{KernelConfig, NetworkSource, RunConfig};
use crate::embedding::{mds_embed, mds_embed_auto};
use crate::error::{Error, Result};
use crate::generate::{generate_network, NetworkKind};
use crate::geodesic::shortest_path_distances;
use crate::gp::GpModel;
use crate::kernel::{CovarianceModel, KernelHyper};
use crate::network::RoadNetwork;
use crate::sim::metrics::RoundMetrics;
use crate::sim::phenomenon::{sample_phenomenon, Phenomenon};
use crate::sim::world::{Algorithm, Scenario, Settings, World};

pub fn build_network(src: &NetworkSource) -> Result<RoadNetwork> {
    match (&src.path, &src.kind) {
        (Some(path), _) => RoadNetwork::load(path),
        (None, Some(kind)) => generate_network(NetworkKind::parse(kind)?, src.size.unwrap_or(0), src.seed),
        (None, None) => Err(Error::Config(vec!["network: one of `path` or `kind` is required".into()])),
    }
}

pub fn hyper_for(k: &KernelConfig, dim: usize) -> Result<KernelHyper> {
    let length_scales = match (&k.length_scales, k.length_scale) {
        (Some(ls), _) => ls.clone(),
        (None, Some(l)) => vec![l; dim],
        (None, None) => return Err(Error::Hyperparameters("no length-scale given".into())),
    };
    Ok(KernelHyper { signal_variance: k.signal_variance, length_scales, noise_variance: k.noise_variance })
}

/// Network, embedding, kernel, ground truth and support set for `cfg`.
pub fn prepare(cfg: &RunConfig) -> Result<Scenario> {
    let net = build_network(&cfg.network)?;
    let geodesic = shortest_path_distances(&net);
    let emb = match cfg.kernel.embedding_dimension {
        Some(d) => mds_embed(&geodesic, d)?,
        None => mds_embed_auto(&geodesic)?,
    };
    let cov = Arc::new(CovarianceModel::new(&emb, hyper_for(&cfg.kernel, emb.dimension())?)?);
    let ph = &cfg.phenomenon;
    let truth = match &ph.file {
        Some(path) => Phenomenon::load(path, &net)?,
        None => {
            let mut t = sample_phenomenon(&GpModel::with_constant_mean(ph.mean, Arc::clone(&cov)), ph.seed)?;
            if ph.match_moments {
                t.match_moments(ph.mean, ph.std);
            }
            t
        }
    };
    Scenario::new(net, geodesic, cov, cfg.support_size, truth)
}

/// Rounds until `budget` observation events are reached; the last row is
/// the prediction made with at least `budget` events. Budget 0 gives no rows.
pub fn run_world(scenario: &Scenario, settings: Settings, budget: usize) -> Result<Vec<RoundMetrics>> {
    let mut rows = Vec::new();
    if budget == 0 {
        return Ok(rows);
    }
    let max_rounds = 2 * budget + 10;
    let mut world = World::new(scenario, settings)?;
    loop {
        let done = world.observation_count() >= budget || rows.len() + 1 >= max_rounds;
        rows.push(world.step(!done)?);
        if done {
            return Ok(rows);
        }
    }
}

/// Every (seed, algorithm) pair of `cfg` on a prepared scenario, ordered by
/// seed and then by the algorithm order of the config.
pub fn run_scenario(scenario: &Scenario, cfg: &RunConfig) -> Result<Vec<RoundMetrics>> {
    cfg.validate()?;
    let algorithms = cfg.algorithms.iter().map(|a| Algorithm::parse(a)).collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(u64, Algorithm)> =
        cfg.seeds.iter().flat_map(|&s| algorithms.iter().map(move |&a| (s, a))).collect();
    let runs = jobs
        .par_iter()
        .map(|&(seed, algorithm)| {
            let settings = Settings {
                algorithm,
                sensors: cfg.sensors,
                walk_length: cfg.walk_length,
                epsilon: cfg.epsilon,
                seed,
                drop_probability: cfg.drop_probability,
                record_timing: cfg.record_timing,
            };
            run_world(scenario, settings, cfg.budget)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(runs.into_iter().flatten().collect())
}

pub fn run_experiment(cfg: &RunConfig) -> Result<Vec<RoundMetrics>> {
    cfg.validate()?;
    let scenario = prepare(cfg)?;
    run_scenario(&scenario, cfg)
}
