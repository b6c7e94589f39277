//! Lockstep simulation of mobile sensors.
//!
//! Each round the sensors fuse their data, predict the phenomenon over the
//! whole network, choose their next walks and then drive them, measuring
//! every segment they traverse. Three algorithms share this loop:
//!
//! * `d2fas`: local summaries over the support set, Φ sets and adjacency
//!   vectors on the bus, per-component joint walk selection;
//! * `full-gp-centralized`: every sensor ships its raw data to a centre
//!   that runs the exact GP and an exhaustive joint walk search;
//! * `sod-centralized`: like the previous one, but the centre conditions on
//!   a greedily chosen subset of `|U|` observed segments.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::DVector;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fusion::{global_summary, local_summary, predict_marginals_decentralized, wire, GlobalSummary, SupportSet};
use crate::geodesic::GeodesicMatrix;
use crate::gp::{greedy_select, GpModel};
use crate::kernel::CovarianceModel;
use crate::linalg::{self, SpdFactor};
use crate::network::{RoadNetwork, SegmentId};
use crate::sensing::coordination::{adjacency_bytes, adjacency_vector, CoordinationGraph};
use crate::sensing::planner::{centralized_union_walk_max, sensor_candidates, CandidatePosterior, SensingRound, MAX_JOINT_WALKS};
use crate::sensing::walks::{enumerate_walks, Walk, WalkSet};
use crate::sim::bus::{self, Bus, MessageKind};
use crate::sim::metrics::{rmse, RoundMetrics};
use crate::sim::phenomenon::{observe, Phenomenon};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Algorithm {
    D2fas,
    FullGp,
    Sod,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::D2fas, Algorithm::FullGp, Algorithm::Sod];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::D2fas => "d2fas",
            Algorithm::FullGp => "full-gp-centralized",
            Algorithm::Sod => "sod-centralized",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|a| a.name() == name).ok_or_else(|| {
            Error::Config(vec![format!(
                "unknown algorithm `{name}`; valid names are {}",
                Self::ALL.map(|a| a.name()).join(", ")
            )])
        })
    }
}

/// Observed segments `D_k`, their latest measurements and the current
/// position of sensor `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct SensorState {
    pub id: usize,
    pub observed: Vec<SegmentId>,
    pub z: Vec<f64>,
    pub position: SegmentId,
}

impl SensorState {
    pub fn new(id: usize, position: SegmentId) -> Self {
        Self { id, observed: Vec::new(), z: Vec::new(), position }
    }

    /// Adds a measurement, replacing an older one of the same segment.
    pub fn record(&mut self, s: SegmentId, value: f64) {
        match self.observed.iter().position(|&x| x == s) {
            Some(i) => self.z[i] = value,
            None => {
                self.observed.push(s);
                self.z.push(value);
            }
        }
    }

    pub fn len(&self) -> usize {
        self.observed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observed.is_empty()
    }
}

/// Everything shared by the runs of one experiment.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub net: RoadNetwork,
    pub geodesic: GeodesicMatrix,
    pub cov: Arc<CovarianceModel>,
    pub support: SupportSet,
    pub truth: Phenomenon,
}

impl Scenario {
    /// Chooses the support set once, by greedy maximum-variance selection of
    /// `support_size` segments over the whole network.
    pub fn new(
        net: RoadNetwork,
        geodesic: GeodesicMatrix,
        cov: Arc<CovarianceModel>,
        support_size: usize,
        truth: Phenomenon,
    ) -> Result<Self> {
        let model = GpModel::with_constant_mean(0.0, Arc::clone(&cov));
        let all: Vec<SegmentId> = net.segments().collect();
        let u = greedy_select(&model, &all, support_size.min(all.len()), &[])?;
        Self::with_support(net, geodesic, cov, u, truth)
    }

    pub fn with_support(
        net: RoadNetwork,
        geodesic: GeodesicMatrix,
        cov: Arc<CovarianceModel>,
        support: Vec<SegmentId>,
        truth: Phenomenon,
    ) -> Result<Self> {
        if cov.len() != net.len() || truth.len() != net.len() || geodesic.len() != net.len() {
            return Err(Error::DimensionMismatch { expected: net.len(), got: cov.len() });
        }
        let model = GpModel::with_constant_mean(0.0, Arc::clone(&cov));
        let support = SupportSet::new(&model, support)?;
        Ok(Self { net, geodesic, cov, support, truth })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Settings {
    pub algorithm: Algorithm,
    pub sensors: usize,
    pub walk_length: usize,
    pub epsilon: f64,
    pub seed: u64,
    pub drop_probability: f64,
    pub record_timing: bool,
}

/// Result of the fusion phase.
enum Fused {
    Decentralized { model: GpModel, global: GlobalSummary },
    Central { model: GpModel, events: Vec<SegmentId>, factor: SpdFactor },
}

pub struct World<'a> {
    scenario: &'a Scenario,
    settings: Settings,
    sensors: Vec<SensorState>,
    bus: Bus,
    noise: ChaCha8Rng,
    round: usize,
    last_walks: Vec<Walk>,
}

impl<'a> World<'a> {
    /// Places the sensors uniformly at random, on distinct segments when
    /// there are enough, and lets each measure its starting segment.
    pub fn new(scenario: &'a Scenario, settings: Settings) -> Result<Self> {
        if settings.sensors < 1 {
            return Err(Error::Config(vec!["sensors must be at least 1".into()]));
        }
        let n = scenario.net.len();
        let mut place = ChaCha8Rng::seed_from_u64(settings.seed);
        let starts: Vec<usize> = if settings.sensors <= n {
            index::sample(&mut place, n, settings.sensors).into_vec()
        } else {
            (0..settings.sensors).map(|_| place.random_range(0..n)).collect()
        };
        let positions: Vec<SegmentId> = starts.into_iter().map(SegmentId).collect();
        Self::with_positions(scenario, settings, &positions)
    }

    pub fn with_positions(scenario: &'a Scenario, settings: Settings, positions: &[SegmentId]) -> Result<Self> {
        if positions.is_empty() || settings.walk_length < 1 {
            return Err(Error::Config(vec!["sensors and walk_length must be at least 1".into()]));
        }
        if !(settings.epsilon > 0.0) {
            return Err(Error::Threshold(settings.epsilon));
        }
        let mut noise = ChaCha8Rng::seed_from_u64(settings.seed);
        noise.set_stream(1);
        let bus = Bus::lossy(settings.drop_probability, settings.seed);
        let noise_var = scenario.cov.noise_variance();
        let mut sensors = Vec::with_capacity(positions.len());
        for (k, &s) in positions.iter().enumerate() {
            if !scenario.net.contains(s) {
                return Err(Error::UnknownSegment(s.0));
            }
            let mut st = SensorState::new(k, s);
            st.record(s, observe(&scenario.truth, &[s], noise_var, &mut noise)[0]);
            sensors.push(st);
        }
        let settings = Settings { sensors: positions.len(), ..settings };
        Ok(Self { scenario, settings, sensors, bus, noise, round: 0, last_walks: Vec::new() })
    }

    pub fn sensors(&self) -> &[SensorState] {
        &self.sensors
    }

    pub fn settings(&self) -> &Settings {
        &self.settings
    }

    /// Walks driven in the most recent sensing phase, by sensor.
    pub fn last_walks(&self) -> &[Walk] {
        &self.last_walks
    }

    pub fn bus(&self) -> &Bus {
        &self.bus
    }

    /// Observation events `Σ_k |D_k|`.
    pub fn observation_count(&self) -> usize {
        self.sensors.iter().map(SensorState::len).sum()
    }

    /// `⋃_k D_k` as a mask over segments.
    pub fn observed_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.scenario.net.len()];
        for s in &self.sensors {
            for x in &s.observed {
                mask[x.0] = true;
            }
        }
        mask
    }

    /// Fuses the current data and predicts every segment.
    pub fn predicted_means(&mut self) -> Result<Vec<f64>> {
        Ok(self.fuse()?.0)
    }

    /// A full round: fusion, prediction, walk selection and execution.
    pub fn round(&mut self) -> Result<RoundMetrics> {
        self.step(true)
    }

    /// Fuses and predicts; when `sense` is set, also plans and drives the
    /// next walks.
    pub fn step(&mut self, sense: bool) -> Result<RoundMetrics> {
        let observations = self.observation_count();
        let (means, fusion_seconds, fused) = self.fuse()?;
        let error = rmse(&means, &self.scenario.truth.values);
        let (sensing_seconds, kappa) = if sense { self.sense(&fused)? } else { (0.0, 0) };
        let keep = |t: f64| if self.settings.record_timing { t } else { 0.0 };
        let metrics = RoundMetrics {
            round: self.round,
            algorithm: self.settings.algorithm.name().into(),
            sensors: self.settings.sensors,
            walk_length: self.settings.walk_length,
            support_size: self.scenario.support.len(),
            epsilon: self.settings.epsilon,
            seed: self.settings.seed,
            observations,
            rmse: error,
            fusion_seconds: keep(fusion_seconds),
            sensing_seconds: keep(sensing_seconds),
            bytes_broadcast: self.bus.take_round_bytes(),
            kappa,
        };
        self.round += 1;
        Ok(metrics)
    }

    fn all_segments(&self) -> Vec<SegmentId> {
        self.scenario.net.segments().collect()
    }

    fn fuse(&mut self) -> Result<(Vec<f64>, f64, Fused)> {
        match self.settings.algorithm {
            Algorithm::D2fas => self.fuse_decentralized(),
            Algorithm::FullGp | Algorithm::Sod => self.fuse_central(),
        }
    }

    fn fuse_decentralized(&mut self) -> Result<(Vec<f64>, f64, Fused)> {
        let sc = self.scenario;
        let (mut sum, mut count) = (0.0, 0u64);
        for s in &self.sensors {
            let msg = bus::mean_statistic(s.z.iter().sum(), s.z.len() as u64);
            let got = self.bus.broadcast(MessageKind::MeanStatistic, msg).expect("reliable message");
            let (a, b) = bus::read_mean_statistic(&got).expect("16-byte statistic");
            sum += a;
            count += b;
        }
        let mean = if count > 0 { sum / count as f64 } else { 0.0 };
        let model = GpModel::with_constant_mean(mean, Arc::clone(&sc.cov));

        let locals = self
            .sensors
            .par_iter()
            .map(|s| {
                let t = Instant::now();
                let l = local_summary(&model, &sc.support, s.id, &s.observed, &s.z)?;
                Ok((l, t.elapsed().as_secs_f64()))
            })
            .collect::<Result<Vec<_>>>()?;
        let local_max = locals.iter().map(|l| l.1).fold(0.0, f64::max);
        let mut delivered = Vec::with_capacity(locals.len());
        for (l, _) in &locals {
            if let Some(bytes) = self.bus.broadcast(MessageKind::LocalSummary, wire::to_bytes(l)) {
                delivered.push(wire::from_bytes(&bytes, &sc.support)?);
            }
        }
        let t = Instant::now();
        let global = global_summary(&sc.support, &delivered)?;
        let (means, _) = predict_marginals_decentralized(&model, &sc.support, &global, &self.all_segments())?;
        let shared = t.elapsed().as_secs_f64();
        Ok((means.as_slice().to_vec(), local_max + shared, Fused::Decentralized { model, global }))
    }

    fn fuse_central(&mut self) -> Result<(Vec<f64>, f64, Fused)> {
        let sc = self.scenario;
        let labels = sc.net.labels();
        for s in &self.sensors {
            let ids: Vec<u64> = s.observed.iter().map(|x| labels[x.0]).collect();
            self.bus.broadcast(MessageKind::RawObservations, bus::raw_observations(s.id, &ids, &s.z));
        }
        let t = Instant::now();
        let mut events: Vec<SegmentId> = self.sensors.iter().flat_map(|s| s.observed.iter().copied()).collect();
        let mut z: Vec<f64> = self.sensors.iter().flat_map(|s| s.z.iter().copied()).collect();
        let mean = z.iter().sum::<f64>() / z.len().max(1) as f64;
        let model = GpModel::with_constant_mean(mean, Arc::clone(&sc.cov));
        if self.settings.algorithm == Algorithm::Sod {
            (events, z) = subset_of_data(&model, &events, &z, sc.support.len())?;
        }
        let factor = SpdFactor::new(&sc.cov.block(&events))?;
        let alpha = factor.solve_vec(&model.centred(&events, &z)?);
        let all = self.all_segments();
        let means: DVector<f64> = model.mean_of(&all) + sc.cov.cross(&all, &events) * alpha;
        let seconds = t.elapsed().as_secs_f64();
        Ok((means.as_slice().to_vec(), seconds, Fused::Central { model, events, factor }))
    }

    /// Plans and drives the next walks. Returns the sensing time and `κ`.
    fn sense(&mut self, fused: &Fused) -> Result<(f64, usize)> {
        let sc = self.scenario;
        let mask = self.observed_mask();
        let walk_sets = self
            .sensors
            .iter()
            .map(|s| enumerate_walks(&sc.net, s.position, self.settings.walk_length, &mask))
            .collect::<Result<Vec<_>>>()?;
        let (mut choice, seconds, kappa) = match fused {
            Fused::Decentralized { model, global } => self.plan_decentralized(model, global, &walk_sets, &mask)?,
            Fused::Central { model, events, factor } => self.plan_central(model, events, factor, &walk_sets, &mask)?,
        };
        self.navigate_stranded(&walk_sets, &mut choice, &mask);
        let noise_var = sc.cov.noise_variance();
        self.last_walks.clear();
        for (k, ws) in walk_sets.iter().enumerate() {
            let walk = &ws.walks[choice[k]];
            let values = observe(&sc.truth, &walk.steps, noise_var, &mut self.noise);
            let st = &mut self.sensors[k];
            for (&s, v) in walk.steps.iter().zip(values) {
                st.record(s, v);
            }
            st.position = walk.terminus();
            self.last_walks.push(walk.clone());
        }
        Ok((seconds, kappa))
    }

    fn plan_decentralized(
        &mut self,
        model: &GpModel,
        global: &GlobalSummary,
        walk_sets: &[WalkSet],
        mask: &[bool],
    ) -> Result<(Vec<usize>, f64, usize)> {
        let sc = self.scenario;
        let timed = walk_sets
            .par_iter()
            .enumerate()
            .map(|(k, ws)| {
                let t = Instant::now();
                let c = sensor_candidates(model, &sc.support, global, k, ws.clone(), mask)?;
                Ok((c, t.elapsed().as_secs_f64()))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut per_sensor: Vec<f64> = timed.iter().map(|t| t.1).collect();
        let candidates: Vec<_> = timed.into_iter().map(|t| t.0).collect();
        for c in &candidates {
            self.bus.broadcast(MessageKind::PhiSet, c.phi.to_bytes());
        }
        let round = SensingRound::from_sensors(candidates);
        let phis = round.phis();
        let k = round.len();
        let mut rows = Vec::with_capacity(k);
        for (i, t) in per_sensor.iter_mut().enumerate() {
            let start = Instant::now();
            let row = adjacency_vector(i, &phis, self.settings.epsilon);
            *t += start.elapsed().as_secs_f64();
            let bytes: Vec<u8> = row.iter().map(|&b| b as u8).collect();
            debug_assert_eq!(bytes.len(), adjacency_bytes(k));
            self.bus.broadcast(MessageKind::Adjacency, bytes);
            rows.push(row);
        }
        let graph = CoordinationGraph::from_rows(rows)?;
        let mut plans = Vec::with_capacity(graph.components.len());
        for comp in &graph.components {
            let t = Instant::now();
            let plan = if round.joint_count(comp) <= MAX_JOINT_WALKS {
                round.component_joint_walk(comp)?
            } else {
                round.sequential_joint_walk(comp)
            };
            let dt = t.elapsed().as_secs_f64();
            for &m in comp {
                per_sensor[m] += dt;
            }
            plans.push(plan);
        }
        let seconds = per_sensor.iter().copied().fold(0.0, f64::max);
        Ok((round.assemble(&plans), seconds, graph.kappa))
    }

    fn plan_central(
        &mut self,
        model: &GpModel,
        events: &[SegmentId],
        factor: &SpdFactor,
        walk_sets: &[WalkSet],
        mask: &[bool],
    ) -> Result<(Vec<usize>, f64, usize)> {
        let cov = model.cov();
        let t = Instant::now();
        let mut cands: Vec<SegmentId> = walk_sets.iter().flat_map(|w| w.unobserved.iter().copied()).collect();
        cands.sort();
        cands.dedup();
        let a = factor.whiten(&cov.cross(events, &cands));
        let mut post = cov.block(&cands) - a.tr_mul(&a);
        linalg::symmetrize(&mut post);
        let post = CandidatePosterior::new(cov.len(), &cands, post);
        let count: u128 = walk_sets.iter().map(|w| w.len() as u128).product();
        let choice = if count <= MAX_JOINT_WALKS {
            centralized_union_walk_max(walk_sets, &post, mask)?.choice
        } else {
            sequential_union(walk_sets, &post, mask)
        };
        Ok((choice, t.elapsed().as_secs_f64(), walk_sets.len()))
    }

    /// A sensor whose every candidate walk stays inside `D` heads for the
    /// nearest unobserved segment instead of following the tie-break.
    fn navigate_stranded(&self, walk_sets: &[WalkSet], choice: &mut [usize], mask: &[bool]) {
        let open: Vec<usize> = (0..mask.len()).filter(|&i| !mask[i]).collect();
        if open.is_empty() {
            return;
        }
        let geo = &self.scenario.geodesic;
        for (k, ws) in walk_sets.iter().enumerate() {
            if !ws.unobserved.is_empty() {
                continue;
            }
            let distance = |w: usize| {
                let row = geo.row(ws.walks[w].terminus());
                open.iter().map(|&i| row[i]).fold(f64::INFINITY, f64::min)
            };
            let mut best = (choice[k], distance(choice[k]));
            for w in 0..ws.len() {
                let d = distance(w);
                if d < best.1 || (d == best.1 && w < best.0) {
                    best = (w, d);
                }
            }
            choice[k] = best.0;
        }
    }
}

/// Greedy fallback for the centralized search when the joint walk space is
/// too large: sensors choose in id order, each maximizing the union
/// objective given the earlier choices.
fn sequential_union(walk_sets: &[WalkSet], post: &CandidatePosterior, mask: &[bool]) -> Vec<usize> {
    let ys: Vec<Vec<Vec<SegmentId>>> =
        walk_sets.iter().map(|ws| ws.walks.iter().map(|w| w.unobserved(mask)).collect()).collect();
    let mut choice: Vec<usize> = Vec::with_capacity(walk_sets.len());
    for k in 0..walk_sets.len() {
        let mut best = (0, f64::NEG_INFINITY);
        for c in 0..walk_sets[k].len() {
            let mut lists: Vec<&[SegmentId]> = choice.iter().enumerate().map(|(j, &cj)| ys[j][cj].as_slice()).collect();
            lists.push(&ys[k][c]);
            let v = post.objective(&lists);
            if v > best.1 {
                best = (c, v);
            }
        }
        choice.push(best.0);
    }
    choice
}

/// Distinct observed segments, each with its first recorded measurement,
/// thinned to `m` by greedy maximum-variance selection.
fn subset_of_data(model: &GpModel, events: &[SegmentId], z: &[f64], m: usize) -> Result<(Vec<SegmentId>, Vec<f64>)> {
    let mut first: Vec<Option<f64>> = vec![None; model.len()];
    let mut unique = Vec::new();
    for (&s, &v) in events.iter().zip(z) {
        if first[s.0].is_none() {
            first[s.0] = Some(v);
            unique.push(s);
        }
    }
    let chosen = if unique.len() > m { greedy_select(model, &unique, m, &[])? } else { unique };
    let values = chosen.iter().map(|s| first[s.0].expect("chosen from observed")).collect();
    Ok((chosen, values))
}
