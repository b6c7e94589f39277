//! Entropy-maximizing joint walk selection.
//!
//! The objective for sensors `V_n` choosing walks `w_{V_n}` is
//! `|Y| log(2πe) + log|Σ̄_YY|` where `Y` concatenates each sensor's
//! unobserved walk segments and
//! `Σ̄_YY = blockdiag_k(Σ_{Y_k Y_k|U}) + Σ_YU Σ̈_UU⁻¹ Σ_UY`.
//! Cross-sensor entries are therefore exactly `φ_sᵀ φ_s'`, and a segment
//! chosen by two sensors counts once per sensor.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fusion::{GlobalSummary, SupportSet};
use crate::gp::GpModel;
use crate::linalg::{self, LOG_2PI_E};
use crate::network::SegmentId;
use crate::sensing::coordination::CoordinationGraph;
use crate::sensing::phi::{compute_phi, PhiSet};
use crate::sensing::walks::{Walk, WalkSet};

/// Largest number of joint walks an exhaustive search may visit.
pub const MAX_JOINT_WALKS: u128 = 1_000_000;

/// One sensor's candidate walks with everything the objective needs.
#[derive(Clone, Debug)]
pub struct SensorCandidates {
    pub sensor: usize,
    pub walks: WalkSet,
    /// Per walk, positions of its unobserved segments in `walks.unobserved`.
    pub y_per_walk: Vec<Vec<usize>>,
    /// `Σ_{YY|U}` over `walks.unobserved`.
    pub conditional: DMatrix<f64>,
    pub phi: PhiSet,
}

/// Chosen walk indices for an ordered list of sensors.
#[derive(Clone, Debug, PartialEq)]
pub struct Plan {
    pub members: Vec<usize>,
    pub choice: Vec<usize>,
    /// `|Y| log(2πe) + log|Σ̄|`, twice the entropy.
    pub objective: f64,
}

impl Plan {
    pub fn entropy(&self) -> f64 {
        0.5 * self.objective
    }
}

/// Per-sensor walks and the induced unobserved segments.
#[derive(Clone, Debug, PartialEq)]
pub struct JointWalk {
    pub walks: Vec<(usize, Walk)>,
    pub y: Vec<SegmentId>,
}

/// Candidate walks of every sensor for one selection round.
#[derive(Clone, Debug)]
pub struct SensingRound {
    sensors: Vec<SensorCandidates>,
    /// `cross[k][k'] = Φ_kᵀ Φ_k'`.
    cross: Vec<Vec<DMatrix<f64>>>,
}

impl SensingRound {
    /// `walk_sets[k]` holds sensor `k`'s walks; `observed` is indexed by
    /// segment and marks the global `D`.
    pub fn new(
        model: &GpModel,
        u: &SupportSet,
        g: &GlobalSummary,
        walk_sets: Vec<WalkSet>,
        observed: &[bool],
    ) -> Result<Self> {
        let sensors = walk_sets
            .into_par_iter()
            .enumerate()
            .map(|(k, walks)| sensor_candidates(model, u, g, k, walks, observed))
            .collect::<Result<_>>()?;
        Ok(Self::from_sensors(sensors))
    }

    /// `sensors[k].sensor` must be `k`.
    pub fn from_sensors(sensors: Vec<SensorCandidates>) -> Self {
        debug_assert!(sensors.iter().enumerate().all(|(k, s)| s.sensor == k));
        let cross = sensors
            .iter()
            .map(|a| sensors.iter().map(|b| a.phi.vectors.tr_mul(&b.phi.vectors)).collect())
            .collect();
        Self { sensors, cross }
    }

    pub fn sensors(&self) -> &[SensorCandidates] {
        &self.sensors
    }

    pub fn len(&self) -> usize {
        self.sensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sensors.is_empty()
    }

    pub fn phis(&self) -> Vec<PhiSet> {
        self.sensors.iter().map(|s| s.phi.clone()).collect()
    }

    /// Number of joint walks over `members`.
    pub fn joint_count(&self, members: &[usize]) -> u128 {
        members.iter().map(|&k| self.sensors[k].walks.len() as u128).product()
    }

    /// `Σ̄` over the concatenated unobserved segments of the chosen walks.
    pub fn joint_matrix(&self, members: &[usize], choice: &[usize]) -> DMatrix<f64> {
        let picks: Vec<(usize, &[usize])> = members
            .iter()
            .zip(choice)
            .map(|(&k, &c)| (k, self.sensors[k].y_per_walk[c].as_slice()))
            .collect();
        let n: usize = picks.iter().map(|(_, y)| y.len()).sum();
        let mut m = DMatrix::zeros(n, n);
        let mut r0 = 0;
        for &(ka, ya) in &picks {
            let mut c0 = 0;
            for &(kb, yb) in &picks {
                let g = &self.cross[ka][kb];
                for (i, &a) in ya.iter().enumerate() {
                    for (j, &b) in yb.iter().enumerate() {
                        m[(r0 + i, c0 + j)] = g[(a, b)];
                    }
                }
                if ka == kb && r0 == c0 {
                    let cond = &self.sensors[ka].conditional;
                    for (i, &a) in ya.iter().enumerate() {
                        for (j, &b) in ya.iter().enumerate() {
                            m[(r0 + i, r0 + j)] += cond[(a, b)];
                        }
                    }
                }
                c0 += yb.len();
            }
            r0 += ya.len();
        }
        m
    }

    /// `|Y| log(2πe) + log|Σ̄|`; 0 when no chosen walk has unobserved
    /// segments.
    pub fn objective(&self, members: &[usize], choice: &[usize]) -> f64 {
        let m = self.joint_matrix(members, choice);
        log_det_objective(&m)
    }

    pub fn joint_walk(&self, members: &[usize], choice: &[usize]) -> JointWalk {
        let mut y = Vec::new();
        let walks = members
            .iter()
            .zip(choice)
            .map(|(&k, &c)| {
                let s = &self.sensors[k];
                y.extend(s.y_per_walk[c].iter().map(|&i| s.walks.unobserved[i]));
                (k, s.walks.walks[c].clone())
            })
            .collect();
        JointWalk { walks, y }
    }

    /// Exhaustive maximizer over the joint walks of `members`. Among equal
    /// objectives the lexicographically first joint walk wins.
    pub fn component_joint_walk(&self, members: &[usize]) -> Result<Plan> {
        let count = self.joint_count(members);
        if count > MAX_JOINT_WALKS {
            return Err(Error::EnumerationLimit { count, limit: MAX_JOINT_WALKS });
        }
        if members.is_empty() {
            return Ok(Plan { members: vec![], choice: vec![], objective: 0.0 });
        }
        let first = members[0];
        let rest = &members[1..];
        let best: Vec<(Vec<usize>, f64)> = (0..self.sensors[first].walks.len())
            .into_par_iter()
            .map(|c0| {
                let mut choice = vec![0; members.len()];
                choice[0] = c0;
                let mut best = (choice.clone(), f64::NEG_INFINITY);
                loop {
                    let v = self.objective(members, &choice);
                    if v > best.1 {
                        best = (choice.clone(), v);
                    }
                    if !advance(&mut choice[1..], rest, &self.sensors) {
                        break;
                    }
                }
                best
            })
            .collect();
        let mut out = (Vec::new(), f64::NEG_INFINITY);
        for b in best {
            if b.1 > out.1 || out.0.is_empty() {
                out = b;
            }
        }
        Ok(Plan { members: members.to_vec(), choice: out.0, objective: out.1 })
    }

    /// Exhaustive maximizer over all sensors jointly.
    pub fn centralized_walk_max(&self) -> Result<Plan> {
        let all: Vec<usize> = (0..self.len()).collect();
        self.component_joint_walk(&all)
    }

    /// Sensors of `members` choose one after another, each maximizing the
    /// objective of itself together with the sensors already decided.
    pub fn sequential_joint_walk(&self, members: &[usize]) -> Plan {
        let mut choice: Vec<usize> = Vec::with_capacity(members.len());
        for i in 0..members.len() {
            let mut best = (0, f64::NEG_INFINITY);
            for c in 0..self.sensors[members[i]].walks.len() {
                choice.push(c);
                let v = self.objective(&members[..=i], &choice);
                choice.pop();
                if v > best.1 {
                    best = (c, v);
                }
            }
            choice.push(best.0);
        }
        let objective = self.objective(members, &choice);
        Plan { members: members.to_vec(), choice, objective }
    }

    /// One plan per connected component of `graph`.
    pub fn decentralized(&self, graph: &CoordinationGraph) -> Result<Vec<Plan>> {
        graph.components.par_iter().map(|c| self.component_joint_walk(c)).collect()
    }

    /// Walk index per sensor from per-component plans.
    pub fn assemble(&self, plans: &[Plan]) -> Vec<usize> {
        let mut out = vec![0; self.len()];
        for p in plans {
            for (&k, &c) in p.members.iter().zip(&p.choice) {
                out[k] = c;
            }
        }
        out
    }
}

/// Sensor `k`'s share of a selection round: the conditional covariance of
/// its candidate segments given `U` and its Φ set.
pub fn sensor_candidates(
    model: &GpModel,
    u: &SupportSet,
    g: &GlobalSummary,
    k: usize,
    walks: WalkSet,
    observed: &[bool],
) -> Result<SensorCandidates> {
    let cov = model.cov();
    cov.check(&walks.unobserved)?;
    let y = &walks.unobserved;
    let pos = |s: &SegmentId| y.binary_search(s).expect("walk segment in Y_W");
    let y_per_walk = walks
        .walks
        .iter()
        .map(|w| w.unobserved(observed).iter().map(pos).collect())
        .collect();
    let a = u.factor().whiten(&cov.cross(u.segments(), y));
    let mut conditional = cov.block(y) - a.tr_mul(&a);
    linalg::symmetrize(&mut conditional);
    let phi = compute_phi(k, g.factor(), y, model, u);
    Ok(SensorCandidates { sensor: k, walks, y_per_walk, conditional, phi })
}

/// Odometer step over walk indices, last position fastest. Returns false
/// after the final combination.
fn advance(choice: &mut [usize], members: &[usize], sensors: &[SensorCandidates]) -> bool {
    for i in (0..choice.len()).rev() {
        choice[i] += 1;
        if choice[i] < sensors[members[i]].walks.len() {
            return true;
        }
        choice[i] = 0;
    }
    false
}

/// `n log(2πe) + log|m|`, using the eigenvalue route when Cholesky fails.
pub fn log_det_objective(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    if n == 0 {
        return 0.0;
    }
    let ld = match m.clone().cholesky() {
        Some(c) => c.l_dirty().diagonal().iter().map(|d| 2.0 * d.ln()).sum(),
        None => linalg::log_det_psd(m).unwrap_or(f64::NEG_INFINITY),
    };
    n as f64 * LOG_2PI_E + ld
}

/// Posterior covariance over a candidate segment list, used by the
/// centralized baselines where joint walks share segments by set union.
#[derive(Clone, Debug)]
pub struct CandidatePosterior {
    position: Vec<Option<usize>>,
    cov: DMatrix<f64>,
}

impl CandidatePosterior {
    /// `candidates` and `cov` are aligned; `n` is the number of segments.
    pub fn new(n: usize, candidates: &[SegmentId], cov: DMatrix<f64>) -> Self {
        let mut position = vec![None; n];
        for (i, s) in candidates.iter().enumerate() {
            position[s.0] = Some(i);
        }
        Self { position, cov }
    }

    /// `|Y| log(2πe) + log|Σ_{YY|·}|` for the union `Y` of the walks'
    /// candidate segments.
    pub fn objective(&self, y_lists: &[&[SegmentId]]) -> f64 {
        let mut idx: Vec<usize> = y_lists
            .iter()
            .flat_map(|y| y.iter().filter_map(|s| self.position[s.0]))
            .collect();
        idx.sort_unstable();
        idx.dedup();
        let m = DMatrix::from_fn(idx.len(), idx.len(), |i, j| self.cov[(idx[i], idx[j])]);
        log_det_objective(&m)
    }

    pub fn variance(&self, s: SegmentId) -> Option<f64> {
        self.position[s.0].map(|i| self.cov[(i, i)])
    }
}

/// Exhaustive set-union maximizer over all sensors' walks.
pub fn centralized_union_walk_max(walk_sets: &[WalkSet], post: &CandidatePosterior, observed: &[bool]) -> Result<Plan> {
    let count: u128 = walk_sets.iter().map(|w| w.len() as u128).product();
    if count > MAX_JOINT_WALKS {
        return Err(Error::EnumerationLimit { count, limit: MAX_JOINT_WALKS });
    }
    let ys: Vec<Vec<Vec<SegmentId>>> = walk_sets
        .iter()
        .map(|ws| ws.walks.iter().map(|w| w.unobserved(observed)).collect())
        .collect();
    let members: Vec<usize> = (0..walk_sets.len()).collect();
    if members.is_empty() {
        return Ok(Plan { members, choice: vec![], objective: 0.0 });
    }
    let best: Vec<(Vec<usize>, f64)> = (0..walk_sets[0].len())
        .into_par_iter()
        .map(|c0| {
            let mut choice = vec![0; members.len()];
            choice[0] = c0;
            let mut best = (choice.clone(), f64::NEG_INFINITY);
            loop {
                let lists: Vec<&[SegmentId]> = choice.iter().enumerate().map(|(k, &c)| ys[k][c].as_slice()).collect();
                let v = post.objective(&lists);
                if v > best.1 {
                    best = (choice.clone(), v);
                }
                let mut more = false;
                for i in (1..choice.len()).rev() {
                    choice[i] += 1;
                    if choice[i] < walk_sets[i].len() {
                        more = true;
                        break;
                    }
                    choice[i] = 0;
                }
                if !more {
                    break;
                }
            }
            best
        })
        .collect();
    let mut out = (Vec::new(), f64::NEG_INFINITY);
    for b in best {
        if b.1 > out.1 || out.0.is_empty() {
            out = b;
        }
    }
    Ok(Plan { members, choice: out.0, objective: out.1 })
}

/// The objective's covariance computed directly from dense inverses of
/// `Σ_UU` and `Σ̈_UU`, independent of the Φ vectors.
pub fn structured_covariance(
    model: &GpModel,
    u: &SupportSet,
    g: &GlobalSummary,
    per_sensor: &[Vec<SegmentId>],
) -> Result<DMatrix<f64>> {
    let cov = model.cov();
    let uu_inv = u.sigma().clone().try_inverse().ok_or(Error::Singular { condition: f64::INFINITY })?;
    let gg_inv = g.sigma.clone().try_inverse().ok_or(Error::Singular { condition: f64::INFINITY })?;
    let y: Vec<SegmentId> = per_sensor.iter().flatten().copied().collect();
    cov.check(&y)?;
    let k_yu = cov.cross(&y, u.segments());
    let mut m = &k_yu * &gg_inv * k_yu.transpose();
    let mut off = 0;
    for ys in per_sensor {
        let k = cov.cross(ys, u.segments());
        let cond = cov.block(ys) - &k * &uu_inv * k.transpose();
        let mut view = m.view_mut((off, off), (ys.len(), ys.len()));
        view += cond;
        off += ys.len();
    }
    Ok(m)
}
