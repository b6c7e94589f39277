//! Decentralized data fusion through a common support set.
//!
//! Each sensor compresses its own observations into a local summary over the
//! support set `U`; summing the local summaries gives a global summary from
//! which every sensor computes the same predictive distribution. The same
//! prediction can be obtained centrally from the partially independent
//! training conditional approximation, which [`pitc_oracle`] evaluates by
//! direct dense algebra as an independent check.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gp::{GpModel, PosteriorGaussian};
use crate::linalg::{self, SpdFactor};
use crate::network::SegmentId;

/// The common support set `U` with its prior covariance and factor.
#[derive(Clone, Debug)]
pub struct SupportSet {
    segments: Vec<SegmentId>,
    /// `Σ_UU` including any jitter the factorization needed.
    sigma: DMatrix<f64>,
    factor: SpdFactor,
    tag: u64,
}

impl SupportSet {
    pub fn new(model: &GpModel, segments: Vec<SegmentId>) -> Result<Self> {
        model.cov().check(&segments)?;
        let raw = model.cov().block(&segments);
        let factor = SpdFactor::new(&raw)?;
        let sigma = if factor.jitter() > 0.0 {
            factor.lower() * factor.lower().transpose()
        } else {
            raw
        };
        let mut h = DefaultHasher::new();
        segments.hash(&mut h);
        Ok(Self { segments, sigma, factor, tag: h.finish() })
    }

    pub fn segments(&self) -> &[SegmentId] {
        &self.segments
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    pub fn factor(&self) -> &SpdFactor {
        &self.factor
    }

    /// Fingerprint of the segment list, used to reject summaries built on a
    /// different support set.
    pub fn tag(&self) -> u64 {
        self.tag
    }
}

/// `(ż_U^k, Σ̇_UU^k)` for sensor `k`.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalSummary {
    pub sensor: usize,
    pub support_tag: u64,
    pub z: DVector<f64>,
    pub sigma: DMatrix<f64>,
    /// Jitter level needed to factor `Σ_{D_k D_k|U}`.
    pub jitter: f64,
}

/// `(z̈_U, Σ̈_UU)` plus the number of contributing sensors.
#[derive(Clone, Debug)]
pub struct GlobalSummary {
    pub z: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub contributors: usize,
    pub support_tag: u64,
    factor: SpdFactor,
}

impl GlobalSummary {
    /// Cholesky factor `Ψ` of `Σ̈_UU`.
    pub fn factor(&self) -> &SpdFactor {
        &self.factor
    }
}

/// Local summary of sensor `sensor` observing `z` at `d_k`.
///
/// Measurements are only ever read at `d_k`; nothing is read at `U`.
pub fn local_summary(
    model: &GpModel,
    u: &SupportSet,
    sensor: usize,
    d_k: &[SegmentId],
    z: &[f64],
) -> Result<LocalSummary> {
    let m = u.len();
    if d_k.is_empty() {
        if !z.is_empty() {
            return Err(Error::DimensionMismatch { expected: 0, got: z.len() });
        }
        return Ok(LocalSummary {
            sensor,
            support_tag: u.tag(),
            z: DVector::zeros(m),
            sigma: DMatrix::zeros(m, m),
            jitter: 0.0,
        });
    }
    let cov = model.cov();
    cov.check(d_k)?;
    let resid = model.centred(d_k, z)?;
    let k_ud = cov.cross(u.segments(), d_k);
    let a = u.factor().whiten(&k_ud);
    let mut cond = cov.block(d_k) - a.tr_mul(&a);
    linalg::symmetrize(&mut cond);
    let cf = SpdFactor::new(&cond)?;
    let b = cf.whiten(&k_ud.transpose());
    let r = cf.whiten_vec(&resid);
    let mut sigma = b.tr_mul(&b);
    linalg::symmetrize(&mut sigma);
    Ok(LocalSummary { sensor, support_tag: u.tag(), z: b.tr_mul(&r), sigma, jitter: cf.jitter() })
}

/// Sums local summaries in ascending sensor order, so any permutation of
/// `locals` yields bit-identical output.
pub fn global_summary(u: &SupportSet, locals: &[LocalSummary]) -> Result<GlobalSummary> {
    let mut order: Vec<&LocalSummary> = locals.iter().collect();
    order.sort_by_key(|l| l.sensor);
    for w in order.windows(2) {
        if w[0].sensor == w[1].sensor {
            return Err(Error::DuplicateSensor(w[0].sensor));
        }
    }
    let m = u.len();
    let mut z = DVector::zeros(m);
    let mut sigma = u.sigma().clone();
    for l in &order {
        if l.support_tag != u.tag() || l.z.len() != m || l.sigma.shape() != (m, m) {
            return Err(Error::MismatchedSupport);
        }
        z += &l.z;
        sigma += &l.sigma;
    }
    let factor = SpdFactor::new(&sigma)?;
    Ok(GlobalSummary { z, sigma, contributors: order.len(), support_tag: u.tag(), factor })
}

fn check_global(u: &SupportSet, g: &GlobalSummary) -> Result<()> {
    if g.support_tag != u.tag() {
        Err(Error::MismatchedSupport)
    } else {
        Ok(())
    }
}

/// `μ̄_Y = μ_Y + Σ_YU Σ̈⁻¹ z̈` and `Σ̄_YY = Σ_YY − Σ_YU (Σ_UU⁻¹ − Σ̈⁻¹) Σ_UY`.
pub fn predict_decentralized(
    model: &GpModel,
    u: &SupportSet,
    g: &GlobalSummary,
    y: &[SegmentId],
) -> Result<PosteriorGaussian> {
    check_global(u, g)?;
    let cov = model.cov();
    cov.check(y)?;
    let k_uy = cov.cross(u.segments(), y);
    let a = u.factor().whiten(&k_uy);
    let b = g.factor.whiten(&k_uy);
    let gz = g.factor.whiten_vec(&g.z);
    let mean = model.mean_of(y) + b.tr_mul(&gz);
    let mut covariance = cov.block(y) - a.tr_mul(&a) + b.tr_mul(&b);
    linalg::symmetrize(&mut covariance);
    Ok(PosteriorGaussian { targets: y.to_vec(), mean, covariance })
}

/// Means and marginal variances of [`predict_decentralized`].
pub fn predict_marginals_decentralized(
    model: &GpModel,
    u: &SupportSet,
    g: &GlobalSummary,
    y: &[SegmentId],
) -> Result<(DVector<f64>, DVector<f64>)> {
    check_global(u, g)?;
    let cov = model.cov();
    cov.check(y)?;
    let k_uy = cov.cross(u.segments(), y);
    let a = u.factor().whiten(&k_uy);
    let b = g.factor.whiten(&k_uy);
    let gz = g.factor.whiten_vec(&g.z);
    let mean = model.mean_of(y) + b.tr_mul(&gz);
    let prior = cov.noise_variance();
    let var = DVector::from_iterator(
        y.len(),
        y.iter().enumerate().map(|(j, s)| {
            cov.k(*s, *s) + prior - a.column(j).norm_squared() + b.column(j).norm_squared()
        }),
    );
    Ok((mean, var))
}

/// Centralized PITC prediction from the partitioned data, by explicit dense
/// inverses. `Σ_UU` is the support set's (possibly jittered) matrix.
pub fn pitc_oracle(
    model: &GpModel,
    u: &SupportSet,
    partition: &[Vec<SegmentId>],
    z: &[Vec<f64>],
    y: &[SegmentId],
) -> Result<PosteriorGaussian> {
    if partition.len() != z.len() {
        return Err(Error::DimensionMismatch { expected: partition.len(), got: z.len() });
    }
    let cov = model.cov();
    cov.check(y)?;
    let d: Vec<SegmentId> = partition.iter().flatten().copied().collect();
    cov.check(&d)?;
    let z_all: Vec<f64> = z.iter().flatten().copied().collect();
    let resid = model.centred(&d, &z_all)?;
    let uu_inv = u
        .sigma()
        .clone()
        .try_inverse()
        .ok_or(Error::Singular { condition: f64::INFINITY })?;
    let us = u.segments();
    let k_du = cov.cross(&d, us);
    let k_yu = cov.cross(y, us);
    let gamma_dd = &k_du * &uu_inv * k_du.transpose();
    let gamma_yd = &k_yu * &uu_inv * k_du.transpose();
    let mut system = gamma_dd;
    let mut offset = 0;
    for block in partition {
        let n = block.len();
        let k_bu = cov.cross(block, us);
        let lambda = cov.block(block) - &k_bu * &uu_inv * k_bu.transpose();
        let mut view = system.view_mut((offset, offset), (n, n));
        view += lambda;
        offset += n;
    }
    let inv = system
        .clone()
        .lu()
        .try_inverse()
        .ok_or(Error::Singular { condition: f64::INFINITY })?;
    let gain = &gamma_yd * &inv;
    let mean = model.mean_of(y) + &gain * resid;
    let mut covariance = cov.block(y) - &gain * gamma_yd.transpose();
    linalg::symmetrize(&mut covariance);
    Ok(PosteriorGaussian { targets: y.to_vec(), mean, covariance })
}

/// Result of comparing the summary path against the PITC oracle.
#[derive(Clone, Debug, serde::Serialize)]
pub struct EquivalenceReport {
    /// `max |μ̄ − μ_PITC| / max |μ_PITC|`.
    pub mean_deviation: f64,
    /// `max |Σ̄ − Σ_PITC| / max |Σ_PITC|`.
    pub cov_deviation: f64,
    pub tol: f64,
    pub passed: bool,
    /// Largest jitter level any factorization needed.
    pub jitter_used: f64,
    pub error: Option<String>,
}

/// Runs both prediction paths on one instance. Failures are reported, never
/// raised.
pub fn check_equivalence(
    model: &GpModel,
    u: &SupportSet,
    partition: &[Vec<SegmentId>],
    z: &[Vec<f64>],
    y: &[SegmentId],
    tol: f64,
) -> EquivalenceReport {
    let failed = |e: Error, jitter: f64| EquivalenceReport {
        mean_deviation: f64::INFINITY,
        cov_deviation: f64::INFINITY,
        tol,
        passed: false,
        jitter_used: jitter,
        error: Some(e.to_string()),
    };
    let mut jitter = u.factor().jitter();
    if partition.len() != z.len() {
        return failed(Error::DimensionMismatch { expected: partition.len(), got: z.len() }, jitter);
    }
    let locals: Result<Vec<LocalSummary>> = partition
        .iter()
        .zip(z)
        .enumerate()
        .map(|(k, (d, zk))| local_summary(model, u, k, d, zk))
        .collect();
    let locals = match locals {
        Ok(l) => l,
        Err(e) => return failed(e, jitter),
    };
    jitter = locals.iter().fold(jitter, |j, l| j.max(l.jitter));
    let g = match global_summary(u, &locals) {
        Ok(g) => g,
        Err(e) => return failed(e, jitter),
    };
    jitter = jitter.max(g.factor.jitter());
    let fused = match predict_decentralized(model, u, &g, y) {
        Ok(p) => p,
        Err(e) => return failed(e, jitter),
    };
    let oracle = match pitc_oracle(model, u, partition, z, y) {
        Ok(p) => p,
        Err(e) => return failed(e, jitter),
    };
    let mean_deviation = linalg::relative_deviation(fused.mean.as_slice(), oracle.mean.as_slice());
    let cov_deviation =
        linalg::relative_deviation(fused.covariance.as_slice(), oracle.covariance.as_slice());
    EquivalenceReport {
        mean_deviation,
        cov_deviation,
        tol,
        passed: mean_deviation <= tol && cov_deviation <= tol,
        jitter_used: jitter,
        error: None,
    }
}

/// Binary layout of a [`LocalSummary`] on the message bus.
///
/// Little-endian: `k: u32`, `m = |U|: u32`, then `ż` as `m` `f64`s, then
/// `Σ̇` as `m * m` `f64`s in row-major order. Total `8m² + 8m + 8` bytes.
pub mod wire {
    use super::*;

    pub fn encoded_len(m: usize) -> usize {
        8 + 8 * m + 8 * m * m
    }

    pub fn to_bytes(s: &LocalSummary) -> Vec<u8> {
        let m = s.z.len();
        let mut out = Vec::with_capacity(encoded_len(m));
        out.extend_from_slice(&(s.sensor as u32).to_le_bytes());
        out.extend_from_slice(&(m as u32).to_le_bytes());
        for v in s.z.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for i in 0..m {
            for j in 0..m {
                out.extend_from_slice(&s.sigma[(i, j)].to_le_bytes());
            }
        }
        out
    }

    /// Decodes a summary built on `u`; the support tag is taken from `u`.
    pub fn from_bytes(bytes: &[u8], u: &SupportSet) -> Result<LocalSummary> {
        let word = |at: usize| -> Result<u32> {
            bytes
                .get(at..at + 4)
                .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
                .ok_or_else(|| Error::Wire("truncated header".into()))
        };
        let sensor = word(0)? as usize;
        let m = word(4)? as usize;
        if m != u.len() {
            return Err(Error::MismatchedSupport);
        }
        if bytes.len() != encoded_len(m) {
            return Err(Error::Wire(format!("expected {} bytes, got {}", encoded_len(m), bytes.len())));
        }
        let f = |i: usize| f64::from_le_bytes(bytes[8 + 8 * i..16 + 8 * i].try_into().unwrap());
        let z = DVector::from_fn(m, |i, _| f(i));
        let sigma = DMatrix::from_fn(m, m, |i, j| f(m + i * m + j));
        Ok(LocalSummary { sensor, support_tag: u.tag(), z, sigma, jitter: 0.0 })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::Embedding;
    use crate::gp::entropy;
    use crate::kernel::{CovarianceModel, KernelHyper};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn random_model(rng: &mut ChaCha8Rng, n: usize, noise: f64) -> GpModel {
        let pts: Vec<f64> = (0..2 * n).map(|_| rng.random_range(0.0..4.0)).collect();
        let coords = DMatrix::from_row_slice(n, 2, &pts);
        let dis = DMatrix::zeros(n, n);
        let emb = Embedding::from_coords(coords, &dis);
        let h = KernelHyper::isotropic(1.5, 1.0, noise, 2);
        let mean: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        GpModel::new(mean, Arc::new(CovarianceModel::new(&emb, h).unwrap())).unwrap()
    }

    fn ids(v: impl IntoIterator<Item = usize>) -> Vec<SegmentId> {
        v.into_iter().map(SegmentId).collect()
    }

    struct Instance {
        model: GpModel,
        u: SupportSet,
        parts: Vec<Vec<SegmentId>>,
        z: Vec<Vec<f64>>,
        y: Vec<SegmentId>,
    }

    fn instance(seed: u64) -> Instance {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = random_model(&mut rng, 24, 0.1);
        let u = SupportSet::new(&model, ids([0, 3, 7, 12, 20])).unwrap();
        let parts = vec![ids(1..6), ids(6..11), ids(11..16)];
        let z = parts.iter().map(|p| p.iter().map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        Instance { model, u, parts, z, y: ids(16..24) }
    }

    fn summaries(i: &Instance) -> Vec<LocalSummary> {
        i.parts
            .iter()
            .zip(&i.z)
            .enumerate()
            .map(|(k, (d, z))| local_summary(&i.model, &i.u, k, d, z).unwrap())
            .collect()
    }

    #[test]
    fn empty_local_summary_is_zero() {
        let i = instance(1);
        let l = local_summary(&i.model, &i.u, 3, &[], &[]).unwrap();
        assert_eq!(l.z, DVector::zeros(5));
        assert_eq!(l.sigma, DMatrix::zeros(5, 5));
    }

    #[test]
    fn single_observation_matches_scalar_formula() {
        let i = instance(2);
        let s = SegmentId(9);
        let z = 0.8;
        let l = local_summary(&i.model, &i.u, 0, &[s], &[z]).unwrap();
        let cov = i.model.cov();
        let sigma_us = cov.cross(i.u.segments(), &[s]);
        let uu_inv = i.u.sigma().clone().try_inverse().unwrap();
        let cond = cov.block(&[s])[(0, 0)] - (sigma_us.transpose() * &uu_inv * &sigma_us)[(0, 0)];
        let resid = z - i.model.prior_mean()[9];
        for r in 0..5 {
            assert!((l.z[r] - sigma_us[(r, 0)] * resid / cond).abs() < 1e-12);
            for c in 0..5 {
                assert!((l.sigma[(r, c)] - sigma_us[(r, 0)] * sigma_us[(c, 0)] / cond).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn local_summary_is_psd() {
        let i = instance(3);
        for l in summaries(&i) {
            let mut m = l.sigma.clone();
            for d in 0..m.nrows() {
                m[(d, d)] += 1e-12;
            }
            assert!(m.cholesky().is_some());
        }
    }

    #[test]
    fn global_summary_edge_cases() {
        let i = instance(4);
        let empty: Vec<LocalSummary> =
            (0..3).map(|k| local_summary(&i.model, &i.u, k, &[], &[]).unwrap()).collect();
        let g = global_summary(&i.u, &empty).unwrap();
        assert_eq!(g.z, DVector::zeros(5));
        assert_eq!(&g.sigma, i.u.sigma());

        let locals = summaries(&i);
        let g1 = global_summary(&i.u, &locals[..1]).unwrap();
        assert_eq!(g1.z, locals[0].z);
        assert_eq!(g1.sigma, i.u.sigma() + &locals[0].sigma);

        let g = global_summary(&i.u, &locals).unwrap();
        let mut rev = locals.clone();
        rev.reverse();
        let gr = global_summary(&i.u, &rev).unwrap();
        assert_eq!(g.z, gr.z);
        assert_eq!(g.sigma, gr.sigma);

        let dup = vec![locals[0].clone(), locals[0].clone()];
        assert!(matches!(global_summary(&i.u, &dup), Err(Error::DuplicateSensor(0))));
        let other = SupportSet::new(&i.model, ids([1, 2])).unwrap();
        assert!(matches!(global_summary(&other, &locals), Err(Error::MismatchedSupport)));
    }

    #[test]
    fn prediction_without_data_is_prior() {
        let i = instance(5);
        let g = global_summary(&i.u, &[]).unwrap();
        let p = predict_decentralized(&i.model, &i.u, &g, &i.y).unwrap();
        let prior = PosteriorGaussian::prior(&i.model, &i.y);
        assert!((&p.mean - &prior.mean).amax() < 1e-12);
        assert!((&p.covariance - &prior.covariance).amax() < 1e-12);
    }

    #[test]
    fn matches_pitc_oracle() {
        for seed in 0..10 {
            let i = instance(100 + seed);
            let r = check_equivalence(&i.model, &i.u, &i.parts, &i.z, &i.y, 1e-8);
            assert!(r.passed, "{r:?}");
            assert_eq!(r.jitter_used, 0.0);
        }
    }

    #[test]
    fn marginals_match_full_prediction() {
        let i = instance(6);
        let g = global_summary(&i.u, &summaries(&i)).unwrap();
        let p = predict_decentralized(&i.model, &i.u, &g, &i.y).unwrap();
        let (m, v) = predict_marginals_decentralized(&i.model, &i.u, &g, &i.y).unwrap();
        assert!((&m - &p.mean).amax() < 1e-12);
        for j in 0..i.y.len() {
            assert!((v[j] - p.covariance[(j, j)]).abs() < 1e-12);
        }
    }

    #[test]
    fn refining_the_partition_changes_the_output() {
        let i = instance(8);
        let joined = vec![i.parts[0].iter().chain(&i.parts[1]).copied().collect::<Vec<_>>()];
        let zj = vec![i.z[0].iter().chain(&i.z[1]).copied().collect::<Vec<_>>()];
        let a = pitc_oracle(&i.model, &i.u, &joined, &zj, &i.y).unwrap();
        let b = pitc_oracle(&i.model, &i.u, &i.parts[..2], &i.z[..2], &i.y).unwrap();
        assert!((&a.mean - &b.mean).amax() > 1e-9);
    }

    #[test]
    fn degenerate_support_flags_jitter() {
        // two support points at the same location with no noise
        let coords = DMatrix::from_row_slice(4, 1, &[0.0, 0.0, 1.0, 2.0]);
        let emb = Embedding::from_coords(coords, &DMatrix::zeros(4, 4));
        let h = KernelHyper::isotropic(1.0, 1.0, 0.0, 1);
        let model = GpModel::with_constant_mean(0.0, Arc::new(CovarianceModel::new(&emb, h).unwrap()));
        let u = SupportSet::new(&model, ids([0, 1])).unwrap();
        assert!(u.factor().jitter() > 0.0);
        let r = check_equivalence(&model, &u, &[ids([2])], &[vec![1.0]], &ids([3]), 1e-8);
        assert!(r.jitter_used > 0.0);
    }

    #[test]
    fn adding_a_sensor_never_raises_entropy() {
        let i = instance(9);
        let locals = summaries(&i);
        let mut prev = f64::INFINITY;
        for k in 0..=locals.len() {
            let g = global_summary(&i.u, &locals[..k]).unwrap();
            let h = entropy(&predict_decentralized(&i.model, &i.u, &g, &i.y).unwrap()).unwrap();
            assert!(h <= prev + 1e-9);
            prev = h;
        }
    }

    #[test]
    fn wire_round_trip_and_size() {
        let i = instance(10);
        let l = &summaries(&i)[1];
        let bytes = wire::to_bytes(l);
        assert_eq!(bytes.len(), 8 * 25 + 8 * 5 + 8);
        let back = wire::from_bytes(&bytes, &i.u).unwrap();
        assert_eq!(back.sensor, 1);
        assert_eq!(back.z, l.z);
        assert_eq!(back.sigma, l.sigma);
        assert!(wire::from_bytes(&bytes[..20], &i.u).is_err());
    }
}
