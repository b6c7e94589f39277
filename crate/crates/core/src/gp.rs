//! Exact and subset-of-data GP posteriors, Gaussian entropy and greedy
//! maximum-variance subset selection.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernel::CovarianceModel;
use crate::linalg::{self, SpdFactor};
use crate::network::SegmentId;

/// Prior mean per segment plus the shared covariance source.
#[derive(Clone, Debug)]
pub struct GpModel {
    prior_mean: Vec<f64>,
    cov: Arc<CovarianceModel>,
}

impl GpModel {
    pub fn new(prior_mean: Vec<f64>, cov: Arc<CovarianceModel>) -> Result<Self> {
        if prior_mean.len() != cov.len() {
            return Err(Error::DimensionMismatch { expected: cov.len(), got: prior_mean.len() });
        }
        Ok(Self { prior_mean, cov })
    }

    pub fn with_constant_mean(mean: f64, cov: Arc<CovarianceModel>) -> Self {
        Self { prior_mean: vec![mean; cov.len()], cov }
    }

    /// Same covariance, new constant prior mean.
    pub fn remean(&self, mean: f64) -> Self {
        Self::with_constant_mean(mean, Arc::clone(&self.cov))
    }

    pub fn len(&self) -> usize {
        self.prior_mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prior_mean.is_empty()
    }

    pub fn cov(&self) -> &CovarianceModel {
        &self.cov
    }

    pub fn cov_arc(&self) -> &Arc<CovarianceModel> {
        &self.cov
    }

    pub fn prior_mean(&self) -> &[f64] {
        &self.prior_mean
    }

    pub fn mean_of(&self, idx: &[SegmentId]) -> DVector<f64> {
        DVector::from_iterator(idx.len(), idx.iter().map(|s| self.prior_mean[s.0]))
    }

    /// `z - μ` over `idx`.
    pub fn centred(&self, idx: &[SegmentId], z: &[f64]) -> Result<DVector<f64>> {
        if z.len() != idx.len() {
            return Err(Error::DimensionMismatch { expected: idx.len(), got: z.len() });
        }
        Ok(DVector::from_iterator(
            idx.len(),
            idx.iter().zip(z).map(|(s, v)| v - self.prior_mean[s.0]),
        ))
    }
}

/// Gaussian over an ordered list of target segments.
#[derive(Clone, Debug)]
pub struct PosteriorGaussian {
    pub targets: Vec<SegmentId>,
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl PosteriorGaussian {
    pub fn prior(model: &GpModel, targets: &[SegmentId]) -> Self {
        Self {
            targets: targets.to_vec(),
            mean: model.mean_of(targets),
            covariance: model.cov().block(targets),
        }
    }

    pub fn variances(&self) -> Vec<f64> {
        self.covariance.diagonal().iter().copied().collect()
    }
}

/// Exact posterior over `targets` given measurements `z` at `observed`.
///
/// `observed` may list a segment more than once (repeated measurement
/// events); it must not share a segment with `targets`.
pub fn posterior_full(
    model: &GpModel,
    observed: &[SegmentId],
    z: &[f64],
    targets: &[SegmentId],
) -> Result<PosteriorGaussian> {
    check_disjoint(observed, targets)?;
    condition(model, observed, z, targets)
}

/// Subset-of-data posterior: the exact posterior conditioned only on the
/// support subset `support` with its measurements `z_support`.
pub fn posterior_sod(
    model: &GpModel,
    support: &[SegmentId],
    z_support: &[f64],
    targets: &[SegmentId],
) -> Result<PosteriorGaussian> {
    condition(model, support, z_support, targets)
}

/// `½ log((2πe)^|Y| |Σ|)`; 0 for an empty target set and `-inf` for a
/// singular covariance.
pub fn entropy(p: &PosteriorGaussian) -> Result<f64> {
    linalg::gaussian_entropy(&p.covariance)
}

fn check_disjoint(observed: &[SegmentId], targets: &[SegmentId]) -> Result<()> {
    let mut seen = std::collections::HashSet::with_capacity(observed.len());
    seen.extend(observed.iter().copied());
    match targets.iter().find(|t| seen.contains(t)) {
        Some(t) => Err(Error::Overlap(t.0)),
        None => Ok(()),
    }
}

fn condition(
    model: &GpModel,
    observed: &[SegmentId],
    z: &[f64],
    targets: &[SegmentId],
) -> Result<PosteriorGaussian> {
    let cov = model.cov();
    cov.check(observed)?;
    cov.check(targets)?;
    let resid = model.centred(observed, z)?;
    let factor = SpdFactor::new(&cov.block(observed))?;
    let a = factor.whiten(&cov.cross(observed, targets));
    let alpha = factor.whiten_vec(&resid);
    let mean = model.mean_of(targets) + a.tr_mul(&alpha);
    let mut covariance = cov.block(targets) - a.tr_mul(&a);
    linalg::symmetrize(&mut covariance);
    Ok(PosteriorGaussian { targets: targets.to_vec(), mean, covariance })
}

/// Posterior means and marginal variances at `targets`, skipping the full
/// covariance. Targets may coincide with observed segments; the mean there is
/// the smoothed latent estimate.
pub fn posterior_marginals(
    model: &GpModel,
    observed: &[SegmentId],
    z: &[f64],
    targets: &[SegmentId],
) -> Result<(DVector<f64>, DVector<f64>)> {
    let cov = model.cov();
    cov.check(observed)?;
    cov.check(targets)?;
    let resid = model.centred(observed, z)?;
    let factor = SpdFactor::new(&cov.block(observed))?;
    let a = factor.whiten(&cov.cross(observed, targets));
    let alpha = factor.whiten_vec(&resid);
    let mean = model.mean_of(targets) + a.tr_mul(&alpha);
    let var = DVector::from_iterator(
        targets.len(),
        targets
            .iter()
            .enumerate()
            .map(|(j, t)| cov.k(*t, *t) + cov.noise_variance() - a.column(j).norm_squared()),
    );
    Ok((mean, var))
}

/// Greedy maximum-posterior-variance selection.
///
/// Starting from `conditioning`, repeatedly appends the remaining candidate
/// with the largest variance given everything selected so far. Ties go to the
/// smallest segment id. Candidates are deduplicated and visited in ascending
/// id order.
pub fn greedy_select(
    model: &GpModel,
    candidates: &[SegmentId],
    m: usize,
    conditioning: &[SegmentId],
) -> Result<Vec<SegmentId>> {
    let cov = model.cov();
    cov.check(candidates)?;
    cov.check(conditioning)?;
    let mut cands = candidates.to_vec();
    cands.sort();
    cands.dedup();
    if m > cands.len() {
        return Err(Error::DimensionMismatch { expected: cands.len(), got: m });
    }
    // Conditional covariance of the candidates given the conditioning set.
    let mut c = cov.block(&cands);
    if !conditioning.is_empty() {
        let factor = SpdFactor::new(&cov.block(conditioning))?;
        let a = factor.whiten(&cov.cross(conditioning, &cands));
        c -= a.tr_mul(&a);
    }
    let n = cands.len();
    let mut remaining = vec![true; n];
    let mut picked = Vec::with_capacity(m);
    for _ in 0..m {
        let mut best: Option<usize> = None;
        for i in (0..n).filter(|&i| remaining[i]) {
            if best.map_or(true, |b| c[(i, i)] > c[(b, b)]) {
                best = Some(i);
            }
        }
        let j = best.expect("m <= candidate count");
        remaining[j] = false;
        picked.push(cands[j]);
        let pivot = c[(j, j)];
        if pivot > 0.0 {
            let col: Vec<f64> = (0..n).map(|i| c[(i, j)]).collect();
            for q in (0..n).filter(|&q| remaining[q]) {
                let f = col[q] / pivot;
                for p in (0..n).filter(|&p| remaining[p]) {
                    c[(p, q)] -= col[p] * f;
                }
            }
        }
    }
    Ok(picked)
}
