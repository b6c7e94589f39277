//! Squared-exponential kernel over embedded segments.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::embedding::Embedding;
use crate::error::{Error, Result};
use crate::network::SegmentId;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelHyper {
    pub signal_variance: f64,
    pub length_scales: Vec<f64>,
    pub noise_variance: f64,
}

impl KernelHyper {
    /// Same length-scale on every one of `dim` axes.
    pub fn isotropic(signal_variance: f64, length_scale: f64, noise_variance: f64, dim: usize) -> Self {
        Self { signal_variance, length_scales: vec![length_scale; dim], noise_variance }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.signal_variance > 0.0) || !self.signal_variance.is_finite() {
            return Err(Error::Hyperparameters(format!(
                "signal variance must be positive, got {}",
                self.signal_variance
            )));
        }
        if !(self.noise_variance >= 0.0) || !self.noise_variance.is_finite() {
            return Err(Error::Hyperparameters(format!(
                "noise variance must be nonnegative, got {}",
                self.noise_variance
            )));
        }
        if self.length_scales.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: self.length_scales.len() });
        }
        if let Some(l) = self.length_scales.iter().find(|l| !(**l > 0.0) || !l.is_finite()) {
            return Err(Error::Hyperparameters(format!("length-scale must be positive, got {l}")));
        }
        Ok(())
    }
}

/// `σ_s² exp(-½ Σ_i ((g(a)_i - g(b)_i) / ℓ_i)²)`.
pub fn kernel(a: SegmentId, b: SegmentId, emb: &Embedding, h: &KernelHyper) -> Result<f64> {
    check_segment(a, emb)?;
    check_segment(b, emb)?;
    Ok(kernel_unchecked(emb.coords(), a.0, b.0, h))
}

/// Kernel plus `σ_n²` when `a == b`.
pub fn prior_covariance(a: SegmentId, b: SegmentId, emb: &Embedding, h: &KernelHyper) -> Result<f64> {
    let k = kernel(a, b, emb, h)?;
    Ok(if a == b { k + h.noise_variance } else { k })
}

fn check_segment(s: SegmentId, emb: &Embedding) -> Result<()> {
    if s.0 >= emb.len() {
        Err(Error::UnknownSegment(s.0))
    } else {
        Ok(())
    }
}

#[inline]
fn kernel_unchecked(coords: &DMatrix<f64>, a: usize, b: usize, h: &KernelHyper) -> f64 {
    if a == b {
        return h.signal_variance;
    }
    let mut q = 0.0;
    for (c, l) in h.length_scales.iter().enumerate() {
        let d = (coords[(a, c)] - coords[(b, c)]) / l;
        q += d * d;
    }
    h.signal_variance * (-0.5 * q).exp()
}

/// Kernel matrix over every segment, computed once and shared.
///
/// Covariance blocks follow an observation-event convention: a block of a
/// variable list with itself carries `σ_n²` on its diagonal, while a block
/// between two different lists (targets vs. observations, support vs.
/// observations) is kernel-only, even where the lists share a segment.
/// For disjoint lists this is exactly `σ_{ss'} = k(s,s') + σ_n² δ_{ss'}`.
#[derive(Clone, Debug)]
pub struct CovarianceModel {
    hyper: KernelHyper,
    gram: DMatrix<f64>,
}

impl CovarianceModel {
    pub fn new(emb: &Embedding, hyper: KernelHyper) -> Result<Self> {
        hyper.validate(emb.dimension())?;
        let n = emb.len();
        let coords = emb.coords();
        let mut gram = DMatrix::zeros(n, n);
        for j in 0..n {
            for i in j..n {
                let v = kernel_unchecked(coords, i, j, &hyper);
                gram[(i, j)] = v;
                gram[(j, i)] = v;
            }
        }
        Ok(Self { hyper, gram })
    }

    pub fn hyper(&self) -> &KernelHyper {
        &self.hyper
    }

    pub fn len(&self) -> usize {
        self.gram.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.gram.nrows() == 0
    }

    pub fn noise_variance(&self) -> f64 {
        self.hyper.noise_variance
    }

    #[inline]
    pub fn k(&self, a: SegmentId, b: SegmentId) -> f64 {
        self.gram[(a.0, b.0)]
    }

    /// Kernel-only gram matrix over all segments.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// Cross block `K(rows, cols)` between two distinct variable lists.
    pub fn cross(&self, rows: &[SegmentId], cols: &[SegmentId]) -> DMatrix<f64> {
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| self.gram[(rows[i].0, cols[j].0)])
    }

    /// `K(idx, idx) + σ_n² I` for one variable list.
    pub fn block(&self, idx: &[SegmentId]) -> DMatrix<f64> {
        let mut m = self.cross(idx, idx);
        for i in 0..idx.len() {
            m[(i, i)] += self.hyper.noise_variance;
        }
        m
    }

    pub fn check(&self, idx: &[SegmentId]) -> Result<()> {
        match idx.iter().find(|s| s.0 >= self.len()) {
            Some(s) => Err(Error::UnknownSegment(s.0)),
            None => Ok(()),
        }
    }
}
