use nalgebra::DMatrix;

use crate::error::Result;
use crate::fusion::SupportSet;
use crate::gp::GpModel;
use crate::linalg::SpdFactor;
use crate::network::SegmentId;

/// `Σ̈_UU = Ψ Ψᵀ`.
pub fn cholesky_global(sigma: &DMatrix<f64>) -> Result<SpdFactor> {
    SpdFactor::new(sigma)
}

/// `Φ_k`: one vector `Ψ⁻¹ Σ_Us` per reachable unobserved segment `s`.
#[derive(Clone, Debug)]
pub struct PhiSet {
    pub sensor: usize,
    pub segments: Vec<SegmentId>,
    /// `|U| x |segments|`, column `j` belongs to `segments[j]`.
    pub vectors: DMatrix<f64>,
}

impl PhiSet {
    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Wire size: a 12-byte header (sensor, `|U|`, count) and, per segment,
    /// a `u32` id followed by `|U|` `f64`s.
    pub fn encoded_len(&self) -> usize {
        12 + self.len() * (4 + 8 * self.vectors.nrows())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(&(self.sensor as u32).to_le_bytes());
        out.extend_from_slice(&(self.vectors.nrows() as u32).to_le_bytes());
        out.extend_from_slice(&(self.len() as u32).to_le_bytes());
        for (j, s) in self.segments.iter().enumerate() {
            out.extend_from_slice(&(s.0 as u32).to_le_bytes());
            for v in self.vectors.column(j).iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// `max |φᵀφ'|` over all pairs, or `None` when either set is empty.
    pub fn max_cross(&self, other: &PhiSet) -> Option<f64> {
        if self.is_empty() || other.is_empty() {
            return None;
        }
        Some(self.vectors.tr_mul(&other.vectors).amax())
    }
}

pub fn compute_phi(k: usize, psi: &SpdFactor, y_wk: &[SegmentId], model: &GpModel, u: &SupportSet) -> PhiSet {
    let cross = model.cov().cross(u.segments(), y_wk);
    PhiSet { sensor: k, segments: y_wk.to_vec(), vectors: psi.whiten(&cross) }
}
