//! Ground-truth traffic phenomenon and noisy observation.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::gp::GpModel;
use crate::linalg::{mean_diagonal, SpdFactor};
use crate::network::{RoadNetwork, SegmentId};

#[derive(Clone, Debug, PartialEq)]
pub enum Source {
    GpSample,
    File(String),
}

/// True measurement `z_s` at every segment.
#[derive(Clone, Debug, PartialEq)]
pub struct Phenomenon {
    pub values: Vec<f64>,
    pub seed: u64,
    pub source: Source,
}

impl Phenomenon {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, s: SegmentId) -> f64 {
        self.values[s.0]
    }

    /// Empirical mean and standard deviation over all segments.
    pub fn moments(&self) -> (f64, f64) {
        moments(&self.values)
    }

    /// Rescales affinely so the empirical moments are exactly `mean` and `std`.
    pub fn match_moments(&mut self, mean: f64, std: f64) {
        let (m, s) = self.moments();
        for v in &mut self.values {
            *v = if s > 0.0 { mean + std * (*v - m) / s } else { mean };
        }
    }

    /// Reads `label,value` records; `#` starts a comment. Every segment of
    /// `net` must appear exactly once.
    pub fn parse(text: &str, net: &RoadNetwork) -> Result<Self> {
        let mut values = vec![None; net.len()];
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse { line: i + 1, message };
            let (label, value) = line.split_once(',').ok_or_else(|| err("expected label,value".into()))?;
            let label: u64 = label.trim().parse().map_err(|e| err(format!("bad segment id: {e}")))?;
            let value: f64 = value.trim().parse().map_err(|e| err(format!("bad value: {e}")))?;
            let s = net.segment_by_label(label).ok_or_else(|| err(format!("unknown segment {label}")))?;
            if values[s.0].replace(value).is_some() {
                return Err(err(format!("segment {label} listed twice")));
            }
        }
        let values = values
            .into_iter()
            .enumerate()
            .map(|(i, v)| v.ok_or_else(|| Error::Parse { line: 0, message: format!("no value for segment {}", net.labels()[i]) }))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { values, seed: 0, source: Source::File(String::new()) })
    }

    pub fn load(path: impl AsRef<Path>, net: &RoadNetwork) -> Result<Self> {
        let path = path.as_ref();
        let mut p = Self::parse(&std::fs::read_to_string(path)?, net)?;
        p.source = Source::File(path.display().to_string());
        Ok(p)
    }

    pub fn to_text(&self, net: &RoadNetwork) -> String {
        let mut out = String::new();
        for (label, v) in net.labels().iter().zip(&self.values) {
            writeln!(out, "{label},{v:.16e}").unwrap();
        }
        out
    }
}

pub fn moments(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// `μ_V + L ξ` with `L Lᵀ` the noise-free prior covariance over all
/// segments and `ξ` standard normal, seeded by `seed`.
pub fn sample_phenomenon(model: &GpModel, seed: u64) -> Result<Phenomenon> {
    let gram = model.cov().gram();
    let n = model.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xi = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let mean = DVector::from_column_slice(model.prior_mean());
    let values = if mean_diagonal(gram) == 0.0 {
        mean
    } else {
        mean + SpdFactor::new(gram)?.lower() * xi
    };
    Ok(Phenomenon { values: values.as_slice().to_vec(), seed, source: Source::GpSample })
}

/// `z_s + N(0, σ_n²)` per segment, independent draws.
pub fn observe(ph: &Phenomenon, segments: &[SegmentId], noise_variance: f64, rng: &mut impl Rng) -> Vec<f64> {
    if noise_variance == 0.0 {
        return segments.iter().map(|&s| ph.value(s)).collect();
    }
    let noise = Normal::new(0.0, noise_variance.sqrt()).expect("finite noise variance");
    segments.iter().map(|&s| ph.value(s) + noise.sample(rng)).collect()
}
