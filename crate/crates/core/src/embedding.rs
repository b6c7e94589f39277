//! Classical multidimensional scaling of the geodesic distances.
//!
//! Directed distances are symmetrized first: the mean of both directions when
//! both are finite, the finite one when only one is, and an error when the
//! pair is mutually unreachable.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::geodesic::GeodesicMatrix;
use crate::network::SegmentId;

/// Fraction of positive eigenvalue mass the automatic dimension must keep.
pub const AUTO_DIMENSION_MASS: f64 = 0.95;

#[derive(Clone, Debug)]
pub struct Embedding {
    /// `|V| x p'` coordinates; row `s` is `g(s)`.
    coords: DMatrix<f64>,
    stress: f64,
}

impl Embedding {
    /// Wraps explicit coordinates, computing stress against `dissimilarity`.
    pub fn from_coords(coords: DMatrix<f64>, dissimilarity: &DMatrix<f64>) -> Self {
        let stress = stress(&coords, dissimilarity);
        Self { coords, stress }
    }

    pub fn len(&self) -> usize {
        self.coords.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.nrows() == 0
    }

    pub fn dimension(&self) -> usize {
        self.coords.ncols()
    }

    pub fn coords(&self) -> &DMatrix<f64> {
        &self.coords
    }

    pub fn point(&self, s: SegmentId) -> Option<Vec<f64>> {
        (s.0 < self.len()).then(|| self.coords.row(s.0).iter().copied().collect())
    }

    /// Squared loss over unordered pairs against the symmetrized distances.
    pub fn stress(&self) -> f64 {
        self.stress
    }

    pub fn distance(&self, a: SegmentId, b: SegmentId) -> f64 {
        let mut acc = 0.0;
        for c in 0..self.dimension() {
            let d = self.coords[(a.0, c)] - self.coords[(b.0, c)];
            acc += d * d;
        }
        acc.sqrt()
    }
}

/// Symmetric dissimilarities fed to MDS.
pub fn symmetrize(d: &GeodesicMatrix) -> Result<DMatrix<f64>> {
    let n = d.len();
    let mut out = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let a = d.get(SegmentId(i), SegmentId(j));
            let b = d.get(SegmentId(j), SegmentId(i));
            let v = match (a.is_finite(), b.is_finite()) {
                (true, true) => 0.5 * (a + b),
                (true, false) => a,
                (false, true) => b,
                (false, false) => return Err(Error::Unreachable { from: i, to: j }),
            };
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    Ok(out)
}

/// Eigen-decomposition of the double-centred squared dissimilarities,
/// eigenvalues sorted in descending order.
#[derive(Clone, Debug)]
pub struct MdsSpectrum {
    pub eigenvalues: Vec<f64>,
    vectors: DMatrix<f64>,
}

impl MdsSpectrum {
    pub fn new(dissimilarity: &DMatrix<f64>) -> Self {
        let n = dissimilarity.nrows();
        let mut b = dissimilarity.map(|v| v * v);
        let row_means: Vec<f64> = (0..n).map(|i| b.row(i).sum() / n as f64).collect();
        let grand = row_means.iter().sum::<f64>() / n.max(1) as f64;
        for i in 0..n {
            for j in 0..n {
                b[(i, j)] = -0.5 * (b[(i, j)] - row_means[i] - row_means[j] + grand);
            }
        }
        let eig = SymmetricEigen::new(b);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &c| eig.eigenvalues[c].total_cmp(&eig.eigenvalues[a]));
        let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
        Self { eigenvalues, vectors }
    }

    /// Smallest dimension whose leading positive eigenvalues carry `mass` of
    /// the total positive eigenvalue mass (at least 1).
    pub fn dimension_for_mass(&self, mass: f64) -> usize {
        let total: f64 = self.eigenvalues.iter().filter(|v| **v > 0.0).sum();
        if total <= 0.0 {
            return 1;
        }
        let mut acc = 0.0;
        for (i, v) in self.eigenvalues.iter().enumerate() {
            if *v <= 0.0 {
                break;
            }
            acc += v;
            if acc >= mass * total {
                return i + 1;
            }
        }
        self.eigenvalues.iter().filter(|v| **v > 0.0).count().max(1)
    }

    /// Coordinates from the leading `dim` eigenpairs; non-positive
    /// eigenvalues contribute zero columns.
    pub fn coords(&self, dim: usize) -> DMatrix<f64> {
        let n = self.vectors.nrows();
        DMatrix::from_fn(n, dim, |r, c| {
            let lambda = self.eigenvalues[c];
            if lambda > 0.0 {
                self.vectors[(r, c)] * lambda.sqrt()
            } else {
                0.0
            }
        })
    }
}

/// Embeds the segments in `R^dim` by classical MDS.
pub fn mds_embed(d: &GeodesicMatrix, dim: usize) -> Result<Embedding> {
    let n = d.len();
    if dim == 0 || dim > n {
        return Err(Error::EmbeddingDimension { dim, max: n });
    }
    let dis = symmetrize(d)?;
    let spectrum = MdsSpectrum::new(&dis);
    Ok(Embedding::from_coords(spectrum.coords(dim), &dis))
}

/// Like [`mds_embed`], choosing the smallest dimension that keeps
/// [`AUTO_DIMENSION_MASS`] of the positive eigenvalue mass.
pub fn mds_embed_auto(d: &GeodesicMatrix) -> Result<Embedding> {
    if d.is_empty() {
        return Err(Error::EmbeddingDimension { dim: 1, max: 0 });
    }
    let dis = symmetrize(d)?;
    let spectrum = MdsSpectrum::new(&dis);
    let dim = spectrum.dimension_for_mass(AUTO_DIMENSION_MASS);
    Ok(Embedding::from_coords(spectrum.coords(dim), &dis))
}

fn stress(coords: &DMatrix<f64>, dis: &DMatrix<f64>) -> f64 {
    let n = coords.nrows();
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let mut acc = 0.0;
            for c in 0..coords.ncols() {
                let diff = coords[(i, c)] - coords[(j, c)];
                acc += diff * diff;
            }
            let r = dis[(i, j)] - acc.sqrt();
            total += r * r;
        }
    }
    total
}
