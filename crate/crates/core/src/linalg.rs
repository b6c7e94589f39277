//! Dense linear-algebra helpers shared by the GP, fusion and sensing code.
//!
//! Matrices are `nalgebra` column-major `DMatrix<f64>`; wire formats that
//! carry matrices write them row-major (see [`crate::fusion::wire`]).

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Diagonal jitter levels, relative to the mean diagonal, tried in order
/// before a matrix is declared singular.
pub const JITTER_LADDER: [f64; 4] = [0.0, 1e-10, 1e-8, 1e-6];

/// A factorization is rejected when its smallest squared pivot falls below
/// this fraction of the mean diagonal.
const MIN_PIVOT_RATIO: f64 = 1e-13;

/// Relative tolerance on negative eigenvalues for PSD checks.
pub const PSD_TOLERANCE: f64 = 1e-8;

/// Cholesky factor `M + jitter * mean_diag * I = L Lᵀ` of a symmetric
/// positive definite matrix.
#[derive(Clone, Debug)]
pub struct SpdFactor {
    lower: DMatrix<f64>,
    jitter: f64,
}

impl SpdFactor {
    /// Factors `m`, walking the jitter ladder until the pivots are healthy.
    pub fn new(m: &DMatrix<f64>) -> Result<Self> {
        let n = m.nrows();
        assert_eq!(n, m.ncols(), "factor_spd needs a square matrix");
        if n == 0 {
            return Ok(Self { lower: DMatrix::zeros(0, 0), jitter: 0.0 });
        }
        let scale = mean_diagonal(m);
        let mut last_condition = f64::INFINITY;
        for &level in JITTER_LADDER.iter() {
            let mut a = m.clone();
            if level > 0.0 {
                for i in 0..n {
                    a[(i, i)] += level * scale;
                }
            }
            if let Some(chol) = a.cholesky() {
                let lower = chol.unpack();
                let (min_p, max_p) = pivot_range(&lower);
                last_condition = (max_p / min_p).powi(2);
                if scale > 0.0 && min_p * min_p >= MIN_PIVOT_RATIO * scale {
                    return Ok(Self { lower, jitter: level });
                }
            }
        }
        Err(Error::Singular { condition: last_condition })
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    /// Relative jitter level that was needed (0 when none).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    /// `L⁻¹ B`.
    pub fn whiten(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = b.clone();
        if self.dim() > 0 {
            self.lower.solve_lower_triangular_mut(&mut x);
        }
        x
    }

    /// `L⁻¹ b`.
    pub fn whiten_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = b.clone();
        if self.dim() > 0 {
            self.lower.solve_lower_triangular_mut(&mut x);
        }
        x
    }

    /// `M⁻¹ B`.
    pub fn solve(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = self.whiten(b);
        if self.dim() > 0 {
            self.lower.tr_solve_lower_triangular_mut(&mut x);
        }
        x
    }

    /// `M⁻¹ b`.
    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut x = self.whiten_vec(b);
        if self.dim() > 0 {
            self.lower.tr_solve_lower_triangular_mut(&mut x);
        }
        x
    }

    pub fn log_det(&self) -> f64 {
        self.lower.diagonal().iter().map(|d| 2.0 * d.ln()).sum()
    }

    /// Squared ratio of the extreme pivots; a cheap lower bound on the
    /// spectral condition number.
    pub fn condition_estimate(&self) -> f64 {
        if self.dim() == 0 {
            return 1.0;
        }
        let (min_p, max_p) = pivot_range(&self.lower);
        (max_p / min_p).powi(2)
    }
}

fn pivot_range(lower: &DMatrix<f64>) -> (f64, f64) {
    lower
        .diagonal()
        .iter()
        .fold((f64::INFINITY, 0.0_f64), |(lo, hi), &d| (lo.min(d), hi.max(d)))
}

pub fn mean_diagonal(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.diagonal().sum() / m.nrows() as f64
}

/// Replaces `m` by `(m + mᵀ)/2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Log-determinant of a symmetric PSD matrix.
///
/// Returns `-inf` when the matrix is singular within tolerance and an error
/// when it has an eigenvalue below `-PSD_TOLERANCE * scale`.
pub fn log_det_psd(m: &DMatrix<f64>) -> Result<f64> {
    let n = m.nrows();
    if n == 0 {
        return Ok(0.0);
    }
    if let Some(chol) = m.clone().cholesky() {
        let l = chol.unpack();
        if l.diagonal().iter().all(|&d| d > 0.0) {
            return Ok(l.diagonal().iter().map(|d| 2.0 * d.ln()).sum());
        }
    }
    let scale = mean_diagonal(m).abs().max(f64::MIN_POSITIVE);
    let eig = SymmetricEigen::new(m.clone());
    let min = eig.eigenvalues.min();
    if min < -PSD_TOLERANCE * scale {
        return Err(Error::NotPsd { eigenvalue: min });
    }
    if min <= f64::EPSILON * scale * n as f64 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(eig.eigenvalues.iter().map(|v| v.ln()).sum())
}

/// Joint differential entropy `½ log((2πe)^n |Σ|)` of a Gaussian with
/// covariance `cov`. The empty distribution has entropy 0.
pub fn gaussian_entropy(cov: &DMatrix<f64>) -> Result<f64> {
    let n = cov.nrows();
    if n == 0 {
        return Ok(0.0);
    }
    let ld = log_det_psd(cov)?;
    Ok(0.5 * (n as f64 * LOG_2PI_E + ld))
}

/// `ln(2πe)`.
pub const LOG_2PI_E: f64 = 2.837_877_066_409_345_5;

/// Largest absolute entry (0 for empty input).
pub fn max_abs<'a>(values: impl IntoIterator<Item = &'a f64>) -> f64 {
    values.into_iter().fold(0.0_f64, |m, v| m.max(v.abs()))
}

/// `max |a - b| / max |b|`, the deviation measure used by the oracle
/// comparisons. Two exactly equal inputs give 0.
pub fn relative_deviation(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff = a
        .iter()
        .zip(b)
        .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
    if diff == 0.0 {
        return 0.0;
    }
    diff / max_abs(b).max(f64::MIN_POSITIVE)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_factor_is_identity() {
        let f = SpdFactor::new(&DMatrix::identity(4, 4)).unwrap();
        assert_eq!(f.lower(), &DMatrix::<f64>::identity(4, 4));
        assert_eq!(f.jitter(), 0.0);
        assert_eq!(f.log_det(), 0.0);
    }

    #[test]
    fn rank_deficient_matrix_climbs_the_ladder() {
        let v = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        let m = &v * v.transpose();
        let f = SpdFactor::new(&m).unwrap();
        assert!(f.jitter() > 0.0);
    }

    #[test]
    fn zero_matrix_is_singular() {
        assert!(matches!(
            SpdFactor::new(&DMatrix::zeros(2, 2)),
            Err(Error::Singular { .. })
        ));
    }

    #[test]
    fn solve_round_trips() {
        let m = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let f = SpdFactor::new(&m).unwrap();
        let b = DVector::from_column_slice(&[1.0, -2.0, 0.5]);
        let x = f.solve_vec(&b);
        assert!((&m * x - b).norm() < 1e-12);
        let det = m.determinant();
        assert!((f.log_det() - det.ln()).abs() < 1e-12);
    }

    #[test]
    fn entropy_conventions() {
        assert_eq!(gaussian_entropy(&DMatrix::zeros(0, 0)).unwrap(), 0.0);
        let h = gaussian_entropy(&DMatrix::identity(1, 1)).unwrap();
        assert!((h - 1.418_938_533_204_672_7).abs() < 1e-12);
        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert_eq!(gaussian_entropy(&singular).unwrap(), f64::NEG_INFINITY);
        let indefinite = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(
            gaussian_entropy(&indefinite),
            Err(Error::NotPsd { .. })
        ));
    }
}
