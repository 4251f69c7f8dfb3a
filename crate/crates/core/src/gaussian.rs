//! Dense Gaussian linear algebra.
//!
//! Covariance matrices are stored dense and symmetric. Factorization uses a
//! bounded jitter ladder: the smallest multiple of `trace/dim` among
//! `{0, 1e-12, 1e-10, 1e-8}` that makes the Cholesky succeed is added to the
//! diagonal and reported, so degenerate covariances (points sharing
//! coordinates, repeated observations) remain usable while being flagged.
//!
//! Conditioning is the textbook Schur complement: observing coordinates `O`
//! of a joint Gaussian leaves the rest with mean
//! `mu_U + S_UO S_OO^{-1} (v - mu_O)` and covariance
//! `S_UU - S_UO S_OO^{-1} S_OU`. It is the generic oracle against which the
//! closed-form corner-pinning formulas are validated.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::Scalar;

/// Exact sampling beyond this dimension is refused; large node sets must use
/// the grid sampler instead.
pub const MAX_DIM: usize = 4096;

/// Jitter ladder, in units of `trace/dim`.
const JITTER_LADDER: [f64; 4] = [0.0, 1e-12, 1e-10, 1e-8];

/// Relative tolerance for the symmetry check at construction.
const SYMMETRY_RTOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum GaussianError {
    #[error("matrix dimension {0} exceeds the exact-sampling cap {MAX_DIM}")]
    DimTooLarge(usize),
    #[error("matrix data length {found} does not match dim {dim} squared")]
    BadShape { dim: usize, found: usize },
    #[error("matrix is not symmetric at ({i},{j}): {a} vs {b}")]
    NotSymmetric { i: usize, j: usize, a: f64, b: f64 },
    #[error("negative diagonal entry {value} at index {index}")]
    NegativeDiagonal { index: usize, value: f64 },
    #[error("matrix is not positive semidefinite (Cholesky failed at the largest allowed jitter)")]
    NotPsd,
    #[error("mean length {mean} does not match covariance dimension {dim}")]
    MeanMismatch { mean: usize, dim: usize },
    #[error("observed covariance block is singular under the jitter policy")]
    SingularObservation,
    #[error("observation index {0} out of range or repeated")]
    BadObservationIndex(usize),
    #[error("observed values length {vals} does not match index count {idx}")]
    ObservationLength { idx: usize, vals: usize },
}

/// Symmetric positive-semidefinite covariance matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovMatrix<T> {
    dim: usize,
    data: Vec<T>,
}

impl<T: Scalar> CovMatrix<T> {
    /// Builds from row-major data, enforcing shape, the dimension cap,
    /// symmetry to `1e-12` relative, and nonnegative diagonal entries.
    /// Positive semidefiniteness is enforced lazily by [`cholesky`]; an
    /// explicit spectral check is available via [`CovMatrix::min_eigenvalue`].
    pub fn new(dim: usize, data: Vec<T>) -> Result<Self, GaussianError> {
        if dim > MAX_DIM {
            return Err(GaussianError::DimTooLarge(dim));
        }
        if data.len() != dim * dim {
            return Err(GaussianError::BadShape {
                dim,
                found: data.len(),
            });
        }
        let scale = data
            .iter()
            .fold(T::zero(), |acc, &v| acc.max(v.abs()));
        let rtol = T::cast(SYMMETRY_RTOL) * scale;
        for i in 0..dim {
            let d = data[i * dim + i];
            if d < T::zero() {
                return Err(GaussianError::NegativeDiagonal {
                    index: i,
                    value: d.to_f64_lossy(),
                });
            }
            for j in (i + 1)..dim {
                let a = data[i * dim + j];
                let b = data[j * dim + i];
                if (a - b).abs() > rtol {
                    return Err(GaussianError::NotSymmetric {
                        i,
                        j,
                        a: a.to_f64_lossy(),
                        b: b.to_f64_lossy(),
                    });
                }
            }
        }
        Ok(Self { dim, data })
    }

    /// Builds a symmetric matrix from `f(i, j)`, evaluated once per pair with
    /// `i <= j` and mirrored, so symmetry holds bit-exactly.
    pub fn from_fn(
        dim: usize,
        mut f: impl FnMut(usize, usize) -> T,
    ) -> Result<Self, GaussianError> {
        if dim > MAX_DIM {
            return Err(GaussianError::DimTooLarge(dim));
        }
        let mut data = vec![T::zero(); dim * dim];
        for i in 0..dim {
            for j in i..dim {
                let v = f(i, j);
                data[i * dim + j] = v;
                data[j * dim + i] = v;
            }
        }
        Self::new(dim, data)
    }

    pub fn identity(dim: usize) -> Self {
        let mut data = vec![T::zero(); dim * dim];
        for i in 0..dim {
            data[i * dim + i] = T::one();
        }
        Self { dim, data }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![T::zero(); dim * dim],
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.dim + j]
    }

    pub fn trace(&self) -> T {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    /// Frobenius norm of the difference to another matrix.
    pub fn frobenius_distance(&self, other: &Self) -> T {
        assert_eq!(self.dim, other.dim);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b) * (a - b))
            .sum::<T>()
            .sqrt()
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|&a| a * a).sum::<T>().sqrt()
    }

    /// Smallest eigenvalue via cyclic Jacobi sweeps. Costs `O(dim^3)` per
    /// sweep; intended for validation and tests, not hot paths.
    pub fn min_eigenvalue(&self) -> T {
        sym_eigenvalues(self)
            .into_iter()
            .fold(T::infinity(), T::min)
    }

    /// Determinant via LU decomposition with partial pivoting.
    pub fn determinant(&self) -> T {
        let n = self.dim;
        if n == 0 {
            return T::one();
        }
        let mut a = self.data.clone();
        let mut det = T::one();
        for col in 0..n {
            let mut piv = col;
            let mut best = a[col * n + col].abs();
            for r in (col + 1)..n {
                let v = a[r * n + col].abs();
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if best == T::zero() {
                return T::zero();
            }
            if piv != col {
                for c in 0..n {
                    a.swap(col * n + c, piv * n + c);
                }
                det = -det;
            }
            let pivot = a[col * n + col];
            det *= pivot;
            for r in (col + 1)..n {
                let factor = a[r * n + col] / pivot;
                for c in col..n {
                    let upper = a[col * n + c];
                    a[r * n + c] -= factor * upper;
                }
            }
        }
        det
    }
}

/// Eigenvalues of a symmetric matrix by the cyclic Jacobi method.
pub fn sym_eigenvalues<T: Scalar>(m: &CovMatrix<T>) -> Vec<T> {
    let n = m.dim();
    let mut a = m.as_slice().to_vec();
    if n <= 1 {
        return a;
    }
    let eps = T::cast(1e-14);
    for _sweep in 0..64 {
        let mut off = T::zero();
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[i * n + j] * a[i * n + j];
            }
        }
        let scale = (0..n).map(|i| a[i * n + i].abs()).fold(T::one(), T::max);
        if off.sqrt() <= eps * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == T::zero() {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (T::cast(2.0) * apq);
                let t = {
                    let sign = if theta >= T::zero() { T::one() } else { -T::one() };
                    sign / (theta.abs() + (theta * theta + T::one()).sqrt())
                };
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i * n + i]).collect()
}

/// Lower-triangular Cholesky factor of `cov + jitter * I`.
#[derive(Debug, Clone)]
pub struct CholeskyFactor<T> {
    dim: usize,
    lower: Vec<T>,
    jitter: T,
}

impl<T: Scalar> CholeskyFactor<T> {
    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The diagonal jitter that was added to make the factorization succeed.
    pub fn jitter(&self) -> T {
        self.jitter
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.lower[i * self.dim + j]
    }

    /// `L z` for a vector `z`.
    pub fn mul_vec(&self, z: &[T]) -> Vec<T> {
        assert_eq!(z.len(), self.dim);
        let n = self.dim;
        let mut out = vec![T::zero(); n];
        for i in 0..n {
            let mut acc = T::zero();
            for j in 0..=i {
                acc += self.lower[i * n + j] * z[j];
            }
            out[i] = acc;
        }
        out
    }

    /// Solves `L y = b` by forward substitution. Fails when the factor has a
    /// zero pivot (rank-deficient input).
    pub fn solve_lower(&self, b: &[T]) -> Result<Vec<T>, GaussianError> {
        assert_eq!(b.len(), self.dim);
        let n = self.dim;
        let mut y = vec![T::zero(); n];
        for i in 0..n {
            let piv = self.lower[i * n + i];
            if piv <= T::zero() {
                return Err(GaussianError::SingularObservation);
            }
            let mut acc = b[i];
            for j in 0..i {
                acc -= self.lower[i * n + j] * y[j];
            }
            y[i] = acc / piv;
        }
        Ok(y)
    }

    /// Solves `L^T x = y` by back substitution.
    pub fn solve_lower_transpose(&self, y: &[T]) -> Result<Vec<T>, GaussianError> {
        assert_eq!(y.len(), self.dim);
        let n = self.dim;
        let mut x = vec![T::zero(); n];
        for i in (0..n).rev() {
            let piv = self.lower[i * n + i];
            if piv <= T::zero() {
                return Err(GaussianError::SingularObservation);
            }
            let mut acc = y[i];
            for j in (i + 1)..n {
                acc -= self.lower[j * n + i] * x[j];
            }
            x[i] = acc / piv;
        }
        Ok(x)
    }

    /// Solves `(L L^T) x = b`.
    pub fn solve(&self, b: &[T]) -> Result<Vec<T>, GaussianError> {
        self.solve_lower_transpose(&self.solve_lower(b)?)
    }

    /// Reassembles `L L^T`.
    pub fn reconstruct(&self) -> CovMatrix<T> {
        let n = self.dim;
        let mut data = vec![T::zero(); n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut acc = T::zero();
                for k in 0..=j.min(i) {
                    acc += self.lower[i * n + k] * self.lower[j * n + k];
                }
                data[i * n + j] = acc;
                data[j * n + i] = acc;
            }
        }
        CovMatrix { dim: n, data }
    }
}

/// Attempts a Cholesky factorization at a fixed jitter. A diagonal entry that
/// is exactly zero in the input is allowed when its whole row is zero (a
/// deterministic coordinate); a pivot that collapses to `<= 0` during
/// elimination is a failure.
fn try_cholesky<T: Scalar>(c: &CovMatrix<T>, jitter: T) -> Option<Vec<T>> {
    let n = c.dim();
    let mut lower = vec![T::zero(); n * n];
    for j in 0..n {
        let diag_in = c.get(j, j) + jitter;
        if diag_in == T::zero() {
            // Deterministic coordinate: valid only if the row vanishes.
            for i in 0..n {
                if c.get(i, j) != T::zero() {
                    return None;
                }
            }
            continue; // row of L stays zero
        }
        let mut s = diag_in;
        for k in 0..j {
            s -= lower[j * n + k] * lower[j * n + k];
        }
        if s <= T::zero() {
            return None;
        }
        let piv = s.sqrt();
        lower[j * n + j] = piv;
        for i in (j + 1)..n {
            let mut acc = c.get(i, j);
            for k in 0..j {
                acc -= lower[i * n + k] * lower[j * n + k];
            }
            lower[i * n + j] = acc / piv;
        }
    }
    Some(lower)
}

/// Cholesky factorization with the jitter ladder
/// `{0, 1e-12, 1e-10, 1e-8} * jitter_scale * trace/dim`. The smallest rung
/// that succeeds is used and reported in the factor. `jitter_scale = 1` is
/// the standard policy; `0` forbids jitter entirely.
pub fn cholesky<T: Scalar>(
    c: &CovMatrix<T>,
    jitter_scale: T,
) -> Result<CholeskyFactor<T>, GaussianError> {
    let n = c.dim();
    let base = if n == 0 {
        T::zero()
    } else {
        jitter_scale * c.trace() / T::cast(n as f64)
    };
    for rung in JITTER_LADDER {
        let jitter = T::cast(rung) * base;
        if let Some(lower) = try_cholesky(c, jitter) {
            return Ok(CholeskyFactor {
                dim: n,
                lower,
                jitter,
            });
        }
        if base == T::zero() {
            break; // all rungs identical
        }
    }
    Err(GaussianError::NotPsd)
}

/// Mean vector plus covariance matrix.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaussianVector<T> {
    pub mean: Vec<T>,
    pub cov: CovMatrix<T>,
}

impl<T: Scalar> GaussianVector<T> {
    pub fn new(mean: Vec<T>, cov: CovMatrix<T>) -> Result<Self, GaussianError> {
        if mean.len() != cov.dim() {
            return Err(GaussianError::MeanMismatch {
                mean: mean.len(),
                dim: cov.dim(),
            });
        }
        Ok(Self { mean, cov })
    }

    pub fn centered(cov: CovMatrix<T>) -> Self {
        Self {
            mean: vec![T::zero(); cov.dim()],
            cov,
        }
    }

    pub fn dim(&self) -> usize {
        self.cov.dim()
    }
}

/// Reusable sampler: factor once, draw many times.
#[derive(Debug, Clone)]
pub struct MvnSampler<T> {
    mean: Vec<T>,
    factor: CholeskyFactor<T>,
}

impl<T: Scalar> MvnSampler<T> {
    pub fn new(g: &GaussianVector<T>) -> Result<Self, GaussianError> {
        Ok(Self {
            mean: g.mean.clone(),
            factor: cholesky(&g.cov, T::one())?,
        })
    }

    pub fn jitter(&self) -> T {
        self.factor.jitter()
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<T> {
        let n = self.factor.dim();
        let z: Vec<T> = (0..n).map(|_| T::std_normal(rng)).collect();
        let mut x = self.factor.mul_vec(&z);
        for (xi, &mi) in x.iter_mut().zip(&self.mean) {
            *xi += mi;
        }
        x
    }
}

/// One draw from a multivariate normal. Deterministic for a fixed seed; a
/// zero covariance returns the mean exactly.
pub fn sample_mvn<T: Scalar, R: Rng + ?Sized>(
    g: &GaussianVector<T>,
    rng: &mut R,
) -> Result<Vec<T>, GaussianError> {
    Ok(MvnSampler::new(g)?.draw(rng))
}

/// Conditions a joint Gaussian on observed coordinates via the Schur
/// complement, returning a full-dimensional Gaussian: observed coordinates
/// carry the observed value with zero variance, unobserved coordinates carry
/// the conditional mean and covariance.
///
/// Coordinates whose variance is exactly zero carry no randomness and are
/// dropped from the observation set, which makes conditioning idempotent.
pub fn condition_gaussian<T: Scalar>(
    joint: &GaussianVector<T>,
    observed_idx: &[usize],
    observed_vals: &[T],
) -> Result<GaussianVector<T>, GaussianError> {
    let n = joint.dim();
    if observed_idx.len() != observed_vals.len() {
        return Err(GaussianError::ObservationLength {
            idx: observed_idx.len(),
            vals: observed_vals.len(),
        });
    }
    let mut seen = vec![false; n];
    for &i in observed_idx {
        if i >= n || seen[i] {
            return Err(GaussianError::BadObservationIndex(i));
        }
        seen[i] = true;
    }

    // Informative observations: strictly positive variance.
    let obs: Vec<(usize, T)> = observed_idx
        .iter()
        .zip(observed_vals)
        .filter(|(&i, _)| joint.cov.get(i, i) > T::zero())
        .map(|(&i, &v)| (i, v))
        .collect();
    if obs.is_empty() {
        return Ok(joint.clone());
    }

    let o: Vec<usize> = obs.iter().map(|&(i, _)| i).collect();
    let u: Vec<usize> = (0..n).filter(|i| !o.contains(i)).collect();
    let m = o.len();

    let cov_oo = CovMatrix::from_fn(m, |a, b| joint.cov.get(o[a], o[b]))?;
    // Jitter is forbidden here: a singular observed block must surface as an
    // error rather than silently tilt the conditional law.
    let factor = cholesky(&cov_oo, T::zero()).map_err(|_| GaussianError::SingularObservation)?;

    let resid: Vec<T> = obs.iter().map(|&(i, v)| v - joint.mean[i]).collect();
    let alpha = factor.solve(&resid)?;

    // Solve S_OO X = S_OU column by column.
    let mut cols: Vec<Vec<T>> = Vec::with_capacity(u.len());
    for &uj in &u {
        let b: Vec<T> = o.iter().map(|&oi| joint.cov.get(oi, uj)).collect();
        cols.push(factor.solve(&b)?);
    }

    let mut mean = joint.mean.clone();
    let mut data = vec![T::zero(); n * n];
    for (ci, &ui) in u.iter().enumerate() {
        // conditional mean: mu_U + S_UO S_OO^{-1} (v - mu_O)
        let mut adjust = T::zero();
        for a in 0..m {
            adjust += joint.cov.get(ui, o[a]) * alpha[a];
        }
        mean[ui] = joint.mean[ui] + adjust;
        for (cj, &uj) in u.iter().enumerate().skip(ci) {
            let mut corr = T::zero();
            for a in 0..m {
                corr += joint.cov.get(ui, o[a]) * cols[cj][a];
            }
            let v = joint.cov.get(ui, uj) - corr;
            data[ui * n + uj] = v;
            data[uj * n + ui] = v;
        }
    }
    for &(i, v) in &obs {
        mean[i] = v;
    }
    // Zero-variance coordinates dropped above keep their original (zero)
    // rows; rows of truly observed coordinates are zero by construction.
    let cov = CovMatrix { dim: n, data };
    Ok(GaussianVector { mean, cov })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;

    fn cov64(dim: usize, rows: &[&[f64]]) -> CovMatrix<f64> {
        let data: Vec<f64> = rows.iter().flat_map(|r| r.iter().copied()).collect();
        CovMatrix::new(dim, data).unwrap()
    }

    #[test]
    fn cholesky_identity_is_identity_with_zero_jitter() {
        let c = CovMatrix::<f64>::identity(3);
        let f = cholesky(&c, 1.0).unwrap();
        assert_eq!(f.jitter(), 0.0);
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_eq!(f.get(i, j), expect);
            }
        }
    }

    #[test]
    fn cholesky_hand_example() {
        // [[4,2],[2,2]] factors as [[2,0],[1,1]].
        let c = cov64(2, &[&[4.0, 2.0], &[2.0, 2.0]]);
        let f = cholesky(&c, 1.0).unwrap();
        assert_eq!(f.jitter(), 0.0);
        assert!((f.get(0, 0) - 2.0).abs() < 1e-15);
        assert!((f.get(1, 0) - 1.0).abs() < 1e-15);
        assert!((f.get(1, 1) - 1.0).abs() < 1e-15);
        let rt = f.reconstruct();
        assert!(rt.frobenius_distance(&c) <= 1e-10 * c.frobenius_norm());
    }

    #[test]
    fn cholesky_rank_one_succeeds_with_reported_jitter() {
        let c = cov64(2, &[&[1.0, 1.0], &[1.0, 1.0]]);
        let f = cholesky(&c, 1.0).unwrap();
        assert!(f.jitter() > 0.0);
        let mut target = c.clone();
        // compare against c + jitter I
        let jit = f.jitter();
        let mut data = target.as_slice().to_vec();
        data[0] += jit;
        data[3] += jit;
        target = CovMatrix::new(2, data).unwrap();
        let rt = f.reconstruct();
        assert!(rt.frobenius_distance(&target) <= 1e-10 * target.frobenius_norm());
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let c = cov64(2, &[&[1.0, 2.0], &[2.0, 1.0]]);
        assert!(matches!(cholesky(&c, 1.0), Err(GaussianError::NotPsd)));
    }

    #[test]
    fn cholesky_roundtrip_random_psd() {
        // 1000 random PSD matrices of dim <= 64: L L^T reproduces c + jitter I
        // within 1e-10 relative Frobenius.
        let mut rng = RngStream::root(2024);
        for trial in 0..1000 {
            let dim = 1 + (trial % 64);
            let mut g = vec![0.0f64; dim * dim];
            for v in g.iter_mut() {
                *v = f64::std_normal(&mut rng);
            }
            let mut data = vec![0.0f64; dim * dim];
            for i in 0..dim {
                for j in i..dim {
                    let mut acc = 0.0;
                    for k in 0..dim {
                        acc += g[i * dim + k] * g[j * dim + k];
                    }
                    data[i * dim + j] = acc;
                    data[j * dim + i] = acc;
                }
            }
            let c = CovMatrix::new(dim, data).unwrap();
            let f = cholesky(&c, 1.0).unwrap();
            let mut shifted = c.as_slice().to_vec();
            for i in 0..dim {
                shifted[i * dim + i] += f.jitter();
            }
            let target = CovMatrix::new(dim, shifted).unwrap();
            let dist = f.reconstruct().frobenius_distance(&target);
            assert!(
                dist <= 1e-10 * target.frobenius_norm().max(1e-300),
                "trial {trial}: relative Frobenius error {}",
                dist / target.frobenius_norm()
            );
        }
    }

    #[test]
    fn sample_zero_cov_returns_mean_exactly() {
        let g = GaussianVector::new(vec![1.5, -2.0], CovMatrix::zeros(2)).unwrap();
        let mut rng = RngStream::root(1);
        let x = sample_mvn(&g, &mut rng).unwrap();
        assert_eq!(x, vec![1.5, -2.0]);
    }

    #[test]
    fn sample_standard_normal_variance() {
        let g = GaussianVector::centered(CovMatrix::identity(1));
        let sampler = MvnSampler::new(&g).unwrap();
        let mut rng = RngStream::root(42);
        let n = 100_000;
        let mut sum = 0.0f64;
        let mut sq = 0.0f64;
        for _ in 0..n {
            let x: f64 = sampler.draw(&mut rng)[0];
            sum += x;
            sq += x * x;
        }
        let mean = sum / n as f64;
        let var = sq / n as f64 - mean * mean;
        assert!((0.97..=1.03).contains(&var), "sample variance {var}");
    }

    #[test]
    fn sample_deterministic_under_seed() {
        let c = cov64(2, &[&[2.0, 0.5], &[0.5, 1.0]]);
        let g = GaussianVector::centered(c);
        let mut a = RngStream::root(42);
        let mut b = RngStream::root(42);
        let xa = sample_mvn(&g, &mut a).unwrap();
        let xb = sample_mvn(&g, &mut b).unwrap();
        assert_eq!(xa, xb);
    }

    #[test]
    fn sample_empirical_cov_within_5_sigma() {
        let c = cov64(
            3,
            &[&[2.0, 0.6, -0.3], &[0.6, 1.0, 0.2], &[-0.3, 0.2, 0.5]],
        );
        let g = GaussianVector::centered(c.clone());
        let sampler = MvnSampler::new(&g).unwrap();
        let mut rng = RngStream::root(7);
        let n = 100_000usize;
        let mut acc = [[0.0f64; 3]; 3];
        for _ in 0..n {
            let x = sampler.draw(&mut rng);
            for i in 0..3 {
                for j in 0..3 {
                    acc[i][j] += x[i] * x[j];
                }
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                let est = acc[i][j] / n as f64;
                let truth = c.get(i, j);
                let se = ((c.get(i, i) * c.get(j, j) + truth * truth) / n as f64).sqrt();
                assert!(
                    (est - truth).abs() <= 5.0 * se,
                    "entry ({i},{j}): est {est} truth {truth} se {se}"
                );
            }
        }
    }

    #[test]
    fn condition_nothing_returns_input() {
        let c = cov64(2, &[&[1.0, 0.3], &[0.3, 1.0]]);
        let g = GaussianVector::new(vec![0.5, -0.5], c).unwrap();
        let out = condition_gaussian(&g, &[], &[]).unwrap();
        assert_eq!(out.mean, g.mean);
        assert_eq!(out.cov.as_slice(), g.cov.as_slice());
    }

    #[test]
    fn condition_bivariate_textbook() {
        // cov [[1,rho],[rho,1]], observe X2 = x: mean rho*x, var 1 - rho^2.
        let rho = 0.6;
        let x = 1.7;
        let c = cov64(2, &[&[1.0, rho], &[rho, 1.0]]);
        let g = GaussianVector::centered(c);
        let out = condition_gaussian(&g, &[1], &[x]).unwrap();
        assert!((out.mean[0] - rho * x).abs() < 1e-12);
        assert!((out.cov.get(0, 0) - (1.0 - rho * rho)).abs() < 1e-12);
        assert_eq!(out.mean[1], x);
        assert_eq!(out.cov.get(1, 1), 0.0);
        assert_eq!(out.cov.get(0, 1), 0.0);
    }

    #[test]
    fn condition_everything_pins_all_coordinates() {
        let c = cov64(2, &[&[2.0, 0.5], &[0.5, 1.0]]);
        let g = GaussianVector::centered(c);
        let out = condition_gaussian(&g, &[0, 1], &[3.0, -1.0]).unwrap();
        assert_eq!(out.mean, vec![3.0, -1.0]);
        assert!(out.cov.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn condition_is_idempotent() {
        let c = cov64(
            3,
            &[&[2.0, 0.6, -0.3], &[0.6, 1.0, 0.2], &[-0.3, 0.2, 0.5]],
        );
        let g = GaussianVector::centered(c);
        let once = condition_gaussian(&g, &[2], &[0.4]).unwrap();
        let twice = condition_gaussian(&once, &[2], &[0.4]).unwrap();
        assert_eq!(once.mean, twice.mean);
        assert_eq!(once.cov.as_slice(), twice.cov.as_slice());
    }

    #[test]
    fn conditional_cov_is_psd() {
        let mut rng = RngStream::root(99);
        for _ in 0..50 {
            let dim = 5;
            let mut g = vec![0.0f64; dim * dim];
            for v in g.iter_mut() {
                *v = f64::std_normal(&mut rng);
            }
            let c = CovMatrix::from_fn(dim, |i, j| {
                let mut acc = 0.0;
                for k in 0..dim {
                    acc += g[i * dim + k] * g[j * dim + k];
                }
                acc + if i == j { 0.1 } else { 0.0 }
            })
            .unwrap();
            let gv = GaussianVector::centered(c);
            let out = condition_gaussian(&gv, &[0, 3], &[0.2, -0.7]).unwrap();
            let min = out.cov.min_eigenvalue();
            assert!(min >= -1e-10 * out.cov.trace().max(1.0), "min eig {min}");
        }
    }

    #[test]
    fn determinant_matches_hand_values() {
        let c = cov64(2, &[&[0.1, 0.1], &[0.1, 0.2]]);
        assert!((c.determinant() - 0.01).abs() < 1e-15);
        assert_eq!(CovMatrix::<f64>::identity(4).determinant(), 1.0);
    }

    #[test]
    fn rejects_asymmetric_and_negative_diag() {
        assert!(CovMatrix::new(2, vec![1.0, 0.5, 0.4, 1.0]).is_err());
        assert!(CovMatrix::new(1, vec![-1.0]).is_err());
    }

    #[test]
    fn dimension_cap_enforced_before_allocation() {
        let r = CovMatrix::<f64>::from_fn(MAX_DIM + 1, |_, _| 0.0);
        assert!(matches!(r, Err(GaussianError::DimTooLarge(_))));
    }
}
