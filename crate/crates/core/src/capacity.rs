//! Bessel–Riesz kernels, energies, and capacity estimation.
//!
//! The order-`beta` kernel is `|x|^-beta` for `beta > 0`,
//! `max(1, log(1/|x|))` for `beta = 0`, and the constant `1` for `beta < 0`
//! (with value infinity at the origin when `beta >= 0`). The energy of a
//! probability measure is the double integral of the kernel; capacity is the
//! reciprocal of the infimum energy, with the conventions `1/0 = inf` and
//! `inf over the empty set = inf` (so the empty set has capacity zero).
//!
//! Discrete measures stand in for continuous ones: an atom with weight `w`
//! and cell width `h` is read as uniform mass `w` on a cube of side `h`, so
//! the diagonal of the energy double sum contributes `w^2` times the
//! within-cell self-energy, estimated once by seeded Monte Carlo
//! ([`cell_self_energy`]) and scaled analytically in `h` when the kernel
//! power permits.
//!
//! [`capacity_estimate`] minimizes the quadratic energy form over the weight
//! simplex with Frank–Wolfe: the linear step puts mass on the atom with the
//! smallest potential, the open-loop schedule `2/(iter + 2)` runs until the
//! relative energy change drops below tolerance or the iteration budget is
//! exhausted, and an optional pairwise polish phase with exact line search
//! pushes the duality gap further down. Potentials are maintained
//! incrementally, so one iteration costs `O(atoms)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::{dist2_sq, Scalar};
use crate::rng::RngStream;

/// Seed of the within-cell self-energy estimator.
const SELF_ENERGY_SEED: u64 = 0x5e1f_e6e5;

/// Pairs drawn by the within-cell Monte Carlo.
const SELF_ENERGY_PAIRS: usize = 10_000;

#[derive(Debug, Error)]
pub enum CapacityError {
    #[error("weights must sum to 1 within 1e-12 (got {0})")]
    WeightSum(f64),
    #[error("weights must be nonnegative (index {0})")]
    NegativeWeight(usize),
    #[error("atoms and weights differ in length: {atoms} vs {weights}")]
    LengthMismatch { atoms: usize, weights: usize },
    #[error("atoms {0} and {1} coincide")]
    DuplicateAtoms(usize, usize),
    #[error("atoms have mixed dimensions")]
    MixedDims,
    #[error("cell width must be positive")]
    BadCellWidth,
    #[error("regime requires multiplicity k >= 2 and positive dimensions")]
    BadRegime,
}

/// Order of the Bessel–Riesz kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelOrder<T> {
    pub beta: T,
}

impl<T: Scalar> KernelOrder<T> {
    pub fn new(beta: T) -> Self {
        Self { beta }
    }
}

/// Kernel value at displacement `x`; infinity is a representable outcome.
pub fn riesz_kernel<T: Scalar>(order: KernelOrder<T>, x: &[T]) -> T {
    kernel_from_sq_dist(order, dist2_sq(x, &vec![T::zero(); x.len()]))
}

/// Kernel value from a squared distance; the hot path used by energies.
#[inline]
pub fn kernel_from_sq_dist<T: Scalar>(order: KernelOrder<T>, r_sq: T) -> T {
    let beta = order.beta;
    if beta < T::zero() {
        return T::one();
    }
    if r_sq == T::zero() {
        return T::infinity();
    }
    if beta == T::zero() {
        let r = r_sq.sqrt();
        return T::one().max(-r.ln());
    }
    let one = T::one();
    let two = T::cast(2.0);
    if beta == one {
        one / r_sq.sqrt()
    } else if beta == two {
        one / r_sq
    } else if beta == T::cast(3.0) {
        one / (r_sq * r_sq.sqrt())
    } else if beta == T::cast(4.0) {
        one / (r_sq * r_sq)
    } else {
        r_sq.powf(-beta / two)
    }
}

/// Within-cell self-energy `E[kappa(X - Y)]` for `X, Y` uniform in a cube of
/// side `h` in dimension `dim`, by seeded Monte Carlo over
/// [`SELF_ENERGY_PAIRS`] pairs. For `beta > 0` the unit-cell estimate is
/// computed once per `(beta, dim)` stream and scaled by `h^-beta`, so a
/// resolution ladder sees a consistent constant.
pub fn cell_self_energy<T: Scalar>(order: KernelOrder<T>, dim: usize, h: T) -> T {
    let beta = order.beta;
    if beta < T::zero() {
        return T::one();
    }
    if beta > T::zero() {
        let unit = mc_cell_energy(order, dim, T::one());
        return h.powf(-beta) * unit;
    }
    mc_cell_energy(order, dim, h)
}

fn mc_cell_energy<T: Scalar>(order: KernelOrder<T>, dim: usize, h: T) -> T {
    let mut rng = RngStream::substream(SELF_ENERGY_SEED, dim as u64);
    let mut acc = T::zero();
    let mut x = vec![T::zero(); dim];
    let mut y = vec![T::zero(); dim];
    for _ in 0..SELF_ENERGY_PAIRS {
        for v in x.iter_mut() {
            *v = h * T::unit_uniform(&mut rng);
        }
        for v in y.iter_mut() {
            *v = h * T::unit_uniform(&mut rng);
        }
        acc += kernel_from_sq_dist(order, dist2_sq(&x, &y));
    }
    acc / T::cast(SELF_ENERGY_PAIRS as f64)
}

/// Unweighted point cloud with a cell width: the support measures optimize
/// over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportCloud<T> {
    pub points: Vec<Vec<T>>,
    #[serde(rename = "h")]
    pub cell_width: T,
}

impl<T: Scalar> SupportCloud<T> {
    pub fn new(points: Vec<Vec<T>>, cell_width: T) -> Result<Self, CapacityError> {
        if !(cell_width > T::zero()) {
            return Err(CapacityError::BadCellWidth);
        }
        if let Some(first) = points.first() {
            if points.iter().any(|p| p.len() != first.len()) {
                return Err(CapacityError::MixedDims);
            }
        }
        Ok(Self { points, cell_width })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.first().map(|p| p.len()).unwrap_or(0)
    }

    /// Cell centers of the unit cube `[0,1]^dim` cut into `cells` per axis.
    pub fn unit_cube(dim: usize, cells_per_axis: usize) -> Self {
        let h = T::one() / T::cast(cells_per_axis as f64);
        let half = T::cast(0.5);
        let total = cells_per_axis.pow(dim as u32);
        let mut points = Vec::with_capacity(total);
        let mut idx = vec![0usize; dim];
        for _ in 0..total {
            points.push(
                idx.iter()
                    .map(|&i| (T::cast(i as f64) + half) * h)
                    .collect(),
            );
            for a in (0..dim).rev() {
                idx[a] += 1;
                if idx[a] == cells_per_axis {
                    idx[a] = 0;
                } else {
                    break;
                }
            }
        }
        Self {
            points,
            cell_width: h,
        }
    }

    /// Cell centers within Euclidean distance `radius` of `center`, on a
    /// grid of spacing `h` aligned to the bounding cube.
    pub fn ball(center: &[T], radius: T, h: T) -> Self {
        let dim = center.len();
        let cells = (T::cast(2.0) * radius / h)
            .ceil()
            .to_f64_lossy() as usize;
        let half = T::cast(0.5);
        let mut points = Vec::new();
        let mut idx = vec![0usize; dim];
        let total = cells.pow(dim as u32);
        for _ in 0..total {
            let p: Vec<T> = idx
                .iter()
                .enumerate()
                .map(|(a, &i)| center[a] - radius + (T::cast(i as f64) + half) * h)
                .collect();
            if dist2_sq(&p, center) <= radius * radius {
                points.push(p);
            }
            for a in (0..dim).rev() {
                idx[a] += 1;
                if idx[a] == cells {
                    idx[a] = 0;
                } else {
                    break;
                }
            }
        }
        Self {
            points,
            cell_width: h,
        }
    }

    /// Keeps every `stride`-th point (nested sub-cloud helper for
    /// monotonicity experiments).
    pub fn thin(&self, stride: usize) -> Self {
        Self {
            points: self
                .points
                .iter()
                .step_by(stride.max(1))
                .cloned()
                .collect(),
            cell_width: self.cell_width,
        }
    }
}

/// Weighted point cloud standing in for a probability measure; atoms carry
/// uniform mass on cells of width `h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure<T> {
    atoms: Vec<Vec<T>>,
    weights: Vec<T>,
    #[serde(rename = "h")]
    cell_width: T,
}

impl<T: Scalar> DiscreteMeasure<T> {
    pub fn new(
        atoms: Vec<Vec<T>>,
        weights: Vec<T>,
        cell_width: T,
    ) -> Result<Self, CapacityError> {
        if atoms.len() != weights.len() {
            return Err(CapacityError::LengthMismatch {
                atoms: atoms.len(),
                weights: weights.len(),
            });
        }
        if !(cell_width > T::zero()) {
            return Err(CapacityError::BadCellWidth);
        }
        if let Some(first) = atoms.first() {
            if atoms.iter().any(|p| p.len() != first.len()) {
                return Err(CapacityError::MixedDims);
            }
        }
        for (i, &w) in weights.iter().enumerate() {
            if !(w >= T::zero()) {
                return Err(CapacityError::NegativeWeight(i));
            }
        }
        let sum: T = weights.iter().copied().sum();
        if (sum - T::one()).abs() > T::cast(1e-12) {
            return Err(CapacityError::WeightSum(sum.to_f64_lossy()));
        }
        // Bit-pattern keys detect duplicate atoms in O(n).
        let mut seen = std::collections::HashMap::new();
        for (i, atom) in atoms.iter().enumerate() {
            let key: Vec<u64> = atom.iter().map(|v| v.to_f64_lossy().to_bits()).collect();
            if let Some(&j) = seen.get(&key) {
                return Err(CapacityError::DuplicateAtoms(j, i));
            }
            seen.insert(key, i);
        }
        Ok(Self {
            atoms,
            weights,
            cell_width,
        })
    }

    pub fn uniform(cloud: &SupportCloud<T>) -> Result<Self, CapacityError> {
        let n = cloud.len();
        if n == 0 {
            return Err(CapacityError::LengthMismatch {
                atoms: 0,
                weights: 0,
            });
        }
        let w = T::one() / T::cast(n as f64);
        Self::new(cloud.points.clone(), vec![w; n], cloud.cell_width)
    }

    pub fn atoms(&self) -> &[Vec<T>] {
        &self.atoms
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn cell_width(&self) -> T {
        self.cell_width
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string(self)
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }
}

/// Energy `I_beta(mu)`: off-diagonal double sum plus the within-cell
/// diagonal. May be infinite.
pub fn energy<T: Scalar>(order: KernelOrder<T>, mu: &DiscreteMeasure<T>) -> T {
    let n = mu.atoms.len();
    let diag = cell_self_energy(order, mu.atoms.first().map(|a| a.len()).unwrap_or(0), mu.cell_width);
    let diag_term: T = mu.weights.iter().map(|&w| w * w * diag).sum();
    // Row partials in parallel, summed in index order for determinism.
    let rows: Vec<T> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut acc = T::zero();
            for j in (i + 1)..n {
                acc += mu.weights[i]
                        * mu.weights[j]
                        * kernel_from_sq_dist(order, dist2_sq(&mu.atoms[i], &mu.atoms[j]));
            }
            acc
        })
        .collect();
    let off: T = rows.into_iter().sum();
    diag_term + off + off
}

/// Options of the Frank–Wolfe capacity estimator.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FrankWolfeOpts<T> {
    /// Budget of open-loop iterations (step `2/(iter + 2)`).
    pub max_iters: usize,
    /// Stop when the relative energy change drops below this.
    pub rel_tol: T,
    /// Target relative duality gap.
    pub gap_tol: T,
    /// Budget of pairwise polish iterations after the open-loop phase; zero
    /// disables polishing.
    pub polish_iters: usize,
    /// Recompute the potential exactly at termination (`O(n^2)`).
    pub exact_final: bool,
}

impl<T: Scalar> Default for FrankWolfeOpts<T> {
    fn default() -> Self {
        Self {
            max_iters: 10_000,
            rel_tol: T::cast(1e-8),
            gap_tol: T::cast(1e-6),
            polish_iters: 50_000,
            exact_final: true,
        }
    }
}

/// Result of the simplex energy minimization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CapacityEstimate<T> {
    /// `1 / min energy` (zero for an empty support).
    pub capacity: T,
    pub energy: T,
    pub weights: Vec<T>,
    pub iterations: usize,
    /// Frank–Wolfe duality gap at termination, relative to the energy.
    pub relative_gap: T,
}

struct KernelTable<'a, T> {
    points: &'a [Vec<T>],
    order: KernelOrder<T>,
    diag: T,
}

impl<T: Scalar> KernelTable<'_, T> {
    #[inline]
    fn entry(&self, i: usize, j: usize) -> T {
        if i == j {
            self.diag
        } else {
            kernel_from_sq_dist(self.order, dist2_sq(&self.points[i], &self.points[j]))
        }
    }

    fn column_into(&self, s: usize, out: &mut [T]) {
        out.par_iter_mut().enumerate().for_each(|(i, v)| {
            *v = self.entry(i, s);
        });
    }

    /// Potential `(Q w)_i` for every `i`, in parallel.
    fn potential(&self, w: &[T]) -> Vec<T> {
        (0..self.points.len())
            .into_par_iter()
            .map(|i| {
                let mut acc = T::zero();
                for (j, &wj) in w.iter().enumerate() {
                    if wj != T::zero() {
                        acc += wj * self.entry(i, j);
                    }
                }
                acc
            })
            .collect()
    }
}

fn argmin<T: Scalar>(xs: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate().skip(1) {
        if v < xs[best] {
            best = i;
        }
    }
    best
}

/// Minimizes the energy quadratic form over the probability simplex and
/// returns the reciprocal as the capacity estimate. An empty support has
/// capacity zero.
pub fn capacity_estimate<T: Scalar>(
    order: KernelOrder<T>,
    support: &SupportCloud<T>,
    opts: &FrankWolfeOpts<T>,
) -> CapacityEstimate<T> {
    let n = support.len();
    if n == 0 {
        return CapacityEstimate {
            capacity: T::zero(),
            energy: T::infinity(),
            weights: Vec::new(),
            iterations: 0,
            relative_gap: T::zero(),
        };
    }
    let table = KernelTable {
        points: &support.points,
        order,
        diag: cell_self_energy(order, support.dim(), support.cell_width),
    };

    let uniform = T::one() / T::cast(n as f64);
    let mut w = vec![uniform; n];
    let mut phi = table.potential(&w);
    let mut e: T = phi.iter().map(|&p| p * uniform).sum();
    let mut iterations = 0usize;
    let mut col = vec![T::zero(); n];

    // Open-loop phase: LMO plus step 2/(iter + 2).
    for iter in 0..opts.max_iters {
        iterations = iter + 1;
        let s = argmin(&phi);
        let gap = T::cast(2.0) * (e - phi[s]);
        if gap <= opts.gap_tol * e {
            break;
        }
        let gamma = T::cast(2.0) / T::cast((iter + 2) as f64);
        let keep = T::one() - gamma;
        let e_new = keep * keep * e
            + T::cast(2.0) * gamma * keep * phi[s]
            + gamma * gamma * table.diag;
        table.column_into(s, &mut col);
        for (p, &c) in phi.iter_mut().zip(col.iter()) {
            *p = keep * *p + gamma * c;
        }
        for v in w.iter_mut() {
            *v = keep * *v;
        }
        w[s] += gamma;
        let change = (e_new - e).abs();
        e = e_new;
        if change <= opts.rel_tol * e.abs().max(T::cast(1e-300)) {
            break;
        }
    }

    // Pairwise polish: move mass from the worst supported atom to the best
    // one with an exact line-search step.
    let mut col_away = vec![T::zero(); n];
    for _ in 0..opts.polish_iters {
        let s = argmin(&phi);
        let gap = T::cast(2.0) * (e - phi[s]);
        if gap <= opts.gap_tol * e {
            break;
        }
        let mut away = usize::MAX;
        for (i, &wi) in w.iter().enumerate() {
            if wi > T::zero() && (away == usize::MAX || phi[i] > phi[away]) {
                away = i;
            }
        }
        if away == usize::MAX || away == s {
            break;
        }
        let q_sa = table.entry(s, away);
        let curvature = T::cast(2.0) * table.diag - T::cast(2.0) * q_sa;
        let slope = phi[away] - phi[s];
        if slope <= T::zero() {
            break;
        }
        let step_max = w[away];
        let gamma = if curvature > T::zero() {
            (slope / curvature).min(step_max)
        } else {
            step_max
        };
        if gamma <= T::zero() {
            break;
        }
        iterations += 1;
        e = e - T::cast(2.0) * gamma * slope + gamma * gamma * curvature;
        w[s] += gamma;
        w[away] = (w[away] - gamma).max(T::zero());
        table.column_into(s, &mut col);
        table.column_into(away, &mut col_away);
        for i in 0..n {
            phi[i] += gamma * (col[i] - col_away[i]);
        }
    }

    if opts.exact_final {
        phi = table.potential(&w);
        e = phi.iter().zip(&w).map(|(&p, &wi)| p * wi).sum();
    }
    let s = argmin(&phi);
    let gap = T::cast(2.0) * (e - phi[s]);
    let relative_gap = if e > T::zero() { gap / e } else { T::zero() };

    // Tidy the simplex point: clip roundoff and renormalize.
    let total: T = w.iter().copied().sum();
    for v in w.iter_mut() {
        *v = (*v / total).max(T::zero());
    }

    CapacityEstimate {
        capacity: if e == T::zero() {
            T::infinity()
        } else {
            T::one() / e
        },
        energy: e,
        weights: w,
        iterations,
        relative_gap,
    }
}

/// The `(N, d, k)` triple of a multiple-point experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegimeConfig {
    #[serde(rename = "N")]
    pub param_dim: usize,
    #[serde(rename = "d")]
    pub value_dim: usize,
    #[serde(rename = "k")]
    pub multiplicity: usize,
}

impl RegimeConfig {
    pub fn new(
        param_dim: usize,
        value_dim: usize,
        multiplicity: usize,
    ) -> Result<Self, CapacityError> {
        if param_dim == 0 || value_dim == 0 || multiplicity < 2 {
            return Err(CapacityError::BadRegime);
        }
        Ok(Self {
            param_dim,
            value_dim,
            multiplicity,
        })
    }

    /// `(k - 1) d - 2 k N`: negative in the existence regime, zero at
    /// criticality, positive beyond.
    pub fn gap(&self) -> i64 {
        let (n, d, k) = (
            self.param_dim as i64,
            self.value_dim as i64,
            self.multiplicity as i64,
        );
        (k - 1) * d - 2 * k * n
    }

    /// Capacity exponent `k (d - 2N)`.
    pub fn capacity_exponent(&self) -> i64 {
        let (n, d, k) = (
            self.param_dim as i64,
            self.value_dim as i64,
            self.multiplicity as i64,
        );
        k * (d - 2 * n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Subcritical,
    Critical,
    Supercritical,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Regime::Subcritical => "subcritical",
            Regime::Critical => "critical",
            Regime::Supercritical => "supercritical",
        };
        f.write_str(s)
    }
}

/// Classification of a regime triple plus the capacity-side verdict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    pub config: RegimeConfig,
    pub regime: Regime,
    pub gap: i64,
    /// `k (d - 2N)`; equal to `d` exactly in the critical case.
    pub capacity_exponent: i64,
    /// Multiple points exist only strictly below criticality.
    pub multiple_points_exist: bool,
}

pub fn classify_regime(cfg: &RegimeConfig) -> RegimeReport {
    let gap = cfg.gap();
    let regime = match gap.cmp(&0) {
        std::cmp::Ordering::Less => Regime::Subcritical,
        std::cmp::Ordering::Equal => Regime::Critical,
        std::cmp::Ordering::Greater => Regime::Supercritical,
    };
    RegimeReport {
        config: *cfg,
        regime,
        gap,
        capacity_exponent: cfg.capacity_exponent(),
        multiple_points_exist: gap < 0,
    }
}

/// Every critical `(N, d, k)` with `N <= max_axes` and `k <= max_mult`.
pub fn critical_triples(max_axes: usize, max_mult: usize) -> Vec<RegimeConfig> {
    let mut out = Vec::new();
    for n in 1..=max_axes {
        for k in 2..=max_mult {
            let num = 2 * k * n;
            let den = k - 1;
            if num % den == 0 {
                let d = num / den;
                out.push(RegimeConfig {
                    param_dim: n,
                    value_dim: d,
                    multiplicity: k,
                });
            }
        }
    }
    out
}
