//! Simulation of the `N`-parameter, `d`-dimensional Brownian sheet.
//!
//! The sheet is the centered Gaussian field on the nonnegative orthant with
//! `Cov(B^i(s), B^j(t)) = delta_ij * prod_l min(s_l, t_l)` and independent
//! state coordinates. Two samplers are provided:
//!
//! - [`exact_sample`] draws the field at an arbitrary finite parameter set by
//!   factoring the covariance matrix (cost `O(n^3)`, capped at
//!   [`crate::gaussian::MAX_DIM`] points).
//! - [`grid_sample`] realizes the field on a regular grid anchored at the
//!   origin by assigning each cell an independent centered Gaussian with
//!   variance equal to the cell volume and accumulating rectangle partial
//!   sums with one prefix sweep per axis. Node values on the coordinate
//!   hyperplanes are exactly zero, and the law at any node set coincides with
//!   the exact sampler's.
//!
//! [`increment_variance`] and [`scaling_discrepancy`] expose the structural
//! identities of the covariance (subset decomposition of box increments and
//! multiplicative scaling) as numerically checkable quantities.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gaussian::{CovMatrix, GaussianError, GaussianVector, MvnSampler};
use crate::num::Scalar;
use crate::rng::{RngStream, SeedRecord};

/// Cap on the total node count of a [`GridSpec`].
pub const MAX_GRID_NODES: usize = 1 << 24;

/// Axes with more cells than this use compensated (Kahan) prefix sums.
const KAHAN_THRESHOLD: usize = 1 << 12;

/// Subset-decomposition helpers enumerate `2^N` terms; beyond this the
/// enumeration is refused.
const MAX_SUBSET_AXES: usize = 24;

#[derive(Debug, Error)]
pub enum SheetError {
    #[error("parameter dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("parameter coordinates must be nonnegative (axis {axis}: {value})")]
    NegativeCoordinate { axis: usize, value: f64 },
    #[error("parameter points need at least one axis")]
    EmptyPoint,
    #[error("grid axis {axis} has empty range [{lower}, {upper}]")]
    BadAxisRange { axis: usize, lower: f64, upper: f64 },
    #[error("grid axis {0} needs at least one cell")]
    NoCells(usize),
    #[error("grid has {nodes} nodes, exceeding the cap {MAX_GRID_NODES}")]
    GridTooLarge { nodes: usize },
    #[error("grid sampler requires axis lower bounds at 0 (axis {axis} starts at {lower})")]
    NotAnchored { axis: usize, lower: f64 },
    #[error("domain error: {0}")]
    Domain(String),
    #[error(transparent)]
    Gaussian(#[from] GaussianError),
}

/// A point of the parameter orthant.
#[derive(Debug, Clone, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamPoint<T>(Vec<T>);

impl<T: Scalar> ParamPoint<T> {
    pub fn new(coords: Vec<T>) -> Result<Self, SheetError> {
        if coords.is_empty() {
            return Err(SheetError::EmptyPoint);
        }
        for (axis, &c) in coords.iter().enumerate() {
            if !(c >= T::zero()) {
                return Err(SheetError::NegativeCoordinate {
                    axis,
                    value: c.to_f64_lossy(),
                });
            }
        }
        Ok(Self(coords))
    }

    pub fn origin(dim: usize) -> Self {
        Self(vec![T::zero(); dim])
    }

    pub(crate) fn from_unchecked(coords: Vec<T>) -> Self {
        Self(coords)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    #[inline]
    pub fn coords(&self) -> &[T] {
        &self.0
    }

    #[inline]
    pub fn coord(&self, axis: usize) -> T {
        self.0[axis]
    }

    pub fn into_coords(self) -> Vec<T> {
        self.0
    }
}

/// Shape of the field: number of parameter axes `N` and state dimension `d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SheetSpec {
    #[serde(rename = "N")]
    pub param_dim: usize,
    #[serde(rename = "d")]
    pub value_dim: usize,
}

impl SheetSpec {
    pub fn new(param_dim: usize, value_dim: usize) -> Result<Self, SheetError> {
        if param_dim == 0 {
            return Err(SheetError::EmptyPoint);
        }
        if value_dim == 0 {
            return Err(SheetError::Domain("state dimension must be >= 1".into()));
        }
        Ok(Self {
            param_dim,
            value_dim,
        })
    }
}

/// Regular rectangular grid: per-axis bounds and cell counts. Node `i` on an
/// axis sits at `lower + i * (upper - lower) / cells`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec<T> {
    lower: Vec<T>,
    upper: Vec<T>,
    cells: Vec<usize>,
}

impl<T: Scalar> GridSpec<T> {
    pub fn new(lower: Vec<T>, upper: Vec<T>, cells: Vec<usize>) -> Result<Self, SheetError> {
        if lower.is_empty() {
            return Err(SheetError::EmptyPoint);
        }
        if lower.len() != upper.len() || lower.len() != cells.len() {
            return Err(SheetError::DimMismatch(lower.len(), upper.len()));
        }
        let mut nodes = 1usize;
        for axis in 0..lower.len() {
            if !(lower[axis] >= T::zero()) {
                return Err(SheetError::NegativeCoordinate {
                    axis,
                    value: lower[axis].to_f64_lossy(),
                });
            }
            if !(lower[axis] < upper[axis]) {
                return Err(SheetError::BadAxisRange {
                    axis,
                    lower: lower[axis].to_f64_lossy(),
                    upper: upper[axis].to_f64_lossy(),
                });
            }
            if cells[axis] == 0 {
                return Err(SheetError::NoCells(axis));
            }
            nodes = nodes
                .checked_mul(cells[axis] + 1)
                .filter(|&n| n <= MAX_GRID_NODES)
                .ok_or(SheetError::GridTooLarge { nodes: usize::MAX })?;
        }
        Ok(Self {
            lower,
            upper,
            cells,
        })
    }

    /// Grid anchored at the origin, as required by the white-noise sampler.
    pub fn anchored(upper: Vec<T>, cells: Vec<usize>) -> Result<Self, SheetError> {
        let lower = vec![T::zero(); upper.len()];
        Self::new(lower, upper, cells)
    }

    #[inline]
    pub fn axes(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[T] {
        &self.lower
    }

    pub fn upper(&self) -> &[T] {
        &self.upper
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    #[inline]
    pub fn step(&self, axis: usize) -> T {
        (self.upper[axis] - self.lower[axis]) / T::cast(self.cells[axis] as f64)
    }

    /// Largest per-axis step; the search modules treat this as the grid
    /// resolution.
    pub fn max_step(&self) -> T {
        (0..self.axes())
            .map(|a| self.step(a))
            .fold(T::zero(), T::max)
    }

    /// Nodes per axis (`cells + 1`).
    pub fn nodes_per_axis(&self) -> Vec<usize> {
        self.cells.iter().map(|&c| c + 1).collect()
    }

    pub fn node_total(&self) -> usize {
        self.cells.iter().map(|&c| c + 1).product()
    }

    /// Row-major strides, last axis fastest.
    pub fn strides(&self) -> Vec<usize> {
        let nodes = self.nodes_per_axis();
        let mut strides = vec![1usize; nodes.len()];
        for axis in (0..nodes.len().saturating_sub(1)).rev() {
            strides[axis] = strides[axis + 1] * nodes[axis + 1];
        }
        strides
    }

    /// Coordinate of node `idx` (computed as `lower + i * step`, not by
    /// accumulation, so equal indices give bit-equal coordinates).
    pub fn node_coord(&self, idx: &[usize]) -> ParamPoint<T> {
        let coords = idx
            .iter()
            .enumerate()
            .map(|(axis, &i)| self.lower[axis] + T::cast(i as f64) * self.step(axis))
            .collect();
        ParamPoint(coords)
    }

    pub fn linear_index(&self, idx: &[usize]) -> usize {
        self.strides().iter().zip(idx).map(|(&s, &i)| s * i).sum()
    }

    /// Multi-index of a linear node index.
    pub fn multi_index(&self, mut linear: usize) -> Vec<usize> {
        let strides = self.strides();
        let mut idx = Vec::with_capacity(self.axes());
        for &s in &strides {
            idx.push(linear / s);
            linear %= s;
        }
        idx
    }

    /// Finds the node whose coordinates match `point` within one part in
    /// `1e9` of the step, per axis.
    pub fn locate_node(&self, point: &ParamPoint<T>) -> Option<Vec<usize>> {
        if point.dim() != self.axes() {
            return None;
        }
        let mut idx = Vec::with_capacity(self.axes());
        for axis in 0..self.axes() {
            let step = self.step(axis);
            let rel = (point.coord(axis) - self.lower[axis]) / step;
            let rounded = rel.round();
            if (rel - rounded).abs() > T::cast(1e-9) {
                return None;
            }
            let i = rounded.to_f64_lossy() as isize;
            if i < 0 || i as usize > self.cells[axis] {
                return None;
            }
            idx.push(i as usize);
        }
        Some(idx)
    }

    fn cell_volume(&self) -> T {
        (0..self.axes())
            .map(|a| self.step(a))
            .fold(T::one(), |acc, s| acc * s)
    }
}

/// Where the values of a [`FieldSample`] live.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleDomain<T> {
    Points(Vec<ParamPoint<T>>),
    Grid(GridSpec<T>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Exact,
    Grid,
}

/// Realized values of one sheet at a finite parameter set or grid.
///
/// `values` is row-major: the `d` state coordinates of point `p` occupy
/// `values[p * d .. (p + 1) * d]`. For grids, points are ordered by the
/// row-major node index (last axis fastest). This layout, together with the
/// JSON field names, is the stable export format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSample<T> {
    pub spec: SheetSpec,
    pub domain: SampleDomain<T>,
    pub values: Vec<T>,
    pub provenance: Provenance,
    pub seed: SeedRecord,
}

impl<T: Scalar> FieldSample<T> {
    pub fn point_count(&self) -> usize {
        match &self.domain {
            SampleDomain::Points(p) => p.len(),
            SampleDomain::Grid(g) => g.node_total(),
        }
    }

    /// State vector of point `index`.
    #[inline]
    pub fn value(&self, index: usize) -> &[T] {
        let d = self.spec.value_dim;
        &self.values[index * d..(index + 1) * d]
    }

    /// Grid accessor: state vector at a multi-index.
    pub fn node_value(&self, idx: &[usize]) -> Option<&[T]> {
        match &self.domain {
            SampleDomain::Grid(g) => Some(self.value(g.linear_index(idx))),
            SampleDomain::Points(_) => None,
        }
    }

    pub fn grid(&self) -> Option<&GridSpec<T>> {
        match &self.domain {
            SampleDomain::Grid(g) => Some(g),
            SampleDomain::Points(_) => None,
        }
    }

    /// Parameter point of entry `index`.
    pub fn point(&self, index: usize) -> ParamPoint<T> {
        match &self.domain {
            SampleDomain::Points(p) => p[index].clone(),
            SampleDomain::Grid(g) => g.node_coord(&g.multi_index(index)),
        }
    }

    /// JSON export of the stable record layout.
    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string(self)
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }
}

/// `Cov(B(s), B(t)) = prod_l min(s_l, t_l)` for a single state coordinate.
pub fn sheet_covariance<T: Scalar>(s: &ParamPoint<T>, t: &ParamPoint<T>) -> Result<T, SheetError> {
    if s.dim() != t.dim() {
        return Err(SheetError::DimMismatch(s.dim(), t.dim()));
    }
    Ok(covariance_unchecked(s.coords(), t.coords()))
}

#[inline]
pub(crate) fn covariance_unchecked<T: Scalar>(s: &[T], t: &[T]) -> T {
    s.iter()
        .zip(t)
        .map(|(&a, &b)| a.min(b))
        .fold(T::one(), |acc, m| acc * m)
}

/// Draws the field at an arbitrary parameter set by factoring the covariance
/// matrix once and sampling the `d` independent state coordinates.
pub fn exact_sample<T: Scalar>(
    spec: SheetSpec,
    points: &[ParamPoint<T>],
    rng: &mut RngStream,
) -> Result<FieldSample<T>, SheetError> {
    Ok(ExactSampler::new(spec, points.to_vec())?.draw(rng))
}

/// Reusable exact sampler: covariance factored once, drawn many times.
pub struct ExactSampler<T> {
    spec: SheetSpec,
    points: Vec<ParamPoint<T>>,
    sampler: MvnSampler<T>,
}

impl<T: Scalar> ExactSampler<T> {
    pub fn new(spec: SheetSpec, points: Vec<ParamPoint<T>>) -> Result<Self, SheetError> {
        for p in &points {
            if p.dim() != spec.param_dim {
                return Err(SheetError::DimMismatch(p.dim(), spec.param_dim));
            }
        }
        let n = points.len();
        let cov = CovMatrix::from_fn(n, |i, j| {
            covariance_unchecked(points[i].coords(), points[j].coords())
        })?;
        let sampler = MvnSampler::new(&GaussianVector::centered(cov))?;
        Ok(Self {
            spec,
            points,
            sampler,
        })
    }

    /// Jitter applied by the factorization (nonzero flags a degenerate set).
    pub fn jitter(&self) -> T {
        self.sampler.jitter()
    }

    pub fn points(&self) -> &[ParamPoint<T>] {
        &self.points
    }

    pub fn draw(&self, rng: &mut RngStream) -> FieldSample<T> {
        let n = self.points.len();
        let d = self.spec.value_dim;
        let seed = rng.record();
        let mut values = vec![T::zero(); n * d];
        for comp in 0..d {
            let x = self.sampler.draw(rng);
            for (p, &v) in x.iter().enumerate() {
                values[p * d + comp] = v;
            }
        }
        FieldSample {
            spec: self.spec,
            domain: SampleDomain::Points(self.points.clone()),
            values,
            provenance: Provenance::Exact,
            seed,
        }
    }
}

/// In-place prefix sums along one axis of a row-major array.
fn prefix_sum_axis<T: Scalar>(data: &mut [T], nodes: &[usize], strides: &[usize], axis: usize) {
    let len = nodes[axis];
    let stride = strides[axis];
    let kahan = len > KAHAN_THRESHOLD;
    let total: usize = nodes.iter().product();
    let mut start = 0usize;
    let mut counters = vec![0usize; nodes.len()];
    for _ in 0..total / len {
        if kahan {
            let mut acc = T::zero();
            let mut comp = T::zero();
            for i in 0..len {
                let pos = start + i * stride;
                let y = data[pos] - comp;
                let t = acc + y;
                comp = (t - acc) - y;
                acc = t;
                data[pos] = acc;
            }
        } else {
            let mut acc = T::zero();
            for i in 0..len {
                let pos = start + i * stride;
                acc += data[pos];
                data[pos] = acc;
            }
        }
        // Odometer over the other axes to find the next line start.
        for a in (0..nodes.len()).rev() {
            if a == axis {
                continue;
            }
            counters[a] += 1;
            start += strides[a];
            if counters[a] == nodes[a] {
                counters[a] = 0;
                start -= strides[a] * nodes[a];
            } else {
                break;
            }
        }
    }
}

/// White-noise grid sampler. The grid must be anchored at the origin: each
/// cell receives an i.i.d. centered Gaussian with variance equal to its
/// volume, and the node value is the partial sum over the rectangle from the
/// origin, computed with one prefix sweep per axis.
pub fn grid_sample<T: Scalar>(
    spec: SheetSpec,
    grid: &GridSpec<T>,
    rng: &mut RngStream,
) -> Result<FieldSample<T>, SheetError> {
    if grid.axes() != spec.param_dim {
        return Err(SheetError::DimMismatch(grid.axes(), spec.param_dim));
    }
    for axis in 0..grid.axes() {
        if grid.lower()[axis] != T::zero() {
            return Err(SheetError::NotAnchored {
                axis,
                lower: grid.lower()[axis].to_f64_lossy(),
            });
        }
    }
    let nodes = grid.nodes_per_axis();
    let strides = grid.strides();
    let total = grid.node_total();
    let d = spec.value_dim;
    let sd = grid.cell_volume().sqrt();
    let seed = rng.record();

    let mut values = vec![T::zero(); total * d];
    let mut scratch = vec![T::zero(); total];
    for comp in 0..d {
        // The increment of the cell closed by a node with all indices >= 1 is
        // stored at that node; hyperplane nodes stay zero.
        for v in scratch.iter_mut() {
            *v = T::zero();
        }
        let mut counters = vec![0usize; nodes.len()];
        for item in scratch.iter_mut() {
            if counters.iter().all(|&c| c >= 1) {
                *item = sd * T::std_normal(rng);
            }
            for a in (0..nodes.len()).rev() {
                counters[a] += 1;
                if counters[a] == nodes[a] {
                    counters[a] = 0;
                } else {
                    break;
                }
            }
        }
        for axis in 0..nodes.len() {
            prefix_sum_axis(&mut scratch, &nodes, &strides, axis);
        }
        for (p, &v) in scratch.iter().enumerate() {
            values[p * d + comp] = v;
        }
    }
    Ok(FieldSample {
        spec,
        domain: SampleDomain::Grid(grid.clone()),
        values,
        provenance: Provenance::Grid,
        seed,
    })
}

/// Variance of the box increment `B(t) - B(base)` for `base <= t`, computed
/// by two independent routes: directly as `prod t_l - prod base_l`, and as
/// the sum over nonempty axis subsets `E` of
/// `prod_{l not in E} base_l * prod_{l in E} (t_l - base_l)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualVariance<T> {
    pub direct: T,
    pub by_subsets: T,
}

impl<T: Scalar> DualVariance<T> {
    pub fn value(&self) -> T {
        self.direct
    }

    pub fn residual(&self) -> T {
        (self.direct - self.by_subsets).abs()
    }
}

/// Computes [`DualVariance`] for the increment from `base` to `t`.
pub fn increment_variance<T: Scalar>(
    base: &ParamPoint<T>,
    t: &ParamPoint<T>,
) -> Result<DualVariance<T>, SheetError> {
    let n = base.dim();
    if t.dim() != n {
        return Err(SheetError::DimMismatch(t.dim(), n));
    }
    if n > MAX_SUBSET_AXES {
        return Err(SheetError::Domain(format!(
            "subset decomposition limited to {MAX_SUBSET_AXES} axes, got {n}"
        )));
    }
    for axis in 0..n {
        if t.coord(axis) < base.coord(axis) {
            return Err(SheetError::Domain(format!(
                "increment needs t >= base componentwise (axis {axis})"
            )));
        }
    }
    let prod_t: T = t.coords().iter().fold(T::one(), |a, &v| a * v);
    let prod_base: T = base.coords().iter().fold(T::one(), |a, &v| a * v);
    let direct = prod_t - prod_base;

    let mut by_subsets = T::zero();
    for mask in 1u32..(1u32 << n) {
        let mut term = T::one();
        for axis in 0..n {
            term *= if mask & (1 << axis) != 0 {
                    t.coord(axis) - base.coord(axis)
                } else {
                    base.coord(axis)
                };
        }
        by_subsets += term;
    }
    Ok(DualVariance { direct, by_subsets })
}

/// Maximum absolute discrepancy between `Cov(B(c*p_i), B(c*p_j))` and
/// `prod(c) * Cov(B(p_i), B(p_j))` over all point pairs, evaluated
/// analytically. Zero up to roundoff for the sheet covariance.
pub fn scaling_discrepancy<T: Scalar>(
    factors: &[T],
    points: &[ParamPoint<T>],
) -> Result<T, SheetError> {
    let n = factors.len();
    if factors.iter().any(|&c| !(c > T::zero())) {
        return Err(SheetError::Domain("scaling factors must be positive".into()));
    }
    let prod_c = factors.iter().fold(T::one(), |a, &c| a * c);
    let mut worst = T::zero();
    for (i, p) in points.iter().enumerate() {
        if p.dim() != n {
            return Err(SheetError::DimMismatch(p.dim(), n));
        }
        for q in &points[i..] {
            let scaled_p: Vec<T> = p.coords().iter().zip(factors).map(|(&a, &c)| c * a).collect();
            let scaled_q: Vec<T> = q.coords().iter().zip(factors).map(|(&a, &c)| c * a).collect();
            let lhs = covariance_unchecked(&scaled_p, &scaled_q);
            let rhs = prod_c * covariance_unchecked(p.coords(), q.coords());
            worst = worst.max((lhs - rhs).abs());
        }
    }
    Ok(worst)
}
