//! Decoupling drift for families of projection-disjoint boxes.
//!
//! Given boxes `R_1, ..., R_k` inside `[1/M, M]^N` whose projections onto
//! every axis are pairwise disjoint (sorted so the last-axis projections
//! increase), the field restricted to `R_k` can be decoupled from the field
//! on the earlier boxes by subtracting a drift. With
//! `level = s1_{k-1,N}` (the top of the previous box on the last axis) the
//! drift interpolant is
//!
//! ```text
//! F(t) = (t_N - level)/(s0_{k,N} - level)
//!        * prod_{l < N} min(t_l, s0_{k,l})/s0_{k,l}
//!        * m(p(t)),          for t in U,    F = 0 elsewhere,
//! ```
//!
//! where `U = prod_{l<N} [0, s1_{k,l}] x [level, s0_{k,N}]`, the projection
//! `p` clamps the first `N - 1` coordinates up to the lower bounds of `R_k`
//! and pins the last to `level`, and `m` is the lower-face pinned mean of the
//! field values at the `2^(N-1)` face corners of `R_k` at height `level`.
//!
//! `F` vanishes on the coordinate hyperplanes and at `t_N = level`, and its
//! density `Z = d^N F` is supported in `U` and piecewise constant on the
//! boxes cut out by the `s0_{k,l}` breakpoints. The accumulated drift
//! `int_{[0,t]} Z` therefore has a closed form: the `U`-branch formula
//! evaluated at `t` clamped into the closure of `U`. In particular it
//! vanishes identically for `t_N <= level` and reproduces the lower-face
//! pinned mean exactly on `R_k`, so subtracting it leaves the field unchanged
//! below `level` and centers it on the last box ([`DriftSpec::decouple`]).

use rand::Rng;
use thiserror::Error;

use crate::num::Scalar;
use crate::pinning::{corner_weights, ParamBox, PinningError, PinningMode};
use crate::rng::RngStream;
use crate::sheet::{FieldSample, ParamPoint, SheetError};

#[derive(Debug, Error)]
pub enum GirsanovError {
    #[error("family needs at least {needed} boxes, got {got}")]
    TooFewBoxes { needed: usize, got: usize },
    #[error("box {index} is not contained in [1/M, M]^N (axis {axis})")]
    OutsideBound { index: usize, axis: usize },
    #[error("boxes {first} and {second} have overlapping projections on axis {axis}")]
    OverlappingProjections {
        first: usize,
        second: usize,
        axis: usize,
    },
    #[error("boxes have mixed dimensions: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("point lies outside the drift domain (U union R)")]
    OutsideDriftDomain,
    #[error("face values: expected {expected}, got {got}")]
    FaceValueCount { expected: usize, got: usize },
    #[error("field grid is missing face corner {index} of the last box")]
    GridMissingCorners { index: usize },
    #[error("field must be sampled on a grid")]
    NotAGrid,
    #[error(transparent)]
    Pinning(#[from] PinningError),
    #[error(transparent)]
    Sheet(#[from] SheetError),
}

/// Boxes with pairwise disjoint axis projections inside `[1/M, M]^N`,
/// ordered by their last-axis projections.
#[derive(Debug, Clone, PartialEq)]
pub struct DisjointBoxFamily<T> {
    boxes: Vec<ParamBox<T>>,
    bound: T,
}

impl<T: Scalar> DisjointBoxFamily<T> {
    pub fn new(mut boxes: Vec<ParamBox<T>>, bound: T) -> Result<Self, GirsanovError> {
        if boxes.is_empty() {
            return Err(GirsanovError::TooFewBoxes { needed: 1, got: 0 });
        }
        let n = boxes[0].dim();
        let inv = T::one() / bound;
        for (i, b) in boxes.iter().enumerate() {
            if b.dim() != n {
                return Err(GirsanovError::DimMismatch(b.dim(), n));
            }
            for axis in 0..n {
                if b.lower()[axis] < inv || b.upper()[axis] > bound {
                    return Err(GirsanovError::OutsideBound { index: i, axis });
                }
            }
        }
        boxes.sort_by(|a, b| {
            a.lower()[n - 1]
                .partial_cmp(&b.lower()[n - 1])
                .expect("finite bounds")
        });
        for i in 0..boxes.len() {
            for j in (i + 1)..boxes.len() {
                for axis in 0..n {
                    let (a, b) = (&boxes[i], &boxes[j]);
                    let disjoint =
                        a.upper()[axis] < b.lower()[axis] || b.upper()[axis] < a.lower()[axis];
                    if !disjoint {
                        return Err(GirsanovError::OverlappingProjections {
                            first: i,
                            second: j,
                            axis,
                        });
                    }
                }
            }
        }
        Ok(Self { boxes, bound })
    }

    /// Draws a random family by stratified interval placement: each axis of
    /// `[1/M, M]` is cut into `2k` slots with positive gaps, consecutive slot
    /// pairs become the per-box intervals, and every axis except the last
    /// assigns intervals to boxes through a random permutation.
    pub fn sample<R: Rng + ?Sized>(axes: usize, count: usize, bound: T, rng: &mut R) -> Self {
        assert!(axes >= 1 && count >= 1);
        let inv = T::one() / bound;
        let span = bound - inv;
        let slots = T::cast((2 * count) as f64);
        let mut intervals: Vec<Vec<(T, T)>> = Vec::with_capacity(axes);
        for _ in 0..axes {
            let per_axis: Vec<(T, T)> = (0..count)
                .map(|j| {
                    let base = T::cast((2 * j) as f64);
                    let jitter_lo = T::cast(0.1) + T::cast(0.8) * T::unit_uniform(rng);
                    let jitter_hi = T::cast(0.1) + T::cast(0.8) * T::unit_uniform(rng);
                    let lo = inv + span * (base + jitter_lo) / slots;
                    let hi = inv + span * (base + T::one() + jitter_hi) / slots;
                    (lo, hi)
                })
                .collect();
            intervals.push(per_axis);
        }
        // Random assignment of intervals to boxes on all axes but the last.
        let mut perms: Vec<Vec<usize>> = Vec::with_capacity(axes);
        for axis in 0..axes {
            let mut p: Vec<usize> = (0..count).collect();
            if axis + 1 < axes {
                for i in (1..count).rev() {
                    let j = (rng.next_u64() % (i as u64 + 1)) as usize;
                    p.swap(i, j);
                }
            }
            perms.push(p);
        }
        let boxes: Vec<ParamBox<T>> = (0..count)
            .map(|b| {
                let lower: Vec<T> = (0..axes).map(|a| intervals[a][perms[a][b]].0).collect();
                let upper: Vec<T> = (0..axes).map(|a| intervals[a][perms[a][b]].1).collect();
                ParamBox::new(lower, upper).expect("stratified intervals are valid")
            })
            .collect();
        Self::new(boxes, bound).expect("construction is valid by design")
    }

    pub fn boxes(&self) -> &[ParamBox<T>] {
        &self.boxes
    }

    pub fn bound(&self) -> T {
        self.bound
    }

    pub fn axes(&self) -> usize {
        self.boxes[0].dim()
    }

    pub fn count(&self) -> usize {
        self.boxes.len()
    }
}

/// Drift construction for the last box of a family.
#[derive(Debug, Clone)]
pub struct DriftSpec<T> {
    family: DisjointBoxFamily<T>,
    /// Top of the previous box on the last axis (`s1_{k-1,N}`).
    level: T,
    /// Box over which the lower-face pinned mean interpolates: the last
    /// box's first `N - 1` axis intervals times `[level, s1_{k,N}]`.
    interp_box: ParamBox<T>,
    face_corners: Vec<ParamPoint<T>>,
}

impl<T: Scalar> DriftSpec<T> {
    pub fn new(family: DisjointBoxFamily<T>) -> Result<Self, GirsanovError> {
        let k = family.count();
        if k < 2 {
            return Err(GirsanovError::TooFewBoxes { needed: 2, got: k });
        }
        let n = family.axes();
        let last = &family.boxes()[k - 1];
        let level = family.boxes()[k - 2].upper()[n - 1];

        let mut lower = last.lower().to_vec();
        let upper = last.upper().to_vec();
        lower[n - 1] = level;
        let interp_box = ParamBox::new(lower, upper)?;

        let face_count = 1usize << (n - 1);
        let face_corners = (0..face_count)
            .map(|index| {
                let coords: Vec<T> = (0..n)
                    .map(|axis| {
                        if axis == n - 1 {
                            level
                        } else if index & (1 << axis) != 0 {
                            last.upper()[axis]
                        } else {
                            last.lower()[axis]
                        }
                    })
                    .collect();
                ParamPoint::new(coords).expect("corners are positive")
            })
            .collect();

        Ok(Self {
            family,
            level,
            interp_box,
            face_corners,
        })
    }

    pub fn family(&self) -> &DisjointBoxFamily<T> {
        &self.family
    }

    /// The last box of the family (the one being decoupled).
    pub fn last_box(&self) -> &ParamBox<T> {
        let k = self.family.count();
        &self.family.boxes()[k - 1]
    }

    /// `s1_{k-1,N}`: below this last-axis height the drift vanishes.
    pub fn level(&self) -> T {
        self.level
    }

    /// Lower-face corners of the last box lifted to `level`, in binary order
    /// over the first `N - 1` axes. Their field values parameterize the
    /// drift.
    pub fn face_corners(&self) -> &[ParamPoint<T>] {
        &self.face_corners
    }

    /// Bounds of the drift-carrying region `U`.
    pub fn drift_region(&self) -> (Vec<T>, Vec<T>) {
        let n = self.family.axes();
        let last = self.last_box();
        let mut lower = vec![T::zero(); n];
        let mut upper = last.upper().to_vec();
        lower[n - 1] = self.level;
        upper[n - 1] = last.lower()[n - 1];
        (lower, upper)
    }

    fn in_drift_region(&self, t: &ParamPoint<T>) -> bool {
        let (lower, upper) = self.drift_region();
        (0..t.dim()).all(|a| lower[a] <= t.coord(a) && t.coord(a) <= upper[a])
    }

    fn in_interp_region(&self, t: &ParamPoint<T>) -> bool {
        let n = self.family.axes();
        let last = self.last_box();
        (0..n - 1).all(|a| last.lower()[a] <= t.coord(a) && t.coord(a) <= last.upper()[a])
            && self.level <= t.coord(n - 1)
            && t.coord(n - 1) <= last.upper()[n - 1]
    }

    /// The projection `p`: first `N - 1` coordinates clamped up to the lower
    /// bounds of the last box, last coordinate pinned at `level`. Defined on
    /// `U union R`.
    pub fn projection(&self, t: &ParamPoint<T>) -> Result<ParamPoint<T>, GirsanovError> {
        let n = self.family.axes();
        if t.dim() != n {
            return Err(GirsanovError::DimMismatch(t.dim(), n));
        }
        if !self.in_drift_region(t) && !self.in_interp_region(t) {
            return Err(GirsanovError::OutsideDriftDomain);
        }
        Ok(self.project_unchecked(t))
    }

    fn project_unchecked(&self, t: &ParamPoint<T>) -> ParamPoint<T> {
        let n = self.family.axes();
        let last = self.last_box();
        let coords: Vec<T> = (0..n)
            .map(|a| {
                if a == n - 1 {
                    self.level
                } else {
                    t.coord(a).max(last.lower()[a])
                }
            })
            .collect();
        ParamPoint::new(coords).expect("projection stays positive")
    }

    /// Lower-face pinned mean of the face values at `t` (constant in the
    /// last coordinate).
    pub fn pinned_face_mean(
        &self,
        t: &ParamPoint<T>,
        face_values: &[Vec<T>],
    ) -> Result<Vec<T>, GirsanovError> {
        self.check_face_values(face_values)?;
        let ws = corner_weights(&self.interp_box, t, PinningMode::LowerFace)?;
        Ok(ws.interpolate(face_values)?)
    }

    fn check_face_values(&self, face_values: &[Vec<T>]) -> Result<(), GirsanovError> {
        if face_values.len() != self.face_corners.len() {
            return Err(GirsanovError::FaceValueCount {
                expected: self.face_corners.len(),
                got: face_values.len(),
            });
        }
        Ok(())
    }

    /// The `U`-branch formula, valid on the closure of `U`.
    fn drift_formula(&self, q: &ParamPoint<T>, face_values: &[Vec<T>]) -> Vec<T> {
        let n = self.family.axes();
        let last = self.last_box();
        let ramp = (q.coord(n - 1) - self.level) / (last.lower()[n - 1] - self.level);
        let mut shape = ramp;
        for a in 0..n - 1 {
            shape = shape * q.coord(a).min(last.lower()[a]) / last.lower()[a];
        }
        let p = self.project_unchecked(q);
        let ws = corner_weights(&self.interp_box, &p, PinningMode::LowerFace)
            .expect("projection lies in the interpolation box");
        let mean = ws.interpolate(face_values).expect("validated face values");
        mean.into_iter().map(|v| shape * v).collect()
    }

    /// The drift interpolant `F`: the formula on the closed region `U`, zero
    /// everywhere else.
    pub fn interpolant(
        &self,
        t: &ParamPoint<T>,
        face_values: &[Vec<T>],
    ) -> Result<Vec<T>, GirsanovError> {
        self.check_face_values(face_values)?;
        let n = self.family.axes();
        if t.dim() != n {
            return Err(GirsanovError::DimMismatch(t.dim(), n));
        }
        let d = face_values[0].len();
        if !self.in_drift_region(t) {
            return Ok(vec![T::zero(); d]);
        }
        Ok(self.drift_formula(t, face_values))
    }

    /// Accumulated drift `int_{[0,t]} Z`: the interpolant formula at `t`
    /// clamped into the closure of `U`. Exactly zero for `t_N <= level`;
    /// exactly the lower-face pinned mean on the last box.
    pub fn accumulated_drift(
        &self,
        t: &ParamPoint<T>,
        face_values: &[Vec<T>],
    ) -> Result<Vec<T>, GirsanovError> {
        self.check_face_values(face_values)?;
        let n = self.family.axes();
        if t.dim() != n {
            return Err(GirsanovError::DimMismatch(t.dim(), n));
        }
        let last = self.last_box();
        let coords: Vec<T> = (0..n)
            .map(|a| {
                if a == n - 1 {
                    t.coord(a).max(self.level).min(last.lower()[a])
                } else {
                    t.coord(a).min(last.upper()[a])
                }
            })
            .collect();
        let q = ParamPoint::new(coords).expect("clamp preserves positivity");
        Ok(self.drift_formula(&q, face_values))
    }

    /// Reads the face-corner values out of a grid sample.
    pub fn face_values_from(&self, field: &FieldSample<T>) -> Result<Vec<Vec<T>>, GirsanovError> {
        let grid = field.grid().ok_or(GirsanovError::NotAGrid)?;
        let mut values = Vec::with_capacity(self.face_corners.len());
        for (index, corner) in self.face_corners.iter().enumerate() {
            let idx = grid
                .locate_node(corner)
                .ok_or(GirsanovError::GridMissingCorners { index })?;
            values.push(field.node_value(&idx).expect("grid sample").to_vec());
        }
        Ok(values)
    }

    /// Subtracts the accumulated drift at every grid node. Nodes at or below
    /// `level` on the last axis keep their values bit-exactly.
    pub fn decouple(&self, field: &FieldSample<T>) -> Result<FieldSample<T>, GirsanovError> {
        let face_values = self.face_values_from(field)?;
        let n = self.family.axes();
        let d = field.spec.value_dim;
        let mut out = field.clone();
        for node in 0..field.point_count() {
            let t = field.point(node);
            if t.coord(n - 1) <= self.level {
                continue;
            }
            let drift = self.accumulated_drift(&t, &face_values)?;
            for comp in 0..d {
                out.values[node * d + comp] -= drift[comp];
            }
        }
        Ok(out)
    }

    /// Integral of `|Z|^2` over `U`. The density is piecewise constant on
    /// the boxes cut by the `s0_{k,l}` breakpoints, so cellwise mixed
    /// differences of `F` divided by the cell volume integrate it exactly;
    /// `subdivisions` further splits each smooth piece per axis (the result
    /// is the same up to roundoff, which makes refinement a consistency
    /// check).
    pub fn drift_energy_refined(
        &self,
        face_values: &[Vec<T>],
        subdivisions: usize,
    ) -> Result<T, GirsanovError> {
        self.check_face_values(face_values)?;
        let n = self.family.axes();
        let last = self.last_box();
        let sub = subdivisions.max(1);

        // Per-axis breakpoints of the smooth pieces inside U.
        let mut axis_grids: Vec<Vec<T>> = Vec::with_capacity(n);
        for a in 0..n - 1 {
            let mut pts = vec![T::zero()];
            push_subdivided(&mut pts, T::zero(), last.lower()[a], sub);
            push_subdivided(&mut pts, last.lower()[a], last.upper()[a], sub);
            axis_grids.push(pts);
        }
        {
            let mut pts = vec![self.level];
            push_subdivided(&mut pts, self.level, last.lower()[n - 1], sub);
            axis_grids.push(pts);
        }

        let d = face_values[0].len();
        let cells_per_axis: Vec<usize> = axis_grids.iter().map(|g| g.len() - 1).collect();
        let mut cell_idx = vec![0usize; n];
        let mut energy = T::zero();
        loop {
            let mut volume = T::one();
            for a in 0..n {
                volume *= axis_grids[a][cell_idx[a] + 1] - axis_grids[a][cell_idx[a]];
            }
            // Mixed difference of F over the cell corners.
            let mut diff = vec![T::zero(); d];
            for corner in 0..(1usize << n) {
                let mut coords = Vec::with_capacity(n);
                let mut sign_flips = 0usize;
                for a in 0..n {
                    if corner & (1 << a) != 0 {
                        coords.push(axis_grids[a][cell_idx[a] + 1]);
                    } else {
                        coords.push(axis_grids[a][cell_idx[a]]);
                        sign_flips += 1;
                    }
                }
                let q = ParamPoint::new(coords).expect("cell corners are nonnegative");
                let f = self.drift_formula(&q, face_values);
                let sign = if sign_flips.is_multiple_of(2) { T::one() } else { -T::one() };
                for (acc, v) in diff.iter_mut().zip(f) {
                    *acc += sign * v;
                }
            }
            let mut z_sq = T::zero();
            for v in &diff {
                let z = *v / volume;
                z_sq += z * z;
            }
            energy += z_sq * volume;

            // Next cell.
            let mut a = 0;
            loop {
                if a == n {
                    return Ok(energy);
                }
                cell_idx[a] += 1;
                if cell_idx[a] < cells_per_axis[a] {
                    break;
                }
                cell_idx[a] = 0;
                a += 1;
            }
        }
    }

    /// [`DriftSpec::drift_energy_refined`] on the minimal exact partition,
    /// with face values taken from the field.
    pub fn drift_energy(&self, field: &FieldSample<T>) -> Result<T, GirsanovError> {
        let face_values = self.face_values_from(field)?;
        self.drift_energy_refined(&face_values, 1)
    }
}

fn push_subdivided<T: Scalar>(pts: &mut Vec<T>, lo: T, hi: T, sub: usize) {
    for i in 1..=sub {
        let frac = T::cast(i as f64) / T::cast(sub as f64);
        pts.push(lo + (hi - lo) * frac);
    }
}

/// Independent standard normal face values, one `d`-vector per face corner;
/// test and experiment helper.
pub fn random_face_values<T: Scalar>(
    spec: &DriftSpec<T>,
    value_dim: usize,
    rng: &mut RngStream,
) -> Vec<Vec<T>> {
    spec.face_corners()
        .iter()
        .map(|_| (0..value_dim).map(|_| T::std_normal(rng)).collect())
        .collect()
}
