//! Conditional expectations of the sheet pinned by box corners.
//!
//! For a box `R = prod_l [s0_l, s1_l]` with `0 < s0_l < s1_l` and a target
//! `t` inside it, the conditional expectation of `B(t)` given the field
//! outside `R` is the multilinear interpolation of the corner values: corner
//! `gamma` (one bit per axis) carries weight
//!
//! ```text
//! prod_{gamma_l = 1} (t_l - s0_l)/(s1_l - s0_l)
//!   * prod_{gamma_l = 0} (s1_l - t_l)/(s1_l - s0_l).
//! ```
//!
//! Two variants exist. [`PinningMode::Full`] conditions on the product of
//! complements on all `N` axes and uses all `2^N` corners.
//! [`PinningMode::LowerFace`] conditions on complements on the first `N - 1`
//! axes and on the past `[0, s0_N]` of the last axis; it uses the `2^(N-1)`
//! corners on the lower face and does not depend on `t_N` at all.
//!
//! Both formulas are characterized by an orthogonality identity: the weighted
//! corner covariance against any admissible outside point must reproduce the
//! plain covariance. [`orthogonality_residual`] evaluates that identity
//! analytically; it reduces per axis to the projection identity checked by
//! [`projection_identity_residual`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::Scalar;
use crate::sheet::{covariance_unchecked, ParamPoint};

#[derive(Debug, Error)]
pub enum PinningError {
    #[error("box needs strictly positive lower bounds and lower < upper (axis {axis})")]
    BadBounds { axis: usize },
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("target lies outside the box on axis {axis}")]
    OutOfBox { axis: usize },
    #[error("corner values: expected {expected}, got {got}")]
    IndexMismatch { expected: usize, got: usize },
    #[error("lower-face mode needs at least {0} axes")]
    TooFewAxes(usize),
    #[error("point is not in the admissible outside set (axis {axis})")]
    SNotAdmissible { axis: usize },
    #[error("domain error: {0}")]
    Domain(String),
}

/// Axis-aligned box in the parameter orthant with `0 < lower < upper`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBox<T> {
    lower: Vec<T>,
    upper: Vec<T>,
}

impl<T: Scalar> ParamBox<T> {
    pub fn new(lower: Vec<T>, upper: Vec<T>) -> Result<Self, PinningError> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(PinningError::DimMismatch(lower.len(), upper.len()));
        }
        for axis in 0..lower.len() {
            if !(T::zero() < lower[axis]) || !(lower[axis] < upper[axis]) {
                return Err(PinningError::BadBounds { axis });
            }
        }
        Ok(Self { lower, upper })
    }

    /// Cube `[a, b]^dim`.
    pub fn cube(dim: usize, a: T, b: T) -> Result<Self, PinningError> {
        Self::new(vec![a; dim], vec![b; dim])
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[T] {
        &self.lower
    }

    pub fn upper(&self) -> &[T] {
        &self.upper
    }

    pub fn contains(&self, t: &ParamPoint<T>) -> bool {
        t.dim() == self.dim()
            && (0..self.dim()).all(|a| self.lower[a] <= t.coord(a) && t.coord(a) <= self.upper[a])
    }

    fn first_axis_outside(&self, t: &ParamPoint<T>) -> Option<usize> {
        (0..self.dim()).find(|&a| t.coord(a) < self.lower[a] || t.coord(a) > self.upper[a])
    }

    /// Corner `index`, read in binary: bit `l` selects the upper bound on
    /// axis `l`.
    pub fn corner(&self, index: usize) -> ParamPoint<T> {
        let coords = (0..self.dim())
            .map(|a| {
                if index & (1 << a) != 0 {
                    self.upper[a]
                } else {
                    self.lower[a]
                }
            })
            .collect();
        ParamPoint::from_unchecked(coords)
    }

    pub fn corner_count(&self) -> usize {
        1 << self.dim()
    }
}

/// Which conditioning geometry the corner weights realize.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PinningMode {
    /// Complements on all axes; all `2^N` corners.
    Full,
    /// Complements on the first `N - 1` axes and the past of the last axis;
    /// the `2^(N-1)` corners with last coordinate at the lower bound.
    LowerFace,
}

/// Convex corner weights for one target point.
///
/// Corners are indexed in binary order: bit `l` of the corner index selects
/// the upper bound on axis `l`. In lower-face mode only the first `N - 1`
/// axes carry bits and every corner has its last coordinate pinned at
/// `s0_N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CornerWeightSet<T> {
    pub mode: PinningMode,
    pub corners: Vec<ParamPoint<T>>,
    pub weights: Vec<T>,
    pub target: ParamPoint<T>,
}

impl<T: Scalar> CornerWeightSet<T> {
    /// Weighted combination of per-corner `d`-vectors.
    pub fn interpolate(&self, corner_values: &[Vec<T>]) -> Result<Vec<T>, PinningError> {
        if corner_values.len() != self.weights.len() {
            return Err(PinningError::IndexMismatch {
                expected: self.weights.len(),
                got: corner_values.len(),
            });
        }
        let d = corner_values
            .first()
            .map(|v| v.len())
            .ok_or(PinningError::IndexMismatch { expected: 1, got: 0 })?;
        let mut out = vec![T::zero(); d];
        for (w, v) in self.weights.iter().zip(corner_values) {
            if v.len() != d {
                return Err(PinningError::IndexMismatch {
                    expected: d,
                    got: v.len(),
                });
            }
            for (o, &x) in out.iter_mut().zip(v) {
                *o += *w * x;
            }
        }
        Ok(out)
    }

    pub fn weight_sum(&self) -> T {
        self.weights.iter().copied().sum()
    }
}

/// Per-axis interpolation factor `(t - s0)/(s1 - s0)` and its complement.
#[inline]
fn axis_factors<T: Scalar>(lower: T, upper: T, t: T) -> (T, T) {
    let width = upper - lower;
    ((t - lower) / width, (upper - t) / width)
}

/// Computes the corner weights of the conditional expectation at `t`.
pub fn corner_weights<T: Scalar>(
    r: &ParamBox<T>,
    t: &ParamPoint<T>,
    mode: PinningMode,
) -> Result<CornerWeightSet<T>, PinningError> {
    if t.dim() != r.dim() {
        return Err(PinningError::DimMismatch(t.dim(), r.dim()));
    }
    if let Some(axis) = r.first_axis_outside(t) {
        return Err(PinningError::OutOfBox { axis });
    }
    let n = r.dim();
    let weighted_axes = match mode {
        PinningMode::Full => n,
        PinningMode::LowerFace => n - 1,
    };
    let count = 1usize << weighted_axes;
    let mut corners = Vec::with_capacity(count);
    let mut weights = Vec::with_capacity(count);
    for index in 0..count {
        let mut w = T::one();
        let mut coords = Vec::with_capacity(n);
        for axis in 0..weighted_axes {
            let (hi, lo) = axis_factors(r.lower()[axis], r.upper()[axis], t.coord(axis));
            if index & (1 << axis) != 0 {
                w *= hi;
                coords.push(r.upper()[axis]);
            } else {
                w *= lo;
                coords.push(r.lower()[axis]);
            }
        }
        if mode == PinningMode::LowerFace {
            coords.push(r.lower()[n - 1]);
        }
        corners.push(ParamPoint::from_unchecked(coords));
        weights.push(w);
    }
    Ok(CornerWeightSet {
        mode,
        corners,
        weights,
        target: t.clone(),
    })
}

/// Conditional mean of `B(t)` given the field outside the box, from the
/// values at all `2^N` corners.
pub fn pinned_mean_full<T: Scalar>(
    r: &ParamBox<T>,
    t: &ParamPoint<T>,
    corner_values: &[Vec<T>],
) -> Result<Vec<T>, PinningError> {
    corner_weights(r, t, PinningMode::Full)?.interpolate(corner_values)
}

/// Conditional mean of `B(t)` given the field outside the first `N - 1` axis
/// intervals and before `s0_N`, from the values at the `2^(N-1)` lower-face
/// corners. The result does not depend on `t_N`.
pub fn pinned_mean_lower_face<T: Scalar>(
    r: &ParamBox<T>,
    t: &ParamPoint<T>,
    face_values: &[Vec<T>],
) -> Result<Vec<T>, PinningError> {
    corner_weights(r, t, PinningMode::LowerFace)?.interpolate(face_values)
}

/// Residual of the scalar projection identity
/// `min(t, s) = min(s1, s) * (t - s0)/(s1 - s0) + min(s0, s) * (s1 - t)/(s1 - s0)`
/// which holds whenever `s` lies outside the open interval `(s0, s1)` and
/// `s0 <= t <= s1`. Must be `<= 1e-14` for admissible inputs.
pub fn projection_identity_residual<T: Scalar>(
    s: T,
    s0: T,
    s1: T,
    t: T,
) -> Result<T, PinningError> {
    if !(T::zero() < s0) || !(s0 < s1) {
        return Err(PinningError::Domain("need 0 < s0 < s1".into()));
    }
    if t < s0 || t > s1 {
        return Err(PinningError::OutOfBox { axis: 0 });
    }
    if s > s0 && s < s1 {
        return Err(PinningError::Domain(
            "s must lie outside the open interval (s0, s1)".into(),
        ));
    }
    let (hi, lo) = axis_factors(s0, s1, t);
    let rhs = s1.min(s) * hi + s0.min(s) * lo;
    Ok((t.min(s) - rhs).abs())
}

/// Checks whether `s` is admissible outside data for the given mode: in full
/// mode every coordinate must lie outside its open interval; in lower-face
/// mode the first `N - 1` coordinates must lie outside and the last must
/// satisfy `s_N <= s0_N`.
fn check_admissible<T: Scalar>(
    r: &ParamBox<T>,
    s: &ParamPoint<T>,
    mode: PinningMode,
) -> Result<(), PinningError> {
    if s.dim() != r.dim() {
        return Err(PinningError::DimMismatch(s.dim(), r.dim()));
    }
    let n = r.dim();
    let complement_axes = match mode {
        PinningMode::Full => n,
        PinningMode::LowerFace => n - 1,
    };
    for axis in 0..complement_axes {
        let v = s.coord(axis);
        if v > r.lower()[axis] && v < r.upper()[axis] {
            return Err(PinningError::SNotAdmissible { axis });
        }
    }
    if mode == PinningMode::LowerFace && s.coord(n - 1) > r.lower()[n - 1] {
        return Err(PinningError::SNotAdmissible { axis: n - 1 });
    }
    Ok(())
}

/// Absolute residual of the orthogonality identity
/// `E[pinned(t) * B(s)] = E[B(t) * B(s)]`, evaluated analytically through the
/// covariance. Must be `<= 1e-12` for admissible `s`.
pub fn orthogonality_residual<T: Scalar>(
    r: &ParamBox<T>,
    t: &ParamPoint<T>,
    s: &ParamPoint<T>,
    mode: PinningMode,
) -> Result<T, PinningError> {
    check_admissible(r, s, mode)?;
    let ws = corner_weights(r, t, mode)?;
    let mut pinned_cov = T::zero();
    for (w, corner) in ws.weights.iter().zip(&ws.corners) {
        pinned_cov += *w * covariance_unchecked(corner.coords(), s.coords());
    }
    let direct = covariance_unchecked(t.coords(), s.coords());
    Ok((pinned_cov - direct).abs())
}

/// Random box with per-axis bounds in `[0.2, 2.2]` and a uniform target
/// inside it; the instance generator shared by the identity sweeps.
pub fn random_box_and_target<T: Scalar, R: rand::Rng + ?Sized>(
    rng: &mut R,
    axes: usize,
) -> (ParamBox<T>, ParamPoint<T>) {
    let mut lower = Vec::with_capacity(axes);
    let mut upper = Vec::with_capacity(axes);
    let mut t = Vec::with_capacity(axes);
    for _ in 0..axes {
        let a = T::cast(0.2) + T::cast(1.3) * T::unit_uniform(rng);
        let w = T::cast(0.1) + T::cast(0.6) * T::unit_uniform(rng);
        lower.push(a);
        upper.push(a + w);
        t.push(a + w * T::unit_uniform(rng));
    }
    (
        ParamBox::new(lower, upper).expect("generated bounds are valid"),
        ParamPoint::new(t).expect("target is positive"),
    )
}

/// Random admissible outside point for the given mode: each complement axis
/// falls below the lower bound or above the upper bound, and in lower-face
/// mode the last coordinate lands in `[0, s0_N]`.
pub fn random_outside_point<T: Scalar, R: rand::Rng + ?Sized>(
    rng: &mut R,
    r: &ParamBox<T>,
    mode: PinningMode,
) -> ParamPoint<T> {
    let n = r.dim();
    let complement_axes = match mode {
        PinningMode::Full => n,
        PinningMode::LowerFace => n - 1,
    };
    let mut coords = Vec::with_capacity(n);
    for axis in 0..complement_axes {
        let below = rng.next_u64().is_multiple_of(2);
        let v = if below {
            r.lower()[axis] * T::unit_uniform(rng)
        } else {
            r.upper()[axis] + T::cast(2.0) * T::unit_uniform(rng)
        };
        coords.push(v);
    }
    if mode == PinningMode::LowerFace {
        coords.push(r.lower()[n - 1] * T::unit_uniform(rng));
    }
    ParamPoint::new(coords).expect("outside point is nonnegative")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{condition_gaussian, CovMatrix, GaussianVector};
    use crate::rng::RngStream;
    use crate::sheet::{ExactSampler, SheetSpec};
    use proptest::prelude::*;

    fn pt(coords: &[f64]) -> ParamPoint<f64> {
        ParamPoint::new(coords.to_vec()).unwrap()
    }

    fn boxed(lower: &[f64], upper: &[f64]) -> ParamBox<f64> {
        ParamBox::new(lower.to_vec(), upper.to_vec()).unwrap()
    }

    #[test]
    fn box_invariants_enforced() {
        assert!(ParamBox::new(vec![0.0], vec![1.0]).is_err());
        assert!(ParamBox::new(vec![1.0], vec![1.0]).is_err());
        assert!(ParamBox::new(vec![2.0], vec![1.0]).is_err());
        assert!(ParamBox::new(vec![0.5, 1.0], vec![1.0, 2.0]).is_ok());
    }

    #[test]
    fn midpoint_weights_split_evenly() {
        let r = boxed(&[1.0], &[2.0]);
        let ws = corner_weights(&r, &pt(&[1.5]), PinningMode::Full).unwrap();
        assert_eq!(ws.weights, vec![0.5, 0.5]);
    }

    #[test]
    fn full_weights_planar_example() {
        // Relative position (0.25, 0.75) in a unit box.
        let r = boxed(&[1.0, 1.0], &[2.0, 2.0]);
        let ws = corner_weights(&r, &pt(&[1.25, 1.75]), PinningMode::Full).unwrap();
        // Binary corner order: (lo,lo), (hi,lo), (lo,hi), (hi,hi).
        let expect = [0.1875, 0.0625, 0.5625, 0.1875];
        for (got, want) in ws.weights.iter().zip(expect) {
            assert!((got - want).abs() < 1e-15, "weights {:?}", ws.weights);
        }
        assert_eq!(ws.corners[1].coords(), &[2.0, 1.0]);
    }

    #[test]
    fn lower_face_weights_ignore_last_axis() {
        let r = boxed(&[1.0, 1.0], &[2.0, 2.0]);
        for step in 0..=100 {
            let last = 1.0 + step as f64 / 100.0;
            let ws = corner_weights(&r, &pt(&[1.25, last]), PinningMode::LowerFace).unwrap();
            assert_eq!(ws.weights, vec![0.75, 0.25]);
            assert_eq!(ws.corners[0].coords(), &[1.0, 1.0]);
            assert_eq!(ws.corners[1].coords(), &[2.0, 1.0]);
        }
    }

    #[test]
    fn out_of_box_rejected() {
        let r = boxed(&[1.0, 1.0], &[2.0, 2.0]);
        assert!(matches!(
            corner_weights(&r, &pt(&[0.5, 1.5]), PinningMode::Full),
            Err(PinningError::OutOfBox { axis: 0 })
        ));
    }

    #[test]
    fn interpolation_reproduces_constants_and_corners() {
        let r = boxed(&[1.0, 1.0], &[2.0, 2.0]);
        let vals: Vec<Vec<f64>> = vec![vec![3.5]; 4];
        let out = pinned_mean_full(&r, &pt(&[1.6, 1.2]), &vals).unwrap();
        assert!((out[0] - 3.5).abs() < 1e-15);

        let vals = vec![vec![1.0], vec![2.0], vec![3.0], vec![4.0]];
        // Target at corner (hi, lo) = index 1.
        let out = pinned_mean_full(&r, &pt(&[2.0, 1.0]), &vals).unwrap();
        assert_eq!(out[0], 2.0);
    }

    #[test]
    fn one_axis_interpolation_example() {
        let r = boxed(&[1.0], &[2.0]);
        let a = 0.7;
        let b = -1.1;
        let out = pinned_mean_full(&r, &pt(&[1.25]), &[vec![a], vec![b]]).unwrap();
        assert!((out[0] - (0.75 * a + 0.25 * b)).abs() < 1e-15);
    }

    #[test]
    fn lower_face_mean_examples() {
        let r = boxed(&[1.0, 1.0], &[2.0, 2.0]);
        let x = 2.5;
        let y = -0.5;
        // Face values ordered (lo), (hi) on the first axis.
        let out = pinned_mean_lower_face(&r, &pt(&[1.25, 1.7]), &[vec![y], vec![x]]).unwrap();
        assert!((out[0] - (0.25 * x + 0.75 * y)).abs() < 1e-15);

        let same = pinned_mean_lower_face(&r, &pt(&[1.25, 1.1]), &[vec![y], vec![x]]).unwrap();
        assert_eq!(out, same);

        let consts =
            pinned_mean_lower_face(&r, &pt(&[1.9, 1.5]), &[vec![7.0], vec![7.0]]).unwrap();
        assert!((consts[0] - 7.0).abs() < 1e-15);
    }

    #[test]
    fn value_count_mismatch_rejected() {
        let r = boxed(&[1.0], &[2.0]);
        assert!(matches!(
            pinned_mean_full(&r, &pt(&[1.5]), &[vec![1.0]]),
            Err(PinningError::IndexMismatch { .. })
        ));
    }

    #[test]
    fn projection_identity_examples() {
        assert_eq!(
            projection_identity_residual(2.0, 0.5, 1.0, 0.75).unwrap(),
            0.0
        );
        for t in [0.5, 0.6, 0.99, 1.0] {
            assert!(projection_identity_residual(0.2, 0.5, 1.0, t).unwrap() <= 1e-14);
        }
        assert!(projection_identity_residual(1.0, 0.5, 1.0, 0.8).unwrap() <= 1e-14);
        assert!(projection_identity_residual(0.7, 0.5, 1.0, 0.8).is_err());
    }

    #[test]
    fn orthogonality_examples() {
        let r1 = boxed(&[1.0], &[2.0]);
        assert!(
            orthogonality_residual(&r1, &pt(&[1.5]), &pt(&[3.0]), PinningMode::Full).unwrap()
                <= 1e-12
        );

        let r2 = boxed(&[1.0, 1.0], &[2.0, 2.0]);
        assert!(
            orthogonality_residual(&r2, &pt(&[1.5, 1.5]), &pt(&[0.5, 3.0]), PinningMode::Full)
                .unwrap()
                <= 1e-12
        );

        // Lower-face boundary: s_N exactly at s0_N.
        assert!(orthogonality_residual(
            &r2,
            &pt(&[1.5, 1.8]),
            &pt(&[2.5, 1.0]),
            PinningMode::LowerFace
        )
        .unwrap()
            <= 1e-12);
    }

    #[test]
    fn partial_outside_points_rejected() {
        let r = boxed(&[1.0, 1.0], &[2.0, 2.0]);
        // First coordinate inside the open interval: not in the product set.
        assert!(matches!(
            orthogonality_residual(&r, &pt(&[1.5, 1.5]), &pt(&[1.5, 3.0]), PinningMode::Full),
            Err(PinningError::SNotAdmissible { axis: 0 })
        ));
        // Lower-face: last coordinate above s0_N is inadmissible.
        assert!(matches!(
            orthogonality_residual(
                &r,
                &pt(&[1.5, 1.5]),
                &pt(&[2.5, 1.5]),
                PinningMode::LowerFace
            ),
            Err(PinningError::SNotAdmissible { axis: 1 })
        ));
    }

    #[test]
    fn orthogonality_random_sweep() {
        let mut rng = RngStream::root(314);
        for trial in 0..2000 {
            let n = 1 + (trial % 5);
            let (r, t) = random_box_and_target::<f64, _>(&mut rng, n);
            for mode in [PinningMode::Full, PinningMode::LowerFace] {
                let s = random_outside_point::<f64, _>(&mut rng, &r, mode);
                let res = orthogonality_residual(&r, &t, &s, mode).unwrap();
                assert!(res <= 1e-12, "mode {mode:?} residual {res}");
                let ws = corner_weights(&r, &t, mode).unwrap();
                assert!((ws.weight_sum() - 1.0).abs() <= 1e-12);
                assert!(ws.weights.iter().all(|&w| w >= 0.0));
            }
        }
    }

    #[test]
    fn matches_gaussian_conditioning_oracle() {
        // Conditioning B(t) on the corner values through the generic Schur
        // oracle must reproduce the closed-form interpolation.
        let mut rng = RngStream::root(2718);
        for trial in 0..100 {
            let n = 1 + (trial % 4);
            let (r, t) = random_box_and_target::<f64, _>(&mut rng, n);
            let corners: Vec<ParamPoint<f64>> =
                (0..r.corner_count()).map(|i| r.corner(i)).collect();

            let mut all_points = corners.clone();
            all_points.push(t.clone());
            let dim = all_points.len();
            let cov = CovMatrix::from_fn(dim, |i, j| {
                covariance_unchecked(all_points[i].coords(), all_points[j].coords())
            })
            .unwrap();
            let joint = GaussianVector::centered(cov);

            let spec = SheetSpec::new(n, 1).unwrap();
            let sampler = ExactSampler::new(spec, corners.clone()).unwrap();
            let sample = sampler.draw(&mut rng);
            let observed: Vec<f64> = (0..corners.len()).map(|i| sample.values[i]).collect();
            let idx: Vec<usize> = (0..corners.len()).collect();
            let cond = condition_gaussian(&joint, &idx, &observed).unwrap();

            let corner_values: Vec<Vec<f64>> = observed.iter().map(|&v| vec![v]).collect();
            let pinned = pinned_mean_full(&r, &t, &corner_values).unwrap();
            assert!(
                (cond.mean[dim - 1] - pinned[0]).abs() <= 1e-10,
                "trial {trial}: oracle {} vs closed form {}",
                cond.mean[dim - 1],
                pinned[0]
            );
        }
    }

    proptest! {
        #[test]
        fn weights_normalize_and_stay_convex(
            n in 1usize..=6,
            seed in 0u64..1_000_000,
        ) {
            let mut rng = RngStream::root(seed);
            let (r, t) = random_box_and_target::<f64, _>(&mut rng, n);
            for mode in [PinningMode::Full, PinningMode::LowerFace] {
                let ws = corner_weights(&r, &t, mode).unwrap();
                prop_assert!((ws.weight_sum() - 1.0).abs() <= 1e-12);
                prop_assert!(ws.weights.iter().all(|&w| w >= 0.0));
            }
        }

        #[test]
        fn interpolants_stay_in_convex_hull(
            n in 1usize..=5,
            seed in 0u64..1_000_000,
        ) {
            let mut rng = RngStream::root(seed.wrapping_add(17));
            let (r, t) = random_box_and_target::<f64, _>(&mut rng, n);
            let count = r.corner_count();
            let values: Vec<Vec<f64>> = (0..count)
                .map(|_| vec![4.0 * f64::unit_uniform(&mut rng) - 2.0])
                .collect();
            let out = pinned_mean_full(&r, &t, &values).unwrap();
            let lo = values.iter().map(|v| v[0]).fold(f64::INFINITY, f64::min);
            let hi = values.iter().map(|v| v[0]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(out[0] >= lo - 1e-12 && out[0] <= hi + 1e-12);
        }
    }
}
