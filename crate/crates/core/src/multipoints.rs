//! Near-multiple-point search and the surrounding experiments.
//!
//! Exact `k`-fold value coincidences have probability zero on any finite
//! grid, so the searchable object is the epsilon-relaxed event: a tuple of
//! `k` grid nodes whose field values all lie within `eps` of each other
//! (value spread), whose parameter points are pairwise at least `delta`
//! apart, and which satisfies a coordinate constraint — either no shared
//! coordinate on any axis between any two members, or an exactly shared
//! coordinate between one designated pair.
//!
//! [`find_near_multiples`] buckets node values at resolution `eps` and only
//! forms candidate tuples inside adjacent bucket neighborhoods, which keeps
//! the expected cost near-linear in the grid size for small `eps` while
//! remaining complete (no false negatives at grid resolution: members within
//! `eps` in Euclidean norm differ by at most one bucket per component). The
//! `O(G^k)` scan survives as the test oracle.
//!
//! The companion experiments are [`covering_count`] (dyadic boxes needed to
//! cover the bounded shared-coordinate slice; its `log2` growth in the
//! generation index has slope `2(kN - 1)`), [`density_lower_bound`]
//! (minimum joint and increment covariance determinants over separated
//! tuples), [`phase_probability`] (Monte Carlo estimates of the
//! near-multiple-point probability with Wilson intervals), and
//! [`hitting_capacity_ratio`] (hitting probability of a target set against
//! its capacity of order `d - 2N`).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

use crate::capacity::{
    capacity_estimate, classify_regime, CapacityError, FrankWolfeOpts, KernelOrder, RegimeConfig,
    RegimeReport, SupportCloud,
};
use crate::gaussian::CovMatrix;
use crate::num::{dist2, Scalar};
use crate::rng::RngStream;
use crate::sheet::{
    covariance_unchecked, grid_sample, ExactSampler, FieldSample, GridSpec, ParamPoint, SheetError,
    SheetSpec,
};

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("window must satisfy 0 < lower < upper")]
    BadWindow,
    #[error("separation delta must be positive and smaller than the window diameter ({diameter})")]
    BadSeparation { diameter: f64 },
    #[error("value tolerance must be nonnegative (not NaN)")]
    BadTolerance,
    #[error("shared-coordinate constraint indices out of range")]
    BadConstraintIndices,
    #[error("grid resolution {step} exceeds delta/(3 sqrt(N)) = {required}")]
    ResolutionTooCoarse { step: f64, required: f64 },
    #[error("expected {expected} field(s) for this mode, got {got}")]
    FieldCount { expected: usize, got: usize },
    #[error("fields must share one spec and grid")]
    FieldMismatch,
    #[error("search requires grid-sampled fields")]
    NotAGrid,
    #[error("operation requires the shared-coordinate constraint")]
    ConstraintMode,
    #[error("hitting comparison requires d > 2N")]
    ExponentNotPositive,
    #[error("could not draw a delta-separated tuple after {0} attempts")]
    InfeasibleSeparation(usize),
    #[error(transparent)]
    Sheet(#[from] SheetError),
    #[error(transparent)]
    Capacity(#[from] CapacityError),
}

/// Search mode: tuples from one field, or one node from each of `k`
/// independent fields.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    SelfIntersections,
    IndependentSheets,
}

/// Coordinate constraint on the parameter tuple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoordinateConstraint {
    /// No two members share a coordinate on any axis.
    Distinct,
    /// Members `first` and `second` share their coordinate on `axis`
    /// exactly; other pairs are unconstrained.
    Shared {
        first: usize,
        second: usize,
        axis: usize,
    },
}

/// Cubic search window `[lower, upper]^N` with `0 < lower < upper`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchWindow<T> {
    pub lower: T,
    pub upper: T,
}

/// Full configuration of a near-multiple-point search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig<T> {
    pub regime: RegimeConfig,
    pub window: SearchWindow<T>,
    /// Minimum pairwise Euclidean distance `delta` between tuple members.
    pub separation: T,
    /// Value spread tolerance `eps`; zero demands exact coincidence and
    /// infinity accepts everything.
    pub tolerance: T,
    pub mode: SearchMode,
    pub constraint: CoordinateConstraint,
}

impl<T: Scalar> SearchConfig<T> {
    pub fn validate(&self) -> Result<(), SearchError> {
        if !(T::zero() < self.window.lower) || !(self.window.lower < self.window.upper) {
            return Err(SearchError::BadWindow);
        }
        let n = self.regime.param_dim;
        let diameter =
            (self.window.upper - self.window.lower) * T::cast((n as f64).sqrt());
        if !(self.separation > T::zero()) || !(self.separation < diameter) {
            return Err(SearchError::BadSeparation {
                diameter: diameter.to_f64_lossy(),
            });
        }
        if self.tolerance.is_nan() || self.tolerance < T::zero() {
            return Err(SearchError::BadTolerance);
        }
        if let CoordinateConstraint::Shared {
            first,
            second,
            axis,
        } = self.constraint
        {
            if first >= second || second >= self.regime.multiplicity || axis >= n {
                return Err(SearchError::BadConstraintIndices);
            }
        }
        Ok(())
    }

    /// Required grid resolution `delta / (3 sqrt(N))`.
    pub fn required_step(&self) -> T {
        self.separation / (T::cast(3.0) * T::cast((self.regime.param_dim as f64).sqrt()))
    }

    /// Origin-anchored grid over `[0, upper]^N` that satisfies the
    /// resolution precondition.
    pub fn sampling_grid(&self) -> Result<GridSpec<T>, SearchError> {
        let n = self.regime.param_dim;
        let cells = (self.window.upper / self.required_step())
            .ceil()
            .to_f64_lossy() as usize;
        Ok(GridSpec::anchored(
            vec![self.window.upper; n],
            vec![cells.max(1); n],
        )?)
    }
}

/// One epsilon-approximate multiple point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiPointHit<T> {
    pub points: Vec<ParamPoint<T>>,
    /// Maximum pairwise Euclidean distance of the witnessed values.
    pub spread: T,
    pub values: Vec<Vec<T>>,
}

enum Quantizer<T> {
    Cells(T),
    Bits,
    All,
}

impl<T: Scalar> Quantizer<T> {
    fn new(eps: T) -> Self {
        if eps == T::zero() {
            Quantizer::Bits
        } else if eps.is_infinite() {
            Quantizer::All
        } else {
            Quantizer::Cells(eps)
        }
    }

    fn key(&self, value: &[T]) -> Vec<i64> {
        match self {
            Quantizer::Cells(eps) => value
                .iter()
                .map(|&v| (v / *eps).floor().to_f64_lossy() as i64)
                .collect(),
            Quantizer::Bits => value
                .iter()
                .map(|&v| {
                    // Canonicalize the two zeros: equal values must share a key.
                    let f = v.to_f64_lossy();
                    let f = if f == 0.0 { 0.0 } else { f };
                    f.to_bits() as i64
                })
                .collect(),
            Quantizer::All => vec![0; value.len()],
        }
    }

    fn probe_radius(&self) -> i64 {
        match self {
            Quantizer::Cells(_) => 1,
            _ => 0,
        }
    }
}

struct NodeSet<'a, T> {
    /// Linear grid index, search-window coordinates, and values per node.
    nodes: Vec<(usize, ParamPoint<T>, &'a [T])>,
    buckets: HashMap<Vec<i64>, Vec<usize>>,
}

fn collect_nodes<'a, T: Scalar>(
    field: &'a FieldSample<T>,
    sc: &SearchConfig<T>,
    quantizer: &Quantizer<T>,
) -> Result<NodeSet<'a, T>, SearchError> {
    let grid = field.grid().ok_or(SearchError::NotAGrid)?;
    let n = grid.axes();
    let mut nodes = Vec::new();
    let mut buckets: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
    for lin in 0..field.point_count() {
        let p = field.point(lin);
        let inside = (0..n)
            .all(|a| p.coord(a) >= sc.window.lower && p.coord(a) <= sc.window.upper);
        if !inside {
            continue;
        }
        let value = field.value(lin);
        let idx = nodes.len();
        buckets.entry(quantizer.key(value)).or_default().push(idx);
        nodes.push((lin, p, value));
    }
    Ok(NodeSet { nodes, buckets })
}

fn pair_admissible<T: Scalar>(
    sc: &SearchConfig<T>,
    slot_a: usize,
    a: &ParamPoint<T>,
    va: &[T],
    slot_b: usize,
    b: &ParamPoint<T>,
    vb: &[T],
) -> bool {
    if dist2(va, vb) > sc.tolerance {
        return false;
    }
    if dist2(a.coords(), b.coords()) < sc.separation {
        return false;
    }
    match sc.constraint {
        CoordinateConstraint::Distinct => (0..a.dim()).all(|ax| a.coord(ax) != b.coord(ax)),
        CoordinateConstraint::Shared {
            first,
            second,
            axis,
        } => {
            if (slot_a, slot_b) == (first, second) || (slot_a, slot_b) == (second, first) {
                a.coord(axis) == b.coord(axis)
            } else {
                true
            }
        }
    }
}

/// All admissible `k`-tuples of grid nodes with value spread at most
/// `sc.tolerance`, found via value-space bucketing. Complete with respect to
/// the grid; results are sorted by the lexicographic order of their
/// parameter tuples.
pub fn find_near_multiples<T: Scalar>(
    fields: &[FieldSample<T>],
    sc: &SearchConfig<T>,
) -> Result<Vec<MultiPointHit<T>>, SearchError> {
    sc.validate()?;
    let k = sc.regime.multiplicity;
    let expected_fields = match sc.mode {
        SearchMode::SelfIntersections => 1,
        SearchMode::IndependentSheets => k,
    };
    if fields.len() != expected_fields {
        return Err(SearchError::FieldCount {
            expected: expected_fields,
            got: fields.len(),
        });
    }
    let grid = fields[0].grid().ok_or(SearchError::NotAGrid)?;
    for f in fields {
        if f.spec != fields[0].spec || f.grid() != Some(grid) {
            return Err(SearchError::FieldMismatch);
        }
    }
    let step = grid.max_step();
    let required = sc.required_step();
    if step > required * T::cast(1.0 + 1e-12) {
        return Err(SearchError::ResolutionTooCoarse {
            step: step.to_f64_lossy(),
            required: required.to_f64_lossy(),
        });
    }

    let quantizer = Quantizer::new(sc.tolerance);
    let sets: Vec<NodeSet<T>> = fields
        .iter()
        .map(|f| collect_nodes(f, sc, &quantizer))
        .collect::<Result<_, _>>()?;

    let d = fields[0].spec.value_dim;
    let radius = quantizer.probe_radius();
    let offsets = neighbor_offsets(d, radius);

    let mut hits = Vec::new();
    let set0 = &sets[0];
    let mut chosen: Vec<usize> = Vec::with_capacity(k);
    for first in 0..set0.nodes.len() {
        chosen.push(first);
        let key0 = quantizer.key(set0.nodes[first].2);
        extend_tuple(
            sc,
            &sets,
            &key0,
            &offsets,
            k,
            &mut chosen,
            &mut hits,
        );
        chosen.pop();
    }

    hits.sort_by(|a, b| {
        let fa: Vec<f64> = a
            .points
            .iter()
            .flat_map(|p| p.coords().iter().map(|v| v.to_f64_lossy()))
            .collect();
        let fb: Vec<f64> = b
            .points
            .iter()
            .flat_map(|p| p.coords().iter().map(|v| v.to_f64_lossy()))
            .collect();
        fa.partial_cmp(&fb).expect("finite coordinates")
    });
    Ok(hits)
}

fn neighbor_offsets(dim: usize, radius: i64) -> Vec<Vec<i64>> {
    let width = (2 * radius + 1) as usize;
    let total = width.pow(dim as u32);
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; dim];
    for _ in 0..total {
        out.push(idx.iter().map(|&i| i as i64 - radius).collect());
        for a in (0..dim).rev() {
            idx[a] += 1;
            if idx[a] == width {
                idx[a] = 0;
            } else {
                break;
            }
        }
    }
    out
}

fn extend_tuple<T: Scalar>(
    sc: &SearchConfig<T>,
    sets: &[NodeSet<T>],
    key0: &[i64],
    offsets: &[Vec<i64>],
    k: usize,
    chosen: &mut Vec<usize>,
    hits: &mut Vec<MultiPointHit<T>>,
) {
    let slot = chosen.len();
    if slot == k {
        // Assemble the hit; admissibility was checked incrementally.
        let mut points = Vec::with_capacity(k);
        let mut values = Vec::with_capacity(k);
        let mut spread = T::zero();
        for (s, &idx) in chosen.iter().enumerate() {
            let set = tuple_set(sets, sc.mode, s);
            points.push(set.nodes[idx].1.clone());
            values.push(set.nodes[idx].2.to_vec());
        }
        for i in 0..k {
            for j in (i + 1)..k {
                spread = spread.max(dist2(&values[i], &values[j]));
            }
        }
        debug_assert!(tuple_admissible(sc, &points, &values));
        hits.push(MultiPointHit {
            points,
            spread,
            values,
        });
        return;
    }
    let set = tuple_set(sets, sc.mode, slot);
    let same_field = matches!(sc.mode, SearchMode::SelfIntersections);
    for offset in offsets {
        let key: Vec<i64> = key0.iter().zip(offset).map(|(&a, &b)| a + b).collect();
        let Some(bucket) = set.buckets.get(&key) else {
            continue;
        };
        'cand: for &cand in bucket {
            if same_field && cand <= *chosen.last().expect("slot >= 1") {
                continue;
            }
            let (_, ref cp, cv) = set.nodes[cand];
            for (s, &prev) in chosen.iter().enumerate() {
                let pset = tuple_set(sets, sc.mode, s);
                let (_, ref pp, pv) = pset.nodes[prev];
                if !pair_admissible(sc, s, pp, pv, slot, cp, cv) {
                    continue 'cand;
                }
            }
            chosen.push(cand);
            extend_tuple(sc, sets, key0, offsets, k, chosen, hits);
            chosen.pop();
        }
    }
}

fn tuple_set<'a, T>(sets: &'a [NodeSet<'a, T>], mode: SearchMode, slot: usize) -> &'a NodeSet<'a, T> {
    match mode {
        SearchMode::SelfIntersections => &sets[0],
        SearchMode::IndependentSheets => &sets[slot],
    }
}

/// Post-hoc admissibility check of a complete tuple (used by debug
/// assertions and tests).
pub fn tuple_admissible<T: Scalar>(
    sc: &SearchConfig<T>,
    points: &[ParamPoint<T>],
    values: &[Vec<T>],
) -> bool {
    let k = points.len();
    for i in 0..k {
        for j in (i + 1)..k {
            if !pair_admissible(
                sc,
                i,
                &points[i],
                &values[i],
                j,
                &points[j],
                &values[j],
            ) {
                return false;
            }
        }
    }
    true
}

/// Reference `O(G^k)` scan with the same admissibility predicate and output
/// order as [`find_near_multiples`]. Kept as an independent oracle; only
/// usable on small grids.
pub fn brute_force_near_multiples<T: Scalar>(
    fields: &[FieldSample<T>],
    sc: &SearchConfig<T>,
) -> Result<Vec<MultiPointHit<T>>, SearchError> {
    sc.validate()?;
    let k = sc.regime.multiplicity;
    let expected_fields = match sc.mode {
        SearchMode::SelfIntersections => 1,
        SearchMode::IndependentSheets => k,
    };
    if fields.len() != expected_fields {
        return Err(SearchError::FieldCount {
            expected: expected_fields,
            got: fields.len(),
        });
    }
    let grid = fields[0].grid().ok_or(SearchError::NotAGrid)?;
    let n = grid.axes();
    let per_field: Vec<Vec<(ParamPoint<T>, Vec<T>)>> = fields
        .iter()
        .map(|f| {
            (0..f.point_count())
                .map(|i| (f.point(i), f.value(i).to_vec()))
                .filter(|(p, _)| {
                    (0..n).all(|a| p.coord(a) >= sc.window.lower && p.coord(a) <= sc.window.upper)
                })
                .collect()
        })
        .collect();

    let mut hits = Vec::new();
    let mut tuple: Vec<usize> = Vec::with_capacity(k);
    brute_recurse(sc, &per_field, k, &mut tuple, &mut hits);
    hits.sort_by(|a, b| {
        let fa: Vec<f64> = a
            .points
            .iter()
            .flat_map(|p| p.coords().iter().map(|v| v.to_f64_lossy()))
            .collect();
        let fb: Vec<f64> = b
            .points
            .iter()
            .flat_map(|p| p.coords().iter().map(|v| v.to_f64_lossy()))
            .collect();
        fa.partial_cmp(&fb).expect("finite coordinates")
    });
    Ok(hits)
}

fn brute_recurse<T: Scalar>(
    sc: &SearchConfig<T>,
    per_field: &[Vec<(ParamPoint<T>, Vec<T>)>],
    k: usize,
    tuple: &mut Vec<usize>,
    hits: &mut Vec<MultiPointHit<T>>,
) {
    let slot = tuple.len();
    let same_field = matches!(sc.mode, SearchMode::SelfIntersections);
    if slot == k {
        let points: Vec<ParamPoint<T>> = tuple
            .iter()
            .enumerate()
            .map(|(s, &i)| per_field[if same_field { 0 } else { s }][i].0.clone())
            .collect();
        let values: Vec<Vec<T>> = tuple
            .iter()
            .enumerate()
            .map(|(s, &i)| per_field[if same_field { 0 } else { s }][i].1.clone())
            .collect();
        if tuple_admissible(sc, &points, &values) {
            let mut spread = T::zero();
            for i in 0..k {
                for j in (i + 1)..k {
                    spread = spread.max(dist2(&values[i], &values[j]));
                }
            }
            hits.push(MultiPointHit {
                points,
                spread,
                values,
            });
        }
        return;
    }
    let field = if same_field { 0 } else { slot };
    let start = if same_field && slot > 0 {
        tuple[slot - 1] + 1
    } else {
        0
    };
    for i in start..per_field[field].len() {
        tuple.push(i);
        brute_recurse(sc, per_field, k, tuple, hits);
        tuple.pop();
    }
}

/// Analytic count of dyadic boxes of side `4^-n` covering the bounded
/// shared-coordinate slice: with `I(n)` intervals meeting `[delta, K]` per
/// free coordinate (and the tied pair contributing one diagonal run of the
/// same length), the count is `I(n)^(kN-1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoveringCount {
    /// Exact box count, absent when it overflows 128 bits.
    pub boxes: Option<u128>,
    pub log2_boxes: f64,
}

impl CoveringCount {
    pub fn is_overflow(&self) -> bool {
        self.boxes.is_none()
    }
}

/// Number of dyadic boxes of side `2^-2n` in `(R^N)^k` covering the slice
/// `{t in [delta, K]^{Nk} : t^i_axis = t^j_axis}`. Requires the
/// shared-coordinate constraint mode; `K` is the window upper bound.
pub fn covering_count<T: Scalar>(n: u32, sc: &SearchConfig<T>) -> Result<CoveringCount, SearchError> {
    sc.validate()?;
    if !matches!(sc.constraint, CoordinateConstraint::Shared { .. }) {
        return Err(SearchError::ConstraintMode);
    }
    let free_dims = (sc.regime.multiplicity * sc.regime.param_dim - 1) as u32;
    let scale = 4.0f64.powi(n as i32);
    let upper = sc.window.upper.to_f64_lossy();
    let delta = sc.separation.to_f64_lossy();
    let intervals = (upper * scale).ceil() - (delta * scale).floor();
    let log2_boxes = free_dims as f64 * intervals.log2();
    let boxes = (intervals as u128).checked_pow(free_dims);
    Ok(CoveringCount { boxes, log2_boxes })
}

/// Least-squares slope of `log2(covering_count)` against `n` over
/// `n_lo..=n_hi`; converges to `2(kN - 1)`.
pub fn covering_slope<T: Scalar>(
    sc: &SearchConfig<T>,
    n_lo: u32,
    n_hi: u32,
) -> Result<f64, SearchError> {
    assert!(n_lo < n_hi);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for n in n_lo..=n_hi {
        let c = covering_count(n, sc)?;
        xs.push(n as f64);
        ys.push(c.log2_boxes);
    }
    let m = xs.len() as f64;
    let mean_x: f64 = xs.iter().sum::<f64>() / m;
    let mean_y: f64 = ys.iter().sum::<f64>() / m;
    let sxy: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - mean_x) * (y - mean_y))
        .sum();
    let sxx: f64 = xs.iter().map(|x| (x - mean_x) * (x - mean_x)).sum();
    Ok(sxy / sxx)
}

/// Joint covariance matrix of `(B(t^1), ..., B(t^k))` for one state
/// coordinate.
pub fn joint_covariance<T: Scalar>(points: &[ParamPoint<T>]) -> Result<CovMatrix<T>, SearchError> {
    Ok(CovMatrix::from_fn(points.len(), |i, j| {
        covariance_unchecked(points[i].coords(), points[j].coords())
    })
    .map_err(SheetError::from)?)
}

/// Covariance matrix of the consecutive increment vector
/// `(B(t^1) - B(t^2), ..., B(t^{k-1}) - B(t^k))`.
pub fn increment_covariance<T: Scalar>(
    points: &[ParamPoint<T>],
) -> Result<CovMatrix<T>, SearchError> {
    let c = |i: usize, j: usize| covariance_unchecked(points[i].coords(), points[j].coords());
    Ok(CovMatrix::from_fn(points.len() - 1, |a, b| {
        c(a, b) - c(a, b + 1) - c(a + 1, b) + c(a + 1, b + 1)
    })
    .map_err(SheetError::from)?)
}

/// Minimum determinants over random separated tuples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityReport<T> {
    pub trials: usize,
    pub min_joint_det: T,
    pub min_increment_det: T,
}

/// Samples `trials` random `delta`-separated `k`-tuples in `[delta, K]^{Nk}`
/// and reports the minimum joint and increment covariance determinants.
pub fn density_lower_bound<T: Scalar>(
    sc: &SearchConfig<T>,
    trials: usize,
    seed: u64,
) -> Result<DensityReport<T>, SearchError> {
    sc.validate()?;
    let n = sc.regime.param_dim;
    let k = sc.regime.multiplicity;
    let delta = sc.separation;
    let upper = sc.window.upper;
    const MAX_ATTEMPTS: usize = 100_000;

    let dets: Vec<Result<(T, T), SearchError>> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = RngStream::substream(seed, trial as u64);
            let mut attempts = 0;
            let tuple = loop {
                attempts += 1;
                if attempts > MAX_ATTEMPTS {
                    return Err(SearchError::InfeasibleSeparation(MAX_ATTEMPTS));
                }
                let candidate: Vec<ParamPoint<T>> = (0..k)
                    .map(|_| {
                        let coords: Vec<T> = (0..n)
                            .map(|_| delta + (upper - delta) * T::unit_uniform(&mut rng))
                            .collect();
                        ParamPoint::new(coords).expect("positive coordinates")
                    })
                    .collect();
                let separated = (0..k).all(|i| {
                    ((i + 1)..k).all(|j| {
                        dist2(candidate[i].coords(), candidate[j].coords()) >= delta
                    })
                });
                if separated {
                    break candidate;
                }
            };
            let joint = joint_covariance(&tuple)?.determinant();
            let incr = increment_covariance(&tuple)?.determinant();
            Ok((joint, incr))
        })
        .collect();

    let mut min_joint = T::infinity();
    let mut min_incr = T::infinity();
    for det in dets {
        let (j, i) = det?;
        min_joint = min_joint.min(j);
        min_incr = min_incr.min(i);
    }
    Ok(DensityReport {
        trials,
        min_joint_det: min_joint,
        min_increment_det: min_incr,
    })
}

/// 95% Wilson score interval for `hits` successes out of `trials`.
pub fn wilson_interval(hits: usize, trials: usize) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959963984540054_f64;
    let n = trials as f64;
    let p = hits as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// One row of a phase experiment: everything needed for the CSV output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseRow<T> {
    pub tolerance: T,
    pub trials: usize,
    pub hits: usize,
    pub estimate: f64,
    pub wilson_lo: f64,
    pub wilson_hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseReport<T> {
    pub regime: RegimeReport,
    pub seed: u64,
    pub rows: Vec<PhaseRow<T>>,
}

/// Estimates `P{found near-multiple with spread <= eps}` for every `eps` in
/// the ladder over seeded trials. One search per trial at the largest
/// tolerance is enough: hits at smaller tolerances are re-read from the
/// minimum witnessed spread, so the estimates are nonincreasing down the
/// ladder by construction.
pub fn phase_probability<T: Scalar>(
    sc: &SearchConfig<T>,
    eps_ladder: &[T],
    trials: usize,
    seed: u64,
) -> Result<PhaseReport<T>, SearchError> {
    sc.validate()?;
    if eps_ladder.is_empty() || eps_ladder.iter().any(|e| e.is_nan() || *e < T::zero()) {
        return Err(SearchError::BadTolerance);
    }
    let eps_max = eps_ladder
        .iter()
        .copied()
        .fold(T::zero(), T::max);
    let mut search_cfg = sc.clone();
    search_cfg.tolerance = eps_max;
    search_cfg.validate()?;
    let grid = sc.sampling_grid()?;
    let k = sc.regime.multiplicity;
    let field_count = match sc.mode {
        SearchMode::SelfIntersections => 1,
        SearchMode::IndependentSheets => k,
    };
    let spec = SheetSpec::new(sc.regime.param_dim, sc.regime.value_dim)?;

    let min_spreads: Vec<Result<Option<T>, SearchError>> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = RngStream::substream(seed, trial as u64);
            let fields: Result<Vec<FieldSample<T>>, SheetError> = (0..field_count)
                .map(|_| grid_sample(spec, &grid, &mut rng))
                .collect();
            let fields = fields?;
            let hits = find_near_multiples(&fields, &search_cfg)?;
            Ok(hits
                .iter()
                .map(|h| h.spread)
                .fold(None, |acc: Option<T>, s| {
                    Some(acc.map_or(s, |a| a.min(s)))
                }))
        })
        .collect();

    let mut spreads = Vec::with_capacity(trials);
    for r in min_spreads {
        spreads.push(r?);
    }
    let rows = eps_ladder
        .iter()
        .map(|&eps| {
            let hits = spreads
                .iter()
                .filter(|s| s.is_some_and(|v| v <= eps))
                .count();
            let (lo, hi) = wilson_interval(hits, trials);
            PhaseRow {
                tolerance: eps,
                trials,
                hits,
                estimate: hits as f64 / trials.max(1) as f64,
                wilson_lo: lo,
                wilson_hi: hi,
            }
        })
        .collect();
    Ok(PhaseReport {
        regime: classify_regime(&sc.regime),
        seed,
        rows,
    })
}

/// Spatial hash over target cells of width `h`: membership means some atom
/// is within `h/2` in the max norm.
struct TargetIndex<T> {
    cells: HashMap<Vec<i64>, Vec<usize>>,
    atoms: Vec<Vec<T>>,
    half_width: T,
    cell: T,
}

impl<T: Scalar> TargetIndex<T> {
    fn new(cloud: &SupportCloud<T>) -> Self {
        let cell = cloud.cell_width;
        let mut cells: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
        for (i, atom) in cloud.points.iter().enumerate() {
            let key: Vec<i64> = atom
                .iter()
                .map(|&v| (v / cell).floor().to_f64_lossy() as i64)
                .collect();
            cells.entry(key).or_default().push(i);
        }
        Self {
            cells,
            atoms: cloud.points.clone(),
            half_width: cell / T::cast(2.0),
            cell,
        }
    }

    fn contains(&self, v: &[T], offsets: &[Vec<i64>]) -> bool {
        let key: Vec<i64> = v
            .iter()
            .map(|&x| (x / self.cell).floor().to_f64_lossy() as i64)
            .collect();
        for off in offsets {
            let probe: Vec<i64> = key.iter().zip(off).map(|(&a, &b)| a + b).collect();
            if let Some(bucket) = self.cells.get(&probe) {
                for &i in bucket {
                    let atom = &self.atoms[i];
                    if v.iter()
                        .zip(atom)
                        .all(|(&a, &b)| (a - b).abs() <= self.half_width)
                    {
                        return true;
                    }
                }
            }
        }
        false
    }
}

/// One refinement level of the hitting-probability experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HittingLevel<T> {
    pub nodes_per_axis: usize,
    pub trials: usize,
    pub hits: usize,
    pub probability: f64,
    pub capacity: T,
    /// `probability / capacity`; `None` is the 0/0 sentinel for empty
    /// targets.
    pub ratio: Option<f64>,
}

/// Monte Carlo hitting probability of the target set by one sheet over the
/// region, against the capacity of order `d - 2N`. Requires `d > 2N`.
pub fn hitting_capacity_ratio<T: Scalar>(
    spec: SheetSpec,
    region: &crate::pinning::ParamBox<T>,
    target: &SupportCloud<T>,
    trials: usize,
    nodes_per_axis: usize,
    seed: u64,
) -> Result<HittingLevel<T>, SearchError> {
    if spec.value_dim <= 2 * spec.param_dim {
        return Err(SearchError::ExponentNotPositive);
    }
    let order = KernelOrder::new(T::cast(
        (spec.value_dim - 2 * spec.param_dim) as f64,
    ));
    let cap = capacity_estimate(order, target, &FrankWolfeOpts::default()).capacity;

    if target.is_empty() {
        return Ok(HittingLevel {
            nodes_per_axis,
            trials,
            hits: 0,
            probability: 0.0,
            capacity: cap,
            ratio: None,
        });
    }

    // Grid of sample points inside the region.
    let n = spec.param_dim;
    let m = nodes_per_axis.max(2);
    let mut points = Vec::with_capacity(m.pow(n as u32));
    let mut idx = vec![0usize; n];
    for _ in 0..m.pow(n as u32) {
        let coords: Vec<T> = (0..n)
            .map(|a| {
                let frac = T::cast(idx[a] as f64) / T::cast((m - 1) as f64);
                region.lower()[a] + (region.upper()[a] - region.lower()[a]) * frac
            })
            .collect();
        points.push(ParamPoint::new(coords).expect("region is positive"));
        for a in (0..n).rev() {
            idx[a] += 1;
            if idx[a] == m {
                idx[a] = 0;
            } else {
                break;
            }
        }
    }
    let sampler = ExactSampler::new(spec, points)?;
    let index = TargetIndex::new(target);
    let offsets = neighbor_offsets(spec.value_dim, 1);

    let flags: Vec<bool> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = RngStream::substream(seed, trial as u64);
            let field = sampler.draw(&mut rng);
            (0..field.point_count()).any(|i| index.contains(field.value(i), &offsets))
        })
        .collect();
    let hits = flags.iter().filter(|&&b| b).count();
    let probability = hits as f64 / trials.max(1) as f64;
    let cap_f = cap.to_f64_lossy();
    let ratio = if probability == 0.0 && cap_f == 0.0 {
        None
    } else {
        Some(probability / cap_f)
    };
    Ok(HittingLevel {
        nodes_per_axis,
        trials,
        hits,
        probability,
        capacity: cap,
        ratio,
    })
}
