//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line
//! with the measured quantities. Run with `cargo test --test acceptance`
//! (add `-- --nocapture` to see the lines for passing criteria).

use sheetlab::capacity::{
    capacity_estimate, classify_regime, critical_triples, FrankWolfeOpts, KernelOrder, Regime,
    RegimeConfig, SupportCloud,
};
use sheetlab::gaussian::{condition_gaussian, CovMatrix, GaussianVector};
use sheetlab::girsanov::{random_face_values, DisjointBoxFamily, DriftSpec};
use sheetlab::multipoints::{
    brute_force_near_multiples, covering_slope, density_lower_bound, find_near_multiples,
    hitting_capacity_ratio, phase_probability, tuple_admissible, CoordinateConstraint,
    SearchConfig, SearchMode, SearchWindow,
};
use sheetlab::pinning::{
    corner_weights, orthogonality_residual, pinned_mean_full, random_box_and_target,
    random_outside_point, ParamBox, PinningMode,
};
use sheetlab::rng::RngStream;
use sheetlab::sheet::{
    grid_sample, sheet_covariance, ExactSampler, GridSpec, ParamPoint, SheetSpec,
};
use sheetlab::Scalar;

fn criterion(id: u32, name: &str, pass: bool, details: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    println!("{verdict} criterion {id:2}: {name} — {details}");
    assert!(pass, "criterion {id} failed: {name} — {details}");
}

#[test]
fn acceptance_01_pinning_identities() {
    let mut rng = RngStream::root(101);
    let mut worst_residual = 0.0f64;
    let mut worst_weight_sum = 0.0f64;
    let mut min_weight = f64::INFINITY;
    for trial in 0..10_000 {
        let n = 1 + trial % 5;
        let (r, t) = random_box_and_target::<f64, _>(&mut rng, n);
        for mode in [PinningMode::Full, PinningMode::LowerFace] {
            let s = random_outside_point::<f64, _>(&mut rng, &r, mode);
            let res = orthogonality_residual(&r, &t, &s, mode).unwrap();
            worst_residual = worst_residual.max(res);
            let ws = corner_weights(&r, &t, mode).unwrap();
            worst_weight_sum = worst_weight_sum.max((ws.weight_sum() - 1.0).abs());
            min_weight = min_weight.min(ws.weights.iter().copied().fold(f64::INFINITY, f64::min));
        }
    }
    criterion(
        1,
        "pinning orthogonality and convex weights",
        worst_residual <= 1e-12 && worst_weight_sum <= 1e-12 && min_weight >= 0.0,
        &format!(
            "max residual {worst_residual:.3e}, max |sum-1| {worst_weight_sum:.3e}, min weight {min_weight:.3e}"
        ),
    );
}

#[test]
fn acceptance_02_gaussian_oracle_equivalence() {
    let mut rng = RngStream::root(202);
    let mut worst = 0.0f64;
    for trial in 0..1_000 {
        let n = 1 + trial % 4;
        let (r, t) = random_box_and_target::<f64, _>(&mut rng, n);
        let corners: Vec<ParamPoint<f64>> = (0..r.corner_count()).map(|i| r.corner(i)).collect();
        let mut all = corners.clone();
        all.push(t.clone());
        let dim = all.len();
        let cov = CovMatrix::from_fn(dim, |i, j| sheet_covariance(&all[i], &all[j]).unwrap())
            .unwrap();
        let joint = GaussianVector::centered(cov);

        let sampler = ExactSampler::new(SheetSpec::new(n, 1).unwrap(), corners.clone()).unwrap();
        let sample = sampler.draw(&mut rng);
        let observed: Vec<f64> = (0..corners.len()).map(|i| sample.values[i]).collect();
        let idx: Vec<usize> = (0..corners.len()).collect();
        let cond = condition_gaussian(&joint, &idx, &observed).unwrap();

        let corner_values: Vec<Vec<f64>> = observed.iter().map(|&v| vec![v]).collect();
        let pinned = pinned_mean_full(&r, &t, &corner_values).unwrap();
        worst = worst.max((cond.mean[dim - 1] - pinned[0]).abs());
    }
    criterion(
        2,
        "corner interpolation equals Schur conditioning",
        worst <= 1e-10,
        &format!("max |oracle - closed form| = {worst:.3e} over 1000 instances"),
    );
}

#[test]
fn acceptance_03_girsanov_telescoping() {
    let mut rng = RngStream::root(303);
    let mut worst = 0.0f64;
    let mut below_level_exact = true;
    for trial in 0..1_000 {
        let axes = 1 + trial % 4;
        let count = 2 + trial % 3;
        let fam = DisjointBoxFamily::sample(axes, count, 2.0, &mut rng);
        let spec = DriftSpec::new(fam).unwrap();
        let fv = random_face_values(&spec, 1, &mut rng);
        let last = spec.last_box().clone();
        for _ in 0..100 {
            let t: Vec<f64> = (0..axes)
                .map(|a| {
                    last.lower()[a]
                        + (last.upper()[a] - last.lower()[a]) * f64::unit_uniform(&mut rng)
                })
                .collect();
            let t = ParamPoint::new(t).unwrap();
            let drift = spec.accumulated_drift(&t, &fv).unwrap();
            let mean = spec.pinned_face_mean(&t, &fv).unwrap();
            worst = worst.max((drift[0] - mean[0]).abs());
        }
        // Support: exactly zero at a random point below the level.
        let mut below: Vec<f64> = (0..axes).map(|_| 2.0 * f64::unit_uniform(&mut rng)).collect();
        below[axes - 1] = spec.level() * f64::unit_uniform(&mut rng);
        let below = ParamPoint::new(below).unwrap();
        let drift = spec.accumulated_drift(&below, &fv).unwrap();
        below_level_exact &= drift[0] == 0.0;
    }
    criterion(
        3,
        "accumulated drift telescopes to the pinned mean on the last box",
        worst <= 1e-12 && below_level_exact,
        &format!("max |drift - mean| = {worst:.3e}; drift below level exactly zero: {below_level_exact}"),
    );
}

#[test]
fn acceptance_04_decoupling_independence() {
    // N = 2, k = 2, d = 1; 1e5 seeded trials. Cross-covariance between the
    // decoupled field on the last box and the raw field on the first box
    // passes a zero test at 5 sigma for every node pair.
    let family = DisjointBoxFamily::new(
        vec![
            ParamBox::new(vec![0.5, 0.5], vec![0.8, 0.8]).unwrap(),
            ParamBox::new(vec![1.0, 1.2], vec![1.4, 1.6]).unwrap(),
        ],
        2.0,
    )
    .unwrap();
    let spec = DriftSpec::new(family).unwrap();
    let sheet_spec = SheetSpec::new(2, 1).unwrap();
    let grid = GridSpec::anchored(vec![2.0, 2.0], vec![20, 20]).unwrap();

    // Nodes of the last box (5x5) and the first box (4x4).
    let mut last_nodes = Vec::new();
    let mut first_nodes = Vec::new();
    for i in 0..=20usize {
        for j in 0..=20usize {
            let p = grid.node_coord(&[i, j]);
            let lin = grid.linear_index(&[i, j]);
            if spec.last_box().contains(&p) {
                last_nodes.push(lin);
            }
            if spec.family().boxes()[0].contains(&p) {
                first_nodes.push(lin);
            }
        }
    }
    assert!(last_nodes.len() >= 20 && first_nodes.len() >= 12);

    let trials = 100_000u64;
    let pairs = last_nodes.len() * first_nodes.len();
    let mut sums = vec![0.0f64; pairs];
    let mut sq_sums = vec![0.0f64; pairs];
    for trial in 0..trials {
        let mut rng = RngStream::substream(404, trial);
        let field = grid_sample(sheet_spec, &grid, &mut rng).unwrap();
        let hat = spec.decouple(&field).unwrap();
        let mut p = 0;
        for &u in &last_nodes {
            for &v in &first_nodes {
                let prod = hat.values[u] * field.values[v];
                sums[p] += prod;
                sq_sums[p] += prod * prod;
                p += 1;
            }
        }
    }
    let n = trials as f64;
    let mut worst_z = 0.0f64;
    for p in 0..pairs {
        let mean = sums[p] / n;
        let var = sq_sums[p] / n - mean * mean;
        let se = (var / n).sqrt();
        worst_z = worst_z.max((mean / se).abs());
    }
    criterion(
        4,
        "decoupled field uncorrelated with the first box",
        worst_z <= 5.0,
        &format!("max |z| = {worst_z:.2} over {pairs} node pairs, {trials} trials"),
    );
}

#[test]
fn acceptance_05_grid_vs_exact_sampler() {
    // 20 shared nodes; empirical covariance matrices agree entrywise within
    // 5 standard errors at 1e5 trials.
    let spec = SheetSpec::new(2, 1).unwrap();
    let grid = GridSpec::anchored(vec![1.0, 1.0], vec![5, 5]).unwrap();
    let mut shared: Vec<Vec<usize>> = Vec::new();
    'outer: for i in 1..=5usize {
        for j in 1..=5usize {
            shared.push(vec![i, j]);
            if shared.len() == 20 {
                break 'outer;
            }
        }
    }
    let points: Vec<ParamPoint<f64>> = shared.iter().map(|idx| grid.node_coord(idx)).collect();
    let exact = ExactSampler::new(spec, points.clone()).unwrap();

    let trials = 100_000u64;
    let m = points.len();
    let mut acc_g = vec![0.0f64; m * m];
    let mut acc_e = vec![0.0f64; m * m];
    for trial in 0..trials {
        let mut rng_g = RngStream::substream(505, trial);
        let f = grid_sample(spec, &grid, &mut rng_g).unwrap();
        let vals_g: Vec<f64> = shared
            .iter()
            .map(|idx| f.node_value(idx).unwrap()[0])
            .collect();
        let mut rng_e = RngStream::substream(606, trial);
        let e = exact.draw(&mut rng_e);
        for i in 0..m {
            for j in i..m {
                acc_g[i * m + j] += vals_g[i] * vals_g[j];
                acc_e[i * m + j] += e.values[i] * e.values[j];
            }
        }
    }
    let n = trials as f64;
    let mut worst_z = 0.0f64;
    for i in 0..m {
        for j in i..m {
            let truth_ii = sheet_covariance(&points[i], &points[i]).unwrap();
            let truth_jj = sheet_covariance(&points[j], &points[j]).unwrap();
            let truth_ij = sheet_covariance(&points[i], &points[j]).unwrap();
            let var = (truth_ii * truth_jj + truth_ij * truth_ij) / n;
            let se_combined: f64 = (2.0 * var).sqrt();
            let diff = acc_g[i * m + j] / n - acc_e[i * m + j] / n;
            worst_z = worst_z.max((diff / se_combined).abs());
        }
    }
    criterion(
        5,
        "grid and exact samplers agree on shared nodes",
        worst_z <= 5.0,
        &format!("max |z| = {worst_z:.2} over 210 covariance entries, {trials} trials"),
    );
}

#[test]
fn acceptance_06_density_lower_bound() {
    let mut results = Vec::new();
    for (axes, mult) in [(2usize, 2usize), (3, 3)] {
        let sc = SearchConfig {
            regime: RegimeConfig::new(axes, 1, mult).unwrap(),
            window: SearchWindow {
                lower: 0.1,
                upper: 2.0,
            },
            separation: 0.1,
            tolerance: 0.1,
            mode: SearchMode::SelfIntersections,
            constraint: CoordinateConstraint::Distinct,
        };
        let report = density_lower_bound(&sc, 10_000, 60_600 + axes as u64).unwrap();
        results.push((axes, mult, report));
    }
    let pass = results
        .iter()
        .all(|(_, _, r)| r.min_joint_det > 0.0 && r.min_increment_det > 0.0);
    let details = results
        .iter()
        .map(|(n, k, r)| {
            format!(
                "(N={n},k={k}): joint {:.3e}, increment {:.3e}",
                r.min_joint_det, r.min_increment_det
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    criterion(6, "separated-tuple determinants stay positive", pass, &details);
}

#[test]
fn acceptance_07_covering_exponent() {
    let mut details = Vec::new();
    let mut pass = true;
    for (k, n) in [(2usize, 1usize), (2, 2), (3, 2)] {
        let sc = SearchConfig {
            regime: RegimeConfig::new(n, 1, k).unwrap(),
            window: SearchWindow {
                lower: 1.0,
                upper: 2.0,
            },
            separation: 0.1,
            tolerance: 0.1,
            mode: SearchMode::SelfIntersections,
            constraint: CoordinateConstraint::Shared {
                first: 0,
                second: 1,
                axis: 0,
            },
        };
        let slope = covering_slope(&sc, 3, 7).unwrap();
        let want = 2.0 * (k * n - 1) as f64;
        pass &= (slope - want).abs() <= 0.1;
        details.push(format!("(k={k},N={n}): slope {slope:.4} vs {want}"));
    }
    // Critical arithmetic identity d(k-1) - 2(kN - 1) = 2 for all critical
    // triples with N <= 4.
    let triples = critical_triples(4, 64);
    assert!(!triples.is_empty());
    for cfg in &triples {
        let (n, d, k) = (
            cfg.param_dim as i64,
            cfg.value_dim as i64,
            cfg.multiplicity as i64,
        );
        pass &= d * (k - 1) - 2 * (k * n - 1) == 2;
        pass &= classify_regime(cfg).regime == Regime::Critical;
    }
    details.push(format!("{} critical triples verified", triples.len()));
    criterion(7, "covering slope and critical identity", pass, &details.join("; "));
}

#[test]
fn acceptance_08_capacity_refinement_behavior() {
    let d = 3usize;
    let cells_ladder = [3usize, 6, 12, 24];
    let opts = FrankWolfeOpts::default();

    let run = |beta: f64| -> Vec<f64> {
        cells_ladder
            .iter()
            .map(|&cells| {
                let cloud = SupportCloud::<f64>::unit_cube(d, cells);
                capacity_estimate(KernelOrder::new(beta), &cloud, &opts).capacity
            })
            .collect()
    };

    // beta = d: estimates must strictly decrease at every refinement.
    let at_d = run(d as f64);
    let strictly_decreasing = at_d.windows(2).all(|w| w[1] < w[0]);

    // beta = d - 1: successive estimates stabilize within 15%.
    let at_dm1 = run((d - 1) as f64);
    let stable = at_dm1
        .windows(2)
        .all(|w| (w[1] - w[0]).abs() <= 0.15 * w[0]);

    // beta < 0: capacity is exactly 1.
    let cloud = SupportCloud::<f64>::unit_cube(d, 6);
    let neg = capacity_estimate(KernelOrder::new(-1.0), &cloud, &opts).capacity;

    criterion(
        8,
        "capacity trends across grid refinements",
        strictly_decreasing && stable && (neg - 1.0).abs() <= 1e-10,
        &format!(
            "beta=d: {:?}; beta=d-1: {:?}; beta<0: {:.12}",
            at_d.iter().map(|c| (c * 1e4).round() / 1e4).collect::<Vec<_>>(),
            at_dm1.iter().map(|c| (c * 1e4).round() / 1e4).collect::<Vec<_>>(),
            neg
        ),
    );
}

#[test]
fn acceptance_09_phase_diagram_ordering() {
    let ladder = [0.2f64, 0.1, 0.05];
    let trials = 1_000usize;
    let mut pass = true;
    let mut details = Vec::new();
    for mode in [SearchMode::SelfIntersections, SearchMode::IndependentSheets] {
        let run = |value_dim: usize, seed: u64| {
            let sc = SearchConfig {
                regime: RegimeConfig::new(1, value_dim, 2).unwrap(),
                window: SearchWindow {
                    lower: 1.0,
                    upper: 2.0,
                },
                separation: 0.1,
                tolerance: ladder[0],
                mode,
                constraint: CoordinateConstraint::Distinct,
            };
            phase_probability(&sc, &ladder, trials, seed).unwrap()
        };
        let supercritical = run(5, 909);
        let subcritical = run(2, 910);
        assert_eq!(supercritical.regime.regime, Regime::Supercritical);
        assert_eq!(subcritical.regime.regime, Regime::Subcritical);
        for (sup, sub) in supercritical.rows.iter().zip(&subcritical.rows) {
            // Strictly below with non-overlapping Wilson intervals.
            pass &= sup.estimate < sub.estimate;
            pass &= sup.wilson_hi < sub.wilson_lo;
            details.push(format!(
                "{mode:?} eps {:.2}: super {:.3} [{:.3},{:.3}] < sub {:.3} [{:.3},{:.3}]",
                sup.tolerance,
                sup.estimate,
                sup.wilson_lo,
                sup.wilson_hi,
                sub.estimate,
                sub.wilson_lo,
                sub.wilson_hi
            ));
        }
    }
    criterion(
        9,
        "supercritical probabilities sit strictly below subcritical",
        pass,
        &details.join("; "),
    );
}

#[test]
fn acceptance_10_search_oracle() {
    // Bucketed search equals the O(G^2) brute-force scan on 50 seeded
    // instances with grids of at most 1000 nodes.
    let mut pass = true;
    let mut checked = 0usize;
    let mut total_hits = 0usize;
    for instance in 0..50u64 {
        let (axes, value_dim, separation, tolerance) = match instance % 4 {
            0 => (1usize, 1usize, 0.1, 0.25),
            1 => (1, 1, 0.15, 0.4),
            2 => (2, 1, 0.45, 0.6),
            _ => (1, 2, 0.12, 0.5),
        };
        let sc = SearchConfig {
            regime: RegimeConfig::new(axes, value_dim, 2).unwrap(),
            window: SearchWindow {
                lower: 1.0,
                upper: 2.0,
            },
            separation,
            tolerance,
            mode: SearchMode::SelfIntersections,
            constraint: CoordinateConstraint::Distinct,
        };
        let grid = sc.sampling_grid().unwrap();
        assert!(grid.node_total() <= 1000, "grid has {} nodes", grid.node_total());
        let spec = SheetSpec::new(axes, value_dim).unwrap();
        let mut rng = RngStream::substream(1010, instance);
        let field = grid_sample(spec, &grid, &mut rng).unwrap();

        let fast = find_near_multiples(std::slice::from_ref(&field), &sc).unwrap();
        let brute = brute_force_near_multiples(&[field], &sc).unwrap();
        pass &= fast == brute;
        for hit in &fast {
            pass &= tuple_admissible(&sc, &hit.points, &hit.values);
        }
        total_hits += fast.len();
        checked += 1;
    }
    criterion(
        10,
        "bucketed search set-equals brute force",
        pass,
        &format!("{checked} instances, {total_hits} total hits"),
    );
}

#[test]
fn acceptance_11_hitting_capacity_consistency() {
    // N = 1, d = 3, ball target: hitting probability over capacity stays
    // within a factor of 3 across two grid refinements.
    let spec = SheetSpec::new(1, 3).unwrap();
    let region = ParamBox::new(vec![1.0], vec![2.0]).unwrap();
    let ball = SupportCloud::ball(&[0.5, 0.0, 0.0], 1.0, 0.1);
    let trials = 2_000usize;
    let mut ratios = Vec::new();
    for nodes in [17usize, 33, 65] {
        let level = hitting_capacity_ratio(spec, &region, &ball, trials, nodes, 1111).unwrap();
        ratios.push((nodes, level.probability, level.ratio.unwrap()));
    }
    let rmin = ratios.iter().map(|r| r.2).fold(f64::INFINITY, f64::min);
    let rmax = ratios.iter().map(|r| r.2).fold(0.0, f64::max);
    criterion(
        11,
        "hitting probability tracks capacity across refinements",
        rmin > 0.0 && rmax / rmin <= 3.0,
        &format!(
            "ratios {:?}, max/min {:.3}",
            ratios
                .iter()
                .map(|(n, p, r)| format!("nodes {n}: p {p:.3}, ratio {r:.3}"))
                .collect::<Vec<_>>(),
            rmax / rmin
        ),
    );
}
