//! Experiment execution: each runner validates its configuration, produces
//! CSV result files, and reports contract violations by name.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sheetlab::capacity::{
    capacity_estimate, classify_regime, critical_triples, FrankWolfeOpts, KernelOrder, Regime,
    RegimeConfig, SupportCloud,
};
use sheetlab::gaussian::{condition_gaussian, CovMatrix, GaussianVector};
use sheetlab::girsanov::{random_face_values, DisjointBoxFamily, DriftSpec};
use sheetlab::multipoints::{
    brute_force_near_multiples, covering_count, covering_slope, density_lower_bound,
    find_near_multiples, hitting_capacity_ratio, phase_probability, CoordinateConstraint,
    SearchConfig, SearchMode, SearchWindow,
};
use sheetlab::pinning::{
    corner_weights, orthogonality_residual, pinned_mean_full, random_box_and_target,
    random_outside_point, ParamBox, PinningMode,
};
use sheetlab::rng::RngStream;
use sheetlab::sheet::{grid_sample, sheet_covariance, ExactSampler, GridSpec, ParamPoint, SheetSpec};

use crate::config::*;

/// Configuration or precondition problem: exit code 1.
#[derive(Debug)]
pub struct ValidationError(pub String);

impl<E: std::error::Error> From<E> for ValidationError {
    fn from(e: E) -> Self {
        ValidationError(e.to_string())
    }
}

/// What a run produced: output files plus any named contract violations
/// (exit code 2 when nonempty).
#[derive(Debug, Default)]
pub struct RunOutcome {
    pub files: Vec<PathBuf>,
    pub failures: Vec<String>,
}

struct CsvFile {
    path: PathBuf,
    buf: String,
}

impl CsvFile {
    fn new(dir: &Path, name: &str, header: &str) -> Self {
        let mut buf = String::new();
        buf.push_str(header);
        buf.push('\n');
        Self {
            path: dir.join(name),
            buf,
        }
    }

    fn row(&mut self, line: &str) {
        self.buf.push_str(line);
        self.buf.push('\n');
    }

    fn finish(self, outcome: &mut RunOutcome) -> Result<(), ValidationError> {
        fs::write(&self.path, self.buf.as_bytes())
            .map_err(|e| ValidationError(format!("cannot write {}: {e}", self.path.display())))?;
        outcome.files.push(self.path);
        Ok(())
    }
}

pub fn run(config: &ExperimentConfig, out_dir: &Path) -> Result<RunOutcome, ValidationError> {
    fs::create_dir_all(out_dir)
        .map_err(|e| ValidationError(format!("cannot create {}: {e}", out_dir.display())))?;
    match config {
        ExperimentConfig::VerifyPinning(c) => run_pinning(c, out_dir),
        ExperimentConfig::VerifyGirsanov(c) => run_girsanov(c, out_dir),
        ExperimentConfig::Covering(c) => run_covering(c, out_dir),
        ExperimentConfig::Density(c) => run_density(c, out_dir),
        ExperimentConfig::Capacity(c) => run_capacity(c, out_dir),
        ExperimentConfig::Phase(c) => run_phase(c, out_dir),
        ExperimentConfig::Hitting(c) => run_hitting(c, out_dir),
    }
}

fn mode_name(mode: PinningMode) -> &'static str {
    match mode {
        PinningMode::Full => "full",
        PinningMode::LowerFace => "lower-face",
    }
}

fn run_pinning(cfg: &PinningConfig, out: &Path) -> Result<RunOutcome, ValidationError> {
    if cfg.trials == 0 || cfg.max_axes == 0 {
        return Err(ValidationError(
            "verify-pinning requires trials >= 1 and max_axes >= 1".into(),
        ));
    }
    let mut outcome = RunOutcome::default();
    let mut csv = CsvFile::new(
        out,
        "pinning.csv",
        "trial,axes,mode,residual,weight_sum_error,min_weight",
    );
    let mut rng = RngStream::substream(cfg.seed, 0);
    let mut max_residual = 0.0f64;
    let mut max_sum_err = 0.0f64;
    let mut min_weight = f64::INFINITY;
    for trial in 0..cfg.trials {
        let axes = 1 + trial % cfg.max_axes;
        let (r, t) = random_box_and_target::<f64, _>(&mut rng, axes);
        for mode in [PinningMode::Full, PinningMode::LowerFace] {
            let s = random_outside_point::<f64, _>(&mut rng, &r, mode);
            let residual = orthogonality_residual(&r, &t, &s, mode)?;
            let ws = corner_weights(&r, &t, mode)?;
            let sum_err = (ws.weight_sum() - 1.0).abs();
            let w_min = ws.weights.iter().copied().fold(f64::INFINITY, f64::min);
            max_residual = max_residual.max(residual);
            max_sum_err = max_sum_err.max(sum_err);
            min_weight = min_weight.min(w_min);
            csv.row(&format!(
                "{trial},{axes},{},{residual:e},{sum_err:e},{w_min:e}",
                mode_name(mode)
            ));
        }
    }
    csv.finish(&mut outcome)?;
    if max_residual > 1e-12 {
        outcome.failures.push(format!(
            "orthogonality residual {max_residual:e} exceeds 1e-12"
        ));
    }
    if max_sum_err > 1e-12 {
        outcome
            .failures
            .push(format!("corner weight sums deviate by {max_sum_err:e} (> 1e-12)"));
    }
    if min_weight < 0.0 {
        outcome
            .failures
            .push(format!("negative corner weight {min_weight:e}"));
    }

    if cfg.oracle_instances > 0 {
        let mut csv = CsvFile::new(out, "oracle.csv", "instance,axes,abs_diff");
        let mut rng = RngStream::substream(cfg.seed, 1);
        let mut worst = 0.0f64;
        for instance in 0..cfg.oracle_instances {
            let axes = 1 + instance % cfg.oracle_max_axes.max(1);
            let (r, t) = random_box_and_target::<f64, _>(&mut rng, axes);
            let corners: Vec<ParamPoint<f64>> =
                (0..r.corner_count()).map(|i| r.corner(i)).collect();
            let mut all = corners.clone();
            all.push(t.clone());
            let dim = all.len();
            let cov =
                CovMatrix::from_fn(dim, |i, j| sheet_covariance(&all[i], &all[j]).unwrap())?;
            let joint = GaussianVector::centered(cov);
            let sampler = ExactSampler::new(SheetSpec::new(axes, 1)?, corners.clone())?;
            let sample = sampler.draw(&mut rng);
            let observed: Vec<f64> = (0..corners.len()).map(|i| sample.values[i]).collect();
            let idx: Vec<usize> = (0..corners.len()).collect();
            let cond = condition_gaussian(&joint, &idx, &observed)?;
            let corner_values: Vec<Vec<f64>> = observed.iter().map(|&v| vec![v]).collect();
            let pinned = pinned_mean_full(&r, &t, &corner_values)?;
            let diff = (cond.mean[dim - 1] - pinned[0]).abs();
            worst = worst.max(diff);
            csv.row(&format!("{instance},{axes},{diff:e}"));
        }
        csv.finish(&mut outcome)?;
        if worst > 1e-10 {
            outcome.failures.push(format!(
                "closed-form mean deviates from Schur conditioning by {worst:e} (> 1e-10)"
            ));
        }
    }

    if let Some(sampler_check) = &cfg.sampler_check {
        run_sampler_check(cfg.seed, sampler_check, out, &mut outcome)?;
    }
    Ok(outcome)
}

fn run_sampler_check(
    seed: u64,
    check: &SamplerCheck,
    out: &Path,
    outcome: &mut RunOutcome,
) -> Result<(), ValidationError> {
    if check.nodes == 0 || check.nodes > 25 || check.trials == 0 {
        return Err(ValidationError(
            "sampler_check requires 1..=25 nodes and trials >= 1".into(),
        ));
    }
    let spec = SheetSpec::new(2, 1)?;
    let grid = GridSpec::anchored(vec![1.0, 1.0], vec![5, 5])?;
    let mut shared: Vec<Vec<usize>> = Vec::new();
    'outer: for i in 1..=5usize {
        for j in 1..=5usize {
            shared.push(vec![i, j]);
            if shared.len() == check.nodes {
                break 'outer;
            }
        }
    }
    let points: Vec<ParamPoint<f64>> = shared.iter().map(|idx| grid.node_coord(idx)).collect();
    let exact = ExactSampler::new(spec, points.clone())?;
    let m = points.len();
    let trials = check.trials as u64;
    let mut acc_g = vec![0.0f64; m * m];
    let mut acc_e = vec![0.0f64; m * m];
    for trial in 0..trials {
        let mut rng_g = RngStream::substream(seed, 2_000_000 + trial);
        let f = grid_sample(spec, &grid, &mut rng_g)?;
        let vals: Vec<f64> = shared
            .iter()
            .map(|idx| f.node_value(idx).unwrap()[0])
            .collect();
        let mut rng_e = RngStream::substream(seed, 4_000_000 + trial);
        let e = exact.draw(&mut rng_e);
        for i in 0..m {
            for j in i..m {
                acc_g[i * m + j] += vals[i] * vals[j];
                acc_e[i * m + j] += e.values[i] * e.values[j];
            }
        }
    }
    let mut csv = CsvFile::new(out, "sampler.csv", "i,j,grid_cov,exact_cov,z");
    let n = trials as f64;
    let mut worst_z = 0.0f64;
    for i in 0..m {
        for j in i..m {
            let cii = sheet_covariance(&points[i], &points[i])?;
            let cjj = sheet_covariance(&points[j], &points[j])?;
            let cij = sheet_covariance(&points[i], &points[j])?;
            let var = (cii * cjj + cij * cij) / n;
            let se: f64 = (2.0 * var).sqrt();
            let g = acc_g[i * m + j] / n;
            let e = acc_e[i * m + j] / n;
            let z = (g - e) / se;
            worst_z = worst_z.max(z.abs());
            csv.row(&format!("{i},{j},{g:e},{e:e},{z:e}"));
        }
    }
    csv.finish(outcome)?;
    if worst_z > 5.0 {
        outcome.failures.push(format!(
            "grid and exact sampler covariances disagree at {worst_z:.2} standard errors (> 5)"
        ));
    }
    Ok(())
}

fn run_girsanov(cfg: &GirsanovConfig, out: &Path) -> Result<RunOutcome, ValidationError> {
    if cfg.families == 0 || cfg.max_axes == 0 || cfg.max_boxes < 2 || cfg.bound <= 1.0 {
        return Err(ValidationError(
            "verify-girsanov requires families >= 1, max_axes >= 1, max_boxes >= 2, bound > 1"
                .into(),
        ));
    }
    let mut outcome = RunOutcome::default();
    let mut csv = CsvFile::new(
        out,
        "telescoping.csv",
        "family,axes,boxes,max_residual,below_level_exact",
    );
    let mut rng = RngStream::substream(cfg.seed, 0);
    let mut worst = 0.0f64;
    let mut all_exact = true;
    for family in 0..cfg.families {
        let axes = 1 + family % cfg.max_axes;
        let count = 2 + family % (cfg.max_boxes - 1);
        let fam = DisjointBoxFamily::sample(axes, count, cfg.bound, &mut rng);
        let spec = DriftSpec::new(fam)?;
        let fv = random_face_values(&spec, 1, &mut rng);
        let last = spec.last_box().clone();
        let mut fam_worst = 0.0f64;
        for _ in 0..cfg.points_per_family {
            let t: Vec<f64> = (0..axes)
                .map(|a| {
                    last.lower()[a]
                        + (last.upper()[a] - last.lower()[a])
                            * <f64 as sheetlab::Scalar>::unit_uniform(&mut rng)
                })
                .collect();
            let t = ParamPoint::new(t)?;
            let drift = spec.accumulated_drift(&t, &fv)?;
            let mean = spec.pinned_face_mean(&t, &fv)?;
            fam_worst = fam_worst.max((drift[0] - mean[0]).abs());
        }
        let mut below: Vec<f64> = (0..axes)
            .map(|_| cfg.bound * <f64 as sheetlab::Scalar>::unit_uniform(&mut rng))
            .collect();
        below[axes - 1] = spec.level() * <f64 as sheetlab::Scalar>::unit_uniform(&mut rng);
        let below_drift = spec.accumulated_drift(&ParamPoint::new(below)?, &fv)?;
        let exact = below_drift[0] == 0.0;
        all_exact &= exact;
        worst = worst.max(fam_worst);
        csv.row(&format!("{family},{axes},{count},{fam_worst:e},{exact}"));
    }
    csv.finish(&mut outcome)?;
    if worst > 1e-12 {
        outcome
            .failures
            .push(format!("telescoping residual {worst:e} exceeds 1e-12"));
    }
    if !all_exact {
        outcome
            .failures
            .push("accumulated drift not exactly zero below the level".into());
    }

    if let Some(independence) = &cfg.independence {
        run_independence_check(cfg.seed, independence, out, &mut outcome)?;
    }
    Ok(outcome)
}

fn run_independence_check(
    seed: u64,
    check: &IndependenceCheck,
    out: &Path,
    outcome: &mut RunOutcome,
) -> Result<(), ValidationError> {
    if check.trials == 0 {
        return Err(ValidationError("independence check needs trials >= 1".into()));
    }
    // Fixed planar two-box family with a grid aligned to its face corners.
    let family = DisjointBoxFamily::new(
        vec![
            ParamBox::new(vec![0.5, 0.5], vec![0.8, 0.8])?,
            ParamBox::new(vec![1.0, 1.2], vec![1.4, 1.6])?,
        ],
        2.0,
    )?;
    let spec = DriftSpec::new(family)?;
    let sheet_spec = SheetSpec::new(2, 1)?;
    let grid = GridSpec::anchored(vec![2.0, 2.0], vec![20, 20])?;
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
    let pairs = last_nodes.len() * first_nodes.len();
    let mut sums = vec![0.0f64; pairs];
    let mut sq_sums = vec![0.0f64; pairs];
    for trial in 0..check.trials as u64 {
        let mut rng = RngStream::substream(seed, 1_000_000 + trial);
        let field = grid_sample(sheet_spec, &grid, &mut rng)?;
        let hat = spec.decouple(&field)?;
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
    let n = check.trials as f64;
    let mut csv = CsvFile::new(out, "independence.csv", "pair,mean,se,z");
    let mut worst_z = 0.0f64;
    for p in 0..pairs {
        let mean = sums[p] / n;
        let var = sq_sums[p] / n - mean * mean;
        let se = (var / n).sqrt();
        let z = mean / se;
        worst_z = worst_z.max(z.abs());
        csv.row(&format!("{p},{mean:e},{se:e},{z:e}"));
    }
    csv.finish(outcome)?;
    if worst_z > 5.0 {
        outcome.failures.push(format!(
            "decoupled/raw cross-covariance fails the zero test at {worst_z:.2} sigma (> 5)"
        ));
    }
    Ok(())
}

fn shared_search_config(
    axes: usize,
    multiplicity: usize,
    delta: f64,
    upper: f64,
) -> Result<SearchConfig<f64>, ValidationError> {
    let sc = SearchConfig {
        regime: RegimeConfig::new(axes, 1, multiplicity)?,
        window: SearchWindow {
            lower: (delta).min(upper / 2.0).max(f64::MIN_POSITIVE),
            upper,
        },
        separation: delta,
        tolerance: delta,
        mode: SearchMode::SelfIntersections,
        constraint: CoordinateConstraint::Shared {
            first: 0,
            second: 1,
            axis: 0,
        },
    };
    sc.validate().map_err(|e| ValidationError(e.to_string()))?;
    Ok(sc)
}

fn run_covering(cfg: &CoveringConfig, out: &Path) -> Result<RunOutcome, ValidationError> {
    if cfg.cases.is_empty() || cfg.n_lo >= cfg.n_hi {
        return Err(ValidationError(
            "covering requires at least one case and n_lo < n_hi".into(),
        ));
    }
    let mut outcome = RunOutcome::default();
    let mut counts = CsvFile::new(out, "covering.csv", "k,N,n,log2_boxes,boxes");
    let mut slopes = CsvFile::new(out, "slopes.csv", "k,N,slope,expected,within_tolerance");
    for case in &cfg.cases {
        let sc = shared_search_config(case.axes, case.multiplicity, cfg.delta, cfg.upper)?;
        for n in cfg.n_lo..=cfg.n_hi {
            let c = covering_count(n, &sc)?;
            let exact = c
                .boxes
                .map(|b| b.to_string())
                .unwrap_or_else(|| "overflow".into());
            counts.row(&format!(
                "{},{},{n},{},{exact}",
                case.multiplicity, case.axes, c.log2_boxes
            ));
        }
        let slope = covering_slope(&sc, cfg.n_lo, cfg.n_hi)?;
        let expected = 2.0 * (case.multiplicity * case.axes - 1) as f64;
        let ok = (slope - expected).abs() <= cfg.slope_tolerance;
        slopes.row(&format!(
            "{},{},{slope},{expected},{ok}",
            case.multiplicity, case.axes
        ));
        if !ok {
            outcome.failures.push(format!(
                "covering slope {slope:.4} for (k={}, N={}) outside {expected} +/- {}",
                case.multiplicity, case.axes, cfg.slope_tolerance
            ));
        }
    }
    counts.finish(&mut outcome)?;
    slopes.finish(&mut outcome)?;

    let mut identity = CsvFile::new(out, "identity.csv", "N,d,k,exponent_identity,regime");
    let triples = critical_triples(cfg.identity_max_axes, 64);
    for t in &triples {
        let (n, d, k) = (
            t.param_dim as i64,
            t.value_dim as i64,
            t.multiplicity as i64,
        );
        let lhs = d * (k - 1) - 2 * (k * n - 1);
        let regime = classify_regime(t).regime;
        identity.row(&format!("{n},{d},{k},{lhs},{regime}"));
        if lhs != 2 || regime != Regime::Critical {
            outcome.failures.push(format!(
                "critical triple (N={n}, d={d}, k={k}) violates the exponent identity"
            ));
        }
    }
    identity.finish(&mut outcome)?;
    Ok(outcome)
}

fn run_density(cfg: &DensityConfig, out: &Path) -> Result<RunOutcome, ValidationError> {
    if cfg.cases.is_empty() || cfg.trials == 0 {
        return Err(ValidationError(
            "density requires at least one case and trials >= 1".into(),
        ));
    }
    let mut outcome = RunOutcome::default();
    let mut csv = CsvFile::new(
        out,
        "density.csv",
        "N,k,trials,min_joint_det,min_increment_det",
    );
    for (i, case) in cfg.cases.iter().enumerate() {
        let sc = SearchConfig {
            regime: RegimeConfig::new(case.axes, 1, case.multiplicity)?,
            window: SearchWindow {
                lower: cfg.delta,
                upper: cfg.upper,
            },
            separation: cfg.delta,
            tolerance: cfg.delta,
            mode: SearchMode::SelfIntersections,
            constraint: CoordinateConstraint::Distinct,
        };
        sc.validate().map_err(|e| ValidationError(e.to_string()))?;
        let report = density_lower_bound(&sc, cfg.trials, cfg.seed.wrapping_add(i as u64))?;
        csv.row(&format!(
            "{},{},{},{:e},{:e}",
            case.axes,
            case.multiplicity,
            report.trials,
            report.min_joint_det,
            report.min_increment_det
        ));
        if report.min_joint_det <= 0.0 || report.min_increment_det <= 0.0 {
            outcome.failures.push(format!(
                "determinant lower bound not positive for (N={}, k={})",
                case.axes, case.multiplicity
            ));
        }
    }
    csv.finish(&mut outcome)?;
    Ok(outcome)
}

fn run_capacity(cfg: &CapacityConfig, out: &Path) -> Result<RunOutcome, ValidationError> {
    if cfg.dim == 0 || cfg.cells_ladder.len() < 2 {
        return Err(ValidationError(
            "capacity requires dim >= 1 and a ladder of at least two resolutions".into(),
        ));
    }
    let mut outcome = RunOutcome::default();
    let mut csv = CsvFile::new(
        out,
        "capacity.csv",
        "beta,cells,h,atoms,energy,capacity,relative_gap,iterations",
    );
    let opts = FrankWolfeOpts::default();
    let run_beta = |beta: f64, csv: &mut CsvFile| -> Vec<f64> {
        cfg.cells_ladder
            .iter()
            .map(|&cells| {
                let cloud = SupportCloud::<f64>::unit_cube(cfg.dim, cells);
                let est = capacity_estimate(KernelOrder::new(beta), &cloud, &opts);
                csv.row(&format!(
                    "{beta},{cells},{},{},{:e},{:e},{:e},{}",
                    1.0 / cells as f64,
                    cloud.len(),
                    est.energy,
                    est.capacity,
                    est.relative_gap,
                    est.iterations
                ));
                est.capacity
            })
            .collect()
    };
    let at_d = run_beta(cfg.dim as f64, &mut csv);
    let at_dm1 = run_beta(cfg.dim as f64 - 1.0, &mut csv);
    let neg = run_beta(-1.0, &mut csv);
    csv.finish(&mut outcome)?;

    if cfg.check_trends {
        if !at_d.windows(2).all(|w| w[1] < w[0]) {
            outcome.failures.push(format!(
                "capacity at beta = d not strictly decreasing across refinements: {at_d:?}"
            ));
        }
        if !at_dm1
            .windows(2)
            .all(|w| (w[1] - w[0]).abs() <= cfg.stability_tolerance * w[0])
        {
            outcome.failures.push(format!(
                "capacity at beta = d-1 not stable within {}: {at_dm1:?}",
                cfg.stability_tolerance
            ));
        }
        if neg.iter().any(|c| (c - 1.0).abs() > 1e-10) {
            outcome.failures.push(format!(
                "capacity at beta < 0 deviates from 1: {neg:?}"
            ));
        }
    }
    Ok(outcome)
}

fn phase_search_config(
    cfg: &PhaseConfig,
    case: &RegimeCase,
    mode: PhaseMode,
    eps: f64,
) -> Result<SearchConfig<f64>, ValidationError> {
    let sc = SearchConfig {
        regime: RegimeConfig::new(case.axes, case.value_dim, case.multiplicity)?,
        window: SearchWindow {
            lower: cfg.window[0],
            upper: cfg.window[1],
        },
        separation: cfg.delta,
        tolerance: eps,
        mode: match mode {
            PhaseMode::SelfIntersections => SearchMode::SelfIntersections,
            PhaseMode::IndependentSheets => SearchMode::IndependentSheets,
        },
        constraint: CoordinateConstraint::Distinct,
    };
    sc.validate().map_err(|e| ValidationError(e.to_string()))?;
    Ok(sc)
}

fn run_phase(cfg: &PhaseConfig, out: &Path) -> Result<RunOutcome, ValidationError> {
    if cfg.regimes.is_empty() || cfg.modes.is_empty() || cfg.eps_ladder.is_empty() {
        return Err(ValidationError(
            "phase requires at least one regime, one mode, and a tolerance ladder".into(),
        ));
    }
    if !cfg.eps_ladder.windows(2).all(|w| w[1] < w[0]) {
        return Err(ValidationError(
            "phase eps_ladder must be strictly decreasing".into(),
        ));
    }
    let mut outcome = RunOutcome::default();
    let mut csv = CsvFile::new(
        out,
        "phase.csv",
        "N,d,k,regime,eps,trials,hits,estimate,wilson_lo,wilson_hi,seed",
    );
    // reports[mode][regime]
    let mut reports = Vec::new();
    let mut run_index = 0u64;
    for mode in &cfg.modes {
        let mut per_mode = Vec::new();
        for case in &cfg.regimes {
            let sc = phase_search_config(cfg, case, *mode, cfg.eps_ladder[0])?;
            let run_seed = cfg.seed.wrapping_add(run_index);
            run_index += 1;
            let report = phase_probability(&sc, &cfg.eps_ladder, cfg.trials, run_seed)?;
            for row in &report.rows {
                csv.row(&format!(
                    "{},{},{},{},{},{},{},{},{},{},{}",
                    case.axes,
                    case.value_dim,
                    case.multiplicity,
                    report.regime.regime,
                    row.tolerance,
                    row.trials,
                    row.hits,
                    row.estimate,
                    row.wilson_lo,
                    row.wilson_hi,
                    run_seed
                ));
            }
            // Monotone in the ladder by construction; verify anyway.
            if !report
                .rows
                .windows(2)
                .all(|w| w[1].estimate <= w[0].estimate)
            {
                outcome.failures.push(format!(
                    "phase estimates not monotone in the tolerance ladder for (N={}, d={}, k={})",
                    case.axes, case.value_dim, case.multiplicity
                ));
            }
            per_mode.push((case, report));
        }
        reports.push((*mode, per_mode));
    }
    csv.finish(&mut outcome)?;

    if cfg.ordering_check {
        for (mode, per_mode) in &reports {
            for (ca, ra) in per_mode {
                for (cb, rb) in per_mode {
                    let ga = ra.regime.gap;
                    let gb = rb.regime.gap;
                    if !(ga > 0 && gb < 0) {
                        continue; // strict check only for super vs sub
                    }
                    for (rowa, rowb) in ra.rows.iter().zip(&rb.rows) {
                        if !(rowa.estimate < rowb.estimate && rowa.wilson_hi < rowb.wilson_lo) {
                            outcome.failures.push(format!(
                                "{mode:?}: supercritical (N={},d={},k={}) not strictly below subcritical (N={},d={},k={}) at eps {}",
                                ca.axes, ca.value_dim, ca.multiplicity,
                                cb.axes, cb.value_dim, cb.multiplicity,
                                rowa.tolerance
                            ));
                        }
                    }
                }
            }
        }
    }

    if cfg.oracle_check {
        run_phase_oracle(cfg, out, &mut outcome)?;
    }
    Ok(outcome)
}

fn run_phase_oracle(
    cfg: &PhaseConfig,
    out: &Path,
    outcome: &mut RunOutcome,
) -> Result<(), ValidationError> {
    let mut csv = CsvFile::new(out, "search_oracle.csv", "instance,mode,hits,agree");
    let case = &cfg.regimes[0];
    for mode in &cfg.modes {
        let sc = phase_search_config(cfg, case, *mode, cfg.eps_ladder[0])?;
        let grid = sc.sampling_grid()?;
        if grid.node_total() > 1000 {
            return Err(ValidationError(format!(
                "oracle_check needs grids of at most 1000 nodes, got {}",
                grid.node_total()
            )));
        }
        let spec = SheetSpec::new(case.axes, case.value_dim)?;
        let field_count = match mode {
            PhaseMode::SelfIntersections => 1,
            PhaseMode::IndependentSheets => case.multiplicity,
        };
        for instance in 0..cfg.trials as u64 {
            let mut rng = RngStream::substream(cfg.seed, 3_000_000 + instance);
            let fields: Vec<_> = (0..field_count)
                .map(|_| grid_sample(spec, &grid, &mut rng))
                .collect::<Result<_, _>>()?;
            let fast = find_near_multiples(&fields, &sc)?;
            let brute = brute_force_near_multiples(&fields, &sc)?;
            let agree = fast == brute;
            csv.row(&format!("{instance},{mode:?},{},{agree}", fast.len()));
            if !agree {
                outcome.failures.push(format!(
                    "bucketed search disagrees with brute force on instance {instance} ({mode:?})"
                ));
            }
        }
    }
    csv.finish(outcome)?;
    Ok(())
}

fn run_hitting(cfg: &HittingConfig, out: &Path) -> Result<RunOutcome, ValidationError> {
    if cfg.nodes_ladder.len() < 2 || cfg.trials == 0 {
        return Err(ValidationError(
            "hitting requires a node ladder of at least two levels and trials >= 1".into(),
        ));
    }
    if cfg.ball_center.len() != cfg.value_dim {
        return Err(ValidationError(format!(
            "ball_center has {} coordinates, expected d = {}",
            cfg.ball_center.len(),
            cfg.value_dim
        )));
    }
    if cfg.value_dim <= 2 * cfg.axes {
        return Err(ValidationError(
            "hitting requires d > 2N so the capacity order is positive".into(),
        ));
    }
    let mut outcome = RunOutcome::default();
    let spec = SheetSpec::new(cfg.axes, cfg.value_dim)?;
    let region = ParamBox::new(vec![cfg.region[0]; cfg.axes], vec![cfg.region[1]; cfg.axes])?;
    let target = SupportCloud::ball(&cfg.ball_center, cfg.ball_radius, cfg.target_h);
    let mut csv = CsvFile::new(
        out,
        "hitting.csv",
        "nodes,trials,hits,probability,capacity,ratio",
    );
    let mut ratios = Vec::new();
    for &nodes in &cfg.nodes_ladder {
        let level = hitting_capacity_ratio(spec, &region, &target, cfg.trials, nodes, cfg.seed)?;
        let ratio_str = level
            .ratio
            .map(|r| r.to_string())
            .unwrap_or_else(|| "nan".into());
        csv.row(&format!(
            "{nodes},{},{},{},{:e},{ratio_str}",
            level.trials, level.hits, level.probability, level.capacity
        ));
        if let Some(r) = level.ratio {
            ratios.push(r);
        }
    }
    csv.finish(&mut outcome)?;
    let rmin = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let rmax = ratios.iter().copied().fold(0.0f64, f64::max);
    if ratios.len() != cfg.nodes_ladder.len() || rmin <= 0.0 || rmax / rmin > cfg.stability_factor {
        outcome.failures.push(format!(
            "hitting/capacity ratio unstable: min {rmin}, max {rmax}, allowed factor {}",
            cfg.stability_factor
        ));
    }
    Ok(outcome)
}

/// Renders the descriptor table for `--list`.
pub fn render_list(kind_filter: Option<&str>, json: bool) -> Result<String, ValidationError> {
    let all = descriptors();
    let selected: Vec<_> = match kind_filter {
        Some(k) => {
            let hit: Vec<_> = all.into_iter().filter(|d| d.kind == k).collect();
            if hit.is_empty() {
                return Err(ValidationError(format!("unknown experiment kind `{k}`")));
            }
            hit
        }
        None => all,
    };
    if json {
        return Ok(serde_json::to_string_pretty(&selected).expect("descriptors serialize"));
    }
    let mut out = String::new();
    writeln!(out, "{:<16} {:<12} SUMMARY", "KIND", "CRITERIA").unwrap();
    for d in &selected {
        let criteria = d
            .backs_criteria
            .iter()
            .map(|c| c.to_string())
            .collect::<Vec<_>>()
            .join(",");
        writeln!(out, "{:<16} {:<12} {}", d.kind, criteria, d.summary).unwrap();
        writeln!(out, "{:<16} {:<12}   parameters: {}", "", "", d.parameters).unwrap();
    }
    Ok(out)
}
