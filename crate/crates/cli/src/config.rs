//! Experiment configuration files: one JSON document per run, strictly
//! validated (unknown fields are rejected).

use serde::{Deserialize, Serialize};

/// Tagged union of every experiment kind the harness can run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ExperimentConfig {
    VerifyPinning(PinningConfig),
    VerifyGirsanov(GirsanovConfig),
    Covering(CoveringConfig),
    Density(DensityConfig),
    Capacity(CapacityConfig),
    Phase(PhaseConfig),
    Hitting(HittingConfig),
}

impl ExperimentConfig {
    pub fn kind(&self) -> &'static str {
        match self {
            ExperimentConfig::VerifyPinning(_) => "verify-pinning",
            ExperimentConfig::VerifyGirsanov(_) => "verify-girsanov",
            ExperimentConfig::Covering(_) => "covering",
            ExperimentConfig::Density(_) => "density",
            ExperimentConfig::Capacity(_) => "capacity",
            ExperimentConfig::Phase(_) => "phase",
            ExperimentConfig::Hitting(_) => "hitting",
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            ExperimentConfig::VerifyPinning(c) => c.seed,
            ExperimentConfig::VerifyGirsanov(c) => c.seed,
            ExperimentConfig::Covering(c) => c.seed,
            ExperimentConfig::Density(c) => c.seed,
            ExperimentConfig::Capacity(c) => c.seed,
            ExperimentConfig::Phase(c) => c.seed,
            ExperimentConfig::Hitting(c) => c.seed,
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        match self {
            ExperimentConfig::VerifyPinning(c) => c.seed = seed,
            ExperimentConfig::VerifyGirsanov(c) => c.seed = seed,
            ExperimentConfig::Covering(c) => c.seed = seed,
            ExperimentConfig::Density(c) => c.seed = seed,
            ExperimentConfig::Capacity(c) => c.seed = seed,
            ExperimentConfig::Phase(c) => c.seed = seed,
            ExperimentConfig::Hitting(c) => c.seed = seed,
        }
    }
}

fn default_true() -> bool {
    true
}

/// Orthogonality, weight, oracle-equivalence, and sampler-agreement checks.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PinningConfig {
    pub seed: u64,
    /// Random (box, target, outside point) triples per mode.
    pub trials: usize,
    /// Boxes are drawn with 1..=max_axes parameter axes.
    pub max_axes: usize,
    /// Instances of the closed-form vs Schur-conditioning comparison; zero
    /// disables the check.
    #[serde(default)]
    pub oracle_instances: usize,
    #[serde(default = "default_oracle_axes")]
    pub oracle_max_axes: usize,
    /// Grid-vs-exact sampler agreement on shared nodes.
    #[serde(default)]
    pub sampler_check: Option<SamplerCheck>,
}

fn default_oracle_axes() -> usize {
    4
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerCheck {
    pub trials: usize,
    /// Shared nodes compared entrywise (at most 25 on the built-in grid).
    pub nodes: usize,
}

/// Telescoping identity sweep plus the optional decoupling-independence
/// Monte Carlo.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GirsanovConfig {
    pub seed: u64,
    pub families: usize,
    pub max_axes: usize,
    pub max_boxes: usize,
    pub points_per_family: usize,
    pub bound: f64,
    #[serde(default)]
    pub independence: Option<IndependenceCheck>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndependenceCheck {
    pub trials: usize,
}

/// Dyadic covering counts, slopes, and the critical arithmetic identity.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoveringConfig {
    pub seed: u64,
    pub cases: Vec<CoveringCase>,
    pub n_lo: u32,
    pub n_hi: u32,
    pub delta: f64,
    pub upper: f64,
    pub slope_tolerance: f64,
    /// Critical triples with up to this many axes are checked for the
    /// exponent identity.
    #[serde(default = "default_identity_axes")]
    pub identity_max_axes: usize,
}

fn default_identity_axes() -> usize {
    4
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoveringCase {
    #[serde(rename = "k")]
    pub multiplicity: usize,
    #[serde(rename = "N")]
    pub axes: usize,
}

/// Minimum covariance determinants over separated tuples.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityConfig {
    pub seed: u64,
    pub cases: Vec<DensityCase>,
    pub delta: f64,
    pub upper: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityCase {
    #[serde(rename = "N")]
    pub axes: usize,
    #[serde(rename = "k")]
    pub multiplicity: usize,
}

/// Capacity refinement trends on the unit cube.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapacityConfig {
    pub seed: u64,
    pub dim: usize,
    /// Cells per axis at each refinement level (cell width is the inverse).
    pub cells_ladder: Vec<usize>,
    /// Relative tolerance of the beta = d - 1 stabilization check.
    pub stability_tolerance: f64,
    #[serde(default = "default_true")]
    pub check_trends: bool,
}

/// Near-multiple-point phase probabilities, with optional regime-ordering
/// and brute-force-oracle checks.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseConfig {
    pub seed: u64,
    pub regimes: Vec<RegimeCase>,
    pub window: [f64; 2],
    pub delta: f64,
    pub eps_ladder: Vec<f64>,
    pub trials: usize,
    pub modes: Vec<PhaseMode>,
    /// When two or more regimes are listed, verify that estimates are
    /// ordered by regime gap with non-overlapping Wilson intervals.
    #[serde(default)]
    pub ordering_check: bool,
    /// Re-run every trial's search against the brute-force scan.
    #[serde(default)]
    pub oracle_check: bool,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegimeCase {
    #[serde(rename = "N")]
    pub axes: usize,
    #[serde(rename = "d")]
    pub value_dim: usize,
    #[serde(rename = "k")]
    pub multiplicity: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseMode {
    SelfIntersections,
    IndependentSheets,
}

/// Hitting probability against capacity across grid refinements.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HittingConfig {
    pub seed: u64,
    #[serde(rename = "N")]
    pub axes: usize,
    #[serde(rename = "d")]
    pub value_dim: usize,
    pub region: [f64; 2],
    pub ball_center: Vec<f64>,
    pub ball_radius: f64,
    pub target_h: f64,
    pub nodes_ladder: Vec<usize>,
    pub trials: usize,
    pub stability_factor: f64,
}

/// Descriptor used by `--list`.
#[derive(Debug, Serialize)]
pub struct KindDescriptor {
    pub kind: &'static str,
    pub summary: &'static str,
    pub parameters: &'static str,
    pub backs_criteria: &'static [u32],
}

pub fn descriptors() -> Vec<KindDescriptor> {
    vec![
        KindDescriptor {
            kind: "verify-pinning",
            summary: "corner-weight orthogonality, Schur-oracle equivalence, sampler agreement",
            parameters: "seed, trials, max_axes, oracle_instances, oracle_max_axes, sampler_check{trials, nodes}",
            backs_criteria: &[1, 2, 5],
        },
        KindDescriptor {
            kind: "verify-girsanov",
            summary: "drift telescoping identity and decoupling independence",
            parameters: "seed, families, max_axes, max_boxes, points_per_family, bound, independence{trials}",
            backs_criteria: &[3, 4],
        },
        KindDescriptor {
            kind: "covering",
            summary: "dyadic covering counts, log2 slopes, critical exponent identity",
            parameters: "seed, cases[{k, N}], n_lo, n_hi, delta, upper, slope_tolerance, identity_max_axes",
            backs_criteria: &[7],
        },
        KindDescriptor {
            kind: "density",
            summary: "minimum joint/increment covariance determinants over separated tuples",
            parameters: "seed, cases[{N, k}], delta, upper, trials",
            backs_criteria: &[6],
        },
        KindDescriptor {
            kind: "capacity",
            summary: "capacity refinement trends on the unit cube",
            parameters: "seed, dim, cells_ladder, stability_tolerance, check_trends",
            backs_criteria: &[8],
        },
        KindDescriptor {
            kind: "phase",
            summary: "near-multiple-point probabilities with Wilson intervals",
            parameters: "seed, regimes[{N, d, k}], window, delta, eps_ladder, trials, modes, ordering_check, oracle_check",
            backs_criteria: &[9, 10],
        },
        KindDescriptor {
            kind: "hitting",
            summary: "hitting probability versus capacity across grid refinements",
            parameters: "seed, N, d, region, ball_center, ball_radius, target_h, nodes_ladder, trials, stability_factor",
            backs_criteria: &[11],
        },
    ]
}
