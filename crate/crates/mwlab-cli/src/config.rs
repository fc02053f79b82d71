//! TOML experiment configs and their mapping onto core objects.
//!
//! Configs are flat key-value files with one section per ingredient:
//! `[weight]`, `[space]`, `[window]`, `[quadrature]`, plus command-specific
//! top-level keys. Unknown keys are rejected, and builders validate the
//! semantic constraints eagerly so a bad config fails with a message naming
//! the offending key before any computation starts.

use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use mwlab_core::adop::{margin_kernel, thresholds, AdKernel};
use mwlab_core::dyadic::{CubeIndex, CubeWindow};
use mwlab_core::seqspaces::{Exponent, Family, Weighting};
use mwlab_core::weights::{ReducingMethod, Scheme};
use mwlab_core::{Matrix, MatrixWeight, Quadrature, ReducingFamily, SpaceParams};

fn default_radius() -> i64 {
    1
}

fn default_one() -> usize {
    1
}

fn default_fill() -> f64 {
    0.5
}

fn default_method() -> String {
    "gram2".into()
}

fn default_source() -> String {
    "random".into()
}

fn default_weighting() -> String {
    "averaged".into()
}

fn default_grid_depth() -> u32 {
    3
}

fn default_alpha() -> f64 {
    2.0
}

fn default_decay() -> f64 {
    2.0
}

fn default_points() -> String {
    "corners".into()
}

fn default_k_max() -> u64 {
    65536
}

fn default_count() -> usize {
    16
}

fn default_trials() -> usize {
    100
}

fn default_sample_trials() -> usize {
    5
}

fn default_modes() -> usize {
    8
}

fn default_depths() -> Vec<u32> {
    vec![2, 3, 4, 5, 6]
}

/// `[weight]` section.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightSection {
    /// One of "identity", "power", "anisotropic", "conjugated".
    pub kind: String,
    pub n: usize,
    pub m: Option<usize>,
    /// Power exponent (kind = "power").
    pub d: Option<f64>,
    /// Axis exponents (kind = "anisotropic") or diagonal exponents
    /// (kind = "conjugated").
    pub a: Option<Vec<f64>>,
    /// Rotation angle of the 2x2 conjugating unitary (kind = "conjugated").
    pub angle: Option<f64>,
}

impl WeightSection {
    pub fn build(&self) -> Result<MatrixWeight> {
        let m = self.m.unwrap_or(1);
        let w = match self.kind.as_str() {
            "identity" => MatrixWeight::identity(self.n, m),
            "power" => {
                let d = self.d.context("weight.d is required for kind = \"power\"")?;
                MatrixWeight::power_isotropic(self.n, m, d)
            }
            "anisotropic" => {
                let a = self
                    .a
                    .clone()
                    .context("weight.a is required for kind = \"anisotropic\"")?;
                MatrixWeight::anisotropic_product(self.n, m, a)
            }
            "conjugated" => {
                let a = self
                    .a
                    .clone()
                    .context("weight.a is required for kind = \"conjugated\"")?;
                if a.len() != 2 {
                    bail!("weight.a must hold exactly two exponents for kind = \"conjugated\"");
                }
                if self.m.is_some_and(|mv| mv != a.len()) {
                    bail!("weight.m must match the length of weight.a for kind = \"conjugated\"");
                }
                let angle = self
                    .angle
                    .context("weight.angle is required for kind = \"conjugated\"")?;
                let (sin, cos) = angle.sin_cos();
                let u = Matrix::from_real_rows(&[&[cos, -sin], &[sin, cos]]);
                MatrixWeight::conjugated_diagonal(self.n, a, u)
            }
            other => bail!(
                "weight.kind \"{other}\" is not one of identity, power, anisotropic, conjugated"
            ),
        };
        w.with_context(|| format!("weight section (kind = \"{}\")", self.kind))
    }
}

/// `[window]` section. The spatial dimension comes from the weight or an
/// explicit top-level `n`, never from the window itself.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSection {
    pub j_min: i32,
    pub j_max: i32,
    #[serde(default = "default_radius")]
    pub radius: i64,
    /// Allow negative levels (two-sided scale window).
    #[serde(default)]
    pub homogeneous: bool,
}

impl WindowSection {
    pub fn build(&self, n: usize) -> Result<CubeWindow> {
        CubeWindow::new(n, self.j_min, self.j_max, self.radius, !self.homogeneous)
            .context("window section")
    }
}

/// `[quadrature]` section. Defaults match the tolerances the reports quote:
/// Gauss-Legendre order 3, refinement 2, ten singular layers.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadSection {
    pub scheme: Option<String>,
    pub order: Option<u8>,
    pub refinement: Option<u32>,
    pub singular_layers: Option<u32>,
}

impl Default for QuadSection {
    fn default() -> Self {
        Self { scheme: None, order: None, refinement: None, singular_layers: None }
    }
}

impl QuadSection {
    pub fn build(&self) -> Result<Quadrature> {
        let scheme = match self.scheme.as_deref().unwrap_or("gauss") {
            "gauss" => Scheme::Gauss(self.order.unwrap_or(3)),
            "midpoint" => Scheme::Midpoint,
            other => bail!("quadrature.scheme \"{other}\" is not \"gauss\" or \"midpoint\""),
        };
        Quadrature::new(scheme, self.refinement.unwrap_or(2), self.singular_layers.unwrap_or(10))
            .context("quadrature section")
    }
}

/// Finite number or the string "inf" (the `q` slot of a space).
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum QValue {
    Number(f64),
    Word(String),
}

/// `[space]` section.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceSection {
    /// "B" or "F".
    pub family: String,
    pub s: f64,
    #[serde(default)]
    pub tau: f64,
    pub p: f64,
    pub q: QValue,
    #[serde(default)]
    pub homogeneous: bool,
}

impl SpaceSection {
    pub fn build(&self) -> Result<SpaceParams> {
        let family = match self.family.as_str() {
            "B" | "b" => Family::B,
            "F" | "f" => Family::F,
            other => bail!("space.family \"{other}\" is not \"B\" or \"F\""),
        };
        let q = match &self.q {
            QValue::Number(v) => Exponent::Finite(*v),
            QValue::Word(w) if w == "inf" => Exponent::Infinite,
            QValue::Word(w) => bail!("space.q \"{w}\" is not a number or \"inf\""),
        };
        SpaceParams::new(family, self.s, self.tau, self.p, q, self.homogeneous)
            .context("space section")
    }
}

/// `[cube]` section (a single dyadic cube).
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CubeSection {
    pub j: i32,
    pub k: Vec<i64>,
}

impl CubeSection {
    pub fn build(&self) -> Result<CubeIndex> {
        CubeIndex::new(self.j, &self.k).context("cube section")
    }
}

/// `[kernel]` section: explicit almost-diagonal decay exponents.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    pub d: f64,
    pub e: f64,
    pub f: f64,
}

/// `[field]` section: where a coefficient field comes from.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSection {
    /// "random" or "file".
    #[serde(default = "default_source")]
    pub source: String,
    pub path: Option<String>,
    #[serde(default = "default_one")]
    pub m: usize,
    /// Fill density for random fields, in [0, 1].
    #[serde(default = "default_fill")]
    pub fill: f64,
}

pub fn parse_method(s: &str) -> Result<ReducingMethod> {
    match s {
        "gram2" => Ok(ReducingMethod::Gram2),
        "john" => Ok(ReducingMethod::John),
        other => bail!("method \"{other}\" is not \"gram2\" or \"john\""),
    }
}

pub fn reducing_family(
    weight: &WeightSection,
    p: f64,
    method: &str,
    quad: &QuadSection,
) -> Result<ReducingFamily> {
    let w = Arc::new(weight.build()?);
    ReducingFamily::new(w, p, parse_method(method)?, quad.build()?).context("reducing family")
}

/// Owned weighting payload; [`Weighting`] itself borrows.
pub enum OwnedWeighting {
    Unweighted,
    Averaged(ReducingFamily),
    Pointwise(MatrixWeight, Quadrature),
}

impl OwnedWeighting {
    /// `choice` is "unweighted", "averaged", or "pointwise"; the weighted
    /// choices require a `[weight]` section of dimension `n`.
    pub fn build(
        choice: &str,
        weight: Option<&WeightSection>,
        n: usize,
        p: f64,
        method: &str,
        quad: &QuadSection,
    ) -> Result<Self> {
        let need_weight = || -> Result<&WeightSection> {
            let ws = weight
                .with_context(|| format!("a [weight] section is required for weighting = \"{choice}\""))?;
            if ws.n != n {
                bail!("weight.n ({}) must match the experiment dimension n ({n})", ws.n);
            }
            Ok(ws)
        };
        match choice {
            "unweighted" => Ok(Self::Unweighted),
            "averaged" => Ok(Self::Averaged(reducing_family(need_weight()?, p, method, quad)?)),
            "pointwise" => {
                let w = need_weight()?.build()?;
                Ok(Self::Pointwise(w, quad.build()?))
            }
            other => bail!(
                "weighting \"{other}\" is not one of unweighted, averaged, pointwise"
            ),
        }
    }

    pub fn view(&self) -> Weighting<'_, f64> {
        match self {
            Self::Unweighted => Weighting::Unweighted,
            Self::Averaged(fam) => Weighting::Averaged(fam),
            Self::Pointwise(w, quad) => Weighting::Pointwise(w, *quad),
        }
    }
}

/// Kernel from an explicit `[kernel]` section or as `margin` above the
/// boundedness thresholds of the space.
pub fn kernel_from(
    kernel: Option<&KernelSection>,
    margin: Option<f64>,
    sp: &SpaceParams,
    n: usize,
    d1: f64,
    d2: f64,
) -> Result<AdKernel<f64>> {
    match (kernel, margin) {
        (Some(k), None) => Ok(AdKernel { d: k.d, e: k.e, f: k.f }),
        (None, Some(mg)) => {
            let th = thresholds(sp, n, d1, d2).context("thresholds for margin kernel")?;
            Ok(margin_kernel(&th, mg))
        }
        (Some(_), Some(_)) => bail!("give either a [kernel] section or margin, not both"),
        (None, None) => bail!("one of [kernel] or margin is required"),
    }
}

// ---------------------------------------------------------------------------
// Per-command configs
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsConfig {
    #[serde(default)]
    pub seed: u64,
    pub p: f64,
    #[serde(default = "default_grid_depth")]
    pub grid_depth: u32,
    pub weight: WeightSection,
    pub window: WindowSection,
    #[serde(default)]
    pub quadrature: QuadSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimensionConfig {
    #[serde(default)]
    pub seed: u64,
    pub p: f64,
    /// Concentric dilation factors, increasing, within [1, 1024].
    pub lambda: Vec<f64>,
    pub weight: WeightSection,
    #[serde(default)]
    pub quadrature: QuadSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReduceConfig {
    #[serde(default)]
    pub seed: u64,
    pub p: f64,
    #[serde(default = "default_method")]
    pub method: String,
    pub weight: WeightSection,
    pub window: WindowSection,
    #[serde(default)]
    pub quadrature: QuadSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RhiConfig {
    #[serde(default)]
    pub seed: u64,
    pub p: f64,
    /// Exponent grid, each entry >= 1.
    pub r: Vec<f64>,
    pub weight: WeightSection,
    pub window: WindowSection,
    #[serde(default)]
    pub quadrature: QuadSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BadsetConfig {
    #[serde(default)]
    pub seed: u64,
    pub p: f64,
    #[serde(default = "default_method")]
    pub method: String,
    /// Comparability levels to scan.
    pub m_grid: Vec<f64>,
    pub cube: CubeSection,
    pub weight: WeightSection,
    #[serde(default)]
    pub quadrature: QuadSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DoublingConfig {
    #[serde(default)]
    pub seed: u64,
    pub p: f64,
    #[serde(default = "default_method")]
    pub method: String,
    pub d1: f64,
    pub d2: f64,
    pub weight: WeightSection,
    pub window: WindowSection,
    #[serde(default)]
    pub quadrature: QuadSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeqnormConfig {
    #[serde(default)]
    pub seed: u64,
    /// Spatial dimension of the cube lattice.
    pub n: usize,
    #[serde(default = "default_weighting")]
    pub weighting: String,
    /// Reducing order; defaults to the space integrability p.
    pub p: Option<f64>,
    #[serde(default = "default_method")]
    pub method: String,
    pub space: SpaceSection,
    pub window: WindowSection,
    pub field: FieldSection,
    pub weight: Option<WeightSection>,
    #[serde(default)]
    pub quadrature: QuadSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquivConfig {
    #[serde(default)]
    pub seed: u64,
    /// "sequence" compares the two norms on random coefficient fields;
    /// "function" runs the same comparison through the filter bank on
    /// band-limited functions over several grid sizes.
    pub level: String,
    pub p: Option<f64>,
    #[serde(default = "default_method")]
    pub method: String,
    #[serde(default = "default_count")]
    pub count: usize,
    #[serde(default = "default_one")]
    pub m: usize,
    #[serde(default = "default_fill")]
    pub fill: f64,
    pub space: SpaceSection,
    pub weight: WeightSection,
    pub window: Option<WindowSection>,
    #[serde(default)]
    pub quadrature: QuadSection,
    // Function level only.
    pub sizes: Option<Vec<usize>>,
    pub j_max: Option<i32>,
    #[serde(default = "default_modes")]
    pub n_modes: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdsConfig {
    #[serde(default)]
    pub seed: u64,
    pub n: usize,
    #[serde(default)]
    pub d1: f64,
    #[serde(default)]
    pub d2: f64,
    pub space: SpaceSection,
}

/// `[probe]` section: the field home window and the growing schedule.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSection {
    pub home_j_min: i32,
    pub home_j_max: i32,
    pub radius: i64,
    pub homogeneous: bool,
    /// Top levels of the schedule windows (same j_min and radius as home).
    pub schedule_j_max: Vec<i32>,
    #[serde(default = "default_one")]
    pub m: usize,
    /// Random fields added on top of the deterministic unit batch.
    #[serde(default = "default_modes")]
    pub count: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    #[serde(default)]
    pub seed: u64,
    pub n: usize,
    #[serde(default)]
    pub d1: f64,
    #[serde(default)]
    pub d2: f64,
    pub margin: Option<f64>,
    pub kernel: Option<KernelSection>,
    #[serde(default = "default_weighting")]
    pub weighting: String,
    pub p: Option<f64>,
    #[serde(default = "default_method")]
    pub method: String,
    pub space: SpaceSection,
    pub weight: Option<WeightSection>,
    #[serde(default)]
    pub quadrature: QuadSection,
    pub probe: ProbeSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SharpnessConfig {
    #[serde(default)]
    pub seed: u64,
    pub n: usize,
    #[serde(default)]
    pub d1: f64,
    pub d2: f64,
    #[serde(default = "default_k_max")]
    pub k_max: u64,
    pub margin: Option<f64>,
    pub kernel: Option<KernelSection>,
    pub space: SpaceSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalderonConfig {
    #[serde(default)]
    pub seed: u64,
    pub n: usize,
    /// Grid nodes per axis (a power of two).
    pub size: usize,
    /// Finest decomposition level; defaults to log2(size).
    pub j_max: Option<i32>,
    #[serde(default = "default_trials")]
    pub count: usize,
    #[serde(default = "default_one")]
    pub m: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    #[serde(default)]
    pub seed: u64,
    pub n: usize,
    pub size: usize,
    /// Sampling lattice level.
    pub j: i32,
    /// Window rolloff bound over the band, in (0, pi).
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Lattice offset; defaults to the origin.
    pub y: Option<Vec<f64>>,
    /// Band level of the generated functions; defaults to j.
    pub band_j: Option<i32>,
    #[serde(default = "default_sample_trials")]
    pub count: usize,
    #[serde(default = "default_one")]
    pub m: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenericSamplingConfig {
    #[serde(default)]
    pub seed: u64,
    pub n: usize,
    pub size: usize,
    /// Band level of the reconstructed function.
    pub j: i32,
    /// Sample lattices sit `depth` levels below the band level.
    #[serde(default = "default_depths")]
    pub depths: Vec<u32>,
    #[serde(default = "default_decay")]
    pub decay_m: f64,
    /// "centers", "corners", or "random".
    #[serde(default = "default_points")]
    pub points: String,
    pub band_j: Option<i32>,
    #[serde(default = "default_one")]
    pub m: usize,
    /// Also write the deepest reconstruction as reconstruction.csv.
    #[serde(default)]
    pub write_reconstruction: bool,
}
