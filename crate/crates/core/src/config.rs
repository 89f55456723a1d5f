//! Declarative singularity configurations and their validation.
//!
//! A configuration lists point and shell singularities (explicitly or through
//! lattice generators) in `ℝⁿ` together with a bounded background potential.
//! Validation computes the uniform separation `ε` between the closed cutoff
//! balls `B(x_j; δ_j)`; nothing downstream runs on an unvalidated config.
//!
//! The on-disk format is TOML:
//!
//! ```toml
//! version = 1
//! dimension = 3
//!
//! [background]
//! sup_norm = 0.5
//!
//! [[singularity]]
//! position = [0.0, 0.0, 0.0]
//! potential = { kind = "inverse_square_point", coupling = 0.0, cutoff = 1.0 }
//!
//! [[lattice]]
//! basis = [[4.0, 0.0, 0.0], [0.0, 4.0, 0.0]]
//! origin = [2.0, 2.0, 0.0]
//! region = "infinite"
//! potential = { kind = "shell", strength = 1.0, exponent = 2.0, radius = 0.5, cutoff = 1.0 }
//! ```
//!
//! Unknown keys are rejected.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{self, Mode};
use crate::geometry::{self, Lattice, LatticeError};
use crate::quad::GaussLegendre;

pub const CONFIG_VERSION: u32 = 1;

/// Largest number of explicit sites (including expanded finite lattices).
pub const MAX_SITES: usize = 200_000;

/// Tolerance for the declared-ε consistency warning.
pub const DECLARED_EPSILON_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("cannot parse configuration: {0}")]
    Parse(String),
    #[error("unsupported configuration version {0} (expected {CONFIG_VERSION})")]
    UnsupportedVersion(u32),
    #[error("dimension must be at least 2, got {0}")]
    InvalidDimension(usize),
    #[error("{label}: position has {got} coordinates, expected {expected}")]
    PositionDimension {
        label: String,
        got: usize,
        expected: usize,
    },
    #[error("{label}: {reason}")]
    InvalidPotential { label: String, reason: String },
    #[error("{label}: potential kind `{kind}` is not radial about a point or sphere and cannot be reduced to channels")]
    UnsupportedPotential { label: String, kind: String },
    #[error("{label}: perturbation violates r·V(r) ∈ L¹((0,δ)): {reason}")]
    NotIntegrable { label: String, reason: String },
    #[error("background sup-norm must be finite and non-negative, got {0}")]
    InvalidBackground(f64),
    #[error("configuration contains no singularities")]
    EmptyConfig,
    #[error("{first} and {second} are not separated (gap {gap:e})")]
    SeparationViolation {
        first: String,
        second: String,
        gap: f64,
    },
    #[error("at most one infinite lattice generator is supported")]
    MultipleInfiniteLattices,
    #[error("{label}: {source}")]
    Lattice {
        label: String,
        #[source]
        source: LatticeError,
    },
    #[error("finite lattice expansion produces more than {MAX_SITES} sites")]
    TooManySites,
}

/// Radial profile `Ṽ(r)` on `(0, δ]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RadialProfile {
    /// `coefficient · r^exponent`
    Power { coefficient: f64, exponent: f64 },
    /// `coefficient · e^{-rate·r}`
    Exponential { coefficient: f64, rate: f64 },
    /// Piecewise-linear interpolation, constant beyond the sampled span.
    Sampled { radii: Vec<f64>, values: Vec<f64> },
}

impl RadialProfile {
    pub fn eval(&self, r: f64) -> f64 {
        match self {
            RadialProfile::Power {
                coefficient,
                exponent,
            } => {
                if *coefficient == 0.0 {
                    0.0
                } else {
                    coefficient * r.powf(*exponent)
                }
            }
            RadialProfile::Exponential { coefficient, rate } => coefficient * (-rate * r).exp(),
            RadialProfile::Sampled { radii, values } => interpolate(radii, values, r),
        }
    }

    fn check_shape(&self) -> Result<(), String> {
        match self {
            RadialProfile::Power {
                coefficient,
                exponent,
            } => {
                if !coefficient.is_finite() || !exponent.is_finite() {
                    return Err("power profile parameters must be finite".into());
                }
            }
            RadialProfile::Exponential { coefficient, rate } => {
                if !coefficient.is_finite() || !rate.is_finite() {
                    return Err("exponential profile parameters must be finite".into());
                }
            }
            RadialProfile::Sampled { radii, values } => check_samples(radii, values)?,
        }
        Ok(())
    }
}

fn check_samples(radii: &[f64], values: &[f64]) -> Result<(), String> {
    if radii.is_empty() || radii.len() != values.len() {
        return Err(format!(
            "sampled profile needs matching non-empty radii/values (got {} and {})",
            radii.len(),
            values.len()
        ));
    }
    if radii[0] <= 0.0 || radii.windows(2).any(|w| !(w[1] > w[0])) {
        return Err("sample radii must be positive and strictly increasing".into());
    }
    if values.iter().chain(radii).any(|v| !v.is_finite()) {
        return Err("sampled profile contains non-finite entries".into());
    }
    Ok(())
}

fn interpolate(radii: &[f64], values: &[f64], r: f64) -> f64 {
    if r <= radii[0] {
        return values[0];
    }
    let last = radii.len() - 1;
    if r >= radii[last] {
        return values[last];
    }
    let i = radii.partition_point(|&x| x <= r);
    let (r0, r1) = (radii[i - 1], radii[i]);
    let t = (r - r0) / (r1 - r0);
    values[i - 1] * (1.0 - t) + values[i] * t
}

/// The singular potential attached to one site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    /// `c/r² + Ṽ(r)` on `B(x; δ)`.
    InverseSquarePoint {
        coupling: f64,
        cutoff: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        perturbation: Option<RadialProfile>,
    },
    /// `β |r − r₀|^{−γ}` on `B(x; δ)`, singular on the sphere `|x − x_j| = r₀`.
    Shell {
        strength: f64,
        exponent: f64,
        radius: f64,
        cutoff: f64,
    },
    /// Sampled radial profile whose leading singular behaviour at the centre is
    /// `leading_coupling / r²`.
    CustomRadial {
        radii: Vec<f64>,
        values: Vec<f64>,
        leading_coupling: f64,
        cutoff: f64,
    },
    /// `(x − x_j)·d / |x − x_j|³`; accepted by the parser so it can be
    /// rejected with a precise error.
    Dipole { moment: Vec<f64>, cutoff: f64 },
}

impl PotentialSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            PotentialSpec::InverseSquarePoint { .. } => "inverse_square_point",
            PotentialSpec::Shell { .. } => "shell",
            PotentialSpec::CustomRadial { .. } => "custom_radial",
            PotentialSpec::Dipole { .. } => "dipole",
        }
    }

    /// The cutoff radius `δ`.
    pub fn cutoff(&self) -> f64 {
        match self {
            PotentialSpec::InverseSquarePoint { cutoff, .. }
            | PotentialSpec::Shell { cutoff, .. }
            | PotentialSpec::CustomRadial { cutoff, .. }
            | PotentialSpec::Dipole { cutoff, .. } => *cutoff,
        }
    }

    /// Radius of the singular set about the centre: 0 for points, `r₀` for shells.
    pub fn singular_radius(&self) -> f64 {
        match self {
            PotentialSpec::Shell { radius, .. } => *radius,
            _ => 0.0,
        }
    }

    /// `V_j(r)` for `0 < r ≤ δ`.
    pub fn radial_value(&self, r: f64) -> f64 {
        match self {
            PotentialSpec::InverseSquarePoint {
                coupling,
                perturbation,
                ..
            } => {
                let lead = if *coupling == 0.0 {
                    0.0
                } else {
                    coupling / (r * r)
                };
                lead + perturbation.as_ref().map_or(0.0, |p| p.eval(r))
            }
            PotentialSpec::Shell {
                strength,
                exponent,
                radius,
                ..
            } => {
                if *strength == 0.0 {
                    0.0
                } else {
                    strength * (r - radius).abs().powf(-exponent)
                }
            }
            PotentialSpec::CustomRadial {
                radii,
                values,
                leading_coupling,
                ..
            } => {
                if r < radii[0] {
                    // keep the declared singular part, extend the rest constantly
                    let rest = values[0] - leading_coupling / (radii[0] * radii[0]);
                    leading_coupling / (r * r) + rest
                } else {
                    interpolate(radii, values, r)
                }
            }
            PotentialSpec::Dipole { .. } => f64::NAN,
        }
    }

    fn validate(&self, label: &str) -> Result<(), ConfigError> {
        let invalid = |reason: String| ConfigError::InvalidPotential {
            label: label.to_string(),
            reason,
        };
        let delta = self.cutoff();
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(invalid(format!("cutoff radius must be positive, got {delta}")));
        }
        match self {
            PotentialSpec::InverseSquarePoint {
                coupling,
                perturbation,
                ..
            } => {
                if !coupling.is_finite() {
                    return Err(invalid("coupling must be finite".into()));
                }
                if let Some(p) = perturbation {
                    p.check_shape().map_err(invalid)?;
                    check_integrable(|r| p.eval(r), delta).map_err(|reason| {
                        ConfigError::NotIntegrable {
                            label: label.to_string(),
                            reason,
                        }
                    })?;
                }
            }
            PotentialSpec::Shell {
                strength,
                exponent,
                radius,
                ..
            } => {
                if !strength.is_finite() || !exponent.is_finite() || *exponent < 0.0 {
                    return Err(invalid(
                        "shell strength must be finite and exponent finite and ≥ 0".into(),
                    ));
                }
                if !(*radius > 0.0 && *radius < delta) {
                    return Err(invalid(format!(
                        "shell radius must satisfy 0 < r0 < cutoff, got r0 = {radius}, cutoff = {delta}"
                    )));
                }
            }
            PotentialSpec::CustomRadial {
                radii,
                values,
                leading_coupling,
                ..
            } => {
                check_samples(radii, values).map_err(invalid)?;
                if !leading_coupling.is_finite() {
                    return Err(invalid("leading coupling must be finite".into()));
                }
                if *radii.last().unwrap() > delta {
                    return Err(invalid("samples extend beyond the cutoff radius".into()));
                }
            }
            PotentialSpec::Dipole { .. } => {
                return Err(ConfigError::UnsupportedPotential {
                    label: label.to_string(),
                    kind: self.kind().to_string(),
                })
            }
        }
        Ok(())
    }
}

/// Dyadic-window test of `∫₀^δ r |Ṽ(r)| dr < ∞` together with local
/// boundedness on `(0, δ]`.
///
/// Window contributions `w_k` over `[δ 2^{-k-1}, δ 2^{-k}]` must decay with a
/// fitted geometric ratio below `1 − 10⁻⁴`.
pub fn check_integrable<F: Fn(f64) -> f64>(profile: F, delta: f64) -> Result<f64, String> {
    const WINDOWS: usize = 64;
    const FIT: usize = 8;
    let gl = GaussLegendre::new(16);
    let mut windows = Vec::with_capacity(WINDOWS);
    for k in 0..WINDOWS {
        let hi = delta * 0.5f64.powi(k as i32);
        let lo = 0.5 * hi;
        let mut finite = true;
        let w = gl.integrate(lo, hi, |r| {
            let v = profile(r);
            if !v.is_finite() {
                finite = false;
            }
            r * v.abs()
        });
        if !finite {
            return Err(format!("profile is not finite near r = {hi:e}"));
        }
        windows.push(w);
    }
    let total: f64 = geometry::compensated_sum(windows.iter().copied());
    if total == 0.0 {
        return Ok(0.0);
    }
    let a = windows[WINDOWS - 1 - FIT];
    let b = windows[WINDOWS - 1];
    if b == 0.0 {
        return Ok(total);
    }
    let ratio = (b / a).powf(1.0 / FIT as f64);
    if !(ratio < 1.0 - 1e-4) {
        return Err(format!(
            "window integrals do not decay (fitted ratio {ratio:.6})"
        ));
    }
    Ok(total + b * ratio / (1.0 - ratio))
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Background {
    /// `‖V₀‖_∞`
    #[serde(default)]
    pub sup_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Singularity {
    pub position: Vec<f64>,
    pub potential: PotentialSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatticeRegion {
    Infinite,
    /// Integer coefficient ranges `min[i] ..= max[i]` per basis vector.
    Box { min: Vec<i64>, max: Vec<i64> },
}

/// Sites `origin + Σ kᵢ bᵢ` sharing one potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeGenerator {
    pub basis: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub origin: Vec<f64>,
    pub region: LatticeRegion,
    pub potential: PotentialSpec,
}

impl LatticeGenerator {
    fn origin_or_zero(&self, n: usize) -> Vec<f64> {
        if self.origin.is_empty() {
            vec![0.0; n]
        } else {
            self.origin.clone()
        }
    }

    /// Box region `[-radius, radius]^d`.
    pub fn truncated(&self, radius: i64) -> LatticeGenerator {
        let d = self.basis.len();
        LatticeGenerator {
            region: LatticeRegion::Box {
                min: vec![-radius; d],
                max: vec![radius; d],
            },
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SingularityConfig {
    pub version: u32,
    pub dimension: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub declared_epsilon: Option<f64>,
    #[serde(default)]
    pub background: Background,
    #[serde(default, rename = "singularity", skip_serializing_if = "Vec::is_empty")]
    pub singularities: Vec<Singularity>,
    #[serde(default, rename = "lattice", skip_serializing_if = "Vec::is_empty")]
    pub lattices: Vec<LatticeGenerator>,
}

impl SingularityConfig {
    pub fn new(dimension: usize) -> Self {
        SingularityConfig {
            version: CONFIG_VERSION,
            dimension,
            declared_epsilon: None,
            background: Background::default(),
            singularities: Vec::new(),
            lattices: Vec::new(),
        }
    }

    pub fn with_point(mut self, position: Vec<f64>, potential: PotentialSpec) -> Self {
        self.singularities.push(Singularity {
            position,
            potential,
        });
        self
    }

    pub fn with_lattice(mut self, lattice: LatticeGenerator) -> Self {
        self.lattices.push(lattice);
        self
    }

    pub fn from_toml_str(s: &str) -> Result<Self, ConfigError> {
        let cfg: SingularityConfig =
            toml::from_str(s).map_err(|e| ConfigError::Parse(e.to_string()))?;
        if cfg.version != CONFIG_VERSION {
            return Err(ConfigError::UnsupportedVersion(cfg.version));
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration is always representable in TOML")
    }

    pub fn is_empty(&self) -> bool {
        self.singularities.is_empty() && self.lattices.is_empty()
    }
}

/// Where a site came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SiteSource {
    Explicit { index: usize },
    Lattice { generator: usize, coords: Vec<i64> },
}

impl SiteSource {
    pub fn label(&self) -> String {
        match self {
            SiteSource::Explicit { index } => format!("singularity[{index}]"),
            SiteSource::Lattice { generator, coords } => {
                let c: Vec<String> = coords.iter().map(|k| k.to_string()).collect();
                format!("lattice[{generator}]({})", c.join(","))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Site {
    pub position: Vec<f64>,
    pub potential: PotentialSpec,
    pub source: SiteSource,
}

/// An infinite lattice generator, kept symbolic.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeOrbit {
    pub generator: usize,
    pub lattice: Lattice,
    pub potential: PotentialSpec,
    pub min_vector_length: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedConfig {
    config: SingularityConfig,
    sites: Vec<Site>,
    orbit: Option<LatticeOrbit>,
    epsilon: f64,
    warnings: Vec<String>,
}

impl ValidatedConfig {
    pub fn config(&self) -> &SingularityConfig {
        &self.config
    }

    pub fn dimension(&self) -> usize {
        self.config.dimension
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn orbit(&self) -> Option<&LatticeOrbit> {
        self.orbit.as_ref()
    }

    /// Uniform separation; `+∞` for a single site.
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Largest cutoff radius over all sites and the orbit.
    pub fn max_cutoff(&self) -> f64 {
        self.sites
            .iter()
            .map(|s| s.potential.cutoff())
            .chain(self.orbit.iter().map(|o| o.potential.cutoff()))
            .fold(0.0, f64::max)
    }

    /// Scale for cutoff families: `ε`, or the largest cutoff radius when a
    /// lone singularity leaves `ε` unbounded.
    pub fn family_scale(&self) -> f64 {
        if self.epsilon.is_finite() {
            self.epsilon
        } else {
            self.max_cutoff()
        }
    }
}

fn check_position(label: &str, pos: &[f64], n: usize) -> Result<(), ConfigError> {
    if pos.len() != n {
        return Err(ConfigError::PositionDimension {
            label: label.to_string(),
            got: pos.len(),
            expected: n,
        });
    }
    if pos.iter().any(|x| !x.is_finite()) {
        return Err(ConfigError::InvalidPotential {
            label: label.to_string(),
            reason: "position must be finite".into(),
        });
    }
    Ok(())
}

fn expand_box(min: &[i64], max: &[i64]) -> Result<Vec<Vec<i64>>, ConfigError> {
    let mut count: usize = 1;
    for (lo, hi) in min.iter().zip(max) {
        let len = (hi - lo + 1).max(0) as usize;
        count = count.checked_mul(len).ok_or(ConfigError::TooManySites)?;
    }
    if count > MAX_SITES {
        return Err(ConfigError::TooManySites);
    }
    if count == 0 {
        return Ok(Vec::new());
    }
    let mut out = Vec::with_capacity(count);
    let mut k: Vec<i64> = min.to_vec();
    'outer: loop {
        out.push(k.clone());
        for axis in 0..k.len() {
            k[axis] += 1;
            if k[axis] <= max[axis] {
                continue 'outer;
            }
            k[axis] = min[axis];
        }
        break;
    }
    Ok(out)
}

/// Validate a configuration and compute its uniform separation `ε`.
pub fn validate_config(cfg: &SingularityConfig) -> Result<ValidatedConfig, ConfigError> {
    validate_config_with(cfg, Mode::default())
}

pub fn validate_config_with(
    cfg: &SingularityConfig,
    mode: Mode,
) -> Result<ValidatedConfig, ConfigError> {
    if cfg.version != CONFIG_VERSION {
        return Err(ConfigError::UnsupportedVersion(cfg.version));
    }
    let n = cfg.dimension;
    if n < 2 {
        return Err(ConfigError::InvalidDimension(n));
    }
    let bg = cfg.background.sup_norm;
    if !(bg.is_finite() && bg >= 0.0) {
        return Err(ConfigError::InvalidBackground(bg));
    }
    if cfg.is_empty() {
        return Err(ConfigError::EmptyConfig);
    }

    let mut sites = Vec::new();
    for (index, s) in cfg.singularities.iter().enumerate() {
        let source = SiteSource::Explicit { index };
        let label = source.label();
        check_position(&label, &s.position, n)?;
        s.potential.validate(&label)?;
        sites.push(Site {
            position: s.position.clone(),
            potential: s.potential.clone(),
            source,
        });
    }

    let mut orbit = None;
    for (g, gen) in cfg.lattices.iter().enumerate() {
        let label = format!("lattice[{g}]");
        gen.potential.validate(&label)?;
        let origin = gen.origin_or_zero(n);
        check_position(&label, &origin, n)?;
        let lattice = Lattice::new(gen.basis.clone(), origin).map_err(|source| {
            ConfigError::Lattice {
                label: label.clone(),
                source,
            }
        })?;
        match &gen.region {
            LatticeRegion::Infinite => {
                if orbit.is_some() {
                    return Err(ConfigError::MultipleInfiniteLattices);
                }
                let min_vector_length =
                    lattice
                        .min_vector_length()
                        .map_err(|source| ConfigError::Lattice {
                            label: label.clone(),
                            source,
                        })?;
                orbit = Some(LatticeOrbit {
                    generator: g,
                    lattice,
                    potential: gen.potential.clone(),
                    min_vector_length,
                });
            }
            LatticeRegion::Box { min, max } => {
                if min.len() != lattice.rank() || max.len() != lattice.rank() {
                    return Err(ConfigError::InvalidPotential {
                        label,
                        reason: "box bounds must have one entry per basis vector".into(),
                    });
                }
                for coords in expand_box(min, max)? {
                    if sites.len() >= MAX_SITES {
                        return Err(ConfigError::TooManySites);
                    }
                    sites.push(Site {
                        position: lattice.point(&coords),
                        potential: gen.potential.clone(),
                        source: SiteSource::Lattice {
                            generator: g,
                            coords,
                        },
                    });
                }
            }
        }
    }
    if sites.is_empty() && orbit.is_none() {
        return Err(ConfigError::EmptyConfig);
    }

    let epsilon = separation(&sites, orbit.as_ref(), mode)?;

    let mut warnings = Vec::new();
    if let Some(declared) = cfg.declared_epsilon {
        let mismatch = if epsilon.is_finite() {
            (declared - epsilon).abs() > DECLARED_EPSILON_TOLERANCE
        } else {
            declared.is_finite()
        };
        if mismatch {
            warnings.push(format!(
                "declared_epsilon = {declared} differs from computed separation {epsilon}; using the computed value"
            ));
        }
    }

    Ok(ValidatedConfig {
        config: cfg.clone(),
        sites,
        orbit,
        epsilon,
        warnings,
    })
}

/// Infimum of the gaps between closed cutoff balls. Errors on the first
/// (lexicographically smallest) non-positive gap.
fn separation(sites: &[Site], orbit: Option<&LatticeOrbit>, mode: Mode) -> Result<f64, ConfigError> {
    let violation = |a: &SiteSource, b: String, gap: f64| ConfigError::SeparationViolation {
        first: a.label(),
        second: b,
        gap,
    };

    let mut eps = f64::INFINITY;

    if let Some(o) = orbit {
        let gap = o.min_vector_length - 2.0 * o.potential.cutoff();
        if gap <= 0.0 {
            let zero = vec![0i64; o.lattice.rank()];
            let mut unit = zero.clone();
            unit[0] = 1;
            return Err(ConfigError::SeparationViolation {
                first: SiteSource::Lattice {
                    generator: o.generator,
                    coords: zero,
                }
                .label(),
                second: format!("a lattice[{}] neighbour", o.generator),
                gap,
            });
        }
        eps = eps.min(gap);
    }

    // per-row minima, evaluated in parallel, reduced in order
    let rows: Vec<Result<f64, ConfigError>> = exec::map_range(mode, sites.len(), |i| {
        let a = &sites[i];
        let mut row_min = f64::INFINITY;
        for b in &sites[i + 1..] {
            // symmetric in (a, b) so ε does not depend on site order
            let gap = geometry::distance(&a.position, &b.position)
                - (a.potential.cutoff() + b.potential.cutoff());
            if gap <= 0.0 {
                return Err(violation(&a.source, b.source.label(), gap));
            }
            row_min = row_min.min(gap);
        }
        if let Some(o) = orbit {
            let (d, coords) = o
                .lattice
                .closest_point(&a.position)
                .map_err(|source| ConfigError::Lattice {
                    label: format!("lattice[{}]", o.generator),
                    source,
                })?;
            let gap = d - (a.potential.cutoff() + o.potential.cutoff());
            if gap <= 0.0 {
                return Err(violation(
                    &a.source,
                    SiteSource::Lattice {
                        generator: o.generator,
                        coords,
                    }
                    .label(),
                    gap,
                ));
            }
            row_min = row_min.min(gap);
        }
        Ok(row_min)
    });
    for r in rows {
        eps = eps.min(r?);
    }
    Ok(eps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn point(c: f64, delta: f64) -> PotentialSpec {
        PotentialSpec::InverseSquarePoint {
            coupling: c,
            cutoff: delta,
            perturbation: None,
        }
    }

    #[test]
    fn two_points_gap() {
        let cfg = SingularityConfig::new(3)
            .with_point(vec![0.0, 0.0, 0.0], point(0.0, 1.0))
            .with_point(vec![3.0, 0.0, 0.0], point(0.0, 1.0));
        let v = validate_config(&cfg).unwrap();
        assert_relative_eq!(v.epsilon(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn touching_balls_rejected() {
        let cfg = SingularityConfig::new(3)
            .with_point(vec![0.0, 0.0, 0.0], point(0.0, 1.0))
            .with_point(vec![2.0, 0.0, 0.0], point(0.0, 1.0));
        match validate_config(&cfg) {
            Err(ConfigError::SeparationViolation { first, second, gap }) => {
                assert_eq!(first, "singularity[0]");
                assert_eq!(second, "singularity[1]");
                assert_eq!(gap, 0.0);
            }
            other => panic!("expected separation violation, got {other:?}"),
        }
    }

    #[test]
    fn square_lattice_in_r3() {
        let cfg = SingularityConfig::new(3).with_lattice(LatticeGenerator {
            basis: vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]],
            origin: vec![],
            region: LatticeRegion::Infinite,
            potential: point(0.0, 0.25),
        });
        let v = validate_config(&cfg).unwrap();
        assert_relative_eq!(v.epsilon(), 0.5, epsilon = 1e-15);
        assert!(v.sites().is_empty());
        assert!(v.orbit().is_some());
    }

    #[test]
    fn empty_and_dipole_rejected() {
        assert_eq!(
            validate_config(&SingularityConfig::new(3)),
            Err(ConfigError::EmptyConfig)
        );
        let cfg = SingularityConfig::new(3).with_point(
            vec![0.0; 3],
            PotentialSpec::Dipole {
                moment: vec![1.0, 0.0, 0.0],
                cutoff: 1.0,
            },
        );
        assert!(matches!(
            validate_config(&cfg),
            Err(ConfigError::UnsupportedPotential { .. })
        ));
    }

    #[test]
    fn shell_radius_must_lie_inside_cutoff() {
        let cfg = SingularityConfig::new(3).with_point(
            vec![0.0; 3],
            PotentialSpec::Shell {
                strength: 1.0,
                exponent: 2.0,
                radius: 1.0,
                cutoff: 1.0,
            },
        );
        assert!(matches!(
            validate_config(&cfg),
            Err(ConfigError::InvalidPotential { .. })
        ));
    }

    #[test]
    fn perturbation_integrability() {
        let ok = PotentialSpec::InverseSquarePoint {
            coupling: 0.0,
            cutoff: 1.0,
            perturbation: Some(RadialProfile::Power {
                coefficient: 1.0,
                exponent: -0.5,
            }),
        };
        validate_config(&SingularityConfig::new(3).with_point(vec![0.0; 3], ok)).unwrap();
        let bad = PotentialSpec::InverseSquarePoint {
            coupling: 0.0,
            cutoff: 1.0,
            perturbation: Some(RadialProfile::Power {
                coefficient: 1.0,
                exponent: -2.0,
            }),
        };
        assert!(matches!(
            validate_config(&SingularityConfig::new(3).with_point(vec![0.0; 3], bad)),
            Err(ConfigError::NotIntegrable { .. })
        ));
        // ∫₀¹ r · r^{-1/2} dr = 2/3
        let total = check_integrable(|r| r.powf(-0.5), 1.0).unwrap();
        assert_relative_eq!(total, 2.0 / 3.0, max_relative = 1e-10);
    }

    #[test]
    fn declared_epsilon_mismatch_warns() {
        let mut cfg = SingularityConfig::new(2)
            .with_point(vec![0.0, 0.0], point(1.0, 0.5))
            .with_point(vec![3.0, 0.0], point(1.0, 0.5));
        cfg.declared_epsilon = Some(2.0);
        assert!(validate_config(&cfg).unwrap().warnings().is_empty());
        cfg.declared_epsilon = Some(1.9);
        assert_eq!(validate_config(&cfg).unwrap().warnings().len(), 1);
    }

    #[test]
    fn unknown_keys_and_versions_rejected() {
        let src = "version = 1\ndimension = 3\ncoupling = 2.0\n";
        assert!(matches!(
            SingularityConfig::from_toml_str(src),
            Err(ConfigError::Parse(_))
        ));
        let src = "version = 1\ndimension = 3\n[[singularity]]\nposition = [0, 0, 0]\npotential = { kind = \"inverse_square_point\", coupling = 1, cutoff = 1, colour = 2 }\n";
        assert!(matches!(
            SingularityConfig::from_toml_str(src),
            Err(ConfigError::Parse(_))
        ));
        assert!(matches!(
            SingularityConfig::from_toml_str("version = 2\ndimension = 3\n"),
            Err(ConfigError::UnsupportedVersion(2))
        ));
    }

    #[test]
    fn integer_literals_parse_as_reals() {
        let src = r#"
version = 1
dimension = 3
[[singularity]]
position = [0, 0, 0]
potential = { kind = "inverse_square_point", coupling = -3, cutoff = 1 }
"#;
        let cfg = SingularityConfig::from_toml_str(src).unwrap();
        assert_eq!(cfg.singularities[0].potential, point(-3.0, 1.0));
    }

    #[test]
    fn lattice_point_nearest_to_explicit_site() {
        let cfg = SingularityConfig::new(2)
            .with_point(vec![0.5, 0.5], point(1.0, 0.1))
            .with_lattice(LatticeGenerator {
                basis: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
                origin: vec![0.0, 0.0],
                region: LatticeRegion::Infinite,
                potential: point(1.0, 0.2),
            });
        let v = validate_config(&cfg).unwrap();
        // min(1 - 0.4, √½ - 0.3)
        assert_relative_eq!(v.epsilon(), 0.5f64.sqrt() - 0.3, epsilon = 1e-14);
    }
}
