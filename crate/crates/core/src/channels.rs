//! Angular-momentum reduction of point and shell singularities.
//!
//! In spherical coordinates about a singular centre, `u = r^{(n−1)/2} R` on the
//! degree-`ℓ` harmonic subspace turns `−Δ + c/r²` into `−u″ + q_eff r⁻² u` with
//! `q_eff = c + (n−1)(n−3)/4 + ℓ(ℓ+n−2)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::PotentialSpec;
use crate::defect::{DefectRecord, ExtNat};
use crate::exec::{self, Mode};
use crate::weyl::{
    frobenius_classify_inverse_square, weyl_classify_numeric, EndpointClass, RadialProblem, Side,
    Spectral, WeylError, WeylOptions, INVERSE_SQUARE_THRESHOLD,
};

/// Channels whose coupling sits this close to `3/4` raise a warning.
pub const THRESHOLD_WARNING: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    #[error("dimension {0} is below 2")]
    DimensionTooSmall(usize),
    #[error("coupling {0} is not finite")]
    NonFiniteCoupling(f64),
    #[error("ℓ_max = {lmax} stops before the first limit-point channel ℓ = {first_limit_point}")]
    TruncationTooSmall { lmax: u64, first_limit_point: u64 },
    #[error("shell requires 0 < r₀ < δ (got r₀ = {radius}, δ = {cutoff})")]
    InvalidShell { radius: f64, cutoff: f64 },
    #[error("shell classification is indeterminate on the {side:?} side")]
    ShellIndeterminate { side: Side },
    #[error("{0} potentials have no channel reduction")]
    UnsupportedPotential(String),
    #[error(transparent)]
    Weyl(#[from] WeylError),
}

pub fn effective_coupling(n: usize, c: f64, ell: u64) -> f64 {
    let nf = n as f64;
    let l = ell as f64;
    c + (nf - 1.0) * (nf - 3.0) / 4.0 + l * (l + nf - 2.0)
}

fn binomial(n: u64, k: u64) -> u128 {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Dimension of the degree-`ℓ` spherical harmonics on `S^{n−1}`.
pub fn harmonic_multiplicity(n: usize, ell: u64) -> u64 {
    assert!(n >= 2, "harmonic multiplicity needs n ≥ 2");
    let m = n as u64 - 1;
    let all = binomial(ell + m, m);
    let lower = if ell >= 2 { binomial(ell - 2 + m, m) } else { 0 };
    u64::try_from(all - lower).unwrap_or(u64::MAX)
}

/// Exact limit-point test on `q_eff` without forming the sum: `c ≥ 3/4 − base`.
fn channel_is_limit_point(n: usize, c: f64, ell: u64) -> bool {
    let nf = n as f64;
    let l = ell as f64;
    let base = (nf - 1.0) * (nf - 3.0) / 4.0 + l * (l + nf - 2.0);
    c >= INVERSE_SQUARE_THRESHOLD - base
}

fn check_inputs(n: usize, c: f64) -> Result<(), ChannelError> {
    if n < 2 {
        return Err(ChannelError::DimensionTooSmall(n));
    }
    if !c.is_finite() {
        return Err(ChannelError::NonFiniteCoupling(c));
    }
    Ok(())
}

/// First `ℓ` whose channel is limit point; all later ones are too since
/// `q_eff` increases with `ℓ`.
pub fn first_limit_point_channel(n: usize, c: f64) -> Result<u64, ChannelError> {
    check_inputs(n, c)?;
    let mut ell = 0;
    while !channel_is_limit_point(n, c, ell) {
        ell += 1;
    }
    Ok(ell)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointDefect {
    pub record: DefectRecord,
    /// Limit-circle channels `(ℓ, q_eff, multiplicity)`.
    pub limit_circle: Vec<(u64, f64, u64)>,
    pub first_limit_point: u64,
    pub warnings: Vec<String>,
}

pub fn point_defect(n: usize, c: f64) -> Result<DefectRecord, ChannelError> {
    point_defect_detailed(n, c).map(|p| p.record)
}

pub fn point_defect_detailed(n: usize, c: f64) -> Result<PointDefect, ChannelError> {
    let first = first_limit_point_channel(n, c)?;
    let mut total: u64 = 0;
    let mut limit_circle = Vec::new();
    for ell in 0..first {
        let m = harmonic_multiplicity(n, ell);
        total = total.saturating_add(m);
        limit_circle.push((ell, effective_coupling(n, c, ell), m));
    }
    let mut warnings = Vec::new();
    // only the channels straddling the threshold can be that close
    for ell in first.saturating_sub(1)..=first {
        let q = effective_coupling(n, c, ell);
        if (q - INVERSE_SQUARE_THRESHOLD).abs() < THRESHOLD_WARNING {
            warnings.push(format!(
                "channel ℓ = {ell} has q_eff = {q} within {THRESHOLD_WARNING:e} of 3/4; \
                 numerically indeterminate, decided by the closed-form rule"
            ));
        }
    }
    Ok(PointDefect {
        record: DefectRecord::symmetric(total),
        limit_circle,
        first_limit_point: first,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelEntry {
    pub ell: u64,
    pub q_eff: f64,
    pub multiplicity: u64,
    pub class: EndpointClass,
    /// Numerical classification of `q_eff / r²` at `r = 0`, when requested.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<EndpointClass>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpectrum {
    pub n: usize,
    pub coupling: f64,
    pub entries: Vec<ChannelEntry>,
    /// Every `ℓ` at or above this is limit point.
    pub limit_point_from: u64,
}

impl ChannelSpectrum {
    /// Entries where the numerical oracle disagrees with the closed form,
    /// ignoring those within `exclusion` of the threshold.
    pub fn oracle_disagreements(&self, exclusion: f64) -> Vec<u64> {
        self.entries
            .iter()
            .filter(|e| (e.q_eff - INVERSE_SQUARE_THRESHOLD).abs() >= exclusion)
            .filter(|e| matches!(e.oracle, Some(o) if o != e.class))
            .map(|e| e.ell)
            .collect()
    }
}

pub fn channel_spectrum(n: usize, c: f64, lmax: u64) -> Result<ChannelSpectrum, ChannelError> {
    let first = first_limit_point_channel(n, c)?;
    if lmax < first {
        return Err(ChannelError::TruncationTooSmall {
            lmax,
            first_limit_point: first,
        });
    }
    let entries = (0..=lmax)
        .map(|ell| ChannelEntry {
            ell,
            q_eff: effective_coupling(n, c, ell),
            multiplicity: harmonic_multiplicity(n, ell),
            class: if ell >= first {
                EndpointClass::LimitPoint
            } else {
                EndpointClass::LimitCircle
            },
            oracle: None,
        })
        .collect();
    Ok(ChannelSpectrum {
        n,
        coupling: c,
        entries,
        limit_point_from: first,
    })
}

/// Fill in the numerical classification of every entry.
pub fn attach_oracle(
    spectrum: &mut ChannelSpectrum,
    opts: &WeylOptions,
    mode: Mode,
) -> Result<(), ChannelError> {
    let couplings: Vec<f64> = spectrum.entries.iter().map(|e| e.q_eff).collect();
    let classes = exec::map(mode, &couplings, |&q| {
        weyl_classify_numeric(&RadialProblem::inverse_square(q), Spectral::PlusI, opts)
    });
    for (entry, class) in spectrum.entries.iter_mut().zip(classes) {
        entry.oracle = Some(class?);
    }
    Ok(())
}

/// Closed-form class of one channel, agreeing with
/// [`frobenius_classify_inverse_square`] on `q_eff` up to rounding of the sum.
pub fn channel_class(n: usize, c: f64, ell: u64) -> EndpointClass {
    if channel_is_limit_point(n, c, ell) {
        EndpointClass::LimitPoint
    } else {
        frobenius_classify_inverse_square(effective_coupling(n, c, ell))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShellEvidence {
    pub inner: EndpointClass,
    pub outer: EndpointClass,
}

/// Classification of `β |r − r₀|^{−γ}` at `r₀` from both sides.
pub fn shell_evidence(
    strength: f64,
    exponent: f64,
    radius: f64,
    cutoff: f64,
    opts: &WeylOptions,
) -> Result<ShellEvidence, ChannelError> {
    if !(radius > 0.0 && radius < cutoff) {
        return Err(ChannelError::InvalidShell { radius, cutoff });
    }
    let gap = 0.5 * radius.min(cutoff - radius);
    let q = move |r: f64| strength * (r - radius).abs().powf(-exponent);
    let mut opts = *opts;
    if exponent > 2.0 {
        // the stiff side needs far fewer decades to settle and is costly to resolve
        opts.windows = opts.windows.min(shell_windows(exponent));
    }
    let inner = RadialProblem::new(
        std::sync::Arc::new(q),
        0.0,
        radius,
        Side::Right,
        radius - gap,
    )?;
    let outer = RadialProblem::new(
        std::sync::Arc::new(q),
        radius,
        f64::INFINITY,
        Side::Left,
        radius + gap,
    )?;
    Ok(ShellEvidence {
        inner: weyl_classify_numeric(&inner, Spectral::PlusI, &opts)?,
        outer: weyl_classify_numeric(&outer, Spectral::PlusI, &opts)?,
    })
}

fn shell_windows(exponent: f64) -> usize {
    ((8.0 / (exponent - 2.0)).round() as usize).clamp(6, 16)
}

pub fn shell_defect(n: usize, spec: &PotentialSpec) -> Result<DefectRecord, ChannelError> {
    shell_defect_with(n, spec, &WeylOptions::default()).map(|(d, _)| d)
}

pub fn shell_defect_with(
    n: usize,
    spec: &PotentialSpec,
    opts: &WeylOptions,
) -> Result<(DefectRecord, Option<ShellEvidence>), ChannelError> {
    if n < 2 {
        return Err(ChannelError::DimensionTooSmall(n));
    }
    let PotentialSpec::Shell {
        strength,
        exponent,
        radius,
        cutoff,
    } = *spec
    else {
        return Err(ChannelError::UnsupportedPotential(spec.kind().into()));
    };
    if !(radius > 0.0 && radius < cutoff) {
        return Err(ChannelError::InvalidShell { radius, cutoff });
    }
    if strength == 0.0 || exponent == 0.0 {
        return Ok((DefectRecord::ZERO, None));
    }
    let ev = shell_evidence(strength, exponent, radius, cutoff, opts)?;
    for (class, side) in [(ev.inner, Side::Right), (ev.outer, Side::Left)] {
        if class.is_indeterminate() {
            return Err(ChannelError::ShellIndeterminate { side });
        }
    }
    let record = if ev.inner == EndpointClass::LimitCircle || ev.outer == EndpointClass::LimitCircle
    {
        DefectRecord::symmetric(ExtNat::Infinite)
    } else {
        DefectRecord::ZERO
    };
    Ok((record, Some(ev)))
}
