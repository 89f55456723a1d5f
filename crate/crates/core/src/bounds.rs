//! Relative-bound arithmetic for localized perturbations, the Hardy form
//! bound for inverse-square potentials, and the locally uniform `L^p` test.
//!
//! Bounds are kept in squared form, `‖Bf‖² ≤ a ‖Af‖² + b ‖f‖²` (or the
//! quadratic-form analogue).

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{self, Mode};
use crate::geometry::distance;
use crate::grid_table::{GridTable, GridTableError};
use crate::quad::{ball_volume, sphere_area, GaussLegendre};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoundsError {
    #[error("coefficient {name} = {value} must be finite and non-negative")]
    InvalidCoefficient { name: &'static str, value: f64 },
    #[error("expected a {expected:?} bound, got {found:?}")]
    KindMismatch { expected: BoundKind, found: BoundKind },
    #[error("ε must be positive and finite, got {0}")]
    InvalidEpsilon(f64),
    #[error("Hardy inequality needs γ < (n−2)²/4 = {limit}, got γ = {gamma}")]
    HardyViolation { gamma: f64, limit: f64 },
    #[error("dimension {0} is below 3")]
    DimensionTooSmall(usize),
    #[error("exponent p = {p} is not admissible in dimension {n} (need p ≥ 2 for n ≤ 3, p > n/2 otherwise)")]
    InadmissibleExponent { n: usize, p: f64 },
    #[error("sampled potential: {0}")]
    Table(#[from] GridTableError),
    #[error("sampled potential has {found} axes, expected {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("singular site tag: {0}")]
    InvalidTag(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundKind {
    Form,
    Operator,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativeBound {
    pub a: f64,
    pub b: f64,
    pub kind: BoundKind,
}

fn non_negative(name: &'static str, value: f64) -> Result<f64, BoundsError> {
    if value.is_finite() && value >= 0.0 {
        Ok(value)
    } else {
        Err(BoundsError::InvalidCoefficient { name, value })
    }
}

impl RelativeBound {
    pub fn new(a: f64, b: f64, kind: BoundKind) -> Result<Self, BoundsError> {
        Ok(RelativeBound {
            a: non_negative("a", a)?,
            b: non_negative("b", b)?,
            kind,
        })
    }

    pub fn form(a: f64, b: f64) -> Result<Self, BoundsError> {
        Self::new(a, b, BoundKind::Form)
    }

    pub fn operator(a: f64, b: f64) -> Result<Self, BoundsError> {
        Self::new(a, b, BoundKind::Operator)
    }
}

/// Constants of a partition: the local-to-global constant `c` and the
/// commutator constants `(d, e)` in `Σ ‖T^{1/2} Φ_j f‖² ≤ d ‖T^{1/2} f‖² + e ‖f‖²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionData {
    pub c: f64,
    pub d: f64,
    pub e: f64,
}

impl PartitionData {
    pub fn new(c: f64, d: f64, e: f64) -> Result<Self, BoundsError> {
        for (name, v) in [("c", c), ("d", d)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(BoundsError::InvalidCoefficient { name, value: v });
            }
        }
        Ok(PartitionData {
            c,
            d,
            e: non_negative("e", e)?,
        })
    }
}

fn morgan(local: RelativeBound, p: PartitionData, kind: BoundKind) -> Result<RelativeBound, BoundsError> {
    if local.kind != kind {
        return Err(BoundsError::KindMismatch {
            expected: kind,
            found: local.kind,
        });
    }
    Ok(RelativeBound {
        a: local.a * p.c * p.d,
        b: local.a * p.c * p.e + local.b * p.c,
        kind,
    })
}

/// Global form bound `(a c d, a c e + b c)` from a uniform local one.
pub fn morgan_form_bound(local: RelativeBound, p: PartitionData) -> Result<RelativeBound, BoundsError> {
    morgan(local, p, BoundKind::Form)
}

/// Global operator bound, same arithmetic as [`morgan_form_bound`].
pub fn morgan_operator_bound(
    local: RelativeBound,
    p: PartitionData,
) -> Result<RelativeBound, BoundsError> {
    morgan(local, p, BoundKind::Operator)
}

/// `(d, e) = (1 + ε, (1 + ε) ẽ / ε)` from a commutator bound with constant `ẽ`.
pub fn commutator_to_iii(e_tilde: f64, epsilon: f64) -> Result<(f64, f64), BoundsError> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(BoundsError::InvalidEpsilon(epsilon));
    }
    let e_tilde = non_negative("ẽ", e_tilde)?;
    Ok((1.0 + epsilon, (1.0 + epsilon) * e_tilde / epsilon))
}

/// Coefficients `(ε²/(4+2ε), εe/(2+ε))` of the commutator bound that yields
/// the partition condition with `d = 1 + ε`.
pub fn operator_commutator_gate(epsilon: f64, e: f64) -> Result<(f64, f64), BoundsError> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(BoundsError::InvalidEpsilon(epsilon));
    }
    let e = non_negative("e", e)?;
    Ok((
        epsilon * epsilon / (4.0 + 2.0 * epsilon),
        epsilon * e / (2.0 + epsilon),
    ))
}

/// Deficiency indices survive the perturbation when the global leading
/// coefficient is strictly below 1.
pub fn defect_invariance_gate(global: &RelativeBound) -> bool {
    global.a < 1.0
}

/// `(n − 2)²/4`.
pub fn hardy_constant(n: usize) -> f64 {
    let k = n as f64 - 2.0;
    k * k / 4.0
}

/// Form bound of `γ/|x|²` relative to `−Δ`: `a = γ / ((n−2)²/4)`, `b = 0`.
pub fn hardy_form_bound(n: usize, gamma: f64) -> Result<RelativeBound, BoundsError> {
    if n < 3 {
        return Err(BoundsError::DimensionTooSmall(n));
    }
    let gamma = non_negative("γ", gamma)?;
    let limit = hardy_constant(n);
    if gamma >= limit {
        return Err(BoundsError::HardyViolation { gamma, limit });
    }
    RelativeBound::form(gamma / limit, 0.0)
}

/// Radial test profile `f(r) = (r + η)^{−α} (1 − r)² (1 + c₁ r + c₂ r²)` on `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HardyProfile {
    pub eta: f64,
    pub alpha: f64,
    pub c1: f64,
    pub c2: f64,
}

impl HardyProfile {
    pub fn random<R: Rng>(n: usize, rng: &mut R) -> Self {
        HardyProfile {
            eta: 10f64.powf(rng.random_range(-4.0..0.0)),
            alpha: rng.random_range(0.0..=(n as f64 - 2.0) / 2.0),
            c1: rng.random_range(-0.5..0.5),
            c2: rng.random_range(-0.5..0.5),
        }
    }

    pub fn value(&self, r: f64) -> f64 {
        let w = 1.0 - r;
        (r + self.eta).powf(-self.alpha) * w * w * (1.0 + self.c1 * r + self.c2 * r * r)
    }

    pub fn derivative(&self, r: f64) -> f64 {
        let w = 1.0 - r;
        let p = 1.0 + self.c1 * r + self.c2 * r * r;
        let dp = self.c1 + 2.0 * self.c2 * r;
        let s = (r + self.eta).powf(-self.alpha);
        let ds = -self.alpha * (r + self.eta).powf(-self.alpha - 1.0);
        ds * w * w * p - 2.0 * s * w * p + s * w * w * dp
    }
}

/// `γ ∫ f²/r² dx / ∫ |∇f|² dx` for a radial profile in `ℝⁿ`, by
/// Gauss–Legendre quadrature on geometrically graded panels.
pub fn hardy_ratio(n: usize, gamma: f64, f: &HardyProfile) -> f64 {
    let gl = GaussLegendre::new(16);
    let pow = n as i32;
    let mut num = 0.0;
    let mut den = 0.0;
    let mut add = |a: f64, b: f64| {
        num += gl.integrate(a, b, |r| {
            let v = f.value(r);
            v * v * r.powi(pow - 3)
        });
        den += gl.integrate(a, b, |r| {
            let d = f.derivative(r);
            d * d * r.powi(pow - 1)
        });
    };
    let panels = 80;
    let r0 = 1e-10f64;
    add(0.0, r0);
    for k in 0..panels {
        let a = r0 * (1.0 / r0).powf(k as f64 / panels as f64);
        let b = r0 * (1.0 / r0).powf((k + 1) as f64 / panels as f64);
        add(a, b);
    }
    gamma * num / den
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardyCertificate {
    pub dimension: usize,
    pub gamma: f64,
    pub bound: RelativeBound,
    pub profiles: usize,
    pub max_ratio: f64,
    /// `max_ratio ≤ a + 10⁻⁶`
    pub pass: bool,
}

pub const HARDY_ORACLE_SLACK: f64 = 1e-6;

/// The Hardy bound together with quadrature evidence over random profiles.
pub fn hardy_certificate(
    n: usize,
    gamma: f64,
    profiles: usize,
    seed: u64,
) -> Result<HardyCertificate, BoundsError> {
    let bound = hardy_form_bound(n, gamma)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_ratio = (0..profiles)
        .map(|_| hardy_ratio(n, gamma, &HardyProfile::random(n, &mut rng)))
        .fold(0.0, f64::max);
    Ok(HardyCertificate {
        dimension: n,
        gamma,
        bound,
        profiles,
        max_ratio,
        pass: max_ratio <= bound.a + HARDY_ORACLE_SLACK,
    })
}

/// `|V| ≈ coefficient · |x − position|^{−exponent}` on `B(position, radius)`;
/// the ball is excluded from quadrature and integrated in closed form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularTag {
    pub position: Vec<f64>,
    pub radius: f64,
    pub coefficient: f64,
    pub exponent: f64,
}

impl SingularTag {
    /// `∫_{B(0,ρ)} |c|^p r^{−σp} dx`.
    pub fn ball_integral(&self, n: usize, p: f64) -> f64 {
        let k = n as f64 - self.exponent * p;
        if k <= 0.0 {
            return f64::INFINITY;
        }
        let area = sphere_area(n - 1);
        self.coefficient.abs().powf(p) * area * self.radius.powf(k) / k
    }
}

/// A potential sampled on a grid table (column `V`, multilinear in between).
#[derive(Debug, Clone, PartialEq)]
pub struct SampledPotential {
    pub table: GridTable,
    values: Vec<f64>,
    pub singular: Vec<SingularTag>,
}

pub const POTENTIAL_COLUMN: &str = "V";

impl SampledPotential {
    pub fn new(table: GridTable, singular: Vec<SingularTag>) -> Result<Self, BoundsError> {
        if table.dim() > 16 {
            return Err(BoundsError::DimensionMismatch {
                expected: 16,
                found: table.dim(),
            });
        }
        let values = table.column(POTENTIAL_COLUMN)?;
        for t in &singular {
            if t.position.len() != table.dim() {
                return Err(BoundsError::DimensionMismatch {
                    expected: table.dim(),
                    found: t.position.len(),
                });
            }
            if !(t.radius > 0.0 && t.radius.is_finite()) {
                return Err(BoundsError::InvalidTag(format!("radius {} must be positive", t.radius)));
            }
        }
        Ok(SampledPotential {
            table,
            values,
            singular,
        })
    }

    /// Sample `v` on a grid with `per_axis` nodes over `[lo, hi]ⁿ`.
    pub fn from_fn<F: Fn(&[f64]) -> f64>(
        n: usize,
        lo: f64,
        hi: f64,
        per_axis: usize,
        singular: Vec<SingularTag>,
        v: F,
    ) -> Result<Self, BoundsError> {
        let h = (hi - lo) / (per_axis - 1) as f64;
        let mut t = GridTable::new(
            vec![per_axis; n],
            vec![lo; n],
            vec![h; n],
            vec![POTENTIAL_COLUMN.into()],
        )?;
        t.fill(|x| vec![v(x)]);
        Self::new(t, singular)
    }

    /// Multilinear interpolation; `None` outside the grid box.
    pub fn interpolate(&self, x: &[f64]) -> Option<f64> {
        let t = &self.table;
        let n = t.dim();
        let mut base = 0usize;
        let mut stride = 1usize;
        let mut frac = [0.0f64; 16];
        let mut step = [0usize; 16];
        for k in (0..n).rev() {
            let u = (x[k] - t.origin[k]) / t.spacing[k];
            let m = t.shape[k];
            if u < -1e-12 || u > (m - 1) as f64 + 1e-12 {
                return None;
            }
            if m > 1 {
                let i = (u.floor().max(0.0) as usize).min(m - 2);
                base += i * stride;
                frac[k] = (u - i as f64).clamp(0.0, 1.0);
                step[k] = stride;
            }
            stride *= m;
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << n) {
            let mut w = 1.0;
            let mut idx = base;
            for k in 0..n {
                if corner >> k & 1 == 1 {
                    w *= frac[k];
                    idx += step[k];
                } else {
                    w *= 1.0 - frac[k];
                }
            }
            if w != 0.0 {
                acc += w * self.values[idx];
            }
        }
        Some(acc)
    }

    fn box_center_range(&self) -> Vec<(f64, f64)> {
        let t = &self.table;
        (0..t.dim())
            .map(|k| {
                (
                    t.origin[k],
                    t.origin[k] + (t.shape[k] - 1) as f64 * t.spacing[k],
                )
            })
            .collect()
    }
}

/// Unit vectors and weights integrating over `S^{n−1}`.
fn sphere_rule(n: usize, nodes: usize) -> Vec<(Vec<f64>, f64)> {
    match n {
        1 => vec![(vec![1.0], 1.0), (vec![-1.0], 1.0)],
        2 => {
            let m = 2 * nodes;
            (0..m)
                .map(|k| {
                    let t = 2.0 * PI * k as f64 / m as f64;
                    (vec![t.cos(), t.sin()], 2.0 * PI / m as f64)
                })
                .collect()
        }
        _ => {
            let gl = GaussLegendre::new(nodes);
            let inner = sphere_rule(n - 1, nodes);
            let mut out = Vec::new();
            for (theta, w) in gl.nodes_on(0.0, PI) {
                let (s, c) = theta.sin_cos();
                let wt = w * s.powi(n as i32 - 2);
                for (v, u) in &inner {
                    let mut p = Vec::with_capacity(n);
                    p.push(c);
                    p.extend(v.iter().map(|x| x * s));
                    out.push((p, wt * u));
                }
            }
            out
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpCheck {
    pub dimension: usize,
    pub p: f64,
    /// `sup_x ‖V χ_{B(x;1)}‖_p` over the scanned centres.
    pub estimate: f64,
    pub argmax: Vec<f64>,
    pub cap: f64,
    pub balls: usize,
    /// Some scanned ball reaches outside the sampled box (treated as `V = 0`).
    pub truncated: bool,
    pub pass: bool,
}

pub fn admissible_exponent(n: usize, p: f64) -> bool {
    if n <= 3 {
        p >= 2.0
    } else {
        p > n as f64 / 2.0
    }
}

/// `‖V‖_{L^p(B(center;1))}` by polar quadrature around `center`, with tagged
/// singular balls excised and added analytically.
fn ball_norm(v: &SampledPotential, center: &[f64], p: f64, rule: &[(Vec<f64>, f64)]) -> (f64, bool) {
    let n = center.len();
    let gl = GaussLegendre::new(12);
    let mut analytic = 0.0;
    let mut breaks = vec![0.0, 1.0];
    for t in &v.singular {
        let d = distance(center, &t.position);
        if d < 1.0 + t.radius {
            // overlapping tags are charged their whole ball, an upper estimate
            analytic += t.ball_integral(n, p);
            for b in [d - t.radius, d + t.radius] {
                if b > 0.0 && b < 1.0 {
                    breaks.push(b);
                }
            }
        }
    }
    if !analytic.is_finite() {
        return (f64::INFINITY, false);
    }
    breaks.sort_by(f64::total_cmp);
    let mut truncated = false;
    let mut total = 0.0;
    let mut x = vec![0.0; n];
    for w in breaks.windows(2) {
        let panels = ((w[1] - w[0]) * 6.0).ceil().max(1.0) as usize;
        total += gl.integrate_composite(w[0], w[1], panels, |r| {
            let mut s = 0.0;
            for (u, wt) in rule {
                for k in 0..n {
                    x[k] = center[k] + r * u[k];
                }
                if v.singular
                    .iter()
                    .any(|t| distance(&x, &t.position) < t.radius)
                {
                    continue;
                }
                match v.interpolate(&x) {
                    Some(val) => s += wt * val.abs().powf(p),
                    None => truncated = true,
                }
            }
            s * r.powi(n as i32 - 1)
        });
    }
    ((total + analytic).powf(1.0 / p), truncated)
}

/// Sup over unit balls centred at the integer points of the sampled box and
/// at every tagged singular site.
pub fn loc_unif_lp_check(
    v: &SampledPotential,
    n: usize,
    p: f64,
    cap: f64,
    mode: Mode,
) -> Result<LpCheck, BoundsError> {
    if v.table.dim() != n {
        return Err(BoundsError::DimensionMismatch {
            expected: n,
            found: v.table.dim(),
        });
    }
    if !admissible_exponent(n, p) {
        return Err(BoundsError::InadmissibleExponent { n, p });
    }
    let range = v.box_center_range();
    let mut centers: Vec<Vec<f64>> = vec![Vec::new()];
    for (lo, hi) in &range {
        let ks: Vec<i64> = (lo.ceil() as i64..=hi.floor() as i64).collect();
        centers = centers
            .into_iter()
            .flat_map(|c| {
                ks.iter().map(move |k| {
                    let mut c = c.clone();
                    c.push(*k as f64);
                    c
                })
            })
            .collect();
    }
    centers.extend(v.singular.iter().map(|t| t.position.clone()));
    let nodes = if n <= 3 { 16 } else { 6 };
    let rule = sphere_rule(n, nodes);
    let norms = exec::map(mode, &centers, |c| ball_norm(v, c, p, &rule));
    let mut best = (f64::NEG_INFINITY, Vec::new());
    let mut truncated = false;
    for (c, (val, t)) in centers.iter().zip(norms) {
        truncated |= t;
        if val > best.0 {
            best = (val, c.clone());
        }
    }
    Ok(LpCheck {
        dimension: n,
        p,
        estimate: best.0,
        argmax: best.1,
        cap,
        balls: centers.len(),
        truncated,
        pass: best.0.is_finite() && best.0 < cap,
    })
}

/// `|B_n(0;1)|^{1/p}`, the norm of `V ≡ 1`.
pub fn unit_ball_norm(n: usize, p: f64) -> f64 {
    ball_volume(n).powf(1.0 / p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn morgan_examples() {
        let f = |a, b| RelativeBound::form(a, b).unwrap();
        let p = |c, d, e| PartitionData::new(c, d, e).unwrap();
        assert_eq!(morgan_form_bound(f(0.5, 10.0), p(1.0, 1.0, 0.0)).unwrap(), f(0.5, 10.0));
        assert_eq!(morgan_form_bound(f(0.5, 0.0), p(1.0, 2.0, 3.0)).unwrap(), f(1.0, 1.5));
        assert_eq!(morgan_form_bound(f(0.0, 7.0), p(2.0, 5.0, 9.0)).unwrap(), f(0.0, 14.0));
        let op = RelativeBound::operator(0.5, 0.0).unwrap();
        assert_eq!(
            morgan_operator_bound(op, p(1.0, 2.0, 3.0)).unwrap(),
            RelativeBound::operator(1.0, 1.5).unwrap()
        );
        assert!(matches!(
            morgan_operator_bound(f(0.5, 0.0), p(1.0, 1.0, 0.0)),
            Err(BoundsError::KindMismatch { .. })
        ));
    }

    #[test]
    fn commutator_examples() {
        assert_eq!(commutator_to_iii(0.0, 0.1).unwrap(), (1.1, 0.0));
        assert_eq!(commutator_to_iii(2.0, 1.0).unwrap(), (2.0, 4.0));
        assert_eq!(operator_commutator_gate(2.0, 0.0).unwrap(), (0.5, 0.0));
        let (t, i) = operator_commutator_gate(1.0, 3.0).unwrap();
        assert_relative_eq!(t, 1.0 / 6.0);
        assert_eq!(i, 1.0);
        assert!(commutator_to_iii(1.0, 0.0).is_err());
    }

    #[test]
    fn gate() {
        let g = |a| defect_invariance_gate(&RelativeBound::operator(a, 0.0).unwrap());
        assert!(g(0.99));
        assert!(!g(1.0));
        assert!(g(0.0));
    }

    #[test]
    fn hardy_examples() {
        assert_relative_eq!(hardy_form_bound(3, 0.2).unwrap().a, 0.8, epsilon = 1e-15);
        assert_eq!(hardy_form_bound(5, 0.0).unwrap().a, 0.0);
        assert!(matches!(hardy_form_bound(3, 0.25), Err(BoundsError::HardyViolation { .. })));
        assert_eq!(hardy_form_bound(2, 0.0), Err(BoundsError::DimensionTooSmall(2)));
    }

    #[test]
    fn hardy_ratio_of_a_plain_profile() {
        // f = (1 − r)² in ℝ³: ∫ f² dr = 1/5, ∫ f′² r² dr = 4 ∫ (1−r)² r² = 2/15
        let f = HardyProfile {
            eta: 1.0,
            alpha: 0.0,
            c1: 0.0,
            c2: 0.0,
        };
        assert_relative_eq!(hardy_ratio(3, 1.0, &f), 1.5, epsilon = 1e-12);
    }

    #[test]
    fn sphere_rule_weights() {
        for n in 1..=5 {
            let s: f64 = sphere_rule(n, 8).iter().map(|(_, w)| w).sum();
            assert_relative_eq!(s, sphere_area(n - 1), max_relative = 1e-6);
        }
    }

    #[test]
    fn constant_potential() {
        for n in 1..=3 {
            let v = SampledPotential::from_fn(n, -2.0, 2.0, 9, vec![], |_| 1.0).unwrap();
            let r = loc_unif_lp_check(&v, n, 2.0, 10.0, Mode::default()).unwrap();
            assert_relative_eq!(r.estimate, unit_ball_norm(n, 2.0), max_relative = 1e-9);
            assert!(r.pass);
        }
    }

    #[test]
    fn coulomb_in_three_dimensions() {
        let tag = SingularTag {
            position: vec![0.0; 3],
            radius: 0.25,
            coefficient: 1.0,
            exponent: 1.0,
        };
        let v = SampledPotential::from_fn(3, -2.0, 2.0, 81, vec![tag], |x| {
            let r = crate::geometry::norm(x);
            if r == 0.0 {
                f64::INFINITY
            } else {
                1.0 / r
            }
        })
        .unwrap();
        let r = loc_unif_lp_check(&v, 3, 2.0, 100.0, Mode::default()).unwrap();
        assert!(r.pass);
        assert_eq!(r.argmax, vec![0.0; 3]);
        assert_relative_eq!(r.estimate, (4.0 * PI).sqrt(), max_relative = 0.02);
    }

    #[test]
    fn inadmissible() {
        let v = SampledPotential::from_fn(5, -1.0, 1.0, 3, vec![], |_| 1.0).unwrap();
        assert_eq!(
            loc_unif_lp_check(&v, 5, 1.0, 1.0, Mode::Sequential),
            Err(BoundsError::InadmissibleExponent { n: 5, p: 1.0 })
        );
    }
}
