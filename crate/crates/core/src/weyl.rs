//! Numerical Weyl limit-point / limit-circle classification of a singular
//! endpoint of `−u″ + q(r) u = z u`, `z = ±i`.
//!
//! Two solutions with data `(1, 0)` and `(0, 1)` at the anchor are integrated
//! toward the singular endpoint across a dyadic window sequence. The summed
//! window integrals `T_k = ∫_{W_k} |u|² + |v|²` are dominated by the least
//! square-integrable direction, so their fitted decay exponent decides whether
//! every solution is `L²` near the endpoint (limit circle) or not (limit point).
//! In the limit-point case the one `L²` direction is extracted by integrating
//! away from the endpoint and checked for decay separately.
//!
//! Finite endpoints `e` are integrated in `t = ln|r − e|`, which turns the
//! `r⁻²` stiffness of inverse-square couplings into constant coefficients:
//! with `u(r) = w(t)`, `w_tt = w_t + |r−e|² (q(r) − z) w`.

use std::cell::Cell;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::{self, Mode};
use crate::ode::{Dopri5, OdeError, Stepper};

/// The limit-point threshold for `q₀ r⁻²` at `r = 0`.
pub const INVERSE_SQUARE_THRESHOLD: f64 = 0.75;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum EndpointClass {
    LimitPoint,
    LimitCircle,
    BoundaryIndeterminate { band: f64 },
}

impl EndpointClass {
    pub fn is_indeterminate(&self) -> bool {
        matches!(self, EndpointClass::BoundaryIndeterminate { .. })
    }

    pub fn short(&self) -> &'static str {
        match self {
            EndpointClass::LimitPoint => "LP",
            EndpointClass::LimitCircle => "LC",
            EndpointClass::BoundaryIndeterminate { .. } => "indeterminate",
        }
    }
}

impl fmt::Display for EndpointClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EndpointClass::LimitPoint => f.write_str("limit point"),
            EndpointClass::LimitCircle => f.write_str("limit circle"),
            EndpointClass::BoundaryIndeterminate { band } => {
                write!(f, "indeterminate (band {band:e})")
            }
        }
    }
}

/// Spectral parameter `±i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Spectral {
    #[serde(rename = "+i")]
    PlusI,
    #[serde(rename = "-i")]
    MinusI,
}

impl Spectral {
    pub fn value(self) -> Complex64 {
        match self {
            Spectral::PlusI => Complex64::new(0.0, 1.0),
            Spectral::MinusI => Complex64::new(0.0, -1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WeylError {
    #[error("integration failed before the innermost window: {0}")]
    IntegrationFailure(#[from] OdeError),
    #[error("coefficient is not finite at r = {0:e}")]
    NonFiniteCoefficient(f64),
    #[error("anchor {anchor} is not interior to ({left}, {right})")]
    BadAnchor { anchor: f64, left: f64, right: f64 },
    #[error("endpoint classification is indeterminate")]
    Indeterminate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

pub type Coefficient = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// `−u″ + q u` on `(left, right)` with one singular endpoint.
#[derive(Clone)]
pub struct RadialProblem {
    q: Coefficient,
    left: f64,
    right: f64,
    singular: Side,
    anchor: f64,
}

impl fmt::Debug for RadialProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RadialProblem")
            .field("left", &self.left)
            .field("right", &self.right)
            .field("singular", &self.singular)
            .field("anchor", &self.anchor)
            .finish_non_exhaustive()
    }
}

impl RadialProblem {
    pub fn new(
        q: Coefficient,
        left: f64,
        right: f64,
        singular: Side,
        anchor: f64,
    ) -> Result<Self, WeylError> {
        if !(anchor > left && anchor < right) || (singular == Side::Left && !left.is_finite()) {
            return Err(WeylError::BadAnchor {
                anchor,
                left,
                right,
            });
        }
        Ok(RadialProblem {
            q,
            left,
            right,
            singular,
            anchor,
        })
    }

    /// Endpoint `r = 0` of `(0, ∞)` with anchor `r*`.
    pub fn at_zero<F>(q: F, anchor: f64) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self::new(Arc::new(q), 0.0, f64::INFINITY, Side::Left, anchor)
            .expect("positive anchor is interior")
    }

    /// Endpoint `r = ∞` of `(left, ∞)`.
    pub fn at_infinity<F>(q: F, left: f64, anchor: f64) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self::new(Arc::new(q), left, f64::INFINITY, Side::Right, anchor)
            .expect("anchor must lie right of the left endpoint")
    }

    /// `q₀ / r²` at `r = 0`, anchored at `r* = 1`.
    pub fn inverse_square(q0: f64) -> Self {
        Self::at_zero(move |r| q0 / (r * r), 1.0)
    }

    pub fn coefficient(&self) -> &Coefficient {
        &self.q
    }

    pub fn anchor(&self) -> f64 {
        self.anchor
    }

    pub fn singular_side(&self) -> Side {
        self.singular
    }

    pub fn endpoint(&self) -> f64 {
        match self.singular {
            Side::Left => self.left,
            Side::Right => self.right,
        }
    }

    /// Same problem with `q + Ṽ`.
    pub fn perturbed<F>(&self, perturbation: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let q = self.q.clone();
        RadialProblem {
            q: Arc::new(move |r| q(r) + perturbation(r)),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeylOptions {
    /// Dyadic windows toward a finite endpoint.
    pub windows: usize,
    /// Doubling windows toward `∞`.
    pub infinite_windows: usize,
    /// Windows entering the exponent fit.
    pub fit_windows: usize,
    /// Half-width of the indeterminate band around `ν̂ = 1`.
    pub band: f64,
    pub rtol: f64,
    pub max_steps: usize,
}

impl Default for WeylOptions {
    fn default() -> Self {
        WeylOptions {
            windows: 40,
            infinite_windows: 12,
            fit_windows: 8,
            band: DEFAULT_BAND,
            rtol: 1e-10,
            max_steps: 2_000_000,
        }
    }
}

/// Default indeterminate band on `|ν̂ − 1|`.
pub const DEFAULT_BAND: f64 = 2.5e-4;

/// Squared-amplitude contrast (natural log) tolerated between the dominant and
/// the extracted `L²` direction before round-off swamps the latter.
const SUBDOMINANT_CONTRAST: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeylEvidence {
    pub class: EndpointClass,
    /// Fitted decay exponent `p̂` of the window integrals toward the endpoint;
    /// positive means summable.
    pub decay_exponent: f64,
    /// `ν̂ = 1 − p̂/2`; the `L²` borderline sits at `ν̂ = 1`.
    pub nu_hat: f64,
    /// `ln T_k`, `k = 1..K`.
    pub log_window_integrals: Vec<f64>,
    /// Decay exponent of the extracted `L²` direction (limit-point case), when
    /// enough windows resolve it.
    pub subdominant_exponent: Option<f64>,
    pub steps: usize,
}

/// Closed-form classification of `q₀ r⁻²` at `r = 0`.
pub fn frobenius_classify_inverse_square(q0: f64) -> EndpointClass {
    if q0 >= INVERSE_SQUARE_THRESHOLD {
        EndpointClass::LimitPoint
    } else {
        EndpointClass::LimitCircle
    }
}

pub fn weyl_classify_numeric(
    p: &RadialProblem,
    z: Spectral,
    opts: &WeylOptions,
) -> Result<EndpointClass, WeylError> {
    weyl_classify_detailed(p, z, opts).map(|e| e.class)
}

/// Integration variable layout for one problem.
#[derive(Clone, Copy)]
enum Chart {
    /// `r = e + σ eᵗ`
    Log { endpoint: f64, sigma: f64 },
    /// `r` itself, toward `+∞`
    Linear,
}

impl Chart {
    fn of(p: &RadialProblem) -> Chart {
        match p.singular {
            Side::Left => Chart::Log {
                endpoint: p.left,
                sigma: 1.0,
            },
            Side::Right if p.right.is_finite() => Chart::Log {
                endpoint: p.right,
                sigma: -1.0,
            },
            Side::Right => Chart::Linear,
        }
    }

    fn anchor_coord(self, anchor: f64) -> f64 {
        match self {
            Chart::Log { endpoint, .. } => (anchor - endpoint).abs().ln(),
            Chart::Linear => anchor,
        }
    }

    /// Window boundaries `s_0 = anchor, s_1, …, s_K`.
    fn windows(self, anchor: f64, opts: &WeylOptions) -> Vec<f64> {
        match self {
            Chart::Log { .. } => {
                let t0 = self.anchor_coord(anchor);
                (0..=opts.windows)
                    .map(|k| t0 - k as f64 * std::f64::consts::LN_2)
                    .collect()
            }
            Chart::Linear => {
                let scale = anchor.abs().max(1.0);
                (0..=opts.infinite_windows)
                    .map(|k| anchor + scale * (2f64.powi(k as i32) - 1.0))
                    .collect()
            }
        }
    }

    fn radius(self, s: f64) -> f64 {
        match self {
            Chart::Log { endpoint, sigma } => endpoint + sigma * s.exp(),
            Chart::Linear => s,
        }
    }

    /// `w_t` from `u'` at radius `r`.
    fn derivative_to_chart(self, r: f64, du: Complex64) -> Complex64 {
        match self {
            Chart::Log { endpoint, .. } => du * (r - endpoint),
            Chart::Linear => du,
        }
    }
}

/// Integrates `cols` solutions (each `(w, w_s)`) plus their Gram entries.
struct Propagator<'a> {
    p: &'a RadialProblem,
    chart: Chart,
    z: Complex64,
    bad: Cell<Option<f64>>,
}

impl<'a> Propagator<'a> {
    /// Right-hand side. State layout: `cols` pairs `(w, w_s)`, then the Gram
    /// integrand accumulators (`|w₀|²`, `|w₁|²`, `w₀ w̄₁` for two columns, or
    /// `|w₀|²` for one).
    fn rhs(&self, s: f64, y: &[Complex64], dy: &mut [Complex64], cols: usize) {
        let r = self.chart.radius(s);
        let q = (self.p.q)(r);
        if !q.is_finite() && self.bad.get().is_none() {
            self.bad.set(Some(r));
        }
        let (coef, weight) = match self.chart {
            Chart::Log { .. } => ((Complex64::new(q, 0.0) - self.z) * (2.0 * s).exp(), s.exp()),
            Chart::Linear => (Complex64::new(q, 0.0) - self.z, 1.0),
        };
        let first_order = matches!(self.chart, Chart::Log { .. });
        for c in 0..cols {
            let w = y[2 * c];
            let ws = y[2 * c + 1];
            dy[2 * c] = ws;
            dy[2 * c + 1] = if first_order { ws + coef * w } else { coef * w };
        }
        let g = 2 * cols;
        if cols == 2 {
            dy[g] = Complex64::new(y[0].norm_sqr() * weight, 0.0);
            dy[g + 1] = Complex64::new(y[2].norm_sqr() * weight, 0.0);
            dy[g + 2] = y[0] * y[2].conj() * weight;
        } else {
            dy[g] = Complex64::new(y[0].norm_sqr() * weight, 0.0);
        }
    }

    /// Walk the windows starting from `y` (at `bounds[0]`), returning the
    /// log window integrals of the trace of the Gram matrix.
    fn sweep(
        &self,
        stepper: &mut Stepper,
        bounds: &[f64],
        y: &mut Vec<Complex64>,
        cols: usize,
    ) -> Result<Vec<f64>, WeylError> {
        let controlled = 2 * cols;
        let mut log_scale = 0.0f64;
        let mut out = Vec::with_capacity(bounds.len().saturating_sub(1));
        for win in bounds.windows(2) {
            for g in &mut y[controlled..] {
                *g = Complex64::new(0.0, 0.0);
            }
            let stepped = stepper.integrate(
                |s, y, dy| self.rhs(s, y, dy, cols),
                win[0],
                win[1],
                y,
                controlled,
                |y| rescale(y, controlled, &mut log_scale),
            );
            if let Some(r) = self.bad.get() {
                return Err(WeylError::NonFiniteCoefficient(r));
            }
            stepped?;
            let trace: f64 = y[controlled..]
                .iter()
                .take(if cols == 2 { 2 } else { 1 })
                .map(|g| g.re)
                .sum();
            out.push(trace.abs().ln() + 2.0 * log_scale);
            let m = max_norm(&y[..controlled]);
            if m > 0.0 && m.is_finite() {
                for v in y.iter_mut() {
                    *v /= m;
                }
                log_scale += m.ln();
            }
        }
        Ok(out)
    }
}

fn max_norm(y: &[Complex64]) -> f64 {
    y.iter().map(|v| v.norm()).fold(0.0, f64::max)
}

fn rescale(y: &mut [Complex64], controlled: usize, log_scale: &mut f64) {
    let m = max_norm(&y[..controlled]);
    if m > 1e100 || (m < 1e-100 && m > 0.0) {
        let inv = 1.0 / m;
        for v in &mut y[..controlled] {
            *v *= inv;
        }
        for v in &mut y[controlled..] {
            *v *= inv * inv;
        }
        *log_scale += m.ln();
    }
}

/// `(ln a − ln b)/(count · ln 2)` over a log-integral sequence.
fn fitted_exponent(logs: &[f64], from: usize, to: usize) -> f64 {
    (logs[from] - logs[to]) / ((to - from) as f64 * std::f64::consts::LN_2)
}

pub fn weyl_classify_detailed(
    p: &RadialProblem,
    z: Spectral,
    opts: &WeylOptions,
) -> Result<WeylEvidence, WeylError> {
    let chart = Chart::of(p);
    let prop = Propagator {
        p,
        chart,
        z: z.value(),
        bad: Cell::new(None),
    };
    let bounds = chart.windows(p.anchor, opts);
    let k_total = bounds.len() - 1;
    let fit = opts.fit_windows.min(k_total - 1).max(1);
    let method = Dopri5 {
        rtol: opts.rtol,
        atol_scale: opts.rtol * 1e-2,
        max_steps: opts.max_steps,
    };
    let h0 = (bounds[1] - bounds[0]).abs() * 0.05;

    // both solutions toward the endpoint
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    let mut y = vec![
        one,
        zero,
        zero,
        chart.derivative_to_chart(p.anchor, one),
        zero,
        zero,
        zero,
    ];
    let mut stepper = Stepper::new(method, 7, h0);
    let logs = prop.sweep(&mut stepper, &bounds, &mut y, 2)?;
    let mut steps = stepper.steps;

    let decay = fitted_exponent(&logs, k_total - 1 - fit, k_total - 1);
    let nu_hat = 1.0 - decay / 2.0;

    let mut evidence = WeylEvidence {
        class: EndpointClass::LimitCircle,
        decay_exponent: decay,
        nu_hat,
        log_window_integrals: logs.clone(),
        subdominant_exponent: None,
        steps,
    };
    if !decay.is_finite() || (nu_hat - 1.0).abs() < opts.band {
        evidence.class = EndpointClass::BoundaryIndeterminate { band: opts.band };
        return Ok(evidence);
    }
    if decay > 0.0 {
        return Ok(evidence);
    }

    // Limit point: recover the one L² direction by integrating away from the
    // endpoint, where it dominates, then follow it back.
    let reversed: Vec<f64> = bounds.iter().rev().copied().collect();
    let mut back = vec![one, zero, zero];
    let mut stepper = Stepper::new(method, 3, h0);
    prop.sweep(&mut stepper, &reversed, &mut back, 1)?;
    steps += stepper.steps;
    let norm = max_norm(&back[..2]);
    let mut sub = vec![back[0] / norm, back[1] / norm, zero];
    let mut stepper = Stepper::new(method, 3, h0);
    let sub_logs = prop.sweep(&mut stepper, &bounds, &mut sub, 1)?;
    steps += stepper.steps;

    let mut usable = 0;
    for k in 0..k_total {
        let contrast = (logs[k] - logs[0]) - (sub_logs[k] - sub_logs[0]);
        if contrast > SUBDOMINANT_CONTRAST || !sub_logs[k].is_finite() {
            break;
        }
        usable = k + 1;
    }
    evidence.steps = steps;
    evidence.class = EndpointClass::LimitPoint;
    if usable >= 2 {
        let sub_decay = fitted_exponent(&sub_logs, 0, usable - 1);
        evidence.subdominant_exponent = Some(sub_decay);
        if !(sub_decay > 2.0 * opts.band) {
            // no convergent combination where one must exist
            evidence.class = EndpointClass::BoundaryIndeterminate { band: opts.band };
        }
    }
    Ok(evidence)
}

/// Deficiency index of a half-line channel from its two endpoint classes.
pub fn count_l2_solutions(inner: EndpointClass, outer: EndpointClass) -> Result<u64, WeylError> {
    match (inner, outer) {
        (EndpointClass::LimitCircle, EndpointClass::LimitCircle) => Ok(2),
        (EndpointClass::LimitCircle, EndpointClass::LimitPoint)
        | (EndpointClass::LimitPoint, EndpointClass::LimitCircle) => Ok(1),
        (EndpointClass::LimitPoint, EndpointClass::LimitPoint) => Ok(0),
        _ => Err(WeylError::Indeterminate),
    }
}

/// Classify `q` and `q + Ṽ` at the same endpoint and report agreement.
pub fn perturbation_stability_check<F>(
    p: &RadialProblem,
    perturbation: F,
    z: Spectral,
    opts: &WeylOptions,
) -> Result<bool, WeylError>
where
    F: Fn(f64) -> f64 + Send + Sync + 'static,
{
    let base = weyl_classify_numeric(p, z, opts)?;
    let moved = weyl_classify_numeric(&p.perturbed(perturbation), z, opts)?;
    Ok(base == moved)
}

/// Classify a batch of problems.
pub fn classify_batch(
    problems: &[RadialProblem],
    z: Spectral,
    opts: &WeylOptions,
    mode: Mode,
) -> Vec<Result<EndpointClass, WeylError>> {
    exec::map(mode, problems, |p| weyl_classify_numeric(p, z, opts))
}
