//! Smooth cutoffs from mollified indicators, cutoff families around separated
//! singularities, and the normalized lattice partition of unity.
//!
//! A cutoff between closed sets `F₀`, `F₁` at distance `≥ ε` is
//! `φ = 1_{F̃₁} * θ_a` with `a = ε/4`, `F̃₁` the closed `a`-neighbourhood of `F₁`
//! and `θ_a = a^{−n} θ(·/a)` for the normalized bump
//! `θ(x) = C_n exp(−1/(1−|x|²))`. For balls the convolution is a function of
//! the distance `s` to the centre. Its derivative is a surface integral over
//! the sphere of radius `ρ`,
//!
//! `Φ′(s) = −ρ^{n−1} |S^{n−2}| ∫₀^π θ_a(√(s²+ρ²−2sρ cos ψ)) cos ψ sin^{n−2} ψ dψ`,
//!
//! and `Φ` itself is tabulated by integrating `Φ′` inward from `ρ + a`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::ValidatedConfig;
use crate::exec::{self, Mode};
use crate::geometry::{distance, norm, Lattice, LatticeError};
use crate::grid_table::GridTable;
use crate::quad::{sphere_area, GaussLegendre};

/// Relative slack on the `dist(F₀, F₁) ≥ ε` check, absorbing rounding in
/// radii that are sums of fractions of `ε`.
const DISTANCE_SLACK: f64 = 1e-12;
/// Panels of the tabulated radial profile.
const TABLE_PANELS: usize = 256;
/// Verification tolerance on range and boundary values.
pub const BOUND_TOLERANCE: f64 = 1e-8;
/// Allowed relative spread of `ε^{|α|} max|∂^α φ|` across scales.
pub const SCALING_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PartitionError {
    #[error("dist(F₀, F₁) = {distance} is below ε = {epsilon}")]
    RegionsTooClose { distance: f64, epsilon: f64 },
    #[error("invalid region: {0}")]
    InvalidRegion(String),
    #[error("scale must be positive and finite, got {0}")]
    InvalidScale(f64),
    #[error("dimension must be at least 1")]
    InvalidDimension,
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

/// Closed subsets of `ℝⁿ` used as `F₀`, `F₁` and `A_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegionSpec {
    Empty,
    Whole,
    Ball { center: Vec<f64>, radius: f64 },
    /// `{x : |x − center| ≥ radius}`
    ComplementOfBall { center: Vec<f64>, radius: f64 },
    UnionOfBalls { balls: Vec<(Vec<f64>, f64)> },
    /// `{x : ⟨normal, x⟩ ≥ offset}` with `normal` normalized on construction.
    HalfSpace { normal: Vec<f64>, offset: f64 },
}

impl RegionSpec {
    pub fn ball(center: Vec<f64>, radius: f64) -> Self {
        RegionSpec::Ball { center, radius }
    }

    pub fn complement_of_ball(center: Vec<f64>, radius: f64) -> Self {
        RegionSpec::ComplementOfBall { center, radius }
    }

    pub fn half_space(normal: Vec<f64>, offset: f64) -> Self {
        let l = norm(&normal);
        RegionSpec::HalfSpace {
            normal: normal.iter().map(|v| v / l).collect(),
            offset: offset / l,
        }
    }

    fn validate(&self, n: usize) -> Result<(), PartitionError> {
        let bad = |m: String| Err(PartitionError::InvalidRegion(m));
        let check_ball = |c: &[f64], r: f64| {
            if c.len() != n {
                return bad(format!("centre has {} coordinates, expected {n}", c.len()));
            }
            if !(r > 0.0 && r.is_finite()) || c.iter().any(|x| !x.is_finite()) {
                return bad(format!("radius {r} must be positive and finite"));
            }
            Ok(())
        };
        match self {
            RegionSpec::Empty | RegionSpec::Whole => Ok(()),
            RegionSpec::Ball { center, radius } | RegionSpec::ComplementOfBall { center, radius } => {
                check_ball(center, *radius)
            }
            RegionSpec::UnionOfBalls { balls } => {
                if balls.is_empty() {
                    return bad("union of balls is empty".into());
                }
                balls.iter().try_for_each(|(c, r)| check_ball(c, *r))
            }
            RegionSpec::HalfSpace { normal, offset } => {
                if normal.len() != n {
                    return bad(format!("normal has {} coordinates, expected {n}", normal.len()));
                }
                if !((norm(normal) - 1.0).abs() < 1e-12) || !offset.is_finite() {
                    return bad("half-space normal must be a unit vector".into());
                }
                Ok(())
            }
        }
    }

    /// Distance from `x` to the set (0 inside).
    pub fn distance_to(&self, x: &[f64]) -> f64 {
        match self {
            RegionSpec::Empty => f64::INFINITY,
            RegionSpec::Whole => 0.0,
            RegionSpec::Ball { center, radius } => (distance(x, center) - radius).max(0.0),
            RegionSpec::ComplementOfBall { center, radius } => {
                (radius - distance(x, center)).max(0.0)
            }
            RegionSpec::UnionOfBalls { balls } => balls
                .iter()
                .map(|(c, r)| (distance(x, c) - r).max(0.0))
                .fold(f64::INFINITY, f64::min),
            RegionSpec::HalfSpace { normal, offset } => (offset - dot(normal, x)).max(0.0),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.distance_to(x) == 0.0
    }

    /// Uniform scaling about the origin.
    pub fn scaled(&self, k: f64) -> RegionSpec {
        let sc = |c: &[f64]| c.iter().map(|v| v * k).collect::<Vec<_>>();
        match self {
            RegionSpec::Empty => RegionSpec::Empty,
            RegionSpec::Whole => RegionSpec::Whole,
            RegionSpec::Ball { center, radius } => RegionSpec::Ball {
                center: sc(center),
                radius: radius * k,
            },
            RegionSpec::ComplementOfBall { center, radius } => RegionSpec::ComplementOfBall {
                center: sc(center),
                radius: radius * k,
            },
            RegionSpec::UnionOfBalls { balls } => RegionSpec::UnionOfBalls {
                balls: balls.iter().map(|(c, r)| (sc(c), r * k)).collect(),
            },
            RegionSpec::HalfSpace { normal, offset } => RegionSpec::HalfSpace {
                normal: normal.clone(),
                offset: offset * k,
            },
        }
    }

    /// A point and radius roughly enclosing the interesting part of the set.
    fn extent(&self) -> Option<(Vec<f64>, f64)> {
        match self {
            RegionSpec::Ball { center, radius } | RegionSpec::ComplementOfBall { center, radius } => {
                Some((center.clone(), *radius))
            }
            RegionSpec::UnionOfBalls { balls } => {
                let n = balls[0].0.len();
                let mut c = vec![0.0; n];
                for (b, _) in balls {
                    for k in 0..n {
                        c[k] += b[k] / balls.len() as f64;
                    }
                }
                let r = balls
                    .iter()
                    .map(|(b, r)| distance(b, &c) + r)
                    .fold(0.0, f64::max);
                Some((c, r))
            }
            RegionSpec::HalfSpace { normal, offset } => {
                Some((normal.iter().map(|v| v * offset).collect(), 0.0))
            }
            RegionSpec::Empty | RegionSpec::Whole => None,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Distance between two closed regions.
pub fn region_distance(a: &RegionSpec, b: &RegionSpec) -> f64 {
    use RegionSpec::*;
    match (a, b) {
        (Empty, _) | (_, Empty) => f64::INFINITY,
        (Whole, _) | (_, Whole) => 0.0,
        (UnionOfBalls { balls }, other) | (other, UnionOfBalls { balls }) => balls
            .iter()
            .map(|(c, r)| region_distance(&RegionSpec::ball(c.clone(), *r), other))
            .fold(f64::INFINITY, f64::min),
        (Ball { center: c1, radius: r1 }, Ball { center: c2, radius: r2 }) => {
            (distance(c1, c2) - r1 - r2).max(0.0)
        }
        (Ball { center: c, radius: r }, ComplementOfBall { center: k, radius: big })
        | (ComplementOfBall { center: k, radius: big }, Ball { center: c, radius: r }) => {
            (big - distance(c, k) - r).max(0.0)
        }
        (ComplementOfBall { .. }, ComplementOfBall { .. }) => 0.0,
        (Ball { center, radius }, HalfSpace { normal, offset })
        | (HalfSpace { normal, offset }, Ball { center, radius }) => {
            (offset - dot(normal, center) - radius).max(0.0)
        }
        (HalfSpace { .. }, ComplementOfBall { .. }) | (ComplementOfBall { .. }, HalfSpace { .. }) => 0.0,
        (HalfSpace { normal: n1, offset: o1 }, HalfSpace { normal: n2, offset: o2 }) => {
            let anti = n1.iter().zip(n2).all(|(x, y)| (x + y).abs() < 1e-14);
            if anti {
                // {n·x ≥ o₁} and {n·x ≤ −o₂}
                (o1 + o2).max(0.0)
            } else {
                0.0
            }
        }
    }
}

/// The normalized bump `θ(x) = C_n exp(−1/(1−|x|²))`, evaluated through `|x|²`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bump {
    n: usize,
    norm: f64,
}

impl Bump {
    pub fn new(n: usize) -> Self {
        // ∫ θ = |S^{n−1}| C ∫₀¹ e^{−1/(1−r²)} r^{n−1} dr
        let gl = GaussLegendre::new(20);
        let radial = gl.integrate_composite(0.0, 1.0, 64, |r| {
            if r >= 1.0 {
                0.0
            } else {
                (-1.0 / (1.0 - r * r)).exp() * r.powi(n as i32 - 1)
            }
        });
        let area = if n == 1 { 2.0 } else { sphere_area(n - 1) };
        Bump {
            n,
            norm: 1.0 / (area * radial),
        }
    }

    pub fn dimension(&self) -> usize {
        self.n
    }

    pub fn value(&self, r2: f64) -> f64 {
        if r2 >= 1.0 {
            0.0
        } else {
            self.norm * (-1.0 / (1.0 - r2)).exp()
        }
    }

    /// `θ′(r)/r`.
    pub fn dr_over_r(&self, r2: f64) -> f64 {
        if r2 >= 1.0 {
            0.0
        } else {
            let w = 1.0 - r2;
            -2.0 * self.value(r2) / (w * w)
        }
    }

    /// `d/d(r²)` of `θ′(r)/r`.
    fn dr_over_r_du(&self, r2: f64) -> f64 {
        if r2 >= 1.0 {
            0.0
        } else {
            let w = 1.0 - r2;
            -2.0 * self.value(r2) * (2.0 / (w * w * w) - 1.0 / (w * w * w * w))
        }
    }
}

fn hermite5(h: f64, t: f64, y0: [f64; 3], y1: [f64; 3]) -> f64 {
    let t2 = t * t;
    let t3 = t2 * t;
    let t4 = t3 * t;
    let t5 = t4 * t;
    let h00 = 1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5;
    let h10 = t - 6.0 * t3 + 8.0 * t4 - 3.0 * t5;
    let h20 = 0.5 * (t2 - 3.0 * t3 + 3.0 * t4 - t5);
    let h01 = 10.0 * t3 - 15.0 * t4 + 6.0 * t5;
    let h11 = -4.0 * t3 + 7.0 * t4 - 3.0 * t5;
    let h21 = 0.5 * (t3 - 2.0 * t4 + t5);
    y0[0] * h00 + h * y0[1] * h10 + h * h * y0[2] * h20 + y1[0] * h01 + h * y1[1] * h11
        + h * h * y1[2] * h21
}

/// A smooth monotone transition tabulated as `(f, f′, f″)` at equispaced
/// knots, with `f = 1` left of `lo` (when `plateau`) and `f = 0` right of `hi`.
#[derive(Debug, Clone, PartialEq)]
struct Table {
    lo: f64,
    hi: f64,
    knots: Vec<[f64; 3]>,
    /// `1 − f(lo)` from the cumulative quadrature, when `f(lo)` must be 1.
    closure_error: Option<f64>,
}

impl Table {
    fn build<D: Fn(f64) -> (f64, f64)>(lo: f64, hi: f64, plateau: bool, deriv: D) -> Table {
        let gl = GaussLegendre::new(16);
        let h = (hi - lo) / TABLE_PANELS as f64;
        let mut knots = vec![[0.0; 3]; TABLE_PANELS + 1];
        let mut acc = 0.0;
        for k in (0..=TABLE_PANELS).rev() {
            let t = lo + k as f64 * h;
            if k < TABLE_PANELS {
                acc -= gl.integrate(t, t + h, |u| deriv(u).0);
            }
            let (d1, d2) = deriv(t);
            knots[k] = [acc, d1, d2];
        }
        let closure_error = plateau.then(|| (knots[0][0] - 1.0).abs());
        if plateau {
            knots[0][0] = 1.0;
        }
        Table {
            lo,
            hi,
            knots,
            closure_error,
        }
    }

    fn value(&self, s: f64) -> f64 {
        if s >= self.hi {
            return 0.0;
        }
        if s <= self.lo {
            return self.knots[0][0];
        }
        let h = (self.hi - self.lo) / TABLE_PANELS as f64;
        let u = (s - self.lo) / h;
        let k = (u.floor() as usize).min(TABLE_PANELS - 1);
        hermite5(h, u - k as f64, self.knots[k], self.knots[k + 1])
    }
}

/// `Φ(s)` for the mollified indicator of a ball of radius `ρ`.
#[derive(Debug, Clone, PartialEq)]
pub struct BallProfile {
    n: usize,
    rho: f64,
    a: f64,
    bump: Bump,
    table: Table,
}

fn psi_rule() -> &'static GaussLegendre {
    static RULE: std::sync::OnceLock<GaussLegendre> = std::sync::OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(24))
}

impl BallProfile {
    pub fn new(n: usize, rho: f64, a: f64) -> Self {
        let bump = Bump::new(n);
        let mut p = BallProfile {
            n,
            rho,
            a,
            bump,
            table: Table {
                lo: 0.0,
                hi: 0.0,
                knots: Vec::new(),
                closure_error: None,
            },
        };
        let lo = (rho - a).max(0.0);
        let plateau = rho > a;
        p.table = Table::build(lo, rho + a, plateau, |s| (p.d1(s), p.d2(s)));
        p
    }

    /// `φ = 1` for `s ≤` this radius.
    pub fn plateau_radius(&self) -> f64 {
        if self.rho > self.a {
            self.rho - self.a
        } else {
            0.0
        }
    }

    /// `φ = 0` for `s ≥` this radius.
    pub fn support_radius(&self) -> f64 {
        self.rho + self.a
    }

    pub fn closure_error(&self) -> Option<f64> {
        self.table.closure_error
    }

    pub fn value(&self, s: f64) -> f64 {
        if s <= self.plateau_radius() && self.rho > self.a {
            return 1.0;
        }
        self.table.value(s)
    }

    /// Angular integral `∫₀^{ψ_max} g(d², cos ψ) sin^{n−2} ψ dψ` over the arc where the
    /// bump around the point at distance `s` meets the sphere.
    fn arc<G: Fn(f64, f64) -> f64>(&self, s: f64, g: G) -> f64 {
        let (rho, a) = (self.rho, self.a);
        let psi_max = if s == 0.0 {
            if rho < a {
                PI
            } else {
                return 0.0;
            }
        } else {
            let kappa = (s * s + rho * rho - a * a) / (2.0 * s * rho);
            if kappa >= 1.0 {
                return 0.0;
            }
            if kappa <= -1.0 {
                PI
            } else {
                kappa.acos()
            }
        };
        let rule = psi_rule();
        let pow = self.n as i32 - 2;
        rule.integrate_composite(0.0, psi_max, 3, |psi| {
            let c = psi.cos();
            let d2 = (s * s + rho * rho - 2.0 * s * rho * c).max(0.0);
            g(d2 / (a * a), c) * psi.sin().powi(pow)
        })
    }

    /// `Φ′(s)`.
    pub fn d1(&self, s: f64) -> f64 {
        let (rho, a, n) = (self.rho, self.a, self.n);
        if n == 1 {
            let u = (s + rho) / a;
            let v = (s - rho) / a;
            return (self.bump.value(u * u) - self.bump.value(v * v)) / a;
        }
        let scale = -rho.powi(n as i32 - 1) * sphere_area(n - 2) * a.powi(-(n as i32));
        scale * self.arc(s, |u, c| self.bump.value(u) * c)
    }

    /// `Φ″(s)`.
    pub fn d2(&self, s: f64) -> f64 {
        let (rho, a, n) = (self.rho, self.a, self.n);
        if n == 1 {
            let u = (s + rho) / a;
            let v = (s - rho) / a;
            return (u * self.bump.dr_over_r(u * u) - v * self.bump.dr_over_r(v * v)) / (a * a);
        }
        // d/ds θ_a(d) = a^{−n−2} (θ′/r)(d/a) (s − ρ cos ψ)
        let scale = -rho.powi(n as i32 - 1) * sphere_area(n - 2) * a.powi(-(n as i32) - 2);
        scale * self.arc(s, |u, c| self.bump.dr_over_r(u) * (s - rho * c) * c)
    }
}

/// The one-dimensional marginal of `θ` and its cumulative distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Marginal {
    n: usize,
    bump: Bump,
    table: Table,
}

impl Marginal {
    pub fn new(n: usize) -> Self {
        let mut m = Marginal {
            n,
            bump: Bump::new(n),
            table: Table {
                lo: 0.0,
                hi: 0.0,
                knots: Vec::new(),
                closure_error: None,
            },
        };
        // G(t) = ∫_{−1}^t m; tabulate 1 − G, which falls from 1 to 0
        let t = Table::build(-1.0, 1.0, true, |t| {
            let (d, dd) = m.density(t);
            (-d, -dd)
        });
        m.table = t;
        m
    }

    /// `(m(t), m′(t))`.
    pub fn density(&self, t: f64) -> (f64, f64) {
        if t.abs() >= 1.0 {
            return (0.0, 0.0);
        }
        if self.n == 1 {
            return (self.bump.value(t * t), t * self.bump.dr_over_r(t * t));
        }
        let top = (1.0 - t * t).sqrt();
        let pow = self.n as i32 - 2;
        let w = sphere_area(self.n - 2);
        let rule = psi_rule();
        let m = rule.integrate_composite(0.0, top, 2, |u| {
            self.bump.value(t * t + u * u) * u.powi(pow)
        });
        let dm = rule.integrate_composite(0.0, top, 2, |u| {
            self.bump.dr_over_r(t * t + u * u) * t * u.powi(pow)
        });
        (w * m, w * dm)
    }

    pub fn cdf(&self, t: f64) -> f64 {
        if t <= -1.0 {
            0.0
        } else if t >= 1.0 {
            1.0
        } else {
            1.0 - self.table.value(t)
        }
    }

    pub fn closure_error(&self) -> Option<f64> {
        self.table.closure_error
    }
}

#[derive(Debug, Clone)]
enum Shape {
    Constant(f64),
    Ball {
        center: Vec<f64>,
        profile: Arc<BallProfile>,
        complement: bool,
    },
    HalfSpace {
        normal: Vec<f64>,
        offset: f64,
        a: f64,
        marginal: Arc<Marginal>,
    },
    Sum(Vec<Shape>),
    Generic {
        f1: RegionSpec,
        a: f64,
        bump: Bump,
        nodes: usize,
    },
}

/// `(φ, ∇φ, ∇²φ)` at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian: Vec<Vec<f64>>,
}

impl Jet {
    fn zero(n: usize) -> Jet {
        Jet {
            value: 0.0,
            gradient: vec![0.0; n],
            hessian: vec![vec![0.0; n]; n],
        }
    }

    pub fn laplacian(&self) -> f64 {
        (0..self.gradient.len()).map(|i| self.hessian[i][i]).sum()
    }

    pub fn gradient_norm_sqr(&self) -> f64 {
        self.gradient.iter().map(|g| g * g).sum()
    }

    fn add(&mut self, o: &Jet) {
        self.value += o.value;
        for (g, h) in self.gradient.iter_mut().zip(&o.gradient) {
            *g += h;
        }
        for (r, q) in self.hessian.iter_mut().zip(&o.hessian) {
            for (x, y) in r.iter_mut().zip(q) {
                *x += y;
            }
        }
    }

    /// `max |∂^α φ|` over `|α| = 0, 1, 2` at this point.
    fn order_maxima(&self) -> [f64; 3] {
        let g = self.gradient.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let h = self
            .hessian
            .iter()
            .flatten()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        [self.value.abs(), g, h]
    }
}

fn radial_jet(n: usize, x: &[f64], center: &[f64], p: &BallProfile, sign: f64, offset: f64) -> Jet {
    let d: Vec<f64> = x.iter().zip(center).map(|(a, b)| a - b).collect();
    let s = norm(&d);
    let mut j = Jet::zero(n);
    j.value = offset + sign * p.value(s);
    if s >= p.support_radius() || (s <= p.plateau_radius() && p.rho > p.a) {
        return j;
    }
    let d1 = sign * p.d1(s);
    let d2 = sign * p.d2(s);
    if s == 0.0 {
        for i in 0..n {
            j.hessian[i][i] = d2;
        }
        return j;
    }
    let u: Vec<f64> = d.iter().map(|v| v / s).collect();
    for i in 0..n {
        j.gradient[i] = d1 * u[i];
        for k in 0..n {
            let delta = if i == k { 1.0 } else { 0.0 };
            j.hessian[i][k] = d2 * u[i] * u[k] + d1 / s * (delta - u[i] * u[k]);
        }
    }
    j
}

impl Shape {
    fn jet(&self, n: usize, x: &[f64]) -> Jet {
        match self {
            Shape::Constant(c) => {
                let mut j = Jet::zero(n);
                j.value = *c;
                j
            }
            Shape::Ball {
                center,
                profile,
                complement,
            } => {
                if *complement {
                    radial_jet(n, x, center, profile, -1.0, 1.0)
                } else {
                    radial_jet(n, x, center, profile, 1.0, 0.0)
                }
            }
            Shape::HalfSpace {
                normal,
                offset,
                a,
                marginal,
            } => {
                let tau = (dot(normal, x) - offset + a) / a;
                let mut j = Jet::zero(n);
                j.value = marginal.cdf(tau);
                let (m, dm) = marginal.density(tau);
                for i in 0..n {
                    j.gradient[i] = normal[i] * m / a;
                    for k in 0..n {
                        j.hessian[i][k] = normal[i] * normal[k] * dm / (a * a);
                    }
                }
                j
            }
            Shape::Sum(parts) => {
                let mut j = Jet::zero(n);
                for p in parts {
                    j.add(&p.jet(n, x));
                }
                j
            }
            Shape::Generic { f1, a, bump, nodes } => generic_jet(n, x, f1, *a, bump, *nodes),
        }
    }
}

/// Midpoint-rule convolution over `[−1, 1]ⁿ` at two resolutions, extrapolated
/// for the first-order error of a discontinuous integrand.
fn generic_jet(n: usize, x: &[f64], f1: &RegionSpec, a: f64, bump: &Bump, nodes: usize) -> Jet {
    let level = |m: usize| {
        let h = 2.0 / m as f64;
        let mut j = Jet::zero(n);
        let total = m.pow(n as u32);
        let mut z = vec![0.0; n];
        let mut y = vec![0.0; n];
        let w = h.powi(n as i32);
        for flat in 0..total {
            let mut rem = flat;
            for k in 0..n {
                z[k] = -1.0 + h * (rem % m) as f64 + 0.5 * h;
                rem /= m;
            }
            let r2: f64 = z.iter().map(|v| v * v).sum();
            if r2 >= 1.0 {
                continue;
            }
            for k in 0..n {
                y[k] = x[k] - a * z[k];
            }
            if f1.distance_to(&y) > a {
                continue;
            }
            let g = bump.dr_over_r(r2);
            let gu = bump.dr_over_r_du(r2);
            j.value += w * bump.value(r2);
            for i in 0..n {
                j.gradient[i] += w * g * z[i] / a;
                for k in 0..n {
                    let delta = if i == k { g } else { 0.0 };
                    j.hessian[i][k] += w * (delta + 2.0 * gu * z[i] * z[k]) / (a * a);
                }
            }
        }
        j
    };
    let coarse = level(nodes);
    let mut fine = level(2 * nodes);
    let ex = |f: f64, c: f64| 2.0 * f - c;
    fine.value = ex(fine.value, coarse.value);
    for i in 0..n {
        fine.gradient[i] = ex(fine.gradient[i], coarse.gradient[i]);
        for k in 0..n {
            fine.hessian[i][k] = ex(fine.hessian[i][k], coarse.hessian[i][k]);
        }
    }
    fine
}

/// A smooth `φ` with `φ|_{F₀} = 0`, `φ|_{F₁} = 1`, `0 ≤ φ ≤ 1`.
#[derive(Debug, Clone)]
pub struct CutoffFunction {
    n: usize,
    epsilon: f64,
    f0: RegionSpec,
    f1: RegionSpec,
    shape: Shape,
}

/// Cache of radial profiles keyed by `(n, ρ, a)` bit patterns.
#[derive(Debug, Default)]
pub struct ProfileCache {
    balls: HashMap<(usize, u64, u64), Arc<BallProfile>>,
}

impl ProfileCache {
    fn ball(&mut self, n: usize, rho: f64, a: f64) -> Arc<BallProfile> {
        self.balls
            .entry((n, rho.to_bits(), a.to_bits()))
            .or_insert_with(|| Arc::new(BallProfile::new(n, rho, a)))
            .clone()
    }
}

pub fn build_cutoff(
    f0: RegionSpec,
    f1: RegionSpec,
    epsilon: f64,
    n: usize,
) -> Result<CutoffFunction, PartitionError> {
    build_cutoff_cached(f0, f1, epsilon, n, &mut ProfileCache::default())
}

pub fn build_cutoff_cached(
    f0: RegionSpec,
    f1: RegionSpec,
    epsilon: f64,
    n: usize,
    cache: &mut ProfileCache,
) -> Result<CutoffFunction, PartitionError> {
    if n == 0 {
        return Err(PartitionError::InvalidDimension);
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(PartitionError::InvalidScale(epsilon));
    }
    f0.validate(n)?;
    f1.validate(n)?;
    let gap = region_distance(&f0, &f1);
    if gap < epsilon * (1.0 - DISTANCE_SLACK) {
        return Err(PartitionError::RegionsTooClose {
            distance: gap,
            epsilon,
        });
    }
    let a = epsilon / 4.0;
    let shape = match &f1 {
        RegionSpec::Empty => Shape::Constant(0.0),
        RegionSpec::Whole => Shape::Constant(1.0),
        RegionSpec::Ball { center, radius } => Shape::Ball {
            center: center.clone(),
            profile: cache.ball(n, radius + a, a),
            complement: false,
        },
        RegionSpec::ComplementOfBall { center, radius } => {
            let rho = radius - a;
            if rho <= 0.0 {
                Shape::Constant(1.0)
            } else {
                Shape::Ball {
                    center: center.clone(),
                    profile: cache.ball(n, rho, a),
                    complement: true,
                }
            }
        }
        RegionSpec::HalfSpace { normal, offset } => Shape::HalfSpace {
            normal: normal.clone(),
            offset: *offset,
            a,
            marginal: Arc::new(Marginal::new(n)),
        },
        RegionSpec::UnionOfBalls { balls } => {
            // enlarged balls more than 2a apart never share a bump
            let separated = balls.iter().enumerate().all(|(i, (c, r))| {
                balls[i + 1..]
                    .iter()
                    .all(|(k, q)| distance(c, k) - (r + a) - (q + a) > 2.0 * a)
            });
            if separated {
                Shape::Sum(
                    balls
                        .iter()
                        .map(|(c, r)| Shape::Ball {
                            center: c.clone(),
                            profile: cache.ball(n, r + a, a),
                            complement: false,
                        })
                        .collect(),
                )
            } else {
                Shape::Generic {
                    f1: f1.clone(),
                    a,
                    bump: Bump::new(n),
                    nodes: match n {
                        1 => 512,
                        2 => 96,
                        _ => 20,
                    },
                }
            }
        }
    };
    Ok(CutoffFunction {
        n,
        epsilon,
        f0,
        f1,
        shape,
    })
}

impl CutoffFunction {
    pub fn dimension(&self) -> usize {
        self.n
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn f0(&self) -> &RegionSpec {
        &self.f0
    }

    pub fn f1(&self) -> &RegionSpec {
        &self.f1
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match &self.shape {
            Shape::Ball {
                center,
                profile,
                complement,
            } => {
                let v = profile.value(distance(x, center));
                if *complement {
                    1.0 - v
                } else {
                    v
                }
            }
            Shape::Generic { .. } => self.jet(x).value,
            s => s.jet(self.n, x).value,
        }
    }

    pub fn jet(&self, x: &[f64]) -> Jet {
        self.shape.jet(self.n, x)
    }

    /// Radius beyond which a non-complement radial cutoff vanishes.
    pub fn support_radius(&self) -> Option<f64> {
        match &self.shape {
            Shape::Ball {
                profile,
                complement: false,
                ..
            } => Some(profile.support_radius()),
            Shape::Constant(c) if *c == 0.0 => Some(0.0),
            _ => None,
        }
    }

    /// Radius up to which a non-complement radial cutoff equals 1.
    pub fn plateau_radius(&self) -> Option<f64> {
        match &self.shape {
            Shape::Ball {
                profile,
                complement: false,
                ..
            } => Some(profile.plateau_radius()),
            _ => None,
        }
    }

    /// Self-check of the tabulation: `|Φ(plateau) − 1|` before it is pinned.
    pub fn closure_error(&self) -> f64 {
        fn walk(s: &Shape) -> f64 {
            match s {
                Shape::Ball { profile, .. } => profile.closure_error().unwrap_or(0.0),
                Shape::HalfSpace { marginal, .. } => marginal.closure_error().unwrap_or(0.0),
                Shape::Sum(parts) => parts.iter().map(walk).fold(0.0, f64::max),
                _ => 0.0,
            }
        }
        walk(&self.shape)
    }

    /// `max |∂^α φ|` for `|α| = 0, 1, 2` along a dense one-dimensional scan of
    /// the transition, where the radial and planar shapes attain their maxima.
    fn scan_maxima(&self, samples: usize) -> Option<[f64; 3]> {
        let n = self.n;
        match &self.shape {
            Shape::Ball { profile, .. } => {
                let lo = profile.plateau_radius();
                let hi = profile.support_radius();
                let mut m = [1.0f64, 0.0, 0.0];
                for i in 0..=samples {
                    let s = lo + (hi - lo) * i as f64 / samples as f64;
                    let d1 = profile.d1(s);
                    let d2 = profile.d2(s);
                    m[1] = m[1].max(d1.abs());
                    // Hessian entries: d2 along the radius, d1/s across, and the
                    // off-diagonal extreme (d2 − d1/s)/2 at 45°
                    m[2] = m[2].max(d2.abs());
                    if n > 1 && s > 0.0 {
                        m[2] = m[2].max((d1 / s).abs()).max(0.5 * (d2 - d1 / s).abs());
                    }
                }
                Some(m)
            }
            Shape::HalfSpace {
                normal,
                a,
                marginal,
                ..
            } => {
                let nmax = normal.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let mut m = [1.0f64, 0.0, 0.0];
                for i in 0..=samples {
                    let t = -1.0 + 2.0 * i as f64 / samples as f64;
                    let (d, dd) = marginal.density(t);
                    m[1] = m[1].max(nmax * d.abs() / a);
                    m[2] = m[2].max(nmax * nmax * dd.abs() / (a * a));
                }
                Some(m)
            }
            Shape::Sum(parts) => {
                let mut m = [0.0f64; 3];
                for p in parts {
                    let c = CutoffFunction {
                        shape: p.clone(),
                        ..self.clone()
                    };
                    let s = c.scan_maxima(samples)?;
                    for k in 0..3 {
                        m[k] = m[k].max(s[k]);
                    }
                }
                Some(m)
            }
            Shape::Constant(c) => Some([c.abs(), 0.0, 0.0]),
            Shape::Generic { .. } => None,
        }
    }

    /// Bounding box covering `F₁`, the transition and the inner part of `F₀`.
    fn sample_box(&self) -> (Vec<f64>, f64) {
        let n = self.n;
        let mut center = vec![0.0; n];
        let mut radius = self.epsilon;
        for r in [&self.f1, &self.f0] {
            if let Some((c, rad)) = r.extent() {
                center = c;
                radius = radius.max(rad);
                break;
            }
        }
        if let Some((_, rad)) = self.f0.extent() {
            radius = radius.max(rad);
        }
        (center, 1.25 * radius + self.epsilon)
    }

    /// Sample `φ` and its gradient norm and Laplacian on a regular grid.
    pub fn sample_grid(&self, per_axis: usize) -> GridTable {
        let (center, half) = self.sample_box();
        let n = self.n;
        let h = 2.0 * half / (per_axis - 1) as f64;
        let origin: Vec<f64> = center.iter().map(|c| c - half).collect();
        let mut t = GridTable::new(
            vec![per_axis; n],
            origin,
            vec![h; n],
            vec!["phi".into(), "grad_norm".into(), "laplacian".into()],
        )
        .expect("valid grid");
        t.fill(|x| {
            let j = self.jet(x);
            vec![j.value, j.gradient_norm_sqr().sqrt(), j.laplacian()]
        });
        t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub dimension: usize,
    pub epsilon: f64,
    pub samples: usize,
    pub min_value: f64,
    pub max_value: f64,
    /// Largest excursion outside `[0, 1]`.
    pub range_violation: f64,
    /// `max |φ|` on sampled points of `F₀`.
    pub f0_violation: f64,
    /// `max |φ − 1|` on sampled points of `F₁`.
    pub f1_violation: f64,
    /// `max |∂^α φ|` for `|α| = 0, 1, 2`.
    pub derivative_max: [f64; 3],
    /// `ε^{|α|} max |∂^α φ|`.
    pub constants: [f64; 3],
    pub closure_error: f64,
    pub pass: bool,
}

pub fn verify_cutoff(phi: &CutoffFunction, resolution: usize) -> VerificationReport {
    verify_cutoff_with(phi, resolution, Mode::default())
}

pub fn verify_cutoff_with(phi: &CutoffFunction, resolution: usize, mode: Mode) -> VerificationReport {
    let n = phi.n;
    // keep the n-dimensional grid near 2·10⁵ points
    let per_axis = resolution
        .min((2e5f64).powf(1.0 / n as f64) as usize)
        .max(3);
    let (center, half) = phi.sample_box();
    let h = 2.0 * half / (per_axis - 1) as f64;
    let total = per_axis.pow(n as u32);
    struct Acc {
        min: f64,
        max: f64,
        f0: f64,
        f1: f64,
        d: [f64; 3],
    }
    let partial = exec::map_range(mode, total, |flat| {
        let mut rem = flat;
        let x: Vec<f64> = (0..n)
            .map(|k| {
                let i = rem % per_axis;
                rem /= per_axis;
                center[k] - half + i as f64 * h
            })
            .collect();
        let j = phi.jet(&x);
        let v = j.value;
        Acc {
            min: v,
            max: v,
            f0: if phi.f0.contains(&x) { v.abs() } else { 0.0 },
            f1: if phi.f1.contains(&x) {
                (v - 1.0).abs()
            } else {
                0.0
            },
            d: j.order_maxima(),
        }
    });
    let mut acc = Acc {
        min: f64::INFINITY,
        max: f64::NEG_INFINITY,
        f0: 0.0,
        f1: 0.0,
        d: [0.0; 3],
    };
    for p in partial {
        acc.min = acc.min.min(p.min);
        acc.max = acc.max.max(p.max);
        acc.f0 = acc.f0.max(p.f0);
        acc.f1 = acc.f1.max(p.f1);
        for k in 0..3 {
            acc.d[k] = acc.d[k].max(p.d[k]);
        }
    }
    if let Some(scan) = phi.scan_maxima(8 * resolution.max(256)) {
        for k in 0..3 {
            acc.d[k] = acc.d[k].max(scan[k]);
        }
    }
    let range_violation = (-acc.min).max(acc.max - 1.0).max(0.0);
    let eps = phi.epsilon;
    let constants = [acc.d[0], eps * acc.d[1], eps * eps * acc.d[2]];
    VerificationReport {
        dimension: n,
        epsilon: eps,
        samples: total,
        min_value: acc.min,
        max_value: acc.max,
        range_violation,
        f0_violation: acc.f0,
        f1_violation: acc.f1,
        derivative_max: acc.d,
        constants,
        closure_error: phi.closure_error(),
        pass: range_violation < BOUND_TOLERANCE
            && acc.f0 < BOUND_TOLERANCE
            && acc.f1 < BOUND_TOLERANCE,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub reports: Vec<VerificationReport>,
    /// `max/min − 1` of the scaled constants for `|α| = 1, 2`.
    pub spread: [f64; 2],
    pub pass: bool,
}

/// Build and verify the cutoff for `(k F₀, k F₁, k ε₀)` with `k = ε/ε₀` for
/// each requested `ε`, and compare the scaled derivative constants.
pub fn verify_scaling(
    f0: &RegionSpec,
    f1: &RegionSpec,
    reference_epsilon: f64,
    epsilons: &[f64],
    n: usize,
    resolution: usize,
) -> Result<ScalingReport, PartitionError> {
    let reports = epsilons
        .iter()
        .map(|&eps| {
            let k = eps / reference_epsilon;
            let phi = build_cutoff(f0.scaled(k), f1.scaled(k), eps, n)?;
            Ok(verify_cutoff(&phi, resolution))
        })
        .collect::<Result<Vec<_>, PartitionError>>()?;
    let mut spread = [0.0; 2];
    for (slot, order) in spread.iter_mut().zip(1..3) {
        let vals: Vec<f64> = reports.iter().map(|r| r.constants[order]).collect();
        let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().cloned().fold(0.0, f64::max);
        *slot = if hi == 0.0 { 0.0 } else { hi / lo - 1.0 };
    }
    let pass = reports.iter().all(|r| r.pass) && spread.iter().all(|s| *s <= SCALING_TOLERANCE);
    Ok(ScalingReport {
        reports,
        spread,
        pass,
    })
}

/// `φ_j` and `φ̃_j` for one singularity.
#[derive(Debug, Clone)]
pub struct FamilyMember {
    pub label: String,
    pub center: Vec<f64>,
    /// Radius of `A_j`.
    pub core_radius: f64,
    pub phi: CutoffFunction,
    pub phi_tilde: CutoffFunction,
}

#[derive(Debug, Clone)]
pub struct OrbitMembers {
    pub lattice: Lattice,
    pub core_radius: f64,
    /// Cutoffs centred at the lattice origin; translate to each site.
    pub phi: CutoffFunction,
    pub phi_tilde: CutoffFunction,
}

#[derive(Debug, Clone)]
pub struct CutoffFamily {
    pub dimension: usize,
    pub epsilon: f64,
    pub members: Vec<FamilyMember>,
    pub orbit: Option<OrbitMembers>,
}

fn member_pair(
    n: usize,
    center: Vec<f64>,
    delta: f64,
    eps: f64,
    cache: &mut ProfileCache,
) -> Result<(CutoffFunction, CutoffFunction), PartitionError> {
    // φ = 1 within ε/4 of A_j, 0 beyond ε/2; it vanishes past δ + 3ε/8
    let phi = build_cutoff_cached(
        RegionSpec::complement_of_ball(center.clone(), delta + eps / 2.0),
        RegionSpec::ball(center.clone(), delta + eps / 4.0),
        eps / 4.0,
        n,
        cache,
    )?;
    // φ̃ = 1 on supp φ, 0 beyond δ + 7ε/16
    let phi_tilde = build_cutoff_cached(
        RegionSpec::complement_of_ball(center.clone(), delta + eps / 2.0),
        RegionSpec::ball(center, delta + 3.0 * eps / 8.0),
        eps / 8.0,
        n,
        cache,
    )?;
    Ok((phi, phi_tilde))
}

pub fn build_family(cfg: &ValidatedConfig) -> Result<CutoffFamily, PartitionError> {
    let n = cfg.dimension();
    let eps = cfg.family_scale();
    let mut cache = ProfileCache::default();
    let mut members = Vec::with_capacity(cfg.sites().len());
    for s in cfg.sites() {
        let delta = s.potential.cutoff();
        let (phi, phi_tilde) = member_pair(n, s.position.clone(), delta, eps, &mut cache)?;
        members.push(FamilyMember {
            label: s.source.label(),
            center: s.position.clone(),
            core_radius: delta,
            phi,
            phi_tilde,
        });
    }
    let orbit = match cfg.orbit() {
        Some(o) => {
            let delta = o.potential.cutoff();
            let (phi, phi_tilde) = member_pair(n, vec![0.0; n], delta, eps, &mut cache)?;
            Some(OrbitMembers {
                lattice: o.lattice.clone(),
                core_radius: delta,
                phi,
                phi_tilde,
            })
        }
        None => None,
    };
    Ok(CutoffFamily {
        dimension: n,
        epsilon: eps,
        members,
        orbit,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyCheck {
    /// Smallest gap between supports of distinct `φ_j` (`+∞` for one member).
    pub phi_gap: f64,
    /// Smallest gap between supports of distinct `φ̃_j`.
    pub phi_tilde_gap: f64,
    /// `max |φ̃_j φ_j − φ_j|` over random samples.
    pub nesting_error: f64,
    /// Most `φ_j` nonzero at one sample.
    pub max_overlap: usize,
    pub samples: usize,
    pub pass: bool,
}

impl CutoffFamily {
    /// Every `(φ_j, φ̃_j)` whose support may contain `x`, with `x` in the
    /// cutoff's own coordinates.
    pub fn near(&self, x: &[f64]) -> Vec<(&CutoffFunction, &CutoffFunction, Vec<f64>)> {
        let mut out = Vec::new();
        for m in &self.members {
            let r = m.phi_tilde.support_radius().unwrap_or(f64::INFINITY);
            if distance(x, &m.center) < r {
                out.push((&m.phi, &m.phi_tilde, x.to_vec()));
            }
        }
        if let Some(o) = &self.orbit {
            // orbit cutoffs are centred at the origin
            let r = o.phi_tilde.support_radius().unwrap_or(0.0);
            if let Ok(coords) = o.lattice.points_near(x, r) {
                for c in coords {
                    let p = o.lattice.point(&c);
                    let local = x.iter().zip(&p).map(|(a, b)| a - b).collect();
                    out.push((&o.phi, &o.phi_tilde, local));
                }
            }
        }
        out
    }

    fn support_radii(&self) -> Vec<(Vec<f64>, f64, f64)> {
        self.members
            .iter()
            .map(|m| {
                (
                    m.center.clone(),
                    m.phi.support_radius().unwrap_or(f64::INFINITY),
                    m.phi_tilde.support_radius().unwrap_or(f64::INFINITY),
                )
            })
            .collect()
    }

    /// Certify pairwise support disjointness and `φ̃_j φ_j = φ_j` at random points.
    pub fn check(&self, samples: usize, seed: u64) -> FamilyCheck {
        let n = self.dimension;
        let radii = self.support_radii();
        let mut phi_gap = f64::INFINITY;
        let mut tilde_gap = f64::INFINITY;
        for (i, (c, r, rt)) in radii.iter().enumerate() {
            for (k, q, qt) in &radii[i + 1..] {
                let d = distance(c, k);
                phi_gap = phi_gap.min(d - r - q);
                tilde_gap = tilde_gap.min(d - rt - qt);
            }
        }
        if let Some(o) = &self.orbit {
            let r = o.phi.support_radius().unwrap_or(f64::INFINITY);
            let rt = o.phi_tilde.support_radius().unwrap_or(f64::INFINITY);
            if let Ok(l) = o.lattice.min_vector_length() {
                phi_gap = phi_gap.min(l - 2.0 * r);
                tilde_gap = tilde_gap.min(l - 2.0 * rt);
            }
            for (c, q, qt) in &radii {
                if let Ok((d, _)) = o.lattice.closest_point(c) {
                    phi_gap = phi_gap.min(d - r - q);
                    tilde_gap = tilde_gap.min(d - rt - qt);
                }
            }
        }

        // sample around randomly chosen members (orbit sites count as one)
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut centers: Vec<(Vec<f64>, f64)> = radii.iter().map(|(c, _, rt)| (c.clone(), *rt)).collect();
        if let Some(o) = &self.orbit {
            centers.push((
                o.lattice.origin().to_vec(),
                o.phi_tilde.support_radius().unwrap_or(1.0),
            ));
        }
        let mut nesting_error = 0.0f64;
        let mut max_overlap = 0;
        if !centers.is_empty() {
            for _ in 0..samples {
                let (c, r) = &centers[rng.random_range(0..centers.len())];
                let x: Vec<f64> = (0..n)
                    .map(|k| c[k] + 1.1 * r * rng.random_range(-1.0..1.0))
                    .collect();
                let near = self.near(&x);
                let mut nonzero = 0;
                for (phi, tilde, local) in near {
                    let p = phi.value(&local);
                    let t = tilde.value(&local);
                    nesting_error = nesting_error.max((t * p - p).abs());
                    if p != 0.0 {
                        nonzero += 1;
                    }
                }
                max_overlap = max_overlap.max(nonzero);
            }
        }
        FamilyCheck {
            phi_gap,
            phi_tilde_gap: tilde_gap,
            nesting_error,
            max_overlap,
            samples,
            pass: phi_gap > 0.0 && tilde_gap > 0.0 && nesting_error < 1e-10 && max_overlap <= 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionConstants {
    /// `sup Σ_j |∇φ_j|²`
    pub e: f64,
    /// `2 sup Σ_j (Δφ_j)²`
    pub alpha: f64,
    /// `4 sup Σ_j |∇φ_j|²`
    pub beta: f64,
    /// Most nonzero terms seen at one point.
    pub max_terms: usize,
}

/// Grid-maximized constants of a finite list of cutoffs.
pub fn partition_constants_on(cutoffs: &[&CutoffFunction], points: &[Vec<f64>]) -> PartitionConstants {
    let mut grad = 0.0f64;
    let mut lap = 0.0f64;
    let mut terms = 0;
    for x in points {
        let mut g = 0.0;
        let mut l = 0.0;
        let mut t = 0;
        for c in cutoffs {
            let j = c.jet(x);
            if j.value != 0.0 || j.gradient_norm_sqr() != 0.0 {
                t += 1;
            }
            g += j.gradient_norm_sqr();
            let d = j.laplacian();
            l += d * d;
        }
        grad = grad.max(g);
        lap = lap.max(l);
        terms = terms.max(t);
    }
    PartitionConstants {
        e: grad,
        alpha: 2.0 * lap,
        beta: 4.0 * grad,
        max_terms: terms,
    }
}

/// Constants of a family. Supports are pairwise disjoint, so each sum has one
/// term and the supremum is taken along a radial scan of every distinct
/// profile (`resolution` samples across its transition).
pub fn partition_constants(family: &CutoffFamily, resolution: usize) -> PartitionConstants {
    let n = family.dimension;
    let mut seen: Vec<*const BallProfile> = Vec::new();
    let mut grad = 0.0f64;
    let mut lap = 0.0f64;
    let phis = family
        .members
        .iter()
        .map(|m| &m.phi)
        .chain(family.orbit.iter().map(|o| &o.phi));
    for phi in phis {
        let Shape::Ball { profile, .. } = &phi.shape else {
            continue;
        };
        let key = Arc::as_ptr(profile);
        if seen.contains(&key) {
            continue;
        }
        seen.push(key);
        let lo = profile.plateau_radius();
        let hi = profile.support_radius();
        for i in 0..=resolution {
            let s = lo + (hi - lo) * i as f64 / resolution as f64;
            let d1 = profile.d1(s);
            let d2 = profile.d2(s);
            let l = if s > 0.0 { d2 + (n as f64 - 1.0) * d1 / s } else { n as f64 * d2 };
            grad = grad.max(d1 * d1);
            lap = lap.max(l * l);
        }
    }
    let check = family.check(0, 0);
    PartitionConstants {
        e: grad,
        alpha: 2.0 * lap,
        beta: 4.0 * grad,
        max_terms: if check.phi_gap > 0.0 { 1 } else { 2 },
    }
}

/// `φ_j(x) = φ(x − x_j) [Σ_k φ(x − x_k)²]^{−1/2}` over a scaled cubic lattice.
#[derive(Debug, Clone)]
pub struct LatticePartition {
    pub dimension: usize,
    pub spacing: f64,
    bump: CutoffFunction,
}

/// One normalized term at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionTerm {
    pub site: Vec<i64>,
    pub value: f64,
    pub gradient: Vec<f64>,
}

pub fn lattice_partition(n: usize) -> Result<LatticePartition, PartitionError> {
    if n == 0 {
        return Err(PartitionError::InvalidDimension);
    }
    // Plateau radius at least the covering radius h√n/2 so some φ(x − x_j) = 1
    // everywhere; for n ≥ 4 the lattice is refined to keep it below 1.
    let (spacing, plateau) = if n <= 3 {
        (1.0, (n as f64).sqrt() / 2.0)
    } else {
        (1.5 / (n as f64).sqrt(), 0.75)
    };
    let plateau = plateau.max(0.5);
    let zero = vec![0.0; n];
    let bump = build_cutoff(
        RegionSpec::complement_of_ball(zero.clone(), 1.0),
        RegionSpec::ball(zero, plateau),
        1.0 - plateau,
        n,
    )?;
    Ok(LatticePartition {
        dimension: n,
        spacing,
        bump,
    })
}

impl LatticePartition {
    pub fn bump(&self) -> &CutoffFunction {
        &self.bump
    }

    /// Lattice sites within the unit support radius of `x`, with `φ(x − x_k)`
    /// and its gradient.
    fn raw(&self, x: &[f64]) -> Vec<(Vec<i64>, f64, Vec<f64>)> {
        let n = self.dimension;
        let h = self.spacing;
        let lo: Vec<i64> = x.iter().map(|v| ((v - 1.0) / h).floor() as i64).collect();
        let hi: Vec<i64> = x.iter().map(|v| ((v + 1.0) / h).ceil() as i64).collect();
        let mut out = Vec::new();
        let mut k = lo.clone();
        loop {
            let y: Vec<f64> = (0..n).map(|i| x[i] - h * k[i] as f64).collect();
            if norm(&y) < 1.0 {
                let j = self.bump.jet(&y);
                if j.value != 0.0 {
                    out.push((k.clone(), j.value, j.gradient));
                }
            }
            let mut axis = 0;
            loop {
                if axis == n {
                    return out;
                }
                k[axis] += 1;
                if k[axis] <= hi[axis] {
                    break;
                }
                k[axis] = lo[axis];
                axis += 1;
            }
        }
    }

    /// `Σ_k φ(x − x_k)²` before normalization.
    pub fn unnormalized(&self, x: &[f64]) -> f64 {
        self.raw(x).iter().map(|(_, v, _)| v * v).sum()
    }

    pub fn terms(&self, x: &[f64]) -> Vec<PartitionTerm> {
        let n = self.dimension;
        let raw = self.raw(x);
        let s: f64 = raw.iter().map(|(_, v, _)| v * v).sum();
        let mut ds = vec![0.0; n];
        for (_, v, g) in &raw {
            for i in 0..n {
                ds[i] += 2.0 * v * g[i];
            }
        }
        let root = s.sqrt();
        raw.into_iter()
            .map(|(site, v, g)| PartitionTerm {
                site,
                value: v / root,
                gradient: (0..n)
                    .map(|i| g[i] / root - v * ds[i] / (2.0 * s * root))
                    .collect(),
            })
            .collect()
    }

    pub fn sum_of_squares(&self, x: &[f64]) -> f64 {
        self.terms(x).iter().map(|t| t.value * t.value).sum()
    }

    /// `|Σ_j φ_j ∇φ_j|`.
    pub fn cross_term(&self, x: &[f64]) -> f64 {
        let n = self.dimension;
        let mut c = vec![0.0; n];
        for t in self.terms(x) {
            for i in 0..n {
                c[i] += t.value * t.gradient[i];
            }
        }
        norm(&c)
    }

    /// Minimum of the unnormalized sum over a grid on the fundamental cell.
    pub fn cell_minimum(&self, per_axis: usize) -> f64 {
        let n = self.dimension;
        let total = per_axis.pow(n as u32);
        let h = self.spacing / (per_axis - 1) as f64;
        (0..total)
            .map(|flat| {
                let mut rem = flat;
                let x: Vec<f64> = (0..n)
                    .map(|_| {
                        let i = rem % per_axis;
                        rem /= per_axis;
                        i as f64 * h
                    })
                    .collect();
                self.unnormalized(&x)
            })
            .fold(f64::INFINITY, f64::min)
    }
}
