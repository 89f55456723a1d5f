//! Gauss–Legendre rules.

use std::f64::consts::PI;

/// Nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    /// Newton iteration on `P_n` from the Chebyshev-like initial guesses.
    pub fn new(n: usize) -> Self {
        assert!(n > 0, "rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        GaussLegendre { nodes, weights }
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut s = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            s += w * f(mid + half * x);
        }
        s * half
    }

    /// Nodes and weights mapped to `[a, b]`.
    pub fn nodes_on(&self, a: f64, b: f64) -> Vec<(f64, f64)> {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| (mid + half * x, w * half))
            .collect()
    }

    /// Composite rule over `panels` equal subintervals.
    pub fn integrate_composite<F: FnMut(f64) -> f64>(
        &self,
        a: f64,
        b: f64,
        panels: usize,
        mut f: F,
    ) -> f64 {
        let h = (b - a) / panels as f64;
        (0..panels)
            .map(|i| {
                let lo = a + i as f64 * h;
                self.integrate(lo, lo + h, &mut f)
            })
            .sum()
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let dp = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, dp)
}

/// Surface area of the unit sphere `S^{k}` in `ℝ^{k+1}`.
pub fn sphere_area(k: usize) -> f64 {
    // |S^k| = 2 π^{(k+1)/2} / Γ((k+1)/2)
    let s = (k + 1) as f64 / 2.0;
    2.0 * PI.powf(s) / gamma_half_integer(k + 1)
}

/// Volume of the unit ball in `ℝⁿ`.
pub fn ball_volume(n: usize) -> f64 {
    if n == 0 {
        return 1.0;
    }
    sphere_area(n - 1) / n as f64
}

/// `Γ(m/2)` for a positive integer `m`.
fn gamma_half_integer(m: usize) -> f64 {
    assert!(m > 0);
    if m.is_multiple_of(2) {
        (1..m / 2).map(|k| k as f64).product()
    } else {
        // Γ(1/2) = √π, Γ(x+1) = x Γ(x)
        let mut g = PI.sqrt();
        let mut x = 0.5;
        while x < m as f64 / 2.0 - 0.25 {
            g *= x;
            x += 1.0;
        }
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exact_for_polynomials() {
        let gl = GaussLegendre::new(8);
        // degree 15 is exact with 8 nodes
        let v = gl.integrate(0.0, 2.0, |x| x.powi(15));
        assert_relative_eq!(v, 2f64.powi(16) / 16.0, max_relative = 1e-13);
        assert_relative_eq!(gl.weights.iter().sum::<f64>(), 2.0, epsilon = 1e-14);
    }

    #[test]
    fn sphere_and_ball_measures() {
        assert_relative_eq!(sphere_area(0), 2.0);
        assert_relative_eq!(sphere_area(1), 2.0 * PI);
        assert_relative_eq!(sphere_area(2), 4.0 * PI);
        assert_relative_eq!(ball_volume(3), 4.0 * PI / 3.0, max_relative = 1e-14);
        assert_relative_eq!(ball_volume(4), PI * PI / 2.0, max_relative = 1e-14);
    }
}
