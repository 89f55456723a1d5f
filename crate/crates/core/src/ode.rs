//! Dormand–Prince 5(4) with adaptive step control for complex linear systems.

use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OdeError {
    #[error("step size underflow at s = {at:e} (h = {h:e})")]
    StepUnderflow { at: f64, h: f64 },
    #[error("step budget of {0} exhausted")]
    TooManySteps(usize),
    #[error("non-finite state at s = {0:e}")]
    NonFinite(f64),
}

// Butcher tableau
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// b - b̂
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dopri5 {
    pub rtol: f64,
    /// Absolute tolerance relative to the largest controlled component.
    pub atol_scale: f64,
    pub max_steps: usize,
}

impl Default for Dopri5 {
    fn default() -> Self {
        Dopri5 {
            rtol: 1e-10,
            atol_scale: 1e-12,
            max_steps: 2_000_000,
        }
    }
}

/// Mutable integration state carried across calls so step sizes and budgets
/// persist over consecutive windows.
#[derive(Debug, Clone)]
pub struct Stepper {
    pub method: Dopri5,
    pub h: f64,
    pub steps: usize,
    pub rejected: usize,
    k: [Vec<Complex64>; 7],
    tmp: Vec<Complex64>,
    ynew: Vec<Complex64>,
}

impl Stepper {
    pub fn new(method: Dopri5, dim: usize, h0: f64) -> Self {
        let z = vec![Complex64::new(0.0, 0.0); dim];
        Stepper {
            method,
            h: h0,
            steps: 0,
            rejected: 0,
            k: std::array::from_fn(|_| z.clone()),
            tmp: z.clone(),
            ynew: z,
        }
    }

    /// Advance `y` from `s0` to `s1`. Only the first `controlled` components
    /// enter the error norm; the rest (typically accumulated quadratures) ride
    /// along. `after_step` may rescale the state between steps.
    pub fn integrate<F, H>(
        &mut self,
        f: F,
        s0: f64,
        s1: f64,
        y: &mut [Complex64],
        controlled: usize,
        mut after_step: H,
    ) -> Result<(), OdeError>
    where
        F: Fn(f64, &[Complex64], &mut [Complex64]),
        H: FnMut(&mut [Complex64]),
    {
        let dim = y.len();
        let dir = (s1 - s0).signum();
        if dir == 0.0 {
            return Ok(());
        }
        let span = (s1 - s0).abs();
        let mut s = s0;
        let mut h = self.h.abs().min(span).max(span * 1e-12) * dir;
        let unit = s0.abs().max(s1.abs()).max(1.0);

        f(s, y, &mut self.k[0]);
        loop {
            let remaining = s1 - s;
            if remaining * dir <= 1e-15 * unit {
                break;
            }
            let last = (h.abs() >= remaining.abs()) as u8;
            if last == 1 {
                h = remaining;
            }
            if h.abs() < 1e-14 * unit {
                return Err(OdeError::StepUnderflow { at: s, h });
            }
            if self.steps >= self.method.max_steps {
                return Err(OdeError::TooManySteps(self.method.max_steps));
            }
            self.steps += 1;

            let [k1, k2, k3, k4, k5, k6, k7] = &mut self.k;
            let tmp = &mut self.tmp;
            for i in 0..dim {
                tmp[i] = y[i] + k1[i] * (h * A21);
            }
            f(s + C2 * h, tmp, k2);
            for i in 0..dim {
                tmp[i] = y[i] + (k1[i] * A31 + k2[i] * A32) * h;
            }
            f(s + C3 * h, tmp, k3);
            for i in 0..dim {
                tmp[i] = y[i] + (k1[i] * A41 + k2[i] * A42 + k3[i] * A43) * h;
            }
            f(s + C4 * h, tmp, k4);
            for i in 0..dim {
                tmp[i] = y[i] + (k1[i] * A51 + k2[i] * A52 + k3[i] * A53 + k4[i] * A54) * h;
            }
            f(s + C5 * h, tmp, k5);
            for i in 0..dim {
                tmp[i] = y[i]
                    + (k1[i] * A61 + k2[i] * A62 + k3[i] * A63 + k4[i] * A64 + k5[i] * A65) * h;
            }
            f(s + h, tmp, k6);
            let ynew = &mut self.ynew;
            for i in 0..dim {
                ynew[i] = y[i]
                    + (k1[i] * B1 + k3[i] * B3 + k4[i] * B4 + k5[i] * B5 + k6[i] * B6) * h;
            }
            f(s + h, ynew, k7);

            let ymax = y[..controlled]
                .iter()
                .chain(&ynew[..controlled])
                .map(|v| v.norm())
                .fold(0.0, f64::max);
            let atol = self.method.atol_scale * ymax.max(f64::MIN_POSITIVE);
            let mut err2 = 0.0;
            for i in 0..controlled {
                let e = (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6
                    + k7[i] * E7)
                    * h;
                let sc = atol + self.method.rtol * y[i].norm().max(ynew[i].norm());
                err2 += (e.norm() / sc).powi(2);
            }
            let err = (err2 / controlled as f64).sqrt();
            if !err.is_finite() {
                if ynew.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) && h.abs() < 1e-10 * unit {
                    return Err(OdeError::NonFinite(s));
                }
                self.rejected += 1;
                h *= 0.2;
                continue;
            }
            if err <= 1.0 {
                s = if last == 1 { s1 } else { s + h };
                y.copy_from_slice(ynew);
                after_step(y);
                // FSAL: k7 is f at the new point unless the state was rescaled
                f(s, y, k1);
                let fac = if err == 0.0 {
                    5.0
                } else {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                };
                if last == 0 {
                    h *= fac;
                    self.h = h;
                }
            } else {
                self.rejected += 1;
                h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
            }
        }
        Ok(())
    }
}
