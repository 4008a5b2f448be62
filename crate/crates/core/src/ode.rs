//! Dormand-Prince 5(4) embedded Runge-Kutta integrator for small fixed-size systems.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct Dopri5Options {
    pub atol: f64,
    pub rtol: f64,
    /// Step below which the integration is declared failed, relative to the span.
    pub min_step_fraction: f64,
    pub max_steps: usize,
}

impl Default for Dopri5Options {
    fn default() -> Self {
        Self {
            atol: 1e-10,
            rtol: 1e-10,
            min_step_fraction: 1e-14,
            max_steps: 10_000_000,
        }
    }
}

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
// Difference between the 5th- and 4th-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Adaptive integrator that carries its step size between calls, so a trajectory
/// can be advanced grid point by grid point without restarting the controller.
#[derive(Clone, Debug)]
pub struct Dopri5<const N: usize> {
    pub opts: Dopri5Options,
    h: f64,
    pub accepted: usize,
    pub rejected: usize,
}

fn axpy<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (i, o) in out.iter_mut().enumerate() {
        let mut s = 0.0;
        for (c, k) in terms {
            s += c * k[i];
        }
        *o += h * s;
    }
    out
}

impl<const N: usize> Dopri5<N> {
    pub fn new(opts: Dopri5Options, initial_step: f64) -> Self {
        Self {
            opts,
            h: initial_step,
            accepted: 0,
            rejected: 0,
        }
    }

    /// Advance `y` from `t0` to `t1` (t1 > t0).
    pub fn integrate<F>(&mut self, f: &F, t0: f64, t1: f64, y: &mut [f64; N]) -> Result<()>
    where
        F: Fn(f64, &[f64; N]) -> [f64; N],
    {
        let span = t1 - t0;
        if span <= 0.0 {
            return Ok(());
        }
        let h_min = self.opts.min_step_fraction * span.max(t1.abs());
        let mut t = t0;
        let mut steps = 0usize;
        while t < t1 {
            if steps >= self.opts.max_steps {
                return Err(Error::NonConvergence {
                    what: "adaptive Runge-Kutta integration",
                    iterations: steps,
                    residual: t1 - t,
                });
            }
            steps += 1;
            let last = t + self.h >= t1;
            let h = if last { t1 - t } else { self.h };
            let k1 = f(t, y);
            let k2 = f(t + C2 * h, &axpy(y, h, &[(A21, &k1)]));
            let k3 = f(t + C3 * h, &axpy(y, h, &[(A31, &k1), (A32, &k2)]));
            let k4 = f(t + C4 * h, &axpy(y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
            let k5 = f(
                t + C5 * h,
                &axpy(y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
            );
            let k6 = f(
                t + h,
                &axpy(y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
            );
            let y5 = axpy(y, h, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
            let k7 = f(t + h, &y5);
            let mut err2 = 0.0;
            for i in 0..N {
                let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let sc = self.opts.atol + self.opts.rtol * y[i].abs().max(y5[i].abs());
                err2 += (e / sc) * (e / sc);
            }
            let err = (err2 / N as f64).sqrt();
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            if err <= 1.0 {
                t = if last { t1 } else { t + h };
                *y = y5;
                self.accepted += 1;
                // Do not let the truncated final step shrink the carried step size.
                if !last || factor < 1.0 {
                    self.h = h * factor;
                }
            } else {
                self.rejected += 1;
                self.h = h * factor.min(1.0);
                if self.h < h_min {
                    return Err(Error::StepUnderflow { t });
                }
            }
            if !y.iter().all(|v| v.is_finite()) {
                return Err(Error::StepUnderflow { t });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator_one_period() {
        let w = 3.0;
        let f = |_t: f64, y: &[f64; 2]| [w * y[1], -w * y[0]];
        let mut y = [1.0, 0.0];
        let mut ig = Dopri5::new(Dopri5Options::default(), 1e-3);
        let period = std::f64::consts::TAU / w;
        ig.integrate(&f, 0.0, period, &mut y).unwrap();
        assert!((y[0] - 1.0).abs() < 1e-9 && y[1].abs() < 1e-9, "{y:?}");
    }

    #[test]
    fn piecewise_calls_match_single_call() {
        let f = |t: f64, y: &[f64; 1]| [-y[0] + t.sin()];
        let mut a = [0.5];
        let mut ig = Dopri5::new(Dopri5Options::default(), 1e-2);
        ig.integrate(&f, 0.0, 4.0, &mut a).unwrap();
        let mut b = [0.5];
        let mut ig2 = Dopri5::new(Dopri5Options::default(), 1e-2);
        for i in 0..40 {
            ig2.integrate(&f, i as f64 * 0.1, (i + 1) as f64 * 0.1, &mut b).unwrap();
        }
        // exact: y = Ce^{-t} + (sin t - cos t)/2
        let c = 0.5 + 0.5;
        let exact = c * (-4.0f64).exp() + (4.0f64.sin() - 4.0f64.cos()) / 2.0;
        assert!((a[0] - exact).abs() < 1e-9);
        assert!((b[0] - exact).abs() < 1e-9);
    }

    #[test]
    fn blow_up_reports_underflow() {
        let f = |_t: f64, y: &[f64; 1]| [y[0] * y[0]];
        let mut y = [1.0];
        let mut ig = Dopri5::new(Dopri5Options::default(), 1e-3);
        let r = ig.integrate(&f, 0.0, 2.0, &mut y);
        assert!(matches!(r, Err(Error::StepUnderflow { .. })), "{r:?}");
    }
}
