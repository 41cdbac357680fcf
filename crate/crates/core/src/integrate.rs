//! Explicit Runge-Kutta integration of matrix-valued ODEs `dy/dt = f(t, y)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CMat;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum Integrator {
    /// Dormand-Prince 5(4) with step-size control.
    Dopri5 { rtol: f64, atol: f64 },
    /// Classic RK4 on a fixed step, shortened only to land on output times.
    Rk4 { dt: f64 },
}

impl Default for Integrator {
    fn default() -> Self {
        Integrator::Dopri5 { rtol: 1e-9, atol: 1e-9 }
    }
}

impl Integrator {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Integrator::Dopri5 { rtol, atol } => rtol > 0.0 && atol > 0.0,
            Integrator::Rk4 { dt } => dt > 0.0 && dt.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid integrator settings {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

const MAX_STEPS: usize = 10_000_000;

// Dormand-Prince tableau.
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
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn combo(y: &CMat, h: f64, terms: &[(f64, &CMat)]) -> CMat {
    let mut out = y.clone();
    for &(a, k) in terms {
        if a != 0.0 {
            out.zip_apply(k, |o, kv| *o += kv * (a * h));
        }
    }
    out
}

fn check_finite(y: &CMat, t: f64) -> Result<()> {
    if y.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::IntegratorFailure {
            t,
            reason: "non-finite state".into(),
        })
    }
}

/// Advances a state across consecutive intervals, carrying the adaptive step
/// size and the first-same-as-last derivative between calls.
#[derive(Debug, Clone)]
pub struct Stepper {
    method: Integrator,
    h: Option<f64>,
    fsal: Option<(f64, CMat)>,
    pub stats: Stats,
}

impl Stepper {
    pub fn new(method: Integrator) -> Result<Self> {
        method.validate()?;
        Ok(Self {
            method,
            h: None,
            fsal: None,
            stats: Stats::default(),
        })
    }

    /// Forget cached derivatives, e.g. after the right-hand side changed discontinuously.
    pub fn reset_derivative(&mut self) {
        self.fsal = None;
    }

    pub fn advance<F>(&mut self, rhs: &mut F, y: CMat, t0: f64, t1: f64) -> Result<CMat>
    where
        F: FnMut(f64, &CMat) -> Result<CMat>,
    {
        if t1 <= t0 {
            return Ok(y);
        }
        match self.method {
            Integrator::Rk4 { dt } => self.rk4(rhs, y, t0, t1, dt),
            Integrator::Dopri5 { rtol, atol } => self.dopri5(rhs, y, t0, t1, rtol, atol),
        }
    }

    fn eval<F>(&mut self, rhs: &mut F, t: f64, y: &CMat) -> Result<CMat>
    where
        F: FnMut(f64, &CMat) -> Result<CMat>,
    {
        self.stats.evaluations += 1;
        rhs(t, y)
    }

    fn rk4<F>(&mut self, rhs: &mut F, mut y: CMat, t0: f64, t1: f64, dt: f64) -> Result<CMat>
    where
        F: FnMut(f64, &CMat) -> Result<CMat>,
    {
        let steps = ((t1 - t0) / dt - 1e-9).ceil().max(1.0) as usize;
        let h = (t1 - t0) / steps as f64;
        for s in 0..steps {
            let t = t0 + s as f64 * h;
            let k1 = self.eval(rhs, t, &y)?;
            let k2 = self.eval(rhs, t + 0.5 * h, &combo(&y, h, &[(0.5, &k1)]))?;
            let k3 = self.eval(rhs, t + 0.5 * h, &combo(&y, h, &[(0.5, &k2)]))?;
            let k4 = self.eval(rhs, t + h, &combo(&y, h, &[(1.0, &k3)]))?;
            y = combo(&y, h, &[(1.0 / 6.0, &k1), (1.0 / 3.0, &k2), (1.0 / 3.0, &k3), (1.0 / 6.0, &k4)]);
            check_finite(&y, t + h)?;
            self.stats.accepted += 1;
        }
        Ok(y)
    }

    #[allow(clippy::too_many_arguments)]
    fn dopri5<F>(&mut self, rhs: &mut F, mut y: CMat, t0: f64, t1: f64, rtol: f64, atol: f64) -> Result<CMat>
    where
        F: FnMut(f64, &CMat) -> Result<CMat>,
    {
        let mut t = t0;
        let mut k1 = match self.fsal.take() {
            Some((tf, k)) if tf == t0 && k.shape() == y.shape() => k,
            _ => self.eval(rhs, t, &y)?,
        };
        let mut h = match self.h {
            Some(h) => h,
            None => {
                let yn = y.norm().max(1e-5);
                let fn_ = k1.norm().max(1e-5);
                (0.01 * yn / fn_).min(t1 - t0)
            }
        };
        let mut steps = 0usize;
        while t < t1 {
            steps += 1;
            if steps > MAX_STEPS {
                return Err(Error::IntegratorFailure {
                    t,
                    reason: "step budget exhausted".into(),
                });
            }
            let last = t + h >= t1 || (t1 - (t + h)) < 1e-12 * t1.abs().max(1.0);
            let step = if last { t1 - t } else { h };
            if step < 1e-14 * t.abs().max(1.0) {
                return Err(Error::IntegratorFailure {
                    t,
                    reason: format!("step size underflow ({step:e})"),
                });
            }
            let k2 = self.eval(rhs, t + C2 * step, &combo(&y, step, &[(A21, &k1)]))?;
            let k3 = self.eval(rhs, t + C3 * step, &combo(&y, step, &[(A31, &k1), (A32, &k2)]))?;
            let k4 = self.eval(
                rhs,
                t + C4 * step,
                &combo(&y, step, &[(A41, &k1), (A42, &k2), (A43, &k3)]),
            )?;
            let k5 = self.eval(
                rhs,
                t + C5 * step,
                &combo(&y, step, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
            )?;
            let k6 = self.eval(
                rhs,
                t + step,
                &combo(&y, step, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
            )?;
            let y_new = combo(&y, step, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
            let t_new = if last { t1 } else { t + step };
            let k7 = self.eval(rhs, t_new, &y_new)?;
            let err_vec = combo(
                &CMat::zeros(y.nrows(), y.ncols()),
                step,
                &[(E1, &k1), (E3, &k3), (E4, &k4), (E5, &k5), (E6, &k6), (E7, &k7)],
            );
            let mut acc = 0.0;
            for ((e, a), b) in err_vec.iter().zip(y.iter()).zip(y_new.iter()) {
                let scale = atol + rtol * a.norm().max(b.norm());
                acc += (e.norm() / scale).powi(2);
            }
            let err = (acc / err_vec.len().max(1) as f64).sqrt();
            if !err.is_finite() {
                self.stats.rejected += 1;
                h = step * 0.2;
                continue;
            }
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if err <= 1.0 {
                check_finite(&y_new, t_new)?;
                self.stats.accepted += 1;
                t = t_new;
                y = y_new;
                k1 = k7;
                // Do not let a shortened final step shrink the carried step size.
                if !last || factor * step > h {
                    h = step * factor;
                }
            } else {
                self.stats.rejected += 1;
                h = step * factor.min(1.0);
            }
        }
        self.h = Some(h);
        self.fsal = Some((t1, k1));
        Ok(y)
    }
}

/// Integrates from `times[0]` and returns the state at every entry of `times`
/// (the first being `y0` itself).
pub fn integrate<F>(mut rhs: F, y0: CMat, times: &[f64], method: Integrator) -> Result<(Vec<CMat>, Stats)>
where
    F: FnMut(f64, &CMat) -> Result<CMat>,
{
    check_times(times)?;
    let mut stepper = Stepper::new(method)?;
    let mut out = Vec::with_capacity(times.len());
    let mut y = y0;
    out.push(y.clone());
    for w in times.windows(2) {
        y = stepper.advance(&mut rhs, y, w[0], w[1])?;
        out.push(y.clone());
    }
    Ok((out, stepper.stats))
}

pub fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::InvalidInput("empty time grid".into()));
    }
    if times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("time grid must be finite and strictly increasing".into()));
    }
    Ok(())
}

/// `n + 1` equally spaced points on `[0, t_end]`.
pub fn uniform_grid(t_end: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|k| t_end * k as f64 / n as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;
    use num_complex::Complex64;

    fn decay(lambda: Complex64) -> impl FnMut(f64, &CMat) -> Result<CMat> {
        move |_, y| Ok(y.map(|z| -z * lambda))
    }

    #[test]
    fn dopri5_exponential() {
        let lambda = c(0.5, 3.0);
        let times = uniform_grid(4.0, 8);
        let (ys, stats) = integrate(decay(lambda), CMat::from_element(1, 1, c(1.0, 0.0)), &times, Integrator::default()).unwrap();
        for (t, y) in times.iter().zip(&ys) {
            assert!((y[(0, 0)] - (-lambda * *t).exp()).norm() < 1e-8);
        }
        assert!(stats.accepted > 0);
    }

    #[test]
    fn rk4_fourth_order() {
        let lambda = c(1.0, 1.0);
        let err = |dt: f64| {
            let (ys, _) = integrate(decay(lambda), CMat::from_element(1, 1, c(1.0, 0.0)), &[0.0, 1.0], Integrator::Rk4 { dt }).unwrap();
            (ys[1][(0, 0)] - (-lambda).exp()).norm()
        };
        let ratio = err(0.1) / err(0.05);
        assert!((ratio - 16.0).abs() < 2.0, "ratio {ratio}");
    }

    #[test]
    fn time_dependent_rhs() {
        // dy/dt = cos t  =>  y = sin t
        let (ys, _) = integrate(
            |t, _y: &CMat| Ok(CMat::from_element(1, 1, c(t.cos(), 0.0))),
            CMat::zeros(1, 1),
            &uniform_grid(3.0, 3),
            Integrator::default(),
        )
        .unwrap();
        assert!((ys[3][(0, 0)].re - 3f64.sin()).abs() < 1e-9);
    }

    #[test]
    fn blow_up_reports_failure() {
        let r = integrate(
            |_, y: &CMat| Ok(y.map(|z| z * z * z)),
            CMat::from_element(1, 1, c(1.0, 0.0)),
            &[0.0, 1.0],
            Integrator::default(),
        );
        assert!(matches!(r, Err(Error::IntegratorFailure { .. })));
    }

    #[test]
    fn rejects_bad_grid() {
        assert!(integrate(decay(c(1.0, 0.0)), CMat::zeros(1, 1), &[0.0, 0.0], Integrator::default()).is_err());
        assert!(Stepper::new(Integrator::Rk4 { dt: 0.0 }).is_err());
    }
}
