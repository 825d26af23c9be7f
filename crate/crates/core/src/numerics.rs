//! Shared numeric scaffolding: class-K and decay function families, the
//! fixed-step RK4 integrator, and the grid-aligned input history buffer.

use std::collections::VecDeque;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

type ScalarMap<T> = Arc<dyn Fn(T) -> T + Send + Sync>;

/// Extended class-K function `alpha`.
#[derive(Clone)]
pub enum ClassKFn<T> {
    /// `alpha(h) = gamma * h`.
    Linear { gamma: T },
    /// User supplied rule. The inverse is optional; inflated-set
    /// diagnostics need it.
    Custom {
        eval: ScalarMap<T>,
        inverse: Option<ScalarMap<T>>,
    },
}

impl<T: Scalar> ClassKFn<T> {
    pub fn linear(gamma: T) -> Result<Self> {
        if !(gamma > T::zero()) || !gamma.is_finite() {
            return Err(Error::InvalidParameter {
                name: "gamma",
                reason: format!("must be positive and finite, got {gamma}"),
            });
        }
        Ok(Self::Linear { gamma })
    }

    pub fn custom(
        eval: impl Fn(T) -> T + Send + Sync + 'static,
        inverse: Option<Box<dyn Fn(T) -> T + Send + Sync>>,
    ) -> Self {
        Self::Custom {
            eval: Arc::new(eval),
            inverse: inverse.map(Arc::from),
        }
    }

    pub fn eval(&self, h: T) -> T {
        match self {
            Self::Linear { gamma } => *gamma * h,
            Self::Custom { eval, .. } => eval(h),
        }
    }

    pub fn inverse(&self, y: T) -> Result<T> {
        match self {
            Self::Linear { gamma } => Ok(y / *gamma),
            Self::Custom { inverse: Some(inv), .. } => Ok(inv(y)),
            Self::Custom { inverse: None, .. } => Err(Error::UnsupportedInverse),
        }
    }
}

impl<T: fmt::Debug> fmt::Debug for ClassKFn<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Linear { gamma } => f.debug_struct("Linear").field("gamma", gamma).finish(),
            Self::Custom { inverse, .. } => f
                .debug_struct("Custom")
                .field("invertible", &inverse.is_some())
                .finish(),
        }
    }
}

/// `scale * exp(-lambda * h)`: strictly positive, decreasing in `h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayFn<T> {
    pub scale: T,
    pub lambda: T,
}

impl<T: Scalar> DecayFn<T> {
    pub fn new(scale: T, lambda: T) -> Result<Self> {
        if !(scale > T::zero()) {
            return Err(Error::InvalidParameter {
                name: "scale",
                reason: format!("must be positive, got {scale}"),
            });
        }
        if !(lambda > T::zero()) {
            return Err(Error::InvalidParameter {
                name: "lambda",
                reason: format!("must be positive, got {lambda}"),
            });
        }
        Ok(Self { scale, lambda })
    }

    pub fn eval(&self, h: T) -> T {
        self.scale * (-self.lambda * h).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IntegrationMethod {
    #[default]
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig<T> {
    pub dt: T,
    pub method: IntegrationMethod,
}

impl<T: Scalar> IntegratorConfig<T> {
    pub fn new(dt: T) -> Result<Self> {
        if !(dt > T::zero()) || !dt.is_finite() {
            return Err(Error::InvalidParameter {
                name: "dt",
                reason: format!("must be positive and finite, got {dt}"),
            });
        }
        Ok(Self {
            dt,
            method: IntegrationMethod::Rk4,
        })
    }
}

impl Default for IntegratorConfig<f64> {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            method: IntegrationMethod::Rk4,
        }
    }
}

/// One classic fourth-order Runge-Kutta step of `x' = f(t, x)` from `t` to `t + dt`.
///
/// The vector field is fallible so that it can read from an [`InputHistory`].
pub fn rk4_step<T, const N: usize, F>(mut f: F, x: &[T; N], t: T, dt: T) -> Result<[T; N]>
where
    T: Scalar,
    F: FnMut(T, &[T; N]) -> Result<[T; N]>,
{
    let half = dt * T::lit(0.5);
    let axpy = |k: &[T; N], s: T| -> [T; N] { std::array::from_fn(|i| x[i] + s * k[i]) };

    let k1 = f(t, x)?;
    let k2 = f(t + half, &axpy(&k1, half))?;
    let k3 = f(t + half, &axpy(&k2, half))?;
    let k4 = f(t + dt, &axpy(&k3, dt))?;

    let two = T::lit(2.0);
    let sixth = dt / T::lit(6.0);
    let out: [T; N] = std::array::from_fn(|i| x[i] + sixth * (k1[i] + two * k2[i] + two * k3[i] + k4[i]));
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericFailure { t: (t + dt).as_f64() });
    }
    Ok(out)
}

/// Grid-aligned record of past inputs `u(t)` on `[t_now - span, t_now]`.
///
/// Samples live at multiples of `dt`; grid queries return the stored sample
/// exactly and off-grid queries interpolate linearly between neighbours.
/// Queries outside the buffered span are an error, never an extrapolation.
#[derive(Debug, Clone, PartialEq)]
pub struct InputHistory<T, const M: usize> {
    dt: T,
    capacity: usize,
    samples: VecDeque<[T; M]>,
    /// Grid index of the newest sample; `t_now = now_index * dt`.
    now_index: i64,
}

impl<T: Scalar, const M: usize> InputHistory<T, M> {
    /// Relative tolerance (in grid units) for snapping a query onto a sample.
    const SNAP: f64 = 1e-9;

    /// A history covering `[t_now - span, t_now]` filled with `initial`.
    ///
    /// The buffer keeps one extra sample beyond `span` so that a full step
    /// can be read after the newest sample is pushed.
    pub fn constant(dt: T, span: T, t_now_index: i64, initial: [T; M]) -> Result<Self> {
        if !(dt > T::zero()) {
            return Err(Error::InvalidParameter {
                name: "dt",
                reason: format!("must be positive, got {dt}"),
            });
        }
        if !(span >= T::zero()) || !span.is_finite() {
            return Err(Error::InvalidParameter {
                name: "span",
                reason: format!("must be non-negative and finite, got {span}"),
            });
        }
        let steps = (span / dt - T::lit(Self::SNAP)).ceil().to_usize().unwrap_or(0);
        let capacity = steps + 2;
        Ok(Self {
            dt,
            capacity,
            samples: std::iter::repeat_n(initial, capacity).collect(),
            now_index: t_now_index,
        })
    }

    /// Builds a history from explicit samples at `t_now - (len-1) dt, ..., t_now`.
    pub fn from_samples(dt: T, t_now_index: i64, samples: Vec<[T; M]>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidParameter {
                name: "samples",
                reason: "history needs at least one sample".into(),
            });
        }
        if !(dt > T::zero()) {
            return Err(Error::InvalidParameter {
                name: "dt",
                reason: format!("must be positive, got {dt}"),
            });
        }
        Ok(Self {
            dt,
            capacity: samples.len(),
            samples: samples.into(),
            now_index: t_now_index,
        })
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn t_now(&self) -> T {
        T::from_i64(self.now_index).unwrap() * self.dt
    }

    pub fn t_start(&self) -> T {
        T::from_i64(self.now_index - (self.samples.len() as i64 - 1)).unwrap() * self.dt
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn latest(&self) -> [T; M] {
        *self.samples.back().expect("history is never empty")
    }

    /// Appends the sample for `t_now + dt`, dropping the oldest when full.
    pub fn push(&mut self, u: [T; M]) {
        if self.samples.len() == self.capacity {
            self.samples.pop_front();
        }
        self.samples.push_back(u);
        self.now_index += 1;
    }

    /// Index of the stored sample at `t`, if `t` lies on the grid inside the span.
    pub fn grid_index(&self, t: T) -> Option<usize> {
        let pos = ((t - self.t_start()) / self.dt).as_f64();
        let nearest = pos.round();
        let snap = Self::SNAP * (1.0 + pos.abs());
        ((pos - nearest).abs() <= snap && nearest >= 0.0 && nearest < self.samples.len() as f64)
            .then_some(nearest as usize)
    }

    /// Stored sample by index, oldest first.
    pub fn sample(&self, index: usize) -> [T; M] {
        self.samples[index]
    }

    pub fn query(&self, t: T) -> Result<[T; M]> {
        let last = (self.samples.len() - 1) as f64;
        let pos = ((t - self.t_start()) / self.dt).as_f64();
        let snap = Self::SNAP * (1.0 + pos.abs());
        if !(pos >= -snap && pos <= last + snap) {
            return Err(Error::OutOfRange {
                t: t.as_f64(),
                start: self.t_start().as_f64(),
                end: self.t_now().as_f64(),
            });
        }
        let nearest = pos.round();
        if (pos - nearest).abs() <= snap {
            return Ok(self.samples[nearest as usize]);
        }
        let lo = pos.floor() as usize;
        let frac = T::lit(pos - lo as f64);
        let (a, b) = (&self.samples[lo], &self.samples[lo + 1]);
        Ok(std::array::from_fn(|i| a[i] + (b[i] - a[i]) * frac))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn linear_classk_values() {
        let one = ClassKFn::linear(1.0).unwrap();
        assert_eq!(one.eval(2.0), 2.0);
        assert_eq!(one.eval(0.0), 0.0);
        assert_eq!(ClassKFn::linear(3.0).unwrap().eval(-1.5), -4.5);
    }

    #[test]
    fn linear_classk_inverse() {
        assert_eq!(ClassKFn::linear(1.0).unwrap().inverse(5.0).unwrap(), 5.0);
        assert_eq!(ClassKFn::linear(2.0).unwrap().inverse(-4.0).unwrap(), -2.0);
        assert_eq!(ClassKFn::linear(1.0).unwrap().inverse(0.0).unwrap(), 0.0);
    }

    #[test]
    fn custom_classk_without_inverse_errors() {
        let cubic = ClassKFn::<f64>::custom(|h| h * h * h, None);
        assert_eq!(cubic.eval(2.0), 8.0);
        assert_eq!(cubic.inverse(8.0), Err(Error::UnsupportedInverse));

        let with_inv = ClassKFn::<f64>::custom(|h| h * h * h, Some(Box::new(f64::cbrt)));
        assert_relative_eq!(with_inv.inverse(8.0).unwrap(), 2.0);
    }

    #[test]
    fn non_positive_gain_rejected() {
        assert!(ClassKFn::linear(0.0).is_err());
        assert!(ClassKFn::linear(-1.0).is_err());
        assert!(DecayFn::new(0.0, 1.0).is_err());
        assert!(IntegratorConfig::new(-1.0).is_err());
    }

    #[test]
    fn classk_monotone_on_grid() {
        for alpha in [
            ClassKFn::linear(0.3).unwrap(),
            ClassKFn::custom(|h: f64| h * h * h + h, None),
        ] {
            let grid: Vec<f64> = (0..200).map(|i| -10.0 + 0.1 * i as f64).collect();
            for w in grid.windows(2) {
                assert!(alpha.eval(w[0]) < alpha.eval(w[1]));
            }
            assert_eq!(alpha.eval(0.0), 0.0);
        }
    }

    #[test]
    fn decay_positive_and_decreasing() {
        let mu = DecayFn::new(1.0, 0.05).unwrap();
        assert_eq!(mu.eval(0.0), 1.0);
        let mut prev = f64::INFINITY;
        for i in -100..100 {
            let v = mu.eval(i as f64);
            assert!(v > 0.0 && v < prev);
            prev = v;
        }
    }

    proptest! {
        #[test]
        fn linear_inverse_roundtrip(gamma in 1e-3f64..1e3, y in -1e6f64..1e6) {
            let a = ClassKFn::linear(gamma).unwrap();
            let back = a.eval(a.inverse(y).unwrap());
            prop_assert!((back - y).abs() <= 1e-12 * y.abs().max(1e-300));
        }
    }

    #[test]
    fn rk4_examples() {
        let zero = rk4_step(|_, _| Ok([0.0]), &[3.5], 0.0, 0.1).unwrap();
        assert_eq!(zero, [3.5]);
        let constant = rk4_step(|_, _| Ok([1.0]), &[0.0], 0.0, 0.1).unwrap();
        assert_relative_eq!(constant[0], 0.1, epsilon = 1e-15);
        let growth = rk4_step(|_, x: &[f64; 1]| Ok([x[0]]), &[1.0], 0.0, 0.1).unwrap();
        assert!((growth[0] - 0.1f64.exp()).abs() < 1e-7);
        assert!((growth[0] - 1.10517091).abs() < 1e-7);
    }

    #[test]
    fn rk4_non_finite_is_error() {
        let err = rk4_step(|_, _| Ok([f64::INFINITY]), &[0.0], 0.0, 0.1).unwrap_err();
        assert!(matches!(err, Error::NumericFailure { .. }));
    }

    #[test]
    fn rk4_fourth_order() {
        let global_error = |n: usize| {
            let dt = 1.0 / n as f64;
            let mut x = [1.0];
            for k in 0..n {
                x = rk4_step(|_, x: &[f64; 1]| Ok([x[0]]), &x, k as f64 * dt, dt).unwrap();
            }
            (x[0] - 1f64.exp()).abs()
        };
        let mut prev = global_error(4);
        for n in [8, 16, 32, 64] {
            let e = global_error(n);
            assert!(prev / e >= 14.0, "ratio {} at n={n}", prev / e);
            prev = e;
        }
    }

    #[test]
    fn rk4_works_in_f32() {
        let x = rk4_step(|_, x: &[f32; 1]| Ok([x[0]]), &[1.0f32], 0.0, 0.1).unwrap();
        assert!((x[0] - 0.1f32.exp()).abs() < 1e-6);
    }

    #[test]
    fn history_constant_and_midpoint() {
        let h = InputHistory::constant(0.01, 1.0, 0, [2.5]).unwrap();
        for t in [-1.0, -0.555, -0.01, 0.0] {
            assert_eq!(h.query(t).unwrap(), [2.5]);
        }
        let dt = 0.1;
        let h = InputHistory::from_samples(dt, 1, vec![[0.0], [1.0]]).unwrap();
        assert_eq!(h.query(dt / 2.0).unwrap(), [0.5]);
    }

    #[test]
    fn history_ramp_interpolation() {
        let dt = 0.001;
        let samples: Vec<[f64; 1]> = (0..=20).map(|k| [2.0 * k as f64 * dt]).collect();
        let h = InputHistory::from_samples(dt, 20, samples).unwrap();
        assert_relative_eq!(h.query(0.0105).unwrap()[0], 0.021, epsilon = 1e-15);
    }

    #[test]
    fn history_out_of_range() {
        let h = InputHistory::constant(0.1, 1.0, 0, [0.0]).unwrap();
        assert!(matches!(h.query(0.05), Err(Error::OutOfRange { .. })));
        assert!(matches!(h.query(-1.5), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn history_push_advances_window() {
        let mut h = InputHistory::constant(0.5, 1.0, 0, [0.0]).unwrap();
        let cap = h.len();
        h.push([1.0]);
        assert_eq!(h.len(), cap);
        assert_eq!(h.t_now(), 0.5);
        assert_eq!(h.query(0.5).unwrap(), [1.0]);
        assert_eq!(h.query(0.25).unwrap(), [0.5]);
        assert_eq!(h.latest(), [1.0]);
    }

    proptest! {
        #[test]
        fn history_roundtrip_is_exact(values in prop::collection::vec(-1e3f64..1e3, 1..200)) {
            let dt = 1e-3;
            let span = dt * values.len() as f64;
            let mut h = InputHistory::constant(dt, span, 0, [0.0]).unwrap();
            for &v in &values {
                h.push([v]);
            }
            for (k, &v) in values.iter().enumerate() {
                let t = (k + 1) as f64 * dt;
                prop_assert_eq!(h.query(t).unwrap()[0].to_bits(), v.to_bits());
            }
        }
    }
}
