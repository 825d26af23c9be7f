//! Predictor feedback: forward integration of the plant over the delay
//! interval using the committed input history.
//!
//! At outer time `t` the inner integrand at inner time `s` reads the input
//! `u_h(t + s - tau)`, so `predict(.., tau)` returns the state the plant will
//! reach at `t + tau` under the inputs already sent.

use crate::error::{Error, Result};
use crate::numerics::{rk4_step, InputHistory, IntegratorConfig};
use crate::scalar::Scalar;

/// Continuous-time plant `x' = f(x, u)` with `N` states and `M` inputs.
pub trait SystemModel<T: Scalar, const N: usize, const M: usize> {
    fn dynamics(&self, x: &[T; N], u: &[T; M]) -> [T; N];

    /// Optional analytic `df/du`, row-major `N x M`.
    fn input_jacobian(&self, _x: &[T; N], _u: &[T; M]) -> Option<[[T; M]; N]> {
        None
    }
}

impl<T: Scalar, const N: usize, const M: usize, S: SystemModel<T, N, M> + ?Sized> SystemModel<T, N, M> for &S {
    fn dynamics(&self, x: &[T; N], u: &[T; M]) -> [T; N] {
        (**self).dynamics(x, u)
    }

    fn input_jacobian(&self, x: &[T; N], u: &[T; M]) -> Option<[[T; M]; N]> {
        (**self).input_jacobian(x, u)
    }
}

/// True-delay and estimated-delay predictions taken at the same instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction<T, const N: usize> {
    pub x_p: [T; N],
    pub x_p_hat: [T; N],
    pub tau: T,
    pub tau_hat: T,
}

impl<T: Scalar, const N: usize> Prediction<T, N> {
    /// Euclidean norm of `x_p_hat - x_p`.
    pub fn error_norm(&self) -> T {
        self.x_p
            .iter()
            .zip(&self.x_p_hat)
            .fold(T::zero(), |acc, (&a, &b)| acc + (b - a) * (b - a))
            .sqrt()
    }
}

/// Integrates `x' = f(x, u_h(s))` for input times `s` in `[from, to]`,
/// starting from `x` at `s = from`.
///
/// The interval is split into `ceil((to - from) / dt)` equal steps so the
/// grid lands on `to` exactly; when the length is a multiple of `dt` every
/// history read at a step boundary is a stored sample.
pub fn integrate_open_loop<T, S, const N: usize, const M: usize>(
    model: &S,
    x: &[T; N],
    hist: &InputHistory<T, M>,
    from: T,
    to: T,
    integ: &IntegratorConfig<T>,
) -> Result<[T; N]>
where
    T: Scalar,
    S: SystemModel<T, N, M> + ?Sized,
{
    let length = to - from;
    if length < T::zero() {
        return Err(Error::InvalidParameter {
            name: "tau",
            reason: format!("integration length must be non-negative, got {length}"),
        });
    }
    if length == T::zero() {
        return Ok(*x);
    }
    let steps = (length / integ.dt - T::lit(1e-9)).ceil().max(T::one());
    let h = length / steps;
    let steps = steps.to_usize().unwrap_or(0);

    let mut state = *x;
    if h == hist.dt() {
        if let Some(i0) = hist.grid_index(from).filter(|i| i + steps < hist.len()) {
            // Grid-aligned: the stage inputs are stored samples and midpoints.
            let half = T::lit(0.5);
            for j in 0..steps {
                let (a, b) = (hist.sample(i0 + j), hist.sample(i0 + j + 1));
                let mid: [T; M] = std::array::from_fn(|i| a[i] + (b[i] - a[i]) * half);
                let mut stage = 0;
                let s0 = from + T::from_usize(j).unwrap() * h;
                state = rk4_step(
                    |_, xs: &[T; N]| {
                        let u = match stage {
                            0 => &a,
                            3 => &b,
                            _ => &mid,
                        };
                        stage += 1;
                        Ok(model.dynamics(xs, u))
                    },
                    &state,
                    s0,
                    h,
                )?;
            }
            return Ok(state);
        }
    }
    for j in 0..steps {
        let s0 = from + T::from_usize(j).unwrap() * h;
        state = rk4_step(|s, xs: &[T; N]| Ok(model.dynamics(xs, &hist.query(s)?)), &state, s0, h)?;
    }
    Ok(state)
}

/// `Psi(tau, x, u_h)`: the state `tau` seconds ahead of the history's `t_now`.
pub fn predict<T, S, const N: usize, const M: usize>(
    model: &S,
    x: &[T; N],
    hist: &InputHistory<T, M>,
    tau: T,
    integ: &IntegratorConfig<T>,
) -> Result<[T; N]>
where
    T: Scalar,
    S: SystemModel<T, N, M> + ?Sized,
{
    if tau < T::zero() {
        return Err(Error::InvalidParameter {
            name: "tau",
            reason: format!("delay must be non-negative, got {tau}"),
        });
    }
    let now = hist.t_now();
    integrate_open_loop(model, x, hist, now - tau, now, integ)
}

/// Predictions under the true delay `tau` and the controller's estimate `tau_hat`.
pub fn predict_pair<T, S, const N: usize, const M: usize>(
    model: &S,
    x: &[T; N],
    hist: &InputHistory<T, M>,
    tau: T,
    tau_hat: T,
    integ: &IntegratorConfig<T>,
) -> Result<Prediction<T, N>>
where
    T: Scalar,
    S: SystemModel<T, N, M> + ?Sized,
{
    let x_p = predict(model, x, hist, tau, integ)?;
    let x_p_hat = if tau_hat == tau {
        x_p
    } else {
        predict(model, x, hist, tau_hat, integ)?
    };
    Ok(Prediction {
        x_p,
        x_p_hat,
        tau,
        tau_hat,
    })
}
