//! Barrier functions on the augmented state `(x, u)`, the extended state
//! barrier, constraint-row assembly and robust margins.

use crate::error::{Error, Result};
use crate::numerics::{ClassKFn, DecayFn};
use crate::predictor::SystemModel;
use crate::scalar::{dot, norm, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BarrierKind {
    /// Depends on `x` only; must be extended before it can act as an ICBF.
    StateOnly,
    /// First derivative lift of a state-only barrier.
    StateExtended,
    /// Depends on `u` only.
    Input,
    Plain,
}

/// Central-difference step for coordinate value `c`.
fn fd_step<T: Scalar>(c: T) -> T {
    T::lit(1e-6).max(T::epsilon().sqrt()) * (T::one() + c.abs())
}

/// Central-difference gradient of `f` with respect to `x`.
pub fn central_diff_x<T, const N: usize, const M: usize>(
    f: impl Fn(&[T; N], &[T; M]) -> T,
    x: &[T; N],
    u: &[T; M],
) -> [T; N]
where
    T: Scalar,
{
    std::array::from_fn(|i| {
        let h = fd_step(x[i]);
        let (mut hi, mut lo) = (*x, *x);
        hi[i] = x[i] + h;
        lo[i] = x[i] - h;
        (f(&hi, u) - f(&lo, u)) / (hi[i] - lo[i])
    })
}

/// Central-difference gradient of `f` with respect to `u`.
pub fn central_diff_u<T, const N: usize, const M: usize>(
    f: impl Fn(&[T; N], &[T; M]) -> T,
    x: &[T; N],
    u: &[T; M],
) -> [T; M]
where
    T: Scalar,
{
    std::array::from_fn(|i| {
        let h = fd_step(u[i]);
        let (mut hi, mut lo) = (*u, *u);
        hi[i] = u[i] + h;
        lo[i] = u[i] - h;
        (f(x, &hi) - f(x, &lo)) / (hi[i] - lo[i])
    })
}

/// Differentiable scalar `h(x, u)`; its zero super-level set is the safe set.
///
/// Gradients default to central differences; implementors with closed forms
/// should override them.
pub trait Barrier<T: Scalar, const N: usize, const M: usize> {
    fn kind(&self) -> BarrierKind {
        BarrierKind::Plain
    }

    fn value(&self, x: &[T; N], u: &[T; M]) -> T;

    fn grad_x(&self, x: &[T; N], u: &[T; M]) -> [T; N] {
        central_diff_x(|x, u| self.value(x, u), x, u)
    }

    fn grad_u(&self, x: &[T; N], u: &[T; M]) -> [T; M] {
        central_diff_u(|x, u| self.value(x, u), x, u)
    }
}

impl<T: Scalar, const N: usize, const M: usize, B: Barrier<T, N, M> + ?Sized> Barrier<T, N, M> for &B {
    fn kind(&self) -> BarrierKind {
        (**self).kind()
    }
    fn value(&self, x: &[T; N], u: &[T; M]) -> T {
        (**self).value(x, u)
    }
    fn grad_x(&self, x: &[T; N], u: &[T; M]) -> [T; N] {
        (**self).grad_x(x, u)
    }
    fn grad_u(&self, x: &[T; N], u: &[T; M]) -> [T; M] {
        (**self).grad_u(x, u)
    }
}

/// Barrier given by a closure, differentiated numerically.
pub struct FnBarrier<F> {
    kind: BarrierKind,
    f: F,
}

impl<F> FnBarrier<F> {
    pub fn new(kind: BarrierKind, f: F) -> Self {
        Self { kind, f }
    }
}

impl<T, F, const N: usize, const M: usize> Barrier<T, N, M> for FnBarrier<F>
where
    T: Scalar,
    F: Fn(&[T; N], &[T; M]) -> T,
{
    fn kind(&self) -> BarrierKind {
        self.kind
    }
    fn value(&self, x: &[T; N], u: &[T; M]) -> T {
        (self.f)(x, u)
    }
}

/// Dynamically defined controller `u' = phi(x, u) + v`.
pub trait IntegralController<T: Scalar, const N: usize, const M: usize> {
    fn phi(&self, x: &[T; N], u: &[T; M]) -> [T; M];
}

impl<T: Scalar, const N: usize, const M: usize, C: IntegralController<T, N, M> + ?Sized> IntegralController<T, N, M>
    for &C
{
    fn phi(&self, x: &[T; N], u: &[T; M]) -> [T; M] {
        (**self).phi(x, u)
    }
}

/// `h_e(x, u) = dh_x/dx(x) f(x, u) + alpha_x(h_x(x))`.
///
/// Gradients come from central differences of `h_e` itself, which picks up
/// the Hessian of `h_x` and the Jacobian of `f` without asking for them.
#[derive(Debug, Clone)]
pub struct ExtendedBarrier<T, S, B> {
    h_x: B,
    model: S,
    alpha_x: ClassKFn<T>,
}

impl<T: Scalar, S, B> ExtendedBarrier<T, S, B> {
    pub fn new<const N: usize, const M: usize>(h_x: B, model: S, alpha_x: ClassKFn<T>) -> Result<Self>
    where
        B: Barrier<T, N, M>,
        S: SystemModel<T, N, M>,
    {
        if h_x.kind() != BarrierKind::StateOnly {
            return Err(Error::BarrierMisuse(
                "only a state-only barrier (no dependence on u) can be extended",
            ));
        }
        Ok(Self { h_x, model, alpha_x })
    }
}

impl<T, S, B, const N: usize, const M: usize> Barrier<T, N, M> for ExtendedBarrier<T, S, B>
where
    T: Scalar,
    S: SystemModel<T, N, M>,
    B: Barrier<T, N, M>,
{
    fn kind(&self) -> BarrierKind {
        BarrierKind::StateExtended
    }

    fn value(&self, x: &[T; N], u: &[T; M]) -> T {
        let grad = self.h_x.grad_x(x, u);
        dot(&grad, &self.model.dynamics(x, u)) + self.alpha_x.eval(self.h_x.value(x, u))
    }
}

/// Affine constraint `b^T v >= a + r` on the safety correction `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintRow<T> {
    pub a: T,
    pub b: Vec<T>,
    /// Robust margin, zero unless [`robust_margin`] was applied.
    pub r: T,
    /// `h_i` at the evaluation point.
    pub barrier_value: T,
}

impl<T: Scalar> ConstraintRow<T> {
    pub fn new(a: T, b: Vec<T>) -> Self {
        Self {
            a,
            b,
            r: T::zero(),
            barrier_value: T::zero(),
        }
    }

    pub fn with_margin(mut self, r: T) -> Self {
        self.r = r;
        self
    }

    /// Tightened right-hand side `a + r`.
    pub fn rhs(&self) -> T {
        self.a + self.r
    }

    pub fn b_norm(&self) -> T {
        norm(&self.b)
    }

    /// `b^T v - (a + r)`; non-negative when `v` satisfies the row.
    pub fn slack(&self, v: &[T]) -> T {
        dot(&self.b, v) - self.rhs()
    }
}

/// Assembles `(a, b)` so that `h' + alpha(h) = -a + b^T v` along
/// `x' = f(x, u)`, `u' = phi(x, u) + v`.
pub fn constraint_row<T, H, S, C, const N: usize, const M: usize>(
    h: &H,
    model: &S,
    phi: &C,
    alpha: &ClassKFn<T>,
    x: &[T; N],
    u: &[T; M],
) -> ConstraintRow<T>
where
    T: Scalar,
    H: Barrier<T, N, M> + ?Sized,
    S: SystemModel<T, N, M> + ?Sized,
    C: IntegralController<T, N, M> + ?Sized,
{
    let value = h.value(x, u);
    let gx = h.grad_x(x, u);
    let gu = h.grad_u(x, u);
    let a = -dot(&gx, &model.dynamics(x, u)) - dot(&gu, &phi.phi(x, u)) - alpha.eval(value);
    ConstraintRow {
        a,
        b: gu.to_vec(),
        r: T::zero(),
        barrier_value: value,
    }
}

/// Decaying robustness gains `mu(h)`, `sigma(h)` for one barrier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustMarginSpec<T> {
    pub mu: DecayFn<T>,
    pub sigma: DecayFn<T>,
}

impl<T: Scalar> RobustMarginSpec<T> {
    pub fn new(mu0: T, sigma0: T, lambda: T) -> Result<Self> {
        Ok(Self {
            mu: DecayFn::new(mu0, lambda)?,
            sigma: DecayFn::new(sigma0, lambda)?,
        })
    }

    /// `mu(h) |b| + sigma(h) |b|^2`.
    pub fn margin(&self, h: T, b_norm: T) -> T {
        self.mu.eval(h) * b_norm + self.sigma.eval(h) * b_norm * b_norm
    }
}

/// Returns `row` with its robust margin set from `spec`.
pub fn robust_margin<T: Scalar>(row: ConstraintRow<T>, spec: &RobustMarginSpec<T>) -> ConstraintRow<T> {
    let r = spec.margin(row.barrier_value, row.b_norm());
    row.with_margin(r)
}

/// Inflated barrier `h - alpha^{-1}(-(mu(0) - delta)^2 / (4 sigma(h)))` from a barrier value.
pub fn inflate<T: Scalar>(h: T, alpha: &ClassKFn<T>, spec: &RobustMarginSpec<T>, delta: T) -> Result<T> {
    let gap = spec.mu.eval(T::zero()) - delta;
    let arg = -(gap * gap) / (T::lit(4.0) * spec.sigma.eval(h));
    Ok(h - alpha.inverse(arg)?)
}

/// Inflated barrier value at `(x, u)`.
pub fn inflated_value<T, H, const N: usize, const M: usize>(
    h: &H,
    alpha: &ClassKFn<T>,
    spec: &RobustMarginSpec<T>,
    delta: T,
    x: &[T; N],
    u: &[T; M],
) -> Result<T>
where
    T: Scalar,
    H: Barrier<T, N, M> + ?Sized,
{
    inflate(h.value(x, u), alpha, spec, delta)
}
