//! Adaptive cruise control: an automated vehicle following a lead vehicle
//! moving at constant speed, with commanded acceleration as the input.
//!
//! State `x = [D, v]` (gap to the lead vehicle, own speed), input `u`
//! (commanded acceleration, m/s^2).

use serde::{Deserialize, Serialize};

use crate::barriers::{Barrier, BarrierKind, ConstraintRow, IntegralController, RobustMarginSpec};
use crate::error::{Error, Result};
use crate::numerics::ClassKFn;
use crate::predictor::SystemModel;
use crate::scalar::Scalar;

/// Vehicle, controller and barrier parameters. SI units throughout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccParams<T> {
    /// Resistance `p(v) = c0 + c1 v + c2 v^2`.
    pub c0: T,
    pub c1: T,
    pub c2: T,
    /// Velocity tracking gain (1/s).
    pub k_v: T,
    /// Integral controller gain (1/s).
    pub alpha_phi: T,
    pub u_max: T,
    /// Time headway (s).
    pub t_h: T,
    /// Standstill distance (m).
    pub d_sf: T,
    /// Lead vehicle speed, constant.
    pub v_l: T,
    /// Desired speed.
    pub v_d: T,
    pub gamma_x: T,
    pub gamma_e: T,
    pub gamma_u: T,
    pub mu0_e: T,
    pub mu0_u: T,
    pub sigma0_e: T,
    pub sigma0_u: T,
    pub lambda: T,
}

impl<T: Scalar> Default for AccParams<T> {
    fn default() -> Self {
        Self {
            c0: T::lit(6.06e-5),
            c1: T::lit(3.03e-3),
            c2: T::lit(1.52e-4),
            k_v: T::lit(1.0),
            alpha_phi: T::lit(3.0),
            u_max: T::lit(1.96),
            t_h: T::lit(1.8),
            d_sf: T::lit(3.0),
            v_l: T::lit(14.0),
            v_d: T::lit(24.0),
            gamma_x: T::lit(1.0),
            gamma_e: T::lit(1.0),
            gamma_u: T::lit(1.0),
            mu0_e: T::lit(1.0),
            mu0_u: T::lit(0.2),
            sigma0_e: T::lit(0.1),
            sigma0_u: T::lit(0.05),
            lambda: T::lit(0.05),
        }
    }
}

impl<T: Scalar> AccParams<T> {
    pub fn validate(&self) -> Result<()> {
        let positive: [(&'static str, T); 12] = [
            ("u_max", self.u_max),
            ("T_h", self.t_h),
            ("K_v", self.k_v),
            ("alpha_phi", self.alpha_phi),
            ("gamma_x", self.gamma_x),
            ("gamma_e", self.gamma_e),
            ("gamma_u", self.gamma_u),
            ("mu0_e", self.mu0_e),
            ("mu0_u", self.mu0_u),
            ("sigma0_e", self.sigma0_e),
            ("sigma0_u", self.sigma0_u),
            ("lambda", self.lambda),
        ];
        for (name, value) in positive {
            if !(value > T::zero()) || !value.is_finite() {
                return Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be positive and finite, got {value}"),
                });
            }
        }
        for i in 0..=400 {
            let v = T::lit(0.1 * i as f64);
            if self.resistance(v) < T::zero() {
                return Err(Error::InvalidParameter {
                    name: "c0",
                    reason: format!("resistance p(v) is negative at v = {v}"),
                });
            }
        }
        Ok(())
    }

    pub fn resistance(&self, v: T) -> T {
        self.c0 + self.c1 * v + self.c2 * v * v
    }

    pub fn resistance_slope(&self, v: T) -> T {
        self.c1 + T::lit(2.0) * self.c2 * v
    }

    pub fn alpha_x(&self) -> ClassKFn<T> {
        ClassKFn::Linear { gamma: self.gamma_x }
    }

    pub fn alpha_e(&self) -> ClassKFn<T> {
        ClassKFn::Linear { gamma: self.gamma_e }
    }

    pub fn alpha_u(&self) -> ClassKFn<T> {
        ClassKFn::Linear { gamma: self.gamma_u }
    }

    pub fn margin_e(&self) -> RobustMarginSpec<T> {
        RobustMarginSpec::new(self.mu0_e, self.sigma0_e, self.lambda).expect("validated parameters give a valid margin")
    }

    pub fn margin_u(&self) -> RobustMarginSpec<T> {
        RobustMarginSpec::new(self.mu0_u, self.sigma0_u, self.lambda).expect("validated parameters give a valid margin")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccState<T> {
    /// Distance to the lead vehicle (m).
    pub d: T,
    /// Own speed (m/s).
    pub v: T,
}

impl<T: Copy> AccState<T> {
    pub fn new(d: T, v: T) -> Self {
        Self { d, v }
    }

    pub fn to_array(self) -> [T; 2] {
        [self.d, self.v]
    }
}

impl<T: Copy> From<[T; 2]> for AccState<T> {
    fn from(x: [T; 2]) -> Self {
        Self { d: x[0], v: x[1] }
    }
}

/// Plant `D' = v_L - v`, `v' = u - p(v)`.
#[derive(Debug, Clone, Copy)]
pub struct AccModel<T> {
    pub params: AccParams<T>,
}

impl<T: Scalar> AccModel<T> {
    pub fn new(params: AccParams<T>) -> Self {
        Self { params }
    }
}

/// Plant vector field at `x` under the applied (delayed) acceleration.
pub fn acc_dynamics<T: Scalar>(p: &AccParams<T>, x: AccState<T>, u_applied: T) -> [T; 2] {
    [p.v_l - x.v, u_applied - p.resistance(x.v)]
}

impl<T: Scalar> SystemModel<T, 2, 1> for AccModel<T> {
    fn dynamics(&self, x: &[T; 2], u: &[T; 1]) -> [T; 2] {
        acc_dynamics(&self.params, AccState::from(*x), u[0])
    }

    fn input_jacobian(&self, _x: &[T; 2], _u: &[T; 1]) -> Option<[[T; 1]; 2]> {
        Some([[T::zero()], [T::one()]])
    }
}

/// Safe following distance
/// `h_x = D - T_h v - (v_L - v)^2 / (2 u_max) - D_sf`.
#[derive(Debug, Clone, Copy)]
pub struct DistanceBarrier<T> {
    pub params: AccParams<T>,
}

pub fn acc_hx<T: Scalar>(p: &AccParams<T>, x: AccState<T>) -> T {
    let rel = p.v_l - x.v;
    x.d - p.t_h * x.v - rel * rel / (T::lit(2.0) * p.u_max) - p.d_sf
}

/// `dh_x/dv = -T_h + (v_L - v) / u_max`, which is also `b_e`.
fn hx_speed_slope<T: Scalar>(p: &AccParams<T>, v: T) -> T {
    -p.t_h + (p.v_l - v) / p.u_max
}

impl<T: Scalar> Barrier<T, 2, 1> for DistanceBarrier<T> {
    fn kind(&self) -> BarrierKind {
        BarrierKind::StateOnly
    }

    fn value(&self, x: &[T; 2], _u: &[T; 1]) -> T {
        acc_hx(&self.params, AccState::from(*x))
    }

    fn grad_x(&self, x: &[T; 2], _u: &[T; 1]) -> [T; 2] {
        [T::one(), hx_speed_slope(&self.params, x[1])]
    }

    fn grad_u(&self, _x: &[T; 2], _u: &[T; 1]) -> [T; 1] {
        [T::zero()]
    }
}

/// Extended distance barrier `h_e = dh_x/dx f(x, u) + gamma_x h_x` with
/// closed-form gradients.
#[derive(Debug, Clone, Copy)]
pub struct ExtendedDistanceBarrier<T> {
    pub params: AccParams<T>,
}

pub fn acc_he<T: Scalar>(p: &AccParams<T>, x: AccState<T>, u: T) -> T {
    let slope = hx_speed_slope(p, x.v);
    (p.v_l - x.v) + slope * (u - p.resistance(x.v)) + p.gamma_x * acc_hx(p, x)
}

impl<T: Scalar> Barrier<T, 2, 1> for ExtendedDistanceBarrier<T> {
    fn kind(&self) -> BarrierKind {
        BarrierKind::StateExtended
    }

    fn value(&self, x: &[T; 2], u: &[T; 1]) -> T {
        acc_he(&self.params, AccState::from(*x), u[0])
    }

    fn grad_x(&self, x: &[T; 2], u: &[T; 1]) -> [T; 2] {
        let p = &self.params;
        let v = x[1];
        let slope = hx_speed_slope(p, v);
        let dv = -T::one() - (u[0] - p.resistance(v)) / p.u_max - slope * p.resistance_slope(v) + p.gamma_x * slope;
        [p.gamma_x, dv]
    }

    fn grad_u(&self, x: &[T; 2], _u: &[T; 1]) -> [T; 1] {
        [hx_speed_slope(&self.params, x[1])]
    }
}

/// Input bound `h_u = u_max^2 - u^2`.
#[derive(Debug, Clone, Copy)]
pub struct InputBarrier<T> {
    pub params: AccParams<T>,
}

pub fn acc_hu<T: Scalar>(p: &AccParams<T>, u: T) -> T {
    p.u_max * p.u_max - u * u
}

impl<T: Scalar> Barrier<T, 2, 1> for InputBarrier<T> {
    fn kind(&self) -> BarrierKind {
        BarrierKind::Input
    }

    fn value(&self, _x: &[T; 2], u: &[T; 1]) -> T {
        acc_hu(&self.params, u[0])
    }

    fn grad_x(&self, _x: &[T; 2], _u: &[T; 1]) -> [T; 2] {
        [T::zero(), T::zero()]
    }

    fn grad_u(&self, _x: &[T; 2], u: &[T; 1]) -> [T; 1] {
        [-T::lit(2.0) * u[0]]
    }
}

/// Nominal speed tracking law and its integral (dynamically defined) form.
#[derive(Debug, Clone, Copy)]
pub struct AccController<T> {
    pub params: AccParams<T>,
}

/// `k_d(x) = K_v (v_d - v)`.
pub fn nominal_kd<T: Scalar>(p: &AccParams<T>, x: AccState<T>) -> T {
    p.k_v * (p.v_d - x.v)
}

/// `phi(x_p, u) = dk_d/dx(x_p) f(x_p, u) + (alpha_phi / 2)(k_d(x_p) - u)`.
pub fn integral_phi<T: Scalar>(p: &AccParams<T>, x_p: AccState<T>, u: T) -> T {
    let f = acc_dynamics(p, x_p, u);
    let grad = [T::zero(), -p.k_v];
    grad[0] * f[0] + grad[1] * f[1] + p.alpha_phi * T::lit(0.5) * (nominal_kd(p, x_p) - u)
}

impl<T: Scalar> AccController<T> {
    pub fn kd(&self, x: &[T; 2]) -> T {
        nominal_kd(&self.params, AccState::from(*x))
    }

    /// `dk_d/dx`.
    pub fn kd_gradient(&self, _x: &[T; 2]) -> [T; 2] {
        [T::zero(), -self.params.k_v]
    }

    /// `dphi/dx`.
    pub fn phi_grad_x(&self, x: &[T; 2], _u: &[T; 1]) -> [T; 2] {
        let p = &self.params;
        [
            T::zero(),
            p.k_v * p.resistance_slope(x[1]) - p.alpha_phi * T::lit(0.5) * p.k_v,
        ]
    }

    /// `dphi/du`.
    pub fn phi_grad_u(&self, _x: &[T; 2], _u: &[T; 1]) -> [T; 1] {
        [-self.params.k_v - self.params.alpha_phi * T::lit(0.5)]
    }
}

impl<T: Scalar> IntegralController<T, 2, 1> for AccController<T> {
    fn phi(&self, x: &[T; 2], u: &[T; 1]) -> [T; 1] {
        [integral_phi(&self.params, AccState::from(*x), u[0])]
    }
}

/// The ACC plant, its barriers and controller, sharing one parameter set.
#[derive(Debug, Clone, Copy)]
pub struct AccSystem<T> {
    pub params: AccParams<T>,
    pub model: AccModel<T>,
    pub h_x: DistanceBarrier<T>,
    pub h_e: ExtendedDistanceBarrier<T>,
    pub h_u: InputBarrier<T>,
    pub controller: AccController<T>,
}

impl<T: Scalar> AccSystem<T> {
    pub fn new(params: AccParams<T>) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            model: AccModel { params },
            h_x: DistanceBarrier { params },
            h_e: ExtendedDistanceBarrier { params },
            h_u: InputBarrier { params },
            controller: AccController { params },
        })
    }

    /// Filter rows `(e, u)` at `(x, u)`, with robust margins when `robust`.
    pub fn rows(&self, x: &[T; 2], u: &[T; 1], robust: bool) -> (ConstraintRow<T>, ConstraintRow<T>) {
        use crate::barriers::{constraint_row, robust_margin};
        let p = &self.params;
        let row_e = constraint_row(&self.h_e, &self.model, &self.controller, &p.alpha_e(), x, u);
        let row_u = constraint_row(&self.h_u, &self.model, &self.controller, &p.alpha_u(), x, u);
        if robust {
            (robust_margin(row_e, &p.margin_e()), robust_margin(row_u, &p.margin_u()))
        } else {
            (row_e, row_u)
        }
    }
}
