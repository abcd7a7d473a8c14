//! Bottom layer: differential-drive vehicle with torque inputs, a causal
//! quartic corner-blending reference, and a backstepping feedback
//! linearizing tracker certified by a quadratic Lyapunov function.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix4, Vector2, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    pub m_c: f64,
    pub d: f64,
    pub i1: f64,
    pub i2: f64,
    pub gamma: f64,
    pub delta_v: f64,
    pub sigma: f64,
    pub k_p: [[f64; 2]; 2],
    pub k_d: [[f64; 2]; 2],
    pub v_min: f64,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            m_c: 1.0,
            d: 0.1,
            i1: 1.0,
            i2: 0.5,
            gamma: 1.0,
            delta_v: 1.0,
            sigma: 1.0,
            k_p: [[1.0, 0.0], [0.0, 1.0]],
            k_d: [[2.0, 0.0], [0.0, 2.0]],
            v_min: 0.05,
        }
    }
}

fn mat2(m: &[[f64; 2]; 2]) -> Matrix2<f64> {
    Matrix2::new(m[0][0], m[0][1], m[1][0], m[1][1])
}

fn is_spd(m: &Matrix2<f64>) -> bool {
    (m - m.transpose()).amax() <= 1e-12 && m[(0, 0)] > 0.0 && m.determinant() > 0.0
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        let all = [self.m_c, self.d, self.i1, self.i2, self.gamma, self.delta_v, self.sigma, self.v_min];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("vehicle parameters must be finite".into()));
        }
        if !(self.i1 > 0.0 && self.i2 > 0.0 && self.gamma > 0.0 && self.delta_v > 0.0) {
            return Err(Error::Validation("I1, I2, gamma and delta_v must be positive".into()));
        }
        if !(self.sigma > 0.0 && self.v_min > 0.0) {
            return Err(Error::Validation("sigma and v_min must be positive".into()));
        }
        if !is_spd(&mat2(&self.k_p)) || !is_spd(&mat2(&self.k_d)) {
            return Err(Error::Validation("K_p and K_d must be symmetric positive definite".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v: f64,
    pub omega: f64,
}

impl VehicleState {
    pub fn to_array(self) -> [f64; 5] {
        [self.x, self.y, self.theta, self.v, self.omega]
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        Self { x: a[0], y: a[1], theta: a[2], v: a[3], omega: a[4] }
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }

    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    pub fn velocity(&self) -> [f64; 2] {
        [self.v * self.theta.cos(), self.v * self.theta.sin()]
    }
}

/// Linear and angular acceleration produced by a torque pair.
pub fn accelerations(s: &VehicleState, tau: [f64; 2], p: &VehicleParams) -> [f64; 2] {
    let a = p.m_c * p.d / p.i1 * s.omega * s.omega + p.gamma * (tau[0] + tau[1]);
    let alpha = -p.m_c * p.d / p.i2 * s.v * s.omega + p.delta_v * (tau[0] - tau[1]);
    [a, alpha]
}

/// `(ẋ, ẏ, θ̇, v̇, ω̇)` under torques `(τ_R, τ_L)`.
pub fn dynamics(s: &VehicleState, tau: [f64; 2], p: &VehicleParams) -> [f64; 5] {
    let [a, alpha] = accelerations(s, tau, p);
    [s.v * s.theta.cos(), s.v * s.theta.sin(), s.omega, a, alpha]
}

/// Torques realising a commanded `(a, α)` exactly.
pub fn invert_accelerations(s: &VehicleState, a: f64, alpha: f64, p: &VehicleParams) -> [f64; 2] {
    let sum = (a - p.m_c * p.d / p.i1 * s.omega * s.omega) / p.gamma;
    let diff = (alpha + p.m_c * p.d / p.i2 * s.v * s.omega) / p.delta_v;
    [(sum + diff) / 2.0, (sum - diff) / 2.0]
}

fn axpy(s: &[f64; 5], h: f64, k: &[f64; 5]) -> VehicleState {
    VehicleState::from_array(std::array::from_fn(|i| s[i] + h * k[i]))
}

fn rk4_combine(dt: f64, s: &VehicleState, f: &mut dyn FnMut(&VehicleState, f64) -> Result<[f64; 5]>) -> Result<VehicleState> {
    let x = s.to_array();
    let k1 = f(s, 0.0)?;
    let k2 = f(&axpy(&x, dt / 2.0, &k1), dt / 2.0)?;
    let k3 = f(&axpy(&x, dt / 2.0, &k2), dt / 2.0)?;
    let k4 = f(&axpy(&x, dt, &k3), dt)?;
    let next = VehicleState::from_array(std::array::from_fn(|i| {
        x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
    }));
    if !next.is_finite() {
        return Err(Error::Integration(format!("non-finite state after step from {s:?}")));
    }
    Ok(next)
}

/// Classical RK4 step with torques held over the step.
pub fn rk4_step(s: &VehicleState, tau: [f64; 2], dt: f64, p: &VehicleParams) -> Result<VehicleState> {
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("step size {dt} must be positive")));
    }
    if !s.is_finite() || tau.iter().any(|t| !t.is_finite()) {
        return Err(Error::Integration("non-finite state or torque".into()));
    }
    rk4_combine(dt, s, &mut |st, _| Ok(dynamics(st, tau, p)))
}

/// Position reference and its first three time derivatives.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefSignal {
    pub value: [f64; 2],
    pub d1: [f64; 2],
    pub d2: [f64; 2],
    pub d3: [f64; 2],
}

// Blend profile on [0, 1]: g(0) = g'(0) = g''(0) = g''(1) = 0, g'(1) = 1.
fn blend(s: f64) -> [f64; 4] {
    [s.powi(3) - s.powi(4) / 2.0, 3.0 * s * s - 2.0 * s.powi(3), 6.0 * s - 6.0 * s * s, 6.0 - 12.0 * s]
}

fn check_points(points: &[Vec<f64>], period: f64) -> Result<()> {
    if points.len() < 2 {
        return Err(Error::Domain("interpolation needs at least two samples".into()));
    }
    if !(period > 0.0) {
        return Err(Error::Domain("period must be positive".into()));
    }
    if points.iter().any(|p| p.len() < 4 || p[..4].iter().any(|v| !v.is_finite())) {
        return Err(Error::Domain("samples must be finite (p_x, p_y, v_x, v_y)".into()));
    }
    Ok(())
}

fn segment_index(n_seg: usize, period: f64, t: f64) -> usize {
    ((t / period).floor().max(0.0) as usize).min(n_seg - 1)
}

/// Piecewise-linear position `s_k + v_k (t − kT)` on `[kT, (k+1)T]`.
pub fn linear_ref(points: &[Vec<f64>], period: f64, t: f64) -> Result<[f64; 2]> {
    check_points(points, period)?;
    let n = points.len() - 1;
    if !(0.0..=n as f64 * period * (1.0 + 1e-12)).contains(&t) {
        return Err(Error::Domain(format!("time {t} outside [0, {}]", n as f64 * period)));
    }
    let k = segment_index(n, period, t);
    let tau = t - k as f64 * period;
    Ok([points[k][0] + points[k][2] * tau, points[k][1] + points[k][3] * tau])
}

/// Causal C² reference through the integrator samples. Corners at interior
/// grid times `jT` are blended over a window of width `αT`; elsewhere, and
/// on the outer half segments, the reference is the linear one.
pub fn bezier_ref(points: &[Vec<f64>], alpha: f64, period: f64, t: f64) -> Result<RefSignal> {
    bezier_piece(points, alpha, period, t, t)
}

/// Evaluates at `t` the polynomial piece that is active at time `anchor`.
/// Integrators use the step midpoint as anchor so that every stage sees one
/// smooth piece even though the jerk jumps at window edges.
pub fn bezier_piece(points: &[Vec<f64>], alpha: f64, period: f64, t: f64, anchor: f64) -> Result<RefSignal> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Domain(format!("alpha {alpha} outside [0, 1]")));
    }
    linear_ref(points, period, t)?;
    linear_ref(points, period, anchor)?;
    let n = points.len() - 1;
    let w = alpha * period;
    let j = (anchor / period).round() as usize;
    let centre = j as f64 * period;
    if w > 0.0 && j >= 1 && j < n && (anchor - centre).abs() < w / 2.0 {
        let s = (t - (centre - w / 2.0)) / w;
        let [g0, g1, g2, g3] = blend(s);
        let (prev, here) = (&points[j - 1], &points[j]);
        let mut r = RefSignal { value: [0.0; 2], d1: [0.0; 2], d2: [0.0; 2], d3: [0.0; 2] };
        for c in 0..2 {
            let dv = here[2 + c] - prev[2 + c];
            r.value[c] = if anchor < centre {
                prev[c] + prev[2 + c] * (t - (centre - period)) + dv * w * g0
            } else {
                // The right half hangs off the next line so that inconsistent
                // samples keep the per-segment anchoring.
                here[c] + here[2 + c] * (t - centre) + dv * w * (g0 - (s - 0.5))
            };
            r.d1[c] = prev[2 + c] + dv * g1;
            r.d2[c] = dv * g2 / w;
            r.d3[c] = dv * g3 / (w * w);
        }
        return Ok(r);
    }
    let k = segment_index(n, period, anchor);
    let tau = t - k as f64 * period;
    let p = &points[k];
    Ok(RefSignal { value: [p[0] + p[2] * tau, p[1] + p[3] * tau], d1: [p[2], p[3]], d2: [0.0; 2], d3: [0.0; 2] })
}

/// Solution of `AᵀP + PA = −I` for the PD error dynamics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CtleSolution {
    pub p: [[f64; 4]; 4],
    pub lambda: f64,
    pub residual: f64,
}

impl CtleSolution {
    pub fn matrix(&self) -> Matrix4<f64> {
        Matrix4::from_fn(|i, j| self.p[i][j])
    }
}

pub fn error_dynamics(k_p: &[[f64; 2]; 2], k_d: &[[f64; 2]; 2]) -> Matrix4<f64> {
    let mut a = Matrix4::zeros();
    a[(0, 2)] = 1.0;
    a[(1, 3)] = 1.0;
    for i in 0..2 {
        for j in 0..2 {
            a[(2 + i, j)] = -k_p[i][j];
            a[(2 + i, 2 + j)] = -k_d[i][j];
        }
    }
    a
}

/// Solves the Lyapunov equation by Kronecker vectorisation. A unique
/// positive definite solution exists iff the error dynamics are Hurwitz.
pub fn ctle_solve(k_p: &[[f64; 2]; 2], k_d: &[[f64; 2]; 2], sigma: f64) -> Result<CtleSolution> {
    let a = error_dynamics(k_p, k_d);
    let a_dyn = DMatrix::from_fn(4, 4, |i, j| a[(i, j)]);
    let eye = DMatrix::<f64>::identity(4, 4);
    // vec(AᵀP + PA) = (I ⊗ Aᵀ + Aᵀ ⊗ I) vec(P), column-major vec.
    let lhs = eye.kronecker(&a_dyn.transpose()) + a_dyn.transpose().kronecker(&eye);
    let rhs = DVector::from_iterator(16, (0..16).map(|k| if k % 5 == 0 { -1.0 } else { 0.0 }));
    let vec_p = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Domain("Lyapunov operator is singular: error dynamics not Hurwitz".into()))?;
    let p = Matrix4::from_fn(|i, j| 0.5 * (vec_p[i + 4 * j] + vec_p[j + 4 * i]));
    let eig = p.symmetric_eigen().eigenvalues;
    let (lo, hi) = (eig.min(), eig.max());
    if !(lo > 0.0) {
        return Err(Error::Domain("Lyapunov solution is not positive definite: error dynamics not Hurwitz".into()));
    }
    let residual = (a.transpose() * p + p * a + Matrix4::identity()).amax();
    Ok(CtleSolution { p: std::array::from_fn(|i| std::array::from_fn(|j| p[(i, j)])), lambda: (1.0 / hi).min(sigma), residual })
}

/// `V = [e; ė]ᵀ P [e; ė] + ½(ω − ω_d)²`.
pub fn lyapunov_value(e: [f64; 2], edot: [f64; 2], omega: f64, omega_d: f64, sol: &CtleSolution) -> f64 {
    let xi = Vector4::new(e[0], e[1], edot[0], edot[1]);
    xi.dot(&(sol.matrix() * xi)) + 0.5 * (omega - omega_d).powi(2)
}

/// Everything the tracker computes at one instant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ControlTerms {
    pub tau: [f64; 2],
    pub a_d: f64,
    pub alpha_d: f64,
    pub omega_d: f64,
    pub e: [f64; 2],
    pub edot: [f64; 2],
    pub lyapunov: f64,
}

pub fn fbl_terms(s: &VehicleState, r: &RefSignal, sol: &CtleSolution, p: &VehicleParams) -> Result<ControlTerms> {
    if s.v.abs() < p.v_min {
        return Err(Error::Guard { speed: s.v, v_min: p.v_min });
    }
    let (kp, kd) = (mat2(&p.k_p), mat2(&p.k_d));
    let (c, sn) = (s.theta.cos(), s.theta.sin());
    let heading = Vector2::new(c, sn);
    let normal = Vector2::new(-sn, c);
    let v = s.v;
    let e = Vector2::new(s.x - r.value[0], s.y - r.value[1]);
    let edot = heading * v - Vector2::from(r.d1);
    let edd_d = Vector2::from(r.d2) - kp * e - kd * edot;
    let a_d = heading.dot(&edd_d);
    let omega_d = normal.dot(&edd_d) / v;
    // Commanded a = a_d is realised exactly, so the error acceleration is known.
    let edd = heading * a_d + normal * (v * s.omega) - Vector2::from(r.d2);
    let omega_d_dot = -(a_d / (v * v)) * normal.dot(&edd_d) - (s.omega / v) * heading.dot(&edd_d)
        + normal.dot(&(Vector2::from(r.d3) - kp * edot - kd * edd)) / v;
    let xi = Vector4::new(e[0], e[1], edot[0], edot[1]);
    let coupling = 2.0 * xi.dot(&(sol.matrix() * Vector4::new(0.0, 0.0, -v * sn, v * c)));
    let alpha_d = -0.5 * p.sigma * (s.omega - omega_d) + omega_d_dot - coupling;
    let tau = invert_accelerations(s, a_d, alpha_d, p);
    let e = [e[0], e[1]];
    let edot = [edot[0], edot[1]];
    Ok(ControlTerms { tau, a_d, alpha_d, omega_d, e, edot, lyapunov: lyapunov_value(e, edot, s.omega, omega_d, sol) })
}

/// Torques `(τ_R, τ_L)` of the backstepping tracker.
pub fn fbl_control(s: &VehicleState, r: &RefSignal, sol: &CtleSolution, p: &VehicleParams) -> Result<[f64; 2]> {
    Ok(fbl_terms(s, r, sol, p)?.tau)
}

/// RK4 step of the closed loop, re-evaluating the tracker at every stage.
pub fn closed_loop_step(
    s: &VehicleState,
    t: f64,
    dt: f64,
    reference: &dyn Fn(f64) -> Result<RefSignal>,
    sol: &CtleSolution,
    p: &VehicleParams,
) -> Result<VehicleState> {
    if !(dt > 0.0) {
        return Err(Error::Domain(format!("step size {dt} must be positive")));
    }
    rk4_combine(dt, s, &mut |st, h| {
        let r = reference(t + h)?;
        Ok(dynamics(st, fbl_control(st, &r, sol, p)?, p))
    })
}

/// One sample of a tracking run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrackSample {
    pub t: f64,
    pub state: VehicleState,
    pub reference: RefSignal,
    pub terms: ControlTerms,
}

/// Tracks `reference(t, anchor)` from `s0` over `[t0, t0 + steps·dt]`;
/// each step anchors the reference at its midpoint.
pub fn simulate_tracking(
    s0: VehicleState,
    t0: f64,
    dt: f64,
    steps: usize,
    reference: &dyn Fn(f64, f64) -> Result<RefSignal>,
    sol: &CtleSolution,
    p: &VehicleParams,
) -> Result<Vec<TrackSample>> {
    let mut out = Vec::with_capacity(steps + 1);
    let mut s = s0;
    for i in 0..=steps {
        let t = t0 + i as f64 * dt;
        let r = reference(t, t)?;
        out.push(TrackSample { t, state: s, reference: r, terms: fbl_terms(&s, &r, sol, p)? });
        if i < steps {
            let mid = t + dt / 2.0;
            s = closed_loop_step(&s, t, dt, &|tau| reference(tau, mid), sol, p)?;
        }
    }
    Ok(out)
}

/// Vehicle state that matches a reference with zero error and `ω = ω_d`.
pub fn matched_state(r: &RefSignal) -> VehicleState {
    let [vx, vy] = r.d1;
    let v = vx.hypot(vy);
    let theta = vy.atan2(vx);
    let omega = if v > 0.0 { (-theta.sin() * r.d2[0] + theta.cos() * r.d2[1]) / v } else { 0.0 };
    VehicleState { x: r.value[0], y: r.value[1], theta, v, omega }
}
