//! Bottom-layer checks: model and inversion oracles, the Lyapunov
//! certificate, the interpolation bound and closed-loop tracking.

use lcc_core::vehicle::*;
use nalgebra::Matrix4;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{ensure, rng, Outcome};

pub const INVERSION_TOL: f64 = 1e-10;
pub const CTLE_TOL: f64 = 1e-9;
pub const INTERP_SLACK: f64 = 1e-9;
/// Relative agreement of a central difference of V with its closed form.
pub const VDOT_TOL: f64 = 1e-5;
pub const DECAY_TOL: f64 = 1e-6;
pub const MATCHED_TOL: f64 = 1e-3;

pub fn random_params(r: &mut ChaCha8Rng) -> VehicleParams {
    let spd = |r: &mut ChaCha8Rng| {
        let (a, b, c) = (r.gen_range(0.5..3.0), r.gen_range(-0.4..0.4), r.gen_range(0.5..3.0));
        [[a, b], [b, c]]
    };
    VehicleParams {
        m_c: r.gen_range(0.5..2.0),
        d: r.gen_range(0.0..0.3),
        i1: r.gen_range(0.5..2.0),
        i2: r.gen_range(0.2..1.0),
        gamma: r.gen_range(0.5..2.0),
        delta_v: r.gen_range(0.5..2.0),
        sigma: r.gen_range(0.3..3.0),
        k_p: spd(r),
        k_d: spd(r),
        v_min: 0.05,
    }
}

fn random_state(r: &mut ChaCha8Rng) -> VehicleState {
    let sign = if r.gen_bool(0.5) { 1.0 } else { -1.0 };
    VehicleState {
        x: r.gen_range(-2.0..2.0),
        y: r.gen_range(-2.0..2.0),
        theta: r.gen_range(-3.0..3.0),
        v: sign * r.gen_range(0.1..1.0),
        omega: r.gen_range(-1.5..1.5),
    }
}

fn random_ref(r: &mut ChaCha8Rng) -> RefSignal {
    let mut v = || [r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)];
    RefSignal { value: v(), d1: v(), d2: v(), d3: v() }
}

/// Model right-hand side written out term by term.
pub fn dynamics_oracle(cases: u64) -> Outcome {
    for seed in 0..cases {
        let mut r = rng(0xd100 + seed);
        let p = random_params(&mut r);
        let s = random_state(&mut r);
        let (tr, tl) = (r.gen_range(-2.0..2.0), r.gen_range(-2.0..2.0));
        let expect = [
            s.v * s.theta.cos(),
            s.v * s.theta.sin(),
            s.omega,
            (p.m_c * p.d / p.i1) * s.omega.powi(2) + p.gamma * (tr + tl),
            -(p.m_c * p.d / p.i2) * s.v * s.omega + p.delta_v * (tr - tl),
        ];
        let got = dynamics(&s, [tr, tl], &p);
        for i in 0..5 {
            ensure((got[i] - expect[i]).abs() <= 1e-14, || format!("seed {seed}: component {i}: {} vs {}", got[i], expect[i]))?;
        }
    }
    Ok(format!("{cases} states"))
}

/// Forward model applied to the tracker's torques reproduces `(a_d, α_d)`.
pub fn torque_inversion(cases: u64) -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..cases {
        let mut r = rng(0x7a00 + seed);
        let p = random_params(&mut r);
        let sol = ctle_solve(&p.k_p, &p.k_d, p.sigma).map_err(|e| e.to_string())?;
        let s = random_state(&mut r);
        let rf = random_ref(&mut r);
        let terms = fbl_terms(&s, &rf, &sol, &p).map_err(|e| format!("seed {seed}: {e}"))?;
        let [a, alpha] = accelerations(&s, terms.tau, &p);
        let err = (a - terms.a_d).abs().max((alpha - terms.alpha_d).abs());
        ensure(err <= INVERSION_TOL, || format!("seed {seed}: inversion error {err:e}"))?;
        worst = worst.max(err);
    }
    Ok(format!("{cases} states, worst {worst:.1e}"))
}

/// Smooth quintic reference with analytic derivatives.
struct Poly {
    c: [[f64; 6]; 2],
}

impl Poly {
    fn random(r: &mut ChaCha8Rng) -> Self {
        let mut c = [[0.0; 6]; 2];
        for row in &mut c {
            for (k, v) in row.iter_mut().enumerate() {
                *v = r.gen_range(-1.0..1.0) / (1 + k) as f64;
            }
        }
        Self { c }
    }

    fn at(&self, t: f64) -> RefSignal {
        let mut out = [[0.0; 2]; 4];
        for (dim, coeffs) in self.c.iter().enumerate() {
            for (k, &a) in coeffs.iter().enumerate() {
                for d in 0..4usize.min(k + 1) {
                    let falling: f64 = (0..d).map(|j| (k - j) as f64).product();
                    out[d][dim] += a * falling * t.powi((k - d) as i32);
                }
            }
        }
        RefSignal { value: out[0], d1: out[1], d2: out[2], d3: out[3] }
    }
}

fn lyap_at(s: &VehicleState, t: f64, reference: &Poly, sol: &CtleSolution, p: &VehicleParams) -> Result<f64, String> {
    fbl_terms(s, &reference.at(t), sol, p).map(|c| c.lyapunov).map_err(|e| e.to_string())
}

/// Along the closed loop `V̇ = −‖(e, ė)‖² − (σ/2)(ω − ω_d)²`, checked by a
/// Richardson-extrapolated central difference along the vector field.
pub fn lyapunov_derivative(cases: u64) -> Outcome {
    let h = 1e-4;
    let mut worst: f64 = 0.0;
    for seed in 0..cases {
        let mut r = rng(0x1d00 + seed);
        let p = random_params(&mut r);
        let sol = ctle_solve(&p.k_p, &p.k_d, p.sigma).map_err(|e| e.to_string())?;
        let s = random_state(&mut r);
        let reference = Poly::random(&mut r);
        let t = r.gen_range(-1.0..1.0);
        let terms = fbl_terms(&s, &reference.at(t), &sol, &p).map_err(|e| e.to_string())?;
        let f = dynamics(&s, terms.tau, &p);
        let diff = |h: f64| -> Result<f64, String> {
            let shift = |sign: f64| {
                let a = s.to_array();
                VehicleState::from_array(std::array::from_fn(|i| a[i] + sign * h * f[i]))
            };
            Ok((lyap_at(&shift(1.0), t + h, &reference, &sol, &p)? - lyap_at(&shift(-1.0), t - h, &reference, &sol, &p)?) / (2.0 * h))
        };
        // Richardson extrapolation cancels the O(h²) term.
        let fd = (4.0 * diff(h / 2.0)? - diff(h)?) / 3.0;
        let xi = [terms.e[0], terms.e[1], terms.edot[0], terms.edot[1]];
        let closed = -xi.iter().map(|v| v * v).sum::<f64>() - 0.5 * p.sigma * (s.omega - terms.omega_d).powi(2);
        let err = (fd - closed).abs() / (1.0 + closed.abs());
        ensure(err <= VDOT_TOL, || format!("seed {seed}: V̇ by difference {fd} vs closed form {closed}"))?;
        worst = worst.max(err);
    }
    Ok(format!("{cases} states, worst relative gap {worst:.1e}"))
}

/// Largest eigenvalue by power iteration.
pub fn power_iteration(m: &Matrix4<f64>) -> f64 {
    let mut v = nalgebra::Vector4::new(1.0, 0.7, 0.4, 0.2);
    let mut lambda = 0.0;
    for _ in 0..10_000 {
        let w = m * v;
        let next = w.norm();
        v = w / next;
        if (next - lambda).abs() <= 1e-15 * next {
            return next;
        }
        lambda = next;
    }
    lambda
}

/// Largest root of the characteristic polynomial: coefficients by
/// Faddeev–LeVerrier, then Newton from the trace, which bounds it from above
/// for a positive definite matrix.
pub fn largest_char_root(m: &Matrix4<f64>) -> f64 {
    let mut c = [1.0, 0.0, 0.0, 0.0, 0.0];
    let mut mk = Matrix4::zeros();
    for k in 1..=4 {
        mk = m * (mk + Matrix4::identity() * c[k - 1]);
        c[k] = -mk.trace() / k as f64;
    }
    let poly = |x: f64| c.iter().fold(0.0, |acc, &a| acc * x + a);
    let deriv = |x: f64| (0..4).fold(0.0, |acc, k| acc * x + c[k] * (4 - k) as f64);
    let mut x = m.trace();
    for _ in 0..200 {
        let step = poly(x) / deriv(x);
        x -= step;
        if step.abs() <= 1e-15 * x.abs() {
            break;
        }
    }
    x
}

pub fn ctle_checks(cases: u64) -> Outcome {
    for seed in 0..cases {
        let mut r = rng(0xc7e0 + seed);
        let p = random_params(&mut r);
        let sol = ctle_solve(&p.k_p, &p.k_d, p.sigma).map_err(|e| e.to_string())?;
        let a = error_dynamics(&p.k_p, &p.k_d);
        let pm = sol.matrix();
        let residual = (a.transpose() * pm + pm * a + Matrix4::identity()).amax();
        ensure(residual <= CTLE_TOL, || format!("seed {seed}: residual {residual:e}"))?;
        ensure((pm - pm.transpose()).amax() == 0.0, || format!("seed {seed}: P not symmetric"))?;
        ensure(pm.cholesky().is_some(), || format!("seed {seed}: P not positive definite"))?;
        let (pi, root) = (power_iteration(&pm), largest_char_root(&pm));
        ensure((pi - root).abs() <= 1e-8 * root, || format!("seed {seed}: power iteration {pi} vs root {root}"))?;
        let lambda = (1.0 / root).min(p.sigma);
        ensure((sol.lambda - lambda).abs() <= 1e-8 * lambda, || format!("seed {seed}: rate {} vs {lambda}", sol.lambda))?;
    }
    Ok(format!("{cases} gain pairs"))
}

/// Integrator samples with `|Δv|∞ ≤ dv_max` and speed kept above `min_speed`.
pub fn random_samples(r: &mut ChaCha8Rng, n: usize, period: f64, dv_max: f64, min_speed: f64) -> Vec<Vec<f64>> {
    let heading: f64 = r.gen_range(-3.0..3.0);
    let speed = r.gen_range(2.0 * min_speed..4.0 * min_speed);
    let mut x = vec![r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0), speed * heading.cos(), speed * heading.sin()];
    let mut out = vec![x.clone()];
    for _ in 0..n {
        let mut dv = [r.gen_range(-dv_max..=dv_max), r.gen_range(-dv_max..=dv_max)];
        if r.gen_bool(0.3) {
            dv = [dv_max.copysign(dv[0]), dv_max.copysign(dv[1])];
        }
        if (x[2] + dv[0]).hypot(x[3] + dv[1]) < min_speed {
            dv = [-dv[0], -dv[1]];
        }
        x = vec![x[0] + period * x[2], x[1] + period * x[3], x[2] + dv[0], x[3] + dv[1]];
        out.push(x.clone());
    }
    out
}

/// Distance to the linear interpolant stays within `(3/32)αTΔv_max` on a
/// dense grid; for α = 1 it is attained at corners with `|Δv| = Δv_max`.
pub fn interpolation_bound(cases: u64) -> Outcome {
    let mut tightest: f64 = 0.0;
    for seed in 0..cases {
        let mut r = rng(0xb3e0 + seed);
        let period = r.gen_range(0.05..0.5);
        let dv_max = r.gen_range(0.01..0.2);
        let alpha = if seed % 2 == 0 { 1.0 } else { r.gen_range(0.05..1.0) };
        let pts = random_samples(&mut r, 6, period, dv_max, 0.3);
        let bound = 3.0 / 32.0 * alpha * period * dv_max;
        let n = pts.len() - 1;
        let grid = 400 * n;
        let mut worst: f64 = 0.0;
        for i in 0..=grid {
            let t = n as f64 * period * i as f64 / grid as f64;
            let b = bezier_ref(&pts, alpha, period, t).map_err(|e| e.to_string())?;
            let l = linear_ref(&pts, period, t).map_err(|e| e.to_string())?;
            worst = worst.max((b.value[0] - l[0]).abs()).max((b.value[1] - l[1]).abs());
        }
        ensure(worst <= bound + INTERP_SLACK, || format!("seed {seed}: deviation {worst:e} > bound {bound:e}"))?;
        for j in 1..n {
            let b = bezier_ref(&pts, alpha, period, j as f64 * period).map_err(|e| e.to_string())?;
            let l = linear_ref(&pts, period, j as f64 * period).map_err(|e| e.to_string())?;
            for c in 0..2 {
                let expect = 3.0 / 32.0 * alpha * period * (pts[j][2 + c] - pts[j - 1][2 + c]).abs();
                let got = (b.value[c] - l[c]).abs();
                ensure((got - expect).abs() <= 1e-12, || format!("seed {seed}: corner {j}: deviation {got:e} vs {expect:e}"))?;
            }
        }
        tightest = tightest.max(worst / bound);
    }
    Ok(format!("{cases} sequences, max deviation/bound {tightest:.6}"))
}

/// For α = 1 the reference meets every period midpoint with the sample's
/// velocity, and analytic derivatives agree with central differences.
pub fn interpolation_nodes(cases: u64) -> Outcome {
    for seed in 0..cases {
        let mut r = rng(0x0de0 + seed);
        let period = r.gen_range(0.05..0.5);
        let pts = random_samples(&mut r, 5, period, 0.1, 0.3);
        let n = pts.len() - 1;
        for (k, p) in pts.iter().enumerate().take(n) {
            let t = (k as f64 + 0.5) * period;
            let b = bezier_piece(&pts, 1.0, period, t, t - 1e-9).map_err(|e| e.to_string())?;
            for c in 0..2 {
                let pos = p[c] + 0.5 * period * p[2 + c];
                ensure((b.value[c] - pos).abs() <= 1e-12, || format!("seed {seed}: midpoint {k}: position {} vs {pos}", b.value[c]))?;
                ensure((b.d1[c] - p[2 + c]).abs() <= 1e-12, || format!("seed {seed}: midpoint {k}: velocity {} vs {}", b.d1[c], p[2 + c]))?;
            }
        }
        let h = 1e-6;
        for _ in 0..20 {
            let t = r.gen_range(h..n as f64 * period - h);
            let at = |x: f64| bezier_piece(&pts, 1.0, period, x, t);
            let (lo, mid, hi) = (at(t - h).map_err(|e| e.to_string())?, at(t).map_err(|e| e.to_string())?, at(t + h).map_err(|e| e.to_string())?);
            for c in 0..2 {
                let pairs = [(lo.value[c], hi.value[c], mid.d1[c]), (lo.d1[c], hi.d1[c], mid.d2[c]), (lo.d2[c], hi.d2[c], mid.d3[c])];
                for (d, (a, b, exact)) in pairs.iter().enumerate() {
                    let fd = (b - a) / (2.0 * h);
                    ensure((fd - exact).abs() <= 1e-5 * (1.0 + exact.abs()), || {
                        format!("seed {seed}: derivative {} at t = {t}: {fd} vs {exact}", d + 1)
                    })?;
                }
            }
        }
    }
    Ok(format!("{cases} sequences"))
}

pub struct TrackingRun {
    pub samples: Vec<TrackSample>,
    pub sol: CtleSolution,
}

fn track(pts: &[Vec<f64>], period: f64, substeps: usize, s0: Option<VehicleState>, perturb: f64, r: &mut ChaCha8Rng) -> Result<TrackingRun, String> {
    let p = VehicleParams::default();
    let sol = ctle_solve(&p.k_p, &p.k_d, p.sigma).map_err(|e| e.to_string())?;
    let reference = |t: f64, anchor: f64| bezier_piece(pts, 1.0, period, t, anchor);
    let r0 = reference(0.0, 0.0).map_err(|e| e.to_string())?;
    let mut s = s0.unwrap_or_else(|| matched_state(&r0));
    if perturb > 0.0 {
        s.x += r.gen_range(-perturb..=perturb);
        s.y += r.gen_range(-perturb..=perturb);
        s.theta += r.gen_range(-perturb..=perturb);
        s.v += r.gen_range(-perturb..=perturb);
        s.omega += r.gen_range(-perturb..=perturb);
    }
    let steps = substeps * (pts.len() - 1);
    let dt = period / substeps as f64;
    let samples = simulate_tracking(s, 0.0, dt, steps, &reference, &sol, &p).map_err(|e| e.to_string())?;
    Ok(TrackingRun { samples, sol })
}

/// Perturbed starts: `V(t) ≤ V(0) e^{−λt} + tol` along every run.
pub fn tracking_decay(runs: u64) -> Outcome {
    let mut worst_ratio: f64 = 0.0;
    for seed in 0..runs {
        let mut r = rng(0x5ec0 + seed);
        let pts = random_samples(&mut r, 15, 0.2, 0.05, 0.25);
        let run = track(&pts, 0.2, 100, None, 0.05, &mut r).map_err(|e| format!("seed {seed}: {e}"))?;
        let v0 = run.samples[0].terms.lyapunov;
        ensure(v0 > 0.0, || format!("seed {seed}: perturbation produced V(0) = 0"))?;
        for s in &run.samples {
            let envelope = v0 * (-run.sol.lambda * s.t).exp();
            ensure(s.terms.lyapunov <= envelope + DECAY_TOL, || {
                format!("seed {seed}: V({:.3}) = {:e} exceeds {:e}", s.t, s.terms.lyapunov, envelope)
            })?;
            if s.t > 0.0 {
                worst_ratio = worst_ratio.max(s.terms.lyapunov / envelope);
            }
        }
    }
    Ok(format!("{runs} runs, max V/envelope {worst_ratio:.3}"))
}

/// Matched starts: position error stays below `MATCHED_TOL`.
pub fn zero_error_tracking(runs: u64) -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..runs {
        let mut r = rng(0x2e00 + seed);
        let pts = random_samples(&mut r, 15, 0.2, 0.05, 0.25);
        let run = track(&pts, 0.2, 100, None, 0.0, &mut r).map_err(|e| format!("seed {seed}: {e}"))?;
        for s in &run.samples {
            let err = (s.state.x - s.reference.value[0]).hypot(s.state.y - s.reference.value[1]);
            worst = worst.max(err);
        }
        ensure(worst <= MATCHED_TOL, || format!("seed {seed}: position error {worst:e}"))?;
    }
    Ok(format!("{runs} runs, max position error {worst:.1e}"))
}
