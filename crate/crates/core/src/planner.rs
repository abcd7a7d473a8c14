//! Middle-layer MPC: a condensed quadratic program over the velocity
//! increments of the planar double integrator, steering the state through the
//! union of two adjacent cells into the invariant set of the target cell.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{LinearDynamics, Polytope};

pub const NX: usize = 4;
pub const NU: usize = 2;
/// Rows whose coefficients all vanish are decided up front with this slack.
const CONST_ROW_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MpcConfig {
    pub horizon: usize,
    pub period: f64,
    pub q: Vec<Vec<f64>>,
    pub q_f: Vec<Vec<f64>>,
    pub r: Vec<Vec<f64>>,
    pub dv_max: f64,
    pub v_max: f64,
}

fn diag(d: &[f64]) -> Vec<Vec<f64>> {
    (0..d.len()).map(|i| (0..d.len()).map(|j| if i == j { d[i] } else { 0.0 }).collect()).collect()
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            horizon: 30,
            period: 0.2,
            q: diag(&[1.0, 1.0, 0.1, 0.1]),
            q_f: diag(&[10.0, 10.0, 1.0, 1.0]),
            r: diag(&[1.0, 1.0]),
            dv_max: 0.05,
            v_max: 0.4,
        }
    }
}

fn matrix(rows: &[Vec<f64>], n: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(Error::Validation(format!("{what} must be {n}×{n}")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn min_eig(m: &DMatrix<f64>) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigen().eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

impl MpcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Validation("horizon must be at least 1".into()));
        }
        if !(self.period > 0.0 && self.dv_max > 0.0 && self.v_max > 0.0) {
            return Err(Error::Validation("period, dv_max and v_max must be positive".into()));
        }
        for (m, n, name, strict) in [(&self.q, NX, "Q", false), (&self.q_f, NX, "Q_f", false), (&self.r, NU, "R", true)] {
            let mat = matrix(m, n, name)?;
            if (&mat - mat.transpose()).amax() > 1e-12 {
                return Err(Error::Validation(format!("{name} must be symmetric")));
            }
            let lo = min_eig(&mat);
            if (strict && lo <= 0.0) || lo < -1e-12 {
                return Err(Error::Validation(format!(
                    "{name} must be positive {}definite",
                    if strict { "" } else { "semi" }
                )));
            }
        }
        Ok(())
    }

    pub fn dynamics(&self) -> LinearDynamics {
        LinearDynamics::double_integrator(self.period)
    }

    pub fn input_box(&self) -> Polytope {
        Polytope::from_box(&[-self.dv_max; NU], &[self.dv_max; NU]).expect("box")
    }

    /// Velocity box on the 4D state.
    pub fn velocity_box(&self) -> Polytope {
        let mut a = Vec::new();
        for j in 2..NX {
            for sign in [1.0, -1.0] {
                let mut row = vec![0.0; NX];
                row[j] = sign;
                a.push(row);
            }
        }
        Polytope::new(a, vec![self.v_max; 4]).expect("velocity box")
    }
}

/// One commanded cell transition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionTask {
    pub from_cell: String,
    pub to_cell: String,
    /// Shrunk union of the two cells, lifted to the state space.
    pub union: Polytope,
    /// Invariant set of the target cell.
    pub terminal: Polytope,
    pub target: Vec<f64>,
    pub counter: usize,
}

/// `min ½ uᵀHu + gᵀu + c` subject to `G u ≤ h`.
#[derive(Clone, Debug)]
pub struct QpProblem {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub constant: f64,
    pub ineq: DMatrix<f64>,
    pub rhs: DVector<f64>,
}

impl QpProblem {
    pub fn objective(&self, u: &DVector<f64>) -> f64 {
        0.5 * u.dot(&(&self.h * u)) + self.g.dot(u) + self.constant
    }

    /// Largest constraint violation `max(G u − h)`, clipped at zero.
    pub fn violation(&self, u: &DVector<f64>) -> f64 {
        if self.rhs.is_empty() {
            return 0.0;
        }
        (&self.ineq * u - &self.rhs).max().max(0.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum QpStatus {
    Optimal,
    Infeasible,
    NotConvex,
}

#[derive(Clone, Debug)]
pub struct QpSolution {
    pub status: QpStatus,
    pub u: DVector<f64>,
    pub multipliers: DVector<f64>,
    pub objective: f64,
    pub primal_residual: f64,
    pub stationarity_residual: f64,
}

/// Dense strictly convex QP via the Goldfarb–Idnani dual active-set method.
pub fn solve_qp(p: &QpProblem) -> QpSolution {
    let n = p.g.len();
    let fail = |status| QpSolution {
        status,
        u: DVector::zeros(n),
        multipliers: DVector::zeros(p.rhs.len()),
        objective: f64::NAN,
        primal_residual: f64::INFINITY,
        stationarity_residual: f64::INFINITY,
    };
    let mut rows = Vec::new();
    for i in 0..p.rhs.len() {
        if p.ineq.row(i).amax() <= 0.0 {
            if p.rhs[i] < -CONST_ROW_TOL {
                return fail(QpStatus::Infeasible);
            }
        } else {
            rows.push(i);
        }
    }
    let mut qmat: Vec<f64> = (0..n * n).map(|k| p.h[(k / n, k % n)]).collect();
    let amat: Vec<f64> = rows.iter().flat_map(|&i| (0..n).map(move |j| p.ineq[(i, j)])).collect();
    let bvec: Vec<f64> = rows.iter().map(|&i| p.rhs[i]).collect();
    let cvec: Vec<f64> = p.g.iter().copied().collect();
    match quadprog::solve_qp(&mut qmat, &cvec, &amat, &bvec, 0, false) {
        Ok(sol) => {
            let u = DVector::from_vec(sol.sol);
            let mut lambda = DVector::zeros(p.rhs.len());
            for (k, &i) in rows.iter().enumerate() {
                lambda[i] = sol.lagr[k];
            }
            let grad = &p.h * &u + &p.g + p.ineq.transpose() * &lambda;
            QpSolution {
                status: QpStatus::Optimal,
                objective: p.objective(&u),
                primal_residual: p.violation(&u),
                stationarity_residual: grad.amax(),
                u,
                multipliers: lambda,
            }
        }
        Err(quadprog::Error::Infeasible) => fail(QpStatus::Infeasible),
        Err(_) => fail(QpStatus::NotConvex),
    }
}

/// `x_k = Φ_k x₀ + Γ_k u` for `k = 0..=N`.
pub struct Prediction {
    pub phi: Vec<DMatrix<f64>>,
    pub gamma: Vec<DMatrix<f64>>,
}

pub fn prediction(dynamics: &LinearDynamics, horizon: usize) -> Prediction {
    let (nx, nu) = (dynamics.nx(), dynamics.nu());
    let mut phi = vec![DMatrix::identity(nx, nx)];
    let mut gamma = vec![DMatrix::zeros(nx, nu * horizon)];
    for k in 0..horizon {
        phi.push(&dynamics.a * &phi[k]);
        let mut g = &dynamics.a * &gamma[k];
        g.view_mut((0, nu * k), (nx, nu)).copy_from(&dynamics.b);
        gamma.push(g);
    }
    Prediction { phi, gamma }
}

/// Condensed program for one MPC call.
pub fn build_mpc(x0: &[f64], task: &TransitionTask, cfg: &MpcConfig) -> Result<QpProblem> {
    let n_steps = cfg.horizon;
    if task.counter > n_steps {
        return Err(Error::Validation(format!("counter {} exceeds horizon {n_steps}", task.counter)));
    }
    if x0.len() != NX || x0.iter().any(|v| !v.is_finite()) || task.target.len() != NX {
        return Err(Error::Domain("state and target must be finite 4-vectors".into()));
    }
    let pred = prediction(&cfg.dynamics(), n_steps);
    let q = matrix(&cfg.q, NX, "Q")?;
    let qf = matrix(&cfg.q_f, NX, "Q_f")?;
    let r = matrix(&cfg.r, NU, "R")?;
    let nv = NU * n_steps;
    let x0v = DVector::from_column_slice(x0);
    let xf = DVector::from_column_slice(&task.target);

    let mut h = DMatrix::zeros(nv, nv);
    let mut g = DVector::zeros(nv);
    let mut constant = 0.0;
    for k in 0..=n_steps {
        let w = if k == n_steps { &qf } else { &q };
        let gk = &pred.gamma[k];
        let offset = &pred.phi[k] * &x0v - &xf;
        h += gk.transpose() * w * gk * 2.0;
        g += gk.transpose() * w * &offset * 2.0;
        constant += offset.dot(&(w * &offset));
    }
    for k in 0..n_steps {
        let mut block = h.view_mut((NU * k, NU * k), (NU, NU));
        block += &r * 2.0;
    }

    let mut rows: Vec<DVector<f64>> = Vec::new();
    let mut rhs: Vec<f64> = Vec::new();
    let mut state_rows = |poly: &Polytope, k: usize| {
        for (a, &b) in poly.a.iter().zip(&poly.b) {
            let av = DVector::from_column_slice(a);
            rows.push(pred.gamma[k].transpose() * &av);
            rhs.push(b - av.dot(&(&pred.phi[k] * &x0v)));
        }
    };
    let split = n_steps - task.counter;
    for k in 0..split {
        state_rows(&task.union, k);
    }
    for k in split..=n_steps {
        state_rows(&task.terminal, k);
    }
    let vbox = cfg.velocity_box();
    for k in 0..=n_steps {
        state_rows(&vbox, k);
    }
    for j in 0..nv {
        for sign in [1.0, -1.0] {
            let mut e = DVector::zeros(nv);
            e[j] = sign;
            rows.push(e);
            rhs.push(cfg.dv_max);
        }
    }
    let mut ineq = DMatrix::zeros(rows.len(), nv);
    for (i, row) in rows.iter().enumerate() {
        ineq.row_mut(i).copy_from(&row.transpose());
    }
    Ok(QpProblem { h, g, constant, ineq, rhs: DVector::from_vec(rhs) })
}

/// States `x_0..=x_N` generated by an input sequence.
pub fn rollout(x0: &[f64], u: &DVector<f64>, cfg: &MpcConfig) -> Vec<Vec<f64>> {
    let dynamics = cfg.dynamics();
    let mut xs = vec![x0.to_vec()];
    for k in 0..cfg.horizon {
        let next = dynamics.step(&xs[k], &[u[NU * k], u[NU * k + 1]]);
        xs.push(next);
    }
    xs
}

#[derive(Clone, Debug)]
pub struct MpcStep {
    pub u0: [f64; 2],
    pub inputs: DVector<f64>,
    pub plan: Vec<Vec<f64>>,
    pub counter: usize,
    pub objective: f64,
    /// Largest row-wise violation over states and inputs of the plan.
    pub plan_violation: f64,
}

/// Worst violation of every constraint of the program, evaluated on a rollout.
pub fn plan_violation(plan: &[Vec<f64>], u: &DVector<f64>, task: &TransitionTask, cfg: &MpcConfig) -> f64 {
    let split = cfg.horizon - task.counter;
    let vbox = cfg.velocity_box();
    let mut worst = u.amax() - cfg.dv_max;
    for (k, x) in plan.iter().enumerate() {
        let set = if k < split { &task.union } else { &task.terminal };
        worst = worst.max(set.violation(x)).max(vbox.violation(x));
    }
    worst.max(0.0)
}

pub fn mpc_step(x: &[f64], task: &TransitionTask, cfg: &MpcConfig) -> Result<MpcStep> {
    let qp = build_mpc(x, task, cfg)?;
    let sol = solve_qp(&qp);
    if sol.status != QpStatus::Optimal {
        return Err(Error::Infeasible(format!(
            "MPC {} -> {} at counter {} from state {:?}: {:?}",
            task.from_cell, task.to_cell, task.counter, x, sol.status
        )));
    }
    let plan = rollout(x, &sol.u, cfg);
    let plan_violation = plan_violation(&plan, &sol.u, task, cfg);
    Ok(MpcStep {
        u0: [sol.u[0], sol.u[1]],
        counter: (task.counter + 1).min(cfg.horizon),
        objective: sol.objective,
        plan_violation,
        inputs: sol.u,
        plan,
    })
}
