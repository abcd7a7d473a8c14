//! H-representation polytopes and the set recursions used offline by the
//! planning layer: projection, one-step predecessor sets, maximal control
//! invariant sets and N-step backward reachable sets.
//!
//! Every set query is backed by a small linear program. Rows are kept
//! normalised to unit infinity-norm so that `TOL_LP` reads as a distance-like
//! slack on every facet.

use microlp::{ComparisonOp, OptimizationDirection, Problem};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TOL_LP: f64 = 1e-9;
const ZERO_COEF: f64 = 1e-12;

/// `{x | a x <= b}`; `a` is stored row-major.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Polytope {
    pub dim: usize,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Support {
    Bounded { value: f64, argmax: Vec<f64> },
    Unbounded,
    Infeasible,
}

/// Result of a facet-wise containment test `P ⊆ Q`.
#[derive(Clone, Debug, PartialEq)]
pub struct SubsetReport {
    pub holds: bool,
    /// Largest `max_{x in P} q_i x - d_i` over the facets of `Q`.
    pub gap: f64,
    pub unbounded_row: Option<usize>,
}

impl Polytope {
    pub fn new(a: Vec<Vec<f64>>, b: Vec<f64>) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::Domain(format!("{} rows but {} offsets", a.len(), b.len())));
        }
        let dim = a.first().map(|r| r.len()).unwrap_or(0);
        if dim == 0 {
            return Err(Error::Domain("polytope needs at least one row to infer its dimension".into()));
        }
        Self::with_dim(dim, a, b)
    }

    pub fn with_dim(dim: usize, a: Vec<Vec<f64>>, b: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Domain("dimension must be positive".into()));
        }
        if a.len() != b.len() {
            return Err(Error::Domain(format!("{} rows but {} offsets", a.len(), b.len())));
        }
        for (i, row) in a.iter().enumerate() {
            if row.len() != dim {
                return Err(Error::Domain(format!("row {i} has length {} (dimension {dim})", row.len())));
            }
            if row.iter().any(|v| !v.is_finite()) || !b[i].is_finite() {
                return Err(Error::Domain(format!("row {i} has non-finite entries")));
            }
        }
        Ok(Self { dim, a, b })
    }

    pub fn whole_space(dim: usize) -> Self {
        Self { dim, a: Vec::new(), b: Vec::new() }
    }

    /// Canonical empty set: `x_0 <= -1` and `-x_0 <= -1`.
    pub fn empty(dim: usize) -> Self {
        let mut up = vec![0.0; dim];
        up[0] = 1.0;
        let mut down = vec![0.0; dim];
        down[0] = -1.0;
        Self { dim, a: vec![up, down], b: vec![-1.0, -1.0] }
    }

    pub fn from_box(lo: &[f64], hi: &[f64]) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::Domain("box bounds must be nonempty and of equal length".into()));
        }
        let n = lo.len();
        let mut a = Vec::with_capacity(2 * n);
        let mut b = Vec::with_capacity(2 * n);
        for i in 0..n {
            let mut r = vec![0.0; n];
            r[i] = 1.0;
            a.push(r);
            b.push(hi[i]);
            let mut r = vec![0.0; n];
            r[i] = -1.0;
            a.push(r);
            b.push(-lo[i]);
        }
        Self::with_dim(n, a, b)
    }

    pub fn rows(&self) -> usize {
        self.a.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.contains_tol(x, TOL_LP)
    }

    pub fn contains_tol(&self, x: &[f64], tol: f64) -> bool {
        debug_assert_eq!(x.len(), self.dim);
        self.a.iter().zip(&self.b).all(|(r, &bi)| dot(r, x) <= bi + tol)
    }

    /// Largest violation `max_i (a_i x - b_i)`, or `-inf` for the whole space.
    pub fn violation(&self, x: &[f64]) -> f64 {
        self.a
            .iter()
            .zip(&self.b)
            .map(|(r, &bi)| dot(r, x) - bi)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn support(&self, c: &[f64]) -> Support {
        lp_max(self.dim, &self.a, &self.b, c)
    }

    pub fn is_empty(&self) -> bool {
        matches!(self.support(&vec![0.0; self.dim]), Support::Infeasible)
    }

    pub fn subset_report(&self, other: &Polytope) -> SubsetReport {
        assert_eq!(self.dim, other.dim, "dimension mismatch in subset test");
        if self.is_empty() {
            return SubsetReport { holds: true, gap: f64::NEG_INFINITY, unbounded_row: None };
        }
        let mut gap = f64::NEG_INFINITY;
        for (i, (q, &d)) in other.a.iter().zip(&other.b).enumerate() {
            match self.support(q) {
                Support::Bounded { value, .. } => gap = gap.max(value - d),
                Support::Unbounded => {
                    return SubsetReport { holds: false, gap: f64::INFINITY, unbounded_row: Some(i) }
                }
                Support::Infeasible => {
                    return SubsetReport { holds: true, gap: f64::NEG_INFINITY, unbounded_row: None }
                }
            }
        }
        SubsetReport { holds: gap <= TOL_LP, gap, unbounded_row: None }
    }

    pub fn subset(&self, other: &Polytope) -> bool {
        self.subset_report(other).holds
    }

    /// Mutual containment within `TOL_LP`.
    pub fn set_eq(&self, other: &Polytope) -> bool {
        self.subset(other) && other.subset(self)
    }

    pub fn intersect(&self, other: &Polytope) -> Polytope {
        assert_eq!(self.dim, other.dim, "dimension mismatch in intersection");
        let mut a = self.a.clone();
        a.extend(other.a.iter().cloned());
        let mut b = self.b.clone();
        b.extend(other.b.iter().copied());
        Polytope { dim: self.dim, a, b }
    }

    /// `P ⊖ B_δ` for the infinity-norm ball: each offset drops by `δ‖a_i‖₁`.
    pub fn minkowski_shrink(&self, delta: f64) -> Result<Polytope> {
        if !(delta >= 0.0) {
            return Err(Error::Domain(format!("shrink radius must be nonnegative, got {delta}")));
        }
        let b = self
            .a
            .iter()
            .zip(&self.b)
            .map(|(r, &bi)| bi - delta * r.iter().map(|v| v.abs()).sum::<f64>())
            .collect();
        Ok(Polytope { dim: self.dim, a: self.a.clone(), b })
    }

    /// Embeds this polytope into `total` coordinates; `coords[k]` is where
    /// local coordinate `k` lands. Other coordinates are unconstrained.
    pub fn embed(&self, total: usize, coords: &[usize]) -> Polytope {
        assert_eq!(coords.len(), self.dim);
        let a = self
            .a
            .iter()
            .map(|r| {
                let mut full = vec![0.0; total];
                for (k, &c) in coords.iter().enumerate() {
                    full[c] = r[k];
                }
                full
            })
            .collect();
        Polytope { dim: total, a, b: self.b.clone() }
    }

    /// Preimage `{x | M x + c ∈ P}`.
    pub fn preimage(&self, m: &DMatrix<f64>, c: &[f64]) -> Polytope {
        assert_eq!(m.nrows(), self.dim);
        let n = m.ncols();
        let mut a = Vec::with_capacity(self.rows());
        let mut b = Vec::with_capacity(self.rows());
        for (r, &bi) in self.a.iter().zip(&self.b) {
            let row: Vec<f64> = (0..n).map(|j| (0..self.dim).map(|i| r[i] * m[(i, j)]).sum()).collect();
            a.push(row);
            b.push(bi - dot(r, c));
        }
        Polytope { dim: n, a, b }
    }

    /// Center and radius (Euclidean) of the largest inscribed ball.
    pub fn chebyshev_center(&self) -> Result<(Vec<f64>, f64)> {
        let n = self.dim;
        let mut a = Vec::with_capacity(self.rows() + 1);
        let mut b = Vec::with_capacity(self.rows() + 1);
        for (r, &bi) in self.a.iter().zip(&self.b) {
            let mut row = r.clone();
            row.push(r.iter().map(|v| v * v).sum::<f64>().sqrt());
            a.push(row);
            b.push(bi);
        }
        let mut neg_r = vec![0.0; n + 1];
        neg_r[n] = -1.0;
        a.push(neg_r);
        b.push(0.0);
        let mut c = vec![0.0; n + 1];
        c[n] = 1.0;
        match lp_max(n + 1, &a, &b, &c) {
            Support::Bounded { argmax, value } => Ok((argmax[..n].to_vec(), value)),
            Support::Unbounded => Err(Error::Domain("unbounded polytope has no Chebyshev center".into())),
            Support::Infeasible => Err(Error::Domain("empty polytope has no Chebyshev center".into())),
        }
    }

    /// Rows scaled to unit infinity-norm, trivially true rows dropped and
    /// parallel duplicates merged. Returns the canonical empty set when a
    /// trivially false row is found.
    pub fn normalized(&self) -> Polytope {
        let mut rows: Vec<(Vec<f64>, f64)> = Vec::with_capacity(self.rows());
        for (r, &bi) in self.a.iter().zip(&self.b) {
            let s = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if s < ZERO_COEF {
                if bi < -TOL_LP {
                    return Polytope::empty(self.dim);
                }
                continue;
            }
            let row: Vec<f64> = r.iter().map(|v| {
                let w = v / s;
                if w.abs() < ZERO_COEF { 0.0 } else { w }
            }).collect();
            rows.push((row, bi / s));
        }
        rows.sort_by(|x, y| {
            for (p, q) in x.0.iter().zip(&y.0) {
                match p.partial_cmp(q).unwrap() {
                    std::cmp::Ordering::Equal => continue,
                    o => return o,
                }
            }
            x.1.partial_cmp(&y.1).unwrap()
        });
        let mut a: Vec<Vec<f64>> = Vec::with_capacity(rows.len());
        let mut b: Vec<f64> = Vec::with_capacity(rows.len());
        for (row, bi) in rows {
            if let Some(last) = a.last() {
                if last.iter().zip(&row).all(|(p, q)| (p - q).abs() <= 1e-11) {
                    // sorted by offset within equal normals: the first is tightest
                    continue;
                }
            }
            a.push(row);
            b.push(bi);
        }
        Polytope { dim: self.dim, a, b }
    }

    /// Drops every row implied by the others (LP test per row).
    pub fn remove_redundant(&self) -> Polytope {
        let p = self.normalized();
        if p.rows() == 0 {
            return p;
        }
        if p.is_empty() {
            return Polytope::empty(self.dim);
        }
        let mut keep: Vec<bool> = vec![true; p.rows()];
        for r in 0..p.rows() {
            let mut a = Vec::with_capacity(p.rows());
            let mut b = Vec::with_capacity(p.rows());
            for k in 0..p.rows() {
                if k != r && keep[k] {
                    a.push(p.a[k].clone());
                    b.push(p.b[k]);
                }
            }
            a.push(p.a[r].clone());
            b.push(p.b[r] + 1.0);
            if let Support::Bounded { value, .. } = lp_max(p.dim, &a, &b, &p.a[r]) {
                if value <= p.b[r] + TOL_LP {
                    keep[r] = false;
                }
            }
        }
        let a = p.a.iter().zip(&keep).filter(|(_, &k)| k).map(|(r, _)| r.clone()).collect();
        let b = p.b.iter().zip(&keep).filter(|(_, &k)| k).map(|(v, _)| *v).collect();
        Polytope { dim: p.dim, a, b }
    }

    /// Fourier–Motzkin elimination of coordinate `j`; the result lives in
    /// `dim - 1` coordinates with `j` removed.
    pub fn eliminate(&self, j: usize) -> Polytope {
        assert!(j < self.dim && self.dim >= 2, "cannot eliminate coordinate {j} of {}", self.dim);
        let drop = |r: &[f64]| -> Vec<f64> {
            r.iter().enumerate().filter(|(k, _)| *k != j).map(|(_, v)| *v).collect()
        };
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        let mut a = Vec::new();
        let mut b = Vec::new();
        for (r, &bi) in self.a.iter().zip(&self.b) {
            if r[j] > ZERO_COEF {
                pos.push((r, bi));
            } else if r[j] < -ZERO_COEF {
                neg.push((r, bi));
            } else {
                a.push(drop(r));
                b.push(bi);
            }
        }
        for (p, bp) in &pos {
            for (q, bq) in &neg {
                let lp = -q[j];
                let lq = p[j];
                let row: Vec<f64> = p.iter().zip(q.iter()).map(|(x, y)| lp * x + lq * y).collect();
                a.push(drop(&row));
                b.push(lp * bp + lq * bq);
            }
        }
        Polytope { dim: self.dim - 1, a, b }
    }

    /// Exact projection onto the coordinates in `keep` (in that order).
    pub fn project(&self, keep: &[usize]) -> Result<Polytope> {
        fm_project(self, keep)
    }

    /// Hausdorff-style facet gap between two sets of equal dimension: the
    /// larger of the two one-sided subset gaps.
    pub fn facet_gap(&self, other: &Polytope) -> f64 {
        self.subset_report(other).gap.max(other.subset_report(self).gap)
    }

    /// Section obtained by fixing some coordinates; the result lives on the
    /// remaining coordinates in their original order.
    pub fn slice(&self, fixed: &[(usize, f64)]) -> Polytope {
        let keep: Vec<usize> = (0..self.dim).filter(|j| !fixed.iter().any(|(f, _)| f == j)).collect();
        let a = self.a.iter().map(|r| keep.iter().map(|&j| r[j]).collect()).collect();
        let b = self.a.iter().zip(&self.b).map(|(r, &bi)| bi - fixed.iter().map(|&(j, v)| r[j] * v).sum::<f64>()).collect();
        Polytope { dim: keep.len(), a, b }
    }

    /// Counter-clockwise vertices of a bounded planar polytope.
    pub fn vertices_2d(&self) -> Result<Vec<[f64; 2]>> {
        if self.dim != 2 {
            return Err(Error::Domain(format!("vertex enumeration needs dimension 2, got {}", self.dim)));
        }
        let mut pts: Vec<[f64; 2]> = Vec::new();
        for i in 0..self.rows() {
            for j in i + 1..self.rows() {
                let (a, b) = (&self.a[i], &self.a[j]);
                let det = a[0] * b[1] - a[1] * b[0];
                if det.abs() < 1e-12 {
                    continue;
                }
                let x = [(self.b[i] * b[1] - self.b[j] * a[1]) / det, (a[0] * self.b[j] - b[0] * self.b[i]) / det];
                if self.contains_tol(&x, 1e-7) && !pts.iter().any(|q| (q[0] - x[0]).abs() + (q[1] - x[1]).abs() < 1e-9) {
                    pts.push(x);
                }
            }
        }
        if pts.is_empty() {
            return Ok(pts);
        }
        let c = [pts.iter().map(|p| p[0]).sum::<f64>() / pts.len() as f64, pts.iter().map(|p| p[1]).sum::<f64>() / pts.len() as f64];
        pts.sort_by(|p, q| (p[1] - c[1]).atan2(p[0] - c[0]).total_cmp(&(q[1] - c[1]).atan2(q[0] - c[0])));
        Ok(pts)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `max c·x` over `{x | a x <= b}` with free variables.
///
/// Each free variable is split into nonnegative parts `x = x⁺ - x⁻`; the
/// backend mishandles free bounds on some degenerate problems.
pub fn lp_max(dim: usize, a: &[Vec<f64>], b: &[f64], c: &[f64]) -> Support {
    let mut pb = Problem::new(OptimizationDirection::Maximize);
    let pos: Vec<_> = (0..dim).map(|k| pb.add_var(c[k], (0.0, f64::INFINITY))).collect();
    let neg: Vec<_> = (0..dim).map(|k| pb.add_var(-c[k], (0.0, f64::INFINITY))).collect();
    for (r, &bi) in a.iter().zip(b) {
        let mut terms = Vec::with_capacity(2 * dim);
        for (k, &v) in r.iter().enumerate() {
            if v != 0.0 {
                terms.push((pos[k], v));
                terms.push((neg[k], -v));
            }
        }
        if terms.is_empty() {
            if bi < -TOL_LP {
                return Support::Infeasible;
            }
            continue;
        }
        pb.add_constraint(terms, ComparisonOp::Le, bi);
    }
    match pb.solve() {
        Ok(microlp::SolveOutcome::Solution(sol)) => Support::Bounded {
            value: sol.objective(),
            argmax: (0..dim).map(|k| sol.var_value(pos[k]) - sol.var_value(neg[k])).collect(),
        },
        Ok(_) => Support::Unbounded,
        Err(microlp::Error::Infeasible) => Support::Infeasible,
        Err(microlp::Error::Unbounded) => Support::Unbounded,
        Err(e) => panic!("LP backend failure: {e}"),
    }
}

/// Projection by successive Fourier–Motzkin elimination with LP pruning after
/// every eliminated coordinate.
pub fn fm_project(p: &Polytope, keep: &[usize]) -> Result<Polytope> {
    if keep.is_empty() || keep.iter().any(|&k| k >= p.dim) {
        return Err(Error::Domain(format!("projection indices {keep:?} invalid for dimension {}", p.dim)));
    }
    let mut seen = vec![false; p.dim];
    for &k in keep {
        if seen[k] {
            return Err(Error::Domain(format!("projection index {k} repeated")));
        }
        seen[k] = true;
    }
    if p.is_empty() {
        return Ok(Polytope::empty(keep.len()));
    }
    // current[i] = original coordinate held at position i
    let mut current: Vec<usize> = (0..p.dim).collect();
    let mut q = p.remove_redundant();
    while current.len() > keep.len() {
        let pos = current.iter().rposition(|c| !keep.contains(c)).expect("something left to eliminate");
        q = q.eliminate(pos).remove_redundant();
        current.remove(pos);
    }
    let order: Vec<usize> = keep.iter().map(|k| current.iter().position(|c| c == k).unwrap()).collect();
    let a = q.a.iter().map(|r| order.iter().map(|&i| r[i]).collect()).collect();
    Ok(Polytope { dim: keep.len(), a, b: q.b })
}

/// Discrete linear dynamics `x⁺ = A x + B u`.
#[derive(Clone, Debug)]
pub struct LinearDynamics {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
}

impl LinearDynamics {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() || b.nrows() != a.nrows() || b.ncols() == 0 {
            return Err(Error::Domain("dynamics matrices have inconsistent shapes".into()));
        }
        Ok(Self { a, b })
    }

    /// Planar double integrator on `(p_x, p_y, v_x, v_y)` with velocity
    /// increments as inputs: `A = [[I, T I], [0, I]]`, `B = [[0], [I]]`.
    pub fn double_integrator(t: f64) -> Self {
        let mut a = DMatrix::identity(4, 4);
        a[(0, 2)] = t;
        a[(1, 3)] = t;
        let mut b = DMatrix::zeros(4, 2);
        b[(2, 0)] = 1.0;
        b[(3, 1)] = 1.0;
        Self { a, b }
    }

    pub fn nx(&self) -> usize {
        self.a.nrows()
    }

    pub fn nu(&self) -> usize {
        self.b.ncols()
    }

    pub fn step(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let n = self.nx();
        (0..n)
            .map(|i| {
                (0..n).map(|j| self.a[(i, j)] * x[j]).sum::<f64>()
                    + (0..self.nu()).map(|j| self.b[(i, j)] * u[j]).sum::<f64>()
            })
            .collect()
    }
}

/// States from which some admissible input lands in `c`.
pub fn pre_set(c: &Polytope, dynamics: &LinearDynamics, inputs: &Polytope) -> Result<Polytope> {
    let (n, m) = (dynamics.nx(), dynamics.nu());
    if c.dim != n || inputs.dim != m {
        return Err(Error::Domain(format!(
            "pre_set: set dimension {} / input dimension {} do not match dynamics ({n}, {m})",
            c.dim, inputs.dim
        )));
    }
    let mut a = Vec::with_capacity(c.rows() + inputs.rows());
    let mut b = Vec::with_capacity(c.rows() + inputs.rows());
    for (r, &bi) in c.a.iter().zip(&c.b) {
        let mut row = vec![0.0; n + m];
        for j in 0..n {
            row[j] = (0..n).map(|i| r[i] * dynamics.a[(i, j)]).sum();
        }
        for j in 0..m {
            row[n + j] = (0..n).map(|i| r[i] * dynamics.b[(i, j)]).sum();
        }
        a.push(row);
        b.push(bi);
    }
    for (r, &bi) in inputs.a.iter().zip(&inputs.b) {
        let mut row = vec![0.0; n + m];
        row[n..].copy_from_slice(r);
        a.push(row);
        b.push(bi);
    }
    let lifted = Polytope { dim: n + m, a, b };
    fm_project(&lifted, &(0..n).collect::<Vec<_>>())
}

/// Greatest fixpoint of `C ← Pre(C) ∩ C` from `C₀ = x`.
pub fn max_control_invariant(
    x: &Polytope,
    dynamics: &LinearDynamics,
    inputs: &Polytope,
    max_iter: usize,
) -> Result<(Polytope, usize)> {
    let mut c = x.remove_redundant();
    for k in 1..=max_iter {
        if c.is_empty() {
            return Ok((Polytope::empty(x.dim), k));
        }
        let next = pre_set(&c, dynamics, inputs)?.intersect(&c).remove_redundant();
        if c.subset(&next) {
            return Ok((next, k));
        }
        if k == max_iter {
            return Err(Error::Nonconvergence { iterations: k, gap: c.facet_gap(&next) });
        }
        c = next;
    }
    Err(Error::Nonconvergence { iterations: 0, gap: f64::INFINITY })
}

/// `R₀ = target`, `R_{k+1} = Pre(R_k) ∩ constraint`; returns `R_N`.
pub fn backward_reachable(
    target: &Polytope,
    steps: usize,
    constraint: &Polytope,
    dynamics: &LinearDynamics,
    inputs: &Polytope,
) -> Result<Polytope> {
    let mut r = target.remove_redundant();
    for _ in 0..steps {
        if r.is_empty() {
            return Ok(Polytope::empty(target.dim));
        }
        r = pre_set(&r, dynamics, inputs)?.intersect(constraint).remove_redundant();
    }
    Ok(r)
}

/// H-representation of `p ∪ q` when that union is convex, `None` otherwise.
pub fn convex_union(p: &Polytope, q: &Polytope) -> Option<Polytope> {
    let p = p.remove_redundant();
    let q = q.remove_redundant();
    let valid_for = |rows: &Polytope, other: &Polytope| -> Vec<usize> {
        (0..rows.rows())
            .filter(|&i| {
                let half = Polytope { dim: rows.dim, a: vec![rows.a[i].clone()], b: vec![rows.b[i]] };
                other.subset(&half)
            })
            .collect()
    };
    let keep_p = valid_for(&p, &q);
    let keep_q = valid_for(&q, &p);
    let mut a = Vec::new();
    let mut b = Vec::new();
    for &i in &keep_p {
        a.push(p.a[i].clone());
        b.push(p.b[i]);
    }
    for &i in &keep_q {
        a.push(q.a[i].clone());
        b.push(q.b[i]);
    }
    let hull = Polytope { dim: p.dim, a, b };
    // hull \ p must lie in q; facets of p kept in the hull cut nothing away
    for i in (0..p.rows()).filter(|i| !keep_p.contains(i)) {
        let mut beyond = hull.clone();
        beyond.a.push(p.a[i].iter().map(|v| -v).collect());
        beyond.b.push(-p.b[i]);
        if !beyond.subset(&q) {
            return None;
        }
    }
    Some(hull.remove_redundant())
}
