//! Scenario orchestration: offline synthesis of the cell graph and plan,
//! the closed three-layer run, trace monitors and the emitted artifacts.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::contracts::{compose_layers, template_chain, ComposedChain};
use crate::error::{Error, Result};
use crate::geometry::{backward_reachable, convex_union, max_control_invariant, Polytope};
use crate::gts::{Gts, Symbol};
use crate::logic::{eval_lasso, parse_ltl, synthesize_policy, BuchiAutomaton, BuchiSpec, LassoPlan, Letter, Ltl};
use crate::planner::{mpc_step, MpcConfig, TransitionTask, NX};
use crate::signals::{eventify, first_slow_position, interpolate_linear, sample, Cell, DenseTrace, Partition};
use crate::vehicle::{
    bezier_piece, bezier_ref, closed_loop_step, ctle_solve, fbl_terms, matched_state, CtleSolution, RefSignal, VehicleParams,
    VehicleState,
};

pub const DEFAULT_SCENARIO: &str = include_str!("../scenarios/default.json");
/// Row-wise tolerance when re-checking a solved plan against its constraints.
pub const PLAN_TOL: f64 = 1e-6;
/// Membership slack for invariant-set checks at FSM events.
pub const SET_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSpec {
    pub symbol: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hi: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub representative: Option<Vec<f64>>,
}

impl CellSpec {
    fn build(&self) -> Result<Cell> {
        let region = match (&self.lo, &self.hi, &self.a, &self.b) {
            (Some(lo), Some(hi), None, None) => Polytope::from_box(lo, hi)?,
            (None, None, Some(a), Some(b)) => Polytope::new(a.clone(), b.clone())?,
            _ => {
                return Err(Error::Validation(format!(
                    "cell {}: give either lo/hi or a/b",
                    self.symbol
                )))
            }
        };
        if region.dim != 2 {
            return Err(Error::Validation(format!("cell {} must be planar", self.symbol)));
        }
        let representative = match &self.representative {
            Some(r) => r.clone(),
            None => region.chebyshev_center()?.0,
        };
        Ok(Cell { symbol: self.symbol.clone(), region, representative })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialState {
    pub position: [f64; 2],
    pub velocity: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub cells: Vec<CellSpec>,
    pub labels: BTreeMap<String, Vec<String>>,
    /// Unordered pairs of cells that share a facet.
    pub adjacency: Vec<[String; 2]>,
    pub initial_cell: String,
    pub initial_state: InitialState,
    pub ltl: String,
    pub buchi: BuchiSpec,
    pub mpc: MpcConfig,
    pub vehicle: VehicleParams,
    pub alpha: f64,
    /// Tracking bound; defaults to `3/32 · α · T · Δv_max`.
    pub delta: Option<f64>,
    /// Tolerance of the sample-level relation between vehicle and integrator.
    pub epsilon: f64,
    /// Numerical allowance added to `delta` by the interpolation monitor.
    pub p1_slack: f64,
    /// Integration steps per period; must be even.
    pub substeps: usize,
    pub loops: usize,
    pub max_invariant_iterations: usize,
    pub seed: u64,
    /// Half-width of the seeded uniform perturbation of the vehicle's start.
    pub initial_perturbation: f64,
}

/// Sets `key` (dotted path, array indices allowed) in a JSON tree.
pub fn apply_override(tree: &mut Value, key: &str, raw: &str) -> Result<()> {
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = tree;
    for part in key.split('.') {
        node = match node {
            Value::Object(map) => map.get_mut(part),
            Value::Array(items) => part.parse::<usize>().ok().and_then(move |i| items.get_mut(i)),
            _ => None,
        }
        .ok_or_else(|| Error::Validation(format!("unknown scenario key {key}")))?;
    }
    *node = value;
    Ok(())
}

/// Splits `key=value`.
pub fn parse_override(text: &str) -> Result<(String, String)> {
    text.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| Error::Validation(format!("override `{text}` is not key=value")))
}

impl Scenario {
    pub fn from_json(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut tree: Value = serde_json::from_str(text)?;
        for (k, v) in overrides {
            apply_override(&mut tree, k, v)?;
        }
        let sc: Scenario = serde_json::from_value(tree)?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn default_with(overrides: &[(String, String)]) -> Result<Self> {
        Self::from_json(DEFAULT_SCENARIO, overrides)
    }

    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        self.mpc.validate()?;
        self.vehicle.validate()?;
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Validation(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if self.substeps < 2 || self.substeps % 2 != 0 {
            return Err(Error::Validation("substeps must be even and at least 2".into()));
        }
        if self.loops == 0 {
            return Err(Error::Validation("loops must be at least 1".into()));
        }
        if self.delta.is_some_and(|d| !(d >= 0.0)) || !(self.epsilon >= 0.0) || !(self.p1_slack >= 0.0) {
            return Err(Error::Validation("delta, epsilon and p1_slack must be nonnegative".into()));
        }
        if !(self.initial_perturbation >= 0.0) {
            return Err(Error::Validation("initial_perturbation must be nonnegative".into()));
        }
        let known = |s: &String| self.cells.iter().any(|c| &c.symbol == s);
        if !known(&self.initial_cell) {
            return Err(Error::Validation(format!("initial cell {} is not a cell", self.initial_cell)));
        }
        for s in self.labels.keys().chain(self.adjacency.iter().flatten()) {
            if !known(s) {
                return Err(Error::Validation(format!("unknown cell {s}")));
            }
        }
        Ok(())
    }

    pub fn delta(&self) -> f64 {
        self.delta.unwrap_or(3.0 / 32.0 * self.alpha * self.mpc.period * self.mpc.dv_max)
    }

    pub fn dt(&self) -> f64 {
        self.mpc.period / self.substeps as f64
    }

    pub fn partition(&self) -> Result<Partition> {
        Partition::new(self.cells.iter().map(CellSpec::build).collect::<Result<_>>()?)
    }

    pub fn label_map(&self) -> BTreeMap<String, Letter> {
        self.cells
            .iter()
            .map(|c| (c.symbol.clone(), self.labels.get(&c.symbol).map(|l| l.iter().cloned().collect()).unwrap_or_default()))
            .collect()
    }

    pub fn initial_integrator(&self) -> Vec<f64> {
        let s = &self.initial_state;
        vec![s.position[0], s.position[1], s.velocity[0], s.velocity[1]]
    }
}

/// Geometry and feasibility of one directed cell transition.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TransitionSets {
    pub from: String,
    pub to: String,
    /// Shrunk union of both cells on positions.
    pub union: Polytope,
    /// The union lifted to the state space with the velocity box.
    pub corridor: Polytope,
    pub reach: Polytope,
    pub feasible: bool,
    /// Largest violation of `C_from ⊆ R_N(C_to)` over the facets of the reach set.
    pub gap: f64,
}

/// Offline set computations and the feasibility-restricted FSM.
#[derive(Clone, Debug)]
pub struct SetSynthesis {
    pub partition: Partition,
    pub labels: BTreeMap<String, Letter>,
    pub delta: f64,
    pub shrunk: BTreeMap<String, Polytope>,
    pub invariant: BTreeMap<String, Polytope>,
    pub invariant_iterations: BTreeMap<String, usize>,
    pub targets: BTreeMap<String, Vec<f64>>,
    pub transitions: Vec<TransitionSets>,
    pub fsm: Gts,
}

impl SetSynthesis {
    pub fn transition(&self, from: &str, to: &str) -> Option<&TransitionSets> {
        self.transitions.iter().find(|t| t.from == from && t.to == to)
    }
}

#[derive(Clone, Debug)]
pub struct Synthesis {
    pub sets: SetSynthesis,
    pub phi: Ltl,
    pub plan: LassoPlan,
    pub plan_certified: bool,
}

impl Synthesis {
    pub fn transition(&self, from: &str, to: &str) -> Option<&TransitionSets> {
        self.sets.transition(from, to)
    }
}

fn lift(p2: &Polytope, cfg: &MpcConfig) -> Polytope {
    p2.embed(NX, &[0, 1]).intersect(&cfg.velocity_box())
}

/// Rest state at the centre of the largest ball in the rest slice of `c`.
fn rest_target(c: &Polytope) -> Result<Vec<f64>> {
    let (centre, radius) = c.slice(&[(2, 0.0), (3, 0.0)]).chebyshev_center()?;
    if !(radius > 0.0) {
        return Err(Error::Synthesis("invariant set has no interior rest states".into()));
    }
    Ok(vec![centre[0], centre[1], 0.0, 0.0])
}

/// Shrunk cells, invariant sets, rest targets and the transitions whose
/// `N`-step backward reachable set covers the source invariant set.
pub fn synthesize_sets(sc: &Scenario) -> Result<SetSynthesis> {
    let partition = sc.partition()?;
    let labels = sc.label_map();
    let delta = sc.delta();
    let cfg = &sc.mpc;
    let dynamics = cfg.dynamics();
    let inputs = cfg.input_box();

    let mut shrunk = BTreeMap::new();
    let mut invariant = BTreeMap::new();
    let mut invariant_iterations = BTreeMap::new();
    let mut targets = BTreeMap::new();
    for cell in &partition.cells {
        let inner = cell.region.minkowski_shrink(delta)?;
        let (c, iters) = max_control_invariant(&lift(&inner, cfg), &dynamics, &inputs, sc.max_invariant_iterations)?;
        if c.is_empty() {
            return Err(Error::Synthesis(format!("cell {} has an empty invariant set", cell.symbol)));
        }
        targets.insert(cell.symbol.clone(), rest_target(&c)?);
        shrunk.insert(cell.symbol.clone(), inner);
        invariant.insert(cell.symbol.clone(), c);
        invariant_iterations.insert(cell.symbol.clone(), iters);
    }

    let mut transitions = Vec::new();
    for [p, q] in &sc.adjacency {
        let (ip, iq) = (partition.index_of(p).expect("validated"), partition.index_of(q).expect("validated"));
        let joined = convex_union(&partition.cells[ip].region, &partition.cells[iq].region)
            .ok_or_else(|| Error::Validation(format!("cells {p} and {q} do not form a convex union")))?;
        let union = joined.minkowski_shrink(delta)?;
        let corridor = lift(&union, cfg);
        for (from, to) in [(p, q), (q, p)] {
            let reach = backward_reachable(&invariant[to], cfg.horizon, &corridor, &dynamics, &inputs)?;
            let report = invariant[from].subset_report(&reach);
            transitions.push(TransitionSets {
                from: from.clone(),
                to: to.clone(),
                union: union.clone(),
                corridor: corridor.clone(),
                feasible: report.holds,
                gap: report.gap,
                reach,
            });
        }
    }

    let states: Vec<String> = partition.cells.iter().map(|c| c.symbol.clone()).collect();
    let edges = transitions
        .iter()
        .filter(|t| t.feasible)
        .map(|t| (t.from.clone(), Symbol::atom(t.to.clone()), Symbol::atom(t.to.clone()), t.to.clone()))
        .collect();
    let fsm = Gts::from_edges(states, &[sc.initial_cell.clone()], Vec::new(), edges)?;
    Ok(SetSynthesis { partition, labels, delta, shrunk, invariant, invariant_iterations, targets, transitions, fsm })
}

/// Sets plus a lasso plan over the restricted FSM, certified against the formula.
pub fn synthesize(sc: &Scenario) -> Result<Synthesis> {
    let sets = synthesize_sets(sc)?;
    let phi = parse_ltl(&sc.ltl)?;
    let buchi = BuchiAutomaton::from_spec(&sc.buchi)?;
    let letters: Vec<Letter> = sets.labels.values().cloned().collect();
    buchi.check_total(&letters)?;
    let plan = synthesize_policy(&sets.fsm, &buchi, &sets.labels)?;
    let plan_certified = eval_lasso(&phi, &plan.word(&sets.labels));
    if !plan_certified {
        return Err(Error::Synthesis(format!("plan {:?} does not satisfy the specification", plan.cells())));
    }
    Ok(Synthesis { sets, phi, plan, plan_certified })
}

/// One row of the dense trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub v: f64,
    pub omega: f64,
    pub tau_r: f64,
    pub tau_l: f64,
    pub x_d: f64,
    pub y_d: f64,
    pub tracking_error: f64,
    pub lyapunov: f64,
    /// Integrator state at the start of the current period.
    pub int_px: f64,
    pub int_py: f64,
    pub int_vx: f64,
    pub int_vy: f64,
    pub cmd_from: String,
    pub cmd_to: String,
    pub counter: usize,
    /// Cell entered by the FSM at this instant, empty otherwise.
    pub event: String,
}

impl TraceRow {
    fn integrator(&self) -> [f64; 4] {
        [self.int_px, self.int_py, self.int_vx, self.int_vy]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass,
    Fail,
    InconclusivePrefix,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub status: Status,
    pub first_violation_t: Option<f64>,
    pub detail: String,
}

impl Verdict {
    pub fn holds(&self) -> bool {
        self.status == Status::Pass
    }

    fn pass(detail: String) -> Self {
        Self { status: Status::Pass, first_violation_t: None, detail }
    }

    fn fail(t: Option<f64>, detail: String) -> Self {
        Self { status: Status::Fail, first_violation_t: t, detail }
    }
}

/// `‖y(t) − lerp(y(kT))(t)‖∞ ≤ bound` on the dense grid, positions only.
pub fn monitor_p1(rows: &[TraceRow], period: f64, dt: f64, bound: f64) -> Result<(Verdict, f64)> {
    let dense = DenseTrace::new(rows.iter().map(|r| vec![r.x, r.y]).collect(), dt, 0.0)?;
    let samples = sample(&dense, period)?;
    let interp = interpolate_linear(&samples, period, dt)?;
    let mut worst = 0.0f64;
    let mut first = None;
    for (i, (a, b)) in interp.values.iter().zip(&dense.values).enumerate() {
        let d = (a[0] - b[0]).abs().max((a[1] - b[1]).abs());
        worst = worst.max(d);
        if d > bound && first.is_none() {
            first = Some(rows[i].t);
        }
    }
    let detail = format!("max deviation {worst:.6e} vs bound {bound:.6e}");
    Ok((if first.is_some() { Verdict::fail(first, detail) } else { Verdict::pass(detail) }, worst))
}

/// Integrator samples `x_0..x_K` recorded at period starts.
pub fn integrator_samples(rows: &[TraceRow], substeps: usize) -> Vec<(f64, [f64; 4])> {
    rows.iter().step_by(substeps).map(|r| (r.t, r.integrator())).collect()
}

pub fn quantized_word(samples: &[(f64, [f64; 4])], partition: &Partition) -> Result<Vec<String>> {
    samples
        .iter()
        .enumerate()
        .map(|(k, (_, x))| {
            partition.locate(&x[..2]).map(|i| partition.cells[i].symbol.clone()).ok_or(Error::Coverage { index: k })
        })
        .collect()
}

/// Longest run of identical symbols that is followed by a change.
fn max_gap(word: &[String]) -> usize {
    let mut best = 0;
    let mut start = 0;
    for k in 1..word.len() {
        if word[k] != word[k - 1] {
            best = best.max(k - start);
            start = k;
        }
    }
    best
}

/// Every cell change of the quantized integrator word occurs within `n` periods.
pub fn monitor_p2(word: &[String], times: &[f64], n: usize) -> (Verdict, usize) {
    let gap = max_gap(word);
    let detail = format!("max inter-event gap {gap} periods, bound {n}");
    match first_slow_position(word, n) {
        Some(k) => (Verdict::fail(Some(times[k + n]), format!("{detail}; no event within {n} periods of index {k}")), gap),
        None => (Verdict::pass(detail), gap),
    }
}

/// The executed event word must follow the certified lasso plan for at least
/// one full cycle; the plan's word is then checked against the formula.
pub fn monitor_p3(events: &[String], plan: &LassoPlan, labels: &BTreeMap<String, Letter>, phi: &Ltl) -> Verdict {
    for (i, e) in events.iter().enumerate() {
        if e != plan.cell(i) {
            return Verdict::fail(None, format!("event {i} is {e}, plan expects {}", plan.cell(i)));
        }
    }
    let needed = plan.prefix.len() + plan.cycle.len() + 1;
    if events.len() < needed {
        return Verdict {
            status: Status::InconclusivePrefix,
            first_violation_t: None,
            detail: format!("{} events, {needed} needed to close the lasso", events.len()),
        };
    }
    if eval_lasso(phi, &plan.word(labels)) {
        Verdict::pass(format!("{} events follow the certified lasso", events.len()))
    } else {
        Verdict::fail(None, "plan word violates the formula".into())
    }
}

/// At each period midpoint the vehicle matches the integrator's linear
/// interpolant in position and velocity within `tol` (∞-norm).
pub fn monitor_m1(rows: &[TraceRow], substeps: usize, period: f64, tol: f64) -> (Verdict, f64) {
    let half = substeps / 2;
    let mut worst = 0.0f64;
    let mut first = None;
    let mut k = 0;
    while k * substeps + substeps <= rows.len() - 1 {
        let r = &rows[k * substeps + half];
        let x = rows[k * substeps].integrator();
        let expect = [x[0] + x[2] * period / 2.0, x[1] + x[3] * period / 2.0, x[2], x[3]];
        let got = [r.x, r.y, r.v * r.theta.cos(), r.v * r.theta.sin()];
        let d = expect.iter().zip(&got).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        worst = worst.max(d);
        if d > tol && first.is_none() {
            first = Some(r.t);
        }
        k += 1;
    }
    let detail = format!("max midpoint mismatch {worst:.3e} over {k} periods, tolerance {tol:.1e}");
    (if first.is_some() { Verdict::fail(first, detail) } else { Verdict::pass(detail) }, worst)
}

/// At each FSM event the integrator lies in the entered cell's invariant
/// set, and the quantized event word equals the FSM's cell sequence.
pub fn monitor_m2(rows: &[TraceRow], initial_cell: &str, events: &[String], invariant: &BTreeMap<String, Polytope>) -> Verdict {
    let mut fsm_word = vec![initial_cell.to_string()];
    for r in rows.iter().filter(|r| !r.event.is_empty()) {
        let Some(c) = invariant.get(&r.event) else {
            return Verdict::fail(Some(r.t), format!("event names unknown cell {}", r.event));
        };
        if !c.contains_tol(&r.integrator(), SET_TOL) {
            return Verdict::fail(Some(r.t), format!("integrator state outside the invariant set of {}", r.event));
        }
        fsm_word.push(r.event.clone());
    }
    // The quantized word may already show the next cell before the run stops.
    let matches = events.len() >= fsm_word.len() && events[..fsm_word.len()] == fsm_word[..] && events.len() <= fsm_word.len() + 1;
    if !matches {
        return Verdict::fail(None, format!("quantized events {events:?} differ from FSM events {fsm_word:?}"));
    }
    Verdict::pass(format!("{} FSM events inside their invariant sets", fsm_word.len() - 1))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComposedVerdict {
    pub holds: bool,
    pub assumption_atoms: Vec<String>,
    pub guarantee_atoms: Vec<String>,
    pub recipe: Vec<String>,
    /// Observed atom valuation lies in the composed guarantee.
    pub valuation_in_guarantee: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub periods: usize,
    pub duration: f64,
    pub fsm_events: usize,
    pub loops_completed: usize,
    pub max_tracking_error: f64,
    pub max_p1_deviation: f64,
    pub p1_bound: f64,
    pub max_m1_error: f64,
    pub max_inter_event_gap: usize,
    pub mpc_solves: usize,
    pub max_plan_violation: f64,
    pub min_speed: f64,
    pub max_lyapunov: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub seed: u64,
    pub atoms: BTreeMap<String, Verdict>,
    pub composed: ComposedVerdict,
    pub aborted: Option<String>,
    pub stats: RunStats,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub rows: Vec<TraceRow>,
    pub report: RunReport,
}

/// Outcome of the online loop before monitoring.
struct LoopRecord {
    rows: Vec<TraceRow>,
    mpc: Verdict,
    aborted: Option<String>,
    solves: usize,
    max_plan_violation: f64,
}

/// Reference at `t = kT` from samples `x_0..=x_k`; a zero-input successor
/// makes corner `k` interior without influencing its value.
fn closing_ref(points: &[Vec<f64>], dynamics: &crate::geometry::LinearDynamics, k: usize, alpha: f64, period: f64) -> Result<RefSignal> {
    let lo = k.saturating_sub(1);
    let mut window = points[lo..].to_vec();
    window.push(dynamics.step(&points[k], &[0.0, 0.0]));
    bezier_ref(&window, alpha, period, (k - lo) as f64 * period)
}

fn make_row(t: f64, s: &VehicleState, r: &RefSignal, tau: [f64; 2], v: f64, x: &[f64], cmd: (&str, &str), counter: usize) -> TraceRow {
    TraceRow {
        t,
        x: s.x,
        y: s.y,
        theta: s.theta,
        v: s.v,
        omega: s.omega,
        tau_r: tau[0],
        tau_l: tau[1],
        x_d: r.value[0],
        y_d: r.value[1],
        tracking_error: (s.x - r.value[0]).abs().max((s.y - r.value[1]).abs()),
        lyapunov: v,
        int_px: x[0],
        int_py: x[1],
        int_vx: x[2],
        int_vy: x[3],
        cmd_from: cmd.0.to_string(),
        cmd_to: cmd.1.to_string(),
        counter,
        event: String::new(),
    }
}

fn initial_vehicle(sc: &Scenario, x0: &[f64]) -> VehicleState {
    let r0 = RefSignal { value: [x0[0], x0[1]], d1: [x0[2], x0[3]], d2: [0.0; 2], d3: [0.0; 2] };
    let mut s = matched_state(&r0);
    if sc.initial_perturbation > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
        let h = sc.initial_perturbation;
        s.x += rng.gen_range(-h..=h);
        s.y += rng.gen_range(-h..=h);
        s.theta += rng.gen_range(-h..=h);
        s.v += rng.gen_range(-h..=h);
        s.omega += rng.gen_range(-h..=h);
    }
    s
}

fn run_loop(sc: &Scenario, syn: &Synthesis, ctle: &CtleSolution) -> Result<LoopRecord> {
    let cfg = &sc.mpc;
    let (period, dt, r) = (cfg.period, sc.dt(), sc.substeps);
    let dynamics = cfg.dynamics();
    let plan = &syn.plan;
    let mut x = sc.initial_integrator();
    let c0 = &syn.sets.invariant[&sc.initial_cell];
    if plan.cell(0) != sc.initial_cell || !c0.contains(&x) {
        return Err(Error::Validation(format!(
            "initial integrator state {x:?} must lie in the invariant set of {}",
            sc.initial_cell
        )));
    }
    let needed = plan.prefix.len() + sc.loops * plan.cycle.len();
    let max_periods = needed * 2 * cfg.horizon;
    let mut s = initial_vehicle(sc, &x);
    let mut points = vec![x.clone()];
    let mut rec = LoopRecord {
        rows: Vec::new(),
        mpc: Verdict::pass(String::new()),
        aborted: None,
        solves: 0,
        max_plan_violation: 0.0,
    };
    let (mut i, mut counter, mut k) = (0usize, 0usize, 0usize);
    let mut pending_event: Option<String> = None;
    let fail_mpc = |rec: &mut LoopRecord, t: f64, msg: String| {
        rec.mpc = Verdict::fail(Some(t), msg.clone());
        rec.aborted = Some(msg);
    };
    while i < needed && k < max_periods {
        let t0 = k as f64 * period;
        let (from, to) = plan.command(i);
        let corridor = &syn
            .transition(&from, &to)
            .ok_or_else(|| Error::Synthesis(format!("plan uses unknown transition {from} -> {to}")))?
            .corridor;
        let task = TransitionTask {
            from_cell: from.clone(),
            to_cell: to.clone(),
            union: corridor.clone(),
            terminal: syn.sets.invariant[&to].clone(),
            target: syn.sets.targets[&to].clone(),
            counter,
        };
        let step = match mpc_step(&x, &task, cfg) {
            Ok(step) => step,
            Err(e) => {
                fail_mpc(&mut rec, t0, e.to_string());
                break;
            }
        };
        rec.solves += 1;
        rec.max_plan_violation = rec.max_plan_violation.max(step.plan_violation);
        if step.plan_violation > PLAN_TOL {
            fail_mpc(&mut rec, t0, format!("plan violates its constraints by {:.3e}", step.plan_violation));
            break;
        }
        let x_next = dynamics.step(&x, &step.u0);
        points.push(x_next.clone());
        let mut ext = points.clone();
        ext.push(dynamics.step(&x_next, &[0.0, 0.0]));
        let lo = k.saturating_sub(1);
        let window = &ext[lo..];
        let offset = lo as f64 * period;
        let piece = |t: f64, anchor: f64| bezier_piece(window, sc.alpha, period, t - offset, anchor - offset);
        for j in 0..r {
            let t = t0 + j as f64 * dt;
            let rt = piece(t, t)?;
            let terms = match fbl_terms(&s, &rt, ctle, &sc.vehicle) {
                Ok(terms) => terms,
                Err(e) => {
                    rec.aborted = Some(format!("t = {t:.3}: {e}"));
                    return Ok(rec);
                }
            };
            let mut row = make_row(t, &s, &rt, terms.tau, terms.lyapunov, &x, (&from, &to), counter);
            if j == 0 {
                row.event = pending_event.take().unwrap_or_default();
            }
            rec.rows.push(row);
            let mid = t + dt / 2.0;
            s = match closed_loop_step(&s, t, dt, &|tau| piece(tau, mid), ctle, &sc.vehicle) {
                Ok(next) => next,
                Err(e) => {
                    rec.aborted = Some(format!("t = {t:.3}: {e}"));
                    return Ok(rec);
                }
            };
        }
        counter = step.counter;
        x = x_next;
        k += 1;
        if syn.sets.invariant[&to].contains_tol(&x, SET_TOL) {
            i += 1;
            counter = 0;
            pending_event = Some(to);
        }
    }
    if rec.aborted.is_none() {
        let t = k as f64 * period;
        let rt = closing_ref(&points, &dynamics, k, sc.alpha, period)?;
        let (cmd_from, cmd_to) = plan.command(i);
        let (tau, v) = match fbl_terms(&s, &rt, ctle, &sc.vehicle) {
            Ok(terms) => (terms.tau, terms.lyapunov),
            Err(e) => {
                rec.aborted = Some(format!("t = {t:.3}: {e}"));
                return Ok(rec);
            }
        };
        let mut row = make_row(t, &s, &rt, tau, v, &x, (&cmd_from, &cmd_to), counter);
        row.event = pending_event.take().unwrap_or_default();
        rec.rows.push(row);
        if i < needed {
            rec.aborted = Some(format!("stopped after {k} periods with {i} of {needed} transitions"));
        }
    }
    Ok(rec)
}

/// Evaluates every monitor on a trace; the same function serves online runs
/// and offline re-checks of an emitted CSV.
pub fn evaluate(sc: &Scenario, syn: &Synthesis, rows: &[TraceRow]) -> Result<(BTreeMap<String, Verdict>, RunStats)> {
    if rows.len() < 2 {
        return Err(Error::Validation("trace too short to monitor".into()));
    }
    let period = sc.mpc.period;
    let mut atoms = BTreeMap::new();
    let mut stats = RunStats { p1_bound: syn.sets.delta + sc.p1_slack, ..Default::default() };
    let (p1, dev) = monitor_p1(rows, period, sc.dt(), stats.p1_bound)?;
    stats.max_p1_deviation = dev;
    atoms.insert("P1".to_string(), p1);
    let samples = integrator_samples(rows, sc.substeps);
    let word = quantized_word(&samples, &syn.sets.partition)?;
    let times: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let (p2, gap) = monitor_p2(&word, &times, sc.mpc.horizon);
    stats.max_inter_event_gap = gap;
    atoms.insert("P2".to_string(), p2);
    let events = eventify(&word)?;
    atoms.insert("P3".to_string(), monitor_p3(&events, &syn.plan, &syn.sets.labels, &syn.phi));
    let (m1, m1_err) = monitor_m1(rows, sc.substeps, period, sc.epsilon);
    stats.max_m1_error = m1_err;
    atoms.insert("M1".to_string(), m1);
    atoms.insert("M2".to_string(), monitor_m2(rows, &sc.initial_cell, &events, &syn.sets.invariant));
    stats.periods = (rows.len() - 1) / sc.substeps;
    stats.duration = rows[rows.len() - 1].t;
    stats.fsm_events = rows.iter().filter(|r| !r.event.is_empty()).count();
    let plan = &syn.plan;
    stats.loops_completed = stats.fsm_events.saturating_sub(plan.prefix.len()) / plan.cycle.len();
    stats.max_tracking_error = rows.iter().map(|r| r.tracking_error).fold(0.0, f64::max);
    stats.min_speed = rows.iter().map(|r| r.v.abs()).fold(f64::INFINITY, f64::min);
    stats.max_lyapunov = rows.iter().map(|r| r.lyapunov).fold(0.0, f64::max);
    Ok((atoms, stats))
}

pub fn composed_verdict(chain: &ComposedChain, atoms: &BTreeMap<String, Verdict>) -> ComposedVerdict {
    let truth = |a: &str| a == "S1" || atoms.get(a).is_some_and(Verdict::holds);
    ComposedVerdict {
        holds: atoms.values().all(Verdict::holds),
        assumption_atoms: chain.assumption_atoms.clone(),
        guarantee_atoms: chain.guarantee_atoms.clone(),
        recipe: chain.recipe.clone(),
        valuation_in_guarantee: chain.contract.guarantees.members.contains(&chain.valuation(&truth)),
    }
}

pub fn run_with(sc: &Scenario, syn: &Synthesis) -> Result<RunOutcome> {
    let ctle = ctle_solve(&sc.vehicle.k_p, &sc.vehicle.k_d, sc.vehicle.sigma)?;
    let rec = run_loop(sc, syn, &ctle)?;
    let chain = compose_layers(&template_chain(3))?;
    let (mut atoms, mut stats) = if rec.rows.len() >= 2 {
        evaluate(sc, syn, &rec.rows)?
    } else {
        let none = Verdict::fail(Some(0.0), "no trace recorded".into());
        let atoms = ["P1", "P2", "P3", "M1", "M2"].iter().map(|a| (a.to_string(), none.clone())).collect();
        (atoms, RunStats::default())
    };
    let mut mpc = rec.mpc;
    if mpc.holds() {
        mpc.detail = format!("{} solves, max plan violation {:.3e}", rec.solves, rec.max_plan_violation);
    }
    atoms.insert("MPC".to_string(), mpc);
    stats.mpc_solves = rec.solves;
    stats.max_plan_violation = rec.max_plan_violation;
    let composed = composed_verdict(&chain, &atoms);
    let report = RunReport {
        scenario: sc.name.clone(),
        seed: sc.seed,
        composed: ComposedVerdict { holds: composed.holds && rec.aborted.is_none(), ..composed },
        atoms,
        aborted: rec.aborted,
        stats,
    };
    Ok(RunOutcome { rows: rec.rows, report })
}

pub fn run(sc: &Scenario) -> Result<(Synthesis, RunOutcome)> {
    let syn = synthesize(sc)?;
    let out = run_with(sc, &syn)?;
    Ok((syn, out))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CellDoc {
    pub symbol: String,
    pub labels: Vec<String>,
    pub region: Polytope,
    pub vertices: Vec<[f64; 2]>,
    pub shrunk_vertices: Vec<[f64; 2]>,
    pub invariant: Polytope,
    pub invariant_iterations: usize,
    /// Positions of the invariant set at zero velocity.
    pub invariant_rest_vertices: Vec<[f64; 2]>,
    pub target: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TransitionDoc {
    pub from: String,
    pub to: String,
    pub feasible: bool,
    pub gap: f64,
    pub union_vertices: Vec<[f64; 2]>,
    pub reach: Polytope,
    pub reach_rest_vertices: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SetsDoc {
    pub delta: f64,
    pub horizon: usize,
    pub cells: Vec<CellDoc>,
    pub transitions: Vec<TransitionDoc>,
    pub fsm_edges: Vec<(String, String)>,
    /// Absent when only the sets were computed.
    pub plan: Option<PlanDoc>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PlanDoc {
    pub prefix: Vec<String>,
    pub cycle: Vec<String>,
    pub certified: bool,
}

fn rest_vertices(p: &Polytope) -> Result<Vec<[f64; 2]>> {
    p.slice(&[(2, 0.0), (3, 0.0)]).vertices_2d()
}

pub fn sets_doc(sc: &Scenario, syn: &Synthesis) -> Result<SetsDoc> {
    let (prefix, cycle) = syn.plan.cells();
    let mut doc = geometry_doc(sc, &syn.sets)?;
    doc.plan = Some(PlanDoc { prefix, cycle, certified: syn.plan_certified });
    Ok(doc)
}

pub fn geometry_doc(sc: &Scenario, sets: &SetSynthesis) -> Result<SetsDoc> {
    let mut cells = Vec::new();
    for c in &sets.partition.cells {
        let s = &c.symbol;
        cells.push(CellDoc {
            symbol: s.clone(),
            labels: sets.labels[s].iter().cloned().collect(),
            region: c.region.clone(),
            vertices: c.region.vertices_2d()?,
            shrunk_vertices: sets.shrunk[s].vertices_2d()?,
            invariant: sets.invariant[s].clone(),
            invariant_iterations: sets.invariant_iterations[s],
            invariant_rest_vertices: rest_vertices(&sets.invariant[s])?,
            target: sets.targets[s].clone(),
        });
    }
    let mut transitions = Vec::new();
    for t in &sets.transitions {
        transitions.push(TransitionDoc {
            from: t.from.clone(),
            to: t.to.clone(),
            feasible: t.feasible,
            gap: t.gap,
            union_vertices: t.union.vertices_2d()?,
            reach: t.reach.clone(),
            reach_rest_vertices: rest_vertices(&t.reach)?,
        });
    }
    Ok(SetsDoc {
        delta: sets.delta,
        horizon: sc.mpc.horizon,
        cells,
        transitions,
        fsm_edges: sets.fsm.named_edges().into_iter().map(|(a, _, _, b)| (a, b)).collect(),
        plan: None,
    })
}

pub fn write_trace(path: &Path, rows: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}
