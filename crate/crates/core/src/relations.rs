//! Simulation and alternating simulation between finite systems over
//! different alphabets, transduced systems and open sequential feedback
//! composition.
//!
//! The greatest relation is computed by removing violating pairs from the
//! full product, one synchronous pass at a time, until nothing changes.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gts::{Edge, Gts, Symbol};

/// Forward symbol maps with set-valued inverses for inputs and outputs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SymbolTransducer {
    pub fwd_u: BTreeMap<Symbol, Symbol>,
    pub inv_u: BTreeMap<Symbol, BTreeSet<Symbol>>,
    pub fwd_y: BTreeMap<Symbol, Symbol>,
    pub inv_y: BTreeMap<Symbol, BTreeSet<Symbol>>,
}

fn fibers(fwd: &BTreeMap<Symbol, Symbol>) -> BTreeMap<Symbol, BTreeSet<Symbol>> {
    let mut inv: BTreeMap<Symbol, BTreeSet<Symbol>> = BTreeMap::new();
    for (a, b) in fwd {
        inv.entry(b.clone()).or_default().insert(a.clone());
    }
    inv
}

fn check_half(
    what: &str,
    fwd: &BTreeMap<Symbol, Symbol>,
    inv: &BTreeMap<Symbol, BTreeSet<Symbol>>,
) -> Result<()> {
    for (a, b) in fwd {
        if !inv.get(b).is_some_and(|s| s.contains(a)) {
            return Err(Error::Domain(format!("{what}: {a} not in the inverse of its image {b}")));
        }
    }
    for (b, set) in inv {
        if set.is_empty() {
            return Err(Error::Domain(format!("{what}: inverse of {b} is empty")));
        }
        if let Some(a) = set.iter().find(|a| !fwd.contains_key(*a)) {
            return Err(Error::Domain(format!("{what}: inverse of {b} holds {a} outside the domain")));
        }
        if !set.iter().any(|a| fwd.get(a) == Some(b)) {
            return Err(Error::Domain(format!("{what}: {b} not reproduced by its inverse")));
        }
    }
    for b in fwd.values() {
        if !inv.contains_key(b) {
            return Err(Error::Domain(format!("{what}: no inverse for {b}")));
        }
    }
    Ok(())
}

impl SymbolTransducer {
    /// Validates both proper-inverse laws on inputs and outputs.
    pub fn new(
        fwd_u: BTreeMap<Symbol, Symbol>,
        inv_u: BTreeMap<Symbol, BTreeSet<Symbol>>,
        fwd_y: BTreeMap<Symbol, Symbol>,
        inv_y: BTreeMap<Symbol, BTreeSet<Symbol>>,
    ) -> Result<Self> {
        check_half("input map", &fwd_u, &inv_u)?;
        check_half("output map", &fwd_y, &inv_y)?;
        Ok(Self { fwd_u, inv_u, fwd_y, inv_y })
    }

    /// Inverses are exact fibres of the forward maps.
    pub fn from_maps(fwd_u: BTreeMap<Symbol, Symbol>, fwd_y: BTreeMap<Symbol, Symbol>) -> Self {
        let inv_u = fibers(&fwd_u);
        let inv_y = fibers(&fwd_y);
        Self { fwd_u, inv_u, fwd_y, inv_y }
    }

    pub fn identity<'a>(
        inputs: impl IntoIterator<Item = &'a Symbol>,
        outputs: impl IntoIterator<Item = &'a Symbol>,
    ) -> Self {
        let diag = |it: &mut dyn Iterator<Item = &'a Symbol>| it.map(|s| (s.clone(), s.clone())).collect();
        Self::from_maps(diag(&mut inputs.into_iter()), diag(&mut outputs.into_iter()))
    }

    /// True when every input inverse is exactly the fibre of its symbol.
    pub fn input_inverse_is_tight(&self) -> bool {
        self.inv_u == fibers(&self.fwd_u)
    }

    pub fn output_inverse_is_tight(&self) -> bool {
        self.inv_y == fibers(&self.fwd_y)
    }

    pub fn map_u(&self, u: &Symbol) -> Result<&Symbol> {
        self.fwd_u.get(u).ok_or_else(|| Error::Domain(format!("input {u} outside the transducer domain")))
    }

    pub fn map_y(&self, y: &Symbol) -> Result<&Symbol> {
        self.fwd_y.get(y).ok_or_else(|| Error::Domain(format!("output {y} outside the transducer domain")))
    }

    pub fn preimage_u(&self, u: &Symbol) -> Result<&BTreeSet<Symbol>> {
        self.inv_u.get(u).ok_or_else(|| Error::Domain(format!("input {u} has no inverse")))
    }

    pub fn preimage_y(&self, y: &Symbol) -> Result<&BTreeSet<Symbol>> {
        self.inv_y.get(y).ok_or_else(|| Error::Domain(format!("output {y} has no inverse")))
    }

    /// `next ∘ self`, with inverse `self⁻¹ ∘ next⁻¹` taken as a union.
    pub fn then(&self, next: &SymbolTransducer) -> Result<SymbolTransducer> {
        let chain = |f: &BTreeMap<Symbol, Symbol>, g: &BTreeMap<Symbol, Symbol>| -> Result<BTreeMap<Symbol, Symbol>> {
            f.iter()
                .map(|(a, b)| {
                    g.get(b)
                        .map(|c| (a.clone(), c.clone()))
                        .ok_or_else(|| Error::Domain(format!("{b} outside the second transducer's domain")))
                })
                .collect()
        };
        let back = |g: &BTreeMap<Symbol, BTreeSet<Symbol>>, f: &BTreeMap<Symbol, BTreeSet<Symbol>>| {
            g.iter()
                .map(|(c, bs)| {
                    let set = bs.iter().filter_map(|b| f.get(b)).flatten().cloned().collect();
                    (c.clone(), set)
                })
                .collect()
        };
        SymbolTransducer::new(
            chain(&self.fwd_u, &next.fwd_u)?,
            back(&next.inv_u, &self.inv_u),
            chain(&self.fwd_y, &next.fwd_y)?,
            back(&next.inv_y, &self.inv_y),
        )
    }

    /// The transducer acting elementwise on set-valued symbols: a set maps to
    /// its image, and the inverse of an image collects every set in the given
    /// alphabet with that image.
    pub fn lift_to_sets(&self, inputs: &[Symbol], outputs: &[Symbol]) -> Result<SymbolTransducer> {
        let lift = |alphabet: &[Symbol], f: &BTreeMap<Symbol, Symbol>| -> Result<BTreeMap<Symbol, Symbol>> {
            alphabet
                .iter()
                .map(|s| {
                    let items = s
                        .payload()
                        .ok_or_else(|| Error::Domain(format!("lifted transducer needs set symbols, got {s}")))?;
                    let image = items
                        .iter()
                        .map(|a| f.get(a).cloned().ok_or_else(|| Error::Domain(format!("{a} outside domain"))))
                        .collect::<Result<BTreeSet<_>>>()?;
                    Ok((s.clone(), Symbol::Set(image)))
                })
                .collect()
        };
        Ok(SymbolTransducer::from_maps(lift(inputs, &self.fwd_u)?, lift(outputs, &self.fwd_y)?))
    }
}

/// Tabular file format: forward pairs plus optional explicit inverses
/// (exact fibres when omitted).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransducerSpec {
    pub inputs: Vec<(Symbol, Symbol)>,
    pub outputs: Vec<(Symbol, Symbol)>,
    #[serde(default)]
    pub input_inverse: Option<Vec<(Symbol, Vec<Symbol>)>>,
    #[serde(default)]
    pub output_inverse: Option<Vec<(Symbol, Vec<Symbol>)>>,
}

impl TransducerSpec {
    pub fn build(&self) -> Result<SymbolTransducer> {
        let fwd_u: BTreeMap<_, _> = self.inputs.iter().cloned().collect();
        let fwd_y: BTreeMap<_, _> = self.outputs.iter().cloned().collect();
        let inv = |given: &Option<Vec<(Symbol, Vec<Symbol>)>>, fwd: &BTreeMap<Symbol, Symbol>| match given {
            Some(rows) => rows.iter().map(|(b, a)| (b.clone(), a.iter().cloned().collect())).collect(),
            None => fibers(fwd),
        };
        let inv_u = inv(&self.input_inverse, &fwd_u);
        let inv_y = inv(&self.output_inverse, &fwd_y);
        SymbolTransducer::new(fwd_u, inv_u, fwd_y, inv_y)
    }
}

/// How symbols of the left system are matched against the right system.
#[derive(Clone, Copy, Debug)]
pub enum Matching<'a> {
    /// Left is the fine system: `u_r = F_u(u_l)` and `y_l ∈ F_y⁻¹(y_r)`.
    Forward(&'a SymbolTransducer),
    /// Left is the coarse system: `u_r ∈ F_u⁻¹(u_l)` and `y_r ∈ F_y⁻¹(y_l)`.
    Reverse(&'a SymbolTransducer),
    /// Plain (identity) comparison; a set-valued symbol matches its members.
    Membership,
}

impl Matching<'_> {
    pub fn inputs(&self, ul: &Symbol, ur: &Symbol) -> bool {
        match self {
            Matching::Forward(f) => f.fwd_u.get(ul) == Some(ur),
            Matching::Reverse(f) => f.inv_u.get(ul).is_some_and(|s| s.contains(ur)),
            Matching::Membership => ul.compatible(ur),
        }
    }

    pub fn outputs(&self, yl: &Symbol, yr: &Symbol) -> bool {
        match self {
            Matching::Forward(f) => f.inv_y.get(yr).is_some_and(|s| s.contains(yl)),
            Matching::Reverse(f) => f.inv_y.get(yl).is_some_and(|s| s.contains(yr)),
            Matching::Membership => yl.compatible(yr),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RelationKind {
    Simulation,
    Alternating,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relation {
    pub pairs: BTreeSet<(usize, usize)>,
}

impl Relation {
    pub fn contains(&self, a: usize, b: usize) -> bool {
        self.pairs.contains(&(a, b))
    }

    pub fn identity(n: usize) -> Self {
        Self { pairs: (0..n).map(|i| (i, i)).collect() }
    }

    pub fn named(&self, left: &Gts, right: &Gts) -> Vec<(String, String)> {
        self.pairs.iter().map(|&(a, b)| (left.states[a].clone(), right.states[b].clone())).collect()
    }
}

/// Per-state edge lists grouped by input index.
fn grouped(s: &Gts) -> Vec<BTreeMap<usize, Vec<Edge>>> {
    (0..s.states.len())
        .map(|x| {
            let mut m: BTreeMap<usize, Vec<Edge>> = BTreeMap::new();
            for e in s.edges_from(x) {
                m.entry(e.input).or_default().push(*e);
            }
            m
        })
        .collect()
}

struct Checker<'a> {
    left: &'a Gts,
    right: &'a Gts,
    lg: Vec<BTreeMap<usize, Vec<Edge>>>,
    rg: Vec<BTreeMap<usize, Vec<Edge>>>,
    input_ok: Vec<Vec<bool>>,
    output_ok: Vec<Vec<bool>>,
    kind: RelationKind,
}

impl<'a> Checker<'a> {
    fn new(left: &'a Gts, right: &'a Gts, m: Matching, kind: RelationKind) -> Self {
        let table = |l: &[Symbol], r: &[Symbol], f: &dyn Fn(&Symbol, &Symbol) -> bool| {
            l.iter().map(|a| r.iter().map(|b| f(a, b)).collect()).collect()
        };
        Self {
            left,
            right,
            lg: grouped(left),
            rg: grouped(right),
            input_ok: table(&left.inputs, &right.inputs, &|a, b| m.inputs(a, b)),
            output_ok: table(&left.outputs, &right.outputs, &|a, b| m.outputs(a, b)),
            kind,
        }
    }

    fn pair_ok(&self, xl: usize, xr: usize, rel: &[Vec<bool>]) -> bool {
        let step_ok = |el: &Edge, er: &Edge| rel[el.to][er.to] && self.output_ok[el.output][er.output];
        self.lg[xl].iter().all(|(&ul, edges_l)| {
            self.rg[xr].iter().any(|(&ur, edges_r)| {
                self.input_ok[ul][ur]
                    && match self.kind {
                        RelationKind::Simulation => edges_l.iter().all(|el| edges_r.iter().any(|er| step_ok(el, er))),
                        RelationKind::Alternating => edges_r.iter().all(|er| edges_l.iter().any(|el| step_ok(el, er))),
                    }
            })
        })
    }

    fn greatest(&self) -> Vec<Vec<bool>> {
        let (nl, nr) = (self.left.states.len(), self.right.states.len());
        let mut rel = vec![vec![true; nr]; nl];
        loop {
            let doomed: Vec<(usize, usize)> = (0..nl)
                .flat_map(|a| (0..nr).map(move |b| (a, b)))
                .filter(|&(a, b)| rel[a][b] && !self.pair_ok(a, b, &rel))
                .collect();
            if doomed.is_empty() {
                return rel;
            }
            for (a, b) in doomed {
                rel[a][b] = false;
            }
        }
    }

    fn initial_ok(&self, rel: &[Vec<bool>]) -> bool {
        self.left.initial.iter().all(|&a| self.right.initial.iter().any(|&b| rel[a][b]))
    }
}

fn to_relation(rel: &[Vec<bool>]) -> Relation {
    let mut pairs = BTreeSet::new();
    for (a, row) in rel.iter().enumerate() {
        for (b, &keep) in row.iter().enumerate() {
            if keep {
                pairs.insert((a, b));
            }
        }
    }
    Relation { pairs }
}

/// Greatest relation satisfying the step condition (ii) of the chosen kind.
pub fn largest_relation(left: &Gts, right: &Gts, m: Matching, kind: RelationKind) -> Relation {
    to_relation(&Checker::new(left, right, m, kind).greatest())
}

/// Greatest relation plus the initial-state condition (i).
pub fn relates(left: &Gts, right: &Gts, m: Matching, kind: RelationKind) -> (bool, Relation) {
    let c = Checker::new(left, right, m, kind);
    let rel = c.greatest();
    (c.initial_ok(&rel), to_relation(&rel))
}

/// Whether a specific relation satisfies both conditions.
pub fn check_relation(left: &Gts, right: &Gts, m: Matching, kind: RelationKind, rel: &Relation) -> bool {
    let c = Checker::new(left, right, m, kind);
    let mut table = vec![vec![false; right.states.len()]; left.states.len()];
    for &(a, b) in &rel.pairs {
        if a >= left.states.len() || b >= right.states.len() {
            return false;
        }
        table[a][b] = true;
    }
    c.initial_ok(&table) && rel.pairs.iter().all(|&(a, b)| c.pair_ok(a, b, &table))
}

pub fn largest_fsim(sa: &Gts, sb: &Gts, f: &SymbolTransducer) -> Relation {
    largest_relation(sa, sb, Matching::Forward(f), RelationKind::Simulation)
}

pub fn holds_fsim(sa: &Gts, sb: &Gts, f: &SymbolTransducer) -> bool {
    relates(sa, sb, Matching::Forward(f), RelationKind::Simulation).0
}

pub fn largest_alt_fsim(sa: &Gts, sb: &Gts, f: &SymbolTransducer) -> Relation {
    largest_relation(sa, sb, Matching::Forward(f), RelationKind::Alternating)
}

pub fn holds_alt_fsim(sa: &Gts, sb: &Gts, f: &SymbolTransducer) -> bool {
    relates(sa, sb, Matching::Forward(f), RelationKind::Alternating).0
}

/// Coarse-to-fine alternating check: `sb` (over the transducer's codomain)
/// alternatingly simulated by `sa` (over its domain).
pub fn holds_alt_fsim_reverse(sb: &Gts, sa: &Gts, f: &SymbolTransducer) -> bool {
    relates(sb, sa, Matching::Reverse(f), RelationKind::Alternating).0
}

pub fn holds_sim(s1: &Gts, s2: &Gts) -> bool {
    relates(s1, s2, Matching::Membership, RelationKind::Simulation).0
}

pub fn holds_alt_sim(s1: &Gts, s2: &Gts) -> bool {
    relates(s1, s2, Matching::Membership, RelationKind::Alternating).0
}

/// Abstraction sandwich `sa ⪯_S sb ⪯_AS sa` through `f`.
pub fn sandwich(sa: &Gts, sb: &Gts, f: &SymbolTransducer) -> bool {
    holds_fsim(sa, sb, f) && holds_alt_fsim_reverse(sb, sa, f)
}

/// Input `u_f` labels `x → x'` whenever some `u ∈ F_u⁻¹(u_f)` does; outputs
/// go through the forward map.
pub fn transduce(s: &Gts, f: &SymbolTransducer) -> Result<Gts> {
    let mut inputs = BTreeSet::new();
    for u in &s.inputs {
        inputs.insert(f.map_u(u)?.clone());
    }
    let mut edges = Vec::with_capacity(s.edges.len());
    for (uf, pre) in &f.inv_u {
        let members: Vec<usize> = pre.iter().filter_map(|a| s.input_index(a).ok()).collect();
        if members.is_empty() {
            continue;
        }
        inputs.insert(uf.clone());
        for e in s.edges.iter().filter(|e| members.contains(&e.input)) {
            edges.push((
                s.states[e.from].clone(),
                uf.clone(),
                f.map_y(&s.outputs[e.output])?.clone(),
                s.states[e.to].clone(),
            ));
        }
    }
    let initial: Vec<String> = s.initial.iter().map(|&i| s.states[i].clone()).collect();
    Gts::from_edges(s.states.clone(), &initial, inputs.into_iter().collect(), edges)
}

/// Set-valued relabelling: input `u` becomes the symbol `F_u⁻¹(u)`, enabled
/// between `x` and `x'` only if every image of that set labels an edge there.
pub fn inverse_transduce(s: &Gts, f: &SymbolTransducer) -> Result<Gts> {
    let mut inputs = BTreeSet::new();
    let mut edges = Vec::new();
    for (ui, u) in s.inputs.iter().enumerate() {
        let pre = f.preimage_u(u)?;
        let image: BTreeSet<usize> = pre
            .iter()
            .map(|a| f.map_u(a).and_then(|b| s.input_index(b)))
            .collect::<Result<_>>()?;
        let set_symbol = Symbol::Set(pre.clone());
        inputs.insert(set_symbol.clone());
        for e in s.edges.iter().filter(|e| e.input == ui) {
            let all = image
                .iter()
                .all(|&v| s.edges_with(e.from, v).any(|g| g.to == e.to));
            if all {
                edges.push((
                    s.states[e.from].clone(),
                    set_symbol.clone(),
                    Symbol::Set(f.preimage_y(&s.outputs[e.output])?.clone()),
                    s.states[e.to].clone(),
                ));
            }
        }
    }
    let initial: Vec<String> = s.initial.iter().map(|&i| s.states[i].clone()).collect();
    Gts::from_edges(s.states.clone(), &initial, inputs.into_iter().collect(), edges)
}

/// `F⁻¹ ∘ F (S)` for a system over the transducer's domain.
pub fn fine_round_trip(s: &Gts, f: &SymbolTransducer) -> Result<Gts> {
    inverse_transduce(&transduce(s, f)?, f)
}

/// `F ∘ F⁻¹ (S)` for a system over the transducer's codomain.
pub fn coarse_round_trip(s: &Gts, f: &SymbolTransducer) -> Result<Gts> {
    let inv = inverse_transduce(s, f)?;
    let lifted = f.lift_to_sets(&inv.inputs, &inv.outputs)?;
    transduce(&inv, &lifted)
}

/// Interconnection tables of an open sequential feedback composition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Interconnection {
    /// Exogenous input alphabet of the composite.
    pub inputs: Vec<Symbol>,
    /// `(stored y₁, y₂) → u₁`.
    pub f_i1: BTreeMap<(Symbol, Symbol), Symbol>,
    /// `(stored y₁, u_c) → u₂`.
    pub f_i2: BTreeMap<(Symbol, Symbol), Symbol>,
    /// `(y₁, y₂) → y_c`.
    pub f_o: BTreeMap<(Symbol, Symbol), Symbol>,
}

impl Interconnection {
    /// Cascade: `S₂` driven by the exogenous input, `S₁` by `S₂`'s output,
    /// composite output is `S₁`'s output.
    pub fn sequential(y1: &[Symbol], y2: &[Symbol], uc: &[Symbol]) -> Self {
        let mut f_i1 = BTreeMap::new();
        let mut f_o = BTreeMap::new();
        for a in y1 {
            for b in y2 {
                f_i1.insert((a.clone(), b.clone()), b.clone());
                f_o.insert((a.clone(), b.clone()), a.clone());
            }
        }
        let f_i2 = y1.iter().flat_map(|a| uc.iter().map(move |u| ((a.clone(), u.clone()), u.clone()))).collect();
        Self { inputs: uc.to_vec(), f_i1, f_i2, f_o }
    }

    /// Closed feedback: `S₁` reads `S₂`'s output, `S₂` reads the stored `y₁`,
    /// composite output is the pair.
    pub fn feedback(y1: &[Symbol], y2: &[Symbol], uc: &[Symbol]) -> Self {
        let mut f_i1 = BTreeMap::new();
        let mut f_o = BTreeMap::new();
        for a in y1 {
            for b in y2 {
                f_i1.insert((a.clone(), b.clone()), b.clone());
                f_o.insert((a.clone(), b.clone()), Symbol::atom(format!("({a},{b})")));
            }
        }
        let f_i2 = y1.iter().flat_map(|a| uc.iter().map(move |u| ((a.clone(), u.clone()), a.clone()))).collect();
        Self { inputs: uc.to_vec(), f_i1, f_i2, f_o }
    }
}

fn lookup<'m>(
    table: &'m BTreeMap<(Symbol, Symbol), Symbol>,
    name: &str,
    a: &Symbol,
    b: &Symbol,
) -> Result<&'m Symbol> {
    table
        .get(&(a.clone(), b.clone()))
        .ok_or_else(|| Error::Domain(format!("interconnection {name} undefined at ({a}, {b})")))
}

/// Open sequential feedback composition over states `X₁ × X₂ × Y₁`.
pub fn compose_open(s1: &Gts, s2: &Gts, ic: &Interconnection) -> Result<Gts> {
    for y1 in &s1.outputs {
        for y2 in &s2.outputs {
            let u1 = lookup(&ic.f_i1, "F_i1", y1, y2)?;
            if s1.inputs.binary_search(u1).is_err() {
                return Err(Error::Domain(format!("F_i1 yields {u1}, not an input of the first system")));
            }
            lookup(&ic.f_o, "F_o", y1, y2)?;
        }
        for uc in &ic.inputs {
            let u2 = lookup(&ic.f_i2, "F_i2", y1, uc)?;
            if s2.inputs.binary_search(u2).is_err() {
                return Err(Error::Domain(format!("F_i2 yields {u2}, not an input of the second system")));
            }
        }
    }
    let ny = s1.outputs.len();
    let n2 = s2.states.len();
    let id = |x1: usize, x2: usize, y: usize| (x1 * n2 + x2) * ny + y;
    let mut states = Vec::with_capacity(s1.states.len() * n2 * ny);
    for x1 in &s1.states {
        for x2 in &s2.states {
            for y in &s1.outputs {
                states.push(format!("({x1},{x2},{y})"));
            }
        }
    }
    let mut initial = Vec::new();
    for &a in &s1.initial {
        for &b in &s2.initial {
            for y in 0..ny {
                initial.push(states[id(a, b, y)].clone());
            }
        }
    }
    let mut edges = Vec::new();
    for x1 in 0..s1.states.len() {
        for x2 in 0..n2 {
            for y in 0..ny {
                let stored = &s1.outputs[y];
                for uc in &ic.inputs {
                    let u2 = s2.input_index(lookup(&ic.f_i2, "F_i2", stored, uc)?)?;
                    for e2 in s2.edges_with(x2, u2) {
                        let y2 = &s2.outputs[e2.output];
                        let u1 = s1.input_index(lookup(&ic.f_i1, "F_i1", stored, y2)?)?;
                        for e1 in s1.edges_with(x1, u1) {
                            edges.push((
                                states[id(x1, x2, y)].clone(),
                                uc.clone(),
                                lookup(&ic.f_o, "F_o", &s1.outputs[e1.output], y2)?.clone(),
                                states[id(e1.to, e2.to, e1.output)].clone(),
                            ));
                        }
                    }
                }
            }
        }
    }
    Gts::from_edges(states, &initial, ic.inputs.clone(), edges)
}
