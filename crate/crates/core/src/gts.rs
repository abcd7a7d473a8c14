//! Finite generalized labeled transition systems with outputs on transitions.
//!
//! Each edge stores its own output symbol, so two edges between the same
//! states under the same input may emit different outputs. Set-valued symbols
//! (produced by inverse transducers) are first-class values of [`Symbol`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Symbol {
    Atom(String),
    Set(BTreeSet<Symbol>),
}

impl Symbol {
    pub fn atom(s: impl Into<String>) -> Self {
        Symbol::Atom(s.into())
    }

    pub fn set<I: IntoIterator<Item = Symbol>>(items: I) -> Self {
        Symbol::Set(items.into_iter().collect())
    }

    pub fn payload(&self) -> Option<&BTreeSet<Symbol>> {
        match self {
            Symbol::Set(s) => Some(s),
            Symbol::Atom(_) => None,
        }
    }

    /// `p` equals `q`, or one of them is a set holding the other.
    pub fn compatible(&self, other: &Symbol) -> bool {
        self == other
            || self.payload().is_some_and(|s| s.contains(other))
            || other.payload().is_some_and(|s| s.contains(self))
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Symbol::Atom(s) => write!(f, "{s}"),
            Symbol::Set(items) => {
                write!(f, "{{")?;
                for (i, s) in items.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{s}")?;
                }
                write!(f, "}}")
            }
        }
    }
}

/// Indices into the owning system's state, input and output tables.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub from: usize,
    pub input: usize,
    pub output: usize,
    pub to: usize,
}

/// Input and output alphabets are kept sorted; edges are sorted and unique.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Gts {
    pub states: Vec<String>,
    pub initial: Vec<usize>,
    pub inputs: Vec<Symbol>,
    pub outputs: Vec<Symbol>,
    pub edges: Vec<Edge>,
    out: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Behaviour {
    pub inputs: Vec<Symbol>,
    pub outputs: Vec<Symbol>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Classification {
    pub deterministic: bool,
    pub blocking: bool,
    pub open: bool,
}

/// Named edge `(from, input, output, to)` used by builders and the file format.
pub type NamedEdge = (String, Symbol, Symbol, String);

impl Gts {
    /// Builds a system from named parts. Inputs listed in `inputs` may be
    /// disabled everywhere; inputs and outputs used by edges are added.
    pub fn from_edges(
        states: Vec<String>,
        initial: &[String],
        inputs: Vec<Symbol>,
        edges: Vec<NamedEdge>,
    ) -> Result<Self> {
        let index: BTreeMap<&str, usize> = states.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        if index.len() != states.len() {
            return Err(Error::Domain("duplicate state names".into()));
        }
        let find = |s: &str| index.get(s).copied().ok_or_else(|| Error::Domain(format!("unknown state {s}")));
        let init = initial.iter().map(|s| find(s)).collect::<Result<Vec<_>>>()?;
        let mut ins: BTreeSet<Symbol> = inputs.into_iter().collect();
        let mut outs: BTreeSet<Symbol> = BTreeSet::new();
        for (_, u, y, _) in &edges {
            ins.insert(u.clone());
            outs.insert(y.clone());
        }
        let ins: Vec<Symbol> = ins.into_iter().collect();
        let outs: Vec<Symbol> = outs.into_iter().collect();
        let mut raw = Vec::with_capacity(edges.len());
        for (x, u, y, x2) in &edges {
            raw.push(Edge {
                from: find(x)?,
                input: ins.binary_search(u).expect("input collected above"),
                output: outs.binary_search(y).expect("output collected above"),
                to: find(x2)?,
            });
        }
        Self::new(states, init, ins, outs, raw)
    }

    pub fn new(
        states: Vec<String>,
        mut initial: Vec<usize>,
        inputs: Vec<Symbol>,
        outputs: Vec<Symbol>,
        mut edges: Vec<Edge>,
    ) -> Result<Self> {
        let n = states.len();
        if initial.iter().any(|&i| i >= n) {
            return Err(Error::Domain("initial state out of range".into()));
        }
        if inputs.windows(2).any(|w| w[0] >= w[1]) || outputs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Domain("alphabets must be sorted and duplicate-free".into()));
        }
        for e in &edges {
            if e.from >= n || e.to >= n || e.input >= inputs.len() || e.output >= outputs.len() {
                return Err(Error::Domain(format!("edge {e:?} refers outside the system")));
            }
        }
        initial.sort_unstable();
        initial.dedup();
        edges.sort_unstable();
        edges.dedup();
        let mut out = vec![Vec::new(); n];
        for (i, e) in edges.iter().enumerate() {
            out[e.from].push(i);
        }
        Ok(Self { states, initial, inputs, outputs, edges, out })
    }

    pub fn state_index(&self, name: &str) -> Result<usize> {
        self.states
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| Error::Domain(format!("unknown state {name}")))
    }

    pub fn input_index(&self, u: &Symbol) -> Result<usize> {
        self.inputs.binary_search(u).map_err(|_| Error::Domain(format!("unknown input {u}")))
    }

    pub fn edges_from(&self, x: usize) -> impl Iterator<Item = &Edge> + '_ {
        self.out[x].iter().map(move |&i| &self.edges[i])
    }

    pub fn edges_with(&self, x: usize, u: usize) -> impl Iterator<Item = &Edge> + '_ {
        self.edges_from(x).filter(move |e| e.input == u)
    }

    pub fn post(&self, x: usize, u: usize) -> Result<BTreeSet<usize>> {
        self.check_state(x)?;
        if u >= self.inputs.len() {
            return Err(Error::Domain(format!("input index {u} out of range")));
        }
        Ok(self.edges_with(x, u).map(|e| e.to).collect())
    }

    pub fn enabled(&self, x: usize) -> Result<BTreeSet<usize>> {
        self.check_state(x)?;
        Ok(self.edges_from(x).map(|e| e.input).collect())
    }

    /// Deterministic means one edge per enabled `(x, u)`, which also pins the output.
    pub fn classify(&self) -> Classification {
        let mut deterministic = true;
        let mut blocking = false;
        for x in 0..self.states.len() {
            let mut count: BTreeMap<usize, usize> = BTreeMap::new();
            for e in self.edges_from(x) {
                *count.entry(e.input).or_default() += 1;
            }
            if count.is_empty() {
                blocking = true;
            }
            if count.values().any(|&c| c != 1) {
                deterministic = false;
            }
        }
        Classification { deterministic, blocking, open: self.inputs.len() > 1 }
    }

    /// Every behaviour of length at most `k` witnessed from an initial state.
    pub fn behaviours_up_to(&self, k: usize, cap: usize) -> Result<BTreeSet<Behaviour>> {
        let size = self.states.len() * self.inputs.len();
        if size > cap {
            return Err(Error::Resource(format!("|X|·|U| = {size} exceeds cap {cap}")));
        }
        let mut all = BTreeSet::new();
        let empty = Behaviour { inputs: Vec::new(), outputs: Vec::new() };
        let mut frontier: BTreeSet<(usize, Behaviour)> =
            self.initial.iter().map(|&x| (x, empty.clone())).collect();
        if !frontier.is_empty() {
            all.insert(empty);
        }
        for _ in 0..k {
            let mut next = BTreeSet::new();
            for (x, b) in &frontier {
                for e in self.edges_from(*x) {
                    let mut nb = b.clone();
                    nb.inputs.push(self.inputs[e.input].clone());
                    nb.outputs.push(self.outputs[e.output].clone());
                    next.insert((e.to, nb));
                }
            }
            if next.len() > cap.saturating_mul(cap) {
                return Err(Error::Resource(format!("{} partial runs exceed the enumeration cap", next.len())));
            }
            all.extend(next.iter().map(|(_, b)| b.clone()));
            frontier = next;
        }
        Ok(all)
    }

    pub fn named_edges(&self) -> Vec<NamedEdge> {
        self.edges
            .iter()
            .map(|e| {
                (
                    self.states[e.from].clone(),
                    self.inputs[e.input].clone(),
                    self.outputs[e.output].clone(),
                    self.states[e.to].clone(),
                )
            })
            .collect()
    }

    fn check_state(&self, x: usize) -> Result<()> {
        if x >= self.states.len() {
            return Err(Error::Domain(format!("state index {x} out of range")));
        }
        Ok(())
    }
}

/// File format: `transitions` rows are `[from, input, output, to]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GtsSpec {
    pub states: Vec<String>,
    pub initial: Vec<String>,
    #[serde(default)]
    pub inputs: Vec<Symbol>,
    pub transitions: Vec<(String, Symbol, Symbol, String)>,
}

impl GtsSpec {
    pub fn build(&self) -> Result<Gts> {
        Gts::from_edges(self.states.clone(), &self.initial, self.inputs.clone(), self.transitions.clone())
    }

    pub fn from_gts(s: &Gts) -> Self {
        Self {
            states: s.states.clone(),
            initial: s.initial.iter().map(|&i| s.states[i].clone()).collect(),
            inputs: s.inputs.clone(),
            transitions: s.named_edges(),
        }
    }
}
