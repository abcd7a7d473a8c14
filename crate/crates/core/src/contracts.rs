//! Assume/guarantee contracts over explicit finite universes and the layered
//! contract chain, whose universe is the set of truth valuations of the
//! per-layer model and property atoms.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Universes above this many atoms are refused (2^k valuations).
pub const MAX_ATOMS: usize = 20;
/// Name of the trivially true atom.
pub const TOP: &str = "true";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assertion {
    pub universe: usize,
    pub members: BTreeSet<usize>,
}

impl Assertion {
    pub fn new(universe: usize, members: BTreeSet<usize>) -> Result<Self> {
        if let Some(&m) = members.iter().next_back() {
            if m >= universe {
                return Err(Error::Domain(format!("member {m} outside universe of size {universe}")));
            }
        }
        Ok(Self { universe, members })
    }

    pub fn all(universe: usize) -> Self {
        Self { universe, members: (0..universe).collect() }
    }

    pub fn none(universe: usize) -> Self {
        Self { universe, members: BTreeSet::new() }
    }

    pub fn complement(&self) -> Self {
        Self { universe: self.universe, members: (0..self.universe).filter(|i| !self.members.contains(i)).collect() }
    }

    pub fn union(&self, other: &Self) -> Self {
        Self { universe: self.universe, members: self.members.union(&other.members).copied().collect() }
    }

    pub fn meet(&self, other: &Self) -> Self {
        Self { universe: self.universe, members: self.members.intersection(&other.members).copied().collect() }
    }

    pub fn is_subset(&self, other: &Self) -> bool {
        self.members.is_subset(&other.members)
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgContract {
    pub assumptions: Assertion,
    pub guarantees: Assertion,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Consistency {
    pub consistent: bool,
    pub compatible: bool,
}

impl AgContract {
    pub fn new(assumptions: Assertion, guarantees: Assertion) -> Result<Self> {
        if assumptions.universe != guarantees.universe {
            return Err(Error::Domain("assumptions and guarantees live in different universes".into()));
        }
        Ok(Self { assumptions, guarantees })
    }

    pub fn universe(&self) -> usize {
        self.assumptions.universe
    }

    /// `G ∪ ¬A`; the implementation set is unchanged.
    pub fn saturate(&self) -> Self {
        Self {
            assumptions: self.assumptions.clone(),
            guarantees: self.guarantees.union(&self.assumptions.complement()),
        }
    }

    pub fn is_saturated(&self) -> bool {
        self.assumptions.union(&self.guarantees).members.len() == self.universe()
    }

    /// `M` implements the contract iff `A ∩ M ⊆ G`.
    pub fn implemented_by(&self, m: &Assertion) -> bool {
        self.assumptions.meet(m).is_subset(&self.guarantees)
    }

    /// Composition of the saturated forms: `(A₁∩A₂ ∪ ¬(G₁∩G₂), G₁∩G₂)`.
    pub fn compose(&self, other: &Self) -> Result<Self> {
        if self.universe() != other.universe() {
            return Err(Error::Domain("cannot compose contracts over different universes".into()));
        }
        let (c1, c2) = (self.saturate(), other.saturate());
        let g = c1.guarantees.meet(&c2.guarantees);
        let a = c1.assumptions.meet(&c2.assumptions).union(&g.complement());
        Ok(Self { assumptions: a, guarantees: g })
    }

    pub fn consistency(&self) -> Consistency {
        let s = self.saturate();
        Consistency { consistent: !s.guarantees.is_empty(), compatible: !s.assumptions.is_empty() }
    }

    /// Saturated refinement: weaker assumptions and stronger guarantees.
    pub fn refines(&self, other: &Self) -> bool {
        let (a, b) = (self.saturate(), other.saturate());
        b.assumptions.is_subset(&a.assumptions) && a.guarantees.is_subset(&b.guarantees)
    }
}

/// One layer of the template: assumes the model claim from below and the
/// property demanded from above, guarantees its own model claim and property.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerContract {
    pub model_below: String,
    pub prop_above: String,
    pub model_here: String,
    pub prop_here: String,
}

/// Composed chain: the contract itself over atom valuations plus the atom
/// lists making up the system-wide assumption and guarantee.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComposedChain {
    pub atoms: Vec<String>,
    pub contract: AgContract,
    pub assumption_atoms: Vec<String>,
    pub guarantee_atoms: Vec<String>,
    /// Controller composition order, bottom-up: `S̃₁ = S₁‖Π₁`, then `S̃ᵢ₊₁ = Fᵢ(S̃ᵢ)‖Πᵢ₊₁`.
    pub recipe: Vec<String>,
}

impl ComposedChain {
    /// Valuation index of a truth assignment (bit `i` is atom `i`).
    pub fn valuation(&self, truth: &dyn Fn(&str) -> bool) -> usize {
        self.atoms.iter().enumerate().filter(|(_, a)| truth(a)).map(|(i, _)| 1usize << i).sum()
    }

    /// Valuations where every listed atom holds.
    pub fn conjunction(&self, names: &[String]) -> Assertion {
        conjunction(&self.atoms, names)
    }
}

fn conjunction(atoms: &[String], names: &[String]) -> Assertion {
    let mask: usize = names
        .iter()
        .filter(|n| n.as_str() != TOP)
        .map(|n| 1usize << atoms.iter().position(|a| a == n).expect("atom registered"))
        .sum();
    let universe = 1usize << atoms.len();
    Assertion { universe, members: (0..universe).filter(|v| v & mask == mask).collect() }
}

/// Left fold of composition over the saturated per-layer contracts.
pub fn compose_layers(chain: &[LayerContract]) -> Result<ComposedChain> {
    let n = chain.len();
    if n == 0 {
        return Err(Error::Validation("empty layer chain".into()));
    }
    let top = &chain[n - 1];
    if top.model_here != TOP || top.prop_above != TOP {
        return Err(Error::Validation(format!(
            "layer {n}: the top layer must guarantee model `{TOP}` and assume property `{TOP}`"
        )));
    }
    for i in 0..n - 1 {
        if chain[i].prop_above != chain[i + 1].prop_here {
            return Err(Error::Validation(format!(
                "layer {}: assumes property {} but layer {} guarantees {}",
                i + 1,
                chain[i].prop_above,
                i + 2,
                chain[i + 1].prop_here
            )));
        }
        if chain[i + 1].model_below != chain[i].model_here {
            return Err(Error::Validation(format!(
                "layer {}: assumes model {} but layer {} guarantees {}",
                i + 2,
                chain[i + 1].model_below,
                i + 1,
                chain[i].model_here
            )));
        }
    }
    let mut atoms: Vec<String> = Vec::new();
    let mut add = |s: &String| {
        if s != TOP && !atoms.contains(s) {
            atoms.push(s.clone());
        }
    };
    add(&chain[0].model_below);
    for l in chain {
        add(&l.model_here);
    }
    for l in chain {
        add(&l.prop_here);
    }
    if atoms.len() > MAX_ATOMS {
        return Err(Error::Resource(format!("{} atoms exceed the cap of {MAX_ATOMS}", atoms.len())));
    }
    let mut folded: Option<AgContract> = None;
    for l in chain {
        let c = AgContract {
            assumptions: conjunction(&atoms, &[l.model_below.clone(), l.prop_above.clone()]),
            guarantees: conjunction(&atoms, &[l.model_here.clone(), l.prop_here.clone()]),
        }
        .saturate();
        folded = Some(match folded {
            None => c,
            Some(acc) => acc.compose(&c)?,
        });
    }
    let guarantee_atoms = chain
        .iter()
        .map(|l| l.model_here.clone())
        .filter(|m| m != TOP)
        .chain(chain.iter().map(|l| l.prop_here.clone()))
        .collect();
    let recipe = (1..=n)
        .map(|i| if i == 1 { "S~1 = S1 || Pi1".to_string() } else { format!("S~{i} = F{}(S~{}) || Pi{i}", i - 1, i - 1) })
        .collect();
    Ok(ComposedChain {
        contract: folded.expect("nonempty chain"),
        assumption_atoms: vec![chain[0].model_below.clone()],
        guarantee_atoms,
        recipe,
        atoms,
    })
}

/// The template chain `A_i = M_{i-1} ∧ P_{i+1}`, `G_i = M_i ∧ P_i` with
/// `M_0 = S1`, `M_N = ⊤` and `P_{N+1} = ⊤`.
pub fn template_chain(n: usize) -> Vec<LayerContract> {
    (1..=n)
        .map(|i| LayerContract {
            model_below: if i == 1 { "S1".into() } else { format!("M{}", i - 1) },
            prop_above: if i == n { TOP.into() } else { format!("P{}", i + 1) },
            model_here: if i == n { TOP.into() } else { format!("M{i}") },
            prop_here: format!("P{i}"),
        })
        .collect()
}
