//! Seeded generators shared by the integration suites.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use lcc_core::gts::{Gts, Symbol};
use lcc_core::relations::SymbolTransducer;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub mod signal_suites;
pub mod contract_suites;
pub mod logic_suites;
pub mod vehicle_suites;
pub mod pipeline_suites;

/// Detail line on success, first counterexample on failure.
pub type Outcome = std::result::Result<String, String>;

pub fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn alphabet(prefix: &str, n: usize) -> Vec<Symbol> {
    (0..n).map(|i| Symbol::atom(format!("{prefix}{i}"))).collect()
}

/// Between 1 and `max_states` states; each `(x, u, x')` is present with
/// probability `p`, output drawn uniformly.
pub fn random_gts(r: &mut ChaCha8Rng, max_states: usize, inputs: &[Symbol], outputs: &[Symbol], p: f64) -> Gts {
    let nx = r.gen_range(1..=max_states);
    let states: Vec<String> = (0..nx).map(|i| format!("x{i}")).collect();
    let mut initial: Vec<String> = states.iter().filter(|_| r.gen_bool(0.5)).cloned().collect();
    if initial.is_empty() {
        initial.push(states[r.gen_range(0..nx)].clone());
    }
    let mut edges = Vec::new();
    for x in &states {
        for u in inputs {
            for x2 in &states {
                if r.gen_bool(p) {
                    let y = outputs.choose(r).expect("nonempty output alphabet").clone();
                    edges.push((x.clone(), u.clone(), y, x2.clone()));
                }
            }
        }
    }
    Gts::from_edges(states, &initial, inputs.to_vec(), edges).expect("well-formed random system")
}

/// Surjective map onto `nb` fresh symbols (`nb ≤ domain.len()`).
fn surjection(r: &mut ChaCha8Rng, domain: &[Symbol], prefix: &str, nb: usize) -> BTreeMap<Symbol, Symbol> {
    let codomain = alphabet(prefix, nb);
    let mut order: Vec<usize> = (0..domain.len()).collect();
    order.shuffle(r);
    let mut m = BTreeMap::new();
    for (k, &i) in order.iter().enumerate() {
        let b = if k < nb { codomain[k].clone() } else { codomain.choose(r).expect("nonempty").clone() };
        m.insert(domain[i].clone(), b);
    }
    m
}

/// Fibre of each image plus, with probability `loose`, extra domain symbols.
fn inverse(r: &mut ChaCha8Rng, fwd: &BTreeMap<Symbol, Symbol>, loose: f64) -> BTreeMap<Symbol, BTreeSet<Symbol>> {
    let mut inv: BTreeMap<Symbol, BTreeSet<Symbol>> = BTreeMap::new();
    for (a, b) in fwd {
        inv.entry(b.clone()).or_default().insert(a.clone());
    }
    for set in inv.values_mut() {
        for a in fwd.keys() {
            if r.gen_bool(loose) {
                set.insert(a.clone());
            }
        }
    }
    inv
}

pub struct RandomTransducer {
    pub f: SymbolTransducer,
    pub inputs: Vec<Symbol>,
    pub outputs: Vec<Symbol>,
}

/// Random proper transducer from the given alphabets onto fresh codomains.
pub fn random_transducer(
    r: &mut ChaCha8Rng,
    ua: &[Symbol],
    ya: &[Symbol],
    tag: &str,
    loose: f64,
) -> RandomTransducer {
    let nu = r.gen_range(1..=ua.len());
    let ny = r.gen_range(1..=ya.len());
    let fu = surjection(r, ua, &format!("{tag}u"), nu);
    let fy = surjection(r, ya, &format!("{tag}y"), ny);
    let iu = inverse(r, &fu, loose);
    let iy = inverse(r, &fy, loose);
    RandomTransducer {
        f: SymbolTransducer::new(fu, iu, fy, iy).expect("constructed inverses are proper"),
        inputs: alphabet(&format!("{tag}u"), nu),
        outputs: alphabet(&format!("{tag}y"), ny),
    }
}

pub fn random_word(r: &mut ChaCha8Rng, len: usize, symbols: &[char], stay: f64) -> Vec<char> {
    let mut w = vec![*symbols.choose(r).expect("nonempty")];
    while w.len() < len {
        let last = *w.last().expect("nonempty");
        w.push(if r.gen_bool(stay) { last } else { *symbols.choose(r).expect("nonempty") });
    }
    w
}
