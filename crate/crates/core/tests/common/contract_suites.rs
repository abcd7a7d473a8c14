//! Contract algebra laws on random explicit-set contracts.

use lcc_core::contracts::{AgContract, Assertion};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{ensure, rng, Outcome};

pub fn random_assertion(r: &mut ChaCha8Rng, universe: usize) -> Assertion {
    let p = r.gen_range(0.0..=1.0);
    Assertion::new(universe, (0..universe).filter(|_| r.gen_bool(p)).collect()).unwrap()
}

pub fn random_contract(r: &mut ChaCha8Rng, universe: usize) -> AgContract {
    AgContract::new(random_assertion(r, universe), random_assertion(r, universe)).unwrap()
}

/// Every subset of a universe of at most 8 elements.
fn all_assertions(universe: usize) -> impl Iterator<Item = Assertion> {
    (0u32..1 << universe).map(move |m| Assertion::new(universe, (0..universe).filter(|i| m >> i & 1 == 1).collect()).unwrap())
}

pub fn algebra_laws(cases: u64) -> Outcome {
    for seed in 0..cases {
        let mut r = rng(60_000 + seed);
        let n = r.gen_range(1..=6);
        let (c1, c2, c3) = (random_contract(&mut r, n), random_contract(&mut r, n), random_contract(&mut r, n));
        let s = c1.saturate();
        ensure(s.saturate() == s, || format!("saturation not idempotent at seed {seed}"))?;
        ensure(s.is_saturated(), || format!("saturated form not saturated at seed {seed}"))?;
        for m in all_assertions(n) {
            ensure(c1.implemented_by(&m) == s.implemented_by(&m), || format!("implementations changed at seed {seed}"))?;
        }
        let c12 = c1.compose(&c2).unwrap();
        ensure(c12 == c2.compose(&c1).unwrap(), || format!("composition not commutative at seed {seed}"))?;
        let left = c12.compose(&c3).unwrap();
        let right = c1.compose(&c2.compose(&c3).unwrap()).unwrap();
        ensure(left == right, || format!("composition not associative at seed {seed}"))?;
        ensure(c12.is_saturated(), || format!("composite not saturated at seed {seed}"))?;
    }
    Ok(format!("{cases} contract triples"))
}
