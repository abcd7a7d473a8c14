//! Lasso semantics against a direct recursive reading and unrolling.

use lcc_core::logic::{eval_lasso, parse_ltl, LassoWord, Letter, Ltl};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{ensure, rng, Outcome};

const ATOMS: [&str; 3] = ["p", "q", "r"];

pub fn random_formula(r: &mut ChaCha8Rng, depth: usize) -> Ltl {
    if depth == 0 || r.gen_bool(0.25) {
        return if r.gen_bool(0.1) { Ltl::True } else { Ltl::atom(ATOMS[r.gen_range(0..3)]) };
    }
    let d = depth - 1;
    match r.gen_range(0..4) {
        0 => Ltl::not(random_formula(r, d)),
        1 => Ltl::and(random_formula(r, d), random_formula(r, d)),
        2 => Ltl::next(random_formula(r, d)),
        _ => Ltl::until(random_formula(r, d), random_formula(r, d)),
    }
}

fn random_letter(r: &mut ChaCha8Rng) -> Letter {
    ATOMS.iter().filter(|_| r.gen_bool(0.5)).map(|s| s.to_string()).collect()
}

/// Prefix and loop with at most six letters in total.
pub fn random_lasso(r: &mut ChaCha8Rng) -> LassoWord {
    let cycle_len = r.gen_range(1..=6);
    let prefix_len = r.gen_range(0..=6 - cycle_len);
    let prefix = (0..prefix_len).map(|_| random_letter(r)).collect();
    let cycle = (0..cycle_len).map(|_| random_letter(r)).collect();
    LassoWord::new(prefix, cycle).unwrap()
}

/// Truth at absolute position `i`; an until witness, if any, lies within
/// one prefix-plus-loop span of `i`.
pub fn holds_at(phi: &Ltl, w: &LassoWord, i: usize) -> bool {
    let span = w.prefix.len() + w.cycle.len();
    match phi {
        Ltl::True => true,
        Ltl::Atom(p) => w.letter(i).contains(p),
        Ltl::Not(a) => !holds_at(a, w, i),
        Ltl::And(a, b) => holds_at(a, w, i) && holds_at(b, w, i),
        Ltl::Next(a) => holds_at(a, w, i + 1),
        Ltl::Until(a, b) => (i..=i + span).find(|&j| holds_at(b, w, j)).is_some_and(|j| (i..j).all(|k| holds_at(a, w, k))),
    }
}

fn unrollings(w: &LassoWord) -> Vec<LassoWord> {
    let mut longer_prefix = w.prefix.clone();
    longer_prefix.extend(w.cycle.iter().cloned());
    let mut doubled = w.cycle.clone();
    doubled.extend(w.cycle.iter().cloned());
    let mut rotated_prefix = w.prefix.clone();
    rotated_prefix.push(w.cycle[0].clone());
    let mut rotated = w.cycle[1..].to_vec();
    rotated.push(w.cycle[0].clone());
    vec![
        LassoWord::new(longer_prefix, w.cycle.clone()).unwrap(),
        LassoWord::new(w.prefix.clone(), doubled).unwrap(),
        LassoWord::new(rotated_prefix, rotated).unwrap(),
    ]
}

pub fn lasso_semantics(cases: u64) -> Outcome {
    let mut truths = 0;
    for seed in 0..cases {
        let mut r = rng(70_000 + seed);
        let depth = r.gen_range(1..=4);
        let phi = random_formula(&mut r, depth);
        let w = random_lasso(&mut r);
        let v = eval_lasso(&phi, &w);
        ensure(v == holds_at(&phi, &w, 0), || format!("{phi} on seed {seed} disagrees with the direct reading"))?;
        for u in unrollings(&w) {
            ensure(eval_lasso(&phi, &u) == v, || format!("{phi} on seed {seed} changes under unrolling"))?;
        }
        truths += v as usize;
    }
    Ok(format!("{cases} instances, {truths} true"))
}

/// The patrol `(base recharge gather recharge)^ω` meets the case-study
/// mission; skipping recharge or touching danger does not.
pub fn patrol_word(ltl: &str) -> Outcome {
    let phi = parse_ltl(ltl).map_err(|e| e.to_string())?;
    let word = |atoms: &[&str]| -> Result<LassoWord, String> {
        let cycle = atoms.iter().map(|a| std::iter::once(a.to_string()).collect()).collect();
        LassoWord::new(vec![], cycle).map_err(|e| e.to_string())
    };
    ensure(eval_lasso(&phi, &word(&["base", "recharge", "gather", "recharge"])?), || "patrol word rejected".into())?;
    ensure(!eval_lasso(&phi, &word(&["base", "gather"])?), || "word without recharge accepted".into())?;
    ensure(!eval_lasso(&phi, &word(&["base", "danger", "gather", "recharge"])?), || "word through danger accepted".into())?;
    Ok("patrol accepted, skip and danger rejected".into())
}
