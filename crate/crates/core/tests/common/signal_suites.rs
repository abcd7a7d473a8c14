//! Proper-inverse laws of the sampler, quantizer and eventifier.

use lcc_core::geometry::Polytope;
use lcc_core::signals::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{ensure, random_word, rng, Outcome};

fn random_samples(r: &mut ChaCha8Rng, n: usize, dim: usize) -> DiscreteSignal {
    DiscreteSignal::new((0..n).map(|_| (0..dim).map(|_| r.gen_range(-5.0..5.0)).collect()).collect()).unwrap()
}

/// Per-sample values vanishing on the sample grid, bounded by `bound`.
fn off_grid_noise(r: &mut ChaCha8Rng, len: usize, steps: usize, dim: usize, bound: f64) -> Vec<Vec<f64>> {
    (0..len)
        .map(|i| {
            (0..dim).map(|_| if i % steps == 0 { 0.0 } else { r.gen_range(-bound..=bound) }).collect()
        })
        .collect()
}

fn add(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    a.iter().zip(b).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + q).collect()).collect()
}

/// Interpolants are in the inverse of their samples for any ε, δ ≥ 0, and
/// interpolant-plus-perturbation traces are in the inverse of their own samples.
pub fn sampler_laws(cases: u64) -> Outcome {
    for seed in 0..cases {
        let mut r = rng(10_000 + seed);
        let dt = [0.1, 0.05, 0.01][r.gen_range(0..3)];
        let steps = r.gen_range(1..=10);
        let period = steps as f64 * dt;
        let dim = r.gen_range(1..=3);
        let n = r.gen_range(1..=8);
        let xd = random_samples(&mut r, n, dim);
        let p = SamplerParams { period, epsilon: r.gen_range(0.0..0.5), delta: r.gen_range(0.0..0.5) };
        let interp = interpolate_linear(&xd, period, dt).unwrap();
        ensure(sample(&interp, period).unwrap() == xd, || format!("sampling the interpolant changed it at seed {seed}"))?;
        ensure(inverse_sampler_contains(&interp, &xd, &p).unwrap(), || format!("interpolant rejected at seed {seed}"))?;

        // e at samples within ε, w off the grid within δ (shrunk against rounding)
        let e = DiscreteSignal::new(
            (0..xd.len()).map(|_| (0..dim).map(|_| r.gen_range(-1.0..=1.0) * 0.999 * p.epsilon).collect()).collect(),
        )
        .unwrap();
        let shifted = add(&interp.values, &interpolate_linear(&e, period, dt).unwrap().values);
        let w = off_grid_noise(&mut r, shifted.len(), steps, dim, 0.999 * p.delta);
        let x = DenseTrace::new(add(&shifted, &w), dt, 0.0).unwrap();
        let xs = sample(&x, period).unwrap();
        ensure(inverse_sampler_contains(&x, &xs, &p).unwrap(), || format!("perturbed trace rejected at seed {seed}"))?;
    }
    Ok(format!("{cases} cases"))
}

/// Axis-aligned strip partition of `[0, w] × [0, 1]` with random cut points.
pub fn strips(r: &mut ChaCha8Rng) -> (Partition, Vec<f64>) {
    let n = r.gen_range(1..=4);
    let mut cuts: Vec<f64> = (0..n - 1).map(|_| r.gen_range(0.1..3.9)).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| (*a - *b).abs() < 0.05);
    let mut edges = vec![0.0];
    edges.extend(cuts);
    edges.push(4.0);
    let cells = edges
        .windows(2)
        .enumerate()
        .map(|(i, w)| Cell {
            symbol: format!("c{i}"),
            region: Polytope::from_box(&[w[0], 0.0], &[w[1], 1.0]).unwrap(),
            representative: vec![0.5 * (w[0] + w[1]), 0.5],
        })
        .collect();
    (Partition::new(cells).unwrap(), edges)
}

/// Lowest strip whose closed interval holds `x`, by direct comparison.
pub fn strip_oracle(edges: &[f64], x: &[f64]) -> Option<usize> {
    if !(0.0..=1.0).contains(&x[1]) {
        return None;
    }
    edges.windows(2).position(|w| w[0] <= x[0] && x[0] <= w[1])
}

pub fn quantizer_laws(cases: u64) -> Outcome {
    for seed in 0..cases {
        let mut r = rng(20_000 + seed);
        let (partition, edges) = strips(&mut r);
        let n = r.gen_range(1..=10);
        let points: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                if r.gen_bool(0.2) {
                    vec![edges[r.gen_range(0..edges.len())], r.gen_range(0.0..=1.0)]
                } else {
                    vec![r.gen_range(0.0..=4.0), r.gen_range(0.0..=1.0)]
                }
            })
            .collect();
        let xd = DiscreteSignal::new(points.clone()).unwrap();
        let word = quantize(&xd, &partition).unwrap();
        for (k, x) in points.iter().enumerate() {
            let expected = strip_oracle(&edges, x).map(|i| format!("c{i}"));
            ensure(expected.as_ref() == Some(&word[k]), || format!("point {k} misfiled at seed {seed}"))?;
        }
        ensure(inverse_quantize_contains(&xd, &word, &partition).unwrap(), || format!("own word rejected at seed {seed}"))?;
        let reps = partition.representatives(&word).unwrap();
        ensure(quantize(&reps, &partition).unwrap() == word, || format!("representatives misfiled at seed {seed}"))?;
    }
    Ok(format!("{cases} cases"))
}

fn longest_run<T: PartialEq>(w: &[T]) -> usize {
    let (mut best, mut run) = (0, 0);
    for (i, s) in w.iter().enumerate() {
        run = if i > 0 && w[i - 1] == *s { run + 1 } else { 1 };
        best = best.max(run);
    }
    best
}

pub fn eventifier_laws(cases: u64) -> Outcome {
    for seed in 0..cases {
        let mut r = rng(30_000 + seed);
        let len = r.gen_range(1..=30);
        let stay = r.gen_range(0.0..0.9);
        let w = random_word(&mut r, len, &['a', 'b', 'c'], stay);
        let e = eventify(&w).unwrap();
        ensure(eventify(&e).unwrap() == e, || format!("not idempotent at seed {seed}"))?;
        ensure(e.windows(2).all(|p| p[0] != p[1]), || format!("repeated symbol at seed {seed}"))?;
        let l = longest_run(&w);
        ensure(inverse_eventify_contains(&w, &e, l).unwrap(), || format!("bound {l} rejected at seed {seed}"))?;
        if l > 1 {
            // the longest run already spans l - 1 steps without a change
            ensure(!inverse_eventify_contains(&w, &e, l - 1).unwrap(), || format!("bound {} accepted at seed {seed}", l - 1))?;
        }
    }
    Ok(format!("{cases} cases"))
}
