//! Signal containers and the interface transducers between layers: periodic
//! sampling, linear interpolation, quantization over a polytopic partition and
//! eventification, each with the membership test of its set-valued inverse.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Polytope;

/// Relative slack when testing that a period is an integer multiple of `dt`.
const ALIGN_TOL: f64 = 1e-9;

/// Uniformly gridded continuous-time signal; `values[i]` is the value at `t0 + i·dt`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseTrace {
    pub values: Vec<Vec<f64>>,
    pub dt: f64,
    pub t0: f64,
}

impl DenseTrace {
    pub fn new(values: Vec<Vec<f64>>, dt: f64, t0: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::Domain(format!("grid step must be positive, got {dt}")));
        }
        check_uniform(&values)?;
        Ok(Self { values, dt, t0 })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.values.first().map(|v| v.len()).unwrap_or(0)
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteSignal {
    pub values: Vec<Vec<f64>>,
}

impl DiscreteSignal {
    pub fn new(values: Vec<Vec<f64>>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Domain("discrete signal must be nonempty".into()));
        }
        check_uniform(&values)?;
        Ok(Self { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerParams {
    pub period: f64,
    pub epsilon: f64,
    pub delta: f64,
}

fn check_uniform(values: &[Vec<f64>]) -> Result<()> {
    if let Some(first) = values.first() {
        let n = first.len();
        for (i, v) in values.iter().enumerate() {
            if v.len() != n {
                return Err(Error::Domain(format!("sample {i} has dimension {} (expected {n})", v.len())));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Domain(format!("sample {i} is not finite")));
            }
        }
    }
    Ok(())
}

/// Number of grid steps per period; errors unless `period / dt` is a positive integer.
pub fn steps_per_period(period: f64, dt: f64) -> Result<usize> {
    if !(period > 0.0) || !(dt > 0.0) {
        return Err(Error::Alignment(format!("period {period} and step {dt} must be positive")));
    }
    let ratio = period / dt;
    let r = ratio.round();
    if r < 1.0 || (ratio - r).abs() > ALIGN_TOL * ratio.max(1.0) {
        return Err(Error::Alignment(format!("period {period} is not a multiple of grid step {dt}")));
    }
    Ok(r as usize)
}

fn inf_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn sample(x: &DenseTrace, period: f64) -> Result<DiscreteSignal> {
    if x.is_empty() {
        return Err(Error::Domain("cannot sample an empty trace".into()));
    }
    let r = steps_per_period(period, x.dt)?;
    Ok(DiscreteSignal { values: x.values.iter().step_by(r).cloned().collect() })
}

/// Piecewise-affine interpolant on `[0, (n-1)T]`; a single sample is held
/// constant on `[0, T)`.
pub fn interpolate_linear(xd: &DiscreteSignal, period: f64, dt: f64) -> Result<DenseTrace> {
    let r = steps_per_period(period, dt)?;
    let n = xd.len();
    if n == 0 {
        return Err(Error::Domain("cannot interpolate an empty signal".into()));
    }
    if n == 1 {
        return DenseTrace::new(vec![xd.values[0].clone(); r], dt, 0.0);
    }
    let mut values = Vec::with_capacity((n - 1) * r + 1);
    for k in 0..n - 1 {
        let (a, b) = (&xd.values[k], &xd.values[k + 1]);
        for i in 0..r {
            let s = i as f64 / r as f64;
            values.push(a.iter().zip(b).map(|(p, q)| p + s * (q - p)).collect());
        }
    }
    values.push(xd.values[n - 1].clone());
    DenseTrace::new(values, dt, 0.0)
}

/// Membership of `x` in the (ε,δ)-T inverse sampler image of `xd`.
pub fn inverse_sampler_contains(x: &DenseTrace, xd: &DiscreteSignal, p: &SamplerParams) -> Result<bool> {
    if x.dim() != xd.dim() {
        return Err(Error::Domain(format!("trace dimension {} vs samples {}", x.dim(), xd.dim())));
    }
    let r = steps_per_period(p.period, x.dt)?;
    let interp = interpolate_linear(xd, p.period, x.dt)?;
    if x.len() < interp.len() {
        return Err(Error::Domain(format!(
            "trace has {} grid points but the interpolation horizon needs {}",
            x.len(),
            interp.len()
        )));
    }
    let dense_ok = interp.values.iter().zip(&x.values).all(|(a, b)| inf_dist(a, b) <= p.delta);
    let sample_ok = xd.values.iter().enumerate().all(|(k, v)| inf_dist(&x.values[k * r], v) <= p.epsilon);
    Ok(dense_ok && sample_ok)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub symbol: String,
    pub region: Polytope,
    pub representative: Vec<f64>,
}

/// Interior-disjoint polytopic cells; ties on shared facets go to the lowest index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub cells: Vec<Cell>,
}

impl Partition {
    pub fn new(cells: Vec<Cell>) -> Result<Self> {
        if cells.is_empty() {
            return Err(Error::Domain("partition needs at least one cell".into()));
        }
        let dim = cells[0].region.dim;
        for (i, c) in cells.iter().enumerate() {
            if c.region.dim != dim || c.representative.len() != dim {
                return Err(Error::Domain(format!("cell {i} ({}) has inconsistent dimension", c.symbol)));
            }
            if !c.region.contains(&c.representative) {
                return Err(Error::Domain(format!("representative of cell {} lies outside it", c.symbol)));
            }
            if cells[..i].iter().any(|d| d.symbol == c.symbol) {
                return Err(Error::Domain(format!("duplicate cell symbol {}", c.symbol)));
            }
        }
        for i in 0..cells.len() {
            for j in i + 1..cells.len() {
                let both = cells[i].region.intersect(&cells[j].region);
                if let Ok((_, radius)) = both.chebyshev_center() {
                    if radius > 1e-7 {
                        return Err(Error::Domain(format!(
                            "cells {} and {} overlap in their interiors",
                            cells[i].symbol, cells[j].symbol
                        )));
                    }
                }
            }
        }
        Ok(Self { cells })
    }

    pub fn dim(&self) -> usize {
        self.cells[0].region.dim
    }

    pub fn index_of(&self, symbol: &str) -> Option<usize> {
        self.cells.iter().position(|c| c.symbol == symbol)
    }

    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        self.cells.iter().position(|c| c.region.contains(x))
    }

    pub fn representatives(&self, word: &[String]) -> Result<DiscreteSignal> {
        let values = word
            .iter()
            .map(|s| {
                self.index_of(s)
                    .map(|i| self.cells[i].representative.clone())
                    .ok_or_else(|| Error::Domain(format!("unknown cell symbol {s}")))
            })
            .collect::<Result<Vec<_>>>()?;
        DiscreteSignal::new(values)
    }
}

pub fn quantize(xd: &DiscreteSignal, partition: &Partition) -> Result<Vec<String>> {
    xd.values
        .iter()
        .enumerate()
        .map(|(k, x)| {
            partition
                .locate(x)
                .map(|i| partition.cells[i].symbol.clone())
                .ok_or(Error::Coverage { index: k })
        })
        .collect()
}

pub fn inverse_quantize_contains(xd: &DiscreteSignal, xq: &[String], partition: &Partition) -> Result<bool> {
    if xd.len() != xq.len() {
        return Err(Error::Domain(format!("{} samples vs {} symbols", xd.len(), xq.len())));
    }
    for (x, s) in xd.values.iter().zip(xq) {
        let i = partition.index_of(s).ok_or_else(|| Error::Domain(format!("unknown cell symbol {s}")))?;
        if !partition.cells[i].region.contains(x) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// First symbol, then every symbol that differs from its predecessor.
pub fn eventify<T: PartialEq + Clone>(word: &[T]) -> Result<Vec<T>> {
    let first = word.first().ok_or_else(|| Error::Domain("cannot eventify an empty word".into()))?;
    let mut out = vec![first.clone()];
    for s in &word[1..] {
        if out.last() != Some(s) {
            out.push(s.clone());
        }
    }
    Ok(out)
}

/// Positions with fewer than `l` successors in the finite word are exempt
/// from the change-within-`l` requirement.
pub fn inverse_eventify_contains<T: PartialEq + Clone>(xq: &[T], xe: &[T], l: usize) -> Result<bool> {
    if l == 0 {
        return Err(Error::Domain("eventifier bound must be positive".into()));
    }
    if xe.is_empty() {
        return Err(Error::Domain("event word must be nonempty".into()));
    }
    if eventify(xq)? != xe {
        return Ok(false);
    }
    Ok(first_slow_position(xq, l).is_none())
}

/// First position `k` with at least `l` successors and no change within `l` steps.
pub fn first_slow_position<T: PartialEq>(xq: &[T], l: usize) -> Option<usize> {
    (0..xq.len())
        .take_while(|k| k + l < xq.len())
        .find(|&k| (1..=l).all(|r| xq[k + r] == xq[k]))
}
