//! End-to-end run of the case study with its acceptance checks.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use lcc_core::pipeline::*;

use super::{ensure, Outcome};

pub const ATOMS: [&str; 6] = ["P1", "P2", "P3", "M1", "M2", "MPC"];
pub const MIN_LOOPS: usize = 3;
pub const RUNTIME_CAP: Duration = Duration::from_secs(300);

/// Fresh scratch directory under the system temp dir.
pub fn scratch(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("lcc-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).expect("scratch directory");
    dir
}

/// Default scenario: every atom holds over at least three loops, a rerun is
/// bit-identical, and re-monitoring the emitted CSV gives the same verdicts.
pub fn end_to_end() -> Outcome {
    let started = Instant::now();
    let sc = Scenario::default_with(&[]).map_err(|e| e.to_string())?;
    ensure(sc.mpc.horizon == 30, || format!("horizon {}", sc.mpc.horizon))?;
    let delta = 3.0 / 32.0 * sc.alpha * sc.mpc.period * sc.mpc.dv_max;
    ensure(sc.delta() == delta, || format!("delta {} vs {delta}", sc.delta()))?;
    let (syn, out) = run(&sc).map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    let report = &out.report;
    ensure(report.aborted.is_none(), || format!("aborted: {:?}", report.aborted))?;
    for atom in ATOMS {
        let v = report.atoms.get(atom).ok_or_else(|| format!("atom {atom} missing"))?;
        ensure(v.holds(), || format!("{atom}: {:?} {}", v.status, v.detail))?;
    }
    ensure(report.composed.holds, || "composed verdict false".into())?;
    ensure(report.stats.loops_completed >= MIN_LOOPS, || format!("{} loops", report.stats.loops_completed))?;
    ensure(elapsed < RUNTIME_CAP, || format!("run took {elapsed:?}"))?;

    let (_, again) = run(&sc).map_err(|e| e.to_string())?;
    ensure(again.rows == out.rows, || "rerun produced a different trace".into())?;
    let (a, b) = (serde_json::to_string(&again.report).unwrap(), serde_json::to_string(report).unwrap());
    ensure(a == b, || "rerun produced a different report".into())?;

    let dir = scratch("e2e");
    let csv = dir.join("trace.csv");
    write_trace(&csv, &out.rows).map_err(|e| e.to_string())?;
    let rows = read_trace(&csv).map_err(|e| e.to_string())?;
    let _ = std::fs::remove_dir_all(&dir);
    ensure(rows == out.rows, || "CSV round trip changed the trace".into())?;
    let (offline, _) = evaluate(&sc, &syn, &rows).map_err(|e| e.to_string())?;
    for (atom, v) in &offline {
        ensure(report.atoms.get(atom) == Some(v), || format!("{atom}: offline verdict differs"))?;
    }
    Ok(format!(
        "{} loops, {} periods, P1 {:.3e} ≤ {:.3e}, gap {} ≤ {}, M1 {:.1e}, {:.1} s per run",
        report.stats.loops_completed,
        report.stats.periods,
        report.stats.max_p1_deviation,
        report.stats.p1_bound,
        report.stats.max_inter_event_gap,
        sc.mpc.horizon,
        report.stats.max_m1_error,
        elapsed.as_secs_f64()
    ))
}
