//! `lcc`: run the layered case study, synthesize its sets and plan, or check
//! a transducer-mediated relation between two finite systems.
//!
//! Exit status: 0 when the run's composed verdict (or the checked relation)
//! holds, 1 when it does not, 2 on any error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lcc_core::gts::{Gts, GtsSpec};
use lcc_core::pipeline::{self, Scenario};
use lcc_core::relations::{self, TransducerSpec};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "lcc", version, about = "Layered control toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario JSON file; the built-in default scenario when omitted.
    scenario: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Seed of the initial-state perturbation.
    #[arg(long)]
    seed: Option<u64>,
    /// Override a scenario value by dotted path, e.g. `mpc.horizon=25`.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    /// Transducer-mediated simulation.
    Fsim,
    /// Transducer-mediated alternating simulation.
    AltFsim,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize and execute the closed loop; writes trace.csv, sets.json and report.json.
    Run(ScenarioArgs),
    /// Synthesize invariant sets, the restricted FSM and the plan; writes sets.json.
    Synth(ScenarioArgs),
    /// Compute invariant and backward reachable sets only; writes sets.json.
    InvariantSets(ScenarioArgs),
    /// Decide whether system A is related to system B through a transducer; writes report.json.
    CheckRelations {
        /// Fine system (JSON transition table).
        a: PathBuf,
        /// Coarse system over the transducer's codomain.
        b: PathBuf,
        /// Transducer table.
        transducer: PathBuf,
        #[arg(long, value_enum, default_value = "fsim")]
        kind: Kind,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

type Fallible<T> = Result<T, String>;

fn load_scenario(args: &ScenarioArgs) -> Fallible<Scenario> {
    let mut overrides = args
        .overrides
        .iter()
        .map(|o| pipeline::parse_override(o).map_err(|e| e.to_string()))
        .collect::<Fallible<Vec<_>>>()?;
    if let Some(seed) = args.seed {
        overrides.push(("seed".into(), seed.to_string()));
    }
    let sc = match &args.scenario {
        Some(path) => Scenario::load(path, &overrides),
        None => Scenario::default_with(&overrides),
    };
    sc.map_err(|e| e.to_string())
}

fn out_dir(dir: &Path) -> Fallible<()> {
    std::fs::create_dir_all(dir).map_err(|e| format!("{}: {e}", dir.display()))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Fallible<()> {
    let path = dir.join(name);
    pipeline::write_json(&path, value).map_err(|e| format!("{}: {e}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn run(args: &ScenarioArgs) -> Fallible<bool> {
    let sc = load_scenario(args)?;
    let (syn, outcome) = pipeline::run(&sc).map_err(|e| e.to_string())?;
    out_dir(&args.out)?;
    let trace = args.out.join("trace.csv");
    pipeline::write_trace(&trace, &outcome.rows).map_err(|e| format!("{}: {e}", trace.display()))?;
    println!("wrote {}", trace.display());
    write_json(&args.out, "sets.json", &pipeline::sets_doc(&sc, &syn).map_err(|e| e.to_string())?)?;
    let report = &outcome.report;
    write_json(&args.out, "report.json", report)?;
    for (atom, v) in &report.atoms {
        let mark = if v.holds() { "ok  " } else { "FAIL" };
        println!("{mark} {atom:<4} {}", v.detail);
    }
    if let Some(why) = &report.aborted {
        println!("aborted: {why}");
    }
    println!(
        "composed verdict: {} ({} loops, {} periods)",
        if report.composed.holds { "holds" } else { "violated" },
        report.stats.loops_completed,
        report.stats.periods
    );
    Ok(report.composed.holds)
}

fn synth(args: &ScenarioArgs) -> Fallible<bool> {
    let sc = load_scenario(args)?;
    let syn = pipeline::synthesize(&sc).map_err(|e| e.to_string())?;
    out_dir(&args.out)?;
    write_json(&args.out, "sets.json", &pipeline::sets_doc(&sc, &syn).map_err(|e| e.to_string())?)?;
    let feasible = syn.sets.transitions.iter().filter(|t| t.feasible).count();
    println!("{feasible} of {} directed transitions feasible", syn.sets.transitions.len());
    let (prefix, cycle) = syn.plan.cells();
    println!("plan: {} ({})^ω", prefix.join(" "), cycle.join(" "));
    Ok(true)
}

fn invariant_sets(args: &ScenarioArgs) -> Fallible<bool> {
    let sc = load_scenario(args)?;
    let sets = pipeline::synthesize_sets(&sc).map_err(|e| e.to_string())?;
    out_dir(&args.out)?;
    write_json(&args.out, "sets.json", &pipeline::geometry_doc(&sc, &sets).map_err(|e| e.to_string())?)?;
    for (cell, c) in &sets.invariant {
        println!("{cell:<16} {:>3} facets, {:>3} iterations", c.rows(), sets.invariant_iterations[cell]);
    }
    for t in &sets.transitions {
        println!("{} -> {}: {}", t.from, t.to, if t.feasible { "feasible".to_string() } else { format!("infeasible (gap {:.3e})", t.gap) });
    }
    Ok(true)
}

#[derive(Serialize)]
struct RelationReport {
    kind: &'static str,
    holds: bool,
    /// Largest relation as (state of A, state of B) pairs.
    relation: Vec<(String, String)>,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Fallible<T> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

fn load_gts(path: &Path) -> Fallible<Gts> {
    read_json::<GtsSpec>(path)?.build().map_err(|e| format!("{}: {e}", path.display()))
}

fn check_relations(a: &Path, b: &Path, transducer: &Path, kind: Kind, out: &Path) -> Fallible<bool> {
    let (sa, sb) = (load_gts(a)?, load_gts(b)?);
    let f = read_json::<TransducerSpec>(transducer)?.build().map_err(|e| format!("{}: {e}", transducer.display()))?;
    let (name, holds, rel) = match kind {
        Kind::Fsim => ("fsim", relations::holds_fsim(&sa, &sb, &f), relations::largest_fsim(&sa, &sb, &f)),
        Kind::AltFsim => ("alt-fsim", relations::holds_alt_fsim(&sa, &sb, &f), relations::largest_alt_fsim(&sa, &sb, &f)),
    };
    out_dir(out)?;
    write_json(out, "report.json", &RelationReport { kind: name, holds, relation: rel.named(&sa, &sb) })?;
    println!("{name}: {}", if holds { "holds" } else { "does not hold" });
    Ok(holds)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(args) => run(args),
        Command::Synth(args) => synth(args),
        Command::InvariantSets(args) => invariant_sets(args),
        Command::CheckRelations { a, b, transducer, kind, out } => check_relations(a, b, transducer, *kind, out),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
