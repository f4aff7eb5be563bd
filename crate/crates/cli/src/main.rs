use clap::{Args, Parser, Subcommand, ValueEnum};
use respgraph::budget::Budget;
use respgraph::combinatorics::{maximal_cliques_capped, maximal_independent_sets_capped, SetKind, VertexSetCollection};
use respgraph::graph::{build_graph, ResponseGraph};
use respgraph::inequalities::{
    compare_models, filter_redundant, levelk_inequalities, mis_inequalities, serialize, IneqKind, Inequality,
    DEFAULT_MAX_COMBINATION,
};
use respgraph::inference::{
    power_csv, power_curve, run_test, simulate_monotonicity, simulate_pm, B0Law, Dataset, Design, Method,
    PowerOptions, Studentization, TestOptions,
};
use respgraph::levelk::{plausibly_nonredundant_sets, LevelKOptions};
use respgraph::model::{load_spec, ModelSpec, SupportMatrix};
use respgraph::polytope::{membership, sharpness_crosscheck, ProbabilityVector};
use respgraph::regularity::{check_clique_correspondence_capped, check_perfect, RegularityReport};
use respgraph::{Error, Result};
use serde_json::{json, Value};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const ARTIFACT_SCHEMA_VERSION: u64 = 1;

#[derive(Parser, Debug)]
#[command(name = "respgraph", version, about = "Testable implications of support restrictions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    global: Global,
}

#[derive(Args, Debug, Clone)]
struct Global {
    /// Output file (stdout when omitted).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Worker threads for parallel sections.
    #[arg(long, global = true, env = "RG_THREADS")]
    threads: Option<usize>,
    /// Wall-clock budget for graph searches, in milliseconds.
    #[arg(long = "time-budget-ms", global = true)]
    time_budget_ms: Option<u64>,
    /// Cap on enumerated sets (MISs, cliques, level-k sets).
    #[arg(long = "max-sets", global = true, default_value_t = respgraph::combinatorics::DEFAULT_MAX_SETS)]
    max_sets: usize,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Format {
    Json,
    Text,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum MethodArg {
    Lf,
    Gms,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum StudentizationArg {
    /// Rescale each bootstrap draw by its own σ̂*.
    Bootstrap,
    /// Rescale by the sample σ̂.
    Sample,
}

impl From<StudentizationArg> for Studentization {
    fn from(s: StudentizationArg) -> Studentization {
        match s {
            StudentizationArg::Bootstrap => Studentization::Bootstrap,
            StudentizationArg::Sample => Studentization::Sample,
        }
    }
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::Lf => Method::LeastFavorable,
            MethodArg::Gms => Method::Gms,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the potential response graph and report diagnostics.
    Build(ModelArg),
    /// Enumerate maximal independent sets.
    Mis(ModelArg),
    /// Enumerate maximal cliques.
    Cliques(ModelArg),
    /// Check perfectness and the clique/type correspondence.
    Regularity(ModelArg),
    /// Emit moment inequalities.
    Inequalities(InequalitiesArgs),
    /// Compare a model with a weaker model on the same layout.
    Compare(CompareArgs),
    /// Decide whether a probability vector is generated by the model.
    Membership(MembershipArgs),
    /// Cross-check the inequalities against the LP oracle on random points.
    Crosscheck(CrosscheckArgs),
    /// Test the model's inequalities on data.
    Test(TestArgs),
    /// Generate a dataset from a Monte Carlo design.
    Simulate(SimulateArgs),
    /// Rejection frequencies over a grid of h.
    Power(PowerArgs),
}

#[derive(Args, Debug)]
struct ModelArg {
    #[arg(long)]
    model: PathBuf,
}

#[derive(Args, Debug)]
struct InequalitiesArgs {
    #[arg(long)]
    model: PathBuf,
    /// Add level-k inequalities when the model is not regular.
    #[arg(long)]
    sharp: bool,
    #[arg(long = "filter-redundant")]
    filter_redundant: bool,
    /// Largest number of inequalities combined by the redundancy filter.
    #[arg(long = "max-combination", default_value_t = DEFAULT_MAX_COMBINATION)]
    max_combination: usize,
}

#[derive(Args, Debug)]
struct CompareArgs {
    #[arg(long)]
    model: PathBuf,
    /// The weaker model, whose types include every type of --model.
    #[arg(long)]
    weaker: PathBuf,
}

#[derive(Args, Debug)]
struct MembershipArgs {
    #[arg(long)]
    model: PathBuf,
    /// JSON file: a list in vertex order, or an object {z: {r: p}}.
    #[arg(long)]
    beta: PathBuf,
}

#[derive(Args, Debug)]
struct CrosscheckArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct TestArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long = "B", default_value_t = 1000)]
    b: usize,
    #[arg(long, value_enum, default_value_t = MethodArg::Gms)]
    method: MethodArg,
    #[arg(long, value_enum, default_value_t = StudentizationArg::Bootstrap)]
    studentization: StudentizationArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Ignore covariates and test the pooled inequalities.
    #[arg(long)]
    unconditional: bool,
    #[arg(long)]
    sharp: bool,
    /// Exit with status 3 when the null is rejected.
    #[arg(long = "exit-on-reject")]
    exit_on_reject: bool,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(subcommand)]
    design: DesignCmd,
}

#[derive(Subcommand, Debug, Clone)]
enum DesignCmd {
    /// Binary threshold design for partial monotonicity (writes CSV with columns z, r, W).
    Pm(PmParams),
    /// Multiple thresholds design for monotonicity (writes CSV with columns z, r).
    Monotonicity(MonoParams),
}

#[derive(Args, Debug, Clone)]
struct PmParams {
    #[arg(long, default_value_t = 0.0)]
    delta: f64,
    #[arg(long, default_value_t = 0.0)]
    gamma: f64,
    #[arg(long, default_value_t = 1.0)]
    h: f64,
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Power only: drop the covariate W.
    #[arg(long)]
    unconditional: bool,
}

#[derive(Args, Debug, Clone)]
struct MonoParams {
    #[arg(long, default_value_t = 3)]
    j: usize,
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long, default_value_t = 1.0)]
    h: f64,
    #[arg(long, default_value_t = 200)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Constant intercept B0.
    #[arg(long, default_value_t = 0.0)]
    b0: f64,
}

#[derive(Args, Debug)]
struct PowerArgs {
    #[command(subcommand)]
    design: DesignCmd,
    /// Comma-separated h values.
    #[arg(long, global = true, default_value = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1")]
    grid: String,
    #[arg(long, global = true, default_value_t = 1000)]
    sims: usize,
    #[arg(long, global = true, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long = "B", global = true, default_value_t = 500)]
    b: usize,
    #[arg(long, global = true, value_enum, default_value_t = MethodArg::Gms)]
    method: MethodArg,
    #[arg(long, global = true, value_enum, default_value_t = StudentizationArg::Bootstrap)]
    studentization: StudentizationArg,
}

enum Output {
    Json(Value),
    Text(String),
    Csv(String),
}

struct Outcome {
    output: Output,
    code: u8,
}

impl Outcome {
    fn ok(output: Output) -> Self {
        Outcome { output, code: 0 }
    }
}

fn artifact(command: &str, config: Value, result: Value) -> Value {
    json!({
        "schema_version": ARTIFACT_SCHEMA_VERSION,
        "command": command,
        "config": config,
        "result": result,
    })
}

fn budget(g: &Global) -> Budget {
    Budget::from_option(g.time_budget_ms)
}

fn load(path: &Path) -> Result<(ModelSpec, ResponseGraph, SupportMatrix)> {
    let spec = load_spec(path)?;
    let (g, m) = build_graph(&spec)?;
    Ok((spec, g, m))
}

fn sets_json(c: &VertexSetCollection, g: &ResponseGraph, spec: &ModelSpec) -> Value {
    let parts: Vec<Vec<usize>> = g.parts().iter().map(|p| p.to_vec()).collect();
    let sets: Vec<Value> = c
        .sets
        .iter()
        .zip(c.labelled(g, Some(spec)))
        .map(|(s, labels)| {
            json!({
                "vertices": s,
                "cells": labels.iter().map(|(z, r)| json!({"z": z, "r": r})).collect::<Vec<_>>(),
                "trivial": c.kind == SetKind::Mis && parts.contains(s),
            })
        })
        .collect();
    json!({"kind": c.kind, "count": c.len(), "sets": sets})
}

fn sets_text(c: &VertexSetCollection, g: &ResponseGraph, spec: &ModelSpec) -> String {
    let mut s = String::new();
    for (i, labels) in c.labelled(g, Some(spec)).iter().enumerate() {
        let cells: Vec<String> = labels.iter().map(|(z, r)| format!("[z={z} r={r}]")).collect();
        let _ = writeln!(s, "{:>4}: {}", i + 1, cells.join(" "));
    }
    s
}

fn cmd_build(a: &ModelArg, g_opts: &Global) -> Result<Outcome> {
    let (spec, g, m) = load(&a.model)?;
    let sizes: Vec<usize> = (0..g.k()).map(|k| g.part(k).len()).collect();
    let result = json!({
        "model": spec.name,
        "parts": g.k(),
        "part_sizes": sizes,
        "vertices": g.n(),
        "edges": g.edge_count(),
        "support_points": m.n_cols(),
        "k_partite": g.is_k_partite(),
        "graph": g.to_json(Some(&spec)),
    });
    Ok(Outcome::ok(match g_opts.format {
        Format::Json => Output::Json(artifact("build", json!({"model": a.model}), result)),
        Format::Text => Output::Text(format!(
            "model {}\nparts {} (sizes {:?})\nvertices {}\nedges {}\nsupport points {}\n",
            spec.name,
            g.k(),
            sizes,
            g.n(),
            g.edge_count(),
            m.n_cols()
        )),
    }))
}

fn cmd_sets(a: &ModelArg, g_opts: &Global, cliques: bool) -> Result<Outcome> {
    let (spec, g, _) = load(&a.model)?;
    let c = if cliques {
        maximal_cliques_capped(&g, g_opts.max_sets)?
    } else {
        maximal_independent_sets_capped(&g, g_opts.max_sets)?
    };
    let name = if cliques { "cliques" } else { "mis" };
    let parts: Vec<Vec<usize>> = g.parts().iter().map(|p| p.to_vec()).collect();
    let nontrivial = c.sets.iter().filter(|s| !parts.contains(s)).count();
    Ok(Outcome::ok(match g_opts.format {
        Format::Json => {
            let mut r = sets_json(&c, &g, &spec);
            if !cliques {
                r["nontrivial"] = json!(nontrivial);
            }
            Output::Json(artifact(name, json!({"model": a.model, "max_sets": g_opts.max_sets}), r))
        }
        Format::Text => {
            let head = if cliques {
                format!("{} maximal cliques\n", c.len())
            } else {
                format!("{} maximal independent sets ({} nontrivial)\n", c.len(), nontrivial)
            };
            Output::Text(head + &sets_text(&c, &g, &spec))
        }
    }))
}

fn regularity(g: &ResponseGraph, m: &SupportMatrix, g_opts: &Global) -> Result<RegularityReport> {
    let (is_perfect, perfectness_witness) = check_perfect(g, &budget(g_opts))?;
    let (cliques_match, clique_witnesses) = check_clique_correspondence_capped(g, m, g_opts.max_sets)?;
    Ok(RegularityReport {
        is_perfect,
        perfectness_witness,
        cliques_match,
        clique_witnesses,
        regular: is_perfect && cliques_match,
        graph_method: g.provenance(),
    })
}

fn cmd_regularity(a: &ModelArg, g_opts: &Global) -> Result<Outcome> {
    let (spec, g, m) = load(&a.model)?;
    let r = regularity(&g, &m, g_opts)?;
    Ok(Outcome::ok(match g_opts.format {
        Format::Json => Output::Json(artifact(
            "regularity",
            json!({"model": a.model, "time_budget_ms": g_opts.time_budget_ms}),
            r.to_json(&g, Some(&spec)),
        )),
        Format::Text => {
            let mut s = format!("regular {}\nperfect {}\ncliques match types {}\n", r.regular, r.is_perfect, r.cliques_match);
            if let Some(w) = &r.perfectness_witness {
                let cyc: Vec<String> = w
                    .cycle
                    .iter()
                    .map(|&v| {
                        let c = g.cell(v);
                        format!("[z={} r={}]", spec.inputs[c.part], spec.responses[c.part][c.resp])
                    })
                    .collect();
                let where_ = if w.in_complement { "complement" } else { "graph" };
                let _ = writeln!(s, "odd hole in {where_}: {}", cyc.join(" - "));
            }
            Output::Text(s)
        }
    }))
}

fn inequality_list(spec: &ModelSpec, ineqs: &[Inequality]) -> String {
    let mut s = String::new();
    for i in ineqs {
        let tag = match i.kind {
            IneqKind::Mis => "mis",
            IneqKind::LevelK => "level",
            IneqKind::Part => "part",
        };
        let _ = writeln!(s, "[{tag}] {}", i.pretty(spec));
    }
    s
}

fn cmd_inequalities(a: &InequalitiesArgs, g_opts: &Global) -> Result<Outcome> {
    let (spec, g, m) = load(&a.model)?;
    let mis = maximal_independent_sets_capped(&g, g_opts.max_sets)?;
    let mut ineqs = mis_inequalities(&g, &mis);
    let mut dropped = Vec::new();
    if a.filter_redundant {
        let out = filter_redundant(&ineqs, &g, a.max_combination);
        ineqs = out.kept;
        dropped = out.dropped;
    }
    let mut regular = None;
    if a.sharp {
        let r = regularity(&g, &m, g_opts)?;
        regular = Some(r.regular);
        if !r.regular {
            let opts = LevelKOptions {
                max_sets: g_opts.max_sets,
                budget: budget(g_opts),
                ..LevelKOptions::default()
            };
            let sets = plausibly_nonredundant_sets(&g, &m, &opts)?;
            ineqs.extend(levelk_inequalities(&g, &sets.sets));
        }
    }
    ineqs.sort();
    Ok(Outcome::ok(match g_opts.format {
        Format::Json => {
            let doc: Value = serde_json::from_str(&serialize(&ineqs, &spec))?;
            let dropped_doc: Value = serde_json::from_str(&serialize(&dropped, &spec))?;
            Output::Json(artifact(
                "inequalities",
                json!({"model": a.model, "sharp": a.sharp, "filter_redundant": a.filter_redundant,
                       "max_combination": a.max_combination}),
                json!({
                    "regular": regular,
                    "inequalities": doc,
                    "dropped": dropped_doc["inequalities"],
                }),
            ))
        }
        Format::Text => {
            let mut s = inequality_list(&spec, &ineqs);
            if !dropped.is_empty() {
                s.push_str("redundant:\n");
                s.push_str(&inequality_list(&spec, &dropped));
            }
            Output::Text(s)
        }
    }))
}

fn cmd_compare(a: &CompareArgs, g_opts: &Global) -> Result<Outcome> {
    let s1 = load_spec(&a.model)?;
    let s2 = load_spec(&a.weaker)?;
    let rep = compare_models(&s1, &s2)?;
    Ok(Outcome::ok(match g_opts.format {
        Format::Json => Output::Json(artifact(
            "compare",
            json!({"model": a.model, "weaker": a.weaker}),
            rep.to_json(&s1),
        )),
        Format::Text => {
            let mut s = String::from("new:\n");
            s.push_str(&inequality_list(&s1, &rep.new));
            let (same, tight): (Vec<_>, Vec<_>) = rep.tightened.iter().partition(|(_, _, added)| added.is_empty());
            s.push_str("tightened:\n");
            for (i, _, added) in tight {
                let _ = writeln!(s, "{} (adds {} terms)", i.pretty(&s1), added.len());
            }
            s.push_str("unchanged:\n");
            for (i, _, _) in same {
                let _ = writeln!(s, "{}", i.pretty(&s1));
            }
            Output::Text(s)
        }
    }))
}

fn read_beta(path: &Path, spec: &ModelSpec) -> Result<ProbabilityVector> {
    let v: Value = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    let v = v.get("beta").cloned().unwrap_or(v);
    let offsets = spec.offsets();
    let values = match &v {
        Value::Array(a) => a
            .iter()
            .map(|x| x.as_f64().ok_or_else(|| Error::InvalidData("beta entries must be numbers".into())))
            .collect::<Result<Vec<f64>>>()?,
        Value::Object(o) => {
            let mut out = vec![0.0; *offsets.last().unwrap()];
            for (z, rs) in o {
                let part = spec
                    .input_index(z)
                    .ok_or_else(|| Error::InvalidData(format!("unknown input `{z}`")))?;
                let rs = rs
                    .as_object()
                    .ok_or_else(|| Error::InvalidData(format!("beta for `{z}` must be an object")))?;
                for (r, p) in rs {
                    let resp = spec
                        .response_index(part, r)
                        .ok_or_else(|| Error::InvalidData(format!("unknown response `{r}` at `{z}`")))?;
                    out[offsets[part] + resp] = p
                        .as_f64()
                        .ok_or_else(|| Error::InvalidData("beta entries must be numbers".into()))?;
                }
            }
            out
        }
        _ => return Err(Error::InvalidData("beta must be a list or an object".into())),
    };
    ProbabilityVector::new(offsets, values)
}

fn cmd_membership(a: &MembershipArgs, g_opts: &Global) -> Result<Outcome> {
    let (spec, _, m) = load(&a.model)?;
    let beta = read_beta(&a.beta, &spec)?;
    let r = membership(&m, &beta)?;
    Ok(Outcome::ok(match g_opts.format {
        Format::Json => Output::Json(artifact(
            "membership",
            json!({"model": a.model, "beta": a.beta}),
            serde_json::to_value(&r)?,
        )),
        Format::Text => Output::Text(format!("{:?} (phase-one infeasibility {:.3e})\n", r.verdict, r.infeasibility)),
    }))
}

fn cmd_crosscheck(a: &CrosscheckArgs, g_opts: &Global) -> Result<Outcome> {
    let spec = load_spec(&a.model)?;
    let r = sharpness_crosscheck(&spec, a.trials, a.seed)?;
    Ok(Outcome::ok(match g_opts.format {
        Format::Json => Output::Json(artifact(
            "crosscheck",
            json!({"model": a.model, "trials": a.trials, "seed": a.seed}),
            serde_json::to_value(&r)?,
        )),
        Format::Text => {
            let mut s = format!(
                "regular {}\nsoundness failures {}/{}\n",
                r.regular, r.soundness.failures, r.soundness.trials
            );
            if let Some(b) = &r.sharpness_regular {
                let _ = writeln!(s, "sharpness failures {}/{} (indeterminate {})", b.failures, b.trials, b.indeterminate);
            }
            if let Some(b) = &r.sharpness_nonregular {
                let _ = writeln!(
                    s,
                    "escapees {}/{} infeasible (trials {}, indeterminate {})",
                    b.failures, r.infeasible_seen, b.trials, b.indeterminate
                );
            }
            Output::Text(s)
        }
    }))
}

fn cmd_test(a: &TestArgs, g_opts: &Global) -> Result<Outcome> {
    let spec = load_spec(&a.model)?;
    let data = Dataset::load_csv(&a.data, &spec)?;
    let opts = TestOptions {
        b: a.b,
        method: a.method.into(),
        studentization: a.studentization.into(),
        seed: a.seed,
        conditional: !a.unconditional,
        sharp: a.sharp,
    };
    let r = run_test(&data, &spec, a.alpha, &opts)?;
    let code = if a.exit_on_reject && r.reject { 3 } else { 0 };
    let output = match g_opts.format {
        Format::Json => Output::Json(artifact(
            "test",
            json!({"model": a.model, "data": a.data, "alpha": a.alpha, "B": a.b, "method": opts.method,
                   "studentization": opts.studentization, "seed": a.seed, "conditional": opts.conditional, "sharp": a.sharp}),
            serde_json::to_value(&r)?,
        )),
        Format::Text => Output::Text(format!(
            "T_n {:.6}\ncritical value {:.6}\nreject {}\n",
            r.statistic, r.critical_value, r.reject
        )),
    };
    Ok(Outcome { output, code })
}

fn cmd_simulate(a: &SimulateArgs) -> Result<Outcome> {
    let data = match &a.design {
        DesignCmd::Pm(p) => simulate_pm(p.delta, p.gamma, p.h, p.n, p.seed)?,
        DesignCmd::Monotonicity(p) => simulate_monotonicity(p.j, p.k, p.h, p.n, p.seed, B0Law::Constant(p.b0))?,
    };
    let mut buf = Vec::new();
    data.write_csv(&mut buf)?;
    Ok(Outcome::ok(Output::Csv(String::from_utf8(buf).expect("csv output is utf-8"))))
}

fn cmd_power(a: &PowerArgs, g_opts: &Global) -> Result<Outcome> {
    let grid = a
        .grid
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|_| Error::InvalidData(format!("bad grid value `{x}`"))))
        .collect::<Result<Vec<f64>>>()?;
    let (design, seed) = match &a.design {
        DesignCmd::Pm(p) => (
            Design::Pm {
                delta: p.delta,
                gamma: p.gamma,
                n: p.n,
                conditional: !p.unconditional,
            },
            p.seed,
        ),
        DesignCmd::Monotonicity(p) => (
            Design::Monotonicity {
                j: p.j,
                k: p.k,
                n: p.n,
                b0: B0Law::Constant(p.b0),
            },
            p.seed,
        ),
    };
    let opts = PowerOptions {
        sims: a.sims,
        alpha: a.alpha,
        b: a.b,
        method: a.method.into(),
        studentization: a.studentization.into(),
        seed,
    };
    let points = power_curve(&design, &grid, &opts)?;
    Ok(Outcome::ok(match g_opts.format {
        Format::Json => Output::Json(artifact(
            "power",
            json!({"design": design, "options": opts, "grid": grid}),
            serde_json::to_value(&points)?,
        )),
        Format::Text => Output::Csv(power_csv(&points)),
    }))
}

fn run(cli: &Cli) -> Result<Outcome> {
    let g = &cli.global;
    match &cli.command {
        Command::Build(a) => cmd_build(a, g),
        Command::Mis(a) => cmd_sets(a, g, false),
        Command::Cliques(a) => cmd_sets(a, g, true),
        Command::Regularity(a) => cmd_regularity(a, g),
        Command::Inequalities(a) => cmd_inequalities(a, g),
        Command::Compare(a) => cmd_compare(a, g),
        Command::Membership(a) => cmd_membership(a, g),
        Command::Crosscheck(a) => cmd_crosscheck(a, g),
        Command::Test(a) => cmd_test(a, g),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Power(a) => cmd_power(a, g),
    }
}

fn error_code(e: &Error) -> &'static str {
    match e {
        Error::InvalidSpec(_) => "invalid-spec",
        Error::UnknownFamily(_) => "unknown-family",
        Error::EmptySupport => "empty-support",
        Error::CapacityExceeded { .. } => "capacity-exceeded",
        Error::OutputLimitExceeded(_) => "output-limit-exceeded",
        Error::TimeBudgetExceeded => "time-budget-exceeded",
        Error::TooLarge { .. } => "too-large",
        Error::NotNested(_) => "not-nested",
        Error::SchemaMismatch(_) => "schema-mismatch",
        Error::NumericalFailure(_) => "numerical-failure",
        Error::EmptyConditioningCell(_) => "empty-conditioning-cell",
        Error::InvalidShares(_) => "invalid-shares",
        Error::NoTestableInequalities => "no-testable-inequalities",
        Error::Io(_) => "io",
        Error::Json(_) => "json",
        Error::Csv(_) => "csv",
        _ => "model-error",
    }
}

fn emit(out: &Option<PathBuf>, text: &str) -> std::io::Result<()> {
    match out {
        Some(p) => std::fs::write(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.global.threads {
        // Fails only if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t.max(1)).build_global();
    }
    match run(&cli) {
        Ok(outcome) => {
            let text = match outcome.output {
                Output::Json(v) => serde_json::to_string_pretty(&v).expect("JSON values serialize") + "\n",
                Output::Text(s) | Output::Csv(s) => s,
            };
            if let Err(e) = emit(&cli.global.out, &text) {
                eprintln!("error: cannot write output: {e}");
                return ExitCode::from(1);
            }
            ExitCode::from(outcome.code)
        }
        Err(e) => {
            let report = json!({"error": error_code(&e), "message": e.to_string()});
            eprintln!("{report}");
            ExitCode::from(if e.is_budget() { 2 } else { 1 })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(name: &str) -> String {
        format!("{}/../../models/{name}.json", env!("CARGO_MANIFEST_DIR"))
    }

    fn exec(args: &[&str]) -> Result<Outcome> {
        let cli = Cli::try_parse_from(std::iter::once("respgraph").chain(args.iter().copied())).unwrap();
        run(&cli)
    }

    fn json_of(args: &[&str]) -> Value {
        match exec(args).unwrap().output {
            Output::Json(v) => v,
            _ => panic!("expected JSON output"),
        }
    }

    fn text_of(args: &[&str]) -> String {
        match exec(args).unwrap().output {
            Output::Text(s) | Output::Csv(s) => s,
            Output::Json(_) => panic!("expected text output"),
        }
    }

    fn simulated(dir: &tempfile::TempDir, h: &str, n: &str) -> String {
        let path = dir.path().join(format!("pm-{h}.csv"));
        std::fs::write(&path, text_of(&["simulate", "pm", "--h", h, "--n", n, "--seed", "3"])).unwrap();
        path.to_string_lossy().into_owned()
    }

    #[test]
    fn artifacts_carry_schema_command_and_config() {
        let pm = model("partial-monotonicity");
        let v = json_of(&["mis", "--model", &pm]);
        assert_eq!(v["schema_version"], json!(ARTIFACT_SCHEMA_VERSION));
        assert_eq!(v["command"], "mis");
        assert_eq!(v["config"]["model"], json!(pm));
        assert_eq!(v["result"]["count"], 9);
        assert_eq!(v["result"]["nontrivial"], 5);
        let text = text_of(&["mis", "--model", &pm, "--format", "text"]);
        assert!(text.starts_with("9 maximal independent sets (5 nontrivial)"));
    }

    #[test]
    fn regularity_reports_the_exclusion_hole() {
        let v = json_of(&["regularity", "--model", &model("iv-exclusion-y2-d2-z3")]);
        assert_eq!(v["result"]["is_perfect"], false);
        assert_eq!(v["result"]["perfectness_witness"]["cycle"].as_array().unwrap().len(), 5);
        let text = text_of(&["regularity", "--format", "text", "--model", &model("iv-exclusion-y2-d2-z3")]);
        assert!(text.starts_with("regular false\n"));
        assert_eq!(text.lines().find(|l| l.starts_with("odd hole")).unwrap().matches(" - ").count(), 4);
        let pm = json_of(&["regularity", "--model", &model("partial-monotonicity")]);
        assert_eq!(pm["result"]["regular"], true);
    }

    #[test]
    fn sharp_lists_add_nothing_for_regular_models() {
        let pm = model("partial-monotonicity");
        let plain = json_of(&["inequalities", "--model", &pm]);
        let sharp = json_of(&["inequalities", "--sharp", "--model", &pm]);
        assert_eq!(sharp["result"]["regular"], true);
        assert_eq!(plain["result"]["inequalities"], sharp["result"]["inequalities"]);
        let ex = json_of(&["inequalities", "--sharp", "--model", &model("iv-exclusion-y2-d2-z3")]);
        assert_eq!(ex["result"]["regular"], false);
        let list = ex["result"]["inequalities"]["inequalities"].as_array().unwrap();
        assert!(list.len() > plain["result"]["inequalities"]["inequalities"].as_array().unwrap().len());
        let filtered = text_of(&["inequalities", "--filter-redundant", "--format", "text", "--model", &pm]);
        assert!(filtered.contains("redundant:\n"));
    }

    #[test]
    fn limits_surface_as_budget_errors() {
        let m = model("iv-exclusion-y2-d2-z4");
        let e = exec(&["inequalities", "--sharp", "--max-sets", "3", "--model", &m]).err().unwrap();
        assert!(e.is_budget());
        assert_eq!(error_code(&e), "output-limit-exceeded");
        let e = exec(&["inequalities", "--sharp", "--time-budget-ms", "0", "--model", &m]).err().unwrap();
        assert!(e.is_budget());
        let e = exec(&["mis", "--model", "/nonexistent/model.json"]).err().unwrap();
        assert!(!e.is_budget());
    }

    #[test]
    fn test_command_accepts_a_slack_null_and_rejects_a_violation() {
        let dir = tempfile::tempdir().unwrap();
        let pm = model("partial-monotonicity-with-w");
        let null = simulated(&dir, "1", "4000");
        let v = json_of(&["test", "--model", &pm, "--data", &null, "--B", "200", "--exit-on-reject"]);
        assert_eq!(v["result"]["reject"], false);
        assert_eq!(v["result"]["statistic"], 0.0);
        assert_eq!(v["config"]["conditional"], true);
        assert_eq!(v["config"]["studentization"], "bootstrap");
        let bad = simulated(&dir, "0", "2000");
        let args = ["test", "--model", &pm, "--data", &bad, "--B", "200", "--exit-on-reject"];
        assert_eq!(exec(&args).unwrap().code, 3);
        let again = ["test", "--model", &pm, "--data", &bad, "--B", "200"];
        assert_eq!(exec(&again).unwrap().code, 0);
        let pooled = json_of(&["test", "--model", &pm, "--data", &bad, "--B", "200", "--unconditional"]);
        assert_eq!(pooled["result"]["inequalities"], 5);
        assert_eq!(json_of(&again), json_of(&again));
    }

    #[test]
    fn membership_reads_lists_and_labelled_objects() {
        let dir = tempfile::tempdir().unwrap();
        let pm = model("partial-monotonicity");
        let list = dir.path().join("list.json");
        std::fs::write(&list, "[0.7, 0.3, 0.6, 0.4, 0.5, 0.5, 0.4, 0.6]").unwrap();
        let obj = dir.path().join("obj.json");
        std::fs::write(
            &obj,
            r#"{"beta": {"(0,0)": {"0": 0.7, "1": 0.3}, "(0,1)": {"0": 0.6, "1": 0.4},
                         "(1,0)": {"0": 0.5, "1": 0.5}, "(1,1)": {"0": 0.4, "1": 0.6}}}"#,
        )
        .unwrap();
        let a = json_of(&["membership", "--model", &pm, "--beta", list.to_str().unwrap()]);
        let b = json_of(&["membership", "--model", &pm, "--beta", obj.to_str().unwrap()]);
        assert_eq!(a["result"]["verdict"], b["result"]["verdict"]);
        assert_eq!(a["result"]["verdict"], "feasible");
        std::fs::write(&list, "[0.7, 0.7, 0.6, 0.4, 0.5, 0.5, 0.4, 0.6]").unwrap();
        assert!(exec(&["membership", "--model", &pm, "--beta", list.to_str().unwrap()]).is_err());
    }

    #[test]
    fn compare_text_splits_new_and_tightened() {
        let text = text_of(&[
            "compare",
            "--format",
            "text",
            "--model",
            &model("ia-monotonicity-two-instruments"),
            "--weaker",
            &model("partial-monotonicity"),
        ]);
        let new: Vec<&str> = text.lines().skip(1).take_while(|l| *l != "tightened:").collect();
        assert_eq!(new.len(), 1, "{text}");
        assert!(text.contains("unchanged:\n"));
    }

    #[test]
    fn simulation_and_power_output_are_deterministic_csv() {
        let a = text_of(&["simulate", "monotonicity", "--j", "3", "--k", "3", "--n", "50", "--seed", "4"]);
        assert_eq!(a.lines().next(), Some("z,r"));
        assert_eq!(a.lines().count(), 51);
        assert_eq!(a, text_of(&["simulate", "monotonicity", "--j", "3", "--k", "3", "--n", "50", "--seed", "4"]));
        let args = ["power", "--sims", "5", "--B", "20", "--grid", "0,1", "--format", "text", "pm", "--n", "60"];
        let p = text_of(&args);
        assert_eq!(p.lines().next(), Some("h,sims,rejections,empty_cell_sims,rate"));
        assert_eq!(p.lines().count(), 3);
        assert_eq!(p, text_of(&args));
        assert!(exec(&["power", "--grid", "0,x", "pm"]).is_err());
    }
}
