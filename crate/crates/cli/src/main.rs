use clap::{Parser, Subcommand, ValueEnum};
use decisive::abstraction::{build_abstraction, initial_partition, refine, RefineOutcome, DEFAULT_STEP_CAP};
use decisive::dsl::{parse_model, print_model};
use decisive::rational::fmt_rat;
use decisive::reachability::{avoid_from, analyze, qual_from, quant_with, QuantParams, ReachError};
use decisive::shs::{Block, BlockMatcher, CycleCheck, SampleError, Shs};
use decisive::sts::{hoeffding, run_rng, DistVec, FiniteMc, StateSet, Transient};
use decisive::twocounter::{encode, Machine, Variant};
use rayon::prelude::*;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "decisive", version, about = "Reachability analysis for stochastic hybrid systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate a model.
    Validate { model: PathBuf },
    /// Refine the target partition into a stable one and print the abstraction.
    Abstract {
        model: PathBuf,
        /// Target whose blocks seed the partition (default: the first one).
        #[arg(long)]
        target: Option<String>,
        #[arg(long, default_value_t = DEFAULT_STEP_CAP)]
        max_steps: usize,
        /// Print the support graph in Graphviz format instead of JSON.
        #[arg(long)]
        dot: bool,
    },
    /// Decide whether the target is reached almost surely, never, or neither.
    Qual {
        model: PathBuf,
        #[arg(long)]
        target: String,
        #[arg(long, default_value_t = DEFAULT_STEP_CAP)]
        max_steps: usize,
    },
    /// Bracket the probability of reaching the target.
    Quant {
        model: PathBuf,
        #[arg(long)]
        target: String,
        #[arg(long, default_value_t = 0.02)]
        epsilon: f64,
        #[arg(long, default_value_t = 0.99)]
        confidence: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 256)]
        n_max: usize,
        #[arg(long, default_value_t = DEFAULT_STEP_CAP)]
        max_steps: usize,
    },
    /// Sample runs of the model.
    Simulate {
        model: PathBuf,
        #[arg(long, default_value_t = 100)]
        horizon: usize,
        #[arg(long, default_value_t = 1000)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also estimate the probability of hitting this target within the horizon.
        #[arg(long)]
        target: Option<String>,
        /// Include every sampled state in the report.
        #[arg(long)]
        traces: bool,
    },
    /// Encode a two-counter machine as a model and print it.
    #[command(name = "encode-2cm")]
    Encode2cm {
        file: PathBuf,
        /// Make every cycle pass through a strong reset.
        #[arg(long)]
        cycle_reset: bool,
    },
    /// Exact analyses of a finite Markov chain given as JSON or TSV.
    Mc {
        file: PathBuf,
        #[arg(long, value_enum)]
        op: McOp,
        /// Target set `B`, as comma-separated state indices.
        #[arg(long, default_value = "")]
        set: String,
        /// Candidate attractors, `;`-separated.
        #[arg(long, default_value = "")]
        attractor: String,
        /// Block sequence for `lemmas`, `;`-separated sets.
        #[arg(long, default_value = "")]
        blocks: String,
        /// Start state.
        #[arg(long, default_value_t = 0)]
        from: usize,
        /// Number of steps for `pyes-pno`.
        #[arg(long, default_value_t = 10)]
        steps: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum McOp {
    Reach,
    Btilde,
    Attractor,
    Criterion,
    PyesPno,
    Gf,
    Lemmas,
}

/// A failed command; the exit code says whether the model or a precondition
/// was at fault.
struct Failure {
    code: u8,
    kind: &'static str,
    hypothesis: Option<&'static str>,
    message: String,
    payload: Option<Value>,
}

impl Failure {
    fn model(message: impl ToString) -> Self {
        Self {
            code: 2,
            kind: "model",
            hypothesis: None,
            message: message.to_string(),
            payload: None,
        }
    }

    fn precondition(hypothesis: &'static str, message: impl ToString) -> Self {
        Self {
            code: 3,
            kind: "precondition",
            hypothesis: Some(hypothesis),
            message: message.to_string(),
            payload: None,
        }
    }

    fn runtime(message: impl ToString) -> Self {
        Self {
            code: 1,
            kind: "estimation",
            hypothesis: None,
            message: message.to_string(),
            payload: None,
        }
    }
}

impl From<ReachError> for Failure {
    fn from(e: ReachError) -> Self {
        match e {
            ReachError::NotCycleReset(_) => Failure::precondition("cycle-reset", &e),
            ReachError::StepCap { .. } => Failure::precondition("finite abstraction within the step cap", &e),
            ReachError::InitialDistribution(_) => Failure::precondition("initial distribution", &e),
            ReachError::Sample(_) => Failure::model(&e),
            _ => Failure::runtime(&e),
        }
    }
}

impl From<SampleError> for Failure {
    fn from(e: SampleError) -> Self {
        Failure::model(e)
    }
}

struct Loaded {
    model: Shs,
    sha256: String,
    path: String,
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure::model(format!("{}: {e}", path.display())))
}

fn sha256(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn load(path: &Path) -> Result<Loaded, Failure> {
    let text = read(path)?;
    let model = parse_model(&text).map_err(|e| Failure::model(format!("{}:{}:{}: {}", path.display(), e.line, e.col, e.message)))?;
    Ok(Loaded {
        sha256: sha256(&text),
        path: path.display().to_string(),
        model,
    })
}

/// Loads a model and rejects it if validation finds anything.
fn load_valid(path: &Path) -> Result<Loaded, Failure> {
    let l = load(path)?;
    let diags = l.model.validate();
    if !diags.is_empty() {
        let mut f = Failure::model(format!("{} validation errors", diags.len()));
        f.payload = Some(json!({ "diagnostics": diags.iter().map(|d| d.to_string()).collect::<Vec<_>>() }));
        return Err(f);
    }
    Ok(l)
}

fn target_blocks(m: &Shs, name: &str) -> Result<Vec<Block>, Failure> {
    Ok(m.target(name).map_err(Failure::model)?.blocks.clone())
}

/// Settings that the theory leaves open, reported with every model analysis.
fn semantics() -> Value {
    json!({
        "edge_choice": "uniform over enabled edges",
        "delay_family": "finite delay set: uniform over points; bounded: uniform; unbounded: exp(1) truncated to the delay set",
        "abstract_weights": "uniform over the support",
    })
}

struct Report {
    command: &'static str,
    model: Option<Value>,
    parameters: Value,
}

impl Report {
    fn new(command: &'static str, loaded: Option<&Loaded>, parameters: Value) -> Self {
        Self {
            command,
            model: loaded.map(|l| json!({ "path": l.path, "sha256": l.sha256 })),
            parameters,
        }
    }

    fn finish(self, result: Result<Value, Failure>) -> ExitCode {
        let mut out = json!({ "command": self.command, "parameters": self.parameters });
        if let Some(m) = self.model {
            out["model"] = m;
        }
        let code = match result {
            Ok(v) => {
                out["result"] = v;
                0
            }
            Err(f) => {
                eprintln!("error: {}", f.message);
                out["error"] = json!({
                    "kind": f.kind,
                    "hypothesis": f.hypothesis,
                    "message": f.message,
                });
                if let Some(p) = f.payload {
                    out["error"]["payload"] = p;
                }
                f.code
            }
        };
        println!("{}", serde_json::to_string_pretty(&out).expect("report serializes"));
        ExitCode::from(code)
    }
}

/// Runs `body` on the loaded model, or reports why it could not be loaded.
fn with_model(
    command: &'static str,
    path: &Path,
    parameters: Value,
    body: impl FnOnce(&Loaded) -> Result<Value, Failure>,
) -> ExitCode {
    match load_valid(path) {
        Ok(l) => {
            let result = body(&l);
            Report::new(command, Some(&l), parameters).finish(result)
        }
        Err(f) => {
            let loaded = load(path).ok();
            Report::new(command, loaded.as_ref(), parameters).finish(Err(f))
        }
    }
}

fn validate(path: &Path) -> ExitCode {
    let loaded = match load(path) {
        Ok(l) => l,
        Err(f) => return Report::new("validate", None, json!({})).finish(Err(f)),
    };
    let m = &loaded.model;
    let diags: Vec<String> = m.validate().iter().map(|d| d.to_string()).collect();
    let cycle = match m.cycle_reset_check() {
        CycleCheck::Ok => json!({ "cycle_reset": true }),
        CycleCheck::Witness(edges) => json!({
            "cycle_reset": false,
            "cycle": edges.iter().map(|&e| m.edges[e].name.clone()).collect::<Vec<_>>(),
        }),
    };
    let result = if diags.is_empty() {
        Ok(json!({
            "variables": m.vars,
            "locations": m.locations.len(),
            "edges": m.edges.len(),
            "targets": m.targets.iter().map(|t| t.name.clone()).collect::<Vec<_>>(),
            "structure": cycle,
            "semantics": semantics(),
        }))
    } else {
        let mut f = Failure::model(format!("{} validation errors", diags.len()));
        f.payload = Some(json!({ "diagnostics": diags }));
        Err(f)
    };
    Report::new("validate", Some(&loaded), json!({})).finish(result)
}

fn abstract_cmd(path: &Path, target: Option<String>, max_steps: usize, dot: bool) -> ExitCode {
    let params = json!({ "target": target, "max_steps": max_steps });
    if dot {
        let result = load_valid(path).and_then(|l| {
            let blocks = match &target {
                Some(t) => target_blocks(&l.model, t)?,
                None => l.model.targets.first().map(|t| t.blocks.clone()).unwrap_or_default(),
            };
            match refine(&l.model, &initial_partition(&l.model, &blocks), max_steps) {
                RefineOutcome::Terminated { partition, .. } => {
                    let abs = build_abstraction(&l.model, &partition).map_err(Failure::runtime)?;
                    Ok(abs.to_dot(&l.model))
                }
                RefineOutcome::StepCapReached { steps, .. } => Err(Failure::precondition(
                    "finite abstraction within the step cap",
                    format!("refinement stopped after {steps} splits"),
                )),
            }
        });
        return match result {
            Ok(text) => {
                print!("{text}");
                ExitCode::SUCCESS
            }
            Err(f) => Report::new("abstract", None, params).finish(Err(f)),
        };
    }
    with_model("abstract", path, params, |l| {
        let m = &l.model;
        let blocks = match &target {
            Some(t) => target_blocks(m, t)?,
            None => m.targets.first().map(|t| t.blocks.clone()).unwrap_or_default(),
        };
        let p0 = initial_partition(m, &blocks);
        match refine(m, &p0, max_steps) {
            RefineOutcome::Terminated { partition, steps, .. } => {
                let abs = build_abstraction(m, &partition).map_err(Failure::runtime)?;
                Ok(json!({
                    "outcome": "Terminated",
                    "steps": steps,
                    "initial_blocks": p0.len(),
                    "abstraction": abs.to_json(m),
                }))
            }
            RefineOutcome::StepCapReached { partition, steps, trace } => {
                let mut f = Failure::precondition(
                    "finite abstraction within the step cap",
                    format!("refinement stopped after {steps} splits without reaching a stable partition"),
                );
                f.payload = Some(json!({
                    "outcome": "StepCapReached",
                    "steps": steps,
                    "blocks": partition.describe(m),
                    "trace": trace,
                }));
                Err(f)
            }
        }
    })
}

fn qual(path: &Path, target: String, max_steps: usize) -> ExitCode {
    let params = json!({ "target": target, "max_steps": max_steps });
    with_model("qual", path, params, |l| {
        let blocks = target_blocks(&l.model, &target)?;
        let a = analyze(&l.model, &blocks, max_steps)?;
        let report = qual_from(&a);
        Ok(json!({
            "verdict": report.verdict,
            "report": report,
            "avoid_set": a.abstraction.partition.describe(&l.model)
                .into_iter()
                .filter(|b| a.avoid.contains(&b.id))
                .collect::<Vec<_>>(),
            "semantics": semantics(),
        }))
    })
}

#[allow(clippy::too_many_arguments)]
fn quant(path: &Path, target: String, epsilon: f64, confidence: f64, seed: u64, n_max: usize, max_steps: usize) -> ExitCode {
    let params = QuantParams {
        epsilon,
        delta: 1.0 - confidence,
        seed,
        n_max,
        step_cap: max_steps,
        ..QuantParams::default()
    };
    let shown = json!({ "target": target, "quant": params });
    with_model("quant", path, shown, |l| {
        if !(0.0..1.0).contains(&params.delta) || params.delta == 0.0 || epsilon <= 0.0 {
            return Err(Failure::model("need 0 < epsilon and 0 < confidence < 1"));
        }
        let blocks = target_blocks(&l.model, &target)?;
        let a = analyze(&l.model, &blocks, max_steps)?;
        let avoid = avoid_from(&a);
        let r = quant_with(&l.model, &blocks, &avoid, &params)?;
        Ok(json!({
            "interval": [r.lo, r.hi],
            "report": r,
            "semantics": semantics(),
        }))
    })
}

fn simulate(path: &Path, horizon: usize, runs: usize, seed: u64, target: Option<String>, traces: bool) -> ExitCode {
    let params = json!({ "horizon": horizon, "runs": runs, "seed": seed, "target": target, "delta": 0.01 });
    with_model("simulate", path, params, |l| {
        let m = &l.model;
        let hit = match &target {
            Some(t) => Some(BlockMatcher::new(m, &target_blocks(m, t)?)),
            None => None,
        };
        let sampler = m.sampler();
        let sampled: Vec<_> = (0..runs)
            .into_par_iter()
            .map(|i| sampler.run(horizon, &mut run_rng(seed, i as u64)))
            .collect::<Result<_, _>>()?;
        let mut visits = vec![0usize; m.locations.len()];
        for s in sampled.iter().flatten() {
            visits[s.location] += 1;
        }
        let first_hits: Vec<Option<usize>> = sampled
            .iter()
            .map(|run| hit.as_ref().and_then(|h| run.iter().position(|s| h.contains(s))))
            .collect();
        let mut out = json!({
            "visits": m.locations.iter().zip(&visits).map(|(loc, v)| json!({ "location": loc.name, "count": v })).collect::<Vec<_>>(),
            "semantics": semantics(),
        });
        if hit.is_some() && runs > 0 {
            let hits = first_hits.iter().filter(|h| h.is_some()).count();
            out["target"] = json!({
                "estimate": hits as f64 / runs as f64,
                "half_width": hoeffding(runs, 0.01),
                "hits": hits,
                "horizon_truncated": true,
            });
        }
        if traces {
            out["runs"] = sampled
                .iter()
                .zip(&first_hits)
                .map(|(run, h)| {
                    json!({
                        "first_hit": h,
                        "states": run.iter().map(|s| json!({
                            "location": m.locations[s.location].name,
                            "valuation": s.valuation,
                        })).collect::<Vec<_>>(),
                    })
                })
                .collect();
        }
        Ok(out)
    })
}

fn encode_2cm(file: &Path, cycle_reset: bool) -> ExitCode {
    let params = json!({ "cycle_reset": cycle_reset });
    let machine = read(file).and_then(|t| Machine::parse(&t).map_err(|e| Failure::model(format!("{}: {e}", file.display()))));
    match machine {
        Ok(machine) => {
            let variant = if cycle_reset { Variant::CycleReset } else { Variant::Faithful };
            print!("{}", print_model(&encode(&machine, variant).shs));
            ExitCode::SUCCESS
        }
        Err(f) => Report::new("encode-2cm", None, params).finish(Err(f)),
    }
}

fn parse_set(text: &str, n: usize) -> Result<StateSet, Failure> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| match s.parse::<usize>() {
            Ok(i) if i < n => Ok(i),
            _ => Err(Failure::model(format!("`{s}` is not a state of a {n}-state chain"))),
        })
        .collect()
}

fn parse_sets(text: &str, n: usize) -> Result<Vec<StateSet>, Failure> {
    text.split(';').filter(|s| !s.trim().is_empty()).map(|s| parse_set(s, n)).collect()
}

fn rats(v: &[decisive::rational::Rat]) -> Vec<String> {
    v.iter().map(fmt_rat).collect()
}

#[allow(clippy::too_many_arguments)]
fn mc(file: &Path, op: McOp, set: &str, attractor: &str, blocks: &str, from: usize, steps: usize) -> ExitCode {
    let params = json!({ "set": set, "attractor": attractor, "blocks": blocks, "from": from, "steps": steps });
    let text = match read(file) {
        Ok(t) => t,
        Err(f) => return Report::new("mc", None, params).finish(Err(f)),
    };
    let parsed = if text.trim_start().starts_with(['[', '{']) {
        FiniteMc::from_json(&text)
    } else {
        FiniteMc::from_tsv(&text)
    };
    let model = json!({ "path": file.display().to_string(), "sha256": sha256(&text) });
    let result = parsed.map_err(Failure::model).and_then(|chain| {
        let n = chain.len();
        if from >= n {
            return Err(Failure::model(format!("start state {from} out of range")));
        }
        let b = parse_set(set, n)?;
        let mu = DistVec::dirac(n, from);
        Ok(match op {
            McOp::Reach => json!({ "reach": rats(&chain.reach_exact(&b)) }),
            McOp::Btilde => json!({ "btilde": chain.btilde(&b) }),
            McOp::Attractor => {
                let sets = parse_sets(attractor, n)?;
                json!({ "attractors": sets.iter().map(|a| json!({ "set": a, "is_attractor": chain.is_attractor(a) })).collect::<Vec<_>>() })
            }
            McOp::Criterion => json!({ "criterion": chain.check_decisiveness_criterion(&b, &parse_sets(attractor, n)?) }),
            McOp::PyesPno => {
                let bt = chain.btilde(&b);
                let mut t = Transient::new(&chain, &mu, &b, &bt);
                let mut rows = Vec::new();
                for k in 0..=steps {
                    if k > 0 {
                        t.step();
                    }
                    rows.push(json!({ "n": k, "p_yes": fmt_rat(&t.p_yes()), "p_no": fmt_rat(&t.p_no()) }));
                }
                json!({ "btilde": bt, "exact": fmt_rat(&chain.reach_exact(&b)[from]), "sequence": rows })
            }
            McOp::Gf => {
                let sets = parse_sets(attractor, n)?;
                json!({ "gf_and_not_b": sets.iter().map(|a| json!({ "set": a, "p": fmt_rat(&chain.gf_and_gnot(a, &b, &mu)) })).collect::<Vec<_>>() })
            }
            McOp::Lemmas => {
                let seq = parse_sets(blocks, n)?;
                if seq.is_empty() {
                    return Err(Failure::model("--blocks needs at least one set"));
                }
                let whole = chain.cyl_prob(&mu, &seq);
                let splits: Vec<Value> = (0..seq.len())
                    .map(|j| match chain.conditional(&mu, &seq[..=j]) {
                        Some(cond) => {
                            let product = chain.cyl_prob(&mu, &seq[..=j]) * chain.cyl_prob(&cond, &seq[j..]);
                            json!({ "j": j, "product": fmt_rat(&product), "holds": product == whole })
                        }
                        None => json!({ "j": j, "conditional": "undefined" }),
                    })
                    .collect();
                json!({ "cylinder": fmt_rat(&whole), "splits": splits })
            }
        })
    });
    let mut report = Report::new("mc", None, params);
    report.model = Some(model);
    report.finish(result)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Validate { model } => validate(&model),
        Command::Abstract {
            model,
            target,
            max_steps,
            dot,
        } => abstract_cmd(&model, target, max_steps, dot),
        Command::Qual {
            model,
            target,
            max_steps,
        } => qual(&model, target, max_steps),
        Command::Quant {
            model,
            target,
            epsilon,
            confidence,
            seed,
            n_max,
            max_steps,
        } => quant(&model, target, epsilon, confidence, seed, n_max, max_steps),
        Command::Simulate {
            model,
            horizon,
            runs,
            seed,
            target,
            traces,
        } => simulate(&model, horizon, runs, seed, target, traces),
        Command::Encode2cm { file, cycle_reset } => encode_2cm(&file, cycle_reset),
        Command::Mc {
            file,
            op,
            set,
            attractor,
            blocks,
            from,
            steps,
        } => mc(&file, op, &set, &attractor, &blocks, from, steps),
    }
}
