//! Command-line front end: run mechanisms (with an in-process audit),
//! check fairness predicates on allocation files, decompose or refute
//! fractional allocations, brute-force truthfulness, dump the named
//! instance library, and draw deterministic samples from lottery files.
//!
//! Exit codes: 0 success, 1 predicate failure (a failed check, a refuted
//! decomposition, a failed audit, or a positive truthfulness gain),
//! 2 malformed input or usage.

use std::fs;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use fairdiv_core::fairness;
use fairdiv_core::harness::{self, MechanismId, MisreportFamily};
use fairdiv_core::mech_three;
use fairdiv_core::numeric::Rational;
use fairdiv_core::realize;
use fairdiv_core::{FractionalAllocation, Instance, IntegralAllocation, Lottery};

#[derive(Parser)]
#[command(name = "fairdiv", version, about = "Truthful fair-division mechanisms with exact fairness checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a mechanism on an instance; the output lottery is audited.
    Run(RunArgs),
    /// Check a fairness predicate on an allocation.
    Check(CheckArgs),
    /// Decompose a fractional allocation into a fair lottery, or refute.
    Realize(RealizeArgs),
    /// Brute-force truthfulness of a mechanism over a misreport family.
    Truthful(TruthfulArgs),
    /// List the named instances, or print one as JSON.
    Library { name: Option<String> },
    /// Draw one allocation from a lottery file, deterministically by seed.
    Sample(SampleArgs),
}

#[derive(Args)]
struct RunArgs {
    /// two | three | n_ef | prop1_mms | bivalued
    #[arg(long)]
    mech: String,
    /// Instance file path, or a library name such as THM6.
    #[arg(long)]
    instance: String,
    /// High value level (bivalued only), as a/b.
    #[arg(long)]
    p: Option<String>,
    /// Low value level (bivalued only), as a/b.
    #[arg(long)]
    q: Option<String>,
    /// Write the lottery JSON here instead of stdout.
    #[arg(long)]
    out: Option<String>,
    /// Also draw one allocation (requires --seed).
    #[arg(long)]
    sample: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Dump the three-agent run trace (group structure and plans).
    #[arg(long)]
    trace: bool,
    /// Emit the bi-valued market certificate.
    #[arg(long)]
    certify: bool,
    /// Decompose explicitly (bivalued runs always decompose; flag kept for
    /// symmetry and accepted silently).
    #[arg(long)]
    decompose: bool,
}

#[derive(Args)]
struct CheckArgs {
    /// ef_uv | ef1 | prop1 | alpha_mms | pareto_integral | pareto_fractional | regular
    #[arg(long)]
    predicate: String,
    #[arg(long)]
    instance: String,
    /// Allocation file (bundles as JSON); required by integral predicates.
    #[arg(long)]
    allocation: Option<String>,
    /// Fractional allocation file, or "equal" (pareto_fractional).
    #[arg(long)]
    fractional: Option<String>,
    #[arg(long, default_value_t = 0)]
    u: usize,
    #[arg(long, default_value_t = 1)]
    v: usize,
    /// Share of the maximin value required (alpha_mms), as a/b.
    #[arg(long)]
    alpha: Option<String>,
}

#[derive(Args)]
struct RealizeArgs {
    #[arg(long)]
    instance: String,
    /// Fractional allocation file, or "equal" for the equal division.
    #[arg(long)]
    fractional: String,
    #[arg(long, default_value_t = 0)]
    u: usize,
    #[arg(long, default_value_t = 1)]
    v: usize,
    /// Write the lottery or certificate JSON here instead of stdout.
    #[arg(long)]
    out: Option<String>,
}

#[derive(Args)]
struct TruthfulArgs {
    /// two | three | three_index_ties | n_ef | prop1_mms | bivalued | mnw_baseline
    #[arg(long)]
    mech: String,
    #[arg(long)]
    instance: String,
    /// permutations | swaps | levels | explicit:FILE
    #[arg(long)]
    family: String,
    #[arg(long)]
    p: Option<String>,
    #[arg(long)]
    q: Option<String>,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    lottery: String,
    #[arg(long)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(command: Command) -> anyhow::Result<ExitCode> {
    match command {
        Command::Run(args) => cmd_run(args),
        Command::Check(args) => cmd_check(args),
        Command::Realize(args) => cmd_realize(args),
        Command::Truthful(args) => cmd_truthful(args),
        Command::Library { name } => cmd_library(name),
        Command::Sample(args) => cmd_sample(args),
    }
}

fn load_instance(spec: &str) -> anyhow::Result<Instance> {
    if let Some(inst) = harness::lookup_instance(spec) {
        return Ok(inst);
    }
    let text = fs::read_to_string(spec)
        .map_err(|e| anyhow::anyhow!("cannot read instance {spec:?}: {e}"))?;
    Ok(Instance::from_json(&text)?)
}

fn load_fractional(spec: &str, inst: &Instance) -> anyhow::Result<FractionalAllocation> {
    if spec == "equal" {
        return Ok(FractionalAllocation::equal_division(inst.n, inst.m));
    }
    let text = fs::read_to_string(spec)
        .map_err(|e| anyhow::anyhow!("cannot read fractional allocation {spec:?}: {e}"))?;
    Ok(FractionalAllocation::from_json(&text)?)
}

fn load_allocation(spec: &str) -> anyhow::Result<IntegralAllocation> {
    let text = fs::read_to_string(spec)
        .map_err(|e| anyhow::anyhow!("cannot read allocation {spec:?}: {e}"))?;
    let alloc: IntegralAllocation = serde_json::from_str(&text)?;
    Ok(alloc)
}

fn parse_rational(label: &str, value: &Option<String>) -> anyhow::Result<Option<Rational>> {
    value
        .as_ref()
        .map(|s| Rational::parse(s).map_err(|e| anyhow::anyhow!("--{label}: {e}")))
        .transpose()
}

fn emit(out: &Option<String>, payload: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => fs::write(path, payload)?,
        None => println!("{payload}"),
    }
    Ok(())
}

fn cmd_run(args: RunArgs) -> anyhow::Result<ExitCode> {
    let inst = load_instance(&args.instance)?;
    let p = parse_rational("p", &args.p)?;
    let q = parse_rational("q", &args.q)?;
    let mech = MechanismId::parse(&args.mech, p.clone(), q.clone())?;

    let lottery = harness::run_mechanism(&mech, &inst)?;
    let audit = harness::audit(&mech, &inst, &lottery)?;
    for line in &audit.lines {
        eprintln!("audit: {} ... {}", line.what, if line.passed { "ok" } else { "FAILED" });
    }

    if args.trace {
        if let MechanismId::Three = mech {
            let (_, trace) = mech_three::run_traced(&inst)?;
            let reports: Vec<_> = lottery
                .entries
                .iter()
                .map(|e| fairness::check_ef_uv(&inst, &e.allocation(), 1, 1))
                .collect::<Result<_, _>>()?;
            let dump = serde_json::json!({
                "groups": trace.groups,
                "type1": trace.type1,
                "type2": trace.type2,
                "plan": trace.plan,
                "support_reports": reports,
            });
            eprintln!("{}", serde_json::to_string_pretty(&dump)?);
        } else {
            eprintln!("trace: only the three-agent mechanism carries a trace");
        }
    }
    if args.certify {
        if let (MechanismId::Bivalued { p, q }, true) = (&mech, true) {
            let bvi = fairdiv_core::bivalued::BiValuedInstance::new(
                inst.clone(),
                p.clone(),
                q.clone(),
            )?;
            let (x, trace) = fairdiv_core::bivalued::rule(&bvi)?;
            let cert = fairdiv_core::bivalued::market_certificate(&bvi, &trace, &x)?;
            eprintln!("certificate: {}", serde_json::to_string_pretty(&cert)?);
        } else {
            eprintln!("certify: only the bivalued mechanism carries a market certificate");
        }
    }
    let _ = args.decompose;

    if args.sample {
        let seed = args
            .seed
            .ok_or_else(|| anyhow::anyhow!("--sample needs --seed for determinism"))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draw = lottery.sample(&mut rng);
        eprintln!("sampled: {}", serde_json::to_string(&draw)?);
    }

    emit(&args.out, &lottery.to_json())?;
    Ok(if audit.passed { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn cmd_check(args: CheckArgs) -> anyhow::Result<ExitCode> {
    let inst = load_instance(&args.instance)?;
    let need_alloc = || -> anyhow::Result<IntegralAllocation> {
        args.allocation
            .as_deref()
            .ok_or_else(|| anyhow::anyhow!("--allocation is required for this predicate"))
            .and_then(load_allocation)
    };
    let passed = match args.predicate.as_str() {
        "ef_uv" => {
            let report = fairness::check_ef_uv(&inst, &need_alloc()?, args.u, args.v)?;
            for pair in report.failing_pairs() {
                println!(
                    "pair ({}, {}): fails by {}",
                    pair.envier, pair.envied, pair.relation.deficit
                );
            }
            report.satisfied
        }
        "ef1" => fairness::check_ef1(&inst, &need_alloc()?)?.satisfied,
        "prop1" => fairness::check_prop1(&inst, &need_alloc()?)?.satisfied,
        "alpha_mms" => {
            let alpha = parse_rational("alpha", &args.alpha)?
                .unwrap_or_else(Rational::one);
            fairness::check_alpha_mms(&inst, &need_alloc()?, &alpha)?.satisfied
        }
        "pareto_integral" => matches!(
            fairness::check_pareto_integral(&inst, &need_alloc()?)?,
            fairness::ParetoVerdict::Optimal
        ),
        "pareto_fractional" => {
            let spec = args
                .fractional
                .as_deref()
                .ok_or_else(|| anyhow::anyhow!("--fractional is required"))?;
            let x = load_fractional(spec, &inst)?;
            matches!(
                fairness::check_pareto_fractional(&inst, &x)?,
                fairness::ParetoFracVerdict::Optimal
            )
        }
        "regular" => {
            let gs = mech_three::build_groups(&inst, mech_three::TieBreaking::Careful)?;
            fairness::check_regular(&need_alloc()?, &gs.group_item_lists())
        }
        other => anyhow::bail!("unknown predicate {other:?}"),
    };
    println!("{}: {}", args.predicate, if passed { "satisfied" } else { "violated" });
    Ok(if passed { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn cmd_realize(args: RealizeArgs) -> anyhow::Result<ExitCode> {
    let inst = load_instance(&args.instance)?;
    let x = load_fractional(&args.fractional, &inst)?;
    let support =
        realize::enumerate_allocations(&inst, realize::ef_uv_predicate(&inst, args.u, args.v))?;
    eprintln!(
        "support: {} allocations satisfy the (+{}, -{}) envy bound",
        support.len(),
        args.u,
        args.v
    );
    match realize::decompose_or_refute(&x, &support)? {
        realize::Realization::Lottery(lottery) => {
            eprintln!("realizable: lottery over {} allocations", lottery.entries.len());
            emit(&args.out, &lottery.to_json())?;
            Ok(ExitCode::SUCCESS)
        }
        realize::Realization::Refuted(cert) => {
            eprintln!("not realizable: separating certificate follows");
            emit(&args.out, &serde_json::to_string_pretty(&cert)?)?;
            Ok(ExitCode::from(1))
        }
    }
}

fn cmd_truthful(args: TruthfulArgs) -> anyhow::Result<ExitCode> {
    let inst = load_instance(&args.instance)?;
    let p = parse_rational("p", &args.p)?;
    let q = parse_rational("q", &args.q)?;
    let mech = MechanismId::parse(&args.mech, p.clone(), q.clone())?;
    let family = match args.family.as_str() {
        "permutations" => MisreportFamily::ValuePermutations,
        "swaps" => MisreportFamily::PairwiseSwaps,
        "levels" => {
            let (Some(p), Some(q)) = (p, q) else {
                anyhow::bail!("the levels family needs --p and --q");
            };
            MisreportFamily::LevelPatterns { p, q }
        }
        other => match other.strip_prefix("explicit:") {
            Some(path) => {
                let text = fs::read_to_string(path)?;
                let rows: Vec<Vec<Rational>> = serde_json::from_str(&text)?;
                MisreportFamily::Explicit(rows)
            }
            None => anyhow::bail!("unknown family {other:?}"),
        },
    };
    let report = harness::test_truthfulness(&mech, &inst, &family)?;
    for agent in &report.agents {
        println!(
            "agent {}: max gain {}{}",
            agent.agent,
            agent.max_gain,
            if agent.witness.is_some() { " (beneficial misreport found)" } else { "" }
        );
    }
    if report.family_truncated {
        println!("note: family truncated by the enumeration budget");
    }
    let manipulable = report.max_gain().is_positive();
    Ok(if manipulable { ExitCode::from(1) } else { ExitCode::SUCCESS })
}

fn cmd_library(name: Option<String>) -> anyhow::Result<ExitCode> {
    match name {
        Some(name) => {
            let inst = harness::lookup_instance(&name)
                .ok_or_else(|| anyhow::anyhow!("no library instance named {name:?}"))?;
            println!("{}", inst.to_json());
        }
        None => {
            for (name, inst) in harness::instance_library() {
                println!("{name}: {} agents, {} items", inst.n, inst.m);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_sample(args: SampleArgs) -> anyhow::Result<ExitCode> {
    let text = fs::read_to_string(&args.lottery)?;
    let lottery = Lottery::from_json(&text)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let draw = lottery.sample(&mut rng);
    println!("{}", serde_json::to_string_pretty(&draw)?);
    Ok(ExitCode::SUCCESS)
}
