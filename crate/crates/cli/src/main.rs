//! Command-line surface: file parsing, subcommands tying the pipeline
//! together, and CSV/text reporting.
//!
//! All payload output is deterministic given the inputs, seed, and flags,
//! and goes to stdout or `--out`; timing goes to stderr. Exit status is 0
//! for every successfully computed result (including -inf log-likelihoods)
//! and nonzero only for input or internal errors.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use valabs::abstractor::{value_abstract, AbstractionConfig, AbstractorError};
use valabs::generate;
use valabs::jointree::Heuristic;
use valabs::model::{Evidence, Network};
use valabs::oracle;
use valabs::pedigree::{self, PedigreeProblem, ScanMode};
use valabs::pipeline::{self, AbstractionMode, InferOptions};

#[derive(Parser)]
#[command(
    name = "valabs",
    version,
    about = "Exact Bayesian-network inference with evidence-specific value abstraction"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum OrderArg {
    MinFill,
    MinDegree,
}

impl From<OrderArg> for Heuristic {
    fn from(value: OrderArg) -> Self {
        match value {
            OrderArg::MinFill => Heuristic::MinFill,
            OrderArg::MinDegree => Heuristic::MinDegree,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Full,
    ValueAbstractOnly,
    None,
}

impl From<ModeArg> for AbstractionMode {
    fn from(value: ModeArg) -> Self {
        match value {
            ModeArg::Full => AbstractionMode::Full,
            ModeArg::ValueAbstractOnly => AbstractionMode::ValueAbstractOnly,
            ModeArg::None => AbstractionMode::None,
        }
    }
}

#[derive(Args)]
struct EngineArgs {
    /// Elimination-ordering heuristic.
    #[arg(long, value_enum, default_value = "min-fill")]
    order: OrderArg,
    /// Relative equality tolerance for value grouping (0 = exact).
    #[arg(long, default_value_t = 0.0)]
    tolerance: f64,
}

impl EngineArgs {
    fn options(&self, mode: AbstractionMode) -> Result<InferOptions> {
        if self.tolerance < 0.0 {
            bail!("tolerance must be >= 0");
        }
        Ok(InferOptions {
            heuristic: self.order.into(),
            eps: self.tolerance,
            mode,
            ..Default::default()
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Compile a pedigree file into network, evidence, and name-map files.
    Compile {
        /// Pedigree JSON file.
        pedigree: PathBuf,
        /// Directory for network.json, evidence.json, name_map.json.
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Compute the log-likelihood of an evidence file under a network.
    Infer {
        network: PathBuf,
        evidence: PathBuf,
        #[command(flatten)]
        engine: EngineArgs,
        /// Abstraction pipeline to run.
        #[arg(long, value_enum, default_value = "full")]
        mode: ModeArg,
        /// Also run without abstraction and report both workloads.
        #[arg(long)]
        compare: bool,
        /// Cross-check against brute-force enumeration (small inputs only).
        #[arg(long)]
        oracle: bool,
        /// Also report per-clique posterior tables.
        #[arg(long)]
        posteriors: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit per-variable, per-clique, and per-separator reduction statistics
    /// as CSV.
    Stats {
        network: PathBuf,
        evidence: PathBuf,
        #[command(flatten)]
        engine: EngineArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Scan one recombination fraction over a grid of values.
    Scan {
        pedigree: PathBuf,
        /// Which adjacent-locus edge to scan (0-based).
        #[arg(long, default_value_t = 0)]
        edge: usize,
        /// Grid: comma-separated values, or start:end:count.
        #[arg(long)]
        grid: String,
        /// Reuse abstractions across grid points (verified at the last one).
        #[arg(long)]
        reuse: bool,
        #[command(flatten)]
        engine: EngineArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate synthetic test families.
    Gen {
        /// Family: random, dice, trio, three-gen, untyped-allele.
        #[arg(long)]
        family: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Allele count for untyped-allele families.
        #[arg(long, default_value_t = 8)]
        alleles: usize,
        /// Locus count for trio / three-gen families.
        #[arg(long, default_value_t = 2)]
        loci: usize,
        /// Recombination fraction between adjacent loci.
        #[arg(long, default_value_t = 0.1)]
        theta: f64,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Dump the per-variable value abstraction for a network and evidence.
    Abstract {
        network: PathBuf,
        evidence: PathBuf,
        #[command(flatten)]
        engine: EngineArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Compile { pedigree, out_dir } => cmd_compile(&pedigree, &out_dir),
        Command::Infer {
            network,
            evidence,
            engine,
            mode,
            compare,
            oracle,
            posteriors,
            out,
        } => cmd_infer(
            &network,
            &evidence,
            &engine,
            mode,
            compare,
            oracle,
            posteriors,
            out.as_deref(),
        ),
        Command::Stats {
            network,
            evidence,
            engine,
            out,
        } => cmd_stats(&network, &evidence, &engine, out.as_deref()),
        Command::Scan {
            pedigree,
            edge,
            grid,
            reuse,
            engine,
            out,
        } => cmd_scan(&pedigree, edge, &grid, reuse, &engine, out.as_deref()),
        Command::Gen {
            family,
            seed,
            alleles,
            loci,
            theta,
            out_dir,
        } => cmd_gen(&family, seed, alleles, loci, theta, &out_dir),
        Command::Abstract {
            network,
            evidence,
            engine,
            out,
        } => cmd_abstract(&network, &evidence, &engine, out.as_deref()),
    }
}

fn read_network(path: &Path) -> Result<Network> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Network::from_json_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn read_evidence(path: &Path, net: &Network) -> Result<Evidence> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Evidence::from_json_str(&text, net).with_context(|| format!("parsing {}", path.display()))
}

fn emit(out: Option<&Path>, payload: &str) -> Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, payload).with_context(|| format!("writing {}", path.display()))?
        }
        None => print!("{payload}"),
    }
    Ok(())
}

/// Natural log with 15 significant digits; -inf prints as "-inf".
fn fmt_ln(x: f64) -> String {
    if x == f64::NEG_INFINITY {
        "-inf".to_string()
    } else {
        format!("{x:.14e}")
    }
}

fn cmd_compile(pedigree_path: &Path, out_dir: &Path) -> Result<()> {
    let text = std::fs::read_to_string(pedigree_path)
        .with_context(|| format!("reading {}", pedigree_path.display()))?;
    let problem = PedigreeProblem::from_json_str(&text)?;
    let compiled = pedigree::compile(&problem)?;
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(
        out_dir.join("network.json"),
        compiled.network.to_json_string(),
    )?;
    std::fs::write(
        out_dir.join("evidence.json"),
        compiled.evidence.to_json_string(&compiled.network),
    )?;
    std::fs::write(out_dir.join("name_map.json"), compiled.name_map_json())?;
    // round-trip check: the emitted network parses back identically
    let parsed = Network::from_json_str(&std::fs::read_to_string(out_dir.join("network.json"))?)?;
    if parsed != compiled.network {
        bail!("internal error: emitted network does not round-trip");
    }
    println!(
        "compiled {} variables, {} observed",
        compiled.network.var_count(),
        compiled.evidence.iter().count()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_infer(
    network: &Path,
    evidence: &Path,
    engine: &EngineArgs,
    mode: ModeArg,
    compare: bool,
    with_oracle: bool,
    posteriors: bool,
    out: Option<&Path>,
) -> Result<()> {
    let net = read_network(network)?;
    let ev = read_evidence(evidence, &net)?;
    let options = engine.options(mode.into())?;
    let start = Instant::now();
    let (ln, mul_adds) = pipeline::infer_with_workload(&net, &ev, &options);
    let elapsed = start.elapsed();
    let mut payload = String::new();
    let mode_name = match options.mode {
        AbstractionMode::Full => "full",
        AbstractionMode::ValueAbstractOnly => "value-abstract-only",
        AbstractionMode::None => "none",
    };
    writeln!(payload, "mode={mode_name}")?;
    writeln!(payload, "loglik={}", fmt_ln(ln))?;
    writeln!(payload, "muladds={mul_adds}")?;
    if compare {
        let plain = InferOptions {
            mode: AbstractionMode::None,
            ..options
        };
        let (ln_plain, mul_plain) = pipeline::infer_with_workload(&net, &ev, &plain);
        writeln!(payload, "loglik_none={}", fmt_ln(ln_plain))?;
        writeln!(payload, "muladds_none={mul_plain}")?;
        let agree =
            ln == ln_plain || (ln - ln_plain).abs() <= 1e-9 * ln.abs().max(ln_plain.abs()).max(1.0);
        writeln!(payload, "agree={}", if agree { "yes" } else { "no" })?;
    }
    if with_oracle {
        let p = oracle::enumerate_likelihood(&net, &ev, &Default::default())?;
        let reference = if p == 0.0 { f64::NEG_INFINITY } else { p.ln() };
        writeln!(payload, "oracle_loglik={}", fmt_ln(reference))?;
    }
    if posteriors {
        let abs = value_abstract(&net, &ev, &AbstractionConfig { eps: options.eps });
        match abs {
            Ok(abs) => {
                let tree = valabs::jointree::build_clique_tree(&abs.network, options.heuristic);
                let factors =
                    valabs::jointree::attach_evidence(&tree, &abs.network, &Evidence::new());
                let calib = valabs::jointree::calibrate(&tree, &factors);
                for (l, post) in calib.posteriors.iter().enumerate() {
                    let names: Vec<&str> = post
                        .scope
                        .var_ids()
                        .map(|v| abs.network.variables[v].name.as_str())
                        .collect();
                    writeln!(payload, "posterior[{l}] scope={}", names.join("+"))?;
                    for (i, v) in post.expanded_values().iter().enumerate() {
                        writeln!(payload, "posterior[{l}][{i}]={v:.14e}")?;
                    }
                }
            }
            Err(AbstractorError::ImpossibleEvidence { .. }) => {
                writeln!(payload, "posteriors=impossible-evidence")?;
            }
            Err(e) => return Err(e.into()),
        }
    }
    emit(out, &payload)?;
    eprintln!("# time_ms={}", elapsed.as_millis());
    Ok(())
}

fn csv_escape(field: &str) -> String {
    if field.contains(',') || field.contains('"') || field.contains('\n') {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

fn cmd_stats(
    network: &Path,
    evidence: &Path,
    engine: &EngineArgs,
    out: Option<&Path>,
) -> Result<()> {
    let net = read_network(network)?;
    let ev = read_evidence(evidence, &net)?;
    let options = engine.options(AbstractionMode::Full)?;
    let start = Instant::now();
    let mut payload = String::new();
    writeln!(
        payload,
        "node_id,kind,variables,size_original,size_abstracted"
    )?;
    match pipeline::stats(&net, &ev, &options) {
        Ok((abs, tree, report)) => {
            for (id, v) in report.variables.iter().enumerate() {
                writeln!(
                    payload,
                    "{id},variable,{},{},{}",
                    csv_escape(&v.name),
                    v.original,
                    v.abstracted
                )?;
            }
            for c in &report.savings.cliques {
                let names: Vec<&str> = tree
                    .cluster(c.node)
                    .iter()
                    .map(|&v| abs.network.variables[v].name.as_str())
                    .collect();
                writeln!(
                    payload,
                    "{},clique,{},{},{}",
                    c.node,
                    csv_escape(&names.join("+")),
                    c.size,
                    c.blocks
                )?;
            }
            for s in &report.savings.separators {
                let scope = tree.separator_scope(s.edge);
                let names: Vec<&str> = scope
                    .var_ids()
                    .map(|v| abs.network.variables[v].name.as_str())
                    .collect();
                writeln!(
                    payload,
                    "{}->{},separator,{},{},{}",
                    s.from,
                    s.to,
                    csv_escape(&names.join("+")),
                    s.separator_size,
                    s.blocks
                )?;
            }
            writeln!(
                payload,
                ",total_variables,,{},{}",
                report.variable_total_original, report.variable_total_abstract
            )?;
            writeln!(
                payload,
                ",total_cliques,,{},{}",
                report.savings.original_total, report.savings.abstracted_total
            )?;
        }
        Err(AbstractorError::ImpossibleEvidence { variable }) => {
            writeln!(payload, "{variable},impossible_evidence,,0,0")?;
        }
        Err(e) => return Err(e.into()),
    }
    emit(out, &payload)?;
    eprintln!("# time_ms={}", start.elapsed().as_millis());
    Ok(())
}

fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    if let Some((range, count)) = spec.rsplit_once(':') {
        if let Some((start, end)) = range.split_once(':') {
            let start: f64 = start.parse().context("grid start")?;
            let end: f64 = end.parse().context("grid end")?;
            let count: usize = count.parse().context("grid count")?;
            if count < 2 {
                bail!("grid count must be at least 2");
            }
            return Ok((0..count)
                .map(|i| start + (end - start) * i as f64 / (count - 1) as f64)
                .collect());
        }
    }
    spec.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(Into::into))
        .collect()
}

fn cmd_scan(
    pedigree_path: &Path,
    edge: usize,
    grid_spec: &str,
    reuse: bool,
    engine: &EngineArgs,
    out: Option<&Path>,
) -> Result<()> {
    let text = std::fs::read_to_string(pedigree_path)
        .with_context(|| format!("reading {}", pedigree_path.display()))?;
    let problem = PedigreeProblem::from_json_str(&text)?;
    let grid = parse_grid(grid_spec)?;
    let mode = if reuse {
        ScanMode::ReuseAbstraction
    } else {
        ScanMode::Fresh
    };
    let options = engine.options(AbstractionMode::Full)?;
    let start = Instant::now();
    let result = pedigree::scan_theta(&problem, edge, &grid, mode, &options)?;
    let mut payload = String::new();
    writeln!(payload, "theta,loglik,mode,verified")?;
    let mode_name = match result.mode {
        ScanMode::Fresh => "fresh",
        ScanMode::ReuseAbstraction => "reuse-abstraction",
    };
    let verified = match &result.verification {
        None => "n/a".to_string(),
        Some(v) => if v.passed { "yes" } else { "no" }.to_string(),
    };
    for p in &result.points {
        writeln!(
            payload,
            "{},{},{mode_name},{verified}",
            p.theta,
            fmt_ln(p.ln_likelihood)
        )?;
    }
    if let Some(v) = &result.verification {
        writeln!(
            payload,
            "# verification theta={} fresh={} reused={} discrepancy={:e}",
            v.theta,
            fmt_ln(v.fresh),
            fmt_ln(v.reused),
            v.discrepancy
        )?;
    }
    emit(out, &payload)?;
    eprintln!("# time_ms={}", start.elapsed().as_millis());
    Ok(())
}

fn cmd_gen(
    family: &str,
    seed: u64,
    alleles: usize,
    loci: usize,
    theta: f64,
    out_dir: &Path,
) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    match family {
        "random" => {
            let cfg = generate::RandomNetworkConfig::default();
            let net = generate::random_network(seed, &cfg);
            let ev = generate::random_evidence(&net, seed ^ 0x9e3779b97f4a7c15);
            std::fs::write(out_dir.join("network.json"), net.to_json_string())?;
            std::fs::write(out_dir.join("evidence.json"), ev.to_json_string(&net))?;
        }
        "dice" => {
            let net = generate::dice_network(&[0.5, 0.5], &[1.0 / 6.0; 6]);
            let mut ev = Evidence::new();
            ev.set(2, vec![1]).expect("fresh evidence");
            std::fs::write(out_dir.join("network.json"), net.to_json_string())?;
            std::fs::write(out_dir.join("evidence.json"), ev.to_json_string(&net))?;
        }
        "trio" => {
            let problem = generate::typed_child_problem(generate::PedigreeShape::Trio, loci, theta);
            std::fs::write(out_dir.join("pedigree.json"), problem.to_json_string())?;
        }
        "three-gen" => {
            let problem = generate::typed_child_problem(
                generate::PedigreeShape::ThreeGeneration,
                loci,
                theta,
            );
            std::fs::write(out_dir.join("pedigree.json"), problem.to_json_string())?;
        }
        "untyped-allele" => {
            let problem = generate::untyped_allele_problem(generate::PedigreeShape::Trio, alleles);
            std::fs::write(out_dir.join("pedigree.json"), problem.to_json_string())?;
        }
        "untyped-allele-three-gen" => {
            let problem =
                generate::untyped_allele_problem(generate::PedigreeShape::ThreeGeneration, alleles);
            std::fs::write(out_dir.join("pedigree.json"), problem.to_json_string())?;
        }
        other => bail!("unknown family {other:?}"),
    }
    println!("generated {family} into {}", out_dir.display());
    Ok(())
}

fn cmd_abstract(
    network: &Path,
    evidence: &Path,
    engine: &EngineArgs,
    out: Option<&Path>,
) -> Result<()> {
    let net = read_network(network)?;
    let ev = read_evidence(evidence, &net)?;
    let cfg = AbstractionConfig {
        eps: engine.tolerance,
    };
    let start = Instant::now();
    let mut payload = String::new();
    writeln!(payload, "variable,original,abstracted,partition")?;
    match value_abstract(&net, &ev, &cfg) {
        Ok(abs) => {
            let mut total_orig = 0usize;
            let mut total_abs = 0usize;
            for v in &net.variables {
                let p = &abs.partitions[v.id];
                total_orig += v.domain.len();
                total_abs += p.num_blocks();
                writeln!(
                    payload,
                    "{},{},{},{}",
                    csv_escape(&v.name),
                    v.domain.len(),
                    p.num_blocks(),
                    csv_escape(&p.to_string())
                )?;
            }
            writeln!(payload, "total,{total_orig},{total_abs},")?;
        }
        Err(AbstractorError::ImpossibleEvidence { variable }) => {
            writeln!(
                payload,
                "impossible_evidence,{},0,",
                csv_escape(&net.variables[variable].name)
            )?;
        }
        Err(e) => return Err(e.into()),
    }
    emit(out, &payload)?;
    eprintln!("# time_ms={}", start.elapsed().as_millis());
    Ok(())
}
