//! Command-line entry point. Every subcommand reads declared input files,
//! writes declared artifacts, and is deterministic: identical arguments,
//! files, and seed produce byte-identical output. Exit code 0 means
//! success, 1 a domain or input error (single-line diagnostic on stderr),
//! 2 a failed theorem suite.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::json;

use detprob::checks::{
    self, bk_search, check_negative_association, check_tail_correlation,
    concentration_check, entropy_concavity_experiment, CheckReport, Ensemble,
};
use detprob::coupling::{
    check_domination, complete_coupling_zn, find_disjoint_union_coupling,
    FeasibilityResult, Witness,
};
use detprob::extalg::{oracle_cylinder, xi};
use detprob::graphs::{transfer_current, tree_count};
use detprob::ground::{bits, Ground, Mask};
use detprob::io::{
    self, distribution_csv, distribution_json, kernel_to_file, read_graph,
    read_kernel, read_subspace, FORMAT_VERSION,
};
use detprob::kernels::{
    condition, dilate, dual, projection_kernel, validate_entries, zoo,
    ConditionSpec, Kernel, Subspace,
};
use detprob::linalg::{c, CMat};
use detprob::measure::{cylinder_prob, entropy, enumerate, DistributionTable};
use detprob::sampler::sample_many;
use detprob::{Error, Result};

/// Fixed default seed, chosen once; never derived from the clock.
const DEFAULT_SEED: u64 = 12648430;

#[derive(Parser)]
#[command(
    name = "detprob",
    version,
    about = "Determinantal probability on finite ground sets",
    long_about = "Exact computation, sampling, conditioning, coupling searches, and \
                  experiment suites for discrete determinantal measures."
)]
struct Cli {
    /// Seed for all randomized work; the default is a fixed constant.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    seed: u64,

    /// Override the validation tolerance of loaded kernels.
    #[arg(long, global = true)]
    tol: Option<f64>,

    /// Write the primary artifact here instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Output format for distribution tables.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct KernelInput {
    /// Kernel file: JSON {labels, re, im?, tolerance?}.
    #[arg(long)]
    kernel: PathBuf,
}

#[derive(Args)]
struct CylinderArgs {
    /// Comma-separated labels required inside the sample.
    #[arg(long, default_value = "")]
    include: String,

    /// Comma-separated labels required outside the sample.
    #[arg(long, default_value = "")]
    exclude: String,
}

#[derive(Subcommand)]
enum Command {
    /// Check that a kernel file holds a Hermitian positive contraction.
    Validate(KernelInput),
    /// Exact probability of a cylinder event.
    Prob {
        #[command(flatten)]
        kernel: KernelInput,
        #[command(flatten)]
        cylinder: CylinderArgs,
    },
    /// Full distribution table of the measure.
    Enumerate(KernelInput),
    /// Shannon entropy of the measure.
    Entropy(KernelInput),
    /// Draw subsets; one line of comma-separated labels per draw.
    Sample {
        #[command(flatten)]
        kernel: KernelInput,
        /// Number of draws.
        #[arg(long)]
        n: usize,
    },
    /// Condition on a cylinder event; writes the conditioned kernel.
    Condition {
        #[command(flatten)]
        kernel: KernelInput,
        #[command(flatten)]
        cylinder: CylinderArgs,
    },
    /// Complement kernel, whose measure is the complement pushforward.
    Dual(KernelInput),
    /// Dilate a contraction to a projection on a doubled ground set.
    Dilate(KernelInput),
    /// Uniform or weighted spanning trees via the transfer current.
    Ust {
        /// Graph file: JSON {vertices, edges: [{id, tail, head, w?}]}.
        #[arg(long)]
        graph: PathBuf,
        /// Include the full tree law in the report.
        #[arg(long, default_value_t = false)]
        enumerate: bool,
        /// Also draw this many trees and report empirical marginals.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Coupling feasibility searches.
    Couple {
        #[command(subcommand)]
        kind: CoupleCommand,
    },
    /// Experiment suites over random instances.
    Experiments {
        /// One of: negative-association, conditional-na, bk,
        /// tail-correlation, entropy-concavity, concentration.
        suite: Suite,
        /// Ground set size per instance.
        #[arg(long)]
        n: Option<usize>,
        /// Number of instances.
        #[arg(long)]
        trials: Option<usize>,
        /// Kernel ensemble for suites that draw contractions.
        #[arg(long, value_enum)]
        ensemble: Option<EnsembleArg>,
        /// JSON config {n?, trials?, ensemble?}; flags take precedence.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write the report here (overrides --out for the report).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Exterior-algebra oracle: top-form terms and cylinder cross-check.
    Oracle {
        /// Subspace file: JSON {labels, re, im?} with basis columns.
        #[arg(long)]
        subspace: PathBuf,
        #[command(flatten)]
        cylinder: CylinderArgs,
    },
    /// Write a named kernel from the built-in family.
    Zoo {
        #[command(subcommand)]
        which: ZooCommand,
    },
}

#[derive(Subcommand)]
enum CoupleCommand {
    /// Monotone coupling of two measures, by max-flow.
    Dominate {
        /// Kernel whose measure should be dominated.
        #[arg(long)]
        p: PathBuf,
        /// Kernel whose measure should dominate.
        #[arg(long)]
        q: PathBuf,
        /// Report feasibility only; suppress the witness.
        #[arg(long, default_value_t = false)]
        check_only: bool,
    },
    /// Disjoint coupling with a prescribed union marginal.
    Union {
        #[arg(long)]
        k1: PathBuf,
        #[arg(long)]
        k2: PathBuf,
        /// Kernel of the prescribed union law.
        #[arg(long)]
        union: PathBuf,
        #[arg(long, default_value_t = false)]
        check_only: bool,
    },
    /// Complete coupling of the cyclic-group character measures.
    Zn {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = false)]
        check_only: bool,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Suite {
    NegativeAssociation,
    ConditionalNa,
    Bk,
    TailCorrelation,
    EntropyConcavity,
    Concentration,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EnsembleArg {
    Projections,
    ClippedGaussian,
    Toeplitz,
}

impl From<EnsembleArg> for Ensemble {
    fn from(e: EnsembleArg) -> Ensemble {
        match e {
            EnsembleArg::Projections => Ensemble::Projections,
            EnsembleArg::ClippedGaussian => Ensemble::ClippedGaussian,
            EnsembleArg::Toeplitz => Ensemble::ToeplitzSymbols,
        }
    }
}

#[derive(Subcommand)]
enum ZooCommand {
    /// Diagonal kernel: independent inclusion with probability p.
    Bernoulli {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        p: f64,
    },
    /// Truncated renewal-process kernel with parameter a.
    Renewal {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        a: f64,
    },
    /// Projection onto cyclic-group characters with frequencies js.
    ZnCharacter {
        #[arg(long)]
        n: usize,
        /// Comma-separated frequency list, e.g. "0,2".
        #[arg(long)]
        js: String,
    },
    /// Toeplitz truncation from Fourier coefficients c_0, c_1, ...
    Toeplitz {
        #[arg(long)]
        n: usize,
        /// Comma-separated real parts starting at the zeroth coefficient.
        #[arg(long)]
        re: String,
        /// Comma-separated imaginary parts, defaulting to zeros.
        #[arg(long, default_value = "")]
        im: String,
    },
}

fn main() -> std::process::ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => std::process::ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::ExitCode::from(1)
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn emit_json(out: Option<&Path>, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    emit(out, &text)
}

fn load_kernel(path: &Path, tol: Option<f64>) -> Result<Kernel> {
    let kernel = read_kernel(path)?;
    match tol {
        Some(t) => Kernel::new(kernel.ground().clone(), kernel.entries().clone(), Some(t)),
        None => Ok(kernel),
    }
}

fn parse_labels(ground: &Ground, list: &str) -> Result<Mask> {
    ground.mask_of_labels(list.split(',').map(str::trim).filter(|s| !s.is_empty()))
}

fn condition_spec(ground: &Ground, cylinder: &CylinderArgs) -> Result<ConditionSpec> {
    ConditionSpec::new(
        parse_labels(ground, &cylinder.include)?,
        parse_labels(ground, &cylinder.exclude)?,
    )
}

fn kernel_json(kernel: &Kernel) -> Result<serde_json::Value> {
    Ok(serde_json::to_value(kernel_to_file(kernel))?)
}

fn distribution_output(format: Format, table: &DistributionTable) -> Result<String> {
    Ok(match format {
        Format::Json => {
            let mut text = serde_json::to_string_pretty(&distribution_json(table))?;
            text.push('\n');
            text
        }
        Format::Csv => distribution_csv(table),
    })
}

fn run(cli: Cli) -> Result<u8> {
    let out = cli.out.as_deref();
    match cli.command {
        Command::Validate(input) => {
            let file = fs::read_to_string(&input.kernel)?;
            let matrix: io::MatrixFile = serde_json::from_str(&file)?;
            let n = matrix.labels.len();
            let ground = Ground::new(matrix.labels.clone())?;
            let entries = {
                // reuse the kernel reader's shape checks without its
                // validity requirement, so a failing report still prints
                let probe = io::kernel_from_file(&matrix);
                match probe {
                    Ok(k) => k.entries().clone(),
                    Err(Error::Invalid(_)) => {
                        let mut m = CMat::zeros(n, n);
                        for (r, row) in matrix.re.iter().enumerate() {
                            for (cl, &v) in row.iter().enumerate() {
                                let im =
                                    matrix.im.as_ref().map_or(0.0, |im| im[r][cl]);
                                m[(r, cl)] = c(v, im);
                            }
                        }
                        m
                    }
                    Err(other) => return Err(other),
                }
            };
            let tol = cli
                .tol
                .or(matrix.tolerance)
                .unwrap_or(detprob::kernels::DEFAULT_TOLERANCE);
            let report = validate_entries(&entries, tol);
            let pass = report.pass;
            let mut value = serde_json::to_value(&report)?;
            value["labels"] = json!(ground.labels());
            emit_json(out, &value)?;
            Ok(if pass { 0 } else { 1 })
        }
        Command::Prob { kernel, cylinder } => {
            let k = load_kernel(&kernel.kernel, cli.tol)?;
            let include = parse_labels(k.ground(), &cylinder.include)?;
            let exclude = parse_labels(k.ground(), &cylinder.exclude)?;
            let p = cylinder_prob(&k, include, exclude)?;
            emit_json(
                out,
                &json!({
                    "version": FORMAT_VERSION,
                    "include": k.ground().labels_of_mask(include),
                    "exclude": k.ground().labels_of_mask(exclude),
                    "probability": p,
                }),
            )?;
            Ok(0)
        }
        Command::Enumerate(input) => {
            let k = load_kernel(&input.kernel, cli.tol)?;
            let law = enumerate(&k)?;
            emit(out, &distribution_output(cli.format, &law)?)?;
            Ok(0)
        }
        Command::Entropy(input) => {
            let k = load_kernel(&input.kernel, cli.tol)?;
            emit_json(
                out,
                &json!({
                    "version": FORMAT_VERSION,
                    "size": k.size(),
                    "entropy": entropy(&k)?,
                }),
            )?;
            Ok(0)
        }
        Command::Sample { kernel, n } => {
            let k = load_kernel(&kernel.kernel, cli.tol)?;
            let run = sample_many(&k, n, cli.seed)?;
            let mut lines = String::new();
            for &mask in &run.outcomes {
                lines.push_str(&k.ground().labels_of_mask(mask).join(","));
                lines.push('\n');
            }
            emit(out, &lines)?;
            let mut marginals = vec![0usize; k.size()];
            for &mask in &run.outcomes {
                for e in bits(mask) {
                    marginals[e] += 1;
                }
            }
            let summary = json!({
                "version": FORMAT_VERSION,
                "seed": run.seed,
                "draws": run.count(),
                "labels": k.ground().labels(),
                "empirical_marginals": marginals
                    .iter()
                    .map(|&cnt| cnt as f64 / run.count() as f64)
                    .collect::<Vec<_>>(),
            });
            println!("{}", serde_json::to_string_pretty(&summary)?);
            Ok(0)
        }
        Command::Condition { kernel, cylinder } => {
            let k = load_kernel(&kernel.kernel, cli.tol)?;
            let spec = condition_spec(k.ground(), &cylinder)?;
            let conditioned = condition(&k, &spec)?;
            emit_json(out, &kernel_json(&conditioned)?)?;
            Ok(0)
        }
        Command::Dual(input) => {
            let k = load_kernel(&input.kernel, cli.tol)?;
            emit_json(out, &kernel_json(&dual(&k))?)?;
            Ok(0)
        }
        Command::Dilate(input) => {
            let k = load_kernel(&input.kernel, cli.tol)?;
            let lifted = dilate(&k)?;
            emit_json(out, &kernel_json(&projection_kernel(&lifted))?)?;
            Ok(0)
        }
        Command::Ust { graph, enumerate: with_law, n } => {
            run_ust(&graph, with_law, n, cli.seed, cli.format, out)
        }
        Command::Couple { kind } => run_couple(kind, cli.tol, out),
        Command::Experiments { suite, n, trials, ensemble, config, report } => {
            run_experiments(
                suite,
                n,
                trials,
                ensemble.map(Ensemble::from),
                config.as_deref(),
                report.as_deref().or(out),
                cli.seed,
            )
        }
        Command::Oracle { subspace, cylinder } => {
            run_oracle(&subspace, &cylinder, out)
        }
        Command::Zoo { which } => {
            let kernel = match which {
                ZooCommand::Bernoulli { n, p } => zoo::bernoulli(n, p)?,
                ZooCommand::Renewal { n, a } => zoo::renewal_truncated(n, a)?,
                ZooCommand::ZnCharacter { n, js } => {
                    let freqs: Vec<usize> = js
                        .split(',')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(|s| {
                            s.parse::<usize>().map_err(|_| {
                                Error::InvalidArgument(format!(
                                    "frequency `{s}` is not an integer"
                                ))
                            })
                        })
                        .collect::<Result<_>>()?;
                    zoo::zn_character(n, &freqs)?
                }
                ZooCommand::Toeplitz { n, re, im } => {
                    let parse = |text: &str| -> Result<Vec<f64>> {
                        text.split(',')
                            .map(str::trim)
                            .filter(|s| !s.is_empty())
                            .map(|s| {
                                s.parse::<f64>().map_err(|_| {
                                    Error::InvalidArgument(format!(
                                        "coefficient `{s}` is not a number"
                                    ))
                                })
                            })
                            .collect()
                    };
                    let res = parse(&re)?;
                    let ims = parse(&im)?;
                    if !ims.is_empty() && ims.len() != res.len() {
                        return Err(Error::InvalidArgument(
                            "im list must match the re list in length".into(),
                        ));
                    }
                    let coeffs: Vec<_> = res
                        .iter()
                        .enumerate()
                        .map(|(i, &r)| c(r, ims.get(i).copied().unwrap_or(0.0)))
                        .collect();
                    zoo::toeplitz_from_symbol(n, &coeffs)?
                }
            };
            emit_json(out, &kernel_json(&kernel)?)?;
            Ok(0)
        }
    }
}

fn run_ust(
    graph_path: &Path,
    with_law: bool,
    draws: Option<usize>,
    seed: u64,
    format: Format,
    out: Option<&Path>,
) -> Result<u8> {
    let graph = read_graph(graph_path)?;
    let kernel = transfer_current(&graph)?;
    let labels = kernel.ground().labels().to_vec();
    let marginals: Vec<f64> = (0..kernel.size())
        .map(|e| kernel.entries()[(e, e)].re)
        .collect();

    let mut report = json!({
        "version": FORMAT_VERSION,
        "vertices": graph.vertices(),
        "edges": labels,
        "tree_count": tree_count(&graph)?,
        "marginals": marginals,
    });

    if with_law {
        let law = enumerate(&kernel)?;
        if format == Format::Csv {
            emit(out, &distribution_csv(&law))?;
            return Ok(0);
        }
        report["law"] = distribution_json(&law);
    }
    if let Some(n) = draws {
        let run = sample_many(&kernel, n, seed)?;
        let mut counts = vec![0usize; kernel.size()];
        for &mask in &run.outcomes {
            for e in bits(mask) {
                counts[e] += 1;
            }
        }
        report["sampled"] = json!({
            "draws": n,
            "seed": seed,
            "empirical_marginals": counts
                .iter()
                .map(|&cnt| cnt as f64 / n as f64)
                .collect::<Vec<_>>(),
        });
    }
    emit_json(out, &report)?;
    Ok(0)
}

fn witness_json(ground: &Ground, result: &FeasibilityResult) -> serde_json::Value {
    match &result.witness {
        None => serde_json::Value::Null,
        Some(Witness::Table(table)) => json!(table
            .mass()
            .iter()
            .map(|(&(a, b), &m)| {
                json!({
                    "first": ground.labels_of_mask(a),
                    "second": ground.labels_of_mask(b),
                    "mass": m,
                })
            })
            .collect::<Vec<_>>()),
        Some(Witness::Permutations(dist)) => json!(dist
            .support
            .iter()
            .map(|(perm, m)| json!({ "images": perm, "mass": m }))
            .collect::<Vec<_>>()),
    }
}

fn run_couple(kind: CoupleCommand, tol: Option<f64>, out: Option<&Path>) -> Result<u8> {
    let (name, ground, result, check_only) = match kind {
        CoupleCommand::Dominate { p, q, check_only } => {
            let kp = load_kernel(&p, tol)?;
            let kq = load_kernel(&q, tol)?;
            let result = check_domination(&enumerate(&kp)?, &enumerate(&kq)?)?;
            ("dominate", kp.ground().clone(), result, check_only)
        }
        CoupleCommand::Union { k1, k2, union, check_only } => {
            let a = load_kernel(&k1, tol)?;
            let b = load_kernel(&k2, tol)?;
            let u = load_kernel(&union, tol)?;
            let result = find_disjoint_union_coupling(
                &enumerate(&a)?,
                &enumerate(&b)?,
                &enumerate(&u)?,
            )?;
            ("union", a.ground().clone(), result, check_only)
        }
        CoupleCommand::Zn { n, check_only } => {
            let result = complete_coupling_zn(n)?;
            ("zn", Ground::indexed(n)?, result, check_only)
        }
    };
    let mut value = json!({
        "version": FORMAT_VERSION,
        "search": name,
        "feasible": result.feasible,
        "max_violation": result.max_violation,
    });
    if !check_only {
        value["witness"] = witness_json(&ground, &result);
    }
    emit_json(out, &value)?;
    Ok(0)
}

fn run_oracle(subspace: &Path, cylinder: &CylinderArgs, out: Option<&Path>) -> Result<u8> {
    let sub = read_subspace(subspace)?;
    let ground = sub.ground().clone();
    let form = xi(&sub);
    let mut terms: Vec<(Mask, f64, f64)> =
        form.terms().map(|(m, z)| (m, z.re, z.im)).collect();
    terms.sort_by_key(|&(m, _, _)| m);
    let term_values: Vec<serde_json::Value> = terms
        .iter()
        .map(|&(m, re, im)| {
            json!({
                "mask": m,
                "labels": ground.labels_of_mask(m),
                "re": re,
                "im": im,
            })
        })
        .collect();

    let include = parse_labels(&ground, &cylinder.include)?;
    let exclude = parse_labels(&ground, &cylinder.exclude)?;
    let mut value = json!({
        "version": FORMAT_VERSION,
        "dimension": sub.dim(),
        "terms": term_values,
    });
    if include != 0 || exclude != 0 {
        let via_oracle = oracle_cylinder(&sub, include, exclude)?;
        let via_det = cylinder_prob(&projection_kernel(&sub), include, exclude)?;
        value["include"] = json!(ground.labels_of_mask(include));
        value["exclude"] = json!(ground.labels_of_mask(exclude));
        value["oracle"] = json!(via_oracle);
        value["determinant"] = json!(via_det);
        value["difference"] = json!((via_oracle - via_det).abs());
    }
    emit_json(out, &value)?;
    Ok(0)
}

#[derive(serde::Deserialize, Default)]
struct ExperimentConfig {
    n: Option<usize>,
    trials: Option<usize>,
    ensemble: Option<String>,
}

fn merge_reports(mut reports: Vec<CheckReport>) -> Result<CheckReport> {
    let mut merged = reports
        .pop()
        .ok_or_else(|| Error::InvalidArgument("no instances were run".into()))?;
    for r in reports {
        merged.instances += r.instances;
        merged.pass &= r.pass;
        merged.research_flag |= r.research_flag;
        if r.worst_margin < merged.worst_margin {
            merged.worst_margin = r.worst_margin;
        }
        if merged.counterexample.is_none() {
            merged.counterexample = r.counterexample;
        }
    }
    Ok(merged)
}

fn random_split(rng: &mut ChaCha8Rng, elements: &[usize]) -> (Mask, Mask) {
    let mut order: Vec<usize> = elements.to_vec();
    order.shuffle(rng);
    let half = order.len() / 2;
    let first = order[..half].iter().fold(0u64, |m, &e| m | (1 << e));
    let second = order[half..].iter().fold(0u64, |m, &e| m | (1 << e));
    (first, second)
}

fn run_experiments(
    suite: Suite,
    n: Option<usize>,
    trials: Option<usize>,
    ensemble: Option<Ensemble>,
    config: Option<&Path>,
    report_out: Option<&Path>,
    seed: u64,
) -> Result<u8> {
    let file: ExperimentConfig = match config {
        Some(path) => serde_json::from_str(&fs::read_to_string(path)?)?,
        None => ExperimentConfig::default(),
    };
    let n = n.or(file.n).unwrap_or(6);
    let trials = trials.or(file.trials).unwrap_or(100);
    let ensemble = ensemble
        .or(match file.ensemble.as_deref() {
            None => None,
            Some("projections") => Some(Ensemble::Projections),
            Some("clipped-gaussian") => Some(Ensemble::ClippedGaussian),
            Some("toeplitz") => Some(Ensemble::ToeplitzSymbols),
            Some(other) => {
                return Err(Error::InvalidArgument(format!(
                    "unknown ensemble `{other}`"
                )))
            }
        })
        .unwrap_or(Ensemble::ClippedGaussian);
    if trials == 0 {
        return Err(Error::InvalidArgument("at least one trial is required".into()));
    }

    let instance_rng = |i: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i);
        rng
    };
    let derived_seed = |i: u64| seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(i);

    let report = match suite {
        Suite::NegativeAssociation => {
            let reports: Vec<CheckReport> = (0..trials as u64)
                .into_par_iter()
                .map(|i| {
                    let mut rng = instance_rng(i);
                    let kernel = checks::random_clipped_contraction(&mut rng, n)?;
                    let elements: Vec<usize> = (0..n).collect();
                    let (a, b) = random_split(&mut rng, &elements);
                    check_negative_association(&kernel, a, b)
                })
                .collect::<Result<_>>()?;
            merge_reports(reports)?
        }
        Suite::ConditionalNa => {
            let reports: Vec<CheckReport> = (0..trials as u64)
                .into_par_iter()
                .map(|i| {
                    let mut rng = instance_rng(i);
                    let kernel = checks::random_clipped_contraction(&mut rng, n)?;
                    let pivot = rng.random_range(0..n);
                    let spec = if i % 2 == 0 {
                        ConditionSpec::include_only(1 << pivot)
                    } else {
                        ConditionSpec::exclude_only(1 << pivot)
                    };
                    let elements: Vec<usize> =
                        (0..n).filter(|&e| e != pivot).collect();
                    let (a, b) = random_split(&mut rng, &elements);
                    checks::check_conditional_na(&kernel, &spec, a, b)
                })
                .collect::<Result<_>>()?;
            merge_reports(reports)?
        }
        Suite::Bk => {
            let reports: Vec<CheckReport> = (0..trials as u64)
                .into_par_iter()
                .map(|i| {
                    let mut rng = instance_rng(i);
                    let kernel = checks::random_projection_kernel(&mut rng, n)?;
                    bk_search(&kernel, 1, derived_seed(i))
                })
                .collect::<Result<_>>()?;
            merge_reports(reports)?
        }
        Suite::TailCorrelation => {
            let reports: Vec<CheckReport> = (0..trials as u64)
                .into_par_iter()
                .map(|i| {
                    let mut rng = instance_rng(i);
                    let dim = rng.random_range(1..n.max(2));
                    let span = CMat::from_fn(n, dim, |_, _| {
                        c(
                            rng.random::<f64>() * 2.0 - 1.0,
                            rng.random::<f64>() * 2.0 - 1.0,
                        )
                    });
                    let sub = Subspace::new(Ground::indexed(n)?, span)?;
                    let mut order: Vec<usize> = (0..n).collect();
                    order.shuffle(&mut rng);
                    let k_size = rng.random_range(1..=3usize.min(n - 1));
                    let f_size = rng.random_range(1..=(n - k_size));
                    let k_mask = order[..k_size].iter().fold(0u64, |m, &e| m | (1 << e));
                    let f_mask = order[k_size..k_size + f_size]
                        .iter()
                        .fold(0u64, |m, &e| m | (1 << e));
                    check_tail_correlation(&sub, k_mask, f_mask)
                })
                .collect::<Result<_>>()?;
            merge_reports(reports)?
        }
        Suite::EntropyConcavity => {
            entropy_concavity_experiment(trials, n, ensemble, seed)?
        }
        Suite::Concentration => {
            let reports: Vec<CheckReport> = (0..trials as u64)
                .into_par_iter()
                .map(|i| {
                    let mut rng = instance_rng(i);
                    let kernel = checks::random_clipped_contraction(&mut rng, n)?;
                    let a_mask = {
                        let raw = rng.random::<u64>() & kernel.ground().full_mask();
                        if raw == 0 {
                            kernel.ground().full_mask()
                        } else {
                            raw
                        }
                    };
                    concentration_check(&kernel, a_mask)
                })
                .collect::<Result<_>>()?;
            merge_reports(reports)?
        }
    };

    let pass = report.pass;
    let mut value = serde_json::to_value(&report)?;
    value["version"] = json!(FORMAT_VERSION);
    value["seed"] = json!(seed);
    value["n"] = json!(n);
    value["trials"] = json!(trials);
    emit_json(report_out, &value)?;
    Ok(if pass { 0 } else { 2 })
}
