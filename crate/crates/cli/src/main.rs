//! `ppcf`: batch analyses of probabilistic PCF programs. Results go to
//! stdout as JSON (CSV for `figure`), logs to stderr.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde_json::{json, Value};
use thiserror::Error;

use ppcf_core::adequacy::adequacy_check;
use ppcf_core::figure::{figure_rows, to_csv};
use ppcf_core::machine::{
    enumerate, estimate_conditional_count, sample_many, summarize, Budget, MachineError, State,
    DEFAULT_MAX_CHOICES, DEFAULT_MAX_STEPS,
};
use ppcf_core::pcs::{
    chain_rule_check, distance_axioms_check, first_order_check, ground_distance, lipschitz_check,
    parse_contexts, tamed_bound_check, CheckReport, PcsError, SeriesSource,
};
use ppcf_core::semantics::{
    denot, expected_count, spy_denot, Dual, Env, Estimate, SemConfig, SemError,
};
use ppcf_core::syntax::build::dice;
use ppcf_core::syntax::{
    parse, typecheck_closed, Label, SyntaxError, TermRef, Type, TypeError, TypingContext,
};
use ppcf_core::translate::{lcof, spy, strip, RateAssignment, SpyVarMap, TranslateError};

const BUNDLED_CONTEXTS: &str = include_str!("../../../corpus/contexts.ctx");

#[derive(Parser, Debug)]
#[command(
    name = "ppcf",
    version,
    about = "Probabilistic PCF: run, denote, differentiate, compare"
)]
struct Cli {
    /// Suppress logs on stderr.
    #[arg(long, global = true)]
    quiet: bool,
    /// Worker threads for trial parallelism (default: available parallelism).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct SemArgs {
    /// Largest numeral tracked exactly.
    #[arg(long, default_value_t = SemConfig::default().nmax)]
    nmax: usize,
    /// Kleene unrolling budget per fixpoint.
    #[arg(long, default_value_t = SemConfig::default().fix_iters)]
    fix_iters: usize,
    /// Stopping tolerance of Kleene iteration.
    #[arg(long, default_value_t = SemConfig::default().tol)]
    tol: f64,
}

impl SemArgs {
    fn config(&self) -> Result<SemConfig, CliError> {
        let cfg = SemConfig {
            nmax: self.nmax,
            fix_iters: self.fix_iters,
            tol: self.tol,
            ..SemConfig::default()
        };
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Args, Debug, Clone)]
struct BudgetArgs {
    /// Step budget per run.
    #[arg(long, default_value_t = DEFAULT_MAX_STEPS)]
    max_steps: u64,
    /// Longest choice sequence explored by exhaustive enumeration.
    #[arg(long, default_value_t = DEFAULT_MAX_CHOICES)]
    max_choices: usize,
}

impl BudgetArgs {
    fn budget(&self) -> Budget {
        Budget {
            max_steps: self.max_steps,
            max_choice_len: self.max_choices,
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the machine: exhaustive enumeration or Monte Carlo sampling.
    Eval {
        file: PathBuf,
        #[arg(long, conflicts_with = "samples")]
        exhaustive: bool,
        /// Number of Monte Carlo samples.
        #[arg(long)]
        samples: Option<u64>,
        #[command(flatten)]
        budget: BudgetArgs,
        #[arg(long, env = "PPCF_SEED", default_value_t = 0)]
        seed: u64,
    },
    /// Denotation of a closed program of type nat. Labelled subterms pass
    /// with the probability given by `--rate` (default 1).
    Denot {
        file: PathBuf,
        #[command(flatten)]
        sem: SemArgs,
        /// Per-label rate, as `label=value`.
        #[arg(long = "rate", value_parser = parse_rate_arg)]
        rates: Vec<(Label, BigRational)>,
    },
    /// Expected number of crossings of a label, given convergence to 0.
    Expect {
        file: PathBuf,
        #[arg(long)]
        label: String,
        #[arg(long, value_enum, default_value_t = Method::Dual)]
        method: Method,
        /// Monte Carlo samples.
        #[arg(long, default_value_t = 100_000)]
        samples: u64,
        /// Step budget per Monte Carlo run.
        #[arg(long, default_value_t = 100_000)]
        max_steps: u64,
        #[arg(long, env = "PPCF_SEED", default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        sem: SemArgs,
    },
    /// Denotational distance between two programs of type nat.
    Dist {
        left: PathBuf,
        right: PathBuf,
        /// Also report the tamed bound `p/(1-p) * distance`.
        #[arg(long)]
        p: Option<String>,
        #[command(flatten)]
        sem: SemArgs,
    },
    /// Print a program translated by one of the label translations.
    Translate {
        file: PathBuf,
        #[arg(long, value_enum)]
        mode: Mode,
        /// Per-label rate for `lcof`, as `label=value`.
        #[arg(long = "rate", value_parser = parse_rate_arg)]
        rates: Vec<(Label, BigRational)>,
    },
    /// Randomized or corpus-based property suites; exit status 1 on any
    /// violation.
    Check {
        #[arg(value_enum)]
        suite: Suite,
        /// Number of trials (programs for `adequacy`).
        #[arg(long)]
        trials: Option<u64>,
        /// Norm bound for `lipschitz`, taming probability for `tamed`.
        #[arg(long, default_value = "1/2")]
        p: String,
        #[arg(long, env = "PPCF_SEED", default_value_t = 0)]
        seed: u64,
        /// Context corpus for `tamed` (default: the bundled corpus).
        #[arg(long)]
        contexts: Option<PathBuf>,
        /// Programs compared by `tamed` (default: dice(0) and dice(1/10)).
        #[arg(long, requires = "right")]
        left: Option<PathBuf>,
        #[arg(long, requires = "left")]
        right: Option<PathBuf>,
        /// Enumeration budget for `adequacy`.
        #[arg(long, default_value_t = 100_000)]
        max_steps: u64,
        #[arg(long, default_value_t = 16)]
        max_choices: usize,
        #[command(flatten)]
        sem: SemArgs,
    },
    /// Sweep data for the `M_q` curves.
    Figure {
        /// Grid points per curve, minus one.
        #[arg(long, default_value_t = 20)]
        steps: u32,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[command(flatten)]
        sem: SemArgs,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Method {
    Dual,
    Mc,
    Both,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Mode {
    Lcof,
    Spy,
    Strip,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Suite {
    Lipschitz,
    Chain,
    Distance,
    Adequacy,
    Tamed,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{source}")]
    Syntax { path: PathBuf, source: SyntaxError },
    #[error("{path}: {source}")]
    Type { path: PathBuf, source: TypeError },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Semantics(#[from] SemError),
    #[error(transparent)]
    Translate(#[from] TranslateError),
    #[error(transparent)]
    Pcs(#[from] PcsError),
    /// The result was printed; the budget decided nothing.
    #[error("the budget ended every run before it finished")]
    EmptyBudget,
    /// The report was printed.
    #[error("{0} violation(s)")]
    Violation(u64),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Violation(_) => 1,
            CliError::EmptyBudget => 3,
            _ => 2,
        }
    }
}

struct Log {
    quiet: bool,
}

impl Log {
    fn info(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("ppcf: {}", msg.as_ref());
        }
    }
}

/// `a/b`, or a decimal such as `0.99`, as an exact rational in `[0, 1]`.
fn parse_prob(s: &str) -> Result<BigRational, String> {
    let s = s.trim();
    let bad = || format!("`{s}` is not a probability (use a/b or a decimal)");
    let r = if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|_| bad())?;
        let d: BigInt = d.trim().parse().map_err(|_| bad())?;
        if d.is_zero() {
            return Err(bad());
        }
        BigRational::new(n, d)
    } else {
        let (int, frac) = s.split_once('.').unwrap_or((s, ""));
        if int.is_empty() && frac.is_empty()
            || !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit())
        {
            return Err(bad());
        }
        let digits: BigInt = format!("{int}{frac}").parse().map_err(|_| bad())?;
        BigRational::new(digits, BigInt::from(10).pow(frac.len() as u32))
    };
    if r < BigRational::zero() || r > BigRational::from_integer(1.into()) {
        return Err(bad());
    }
    Ok(r)
}

fn parse_rate_arg(s: &str) -> Result<(Label, BigRational), String> {
    let (l, r) = s
        .split_once('=')
        .ok_or_else(|| format!("`{s}` should look like label=rate"))?;
    if l.is_empty() {
        return Err(format!("`{s}` has an empty label"));
    }
    Ok((Label::new(l), parse_prob(r)?))
}

fn read_program(path: &Path) -> Result<TermRef, CliError> {
    let src = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.into(),
        source,
    })?;
    parse(&src).map_err(|source| CliError::Syntax {
        path: path.into(),
        source,
    })
}

/// A closed program of type nat.
fn read_nat_program(path: &Path) -> Result<TermRef, CliError> {
    let t = read_program(path)?;
    let ty = typecheck_closed(&t).map_err(|source| CliError::Type {
        path: path.into(),
        source,
    })?;
    if ty != Type::Nat {
        return Err(CliError::Usage(format!(
            "{}: program has type {ty}, expected nat",
            path.display()
        )));
    }
    Ok(t)
}

/// Writes one line to stdout; a closed pipe is not an error.
fn emit(line: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}").and_then(|_| out.flush());
}

fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().expect("finite")
}

fn estimate_json(e: Option<Estimate>) -> Value {
    match e {
        Some(e) => serde_json::to_value(e).expect("serializable"),
        None => Value::Null,
    }
}

fn report_json(r: &CheckReport) -> Value {
    serde_json::to_value(r).expect("serializable")
}

fn run(cli: Cli, log: &Log) -> Result<String, CliError> {
    match cli.command {
        Command::Eval {
            file,
            exhaustive: _,
            samples,
            budget,
            seed,
        } => {
            let t = read_nat_program(&file)?;
            let state = State::initial(t);
            match samples {
                Some(n) => {
                    log.info(format!("sampling {n} runs with seed {seed}"));
                    let outcomes = sample_many(&state, seed, n, budget.max_steps);
                    let summary = summarize(&outcomes);
                    let out = serde_json::to_string(&summary).expect("serializable");
                    if summary.out_of_steps == summary.samples && n > 0 {
                        emit(&out);
                        return Err(CliError::EmptyBudget);
                    }
                    Ok(out)
                }
                None => {
                    log.info("enumerating every run within the budget");
                    let r = enumerate(&state, budget.budget());
                    let out = serde_json::to_string(&r).expect("serializable");
                    let decided = &r.converged_mass + &r.rejected_mass + &r.diverged_mass;
                    if decided.is_zero() {
                        emit(&out);
                        return Err(CliError::EmptyBudget);
                    }
                    Ok(out)
                }
            }
        }
        Command::Denot { file, sem, rates } => {
            let cfg = sem.config()?;
            let t = read_nat_program(&file)?;
            let labels = t.labels();
            for (l, _) in &rates {
                if !labels.contains(l) {
                    return Err(CliError::Usage(format!(
                        "label `{l}` does not occur in the program"
                    )));
                }
            }
            let (dist, pending, unconverged) = if labels.is_empty() {
                let d = denot(&t, &Env::new(), &cfg)?;
                let dist = d.value.as_dist().expect("nat").clone();
                let pending = dist.pending();
                (dist, pending, d.unconverged)
            } else {
                let point: BTreeMap<Label, Dual> = rates
                    .iter()
                    .map(|(l, r)| (l.clone(), Dual::constant(to_f64(r))))
                    .collect();
                let g = spy_denot(&t, &point, &cfg)?;
                (g.dist, g.pending, g.unconverged)
            };
            if unconverged {
                log.info("Kleene iteration hit --fix-iters before converging");
            }
            Ok(json!({
                "dist": dist,
                "mass": dist.mass(),
                "pending": pending,
                "unconverged": unconverged,
            })
            .to_string())
        }
        Command::Expect {
            file,
            label,
            method,
            samples,
            max_steps,
            seed,
            sem,
        } => {
            let cfg = sem.config()?;
            let t = read_nat_program(&file)?;
            let l = Label::new(&label);
            if !t.labels().contains(&l) {
                return Err(CliError::Usage(format!(
                    "label `{label}` does not occur in the program"
                )));
            }
            let mut out = serde_json::Map::new();
            out.insert("label".into(), json!(label));
            let mut dual_value = None;
            if method != Method::Mc {
                let e = expected_count(&t, &l, &cfg)?;
                dual_value = e.conditional.and_then(Estimate::value);
                let v = if e.conditional == Some(Estimate::Diverges) {
                    json!("DIVERGES")
                } else {
                    json!({
                        "conditional": estimate_json(e.conditional),
                        "raw": estimate_json(Some(e.raw)),
                        "p_conv": e.p_conv,
                        "fix_iters": e.fix_iters,
                        "unconverged": e.unconverged,
                    })
                };
                out.insert("dual".into(), v);
            }
            if method != Method::Dual {
                log.info(format!("sampling {samples} runs with seed {seed}"));
                match estimate_conditional_count(&t, &l, samples, max_steps, seed) {
                    Ok(mc) => {
                        if let Some(d) = dual_value {
                            out.insert("gap".into(), json!((d - mc.mean).abs()));
                        }
                        out.insert("mc".into(), serde_json::to_value(mc).expect("serializable"));
                    }
                    Err(e @ MachineError::NoConvergedSamples(_)) => {
                        log.info(e.to_string());
                        out.insert("mc".into(), Value::Null);
                    }
                }
            }
            Ok(Value::Object(out).to_string())
        }
        Command::Dist {
            left,
            right,
            p,
            sem,
        } => {
            let cfg = sem.config()?;
            let (a, b) = (read_nat_program(&left)?, read_nat_program(&right)?);
            let d = ground_distance(&a, &b, &cfg)?;
            let mut out = json!({ "distance": d });
            if let Some(p) = p {
                let p = parse_prob(&p).map_err(CliError::Usage)?;
                let pf = to_f64(&p);
                if pf >= 1.0 {
                    return Err(CliError::Usage("p must lie in [0, 1)".into()));
                }
                out["p"] = json!(pf);
                out["tamed_bound"] = json!(pf / (1.0 - pf) * d);
            }
            Ok(out.to_string())
        }
        Command::Translate { file, mode, rates } => {
            let t = read_program(&file)?;
            let ctx = TypingContext::new();
            typecheck_closed(&t).map_err(|source| CliError::Type {
                path: file.clone(),
                source,
            })?;
            let out = match mode {
                Mode::Strip => json!({ "mode": "strip", "term": strip(&t).to_string() }),
                Mode::Lcof => {
                    let r = lcof(&t, &ctx, &RateAssignment(rates.into_iter().collect()))?;
                    json!({ "mode": "lcof", "term": r.to_string() })
                }
                Mode::Spy => {
                    let vars = SpyVarMap::fresh_for(&t);
                    let r = spy(&t, &ctx, &vars)?;
                    let vars: BTreeMap<String, String> = vars
                        .0
                        .iter()
                        .map(|(l, x)| (l.to_string(), x.to_string()))
                        .collect();
                    json!({ "mode": "spy", "term": r.to_string(), "variables": vars })
                }
            };
            Ok(out.to_string())
        }
        Command::Check {
            suite,
            trials,
            p,
            seed,
            contexts,
            left,
            right,
            max_steps,
            max_choices,
            sem,
        } => {
            let cfg = sem.config()?;
            let p = parse_prob(&p).map_err(CliError::Usage)?;
            let pf = to_f64(&p);
            if pf >= 1.0 {
                return Err(CliError::Usage("p must lie in [0, 1)".into()));
            }
            let (value, violations) = match suite {
                Suite::Lipschitz => {
                    let source = SeriesSource::Random {
                        web_size: 3,
                        max_degree: 4,
                        max_terms: 8,
                    };
                    let r = lipschitz_check(source, pf, trials.unwrap_or(10_000), seed);
                    (report_json(&r), r.violations)
                }
                Suite::Chain => {
                    let n = trials.unwrap_or(1_000);
                    let c = chain_rule_check(n, 1e-9, seed);
                    let f = first_order_check(n, seed);
                    let v = c.violations + f.violations;
                    (
                        json!({ "chain_rule": report_json(&c), "first_order": report_json(&f) }),
                        v,
                    )
                }
                Suite::Distance => {
                    let r = distance_axioms_check(trials.unwrap_or(10_000), seed);
                    (report_json(&r), r.violations)
                }
                Suite::Adequacy => {
                    let budget = Budget {
                        max_steps,
                        max_choice_len: max_choices,
                    };
                    let n = trials.unwrap_or(50) as usize;
                    log.info(format!("sandwiching {n} generated programs"));
                    let r = adequacy_check(n, seed, budget, &cfg)?;
                    let v = r.violations as u64;
                    (serde_json::to_value(r).expect("serializable"), v)
                }
                Suite::Tamed => {
                    let src = match &contexts {
                        Some(path) => {
                            std::fs::read_to_string(path).map_err(|source| CliError::Io {
                                path: path.clone(),
                                source,
                            })?
                        }
                        None => BUNDLED_CONTEXTS.to_string(),
                    };
                    let path = contexts
                        .clone()
                        .unwrap_or_else(|| "<bundled contexts>".into());
                    let ctxs =
                        parse_contexts(&src).map_err(|source| CliError::Syntax { path, source })?;
                    let (m, m2) = match (&left, &right) {
                        (Some(a), Some(b)) => (read_nat_program(a)?, read_nat_program(b)?),
                        _ => (
                            dice(BigRational::zero()),
                            dice(BigRational::new(1.into(), 10.into())),
                        ),
                    };
                    log.info(format!("{} contexts, p = {p}", ctxs.len()));
                    let r = tamed_bound_check(&m, &m2, &p, &ctxs, &cfg)?;
                    let v = r.violations as u64;
                    (serde_json::to_value(r).expect("serializable"), v)
                }
            };
            let mut value = value;
            value["passed"] = json!(violations == 0);
            emit(&value.to_string());
            if violations > 0 {
                return Err(CliError::Violation(violations));
            }
            Ok(String::new())
        }
        Command::Figure { steps, format, sem } => {
            let cfg = sem.config()?;
            if steps == 0 {
                return Err(CliError::Usage("--steps must be positive".into()));
            }
            let rows = figure_rows(steps, &cfg)?;
            Ok(match format {
                Format::Csv => to_csv(&rows).trim_end().to_string(),
                Format::Json => serde_json::to_string(&rows).expect("serializable"),
            })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let log = Log { quiet: cli.quiet };
    if let Some(n) = cli.jobs {
        if n == 0 {
            log.info("--jobs must be positive");
            return ExitCode::from(2);
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .expect("thread pool is configured once");
    }
    match run(cli, &log) {
        Ok(out) => {
            if !out.is_empty() {
                emit(&out);
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            // Usage and input errors are reported even under --quiet.
            eprintln!("ppcf: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn probabilities() {
        assert_eq!(parse_prob("1/4"), Ok(r(1, 4)));
        assert_eq!(parse_prob("0.99"), Ok(r(99, 100)));
        assert_eq!(parse_prob("1"), Ok(r(1, 1)));
        assert_eq!(parse_prob(".5"), Ok(r(1, 2)));
        for bad in ["", ".", "2", "1/0", "-1/2", "x", "0.5.1", "3/2"] {
            assert!(parse_prob(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn rates() {
        assert_eq!(parse_rate_arg("l=0.99"), Ok((Label::new("l"), r(99, 100))));
        assert!(parse_rate_arg("l").is_err());
        assert!(parse_rate_arg("=1").is_err());
    }

    #[test]
    fn cli_is_well_formed() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
