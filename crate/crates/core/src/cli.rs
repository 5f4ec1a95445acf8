//! Command-line front end. Every command prints one JSON document on
//! standard output; diagnostics go to standard error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::TOLERANCES;
use crate::counterfactual::{
    element_of_reality, evaluate, product_rule_check, CounterfactualError, ElementOfReality, ProductRuleStatus,
};
use crate::oracle::random::{RandomBounds, RandomCase};
use crate::oracle::{cross_check, monte_carlo, substream, ForwardRun, OracleError};
use crate::scenario::{self, Scenario};
use crate::two_state::{abl_single, joint_weights, EventKey, MeasurementEvent, ProbabilityTable, TsvfError};

pub const SEED_ENV: &str = "TSVF_SEED";
const DEFAULT_SAMPLES: u64 = 100_000;

/// Exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_MEANINGLESS: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "tsvf", version, about = "Counterfactuals for pre- and post-selected quantum systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// Scenario file.
    file: Option<PathBuf>,
    /// Use a built-in scenario instead of a file.
    #[arg(long, value_name = "NAME")]
    builtin: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Evaluate every query of the scenario.
    Eval {
        #[command(flatten)]
        source: Source,
        /// Exit with status 2 when any verdict is meaningless.
        #[arg(long)]
        strict_meaningless: bool,
    },
    /// ABL distribution and element of reality of single observables.
    Elements {
        #[command(flatten)]
        source: Source,
        #[arg(long = "obs", value_name = "NAME", num_args = 1.., required = true)]
        obs: Vec<String>,
    },
    /// Compare the ABL rule with forward Born-rule enumeration.
    Check {
        #[command(flatten)]
        source: Source,
        /// Also check this many random scenarios.
        #[arg(long, value_name = "N")]
        random: Option<usize>,
        /// Largest subsystem dimension of random scenarios.
        #[arg(long, value_name = "D", default_value_t = 4)]
        dim: usize,
        /// Largest number of events in random scenarios.
        #[arg(long, value_name = "E", default_value_t = 3)]
        events: usize,
        #[arg(long, value_name = "S")]
        seed: Option<u64>,
    },
    /// Sample the forward process with post-selection by rejection.
    Simulate {
        #[command(flatten)]
        source: Source,
        #[arg(long, value_name = "N")]
        samples: Option<u64>,
        #[arg(long, value_name = "S")]
        seed: Option<u64>,
    },
    /// Print the canonical form of a scenario file.
    Fmt { file: PathBuf },
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(out, "{text}");
                    EXIT_OK
                }
                _ => {
                    let _ = write!(err, "{text}");
                    EXIT_ERROR
                }
            };
        }
    };
    let env_seed = std::env::var(SEED_ENV).ok();
    match dispatch(cli.command, env_seed.as_deref(), out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            EXIT_ERROR
        }
    }
}

fn dispatch(command: Command, env_seed: Option<&str>, out: &mut dyn Write) -> Result<i32> {
    match command {
        Command::Eval {
            source,
            strict_meaningless,
        } => {
            let s = load(&source)?;
            let report = eval_report(&s)?;
            let meaningless = report.queries.iter().any(|q| q.verdict == "meaningless");
            emit(out, &report)?;
            Ok(if strict_meaningless && meaningless { EXIT_MEANINGLESS } else { EXIT_OK })
        }
        Command::Elements { source, obs } => {
            let s = load(&source)?;
            emit(out, &elements_report(&s, &obs)?)?;
            Ok(EXIT_OK)
        }
        Command::Check {
            source,
            random,
            dim,
            events,
            seed,
        } => {
            let s = load(&source)?;
            let seed = resolve_seed(seed, env_seed, &s)?;
            let report = check_report(&s, random.map(|n| (n, dim, events, seed)))?;
            let passed = report.passed;
            emit(out, &report)?;
            Ok(if passed { EXIT_OK } else { EXIT_ERROR })
        }
        Command::Simulate { source, samples, seed } => {
            let s = load(&source)?;
            let seed = resolve_seed(seed, env_seed, &s)?;
            let samples = samples.or(s.config.map(|c| c.samples)).unwrap_or(DEFAULT_SAMPLES);
            if samples == 0 {
                bail!("--samples must be positive");
            }
            emit(out, &simulate_report(&s, samples, seed)?)?;
            Ok(EXIT_OK)
        }
        Command::Fmt { file } => {
            let text = read(&file)?;
            let s = scenario::parse(&text).with_context(|| file.display().to_string())?;
            out.write_all(scenario::serialize(&s).as_bytes())?;
            Ok(EXIT_OK)
        }
    }
}

fn read(path: &PathBuf) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn load(source: &Source) -> Result<Scenario> {
    match (&source.file, &source.builtin) {
        (_, Some(name)) => Ok(scenario::builtin(name)?),
        (Some(path), None) => {
            let text = read(path)?;
            scenario::parse(&text).with_context(|| path.display().to_string())
        }
        (None, None) => bail!("a scenario file or --builtin NAME is required"),
    }
}

/// Flag, then environment, then the scenario's `config` line, then 0.
fn resolve_seed(flag: Option<u64>, env: Option<&str>, s: &Scenario) -> Result<u64> {
    if let Some(seed) = flag {
        return Ok(seed);
    }
    if let Some(text) = env {
        return text
            .trim()
            .parse()
            .with_context(|| format!("{SEED_ENV}={text:?} is not an unsigned integer"));
    }
    Ok(s.config.map(|c| c.seed).unwrap_or(0))
}

fn emit<T: Serialize>(out: &mut dyn Write, report: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, report)?;
    writeln!(out)?;
    Ok(())
}

#[derive(Serialize)]
struct Header<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    scenario: &'a str,
}

fn header<'a>(command: &'static str, s: &'a Scenario) -> Header<'a> {
    Header {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        command,
        scenario: &s.name,
    }
}

#[derive(Serialize)]
struct SlotRef {
    slot: u32,
    observable: String,
}

#[derive(Serialize)]
struct QueryRecord {
    label: String,
    replacement: Vec<SlotRef>,
    property: String,
    verdict: &'static str,
    probability: Option<f64>,
    denominator: f64,
    table: ProbabilityTable,
}

#[derive(Serialize)]
struct ElementRecord {
    observable: String,
    /// `certain`, `uncertain` or `meaningless`.
    status: &'static str,
    element: Option<ElementOfReality>,
}

#[derive(Serialize)]
struct ProductRecord {
    a: String,
    b: String,
    ab: String,
    status: ProductRuleStatus,
    lhs: Option<f64>,
    rhs: Option<f64>,
}

#[derive(Serialize)]
struct EvalReport<'a> {
    #[serde(flatten)]
    header: Header<'a>,
    queries: Vec<QueryRecord>,
    elements: Vec<ElementRecord>,
    product_rule: Vec<ProductRecord>,
}

fn element_record(s: &Scenario, name: &str) -> Result<ElementRecord> {
    let obs = s
        .observable(name)
        .with_context(|| format!("unknown observable {name}"))?;
    let tsv = s.two_state()?;
    let (status, element) = match element_of_reality(&tsv, &obs.decomposition) {
        Ok(Some(e)) => ("certain", Some(e)),
        Ok(None) => ("uncertain", None),
        Err(CounterfactualError::Meaningless { .. }) => ("meaningless", None),
        Err(e) => return Err(e.into()),
    };
    Ok(ElementRecord {
        observable: name.to_string(),
        status,
        element,
    })
}

fn eval_report(s: &Scenario) -> Result<EvalReport<'_>> {
    let world = s.world();
    let mut queries = Vec::new();
    for (q, decl) in s.queries().into_iter().zip(&s.queries) {
        let verdict = evaluate(&world, &q).with_context(|| format!("query {}", q.label))?;
        queries.push(QueryRecord {
            replacement: decl
                .replacement
                .iter()
                .map(|(slot, name)| SlotRef {
                    slot: *slot,
                    observable: name.clone(),
                })
                .collect(),
            property: q.property.to_string(),
            verdict: verdict.kind.name(),
            probability: verdict.probability,
            denominator: verdict.table.denominator,
            table: verdict.table,
            label: q.label,
        });
    }
    let elements = s
        .observables
        .iter()
        .map(|o| element_record(s, &o.name))
        .collect::<Result<Vec<_>>>()?;
    let tsv = s.two_state()?;
    let mut product_rule = Vec::new();
    for (a, b, ab) in s.products() {
        let r = match product_rule_check(&tsv, &a.decomposition, &b.decomposition, &ab.decomposition) {
            Ok(r) => (r.status, r.lhs, r.rhs),
            Err(CounterfactualError::Meaningless { .. }) => (ProductRuleStatus::Inapplicable, None, None),
            Err(e) => return Err(e.into()),
        };
        product_rule.push(ProductRecord {
            a: a.name.clone(),
            b: b.name.clone(),
            ab: ab.name.clone(),
            status: r.0,
            lhs: r.1,
            rhs: r.2,
        });
    }
    Ok(EvalReport {
        header: header("eval", s),
        queries,
        elements,
        product_rule,
    })
}

#[derive(Serialize)]
struct ObservableRecord {
    #[serde(flatten)]
    element: ElementRecord,
    /// Absent when the pre- and post-selected states are orthogonal.
    table: Option<ProbabilityTable>,
}

#[derive(Serialize)]
struct ElementsReport<'a> {
    #[serde(flatten)]
    header: Header<'a>,
    observables: Vec<ObservableRecord>,
}

fn elements_report<'a>(s: &'a Scenario, names: &[String]) -> Result<ElementsReport<'a>> {
    let tsv = s.two_state()?;
    let mut observables = Vec::new();
    for name in names {
        let element = element_record(s, name)?;
        let obs = &s.observable(name).expect("checked above").decomposition;
        let table = match abl_single(&tsv, obs) {
            Ok(t) => Some(t),
            Err(TsvfError::ZeroDenominator { .. }) => None,
            Err(e) => return Err(e.into()),
        };
        observables.push(ObservableRecord { element, table });
    }
    Ok(ElementsReport {
        header: header("elements", s),
        observables,
    })
}

#[derive(Serialize)]
struct CheckRecord {
    label: String,
    /// `agree`, `disagree` or `meaningless` (both routes find a vanishing denominator).
    status: &'static str,
    max_discrepancy: Option<f64>,
    abl_denominator: f64,
    exact_denominator: f64,
    sequences: usize,
}

#[derive(Serialize)]
struct RandomBlock {
    count: usize,
    max_subsystem_dim: usize,
    max_events: usize,
    seed: u64,
    max_discrepancy: f64,
    cases: Vec<CheckRecord>,
}

#[derive(Serialize)]
struct CheckReport<'a> {
    #[serde(flatten)]
    header: Header<'a>,
    tolerance: f64,
    passed: bool,
    max_discrepancy: f64,
    checks: Vec<CheckRecord>,
    random: Option<RandomBlock>,
}

fn check_one(label: String, tsv: &crate::two_state::TwoStateVector, events: &[MeasurementEvent]) -> Result<CheckRecord> {
    Ok(match cross_check(tsv, events) {
        Ok(r) => CheckRecord {
            label,
            status: if r.max_discrepancy < TOLERANCES.arithmetic { "agree" } else { "disagree" },
            max_discrepancy: Some(r.max_discrepancy),
            abl_denominator: r.abl_denominator,
            exact_denominator: r.exact_denominator,
            sequences: r.sequences,
        },
        Err(OracleError::ZeroDenominator { probability }) => CheckRecord {
            label,
            status: "meaningless",
            max_discrepancy: None,
            abl_denominator: 0.0,
            exact_denominator: probability,
            sequences: 0,
        },
        Err(e) => return Err(e.into()),
    })
}

fn max_of(records: &[CheckRecord]) -> f64 {
    records.iter().filter_map(|r| r.max_discrepancy).fold(0.0, f64::max)
}

/// Events checked for a scenario: fixed events plus each query's replacement,
/// or the fixed events alone when there are no queries.
fn check_sets(s: &Scenario) -> Vec<(String, Vec<MeasurementEvent>)> {
    let queries = s.queries();
    if queries.is_empty() {
        let fixed = s.world().fixed.into_iter().map(|r| r.event).collect();
        return vec![("fixed".to_string(), fixed)];
    }
    queries.iter().map(|q| (q.label.clone(), s.query_events(q))).collect()
}

fn check_report(s: &Scenario, random: Option<(usize, usize, usize, u64)>) -> Result<CheckReport<'_>> {
    let tsv = s.two_state()?;
    let checks = check_sets(s)
        .into_iter()
        .map(|(label, events)| check_one(label, &tsv, &events))
        .collect::<Result<Vec<_>>>()?;
    let random = match random {
        None => None,
        Some((count, dim, max_events, seed)) => {
            if dim < 2 || max_events == 0 {
                bail!("--dim must be at least 2 and --events at least 1");
            }
            let bounds = RandomBounds {
                max_subsystem_dim: dim,
                max_events,
                ..RandomBounds::default()
            };
            let cases = (0..count)
                .into_par_iter()
                .map(|i| {
                    let mut rng: ChaCha8Rng = substream(seed, i as u64);
                    let case = RandomCase::generate(&mut rng, bounds)?;
                    check_one(format!("random-{i}"), &case.tsv, &case.events)
                })
                .collect::<Result<Vec<_>>>()?;
            Some(RandomBlock {
                count,
                max_subsystem_dim: dim,
                max_events,
                seed,
                max_discrepancy: max_of(&cases),
                cases,
            })
        }
    };
    let all = checks.iter().chain(random.iter().flat_map(|r| &r.cases));
    let passed = all.clone().all(|r| r.status != "disagree");
    let max_discrepancy = max_of(&checks).max(random.as_ref().map_or(0.0, |r| r.max_discrepancy));
    Ok(CheckReport {
        header: header("check", s),
        tolerance: TOLERANCES.arithmetic,
        passed,
        max_discrepancy,
        checks,
        random,
    })
}

#[derive(Serialize)]
struct SequenceRecord {
    outcomes: Vec<f64>,
    count: u64,
    /// Among accepted samples consistent with the fixed results.
    frequency: Option<f64>,
    abl_probability: Option<f64>,
}

#[derive(Serialize)]
struct SimulationRecord {
    label: String,
    events: Vec<EventKey>,
    /// `ok` or `meaningless` when no sample is consistent with the fixed results.
    status: &'static str,
    total: u64,
    accepted: u64,
    consistent: u64,
    sequences: Vec<SequenceRecord>,
}

#[derive(Serialize)]
struct SimulateReport<'a> {
    #[serde(flatten)]
    header: Header<'a>,
    samples: u64,
    seed: u64,
    workers: u64,
    runs: Vec<SimulationRecord>,
}

fn simulate_report(s: &Scenario, samples: u64, seed: u64) -> Result<SimulateReport<'_>> {
    let tsv = s.two_state()?;
    let fixed: BTreeMap<String, f64> = s
        .world()
        .fixed
        .iter()
        .filter_map(|r| Some((r.event.key().to_string(), r.outcome?)))
        .collect();
    let mut runs = Vec::new();
    for (label, events) in check_sets(s) {
        let run = ForwardRun::from_two_state(&tsv, &events)?;
        let keys: Vec<EventKey> = events.iter().map(|e| e.key()).collect();
        let consistent = |table_keys: &[EventKey], outcomes: &[f64]| {
            table_keys.iter().zip(outcomes).all(|(k, v)| {
                fixed
                    .get(&k.to_string())
                    .is_none_or(|want| (want - v).abs() <= TOLERANCES.structural)
            })
        };
        let weights = joint_weights(&tsv, &events, &run.evolution)?;
        let abl_total: f64 = weights
            .entries
            .iter()
            .filter(|e| consistent(&weights.events, &e.outcomes))
            .map(|e| e.weight)
            .sum();
        let abl = |outcomes: &[f64]| -> Option<f64> {
            if abl_total < TOLERANCES.zero_denominator {
                return None;
            }
            let order: Vec<usize> = weights
                .events
                .iter()
                .map(|k| keys.iter().position(|x| x == k).expect("same events"))
                .collect();
            weights
                .entries
                .iter()
                .find(|e| order.iter().zip(&e.outcomes).all(|(&i, v)| (outcomes[i] - v).abs() <= TOLERANCES.structural))
                .map(|e| if consistent(&weights.events, &e.outcomes) { e.weight / abl_total } else { 0.0 })
        };
        match monte_carlo(&run, samples, seed) {
            Ok(table) => {
                let ok = |outcomes: &[f64]| consistent(&table.events, outcomes);
                let rows: Vec<(Vec<f64>, u64)> = table
                    .counts
                    .iter()
                    .map(|(bits, n)| (bits.iter().map(|b| b.value()).collect(), *n))
                    .collect();
                let n_consistent: u64 = rows.iter().filter(|(o, _)| ok(o)).map(|(_, n)| n).sum();
                let reorder: Vec<usize> = keys
                    .iter()
                    .map(|k| table.events.iter().position(|x| x == k).expect("same events"))
                    .collect();
                let sequences = rows
                    .iter()
                    .map(|(o, n)| {
                        let in_key_order: Vec<f64> = reorder.iter().map(|&i| o[i]).collect();
                        SequenceRecord {
                            frequency: (n_consistent > 0 && ok(o)).then(|| *n as f64 / n_consistent as f64),
                            abl_probability: abl(&in_key_order),
                            outcomes: in_key_order,
                            count: *n,
                        }
                    })
                    .collect();
                runs.push(SimulationRecord {
                    label,
                    events: keys,
                    status: if n_consistent > 0 { "ok" } else { "meaningless" },
                    total: table.total,
                    accepted: table.accepted,
                    consistent: n_consistent,
                    sequences,
                });
            }
            Err(OracleError::AllRejected { total, .. }) => runs.push(SimulationRecord {
                label,
                events: keys,
                status: "meaningless",
                total,
                accepted: 0,
                consistent: 0,
                sequences: Vec::new(),
            }),
            Err(e) => return Err(e.into()),
        }
    }
    Ok(SimulateReport {
        header: header("simulate", s),
        samples,
        seed,
        workers: crate::oracle::MC_WORKERS,
        runs,
    })
}
