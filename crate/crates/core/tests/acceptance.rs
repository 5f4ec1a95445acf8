//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero if any failed.

mod common;

use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tsvf::counterfactual::{element_of_reality, evaluate, product_rule_check, ProductRuleStatus, PropertyExpr, Term, VerdictKind};
use tsvf::oracle::random::{RandomBounds, RandomCase};
use tsvf::oracle::{cross_check, enumerate_exact, monte_carlo, ForwardRun};
use tsvf::scenario::{builtin, parse, serialize, Scenario, BUILTIN_NAMES};
use tsvf::two_state::abl_sequence;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

const RANDOM_CASES: u64 = 100;
const RANDOM_SEED: u64 = 20_250_101;
const MC_SAMPLES: u64 = 100_000;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || format!("took {elapsed:?}, limit {limit:?}"))
}

fn load(name: &str) -> Result<Scenario, String> {
    builtin(name).map_err(|e| e.to_string())
}

fn elements_and_product_rule() -> Outcome {
    let start = Instant::now();
    let s = load("singlet-xy")?;
    let tsv = s.two_state().map_err(|e| e.to_string())?;
    let obs = |n: &str| &s.observable(n).expect("declared").decomposition;
    let mut found = Vec::new();
    for name in ["s1y", "s2x", "s1ys2x"] {
        let e = element_of_reality(&tsv, obs(name))
            .map_err(|e| e.to_string())?
            .ok_or_else(|| format!("{name} has no element of reality"))?;
        ensure(e.eigenvalue == -1.0, || format!("{name} = {}", e.eigenvalue))?;
        ensure((e.probability - 1.0).abs() < 1e-12, || format!("{name} probability {}", e.probability))?;
        found.push(format!("{name}=-1"));
    }
    let r = product_rule_check(&tsv, obs("s1y"), obs("s2x"), obs("s1ys2x")).map_err(|e| e.to_string())?;
    ensure(
        r.status == ProductRuleStatus::Fails && r.lhs == Some(-1.0) && r.rhs == Some(1.0),
        || format!("product rule {:?} lhs {:?} rhs {:?}", r.status, r.lhs, r.rhs),
    )?;
    within(start.elapsed(), Duration::from_secs(1))?;
    Ok(format!("{}, product rule fails (lhs -1, rhs +1)", found.join(" ")))
}

fn meaningless_detection() -> Outcome {
    let start = Instant::now();
    let s = load("three-z-x-z")?;
    let q = &s.queries()[0];
    let v = evaluate(&s.world(), q).map_err(|e| e.to_string())?;
    ensure(v.kind == VerdictKind::Meaningless, || format!("verdict {:?}", v.kind))?;
    ensure(v.table.denominator < 1e-24, || format!("denominator {:e}", v.table.denominator))?;
    within(start.elapsed(), Duration::from_secs(1))?;
    Ok(format!("meaningless, denominator {:e}", v.table.denominator))
}

/// P(s2z_rev agrees with the actual result) from forward enumeration,
/// conditioned on the fixed result of particle 1.
fn oracle_cf_probability(s: &Scenario) -> Result<f64, String> {
    let q = &s.queries()[0];
    let events = s.query_events(q);
    let tsv = s.two_state().map_err(|e| e.to_string())?;
    let run = ForwardRun::from_two_state(&tsv, &events).map_err(|e| e.to_string())?;
    let exact = enumerate_exact(&run).map_err(|e| e.to_string())?;
    let fixed = s.events[0].outcome.expect("fixed");
    let alpha = s.actual[0].outcome.expect("actual");
    let (mut agree, mut total) = (0.0, 0.0);
    for e in &exact.entries {
        if e.outcomes[0] == fixed {
            total += e.probability;
            if e.outcomes[1] == alpha {
                agree += e.probability;
            }
        }
    }
    Ok(agree / total)
}

fn stapp_counterfactual() -> Outcome {
    let start = Instant::now();
    let z = load("stapp-cf-z")?;
    let vz = evaluate(&z.world(), &z.queries()[0]).map_err(|e| e.to_string())?;
    let pz = vz.probability.unwrap_or(f64::NAN);
    ensure(vz.kind == VerdictKind::True && (pz - 1.0).abs() < 1e-12, || format!("stapp-cf-z {:?}", vz.kind))?;

    let x = load("stapp-cf-x")?;
    let vx = evaluate(&x.world(), &x.queries()[0]).map_err(|e| e.to_string())?;
    let px = match vx.kind {
        VerdictKind::Probabilistic(p) => p,
        other => return Err(format!("stapp-cf-x {other:?}")),
    };
    ensure((px - 0.5).abs() < 1e-12, || format!("stapp-cf-x p = {px}"))?;
    let oracle = oracle_cf_probability(&x)?;
    ensure((oracle - 0.5).abs() < 1e-12, || format!("oracle gives {oracle}"))?;
    within(start.elapsed(), Duration::from_secs(1))?;
    Ok(format!("cf-z true (p={pz}), cf-x probabilistic (p={px}, oracle {oracle})"))
}

fn random_cases() -> Result<Vec<RandomCase>, String> {
    (0..RANDOM_CASES)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(RANDOM_SEED + i);
            RandomCase::generate(&mut rng, RandomBounds::default()).map_err(|e| e.to_string())
        })
        .collect()
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for (i, c) in random_cases()?.iter().enumerate() {
        let r = cross_check(&c.tsv, &c.events).map_err(|e| format!("case {i}: {e}"))?;
        ensure(!r.one_sided_zero, || format!("case {i}: only one route found a zero denominator"))?;
        worst = worst.max(r.max_discrepancy);
    }
    ensure(worst < 1e-12, || format!("max discrepancy {worst:e}"))?;
    within(start.elapsed(), Duration::from_secs(5))?;
    Ok(format!("{RANDOM_CASES} cases, max discrepancy {worst:e}"))
}

fn time_reversal() -> Outcome {
    let mut worst = 0.0f64;
    for (i, c) in random_cases()?.iter().enumerate() {
        let forward = abl_sequence(&c.tsv, &c.events).map_err(|e| format!("case {i}: {e}"))?;
        let (tsv, events, last) = common::reverse_in_time(&c.tsv, &c.events);
        let backward = abl_sequence(&tsv, &events).map_err(|e| format!("case {i}: {e}"))?;
        worst = worst.max(common::reversal_discrepancy(&forward, &backward, last));
    }
    ensure(worst < 1e-12, || format!("max discrepancy {worst:e}"))?;
    Ok(format!("{RANDOM_CASES} cases, max discrepancy {worst:e}"))
}

fn monte_carlo_convergence() -> Outcome {
    let start = Instant::now();
    let s = load("stapp-cf-x")?;
    let seed = s.config.map(|c| c.seed).unwrap_or(0);
    let events = s.query_events(&s.queries()[0]);
    let tsv = s.two_state().map_err(|e| e.to_string())?;
    let run = ForwardRun::from_two_state(&tsv, &events).map_err(|e| e.to_string())?;
    let first = monte_carlo(&run, MC_SAMPLES, seed).map_err(|e| e.to_string())?;
    let second = monte_carlo(&run, MC_SAMPLES, seed).map_err(|e| e.to_string())?;
    ensure(first == second, || "reruns with the same seed differ".into())?;

    let fixed = s.events[0].outcome.expect("fixed");
    let rows: Vec<(f64, f64, u64)> = first
        .counts
        .iter()
        .map(|(bits, n)| (bits[0].value(), bits[1].value(), *n))
        .collect();
    let n: u64 = rows.iter().filter(|r| r.0 == fixed).map(|r| r.2).sum();
    ensure(n > 0, || "no accepted samples".into())?;
    let sigma = (0.25 / n as f64).sqrt();
    let mut detail = Vec::new();
    for value in [1.0, -1.0] {
        let k: u64 = rows.iter().filter(|r| r.0 == fixed && r.1 == value).map(|r| r.2).sum();
        let f = k as f64 / n as f64;
        ensure((f - 0.5).abs() <= 3.0 * sigma, || format!("s2z={value}: frequency {f}, 3 sigma {}", 3.0 * sigma))?;
        detail.push(format!("s2z={value}: {f:.4}"));
    }
    within(start.elapsed(), Duration::from_secs(10))?;
    Ok(format!(
        "{} accepted of {MC_SAMPLES}, {}, 3 sigma = {:.4}, reruns identical",
        n,
        detail.join(", "),
        3.0 * sigma
    ))
}

fn actual_outcome_irrelevance() -> Outcome {
    let mut s = load("stapp-cf-z")?;
    s.queries[0].property = PropertyExpr::Equal(Term::Outcome("s2z_rev".into()), Term::Constant(1.0));
    let mut seen = Vec::new();
    for actual in [1.0, -1.0] {
        s.actual[0].outcome = Some(actual);
        let v = evaluate(&s.world(), &s.queries()[0]).map_err(|e| e.to_string())?;
        seen.push((v.kind, v.probability));
    }
    ensure(seen[0] == seen[1], || format!("verdicts differ: {seen:?}"))?;
    Ok(format!("verdict {} for actual outcome +1 and -1", seen[0].0.name()))
}

fn parser_round_trip() -> Outcome {
    for seed in 0..200 {
        let text = common::random_scenario_text(seed);
        let s = parse(&text).map_err(|e| format!("seed {seed}: {e}"))?;
        let back = parse(&serialize(&s)).map_err(|e| format!("seed {seed}: {e}"))?;
        ensure(back == s, || format!("seed {seed}: reparsed scenario differs"))?;
    }
    for name in BUILTIN_NAMES {
        let once = serialize(&load(name)?);
        let twice = serialize(&parse(&once).map_err(|e| e.to_string())?);
        ensure(once == twice, || format!("{name} does not re-serialize identically"))?;
    }
    Ok(format!("200 random scenarios, {} builtins", BUILTIN_NAMES.len()))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("elements of reality and product rule (singlet-xy)", elements_and_product_rule),
        ("meaningless detection (three-z-x-z)", meaningless_detection),
        ("counterfactual depends on distant fixing (stapp-cf-z, stapp-cf-x)", stapp_counterfactual),
        ("ABL sequence equals forward enumeration", oracle_equivalence),
        ("time-reversal symmetry", time_reversal),
        ("Monte Carlo convergence and reproducibility", monte_carlo_convergence),
        ("actual outcome irrelevance", actual_outcome_irrelevance),
        ("parser round trip", parser_round_trip),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS [{}] {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL [{}] {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
