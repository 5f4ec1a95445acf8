//! Seeded generator of random valid scenario texts.

#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tsvf::hilbert::{Amplitude, SpaceLayout};
use tsvf::numfmt::canonical;
use tsvf::oracle::random::{random_orthonormal_basis, random_state};

struct Obs {
    name: String,
    support: Vec<usize>,
    eigenvalues: Vec<f64>,
}

fn amplitudes(v: &[Amplitude]) -> String {
    v.iter()
        .map(|a| format!("{},{}", canonical(a.re), canonical(a.im)))
        .collect::<Vec<_>>()
        .join(" ")
}

fn eigenvalue<R: Rng>(rng: &mut R) -> f64 {
    if rng.gen_bool(0.5) {
        *[-2.0, -1.0, -0.5, 0.0, 1.0, 3.0].choose(rng).unwrap()
    } else {
        rng.gen_range(-4.0..4.0)
    }
}

/// A random scenario exercising every statement kind. Always valid.
pub fn random_scenario_text(seed: u64) -> String {
    let rng = &mut ChaCha8Rng::seed_from_u64(seed);
    let mut text = String::new();
    let mut line = |s: String| {
        text.push_str(&s);
        text.push('\n');
    };
    line(format!("scenario rnd-{seed}"));
    let n_sub = rng.gen_range(1..=2);
    let dims: Vec<usize> = (0..n_sub).map(|_| rng.gen_range(2..=3)).collect();
    let layout = SpaceLayout::new(dims.clone()).unwrap();
    line(format!(
        "space {}",
        dims.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(" x ")
    ));

    let n_states = rng.gen_range(1..=3);
    for k in 0..n_states {
        let st = random_state(rng, &layout).unwrap();
        line(format!("state st{k} = [{}]", amplitudes(st.amplitudes())));
    }

    let mut observables: Vec<Obs> = Vec::new();
    let n_obs = rng.gen_range(1..=4);
    for k in 0..n_obs {
        let name = format!("o{k}");
        let qubits: Vec<usize> = (0..n_sub).filter(|&i| dims[i] == 2).collect();
        match rng.gen_range(0..3) {
            0 if !qubits.is_empty() => {
                let sub = *qubits.choose(rng).unwrap();
                let axis = *['X', 'Y', 'Z'].choose(rng).unwrap();
                line(format!("obs {name} = pauli {axis} @ {}", sub + 1));
                observables.push(Obs {
                    name,
                    support: vec![sub],
                    eigenvalues: vec![1.0, -1.0],
                });
            }
            1 if n_sub == 2 && observables.len() >= 2 => {
                // Product of two earlier observables on disjoint subsystems.
                let pair = observables.iter().enumerate().find_map(|(i, a)| {
                    observables[i + 1..]
                        .iter()
                        .find(|b| b.support.iter().all(|k| !a.support.contains(k)))
                        .map(|b| (a, b))
                });
                let Some((a, b)) = pair else {
                    continue;
                };
                let mut eigenvalues: Vec<f64> = Vec::new();
                for x in &a.eigenvalues {
                    for y in &b.eigenvalues {
                        eigenvalues.push(x * y);
                    }
                }
                line(format!("obs {name} = product({}, {})", a.name, b.name));
                let support = (0..n_sub).collect();
                observables.push(Obs {
                    name,
                    support,
                    eigenvalues,
                });
            }
            _ => {
                let support: Vec<usize> = if n_sub == 2 && rng.gen_bool(0.5) {
                    vec![rng.gen_range(0..2)]
                } else {
                    (0..n_sub).collect()
                };
                let local_dim: usize = support.iter().map(|&i| dims[i]).product();
                let basis = random_orthonormal_basis(rng, local_dim);
                let n_values = rng.gen_range(1..=local_dim);
                let mut values: Vec<f64> = Vec::new();
                while values.len() < n_values {
                    let v = eigenvalue(rng);
                    if !values.contains(&v) {
                        values.push(v);
                    }
                }
                let mut spaces: Vec<Vec<&Vec<Amplitude>>> = vec![Vec::new(); n_values];
                for (i, v) in basis.iter().enumerate() {
                    let slot = if i < n_values { i } else { rng.gen_range(0..n_values) };
                    spaces[slot].push(v);
                }
                let body: Vec<String> = values
                    .iter()
                    .zip(&spaces)
                    .map(|(value, vs)| {
                        let vs: Vec<String> = vs.iter().map(|v| amplitudes(v)).collect();
                        format!("{}: [{}]", canonical(*value), vs.join("; "))
                    })
                    .collect();
                let at = if support.len() < n_sub || rng.gen_bool(0.3) {
                    format!(
                        " @ {}",
                        support.iter().map(|k| (k + 1).to_string()).collect::<Vec<_>>().join(",")
                    )
                } else {
                    String::new()
                };
                line(format!("obs {name} = {{ {} }}{at}", body.join(" ")));
                observables.push(Obs {
                    name,
                    support,
                    eigenvalues: values,
                });
            }
        }
    }

    line(format!("pre st{}", rng.gen_range(0..n_states)));
    line(format!("post st{}", rng.gen_range(0..n_states)));

    // Fixed events on odd slots, one per slot so nothing overlaps.
    let mut fixed_names: Vec<String> = Vec::new();
    for slot in (1..=5u32).step_by(2) {
        if rng.gen_bool(0.5) {
            let o = observables.choose(rng).unwrap();
            if rng.gen_bool(0.5) {
                line(format!("event {slot} {} = {}", o.name, canonical(*o.eigenvalues.choose(rng).unwrap())));
            } else {
                line(format!("event {slot} {}", o.name));
            }
            fixed_names.push(o.name.clone());
        }
    }
    let mut actual = Vec::new();
    if rng.gen_bool(0.6) {
        let o = observables.choose(rng).unwrap();
        line(format!("actual 2 {} = {}", o.name, canonical(*o.eigenvalues.choose(rng).unwrap())));
        actual.push(o.name.clone());
    }
    for _ in 0..rng.gen_range(0..=3) {
        let slot = *[2u32, 4].choose(rng).unwrap();
        let o = observables.choose(rng).unwrap();
        let label = format!("{}@{slot}", o.name);
        let v = canonical(*o.eigenvalues.choose(rng).unwrap());
        let property = match rng.gen_range(0..4) {
            0 => format!("outcome({label}) == {v}"),
            1 => format!("outcome({label}) * {} == {v}", canonical(eigenvalue(rng))),
            2 => format!(
                "prob(outcome({label}) == {v}) {} {}",
                [">=", "<=", ">", "<"].choose(rng).unwrap(),
                canonical(rng.gen_range(0.0..1.0))
            ),
            _ => format!("outcome({label}) == {v} and {} == {}", canonical(eigenvalue(rng)), canonical(eigenvalue(rng))),
        };
        let property = match actual.first() {
            Some(a) if rng.gen_bool(0.3) && *a != o.name && !fixed_names.contains(a) => format!("{property} and outcome({a}) == outcome({label})"),
            _ => property,
        };
        line(format!("query replace {slot} {} assert {property}", o.name));
    }
    if rng.gen_bool(0.5) {
        line(format!("config samples {} seed {}", rng.gen_range(1..1_000_000u64), rng.gen::<u64>()));
    }
    text
}

/// Pre and post swapped and every slot `s` mapped to `last + 1 - s`.
pub fn reverse_in_time(
    tsv: &tsvf::two_state::TwoStateVector,
    events: &[tsvf::two_state::MeasurementEvent],
) -> (tsvf::two_state::TwoStateVector, Vec<tsvf::two_state::MeasurementEvent>, u32) {
    let last = events.iter().map(|e| e.slot).max().unwrap_or(0);
    let reversed = events
        .iter()
        .rev()
        .map(|e| {
            let mut r = e.clone();
            r.slot = last + 1 - e.slot;
            r
        })
        .collect();
    (tsv.reversed(), reversed, last)
}

/// Largest difference between a forward table and a time-reversed one.
pub fn reversal_discrepancy(
    forward: &tsvf::two_state::ProbabilityTable,
    backward: &tsvf::two_state::ProbabilityTable,
    last: u32,
) -> f64 {
    use tsvf::two_state::EventKey;
    let f = forward.by_assignment();
    let b: std::collections::BTreeMap<_, _> = backward
        .by_assignment()
        .into_iter()
        .map(|(k, p)| {
            let mut k: Vec<(EventKey, u64)> = k
                .into_iter()
                .map(|(key, bits)| {
                    (
                        EventKey {
                            slot: last + 1 - key.slot,
                            label: key.label,
                        },
                        bits,
                    )
                })
                .collect();
            k.sort();
            (k, p)
        })
        .collect();
    assert_eq!(f.len(), b.len());
    f.iter()
        .map(|(k, p)| (p - b.get(k).expect("same assignments")).abs())
        .fold(0.0, f64::max)
}
