use std::fmt::Write as _;

use super::{ObservableDef, Scenario};
use crate::hilbert::Amplitude;
use crate::numfmt::canonical;

/// Canonical text for a scenario. `parse(serialize(s)) == s`, and the
/// output of a canonical text is byte-identical to its input.
pub fn serialize(s: &Scenario) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "scenario {}", s.name);
    let dims: Vec<String> = s.layout.dims().iter().map(|d| d.to_string()).collect();
    let _ = writeln!(out, "space {}", dims.join(" x "));
    for st in &s.states {
        let _ = writeln!(out, "state {} = [{}]", st.name, amplitudes(st.state.amplitudes()));
    }
    for o in &s.observables {
        let body = match &o.definition {
            ObservableDef::Pauli { axis, subsystem } => format!("pauli {} @ {}", axis.symbol(), subsystem + 1),
            ObservableDef::Explicit { eigenspaces, support } => {
                let spaces: Vec<String> = eigenspaces
                    .iter()
                    .map(|(value, vectors)| {
                        let vs: Vec<String> = vectors.iter().map(|v| amplitudes(v)).collect();
                        format!("{}: [{}]", canonical(*value), vs.join("; "))
                    })
                    .collect();
                let mut body = format!("{{ {} }}", spaces.join(" "));
                if let Some(support) = support {
                    let ks: Vec<String> = support.iter().map(|k| (k + 1).to_string()).collect();
                    let _ = write!(body, " @ {}", ks.join(","));
                }
                body
            }
            ObservableDef::Product { left, right } => format!("product({left}, {right})"),
        };
        let _ = writeln!(out, "obs {} = {}", o.name, body);
    }
    let _ = writeln!(out, "pre {}", s.pre);
    let _ = writeln!(out, "post {}", s.post);
    for e in &s.events {
        match e.outcome {
            Some(v) => writeln!(out, "event {} {} = {}", e.slot, e.observable, canonical(v)),
            None => writeln!(out, "event {} {}", e.slot, e.observable),
        }
        .expect("writing to a String");
    }
    for e in &s.actual {
        let v = e.outcome.expect("actual events carry an outcome");
        let _ = writeln!(out, "actual {} {} = {}", e.slot, e.observable, canonical(v));
    }
    for q in &s.queries {
        let mut groups: Vec<(u32, Vec<&str>)> = Vec::new();
        for (slot, name) in &q.replacement {
            match groups.last_mut() {
                Some((s, names)) if s == slot => names.push(name),
                _ => groups.push((*slot, vec![name])),
            }
        }
        let rep: Vec<String> = groups
            .iter()
            .map(|(slot, names)| format!("{slot} {}", names.join(" ")))
            .collect();
        let _ = writeln!(out, "query replace {} assert {}", rep.join(" "), q.property);
    }
    if let Some(c) = s.config {
        let _ = writeln!(out, "config samples {} seed {}", c.samples, c.seed);
    }
    out
}

fn amplitudes(v: &[Amplitude]) -> String {
    v.iter()
        .map(|a| format!("{},{}", canonical(a.re), canonical(a.im)))
        .collect::<Vec<_>>()
        .join(" ")
}
