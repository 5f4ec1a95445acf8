use num_complex::Complex64;

use super::lexer::{tokenize, Kind, Token};
use super::{
    EventDecl, NamedObservable, NamedState, ObservableDef, ParseError, QueryDecl, RunConfig, Scenario, ScenarioError,
};
use crate::counterfactual::{Comparison, PropertyExpr, Term};
use crate::hilbert::{spinor, Amplitude, ObservableDecomposition, PauliAxis, SpaceLayout, StateVector};

const RESERVED: [&str; 8] = ["assert", "and", "prob", "outcome", "pauli", "product", "sqrt", "i"];

/// Parses scenario text. Parsing is deterministic and independent of locale.
pub fn parse(text: &str) -> Result<Scenario, ScenarioError> {
    let mut b = Builder::default();
    for (index, raw) in text.split('\n').enumerate() {
        let line_no = index + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        let line = line.split('#').next().unwrap_or("");
        if line.trim().is_empty() {
            continue;
        }
        let trimmed = line.trim_start();
        if let Some(rest) = trimmed.strip_prefix("scenario") {
            if rest.is_empty() || rest.starts_with(char::is_whitespace) {
                b.scenario_name(rest.trim(), line_no, line.len() - trimmed.len() + 1)?;
                continue;
            }
        }
        let tokens = tokenize(line, line_no)?;
        let mut cur = Cursor {
            tokens,
            pos: 0,
            line: line_no,
            width: line.chars().count(),
        };
        b.statement(&mut cur)?;
    }
    b.finish()
}

struct Cursor {
    tokens: Vec<Token>,
    pos: usize,
    line: usize,
    width: usize,
}

impl Cursor {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn peek_kind(&self) -> Option<&Kind> {
        self.peek().map(|t| &t.kind)
    }

    fn error(&self, message: impl Into<String>) -> ParseError {
        match self.peek() {
            Some(t) => ParseError {
                line: self.line,
                column: t.column,
                message: message.into(),
                token: t.text.clone(),
            },
            None => ParseError {
                line: self.line,
                column: self.width + 1,
                message: message.into(),
                token: "end of line".into(),
            },
        }
    }

    fn is_sym(&self, sym: &str) -> bool {
        matches!(self.peek_kind(), Some(Kind::Sym(s)) if *s == sym)
    }

    fn is_ident(&self, word: &str) -> bool {
        matches!(self.peek_kind(), Some(Kind::Ident(w)) if w == word)
    }

    fn eat_sym(&mut self, sym: &str) -> bool {
        if self.is_sym(sym) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_sym(&mut self, sym: &str) -> Result<(), ParseError> {
        if self.eat_sym(sym) {
            Ok(())
        } else {
            Err(self.error(format!("expected `{sym}`")))
        }
    }

    fn expect_keyword(&mut self, word: &str) -> Result<(), ParseError> {
        if self.is_ident(word) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(format!("expected `{word}`")))
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, ParseError> {
        match self.peek_kind() {
            Some(Kind::Ident(w)) => {
                let w = w.clone();
                self.pos += 1;
                Ok(w)
            }
            _ => Err(self.error(format!("expected {what}"))),
        }
    }

    /// An identifier usable as a state or observable name.
    fn name(&mut self, what: &str) -> Result<String, ParseError> {
        if let Some(Kind::Ident(w)) = self.peek_kind() {
            if RESERVED.contains(&w.as_str()) {
                return Err(self.error(format!("`{w}` is a reserved word")));
            }
        }
        self.ident(what)
    }

    fn number(&mut self) -> Result<f64, ParseError> {
        let negative = if self.eat_sym("-") {
            true
        } else {
            self.eat_sym("+");
            false
        };
        match self.peek_kind() {
            Some(Kind::Number(v)) => {
                let v = *v;
                self.pos += 1;
                Ok(if negative { -v } else { v })
            }
            _ => Err(self.error("expected a number")),
        }
    }

    fn integer(&mut self, what: &str) -> Result<u64, ParseError> {
        match self.peek() {
            Some(Token {
                kind: Kind::Number(v),
                text,
                ..
            }) if text.chars().all(|c| c.is_ascii_digit()) && *v <= u64::MAX as f64 => {
                let parsed = text.parse::<u64>().map_err(|_| self.error(format!("expected {what}")))?;
                self.pos += 1;
                Ok(parsed)
            }
            _ => Err(self.error(format!("expected {what}"))),
        }
    }

    fn end(&self) -> Result<(), ParseError> {
        if self.peek().is_some() {
            Err(self.error("unexpected trailing input"))
        } else {
            Ok(())
        }
    }
}

#[derive(Default)]
struct Builder {
    name: Option<String>,
    layout: Option<SpaceLayout>,
    states: Vec<NamedState>,
    observables: Vec<NamedObservable>,
    pre: Option<(String, usize)>,
    post: Option<(String, usize)>,
    events: Vec<(EventDecl, usize)>,
    actual: Vec<(EventDecl, usize)>,
    queries: Vec<(QueryDecl, usize)>,
    config: Option<RunConfig>,
}

fn semantic(line: usize, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Semantic {
        line,
        message: message.into(),
    }
}

impl Builder {
    fn scenario_name(&mut self, name: &str, line: usize, column: usize) -> Result<(), ScenarioError> {
        if self.name.is_some() {
            return Err(semantic(line, "scenario name declared twice"));
        }
        if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || "_-.".contains(c)) {
            return Err(ParseError {
                line,
                column,
                message: "scenario name must be non-empty and use only letters, digits, `_`, `-`, `.`".into(),
                token: name.to_string(),
            }
            .into());
        }
        self.name = Some(name.to_string());
        Ok(())
    }

    fn layout(&self, line: usize) -> Result<&SpaceLayout, ScenarioError> {
        self.layout
            .as_ref()
            .ok_or_else(|| semantic(line, "`space` must be declared before states and observables"))
    }

    fn statement(&mut self, cur: &mut Cursor) -> Result<(), ScenarioError> {
        let line = cur.line;
        let keyword = cur.ident("a statement keyword")?;
        match keyword.as_str() {
            "space" => {
                if self.layout.is_some() {
                    return Err(semantic(line, "space declared twice"));
                }
                let mut dims = vec![cur.integer("a subsystem dimension")? as usize];
                while cur.is_ident("x") {
                    cur.pos += 1;
                    dims.push(cur.integer("a subsystem dimension")? as usize);
                }
                cur.end()?;
                self.layout = Some(SpaceLayout::new(dims).map_err(|e| semantic(line, e.to_string()))?);
            }
            "state" => {
                let name = cur.name("a state name")?;
                cur.expect_sym("=")?;
                let layout = self.layout(line)?.clone();
                let amplitudes = if cur.is_sym("[") {
                    let v = vector(cur)?;
                    cur.end()?;
                    v
                } else {
                    let value = Expr { cur, layout: &layout }.sum()?;
                    cur.end()?;
                    match value {
                        Value::Vector(v) => v,
                        Value::Scalar(_) => return Err(semantic(line, format!("state {name} is a scalar, not a ket"))),
                    }
                };
                if self.states.iter().any(|s| s.name == name) {
                    return Err(semantic(line, format!("state {name} declared twice")));
                }
                let state = StateVector::new(layout, amplitudes)
                    .map_err(|e| semantic(line, format!("state {name}: {e}")))?;
                self.states.push(NamedState { name, state });
            }
            "obs" => {
                let name = cur.name("an observable name")?;
                cur.expect_sym("=")?;
                let layout = self.layout(line)?.clone();
                let definition = observable_def(cur, &layout)?;
                cur.end()?;
                if self.observables.iter().any(|o| o.name == name) {
                    return Err(semantic(line, format!("observable {name} declared twice")));
                }
                let decomposition = self.build_observable(&name, &definition, &layout, line)?;
                self.observables.push(NamedObservable {
                    name,
                    definition,
                    decomposition,
                });
            }
            "pre" | "post" => {
                let name = cur.name("a state name")?;
                cur.end()?;
                let target = if keyword == "pre" { &mut self.pre } else { &mut self.post };
                if target.is_some() {
                    return Err(semantic(line, format!("{keyword} declared twice")));
                }
                *target = Some((name, line));
            }
            "event" => {
                let slot = slot(cur)?;
                let observable = cur.name("an observable name")?;
                let outcome = if cur.eat_sym("=") { Some(cur.number()?) } else { None };
                cur.end()?;
                self.events.push((
                    EventDecl {
                        slot,
                        observable,
                        outcome,
                    },
                    line,
                ));
            }
            "actual" => {
                let slot = slot(cur)?;
                let observable = cur.name("an observable name")?;
                cur.expect_sym("=")?;
                let outcome = Some(cur.number()?);
                cur.end()?;
                self.actual.push((
                    EventDecl {
                        slot,
                        observable,
                        outcome,
                    },
                    line,
                ));
            }
            "query" => {
                cur.expect_keyword("replace")?;
                let mut replacement = Vec::new();
                loop {
                    let s = slot(cur)?;
                    replacement.push((s, cur.name("an observable name")?));
                    while matches!(cur.peek_kind(), Some(Kind::Ident(w)) if w != "assert") {
                        replacement.push((s, cur.name("an observable name")?));
                    }
                    if cur.is_ident("assert") {
                        break;
                    }
                }
                cur.expect_keyword("assert")?;
                let property = conjunction(cur)?;
                cur.end()?;
                self.queries.push((QueryDecl { replacement, property }, line));
            }
            "config" => {
                if self.config.is_some() {
                    return Err(semantic(line, "config declared twice"));
                }
                cur.expect_keyword("samples")?;
                let samples = cur.integer("a sample count")?;
                cur.expect_keyword("seed")?;
                let seed = cur.integer("a seed")?;
                cur.end()?;
                if samples == 0 {
                    return Err(semantic(line, "samples must be positive"));
                }
                self.config = Some(RunConfig { samples, seed });
            }
            _ => {
                cur.pos -= 1;
                return Err(cur.error("unknown statement").into());
            }
        }
        Ok(())
    }

    fn build_observable(
        &self,
        name: &str,
        definition: &ObservableDef,
        layout: &SpaceLayout,
        line: usize,
    ) -> Result<ObservableDecomposition, ScenarioError> {
        let err = |e: crate::hilbert::HilbertError| semantic(line, format!("observable {name}: {e}"));
        let built = match definition {
            ObservableDef::Pauli { axis, subsystem } => ObservableDecomposition::pauli(*axis, *subsystem, layout),
            ObservableDef::Explicit { eigenspaces, support } => match support {
                Some(support) => {
                    if support.windows(2).any(|w| w[0] >= w[1]) {
                        return Err(semantic(line, "subsystems after `@` must be strictly ascending"));
                    }
                    let local_layout = layout.select(support).map_err(err)?;
                    let n = support.len();
                    ObservableDecomposition::from_eigenvectors(&local_layout, name, (0..n).collect(), eigenspaces)
                        .and_then(|local| ObservableDecomposition::embedded(&local, support, layout))
                }
                None => ObservableDecomposition::from_eigenvectors(
                    layout,
                    name,
                    (0..layout.num_subsystems()).collect(),
                    eigenspaces,
                ),
            },
            ObservableDef::Product { left, right } => {
                let find = |n: &str| {
                    self.observables
                        .iter()
                        .find(|o| o.name == n)
                        .map(|o| &o.decomposition)
                        .ok_or_else(|| semantic(line, format!("observable {n} must be declared before use")))
                };
                ObservableDecomposition::product(find(left)?, find(right)?, name)
            }
        };
        built.map(|o| o.with_label(name)).and_then(|o| o.checked()).map_err(err)
    }

    fn finish(self) -> Result<Scenario, ScenarioError> {
        let last_line = 1;
        let layout = self.layout.clone().ok_or_else(|| semantic(last_line, "missing `space`"))?;
        let (pre, pre_line) = self.pre.clone().ok_or_else(|| semantic(last_line, "missing `pre`"))?;
        let (post, post_line) = self.post.clone().ok_or_else(|| semantic(last_line, "missing `post`"))?;
        for (name, line) in [(&pre, pre_line), (&post, post_line)] {
            if !self.states.iter().any(|s| &s.name == name) {
                return Err(semantic(line, format!("unknown state {name}")));
            }
        }
        let check_event = |e: &EventDecl, line: usize| -> Result<&NamedObservable, ScenarioError> {
            let obs = self
                .observables
                .iter()
                .find(|o| o.name == e.observable)
                .ok_or_else(|| semantic(line, format!("unknown observable {}", e.observable)))?;
            if e.slot == 0 {
                return Err(semantic(line, "slot 0 is reserved for the pre-selection"));
            }
            if let Some(v) = e.outcome {
                if obs.decomposition.branch_index(v).is_none() {
                    return Err(semantic(line, format!("{v} is not an eigenvalue of {}", e.observable)));
                }
            }
            Ok(obs)
        };
        let overlap = |a: &NamedObservable, b: &NamedObservable| {
            a.decomposition
                .support()
                .iter()
                .any(|k| b.decomposition.support().contains(k))
        };

        let mut fixed: Vec<(u32, &NamedObservable)> = Vec::new();
        for (e, line) in &self.events {
            let obs = check_event(e, *line)?;
            if let Some((_, other)) = fixed.iter().find(|(s, o)| *s == e.slot && overlap(o, obs)) {
                return Err(semantic(
                    *line,
                    format!("{} and {} share slot {} on overlapping subsystems", other.name, obs.name, e.slot),
                ));
            }
            fixed.push((e.slot, obs));
        }
        for (e, line) in &self.actual {
            check_event(e, *line)?;
            if fixed.iter().any(|(s, _)| *s == e.slot) {
                return Err(semantic(*line, format!("actual measurement at slot {} collides with a fixed event", e.slot)));
            }
        }
        for (q, line) in &self.queries {
            let mut replaced: Vec<(u32, &NamedObservable)> = Vec::new();
            for (s, name) in &q.replacement {
                let decl = EventDecl {
                    slot: *s,
                    observable: name.clone(),
                    outcome: None,
                };
                let obs = check_event(&decl, *line)?;
                if fixed.iter().any(|(fs, _)| fs == s) {
                    return Err(semantic(*line, format!("replacement at slot {s} collides with a fixed event")));
                }
                if replaced.iter().any(|(rs, o)| rs == s && overlap(o, obs)) {
                    return Err(semantic(*line, format!("replacements at slot {s} act on overlapping subsystems")));
                }
                replaced.push((*s, obs));
            }
            let live: Vec<(u32, &str)> = fixed
                .iter()
                .chain(&replaced)
                .map(|(s, o)| (*s, o.name.as_str()))
                .collect();
            let actual: Vec<(u32, &str)> = self.actual.iter().map(|(e, _)| (e.slot, e.observable.as_str())).collect();
            for label in q.property.labels() {
                let hits = |set: &[(u32, &str)]| {
                    set.iter()
                        .filter(|(s, n)| *n == label || format!("{n}@{s}") == label)
                        .count()
                };
                let (l, a) = (hits(&live), hits(&actual));
                if l > 1 || (l == 0 && a > 1) {
                    return Err(semantic(*line, format!("ambiguous reference {label}; use LABEL@SLOT")));
                }
                if l == 0 && a == 0 {
                    return Err(semantic(*line, format!("property refers to unknown event {label}")));
                }
            }
        }

        Ok(Scenario {
            name: self.name.unwrap_or_else(|| "unnamed".to_string()),
            layout,
            states: self.states,
            observables: self.observables,
            pre,
            post,
            events: self.events.into_iter().map(|(e, _)| e).collect(),
            actual: self.actual.into_iter().map(|(e, _)| e).collect(),
            queries: self.queries.into_iter().map(|(q, _)| q).collect(),
            config: self.config,
        })
    }
}

fn slot(cur: &mut Cursor) -> Result<u32, ParseError> {
    let v = cur.integer("a slot number")?;
    u32::try_from(v).map_err(|_| {
        cur.pos -= 1;
        cur.error("slot number too large")
    })
}

fn observable_def(cur: &mut Cursor, layout: &SpaceLayout) -> Result<ObservableDef, ScenarioError> {
    let line = cur.line;
    if cur.is_ident("pauli") {
        cur.pos += 1;
        let axis_text = cur.ident("a Pauli axis X, Y or Z")?;
        let axis = match axis_text.as_str() {
            "X" | "x" => PauliAxis::X,
            "Y" | "y" => PauliAxis::Y,
            "Z" | "z" => PauliAxis::Z,
            _ => {
                cur.pos -= 1;
                return Err(cur.error("expected a Pauli axis X, Y or Z").into());
            }
        };
        cur.expect_sym("@")?;
        let k = subsystem(cur, layout)?;
        return Ok(ObservableDef::Pauli { axis, subsystem: k });
    }
    if cur.is_ident("product") {
        cur.pos += 1;
        cur.expect_sym("(")?;
        let left = cur.name("an observable name")?;
        cur.expect_sym(",")?;
        let right = cur.name("an observable name")?;
        cur.expect_sym(")")?;
        return Ok(ObservableDef::Product { left, right });
    }
    if cur.eat_sym("{") {
        let mut eigenspaces = Vec::new();
        while !cur.eat_sym("}") {
            if cur.peek().is_none() {
                return Err(cur.error("expected `}`").into());
            }
            let value = cur.number()?;
            cur.expect_sym(":")?;
            cur.expect_sym("[")?;
            let mut vectors = vec![entries(cur)?];
            while cur.eat_sym(";") {
                vectors.push(entries(cur)?);
            }
            cur.expect_sym("]")?;
            cur.eat_sym(",");
            eigenspaces.push((value, vectors));
        }
        let support = if cur.eat_sym("@") {
            let mut list = vec![subsystem(cur, layout)?];
            while cur.eat_sym(",") {
                list.push(subsystem(cur, layout)?);
            }
            Some(list)
        } else {
            None
        };
        if eigenspaces.is_empty() {
            return Err(semantic(line, "observable needs at least one eigenvalue"));
        }
        return Ok(ObservableDef::Explicit { eigenspaces, support });
    }
    Err(cur.error("expected `pauli`, `product(...)` or `{ eigenvalue: [vectors] ... }`").into())
}

/// 1-based subsystem number in the file, 0-based in the result.
fn subsystem(cur: &mut Cursor, layout: &SpaceLayout) -> Result<usize, ParseError> {
    let k = cur.integer("a subsystem number")?;
    if k == 0 || k as usize > layout.num_subsystems() {
        cur.pos -= 1;
        return Err(cur.error(format!("subsystem must be between 1 and {}", layout.num_subsystems())));
    }
    Ok(k as usize - 1)
}

/// `[re,im re,im ...]`.
fn vector(cur: &mut Cursor) -> Result<Vec<Amplitude>, ParseError> {
    cur.expect_sym("[")?;
    let v = entries(cur)?;
    cur.expect_sym("]")?;
    Ok(v)
}

/// Amplitudes up to the next `;` or `]`; `re,im` pairs or bare reals.
fn entries(cur: &mut Cursor) -> Result<Vec<Amplitude>, ParseError> {
    let mut out = Vec::new();
    while !(cur.is_sym("]") || cur.is_sym(";")) {
        let re = cur.number()?;
        let im = if cur.eat_sym(",") { cur.number()? } else { 0.0 };
        out.push(Amplitude::new(re, im));
    }
    if out.is_empty() {
        return Err(cur.error("expected at least one amplitude"));
    }
    Ok(out)
}

enum Value {
    Scalar(Complex64),
    Vector(Vec<Complex64>),
}

/// Linear combinations of kets with complex coefficients built from
/// numbers, `i`, `sqrt(...)`, `+ - * /` and parentheses. Juxtaposition
/// multiplies: `1/sqrt(2) (|up> + |down>)`.
struct Expr<'a> {
    cur: &'a mut Cursor,
    layout: &'a SpaceLayout,
}

impl Expr<'_> {
    fn sum(&mut self) -> Result<Value, ParseError> {
        let mut acc = if self.cur.eat_sym("-") {
            let v = self.product()?;
            self.negate(v)
        } else {
            self.cur.eat_sym("+");
            self.product()?
        };
        loop {
            let column = self.cur.peek().map(|t| t.column);
            if self.cur.eat_sym("+") {
                let rhs = self.product()?;
                acc = self.add(acc, rhs, column)?;
            } else if self.cur.eat_sym("-") {
                let rhs = self.product()?;
                let rhs = self.negate(rhs);
                acc = self.add(acc, rhs, column)?;
            } else {
                return Ok(acc);
            }
        }
    }

    fn product(&mut self) -> Result<Value, ParseError> {
        let mut acc = self.unary()?;
        loop {
            if self.cur.eat_sym("*") {
                let rhs = self.unary()?;
                acc = self.mul(acc, rhs)?;
            } else if self.cur.is_sym("/") {
                let rhs = {
                    self.cur.pos += 1;
                    self.unary()?
                };
                acc = self.div(acc, rhs)?;
            } else if self.starts_primary() {
                let rhs = self.primary()?;
                acc = self.mul(acc, rhs)?;
            } else {
                return Ok(acc);
            }
        }
    }

    fn starts_primary(&self) -> bool {
        matches!(self.cur.peek_kind(), Some(Kind::Ket(_)) | Some(Kind::Sym("(")))
            || self.cur.is_ident("sqrt")
            || self.cur.is_ident("i")
    }

    fn unary(&mut self) -> Result<Value, ParseError> {
        if self.cur.eat_sym("-") {
            let v = self.unary()?;
            Ok(self.negate(v))
        } else {
            self.primary()
        }
    }

    fn primary(&mut self) -> Result<Value, ParseError> {
        let Some(tok) = self.cur.peek().cloned() else {
            return Err(self.cur.error("expected a number, `i`, `sqrt(...)`, a ket or `(`"));
        };
        match &tok.kind {
            Kind::Number(v) => {
                self.cur.pos += 1;
                Ok(Value::Scalar(Complex64::new(*v, 0.0)))
            }
            Kind::Ident(w) if w == "i" => {
                self.cur.pos += 1;
                Ok(Value::Scalar(Complex64::new(0.0, 1.0)))
            }
            Kind::Ident(w) if w == "sqrt" => {
                self.cur.pos += 1;
                self.cur.expect_sym("(")?;
                let inner = self.sum()?;
                self.cur.expect_sym(")")?;
                match inner {
                    Value::Scalar(c) => Ok(Value::Scalar(c.sqrt())),
                    Value::Vector(_) => Err(self.error_at(&tok, "sqrt of a ket")),
                }
            }
            Kind::Sym("(") => {
                self.cur.pos += 1;
                let inner = self.sum()?;
                self.cur.expect_sym(")")?;
                Ok(inner)
            }
            Kind::Ket(labels) => {
                self.cur.pos += 1;
                ket(labels, self.layout).map(Value::Vector).map_err(|m| self.error_at(&tok, m))
            }
            _ => Err(self.cur.error("expected a number, `i`, `sqrt(...)`, a ket or `(`")),
        }
    }

    fn error_at(&self, tok: &Token, message: impl Into<String>) -> ParseError {
        ParseError {
            line: self.cur.line,
            column: tok.column,
            message: message.into(),
            token: tok.text.clone(),
        }
    }

    fn type_error(&self, column: Option<usize>, message: &str) -> ParseError {
        ParseError {
            line: self.cur.line,
            column: column.unwrap_or(self.cur.width + 1),
            message: message.into(),
            token: String::new(),
        }
    }

    fn negate(&self, v: Value) -> Value {
        match v {
            Value::Scalar(c) => Value::Scalar(-c),
            Value::Vector(v) => Value::Vector(v.into_iter().map(|a| -a).collect()),
        }
    }

    fn add(&self, a: Value, b: Value, column: Option<usize>) -> Result<Value, ParseError> {
        match (a, b) {
            (Value::Scalar(x), Value::Scalar(y)) => Ok(Value::Scalar(x + y)),
            (Value::Vector(x), Value::Vector(y)) => Ok(Value::Vector(x.into_iter().zip(y).map(|(p, q)| p + q).collect())),
            _ => Err(self.type_error(column, "cannot add a number to a ket")),
        }
    }

    fn mul(&self, a: Value, b: Value) -> Result<Value, ParseError> {
        let column = self.cur.peek().map(|t| t.column);
        match (a, b) {
            (Value::Scalar(x), Value::Scalar(y)) => Ok(Value::Scalar(x * y)),
            (Value::Scalar(c), Value::Vector(v)) | (Value::Vector(v), Value::Scalar(c)) => {
                Ok(Value::Vector(v.into_iter().map(|a| a * c).collect()))
            }
            (Value::Vector(_), Value::Vector(_)) => Err(self.type_error(column, "cannot multiply two kets")),
        }
    }

    fn div(&self, a: Value, b: Value) -> Result<Value, ParseError> {
        let column = self.cur.peek().map(|t| t.column);
        let Value::Scalar(d) = b else {
            return Err(self.type_error(column, "cannot divide by a ket"));
        };
        if d.norm_sqr() == 0.0 {
            return Err(self.type_error(column, "division by zero"));
        }
        Ok(match a {
            Value::Scalar(x) => Value::Scalar(x / d),
            Value::Vector(v) => Value::Vector(v.into_iter().map(|a| a / d).collect()),
        })
    }
}

/// Product ket from one label per subsystem: a basis index, or for spin-½
/// `up`/`u`/`+z`, `down`/`d`/`-z`, `+x`, `-x`, `+y`, `-y`.
fn ket(labels: &str, layout: &SpaceLayout) -> Result<Vec<Amplitude>, String> {
    let parts: Vec<&str> = labels
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .collect();
    if parts.len() != layout.num_subsystems() {
        return Err(format!(
            "ket has {} labels but the space has {} subsystems",
            parts.len(),
            layout.num_subsystems()
        ));
    }
    let mut out = vec![Amplitude::new(1.0, 0.0)];
    for (label, &dim) in parts.iter().zip(layout.dims()) {
        let local: Vec<Amplitude> = if let Ok(k) = label.parse::<usize>() {
            if k >= dim {
                return Err(format!("basis label {k} out of range for dimension {dim}"));
            }
            let mut v = vec![Amplitude::new(0.0, 0.0); dim];
            v[k] = Amplitude::new(1.0, 0.0);
            v
        } else {
            if dim != 2 {
                return Err(format!("spin label `{label}` needs a two-dimensional subsystem"));
            }
            match *label {
                "up" | "u" | "+z" => spinor::up().to_vec(),
                "down" | "d" | "-z" => spinor::down().to_vec(),
                "+x" => spinor::plus_x().to_vec(),
                "-x" => spinor::minus_x().to_vec(),
                "+y" => spinor::plus_y().to_vec(),
                "-y" => spinor::minus_y().to_vec(),
                other => return Err(format!("unknown basis label `{other}`")),
            }
        };
        out = crate::hilbert::kron_vec(&out, &local);
    }
    Ok(out)
}

fn conjunction(cur: &mut Cursor) -> Result<PropertyExpr, ParseError> {
    let mut parts = vec![atom(cur)?];
    while cur.is_ident("and") {
        cur.pos += 1;
        parts.push(atom(cur)?);
    }
    Ok(if parts.len() == 1 {
        parts.pop().expect("one part")
    } else {
        PropertyExpr::And(parts)
    })
}

fn atom(cur: &mut Cursor) -> Result<PropertyExpr, ParseError> {
    if cur.is_ident("prob") {
        cur.pos += 1;
        cur.expect_sym("(")?;
        let relation = conjunction(cur)?;
        cur.expect_sym(")")?;
        let comparison = match cur.peek_kind() {
            Some(Kind::Sym(">=")) => Comparison::Ge,
            Some(Kind::Sym("<=")) => Comparison::Le,
            Some(Kind::Sym(">")) => Comparison::Gt,
            Some(Kind::Sym("<")) => Comparison::Lt,
            _ => return Err(cur.error("expected `>=`, `<=`, `>` or `<`")),
        };
        cur.pos += 1;
        let value = cur.number()?;
        return Ok(PropertyExpr::Threshold {
            relation: Box::new(relation),
            comparison,
            value,
        });
    }
    let lhs = term(cur)?;
    cur.expect_sym("==")?;
    let rhs = term(cur)?;
    Ok(PropertyExpr::Equal(lhs, rhs))
}

fn term(cur: &mut Cursor) -> Result<Term, ParseError> {
    let mut factors = vec![factor(cur)?];
    while cur.eat_sym("*") {
        factors.push(factor(cur)?);
    }
    Ok(if factors.len() == 1 {
        factors.pop().expect("one factor")
    } else {
        Term::Product(factors)
    })
}

fn factor(cur: &mut Cursor) -> Result<Term, ParseError> {
    if cur.is_ident("outcome") {
        cur.pos += 1;
        cur.expect_sym("(")?;
        let mut label = cur.name("an event label")?;
        if cur.eat_sym("@") {
            label = format!("{label}@{}", slot(cur)?);
        }
        cur.expect_sym(")")?;
        return Ok(Term::Outcome(label));
    }
    Ok(Term::Constant(cur.number()?))
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "space 2\nstate up = |up>\nstate down = |down>\nobs sz = pauli Z @ 1\nobs sx = pauli X @ 1\npre up\npost down\n";

    fn semantic_line(text: &str) -> usize {
        match parse(text).unwrap_err() {
            ScenarioError::Semantic { line, .. } => line,
            other => panic!("expected a semantic error, got {other:?}"),
        }
    }

    #[test]
    fn dirac_and_numeric_states_agree() {
        let s = parse(
            "space 2 x 2\nstate a = 1/sqrt(2) (|up,down> - |down,up>)\nstate b = [0,0 0.70710678118654757,0 -0.70710678118654757,0 0,0]\npre a\npost b\n",
        )
        .unwrap();
        for (x, y) in s.state("a").unwrap().amplitudes().iter().zip(s.state("b").unwrap().amplitudes()) {
            assert!((x - y).norm() < 1e-15);
        }
    }

    #[test]
    fn complex_coefficients() {
        let s = parse("space 2\nstate a = (|0> + i |1>)/sqrt(2)\nstate b = |+y>\npre a\npost b\n").unwrap();
        for (x, y) in s.state("a").unwrap().amplitudes().iter().zip(s.state("b").unwrap().amplitudes()) {
            assert!((x - y).norm() < 1e-15);
        }
    }

    #[test]
    fn unnormalized_state_is_semantic_error() {
        assert_eq!(semantic_line("space 2\nstate bad = [1,0 1,0]\n"), 2);
        assert_eq!(semantic_line("space 2\n\nstate bad = |up> + |down>\n"), 3);
    }

    #[test]
    fn parse_errors_have_positions() {
        let err = parse("space 2\nstate a = |up> +\n").unwrap_err();
        let ScenarioError::Parse(p) = err else { panic!() };
        assert_eq!(p.line, 2);
        assert_eq!(p.token, "end of line");
        let err = parse("space 2\nfrobnicate 3\n").unwrap_err();
        let ScenarioError::Parse(p) = err else { panic!() };
        assert_eq!((p.line, p.column, p.token.as_str()), (2, 1, "frobnicate"));
        let err = parse("space 2\nobs a = pauli W @ 1\n").unwrap_err();
        let ScenarioError::Parse(p) = err else { panic!() };
        assert_eq!((p.column, p.token.as_str()), (15, "W"));
    }

    #[test]
    fn state_before_space_rejected() {
        assert_eq!(semantic_line("state a = |up>\n"), 1);
    }

    #[test]
    fn unknown_names_rejected() {
        assert_eq!(semantic_line("space 2\nstate up = |up>\npre up\npost nope\n"), 4);
        assert_eq!(semantic_line(&format!("{HEADER}event 1 sy = 1\n")), 8);
        assert_eq!(semantic_line(&format!("{HEADER}query replace 1 sz assert outcome(sy) == 1\n")), 8);
        assert_eq!(semantic_line("space 2\nobs p = product(a, b)\n"), 2);
    }

    #[test]
    fn event_rules() {
        assert_eq!(semantic_line(&format!("{HEADER}event 1 sz = 2\n")), 8);
        assert_eq!(semantic_line(&format!("{HEADER}event 0 sz\n")), 8);
        assert_eq!(semantic_line(&format!("{HEADER}event 1 sz\nevent 1 sx\n")), 9);
        assert_eq!(semantic_line(&format!("{HEADER}event 1 sz\nactual 1 sx = 1\n")), 9);
        assert_eq!(semantic_line(&format!("{HEADER}event 1 sz\nquery replace 1 sx assert outcome(sx) == 1\n")), 9);
        assert_eq!(semantic_line(&format!("{HEADER}event 1 sz\nevent 2 sz\nquery replace 3 sx assert outcome(sz) == 1\n")), 10);
        parse(&format!("{HEADER}event 1 sz\nevent 2 sz\nquery replace 3 sx assert outcome(sz@2) == 1\n")).unwrap();
    }

    #[test]
    fn explicit_observable_with_support() {
        let s = parse(
            "space 2 x 2\nstate a = |up,up>\nobs z2 = { 1: [1 0] -1: [0 1] } @ 2\nobs z2p = pauli Z @ 2\npre a\npost a\n",
        )
        .unwrap();
        let a = &s.observable("z2").unwrap().decomposition;
        let b = &s.observable("z2p").unwrap().decomposition;
        assert_eq!(a.support(), &[1]);
        for (x, y) in a.branches().iter().zip(b.branches()) {
            assert!(x.projector.max_abs_diff(&y.projector) < 1e-15);
        }
    }

    #[test]
    fn incomplete_observable_rejected() {
        assert_eq!(semantic_line("space 2\nobs a = { 1: [1 0] }\n"), 2);
        assert_eq!(semantic_line("space 2\nobs a = { 1: [1 0] 1: [0 1] }\n"), 2);
    }

    #[test]
    fn reserved_words_are_not_names() {
        assert!(matches!(parse("space 2\nstate and = |up>\n"), Err(ScenarioError::Parse(_))));
    }

    #[test]
    fn property_grammar() {
        let s = parse(&format!(
            "{HEADER}actual 1 sx = 1\nquery replace 1 sz assert prob(outcome(sz) == 1 and outcome(sz) * outcome(sx) == -1) >= 0.5 and 2 == 2\n"
        ))
        .unwrap();
        assert_eq!(
            s.queries[0].property.to_string(),
            "prob(outcome(sz) == 1 and outcome(sz) * outcome(sx) == -1) >= 0.5 and 2 == 2"
        );
    }

    #[test]
    fn comments_and_crlf() {
        let s = parse("# leading\r\nscenario demo # trailing\r\nspace 2\r\nstate up = |up> # c\r\npre up\r\npost up\r\n").unwrap();
        assert_eq!(s.name, "demo");
    }

    #[test]
    fn config_line() {
        let s = parse(&format!("{HEADER}config samples 500 seed 9\n")).unwrap();
        assert_eq!(s.config, Some(RunConfig { samples: 500, seed: 9 }));
        assert_eq!(semantic_line(&format!("{HEADER}config samples 0 seed 9\n")), 8);
    }
}
