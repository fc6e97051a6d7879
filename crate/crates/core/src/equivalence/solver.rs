//! SMT-LIB v2 emission, an external solver process, and a builtin
//! model search used when no solver binary is available.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};
use std::process::{Command, Stdio};
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ruint::aliases::U256;
use serde::{Deserialize, Serialize};
use wait_timeout::ChildExt;

use super::term::{uf_symbol, smt_symbol, TableModel, Term, UfModel};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SolverChoice {
    /// An SMT-LIB v2 solver binary reading the script on stdin. `{timeout}`
    /// in an argument is replaced by the timeout in seconds.
    External { program: String, args: Vec<String> },
    Builtin,
    /// The external solver if it can be launched, otherwise the builtin search.
    Auto { program: String, args: Vec<String> },
}

impl Default for SolverChoice {
    fn default() -> Self {
        SolverChoice::Auto { program: "z3".into(), args: vec!["-in".into(), "-smt2".into(), "-T:{timeout}".into()] }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SolverError {
    #[error("cannot launch solver `{program}`: {reason}")]
    Unavailable { program: String, reason: String },
    #[error("solver output not understood: {0}")]
    Protocol(String),
}

/// A satisfying assignment: inputs plus the function applications it uses.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Model {
    pub inputs: BTreeMap<String, U256>,
    pub applications: Vec<(String, Vec<U256>, U256)>,
}

impl Model {
    pub fn input(&self, name: &str) -> U256 {
        self.inputs.get(name).copied().unwrap_or_default()
    }

    pub fn table(&self) -> TableModel {
        let mut t = TableModel::default();
        for (n, args, v) in &self.applications {
            t.table.insert((n.clone(), args.clone()), *v);
        }
        t
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Answer {
    Unsat,
    Sat(Model),
    Timeout,
    Unknown(String),
}

/// Every distinct function application in the term, with its arity.
pub fn applications(t: &Term) -> Vec<Term> {
    let mut seen = BTreeSet::new();
    t.visit(&mut |x| {
        if matches!(x, Term::Uf(..)) {
            seen.insert(x.clone());
        }
    });
    seen.into_iter().collect()
}

/// Declarations, the assertion, `check-sat` and `get-model`.
pub fn smtlib_script(phi: &Term, inputs: &BTreeSet<String>) -> String {
    let mut out = String::from("(set-option :produce-models true)\n(set-logic QF_UFBV)\n");
    for i in inputs {
        out.push_str(&format!("(declare-fun {} () (_ BitVec 256))\n", smt_symbol(i)));
    }
    let mut fns: BTreeSet<(String, usize)> = BTreeSet::new();
    for app in applications(phi) {
        if let Term::Uf(n, args) = app {
            fns.insert((n, args.len()));
        }
    }
    for (n, arity) in fns {
        let params = vec!["(_ BitVec 256)"; arity].join(" ");
        out.push_str(&format!("(declare-fun {} ({params}) (_ BitVec 256))\n", uf_symbol(&n, arity)));
    }
    out.push_str(&format!("(assert {})\n(check-sat)\n(get-model)\n", phi.to_smt()));
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Sexp {
    Atom(String),
    List(Vec<Sexp>),
}

pub fn parse_sexps(text: &str) -> Result<Vec<Sexp>, String> {
    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    let mut stack: Vec<Vec<Sexp>> = vec![Vec::new()];
    while i < chars.len() {
        let c = chars[i];
        match c {
            '(' => {
                stack.push(Vec::new());
                i += 1;
            }
            ')' => {
                let done = stack.pop().ok_or("unbalanced )")?;
                stack.last_mut().ok_or("unbalanced )")?.push(Sexp::List(done));
                i += 1;
            }
            c if c.is_whitespace() => i += 1,
            '|' | '"' => {
                let end = chars[i + 1..].iter().position(|&d| d == c).ok_or("unterminated quote")? + i + 1;
                stack.last_mut().expect("root").push(Sexp::Atom(chars[i..=end].iter().collect()));
                i = end + 1;
            }
            _ => {
                let start = i;
                while i < chars.len() && !chars[i].is_whitespace() && chars[i] != '(' && chars[i] != ')' {
                    i += 1;
                }
                stack.last_mut().expect("root").push(Sexp::Atom(chars[start..i].iter().collect()));
            }
        }
    }
    if stack.len() != 1 {
        return Err("unbalanced (".into());
    }
    Ok(stack.pop().expect("root"))
}

/// Reads a bit-vector or boolean value.
pub fn parse_value(s: &Sexp) -> Option<U256> {
    match s {
        Sexp::Atom(a) if a == "true" => Some(U256::from(1u8)),
        Sexp::Atom(a) if a == "false" => Some(U256::ZERO),
        Sexp::Atom(a) => {
            if let Some(h) = a.strip_prefix("#x") {
                U256::from_str_radix(h, 16).ok()
            } else if let Some(bits) = a.strip_prefix("#b") {
                U256::from_str_radix(bits, 2).ok()
            } else {
                None
            }
        }
        Sexp::List(items) => match items.as_slice() {
            [Sexp::Atom(u), Sexp::Atom(bv), Sexp::Atom(_)] if u == "_" => U256::from_str_radix(bv.strip_prefix("bv")?, 10).ok(),
            _ => None,
        },
    }
}

fn run_external(program: &str, args: &[String], script: &str, timeout: Duration) -> Result<Option<String>, SolverError> {
    let unavailable = |reason: String| SolverError::Unavailable { program: program.to_string(), reason };
    let mut child = Command::new(program)
        .args(args.iter().map(|a| a.replace("{timeout}", &timeout.as_secs().max(1).to_string())))
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .map_err(|e| unavailable(e.to_string()))?;
    let mut stdin = child.stdin.take().expect("piped stdin");
    let mut stdout = child.stdout.take().expect("piped stdout");
    let reader = std::thread::spawn(move || {
        let mut out = String::new();
        let _ = stdout.read_to_string(&mut out);
        out
    });
    let _ = stdin.write_all(script.as_bytes());
    drop(stdin);
    match child.wait_timeout(timeout + Duration::from_secs(2)).map_err(|e| unavailable(e.to_string()))? {
        Some(_) => Ok(Some(reader.join().unwrap_or_default())),
        None => {
            let _ = child.kill();
            let _ = child.wait();
            Ok(None)
        }
    }
}

/// Checks `phi` with an external solver and reads back a model when satisfiable.
pub fn solve_external(program: &str, args: &[String], phi: &Term, inputs: &BTreeSet<String>, timeout: Duration) -> Result<Answer, SolverError> {
    let apps = applications(phi);
    let mut queried: Vec<Term> = inputs.iter().map(|i| Term::Input(i.clone())).collect();
    for app in &apps {
        if let Term::Uf(_, a) = app {
            queried.extend(a.iter().cloned());
        }
        queried.push(app.clone());
    }
    let mut script = smtlib_script(phi, inputs);
    if !queried.is_empty() {
        let terms: Vec<String> = queried.iter().map(Term::to_smt).collect();
        script.push_str(&format!("(get-value ({}))\n", terms.join(" ")));
    }
    log::debug!("solver script: {} bytes, {} inputs, {} applications", script.len(), inputs.len(), apps.len());
    let Some(out) = run_external(program, args, &script, timeout)? else {
        return Ok(Answer::Timeout);
    };
    let sexps = parse_sexps(&out).map_err(SolverError::Protocol)?;
    let status = match sexps.first() {
        Some(Sexp::Atom(a)) => a.as_str(),
        _ => return Err(SolverError::Protocol(out.lines().next().unwrap_or("").to_string())),
    };
    match status {
        "unsat" => return Ok(Answer::Unsat),
        "timeout" => return Ok(Answer::Timeout),
        "unknown" => return Ok(Answer::Unknown("solver returned unknown".into())),
        "sat" => {}
        other => return Err(SolverError::Protocol(other.to_string())),
    }
    let mut values = Vec::new();
    if !queried.is_empty() {
        // Responses: status, the get-model listing, then get-value.
        let Some(Sexp::List(pairs)) = sexps.get(2) else {
            return Err(SolverError::Protocol("missing get-value response".into()));
        };
        for p in pairs {
            let v = match p {
                Sexp::List(kv) if kv.len() == 2 => parse_value(&kv[1]),
                _ => None,
            };
            values.push(v.ok_or_else(|| SolverError::Protocol(format!("bad value {p:?}")))?);
        }
        if values.len() != queried.len() {
            return Err(SolverError::Protocol("get-value arity".into()));
        }
    }
    let lookup: BTreeMap<&Term, U256> = queried.iter().zip(values.iter().copied()).collect();
    let model = Model {
        inputs: inputs.iter().map(|i| (i.clone(), lookup[&Term::Input(i.clone())])).collect(),
        applications: apps
            .iter()
            .filter_map(|app| match app {
                Term::Uf(n, a) => Some((n.clone(), a.iter().map(|x| lookup[x]).collect(), lookup[app])),
                _ => None,
            })
            .collect(),
    };
    Ok(Answer::Sat(model))
}

/// Word constants of the term, used to seed the search.
fn constants(t: &Term) -> BTreeSet<U256> {
    let mut out = BTreeSet::new();
    t.visit(&mut |x| {
        if let Term::Word(w) = x {
            out.insert(*w);
        }
    });
    out
}

/// Random search for a model. Functions are interpreted by hashing, except
/// non-linear arithmetic, which keeps its meaning. A hit is a real model; a
/// miss proves nothing.
pub fn solve_builtin(phi: &Term, inputs: &BTreeSet<String>, trials: usize, seed: u64) -> Answer {
    match phi {
        Term::Bool(false) => return Answer::Unsat,
        Term::Bool(true) => {}
        _ => {}
    }
    let mut pool: Vec<U256> = vec![U256::ZERO, U256::from(1u8), U256::from(2u8), U256::MAX, (U256::from(1u8) << 160) - U256::from(1u8)];
    for c in constants(phi) {
        pool.extend([c, c.wrapping_add(U256::from(1u8)), c.wrapping_sub(U256::from(1u8))]);
    }
    pool.sort();
    pool.dedup();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names: Vec<&String> = inputs.iter().collect();
    for trial in 0..trials.max(1) {
        let mut assignment: BTreeMap<String, U256> = BTreeMap::new();
        for n in &names {
            let v = match rng.gen_range(0..4) {
                _ if trial == 0 => U256::ZERO,
                0 | 1 => pool[rng.gen_range(0..pool.len())],
                2 if !assignment.is_empty() => *assignment.values().nth(rng.gen_range(0..assignment.len())).expect("non-empty"),
                _ => U256::from_limbs([rng.gen(), rng.gen(), rng.gen(), rng.gen()]) >> rng.gen_range(0..256usize),
            };
            assignment.insert((*n).clone(), v);
        }
        let mut model = Recording::default();
        let hit = phi.eval(&|n| assignment.get(n).copied().unwrap_or_default(), &mut model);
        if !hit.is_zero() {
            let applications = model.seen.into_iter().map(|((n, a), v)| (n, a, v)).collect();
            return Answer::Sat(Model { inputs: assignment, applications });
        }
    }
    Answer::Unknown("no model found by search".into())
}

#[derive(Default)]
struct Recording {
    inner: TableModel,
    seen: BTreeMap<(String, Vec<U256>), U256>,
}

impl UfModel for Recording {
    fn apply(&mut self, name: &str, args: &[U256]) -> U256 {
        let v = self.inner.apply(name, args);
        self.seen.insert((name.to_string(), args.to_vec()), v);
        v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::equivalence::term::{eq, not, uf, word};

    fn x() -> Term {
        Term::Input("x".into())
    }

    #[test]
    fn script_uses_standard_commands() {
        let phi = not(eq(uf("keccak256", vec![x()]), word(0)));
        let s = smtlib_script(&phi, &["x".to_string()].into());
        assert!(s.contains("(declare-fun |x| () (_ BitVec 256))"));
        assert!(s.contains("(declare-fun |keccak256/1| ((_ BitVec 256)) (_ BitVec 256))"));
        assert!(s.contains("(assert (not (= "));
        assert!(s.ends_with("(check-sat)\n(get-model)\n"));
    }

    #[test]
    fn sexp_and_values() {
        let v = parse_sexps("sat\n((|x| #x0000000000000000000000000000000000000000000000000000000000000005)\n (y (_ bv7 256)))").unwrap();
        assert_eq!(v[0], Sexp::Atom("sat".into()));
        let Sexp::List(pairs) = &v[1] else { panic!() };
        let vals: Vec<U256> = pairs
            .iter()
            .map(|p| match p {
                Sexp::List(kv) => parse_value(&kv[1]).unwrap(),
                _ => panic!(),
            })
            .collect();
        assert_eq!(vals, vec![U256::from(5u8), U256::from(7u8)]);
    }

    #[test]
    fn builtin_finds_equality_models() {
        let phi = eq(x(), word(12345));
        match solve_builtin(&phi, &["x".to_string()].into(), 200, 1) {
            Answer::Sat(m) => assert_eq!(m.input("x"), U256::from(12345u32)),
            other => panic!("{other:?}"),
        }
        assert_eq!(solve_builtin(&Term::Bool(false), &BTreeSet::new(), 10, 1), Answer::Unsat);
    }

    #[test]
    fn missing_binary_is_reported() {
        let err = solve_external("/nonexistent/solver", &[], &Term::Bool(true), &BTreeSet::new(), Duration::from_secs(1)).unwrap_err();
        assert!(matches!(err, SolverError::Unavailable { .. }));
    }
}
