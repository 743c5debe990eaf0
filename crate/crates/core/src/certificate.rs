//! Certificates of the abstract exploration and their checker.
//!
//! Every kind starts with the same header:
//!
//! ```text
//! version 1
//! kind full|rules|labels
//! program-sha256 <hex>
//! policy-sha256 <hex>
//! ```
//!
//! * `full`: one `N<id> <state>` line per node in breadth-first order, each
//!   followed by its outgoing `E <src> <rule> <dst>` edges.
//! * `rules`: only branch points survive. `S <ref>` names the point reached
//!   from the initial state by deterministic steps; then, for each branch
//!   point `P<id>` in order, one `R P<id> <rule> <ref>` line per branch,
//!   where `<ref>` is the next branch point, final (`F<id>`) or dead end
//!   (`D<id>`) reached after the branching step.
//! * `labels`: just the branching rule names, one per line, in the order the
//!   `rules` body would list them.
//!
//! The checker rebuilds every state itself from the program and compares;
//! it never searches beyond what the certificate lists.

use crate::abstract_sem::{abstract_successors, lift_code, serialize, AbsState, ReachGraph};
use crate::extended_sem::{final_verdict, Verdict};
use crate::labels::StoredLabel;
use crate::machine::{Code, Rule};
use crate::syntax::{pretty_print, NIPolicy, Program};
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

pub const VERSION: &str = "1";

/// Upper bound on deterministic steps replayed between two branch points.
pub const REPLAY_LIMIT: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CertKind {
    Full,
    Rules,
    Labels,
}

impl CertKind {
    pub const ALL: [CertKind; 3] = [CertKind::Full, CertKind::Rules, CertKind::Labels];
}

impl fmt::Display for CertKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CertKind::Full => "full",
            CertKind::Rules => "rules",
            CertKind::Labels => "labels",
        })
    }
}

impl FromStr for CertKind {
    type Err = String;
    fn from_str(s: &str) -> Result<CertKind, String> {
        match s {
            "full" => Ok(CertKind::Full),
            "rules" => Ok(CertKind::Rules),
            "labels" => Ok(CertKind::Labels),
            _ => Err(format!("unknown certificate kind `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CheckError {
    #[error("{0} hash does not match")]
    HashMismatch(&'static str),
    #[error("unsupported certificate version `{0}`")]
    UnknownVersion(String),
    #[error("line {line}: invalid step: {reason}")]
    InvalidStep { line: usize, reason: String },
    #[error("line {line}: missing successor: {reason}")]
    MissingSuccessor { line: usize, reason: String },
    #[error("final state {node} violates the policy: {}", fmt_witnesses(.witnesses))]
    FinalStateViolation { node: String, witnesses: Vec<(String, StoredLabel)> },
    #[error("line {line}: malformed certificate: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("deterministic replay exceeded {0} steps")]
    ReplayLimit(usize),
}

fn fmt_witnesses(ws: &[(String, StoredLabel)]) -> String {
    ws.iter().map(|(n, l)| format!("{n} = {l}")).collect::<Vec<_>>().join(", ")
}

/// What an accepted certificate covered.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckReport {
    pub kind: CertKind,
    /// States rebuilt by the checker (nodes for `full`, branch points,
    /// finals and dead ends otherwise).
    pub states: usize,
    pub finals: usize,
}

pub fn program_hash(program: &Program) -> String {
    hex::encode(Sha256::digest(pretty_print(program).as_bytes()))
}

fn header(program: &Program, policy: &NIPolicy, kind: CertKind) -> String {
    format!(
        "version {VERSION}\nkind {kind}\nprogram-sha256 {}\npolicy-sha256 {}\n",
        program_hash(program),
        policy.sha256(),
    )
}

/// Serializes an explored graph as a certificate of the given kind.
pub fn emit(program: &Program, policy: &NIPolicy, graph: &ReachGraph, kind: CertKind) -> String {
    let mut out = header(program, policy, kind);
    match kind {
        CertKind::Full => {
            let mut edges = graph.edges.iter().peekable();
            for (i, n) in graph.nodes.iter().enumerate() {
                out.push_str(&format!("N{i} {}\n", serialize(n)));
                while let Some((_, rule, dst)) = edges.next_if(|(s, _, _)| *s == i) {
                    out.push_str(&format!("E {i} {} {dst}\n", rule.name()));
                }
            }
        }
        CertKind::Rules | CertKind::Labels => {
            let points = PointGraph::from_graph(graph);
            if kind == CertKind::Rules {
                out.push_str(&format!("S {}\n", points.start));
            }
            for (i, branches) in points.branches.iter().enumerate() {
                for (rule, dst) in branches {
                    if kind == CertKind::Rules {
                        out.push_str(&format!("R {} {} {dst}\n", PointRef(PointKind::Branch, i), rule.name()));
                    } else {
                        out.push_str(&format!("{}\n", rule.name()));
                    }
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum PointKind {
    Branch,
    Final,
    Dead,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct PointRef(PointKind, usize);

impl fmt::Display for PointRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = match self.0 {
            PointKind::Branch => 'P',
            PointKind::Final => 'F',
            PointKind::Dead => 'D',
        };
        write!(f, "{c}{}", self.1)
    }
}

/// The graph contracted to branch points, finals and dead ends, numbered in
/// discovery order.
struct PointGraph {
    start: PointRef,
    /// Outgoing branches of each branch point, by point number. Non-branch
    /// points have empty entries.
    branches: Vec<Vec<(Rule, PointRef)>>,
}

impl PointGraph {
    fn from_graph(g: &ReachGraph) -> PointGraph {
        let mut out: Vec<Vec<(usize, Rule)>> = vec![Vec::new(); g.nodes.len()];
        for &(s, r, d) in &g.edges {
            out[s].push((d, r));
        }
        let kind = |n: usize| {
            if g.nodes[n].is_final() {
                Some(PointKind::Final)
            } else if out[n].is_empty() {
                Some(PointKind::Dead)
            } else if g.nodes[n].branch_truth().is_some() {
                Some(PointKind::Branch)
            } else {
                None
            }
        };
        let follow = |mut n: usize| {
            loop {
                if let Some(k) = kind(n) {
                    return (k, n);
                }
                n = out[n][0].0;
            }
        };
        let mut ids: HashMap<usize, PointRef> = HashMap::new();
        let mut order: Vec<usize> = Vec::new();
        let mut intern = |(k, n): (PointKind, usize), order: &mut Vec<usize>| {
            *ids.entry(n).or_insert_with(|| {
                order.push(n);
                PointRef(k, order.len() - 1)
            })
        };
        let start = intern(follow(0), &mut order);
        let mut branches = Vec::new();
        let mut i = 0;
        while i < order.len() {
            let n = order[i];
            let mut bs = Vec::new();
            if kind(n) == Some(PointKind::Branch) {
                for &(d, r) in &out[n] {
                    bs.push((r, intern(follow(d), &mut order)));
                }
            }
            branches.push(bs);
            i += 1;
        }
        PointGraph { start, branches }
    }
}

struct Lines<'a> {
    lines: Vec<&'a str>,
    pos: usize,
}

impl<'a> Lines<'a> {
    fn peek(&self) -> Option<&'a str> {
        self.lines.get(self.pos).copied()
    }

    fn next(&mut self) -> Option<&'a str> {
        let l = self.peek();
        if l.is_some() {
            self.pos += 1;
        }
        l
    }

    /// 1-based number of the line last returned by `next`.
    fn line(&self) -> usize {
        self.pos
    }

    fn malformed(&self, reason: impl Into<String>) -> CheckError {
        CheckError::Malformed {
            line: self.pos,
            reason: reason.into(),
        }
    }

    fn field(&mut self, key: &str) -> Result<&'a str, CheckError> {
        let l = self.next().ok_or_else(|| self.malformed(format!("missing `{key}` line")))?;
        match l.split_once(' ') {
            Some((k, v)) if k == key && !v.is_empty() => Ok(v),
            _ => Err(self.malformed(format!("expected `{key} ...`"))),
        }
    }
}

/// Validates a certificate against a program and policy.
pub fn check(program: &Program, policy: &NIPolicy, text: &str) -> Result<CheckReport, CheckError> {
    if !text.ends_with('\n') {
        return Err(CheckError::Malformed {
            line: text.lines().count(),
            reason: "missing final newline".into(),
        });
    }
    let mut lines = Lines {
        lines: text.split('\n').collect(),
        pos: 0,
    };
    lines.lines.pop();
    let version = lines.field("version")?;
    if version != VERSION {
        return Err(CheckError::UnknownVersion(version.to_string()));
    }
    let kind: CertKind = lines.field("kind")?.parse().map_err(|e: String| lines.malformed(e))?;
    if lines.field("program-sha256")? != program_hash(program) {
        return Err(CheckError::HashMismatch("program"));
    }
    if lines.field("policy-sha256")? != policy.sha256() {
        return Err(CheckError::HashMismatch("policy"));
    }
    let code = Code::new(program, policy);
    let init = lift_code(&code);
    let mut checker = Checker {
        code: &code,
        policy,
        lines,
    };
    let report = match kind {
        CertKind::Full => checker.full(init)?,
        CertKind::Rules | CertKind::Labels => checker.reduced(init, kind)?,
    };
    if checker.lines.peek().is_some() {
        checker.lines.next();
        return Err(checker.lines.malformed("unexpected trailing line"));
    }
    Ok(report)
}

struct Checker<'c, 'p> {
    code: &'c Code<'p>,
    policy: &'c NIPolicy,
    lines: Lines<'c>,
}

/// States discovered so far, numbered in discovery order.
struct Known {
    states: Vec<AbsState>,
    index: HashMap<AbsState, usize>,
}

impl Known {
    fn new() -> Known {
        Known {
            states: Vec::new(),
            index: HashMap::new(),
        }
    }

    fn intern(&mut self, s: AbsState) -> usize {
        if let Some(&i) = self.index.get(&s) {
            return i;
        }
        self.states.push(s.clone());
        self.index.insert(s, self.states.len() - 1);
        self.states.len() - 1
    }
}

impl Checker<'_, '_> {
    fn final_ok(&self, node: String, s: &AbsState) -> Result<(), CheckError> {
        match final_verdict(s, self.policy) {
            Verdict::Pass => Ok(()),
            Verdict::Fail { witnesses } => Err(CheckError::FinalStateViolation { node, witnesses }),
        }
    }

    fn invalid(&self, reason: impl Into<String>) -> CheckError {
        CheckError::InvalidStep {
            line: self.lines.line(),
            reason: reason.into(),
        }
    }

    fn missing(&self, reason: impl Into<String>) -> CheckError {
        CheckError::MissingSuccessor {
            line: self.lines.line(),
            reason: reason.into(),
        }
    }

    fn full(&mut self, init: AbsState) -> Result<CheckReport, CheckError> {
        let mut known = Known::new();
        known.intern(init);
        let mut i = 0;
        let mut finals = 0;
        while i < known.states.len() {
            let line = self.lines.next().ok_or_else(|| self.missing(format!("node N{i} is not listed")))?;
            let (tag, state) = line.split_once(' ').ok_or_else(|| self.lines.malformed("expected a node line"))?;
            if tag != format!("N{i}") {
                return Err(if tag.starts_with('E') || tag.starts_with('N') {
                    self.missing(format!("expected node N{i}"))
                } else {
                    self.lines.malformed(format!("expected node N{i}"))
                });
            }
            let s = known.states[i].clone();
            if state != serialize(&s) {
                return Err(self.invalid(format!("state of N{i} differs from the recomputed one")));
            }
            if s.is_final() {
                finals += 1;
                self.final_ok(format!("N{i}"), &s)?;
            }
            let expected: Vec<String> = abstract_successors(self.code, &s)
                .into_iter()
                .map(|(rule, succ)| format!("E {i} {} {}", rule.name(), known.intern(succ)))
                .collect();
            for (j, want) in expected.iter().enumerate() {
                let line = match self.lines.peek() {
                    Some(l) if l.starts_with("E ") => {
                        self.lines.next();
                        l
                    }
                    _ => return Err(self.missing(format!("N{i} lacks `{want}`"))),
                };
                if line != want {
                    return Err(if expected[j + 1..].iter().any(|e| e == line) {
                        self.missing(format!("N{i} lacks `{want}`"))
                    } else {
                        self.invalid(format!("expected `{want}`"))
                    });
                }
            }
            if matches!(self.lines.peek(), Some(l) if l.starts_with("E ")) {
                self.lines.next();
                return Err(self.invalid(format!("N{i} has no such successor")));
            }
            i += 1;
        }
        Ok(CheckReport {
            kind: CertKind::Full,
            states: known.states.len(),
            finals,
        })
    }

    /// Deterministic steps from `s` up to the next branch point, final state
    /// or dead end.
    fn replay(&self, mut s: AbsState) -> Result<(PointKind, AbsState), CheckError> {
        for _ in 0..REPLAY_LIMIT {
            if s.is_final() {
                return Ok((PointKind::Final, s));
            }
            if s.branch_truth().is_some() {
                return Ok((PointKind::Branch, s));
            }
            let mut next = abstract_successors(self.code, &s);
            match next.pop() {
                None => return Ok((PointKind::Dead, s)),
                Some((_, n)) => s = n,
            }
        }
        Err(CheckError::ReplayLimit(REPLAY_LIMIT))
    }

    fn reduced(&mut self, init: AbsState, kind: CertKind) -> Result<CheckReport, CheckError> {
        let mut known = Known::new();
        let mut kinds: Vec<PointKind> = Vec::new();
        fn point(known: &mut Known, kinds: &mut Vec<PointKind>, (k, s): (PointKind, AbsState)) -> PointRef {
            let id = known.intern(s);
            if id == kinds.len() {
                kinds.push(k);
            }
            PointRef(k, id)
        }
        let start = point(&mut known, &mut kinds, self.replay(init)?);
        if kind == CertKind::Rules {
            let line = self.lines.next().ok_or_else(|| self.lines.malformed("missing `S` line"))?;
            if line != format!("S {start}") {
                return Err(if line.starts_with("S ") {
                    self.invalid(format!("the initial state leads to {start}"))
                } else {
                    self.lines.malformed("expected `S ...`")
                });
            }
        }
        let mut i = 0;
        let mut finals = 0;
        while i < known.states.len() {
            let s = known.states[i].clone();
            match kinds[i] {
                PointKind::Final => {
                    finals += 1;
                    self.final_ok(format!("F{i}"), &s)?;
                }
                PointKind::Dead => {}
                PointKind::Branch => {
                    let mut expected = Vec::new();
                    for (rule, succ) in abstract_successors(self.code, &s) {
                        let dst = point(&mut known, &mut kinds, self.replay(succ)?);
                        expected.push(match kind {
                            CertKind::Rules => format!("R P{i} {} {dst}", rule.name()),
                            _ => rule.name().to_string(),
                        });
                    }
                    for (j, want) in expected.iter().enumerate() {
                        let line = self
                            .lines
                            .next()
                            .ok_or_else(|| self.missing(format!("P{i} lacks `{want}`")))?;
                        if line != want {
                            let well_formed = match kind {
                                CertKind::Rules => line.starts_with("R "),
                                _ => Rule::from_name(line).is_some(),
                            };
                            return Err(if expected[j + 1..].iter().any(|e| e == line) {
                                self.missing(format!("P{i} lacks `{want}`"))
                            } else if well_formed {
                                self.invalid(format!("expected `{want}`"))
                            } else {
                                self.lines.malformed(format!("expected `{want}`"))
                            });
                        }
                    }
                }
            }
            i += 1;
        }
        Ok(CheckReport {
            kind,
            states: known.states.len(),
            finals,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abstract_sem::explore;
    use crate::syntax::{extract_policy, parse};

    const EX4: &str = "class T { static int low = 0, high; //@ setLabel(high, High);
        static void main(int input) { //@ setLabel(input, High);
        high = input; int aux = 0; if (high > 2) aux = 1; else aux = 0; low = 0; } }";

    fn certs(src: &str) -> (Program, NIPolicy, Vec<String>) {
        let p = parse(src).unwrap();
        let pol = extract_policy(&p).unwrap();
        let (g, _) = explore(&p, &pol).unwrap();
        let cs = CertKind::ALL.iter().map(|&k| emit(&p, &pol, &g, k)).collect();
        (p, pol, cs)
    }

    #[test]
    fn round_trip_all_kinds() {
        let (p, pol, cs) = certs(EX4);
        for (c, k) in cs.iter().zip(CertKind::ALL) {
            let r = check(&p, &pol, c).unwrap();
            assert_eq!(r.kind, k);
            assert_eq!(r.finals, 1);
        }
        assert!(cs[2].len() <= cs[1].len() && cs[1].len() < cs[0].len());
    }

    #[test]
    fn full_certificate_lists_every_node_and_edge() {
        let p = parse(EX4).unwrap();
        let pol = extract_policy(&p).unwrap();
        let (g, _) = explore(&p, &pol).unwrap();
        let c = emit(&p, &pol, &g, CertKind::Full);
        assert_eq!(c.lines().filter(|l| l.starts_with('N')).count(), g.nodes.len());
        assert_eq!(c.lines().filter(|l| l.starts_with("E ")).count(), g.edges.len());
    }

    #[test]
    fn deleted_branch_edge_is_a_missing_successor() {
        let (p, pol, cs) = certs(EX4);
        let lines: Vec<&str> = cs[0].lines().collect();
        let at = lines.iter().position(|l| l.starts_with("E ") && l.contains(" if-then ")).unwrap();
        let mut tampered: Vec<&str> = lines.clone();
        tampered.remove(at);
        let text = tampered.join("\n") + "\n";
        assert!(matches!(check(&p, &pol, &text), Err(CheckError::MissingSuccessor { .. })));
    }

    #[test]
    fn edited_label_is_an_invalid_step() {
        let (p, pol, cs) = certs(EX4);
        let lines: Vec<&str> = cs[0].lines().collect();
        let at = lines.iter().rposition(|l| l.starts_with('N') && l.contains(":Low")).unwrap();
        let mut tampered: Vec<String> = lines.iter().map(|s| s.to_string()).collect();
        tampered[at] = tampered[at].replacen(":Low", ":High", 1);
        let text = tampered.join("\n") + "\n";
        assert!(matches!(check(&p, &pol, &text), Err(CheckError::InvalidStep { .. })));
    }

    #[test]
    fn header_is_validated() {
        let (p, pol, cs) = certs(EX4);
        let v2 = cs[1].replacen("version 1", "version 2", 1);
        assert_eq!(check(&p, &pol, &v2), Err(CheckError::UnknownVersion("2".into())));
        let other = parse("class T { static int low; static void main() { low = 1; } }").unwrap();
        let other_pol = extract_policy(&other).unwrap();
        assert_eq!(check(&other, &other_pol, &cs[1]), Err(CheckError::HashMismatch("program")));
    }

    #[test]
    fn interferent_program_is_rejected_at_its_final_state() {
        let (p, pol, cs) = certs(
            "class T { static int low = 0, high; //@ setLabel(high, High);\n static void main() { low = high; } }",
        );
        for c in &cs {
            assert!(matches!(check(&p, &pol, c), Err(CheckError::FinalStateViolation { .. })));
        }
    }

    #[test]
    fn straight_line_labels_body_is_empty() {
        let (p, pol, cs) = certs("class T { static int low; static void main() { low = 1; low = low + 2; } }");
        assert_eq!(cs[2].lines().count(), 4);
        assert!(check(&p, &pol, &cs[2]).is_ok());
    }
}
