//! Label-only abstract semantics: values are erased to their shape (scalar,
//! null or a heap object), every branch is explored both ways, and the
//! reachable state space is enumerated breadth first.

use crate::concrete_sem::Value;
use crate::extended_sem::{final_verdict, ExtConfig, Verdict};
use crate::labels::StoredLabel;
use crate::machine::{map_item, Code, Config, Domain, Fault, Item, LVal, Loc, Locals, LoopEntry, Obj, ObjId, Ref, Rule, Truth};
use crate::par;
use crate::syntax::{BinOp, NIPolicy, Program, UnOp};
use num_bigint::BigInt;
use std::collections::{HashMap, VecDeque};
use std::fmt::{self, Write};

/// An abstract value: only what is needed to follow references.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Shape {
    Scalar,
    Null,
    Obj(ObjId),
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Scalar => f.write_str("s"),
            Shape::Null => f.write_str("n"),
            Shape::Obj(o) => write!(f, "o{o}"),
        }
    }
}

impl Domain for Shape {
    const RECORD_OUTPUT: bool = false;

    fn int(_: &BigInt) -> Self {
        Shape::Scalar
    }

    fn bool(_: bool) -> Self {
        Shape::Scalar
    }

    fn null() -> Self {
        Shape::Null
    }

    fn obj(id: ObjId) -> Self {
        Shape::Obj(id)
    }

    fn reference(&self) -> Ref {
        match self {
            Shape::Scalar => Ref::Scalar,
            Shape::Null => Ref::Null,
            Shape::Obj(o) => Ref::Obj(*o),
        }
    }

    fn unop(_: UnOp, _: &Self) -> Self {
        Shape::Scalar
    }

    fn binop(_: BinOp, _: &Self, _: &Self) -> Result<Self, Fault> {
        Ok(Shape::Scalar)
    }

    fn truth(&self) -> Truth {
        Truth::Both
    }
}

impl From<&Value> for Shape {
    fn from(v: &Value) -> Shape {
        match v {
            Value::Null => Shape::Null,
            Value::Obj(o) => Shape::Obj(*o),
            _ => Shape::Scalar,
        }
    }
}

pub type AbsState = Config<Shape>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExploreError {
    #[error("abstract state budget of {0} exceeded")]
    Budget(usize),
}

pub const DEFAULT_STATE_BUDGET: usize = 1_000_000;

/// Garbage-collects unreachable locations and objects and renumbers the rest
/// in first-visit order of a fixed traversal. The first `statics` locations
/// are roots and keep their numbers.
pub fn canonicalize<V: Domain>(cfg: &Config<V>, statics: usize) -> Config<V> {
    let mut r = Renumber {
        locs: vec![None; cfg.store.len()],
        objs: vec![None; cfg.heap.len()],
        loc_order: Vec::new(),
        obj_order: Vec::new(),
        queue: VecDeque::new(),
    };
    for l in 0..statics {
        r.loc(l);
    }
    r.frame(cfg.this, &cfg.locals, &cfg.k, &cfg.lstack);
    for f in &cfg.fstack {
        r.frame(f.this, &f.locals, &f.k, &f.lstack);
    }
    while let Some(n) = r.queue.pop_front() {
        match n {
            Node::Loc(l) => {
                if let Some((v, _)) = &cfg.store[l] {
                    r.val(v);
                }
            }
            Node::Obj(o) => {
                for &f in &cfg.heap[o].fields {
                    r.loc(f);
                }
            }
        }
    }

    let lm = |l: Loc| r.locs[l].expect("location visited");
    let om = |o: ObjId| r.objs[o].expect("object visited");
    let val = |v: &V| v.map_obj(&om);
    let locals = |ls: &Locals| ls.iter().map(|(s, l)| (*s, lm(*l))).collect::<Locals>();
    let items = |k: &[Item<V>]| -> Vec<Item<V>> {
        k.iter()
            .map(|i| match i {
                Item::EnvRestore(ls) => Item::EnvRestore(locals(ls)),
                Item::CtorEnd(o) => Item::CtorEnd(om(*o)),
                i => map_item(i, &|v: &LVal<V>| LVal::new(val(&v.v), v.l)),
            })
            .collect()
    };
    let loops = |ls: &[LoopEntry]| -> Vec<LoopEntry> {
        ls.iter()
            .map(|e| LoopEntry {
                stmt: e.stmt,
                depth: e.depth,
                locals: locals(&e.locals),
            })
            .collect()
    };
    Config {
        k: items(&cfg.k),
        locals: locals(&cfg.locals),
        this: cfg.this.map(om),
        store: r
            .loc_order
            .iter()
            .map(|&l| cfg.store[l].as_ref().map(|(v, sl)| (val(v), *sl)))
            .collect(),
        heap: r
            .obj_order
            .iter()
            .map(|&o| Obj {
                class: cfg.heap[o].class,
                fields: cfg.heap[o].fields.iter().map(|&f| lm(f)).collect(),
            })
            .collect(),
        lstack: loops(&cfg.lstack),
        fstack: cfg
            .fstack
            .iter()
            .map(|f| crate::machine::Frame {
                k: items(&f.k),
                locals: locals(&f.locals),
                this: f.this.map(om),
                lstack: loops(&f.lstack),
                cl: f.cl,
            })
            .collect(),
        cl: cfg.cl,
        labeled: cfg.labeled,
        out: cfg.out.iter().map(|v| LVal::new(val(&v.v), v.l)).collect(),
    }
}

enum Node {
    Loc(Loc),
    Obj(ObjId),
}

struct Renumber {
    locs: Vec<Option<usize>>,
    objs: Vec<Option<usize>>,
    loc_order: Vec<Loc>,
    obj_order: Vec<ObjId>,
    queue: VecDeque<Node>,
}

impl Renumber {
    fn loc(&mut self, l: Loc) {
        if self.locs[l].is_none() {
            self.locs[l] = Some(self.loc_order.len());
            self.loc_order.push(l);
            self.queue.push_back(Node::Loc(l));
        }
    }

    fn obj(&mut self, o: ObjId) {
        if self.objs[o].is_none() {
            self.objs[o] = Some(self.obj_order.len());
            self.obj_order.push(o);
            self.queue.push_back(Node::Obj(o));
        }
    }

    fn val<V: Domain>(&mut self, v: &V) {
        if let Ref::Obj(o) = v.reference() {
            self.obj(o);
        }
    }

    fn locals(&mut self, ls: &Locals) {
        for &l in ls.values() {
            self.loc(l);
        }
    }

    fn frame<V: Domain>(&mut self, this: Option<ObjId>, locals: &Locals, k: &[Item<V>], lstack: &[LoopEntry]) {
        if let Some(o) = this {
            self.obj(o);
        }
        self.locals(locals);
        for i in k {
            match i {
                Item::Val(v) | Item::BinApply(_, v) | Item::AssignField(_, v) => self.val(&v.v),
                Item::Args(_, vs) => vs.iter().for_each(|v| self.val(&v.v)),
                Item::CtorEnd(o) => self.obj(*o),
                Item::EnvRestore(ls) => self.locals(ls),
                _ => {}
            }
        }
        for e in lstack {
            self.locals(&e.locals);
        }
    }
}

/// The initial abstract state for a program under a policy.
pub fn lift(program: &Program, policy: &NIPolicy) -> AbsState {
    lift_code(&Code::new(program, policy))
}

pub fn lift_code(code: &Code<'_>) -> AbsState {
    let inputs = vec![Shape::Scalar; code.program.inputs.len()];
    canonicalize(&Config::initial(code, &inputs, true), code.program.statics.len())
}

/// Abstraction of an extended configuration: drop values, keep labels and
/// reference structure.
pub fn alpha(cfg: &ExtConfig, program: &Program) -> AbsState {
    canonicalize(&cfg.map_values(&|v: &Value| Shape::from(v)), program.statics.len())
}

/// All one-step successors, canonical and sorted by serialization. A state
/// whose only step faults (a null dereference or uninitialized read along an
/// infeasible path) has none.
pub fn abstract_successors(code: &Code<'_>, s: &AbsState) -> Vec<(Rule, AbsState)> {
    if s.is_final() {
        return Vec::new();
    }
    let choices: &[Option<bool>] = match s.branch_truth() {
        Some(Truth::Both) => &[Some(true), Some(false)],
        _ => &[None],
    };
    let statics = code.program.statics.len();
    let mut out: Vec<(Rule, AbsState)> = choices
        .iter()
        .filter_map(|&c| {
            let mut next = s.clone();
            next.step(code, c).ok().map(|rule| (rule, canonicalize(&next, statics)))
        })
        .collect();
    if out.len() > 1 {
        out.sort_by_cached_key(|(_, st)| serialize(st));
    }
    out
}

/// The explored state space. Node 0 is the initial state; nodes are
/// numbered in breadth-first order and edges are grouped by source.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReachGraph {
    pub nodes: Vec<AbsState>,
    pub edges: Vec<(usize, Rule, usize)>,
    pub finals: Vec<usize>,
    /// Non-final nodes with no successor.
    pub stuck: Vec<usize>,
}

impl ReachGraph {
    /// Finals violating the policy, each with its failing paths.
    pub fn violations(&self, policy: &NIPolicy) -> Vec<(usize, Vec<(String, StoredLabel)>)> {
        self.finals
            .iter()
            .filter_map(|&f| match final_verdict(&self.nodes[f], policy) {
                Verdict::Pass => None,
                Verdict::Fail { witnesses } => Some((f, witnesses)),
            })
            .collect()
    }

    pub fn out_degree(&self, node: usize) -> usize {
        self.edges.iter().filter(|(s, _, _)| *s == node).count()
    }
}

pub fn explore(program: &Program, policy: &NIPolicy) -> Result<(ReachGraph, Verdict), ExploreError> {
    explore_with(program, policy, DEFAULT_STATE_BUDGET)
}

pub fn explore_with(program: &Program, policy: &NIPolicy, budget: usize) -> Result<(ReachGraph, Verdict), ExploreError> {
    let code = Code::new(program, policy);
    let graph = explore_code(&code, budget)?;
    let verdict = graph_verdict(&graph, policy);
    Ok((graph, verdict))
}

/// Breadth-first exploration, one level at a time. Successors of a level are
/// computed in parallel and merged in frontier order, so numbering does not
/// depend on scheduling.
pub fn explore_code(code: &Code<'_>, budget: usize) -> Result<ReachGraph, ExploreError> {
    let init = lift_code(code);
    let mut visited: HashMap<AbsState, usize> = HashMap::new();
    visited.insert(init.clone(), 0);
    let mut g = ReachGraph {
        nodes: vec![init],
        edges: Vec::new(),
        finals: Vec::new(),
        stuck: Vec::new(),
    };
    let mut frontier = vec![0usize];
    while !frontier.is_empty() {
        let succs = {
            let nodes = &g.nodes;
            par::map(&frontier, |&i| abstract_successors(code, &nodes[i]))
        };
        let mut next = Vec::new();
        for (&src, ss) in frontier.iter().zip(succs) {
            if ss.is_empty() {
                if g.nodes[src].is_final() {
                    g.finals.push(src);
                } else {
                    g.stuck.push(src);
                }
            }
            for (rule, st) in ss {
                let id = match visited.get(&st) {
                    Some(&id) => id,
                    None => {
                        let id = g.nodes.len();
                        if id >= budget {
                            return Err(ExploreError::Budget(budget));
                        }
                        visited.insert(st.clone(), id);
                        g.nodes.push(st);
                        next.push(id);
                        id
                    }
                };
                g.edges.push((src, rule, id));
            }
        }
        frontier = next;
    }
    g.finals.sort_unstable();
    g.stuck.sort_unstable();
    Ok(g)
}

/// Passes iff every final node gives every `Low` path the label `Low`.
/// Witnesses are collected across all violating finals, first occurrence
/// first.
pub fn graph_verdict(g: &ReachGraph, policy: &NIPolicy) -> Verdict {
    let mut witnesses: Vec<(String, StoredLabel)> = Vec::new();
    for (_, ws) in g.violations(policy) {
        for w in ws {
            if !witnesses.contains(&w) {
                witnesses.push(w);
            }
        }
    }
    if witnesses.is_empty() {
        Verdict::Pass
    } else {
        Verdict::Fail { witnesses }
    }
}

/// Single-line canonical text form of a state. Tokens are separated by
/// single spaces.
pub fn serialize(s: &AbsState) -> String {
    let mut out = String::new();
    write!(out, "cl {} this {}", s.cl, opt_obj(s.this)).unwrap();
    out.push_str(" k");
    items(&mut out, &s.k);
    out.push_str(" ; env ");
    locals(&mut out, &s.locals);
    out.push_str(" ; store");
    for (i, c) in s.store.iter().enumerate() {
        match c {
            Some((v, sl)) => write!(out, " {i}={v}:{sl}").unwrap(),
            None => write!(out, " {i}=?").unwrap(),
        }
    }
    out.push_str(" ; heap");
    for (i, o) in s.heap.iter().enumerate() {
        write!(out, " o{i}:C{}[{}]", o.class, join(o.fields.iter())).unwrap();
    }
    out.push_str(" ; lstack");
    loops(&mut out, &s.lstack);
    for f in &s.fstack {
        write!(out, " ; frame cl {} this {} k", f.cl, opt_obj(f.this)).unwrap();
        items(&mut out, &f.k);
        out.push_str(" env ");
        locals(&mut out, &f.locals);
        out.push_str(" lstack");
        loops(&mut out, &f.lstack);
    }
    out
}

fn opt_obj(o: Option<ObjId>) -> String {
    o.map_or_else(|| "-".to_string(), |o| format!("o{o}"))
}

fn join<T: fmt::Display>(it: impl Iterator<Item = T>) -> String {
    it.map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn locals(out: &mut String, ls: &Locals) {
    write!(out, "{{{}}}", join(ls.iter().map(|(s, l)| format!("{s}:{l}")))).unwrap();
}

fn loops(out: &mut String, ls: &[LoopEntry]) {
    for e in ls {
        write!(out, " W{}@{}", e.stmt, e.depth).unwrap();
        locals(out, &e.locals);
    }
}

fn lv(v: &LVal<Shape>) -> String {
    format!("{}/{}", v.v, v.l)
}

fn items(out: &mut String, k: &[Item<Shape>]) {
    for i in k {
        out.push(' ');
        match i {
            Item::Eval(n) => write!(out, "E{n}"),
            Item::Exec(n) => write!(out, "X{n}"),
            Item::Val(v) => write!(out, "V{}", lv(v)),
            Item::BinRight(n) => write!(out, "BR{n}"),
            Item::BinApply(n, v) => write!(out, "BA{n}:{}", lv(v)),
            Item::UnApply(n) => write!(out, "UA{n}"),
            Item::ShortCircuit(n) => write!(out, "SC{n}"),
            Item::ScJoin(a, b) => write!(out, "SJ{a}/{b}"),
            Item::FieldRead(n) => write!(out, "FR{n}"),
            Item::Args(n, vs) => write!(out, "A{n}[{}]", join(vs.iter().map(lv))),
            Item::Ret => write!(out, "RET"),
            Item::MethodEnd => write!(out, "ME"),
            Item::CtorEnd(o) => write!(out, "CE{o}"),
            Item::DeclInit(n) => write!(out, "DI{n}"),
            Item::AssignTo(n) => write!(out, "AT{n}"),
            Item::AssignTarget(n) => write!(out, "AR{n}"),
            Item::AssignField(n, v) => write!(out, "AF{n}:{}", lv(v)),
            Item::IfBranch(n) => write!(out, "IB{n}"),
            Item::Loop(n) => write!(out, "L{n}"),
            Item::LoopBranch(n) => write!(out, "LB{n}"),
            Item::PopLoop => write!(out, "PL"),
            Item::Restore(l) => write!(out, "RS{l}"),
            Item::EnvRestore(ls) => {
                out.push_str("ER");
                locals(out, ls);
                Ok(())
            }
            Item::Print => write!(out, "PR"),
            Item::Discard => write!(out, "DS"),
        }
        .unwrap();
    }
}
