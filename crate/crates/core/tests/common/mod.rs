//! Shared helpers for the integration suites, including a direct recursive
//! big-step evaluator over the AST. It shares nothing with the continuation
//! machine except name resolution, so it serves as an independent oracle
//! for the concrete semantics.
#![allow(dead_code)]

use nicert_core::concrete_sem::{Observed, Value};
use nicert_core::syntax::{
    extract_policy, parse, BinOp, CallTarget, Expr, ExprKind, MethodDecl, NIPolicy, Program, Res, Stmt, StmtKind,
    Type, UnOp,
};
use num_bigint::BigInt;
use num_traits::Zero;
use std::collections::HashMap;
use std::path::PathBuf;

pub fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

/// Every corpus program as `(file stem, source)`, sorted by name.
pub fn corpus() -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = std::fs::read_dir(corpus_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "njava"))
        .map(|p| {
            (
                p.file_stem().unwrap().to_string_lossy().into_owned(),
                std::fs::read_to_string(&p).unwrap(),
            )
        })
        .collect();
    out.sort();
    out
}

pub fn corpus_file(stem: &str) -> String {
    std::fs::read_to_string(corpus_dir().join(format!("{stem}.njava"))).unwrap()
}

pub fn load(src: &str) -> (Program, NIPolicy) {
    let p = parse(src).unwrap_or_else(|e| panic!("{e}\n{src}"));
    let pol = extract_policy(&p).unwrap();
    (p, pol)
}

pub fn int(n: i64) -> Value {
    Value::Int(BigInt::from(n))
}

/// Every input vector of a per-input value list, lexicographic.
pub fn points(domain: &[Vec<Value>]) -> Vec<Vec<Value>> {
    let mut out = vec![Vec::new()];
    for vals in domain {
        out = out
            .into_iter()
            .flat_map(|p: Vec<Value>| {
                vals.iter().map(move |x| {
                    let mut q = p.clone();
                    q.push(x.clone());
                    q
                })
            })
            .collect();
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DirectError {
    Fault(&'static str),
    OutOfFuel,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectResult {
    pub vars: Vec<(String, Option<Observed>)>,
    pub out: Vec<Observed>,
}

enum Flow {
    Normal,
    Break,
    Continue,
    Return(Option<Value>),
}

struct Eval<'a> {
    p: &'a Program,
    statics: Vec<Value>,
    heap: Vec<Vec<Value>>,
    out: Vec<Observed>,
    fuel: u64,
}

struct Frame {
    scopes: Vec<HashMap<String, Option<Value>>>,
    this: Option<usize>,
}

impl Frame {
    fn lookup(&mut self, name: &str) -> &mut Option<Value> {
        self.scopes
            .iter_mut()
            .rev()
            .find_map(|s| s.get_mut(name))
            .unwrap_or_else(|| panic!("unbound local {name}"))
    }
}

type R<T> = Result<T, DirectError>;

pub fn run_direct(p: &Program, policy: &NIPolicy, inputs: &[Value], fuel: u64) -> Result<DirectResult, DirectError> {
    let statics = p
        .statics
        .iter()
        .map(|s| match s.ty {
            Type::Int => Value::Int(BigInt::zero()),
            Type::Bool => Value::Bool(false),
            _ => Value::Null,
        })
        .collect();
    let mut ev = Eval {
        p,
        statics,
        heap: Vec::new(),
        out: Vec::new(),
        fuel,
    };
    let mut top = Frame {
        scopes: vec![HashMap::new()],
        this: None,
    };
    for c in &p.classes {
        for s in &c.static_init {
            ev.stmt(s, &mut top)?;
        }
    }
    let main = p.main_method();
    let mut f = Frame {
        scopes: vec![main.params.iter().zip(inputs).map(|(a, v)| (a.name.clone(), Some(v.clone()))).collect()],
        this: None,
    };
    ev.stmt(&main.body, &mut f)?;
    let vars = policy
        .paths
        .iter()
        .map(|path| {
            let mut v = ev.statics[path.root].clone();
            for &slot in &path.fields {
                match v {
                    Value::Obj(o) => v = ev.heap[o][slot].clone(),
                    _ => return (path.name.clone(), None),
                }
            }
            (path.name.clone(), Some(Observed::from(&v)))
        })
        .collect();
    Ok(DirectResult { vars, out: ev.out })
}

impl Eval<'_> {
    fn tick(&mut self) -> R<()> {
        if self.fuel == 0 {
            return Err(DirectError::OutOfFuel);
        }
        self.fuel -= 1;
        Ok(())
    }

    fn obj(v: &Value) -> R<usize> {
        match v {
            Value::Obj(o) => Ok(*o),
            _ => Err(DirectError::Fault("null")),
        }
    }

    fn stmt(&mut self, s: &Stmt, f: &mut Frame) -> R<Flow> {
        self.tick()?;
        match &s.kind {
            StmtKind::Decl { name, init, .. } => {
                let v = match init {
                    Some(e) => Some(self.expr(e, f)?),
                    None => None,
                };
                f.scopes.last_mut().unwrap().insert(name.clone(), v);
            }
            StmtKind::Assign { target, value } => match (&target.kind, self.p.res(target.id).clone()) {
                (ExprKind::Name(n), Res::Local) => {
                    let v = self.expr(value, f)?;
                    *f.lookup(n) = Some(v);
                }
                (_, Res::Static(slot)) => {
                    let v = self.expr(value, f)?;
                    self.statics[slot] = v;
                }
                (_, Res::ThisField(slot)) => {
                    let v = self.expr(value, f)?;
                    self.heap[f.this.unwrap()][slot] = v;
                }
                (ExprKind::Field(recv, _), Res::ObjField(slot)) => {
                    let o = self.expr(recv, f)?;
                    let v = self.expr(value, f)?;
                    let o = Self::obj(&o)?;
                    self.heap[o][slot] = v;
                }
                other => panic!("bad assignment target {other:?}"),
            },
            StmtKind::If { cond, then_branch, else_branch } => {
                if self.truth(cond, f)? {
                    return self.stmt(then_branch, f);
                } else if let Some(e) = else_branch {
                    return self.stmt(e, f);
                }
            }
            StmtKind::While { cond, body } => {
                while self.truth(cond, f)? {
                    match self.stmt(body, f)? {
                        Flow::Break => break,
                        Flow::Normal | Flow::Continue => {}
                        r @ Flow::Return(_) => return Ok(r),
                    }
                }
            }
            StmtKind::Break => return Ok(Flow::Break),
            StmtKind::Continue => return Ok(Flow::Continue),
            StmtKind::Return(e) => {
                let v = match e {
                    Some(e) => Some(self.expr(e, f)?),
                    None => None,
                };
                return Ok(Flow::Return(v));
            }
            StmtKind::Expr(e) => {
                self.expr(e, f)?;
            }
            StmtKind::Print(e) => {
                let v = self.expr(e, f)?;
                self.out.push(Observed::from(&v));
            }
            StmtKind::Block(stmts) => {
                f.scopes.push(HashMap::new());
                for s in stmts {
                    let r = self.stmt(s, f);
                    match r {
                        Ok(Flow::Normal) => {}
                        other => {
                            f.scopes.pop();
                            return other;
                        }
                    }
                }
                f.scopes.pop();
            }
            StmtKind::Empty => {}
        }
        Ok(Flow::Normal)
    }

    fn truth(&mut self, e: &Expr, f: &mut Frame) -> R<bool> {
        match self.expr(e, f)? {
            Value::Bool(b) => Ok(b),
            v => panic!("non-boolean guard {v:?}"),
        }
    }

    fn int(v: &Value) -> &BigInt {
        match v {
            Value::Int(n) => n,
            v => panic!("expected int, got {v:?}"),
        }
    }

    fn expr(&mut self, e: &Expr, f: &mut Frame) -> R<Value> {
        self.tick()?;
        Ok(match &e.kind {
            ExprKind::Int(n) => Value::Int(n.clone()),
            ExprKind::Bool(b) => Value::Bool(*b),
            ExprKind::Null => Value::Null,
            ExprKind::This => Value::Obj(f.this.unwrap()),
            ExprKind::Name(n) => match self.p.res(e.id).clone() {
                Res::Local => f.lookup(n).clone().ok_or(DirectError::Fault("uninitialized"))?,
                Res::Static(slot) => self.statics[slot].clone(),
                Res::ThisField(slot) => self.heap[f.this.unwrap()][slot].clone(),
                r => panic!("bad name resolution {r:?}"),
            },
            ExprKind::Field(recv, _) => match self.p.res(e.id).clone() {
                Res::Static(slot) => self.statics[slot].clone(),
                Res::ObjField(slot) => {
                    let o = self.expr(recv, f)?;
                    self.heap[Self::obj(&o)?][slot].clone()
                }
                r => panic!("bad field resolution {r:?}"),
            },
            ExprKind::Unary(op, a) => {
                let a = self.expr(a, f)?;
                match (op, a) {
                    (UnOp::Neg, Value::Int(n)) => Value::Int(-n),
                    (UnOp::Not, Value::Bool(b)) => Value::Bool(!b),
                    other => panic!("bad unary {other:?}"),
                }
            }
            ExprKind::Binary(op, a, b) => {
                if op.is_short_circuit() {
                    let l = self.truth(a, f)?;
                    return match (op, l) {
                        (BinOp::And, false) => Ok(Value::Bool(false)),
                        (BinOp::Or, true) => Ok(Value::Bool(true)),
                        _ => Ok(Value::Bool(self.truth(b, f)?)),
                    };
                }
                let x = self.expr(a, f)?;
                let y = self.expr(b, f)?;
                match op {
                    BinOp::Eq => Value::Bool(x == y),
                    BinOp::Ne => Value::Bool(x != y),
                    _ => {
                        let (m, n) = (Self::int(&x), Self::int(&y));
                        match op {
                            BinOp::Add => Value::Int(m + n),
                            BinOp::Sub => Value::Int(m - n),
                            BinOp::Mul => Value::Int(m * n),
                            BinOp::Div | BinOp::Rem if n.is_zero() => return Err(DirectError::Fault("div0")),
                            BinOp::Div => Value::Int(m / n),
                            BinOp::Rem => Value::Int(m % n),
                            BinOp::Lt => Value::Bool(m < n),
                            BinOp::Le => Value::Bool(m <= n),
                            BinOp::Gt => Value::Bool(m > n),
                            BinOp::Ge => Value::Bool(m >= n),
                            _ => unreachable!(),
                        }
                    }
                }
            }
            ExprKind::Call { recv, args, .. } => {
                let (target, this) = match self.p.res(e.id).clone() {
                    Res::Call(CallTarget::Static(m)) => (m, None),
                    Res::Call(CallTarget::Instance(m)) => {
                        let o = match recv {
                            Some(r) => self.expr(r, f)?,
                            None => Value::Obj(f.this.unwrap()),
                        };
                        (m, Some(o))
                    }
                    r => panic!("bad call resolution {r:?}"),
                };
                let mut vals = Vec::new();
                for a in args {
                    vals.push(self.expr(a, f)?);
                }
                let this = match this {
                    Some(o) => Some(Self::obj(&o)?),
                    None => None,
                };
                let m = self.p.method(target);
                self.invoke(m, this, vals)?.unwrap_or(Value::Null)
            }
            ExprKind::New { args, .. } => {
                let Res::New(c) = self.p.res(e.id).clone() else { panic!("bad new") };
                let mut vals = Vec::new();
                for a in args {
                    vals.push(self.expr(a, f)?);
                }
                let class = &self.p.classes[c];
                let fields = class
                    .instance_fields
                    .iter()
                    .map(|&fi| match class.fields[fi].ty {
                        Type::Int => Value::Int(BigInt::zero()),
                        Type::Bool => Value::Bool(false),
                        _ => Value::Null,
                    })
                    .collect();
                self.heap.push(fields);
                let o = self.heap.len() - 1;
                let mut init = Frame {
                    scopes: vec![HashMap::new()],
                    this: Some(o),
                };
                for s in &class.instance_init {
                    self.stmt(s, &mut init)?;
                }
                if let Some(ctor) = &class.ctor {
                    self.invoke(ctor, Some(o), vals)?;
                }
                Value::Obj(o)
            }
        })
    }

    fn invoke(&mut self, m: &MethodDecl, this: Option<usize>, args: Vec<Value>) -> R<Option<Value>> {
        let mut f = Frame {
            scopes: vec![m.params.iter().zip(args).map(|(p, v)| (p.name.clone(), Some(v))).collect()],
            this,
        };
        Ok(match self.stmt(&m.body, &mut f)? {
            Flow::Return(v) => v,
            _ => None,
        })
    }
}

/// Number of header lines that carry no exploration content.
pub const FIXED_HEADER: usize = 4;

fn tokens(line: &str) -> Vec<(usize, usize)> {
    let b = line.as_bytes();
    let word = |c: u8| c.is_ascii_alphanumeric() || c == b'_';
    let mut out = Vec::new();
    let mut i = 0;
    while i < b.len() {
        if b[i] == b' ' {
            i += 1;
        } else if word(b[i]) {
            let s = i;
            while i < b.len() && word(b[i]) {
                i += 1;
            }
            out.push((s, i));
        } else {
            out.push((i, i + 1));
            i += 1;
        }
    }
    out
}

/// A random single-line deletion or single-token replacement/deletion in
/// the certificate body. Never returns the input unchanged.
pub fn mutate(cert: &str, rng: &mut impl rand::Rng) -> String {
    use rand::seq::SliceRandom;
    let lines: Vec<&str> = cert.lines().collect();
    let body = FIXED_HEADER..lines.len();
    assert!(!body.is_empty());
    let vocab: Vec<&str> = lines[body.clone()]
        .iter()
        .flat_map(|l| tokens(l).into_iter().map(move |(s, e)| &l[s..e]))
        .collect();
    loop {
        let at = rng.gen_range(body.clone());
        let mut out: Vec<String> = lines.iter().map(|l| l.to_string()).collect();
        if rng.gen_bool(0.2) {
            out.remove(at);
        } else {
            let toks = tokens(lines[at]);
            let &(s, e) = toks.choose(rng).unwrap();
            let repl = match rng.gen_range(0..5) {
                0 => "",
                1 => ["Low", "High"].choose(rng).unwrap(),
                2 => ["0", "1", "2", "3", "7", "9"].choose(rng).unwrap(),
                _ => vocab.choose(rng).unwrap(),
            };
            out[at] = format!("{}{repl}{}", &lines[at][..s], &lines[at][e..]);
        }
        let text = out.join("\n") + "\n";
        if text != cert {
            return text;
        }
    }
}
