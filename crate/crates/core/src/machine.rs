//! The continuation machine shared by the concrete, extended and abstract
//! semantics.
//!
//! A configuration is a stack of pending work items (top at the end), the
//! local environment, a store of labeled cells, a heap of field records, a
//! loop stack and a call-frame stack. The value domain `V` decides what a
//! value is (a real Java value, or a label-only shape) and whether a boolean
//! has a known truth value. Labels are carried everywhere; in unlabeled mode
//! (the standard semantics) every label stays `Low` and no context-restore
//! items are pushed.

use crate::labels::{Label, StoredLabel};
use crate::syntax::{
    contains_abrupt, BinOp, CallTarget, ExprKind, Expr, NIPolicy, NodeId, Program, Res, Stmt,
    StmtKind, Type, UnOp,
};
use num_bigint::BigInt;
use std::collections::{BTreeMap, HashMap};
use std::fmt::Debug;
use std::hash::Hash;

pub type Loc = usize;
pub type ObjId = usize;
/// Interned local variable name.
pub type Sym = u32;
pub type Locals = BTreeMap<Sym, Loc>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum Fault {
    #[error("division by zero")]
    DivisionByZero,
    #[error("null dereference")]
    NullDereference,
    #[error("read of an uninitialized variable")]
    Uninitialized,
    #[error("step limit of {0} exceeded")]
    StepLimit(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Truth {
    True,
    False,
    /// Unknown in an abstract domain: both branches are possible.
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ref {
    Null,
    Obj(ObjId),
    Scalar,
}

/// A value domain for the machine.
pub trait Domain: Clone + Eq + Ord + Hash + Debug + Send + Sync + 'static {
    /// Whether `println` appends to the configuration's output.
    const RECORD_OUTPUT: bool;
    fn int(n: &BigInt) -> Self;
    fn bool(b: bool) -> Self;
    fn null() -> Self;
    fn obj(id: ObjId) -> Self;
    fn reference(&self) -> Ref;
    fn unop(op: UnOp, a: &Self) -> Self;
    fn binop(op: BinOp, a: &Self, b: &Self) -> Result<Self, Fault>;
    fn truth(&self) -> Truth;

    fn default_for(ty: &Type) -> Self {
        match ty {
            Type::Int => Self::int(&BigInt::from(0)),
            Type::Bool => Self::bool(false),
            _ => Self::null(),
        }
    }

    fn map_obj(&self, f: &dyn Fn(ObjId) -> ObjId) -> Self {
        match self.reference() {
            Ref::Obj(id) => Self::obj(f(id)),
            _ => self.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LVal<V> {
    pub v: V,
    pub l: Label,
}

impl<V> LVal<V> {
    pub fn new(v: V, l: Label) -> LVal<V> {
        LVal { v, l }
    }
}

/// Steps of the machine. Names form the fixed rule catalog used in traces
/// and certificates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Rule {
    Const,
    VarRead,
    This,
    FieldEval,
    FieldRead,
    BinopLeft,
    BinopRight,
    BinopApply,
    Unop,
    UnopApply,
    AndRhs,
    AndShort,
    OrRhs,
    OrShort,
    ScJoin,
    CallEval,
    CallArg,
    CallEnter,
    NewEnter,
    Return,
    MethodExit,
    DeclEval,
    Decl,
    AssignEval,
    AssignTarget,
    Assign,
    If,
    IfThen,
    IfElse,
    While,
    LoopTest,
    LoopEnter,
    LoopExit,
    PopLstack,
    Break,
    Continue,
    Restore,
    Block,
    EnvRestore,
    PrintEval,
    Println,
    ExprStmt,
    Discard,
    Skip,
}

impl Rule {
    pub const ALL: [Rule; 44] = [
        Rule::Const,
        Rule::VarRead,
        Rule::This,
        Rule::FieldEval,
        Rule::FieldRead,
        Rule::BinopLeft,
        Rule::BinopRight,
        Rule::BinopApply,
        Rule::Unop,
        Rule::UnopApply,
        Rule::AndRhs,
        Rule::AndShort,
        Rule::OrRhs,
        Rule::OrShort,
        Rule::ScJoin,
        Rule::CallEval,
        Rule::CallArg,
        Rule::CallEnter,
        Rule::NewEnter,
        Rule::Return,
        Rule::MethodExit,
        Rule::DeclEval,
        Rule::Decl,
        Rule::AssignEval,
        Rule::AssignTarget,
        Rule::Assign,
        Rule::If,
        Rule::IfThen,
        Rule::IfElse,
        Rule::While,
        Rule::LoopTest,
        Rule::LoopEnter,
        Rule::LoopExit,
        Rule::PopLstack,
        Rule::Break,
        Rule::Continue,
        Rule::Restore,
        Rule::Block,
        Rule::EnvRestore,
        Rule::PrintEval,
        Rule::Println,
        Rule::ExprStmt,
        Rule::Discard,
        Rule::Skip,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Rule::Const => "const",
            Rule::VarRead => "var-read",
            Rule::This => "this",
            Rule::FieldEval => "field-eval",
            Rule::FieldRead => "field-read",
            Rule::BinopLeft => "binop-left",
            Rule::BinopRight => "binop-right",
            Rule::BinopApply => "binop-apply",
            Rule::Unop => "unop",
            Rule::UnopApply => "unop-apply",
            Rule::AndRhs => "and-rhs",
            Rule::AndShort => "and-short",
            Rule::OrRhs => "or-rhs",
            Rule::OrShort => "or-short",
            Rule::ScJoin => "sc-join",
            Rule::CallEval => "call-eval",
            Rule::CallArg => "call-arg",
            Rule::CallEnter => "call-enter",
            Rule::NewEnter => "new-enter",
            Rule::Return => "return",
            Rule::MethodExit => "method-exit",
            Rule::DeclEval => "decl-eval",
            Rule::Decl => "decl",
            Rule::AssignEval => "assign-eval",
            Rule::AssignTarget => "assign-target",
            Rule::Assign => "assign",
            Rule::If => "if",
            Rule::IfThen => "if-then",
            Rule::IfElse => "if-else",
            Rule::While => "while",
            Rule::LoopTest => "loop-test",
            Rule::LoopEnter => "loop-enter",
            Rule::LoopExit => "loop-exit",
            Rule::PopLstack => "pop-lstack",
            Rule::Break => "break",
            Rule::Continue => "continue",
            Rule::Restore => "restore",
            Rule::Block => "block",
            Rule::EnvRestore => "env-restore",
            Rule::PrintEval => "print-eval",
            Rule::Println => "println",
            Rule::ExprStmt => "expr-stmt",
            Rule::Discard => "discard",
            Rule::Skip => "skip",
        }
    }

    pub fn from_name(name: &str) -> Option<Rule> {
        Rule::ALL.into_iter().find(|r| r.name() == name)
    }

    /// Rules that choose between two continuations on a boolean. In the
    /// abstract semantics these are the only nondeterministic steps.
    pub fn is_branching(self) -> bool {
        matches!(
            self,
            Rule::IfThen
                | Rule::IfElse
                | Rule::LoopEnter
                | Rule::LoopExit
                | Rule::AndRhs
                | Rule::AndShort
                | Rule::OrRhs
                | Rule::OrShort
        )
    }
}

/// A pending unit of work.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Item<V> {
    /// Evaluate an expression.
    Eval(NodeId),
    /// Execute a statement.
    Exec(NodeId),
    /// A computed value, consumed by the item below it.
    Val(LVal<V>),
    BinRight(NodeId),
    BinApply(NodeId, LVal<V>),
    UnApply(NodeId),
    /// Short-circuit operator waiting for its left operand.
    ShortCircuit(NodeId),
    /// Restores the context label after a short-circuit right operand and
    /// joins the left operand's label into the result.
    ScJoin(Label, Label),
    FieldRead(NodeId),
    /// Collected receiver and argument values of a call or `new`.
    Args(NodeId, Vec<LVal<V>>),
    Ret,
    MethodEnd,
    CtorEnd(ObjId),
    DeclInit(NodeId),
    AssignTo(NodeId),
    AssignTarget(NodeId),
    AssignField(NodeId, LVal<V>),
    IfBranch(NodeId),
    Loop(NodeId),
    LoopBranch(NodeId),
    PopLoop,
    Restore(Label),
    EnvRestore(Locals),
    Print,
    Discard,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Obj {
    pub class: usize,
    pub fields: Vec<Loc>,
}

/// An active loop: the `while` statement, the continuation depth below the
/// loop's own items, and the environment at loop entry.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LoopEntry {
    pub stmt: NodeId,
    pub depth: usize,
    pub locals: Locals,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Frame<V> {
    pub k: Vec<Item<V>>,
    pub locals: Locals,
    pub this: Option<ObjId>,
    pub lstack: Vec<LoopEntry>,
    pub cl: Label,
}

pub type Cell<V> = Option<(V, StoredLabel)>;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Config<V> {
    pub k: Vec<Item<V>>,
    pub locals: Locals,
    pub this: Option<ObjId>,
    pub store: Vec<Cell<V>>,
    pub heap: Vec<Obj>,
    pub lstack: Vec<LoopEntry>,
    pub fstack: Vec<Frame<V>>,
    pub cl: Label,
    pub labeled: bool,
    pub out: Vec<LVal<V>>,
}

#[derive(Clone, Copy)]
enum Node<'p> {
    None,
    Expr(&'p Expr),
    Stmt(&'p Stmt),
}

/// Program-derived tables used by the step function.
pub struct Code<'p> {
    pub program: &'p Program,
    pub policy: NIPolicy,
    nodes: Vec<Node<'p>>,
    abrupt: Vec<bool>,
    syms: HashMap<&'p str, Sym>,
    names: Vec<&'p str>,
}

impl<'p> Code<'p> {
    pub fn new(program: &'p Program, policy: &NIPolicy) -> Code<'p> {
        let mut code = Code {
            program,
            policy: policy.clone(),
            nodes: vec![Node::None; program.node_count()],
            abrupt: vec![false; program.node_count()],
            syms: HashMap::new(),
            names: Vec::new(),
        };
        for c in &program.classes {
            for f in &c.fields {
                if let Some(e) = &f.init {
                    code.add_expr(e);
                }
            }
            if let Some(ctor) = &c.ctor {
                code.add_params(&ctor.params);
                code.add_stmt(&ctor.body);
            }
            for m in &c.methods {
                code.add_params(&m.params);
                code.add_stmt(&m.body);
            }
            for s in c.static_init.iter().chain(&c.instance_init) {
                code.add_stmt(s);
            }
        }
        code
    }

    fn intern(&mut self, name: &'p str) -> Sym {
        if let Some(&s) = self.syms.get(name) {
            return s;
        }
        let s = self.names.len() as Sym;
        self.names.push(name);
        self.syms.insert(name, s);
        s
    }

    fn add_params(&mut self, params: &'p [crate::syntax::Param]) {
        for p in params {
            self.intern(&p.name);
        }
    }

    fn add_expr(&mut self, e: &'p Expr) {
        self.nodes[e.id as usize] = Node::Expr(e);
        match &e.kind {
            ExprKind::Name(n) => {
                self.intern(n);
            }
            ExprKind::Field(inner, _) | ExprKind::Unary(_, inner) => self.add_expr(inner),
            ExprKind::Binary(_, l, r) => {
                self.add_expr(l);
                self.add_expr(r);
            }
            ExprKind::Call { recv, args, .. } => {
                if let Some(r) = recv {
                    self.add_expr(r);
                }
                args.iter().for_each(|a| self.add_expr(a));
            }
            ExprKind::New { args, .. } => args.iter().for_each(|a| self.add_expr(a)),
            _ => {}
        }
    }

    fn add_stmt(&mut self, s: &'p Stmt) {
        self.nodes[s.id as usize] = Node::Stmt(s);
        match &s.kind {
            StmtKind::Decl { name, init, .. } => {
                self.intern(name);
                if let Some(e) = init {
                    self.add_expr(e);
                }
            }
            StmtKind::Assign { target, value } => {
                self.add_expr(target);
                self.add_expr(value);
            }
            StmtKind::If {
                cond,
                then_branch,
                else_branch,
            } => {
                self.abrupt[s.id as usize] = contains_abrupt(then_branch)
                    || else_branch.as_deref().is_some_and(contains_abrupt);
                self.add_expr(cond);
                self.add_stmt(then_branch);
                if let Some(e) = else_branch {
                    self.add_stmt(e);
                }
            }
            StmtKind::While { cond, body } => {
                self.add_expr(cond);
                self.add_stmt(body);
            }
            StmtKind::Return(Some(e)) | StmtKind::Expr(e) | StmtKind::Print(e) => self.add_expr(e),
            StmtKind::Block(stmts) => stmts.iter().for_each(|s| self.add_stmt(s)),
            _ => {}
        }
    }

    pub fn expr(&self, id: NodeId) -> &'p Expr {
        match self.nodes[id as usize] {
            Node::Expr(e) => e,
            _ => panic!("node {id} is not an expression"),
        }
    }

    pub fn stmt(&self, id: NodeId) -> &'p Stmt {
        match self.nodes[id as usize] {
            Node::Stmt(s) => s,
            _ => panic!("node {id} is not a statement"),
        }
    }

    pub fn sym(&self, name: &str) -> Sym {
        self.syms[name]
    }

    pub fn sym_name(&self, s: Sym) -> &'p str {
        self.names[s as usize]
    }

    /// Whether the `if` statement `id` has a branch that can leave it abruptly.
    pub fn if_is_abrupt(&self, id: NodeId) -> bool {
        self.abrupt[id as usize]
    }

    fn field_label(&self, class: usize, slot: usize) -> Label {
        self.policy.fields[class][slot]
    }
}

/// Number of continuation items a loop keeps above its recorded depth.
fn loop_frames(labeled: bool) -> usize {
    if labeled {
        3
    } else {
        2
    }
}

impl<V: Domain> Config<V> {
    /// The initial configuration: statics allocated with default values,
    /// `main`'s parameters bound to the inputs, class initializers pending
    /// before the body of `main`.
    pub fn initial(code: &Code<'_>, inputs: &[V], labeled: bool) -> Config<V> {
        let program = code.program;
        let label = |l: Label| if labeled { l } else { Label::Low };
        let mut store: Vec<Cell<V>> = program
            .statics
            .iter()
            .enumerate()
            .map(|(i, s)| Some((V::default_for(&s.ty), label(code.policy.statics[i]).into())))
            .collect();
        let mut locals = Locals::new();
        for (i, p) in program.main_method().params.iter().enumerate() {
            locals.insert(code.sym(&p.name), store.len());
            store.push(Some((inputs[i].clone(), label(code.policy.inputs[i]).into())));
        }
        let mut k = vec![Item::Exec(program.main_method().body.id)];
        for c in program.classes.iter().rev() {
            for s in c.static_init.iter().rev() {
                k.push(Item::Exec(s.id));
            }
        }
        Config {
            k,
            locals,
            this: None,
            store,
            heap: Vec::new(),
            lstack: Vec::new(),
            fstack: Vec::new(),
            cl: Label::Low,
            labeled,
            out: Vec::new(),
        }
    }

    pub fn is_final(&self) -> bool {
        self.k.is_empty()
    }

    /// At a branch point (a boolean value on top of a branching item),
    /// the truth of that value.
    pub fn branch_truth(&self) -> Option<Truth> {
        let n = self.k.len();
        if n < 2 {
            return None;
        }
        match (&self.k[n - 2], &self.k[n - 1]) {
            (Item::IfBranch(_) | Item::LoopBranch(_) | Item::ShortCircuit(_), Item::Val(v)) => {
                Some(v.v.truth())
            }
            _ => None,
        }
    }

    fn cell(&self, loc: Loc) -> Result<&(V, StoredLabel), Fault> {
        self.store[loc].as_ref().ok_or(Fault::Uninitialized)
    }

    fn write(&mut self, loc: Loc, v: V, l: Label) {
        let sl = match &self.store[loc] {
            Some((_, prev)) => prev.update(l),
            None => l.into(),
        };
        self.store[loc] = Some((v, sl));
    }

    fn alloc(&mut self, cell: Cell<V>) -> Loc {
        self.store.push(cell);
        self.store.len() - 1
    }

    fn object(&self, v: &LVal<V>) -> Result<ObjId, Fault> {
        match v.v.reference() {
            Ref::Obj(id) => Ok(id),
            Ref::Null => Err(Fault::NullDereference),
            Ref::Scalar => panic!("scalar used as an object reference"),
        }
    }

    /// Location denoted by a resolved variable name or static field access.
    fn var_loc(&self, code: &Code<'_>, e: &Expr) -> Loc {
        match code.program.res(e.id) {
            Res::Local => {
                let ExprKind::Name(n) = &e.kind else { unreachable!() };
                self.locals[&code.sym(n)]
            }
            Res::Static(s) => *s,
            Res::ThisField(slot) => self.heap[self.this.expect("this")].fields[*slot],
            r => panic!("not a variable: {r:?}"),
        }
    }

    fn push_val(&mut self, v: V, l: Label) {
        self.k.push(Item::Val(LVal::new(v, l)));
    }

    fn decide(truth: Truth, choice: Option<bool>) -> bool {
        match truth {
            Truth::True => true,
            Truth::False => false,
            Truth::Both => choice.expect("branch choice required for an unknown guard"),
        }
    }

    fn exit_method(&mut self, value: Option<LVal<V>>) {
        match self.fstack.pop() {
            Some(f) => {
                self.k = f.k;
                self.locals = f.locals;
                self.this = f.this;
                self.lstack = f.lstack;
                self.cl = f.cl;
                if let Some(v) = value {
                    self.k.push(Item::Val(v));
                }
            }
            None => {
                // returning from `main` ends the program
                self.k.clear();
                self.lstack.clear();
            }
        }
    }

    fn enter(&mut self, k: Vec<Item<V>>, locals: Locals, this: Option<ObjId>, cl: Label) {
        let frame = Frame {
            k: std::mem::replace(&mut self.k, k),
            locals: std::mem::replace(&mut self.locals, locals),
            this: std::mem::replace(&mut self.this, this),
            lstack: std::mem::take(&mut self.lstack),
            cl: self.cl,
        };
        self.fstack.push(frame);
        self.cl = cl;
    }

    /// Performs one step. `choice` selects the branch when the guard's truth
    /// is unknown and is ignored otherwise.
    pub fn step(&mut self, code: &Code<'_>, choice: Option<bool>) -> Result<Rule, Fault> {
        let top = self.k.pop().expect("step on a final configuration");
        match top {
            Item::Eval(id) => self.eval(code, id),
            Item::Exec(id) => self.exec(code, id),
            Item::Val(v) => self.consume(code, v, choice),
            Item::Args(id, vals) => self.invoke(code, id, vals),
            Item::MethodEnd => {
                self.exit_method(None);
                Ok(Rule::MethodExit)
            }
            Item::CtorEnd(obj) => {
                let cl = self.fstack.last().map(|f| f.cl).unwrap_or(Label::Low);
                self.exit_method(Some(LVal::new(V::obj(obj), cl)));
                Ok(Rule::MethodExit)
            }
            Item::Loop(id) => {
                let StmtKind::While { cond, .. } = &code.stmt(id).kind else { unreachable!() };
                self.k.push(Item::LoopBranch(id));
                self.k.push(Item::Eval(cond.id));
                Ok(Rule::LoopTest)
            }
            Item::PopLoop => {
                self.lstack.pop();
                Ok(Rule::PopLstack)
            }
            Item::Restore(l) => {
                self.cl = l;
                Ok(Rule::Restore)
            }
            Item::EnvRestore(l) => {
                self.locals = l;
                Ok(Rule::EnvRestore)
            }
            Item::Discard => Ok(Rule::Discard),
            other => panic!("item {other:?} cannot be on top of the continuation"),
        }
    }

    fn eval(&mut self, code: &Code<'_>, id: NodeId) -> Result<Rule, Fault> {
        let e = code.expr(id);
        let cl = self.cl;
        match &e.kind {
            ExprKind::Int(n) => {
                self.push_val(V::int(n), cl);
                Ok(Rule::Const)
            }
            ExprKind::Bool(b) => {
                self.push_val(V::bool(*b), cl);
                Ok(Rule::Const)
            }
            ExprKind::Null => {
                self.push_val(V::null(), cl);
                Ok(Rule::Const)
            }
            ExprKind::This => {
                self.push_val(V::obj(self.this.expect("this")), cl);
                Ok(Rule::This)
            }
            ExprKind::Name(_) => {
                let loc = self.var_loc(code, e);
                let (v, sl) = self.cell(loc)?.clone();
                self.push_val(v, sl.join(cl));
                Ok(Rule::VarRead)
            }
            ExprKind::Field(inner, _) => match code.program.res(id) {
                Res::Static(s) => {
                    let (v, sl) = self.cell(*s)?.clone();
                    self.push_val(v, sl.join(cl));
                    Ok(Rule::VarRead)
                }
                _ => {
                    self.k.push(Item::FieldRead(id));
                    self.k.push(Item::Eval(inner.id));
                    Ok(Rule::FieldEval)
                }
            },
            ExprKind::Unary(_, inner) => {
                self.k.push(Item::UnApply(id));
                self.k.push(Item::Eval(inner.id));
                Ok(Rule::Unop)
            }
            ExprKind::Binary(op, l, _) => {
                self.k.push(if op.is_short_circuit() {
                    Item::ShortCircuit(id)
                } else {
                    Item::BinRight(id)
                });
                self.k.push(Item::Eval(l.id));
                Ok(Rule::BinopLeft)
            }
            ExprKind::Call { recv, args, .. } => {
                self.k.push(Item::Args(id, Vec::new()));
                let first = match (code.program.res(id), recv) {
                    (Res::Call(CallTarget::Instance(_)), Some(r)) => Some(r.id),
                    _ => args.first().map(|a| a.id),
                };
                if let Some(f) = first {
                    self.k.push(Item::Eval(f));
                }
                Ok(Rule::CallEval)
            }
            ExprKind::New { args, .. } => {
                self.k.push(Item::Args(id, Vec::new()));
                if let Some(a) = args.first() {
                    self.k.push(Item::Eval(a.id));
                }
                Ok(Rule::CallEval)
            }
        }
    }

    /// Receiver (for explicit instance calls) followed by arguments.
    fn operands<'p>(code: &Code<'p>, id: NodeId) -> Vec<&'p Expr> {
        let e = code.expr(id);
        match &e.kind {
            ExprKind::Call { recv, args, .. } => {
                let mut v = Vec::new();
                if let (Res::Call(CallTarget::Instance(_)), Some(r)) = (code.program.res(id), recv) {
                    v.push(&**r);
                }
                v.extend(args.iter());
                v
            }
            ExprKind::New { args, .. } => args.iter().collect(),
            _ => unreachable!(),
        }
    }

    fn invoke(&mut self, code: &Code<'_>, id: NodeId, vals: Vec<LVal<V>>) -> Result<Rule, Fault> {
        let program = code.program;
        let e = code.expr(id);
        match (&e.kind, program.res(id)) {
            (ExprKind::Call { recv, .. }, Res::Call(target)) => {
                let (mref, this, recv_label, args) = match *target {
                    CallTarget::Static(m) => (m, None, Label::Low, &vals[..]),
                    CallTarget::Instance(m) if recv.is_some() => {
                        let obj = self.object(&vals[0])?;
                        (m, Some(obj), vals[0].l, &vals[1..])
                    }
                    CallTarget::Instance(m) => (m, self.this, Label::Low, &vals[..]),
                };
                let method = program.method(mref);
                let mut locals = Locals::new();
                for (p, a) in method.params.iter().zip(args) {
                    let loc = self.alloc(Some((a.v.clone(), a.l.into())));
                    locals.insert(code.sym(&p.name), loc);
                }
                let cl = self.cl.join(recv_label);
                self.enter(vec![Item::MethodEnd, Item::Exec(method.body.id)], locals, this, cl);
                Ok(Rule::CallEnter)
            }
            (ExprKind::New { .. }, Res::New(ci)) => {
                let class = &program.classes[*ci];
                let mut fields = Vec::new();
                for (slot, &fi) in class.instance_fields.iter().enumerate() {
                    let l = if self.labeled { code.field_label(*ci, slot) } else { Label::Low };
                    fields.push(self.alloc(Some((V::default_for(&class.fields[fi].ty), l.into()))));
                }
                self.heap.push(Obj { class: *ci, fields });
                let obj = self.heap.len() - 1;
                let mut locals = Locals::new();
                let mut k = vec![Item::CtorEnd(obj)];
                if let Some(ctor) = &class.ctor {
                    for (p, a) in ctor.params.iter().zip(&vals) {
                        let loc = self.alloc(Some((a.v.clone(), a.l.into())));
                        locals.insert(code.sym(&p.name), loc);
                    }
                    k.push(Item::Exec(ctor.body.id));
                }
                for s in class.instance_init.iter().rev() {
                    k.push(Item::Exec(s.id));
                }
                let cl = self.cl;
                self.enter(k, locals, Some(obj), cl);
                Ok(Rule::NewEnter)
            }
            _ => unreachable!(),
        }
    }

    /// A value on top: hand it to the item below.
    fn consume(&mut self, code: &Code<'_>, v: LVal<V>, choice: Option<bool>) -> Result<Rule, Fault> {
        let below = self.k.pop().expect("value with no consumer");
        match below {
            Item::BinRight(id) => {
                let ExprKind::Binary(_, _, r) = &code.expr(id).kind else { unreachable!() };
                self.k.push(Item::BinApply(id, v));
                self.k.push(Item::Eval(r.id));
                Ok(Rule::BinopRight)
            }
            Item::BinApply(id, a) => {
                let ExprKind::Binary(op, ..) = &code.expr(id).kind else { unreachable!() };
                let r = V::binop(*op, &a.v, &v.v)?;
                self.push_val(r, a.l.join(v.l));
                Ok(Rule::BinopApply)
            }
            Item::UnApply(id) => {
                let ExprKind::Unary(op, _) = &code.expr(id).kind else { unreachable!() };
                self.push_val(V::unop(*op, &v.v), v.l);
                Ok(Rule::UnopApply)
            }
            Item::ShortCircuit(id) => {
                let ExprKind::Binary(op, _, r) = &code.expr(id).kind else { unreachable!() };
                let b = Self::decide(v.v.truth(), choice);
                let is_and = *op == BinOp::And;
                if b == is_and {
                    self.k.push(Item::ScJoin(self.cl, v.l));
                    self.cl = self.cl.join(v.l);
                    self.k.push(Item::Eval(r.id));
                    Ok(if is_and { Rule::AndRhs } else { Rule::OrRhs })
                } else {
                    self.push_val(V::bool(b), v.l);
                    Ok(if is_and { Rule::AndShort } else { Rule::OrShort })
                }
            }
            Item::ScJoin(cl, l) => {
                self.cl = cl;
                self.push_val(v.v, v.l.join(l));
                Ok(Rule::ScJoin)
            }
            Item::FieldRead(id) => {
                let obj = self.object(&v)?;
                let Res::ObjField(slot) = code.program.res(id) else { unreachable!() };
                let loc = self.heap[obj].fields[*slot];
                let (val, sl) = self.cell(loc)?.clone();
                self.push_val(val, sl.join(self.cl).join(v.l));
                Ok(Rule::FieldRead)
            }
            Item::Args(id, mut vals) => {
                vals.push(v);
                let ops = Self::operands(code, id);
                let next = ops.get(vals.len()).map(|e| e.id);
                self.k.push(Item::Args(id, vals));
                if let Some(n) = next {
                    self.k.push(Item::Eval(n));
                }
                Ok(Rule::CallArg)
            }
            Item::Ret => {
                self.exit_method(Some(v));
                Ok(Rule::MethodExit)
            }
            Item::DeclInit(id) => {
                let StmtKind::Decl { name, .. } = &code.stmt(id).kind else { unreachable!() };
                let loc = self.alloc(Some((v.v, v.l.into())));
                self.locals.insert(code.sym(name), loc);
                Ok(Rule::Decl)
            }
            Item::AssignTo(id) => {
                let StmtKind::Assign { target, .. } = &code.stmt(id).kind else { unreachable!() };
                let loc = self.var_loc_or_static(code, target);
                self.write(loc, v.v, v.l);
                Ok(Rule::Assign)
            }
            Item::AssignTarget(id) => {
                let StmtKind::Assign { value, .. } = &code.stmt(id).kind else { unreachable!() };
                self.object(&v)?;
                self.k.push(Item::AssignField(id, v));
                self.k.push(Item::Eval(value.id));
                Ok(Rule::AssignTarget)
            }
            Item::AssignField(id, o) => {
                let StmtKind::Assign { target, .. } = &code.stmt(id).kind else { unreachable!() };
                let obj = self.object(&o)?;
                let Res::ObjField(slot) = code.program.res(target.id) else { unreachable!() };
                let loc = self.heap[obj].fields[*slot];
                self.write(loc, v.v, v.l.join(o.l));
                Ok(Rule::Assign)
            }
            Item::IfBranch(id) => {
                let StmtKind::If {
                    then_branch,
                    else_branch,
                    ..
                } = &code.stmt(id).kind
                else {
                    unreachable!()
                };
                self.cl = self.cl.join(v.l);
                if Self::decide(v.v.truth(), choice) {
                    self.k.push(Item::Exec(then_branch.id));
                    Ok(Rule::IfThen)
                } else {
                    if let Some(e) = else_branch {
                        self.k.push(Item::Exec(e.id));
                    }
                    Ok(Rule::IfElse)
                }
            }
            Item::LoopBranch(id) => {
                let StmtKind::While { body, .. } = &code.stmt(id).kind else { unreachable!() };
                self.cl = self.cl.join(v.l);
                if Self::decide(v.v.truth(), choice) {
                    self.k.push(Item::Loop(id));
                    self.k.push(Item::Exec(body.id));
                    Ok(Rule::LoopEnter)
                } else {
                    Ok(Rule::LoopExit)
                }
            }
            Item::Print => {
                if V::RECORD_OUTPUT {
                    self.out.push(v);
                }
                Ok(Rule::Println)
            }
            Item::Discard => Ok(Rule::Discard),
            other => panic!("item {other:?} does not consume a value"),
        }
    }

    fn var_loc_or_static(&self, code: &Code<'_>, target: &Expr) -> Loc {
        match code.program.res(target.id) {
            Res::Static(s) => *s,
            _ => self.var_loc(code, target),
        }
    }

    fn exec(&mut self, code: &Code<'_>, id: NodeId) -> Result<Rule, Fault> {
        let s = code.stmt(id);
        match &s.kind {
            StmtKind::Decl { name, init, .. } => match init {
                Some(e) => {
                    self.k.push(Item::DeclInit(id));
                    self.k.push(Item::Eval(e.id));
                    Ok(Rule::DeclEval)
                }
                None => {
                    let loc = self.alloc(None);
                    self.locals.insert(code.sym(name), loc);
                    Ok(Rule::Decl)
                }
            },
            StmtKind::Assign { target, value } => {
                match (&target.kind, code.program.res(target.id)) {
                    (ExprKind::Field(obj, _), Res::ObjField(_)) => {
                        self.k.push(Item::AssignTarget(id));
                        self.k.push(Item::Eval(obj.id));
                    }
                    _ => {
                        self.k.push(Item::AssignTo(id));
                        self.k.push(Item::Eval(value.id));
                    }
                }
                Ok(Rule::AssignEval)
            }
            StmtKind::If { cond, .. } => {
                if self.labeled && !code.if_is_abrupt(id) {
                    self.k.push(Item::Restore(self.cl));
                }
                self.k.push(Item::IfBranch(id));
                self.k.push(Item::Eval(cond.id));
                Ok(Rule::If)
            }
            StmtKind::While { .. } => {
                self.lstack.push(LoopEntry {
                    stmt: id,
                    depth: self.k.len(),
                    locals: self.locals.clone(),
                });
                self.k.push(Item::PopLoop);
                if self.labeled {
                    self.k.push(Item::Restore(self.cl));
                }
                self.k.push(Item::Loop(id));
                Ok(Rule::While)
            }
            StmtKind::Break => {
                let e = self.lstack.pop().expect("break outside of a loop");
                self.k.truncate(e.depth);
                self.locals = e.locals;
                Ok(Rule::Break)
            }
            StmtKind::Continue => {
                let e = self.lstack.last().expect("continue outside of a loop");
                let depth = e.depth + loop_frames(self.labeled);
                self.locals = e.locals.clone();
                self.k.truncate(depth);
                Ok(Rule::Continue)
            }
            StmtKind::Return(value) => match value {
                Some(e) => {
                    self.k.push(Item::Ret);
                    self.k.push(Item::Eval(e.id));
                    Ok(Rule::Return)
                }
                None => {
                    self.exit_method(None);
                    Ok(Rule::MethodExit)
                }
            },
            StmtKind::Expr(e) => {
                self.k.push(Item::Discard);
                self.k.push(Item::Eval(e.id));
                Ok(Rule::ExprStmt)
            }
            StmtKind::Print(e) => {
                self.k.push(Item::Print);
                self.k.push(Item::Eval(e.id));
                Ok(Rule::PrintEval)
            }
            StmtKind::Block(stmts) => {
                self.k.push(Item::EnvRestore(self.locals.clone()));
                for st in stmts.iter().rev() {
                    self.k.push(Item::Exec(st.id));
                }
                Ok(Rule::Block)
            }
            StmtKind::Empty => Ok(Rule::Skip),
        }
    }

    /// Follows an observable path from its static root. `None` if a
    /// reference on the way is null or a cell is uninitialized.
    pub fn path_cell(&self, root: Loc, fields: &[usize]) -> Option<&(V, StoredLabel)> {
        let mut cell = self.store[root].as_ref()?;
        for &slot in fields {
            let Ref::Obj(o) = cell.0.reference() else { return None };
            cell = self.store[self.heap[o].fields[slot]].as_ref()?;
        }
        Some(cell)
    }

    /// Maps values into another domain, keeping labels and structure.
    pub fn map_values<W: Domain>(&self, f: &dyn Fn(&V) -> W) -> Config<W> {
        let lv = |v: &LVal<V>| LVal::new(f(&v.v), v.l);
        let item = |i: &Item<V>| map_item(i, &lv);
        Config {
            k: self.k.iter().map(item).collect(),
            locals: self.locals.clone(),
            this: self.this,
            store: self
                .store
                .iter()
                .map(|c| c.as_ref().map(|(v, sl)| (f(v), *sl)))
                .collect(),
            heap: self.heap.clone(),
            lstack: self.lstack.clone(),
            fstack: self
                .fstack
                .iter()
                .map(|fr| Frame {
                    k: fr.k.iter().map(item).collect(),
                    locals: fr.locals.clone(),
                    this: fr.this,
                    lstack: fr.lstack.clone(),
                    cl: fr.cl,
                })
                .collect(),
            cl: self.cl,
            labeled: self.labeled,
            out: if W::RECORD_OUTPUT {
                self.out.iter().map(lv).collect()
            } else {
                Vec::new()
            },
        }
    }
}

pub(crate) fn map_item<V, W>(i: &Item<V>, lv: &dyn Fn(&LVal<V>) -> LVal<W>) -> Item<W> {
    match i {
        Item::Eval(n) => Item::Eval(*n),
        Item::Exec(n) => Item::Exec(*n),
        Item::Val(v) => Item::Val(lv(v)),
        Item::BinRight(n) => Item::BinRight(*n),
        Item::BinApply(n, v) => Item::BinApply(*n, lv(v)),
        Item::UnApply(n) => Item::UnApply(*n),
        Item::ShortCircuit(n) => Item::ShortCircuit(*n),
        Item::ScJoin(a, b) => Item::ScJoin(*a, *b),
        Item::FieldRead(n) => Item::FieldRead(*n),
        Item::Args(n, vs) => Item::Args(*n, vs.iter().map(lv).collect()),
        Item::Ret => Item::Ret,
        Item::MethodEnd => Item::MethodEnd,
        Item::CtorEnd(o) => Item::CtorEnd(*o),
        Item::DeclInit(n) => Item::DeclInit(*n),
        Item::AssignTo(n) => Item::AssignTo(*n),
        Item::AssignTarget(n) => Item::AssignTarget(*n),
        Item::AssignField(n, v) => Item::AssignField(*n, lv(v)),
        Item::IfBranch(n) => Item::IfBranch(*n),
        Item::Loop(n) => Item::Loop(*n),
        Item::LoopBranch(n) => Item::LoopBranch(*n),
        Item::PopLoop => Item::PopLoop,
        Item::Restore(l) => Item::Restore(*l),
        Item::EnvRestore(l) => Item::EnvRestore(l.clone()),
        Item::Print => Item::Print,
        Item::Discard => Item::Discard,
    }
}

/// Step counter shared by the runners, overridable via `NICERT_STEP_LIMIT`.
pub const DEFAULT_STEP_LIMIT: u64 = 1_000_000;

pub fn step_limit_from_env() -> u64 {
    std::env::var("NICERT_STEP_LIMIT")
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or(DEFAULT_STEP_LIMIT)
}
