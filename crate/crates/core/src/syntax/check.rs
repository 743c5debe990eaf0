//! Name resolution, type checking and the structural rules of the language
//! (loops, entry point, recursion ban).

use super::ast::*;
use super::parser::Parsed;
use super::{ParseError, Program};
use std::collections::{BTreeMap, BTreeSet};

/// What a node refers to, filled in by the checker.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Res {
    None,
    /// `Name` bound to a local variable or parameter.
    Local,
    /// `Name` that denotes a field of `this`: object slot.
    ThisField(usize),
    /// `Name` or qualified `Class.f` denoting a static field: global slot.
    Static(usize),
    /// `Name` used as a class qualifier.
    Class(usize),
    /// `Field(e, f)` on an object: object slot.
    ObjField(usize),
    Call(CallTarget),
    /// `New`: class index.
    New(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CallTarget {
    Static(MethodRef),
    /// Receiver is the explicit `recv` expression, or `this` if absent.
    Instance(MethodRef),
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Ty {
    Int,
    Bool,
    Void,
    Null,
    Obj(usize),
    ClassRef(usize),
}

impl Ty {
    fn name(&self, classes: &[ClassDecl]) -> String {
        match self {
            Ty::Int => "int".into(),
            Ty::Bool => "boolean".into(),
            Ty::Void => "void".into(),
            Ty::Null => "null".into(),
            Ty::Obj(c) => classes[*c].name.clone(),
            Ty::ClassRef(c) => format!("class {}", classes[*c].name),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Callable {
    Method(MethodRef),
    Ctor(usize),
}

pub(super) fn finish(parsed: Parsed) -> Result<Program, ParseError> {
    let Parsed {
        mut classes,
        annotations,
    } = parsed;

    let mut seen = BTreeSet::new();
    for c in &classes {
        if !seen.insert(c.name.clone()) {
            return Err(ParseError::new(c.span, format!("duplicate class `{}`", c.name)));
        }
    }

    // Field inits become assignments run by the class or object initializer.
    for class in &mut classes {
        let mut names = BTreeSet::new();
        for f in &class.fields {
            if !names.insert(f.name.clone()) {
                return Err(ParseError::new(f.span, format!("duplicate field `{}`", f.name)));
            }
        }
        let mut mnames = BTreeSet::new();
        for m in &class.methods {
            if !mnames.insert(m.name.clone()) {
                return Err(ParseError::new(m.span, format!("duplicate method `{}`", m.name)));
            }
        }
        class.instance_fields = (0..class.fields.len())
            .filter(|&i| !class.fields[i].is_static)
            .collect();
        class.static_init.clear();
        class.instance_init.clear();
        for f in &class.fields {
            if let Some(init) = &f.init {
                let target = if f.is_static {
                    Expr::at(ExprKind::Name(f.name.clone()), f.span)
                } else {
                    Expr::at(
                        ExprKind::Field(Box::new(Expr::at(ExprKind::This, f.span)), f.name.clone()),
                        f.span,
                    )
                };
                let stmt = Stmt::at(
                    StmtKind::Assign {
                        target,
                        value: init.clone(),
                    },
                    f.span,
                );
                if f.is_static {
                    class.static_init.push(stmt);
                } else {
                    class.instance_init.push(stmt);
                }
            }
        }
    }

    let node_count = number_nodes(&mut classes);

    let mut statics = Vec::new();
    for (ci, c) in classes.iter().enumerate() {
        for (fi, f) in c.fields.iter().enumerate() {
            if f.is_static {
                if let Some(prev) = statics.iter().find(|s: &&StaticSlot| s.name == f.name) {
                    return Err(ParseError::new(
                        f.span,
                        format!(
                            "static field `{}` is also declared in class `{}`; static field names must be unique",
                            f.name, classes[prev.class].name
                        ),
                    ));
                }
                statics.push(StaticSlot {
                    class: ci,
                    field: fi,
                    name: f.name.clone(),
                    ty: f.ty.clone(),
                });
            }
        }
    }

    let mut mains = Vec::new();
    for (ci, c) in classes.iter().enumerate() {
        for (mi, m) in c.methods.iter().enumerate() {
            if m.name == "main" {
                mains.push((MethodRef { class: ci, method: mi }, m.span));
            }
        }
    }
    let main = match mains.as_slice() {
        [] => {
            return Err(ParseError::new(
                Span { line: 1, col: 1 },
                "no entry point: expected a `static void main(...)` method",
            ))
        }
        [(m, _)] => *m,
        [_, (_, span), ..] => return Err(ParseError::new(*span, "duplicate `main` method")),
    };
    let main_decl = &classes[main.class].methods[main.method];
    if !main_decl.is_static || main_decl.ret != Type::Void {
        return Err(ParseError::new(main_decl.span, "`main` must be `static void`"));
    }
    let mut inputs = Vec::new();
    for p in &main_decl.params {
        if !p.ty.is_scalar() {
            return Err(ParseError::new(p.span, "inputs of `main` must be `int` or `boolean`"));
        }
        if statics.iter().any(|s| s.name == p.name) {
            return Err(ParseError::new(
                p.span,
                format!("input `{}` clashes with a static field of the same name", p.name),
            ));
        }
        inputs.push(Input {
            name: p.name.clone(),
            ty: p.ty.clone(),
        });
    }

    let mut checker = Checker {
        classes: &classes,
        statics: &statics,
        res: vec![Res::None; node_count],
        calls: BTreeMap::new(),
        current: None,
    };
    checker.check_all()?;
    let Checker { res, calls, .. } = checker;
    check_recursion(&classes, &calls)?;

    let mut annots: Vec<Annotation> = Vec::new();
    for (scope, text, span) in annotations_raw(annotations)? {
        for (path, label) in text {
            annots.push(Annotation {
                scope: scope.clone(),
                path,
                label,
                span,
            });
        }
    }
    annots.sort_by_key(|a| scope_key(&a.scope));

    Ok(Program {
        classes,
        annotations: annots,
        main,
        inputs,
        statics,
        res,
    })
}

fn scope_key(s: &AnnotScope) -> (usize, usize, Option<MethodKey>) {
    match s {
        AnnotScope::Global => (0, 0, None),
        AnnotScope::Class(c) => (1, *c, None),
        AnnotScope::Method { class, method } => (1, *class, Some(*method)),
    }
}

type RawAnnots = Vec<(AnnotScope, Vec<(Vec<String>, String)>, Span)>;

/// Extracts `setLabel(path, Label)` clauses from annotation comments; other
/// JML clauses are ignored.
fn annotations_raw(raw: Vec<(AnnotScope, String, Span)>) -> Result<RawAnnots, ParseError> {
    let mut out = Vec::new();
    for (scope, text, span) in raw {
        let mut found = Vec::new();
        let mut rest = text.as_str();
        while let Some(pos) = rest.find("setLabel") {
            rest = &rest[pos + "setLabel".len()..];
            let open = rest.trim_start();
            if !open.starts_with('(') {
                return Err(ParseError::new(span, "malformed setLabel annotation: expected `(`"));
            }
            let close = open
                .find(')')
                .ok_or_else(|| ParseError::new(span, "malformed setLabel annotation: missing `)`"))?;
            let inner = &open[1..close];
            let (path, label) = inner.split_once(',').ok_or_else(|| {
                ParseError::new(span, "malformed setLabel annotation: expected `setLabel(var, Label)`")
            })?;
            let path: Vec<String> = path.split('.').map(|s| s.trim().to_string()).collect();
            if path.iter().any(|s| s.is_empty() || !s.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '$')) {
                return Err(ParseError::new(span, "malformed setLabel annotation: bad variable path"));
            }
            found.push((path, label.trim().to_string()));
            rest = &open[close + 1..];
        }
        if !found.is_empty() {
            out.push((scope, found, span));
        }
    }
    Ok(out)
}

fn number_nodes(classes: &mut [ClassDecl]) -> usize {
    struct Counter(u32);
    impl Counter {
        fn expr(&mut self, e: &mut Expr) {
            e.id = self.0;
            self.0 += 1;
            match &mut e.kind {
                ExprKind::Field(inner, _) | ExprKind::Unary(_, inner) => self.expr(inner),
                ExprKind::Binary(_, l, r) => {
                    self.expr(l);
                    self.expr(r);
                }
                ExprKind::Call { recv, args, .. } => {
                    if let Some(r) = recv {
                        self.expr(r);
                    }
                    args.iter_mut().for_each(|a| self.expr(a));
                }
                ExprKind::New { args, .. } => args.iter_mut().for_each(|a| self.expr(a)),
                _ => {}
            }
        }

        fn stmt(&mut self, s: &mut Stmt) {
            s.id = self.0;
            self.0 += 1;
            match &mut s.kind {
                StmtKind::Decl { init: Some(e), .. } => self.expr(e),
                StmtKind::Assign { target, value } => {
                    self.expr(target);
                    self.expr(value);
                }
                StmtKind::If {
                    cond,
                    then_branch,
                    else_branch,
                } => {
                    self.expr(cond);
                    self.stmt(then_branch);
                    if let Some(e) = else_branch {
                        self.stmt(e);
                    }
                }
                StmtKind::While { cond, body } => {
                    self.expr(cond);
                    self.stmt(body);
                }
                StmtKind::Return(Some(e)) | StmtKind::Expr(e) | StmtKind::Print(e) => self.expr(e),
                StmtKind::Block(stmts) => stmts.iter_mut().for_each(|s| self.stmt(s)),
                _ => {}
            }
        }
    }

    let mut n = Counter(0);
    for c in classes.iter_mut() {
        for f in &mut c.fields {
            if let Some(e) = &mut f.init {
                n.expr(e);
            }
        }
        if let Some(ctor) = &mut c.ctor {
            n.stmt(&mut ctor.body);
        }
        for m in &mut c.methods {
            n.stmt(&mut m.body);
        }
        for s in c.static_init.iter_mut().chain(c.instance_init.iter_mut()) {
            n.stmt(s);
        }
    }
    n.0 as usize
}

struct Frame {
    class: usize,
    is_static: bool,
    ret: Ty,
    scopes: Vec<Vec<(String, Ty)>>,
    loops: usize,
    owner: Option<Callable>,
}

struct Checker<'a> {
    classes: &'a [ClassDecl],
    statics: &'a [StaticSlot],
    res: Vec<Res>,
    calls: BTreeMap<Callable, BTreeSet<Callable>>,
    current: Option<Frame>,
}

fn err<T>(span: Span, msg: impl Into<String>) -> Result<T, ParseError> {
    Err(ParseError::new(span, msg))
}

impl<'a> Checker<'a> {
    fn ty_of(&self, t: &Type, span: Span) -> Result<Ty, ParseError> {
        Ok(match t {
            Type::Int => Ty::Int,
            Type::Bool => Ty::Bool,
            Type::Void => Ty::Void,
            Type::Class(name) => match self.classes.iter().position(|c| &c.name == name) {
                Some(i) => Ty::Obj(i),
                None => return err(span, format!("unknown class `{name}`")),
            },
        })
    }

    fn frame(&mut self) -> &mut Frame {
        self.current.as_mut().expect("checker frame")
    }

    fn check_all(&mut self) -> Result<(), ParseError> {
        let classes = self.classes;
        for (ci, c) in classes.iter().enumerate() {
            for f in &c.fields {
                self.ty_of(&f.ty, f.span)?;
            }
            // class initializer
            self.current = Some(Frame {
                class: ci,
                is_static: true,
                ret: Ty::Void,
                scopes: vec![Vec::new()],
                loops: 0,
                owner: None,
            });
            for s in &c.static_init {
                self.stmt(s)?;
            }
            // object initializer and constructor share a frame owner
            let ctor_params = c.ctor.as_ref().map(|m| m.params.as_slice()).unwrap_or(&[]);
            let mut scope = Vec::new();
            for p in ctor_params {
                let ty = self.ty_of(&p.ty, p.span)?;
                if scope.iter().any(|(n, _): &(String, Ty)| n == &p.name) {
                    return err(p.span, format!("duplicate parameter `{}`", p.name));
                }
                scope.push((p.name.clone(), ty));
            }
            self.current = Some(Frame {
                class: ci,
                is_static: false,
                ret: Ty::Void,
                scopes: vec![Vec::new()],
                loops: 0,
                owner: Some(Callable::Ctor(ci)),
            });
            for s in &c.instance_init {
                self.stmt(s)?;
            }
            if let Some(ctor) = &c.ctor {
                self.frame().scopes = vec![scope];
                self.stmt(&ctor.body)?;
            }
            for (mi, m) in c.methods.iter().enumerate() {
                let ret = self.ty_of(&m.ret, m.span)?;
                let mut scope = Vec::new();
                for p in &m.params {
                    let ty = self.ty_of(&p.ty, p.span)?;
                    if ty == Ty::Void {
                        return err(p.span, "parameters cannot be void");
                    }
                    if scope.iter().any(|(n, _): &(String, Ty)| n == &p.name) {
                        return err(p.span, format!("duplicate parameter `{}`", p.name));
                    }
                    scope.push((p.name.clone(), ty));
                }
                self.current = Some(Frame {
                    class: ci,
                    is_static: m.is_static,
                    ret: ret.clone(),
                    scopes: vec![scope],
                    loops: 0,
                    owner: Some(Callable::Method(MethodRef { class: ci, method: mi })),
                });
                self.stmt(&m.body)?;
                if ret != Ty::Void && completes_normally(&m.body) {
                    return err(m.span, format!("method `{}` may finish without returning a value", m.name));
                }
            }
        }
        self.current = None;
        Ok(())
    }

    fn lookup_local(&self, name: &str) -> Option<Ty> {
        let f = self.current.as_ref()?;
        f.scopes
            .iter()
            .rev()
            .flat_map(|s| s.iter().rev())
            .find(|(n, _)| n == name)
            .map(|(_, t)| t.clone())
    }

    fn record_call(&mut self, callee: Callable) {
        if let Some(owner) = self.current.as_ref().and_then(|f| f.owner) {
            self.calls.entry(owner).or_default().insert(callee);
        }
    }

    fn assignable(&self, to: &Ty, from: &Ty) -> bool {
        to == from || (matches!(to, Ty::Obj(_)) && *from == Ty::Null)
    }

    fn stmt(&mut self, s: &Stmt) -> Result<(), ParseError> {
        match &s.kind {
            StmtKind::Decl { ty, name, init } => {
                let t = self.ty_of(ty, s.span)?;
                if t == Ty::Void {
                    return err(s.span, "variables cannot be void");
                }
                if self.lookup_local(name).is_some() {
                    return err(s.span, format!("variable `{name}` is already defined"));
                }
                if let Some(e) = init {
                    let et = self.expr(e)?;
                    if !self.assignable(&t, &et) {
                        return err(
                            e.span,
                            format!(
                                "cannot initialize `{name}` of type {} with {}",
                                t.name(self.classes),
                                et.name(self.classes)
                            ),
                        );
                    }
                }
                self.frame().scopes.last_mut().unwrap().push((name.clone(), t));
            }
            StmtKind::Assign { target, value } => {
                let tt = self.expr(target)?;
                if !matches!(self.res[target.id as usize], Res::Local | Res::ThisField(_) | Res::Static(_) | Res::ObjField(_)) {
                    return err(target.span, "invalid assignment target");
                }
                let vt = self.expr(value)?;
                if !self.assignable(&tt, &vt) {
                    return err(
                        value.span,
                        format!(
                            "cannot assign {} to a variable of type {}",
                            vt.name(self.classes),
                            tt.name(self.classes)
                        ),
                    );
                }
            }
            StmtKind::If {
                cond,
                then_branch,
                else_branch,
            } => {
                self.cond(cond)?;
                self.scoped(then_branch)?;
                if let Some(e) = else_branch {
                    self.scoped(e)?;
                }
            }
            StmtKind::While { cond, body } => {
                self.cond(cond)?;
                self.frame().loops += 1;
                self.scoped(body)?;
                self.frame().loops -= 1;
            }
            StmtKind::Break => {
                if self.frame().loops == 0 {
                    return err(s.span, "`break` outside of a loop");
                }
            }
            StmtKind::Continue => {
                if self.frame().loops == 0 {
                    return err(s.span, "`continue` outside of a loop");
                }
            }
            StmtKind::Return(value) => {
                let ret = self.frame().ret.clone();
                if self.frame().owner.is_none() {
                    return err(s.span, "`return` outside of a method");
                }
                match (value, &ret) {
                    (None, Ty::Void) => {}
                    (None, _) => return err(s.span, "missing return value"),
                    (Some(e), Ty::Void) => return err(e.span, "void method cannot return a value"),
                    (Some(e), _) => {
                        let t = self.expr(e)?;
                        if !self.assignable(&ret, &t) {
                            return err(e.span, format!("cannot return {}", t.name(self.classes)));
                        }
                    }
                }
            }
            StmtKind::Expr(e) => {
                if !matches!(e.kind, ExprKind::Call { .. } | ExprKind::New { .. }) {
                    return err(e.span, "only calls and object creations can be used as statements");
                }
                self.expr(e)?;
            }
            StmtKind::Print(e) => {
                let t = self.expr(e)?;
                if !matches!(t, Ty::Int | Ty::Bool) {
                    return err(e.span, "println takes an int or boolean");
                }
            }
            StmtKind::Block(stmts) => {
                self.frame().scopes.push(Vec::new());
                for st in stmts {
                    self.stmt(st)?;
                }
                self.frame().scopes.pop();
            }
            StmtKind::Empty => {}
        }
        Ok(())
    }

    fn scoped(&mut self, s: &Stmt) -> Result<(), ParseError> {
        self.frame().scopes.push(Vec::new());
        self.stmt(s)?;
        self.frame().scopes.pop();
        Ok(())
    }

    fn cond(&mut self, e: &Expr) -> Result<(), ParseError> {
        match self.expr(e)? {
            Ty::Bool => Ok(()),
            t => err(e.span, format!("condition must be boolean, found {}", t.name(self.classes))),
        }
    }

    fn set(&mut self, id: NodeId, r: Res) {
        self.res[id as usize] = r;
    }

    fn expr(&mut self, e: &Expr) -> Result<Ty, ParseError> {
        let classes = self.classes;
        Ok(match &e.kind {
            ExprKind::Int(_) => Ty::Int,
            ExprKind::Bool(_) => Ty::Bool,
            ExprKind::Null => Ty::Null,
            ExprKind::This => {
                let f = self.current.as_ref().unwrap();
                if f.is_static {
                    return err(e.span, "`this` used in a static context");
                }
                Ty::Obj(f.class)
            }
            ExprKind::Name(name) => {
                if let Some(t) = self.lookup_local(name) {
                    self.set(e.id, Res::Local);
                    return Ok(t);
                }
                let (class, is_static) = {
                    let f = self.current.as_ref().unwrap();
                    (f.class, f.is_static)
                };
                if let Some((fi, fd)) = classes[class].field(name) {
                    if fd.is_static {
                        let slot = self.statics.iter().position(|s| s.name == *name).unwrap();
                        self.set(e.id, Res::Static(slot));
                    } else {
                        if is_static {
                            return err(e.span, format!("instance field `{name}` used in a static context"));
                        }
                        let slot = classes[class].instance_slot(fi).unwrap();
                        self.set(e.id, Res::ThisField(slot));
                    }
                    return self.ty_of(&fd.ty, e.span);
                }
                if let Some(ci) = classes.iter().position(|c| c.name == *name) {
                    self.set(e.id, Res::Class(ci));
                    return Ok(Ty::ClassRef(ci));
                }
                return err(e.span, format!("cannot find variable `{name}`"));
            }
            ExprKind::Field(inner, name) => match self.expr(inner)? {
                Ty::ClassRef(ci) => match classes[ci].field(name) {
                    Some((_, fd)) if fd.is_static => {
                        let slot = self.statics.iter().position(|s| s.name == *name).unwrap();
                        self.set(e.id, Res::Static(slot));
                        self.ty_of(&fd.ty, e.span)?
                    }
                    _ => {
                        return err(
                            e.span,
                            format!("class `{}` has no static field `{name}`", classes[ci].name),
                        )
                    }
                },
                Ty::Obj(ci) => match classes[ci].field(name) {
                    Some((fi, fd)) if !fd.is_static => {
                        self.set(e.id, Res::ObjField(classes[ci].instance_slot(fi).unwrap()));
                        self.ty_of(&fd.ty, e.span)?
                    }
                    _ => {
                        return err(
                            e.span,
                            format!("class `{}` has no instance field `{name}`", classes[ci].name),
                        )
                    }
                },
                t => return err(e.span, format!("{} has no fields", t.name(classes))),
            },
            ExprKind::Unary(op, inner) => {
                let t = self.expr(inner)?;
                match (op, &t) {
                    (UnOp::Neg, Ty::Int) => Ty::Int,
                    (UnOp::Not, Ty::Bool) => Ty::Bool,
                    _ => {
                        return err(
                            e.span,
                            format!("operator `{}` cannot be applied to {}", op.symbol(), t.name(classes)),
                        )
                    }
                }
            }
            ExprKind::Binary(op, l, r) => {
                let lt = self.expr(l)?;
                let rt = self.expr(r)?;
                let bad = || {
                    err(
                        e.span,
                        format!(
                            "operator `{}` cannot be applied to {} and {}",
                            op.symbol(),
                            lt.name(classes),
                            rt.name(classes)
                        ),
                    )
                };
                match op {
                    BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Div | BinOp::Rem => {
                        if lt == Ty::Int && rt == Ty::Int {
                            Ty::Int
                        } else {
                            return bad();
                        }
                    }
                    BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => {
                        if lt == Ty::Int && rt == Ty::Int {
                            Ty::Bool
                        } else {
                            return bad();
                        }
                    }
                    BinOp::And | BinOp::Or => {
                        if lt == Ty::Bool && rt == Ty::Bool {
                            Ty::Bool
                        } else {
                            return bad();
                        }
                    }
                    BinOp::Eq | BinOp::Ne => {
                        let ok = lt == rt && matches!(lt, Ty::Int | Ty::Bool | Ty::Obj(_))
                            || (matches!(lt, Ty::Obj(_) | Ty::Null) && matches!(rt, Ty::Obj(_) | Ty::Null));
                        if ok {
                            Ty::Bool
                        } else {
                            return bad();
                        }
                    }
                }
            }
            ExprKind::Call { recv, method, args } => {
                let (target, mdecl) = match recv {
                    None => {
                        let (class, is_static) = {
                            let f = self.current.as_ref().unwrap();
                            (f.class, f.is_static)
                        };
                        let Some((mi, m)) = classes[class].method(method) else {
                            return err(e.span, format!("cannot find method `{method}`"));
                        };
                        let mref = MethodRef { class, method: mi };
                        if m.is_static {
                            (CallTarget::Static(mref), m)
                        } else if is_static {
                            return err(e.span, format!("instance method `{method}` called from a static context"));
                        } else {
                            (CallTarget::Instance(mref), m)
                        }
                    }
                    Some(r) => match self.expr(r)? {
                        Ty::ClassRef(ci) => match classes[ci].method(method) {
                            Some((mi, m)) if m.is_static => (CallTarget::Static(MethodRef { class: ci, method: mi }), m),
                            _ => {
                                return err(
                                    e.span,
                                    format!("class `{}` has no static method `{method}`", classes[ci].name),
                                )
                            }
                        },
                        Ty::Obj(ci) => match classes[ci].method(method) {
                            Some((mi, m)) if !m.is_static => {
                                (CallTarget::Instance(MethodRef { class: ci, method: mi }), m)
                            }
                            _ => {
                                return err(
                                    e.span,
                                    format!("class `{}` has no instance method `{method}`", classes[ci].name),
                                )
                            }
                        },
                        t => return err(e.span, format!("cannot call a method on {}", t.name(classes))),
                    },
                };
                let mref = match target {
                    CallTarget::Static(m) | CallTarget::Instance(m) => m,
                };
                if mref.class == self.main_class_hint() && mdecl.name == "main" && mdecl.is_static {
                    return err(e.span, "`main` cannot be called");
                }
                self.check_args(&mdecl.params, args, e.span)?;
                self.set(e.id, Res::Call(target));
                self.record_call(Callable::Method(mref));
                self.ty_of(&mdecl.ret, e.span)?
            }
            ExprKind::New { class, args } => {
                let Some(ci) = classes.iter().position(|c| c.name == *class) else {
                    return err(e.span, format!("unknown class `{class}`"));
                };
                let params = classes[ci].ctor.as_ref().map(|c| c.params.as_slice()).unwrap_or(&[]);
                self.check_args(params, args, e.span)?;
                self.set(e.id, Res::New(ci));
                self.record_call(Callable::Ctor(ci));
                Ty::Obj(ci)
            }
        })
    }

    /// `main` is unique, so any static method named `main` is the entry point.
    fn main_class_hint(&self) -> usize {
        self.classes
            .iter()
            .position(|c| c.methods.iter().any(|m| m.name == "main" && m.is_static))
            .unwrap_or(usize::MAX)
    }

    fn check_args(&mut self, params: &[Param], args: &[Expr], span: Span) -> Result<(), ParseError> {
        if params.len() != args.len() {
            return err(span, format!("expected {} arguments, found {}", params.len(), args.len()));
        }
        for (p, a) in params.iter().zip(args) {
            let pt = self.ty_of(&p.ty, p.span)?;
            let at = self.expr(a)?;
            if !self.assignable(&pt, &at) {
                return err(
                    a.span,
                    format!(
                        "argument of type {} does not match parameter `{}` of type {}",
                        at.name(self.classes),
                        p.name,
                        pt.name(self.classes)
                    ),
                );
            }
        }
        Ok(())
    }
}

/// Conservative: whether control can reach the end of `s`.
fn completes_normally(s: &Stmt) -> bool {
    match &s.kind {
        StmtKind::Return(_) => false,
        StmtKind::Block(stmts) => stmts.iter().all(completes_normally),
        StmtKind::If {
            then_branch,
            else_branch: Some(else_branch),
            ..
        } => completes_normally(then_branch) || completes_normally(else_branch),
        StmtKind::While { cond, body } => {
            !(matches!(cond.kind, ExprKind::Bool(true)) && !has_break(body))
        }
        _ => true,
    }
}

fn has_break(s: &Stmt) -> bool {
    match &s.kind {
        StmtKind::Break => true,
        StmtKind::Block(stmts) => stmts.iter().any(has_break),
        StmtKind::If {
            then_branch,
            else_branch,
            ..
        } => has_break(then_branch) || else_branch.as_deref().is_some_and(has_break),
        _ => false,
    }
}

fn check_recursion(
    classes: &[ClassDecl],
    calls: &BTreeMap<Callable, BTreeSet<Callable>>,
) -> Result<(), ParseError> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Active,
        Done,
    }
    fn visit(
        n: Callable,
        calls: &BTreeMap<Callable, BTreeSet<Callable>>,
        marks: &mut BTreeMap<Callable, Mark>,
    ) -> Option<Callable> {
        match marks.get(&n) {
            Some(Mark::Done) => return None,
            Some(Mark::Active) => return Some(n),
            None => {}
        }
        marks.insert(n, Mark::Active);
        if let Some(next) = calls.get(&n) {
            for &m in next {
                if let Some(c) = visit(m, calls, marks) {
                    return Some(c);
                }
            }
        }
        marks.insert(n, Mark::Done);
        None
    }
    let mut marks = BTreeMap::new();
    for &n in calls.keys() {
        if let Some(c) = visit(n, calls, &mut marks) {
            let (name, span) = match c {
                Callable::Method(m) => {
                    let d = &classes[m.class].methods[m.method];
                    (format!("{}.{}", classes[m.class].name, d.name), d.span)
                }
                Callable::Ctor(ci) => (format!("constructor of {}", classes[ci].name), classes[ci].span),
            };
            return err(span, format!("recursion is not supported ({name} is part of a call cycle)"));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use crate::syntax::parse;

    fn parse_err(src: &str) -> String {
        parse(src).unwrap_err().message
    }

    #[test]
    fn missing_main() {
        assert!(parse_err("class C { }").contains("no entry point"));
    }

    #[test]
    fn break_outside_loop() {
        assert!(parse_err("class C { static void main() { break; } }").contains("outside of a loop"));
    }

    #[test]
    fn duplicate_main() {
        let e = parse_err("class C { static void main() {} } class D { static void main() {} }");
        assert!(e.contains("duplicate `main`"), "{e}");
    }

    #[test]
    fn unresolved_name() {
        assert!(parse_err("class C { static void main() { x = 1; } }").contains("cannot find variable `x`"));
    }

    #[test]
    fn type_errors() {
        assert!(parse_err("class C { static int x; static void main() { x = true; } }").contains("cannot assign"));
        assert!(parse_err("class C { static int x; static void main() { if (x) {} } }").contains("boolean"));
    }

    #[test]
    fn recursion_is_rejected() {
        let e = parse_err("class C { static void f() { g(); } static void g() { f(); } static void main() { f(); } }");
        assert!(e.contains("recursion"), "{e}");
        let e = parse_err("class N { N next; N() { next = new N(); } static void main() { } }");
        assert!(e.contains("recursion"), "{e}");
    }

    #[test]
    fn missing_return_is_rejected() {
        let e = parse_err("class C { static boolean b; static int f() { if (b) return 1; } static void main() {} }");
        assert!(e.contains("without returning"), "{e}");
    }

    #[test]
    fn static_names_must_be_unique() {
        let e = parse_err("class A { static int x; } class B { static int x; static void main() {} }");
        assert!(e.contains("unique"), "{e}");
    }

    #[test]
    fn error_positions() {
        let e = parse("class C {\n  static void main() {\n    y = 1;\n  }\n}").unwrap_err();
        assert_eq!((e.span.line, e.span.col), (3, 5));
    }
}
