//! Canonical source printer. Re-parsing the output yields an equal program.

use super::ast::*;
use super::Program;
use std::fmt::Write;

pub fn pretty_print(program: &Program) -> String {
    let mut p = Printer {
        out: String::new(),
        indent: 0,
    };
    p.annotations(program, &AnnotScope::Global);
    for (ci, class) in program.classes.iter().enumerate() {
        p.class(program, ci, class);
    }
    p.out
}

struct Printer {
    out: String,
    indent: usize,
}

impl Printer {
    fn line(&mut self, text: &str) {
        for _ in 0..self.indent {
            self.out.push_str("    ");
        }
        self.out.push_str(text);
        self.out.push('\n');
    }

    fn annotations(&mut self, program: &Program, scope: &AnnotScope) {
        for a in program.annotations.iter().filter(|a| &a.scope == scope) {
            self.line(&format!("//@ setLabel({}, {});", a.path.join("."), a.label));
        }
    }

    fn class(&mut self, program: &Program, ci: usize, class: &ClassDecl) {
        self.line(&format!("class {} {{", class.name));
        self.indent += 1;
        self.annotations(program, &AnnotScope::Class(ci));
        for f in &class.fields {
            let mut s = String::new();
            if f.is_static {
                s.push_str("static ");
            }
            write!(s, "{} {}", f.ty, f.name).unwrap();
            if let Some(init) = &f.init {
                write!(s, " = {}", expr(init)).unwrap();
            }
            s.push(';');
            self.line(&s);
        }
        if let Some(ctor) = &class.ctor {
            self.method(program, ci, MethodKey::Ctor, ctor, true);
        }
        for (mi, m) in class.methods.iter().enumerate() {
            self.method(program, ci, MethodKey::Method(mi), m, false);
        }
        self.indent -= 1;
        self.line("}");
    }

    fn method(&mut self, program: &Program, class: usize, key: MethodKey, m: &MethodDecl, ctor: bool) {
        let params: Vec<String> = m.params.iter().map(|p| format!("{} {}", p.ty, p.name)).collect();
        let head = if ctor {
            format!("{}({}) {{", m.name, params.join(", "))
        } else {
            format!(
                "{}{} {}({}) {{",
                if m.is_static { "static " } else { "" },
                m.ret,
                m.name,
                params.join(", ")
            )
        };
        self.line(&head);
        self.indent += 1;
        self.annotations(program, &AnnotScope::Method { class, method: key });
        if let StmtKind::Block(stmts) = &m.body.kind {
            for s in stmts {
                self.stmt(s);
            }
        }
        self.indent -= 1;
        self.line("}");
    }

    fn stmt(&mut self, s: &Stmt) {
        match &s.kind {
            StmtKind::Decl { ty, name, init } => match init {
                Some(e) => self.line(&format!("{ty} {name} = {};", expr(e))),
                None => self.line(&format!("{ty} {name};")),
            },
            StmtKind::Assign { target, value } => {
                self.line(&format!("{} = {};", expr(target), expr(value)))
            }
            StmtKind::If {
                cond,
                then_branch,
                else_branch,
            } => {
                self.line(&format!("if ({})", expr(cond)));
                self.nested(then_branch);
                if let Some(e) = else_branch {
                    self.line("else");
                    self.nested(e);
                }
            }
            StmtKind::While { cond, body } => {
                self.line(&format!("while ({})", expr(cond)));
                self.nested(body);
            }
            StmtKind::Break => self.line("break;"),
            StmtKind::Continue => self.line("continue;"),
            StmtKind::Return(None) => self.line("return;"),
            StmtKind::Return(Some(e)) => self.line(&format!("return {};", expr(e))),
            StmtKind::Expr(e) => self.line(&format!("{};", expr(e))),
            StmtKind::Print(e) => self.line(&format!("System.out.println({});", expr(e))),
            StmtKind::Block(stmts) => {
                self.line("{");
                self.indent += 1;
                for s in stmts {
                    self.stmt(s);
                }
                self.indent -= 1;
                self.line("}");
            }
            StmtKind::Empty => self.line(";"),
        }
    }

    fn nested(&mut self, s: &Stmt) {
        if matches!(s.kind, StmtKind::Block(_)) {
            self.stmt(s);
        } else {
            self.indent += 1;
            self.stmt(s);
            self.indent -= 1;
        }
    }
}

/// Renders an expression with the minimal parentheses needed to re-parse it
/// to the same tree.
pub fn expr(e: &Expr) -> String {
    match &e.kind {
        ExprKind::Int(n) if n.sign() == num_bigint::Sign::Minus => format!("({n})"),
        ExprKind::Int(n) => n.to_string(),
        ExprKind::Bool(b) => b.to_string(),
        ExprKind::Null => "null".into(),
        ExprKind::This => "this".into(),
        ExprKind::Name(n) => n.clone(),
        ExprKind::Field(inner, f) => format!("{}.{f}", postfix_operand(inner)),
        ExprKind::Unary(op, inner) => {
            let s = match inner.kind {
                ExprKind::Binary(..) | ExprKind::Unary(..) | ExprKind::Int(_) => format!("({})", expr(inner)),
                _ => expr(inner),
            };
            format!("{}{s}", op.symbol())
        }
        ExprKind::Binary(op, l, r) => {
            let prec = op.precedence();
            let ls = match &l.kind {
                ExprKind::Binary(lop, ..) if lop.precedence() < prec => format!("({})", expr(l)),
                _ => expr(l),
            };
            let rs = match &r.kind {
                ExprKind::Binary(rop, ..) if rop.precedence() <= prec => format!("({})", expr(r)),
                _ => expr(r),
            };
            format!("{ls} {} {rs}", op.symbol())
        }
        ExprKind::Call { recv, method, args } => {
            let args: Vec<String> = args.iter().map(expr).collect();
            match recv {
                Some(r) => format!("{}.{method}({})", postfix_operand(r), args.join(", ")),
                None => format!("{method}({})", args.join(", ")),
            }
        }
        ExprKind::New { class, args } => {
            let args: Vec<String> = args.iter().map(expr).collect();
            format!("new {class}({})", args.join(", "))
        }
    }
}

fn postfix_operand(e: &Expr) -> String {
    match e.kind {
        ExprKind::Name(_) | ExprKind::This | ExprKind::Field(..) | ExprKind::Call { .. } => expr(e),
        _ => format!("({})", expr(e)),
    }
}
