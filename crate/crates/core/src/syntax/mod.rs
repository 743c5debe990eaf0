//! Source language: lexer, parser, static checks, policy annotations and
//! pretty-printing.
//!
//! The language is a small class-based subset of Java: scalar `int` and
//! `boolean` values, record-like objects without inheritance, static and
//! instance methods (no recursion), `if`, `while`, `break`, `continue`,
//! `return` and `System.out.println`. Program inputs are the scalar
//! parameters of the single `static void main(...)` method.

mod ast;
mod check;
mod lexer;
mod parser;
mod policy;
mod pretty;

pub use ast::*;
pub use check::{CallTarget, Res};
pub use policy::{extract_policy, NIPolicy, PolicyError, VarTarget};
pub use pretty::pretty_print;

use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{span}: {message}")]
pub struct ParseError {
    pub span: Span,
    pub message: String,
}

impl ParseError {
    pub fn new(span: Span, message: impl Into<String>) -> ParseError {
        ParseError {
            span,
            message: message.into(),
        }
    }
}

/// A parsed, name-resolved and type-checked program.
#[derive(Debug, Clone)]
pub struct Program {
    pub classes: Vec<ClassDecl>,
    /// `setLabel` annotations in canonical order (by scope, then source order).
    pub annotations: Vec<Annotation>,
    pub main: MethodRef,
    pub inputs: Vec<Input>,
    /// Static fields in slot order (class order, then declaration order).
    pub statics: Vec<StaticSlot>,
    res: Vec<Res>,
}

impl PartialEq for Program {
    fn eq(&self, other: &Program) -> bool {
        self.classes == other.classes
            && self.annotations == other.annotations
            && self.main == other.main
            && self.inputs == other.inputs
    }
}

impl Eq for Program {}

impl Program {
    pub fn res(&self, id: NodeId) -> &Res {
        &self.res[id as usize]
    }

    pub fn method(&self, m: MethodRef) -> &MethodDecl {
        &self.classes[m.class].methods[m.method]
    }

    pub fn main_method(&self) -> &MethodDecl {
        self.method(self.main)
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c.name == name)
    }

    pub fn static_slot(&self, name: &str) -> Option<usize> {
        self.statics.iter().position(|s| s.name == name)
    }

    pub fn input_index(&self, name: &str) -> Option<usize> {
        self.inputs.iter().position(|i| i.name == name)
    }

    pub fn node_count(&self) -> usize {
        self.res.len()
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&pretty_print(self))
    }
}

/// Parses and statically checks a source file.
pub fn parse(source: &str) -> Result<Program, ParseError> {
    let parsed = parser::parse_classes(source)?;
    check::finish(parsed)
}

/// Whether a conditional branch can transfer control abruptly out of the
/// enclosing conditional: it holds a `break` or `continue` that is not
/// captured by a loop nested inside the branch, or any `return`.
///
/// Nested conditionals and blocks are looked through, since a `break`
/// guarded by an inner `if` still leaves the outer one.
pub fn contains_abrupt(branch: &Stmt) -> bool {
    fn walk(s: &Stmt, in_loop: bool) -> bool {
        match &s.kind {
            StmtKind::Break | StmtKind::Continue => !in_loop,
            StmtKind::Return(_) => true,
            StmtKind::Block(stmts) => stmts.iter().any(|s| walk(s, in_loop)),
            StmtKind::If {
                then_branch,
                else_branch,
                ..
            } => {
                walk(then_branch, in_loop)
                    || else_branch.as_deref().is_some_and(|e| walk(e, in_loop))
            }
            StmtKind::While { body, .. } => walk(body, true),
            _ => false,
        }
    }
    walk(branch, false)
}
