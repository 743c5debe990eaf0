use num_bigint::BigInt;
use std::fmt;

/// Dense identifier of an expression or statement node, assigned in
/// pre-order after parsing. Continuations and certificates refer to
/// program points through these ids.
pub type NodeId = u32;

/// Source position (1-based).
///
/// Spans never take part in AST equality so that re-parsing a pretty-printed
/// program yields an equal tree.
#[derive(Debug, Clone, Copy, Default)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

impl PartialEq for Span {
    fn eq(&self, _: &Span) -> bool {
        true
    }
}

impl Eq for Span {}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Type {
    Int,
    Bool,
    Void,
    Class(String),
}

impl Type {
    pub fn is_scalar(&self) -> bool {
        matches!(self, Type::Int | Type::Bool)
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Type::Int => f.write_str("int"),
            Type::Bool => f.write_str("boolean"),
            Type::Void => f.write_str("void"),
            Type::Class(c) => f.write_str(c),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
    And,
    Or,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Rem => "%",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::And => "&&",
            BinOp::Or => "||",
        }
    }

    /// Binding strength; larger binds tighter.
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Eq | BinOp::Ne => 3,
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 4,
            BinOp::Add | BinOp::Sub => 5,
            BinOp::Mul | BinOp::Div | BinOp::Rem => 6,
        }
    }

    pub fn is_short_circuit(self) -> bool {
        matches!(self, BinOp::And | BinOp::Or)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnOp {
    Neg,
    Not,
}

impl UnOp {
    pub fn symbol(self) -> &'static str {
        match self {
            UnOp::Neg => "-",
            UnOp::Not => "!",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Expr {
    pub id: NodeId,
    pub span: Span,
    pub kind: ExprKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExprKind {
    Int(BigInt),
    Bool(bool),
    Null,
    This,
    Name(String),
    Field(Box<Expr>, String),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call {
        recv: Option<Box<Expr>>,
        method: String,
        args: Vec<Expr>,
    },
    New {
        class: String,
        args: Vec<Expr>,
    },
}

impl Expr {
    pub fn new(kind: ExprKind) -> Expr {
        Expr {
            id: 0,
            span: Span::default(),
            kind,
        }
    }

    pub fn at(kind: ExprKind, span: Span) -> Expr {
        Expr { id: 0, span, kind }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stmt {
    pub id: NodeId,
    pub span: Span,
    pub kind: StmtKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StmtKind {
    Decl {
        ty: Type,
        name: String,
        init: Option<Expr>,
    },
    /// `target` is a `Name` or a `Field` expression.
    Assign {
        target: Expr,
        value: Expr,
    },
    If {
        cond: Expr,
        then_branch: Box<Stmt>,
        else_branch: Option<Box<Stmt>>,
    },
    While {
        cond: Expr,
        body: Box<Stmt>,
    },
    Break,
    Continue,
    Return(Option<Expr>),
    Expr(Expr),
    Print(Expr),
    Block(Vec<Stmt>),
    Empty,
}

impl Stmt {
    pub fn new(kind: StmtKind) -> Stmt {
        Stmt {
            id: 0,
            span: Span::default(),
            kind,
        }
    }

    pub fn at(kind: StmtKind, span: Span) -> Stmt {
        Stmt { id: 0, span, kind }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Param {
    pub ty: Type,
    pub name: String,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MethodDecl {
    pub name: String,
    pub is_static: bool,
    pub ret: Type,
    pub params: Vec<Param>,
    /// Always a `Block`.
    pub body: Stmt,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldDecl {
    pub name: String,
    pub ty: Type,
    pub is_static: bool,
    pub init: Option<Expr>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassDecl {
    pub name: String,
    pub fields: Vec<FieldDecl>,
    pub ctor: Option<MethodDecl>,
    pub methods: Vec<MethodDecl>,
    pub span: Span,
    /// `f = init;` for every static field with an initializer, in declaration order.
    pub static_init: Vec<Stmt>,
    /// `this.f = init;` for every instance field with an initializer.
    pub instance_init: Vec<Stmt>,
    /// Indices into `fields` of the instance (non-static) fields; an object's
    /// field slots follow this order.
    pub instance_fields: Vec<usize>,
}

impl ClassDecl {
    pub fn field(&self, name: &str) -> Option<(usize, &FieldDecl)> {
        self.fields.iter().enumerate().find(|(_, f)| f.name == name)
    }

    pub fn method(&self, name: &str) -> Option<(usize, &MethodDecl)> {
        self.methods.iter().enumerate().find(|(_, m)| m.name == name)
    }

    /// Slot of an instance field within an object of this class.
    pub fn instance_slot(&self, field_index: usize) -> Option<usize> {
        self.instance_fields.iter().position(|&i| i == field_index)
    }
}

/// Where an annotation appeared; determines how bare names resolve.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AnnotScope {
    Global,
    Class(usize),
    Method { class: usize, method: MethodKey },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MethodKey {
    Ctor,
    Method(usize),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Annotation {
    pub scope: AnnotScope,
    pub path: Vec<String>,
    pub label: String,
    pub span: Span,
}

/// A declared program input: a scalar parameter of `main`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Input {
    pub name: String,
    pub ty: Type,
}

/// A static field, identified by its global slot (= store location).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StaticSlot {
    pub class: usize,
    pub field: usize,
    pub name: String,
    pub ty: Type,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct MethodRef {
    pub class: usize,
    pub method: usize,
}
