//! Recursive-descent parser producing unresolved class declarations.

use super::ast::*;
use super::lexer::{tokenize, Tok, Token};
use super::ParseError;
use num_bigint::BigInt;

pub struct Parsed {
    pub classes: Vec<ClassDecl>,
    pub annotations: Vec<(AnnotScope, String, Span)>,
}

pub fn parse_classes(src: &str) -> Result<Parsed, ParseError> {
    let mut p = Parser {
        toks: tokenize(src)?,
        pos: 0,
        annotations: Vec::new(),
        scope: AnnotScope::Global,
    };
    let mut classes = Vec::new();
    while !p.at_eof() {
        classes.push(p.class(classes.len())?);
    }
    p.flush_annotations();
    Ok(Parsed {
        classes,
        annotations: p.annotations,
    })
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    annotations: Vec<(AnnotScope, String, Span)>,
    scope: AnnotScope,
}

const MODIFIERS: &[&str] = &["public", "private", "protected", "static", "final"];
const RESERVED: &[&str] = &[
    "class", "public", "private", "protected", "static", "final", "void", "int", "boolean", "if",
    "else", "while", "break", "continue", "return", "new", "this", "true", "false", "null",
];

impl Parser {
    fn flush_annotations(&mut self) {
        while let Tok::Annotation(text) = &self.toks[self.pos].tok {
            let span = self.toks[self.pos].span;
            self.annotations.push((self.scope.clone(), text.clone(), span));
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> &Tok {
        self.flush_annotations();
        &self.toks[self.pos].tok
    }

    fn peek_at(&mut self, n: usize) -> &Tok {
        self.flush_annotations();
        let mut i = self.pos;
        let mut seen = 0;
        loop {
            if matches!(self.toks[i].tok, Tok::Eof) {
                return &self.toks[i].tok;
            }
            if !matches!(self.toks[i].tok, Tok::Annotation(_)) {
                if seen == n {
                    return &self.toks[i].tok;
                }
                seen += 1;
            }
            i += 1;
        }
    }

    fn span(&mut self) -> Span {
        self.flush_annotations();
        self.toks[self.pos].span
    }

    fn at_eof(&mut self) -> bool {
        matches!(self.peek(), Tok::Eof)
    }

    fn advance(&mut self) -> Token {
        self.flush_annotations();
        let t = self.toks[self.pos].clone();
        if !matches!(t.tok, Tok::Eof) {
            self.pos += 1;
        }
        t
    }

    fn err<T>(&mut self, msg: impl Into<String>) -> Result<T, ParseError> {
        let span = self.span();
        Err(ParseError::new(span, msg))
    }

    fn is_punct(&mut self, p: &str) -> bool {
        matches!(self.peek(), Tok::Punct(q) if *q == p)
    }

    fn is_kw(&mut self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn eat_punct(&mut self, p: &str) -> bool {
        if self.is_punct(p) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.is_kw(kw) {
            self.advance();
            true
        } else {
            false
        }
    }

    fn expect_punct(&mut self, p: &str) -> Result<(), ParseError> {
        if self.eat_punct(p) {
            Ok(())
        } else {
            let found = describe(self.peek());
            self.err(format!("expected `{p}`, found {found}"))
        }
    }

    fn expect_kw(&mut self, kw: &str) -> Result<(), ParseError> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            let found = describe(self.peek());
            self.err(format!("expected `{kw}`, found {found}"))
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.peek().clone() {
            Tok::Ident(s) if !RESERVED.contains(&s.as_str()) => {
                self.advance();
                Ok(s)
            }
            other => self.err(format!("expected identifier, found {}", describe(&other))),
        }
    }

    fn modifiers(&mut self) -> bool {
        let mut is_static = false;
        while let Tok::Ident(s) = self.peek() {
            if !MODIFIERS.contains(&s.as_str()) {
                break;
            }
            is_static |= s == "static";
            self.advance();
        }
        is_static
    }

    fn class(&mut self, index: usize) -> Result<ClassDecl, ParseError> {
        self.modifiers();
        let span = self.span();
        self.expect_kw("class")?;
        let name = self.ident()?;
        self.expect_punct("{")?;
        self.scope = AnnotScope::Class(index);
        let mut class = ClassDecl {
            name,
            fields: Vec::new(),
            ctor: None,
            methods: Vec::new(),
            span,
            static_init: Vec::new(),
            instance_init: Vec::new(),
            instance_fields: Vec::new(),
        };
        while !self.is_punct("}") {
            if self.at_eof() {
                return self.err("unexpected end of input inside class body");
            }
            self.member(index, &mut class)?;
        }
        self.advance();
        // Stray `}` after a class body are tolerated.
        while self.is_punct("}") {
            self.advance();
        }
        self.scope = AnnotScope::Global;
        Ok(class)
    }

    fn member(&mut self, class_index: usize, class: &mut ClassDecl) -> Result<(), ParseError> {
        let span = self.span();
        let is_static = self.modifiers();
        if matches!(self.peek(), Tok::Ident(s) if *s == class.name)
            && matches!(self.peek_at(1), Tok::Punct("("))
        {
            if class.ctor.is_some() {
                return self.err(format!("class `{}` declares more than one constructor", class.name));
            }
            self.advance();
            self.scope = AnnotScope::Method {
                class: class_index,
                method: MethodKey::Ctor,
            };
            let params = self.params(false)?;
            let body = self.block()?;
            self.scope = AnnotScope::Class(class_index);
            class.ctor = Some(MethodDecl {
                name: class.name.clone(),
                is_static: false,
                ret: Type::Void,
                params,
                body,
                span,
            });
            return Ok(());
        }
        let ty = self.ty(true)?;
        let name = self.ident()?;
        if self.is_punct("(") {
            self.scope = AnnotScope::Method {
                class: class_index,
                method: MethodKey::Method(class.methods.len()),
            };
            let params = self.params(name == "main")?;
            let body = self.block()?;
            self.scope = AnnotScope::Class(class_index);
            class.methods.push(MethodDecl {
                name,
                is_static,
                ret: ty,
                params,
                body,
                span,
            });
            return Ok(());
        }
        if ty == Type::Void {
            return self.err("fields cannot have type void");
        }
        let mut name = name;
        let mut fspan = span;
        loop {
            let init = if self.eat_punct("=") {
                Some(self.expr()?)
            } else {
                None
            };
            class.fields.push(FieldDecl {
                name,
                ty: ty.clone(),
                is_static,
                init,
                span: fspan,
            });
            if !self.eat_punct(",") {
                break;
            }
            fspan = self.span();
            name = self.ident()?;
        }
        self.expect_punct(";")
    }

    fn ty(&mut self, allow_void: bool) -> Result<Type, ParseError> {
        match self.peek().clone() {
            Tok::Ident(s) if s == "int" => {
                self.advance();
                Ok(Type::Int)
            }
            Tok::Ident(s) if s == "boolean" => {
                self.advance();
                Ok(Type::Bool)
            }
            Tok::Ident(s) if s == "void" && allow_void => {
                self.advance();
                Ok(Type::Void)
            }
            Tok::Ident(s) if !RESERVED.contains(&s.as_str()) => {
                self.advance();
                Ok(Type::Class(s))
            }
            other => self.err(format!("expected a type, found {}", describe(&other))),
        }
    }

    fn params(&mut self, is_main: bool) -> Result<Vec<Param>, ParseError> {
        self.expect_punct("(")?;
        let mut params = Vec::new();
        if self.eat_punct(")") {
            return Ok(params);
        }
        // `main(String[] args)` declares no scalar inputs.
        if is_main
            && matches!(self.peek(), Tok::Ident(s) if s == "String")
            && matches!(self.peek_at(1), Tok::Punct("["))
        {
            self.advance();
            self.expect_punct("[")?;
            self.expect_punct("]")?;
            self.ident()?;
            self.expect_punct(")")?;
            return Ok(params);
        }
        loop {
            let span = self.span();
            let ty = self.ty(false)?;
            let name = self.ident()?;
            params.push(Param { ty, name, span });
            if !self.eat_punct(",") {
                break;
            }
        }
        self.expect_punct(")")?;
        Ok(params)
    }

    fn block(&mut self) -> Result<Stmt, ParseError> {
        let span = self.span();
        self.expect_punct("{")?;
        let mut stmts = Vec::new();
        while !self.is_punct("}") {
            if self.at_eof() {
                return self.err("unexpected end of input inside block");
            }
            stmts.extend(self.stmt_in_block()?);
        }
        self.advance();
        Ok(Stmt::at(StmtKind::Block(stmts), span))
    }

    fn starts_decl(&mut self) -> bool {
        match self.peek().clone() {
            Tok::Ident(s) if s == "int" || s == "boolean" => true,
            Tok::Ident(s) if !RESERVED.contains(&s.as_str()) => {
                matches!(self.peek_at(1), Tok::Ident(n) if !RESERVED.contains(&n.as_str()))
            }
            _ => false,
        }
    }

    fn stmt_in_block(&mut self) -> Result<Vec<Stmt>, ParseError> {
        if self.starts_decl() {
            let ty = self.ty(false)?;
            let mut out = Vec::new();
            loop {
                let span = self.span();
                let name = self.ident()?;
                let init = if self.eat_punct("=") {
                    Some(self.expr()?)
                } else {
                    None
                };
                out.push(Stmt::at(
                    StmtKind::Decl {
                        ty: ty.clone(),
                        name,
                        init,
                    },
                    span,
                ));
                if !self.eat_punct(",") {
                    break;
                }
            }
            self.expect_punct(";")?;
            return Ok(out);
        }
        Ok(vec![self.stmt()?])
    }

    fn stmt(&mut self) -> Result<Stmt, ParseError> {
        let span = self.span();
        if self.starts_decl() {
            return self.err("a declaration is not allowed here; wrap it in a block");
        }
        if self.is_punct("{") {
            return self.block();
        }
        if self.eat_punct(";") {
            return Ok(Stmt::at(StmtKind::Empty, span));
        }
        if self.eat_kw("if") {
            self.expect_punct("(")?;
            let cond = self.expr()?;
            self.expect_punct(")")?;
            let then_branch = Box::new(self.stmt()?);
            let else_branch = if self.eat_kw("else") {
                Some(Box::new(self.stmt()?))
            } else {
                None
            };
            return Ok(Stmt::at(
                StmtKind::If {
                    cond,
                    then_branch,
                    else_branch,
                },
                span,
            ));
        }
        if self.eat_kw("while") {
            self.expect_punct("(")?;
            let cond = self.expr()?;
            self.expect_punct(")")?;
            let body = Box::new(self.stmt()?);
            return Ok(Stmt::at(StmtKind::While { cond, body }, span));
        }
        if self.eat_kw("break") {
            self.expect_punct(";")?;
            return Ok(Stmt::at(StmtKind::Break, span));
        }
        if self.eat_kw("continue") {
            self.expect_punct(";")?;
            return Ok(Stmt::at(StmtKind::Continue, span));
        }
        if self.eat_kw("return") {
            let value = if self.is_punct(";") {
                None
            } else {
                Some(self.expr()?)
            };
            self.expect_punct(";")?;
            return Ok(Stmt::at(StmtKind::Return(value), span));
        }
        if self.is_kw("System")
            && matches!(self.peek_at(1), Tok::Punct("."))
            && matches!(self.peek_at(2), Tok::Ident(s) if s == "out")
        {
            self.advance();
            self.expect_punct(".")?;
            self.expect_kw("out")?;
            self.expect_punct(".")?;
            self.expect_kw("println")?;
            self.expect_punct("(")?;
            let e = self.expr()?;
            self.expect_punct(")")?;
            self.expect_punct(";")?;
            return Ok(Stmt::at(StmtKind::Print(e), span));
        }
        for (op, binop) in [("++", BinOp::Add), ("--", BinOp::Sub)] {
            if self.eat_punct(op) {
                let target = self.unary()?;
                self.expect_punct(";")?;
                return self.desugar_step(target, binop, span);
            }
        }
        let e = self.expr()?;
        if self.eat_punct("=") {
            let value = self.expr()?;
            self.expect_punct(";")?;
            self.check_target(&e)?;
            return Ok(Stmt::at(StmtKind::Assign { target: e, value }, span));
        }
        for (op, binop) in [
            ("+=", BinOp::Add),
            ("-=", BinOp::Sub),
            ("*=", BinOp::Mul),
            ("/=", BinOp::Div),
            ("%=", BinOp::Rem),
        ] {
            if self.eat_punct(op) {
                let rhs = self.expr()?;
                self.expect_punct(";")?;
                self.check_target(&e)?;
                let value = Expr::at(
                    bin(binop, e.clone(), rhs),
                    span,
                );
                return Ok(Stmt::at(StmtKind::Assign { target: e, value }, span));
            }
        }
        for (op, binop) in [("++", BinOp::Add), ("--", BinOp::Sub)] {
            if self.eat_punct(op) {
                self.expect_punct(";")?;
                return self.desugar_step(e, binop, span);
            }
        }
        self.expect_punct(";")?;
        Ok(Stmt::at(StmtKind::Expr(e), span))
    }

    fn desugar_step(&mut self, target: Expr, op: BinOp, span: Span) -> Result<Stmt, ParseError> {
        self.check_target(&target)?;
        let one = Expr::at(ExprKind::Int(BigInt::from(1)), span);
        let value = Expr::at(bin(op, target.clone(), one), span);
        Ok(Stmt::at(StmtKind::Assign { target, value }, span))
    }

    fn check_target(&mut self, e: &Expr) -> Result<(), ParseError> {
        fn is_path(e: &Expr) -> bool {
            match &e.kind {
                ExprKind::Name(_) | ExprKind::This => true,
                ExprKind::Field(inner, _) => is_path(inner),
                _ => false,
            }
        }
        match &e.kind {
            ExprKind::Name(_) => Ok(()),
            ExprKind::Field(inner, _) if is_path(inner) => Ok(()),
            _ => Err(ParseError::new(e.span, "invalid assignment target")),
        }
    }

    pub fn expr(&mut self) -> Result<Expr, ParseError> {
        self.binary(1)
    }

    fn peek_binop(&mut self) -> Option<BinOp> {
        let op = match self.peek() {
            Tok::Punct(p) => *p,
            _ => return None,
        };
        Some(match op {
            "||" => BinOp::Or,
            "&&" => BinOp::And,
            "==" => BinOp::Eq,
            "!=" => BinOp::Ne,
            "<" => BinOp::Lt,
            "<=" => BinOp::Le,
            ">" => BinOp::Gt,
            ">=" => BinOp::Ge,
            "+" => BinOp::Add,
            "-" => BinOp::Sub,
            "*" => BinOp::Mul,
            "/" => BinOp::Div,
            "%" => BinOp::Rem,
            _ => return None,
        })
    }

    fn binary(&mut self, min_prec: u8) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.peek_binop() {
            if op.precedence() < min_prec {
                break;
            }
            let span = self.span();
            self.advance();
            let rhs = self.binary(op.precedence() + 1)?;
            lhs = Expr::at(bin(op, lhs, rhs), span);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        let span = self.span();
        if self.eat_punct("-") {
            let inner = self.unary()?;
            if let ExprKind::Int(n) = &inner.kind {
                return Ok(Expr::at(ExprKind::Int(-n.clone()), span));
            }
            return Ok(Expr::at(ExprKind::Unary(UnOp::Neg, Box::new(inner)), span));
        }
        if self.eat_punct("!") {
            let inner = self.unary()?;
            return Ok(Expr::at(ExprKind::Unary(UnOp::Not, Box::new(inner)), span));
        }
        self.postfix()
    }

    fn postfix(&mut self) -> Result<Expr, ParseError> {
        let mut e = self.primary()?;
        loop {
            if !self.is_punct(".") {
                break;
            }
            let span = self.span();
            self.advance();
            let name = self.ident()?;
            if self.is_punct("(") {
                let args = self.args()?;
                e = Expr::at(
                    ExprKind::Call {
                        recv: Some(Box::new(e)),
                        method: name,
                        args,
                    },
                    span,
                );
            } else {
                e = Expr::at(ExprKind::Field(Box::new(e), name), span);
            }
        }
        Ok(e)
    }

    fn args(&mut self) -> Result<Vec<Expr>, ParseError> {
        self.expect_punct("(")?;
        let mut args = Vec::new();
        if self.eat_punct(")") {
            return Ok(args);
        }
        loop {
            args.push(self.expr()?);
            if !self.eat_punct(",") {
                break;
            }
        }
        self.expect_punct(")")?;
        Ok(args)
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        let span = self.span();
        match self.peek().clone() {
            Tok::Int(n) => {
                self.advance();
                Ok(Expr::at(ExprKind::Int(n), span))
            }
            Tok::Punct("(") => {
                self.advance();
                let e = self.expr()?;
                self.expect_punct(")")?;
                Ok(e)
            }
            Tok::Ident(s) => match s.as_str() {
                "true" | "false" => {
                    self.advance();
                    Ok(Expr::at(ExprKind::Bool(s == "true"), span))
                }
                "null" => {
                    self.advance();
                    Ok(Expr::at(ExprKind::Null, span))
                }
                "this" => {
                    self.advance();
                    Ok(Expr::at(ExprKind::This, span))
                }
                "new" => {
                    self.advance();
                    let class = self.ident()?;
                    let args = self.args()?;
                    Ok(Expr::at(ExprKind::New { class, args }, span))
                }
                _ => {
                    let name = self.ident()?;
                    if self.is_punct("(") {
                        let args = self.args()?;
                        Ok(Expr::at(
                            ExprKind::Call {
                                recv: None,
                                method: name,
                                args,
                            },
                            span,
                        ))
                    } else {
                        Ok(Expr::at(ExprKind::Name(name), span))
                    }
                }
            },
            other => self.err(format!("expected an expression, found {}", describe(&other))),
        }
    }
}

fn bin(op: BinOp, l: Expr, r: Expr) -> ExprKind {
    ExprKind::Binary(op, Box::new(l), Box::new(r))
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Int(n) => format!("`{n}`"),
        Tok::Punct(p) => format!("`{p}`"),
        Tok::Annotation(_) => "annotation".to_string(),
        Tok::Eof => "end of input".to_string(),
    }
}
