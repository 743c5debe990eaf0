//! The standard semantics: real values, no labels.

use crate::machine::{step_limit_from_env, Code, Config, Domain, Fault, ObjId, Ref, Rule, Truth};
use crate::syntax::{BinOp, NIPolicy, Program, Type, UnOp};
use num_bigint::BigInt;
use num_traits::Zero;
use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Value {
    Int(BigInt),
    Bool(bool),
    Null,
    Obj(ObjId),
}

impl Value {
    fn as_int(&self) -> &BigInt {
        match self {
            Value::Int(n) => n,
            v => panic!("expected an int, found {v:?}"),
        }
    }

    fn as_bool(&self) -> bool {
        match self {
            Value::Bool(b) => *b,
            v => panic!("expected a boolean, found {v:?}"),
        }
    }

    pub fn parse(text: &str, ty: &Type) -> Option<Value> {
        match ty {
            Type::Int => text.trim().parse().ok().map(Value::Int),
            Type::Bool => match text.trim() {
                "true" => Some(Value::Bool(true)),
                "false" => Some(Value::Bool(false)),
                _ => None,
            },
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(n) => write!(f, "{n}"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Null => f.write_str("null"),
            Value::Obj(id) => write!(f, "obj#{id}"),
        }
    }
}

impl Domain for Value {
    const RECORD_OUTPUT: bool = true;

    fn int(n: &BigInt) -> Self {
        Value::Int(n.clone())
    }

    fn bool(b: bool) -> Self {
        Value::Bool(b)
    }

    fn null() -> Self {
        Value::Null
    }

    fn obj(id: ObjId) -> Self {
        Value::Obj(id)
    }

    fn reference(&self) -> Ref {
        match self {
            Value::Null => Ref::Null,
            Value::Obj(id) => Ref::Obj(*id),
            _ => Ref::Scalar,
        }
    }

    fn unop(op: UnOp, a: &Self) -> Self {
        match op {
            UnOp::Neg => Value::Int(-a.as_int()),
            UnOp::Not => Value::Bool(!a.as_bool()),
        }
    }

    fn binop(op: BinOp, a: &Self, b: &Self) -> Result<Self, Fault> {
        Ok(match op {
            BinOp::Add => Value::Int(a.as_int() + b.as_int()),
            BinOp::Sub => Value::Int(a.as_int() - b.as_int()),
            BinOp::Mul => Value::Int(a.as_int() * b.as_int()),
            // BigInt division truncates toward zero, as in Java.
            BinOp::Div | BinOp::Rem => {
                if b.as_int().is_zero() {
                    return Err(Fault::DivisionByZero);
                }
                if op == BinOp::Div {
                    Value::Int(a.as_int() / b.as_int())
                } else {
                    Value::Int(a.as_int() % b.as_int())
                }
            }
            BinOp::Lt => Value::Bool(a.as_int() < b.as_int()),
            BinOp::Le => Value::Bool(a.as_int() <= b.as_int()),
            BinOp::Gt => Value::Bool(a.as_int() > b.as_int()),
            BinOp::Ge => Value::Bool(a.as_int() >= b.as_int()),
            BinOp::Eq => Value::Bool(a == b),
            BinOp::Ne => Value::Bool(a != b),
            BinOp::And => Value::Bool(a.as_bool() && b.as_bool()),
            BinOp::Or => Value::Bool(a.as_bool() || b.as_bool()),
        })
    }

    fn truth(&self) -> Truth {
        if self.as_bool() {
            Truth::True
        } else {
            Truth::False
        }
    }
}

pub type ConcreteConfig = Config<Value>;

/// What an observer sees of a final variable. Object identities are not
/// observable, only whether a reference is null.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Observed {
    Int(BigInt),
    Bool(bool),
    Null,
    Object,
}

impl From<&Value> for Observed {
    fn from(v: &Value) -> Observed {
        match v {
            Value::Int(n) => Observed::Int(n.clone()),
            Value::Bool(b) => Observed::Bool(*b),
            Value::Null => Observed::Null,
            Value::Obj(_) => Observed::Object,
        }
    }
}

impl fmt::Display for Observed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Observed::Int(n) => write!(f, "{n}"),
            Observed::Bool(b) => write!(f, "{b}"),
            Observed::Null => f.write_str("null"),
            Observed::Object => f.write_str("<object>"),
        }
    }
}

/// Final state of a run: every observable variable (absent when its path
/// crosses a null reference) and the printed output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FinalState {
    pub vars: Vec<(String, Option<Observed>)>,
    pub out: Vec<Value>,
    pub steps: u64,
}

impl FinalState {
    pub fn get(&self, name: &str) -> Option<&Observed> {
        self.vars.iter().find(|(n, _)| n == name).and_then(|(_, v)| v.as_ref())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RunError {
    #[error("runtime fault after {steps} steps: {fault}")]
    Fault { fault: Fault, steps: u64 },
    #[error("step limit of {0} exceeded")]
    StepLimit(u64),
    #[error("missing value for input `{0}`")]
    MissingInput(String),
    #[error("unknown input `{0}`")]
    UnknownInput(String),
    #[error("value `{value}` does not fit input `{name}` of type {ty}")]
    BadInput { name: String, value: String, ty: Type },
}

/// Runner options.
#[derive(Debug, Clone, Copy)]
pub struct Limits {
    pub steps: u64,
}

impl Default for Limits {
    fn default() -> Limits {
        Limits {
            steps: step_limit_from_env(),
        }
    }
}

/// Orders `name=value` pairs by the program's input declarations.
pub fn inputs_from_pairs(program: &Program, pairs: &[(String, String)]) -> Result<Vec<Value>, RunError> {
    for (name, _) in pairs {
        if program.input_index(name).is_none() {
            return Err(RunError::UnknownInput(name.clone()));
        }
    }
    program
        .inputs
        .iter()
        .map(|i| {
            let (_, text) = pairs
                .iter()
                .rev()
                .find(|(n, _)| *n == i.name)
                .ok_or_else(|| RunError::MissingInput(i.name.clone()))?;
            Value::parse(text, &i.ty).ok_or_else(|| RunError::BadInput {
                name: i.name.clone(),
                value: text.clone(),
                ty: i.ty.clone(),
            })
        })
        .collect()
}

pub fn initial_concrete(code: &Code<'_>, inputs: &[Value]) -> ConcreteConfig {
    Config::initial(code, inputs, false)
}

pub fn step_concrete(cfg: &mut ConcreteConfig, code: &Code<'_>) -> Result<Rule, Fault> {
    cfg.step(code, None)
}

/// Runs a configuration to completion.
pub(crate) fn drive(cfg: &mut ConcreteConfig, code: &Code<'_>, limits: Limits) -> Result<u64, RunError> {
    let mut steps = 0u64;
    while !cfg.is_final() {
        if steps >= limits.steps {
            return Err(RunError::StepLimit(limits.steps));
        }
        cfg.step(code, None).map_err(|fault| RunError::Fault { fault, steps })?;
        steps += 1;
    }
    Ok(steps)
}

pub(crate) fn observe(cfg: &ConcreteConfig, policy: &NIPolicy) -> Vec<(String, Option<Observed>)> {
    policy
        .paths
        .iter()
        .map(|p| (p.name.clone(), cfg.path_cell(p.root, &p.fields).map(|(v, _)| v.into())))
        .collect()
}

pub fn run_concrete(program: &Program, inputs: &[Value]) -> Result<FinalState, RunError> {
    run_concrete_with(program, inputs, Limits::default())
}

pub fn run_concrete_with(program: &Program, inputs: &[Value], limits: Limits) -> Result<FinalState, RunError> {
    let policy = NIPolicy::all_low(program);
    let code = Code::new(program, &policy);
    let mut cfg = initial_concrete(&code, inputs);
    let steps = drive(&mut cfg, &code, limits)?;
    Ok(FinalState {
        vars: observe(&cfg, &policy),
        out: cfg.out.iter().map(|v| v.v.clone()).collect(),
        steps,
    })
}

/// Two final states agree on every `Low` variable and on the output.
pub fn low_equal(a: &FinalState, b: &FinalState, policy: &NIPolicy) -> bool {
    a.out == b.out && low_vars_equal(a, b, policy)
}

pub fn low_vars_equal(a: &FinalState, b: &FinalState, policy: &NIPolicy) -> bool {
    policy
        .paths
        .iter()
        .zip(a.vars.iter().zip(&b.vars))
        .all(|(p, ((_, x), (_, y)))| !p.label.is_low() || x == y)
}

/// Two initial states (input vectors) agree on every `Low` input.
pub fn low_equal_inputs(a: &[Value], b: &[Value], policy: &NIPolicy) -> bool {
    policy
        .inputs
        .iter()
        .zip(a.iter().zip(b))
        .all(|(l, (x, y))| !l.is_low() || x == y)
}

/// `Low` variables on which two final states disagree.
pub fn low_differences(a: &FinalState, b: &FinalState, policy: &NIPolicy) -> Vec<String> {
    policy
        .paths
        .iter()
        .zip(a.vars.iter().zip(&b.vars))
        .filter(|(p, ((_, x), (_, y)))| p.label.is_low() && x != y)
        .map(|(p, _)| p.name.clone())
        .collect()
}
