//! Exhaustive non-interference check over a finite input domain: every pair
//! of runs whose inputs agree on the `Low` inputs must agree on every `Low`
//! variable and on the output.

use crate::concrete_sem::{low_differences, low_equal, run_concrete_with, FinalState, Limits, RunError, Value};
use crate::par;
use crate::syntax::{NIPolicy, Program, Type};
use num_bigint::BigInt;
use std::fmt;

pub const DEFAULT_CAP: usize = 100_000;

/// Candidate values for each declared input, in declaration order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputDomain {
    pub values: Vec<Vec<Value>>,
}

impl InputDomain {
    /// Integers `-2..=3`, booleans both ways.
    pub fn default_for(program: &Program) -> InputDomain {
        InputDomain::int_range(program, -2, 3)
    }

    pub fn int_range(program: &Program, lo: i64, hi: i64) -> InputDomain {
        InputDomain {
            values: program
                .inputs
                .iter()
                .map(|i| match i.ty {
                    Type::Bool => vec![Value::Bool(false), Value::Bool(true)],
                    _ => (lo..=hi).map(|n| Value::Int(BigInt::from(n))).collect(),
                })
                .collect(),
        }
    }

    /// Number of input vectors, saturating.
    pub fn size(&self) -> usize {
        self.values.iter().fold(1usize, |acc, v| acc.saturating_mul(v.len()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OracleError {
    #[error("input domain has {size} points, over the cap of {cap}")]
    DomainCap { size: usize, cap: usize },
    #[error("input `{0}` has an empty domain")]
    EmptyDomain(String),
    #[error("domain does not match the program's {0} inputs")]
    Arity(usize),
}

/// Two runs from `Low`-equal inputs that an observer can tell apart.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Witness {
    pub first: Vec<(String, Value)>,
    pub second: Vec<(String, Value)>,
    /// `Low` variables that differ; `<output>` if the printed output does.
    pub differences: Vec<String>,
}

impl fmt::Display for Witness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let show = |v: &[(String, Value)]| v.iter().map(|(n, x)| format!("{n}={x}")).collect::<Vec<_>>().join(", ");
        write!(f, "({}) vs ({}) differ on {}", show(&self.first), show(&self.second), self.differences.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OracleVerdict {
    NonInterferent,
    Interferent(Witness),
}

impl OracleVerdict {
    pub fn is_interferent(&self) -> bool {
        matches!(self, OracleVerdict::Interferent(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleReport {
    pub verdict: OracleVerdict,
    pub runs: usize,
    /// Pairs compared.
    pub pairs: usize,
    /// Runs that hit the step limit or a runtime fault; these are left out
    /// of every pair, since only terminating runs are compared.
    pub skipped: usize,
}

pub fn brute_force_ni(program: &Program, policy: &NIPolicy, domain: &InputDomain) -> Result<OracleReport, OracleError> {
    brute_force_ni_with(program, policy, domain, DEFAULT_CAP, Limits::default())
}

pub fn brute_force_ni_with(
    program: &Program,
    policy: &NIPolicy,
    domain: &InputDomain,
    cap: usize,
    limits: Limits,
) -> Result<OracleReport, OracleError> {
    if domain.values.len() != program.inputs.len() {
        return Err(OracleError::Arity(program.inputs.len()));
    }
    if let Some(i) = domain.values.iter().position(|v| v.is_empty()) {
        return Err(OracleError::EmptyDomain(program.inputs[i].name.clone()));
    }
    let size = domain.size();
    if size > cap {
        return Err(OracleError::DomainCap { size, cap });
    }
    let low: Vec<usize> = (0..policy.inputs.len()).filter(|&i| policy.inputs[i].is_low()).collect();
    let high: Vec<usize> = (0..policy.inputs.len()).filter(|&i| !policy.inputs[i].is_low()).collect();
    let bases = product(&low, domain);
    let highs = product(&high, domain);

    // Every input vector, base-major, high points in lexicographic order.
    let mut points = Vec::with_capacity(size);
    for b in &bases {
        for h in &highs {
            let mut v = vec![Value::Null; program.inputs.len()];
            for (k, &i) in low.iter().enumerate() {
                v[i] = b[k].clone();
            }
            for (k, &i) in high.iter().enumerate() {
                v[i] = h[k].clone();
            }
            points.push(v);
        }
    }
    let results: Vec<Option<FinalState>> = par::map(&points, |v| match run_concrete_with(program, v, limits) {
        Ok(s) => Some(s),
        Err(RunError::StepLimit(_) | RunError::Fault { .. }) => None,
        Err(e) => panic!("oracle input rejected: {e}"),
    });
    let skipped = results.iter().filter(|r| r.is_none()).count();

    let n = highs.len();
    let mut pairs = 0;
    let mut best: Option<(usize, usize)> = None;
    for b in 0..bases.len() {
        'base: for i in 0..n {
            let Some(x) = &results[b * n + i] else { continue };
            for j in i + 1..n {
                let Some(y) = &results[b * n + j] else { continue };
                pairs += 1;
                if !low_equal(x, y, policy) {
                    let cand = (b * n + i, b * n + j);
                    if best.is_none_or(|(p, q)| (&points[cand.0], &points[cand.1]) < (&points[p], &points[q])) {
                        best = Some(cand);
                    }
                    break 'base;
                }
            }
        }
    }
    let name = |v: &[Value]| -> Vec<(String, Value)> {
        program.inputs.iter().zip(v).map(|(i, x)| (i.name.clone(), x.clone())).collect()
    };
    let verdict = match best {
        None => OracleVerdict::NonInterferent,
        Some((p, q)) => {
            let (x, y) = (results[p].as_ref().unwrap(), results[q].as_ref().unwrap());
            let mut differences = low_differences(x, y, policy);
            if x.out != y.out {
                differences.push("<output>".into());
            }
            OracleVerdict::Interferent(Witness {
                first: name(&points[p]),
                second: name(&points[q]),
                differences,
            })
        }
    };
    Ok(OracleReport {
        verdict,
        runs: points.len(),
        pairs,
        skipped,
    })
}

/// All combinations of the domains of `inputs`, lexicographic.
fn product(inputs: &[usize], domain: &InputDomain) -> Vec<Vec<Value>> {
    let mut out = vec![Vec::new()];
    for &i in inputs {
        out = out
            .into_iter()
            .flat_map(|p| {
                domain.values[i].iter().map(move |v| {
                    let mut q = p.clone();
                    q.push(v.clone());
                    q
                })
            })
            .collect();
    }
    out
}
