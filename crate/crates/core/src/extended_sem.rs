//! The information-flow extended semantics: the concrete machine with
//! labeled values, a context label and context restoration.

use crate::concrete_sem::{drive, observe, ConcreteConfig, FinalState, Limits, Observed, RunError, Value};
use crate::labels::{Label, StoredLabel};
use crate::machine::{Code, Config, Item, LoopEntry, Rule};
use crate::syntax::{NIPolicy, Program};
use std::fmt;

pub type ExtConfig = Config<Value>;

/// Outcome of checking one run (or the abstract search) against the policy:
/// every `Low` variable must end labeled exactly `Low`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail { witnesses: Vec<(String, StoredLabel)> },
}

impl Verdict {
    pub fn is_pass(&self) -> bool {
        *self == Verdict::Pass
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Pass => f.write_str("Pass"),
            Verdict::Fail { witnesses } => {
                f.write_str("Fail (")?;
                for (i, (name, l)) in witnesses.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{name} = {l}")?;
                }
                f.write_str(")")
            }
        }
    }
}

/// Final labeled state of an extended run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExtFinalState {
    pub vars: Vec<(String, Option<(Observed, StoredLabel)>)>,
    pub out: Vec<(Value, Label)>,
    pub steps: u64,
}

impl ExtFinalState {
    pub fn label(&self, name: &str) -> Option<StoredLabel> {
        self.vars
            .iter()
            .find(|(n, _)| n == name)
            .and_then(|(_, v)| v.as_ref().map(|(_, l)| *l))
    }

    /// Printed values whose label is not `Low`.
    pub fn warnings(&self) -> Vec<String> {
        self.out
            .iter()
            .enumerate()
            .filter(|(_, (_, l))| !l.is_low())
            .map(|(i, (v, l))| format!("output #{} ({v}) is labeled {l}", i + 1))
            .collect()
    }

    pub fn erase(&self) -> FinalState {
        FinalState {
            vars: self
                .vars
                .iter()
                .map(|(n, v)| (n.clone(), v.as_ref().map(|(o, _)| o.clone())))
                .collect(),
            out: self.out.iter().map(|(v, _)| v.clone()).collect(),
            steps: self.steps,
        }
    }
}

pub fn initial_extended(code: &Code<'_>, inputs: &[Value]) -> ExtConfig {
    Config::initial(code, inputs, true)
}

pub fn step_extended(cfg: &mut ExtConfig, code: &Code<'_>) -> Result<Rule, crate::machine::Fault> {
    cfg.step(code, None)
}

/// Checks the final store of any labeled configuration against the policy.
pub fn final_verdict<V: crate::machine::Domain>(cfg: &Config<V>, policy: &NIPolicy) -> Verdict {
    let witnesses: Vec<_> = policy
        .paths
        .iter()
        .filter(|p| p.label.is_low())
        .filter_map(|p| {
            let (_, sl) = cfg.path_cell(p.root, &p.fields)?;
            (*sl != StoredLabel::Low).then(|| (p.name.clone(), *sl))
        })
        .collect();
    if witnesses.is_empty() {
        Verdict::Pass
    } else {
        Verdict::Fail { witnesses }
    }
}

fn finish(cfg: &ExtConfig, policy: &NIPolicy, steps: u64) -> (ExtFinalState, Verdict) {
    let vars = policy
        .paths
        .iter()
        .map(|p| {
            (
                p.name.clone(),
                cfg.path_cell(p.root, &p.fields).map(|(v, sl)| (v.into(), *sl)),
            )
        })
        .collect();
    let state = ExtFinalState {
        vars,
        out: cfg.out.iter().map(|v| (v.v.clone(), v.l)).collect(),
        steps,
    };
    (state, final_verdict(cfg, policy))
}

pub fn run_extended(program: &Program, policy: &NIPolicy, inputs: &[Value]) -> Result<(ExtFinalState, Verdict), RunError> {
    run_extended_with(program, policy, inputs, Limits::default())
}

pub fn run_extended_with(
    program: &Program,
    policy: &NIPolicy,
    inputs: &[Value],
    limits: Limits,
) -> Result<(ExtFinalState, Verdict), RunError> {
    let code = Code::new(program, policy);
    let mut cfg = initial_extended(&code, inputs);
    let steps = drive(&mut cfg, &code, limits)?;
    Ok(finish(&cfg, policy, steps))
}

/// Runs and records one line per step: `<step#> <rule-name> CL=<label>`,
/// with the context label after the step.
pub fn trace_extended(
    program: &Program,
    policy: &NIPolicy,
    inputs: &[Value],
    limits: Limits,
) -> Result<(Vec<String>, ExtFinalState, Verdict), RunError> {
    let code = Code::new(program, policy);
    let mut cfg = initial_extended(&code, inputs);
    let mut lines = Vec::new();
    let mut steps = 0u64;
    while !cfg.is_final() {
        if steps >= limits.steps {
            return Err(RunError::StepLimit(limits.steps));
        }
        let rule = cfg.step(&code, None).map_err(|fault| RunError::Fault { fault, steps })?;
        steps += 1;
        lines.push(format!("{steps} {} CL={}", rule.name(), cfg.cl));
    }
    let (state, verdict) = finish(&cfg, policy, steps);
    Ok((lines, state, verdict))
}

/// Drops all labels and context-restore items, giving the configuration
/// the standard semantics would be in.
pub fn erase(cfg: &ExtConfig) -> ConcreteConfig {
    fn items(k: &[Item<Value>]) -> Vec<Item<Value>> {
        k.iter()
            .filter(|i| !matches!(i, Item::Restore(_)))
            .map(|i| crate::machine::map_item(i, &|v| crate::machine::LVal::new(v.v.clone(), Label::Low)))
            .map(|i| match i {
                Item::ScJoin(..) => Item::ScJoin(Label::Low, Label::Low),
                i => i,
            })
            .collect()
    }
    fn loops(k: &[Item<Value>], lstack: &[LoopEntry]) -> Vec<LoopEntry> {
        lstack
            .iter()
            .map(|e| LoopEntry {
                stmt: e.stmt,
                depth: k[..e.depth].iter().filter(|i| !matches!(i, Item::Restore(_))).count(),
                locals: e.locals.clone(),
            })
            .collect()
    }
    Config {
        k: items(&cfg.k),
        locals: cfg.locals.clone(),
        this: cfg.this,
        store: cfg
            .store
            .iter()
            .map(|c| c.as_ref().map(|(v, _)| (v.clone(), StoredLabel::Low)))
            .collect(),
        heap: cfg.heap.clone(),
        lstack: loops(&cfg.k, &cfg.lstack),
        fstack: cfg
            .fstack
            .iter()
            .map(|f| crate::machine::Frame {
                k: items(&f.k),
                locals: f.locals.clone(),
                this: f.this,
                lstack: loops(&f.k, &f.lstack),
                cl: Label::Low,
            })
            .collect(),
        cl: Label::Low,
        labeled: false,
        out: cfg
            .out
            .iter()
            .map(|v| crate::machine::LVal::new(v.v.clone(), Label::Low))
            .collect(),
    }
}

/// Whether every location initially labeled `Low` only ever holds `Low` or
/// `Low >> High`, and every location initially `High` only `High` or
/// `High >> Low`.
pub fn labels_consistent(initial: &[Option<StoredLabel>], cfg: &ExtConfig) -> bool {
    initial.iter().zip(&cfg.store).all(|(init, cell)| match (init, cell) {
        (Some(StoredLabel::Low), Some((_, l))) => matches!(l, StoredLabel::Low | StoredLabel::LowToHigh),
        (Some(StoredLabel::High), Some((_, l))) => matches!(l, StoredLabel::High | StoredLabel::HighToLow),
        _ => true,
    })
}

/// Runs the extended and standard machines side by side, asserting that
/// erasing labels commutes with stepping. Returns the number of steps.
pub fn lockstep(program: &Program, policy: &NIPolicy, inputs: &[Value], limits: Limits) -> Result<u64, String> {
    let code = Code::new(program, policy);
    let plain = Code::new(program, &NIPolicy::all_low(program));
    let mut ext = initial_extended(&code, inputs);
    let mut conc = crate::concrete_sem::initial_concrete(&plain, inputs);
    if erase(&ext) != conc {
        return Err("initial configurations differ after erasure".into());
    }
    let initial: Vec<Option<StoredLabel>> = ext.store.iter().map(|c| c.as_ref().map(|(_, l)| *l)).collect();
    let mut steps = 0;
    while !ext.is_final() {
        if steps >= limits.steps {
            return Err(format!("step limit of {} exceeded", limits.steps));
        }
        steps += 1;
        let rule = step_extended(&mut ext, &code).map_err(|f| format!("extended fault: {f}"))?;
        if !labels_consistent(&initial, &ext) {
            return Err(format!("step {steps}: stored label left its reachable set"));
        }
        if rule != Rule::Restore {
            let crule = crate::concrete_sem::step_concrete(&mut conc, &plain).map_err(|f| format!("concrete fault: {f}"))?;
            if crule != rule {
                return Err(format!("step {steps}: extended took {} but standard took {}", rule.name(), crule.name()));
            }
        }
        if erase(&ext) != conc {
            return Err(format!("step {steps} ({}): configurations diverge", rule.name()));
        }
    }
    if !conc.is_final() {
        return Err("standard run did not finish with the extended run".into());
    }
    Ok(steps)
}

/// Runs the standard semantics from the erasure of an extended start; used
/// to check value conservativity.
pub fn run_erased(program: &Program, inputs: &[Value], limits: Limits) -> Result<FinalState, RunError> {
    let policy = NIPolicy::all_low(program);
    let code = Code::new(program, &policy);
    let mut cfg = crate::concrete_sem::initial_concrete(&code, inputs);
    let steps = drive(&mut cfg, &code, limits)?;
    Ok(FinalState {
        vars: observe(&cfg, &policy),
        out: cfg.out.iter().map(|v| v.v.clone()).collect(),
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::{extract_policy, parse};
    use num_bigint::BigInt;

    fn int(n: i64) -> Value {
        Value::Int(BigInt::from(n))
    }

    fn run(src: &str, inputs: &[Value]) -> (ExtFinalState, Verdict) {
        let p = parse(src).unwrap();
        let pol = extract_policy(&p).unwrap();
        run_extended(&p, &pol, inputs).unwrap()
    }

    #[test]
    fn high_read_under_low_context() {
        let (s, v) = run(
            "class C { static int h; //@ setLabel(h, High);\n static int l; static void main() { l = h; } }",
            &[],
        );
        assert_eq!(s.label("l"), Some(StoredLabel::LowToHigh));
        assert!(!v.is_pass());
    }

    #[test]
    fn context_is_restored_after_conditional() {
        let src = "class C { static int h; //@ setLabel(h, High);\n static int l; static int t;
            static void main() { if (h > 0) t = 1; else t = 2; l = 5; } }";
        let p = parse(src).unwrap();
        let pol = extract_policy(&p).unwrap();
        let (lines, s, _) = trace_extended(&p, &pol, &[], Limits::default()).unwrap();
        assert_eq!(s.label("l"), Some(StoredLabel::Low));
        assert_eq!(s.label("t"), Some(StoredLabel::LowToHigh));
        assert!(lines.iter().any(|l| l.ends_with("restore CL=Low")));
        assert!(lines.iter().any(|l| l.contains("if-then CL=High") || l.contains("if-else CL=High")));
    }

    #[test]
    fn revert_row_clears_temporary_breach() {
        let (s, v) = run(
            "class C { static int h; //@ setLabel(h, High);\n static int l; static void main() { l = h; l = 2; } }",
            &[],
        );
        assert_eq!(s.label("l"), Some(StoredLabel::Low));
        assert!(v.is_pass());
    }

    #[test]
    fn downgraded_location_reads_low() {
        // A High location overwritten with Low data carries High >> Low and
        // reads as Low, so copying it into a public variable is not flagged.
        let (s, v) = run(
            "class C { static int h; //@ setLabel(h, High);\n static int l; static void main() { h = 3; l = h; } }",
            &[],
        );
        assert_eq!(s.label("h"), Some(StoredLabel::HighToLow));
        assert_eq!(s.label("l"), Some(StoredLabel::Low));
        assert!(v.is_pass());
    }

    #[test]
    fn break_keeps_raised_context() {
        let src = "class T { static int low = 0, high; //@ setLabel(high, High);
            static void main(int input) { //@ setLabel(input, High);
              high = input; int aux = 0;
              while (true) { high--; low++; if (high == 0) break; } } }";
        let p = parse(src).unwrap();
        let pol = extract_policy(&p).unwrap();
        let (s, v) = run_extended(&p, &pol, &[int(2)]).unwrap();
        assert_eq!(s.label("low"), Some(StoredLabel::LowToHigh));
        assert!(!v.is_pass());
    }

    #[test]
    fn println_label_is_a_warning_only() {
        let (s, v) = run(
            "class C { static int h; //@ setLabel(h, High);\n static void main() { System.out.println(h > 0); } }",
            &[],
        );
        assert!(v.is_pass());
        assert_eq!(s.warnings().len(), 1);
    }

    #[test]
    fn call_context_is_restored_and_result_keeps_label() {
        let src = "class C { static int h; //@ setLabel(h, High);\n static int l; static int r;
            static int f(int a) { if (a > 0) return 1; return 0; }
            static void main() { r = f(h); l = 1; } }";
        let (s, _) = run(src, &[]);
        assert_eq!(s.label("r"), Some(StoredLabel::LowToHigh));
        assert_eq!(s.label("l"), Some(StoredLabel::Low));
    }

    #[test]
    fn erase_of_initial_is_concrete_initial() {
        let p = parse("class T { static int low = 0, high; //@ setLabel(high, High);\n static void main(int input) { high = input; while (high > 0) { high--; low++; } } }").unwrap();
        let pol = extract_policy(&p).unwrap();
        let code = Code::new(&p, &pol);
        let plain = Code::new(&p, &NIPolicy::all_low(&p));
        assert_eq!(
            erase(&initial_extended(&code, &[int(2)])),
            crate::concrete_sem::initial_concrete(&plain, &[int(2)])
        );
        assert!(lockstep(&p, &pol, &[int(2)], Limits::default()).is_ok());
    }
}
