//! Non-interference policies read from `setLabel` annotations.

use super::ast::*;
use super::Program;
use crate::labels::Label;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt;

/// A labelable variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum VarTarget {
    Input(usize),
    Static(usize),
    /// Instance field `field` (index into the class's `fields`) of every
    /// object of class `class`.
    Field { class: usize, field: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PolicyError {
    #[error("{span}: annotation names undeclared variable `{name}`")]
    Undeclared { name: String, span: Span },
    #[error("{span}: annotation label `{label}` is not Low or High")]
    BadLabel { label: String, span: Span },
    #[error("{span}: `{name}` is labeled both Low and High")]
    Conflict { name: String, span: Span },
}

/// A variable visible at the end of a run: a static field, or an instance
/// field reached from a static root by following declared field types.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObsPath {
    /// Dotted source name, e.g. `a.balance`.
    pub name: String,
    pub root: usize,
    /// Object slots followed from the root.
    pub fields: Vec<usize>,
    pub label: Label,
}

/// Labels for every input and observable variable. Anything not annotated
/// is `Low`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NIPolicy {
    pub inputs: Vec<Label>,
    pub statics: Vec<Label>,
    /// Per class, per object slot.
    pub fields: Vec<Vec<Label>>,
    pub paths: Vec<ObsPath>,
    input_names: Vec<String>,
}

impl NIPolicy {
    /// The all-`Low` policy for a program.
    pub fn all_low(program: &Program) -> NIPolicy {
        let mut p = NIPolicy {
            inputs: vec![Label::Low; program.inputs.len()],
            statics: vec![Label::Low; program.statics.len()],
            fields: program
                .classes
                .iter()
                .map(|c| vec![Label::Low; c.instance_fields.len()])
                .collect(),
            paths: Vec::new(),
            input_names: program.inputs.iter().map(|i| i.name.clone()).collect(),
        };
        p.paths = observable_paths(program, &p);
        p
    }

    pub fn label(&self, target: VarTarget, program: &Program) -> Label {
        match target {
            VarTarget::Input(i) => self.inputs[i],
            VarTarget::Static(s) => self.statics[s],
            VarTarget::Field { class, field } => {
                let slot = program.classes[class].instance_slot(field).unwrap();
                self.fields[class][slot]
            }
        }
    }

    /// Labels keyed by source name: inputs first, then observable paths.
    pub fn entries(&self) -> Vec<(String, Label)> {
        self.input_names
            .iter()
            .cloned()
            .zip(self.inputs.iter().copied())
            .chain(self.paths.iter().map(|p| (p.name.clone(), p.label)))
            .collect()
    }

    pub fn get(&self, name: &str) -> Option<Label> {
        self.entries().into_iter().find(|(n, _)| n == name).map(|(_, l)| l)
    }

    pub fn high_inputs(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.inputs.len()).filter(|&i| self.inputs[i] == Label::High)
    }

    /// Canonical text used for hashing.
    pub fn canonical(&self) -> String {
        let mut out = String::new();
        for (i, l) in self.inputs.iter().enumerate() {
            out.push_str(&format!("input {} {l}\n", self.input_names[i]));
        }
        for (s, l) in self.statics.iter().enumerate() {
            out.push_str(&format!("static {s} {l}\n"));
        }
        for (c, fs) in self.fields.iter().enumerate() {
            for (f, l) in fs.iter().enumerate() {
                out.push_str(&format!("field {c}.{f} {l}\n"));
            }
        }
        out
    }

    pub fn sha256(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }
}

impl fmt::Display for NIPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (name, l)) in self.entries().iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{name}: {l}")?;
        }
        f.write_str("}")
    }
}

/// Builds the policy from the program's `setLabel` annotations.
pub fn extract_policy(program: &Program) -> Result<NIPolicy, PolicyError> {
    let mut policy = NIPolicy::all_low(program);
    let mut assigned: BTreeMap<VarTarget, Label> = BTreeMap::new();
    for a in &program.annotations {
        let name = a.path.join(".");
        let label: Label = a.label.parse().map_err(|_| PolicyError::BadLabel {
            label: a.label.clone(),
            span: a.span,
        })?;
        let target = resolve(program, &a.scope, &a.path).ok_or_else(|| PolicyError::Undeclared {
            name: name.clone(),
            span: a.span,
        })?;
        if let Some(prev) = assigned.insert(target, label) {
            if prev != label {
                return Err(PolicyError::Conflict { name, span: a.span });
            }
        }
    }
    for (target, label) in assigned {
        match target {
            VarTarget::Input(i) => policy.inputs[i] = label,
            VarTarget::Static(s) => policy.statics[s] = label,
            VarTarget::Field { class, field } => {
                let slot = program.classes[class].instance_slot(field).unwrap();
                policy.fields[class][slot] = label;
            }
        }
    }
    policy.paths = observable_paths(program, &policy);
    Ok(policy)
}

fn class_of(program: &Program, ty: &Type) -> Option<usize> {
    match ty {
        Type::Class(name) => program.class_index(name),
        _ => None,
    }
}

/// Resolves an annotation path. A bare name is tried as an input of `main`
/// (only inside `main` or outside any method), then as a field of the
/// enclosing class, then as a static field of any class. Longer paths start
/// at a static field or a class name and follow instance fields.
fn resolve(program: &Program, scope: &AnnotScope, path: &[String]) -> Option<VarTarget> {
    let enclosing = match scope {
        AnnotScope::Global => None,
        AnnotScope::Class(c) => Some(*c),
        AnnotScope::Method { class, .. } => Some(*class),
    };
    let in_main = match scope {
        AnnotScope::Method {
            class,
            method: MethodKey::Method(m),
        } => program.main == MethodRef { class: *class, method: *m },
        AnnotScope::Method { .. } => false,
        _ => true,
    };
    let (first, rest) = path.split_first()?;

    // Target and declared type of the first segment.
    let (target, ty) = 'first: {
        if rest.is_empty() && in_main {
            if let Some(i) = program.input_index(first) {
                break 'first (VarTarget::Input(i), None);
            }
        }
        if let Some(c) = enclosing {
            if let Some((fi, f)) = program.classes[c].field(first) {
                let t = if f.is_static {
                    VarTarget::Static(program.static_slot(first)?)
                } else {
                    VarTarget::Field { class: c, field: fi }
                };
                break 'first (t, Some(f.ty.clone()));
            }
        }
        if let Some(s) = program.static_slot(first) {
            break 'first (VarTarget::Static(s), Some(program.statics[s].ty.clone()));
        }
        if let Some(c) = program.class_index(first) {
            // `Class.staticField`
            let (next, after) = rest.split_first()?;
            let (_, f) = program.classes[c].field(next).filter(|(_, f)| f.is_static)?;
            let s = program.static_slot(next)?;
            if after.is_empty() {
                return Some(VarTarget::Static(s));
            }
            return follow(program, Some(f.ty.clone()), after);
        }
        return None;
    };
    if rest.is_empty() {
        return Some(target);
    }
    follow(program, ty, rest)
}

fn follow(program: &Program, ty: Option<Type>, rest: &[String]) -> Option<VarTarget> {
    let mut ty = ty?;
    let mut target = None;
    for name in rest {
        let c = class_of(program, &ty)?;
        let (fi, f) = program.classes[c].field(name)?;
        if f.is_static {
            return None;
        }
        target = Some(VarTarget::Field { class: c, field: fi });
        ty = f.ty.clone();
    }
    target
}

/// Every static field, plus every instance field reachable from a static
/// field along declared types without visiting a class twice on one path.
fn observable_paths(program: &Program, policy: &NIPolicy) -> Vec<ObsPath> {
    #[allow(clippy::too_many_arguments)]
    fn walk(
        program: &Program,
        policy: &NIPolicy,
        class: usize,
        name: &str,
        root: usize,
        fields: &mut Vec<usize>,
        seen: &mut Vec<usize>,
        out: &mut Vec<ObsPath>,
    ) {
        if seen.contains(&class) {
            return;
        }
        seen.push(class);
        let decl = &program.classes[class];
        for (slot, &fi) in decl.instance_fields.iter().enumerate() {
            let f = &decl.fields[fi];
            let path_name = format!("{name}.{}", f.name);
            fields.push(slot);
            out.push(ObsPath {
                name: path_name.clone(),
                root,
                fields: fields.clone(),
                label: policy.fields[class][slot],
            });
            if let Some(c) = class_of(program, &f.ty) {
                walk(program, policy, c, &path_name, root, fields, seen, out);
            }
            fields.pop();
        }
        seen.pop();
    }

    let mut out = Vec::new();
    for (s, st) in program.statics.iter().enumerate() {
        out.push(ObsPath {
            name: st.name.clone(),
            root: s,
            fields: Vec::new(),
            label: policy.statics[s],
        });
        if let Some(c) = class_of(program, &st.ty) {
            walk(program, policy, c, &st.name, s, &mut Vec::new(), &mut Vec::new(), &mut out);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::parse;

    fn policy(src: &str) -> Result<NIPolicy, PolicyError> {
        extract_policy(&parse(src).unwrap())
    }

    #[test]
    fn defaults_to_low() {
        let p = policy("class C { static int x; static void main(int a) { x = a; } }").unwrap();
        assert_eq!(p.to_string(), "{a: Low, x: Low}");
    }

    #[test]
    fn field_paths_and_inputs() {
        let p = policy(
            "class A { int bal; //@ setLabel(bal, High);\n boolean extra; }
             class M { static A a = new A();
               static void main(int init) {
                 //@ setLabel(init, High);
               } }",
        )
        .unwrap();
        assert_eq!(p.to_string(), "{init: High, a: Low, a.bal: High, a.extra: Low}");
    }

    #[test]
    fn dotted_annotation() {
        let p = policy(
            "class A { int bal; }
             class M { static A a; //@ setLabel(a.bal, High);
               static void main() { } }",
        )
        .unwrap();
        assert_eq!(p.get("a.bal"), Some(Label::High));
        let p = policy(
            "class M { static int h; static void main() { } }
             //@ setLabel(M.h, High);",
        )
        .unwrap();
        assert_eq!(p.get("h"), Some(Label::High));
    }

    #[test]
    fn undeclared_and_bad_label() {
        let e = policy("class C { static void main() { } } //@ setLabel(missing, High);").unwrap_err();
        assert!(matches!(e, PolicyError::Undeclared { .. }));
        let e = policy("class C { static int x; //@ setLabel(x, Secret);\n static void main() { } }").unwrap_err();
        assert!(matches!(e, PolicyError::BadLabel { .. }));
    }

    #[test]
    fn conflicting_annotations() {
        let e = policy(
            "class C { static int x; //@ setLabel(x, High);\n //@ setLabel(x, Low);\n static void main() { } }",
        )
        .unwrap_err();
        assert!(matches!(e, PolicyError::Conflict { .. }));
    }

    #[test]
    fn order_independent() {
        let a = policy(
            "class C { static int x; static int y; //@ setLabel(x, High);\n //@ setLabel(y, High);\n static void main() { } }",
        )
        .unwrap();
        let b = policy(
            "class C { static int x; static int y; //@ setLabel(y, High);\n //@ setLabel(x, High);\n static void main() { } }",
        )
        .unwrap();
        assert_eq!(a, b);
        assert_eq!(a.sha256(), b.sha256());
    }

    #[test]
    fn cyclic_types_are_cut() {
        let p = policy("class N { N next; int v; } class M { static N n; static void main() { } }").unwrap();
        let names: Vec<_> = p.paths.iter().map(|p| p.name.as_str()).collect();
        assert_eq!(names, ["n", "n.next", "n.v"]);
    }
}
