mod common;

use common::*;
use nicert_core::abstract_sem::{abstract_successors, alpha, explore, lift, serialize, Shape};
use nicert_core::concrete_sem::Limits;
use nicert_core::extended_sem::{initial_extended, Verdict};
use nicert_core::gen;
use nicert_core::labels::StoredLabel;
use nicert_core::machine::Code;
use nicert_core::oracle::InputDomain;
use std::collections::HashSet;
use std::time::{Duration, Instant};

fn verdict(stem: &str) -> Verdict {
    let (p, pol) = load(&corpus_file(stem));
    let t = Instant::now();
    let (_, v) = explore(&p, &pol).unwrap();
    assert!(t.elapsed() < Duration::from_secs(1), "{stem} took {:?}", t.elapsed());
    v
}

#[test]
fn golden_verdicts() {
    for stem in ["ex1_account", "ex3_loop", "ex5_break", "ex7_false_positive"] {
        assert!(!verdict(stem).is_pass(), "{stem}");
    }
    assert_eq!(verdict("ex4_temp"), Verdict::Pass);
    let Verdict::Fail { witnesses } = verdict("ex1_account") else { unreachable!() };
    assert!(witnesses.contains(&("a.extraService".into(), StoredLabel::LowToHigh)));
    assert_eq!(
        verdict("ex1_account").to_string(),
        "Fail (a.extraService = Low >> High)"
    );
}

#[test]
fn lift_labels_account_inputs_and_fields() {
    let (p, pol) = load(&corpus_file("ex1_account"));
    let code = Code::new(&p, &pol);
    let mut s = lift(&p, &pol);
    let loc = s.locals[&code.sym("initbalance")];
    assert_eq!(s.store[loc], Some((Shape::Scalar, StoredLabel::High)));
    let a = p.static_slot("a").unwrap();
    let path = |name: &str| pol.paths.iter().find(|x| x.name == name).unwrap();
    let bal = path("a.balance");
    let extra = path("a.extraService");
    let step = |s: &mut nicert_core::abstract_sem::AbsState| {
        let next = abstract_successors(&code, s);
        assert_eq!(next.len(), 1);
        *s = next.into_iter().next().unwrap().1;
    };
    // fields take their policy labels at allocation
    while s.heap.is_empty() {
        step(&mut s);
    }
    let o = &s.heap[0];
    assert_eq!(s.store[o.fields[bal.fields[0]]].as_ref().unwrap().1, StoredLabel::High);
    assert_eq!(s.store[o.fields[extra.fields[0]]].as_ref().unwrap().1, StoredLabel::Low);
    // the constructor then writes public zero values into both
    while s.store[a].as_ref().unwrap().0 != Shape::Obj(0) {
        step(&mut s);
    }
    assert_eq!(s.path_cell(a, &bal.fields).unwrap().1, StoredLabel::HighToLow);
    assert_eq!(s.path_cell(a, &extra.fields).unwrap().1, StoredLabel::Low);
}

#[test]
fn all_low_program_lifts_to_all_low_store() {
    let (p, pol) = load("class T { static int a = 1, b; static void main(int x) { a = x; } }");
    let s = lift(&p, &pol);
    assert!(s.store.iter().flatten().all(|(_, l)| *l == StoredLabel::Low));
}

fn all_programs() -> Vec<(String, String)> {
    let mut v = corpus();
    v.extend(gen::corpus(3000, 200).into_iter().map(|(s, src)| (format!("seed {s}"), src)));
    v
}

#[test]
fn lift_is_the_abstraction_of_every_initial_state() {
    for (name, src) in all_programs() {
        let (p, pol) = load(&src);
        let code = Code::new(&p, &pol);
        let want = lift(&p, &pol);
        for x in points(&InputDomain::default_for(&p).values) {
            assert_eq!(alpha(&initial_extended(&code, &x), &p), want, "{name}");
        }
    }
}

#[test]
fn extended_finals_are_contained_in_abstract_finals() {
    let limits = Limits { steps: 100_000 };
    for (name, src) in all_programs() {
        let (p, pol) = load(&src);
        let code = Code::new(&p, &pol);
        let (g, _) = explore(&p, &pol).unwrap();
        let finals: HashSet<String> = g.finals.iter().map(|&f| serialize(&g.nodes[f])).collect();
        for x in points(&InputDomain::default_for(&p).values) {
            let mut cfg = initial_extended(&code, &x);
            let mut steps = 0;
            while !cfg.is_final() && steps < limits.steps {
                if cfg.step(&code, None).is_err() {
                    break;
                }
                steps += 1;
            }
            if cfg.is_final() {
                assert!(finals.contains(&serialize(&alpha(&cfg, &p))), "{name} on {x:?}");
            }
        }
    }
}

#[test]
fn every_step_of_a_run_is_an_abstract_step() {
    for (name, src) in corpus() {
        let (p, pol) = load(&src);
        let code = Code::new(&p, &pol);
        for x in points(&InputDomain::int_range(&p, 0, 3).values) {
            let mut cfg = initial_extended(&code, &x);
            for _ in 0..20_000 {
                if cfg.is_final() {
                    break;
                }
                let before = alpha(&cfg, &p);
                if cfg.step(&code, None).is_err() {
                    break;
                }
                let after = alpha(&cfg, &p);
                let succ = abstract_successors(&code, &before);
                assert!(succ.iter().any(|(_, s)| *s == after), "{name} on {x:?}");
            }
        }
    }
}

#[test]
fn branch_points_have_two_successors_and_states_are_unique() {
    for (name, src) in all_programs() {
        let (p, pol) = load(&src);
        let (g, _) = explore(&p, &pol).unwrap();
        let uniq: HashSet<String> = g.nodes.iter().map(serialize).collect();
        assert_eq!(uniq.len(), g.nodes.len(), "{name}");
        for (i, n) in g.nodes.iter().enumerate() {
            if n.branch_truth().is_some() {
                assert_eq!(g.out_degree(i), 2, "{name} node {i}");
                for (_, _, d) in g.edges.iter().filter(|(s, _, _)| *s == i) {
                    assert!(g.nodes[*d].cl >= n.cl);
                }
            }
            if n.is_final() {
                assert_eq!(g.out_degree(i), 0);
            }
        }
    }
}

#[test]
fn exploration_is_deterministic() {
    for (name, src) in all_programs().into_iter().take(60) {
        let (p, pol) = load(&src);
        let (a, va) = explore(&p, &pol).unwrap();
        let (b, vb) = explore(&p, &pol).unwrap();
        assert_eq!(a, b, "{name}");
        assert_eq!(va, vb);
    }
}
