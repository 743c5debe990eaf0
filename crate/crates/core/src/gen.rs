//! Seeded random generator of small terminating programs, used by the
//! property suites and the benchmark.
//!
//! A generated program has at most three variables (static fields plus
//! `main` inputs, at least one of them `High`), integer arithmetic, at most
//! two conditionals or loops in total and no output. Loops carry a hidden
//! counter that bounds them to three iterations, so every run terminates.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt::Write;

/// Shape limits of generated programs.
#[derive(Debug, Clone, Copy)]
pub struct GenConfig {
    pub max_vars: usize,
    pub max_branches: usize,
    pub max_stmts: usize,
}

impl Default for GenConfig {
    fn default() -> GenConfig {
        GenConfig {
            max_vars: 3,
            max_branches: 2,
            max_stmts: 4,
        }
    }
}

/// Source text of the program for `seed`.
pub fn program_source(seed: u64, cfg: GenConfig) -> String {
    Gen::new(seed, cfg).program()
}

/// `count` programs from consecutive seeds.
pub fn corpus(first_seed: u64, count: usize) -> Vec<(u64, String)> {
    (first_seed..first_seed + count as u64)
        .map(|s| (s, program_source(s, GenConfig::default())))
        .collect()
}

struct Gen {
    rng: ChaCha8Rng,
    cfg: GenConfig,
    statics: Vec<String>,
    inputs: Vec<String>,
    branches: usize,
    loops: usize,
    in_loop: bool,
}

impl Gen {
    fn new(seed: u64, cfg: GenConfig) -> Gen {
        Gen {
            rng: ChaCha8Rng::seed_from_u64(seed),
            cfg,
            statics: Vec::new(),
            inputs: Vec::new(),
            branches: 0,
            loops: 0,
            in_loop: false,
        }
    }

    fn program(&mut self) -> String {
        let vars = self.rng.gen_range(2..=self.cfg.max_vars.max(2));
        let n_inputs = self.rng.gen_range(1..vars);
        self.inputs = (0..n_inputs).map(|i| format!("in{i}")).collect();
        self.statics = (0..vars - n_inputs).map(|i| format!("v{i}")).collect();
        let mut high: Vec<bool> = (0..vars).map(|_| self.rng.gen_bool(0.4)).collect();
        if !self.statics.is_empty() && !high[n_inputs..].contains(&false) {
            // keep at least one public static so there is something to observe
            let i = self.rng.gen_range(n_inputs..vars);
            high[i] = false;
        }
        if !high.contains(&true) {
            let i = self.rng.gen_range(0..n_inputs);
            high[i] = true;
        }
        let mut src = String::from("class R {\n");
        for (i, s) in self.statics.iter().enumerate() {
            let init = if self.rng.gen_bool(0.5) {
                format!(" = {}", self.rng.gen_range(-2..=3))
            } else {
                String::new()
            };
            write!(src, "    static int {s}{init};").unwrap();
            if high[n_inputs + i] {
                write!(src, " //@ setLabel({s}, High);").unwrap();
            }
            src.push('\n');
        }
        let params: Vec<String> = self.inputs.iter().map(|i| format!("int {i}")).collect();
        writeln!(src, "    static void main({}) {{", params.join(", ")).unwrap();
        for (i, name) in self.inputs.iter().enumerate() {
            if high[i] {
                writeln!(src, "        //@ setLabel({name}, High);").unwrap();
            }
        }
        let n = self.rng.gen_range(2..=self.cfg.max_stmts);
        let mut body = String::new();
        for _ in 0..n {
            self.stmt(&mut body, 2);
        }
        src.push_str(&body);
        src.push_str("    }\n}\n");
        src
    }

    fn stmt(&mut self, out: &mut String, depth: usize) {
        let pad = "    ".repeat(depth);
        let budget = self.branches < self.cfg.max_branches;
        let roll = self.rng.gen_range(0..10);
        if budget && roll < 3 {
            self.branches += 1;
            let cond = self.cond();
            writeln!(out, "{pad}if ({cond}) {{").unwrap();
            self.block(out, depth + 1);
            if self.rng.gen_bool(0.5) {
                writeln!(out, "{pad}}} else {{").unwrap();
                self.block(out, depth + 1);
            }
            writeln!(out, "{pad}}}").unwrap();
        } else if budget && roll < 5 && !self.in_loop {
            self.branches += 1;
            let counter = format!("c{}", self.loops);
            self.loops += 1;
            let bound = self.rng.gen_range(1..=3);
            let cond = self.cond();
            writeln!(out, "{pad}int {counter} = 0;").unwrap();
            writeln!(out, "{pad}while ({counter} < {bound} && ({cond})) {{").unwrap();
            writeln!(out, "{pad}    {counter} = {counter} + 1;").unwrap();
            self.in_loop = true;
            self.block(out, depth + 1);
            self.in_loop = false;
            writeln!(out, "{pad}}}").unwrap();
        } else if self.in_loop && roll == 9 {
            let word = if self.rng.gen_bool(0.5) { "break" } else { "continue" };
            writeln!(out, "{pad}{word};").unwrap();
        } else {
            let target = self.target();
            let e = self.expr(2);
            writeln!(out, "{pad}{target} = {e};").unwrap();
        }
    }

    fn block(&mut self, out: &mut String, depth: usize) {
        let n = self.rng.gen_range(1..=2);
        for _ in 0..n {
            self.stmt(out, depth);
        }
    }

    fn target(&mut self) -> String {
        // statics mostly; inputs are assignable locals of main
        if !self.statics.is_empty() && self.rng.gen_bool(0.8) {
            self.statics.choose(&mut self.rng).unwrap().clone()
        } else {
            self.inputs.choose(&mut self.rng).unwrap().clone()
        }
    }

    fn var(&mut self) -> String {
        let all: Vec<&String> = self.statics.iter().chain(&self.inputs).collect();
        all.choose(&mut self.rng).unwrap().to_string()
    }

    fn atom(&mut self) -> String {
        if self.rng.gen_bool(0.65) {
            self.var()
        } else {
            let n = self.rng.gen_range(-2..=3);
            if n < 0 {
                format!("({n})")
            } else {
                n.to_string()
            }
        }
    }

    fn expr(&mut self, depth: usize) -> String {
        if depth == 0 || self.rng.gen_bool(0.45) {
            return self.atom();
        }
        let op = ["+", "-", "*"].choose(&mut self.rng).unwrap();
        let l = self.expr(depth - 1);
        let r = self.expr(depth - 1);
        format!("({l} {op} {r})")
    }

    fn cond(&mut self) -> String {
        let op = ["<", "<=", ">", ">=", "==", "!="].choose(&mut self.rng).unwrap();
        // flag tests such as `v0 == 1` are common in real code and are the
        // shape through which a branch on secret data taints later guards
        let (l, r) = if self.rng.gen_bool(0.5) {
            let v = self.var();
            (v, self.rng.gen_range(-2..=3).to_string())
        } else {
            (self.expr(1), self.expr(1))
        };
        let c = format!("{l} {op} {r}");
        match self.rng.gen_range(0..8) {
            0 => format!("!({c})"),
            1 => format!("{c} || {} == {}", self.atom(), self.atom()),
            _ => c,
        }
    }
}
