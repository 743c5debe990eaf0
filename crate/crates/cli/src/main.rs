use clap::{Parser, Subcommand};
use nicert_core::abstract_sem::explore;
use nicert_core::certificate::{self, CertKind, CheckError};
use nicert_core::concrete_sem::{inputs_from_pairs, run_concrete_with, Limits, Observed, Value};
use nicert_core::extended_sem::{trace_extended, Verdict};
use nicert_core::labels::StoredLabel;
use nicert_core::oracle::{brute_force_ni_with, InputDomain, OracleVerdict, DEFAULT_CAP};
use nicert_core::syntax::{extract_policy, parse, NIPolicy, Program};
use serde_json::{json, Map, Value as Json};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "nicert", version, about = "Non-interference certifier for a small Java-like language")]
struct Cli {
    /// Print one JSON object instead of text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the program with the standard semantics.
    Run {
        file: PathBuf,
        /// Input values as `name=value`.
        #[arg(long = "in", value_parser = pair, num_args = 1..)]
        inputs: Vec<(String, String)>,
    },
    /// Run with labels and check the final state of this one run.
    Trace {
        file: PathBuf,
        #[arg(long = "in", value_parser = pair, num_args = 1..)]
        inputs: Vec<(String, String)>,
        /// Omit the per-step lines.
        #[arg(long)]
        no_steps: bool,
    },
    /// Explore the abstract semantics and optionally write a certificate.
    Analyze {
        file: PathBuf,
        #[arg(long)]
        cert: Option<PathBuf>,
        #[arg(long, default_value = "full", requires = "cert")]
        kind: CertKind,
    },
    /// Validate a certificate against a program.
    Check { file: PathBuf, cert: PathBuf },
    /// Compare all runs over a finite input domain.
    Oracle {
        file: PathBuf,
        /// Inclusive integer range for every int input.
        #[arg(long, value_parser = range, default_value = "-2..3")]
        domain: (i64, i64),
        /// Maximum number of runs.
        #[arg(long, default_value_t = DEFAULT_CAP)]
        cap: usize,
    },
}

fn pair(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(a, b)| (a.trim().to_string(), b.trim().to_string()))
        .filter(|(a, _)| !a.is_empty())
        .ok_or_else(|| format!("expected name=value, got `{s}`"))
}

fn range(s: &str) -> Result<(i64, i64), String> {
    let (a, b) = s.split_once("..").ok_or_else(|| format!("expected lo..hi, got `{s}`"))?;
    let lo: i64 = a.trim().parse().map_err(|e| format!("{a}: {e}"))?;
    let hi: i64 = b.trim().parse().map_err(|e| format!("{b}: {e}"))?;
    if lo > hi {
        return Err(format!("empty range {lo}..{hi}"));
    }
    Ok((lo, hi))
}

/// Outcome of one command: exit status plus the human and JSON renderings.
struct Report {
    code: u8,
    text: String,
    json: Map<String, Json>,
}

struct Failure(String);

impl<E: std::fmt::Display> From<E> for Failure {
    fn from(e: E) -> Failure {
        Failure(e.to_string())
    }
}

fn load(file: &Path) -> Result<(Program, NIPolicy), Failure> {
    let src = std::fs::read_to_string(file).map_err(|e| Failure(format!("{}: {e}", file.display())))?;
    let p = parse(&src).map_err(|e| Failure(format!("{}:{e}", file.display())))?;
    let pol = extract_policy(&p).map_err(|e| Failure(format!("{}:{e}", file.display())))?;
    Ok((p, pol))
}

fn value_json(v: &Value) -> Json {
    match v {
        Value::Int(n) => i64::try_from(n).map(Json::from).unwrap_or_else(|_| Json::String(n.to_string())),
        Value::Bool(b) => Json::Bool(*b),
        Value::Null => Json::Null,
        Value::Obj(_) => Json::String("<object>".into()),
    }
}

fn observed_json(v: &Observed) -> Json {
    match v {
        Observed::Int(n) => i64::try_from(n).map(Json::from).unwrap_or_else(|_| Json::String(n.to_string())),
        Observed::Bool(b) => Json::Bool(*b),
        Observed::Null => Json::Null,
        Observed::Object => Json::String("<object>".into()),
    }
}

fn witnesses_json(ws: &[(String, StoredLabel)]) -> Json {
    ws.iter().map(|(n, l)| json!({"variable": n, "label": l.to_string()})).collect()
}

fn verdict_parts(v: &Verdict) -> (&'static str, Json) {
    match v {
        Verdict::Pass => ("Pass", Json::Null),
        Verdict::Fail { witnesses } => ("Fail", witnesses_json(witnesses)),
    }
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1000.0
}

fn execute(cmd: &Cmd) -> Result<Report, Failure> {
    let t = Instant::now();
    let mut json = Map::new();
    let mut text = String::new();
    let code;
    match cmd {
        Cmd::Run { file, inputs } => {
            let (p, _) = load(file)?;
            let x = inputs_from_pairs(&p, inputs)?;
            let st = run_concrete_with(&p, &x, Limits::default())?;
            for v in &st.out {
                text.push_str(&format!("{v}\n"));
            }
            let mut vars = Map::new();
            for (n, v) in &st.vars {
                let shown = v.as_ref().map_or("-".to_string(), |v| v.to_string());
                text.push_str(&format!("{n} = {shown}\n"));
                vars.insert(n.clone(), v.as_ref().map_or(Json::Null, observed_json));
            }
            json.insert("verdict".into(), Json::Null);
            json.insert("output".into(), st.out.iter().map(value_json).collect());
            json.insert("variables".into(), Json::Object(vars));
            json.insert("stats".into(), json!({"steps": st.steps, "wall_ms": ms(t)}));
            code = 0;
        }
        Cmd::Trace { file, inputs, no_steps } => {
            let (p, pol) = load(file)?;
            let x = inputs_from_pairs(&p, inputs)?;
            let (lines, st, v) = trace_extended(&p, &pol, &x, Limits::default())?;
            if !no_steps {
                for l in &lines {
                    text.push_str(l);
                    text.push('\n');
                }
            }
            for (v, l) in &st.out {
                text.push_str(&format!("output {v} : {l}\n"));
            }
            let mut vars = Map::new();
            for (n, cell) in &st.vars {
                match cell {
                    Some((val, l)) => {
                        text.push_str(&format!("{n} = <{val}, {l}>\n"));
                        vars.insert(n.clone(), json!({"value": observed_json(val), "label": l.to_string()}));
                    }
                    None => {
                        text.push_str(&format!("{n} = -\n"));
                        vars.insert(n.clone(), Json::Null);
                    }
                }
            }
            for w in st.warnings() {
                text.push_str(&format!("warning: {w}\n"));
            }
            text.push_str(&format!("verdict: {v}\n"));
            let (name, witness) = verdict_parts(&v);
            json.insert("verdict".into(), name.into());
            json.insert("witness".into(), witness);
            json.insert(
                "output".into(),
                st.out.iter().map(|(v, l)| json!({"value": value_json(v), "label": l.to_string()})).collect(),
            );
            json.insert("variables".into(), Json::Object(vars));
            json.insert("warnings".into(), st.warnings().into());
            if !no_steps {
                json.insert("trace".into(), lines.into());
            }
            json.insert("stats".into(), json!({"steps": st.steps, "wall_ms": ms(t)}));
            code = if v.is_pass() { 0 } else { 1 };
        }
        Cmd::Analyze { file, cert, kind } => {
            let (p, pol) = load(file)?;
            let (g, v) = explore(&p, &pol)?;
            let elapsed = ms(t);
            text.push_str(&format!("verdict: {}\n", if v.is_pass() { "Pass" } else { "Fail" }));
            if let Verdict::Fail { witnesses } = &v {
                for (n, l) in witnesses {
                    text.push_str(&format!("  {n} = {l}\n"));
                }
            }
            text.push_str(&format!(
                "states: {}, edges: {}, finals: {}, time: {elapsed:.2} ms\n",
                g.nodes.len(),
                g.edges.len(),
                g.finals.len()
            ));
            let mut written = Json::Null;
            if let Some(path) = cert {
                let c = certificate::emit(&p, &pol, &g, *kind);
                std::fs::write(path, &c).map_err(|e| Failure(format!("{}: {e}", path.display())))?;
                text.push_str(&format!("certificate: {} ({kind}, {} bytes)\n", path.display(), c.len()));
                written = json!(path.display().to_string());
                json.insert("certificate_kind".into(), kind.to_string().into());
                json.insert("certificate_bytes".into(), c.len().into());
            }
            let (name, witness) = verdict_parts(&v);
            json.insert("verdict".into(), name.into());
            json.insert("witness".into(), witness);
            json.insert("certificate".into(), written);
            json.insert(
                "stats".into(),
                json!({"states": g.nodes.len(), "edges": g.edges.len(), "finals": g.finals.len(),
                       "stuck": g.stuck.len(), "wall_ms": elapsed}),
            );
            code = if v.is_pass() { 0 } else { 1 };
        }
        Cmd::Check { file, cert } => {
            let (p, pol) = load(file)?;
            let c = std::fs::read_to_string(cert).map_err(|e| Failure(format!("{}: {e}", cert.display())))?;
            json.insert("certificate".into(), cert.display().to_string().into());
            match certificate::check(&p, &pol, &c) {
                Ok(r) => {
                    text.push_str(&format!("Accept ({} certificate, {} states, {} finals)\n", r.kind, r.states, r.finals));
                    json.insert("verdict".into(), "Accept".into());
                    json.insert("certificate_kind".into(), r.kind.to_string().into());
                    json.insert(
                        "stats".into(),
                        json!({"states": r.states, "finals": r.finals, "wall_ms": ms(t)}),
                    );
                    code = 0;
                }
                Err(e @ (CheckError::Malformed { .. } | CheckError::UnknownVersion(_))) => {
                    return Err(Failure(format!("{}: {e}", cert.display())));
                }
                Err(e) => {
                    text.push_str(&format!("Reject: {e}\n"));
                    json.insert("verdict".into(), "Reject".into());
                    json.insert("reason".into(), e.to_string().into());
                    if let CheckError::FinalStateViolation { witnesses, .. } = &e {
                        json.insert("witness".into(), witnesses_json(witnesses));
                    }
                    json.insert("stats".into(), json!({"wall_ms": ms(t)}));
                    code = 1;
                }
            }
        }
        Cmd::Oracle { file, domain, cap } => {
            let (p, pol) = load(file)?;
            let d = InputDomain::int_range(&p, domain.0, domain.1);
            let r = brute_force_ni_with(&p, &pol, &d, *cap, Limits::default())?;
            let stats = json!({"runs": r.runs, "pairs": r.pairs, "skipped": r.skipped, "wall_ms": ms(t)});
            match &r.verdict {
                OracleVerdict::NonInterferent => {
                    text.push_str("NonInterferent\n");
                    json.insert("verdict".into(), "NonInterferent".into());
                    code = 0;
                }
                OracleVerdict::Interferent(w) => {
                    text.push_str(&format!("Interferent: {w}\n"));
                    let side = |v: &[(String, Value)]| -> Json {
                        Json::Object(v.iter().map(|(n, x)| (n.clone(), value_json(x))).collect())
                    };
                    json.insert("verdict".into(), "Interferent".into());
                    json.insert(
                        "witness".into(),
                        json!({"first": side(&w.first), "second": side(&w.second), "differences": w.differences}),
                    );
                    code = 1;
                }
            }
            text.push_str(&format!("runs: {}, pairs: {}, skipped: {}\n", r.runs, r.pairs, r.skipped));
            json.insert("stats".into(), stats);
        }
    }
    json.entry("witness").or_insert(Json::Null);
    Ok(Report { code, text, json })
}

fn command_name(cmd: &Cmd) -> (&'static str, &Path) {
    match cmd {
        Cmd::Run { file, .. } => ("run", file),
        Cmd::Trace { file, .. } => ("trace", file),
        Cmd::Analyze { file, .. } => ("analyze", file),
        Cmd::Check { file, .. } => ("check", file),
        Cmd::Oracle { file, .. } => ("oracle", file),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, file) = command_name(&cli.cmd);
    let mut head = Map::new();
    head.insert("command".into(), name.into());
    head.insert("program".into(), file.display().to_string().into());
    match execute(&cli.cmd) {
        Ok(r) => {
            if cli.json {
                head.extend(r.json);
                println!("{}", Json::Object(head));
            } else {
                print!("{}", r.text);
            }
            ExitCode::from(r.code)
        }
        Err(Failure(msg)) => {
            if cli.json {
                head.insert("error".into(), msg.into());
                println!("{}", Json::Object(head));
            } else {
                eprintln!("error: {msg}");
            }
            ExitCode::from(2)
        }
    }
}
