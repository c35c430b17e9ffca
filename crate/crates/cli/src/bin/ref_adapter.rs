//! Reference adapter speaking the optfuzz adapter protocol. It evaluates
//! modules with the bundled tree interpreter; the non-echo modes misbehave
//! on purpose so the harness side can be exercised.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{self, BufRead, Write};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, ValueEnum};
use optfuzz::graph_model::{TensorJson, TensorValue};
use optfuzz::harness::adapter::module_vocabulary;
use optfuzz::mini_ir::{parse_module, run_backend, Backend, PassKind, Pipeline};
use optfuzz::opset::{eval_elementwise, Op};
use serde_json::{json, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    /// Answer with the tree backend's results.
    Echo,
    /// Negate (or logically invert) every output.
    Negate,
    /// Never answer a run request.
    Hang,
    /// Exit on the first run request.
    Die,
}

#[derive(Parser)]
#[command(about = "Reference adapter for optfuzz")]
struct Args {
    #[arg(long, value_enum, default_value = "echo")]
    mode: Mode,
    /// Comma-separated op names to declare; all ops when absent.
    #[arg(long, value_delimiter = ',')]
    ops: Option<Vec<String>>,
    /// Comma-separated dtype names to declare; all dtypes when absent.
    #[arg(long, value_delimiter = ',')]
    dtypes: Option<Vec<String>>,
}

fn corrupt(t: &TensorValue) -> TensorValue {
    let op = if t.dtype().is_bool() {
        Op::LogicalNot
    } else if t.dtype().is_unsigned_int() {
        Op::BitwiseNot
    } else {
        Op::Negative
    };
    eval_elementwise(op, &[t]).unwrap_or_else(|_| t.clone())
}

fn run(req: &Value, args: &Args) -> Value {
    let text = req.get("ir_text").and_then(Value::as_str).unwrap_or_default();
    let m = match parse_module(text) {
        Ok(m) => m,
        Err(e) => return json!({"status": "error", "trace": format!("ERROR parse: {e}")}),
    };
    let (ops, dtypes) = module_vocabulary(&m);
    let declared = |d: &Option<Vec<String>>, used: &BTreeSet<String>| {
        d.as_ref().map_or(true, |d| used.iter().all(|u| d.contains(u)))
    };
    if !declared(&args.ops, &ops) || !declared(&args.dtypes, &dtypes) {
        return json!({"status": "unsupported"});
    }
    let passes: Result<Vec<PassKind>, _> = req
        .get("pipeline")
        .and_then(Value::as_array)
        .map(|a| a.iter().map(|p| p.as_str().unwrap_or_default().parse()).collect())
        .unwrap_or(Ok(Vec::new()));
    let passes = match passes {
        Ok(p) => p,
        Err(e) => return json!({"status": "error", "trace": format!("ERROR pipeline: {e}")}),
    };
    let inputs: BTreeMap<String, TensorJson> =
        serde_json::from_value(req.get("inputs").cloned().unwrap_or(json!({}))).unwrap_or_default();
    let inputs: Result<BTreeMap<String, TensorValue>, _> =
        inputs.iter().map(|(k, v)| TensorValue::try_from(v).map(|t| (k.clone(), t))).collect();
    let inputs = match inputs {
        Ok(i) => i,
        Err(e) => return json!({"status": "error", "trace": format!("ERROR inputs: {e}")}),
    };
    let outputs = Pipeline::new(passes)
        .run(&m)
        .map_err(|e| e.to_string())
        .and_then(|m| run_backend(&m, &inputs, Backend::Tree).map_err(|e| e.to_string()));
    match outputs {
        Ok(outs) => {
            let outs: Vec<TensorJson> = outs
                .iter()
                .map(|t| if args.mode == Mode::Negate { corrupt(t) } else { t.clone() })
                .map(|t| TensorJson::from(&t))
                .collect();
            json!({"status": "ok", "outputs": outs})
        }
        Err(trace) => json!({"status": "error", "trace": trace}),
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    let stdin = io::stdin();
    let mut stdout = io::stdout().lock();
    for line in stdin.lock().lines() {
        let Ok(line) = line else { break };
        if line.trim().is_empty() {
            continue;
        }
        let req: Value = match serde_json::from_str(&line) {
            Ok(v) => v,
            Err(e) => {
                let _ = writeln!(stdout, "{}", json!({"status": "error", "trace": format!("bad request: {e}")}));
                return ExitCode::FAILURE;
            }
        };
        let reply = match req.get("cmd").and_then(Value::as_str) {
            Some("hello") => json!({
                "status": "ok",
                "name": format!("ref-{:?}", args.mode).to_lowercase(),
                "ops": args.ops,
                "dtypes": args.dtypes,
                "pipeline": PassKind::ALL.iter().map(|p| p.name()).collect::<Vec<_>>(),
            }),
            Some("run") => match args.mode {
                Mode::Hang => loop {
                    std::thread::sleep(Duration::from_secs(3600));
                },
                Mode::Die => return ExitCode::FAILURE,
                Mode::Echo | Mode::Negate => run(&req, &args),
            },
            _ => json!({"status": "error", "trace": format!("unknown command in {line}")}),
        };
        if writeln!(stdout, "{reply}").and_then(|_| stdout.flush()).is_err() {
            break;
        }
    }
    ExitCode::SUCCESS
}
