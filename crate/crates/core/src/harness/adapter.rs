//! Client side of the external-compiler adapter protocol.
//!
//! An adapter is a child process that reads one JSON object per line on
//! stdin and answers with one JSON object per line on stdout:
//!
//! ```text
//! {"cmd":"hello"}
//!   -> {"status":"ok","name":"...","ops":[...],"dtypes":[...],"pipeline":[...]}
//! {"cmd":"run","ir_text":"...","pipeline":["inline",...],"inputs":{"n0":{tensor}}}
//!   -> {"status":"ok","outputs":[{tensor},...]}
//!    | {"status":"error","trace":"..."}
//!    | {"status":"unsupported"}
//! ```
//!
//! Tensors use the [`TensorJson`] encoding. `ops` and `dtypes` are optional;
//! when present, modules outside the declared subset are not sent.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::graph_model::{TensorJson, TensorValue};
use crate::mini_ir::{parse_module, Expr, Module, Type};
use crate::oracles::{ExternalResult, ExternalTarget};

fn default_timeout() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdapterSpec {
    pub name: String,
    /// Program and arguments.
    pub command: Vec<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
}

/// Declared in the hello response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Capabilities {
    pub name: String,
    #[serde(default)]
    pub ops: Option<BTreeSet<String>>,
    #[serde(default)]
    pub dtypes: Option<BTreeSet<String>>,
    #[serde(default)]
    pub pipeline: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AdapterError {
    #[error("cannot start adapter {0}: {1}")]
    Spawn(String, String),
    #[error("adapter protocol violation: {0}")]
    Protocol(String),
    #[error("adapter timed out after {0}s")]
    Timeout(f64),
    #[error("adapter process died")]
    Died,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AdapterReply {
    Outputs(Vec<TensorValue>),
    Error(String),
    Unsupported,
}

struct Process {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<String>,
}

impl Process {
    fn spawn(spec: &AdapterSpec) -> Result<Process, AdapterError> {
        let mut child = Command::new(&spec.command[0])
            .args(&spec.command[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| AdapterError::Spawn(spec.command.join(" "), e.to_string()))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, lines) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let Ok(line) = line else { break };
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Process { child, stdin, lines })
    }

    fn request(&mut self, req: &Value, timeout: f64) -> Result<Value, AdapterError> {
        let mut line = req.to_string();
        line.push('\n');
        self.stdin.write_all(line.as_bytes()).map_err(|_| AdapterError::Died)?;
        self.stdin.flush().map_err(|_| AdapterError::Died)?;
        match self.lines.recv_timeout(Duration::from_secs_f64(timeout)) {
            Ok(reply) => serde_json::from_str(&reply).map_err(|e| AdapterError::Protocol(format!("{e}: {reply}"))),
            Err(RecvTimeoutError::Timeout) => Err(AdapterError::Timeout(timeout)),
            Err(RecvTimeoutError::Disconnected) => Err(AdapterError::Died),
        }
    }
}

impl Drop for Process {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// A running adapter. A process that dies or times out is discarded and
/// restarted on the next request.
pub struct AdapterClient {
    spec: AdapterSpec,
    caps: Capabilities,
    proc: Mutex<Option<Process>>,
    errors: Mutex<Vec<String>>,
}

fn handshake(spec: &AdapterSpec) -> Result<(Process, Capabilities), AdapterError> {
    let mut p = Process::spawn(spec)?;
    let reply = p.request(&json!({"cmd": "hello"}), spec.timeout_secs)?;
    if reply.get("status").and_then(Value::as_str) != Some("ok") {
        return Err(AdapterError::Protocol(format!("hello rejected: {reply}")));
    }
    let caps: Capabilities =
        serde_json::from_value(reply).map_err(|e| AdapterError::Protocol(format!("bad hello: {e}")))?;
    Ok((p, caps))
}

impl AdapterClient {
    pub fn start(spec: AdapterSpec) -> Result<Self, AdapterError> {
        let (p, caps) = handshake(&spec)?;
        Ok(AdapterClient { spec, caps, proc: Mutex::new(Some(p)), errors: Mutex::new(Vec::new()) })
    }

    pub fn capabilities(&self) -> &Capabilities {
        &self.caps
    }

    /// Whether every op and dtype of `m` lies in the declared subset.
    pub fn supports(&self, m: &Module) -> bool {
        let (ops, dtypes) = module_vocabulary(m);
        let within = |declared: &Option<BTreeSet<String>>, used: &BTreeSet<String>| {
            declared.as_ref().map_or(true, |d| used.is_subset(d))
        };
        within(&self.caps.ops, &ops) && within(&self.caps.dtypes, &dtypes)
    }

    pub fn run_raw(
        &self,
        ir_text: &str,
        pipeline: &[&str],
        inputs: &BTreeMap<String, TensorValue>,
    ) -> Result<AdapterReply, AdapterError> {
        let inputs: BTreeMap<&String, TensorJson> = inputs.iter().map(|(k, v)| (k, TensorJson::from(v))).collect();
        let req = json!({"cmd": "run", "ir_text": ir_text, "pipeline": pipeline, "inputs": inputs});
        let mut slot = self.proc.lock().unwrap_or_else(|e| e.into_inner());
        if slot.is_none() {
            *slot = Some(handshake(&self.spec)?.0);
        }
        let reply = slot.as_mut().expect("process present").request(&req, self.spec.timeout_secs);
        let reply = match reply {
            Ok(r) => r,
            Err(e) => {
                *slot = None;
                return Err(e);
            }
        };
        match reply.get("status").and_then(Value::as_str) {
            Some("ok") => {
                let outs: Vec<TensorJson> = serde_json::from_value(reply.get("outputs").cloned().unwrap_or(Value::Null))
                    .map_err(|e| AdapterError::Protocol(format!("bad outputs: {e}")))?;
                let outs = outs
                    .iter()
                    .map(TensorValue::try_from)
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| AdapterError::Protocol(format!("bad tensor: {e}")))?;
                Ok(AdapterReply::Outputs(outs))
            }
            Some("error") => {
                Ok(AdapterReply::Error(reply.get("trace").and_then(Value::as_str).unwrap_or_default().to_string()))
            }
            Some("unsupported") => Ok(AdapterReply::Unsupported),
            _ => Err(AdapterError::Protocol(format!("unknown status in {reply}"))),
        }
    }

    /// Adapter failures seen so far, oldest first; clears the log.
    pub fn take_errors(&self) -> Vec<String> {
        std::mem::take(&mut *self.errors.lock().unwrap_or_else(|e| e.into_inner()))
    }
}

impl ExternalTarget for AdapterClient {
    fn name(&self) -> String {
        self.spec.name.clone()
    }

    fn run(&self, ir_text: &str, pipeline: &[&str], inputs: &BTreeMap<String, TensorValue>) -> ExternalResult {
        match parse_module(ir_text) {
            Ok(m) if self.supports(&m) => {}
            _ => return ExternalResult::Unsupported,
        }
        match self.run_raw(ir_text, pipeline, inputs) {
            Ok(AdapterReply::Outputs(v)) => ExternalResult::Ok(v),
            Ok(AdapterReply::Error(t)) => ExternalResult::Error(t),
            Ok(AdapterReply::Unsupported) => ExternalResult::Unsupported,
            Err(e) => {
                self.errors.lock().unwrap_or_else(|e| e.into_inner()).push(format!("{}: {e}", self.spec.name));
                ExternalResult::Error(format!("ERROR adapter at {}: {e}", self.spec.name))
            }
        }
    }
}

/// Op names and dtype names appearing in `m`.
pub fn module_vocabulary(m: &Module) -> (BTreeSet<String>, BTreeSet<String>) {
    let mut ops = BTreeSet::new();
    let mut dtypes = BTreeSet::new();
    fn add_type(t: &Type, out: &mut BTreeSet<String>) {
        match t {
            Type::Tensor(t) => {
                out.insert(t.dtype.to_string());
            }
            Type::Func { params, ret } => {
                params.iter().for_each(|p| add_type(p, out));
                add_type(ret, out);
            }
            Type::Tuple(items) => items.iter().for_each(|p| add_type(p, out)),
        }
    }
    for f in m.functions.values() {
        for p in &f.params {
            add_type(&p.ty, &mut dtypes);
        }
        f.body.walk(&mut |e| match e {
            Expr::Prim { op, .. } => {
                ops.insert(op.to_string());
            }
            Expr::Const(c) => {
                dtypes.insert(c.dtype().to_string());
            }
            Expr::Closure { params, .. } => params.iter().for_each(|p| add_type(&p.ty, &mut dtypes)),
            _ => {}
        });
    }
    (ops, dtypes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vocabulary_collects_ops_and_dtypes() {
        let m = parse_module("def @main(%x: float32(2)) { let %a = sqrt(%x); add(%a, const int8 () [1]) }").unwrap();
        let (ops, dtypes) = module_vocabulary(&m);
        assert_eq!(ops.into_iter().collect::<Vec<_>>(), ["add", "sqrt"]);
        assert_eq!(dtypes.into_iter().collect::<Vec<_>>(), ["float32", "int8"]);
    }

    #[test]
    fn missing_program_is_a_spawn_error() {
        let spec = AdapterSpec { name: "x".into(), command: vec!["/nonexistent/adapter".into()], timeout_secs: 1.0 };
        assert!(matches!(AdapterClient::start(spec), Err(AdapterError::Spawn(..))));
    }

    #[test]
    fn silent_program_fails_handshake() {
        // `true` exits without answering hello.
        let spec = AdapterSpec { name: "x".into(), command: vec!["true".into()], timeout_secs: 2.0 };
        assert!(matches!(AdapterClient::start(spec), Err(AdapterError::Died)));
    }
}
