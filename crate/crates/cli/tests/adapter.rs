use optfuzz::generator::ConstraintLevel;
use optfuzz::graph_model::{from_text, NodeInfoTable};
use optfuzz::harness::{run_campaign, AdapterClient, AdapterSpec, CampaignConfig};
use optfuzz::oracles::{run_case_with_targets, CaseConfig, ExternalTarget, FuzzVerdict, OracleKind, Outcome};

const ADAPTER: &str = env!("CARGO_BIN_EXE_optfuzz-ref-adapter");

fn spec(args: &[&str], timeout: f64) -> AdapterSpec {
    let mut command = vec![ADAPTER.to_string()];
    command.extend(args.iter().map(|a| a.to_string()));
    AdapterSpec { name: "ref".into(), command, timeout_secs: timeout }
}

fn verdict_with(client: &AdapterClient, graph: &str) -> FuzzVerdict {
    let g = from_text(graph).unwrap();
    let t = NodeInfoTable::rebuild(&g);
    let targets: [&dyn ExternalTarget; 1] = [client];
    run_case_with_targets(&g, &t, ConstraintLevel::Constrained, &CaseConfig::default(), 3, &targets)
}

const NONZERO: &str = "0 variable int16 (3)\n1 constant int16 () [5]\n2 operator add 0 1\n3 operator multiply 2 1\n";

#[test]
fn hello_lists_capabilities() {
    let c = AdapterClient::start(spec(&["--ops", "add,negative", "--dtypes", "int8"], 10.0)).unwrap();
    let caps = c.capabilities();
    assert_eq!(caps.name, "ref-echo");
    assert!(caps.ops.as_ref().unwrap().contains("negative"));
    assert_eq!(caps.pipeline.len(), 7);
}

#[test]
fn echo_adapter_agrees() {
    let c = AdapterClient::start(spec(&["--mode", "echo"], 10.0)).unwrap();
    let v = verdict_with(&c, NONZERO);
    assert_eq!(v.outcome, Outcome::Pass, "{:?}", v.details.fragments);
    assert!(c.take_errors().is_empty());
}

#[test]
fn negating_adapter_is_an_o3_inconsistency() {
    let c = AdapterClient::start(spec(&["--mode", "negate"], 10.0)).unwrap();
    let v = verdict_with(&c, NONZERO);
    assert_eq!((v.outcome, v.oracle), (Outcome::Inconsistency, Some(OracleKind::O3)));
    assert!(v.details.fragments.iter().any(|f| f.stage == "external ref"));
}

#[test]
fn timeout_is_a_status_divergence() {
    let c = AdapterClient::start(spec(&["--mode", "hang"], 0.5)).unwrap();
    let v = verdict_with(&c, NONZERO);
    assert_eq!((v.outcome, v.oracle), (Outcome::Inconsistency, Some(OracleKind::O3)));
    let frag = v.details.fragments.iter().find(|f| f.stage == "external ref").unwrap();
    assert!(frag.message.contains("status differs"), "{}", frag.message);
    assert!(frag.message.contains("timed out"), "{}", frag.message);
    assert!(!c.take_errors().is_empty());
}

#[test]
fn undeclared_ops_are_skipped() {
    let c = AdapterClient::start(spec(&["--mode", "negate", "--ops", "negative"], 10.0)).unwrap();
    let v = verdict_with(&c, NONZERO);
    assert_eq!(v.outcome, Outcome::Pass);
}

#[test]
fn adapter_unsupported_reply_is_not_a_bug() {
    // The client check is bypassed by declaring everything; the adapter
    // itself refuses the uint8 dtype it was not told about.
    let c = AdapterClient::start(spec(&["--mode", "negate", "--dtypes", "int16"], 10.0)).unwrap();
    let reply = c
        .run_raw("def @main() { add(const uint8 () [1], const uint8 () [2]) }", &[], &Default::default())
        .unwrap();
    assert_eq!(reply, optfuzz::harness::AdapterReply::Unsupported);
}

#[test]
fn dead_adapter_is_recorded_and_the_campaign_continues() {
    let cfg = CampaignConfig {
        iterations: 20,
        p0: 0.0,
        adapters: vec![spec(&["--mode", "die"], 5.0)],
        ..CampaignConfig::default()
    };
    let r = run_campaign(&cfg).unwrap();
    assert_eq!(r.iterations, 20);
    assert!(!r.adapter_errors.is_empty());
    assert!(r.adapter_errors[0].contains("died"), "{:?}", r.adapter_errors);
}

#[test]
fn echo_campaign_is_clean() {
    let cfg = CampaignConfig {
        iterations: 50,
        master_seed: 4,
        adapters: vec![spec(&["--mode", "echo"], 10.0)],
        ..CampaignConfig::default()
    };
    let r = run_campaign(&cfg).unwrap();
    assert_eq!(r.new_bugs, 0, "{:?}", r.bugs);
    assert!(r.adapter_errors.is_empty());
}
