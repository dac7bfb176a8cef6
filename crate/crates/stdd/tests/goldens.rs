//! Channel plans against hand-derived JSON goldens.

use std::path::Path;

use stdd::mcm::{plan_channels, BoundaryPolicy, MixMode, MixSpec};
use stdd::Error;

fn golden_map() -> serde_json::Map<String, serde_json::Value> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/goldens/channel_plans.json");
    let text = std::fs::read_to_string(path).unwrap();
    match serde_json::from_str(&text).unwrap() {
        serde_json::Value::Object(m) => m,
        other => panic!("golden root is {other:?}, not an object"),
    }
}

fn parse_key(key: &str) -> (MixMode, usize, f64, usize) {
    let mut parts = key.split('_');
    let mode = match parts.next().unwrap() {
        "separate" => MixMode::Separate,
        "continual" => MixMode::Continual,
        other => panic!("bad mode {other}"),
    };
    let d: usize = parts.next().unwrap().strip_prefix('D').unwrap().parse().unwrap();
    let g: f64 = parts.next().unwrap().strip_prefix('g').unwrap().parse().unwrap();
    let delta: usize = parts.next().unwrap().strip_prefix("delta").unwrap().parse().unwrap();
    (mode, d, g, delta)
}

#[test]
fn plans_match_goldens_byte_for_byte() {
    let goldens = golden_map();
    assert_eq!(goldens.len(), 24, "full (mode, D, gamma, delta) grid");
    for (key, expected) in &goldens {
        let (mode, d, gamma, delta) = parse_key(key);
        let spec = MixSpec::new(vec![delta], gamma, mode, BoundaryPolicy::ZeroFill);
        let plan = plan_channels(d, delta, &spec);
        if expected == "error" {
            assert!(
                matches!(plan, Err(Error::Config(_))),
                "{key}: expected a configuration error"
            );
            continue;
        }
        let plan = plan.unwrap_or_else(|e| panic!("{key}: {e}"));
        assert_eq!(
            serde_json::to_string(&plan.to_json()).unwrap(),
            serde_json::to_string(expected).unwrap(),
            "{key}"
        );
    }
}

#[test]
fn continual_at_unit_scale_equals_separate() {
    for d in [8usize, 16, 64] {
        for gamma in [0.125, 0.25] {
            let sep = plan_channels(
                d,
                1,
                &MixSpec::new(vec![1], gamma, MixMode::Separate, BoundaryPolicy::ZeroFill),
            )
            .unwrap();
            let cont = plan_channels(
                d,
                1,
                &MixSpec::new(vec![1], gamma, MixMode::Continual, BoundaryPolicy::ZeroFill),
            )
            .unwrap();
            assert_eq!(sep, cont, "D={d}, gamma={gamma}");
        }
    }
}
