//! Campaigns are reproducible: reruns agree bitwise outside wall-clock
//! fields, and rollout parallelism does not change any metric.

use cat_mppi::runner::{run_campaign, CampaignConfig, CampaignResults};
use serde_json::Value;

fn config() -> CampaignConfig {
    let mut c = CampaignConfig::new(vec!["2".into(), "6".into()]);
    c.seeds = 2;
    c.max_duration = Some(0.6);
    c
}

/// Removes every wall-clock field, recursively.
fn strip_timing(v: &mut Value) {
    match v {
        Value::Object(map) => {
            map.retain(|k, _| k != "compute_time_ms" && k != "wall_time_ms");
            map.values_mut().for_each(strip_timing);
        }
        Value::Array(items) => items.iter_mut().for_each(strip_timing),
        _ => {}
    }
}

fn trials(results: &CampaignResults) -> Vec<Value> {
    results
        .trials
        .iter()
        .map(|t| {
            let mut v = serde_json::to_value(t).unwrap();
            strip_timing(&mut v);
            v
        })
        .collect()
}

fn assert_close(a: &Value, b: &Value, tol: f64, path: &str) {
    match (a, b) {
        (Value::Number(x), Value::Number(y)) => {
            let (x, y) = (x.as_f64().unwrap(), y.as_f64().unwrap());
            assert!((x - y).abs() <= tol, "{path}: {x} vs {y}");
        }
        (Value::Object(x), Value::Object(y)) => {
            assert_eq!(x.len(), y.len(), "{path}");
            for (k, xv) in x {
                assert_close(xv, &y[k], tol, &format!("{path}.{k}"));
            }
        }
        (Value::Array(x), Value::Array(y)) => {
            assert_eq!(x.len(), y.len(), "{path}");
            for (i, (xv, yv)) in x.iter().zip(y).enumerate() {
                assert_close(xv, yv, tol, &format!("{path}[{i}]"));
            }
        }
        _ => assert_eq!(a, b, "{path}"),
    }
}

#[test]
fn rerun_is_bitwise_identical() {
    let c = config();
    let a = run_campaign(&c).unwrap();
    let b = run_campaign(&c).unwrap();
    assert_eq!(trials(&a), trials(&b));
    let lines = |r: &CampaignResults| -> Vec<Value> {
        r.to_jsonl()
            .unwrap()
            .lines()
            .map(|l| {
                let mut v: Value = serde_json::from_str(l).unwrap();
                strip_timing(&mut v);
                v
            })
            .collect()
    };
    assert_eq!(lines(&a), lines(&b));
}

#[test]
fn parallel_and_serial_agree() {
    let mut serial = config();
    serial.parallel_rollouts = Some(false);
    let mut parallel = config();
    parallel.parallel_rollouts = Some(true);
    parallel.parallel_trials = true;
    let a = trials(&run_campaign(&serial).unwrap());
    let b = trials(&run_campaign(&parallel).unwrap());
    assert_close(&Value::Array(a), &Value::Array(b), 1e-12, "trials");
}
