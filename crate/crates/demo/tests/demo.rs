use mep_demo::{buffer_priorities, proposal, proposal_js, resample_entropy, simulate_buffer};
use serde_json::Value;

fn parse(s: &str) -> Value {
    serde_json::from_str(s).unwrap()
}

#[test]
fn proposal_raises_entropy() {
    let v = parse(&proposal(20, 4.0).unwrap());
    let q: Vec<f64> = v["q"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert_eq!(q.len(), 20);
    assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!(v["delta"].as_f64().unwrap() >= 0.0);
    // flat p stays flat
    let flat = parse(&proposal(5, 0.0).unwrap());
    assert!(flat["delta"].as_f64().unwrap().abs() < 1e-12);
}

#[test]
fn bad_input_becomes_error_json() {
    assert!(proposal(1, 1.0).is_err());
    assert!(parse(&proposal_js(1, 1.0))["error"].is_string());
    assert!(simulate_buffer(10, 2.0, 0).is_err());
}

#[test]
fn rarest_episode_is_most_likely() {
    let v = parse(&buffer_priorities(60, 0.6, 3, 1).unwrap());
    let pts = v["points"].as_array().unwrap();
    assert_eq!(pts.len(), 60);
    let top = pts.iter().find(|p| p["rank"] == 60).unwrap();
    let max = pts.iter().map(|p| p["sample_prob"].as_f64().unwrap()).fold(0.0, f64::max);
    assert_eq!(top["sample_prob"].as_f64().unwrap(), max);
    let total: f64 = pts.iter().map(|p| p["sample_prob"].as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-9);
}

#[test]
fn resampling_is_deterministic() {
    let a = resample_entropy(80, 0.8, 3, 400, 2).unwrap();
    assert_eq!(a, resample_entropy(80, 0.8, 3, 400, 2).unwrap());
    let v = parse(&a);
    assert_eq!(v["mep_goals"].as_array().unwrap().len(), 400);
    assert!(v["uniform_entropy"].as_f64().unwrap() > 0.0);
}
