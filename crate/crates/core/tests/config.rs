mod common;

use common::*;
use rec_core::config::{resolve_config, RecConfig};
use rec_core::sim::initial_state;

#[test]
fn shipped_configs_load() {
    let rec2 = load("rec2");
    assert_eq!(rec2.member_count(), 2);
    assert_eq!(rec2.time_grid.horizon, 101);
    assert!(rec2.profiles.len() >= rec2.time_grid.horizon);
    assert_eq!(initial_state(&rec2).soc, vec![0.5]);

    let rec7 = load("rec7");
    assert_eq!(rec7.member_count(), 7);
    assert_eq!(rec7.batteries.len(), 1);
    assert_eq!(initial_state(&rec7).soc, vec![2628.0]);
    assert_eq!(rec7.time_grid.steps_per_billing(), 5 * 45);
    assert_eq!(load("rec7-t721").time_grid.horizon, 721);
    assert_eq!(load("rec7-scaled").time_grid.markets_per_billing, 9);
}

#[test]
fn config_round_trips_through_disk() {
    let rec2 = load("rec2");
    let dir = std::env::temp_dir().join(format!("rec-config-test-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = rec2.save(&dir).unwrap();
    let back = resolve_config(path.to_str().unwrap(), &dir).unwrap();
    assert_eq!(back, rec2);
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn invalid_configs_are_rejected() {
    let dir = config_dir();
    let text = std::fs::read_to_string(dir.join("rec2.json")).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["tariffs"]["buy"] = serde_json::json!([0.1]);
    assert!(RecConfig::from_json(&v.to_string(), &dir).is_err());

    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["batteries"][0]["owner"] = serde_json::json!(5);
    assert!(RecConfig::from_json(&v.to_string(), &dir).is_err());

    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["time_grid"]["horizon"] = serde_json::json!(100_000);
    assert!(RecConfig::from_json(&v.to_string(), &dir).is_err());

    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["unknown"] = serde_json::json!(1);
    assert!(RecConfig::from_json(&v.to_string(), &dir).is_err());
    assert!(resolve_config("does-not-exist", &dir).is_err());
}
