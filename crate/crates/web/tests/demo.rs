use serde_json::Value;
use skf_web::Demo;

fn json(s: String) -> Value {
    serde_json::from_str(&s).unwrap()
}

#[test]
fn courses_are_normalized_and_carry_metrics() {
    let demo = Demo::new(12.0, "both").unwrap();
    assert_eq!((demo.node_count(), demo.step_count()), (1189, 40));
    let v = json(demo.courses(0.0, 0.0, 30.0, 0.5, false, 0).unwrap());
    for key in ["deep_true", "sup_true", "deep_est", "sup_est", "times_ms"] {
        assert_eq!(v[key].as_array().unwrap().len(), 40, "{key}");
    }
    let peak = v["deep_est"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap().abs()).fold(0.0, f64::max);
    assert!((peak - 1.0).abs() < 1e-12);
    assert!(v["metrics"]["loc_err_deep_mm"].as_f64().unwrap() <= 20.0);
    assert_eq!(v["t_deep"], 15);
}

#[test]
fn slice_covers_the_coronal_plane() {
    let demo = Demo::new(12.0, "deep").unwrap();
    let v = json(demo.slice(0.0, 0.0, 30.0, 0.5, false, 0, 15).unwrap());
    let points = v["points"].as_array().unwrap();
    assert!(!points.is_empty());
    assert!(points.iter().all(|p| p[2].as_f64().unwrap() <= 1.0));
    assert_eq!(v["deep"], serde_json::json!([-24.0, 12.0]));
}

#[test]
fn prior_table_matches_the_default_grid() {
    let demo = Demo::new(12.0, "both").unwrap();
    let v = json(demo.priors(20.0).unwrap());
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 4);
    let low = rows.iter().find(|r| r["ep_snr_db"] == 0.0 && r["pm_snr_db"] == 0.0).unwrap();
    let theta0 = low["theta0"].as_f64().unwrap();
    assert!((theta0 - 0.01 * 100.0 / 1189.0).abs() < 1e-15);
}
