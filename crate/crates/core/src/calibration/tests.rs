use super::*;
use rand::Rng;

fn quick(mut s: CalibrationScenario) -> CalibrationScenario {
    s.sampler = SamplerConfig::new(2, 200, 600, 1);
    s
}

fn median(x: &[f64]) -> f64 {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    0.5 * (v[(n - 1) / 2] + v[n / 2])
}

#[test]
fn ks_evenly_spaced_grid() {
    let n = 200;
    let p: Vec<f64> = (1..=n).map(|i| i as f64 / (n + 1) as f64).collect();
    let r = ks_uniformity(&p).unwrap();
    assert!((r.statistic - 1.0 / (n + 1) as f64).abs() < 1e-12);
    assert!(!r.rejects(0.10));
    assert!((r.critical(0.01).unwrap() - 0.1151).abs() < 1e-4);
}

#[test]
fn ks_point_mass_rejects() {
    let r = ks_uniformity(&[0.5; 50]).unwrap();
    assert_eq!(r.statistic, 0.5);
    assert!(r.rejects(0.01));
    assert!(r.p_value < 1e-6);
}

#[test]
fn ks_uniform_draws_pass() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let p: Vec<f64> = (0..1000).map(|_| rng.random::<f64>()).collect();
    let r = ks_uniformity(&p).unwrap();
    assert!((r.critical(0.05).unwrap() - 0.0429).abs() < 1e-3);
    assert!(r.statistic < r.critical(0.05).unwrap());
    assert!(r.p_value > 0.05);
}

#[test]
fn ks_errors() {
    assert_eq!(ks_uniformity(&[0.5; 10]), Err(KsError::TooFew(10)));
    let mut p = vec![0.5; 30];
    p[3] = 1.5;
    assert_eq!(ks_uniformity(&p), Err(KsError::OutOfRange(1.5)));
}

#[test]
fn kolmogorov_tail_values() {
    // classical table: Pr(K > 1.358) ≈ 0.05, Pr(K > 1.628) ≈ 0.01
    assert!((kolmogorov_sf(1.358) - 0.05).abs() < 1e-3);
    assert!((kolmogorov_sf(1.628) - 0.01).abs() < 5e-4);
    assert_eq!(kolmogorov_sf(0.0), 1.0);
}

#[test]
fn scenario_json_round_trip() {
    let s = normal::degenerate(150);
    let back = CalibrationScenario::from_json_str(&s.to_json_pretty()).unwrap();
    assert_eq!(back.model.hash(), s.model.hash());
    assert_eq!(back.generator.unwrap().hash(), s.generator.unwrap().hash());
    assert_eq!(back.fixed, s.fixed);
    assert_eq!(back.method, Selection::Fixed(Method::TwoSided));
    assert!(CalibrationScenario::from_json_str(r#"{"bogus": 1}"#).is_err());
}

#[test]
fn scenario_checks() {
    let err = |s: CalibrationScenario| matches!(s.check(), Err(CalibrationError::InvalidScenario(_)));
    assert!(err(normal::null(20)));
    let mut s = normal::null(100);
    s.data_nodes.push("nope".into());
    assert!(err(s));
    let mut s = normal::null(100);
    s.data_nodes = vec!["mu".into()];
    assert!(err(s));
    assert!(normal::null(100).check().is_ok());
    assert!(normal::by_name("normal-shift-3", 100).is_some());
    assert!(normal::by_name("other", 100).is_none());
}

#[test]
fn null_scenario_is_uniform_and_reproducible() {
    let s = quick(normal::null(120));
    let p = run_calibration(&s, 5).unwrap();
    assert_eq!(p.len(), 120);
    let ks = ks_uniformity(&p).unwrap();
    assert!(!ks.rejects(0.01), "KS {}", ks.statistic);
    assert_eq!(run_calibration(&s, 5).unwrap(), p);
    assert_ne!(run_calibration(&s, 6).unwrap(), p);
}

#[test]
fn degenerate_scenario_is_flagged() {
    let p = run_calibration(&quick(normal::degenerate(100)), 1).unwrap();
    let ks = ks_uniformity(&p).unwrap();
    assert!(ks.rejects(0.01), "KS {}", ks.statistic);
}

#[test]
fn power_grows_with_shift() {
    let medians: Vec<f64> = [0.0, 1.5, 3.0]
        .iter()
        .map(|&s| median(&run_calibration(&quick(normal::shifted(100, s)), 2).unwrap()))
        .collect();
    assert!(medians[2] < 0.5, "{medians:?}");
    // at most MC noise of the median at 100 replicates
    assert!(medians[1] <= medians[0] + 0.05 && medians[2] <= medians[1] + 0.05, "{medians:?}");
}
