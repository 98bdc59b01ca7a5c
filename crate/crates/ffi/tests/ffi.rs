use nodesplit_ffi::*;
use std::ffi::{CStr, CString};
use std::ptr;

fn last_error() -> String {
    let p = ns_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

const MODEL: &str = r#"{ "nodes": [
    { "name": "b", "family": "beta", "params": [0.5, 0.5] },
    { "name": "y", "family": "binomial", "params": [882, "b"], "observed": 12 } ] }"#;

#[test]
fn model_round_trip_and_hash() {
    let json = CString::new(MODEL).unwrap();
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { ns_model_from_json(json.as_ptr(), &mut model) }, NsStatus::Ok);
    assert!(ns_last_error().is_null());
    let mut buf = [0 as std::ffi::c_char; 65];
    assert_eq!(unsafe { ns_model_hash(model, buf.as_mut_ptr(), 10) }, NsStatus::BufferTooSmall);
    assert_eq!(unsafe { ns_model_hash(model, buf.as_mut_ptr(), buf.len()) }, NsStatus::Ok);
    let hash = unsafe { CStr::from_ptr(buf.as_ptr()) }.to_str().unwrap();
    assert_eq!(hash.len(), 64);
    unsafe { ns_model_free(model) };
}

#[test]
fn errors_are_reported() {
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { ns_model_from_json(ptr::null(), &mut model) }, NsStatus::NullPointer);
    let bad = CString::new("{ \"nodes\": [ }").unwrap();
    assert_eq!(unsafe { ns_model_from_json(bad.as_ptr(), &mut model) }, NsStatus::Model);
    assert!(last_error().contains("line"), "{}", last_error());
    let id = CString::new("flu").unwrap();
    assert_eq!(unsafe { ns_model_from_corpus(id.as_ptr(), &mut model) }, NsStatus::InvalidArgument);
    assert!(model.is_null());
    let mut out = NsConflict { p_value: 0.0, mc_se: 0.0, ess: 0.0, n_draws: 0, method: NsMethod::Auto };
    let two = [1.0, 2.0, 3.0, 4.0];
    assert_eq!(unsafe { ns_conflict_draws(two.as_ptr(), 2, 2, NsMethod::TwoSided, 0.0, &mut out) }, NsStatus::Conflict);
    unsafe { ns_model_free(ptr::null_mut()) };
}

#[test]
fn corpus_split_sample_conflict() {
    let id = CString::new("hiv").unwrap();
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { ns_model_from_corpus(id.as_ptr(), &mut model) }, NsStatus::Ok);
    let spec = CString::new("hiv-b:2").unwrap();
    let mut split = ptr::null_mut();
    assert_eq!(unsafe { ns_split_new(model, spec.as_ptr(), &mut split) }, NsStatus::Ok);
    assert_eq!(unsafe { ns_split_dim(split) }, 1);
    let cfg = NsSamplerConfig { n_chains: 2, burn_in: 1000, retained: 3000, thin: 1, seed: 11 };
    let mut trace = ptr::null_mut();
    assert_eq!(unsafe { ns_sample(model, split, cfg, &mut trace) }, NsStatus::Ok);
    assert_eq!(unsafe { ns_trace_len(trace) }, 6000);

    let name = CString::new("p_b[2]").unwrap();
    let mut written = 0;
    assert_eq!(unsafe { ns_trace_column(trace, name.as_ptr(), ptr::null_mut(), 0, &mut written) }, NsStatus::BufferTooSmall);
    assert_eq!(written, 6000);
    let mut col = vec![0.0; written];
    assert_eq!(unsafe { ns_trace_column(trace, name.as_ptr(), col.as_mut_ptr(), col.len(), &mut written) }, NsStatus::Ok);
    assert!(col.iter().all(|p| (0.0..1.0).contains(p)));

    let mut out = NsConflict { p_value: 0.0, mc_se: 0.0, ess: 0.0, n_draws: 0, method: NsMethod::Auto };
    assert_eq!(unsafe { ns_conflict(split, trace, NsMethod::TwoSided, 0.0, &mut out) }, NsStatus::Ok);
    assert_eq!(out.method, NsMethod::TwoSided);
    assert!(out.p_value < 0.05 && out.mc_se > 0.0 && out.n_draws == 6000);
    assert_eq!(unsafe { ns_conflict(split, trace, NsMethod::Auto, 0.0, &mut out) }, NsStatus::Ok);
    assert_ne!(out.method, NsMethod::Auto);
    unsafe {
        ns_trace_free(trace);
        ns_split_free(split);
        ns_model_free(model);
    }
}

#[test]
fn raw_draws_and_discrete() {
    let draws: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0 * 4.0 - 1.0).collect();
    let mut out = NsConflict { p_value: 0.0, mc_se: 0.0, ess: 0.0, n_draws: 0, method: NsMethod::Auto };
    assert_eq!(unsafe { ns_conflict_draws(draws.as_ptr(), 1000, 1, NsMethod::TwoSided, 0.0, &mut out) }, NsStatus::Ok);
    assert!((out.p_value - 0.5).abs() < 1e-12, "{}", out.p_value);
    let pairs: Vec<f64> = (0..1000).flat_map(|i| [(i as f64 * 0.37).sin(), (i as f64 * 1.91).cos() + 0.2]).collect();
    assert_eq!(unsafe { ns_conflict_draws(pairs.as_ptr(), 1000, 2, NsMethod::Chi2, 0.0, &mut out) }, NsStatus::Ok);
    assert!((0.0..=1.0).contains(&out.p_value));

    let (pa, pb) = ([0.1, 0.9], [0.1, 0.9]);
    assert_eq!(unsafe { ns_conflict_discrete(pa.as_ptr(), pb.as_ptr(), 2, &mut out) }, NsStatus::Ok);
    assert!((out.p_value - 0.82).abs() < 1e-12);
    assert_eq!(out.method, NsMethod::Discrete);
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(ns_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_the_api_and_compiles() {
    let header = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("include/nodesplit.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for sym in ["ns_model_from_json", "ns_sample", "ns_conflict_draws", "NS_STATUS_BUFFER_TOO_SMALL", "typedef struct NsModel NsModel"] {
        assert!(text.contains(sym), "{sym} missing from header");
    }
    let Ok(status) = std::process::Command::new("cc").args(["-fsyntax-only", "-x", "c"]).arg(&header).status() else {
        eprintln!("no C compiler; skipping header syntax check");
        return;
    };
    assert!(status.success());
}
