use super::*;
use crate::graph::io::from_json_str;
use crate::inference::{run_mcmc, SamplerConfig};

fn chain_model() -> DagModel {
    from_json_str(
        r#"{ "nodes": [
            { "name": "theta", "family": "normal", "params": [0, 1] },
            { "name": "y", "family": "normal", "params": ["theta", 4], "observed": 1.3 }
        ] }"#,
    )
    .unwrap()
}

/// Units `theta[i]` with data `y[i,j]`, population mean `beta` and a shared
/// data precision `gamma`.
fn hierarchical() -> DagModel {
    let mut nodes = vec![
        r#"{ "name": "beta", "family": "normal", "params": [0, 0.01] }"#.to_string(),
        r#"{ "name": "gamma", "family": "gamma", "params": [1, 1] }"#.to_string(),
    ];
    for i in 1..=3 {
        nodes.push(format!(r#"{{ "name": "theta[{i}]", "family": "normal", "params": ["beta", 1] }}"#));
        for j in 1..=2 {
            let y = i as f64 + 0.1 * j as f64;
            nodes.push(format!(
                r#"{{ "name": "y[{i},{j}]", "family": "normal", "params": ["theta[{i}]", "gamma"], "observed": {y} }}"#
            ));
        }
    }
    from_json_str(&format!(r#"{{ "nodes": [{}] }}"#, nodes.join(","))).unwrap()
}

fn names(m: &BTreeMap<String, Part>, part: Part) -> Vec<&str> {
    m.iter().filter(|(_, &p)| p == part).map(|(k, _)| k.as_str()).collect()
}

#[test]
fn copy_names_keep_indices() {
    assert_eq!(copy_name("theta", Part::A), "theta_a");
    assert_eq!(copy_name("phi[9]", Part::B), "phi_b[9]");
}

#[test]
fn jeffreys_references_by_support() {
    let (f, p, t) = jeffreys_reference(FlatSupport::Unit, 0);
    assert_eq!((f, t), (Family::Beta, Transform::Logit));
    assert_eq!(p, vec![Expr::Const(0.5), Expr::Const(0.5)]);
    let (f, _, t) = jeffreys_reference(FlatSupport::Positive, 0);
    assert_eq!(t, Transform::Log);
    assert!(matches!(f, Family::ImproperFlat { scale: Transform::Log, .. }));
    let (f, _, t) = jeffreys_reference(FlatSupport::Real, 2);
    assert_eq!(t, Transform::Identity);
    assert!(matches!(f, Family::ImproperFlat { support: FlatSupport::Real, dim: 2, .. }));
}

#[test]
fn auto_partition_on_a_chain() {
    let m = from_json_str(
        r#"{ "nodes": [
            { "name": "a", "family": "normal", "params": [0, 1] },
            { "name": "theta", "family": "normal", "params": ["a", 1] },
            { "name": "y", "family": "normal", "params": ["theta", 1], "observed": 0.5 }
        ] }"#,
    )
    .unwrap();
    let p = auto_partition(&m, &["theta".into()], "y").unwrap();
    assert_eq!(names(&p, Part::B), vec!["y"]);
    assert_eq!(names(&p, Part::A), vec!["a"]);
    assert!(matches!(auto_partition(&m, &["theta".into()], "theta"), Err(SplitError::AnchorIsSeparator(_))));
}

#[test]
fn auto_partition_on_hierarchical_model() {
    let m = hierarchical();
    let p = auto_partition(&m, &["theta[2]".into(), "gamma".into()], "y[2,1]").unwrap();
    assert_eq!(names(&p, Part::B), vec!["y[2,1]", "y[2,2]"]);
    assert!(names(&p, Part::A).contains(&"beta"));
    // the shared precision links unit 2 to the population mean
    match auto_partition(&m, &["theta[2]".into()], "y[2,1]") {
        Err(SplitError::NotSeparable(path)) => {
            assert_eq!(path.first().map(String::as_str), Some("y[2,1]"));
            assert_eq!(path.last().map(String::as_str), Some("beta"));
            assert!(path.contains(&"gamma".to_string()));
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn prior_versus_likelihood_split() {
    let s = split_node(&chain_model(), &SplitSpec::anchored(&["theta"], "y")).unwrap();
    let a = s.model.node("theta_a").unwrap();
    assert_eq!(a.distribution().unwrap().family, Family::Normal);
    let b = s.model.node("theta_b").unwrap();
    assert!(matches!(b.distribution().unwrap().family, Family::ImproperFlat { support: FlatSupport::Real, .. }));
    let y = s.model.node("y").unwrap();
    assert_eq!(y.references(), BTreeSet::from(["theta_b".to_string()]));
    assert_eq!(s.labels["y"], Label::B);
    assert_eq!(s.delta_spec, vec![DeltaComponent { a: "theta_a".into(), b: "theta_b".into(), transform: Transform::Identity }]);
    assert!(s.model.validate().warnings.is_empty());
}

#[test]
fn nuisance_cut_on_hierarchical_model() {
    let spec = SplitSpec {
        cuts: vec![("gamma".into(), Part::B)],
        ..SplitSpec::anchored(&["theta[2]"], "y[2,1]")
    };
    let s = split_node(&hierarchical(), &spec).unwrap();
    assert_eq!(s.labels["gamma"], Label::Shared);
    let cut = |p: &str, c: &str| s.model.cuts().contains(&(NodeId::new(p), NodeId::new(c)));
    assert!(cut("gamma", "y[2,1]") && cut("gamma", "y[2,2]"));
    assert!(!cut("gamma", "y[1,1]"));
    let rep = s.model.node("theta_a[2]").unwrap();
    assert_eq!(rep.references(), BTreeSet::from(["beta".to_string()]));
    assert!(s.model.node("theta_b[2]").unwrap().references().is_empty());
    assert_eq!(s.model.node("y[2,1]").unwrap().references(), BTreeSet::from(["gamma".into(), "theta_b[2]".into()]));
    // the original model is untouched
    assert!(hierarchical().node("theta[2]").is_some());
}

#[test]
fn deterministic_separator_is_severed_on_b_side() {
    let m = from_json_str(
        r#"{ "nodes": [
            { "name": "a", "family": "beta", "params": [1, 1] },
            { "name": "b", "family": "beta", "params": [1, 1] },
            { "name": "p", "expr": "(* a b)", "support": "unit" },
            { "name": "q", "expr": "(+ (* 0.5 a) (* 0.5 b))", "support": "unit" },
            { "name": "ya", "family": "binomial", "params": [100, "a"], "observed": 40 },
            { "name": "yp", "family": "binomial", "params": [50, "p"], "observed": 10 },
            { "name": "yq", "family": "binomial", "params": [50, "q"], "observed": 20 }
        ] }"#,
    )
    .unwrap();
    let s = split_node(&m, &SplitSpec::anchored(&["p"], "yp")).unwrap();
    assert!(matches!(s.model.node("p_a").unwrap().kind, NodeKind::Deterministic { .. }));
    let pb = s.model.node("p_b").unwrap();
    assert_eq!(pb.distribution().unwrap().family, Family::Beta);
    assert_eq!(s.delta_spec[0].transform, Transform::Logit);
    assert_eq!(s.labels["yp"], Label::B);
    for n in ["a", "b", "q", "ya", "yq"] {
        assert_eq!(s.labels[n], Label::A, "{n}");
    }
}

#[test]
fn deterministic_children_of_separator_are_cloned_when_shared() {
    // `d` depends on the separator alone and feeds both partitions
    let m = from_json_str(
        r#"{ "nodes": [
            { "name": "theta", "family": "beta", "params": [1, 1] },
            { "name": "d", "expr": "(* 0.5 theta)" },
            { "name": "y1", "family": "binomial", "params": [10, "d"], "observed": 3 },
            { "name": "y2", "family": "binomial", "params": [10, "theta"], "observed": 6 }
        ] }"#,
    )
    .unwrap();
    let spec = SplitSpec {
        assignment: Some(BTreeMap::from([("y1".into(), Part::B), ("y2".into(), Part::A), ("d".into(), Part::B)])),
        ..SplitSpec::anchored(&["theta"], "y1")
    };
    let s = split_node(&m, &spec).unwrap();
    assert_eq!(s.model.node("d").unwrap().references(), BTreeSet::from(["theta_b".to_string()]));

    let spec = SplitSpec {
        anchor: None,
        assignment: Some(BTreeMap::from([("y1".into(), Part::B), ("y2".into(), Part::A)])),
        ..spec
    };
    // `d` feeds only y1 here, so it is not cloned
    let s = split_node(&m, &spec).unwrap();
    assert_eq!(s.labels["d"], Label::B);

    let m2 = from_json_str(
        r#"{ "nodes": [
            { "name": "theta", "family": "beta", "params": [1, 1] },
            { "name": "d", "expr": "(* 0.5 theta)" },
            { "name": "y1", "family": "binomial", "params": [10, "d"], "observed": 3 },
            { "name": "y2", "family": "binomial", "params": [10, "d"], "observed": 6 }
        ] }"#,
    )
    .unwrap();
    // siblings of the anchor follow it into b
    let s = split_node(&m2, &SplitSpec::anchored(&["theta"], "y1")).unwrap();
    assert_eq!(s.labels["y2"], Label::B);
    let spec = SplitSpec {
        anchor: None,
        assignment: Some(BTreeMap::from([("y1".into(), Part::B), ("y2".into(), Part::A)])),
        ..SplitSpec::anchored(&["theta"], "y1")
    };
    let s = split_node(&m2, &spec).unwrap();
    assert_eq!(s.model.node("d_a").unwrap().references(), BTreeSet::from(["theta_a".to_string()]));
    assert_eq!(s.model.node("d_b").unwrap().references(), BTreeSet::from(["theta_b".to_string()]));
    assert_eq!(s.model.node("y1").unwrap().references(), BTreeSet::from(["d_b".to_string()]));
    assert_eq!(s.model.node("y2").unwrap().references(), BTreeSet::from(["d_a".to_string()]));
}

#[test]
fn split_errors() {
    let m = chain_model();
    let spec = SplitSpec::anchored(&["y"], "theta");
    assert!(matches!(split_node(&m, &spec), Err(SplitError::SeparatorObserved(_))));
    let spec = SplitSpec { anchor: None, assignment: Some(BTreeMap::new()), ..SplitSpec::anchored(&["theta"], "y") };
    assert!(matches!(split_node(&m, &spec), Err(SplitError::Unassigned(n)) if n == "y"));
    let spec = SplitSpec { transforms: Some(vec![Transform::Logit]), ..SplitSpec::anchored(&["theta"], "y") };
    assert!(matches!(split_node(&m, &spec), Err(SplitError::TransformMismatch { .. })));
    let spec = SplitSpec {
        reference_prior: RefPriors { a: RefPrior::Keep, b: RefPrior::Flat(Transform::Log) },
        ..SplitSpec::anchored(&["theta"], "y")
    };
    assert!(matches!(split_node(&m, &spec), Err(SplitError::ReferencePriorSupport { .. })));
    assert!(matches!(split_node(&m, &SplitSpec::anchored(&["nope"], "y")), Err(SplitError::UnknownNode(_))));
}

#[test]
fn spec_json_round_trip() {
    let text = r#"{ "separators": ["phi[9]"], "anchor": "y[9,1]",
        "reference_prior": { "b": { "flat": "identity" } }, "cuts": [["tau", "b"]] }"#;
    let spec = SplitSpec::from_json_str(text).unwrap();
    assert_eq!(spec.reference_prior.a, RefPrior::Keep);
    assert_eq!(spec.reference_prior.b, RefPrior::Flat(Transform::Identity));
    assert_eq!(spec.cuts, vec![("tau".to_string(), Part::B)]);
    assert_eq!(SplitSpec::from_json_str(&spec.to_json_pretty()).unwrap(), spec);
    assert!(SplitSpec::from_json_str(r#"{ "separators": [], "bogus": 1 }"#).is_err());
}

#[test]
fn logit_delta_of_known_draw() {
    let t = Transform::Logit;
    let d = t.apply(0.5) - t.apply(0.25);
    assert!((d - 3f64.ln()).abs() < 1e-15);
}

#[test]
fn delta_samples_from_trace() {
    let m = from_json_str(
        r#"{ "nodes": [
            { "name": "theta", "family": "beta", "params": [2, 2] },
            { "name": "y", "family": "binomial", "params": [20, "theta"], "observed": 15 }
        ] }"#,
    )
    .unwrap();
    let s = split_node(&m, &SplitSpec::anchored(&["theta"], "y")).unwrap();
    let trace = run_mcmc(&s.model, &SamplerConfig::new(2, 100, 300, 1)).unwrap();
    let d = delta_samples(&trace, &s).unwrap();
    assert_eq!((d.k(), d.n_chains(), d.n_draws()), (1, 2, 300));
    let a = trace.chains_of("theta_a").unwrap();
    let b = trace.chains_of("theta_b").unwrap();
    let expected = Transform::Logit.apply(a[1][7]) - Transform::Logit.apply(b[1][7]);
    assert_eq!(d.series(1, 0)[7], expected);

    let unsplit = run_mcmc(&m, &SamplerConfig::new(2, 100, 300, 1)).unwrap();
    assert!(matches!(delta_samples(&unsplit, &s), Err(SplitError::HashMismatch { .. })));
}

#[test]
fn identical_copies_give_zero_delta() {
    let d = DeltaSamples::scalar(vec![0.3, 0.7]).map(|x| x - x);
    assert!(d.pooled(0).iter().all(|&v| v == 0.0));
}
