use super::*;
use crate::calibration::forward_sample;
use crate::conflict::{conflict_discrete, conflict_two_sided};
use crate::graph::{Family, NodeKind, Value};
use crate::inference::{run_mcmc, SamplerConfig};
use crate::split::{check_independence, delta_samples, split_node, Label};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;

#[test]
fn disease_test_examples() {
    let (pa, pb) = build_disease_test(0.1, 0.9, 0.9, 1).unwrap();
    assert!((pb[0] - 0.1).abs() < 1e-15 && (pb[1] - 0.9).abs() < 1e-15);
    assert!((conflict_discrete(&pa, &pb).unwrap().p_value - 0.18).abs() < 1e-12);
    let (pa, pb) = build_disease_test(1.0, 0.9, 0.9, 1).unwrap();
    assert!((conflict_discrete(&pa, &pb).unwrap().p_value - 0.9).abs() < 1e-12);
    for pi in [0.0, 0.3, 0.8] {
        let (pa, pb) = build_disease_test(pi, 0.5, 0.5, 1).unwrap();
        assert_eq!(pb, vec![0.5, 0.5]);
        assert!((conflict_discrete(&pa, &pb).unwrap().p_value - 0.5).abs() < 1e-15);
    }
    let (_, pb) = build_disease_test(0.1, 0.8, 0.7, 0).unwrap();
    assert!((pb[0] - 0.7 / 0.9).abs() < 1e-15);
    assert!(matches!(build_disease_test(0.1, 1.0, 0.9, 1), Err(CorpusError::BoundaryProbability { name: "s", .. })));
    assert!(matches!(build_disease_test(0.1, 0.9, 0.9, 2), Err(CorpusError::InvalidOutcome(2))));
}

#[test]
fn hiv_data_matches_table() {
    let s: Vec<String> = HIV_DATA.iter().map(|(i, y, n)| format!("{i},{y},{n}")).collect();
    let digest = hex::encode(Sha256::digest(s.join(";").as_bytes()));
    assert_eq!(digest, "d1ba0dfc7c1de258d00462b7530d7c63448084440006c0311e353447455d294d");
    assert!(HIV_DATA.iter().all(|&(_, y, n)| y <= n));
    assert_eq!(HIV_DATA[0], (1, 11044, 104577));
    assert_eq!(HIV_DATA[11], (12, 5, 31));
}

#[test]
fn hiv_model_structure() {
    let m = build_hiv_model(HivPrior::Uniform);
    assert!(m.validate().is_ok());
    assert_eq!(m.nodes().iter().filter(|n| n.is_observed()).count(), 12);
    let fixed: BTreeMap<String, Value> = [("a", 0.1), ("b", 0.01), ("d", 0.02), ("e", 0.001), ("w", 0.12)]
        .iter()
        .map(|&(k, v)| (k.to_string(), Value::Scalar(v)))
        .collect();
    let v = forward_sample(&m, &fixed, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    assert!((v["p[12]"].as_scalar().unwrap() - 0.2814678899082569).abs() < 1e-14);
}

#[test]
fn hiv_prior_probabilities_stay_in_unit_interval() {
    let m = build_hiv_model(HivPrior::Uniform);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..2000 {
        let v = forward_sample(&m, &BTreeMap::new(), &mut rng).unwrap();
        let p6 = v["p[6]"].as_scalar().unwrap();
        assert!((0.0..=1.0).contains(&p6));
    }
}

#[test]
fn hiv_posterior_p1_near_study_proportion() {
    let m = build_hiv_model(HivPrior::Uniform);
    let trace = run_mcmc(&m, &SamplerConfig::new(2, 2000, 3000, 3)).unwrap();
    let p1 = trace.pooled("p[1]").unwrap();
    let mean = p1.iter().sum::<f64>() / p1.len() as f64;
    assert!((mean - 11044.0 / 104577.0).abs() < 0.002, "{mean}");
}

#[test]
fn hiv_split_specs() {
    let m = build_hiv_model(HivPrior::Uniform);
    let s = split_node(&m, &hiv_split_type_a("b").unwrap()).unwrap();
    let b_side: Vec<&String> = s.labels.iter().filter(|(_, l)| **l == Label::B).map(|(k, _)| k).collect();
    assert!(b_side.iter().any(|k| *k == "y[2]"));
    assert!(!b_side.iter().any(|k| k.starts_with("y[") && *k != "y[2]"));
    assert_eq!(hiv_split_type_a("w").unwrap().anchor.as_deref(), Some("y[11]"));
    assert!(matches!(hiv_split_type_a("e"), Err(CorpusError::NoDirectEvidence(_))));

    let s = split_node(&m, &hiv_split_type_b(2).unwrap()).unwrap();
    let pb = s.model.node("p_b[2]").unwrap();
    assert_eq!(pb.distribution().unwrap().family, Family::Beta);
    assert!(s.model.node("y[2]").unwrap().references().contains("p_b[2]"));
    let s9 = split_node(&m, &hiv_split_type_b(9).unwrap()).unwrap();
    match &s9.model.node("p_a[9]").unwrap().kind {
        NodeKind::Deterministic { expr, .. } => assert!(expr.to_string().contains("h")),
        other => panic!("{other:?}"),
    }
    assert!(matches!(hiv_split_type_b(13), Err(CorpusError::StudyOutOfRange(13))));
    assert!(matches!(hiv_split_type_b(0), Err(CorpusError::StudyOutOfRange(0))));
}

#[test]
fn every_corpus_split_is_independent() {
    for entry in catalog() {
        let m = model(entry.id).unwrap();
        for id in &entry.splits {
            let s = split_node(&m, &split(id).unwrap()).unwrap_or_else(|e| panic!("{id}: {e}"));
            check_independence(&s).unwrap_or_else(|e| panic!("{id}: {e}"));
        }
    }
    assert_eq!(catalog()[0].splits.len(), 18);
    assert!(matches!(split("hiv-b:x"), Err(CorpusError::Unknown(_))));
    assert!(matches!(model("flu"), Err(CorpusError::Unknown(_))));
}

#[test]
fn hiv_study_2_conflicts() {
    let m = build_hiv_model(HivPrior::Uniform);
    let s = split_node(&m, &hiv_split_type_b(2).unwrap()).unwrap();
    let trace = run_mcmc(&s.model, &SamplerConfig::new(2, 2000, 4000, 11)).unwrap();
    let r = conflict_two_sided(&delta_samples(&trace, &s).unwrap()).unwrap();
    assert!(r.p_value < 0.05, "{}", r.summary());
}

#[test]
fn rats_data_file() {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("data/rats.csv");
    let d = RatsData::load(&path).unwrap();
    assert_eq!(d, RatsData::embedded());
    assert_eq!(d.weights.len(), 30);
    assert_eq!(d.weights[8], [177.0, 236.0, 285.0, 350.0, 376.0]);
    assert_eq!(rats::TIMES, [-14.0, -7.0, 0.0, 7.0, 14.0]);
    let centred: Vec<f64> = rats::AGES.iter().map(|a| a - 22.0).collect();
    assert_eq!(centred, rats::TIMES);
    assert!(matches!(
        RatsData::load(std::path::Path::new("/nonexistent/rats.csv")),
        Err(CorpusError::DataFile { .. })
    ));
    let tmp = tempfile::NamedTempFile::new().unwrap();
    std::fs::write(tmp.path(), "rat,day8,day15,day22,day29,day36\n1,1,2,3,4,5\n").unwrap();
    assert!(matches!(RatsData::load(tmp.path()), Err(CorpusError::Checksum { .. })));
}

#[test]
fn rats_split_structure() {
    let s = build_rats_model(&RatsData::embedded(), 9).unwrap();
    assert!(s.model.node("phi_a[9]").is_some());
    let b = s.model.node("phi_b[9]").unwrap();
    assert!(b.distribution().unwrap().family.is_improper());
    for j in 1..=5 {
        assert_eq!(s.labels[&rats::y_node(9, j)], Label::B);
        assert_eq!(s.labels[&rats::y_node(8, j)], Label::A);
        assert!(s.model.is_cut("tau", &rats::y_node(9, j)));
    }
    assert!(!s.model.is_cut("tau", &rats::y_node(8, 1)));
    assert!(matches!(rats_split(31), Err(CorpusError::HoldoutOutOfRange(31))));
}

#[test]
fn rats_likelihood_copy_matches_least_squares() {
    let data = RatsData::embedded();
    let s = build_rats_model(&data, 9).unwrap();
    let trace = run_mcmc(&s.model, &SamplerConfig::new(2, 1000, 4000, 5)).unwrap();
    let ols = data.ols(9);
    for (k, col) in ["phi_b[9].1", "phi_b[9].2"].iter().enumerate() {
        let chains = trace.chains_of(col).unwrap();
        let pooled: Vec<f64> = chains.concat();
        let mean = pooled.iter().sum::<f64>() / pooled.len() as f64;
        let sd = (pooled.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / pooled.len() as f64).sqrt();
        let ess = crate::inference::effective_sample_size(&chains).unwrap();
        let se = sd / ess.sqrt();
        assert!((mean - ols[k]).abs() < 3.0 * se, "{col}: {mean} vs {} (se {se})", ols[k]);
    }
}
