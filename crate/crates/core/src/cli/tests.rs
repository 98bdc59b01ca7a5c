use super::*;
use crate::conflict::{Aux, Method};

fn record(job: &str, p: f64) -> ConflictRecord {
    ConflictRecord {
        job: job.into(),
        components: vec!["x_a - x_b".into()],
        result: ConflictResult {
            p_value: p,
            method: Method::TwoSided,
            mc_se: 0.01,
            ess: Some(1000.0),
            n_draws: 1000,
            aux: Aux::default(),
        },
    }
}

#[test]
fn parses_sampler_flags() {
    let cli = Cli::try_parse_from([
        "nodesplit", "sample", "corpus:hiv", "--split", "hiv-b:2", "--chains", "3", "--iters", "100", "--burnin", "50",
        "--thin", "2", "--seed", "9",
    ])
    .unwrap();
    let Command::Sample(a) = cli.command else { panic!() };
    let c = a.sampler.config();
    assert_eq!((c.n_chains, c.burn_in, c.thin, c.seed), (3, 50, 2, 9));
    assert_eq!(a.select.split.as_deref(), Some("hiv-b:2"));
}

#[test]
fn bad_usage_exits_2() {
    assert_eq!(run(["nodesplit", "frobnicate"]), EXIT_USAGE);
    assert_eq!(run(["nodesplit", "validate", "/nonexistent/model.json"]), EXIT_USAGE);
    assert_eq!(run(["nodesplit", "validate", "corpus:nothing"]), EXIT_USAGE);
    assert_eq!(run(["nodesplit", "--version"]), EXIT_OK);
}

#[test]
fn split_sources() {
    assert_eq!(load_split("hiv-b:3").unwrap(), corpus::split("hiv-b:3").unwrap());
    assert!(matches!(load_split("missing.json"), Err(CliError::FileNotFound(_))));
    let sel = SplitSelect { split: Some("rats:1".into()), holdout: Some(1) };
    assert!(matches!(select_split(&sel), Err(CliError::Usage(_))));
    let sel = SplitSelect { split: None, holdout: Some(4) };
    assert_eq!(select_split(&sel).unwrap(), Some(corpus::rats_split(4).unwrap()));
}

#[test]
fn job_names_are_path_safe() {
    assert_eq!(job_name("hiv-b:12"), "hiv-b-12");
    assert_eq!(job_name("specs/my split.json"), "my-split");
}

#[test]
fn exit_codes() {
    assert_eq!(CliError::RhatGate { column: "a".into(), rhat: 1.3 }.exit_code(), EXIT_NUMERICAL);
    assert_eq!(CliError::Conflict(ConflictError::Empty).exit_code(), EXIT_NUMERICAL);
    assert_eq!(CliError::Conflict(ConflictError::Dimension { method: Method::TwoSided, k: 2 }).exit_code(), EXIT_USAGE);
    assert_eq!(CliError::Inference(InferenceError::InvalidConfig("x".into())).exit_code(), EXIT_USAGE);
    assert_eq!(CliError::FileNotFound("x".into()).exit_code(), EXIT_USAGE);
}

#[test]
fn report_sorts_and_flags() {
    let dir = tempfile::tempdir().unwrap();
    for (job, p) in [("one", 0.3), ("two", 0.01), ("three", 0.07)] {
        let d = dir.path().join(job).join("conflict");
        std::fs::create_dir_all(&d).unwrap();
        std::fs::write(d.join("conflict.json"), serde_json::to_string(&[record(job, p)]).unwrap()).unwrap();
    }
    let rows = cmd_report(dir.path(), None).unwrap();
    let jobs: Vec<&str> = rows.iter().map(|r| r.job.as_str()).collect();
    assert_eq!(jobs, ["two", "three", "one"]);
    assert_eq!(rows.iter().map(|r| (r.flag_05, r.flag_10)).collect::<Vec<_>>(), [(true, true), (false, true), (false, false)]);
    let back: Vec<ReportRow> =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(back, rows);
    let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert!(csv.starts_with("job,method,p_value,mc_se,flag_05,flag_10,path\ntwo,two-sided,0.01,"));
}

#[test]
fn report_on_empty_dir_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let e = cmd_report(dir.path(), None).unwrap_err();
    assert_eq!(e.exit_code(), EXIT_USAGE);
}

#[test]
fn conflict_record_round_trips() {
    let r = record("j", 0.25);
    let back: ConflictRecord = serde_json::from_str(&serde_json::to_string(&r).unwrap()).unwrap();
    assert_eq!(back.result, r.result);
    assert_eq!(back.job, "j");
}

#[test]
fn manifest_hashes_specs() {
    let m = corpus::model("hiv").unwrap();
    let mut a = RunManifest::new("sample", &m, Some(1));
    a.add_spec("split", &corpus::split("hiv-b:2").unwrap());
    let mut b = RunManifest::new("sample", &m, Some(1));
    b.add_spec("split", &corpus::split("hiv-b:3").unwrap());
    assert_eq!(a.model_hash, m.hash());
    assert_ne!(a.spec_hashes["split"], b.spec_hashes["split"]);
    let dir = tempfile::tempdir().unwrap();
    a.clone().finish(dir.path()).unwrap();
    let back: RunManifest = serde_json::from_str(&std::fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(back.spec_hashes, a.spec_hashes);
    assert!(!back.finished.is_empty());
}
