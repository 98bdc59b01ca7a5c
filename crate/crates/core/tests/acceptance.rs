//! Acceptance checks. Prints one PASS/FAIL line per criterion. Set
//! `ACCEPTANCE_STRICT=1` to exit nonzero when any criterion fails.

use nodesplit::calibration::{ks_uniformity, normal, run_calibration};
use nodesplit::conflict::{self, ConflictResult, KdeConfig, Method};
use nodesplit::corpus::{self, build_disease_test, build_hiv_model, build_rats_model, HivPrior, RatsData};
use nodesplit::graph::io::from_json_str;
use nodesplit::inference::{effective_sample_size, run_mcmc, SamplerConfig, Trace};
use nodesplit::special::chi2_cdf;
use nodesplit::split::{check_independence, delta_samples, split_node, DeltaSamples};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn run(id: u32, name: &str, limit_secs: Option<f64>, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let o = f();
    let secs = start.elapsed().as_secs_f64();
    let in_time = limit_secs.is_none_or(|l| secs < l);
    let pass = o.pass && in_time;
    let limit = limit_secs.map_or(String::new(), |l| format!(" < {l:.0}s"));
    println!("{} criterion {id}: {name}: {} [{secs:.1}s{limit}]", if pass { "PASS" } else { "FAIL" }, o.detail);
    pass
}

fn discrete_closed_form() -> Outcome {
    let mut worst: f64 = 0.0;
    for pi in [0.0, 0.1, 0.25, 0.5, 1.0] {
        let (pa, pb) = build_disease_test(pi, 0.9, 0.9, 1).expect("valid inputs");
        let c = conflict::conflict_discrete(&pa, &pb).expect("normalised").p_value;
        worst = worst.max((c - (0.1 + 0.8 * pi)).abs());
    }
    outcome(worst <= 1e-12, format!("max |c - (0.1 + 0.8π)| = {worst:.1e}"))
}

fn moments(x: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    let m4 = x.iter().map(|v| (v - m).powi(4)).sum::<f64>() / n;
    (m, v, m4)
}

/// Largest |error| / MC-SE over posterior mean and variance.
fn z_moments(trace: &Trace, name: &str, mean: f64, var: f64) -> f64 {
    let ess = effective_sample_size(&trace.chains_of(name).unwrap()).unwrap();
    let (m, v, m4) = moments(&trace.pooled(name).unwrap());
    let z_mean = (m - mean).abs() / (v / ess).sqrt();
    let z_var = (v - var).abs() / ((m4 - v * v).max(0.0) / ess).sqrt();
    z_mean.max(z_var)
}

fn conjugate_oracle() -> Outcome {
    let config = SamplerConfig::new(2, 1000, 10_000, 2);
    let beta = from_json_str(
        r#"{ "nodes": [
            { "name": "b", "family": "beta", "params": [0.5, 0.5] },
            { "name": "y", "family": "binomial", "params": [882, "b"], "observed": 12 } ] }"#,
    )
    .unwrap();
    let (a, b) = (12.5, 870.5);
    let z_beta = z_moments(
        &run_mcmc(&beta, &config).unwrap(),
        "b",
        a / (a + b),
        a * b / ((a + b).powi(2) * (a + b + 1.0)),
    );

    let ys = [1.2, 0.4, 2.1];
    let mut nodes = vec![r#"{ "name": "mu", "family": "normal", "params": [0, 0.01] }"#.to_string()];
    nodes.extend(ys.iter().enumerate().map(|(i, y)| {
        format!(r#"{{ "name": "y{i}", "family": "normal", "params": ["mu", 1], "observed": {y} }}"#)
    }));
    let nn = from_json_str(&format!(r#"{{ "nodes": [{}] }}"#, nodes.join(","))).unwrap();
    let prec = 0.01 + ys.len() as f64;
    let z_nn = z_moments(&run_mcmc(&nn, &config).unwrap(), "mu", ys.iter().sum::<f64>() / prec, 1.0 / prec);

    let ys = [0.3, -1.1, 0.8, 1.9, -0.4, 0.1];
    let mut nodes = vec![r#"{ "name": "tau", "family": "gamma", "params": [2, 1] }"#.to_string()];
    nodes.extend(ys.iter().enumerate().map(|(i, y)| {
        format!(r#"{{ "name": "y{i}", "family": "normal", "params": [0, "tau"], "observed": {y} }}"#)
    }));
    let gp = from_json_str(&format!(r#"{{ "nodes": [{}] }}"#, nodes.join(","))).unwrap();
    let shape = 2.0 + ys.len() as f64 / 2.0;
    let rate = 1.0 + 0.5 * ys.iter().map(|y| y * y).sum::<f64>();
    let z_gp = z_moments(&run_mcmc(&gp, &config).unwrap(), "tau", shape / rate, shape / (rate * rate));

    let worst = z_beta.max(z_nn).max(z_gp);
    outcome(
        worst < 3.0,
        format!("|error|/MC-SE: beta-binomial {z_beta:.2}, normal-normal {z_nn:.2}, gamma-precision {z_gp:.2}"),
    )
}

const HIV_CONFLICT: [&str; 4] = ["hiv-a:b", "hiv-a:d", "hiv-b:2", "hiv-b:4"];
const HIV_CONSISTENT: [&str; 5] = ["hiv-b:1", "hiv-b:3", "hiv-b:6", "hiv-b:10", "hiv-b:11"];

fn hiv_reproduction(pvalues: &mut Vec<f64>) -> Outcome {
    let config = SamplerConfig::new(2, 20_000, 20_000, 7);
    let ids = corpus::catalog().into_iter().find(|e| e.id == "hiv").unwrap().splits;
    let jobs: Vec<(HivPrior, &String)> =
        [HivPrior::Uniform, HivPrior::Jeffreys].iter().flat_map(|&p| ids.iter().map(move |id| (p, id))).collect();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(8).build().unwrap();
    let results: Vec<(HivPrior, String, Result<ConflictResult, String>)> = pool.install(|| {
        jobs.par_iter()
            .map(|&(prior, id)| {
                let r = (|| {
                    let s = split_node(&build_hiv_model(prior), &corpus::split(id).map_err(|e| e.to_string())?)
                        .map_err(|e| e.to_string())?;
                    let trace = run_mcmc(&s.model, &config).map_err(|e| e.to_string())?;
                    let d = delta_samples(&trace, &s).map_err(|e| e.to_string())?;
                    conflict::conflict_two_sided(&d).map_err(|e| e.to_string())
                })();
                (prior, id.clone(), r)
            })
            .collect()
    });
    let mut table: BTreeMap<(String, &str), f64> = BTreeMap::new();
    for (prior, id, r) in &results {
        match r {
            Ok(r) => {
                pvalues.push(r.p_value);
                let tag = if *prior == HivPrior::Uniform { "beta(1,1)" } else { "beta(1/2,1/2)" };
                table.insert((id.clone(), tag), r.p_value);
                println!("    {id:<10} {tag:<14} c = {:.4} (mc_se {:.4})", r.p_value, r.mc_se);
            }
            Err(e) => return outcome(false, format!("{id}: {e}")),
        }
    }
    let mut ok = true;
    for tag in ["beta(1,1)", "beta(1/2,1/2)"] {
        ok &= HIV_CONFLICT.iter().all(|id| table[&(id.to_string(), tag)] < 0.05);
        ok &= HIV_CONSISTENT.iter().all(|id| table[&(id.to_string(), tag)] > 0.05);
    }
    let max_conflict = HIV_CONFLICT.iter().map(|id| table[&(id.to_string(), "beta(1,1)")]).fold(0.0, f64::max);
    let min_consistent = HIV_CONSISTENT.iter().map(|id| table[&(id.to_string(), "beta(1,1)")]).fold(1.0, f64::min);
    outcome(
        ok,
        format!(
            "{} splits x 2 priors; max c over b, d, 2, 4 = {max_conflict:.4}; min c over 1, 3, 6, 10, 11 = {min_consistent:.4}",
            ids.len()
        ),
    )
}

fn rats_reproduction(pvalues: &mut Vec<f64>) -> Outcome {
    let config = SamplerConfig::new(2, 20_000, 20_000, 7);
    let data = RatsData::embedded();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(8).build().unwrap();
    let results: Vec<Result<(ConflictResult, ConflictResult), String>> = pool.install(|| {
        (1..=corpus::rats::N_RATS)
            .into_par_iter()
            .map(|h| {
                let s = build_rats_model(&data, h).map_err(|e| e.to_string())?;
                let trace = run_mcmc(&s.model, &config).map_err(|e| e.to_string())?;
                let d = delta_samples(&trace, &s).map_err(|e| e.to_string())?;
                let c = conflict::conflict_chi2(&d).map_err(|e| e.to_string())?;
                let m = conflict::conflict_mahalanobis(&d).map_err(|e| e.to_string())?;
                Ok((c, m))
            })
            .collect()
    });
    let mut flagged = Vec::new();
    let mut nine = None;
    for (i, r) in results.into_iter().enumerate() {
        let h = i + 1;
        let (c, m) = match r {
            Ok(v) => v,
            Err(e) => return outcome(false, format!("rat {h}: {e}")),
        };
        pvalues.extend([c.p_value, m.p_value]);
        println!(
            "    rat {h:>2}: chi2 {:.4} (mc_se {:.4}), mahalanobis {:.4} (mc_se {:.4})",
            c.p_value, c.mc_se, m.p_value, m.mc_se
        );
        if c.p_value < 0.05 && m.p_value < 0.05 {
            flagged.push(h);
        }
        if h == 9 {
            nine = Some((c, m));
        }
    }
    let (c, m) = nine.unwrap();
    let ok = (0.001..=0.008).contains(&c.p_value) && (0.002..=0.012).contains(&m.p_value) && flagged == [9, 25];
    outcome(
        ok,
        format!(
            "rat 9 chi2 {:.4} ± {:.4}, mahalanobis {:.4} ± {:.4}; both < 0.05 for rats {flagged:?}",
            c.p_value, c.mc_se, m.p_value, m.mc_se
        ),
    )
}

fn uniformity_calibration(pvalues: &mut Vec<f64>) -> Outcome {
    let scenario = normal::null(200);
    let p = match run_calibration(&scenario, 1) {
        Ok(p) => p,
        Err(e) => return outcome(false, e.to_string()),
    };
    pvalues.extend(&p);
    let ks = ks_uniformity(&p).unwrap();
    outcome(
        ks.statistic < 0.115 && !ks.rejects(0.01),
        format!("{} replicates, KS = {:.4} (p = {:.3})", p.len(), ks.statistic, ks.p_value),
    )
}

fn estimator_agreement(pvalues: &mut Vec<f64>) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let rows: Vec<Vec<f64>> = (0..100_000)
        .map(|_| (0..2).map(|_| 1.0 + rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    let d = DeltaSamples::from_rows(&rows);
    let target = (-1.0f64).exp();
    let cfg = KdeConfig::default();
    let mut ok = true;
    let mut parts = Vec::new();
    for m in [Method::Chi2, Method::Mahalanobis, Method::KdeMultivariate] {
        match conflict::conflict(&d, m, &cfg) {
            Ok(r) => {
                pvalues.push(r.p_value);
                let z = (r.p_value - target).abs() / r.mc_se;
                ok &= z < 4.0;
                let extra = r.aux.threshold_se.map_or(String::new(), |t| format!(", threshold_se {t:.4}"));
                parts.push(format!("{m} {:.4} ({z:.2} se{extra})", r.p_value));
            }
            Err(e) => {
                ok = false;
                parts.push(format!("{m}: {e}"));
            }
        }
    }
    outcome(ok, format!("target {target:.4}: {}", parts.join(", ")))
}

/// Regularised lower incomplete gamma by series or Lentz continued fraction.
fn gamma_p_oracle(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let lead = (-x + a * x.ln() - statrs::function::gamma::ln_gamma(a)).exp();
    if x < a + 1.0 {
        let (mut ap, mut del) = (a, 1.0 / a);
        let mut sum = del;
        for _ in 0..10_000 {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if del.abs() < sum.abs() * 1e-17 {
                break;
            }
        }
        sum * lead
    } else {
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..10_000 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < 1e-17 {
                break;
            }
        }
        1.0 - lead * h
    }
}

/// Closed form for integer degrees of freedom: a finite Poisson sum for even
/// `k`, and erf plus half-integer terms for odd `k`.
fn chi2_cdf_closed(x: f64, k: u32) -> f64 {
    let y = x / 2.0;
    if k.is_multiple_of(2) {
        let (mut term, mut sum) = (1.0, 1.0);
        for j in 1..k / 2 {
            term *= y / j as f64;
            sum += term;
        }
        1.0 - (-y).exp() * sum
    } else {
        let mut cdf = libm::erf(y.sqrt());
        // Γ(j + 1/2) built up from Γ(3/2) = √π / 2
        let mut gamma = std::f64::consts::PI.sqrt() / 2.0;
        for j in 1..=(k - 1) / 2 {
            if j > 1 {
                gamma *= j as f64 - 0.5;
            }
            cdf -= (-y).exp() * y.powf(j as f64 - 0.5) / gamma;
        }
        cdf
    }
}

fn special_functions() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut worst_closed: f64 = 0.0;
    let mut worst_k2: f64 = 0.0;
    for i in 0..=2000 {
        let x = i as f64 * 0.05;
        for k in [1.0, 2.0, 5.0, 10.0] {
            let got = chi2_cdf(x, k).unwrap();
            worst = worst.max((got - gamma_p_oracle(k / 2.0, x / 2.0)).abs());
            worst_closed = worst_closed.max((got - chi2_cdf_closed(x, k as u32)).abs());
            if k == 2.0 {
                worst_k2 = worst_k2.max((got - (1.0 - (-x / 2.0).exp())).abs());
            }
        }
    }
    outcome(
        worst <= 1e-12 && worst_closed <= 1e-12 && worst_k2 <= 1e-12,
        format!(
            "max error vs series/continued fraction {worst:.1e}, vs closed form {worst_closed:.1e}, vs 1 - exp(-x/2) {worst_k2:.1e}"
        ),
    )
}

fn sample_once(out: &Path, args: &[&str]) -> Result<Vec<u8>, String> {
    let status = Command::new(env!("CARGO_BIN_EXE_nodesplit"))
        .arg("sample")
        .args(args)
        .args(["--seed", "42", "--iters", "2000", "--burnin", "1000", "--no-rhat-gate", "--out"])
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    if !status.status.success() {
        return Err(String::from_utf8_lossy(&status.stderr).into_owned());
    }
    std::fs::read(out.join("trace.csv")).map_err(|e| e.to_string())
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cases: [&[&str]; 4] = [
        &["corpus:hiv"],
        &["corpus:hiv", "--split", "hiv-b:2"],
        &["corpus:hiv-jeffreys", "--split", "hiv-a:d"],
        &["corpus:rats", "--holdout", "9"],
    ];
    for (i, case) in cases.iter().enumerate() {
        let a = sample_once(&dir.path().join(format!("{i}a")), case);
        let b = sample_once(&dir.path().join(format!("{i}b")), case);
        match (a, b) {
            (Ok(a), Ok(b)) if a == b => {}
            (Ok(_), Ok(_)) => return outcome(false, format!("traces differ for {}", case.join(" "))),
            (Err(e), _) | (_, Err(e)) => return outcome(false, e),
        }
    }
    outcome(true, format!("{} corpus runs repeated with byte-identical traces", cases.len()))
}

fn bits(r: &ConflictResult) -> (u64, u64) {
    (r.p_value.to_bits(), r.mc_se.to_bits())
}

/// Negation and power-of-two scaling leave every estimator bitwise unchanged;
/// arbitrary scaling leaves the tail-count estimators unchanged.
fn invariance_failures(rng: &mut ChaCha8Rng) -> Vec<String> {
    let cfg = KdeConfig::default();
    let mut failures = Vec::new();
    for case in 0..24 {
        let k = [1, 1, 2, 3][case % 4];
        let n = if k == 1 { 800 } else { 2500 };
        let shift: Vec<f64> = (0..k).map(|_| rng.random_range(-2.0..2.0)).collect();
        let skew = rng.random_range(0.0..1.5);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                (0..k)
                    .map(|j| {
                        let z: f64 = rng.sample(StandardNormal);
                        shift[j] + z + skew * z * z
                    })
                    .collect()
            })
            .collect();
        let d = DeltaSamples::from_rows(&rows);
        let neg = d.map(|v| -v);
        let methods: &[Method] = if k == 1 {
            &[Method::TwoSided, Method::Kde, Method::Chi2, Method::Mahalanobis]
        } else {
            &[Method::Chi2, Method::Mahalanobis, Method::KdeMultivariate]
        };
        for &m in methods {
            let base = conflict::conflict(&d, m, &cfg).unwrap();
            if bits(&base) != bits(&conflict::conflict(&neg, m, &cfg).unwrap()) {
                failures.push(format!("negation, {m}, case {case}"));
            }
            for s in [0.125, 2.0, 64.0] {
                if bits(&base) != bits(&conflict::conflict(&d.map(|v| v * s), m, &cfg).unwrap()) {
                    failures.push(format!("scale {s}, {m}, case {case}"));
                }
            }
        }
        if k == 1 {
            let lower = conflict::conflict_one_sided(&d, true).unwrap();
            if bits(&lower) != bits(&conflict::conflict_one_sided(&neg, false).unwrap()) {
                failures.push(format!("negation, one-sided, case {case}"));
            }
            let s = rng.random_range(0.01..100.0);
            let scaled = d.map(|v| v * s);
            for m in [Method::TwoSided, Method::OneSidedLower, Method::OneSidedUpper] {
                let (a, b) = (conflict::conflict(&d, m, &cfg).unwrap(), conflict::conflict(&scaled, m, &cfg).unwrap());
                if bits(&a) != bits(&b) {
                    failures.push(format!("scale {s}, {m}, case {case}"));
                }
            }
        }
    }
    failures
}

fn property_suites(pvalues: &[f64]) -> Outcome {
    let mut n_splits = 0;
    for entry in corpus::catalog() {
        let model = corpus::model(entry.id).unwrap();
        for id in &entry.splits {
            let ok = corpus::split(id)
                .map_err(|e| e.to_string())
                .and_then(|spec| split_node(&model, &spec).map_err(|e| e.to_string()))
                .and_then(|s| check_independence(&s).map_err(|e| e.to_string()));
            if let Err(e) = ok {
                return outcome(false, format!("{id}: {e}"));
            }
            n_splits += 1;
        }
    }
    let failures = invariance_failures(&mut ChaCha8Rng::seed_from_u64(9));
    if !failures.is_empty() {
        return outcome(false, format!("invariance broken: {}", failures.join("; ")));
    }
    let bad = pvalues.iter().filter(|p| !(0.0..=1.0).contains(*p)).count();
    outcome(
        bad == 0 && !pvalues.is_empty(),
        format!("{n_splits} corpus splits independent; invariances bitwise; {} p-values in [0,1], {bad} outside", pvalues.len()),
    )
}

fn main() {
    let mut pvalues = Vec::new();
    let results = [
        run(1, "discrete closed form", Some(1.0), discrete_closed_form),
        run(2, "conjugate oracle", Some(30.0), conjugate_oracle),
        run(3, "HIV qualitative reproduction", Some(900.0), || hiv_reproduction(&mut pvalues)),
        run(4, "rats quantitative reproduction", Some(1800.0), || rats_reproduction(&mut pvalues)),
        run(5, "uniformity calibration", Some(1200.0), || uniformity_calibration(&mut pvalues)),
        run(6, "estimator cross-agreement", Some(60.0), || estimator_agreement(&mut pvalues)),
        run(7, "special functions", Some(1.0), special_functions),
        run(8, "determinism", Some(120.0), determinism),
        run(9, "property suites", None, || property_suites(&pvalues)),
    ];
    let failed = results.iter().filter(|p| !**p).count();
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 && std::env::var_os("ACCEPTANCE_STRICT").is_some_and(|v| v == "1") {
        std::process::exit(1);
    }
}
