//! Acceptance suite. Each test checks one criterion at its stated tolerance and
//! runtime budget, and prints a single `PASS`/`FAIL` line straight to stdout so the
//! verdicts show up even when libtest captures output.
//!
//! Tests hold a global lock while they run. Wall-clock budgets are measured inside
//! the lock, so one test's timing is never inflated by another test running beside it.

use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng;

use stratcv::boosting::{best_split, logistic_grad_hess, Dataset, TrainConfig};
use stratcv::experiments::{
    exp_bias_distribution, exp_importance_correlation, exp_learning_curves, mean, ols_slope,
    oracle, reference_model, sweep_model, ExperimentConfig, Strategy,
};
use stratcv::federation::{audit, inject_duplicates};
use stratcv::partition::{
    compute_thresholds, random_partition, stratified_partition, unbiased_partition,
};
use stratcv::rng::SeedStream;

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

/// Prints the verdict line, then fails the test if any check failed.
fn verdict(name: &str, checks: &[(String, bool)], elapsed: Duration, budget: Duration) {
    let in_time = elapsed < budget;
    let ok = in_time && checks.iter().all(|(_, c)| *c);
    let details: Vec<String> = checks
        .iter()
        .map(|(d, c)| format!("{d}{}", if *c { "" } else { " [x]" }))
        .collect();
    let line = format!(
        "{} {name}: {}; runtime {:.1}s < {:.0}s{}\n",
        if ok { "PASS" } else { "FAIL" },
        details.join("; "),
        elapsed.as_secs_f64(),
        budget.as_secs_f64(),
        if in_time { "" } else { " [x]" },
    );
    let mut out = std::io::stdout().lock();
    out.write_all(line.as_bytes()).unwrap();
    out.flush().unwrap();
    assert!(ok, "{line}");
}

fn check(desc: impl Into<String>, ok: bool) -> (String, bool) {
    (desc.into(), ok)
}

#[test]
fn criterion_1_oracle() {
    let _g = serial();
    let cfg = ExperimentConfig::default();
    assert_eq!(cfg.n_mc, 100_000);
    let t = Instant::now();
    let (acc, se) = oracle(&cfg).unwrap();
    let elapsed = t.elapsed();
    verdict(
        "criterion 1 (oracle)",
        &[check(
            format!("optimal accuracy {acc:.4} (se {se:.5}) in 0.88 ± 0.01"),
            (acc - 0.88).abs() <= 0.01,
        )],
        elapsed,
        Duration::from_secs(5),
    );
}

#[test]
fn criterion_2_prevalence() {
    let _g = serial();
    let cfg = ExperimentConfig::default();
    assert_eq!(cfg.n_gen, 10_000);
    let t = Instant::now();
    let model = reference_model(&cfg).unwrap();
    let records = model.generate(
        cfg.n_gen,
        &mut SeedStream::root(cfg.master_seed).child("records", 0).rng(),
    );
    let rate = records.iter().filter(|r| r.y == 1).count() as f64 / records.len() as f64;
    let elapsed = t.elapsed();
    verdict(
        "criterion 2 (prevalence)",
        &[check(
            format!("positive rate {rate:.4} in 0.47 ± 0.02"),
            (rate - 0.47).abs() <= 0.02,
        )],
        elapsed,
        Duration::from_secs(1),
    );
}

#[test]
fn criterion_3_learning_curves() {
    let _g = serial();
    let cfg = ExperimentConfig::default();
    assert_eq!(cfg.rounds, 200);
    let t = Instant::now();
    let lc = exp_learning_curves(&cfg).unwrap();
    let elapsed = t.elapsed();

    let valid = |s: Strategy| lc.get(s).unwrap().mean_valid_curve.clone();
    let (unb, rnd, str1) = (
        valid(Strategy::Unbiased),
        valid(Strategy::Random),
        valid(Strategy::Stratified(1)),
    );
    let last = |c: &[f64]| c[199];
    let iters: Vec<f64> = (101..=200).map(f64::from).collect();
    let slope = |c: &[f64]| ols_slope(&iters, &c[100..200]);
    let (u, r, s) = (last(&unb), last(&rnd), last(&str1));
    let (su, sr) = (slope(&unb), slope(&rnd));
    verdict(
        "criterion 3 (learning curves)",
        &[
            check(
                format!("random {r:.4} >= unbiased {u:.4} + 0.03"),
                r >= u + 0.03,
            ),
            check(format!("random slope over 101..200 {sr:.2e} > 0"), sr > 0.0),
            check(
                format!("unbiased slope over 101..200 {su:.2e} within ±5e-4"),
                su.abs() <= 5e-4,
            ),
            check(
                format!("stratified-x1 {s:.4} in [{:.4}, {:.4}]", u - 0.04, u + 0.01),
                s >= u - 0.04 && s <= u + 0.01,
            ),
        ],
        elapsed,
        Duration::from_secs(120),
    );
}

#[test]
fn criterion_4_bias_distribution() {
    let _g = serial();
    let cfg = ExperimentConfig::default();
    assert_eq!(cfg.n_sims, 30);
    let t = Instant::now();
    let bd = exp_bias_distribution(&cfg).unwrap();
    let elapsed = t.elapsed();

    assert_eq!(bd.rows.len(), 30 * 12);
    let m = |s: Strategy| mean(&bd.accuracies(s));
    let (u, r, x10) = (
        m(Strategy::Unbiased),
        m(Strategy::Random),
        m(Strategy::Stratified(10)),
    );
    let (worst_c, worst_bias) = (1..=9)
        .map(|c| (c, u - m(Strategy::Stratified(c))))
        .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
    verdict(
        "criterion 4 (bias distribution)",
        &[
            check(
                format!("random mean {r:.4} >= unbiased mean {u:.4} + 0.03"),
                r >= u + 0.03,
            ),
            check(
                format!(
                    "|x10 mean {x10:.4} - unbiased| = {:.4} <= 0.01",
                    (x10 - u).abs()
                ),
                (x10 - u).abs() <= 0.01,
            ),
            check(
                format!("largest pessimistic bias x{worst_c}: {worst_bias:.4} >= 0.02"),
                worst_bias >= 0.02,
            ),
        ],
        elapsed,
        Duration::from_secs(30 * 60),
    );
}

fn fig4(scale: f64, bound: f64, budget: Duration, name: &str) {
    let _g = serial();
    let cfg = ExperimentConfig {
        scale,
        ..Default::default()
    }
    .scaled()
    .unwrap();
    let t = Instant::now();
    let ic = exp_importance_correlation(&cfg).unwrap();
    let elapsed = t.elapsed();

    assert_eq!(ic.samples.len(), cfg.n_datasets * 10);
    let failed = ic
        .samples
        .iter()
        .filter(|s| s.accuracy_ratio.is_none())
        .count();
    let checks = match &ic.pearson_r {
        Ok(r) => vec![
            check(
                format!(
                    "{} datasets, {} rounds, {failed} failed rows",
                    cfg.n_datasets, cfg.rounds
                ),
                true,
            ),
            check(format!("pearson r {r:.4} <= {bound}"), *r <= bound),
            check(format!("r {r:.4} >= -0.97"), *r >= -0.97),
        ],
        Err(e) => vec![check(format!("pearson r undefined: {e}"), false)],
    };
    verdict(name, &checks, elapsed, budget);
}

#[test]
fn criterion_5_importance_correlation() {
    fig4(
        1.0,
        -0.4,
        Duration::from_secs(60 * 60),
        "criterion 5 (importance correlation)",
    );
}

#[test]
fn criterion_5_importance_correlation_scaled() {
    fig4(
        0.2,
        -0.3,
        Duration::from_secs(5 * 60),
        "criterion 5 (importance correlation, scale 0.2)",
    );
}

#[test]
fn criterion_6_definition_3() {
    let _g = serial();
    let t = Instant::now();
    let root = SeedStream::root(606);
    let mut stratified_violations = 0usize;
    let mut stratified_audits = 0usize;
    let mut random_violating = 0usize;
    for i in 0..100u64 {
        let stream = root.child("instance", i);
        let mut rng = stream.rng();
        let cfg = ExperimentConfig {
            n_h: rng.random_range(2..=6),
            k: rng.random_range(2..=6),
            ..Default::default()
        };
        let n_gen = rng.random_range(200..=1000);
        let n_dup = rng.random_range(n_gen / 10..=n_gen / 3);
        let model = sweep_model(&cfg, stream.child("model", 0)).unwrap();
        let records = model.generate(n_gen, &mut rng);
        let (original, _) = unbiased_partition(&records, cfg.n_h, cfg.k, &mut rng).unwrap();
        let fed = inject_duplicates(&original, n_dup, &mut rng).unwrap();

        for c in 1..=10 {
            let folds =
                stratified_partition(&fed, &compute_thresholds(&fed, c, cfg.k).unwrap()).unwrap();
            let report = audit(&fed, Some(&folds)).unwrap();
            stratified_violations += report.def3_violations.as_ref().unwrap().len();
            stratified_audits += 1;
        }
        let folds = random_partition(&fed, cfg.k, &mut rng).unwrap();
        if audit(&fed, Some(&folds)).unwrap().def3_satisfied() == Some(false) {
            random_violating += 1;
        }
    }
    let elapsed = t.elapsed();
    verdict(
        "criterion 6 (definition 3)",
        &[
            check(
                format!("{stratified_violations} def3 violations over {stratified_audits} stratified partitions"),
                stratified_violations == 0,
            ),
            check(format!("random partitions violate def3 in {random_violating}/100 >= 95"), random_violating >= 95),
        ],
        elapsed,
        Duration::from_secs(30),
    );
}

/// Logistic loss written independently of the library: softplus(m) - y·m.
fn logistic_loss(m: f64, y: u8) -> f64 {
    m.max(0.0) + (-m.abs()).exp().ln_1p() - f64::from(y) * m
}

struct Brute {
    gain: f64,
    feature: usize,
    threshold: f64,
}

/// Every admissible cut of every feature, scored by explicitly partitioning the rows.
fn brute_force_splits(
    data: &Dataset,
    rows: &[usize],
    g: &[f64],
    h: &[f64],
    cfg: &TrainConfig,
) -> Vec<Brute> {
    let score = |gs: f64, hs: f64| gs * gs / (hs + cfg.reg_lambda);
    let (gt, ht): (f64, f64) = rows
        .iter()
        .fold((0.0, 0.0), |a, &r| (a.0 + g[r], a.1 + h[r]));
    let mut out = Vec::new();
    for f in 0..data.n_features() {
        let mut vals: Vec<f64> = rows.iter().map(|&r| data.value(r, f)).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let t = (w[0] + w[1]) / 2.0;
            let (mut gl, mut hl, mut gr, mut hr) = (0.0, 0.0, 0.0, 0.0);
            for &r in rows {
                if data.value(r, f) < t {
                    gl += g[r];
                    hl += h[r];
                } else {
                    gr += g[r];
                    hr += h[r];
                }
            }
            if hl < cfg.min_child_weight || hr < cfg.min_child_weight {
                continue;
            }
            let gain = 0.5 * (score(gl, hl) + score(gr, hr) - score(gt, ht)) - cfg.gamma;
            if gain > 0.0 {
                out.push(Brute {
                    gain,
                    feature: f,
                    threshold: t,
                });
            }
        }
    }
    out
}

#[test]
fn criterion_7_numerical_checks() {
    let _g = serial();
    let t = Instant::now();
    let mut rng = SeedStream::root(707).rng();

    let mut worst_grad = 0.0f64;
    let mut worst_hess = 0.0f64;
    for _ in 0..1000 {
        let m: f64 = rng.random_range(-10.0..10.0);
        let y: u8 = rng.random_range(0..=1);
        let (g, h) = logistic_grad_hess(m, y);
        let e = 1e-5;
        let fd_g = (logistic_loss(m + e, y) - logistic_loss(m - e, y)) / (2.0 * e);
        let e = 1e-3;
        let fd_h = (logistic_loss(m + e, y) - 2.0 * logistic_loss(m, y) + logistic_loss(m - e, y))
            / (e * e);
        worst_grad = worst_grad.max((g - fd_g).abs());
        worst_hess = worst_hess.max((h - fd_h).abs());
    }

    let mut mismatches = Vec::new();
    for inst in 0..200 {
        let n = rng.random_range(1..=8);
        // a small value grid makes ties and repeated values common
        let values: Vec<f64> = (0..2 * n)
            .map(|_| f64::from(rng.random_range(0..5u8)) * 0.5)
            .collect();
        let labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..=1)).collect();
        let data = Dataset::new(2, values, labels).unwrap();
        let g: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let h: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..0.25)).collect();
        let cfg = TrainConfig {
            reg_lambda: rng.random_range(0.0..2.0),
            gamma: if rng.random_bool(0.5) {
                0.0
            } else {
                rng.random_range(0.0..0.05)
            },
            min_child_weight: if rng.random_bool(0.5) {
                0.0
            } else {
                rng.random_range(0.0..0.5)
            },
            ..Default::default()
        };
        let mut rows: Vec<usize> = (0..n).collect();
        rows.shuffle(&mut rng);
        rows.truncate(rng.random_range(1..=n));

        let brute = brute_force_splits(&data, &rows, &g, &h, &cfg);
        let got = best_split(&data, &rows, &g, &h, &cfg);
        let best_gain = brute
            .iter()
            .map(|b| b.gain)
            .fold(f64::NEG_INFINITY, f64::max);
        let tol = 1e-12 * (1.0 + best_gain.abs());
        let ok = match &got {
            None => brute.is_empty(),
            // the chosen cut must be one of the brute-force optima, up to rounding; among
            // exact ties the order is fixed by a separate unit test
            Some(s) => {
                (s.gain - best_gain).abs() <= tol
                    && brute.iter().any(|b| {
                        b.feature == s.feature
                            && b.threshold == s.threshold
                            && b.gain >= best_gain - tol
                    })
            }
        };
        if !ok {
            mismatches.push(inst);
        }
    }
    let elapsed = t.elapsed();
    verdict(
        "criterion 7 (numerical checks)",
        &[
            check(
                format!("max |grad - fd| {worst_grad:.1e} <= 1e-6"),
                worst_grad <= 1e-6,
            ),
            check(
                format!("max |hess - fd| {worst_hess:.1e} <= 1e-6"),
                worst_hess <= 1e-6,
            ),
            check(
                format!(
                    "best_split disagrees with brute force on {} of 200 instances {mismatches:?}",
                    mismatches.len()
                ),
                mismatches.is_empty(),
            ),
        ],
        elapsed,
        Duration::from_secs(60),
    );
}

fn run_cli(out: &Path, config: &Path, threads: usize, args: &[&str]) {
    let status = Command::new(env!("CARGO_BIN_EXE_stratcv"))
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .arg("--threads")
        .arg(threads.to_string())
        .args(args)
        .output()
        .unwrap();
    assert!(
        status.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&status.stderr)
    );
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn criterion_8_determinism() {
    let _g = serial();
    let t = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("small.toml");
    std::fs::write(&config, "master_seed = 4242\nscale = 0.05\nn_sims = 40\n").unwrap();

    // audit reads a dataset produced by gen
    let source = tmp.path().join("source");
    run_cli(&source, &config, 1, &["gen", "--partition", "x3"]);
    let dataset = source.join("dataset.csv");
    let folds = source.join("folds.csv");
    let audit_args = [
        "audit",
        "--dataset",
        dataset.to_str().unwrap(),
        "--folds",
        folds.to_str().unwrap(),
    ];

    let commands: Vec<(&str, Vec<&str>)> = vec![
        ("oracle", vec!["oracle"]),
        ("gen", vec!["gen", "--partition", "random"]),
        ("gen-stratified", vec!["gen", "--partition", "x2"]),
        (
            "gen-unbiased",
            vec!["gen", "--no-duplicates", "--partition", "unbiased"],
        ),
        ("audit", audit_args.to_vec()),
        ("fig2", vec!["fig2"]),
        ("fig3", vec!["fig3"]),
        ("fig4", vec!["fig4"]),
    ];
    let mut checks = Vec::new();
    for (name, args) in &commands {
        let runs: Vec<Vec<(String, Vec<u8>)>> = [(1, 8), (2, 8), (3, 1)]
            .iter()
            .map(|(i, threads)| {
                let out = tmp.path().join(format!("{name}-{i}"));
                run_cli(&out, &config, *threads, args);
                dir_bytes(&out)
            })
            .collect();
        let same_8 = runs[0] == runs[1];
        let same_1 = runs[0] == runs[2];
        let nonempty = !runs[0].is_empty() && runs[0].iter().all(|(_, b)| !b.is_empty());
        checks.push(check(
            format!("{name}: {} files identical twice at 8 threads ({same_8}) and at 1 thread ({same_1})", runs[0].len()),
            same_8 && same_1 && nonempty,
        ));
    }
    let elapsed = t.elapsed();
    verdict(
        "criterion 8 (determinism)",
        &checks,
        elapsed,
        Duration::from_secs(600),
    );
}
