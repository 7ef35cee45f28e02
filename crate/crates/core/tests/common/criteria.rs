//! The end-to-end checks behind the acceptance report. Each returns a
//! verdict plus a one-line summary of what was measured.

use std::time::Instant;

use engage_core::engagement::INDICATOR_NAMES;
use engage_core::features::{extract_from_samples, FeatureParams, FEATURE_NAMES};
use engage_core::fixture::{generate_fixture, FixtureSpec, ADVERSARIAL_ID};
use engage_core::io;
use engage_core::pipeline::{self, ExperimentConfig, Ingested, RunOutput};
use engage_core::regression::{self, LinearModel, SvrParams};
use engage_core::report::variant_from_relative;
use engage_core::selection::SelectionMethod;
use engage_core::signal::{ewe_fuse, AnnotationTrace, Dimension};
use engage_core::stats::{self, parse_appendix_cell, parse_appendix_tsv, SigLevel};
use engage_core::table::Table;
use rand::Rng;
use rand_distr::StandardNormal;

use super::*;

pub struct Check {
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(pass: bool, detail: String) -> Self {
        Self { pass, detail }
    }
}

pub fn feature_oracle() -> Check {
    let start = Instant::now();
    let params = FeatureParams::default();
    let signals = oracle_signals(2024, 100, 50, 2000);
    let mut worst = 0.0_f64;
    let mut worst_saen = 0.0_f64;
    let mut failures = Vec::new();
    for (k, x) in signals.iter().enumerate() {
        let got = extract_from_samples(x, &params).expect("features").values();
        let want = naive_features(
            x,
            params.peak_support,
            params.crossing_level,
            params.sample_entropy.m,
            params.sample_entropy.r_factor,
        );
        for (j, name) in FEATURE_NAMES.iter().enumerate() {
            let err = (got[j] - want[j]).abs();
            let tol = if *name == "SaEn" { 1e-6 } else { 1e-9 };
            if *name == "SaEn" {
                worst_saen = worst_saen.max(err);
            } else {
                worst = worst.max(err);
            }
            if !(err <= tol) {
                failures.push(format!("signal {k} {name}: {} vs {}", got[j], want[j]));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = failures.is_empty() && secs < 60.0;
    let mut detail = format!(
        "100 signals x 24 features, max |err| {worst:.1e} (SaEn {worst_saen:.1e}), {secs:.1} s"
    );
    if let Some(f) = failures.first() {
        detail.push_str(&format!(", {} mismatches, first: {f}", failures.len()));
    }
    Check::new(pass, detail)
}

pub fn statistics_oracle() -> Check {
    let mut worst_r = 0.0_f64;
    let mut worst_p = 0.0_f64;
    for (x, z) in random_pairs(99, 50) {
        let r = stats::pearson(&x, &z).expect("pearson");
        let r_ref = naive_pearson(&x, &z);
        let df = (x.len() - 2) as f64;
        let t_ref = r_ref * (df / (1.0 - r_ref * r_ref)).sqrt();
        let p = stats::p_value(r, x.len()).expect("p").p;
        let p_ref = t_two_tailed_by_quadrature(t_ref, df);
        worst_r = worst_r.max((r - r_ref).abs());
        worst_p = worst_p.max((p - p_ref).abs());
    }
    let mut exact = true;
    let mut g = rng(5);
    for _ in 0..20 {
        let n = g.random_range(3..100);
        let x: Vec<f64> = (0..n)
            .map(|_| g.sample::<f64, _>(StandardNormal) * 10.0 + 3.0)
            .collect();
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        exact &=
            stats::pearson(&x, &x).unwrap() == 1.0 && stats::pearson(&x, &neg).unwrap() == -1.0;
    }
    let pass = worst_r <= 1e-6 && worst_p <= 1e-6 && exact;
    Check::new(
        pass,
        format!("50 pairs, max |dr| {worst_r:.1e}, max |dp| {worst_p:.1e}; r(x,x)=1 and r(x,-x)=-1 exact: {exact}"),
    )
}

fn trace(id: &str, samples: Vec<f64>) -> AnnotationTrace {
    AnnotationTrace::new("v", Dimension::Arousal, id, samples, 0.25).expect("trace")
}

fn raw_walk(g: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut v: f64 = g.random_range(-200.0..200.0);
    (0..n)
        .map(|_| {
            v = (v + g.random_range(-15.0..15.0_f64)).clamp(-1000.0, 1000.0);
            v.round()
        })
        .collect()
}

pub fn ewe_suite() -> Check {
    let mut g = rng(17);

    let mut identity = true;
    for _ in 0..20 {
        let n = g.random_range(30..400);
        let base = raw_walk(&mut g, n);
        let k = g.random_range(2..=6);
        let traces: Vec<_> = (0..k)
            .map(|a| trace(&format!("a{a}"), base.clone()))
            .collect();
        let fused = ewe_fuse(&traces).expect("fuse");
        identity &= fused
            .samples
            .iter()
            .zip(&base)
            .all(|(f, b)| (f - b).abs() <= 1e-12 * b.abs().max(1.0));
        identity &= fused.annotator_weights.values().all(|w| *w == 1.0);
    }

    let mut convex = true;
    for _ in 0..200 {
        let n = g.random_range(30..300);
        let common = raw_walk(&mut g, n);
        let k = g.random_range(2..=6);
        let traces: Vec<_> = (0..k)
            .map(|a| {
                let s = common
                    .iter()
                    .map(|v| {
                        (v + g.random_range(-80.0..80.0_f64))
                            .clamp(-1000.0, 1000.0)
                            .round()
                    })
                    .collect();
                trace(&format!("a{a}"), s)
            })
            .collect();
        let Ok(fused) = ewe_fuse(&traces) else {
            continue;
        };
        for (t, f) in fused.samples.iter().enumerate() {
            let lo = traces
                .iter()
                .map(|tr| tr.samples()[t])
                .fold(f64::INFINITY, f64::min);
            let hi = traces
                .iter()
                .map(|tr| tr.samples()[t])
                .fold(f64::NEG_INFINITY, f64::max);
            let slack = 1e-9 * lo.abs().max(hi.abs()).max(1.0);
            convex &= *f >= lo - slack && *f <= hi + slack;
        }
        convex &= fused.annotator_weights.values().all(|w| *w >= 0.0);
    }

    let spec = FixtureSpec {
        n_videos: 200,
        adversarial: true,
        ..Default::default()
    };
    let fx = generate_fixture(7, &spec).expect("fixture");
    let golds = pipeline::fuse(fx.traces).expect("fuse");
    let mut zero_videos = std::collections::BTreeMap::<String, bool>::new();
    let (mut zero_pairs, mut pairs) = (0, 0);
    for gs in &golds {
        let w = gs.annotator_weights[ADVERSARIAL_ID];
        pairs += 1;
        if w == 0.0 {
            zero_pairs += 1;
        }
        *zero_videos.entry(gs.video_id.clone()).or_insert(true) &= w == 0.0;
    }
    let videos = zero_videos.len();
    let all_dims = zero_videos.values().filter(|z| **z).count();
    let share = all_dims as f64 / videos as f64;
    let pass = identity && convex && share >= 0.95;
    Check::new(
        pass,
        format!(
            "identity {identity}, convex bound {convex}, adversarial weight 0 in {all_dims}/{videos} videos \
             (all dimensions; {zero_pairs}/{pairs} video-dimension pairs)"
        ),
    )
}

/// Complementary-slackness violations of a fitted model, with residuals
/// measured as `y - f(x)`.
pub fn kkt_violations(model: &LinearModel, x: &[Vec<f64>], y: &[f64], tol: f64) -> Vec<String> {
    let c = model.c;
    let eps = model.epsilon;
    let mut out = Vec::new();
    let beta_sum: f64 = model.dual_coef.iter().sum();
    if beta_sum.abs() > 1e-9 * c * y.len() as f64 {
        out.push(format!("sum of dual coefficients {beta_sum:e}"));
    }
    for (i, ((row, t), beta)) in x.iter().zip(y).zip(&model.dual_coef).enumerate() {
        let r = t - model.predict_row(row);
        let at_bound = (beta.abs() - c).abs() <= 1e-9 * c;
        let ok = if beta.abs() > c * (1.0 + 1e-9) {
            false
        } else if *beta == 0.0 {
            r.abs() <= eps + tol
        } else if at_bound {
            beta.signum() * r >= eps - tol
        } else {
            beta.signum() * r >= eps - tol && beta.signum() * r <= eps + tol
        };
        if !ok {
            out.push(format!("sample {i}: beta {beta:e}, residual {r:e}"));
        }
    }
    out
}

pub fn svr_suite() -> Check {
    let w_true = [1.5, -2.0, 0.5, 0.0, 3.0];
    let (x, y) = linear_dataset(3, 200, &w_true, 0.7, 0.0);
    let params = SvrParams {
        c: 10.0,
        epsilon: 0.01,
        ..Default::default()
    };
    let model = regression::fit(&x, &y, &names(5), &params).expect("fit");
    let w_err = model
        .weights
        .iter()
        .zip(&w_true)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let recovery = w_err <= 0.05;

    let mut worst_gap = 0.0_f64;
    let mut kkt_total = 0;
    let mut unconverged = 0;
    for k in 0..20u64 {
        let mut g = rng(1000 + k);
        let w: Vec<f64> = (0..24).map(|_| g.sample(StandardNormal)).collect();
        let (x, y) = linear_dataset(2000 + k, 200, &w, 1.0, 0.5);
        let c = [0.01, 0.1, 1.0][k as usize % 3];
        let params = SvrParams {
            c,
            epsilon: 0.1,
            ..Default::default()
        };
        let model = regression::fit(&x, &y, &names(24), &params).expect("fit");
        if !model.converged {
            unconverged += 1;
        }
        let reference = qp::solve(&x, &y, c, 0.1);
        let gap: f64 = x
            .iter()
            .map(|row| {
                let p_ref = reference.bias
                    + row
                        .iter()
                        .zip(&reference.weights)
                        .map(|(a, b)| a * b)
                        .sum::<f64>();
                (model.predict_row(row) - p_ref).abs()
            })
            .sum::<f64>()
            / x.len() as f64;
        worst_gap = worst_gap.max(gap);
        kkt_total += kkt_violations(&model, &x, &y, 1e-4).len();
    }
    let pass = recovery && worst_gap <= 1e-3 && kkt_total == 0 && unconverged == 0;
    Check::new(
        pass,
        format!(
            "noiseless max |w - w*| {w_err:.1e}; 20 datasets: max prediction MAE vs QP {worst_gap:.1e}, \
             KKT violations {kkt_total}, unconverged {unconverged}"
        ),
    )
}

/// Runs fuse → report in memory for one fixture seed, on a reduced grid.
pub fn in_memory_run(
    seed: u64,
    spec: &FixtureSpec,
    targets: &[&str],
    combinations: &[&str],
) -> (RunOutput, engage_core::fixture::Fixture) {
    let fx = generate_fixture(seed, spec).expect("fixture");
    let golds = pipeline::fuse(fx.traces.clone()).expect("fuse");
    let rows = pipeline::extract(&golds, &spec.feature_params).expect("extract");
    let records = io::build_records(&fx.metadata, &fx.comments).expect("records");
    let ingested = Ingested {
        records,
        partition: fx.partition.clone(),
        labels: None,
    };
    let mut config = ExperimentConfig::for_fixture(seed, spec);
    config.targets = targets.iter().map(|s| s.to_string()).collect();
    config.combinations = combinations.iter().map(|s| s.to_string()).collect();
    let out = pipeline::analyze(&config, Some(&golds), &rows, &ingested).expect("analyze");
    (out, fx)
}

pub fn planted_recovery(seeds: std::ops::RangeInclusive<u64>) -> Check {
    let target = "Lp/d";
    let combo = "A+V+T";
    let spec = FixtureSpec::default();
    let (mut hits, mut runs) = (0, 0);
    let mut maes = Vec::new();
    let mut floor = 0.0;
    for seed in seeds {
        let (out, fx) = in_memory_run(seed, &spec, &[target], &[combo]);
        let planted = fx
            .planted
            .targets
            .iter()
            .find(|t| t.target == target)
            .expect("planted target");
        floor = planted.noise_mae_floor();
        let auto = out
            .report
            .selections
            .iter()
            .find(|s| s.combination == combo && s.selection.method == SelectionMethod::Auto)
            .expect("auto selection");
        runs += 1;
        if planted
            .terms
            .iter()
            .all(|t| auto.selection.feature_names.contains(&t.feature))
        {
            hits += 1;
        }
        maes.push(
            out.report
                .row(target, combo, SelectionMethod::Auto)
                .expect("row")
                .test_mae,
        );
    }
    let mean_mae = maes.iter().sum::<f64>() / maes.len() as f64;
    let worst = maes.iter().cloned().fold(0.0, f64::max);
    let share = hits as f64 / runs as f64;
    let pass = share >= 0.9 && mean_mae <= 1.2 * floor;
    Check::new(
        pass,
        format!(
            "{target} {combo}: planted set recovered in {hits}/{runs} runs; mean test MAE {mean_mae:.3} \
             (max {worst:.3}) vs 1.2 x floor {:.3}",
            1.2 * floor
        ),
    )
}

pub fn report_arithmetic() -> Check {
    let sel = variant_from_relative(1.61, 17.6);
    let auto = variant_from_relative(1.61, 24.0);
    let arithmetic = (sel - 1.33).abs() <= 0.01 && (auto - 1.23).abs() <= 0.01;

    let literal = [
        ("0.412^1", 0.412, SigLevel::P01),
        ("-0.203^2", -0.203, SigLevel::P05),
        ("$0.150^3$", 0.150, SigLevel::P10),
        ("0.010", 0.010, SigLevel::None),
    ];
    let literal_ok = literal.iter().all(|(s, r, sig)| {
        let e = parse_appendix_cell(s).expect("cell");
        e.r == *r && e.sig == *sig
    });

    // feature columns with graded dependence on one indicator so every
    // significance level shows up
    let mut g = rng(23);
    let n = 60;
    let ind_cols: Vec<String> = INDICATOR_NAMES.iter().map(|s| s.to_string()).collect();
    let mut ind = Table::new(ind_cols.clone());
    let mut feat_cols = Vec::new();
    let rhos = [0.0, 0.1, 0.22, 0.27, 0.3, 0.45, 0.8, -0.6];
    for j in 0..rhos.len() {
        feat_cols.push(format!("f{j}"));
    }
    let mut feats = Table::new(feat_cols);
    for i in 0..n {
        let base: Vec<f64> = (0..ind_cols.len())
            .map(|_| g.sample::<f64, _>(StandardNormal).abs() + 0.1)
            .collect();
        let f: Vec<Option<f64>> = rhos
            .iter()
            .map(|rho| Some(rho * base[1] * 3.0 + g.sample::<f64, _>(StandardNormal)))
            .collect();
        ind.push_row(format!("v{i}"), base.into_iter().map(Some).collect())
            .unwrap();
        feats.push_row(format!("v{i}"), f).unwrap();
    }
    let matrix =
        stats::build_matrix(&feats, &ind, &stats::default_prediction_tasks()).expect("matrix");
    let tsv = matrix.to_appendix_tsv();
    let parsed = parse_appendix_tsv(&tsv).expect("parse");
    let mut round_trip = parsed.col_labels == matrix.col_labels;
    let mut seen = std::collections::BTreeSet::new();
    for ((label, entries), (m_label, cells)) in parsed
        .rows
        .iter()
        .zip(matrix.row_labels.iter().zip(&matrix.cells))
    {
        round_trip &= label == m_label;
        for (e, c) in entries.iter().zip(cells) {
            round_trip &= (e.r - c.r).abs() <= 0.0005 + 1e-12 && e.sig == SigLevel::from_p(c.p);
            seen.insert(e.sig);
        }
    }
    round_trip &= parsed.rows.len() == matrix.row_labels.len() + 1;
    let all_markers = [SigLevel::P01, SigLevel::P05, SigLevel::P10]
        .iter()
        .all(|s| seen.contains(s));
    let pass = arithmetic && literal_ok && round_trip && all_markers;
    Check::new(
        pass,
        format!(
            "1.61 at +17.6% -> {sel:.4}, at +24.0% -> {auto:.4}; appendix cells parse {literal_ok}, \
             table round trip {round_trip}, markers ^1/^2/^3 all exercised {all_markers}"
        ),
    )
}

/// Two complete runs of the seed-42 fixture through the file-based path.
pub fn full_fixture_runs(dir: &std::path::Path) -> (RunOutput, RunOutput) {
    let fx = generate_fixture(42, &FixtureSpec::default()).expect("fixture");
    fx.write(dir).expect("write fixture");
    let mut config =
        ExperimentConfig::from_file(&dir.join(engage_core::fixture::CONFIG_FILE)).expect("config");
    config.seed = 42;
    let first = pipeline::run(&config).expect("first run");
    let second = pipeline::run(&config).expect("second run");
    (first, second)
}

pub fn determinism(first: &RunOutput, second: &RunOutput) -> Check {
    let a = first.report.to_json().expect("json");
    let b = second.report.to_json().expect("json");
    let same_report = a == b;
    let same_files = first.artifacts == second.artifacts;
    Check::new(
        same_report && same_files,
        format!(
            "report.json {} bytes, identical {same_report}; all {} artifacts identical {same_files}",
            a.len(),
            first.artifacts.len()
        ),
    )
}

pub fn grid_cardinality(run: &RunOutput) -> Check {
    let rows = run.report.rows.len();
    let targets: std::collections::BTreeSet<_> =
        run.report.rows.iter().map(|r| &r.target).collect();
    let combos: std::collections::BTreeSet<_> =
        run.report.rows.iter().map(|r| &r.combination).collect();
    let methods: std::collections::BTreeSet<_> = run.report.rows.iter().map(|r| r.method).collect();
    let pass = rows == 84 && targets.len() == 4 && combos.len() == 7 && methods.len() == 3;
    Check::new(
        pass,
        format!(
            "{rows} rows = {} targets x {} combinations x {} methods",
            targets.len(),
            combos.len(),
            methods.len()
        ),
    )
}
