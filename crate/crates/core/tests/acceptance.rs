//! Acceptance suite: one test per gate criterion, each printing a PASS/FAIL
//! line per assertion (run with `--nocapture` to see them on success).

use std::time::Instant;

use ctxscale::analysis::{context_generalization_study, penalty_ablation, synthetic_generate};
use ctxscale::data::fixtures::{
    reference_params, task_profile, BASE_TRAINING_TOKENS, CHECKPOINTS, EXTENSION_BATCH,
    EXTENSION_STEPS,
};
use ctxscale::data::{builtin_dataset, reconstruct_prompt_length, BuiltinTask};
use ctxscale::model::{
    eval_scaling_law, extension_tokens, training_compute, ComputeSpec, PenaltyConfig,
};
use ctxscale::optimize::{differential_evolution, fit, local, DeConfig, FitConfig};

fn check(name: &str, pass: bool, detail: String) -> bool {
    println!(
        "[acceptance] {name}: {} ({detail})",
        if pass { "PASS" } else { "FAIL" }
    );
    pass
}

#[test]
fn criterion_1_in_distribution_refit() {
    let cases = [
        (BuiltinTask::Arithmetic, 0.02),
        (BuiltinTask::Translation, 0.02),
        (BuiltinTask::Commonsense, 0.06),
    ];
    let mut all = true;
    for (task, limit) in cases {
        let points = builtin_dataset(task);
        let start = Instant::now();
        let result = fit(&points, &FitConfig::default()).unwrap();
        let secs = start.elapsed().as_secs_f64();
        all &= check(
            &format!("criterion 1: {task} refit MAE <= {limit}"),
            result.mae <= limit,
            format!("mae = {:.4} over {} points", result.mae, points.len()),
        );
        all &= check(
            &format!("criterion 1: {task} refit runtime < 60 s"),
            secs < 60.0,
            format!("{secs:.2} s, {} generations", result.de_generations_used),
        );
    }
    assert!(all);
}

#[test]
fn criterion_2_penalty_ablation() {
    let points = builtin_dataset(BuiltinTask::Arithmetic);
    let start = Instant::now();
    let report = penalty_ablation(&points, &FitConfig::default()).unwrap();
    let secs = start.elapsed().as_secs_f64();

    let ratio = report.penalty_off.mae_over_limit / report.penalty_on.mae_over_limit;
    let mut all = check(
        "criterion 2: penalty-off over-limit MAE >= 3x penalty-on",
        ratio >= 3.0,
        format!(
            "off {:.4} / on {:.4} = {ratio:.2}x over {} over-limit points",
            report.penalty_off.mae_over_limit,
            report.penalty_on.mae_over_limit,
            report.over_limit_count
        ),
    );
    all &= check(
        "criterion 2: penalty-on overall MAE < penalty-off overall MAE",
        report.penalty_on.mae_overall < report.penalty_off.mae_overall,
        format!(
            "on {:.4} < off {:.4}",
            report.penalty_on.mae_overall, report.penalty_off.mae_overall
        ),
    );
    all &= check(
        "criterion 2: ablation runtime < 2 min",
        secs < 120.0,
        format!("{secs:.2} s"),
    );
    assert!(all);
}

#[test]
fn criterion_3_context_length_extrapolation() {
    let cases = [
        (BuiltinTask::Arithmetic, 0.04),
        (BuiltinTask::Commonsense, 0.10),
        (BuiltinTask::Translation, 0.03),
    ];
    let mut all = true;
    for (task, limit) in cases {
        let points = builtin_dataset(task);
        let study = context_generalization_study(&points, 10_000.0, &FitConfig::default()).unwrap();
        all &= check(
            &format!("criterion 3: {task} held-out MAE <= {limit}"),
            study.held_out_mae <= limit,
            format!(
                "held-out mae = {:.4} ({} train / {} held-out)",
                study.held_out_mae, study.train_count, study.held_out_count
            ),
        );
    }
    assert!(all);
}

#[test]
fn criterion_4_compute_accounting() {
    let mut all = true;

    let mut worst_compute = 0.0f64;
    for ckpt in &CHECKPOINTS {
        let added = if ckpt.n_ctx == 4096 {
            0
        } else {
            extension_tokens(EXTENSION_STEPS, EXTENSION_BATCH, ckpt.n_ctx)
        };
        let spec = ComputeSpec {
            n_params: ckpt.n_params,
            d_tokens: BASE_TRAINING_TOKENS + added,
        };
        let computed = training_compute(&spec).unwrap();
        worst_compute = worst_compute.max((computed - ckpt.compute).abs() / ckpt.compute);
    }
    all &= check(
        "criterion 4: training_compute within 0.1% on all 12 checkpoints",
        worst_compute <= 1e-3,
        format!("worst relative error {worst_compute:.2e}"),
    );

    let mut worst_tokens = 0.0f64;
    for ckpt in &CHECKPOINTS {
        if let Some(billions) = ckpt.added_tokens_billions {
            let computed = extension_tokens(EXTENSION_STEPS, EXTENSION_BATCH, ckpt.n_ctx) as f64;
            let quoted = billions * 1e9;
            worst_tokens = worst_tokens.max((computed - quoted).abs() / quoted);
        }
    }
    all &= check(
        "criterion 4: extension_tokens within 0.5% of the quoted column",
        worst_tokens <= 5e-3,
        format!("worst relative error {worst_tokens:.2e}"),
    );
    assert!(all);
}

#[test]
fn criterion_5_reference_parameter_cross_check() {
    let params = reference_params(BuiltinTask::Arithmetic);
    let penalty = PenaltyConfig::default();
    let profile = task_profile(BuiltinTask::Arithmetic);
    let points = builtin_dataset(BuiltinTask::Arithmetic);

    let mut worst = 0.0f64;
    let mut cells = 0;
    for ckpt in CHECKPOINTS.iter().filter(|c| c.n_ctx >= 65_536) {
        // the larger checkpoints sit at a different compute level
        if ckpt.compute > 1e23 {
            continue;
        }
        for shots in [15u32, 31, 63] {
            let n_pmt = reconstruct_prompt_length(&profile, shots).unwrap();
            let predicted =
                eval_scaling_law(&params, &penalty, 7.77e22, n_pmt, ckpt.n_ctx as f64).unwrap();
            let observed = points
                .iter()
                .find(|p| p.model_id == ckpt.model_id && p.shots == shots)
                .unwrap()
                .metric;
            worst = worst.max((predicted - observed).abs());
            cells += 1;
        }
    }
    let pass = check(
        "criterion 5: reference fit predicts 15-63-shot long-window cells within 0.05",
        worst <= 0.05 && cells == 6,
        format!("worst |pred - obs| = {worst:.4} over {cells} cells"),
    );
    assert!(pass);
}

#[test]
fn criterion_6_synthetic_identifiability() {
    let truth = reference_params(BuiltinTask::Arithmetic);
    let penalty = PenaltyConfig::default();
    let design: Vec<(f64, f64, u64)> = builtin_dataset(BuiltinTask::Arithmetic)
        .iter()
        .map(|p| (p.compute, p.n_pmt, p.n_ctx))
        .collect();
    let mut all = true;

    // noiseless surfaces: prediction-space recovery at every design point
    // across 10 seeds
    let noiseless = synthetic_generate(&truth, &penalty, &design, 0.0, 0).unwrap();
    let mut worst = 0.0f64;
    for seed in 0..10u64 {
        let config = FitConfig {
            seed,
            ..FitConfig::default()
        };
        let result = fit(&noiseless, &config).unwrap();
        for point in &noiseless {
            let recovered = eval_scaling_law(
                &result.params,
                &penalty,
                point.compute,
                point.n_pmt,
                point.n_ctx as f64,
            )
            .unwrap();
            worst = worst.max((recovered - point.metric).abs());
        }
    }
    all &= check(
        "criterion 6: noiseless recovery within 1e-3 at every design point, 10 seeds",
        worst <= 1e-3,
        format!("worst |recovered - truth| = {worst:.2e}"),
    );

    // noisy surface: error against the generating model on a held-out grid
    // of intermediate shot counts
    let noisy = synthetic_generate(&truth, &penalty, &design, 0.02, 7).unwrap();
    let result = fit(&noisy, &FitConfig::default()).unwrap();
    let profile = task_profile(BuiltinTask::Arithmetic);
    let mut err_sum = 0.0;
    let mut n = 0;
    for ckpt in &CHECKPOINTS {
        for shots in [2u32, 5, 11, 23, 47, 95, 191, 383] {
            let n_pmt = reconstruct_prompt_length(&profile, shots).unwrap();
            let fitted = eval_scaling_law(
                &result.params,
                &penalty,
                ckpt.compute,
                n_pmt,
                ckpt.n_ctx as f64,
            )
            .unwrap();
            let ideal =
                eval_scaling_law(&truth, &penalty, ckpt.compute, n_pmt, ckpt.n_ctx as f64).unwrap();
            err_sum += (fitted - ideal).abs();
            n += 1;
        }
    }
    let held_out_mae = err_sum / n as f64;
    all &= check(
        "criterion 6: noise 0.02 held-out-grid MAE <= 0.03",
        held_out_mae <= 0.03,
        format!("held-out grid mae = {held_out_mae:.4} over {n} cells"),
    );
    assert!(all);
}

#[test]
fn criterion_7_optimizer_property_suite() {
    let mut all = true;

    // bounds respected on every evaluated candidate
    let bounds = vec![(-2.0, 3.0), (0.5, 4.0), (-5.0, -1.0)];
    let violations = std::cell::Cell::new(0usize);
    let recorded_sphere = |x: &[f64]| {
        for (v, &(lo, hi)) in x.iter().zip(&bounds) {
            if *v < lo || *v > hi {
                violations.set(violations.get() + 1);
            }
        }
        x.iter().map(|v| v * v).sum()
    };
    let out = differential_evolution(recorded_sphere, &bounds, &DeConfig::default(), 13).unwrap();
    all &= check(
        "criterion 7: DE respects bounds on every evaluated candidate",
        violations.get() == 0,
        format!("{} violations", violations.get()),
    );

    // best loss non-increasing per generation
    let monotone = out
        .best_loss_history
        .windows(2)
        .all(|pair| pair[1] <= pair[0]);
    all &= check(
        "criterion 7: best loss non-increasing per generation",
        monotone,
        format!("{} generations", out.generations),
    );

    // sphere sanity check
    let sphere = |x: &[f64]| -> f64 { x.iter().map(|v| v * v).sum() };
    let out = differential_evolution(
        sphere,
        &[(-5.0, 5.0), (-5.0, 5.0), (-5.0, 5.0)],
        &DeConfig {
            max_generations: 200,
            ..DeConfig::default()
        },
        42,
    )
    .unwrap();
    all &= check(
        "criterion 7: sphere best loss < 1e-6 within 200 generations",
        out.best_loss < 1e-6,
        format!("best loss = {:.2e}", out.best_loss),
    );

    // identical seeds give bit-identical FitResults
    let points = builtin_dataset(BuiltinTask::Translation);
    let config = FitConfig {
        de: DeConfig {
            population_size: 30,
            max_generations: 150,
            ..DeConfig::default()
        },
        ..FitConfig::default()
    };
    let a = fit(&points, &config).unwrap();
    let b = fit(&points, &config).unwrap();
    all &= check(
        "criterion 7: identical seeds give bit-identical FitResults",
        a == b && a.to_json().unwrap() == b.to_json().unwrap(),
        format!("sse = {:.6e}", a.sse),
    );

    // local refinement never increases SSE
    let mut never_increased = true;
    let quadratic = |x: &[f64], out: &mut [f64]| {
        out[0] = x[0] - 0.25;
        out[1] = 2.0 * x[1] + 1.0;
        out[2] = x[0] * x[1];
    };
    for start in [[0.9, 0.9], [-0.9, 0.4], [0.1, -0.8]] {
        let mut r = vec![0.0; 3];
        quadratic(&start, &mut r);
        let start_sse: f64 = r.iter().map(|v| v * v).sum();
        let refined = local::refine(
            quadratic,
            3,
            &start,
            &[(-1.0, 1.0), (-1.0, 1.0)],
            &Default::default(),
        );
        never_increased &= refined.sse <= start_sse;
    }
    all &= check(
        "criterion 7: local refinement never increases SSE",
        never_increased,
        "3 starts on a bounded quadratic".to_string(),
    );

    assert!(all);
}
