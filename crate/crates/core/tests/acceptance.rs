//! Acceptance suite. Runs every criterion, prints one PASS/FAIL/SKIP line
//! each, and exits non-zero if any criterion fails.

mod common;

use std::time::{Duration, Instant};

use gabm::domain::{ShirtColor, WorldState};
use gabm::engine::run_simulation;
use gabm::experiments::{extract_endpoints, get_experiment, run_batch, BatchOptions, ExperimentId};
use gabm::llm::{API_BASE_ENV, API_KEY_ENV};
use gabm::prompt::{build_prompt, color_word_counts, PromptContext, PromptSequence};
use gabm::stats::{endpoint_rows, fit_comparison, fit_path_dependence, ols_fit, DesignMatrix, EndpointRow};
use gabm::{BackendKind, LlmClient, RetryPolicy};

use common::{normal_equation_fit, random_instance, rel_err};

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = Result<String, String>;
type Criterion = (&'static str, Box<dyn Fn() -> Outcome>);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn ols_oracle() -> Check {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for i in 0..100u64 {
        let k = if i % 2 == 0 { 3 } else { 6 };
        let (rows, y) = random_instance(1000 + i, 100, k);
        let names = (0..k).map(|j| format!("x{j}")).collect();
        let x = DesignMatrix::from_rows(names, &rows).map_err(|e| e.to_string())?;
        let fit = ols_fit(&x, &y).map_err(|e| e.to_string())?;
        let oracle = normal_equation_fit(&rows, &y);
        for (j, c) in fit.coefficients.iter().enumerate() {
            worst = worst
                .max(rel_err(c.beta, oracle.beta[j]))
                .max(rel_err(c.se, oracle.se[j]));
        }
        worst = worst.max(rel_err(fit.r_squared, oracle.r2));
    }
    let elapsed = start.elapsed();
    ensure(worst < 1e-9, || format!("max relative error {worst:.3e}"))?;
    ensure(elapsed < Duration::from_secs(1), || format!("took {elapsed:?}"))?;
    Ok(format!("max relative error {worst:.1e} in {elapsed:.2?}"))
}

fn a1_exact_recovery() -> Check {
    let rows: Vec<EndpointRow> = (0..60)
        .map(|i| {
            let b0 = i % 21;
            let (gt, eq) = (u8::from(b0 > 10), u8::from(b0 == 10));
            let b7 = 4 + 13 * gt as usize + 12 * eq as usize;
            EndpointRow::new(b0, b7, 10, false)
        })
        .collect();
    let fit = fit_path_dependence(&rows).map_err(|e| e.to_string())?;
    let beta = fit.betas();
    for (b, e) in beta.iter().zip([4.0, 13.0, 12.0]) {
        ensure((b - e).abs() < 1e-9, || format!("beta {beta:?}"))?;
    }
    ensure((fit.r_squared - 1.0).abs() < 1e-9, || format!("R2 {}", fit.r_squared))?;
    Ok(format!("beta = ({:.3}, {:.3}, {:.3}), R2 = {:.6}", beta[0], beta[1], beta[2], fit.r_squared))
}

fn a2_null_comparison() -> Check {
    let base: Vec<EndpointRow> = (0..100)
        .map(|i| {
            let b0 = (i * 7 + 3) % 21;
            let b7 = (i * 11 + b0 * 3) % 21;
            EndpointRow::new(b0, b7, 10, false)
        })
        .collect();
    let copy = base.clone();
    let fit = fit_comparison(&copy, &base).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for name in ["E", "E * {B0 > 10}", "E * {B0 = 10}"] {
        let c = fit.coefficient(name).ok_or(format!("missing {name}"))?;
        worst = worst.max(c.beta.abs());
    }
    ensure(worst < 1e-9, || format!("largest experiment term {worst:.3e}"))?;
    Ok(format!("largest experiment term {worst:.1e}"))
}

fn scripted_path_dependence() -> Check {
    let start = Instant::now();
    let backend = BackendKind::Scripted { seed: 2024 };
    let client = LlmClient::new(&backend, &RetryPolicy::default()).map_err(|e| e.to_string())?;
    let opts = BatchOptions {
        iterations: 100,
        parallelism: 8,
        ..BatchOptions::new("scripted", backend, 7)
    };
    let batch = run_batch(ExperimentId::E1, &opts, &client).map_err(|e| e.to_string())?;
    ensure(batch.runs.len() == 100, || format!("{} runs completed", batch.runs.len()))?;
    let rows = endpoint_rows(&extract_endpoints(&batch), 10, false);
    let fit = fit_path_dependence(&rows).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let b1 = fit.coefficient("{B0 > 10}").ok_or("missing {B0 > 10}")?;
    ensure(b1.beta > 0.0, || format!("beta1 = {}", b1.beta))?;
    ensure(b1.p < 0.001, || format!("p(beta1) = {}", b1.p))?;
    ensure(fit.r_squared > 0.8, || format!("R2 = {}", fit.r_squared))?;
    ensure(elapsed < Duration::from_secs(10), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "beta1 = {:.2}, p = {:.1e}, R2 = {:.3} in {elapsed:.2?}",
        b1.beta, b1.p, fit.r_squared
    ))
}

fn context(attractor: bool, trait_sentence: &str) -> PromptContext {
    PromptContext {
        agent_name: "Sarah".into(),
        trait_sentence: trait_sentence.into(),
        day: 1,
        own_prior_color: ShirtColor::Green,
        prior_blue_count: 8,
        n_agents: 20,
        attractor,
        sequence: PromptSequence::Base,
    }
}

fn prompt_goldens() -> Check {
    let plain = build_prompt(&context(false, "conformist"));
    let with = build_prompt(&context(true, "conformist"));
    let bare = build_prompt(&context(false, ""));
    let expectations = [
        (&plain, "Yesterday on day 0, 8 of 20 wore blue shirts."),
        (&plain, "Based on the above context, you need to choose whether to wear blue or green shirt."),
        (&with, "Michael, the new CEO, bikes to work everyday, likes coffee, and often wears blue shirts."),
        (&with, "You note that your neighbor who works in a different company wears green."),
    ];
    for (text, needle) in expectations {
        ensure(text.contains(needle), || format!("missing {needle:?}"))?;
    }
    ensure(plain.contains("You are a conformist person."), || "trait sentence absent".into())?;
    ensure(!bare.contains("You are a "), || "no-persona prompt has a trait sentence".into())?;
    Ok("4 golden sentences present; no-persona prompt has no trait sentence".into())
}

fn batch_csv(backend: BackendKind, parallelism: usize) -> Result<String, String> {
    let client = LlmClient::new(&backend, &RetryPolicy::default()).map_err(|e| e.to_string())?;
    let opts = BatchOptions {
        iterations: 24,
        parallelism,
        ..BatchOptions::new("determinism", backend, 99)
    };
    run_batch(ExperimentId::E1, &opts, &client)
        .map(|b| b.to_csv())
        .map_err(|e| e.to_string())
}

fn determinism() -> Check {
    let scripted = BackendKind::Scripted { seed: 3 };
    let s1 = batch_csv(scripted.clone(), 1)?;
    let s8 = batch_csv(scripted, 8)?;
    ensure(s1 == s8, || "scripted CSVs differ".into())?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cache_path = dir.path().join("cache.jsonl");
    let recording = BackendKind::Replay {
        cache_path: cache_path.clone(),
        fallback: Some(Box::new(BackendKind::Scripted { seed: 3 })),
    };
    let recorded = batch_csv(recording, 8)?;
    let cached = BackendKind::Replay { cache_path, fallback: None };
    let r1 = batch_csv(cached.clone(), 1)?;
    let r8 = batch_csv(cached, 8)?;
    ensure(r1 == r8, || "replay CSVs differ".into())?;
    ensure(r1 == recorded, || "replay differs from recording".into())?;
    Ok(format!("scripted and replay batch CSVs identical ({} bytes)", s1.len()))
}

fn conservation() -> Check {
    let client = LlmClient::new(&BackendKind::Scripted { seed: 11 }, &RetryPolicy::default())
        .map_err(|e| e.to_string())?;
    let mut checked = 0;
    for id in ExperimentId::ALL {
        let opts = BatchOptions {
            iterations: 5,
            parallelism: 4,
            ..BatchOptions::new("shape", BackendKind::Scripted { seed: 11 }, 5)
        };
        let batch = run_batch(id, &opts, &client).map_err(|e| e.to_string())?;
        for run in &batch.runs {
            let m = &run.result.matrix;
            ensure(m.is_complete() && run.result.blue_series.len() == 8, || format!("{id} run {} incomplete", run.run_id))?;
            for day in 0..=m.n_days() {
                let blue = m.count_blue(day).map_err(|e| e.to_string())?;
                let green = m.count_green(day).map_err(|e| e.to_string())?;
                ensure(blue + green == 20, || {
                    format!("{id} run {} day {day} does not sum to 20", run.run_id)
                })?;
            }
            checked += 1;
        }
    }
    let fixture = include_str!("fixtures/example_week.csv");
    let week = WorldState::from_matrix_csv(fixture).map_err(|e| e.to_string())?;
    let b0 = week.count_blue(0).map_err(|e| e.to_string())?;
    let b7 = week.count_blue(7).map_err(|e| e.to_string())?;
    ensure(b0 == 10 && b7 == 18, || format!("fixture matrix gives B0 = {b0}, B7 = {b7}"))?;
    Ok(format!("{checked} runs conserve 20 agents over 8 columns; fixture matrix B0 = 10, B7 = 18"))
}

fn attractor_balance() -> Check {
    let mut cases = 0;
    for sequence in [PromptSequence::Base, PromptSequence::OwnColorNearDecision, PromptSequence::CoworkerInfoFirst] {
        for blue in [0, 8, 20] {
            for own in [ShirtColor::Blue, ShirtColor::Green] {
                let mut ctx = context(false, "highly conformist");
                ctx.sequence = sequence;
                ctx.prior_blue_count = blue;
                ctx.own_prior_color = own;
                let (b0, g0) = color_word_counts(&build_prompt(&ctx));
                ctx.attractor = true;
                let (b1, g1) = color_word_counts(&build_prompt(&ctx));
                ensure(b1 == b0 + 1 && g1 == g0 + 1, || {
                    format!("{sequence:?}: blue {b0}->{b1}, green {g0}->{g1}")
                })?;
                cases += 1;
            }
        }
    }
    Ok(format!("+1 blue and +1 green in all {cases} cases"))
}

fn live_smoke() -> Outcome {
    if std::env::var(API_KEY_ENV).is_err() {
        return Outcome::Skip(format!("{API_KEY_ENV} not set; live numbers are not reproducible offline"));
    }
    let check = || -> Check {
        let backend = BackendKind::live_from_env().map_err(|e| e.to_string())?;
        let model = std::env::var("GABM_MODEL").map_err(|_| "GABM_MODEL is not set".to_string())?;
        let mut cfg = get_experiment(ExperimentId::E1).run_config(&model, backend, 1);
        cfg.ambiguous_reply_retries = 0;
        let result = run_simulation(&cfg).map_err(|e| e.to_string())?;
        ensure(result.reasoning_log.len() == 140, || {
            format!("{} decisions logged", result.reasoning_log.len())
        })?;
        Ok(format!("20 x 7 decisions parsed against {}", std::env::var(API_BASE_ENV).unwrap_or_default()))
    };
    match check() {
        Ok(m) => Outcome::Pass(m),
        Err(m) => Outcome::Fail(m),
    }
}

fn main() {
    let checks: Vec<Criterion> = vec![
        ("1 OLS oracle equivalence", Box::new(|| wrap(ols_oracle()))),
        ("2 A1 exact recovery", Box::new(|| wrap(a1_exact_recovery()))),
        ("3 A2 null comparison", Box::new(|| wrap(a2_null_comparison()))),
        ("4 scripted path dependence", Box::new(|| wrap(scripted_path_dependence()))),
        ("5 prompt golden strings", Box::new(|| wrap(prompt_goldens()))),
        ("6 batch determinism", Box::new(|| wrap(determinism()))),
        ("7 conservation and shape", Box::new(|| wrap(conservation()))),
        ("8 attractor word balance", Box::new(|| wrap(attractor_balance()))),
        ("9 live smoke test", Box::new(live_smoke)),
    ];
    let mut failed = 0;
    for (name, check) in &checks {
        match check() {
            Outcome::Pass(m) => println!("PASS  {name}: {m}"),
            Outcome::Skip(m) => println!("SKIP  {name}: {m}"),
            Outcome::Fail(m) => {
                failed += 1;
                println!("FAIL  {name}: {m}");
            }
        }
    }
    println!("acceptance: {} checked, {failed} failed", checks.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

fn wrap(check: Check) -> Outcome {
    match check {
        Ok(m) => Outcome::Pass(m),
        Err(m) => Outcome::Fail(m),
    }
}
