//! Acceptance checks, one PASS/FAIL line each. Exits non-zero on any failure.

mod common;

use common::fixture::{serve, Mode};
use common::goldens;
use common::oracles::{head_fd_error, head_instance, input, tiny_fd_error, tiny_reference_logits};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semprompt::corpus::{parse_dataset_str, sample_kshot, LabelSet, TaskSchema};
use semprompt::depfilter::grid_search;
use semprompt::harness::{format_cell, load_experiment, run_experiment, EvalReport, SeedResult};
use semprompt::lm::{LmBackend, LmError, RemoteBackend, RemoteConfig, TinyConfig, TinyMlm};
use semprompt::mapping::{
    ensemble_backward, init_head, loss, predict_ensemble, predict_single, predict_weighted, EnsembleMember,
    LabelMapping, MappingEnsemble, MappingHead, MaskLogits,
};
use std::collections::HashSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(limit: Duration, start: Instant) -> Result<Duration, String> {
    let t = start.elapsed();
    ensure(t < limit, || format!("took {t:.1?}, limit {limit:?}"))?;
    Ok(t)
}

fn head_gradients() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for seed in 0..120 {
        let err = head_fd_error(&head_instance(seed));
        ensure(err < 1e-4, || format!("instance {seed}: relative error {err:e}"))?;
        worst = worst.max(err);
    }
    let t = within(Duration::from_secs(10), start)?;
    Ok(format!("120 instances, worst rel {worst:.1e}, {t:.2?}"))
}

fn random_logits(rng: &mut ChaCha8Rng, n: usize) -> MaskLogits {
    MaskLogits::new((0..n).map(|_| rng.random_range(-30.0..30.0)).collect())
}

fn probability_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    for round in 0..500u64 {
        let vocab = rng.random_range(6..30);
        let labels = rng.random_range(2..=5);
        let tokens: Vec<Vec<u32>> = (0..labels)
            .map(|_| (0..rng.random_range(1..=5)).map(|_| rng.random_range(0..vocab)).collect())
            .collect();
        let m = LabelMapping::new("m", tokens).map_err(|e| e.to_string())?;
        let logits = random_logits(&mut rng, vocab as usize);
        let head = init_head(&m, round);
        let members = vec![EnsembleMember { mapping: m.clone(), head: head.clone() }; rng.random_range(1..=5)];
        let ens = MappingEnsemble::new(members).map_err(|e| e.to_string())?;
        let one = predict_weighted(&logits, &m, &head).map_err(|e| e.to_string())?;
        let joint = predict_ensemble(&logits, &ens).map_err(|e| e.to_string())?;
        ensure(one == joint, || format!("round {round}: identical members differ"))?;

        let singletons = LabelMapping::new("s", (0..labels).map(|_| vec![rng.random_range(0..vocab)]).collect())
            .map_err(|e| e.to_string())?;
        let a = predict_single(&logits, &singletons).map_err(|e| e.to_string())?;
        let b = predict_weighted(&logits, &singletons, &MappingHead::unit(&singletons)).map_err(|e| e.to_string())?;
        ensure(a == b, || format!("round {round}: unit head differs from single mapping"))?;
        for p in [&one, &joint, &a] {
            let s: f64 = p.iter().sum();
            ensure((s - 1.0).abs() < 1e-9, || format!("round {round}: sum {s}"))?;
        }
        checked += 1;
    }
    Ok(format!("{checked} random instances, sums within 1e-9, equalities exact"))
}

fn reduction_chain() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let m = LabelMapping::new("m", vec![vec![5], vec![9], vec![2]]).map_err(|e| e.to_string())?;
    let ens = MappingEnsemble::single(m.clone(), MappingHead::unit(&m)).map_err(|e| e.to_string())?;
    let logits: Vec<MaskLogits> = (0..32).map(|_| random_logits(&mut rng, 12)).collect();
    let gold: Vec<usize> = (0..32).map(|i| i % 3).collect();
    let mut worst: f64 = 0.0;
    let mut single_total = 0.0;
    for (i, l) in logits.iter().enumerate() {
        let a = loss(&[predict_ensemble(l, &ens).map_err(|e| e.to_string())?], &gold[i..=i]).map_err(|e| e.to_string())?;
        let b = loss(&[predict_single(l, &m).map_err(|e| e.to_string())?], &gold[i..=i]).map_err(|e| e.to_string())?;
        worst = worst.max((a - b).abs());
        single_total += b;
    }
    ensure(worst <= 1e-12, || format!("per-example gap {worst:e}"))?;
    let batch = ensemble_backward(&logits, &ens, &gold).map_err(|e| e.to_string())?.loss;
    let gap = (batch - single_total / 32.0).abs();
    ensure(gap <= 1e-12, || format!("batch loss gap {gap:e}"))?;
    Ok(format!("32 examples, worst gap {worst:.1e}, batch gap {gap:.1e}"))
}

fn grid_oracle() -> Outcome {
    let exp = common::grid::experiment();
    let start = Instant::now();
    let ranked = grid_search(&common::grid::candidates(), &exp);
    let t = within(Duration::from_secs(120), start)?;
    let names: Vec<String> = ranked.iter().map(|r| r.filter.to_string()).collect();
    let mut independent = Vec::new();
    for f in common::grid::candidates() {
        let r = run_experiment(&exp.with_filter(Some(f.clone()))).map_err(|e| e.to_string())?;
        independent.push((f.to_string(), r.mean));
    }
    independent.sort_by(|a, b| b.1.total_cmp(&a.1));
    let oracle: Vec<String> = independent.iter().map(|x| x.0.clone()).collect();
    ensure(names == oracle, || format!("search gave {names:?}, independent runs {oracle:?}"))?;
    Ok(format!("{} in {t:.1?}", names.join(" > ")))
}

fn kshot_protocol() -> Outcome {
    let mut tsv = String::from("sentence\tlabel\n");
    for i in 0..100 {
        tsv.push_str(&format!("a dull and tired film number {i}\t0\n"));
        tsv.push_str(&format!("a warm and witty film number {i}\t1\n"));
    }
    let mut schema = TaskSchema::single("sst-2", &["negative", "positive"]);
    schema.header = true;
    let (labels, examples) = parse_dataset_str(&tsv, &schema).map_err(|e| e.to_string())?;
    for k in [1, 8, 16] {
        for seed in 1..=5 {
            let a = sample_kshot(&examples, &labels, k, seed).map_err(|e| e.to_string())?;
            let b = sample_kshot(&examples, &labels, k, seed).map_err(|e| e.to_string())?;
            ensure(a == b, || format!("k={k} seed={seed}: not deterministic"))?;
            for l in 0..labels.len() {
                let tr = a.train.iter().filter(|e| e.label == l).count();
                let dv = a.dev.iter().filter(|e| e.label == l).count();
                ensure(tr == k && dv == k, || format!("k={k} seed={seed} label {l}: {tr} train, {dv} dev"))?;
            }
            let train: HashSet<_> = a.train_ids().into_iter().collect();
            ensure(a.dev_ids().iter().all(|id| !train.contains(id)), || {
                format!("k={k} seed={seed}: train and dev overlap")
            })?;
        }
    }
    Ok("K in {1, 8, 16} x 5 seeds".into())
}

fn template_goldens() -> Outcome {
    goldens::check("templates.txt", &goldens::table_templates()?)?;
    goldens::check("dep_prompt.txt", &goldens::dep_prompts()?)?;
    goldens::check("meta_prompt.txt", &goldens::meta_prompt()?)?;
    Ok(format!("{} templates, dep and meta prompts byte-exact", goldens::TABLE.len()))
}

fn toy_convergence() -> Outcome {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("data/synthetic/config.toml");
    let (_, exp) = load_experiment(&path, &[]).map_err(|e| e.to_string())?;
    ensure(exp.protocol.k == 16 && exp.protocol.seeds.len() == 5, || "bundled config is not K=16 x 5 seeds".into())?;
    ensure(exp.protocol.max_steps <= 1000, || "too many steps".into())?;
    let start = Instant::now();
    let report = run_experiment(&exp).map_err(|e| e.to_string())?;
    let t = within(Duration::from_secs(300), start)?;
    ensure(report.complete && report.seeds.len() == 5, || "incomplete report".into())?;
    ensure(report.mean >= 0.95, || format!("mean {:.4}", report.mean))?;
    Ok(format!(
        "mean {:.4} over 5 seeds, {} steps/cell, {t:.1?}",
        report.mean, exp.protocol.max_steps
    ))
}

fn tiny_correctness() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..5 {
        let mut c = TinyConfig::new(12);
        c.seed = seed;
        let m = TinyMlm::new(c, 4).map_err(|e| e.to_string())?;
        let ids = [7, 4, 9];
        let got = m.score(&input(&ids, 1)).map_err(|e| e.to_string())?;
        let want = tiny_reference_logits(&m, &ids, 1);
        for (a, b) in got.values.iter().zip(&want) {
            worst = worst.max((a - b).abs());
        }
    }
    ensure(worst < 1e-6, || format!("forward gap {worst:e}"))?;
    let fd = tiny_fd_error(0, 20);
    ensure(fd < 1e-3, || format!("finite-difference rel error {fd:e}"))?;
    Ok(format!("forward gap {worst:.1e}, gradient rel {fd:.1e} on 20 coordinates"))
}

fn report_arithmetic() -> Outcome {
    let accs = [0.8, 0.9, 0.85, 0.95, 0.9];
    let seeds = accs
        .iter()
        .enumerate()
        .map(|(i, &accuracy)| SeedResult {
            seed: i as u64 + 1,
            accuracy,
            batch_size: 4,
            learning_rate: 1e-5,
            test_probabilities: Vec::new(),
        })
        .collect();
    let labels = LabelSet::new(["negative", "positive"]).map_err(|e| e.to_string())?;
    let r = EvalReport::from_seeds("sst-2", String::new(), labels, seeds, Vec::new(), Vec::new(), Vec::new());
    let mean = (0.8 + 0.9 + 0.85 + 0.95 + 0.9) / 5.0;
    let variance = ((0.8 - mean) * (0.8 - mean)
        + (0.9 - mean) * (0.9 - mean)
        + (0.85 - mean) * (0.85 - mean)
        + (0.95 - mean) * (0.95 - mean)
        + (0.9 - mean) * (0.9 - mean))
        / 5.0;
    let median = 0.9;
    ensure(r.mean == mean && r.variance == variance && r.median == median, || {
        format!("report ({}, {}, {}) vs ({mean}, {variance}, {median})", r.mean, r.variance, r.median)
    })?;
    let cell = format_cell(0.872, 0.00034);
    ensure(cell == "87.2 (3.4)", || format!("formatted {cell:?}"))?;
    Ok(format!("mean {mean}, variance {variance:.6}, median {median}; {}", r.cell()))
}

fn remote_protocol() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let logits: Vec<f64> = (0..32).map(|_| rng.random_range(-1e3..1e3) * rng.random::<f64>()).collect();
    let fx = serve(32, 16, 4, Mode::Fixed(logits.clone()));
    let config = RemoteConfig {
        backoff_ms: 1,
        timeout_ms: 5_000,
        ..RemoteConfig::new(&fx.url)
    };
    let backend = RemoteBackend::connect(config.clone()).map_err(|e| e.to_string())?;
    let got = backend.remote_score(&input(&[2, 17, 4, 3], 2)).map_err(|e| e.to_string())?;
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    ensure(bits(&got.values) == bits(&logits), || "logits not bit-exact".into())?;

    let short = serve(32, 16, 4, Mode::Short(31));
    let backend = RemoteBackend::connect(RemoteConfig {
        endpoint: short.url.clone(),
        ..config
    })
    .map_err(|e| e.to_string())?;
    match backend.remote_score(&input(&[2, 4, 3], 1)) {
        Err(LmError::Protocol(msg)) => Ok(format!("32 logits bit-exact; short response rejected ({msg})")),
        other => Err(format!("short response gave {other:?}")),
    }
}

fn main() {
    let checks: [(&str, fn() -> Outcome); 10] = [
        ("verbalizer head gradients", head_gradients),
        ("probability and ensemble invariants", probability_invariants),
        ("unit-head reduction to single mapping", reduction_chain),
        ("filter grid-search oracle", grid_oracle),
        ("k-shot sampling protocol", kshot_protocol),
        ("template goldens", template_goldens),
        ("toy end-to-end convergence", toy_convergence),
        ("tiny masked LM correctness", tiny_correctness),
        ("report arithmetic and format", report_arithmetic),
        ("remote backend protocol", remote_protocol),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why}", i + 1);
            }
        }
    }
    println!("{} passed, {failed} failed", checks.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
