//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::collections::HashSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use score::dataset::{DatasetFamily, Item, ItemBody};
use score::extraction::replay_fixtures;
use score::inference::{read_store, run_batch, BatchOptions, MockBackend, RetryPolicy, Store};
use score::manifest::manifest_path;
use score::math::{sym_equiv_with, EquivConfig, Stage};
use score::metrics::{
    accuracy, consistency_rate, macro_accuracy, micro_accuracy, Answer, Gold, MetricConfig, PredictionMatrix,
    PredictionSet, TaggedPrediction,
};
use score::orchestrator::{execute_run, execute_score, prepare_plan, ScoreRequest};
use score::perturbation::{choice_order_variant, option_letter, question_block, Task, Variant};
use score::report::render_table;
use serde::Deserialize;

use common::*;

type Check = fn() -> Result<String, String>;

fn main() {
    let criteria: [(&str, Check); 8] = [
        ("1 consistency rate vs brute-force oracle", criterion_1),
        ("2 protocol counts", criterion_2),
        ("3 choice-order invariants", criterion_3),
        ("4 extraction corpus", criterion_4),
        ("5 equivalence corpus", criterion_5),
        ("6 metric sanity", criterion_6),
        ("7 determinism and resume", criterion_7),
        ("8 report fidelity", criterion_8),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = match catch_unwind(AssertUnwindSafe(check)) {
            Ok(r) => r,
            Err(panic) => Err(panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into())),
        };
        match outcome {
            Ok(detail) => println!("PASS criterion {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {name}: {why}");
            }
        }
    }
    println!("{} of 8 criteria passed", 8 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    if elapsed < limit {
        Ok(())
    } else {
        Err(format!("took {elapsed:.2?}, limit {limit:?}"))
    }
}

fn ensure(ok: bool, why: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(why())
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, family: DatasetFamily, categories: usize) -> PredictionMatrix {
    let items = rng.gen_range(1..=20);
    let n_preds = rng.gen_range(2..=6);
    let sets = (0..items)
        .map(|i| {
            let predictions = (0..n_preds)
                .map(|v| {
                    let answer = if rng.gen_bool(0.15) {
                        None
                    } else if family == DatasetFamily::Math {
                        Some(Answer::Math(MATH_POOL.choose(rng).unwrap().to_string()))
                    } else {
                        Some(Answer::Option(rng.gen_range(0..4)))
                    };
                    TaggedPrediction::new(Variant::prompt(v as u32), answer)
                })
                .collect();
            let gold = if family == DatasetFamily::Math {
                Gold::Math(MATH_POOL.choose(rng).unwrap().to_string())
            } else {
                Gold::Option(rng.gen_range(0..4))
            };
            PredictionSet {
                item_id: format!("i{i}"),
                category: format!("c{}", rng.gen_range(0..categories)),
                gold,
                predictions,
            }
        })
        .collect();
    PredictionMatrix::new(family, sets)
}

fn criterion_1() -> Result<String, String> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for case in 0..200 {
        let family = if case % 2 == 0 { DatasetFamily::MmluPro } else { DatasetFamily::Math };
        let matrix = random_matrix(&mut rng, family, 3);
        for failed_pairs_similar in [false, true] {
            let config = MetricConfig { failed_pairs_similar, ..MetricConfig::default() };
            let got = consistency_rate(&matrix, &config).map_err(|e| e.to_string())?;
            let want = brute_force_cr(&matrix, failed_pairs_similar);
            let diff = (got - want).abs();
            worst = worst.max(diff);
            ensure(diff <= 1e-12, || format!("case {case}: {got} vs oracle {want}"))?;
        }
    }
    within(start.elapsed(), Duration::from_secs(5))?;
    Ok(format!("200 matrices x 2 modes, max deviation {worst:e}, {:.2?}", start.elapsed()))
}

fn criterion_2() -> Result<String, String> {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mut notes = Vec::new();
    for (family, per_item, splits, pooled) in [
        (DatasetFamily::MmluPro, 25, [10, 10, 5], 24),
        (DatasetFamily::AgiEval, 19, [10, 4, 5], 18),
        (DatasetFamily::Math, 15, [10, 0, 5], 15),
    ] {
        let dataset = write_dataset(dir.path(), family, 20);
        let out = dir.path().join(format!("{family}.store.jsonl"));
        let outcome = mock_run(&dataset, family, &out);
        ensure(outcome.summary.planned == 20 * per_item, || format!("{family}: planned {}", outcome.summary.planned))?;
        let records = read_store(&out).unwrap().records;
        let items = synthetic_items(family, 20);
        for item in &items.items {
            let n = records.iter().filter(|r| r.request.item_id == item.id).count();
            ensure(n == per_item, || format!("{family} item {}: {n} generations, want {per_item}", item.id))?;
            for (task, want) in Task::ALL.iter().zip(splits) {
                let n = records.iter().filter(|r| r.request.item_id == item.id && r.request.task == *task).count();
                ensure(n == want, || format!("{family} {task}: {n} generations, want {want}"))?;
            }
        }
        let report = execute_score(&ScoreRequest::new(&out, &dataset, family)).map_err(|e| e.to_string())?;
        let yk = report.aggregate.overall.predictions_per_item;
        ensure(yk == pooled, || format!("{family}: pooled |Y_k| = {yk}, want {pooled}"))?;
        notes.push(format!("{family} {per_item}/item |Y_k|={yk}"));
    }
    within(start.elapsed(), Duration::from_secs(30))?;
    Ok(format!("{}, {:.2?}", notes.join(", "), start.elapsed()))
}

fn mcq_item() -> impl Strategy<Value = (Item, usize)> {
    (2usize..=10)
        .prop_flat_map(|n| (proptest::collection::vec("[a-z]{1,6}", n), 0..n, 0..n))
        .prop_map(|(options, gold, position)| (Item::mcq("p", "Pick one.", options, gold, "misc"), position))
}

fn criterion_3() -> Result<String, String> {
    let start = Instant::now();
    let mut runner = TestRunner::new(Config { cases: 1000, failure_persistence: None, ..Config::default() });
    runner
        .run(&mcq_item(), |(item, position)| {
            let ItemBody::Mcq { options, gold_index } = &item.body else { unreachable!() };
            let shown = choice_order_variant(&item, position).unwrap();
            let ItemBody::Mcq { options: moved, gold_index: new_gold } = &shown.body else { unreachable!() };
            prop_assert_eq!(*new_gold, position);
            prop_assert_eq!(&moved[position], &options[*gold_index]);
            let mut a = options.clone();
            let mut b = moved.clone();
            a.sort();
            b.sort();
            prop_assert_eq!(a, b);
            let restored = choice_order_variant(&shown, *gold_index).unwrap();
            prop_assert_eq!(&restored, &item);
            let block = question_block(&shown);
            let expected_line = format!("{}. {}", option_letter(position), options[*gold_index]);
            prop_assert!(block.lines().any(|l| l == expected_line), "missing `{}` in {}", expected_line, block);
            for (i, text) in moved.iter().enumerate() {
                let line = format!("{}. {}", option_letter(i), text);
                prop_assert!(block.lines().any(|l| l == line));
            }
            let variant = Variant::choice(0, position);
            prop_assert_eq!(variant.original_option_index(&item, position), *gold_index);
            for i in 0..options.len() {
                prop_assert_eq!(&moved[i], &options[variant.original_option_index(&item, i)]);
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    within(start.elapsed(), Duration::from_secs(2))?;
    Ok(format!("1000 cases, {:.2?}", start.elapsed()))
}

fn fixture(name: &str) -> String {
    std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)).unwrap()
}

fn criterion_4() -> Result<String, String> {
    let report = replay_fixtures(&fixture("extraction.jsonl")).map_err(|e| e.to_string())?;
    ensure(report.total >= 40, || format!("only {} fixtures", report.total))?;
    ensure(report.mismatches.is_empty(), || {
        let names: Vec<_> = report.mismatches.iter().map(|m| m.name.as_str()).collect();
        format!("{} mismatch(es): {}", names.len(), names.join(", "))
    })?;
    Ok(format!("{} fixtures, 0 mismatches", report.total))
}

#[derive(Deserialize)]
struct EquivPair {
    a: String,
    b: String,
    expected: bool,
    exact: bool,
}

fn criterion_5() -> Result<String, String> {
    let pairs: Vec<EquivPair> = fixture("equivalence.jsonl")
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    ensure(pairs.len() >= 50, || format!("only {} pairs", pairs.len()))?;
    let config = EquivConfig::default();
    let exact = EquivConfig { abs_tol: 0.0, rel_tol: 0.0, abs_floor: 0.0, ..EquivConfig::default() };
    let mut exact_count = 0;
    for p in &pairs {
        let d = sym_equiv_with(&p.a, &p.b, &config);
        ensure(d.equivalent == p.expected, || format!("`{}` vs `{}`: got {} at {}", p.a, p.b, d.equivalent, d.stage))?;
        if p.exact {
            exact_count += 1;
            let z = sym_equiv_with(&p.a, &p.b, &exact);
            ensure(z.equivalent == p.expected, || format!("`{}` vs `{}` depends on tolerance", p.a, p.b))?;
            ensure(!matches!(z.stage, Stage::NumericConstant | Stage::RandomizedEvaluation), || {
                format!("`{}` vs `{}` decided at {}", p.a, p.b, z.stage)
            })?;
        }
    }
    let mut elements: Vec<&str> = Vec::new();
    let mut seen = HashSet::new();
    for p in &pairs {
        for s in [p.a.as_str(), p.b.as_str()] {
            if seen.insert(s) {
                elements.push(s);
            }
        }
    }
    for s in &elements {
        ensure(sym_equiv_with(s, s, &config).equivalent, || format!("`{s}` is not equivalent to itself"))?;
    }
    let mut combos = 0;
    for (i, a) in elements.iter().enumerate() {
        for b in &elements[i + 1..] {
            combos += 1;
            let ab = sym_equiv_with(a, b, &config).equivalent;
            let ba = sym_equiv_with(b, a, &config).equivalent;
            ensure(ab == ba, || format!("asymmetric: `{a}` vs `{b}`"))?;
        }
    }
    Ok(format!(
        "{} pairs ({exact_count} exact), reflexive over {} elements, symmetric over {combos} combinations",
        pairs.len(),
        elements.len()
    ))
}

fn substitute_failed(matrix: &PredictionMatrix, rng: &mut ChaCha8Rng) -> PredictionMatrix {
    let mut out = matrix.clone();
    for set in &mut out.sets {
        for p in &mut set.predictions {
            if rng.gen_bool(0.3) {
                p.answer = None;
            }
        }
    }
    out
}

fn criterion_6() -> Result<String, String> {
    let config = MetricConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..50 {
        let matrix = random_matrix(&mut rng, DatasetFamily::MmluPro, 1);
        for v in matrix.variants() {
            let macro_ = macro_accuracy(&matrix, &v, &config).unwrap();
            let micro = micro_accuracy(&matrix, &v, &config).unwrap();
            ensure((macro_ - micro).abs() <= 1e-12, || format!("macro {macro_} != micro {micro}"))?;
        }
    }
    for family in [DatasetFamily::MmluPro, DatasetFamily::Math] {
        let matrix = random_matrix(&mut rng, family, 3);
        let base = consistency_rate(&matrix, &config).unwrap();
        for _ in 0..100 {
            let mut shuffled = matrix.clone();
            shuffled.sets.shuffle(&mut rng);
            for set in &mut shuffled.sets {
                set.predictions.shuffle(&mut rng);
            }
            let cr = consistency_rate(&shuffled, &config).unwrap();
            ensure((cr - base).abs() <= 1e-12, || format!("{family}: shuffled CR {cr} vs {base}"))?;
        }
    }
    for case in 0..100 {
        let family = if case % 2 == 0 { DatasetFamily::MmluPro } else { DatasetFamily::Math };
        let matrix = random_matrix(&mut rng, family, 3);
        let worse = substitute_failed(&matrix, &mut rng);
        let (cr, cr_worse) = (consistency_rate(&matrix, &config).unwrap(), consistency_rate(&worse, &config).unwrap());
        ensure(cr_worse <= cr + 1e-12, || format!("CR rose from {cr} to {cr_worse} after failures"))?;
        for v in matrix.variants() {
            let (a, b) = (accuracy(&matrix, &v, &config).unwrap(), accuracy(&worse, &v, &config).unwrap());
            ensure(b <= a + 1e-12, || format!("accuracy rose from {a} to {b} after failures"))?;
        }
        let mut scrambled = matrix.clone();
        for set in &mut scrambled.sets {
            set.gold = match family {
                DatasetFamily::Math => Gold::Math(MATH_POOL.choose(&mut rng).unwrap().to_string()),
                _ => Gold::Option(rng.gen_range(0..10)),
            };
        }
        let cr_scrambled = consistency_rate(&scrambled, &config).unwrap();
        ensure(cr_scrambled == cr, || format!("CR changed from {cr} to {cr_scrambled} with scrambled gold"))?;
    }
    Ok("macro = micro on 50 single-category matrices, 200 shuffles, 100 failure substitutions, 100 gold scrambles"
        .into())
}

fn criterion_7() -> Result<String, String> {
    let dir = tempfile::tempdir().unwrap();
    let family = DatasetFamily::MmluPro;
    let dataset = write_dataset(dir.path(), family, 6);
    let first = dir.path().join("first.jsonl");
    let second = dir.path().join("second.jsonl");
    mock_run(&dataset, family, &first);
    mock_run(&dataset, family, &second);
    let reference = untimed(&first);
    ensure(reference == untimed(&second), || "two full runs differ beyond timestamps".into())?;
    let expected = reference.len();
    let full_bytes = std::fs::read(&first).unwrap();
    let items = synthetic_items(family, 6);
    let plan = prepare_plan(&items, &Default::default()).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for kill in 0..50 {
        let store_path = dir.path().join(format!("kill{kill}.jsonl"));
        let how = if kill % 2 == 0 {
            let cut = rng.gen_range(0..full_bytes.len());
            std::fs::write(&store_path, &full_bytes[..cut]).unwrap();
            std::fs::copy(manifest_path(&first), manifest_path(&store_path)).unwrap();
            format!("truncated at byte {cut}")
        } else {
            let stop = rng.gen_range(0..expected);
            let mut request = mock_request(&dataset, family, &store_path);
            request.stop_after = Some(stop);
            let summary = execute_run(&request, &MockBackend::default()).map_err(|e| e.to_string())?.summary;
            ensure(summary.cancelled || stop == 0, || format!("kill {kill}: run was not interrupted"))?;
            format!("stopped after {stop}")
        };
        let resumed = mock_run(&dataset, family, &store_path);
        ensure(resumed.summary.failed == 0, || format!("kill {kill} ({how}): failures on resume"))?;
        let records = untimed(&store_path);
        ensure(records.len() == expected, || {
            format!("kill {kill} ({how}): {} records, want {expected}", records.len())
        })?;
        ensure(duplicate_keys(&records) == 0, || format!("kill {kill} ({how}): duplicate resume keys"))?;
        ensure(records == reference, || format!("kill {kill} ({how}): resumed store differs"))?;
    }

    let mut store = Store::open(&dir.path().join("direct.jsonl")).unwrap();
    let options = BatchOptions {
        model_name: "mock-model".into(),
        concurrency: 3,
        retry: RetryPolicy::no_delay(1),
        cancel: None,
        stop_after: None,
    };
    let summary = run_batch(&plan, &items, &MockBackend::default(), &mut store, &options).unwrap();
    ensure(summary.completed == expected, || "direct batch count differs".into())?;
    Ok(format!("identical reruns, 50 kill points resumed to {expected} records with no duplicates"))
}

fn criterion_8() -> Result<String, String> {
    let dir = tempfile::tempdir().unwrap();
    let mut reports = Vec::new();
    for family in [DatasetFamily::MmluPro, DatasetFamily::AgiEval, DatasetFamily::Math] {
        let dataset = write_dataset(dir.path(), family, 12);
        let out = dir.path().join(format!("{family}.store.jsonl"));
        mock_run(&dataset, family, &out);
        let request = ScoreRequest::new(&out, &dataset, family);
        let once = execute_score(&request).map_err(|e| e.to_string())?;
        let twice = execute_score(&request).map_err(|e| e.to_string())?;
        ensure(once.to_json() == twice.to_json(), || format!("{family}: re-scoring is not byte-identical"))?;
        let status = std::process::Command::new(env!("CARGO_BIN_EXE_score"))
            .args(["score", "--family", family.as_str()])
            .arg("--store")
            .arg(&out)
            .arg("--dataset")
            .arg(&dataset)
            .output()
            .unwrap();
        ensure(status.status.success(), || String::from_utf8_lossy(&status.stderr).into_owned())?;
        ensure(status.stdout == once.to_json().into_bytes(), || format!("{family}: CLI report differs"))?;
        reports.push(once);
    }
    let table = render_table(&reports).map_err(|e| e.to_string())?;
    let row = regex::Regex::new(r"(\d{1,3}\.\d) \[(\d{1,3}\.\d), (\d{1,3}\.\d)\]  (\d{1,3}\.\d)$").unwrap();
    let mut rows = 0;
    for line in table.lines().skip(1) {
        let caps = row.captures(line).ok_or_else(|| format!("row has the wrong shape: `{line}`"))?;
        let num = |i: usize| caps[i].parse::<f64>().unwrap();
        ensure(num(2) <= num(1) && num(1) <= num(3), || format!("min <= mean <= max violated: `{line}`"))?;
        rows += 1;
    }
    ensure(rows == 11, || format!("{rows} rows, want 11"))?;
    let sample = score::report::format_range_row(77.0, 74.7, 77.9, 86.1).unwrap();
    ensure(sample == "77.0 [74.7, 77.9]  86.1", || format!("sample row `{sample}`"))?;
    ensure(score::report::format_range_row(80.0, 81.0, 90.0, 50.0).is_err(), || "out-of-order range accepted".into())?;
    Ok(format!("{rows} rows in `Mean [Min, Max]  CR` shape, re-scoring byte-identical"))
}
