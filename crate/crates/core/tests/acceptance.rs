//! Acceptance checks. Runs as a plain binary (`harness = false`) and prints
//! one PASS/FAIL line per criterion; exits non-zero if any fails.

mod common;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::strategies::{fuzz_input, item_text};
use common::FilterOracle;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use selfqa_core::filter::{prune_batch, QAPair, RuleSet};
use selfqa_core::gateway::{BackendConfig, Gateway, MockBackend};
use selfqa_core::ingest::{linearize_record, StructuredRecord};
use selfqa_core::parser::{
    parse_combined, parse_qa_pair, parse_question_list, render_combined, render_qa_pair,
    render_question_list, ParserConfig,
};
use selfqa_core::pipeline::{Pipeline, PipelineConfig, PipelineError};
use selfqa_core::prompt::{build_answer_prompt, build_generation_prompt};
use selfqa_core::{Answer, Chunk, GenerationMode, KnowledgeRef, Question};

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn runner(cases: u32, seed: u8) -> TestRunner {
    let config = Config { cases, failure_persistence: None, ..Config::default() };
    TestRunner::new_with_rng(config, TestRng::from_seed(RngAlgorithm::ChaCha, &[seed; 32]))
}

fn dxm_chunk() -> Result<Chunk, String> {
    let record: StructuredRecord =
        serde_json::from_str(common::dxm_record_line()).map_err(|e| e.to_string())?;
    let unit = linearize_record(&record, None).map_err(|e| e.to_string())?;
    Ok(Chunk::whole("dxm", unit.text))
}

fn golden_linearization() -> Check {
    let text = dxm_chunk()?.text;
    ensure(text == common::DXM_LINEARIZED, || format!("got {text:?}"))?;
    Ok(format!("{} bytes", text.len()))
}

fn prompt_fidelity() -> Check {
    let golden = |name: &str| {
        std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name))
            .map_err(|e| format!("{name}: {e}"))
    };
    let chunk = dxm_chunk()?;
    let generation = build_generation_prompt(&chunk, 10).map_err(|e| e.to_string())?;
    ensure(generation.text == golden("instruction_generation_dxm.txt")?, || {
        "question generation prompt differs".into()
    })?;
    let question = Question {
        text: "When was DXM founded?".into(),
        ordinal: 1,
        knowledge_ref: KnowledgeRef::new("dxm", 0),
    };
    let answer = build_answer_prompt(&chunk, &question).map_err(|e| e.to_string())?;
    ensure(answer.text == golden("reading_comprehension_dxm.txt")?, || {
        "reading comprehension prompt differs".into()
    })?;
    Ok("2 templates byte-equal".into())
}

fn parser_round_trip() -> Check {
    let kref = KnowledgeRef::new("unit", 0);
    let mut runs = 0u32;

    runner(1000, 1)
        .run(&prop::collection::vec(item_text(), 1..12), |items| {
            let rendered =
                render_question_list(items.iter().enumerate().map(|(i, t)| (i as u32 + 1, t.as_str())));
            let out = parse_question_list(&rendered, &kref);
            prop_assert!(out.defects.is_empty());
            let again = render_question_list(out.values().map(|q| (q.ordinal, q.text.as_str())));
            prop_assert_eq!(again, rendered);
            Ok(())
        })
        .map_err(|e| format!("question list: {e}"))?;
    runs += 1000;

    runner(1000, 2)
        .run(&(item_text(), item_text()), |(q, a)| {
            let rendered = render_qa_pair(&q, &a);
            let question = Question { text: q.clone(), ordinal: 1, knowledge_ref: kref.clone() };
            let out = parse_qa_pair(&rendered, &question);
            prop_assert!(out.defects.is_empty());
            prop_assert_eq!(out.items.len(), 1);
            let (pq, pa) = &out.items[0].value;
            prop_assert_eq!(render_qa_pair(&pq.text, &pa.text), rendered);
            Ok(())
        })
        .map_err(|e| format!("qa block: {e}"))?;
    runs += 1000;

    runner(1000, 3)
        .run(&prop::collection::vec((item_text(), item_text()), 1..8), |items| {
            let rendered = render_combined(
                items.iter().enumerate().map(|(i, (q, a))| (i as u32 + 1, q.as_str(), a.as_str())),
            );
            let out = parse_combined(&rendered, &kref, false);
            prop_assert!(out.defects.is_empty());
            let again =
                render_combined(out.values().map(|(q, a)| (q.ordinal, q.text.as_str(), a.text.as_str())));
            prop_assert_eq!(again, rendered);
            Ok(())
        })
        .map_err(|e| format!("combined: {e}"))?;
    runs += 1000;

    let parser = ParserConfig::default();
    let question = Question { text: "What is it?".into(), ordinal: 1, knowledge_ref: kref.clone() };
    runner(10_000, 4)
        .run(&(fuzz_input(), any::<bool>()), |(input, truncated)| {
            prop_assert!(parser.question_list(&input, &kref, truncated).partitions(&input));
            prop_assert!(parser.combined(&input, &kref, truncated).partitions(&input));
            prop_assert!(parser.qa_pair(&input, &question, truncated).partitions(&input));
            Ok(())
        })
        .map_err(|e| format!("fuzz: {e}"))?;

    Ok(format!("{runs} round-trips, 10000 fuzz inputs"))
}

fn pair(ordinal: u32, question: &str, answer: &str) -> QAPair {
    let knowledge_ref = KnowledgeRef::new("fixture", ordinal as usize);
    QAPair::new(
        Question { text: question.into(), ordinal, knowledge_ref: knowledge_ref.clone() },
        Answer { text: answer.into(), question_ordinal: ordinal, knowledge_ref },
        GenerationMode::TwoStage,
        "mock",
    )
}

fn filter_soundness() -> Check {
    let rules = RuleSet::default();
    let oracle = FilterOracle::new();
    let cases = common::filter_cases();
    ensure(cases.len() == 200, || format!("fixture has {} cases", cases.len()))?;
    let mut disagreements = Vec::new();
    for (i, case) in cases.iter().enumerate() {
        let got = rules
            .check_rules(&pair(i as u32, &case.question, &case.answer))
            .rule_code
            .unwrap_or_else(|| "accept".into());
        if got != oracle.verdict(&case.question, &case.answer) || got != case.expected {
            disagreements.push(case.id.clone());
        }
    }
    ensure(disagreements.is_empty(), || format!("disagreements: {disagreements:?}"))?;
    Ok(format!("{} cases, 0 disagreements", cases.len()))
}

fn mock_config(out: &Path, mode: GenerationMode) -> PipelineConfig {
    PipelineConfig {
        mode,
        seed: 7,
        timestamps: false,
        max_chars: 300,
        overlap: 50,
        output: out.join("dataset.jsonl"),
        backend: BackendConfig { corruption_rate: 0.2, ..BackendConfig::mock(7) },
        ..PipelineConfig::default()
    }
}

fn read(path: &Path) -> Result<Vec<u8>, String> {
    std::fs::read(path).map_err(|e| format!("{}: {e}", path.display()))
}

fn run_outputs(config: PipelineConfig, corpus: &[PathBuf]) -> Result<(Vec<u8>, Vec<u8>), String> {
    let report_path = config.report_path();
    let outcome = selfqa_core::pipeline::run(config, corpus).map_err(|e| e.to_string())?;
    Ok((read(&outcome.dataset)?, read(&report_path)?))
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let corpus = vec![common::write_corpus(dir.path(), 20)];
    let mut outputs = Vec::new();
    for name in ["first", "second"] {
        let out = dir.path().join(name);
        std::fs::create_dir(&out).map_err(|e| e.to_string())?;
        outputs.push(run_outputs(mock_config(&out, GenerationMode::TwoStage), &corpus)?);
    }
    ensure(outputs[0].0 == outputs[1].0, || "datasets differ".into())?;
    ensure(outputs[0].1 == outputs[1].1, || "reports differ".into())?;
    let lines = outputs[0].0.iter().filter(|&&b| b == b'\n').count();
    ensure(lines > 0, || "empty dataset".into())?;
    Ok(format!("{lines} samples, identical twice"))
}

fn conservation() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let corpus = vec![common::write_corpus(dir.path(), 20)];
    let pipeline =
        Pipeline::new(mock_config(dir.path(), GenerationMode::TwoStage)).map_err(|e| e.to_string())?;
    let chunks = pipeline.prepare(&corpus).map_err(|e| e.to_string())?.chunks;

    let mut pairs = Vec::new();
    'outer: for round in 0.. {
        if round > 50 {
            return Err(format!("only {} pairs generated", pairs.len()));
        }
        for chunk in &chunks {
            let chunk = Chunk { unit_id: format!("{}#{round}", chunk.unit_id), ..chunk.clone() };
            let generated = pipeline.ask_questions(&chunk).map_err(|e| e.to_string())?;
            for question in generated.outcome.into_values() {
                let answered = pipeline.answer_question(&chunk, &question).map_err(|e| e.to_string())?;
                for (q, a) in answered.outcome.into_values() {
                    pairs.push(QAPair::new(q, a, GenerationMode::TwoStage, "mock"));
                    if pairs.len() == 1000 {
                        break 'outer;
                    }
                }
            }
        }
    }

    let rules = pipeline.rules();
    let first = prune_batch(&pairs, rules);
    let (kept, rejected) = (first.kept.len(), first.rejected.len());
    ensure(kept + rejected == 1000, || format!("{kept} kept + {rejected} rejected"))?;
    ensure(rejected > 0, || "corruption produced no rejections".into())?;
    let again: Vec<QAPair> = first
        .kept
        .iter()
        .enumerate()
        .map(|(i, s)| QAPair::from_sample(s, i as u32 + 1))
        .collect();
    let second = prune_batch(&again, rules);
    ensure(second.rejected.is_empty(), || format!("re-prune rejected {}", second.rejected.len()))?;
    Ok(format!("{kept} kept + {rejected} rejected = 1000, re-prune rejected 0"))
}

fn mode_cost() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let corpus = vec![common::write_corpus(dir.path(), 10)];
    let mut summary = Vec::new();
    for mode in [GenerationMode::TwoStage, GenerationMode::SingleStage] {
        let out = dir.path().join(mode.as_str());
        std::fs::create_dir(&out).map_err(|e| e.to_string())?;
        let config = PipelineConfig { n_questions: 10, ..mock_config(&out, mode) };
        let mock = Arc::new(MockBackend::new(config.seed, config.backend.corruption_rate).capturing());
        let gateway = Gateway::with_backend(mock.clone(), &config.backend).map_err(|e| e.to_string())?;
        let pipeline = Pipeline::with_gateway(config, gateway).map_err(|e| e.to_string())?;
        let report = pipeline.run(&corpus).map_err(|e| e.to_string())?.report;
        let chunks = report.chunks_produced as u64;
        ensure(report.chunks_skipped == 0, || "chunks were skipped".into())?;

        // requests per chunk, keyed by the chunk reference that prefixes each tag
        let mut per_chunk: BTreeMap<String, (u64, u64)> = BTreeMap::new();
        for request in mock.captured() {
            let tag = &request.request_tag;
            let (chunk, is_answer) = if let Some(i) = tag.rfind("/answer/") {
                (&tag[..i], true)
            } else if let Some(chunk) =
                tag.strip_suffix("/questions").or_else(|| tag.strip_suffix("/combined"))
            {
                (chunk, false)
            } else {
                return Err(format!("unexpected request tag {tag:?}"));
            };
            let entry = per_chunk.entry(chunk.to_string()).or_default();
            if is_answer {
                entry.1 += 1;
            } else {
                entry.0 += 1;
            }
        }
        ensure(per_chunk.len() as u64 == chunks, || format!("{} chunks requested of {chunks}", per_chunk.len()))?;
        ensure(per_chunk.values().all(|&(first, _)| first == 1), || {
            "a chunk had more than one generation request".into()
        })?;
        let answers: u64 = per_chunk.values().map(|&(_, a)| a).sum();
        match mode {
            GenerationMode::TwoStage => {
                ensure(answers == report.questions_accepted, || {
                    format!("{answers} answer requests, {} accepted questions", report.questions_accepted)
                })?;
                ensure(report.requests_issued == chunks + report.questions_accepted, || {
                    format!("requests_issued {}", report.requests_issued)
                })?;
            }
            GenerationMode::SingleStage => {
                ensure(answers == 0, || "answer requests in single-stage".into())?;
                ensure(report.requests_issued == chunks, || {
                    format!("requests_issued {} for {chunks} chunks", report.requests_issued)
                })?;
            }
        }
        summary.push(format!("{}: {} requests / {chunks} chunks", mode.as_str(), report.requests_issued));
    }
    Ok(summary.join(", "))
}

fn interrupt_resume() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let corpus = vec![common::write_corpus(dir.path(), 20)];

    let full_dir = dir.path().join("full");
    std::fs::create_dir(&full_dir).map_err(|e| e.to_string())?;
    let full = run_outputs(mock_config(&full_dir, GenerationMode::TwoStage), &corpus)?;

    let cut_dir = dir.path().join("cut");
    std::fs::create_dir(&cut_dir).map_err(|e| e.to_string())?;
    let config = mock_config(&cut_dir, GenerationMode::TwoStage);
    let total = Pipeline::new(config.clone())
        .and_then(|p| p.prepare(&corpus))
        .map_err(|e| e.to_string())?
        .chunks
        .len();
    let halted = PipelineConfig { halt_after: Some(total / 2), ..config.clone() };
    match selfqa_core::pipeline::run(halted, &corpus) {
        Err(PipelineError::Interrupted { completed, .. }) if completed < total => {}
        other => return Err(format!("expected an interrupted run, got {other:?}")),
    }
    ensure(!config.output.exists(), || "interrupted run wrote a dataset".into())?;
    let report_path = config.report_path();
    let resumed = selfqa_core::pipeline::resume(config).map_err(|e| e.to_string())?;
    ensure(resumed.chunks_resumed > 0, || "nothing was resumed".into())?;
    ensure(read(&resumed.dataset)? == full.0, || "datasets differ".into())?;
    ensure(read(&report_path)? == full.1, || "reports differ".into())?;
    Ok(format!("halted at {}/{total} chunks, resumed {}", total / 2, resumed.chunks_resumed))
}

fn main() {
    let criteria: [(&str, Duration, fn() -> Check); 8] = [
        ("1 golden linearization", Duration::from_secs(1), golden_linearization),
        ("2 prompt fidelity", Duration::from_secs(1), prompt_fidelity),
        ("3 parser round-trip and fuzz", Duration::from_secs(30), parser_round_trip),
        ("4 filter soundness", Duration::from_secs(5), filter_soundness),
        ("5 end-to-end determinism", Duration::from_secs(60), determinism),
        ("6 conservation and idempotence", Duration::from_secs(10), conservation),
        ("7 request counts per mode", Duration::from_secs(30), mode_cost),
        ("8 interrupt and resume", Duration::from_secs(60), interrupt_resume),
    ];
    let mut failed = 0;
    for (name, budget, check) in criteria {
        let start = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let result = result.and_then(|detail| {
            if elapsed <= budget {
                Ok(detail)
            } else {
                Err(format!("{detail}; over budget of {budget:?}"))
            }
        });
        match result {
            Ok(detail) => println!("PASS  {name} ({elapsed:.2?}): {detail}"),
            Err(reason) => {
                failed += 1;
                println!("FAIL  {name} ({elapsed:.2?}): {reason}");
            }
        }
    }
    println!("{} passed, {failed} failed", 8 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
