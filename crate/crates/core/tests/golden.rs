use std::path::PathBuf;

use reknos::eval::results_csv;
use reknos::scorer::{build_score_prompt, LexicalOracle, PromptConfig};
use reknos::synthetic::{kg_a, kg_a_dataset};
use reknos::{run_batch, Engine, ReasonerConfig};

/// Compares against `tests/golden/<name>`, rewriting it when
/// `UPDATE_GOLDEN` is set.
fn check_golden(name: &str, actual: &str) {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, actual).unwrap();
    }
    let expected = std::fs::read_to_string(&path)
        .unwrap_or_else(|_| panic!("{} missing; rerun with UPDATE_GOLDEN=1", path.display()));
    assert_eq!(actual, expected, "{name} drifted");
}

#[test]
fn score_prompt_variants() {
    let candidates = [
        "film.director".to_string(),
        "film.film".to_string(),
        "common.topic".to_string(),
    ];
    for few_shot_count in [1, 3] {
        for rubric_mode in [false, true] {
            let prompt = build_score_prompt(
                "Who directed Titanic?",
                &["Titanic".to_string()],
                &candidates,
                2,
                &PromptConfig {
                    few_shot_count,
                    rubric_mode,
                },
            );
            assert!(prompt.contains("select two relations"));
            assert_eq!(prompt.matches("Example ").count(), few_shot_count);
            assert_eq!(prompt.contains("[0.8 – 1.0]"), rubric_mode);
            check_golden(
                &format!("prompt_fs{few_shot_count}_rubric{}.txt", rubric_mode as u8),
                &prompt,
            );
        }
    }
}

#[test]
fn fixture_results_table() {
    let g = kg_a();
    let oracle = LexicalOracle { threshold: 0.5 };
    let batch = run_batch(
        &g,
        &kg_a_dataset(),
        Engine::Reknos,
        &ReasonerConfig::default(),
        &oracle,
        1,
    )
    .unwrap();
    check_golden("kga_results.csv", &results_csv(&batch.records).unwrap());
    assert!(!batch.any_failed());
    assert_eq!(batch.report.retrieval_rate, 1.0);
}

#[test]
fn beam_spends_at_least_as_many_calls() {
    let g = kg_a();
    let oracle = LexicalOracle { threshold: 0.5 };
    let cfg = ReasonerConfig::default();
    let a = run_batch(&g, &kg_a_dataset(), Engine::Reknos, &cfg, &oracle, 1).unwrap();
    let b = run_batch(&g, &kg_a_dataset(), Engine::Beam, &cfg, &oracle, 1).unwrap();
    assert!(
        b.report.avg_calls >= a.report.avg_calls,
        "{} < {}",
        b.report.avg_calls,
        a.report.avg_calls
    );
}
