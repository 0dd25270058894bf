//! Prompt text for the three oracle calls and parsers for the replies.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::OracleError;

use super::{clamp_score, Decision};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptConfig {
    /// 1 or 3 worked demonstrations.
    pub few_shot_count: usize,
    /// Append the five-band relevance rubric.
    pub rubric_mode: bool,
}

impl Default for PromptConfig {
    fn default() -> Self {
        PromptConfig {
            few_shot_count: 3,
            rubric_mode: false,
        }
    }
}

pub const FORMAT_INSTRUCTION: &str = "Reply with one line per selected relation in the form `<relation> | <score>`, where <score> is a decimal between 0 and 1 rating how helpful the relation is for answering the question.";

pub const RUBRIC: &str = "Scoring criteria:
[0.8 – 1.0]: Highly Relevant - There is a strong logical connection between the relation and the query.
[0.6 – 0.8]: Strongly Related - The relation aligns well with the query and provides substantial relevant information, but it may lack some precision.
[0.4 – 0.6]: Moderately Related - The relation is partially relevant and may provide general background information or indirect support for the query.
[0.2 – 0.4]: Weakly Related - The relation has a tenuous connection to the query, providing limited or peripheral information.
[0.0 – 0.2]: Irrelevant - The relation is unrelated or only tangentially related to the query.";

struct Demo {
    question: &'static str,
    topic: &'static str,
    candidates: &'static str,
    reply: &'static str,
}

const DEMOS: [Demo; 3] = [
    Demo {
        question: "Which studio developed the game that won the 2015 Game of the Year award?",
        topic: "Game of the Year 2015",
        candidates: "award.award_category; award.award_honor; cvg.computer_videogame; common.topic",
        reply: "award.award_honor | 0.8\ncvg.computer_videogame | 0.7\naward.award_category | 0.3",
    },
    Demo {
        question: "What language is spoken in the country where the Eiffel Tower is located?",
        topic: "Eiffel Tower",
        candidates:
            "location.location; architecture.structure; travel.tourist_attraction; base.schemastaging",
        reply: "location.location | 0.9\ntravel.tourist_attraction | 0.3\narchitecture.structure | 0.2",
    },
    Demo {
        question: "Who directed the film that features the song My Heart Will Go On?",
        topic: "My Heart Will Go On",
        candidates: "music.composition; film.film_song; music.recording; award.award_nominated_work",
        reply: "film.film_song | 0.9\nmusic.composition | 0.5\nmusic.recording | 0.4",
    },
];

const SELECT_REPLY: &str = "Reply with the relations you selected from these candidate relations:";

fn count_word(n: usize) -> String {
    const WORDS: [&str; 10] = [
        "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
    ];
    match n {
        1..=10 => WORDS[n - 1].to_string(),
        _ => n.to_string(),
    }
}

fn join_or_none(items: &[String]) -> String {
    if items.is_empty() {
        "(none)".to_string()
    } else {
        items.join("; ")
    }
}

/// Relation-scoring prompt: instruction, output format, optional rubric,
/// demonstrations, then the slots for this question.
pub fn build_score_prompt(
    question: &str,
    topic: &[String],
    candidates: &[String],
    width: usize,
    cfg: &PromptConfig,
) -> String {
    let mut p = String::new();
    let _ = writeln!(
        p,
        "You need to select {} relations from the following candidate relations, which are the most helpful for answering the question.",
        count_word(width)
    );
    let _ = writeln!(p, "{FORMAT_INSTRUCTION}");
    if cfg.rubric_mode {
        let _ = writeln!(p, "{RUBRIC}");
    }
    for (i, demo) in DEMOS.iter().take(cfg.few_shot_count).enumerate() {
        let _ = write!(
            p,
            "\nExample {}:\nQuestion: {}\nTopic Entity: {}\nCandidate Relations: {}\n{SELECT_REPLY}\n{}\n",
            i + 1,
            demo.question,
            demo.topic,
            demo.candidates,
            demo.reply
        );
    }
    let _ = write!(
        p,
        "\nQuestion: {}\nTopic Entity: {}\nCandidate Relations: {}\n{SELECT_REPLY}\n",
        question,
        join_or_none(topic),
        join_or_none(candidates)
    );
    p
}

fn context_block(question: &str, paths: &[String], entities: &[String]) -> String {
    format!(
        "Question: {}\nReasoning Paths: {}\nRetrieved Entities: {}\n",
        question,
        join_or_none(paths),
        join_or_none(entities)
    )
}

pub fn build_decide_prompt(question: &str, paths: &[String], entities: &[String]) -> String {
    format!(
        "Given a question, the relation paths explored in a knowledge graph and the entities found at their ends, decide whether the retrieved entities are sufficient to answer the question.\n{}Reply with exactly one word: Yes if they are sufficient, No if the search should continue.\n",
        context_block(question, paths, entities)
    )
}

pub fn build_answer_prompt(question: &str, paths: &[String], entities: &[String]) -> String {
    format!(
        "Answer the question using the entities retrieved from the knowledge graph when they contain the answer; otherwise answer from your own knowledge.\n{}List the answers one per line, most likely first, with no extra text.\n",
        context_block(question, paths, entities)
    )
}

fn strip_list_marker(line: &str) -> &str {
    let line = line.trim();
    let line = line
        .strip_prefix("- ")
        .or_else(|| line.strip_prefix("* "))
        .unwrap_or(line);
    let digits = line.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits > 0 {
        let rest = &line[digits..];
        if let Some(r) = rest.strip_prefix(". ").or_else(|| rest.strip_prefix(") ")) {
            return r.trim();
        }
    }
    line.trim()
}

fn clean_label(s: &str) -> &str {
    s.trim()
        .trim_matches(|c| matches!(c, '`' | '"' | '\'' | '*' | '{' | '}'))
}

/// Reads `label | score` lines. Labels outside `candidates` are dropped;
/// a candidate named without a usable score gets 0.5, an unmentioned one 0.
pub fn parse_score_response(text: &str, candidates: &[String]) -> Result<Vec<f64>, OracleError> {
    let lowered: Vec<String> = candidates.iter().map(|c| c.trim().to_lowercase()).collect();
    let mut scores: Vec<Option<f64>> = vec![None; candidates.len()];
    let mut parsable = 0usize;
    for raw in text.lines() {
        let line = strip_list_marker(raw);
        if line.is_empty() {
            continue;
        }
        let (label, score) = match line.rsplit_once('|') {
            Some((l, s)) => (clean_label(l), s.trim().parse::<f64>().ok()),
            None => (clean_label(line), None),
        };
        let key = label.to_lowercase();
        let idx = lowered.iter().position(|c| *c == key);
        match (idx, score) {
            (_, Some(_)) | (Some(_), None) => parsable += 1,
            (None, None) => continue,
        }
        if let Some(i) = idx {
            let s = clamp_score(score.unwrap_or(0.5));
            scores[i] = Some(scores[i].map_or(s, |prev| prev.max(s)));
        }
    }
    if parsable == 0 {
        return Err(OracleError::Parse(format!(
            "no `relation | score` lines in {:?}",
            truncate(text, 120)
        )));
    }
    Ok(scores.into_iter().map(|s| s.unwrap_or(0.0)).collect())
}

pub fn parse_decision(text: &str) -> Result<Decision, OracleError> {
    let first = text
        .split(|c: char| !c.is_alphanumeric())
        .find(|w| !w.is_empty())
        .map(str::to_lowercase);
    match first.as_deref() {
        Some("yes") | Some("answer") | Some("sufficient") => Ok(Decision::Answer),
        Some("no") | Some("continue") => Ok(Decision::Continue),
        _ => Err(OracleError::Parse(format!(
            "expected Yes or No, got {:?}",
            truncate(text, 120)
        ))),
    }
}

pub fn parse_answers(text: &str) -> Result<Vec<String>, OracleError> {
    let answers: Vec<String> = text
        .lines()
        .map(strip_list_marker)
        .map(clean_label)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect();
    if answers.is_empty() {
        Err(OracleError::Parse("empty answer".into()))
    } else {
        Ok(answers)
    }
}

pub(crate) fn truncate(s: &str, max: usize) -> String {
    if s.chars().count() <= max {
        s.to_string()
    } else {
        let mut t: String = s.chars().take(max).collect();
        t.push('…');
        t
    }
}
