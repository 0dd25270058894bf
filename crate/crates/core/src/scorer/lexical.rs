//! Deterministic offline oracle built on token-set Jaccard similarity.

use std::collections::BTreeSet;

use crate::error::OracleError;
use crate::super_relations::jaccard;

use super::{Decision, Oracle, Reply, ScoreRequest, StepContext};

const STOPWORDS: &[&str] = &[
    "a", "about", "an", "and", "are", "as", "at", "be", "been", "but", "by", "can", "did", "do", "does",
    "for", "from", "had", "has", "have", "how", "i", "if", "in", "into", "is", "it", "its", "me", "my",
    "not", "of", "on", "or", "s", "so", "than", "that", "the", "their", "them", "then", "there", "these",
    "they", "this", "those", "to", "was", "were", "what", "when", "where", "which", "while", "who", "whom",
    "whose", "why", "will", "with", "would", "you", "your",
];

/// Lowercased tokens split on every non-alphanumeric character.
pub fn tokens(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn question_tokens(question: &str) -> BTreeSet<String> {
    let mut set = tokens(question);
    set.retain(|t| !STOPWORDS.contains(&t.as_str()));
    set
}

pub fn lexical_score(question: &str, label: &str) -> f64 {
    jaccard(&question_tokens(question), &tokens(label))
}

/// Entity labels by score descending, then label ascending.
pub fn lexical_rank(question: &str, labels: &[String]) -> Vec<(String, f64)> {
    let q = question_tokens(question);
    let mut ranked: Vec<(String, f64)> = labels
        .iter()
        .map(|l| (l.clone(), jaccard(&q, &tokens(l))))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.dedup_by(|a, b| a.0 == b.0);
    ranked
}

pub fn lexical_decide(question: &str, entities: &[String], threshold: f64) -> Decision {
    let best = entities
        .iter()
        .map(|e| lexical_score(question, e))
        .fold(f64::NEG_INFINITY, f64::max);
    if best >= threshold {
        Decision::Answer
    } else {
        Decision::Continue
    }
}

pub fn lexical_answer(question: &str, entities: &[String]) -> Vec<String> {
    lexical_rank(question, entities)
        .into_iter()
        .map(|(l, _)| l)
        .collect()
}

#[derive(Clone, Debug)]
pub struct LexicalOracle {
    pub threshold: f64,
}

impl Default for LexicalOracle {
    fn default() -> Self {
        LexicalOracle { threshold: 0.5 }
    }
}

impl Oracle for LexicalOracle {
    fn score(&self, req: &ScoreRequest<'_>) -> Result<Reply<Vec<f64>>, OracleError> {
        let q = question_tokens(req.question);
        Ok(Reply::direct(
            req.candidates.iter().map(|c| jaccard(&q, &tokens(c))).collect(),
        ))
    }

    fn decide(&self, ctx: &StepContext<'_>) -> Result<Reply<Decision>, OracleError> {
        Ok(Reply::direct(lexical_decide(
            ctx.question,
            ctx.entities,
            self.threshold,
        )))
    }

    fn answer(&self, ctx: &StepContext<'_>) -> Result<Reply<Vec<String>>, OracleError> {
        Ok(Reply::direct(lexical_answer(ctx.question, ctx.entities)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strings(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn score_examples() {
        assert_eq!(
            lexical_score("which video game developer", "video_game.developer"),
            1.0
        );
        assert_eq!(lexical_score("capital city", "music.album"), 0.0);
        assert_eq!(lexical_score("paris", "paris"), 1.0);
        // stopwords only count on the question side
        assert_eq!(lexical_score("the developer", "developer_of"), 0.5);
    }

    #[test]
    fn decide_and_answer() {
        let ents = strings(&["paris", "lyon"]);
        // {capital, paris, france} vs {paris}: 1/3, below the 0.5 threshold
        assert_eq!(
            lexical_decide("capital paris france", &ents, 0.5),
            Decision::Continue
        );
        assert_eq!(
            lexical_decide("capital paris france", &ents, 0.3),
            Decision::Answer
        );
        assert_eq!(lexical_decide("paris", &ents, 0.5), Decision::Answer);
        assert_eq!(
            lexical_answer("capital paris france", &ents),
            strings(&["paris", "lyon"])
        );
    }

    #[test]
    fn empty_and_zero_cases() {
        assert_eq!(lexical_decide("anything", &[], 0.5), Decision::Continue);
        assert!(lexical_answer("anything", &[]).is_empty());
        let ents = strings(&["zeta", "alpha", "mid"]);
        assert_eq!(lexical_decide("nothing shared", &ents, 0.5), Decision::Continue);
        assert_eq!(
            lexical_answer("nothing shared", &ents),
            strings(&["alpha", "mid", "zeta"])
        );
    }

    #[test]
    fn oracle_scores_in_candidate_order() {
        let o = LexicalOracle::default();
        let cands = strings(&["music.album", "video_game.developer"]);
        let r = o
            .score(&ScoreRequest {
                question: "which video game developer",
                topic: &[],
                candidates: &cands,
                width: 1,
            })
            .unwrap();
        assert_eq!(r.value, vec![0.0, 1.0]);
        assert_eq!(r.retries, 0);
    }
}
