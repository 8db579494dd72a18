use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::classify::{class_label, tokenize, Lexicon};
use crate::error::{Error, Result};
use crate::gameplay::ArchiveRecord;
use crate::oracle::{Answer, QType};

/// Accuracy and count of one question class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TypeRow {
    pub accuracy: f64,
    pub count: usize,
}

/// Partition of `(class label, correct)` items into per-class accuracy rows.
pub fn per_type_accuracy<'a, I>(items: I) -> BTreeMap<String, TypeRow>
where
    I: IntoIterator<Item = (&'a str, bool)>,
{
    let mut tally: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for (label, correct) in items {
        let t = tally.entry(label.to_string()).or_default();
        t.0 += usize::from(correct);
        t.1 += 1;
    }
    tally
        .into_iter()
        .map(|(k, (c, n))| {
            (
                k,
                TypeRow {
                    accuracy: c as f64 / n as f64,
                    count: n,
                },
            )
        })
        .collect()
}

/// Manually annotated oracle answers: `question<TAB>correct` per line, with
/// `correct` one of `1`/`0`; blank lines and `#` comments are skipped.
pub fn parse_annotations(text: &str) -> Result<Vec<(String, bool)>> {
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim_end();
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (q, flag) = line.rsplit_once('\t').ok_or_else(|| {
            Error::Validation(format!("annotation line {} has no tab", k + 1))
        })?;
        let correct = match flag.trim() {
            "1" => true,
            "0" => false,
            other => {
                return Err(Error::Validation(format!(
                    "annotation line {}: expected 0 or 1, got `{other}`",
                    k + 1
                )))
            }
        };
        out.push((q.to_string(), correct));
    }
    Ok(out)
}

/// Per-class accuracy of annotated questions classified from their text.
pub fn annotation_table(lexicon: &Lexicon, annotations: &[(String, bool)]) -> BTreeMap<String, TypeRow> {
    let labels: Vec<(&'static str, bool)> = annotations
        .iter()
        .map(|(q, c)| {
            let (t, a) = lexicon.classify_text(q);
            (class_label(t, a), *c)
        })
        .collect();
    per_type_accuracy(labels.iter().map(|(l, c)| (*l, *c)))
}

/// Dialogue-quality statistics of a game archive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueStats {
    pub games: usize,
    pub turns: usize,
    /// Distinct tokens over all tokens of all question texts.
    pub lexical_diversity: f64,
    /// Mean number of distinct `(qtype, argument)` pairs per game.
    pub question_diversity: f64,
    /// Distinct `(qtype, argument)` pairs over all questions.
    pub distinct_question_ratio: f64,
    /// Fraction of games asking some `(qtype, argument)` pair twice.
    pub repeated_question_rate: f64,
    /// Of supercategory turns answered Yes, the fraction followed by an
    /// object or attribute question; 0 when there are none.
    pub supercat_to_object_attr_rate: f64,
    /// Of object turns answered Yes, the fraction followed by an object or
    /// attribute question; 0 when there are none.
    pub object_to_attr_rate: f64,
    pub location_turn_rate: f64,
    pub vocabulary_size: usize,
}

fn is_object_or_attribute(q: QType) -> bool {
    q == QType::Object || q.is_attribute() || q == QType::Location
}

pub fn dialogue_stats(archive: &[ArchiveRecord]) -> Result<DialogueStats> {
    if archive.is_empty() {
        return Err(Error::Validation("dialogue statistics need at least one game".into()));
    }
    let mut vocab = BTreeSet::new();
    let mut tokens = 0usize;
    let mut turns = 0usize;
    let mut distinct_all = BTreeSet::new();
    let mut per_game_distinct = 0usize;
    let mut repeated = 0usize;
    let (mut sup_yes, mut sup_next) = (0usize, 0usize);
    let (mut obj_yes, mut obj_next) = (0usize, 0usize);
    let mut location = 0usize;
    for game in archive {
        let mut seen = BTreeSet::new();
        let mut repeat = false;
        for (k, t) in game.turns.iter().enumerate() {
            for tok in tokenize(&t.text) {
                vocab.insert(tok);
                tokens += 1;
            }
            turns += 1;
            repeat |= !seen.insert((t.qtype, t.argument));
            distinct_all.insert((t.qtype, t.argument));
            location += usize::from(t.qtype == QType::Location);
            if t.answer == Answer::Yes {
                let next = game.turns.get(k + 1).map(|n| is_object_or_attribute(n.qtype));
                match t.qtype {
                    QType::Supercategory => {
                        sup_yes += 1;
                        sup_next += usize::from(next == Some(true));
                    }
                    QType::Object => {
                        obj_yes += 1;
                        obj_next += usize::from(next == Some(true));
                    }
                    _ => {}
                }
            }
        }
        per_game_distinct += seen.len();
        repeated += usize::from(repeat);
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    Ok(DialogueStats {
        games: archive.len(),
        turns,
        lexical_diversity: ratio(vocab.len(), tokens),
        question_diversity: per_game_distinct as f64 / archive.len() as f64,
        distinct_question_ratio: ratio(distinct_all.len(), turns),
        repeated_question_rate: ratio(repeated, archive.len()),
        supercat_to_object_attr_rate: ratio(sup_next, sup_yes),
        object_to_attr_rate: ratio(obj_next, obj_yes),
        location_turn_rate: ratio(location, turns),
        vocabulary_size: vocab.len(),
    })
}
