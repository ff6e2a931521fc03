use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::{ItemKind, QuestionnaireDef, ScaleDef, ScoreMode};
use crate::model::SubjectId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("value {value} outside scale range {lo}..{hi}")]
pub struct OutOfRange {
    pub value: i64,
    pub lo: i64,
    pub hi: i64,
}

/// Mirrors a Likert value inside its scale: `lo + hi - v`.
pub fn reverse_value(scale: &ScaleDef, v: i64) -> Result<i64, OutOfRange> {
    if !scale.contains(v) {
        return Err(OutOfRange {
            value: v,
            lo: scale.lo,
            hi: scale.hi,
        });
    }
    Ok(scale.lo + scale.hi - v)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Answer {
    Likert(i64),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseSet {
    pub questionnaire_id: String,
    pub version: u32,
    pub subject: SubjectId,
    pub answered_at: i64,
    pub answers: BTreeMap<String, Answer>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueKind {
    MissingRequired,
    OutOfRange,
    UnknownItem,
    TypeMismatch,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemIssue {
    pub item: String,
    pub reason: IssueKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize)]
pub struct ResponseError {
    pub issues: Vec<ItemIssue>,
}

impl fmt::Display for ResponseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid response:")?;
        for i in &self.issues {
            write!(f, " {}={:?}", i.item, i.reason)?;
        }
        Ok(())
    }
}

impl ResponseError {
    pub fn has(&self, item: &str, reason: IssueKind) -> bool {
        self.issues
            .iter()
            .any(|i| i.item == item && i.reason == reason)
    }
}

/// Checks raw JSON answers against a definition. Collects every problem
/// instead of stopping at the first one.
pub fn validate_response(
    def: &QuestionnaireDef,
    subject: SubjectId,
    answered_at: i64,
    raw: &BTreeMap<String, Value>,
) -> Result<ResponseSet, ResponseError> {
    let mut issues = Vec::new();
    let mut answers = BTreeMap::new();

    for (id, value) in raw {
        let Some(item) = def.item(id) else {
            issues.push(ItemIssue {
                item: id.clone(),
                reason: IssueKind::UnknownItem,
            });
            continue;
        };
        if value.is_null() {
            // explicit null counts as unanswered
            continue;
        }
        match (&item.kind, value) {
            (ItemKind::Likert(scale), Value::Number(n)) => match n.as_i64() {
                Some(v) if def.scales[scale].contains(v) => {
                    answers.insert(id.clone(), Answer::Likert(v));
                }
                Some(_) => issues.push(ItemIssue {
                    item: id.clone(),
                    reason: IssueKind::OutOfRange,
                }),
                None => issues.push(ItemIssue {
                    item: id.clone(),
                    reason: IssueKind::TypeMismatch,
                }),
            },
            (ItemKind::Text, Value::String(s)) => {
                answers.insert(id.clone(), Answer::Text(s.clone()));
            }
            _ => issues.push(ItemIssue {
                item: id.clone(),
                reason: IssueKind::TypeMismatch,
            }),
        }
    }

    for item in &def.items {
        if item.required && !raw.get(&item.id).is_some_and(|v| !v.is_null()) {
            issues.push(ItemIssue {
                item: item.id.clone(),
                reason: IssueKind::MissingRequired,
            });
        }
    }

    if issues.is_empty() {
        Ok(ResponseSet {
            questionnaire_id: def.id.clone(),
            version: def.version,
            subject,
            answered_at,
            answers,
        })
    } else {
        Err(ResponseError { issues })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub total: f64,
    /// Applied value per scored item, after reversal.
    pub per_item: BTreeMap<String, i64>,
    pub n_scored: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScoreError {
    #[error("response has no scorable (likert) answers")]
    NoScorableItems,
    #[error("response belongs to {got}, not {expected}")]
    WrongQuestionnaire { expected: String, got: String },
    #[error(transparent)]
    OutOfRange(#[from] OutOfRange),
    #[error("answer to `{0}` does not match the item type")]
    TypeMismatch(String),
}

/// Scores a validated response. Text items and unanswered optional items
/// are left out of both the total and the denominator.
pub fn score_response(def: &QuestionnaireDef, rs: &ResponseSet) -> Result<ScoreReport, ScoreError> {
    if rs.questionnaire_id != def.id || rs.version != def.version {
        return Err(ScoreError::WrongQuestionnaire {
            expected: format!("{} v{}", def.id, def.version),
            got: format!("{} v{}", rs.questionnaire_id, rs.version),
        });
    }
    let mut per_item = BTreeMap::new();
    for item in &def.items {
        let ItemKind::Likert(scale) = &item.kind else {
            continue;
        };
        let v = match rs.answers.get(&item.id) {
            None => continue,
            Some(Answer::Likert(v)) => *v,
            Some(Answer::Text(_)) => return Err(ScoreError::TypeMismatch(item.id.clone())),
        };
        let scale = &def.scales[scale];
        let applied = if item.reverse {
            reverse_value(scale, v)?
        } else if scale.contains(v) {
            v
        } else {
            return Err(OutOfRange {
                value: v,
                lo: scale.lo,
                hi: scale.hi,
            }
            .into());
        };
        per_item.insert(item.id.clone(), applied);
    }
    if per_item.is_empty() {
        return Err(ScoreError::NoScorableItems);
    }
    let n = per_item.len();
    let sum: i64 = per_item.values().sum();
    let total = match def.score_mode {
        ScoreMode::Sum => sum as f64,
        ScoreMode::Mean => sum as f64 / n as f64,
    };
    Ok(ScoreReport {
        total,
        per_item,
        n_scored: n,
    })
}
