//! Questionnaire board: a line-oriented questionnaire language, response
//! validation, Likert scoring with reverse-coded items, and the renderable
//! form document handed to clients.

mod dsl;
mod form;
mod score;

pub use dsl::{parse_questionnaire, serialize_questionnaire, ParseError, ParseErrorKind};
pub use form::{emit_form_spec, FormItem, FormItemKind, FormSpec};
pub use score::{
    reverse_value, score_response, validate_response, Answer, IssueKind, ItemIssue, ResponseError,
    ResponseSet, ScoreError, ScoreReport,
};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaleDef {
    pub name: String,
    pub lo: i64,
    pub hi: i64,
    pub labels: Option<Vec<String>>,
}

impl ScaleDef {
    pub fn contains(&self, v: i64) -> bool {
        (self.lo..=self.hi).contains(&v)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", content = "scale", rename_all = "snake_case")]
pub enum ItemKind {
    Likert(String),
    Text,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemDef {
    pub id: String,
    pub prompt: String,
    pub kind: ItemKind,
    pub reverse: bool,
    pub required: bool,
}

impl ItemDef {
    pub fn is_likert(&self) -> bool {
        matches!(self.kind, ItemKind::Likert(_))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreMode {
    #[default]
    Mean,
    Sum,
}

/// A parsed questionnaire. Construct through [`parse_questionnaire`]; the
/// parser enforces every cross-reference invariant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionnaireDef {
    pub id: String,
    pub version: u32,
    /// Scales in declaration order; the first one is the default.
    pub scales: BTreeMap<String, ScaleDef>,
    pub scale_order: Vec<String>,
    pub items: Vec<ItemDef>,
    pub score_mode: ScoreMode,
}

impl QuestionnaireDef {
    pub fn item(&self, id: &str) -> Option<&ItemDef> {
        self.items.iter().find(|i| i.id == id)
    }

    pub fn scale_of(&self, item: &ItemDef) -> Option<&ScaleDef> {
        match &item.kind {
            ItemKind::Likert(s) => self.scales.get(s),
            ItemKind::Text => None,
        }
    }

    pub fn reverse_items(&self) -> impl Iterator<Item = &ItemDef> {
        self.items.iter().filter(|i| i.reverse)
    }
}
