use serde::{Deserialize, Serialize};

use super::{ItemKind, QuestionnaireDef};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormItemKind {
    Likert,
    Text,
}

/// One rendered control. Scoring direction is deliberately absent.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormItem {
    pub id: String,
    pub prompt: String,
    pub kind: FormItemKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
    pub required: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormSpec {
    pub questionnaire_id: String,
    pub version: u32,
    pub items: Vec<FormItem>,
}

pub fn emit_form_spec(def: &QuestionnaireDef) -> FormSpec {
    let items = def
        .items
        .iter()
        .map(|item| match &item.kind {
            ItemKind::Likert(scale) => {
                let s = &def.scales[scale];
                FormItem {
                    id: item.id.clone(),
                    prompt: item.prompt.clone(),
                    kind: FormItemKind::Likert,
                    min: Some(s.lo),
                    max: Some(s.hi),
                    labels: s.labels.clone(),
                    required: item.required,
                }
            }
            ItemKind::Text => FormItem {
                id: item.id.clone(),
                prompt: item.prompt.clone(),
                kind: FormItemKind::Text,
                min: None,
                max: None,
                labels: None,
                required: item.required,
            },
        })
        .collect();
    FormSpec {
        questionnaire_id: def.id.clone(),
        version: def.version,
        items,
    }
}
