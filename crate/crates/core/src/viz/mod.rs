//! Visualization palette: a registry of plugins that turn a queried window
//! of one series into a chart-ready [`DataStream`], plus the portfolio
//! listing that advertises them.
//!
//! A plugin is a [`PluginDescriptor`] and a pure transform. The registry
//! owns parameter validation and the store query; the transform only sees
//! the resulting [`TimeSeries`] and its resolved parameters.

mod builtin;
mod transforms;

pub use builtin::builtin_registry;
pub use transforms::{
    aggregate_daily, downsample_buckets, histogram, DailyStat, DownsampleMode, Histogram,
    SeriesPoint,
};

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::model::{ChannelId, SubjectId, TimeSeries};
use crate::store::{Store, StoreError};

/// Parameters every plugin receives; they select the window to query.
pub const WINDOW_PARAMS: [&str; 4] = ["subject", "channel", "t0", "t1"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ParamType {
    String,
    Int,
    Float,
    Enum { choices: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Float(f64),
    Str(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub name: String,
    #[serde(flatten)]
    pub ty: ParamType,
    pub required: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub default: Option<ParamValue>,
}

impl ParamSpec {
    pub fn required(name: &str, ty: ParamType) -> Self {
        Self {
            name: name.into(),
            ty,
            required: true,
            default: None,
        }
    }

    pub fn optional(name: &str, ty: ParamType, default: Option<ParamValue>) -> Self {
        Self {
            name: name.into(),
            ty,
            required: false,
            default,
        }
    }

    fn parse(&self, raw: &str) -> Result<ParamValue, String> {
        match &self.ty {
            ParamType::String => Ok(ParamValue::Str(raw.to_string())),
            ParamType::Int => raw
                .trim()
                .parse()
                .map(ParamValue::Int)
                .map_err(|_| format!("expected an integer, got `{raw}`")),
            ParamType::Float => match raw.trim().parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(ParamValue::Float(v)),
                _ => Err(format!("expected a finite number, got `{raw}`")),
            },
            ParamType::Enum { choices } => {
                if choices.iter().any(|c| c == raw) {
                    Ok(ParamValue::Str(raw.to_string()))
                } else {
                    Err(format!("expected one of {}, got `{raw}`", choices.join("|")))
                }
            }
        }
    }
}

fn enum_of(choices: &[&str]) -> ParamType {
    ParamType::Enum {
        choices: choices.iter().map(|c| c.to_string()).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PluginDescriptor {
    pub id: String,
    pub name: String,
    pub description: String,
    pub param_schema: Vec<ParamSpec>,
}

impl PluginDescriptor {
    pub fn new(id: &str, name: &str, description: &str) -> Self {
        Self {
            id: id.into(),
            name: name.into(),
            description: description.into(),
            param_schema: Vec::new(),
        }
    }

    pub fn param(mut self, spec: ParamSpec) -> Self {
        self.param_schema.push(spec);
        self
    }
}

/// Resolved, typed parameters handed to a transform.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Params(BTreeMap<String, ParamValue>);

impl Params {
    pub fn get(&self, name: &str) -> Option<&ParamValue> {
        self.0.get(name)
    }

    pub fn int(&self, name: &str) -> Option<i64> {
        match self.0.get(name)? {
            ParamValue::Int(v) => Some(*v),
            _ => None,
        }
    }

    pub fn float(&self, name: &str) -> Option<f64> {
        match self.0.get(name)? {
            ParamValue::Float(v) => Some(*v),
            ParamValue::Int(v) => Some(*v as f64),
            _ => None,
        }
    }

    pub fn str(&self, name: &str) -> Option<&str> {
        match self.0.get(name)? {
            ParamValue::Str(s) => Some(s),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamIssue {
    pub param: String,
    pub message: String,
}

impl ParamIssue {
    pub fn new(param: &str, message: impl Into<String>) -> Self {
        Self {
            param: param.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum VizError {
    #[error("unknown plugin `{0}`")]
    UnknownPlugin(String),
    #[error("plugin id `{0}` is already registered")]
    DuplicatePluginId(String),
    #[error("invalid plugin descriptor: {0}")]
    InvalidDescriptor(String),
    #[error("bad parameters: {}", fmt_issues(.0))]
    BadParams(Vec<ParamIssue>),
    #[error(transparent)]
    Store(#[from] StoreError),
}

fn fmt_issues(issues: &[ParamIssue]) -> String {
    issues
        .iter()
        .map(|i| format!("{}: {}", i.param, i.message))
        .collect::<Vec<_>>()
        .join("; ")
}

impl VizError {
    pub fn bad(param: &str, message: impl Into<String>) -> Self {
        VizError::BadParams(vec![ParamIssue::new(param, message)])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TablePayload {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedSeries {
    pub name: String,
    pub points: Vec<SeriesPoint>,
}

/// Kind-tagged payload: `{"kind": "...", "payload": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum StreamBody {
    Series { points: Vec<SeriesPoint> },
    Multiseries { series: Vec<NamedSeries> },
    Table(TablePayload),
    Histogram(Histogram),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamMeta {
    pub plugin: String,
    pub subject: SubjectId,
    pub channel: ChannelId,
    pub t0: i64,
    pub t1: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataStream {
    #[serde(flatten)]
    pub body: StreamBody,
    pub meta: StreamMeta,
}

pub type Transform = Arc<dyn Fn(&TimeSeries, &Params) -> Result<StreamBody, VizError> + Send + Sync>;

#[derive(Clone)]
struct Plugin {
    descriptor: PluginDescriptor,
    transform: Transform,
}

/// Plugin registry. Populate at startup, then share read-only.
#[derive(Clone, Default)]
pub struct Registry {
    plugins: BTreeMap<String, Plugin>,
}

impl fmt::Debug for Registry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.plugins.keys()).finish()
    }
}

fn window_schema() -> Vec<ParamSpec> {
    vec![
        ParamSpec::required("subject", ParamType::String),
        ParamSpec::required("channel", ParamType::String),
        ParamSpec::required("t0", ParamType::Int),
        ParamSpec::required("t1", ParamType::Int),
    ]
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a plugin. The window parameters are prepended to its schema.
    pub fn register_plugin<F>(&mut self, d: PluginDescriptor, transform: F) -> Result<(), VizError>
    where
        F: Fn(&TimeSeries, &Params) -> Result<StreamBody, VizError> + Send + Sync + 'static,
    {
        if d.id.is_empty() {
            return Err(VizError::InvalidDescriptor("empty plugin id".into()));
        }
        if self.plugins.contains_key(&d.id) {
            return Err(VizError::DuplicatePluginId(d.id));
        }
        let mut names: Vec<&str> = WINDOW_PARAMS.to_vec();
        for p in &d.param_schema {
            if names.contains(&p.name.as_str()) {
                return Err(VizError::InvalidDescriptor(format!(
                    "parameter `{}` declared twice or shadows a window parameter",
                    p.name
                )));
            }
            names.push(&p.name);
            if p.required && p.default.is_some() {
                return Err(VizError::InvalidDescriptor(format!(
                    "required parameter `{}` must not have a default",
                    p.name
                )));
            }
            if let Some(def) = &p.default {
                let ok = matches!(
                    (&p.ty, def),
                    (ParamType::Int, ParamValue::Int(_))
                        | (ParamType::Float, ParamValue::Float(_))
                        | (ParamType::String, ParamValue::Str(_))
                ) || matches!((&p.ty, def), (ParamType::Enum { choices }, ParamValue::Str(s)) if choices.contains(s));
                if !ok {
                    return Err(VizError::InvalidDescriptor(format!(
                        "default for `{}` does not match its type",
                        p.name
                    )));
                }
            }
        }
        let mut descriptor = d;
        let mut schema = window_schema();
        schema.append(&mut descriptor.param_schema);
        descriptor.param_schema = schema;
        self.plugins.insert(
            descriptor.id.clone(),
            Plugin {
                descriptor,
                transform: Arc::new(transform),
            },
        );
        Ok(())
    }

    /// Every registered plugin, sorted by id.
    pub fn list_portfolio(&self) -> Vec<PluginDescriptor> {
        self.plugins.values().map(|p| p.descriptor.clone()).collect()
    }

    pub fn descriptor(&self, id: &str) -> Option<&PluginDescriptor> {
        self.plugins.get(id).map(|p| &p.descriptor)
    }

    /// Checks raw string parameters against a plugin's schema, collecting
    /// every problem.
    pub fn resolve_params(
        &self,
        plugin_id: &str,
        raw: &BTreeMap<String, String>,
    ) -> Result<Params, VizError> {
        let plugin = self
            .plugins
            .get(plugin_id)
            .ok_or_else(|| VizError::UnknownPlugin(plugin_id.to_string()))?;
        let schema = &plugin.descriptor.param_schema;
        let mut issues = Vec::new();
        let mut out = BTreeMap::new();
        for name in raw.keys() {
            if !schema.iter().any(|p| &p.name == name) {
                issues.push(ParamIssue::new(name, "unknown parameter"));
            }
        }
        for spec in schema {
            match raw.get(&spec.name) {
                Some(v) => match spec.parse(v) {
                    Ok(val) => {
                        out.insert(spec.name.clone(), val);
                    }
                    Err(msg) => issues.push(ParamIssue::new(&spec.name, msg)),
                },
                None if spec.required => issues.push(ParamIssue::new(&spec.name, "required")),
                None => {
                    if let Some(d) = &spec.default {
                        out.insert(spec.name.clone(), d.clone());
                    }
                }
            }
        }
        if issues.is_empty() {
            Ok(Params(out))
        } else {
            Err(VizError::BadParams(issues))
        }
    }

    /// Validates parameters, queries the requested window and runs the
    /// plugin's transform over it.
    pub fn build_data_stream(
        &self,
        plugin_id: &str,
        raw: &BTreeMap<String, String>,
        store: &Store,
    ) -> Result<DataStream, VizError> {
        let params = self.resolve_params(plugin_id, raw)?;
        let window = window_of(&params)?;
        let series = store.query_series(&window.subject, &window.channel, window.t0, window.t1)?;
        let body = (self.plugins[plugin_id].transform)(&series, &params)?;
        Ok(DataStream {
            body,
            meta: StreamMeta {
                plugin: plugin_id.to_string(),
                ..window
            },
        })
    }
}

fn window_of(params: &Params) -> Result<StreamMeta, VizError> {
    let mut issues = Vec::new();
    let subject = SubjectId::new(params.str("subject").unwrap_or_default())
        .map_err(|e| issues.push(ParamIssue::new("subject", e.to_string())))
        .ok();
    let channel = ChannelId::new(params.str("channel").unwrap_or_default())
        .map_err(|e| issues.push(ParamIssue::new("channel", e.to_string())))
        .ok();
    let t0 = params.int("t0").unwrap_or_default();
    let t1 = params.int("t1").unwrap_or_default();
    if t0 > t1 {
        issues.push(ParamIssue::new("t1", "window end precedes start"));
    }
    match (subject, channel) {
        (Some(subject), Some(channel)) if issues.is_empty() => Ok(StreamMeta {
            plugin: String::new(),
            subject,
            channel,
            t0,
            t1,
        }),
        _ => Err(VizError::BadParams(issues)),
    }
}
