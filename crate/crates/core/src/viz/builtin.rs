use serde_json::json;

use super::{
    aggregate_daily, downsample_buckets, enum_of, histogram, DailyStat, DownsampleMode, ParamSpec,
    ParamType, ParamValue, Params, PluginDescriptor, Registry, SeriesPoint, StreamBody,
    TablePayload, VizError,
};
use crate::model::TimeSeries;

const MAX_TZ_OFFSET_MINUTES: i64 = 14 * 60;

fn timeseries_line(ts: &TimeSeries, p: &Params) -> Result<StreamBody, VizError> {
    let max_points = p.int("max_points").unwrap_or(1000);
    if max_points < 1 {
        return Err(VizError::bad("max_points", "must be at least 1"));
    }
    let mode = match p.str("mode") {
        Some("minmax") => DownsampleMode::Minmax,
        _ => DownsampleMode::Mean,
    };
    Ok(StreamBody::Series {
        points: downsample_buckets(&ts.points, max_points as usize, mode),
    })
}

fn daily(ts: &TimeSeries, p: &Params) -> Result<StreamBody, VizError> {
    let stat = match p.str("stat") {
        Some("min") => DailyStat::Min,
        Some("max") => DailyStat::Max,
        Some("count") => DailyStat::Count,
        _ => DailyStat::Mean,
    };
    let offset = p.int("tz_offset_minutes").unwrap_or(0);
    if offset.abs() > MAX_TZ_OFFSET_MINUTES {
        return Err(VizError::bad("tz_offset_minutes", "must be within ±840"));
    }
    Ok(StreamBody::Series {
        points: aggregate_daily(&ts.points, stat, offset as i32)
            .into_iter()
            .map(|(t, y)| SeriesPoint::Value(t as f64, y))
            .collect(),
    })
}

fn hist(ts: &TimeSeries, p: &Params) -> Result<StreamBody, VizError> {
    let bins = p.int("bins").unwrap_or(20);
    if !(1..=10_000).contains(&bins) {
        return Err(VizError::bad("bins", "must be within 1..=10000"));
    }
    let values: Vec<f64> = ts.points.iter().map(|p| p.1).collect();
    let data_lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let data_hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (mut lo, mut hi) = match (p.float("lo"), p.float("hi")) {
        (Some(lo), Some(hi)) => (lo, hi),
        (lo, hi) if values.is_empty() => (lo.unwrap_or(0.0), hi.unwrap_or(1.0)),
        (lo, hi) => (lo.unwrap_or(data_lo), hi.unwrap_or(data_hi)),
    };
    if lo == hi && p.float("lo").is_none() && p.float("hi").is_none() {
        // constant series: centre a unit-wide range on it
        lo -= 0.5;
        hi += 0.5;
    }
    if lo.partial_cmp(&hi) != Some(std::cmp::Ordering::Less) {
        return Err(VizError::bad("hi", "histogram range needs lo < hi"));
    }
    Ok(StreamBody::Histogram(histogram(&values, bins as usize, lo, hi)))
}

fn sheet(ts: &TimeSeries, p: &Params) -> Result<StreamBody, VizError> {
    let limit = p.int("limit").unwrap_or(10_000);
    if limit < 0 {
        return Err(VizError::bad("limit", "must not be negative"));
    }
    Ok(StreamBody::Table(TablePayload {
        columns: vec!["t_ms".into(), "value".into()],
        rows: ts
            .points
            .iter()
            .take(limit as usize)
            .map(|&(t, v)| vec![json!(t), json!(v)])
            .collect(),
    }))
}

/// Registry preloaded with `daily_aggregate`, `histogram`, `sheet` and
/// `timeseries_line`.
pub fn builtin_registry() -> Registry {
    let mut reg = Registry::new();
    reg.register_plugin(
        PluginDescriptor::new(
            "timeseries_line",
            "Time series line",
            "Raw readings over the selected window as a line chart. Long windows are reduced to \
             at most `max_points` equal-count buckets, either averaged or as a min/max band.",
        )
        .param(ParamSpec::optional("max_points", ParamType::Int, Some(ParamValue::Int(1000))))
        .param(ParamSpec::optional(
            "mode",
            enum_of(&["mean", "minmax"]),
            Some(ParamValue::Str("mean".into())),
        )),
        timeseries_line,
    )
    .expect("built-in ids are unique");
    reg.register_plugin(
        PluginDescriptor::new(
            "daily_aggregate",
            "Daily summary",
            "One point per calendar day (at the given UTC offset) with the mean, minimum, \
             maximum or number of readings that day.",
        )
        .param(ParamSpec::optional(
            "stat",
            enum_of(&["mean", "min", "max", "count"]),
            Some(ParamValue::Str("mean".into())),
        ))
        .param(ParamSpec::optional("tz_offset_minutes", ParamType::Int, Some(ParamValue::Int(0)))),
        daily,
    )
    .expect("built-in ids are unique");
    reg.register_plugin(
        PluginDescriptor::new(
            "histogram",
            "Value distribution",
            "Equal-width histogram of the readings in the window. The range defaults to the \
             data extent; readings outside an explicit range are counted as dropped.",
        )
        .param(ParamSpec::optional("bins", ParamType::Int, Some(ParamValue::Int(20))))
        .param(ParamSpec::optional("lo", ParamType::Float, None))
        .param(ParamSpec::optional("hi", ParamType::Float, None)),
        hist,
    )
    .expect("built-in ids are unique");
    reg.register_plugin(
        PluginDescriptor::new(
            "sheet",
            "Sheet",
            "The readings in the window as a table of (t_ms, value) rows.",
        )
        .param(ParamSpec::optional("limit", ParamType::Int, Some(ParamValue::Int(10_000)))),
        sheet,
    )
    .expect("built-in ids are unique");
    reg
}
