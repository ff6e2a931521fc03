//! Shared domain vocabulary: identifiers, samples, series and time helpers.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Exclusive upper bound for sample timestamps (2^53 ms).
pub const MAX_TIMESTAMP_MS: i64 = 1 << 53;

pub const MS_PER_DAY: i64 = 86_400_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IdError {
    #[error("identifier is empty")]
    Empty,
    #[error("identifier `{0}` contains characters outside [A-Za-z0-9_.-] or is too long")]
    BadCharacters(String),
    #[error("channel name `{0}` must match [a-z0-9_]{{1,64}}")]
    BadChannel(String),
}

fn check_opaque_id(s: &str) -> Result<(), IdError> {
    if s.is_empty() {
        return Err(IdError::Empty);
    }
    // Subject ids become directory names under the data directory.
    let ok = s.len() <= 128
        && s != "."
        && s != ".."
        && s
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'_' | b'-' | b'.'));
    if ok {
        Ok(())
    } else {
        Err(IdError::BadCharacters(s.to_string()))
    }
}

macro_rules! opaque_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(try_from = "String", into = "String")]
        pub struct $name(String);

        impl $name {
            pub fn new(s: impl Into<String>) -> Result<Self, IdError> {
                let s = s.into();
                check_opaque_id(&s)?;
                Ok(Self(s))
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl TryFrom<String> for $name {
            type Error = IdError;
            fn try_from(s: String) -> Result<Self, IdError> {
                Self::new(s)
            }
        }

        impl From<$name> for String {
            fn from(id: $name) -> String {
                id.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }
    };
}

opaque_id!(
    /// A monitored person.
    SubjectId
);
opaque_id!(
    /// A sensor device that pushes sample batches.
    DeviceId
);

/// A sensor channel name. Restricted to `[a-z0-9_]{1,64}` so it is always a
/// safe file-name component.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ChannelId(String);

impl ChannelId {
    pub fn new(s: impl Into<String>) -> Result<Self, IdError> {
        let s = s.into();
        if is_valid_channel(&s) {
            Ok(Self(s))
        } else {
            Err(IdError::BadChannel(s))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

pub fn is_valid_channel(s: &str) -> bool {
    (1..=64).contains(&s.len())
        && s
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_')
}

impl TryFrom<String> for ChannelId {
    type Error = IdError;
    fn try_from(s: String) -> Result<Self, IdError> {
        Self::new(s)
    }
}

impl From<ChannelId> for String {
    fn from(id: ChannelId) -> String {
        id.0
    }
}

impl fmt::Display for ChannelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A monitored person with plaintext PHI. The plaintext only ever lives in
/// memory; the store persists encrypted envelopes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub id: SubjectId,
    pub cohort: String,
    #[serde(default)]
    pub phi: BTreeMap<String, String>,
    pub created_at: i64,
}

/// A single device reading as it arrives on the wire. The channel is kept as
/// a raw string so bad names can be itemized per sample rather than failing
/// the whole batch at deserialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub channel: String,
    pub t_ms: i64,
    pub value: f64,
}

impl Sample {
    pub fn new(channel: impl Into<String>, t_ms: i64, value: f64) -> Self {
        Self {
            channel: channel.into(),
            t_ms,
            value,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidationError {
    #[error("value is not finite")]
    NonFiniteValue,
    #[error("timestamp outside [0, 2^53)")]
    TimestampOutOfRange,
    #[error("channel name must match [a-z0-9_]{{1,64}}")]
    BadChannelName,
}

/// Returns the sample unchanged iff it satisfies every sample invariant.
pub fn validate_sample(s: Sample) -> Result<Sample, ValidationError> {
    if !is_valid_channel(&s.channel) {
        return Err(ValidationError::BadChannelName);
    }
    if !(0..MAX_TIMESTAMP_MS).contains(&s.t_ms) {
        return Err(ValidationError::TimestampOutOfRange);
    }
    if !s.value.is_finite() {
        return Err(ValidationError::NonFiniteValue);
    }
    Ok(s)
}

/// Days since the epoch as observed at a fixed UTC offset.
pub fn day_bucket(t_ms: i64, tz_offset_minutes: i32) -> i64 {
    (t_ms + i64::from(tz_offset_minutes) * 60_000).div_euclid(MS_PER_DAY)
}

/// UTC epoch milliseconds at which the given local day starts.
pub fn day_start_ms(day_index: i64, tz_offset_minutes: i32) -> i64 {
    day_index * MS_PER_DAY - i64::from(tz_offset_minutes) * 60_000
}

/// A sorted run of points for one (subject, channel).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub subject: SubjectId,
    pub channel: ChannelId,
    pub points: Vec<(i64, f64)>,
}

impl TimeSeries {
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }
}
