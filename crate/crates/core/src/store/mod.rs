//! Persistence: idempotent sample-batch ingestion into append-only segment
//! files, and JSON-lines record files whose PHI is sealed field by field.
//!
//! Data directory layout:
//!
//! ```text
//! <root>/series/<subject>/<channel>.seg   binary segments
//! <root>/ingest.journal                   committed "<seq_no> <device>" lines
//! <root>/subjects.jsonl                   subject records, PHI encrypted
//! <root>/questionnaires.jsonl             canonical questionnaire sources
//! <root>/responses.jsonl                  responses, free text encrypted
//! ```

pub mod crypto;
pub(crate) mod jsonl;
pub mod segment;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::model::{validate_sample, ChannelId, DeviceId, Sample, SubjectId, SubjectRecord, TimeSeries, ValidationError};
use crate::quest::{parse_questionnaire, serialize_questionnaire, Answer, QuestionnaireDef, ResponseSet};
pub use crypto::{decrypt_field, encrypt_field, CryptoError, EncryptedField, MasterKey};

pub const MAX_BATCH_SAMPLES: usize = 10_000;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("unknown subject `{0}`")]
    UnknownSubject(SubjectId),
    #[error("no data for channel `{1}` of subject `{0}`")]
    UnknownChannel(SubjectId, ChannelId),
    #[error("store is closed")]
    StoreClosed,
    #[error("batch has {0} samples; the limit is {MAX_BATCH_SAMPLES}")]
    BatchTooLarge(usize),
    #[error("batch has no samples")]
    EmptyBatch,
    #[error("subject `{0}` already exists")]
    DuplicateSubject(SubjectId),
    #[error("no master key configured")]
    MissingMasterKey,
    #[error("window start {0} is after end {1}")]
    InvalidWindow(i64, i64),
    #[error("questionnaire `{0}` version {1} already exists")]
    DuplicateQuestionnaire(String, u32),
    #[error("unknown questionnaire `{0}`")]
    UnknownQuestionnaire(String),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error("corrupt store: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = StoreError> = std::result::Result<T, E>;

fn nan_as_null<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_none()
    }
}

fn null_as_nan<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

/// One sample on the ingestion wire. JSON cannot carry NaN, so `null`
/// stands in for a non-finite reading and is rejected per sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireSample {
    pub channel: String,
    pub t_ms: i64,
    #[serde(serialize_with = "nan_as_null", deserialize_with = "null_as_nan")]
    pub value: f64,
}

impl From<Sample> for WireSample {
    fn from(s: Sample) -> Self {
        Self {
            channel: s.channel,
            t_ms: s.t_ms,
            value: s.value,
        }
    }
}

impl From<WireSample> for Sample {
    fn from(s: WireSample) -> Self {
        Sample::new(s.channel, s.t_ms, s.value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleBatch {
    #[serde(rename = "device_id")]
    pub device: DeviceId,
    #[serde(rename = "subject_id")]
    pub subject: SubjectId,
    pub seq_no: u64,
    pub samples: Vec<WireSample>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub index: usize,
    pub reason: ValidationError,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct IngestReceipt {
    pub accepted: usize,
    pub rejected: Vec<Rejection>,
    pub duplicate_batch: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StoredSubject {
    id: SubjectId,
    cohort: String,
    created_at: i64,
    phi: BTreeMap<String, EncryptedField>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum StoredAnswer {
    Likert(i64),
    Sealed(EncryptedField),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StoredResponse {
    seq: u64,
    questionnaire_id: String,
    version: u32,
    subject: SubjectId,
    respondent: String,
    answered_at: i64,
    answers: BTreeMap<String, StoredAnswer>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StoredQuestionnaire {
    source: String,
}

/// A response read back from the store, with free text decrypted.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecordedResponse {
    pub respondent: String,
    pub response: ResponseSet,
}

#[derive(Default)]
struct Ledger {
    committed: HashSet<(DeviceId, u64)>,
    in_flight: HashSet<(DeviceId, u64)>,
}

pub fn subject_phi_path(subject: &SubjectId, field: &str) -> String {
    format!("subject/{subject}/phi/{field}")
}

pub fn response_text_path(seq: u64, item: &str) -> String {
    format!("response/{seq}/{item}")
}

type SeriesKey = (SubjectId, ChannelId);

/// Handle to a data directory. Shareable across threads; writes to the same
/// segment are serialized internally, everything else is read-mostly.
pub struct Store {
    root: PathBuf,
    key: Option<MasterKey>,
    open: AtomicBool,
    touches: AtomicU64,
    ledger: Mutex<Ledger>,
    segment_locks: Mutex<HashMap<SeriesKey, Arc<Mutex<()>>>>,
    subjects: RwLock<BTreeMap<SubjectId, StoredSubject>>,
    questionnaires: RwLock<BTreeMap<String, BTreeMap<u32, QuestionnaireDef>>>,
    responses: RwLock<Vec<StoredResponse>>,
}

impl std::fmt::Debug for Store {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Store").field("root", &self.root).finish_non_exhaustive()
    }
}

fn corrupt(e: io::Error) -> StoreError {
    if e.kind() == io::ErrorKind::InvalidData {
        StoreError::Corrupt(e.to_string())
    } else {
        StoreError::Io(e)
    }
}

impl Store {
    /// Opens (creating if needed) a data directory. Without a master key the
    /// store still ingests and serves series, but PHI operations fail with
    /// `MissingMasterKey`.
    pub fn open(root: impl Into<PathBuf>, key: Option<MasterKey>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(root.join("series"))?;

        let mut ledger = Ledger::default();
        for (n, line) in jsonl::load_lines(&root.join("ingest.journal"))?.iter().enumerate() {
            let parsed = line
                .split_once(' ')
                .and_then(|(seq, dev)| Some((seq.parse::<u64>().ok()?, DeviceId::new(dev).ok()?)));
            match parsed {
                Some((seq, dev)) => {
                    ledger.committed.insert((dev, seq));
                }
                None => {
                    return Err(StoreError::Corrupt(format!(
                        "ingest.journal:{}: bad entry",
                        n + 1
                    )))
                }
            }
        }

        let subjects: Vec<StoredSubject> = jsonl::load(&root.join("subjects.jsonl")).map_err(corrupt)?;
        let subjects = subjects.into_iter().map(|s| (s.id.clone(), s)).collect();

        let mut questionnaires: BTreeMap<String, BTreeMap<u32, QuestionnaireDef>> = BTreeMap::new();
        let stored: Vec<StoredQuestionnaire> =
            jsonl::load(&root.join("questionnaires.jsonl")).map_err(corrupt)?;
        for q in stored {
            let def = parse_questionnaire(&q.source)
                .map_err(|e| StoreError::Corrupt(format!("questionnaires.jsonl: {e}")))?;
            questionnaires
                .entry(def.id.clone())
                .or_default()
                .insert(def.version, def);
        }

        let responses: Vec<StoredResponse> = jsonl::load(&root.join("responses.jsonl")).map_err(corrupt)?;

        Ok(Self {
            root,
            key,
            open: AtomicBool::new(true),
            touches: AtomicU64::new(0),
            ledger: Mutex::new(ledger),
            segment_locks: Mutex::new(HashMap::new()),
            subjects: RwLock::new(subjects),
            questionnaires: RwLock::new(questionnaires),
            responses: RwLock::new(responses),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn has_master_key(&self) -> bool {
        self.key.is_some()
    }

    /// Number of data operations attempted so far. Used by callers to prove
    /// that a code path never reached the store.
    pub fn touch_count(&self) -> u64 {
        self.touches.load(Ordering::SeqCst)
    }

    pub fn close(&self) {
        self.open.store(false, Ordering::SeqCst);
    }

    fn enter(&self) -> Result<()> {
        self.touches.fetch_add(1, Ordering::SeqCst);
        if self.open.load(Ordering::SeqCst) {
            Ok(())
        } else {
            Err(StoreError::StoreClosed)
        }
    }

    fn key(&self) -> Result<&MasterKey> {
        self.key.as_ref().ok_or(StoreError::MissingMasterKey)
    }

    fn segment_path(&self, subject: &SubjectId, channel: &ChannelId) -> PathBuf {
        self.root
            .join("series")
            .join(subject.as_str())
            .join(format!("{channel}.seg"))
    }

    fn segment_lock(&self, subject: &SubjectId, channel: &ChannelId) -> Arc<Mutex<()>> {
        self.segment_locks
            .lock()
            .unwrap()
            .entry((subject.clone(), channel.clone()))
            .or_default()
            .clone()
    }

    pub fn subject_exists(&self, id: &SubjectId) -> Result<bool> {
        self.enter()?;
        Ok(self.subjects.read().unwrap().contains_key(id))
    }

    /// Appends every valid sample of a batch to its segment. A batch whose
    /// (device, seq_no) was already committed is acknowledged without
    /// touching any file.
    pub fn ingest_batch(&self, batch: &SampleBatch) -> Result<IngestReceipt> {
        self.enter()?;
        if batch.samples.len() > MAX_BATCH_SAMPLES {
            return Err(StoreError::BatchTooLarge(batch.samples.len()));
        }
        if batch.samples.is_empty() {
            return Err(StoreError::EmptyBatch);
        }
        if !self.subjects.read().unwrap().contains_key(&batch.subject) {
            return Err(StoreError::UnknownSubject(batch.subject.clone()));
        }

        let key = (batch.device.clone(), batch.seq_no);
        {
            let mut ledger = self.ledger.lock().unwrap();
            if ledger.committed.contains(&key) || ledger.in_flight.contains(&key) {
                return Ok(IngestReceipt {
                    duplicate_batch: true,
                    ..Default::default()
                });
            }
            ledger.in_flight.insert(key.clone());
        }

        let result = self.write_batch(batch);
        let mut ledger = self.ledger.lock().unwrap();
        ledger.in_flight.remove(&key);
        let receipt = result?;
        jsonl::append_line(
            &self.root.join("ingest.journal"),
            &format!("{} {}", batch.seq_no, batch.device),
        )?;
        ledger.committed.insert(key);
        Ok(receipt)
    }

    fn write_batch(&self, batch: &SampleBatch) -> Result<IngestReceipt> {
        let mut receipt = IngestReceipt::default();
        let mut by_channel: BTreeMap<ChannelId, Vec<(i64, f64)>> = BTreeMap::new();
        for (index, s) in batch.samples.iter().enumerate() {
            match validate_sample(Sample::from(s.clone())) {
                Ok(s) => {
                    let ch = ChannelId::new(s.channel).expect("validated channel");
                    by_channel.entry(ch).or_default().push((s.t_ms, s.value));
                    receipt.accepted += 1;
                }
                Err(reason) => receipt.rejected.push(Rejection { index, reason }),
            }
        }
        if !by_channel.is_empty() {
            fs::create_dir_all(self.root.join("series").join(batch.subject.as_str()))?;
        }
        for (channel, records) in by_channel {
            let lock = self.segment_lock(&batch.subject, &channel);
            let _guard = lock.lock().unwrap();
            segment::append(&self.segment_path(&batch.subject, &channel), &records)?;
        }
        Ok(receipt)
    }

    /// Points with `t0 <= t < t1`, ascending, one per timestamp (the last
    /// written wins).
    pub fn query_series(
        &self,
        subject: &SubjectId,
        channel: &ChannelId,
        t0: i64,
        t1: i64,
    ) -> Result<TimeSeries> {
        self.enter()?;
        if t0 > t1 {
            return Err(StoreError::InvalidWindow(t0, t1));
        }
        if !self.subjects.read().unwrap().contains_key(subject) {
            return Err(StoreError::UnknownSubject(subject.clone()));
        }
        let records = match segment::read_all(&self.segment_path(subject, channel)) {
            Ok(r) => r,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Err(StoreError::UnknownChannel(subject.clone(), channel.clone()))
            }
            Err(e) => return Err(corrupt(e)),
        };
        let mut merged = BTreeMap::new();
        for (t, v) in records {
            if t0 <= t && t < t1 {
                merged.insert(t, v);
            }
        }
        Ok(TimeSeries {
            subject: subject.clone(),
            channel: channel.clone(),
            points: merged.into_iter().collect(),
        })
    }

    /// Channels with a segment on disk for this subject, sorted.
    pub fn channels(&self, subject: &SubjectId) -> Result<Vec<ChannelId>> {
        self.enter()?;
        if !self.subjects.read().unwrap().contains_key(subject) {
            return Err(StoreError::UnknownSubject(subject.clone()));
        }
        let dir = self.root.join("series").join(subject.as_str());
        let mut out = Vec::new();
        let entries = match fs::read_dir(&dir) {
            Ok(e) => e,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(out),
            Err(e) => return Err(e.into()),
        };
        for entry in entries {
            let name = entry?.file_name();
            if let Some(stem) = name.to_str().and_then(|n| n.strip_suffix(".seg")) {
                if let Ok(ch) = ChannelId::new(stem) {
                    out.push(ch);
                }
            }
        }
        out.sort();
        Ok(out)
    }

    pub fn put_subject(&self, rec: &SubjectRecord) -> Result<SubjectId> {
        self.enter()?;
        let key = self.key()?;
        let mut subjects = self.subjects.write().unwrap();
        if subjects.contains_key(&rec.id) {
            return Err(StoreError::DuplicateSubject(rec.id.clone()));
        }
        let phi = rec
            .phi
            .iter()
            .map(|(field, value)| {
                (
                    field.clone(),
                    encrypt_field(&subject_phi_path(&rec.id, field), value, key),
                )
            })
            .collect();
        let stored = StoredSubject {
            id: rec.id.clone(),
            cohort: rec.cohort.clone(),
            created_at: rec.created_at,
            phi,
        };
        jsonl::append(&self.root.join("subjects.jsonl"), &stored)?;
        subjects.insert(rec.id.clone(), stored);
        Ok(rec.id.clone())
    }

    pub fn get_subject(&self, id: &SubjectId) -> Result<SubjectRecord> {
        self.enter()?;
        let key = self.key()?;
        let subjects = self.subjects.read().unwrap();
        let stored = subjects
            .get(id)
            .ok_or_else(|| StoreError::UnknownSubject(id.clone()))?;
        let phi = stored
            .phi
            .iter()
            .map(|(field, ef)| Ok((field.clone(), decrypt_field(ef, &subject_phi_path(id, field), key)?)))
            .collect::<Result<_>>()?;
        Ok(SubjectRecord {
            id: stored.id.clone(),
            cohort: stored.cohort.clone(),
            phi,
            created_at: stored.created_at,
        })
    }

    /// Subject ids and cohorts only; no PHI is decrypted.
    pub fn list_subjects(&self) -> Result<Vec<(SubjectId, String)>> {
        self.enter()?;
        Ok(self
            .subjects
            .read()
            .unwrap()
            .values()
            .map(|s| (s.id.clone(), s.cohort.clone()))
            .collect())
    }

    pub fn put_questionnaire(&self, def: &QuestionnaireDef) -> Result<()> {
        self.enter()?;
        let mut qs = self.questionnaires.write().unwrap();
        if qs.get(&def.id).is_some_and(|v| v.contains_key(&def.version)) {
            return Err(StoreError::DuplicateQuestionnaire(def.id.clone(), def.version));
        }
        jsonl::append(
            &self.root.join("questionnaires.jsonl"),
            &StoredQuestionnaire {
                source: serialize_questionnaire(def),
            },
        )?;
        qs.entry(def.id.clone()).or_default().insert(def.version, def.clone());
        Ok(())
    }

    /// A specific version, or the latest when `version` is `None`.
    pub fn questionnaire(&self, id: &str, version: Option<u32>) -> Result<QuestionnaireDef> {
        self.enter()?;
        let qs = self.questionnaires.read().unwrap();
        let versions = qs
            .get(id)
            .ok_or_else(|| StoreError::UnknownQuestionnaire(id.to_string()))?;
        let def = match version {
            Some(v) => versions.get(&v),
            None => versions.values().next_back(),
        };
        def.cloned()
            .ok_or_else(|| StoreError::UnknownQuestionnaire(format!("{id} v{}", version.unwrap_or(0))))
    }

    /// Latest version of every questionnaire, sorted by id.
    pub fn list_questionnaires(&self) -> Result<Vec<QuestionnaireDef>> {
        self.enter()?;
        Ok(self
            .questionnaires
            .read()
            .unwrap()
            .values()
            .filter_map(|v| v.values().next_back().cloned())
            .collect())
    }

    /// Persists a validated response; free-text answers are sealed.
    pub fn put_response(&self, rs: &ResponseSet, respondent: &str) -> Result<u64> {
        self.enter()?;
        let has_text = rs.answers.values().any(|a| matches!(a, Answer::Text(_)));
        let key = if has_text { Some(self.key()?) } else { None };
        let mut responses = self.responses.write().unwrap();
        let seq = responses.last().map_or(0, |r| r.seq + 1);
        let answers = rs
            .answers
            .iter()
            .map(|(item, a)| {
                let stored = match a {
                    Answer::Likert(v) => StoredAnswer::Likert(*v),
                    Answer::Text(t) => StoredAnswer::Sealed(encrypt_field(
                        &response_text_path(seq, item),
                        t,
                        key.expect("key checked above"),
                    )),
                };
                (item.clone(), stored)
            })
            .collect();
        let stored = StoredResponse {
            seq,
            questionnaire_id: rs.questionnaire_id.clone(),
            version: rs.version,
            subject: rs.subject.clone(),
            respondent: respondent.to_string(),
            answered_at: rs.answered_at,
            answers,
        };
        jsonl::append(&self.root.join("responses.jsonl"), &stored)?;
        responses.push(stored);
        Ok(seq)
    }

    /// Responses to one questionnaire about one subject, oldest first.
    pub fn responses(&self, questionnaire_id: &str, subject: &SubjectId) -> Result<Vec<RecordedResponse>> {
        self.enter()?;
        let responses = self.responses.read().unwrap();
        responses
            .iter()
            .filter(|r| r.questionnaire_id == questionnaire_id && &r.subject == subject)
            .map(|r| {
                let answers = r
                    .answers
                    .iter()
                    .map(|(item, a)| {
                        let answer = match a {
                            StoredAnswer::Likert(v) => Answer::Likert(*v),
                            StoredAnswer::Sealed(ef) => Answer::Text(decrypt_field(
                                ef,
                                &response_text_path(r.seq, item),
                                self.key()?,
                            )?),
                        };
                        Ok((item.clone(), answer))
                    })
                    .collect::<Result<_>>()?;
                Ok(RecordedResponse {
                    respondent: r.respondent.clone(),
                    response: ResponseSet {
                        questionnaire_id: r.questionnaire_id.clone(),
                        version: r.version,
                        subject: r.subject.clone(),
                        answered_at: r.answered_at,
                        answers,
                    },
                })
            })
            .collect()
    }
}
