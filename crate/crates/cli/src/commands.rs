use std::collections::{BTreeMap, HashMap};
use std::io::{self, BufRead, Write};
use std::path::Path;

use sierra_api::{compose_service, ServiceConfig};
use sierra_core::auth::{AuthService, Role, DEFAULT_SESSION_TTL_MS};
use sierra_core::ml::{
    confusion_matrix, init_mlp, metrics, parse_dataset_csv, predict, train, Activation, Prediction, Task,
    TrainConfig,
};
use sierra_core::model::{ChannelId, DeviceId, SubjectId, SubjectRecord};
use sierra_core::quest::parse_questionnaire;
use sierra_core::store::crypto::MASTER_KEY_ENV;
use sierra_core::store::{MasterKey, SampleBatch, Store, WireSample, MAX_BATCH_SAMPLES};

use crate::{
    ActivationArg, Cli, Command, ExportArgs, Failure, IngestArgs, QuestCommand, ServeArgs, SubjectCommand, TaskArg,
    TrainArgs, UseraddArgs,
};

type Outcome = Result<(), Failure>;

fn invalid(msg: impl std::fmt::Display) -> Failure {
    Failure::Invalid(msg.to_string())
}

pub fn run(cli: Cli) -> Outcome {
    let dir = cli.data_dir.as_path();
    match cli.command {
        Command::Serve(a) => serve(dir, a),
        Command::Useradd(a) => useradd(dir, a),
        Command::Subject(SubjectCommand::Add { id, cohort, phi }) => subject_add(dir, &id, cohort, &phi),
        Command::Quest(QuestCommand::Validate { file }) => quest_validate(&file).map(|_| ()),
        Command::Quest(QuestCommand::Load { file }) => quest_load(dir, &file),
        Command::Ingest(a) => ingest(dir, a),
        Command::Train(a) => train_cmd(a),
        Command::Export(a) => export(dir, a),
    }
}

/// The master key is optional for commands that never touch PHI.
fn optional_key() -> Result<Option<MasterKey>, Failure> {
    match std::env::var(MASTER_KEY_ENV) {
        Err(_) => Ok(None),
        Ok(hex) if hex.is_empty() => Ok(None),
        Ok(hex) => MasterKey::from_hex(&hex)
            .map(Some)
            .map_err(|e| invalid(format!("${MASTER_KEY_ENV}: {e}"))),
    }
}

fn open_store(dir: &Path) -> Result<Store, Failure> {
    Store::open(dir, optional_key()?).map_err(|e| invalid(format!("{}: {e}", dir.display())))
}

fn split_pair<'a>(raw: &'a str, flag: &str) -> Result<(&'a str, &'a str), Failure> {
    raw.split_once('=')
        .filter(|(k, _)| !k.is_empty())
        .ok_or_else(|| Failure::Usage(format!("--{flag} expects NAME=VALUE, got `{raw}`")))
}

fn serve(dir: &Path, a: ServeArgs) -> Outcome {
    let mut cfg = ServiceConfig::new(a.addr, dir);
    if a.session_ttl_hours.is_nan() || a.session_ttl_hours <= 0.0 {
        return Err(Failure::Usage("--session-ttl-hours must be positive".into()));
    }
    cfg.session_ttl_ms = (a.session_ttl_hours * 3_600_000.0) as i64;
    let mut keys = HashMap::new();
    for raw in &a.device_keys {
        let (key, dev) = split_pair(raw, "device-key")?;
        let dev = DeviceId::new(dev).map_err(|e| Failure::Usage(format!("--device-key: {e}")))?;
        keys.insert(key.to_string(), dev);
    }
    cfg.device_keys = keys;

    let rt = tokio::runtime::Runtime::new().map_err(invalid)?;
    rt.block_on(async move {
        let handle = compose_service(cfg).await.map_err(invalid)?;
        println!("listening on {}", handle.base_url());
        let _ = io::stdout().flush();
        tokio::signal::ctrl_c().await.map_err(invalid)?;
        eprintln!("shutting down");
        handle.shutdown().await.map_err(invalid)
    })
}

fn useradd(dir: &Path, a: UseraddArgs) -> Outcome {
    let subject = match (a.role, a.subject.as_deref()) {
        (Role::Subject, Some(s)) => Some(SubjectId::new(s).map_err(|e| Failure::Usage(format!("--subject: {e}")))?),
        (Role::Subject, None) => return Err(Failure::Usage("--subject is required for the subject role".into())),
        (_, Some(_)) => return Err(Failure::Usage("--subject only applies to the subject role".into())),
        (_, None) => None,
    };
    if let Some(s) = &subject {
        let store = open_store(dir)?;
        if !store.subject_exists(s).map_err(invalid)? {
            return Err(invalid(format!("unknown subject `{s}`")));
        }
    }
    let mut password = String::new();
    io::stdin().lock().read_line(&mut password).map_err(invalid)?;
    let password = password.trim_end_matches(['\r', '\n']);

    std::fs::create_dir_all(dir).map_err(invalid)?;
    let auth = AuthService::open(dir, DEFAULT_SESSION_TTL_MS).map_err(invalid)?;
    let user = auth.create_user(&a.username, password, a.role, subject).map_err(invalid)?;
    println!("created {} user {}", user.role.as_str(), user.username);
    Ok(())
}

fn subject_add(dir: &Path, id: &str, cohort: String, phi: &[String]) -> Outcome {
    let id = SubjectId::new(id).map_err(|e| Failure::Usage(format!("--id: {e}")))?;
    let mut fields = BTreeMap::new();
    for raw in phi {
        let (k, v) = split_pair(raw, "phi")?;
        fields.insert(k.to_string(), v.to_string());
    }
    let key = MasterKey::from_env(MASTER_KEY_ENV).map_err(|e| invalid(format!("${MASTER_KEY_ENV}: {e}")))?;
    let store = Store::open(dir, Some(key)).map_err(invalid)?;
    let rec = SubjectRecord {
        id,
        cohort,
        phi: fields,
        created_at: sierra_core::auth::system_now_ms(),
    };
    let id = store.put_subject(&rec).map_err(invalid)?;
    println!("added subject {id}");
    Ok(())
}

fn quest_validate(file: &Path) -> Result<sierra_core::quest::QuestionnaireDef, Failure> {
    let text = std::fs::read_to_string(file).map_err(|e| invalid(format!("{}: {e}", file.display())))?;
    match parse_questionnaire(&text) {
        Ok(def) => {
            println!(
                "{}: ok ({} v{}, {} items)",
                file.display(),
                def.id,
                def.version,
                def.items.len()
            );
            Ok(def)
        }
        Err(e) => Err(invalid(format!("{}:{}: {}: {}", file.display(), e.line, e.kind, e.message))),
    }
}

fn quest_load(dir: &Path, file: &Path) -> Outcome {
    let def = quest_validate(file)?;
    open_store(dir)?.put_questionnaire(&def).map_err(invalid)?;
    println!("loaded {} v{}", def.id, def.version);
    Ok(())
}

fn ingest(dir: &Path, a: IngestArgs) -> Outcome {
    let subject = SubjectId::new(a.subject).map_err(|e| Failure::Usage(format!("--subject: {e}")))?;
    let device = DeviceId::new(a.device).map_err(|e| Failure::Usage(format!("--device: {e}")))?;
    let store = open_store(dir)?;
    let path = a.file.display().to_string();
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(&a.file)
        .map_err(|e| invalid(format!("{path}: {e}")))?;
    let header = rdr.headers().map_err(|e| invalid(format!("{path}: {e}")))?;
    if header.iter().collect::<Vec<_>>() != ["channel", "t_ms", "value"] {
        return Err(invalid(format!("{path}:1: header must be `channel,t_ms,value`")));
    }

    let mut rows: Vec<(u64, WireSample)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| invalid(format!("{path}: {e}")))?;
        let line = rec.position().map_or(0, |p| p.line());
        let t_ms = rec[1]
            .parse::<i64>()
            .map_err(|_| invalid(format!("{path}:{line}: t_ms `{}` is not an integer", &rec[1])))?;
        let value = rec[2]
            .parse::<f64>()
            .map_err(|_| invalid(format!("{path}:{line}: value `{}` is not a number", &rec[2])))?;
        rows.push((
            line,
            WireSample {
                channel: rec[0].to_string(),
                t_ms,
                value,
            },
        ));
    }

    let (mut accepted, mut rejected, mut duplicates) = (0usize, 0usize, 0usize);
    for (i, chunk) in rows.chunks(MAX_BATCH_SAMPLES).enumerate() {
        let batch = SampleBatch {
            device: device.clone(),
            subject: subject.clone(),
            seq_no: a.seq_start + i as u64,
            samples: chunk.iter().map(|(_, s)| s.clone()).collect(),
        };
        let receipt = store.ingest_batch(&batch).map_err(invalid)?;
        if receipt.duplicate_batch {
            duplicates += 1;
        }
        accepted += receipt.accepted;
        for r in &receipt.rejected {
            let line = chunk[r.index].0;
            eprintln!("{path}:{line}: rejected: {}", r.reason);
        }
        rejected += receipt.rejected.len();
    }
    println!(
        "ingested {accepted} samples in {} batches ({rejected} rejected, {duplicates} duplicate batches)",
        rows.len().div_ceil(MAX_BATCH_SAMPLES)
    );
    if rejected > 0 {
        return Err(invalid(format!("{rejected} samples were rejected")));
    }
    Ok(())
}

fn train_cmd(a: TrainArgs) -> Outcome {
    let task = match a.task {
        TaskArg::Classification => Task::Classification,
        TaskArg::Regression => Task::Regression,
    };
    let activation = match a.activation {
        ActivationArg::Relu => Activation::Relu,
        ActivationArg::Tanh => Activation::Tanh,
        ActivationArg::Identity => Activation::Identity,
    };
    let path = a.dataset.display().to_string();
    let text = std::fs::read_to_string(&a.dataset).map_err(|e| invalid(format!("{path}: {e}")))?;
    let data = parse_dataset_csv(&text, task).map_err(|e| invalid(format!("{path}: {e}")))?;
    if !(0.0..1.0).contains(&a.test_fraction) {
        return Err(Failure::Usage("--test-fraction must be in [0, 1)".into()));
    }
    let (train_set, test_set) = data.split(a.test_fraction, a.seed);
    let cfg = TrainConfig {
        learning_rate: a.lr,
        epochs: a.epochs,
        batch_size: a.batch_size,
        momentum: a.momentum,
        seed: a.seed,
    };
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let model = init_mlp(&a.layers, activation, task, a.seed).map_err(invalid)?;
    let (model, history) = train(&model, &train_set, &cfg).map_err(invalid)?;

    let step = (a.epochs / 10).max(1);
    for (i, l) in history.iter().enumerate() {
        if (i + 1) % step == 0 {
            println!("epoch {:>6}  loss {l:.6}", i + 1);
        }
    }
    println!("final loss: {:.12}", history.last().copied().unwrap_or(f64::NAN));

    if task == Task::Classification {
        let (eval, on) = if test_set.is_empty() { (&train_set, "train") } else { (&test_set, "test") };
        let Ok(Prediction::Classes(pred)) = predict(&model, eval.features.view()) else {
            return Err(invalid("prediction failed"));
        };
        let cm = confusion_matrix(eval.labels().unwrap_or_default(), &pred, model.output_size()).map_err(invalid)?;
        let m = metrics(&cm).map_err(invalid)?;
        println!("{on} accuracy: {:.4} ({} rows)", m.accuracy, eval.len());
        println!("confusion (rows = true class, columns = predicted):");
        for row in &cm.counts {
            let cells: Vec<String> = row.iter().map(|c| format!("{c:>6}")).collect();
            println!("{}", cells.join(""));
        }
    }
    Ok(())
}

fn export(dir: &Path, a: ExportArgs) -> Outcome {
    let subject = SubjectId::new(a.subject).map_err(|e| Failure::Usage(format!("--subject: {e}")))?;
    let channel = ChannelId::new(a.channel).map_err(|e| Failure::Usage(format!("--channel: {e}")))?;
    let store = open_store(dir)?;
    let ts = store.query_series(&subject, &channel, a.t0, a.t1).map_err(invalid)?;
    let mut out = csv::Writer::from_writer(io::stdout().lock());
    let write = |out: &mut csv::Writer<_>| -> csv::Result<()> {
        out.write_record(["channel", "t_ms", "value"])?;
        for (t, v) in &ts.points {
            out.write_record([channel.as_str(), &t.to_string(), &v.to_string()])?;
        }
        out.flush()?;
        Ok(())
    };
    write(&mut out).map_err(invalid)
}
