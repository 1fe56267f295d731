//! Durable state: an append-only JSON-lines journal of users and exams plus
//! content-addressed image blobs.
//!
//! ```text
//! <store>/journal.jsonl     one event per line
//! <store>/blobs/<sha256>    uploaded image bytes
//! ```
//!
//! A journal line is written and synced before the in-memory index sees
//! it, so readers never observe a half-written exam.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use micrographia::dataset::{DrawingKind, Gender, Label};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ServiceError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserAccount {
    pub user_id: String,
    pub login: String,
    /// Salted, iterated hash; never the password itself.
    pub credential: String,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredImage {
    /// SHA-256 of the uploaded bytes; also the blob name.
    pub image_id: String,
    pub kind: Option<DrawingKind>,
    pub content_type: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ImageResult {
    Scored { image_id: String, probability: f64, label: Label },
    Failed { image_id: String, error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExamRecord {
    pub exam_id: String,
    pub user_id: String,
    pub submitted_at: DateTime<Utc>,
    pub age: f64,
    pub gender: Gender,
    pub images: Vec<StoredImage>,
    pub per_image: Vec<ImageResult>,
    pub verdict: Label,
    /// Mean probability over the scored images.
    pub verdict_probability: f64,
    pub threshold: f64,
    pub low_confidence: bool,
    pub model_version: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
enum Event {
    User(UserAccount),
    Exam(ExamRecord),
}

#[derive(Default)]
struct Index {
    users: HashMap<String, UserAccount>,
    logins: HashMap<String, String>,
    exams: Vec<ExamRecord>,
    exam_pos: HashMap<String, usize>,
}

impl Index {
    fn apply(&mut self, event: Event) {
        match event {
            Event::User(u) => {
                self.logins.insert(u.login.clone(), u.user_id.clone());
                self.users.insert(u.user_id.clone(), u);
            }
            Event::Exam(e) => {
                self.exam_pos.insert(e.exam_id.clone(), self.exams.len());
                self.exams.push(e);
            }
        }
    }
}

struct Inner {
    journal: File,
    index: Index,
}

pub struct Store {
    dir: PathBuf,
    inner: Mutex<Inner>,
}

const JOURNAL: &str = "journal.jsonl";

impl Store {
    /// Opens or creates a store and replays its journal. A torn final line
    /// (crash mid-append) is dropped; damage anywhere else is an error.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, ServiceError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(dir.join("blobs"))?;
        let path = dir.join(JOURNAL);
        let mut index = Index::default();
        let mut valid_len = 0u64;
        if path.exists() {
            let lines: Vec<String> = BufReader::new(File::open(&path)?).lines().collect::<Result<_, _>>()?;
            let raw = fs::read(&path)?;
            let ends_clean = raw.last().is_none_or(|&b| b == b'\n');
            for (i, line) in lines.iter().enumerate() {
                if line.trim().is_empty() {
                    valid_len += line.len() as u64 + 1;
                    continue;
                }
                match serde_json::from_str::<Event>(line) {
                    Ok(ev) => {
                        index.apply(ev);
                        valid_len += line.len() as u64 + 1;
                    }
                    Err(_) if i + 1 == lines.len() && !ends_clean => break,
                    Err(e) => {
                        return Err(ServiceError::Store(format!("journal line {} is corrupt: {e}", i + 1)));
                    }
                }
            }
            if valid_len < raw.len() as u64 {
                OpenOptions::new().write(true).open(&path)?.set_len(valid_len)?;
            }
        }
        let journal = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Self { dir, inner: Mutex::new(Inner { journal, index }) })
    }

    fn append(&self, event: Event) -> Result<(), ServiceError> {
        let mut line = serde_json::to_vec(&event).map_err(|e| ServiceError::Store(e.to_string()))?;
        line.push(b'\n');
        let mut inner = self.inner.lock().expect("store lock poisoned");
        if let Event::User(u) = &event {
            if inner.index.logins.contains_key(&u.login) {
                return Err(ServiceError::Conflict(format!("login `{}` is taken", u.login)));
            }
        }
        inner.journal.write_all(&line)?;
        inner.journal.sync_data()?;
        inner.index.apply(event);
        Ok(())
    }

    pub fn insert_user(&self, user: UserAccount) -> Result<(), ServiceError> {
        self.append(Event::User(user))
    }

    pub fn insert_exam(&self, exam: ExamRecord) -> Result<(), ServiceError> {
        self.append(Event::Exam(exam))
    }

    pub fn user_by_login(&self, login: &str) -> Option<UserAccount> {
        let inner = self.inner.lock().expect("store lock poisoned");
        let id = inner.index.logins.get(login)?;
        inner.index.users.get(id).cloned()
    }

    pub fn exam(&self, exam_id: &str) -> Option<ExamRecord> {
        let inner = self.inner.lock().expect("store lock poisoned");
        inner.index.exam_pos.get(exam_id).map(|&i| inner.index.exams[i].clone())
    }

    /// The user's exams, newest first (later submissions first on equal times).
    pub fn exams_of(&self, user_id: &str) -> Vec<ExamRecord> {
        let inner = self.inner.lock().expect("store lock poisoned");
        let mut out: Vec<(usize, ExamRecord)> = inner
            .index
            .exams
            .iter()
            .enumerate()
            .filter(|(_, e)| e.user_id == user_id)
            .map(|(i, e)| (i, e.clone()))
            .collect();
        out.sort_by(|a, b| b.1.submitted_at.cmp(&a.1.submitted_at).then(b.0.cmp(&a.0)));
        out.into_iter().map(|(_, e)| e).collect()
    }

    /// Stores bytes under their SHA-256 and returns it.
    pub fn put_blob(&self, bytes: &[u8]) -> Result<String, ServiceError> {
        let id = hex::encode(Sha256::digest(bytes));
        let path = self.dir.join("blobs").join(&id);
        if !path.exists() {
            let tmp = self.dir.join("blobs").join(format!("{id}.tmp{}", std::process::id()));
            let mut f = File::create(&tmp)?;
            f.write_all(bytes)?;
            f.sync_all()?;
            fs::rename(&tmp, &path)?;
        }
        Ok(id)
    }

    pub fn blob(&self, image_id: &str) -> Result<Vec<u8>, ServiceError> {
        if image_id.len() != 64 || !image_id.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(ServiceError::NotFound("image".into()));
        }
        fs::read(self.dir.join("blobs").join(image_id)).map_err(|_| ServiceError::NotFound("image".into()))
    }
}
