//! Document store with exact (brute-force) cosine k-NN search.
//!
//! Readers take a consistent [`IndexView`]; writers replace whole documents
//! under the write lock, so a search never observes a partial upsert.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::{RwLock, RwLockReadGuard, RwLockWriteGuard};

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::embedder::{EmbedRequest, Embedder};
use crate::error::{Error, Result};
use crate::vecmath::{self, UnitVector};

/// Writer batches during ingestion hold the lock for at most this many documents.
pub const INGEST_BATCH: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Document {
    pub id: String,
    pub title: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub media_ref: Option<String>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
    pub vector: UnitVector,
}

impl Document {
    pub fn new(id: impl Into<String>, title: impl Into<String>, vector: UnitVector) -> Self {
        Document {
            id: id.into(),
            title: title.into(),
            media_ref: None,
            metadata: BTreeMap::new(),
            vector,
        }
    }

    pub fn with_metadata(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.metadata.insert(key.into(), value.into());
        self
    }
}

/// One line of an ingestion or snapshot file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct DocumentRecord {
    pub id: String,
    pub title: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub media_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metadata: Option<BTreeMap<String, String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vector: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_for_embedding: Option<String>,
}

impl From<&Document> for DocumentRecord {
    fn from(doc: &Document) -> Self {
        DocumentRecord {
            id: doc.id.clone(),
            title: doc.title.clone(),
            media_ref: doc.media_ref.clone(),
            metadata: Some(doc.metadata.clone()),
            vector: Some(doc.vector.to_vec()),
            text_for_embedding: None,
        }
    }
}

impl DocumentRecord {
    /// Resolves the record into a document, embedding it when it carries no
    /// vector and an embedder is supplied.
    pub fn into_document(self, dimension: usize, embedder: Option<&Embedder>) -> Result<Document> {
        if self.id.trim().is_empty() {
            return Err(Error::MalformedDocument("empty id".into()));
        }
        let vector = match (self.vector, embedder) {
            (Some(raw), _) => {
                if raw.len() != dimension {
                    return Err(Error::DimensionMismatch { expected: dimension, found: raw.len() });
                }
                UnitVector::from_components(raw)?
            }
            (None, Some(embedder)) => {
                let req = if let Some(text) = &self.text_for_embedding {
                    EmbedRequest::text(text.clone())
                } else if let Some(media) = &self.media_ref {
                    EmbedRequest::image(media.clone())
                } else {
                    return Err(Error::MalformedDocument(
                        "no vector, text_for_embedding or media_ref to embed".into(),
                    ));
                };
                embedder.embed(&req)?
            }
            (None, None) => {
                return Err(Error::MalformedDocument(
                    "no vector (pass embed_missing to embed it)".into(),
                ))
            }
        };
        Ok(Document {
            id: self.id,
            title: self.title,
            media_ref: self.media_ref,
            metadata: self.metadata.unwrap_or_default(),
            vector,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct SearchHit {
    pub id: String,
    pub score: f64,
    pub rank: usize,
}

/// Conjunction of `key == value` tests against document metadata.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(transparent)]
pub struct MetadataFilter(pub BTreeMap<String, String>);

impl MetadataFilter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn eq(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.0.insert(key.into(), value.into());
        self
    }

    pub fn matches(&self, doc: &Document) -> bool {
        self.0.iter().all(|(k, v)| doc.metadata.get(k) == Some(v))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct LineError {
    pub line: usize,
    pub code: crate::ErrorCode,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct IngestReport {
    pub ingested: usize,
    pub skipped: usize,
    pub errors: Vec<LineError>,
}

/// The search surface the engine depends on. The brute-force [`IndexView`]
/// is the only backend today; an approximate one would implement the same.
pub trait NeighbourSearch {
    fn dimension(&self) -> usize;

    fn nn_search(
        &self,
        query: &UnitVector,
        k: usize,
        filter: Option<&MetadataFilter>,
        exclude: Option<&HashSet<String>>,
    ) -> Result<Vec<SearchHit>>;

    fn document(&self, id: &str) -> Result<&Document>;

    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug)]
pub struct Index {
    dimension: usize,
    docs: RwLock<BTreeMap<String, Document>>,
}

/// A consistent read view of the index.
pub struct IndexView<'a> {
    dimension: usize,
    docs: RwLockReadGuard<'a, BTreeMap<String, Document>>,
}

impl Index {
    pub fn new(dimension: usize) -> Self {
        Index { dimension, docs: RwLock::new(BTreeMap::new()) }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn read(&self) -> IndexView<'_> {
        IndexView {
            dimension: self.dimension,
            docs: self.docs.read().unwrap_or_else(|e| e.into_inner()),
        }
    }

    fn write(&self) -> RwLockWriteGuard<'_, BTreeMap<String, Document>> {
        self.docs.write().unwrap_or_else(|e| e.into_inner())
    }

    fn validate(&self, doc: &Document) -> Result<()> {
        if doc.id.trim().is_empty() {
            return Err(Error::MalformedDocument("empty id".into()));
        }
        doc.vector.ensure_dim(self.dimension)
    }

    pub fn upsert(&self, doc: Document) -> Result<()> {
        self.validate(&doc)?;
        self.write().insert(doc.id.clone(), doc);
        Ok(())
    }

    /// Validates every document first, then applies them under one lock.
    pub fn upsert_many(&self, docs: Vec<Document>) -> Result<()> {
        for doc in &docs {
            self.validate(doc)?;
        }
        let mut guard = self.write();
        for doc in docs {
            guard.insert(doc.id.clone(), doc);
        }
        Ok(())
    }

    pub fn get(&self, id: &str) -> Result<Document> {
        self.read().document(id).cloned()
    }

    /// Idempotent; returns whether a document was removed.
    pub fn delete(&self, id: &str) -> bool {
        self.write().remove(id).is_some()
    }

    pub fn count(&self) -> usize {
        self.read().len()
    }

    pub fn clear(&self) {
        self.write().clear();
    }

    pub fn nn_search(
        &self,
        query: &UnitVector,
        k: usize,
        filter: Option<&MetadataFilter>,
        exclude: Option<&HashSet<String>>,
    ) -> Result<Vec<SearchHit>> {
        self.read().nn_search(query, k, filter, exclude)
    }

    pub fn ingest_jsonl(
        &self,
        path: &Path,
        embed_missing: bool,
        embedder: &Embedder,
    ) -> Result<IngestReport> {
        let file = std::fs::File::open(path)
            .map_err(|source| Error::FileUnreadable { path: path.to_owned(), source })?;
        self.ingest_reader(BufReader::new(file), embed_missing, embedder)
            .map_err(|e| match e {
                Error::Io(source) => Error::FileUnreadable { path: path.to_owned(), source },
                other => other,
            })
    }

    /// Ingests JSONL from any reader. Bad lines are reported, not fatal.
    pub fn ingest_reader<R: BufRead>(
        &self,
        reader: R,
        embed_missing: bool,
        embedder: &Embedder,
    ) -> Result<IngestReport> {
        let mut report = IngestReport::default();
        let mut pending = Vec::with_capacity(INGEST_BATCH);
        let embedder = embed_missing.then_some(embedder);
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed = serde_json::from_str::<DocumentRecord>(&line)
                .map_err(|e| Error::MalformedDocument(e.to_string()))
                .and_then(|rec| rec.into_document(self.dimension, embedder));
            match parsed {
                Ok(doc) => {
                    pending.push(doc);
                    if pending.len() == INGEST_BATCH {
                        report.ingested += pending.len();
                        self.upsert_many(std::mem::take(&mut pending))?;
                    }
                }
                Err(err) => {
                    report.skipped += 1;
                    report.errors.push(LineError {
                        line: n + 1,
                        code: err.code(),
                        message: err.to_string(),
                    });
                }
            }
        }
        report.ingested += pending.len();
        self.upsert_many(pending)?;
        Ok(report)
    }

    /// Writes every document as JSONL, sorted by id.
    pub fn write_snapshot<W: Write>(&self, mut out: W) -> Result<()> {
        let view = self.read();
        for doc in view.docs.values() {
            serde_json::to_writer(&mut out, &DocumentRecord::from(doc))
                .map_err(|e| Error::Io(e.into()))?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn snapshot_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_snapshot(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn save_snapshot(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_snapshot(std::io::BufWriter::new(file))
    }

    /// Replaces the index contents with a snapshot. Any bad line aborts the
    /// restore and leaves the index untouched.
    pub fn restore_reader<R: BufRead>(&self, reader: R) -> Result<usize> {
        let mut docs = BTreeMap::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let doc = serde_json::from_str::<DocumentRecord>(&line)
                .map_err(|e| Error::MalformedDocument(e.to_string()))
                .and_then(|rec| rec.into_document(self.dimension, None))
                .map_err(|e| Error::MalformedDocument(format!("snapshot line {}: {e}", n + 1)))?;
            docs.insert(doc.id.clone(), doc);
        }
        let count = docs.len();
        *self.write() = docs;
        Ok(count)
    }

    pub fn restore_snapshot(&self, path: &Path) -> Result<usize> {
        let file = std::fs::File::open(path)
            .map_err(|source| Error::FileUnreadable { path: path.to_owned(), source })?;
        self.restore_reader(BufReader::new(file))
    }
}

impl IndexView<'_> {
    pub fn documents(&self) -> impl Iterator<Item = &Document> {
        self.docs.values()
    }
}

/// Descending score, then ascending id.
pub(crate) fn hit_order(a: (f64, &str), b: (f64, &str)) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1))
}

impl NeighbourSearch for IndexView<'_> {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn nn_search(
        &self,
        query: &UnitVector,
        k: usize,
        filter: Option<&MetadataFilter>,
        exclude: Option<&HashSet<String>>,
    ) -> Result<Vec<SearchHit>> {
        if k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        query.ensure_dim(self.dimension)?;
        let mut scored: Vec<(f64, &str)> = self
            .docs
            .values()
            .filter(|d| filter.is_none_or(|f| f.matches(d)))
            .filter(|d| exclude.is_none_or(|ex| !ex.contains(&d.id)))
            .map(|d| (vecmath::dot(query, &d.vector).clamp(-1.0, 1.0), d.id.as_str()))
            .collect();
        if scored.len() > k {
            scored.select_nth_unstable_by(k - 1, |a, b| hit_order(*a, *b));
            scored.truncate(k);
        }
        scored.sort_unstable_by(|a, b| hit_order(*a, *b));
        Ok(scored
            .into_iter()
            .enumerate()
            .map(|(i, (score, id))| SearchHit { id: id.to_owned(), score, rank: i + 1 })
            .collect())
    }

    fn document(&self, id: &str) -> Result<&Document> {
        self.docs.get(id).ok_or_else(|| Error::NotFound(format!("document `{id}`")))
    }

    fn len(&self) -> usize {
        self.docs.len()
    }
}
