//! File-backed vector collections.
//!
//! On-disk layout (version 1):
//!
//! ```text
//! header   b"AVEC1" | dimension: u32 LE
//! record*  body_len: u32 LE | body
//! body     doc_id: str16 | collection: u8 (0 articles, 1 bills)
//!          | meta_count: u32 LE | (key: str16, value: str32)*
//!          | text: str32 | vector: D x f32 LE
//! str16    len: u16 LE | utf-8 bytes
//! str32    len: u32 LE | utf-8 bytes
//! ```
//!
//! The file is an append log: a later record for the same `(collection, doc_id)`
//! replaces an earlier one when the index is rebuilt on open. A record cut short
//! by a crash is dropped and the file truncated back to the last whole record.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use legis_core::model::{Collection, EmbeddedDocument};
use legis_core::search::{MetadataFilter, SearchError, SearchHit, SearchParams, VectorCollection};

pub const MAGIC: &[u8; 5] = b"AVEC1";
const HEADER_LEN: u64 = 9;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("vector store I/O on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path} is not a vector store file (bad magic)")]
    BadMagic { path: PathBuf },
    #[error("{path} has dimension {found}, expected {expected}")]
    DimensionConflict { path: PathBuf, expected: usize, found: usize },
    #[error("corrupt record at byte {offset}: {reason}")]
    Corrupt { offset: u64, reason: String },
    #[error("line {line}: {message}")]
    Jsonl { line: usize, message: String },
    #[error(transparent)]
    Search(#[from] SearchError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

struct Collections {
    articles: VectorCollection,
    bills: VectorCollection,
}

impl Collections {
    fn new(dimension: usize) -> Self {
        Collections {
            articles: VectorCollection::new(Collection::Articles, dimension),
            bills: VectorCollection::new(Collection::Bills, dimension),
        }
    }

    fn get(&self, c: Collection) -> &VectorCollection {
        match c {
            Collection::Articles => &self.articles,
            Collection::Bills => &self.bills,
        }
    }

    fn get_mut(&mut self, c: Collection) -> &mut VectorCollection {
        match c {
            Collection::Articles => &mut self.articles,
            Collection::Bills => &mut self.bills,
        }
    }
}

/// Both collections behind one reader-writer lock, optionally persisted to an
/// append log. Searches take the read lock; upserts are serialized by the writer
/// mutex and only take the write lock for the in-memory insert.
pub struct VectorStore {
    dimension: usize,
    path: Option<PathBuf>,
    index: RwLock<Collections>,
    writer: Mutex<Option<BufWriter<File>>>,
}

impl std::fmt::Debug for VectorStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("VectorStore")
            .field("dimension", &self.dimension)
            .field("path", &self.path)
            .finish()
    }
}

impl VectorStore {
    pub fn in_memory(dimension: usize) -> Self {
        VectorStore {
            dimension,
            path: None,
            index: RwLock::new(Collections::new(dimension)),
            writer: Mutex::new(None),
        }
    }

    /// Opens (or creates) a store file, replaying its log into memory.
    pub fn open(path: impl AsRef<Path>, dimension: usize) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        let mut file = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&path)
            .map_err(io_err(&path))?;
        let len = file.metadata().map_err(io_err(&path))?.len();
        let mut index = Collections::new(dimension);
        if len == 0 {
            let mut header = Vec::with_capacity(HEADER_LEN as usize);
            header.extend_from_slice(MAGIC);
            header.extend_from_slice(&(dimension as u32).to_le_bytes());
            file.write_all(&header).map_err(io_err(&path))?;
            file.sync_all().map_err(io_err(&path))?;
        } else {
            let good = replay(&path, &mut file, dimension, &mut index)?;
            if good < len {
                file.set_len(good).map_err(io_err(&path))?;
                file.sync_all().map_err(io_err(&path))?;
            }
        }
        file.seek(SeekFrom::End(0)).map_err(io_err(&path))?;
        Ok(VectorStore {
            dimension,
            path: Some(path),
            index: RwLock::new(index),
            writer: Mutex::new(Some(BufWriter::new(file))),
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self, collection: Collection) -> usize {
        self.index.read().expect("vector index poisoned").get(collection).len()
    }

    pub fn is_empty(&self, collection: Collection) -> bool {
        self.len(collection) == 0
    }

    pub fn contains(&self, collection: Collection, doc_id: &str) -> bool {
        self.index.read().expect("vector index poisoned").get(collection).contains(doc_id)
    }

    pub fn get(&self, collection: Collection, doc_id: &str) -> Option<EmbeddedDocument> {
        self.index.read().expect("vector index poisoned").get(collection).get(doc_id)
    }

    /// Validates, appends to the log (flushed and synced), then indexes.
    pub fn upsert(&self, doc: EmbeddedDocument) -> Result<(), StoreError> {
        self.upsert_many(std::iter::once(doc)).map(|_| ())
    }

    /// Upserts a batch with one sync at the end. Stops at the first invalid document;
    /// documents before it are kept.
    pub fn upsert_many(&self, docs: impl IntoIterator<Item = EmbeddedDocument>) -> Result<usize, StoreError> {
        let mut writer = self.writer.lock().expect("vector writer poisoned");
        let mut n = 0;
        let mut result = Ok(());
        for doc in docs {
            if let Err(e) = self.index.read().expect("vector index poisoned").get(doc.collection).check(&doc) {
                result = Err(e.into());
                break;
            }
            if let (Some(w), Some(path)) = (writer.as_mut(), self.path.as_ref()) {
                w.write_all(&encode_record(&doc)).map_err(io_err(path))?;
            }
            self.index
                .write()
                .expect("vector index poisoned")
                .get_mut(doc.collection)
                .upsert(doc)?;
            n += 1;
        }
        if let (Some(w), Some(path)) = (writer.as_mut(), self.path.as_ref()) {
            w.flush().map_err(io_err(path))?;
            w.get_ref().sync_data().map_err(io_err(path))?;
        }
        result.map(|_| n)
    }

    pub fn search<Q: Copy + Into<f64>>(
        &self,
        collection: Collection,
        query: &[Q],
        params: SearchParams,
        filter: &MetadataFilter,
    ) -> Result<Vec<SearchHit>, StoreError> {
        Ok(self
            .index
            .read()
            .expect("vector index poisoned")
            .get(collection)
            .search(query, params, filter)?)
    }

    /// All documents of a collection in doc_id order.
    pub fn documents(&self, collection: Collection) -> Vec<EmbeddedDocument> {
        self.index
            .read()
            .expect("vector index poisoned")
            .get(collection)
            .documents()
            .collect()
    }

    /// Writes every document of `collection` as one JSON object per line.
    pub fn export_jsonl(&self, collection: Collection, out: &mut dyn Write) -> io::Result<usize> {
        let docs = self.documents(collection);
        for doc in &docs {
            serde_json::to_writer(&mut *out, doc)?;
            out.write_all(b"\n")?;
        }
        Ok(docs.len())
    }

    /// Reads `EmbeddedDocument` JSONL and upserts every line.
    pub fn import_jsonl(&self, input: impl BufRead) -> Result<usize, StoreError> {
        let mut docs = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line.map_err(|e| StoreError::Jsonl {
                line: i + 1,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let doc: EmbeddedDocument = serde_json::from_str(&line).map_err(|e| StoreError::Jsonl {
                line: i + 1,
                message: e.to_string(),
            })?;
            docs.push(doc);
        }
        self.upsert_many(docs)
    }
}

fn collection_byte(c: Collection) -> u8 {
    match c {
        Collection::Articles => 0,
        Collection::Bills => 1,
    }
}

fn put_str16(out: &mut Vec<u8>, s: &str) {
    let bytes = &s.as_bytes()[..s.len().min(u16::MAX as usize)];
    out.extend_from_slice(&(bytes.len() as u16).to_le_bytes());
    out.extend_from_slice(bytes);
}

fn put_str32(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

pub fn encode_record(doc: &EmbeddedDocument) -> Vec<u8> {
    let mut body = Vec::with_capacity(64 + doc.text.len() + doc.vector.len() * 4);
    put_str16(&mut body, &doc.doc_id);
    body.push(collection_byte(doc.collection));
    body.extend_from_slice(&(doc.metadata.len() as u32).to_le_bytes());
    for (k, v) in &doc.metadata {
        put_str16(&mut body, k);
        put_str32(&mut body, v);
    }
    put_str32(&mut body, &doc.text);
    for x in &doc.vector {
        body.extend_from_slice(&x.to_le_bytes());
    }
    let mut out = Vec::with_capacity(body.len() + 4);
    out.extend_from_slice(&(body.len() as u32).to_le_bytes());
    out.extend_from_slice(&body);
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.buf.get(self.pos..self.pos.checked_add(n)?)?;
        self.pos += n;
        Some(s)
    }

    fn u16(&mut self) -> Option<u16> {
        self.take(2).map(|b| u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn string(&mut self, len: usize) -> Option<String> {
        self.take(len).and_then(|b| String::from_utf8(b.to_vec()).ok())
    }
}

pub fn decode_record(body: &[u8], dimension: usize) -> Result<EmbeddedDocument, String> {
    let mut c = Cursor { buf: body, pos: 0 };
    let bad = |what: &str| format!("truncated or invalid {what}");
    let n = c.u16().ok_or_else(|| bad("doc_id length"))? as usize;
    let doc_id = c.string(n).ok_or_else(|| bad("doc_id"))?;
    let collection = match c.take(1).ok_or_else(|| bad("collection"))?[0] {
        0 => Collection::Articles,
        1 => Collection::Bills,
        other => return Err(format!("unknown collection byte {other}")),
    };
    let count = c.u32().ok_or_else(|| bad("metadata count"))?;
    let mut metadata = BTreeMap::new();
    for _ in 0..count {
        let kl = c.u16().ok_or_else(|| bad("metadata key length"))? as usize;
        let k = c.string(kl).ok_or_else(|| bad("metadata key"))?;
        let vl = c.u32().ok_or_else(|| bad("metadata value length"))? as usize;
        let v = c.string(vl).ok_or_else(|| bad("metadata value"))?;
        metadata.insert(k, v);
    }
    let tl = c.u32().ok_or_else(|| bad("text length"))? as usize;
    let text = c.string(tl).ok_or_else(|| bad("text"))?;
    let raw = c.take(dimension * 4).ok_or_else(|| bad("vector"))?;
    if c.pos != body.len() {
        return Err(format!("{} trailing bytes", body.len() - c.pos));
    }
    let vector = raw
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    Ok(EmbeddedDocument {
        doc_id,
        collection,
        text,
        vector,
        metadata,
    })
}

/// Replays the log into `index` and returns the offset just past the last whole record.
fn replay(path: &Path, file: &mut File, dimension: usize, index: &mut Collections) -> Result<u64, StoreError> {
    file.seek(SeekFrom::Start(0)).map_err(io_err(path))?;
    let mut reader = BufReader::new(&mut *file);
    let mut header = [0u8; HEADER_LEN as usize];
    if reader.read_exact(&mut header).is_err() || &header[..5] != MAGIC {
        return Err(StoreError::BadMagic { path: path.into() });
    }
    let found = u32::from_le_bytes([header[5], header[6], header[7], header[8]]) as usize;
    if found != dimension {
        return Err(StoreError::DimensionConflict {
            path: path.into(),
            expected: dimension,
            found,
        });
    }
    let mut offset = HEADER_LEN;
    loop {
        let mut len = [0u8; 4];
        match read_full(&mut reader, &mut len).map_err(io_err(path))? {
            0 => return Ok(offset),
            4 => {}
            _ => return Ok(offset),
        }
        let body_len = u32::from_le_bytes(len) as usize;
        let mut body = vec![0u8; body_len];
        if read_full(&mut reader, &mut body).map_err(io_err(path))? < body_len {
            return Ok(offset);
        }
        let doc = decode_record(&body, dimension).map_err(|reason| StoreError::Corrupt { offset, reason })?;
        index
            .get_mut(doc.collection)
            .upsert(doc)
            .map_err(|e| StoreError::Corrupt {
                offset,
                reason: e.to_string(),
            })?;
        offset += 4 + body_len as u64;
    }
}

/// Like `read_exact` but reports how much was read instead of failing at EOF.
fn read_full(r: &mut impl Read, buf: &mut [u8]) -> io::Result<usize> {
    let mut n = 0;
    while n < buf.len() {
        match r.read(&mut buf[n..]) {
            Ok(0) => break,
            Ok(k) => n += k,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bill(id: &str, v: Vec<f32>) -> EmbeddedDocument {
        let mut metadata = BTreeMap::new();
        metadata.insert("congress".into(), "113".into());
        metadata.insert("bill_id".into(), id.into());
        EmbeddedDocument {
            doc_id: id.into(),
            collection: Collection::Bills,
            text: format!("summary of {id}"),
            vector: v,
            metadata,
        }
    }

    #[test]
    fn record_round_trip() {
        let doc = bill("113-s-1", vec![1.0, -0.5, 0.25]);
        let enc = encode_record(&doc);
        assert_eq!(decode_record(&enc[4..], 3).unwrap(), doc);
        assert!(decode_record(&enc[4..enc.len() - 1], 3).is_err());
    }

    #[test]
    fn reopen_replays_log_and_last_write_wins() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.avec");
        {
            let store = VectorStore::open(&path, 3).unwrap();
            store.upsert(bill("113-s-1", vec![1.0, 0.0, 0.0])).unwrap();
            store.upsert(bill("113-hr-2", vec![0.0, 1.0, 0.0])).unwrap();
            let mut again = bill("113-s-1", vec![1.0, 0.0, 0.0]);
            again.text = "replaced".into();
            store.upsert(again).unwrap();
        }
        let store = VectorStore::open(&path, 3).unwrap();
        assert_eq!(store.len(Collection::Bills), 2);
        assert_eq!(store.get(Collection::Bills, "113-s-1").unwrap().text, "replaced");
        assert!(matches!(
            VectorStore::open(&path, 4),
            Err(StoreError::DimensionConflict { found: 3, .. })
        ));
    }

    #[test]
    fn torn_tail_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.avec");
        {
            let store = VectorStore::open(&path, 2).unwrap();
            store.upsert(bill("113-s-1", vec![1.0, 0.0])).unwrap();
        }
        let good_len = std::fs::metadata(&path).unwrap().len();
        let partial = encode_record(&bill("113-s-2", vec![0.0, 1.0]));
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(&partial[..partial.len() - 3]).unwrap();
        drop(f);
        let store = VectorStore::open(&path, 2).unwrap();
        assert_eq!(store.len(Collection::Bills), 1);
        assert_eq!(std::fs::metadata(&path).unwrap().len(), good_len);
        store.upsert(bill("113-s-2", vec![0.0, 1.0])).unwrap();
        drop(store);
        assert_eq!(VectorStore::open(&path, 2).unwrap().len(Collection::Bills), 2);
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk");
        std::fs::write(&path, b"NOTAVECTORFILE").unwrap();
        assert!(matches!(VectorStore::open(&path, 2), Err(StoreError::BadMagic { .. })));
    }

    #[test]
    fn jsonl_round_trip() {
        let store = VectorStore::in_memory(2);
        store.upsert(bill("113-s-1", vec![1.0, 0.0])).unwrap();
        store.upsert(bill("113-s-2", vec![0.5, 0.5])).unwrap();
        let mut out = Vec::new();
        assert_eq!(store.export_jsonl(Collection::Bills, &mut out).unwrap(), 2);
        let other = VectorStore::in_memory(2);
        assert_eq!(other.import_jsonl(&out[..]).unwrap(), 2);
        assert_eq!(other.documents(Collection::Bills), store.documents(Collection::Bills));
    }

    #[test]
    fn invalid_document_is_not_logged() {
        let store = VectorStore::in_memory(2);
        let err = store.upsert(bill("113-s-1", vec![1.0, 0.0, 0.0])).unwrap_err();
        assert!(matches!(err, StoreError::Search(SearchError::DimensionMismatch { .. })));
        assert!(store.is_empty(Collection::Bills));
    }
}
