//! Ingestion of passages, queries, relevance labels and context embeddings.
//!
//! Every collection owns an [`IdMap`] translating the opaque external ids found
//! in source files into dense internal indices assigned in file order.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Bijection between external string ids and contiguous internal ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdMap {
    external: Vec<String>,
    lookup: HashMap<String, u32>,
}

impl IdMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends `id`, returning its internal index. Duplicates are rejected.
    pub fn push(&mut self, id: impl Into<String>) -> Result<u32> {
        let id = id.into();
        if self.lookup.contains_key(&id) {
            return Err(Error::DuplicateId(id));
        }
        let internal = u32::try_from(self.external.len())
            .map_err(|_| Error::invalid("more than u32::MAX ids"))?;
        self.lookup.insert(id.clone(), internal);
        self.external.push(id);
        Ok(internal)
    }

    pub fn from_ids<I, S>(ids: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut map = Self::new();
        for id in ids {
            map.push(id)?;
        }
        Ok(map)
    }

    pub fn internal(&self, external: &str) -> Option<u32> {
        self.lookup.get(external).copied()
    }

    pub fn external(&self, internal: u32) -> &str {
        &self.external[internal as usize]
    }

    pub fn len(&self) -> usize {
        self.external.len()
    }

    pub fn is_empty(&self) -> bool {
        self.external.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.external.iter().map(String::as_str)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        for id in &self.external {
            writeln!(out, "{id}").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut map = Self::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let id = line.strip_suffix('\r').unwrap_or(&line);
            map.push(id).map_err(|err| Error::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                message: err.to_string(),
            })?;
        }
        Ok(map)
    }
}

/// A collection of texts keyed by external id: passages or queries.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    ids: IdMap,
    texts: Vec<String>,
}

impl Corpus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, id: impl Into<String>, text: impl Into<String>) -> Result<u32> {
        let id = id.into();
        let text = text.into();
        if text.trim().is_empty() {
            return Err(Error::EmptyText(id));
        }
        let internal = self.ids.push(id)?;
        self.texts.push(text);
        Ok(internal)
    }

    pub fn ids(&self) -> &IdMap {
        &self.ids
    }

    pub fn text(&self, internal: u32) -> &str {
        &self.texts[internal as usize]
    }

    pub fn text_of(&self, external: &str) -> Option<&str> {
        self.ids.internal(external).map(|i| self.text(i))
    }

    pub fn len(&self) -> usize {
        self.texts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.texts.is_empty()
    }

    /// `(external id, text)` pairs in internal-id order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.ids.iter().zip(self.texts.iter().map(String::as_str))
    }

    /// Writes `id<TAB>text` lines terminated by LF.
    pub fn write_tsv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        for (id, text) in self.iter() {
            writeln!(out, "{id}\t{text}").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }
}

/// Loads a `id<TAB>text` file. A trailing `\r` is stripped, so CRLF input
/// loads identically to LF input; empty lines are ignored.
pub fn load_corpus(path: &Path) -> Result<Corpus> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(BufReader::new(file), path)
}

/// Queries share the corpus file layout.
pub fn load_queries(path: &Path) -> Result<Corpus> {
    load_corpus(path)
}

pub(crate) fn parse_corpus(reader: impl BufRead, path: &Path) -> Result<Corpus> {
    let mut corpus = Corpus::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        if line.is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message,
        };
        let (id, text) = line
            .split_once('\t')
            .ok_or_else(|| parse_err("expected `id<TAB>text`".into()))?;
        if id.is_empty() {
            return Err(parse_err("empty id".into()));
        }
        corpus.push(id, text).map_err(|err| match err {
            Error::DuplicateId(_) | Error::EmptyText(_) => parse_err(err.to_string()),
            other => other,
        })?;
    }
    Ok(corpus)
}

/// Graded relevance labels. Absent pairs have grade 0.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Qrels {
    entries: BTreeMap<String, BTreeMap<String, u32>>,
}

pub const MAX_GRADE: u32 = 3;

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, query: impl Into<String>, doc: impl Into<String>, grade: u32) -> Result<()> {
        if grade > MAX_GRADE {
            return Err(Error::invalid(format!("grade {grade} outside 0..={MAX_GRADE}")));
        }
        self.entries
            .entry(query.into())
            .or_default()
            .insert(doc.into(), grade);
        Ok(())
    }

    pub fn grade(&self, query: &str, doc: &str) -> u32 {
        self.entries
            .get(query)
            .and_then(|docs| docs.get(doc))
            .copied()
            .unwrap_or(0)
    }

    /// All labels of one query (including explicit zero grades).
    pub fn judgments(&self, query: &str) -> Option<&BTreeMap<String, u32>> {
        self.entries.get(query)
    }

    /// Docs of `query` whose grade is at least `threshold`.
    pub fn relevant<'a>(&'a self, query: &str, threshold: u32) -> impl Iterator<Item = &'a str> + 'a {
        self.entries
            .get(query)
            .into_iter()
            .flat_map(move |docs| {
                docs.iter()
                    .filter(move |(_, &g)| g >= threshold)
                    .map(|(d, _)| d.as_str())
            })
    }

    pub fn relevant_count(&self, query: &str, threshold: u32) -> usize {
        self.relevant(query, threshold).count()
    }

    pub fn contains_query(&self, query: &str) -> bool {
        self.entries.contains_key(query)
    }

    pub fn queries(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn query_count(&self) -> usize {
        self.entries.len()
    }

    /// Number of labelled (query, doc) pairs.
    pub fn len(&self) -> usize {
        self.entries.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        for (q, docs) in &self.entries {
            for (d, g) in docs {
                writeln!(out, "{q}\t0\t{d}\t{g}").map_err(|e| Error::io(path, e))?;
            }
        }
        out.flush().map_err(|e| Error::io(path, e))
    }
}

/// Loads `qid 0 pid grade` lines (tab or space separated).
pub fn load_qrels(path: &Path) -> Result<Qrels> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_qrels(BufReader::new(file), path)
}

pub(crate) fn parse_qrels(reader: impl BufRead, path: &Path) -> Result<Qrels> {
    let mut qrels = Qrels::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message,
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let [qid, _, pid, grade] = fields[..] else {
            return Err(parse_err(format!("expected 4 fields, found {}", fields.len())));
        };
        let grade: i64 = grade
            .parse()
            .map_err(|_| parse_err(format!("invalid grade {grade:?}")))?;
        if grade < 0 {
            return Err(parse_err(format!("negative grade {grade}")));
        }
        let grade = u32::try_from(grade).map_err(|_| parse_err(format!("grade {grade} too large")))?;
        qrels
            .insert(qid, pid, grade)
            .map_err(|err| parse_err(err.to_string()))?;
    }
    Ok(qrels)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingKind {
    Passage,
    Query,
}

pub const EMBEDDING_MAGIC: &[u8; 8] = b"CORTEMB1";
const EMBEDDING_HEADER: usize = 16;

/// Context vectors produced by an external encoder, one row per passage or query.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextEmbeddingStore {
    dim: usize,
    rows: Vec<f32>,
    ids: IdMap,
    kind: EmbeddingKind,
}

impl ContextEmbeddingStore {
    pub fn new(dim: usize, rows: Vec<f32>, ids: IdMap, kind: EmbeddingKind) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding dim must be positive"));
        }
        if rows.len() != ids.len() * dim {
            return Err(Error::SizeMismatch(format!(
                "{} values for {} ids of dim {dim}",
                rows.len(),
                ids.len()
            )));
        }
        if let Some(row) = rows.chunks_exact(dim).position(|r| r.iter().any(|v| !v.is_finite())) {
            return Err(Error::NonFinite { row });
        }
        Ok(Self { dim, rows, ids, kind })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn kind(&self) -> EmbeddingKind {
        self.kind
    }

    pub fn ids(&self) -> &IdMap {
        &self.ids
    }

    pub fn row(&self, internal: u32) -> &[f32] {
        let start = internal as usize * self.dim;
        &self.rows[start..start + self.dim]
    }

    pub fn get(&self, external: &str) -> Option<&[f32]> {
        self.ids.internal(external).map(|i| self.row(i))
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f32]> {
        self.rows.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.rows
    }
}

/// Reads a `CORTEMB1` vector file plus its sidecar id file.
pub fn load_embeddings(vec_path: &Path, id_path: &Path, kind: EmbeddingKind) -> Result<ContextEmbeddingStore> {
    let mut bytes = Vec::new();
    File::open(vec_path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(vec_path, e))?;
    let (count, dim, rows) = decode_matrix(&bytes, EMBEDDING_MAGIC, 0)?;
    let ids = IdMap::read(id_path)?;
    if ids.len() != count {
        return Err(Error::SizeMismatch(format!(
            "id file has {} lines but vector file has {count} rows",
            ids.len()
        )));
    }
    ContextEmbeddingStore::new(dim, rows, ids, kind)
}

pub fn write_embeddings(store: &ContextEmbeddingStore, vec_path: &Path, id_path: &Path) -> Result<()> {
    let bytes = encode_matrix(EMBEDDING_MAGIC, &[], store.len(), store.dim(), &store.rows)?;
    std::fs::write(vec_path, bytes).map_err(|e| Error::io(vec_path, e))?;
    store.ids.write(id_path)
}

/// Reads text embeddings, one `id<TAB>v1 v2 ...` line per row. Values may be
/// separated by spaces or commas.
pub fn import_embeddings_tsv(path: &Path, kind: EmbeddingKind) -> Result<ContextEmbeddingStore> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_embeddings_tsv(BufReader::new(file), path, kind)
}

pub(crate) fn parse_embeddings_tsv(reader: impl BufRead, path: &Path, kind: EmbeddingKind) -> Result<ContextEmbeddingStore> {
    let mut ids = IdMap::new();
    let mut rows = Vec::new();
    let mut dim = None;
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message,
        };
        let (id, values) = line
            .split_once('\t')
            .ok_or_else(|| parse_err("expected `id<TAB>values`".into()))?;
        let start = rows.len();
        for v in values.split(|c: char| c == ',' || c.is_whitespace()).filter(|v| !v.is_empty()) {
            rows.push(v.parse::<f32>().map_err(|e| parse_err(format!("bad value {v:?}: {e}")))?);
        }
        let len = rows.len() - start;
        match dim {
            None => dim = Some(len),
            Some(d) if d != len => return Err(parse_err(format!("expected {d} values, found {len}"))),
            _ => {}
        }
        ids.push(id).map_err(|e| parse_err(e.to_string()))?;
    }
    let dim = dim.ok_or_else(|| Error::invalid(format!("{} holds no embeddings", path.display())))?;
    ContextEmbeddingStore::new(dim, rows, ids, kind)
}

/// Encodes `magic | u32 count | u32 dim | extra u32s | f32 payload`, all LE.
pub(crate) fn encode_matrix(
    magic: &[u8; 8],
    extra: &[u32],
    count: usize,
    dim: usize,
    values: &[f32],
) -> Result<Vec<u8>> {
    let to_u32 = |v: usize, what: &str| {
        u32::try_from(v).map_err(|_| Error::SizeMismatch(format!("{what} {v} exceeds u32")))
    };
    let mut out = Vec::with_capacity(16 + 4 * extra.len() + 4 * values.len());
    out.extend_from_slice(magic);
    out.extend_from_slice(&to_u32(count, "count")?.to_le_bytes());
    out.extend_from_slice(&to_u32(dim, "dim")?.to_le_bytes());
    for v in extra {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

/// Inverse of [`encode_matrix`]; `extra` is the number of header u32s after
/// the dim field. Returns `(count, dim, values)`; extra fields are read via
/// [`read_u32_at`].
pub(crate) fn decode_matrix(bytes: &[u8], magic: &[u8; 8], extra: usize) -> Result<(usize, usize, Vec<f32>)> {
    let header = EMBEDDING_HEADER + 4 * extra;
    if bytes.len() < 8 || &bytes[..8] != magic {
        let found = String::from_utf8_lossy(&bytes[..bytes.len().min(8)]).into_owned();
        return Err(Error::BadMagic {
            expected: String::from_utf8_lossy(magic).into_owned(),
            found,
        });
    }
    if bytes.len() < header {
        return Err(Error::SizeMismatch(format!(
            "file of {} bytes is shorter than the {header}-byte header",
            bytes.len()
        )));
    }
    let count = read_u32_at(bytes, 8) as usize;
    let dim = read_u32_at(bytes, 12) as usize;
    if dim == 0 {
        return Err(Error::SizeMismatch("dim is zero".into()));
    }
    let expected = count
        .checked_mul(dim)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(header))
        .ok_or_else(|| Error::SizeMismatch(format!("count {count} x dim {dim} overflows")))?;
    if bytes.len() != expected {
        return Err(Error::SizeMismatch(format!(
            "expected {expected} bytes for {count}x{dim}, found {}",
            bytes.len()
        )));
    }
    let values = bytes[header..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((count, dim, values))
}

pub(crate) fn read_u32_at(bytes: &[u8], offset: usize) -> u32 {
    u32::from_le_bytes([bytes[offset], bytes[offset + 1], bytes[offset + 2], bytes[offset + 3]])
}
