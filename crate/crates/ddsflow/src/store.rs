//! Append-only record storage plus a directory index.
//!
//! Layout under the root:
//!
//! ```text
//! desc/<name>/<version>.rec   one description record per file, written once
//! item/<id>/log.rec           framed event records, append-only
//! index.dir                   sorted "key<TAB>path" lines
//! ```
//!
//! A log frame is a 4-byte big-endian length, one flag byte and the record.
//! The flag marks the last record of an append batch; a batch is visible
//! only once its closing frame is complete, so a torn write is cut back to
//! the previous batch on open. Records are written before the index, and
//! open re-indexes any record the index does not list.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, IoContext, Result};
use crate::fuse::{Fuse, Verdict};

const INDEX: &str = "index.dir";
const LOG_FILE: &str = "log.rec";
const FRAME_HEAD: usize = 5;
const END_OF_BATCH: u8 = 1;

#[derive(Debug)]
pub struct Store {
    root: PathBuf,
    index: BTreeMap<String, String>,
    counts: BTreeMap<String, u64>,
    fuse: Fuse,
}

/// Keep names readable on disk while ruling out separators and dot names.
pub(crate) fn encode_segment(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for (i, b) in s.bytes().enumerate() {
        let plain = b.is_ascii_alphanumeric() || matches!(b, b'-' | b'_' | b'#' | b'@' | b'+') || (b == b'.' && i > 0);
        if plain {
            out.push(b as char);
        } else {
            out.push_str(&format!("%{b:02X}"));
        }
    }
    if out.is_empty() {
        out.push('%');
    }
    out
}

pub(crate) fn decode_segment(s: &str) -> Option<String> {
    if s == "%" {
        return Some(String::new());
    }
    let bytes = s.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' {
            let hex = s.get(i + 1..i + 3)?;
            out.push(u8::from_str_radix(hex, 16).ok()?);
            i += 3;
        } else {
            out.push(bytes[i]);
            i += 1;
        }
    }
    String::from_utf8(out).ok()
}

fn relative_path(key: &str) -> Result<String> {
    let bad = || Error::Core(ddsflow_core::Error::Invalid(format!("storage key {key}")));
    if let Some(id) = key.strip_prefix("item/") {
        return Ok(format!("item/{}/{LOG_FILE}", encode_segment(id)));
    }
    if let Some(rest) = key.strip_prefix("desc/") {
        let (name, version) = rest.rsplit_once('/').ok_or_else(bad)?;
        let v: u32 = version.parse().map_err(|_| bad())?;
        return Ok(format!("desc/{}/{v}.rec", encode_segment(name)));
    }
    Err(bad())
}

/// Frames of one batch.
fn encode_batch(records: &[Vec<u8>]) -> Vec<u8> {
    let mut buf = Vec::new();
    for (i, r) in records.iter().enumerate() {
        let len = u32::try_from(r.len()).expect("record below 4 GiB");
        buf.extend_from_slice(&len.to_be_bytes());
        buf.push(if i + 1 == records.len() { END_OF_BATCH } else { 0 });
        buf.extend_from_slice(r);
    }
    buf
}

/// Records of every complete batch, and the byte length they cover.
fn decode_frames(bytes: &[u8]) -> (Vec<Vec<u8>>, usize) {
    let mut records = Vec::new();
    let mut committed = (0, 0);
    let mut pos = 0;
    while pos + FRAME_HEAD <= bytes.len() {
        let len = u32::from_be_bytes(bytes[pos..pos + 4].try_into().expect("4 bytes")) as usize;
        let flag = bytes[pos + 4];
        let end = pos + FRAME_HEAD + len;
        if end > bytes.len() {
            break;
        }
        records.push(bytes[pos + FRAME_HEAD..end].to_vec());
        pos = end;
        if flag == END_OF_BATCH {
            committed = (records.len(), pos);
        }
    }
    records.truncate(committed.0);
    (records, committed.1)
}

fn write_atomic(path: &Path, bytes: &[u8], fuse: &Fuse) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let verdict = fuse.check()?;
    let mut f = File::create(&tmp).at(&tmp)?;
    if verdict == Verdict::Tear {
        f.write_all(&bytes[..bytes.len() / 2]).at(&tmp)?;
        return Err(Error::Crashed);
    }
    f.write_all(bytes).at(&tmp)?;
    drop(f);
    fs::rename(&tmp, path).at(path)
}

impl Store {
    /// Open (creating if needed) the store at `root` and recover it.
    pub fn open(root: impl Into<PathBuf>, fuse: Fuse) -> Result<Store> {
        let root = root.into();
        fs::create_dir_all(&root).at(&root)?;
        let mut store = Store {
            root,
            index: BTreeMap::new(),
            counts: BTreeMap::new(),
            fuse,
        };
        store.load_index()?;
        store.recover()?;
        Ok(store)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn load_index(&mut self) -> Result<()> {
        let path = self.root.join(INDEX);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(()),
            Err(e) => return Err(e).at(&path),
        };
        for line in text.lines().filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('\t')
                .ok_or_else(|| Error::CorruptStore(format!("index line {line:?}")))?;
            self.index.insert(k.to_string(), v.to_string());
        }
        Ok(())
    }

    fn write_index(&self) -> Result<()> {
        let mut text = String::new();
        for (k, v) in &self.index {
            text.push_str(k);
            text.push('\t');
            text.push_str(v);
            text.push('\n');
        }
        write_atomic(&self.root.join(INDEX), text.as_bytes(), &self.fuse)
    }

    /// Drop leftovers of interrupted writes and index unlisted records.
    fn recover(&mut self) -> Result<()> {
        let mut found = BTreeMap::new();
        let _ = fs::remove_file(self.root.join(INDEX).with_extension("tmp"));
        for (class, dir) in [("desc", self.root.join("desc")), ("item", self.root.join("item"))] {
            if !dir.is_dir() {
                continue;
            }
            for entry in fs::read_dir(&dir).at(&dir)? {
                let sub = entry.at(&dir)?.path();
                let Some(name) = sub.file_name().and_then(|n| n.to_str()).and_then(decode_segment) else {
                    continue;
                };
                if class == "item" {
                    let log = sub.join(LOG_FILE);
                    if !log.is_file() {
                        continue;
                    }
                    let bytes = fs::read(&log).at(&log)?;
                    let (records, valid) = decode_frames(&bytes);
                    if valid < bytes.len() {
                        OpenOptions::new().write(true).open(&log).and_then(|f| f.set_len(valid as u64)).at(&log)?;
                    }
                    if !records.is_empty() {
                        let key = format!("item/{name}");
                        self.counts.insert(key.clone(), records.len() as u64);
                        found.insert(key, relative_path(&format!("item/{name}"))?);
                    }
                    continue;
                }
                for rec in fs::read_dir(&sub).at(&sub)? {
                    let p = rec.at(&sub)?.path();
                    match p.extension().and_then(|e| e.to_str()) {
                        Some("tmp") => fs::remove_file(&p).at(&p)?,
                        Some("rec") => {
                            let Some(v) = p.file_stem().and_then(|s| s.to_str()).and_then(|s| s.parse::<u32>().ok()) else {
                                continue;
                            };
                            let key = format!("desc/{name}/{v}");
                            found.insert(key.clone(), relative_path(&key)?);
                        }
                        _ => {}
                    }
                }
            }
        }
        let mut changed = false;
        for (k, v) in found {
            if self.index.get(&k) != Some(&v) {
                self.index.insert(k, v);
                changed = true;
            }
        }
        if changed {
            self.write_index()?;
        }
        Ok(())
    }

    fn ensure_indexed(&mut self, key: &str, rel: String) -> Result<()> {
        if self.index.get(key) == Some(&rel) {
            return Ok(());
        }
        self.index.insert(key.to_string(), rel);
        self.write_index()
    }

    /// Append `records` to `log_key` as one batch; returns the sequence
    /// number of the last record.
    pub fn append(&mut self, log_key: &str, records: &[Vec<u8>]) -> Result<u64> {
        let rel = relative_path(log_key)?;
        if records.is_empty() {
            return Ok(self.count(log_key));
        }
        let path = self.root.join(&rel);
        let dir = path.parent().expect("log lives in a directory");
        fs::create_dir_all(dir).at(dir)?;
        let bytes = encode_batch(records);
        let verdict = self.fuse.check()?;
        let mut f = OpenOptions::new().create(true).append(true).open(&path).at(&path)?;
        if verdict == Verdict::Tear {
            f.write_all(&bytes[..bytes.len() / 2]).at(&path)?;
            return Err(Error::Crashed);
        }
        f.write_all(&bytes).at(&path)?;
        let seq = self.count(log_key) + records.len() as u64;
        self.counts.insert(log_key.to_string(), seq);
        self.ensure_indexed(log_key, rel)?;
        Ok(seq)
    }

    /// Number of committed records under `log_key`.
    pub fn count(&self, log_key: &str) -> u64 {
        self.counts.get(log_key).copied().unwrap_or(0)
    }

    pub fn read_all(&self, log_key: &str) -> Result<Vec<Vec<u8>>> {
        let path = self.root.join(relative_path(log_key)?);
        match fs::read(&path) {
            Ok(bytes) => Ok(decode_frames(&bytes).0),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
            Err(e) => Err(e).at(&path),
        }
    }

    /// Write a record that never changes afterwards. Writing the same key
    /// twice with the same bytes is a no-op.
    pub fn put(&mut self, key: &str, bytes: &[u8]) -> Result<()> {
        let rel = relative_path(key)?;
        let path = self.root.join(&rel);
        if let Ok(existing) = fs::read(&path) {
            if existing != bytes {
                return Err(Error::CorruptStore(format!("record {key} already exists with other content")));
            }
            return self.ensure_indexed(key, rel);
        }
        let dir = path.parent().expect("record lives in a directory");
        fs::create_dir_all(dir).at(dir)?;
        write_atomic(&path, bytes, &self.fuse)?;
        self.ensure_indexed(key, rel)
    }

    pub fn get(&self, key: &str) -> Result<Vec<u8>> {
        let rel = self.index.get(key).ok_or_else(|| Error::not_found(key.to_string()))?;
        let path = self.root.join(rel);
        fs::read(&path).at(&path)
    }

    /// Indexed keys starting with `prefix`, in sorted order.
    pub fn keys(&self, prefix: &str) -> Vec<String> {
        self.index.range(prefix.to_string()..).take_while(|(k, _)| k.starts_with(prefix)).map(|(k, _)| k.clone()).collect()
    }

    pub fn lookup(&self, key: &str) -> Option<&str> {
        self.index.get(key).map(String::as_str)
    }
}
