//! The hosted runtime: an [`Engine`] whose every accepted change is written
//! to a [`Store`], plus the [`Bus`] its connectors listen on.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use ddsflow_core::docmodel::Doc;
use ddsflow_core::enactment::{Engine, Event, Fire, Item};
use ddsflow_core::evolution::{DeltaOp, MigrationReport};
use ddsflow_core::integration::{CommMode, ConnectorSpec, Message, DEAD_LETTER};
use ddsflow_core::metamodel::{Body, DescriptionRecord, VersionRef};
use sha2::{Digest, Sha256};

use crate::error::{Error, IoContext, Result};
use crate::fuse::Fuse;
use crate::store::Store;
use crate::transport::{delivery_order, Bus};

const SPOOL_DIR: &str = "spool";
const VOLATILE_FILE: &str = "inproc.json";
const ARCHIVE_MAGIC: &str = "DDSFLOW-ARCHIVE 1";

/// One message handed to one connector during a step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeliveryRecord {
    pub endpoint: String,
    pub connector: String,
    pub msg_id: String,
    /// `(endpoint, msg id)` of each message the connector emitted.
    pub outbound: Vec<(String, String)>,
}

impl std::fmt::Display for DeliveryRecord {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "deliver {} {} to {}", self.endpoint, self.msg_id, self.connector)?;
        if self.outbound.is_empty() {
            return f.write_str(" (duplicate)");
        }
        for (ep, id) in &self.outbound {
            write!(f, " -> {ep} {id}")?;
        }
        Ok(())
    }
}

pub struct System {
    engine: Engine,
    store: Option<Store>,
    bus: Bus,
    fuse: Fuse,
    /// Events of each item already in the store.
    persisted: BTreeMap<String, usize>,
    stored_descs: BTreeSet<VersionRef>,
    volatile_saved: Option<String>,
}

fn event_bytes(ev: &Event) -> Result<Vec<u8>> {
    Ok(ev.to_canonical()?.into_bytes())
}

fn desc_key(r: &VersionRef) -> String {
    format!("desc/{}/{}", r.name, r.version)
}

fn item_key(id: &str) -> String {
    format!("item/{id}")
}

impl System {
    /// A system without persistence; only INPROC endpoints are available.
    pub fn in_memory() -> Self {
        System {
            engine: Engine::new(),
            store: None,
            bus: Bus::new(),
            fuse: Fuse::new(),
            persisted: BTreeMap::new(),
            stored_descs: BTreeSet::new(),
            volatile_saved: None,
        }
    }

    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        Self::open_with(dir, Fuse::new())
    }

    /// Open the store at `dir`, rebuild every description and item from it
    /// and reattach the spooled endpoints.
    pub fn open_with(dir: impl AsRef<Path>, fuse: Fuse) -> Result<Self> {
        let dir = dir.as_ref();
        let store = Store::open(dir, fuse.clone())?;
        let mut engine = Engine::new();

        let mut descs: Vec<(String, u32, String)> = Vec::new();
        for key in store.keys("desc/") {
            let (name, v) = key["desc/".len()..].rsplit_once('/').expect("desc keys carry a version");
            descs.push((name.to_string(), v.parse().expect("numeric version"), key.clone()));
        }
        descs.sort();
        let mut stored_descs = BTreeSet::new();
        for (_, _, key) in descs {
            let bytes = store.get(&key)?;
            let text = String::from_utf8(bytes).map_err(|e| Error::CorruptStore(format!("{key}: {e}")))?;
            let rec = DescriptionRecord::from_canonical(&text)?;
            stored_descs.insert(engine.restore_description(rec)?);
        }

        let mut persisted = BTreeMap::new();
        for key in store.keys("item/") {
            let log: Vec<Event> = store
                .read_all(&key)?
                .into_iter()
                .map(|b| {
                    let text = String::from_utf8(b).map_err(|e| Error::CorruptStore(format!("{key}: {e}")))?;
                    Ok(Event::from_canonical(&text)?)
                })
                .collect::<Result<_>>()?;
            let item = engine.restore_item(&log)?;
            persisted.insert(item.id.clone(), log.len());
        }

        let mut bus = Bus::with_spool(dir.join(SPOOL_DIR), fuse.clone())?;
        let volatile_path = dir.join(VOLATILE_FILE);
        let volatile_saved = match fs::read_to_string(&volatile_path) {
            Ok(text) => {
                let state = serde_json::from_str(&text)
                    .map_err(|e| Error::CorruptStore(format!("{VOLATILE_FILE}: {e}")))?;
                bus.load_volatile(state);
                Some(text)
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
            Err(e) => return Err(e).at(&volatile_path),
        };

        let mut sys = System {
            engine,
            store: Some(store),
            bus,
            fuse,
            persisted,
            stored_descs,
            volatile_saved,
        };
        for (connector, _) in sys.engine.bindings() {
            let spec = sys.engine.connector_spec(&connector)?;
            sys.open_connector_endpoints(&spec)?;
        }
        Ok(sys)
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn bus(&self) -> &Bus {
        &self.bus
    }

    pub fn store(&self) -> Option<&Store> {
        self.store.as_ref()
    }

    pub fn fuse(&self) -> &Fuse {
        &self.fuse
    }

    pub fn item(&self, id: &str) -> Result<&Item> {
        Ok(self.engine.item(id)?)
    }

    fn flush_descs(&mut self) -> Result<()> {
        let Some(store) = self.store.as_mut() else { return Ok(()) };
        for rec in self.engine.registry().records() {
            if self.stored_descs.contains(&rec.reference) {
                continue;
            }
            store.put(&desc_key(&rec.reference), rec.to_canonical()?.as_bytes())?;
            self.stored_descs.insert(rec.reference.clone());
        }
        Ok(())
    }

    fn flush_item(&mut self, id: &str) -> Result<()> {
        let Some(store) = self.store.as_mut() else { return Ok(()) };
        let item = self.engine.item(id)?;
        let done = self.persisted.get(id).copied().unwrap_or(0);
        if item.log.len() == done {
            return Ok(());
        }
        let batch = item.log[done..].iter().map(event_bytes).collect::<Result<Vec<_>>>()?;
        store.append(&item_key(id), &batch)?;
        self.persisted.insert(id.to_string(), item.log.len());
        Ok(())
    }

    pub fn publish(&mut self, name: &str, body: Body) -> Result<VersionRef> {
        let r = self.engine.publish(name, body)?;
        self.flush_descs()?;
        Ok(r)
    }

    pub fn create_item(&mut self, id: &str, desc: &VersionRef) -> Result<&Item> {
        self.engine.instantiate(id, desc)?;
        self.flush_item(id)?;
        self.item(id)
    }

    pub fn fire(&mut self, id: &str, activity: &str, fire: Fire, agent: &str, outcome: Option<Doc>) -> Result<Event> {
        let ev = self.engine.fire(id, activity, fire, agent, outcome)?;
        self.flush_item(id)?;
        Ok(ev)
    }

    pub fn migration_report(&self, id: &str, target: &VersionRef) -> Result<MigrationReport> {
        Ok(self.engine.migration_report(id, target)?)
    }

    pub fn migrate(&mut self, id: &str, target: &VersionRef) -> Result<&Item> {
        self.engine.migrate(id, target)?;
        self.flush_item(id)?;
        self.item(id)
    }

    pub fn adhoc(&mut self, id: &str, op: DeltaOp) -> Result<&Item> {
        self.engine.apply_adhoc(id, op)?;
        self.flush_item(id)?;
        self.item(id)
    }

    fn outbound_mode(&self, spec_mode: CommMode) -> CommMode {
        if self.bus.has_spool() {
            spec_mode
        } else {
            CommMode::Inproc
        }
    }

    fn open_connector_endpoints(&mut self, spec: &ConnectorSpec) -> Result<()> {
        self.bus.ensure(&spec.inbound_endpoint, spec.comm_mode)?;
        let out = self.outbound_mode(spec.comm_mode);
        for r in &spec.routes {
            self.bus.ensure(&r.target_endpoint, out)?;
        }
        let dl = if self.bus.has_spool() { CommMode::File } else { CommMode::Inproc };
        self.bus.ensure(DEAD_LETTER, dl)
    }

    /// Deploy (or redeploy) a connector and open its endpoints.
    pub fn deploy_connector(&mut self, name: &str, spec: ConnectorSpec) -> Result<VersionRef> {
        if spec.comm_mode == CommMode::File && !self.bus.has_spool() {
            return Err(Error::Core(ddsflow_core::Error::Invalid(format!(
                "connector {name} uses FILE transport, which needs a store"
            ))));
        }
        if let Some(mode) = self.bus.mode(&spec.inbound_endpoint) {
            if mode != spec.comm_mode {
                return Err(Error::Core(ddsflow_core::Error::Invalid(format!(
                    "endpoint {} is open as {}",
                    spec.inbound_endpoint,
                    mode.code()
                ))));
            }
        }
        let r = self.engine.deploy_connector(name, spec.clone())?;
        self.flush_descs()?;
        self.flush_item(name)?;
        self.open_connector_endpoints(&spec)?;
        Ok(r)
    }

    pub fn open_endpoint(&mut self, name: &str, mode: CommMode) -> Result<()> {
        self.bus.open_endpoint(name, mode)
    }

    pub fn send(&mut self, endpoint: &str, msg: &Message) -> Result<u64> {
        self.bus.send(endpoint, msg)
    }

    /// Hand at most one pending message to each connector, in an order
    /// fixed by `seed`. Outbound messages are sent before the connector's
    /// events are stored, and the inbound message is acknowledged last, so
    /// a crash anywhere leads to redelivery rather than loss.
    pub fn step(&mut self, seed: u64) -> Result<Vec<DeliveryRecord>> {
        let mut ready = Vec::new();
        for (connector, endpoint) in self.engine.bindings() {
            if self.bus.is_open(&endpoint) && self.bus.peek(&endpoint)?.is_some() {
                ready.push((connector, endpoint));
            }
        }
        let mut out = Vec::new();
        for (connector, endpoint) in delivery_order(&ready, seed) {
            let Some(msg) = self.bus.peek(&endpoint)? else { continue };
            let delivery = self.engine.on_message(&connector, &msg)?;
            let mode = self.outbound_mode(self.engine.connector_spec(&connector)?.comm_mode);
            let mut sent = Vec::new();
            for m in &delivery.outbound {
                self.bus.ensure(&m.endpoint, mode)?;
                self.bus.send(&m.endpoint, m)?;
                sent.push((m.endpoint.clone(), m.id.clone()));
            }
            self.flush_item(&connector)?;
            self.bus.ack(&endpoint)?;
            out.push(DeliveryRecord {
                endpoint,
                connector,
                msg_id: msg.id,
                outbound: sent,
            });
        }
        Ok(out)
    }

    /// Step with seeds `seed, seed+1, …` until no connector has input.
    /// Returns every delivery made.
    pub fn run_until_quiet(&mut self, seed: u64, max_steps: usize) -> Result<Vec<DeliveryRecord>> {
        let mut all = Vec::new();
        for i in 0..max_steps {
            let batch = self.step(seed.wrapping_add(i as u64))?;
            if batch.is_empty() {
                return Ok(all);
            }
            all.extend(batch);
        }
        Err(Error::Core(ddsflow_core::Error::Invalid(format!("bus still busy after {max_steps} steps"))))
    }

    /// The item's log as stored (or as held, without a store).
    pub fn stored_log(&self, id: &str) -> Result<Vec<Event>> {
        match &self.store {
            None => Ok(self.item(id)?.log.clone()),
            Some(store) => {
                let records = store.read_all(&item_key(id))?;
                if records.is_empty() {
                    return Err(Error::not_found(format!("item {id}")));
                }
                records
                    .into_iter()
                    .map(|b| {
                        let text = String::from_utf8(b).map_err(|e| Error::CorruptStore(e.to_string()))?;
                        Ok(Event::from_canonical(&text)?)
                    })
                    .collect()
            }
        }
    }

    /// Rebuild the item from its stored log and check it against the live
    /// item.
    pub fn replay(&self, id: &str) -> Result<Item> {
        let log = self.stored_log(id)?;
        let item = self.engine.replay(&log)?;
        if item.to_canonical() != self.item(id)?.to_canonical() {
            return Err(Error::Core(ddsflow_core::Error::CorruptLog {
                seq: item.last_seq(),
                detail: "replayed state differs from live state".into(),
            }));
        }
        Ok(item)
    }

    /// Write INPROC queues next to the store so another process can pick
    /// them up. Nothing is written when they have not changed.
    pub fn save_volatile(&mut self) -> Result<()> {
        let Some(store) = &self.store else { return Ok(()) };
        let state = self.bus.volatile_state();
        if state.values().all(|(q, s)| q.is_empty() && s.is_empty()) && self.volatile_saved.is_none() {
            return Ok(());
        }
        let text = serde_json::to_string(&state).map_err(|e| Error::CorruptStore(e.to_string()))?;
        if self.volatile_saved.as_deref() == Some(text.as_str()) {
            return Ok(());
        }
        let path = store.root().join(VOLATILE_FILE);
        fs::write(&path, &text).at(&path)?;
        self.volatile_saved = Some(text);
        Ok(())
    }

    /// Write every file of the store into one archive at `path`; returns
    /// the archive's checksum.
    pub fn snapshot(&mut self, path: impl AsRef<Path>) -> Result<String> {
        self.save_volatile()?;
        let root = self
            .store
            .as_ref()
            .ok_or_else(|| Error::Core(ddsflow_core::Error::Invalid("snapshot needs a store".into())))?
            .root()
            .to_path_buf();
        let mut files = Vec::new();
        collect_files(&root, &root, &mut files)?;
        files.sort();
        let mut body = Vec::new();
        body.extend_from_slice(ARCHIVE_MAGIC.as_bytes());
        body.push(b'\n');
        for rel in &files {
            if let Some(d) = rel.strip_suffix('/') {
                body.extend_from_slice(format!("D {d}\n").as_bytes());
                continue;
            }
            let p = root.join(rel);
            let bytes = fs::read(&p).at(&p)?;
            body.extend_from_slice(format!("F {} {rel}\n", bytes.len()).as_bytes());
            body.extend_from_slice(&bytes);
            body.push(b'\n');
        }
        body.extend_from_slice(format!("END {}\n", files.len()).as_bytes());
        let sum = format!("{:x}", Sha256::digest(&body));
        body.extend_from_slice(format!("SHA256 {sum}\n").as_bytes());
        let path = path.as_ref();
        fs::write(path, &body).at(path)?;
        Ok(sum)
    }

    /// Unpack `archive` into `dir` (which must be empty or absent) and open
    /// the result.
    pub fn restore(archive: impl AsRef<Path>, dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        if dir.exists() && fs::read_dir(dir).at(dir)?.next().is_some() {
            return Err(Error::Core(ddsflow_core::Error::Invalid(format!(
                "restore target {} is not empty",
                dir.display()
            ))));
        }
        let files = read_archive(archive.as_ref())?;
        for (rel, bytes) in files {
            let p = dir.join(rel);
            match bytes {
                None => fs::create_dir_all(&p).at(&p)?,
                Some(bytes) => {
                    let parent = p.parent().expect("archive paths are relative files");
                    fs::create_dir_all(parent).at(parent)?;
                    fs::write(&p, bytes).at(&p)?;
                }
            }
        }
        fs::create_dir_all(dir).at(dir)?;
        Self::open(dir)
    }
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<String>) -> Result<()> {
    for entry in fs::read_dir(dir).at(dir)? {
        let p = entry.at(dir)?.path();
        if p.is_dir() {
            collect_files(root, &p, out)?;
        } else if p.extension().and_then(|e| e.to_str()) != Some("tmp") {
            let rel = p.strip_prefix(root).expect("under root");
            let parts: Vec<&str> = rel.iter().map(|c| c.to_str().expect("store paths are ASCII")).collect();
            out.push(parts.join("/"));
        } else {
            // leftovers of interrupted writes are not state
        }
    }
    // Spool directories may be empty; keep them so endpoints reappear.
    if dir != root && fs::read_dir(dir).at(dir)?.next().is_none() {
        let rel = dir.strip_prefix(root).expect("under root");
        let parts: Vec<&str> = rel.iter().map(|c| c.to_str().expect("store paths are ASCII")).collect();
        out.push(format!("{}/", parts.join("/")));
    }
    Ok(())
}

/// Parse and verify an archive: `(relative path, bytes)` per entry, with
/// `None` for an empty directory.
pub fn read_archive(path: &Path) -> Result<Vec<(PathBuf, Option<Vec<u8>>)>> {
    let data = fs::read(path).at(path)?;
    let corrupt = |m: &str| Error::CorruptArchive(m.to_string());
    let tail_start = data[..data.len().saturating_sub(1)]
        .iter()
        .rposition(|b| *b == b'\n')
        .map(|i| i + 1)
        .ok_or_else(|| corrupt("no checksum line"))?;
    let tail = std::str::from_utf8(&data[tail_start..]).map_err(|_| corrupt("checksum line"))?;
    let want = tail
        .strip_prefix("SHA256 ")
        .and_then(|s| s.strip_suffix('\n'))
        .ok_or_else(|| corrupt("no checksum line"))?;
    let body = &data[..tail_start];
    if format!("{:x}", Sha256::digest(body)) != want {
        return Err(corrupt("checksum mismatch"));
    }
    let mut pos = 0;
    let line = |pos: &mut usize| -> Result<String> {
        let end = body[*pos..].iter().position(|b| *b == b'\n').ok_or_else(|| corrupt("truncated header"))?;
        let s = std::str::from_utf8(&body[*pos..*pos + end]).map_err(|_| corrupt("header encoding"))?.to_string();
        *pos += end + 1;
        Ok(s)
    };
    if line(&mut pos)? != ARCHIVE_MAGIC {
        return Err(corrupt("bad magic"));
    }
    let mut out = Vec::new();
    loop {
        let header = line(&mut pos)?;
        if let Some(n) = header.strip_prefix("END ") {
            if n.parse::<usize>().ok() != Some(out.len()) || pos != body.len() {
                return Err(corrupt("entry count"));
            }
            return Ok(out);
        }
        let safe = |rel: &str| !(rel.is_empty() || rel.starts_with('/') || rel.split('/').any(|c| c == ".." || c == "."));
        if let Some(rel) = header.strip_prefix("D ") {
            if !safe(rel) {
                return Err(corrupt("entry path"));
            }
            out.push((PathBuf::from(rel), None));
            continue;
        }
        let rest = header.strip_prefix("F ").ok_or_else(|| corrupt("entry header"))?;
        let (len, rel) = rest.split_once(' ').ok_or_else(|| corrupt("entry header"))?;
        let len: usize = len.parse().map_err(|_| corrupt("entry length"))?;
        if !safe(rel) {
            return Err(corrupt("entry path"));
        }
        if pos + len + 1 > body.len() || body[pos + len] != b'\n' {
            return Err(corrupt("truncated entry"));
        }
        out.push((PathBuf::from(rel), Some(body[pos..pos + len].to_vec())));
        pos += len + 1;
    }
}
