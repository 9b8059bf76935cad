//! Simulated transport: named endpoints with FIFO queues.
//!
//! INPROC endpoints hold their queue in memory. FILE endpoints spool each
//! message to `<spool>/<endpoint>/NNNNNN.msg` (canonical message text) and
//! rename it to `NNNNNN.done` once consumed, so a restart finds every
//! unconsumed message again.

use std::collections::{BTreeMap, VecDeque};
use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use ddsflow_core::integration::{CommMode, Message};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, IoContext, Result};
use crate::fuse::{Fuse, Verdict};
use crate::store::{decode_segment, encode_segment};

#[derive(Debug)]
struct Endpoint {
    mode: CommMode,
    queue: VecDeque<Message>,
    /// Every message accepted so far, in receipt order (INPROC only; FILE
    /// endpoints read theirs from the spool).
    sent: Vec<Message>,
    spool: Option<PathBuf>,
    next_receipt: u64,
}

#[derive(Debug, Default)]
pub struct Bus {
    endpoints: BTreeMap<String, Endpoint>,
    spool_root: Option<PathBuf>,
    fuse: Fuse,
}

fn spool_number(p: &Path, ext: &str) -> Option<u64> {
    if p.extension().and_then(|e| e.to_str()) != Some(ext) {
        return None;
    }
    p.file_stem()?.to_str()?.parse().ok()
}

/// `(number, path, consumed)` for every spooled message, oldest first.
fn spool_files(dir: &Path) -> Result<Vec<(u64, PathBuf, bool)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).at(dir)? {
        let p = entry.at(dir)?.path();
        if let Some(n) = spool_number(&p, "msg") {
            out.push((n, p, false));
        } else if let Some(n) = spool_number(&p, "done") {
            out.push((n, p, true));
        }
    }
    out.sort();
    Ok(out)
}

fn read_message(p: &Path) -> Result<Message> {
    let text = fs::read_to_string(p).at(p)?;
    Ok(Message::from_canonical(&text)?)
}

impl Bus {
    /// A bus without a spool directory; only INPROC endpoints can be opened.
    pub fn new() -> Self {
        Self::default()
    }

    /// A bus spooling FILE endpoints under `root`. Existing spool
    /// directories are reopened as FILE endpoints.
    pub fn with_spool(root: impl Into<PathBuf>, fuse: Fuse) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).at(&root)?;
        let mut bus = Bus {
            endpoints: BTreeMap::new(),
            spool_root: Some(root.clone()),
            fuse,
        };
        let mut dirs: Vec<PathBuf> = fs::read_dir(&root)
            .at(&root)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect();
        dirs.sort();
        for dir in dirs {
            let Some(name) = dir.file_name().and_then(|n| n.to_str()).and_then(decode_segment) else {
                continue;
            };
            bus.attach_spool(&name, dir)?;
        }
        Ok(bus)
    }

    pub fn has_spool(&self) -> bool {
        self.spool_root.is_some()
    }

    fn attach_spool(&mut self, name: &str, dir: PathBuf) -> Result<()> {
        for entry in fs::read_dir(&dir).at(&dir)? {
            let p = entry.at(&dir)?.path();
            if p.extension().and_then(|e| e.to_str()) == Some("tmp") {
                fs::remove_file(&p).at(&p)?;
            }
        }
        let last = spool_files(&dir)?.last().map_or(0, |(n, _, _)| *n);
        self.endpoints.insert(
            name.to_string(),
            Endpoint {
                mode: CommMode::File,
                queue: VecDeque::new(),
                sent: Vec::new(),
                spool: Some(dir),
                next_receipt: last + 1,
            },
        );
        Ok(())
    }

    pub fn open_endpoint(&mut self, name: &str, mode: CommMode) -> Result<()> {
        if self.endpoints.contains_key(name) {
            return Err(Error::DuplicateEndpoint(name.to_string()));
        }
        match mode {
            CommMode::Inproc => {
                self.endpoints.insert(
                    name.to_string(),
                    Endpoint {
                        mode,
                        queue: VecDeque::new(),
                        sent: Vec::new(),
                        spool: None,
                        next_receipt: 1,
                    },
                );
                Ok(())
            }
            CommMode::File => {
                let root = self.spool_root.as_ref().ok_or_else(|| {
                    Error::Core(ddsflow_core::Error::Invalid(format!("FILE endpoint {name} needs a spool directory")))
                })?;
                let dir = root.join(encode_segment(name));
                fs::create_dir_all(&dir).at(&dir)?;
                self.attach_spool(name, dir)
            }
        }
    }

    /// Open `name` unless it is already open (in any mode).
    pub fn ensure(&mut self, name: &str, mode: CommMode) -> Result<()> {
        if self.endpoints.contains_key(name) {
            return Ok(());
        }
        self.open_endpoint(name, mode)
    }

    pub fn is_open(&self, name: &str) -> bool {
        self.endpoints.contains_key(name)
    }

    pub fn mode(&self, name: &str) -> Option<CommMode> {
        self.endpoints.get(name).map(|e| e.mode)
    }

    pub fn endpoints(&self) -> Vec<(String, CommMode)> {
        self.endpoints.iter().map(|(k, e)| (k.clone(), e.mode)).collect()
    }

    fn endpoint(&self, name: &str) -> Result<&Endpoint> {
        self.endpoints.get(name).ok_or_else(|| Error::not_found(format!("endpoint {name}")))
    }

    fn endpoint_mut(&mut self, name: &str) -> Result<&mut Endpoint> {
        self.endpoints.get_mut(name).ok_or_else(|| Error::not_found(format!("endpoint {name}")))
    }

    /// Enqueue `msg` on `name`; returns the endpoint's receipt number.
    pub fn send(&mut self, name: &str, msg: &Message) -> Result<u64> {
        let fuse = self.fuse.clone();
        let ep = self.endpoint_mut(name)?;
        let mut msg = msg.clone();
        msg.endpoint = name.to_string();
        let receipt = ep.next_receipt;
        match &ep.spool {
            None => {
                ep.queue.push_back(msg.clone());
                ep.sent.push(msg);
            }
            Some(dir) => {
                let tmp = dir.join(format!("{receipt:06}.tmp"));
                let dest = dir.join(format!("{receipt:06}.msg"));
                let text = msg.to_canonical();
                let verdict = fuse.check()?;
                let mut f = File::create(&tmp).at(&tmp)?;
                if verdict == Verdict::Tear {
                    f.write_all(&text.as_bytes()[..text.len() / 2]).at(&tmp)?;
                    return Err(Error::Crashed);
                }
                f.write_all(text.as_bytes()).at(&tmp)?;
                drop(f);
                fs::rename(&tmp, &dest).at(&dest)?;
            }
        }
        ep.next_receipt += 1;
        Ok(receipt)
    }

    /// Oldest unconsumed message on `name`.
    pub fn peek(&self, name: &str) -> Result<Option<Message>> {
        let ep = self.endpoint(name)?;
        match &ep.spool {
            None => Ok(ep.queue.front().cloned()),
            Some(dir) => match spool_files(dir)?.into_iter().find(|(_, _, done)| !done) {
                Some((_, p, _)) => Ok(Some(read_message(&p)?)),
                None => Ok(None),
            },
        }
    }

    /// Mark the oldest unconsumed message on `name` as consumed.
    pub fn ack(&mut self, name: &str) -> Result<()> {
        let fuse = self.fuse.clone();
        let ep = self.endpoint_mut(name)?;
        match &ep.spool {
            None => {
                ep.queue.pop_front();
                Ok(())
            }
            Some(dir) => {
                let Some((n, p, _)) = spool_files(dir)?.into_iter().find(|(_, _, done)| !done) else {
                    return Ok(());
                };
                fuse.check()?;
                let done = dir.join(format!("{n:06}.done"));
                fs::rename(&p, &done).at(&done)
            }
        }
    }

    pub fn pending(&self, name: &str) -> Result<Vec<Message>> {
        let ep = self.endpoint(name)?;
        match &ep.spool {
            None => Ok(ep.queue.iter().cloned().collect()),
            Some(dir) => spool_files(dir)?.into_iter().filter(|(_, _, d)| !d).map(|(_, p, _)| read_message(&p)).collect(),
        }
    }

    /// Every message ever accepted by `name`, consumed or not, in receipt
    /// order.
    pub fn history(&self, name: &str) -> Result<Vec<Message>> {
        let ep = self.endpoint(name)?;
        match &ep.spool {
            None => Ok(ep.sent.clone()),
            Some(dir) => spool_files(dir)?.into_iter().map(|(_, p, _)| read_message(&p)).collect(),
        }
    }

    /// In-memory queues, for carrying INPROC state across processes.
    pub fn volatile_state(&self) -> BTreeMap<String, (Vec<Message>, Vec<Message>)> {
        self.endpoints
            .iter()
            .filter(|(_, e)| e.spool.is_none())
            .map(|(k, e)| (k.clone(), (e.queue.iter().cloned().collect(), e.sent.clone())))
            .collect()
    }

    pub fn load_volatile(&mut self, state: BTreeMap<String, (Vec<Message>, Vec<Message>)>) {
        for (name, (queue, sent)) in state {
            if self.endpoints.get(&name).is_some_and(|e| e.spool.is_some()) {
                continue;
            }
            self.endpoints.insert(
                name,
                Endpoint {
                    mode: CommMode::Inproc,
                    next_receipt: sent.len() as u64 + 1,
                    queue: queue.into(),
                    sent,
                    spool: None,
                },
            );
        }
    }
}

/// Order in which one step serves the ready endpoints. A pure function of
/// the ready list and the seed.
pub fn delivery_order<T: Clone>(ready: &[T], seed: u64) -> Vec<T> {
    let mut v = ready.to_vec();
    v.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use ddsflow_core::docmodel::Format;

    fn msg(id: &str) -> Message {
        Message::new(id, "", "amount=1", Format::FlatRecord)
    }

    #[test]
    fn inproc_fifo_and_receipts() {
        let mut bus = Bus::new();
        bus.open_endpoint("orders.in", CommMode::Inproc).unwrap();
        assert!(bus.pending("orders.in").unwrap().is_empty());
        assert_eq!(bus.open_endpoint("orders.in", CommMode::Inproc).unwrap_err().code(), "DUPLICATE_ENDPOINT");
        let receipts: Vec<u64> = ["a", "b", "c"].iter().map(|id| bus.send("orders.in", &msg(id)).unwrap()).collect();
        assert_eq!(receipts, [1, 2, 3]);
        assert_eq!(bus.peek("orders.in").unwrap().unwrap().id, "a");
        bus.ack("orders.in").unwrap();
        assert_eq!(bus.peek("orders.in").unwrap().unwrap().id, "b");
        assert_eq!(bus.history("orders.in").unwrap().len(), 3);
        assert_eq!(bus.send("nowhere", &msg("x")).unwrap_err().code(), "NOT_FOUND");
        assert!(bus.open_endpoint("f", CommMode::File).is_err());
    }

    #[test]
    fn file_spool_layout() {
        let dir = tempfile::tempdir().unwrap();
        let mut bus = Bus::with_spool(dir.path(), Fuse::new()).unwrap();
        bus.open_endpoint("orders.in", CommMode::File).unwrap();
        let spool = dir.path().join("orders.in");
        assert_eq!(fs::read_dir(&spool).unwrap().count(), 0);
        let m = msg("a");
        assert_eq!(bus.send("orders.in", &m).unwrap(), 1);
        let mut expect = m.clone();
        expect.endpoint = "orders.in".into();
        assert_eq!(fs::read_to_string(spool.join("000001.msg")).unwrap(), expect.to_canonical());
        bus.send("orders.in", &msg("b")).unwrap();
        bus.ack("orders.in").unwrap();
        assert!(spool.join("000001.done").exists());

        let bus = Bus::with_spool(dir.path(), Fuse::new()).unwrap();
        assert_eq!(bus.mode("orders.in"), Some(CommMode::File));
        assert_eq!(bus.peek("orders.in").unwrap().unwrap().id, "b");
        assert_eq!(bus.history("orders.in").unwrap().iter().map(|m| m.id.as_str()).collect::<Vec<_>>(), ["a", "b"]);
    }

    #[test]
    fn torn_spool_write_leaves_no_message() {
        let dir = tempfile::tempdir().unwrap();
        let fuse = Fuse::new();
        let mut bus = Bus::with_spool(dir.path(), fuse.clone()).unwrap();
        bus.open_endpoint("q", CommMode::File).unwrap();
        fuse.arm(1, true);
        assert!(bus.send("q", &msg("a")).is_err());
        fuse.disarm();
        let mut bus = Bus::with_spool(dir.path(), fuse).unwrap();
        assert!(bus.pending("q").unwrap().is_empty());
        assert_eq!(bus.send("q", &msg("a")).unwrap(), 1);
    }

    #[test]
    fn order_depends_only_on_seed() {
        let ready = ["a", "b", "c", "d", "e"];
        assert_eq!(delivery_order(&ready, 7), delivery_order(&ready, 7));
        let mut sorted = delivery_order(&ready, 7);
        sorted.sort();
        assert_eq!(sorted, ready);
    }
}
