//! The `ddsflow` command line, usable in-process: [`execute`] returns the
//! exit code and transcript instead of printing.
//!
//! Exit codes: 0 success, 1 domain error, 2 usage error.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use ddsflow_core::canon;
use ddsflow_core::enactment::Fire;
use ddsflow_core::evolution::{DeltaOp, Verdict};
use ddsflow_core::docmodel::{parse_doc, Format};
use ddsflow_core::integration::Message;
use ddsflow_core::metamodel::{Body, DescriptionFile, VersionRef};

use crate::error::{Error, IoContext, Result};
use crate::system::System;

#[derive(Parser, Debug)]
#[command(name = "ddsflow", version, about = "Description-driven workflow and integration engine")]
pub struct Cli {
    /// Store directory.
    #[arg(long, env = "DDSFLOW_STORE", global = true)]
    pub store: Option<PathBuf>,
    /// Create the store directory if it does not exist.
    #[arg(long, global = true)]
    pub init: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Description registry.
    #[command(subcommand)]
    Desc(DescCmd),
    /// Workflow items.
    #[command(subcommand)]
    Item(ItemCmd),
    /// Connectors.
    #[command(subcommand)]
    Connector(ConnectorCmd),
    /// Message bus.
    #[command(subcommand)]
    Bus(BusCmd),
    /// Rebuild an item from its stored log and compare with the live item.
    Replay { id: String },
    /// Write the whole store to an archive.
    Snapshot { archive: PathBuf },
    /// Unpack an archive into the (empty) store directory.
    Restore { archive: PathBuf },
    /// Run a scenario script.
    Run { script: PathBuf },
}

#[derive(Subcommand, Debug)]
pub enum DescCmd {
    Publish { file: PathBuf },
    List,
    Diff { name: String, a: u32, b: u32 },
}

#[derive(Subcommand, Debug)]
pub enum ItemCmd {
    Create { id: String, desc: VersionRef },
    Enabled { id: String },
    Fire {
        id: String,
        activity: String,
        #[arg(value_parser = parse_fire)]
        fire: Fire,
        /// Outcome document in canonical form.
        #[arg(long)]
        outcome: Option<PathBuf>,
        #[arg(long, default_value = "operator")]
        agent: String,
    },
    Migrate {
        id: String,
        version: u32,
        #[arg(long)]
        dry_run: bool,
    },
    Adhoc { id: String, delta: PathBuf },
}

#[derive(Subcommand, Debug)]
pub enum ConnectorCmd {
    Deploy { file: PathBuf },
}

#[derive(Subcommand, Debug)]
pub enum BusCmd {
    Send { endpoint: String, msg: PathBuf },
    Step {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        count: u64,
    },
}

fn parse_fire(s: &str) -> std::result::Result<Fire, String> {
    Fire::parse(s).ok_or_else(|| format!("expected start, complete or skip, got {s}"))
}

/// Result of one command: exit code and everything it printed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub code: i32,
    pub output: String,
}

/// Parse and run `argv` (including the program name). `store` is used when
/// neither `--store` nor `DDSFLOW_STORE` is given.
pub fn execute<I, T>(argv: I, store: Option<&Path>) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            return Outcome { code, output: e.render().to_string() };
        }
    };
    let Some(root) = cli.store.clone().or_else(|| store.map(Path::to_path_buf)) else {
        return Outcome {
            code: 2,
            output: "error: no store given (use --store or DDSFLOW_STORE)\n".into(),
        };
    };
    if let Command::Run { script } = &cli.command {
        return run_script(script, &root, cli.init);
    }
    if let Command::Restore { archive } = &cli.command {
        return finish(System::restore(archive, &root).map(|_| "restored\n".to_string()));
    }
    if !root.is_dir() && !cli.init {
        return Outcome {
            code: 2,
            output: format!("error: store {} does not exist (pass --init to create it)\n", root.display()),
        };
    }
    finish(System::open(&root).and_then(|mut sys| {
        let out = dispatch(&mut sys, cli.command)?;
        sys.save_volatile()?;
        Ok(out)
    }))
}

fn finish(r: Result<String>) -> Outcome {
    match r {
        Ok(output) => Outcome { code: 0, output },
        Err(e) => {
            let mut output = String::new();
            if let Error::Core(ddsflow_core::Error::MigrationInvalid(report)) = &e {
                output.push_str(&canon::to_canonical(report.as_ref()).expect("report encodes"));
                output.push('\n');
            }
            let _ = writeln!(output, "error: {}: {e}", e.code());
            Outcome { code: 1, output }
        }
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).at(path)
}

fn code_of<T: serde::Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(serde_json::Value::String(s)) => s,
        other => format!("{other:?}"),
    }
}

fn list(items: impl IntoIterator<Item = String>) -> String {
    let v: Vec<String> = items.into_iter().collect();
    if v.is_empty() {
        "(none)".into()
    } else {
        v.join(" ")
    }
}

fn dispatch(sys: &mut System, cmd: Command) -> Result<String> {
    let mut out = String::new();
    match cmd {
        Command::Desc(DescCmd::Publish { file }) => {
            let f = DescriptionFile::parse(&read_text(&file)?)?;
            let kind = f.body.kind();
            let r = sys.publish(&f.name, f.body)?;
            let _ = writeln!(out, "published {r} {kind}");
        }
        Command::Desc(DescCmd::List) => {
            for (r, kind) in sys.engine().registry().list() {
                let _ = writeln!(out, "{r} {kind}");
            }
        }
        Command::Desc(DescCmd::Diff { name, a, b }) => {
            let cs = sys.engine().registry().diff(&name, a, b)?;
            let _ = writeln!(out, "{}", canon::to_canonical(&cs)?);
        }
        Command::Item(ItemCmd::Create { id, desc }) => {
            let item = sys.create_item(&id, &desc)?;
            let _ = writeln!(out, "created {} described by {}", item.id, item.described_by);
            let _ = writeln!(out, "enabled: {}", list(item.enabled()));
        }
        Command::Item(ItemCmd::Enabled { id }) => {
            let _ = writeln!(out, "{}", list(sys.item(&id)?.enabled()));
        }
        Command::Item(ItemCmd::Fire { id, activity, fire, outcome, agent }) => {
            let doc = match outcome {
                Some(p) => Some(parse_doc(&read_text(&p)?, Format::Canonical)?),
                None => None,
            };
            let ev = sys.fire(&id, &activity, fire, &agent, doc)?;
            let item = sys.item(&id)?;
            let _ = writeln!(out, "#{} {} {} by {}", ev.seq, code_of(&ev.transition), ev.activity_id, ev.agent);
            let _ = writeln!(out, "status: {} enabled: {}", code_of(&item.status), list(item.enabled()));
        }
        Command::Item(ItemCmd::Migrate { id, version, dry_run }) => {
            let target = VersionRef::new(sys.item(&id)?.described_by.name.clone(), version);
            let report = sys.migration_report(&id, &target)?;
            let _ = writeln!(out, "{}", canon::to_canonical(&report)?);
            if !dry_run {
                if report.verdict == Verdict::Invalid {
                    return Err(ddsflow_core::Error::MigrationInvalid(Box::new(report)).into());
                }
                let item = sys.migrate(&id, &target)?;
                let _ = writeln!(out, "migrated {} to {}", item.id, item.described_by);
            }
        }
        Command::Item(ItemCmd::Adhoc { id, delta }) => {
            let op: DeltaOp = canon::from_canonical(&read_text(&delta)?)?;
            let subject = op.subject().to_string();
            let item = sys.adhoc(&id, op)?;
            let _ = writeln!(out, "adhoc {} on {} ({} deltas)", subject, item.id, item.adhoc_delta.len());
            let _ = writeln!(out, "enabled: {}", list(item.enabled()));
        }
        Command::Connector(ConnectorCmd::Deploy { file }) => {
            let f = DescriptionFile::parse(&read_text(&file)?)?;
            let Body::Connector(spec) = f.body else {
                return Err(ddsflow_core::Error::KindMismatch {
                    name: f.name,
                    expected: ddsflow_core::metamodel::Kind::ConnectorDesc,
                    found: f.body.kind(),
                }
                .into());
            };
            let inbound = spec.inbound_endpoint.clone();
            let r = sys.deploy_connector(&f.name, spec)?;
            let _ = writeln!(out, "deployed {r} on {inbound}");
        }
        Command::Bus(BusCmd::Send { endpoint, msg }) => {
            let m = Message::from_canonical(&read_text(&msg)?)?;
            let receipt = sys.send(&endpoint, &m)?;
            let _ = writeln!(out, "sent {} to {endpoint} receipt {receipt}", m.id);
        }
        Command::Bus(BusCmd::Step { seed, count }) => {
            for i in 0..count {
                let batch = sys.step(seed.wrapping_add(i))?;
                if batch.is_empty() {
                    let _ = writeln!(out, "idle");
                    break;
                }
                for d in batch {
                    let _ = writeln!(out, "{d}");
                }
            }
        }
        Command::Replay { id } => {
            let item = sys.replay(&id)?;
            let _ = writeln!(out, "{}", item.to_canonical());
            let _ = writeln!(out, "replay of {} events matches live state", item.log.len());
        }
        Command::Snapshot { archive } => {
            let sum = sys.snapshot(&archive)?;
            let _ = writeln!(out, "snapshot sha256 {sum}");
        }
        Command::Restore { .. } | Command::Run { .. } => unreachable!("handled before opening the store"),
    }
    Ok(out)
}

/// Run a script: one command per line (without the program name), `#`
/// comments, and `expect: exit N` or `expect: <text>` lines checked against
/// the previous command. Relative file arguments resolve against the
/// script's directory. The transcript echoes each command as `> cmd`.
pub fn run_script(script: &Path, store: &Path, init: bool) -> Outcome {
    let text = match read_text(script) {
        Ok(t) => t,
        Err(e) => return finish(Err(e)),
    };
    let base = script.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut transcript = String::new();
    let mut last: Option<Outcome> = None;
    let mut first = true;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(want) = line.strip_prefix("expect:") {
            let want = want.trim();
            let Some(prev) = &last else {
                let _ = writeln!(transcript, "error: line {}: expect without a command", lineno + 1);
                return Outcome { code: 2, output: transcript };
            };
            let ok = match want.strip_prefix("exit ") {
                Some(n) => n.trim().parse::<i32>().ok() == Some(prev.code),
                None => prev.output.contains(want),
            };
            if !ok {
                let _ = writeln!(transcript, "expect failed at line {}: {want}", lineno + 1);
                return Outcome { code: 1, output: transcript };
            }
            continue;
        }
        let words: Vec<&str> = line.split_whitespace().collect();
        if words[0] == "run" {
            let _ = writeln!(transcript, "error: line {}: scripts cannot nest", lineno + 1);
            return Outcome { code: 2, output: transcript };
        }
        let mut argv = vec!["ddsflow".to_string()];
        if first && init {
            argv.push("--init".into());
        }
        first = false;
        argv.extend(words.iter().map(|w| resolve_arg(&base, w)));
        let _ = writeln!(transcript, "> {line}");
        let outcome = execute_without_env(argv, store);
        transcript.push_str(&outcome.output);
        if outcome.code != 0 {
            let _ = writeln!(transcript, "[exit {}]", outcome.code);
        }
        last = Some(outcome);
    }
    Outcome { code: 0, output: transcript }
}

fn execute_without_env(mut argv: Vec<String>, store: &Path) -> Outcome {
    argv.insert(1, format!("--store={}", store.display()));
    execute(argv, None)
}

/// Words naming existing files relative to the script become paths; the
/// rest pass through.
fn resolve_arg(base: &Path, word: &str) -> String {
    if word.starts_with('-') || Path::new(word).is_absolute() {
        return word.to_string();
    }
    let candidate = base.join(word);
    if candidate.exists() || word.ends_with(".archive") {
        candidate.display().to_string()
    } else {
        word.to_string()
    }
}
