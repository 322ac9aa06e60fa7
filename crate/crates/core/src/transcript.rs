//! Append-only per-node observation logs.
//!
//! Every byte string, key, measurement record and announcement a node holds
//! is logged here; the compromise oracle and the leakage checks run on these
//! logs only. Protocol-internal bulk records (announcements, measurement and
//! preparation records) may be stored as a SHA-256 commitment instead of in
//! full, see [`Detail`].

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Plaintext,
    Ciphertext,
    PublicKey,
    SecretKey,
    SessionKey,
    OtpWire,
    Label,
    Announcement,
    Measurement,
    Preparation,
}

impl RecordKind {
    pub fn name(self) -> &'static str {
        match self {
            RecordKind::Plaintext => "plaintext",
            RecordKind::Ciphertext => "ciphertext",
            RecordKind::PublicKey => "public_key",
            RecordKind::SecretKey => "secret_key",
            RecordKind::SessionKey => "session_key",
            RecordKind::OtpWire => "otp_wire",
            RecordKind::Label => "label",
            RecordKind::Announcement => "announcement",
            RecordKind::Measurement => "measurement",
            RecordKind::Preparation => "preparation",
        }
    }

    /// Protocol bookkeeping that may be committed to by digest.
    pub fn is_bulk(self) -> bool {
        matches!(
            self,
            RecordKind::Announcement | RecordKind::Measurement | RecordKind::Preparation
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Detail {
    /// Every record stored verbatim.
    Full,
    /// Bulk records stored as SHA-256 digests; data records verbatim.
    #[default]
    Summary,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Route {
    Local,
    Sent { to: String },
    Received { from: String },
    Relayed { from: String, to: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    pub time: u64,
    pub seq: u64,
    pub kind: RecordKind,
    pub route: Route,
    pub data: Vec<u8>,
    /// `data` is the SHA-256 of the observation rather than the observation.
    pub digested: bool,
}

impl Record {
    fn tag(&self) -> String {
        let mut t = self.kind.name().to_string();
        if self.digested {
            t.push_str("#sha256");
        }
        match &self.route {
            Route::Local => {}
            Route::Sent { to } => {
                let _ = write!(t, ">{to}");
            }
            Route::Received { from } => {
                let _ = write!(t, "<{from}");
            }
            Route::Relayed { from, to } => {
                let _ = write!(t, "<{from}>{to}");
            }
        }
        t
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NodeTranscript {
    node: String,
    records: Vec<Record>,
}

impl NodeTranscript {
    pub fn node(&self) -> &str {
        &self.node
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    /// All verbatim data of `kind`, concatenated in log order.
    pub fn stream(&self, kind: RecordKind) -> Vec<u8> {
        self.records
            .iter()
            .filter(|r| r.kind == kind && !r.digested)
            .flat_map(|r| r.data.iter().copied())
            .collect()
    }

    pub fn has_kind(&self, kind: RecordKind) -> bool {
        self.records.iter().any(|r| r.kind == kind)
    }

    /// Whether any record (or run of same-kind records) contains `needle`.
    pub fn contains(&self, needle: &[u8]) -> bool {
        self.kinds()
            .into_iter()
            .any(|k| contains_subslice(&self.stream(k), needle))
    }

    /// Counts how many of `blocks` occur anywhere in the verbatim data.
    /// All blocks must have the same length.
    pub fn count_blocks(&self, blocks: &[&[u8]]) -> usize {
        let Some(width) = blocks.first().map(|b| b.len()) else {
            return 0;
        };
        let prefix = width.min(8);
        let key = |w: &[u8]| {
            let mut k = [0u8; 8];
            k[..prefix].copy_from_slice(&w[..prefix]);
            u64::from_le_bytes(k)
        };
        let prefixes: HashSet<u64> = blocks.iter().map(|b| key(b)).collect();
        let wanted: HashSet<&[u8]> = blocks.iter().copied().collect();
        let mut found: HashSet<&[u8]> = HashSet::new();
        for k in self.kinds() {
            let s = self.stream(k);
            if s.len() < width {
                continue;
            }
            for w in s.windows(width) {
                if !prefixes.contains(&key(w)) {
                    continue;
                }
                if let Some(b) = wanted.get(w) {
                    found.insert(b);
                }
            }
        }
        found.len()
    }

    fn kinds(&self) -> Vec<RecordKind> {
        let mut ks: Vec<RecordKind> = Vec::new();
        for r in &self.records {
            if !ks.contains(&r.kind) {
                ks.push(r.kind);
            }
        }
        ks
    }

    /// Text log: one line per record, `node time kind hex`.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            let hex = if r.data.is_empty() {
                "-".to_string()
            } else {
                hex::encode(&r.data)
            };
            let _ = writeln!(out, "{} {} {} {}", self.node, r.time, r.tag(), hex);
        }
        out
    }
}

fn contains_subslice(hay: &[u8], needle: &[u8]) -> bool {
    needle.is_empty() || hay.windows(needle.len()).any(|w| w == needle)
}

/// Transcripts for every node of a run, with a shared logical clock.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Transcripts {
    detail: Detail,
    nodes: BTreeMap<String, NodeTranscript>,
    time: u64,
    seq: u64,
}

impl Transcripts {
    pub fn new<I, S>(nodes: I, detail: Detail) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let nodes = nodes
            .into_iter()
            .map(|n| {
                let node = n.into();
                (
                    node.clone(),
                    NodeTranscript {
                        node,
                        records: Vec::new(),
                    },
                )
            })
            .collect();
        Self {
            detail,
            nodes,
            time: 0,
            seq: 0,
        }
    }

    pub fn set_time(&mut self, time: u64) {
        self.time = time;
    }

    pub fn time(&self) -> u64 {
        self.time
    }

    pub fn log(&mut self, node: &str, kind: RecordKind, data: &[u8]) {
        self.log_routed(node, kind, Route::Local, data);
    }

    pub fn log_routed(&mut self, node: &str, kind: RecordKind, route: Route, data: &[u8]) {
        let digested = self.detail == Detail::Summary && kind.is_bulk();
        let data = if digested {
            Sha256::digest(data).to_vec()
        } else {
            data.to_vec()
        };
        let record = Record {
            time: self.time,
            seq: self.seq,
            kind,
            route,
            data,
            digested,
        };
        self.seq += 1;
        self.nodes
            .entry(node.to_string())
            .or_insert_with(|| NodeTranscript {
                node: node.to_string(),
                records: Vec::new(),
            })
            .records
            .push(record);
    }

    pub fn get(&self, node: &str) -> Option<&NodeTranscript> {
        self.nodes.get(node)
    }

    pub fn iter(&self) -> impl Iterator<Item = &NodeTranscript> {
        self.nodes.values()
    }

    /// Writes `transcript_<node>.log` for every node; returns the file names.
    pub fn write_logs(&self, dir: &Path) -> io::Result<Vec<PathBuf>> {
        let mut files = Vec::new();
        for t in self.nodes.values() {
            let name = format!("transcript_{}.log", t.node);
            fs::write(dir.join(&name), t.render())?;
            files.push(PathBuf::from(name));
        }
        Ok(files)
    }
}
