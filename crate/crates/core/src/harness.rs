//! Scenario files, runs and reports.
//!
//! A scenario is a JSON document. [`validate_scenario`] parses it strictly
//! (unknown fields are errors), fills defaults and checks cross-references;
//! every error carries the path of the offending field. [`run_scenario`]
//! derives all randomness from the scenario seed and returns a report whose
//! JSON serialization is byte-stable.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rand::RngCore;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::channel::{ChannelModel, EveStrategy, HopId, Medium};
use crate::fec::{LdpcCode, LdpcParams};
use crate::network::{
    compromise_node, find_route, srn_send, trn_send, AttackerTools, Compromise, KeyRing, Link,
    LocalizationParams, Mode, Node, NodeRole, RelayConfig, SendResult, Topology, Verdict,
};
use crate::pqc::{keygen, LweKeypair, LweParams, PublicKey, SecretKey, BLOCK_BYTES};
use crate::qsdc::{ProtocolParams, SessionStatus};
use crate::streams::{Streams, CLASSES};
use crate::transcript::Detail;

/// Bundled scenarios as `(name, JSON source)`.
pub const BUNDLED: &[(&str, &str)] = &[
    ("fig4_demo", include_str!("../scenarios/fig4_demo.json")),
    ("eve_hop1", include_str!("../scenarios/eve_hop1.json")),
    ("eve_hop2", include_str!("../scenarios/eve_hop2.json")),
    ("trn_baseline", include_str!("../scenarios/trn_baseline.json")),
    ("noiseless_smoke", include_str!("../scenarios/noiseless_smoke.json")),
];

pub fn bundled(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

const MAX_PAYLOAD: usize = 64 << 20;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    /// Dotted path of the offending field, `.` for the document itself.
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

fn err(path: impl Into<String>, message: impl Into<String>) -> ConfigError {
    ConfigError {
        path: path.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub id: String,
    #[serde(default = "default_role")]
    pub role: NodeRole,
}

fn default_role() -> NodeRole {
    NodeRole::Repeater
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    /// Hop id; defaults to `<a>-<b>`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub a: String,
    pub b: String,
    #[serde(default = "default_medium")]
    pub medium: Medium,
    #[serde(default)]
    pub length_km: f64,
    /// Defaults to 0.2 dB/km in fiber and 0 in free space.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attenuation_db_per_km: Option<f64>,
    #[serde(default)]
    pub fixed_loss_db: f64,
    /// Defaults to the medium's distance-dependent noise profile.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depolarizing_prob: Option<f64>,
    /// Target error rate per transit, as an alternative to `depolarizing_prob`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qber: Option<f64>,
}

fn default_medium() -> Medium {
    Medium::Fiber
}

impl LinkSpec {
    pub fn hop_id(&self) -> String {
        self.id.clone().unwrap_or_else(|| format!("{}-{}", self.a, self.b))
    }

    pub fn channel(&self) -> ChannelModel {
        let attenuation = self.attenuation_db_per_km.unwrap_or(match self.medium {
            Medium::Fiber => 0.2,
            Medium::FreeSpace => 0.0,
        });
        let depolarizing = match (self.depolarizing_prob, self.qber) {
            (Some(p), _) => p,
            (None, Some(q)) => ChannelModel::depolarizing_for_qber(q),
            (None, None) => self.medium.default_depolarizing(self.length_km),
        };
        ChannelModel {
            label: HopId::new(self.hop_id()),
            medium: self.medium,
            length_km: self.length_km,
            attenuation_db_per_km: attenuation,
            fixed_loss_db: self.fixed_loss_db,
            depolarizing_prob: depolarizing,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySpec {
    pub nodes: Vec<NodeSpec>,
    #[serde(default)]
    pub links: Vec<LinkSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouteSpec {
    pub src: String,
    pub dst: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FecSpec {
    pub n: usize,
    pub k: usize,
    pub column_weight: usize,
    pub row_weight: usize,
    pub seed: u64,
    pub max_iterations: u32,
    pub codewords_per_frame: usize,
}

impl Default for FecSpec {
    fn default() -> Self {
        let p = LdpcParams::default();
        Self {
            n: p.n,
            k: p.k,
            column_weight: p.column_weight,
            row_weight: p.row_weight,
            seed: p.seed,
            max_iterations: p.max_iterations,
            codewords_per_frame: 8,
        }
    }
}

impl FecSpec {
    pub fn ldpc(&self) -> LdpcParams {
        LdpcParams {
            n: self.n,
            k: self.k,
            column_weight: self.column_weight,
            row_weight: self.row_weight,
            seed: self.seed,
            max_iterations: self.max_iterations,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PayloadSpec {
    /// Random bytes from the scenario's payload stream.
    Random { length: usize },
    Hex(String),
    Text(String),
    /// Path, relative to the scenario file when it was loaded from one.
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KeySpec {
    pub public: PathBuf,
    pub secret: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_name")]
    pub name: String,
    pub seed: u64,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    pub topology: TopologySpec,
    pub route: RouteSpec,
    #[serde(default)]
    pub protocol: ProtocolParams,
    #[serde(default)]
    pub fec: FecSpec,
    #[serde(default = "default_label_bits")]
    pub label_bits: usize,
    pub payload: PayloadSpec,
    /// Key files per node; nodes without an entry get a generated key pair.
    #[serde(default)]
    pub keys: BTreeMap<String, KeySpec>,
    #[serde(default)]
    pub eve: Vec<EveStrategy>,
    #[serde(default)]
    pub localization: LocalizationParams,
    #[serde(default)]
    pub transcripts: Detail,
    /// Per-class seed overrides for the random sub-streams.
    #[serde(default)]
    pub seeds: BTreeMap<String, u64>,
    #[serde(default = "default_threads")]
    pub threads: usize,
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

fn default_name() -> String {
    "scenario".into()
}

fn default_mode() -> Mode {
    Mode::Srn
}

fn default_label_bits() -> usize {
    32
}

fn default_threads() -> usize {
    1
}

/// Parses and checks a scenario document. All semantic errors are reported
/// together; a document that does not parse yields the parse error alone.
pub fn validate_scenario(raw: &str) -> Result<Scenario, Vec<ConfigError>> {
    let de = &mut serde_json::Deserializer::from_str(raw);
    let scenario: Scenario = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner().to_string();
        // name the missing field itself rather than its parent
        let path = match inner.strip_prefix("missing field `").and_then(|r| r.split('`').next()) {
            Some(field) if path == "." => field.to_string(),
            Some(field) => format!("{path}.{field}"),
            None => path,
        };
        vec![err(path, inner)]
    })?;
    let errors = scenario.check();
    if errors.is_empty() {
        Ok(scenario)
    } else {
        Err(errors)
    }
}

/// Loads a scenario from a file, or from the bundled set when `name` is not
/// an existing path.
pub fn load_scenario(name: &str) -> Result<Scenario, Vec<ConfigError>> {
    let path = Path::new(name);
    if path.exists() {
        let raw = fs::read_to_string(path).map_err(|e| vec![err(".", format!("{name}: {e}"))])?;
        let mut s = validate_scenario(&raw)?;
        s.base_dir = path.parent().map(Path::to_path_buf);
        Ok(s)
    } else if let Some(raw) = bundled(name) {
        validate_scenario(raw)
    } else {
        Err(vec![err(
            ".",
            format!("`{name}` is neither a file nor a bundled scenario"),
        )])
    }
}

impl Scenario {
    fn check(&self) -> Vec<ConfigError> {
        let mut errors = Vec::new();
        let mut ids: Vec<&str> = Vec::new();
        if self.topology.nodes.is_empty() {
            errors.push(err("topology.nodes", "at least two nodes are required"));
        }
        for (i, n) in self.topology.nodes.iter().enumerate() {
            if n.id.is_empty() {
                errors.push(err(format!("topology.nodes[{i}].id"), "must not be empty"));
            } else if ids.contains(&n.id.as_str()) {
                errors.push(err(format!("topology.nodes[{i}].id"), format!("duplicate node `{}`", n.id)));
            }
            ids.push(&n.id);
        }
        let mut hop_ids: Vec<String> = Vec::new();
        for (i, l) in self.topology.links.iter().enumerate() {
            let at = |f: &str| format!("topology.links[{i}].{f}");
            let hop = l.hop_id();
            for (f, end) in [("a", &l.a), ("b", &l.b)] {
                if !ids.contains(&end.as_str()) {
                    errors.push(err(at(f), format!("unknown node `{end}` (link {hop})")));
                }
            }
            if l.a == l.b {
                errors.push(err(at("b"), format!("link {hop} connects `{}` to itself", l.a)));
            }
            for (f, v) in [
                ("length_km", Some(l.length_km)),
                ("attenuation_db_per_km", l.attenuation_db_per_km),
                ("fixed_loss_db", Some(l.fixed_loss_db)),
            ] {
                if let Some(v) = v {
                    if !(v.is_finite() && v >= 0.0) {
                        errors.push(err(at(f), format!("must be a non-negative number, got {v} (link {hop})")));
                    }
                }
            }
            if let Some(p) = l.depolarizing_prob {
                if !(0.0..=1.0).contains(&p) {
                    errors.push(err(at("depolarizing_prob"), format!("must lie in [0, 1], got {p} (link {hop})")));
                }
            }
            if let Some(q) = l.qber {
                if !(0.0..=2.0 / 3.0).contains(&q) {
                    errors.push(err(at("qber"), format!("must lie in [0, 2/3], got {q} (link {hop})")));
                }
                if l.depolarizing_prob.is_some() {
                    errors.push(err(at("qber"), format!("conflicts with depolarizing_prob (link {hop})")));
                }
            }
            if hop_ids.contains(&hop) {
                errors.push(err(at("id"), format!("duplicate hop id `{hop}`")));
            }
            hop_ids.push(hop);
        }
        for (f, node) in [("route.src", &self.route.src), ("route.dst", &self.route.dst)] {
            if !ids.contains(&node.as_str()) {
                errors.push(err(f, format!("unknown node `{node}`")));
            }
        }
        if self.route.src == self.route.dst {
            errors.push(err("route.dst", "must differ from route.src"));
        }
        if errors.is_empty() {
            match self.topology() {
                Ok(t) => {
                    if let Err(e) = find_route(&t, &self.route.src, &self.route.dst) {
                        errors.push(err("route", e.to_string()));
                    }
                }
                Err(e) => errors.push(err("topology", e.to_string())),
            }
        }
        if let Err(e) = self.protocol.validate() {
            errors.push(err("protocol", e.to_string()));
        }
        if self.protocol.threshold <= 0.0 {
            errors.push(err("protocol.threshold", "must be positive"));
        }
        let f = &self.fec;
        if f.n == 0 || f.row_weight == 0 || f.column_weight == 0 {
            errors.push(err("fec", "n, row_weight and column_weight must be positive"));
        } else if (f.n * f.column_weight) % f.row_weight != 0 {
            errors.push(err("fec.n", "n × column_weight must be divisible by row_weight"));
        } else if f.k + f.n * f.column_weight / f.row_weight != f.n {
            errors.push(err(
                "fec.k",
                format!("must equal n − n·column_weight/row_weight = {}", f.n - f.n * f.column_weight / f.row_weight),
            ));
        }
        if f.codewords_per_frame == 0 {
            errors.push(err("fec.codewords_per_frame", "must be positive"));
        }
        if self.label_bits > 4096 {
            errors.push(err("label_bits", "must be at most 4096"));
        }
        match &self.payload {
            PayloadSpec::Random { length } if *length > MAX_PAYLOAD => {
                errors.push(err("payload.random.length", format!("must be at most {MAX_PAYLOAD}")));
            }
            PayloadSpec::Hex(h) if hex::decode(h).is_err() => {
                errors.push(err("payload.hex", "not a valid hex string"));
            }
            _ => {}
        }
        for node in self.keys.keys() {
            if !ids.contains(&node.as_str()) {
                errors.push(err(format!("keys.{node}"), "unknown node"));
            }
        }
        for (i, e) in self.eve.iter().enumerate() {
            if !hop_ids.iter().any(|h| h == e.target_hop.as_str()) {
                errors.push(err(format!("eve[{i}].target_hop"), format!("unknown hop `{}`", e.target_hop)));
            }
            if !e.active_window.is_well_formed() {
                errors.push(err(format!("eve[{i}].active_window"), "end precedes start"));
            }
        }
        if !(0.0..=1.0).contains(&self.localization.threshold) {
            errors.push(err("localization.threshold", "must lie in [0, 1]"));
        }
        for class in self.seeds.keys() {
            if !CLASSES.contains(&class.as_str()) {
                errors.push(err(format!("seeds.{class}"), format!("unknown stream class; expected one of {CLASSES:?}")));
            }
        }
        if self.threads == 0 {
            errors.push(err("threads", "must be at least 1"));
        }
        errors
    }

    pub fn topology(&self) -> Result<Topology, crate::network::NetworkError> {
        let nodes = self
            .topology
            .nodes
            .iter()
            .map(|n| Node {
                id: n.id.clone(),
                role: n.role,
            })
            .collect();
        let links = self
            .topology
            .links
            .iter()
            .map(|l| Link {
                a: l.a.clone(),
                b: l.b.clone(),
                channel: l.channel(),
            })
            .collect();
        Topology::new(nodes, links)
    }

    pub fn streams(&self) -> Streams {
        self.seeds
            .iter()
            .fold(Streams::new(self.seed), |s, (class, seed)| s.with_override(class, *seed))
    }

    pub fn relay_config(&self) -> RelayConfig {
        RelayConfig {
            protocol: self.protocol.clone(),
            codewords_per_frame: self.fec.codewords_per_frame,
            label_bits: self.label_bits,
            localization: self.localization.clone(),
            eve: self.eve.clone(),
            detail: self.transcripts,
            threads: self.threads,
        }
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        match &self.base_dir {
            Some(base) if p.is_relative() => base.join(p),
            _ => p.to_path_buf(),
        }
    }

    pub fn payload_bytes(&self) -> Result<Vec<u8>, HarnessError> {
        Ok(match &self.payload {
            PayloadSpec::Random { length } => {
                let mut v = vec![0u8; *length];
                self.streams().rng("payload", "random").fill_bytes(&mut v);
                v
            }
            PayloadSpec::Hex(h) => hex::decode(h).map_err(|e| HarnessError::Config(vec![err("payload.hex", e.to_string())]))?,
            PayloadSpec::Text(t) => t.as_bytes().to_vec(),
            PayloadSpec::File(p) => {
                let path = self.resolve(p);
                fs::read(&path).map_err(|e| {
                    HarnessError::Config(vec![err("payload.file", format!("{}: {e}", path.display()))])
                })?
            }
        })
    }

    /// Key pair of every endpoint, loaded or generated from the PQC stream.
    pub fn key_ring(&self) -> Result<KeyRing, HarnessError> {
        let streams = self.streams();
        let mut ring = KeyRing::new();
        for n in &self.topology.nodes {
            let pair = match self.keys.get(&n.id) {
                Some(spec) => {
                    let read = |field: &str, p: &Path| {
                        let path = self.resolve(p);
                        fs::read(&path).map_err(|e| {
                            HarnessError::Config(vec![err(
                                format!("keys.{}.{field}", n.id),
                                format!("{}: {e}", path.display()),
                            )])
                        })
                    };
                    let bad = |field: &str, e: crate::pqc::PqcError| {
                        HarnessError::Config(vec![err(format!("keys.{}.{field}", n.id), e.to_string())])
                    };
                    LweKeypair {
                        public: PublicKey::from_bytes(&read("public", &spec.public)?)
                            .map_err(|e| bad("public", e))?,
                        secret: SecretKey::from_bytes(&read("secret", &spec.secret)?)
                            .map_err(|e| bad("secret", e))?,
                    }
                }
                None if n.role == NodeRole::Endpoint || n.id == self.route.dst => {
                    let mut rng = streams.rng("pqc", &format!("keygen:{}", n.id));
                    keygen(LweParams::default(), &mut rng)?
                }
                None => continue,
            };
            ring.insert(n.id.clone(), pair);
        }
        Ok(ring)
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid scenario: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Config(Vec<ConfigError>),
    #[error(transparent)]
    Network(#[from] crate::network::NetworkError),
    #[error(transparent)]
    Pqc(#[from] crate::pqc::PqcError),
    #[error(transparent)]
    Fec(#[from] crate::fec::FecError),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    /// `delivered`, `aborted`, `decode_failed` or `lost`.
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hop: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub round: Option<u8>,
    pub payload_bytes: usize,
    pub payload_sha256: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recovered_sha256: Option<String>,
    pub bit_exact: bool,
}

impl Outcome {
    fn new(status: &SessionStatus, payload: &[u8], recovered: Option<&[u8]>) -> Self {
        let (name, hop, round) = match status {
            SessionStatus::Delivered => ("delivered", None, None),
            SessionStatus::Aborted { hop, round } => ("aborted", Some(hop.to_string()), Some(*round)),
            SessionStatus::DecodeFailed => ("decode_failed", None, None),
            SessionStatus::Lost { hop } => ("lost", Some(hop.to_string()), None),
        };
        Self {
            status: name.into(),
            hop,
            round,
            payload_bytes: payload.len(),
            payload_sha256: hex::encode(Sha256::digest(payload)),
            recovered_sha256: recovered.map(|r| hex::encode(Sha256::digest(r))),
            bit_exact: recovered == Some(payload),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QberPoint {
    pub frame: u64,
    pub hop: String,
    pub round: u8,
    pub tested: u64,
    pub errors: u64,
    pub rate: f64,
    pub aborted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopSummary {
    pub hop: String,
    pub from: String,
    pub to: String,
    pub sessions: u32,
    pub aborts: u32,
    pub decode_failures: u32,
    pub retransmissions: u32,
    pub check_rounds: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_qber: Option<f64>,
    pub label_frames: usize,
    pub evidence_bits: u64,
    pub evidence_rate: f64,
    pub verdict: Verdict,
    /// SHA-256 over the digests of every noise realization on this hop.
    pub noise_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub seed: u64,
    pub mode: Mode,
    pub route: Vec<String>,
    pub outcome: Outcome,
    pub frames: u64,
    pub ciphertext_bytes: usize,
    /// Delivered payload bits per simulated frame.
    pub throughput_bits_per_frame: f64,
    pub retransmissions: u32,
    pub aborts: u32,
    pub decode_failures: u32,
    pub flagged_hops: Vec<String>,
    pub hops: Vec<HopSummary>,
    pub qber_series: Vec<QberPoint>,
    pub transcripts: Vec<String>,
}

impl RunReport {
    pub fn is_delivered(&self) -> bool {
        self.outcome.status == "delivered"
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn qber_csv(&self) -> String {
        let mut out = String::from("frame,hop,round,tested,errors,rate,aborted\n");
        for p in &self.qber_series {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                p.frame, p.hop, p.round, p.tested, p.errors, p.rate, p.aborted
            ));
        }
        out
    }
}

/// Report plus the full send result (transcripts, noise records) of a run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub result: SendResult,
    pub payload: Vec<u8>,
}

impl RunOutput {
    /// Writes `report.json`, `qber.csv` and one transcript log per node.
    pub fn write_to(&self, dir: &Path) -> Result<(), HarnessError> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.json"), self.report.to_json())?;
        fs::write(dir.join("qber.csv"), self.report.qber_csv())?;
        self.result.transcripts.write_logs(dir)?;
        Ok(())
    }
}

fn build_code(s: &Scenario) -> Result<LdpcCode, HarnessError> {
    LdpcCode::new(s.fec.ldpc()).map_err(|e| HarnessError::Config(vec![err("fec", e.to_string())]))
}

fn send(s: &Scenario, mode: Mode, payload: &[u8], code: &LdpcCode) -> Result<SendResult, HarnessError> {
    let topo = s.topology()?;
    let cfg = s.relay_config();
    let streams = s.streams();
    Ok(match mode {
        Mode::Srn => {
            let keys = s.key_ring()?;
            srn_send(&topo, &s.route.src, &s.route.dst, payload, &keys, &cfg, code, &streams)?
        }
        Mode::Trn => trn_send(&topo, &s.route.src, &s.route.dst, payload, &cfg, code, &streams)?,
    })
}

pub fn run_scenario(s: &Scenario) -> Result<RunOutput, HarnessError> {
    run_mode(s, s.mode)
}

fn run_mode(s: &Scenario, mode: Mode) -> Result<RunOutput, HarnessError> {
    let payload = s.payload_bytes()?;
    let code = build_code(s)?;
    let result = send(s, mode, &payload, &code)?;
    let report = build_report(s, mode, &payload, &result);
    Ok(RunOutput {
        report,
        result,
        payload,
    })
}

fn build_report(s: &Scenario, mode: Mode, payload: &[u8], r: &SendResult) -> RunReport {
    let mut noise_by_hop: BTreeMap<&str, Sha256> = BTreeMap::new();
    for (hop, rec) in &r.noise {
        noise_by_hop.entry(hop.as_str()).or_default().update(rec.digest);
    }
    let hops = r
        .hops
        .iter()
        .zip(&r.localization)
        .map(|(h, v)| HopSummary {
            hop: h.hop.to_string(),
            from: h.from.clone(),
            to: h.to.clone(),
            sessions: h.sessions,
            aborts: h.aborts,
            decode_failures: h.decode_failures,
            retransmissions: h.retransmissions,
            check_rounds: h.qber.len(),
            mean_qber: h.mean_qber(),
            label_frames: h.labels.len(),
            evidence_bits: v.bits,
            evidence_rate: v.rate,
            verdict: v.verdict,
            noise_digest: noise_by_hop
                .remove(h.hop.as_str())
                .map(|d| hex::encode(d.finalize()))
                .unwrap_or_default(),
        })
        .collect();
    let delivered_bits = if r.status == SessionStatus::Delivered {
        payload.len() as f64 * 8.0
    } else {
        0.0
    };
    RunReport {
        scenario: s.name.clone(),
        seed: s.seed,
        mode,
        route: r.session.path.clone(),
        outcome: Outcome::new(&r.status, payload, r.payload.as_deref()),
        frames: r.frames,
        ciphertext_bytes: r.ciphertext_bytes,
        throughput_bits_per_frame: if r.frames == 0 {
            0.0
        } else {
            delivered_bits / r.frames as f64
        },
        retransmissions: r.retransmissions,
        aborts: r.aborts,
        decode_failures: r.decode_failures,
        flagged_hops: r.flagged().iter().map(ToString::to_string).collect(),
        hops,
        qber_series: r
            .qber_series
            .iter()
            .map(|q| QberPoint {
                frame: q.frame,
                hop: q.hop.to_string(),
                round: q.round,
                tested: q.estimate.tested,
                errors: q.estimate.errors,
                rate: q.estimate.rate,
                aborted: q.estimate.aborts(),
            })
            .collect(),
        transcripts: r
            .transcripts
            .iter()
            .map(|t| format!("transcript_{}.log", t.node()))
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompromiseView {
    RecoveredPlaintext,
    CiphertextOnly,
    Nothing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeComparison {
    pub node: String,
    pub role: NodeRole,
    pub trn: CompromiseView,
    pub trn_recovers_payload: bool,
    pub srn: CompromiseView,
    pub srn_recovers_payload: bool,
    /// Full 32-byte plaintext blocks of the payload found in the SRN transcript.
    pub srn_plaintext_blocks: usize,
    /// Ciphertext blocks of the stream found in the SRN transcript.
    pub srn_ciphertext_blocks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub scenario: String,
    pub seed: u64,
    pub srn_outcome: Outcome,
    pub trn_outcome: Outcome,
    pub plaintext_blocks: usize,
    pub ciphertext_blocks: usize,
    pub nodes: Vec<NodeComparison>,
}

impl CompareReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// TRN exposes the payload at every repeater while SRN repeaters hold
    /// every ciphertext block and no plaintext block.
    pub fn separates(&self) -> bool {
        let repeaters: Vec<_> = self.nodes.iter().filter(|n| n.role == NodeRole::Repeater).collect();
        !repeaters.is_empty()
            && repeaters.iter().all(|n| {
                n.trn == CompromiseView::RecoveredPlaintext
                    && n.trn_recovers_payload
                    && n.srn == CompromiseView::CiphertextOnly
                    && n.srn_plaintext_blocks == 0
                    && n.srn_ciphertext_blocks == self.ciphertext_blocks
            })
    }
}

fn view(c: &Compromise, payload: &[u8]) -> (CompromiseView, bool) {
    match c {
        Compromise::RecoveredPlaintext(p) => (CompromiseView::RecoveredPlaintext, p == payload),
        Compromise::CiphertextOnly(_) => (CompromiseView::CiphertextOnly, false),
        Compromise::Nothing => (CompromiseView::Nothing, false),
    }
}

/// Runs the scenario in both modes and replays a compromise of every node
/// on the route.
pub fn compare_scenario(s: &Scenario) -> Result<(CompareReport, RunOutput, RunOutput), HarnessError> {
    let srn = run_mode(s, Mode::Srn)?;
    let trn = run_mode(s, Mode::Trn)?;
    let payload = &srn.payload;
    let plain: Vec<&[u8]> = payload.chunks_exact(BLOCK_BYTES).collect();
    let ct_stream = srn
        .result
        .transcripts
        .get(&s.route.src)
        .map(|t| t.stream(crate::transcript::RecordKind::Ciphertext))
        .unwrap_or_default();
    let blocks: Vec<&[u8]> = ct_stream
        .get(crate::pqc::STREAM_HEADER_BYTES..)
        .unwrap_or_default()
        .chunks_exact(crate::pqc::CIPHERTEXT_BYTES)
        .collect();
    let roles: BTreeMap<&str, NodeRole> = s.topology.nodes.iter().map(|n| (n.id.as_str(), n.role)).collect();
    let mut nodes = Vec::new();
    for node in &srn.result.session.path {
        let (trn_view, trn_ok) = view(
            &compromise_node(&trn.result.transcripts, &trn.result.session, node, AttackerTools::default())?,
            payload,
        );
        let (srn_view, srn_ok) = view(
            &compromise_node(&srn.result.transcripts, &srn.result.session, node, AttackerTools::default())?,
            payload,
        );
        let t = srn.result.transcripts.get(node).expect("route node");
        let is_endpoint = node == &s.route.src || node == &s.route.dst;
        nodes.push(NodeComparison {
            node: node.clone(),
            role: if is_endpoint {
                NodeRole::Endpoint
            } else {
                roles.get(node.as_str()).copied().unwrap_or(NodeRole::Repeater)
            },
            trn: trn_view,
            trn_recovers_payload: trn_ok,
            srn: srn_view,
            srn_recovers_payload: srn_ok,
            srn_plaintext_blocks: if plain.is_empty() { 0 } else { t.count_blocks(&plain) },
            srn_ciphertext_blocks: if blocks.is_empty() { 0 } else { t.count_blocks(&blocks) },
        });
    }
    let report = CompareReport {
        scenario: s.name.clone(),
        seed: s.seed,
        srn_outcome: srn.report.outcome.clone(),
        trn_outcome: trn.report.outcome.clone(),
        plaintext_blocks: plain.len(),
        ciphertext_blocks: blocks.len(),
        nodes,
    };
    Ok((report, srn, trn))
}
