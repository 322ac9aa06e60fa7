//! Topology, routing and end-to-end relay over QSDC hops.
//!
//! Payloads are cut into FEC frames: `codewords_per_frame` LDPC codewords
//! plus a short random label. Frames are forwarded store-and-forward, one
//! frame through the whole route before the next one starts. In the
//! secure-repeater mode each repeater decodes the ciphertext bits, logs them
//! and re-encodes them for the next hop; in the trusted-repeater mode the
//! hops carry one-time-pad keys and the session key is relayed in the clear
//! at every repeater.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{ChannelModel, EveStrategy, HopId, Pass};
use crate::classical::ClassicalChannel;
use crate::events::EventQueue;
use crate::fec::{DecodeOutcome, FecError, LdpcCode};
use crate::pqc::{decrypt_stream, encrypt_stream, CiphertextStream, LweKeypair, PqcError, SecretKey};
use crate::qsdc::{per_use_rate, run_session, FrameTag, HopLink, NoiseRecord, ProtocolParams, QberSample, SessionIo, SessionStatus, DEFAULT_THRESHOLD};
use crate::streams::{SimRng, Streams};
use crate::transcript::{Detail, RecordKind, Route, Transcripts};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("node `{0}` is defined twice")]
    DuplicateNode(String),
    #[error("link `{link}` names unknown node `{node}`")]
    UnknownLinkEndpoint { link: String, node: String },
    #[error("nodes `{0}` and `{1}` are linked more than once")]
    DuplicateLink(String, String),
    #[error("link `{0}` connects a node to itself")]
    SelfLink(String),
    #[error("no route from `{src}` to `{dst}`")]
    Disconnected { src: String, dst: String },
    #[error("source and destination are both `{0}`")]
    SameEndpoint(String),
    #[error("no public key provisioned for `{0}`")]
    MissingPublicKey(String),
    #[error("one-time pad needs a {data}-byte key, got {key} bytes")]
    KeyLength { key: usize, data: usize },
    #[error("node `{0}` did not take part in the session")]
    NotInSession(String),
    #[error(transparent)]
    Pqc(#[from] PqcError),
    #[error(transparent)]
    Fec(#[from] FecError),
    #[error("{0}")]
    Params(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeRole {
    Endpoint,
    Repeater,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub role: NodeRole,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub a: String,
    pub b: String,
    /// Channel of the link; its label is the hop id.
    pub channel: ChannelModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    nodes: Vec<Node>,
    links: Vec<Link>,
    adjacency: BTreeMap<String, BTreeSet<String>>,
}

impl Topology {
    pub fn new(nodes: Vec<Node>, links: Vec<Link>) -> Result<Self, NetworkError> {
        let mut adjacency: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for n in &nodes {
            if adjacency.insert(n.id.clone(), BTreeSet::new()).is_some() {
                return Err(NetworkError::DuplicateNode(n.id.clone()));
            }
        }
        for l in &links {
            let name = l.channel.label.as_str().to_string();
            for end in [&l.a, &l.b] {
                if !adjacency.contains_key(end) {
                    return Err(NetworkError::UnknownLinkEndpoint {
                        link: name,
                        node: end.clone(),
                    });
                }
            }
            if l.a == l.b {
                return Err(NetworkError::SelfLink(name));
            }
            if !adjacency.get_mut(&l.a).unwrap().insert(l.b.clone()) {
                return Err(NetworkError::DuplicateLink(l.a.clone(), l.b.clone()));
            }
            adjacency.get_mut(&l.b).unwrap().insert(l.a.clone());
        }
        Ok(Self {
            nodes,
            links,
            adjacency,
        })
    }

    /// A chain `ids[0] — ids[1] — …` with the given channels, endpoints at
    /// both ends and repeaters in between.
    pub fn chain(ids: &[&str], channels: Vec<ChannelModel>) -> Result<Self, NetworkError> {
        if channels.len() + 1 != ids.len() {
            return Err(NetworkError::Params(format!(
                "{} nodes need {} links, got {}",
                ids.len(),
                ids.len().saturating_sub(1),
                channels.len()
            )));
        }
        let last = ids.len() - 1;
        let nodes = ids
            .iter()
            .enumerate()
            .map(|(i, id)| Node {
                id: id.to_string(),
                role: if i == 0 || i == last {
                    NodeRole::Endpoint
                } else {
                    NodeRole::Repeater
                },
            })
            .collect();
        let links = ids
            .windows(2)
            .zip(channels)
            .map(|(w, channel)| Link {
                a: w[0].to_string(),
                b: w[1].to_string(),
                channel,
            })
            .collect();
        Self::new(nodes, links)
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn contains(&self, id: &str) -> bool {
        self.adjacency.contains_key(id)
    }

    pub fn neighbors(&self, id: &str) -> impl Iterator<Item = &String> {
        self.adjacency.get(id).into_iter().flatten()
    }

    pub fn link_between(&self, a: &str, b: &str) -> Option<&Link> {
        self.links
            .iter()
            .find(|l| (l.a == a && l.b == b) || (l.a == b && l.b == a))
    }
}

/// One directed hop of a route.
#[derive(Debug, Clone, PartialEq)]
pub struct RouteHop {
    pub from: String,
    pub to: String,
    pub channel: ChannelModel,
}

impl RouteHop {
    pub fn id(&self) -> &HopId {
        &self.channel.label
    }
}

/// Shortest route by hop count. Among equally short routes the one whose
/// node sequence is lexicographically smallest wins.
pub fn find_route(topo: &Topology, src: &str, dst: &str) -> Result<Vec<RouteHop>, NetworkError> {
    for n in [src, dst] {
        if !topo.contains(n) {
            return Err(NetworkError::UnknownNode(n.to_string()));
        }
    }
    // distances to dst
    let mut dist: BTreeMap<&str, usize> = BTreeMap::new();
    let mut queue = VecDeque::from([dst]);
    dist.insert(dst, 0);
    while let Some(u) = queue.pop_front() {
        let d = dist[u];
        for v in topo.neighbors(u) {
            if !dist.contains_key(v.as_str()) {
                dist.insert(v.as_str(), d + 1);
                queue.push_back(v.as_str());
            }
        }
    }
    let Some(&total) = dist.get(src) else {
        return Err(NetworkError::Disconnected {
            src: src.to_string(),
            dst: dst.to_string(),
        });
    };
    let mut route = Vec::with_capacity(total);
    let mut at = src;
    while at != dst {
        let next = topo
            .neighbors(at)
            .find(|v| dist.get(v.as_str()) == Some(&(dist[at] - 1)))
            .expect("a neighbor one step closer exists");
        let link = topo.link_between(at, next).expect("adjacent");
        route.push(RouteHop {
            from: at.to_string(),
            to: next.clone(),
            channel: link.channel.clone(),
        });
        at = next;
    }
    Ok(route)
}

pub fn bytes_to_bits(bytes: &[u8]) -> Vec<u8> {
    bytes
        .iter()
        .flat_map(|&b| (0..8).rev().map(move |i| (b >> i) & 1))
        .collect()
}

/// Packs bits MSB first; a trailing partial byte is zero-filled.
pub fn bits_to_bytes(bits: &[u8]) -> Vec<u8> {
    bits.chunks(8)
        .map(|c| c.iter().enumerate().fold(0u8, |acc, (i, &b)| acc | ((b & 1) << (7 - i))))
        .collect()
}

pub fn otp_xor(data: &[u8], key: &[u8]) -> Result<Vec<u8>, NetworkError> {
    if data.len() != key.len() {
        return Err(NetworkError::KeyLength {
            key: key.len(),
            data: data.len(),
        });
    }
    Ok(data.iter().zip(key).map(|(d, k)| d ^ k).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalizationParams {
    pub threshold: f64,
    pub min_bits: u64,
}

impl Default for LocalizationParams {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            min_bits: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelayConfig {
    pub protocol: ProtocolParams,
    pub codewords_per_frame: usize,
    pub label_bits: usize,
    pub localization: LocalizationParams,
    pub eve: Vec<EveStrategy>,
    pub detail: Detail,
    /// Worker threads for codeword decoding; results do not depend on it.
    pub threads: usize,
}

impl Default for RelayConfig {
    fn default() -> Self {
        Self {
            protocol: ProtocolParams::default(),
            codewords_per_frame: 8,
            label_bits: 32,
            localization: LocalizationParams::default(),
            eve: Vec::new(),
            detail: Detail::Summary,
            threads: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub frame: u64,
    /// Label as transmitted by the hop's sender.
    pub sent: Vec<u8>,
    pub received: Vec<u8>,
}

impl LabelRecord {
    pub fn error_positions(&self) -> Vec<usize> {
        self.sent
            .iter()
            .zip(&self.received)
            .enumerate()
            .filter(|(_, (a, b))| a != b)
            .map(|(i, _)| i)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Clean,
    Flagged,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopReport {
    pub hop: HopId,
    pub from: String,
    pub to: String,
    pub labels: Vec<LabelRecord>,
    pub qber: Vec<QberSample>,
    pub sessions: u32,
    pub aborts: u32,
    pub decode_failures: u32,
    pub retransmissions: u32,
    pub verdict: Verdict,
    pub flagged: bool,
}

impl HopReport {
    fn new(hop: &RouteHop) -> Self {
        Self {
            hop: hop.id().clone(),
            from: hop.from.clone(),
            to: hop.to.clone(),
            labels: Vec::new(),
            qber: Vec::new(),
            sessions: 0,
            aborts: 0,
            decode_failures: 0,
            retransmissions: 0,
            verdict: Verdict::Inconclusive,
            flagged: false,
        }
    }

    /// `(compared bits, per-use error rate)` pooled over publicized labels
    /// and check rounds. Label bits cross the hop twice.
    pub fn evidence(&self) -> (u64, f64) {
        let mut by_uses: BTreeMap<u8, (u64, u64)> = BTreeMap::new();
        for l in &self.labels {
            let e = by_uses.entry(2).or_default();
            e.0 += l.sent.len() as u64;
            e.1 += l.error_positions().len() as u64;
        }
        for s in &self.qber {
            let e = by_uses.entry(s.estimate.channel_uses).or_default();
            e.0 += s.estimate.tested;
            e.1 += s.estimate.errors;
        }
        let total: u64 = by_uses.values().map(|v| v.0).sum();
        if total == 0 {
            return (0, 0.0);
        }
        let weighted: f64 = by_uses
            .iter()
            .filter(|(_, v)| v.0 > 0)
            .map(|(&u, &(t, e))| t as f64 * per_use_rate(e as f64 / t as f64, u))
            .sum();
        (total, weighted / total as f64)
    }

    pub fn mean_qber(&self) -> Option<f64> {
        let (t, w) = self.qber.iter().fold((0u64, 0.0), |(t, w), s| {
            (t + s.estimate.tested, w + s.estimate.tested as f64 * s.estimate.rate)
        });
        (t > 0).then(|| w / t as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HopVerdict {
    pub hop: HopId,
    pub bits: u64,
    pub rate: f64,
    pub verdict: Verdict,
}

/// Per-hop verdicts; a hop is flagged when its pooled per-use error rate
/// exceeds the threshold on at least `min_bits` compared bits.
pub fn localize_eavesdropping(reports: &[HopReport], params: &LocalizationParams) -> Vec<HopVerdict> {
    reports
        .iter()
        .map(|r| {
            let (bits, rate) = r.evidence();
            let verdict = if bits < params.min_bits {
                Verdict::Inconclusive
            } else if rate > params.threshold {
                Verdict::Flagged
            } else {
                Verdict::Clean
            };
            HopVerdict {
                hop: r.hop.clone(),
                bits,
                rate,
                verdict,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Srn,
    Trn,
}

/// Who took part in a completed session.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionRecord {
    pub mode: Mode,
    pub path: Vec<String>,
}

impl SessionRecord {
    pub fn src(&self) -> &str {
        &self.path[0]
    }

    pub fn dst(&self) -> &str {
        self.path.last().expect("non-empty path")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SendResult {
    pub status: SessionStatus,
    /// Plaintext as recovered by the destination.
    pub payload: Option<Vec<u8>>,
    pub qber_series: Vec<QberSample>,
    pub hops: Vec<HopReport>,
    pub transcripts: Transcripts,
    pub session: SessionRecord,
    pub frames: u64,
    /// Ciphertext bytes excluding the stream header; zero in TRN mode.
    pub ciphertext_bytes: usize,
    pub retransmissions: u32,
    pub aborts: u32,
    pub decode_failures: u32,
    pub noise: Vec<(HopId, NoiseRecord)>,
    pub localization: Vec<HopVerdict>,
}

impl SendResult {
    pub fn flagged(&self) -> Vec<HopId> {
        self.localization
            .iter()
            .filter(|v| v.verdict == Verdict::Flagged)
            .map(|v| v.hop.clone())
            .collect()
    }
}

/// Provisioned PQC key pairs by node.
pub type KeyRing = BTreeMap<String, LweKeypair>;

struct HopState {
    hop: RouteHop,
    report: HopReport,
    rng: SimRng,
    noise_seed: [u8; 32],
    eve_seed: [u8; 32],
}

#[derive(Debug, Clone, Copy)]
enum Step {
    Hop { frame: u64, hop: usize },
}

struct Relay<'a> {
    cfg: &'a RelayConfig,
    code: &'a LdpcCode,
    pool: Option<rayon::ThreadPool>,
    path: Vec<String>,
    hops: Vec<HopState>,
    log: Transcripts,
    net: ClassicalChannel,
    series: Vec<QberSample>,
    noise: Vec<(HopId, NoiseRecord)>,
    time: u64,
}

struct FrameFailure(SessionStatus);

impl<'a> Relay<'a> {
    fn new(
        topo: &Topology,
        src: &str,
        dst: &str,
        cfg: &'a RelayConfig,
        code: &'a LdpcCode,
        streams: &Streams,
    ) -> Result<Self, NetworkError> {
        if src == dst {
            return Err(NetworkError::SameEndpoint(src.to_string()));
        }
        cfg.protocol
            .validate()
            .map_err(|e| NetworkError::Params(e.to_string()))?;
        if cfg.codewords_per_frame == 0 {
            return Err(NetworkError::Params("codewords_per_frame must be positive".into()));
        }
        let route = find_route(topo, src, dst)?;
        let mut path = vec![src.to_string()];
        path.extend(route.iter().map(|h| h.to.clone()));
        let hops = route
            .into_iter()
            .map(|hop| {
                let id = hop.id().as_str().to_string();
                HopState {
                    report: HopReport::new(&hop),
                    rng: streams.rng("protocol", &id),
                    noise_seed: streams.seed("noise", &id),
                    eve_seed: streams.seed("eve", &id),
                    hop,
                }
            })
            .collect();
        let pool = (cfg.threads > 1)
            .then(|| rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build().ok())
            .flatten();
        Ok(Self {
            cfg,
            code,
            pool,
            log: Transcripts::new(path.iter().cloned(), cfg.detail),
            net: ClassicalChannel::new(path.iter().cloned()),
            path,
            hops,
            series: Vec::new(),
            noise: Vec::new(),
            time: 0,
        })
    }

    fn frame_bits(&self) -> usize {
        self.code.k() * self.cfg.codewords_per_frame
    }

    fn decode_all(&self, words: &[(usize, Vec<u8>)], crossover: f64) -> Vec<(usize, DecodeOutcome)> {
        let run = |(i, w): &(usize, Vec<u8>)| {
            let out = self
                .code
                .fec_decode(w, None, crossover)
                .expect("codeword length matches the code");
            (*i, out)
        };
        match &self.pool {
            Some(pool) => pool.install(|| words.par_iter().map(run).collect()),
            None => words.iter().map(run).collect(),
        }
    }

    /// Carries one frame of information bits (and its label) over hop `h`.
    fn transfer(
        &mut self,
        h: usize,
        frame: u64,
        info: &[u8],
        label: &[u8],
    ) -> Result<(Vec<u8>, Vec<u8>), FrameFailure> {
        let k = self.code.k();
        let codewords: Vec<Vec<u8>> = info
            .chunks(k)
            .map(|c| self.code.fec_encode(c).expect("chunk is k bits"))
            .collect();
        let mut decoded: Vec<Option<Vec<u8>>> = vec![None; codewords.len()];
        let mut label_rx: Option<Vec<u8>> = None;
        let mut last = SessionStatus::DecodeFailed;
        for attempt in 0..=self.cfg.protocol.retries {
            let pending: Vec<usize> = (0..codewords.len()).filter(|&i| decoded[i].is_none()).collect();
            let mut bits: Vec<u8> = pending.iter().flat_map(|&i| codewords[i].iter().copied()).collect();
            let with_label = label_rx.is_none();
            if with_label {
                bits.extend_from_slice(label);
            }
            let state = &mut self.hops[h];
            if attempt > 0 {
                state.report.retransmissions += 1;
            }
            state.report.sessions += 1;
            let link = HopLink {
                channel: &state.hop.channel,
                eve: &self.cfg.eve,
                sender: &state.hop.from,
                receiver: &state.hop.to,
                noise_seed: state.noise_seed,
                eve_seed: state.eve_seed,
            };
            self.log.set_time(self.time);
            let mut io = SessionIo {
                log: &mut self.log,
                net: &mut self.net,
            };
            let out = run_session(
                &link,
                FrameTag { frame, attempt },
                &bits,
                &self.cfg.protocol,
                &mut state.rng,
                &mut io,
            );
            self.time += u64::from(out.batches.max(1));
            let hop_id = state.hop.id().clone();
            state.report.qber.extend(out.qber_series.iter().cloned());
            self.series.extend(out.qber_series.iter().cloned());
            self.noise.extend(out.noise.iter().map(|n| (hop_id.clone(), n.clone())));
            match out.status {
                SessionStatus::Delivered => {
                    let rx = out.payload.expect("delivered sessions carry a payload");
                    let n = self.code.n();
                    if with_label {
                        let lr = rx[pending.len() * n..].to_vec();
                        state.report.labels.push(LabelRecord {
                            frame,
                            sent: label.to_vec(),
                            received: lr.clone(),
                        });
                        label_rx = Some(lr);
                    }
                    let crossover = data_crossover(&out.qber_series);
                    let words: Vec<(usize, Vec<u8>)> = pending
                        .iter()
                        .enumerate()
                        .map(|(j, &i)| (i, rx[j * n..(j + 1) * n].to_vec()))
                        .collect();
                    let mut failed = false;
                    for (i, res) in self.decode_all(&words, crossover) {
                        match res {
                            DecodeOutcome::Decoded { message, .. } => decoded[i] = Some(message),
                            DecodeOutcome::Failure { .. } => failed = true,
                        }
                    }
                    if !failed {
                        let info = decoded.into_iter().flat_map(|d| d.expect("decoded")).collect();
                        return Ok((info, label_rx.expect("label received")));
                    }
                    self.hops[h].report.decode_failures += 1;
                    last = SessionStatus::DecodeFailed;
                }
                status @ SessionStatus::Aborted { .. } => {
                    state.report.aborts += 1;
                    last = status;
                }
                status => last = status,
            }
        }
        Err(FrameFailure(last))
    }

    /// Moves `payload` across hops `hops` frame by frame, store-and-forward.
    /// Each receiving node logs the recovered frame bytes as `kind`. Returns
    /// the bytes recovered at the last node, or the status that stopped it.
    fn carry(
        &mut self,
        hops: std::ops::Range<usize>,
        payload: &[u8],
        kind: RecordKind,
        label_rng: &mut SimRng,
        frame_base: u64,
    ) -> (Result<Vec<u8>, SessionStatus>, u64) {
        let bits = bytes_to_bits(payload);
        let per_frame = self.frame_bits();
        let frames = bits.len().div_ceil(per_frame).max(1) as u64;
        let mut queue: EventQueue<Step> = EventQueue::new();
        let mut frame_data: Vec<u8> = Vec::new();
        let mut frame_label: Vec<u8> = Vec::new();
        let mut received: Vec<u8> = Vec::with_capacity(payload.len());
        queue.schedule(self.time, 0, Step::Hop { frame: 0, hop: hops.start });
        while let Some((_, _, Step::Hop { frame, hop })) = queue.pop() {
            if hop == hops.start {
                let lo = frame as usize * per_frame;
                let hi = (lo + per_frame).min(bits.len());
                frame_data = bits[lo.min(hi)..hi].to_vec();
                frame_data.resize(per_frame, 0);
                frame_label = (0..self.cfg.label_bits).map(|_| label_rng.gen_range(0..2u8)).collect();
            }
            match self.transfer(hop, frame_base + frame, &frame_data, &frame_label) {
                Ok((data, label)) => {
                    let node = self.hops[hop].hop.to.clone();
                    self.log.set_time(self.time);
                    self.log.log(&node, kind, &bits_to_bytes(&data));
                    frame_data = data;
                    frame_label = label;
                    if hop + 1 < hops.end {
                        queue.schedule(self.time, hop as u64 + 1, Step::Hop { frame, hop: hop + 1 });
                    } else {
                        received.extend(bits_to_bytes(&frame_data));
                        if frame + 1 < frames {
                            queue.schedule(self.time, hops.start as u64, Step::Hop { frame: frame + 1, hop: hops.start });
                        }
                    }
                }
                Err(FrameFailure(status)) => return (Err(status), frames),
            }
        }
        received.truncate(payload.len());
        (Ok(received), frames)
    }

    /// Labels are publicized once the packet reached the destination: the
    /// source announces what it sent and every repeater reports what it
    /// received, all to the destination.
    fn publicize_labels(&mut self) {
        let dst = self.path.last().unwrap().clone();
        self.log.set_time(self.time);
        for h in 0..self.hops.len() {
            let from = self.hops[h].hop.from.clone();
            let sent: Vec<u8> = self.hops[h]
                .report
                .labels
                .iter()
                .flat_map(|l| bits_to_bytes(&l.sent))
                .collect();
            if from != dst && !sent.is_empty() {
                self.net
                    .classical_send(&from, &dst, RecordKind::Label, &sent, &mut self.log)
                    .expect("route nodes are registered");
            }
        }
    }

    fn finish(
        mut self,
        mode: Mode,
        status: SessionStatus,
        payload: Option<Vec<u8>>,
        frames: u64,
        ciphertext_bytes: usize,
    ) -> SendResult {
        self.publicize_labels();
        let mut reports: Vec<HopReport> = self.hops.into_iter().map(|h| h.report).collect();
        let localization = localize_eavesdropping(&reports, &self.cfg.localization);
        for (r, v) in reports.iter_mut().zip(&localization) {
            r.verdict = v.verdict;
            r.flagged = v.verdict == Verdict::Flagged;
        }
        SendResult {
            status,
            payload,
            qber_series: self.series,
            retransmissions: reports.iter().map(|r| r.retransmissions).sum(),
            aborts: reports.iter().map(|r| r.aborts).sum(),
            decode_failures: reports.iter().map(|r| r.decode_failures).sum(),
            hops: reports,
            transcripts: self.log,
            session: SessionRecord {
                mode,
                path: self.path,
            },
            frames,
            ciphertext_bytes,
            noise: self.noise,
            localization,
        }
    }
}

/// Raw error rate of the second check round, which sees the same number of
/// transits as the data bits, as a BSC crossover for decoding.
fn data_crossover(samples: &[QberSample]) -> f64 {
    let (t, e) = samples
        .iter()
        .filter(|s| s.round == 2)
        .fold((0u64, 0u64), |(t, e), s| (t + s.estimate.tested, e + s.estimate.errors));
    ((e as f64 + 1.0) / (t as f64 + 2.0)).clamp(1e-3, 0.45)
}

/// Secure-repeater send: encrypt to the destination's public key, relay the
/// ciphertext hop by hop, decrypt at the destination.
#[allow(clippy::too_many_arguments)]
pub fn srn_send(
    topo: &Topology,
    src: &str,
    dst: &str,
    payload: &[u8],
    keys: &KeyRing,
    cfg: &RelayConfig,
    code: &LdpcCode,
    streams: &Streams,
) -> Result<SendResult, NetworkError> {
    let mut relay = Relay::new(topo, src, dst, cfg, code, streams)?;
    let pair = keys
        .get(dst)
        .ok_or_else(|| NetworkError::MissingPublicKey(dst.to_string()))?;
    relay.log.log(src, RecordKind::Plaintext, payload);
    relay.log.log(src, RecordKind::PublicKey, &pair.public.to_bytes());
    relay.log.log(dst, RecordKind::SecretKey, &pair.secret.to_bytes());
    let mut pqc_rng = streams.rng("pqc", "encrypt");
    let stream = encrypt_stream(&pair.public, payload, &mut pqc_rng)?;
    let wire = stream.to_bytes();
    relay.log.log(src, RecordKind::Ciphertext, &wire);
    let mut label_rng = streams.rng("protocol", "labels");
    let hops = relay.hops.len();
    let (res, frames) = relay.carry(0..hops, &wire, RecordKind::Ciphertext, &mut label_rng, 0);
    let ct_bytes = stream.ciphertext_bytes();
    let (status, out) = match res {
        Ok(rx) => match CiphertextStream::from_bytes(&rx).and_then(|s| decrypt_stream(&pair.secret, &s)) {
            Ok(pt) => {
                relay.log.log(dst, RecordKind::Plaintext, &pt);
                (SessionStatus::Delivered, Some(pt))
            }
            Err(_) => (SessionStatus::DecodeFailed, None),
        },
        Err(status) => (status, None),
    };
    Ok(relay.finish(Mode::Srn, status, out, frames, ct_bytes))
}

/// Trusted-repeater send: every hop establishes a random key over its QSDC
/// link, the first hop's key is relayed under one-time pads, and the payload
/// travels one-time-padded with it over the classical channel.
pub fn trn_send(
    topo: &Topology,
    src: &str,
    dst: &str,
    payload: &[u8],
    cfg: &RelayConfig,
    code: &LdpcCode,
    streams: &Streams,
) -> Result<SendResult, NetworkError> {
    let mut relay = Relay::new(topo, src, dst, cfg, code, streams)?;
    relay.log.log(src, RecordKind::Plaintext, payload);
    let mut key_rng = streams.rng("protocol", "keys");
    let mut label_rng = streams.rng("protocol", "labels");
    let m = relay.hops.len();
    let mut keys: Vec<Vec<u8>> = Vec::with_capacity(m);
    let mut frames = 0;
    for h in 0..m {
        let mut key = vec![0u8; payload.len()];
        key_rng.fill_bytes(&mut key);
        let from = relay.hops[h].hop.from.clone();
        relay.log.log(&from, RecordKind::SessionKey, &key);
        let (res, f) = relay.carry(h..h + 1, &key, RecordKind::SessionKey, &mut label_rng, frames);
        frames += f;
        match res {
            Ok(rx) if rx == key => keys.push(key),
            Ok(_) => return Ok(relay.finish(Mode::Trn, SessionStatus::DecodeFailed, None, frames, 0)),
            Err(status) => return Ok(relay.finish(Mode::Trn, status, None, frames, 0)),
        }
    }
    // relay key1: node i sends key1 ⊕ key_{i+1} to node i+1
    let key1 = keys[0].clone();
    relay.log.set_time(relay.time);
    for i in 1..m {
        let (from, to) = (relay.path[i].clone(), relay.path[i + 1].clone());
        relay.log.log(&from, RecordKind::SessionKey, &key1);
        let wire = otp_xor(&key1, &keys[i])?;
        let got = relay
            .net
            .classical_send(&from, &to, RecordKind::OtpWire, &wire, &mut relay.log)
            .expect("route nodes are registered");
        let recovered = otp_xor(&got, &keys[i])?;
        if i + 1 == m {
            relay.log.log(&to, RecordKind::SessionKey, &recovered);
        }
    }
    if m == 1 {
        relay.log.log(dst, RecordKind::SessionKey, &key1);
    }
    let wire = otp_xor(payload, &key1)?;
    let got = relay
        .net
        .send_routed(&relay.path, RecordKind::OtpWire, &wire, &mut relay.log)
        .expect("route nodes are registered");
    let pt = otp_xor(&got, &key1)?;
    relay.log.log(dst, RecordKind::Plaintext, &pt);
    Ok(relay.finish(Mode::Trn, SessionStatus::Delivered, Some(pt), frames, 0))
}

#[derive(Debug, Clone, Copy, Default)]
pub struct AttackerTools<'a> {
    /// The destination's secret key, if the attacker also holds it.
    pub dst_secret_key: Option<&'a SecretKey>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Compromise {
    RecoveredPlaintext(Vec<u8>),
    /// Serialized ciphertext stream held by the node.
    CiphertextOnly(Vec<u8>),
    Nothing,
}

/// What an attacker who seizes `node` after the session learns from its
/// transcript.
pub fn compromise_node(
    transcripts: &Transcripts,
    session: &SessionRecord,
    node: &str,
    tools: AttackerTools<'_>,
) -> Result<Compromise, NetworkError> {
    if !session.path.iter().any(|n| n == node) {
        return Err(NetworkError::NotInSession(node.to_string()));
    }
    let t = transcripts
        .get(node)
        .ok_or_else(|| NetworkError::NotInSession(node.to_string()))?;
    let plain = t.stream(RecordKind::Plaintext);
    if t.has_kind(RecordKind::Plaintext) {
        // endpoints hold the plaintext itself; the source logs it once
        let first = t
            .records()
            .iter()
            .find(|r| r.kind == RecordKind::Plaintext)
            .map(|r| r.data.clone())
            .unwrap_or(plain);
        return Ok(Compromise::RecoveredPlaintext(first));
    }
    match session.mode {
        Mode::Trn => {
            let key1 = t
                .records()
                .iter()
                .rev()
                .find(|r| r.kind == RecordKind::SessionKey)
                .map(|r| r.data.clone());
            let wire = t
                .records()
                .iter()
                // only the payload travels source to destination through
                // every repeater; key relays are single-hop
                .find(|r| r.kind == RecordKind::OtpWire && matches!(r.route, Route::Relayed { .. }))
                .map(|r| r.data.clone());
            match (key1, wire) {
                (Some(k), Some(w)) => Ok(otp_xor(&w, &k)
                    .map(Compromise::RecoveredPlaintext)
                    .unwrap_or(Compromise::Nothing)),
                _ => Ok(Compromise::Nothing),
            }
        }
        Mode::Srn => {
            if !t.has_kind(RecordKind::Ciphertext) {
                return Ok(Compromise::Nothing);
            }
            let mut held = t.stream(RecordKind::Ciphertext);
            if let Some(len) = CiphertextStream::serialized_len(&held) {
                held.truncate(len);
            }
            let own_sk = t
                .records()
                .iter()
                .find(|r| r.kind == RecordKind::SecretKey)
                .and_then(|r| SecretKey::from_bytes(&r.data).ok());
            let sk = tools.dst_secret_key.cloned().or(own_sk);
            match sk {
                Some(sk) => {
                    let stream = CiphertextStream::from_bytes(&held)?;
                    Ok(Compromise::RecoveredPlaintext(decrypt_stream(&sk, &stream)?))
                }
                None => Ok(Compromise::CiphertextOnly(held)),
            }
        }
    }
}

/// Noise realization digests grouped per hop and pass, for comparing runs.
pub fn noise_fingerprint(noise: &[(HopId, NoiseRecord)]) -> BTreeMap<(String, u64, u32, u32, u8), [u8; 8]> {
    noise
        .iter()
        .map(|(h, r)| {
            let pass = match r.pass {
                Pass::First => 0,
                Pass::Second => 1,
            };
            ((h.as_str().to_string(), r.frame, r.attempt, r.batch, pass), r.digest)
        })
        .collect()
}
