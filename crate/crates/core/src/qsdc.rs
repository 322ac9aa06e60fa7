//! QSDC protocol sessions: the two-step EPR protocol and DL04.
//!
//! A session moves a bit string across one hop. It runs in batches: each
//! batch is a complete protocol round with both security checks, and bits
//! whose carriers were lost in transit are re-queued into the next batch.
//! Loss is sifted positionally before any check: the side that detects a
//! loss announces the positions and both sides drop them.
//!
//! Check bits that crossed the hop twice (DL04 return photons, both halves of
//! an EPR pair) accumulate two independent flip chances. Their estimate is
//! reported per channel use by inverting `r = 2e(1 − e)`, so that both check
//! rounds estimate the same per-transit error rate and share one threshold.

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::channel::{apply_transit, resolve_eve, ChannelModel, EveStrategy, HopId, NoiseDraw, PairHalf, Pass};
use crate::classical::ClassicalChannel;
use crate::quantum::{Basis, BellState, Half, PauliOp, SingleState};
use crate::streams::{keyed_rng, SimRng};
use crate::transcript::{RecordKind, Transcripts};
use crate::PureState;

pub const DEFAULT_THRESHOLD: f64 = 0.057;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QsdcError {
    #[error("message length {0} is odd; pad it before building EPR sequences")]
    OddLength(usize),
    #[error("announced and observed check positions differ")]
    PositionMismatch,
    #[error("invalid protocol parameter: {0}")]
    Params(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    Eqsdc,
    Dl04,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolParams {
    pub kind: ProtocolKind,
    pub threshold: f64,
    /// Fraction of an EPR sequence reserved for check pairs.
    pub check_fraction: f64,
    /// DL04: fraction of surviving forward photons measured for the first check.
    pub forward_check_fraction: f64,
    /// DL04: fraction of encoded positions carrying return check bits.
    pub return_check_fraction: f64,
    /// Expected number of compared bits per check round, at least.
    pub min_check_bits: usize,
    /// Full-session retries after an abort or a decoding failure.
    pub retries: u32,
    /// Batches per session before the hop is declared unusable.
    pub max_batches: u32,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        Self {
            kind: ProtocolKind::Dl04,
            threshold: DEFAULT_THRESHOLD,
            check_fraction: 0.25,
            forward_check_fraction: 0.1,
            return_check_fraction: 0.1,
            min_check_bits: 1000,
            retries: 3,
            max_batches: 64,
        }
    }
}

impl ProtocolParams {
    pub fn validate(&self) -> Result<(), QsdcError> {
        let unit = |name: &str, x: f64| {
            if (0.0..1.0).contains(&x) {
                Ok(())
            } else {
                Err(QsdcError::Params(format!("{name} must lie in [0, 1), got {x}")))
            }
        };
        unit("check_fraction", self.check_fraction)?;
        unit("forward_check_fraction", self.forward_check_fraction)?;
        unit("return_check_fraction", self.return_check_fraction)?;
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(QsdcError::Params(format!("threshold {} outside [0, 1]", self.threshold)));
        }
        if self.max_batches == 0 {
            return Err(QsdcError::Params("max_batches must be positive".into()));
        }
        Ok(())
    }
}

/// Per-transit error rate implied by a raw rate observed after `uses`
/// independent transits.
pub fn per_use_rate(raw: f64, uses: u8) -> f64 {
    match uses {
        0 | 1 => raw,
        2 => {
            let r = raw.clamp(0.0, 0.5);
            (1.0 - (1.0 - 2.0 * r).sqrt()) / 2.0
        }
        n => {
            // 1 − 2r = (1 − 2e)^n
            let r = raw.clamp(0.0, 0.5);
            (1.0 - (1.0 - 2.0 * r).powf(1.0 / n as f64)) / 2.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QberEstimate {
    pub tested: u64,
    pub errors: u64,
    /// Transits each compared bit went through.
    pub channel_uses: u8,
    /// Per-transit error rate; equals `errors / tested` when `channel_uses` is 1.
    pub rate: f64,
    pub threshold: f64,
}

impl QberEstimate {
    pub fn new(tested: u64, errors: u64, channel_uses: u8, threshold: f64) -> Self {
        let raw = if tested == 0 {
            0.0
        } else {
            errors as f64 / tested as f64
        };
        Self {
            tested,
            errors,
            channel_uses,
            rate: per_use_rate(raw, channel_uses),
            threshold,
        }
    }

    pub fn raw_rate(&self) -> f64 {
        if self.tested == 0 {
            0.0
        } else {
            self.errors as f64 / self.tested as f64
        }
    }

    pub fn aborts(&self) -> bool {
        self.rate > self.threshold
    }
}

fn compare(
    announced: &[(usize, u8)],
    observed: &[(usize, u8)],
) -> Result<(u64, u64), QsdcError> {
    if announced.len() != observed.len() {
        return Err(QsdcError::PositionMismatch);
    }
    let mut a = announced.to_vec();
    let mut o = observed.to_vec();
    a.sort_unstable_by_key(|x| x.0);
    o.sort_unstable_by_key(|x| x.0);
    let mut errors = 0;
    for ((pa, va), (po, vo)) in a.iter().zip(&o) {
        if pa != po {
            return Err(QsdcError::PositionMismatch);
        }
        errors += u64::from(va != vo);
    }
    Ok((a.len() as u64, errors))
}

/// Compares announced check values against observed ones, one transit each.
pub fn estimate_qber(
    announced: &[(usize, u8)],
    observed: &[(usize, u8)],
    threshold: f64,
) -> Result<QberEstimate, QsdcError> {
    estimate_qber_uses(announced, observed, threshold, 1)
}

pub fn estimate_qber_uses(
    announced: &[(usize, u8)],
    observed: &[(usize, u8)],
    threshold: f64,
    channel_uses: u8,
) -> Result<QberEstimate, QsdcError> {
    let (tested, errors) = compare(announced, observed)?;
    Ok(QberEstimate::new(tested, errors, channel_uses, threshold))
}

/// Ordered batch of carriers with its check metadata.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantumFrame {
    pub frame_id: u64,
    pub len: usize,
    /// Sorted positions of check carriers.
    pub check_positions: Vec<usize>,
    /// Value at each check position, aligned with `check_positions`.
    pub check_payload: Vec<u8>,
    pub label_bits: Vec<u8>,
}

impl QuantumFrame {
    pub fn message_positions(&self) -> Vec<usize> {
        let mut is_check = vec![false; self.len];
        for &p in &self.check_positions {
            is_check[p] = true;
        }
        (0..self.len).filter(|&p| !is_check[p]).collect()
    }

    fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.frame_id.to_le_bytes());
        out.extend_from_slice(&(self.len as u32).to_le_bytes());
        for (p, v) in self.check_positions.iter().zip(&self.check_payload) {
            out.extend_from_slice(&(*p as u32).to_le_bytes());
            out.push(*v);
        }
        out
    }
}

/// EPR pairs in sequence order. For every pair the first qubit belongs to
/// the a-sequence (kept by the sender) and the second to the b-sequence.
#[derive(Debug)]
pub struct EprSequences {
    pub pairs: Vec<PureState>,
    pub frame: QuantumFrame,
}

impl EprSequences {
    /// Length of the a-sequence, equal to that of the b-sequence.
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

pub fn eqsdc_build_sequences<R: Rng + ?Sized>(
    message_bits: &[u8],
    n_check: usize,
    frame_id: u64,
    rng: &mut R,
) -> Result<EprSequences, QsdcError> {
    if message_bits.len() % 2 != 0 {
        return Err(QsdcError::OddLength(message_bits.len()));
    }
    let len = message_bits.len() / 2 + n_check;
    let mut check_positions = index::sample(rng, len, n_check).into_vec();
    check_positions.sort_unstable();
    let check_payload: Vec<u8> = (0..n_check).map(|_| rng.gen_range(0..4u8)).collect();
    let mut values = vec![0u8; len];
    let mut is_check = vec![false; len];
    for (&p, &v) in check_positions.iter().zip(&check_payload) {
        values[p] = v;
        is_check[p] = true;
    }
    let mut msg = message_bits.chunks_exact(2).map(|c| ((c[0] & 1) << 1) | (c[1] & 1));
    for p in 0..len {
        if !is_check[p] {
            values[p] = msg.next().expect("message pairs fill the non-check slots");
        }
    }
    let pairs = values.iter().map(|&v| PureState::prepare_bell(v)).collect();
    Ok(EprSequences {
        pairs,
        frame: QuantumFrame {
            frame_id,
            len,
            check_positions,
            check_payload,
            label_bits: Vec::new(),
        },
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum SessionStatus {
    Delivered,
    Aborted { hop: HopId, round: u8 },
    DecodeFailed,
    /// Carriers kept getting lost until the batch limit ran out.
    Lost { hop: HopId },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QberSample {
    pub frame: u64,
    pub hop: HopId,
    pub attempt: u32,
    pub batch: u32,
    pub round: u8,
    pub estimate: QberEstimate,
}

/// Protocol milestones, in order, used for ordering assertions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TraceEvent {
    FirstPass { batch: u32, sent: usize, lost: usize },
    Check { batch: u32, round: u8, aborted: bool },
    SecondPass { batch: u32, sent: usize, lost: usize },
    Delivered { batch: u32, units: usize },
}

/// Commitment to the noise realization of one transmission pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NoiseRecord {
    pub frame: u64,
    pub attempt: u32,
    pub batch: u32,
    pub pass: Pass,
    pub positions: usize,
    pub digest: [u8; 8],
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SessionAccounting {
    pub carriers_first_pass: u64,
    pub carriers_second_pass: u64,
    pub check_carriers: u64,
    pub message_carriers: u64,
    /// Payload bits carried by message carriers (lost or not).
    pub message_bits_carried: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionOutcome {
    pub status: SessionStatus,
    /// Delivered bits, one per element, present only when delivered.
    pub payload: Option<Vec<u8>>,
    pub qber_series: Vec<QberSample>,
    pub retransmissions: u32,
    pub batches: u32,
    pub trace: Vec<TraceEvent>,
    pub noise: Vec<NoiseRecord>,
    pub accounting: SessionAccounting,
}

impl SessionOutcome {
    fn empty() -> Self {
        Self {
            status: SessionStatus::Delivered,
            payload: None,
            qber_series: Vec::new(),
            retransmissions: 0,
            batches: 0,
            trace: Vec::new(),
            noise: Vec::new(),
            accounting: SessionAccounting::default(),
        }
    }

    pub fn is_delivered(&self) -> bool {
        self.status == SessionStatus::Delivered
    }
}

/// One hop as seen by a session: channel, attacker and the two endpoints.
#[derive(Debug, Clone, Copy)]
pub struct HopLink<'a> {
    pub channel: &'a ChannelModel,
    pub eve: &'a [EveStrategy],
    /// Holder of the message (encoder in DL04, EPR source in the EPR protocol).
    pub sender: &'a str,
    /// Message destination (photon preparer in DL04).
    pub receiver: &'a str,
    pub noise_seed: [u8; 32],
    pub eve_seed: [u8; 32],
}

impl HopLink<'_> {
    fn hop(&self) -> &HopId {
        &self.channel.label
    }
}

/// Transcripts and classical channel a session writes to.
pub struct SessionIo<'a> {
    pub log: &'a mut Transcripts,
    pub net: &'a mut ClassicalChannel,
}

impl SessionIo<'_> {
    fn announce(&mut self, from: &str, to: &str, payload: &[u8]) {
        self.net
            .classical_send(from, to, RecordKind::Announcement, payload, self.log)
            .expect("session endpoints are registered on the classical channel");
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameTag {
    pub frame: u64,
    pub attempt: u32,
}

fn bitmap(len: usize, set: impl IntoIterator<Item = usize>) -> Vec<u8> {
    let mut out = vec![0u8; len.div_ceil(8)];
    for p in set {
        out[p / 8] |= 1 << (p % 8);
    }
    out
}

fn pairs_bytes(items: &[(usize, u8)]) -> Vec<u8> {
    let mut out = Vec::with_capacity(5 * items.len());
    for &(p, v) in items {
        out.extend_from_slice(&(p as u32).to_le_bytes());
        out.push(v);
    }
    out
}

/// One byte per position: the value, or `0xff` where nothing arrived.
fn per_position(values: &[Option<u8>]) -> Vec<u8> {
    values.iter().map(|v| v.unwrap_or(0xff)).collect()
}

struct Pass1<'a> {
    link: &'a HopLink<'a>,
    tag: FrameTag,
    batch: u32,
}

impl Pass1<'_> {
    /// Noise for every position of `pass`, drawn in position order.
    fn draws(&self, pass: Pass, len: usize, out: &mut SessionOutcome) -> Vec<NoiseDraw> {
        let mut rng = keyed_rng(
            &self.link.noise_seed,
            &[self.tag.frame, self.tag.attempt as u64, self.batch as u64, pass as u64],
        );
        let (survival, depol) = (self.link.channel.survival(), self.link.channel.depolarizing_prob);
        let draws: Vec<NoiseDraw> = (0..len)
            .map(|_| NoiseDraw::sample_with(survival, depol, &mut rng))
            .collect();
        let mut h = Sha256::new();
        h.update(draws.iter().map(NoiseDraw::code).collect::<Vec<_>>());
        let digest: [u8; 32] = h.finalize().into();
        out.noise.push(NoiseRecord {
            frame: self.tag.frame,
            attempt: self.tag.attempt,
            batch: self.batch,
            pass,
            positions: len,
            digest: digest[..8].try_into().unwrap(),
        });
        draws
    }

    fn eve_rng(&self, pass: Pass) -> SimRng {
        keyed_rng(
            &self.link.eve_seed,
            &[self.tag.frame, self.tag.attempt as u64, self.batch as u64, pass as u64],
        )
    }
}

struct BatchResult {
    aborted: Option<u8>,
    /// `(unit index within the batch, value)`
    delivered: Vec<(usize, u8)>,
}

/// Runs batches until every unit is delivered, a check aborts, or the batch
/// limit is reached.
fn run_batches(
    link: &HopLink<'_>,
    units: &[u8],
    params: &ProtocolParams,
    out: &mut SessionOutcome,
    mut batch: impl FnMut(u32, &[u8], &mut SessionOutcome) -> BatchResult,
) -> Option<Vec<u8>> {
    let mut received: Vec<Option<u8>> = vec![None; units.len()];
    let mut remaining: Vec<usize> = (0..units.len()).collect();
    let mut b = 0;
    loop {
        if remaining.is_empty() && b > 0 {
            break;
        }
        if b >= params.max_batches {
            out.status = SessionStatus::Lost {
                hop: link.hop().clone(),
            };
            return None;
        }
        let values: Vec<u8> = remaining.iter().map(|&i| units[i]).collect();
        let result = batch(b, &values, out);
        out.batches = b + 1;
        if let Some(round) = result.aborted {
            out.status = SessionStatus::Aborted {
                hop: link.hop().clone(),
                round,
            };
            return None;
        }
        out.trace.push(TraceEvent::Delivered {
            batch: b,
            units: result.delivered.len(),
        });
        for (local, v) in result.delivered {
            received[remaining[local]] = Some(v);
        }
        remaining.retain(|&i| received[i].is_none());
        b += 1;
    }
    Some(received.into_iter().map(|v| v.expect("all delivered")).collect())
}

fn sample(out: &mut SessionOutcome, link: &HopLink<'_>, tag: FrameTag, batch: u32, round: u8, est: &QberEstimate) {
    out.qber_series.push(QberSample {
        frame: tag.frame,
        hop: link.hop().clone(),
        attempt: tag.attempt,
        batch,
        round,
        estimate: est.clone(),
    });
    out.trace.push(TraceEvent::Check {
        batch,
        round,
        aborted: est.aborts(),
    });
}

/// Number of check pairs for `message_pairs` message pairs: the configured
/// fraction of the sequence, raised so that each round compares at least
/// `min_check_bits` bits in expectation after loss.
pub fn eqsdc_check_count(message_pairs: usize, params: &ProtocolParams, survival: f64) -> usize {
    let f = params.check_fraction;
    let by_fraction = (f / (1.0 - f) * message_pairs as f64).ceil() as usize;
    let s = survival.max(1e-3);
    let min = params.min_check_bits as f64;
    let round1 = (2.0 * min / s).ceil() as usize;
    let round2 = (min / (s * s)).ceil() as usize;
    by_fraction.max(round1).max(round2)
}

/// Two-step EPR protocol over one hop. The b-sequence is sent and checked
/// before the a-sequence leaves the sender.
pub fn eqsdc_run_session<R: Rng + ?Sized>(
    link: &HopLink<'_>,
    tag: FrameTag,
    message_bits: &[u8],
    params: &ProtocolParams,
    rng: &mut R,
    io: &mut SessionIo<'_>,
) -> SessionOutcome {
    let mut out = SessionOutcome::empty();
    let padded_len = message_bits.len() + message_bits.len() % 2;
    let mut padded = message_bits.to_vec();
    padded.resize(padded_len, 0);
    let units: Vec<u8> = padded
        .chunks_exact(2)
        .map(|c| ((c[0] & 1) << 1) | (c[1] & 1))
        .collect();

    let delivered = run_batches(link, &units, params, &mut out, |b, values, out| {
        eqsdc_batch(link, tag, b, values, params, rng, io, out)
    });
    if let Some(pairs) = delivered {
        let mut bits: Vec<u8> = pairs.iter().flat_map(|&v| [v >> 1, v & 1]).collect();
        bits.truncate(message_bits.len());
        out.payload = Some(bits);
        out.status = SessionStatus::Delivered;
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn eqsdc_batch<R: Rng + ?Sized>(
    link: &HopLink<'_>,
    tag: FrameTag,
    batch: u32,
    values: &[u8],
    params: &ProtocolParams,
    rng: &mut R,
    io: &mut SessionIo<'_>,
    out: &mut SessionOutcome,
) -> BatchResult {
    let (alice, bob) = (link.sender, link.receiver);
    let ctx = Pass1 { link, tag, batch };
    let n_check = eqsdc_check_count(values.len(), params, link.channel.survival());
    let bits: Vec<u8> = values.iter().flat_map(|&v| [v >> 1, v & 1]).collect();
    let seq = eqsdc_build_sequences(&bits, n_check, tag.frame, rng).expect("even by construction");
    let frame = seq.frame;
    let len = frame.len;
    io.log.log(alice, RecordKind::Preparation, &frame.to_bytes());
    out.accounting.check_carriers += n_check as u64;
    out.accounting.message_carriers += values.len() as u64;
    out.accounting.message_bits_carried += 2 * values.len() as u64;

    // (b)-sequence
    let draws = ctx.draws(Pass::First, len, out);
    let eve = resolve_eve(link.eve, link.hop(), tag.frame, Pass::First);
    let mut eve_rng = ctx.eve_rng(Pass::First);
    let mut held: Vec<Option<PureState>> = seq
        .pairs
        .into_iter()
        .zip(&draws)
        .map(|(pair, &d)| {
            let half = PairHalf {
                pair,
                travelling: Half::Second,
            };
            apply_transit(half, d, eve, &mut eve_rng).received().map(|h| h.pair)
        })
        .collect();
    out.accounting.carriers_first_pass += len as u64;
    let lost: Vec<usize> = (0..len).filter(|&p| held[p].is_none()).collect();
    io.announce(bob, alice, &bitmap(len, lost.iter().copied()));
    out.trace.push(TraceEvent::FirstPass {
        batch,
        sent: len,
        lost: lost.len(),
    });

    // first check: a random half of the surviving check pairs
    let mut value_at = vec![0u8; len];
    for (&p, &v) in frame.check_positions.iter().zip(&frame.check_payload) {
        value_at[p] = v;
    }
    let mut surviving: Vec<usize> = frame
        .check_positions
        .iter()
        .copied()
        .filter(|&p| held[p].is_some())
        .collect();
    surviving.shuffle(rng);
    let split = surviving.len() / 2;
    let mut round1 = surviving[..split].to_vec();
    let mut round2 = surviving[split..].to_vec();
    round1.sort_unstable();
    round2.sort_unstable();

    let mut announced = Vec::with_capacity(round1.len());
    let mut observed = Vec::with_capacity(round1.len());
    let mut alice_meas = Vec::with_capacity(round1.len());
    for &p in &round1 {
        let pair = held[p].take().expect("surviving");
        let basis = Basis::random(rng);
        let (a, bob_qubit) = pair
            .measure_half(Half::First, basis, rng)
            .expect("normalized pair");
        let bell = BellState::from_bits(value_at[p]);
        let expected = a ^ u8::from(bell.anticorrelated_in(basis));
        announced.push((p, expected));
        alice_meas.push((p, (basis as u8) << 1 | a));
        let (b, _) = bob_qubit.measure(basis, rng).expect("normalized qubit");
        observed.push((p, b));
    }
    io.log.log(alice, RecordKind::Measurement, &pairs_bytes(&alice_meas));
    io.announce(alice, bob, &pairs_bytes(&announced));
    io.log.log(bob, RecordKind::Measurement, &pairs_bytes(&observed));
    let est1 = estimate_qber(&announced, &observed, params.threshold).expect("same positions");
    io.announce(bob, alice, &[u8::from(est1.aborts())]);
    sample(out, link, tag, batch, 1, &est1);
    if est1.aborts() {
        return BatchResult {
            aborted: Some(1),
            delivered: Vec::new(),
        };
    }

    // (a)-sequence
    let draws = ctx.draws(Pass::Second, len, out);
    let eve = resolve_eve(link.eve, link.hop(), tag.frame, Pass::Second);
    let mut eve_rng = ctx.eve_rng(Pass::Second);
    let mut sent = 0;
    let mut lost2 = Vec::new();
    let mut readout: Vec<Option<u8>> = vec![None; len];
    for (p, (slot, &d)) in held.into_iter().zip(&draws).enumerate() {
        let Some(pair) = slot else { continue };
        sent += 1;
        let half = PairHalf {
            pair,
            travelling: Half::First,
        };
        match apply_transit(half, d, eve, &mut eve_rng).received() {
            Some(h) => readout[p] = Some(h.pair.bell_measure(rng).expect("normalized pair").1),
            None => lost2.push(p),
        }
    }
    out.accounting.carriers_second_pass += sent as u64;
    io.announce(bob, alice, &bitmap(len, lost2.iter().copied()));
    out.trace.push(TraceEvent::SecondPass {
        batch,
        sent,
        lost: lost2.len(),
    });
    io.log.log(bob, RecordKind::Measurement, &per_position(&readout));

    // second check: Alice reveals the remaining check values
    let mut announced = Vec::new();
    let mut observed = Vec::new();
    for &p in round2.iter().filter(|&&p| readout[p].is_some()) {
        let v = value_at[p];
        let r = readout[p].expect("filtered");
        announced.extend([(2 * p, v >> 1), (2 * p + 1, v & 1)]);
        observed.extend([(2 * p, r >> 1), (2 * p + 1, r & 1)]);
    }
    io.announce(alice, bob, &pairs_bytes(&announced));
    let est2 =
        estimate_qber_uses(&announced, &observed, params.threshold, 2).expect("same positions");
    io.announce(bob, alice, &[u8::from(est2.aborts())]);
    sample(out, link, tag, batch, 2, &est2);
    if est2.aborts() {
        return BatchResult {
            aborted: Some(2),
            delivered: Vec::new(),
        };
    }

    let delivered = frame
        .message_positions()
        .into_iter()
        .enumerate()
        .filter_map(|(j, p)| readout[p].map(|v| (j, v)))
        .collect();
    BatchResult {
        aborted: None,
        delivered,
    }
}

/// Photon budget of one DL04 batch carrying `data` bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dl04Budget {
    pub return_checks: usize,
    pub forward_checks: usize,
    pub prepared: usize,
}

pub fn dl04_budget(data: usize, params: &ProtocolParams, survival: f64) -> Dl04Budget {
    let s = survival.max(1e-3);
    let min = params.min_check_bits as f64;
    let rf = params.return_check_fraction;
    let ff = params.forward_check_fraction;
    let return_checks = ((rf / (1.0 - rf) * data as f64).ceil() as usize)
        .max((min / s).ceil() as usize);
    let slots = data + return_checks;
    // forward checks are sifted on basis agreement, keeping about half
    let forward_checks = ((ff / (1.0 - ff) * slots as f64).ceil() as usize)
        .max((2.0 * min).ceil() as usize);
    let prepared = (((slots + forward_checks) as f64 / s) * 1.03).ceil() as usize + 16;
    Dl04Budget {
        return_checks,
        forward_checks,
        prepared,
    }
}

/// DL04 over one hop. `link.receiver` prepares single photons and sends them
/// to `link.sender`, which checks a sample, encodes bits with `I`/`Y` on the
/// rest and sends them back.
pub fn dl04_run_block<R: Rng + ?Sized>(
    link: &HopLink<'_>,
    tag: FrameTag,
    payload_bits: &[u8],
    params: &ProtocolParams,
    rng: &mut R,
    io: &mut SessionIo<'_>,
) -> SessionOutcome {
    let mut out = SessionOutcome::empty();
    let units: Vec<u8> = payload_bits.iter().map(|b| b & 1).collect();
    let delivered = run_batches(link, &units, params, &mut out, |b, values, out| {
        dl04_batch(link, tag, b, values, params, rng, io, out)
    });
    if let Some(bits) = delivered {
        out.payload = Some(bits);
        out.status = SessionStatus::Delivered;
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn dl04_batch<R: Rng + ?Sized>(
    link: &HopLink<'_>,
    tag: FrameTag,
    batch: u32,
    values: &[u8],
    params: &ProtocolParams,
    rng: &mut R,
    io: &mut SessionIo<'_>,
    out: &mut SessionOutcome,
) -> BatchResult {
    // encoder and preparer
    let (enc, prep) = (link.sender, link.receiver);
    let ctx = Pass1 { link, tag, batch };
    let budget = dl04_budget(values.len(), params, link.channel.survival());
    let n = budget.prepared;

    let prepared: Vec<SingleState> = (0..n).map(|_| SingleState::random(rng)).collect();
    io.log.log(
        prep,
        RecordKind::Preparation,
        &prepared.iter().map(|s| *s as u8).collect::<Vec<_>>(),
    );

    // forward pass
    let draws = ctx.draws(Pass::First, n, out);
    let eve = resolve_eve(link.eve, link.hop(), tag.frame, Pass::First);
    let mut eve_rng = ctx.eve_rng(Pass::First);
    let mut at_encoder: Vec<Option<PureState>> = prepared
        .iter()
        .zip(&draws)
        .map(|(&s, &d)| apply_transit(PureState::prepare_single(s), d, eve, &mut eve_rng).received())
        .collect();
    out.accounting.carriers_first_pass += n as u64;
    let survivors: Vec<usize> = (0..n).filter(|&p| at_encoder[p].is_some()).collect();
    io.announce(enc, prep, &bitmap(n, (0..n).filter(|&p| at_encoder[p].is_none())));
    out.trace.push(TraceEvent::FirstPass {
        batch,
        sent: n,
        lost: n - survivors.len(),
    });

    // first check: encoder measures a random sample in random bases
    let n_fwd = budget.forward_checks.min(survivors.len() / 2);
    let mut fwd: Vec<usize> = index::sample(rng, survivors.len(), n_fwd)
        .into_iter()
        .map(|i| survivors[i])
        .collect();
    fwd.sort_unstable();
    let mut outcomes = Vec::with_capacity(fwd.len());
    for &p in &fwd {
        let q = at_encoder[p].take().expect("survivor");
        let basis = Basis::random(rng);
        let (o, _) = q.measure(basis, rng).expect("normalized photon");
        outcomes.push((p, basis, o));
    }
    let wire: Vec<(usize, u8)> = outcomes
        .iter()
        .map(|&(p, b, o)| (p, (b as u8) << 1 | o))
        .collect();
    io.log.log(enc, RecordKind::Measurement, &pairs_bytes(&wire));
    io.announce(enc, prep, &pairs_bytes(&wire));
    // preparer keeps matching-basis positions only
    let (announced, observed): (Vec<_>, Vec<_>) = outcomes
        .iter()
        .filter(|&&(p, b, _)| prepared[p].basis() == b)
        .map(|&(p, _, o)| ((p, prepared[p].value()), (p, o)))
        .unzip();
    let est1 = estimate_qber(&announced, &observed, params.threshold).expect("same positions");
    io.announce(prep, enc, &[u8::from(est1.aborts())]);
    sample(out, link, tag, batch, 1, &est1);
    if est1.aborts() {
        return BatchResult {
            aborted: Some(1),
            delivered: Vec::new(),
        };
    }

    // encoding: return checks at random slots, data in order on the rest
    let slots: Vec<usize> = (0..n).filter(|&p| at_encoder[p].is_some()).collect();
    let n_ret = budget.return_checks.min(slots.len() / 2);
    let mut is_ret = vec![false; n];
    for i in index::sample(rng, slots.len(), n_ret) {
        is_ret[slots[i]] = true;
    }
    let mut encoded_bit: Vec<Option<u8>> = vec![None; n];
    let mut data_slot: Vec<(usize, usize)> = Vec::new(); // (position, unit)
    let mut ret_checks: Vec<(usize, u8)> = Vec::new();
    let mut next_unit = 0;
    for &p in &slots {
        if is_ret[p] {
            let bit = rng.gen_range(0..2u8);
            ret_checks.push((p, bit));
            encoded_bit[p] = Some(bit);
        } else if next_unit < values.len() {
            encoded_bit[p] = Some(values[next_unit]);
            data_slot.push((p, next_unit));
            next_unit += 1;
        } else {
            // surplus photon, absorbed by the encoder
            at_encoder[p] = None;
        }
    }

    // return pass
    let draws = ctx.draws(Pass::Second, n, out);
    let eve = resolve_eve(link.eve, link.hop(), tag.frame, Pass::Second);
    let mut eve_rng = ctx.eve_rng(Pass::Second);
    let mut sent = 0;
    let mut back: Vec<Option<PureState>> = Vec::with_capacity(n);
    for (p, slot) in at_encoder.into_iter().enumerate() {
        let Some(q) = slot else {
            back.push(None);
            continue;
        };
        let op = match encoded_bit[p] {
            Some(1) => PauliOp::Y,
            _ => PauliOp::I,
        };
        let q = q.apply_pauli(op, 0).expect("single photon");
        sent += 1;
        back.push(apply_transit(q, draws[p], eve, &mut eve_rng).received());
    }
    out.accounting.carriers_second_pass += sent as u64;
    out.accounting.check_carriers += (n_fwd + n_ret) as u64;
    out.accounting.message_carriers += data_slot.len() as u64;
    out.accounting.message_bits_carried += data_slot.len() as u64;

    let mut decoded: Vec<Option<u8>> = vec![None; n];
    for (p, slot) in back.into_iter().enumerate() {
        if let Some(q) = slot {
            let (o, _) = q.measure(prepared[p].basis(), rng).expect("normalized photon");
            decoded[p] = Some(o ^ prepared[p].value());
        }
    }
    let lost2: Vec<usize> = (0..n)
        .filter(|&p| encoded_bit[p].is_some() && decoded[p].is_none())
        .collect();
    io.announce(prep, enc, &bitmap(n, lost2.iter().copied()));
    out.trace.push(TraceEvent::SecondPass {
        batch,
        sent,
        lost: lost2.len(),
    });
    io.log.log(prep, RecordKind::Measurement, &per_position(&decoded));

    // second check: encoder reveals the return check bits that arrived
    let (announced, observed): (Vec<_>, Vec<_>) = ret_checks
        .iter()
        .filter_map(|&(p, bit)| decoded[p].map(|d| ((p, bit), (p, d))))
        .unzip();
    io.announce(enc, prep, &pairs_bytes(&announced));
    let est2 =
        estimate_qber_uses(&announced, &observed, params.threshold, 2).expect("same positions");
    io.announce(prep, enc, &[u8::from(est2.aborts())]);
    sample(out, link, tag, batch, 2, &est2);
    if est2.aborts() {
        return BatchResult {
            aborted: Some(2),
            delivered: Vec::new(),
        };
    }

    let delivered = data_slot
        .into_iter()
        .filter_map(|(p, unit)| decoded[p].map(|v| (unit, v)))
        .collect();
    BatchResult {
        aborted: None,
        delivered,
    }
}

/// Runs whichever protocol `params.kind` selects.
pub fn run_session<R: Rng + ?Sized>(
    link: &HopLink<'_>,
    tag: FrameTag,
    bits: &[u8],
    params: &ProtocolParams,
    rng: &mut R,
    io: &mut SessionIo<'_>,
) -> SessionOutcome {
    match params.kind {
        ProtocolKind::Eqsdc => eqsdc_run_session(link, tag, bits, params, rng, io),
        ProtocolKind::Dl04 => dl04_run_block(link, tag, bits, params, rng, io),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn boundary_of_the_threshold() {
        let mk = |errors: usize| {
            let a: Vec<(usize, u8)> = (0..500).map(|p| (p, 0)).collect();
            let o: Vec<(usize, u8)> = (0..500).map(|p| (p, u8::from(p < errors))).collect();
            estimate_qber(&a, &o, DEFAULT_THRESHOLD).unwrap()
        };
        let zero = mk(0);
        assert_eq!((zero.rate, zero.aborts()), (0.0, false));
        let e29 = mk(29);
        assert!((e29.rate - 0.058).abs() < 1e-12 && e29.aborts());
        let e28 = mk(28);
        assert!((e28.rate - 0.056).abs() < 1e-12 && !e28.aborts());
    }

    #[test]
    fn position_mismatch() {
        assert_eq!(
            estimate_qber(&[(1, 0)], &[(2, 0)], 0.1),
            Err(QsdcError::PositionMismatch)
        );
        assert_eq!(
            estimate_qber(&[(1, 0)], &[], 0.1),
            Err(QsdcError::PositionMismatch)
        );
        // order does not matter, only the position sets
        assert!(estimate_qber(&[(1, 0), (2, 1)], &[(2, 1), (1, 0)], 0.1).is_ok());
    }

    #[test]
    fn per_use_inversion() {
        for e in [0.0, 0.01, 0.03, 0.1, 0.25] {
            let r = 2.0 * e * (1.0 - e);
            assert!((per_use_rate(r, 2) - e).abs() < 1e-12);
            let r3 = (1.0 - (1.0 - 2.0 * e).powi(3)) / 2.0;
            assert!((per_use_rate(r3, 3) - e).abs() < 1e-12);
        }
        assert_eq!(per_use_rate(0.7, 2), 0.5);
    }

    #[test]
    fn build_small_sequences() {
        let mut r = ChaCha8Rng::seed_from_u64(1);
        let s = eqsdc_build_sequences(&[0, 0, 0, 1], 0, 0, &mut r).unwrap();
        assert_eq!(s.len(), 2);
        let mut m = ChaCha8Rng::seed_from_u64(2);
        let got: Vec<u8> = s
            .pairs
            .into_iter()
            .map(|p| p.bell_measure(&mut m).unwrap().1)
            .collect();
        assert_eq!(got, vec![0b00, 0b01]);
        let s = eqsdc_build_sequences(&[1; 100], 25, 0, &mut r).unwrap();
        assert_eq!(s.len(), 75);
        assert_eq!(s.frame.check_positions.len(), 25);
        assert_eq!(s.frame.message_positions().len(), 50);
        assert_eq!(
            eqsdc_build_sequences(&[1; 3], 2, 0, &mut r).unwrap_err(),
            QsdcError::OddLength(3)
        );
    }

    #[test]
    fn params_validation() {
        assert!(ProtocolParams::default().validate().is_ok());
        let p = ProtocolParams {
            check_fraction: 1.0,
            ..ProtocolParams::default()
        };
        assert!(p.validate().is_err());
    }

    #[test]
    fn budget_meets_minimums() {
        let p = ProtocolParams::default();
        let b = dl04_budget(8480, &p, 0.63);
        assert!(b.return_checks as f64 * 0.63 >= 1000.0);
        assert!(b.forward_checks >= 2000);
        assert!(b.prepared as f64 * 0.63 >= (8480 + b.return_checks + b.forward_checks) as f64);
    }
}
