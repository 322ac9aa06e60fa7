//! Physical hop models: photon loss, Pauli noise and an optional
//! intercept–resend eavesdropper.
//!
//! Ordering inside one transit is fixed: loss, then the eavesdropper, then
//! channel noise. Every transit consumes exactly three draws from the noise
//! stream whether or not the qubit survives or is attacked, so the noise
//! realization at a given position never depends on the eavesdropper.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quantum::{Basis, Half, PauliOp, SingleState, State};
use crate::scalar::Real;

/// Identifier of one physical hop (a topology link).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HopId(pub String);

impl HopId {
    pub fn new(s: impl Into<String>) -> Self {
        Self(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for HopId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Medium {
    Fiber,
    FreeSpace,
}

impl Medium {
    /// `(base, slope per km)` of the distance-dependent depolarizing default.
    pub fn noise_profile(self) -> (f64, f64) {
        match self {
            Medium::Fiber => (0.005, 0.004),
            Medium::FreeSpace => (0.005, 0.0),
        }
    }

    pub fn default_depolarizing(self, length_km: f64) -> f64 {
        let (base, slope) = self.noise_profile();
        (base + slope * length_km).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("{field} must be a finite non-negative number, got {value}")]
    Negative { field: &'static str, value: f64 },
    #[error("depolarizing_prob must lie in [0, 1], got {0}")]
    Probability(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    pub label: HopId,
    pub medium: Medium,
    pub length_km: f64,
    pub attenuation_db_per_km: f64,
    pub fixed_loss_db: f64,
    pub depolarizing_prob: f64,
}

impl ChannelModel {
    /// Lossless, noiseless hop.
    pub fn ideal(label: impl Into<String>) -> Self {
        Self {
            label: HopId::new(label),
            medium: Medium::Fiber,
            length_km: 0.0,
            attenuation_db_per_km: 0.0,
            fixed_loss_db: 0.0,
            depolarizing_prob: 0.0,
        }
    }

    /// Depolarizing probability that yields a same-basis error rate of
    /// `qber` per channel use: a uniformly drawn X/Y/Z flips a given basis
    /// with probability 2/3.
    pub fn depolarizing_for_qber(qber: f64) -> f64 {
        (1.5 * qber).clamp(0.0, 1.0)
    }

    pub fn with_qber(mut self, qber: f64) -> Self {
        self.depolarizing_prob = Self::depolarizing_for_qber(qber);
        self
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        for (field, value) in [
            ("length_km", self.length_km),
            ("attenuation_db_per_km", self.attenuation_db_per_km),
            ("fixed_loss_db", self.fixed_loss_db),
        ] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(ChannelError::Negative { field, value });
            }
        }
        if !(0.0..=1.0).contains(&self.depolarizing_prob) {
            return Err(ChannelError::Probability(self.depolarizing_prob));
        }
        Ok(())
    }

    pub fn loss_db(&self) -> f64 {
        self.length_km * self.attenuation_db_per_km + self.fixed_loss_db
    }

    pub fn survival(&self) -> f64 {
        10f64.powf(-self.loss_db() / 10.0).clamp(0.0, 1.0)
    }

    /// Expected same-basis error probability for one transit.
    pub fn error_per_use(&self) -> f64 {
        self.depolarizing_prob * 2.0 / 3.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EveKind {
    None,
    InterceptResendZ,
    InterceptResendX,
    InterceptResendRandom,
}

/// One direction of quantum traffic within a protocol session: the
/// b-sequence / forward photons go first, the a-sequence / encoded return
/// photons second.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pass {
    First,
    Second,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PassSelector {
    First,
    Second,
    #[default]
    Both,
}

impl PassSelector {
    pub fn covers(self, pass: Pass) -> bool {
        matches!(
            (self, pass),
            (PassSelector::Both, _)
                | (PassSelector::First, Pass::First)
                | (PassSelector::Second, Pass::Second)
        )
    }
}

/// Half-open range of frame indices; `end = None` means unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct FrameWindow {
    pub start: u64,
    pub end: Option<u64>,
}

impl FrameWindow {
    pub const ALL: FrameWindow = FrameWindow { start: 0, end: None };

    pub fn is_well_formed(&self) -> bool {
        self.end.is_none_or(|e| e >= self.start)
    }

    pub fn contains(&self, frame: u64) -> bool {
        frame >= self.start && self.end.is_none_or(|e| frame < e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EveStrategy {
    pub kind: EveKind,
    pub target_hop: HopId,
    #[serde(default)]
    pub active_window: FrameWindow,
    #[serde(default)]
    pub passes: PassSelector,
}

impl EveStrategy {
    pub fn new(kind: EveKind, hop: impl Into<String>) -> Self {
        Self {
            kind,
            target_hop: HopId::new(hop),
            active_window: FrameWindow::ALL,
            passes: PassSelector::Both,
        }
    }

    pub fn on_passes(mut self, passes: PassSelector) -> Self {
        self.passes = passes;
        self
    }

    pub fn within(mut self, window: FrameWindow) -> Self {
        self.active_window = window;
        self
    }

    /// What this strategy does to traffic of `frame` on `hop` during `pass`.
    pub fn kind_for(&self, hop: &HopId, frame: u64, pass: Pass) -> EveKind {
        if &self.target_hop == hop && self.active_window.contains(frame) && self.passes.covers(pass)
        {
            self.kind
        } else {
            EveKind::None
        }
    }
}

/// Resolves the attack on `hop` from a list of strategies (first match wins).
pub fn resolve_eve(strategies: &[EveStrategy], hop: &HopId, frame: u64, pass: Pass) -> EveKind {
    strategies
        .iter()
        .map(|s| s.kind_for(hop, frame, pass))
        .find(|k| *k != EveKind::None)
        .unwrap_or(EveKind::None)
}

/// A qubit that can travel through a channel.
pub trait InFlight: Sized {
    fn apply_channel_pauli(self, op: PauliOp) -> Self;

    /// Measures the travelling qubit in `basis` and replaces it with a fresh
    /// eigenstate of the observed outcome.
    fn intercept_resend<R: Rng + ?Sized>(self, basis: Basis, rng: &mut R) -> Self;
}

impl<T: Real> InFlight for State<T> {
    fn apply_channel_pauli(self, op: PauliOp) -> Self {
        self.apply_pauli(op, 0).expect("single-qubit carrier")
    }

    fn intercept_resend<R: Rng + ?Sized>(self, basis: Basis, rng: &mut R) -> Self {
        let (outcome, _) = self.measure(basis, rng).expect("carrier stays normalized");
        State::prepare_single(SingleState::new(basis, outcome))
    }
}

/// One half of an EPR pair in flight; the partner stays at the sender.
#[derive(Debug)]
pub struct PairHalf<T: Real> {
    pub pair: State<T>,
    pub travelling: Half,
}

impl<T: Real> InFlight for PairHalf<T> {
    fn apply_channel_pauli(self, op: PauliOp) -> Self {
        let pair = self
            .pair
            .apply_pauli(op, self.travelling.index())
            .expect("pair carrier");
        Self { pair, ..self }
    }

    fn intercept_resend<R: Rng + ?Sized>(self, basis: Basis, rng: &mut R) -> Self {
        let (outcome, partner) = self
            .pair
            .measure_half(self.travelling, basis, rng)
            .expect("pair stays normalized");
        let fresh = State::prepare_single(SingleState::new(basis, outcome));
        let pair = match self.travelling {
            Half::First => State::product(fresh, partner),
            Half::Second => State::product(partner, fresh),
        }
        .expect("both factors are single qubits");
        Self {
            pair,
            travelling: self.travelling,
        }
    }
}

#[derive(Debug)]
pub enum Transit<Q> {
    Lost,
    Received(Q),
}

impl<Q> Transit<Q> {
    pub fn received(self) -> Option<Q> {
        match self {
            Transit::Received(q) => Some(q),
            Transit::Lost => None,
        }
    }
}

/// The noise realization of one transit, independent of the carried qubit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NoiseDraw {
    pub survived: bool,
    pub pauli: PauliOp,
}

impl NoiseDraw {
    pub fn sample<R: Rng + ?Sized>(ch: &ChannelModel, rng: &mut R) -> Self {
        Self::sample_with(ch.survival(), ch.depolarizing_prob, rng)
    }

    /// As [`NoiseDraw::sample`] with the channel's survival probability
    /// already computed.
    pub fn sample_with<R: Rng + ?Sized>(survival: f64, depolarizing_prob: f64, rng: &mut R) -> Self {
        let loss_u: f64 = rng.gen();
        let depol_u: f64 = rng.gen();
        let which: u32 = rng.gen_range(0..3);
        let pauli = if depol_u < depolarizing_prob {
            [PauliOp::X, PauliOp::Y, PauliOp::Z][which as usize]
        } else {
            PauliOp::I
        };
        Self {
            survived: loss_u < survival,
            pauli,
        }
    }

    /// Compact code used for noise event digests.
    pub fn code(&self) -> u8 {
        if !self.survived {
            return 4;
        }
        match self.pauli {
            PauliOp::I => 0,
            PauliOp::X => 1,
            PauliOp::Y => 2,
            PauliOp::Z => 3,
        }
    }
}

fn eve_acts<Q: InFlight, R: Rng + ?Sized>(q: Q, eve: EveKind, rng: &mut R) -> Q {
    match eve {
        EveKind::None => q,
        EveKind::InterceptResendZ => q.intercept_resend(Basis::Z, rng),
        EveKind::InterceptResendX => q.intercept_resend(Basis::X, rng),
        EveKind::InterceptResendRandom => {
            let basis = Basis::random(rng);
            q.intercept_resend(basis, rng)
        }
    }
}

/// Applies an already-drawn noise realization to `q`.
pub fn apply_transit<Q: InFlight, R: Rng + ?Sized>(
    q: Q,
    draw: NoiseDraw,
    eve: EveKind,
    eve_rng: &mut R,
) -> Transit<Q> {
    if !draw.survived {
        return Transit::Lost;
    }
    let q = eve_acts(q, eve, eve_rng);
    Transit::Received(q.apply_channel_pauli(draw.pauli))
}

/// Sends one qubit through `ch`. Noise comes from `noise_rng`, the
/// eavesdropper's basis choices and measurements from `eve_rng`.
pub fn transmit_qubit<Q: InFlight, R1: Rng + ?Sized, R2: Rng + ?Sized>(
    q: Q,
    ch: &ChannelModel,
    eve: EveKind,
    noise_rng: &mut R1,
    eve_rng: &mut R2,
) -> Transit<Q> {
    let draw = NoiseDraw::sample(ch, noise_rng);
    apply_transit(q, draw, eve, eve_rng)
}
