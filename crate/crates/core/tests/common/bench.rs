//! One protocol session over one hop between nodes `A` and `B`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use srn_core::classical::ClassicalChannel;
use srn_core::qsdc::{run_session, FrameTag, HopLink, ProtocolKind, ProtocolParams, SessionIo};
use srn_core::streams::Streams;
use srn_core::transcript::{Detail, Transcripts};
use srn_core::{ChannelModel, EveKind, EveStrategy, SessionOutcome};

pub const HOP: &str = "A-B";

pub struct Bench {
    pub channel: ChannelModel,
    pub eve: Vec<EveStrategy>,
    pub params: ProtocolParams,
}

impl Bench {
    pub fn new(kind: ProtocolKind) -> Self {
        Self {
            channel: ChannelModel::ideal(HOP),
            eve: Vec::new(),
            params: ProtocolParams {
                kind,
                ..ProtocolParams::default()
            },
        }
    }

    pub fn qber(mut self, q: f64) -> Self {
        self.channel = self.channel.with_qber(q);
        self
    }

    pub fn fiber_km(mut self, km: f64) -> Self {
        self.channel.length_km = km;
        self.channel.attenuation_db_per_km = 0.2;
        self
    }

    pub fn attack(mut self, kind: EveKind) -> Self {
        self.eve.push(EveStrategy::new(kind, HOP));
        self
    }

    pub fn min_check_bits(mut self, n: usize) -> Self {
        self.params.min_check_bits = n;
        self
    }

    /// Runs one session for `bits` with every stream derived from `seed`.
    pub fn run(&self, bits: &[u8], seed: u64) -> (SessionOutcome, Transcripts) {
        let streams = Streams::new(seed);
        let mut log = Transcripts::new(["A", "B"], Detail::Summary);
        let mut net = ClassicalChannel::new(["A", "B"]);
        let link = HopLink {
            channel: &self.channel,
            eve: &self.eve,
            sender: "A",
            receiver: "B",
            noise_seed: streams.seed("noise", HOP),
            eve_seed: streams.seed("eve", HOP),
        };
        let mut rng = streams.rng("protocol", HOP);
        let mut io = SessionIo {
            log: &mut log,
            net: &mut net,
        };
        let out = run_session(&link, FrameTag { frame: 0, attempt: 0 }, bits, &self.params, &mut rng, &mut io);
        (out, log)
    }
}

pub fn random_bits(len: usize, seed: u64) -> Vec<u8> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| r.gen_range(0..2u8)).collect()
}
