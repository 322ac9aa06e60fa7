//! Exact pure-state simulation of single qubits and two-qubit pairs.
//!
//! A [`State`] holds either two amplitudes (one qubit) or four (a pair, with
//! index `2·q0 + q1`, so the first qubit is the most significant). States are
//! deliberately neither `Clone` nor `Copy`: every operation consumes its input
//! and returns the successor state, so a qubit handed to a channel cannot be
//! touched locally afterwards.
//!
//! Bell states map to two-bit values as `00 = Φ+`, `01 = Φ−`, `10 = Ψ+`,
//! `11 = Ψ−`. With that table a Pauli on one half of `Φ+` lands on
//! `I → 00`, `Z → 01`, `X → 10`, `Y → 11`.

use std::fmt;

use num_complex::Complex;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Basis {
    Z,
    X,
}

impl Basis {
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        if rng.gen::<bool>() {
            Basis::X
        } else {
            Basis::Z
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BellState {
    PhiPlus,
    PhiMinus,
    PsiPlus,
    PsiMinus,
}

impl BellState {
    pub const ALL: [BellState; 4] = [
        BellState::PhiPlus,
        BellState::PhiMinus,
        BellState::PsiPlus,
        BellState::PsiMinus,
    ];

    /// Only the low two bits of `bits` are used.
    pub fn from_bits(bits: u8) -> Self {
        Self::ALL[(bits & 0b11) as usize]
    }

    pub fn bits(self) -> u8 {
        match self {
            BellState::PhiPlus => 0b00,
            BellState::PhiMinus => 0b01,
            BellState::PsiPlus => 0b10,
            BellState::PsiMinus => 0b11,
        }
    }

    /// Whether the two halves give opposite outcomes when both are measured
    /// in `basis`.
    pub fn anticorrelated_in(self, basis: Basis) -> bool {
        match basis {
            Basis::Z => matches!(self, BellState::PsiPlus | BellState::PsiMinus),
            Basis::X => matches!(self, BellState::PhiMinus | BellState::PsiMinus),
        }
    }
}

/// Pauli operations. `Y` is the real matrix `iσ_y = [[0, 1], [−1, 0]]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PauliOp {
    I,
    X,
    Z,
    Y,
}

impl PauliOp {
    pub const ALL: [PauliOp; 4] = [PauliOp::I, PauliOp::X, PauliOp::Z, PauliOp::Y];

    /// Whether this Pauli flips the outcome of a measurement in `basis`.
    pub fn flips(self, basis: Basis) -> bool {
        match basis {
            Basis::Z => matches!(self, PauliOp::X | PauliOp::Y),
            Basis::X => matches!(self, PauliOp::Z | PauliOp::Y),
        }
    }
}

/// The four single-photon carrier states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SingleState {
    Z0,
    Z1,
    XPlus,
    XMinus,
}

impl SingleState {
    pub const ALL: [SingleState; 4] = [
        SingleState::Z0,
        SingleState::Z1,
        SingleState::XPlus,
        SingleState::XMinus,
    ];

    pub fn new(basis: Basis, value: u8) -> Self {
        match (basis, value & 1) {
            (Basis::Z, 0) => SingleState::Z0,
            (Basis::Z, _) => SingleState::Z1,
            (Basis::X, 0) => SingleState::XPlus,
            (Basis::X, _) => SingleState::XMinus,
        }
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        Self::ALL[rng.gen_range(0..4)]
    }

    pub fn basis(self) -> Basis {
        match self {
            SingleState::Z0 | SingleState::Z1 => Basis::Z,
            SingleState::XPlus | SingleState::XMinus => Basis::X,
        }
    }

    /// Measurement outcome this state yields deterministically in its own basis.
    pub fn value(self) -> u8 {
        match self {
            SingleState::Z0 | SingleState::XPlus => 0,
            SingleState::Z1 | SingleState::XMinus => 1,
        }
    }
}

/// Which qubit of a pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Half {
    First,
    Second,
}

impl Half {
    pub fn index(self) -> usize {
        match self {
            Half::First => 0,
            Half::Second => 1,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuantumError {
    #[error("state is not normalized (norm² = {0})")]
    NotNormalized(f64),
    #[error("expected {expected} amplitudes, got {got}")]
    WrongDimension { expected: &'static str, got: usize },
    #[error("qubit index {index} out of range for a {qubits}-qubit state")]
    TargetOutOfRange { index: usize, qubits: usize },
}

/// Pure state of one qubit or one pair.
pub struct State<T: Real> {
    amps: [Complex<T>; 4],
    dim: usize,
}

impl<T: Real> fmt::Debug for State<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("State")
            .field("amplitudes", &self.amplitudes())
            .finish()
    }
}

fn c<T: Real>(re: T) -> Complex<T> {
    Complex::new(re, T::zero())
}

fn sample<T: Real, R: Rng + ?Sized>(rng: &mut R, probs: &[T]) -> usize {
    let u = T::from_f64_lossy(rng.gen::<f64>());
    let mut acc = T::zero();
    for (i, p) in probs.iter().enumerate() {
        acc = acc + *p;
        if u < acc {
            return i;
        }
    }
    // rounding can leave acc marginally below 1; fall back to the last
    // outcome with nonzero weight
    probs.iter().rposition(|p| *p > T::zero()).unwrap_or(0)
}

impl<T: Real> State<T> {
    /// Builds a state from 2 or 4 raw amplitudes. Normalization is checked by
    /// the operations, not here, so callers can represent invalid input.
    pub fn from_amplitudes(amps: &[Complex<T>]) -> Result<Self, QuantumError> {
        if amps.len() != 2 && amps.len() != 4 {
            return Err(QuantumError::WrongDimension {
                expected: "2 or 4",
                got: amps.len(),
            });
        }
        let mut a = [Complex::default(); 4];
        a[..amps.len()].copy_from_slice(amps);
        Ok(Self {
            amps: a,
            dim: amps.len(),
        })
    }

    fn single_raw(a0: Complex<T>, a1: Complex<T>) -> Self {
        let z = Complex::default();
        Self {
            amps: [a0, a1, z, z],
            dim: 2,
        }
    }

    fn pair_raw(amps: [Complex<T>; 4]) -> Self {
        Self { amps, dim: 4 }
    }

    pub fn prepare_bell(bits: u8) -> Self {
        let h = c(T::FRAC_1_SQRT_2());
        let z = Complex::default();
        let amps = match BellState::from_bits(bits) {
            BellState::PhiPlus => [h, z, z, h],
            BellState::PhiMinus => [h, z, z, -h],
            BellState::PsiPlus => [z, h, h, z],
            BellState::PsiMinus => [z, h, -h, z],
        };
        Self::pair_raw(amps)
    }

    pub fn prepare_single(id: SingleState) -> Self {
        let one = c(T::one());
        let z = Complex::default();
        let h = c(T::FRAC_1_SQRT_2());
        match id {
            SingleState::Z0 => Self::single_raw(one, z),
            SingleState::Z1 => Self::single_raw(z, one),
            SingleState::XPlus => Self::single_raw(h, h),
            SingleState::XMinus => Self::single_raw(h, -h),
        }
    }

    /// Tensor product `first ⊗ second` of two single-qubit states.
    pub fn product(first: State<T>, second: State<T>) -> Result<Self, QuantumError> {
        for s in [&first, &second] {
            if s.dim != 2 {
                return Err(QuantumError::WrongDimension {
                    expected: "2",
                    got: s.dim,
                });
            }
        }
        let (a, b) = (first.amps, second.amps);
        Ok(Self::pair_raw([a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1]]))
    }

    pub fn amplitudes(&self) -> &[Complex<T>] {
        &self.amps[..self.dim]
    }

    pub fn qubits(&self) -> usize {
        self.dim / 2
    }

    pub fn norm_sqr(&self) -> T {
        self.amplitudes()
            .iter()
            .fold(T::zero(), |acc, a| acc + a.norm_sqr())
    }

    pub fn is_normalized(&self) -> bool {
        (self.norm_sqr() - T::one()).abs() <= T::NORM_TOLERANCE
    }

    fn check(&self, dim: usize) -> Result<(), QuantumError> {
        if self.dim != dim {
            return Err(QuantumError::WrongDimension {
                expected: if dim == 2 { "2" } else { "4" },
                got: self.dim,
            });
        }
        if !self.is_normalized() {
            return Err(QuantumError::NotNormalized(self.norm_sqr().to_f64_lossy()));
        }
        Ok(())
    }

    /// `|⟨self|other⟩|²`; 1 means equal up to global phase.
    pub fn overlap(&self, other: &State<T>) -> T {
        if self.dim != other.dim {
            return T::zero();
        }
        let ip = self
            .amplitudes()
            .iter()
            .zip(other.amplitudes())
            .fold(Complex::default(), |acc: Complex<T>, (a, b)| acc + a.conj() * b);
        ip.norm_sqr()
    }

    /// Born probability of `outcome` when a single qubit is measured in `basis`.
    pub fn probability(&self, basis: Basis, outcome: u8) -> T {
        let [a0, a1, ..] = self.amps;
        let amp = match (basis, outcome & 1) {
            (Basis::Z, 0) => a0,
            (Basis::Z, _) => a1,
            (Basis::X, 0) => (a0 + a1).scale(T::FRAC_1_SQRT_2()),
            (Basis::X, _) => (a0 - a1).scale(T::FRAC_1_SQRT_2()),
        };
        amp.norm_sqr()
    }

    /// Measures a single qubit; the post-measurement state is the basis eigenstate.
    pub fn measure<R: Rng + ?Sized>(
        self,
        basis: Basis,
        rng: &mut R,
    ) -> Result<(u8, State<T>), QuantumError> {
        self.check(2)?;
        let p = [self.probability(basis, 0), self.probability(basis, 1)];
        let outcome = sample(rng, &p) as u8;
        Ok((outcome, Self::prepare_single(SingleState::new(basis, outcome))))
    }

    /// Measures one qubit of a pair; returns the outcome and the collapsed partner.
    pub fn measure_half<R: Rng + ?Sized>(
        self,
        which: Half,
        basis: Basis,
        rng: &mut R,
    ) -> Result<(u8, State<T>), QuantumError> {
        self.check(4)?;
        let a = self.amps;
        // amplitude of (measured = m, partner = p)
        let at = |m: usize, p: usize| match which {
            Half::First => a[2 * m + p],
            Half::Second => a[2 * p + m],
        };
        let r = T::FRAC_1_SQRT_2();
        let rotated = |m: usize, p: usize| match basis {
            Basis::Z => at(m, p),
            Basis::X if m == 0 => (at(0, p) + at(1, p)).scale(r),
            Basis::X => (at(0, p) - at(1, p)).scale(r),
        };
        let branch = |m: usize| [rotated(m, 0), rotated(m, 1)];
        let probs = [
            branch(0).iter().fold(T::zero(), |s, x| s + x.norm_sqr()),
            branch(1).iter().fold(T::zero(), |s, x| s + x.norm_sqr()),
        ];
        let m = sample(rng, &probs);
        let [p0, p1] = branch(m);
        let inv = probs[m].sqrt().recip();
        Ok((m as u8, Self::single_raw(p0.scale(inv), p1.scale(inv))))
    }

    pub fn apply_pauli(self, op: PauliOp, target: usize) -> Result<State<T>, QuantumError> {
        let qubits = self.qubits();
        if target >= qubits {
            return Err(QuantumError::TargetOutOfRange { index: target, qubits });
        }
        if op == PauliOp::I {
            return Ok(self);
        }
        let mut a = self.amps;
        // pairs of indices differing in the target bit: (bit=0, bit=1)
        let pairs: &[(usize, usize)] = match (qubits, target) {
            (1, _) => &[(0, 1)],
            (2, 0) => &[(0, 2), (1, 3)],
            _ => &[(0, 1), (2, 3)],
        };
        for &(i0, i1) in pairs {
            let (x0, x1) = (a[i0], a[i1]);
            let (n0, n1) = match op {
                PauliOp::I => (x0, x1),
                PauliOp::X => (x1, x0),
                PauliOp::Z => (x0, -x1),
                PauliOp::Y => (x1, -x0),
            };
            a[i0] = n0;
            a[i1] = n1;
        }
        Ok(Self { amps: a, dim: self.dim })
    }

    pub fn bell_measure<R: Rng + ?Sized>(
        self,
        rng: &mut R,
    ) -> Result<(BellState, u8), QuantumError> {
        self.check(4)?;
        let a = self.amps;
        let r = T::FRAC_1_SQRT_2();
        let overlaps = [
            (a[0] + a[3]).scale(r),
            (a[0] - a[3]).scale(r),
            (a[1] + a[2]).scale(r),
            (a[1] - a[2]).scale(r),
        ];
        let probs = overlaps.map(|x| x.norm_sqr());
        let which = BellState::ALL[sample(rng, &probs)];
        Ok((which, which.bits()))
    }
}
