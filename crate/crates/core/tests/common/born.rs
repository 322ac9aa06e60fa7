//! Born-rule statistics suite. Expected probabilities come from explicit
//! inner products with hand-written basis vectors.

use num_complex::Complex64 as C;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use srn_core::quantum::{Basis, BellState, Half, PauliOp, SingleState};
use srn_core::PureState;

use super::{three_sigma, within};

pub const N: usize = 10_000;

const R: f64 = std::f64::consts::FRAC_1_SQRT_2;

fn c(re: f64) -> C {
    C::new(re, 0.0)
}

/// Basis vector for outcome `o` of a single-qubit measurement.
fn single_vector(basis: Basis, o: u8) -> [C; 2] {
    match (basis, o) {
        (Basis::Z, 0) => [c(1.0), c(0.0)],
        (Basis::Z, _) => [c(0.0), c(1.0)],
        (Basis::X, 0) => [c(R), c(R)],
        (Basis::X, _) => [c(R), c(-R)],
    }
}

/// Bell vectors in the order `00, 01, 10, 11`.
fn bell_vectors() -> [[C; 4]; 4] {
    let z = c(0.0);
    [
        [c(R), z, z, c(R)],
        [c(R), z, z, c(-R)],
        [z, c(R), c(R), z],
        [z, c(R), c(-R), z],
    ]
}

fn inner(u: &[C], v: &[C]) -> C {
    u.iter().zip(v).map(|(a, b)| a.conj() * b).sum()
}

pub fn born_single(amps: &[C], basis: Basis, o: u8) -> f64 {
    inner(&single_vector(basis, o), amps).norm_sqr()
}

/// Probability that qubit `which` of a pair yields `o` in `basis`.
pub fn born_half(amps: &[C], which: Half, basis: Basis, o: u8) -> f64 {
    let v = single_vector(basis, o);
    // project onto v on the measured qubit, sum over the partner
    (0..2)
        .map(|partner| {
            let mut acc = C::new(0.0, 0.0);
            for m in 0..2 {
                let idx = match which {
                    Half::First => 2 * m + partner,
                    Half::Second => 2 * partner + m,
                };
                acc += v[m].conj() * amps[idx];
            }
            acc.norm_sqr()
        })
        .sum()
}

pub fn born_bell(amps: &[C]) -> [f64; 4] {
    bell_vectors().map(|b| inner(&b, amps).norm_sqr())
}

pub struct CaseResult {
    pub name: String,
    pub ok: bool,
    pub detail: String,
}

struct Case {
    name: String,
    results: Vec<(String, f64, f64)>,
    hard_failures: Vec<String>,
}

impl Case {
    fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            results: Vec::new(),
            hard_failures: Vec::new(),
        }
    }

    /// Records an observed frequency of an outcome with analytic probability `p`.
    fn freq(&mut self, label: &str, count: usize, p: f64) {
        self.results.push((label.to_string(), count as f64 / N as f64, p));
    }

    fn require(&mut self, cond: bool, what: impl Into<String>) {
        if !cond {
            self.hard_failures.push(what.into());
        }
    }

    fn finish(self) -> CaseResult {
        let mut ok = self.hard_failures.is_empty();
        let mut detail = Vec::new();
        for (label, f, p) in &self.results {
            let band = three_sigma(*p, N);
            // a certain outcome has zero variance and must be exact
            let good = if *p < 1e-12 || *p > 1.0 - 1e-12 {
                *f == p.round()
            } else {
                within(*f, band)
            };
            ok &= good;
            detail.push(format!("{label}={f:.4} (p={p:.4})"));
        }
        detail.extend(self.hard_failures.iter().map(|h| format!("FAILED: {h}")));
        CaseResult {
            name: self.name,
            ok,
            detail: detail.join(", "),
        }
    }
}

fn rng(case: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0xB0B5_0000 + case)
}

fn amps_of(s: &PureState) -> Vec<C> {
    s.amplitudes().to_vec()
}

fn single_measure_case(id: u64, name: &str, make: impl Fn() -> PureState, basis: Basis) -> CaseResult {
    let mut case = Case::new(name);
    let p0 = born_single(&amps_of(&make()), basis, 0);
    let mut r = rng(id);
    let mut zeros = 0;
    for _ in 0..N {
        let (o, post) = make().measure(basis, &mut r).expect("normalized");
        let expect = single_vector(basis, o);
        case.require(
            (inner(&expect, post.amplitudes()).norm_sqr() - 1.0).abs() < 1e-12,
            "post-measurement state is the outcome eigenstate",
        );
        zeros += usize::from(o == 0);
        if !case.hard_failures.is_empty() {
            break;
        }
    }
    case.freq("P(0)", zeros, p0);
    case.finish()
}

fn arbitrary_single(theta: f64, phi: f64) -> PureState {
    PureState::from_amplitudes(&[c(theta.cos()), C::from_polar(theta.sin(), phi)]).expect("unit norm")
}

fn arbitrary_pair(v: [f64; 4], phase: f64) -> PureState {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let amps = [
        c(v[0] / norm),
        C::from_polar(v[1] / norm, phase),
        c(v[2] / norm),
        C::from_polar(v[3] / norm, -phase),
    ];
    PureState::from_amplitudes(&amps).expect("unit norm")
}

/// The full suite: single-qubit measurement, half-pair measurement and Bell
/// measurement over prepared and arbitrary states.
pub fn suite() -> Vec<CaseResult> {
    let mut out = Vec::new();
    let single = |s: SingleState| move || PureState::prepare_single(s);

    out.push(single_measure_case(1, "measure |0> in Z", single(SingleState::Z0), Basis::Z));
    out.push(single_measure_case(2, "measure |0> in X", single(SingleState::Z0), Basis::X));
    out.push(single_measure_case(3, "measure |+> in X", single(SingleState::XPlus), Basis::X));
    out.push(single_measure_case(4, "measure |-> in X", single(SingleState::XMinus), Basis::X));
    out.push(single_measure_case(5, "measure |+> in Z", single(SingleState::XPlus), Basis::Z));
    out.push(single_measure_case(6, "measure |1> in X", single(SingleState::Z1), Basis::X));
    for (i, (theta, phi)) in [(0.3, 0.0), (0.9, 1.1), (1.2, -2.5)].into_iter().enumerate() {
        for basis in [Basis::Z, Basis::X] {
            out.push(single_measure_case(
                10 + 2 * i as u64 + u64::from(basis == Basis::X),
                &format!("measure cos({theta})|0> + e^(i{phi}) sin({theta})|1> in {basis:?}"),
                move || arbitrary_single(theta, phi),
                basis,
            ));
        }
    }

    // Φ+ first half in Z: uniform outcome, partner collapses onto it
    {
        let mut case = Case::new("Phi+ first half in Z, then partner in Z");
        let mut r = rng(20);
        let (mut zeros, mut agree) = (0, 0);
        for _ in 0..N {
            let (u, rest) = PureState::prepare_bell(0b00)
                .measure_half(Half::First, Basis::Z, &mut r)
                .expect("pair");
            case.require(
                (born_single(rest.amplitudes(), Basis::Z, u) - 1.0).abs() < 1e-12,
                "remainder equals |u>",
            );
            let (v, _) = rest.measure(Basis::Z, &mut r).expect("single");
            zeros += usize::from(u == 0);
            agree += usize::from(u == v);
        }
        case.freq("P(u=0)", zeros, 0.5);
        case.freq("P(partner=u)", agree, 1.0);
        out.push(case.finish());
    }

    // Ψ− both halves in X: always anti-correlated
    {
        let mut case = Case::new("Psi- both halves in X");
        let mut r = rng(21);
        let (mut zeros, mut anti) = (0, 0);
        for _ in 0..N {
            let (a, rest) = PureState::prepare_bell(0b11)
                .measure_half(Half::First, Basis::X, &mut r)
                .expect("pair");
            let (b, _) = rest.measure(Basis::X, &mut r).expect("single");
            zeros += usize::from(a == 0);
            anti += usize::from(a != b);
        }
        case.freq("P(first=0)", zeros, 0.5);
        case.freq("P(anti-correlated)", anti, 1.0);
        out.push(case.finish());
    }

    // Φ+ first in Z, second in X: unbiased
    {
        let mut case = Case::new("Phi+ first in Z, second in X");
        let mut r = rng(22);
        let mut zeros = 0;
        for _ in 0..N {
            let (_, rest) = PureState::prepare_bell(0b00)
                .measure_half(Half::First, Basis::Z, &mut r)
                .expect("pair");
            let (b, _) = rest.measure(Basis::X, &mut r).expect("single");
            zeros += usize::from(b == 0);
        }
        case.freq("P(second=0)", zeros, 0.5);
        out.push(case.finish());
    }

    // measure_half on arbitrary entangled states, both halves and bases
    for (i, (v, phase)) in [([0.8, 0.3, 0.1, 0.5], 0.7), ([0.2, 0.9, 0.4, 0.1], -1.3)]
        .into_iter()
        .enumerate()
    {
        for which in [Half::First, Half::Second] {
            for basis in [Basis::Z, Basis::X] {
                let id = 30 + 4 * i as u64 + 2 * which.index() as u64 + u64::from(basis == Basis::X);
                let mut case = Case::new(format!("state {i} measure {which:?} half in {basis:?}"));
                let p0 = born_half(arbitrary_pair(v, phase).amplitudes(), which, basis, 0);
                let mut r = rng(id);
                let mut zeros = 0;
                for _ in 0..N {
                    let (o, rest) = arbitrary_pair(v, phase)
                        .measure_half(which, basis, &mut r)
                        .expect("pair");
                    case.require(rest.is_normalized(), "remainder normalized");
                    zeros += usize::from(o == 0);
                }
                case.freq("P(0)", zeros, p0);
                out.push(case.finish());
            }
        }
    }

    // Bell measurement of every Bell state is deterministic
    for bits in 0..4u8 {
        let mut case = Case::new(format!("bell_measure(prepare_bell({bits:02b}))"));
        let mut r = rng(40 + bits as u64);
        let mut hits = 0;
        for _ in 0..N {
            let (state, got) = PureState::prepare_bell(bits).bell_measure(&mut r).expect("pair");
            case.require(state.bits() == got, "reported bits match the reported state");
            hits += usize::from(got == bits);
        }
        case.freq("P(same bits)", hits, 1.0);
        out.push(case.finish());
    }

    // |00> = (Φ+ + Φ−)/√2
    {
        let mut case = Case::new("bell_measure(|00>)");
        let amps = amps_of(&PureState::product(
            PureState::prepare_single(SingleState::Z0),
            PureState::prepare_single(SingleState::Z0),
        )
        .expect("two singles"));
        let p = born_bell(&amps);
        let mut r = rng(50);
        let mut counts = [0usize; 4];
        for _ in 0..N {
            let s = PureState::product(
                PureState::prepare_single(SingleState::Z0),
                PureState::prepare_single(SingleState::Z0),
            )
            .expect("two singles");
            let (_, bits) = s.bell_measure(&mut r).expect("pair");
            counts[bits as usize] += 1;
        }
        for (i, name) in ["PhiPlus", "PhiMinus", "PsiPlus", "PsiMinus"].iter().enumerate() {
            case.freq(name, counts[i], p[i]);
        }
        out.push(case.finish());
    }

    // arbitrary pair states in the Bell basis
    for (i, (v, phase)) in [([0.8, 0.3, 0.1, 0.5], 0.7), ([0.2, 0.9, 0.4, 0.1], -1.3), ([1.0, 1.0, 1.0, 1.0], 0.0)]
        .into_iter()
        .enumerate()
    {
        let mut case = Case::new(format!("bell_measure(arbitrary state {i})"));
        let p = born_bell(arbitrary_pair(v, phase).amplitudes());
        let mut r = rng(60 + i as u64);
        let mut counts = [0usize; 4];
        for _ in 0..N {
            let (_, bits) = arbitrary_pair(v, phase).bell_measure(&mut r).expect("pair");
            counts[bits as usize] += 1;
        }
        for (k, name) in ["PhiPlus", "PhiMinus", "PsiPlus", "PsiMinus"].iter().enumerate() {
            case.freq(name, counts[k], p[k]);
        }
        out.push(case.finish());
    }

    // dense coding: Z on the second half of Φ+ gives Φ−
    {
        let mut case = Case::new("bell_measure(Z_2 |Phi+>)");
        let mut r = rng(70);
        let mut hits = 0;
        for _ in 0..N {
            let s = PureState::prepare_bell(0b00).apply_pauli(PauliOp::Z, 1).expect("target");
            let (state, _) = s.bell_measure(&mut r).expect("pair");
            hits += usize::from(state == BellState::PhiMinus);
        }
        case.freq("P(PhiMinus)", hits, 1.0);
        out.push(case.finish());
    }

    // random product states measured half by half
    {
        let mut case = Case::new("random single states in random bases");
        let mut r = rng(80);
        let mut mismatched = 0;
        let mut errors = 0;
        for _ in 0..N {
            let s = SingleState::random(&mut r);
            let basis = Basis::random(&mut r);
            let (o, _) = PureState::prepare_single(s).measure(basis, &mut r).expect("single");
            if basis != s.basis() {
                mismatched += 1;
                errors += usize::from(o != s.value());
            } else if o != s.value() {
                case.require(false, "matched basis reproduces the prepared value");
            }
        }
        // mismatched bases give a fair coin
        let f = errors as f64 / mismatched.max(1) as f64;
        let band = three_sigma(0.5, mismatched.max(1));
        case.require(within(f, band), format!("mismatched-basis error {f:.4} outside {band:?}"));
        case.freq("P(mismatched basis)", mismatched, 0.5);
        out.push(case.finish());
    }

    out
}
