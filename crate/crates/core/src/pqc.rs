//! Ring-LWE public-key block encryption with a 32-byte → 1024-byte shape.
//!
//! Arithmetic is in `Z_q[x]/(xⁿ + 1)` with `n = 512`, `q = 251`, so every
//! coefficient fits in one byte and a ciphertext `(c1, c2)` is exactly
//! 1024 bytes. Secrets and errors are centered ternary with probabilities
//! `(1/4, 1/2, 1/4)`. Each of the 256 message bits is written into two
//! coefficients (`i` and `i + 256`) as `bit · ⌊q/2⌋`; decryption sums the
//! two centered distances to zero.
//!
//! These parameters reproduce the interface shape only. They carry no
//! concrete security claim.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

pub const BLOCK_BYTES: usize = 32;
pub const CIPHERTEXT_BYTES: usize = 1024;
pub const KEY_MAGIC: &[u8; 8] = b"SRNLWE01";
pub const STREAM_MAGIC: &[u8; 8] = b"SRNCT001";
pub const STREAM_HEADER_BYTES: usize = 16;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PqcError {
    #[error("plaintext block must be {BLOCK_BYTES} bytes, got {0}")]
    BlockSize(usize),
    #[error("ciphertext block must be {CIPHERTEXT_BYTES} bytes, got {0}")]
    CiphertextSize(usize),
    #[error("padding error: {0}")]
    Padding(String),
    #[error("malformed {what}: {why}")]
    Format { what: &'static str, why: String },
    #[error("invalid parameters: {0}")]
    Params(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LweParams {
    pub n: usize,
    pub q: u16,
    pub repetition: usize,
}

impl Default for LweParams {
    fn default() -> Self {
        Self {
            n: 512,
            q: 251,
            repetition: 2,
        }
    }
}

impl LweParams {
    pub fn validate(&self) -> Result<(), PqcError> {
        if self.q > 256 || self.q < 5 {
            return Err(PqcError::Params(format!("q = {} does not fit one byte", self.q)));
        }
        if self.repetition == 0 || BLOCK_BYTES * 8 * self.repetition != self.n {
            return Err(PqcError::Params(format!(
                "n = {} must equal 256 · repetition ({})",
                self.n, self.repetition
            )));
        }
        Ok(())
    }

    pub fn ciphertext_bytes(&self) -> usize {
        2 * self.n
    }

    fn half_q(&self) -> i32 {
        (self.q / 2) as i32
    }
}

/// Ternary sample: −1, 0, +1 with probabilities 1/4, 1/2, 1/4.
fn ternary<R: RngCore + ?Sized>(rng: &mut R, n: usize) -> Vec<i8> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let mut w = rng.next_u64();
        for _ in 0..32 {
            if out.len() == n {
                break;
            }
            let a = (w & 1) as i8;
            let b = ((w >> 1) & 1) as i8;
            out.push(a - b);
            w >>= 2;
        }
    }
    out
}

fn expand_public(seed: &[u8; 32], params: &LweParams) -> Vec<u16> {
    let mut rng = ChaCha20Rng::from_seed(*seed);
    let mut a = Vec::with_capacity(params.n);
    while a.len() < params.n {
        let x = (rng.next_u32() & 0xff) as u16;
        if x < params.q {
            a.push(x);
        }
    }
    a
}

/// Negacyclic product `a · t` for a ternary `t`, reduced into `[0, q)`.
fn mul_ternary(a: &[u16], t: &[i8], q: u16) -> Vec<i32> {
    let n = a.len();
    let a: Vec<i32> = a.iter().map(|&x| x as i32).collect();
    let mut acc = vec![0i32; n];
    for (j, &tj) in t.iter().enumerate() {
        match tj {
            1 => {
                for (o, x) in acc[j..].iter_mut().zip(&a[..n - j]) {
                    *o += x;
                }
                for (o, x) in acc[..j].iter_mut().zip(&a[n - j..]) {
                    *o -= x;
                }
            }
            -1 => {
                for (o, x) in acc[j..].iter_mut().zip(&a[..n - j]) {
                    *o -= x;
                }
                for (o, x) in acc[..j].iter_mut().zip(&a[n - j..]) {
                    *o += x;
                }
            }
            _ => {}
        }
    }
    let q = q as i32;
    acc.iter_mut().for_each(|x| *x = x.rem_euclid(q));
    acc
}

fn centered(x: i32, q: i32) -> i32 {
    let x = x.rem_euclid(q);
    if x > q / 2 {
        x - q
    } else {
        x
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PublicKey {
    params: LweParams,
    seed: [u8; 32],
    a: Vec<u16>,
    b: Vec<u16>,
}

#[derive(Clone, PartialEq, Eq)]
pub struct SecretKey {
    params: LweParams,
    s: Vec<i8>,
}

impl std::fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SecretKey").field("n", &self.s.len()).finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LweKeypair {
    pub public: PublicKey,
    pub secret: SecretKey,
}

impl PublicKey {
    pub fn seed(&self) -> &[u8; 32] {
        &self.seed
    }

    pub fn a(&self) -> &[u16] {
        &self.a
    }

    pub fn b(&self) -> &[u16] {
        &self.b
    }

    pub fn params(&self) -> &LweParams {
        &self.params
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = key_header(b'P', &self.params);
        out.extend_from_slice(&self.seed);
        for &c in &self.b {
            out.extend_from_slice(&c.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PqcError> {
        let (params, body) = parse_key_header(bytes, b'P')?;
        if body.len() != 32 + 2 * params.n {
            return Err(key_err(format!("public key body has {} bytes", body.len())));
        }
        let seed: [u8; 32] = body[..32].try_into().expect("length checked");
        let b = read_coeffs(&body[32..], params.q)?;
        Ok(Self {
            a: expand_public(&seed, &params),
            params,
            seed,
            b,
        })
    }
}

impl SecretKey {
    pub fn coefficients(&self) -> &[i8] {
        &self.s
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let q = self.params.q as i32;
        let mut out = key_header(b'S', &self.params);
        for &c in &self.s {
            out.extend_from_slice(&((c as i32).rem_euclid(q) as u16).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PqcError> {
        let (params, body) = parse_key_header(bytes, b'S')?;
        if body.len() != 2 * params.n {
            return Err(key_err(format!("secret key body has {} bytes", body.len())));
        }
        let q = params.q as i32;
        let s = read_coeffs(body, params.q)?
            .into_iter()
            .map(|c| match centered(c as i32, q) {
                x @ -1..=1 => Ok(x as i8),
                x => Err(key_err(format!("secret coefficient {x} is not ternary"))),
            })
            .collect::<Result<_, _>>()?;
        Ok(Self { params, s })
    }
}

fn key_err(why: String) -> PqcError {
    PqcError::Format { what: "key file", why }
}

fn key_header(kind: u8, params: &LweParams) -> Vec<u8> {
    let mut out = KEY_MAGIC.to_vec();
    out.push(kind);
    out.extend_from_slice(&(params.n as u16).to_le_bytes());
    out.extend_from_slice(&params.q.to_le_bytes());
    out
}

fn parse_key_header(bytes: &[u8], kind: u8) -> Result<(LweParams, &[u8]), PqcError> {
    if bytes.len() < 13 || &bytes[..8] != KEY_MAGIC {
        return Err(key_err("missing SRNLWE01 magic".into()));
    }
    if bytes[8] != kind {
        return Err(key_err(format!("expected key kind {:?}", kind as char)));
    }
    let n = u16::from_le_bytes([bytes[9], bytes[10]]) as usize;
    let q = u16::from_le_bytes([bytes[11], bytes[12]]);
    let params = LweParams {
        n,
        q,
        repetition: n / (BLOCK_BYTES * 8),
    };
    params.validate()?;
    Ok((params, &bytes[13..]))
}

fn read_coeffs(body: &[u8], q: u16) -> Result<Vec<u16>, PqcError> {
    body.chunks_exact(2)
        .map(|c| {
            let v = u16::from_le_bytes([c[0], c[1]]);
            if v < q {
                Ok(v)
            } else {
                Err(key_err(format!("coefficient {v} ≥ q")))
            }
        })
        .collect()
}

pub fn keygen<R: RngCore + ?Sized>(params: LweParams, rng: &mut R) -> Result<LweKeypair, PqcError> {
    params.validate()?;
    let mut seed = [0u8; 32];
    rng.fill_bytes(&mut seed);
    let a = expand_public(&seed, &params);
    let s = ternary(rng, params.n);
    let e = ternary(rng, params.n);
    let q = params.q as i32;
    let b = mul_ternary(&a, &s, params.q)
        .iter()
        .zip(&e)
        .map(|(&x, &err)| (x + err as i32).rem_euclid(q) as u16)
        .collect();
    Ok(LweKeypair {
        public: PublicKey {
            params,
            seed,
            a,
            b,
        },
        secret: SecretKey { params, s },
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CiphertextBlock {
    bytes: Vec<u8>,
}

impl CiphertextBlock {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PqcError> {
        if bytes.len() != CIPHERTEXT_BYTES {
            return Err(PqcError::CiphertextSize(bytes.len()));
        }
        Ok(Self {
            bytes: bytes.to_vec(),
        })
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn c1(&self) -> &[u8] {
        &self.bytes[..CIPHERTEXT_BYTES / 2]
    }

    pub fn c2(&self) -> &[u8] {
        &self.bytes[CIPHERTEXT_BYTES / 2..]
    }
}

pub fn encrypt_block<R: RngCore + ?Sized>(
    pk: &PublicKey,
    block: &[u8],
    rng: &mut R,
) -> Result<CiphertextBlock, PqcError> {
    if block.len() != BLOCK_BYTES {
        return Err(PqcError::BlockSize(block.len()));
    }
    let p = &pk.params;
    let q = p.q as i32;
    let r = ternary(rng, p.n);
    let e1 = ternary(rng, p.n);
    let e2 = ternary(rng, p.n);
    let c1 = mul_ternary(&pk.a, &r, p.q);
    let mut c2 = mul_ternary(&pk.b, &r, p.q);
    let bits = BLOCK_BYTES * 8;
    for i in 0..bits {
        if (block[i / 8] >> (i % 8)) & 1 == 1 {
            for rep in 0..p.repetition {
                c2[i + rep * bits] += p.half_q();
            }
        }
    }
    let mut bytes = Vec::with_capacity(p.ciphertext_bytes());
    bytes.extend(c1.iter().zip(&e1).map(|(&x, &e)| (x + e as i32).rem_euclid(q) as u8));
    bytes.extend(c2.iter().zip(&e2).map(|(&x, &e)| (x + e as i32).rem_euclid(q) as u8));
    Ok(CiphertextBlock { bytes })
}

/// Decrypts one block. A wrong key yields unrelated bytes rather than an error.
pub fn decrypt_block(sk: &SecretKey, ct: &CiphertextBlock) -> [u8; BLOCK_BYTES] {
    let p = &sk.params;
    let q = p.q as i32;
    let c1: Vec<u16> = ct.c1().iter().map(|&x| x as u16).collect();
    let c1s = mul_ternary(&c1, &sk.s, p.q);
    let bits = BLOCK_BYTES * 8;
    let mut out = [0u8; BLOCK_BYTES];
    for i in 0..bits {
        let dist: i32 = (0..p.repetition)
            .map(|rep| {
                let j = i + rep * bits;
                centered(ct.c2()[j] as i32 - c1s[j], q).abs()
            })
            .sum();
        if 2 * dist > p.repetition as i32 * p.half_q() {
            out[i / 8] |= 1 << (i % 8);
        }
    }
    out
}

/// A sequence of ciphertext blocks plus the plaintext length needed to strip
/// the zero fill of the last block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CiphertextStream {
    pub plaintext_len: u32,
    pub blocks: Vec<CiphertextBlock>,
}

/// Number of blocks for a plaintext of `len` bytes (an empty plaintext still
/// produces one block).
pub fn stream_blocks(len: usize) -> usize {
    len.div_ceil(BLOCK_BYTES).max(1)
}

pub fn encrypt_stream<R: RngCore + ?Sized>(
    pk: &PublicKey,
    data: &[u8],
    rng: &mut R,
) -> Result<CiphertextStream, PqcError> {
    let plaintext_len = u32::try_from(data.len())
        .map_err(|_| PqcError::Padding("plaintext longer than 4 GiB".into()))?;
    let count = stream_blocks(data.len());
    let mut blocks = Vec::with_capacity(count);
    for i in 0..count {
        let mut chunk = [0u8; BLOCK_BYTES];
        let lo = i * BLOCK_BYTES;
        let hi = (lo + BLOCK_BYTES).min(data.len());
        if lo < hi {
            chunk[..hi - lo].copy_from_slice(&data[lo..hi]);
        }
        blocks.push(encrypt_block(pk, &chunk, rng)?);
    }
    Ok(CiphertextStream {
        plaintext_len,
        blocks,
    })
}

pub fn decrypt_stream(sk: &SecretKey, stream: &CiphertextStream) -> Result<Vec<u8>, PqcError> {
    let len = stream.plaintext_len as usize;
    let expected = stream_blocks(len);
    if stream.blocks.len() != expected {
        return Err(PqcError::Padding(format!(
            "{} bytes need {expected} blocks, stream has {}",
            len,
            stream.blocks.len()
        )));
    }
    let mut out = Vec::with_capacity(expected * BLOCK_BYTES);
    for b in &stream.blocks {
        out.extend_from_slice(&decrypt_block(sk, b));
    }
    if out[len..].iter().any(|&x| x != 0) {
        return Err(PqcError::Padding("non-zero fill after the plaintext".into()));
    }
    out.truncate(len);
    Ok(out)
}

impl CiphertextStream {
    /// Total ciphertext bytes, excluding the stream header.
    pub fn ciphertext_bytes(&self) -> usize {
        self.blocks.len() * CIPHERTEXT_BYTES
    }

    /// `SRNCT001 ‖ block count (u32 BE) ‖ plaintext length (u32 BE) ‖ blocks`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(STREAM_HEADER_BYTES + self.ciphertext_bytes());
        out.extend_from_slice(STREAM_MAGIC);
        out.extend_from_slice(&(self.blocks.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.plaintext_len.to_be_bytes());
        for b in &self.blocks {
            out.extend_from_slice(b.as_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PqcError> {
        let err = |why: String| PqcError::Format {
            what: "ciphertext stream",
            why,
        };
        if bytes.len() < STREAM_HEADER_BYTES || &bytes[..8] != STREAM_MAGIC {
            return Err(err("missing SRNCT001 header".into()));
        }
        let count = u32::from_be_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let plaintext_len = u32::from_be_bytes(bytes[12..16].try_into().unwrap());
        let body = &bytes[STREAM_HEADER_BYTES..];
        if body.len() < count * CIPHERTEXT_BYTES {
            return Err(err(format!(
                "header announces {count} blocks, body holds {} bytes",
                body.len()
            )));
        }
        let blocks = body[..count * CIPHERTEXT_BYTES]
            .chunks_exact(CIPHERTEXT_BYTES)
            .map(CiphertextBlock::from_bytes)
            .collect::<Result<_, _>>()?;
        Ok(Self {
            plaintext_len,
            blocks,
        })
    }

    /// Length in bytes of the serialized stream announced by a header prefix.
    pub fn serialized_len(header: &[u8]) -> Option<usize> {
        if header.len() < STREAM_HEADER_BYTES || &header[..8] != STREAM_MAGIC {
            return None;
        }
        let count = u32::from_be_bytes(header[8..12].try_into().ok()?) as usize;
        Some(STREAM_HEADER_BYTES + count * CIPHERTEXT_BYTES)
    }
}

/// Convenience: random 32-byte block.
pub fn random_block<R: Rng + ?Sized>(rng: &mut R) -> [u8; BLOCK_BYTES] {
    let mut b = [0u8; BLOCK_BYTES];
    rng.fill_bytes(&mut b);
    b
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn kp(seed: u64) -> LweKeypair {
        keygen(LweParams::default(), &mut rng(seed)).unwrap()
    }

    #[test]
    fn negacyclic_product_matches_schoolbook() {
        let q = 251u16;
        let mut r = rng(3);
        let n = 16;
        let a: Vec<u16> = (0..n).map(|_| r.gen_range(0..q)).collect();
        let t = ternary(&mut r, n);
        let mut want = vec![0i64; n];
        for i in 0..n {
            for j in 0..n {
                let v = a[i] as i64 * t[j] as i64;
                if i + j < n {
                    want[i + j] += v;
                } else {
                    want[i + j - n] -= v;
                }
            }
        }
        let got = mul_ternary(&a, &t, q);
        for (g, w) in got.iter().zip(&want) {
            assert_eq!(*g as i64, w.rem_euclid(q as i64));
        }
    }

    #[test]
    fn ternary_distribution() {
        let xs = ternary(&mut rng(1), 40_000);
        let count = |v: i8| xs.iter().filter(|&&x| x == v).count() as f64 / 40_000.0;
        assert!((count(0) - 0.5).abs() < 0.01);
        assert!((count(1) - 0.25).abs() < 0.01);
        assert!((count(-1) - 0.25).abs() < 0.01);
    }

    #[test]
    fn keygen_is_deterministic_and_consistent() {
        assert_eq!(kp(5), kp(5));
        let k = kp(5);
        let q = 251;
        let as_ = mul_ternary(&k.public.a, &k.secret.s, q);
        for (b, x) in k.public.b.iter().zip(&as_) {
            let e = centered(*b as i32 - x, q as i32);
            assert!((-1..=1).contains(&e));
        }
    }

    #[test]
    fn block_shape_and_roundtrip() {
        let k = kp(1);
        let mut r = rng(2);
        for block in [[0u8; 32], [0xff; 32], random_block(&mut r)] {
            let ct = encrypt_block(&k.public, &block, &mut r).unwrap();
            assert_eq!(ct.as_bytes().len(), CIPHERTEXT_BYTES);
            assert_eq!(decrypt_block(&k.secret, &ct), block);
        }
        assert_eq!(
            encrypt_block(&k.public, &[0; 31], &mut r),
            Err(PqcError::BlockSize(31))
        );
    }

    #[test]
    fn single_bit_flip_propagates_to_that_bit_only() {
        let k = kp(1);
        let mut r = rng(9);
        let m = random_block(&mut r);
        for bit in [0usize, 77, 255] {
            let mut m2 = m;
            m2[bit / 8] ^= 1 << (bit % 8);
            let d = decrypt_block(&k.secret, &encrypt_block(&k.public, &m2, &mut r).unwrap());
            let diff: Vec<usize> = (0..256)
                .filter(|&i| ((d[i / 8] ^ m[i / 8]) >> (i % 8)) & 1 == 1)
                .collect();
            assert_eq!(diff, vec![bit]);
        }
    }

    #[test]
    fn key_files_roundtrip_and_reject_garbage() {
        let k = kp(4);
        let pk = k.public.to_bytes();
        let sk = k.secret.to_bytes();
        assert_eq!(&pk[..8], KEY_MAGIC);
        assert_eq!(pk.len(), 13 + 32 + 1024);
        assert_eq!(PublicKey::from_bytes(&pk).unwrap(), k.public);
        assert_eq!(SecretKey::from_bytes(&sk).unwrap(), k.secret);
        assert!(PublicKey::from_bytes(&sk).is_err());
        assert!(SecretKey::from_bytes(&pk[..20]).is_err());
        let mut bad = sk.clone();
        bad[13] = 7;
        assert!(SecretKey::from_bytes(&bad).is_err());
    }

    #[test]
    fn stream_header_layout() {
        let k = kp(1);
        let s = encrypt_stream(&k.public, b"hello", &mut rng(1)).unwrap();
        let bytes = s.to_bytes();
        assert_eq!(&bytes[..8], b"SRNCT001");
        assert_eq!(&bytes[8..12], &1u32.to_be_bytes());
        assert_eq!(&bytes[12..16], &5u32.to_be_bytes());
        assert_eq!(bytes.len(), 16 + 1024);
        assert_eq!(CiphertextStream::serialized_len(&bytes), Some(bytes.len()));
        assert_eq!(CiphertextStream::from_bytes(&bytes).unwrap(), s);
        assert!(CiphertextStream::from_bytes(&bytes[..1000]).is_err());
    }

    #[test]
    fn empty_and_ff_streams() {
        let k = kp(1);
        let mut r = rng(2);
        let e = encrypt_stream(&k.public, &[], &mut r).unwrap();
        assert_eq!(e.blocks.len(), 1);
        assert!(decrypt_stream(&k.secret, &e).unwrap().is_empty());
        let ff = encrypt_stream(&k.public, &[0xff; 32], &mut r).unwrap();
        assert_eq!(ff.blocks.len(), 1);
        assert_eq!(decrypt_stream(&k.secret, &ff).unwrap(), vec![0xff; 32]);
    }

    #[test]
    fn truncated_stream_is_a_padding_error() {
        let k = kp(1);
        let mut s = encrypt_stream(&k.public, &[7u8; 100], &mut rng(3)).unwrap();
        assert_eq!(s.blocks.len(), 4);
        s.blocks.pop();
        assert!(matches!(decrypt_stream(&k.secret, &s), Err(PqcError::Padding(_))));
    }
}
