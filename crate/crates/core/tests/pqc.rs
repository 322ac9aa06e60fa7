mod common;

use std::collections::HashSet;

use common::lwe::{decryption_noise, key_error, FailureOracle};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use srn_core::pqc::{
    decrypt_block, decrypt_stream, encrypt_block, encrypt_stream, keygen, random_block, CiphertextStream,
    LweKeypair, LweParams, PqcError, PublicKey, SecretKey, BLOCK_BYTES, CIPHERTEXT_BYTES,
};

fn pair(seed: u64) -> LweKeypair {
    keygen(LweParams::default(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

#[test]
fn keygen_is_deterministic() {
    assert_eq!(pair(1), pair(1));
}

#[test]
fn distinct_seeds_give_distinct_secrets() {
    let secrets: HashSet<Vec<i8>> = (0..100).map(|s| pair(s).secret.coefficients().to_vec()).collect();
    assert_eq!(secrets.len(), 100);
}

#[test]
fn key_error_is_ternary() {
    for seed in 0..5 {
        let kp = pair(seed);
        let e = key_error(&kp);
        assert!(e.iter().all(|x| (-1..=1).contains(x)));
        // the ternary distribution puts about half the mass on zero
        let zeros = e.iter().filter(|&&x| x == 0).count();
        assert!((150..362).contains(&zeros), "{zeros}");
        assert!(kp.public.b().iter().all(|&x| x < 251));
    }
}

#[test]
fn ciphertext_shape() {
    let kp = pair(2);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let ct = encrypt_block(&kp.public, &random_block(&mut rng), &mut rng).unwrap();
        assert_eq!(ct.as_bytes().len(), CIPHERTEXT_BYTES);
        assert_eq!(ct.c1().len() + ct.c2().len(), 1024);
    }
    assert_eq!(
        encrypt_block(&kp.public, &[0; 31], &mut rng),
        Err(PqcError::BlockSize(31))
    );
}

#[test]
fn encryption_is_randomized() {
    let kp = pair(3);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let block = [0x5a; BLOCK_BYTES];
    let cts: HashSet<Vec<u8>> = (0..100)
        .map(|_| encrypt_block(&kp.public, &block, &mut rng).unwrap().as_bytes().to_vec())
        .collect();
    assert_eq!(cts.len(), 100);
}

#[test]
fn encryption_is_deterministic_given_the_stream() {
    let kp = pair(4);
    let block = [7u8; BLOCK_BYTES];
    let a = encrypt_block(&kp.public, &block, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    let b = encrypt_block(&kp.public, &block, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn ten_thousand_block_roundtrips() {
    let kp = pair(5);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut failures = 0;
    for _ in 0..10_000 {
        let b = random_block(&mut rng);
        let ct = encrypt_block(&kp.public, &b, &mut rng).unwrap();
        failures += usize::from(decrypt_block(&kp.secret, &ct) != b);
    }
    let oracle = FailureOracle::for_key(&kp);
    assert!(oracle.block_failure_random() < 1e-3);
    assert_eq!(failures, 0);
}

#[test]
fn fixed_blocks_roundtrip() {
    let kp = pair(6);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for block in [[0u8; BLOCK_BYTES], [0xff; BLOCK_BYTES]] {
        let ct = encrypt_block(&kp.public, &block, &mut rng).unwrap();
        assert_eq!(decrypt_block(&kp.secret, &ct), block);
    }
}

#[test]
fn flipping_one_message_bit_flips_one_output_bit() {
    let kp = pair(7);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for i in [0usize, 1, 77, 255] {
        let m = random_block(&mut rng);
        let mut m2 = m;
        m2[i / 8] ^= 1 << (i % 8);
        let d1 = decrypt_block(&kp.secret, &encrypt_block(&kp.public, &m, &mut rng).unwrap());
        let d2 = decrypt_block(&kp.secret, &encrypt_block(&kp.public, &m2, &mut rng).unwrap());
        let diff: u32 = d1.iter().zip(&d2).map(|(a, b)| (a ^ b).count_ones()).sum();
        assert_eq!(diff, 1);
        assert_eq!((d1[i / 8] ^ d2[i / 8]) >> (i % 8) & 1, 1);
    }
}

#[test]
fn wrong_key_never_recovers_the_block() {
    let kp = pair(8);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut matches = 0;
    for t in 0..1000 {
        let other = pair(10_000 + t);
        let m = random_block(&mut rng);
        let ct = encrypt_block(&kp.public, &m, &mut rng).unwrap();
        matches += usize::from(decrypt_block(&other.secret, &ct) == m);
    }
    assert_eq!(matches, 0);
}

#[test]
fn decryption_noise_matches_the_oracle() {
    let kp = pair(9);
    let oracle = FailureOracle::for_key(&kp);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut samples = Vec::new();
    for _ in 0..200 {
        let m = random_block(&mut rng);
        let ct = encrypt_block(&kp.public, &m, &mut rng).unwrap();
        samples.extend(decryption_noise(&kp, &m, ct.as_bytes()));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<i64>() as f64 / n;
    let var = samples.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / n;
    // sample variance of ~100k correlated-in-blocks draws; 5% relative slack
    assert!(mean.abs() < 0.5, "{mean}");
    assert!((var / oracle.variance() - 1.0).abs() < 0.05, "{var} vs {}", oracle.variance());
    // central mass agrees with the PMF
    let within_sigma = samples.iter().filter(|&&x| (x as f64).abs() <= oracle.variance().sqrt()).count() as f64 / n;
    let pmf_mass: f64 = oracle
        .noise
        .iter()
        .enumerate()
        .filter(|(i, _)| ((*i as i64 - oracle.offset) as f64).abs() <= oracle.variance().sqrt())
        .map(|(_, p)| p)
        .sum();
    assert!((within_sigma - pmf_mass).abs() < 0.01, "{within_sigma} vs {pmf_mass}");
}

#[test]
fn paper_sized_file_encrypts_to_800_kilobytes() {
    let kp = pair(10);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let data: Vec<u8> = (0..25_600).map(|_| rng.gen()).collect();
    let stream = encrypt_stream(&kp.public, &data, &mut rng).unwrap();
    assert_eq!(stream.blocks.len(), 800);
    assert_eq!(stream.ciphertext_bytes(), 819_200);
    assert_eq!(stream.to_bytes().len(), 819_200 + 16);
    assert_eq!(decrypt_stream(&kp.secret, &stream).unwrap(), data);
}

#[test]
fn empty_stream() {
    let kp = pair(11);
    let stream = encrypt_stream(&kp.public, &[], &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
    assert_eq!(stream.blocks.len(), 1);
    assert_eq!(decrypt_stream(&kp.secret, &stream).unwrap(), Vec::<u8>::new());
}

#[test]
fn truncated_stream_is_a_padding_error() {
    let kp = pair(12);
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let data: Vec<u8> = (0..100).map(|_| rng.gen()).collect();
    let mut stream = encrypt_stream(&kp.public, &data, &mut rng).unwrap();
    stream.blocks.pop();
    assert!(matches!(decrypt_stream(&kp.secret, &stream), Err(PqcError::Padding(_))));
    let wire = encrypt_stream(&kp.public, &data, &mut rng).unwrap().to_bytes();
    assert!(CiphertextStream::from_bytes(&wire[..wire.len() - 1]).is_err());
}

#[test]
fn reordered_blocks_do_not_reproduce_the_payload() {
    let kp = pair(13);
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..20 {
        let data: Vec<u8> = (0..rng.gen_range(65..400)).map(|_| rng.gen()).collect();
        let mut stream = encrypt_stream(&kp.public, &data, &mut rng).unwrap();
        let last = stream.blocks.len() - 1;
        stream.blocks.swap(0, rng.gen_range(1..=last));
        match decrypt_stream(&kp.secret, &stream) {
            Ok(out) => assert_ne!(out, data),
            Err(e) => assert!(matches!(e, PqcError::Padding(_))),
        }
    }
}

#[test]
fn key_files_roundtrip() {
    let kp = pair(14);
    let pk = kp.public.to_bytes();
    let sk = kp.secret.to_bytes();
    assert_eq!(&pk[..8], b"SRNLWE01");
    assert_eq!(&sk[..8], b"SRNLWE01");
    assert_eq!(PublicKey::from_bytes(&pk).unwrap(), kp.public);
    assert_eq!(SecretKey::from_bytes(&sk).unwrap(), kp.secret);
    assert!(PublicKey::from_bytes(&sk).is_err());
    assert!(SecretKey::from_bytes(&pk[..20]).is_err());
}

#[test]
fn stream_header_layout() {
    let kp = pair(15);
    let wire = encrypt_stream(&kp.public, &[1, 2, 3], &mut ChaCha8Rng::seed_from_u64(15))
        .unwrap()
        .to_bytes();
    assert_eq!(&wire[..8], b"SRNCT001");
    assert_eq!(u32::from_be_bytes(wire[8..12].try_into().unwrap()), 1);
    assert_eq!(u32::from_be_bytes(wire[12..16].try_into().unwrap()), 3);
    assert_eq!(CiphertextStream::serialized_len(&wire[..16]), Some(16 + 1024));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn streams_roundtrip(len in 0usize..=4096, seed: u64) {
        // a small pool of keys keeps 1000 cases affordable
        static KEYS: std::sync::OnceLock<Vec<LweKeypair>> = std::sync::OnceLock::new();
        let keys = KEYS.get_or_init(|| (0..4).map(|s| pair(100 + s)).collect());
        let kp = &keys[(seed % 4) as usize];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
        let stream = encrypt_stream(&kp.public, &data, &mut rng).unwrap();
        prop_assert_eq!(stream.blocks.len(), len.div_ceil(32).max(1));
        let wire = stream.to_bytes();
        let parsed = CiphertextStream::from_bytes(&wire).unwrap();
        prop_assert_eq!(&parsed, &stream);
        // blocks fail independently at about 2e-5, so a case of up to 129
        // blocks may carry one failure; two in one case is a ~1e-3 event per run
        let mut padded = data.clone();
        padded.resize(parsed.blocks.len() * BLOCK_BYTES, 0);
        let failed = parsed
            .blocks
            .iter()
            .zip(padded.chunks(BLOCK_BYTES))
            .filter(|(b, m)| decrypt_block(&kp.secret, b)[..] != m[..])
            .count();
        prop_assert!(failed <= 1, "{failed} blocks failed");
        if failed == 0 {
            prop_assert_eq!(decrypt_stream(&kp.secret, &parsed).unwrap(), data);
        }
    }
}
