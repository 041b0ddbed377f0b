//! Exponential ElGamal with n-of-n additive key shares, disjunctive bit
//! proofs and verifiable partial decryptions.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::schnorr::{self, SigningKey};
use crate::crypto::{hash_to_scalar, GroupElement, GroupError, GroupParams, Scalar, SeededRng};

pub const CIPHERTEXT_TAG: u8 = 0x02;
pub const BIT_PROOF_TAG: u8 = 0x03;
const BIT_PROOF_DOMAIN: &[u8] = b"CDS-bit";
const EQUALITY_DOMAIN: &[u8] = b"CP-eq";
const KEY_POSSESSION_DOMAIN: &[u8] = b"dkg-pok";

/// Position of a key holder in the decryption roster.
pub type ShareIndex = u32;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ThresholdError {
    #[error("plaintext bit must be 0 or 1, got {0}")]
    NotABit(u64),
    #[error("empty roster")]
    EmptyRoster,
    #[error("duplicate share index {0}")]
    DuplicateIndex(ShareIndex),
    #[error("key share {0} lacks a valid proof of possession")]
    BadKeyProof(ShareIndex),
    #[error("partial decryption from share {0} is missing")]
    MissingPart(ShareIndex),
    #[error("partial decryption from share {0} does not verify")]
    InvalidPart(ShareIndex),
    #[error("partial decryption from share {0} is not in the roster")]
    UnknownPart(ShareIndex),
    #[error("plaintext out of range")]
    PlaintextOutOfRange,
    #[error("malformed encoding")]
    Encoding(#[from] GroupError),
}

#[derive(Clone, Debug)]
pub struct KeyShare {
    owner: ShareIndex,
    secret: Scalar,
    public: GroupElement,
}

impl KeyShare {
    pub fn owner(&self) -> ShareIndex {
        self.owner
    }

    pub fn public(&self) -> GroupElement {
        self.public
    }

    /// Public half plus a Schnorr proof of knowledge of the secret, bound to
    /// the owner index and the DKG context (rules out rogue-key shares).
    pub fn announce(&self, params: &GroupParams, context: &[u8]) -> ShareAnnouncement {
        let key = SigningKey::from_secret(params, self.secret);
        let proof = key.sign(params, &pok_message(self.owner, context));
        ShareAnnouncement { owner: self.owner, public: self.public, proof }
    }
}

fn pok_message(owner: ShareIndex, context: &[u8]) -> Vec<u8> {
    let mut msg = KEY_POSSESSION_DOMAIN.to_vec();
    msg.extend(owner.to_be_bytes());
    msg.extend(context);
    msg
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShareAnnouncement {
    pub owner: ShareIndex,
    pub public: GroupElement,
    pub proof: schnorr::Signature,
}

impl ShareAnnouncement {
    pub fn verify(&self, params: &GroupParams, context: &[u8]) -> bool {
        schnorr::verify(params, &self.public, &pok_message(self.owner, context), &self.proof)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JointPublicKey {
    key: GroupElement,
    roster: BTreeMap<ShareIndex, GroupElement>,
}

impl JointPublicKey {
    pub fn key(&self) -> GroupElement {
        self.key
    }

    pub fn roster(&self) -> impl Iterator<Item = (ShareIndex, GroupElement)> + '_ {
        self.roster.iter().map(|(i, y)| (*i, *y))
    }

    pub fn len(&self) -> usize {
        self.roster.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roster.is_empty()
    }

    pub fn share_public(&self, index: ShareIndex) -> Option<GroupElement> {
        self.roster.get(&index).copied()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Ciphertext {
    pub c1: GroupElement,
    pub c2: GroupElement,
}

impl Ciphertext {
    pub fn to_bytes(&self, params: &GroupParams) -> Vec<u8> {
        let mut out = vec![CIPHERTEXT_TAG];
        out.extend(params.element_bytes(&self.c1));
        out.extend(params.element_bytes(&self.c2));
        out
    }

    pub fn from_bytes(params: &GroupParams, bytes: &[u8]) -> Result<Self, ThresholdError> {
        let w = params.width();
        if bytes.len() != 1 + 2 * w || bytes[0] != CIPHERTEXT_TAG {
            return Err(GroupError::BadEncoding.into());
        }
        Ok(Ciphertext {
            c1: params.element_from_bytes(&bytes[1..1 + w])?,
            c2: params.element_from_bytes(&bytes[1 + w..])?,
        })
    }
}

/// Cramer-Damgård-Schoenmakers OR-proof that a ciphertext encrypts 0 or 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitProof {
    pub e0: Scalar,
    pub z0: Scalar,
    pub e1: Scalar,
    pub z1: Scalar,
    pub a0: GroupElement,
    pub b0: GroupElement,
    pub a1: GroupElement,
    pub b1: GroupElement,
}

impl BitProof {
    pub fn to_bytes(&self, params: &GroupParams) -> Vec<u8> {
        let mut out = vec![BIT_PROOF_TAG];
        for s in [&self.e0, &self.z0, &self.e1, &self.z1] {
            out.extend(params.scalar_bytes(s));
        }
        for e in [&self.a0, &self.b0, &self.a1, &self.b1] {
            out.extend(params.element_bytes(e));
        }
        out
    }

    pub fn from_bytes(params: &GroupParams, bytes: &[u8]) -> Result<Self, ThresholdError> {
        let w = params.width();
        if bytes.len() != 1 + 8 * w || bytes[0] != BIT_PROOF_TAG {
            return Err(GroupError::BadEncoding.into());
        }
        let chunk = |i: usize| &bytes[1 + i * w..1 + (i + 1) * w];
        Ok(BitProof {
            e0: params.scalar_from_bytes(chunk(0))?,
            z0: params.scalar_from_bytes(chunk(1))?,
            e1: params.scalar_from_bytes(chunk(2))?,
            z1: params.scalar_from_bytes(chunk(3))?,
            a0: params.element_from_bytes(chunk(4))?,
            b0: params.element_from_bytes(chunk(5))?,
            a1: params.element_from_bytes(chunk(6))?,
            b1: params.element_from_bytes(chunk(7))?,
        })
    }
}

/// Chaum-Pedersen proof that `log_g(y_i) = log_c1(d_i)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EqualityProof {
    pub challenge: Scalar,
    pub response: Scalar,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartialDecryption {
    pub owner: ShareIndex,
    pub share: GroupElement,
    pub proof: EqualityProof,
}

pub fn dkg_contribute(params: &GroupParams, owner: ShareIndex, rng: &mut SeededRng) -> KeyShare {
    let secret = params.random_nonzero_scalar(rng);
    KeyShare { owner, secret, public: params.exp_g(&secret) }
}

pub fn aggregate_public_key(
    params: &GroupParams,
    shares: &[(ShareIndex, GroupElement)],
) -> Result<JointPublicKey, ThresholdError> {
    if shares.is_empty() {
        return Err(ThresholdError::EmptyRoster);
    }
    let mut roster = BTreeMap::new();
    let mut key = params.identity();
    for (index, y) in shares {
        if roster.insert(*index, *y).is_some() {
            return Err(ThresholdError::DuplicateIndex(*index));
        }
        key = key * *y;
    }
    Ok(JointPublicKey { key, roster })
}

/// Aggregates announcements after checking every proof of possession.
pub fn aggregate_announcements(
    params: &GroupParams,
    announcements: &[ShareAnnouncement],
    context: &[u8],
) -> Result<JointPublicKey, ThresholdError> {
    if let Some(bad) = announcements.iter().find(|a| !a.verify(params, context)) {
        return Err(ThresholdError::BadKeyProof(bad.owner));
    }
    let shares: Vec<_> = announcements.iter().map(|a| (a.owner, a.public)).collect();
    aggregate_public_key(params, &shares)
}

/// Encrypts `g^m` under `y` with explicit randomness `r`.
pub fn encrypt_with_randomness(params: &GroupParams, y: &JointPublicKey, m: u64, r: &Scalar) -> Ciphertext {
    Ciphertext { c1: params.exp_g(r), c2: params.g().pow_u64(m) * y.key.pow(r) }
}

pub fn encrypt_bit(
    params: &GroupParams,
    y: &JointPublicKey,
    bit: u64,
    rng: &mut SeededRng,
) -> Result<(Ciphertext, BitProof), ThresholdError> {
    let r = params.random_scalar(rng);
    encrypt_bit_with_randomness(params, y, bit, &r, rng)
}

pub fn encrypt_bit_with_randomness(
    params: &GroupParams,
    y: &JointPublicKey,
    bit: u64,
    r: &Scalar,
    rng: &mut SeededRng,
) -> Result<(Ciphertext, BitProof), ThresholdError> {
    if bit > 1 {
        return Err(ThresholdError::NotABit(bit));
    }
    let ct = encrypt_with_randomness(params, y, bit, r);
    let proof = prove_bit(params, y, &ct, bit, r, rng);
    Ok((ct, proof))
}

fn bit_challenge(params: &GroupParams, ct: &Ciphertext, commitments: [&GroupElement; 4]) -> Scalar {
    let parts: Vec<Vec<u8>> = [&ct.c1, &ct.c2]
        .into_iter()
        .chain(commitments)
        .map(|e| params.canonical_element(e))
        .collect();
    let refs: Vec<&[u8]> = parts.iter().map(Vec::as_slice).collect();
    hash_to_scalar(params, BIT_PROOF_DOMAIN, &refs)
}

/// Runs the OR-prover claiming the plaintext is `claimed`. Only produces a
/// verifying proof when the claim and `r` are true of `ct`.
pub(crate) fn prove_bit(
    params: &GroupParams,
    y: &JointPublicKey,
    ct: &Ciphertext,
    claimed: u64,
    r: &Scalar,
    rng: &mut SeededRng,
) -> BitProof {
    let g = params.g();
    let yk = y.key;
    let real = claimed as usize;
    let fake = 1 - real;

    // Simulated branch: choose its challenge and response, back out commitments.
    let fake_e = params.random_scalar(rng);
    let fake_z = params.random_scalar(rng);
    let fake_target = ct.c2 * g.pow_u64(fake as u64).invert();
    let fake_a = params.exp_g(&fake_z) * ct.c1.pow(&(-fake_e));
    let fake_b = yk.pow(&fake_z) * fake_target.pow(&(-fake_e));

    let w = params.random_scalar(rng);
    let real_a = params.exp_g(&w);
    let real_b = yk.pow(&w);

    let (a0, b0, a1, b1) = if real == 0 {
        (real_a, real_b, fake_a, fake_b)
    } else {
        (fake_a, fake_b, real_a, real_b)
    };
    let e = bit_challenge(params, ct, [&a0, &b0, &a1, &b1]);
    let real_e = e - fake_e;
    let real_z = w + real_e * *r;
    let (e0, z0, e1, z1) = if real == 0 {
        (real_e, real_z, fake_e, fake_z)
    } else {
        (fake_e, fake_z, real_e, real_z)
    };
    BitProof { e0, z0, e1, z1, a0, b0, a1, b1 }
}

pub fn verify_bit_proof(params: &GroupParams, y: &JointPublicKey, ct: &Ciphertext, proof: &BitProof) -> bool {
    let elements = [&ct.c1, &ct.c2, &proof.a0, &proof.b0, &proof.a1, &proof.b1];
    if !elements.iter().all(|e| params.contains(e)) {
        return false;
    }
    let e = bit_challenge(params, ct, [&proof.a0, &proof.b0, &proof.a1, &proof.b1]);
    if proof.e0 + proof.e1 != e {
        return false;
    }
    let g = params.g();
    let branch = |m: u64, ek: &Scalar, zk: &Scalar, ak: &GroupElement, bk: &GroupElement| {
        let target = ct.c2 * g.pow_u64(m).invert();
        params.exp_g(zk) == *ak * ct.c1.pow(ek) && y.key.pow(zk) == *bk * target.pow(ek)
    };
    branch(0, &proof.e0, &proof.z0, &proof.a0, &proof.b0)
        && branch(1, &proof.e1, &proof.z1, &proof.a1, &proof.b1)
}

pub fn add_ciphertexts(a: &Ciphertext, b: &Ciphertext) -> Ciphertext {
    Ciphertext { c1: a.c1 * b.c1, c2: a.c2 * b.c2 }
}

/// Homomorphic sum of a non-empty list; the empty sum is `Enc(0; 0)`.
pub fn sum_ciphertexts<'a>(params: &GroupParams, cts: impl IntoIterator<Item = &'a Ciphertext>) -> Ciphertext {
    let zero = Ciphertext { c1: params.identity(), c2: params.identity() };
    cts.into_iter().fold(zero, |acc, c| add_ciphertexts(&acc, c))
}

fn equality_challenge(params: &GroupParams, statement: [&GroupElement; 4], commitments: [&GroupElement; 2]) -> Scalar {
    let parts: Vec<Vec<u8>> = statement
        .into_iter()
        .chain(commitments)
        .map(|e| params.canonical_element(e))
        .collect();
    let refs: Vec<&[u8]> = parts.iter().map(Vec::as_slice).collect();
    hash_to_scalar(params, EQUALITY_DOMAIN, &refs)
}

pub fn partial_decrypt(params: &GroupParams, share: &KeyShare, ct: &Ciphertext, rng: &mut SeededRng) -> PartialDecryption {
    let d = ct.c1.pow(&share.secret);
    let w = params.random_scalar(rng);
    let a = params.exp_g(&w);
    let b = ct.c1.pow(&w);
    let challenge = equality_challenge(params, [&params.g(), &share.public, &ct.c1, &d], [&a, &b]);
    PartialDecryption {
        owner: share.owner,
        share: d,
        proof: EqualityProof { challenge, response: w + challenge * share.secret },
    }
}

pub fn verify_partial_decryption(
    params: &GroupParams,
    share_public: &GroupElement,
    ct: &Ciphertext,
    part: &PartialDecryption,
) -> bool {
    if !params.contains(&part.share) || !params.contains(share_public) {
        return false;
    }
    let EqualityProof { challenge, response } = part.proof;
    let a = params.exp_g(&response) * share_public.pow(&(-challenge));
    let b = ct.c1.pow(&response) * part.share.pow(&(-challenge));
    equality_challenge(params, [&params.g(), share_public, &ct.c1, &part.share], [&a, &b]) == challenge
}

/// Joint decryption: needs one verifying part per roster member, then
/// searches `m ∈ [0, max_plaintext]` for `g^m = c2 / ∏ d_i`.
pub fn combine_decryptions(
    params: &GroupParams,
    ct: &Ciphertext,
    parts: &[PartialDecryption],
    roster: &JointPublicKey,
    max_plaintext: u64,
) -> Result<u64, ThresholdError> {
    let mut seen = BTreeSet::new();
    let mut product = params.identity();
    for part in parts {
        let Some(y) = roster.share_public(part.owner) else {
            return Err(ThresholdError::UnknownPart(part.owner));
        };
        if !seen.insert(part.owner) {
            return Err(ThresholdError::DuplicateIndex(part.owner));
        }
        if !verify_partial_decryption(params, &y, ct, part) {
            return Err(ThresholdError::InvalidPart(part.owner));
        }
        product = product * part.share;
    }
    if let Some((missing, _)) = roster.roster().find(|(i, _)| !seen.contains(i)) {
        return Err(ThresholdError::MissingPart(missing));
    }
    let target = ct.c2 * product.invert();
    let g = params.g();
    let mut acc = params.identity();
    for m in 0..=max_plaintext {
        if acc == target {
            return Ok(m);
        }
        acc = acc * g;
    }
    Err(ThresholdError::PlaintextOutOfRange)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::setup_group;

    fn committee(n: u32, seed: u64) -> (GroupParams, Vec<KeyShare>, JointPublicKey, SeededRng) {
        let mut rng = SeededRng::from_u64(seed);
        let params = setup_group(64, &mut rng).unwrap();
        let shares: Vec<_> = (1..=n).map(|i| dkg_contribute(&params, i, &mut rng)).collect();
        let publics: Vec<_> = shares.iter().map(|s| (s.owner(), s.public())).collect();
        let jpk = aggregate_public_key(&params, &publics).unwrap();
        (params, shares, jpk, rng)
    }

    fn decrypt(params: &GroupParams, shares: &[KeyShare], jpk: &JointPublicKey, ct: &Ciphertext, rng: &mut SeededRng) -> Result<u64, ThresholdError> {
        let parts: Vec<_> = shares.iter().map(|s| partial_decrypt(params, s, ct, rng)).collect();
        combine_decryptions(params, ct, &parts, jpk, shares.len() as u64)
    }

    #[test]
    fn toy_encryption_matches_hand_computation() {
        let params = GroupParams::new(23, 11, 2, 3).unwrap();
        let y = params.element(16).unwrap();
        // Independent check of the claimed values: 2^4 = 16, 2^3 = 8, 2·16^3 mod 23 = 4.
        assert_eq!((2u64.pow(4)) % 23, 16);
        assert_eq!(2u64.pow(3) % 23, 8);
        assert_eq!(2 * 16u64.pow(3) % 23, 4);
        let jpk = aggregate_public_key(&params, &[(1, y)]).unwrap();
        let ct = encrypt_with_randomness(&params, &jpk, 1, &params.scalar(3));
        assert_eq!((ct.c1.value(), ct.c2.value()), (8, 4));
        let zero = encrypt_with_randomness(&params, &jpk, 0, &params.zero());
        assert_eq!((zero.c1.value(), zero.c2.value()), (1, 1));
    }

    #[test]
    fn non_bit_rejected() {
        let (params, _, jpk, mut rng) = committee(2, 1);
        assert_eq!(encrypt_bit(&params, &jpk, 2, &mut rng).unwrap_err(), ThresholdError::NotABit(2));
    }

    #[test]
    fn aggregate_edge_cases() {
        let (params, shares, _, _) = committee(3, 2);
        let single = aggregate_public_key(&params, &[(1, shares[0].public())]).unwrap();
        assert_eq!(single.key(), shares[0].public());
        let fwd: Vec<_> = shares.iter().map(|s| (s.owner(), s.public())).collect();
        let mut rev = fwd.clone();
        rev.reverse();
        assert_eq!(aggregate_public_key(&params, &fwd).unwrap().key(), aggregate_public_key(&params, &rev).unwrap().key());
        let dup = [(1, shares[0].public()), (1, shares[1].public())];
        assert_eq!(aggregate_public_key(&params, &dup).unwrap_err(), ThresholdError::DuplicateIndex(1));
        assert_eq!(aggregate_public_key(&params, &[]).unwrap_err(), ThresholdError::EmptyRoster);
    }

    #[test]
    fn announcements_need_possession() {
        let (params, shares, _, _) = committee(2, 3);
        let mut anns: Vec<_> = shares.iter().map(|s| s.announce(&params, b"epoch-1")).collect();
        assert!(aggregate_announcements(&params, &anns, b"epoch-1").is_ok());
        assert_eq!(aggregate_announcements(&params, &anns, b"epoch-2").unwrap_err(), ThresholdError::BadKeyProof(1));
        // Rogue key: replace share 2's public with something whose log is unknown.
        anns[1].public = params.h();
        assert_eq!(aggregate_announcements(&params, &anns, b"epoch-1").unwrap_err(), ThresholdError::BadKeyProof(2));
    }

    #[test]
    fn bit_proofs_complete() {
        let (params, _, jpk, mut rng) = committee(3, 4);
        for bit in [0, 1] {
            let (ct, proof) = encrypt_bit(&params, &jpk, bit, &mut rng).unwrap();
            assert!(verify_bit_proof(&params, &jpk, &ct, &proof));
            assert_eq!(BitProof::from_bytes(&params, &proof.to_bytes(&params)).unwrap(), proof);
            assert_eq!(Ciphertext::from_bytes(&params, &ct.to_bytes(&params)).unwrap(), ct);
        }
    }

    #[test]
    fn prover_cannot_cover_other_plaintexts() {
        let (params, _, jpk, mut rng) = committee(3, 5);
        for m in 2..=5 {
            for claimed in [0, 1] {
                let r = params.random_scalar(&mut rng);
                let ct = encrypt_with_randomness(&params, &jpk, m, &r);
                let proof = prove_bit(&params, &jpk, &ct, claimed, &r, &mut rng);
                assert!(!verify_bit_proof(&params, &jpk, &ct, &proof), "m={m} claimed={claimed}");
            }
        }
        // A wrong claim about a genuine bit fails too.
        let r = params.random_scalar(&mut rng);
        let ct = encrypt_with_randomness(&params, &jpk, 1, &r);
        assert!(!verify_bit_proof(&params, &jpk, &ct, &prove_bit(&params, &jpk, &ct, 0, &r, &mut rng)));
    }

    #[test]
    fn transplanted_and_perturbed_proofs_fail() {
        let (params, _, jpk, mut rng) = committee(2, 6);
        let (ct, proof) = encrypt_bit(&params, &jpk, 1, &mut rng).unwrap();
        let (other, _) = encrypt_bit(&params, &jpk, 1, &mut rng).unwrap();
        assert!(!verify_bit_proof(&params, &jpk, &other, &proof));
        let one = params.scalar(1);
        let perturbed = [
            BitProof { e0: proof.e0 + one, ..proof },
            BitProof { z0: proof.z0 + one, ..proof },
            BitProof { e1: proof.e1 + one, ..proof },
            BitProof { z1: proof.z1 + one, ..proof },
            BitProof { a0: proof.a0 * params.g(), ..proof },
            BitProof { b0: proof.b0 * params.g(), ..proof },
            BitProof { a1: proof.a1 * params.g(), ..proof },
            BitProof { b1: proof.b1 * params.g(), ..proof },
        ];
        for p in perturbed {
            assert!(!verify_bit_proof(&params, &jpk, &ct, &p));
        }
    }

    #[test]
    fn homomorphic_sums() {
        let (params, shares, jpk, mut rng) = committee(3, 7);
        let enc = |b, rng: &mut SeededRng| encrypt_bit(&params, &jpk, b, rng).unwrap().0;
        let c0 = enc(0, &mut rng);
        let c1 = enc(1, &mut rng);
        assert_eq!(decrypt(&params, &shares, &jpk, &add_ciphertexts(&c0, &c1), &mut rng), Ok(1));
        let three = sum_ciphertexts(&params, [&c1, &enc(1, &mut rng), &enc(1, &mut rng)]);
        assert_eq!(decrypt(&params, &shares, &jpk, &three, &mut rng), Ok(3));
        let identity = encrypt_with_randomness(&params, &jpk, 0, &params.zero());
        assert_eq!(add_ciphertexts(&c1, &identity), c1);
    }

    #[test]
    fn exhaustive_hamming_weight_small() {
        for n in 1..=4u32 {
            let (params, shares, jpk, mut rng) = committee(n, 100 + n as u64);
            for mask in 0u32..(1 << n) {
                let bits: Vec<u64> = (0..n).map(|i| ((mask >> i) & 1) as u64).collect();
                let cts: Vec<_> = bits.iter().map(|b| encrypt_bit(&params, &jpk, *b, &mut rng).unwrap().0).collect();
                let sum = sum_ciphertexts(&params, &cts);
                let weight = bits.iter().sum::<u64>();
                assert_eq!(decrypt(&params, &shares, &jpk, &sum, &mut rng), Ok(weight));
            }
        }
    }

    #[test]
    fn partial_decryption_proofs() {
        let (params, shares, jpk, mut rng) = committee(3, 8);
        let (ct, _) = encrypt_bit(&params, &jpk, 1, &mut rng).unwrap();
        let part = partial_decrypt(&params, &shares[0], &ct, &mut rng);
        assert!(verify_partial_decryption(&params, &shares[0].public(), &ct, &part));
        assert!(!verify_partial_decryption(&params, &shares[1].public(), &ct, &part));
        let again = partial_decrypt(&params, &shares[0], &ct, &mut rng);
        assert_eq!(part.share, again.share);
        let forged = PartialDecryption { share: part.share * params.g(), ..part };
        assert!(!verify_partial_decryption(&params, &shares[0].public(), &ct, &forged));
    }

    #[test]
    fn combine_requires_every_member() {
        let (params, shares, jpk, mut rng) = committee(3, 9);
        let cts: Vec<_> = [1, 1, 0].iter().map(|b| encrypt_bit(&params, &jpk, *b, &mut rng).unwrap().0).collect();
        let sum = sum_ciphertexts(&params, &cts);
        let parts: Vec<_> = shares.iter().map(|s| partial_decrypt(&params, s, &sum, &mut rng)).collect();
        assert_eq!(combine_decryptions(&params, &sum, &parts, &jpk, 3), Ok(2));
        assert_eq!(combine_decryptions(&params, &sum, &parts[..2], &jpk, 3), Err(ThresholdError::MissingPart(3)));
        assert_eq!(combine_decryptions(&params, &sum, &parts[1..], &jpk, 3), Err(ThresholdError::MissingPart(1)));
        let mut bad = parts.clone();
        bad[1].share = bad[1].share * params.g();
        assert_eq!(combine_decryptions(&params, &sum, &bad, &jpk, 3), Err(ThresholdError::InvalidPart(2)));
        let all_zero = sum_ciphertexts(&params, &(0..3).map(|_| encrypt_bit(&params, &jpk, 0, &mut rng).unwrap().0).collect::<Vec<_>>());
        assert_eq!(decrypt(&params, &shares, &jpk, &all_zero, &mut rng), Ok(0));
    }

    #[test]
    fn out_of_range_plaintext() {
        let (params, shares, jpk, mut rng) = committee(2, 10);
        let ct = encrypt_with_randomness(&params, &jpk, 5, &params.random_scalar(&mut rng));
        assert_eq!(decrypt(&params, &shares, &jpk, &ct, &mut rng), Err(ThresholdError::PlaintextOutOfRange));
    }
}
