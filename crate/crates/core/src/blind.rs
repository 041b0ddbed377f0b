//! Okamoto-Schnorr blind signatures.
//!
//! The signer holds `(s1, s2)` with public key `v = g^-s1 · h^-s2`. One
//! signing run has five moves:
//!
//! 1. signer: `a = g^t1 · h^t2` ([`signer_commit`])
//! 2. user: `a' = a · g^β1 · h^β2 · v^β3`, `e' = H(a', m)`, sends `e = e' - β3`
//!    ([`user_blind`])
//! 3. signer: `R1 = t1 + e·s1`, `R2 = t2 + e·s2` ([`signer_respond`])
//! 4. user: `(e', R1 + β1, R2 + β2)` ([`user_unblind`])
//! 5. anyone: `e' == H(g^r1 · h^r2 · v^e', m)` ([`verify_signature`])
//!
//! A [`SignerSession`] is moved into [`signer_respond`], so a nonce can only
//! ever answer one challenge:
//!
//! ```compile_fail
//! use anonpool_core::blind::*;
//! use anonpool_core::crypto::{setup_group, SeededRng};
//! let mut rng = SeededRng::from_u64(1);
//! let params = setup_group(32, &mut rng).unwrap();
//! let key = signer_keygen(&params, &mut rng);
//! let session = signer_commit(&params, &key, &mut rng);
//! let _ = signer_respond(&key, session, params.scalar(1));
//! let _ = signer_respond(&key, session, params.scalar(2));
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{hash_to_scalar, GroupElement, GroupError, GroupParams, Scalar, SeededRng};

const CHALLENGE_TAG: &[u8] = b"OS-sig";
/// Serialization tag of a [`BlindSignature`].
pub const SIGNATURE_TAG: u8 = 0x01;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BlindError {
    #[error("signer commitment is not a subgroup element")]
    CommitmentNotInGroup,
    #[error("signer misbehaved: unblinded signature does not verify")]
    SignerMisbehaved,
    #[error("transcript and signature are not consistent under this key")]
    Inconsistent,
    #[error("malformed signature encoding")]
    Encoding(#[from] GroupError),
}

#[derive(Clone, Debug)]
pub struct SignerKeyPair {
    s1: Scalar,
    s2: Scalar,
    v: GroupElement,
}

impl SignerKeyPair {
    pub fn public(&self) -> GroupElement {
        self.v
    }

    /// Recomputes `v` from the secret halves.
    pub fn recompute_public(&self, params: &GroupParams) -> GroupElement {
        params.commit(&(-self.s1), &(-self.s2))
    }
}

/// Signer-side ephemeral state for one run; not `Clone`, consumed by
/// [`signer_respond`].
#[derive(Debug)]
pub struct SignerSession {
    t1: Scalar,
    t2: Scalar,
    a: GroupElement,
}

impl SignerSession {
    pub fn commitment(&self) -> GroupElement {
        self.a
    }
}

/// What the signer sees of one run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignerTranscript {
    pub a: GroupElement,
    pub e: Scalar,
    pub r1: Scalar,
    pub r2: Scalar,
}

/// User-side state between blinding and unblinding.
#[derive(Clone, Debug)]
pub struct UserSession {
    beta1: Scalar,
    beta2: Scalar,
    beta3: Scalar,
    blinded_commitment: GroupElement,
    message: Vec<u8>,
    challenge: Scalar,
    blinded_challenge: Scalar,
    v: GroupElement,
    params: GroupParams,
}

impl UserSession {
    /// The value sent to the signer (the "randomized" message).
    pub fn blinded_challenge(&self) -> Scalar {
        self.blinded_challenge
    }

    pub fn message(&self) -> &[u8] {
        &self.message
    }

    pub fn blinded_commitment(&self) -> GroupElement {
        self.blinded_commitment
    }

    /// `(β1, β2, β3)`.
    pub fn blinding_factors(&self) -> (Scalar, Scalar, Scalar) {
        (self.beta1, self.beta2, self.beta3)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BlindSignature {
    pub challenge: Scalar,
    pub r1: Scalar,
    pub r2: Scalar,
}

impl BlindSignature {
    /// `0x01 ‖ e' ‖ r1 ‖ r2`.
    pub fn to_bytes(&self, params: &GroupParams) -> Vec<u8> {
        let mut out = vec![SIGNATURE_TAG];
        for s in [&self.challenge, &self.r1, &self.r2] {
            out.extend(params.scalar_bytes(s));
        }
        out
    }

    pub fn from_bytes(params: &GroupParams, bytes: &[u8]) -> Result<Self, BlindError> {
        let w = params.width();
        if bytes.len() != 1 + 3 * w || bytes[0] != SIGNATURE_TAG {
            return Err(GroupError::BadEncoding.into());
        }
        let field = |i: usize| params.scalar_from_bytes(&bytes[1 + i * w..1 + (i + 1) * w]);
        Ok(BlindSignature { challenge: field(0)?, r1: field(1)?, r2: field(2)? })
    }
}

pub fn signer_keygen(params: &GroupParams, rng: &mut SeededRng) -> SignerKeyPair {
    let s1 = params.random_nonzero_scalar(rng);
    let s2 = params.random_nonzero_scalar(rng);
    let v = params.commit(&(-s1), &(-s2));
    SignerKeyPair { s1, s2, v }
}

pub fn signer_commit(params: &GroupParams, _key: &SignerKeyPair, rng: &mut SeededRng) -> SignerSession {
    let t1 = params.random_scalar(rng);
    let t2 = params.random_scalar(rng);
    SignerSession { t1, t2, a: params.commit(&t1, &t2) }
}

fn challenge(params: &GroupParams, commitment: &GroupElement, message: &[u8]) -> Scalar {
    hash_to_scalar(params, CHALLENGE_TAG, &[&params.canonical_element(commitment), message])
}

pub fn user_blind(
    params: &GroupParams,
    v: &GroupElement,
    a: &GroupElement,
    message: &[u8],
    rng: &mut SeededRng,
) -> Result<UserSession, BlindError> {
    if !params.contains(a) {
        return Err(BlindError::CommitmentNotInGroup);
    }
    let beta1 = params.random_scalar(rng);
    let beta2 = params.random_scalar(rng);
    let beta3 = params.random_scalar(rng);
    let blinded_commitment = *a * params.commit(&beta1, &beta2) * v.pow(&beta3);
    let e_prime = challenge(params, &blinded_commitment, message);
    Ok(UserSession {
        beta1,
        beta2,
        beta3,
        blinded_commitment,
        message: message.to_vec(),
        challenge: e_prime,
        blinded_challenge: e_prime - beta3,
        v: *v,
        params: *params,
    })
}

/// Answers the user's blinded challenge. Returns the response together
/// with the signer's transcript of the run.
pub fn signer_respond(key: &SignerKeyPair, session: SignerSession, e: Scalar) -> SignerTranscript {
    let r1 = session.t1 + e * key.s1;
    let r2 = session.t2 + e * key.s2;
    SignerTranscript { a: session.a, e, r1, r2 }
}

pub fn user_unblind(session: &UserSession, r1: Scalar, r2: Scalar) -> Result<BlindSignature, BlindError> {
    let sig = BlindSignature {
        challenge: session.challenge,
        r1: r1 + session.beta1,
        r2: r2 + session.beta2,
    };
    if !verify_signature(&session.params, &session.v, &session.message, &sig) {
        return Err(BlindError::SignerMisbehaved);
    }
    Ok(sig)
}

pub fn verify_signature(params: &GroupParams, v: &GroupElement, message: &[u8], sig: &BlindSignature) -> bool {
    if !params.contains(v) {
        return false;
    }
    let commitment = params.commit(&sig.r1, &sig.r2) * v.pow(&sig.challenge);
    challenge(params, &commitment, message) == sig.challenge
}

/// Checks the signer-side identity `g^R1 · h^R2 · v^e = a`.
pub fn transcript_is_valid(params: &GroupParams, v: &GroupElement, t: &SignerTranscript) -> bool {
    params.commit(&t.r1, &t.r2) * v.pow(&t.e) == t.a
}

/// Blinding factors that map a signer transcript onto a signature.
///
/// For any valid transcript and any valid signature under the same key such
/// factors exist, which is why the signer cannot tell which run produced
/// which signature.
pub fn explain_blinding(
    params: &GroupParams,
    v: &GroupElement,
    transcript: &SignerTranscript,
    message: &[u8],
    sig: &BlindSignature,
) -> Result<(Scalar, Scalar, Scalar), BlindError> {
    if !transcript_is_valid(params, v, transcript) || !verify_signature(params, v, message, sig) {
        return Err(BlindError::Inconsistent);
    }
    let beta3 = sig.challenge - transcript.e;
    let beta1 = sig.r1 - transcript.r1;
    let beta2 = sig.r2 - transcript.r2;
    let blinded = transcript.a * params.commit(&beta1, &beta2) * v.pow(&beta3);
    if challenge(params, &blinded, message) != sig.challenge {
        return Err(BlindError::Inconsistent);
    }
    Ok((beta1, beta2, beta3))
}
