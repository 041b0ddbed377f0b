//! Plain Schnorr signatures over the substrate group.
//!
//! Used for the identity issuer, the parties' long-term keys and the
//! pseudonym (onion service) keys. Nonces are derived from the secret key
//! and the message, so signing needs no randomness.

use serde::{Deserialize, Serialize};

use super::group::{GroupElement, GroupError, GroupParams, Scalar};
use super::hash::hash_to_scalar;
use super::rng::SeededRng;

const NONCE_TAG: &[u8] = b"schnorr-nonce";
const CHALLENGE_TAG: &[u8] = b"schnorr-sig";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Signature {
    pub challenge: Scalar,
    pub response: Scalar,
}

impl Signature {
    pub fn to_bytes(&self, params: &GroupParams) -> Vec<u8> {
        let mut out = params.scalar_bytes(&self.challenge);
        out.extend(params.scalar_bytes(&self.response));
        out
    }

    pub fn from_bytes(params: &GroupParams, bytes: &[u8]) -> Result<Self, GroupError> {
        let w = params.width();
        if bytes.len() != 2 * w {
            return Err(GroupError::BadEncoding);
        }
        Ok(Signature {
            challenge: params.scalar_from_bytes(&bytes[..w])?,
            response: params.scalar_from_bytes(&bytes[w..])?,
        })
    }
}

#[derive(Clone, Debug)]
pub struct SigningKey {
    secret: Scalar,
    public: GroupElement,
}

impl SigningKey {
    pub fn generate(params: &GroupParams, rng: &mut SeededRng) -> Self {
        Self::from_secret(params, params.random_nonzero_scalar(rng))
    }

    pub fn from_secret(params: &GroupParams, secret: Scalar) -> Self {
        SigningKey { secret, public: params.exp_g(&secret) }
    }

    pub fn public(&self) -> GroupElement {
        self.public
    }

    pub fn sign(&self, params: &GroupParams, message: &[u8]) -> Signature {
        let nonce = hash_to_scalar(
            params,
            NONCE_TAG,
            &[&params.canonical_scalar(&self.secret), message],
        );
        // A zero nonce would expose the key; the hash makes it negligible but
        // shift it anyway.
        let nonce = if nonce.is_zero() { params.scalar(1) } else { nonce };
        let commitment = params.exp_g(&nonce);
        let challenge = challenge(params, &commitment, &self.public, message);
        Signature { challenge, response: nonce + challenge * self.secret }
    }
}

fn challenge(
    params: &GroupParams,
    commitment: &GroupElement,
    public: &GroupElement,
    message: &[u8],
) -> Scalar {
    hash_to_scalar(
        params,
        CHALLENGE_TAG,
        &[&params.canonical_element(commitment), &params.canonical_element(public), message],
    )
}

pub fn verify(params: &GroupParams, public: &GroupElement, message: &[u8], sig: &Signature) -> bool {
    if !params.contains(public) {
        return false;
    }
    let commitment = params.exp_g(&sig.response) * public.pow(&(-sig.challenge));
    challenge(params, &commitment, public, message) == sig.challenge
}
