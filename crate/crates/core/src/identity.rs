//! Simulated issuer of inalienable authentication tokens.
//!
//! A token is a Schnorr signature by the issuer over the identity string.
//! Each identity can be issued at most one token, and the token is handed
//! back only to the caller that asked for that identity.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{DecodeError, Reader, Writer};
use crate::crypto::schnorr::{self, Signature, SigningKey};
use crate::crypto::{GroupElement, GroupParams, SeededRng};

const TOKEN_DOMAIN: &[u8] = b"anonpool/auth-token";

/// Identity of a registered party.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PartyId(String);

impl PartyId {
    pub fn new(name: impl Into<String>) -> Self {
        PartyId(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IdentityError {
    #[error("a token was already issued for {0}")]
    AlreadyIssued(PartyId),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthToken {
    pub identity: PartyId,
    pub issuer_signature: Signature,
}

impl AuthToken {
    pub fn to_bytes(&self, params: &GroupParams) -> Vec<u8> {
        Writer::new(params)
            .text(self.identity.as_str())
            .bytes(&self.issuer_signature.to_bytes(params))
            .finish()
    }

    pub fn from_bytes(params: &GroupParams, bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(params, bytes);
        let identity = PartyId::new(r.text()?);
        let issuer_signature = Signature::from_bytes(params, r.bytes()?)?;
        r.finish()?;
        Ok(AuthToken { identity, issuer_signature })
    }
}

fn token_message(identity: &PartyId) -> Vec<u8> {
    let mut msg = TOKEN_DOMAIN.to_vec();
    msg.extend(identity.as_str().as_bytes());
    msg
}

pub struct IdentityProvider {
    params: GroupParams,
    key: SigningKey,
    issued: BTreeSet<PartyId>,
}

impl IdentityProvider {
    pub fn new(params: GroupParams, rng: &mut SeededRng) -> Self {
        IdentityProvider { key: SigningKey::generate(&params, rng), params, issued: BTreeSet::new() }
    }

    pub fn public_key(&self) -> GroupElement {
        self.key.public()
    }

    pub fn issue_token(&mut self, identity: &PartyId) -> Result<AuthToken, IdentityError> {
        if !self.issued.insert(identity.clone()) {
            return Err(IdentityError::AlreadyIssued(identity.clone()));
        }
        Ok(AuthToken {
            identity: identity.clone(),
            issuer_signature: self.key.sign(&self.params, &token_message(identity)),
        })
    }
}

pub fn verify_token(params: &GroupParams, issuer_key: &GroupElement, token: &AuthToken, claimed: &PartyId) -> bool {
    token.identity == *claimed
        && schnorr::verify(params, issuer_key, &token_message(&token.identity), &token.issuer_signature)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::setup_group;

    fn provider() -> (GroupParams, IdentityProvider) {
        let mut rng = SeededRng::from_u64(11);
        let params = setup_group(64, &mut rng).unwrap();
        (params, IdentityProvider::new(params, &mut rng))
    }

    #[test]
    fn issue_once() {
        let (params, mut idp) = provider();
        let alice = PartyId::new("alice");
        let token = idp.issue_token(&alice).unwrap();
        assert!(verify_token(&params, &idp.public_key(), &token, &alice));
        assert_eq!(idp.issue_token(&alice).unwrap_err(), IdentityError::AlreadyIssued(alice));
    }

    #[test]
    fn impersonation_and_tampering_rejected() {
        let (params, mut idp) = provider();
        let alice = PartyId::new("alice");
        let bob = PartyId::new("bob");
        let token = idp.issue_token(&alice).unwrap();
        assert!(!verify_token(&params, &idp.public_key(), &token, &bob));
        let relabeled = AuthToken { identity: bob.clone(), ..token.clone() };
        assert!(!verify_token(&params, &idp.public_key(), &relabeled, &bob));
        let mut sig = token.issuer_signature;
        sig.response = sig.response + params.scalar(1);
        let perturbed = AuthToken { issuer_signature: sig, ..token.clone() };
        assert!(!verify_token(&params, &idp.public_key(), &perturbed, &alice));
        assert_eq!(AuthToken::from_bytes(&params, &token.to_bytes(&params)).unwrap(), token);
    }
}
