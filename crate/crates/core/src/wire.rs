//! Messages exchanged between parties and the coordinator.
//!
//! Every message is `tag ‖ fields`, each field length-prefixed (see
//! [`crate::codec`]). Byte layouts are listed in PROTOCOL.md.

use serde::{Deserialize, Serialize};

use crate::blind::BlindSignature;
use crate::codec::{DecodeError, Reader, Writer};
use crate::crypto::schnorr::Signature;
use crate::crypto::{GroupElement, GroupParams, Scalar};
use crate::identity::{AuthToken, PartyId};
use crate::net::{read_pseudonym, OnionUrl, Pseudonym};

pub const TAG_REGISTER: u8 = 0x10;
pub const TAG_REQUEST: u8 = 0x11;
pub const TAG_RENEW: u8 = 0x12;
pub const TAG_OPEN_SESSION: u8 = 0x13;
pub const TAG_COMMITMENT: u8 = 0x14;
pub const TAG_RENEW_REQUEST: u8 = 0x15;
pub const TAG_REJECT: u8 = 0x16;

/// What a blind-signing session is bound to: an identity on the
/// authenticated channel, or an onion address on the anonymous one.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SessionKey {
    Identity(PartyId),
    Onion(OnionUrl),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    BadToken,
    AlreadyRegistered,
    Banned,
    NotRegistered,
    BadSignature,
    Replay,
    Unreachable,
    NoSession,
    SessionOpen,
    BadAuthorSignature,
    NoRenewalDue,
    Malformed,
}

impl RejectReason {
    const ALL: [RejectReason; 12] = [
        RejectReason::BadToken,
        RejectReason::AlreadyRegistered,
        RejectReason::Banned,
        RejectReason::NotRegistered,
        RejectReason::BadSignature,
        RejectReason::Replay,
        RejectReason::Unreachable,
        RejectReason::NoSession,
        RejectReason::SessionOpen,
        RejectReason::BadAuthorSignature,
        RejectReason::NoRenewalDue,
        RejectReason::Malformed,
    ];

    pub fn code(self) -> u64 {
        Self::ALL.iter().position(|r| *r == self).unwrap() as u64
    }

    pub fn from_code(code: u64) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Message {
    Register { identity: PartyId, token: AuthToken, public_key: GroupElement, blinded_challenge: Scalar },
    Request { pseudonym: Pseudonym, signature: BlindSignature, blinded_challenge: Scalar },
    /// Blind-signature response; answers Register, Request (after a
    /// successful check) and RenewRequest.
    Renew { r1: Scalar, r2: Scalar },
    OpenSession { key: SessionKey },
    Commitment { a: GroupElement },
    /// Post-failure renewal, signed with the party's long-term key.
    RenewRequest { identity: PartyId, blinded_challenge: Scalar, signature: Signature },
    Reject { reason: RejectReason },
}

/// Bytes a long-term key signs in a [`Message::RenewRequest`].
pub fn renew_request_message(params: &GroupParams, identity: &PartyId, blinded_challenge: &Scalar) -> Vec<u8> {
    Writer::with_tag(params, TAG_RENEW_REQUEST).text(identity.as_str()).scalar(blinded_challenge).finish()
}

impl Message {
    pub fn encode(&self, params: &GroupParams) -> Vec<u8> {
        match self {
            Message::Register { identity, token, public_key, blinded_challenge } => Writer::with_tag(params, TAG_REGISTER)
                .text(identity.as_str())
                .bytes(&token.to_bytes(params))
                .element(public_key)
                .scalar(blinded_challenge)
                .finish(),
            Message::Request { pseudonym, signature, blinded_challenge } => Writer::with_tag(params, TAG_REQUEST)
                .bytes(&pseudonym.canonical(params))
                .bytes(&signature.to_bytes(params))
                .scalar(blinded_challenge)
                .finish(),
            Message::Renew { r1, r2 } => Writer::with_tag(params, TAG_RENEW).scalar(r1).scalar(r2).finish(),
            Message::OpenSession { key } => {
                let mut w = Writer::with_tag(params, TAG_OPEN_SESSION);
                match key {
                    SessionKey::Identity(id) => w.u64(0).text(id.as_str()),
                    SessionKey::Onion(url) => w.u64(1).bytes(&url.0),
                };
                w.finish()
            }
            Message::Commitment { a } => Writer::with_tag(params, TAG_COMMITMENT).element(a).finish(),
            Message::RenewRequest { identity, blinded_challenge, signature } => Writer::with_tag(params, TAG_RENEW_REQUEST)
                .text(identity.as_str())
                .scalar(blinded_challenge)
                .bytes(&signature.to_bytes(params))
                .finish(),
            Message::Reject { reason } => Writer::with_tag(params, TAG_REJECT).u64(reason.code()).finish(),
        }
    }

    pub fn decode(params: &GroupParams, bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(params, bytes);
        let msg = match r.tag()? {
            TAG_REGISTER => Message::Register {
                identity: PartyId::new(r.text()?),
                token: AuthToken::from_bytes(params, r.bytes()?)?,
                public_key: r.element()?,
                blinded_challenge: r.scalar()?,
            },
            TAG_REQUEST => Message::Request {
                pseudonym: read_pseudonym(&mut r)?,
                signature: BlindSignature::from_bytes(params, r.bytes()?).map_err(|_| DecodeError::BadLength)?,
                blinded_challenge: r.scalar()?,
            },
            TAG_RENEW => Message::Renew { r1: r.scalar()?, r2: r.scalar()? },
            TAG_OPEN_SESSION => {
                let key = match r.u64()? {
                    0 => SessionKey::Identity(PartyId::new(r.text()?)),
                    1 => SessionKey::Onion(OnionUrl(r.array32()?)),
                    _ => return Err(DecodeError::BadLength),
                };
                Message::OpenSession { key }
            }
            TAG_COMMITMENT => Message::Commitment { a: r.element()? },
            TAG_RENEW_REQUEST => Message::RenewRequest {
                identity: PartyId::new(r.text()?),
                blinded_challenge: r.scalar()?,
                signature: Signature::from_bytes(params, r.bytes()?)?,
            },
            TAG_REJECT => {
                Message::Reject { reason: RejectReason::from_code(r.u64()?).ok_or(DecodeError::BadLength)? }
            }
            other => return Err(DecodeError::UnknownTag(other)),
        };
        r.finish()?;
        Ok(msg)
    }
}

/// Authenticated request/response channel to the coordinator.
pub trait DirectChannel {
    fn exchange(&mut self, request: &[u8]) -> Vec<u8>;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::schnorr::SigningKey;
    use crate::crypto::{setup_group, SeededRng};
    use crate::identity::IdentityProvider;
    use crate::net::new_pseudonym;

    #[test]
    fn every_message_round_trips() {
        let mut rng = SeededRng::from_u64(5);
        let params = setup_group(48, &mut rng).unwrap();
        let mut idp = IdentityProvider::new(params, &mut rng);
        let id = PartyId::new("alice");
        let token = idp.issue_token(&id).unwrap();
        let (pseudonym, _) = new_pseudonym(&params, &mut rng);
        let key = SigningKey::generate(&params, &mut rng);
        let e = params.random_scalar(&mut rng);
        let sig = BlindSignature { challenge: e, r1: params.scalar(3), r2: params.scalar(4) };
        let messages = [
            Message::Register { identity: id.clone(), token, public_key: key.public(), blinded_challenge: e },
            Message::Request { pseudonym, signature: sig, blinded_challenge: e },
            Message::Renew { r1: params.scalar(1), r2: params.scalar(2) },
            Message::OpenSession { key: SessionKey::Identity(id.clone()) },
            Message::OpenSession { key: SessionKey::Onion(pseudonym.onion_url) },
            Message::Commitment { a: params.g() },
            Message::RenewRequest {
                identity: id.clone(),
                blinded_challenge: e,
                signature: key.sign(&params, &renew_request_message(&params, &id, &e)),
            },
            Message::Reject { reason: RejectReason::Replay },
        ];
        let expected_tags = [0x10, 0x11, 0x12, 0x13, 0x13, 0x14, 0x15, 0x16];
        for (msg, tag) in messages.iter().zip(expected_tags) {
            let bytes = msg.encode(&params);
            assert_eq!(bytes[0], tag);
            assert_eq!(&Message::decode(&params, &bytes).unwrap(), msg);
        }
    }

    #[test]
    fn unknown_tag_and_trailing_bytes() {
        let params = GroupParams::new(23, 11, 2, 3).unwrap();
        assert_eq!(Message::decode(&params, &[0x7f]), Err(DecodeError::UnknownTag(0x7f)));
        let mut bytes = Message::Reject { reason: RejectReason::Banned }.encode(&params);
        bytes.push(0);
        assert_eq!(Message::decode(&params, &bytes), Err(DecodeError::Trailing));
    }

    #[test]
    fn reason_codes_are_stable() {
        for code in 0..12 {
            assert_eq!(RejectReason::from_code(code).unwrap().code(), code);
        }
        assert_eq!(RejectReason::from_code(12), None);
    }
}
