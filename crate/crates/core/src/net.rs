//! Simulated onion network: pseudonym addresses, sender-anonymous delivery
//! and signed reachability challenges.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::codec::{DecodeError, Reader, Writer};
use crate::crypto::schnorr::{self, Signature, SigningKey};
use crate::crypto::{tagged_digest, GroupElement, GroupParams, SeededRng};

const ONION_DOMAIN: &[u8] = b"onion";
const CHALLENGE_DOMAIN: &[u8] = b"anonpool/reachability";
const PSEUDONYM_TAG: u8 = 0x04;

/// 32-byte onion-service address.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct OnionUrl(pub [u8; 32]);

impl OnionUrl {
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for OnionUrl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.onion", &self.to_hex()[..12])
    }
}

impl fmt::Display for OnionUrl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.onion", self.to_hex())
    }
}

/// A pseudonym is the onion address together with the key it hashes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Pseudonym {
    pub onion_url: OnionUrl,
    pub verification_key: GroupElement,
}

impl Pseudonym {
    pub fn from_key(params: &GroupParams, verification_key: GroupElement) -> Self {
        Pseudonym { onion_url: onion_url_for(params, &verification_key), verification_key }
    }

    /// True iff the address is the hash of the key.
    pub fn is_well_formed(&self, params: &GroupParams) -> bool {
        params.contains(&self.verification_key) && onion_url_for(params, &self.verification_key) == self.onion_url
    }

    /// `0x04 ‖ url ‖ key`. This is the message the coordinator blind-signs.
    pub fn canonical(&self, params: &GroupParams) -> Vec<u8> {
        let mut out = vec![PSEUDONYM_TAG];
        out.extend(self.onion_url.0);
        out.extend(params.element_bytes(&self.verification_key));
        out
    }

    pub fn from_canonical(params: &GroupParams, bytes: &[u8]) -> Result<Self, DecodeError> {
        if bytes.len() != 33 + params.width() || bytes[0] != PSEUDONYM_TAG {
            return Err(DecodeError::BadLength);
        }
        let url: [u8; 32] = bytes[1..33].try_into().unwrap();
        let key = params.element_from_bytes(&bytes[33..])?;
        Ok(Pseudonym { onion_url: OnionUrl(url), verification_key: key })
    }
}

pub fn onion_url_for(params: &GroupParams, key: &GroupElement) -> OnionUrl {
    OnionUrl(tagged_digest(ONION_DOMAIN, &[&params.canonical_element(key)]))
}

/// Secret half of a pseudonym. Deliberately neither `Serialize` nor part of
/// any wire message.
#[derive(Clone, Debug)]
pub struct PseudonymSecret {
    key: SigningKey,
}

impl PseudonymSecret {
    pub fn sign(&self, params: &GroupParams, message: &[u8]) -> Signature {
        self.key.sign(params, message)
    }

    pub fn verification_key(&self) -> GroupElement {
        self.key.public()
    }
}

pub fn new_pseudonym(params: &GroupParams, rng: &mut SeededRng) -> (Pseudonym, PseudonymSecret) {
    let key = SigningKey::generate(params, rng);
    (Pseudonym::from_key(params, key.public()), PseudonymSecret { key })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Address {
    Coordinator,
    Onion(OnionUrl),
}

/// What a sender hands to the network. There is no sender field.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnonEnvelope {
    pub destination: Address,
    pub payload: Vec<u8>,
    pub reply_channel: Option<OnionUrl>,
}

/// Everything the recipient learns about one delivered message.
pub type Delivery = AnonEnvelope;

/// Code running behind an onion address, answering reachability challenges.
pub trait OnionService {
    fn answer_challenge(&mut self, params: &GroupParams, challenge: &[u8]) -> Option<Signature>;
}

/// Honest service: signs challenges with the pseudonym key.
pub struct KeyHolder(pub PseudonymSecret);

impl OnionService for KeyHolder {
    fn answer_challenge(&mut self, params: &GroupParams, challenge: &[u8]) -> Option<Signature> {
        Some(self.0.sign(params, challenge))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum RouterEvent {
    Queued { destination: String, payload_hex: String },
    Delivered { destination: String, payload_hex: String, reply_channel: Option<String> },
    Dropped { destination: String, reason: String },
    Challenge { onion_url: String, nonce_hex: String, answered: bool },
}

fn address_label(addr: &Address) -> String {
    match addr {
        Address::Coordinator => "coordinator".to_string(),
        Address::Onion(url) => url.to_string(),
    }
}

/// The network. Single serialization point of the simulation.
pub struct Router {
    params: GroupParams,
    services: BTreeMap<OnionUrl, Box<dyn OnionService>>,
    mailboxes: BTreeMap<Address, VecDeque<Delivery>>,
    in_flight: Vec<AnonEnvelope>,
    rng: SeededRng,
    log: Vec<RouterEvent>,
}

impl Router {
    pub fn new(params: GroupParams, rng: SeededRng) -> Self {
        let mut mailboxes = BTreeMap::new();
        mailboxes.insert(Address::Coordinator, VecDeque::new());
        Router { params, services: BTreeMap::new(), mailboxes, in_flight: Vec::new(), rng, log: Vec::new() }
    }

    /// Publishes an onion service. Replaces any earlier service at `url`.
    pub fn host(&mut self, url: OnionUrl, service: Box<dyn OnionService>) {
        self.services.insert(url, service);
        self.mailboxes.entry(Address::Onion(url)).or_default();
    }

    pub fn unhost(&mut self, url: &OnionUrl) {
        self.services.remove(url);
    }

    pub fn is_hosted(&self, url: &OnionUrl) -> bool {
        self.services.contains_key(url)
    }

    fn is_registered(&self, addr: &Address) -> bool {
        match addr {
            Address::Coordinator => true,
            Address::Onion(url) => self.services.contains_key(url),
        }
    }

    /// Queues an envelope. Unknown destinations are dropped and logged.
    pub fn anon_send(&mut self, envelope: AnonEnvelope) {
        let destination = address_label(&envelope.destination);
        if !self.is_registered(&envelope.destination) {
            self.log.push(RouterEvent::Dropped { destination, reason: "unknown destination".into() });
            return;
        }
        self.log.push(RouterEvent::Queued { destination, payload_hex: hex::encode(&envelope.payload) });
        self.in_flight.push(envelope);
    }

    /// Delivers everything in flight, in an order drawn from the router's own
    /// seeded stream so that submission order is not visible.
    pub fn flush(&mut self) {
        let mut batch = std::mem::take(&mut self.in_flight);
        batch.shuffle(&mut self.rng);
        for envelope in batch {
            self.log.push(RouterEvent::Delivered {
                destination: address_label(&envelope.destination),
                payload_hex: hex::encode(&envelope.payload),
                reply_channel: envelope.reply_channel.map(|u| u.to_string()),
            });
            self.mailboxes.entry(envelope.destination).or_default().push_back(envelope);
        }
    }

    /// Drains the mailbox at `addr`.
    pub fn receive(&mut self, addr: &Address) -> Vec<Delivery> {
        self.mailboxes.get_mut(addr).map(|m| m.drain(..).collect()).unwrap_or_default()
    }

    pub fn pending(&self, addr: &Address) -> usize {
        self.mailboxes.get(addr).map_or(0, VecDeque::len)
    }

    pub fn log(&self) -> &[RouterEvent] {
        &self.log
    }

    /// Router log as JSON lines.
    pub fn dump_jsonl(&self) -> String {
        self.log.iter().map(|e| serde_json::to_string(e).expect("router event serializes") + "\n").collect()
    }

    /// Sends a challenge to the onion address and checks the answer against
    /// the pseudonym's key. No service or no answer counts as unreachable.
    pub fn reachability_check(&mut self, pseudonym: &Pseudonym, nonce: &[u8]) -> bool {
        let challenge = challenge_message(&self.params, pseudonym, nonce);
        let answer = self
            .services
            .get_mut(&pseudonym.onion_url)
            .and_then(|service| service.answer_challenge(&self.params, &challenge));
        let ok = answer.is_some_and(|sig| schnorr::verify(&self.params, &pseudonym.verification_key, &challenge, &sig));
        self.log.push(RouterEvent::Challenge {
            onion_url: pseudonym.onion_url.to_string(),
            nonce_hex: hex::encode(nonce),
            answered: ok,
        });
        ok
    }
}

pub fn challenge_message(params: &GroupParams, pseudonym: &Pseudonym, nonce: &[u8]) -> Vec<u8> {
    Writer::with_tag(params, 0x17)
        .bytes(CHALLENGE_DOMAIN)
        .bytes(&pseudonym.onion_url.0)
        .bytes(nonce)
        .finish()
}

/// Decodes a pseudonym from a length-prefixed field.
pub(crate) fn read_pseudonym(r: &mut Reader<'_, '_>) -> Result<Pseudonym, DecodeError> {
    let params = *r.params();
    Pseudonym::from_canonical(&params, r.bytes()?)
}
