//! The coordinator: registration, blind signing, pool management,
//! deprecation, bans and renewals.
//!
//! Registration and post-failure renewal arrive on the authenticated
//! channel ([`DirectChannel`]); pool requests arrive anonymously through the
//! router and are answered at the sender's onion address.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use thiserror::Error;

use crate::blind::{signer_commit, signer_keygen, signer_respond, user_blind, user_unblind, verify_signature, BlindSignature, SignerKeyPair, SignerSession};
use crate::board::{BoardEntry, BoardError, BulletinBoard, EntryBody, PoolRecord, RegisteredRecord, WriteCredential};
use crate::crypto::schnorr;
use crate::crypto::{GroupElement, GroupParams, Scalar, SeededRng};
use crate::identity::{verify_token, AuthToken, PartyId};
use crate::net::{Address, AnonEnvelope, Delivery, OnionUrl, Pseudonym, Router};
use crate::sanity::{SanityReport, Verdict};
use crate::wire::{renew_request_message, DirectChannel, Message, RejectReason, SessionKey};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CoordinatorError {
    #[error("pool threshold must be at least 2, got {0}")]
    ThresholdTooSmall(usize),
    #[error("{0} is not a registered party")]
    UnknownIdentity(PartyId),
    #[error(transparent)]
    Board(#[from] BoardError),
}

/// Points where a scripted dishonest coordinator departs from the protocol.
/// The default methods are the honest behaviour.
pub trait CoordinatorPolicy {
    fn deprecate_on_accept(&mut self, _pseudonym: &Pseudonym) -> bool {
        true
    }

    fn execute_ban(&mut self, _identity: &PartyId) -> bool {
        true
    }
}

pub struct HonestPolicy;

impl CoordinatorPolicy for HonestPolicy {}

/// Result of handling one anonymous envelope.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AnonOutcome {
    SessionOpened(OnionUrl),
    Accepted { pseudonym: Pseudonym, pool_add_seq: u64 },
    Rejected { reason: RejectReason, reply_to: Option<OnionUrl> },
}

/// Pool contents handed to the sanity check after a drain.
#[derive(Clone, Debug)]
pub struct DrainedPool {
    pub records: Vec<PoolRecord>,
    pub drain_seq: u64,
    pub previously_deprecated: BTreeSet<OnionUrl>,
}

impl DrainedPool {
    pub fn urls(&self) -> Vec<OnionUrl> {
        self.records.iter().map(|r| r.pseudonym.onion_url).collect()
    }
}

/// Outcome of sending one renewal after a successful check.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RenewalDelivery {
    Sent(OnionUrl),
    /// No blinded pseudonym stored for this address; the member forfeits.
    Skipped(OnionUrl),
}

pub struct Coordinator {
    params: GroupParams,
    signer: SignerKeyPair,
    board: BulletinBoard,
    credential: WriteCredential,
    issuer_key: GroupElement,
    threshold: usize,
    sessions: BTreeMap<SessionKey, SignerSession>,
    pending_renewals: BTreeMap<OnionUrl, (SignerSession, Scalar)>,
    registered: BTreeMap<PartyId, GroupElement>,
    banned: BTreeSet<PartyId>,
    spent: BTreeSet<OnionUrl>,
    renewal_window: BTreeSet<PartyId>,
    inbox: VecDeque<Delivery>,
    rng: SeededRng,
    challenge_counter: u64,
    policy: Box<dyn CoordinatorPolicy>,
}

impl Coordinator {
    pub fn new(params: GroupParams, threshold: usize, issuer_key: GroupElement, mut rng: SeededRng) -> Result<Self, CoordinatorError> {
        if threshold < 2 {
            return Err(CoordinatorError::ThresholdTooSmall(threshold));
        }
        let signer = signer_keygen(&params, &mut rng);
        let mut credential_seed = [0u8; 32];
        rand::RngCore::fill_bytes(&mut rng, &mut credential_seed);
        let (board, credential) = BulletinBoard::new(params, credential_seed);
        Ok(Coordinator {
            params,
            signer,
            board,
            credential,
            issuer_key,
            threshold,
            sessions: BTreeMap::new(),
            pending_renewals: BTreeMap::new(),
            registered: BTreeMap::new(),
            banned: BTreeSet::new(),
            spent: BTreeSet::new(),
            renewal_window: BTreeSet::new(),
            inbox: VecDeque::new(),
            rng,
            challenge_counter: 0,
            policy: Box::new(HonestPolicy),
        })
    }

    pub fn with_policy(mut self, policy: Box<dyn CoordinatorPolicy>) -> Self {
        self.policy = policy;
        self
    }

    pub fn set_policy(&mut self, policy: Box<dyn CoordinatorPolicy>) {
        self.policy = policy;
    }

    pub fn params(&self) -> &GroupParams {
        &self.params
    }

    pub fn public_key(&self) -> GroupElement {
        self.signer.public()
    }

    pub fn board(&self) -> &BulletinBoard {
        &self.board
    }

    pub fn threshold(&self) -> usize {
        self.threshold
    }

    /// Active registered parties and their long-term keys.
    pub fn roster(&self) -> &BTreeMap<PartyId, GroupElement> {
        &self.registered
    }

    pub fn is_banned(&self, identity: &PartyId) -> bool {
        self.banned.contains(identity)
    }

    pub fn pool_is_full(&self) -> bool {
        self.board.pool_size() >= self.threshold
    }

    pub fn queued(&self) -> usize {
        self.inbox.len()
    }

    fn append(&mut self, body: EntryBody) -> BoardEntry {
        self.board.append(&body, &self.credential).expect("coordinator holds the board credential")
    }

    fn open_session(&mut self, key: SessionKey) -> Result<GroupElement, RejectReason> {
        if self.sessions.contains_key(&key) {
            return Err(RejectReason::SessionOpen);
        }
        let session = signer_commit(&self.params, &self.signer, &mut self.rng);
        let a = session.commitment();
        self.sessions.insert(key, session);
        Ok(a)
    }

    fn handle_direct_message(&mut self, msg: Message) -> Result<Message, RejectReason> {
        match msg {
            Message::OpenSession { key: SessionKey::Identity(id) } => {
                if self.banned.contains(&id) {
                    return Err(RejectReason::Banned);
                }
                if self.registered.contains_key(&id) && !self.renewal_window.contains(&id) {
                    return Err(RejectReason::NoRenewalDue);
                }
                // A session left over from a failed attempt (possibly by
                // someone using this name without its token) must not lock
                // the real owner out.
                self.sessions.remove(&SessionKey::Identity(id.clone()));
                let a = self.open_session(SessionKey::Identity(id))?;
                Ok(Message::Commitment { a })
            }
            Message::Register { identity, token, public_key, blinded_challenge } => {
                let (r1, r2) = self.register(identity, token, public_key, blinded_challenge)?;
                Ok(Message::Renew { r1, r2 })
            }
            Message::RenewRequest { identity, blinded_challenge, signature } => {
                let (r1, r2) = self.renew_after_failure(&identity, blinded_challenge, &signature)?;
                Ok(Message::Renew { r1, r2 })
            }
            _ => Err(RejectReason::Malformed),
        }
    }

    /// Admits a party. On success the board gains its RegisterParty entry
    /// and the response to its blinded pseudonym is returned.
    pub fn register(
        &mut self,
        identity: PartyId,
        token: AuthToken,
        public_key: GroupElement,
        blinded_challenge: Scalar,
    ) -> Result<(Scalar, Scalar), RejectReason> {
        if !verify_token(&self.params, &self.issuer_key, &token, &identity) {
            return Err(RejectReason::BadToken);
        }
        if self.banned.contains(&identity) {
            return Err(RejectReason::Banned);
        }
        if self.registered.contains_key(&identity) {
            return Err(RejectReason::AlreadyRegistered);
        }
        if !self.params.contains(&public_key) || public_key.is_identity() {
            return Err(RejectReason::Malformed);
        }
        let session = self.sessions.remove(&SessionKey::Identity(identity.clone())).ok_or(RejectReason::NoSession)?;
        self.append(EntryBody::RegisterParty(RegisteredRecord { identity: identity.clone(), token, public_key }));
        self.registered.insert(identity, public_key);
        let t = signer_respond(&self.signer, session, blinded_challenge);
        Ok((t.r1, t.r2))
    }

    fn renew_after_failure(
        &mut self,
        identity: &PartyId,
        blinded_challenge: Scalar,
        signature: &schnorr::Signature,
    ) -> Result<(Scalar, Scalar), RejectReason> {
        if self.banned.contains(identity) {
            return Err(RejectReason::Banned);
        }
        let pk = *self.registered.get(identity).ok_or(RejectReason::NotRegistered)?;
        if !self.renewal_window.contains(identity) {
            return Err(RejectReason::NoRenewalDue);
        }
        let msg = renew_request_message(&self.params, identity, &blinded_challenge);
        if !schnorr::verify(&self.params, &pk, &msg, signature) {
            return Err(RejectReason::BadAuthorSignature);
        }
        let session = self.sessions.remove(&SessionKey::Identity(identity.clone())).ok_or(RejectReason::NoSession)?;
        self.renewal_window.remove(identity);
        let t = signer_respond(&self.signer, session, blinded_challenge);
        Ok((t.r1, t.r2))
    }

    /// Queues envelopes taken from the coordinator's mailbox.
    pub fn enqueue(&mut self, deliveries: impl IntoIterator<Item = Delivery>) {
        self.inbox.extend(deliveries);
    }

    /// Handles the next queued envelope. Does nothing while the pool is
    /// full: requests wait for the next pool.
    pub fn step(&mut self, router: &mut Router) -> Option<AnonOutcome> {
        if self.pool_is_full() {
            return None;
        }
        let envelope = self.inbox.pop_front()?;
        let reply_to = envelope.reply_channel;
        let outcome = match Message::decode(&self.params, &envelope.payload) {
            Ok(Message::OpenSession { key: SessionKey::Onion(url) }) if reply_to == Some(url) => {
                match self.open_session(SessionKey::Onion(url)) {
                    Ok(a) => {
                        self.reply(router, url, Message::Commitment { a });
                        AnonOutcome::SessionOpened(url)
                    }
                    Err(reason) => AnonOutcome::Rejected { reason, reply_to },
                }
            }
            Ok(Message::Request { pseudonym, signature, blinded_challenge }) if reply_to == Some(pseudonym.onion_url) => {
                match self.handle_request(router, pseudonym, signature, blinded_challenge) {
                    Ok(seq) => AnonOutcome::Accepted { pseudonym, pool_add_seq: seq },
                    Err(reason) => AnonOutcome::Rejected { reason, reply_to },
                }
            }
            _ => AnonOutcome::Rejected { reason: RejectReason::Malformed, reply_to },
        };
        if let AnonOutcome::Rejected { reason, reply_to: Some(url) } = &outcome {
            self.reply(router, *url, Message::Reject { reason: *reason });
        }
        Some(outcome)
    }

    fn reply(&self, router: &mut Router, url: OnionUrl, msg: Message) {
        router.anon_send(AnonEnvelope { destination: Address::Onion(url), payload: msg.encode(&self.params), reply_channel: None });
    }

    fn handle_request(
        &mut self,
        router: &mut Router,
        pseudonym: Pseudonym,
        signature: BlindSignature,
        blinded_challenge: Scalar,
    ) -> Result<u64, RejectReason> {
        let url = pseudonym.onion_url;
        if !pseudonym.is_well_formed(&self.params)
            || !verify_signature(&self.params, &self.signer.public(), &pseudonym.canonical(&self.params), &signature)
        {
            return Err(RejectReason::BadSignature);
        }
        if self.spent.contains(&url) || self.board.is_deprecated(&url) {
            return Err(RejectReason::Replay);
        }
        let mut nonce = b"coordinator/".to_vec();
        nonce.extend(self.challenge_counter.to_be_bytes());
        self.challenge_counter += 1;
        if !router.reachability_check(&pseudonym, &nonce) {
            return Err(RejectReason::Unreachable);
        }
        let session = self.sessions.remove(&SessionKey::Onion(url)).ok_or(RejectReason::NoSession)?;
        let entry = self.append(EntryBody::PoolAdd(PoolRecord { pseudonym, signature }));
        if self.policy.deprecate_on_accept(&pseudonym) {
            self.append(EntryBody::Deprecate(pseudonym));
        }
        self.spent.insert(url);
        self.pending_renewals.insert(url, (session, blinded_challenge));
        Ok(entry.seq)
    }

    /// Drains the pool once it holds exactly `threshold` pseudonyms.
    pub fn maybe_trigger_sanity(&mut self) -> Option<DrainedPool> {
        if self.board.pool_size() != self.threshold {
            return None;
        }
        let records = self.board.current_pool();
        let urls: Vec<OnionUrl> = records.iter().map(|r| r.pseudonym.onion_url).collect();
        let previously_deprecated = self
            .board
            .entries()
            .iter()
            .filter_map(|e| match e.body(&self.params) {
                Ok(EntryBody::Deprecate(p)) if !urls.contains(&p.onion_url) => Some(p.onion_url),
                _ => None,
            })
            .collect();
        let entry = self.append(EntryBody::PoolDrain(urls));
        Some(DrainedPool { records, drain_seq: entry.seq, previously_deprecated })
    }

    /// Sends each drained member its blind-signature response, addressed to
    /// the old onion address.
    pub fn issue_renewals(&mut self, members: &[OnionUrl], router: &mut Router) -> Vec<RenewalDelivery> {
        members
            .iter()
            .map(|url| match self.pending_renewals.remove(url) {
                Some((session, e)) => {
                    let t = signer_respond(&self.signer, session, e);
                    self.reply(router, *url, Message::Renew { r1: t.r1, r2: t.r2 });
                    RenewalDelivery::Sent(*url)
                }
                None => RenewalDelivery::Skipped(*url),
            })
            .collect()
    }

    pub fn ban(&mut self, identity: &PartyId) -> Result<Option<BoardEntry>, CoordinatorError> {
        if !self.registered.contains_key(identity) {
            return Err(CoordinatorError::UnknownIdentity(identity.clone()));
        }
        if !self.policy.execute_ban(identity) {
            return Ok(None);
        }
        let entry = self.append(EntryBody::Ban(identity.clone()));
        self.registered.remove(identity);
        self.banned.insert(identity.clone());
        self.renewal_window.remove(identity);
        Ok(Some(entry))
    }

    /// Reaction to a failed check: ban the culprit, deprecate every revealed
    /// pseudonym, dissolve the pool, and let every remaining party that
    /// revealed ask for a fresh pseudonym.
    pub fn handle_failure(&mut self, drained: &DrainedPool, report: &SanityReport) -> Result<Vec<BoardEntry>, CoordinatorError> {
        let mut written = Vec::new();
        if let Verdict::BanParty { identity, .. } = &report.verdict {
            written.extend(self.ban(identity)?);
        }
        for (_, pseudonym) in report.revealed_pseudonyms() {
            if !self.board.is_deprecated(&pseudonym.onion_url) {
                written.push(self.append(EntryBody::Deprecate(pseudonym)));
            }
            self.spent.insert(pseudonym.onion_url);
        }
        for url in drained.urls() {
            self.pending_renewals.remove(&url);
        }
        self.renewal_window = report
            .revealed_pseudonyms()
            .into_iter()
            .map(|(id, _)| id)
            .filter(|id| self.registered.contains_key(id))
            .collect();
        Ok(written)
    }

    pub fn renewal_window(&self) -> &BTreeSet<PartyId> {
        &self.renewal_window
    }

    /// Direct access for scripted misbehaviour in simulations.
    pub fn scripted(&mut self) -> Scripted<'_> {
        Scripted { coordinator: self }
    }
}

impl DirectChannel for Coordinator {
    fn exchange(&mut self, request: &[u8]) -> Vec<u8> {
        let reply = match Message::decode(&self.params, request) {
            Ok(msg) => self.handle_direct_message(msg).unwrap_or_else(|reason| Message::Reject { reason }),
            Err(_) => Message::Reject { reason: RejectReason::Malformed },
        };
        reply.encode(&self.params)
    }
}

/// What a dishonest coordinator can do outside the protocol: write any
/// entry and sign any message.
pub struct Scripted<'a> {
    coordinator: &'a mut Coordinator,
}

impl Scripted<'_> {
    pub fn append(&mut self, body: EntryBody) -> BoardEntry {
        self.coordinator.append(body)
    }

    /// Signs `message` by running both sides of the blind protocol.
    pub fn sign(&mut self, message: &[u8]) -> BlindSignature {
        let c = &mut *self.coordinator;
        let session = signer_commit(&c.params, &c.signer, &mut c.rng);
        let user = user_blind(&c.params, &c.signer.public(), &session.commitment(), message, &mut c.rng)
            .expect("own commitment is in the group");
        let t = signer_respond(&c.signer, session, user.blinded_challenge());
        user_unblind(&user, t.r1, t.r2).expect("own response verifies")
    }

    pub fn rng(&mut self) -> &mut SeededRng {
        &mut self.coordinator.rng
    }
}
