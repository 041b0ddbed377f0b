//! A registered party: its life-cycle state machine and the local state
//! behind it (long-term key, current pseudonym, key share, auditor).

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blind::{user_blind, user_unblind, BlindError, BlindSignature, UserSession};
use crate::board::{ownership_message, AuditContext, AuditVerdict, Auditor, BoardEntry, ReachabilityProbe, SanityBoardEntry, SanityPayload};
use crate::codec::DecodeError;
use crate::crypto::schnorr::SigningKey;
use crate::crypto::{GroupElement, GroupParams, Scalar, SeededRng};
use crate::identity::{AuthToken, PartyId};
use crate::net::{new_pseudonym, Address, AnonEnvelope, KeyHolder, OnionUrl, Pseudonym, PseudonymSecret, Router};
use crate::sanity::{dkg_context, SanityParticipant};
use crate::threshold::{encrypt_bit, partial_decrypt, dkg_contribute, Ciphertext, JointPublicKey, KeyShare, ShareIndex};
use crate::wire::{renew_request_message, DirectChannel, Message, RejectReason, SessionKey};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum PartyState {
    Unregistered,
    /// Registered, holding a current pseudonym, auditing the board.
    Auditing,
    /// Request sent; waiting for the pool to fill.
    AwaitingPool,
    SanityAsMember,
    /// `request_queued`: a request is waiting at the coordinator for the
    /// next pool.
    SanityAsAuditor { request_queued: bool },
    ComputingF,
    Banned,
    /// Stopped using the service after detecting coordinator misbehaviour.
    Withdrawn,
}

impl PartyState {
    pub fn is_terminal(self) -> bool {
        matches!(self, PartyState::Banned | PartyState::Withdrawn)
    }

    fn in_sanity(self) -> bool {
        matches!(self, PartyState::SanityAsMember | PartyState::SanityAsAuditor { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum PartyEvent {
    Registered,
    RequestSent,
    RequestRejected,
    /// `member`: the party's submitted pseudonym is in the drained pool.
    CheckStarted { member: bool },
    CheckSucceeded,
    ComputationDone,
    /// Check failed and someone else was held responsible.
    CheckFailed,
    SelfBanned,
    CoordinatorMalicious,
    AuditViolation,
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("protocol violation: {event:?} is not allowed in {state:?}")]
pub struct ProtocolViolation {
    pub state: PartyState,
    pub event: PartyEvent,
}

/// The life-cycle transition function.
pub fn transition(state: PartyState, event: PartyEvent) -> Result<PartyState, ProtocolViolation> {
    use PartyEvent as E;
    use PartyState as S;
    let next = match (state, event) {
        (S::Unregistered, E::Registered) => S::Auditing,
        (S::Auditing, E::RequestSent) => S::AwaitingPool,
        (S::AwaitingPool, E::RequestRejected) => S::Auditing,
        (S::Auditing, E::CheckStarted { member: false }) => S::SanityAsAuditor { request_queued: false },
        (S::AwaitingPool, E::CheckStarted { member: true }) => S::SanityAsMember,
        (S::AwaitingPool, E::CheckStarted { member: false }) => S::SanityAsAuditor { request_queued: true },
        (S::SanityAsMember, E::CheckSucceeded) => S::ComputingF,
        (S::SanityAsAuditor { request_queued: true }, E::CheckSucceeded) => S::AwaitingPool,
        (S::SanityAsAuditor { request_queued: false }, E::CheckSucceeded) => S::Auditing,
        (S::ComputingF, E::ComputationDone) => S::Auditing,
        (s, E::CheckFailed) if s.in_sanity() => S::Auditing,
        (s, E::SelfBanned) if s.in_sanity() => S::Banned,
        (s, E::CoordinatorMalicious) if s.in_sanity() => S::Withdrawn,
        (s, E::AuditViolation) if s != S::Unregistered && !s.is_terminal() => S::Withdrawn,
        _ => return Err(ProtocolViolation { state, event }),
    };
    Ok(next)
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PartyError {
    #[error("operation not allowed in state {0:?}")]
    WrongState(PartyState),
    #[error("coordinator rejected: {0:?}")]
    Rejected(RejectReason),
    #[error("unexpected reply from coordinator")]
    UnexpectedReply,
    #[error("no current pseudonym")]
    NoPseudonym,
    #[error(transparent)]
    Blind(#[from] BlindError),
    #[error(transparent)]
    Protocol(#[from] ProtocolViolation),
    #[error(transparent)]
    Decode(#[from] DecodeError),
}

/// A pseudonym together with its secret and the coordinator's signature.
#[derive(Clone)]
pub struct HeldPseudonym {
    pub pseudonym: Pseudonym,
    pub secret: PseudonymSecret,
    pub signature: BlindSignature,
}

impl fmt::Debug for HeldPseudonym {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HeldPseudonym").field("onion_url", &self.pseudonym.onion_url).finish()
    }
}

/// The next pseudonym, blinded and waiting for the coordinator's response.
#[derive(Clone)]
pub struct PendingPseudonym {
    pub pseudonym: Pseudonym,
    secret: PseudonymSecret,
    session: UserSession,
}

impl PendingPseudonym {
    /// Fresh keypair blinded against the signer commitment `a`. Returns the
    /// blinded challenge to send.
    pub fn blind(params: &GroupParams, coordinator_key: &GroupElement, a: &GroupElement, rng: &mut SeededRng) -> Result<(Self, Scalar), BlindError> {
        let (pseudonym, secret) = new_pseudonym(params, rng);
        let session = user_blind(params, coordinator_key, a, &pseudonym.canonical(params), rng)?;
        let e = session.blinded_challenge();
        Ok((PendingPseudonym { pseudonym, secret, session }, e))
    }

    pub fn finish(self, r1: Scalar, r2: Scalar) -> Result<HeldPseudonym, BlindError> {
        let signature = user_unblind(&self.session, r1, r2)?;
        Ok(HeldPseudonym { pseudonym: self.pseudonym, secret: self.secret, signature })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum RequestStage {
    Idle,
    AwaitingCommitment,
}

/// What a party noticed while reading its onion mailboxes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PartyNotice {
    RequestSent(OnionUrl),
    RequestRejected(RejectReason),
    Renewed(OnionUrl),
    Ignored,
}

pub struct PartyContext {
    params: GroupParams,
    identity: PartyId,
    token: AuthToken,
    long_term: SigningKey,
    coordinator_key: GroupElement,
    state: PartyState,
    current: Option<HeldPseudonym>,
    submitted: Option<HeldPseudonym>,
    pending: Option<PendingPseudonym>,
    stage: RequestStage,
    key_share: Option<(u64, KeyShare)>,
    auditor: Auditor,
    rng: SeededRng,
    slot_rng: SeededRng,
    next_slot: u64,
}

impl PartyContext {
    /// `rng` drives everything tied to the identity (long-term key, key
    /// shares, check contributions); `slot_rng` drives everything tied to a
    /// pseudonym (its key and blinding factors).
    pub fn new(audit: AuditContext, identity: PartyId, token: AuthToken, mut rng: SeededRng, slot_rng: SeededRng) -> Self {
        let params = audit.params;
        PartyContext {
            long_term: SigningKey::generate(&params, &mut rng),
            params,
            identity,
            token,
            coordinator_key: audit.coordinator_key,
            state: PartyState::Unregistered,
            current: None,
            submitted: None,
            pending: None,
            stage: RequestStage::Idle,
            key_share: None,
            auditor: Auditor::new(audit),
            rng,
            slot_rng,
            next_slot: 0,
        }
    }

    pub fn identity(&self) -> &PartyId {
        &self.identity
    }

    pub fn state(&self) -> PartyState {
        self.state
    }

    pub fn public_key(&self) -> GroupElement {
        self.long_term.public()
    }

    pub fn params(&self) -> &GroupParams {
        &self.params
    }

    pub fn current(&self) -> Option<&HeldPseudonym> {
        self.current.as_ref()
    }

    pub fn submitted(&self) -> Option<&HeldPseudonym> {
        self.submitted.as_ref()
    }

    pub fn auditor(&self) -> &Auditor {
        &self.auditor
    }

    pub fn auditor_mut(&mut self) -> &mut Auditor {
        &mut self.auditor
    }

    pub fn apply(&mut self, event: PartyEvent) -> Result<PartyState, ProtocolViolation> {
        self.state = transition(self.state, event)?;
        Ok(self.state)
    }

    fn next_slot_rng(&mut self) -> SeededRng {
        let rng = self.slot_rng.fork(&format!("pseudonym/{}", self.next_slot));
        self.next_slot += 1;
        rng
    }

    fn blind_next(&mut self, a: &GroupElement) -> Result<Scalar, PartyError> {
        let mut rng = self.next_slot_rng();
        let (pending, e) = PendingPseudonym::blind(&self.params, &self.coordinator_key, a, &mut rng)?;
        self.pending = Some(pending);
        Ok(e)
    }

    fn adopt(&mut self, held: HeldPseudonym, router: &mut Router) {
        router.host(held.pseudonym.onion_url, Box::new(KeyHolder(held.secret.clone())));
        self.current = Some(held);
    }

    fn expect_commitment(&self, reply: &[u8]) -> Result<GroupElement, PartyError> {
        match Message::decode(&self.params, reply)? {
            Message::Commitment { a } => Ok(a),
            Message::Reject { reason } => Err(PartyError::Rejected(reason)),
            _ => Err(PartyError::UnexpectedReply),
        }
    }

    fn expect_response(&mut self, reply: &[u8]) -> Result<HeldPseudonym, PartyError> {
        let (r1, r2) = match Message::decode(&self.params, reply)? {
            Message::Renew { r1, r2 } => (r1, r2),
            Message::Reject { reason } => return Err(PartyError::Rejected(reason)),
            _ => return Err(PartyError::UnexpectedReply),
        };
        let pending = self.pending.take().ok_or(PartyError::UnexpectedReply)?;
        Ok(pending.finish(r1, r2)?)
    }

    /// Registers over the authenticated channel. Only the blinded
    /// challenge of the first pseudonym crosses the wire.
    pub fn do_register(&mut self, channel: &mut dyn DirectChannel, router: &mut Router) -> Result<(), PartyError> {
        if self.state != PartyState::Unregistered {
            return Err(PartyError::WrongState(self.state));
        }
        let open = Message::OpenSession { key: SessionKey::Identity(self.identity.clone()) };
        let a = self.expect_commitment(&channel.exchange(&open.encode(&self.params)))?;
        let e = self.blind_next(&a)?;
        let register = Message::Register {
            identity: self.identity.clone(),
            token: self.token.clone(),
            public_key: self.long_term.public(),
            blinded_challenge: e,
        };
        let reply = channel.exchange(&register.encode(&self.params));
        let held = match self.expect_response(&reply) {
            Ok(h) => h,
            Err(err) => {
                self.pending = None;
                return Err(err);
            }
        };
        self.adopt(held, router);
        self.apply(PartyEvent::Registered)?;
        Ok(())
    }

    /// Starts a pool request: asks the coordinator, anonymously, for a
    /// signing commitment at the current onion address.
    pub fn do_request(&mut self, router: &mut Router) -> Result<(), PartyError> {
        if self.state != PartyState::Auditing || self.stage != RequestStage::Idle {
            return Err(PartyError::WrongState(self.state));
        }
        let url = self.current.as_ref().ok_or(PartyError::NoPseudonym)?.pseudonym.onion_url;
        let open = Message::OpenSession { key: SessionKey::Onion(url) };
        router.anon_send(AnonEnvelope { destination: Address::Coordinator, payload: open.encode(&self.params), reply_channel: Some(url) });
        self.stage = RequestStage::AwaitingCommitment;
        Ok(())
    }

    /// Builds the request for `held`, blinding the next pseudonym against
    /// `a`. Used by [`Self::poll`]; public for scripted parties.
    pub fn request_message(&mut self, held: &HeldPseudonym, a: &GroupElement) -> Result<Vec<u8>, PartyError> {
        let e = self.blind_next(a)?;
        Ok(Message::Request { pseudonym: held.pseudonym, signature: held.signature, blinded_challenge: e }.encode(&self.params))
    }

    /// Reads the onion mailboxes and reacts to what the coordinator sent.
    pub fn poll(&mut self, router: &mut Router) -> Result<Vec<PartyNotice>, PartyError> {
        let mut urls = Vec::new();
        if let Some(h) = &self.current {
            urls.push(h.pseudonym.onion_url);
        }
        if let Some(h) = &self.submitted {
            urls.push(h.pseudonym.onion_url);
        }
        let mut notices = Vec::new();
        for url in urls {
            for delivery in router.receive(&Address::Onion(url)) {
                let notice = match Message::decode(&self.params, &delivery.payload) {
                    Ok(msg) => self.on_message(url, msg, router)?,
                    Err(_) => PartyNotice::Ignored,
                };
                notices.push(notice);
            }
        }
        Ok(notices)
    }

    fn on_message(&mut self, url: OnionUrl, msg: Message, router: &mut Router) -> Result<PartyNotice, PartyError> {
        let at_current = self.current.as_ref().is_some_and(|h| h.pseudonym.onion_url == url);
        let at_submitted = self.submitted.as_ref().is_some_and(|h| h.pseudonym.onion_url == url);
        match msg {
            Message::Commitment { a } if at_current && self.stage == RequestStage::AwaitingCommitment => {
                let held = self.current.take().expect("checked above");
                let bytes = self.request_message(&held, &a)?;
                router.anon_send(AnonEnvelope { destination: Address::Coordinator, payload: bytes, reply_channel: Some(url) });
                self.submitted = Some(held);
                self.stage = RequestStage::Idle;
                self.apply(PartyEvent::RequestSent)?;
                Ok(PartyNotice::RequestSent(url))
            }
            Message::Reject { reason } if at_current && self.stage == RequestStage::AwaitingCommitment => {
                self.stage = RequestStage::Idle;
                Ok(PartyNotice::RequestRejected(reason))
            }
            Message::Reject { reason } if at_submitted && self.state == PartyState::AwaitingPool => {
                self.current = self.submitted.take();
                self.pending = None;
                self.apply(PartyEvent::RequestRejected)?;
                Ok(PartyNotice::RequestRejected(reason))
            }
            Message::Renew { r1, r2 } if at_submitted && self.pending.is_some() => {
                let pending = self.pending.take().expect("checked above");
                let held = pending.finish(r1, r2)?;
                router.unhost(&url);
                self.submitted = None;
                let new_url = held.pseudonym.onion_url;
                self.adopt(held, router);
                Ok(PartyNotice::Renewed(new_url))
            }
            _ => Ok(PartyNotice::Ignored),
        }
    }

    /// Audits new board entries; a violation makes the party withdraw.
    pub fn do_audit(&mut self, new_entries: &[BoardEntry], probe: &mut dyn ReachabilityProbe) -> AuditVerdict {
        let verdict = self.auditor.audit_update(new_entries, probe);
        if !verdict.is_ok() && !self.state.is_terminal() && self.state != PartyState::Unregistered {
            self.state = PartyState::Withdrawn;
        }
        verdict
    }

    /// Like [`Self::do_audit`] for a check (4) deadline.
    pub fn close_audit_turn(&mut self) -> AuditVerdict {
        let verdict = self.auditor.close_turn();
        if !verdict.is_ok() && !self.state.is_terminal() && self.state != PartyState::Unregistered {
            self.state = PartyState::Withdrawn;
        }
        verdict
    }

    /// Enters the check; membership is read off the drained pool.
    pub fn check_started(&mut self, drained: &[OnionUrl]) -> Result<PartyState, ProtocolViolation> {
        let member = self.submitted.as_ref().is_some_and(|h| drained.contains(&h.pseudonym.onion_url));
        self.apply(PartyEvent::CheckStarted { member })
    }

    /// 1 iff this party's pseudonym was in the drained pool.
    pub fn sanity_bit(&self) -> u64 {
        u64::from(self.state == PartyState::SanityAsMember)
    }

    /// After a failed check: the revealed pseudonym is spent and any queued
    /// request is void.
    pub fn check_failed(&mut self, router: &mut Router) -> Result<PartyState, ProtocolViolation> {
        for held in [self.current.take(), self.submitted.take()].into_iter().flatten() {
            router.unhost(&held.pseudonym.onion_url);
        }
        self.pending = None;
        self.stage = RequestStage::Idle;
        self.apply(PartyEvent::CheckFailed)
    }

    pub fn banned(&mut self, router: &mut Router) -> Result<PartyState, ProtocolViolation> {
        for held in [self.current.take(), self.submitted.take()].into_iter().flatten() {
            router.unhost(&held.pseudonym.onion_url);
        }
        self.pending = None;
        self.apply(PartyEvent::SelfBanned)
    }

    /// Obtains a fresh pseudonym after a failed check, authenticating the
    /// request with the long-term key.
    pub fn renew_after_failure(&mut self, channel: &mut dyn DirectChannel, router: &mut Router) -> Result<(), PartyError> {
        if self.state != PartyState::Auditing {
            return Err(PartyError::WrongState(self.state));
        }
        let open = Message::OpenSession { key: SessionKey::Identity(self.identity.clone()) };
        let a = self.expect_commitment(&channel.exchange(&open.encode(&self.params)))?;
        let e = self.blind_next(&a)?;
        let signature = self.long_term.sign(&self.params, &renew_request_message(&self.params, &self.identity, &e));
        let request = Message::RenewRequest { identity: self.identity.clone(), blinded_challenge: e, signature };
        let reply = channel.exchange(&request.encode(&self.params));
        let held = self.expect_response(&reply)?;
        self.adopt(held, router);
        Ok(())
    }

    /// Hands the current pseudonym to someone else (scripted collusion).
    pub fn surrender_current(&mut self) -> Option<HeldPseudonym> {
        self.current.take()
    }

    /// Number of signed pseudonyms held that are not deprecated according
    /// to this party's audited view of the board.
    pub fn undeprecated_held(&self) -> usize {
        [&self.current, &self.submitted]
            .into_iter()
            .flatten()
            .filter(|h| !self.auditor.is_deprecated(&h.pseudonym.onion_url))
            .count()
    }

    pub fn sign_entry(&self, payload: SanityPayload) -> SanityBoardEntry {
        SanityBoardEntry::sign(&self.params, self.identity.clone(), &self.long_term, payload)
    }

    /// Contribution for an arbitrary bit; the honest path passes
    /// [`Self::sanity_bit`].
    pub fn contribution_for(&mut self, run: u64, key: &JointPublicKey, bit: u64) -> SanityBoardEntry {
        let (ciphertext, proof) = encrypt_bit(&self.params, key, bit, &mut self.rng).expect("bit is 0 or 1");
        self.sign_entry(SanityPayload::Contribution { run, ciphertext, proof })
    }

    pub fn reveal_entry(&self, run: u64, held: &HeldPseudonym) -> SanityBoardEntry {
        let ownership = held.secret.sign(&self.params, &ownership_message(&self.params, run, &self.identity, &held.pseudonym));
        self.sign_entry(SanityPayload::PseudonymReveal { run, pseudonym: held.pseudonym, signature: held.signature, ownership })
    }

    fn share_for(&self, run: u64) -> Option<&KeyShare> {
        self.key_share.as_ref().filter(|(r, _)| *r == run).map(|(_, s)| s)
    }
}

impl SanityParticipant for PartyContext {
    fn identity(&self) -> PartyId {
        self.identity.clone()
    }

    fn announce_key(&mut self, params: &GroupParams, run: u64, index: ShareIndex) -> Option<SanityBoardEntry> {
        let share = dkg_contribute(params, index, &mut self.rng);
        let announcement = share.announce(params, &dkg_context(run));
        self.key_share = Some((run, share));
        Some(self.sign_entry(SanityPayload::KeyShare { run, announcement }))
    }

    fn contribute(&mut self, _params: &GroupParams, run: u64, key: &JointPublicKey) -> Option<SanityBoardEntry> {
        let bit = self.sanity_bit();
        Some(self.contribution_for(run, key, bit))
    }

    fn decrypt_sum(&mut self, params: &GroupParams, run: u64, sum: &Ciphertext) -> Option<SanityBoardEntry> {
        let share = self.share_for(run)?.clone();
        let part = partial_decrypt(params, &share, sum, &mut self.rng);
        Some(self.sign_entry(SanityPayload::DecryptionShare { run, part }))
    }

    fn reveal(&mut self, _params: &GroupParams, run: u64) -> Option<SanityBoardEntry> {
        let held = self.submitted.as_ref().or(self.current.as_ref())?;
        Some(self.reveal_entry(run, held))
    }

    fn open_input(&mut self, params: &GroupParams, run: u64, input_of: &PartyId, ct: &Ciphertext) -> Option<SanityBoardEntry> {
        let share = self.share_for(run)?.clone();
        let part = partial_decrypt(params, &share, ct, &mut self.rng);
        Some(self.sign_entry(SanityPayload::InputReveal { run, input_of: input_of.clone(), part }))
    }
}
