//! Deterministic simulation: one coordinator, a fixed set of actors, the
//! simulated onion network, and a single event loop driving them.
//!
//! Randomness is split by role. Everything bound to an identity (long-term
//! key, key shares, encrypted bits) forks from the identity's name;
//! everything bound to a pseudonym slot (pseudonym keys, blinding factors,
//! secure-sum masks) forks from the actor index. Swapping two honest
//! identities between actors therefore leaves every pseudonymous message
//! unchanged unless the protocol itself leaks the identity.

use std::collections::{BTreeMap, BTreeSet};

use anonpool_core::blind::BlindSignature;
use anonpool_core::board::{
    AuditContext, AuditVerdict, BoardDump, DumpItem, EntryBody, EntryKind, RouterProbe, SanityBoard,
    SanityBoardEntry, SkipReachability, Violation, genesis_hash,
};
use anonpool_core::coordinator::{AnonOutcome, Coordinator, CoordinatorError, DrainedPool, RenewalDelivery};
use anonpool_core::crypto::{setup_group, GroupError, GroupParams, SeededRng, DEFAULT_BIT_LENGTH};
use anonpool_core::identity::{AuthToken, IdentityProvider, PartyId};
use anonpool_core::net::{Address, AnonEnvelope, KeyHolder, OnionUrl, Router, RouterEvent};
use anonpool_core::party::{HeldPseudonym, PartyContext, PartyError, PartyEvent, PartyNotice, PartyState, PendingPseudonym, ProtocolViolation};
use anonpool_core::sanity::{conduct, SanityError, SanityParticipant, SanityReport, Verdict};
use anonpool_core::threshold::{Ciphertext, JointPublicKey, ShareIndex};
use anonpool_core::wire::{Message, RejectReason, SessionKey, TAG_COMMITMENT, TAG_REJECT, TAG_RENEW};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::secure_sum::{compute_f_secure_sum, SumMember};

pub const DEFAULT_MODULUS: u64 = 1_000_003;
const MAX_LOOP_ITERATIONS: usize = 10_000;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("script references unknown actor {0}")]
    UnknownActor(usize),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("simulation did not settle within {0} iterations")]
    NoQuiescence(usize),
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error(transparent)]
    Coordinator(#[from] CoordinatorError),
    #[error(transparent)]
    Party(#[from] PartyError),
    #[error(transparent)]
    Protocol(#[from] ProtocolViolation),
    #[error(transparent)]
    Sanity(#[from] SanityError),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimConfig {
    pub seed: u64,
    pub parties: usize,
    pub threshold: usize,
    pub bit_length: u32,
    pub modulus: u64,
    /// Secure-sum inputs per actor; drawn from the seed when absent.
    pub inputs: Option<Vec<u64>>,
}

impl SimConfig {
    pub fn new(seed: u64, parties: usize, threshold: usize) -> Self {
        SimConfig { seed, parties, threshold, bit_length: DEFAULT_BIT_LENGTH, modulus: DEFAULT_MODULUS, inputs: None }
    }
}

/// Who controls a pseudonym outside the normal party flow.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "holder", content = "actor", rename_all = "snake_case")]
pub enum Holder {
    Actor(usize),
    Coordinator,
}

/// Departures from honest behaviour in the sanity check.
#[derive(Clone, Debug, Default)]
pub struct Behavior {
    pub corrupted: bool,
    /// Encrypt this bit instead of the true membership bit.
    pub claim_bit: Option<u64>,
    pub refuse_reveal: bool,
    /// Reveal this pseudonym instead of the real one.
    pub reveal_instead: Option<HeldPseudonym>,
}

pub struct Actor {
    pub ctx: PartyContext,
    pub behavior: Behavior,
    pub input: u64,
    token: AuthToken,
    sum_rng: SeededRng,
    probe_counter: u64,
    /// Every pseudonym this actor has held, oldest first.
    pub history: Vec<HeldPseudonym>,
}

impl Actor {
    pub fn token(&self) -> &AuthToken {
        &self.token
    }

    fn record_held(&mut self) {
        for held in [self.ctx.current(), self.ctx.submitted()].into_iter().flatten() {
            if !self.history.iter().any(|h| h.pseudonym == held.pseudonym) {
                self.history.push(held.clone());
            }
        }
    }
}

impl SanityParticipant for Actor {
    fn identity(&self) -> PartyId {
        self.ctx.identity().clone()
    }

    fn announce_key(&mut self, params: &GroupParams, run: u64, index: ShareIndex) -> Option<SanityBoardEntry> {
        self.ctx.announce_key(params, run, index)
    }

    fn contribute(&mut self, params: &GroupParams, run: u64, key: &JointPublicKey) -> Option<SanityBoardEntry> {
        match self.behavior.claim_bit {
            Some(bit) => Some(self.ctx.contribution_for(run, key, bit)),
            None => self.ctx.contribute(params, run, key),
        }
    }

    fn decrypt_sum(&mut self, params: &GroupParams, run: u64, sum: &Ciphertext) -> Option<SanityBoardEntry> {
        self.ctx.decrypt_sum(params, run, sum)
    }

    fn reveal(&mut self, params: &GroupParams, run: u64) -> Option<SanityBoardEntry> {
        if self.behavior.refuse_reveal {
            return None;
        }
        match &self.behavior.reveal_instead {
            Some(held) => Some(self.ctx.reveal_entry(run, held)),
            None => self.ctx.reveal(params, run),
        }
    }

    fn open_input(&mut self, params: &GroupParams, run: u64, input_of: &PartyId, ct: &Ciphertext) -> Option<SanityBoardEntry> {
        self.ctx.open_input(params, run, input_of, ct)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum ExtraStage {
    Idle,
    AwaitingCommitment,
    Submitted,
}

/// A pseudonym submitted outside the owning party's state machine, e.g. a
/// second pseudonym a corrupted party should not have.
pub struct Extra {
    pub holder: Holder,
    pub held: HeldPseudonym,
    stage: ExtraStage,
    pending: Option<PendingPseudonym>,
    rng: SeededRng,
    pub history: Vec<OnionUrl>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SimEvent {
    /// Public setup, always the first line of a log.
    Genesis {
        seed: u64,
        parties: usize,
        threshold: usize,
        modulus: u64,
        group: String,
        coordinator_key: String,
        issuer_key: String,
        board_genesis: String,
    },
    Registered { actor: usize, identity: PartyId },
    RegistrationRejected { actor: usize, identity: PartyId, reason: RejectReason },
    RequestSent { actor: usize },
    RequestRejected { holder: Holder, reason: RejectReason },
    Renewed { holder: Holder },
    RenewalSkipped { onion_url: String },
    Accepted { pool_add_seq: u64 },
    Board { seq: u64, kind: String, entry_hash: String },
    State { actor: usize, state: PartyState },
    CheckFinished { run: u64, drain_seq: u64, count: Option<u64>, board_count: u64, verdict: Verdict },
    SecureSum { run: u64, outputs: Vec<u64>, plaintext_sum: u64 },
    SecureSumAborted { run: u64, reason: String },
    AuditViolation { actor: usize, check: Option<u8>, seq: u64 },
    Injected { attack: String, actor: Option<usize> },
    Abandoned,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CheckRecord {
    pub run: u64,
    pub drain_seq: u64,
    pub verdict: Verdict,
    pub count: Option<u64>,
    pub board_count: u64,
    /// Pool slots held by the adversary when the pool was drained.
    pub corrupted_in_pool: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SumRecord {
    pub run: u64,
    pub outputs: Vec<u64>,
    pub plaintext_sum: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ViolationRecord {
    pub actor: usize,
    pub check: Option<u8>,
    pub seq: u64,
}

pub fn default_names(parties: usize) -> Vec<String> {
    (0..parties).map(|i| format!("party-{i}")).collect()
}

pub struct Simulation {
    pub config: SimConfig,
    pub params: GroupParams,
    pub idp: IdentityProvider,
    pub coordinator: Coordinator,
    pub router: Router,
    pub actors: Vec<Actor>,
    pub extras: Vec<Extra>,
    pub events: Vec<SimEvent>,
    pub checks: Vec<CheckRecord>,
    pub sums: Vec<SumRecord>,
    pub violations: Vec<ViolationRecord>,
    pub registration_rejections: Vec<(usize, RejectReason)>,
    pub request_rejections: Vec<(Holder, RejectReason)>,
    /// Board length at each point a ban became due, with the identity.
    pub bans_due: Vec<(usize, PartyId)>,
    pub abandoned: bool,
    /// Set by injections that write an offending entry directly.
    pub offending_seq: Option<u64>,
    pub(crate) adversary_rng: SeededRng,
    next_run: u64,
    logged_entries: usize,
    logged_states: Vec<PartyState>,
}

impl Simulation {
    pub fn new(config: SimConfig) -> Result<Self, SimError> {
        let names = default_names(config.parties);
        Self::with_names(config, &names)
    }

    /// `names[i]` is the identity of actor `i`.
    pub fn with_names(config: SimConfig, names: &[String]) -> Result<Self, SimError> {
        if names.len() != config.parties {
            return Err(SimError::Config(format!("{} names for {} parties", names.len(), config.parties)));
        }
        if names.iter().collect::<BTreeSet<_>>().len() != names.len() {
            return Err(SimError::Config("identity names must be distinct".into()));
        }
        if config.modulus < 2 {
            return Err(SimError::Config("modulus must be at least 2".into()));
        }
        if let Some(inputs) = &config.inputs {
            if inputs.len() != config.parties || inputs.iter().any(|i| *i >= config.modulus) {
                return Err(SimError::Config("need one input per party, each below the modulus".into()));
            }
        }
        let root = SeededRng::from_u64(config.seed);
        let params = setup_group(config.bit_length, &mut root.fork("group"))?;
        let mut idp = IdentityProvider::new(params, &mut root.fork("issuer"));
        let coordinator = Coordinator::new(params, config.threshold, idp.public_key(), root.fork("coordinator"))?;
        let router = Router::new(params, root.fork("router"));
        let audit = AuditContext { params, coordinator_key: coordinator.public_key(), issuer_key: idp.public_key() };
        let mut actors = Vec::new();
        for (i, name) in names.iter().enumerate() {
            let id = PartyId::new(name.clone());
            let token = idp.issue_token(&id).map_err(|e| SimError::Config(e.to_string()))?;
            let ctx = PartyContext::new(
                audit,
                id,
                token.clone(),
                root.fork(&format!("identity/{name}")),
                root.fork(&format!("slot/{i}")),
            );
            let input = match &config.inputs {
                Some(inputs) => inputs[i],
                None => root.fork(&format!("input/{i}")).gen_range(0..config.modulus.min(1000)),
            };
            actors.push(Actor {
                ctx,
                behavior: Behavior::default(),
                input,
                token,
                sum_rng: root.fork(&format!("secure-sum/{i}")),
                probe_counter: 0,
                history: Vec::new(),
            });
        }
        let logged_states = actors.iter().map(|a| a.ctx.state()).collect();
        let genesis = SimEvent::Genesis {
            seed: config.seed,
            parties: config.parties,
            threshold: config.threshold,
            modulus: config.modulus,
            group: hex::encode(params.canonical()),
            coordinator_key: hex::encode(params.element_bytes(&audit.coordinator_key)),
            issuer_key: hex::encode(params.element_bytes(&audit.issuer_key)),
            board_genesis: hex::encode(genesis_hash()),
        };
        Ok(Simulation {
            config,
            params,
            idp,
            coordinator,
            router,
            actors,
            extras: Vec::new(),
            events: vec![genesis],
            checks: Vec::new(),
            sums: Vec::new(),
            violations: Vec::new(),
            registration_rejections: Vec::new(),
            request_rejections: Vec::new(),
            bans_due: Vec::new(),
            abandoned: false,
            offending_seq: None,
            adversary_rng: root.fork("adversary"),
            next_run: 0,
            logged_entries: 0,
            logged_states,
        })
    }

    pub fn audit_context(&self) -> AuditContext {
        AuditContext { params: self.params, coordinator_key: self.coordinator.public_key(), issuer_key: self.idp.public_key() }
    }

    pub fn check_actor(&self, actor: usize) -> Result<(), SimError> {
        if actor < self.actors.len() {
            Ok(())
        } else {
            Err(SimError::UnknownActor(actor))
        }
    }

    fn is_honest_auditor(&self, i: usize) -> bool {
        let a = &self.actors[i];
        !a.behavior.corrupted && a.ctx.state() != PartyState::Unregistered && !a.ctx.state().is_terminal()
    }

    pub fn final_states(&self) -> Vec<PartyState> {
        self.actors.iter().map(|a| a.ctx.state()).collect()
    }

    // --- script actions -----------------------------------------------------

    /// Registers an actor over the authenticated channel. A rejection is
    /// recorded, not returned as an error.
    pub fn register(&mut self, actor: usize) -> Result<(), SimError> {
        self.check_actor(actor)?;
        if self.abandoned {
            return Ok(());
        }
        let a = &mut self.actors[actor];
        let identity = a.ctx.identity().clone();
        match a.ctx.do_register(&mut self.coordinator, &mut self.router) {
            Ok(()) => {
                a.record_held();
                // The backlog predates this party; its pool addresses can no
                // longer be probed.
                let from = a.ctx.auditor().next_seq() as usize;
                let entries = &self.coordinator.board().entries()[from..];
                if let AuditVerdict::Violation(v) = a.ctx.do_audit(entries, &mut SkipReachability) {
                    self.note_violation(actor, v);
                }
                self.events.push(SimEvent::Registered { actor, identity });
            }
            Err(PartyError::Rejected(reason)) => {
                self.registration_rejections.push((actor, reason));
                self.events.push(SimEvent::RegistrationRejected { actor, identity, reason });
            }
            Err(e) => return Err(e.into()),
        }
        self.record_changes();
        Ok(())
    }

    /// Starts a pool request for an actor.
    pub fn request(&mut self, actor: usize) -> Result<(), SimError> {
        self.check_actor(actor)?;
        if self.abandoned {
            return Ok(());
        }
        self.actors[actor].ctx.do_request(&mut self.router)?;
        Ok(())
    }

    /// Adds a pseudonym driven outside any party state machine and sends
    /// its request.
    pub fn submit_extra(&mut self, holder: Holder, held: HeldPseudonym) -> usize {
        let url = held.pseudonym.onion_url;
        if !self.router.is_hosted(&url) {
            self.router.host(url, Box::new(KeyHolder(held.secret.clone())));
        }
        let rng = self.adversary_rng.fork(&format!("extra/{}", self.extras.len()));
        let mut extra = Extra { holder, held, stage: ExtraStage::Idle, pending: None, rng, history: vec![url] };
        self.start_extra(&mut extra);
        self.extras.push(extra);
        self.extras.len() - 1
    }

    fn start_extra(&mut self, extra: &mut Extra) {
        let url = extra.held.pseudonym.onion_url;
        let open = Message::OpenSession { key: SessionKey::Onion(url) };
        self.router.anon_send(AnonEnvelope {
            destination: Address::Coordinator,
            payload: open.encode(&self.params),
            reply_channel: Some(url),
        });
        extra.stage = ExtraStage::AwaitingCommitment;
    }

    // --- event loop -----------------------------------------------------------

    /// Runs the loop until nothing moves: deliveries, coordinator steps,
    /// party reactions, audits, and a sanity check whenever the pool fills.
    pub fn settle(&mut self) -> Result<(), SimError> {
        for _ in 0..MAX_LOOP_ITERATIONS {
            if self.abandoned {
                return Ok(());
            }
            let mut progress = false;
            self.router.flush();
            let incoming = self.router.receive(&Address::Coordinator);
            progress |= !incoming.is_empty();
            self.coordinator.enqueue(incoming);
            while let Some(outcome) = self.coordinator.step(&mut self.router) {
                progress = true;
                if let AnonOutcome::Accepted { pool_add_seq, .. } = outcome {
                    self.events.push(SimEvent::Accepted { pool_add_seq });
                }
            }
            self.router.flush();
            progress |= self.poll_parties()?;
            progress |= self.poll_extras();
            self.record_changes();
            self.audit_round();
            self.record_changes();
            if !self.abandoned && self.coordinator.pool_is_full() {
                self.run_check()?;
                progress = true;
            }
            if !progress {
                return Ok(());
            }
        }
        Err(SimError::NoQuiescence(MAX_LOOP_ITERATIONS))
    }

    fn poll_parties(&mut self) -> Result<bool, SimError> {
        let mut progress = false;
        for i in 0..self.actors.len() {
            let state = self.actors[i].ctx.state();
            if state == PartyState::Unregistered || state.is_terminal() {
                continue;
            }
            for notice in self.actors[i].ctx.poll(&mut self.router)? {
                match notice {
                    PartyNotice::RequestSent(_) => self.events.push(SimEvent::RequestSent { actor: i }),
                    PartyNotice::RequestRejected(reason) => {
                        self.request_rejections.push((Holder::Actor(i), reason));
                        self.events.push(SimEvent::RequestRejected { holder: Holder::Actor(i), reason });
                    }
                    PartyNotice::Renewed(_) => self.events.push(SimEvent::Renewed { holder: Holder::Actor(i) }),
                    PartyNotice::Ignored => continue,
                }
                progress = true;
            }
            self.actors[i].record_held();
        }
        Ok(progress)
    }

    fn poll_extras(&mut self) -> bool {
        let mut progress = false;
        let coordinator_key = self.coordinator.public_key();
        for extra in &mut self.extras {
            let url = extra.held.pseudonym.onion_url;
            for delivery in self.router.receive(&Address::Onion(url)) {
                let Ok(msg) = Message::decode(&self.params, &delivery.payload) else { continue };
                match (msg, extra.stage) {
                    (Message::Commitment { a }, ExtraStage::AwaitingCommitment) => {
                        let Ok((pending, e)) = PendingPseudonym::blind(&self.params, &coordinator_key, &a, &mut extra.rng)
                        else {
                            extra.stage = ExtraStage::Idle;
                            continue;
                        };
                        let request = Message::Request {
                            pseudonym: extra.held.pseudonym,
                            signature: extra.held.signature,
                            blinded_challenge: e,
                        };
                        self.router.anon_send(AnonEnvelope {
                            destination: Address::Coordinator,
                            payload: request.encode(&self.params),
                            reply_channel: Some(url),
                        });
                        extra.pending = Some(pending);
                        extra.stage = ExtraStage::Submitted;
                    }
                    (Message::Reject { reason }, _) => {
                        extra.stage = ExtraStage::Idle;
                        extra.pending = None;
                        self.request_rejections.push((extra.holder, reason));
                        self.events.push(SimEvent::RequestRejected { holder: extra.holder, reason });
                    }
                    (Message::Renew { r1, r2 }, ExtraStage::Submitted) => {
                        let Some(pending) = extra.pending.take() else { continue };
                        extra.stage = ExtraStage::Idle;
                        if let Ok(held) = pending.finish(r1, r2) {
                            self.router.unhost(&url);
                            self.router.host(held.pseudonym.onion_url, Box::new(KeyHolder(held.secret.clone())));
                            extra.history.push(held.pseudonym.onion_url);
                            extra.held = held;
                            self.events.push(SimEvent::Renewed { holder: extra.holder });
                        }
                    }
                    _ => continue,
                }
                progress = true;
            }
        }
        progress
    }

    fn note_violation(&mut self, actor: usize, v: Violation) {
        let record = ViolationRecord { actor, check: v.check.id(), seq: v.seq };
        self.violations.push(record);
        self.events.push(SimEvent::AuditViolation { actor, check: record.check, seq: v.seq });
        if !self.abandoned {
            self.abandoned = true;
            self.events.push(SimEvent::Abandoned);
        }
    }

    /// Every honest registered actor audits the entries it has not seen,
    /// probing pool addresses through the network.
    fn audit_round(&mut self) {
        for i in 0..self.actors.len() {
            if !self.is_honest_auditor(i) {
                continue;
            }
            let entries = self.coordinator.board().entries();
            let a = &mut self.actors[i];
            let from = a.ctx.auditor().next_seq() as usize;
            if from >= entries.len() {
                continue;
            }
            let mut probe = RouterProbe {
                router: &mut self.router,
                nonce_prefix: format!("audit/{i}/").into_bytes(),
                counter: a.probe_counter,
            };
            let verdict = a.ctx.do_audit(&entries[from..], &mut probe);
            a.probe_counter = probe.counter;
            if let AuditVerdict::Violation(v) = verdict {
                self.note_violation(i, v);
            }
        }
    }

    fn close_audit_turns(&mut self) {
        for i in 0..self.actors.len() {
            if !self.is_honest_auditor(i) {
                continue;
            }
            if let AuditVerdict::Violation(v) = self.actors[i].ctx.close_audit_turn() {
                self.note_violation(i, v);
            }
        }
    }

    fn record_changes(&mut self) {
        let entries = self.coordinator.board().entries();
        for e in &entries[self.logged_entries..] {
            self.events.push(SimEvent::Board { seq: e.seq, kind: e.kind.name().to_string(), entry_hash: hex::encode(e.entry_hash) });
        }
        self.logged_entries = entries.len();
        for (i, a) in self.actors.iter().enumerate() {
            let state = a.ctx.state();
            if state != self.logged_states[i] {
                self.logged_states[i] = state;
                self.events.push(SimEvent::State { actor: i, state });
            }
        }
    }

    // --- sanity check ---------------------------------------------------------

    /// Who controls each pool address, if anyone we simulate.
    fn controller_of(&self, url: &OnionUrl) -> Option<Holder> {
        if let Some(i) = self
            .actors
            .iter()
            .position(|a| a.ctx.submitted().is_some_and(|h| h.pseudonym.onion_url == *url))
        {
            return Some(Holder::Actor(i));
        }
        self.extras.iter().find(|e| e.held.pseudonym.onion_url == *url).map(|e| e.holder)
    }

    fn holder_is_corrupted(&self, holder: Holder) -> bool {
        match holder {
            Holder::Actor(i) => self.actors[i].behavior.corrupted,
            Holder::Coordinator => true,
        }
    }

    fn run_check(&mut self) -> Result<(), SimError> {
        let Some(drained) = self.coordinator.maybe_trigger_sanity() else { return Ok(()) };
        self.record_changes();
        self.audit_round();
        self.record_changes();
        if self.abandoned {
            return Ok(());
        }
        let urls = drained.urls();
        let roster = self.coordinator.roster().clone();
        let in_roster: Vec<usize> =
            (0..self.actors.len()).filter(|i| roster.contains_key(self.actors[*i].ctx.identity())).collect();
        for &i in &in_roster {
            self.actors[i].ctx.check_started(&urls)?;
        }
        self.record_changes();
        let corrupted_in_pool = urls
            .iter()
            .filter(|u| self.controller_of(u).is_some_and(|h| self.holder_is_corrupted(h)))
            .count();

        let run = self.next_run;
        self.next_run += 1;
        let mut sboard = SanityBoard::new(self.params, roster.clone());
        let coordinator_key = self.coordinator.public_key();
        let mut refs: Vec<&mut dyn SanityParticipant> = self
            .actors
            .iter_mut()
            .filter(|a| roster.contains_key(a.ctx.identity()))
            .map(|a| a as &mut dyn SanityParticipant)
            .collect();
        let report = conduct(
            &self.params,
            &coordinator_key,
            &mut refs,
            &roster,
            &drained.records,
            drained.previously_deprecated.clone(),
            run,
            &mut sboard,
        )?;
        self.events.push(SimEvent::CheckFinished {
            run,
            drain_seq: drained.drain_seq,
            count: report.count,
            board_count: report.board_count,
            verdict: report.verdict.clone(),
        });
        self.checks.push(CheckRecord {
            run,
            drain_seq: drained.drain_seq,
            verdict: report.verdict.clone(),
            count: report.count,
            board_count: report.board_count,
            corrupted_in_pool,
        });
        match report.verdict.clone() {
            Verdict::Success => self.after_success(run, &in_roster, &drained)?,
            Verdict::BanParty { identity, .. } => self.after_ban(&in_roster, &drained, &report, identity)?,
            Verdict::CoordinatorMalicious { .. } => {
                for &i in &in_roster {
                    if !self.actors[i].ctx.state().is_terminal() {
                        self.actors[i].ctx.apply(PartyEvent::CoordinatorMalicious)?;
                    }
                }
                self.abandoned = true;
                self.events.push(SimEvent::Abandoned);
            }
        }
        self.record_changes();
        Ok(())
    }

    fn after_success(&mut self, run: u64, in_roster: &[usize], drained: &DrainedPool) -> Result<(), SimError> {
        for &i in in_roster {
            self.actors[i].ctx.apply(PartyEvent::CheckSucceeded)?;
        }
        self.record_changes();
        let urls = drained.urls();
        let mut members = Vec::new();
        let mut inputs = Vec::new();
        for url in &urls {
            let holder = self.controller_of(url);
            let (input, rng) = match holder {
                Some(Holder::Actor(i)) => {
                    let a = &self.actors[i];
                    (Some(a.input), a.sum_rng.fork(&format!("run/{run}/{}", url.to_hex())))
                }
                Some(Holder::Coordinator) => (Some(0), self.adversary_rng.fork(&format!("sum/{run}/{}", url.to_hex()))),
                None => (None, SeededRng::from_u64(0)),
            };
            inputs.extend(input);
            members.push(SumMember { url: *url, input, rng });
        }
        let modulus = self.config.modulus;
        match compute_f_secure_sum(&self.params, &mut self.router, &mut members, modulus) {
            Ok(outputs) => {
                let plaintext_sum = (inputs.iter().map(|i| u128::from(*i)).sum::<u128>() % u128::from(modulus)) as u64;
                self.sums.push(SumRecord { run, outputs: outputs.clone(), plaintext_sum });
                self.events.push(SimEvent::SecureSum { run, outputs, plaintext_sum });
            }
            Err(e) => self.events.push(SimEvent::SecureSumAborted { run, reason: e.to_string() }),
        }
        for &i in in_roster {
            if self.actors[i].ctx.state() == PartyState::ComputingF {
                self.actors[i].ctx.apply(PartyEvent::ComputationDone)?;
            }
        }
        for delivery in self.coordinator.issue_renewals(&urls, &mut self.router) {
            if let RenewalDelivery::Skipped(url) = delivery {
                self.events.push(SimEvent::RenewalSkipped { onion_url: url.to_string() });
            }
        }
        Ok(())
    }

    fn after_ban(
        &mut self,
        in_roster: &[usize],
        drained: &DrainedPool,
        report: &SanityReport,
        culprit: PartyId,
    ) -> Result<(), SimError> {
        for i in 0..self.actors.len() {
            if self.is_honest_auditor(i) {
                self.actors[i].ctx.auditor_mut().expect_ban(culprit.clone());
            }
        }
        self.bans_due.push((self.coordinator.board().len(), culprit.clone()));
        self.coordinator.handle_failure(drained, report)?;
        self.record_changes();
        self.audit_round();
        self.close_audit_turns();
        self.record_changes();
        if self.abandoned {
            return Ok(());
        }
        for &i in in_roster {
            let a = &mut self.actors[i];
            if *a.ctx.identity() == culprit {
                a.ctx.banned(&mut self.router)?;
            } else {
                a.ctx.check_failed(&mut self.router)?;
            }
        }
        let drained_urls = drained.urls();
        self.extras.retain(|e| !drained_urls.contains(&e.held.pseudonym.onion_url));
        self.record_changes();
        let window = self.coordinator.renewal_window().clone();
        for &i in in_roster {
            if window.contains(self.actors[i].ctx.identity()) {
                self.actors[i].ctx.renew_after_failure(&mut self.coordinator, &mut self.router)?;
                self.actors[i].record_held();
                self.events.push(SimEvent::Renewed { holder: Holder::Actor(i) });
            }
        }
        Ok(())
    }

    // --- outputs --------------------------------------------------------------

    pub fn event_log_jsonl(&self) -> String {
        self.events.iter().map(|e| serde_json::to_string(e).expect("events serialize") + "\n").collect()
    }

    /// Board dump with a `#ban-due` marker wherever a check named a party.
    pub fn board_dump(&self) -> BoardDump {
        let mut items = Vec::new();
        let entries = self.coordinator.board().entries();
        for (pos, entry) in entries.iter().enumerate() {
            for (_, id) in self.bans_due.iter().filter(|(at, _)| *at == pos) {
                items.push(DumpItem::BanDue(id.clone()));
            }
            items.push(DumpItem::Entry(entry.clone()));
        }
        for (_, id) in self.bans_due.iter().filter(|(at, _)| *at >= entries.len()) {
            items.push(DumpItem::BanDue(id.clone()));
        }
        BoardDump { context: self.audit_context(), items }
    }

    fn corrupted_urls(&self) -> BTreeSet<String> {
        let mut urls = BTreeSet::new();
        for a in self.actors.iter().filter(|a| a.behavior.corrupted) {
            urls.extend(a.history.iter().map(|h| h.pseudonym.onion_url.to_string()));
        }
        for e in &self.extras {
            if self.holder_is_corrupted(e.holder) {
                urls.extend(e.history.iter().map(|u| u.to_string()));
            }
        }
        urls
    }

    /// What the coordinator and the corrupted parties observe on the
    /// pseudonymous side: anonymous traffic to and from the coordinator,
    /// the coordinator's reachability challenges, traffic reaching corrupted
    /// addresses, and every board entry except registrations.
    ///
    /// Board entries are rendered without their hashes, which chain over
    /// the registration entries.
    pub fn adversary_view(&self) -> Vec<String> {
        let corrupted = self.corrupted_urls();
        let from_coordinator = [TAG_COMMITMENT, TAG_RENEW, TAG_REJECT].map(|t| hex::encode([t]));
        let coordinator_nonce = hex::encode(b"coordinator/");
        let mut view = Vec::new();
        for event in self.router.log() {
            let keep = match event {
                RouterEvent::Delivered { destination, payload_hex, .. } => {
                    destination == "coordinator"
                        || from_coordinator.iter().any(|t| payload_hex.starts_with(t.as_str()))
                        || corrupted.contains(destination)
                }
                RouterEvent::Challenge { onion_url, nonce_hex, .. } => {
                    nonce_hex.starts_with(&coordinator_nonce) || corrupted.contains(onion_url)
                }
                RouterEvent::Queued { .. } | RouterEvent::Dropped { .. } => false,
            };
            if keep {
                view.push(serde_json::to_string(event).expect("router events serialize"));
            }
        }
        for entry in self.coordinator.board().entries() {
            if entry.kind != EntryKind::RegisterParty {
                view.push(format!("{}:{}:{}", entry.seq, entry.kind.name(), hex::encode(&entry.payload)));
            }
        }
        view
    }

    /// Pseudonyms currently held by `holder`, counting extras.
    pub fn signed_pseudonyms_of(&self, actor: usize) -> usize {
        let own = self.actors[actor].ctx.undeprecated_held();
        let extra = self
            .extras
            .iter()
            .filter(|e| e.holder == Holder::Actor(actor) && !self.coordinator.board().is_deprecated(&e.held.pseudonym.onion_url))
            .count();
        own + extra
    }
}

/// A syntactically valid pseudonym with a signature the coordinator never
/// issued.
pub fn forged_pseudonym(params: &GroupParams, rng: &mut SeededRng) -> HeldPseudonym {
    let (pseudonym, secret) = anonpool_core::net::new_pseudonym(params, rng);
    let signature = BlindSignature {
        challenge: params.random_scalar(rng),
        r1: params.random_scalar(rng),
        r2: params.random_scalar(rng),
    };
    HeldPseudonym { pseudonym, secret, signature }
}

/// A pseudonym validly signed by the coordinator outside the protocol.
pub fn coordinator_signed_pseudonym(sim: &mut Simulation) -> HeldPseudonym {
    let params = sim.params;
    let (pseudonym, secret) = anonpool_core::net::new_pseudonym(&params, &mut sim.adversary_rng);
    let signature = sim.coordinator.scripted().sign(&pseudonym.canonical(&params));
    HeldPseudonym { pseudonym, secret, signature }
}

/// Map from board sequence number to entry body, for post-hoc checks.
pub fn board_bodies(sim: &Simulation) -> BTreeMap<u64, EntryBody> {
    sim.coordinator
        .board()
        .entries()
        .iter()
        .filter_map(|e| e.body(&sim.params).ok().map(|b| (e.seq, b)))
        .collect()
}
