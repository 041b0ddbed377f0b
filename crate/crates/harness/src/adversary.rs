//! Attack catalog: scripted misbehaviour of the coordinator or of corrupted
//! parties, each paired with the outcome the protocol must produce.

use std::fmt;
use std::str::FromStr;

use anonpool_core::board::{EntryBody, PoolRecord, RegisteredRecord};
use anonpool_core::coordinator::CoordinatorPolicy;
use anonpool_core::crypto::schnorr::SigningKey;
use anonpool_core::identity::{AuthToken, PartyId};
use anonpool_core::net::Pseudonym;
use anonpool_core::party::PartyState;
use anonpool_core::sanity::{BanCause, MaliciousCause, Verdict};
use anonpool_core::wire::{DirectChannel, Message, RejectReason, SessionKey};
use serde::{Deserialize, Serialize};

use crate::scenario::{run_scenario, Action, Scenario};
use crate::sim::{board_bodies, coordinator_signed_pseudonym, forged_pseudonym, Holder, SimError, SimEvent, Simulation};

/// Base configuration every catalog attack runs against.
pub const BASE_PARTIES: usize = 5;
pub const BASE_THRESHOLD: usize = 3;
/// Actor corrupted by default in party-side attacks.
pub const DEFAULT_CORRUPT_ACTOR: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackId {
    SignForUnregistered,
    DoubleSignOneParty,
    PoolAddWithoutRequest,
    SkipDeprecation,
    SkipBan,
    ReuseDeprecated,
    InvalidTokenRegistration,
    LieBitUp,
    LieBitDown,
    ReplayPseudonym,
    ForgedSignatureRequest,
    WrongTokenRegistration,
    RefuseReveal,
    ColludingPairSwap,
}

impl AttackId {
    pub const ALL: [AttackId; 14] = [
        AttackId::SignForUnregistered,
        AttackId::DoubleSignOneParty,
        AttackId::PoolAddWithoutRequest,
        AttackId::SkipDeprecation,
        AttackId::SkipBan,
        AttackId::ReuseDeprecated,
        AttackId::InvalidTokenRegistration,
        AttackId::LieBitUp,
        AttackId::LieBitDown,
        AttackId::ReplayPseudonym,
        AttackId::ForgedSignatureRequest,
        AttackId::WrongTokenRegistration,
        AttackId::RefuseReveal,
        AttackId::ColludingPairSwap,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AttackId::SignForUnregistered => "sign-for-unregistered",
            AttackId::DoubleSignOneParty => "double-sign-one-party",
            AttackId::PoolAddWithoutRequest => "pool-add-without-request",
            AttackId::SkipDeprecation => "skip-deprecation",
            AttackId::SkipBan => "skip-ban",
            AttackId::ReuseDeprecated => "reuse-deprecated",
            AttackId::InvalidTokenRegistration => "invalid-token-registration",
            AttackId::LieBitUp => "lie-bit-up",
            AttackId::LieBitDown => "lie-bit-down",
            AttackId::ReplayPseudonym => "replay-pseudonym",
            AttackId::ForgedSignatureRequest => "forged-signature-request",
            AttackId::WrongTokenRegistration => "wrong-token-registration",
            AttackId::RefuseReveal => "refuse-reveal",
            AttackId::ColludingPairSwap => "colluding-pair-swap",
        }
    }

    /// Attacks carried out by the coordinator. Skip-ban additionally
    /// corrupts one party, whose lie gives the coordinator a ban to skip.
    pub fn by_coordinator(self) -> bool {
        matches!(
            self,
            AttackId::SignForUnregistered
                | AttackId::PoolAddWithoutRequest
                | AttackId::SkipDeprecation
                | AttackId::SkipBan
                | AttackId::ReuseDeprecated
                | AttackId::InvalidTokenRegistration
        )
    }

    pub fn expected(self) -> ExpectedDetection {
        use ExpectedDetection as X;
        match self {
            AttackId::SignForUnregistered | AttackId::DoubleSignOneParty => {
                X::CoordinatorMalicious { cause: MaliciousCause::OrphanPseudonym }
            }
            AttackId::PoolAddWithoutRequest | AttackId::ReuseDeprecated => X::AuditViolation { check: 2 },
            AttackId::SkipDeprecation => X::AuditViolation { check: 3 },
            AttackId::SkipBan => X::AuditViolation { check: 4 },
            AttackId::InvalidTokenRegistration => X::AuditViolation { check: 1 },
            AttackId::LieBitUp | AttackId::LieBitDown => X::BanParty { cause: BanCause::LiedInCheck },
            AttackId::RefuseReveal => X::BanParty { cause: BanCause::RefusedReveal },
            AttackId::ForgedSignatureRequest => X::BanParty { cause: BanCause::InvalidSignature },
            AttackId::ReplayPseudonym => X::RequestRejected { reason: RejectReason::Replay },
            AttackId::WrongTokenRegistration => X::RegistrationRejected { reason: RejectReason::BadToken },
            AttackId::ColludingPairSwap => X::UndetectedByDesign,
        }
    }
}

impl fmt::Display for AttackId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AttackId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        AttackId::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| format!("unknown attack '{s}'; known: {}", AttackId::ALL.map(|a| a.name()).join(", ")))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExpectedDetection {
    AuditViolation { check: u8 },
    /// Ban of a corrupted party for this cause.
    BanParty { cause: BanCause },
    CoordinatorMalicious { cause: MaliciousCause },
    RequestRejected { reason: RejectReason },
    RegistrationRejected { reason: RejectReason },
    UndetectedByDesign,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Detection {
    AuditViolation { check: Option<u8>, seq: u64 },
    Verdict { verdict: Verdict },
    RequestRejected { reason: RejectReason },
    RegistrationRejected { reason: RejectReason },
    UndetectedByDesign,
    Undetected,
}

#[derive(Clone, Debug, Serialize)]
pub struct AttackReport {
    pub attack: AttackId,
    pub seed: u64,
    pub expected: ExpectedDetection,
    pub detection: Detection,
    /// First board entry that breaks the rules, located from the board
    /// itself rather than from any auditor's report.
    pub offending_seq: Option<u64>,
    pub corrupted: Vec<usize>,
    /// Largest number of pool slots the adversary held in any check.
    pub max_corrupted_in_pool: usize,
    pub verdicts: Vec<Verdict>,
    pub final_states: Vec<PartyState>,
    pub matches: bool,
}

struct SkipDeprecationPolicy;

impl CoordinatorPolicy for SkipDeprecationPolicy {
    fn deprecate_on_accept(&mut self, _: &Pseudonym) -> bool {
        false
    }
}

struct SkipBanPolicy;

impl CoordinatorPolicy for SkipBanPolicy {
    fn execute_ban(&mut self, _: &PartyId) -> bool {
        false
    }
}

fn corrupt(sim: &mut Simulation, actor: usize) -> Result<(), SimError> {
    sim.check_actor(actor)?;
    sim.actors[actor].behavior.corrupted = true;
    Ok(())
}

/// Applies one attack to a running simulation. `actor` selects the
/// corrupted party where the attack needs one.
pub fn inject(sim: &mut Simulation, attack: AttackId, actor: Option<usize>) -> Result<(), SimError> {
    let actor_or_default = actor.unwrap_or(DEFAULT_CORRUPT_ACTOR.min(sim.actors.len().saturating_sub(1)));
    sim.events.push(SimEvent::Injected { attack: attack.name().to_string(), actor });
    let params = sim.params;
    match attack {
        AttackId::SignForUnregistered => {
            let held = coordinator_signed_pseudonym(sim);
            sim.submit_extra(Holder::Coordinator, held);
        }
        AttackId::DoubleSignOneParty => {
            corrupt(sim, actor_or_default)?;
            let held = coordinator_signed_pseudonym(sim);
            sim.submit_extra(Holder::Actor(actor_or_default), held);
        }
        AttackId::PoolAddWithoutRequest => {
            // Validly signed, but nobody hosts it: there was never a request.
            let held = coordinator_signed_pseudonym(sim);
            let mut scripted = sim.coordinator.scripted();
            let entry = scripted.append(EntryBody::PoolAdd(PoolRecord { pseudonym: held.pseudonym, signature: held.signature }));
            scripted.append(EntryBody::Deprecate(held.pseudonym));
            sim.offending_seq = Some(entry.seq);
        }
        AttackId::SkipDeprecation => sim.coordinator.set_policy(Box::new(SkipDeprecationPolicy)),
        AttackId::SkipBan => {
            sim.coordinator.set_policy(Box::new(SkipBanPolicy));
            corrupt(sim, actor_or_default)?;
            sim.actors[actor_or_default].behavior.claim_bit = Some(1);
        }
        AttackId::ReuseDeprecated => {
            let bodies = board_bodies(sim);
            let record = bodies
                .values()
                .find_map(|b| match b {
                    EntryBody::PoolAdd(r) if sim.coordinator.board().is_deprecated(&r.pseudonym.onion_url) => Some(r.clone()),
                    _ => None,
                })
                .ok_or_else(|| SimError::Precondition("no deprecated pool record to reuse".into()))?;
            let entry = sim.coordinator.scripted().append(EntryBody::PoolAdd(record));
            sim.offending_seq = Some(entry.seq);
        }
        AttackId::InvalidTokenRegistration => {
            let rogue = SigningKey::generate(&params, &mut sim.adversary_rng);
            let identity = PartyId::new(format!("unvetted-{}", sim.coordinator.board().len()));
            let token = AuthToken { identity: identity.clone(), issuer_signature: rogue.sign(&params, identity.as_str().as_bytes()) };
            let entry = sim.coordinator.scripted().append(EntryBody::RegisterParty(RegisteredRecord {
                identity,
                token,
                public_key: rogue.public(),
            }));
            sim.offending_seq = Some(entry.seq);
        }
        AttackId::LieBitUp | AttackId::LieBitDown => {
            corrupt(sim, actor_or_default)?;
            let bit = u64::from(attack == AttackId::LieBitUp);
            sim.actors[actor_or_default].behavior.claim_bit = Some(bit);
        }
        AttackId::RefuseReveal => {
            corrupt(sim, actor_or_default)?;
            let b = &mut sim.actors[actor_or_default].behavior;
            b.claim_bit = Some(1);
            b.refuse_reveal = true;
        }
        AttackId::ForgedSignatureRequest => {
            corrupt(sim, actor_or_default)?;
            let held = forged_pseudonym(&params, &mut sim.adversary_rng);
            let b = &mut sim.actors[actor_or_default].behavior;
            b.claim_bit = Some(1);
            b.reveal_instead = Some(held.clone());
            sim.submit_extra(Holder::Actor(actor_or_default), held);
        }
        AttackId::ReplayPseudonym => {
            corrupt(sim, actor_or_default)?;
            let board = sim.coordinator.board();
            let held = sim.actors[actor_or_default]
                .history
                .iter()
                .rev()
                .find(|h| board.is_deprecated(&h.pseudonym.onion_url))
                .cloned()
                .ok_or_else(|| SimError::Precondition("actor holds no spent pseudonym yet".into()))?;
            sim.submit_extra(Holder::Actor(actor_or_default), held);
        }
        AttackId::WrongTokenRegistration => {
            corrupt(sim, actor_or_default)?;
            let victim = (actor_or_default + 1) % sim.actors.len();
            let identity = sim.actors[victim].ctx.identity().clone();
            let token = sim.actors[actor_or_default].token().clone();
            let public_key = sim.actors[actor_or_default].ctx.public_key();
            let open = Message::OpenSession { key: SessionKey::Identity(identity.clone()) };
            let reply = Message::decode(&params, &sim.coordinator.exchange(&open.encode(&params)));
            let reason = match reply {
                Ok(Message::Commitment { .. }) => {
                    let e = params.random_scalar(&mut sim.adversary_rng);
                    let register = Message::Register { identity: identity.clone(), token, public_key, blinded_challenge: e };
                    match Message::decode(&params, &sim.coordinator.exchange(&register.encode(&params))) {
                        Ok(Message::Reject { reason }) => Some(reason),
                        _ => None,
                    }
                }
                Ok(Message::Reject { reason }) => Some(reason),
                _ => Some(RejectReason::Malformed),
            };
            if let Some(reason) = reason {
                sim.registration_rejections.push((actor_or_default, reason));
                sim.events.push(SimEvent::RegistrationRejected { actor: actor_or_default, identity, reason });
            }
        }
        AttackId::ColludingPairSwap => {
            let partner = (actor_or_default + 1) % sim.actors.len();
            corrupt(sim, actor_or_default)?;
            corrupt(sim, partner)?;
            let held = sim.actors[partner]
                .ctx
                .surrender_current()
                .ok_or_else(|| SimError::Precondition("partner holds no pseudonym".into()))?;
            let b = &mut sim.actors[partner].behavior;
            b.claim_bit = Some(1);
            b.reveal_instead = Some(held.clone());
            sim.submit_extra(Holder::Actor(actor_or_default), held);
        }
    }
    Ok(())
}

/// The catalog run for `attack`: 5 parties, pool threshold 3.
pub fn attack_scenario(attack: AttackId, seed: u64) -> Scenario {
    use Action::*;
    let register_all: Vec<Action> = (0..BASE_PARTIES).map(|actor| Register { actor }).collect();
    let request = |actors: &[usize]| actors.iter().map(|&actor| Request { actor }).collect::<Vec<_>>();
    let c = DEFAULT_CORRUPT_ACTOR;
    let inject = |actor: Option<usize>| Inject { attack, actor };
    let mut script = Vec::new();
    match attack {
        AttackId::SignForUnregistered => {
            script.extend(register_all);
            script.push(inject(None));
            script.extend(request(&[0, 1]));
            script.push(Advance);
        }
        AttackId::DoubleSignOneParty => {
            script.extend(register_all);
            script.push(inject(Some(c)));
            script.extend(request(&[c, 0]));
            script.push(Advance);
        }
        AttackId::PoolAddWithoutRequest | AttackId::InvalidTokenRegistration => {
            script.extend(register_all);
            script.push(inject(None));
            script.push(Advance);
        }
        AttackId::SkipDeprecation => {
            script.extend(register_all);
            script.push(inject(None));
            script.extend(request(&[0, 1, 2]));
            script.push(Advance);
        }
        AttackId::SkipBan | AttackId::LieBitUp | AttackId::RefuseReveal => {
            script.extend(register_all);
            script.push(inject(Some(c)));
            script.extend(request(&[0, 1, 2]));
            script.push(Advance);
        }
        AttackId::LieBitDown => {
            script.extend(register_all);
            script.push(inject(Some(c)));
            script.extend(request(&[c, 0, 1]));
            script.push(Advance);
        }
        AttackId::ForgedSignatureRequest => {
            script.extend(register_all);
            script.push(inject(Some(c)));
            script.push(Advance);
            script.extend(request(&[0, 1, 2]));
            script.push(Advance);
        }
        AttackId::ReuseDeprecated => {
            script.extend(register_all);
            script.extend(request(&[0, 1, 2]));
            script.push(Advance);
            script.push(inject(None));
            script.push(Advance);
        }
        AttackId::ReplayPseudonym => {
            script.extend(register_all);
            script.extend(request(&[c, 0, 1]));
            script.push(Advance);
            script.push(inject(Some(c)));
            script.push(Advance);
        }
        AttackId::WrongTokenRegistration => {
            script.push(inject(Some(c)));
            script.extend(register_all);
            script.push(Advance);
        }
        AttackId::ColludingPairSwap => {
            script.extend(register_all);
            script.push(inject(Some(c - 1)));
            script.extend(request(&[c - 1, 0]));
            script.push(Advance);
        }
    }
    Scenario {
        seed,
        parties: BASE_PARTIES,
        threshold: BASE_THRESHOLD,
        bit_length: None,
        modulus: None,
        inputs: None,
        script,
        expect: None,
    }
}

fn holder_corrupted(sim: &Simulation, holder: Holder) -> bool {
    match holder {
        Holder::Actor(i) => sim.actors[i].behavior.corrupted,
        Holder::Coordinator => true,
    }
}

/// The first thing that went wrong for the adversary, in order of
/// precedence: an honest audit failure, a failed check, then a rejection of
/// a corrupted party's registration or request.
pub fn detect(sim: &Simulation, attack: AttackId) -> Detection {
    if let Some(v) = sim.violations.first() {
        return Detection::AuditViolation { check: v.check, seq: v.seq };
    }
    if let Some(c) = sim.checks.iter().find(|c| c.verdict != Verdict::Success) {
        return Detection::Verdict { verdict: c.verdict.clone() };
    }
    if let Some((_, reason)) = sim.registration_rejections.iter().find(|(a, _)| sim.actors[*a].behavior.corrupted) {
        return Detection::RegistrationRejected { reason: *reason };
    }
    if let Some((_, reason)) = sim.request_rejections.iter().find(|(h, _)| holder_corrupted(sim, *h)) {
        return Detection::RequestRejected { reason: *reason };
    }
    if attack.expected() == ExpectedDetection::UndetectedByDesign {
        Detection::UndetectedByDesign
    } else {
        Detection::Undetected
    }
}

/// First offending board entry, found from the board and the injection
/// record alone.
fn offending_seq(sim: &Simulation, attack: AttackId) -> Option<u64> {
    match attack {
        AttackId::SkipDeprecation => {
            let mut deprecated = std::collections::BTreeSet::new();
            for (seq, body) in board_bodies(sim) {
                match body {
                    EntryBody::Deprecate(p) => {
                        deprecated.insert(p.onion_url);
                    }
                    EntryBody::PoolDrain(urls) if urls.iter().any(|u| !deprecated.contains(u)) => return Some(seq),
                    _ => {}
                }
            }
            None
        }
        AttackId::SkipBan => {
            let (at, _) = sim.bans_due.first()?;
            sim.coordinator.board().entries().get(*at).map(|e| e.seq)
        }
        _ => sim.offending_seq,
    }
}

fn matches_expectation(sim: &Simulation, expected: &ExpectedDetection, detection: &Detection, offending: Option<u64>) -> bool {
    let corrupted_ids: Vec<&PartyId> =
        sim.actors.iter().filter(|a| a.behavior.corrupted).map(|a| a.ctx.identity()).collect();
    match (expected, detection) {
        (ExpectedDetection::AuditViolation { check }, Detection::AuditViolation { check: got, seq }) => {
            *got == Some(*check) && offending == Some(*seq)
        }
        (ExpectedDetection::BanParty { cause }, Detection::Verdict { verdict: Verdict::BanParty { identity, cause: got } }) => {
            got == cause && corrupted_ids.contains(&identity)
        }
        (
            ExpectedDetection::CoordinatorMalicious { cause },
            Detection::Verdict { verdict: Verdict::CoordinatorMalicious { cause: got } },
        ) => got == cause,
        (ExpectedDetection::RequestRejected { reason }, Detection::RequestRejected { reason: got })
        | (ExpectedDetection::RegistrationRejected { reason }, Detection::RegistrationRejected { reason: got }) => got == reason,
        (ExpectedDetection::UndetectedByDesign, Detection::UndetectedByDesign) => true,
        _ => false,
    }
}

/// Runs `scenario`, which is expected to contain `attack`, and classifies
/// what happened.
pub fn run_attack(attack: AttackId, scenario: &Scenario) -> Result<(Simulation, AttackReport), SimError> {
    let (sim, _) = run_scenario(scenario)?;
    let detection = detect(&sim, attack);
    let expected = attack.expected();
    let offending = offending_seq(&sim, attack);
    let corrupted: Vec<usize> = (0..sim.actors.len()).filter(|i| sim.actors[*i].behavior.corrupted).collect();
    let max_corrupted_in_pool = sim.checks.iter().map(|c| c.corrupted_in_pool).max().unwrap_or(0);
    // Collusion may hide a pseudonym's owner, but must not leave the
    // adversary with more pool slots than it has parties. Detected attacks
    // are allowed to exceed this; that excess is what gets caught.
    let within_bound = expected != ExpectedDetection::UndetectedByDesign || max_corrupted_in_pool <= corrupted.len();
    let matches = matches_expectation(&sim, &expected, &detection, offending) && within_bound;
    let report = AttackReport {
        attack,
        seed: scenario.seed,
        expected,
        detection,
        offending_seq: offending,
        corrupted,
        max_corrupted_in_pool,
        verdicts: sim.checks.iter().map(|c| c.verdict.clone()).collect(),
        final_states: sim.final_states(),
        matches,
    };
    Ok((sim, report))
}
