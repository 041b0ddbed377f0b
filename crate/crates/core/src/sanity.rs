//! The sanity check run when the pool fills, and the failure diagnosis.
//!
//! Rounds: fresh key shares, encrypted membership bits, joint decryption of
//! the sum. If the count disagrees with the board, every party reveals its
//! current pseudonym and the failure is attributed in a fixed order:
//! reveals first, then orphaned pool pseudonyms, then per-party opening of
//! the individual bits.
//!
//! All round messages travel on the sanity board and are author-signed, so
//! every party (and the coordinator) evaluates the same data and reaches
//! the same verdict.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blind::verify_signature;
use crate::board::{ownership_message, Author, PoolRecord, SanityBoard, SanityBoardEntry, SanityPayload};
use crate::crypto::schnorr;
use crate::crypto::{GroupElement, GroupParams};
use crate::identity::PartyId;
use crate::net::{OnionUrl, Pseudonym};
use crate::threshold::{
    aggregate_announcements, combine_decryptions, sum_ciphertexts, verify_bit_proof, verify_partial_decryption,
    BitProof, Ciphertext, JointPublicKey, PartialDecryption, ShareIndex, ThresholdError,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BanCause {
    /// Revealed pseudonym carries no valid coordinator signature, or the
    /// revealer cannot sign with its key.
    InvalidSignature,
    /// Opened bit disagrees with the revealed pool membership.
    LiedInCheck,
    /// No reveal during diagnosis.
    RefusedReveal,
    /// Revealed a pseudonym that was deprecated before this pool.
    StaleReveal,
    /// Revealed the same pseudonym as a party earlier in the roster.
    DuplicateReveal,
    InvalidBitProof,
    InvalidKeyShare,
    InvalidDecryptionShare,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaliciousCause {
    /// A validly signed pool pseudonym belongs to no registered party.
    OrphanPseudonym,
    /// The pool or count cannot be explained by any party's behaviour.
    BoardInconsistent,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Success,
    BanParty { identity: PartyId, cause: BanCause },
    CoordinatorMalicious { cause: MaliciousCause },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Round {
    KeyShare,
    Contribution,
    Decryption,
    Reveal,
    Opening,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SanityError {
    #[error("{identity} sent nothing usable in the {round:?} round")]
    Stalled { identity: PartyId, round: Round },
    #[error("participants do not match the roster")]
    RosterMismatch,
    #[error("roster is empty")]
    EmptyRoster,
    /// A proven bit decrypted outside {0, 1}. Must never happen.
    #[error("soundness alarm: {0}")]
    SoundnessAlarm(ThresholdError),
    #[error(transparent)]
    Threshold(#[from] ThresholdError),
}

/// One registered party's side of the check.
///
/// Returning `None` means staying silent in that round.
pub trait SanityParticipant {
    fn identity(&self) -> PartyId;
    fn announce_key(&mut self, params: &GroupParams, run: u64, index: ShareIndex) -> Option<SanityBoardEntry>;
    fn contribute(&mut self, params: &GroupParams, run: u64, key: &JointPublicKey) -> Option<SanityBoardEntry>;
    fn decrypt_sum(&mut self, params: &GroupParams, run: u64, sum: &Ciphertext) -> Option<SanityBoardEntry>;
    fn reveal(&mut self, params: &GroupParams, run: u64) -> Option<SanityBoardEntry>;
    fn open_input(&mut self, params: &GroupParams, run: u64, input_of: &PartyId, ct: &Ciphertext)
        -> Option<SanityBoardEntry>;
}

/// Public record of one check.
#[derive(Clone, Debug)]
pub struct SanityRun {
    pub run: u64,
    /// Registered parties in share-index order (index = position + 1).
    pub roster: Vec<(PartyId, GroupElement)>,
    pub pool: Vec<PoolRecord>,
    pub board_count: u64,
    /// Pseudonyms deprecated on the board before this pool was filled.
    pub previously_deprecated: BTreeSet<OnionUrl>,
    pub joint_key: JointPublicKey,
    pub contributions: Vec<(Ciphertext, BitProof)>,
    pub sum: Ciphertext,
    pub parts: Vec<PartialDecryption>,
    pub count: u64,
}

impl SanityRun {
    pub fn index_of(&self, identity: &PartyId) -> Option<usize> {
        self.roster.iter().position(|(id, _)| id == identity)
    }
}

pub enum CheckResult {
    Counted(SanityRun),
    /// A malformed round message with an evident author.
    Misbehaved { identity: PartyId, cause: BanCause },
}

fn publish(sboard: &mut SanityBoard, who: &PartyId, entry: Option<SanityBoardEntry>) -> Option<SanityPayload> {
    let entry = entry?;
    if entry.author != Author::Party(who.clone()) {
        return None;
    }
    let payload = entry.payload.clone();
    sboard.publish(entry).ok()?;
    Some(payload)
}

fn ordered<'a, 'b>(
    participants: &'a mut [&'b mut dyn SanityParticipant],
    roster: &BTreeMap<PartyId, GroupElement>,
) -> Result<Vec<&'a mut &'b mut dyn SanityParticipant>, SanityError> {
    let mut by_id: BTreeMap<PartyId, &'a mut &'b mut dyn SanityParticipant> =
        participants.iter_mut().map(|p| (p.identity(), p)).collect();
    if by_id.len() != roster.len() || roster.keys().any(|id| !by_id.contains_key(id)) {
        return Err(SanityError::RosterMismatch);
    }
    Ok(roster.keys().map(|id| by_id.remove(id).unwrap()).collect())
}

/// Context the key-share possession proofs are bound to.
pub fn dkg_context(run: u64) -> Vec<u8> {
    let mut ctx = b"anonpool/sanity-dkg".to_vec();
    ctx.extend(run.to_be_bytes());
    ctx
}

/// Runs the three rounds and decrypts the count.
#[allow(clippy::too_many_arguments)]
pub fn run_check(
    params: &GroupParams,
    participants: &mut [&mut dyn SanityParticipant],
    roster: &BTreeMap<PartyId, GroupElement>,
    pool: &[PoolRecord],
    board_count: u64,
    previously_deprecated: BTreeSet<OnionUrl>,
    run: u64,
    sboard: &mut SanityBoard,
) -> Result<CheckResult, SanityError> {
    if roster.is_empty() {
        return Err(SanityError::EmptyRoster);
    }
    let mut parts_in_order = ordered(participants, roster)?;
    let ids: Vec<PartyId> = roster.keys().cloned().collect();
    sboard.set_roster(roster.clone());

    let context = dkg_context(run);
    let mut announcements = Vec::new();
    for (i, p) in parts_in_order.iter_mut().enumerate() {
        let index = (i + 1) as ShareIndex;
        let stalled = || SanityError::Stalled { identity: ids[i].clone(), round: Round::KeyShare };
        match publish(sboard, &ids[i], p.announce_key(params, run, index)) {
            Some(SanityPayload::KeyShare { run: r, announcement }) if r == run && announcement.owner == index => {
                if !announcement.verify(params, &context) {
                    return Ok(CheckResult::Misbehaved { identity: ids[i].clone(), cause: BanCause::InvalidKeyShare });
                }
                announcements.push(announcement);
            }
            _ => return Err(stalled()),
        }
    }
    let joint_key = aggregate_announcements(params, &announcements, &context)?;

    let mut contributions = Vec::new();
    for (i, p) in parts_in_order.iter_mut().enumerate() {
        match publish(sboard, &ids[i], p.contribute(params, run, &joint_key)) {
            Some(SanityPayload::Contribution { run: r, ciphertext, proof }) if r == run => {
                if !verify_bit_proof(params, &joint_key, &ciphertext, &proof) {
                    return Ok(CheckResult::Misbehaved { identity: ids[i].clone(), cause: BanCause::InvalidBitProof });
                }
                contributions.push((ciphertext, proof));
            }
            _ => return Err(SanityError::Stalled { identity: ids[i].clone(), round: Round::Contribution }),
        }
    }
    let sum = sum_ciphertexts(params, contributions.iter().map(|(ct, _)| ct));

    let mut parts = Vec::new();
    for (i, p) in parts_in_order.iter_mut().enumerate() {
        let index = (i + 1) as ShareIndex;
        match publish(sboard, &ids[i], p.decrypt_sum(params, run, &sum)) {
            Some(SanityPayload::DecryptionShare { run: r, part }) if r == run && part.owner == index => {
                let share_public = joint_key.share_public(index).expect("index in roster");
                if !verify_partial_decryption(params, &share_public, &sum, &part) {
                    return Ok(CheckResult::Misbehaved {
                        identity: ids[i].clone(),
                        cause: BanCause::InvalidDecryptionShare,
                    });
                }
                parts.push(part);
            }
            _ => return Err(SanityError::Stalled { identity: ids[i].clone(), round: Round::Decryption }),
        }
    }
    let count = combine_decryptions(params, &sum, &parts, &joint_key, roster.len() as u64)?;

    Ok(CheckResult::Counted(SanityRun {
        run,
        roster: roster.iter().map(|(id, pk)| (id.clone(), *pk)).collect(),
        pool: pool.to_vec(),
        board_count,
        previously_deprecated,
        joint_key,
        contributions,
        sum,
        parts,
        count,
    }))
}

/// Asks every party for its current pseudonym. Entries appear in roster
/// order; silent parties are simply absent.
pub fn collect_reveals(
    params: &GroupParams,
    participants: &mut [&mut dyn SanityParticipant],
    roster: &BTreeMap<PartyId, GroupElement>,
    run: u64,
    sboard: &mut SanityBoard,
) -> Result<Vec<SanityBoardEntry>, SanityError> {
    let mut out = Vec::new();
    for p in ordered(participants, roster)? {
        let id = p.identity();
        let Some(entry) = p.reveal(params, run) else { continue };
        if entry.author == Author::Party(id) && sboard.publish(entry.clone()).is_ok() {
            out.push(entry);
        }
    }
    Ok(out)
}

/// Jointly decrypts every individual contribution. Each party posts one
/// partial decryption per contribution.
pub fn open_inputs(
    params: &GroupParams,
    participants: &mut [&mut dyn SanityParticipant],
    run: &SanityRun,
    sboard: &mut SanityBoard,
) -> Result<BTreeMap<PartyId, u64>, SanityError> {
    let roster: BTreeMap<PartyId, GroupElement> = run.roster.iter().cloned().collect();
    let mut parts_in_order = ordered(participants, &roster)?;
    let mut opened = BTreeMap::new();
    for (owner_pos, (owner, _)) in run.roster.iter().enumerate() {
        let ct = run.contributions[owner_pos].0;
        let mut parts = Vec::new();
        for (i, p) in parts_in_order.iter_mut().enumerate() {
            let index = (i + 1) as ShareIndex;
            let who = &run.roster[i].0;
            let stalled = || SanityError::Stalled { identity: who.clone(), round: Round::Opening };
            match publish(sboard, who, p.open_input(params, run.run, owner, &ct)) {
                Some(SanityPayload::InputReveal { run: r, input_of, part })
                    if r == run.run && input_of == *owner && part.owner == index =>
                {
                    parts.push(part);
                }
                _ => return Err(stalled()),
            }
        }
        // combine_decryptions rejects parts whose equality proof fails.
        let bit = match combine_decryptions(params, &ct, &parts, &run.joint_key, 1) {
            Ok(bit) => bit,
            Err(ThresholdError::PlaintextOutOfRange) => {
                return Err(SanityError::SoundnessAlarm(ThresholdError::PlaintextOutOfRange))
            }
            Err(e) => return Err(e.into()),
        };
        opened.insert(owner.clone(), bit);
    }
    Ok(opened)
}

/// Verdicts that follow from the reveals alone: missing or bad reveals
/// (checked first), then case (1) signature validity, then case (2)
/// orphaned pool pseudonyms. `None` means the individual bits must be
/// opened.
pub fn diagnose_reveals(
    params: &GroupParams,
    coordinator_key: &GroupElement,
    run: &SanityRun,
    revealed: &[SanityBoardEntry],
) -> Option<Verdict> {
    matched_reveals(params, coordinator_key, run, revealed).err()
}

fn matched_reveals(
    params: &GroupParams,
    coordinator_key: &GroupElement,
    run: &SanityRun,
    revealed: &[SanityBoardEntry],
) -> Result<BTreeMap<PartyId, Pseudonym>, Verdict> {
    let mut first: BTreeMap<&PartyId, (&Pseudonym, &crate::blind::BlindSignature, &schnorr::Signature)> =
        BTreeMap::new();
    for entry in revealed {
        let (Author::Party(id), SanityPayload::PseudonymReveal { run: r, pseudonym, signature, ownership }) =
            (&entry.author, &entry.payload)
        else {
            continue;
        };
        if *r == run.run {
            first.entry(id).or_insert((pseudonym, signature, ownership));
        }
    }
    if let Some((missing, _)) = run.roster.iter().find(|(id, _)| !first.contains_key(id)) {
        return Err(Verdict::BanParty { identity: missing.clone(), cause: BanCause::RefusedReveal });
    }

    let pool_urls: BTreeSet<OnionUrl> = run.pool.iter().map(|r| r.pseudonym.onion_url).collect();
    let mut matched = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for (id, _) in &run.roster {
        let (pseudonym, signature, ownership) = first[id];
        let owns = pseudonym.is_well_formed(params)
            && schnorr::verify(
                params,
                &pseudonym.verification_key,
                &ownership_message(params, run.run, id, pseudonym),
                ownership,
            );
        if !owns || !verify_signature(params, coordinator_key, &pseudonym.canonical(params), signature) {
            return Err(Verdict::BanParty { identity: id.clone(), cause: BanCause::InvalidSignature });
        }
        let url = pseudonym.onion_url;
        if run.previously_deprecated.contains(&url) && !pool_urls.contains(&url) {
            return Err(Verdict::BanParty { identity: id.clone(), cause: BanCause::StaleReveal });
        }
        if !seen.insert(url) {
            return Err(Verdict::BanParty { identity: id.clone(), cause: BanCause::DuplicateReveal });
        }
        matched.insert(id.clone(), *pseudonym);
    }

    for record in &run.pool {
        if !verify_signature(params, coordinator_key, &record.pseudonym.canonical(params), &record.signature) {
            return Err(Verdict::CoordinatorMalicious { cause: MaliciousCause::BoardInconsistent });
        }
        if !seen.contains(&record.pseudonym.onion_url) {
            return Err(Verdict::CoordinatorMalicious { cause: MaliciousCause::OrphanPseudonym });
        }
    }
    Ok(matched)
}

/// Full three-case analysis. `opened` holds each party's decrypted bit and
/// is only consulted when the reveals do not settle the verdict.
pub fn diagnose_failure(
    params: &GroupParams,
    coordinator_key: &GroupElement,
    run: &SanityRun,
    revealed: &[SanityBoardEntry],
    opened: &BTreeMap<PartyId, u64>,
) -> Verdict {
    let matched = match matched_reveals(params, coordinator_key, run, revealed) {
        Ok(m) => m,
        Err(verdict) => return verdict,
    };
    let pool_urls: BTreeSet<OnionUrl> = run.pool.iter().map(|r| r.pseudonym.onion_url).collect();
    for (id, _) in &run.roster {
        let in_pool = pool_urls.contains(&matched[id].onion_url);
        if opened.get(id) != Some(&u64::from(in_pool)) {
            return Verdict::BanParty { identity: id.clone(), cause: BanCause::LiedInCheck };
        }
    }
    Verdict::CoordinatorMalicious { cause: MaliciousCause::BoardInconsistent }
}

/// Everything a check produced.
#[derive(Clone, Debug)]
pub struct SanityReport {
    pub verdict: Verdict,
    /// Decrypted count, absent when a round message was malformed.
    pub count: Option<u64>,
    pub board_count: u64,
    pub reveals: Vec<SanityBoardEntry>,
    pub opened: Option<BTreeMap<PartyId, u64>>,
}

impl SanityReport {
    /// Pseudonyms that became linkable to an identity during this check.
    pub fn revealed_pseudonyms(&self) -> Vec<(PartyId, Pseudonym)> {
        self.reveals
            .iter()
            .filter_map(|e| match (&e.author, &e.payload) {
                (Author::Party(id), SanityPayload::PseudonymReveal { pseudonym, .. }) => Some((id.clone(), *pseudonym)),
                _ => None,
            })
            .collect()
    }
}

/// Runs a whole check: count, and on mismatch the full diagnosis.
///
/// After a malformed round message the verdict is fixed without analysis,
/// but reveals are still collected so the pool can be dissolved the same
/// way as after any other failure.
#[allow(clippy::too_many_arguments)]
pub fn conduct(
    params: &GroupParams,
    coordinator_key: &GroupElement,
    participants: &mut [&mut dyn SanityParticipant],
    roster: &BTreeMap<PartyId, GroupElement>,
    pool: &[PoolRecord],
    previously_deprecated: BTreeSet<OnionUrl>,
    run: u64,
    sboard: &mut SanityBoard,
) -> Result<SanityReport, SanityError> {
    let board_count = pool.len() as u64;
    let checked = run_check(params, participants, roster, pool, board_count, previously_deprecated, run, sboard)?;
    let sanity_run = match checked {
        CheckResult::Misbehaved { identity, cause } => {
            let reveals = collect_reveals(params, participants, roster, run, sboard)?;
            return Ok(SanityReport {
                verdict: Verdict::BanParty { identity, cause },
                count: None,
                board_count,
                reveals,
                opened: None,
            });
        }
        CheckResult::Counted(r) => r,
    };
    if sanity_run.count == board_count {
        return Ok(SanityReport {
            verdict: Verdict::Success,
            count: Some(sanity_run.count),
            board_count,
            reveals: Vec::new(),
            opened: None,
        });
    }
    let reveals = collect_reveals(params, participants, roster, run, sboard)?;
    if let Some(verdict) = diagnose_reveals(params, coordinator_key, &sanity_run, &reveals) {
        return Ok(SanityReport { verdict, count: Some(sanity_run.count), board_count, reveals, opened: None });
    }
    let opened = open_inputs(params, participants, &sanity_run, sboard)?;
    let verdict = diagnose_failure(params, coordinator_key, &sanity_run, &reveals, &opened);
    Ok(SanityReport { verdict, count: Some(sanity_run.count), board_count, reveals, opened: Some(opened) })
}
