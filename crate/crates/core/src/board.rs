//! The coordinator's hash-chained bulletin board, the auditor that replays
//! the four audit checks over it, and the party-writable sanity board.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::blind::{verify_signature, BlindSignature};
use crate::codec::{DecodeError, Reader, Writer};
use crate::crypto::schnorr::{self, Signature, SigningKey};
use crate::crypto::{tagged_digest, Digest32, GroupElement, GroupParams};
use crate::identity::{verify_token, AuthToken, PartyId};
use crate::net::{read_pseudonym, OnionUrl, Pseudonym, Router};
use crate::threshold::{BitProof, Ciphertext, PartialDecryption, ShareAnnouncement};

/// Root of every chain.
pub fn genesis_hash() -> Digest32 {
    tagged_digest(b"anonpool/board/genesis", &[])
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BoardError {
    #[error("writer is not the board operator")]
    Unauthorized,
    #[error("author {0} is not a registered party")]
    UnknownAuthor(String),
    #[error("author signature does not verify")]
    BadAuthorSignature,
    #[error("malformed dump line {line}: {reason}")]
    BadDump { line: usize, reason: String },
    #[error(transparent)]
    Decode(#[from] DecodeError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EntryKind {
    RegisterParty,
    PoolAdd,
    Deprecate,
    Ban,
    PoolDrain,
}

impl EntryKind {
    pub fn code(self) -> u8 {
        match self {
            EntryKind::RegisterParty => 1,
            EntryKind::PoolAdd => 2,
            EntryKind::Deprecate => 3,
            EntryKind::Ban => 4,
            EntryKind::PoolDrain => 5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            EntryKind::RegisterParty => "RegisterParty",
            EntryKind::PoolAdd => "PoolAdd",
            EntryKind::Deprecate => "Deprecate",
            EntryKind::Ban => "Ban",
            EntryKind::PoolDrain => "PoolDrain",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [Self::RegisterParty, Self::PoolAdd, Self::Deprecate, Self::Ban, Self::PoolDrain]
            .into_iter()
            .find(|k| k.name() == name)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegisteredRecord {
    pub identity: PartyId,
    pub token: AuthToken,
    pub public_key: GroupElement,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PoolRecord {
    pub pseudonym: Pseudonym,
    pub signature: BlindSignature,
}

/// Decoded form of an entry payload.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum EntryBody {
    RegisterParty(RegisteredRecord),
    PoolAdd(PoolRecord),
    Deprecate(Pseudonym),
    Ban(PartyId),
    PoolDrain(Vec<OnionUrl>),
}

impl EntryBody {
    pub fn kind(&self) -> EntryKind {
        match self {
            EntryBody::RegisterParty(_) => EntryKind::RegisterParty,
            EntryBody::PoolAdd(_) => EntryKind::PoolAdd,
            EntryBody::Deprecate(_) => EntryKind::Deprecate,
            EntryBody::Ban(_) => EntryKind::Ban,
            EntryBody::PoolDrain(_) => EntryKind::PoolDrain,
        }
    }

    pub fn encode(&self, params: &GroupParams) -> Vec<u8> {
        let mut w = Writer::new(params);
        match self {
            EntryBody::RegisterParty(r) => {
                w.text(r.identity.as_str()).bytes(&r.token.to_bytes(params)).element(&r.public_key);
            }
            EntryBody::PoolAdd(r) => {
                w.bytes(&r.pseudonym.canonical(params)).bytes(&r.signature.to_bytes(params));
            }
            EntryBody::Deprecate(p) => {
                w.bytes(&p.canonical(params));
            }
            EntryBody::Ban(id) => {
                w.text(id.as_str());
            }
            EntryBody::PoolDrain(urls) => {
                w.u64(urls.len() as u64);
                for url in urls {
                    w.bytes(&url.0);
                }
            }
        }
        w.finish()
    }

    pub fn decode(params: &GroupParams, kind: EntryKind, payload: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(params, payload);
        let body = match kind {
            EntryKind::RegisterParty => {
                let identity = PartyId::new(r.text()?);
                let token = AuthToken::from_bytes(params, r.bytes()?)?;
                let public_key = r.element()?;
                EntryBody::RegisterParty(RegisteredRecord { identity, token, public_key })
            }
            EntryKind::PoolAdd => {
                let pseudonym = read_pseudonym(&mut r)?;
                let signature = BlindSignature::from_bytes(params, r.bytes()?).map_err(|_| DecodeError::BadLength)?;
                EntryBody::PoolAdd(PoolRecord { pseudonym, signature })
            }
            EntryKind::Deprecate => EntryBody::Deprecate(read_pseudonym(&mut r)?),
            EntryKind::Ban => EntryBody::Ban(PartyId::new(r.text()?)),
            EntryKind::PoolDrain => {
                let n = r.u64()?;
                let urls = (0..n).map(|_| r.array32().map(OnionUrl)).collect::<Result<_, _>>()?;
                EntryBody::PoolDrain(urls)
            }
        };
        r.finish()?;
        Ok(body)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoardEntry {
    pub seq: u64,
    pub prev_hash: Digest32,
    pub kind: EntryKind,
    pub payload: Vec<u8>,
    pub entry_hash: Digest32,
}

pub fn entry_hash(prev_hash: &Digest32, kind: EntryKind, payload: &[u8]) -> Digest32 {
    tagged_digest(b"anonpool/board/entry", &[prev_hash, &[kind.code()], payload])
}

impl BoardEntry {
    pub fn body(&self, params: &GroupParams) -> Result<EntryBody, DecodeError> {
        EntryBody::decode(params, self.kind, &self.payload)
    }

    pub fn hash_is_correct(&self) -> bool {
        entry_hash(&self.prev_hash, self.kind, &self.payload) == self.entry_hash
    }

    /// `seq:kind:payload_hex:entry_hash_hex`
    pub fn dump_line(&self) -> String {
        format!("{}:{}:{}:{}", self.seq, self.kind.name(), hex::encode(&self.payload), hex::encode(self.entry_hash))
    }
}

/// Write capability for a board. Only the holder can append.
pub struct WriteCredential {
    secret: [u8; 32],
}

impl WriteCredential {
    /// A credential that was not issued by any board.
    pub fn forged(secret: [u8; 32]) -> Self {
        WriteCredential { secret }
    }
}

#[derive(Clone)]
pub struct BulletinBoard {
    params: GroupParams,
    credential_digest: Digest32,
    entries: Vec<BoardEntry>,
}

impl fmt::Debug for BulletinBoard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BulletinBoard").field("entries", &self.entries.len()).finish()
    }
}

impl BulletinBoard {
    /// New empty board and the only credential that can write to it.
    pub fn new(params: GroupParams, credential_seed: [u8; 32]) -> (Self, WriteCredential) {
        let credential = WriteCredential { secret: credential_seed };
        let board = BulletinBoard {
            params,
            credential_digest: tagged_digest(b"anonpool/board/credential", &[&credential_seed]),
            entries: Vec::new(),
        };
        (board, credential)
    }

    pub fn params(&self) -> &GroupParams {
        &self.params
    }

    pub fn head(&self) -> Digest32 {
        self.entries.last().map_or_else(genesis_hash, |e| e.entry_hash)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[BoardEntry] {
        &self.entries
    }

    /// Entries with `seq >= from`.
    pub fn entries_since(&self, from: u64) -> &[BoardEntry] {
        let start = (from as usize).min(self.entries.len());
        &self.entries[start..]
    }

    pub fn snapshot(&self) -> Vec<BoardEntry> {
        self.entries.clone()
    }

    pub fn append(&mut self, body: &EntryBody, credential: &WriteCredential) -> Result<BoardEntry, BoardError> {
        if tagged_digest(b"anonpool/board/credential", &[&credential.secret]) != self.credential_digest {
            return Err(BoardError::Unauthorized);
        }
        let prev_hash = self.head();
        let kind = body.kind();
        let payload = body.encode(&self.params);
        let entry = BoardEntry {
            seq: self.entries.len() as u64,
            prev_hash,
            kind,
            entry_hash: entry_hash(&prev_hash, kind, &payload),
            payload,
        };
        self.entries.push(entry.clone());
        Ok(entry)
    }

    /// PoolAdds since the last PoolDrain.
    pub fn pool_size(&self) -> usize {
        self.current_pool().len()
    }

    pub fn current_pool(&self) -> Vec<PoolRecord> {
        let mut pool = Vec::new();
        for entry in &self.entries {
            match entry.kind {
                EntryKind::PoolAdd => {
                    if let Ok(EntryBody::PoolAdd(r)) = entry.body(&self.params) {
                        pool.push(r);
                    }
                }
                EntryKind::PoolDrain => pool.clear(),
                _ => {}
            }
        }
        pool
    }

    pub fn is_deprecated(&self, url: &OnionUrl) -> bool {
        self.entries.iter().any(|e| {
            e.kind == EntryKind::Deprecate && matches!(e.body(&self.params), Ok(EntryBody::Deprecate(p)) if p.onion_url == *url)
        })
    }

    /// Active (registered, not banned) parties and their long-term keys.
    pub fn active_parties(&self) -> BTreeMap<PartyId, GroupElement> {
        let mut active = BTreeMap::new();
        for entry in &self.entries {
            match entry.body(&self.params) {
                Ok(EntryBody::RegisterParty(r)) => {
                    active.insert(r.identity, r.public_key);
                }
                Ok(EntryBody::Ban(id)) => {
                    active.remove(&id);
                }
                _ => {}
            }
        }
        active
    }

    /// Newline-delimited dump, one entry per line.
    pub fn dump(&self) -> String {
        self.entries.iter().map(|e| e.dump_line() + "\n").collect()
    }
}

/// True iff `earlier` is a hash-verified prefix of `later`.
pub fn is_prefix(earlier: &[BoardEntry], later: &[BoardEntry]) -> bool {
    if earlier.len() > later.len() {
        return false;
    }
    let mut prev = genesis_hash();
    for (i, entry) in later.iter().enumerate() {
        if entry.prev_hash != prev || !entry.hash_is_correct() || entry.seq != i as u64 {
            return false;
        }
        if i < earlier.len() && earlier[i] != *entry {
            return false;
        }
        prev = entry.entry_hash;
    }
    true
}

// --- auditing ---------------------------------------------------------------

/// The audit rules. Numbered ones are the four checks every registered
/// party runs on each update.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AuditCheck {
    /// Hash chain or sequence broken.
    Chain,
    /// (1) newly registered party's token invalid.
    Token,
    /// (2) pool pseudonym invalid, unreachable, or already deprecated.
    PoolPseudonym,
    /// (3) drained pool pseudonyms not all deprecated.
    Deprecation,
    /// (4) a party detected as malicious was not removed.
    Ban,
}

impl AuditCheck {
    pub fn id(self) -> Option<u8> {
        match self {
            AuditCheck::Chain => None,
            AuditCheck::Token => Some(1),
            AuditCheck::PoolPseudonym => Some(2),
            AuditCheck::Deprecation => Some(3),
            AuditCheck::Ban => Some(4),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub check: AuditCheck,
    pub seq: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AuditVerdict {
    Ok,
    Violation(Violation),
}

impl AuditVerdict {
    pub fn is_ok(&self) -> bool {
        matches!(self, AuditVerdict::Ok)
    }
}

/// Public context every auditor needs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditContext {
    pub params: GroupParams,
    pub coordinator_key: GroupElement,
    pub issuer_key: GroupElement,
}

/// Lets an auditor ask whether a pool pseudonym is reachable.
pub trait ReachabilityProbe {
    fn is_reachable(&mut self, pseudonym: &Pseudonym) -> bool;
}

/// Offline auditing: reachability cannot be observed and is not checked.
pub struct SkipReachability;

impl ReachabilityProbe for SkipReachability {
    fn is_reachable(&mut self, _: &Pseudonym) -> bool {
        true
    }
}

/// Probes through the simulated network with fresh nonces.
pub struct RouterProbe<'a> {
    pub router: &'a mut Router,
    pub nonce_prefix: Vec<u8>,
    pub counter: u64,
}

impl ReachabilityProbe for RouterProbe<'_> {
    fn is_reachable(&mut self, pseudonym: &Pseudonym) -> bool {
        let mut nonce = self.nonce_prefix.clone();
        nonce.extend(self.counter.to_be_bytes());
        self.counter += 1;
        self.router.reachability_check(pseudonym, &nonce)
    }
}

/// Incremental auditor state: everything learned from the entries seen so far.
#[derive(Clone, Debug)]
pub struct Auditor {
    ctx: AuditContext,
    head: Digest32,
    next_seq: u64,
    active: BTreeMap<PartyId, GroupElement>,
    banned: BTreeSet<PartyId>,
    deprecated: BTreeSet<OnionUrl>,
    pool: Vec<OnionUrl>,
    pool_history: BTreeSet<OnionUrl>,
    pending_bans: BTreeSet<PartyId>,
    violation: Option<Violation>,
}

impl Auditor {
    pub fn new(ctx: AuditContext) -> Self {
        Auditor {
            ctx,
            head: genesis_hash(),
            next_seq: 0,
            active: BTreeMap::new(),
            banned: BTreeSet::new(),
            deprecated: BTreeSet::new(),
            pool: Vec::new(),
            pool_history: BTreeSet::new(),
            pending_bans: BTreeSet::new(),
            violation: None,
        }
    }

    pub fn context(&self) -> &AuditContext {
        &self.ctx
    }

    /// Sequence number of the next entry this auditor expects.
    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    pub fn active_parties(&self) -> &BTreeMap<PartyId, GroupElement> {
        &self.active
    }

    pub fn pool(&self) -> &[OnionUrl] {
        &self.pool
    }

    pub fn is_deprecated(&self, url: &OnionUrl) -> bool {
        self.deprecated.contains(url)
    }

    pub fn violation(&self) -> Option<Violation> {
        self.violation
    }

    /// Records that `identity` was found malicious; the coordinator's next
    /// entry must be its Ban.
    pub fn expect_ban(&mut self, identity: PartyId) {
        self.pending_bans.insert(identity);
    }

    pub fn pending_bans(&self) -> &BTreeSet<PartyId> {
        &self.pending_bans
    }

    /// Fails check (4) if a ban is still owed when the coordinator's turn
    /// is over.
    pub fn close_turn(&mut self) -> AuditVerdict {
        if let Some(v) = self.violation {
            return AuditVerdict::Violation(v);
        }
        if !self.pending_bans.is_empty() {
            let seq = self.next_seq.saturating_sub(1);
            return self.fail(AuditCheck::Ban, seq);
        }
        AuditVerdict::Ok
    }

    fn fail(&mut self, check: AuditCheck, seq: u64) -> AuditVerdict {
        let v = Violation { check, seq };
        self.violation = Some(v);
        AuditVerdict::Violation(v)
    }

    /// Audits the new entries in order. Once a violation is found the
    /// auditor is stuck on it.
    pub fn audit_update(&mut self, new_entries: &[BoardEntry], probe: &mut dyn ReachabilityProbe) -> AuditVerdict {
        if let Some(v) = self.violation {
            return AuditVerdict::Violation(v);
        }
        for entry in new_entries {
            if let Some(check) = self.check_entry(entry, probe) {
                return self.fail(check, entry.seq);
            }
            self.head = entry.entry_hash;
            self.next_seq += 1;
        }
        AuditVerdict::Ok
    }

    fn check_entry(&mut self, entry: &BoardEntry, probe: &mut dyn ReachabilityProbe) -> Option<AuditCheck> {
        let params = self.ctx.params;
        if entry.seq != self.next_seq || entry.prev_hash != self.head || !entry.hash_is_correct() {
            return Some(AuditCheck::Chain);
        }
        let body = match entry.body(&params) {
            Ok(body) => body,
            Err(_) => return Some(AuditCheck::Chain),
        };
        if !self.pending_bans.is_empty() {
            match &body {
                EntryBody::Ban(id) if self.pending_bans.contains(id) => {}
                _ => return Some(AuditCheck::Ban),
            }
        }
        match body {
            EntryBody::RegisterParty(r) => {
                let known = self.active.contains_key(&r.identity) || self.banned.contains(&r.identity);
                if known || !verify_token(&params, &self.ctx.issuer_key, &r.token, &r.identity) || !params.contains(&r.public_key) {
                    return Some(AuditCheck::Token);
                }
                self.active.insert(r.identity, r.public_key);
            }
            EntryBody::PoolAdd(r) => {
                let url = r.pseudonym.onion_url;
                let valid = r.pseudonym.is_well_formed(&params)
                    && verify_signature(&params, &self.ctx.coordinator_key, &r.pseudonym.canonical(&params), &r.signature);
                if !valid || self.deprecated.contains(&url) || self.pool_history.contains(&url) || !probe.is_reachable(&r.pseudonym) {
                    return Some(AuditCheck::PoolPseudonym);
                }
                self.pool.push(url);
                self.pool_history.insert(url);
            }
            EntryBody::Deprecate(p) => {
                self.deprecated.insert(p.onion_url);
            }
            EntryBody::Ban(id) => {
                // Removing a party nobody found malicious is as much a
                // violation of (4) as failing to remove one that was.
                if !self.pending_bans.remove(&id) || self.active.remove(&id).is_none() {
                    return Some(AuditCheck::Ban);
                }
                self.banned.insert(id);
            }
            EntryBody::PoolDrain(urls) => {
                if urls != self.pool || !urls.iter().all(|u| self.deprecated.contains(u)) {
                    return Some(AuditCheck::Deprecation);
                }
                self.pool.clear();
            }
        }
        None
    }
}

// --- dump files -------------------------------------------------------------

/// One line of a dump file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DumpItem {
    Entry(BoardEntry),
    /// A sanity check named this party; the coordinator's next entry must
    /// be its ban.
    BanDue(PartyId),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoardDump {
    pub context: AuditContext,
    pub items: Vec<DumpItem>,
}

impl BoardDump {
    /// Header lines start with `#`; entries use `seq:kind:payload_hex:entry_hash_hex`.
    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("#params:{}\n", hex::encode(self.context.params.canonical())));
        out.push_str(&format!("#coordinator:{}\n", hex::encode(self.context.params.element_bytes(&self.context.coordinator_key))));
        out.push_str(&format!("#issuer:{}\n", hex::encode(self.context.params.element_bytes(&self.context.issuer_key))));
        for item in &self.items {
            match item {
                DumpItem::Entry(e) => out.push_str(&(e.dump_line() + "\n")),
                DumpItem::BanDue(id) => out.push_str(&format!("#ban-due:{}\n", hex::encode(id.as_str()))),
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, BoardError> {
        let bad = |line: usize, reason: &str| BoardError::BadDump { line, reason: reason.to_string() };
        let mut params = None;
        let mut coordinator = None;
        let mut issuer = None;
        let mut items = Vec::new();
        let mut prev = genesis_hash();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                let (key, value) = meta.split_once(':').ok_or_else(|| bad(line_no, "header without ':'"))?;
                let bytes = hex::decode(value).map_err(|_| bad(line_no, "bad hex"))?;
                match key {
                    "params" => {
                        params = Some(GroupParams::from_canonical(&bytes).map_err(|e| bad(line_no, &e.to_string()))?)
                    }
                    "coordinator" | "issuer" => {
                        let p = params.ok_or_else(|| bad(line_no, "key before params"))?;
                        let e = p.element_from_bytes(&bytes).map_err(|e| bad(line_no, &e.to_string()))?;
                        if key == "coordinator" {
                            coordinator = Some(e);
                        } else {
                            issuer = Some(e);
                        }
                    }
                    "ban-due" => {
                        let id = String::from_utf8(bytes).map_err(|_| bad(line_no, "identity not utf-8"))?;
                        items.push(DumpItem::BanDue(PartyId::new(id)));
                    }
                    _ => return Err(bad(line_no, "unknown header")),
                }
                continue;
            }
            let fields: Vec<&str> = line.split(':').collect();
            let [seq, kind, payload, hash] = fields[..] else {
                return Err(bad(line_no, "expected seq:kind:payload_hex:entry_hash_hex"));
            };
            let seq = seq.parse::<u64>().map_err(|_| bad(line_no, "bad seq"))?;
            let kind = EntryKind::from_name(kind).ok_or_else(|| bad(line_no, "unknown kind"))?;
            let payload = hex::decode(payload).map_err(|_| bad(line_no, "bad payload hex"))?;
            let entry_hash: Digest32 = hex::decode(hash)
                .ok()
                .and_then(|h| h.try_into().ok())
                .ok_or_else(|| bad(line_no, "bad entry hash"))?;
            items.push(DumpItem::Entry(BoardEntry { seq, prev_hash: prev, kind, payload, entry_hash }));
            prev = entry_hash;
        }
        let params = params.ok_or_else(|| bad(0, "missing #params header"))?;
        let coordinator_key = coordinator.ok_or_else(|| bad(0, "missing #coordinator header"))?;
        let issuer_key = issuer.ok_or_else(|| bad(0, "missing #issuer header"))?;
        Ok(BoardDump { context: AuditContext { params, coordinator_key, issuer_key }, items })
    }

    /// Replays every check over the dump. Reachability is not observable
    /// offline and is skipped.
    pub fn replay_audit(&self) -> AuditVerdict {
        let mut auditor = Auditor::new(self.context);
        for item in &self.items {
            let verdict = match item {
                DumpItem::Entry(e) => auditor.audit_update(std::slice::from_ref(e), &mut SkipReachability),
                DumpItem::BanDue(id) => {
                    auditor.expect_ban(id.clone());
                    AuditVerdict::Ok
                }
            };
            if !verdict.is_ok() {
                return verdict;
            }
        }
        auditor.close_turn()
    }
}

// --- sanity board -----------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Author {
    Coordinator,
    Party(PartyId),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SanityPayload {
    KeyShare { run: u64, announcement: ShareAnnouncement },
    Contribution { run: u64, ciphertext: Ciphertext, proof: BitProof },
    /// Partial decryption of the summed contributions.
    DecryptionShare { run: u64, part: PartialDecryption },
    PseudonymReveal { run: u64, pseudonym: Pseudonym, signature: BlindSignature, ownership: Signature },
    /// Partial decryption of one party's own contribution.
    InputReveal { run: u64, input_of: PartyId, part: PartialDecryption },
}

impl SanityPayload {
    pub fn run(&self) -> u64 {
        match self {
            SanityPayload::KeyShare { run, .. }
            | SanityPayload::Contribution { run, .. }
            | SanityPayload::DecryptionShare { run, .. }
            | SanityPayload::PseudonymReveal { run, .. }
            | SanityPayload::InputReveal { run, .. } => *run,
        }
    }
}

/// Message the pseudonym key signs to prove a reveal comes from its holder.
pub fn ownership_message(params: &GroupParams, run: u64, author: &PartyId, pseudonym: &Pseudonym) -> Vec<u8> {
    Writer::with_tag(params, 0x31).u64(run).text(author.as_str()).bytes(&pseudonym.onion_url.0).finish()
}

fn write_part(w: &mut Writer<'_>, part: &PartialDecryption) {
    w.u64(part.owner as u64).element(&part.share).scalar(&part.proof.challenge).scalar(&part.proof.response);
}

impl SanityPayload {
    pub fn encode(&self, params: &GroupParams) -> Vec<u8> {
        match self {
            SanityPayload::KeyShare { run, announcement } => Writer::with_tag(params, 0x30)
                .u64(*run)
                .u64(announcement.owner as u64)
                .element(&announcement.public)
                .bytes(&announcement.proof.to_bytes(params))
                .finish(),
            SanityPayload::Contribution { run, ciphertext, proof } => Writer::with_tag(params, 0x32)
                .u64(*run)
                .bytes(&ciphertext.to_bytes(params))
                .bytes(&proof.to_bytes(params))
                .finish(),
            SanityPayload::DecryptionShare { run, part } => {
                let mut w = Writer::with_tag(params, 0x33);
                w.u64(*run);
                write_part(&mut w, part);
                w.finish()
            }
            SanityPayload::PseudonymReveal { run, pseudonym, signature, ownership } => Writer::with_tag(params, 0x34)
                .u64(*run)
                .bytes(&pseudonym.canonical(params))
                .bytes(&signature.to_bytes(params))
                .bytes(&ownership.to_bytes(params))
                .finish(),
            SanityPayload::InputReveal { run, input_of, part } => {
                let mut w = Writer::with_tag(params, 0x35);
                w.u64(*run).text(input_of.as_str());
                write_part(&mut w, part);
                w.finish()
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SanityBoardEntry {
    pub author: Author,
    pub payload: SanityPayload,
    pub author_signature: Signature,
}

fn sanity_message(params: &GroupParams, author: &Author, payload: &SanityPayload) -> Vec<u8> {
    let name = match author {
        Author::Coordinator => "",
        Author::Party(id) => id.as_str(),
    };
    Writer::with_tag(params, 0x3f).text(name).bytes(&payload.encode(params)).finish()
}

impl SanityBoardEntry {
    /// Signs `payload` with a party's long-term key.
    pub fn sign(params: &GroupParams, author: PartyId, key: &SigningKey, payload: SanityPayload) -> Self {
        let author = Author::Party(author);
        let author_signature = key.sign(params, &sanity_message(params, &author, &payload));
        SanityBoardEntry { author, payload, author_signature }
    }
}

/// Second board: registered parties write, everyone (coordinator included)
/// reads.
#[derive(Clone, Debug)]
pub struct SanityBoard {
    params: GroupParams,
    roster: BTreeMap<PartyId, GroupElement>,
    entries: Vec<SanityBoardEntry>,
}

impl SanityBoard {
    pub fn new(params: GroupParams, roster: BTreeMap<PartyId, GroupElement>) -> Self {
        SanityBoard { params, roster, entries: Vec::new() }
    }

    pub fn set_roster(&mut self, roster: BTreeMap<PartyId, GroupElement>) {
        self.roster = roster;
    }

    pub fn publish(&mut self, entry: SanityBoardEntry) -> Result<(), BoardError> {
        let Author::Party(id) = &entry.author else {
            return Err(BoardError::UnknownAuthor("coordinator".into()));
        };
        let key = self.roster.get(id).ok_or_else(|| BoardError::UnknownAuthor(id.to_string()))?;
        let message = sanity_message(&self.params, &entry.author, &entry.payload);
        if !schnorr::verify(&self.params, key, &message, &entry.author_signature) {
            return Err(BoardError::BadAuthorSignature);
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn entries(&self) -> &[SanityBoardEntry] {
        &self.entries
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blind::{signer_commit, signer_keygen, signer_respond, user_blind, user_unblind, SignerKeyPair};
    use crate::crypto::{setup_group, SeededRng};
    use crate::identity::IdentityProvider;
    use crate::net::{new_pseudonym, KeyHolder};

    struct Fixture {
        params: GroupParams,
        board: BulletinBoard,
        cred: WriteCredential,
        signer: SignerKeyPair,
        idp: IdentityProvider,
        rng: SeededRng,
    }

    impl Fixture {
        fn new() -> Self {
            let mut rng = SeededRng::from_u64(31);
            let params = setup_group(64, &mut rng).unwrap();
            let (board, cred) = BulletinBoard::new(params, [7; 32]);
            let signer = signer_keygen(&params, &mut rng);
            let idp = IdentityProvider::new(params, &mut rng);
            Fixture { params, board, cred, signer, idp, rng }
        }

        fn ctx(&self) -> AuditContext {
            AuditContext { params: self.params, coordinator_key: self.signer.public(), issuer_key: self.idp.public_key() }
        }

        fn signed_pseudonym(&mut self) -> PoolRecord {
            let (pseudonym, _) = new_pseudonym(&self.params, &mut self.rng);
            let session = signer_commit(&self.params, &self.signer, &mut self.rng);
            let msg = pseudonym.canonical(&self.params);
            let user = user_blind(&self.params, &self.signer.public(), &session.commitment(), &msg, &mut self.rng).unwrap();
            let t = signer_respond(&self.signer, session, user.blinded_challenge());
            PoolRecord { pseudonym, signature: user_unblind(&user, t.r1, t.r2).unwrap() }
        }

        fn register(&mut self, name: &str) -> EntryBody {
            let id = PartyId::new(name);
            let token = self.idp.issue_token(&id).unwrap();
            EntryBody::RegisterParty(RegisteredRecord { identity: id, token, public_key: self.params.g() })
        }

        fn append(&mut self, body: EntryBody) -> BoardEntry {
            self.board.append(&body, &self.cred).unwrap()
        }
    }

    #[test]
    fn chaining() {
        let mut f = Fixture::new();
        let reg = f.register("a");
        let e0 = f.append(reg);
        assert_eq!(e0.prev_hash, genesis_hash());
        assert_eq!(e0.seq, 0);
        let reg = f.register("b");
        let e1 = f.append(reg);
        assert_eq!(e1.prev_hash, e0.entry_hash);
        assert_eq!(e1.seq, 1);
        assert!(e1.hash_is_correct());
    }

    #[test]
    fn only_operator_writes() {
        let mut f = Fixture::new();
        let body = EntryBody::Ban(PartyId::new("x"));
        assert_eq!(f.board.append(&body, &WriteCredential::forged([8; 32])), Err(BoardError::Unauthorized));
        assert!(f.board.is_empty());
    }

    #[test]
    fn pool_size_counts_since_drain() {
        let mut f = Fixture::new();
        assert_eq!(f.board.pool_size(), 0);
        let mut urls = vec![];
        for _ in 0..3 {
            let r = f.signed_pseudonym();
            urls.push(r.pseudonym.onion_url);
            f.append(EntryBody::PoolAdd(r));
        }
        assert_eq!(f.board.pool_size(), 3);
        f.append(EntryBody::PoolDrain(urls));
        assert_eq!(f.board.pool_size(), 0);
    }

    #[test]
    fn honest_sequence_audits_ok() {
        let mut f = Fixture::new();
        let mut auditor = Auditor::new(f.ctx());
        let reg = f.register("a");
        f.append(reg);
        let r = f.signed_pseudonym();
        f.append(EntryBody::PoolAdd(r.clone()));
        f.append(EntryBody::Deprecate(r.pseudonym));
        f.append(EntryBody::PoolDrain(vec![r.pseudonym.onion_url]));
        assert_eq!(auditor.audit_update(f.board.entries(), &mut SkipReachability), AuditVerdict::Ok);
        assert!(auditor.pool().is_empty());
    }

    #[test]
    fn invalid_token_is_check_one() {
        let mut f = Fixture::new();
        let mut auditor = Auditor::new(f.ctx());
        let token = f.idp.issue_token(&PartyId::new("a")).unwrap();
        let body = EntryBody::RegisterParty(RegisteredRecord { identity: PartyId::new("b"), token, public_key: f.params.g() });
        let e = f.append(body);
        assert_eq!(
            auditor.audit_update(&[e], &mut SkipReachability),
            AuditVerdict::Violation(Violation { check: AuditCheck::Token, seq: 0 })
        );
    }

    #[test]
    fn deprecated_pool_add_is_check_two() {
        let mut f = Fixture::new();
        let mut auditor = Auditor::new(f.ctx());
        let r = f.signed_pseudonym();
        f.append(EntryBody::PoolAdd(r.clone()));
        f.append(EntryBody::Deprecate(r.pseudonym));
        f.append(EntryBody::PoolDrain(vec![r.pseudonym.onion_url]));
        let e = f.append(EntryBody::PoolAdd(r));
        let v = auditor.audit_update(f.board.entries(), &mut SkipReachability);
        assert_eq!(v, AuditVerdict::Violation(Violation { check: AuditCheck::PoolPseudonym, seq: e.seq }));
    }

    #[test]
    fn unsigned_or_unreachable_pool_add_is_check_two() {
        let mut f = Fixture::new();
        let mut r = f.signed_pseudonym();
        r.signature.r1 = r.signature.r1 + f.params.scalar(1);
        f.append(EntryBody::PoolAdd(r));
        let mut auditor = Auditor::new(f.ctx());
        assert!(matches!(auditor.audit_update(f.board.entries(), &mut SkipReachability), AuditVerdict::Violation(Violation { check: AuditCheck::PoolPseudonym, .. })));

        let mut f = Fixture::new();
        let r = f.signed_pseudonym();
        f.append(EntryBody::PoolAdd(r));
        let mut router = Router::new(f.params, SeededRng::from_u64(1));
        let mut probe = RouterProbe { router: &mut router, nonce_prefix: b"t".to_vec(), counter: 0 };
        let mut auditor = Auditor::new(f.ctx());
        assert!(matches!(auditor.audit_update(f.board.entries(), &mut probe), AuditVerdict::Violation(Violation { check: AuditCheck::PoolPseudonym, .. })));
    }

    #[test]
    fn reachable_pool_add_passes_probe() {
        let mut f = Fixture::new();
        let (pseudonym, secret) = new_pseudonym(&f.params, &mut f.rng);
        let session = signer_commit(&f.params, &f.signer, &mut f.rng);
        let msg = pseudonym.canonical(&f.params);
        let user = user_blind(&f.params, &f.signer.public(), &session.commitment(), &msg, &mut f.rng).unwrap();
        let t = signer_respond(&f.signer, session, user.blinded_challenge());
        let signature = user_unblind(&user, t.r1, t.r2).unwrap();
        f.append(EntryBody::PoolAdd(PoolRecord { pseudonym, signature }));
        let mut router = Router::new(f.params, SeededRng::from_u64(1));
        router.host(pseudonym.onion_url, Box::new(KeyHolder(secret)));
        let mut probe = RouterProbe { router: &mut router, nonce_prefix: b"t".to_vec(), counter: 0 };
        let mut auditor = Auditor::new(f.ctx());
        assert!(auditor.audit_update(f.board.entries(), &mut probe).is_ok());
    }

    #[test]
    fn undeprecated_drain_is_check_three() {
        let mut f = Fixture::new();
        let mut auditor = Auditor::new(f.ctx());
        let r = f.signed_pseudonym();
        f.append(EntryBody::PoolAdd(r.clone()));
        let drain = f.append(EntryBody::PoolDrain(vec![r.pseudonym.onion_url]));
        assert_eq!(
            auditor.audit_update(f.board.entries(), &mut SkipReachability),
            AuditVerdict::Violation(Violation { check: AuditCheck::Deprecation, seq: drain.seq })
        );
    }

    #[test]
    fn missing_ban_is_check_four() {
        let mut f = Fixture::new();
        let mut auditor = Auditor::new(f.ctx());
        let reg = f.register("a");
        f.append(reg);
        assert!(auditor.audit_update(f.board.entries(), &mut SkipReachability).is_ok());
        auditor.expect_ban(PartyId::new("a"));
        assert_eq!(auditor.close_turn(), AuditVerdict::Violation(Violation { check: AuditCheck::Ban, seq: 0 }));

        let mut auditor = Auditor::new(f.ctx());
        auditor.audit_update(f.board.entries(), &mut SkipReachability);
        auditor.expect_ban(PartyId::new("a"));
        let r = f.signed_pseudonym();
        let e = f.append(EntryBody::PoolAdd(r));
        assert_eq!(
            auditor.audit_update(std::slice::from_ref(&e), &mut SkipReachability),
            AuditVerdict::Violation(Violation { check: AuditCheck::Ban, seq: e.seq })
        );
    }

    #[test]
    fn owed_ban_satisfied() {
        let mut f = Fixture::new();
        let mut auditor = Auditor::new(f.ctx());
        let reg = f.register("a");
        f.append(reg);
        auditor.audit_update(f.board.entries(), &mut SkipReachability);
        auditor.expect_ban(PartyId::new("a"));
        let e = f.append(EntryBody::Ban(PartyId::new("a")));
        assert!(auditor.audit_update(&[e], &mut SkipReachability).is_ok());
        assert!(auditor.close_turn().is_ok());
        assert!(auditor.active_parties().is_empty());
        assert!(f.board.active_parties().is_empty());
    }

    #[test]
    fn unwarranted_ban_is_check_four() {
        let mut f = Fixture::new();
        let reg = f.register("a");
        f.append(reg);
        f.append(EntryBody::Ban(PartyId::new("a")));
        let mut auditor = Auditor::new(f.ctx());
        assert!(matches!(auditor.audit_update(f.board.entries(), &mut SkipReachability), AuditVerdict::Violation(Violation { check: AuditCheck::Ban, seq: 1 })));
    }

    #[test]
    fn broken_chain_detected() {
        let mut f = Fixture::new();
        let reg = f.register("a");
        f.append(reg);
        let reg = f.register("b");
        f.append(reg);
        let mut entries = f.board.snapshot();
        entries[1].payload[0] ^= 1;
        let mut auditor = Auditor::new(f.ctx());
        assert_eq!(
            auditor.audit_update(&entries, &mut SkipReachability),
            AuditVerdict::Violation(Violation { check: AuditCheck::Chain, seq: 1 })
        );
    }

    #[test]
    fn snapshots_are_prefixes() {
        let mut f = Fixture::new();
        let reg = f.register("a");
        f.append(reg);
        let early = f.board.snapshot();
        let reg = f.register("b");
        f.append(reg);
        let late = f.board.snapshot();
        assert!(is_prefix(&early, &late));
        assert!(!is_prefix(&late, &early));
        let mut forked = late.clone();
        forked[0].payload.push(0);
        assert!(!is_prefix(&early, &forked));
    }

    #[test]
    fn dump_round_trip_and_replay() {
        let mut f = Fixture::new();
        let reg = f.register("a");
        f.append(reg);
        let r = f.signed_pseudonym();
        f.append(EntryBody::PoolAdd(r.clone()));
        f.append(EntryBody::Deprecate(r.pseudonym));
        let mut items: Vec<_> = f.board.entries().iter().cloned().map(DumpItem::Entry).collect();
        let dump = BoardDump { context: f.ctx(), items: items.clone() };
        let text = dump.render();
        for line in text.lines().filter(|l| !l.starts_with('#')) {
            assert_eq!(line.split(':').count(), 4);
        }
        let parsed = BoardDump::parse(&text).unwrap();
        assert_eq!(parsed, dump);
        assert!(parsed.replay_audit().is_ok());

        items.push(DumpItem::BanDue(PartyId::new("a")));
        let owed = BoardDump { context: f.ctx(), items };
        assert!(matches!(BoardDump::parse(&owed.render()).unwrap().replay_audit(), AuditVerdict::Violation(Violation { check: AuditCheck::Ban, .. })));
    }

    #[test]
    fn dump_parse_errors() {
        assert!(matches!(BoardDump::parse("0:Nope:00:00\n"), Err(BoardError::BadDump { line: 1, .. })));
        assert!(matches!(BoardDump::parse(""), Err(BoardError::BadDump { .. })));
    }

    fn payload_for_stranger(params: &GroupParams, alice: &PartyId) -> SanityPayload {
        let part = PartialDecryption {
            owner: 1,
            share: params.g(),
            proof: crate::threshold::EqualityProof { challenge: params.scalar(1), response: params.scalar(2) },
        };
        SanityPayload::InputReveal { run: 0, input_of: alice.clone(), part }
    }

    #[test]
    fn sanity_board_authorship() {
        let mut f = Fixture::new();
        let key = SigningKey::generate(&f.params, &mut f.rng);
        let alice = PartyId::new("alice");
        let mut roster = BTreeMap::new();
        roster.insert(alice.clone(), key.public());
        let mut sboard = SanityBoard::new(f.params, roster);
        let payload = SanityPayload::KeyShare { run: 0, announcement: crate::threshold::dkg_contribute(&f.params, 1, &mut f.rng).announce(&f.params, b"ctx") };
        let entry = SanityBoardEntry::sign(&f.params, alice.clone(), &key, payload.clone());
        sboard.publish(entry.clone()).unwrap();
        assert_eq!(sboard.entries().len(), 1);

        let as_coordinator = SanityBoardEntry { author: Author::Coordinator, ..entry.clone() };
        assert!(matches!(sboard.publish(as_coordinator), Err(BoardError::UnknownAuthor(_))));

        let other = SigningKey::generate(&f.params, &mut f.rng);
        let forged = SanityBoardEntry::sign(&f.params, alice.clone(), &other, payload);
        assert_eq!(sboard.publish(forged), Err(BoardError::BadAuthorSignature));

        let stranger = SanityBoardEntry::sign(&f.params, PartyId::new("mallory"), &other, payload_for_stranger(&f.params, &alice));
        assert!(matches!(sboard.publish(stranger), Err(BoardError::UnknownAuthor(_))));
    }
}
