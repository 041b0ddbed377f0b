//! Stand-in payload computation: a secure sum by additive masking.
//!
//! Each member splits its input into one share per member, keeps its own
//! share and sends the others to the members' onion addresses. Every member
//! then publishes the sum of the shares it holds, and everyone adds those
//! partial sums. Secure against semi-honest members only; a protocol secure
//! against a dishonest majority would replace this module.

use anonpool_core::codec::{Reader, Writer};
use anonpool_core::crypto::{GroupParams, SeededRng};
use anonpool_core::net::{Address, AnonEnvelope, OnionUrl, Router};
use rand::Rng;
use thiserror::Error;

pub const SHARE_TAG: u8 = 0x20;
pub const PARTIAL_SUM_TAG: u8 = 0x21;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SumError {
    #[error("a secure sum needs at least 2 members, got {0}")]
    TooFewMembers(usize),
    #[error("modulus must be at least 2")]
    BadModulus,
    #[error("input {input} is not below the modulus {modulus}")]
    InputOutOfRange { input: u64, modulus: u64 },
    #[error("{at} expected {expected} messages in the {phase} phase, got {got}")]
    Silent { at: OnionUrl, phase: &'static str, expected: usize, got: usize },
}

/// Splits `input` into `masks.len() + 1` shares that sum to it mod
/// `modulus`: the masks themselves, then the balancing share.
pub fn split_input(input: u64, modulus: u64, masks: &[u64]) -> Vec<u64> {
    let mut shares = masks.to_vec();
    let masked = masks.iter().fold(0u128, |acc, m| (acc + u128::from(*m)) % u128::from(modulus));
    let last = (u128::from(input) + u128::from(modulus) - masked) % u128::from(modulus);
    shares.push(last as u64);
    shares
}

/// One pool member taking part in the sum.
pub struct SumMember {
    pub url: OnionUrl,
    /// `None` for a member that stays silent.
    pub input: Option<u64>,
    pub rng: SeededRng,
}

fn add_mod(a: u64, b: u64, modulus: u64) -> u64 {
    ((u128::from(a) + u128::from(b)) % u128::from(modulus)) as u64
}

fn read_value(params: &GroupParams, tag: u8, payload: &[u8]) -> Option<u64> {
    let mut r = Reader::new(params, payload);
    if r.tag().ok()? != tag {
        return None;
    }
    let v = r.u64().ok()?;
    r.finish().ok()?;
    Some(v)
}

fn collect(
    params: &GroupParams,
    router: &mut Router,
    url: OnionUrl,
    tag: u8,
    phase: &'static str,
    expected: usize,
) -> Result<Vec<u64>, SumError> {
    let values: Vec<u64> =
        router.receive(&Address::Onion(url)).iter().filter_map(|d| read_value(params, tag, &d.payload)).collect();
    if values.len() != expected {
        return Err(SumError::Silent { at: url, phase, expected, got: values.len() });
    }
    Ok(values)
}

/// Runs the sum among `members` over the router, addressing each member by
/// its onion URL. Returns every member's output, in member order.
pub fn compute_f_secure_sum(
    params: &GroupParams,
    router: &mut Router,
    members: &mut [SumMember],
    modulus: u64,
) -> Result<Vec<u64>, SumError> {
    let n = members.len();
    if n < 2 {
        return Err(SumError::TooFewMembers(n));
    }
    if modulus < 2 {
        return Err(SumError::BadModulus);
    }
    if let Some(input) = members.iter().filter_map(|m| m.input).find(|i| *i >= modulus) {
        return Err(SumError::InputOutOfRange { input, modulus });
    }
    let urls: Vec<OnionUrl> = members.iter().map(|m| m.url).collect();

    let mut own_share = vec![0u64; n];
    for (i, member) in members.iter_mut().enumerate() {
        let Some(input) = member.input else { continue };
        let masks: Vec<u64> = (0..n - 1).map(|_| member.rng.gen_range(0..modulus)).collect();
        let shares = split_input(input, modulus, &masks);
        // Share j goes to member j; share i stays here.
        for (j, share) in shares.into_iter().enumerate() {
            if j == i {
                own_share[i] = share;
                continue;
            }
            let payload = Writer::with_tag(params, SHARE_TAG).u64(share).finish();
            router.anon_send(AnonEnvelope { destination: Address::Onion(urls[j]), payload, reply_channel: None });
        }
    }
    router.flush();

    let mut partials = Vec::with_capacity(n);
    for (i, url) in urls.iter().enumerate() {
        let received = collect(params, router, *url, SHARE_TAG, "share", n - 1)?;
        partials.push(received.into_iter().fold(own_share[i], |acc, s| add_mod(acc, s, modulus)));
    }

    for (i, member) in members.iter().enumerate() {
        if member.input.is_none() {
            continue;
        }
        for (j, url) in urls.iter().enumerate() {
            if j != i {
                let payload = Writer::with_tag(params, PARTIAL_SUM_TAG).u64(partials[i]).finish();
                router.anon_send(AnonEnvelope { destination: Address::Onion(*url), payload, reply_channel: None });
            }
        }
    }
    router.flush();

    let mut outputs = Vec::with_capacity(n);
    for (i, url) in urls.iter().enumerate() {
        let received = collect(params, router, *url, PARTIAL_SUM_TAG, "partial sum", n - 1)?;
        outputs.push(received.into_iter().fold(partials[i], |acc, s| add_mod(acc, s, modulus)));
    }
    Ok(outputs)
}
