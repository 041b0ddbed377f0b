//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use anonpool_core::blind::{
    explain_blinding, signer_commit, signer_keygen, signer_respond, user_blind, user_unblind, verify_signature,
};
use anonpool_core::board::{AuditVerdict, BoardDump, EntryBody};
use anonpool_core::crypto::{setup_group, GroupElement, Scalar, SeededRng, DEFAULT_BIT_LENGTH};
use anonpool_core::party::PartyState;
use anonpool_core::sanity::{BanCause, MaliciousCause, Verdict};
use anonpool_core::threshold::{
    aggregate_public_key, combine_decryptions, dkg_contribute, encrypt_bit, partial_decrypt, sum_ciphertexts,
    verify_bit_proof, BitProof,
};
use anonpool_core::wire::RejectReason;
use anonpool_harness::adversary::{attack_scenario, run_attack, AttackId, Detection};
use anonpool_harness::props::{anonymity_probability, unlinkability_probability};
use anonpool_harness::scenario::{honest_scenario, run_scenario, transcript_permutation_test};
use anonpool_harness::sim::{board_bodies, Holder, Simulation};
use num_rational::Ratio;
use rand::Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(limit: Duration, started: Instant) -> Result<Duration, String> {
    let took = started.elapsed();
    ensure(took < limit, || format!("took {took:.2?}, limit {limit:?}"))?;
    Ok(took)
}

/// Square-and-multiply mod p on plain integers, kept apart from the group
/// code it checks.
fn modpow(base: u64, mut exp: u64, p: u64) -> u64 {
    let (mut acc, mut b) = (1u128, u128::from(base) % u128::from(p));
    while exp > 0 {
        if exp & 1 == 1 {
            acc = acc * b % u128::from(p);
        }
        b = b * b % u128::from(p);
        exp >>= 1;
    }
    acc as u64
}

fn mulmod(a: u64, b: u64, p: u64) -> u64 {
    (u128::from(a) * u128::from(b) % u128::from(p)) as u64
}

fn blind_sign_completeness() -> Outcome {
    let started = Instant::now();
    let mut rng = SeededRng::from_u64(1);
    let params = setup_group(DEFAULT_BIT_LENGTH, &mut rng).map_err(|e| e.to_string())?;
    ensure(params.bit_length() == 64, || format!("group is {} bits", params.bit_length()))?;
    let key = signer_keygen(&params, &mut rng);
    for i in 0..1000 {
        let message: [u8; 32] = rng.gen();
        let session = signer_commit(&params, &key, &mut rng);
        let user = user_blind(&params, &key.public(), &session.commitment(), &message, &mut rng).map_err(|e| e.to_string())?;
        let t = signer_respond(&key, session, user.blinded_challenge());
        let sig = user_unblind(&user, t.r1, t.r2).map_err(|e| format!("run {i}: {e}"))?;
        ensure(verify_signature(&params, &key.public(), &message, &sig), || format!("run {i} does not verify"))?;
    }
    let took = within(Duration::from_secs(10), started)?;
    Ok(format!("1000/1000 verify in {took:.2?}"))
}

fn blindness_cross_pairing() -> Outcome {
    let mut rng = SeededRng::from_u64(2);
    let params = setup_group(DEFAULT_BIT_LENGTH, &mut rng).map_err(|e| e.to_string())?;
    let key = signer_keygen(&params, &mut rng);
    let v = key.public();
    let mut transcripts = Vec::new();
    let mut signatures = Vec::new();
    for i in 0..3u8 {
        let message = [b'm', i];
        let session = signer_commit(&params, &key, &mut rng);
        let user = user_blind(&params, &v, &session.commitment(), &message, &mut rng).map_err(|e| e.to_string())?;
        let t = signer_respond(&key, session, user.blinded_challenge());
        let sig = user_unblind(&user, t.r1, t.r2).map_err(|e| e.to_string())?;
        transcripts.push(t);
        signatures.push((message, sig, user.blinding_factors()));
    }
    let p = params.p();
    let scalar = |s: &Scalar| s.value();
    let element = |e: &GroupElement| e.value();
    for (i, t) in transcripts.iter().enumerate() {
        for (j, (message, sig, actual)) in signatures.iter().enumerate() {
            let (b1, b2, b3) = explain_blinding(&params, &v, t, message, sig)
                .map_err(|e| format!("transcript {i} / signature {j}: {e}"))?;
            if i == j {
                ensure((b1, b2, b3) == *actual, || format!("pair {i}: recovered factors differ from the real ones"))?;
            }
            // a' = a · g^β1 · h^β2 · v^β3, and the verifier hashes
            // g^r1 · h^r2 · v^c; both sides in plain integers.
            let g = element(&params.g());
            let h = element(&params.h());
            let vv = element(&v);
            let reconstructed = [modpow(g, scalar(&b1), p), modpow(h, scalar(&b2), p), modpow(vv, scalar(&b3), p)]
                .into_iter()
                .fold(element(&t.a), |acc, x| mulmod(acc, x, p));
            let hashed = [modpow(g, scalar(&sig.r1), p), modpow(h, scalar(&sig.r2), p), modpow(vv, scalar(&sig.challenge), p)]
                .into_iter()
                .fold(1, |acc, x| mulmod(acc, x, p));
            ensure(reconstructed == hashed, || format!("pair ({i},{j}): reconstructed commitment differs"))?;
            ensure(verify_signature(&params, &v, message, sig), || format!("signature {j} does not hash to its challenge"))?;
        }
    }
    Ok("9/9 transcript/signature pairs explained".into())
}

fn homomorphic_tally() -> Outcome {
    let started = Instant::now();
    let mut rng = SeededRng::from_u64(3);
    let params = setup_group(DEFAULT_BIT_LENGTH, &mut rng).map_err(|e| e.to_string())?;
    let mut cases = 0;
    for n in 1..=6u32 {
        let shares: Vec<_> = (1..=n).map(|i| dkg_contribute(&params, i, &mut rng)).collect();
        let publics: Vec<_> = shares.iter().map(|s| (s.owner(), s.public())).collect();
        let joint = aggregate_public_key(&params, &publics).map_err(|e| e.to_string())?;
        for mask in 0u32..(1 << n) {
            let bits: Vec<u64> = (0..n).map(|i| u64::from((mask >> i) & 1)).collect();
            let mut cts = Vec::new();
            for &b in &bits {
                cts.push(encrypt_bit(&params, &joint, b, &mut rng).map_err(|e| e.to_string())?.0);
            }
            let sum = sum_ciphertexts(&params, &cts);
            let parts: Vec<_> = shares.iter().map(|s| partial_decrypt(&params, s, &sum, &mut rng)).collect();
            let count = combine_decryptions(&params, &sum, &parts, &joint, u64::from(n)).map_err(|e| e.to_string())?;
            ensure(count == u64::from(mask.count_ones()), || format!("n={n} mask={mask:b}: decrypted {count}"))?;
            cases += 1;
        }
    }
    ensure(cases == 126, || format!("{cases} cases"))?;
    let took = within(Duration::from_secs(30), started)?;
    Ok(format!("126/126 bit vectors decrypt to their weight in {took:.2?}"))
}

fn bit_proof_soundness() -> Outcome {
    let mut rng = SeededRng::from_u64(4);
    let params = setup_group(DEFAULT_BIT_LENGTH, &mut rng).map_err(|e| e.to_string())?;
    let shares: Vec<_> = (1..=3).map(|i| dkg_contribute(&params, i, &mut rng)).collect();
    let publics: Vec<_> = shares.iter().map(|s| (s.owner(), s.public())).collect();
    let joint = aggregate_public_key(&params, &publics).map_err(|e| e.to_string())?;
    let mut accepted = 0;
    let mut rejected = 0;
    let mut forgeries = 0;
    for i in 0..1000 {
        let (ct, proof) = encrypt_bit(&params, &joint, i % 2, &mut rng).map_err(|e| e.to_string())?;
        accepted += usize::from(verify_bit_proof(&params, &joint, &ct, &proof));
        if i % 2 == 0 {
            // Transplant onto another ciphertext of either bit.
            let (other, _) = encrypt_bit(&params, &joint, rng.gen_range(0..2), &mut rng).map_err(|e| e.to_string())?;
            forgeries += 1;
            rejected += usize::from(!verify_bit_proof(&params, &joint, &other, &proof));
        } else {
            let delta = params.random_nonzero_scalar(&mut rng);
            let shift = params.exp_g(&delta);
            let forged = match rng.gen_range(0..8) {
                0 => BitProof { e0: proof.e0 + delta, ..proof },
                1 => BitProof { z0: proof.z0 + delta, ..proof },
                2 => BitProof { e1: proof.e1 + delta, ..proof },
                3 => BitProof { z1: proof.z1 + delta, ..proof },
                4 => BitProof { a0: proof.a0 * shift, ..proof },
                5 => BitProof { b0: proof.b0 * shift, ..proof },
                6 => BitProof { a1: proof.a1 * shift, ..proof },
                _ => BitProof { b1: proof.b1 * shift, ..proof },
            };
            forgeries += 1;
            rejected += usize::from(!verify_bit_proof(&params, &joint, &ct, &forged));
        }
    }
    ensure(accepted == 1000, || format!("{accepted}/1000 honest proofs accepted"))?;
    ensure(rejected == forgeries, || format!("{rejected}/{forgeries} forgeries rejected"))?;
    Ok(format!("{rejected}/{forgeries} forgeries rejected, {accepted}/1000 honest accepted"))
}

fn honest_end_to_end() -> Outcome {
    let mut scenario = honest_scenario(5, 5, 3, 2);
    scenario.inputs = Some(vec![11, 22, 33, 44, 55]);
    let (sim, report) = run_scenario(&scenario).map_err(|e| e.to_string())?;
    ensure(report.checks.len() == 2, || format!("{} checks ran", report.checks.len()))?;
    ensure(report.checks.iter().all(|c| c.verdict == Verdict::Success), || format!("{:?}", report.checks))?;
    ensure(report.final_states == vec![PartyState::Auditing; 5], || format!("{:?}", report.final_states))?;
    ensure(report.violations.is_empty(), || format!("{:?}", report.violations))?;
    // Offline replay of every prefix of the board.
    let dump = sim.board_dump();
    for end in 0..=dump.items.len() {
        let prefix = BoardDump { context: dump.context, items: dump.items[..end].to_vec() };
        ensure(prefix.replay_audit().is_ok(), || format!("offline audit fails after {end} entries"))?;
    }
    // Round 0 pools actors 0,1,2; round 1 pools 3,4,0.
    let expected = [11 + 22 + 33, 44 + 55 + 11];
    ensure(report.secure_sums.len() == 2, || format!("{:?}", report.secure_sums))?;
    for (sum, want) in report.secure_sums.iter().zip(expected) {
        ensure(sum.outputs == vec![want; 3], || format!("run {}: outputs {:?}, want {want}", sum.run, sum.outputs))?;
    }
    Ok(format!("2 checks succeed, {} audit steps clean, sums {:?}", dump.items.len(), expected))
}

fn named_corrupted(sim: &Simulation, identity: &anonpool_core::identity::PartyId) -> bool {
    sim.actors.iter().any(|a| a.behavior.corrupted && a.ctx.identity() == identity)
}

fn failure_diagnosis() -> Outcome {
    let cases: [(AttackId, &str); 4] = [
        (AttackId::ForgedSignatureRequest, "invalid signature"),
        (AttackId::SignForUnregistered, "orphan"),
        (AttackId::LieBitUp, "lied bit (up)"),
        (AttackId::LieBitDown, "lied bit (down)"),
    ];
    for (attack, label) in cases {
        for seed in 0..20 {
            let (sim, report) = run_attack(attack, &attack_scenario(attack, seed)).map_err(|e| e.to_string())?;
            let first_failure = report.verdicts.iter().find(|v| **v != Verdict::Success).cloned();
            let ok = match (attack, &first_failure) {
                (AttackId::ForgedSignatureRequest, Some(Verdict::BanParty { identity, cause: BanCause::InvalidSignature })) => {
                    named_corrupted(&sim, identity)
                }
                (AttackId::SignForUnregistered, Some(Verdict::CoordinatorMalicious { cause: MaliciousCause::OrphanPseudonym })) => true,
                (AttackId::LieBitUp | AttackId::LieBitDown, Some(Verdict::BanParty { identity, cause: BanCause::LiedInCheck })) => {
                    named_corrupted(&sim, identity)
                }
                _ => false,
            };
            ensure(ok, || format!("{label}, seed {seed}: {first_failure:?}"))?;
        }
    }
    Ok("3 failure cases x 20 seeds diagnosed".into())
}

fn audit_detection() -> Outcome {
    let cases = [
        (AttackId::ReuseDeprecated, 2u8),
        (AttackId::SkipDeprecation, 3),
        (AttackId::SkipBan, 4),
        (AttackId::InvalidTokenRegistration, 1),
    ];
    let mut seqs = Vec::new();
    for (attack, check) in cases {
        for seed in 0..5 {
            let (sim, report) = run_attack(attack, &attack_scenario(attack, seed)).map_err(|e| e.to_string())?;
            let offending = report.offending_seq.ok_or_else(|| format!("{attack}: no offending entry located"))?;
            ensure(
                report.detection == Detection::AuditViolation { check: Some(check), seq: offending },
                || format!("{attack} seed {seed}: {:?}, offending entry {offending}", report.detection),
            )?;
            // The offline replay of the same board must agree.
            match sim.board_dump().replay_audit() {
                AuditVerdict::Violation(v) if v.check.id() == Some(check) && v.seq == offending => {}
                other => return Err(format!("{attack} seed {seed}: offline replay gives {other:?}")),
            }
            if seed == 0 {
                seqs.push(format!("{attack}=check {check}@{offending}"));
            }
        }
    }
    Ok(seqs.join(", "))
}

fn replay_and_impersonation() -> Outcome {
    let mut replays = 0;
    let mut impersonations = 0;
    for seed in 0..100 {
        let (_, report) = run_attack(AttackId::ReplayPseudonym, &attack_scenario(AttackId::ReplayPseudonym, seed))
            .map_err(|e| e.to_string())?;
        replays += usize::from(report.detection == Detection::RequestRejected { reason: RejectReason::Replay });
        let (sim, report) = run_attack(AttackId::WrongTokenRegistration, &attack_scenario(AttackId::WrongTokenRegistration, seed))
            .map_err(|e| e.to_string())?;
        let rejected = matches!(report.detection, Detection::RegistrationRejected { .. });
        // The victim still registers under their own token.
        let victim_ok = sim.actors[0].ctx.state() == PartyState::Auditing;
        impersonations += usize::from(rejected && victim_ok);
    }
    ensure(replays == 100, || format!("replay rejected {replays}/100"))?;
    ensure(impersonations == 100, || format!("cross-identity token rejected {impersonations}/100"))?;
    Ok("replay rejected 100/100, cross-identity token rejected 100/100".into())
}

fn permutation_invariance() -> Outcome {
    let scenario = honest_scenario(9, 5, 3, 2);
    let mut rng = SeededRng::from_u64(9);
    for trial in 0..10 {
        let a = rng.gen_range(0..5);
        let b = (a + rng.gen_range(1..5)) % 5;
        let mut perm: Vec<usize> = (0..5).collect();
        perm.swap(a, b);
        let same = transcript_permutation_test(&scenario, &perm).map_err(|e| e.to_string())?;
        ensure(same, || format!("trial {trial}: swapping {a} and {b} changes the adversary view"))?;
    }
    Ok("10/10 honest swaps leave the adversary view byte-identical".into())
}

fn property_values() -> Outcome {
    let anonymity = anonymity_probability(5, 2).map_err(|e| e.to_string())?;
    let unlinkability = unlinkability_probability(4, 1).map_err(|e| e.to_string())?;
    ensure(anonymity == Ratio::new(1, 3), || format!("anonymity(5,2) = {anonymity}"))?;
    ensure(unlinkability == Ratio::new(1, 3), || format!("unlinkability(4,1) = {unlinkability}"))?;
    Ok(format!("anonymity(P=5,C=2) = {anonymity}, unlinkability(T=4,C=1) = {unlinkability}"))
}

fn collusion_caveat() -> Outcome {
    let mut worst = 0;
    for seed in 0..20 {
        let (sim, report) = run_attack(AttackId::ColludingPairSwap, &attack_scenario(AttackId::ColludingPairSwap, seed))
            .map_err(|e| e.to_string())?;
        ensure(!report.verdicts.is_empty() && report.verdicts.iter().all(|v| *v == Verdict::Success), || {
            format!("seed {seed}: {:?}", report.verdicts)
        })?;
        // Count adversary-held pool entries straight from the board.
        let mut held: BTreeSet<_> = BTreeSet::new();
        for actor in sim.actors.iter().filter(|a| a.behavior.corrupted) {
            held.extend(actor.history.iter().map(|h| h.pseudonym.onion_url));
        }
        for extra in &sim.extras {
            if let Holder::Actor(i) = extra.holder {
                if sim.actors[i].behavior.corrupted {
                    held.extend(extra.history.iter().copied());
                }
            }
        }
        let corrupted = report.corrupted.len();
        for body in board_bodies(&sim).values() {
            if let EntryBody::PoolDrain(urls) = body {
                let in_pool = urls.iter().filter(|u| held.contains(u)).count();
                ensure(in_pool <= corrupted, || format!("seed {seed}: {in_pool} adversary pseudonyms, |C| = {corrupted}"))?;
                worst = worst.max(in_pool);
            }
        }
        ensure(report.max_corrupted_in_pool <= corrupted, || format!("seed {seed}: {report:?}"))?;
    }
    Ok(format!("20/20 seeds succeed undetected, at most {worst} adversary pseudonyms per pool (|C| = 2)"))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 11] = [
        ("blind signatures: 1000 seeded runs verify", blind_sign_completeness),
        ("blindness: all 9 cross pairs explained", blindness_cross_pairing),
        ("tally: decrypted count equals Hamming weight, n <= 6", homomorphic_tally),
        ("bit proofs: forgeries rejected, honest accepted", bit_proof_soundness),
        ("honest P=5 T=3 two rounds end to end", honest_end_to_end),
        ("failure diagnosis matrix", failure_diagnosis),
        ("audit detection matrix", audit_detection),
        ("replay and impersonation rejection", replay_and_impersonation),
        ("honest permutation leaves adversary view unchanged", permutation_invariance),
        ("anonymity and unlinkability values", property_values),
        ("colluding pair swap succeeds within |C|", collusion_caveat),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (n, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", n + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", n + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
