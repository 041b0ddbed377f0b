//! Scenario files: a seeded configuration, a script of actions, and an
//! optional expected outcome. See `crates/harness/scenarios/` for samples.

use anonpool_core::party::PartyState;
use anonpool_core::sanity::Verdict;
use serde::{Deserialize, Serialize};

use crate::adversary::{inject, AttackId};
use crate::sim::{default_names, CheckRecord, SimConfig, SimError, Simulation, SumRecord, ViolationRecord, DEFAULT_MODULUS};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub seed: u64,
    pub parties: usize,
    pub threshold: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bit_length: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modulus: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inputs: Option<Vec<u64>>,
    #[serde(default)]
    pub script: Vec<Action>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect: Option<Expectation>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case", deny_unknown_fields)]
pub enum Action {
    Register { actor: usize },
    Request { actor: usize },
    Inject {
        attack: AttackId,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        actor: Option<usize>,
    },
    /// Let the system run until nothing is in flight.
    Advance,
}

/// Every field is optional; absent fields are not compared.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectation {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdicts: Option<Vec<Verdict>>,
    /// Audit check ids raised by honest parties, in order.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub violations: Option<Vec<u8>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_states: Option<Vec<PartyState>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScenarioReport {
    pub seed: u64,
    pub board_entries: usize,
    pub checks: Vec<CheckRecord>,
    pub secure_sums: Vec<SumRecord>,
    pub violations: Vec<ViolationRecord>,
    pub final_states: Vec<PartyState>,
    pub abandoned: bool,
    /// Differences from the expectation, plus secure-sum outputs that
    /// disagree with the plaintext sum.
    pub mismatches: Vec<String>,
}

impl ScenarioReport {
    pub fn passed(&self) -> bool {
        self.mismatches.is_empty()
    }
}

impl Scenario {
    pub fn config(&self) -> SimConfig {
        let mut config = SimConfig::new(self.seed, self.parties, self.threshold);
        if let Some(bits) = self.bit_length {
            config.bit_length = bits;
        }
        config.modulus = self.modulus.unwrap_or(DEFAULT_MODULUS);
        config.inputs = self.inputs.clone();
        config
    }

    /// Actors named in any injection.
    pub fn injected_actors(&self) -> Vec<usize> {
        self.script
            .iter()
            .filter_map(|a| match a {
                Action::Inject { actor, .. } => *actor,
                _ => None,
            })
            .collect()
    }

    fn check_actors(&self) -> Result<(), SimError> {
        for action in &self.script {
            let actor = match action {
                Action::Register { actor } | Action::Request { actor } => Some(*actor),
                Action::Inject { actor, .. } => *actor,
                Action::Advance => None,
            };
            if let Some(a) = actor.filter(|a| *a >= self.parties) {
                return Err(SimError::UnknownActor(a));
            }
        }
        Ok(())
    }
}

pub fn run_scenario(scenario: &Scenario) -> Result<(Simulation, ScenarioReport), SimError> {
    run_scenario_with_names(scenario, &default_names(scenario.parties))
}

/// Runs the script with `names[i]` as the identity of actor `i`.
pub fn run_scenario_with_names(scenario: &Scenario, names: &[String]) -> Result<(Simulation, ScenarioReport), SimError> {
    scenario.check_actors()?;
    let mut sim = Simulation::with_names(scenario.config(), names)?;
    for action in &scenario.script {
        match action {
            Action::Register { actor } => sim.register(*actor)?,
            Action::Request { actor } => sim.request(*actor)?,
            Action::Inject { attack, actor } => inject(&mut sim, *attack, *actor)?,
            Action::Advance => sim.settle()?,
        }
    }
    let report = report(&sim, scenario);
    Ok((sim, report))
}

fn report(sim: &Simulation, scenario: &Scenario) -> ScenarioReport {
    let mut mismatches = Vec::new();
    for sum in &sim.sums {
        if sum.outputs.iter().any(|o| *o != sum.plaintext_sum) {
            mismatches.push(format!("run {}: secure sum {:?} != plaintext {}", sum.run, sum.outputs, sum.plaintext_sum));
        }
    }
    let verdicts: Vec<Verdict> = sim.checks.iter().map(|c| c.verdict.clone()).collect();
    let violations: Vec<u8> = sim.violations.iter().filter_map(|v| v.check).collect();
    let final_states = sim.final_states();
    if let Some(expect) = &scenario.expect {
        if let Some(want) = &expect.verdicts {
            if *want != verdicts {
                mismatches.push(format!("verdicts: expected {want:?}, got {verdicts:?}"));
            }
        }
        if let Some(want) = &expect.violations {
            if *want != violations {
                mismatches.push(format!("violations: expected {want:?}, got {violations:?}"));
            }
        }
        if let Some(want) = &expect.final_states {
            if *want != final_states {
                mismatches.push(format!("final states: expected {want:?}, got {final_states:?}"));
            }
        }
    }
    ScenarioReport {
        seed: scenario.seed,
        board_entries: sim.coordinator.board().len(),
        checks: sim.checks.clone(),
        secure_sums: sim.sums.clone(),
        violations: sim.violations.clone(),
        final_states,
        abandoned: sim.abandoned,
        mismatches,
    }
}

/// The honest run used as the anonymity baseline: every party registers,
/// then `rounds` pools are filled by rotating groups of `threshold`
/// parties.
pub fn honest_scenario(seed: u64, parties: usize, threshold: usize, rounds: usize) -> Scenario {
    let mut script: Vec<Action> = (0..parties).map(|actor| Action::Register { actor }).collect();
    for round in 0..rounds {
        for k in 0..threshold {
            script.push(Action::Request { actor: (round * threshold + k) % parties });
        }
        script.push(Action::Advance);
    }
    Scenario { seed, parties, threshold, bit_length: None, modulus: None, inputs: None, script, expect: None }
}

/// Runs `scenario` twice, the second time with identities permuted among
/// actors (`permutation[i]` is the base identity given to actor `i`), and
/// compares what the adversary observes.
///
/// Only honest actors may be permuted; moving a corrupted actor is an
/// error.
pub fn transcript_permutation_test(scenario: &Scenario, permutation: &[usize]) -> Result<bool, SimError> {
    let n = scenario.parties;
    let mut sorted = permutation.to_vec();
    sorted.sort_unstable();
    if sorted != (0..n).collect::<Vec<_>>() {
        return Err(SimError::Precondition(format!("{permutation:?} is not a permutation of 0..{n}")));
    }
    let base_names = default_names(n);
    let (base, _) = run_scenario_with_names(scenario, &base_names)?;
    let corrupted: Vec<usize> = (0..n).filter(|i| base.actors[*i].behavior.corrupted).collect();
    if let Some(c) = corrupted.iter().find(|&&c| permutation[c] != c) {
        return Err(SimError::Precondition(format!("actor {c} is corrupted and must stay in place")));
    }
    let names: Vec<String> = permutation.iter().map(|&p| base_names[p].clone()).collect();
    let (permuted, _) = run_scenario_with_names(scenario, &names)?;
    Ok(base.adversary_view() == permuted.adversary_view())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_json_round_trips() {
        let json = r#"{
            "seed": 1, "parties": 3, "threshold": 2,
            "script": [
                {"action": "register", "actor": 0},
                {"action": "inject", "attack": "lie-bit-up", "actor": 2},
                {"action": "advance"}
            ],
            "expect": {"verdicts": [{"verdict": "success"}], "final_states": [{"state": "auditing"}]}
        }"#;
        let s: Scenario = serde_json::from_str(json).unwrap();
        assert_eq!(s.script[1], Action::Inject { attack: AttackId::LieBitUp, actor: Some(2) });
        assert_eq!(s.expect.as_ref().unwrap().verdicts, Some(vec![Verdict::Success]));
        let back: Scenario = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(serde_json::from_str::<Scenario>(r#"{"seed":1,"parties":3,"threshold":2,"colour":"red"}"#).is_err());
        assert!(serde_json::from_str::<Action>(r#"{"action":"teleport"}"#).is_err());
    }

    #[test]
    fn unknown_actor_is_an_error() {
        let mut s = honest_scenario(1, 3, 2, 0);
        s.script.push(Action::Request { actor: 7 });
        assert!(matches!(run_scenario(&s), Err(SimError::UnknownActor(7))));
    }

    #[test]
    fn empty_script_leaves_the_board_at_genesis() {
        let s = honest_scenario(1, 3, 2, 0);
        let s = Scenario { script: vec![], ..s };
        let (sim, report) = run_scenario(&s).unwrap();
        assert_eq!(report.board_entries, 0);
        assert_eq!(sim.events.len(), 1);
        assert!(matches!(sim.events[0], crate::sim::SimEvent::Genesis { seed: 1, .. }));
        assert_eq!(sim.event_log_jsonl().lines().count(), 1);
        assert!(report.passed());
    }
}
