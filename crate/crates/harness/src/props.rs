//! Closed-form anonymity and unlinkability probabilities, as exact
//! rationals.

use num_rational::Ratio;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum PropsError {
    #[error("corrupted parties ({corrupt}) must be fewer than registered parties ({parties})")]
    TooManyCorruptParties { parties: u64, corrupt: u64 },
    #[error("corrupted parties ({corrupt}) must be fewer than the pool threshold ({threshold})")]
    TooManyCorruptInPool { threshold: u64, corrupt: u64 },
}

/// Chance that an adversary controlling `corrupt` of `parties` registered
/// parties names the identity behind an honest pseudonym: 1/(P − C).
pub fn anonymity_probability(parties: u64, corrupt: u64) -> Result<Ratio<u64>, PropsError> {
    if corrupt >= parties {
        return Err(PropsError::TooManyCorruptParties { parties, corrupt });
    }
    Ok(Ratio::new(1, parties - corrupt))
}

/// Chance that two honest pseudonyms from consecutive pools are correctly
/// linked, with `corrupt` of the `threshold` pool slots taken by the
/// adversary: 1/(T − C).
pub fn unlinkability_probability(threshold: u64, corrupt: u64) -> Result<Ratio<u64>, PropsError> {
    if corrupt >= threshold {
        return Err(PropsError::TooManyCorruptInPool { threshold, corrupt });
    }
    Ok(Ratio::new(1, threshold - corrupt))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PropsReport {
    pub parties: u64,
    pub corrupt: u64,
    pub threshold: u64,
    pub anonymity: Option<String>,
    pub unlinkability: Option<String>,
}

/// Both values for one configuration; a value whose precondition fails is
/// reported as absent.
pub fn props_report(parties: u64, corrupt: u64, threshold: u64) -> PropsReport {
    PropsReport {
        parties,
        corrupt,
        threshold,
        anonymity: anonymity_probability(parties, corrupt).ok().map(|r| r.to_string()),
        unlinkability: unlinkability_probability(threshold, corrupt).ok().map(|r| r.to_string()),
    }
}
