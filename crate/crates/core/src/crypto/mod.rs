//! Group arithmetic, hashing, Schnorr signatures and seeded randomness shared
//! by every protocol module.

mod group;
mod hash;
mod rng;
pub mod schnorr;

pub use group::{
    is_prime, setup_group, GroupElement, GroupError, GroupParams, Scalar, DEFAULT_BIT_LENGTH,
    MAX_BIT_LENGTH, MIN_BIT_LENGTH,
};
pub use hash::{hash_to_scalar, tagged_digest, Digest32, DomainHasher};
pub use rng::SeededRng;

/// `base^exp` in the subgroup.
pub fn group_exp(base: &GroupElement, exp: &Scalar) -> GroupElement {
    base.pow(exp)
}
