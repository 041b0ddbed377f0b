//! Protocol engine for repeated anonymous participation in multi-party
//! computations: blind-signed pseudonyms, an audited bulletin board, a
//! threshold pool and an encrypted sanity check with failure diagnosis.

pub mod blind;
pub mod board;
pub mod codec;
pub mod coordinator;
pub mod crypto;
pub mod identity;
pub mod net;
pub mod party;
pub mod sanity;
pub mod threshold;
pub mod wire;
