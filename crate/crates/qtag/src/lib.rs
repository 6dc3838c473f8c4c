//! Deterministic simulator of relativistic quantum-tagging protocols on a
//! 1-D line: schemes I-VI, an honest tag, adversary strategies including
//! teleportation attacks, and a verifier that decides which sessions to
//! accept.

pub mod adversary;
pub mod qstate;
pub mod rng;
pub mod schemes;
pub mod session;
pub mod verdict;
pub mod worldline;
