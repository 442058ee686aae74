// SPDX-License-Identifier: MIT
//! Causal structure discovery with latent variables.
//!
//! The crate recovers a partially oriented including path graph from
//! conditional-independence information ([`ci`]), completes it into a
//! belief network with parentless common causes standing in for latent
//! confounding ([`ci_to_bn`]), and verifies on randomized ground truth
//! that the completion always exists and preserves every observed
//! d-separation ([`verify`]).
//!
//! Supporting modules: graph storage and mark algebra ([`graph`]), exact
//! d-separation ([`dsep`]), including path projection ([`latent`]),
//! G-squared testing on categorical data ([`indep`]), text serialization
//! ([`graphfile`]), and a pinned deterministic RNG ([`rng`]).

pub mod ci;
pub mod ci_to_bn;
pub mod dsep;
pub mod graph;
pub mod graphfile;
pub mod indep;
pub mod latent;
pub mod rng;
pub mod verify;
