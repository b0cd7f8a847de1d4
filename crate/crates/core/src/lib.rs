//! Forensic acquisition of cloud drive accounts through provider APIs.
//!
//! The crate is organised around the three acquisition phases: content
//! discovery ([`engine::discover`]), target selection ([`engine::select`])
//! and target acquisition ([`engine::acquire`]). Providers are reached
//! through the [`provider::Driver`] trait; [`provider::simdrive`] talks to
//! the bundled drive simulator.

pub mod category;
pub mod engine;
pub mod model;
pub mod paths;
pub mod provider;
pub mod timefmt;

pub use category::{categorize_file, FileCategory, FilterSpec, NativeKind};
pub use model::{
    AcquisitionRecord, CloudFile, HashAlgorithm, HashClaim, ModelError, Provenance, Revision,
};

/// Tool name recorded in the APPLICATION column of the custody log.
pub const APPLICATION_NAME: &str = "kumoforge";

/// `kumoforge-<version>`, as written to every custody record.
pub fn application_id() -> String {
    format!("{}-{}", APPLICATION_NAME, env!("CARGO_PKG_VERSION"))
}
