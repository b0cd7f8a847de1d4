//! Deterministic stand-in for a cloud drive service.
//!
//! A [`FixtureSpec`] fully determines the catalog, revision history and
//! content bytes, so tests can compare acquired evidence against
//! [`Fixture::summary`] ground truth.

pub mod fixture;
pub mod pdf;
pub mod prng;
pub mod server;
pub mod throttle;

pub use fixture::{
    Fixture, FixtureError, FixtureSpec, FixtureSummary, RevisionDepth, SimFile, SimRevision,
    TruthFile,
};
pub use server::{
    access_code, FaultRequest, ServerStats, SimConfig, SimError, SimHandle, SimServer,
};
pub use throttle::{ThrottleConfig, TokenBucket};
