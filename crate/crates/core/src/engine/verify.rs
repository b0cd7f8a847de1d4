//! Content hashing and integrity verification.

use std::io::{self, Read, Write};
use std::sync::atomic::{AtomicU64, Ordering};

use md5::Md5;
use sha2::{Digest, Sha256};

use crate::model::{HashAlgorithm, HashClaim, Provenance};
use crate::provider::DriverCapabilities;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalDigests {
    pub md5: String,
    pub sha256: String,
    pub size: u64,
}

impl LocalDigests {
    pub fn of_reader(mut r: impl Read) -> io::Result<Self> {
        let mut w = HashingWriter::new(io::sink());
        io::copy(&mut r, &mut w)?;
        Ok(w.finish().1)
    }

    pub fn of_bytes(bytes: &[u8]) -> Self {
        Self::of_reader(bytes).expect("in-memory read")
    }
}

/// Tees writes through MD5 and SHA-256 and optionally bumps a shared byte
/// counter.
pub struct HashingWriter<'a, W> {
    inner: W,
    md5: Md5,
    sha256: Sha256,
    size: u64,
    counter: Option<&'a AtomicU64>,
}

impl<'a, W: Write> HashingWriter<'a, W> {
    pub fn new(inner: W) -> Self {
        HashingWriter {
            inner,
            md5: Md5::new(),
            sha256: Sha256::new(),
            size: 0,
            counter: None,
        }
    }

    pub fn with_counter(mut self, counter: &'a AtomicU64) -> Self {
        self.counter = Some(counter);
        self
    }

    pub fn finish(self) -> (W, LocalDigests) {
        let digests = LocalDigests {
            md5: hex::encode(self.md5.finalize()),
            sha256: hex::encode(self.sha256.finalize()),
            size: self.size,
        };
        (self.inner, digests)
    }
}

impl<W: Write> Write for HashingWriter<'_, W> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.md5.update(&buf[..n]);
        self.sha256.update(&buf[..n]);
        self.size += n as u64;
        if let Some(c) = self.counter {
            c.fetch_add(n as u64, Ordering::Relaxed);
        }
        Ok(n)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("provider claims md5 {expected}, content hashes to {actual}")]
pub struct IntegrityMismatch {
    pub expected: String,
    pub actual: String,
}

/// Produces the hash recorded for one acquired artifact.
///
/// A provider MD5 must match the locally computed MD5; the result keeps
/// provider provenance and is marked verified. Without a provider MD5 (opaque
/// change tokens included) the locally computed SHA-256 is recorded instead.
pub fn verify_item(
    provider_claim: Option<&HashClaim>,
    local: &LocalDigests,
    capabilities: &DriverCapabilities,
) -> Result<HashClaim, IntegrityMismatch> {
    match provider_claim {
        Some(claim) if claim.algorithm == HashAlgorithm::Md5 => {
            if claim.value != local.md5 {
                return Err(IntegrityMismatch {
                    expected: claim.value.clone(),
                    actual: local.md5.clone(),
                });
            }
            Ok(HashClaim {
                algorithm: HashAlgorithm::Md5,
                value: local.md5.clone(),
                provenance: Provenance::ProviderClaimed,
                verified: true,
            })
        }
        _ => {
            if capabilities.provides_content_hash {
                tracing::warn!("hashed provider returned no digest; recording local SHA-256");
            }
            Ok(HashClaim {
                algorithm: HashAlgorithm::Sha256,
                value: local.sha256.clone(),
                provenance: Provenance::LocallyComputed,
                verified: false,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::Dialect;

    const EMPTY_SHA256: &str = "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855";
    const EMPTY_MD5: &str = "d41d8cd98f00b204e9800998ecf8427e";

    #[test]
    fn empty_content_unhashed_records_sha256() {
        let caps = DriverCapabilities::for_dialect(Dialect::Unhashed);
        let claim = HashClaim::provider_rev("0123abcd");
        let out = verify_item(Some(&claim), &LocalDigests::of_bytes(b""), &caps).unwrap();
        assert_eq!(out.algorithm, HashAlgorithm::Sha256);
        assert_eq!(out.value, EMPTY_SHA256);
        assert_eq!(out.provenance, Provenance::LocallyComputed);
    }

    #[test]
    fn matching_md5_is_verified() {
        let caps = DriverCapabilities::for_dialect(Dialect::Hashed);
        let claim = HashClaim::provider_md5(EMPTY_MD5).unwrap();
        let out = verify_item(Some(&claim), &LocalDigests::of_bytes(b""), &caps).unwrap();
        assert!(out.verified);
        assert_eq!(out.provenance, Provenance::ProviderClaimed);
        assert_eq!(out.value, EMPTY_MD5);
    }

    #[test]
    fn flipped_byte_is_a_mismatch() {
        let caps = DriverCapabilities::for_dialect(Dialect::Hashed);
        let good = LocalDigests::of_bytes(b"hello world");
        let claim = HashClaim::provider_md5(good.md5.clone()).unwrap();
        let bad = LocalDigests::of_bytes(b"hello worle");
        let err = verify_item(Some(&claim), &bad, &caps).unwrap_err();
        assert_eq!(err.expected, good.md5);
        assert_eq!(err.actual, bad.md5);
    }

    #[test]
    fn known_vectors() {
        let d = LocalDigests::of_bytes(b"abc");
        assert_eq!(d.md5, "900150983cd24fb0d6963f7d28e17f72");
        assert_eq!(
            d.sha256,
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert_eq!(d.size, 3);
    }
}
