//! Keyed SplitMix64 byte streams.
//!
//! A stream is identified by a 64-bit key derived from the fixture seed and
//! any number of string parts:
//!
//! ```text
//! key = seed
//! for part in parts: key = mix64(key ^ fnv1a64(part))
//! word[k] = mix64(key + (k + 1) * 0x9E3779B97F4A7C15)      (wrapping)
//! bytes   = word[0].to_le_bytes() ++ word[1].to_le_bytes() ++ ...
//! ```
//!
//! `mix64` is the SplitMix64 finalizer (Steele, Lea, Flood 2014) and
//! `fnv1a64` is 64-bit FNV-1a over the UTF-8 bytes. Words are independent,
//! so any byte range can be produced without generating its prefix.

pub const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn fnv1a64(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn derive_key(seed: u64, parts: &[&str]) -> u64 {
    parts
        .iter()
        .fold(seed, |key, part| mix64(key ^ fnv1a64(part)))
}

/// Random-access view of one keyed stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KeyedStream {
    key: u64,
}

impl KeyedStream {
    pub fn new(seed: u64, parts: &[&str]) -> Self {
        KeyedStream {
            key: derive_key(seed, parts),
        }
    }

    pub fn word(&self, k: u64) -> u64 {
        mix64(self.key.wrapping_add(k.wrapping_add(1).wrapping_mul(GAMMA)))
    }

    /// Fills `buf` with stream bytes starting at byte `offset`.
    pub fn fill(&self, offset: u64, buf: &mut [u8]) {
        let mut pos = offset;
        let mut i = 0;
        while i < buf.len() {
            let word = self.word(pos / 8).to_le_bytes();
            let start = (pos % 8) as usize;
            let n = (8 - start).min(buf.len() - i);
            buf[i..i + n].copy_from_slice(&word[start..start + n]);
            i += n;
            pos += n as u64;
        }
    }

    pub fn bytes(&self, offset: u64, len: usize) -> Vec<u8> {
        let mut buf = vec![0u8; len];
        self.fill(offset, &mut buf);
        buf
    }
}

/// Sequential draws, for fixture layout decisions.
#[derive(Debug, Clone)]
pub struct Draws {
    stream: KeyedStream,
    next: u64,
}

impl Draws {
    pub fn new(seed: u64, parts: &[&str]) -> Self {
        Draws {
            stream: KeyedStream::new(seed, parts),
            next: 0,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        let w = self.stream.word(self.next);
        self.next += 1;
        w
    }

    pub fn below(&mut self, n: u64) -> u64 {
        if n == 0 {
            0
        } else {
            self.next_u64() % n
        }
    }
}
