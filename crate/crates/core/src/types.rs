//! Protocol value types: timestamps, pointers, metadata records, fragments,
//! digests and the system configuration.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};
use thiserror::Error;

/// Small integer identifying a client, `0..m`.
pub type ClientId = u16;

/// Zero-based data node index, `0..n`.
pub type NodeId = usize;

/// Digest size in bits. Fixed by the choice of SHA-256.
pub const DIGEST_BITS: usize = 256;

/// Reserved client id that stands for NIL in the canonical encoding.
pub const NIL_CLIENT_WIRE: u16 = 0xFFFF;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TypesError {
    #[error("fragment {index} is absent")]
    AbsentFragment { index: usize },
    #[error("timestamp encoding must be 10 bytes, got {0}")]
    BadTimestampEncoding(usize),
    #[error("client id {0} collides with the NIL sentinel")]
    ReservedClientId(u16),
}

/// Names one written value. `client == None` is NIL, which orders below
/// every real client id, so the derived ordering is exactly "sn first, then
/// client".
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Timestamp {
    pub sn: u64,
    #[serde(rename = "c")]
    pub client: Option<ClientId>,
}

impl Timestamp {
    /// The initial timestamp `(0, NIL)`.
    pub const ZERO: Timestamp = Timestamp { sn: 0, client: None };

    pub fn new(sn: u64, client: ClientId) -> Self {
        Timestamp { sn, client: Some(client) }
    }

    pub fn is_zero(&self) -> bool {
        *self == Self::ZERO
    }

    /// Canonical 10-byte key: big-endian `sn`, then big-endian client id
    /// with `0xFFFF` for NIL.
    pub fn to_bytes(&self) -> [u8; 10] {
        let mut out = [0u8; 10];
        out[..8].copy_from_slice(&self.sn.to_be_bytes());
        let c = self.client.unwrap_or(NIL_CLIENT_WIRE);
        out[8..].copy_from_slice(&c.to_be_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TypesError> {
        if bytes.len() != 10 {
            return Err(TypesError::BadTimestampEncoding(bytes.len()));
        }
        let mut sn = [0u8; 8];
        sn.copy_from_slice(&bytes[..8]);
        let c = u16::from_be_bytes([bytes[8], bytes[9]]);
        Ok(Timestamp {
            sn: u64::from_be_bytes(sn),
            client: (c != NIL_CLIENT_WIRE).then_some(c),
        })
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.client {
            Some(c) => write!(f, "({}, {})", self.sn, c),
            None => write!(f, "({}, NIL)", self.sn),
        }
    }
}

/// Total order on timestamps.
pub fn compare_timestamps(a: &Timestamp, b: &Timestamp) -> std::cmp::Ordering {
    a.cmp(b)
}

/// Serde helper: byte strings as lowercase hex.
pub mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = <std::borrow::Cow<'de, str>>::deserialize(d)?;
        hex::decode(s.as_bytes()).map_err(serde::de::Error::custom)
    }
}

/// Hex helper for optional byte strings (`null` when absent).
pub mod hex_bytes_opt {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &Option<Vec<u8>>, s: S) -> Result<S::Ok, S::Error> {
        match bytes {
            Some(b) => s.serialize_some(&hex::encode(b)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<u8>>, D::Error> {
        let s = Option::<String>::deserialize(d)?;
        s.map(|s| hex::decode(s).map_err(serde::de::Error::custom)).transpose()
    }
}

/// One erasure-coded piece of a value. Absence is modelled as
/// `Option<Fragment>::None` throughout.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Fragment(#[serde(with = "hex_bytes")] pub Vec<u8>);

impl Fragment {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Debug for Fragment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.len() <= 8 {
            write!(f, "Fragment({})", hex::encode(&self.0))
        } else {
            write!(f, "Fragment({}.. {} bytes)", hex::encode(&self.0[..8]), self.0.len())
        }
    }
}

/// 256-bit collision-resistant digest.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Digest(pub [u8; 32]);

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({}..)", hex::encode(&self.0[..4]))
    }
}

impl Serialize for Digest {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(self.0))
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = <std::borrow::Cow<'de, str>>::deserialize(d)?;
        let mut out = [0u8; 32];
        hex::decode_to_slice(s.as_bytes(), &mut out).map_err(serde::de::Error::custom)?;
        Ok(Digest(out))
    }
}

pub fn hash_fragment(f: &Fragment) -> Digest {
    Digest(Sha256::digest(&f.0).into())
}

/// Hashes a possibly absent fragment; absence is an error.
pub fn try_hash_fragment(f: Option<&Fragment>) -> Result<Digest, TypesError> {
    f.map(hash_fragment).ok_or(TypesError::AbsentFragment { index: 0 })
}

/// Cross checksum: entry `i` is the digest of fragment `i`.
pub fn build_cross_checksum(frags: &[Option<Fragment>]) -> Result<Vec<Digest>, TypesError> {
    frags
        .iter()
        .enumerate()
        .map(|(index, f)| f.as_ref().map(hash_fragment).ok_or(TypesError::AbsentFragment { index }))
        .collect()
}

/// Metadata describing one stored value: its timestamp, the nodes that
/// acknowledged storing a fragment, and the cross checksum.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pointer {
    pub ts: Timestamp,
    pub set: BTreeSet<NodeId>,
    pub hash: Vec<Option<Digest>>,
}

impl Pointer {
    /// `Nullptr` for a system of `n` nodes.
    pub fn null(n: usize) -> Self {
        Pointer { ts: Timestamp::ZERO, set: BTreeSet::new(), hash: vec![None; n] }
    }

    pub fn is_null(&self) -> bool {
        self.ts.is_zero() && self.set.is_empty() && self.hash.iter().all(Option::is_none)
    }
}

/// Per-client record in the metadata directory.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MetadataEntry {
    pub writeptr: Pointer,
    pub frozenptrlist: Vec<Pointer>,
    pub frozenindex: Vec<u64>,
    pub readindex: u64,
}

impl MetadataEntry {
    pub fn initial(n: usize, m: usize) -> Self {
        MetadataEntry {
            writeptr: Pointer::null(n),
            frozenptrlist: vec![Pointer::null(n); m],
            frozenindex: vec![0; m],
            readindex: 0,
        }
    }

    /// `writeptr.ts` strictly dominates every frozen timestamp once something
    /// has been written.
    pub fn frozen_below_written(&self) -> bool {
        self.writeptr.ts.is_zero() || self.frozenptrlist.iter().all(|p| p.ts < self.writeptr.ts)
    }
}

/// Snapshot of all `m` directory entries.
pub type MetadataVector = Vec<MetadataEntry>;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("field `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field, reason: reason.into() }
}

/// System parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SystemConfig {
    pub n: usize,
    pub t: usize,
    pub k: usize,
    pub m: usize,
    /// Value size in bytes.
    pub ell: usize,
    /// Digest size in bits.
    #[serde(default = "default_lambda")]
    pub lambda: usize,
}

fn default_lambda() -> usize {
    DIGEST_BITS
}

impl SystemConfig {
    pub fn new(n: usize, t: usize, k: usize, m: usize, ell: usize) -> Self {
        SystemConfig { n, t, k, m, ell, lambda: DIGEST_BITS }
    }

    /// Full validation including the resilience bound `n >= 2t + k`.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.validate_shape()?;
        if self.n < 2 * self.t + self.k {
            return Err(invalid(
                "n",
                format!("n = {} violates n >= 2t + k = {}", self.n, 2 * self.t + self.k),
            ));
        }
        Ok(())
    }

    /// Validation without the resilience bound, for boundary experiments.
    pub fn validate_shape(&self) -> Result<(), ConfigError> {
        if self.k < 1 {
            return Err(invalid("k", "k must be at least 1"));
        }
        if self.n < 1 || self.n > 255 {
            return Err(invalid("n", format!("n = {} outside 1..=255", self.n)));
        }
        if self.k > self.n {
            return Err(invalid("k", format!("k = {} exceeds n = {}", self.k, self.n)));
        }
        if self.t + self.k > self.n {
            return Err(invalid("t", format!("t + k = {} exceeds n = {}", self.t + self.k, self.n)));
        }
        if self.m < 1 || self.m >= NIL_CLIENT_WIRE as usize {
            return Err(invalid("m", format!("m = {} outside 1..65535", self.m)));
        }
        if self.ell < 1 {
            return Err(invalid("ell", "value size must be at least one byte"));
        }
        if self.lambda != DIGEST_BITS {
            return Err(invalid("lambda", format!("only {DIGEST_BITS}-bit digests are supported")));
        }
        Ok(())
    }

    /// Number of acknowledgements a write waits for.
    pub fn write_quorum(&self) -> usize {
        self.t + self.k
    }

    /// Fragment size `ceil(ell / k)` in bytes.
    pub fn fragment_len(&self) -> usize {
        self.ell.div_ceil(self.k)
    }
}
