//! Per-client operation scripts with globally unique written values.

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::ClientId;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpSpec {
    Write(#[serde(with = "crate::types::hex_bytes")] Vec<u8>),
    Read,
}

#[derive(Debug, Error, PartialEq)]
pub enum WorkloadError {
    #[error("value size must be at least one byte")]
    EmptyValues,
    #[error("read fraction {0} outside [0, 1]")]
    BadMix(f64),
    #[error("{needed} distinct values do not fit in {ell} bytes")]
    ValueSpaceTooSmall { needed: u64, ell: usize },
}

/// Draws `ops_per_client` operations for each of `m` clients; each is a read
/// with probability `read_fraction`. Written values embed a unique counter in
/// their leading bytes and are padded with seeded random bytes.
pub fn workload_generate(
    read_fraction: f64,
    ops_per_client: usize,
    ell: usize,
    m: usize,
    seed: u64,
) -> Result<Vec<Vec<OpSpec>>, WorkloadError> {
    if ell == 0 {
        return Err(WorkloadError::EmptyValues);
    }
    if !(0.0..=1.0).contains(&read_fraction) {
        return Err(WorkloadError::BadMix(read_fraction));
    }
    let prefix = ell.min(8);
    let needed = (m as u64) * (ops_per_client as u64);
    if prefix < 8 && needed > 1u64 << (8 * prefix) {
        return Err(WorkloadError::ValueSpaceTooSmall { needed, ell });
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let scripts = (0..m)
        .map(|client| {
            (0..ops_per_client)
                .map(|i| {
                    if rng.gen_bool(read_fraction) {
                        OpSpec::Read
                    } else {
                        OpSpec::Write(unique_value(client as ClientId, i as u64, m, ell, &mut rng))
                    }
                })
                .collect()
        })
        .collect();
    Ok(scripts)
}

fn unique_value(client: ClientId, counter: u64, m: usize, ell: usize, rng: &mut impl Rng) -> Vec<u8> {
    let id = counter * m as u64 + client as u64;
    let prefix = ell.min(8);
    let mut v = id.to_be_bytes()[8 - prefix..].to_vec();
    v.extend((prefix..ell).map(|_| rng.gen::<u8>()));
    v
}
