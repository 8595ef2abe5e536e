//! Hashing helpers: stable config digests, order-independent content
//! digests and seeded per-key random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

/// SHA-256 over length-prefixed parts, hex encoded.
pub fn hash_parts(parts: &[&[u8]]) -> String {
    hex::encode(hash_raw(parts))
}

fn hash_raw(parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize().into()
}

/// Digest of a value's canonical JSON form (object keys sorted).
pub fn config_digest<T: Serialize>(value: &T) -> String {
    let value = serde_json::to_value(value).expect("config values serialize to JSON");
    let canonical = serde_json::to_vec(&canonicalize(value)).expect("JSON values encode");
    hash_parts(&[&canonical])
}

/// Rebuilds every object with keys inserted in sorted order.
fn canonicalize(value: serde_json::Value) -> serde_json::Value {
    use serde_json::Value;
    match value {
        Value::Object(map) => {
            let mut entries: Vec<_> = map.into_iter().collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            Value::Object(
                entries
                    .into_iter()
                    .map(|(k, v)| (k, canonicalize(v)))
                    .collect(),
            )
        }
        Value::Array(items) => Value::Array(items.into_iter().map(canonicalize).collect()),
        other => other,
    }
}

/// Order-independent digest over `(id, payload)` pairs: entries are sorted by
/// id before hashing, so completion order never changes the result.
pub fn content_digest<'a, I>(entries: I) -> String
where
    I: IntoIterator<Item = (&'a str, Vec<u8>)>,
{
    let mut rows: Vec<(&str, [u8; 32])> = entries
        .into_iter()
        .map(|(id, payload)| (id, hash_raw(&[&payload])))
        .collect();
    rows.sort_by(|a, b| a.0.cmp(b.0).then(a.1.cmp(&b.1)));
    let mut h = Sha256::new();
    for (id, ph) in rows {
        h.update((id.len() as u64).to_le_bytes());
        h.update(id.as_bytes());
        h.update(ph);
    }
    hex::encode(h.finalize())
}

/// Content digest of serializable rows keyed by an id accessor.
pub fn rows_digest<T: Serialize>(rows: &[T], id: impl Fn(&T) -> &str) -> String {
    content_digest(rows.iter().map(|r| {
        let payload = serde_json::to_vec(r).expect("rows serialize to JSON");
        (id(r), payload)
    }))
}

/// Deterministic random stream for `(seed, key parts)`.
pub fn keyed_rng(seed: u64, parts: &[&[u8]]) -> ChaCha8Rng {
    let seed_bytes = seed.to_le_bytes();
    let mut all: Vec<&[u8]> = Vec::with_capacity(parts.len() + 1);
    all.push(&seed_bytes);
    all.extend_from_slice(parts);
    ChaCha8Rng::from_seed(hash_raw(&all))
}

/// Uniform value in `[0, 1)` derived from `(seed, key parts)`.
pub fn keyed_unit(seed: u64, parts: &[&[u8]]) -> f64 {
    let seed_bytes = seed.to_le_bytes();
    let mut all: Vec<&[u8]> = Vec::with_capacity(parts.len() + 1);
    all.push(&seed_bytes);
    all.extend_from_slice(parts);
    let h = hash_raw(&all);
    let mut word = [0u8; 8];
    word.copy_from_slice(&h[..8]);
    (u64::from_le_bytes(word) >> 11) as f64 / (1u64 << 53) as f64
}
