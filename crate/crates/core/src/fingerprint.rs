//! Content fingerprints.
//!
//! A [`Fingerprint`] is a SHA-256 digest. Parameter sets are fingerprinted
//! over their canonical serialization: the value is converted to a JSON tree
//! whose object keys are sorted (serde_json's default map is ordered), and
//! floats are rendered with the shortest round-trip formatting. The same
//! parameters therefore always hash to the same bytes.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct Fingerprint([u8; 32]);

impl Fingerprint {
    pub fn of_bytes(bytes: &[u8]) -> Self {
        Self(Sha256::digest(bytes).into())
    }

    /// Fingerprint of `value`'s canonical form, domain-separated by `tag`.
    pub fn of_params<T: Serialize + ?Sized>(tag: &str, value: &T) -> Self {
        let canonical = canonical_json(value);
        let mut hasher = Sha256::new();
        hasher.update(tag.as_bytes());
        hasher.update([0u8]);
        hasher.update(canonical.as_bytes());
        Self(hasher.finalize().into())
    }

    /// Combines a tag, ordered upstream fingerprints and a parameter fingerprint.
    pub fn combine(tag: &str, inputs: &[Fingerprint], params: &Fingerprint) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(tag.as_bytes());
        hasher.update([0u8]);
        hasher.update((inputs.len() as u64).to_le_bytes());
        for input in inputs {
            hasher.update(input.0);
        }
        hasher.update(params.0);
        Self(hasher.finalize().into())
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        let bytes = hex::decode(s).ok()?;
        Some(Self(bytes.try_into().ok()?))
    }

    /// First 16 hex characters, used for display and run ids.
    pub fn short(&self) -> String {
        hex::encode(&self.0[..8])
    }
}

/// Canonical JSON text of `value`: sorted keys, no whitespace.
pub fn canonical_json<T: Serialize + ?Sized>(value: &T) -> String {
    let tree = serde_json::to_value(value).expect("parameter types serialize to JSON");
    tree.to_string()
}

/// Incremental hasher for large numeric payloads.
#[derive(Default)]
pub struct FingerprintBuilder(Sha256);

impl FingerprintBuilder {
    pub fn new(tag: &str) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(tag.as_bytes());
        hasher.update([0u8]);
        Self(hasher)
    }

    pub fn update(&mut self, bytes: &[u8]) -> &mut Self {
        self.0.update(bytes);
        self
    }

    pub fn update_f64s(&mut self, values: &[f64]) -> &mut Self {
        for v in values {
            self.0.update(v.to_bits().to_le_bytes());
        }
        self
    }

    pub fn update_i64s(&mut self, values: &[i64]) -> &mut Self {
        for v in values {
            self.0.update(v.to_le_bytes());
        }
        self
    }

    pub fn finish(self) -> Fingerprint {
        Fingerprint(self.0.finalize().into())
    }
}

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fingerprint({})", self.short())
    }
}

impl From<Fingerprint> for String {
    fn from(fp: Fingerprint) -> Self {
        fp.to_hex()
    }
}

impl TryFrom<String> for Fingerprint {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        Fingerprint::from_hex(&s).ok_or_else(|| format!("invalid fingerprint `{s}`"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn canonical_form_sorts_keys() {
        let mut a = HashMap::new();
        a.insert("zeta", 1.5);
        a.insert("alpha", 0.1);
        assert_eq!(canonical_json(&a), r#"{"alpha":0.1,"zeta":1.5}"#);
    }

    #[test]
    fn params_fingerprint_is_tag_separated() {
        let p = (1u32, 2.5f64);
        assert_eq!(Fingerprint::of_params("a", &p), Fingerprint::of_params("a", &p));
        assert_ne!(Fingerprint::of_params("a", &p), Fingerprint::of_params("b", &p));
    }

    #[test]
    fn hex_round_trip() {
        let fp = Fingerprint::of_bytes(b"abc");
        assert_eq!(
            fp.to_hex(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert_eq!(Fingerprint::from_hex(&fp.to_hex()), Some(fp));
    }
}
