use std::collections::BTreeMap;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::codec::{Canonical, CodecError, Reader, Writer};
use crate::crypto::Digest;

/// Position of the transaction that last wrote a key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Version {
    pub block: u64,
    pub tx: u32,
}

impl Version {
    pub fn new(block: u64, tx: u32) -> Self {
        Version { block, tx }
    }
}

impl Canonical for Version {
    fn encode(&self, w: &mut Writer) {
        w.u64(self.block).u32(self.tx);
    }

    fn decode(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        Ok(Version {
            block: r.u64()?,
            tx: r.u32()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VersionedValue {
    pub value: Vec<u8>,
    pub version: Version,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KvRead {
    pub key: String,
    /// `None` when the key was absent.
    pub version: Option<Version>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KvWrite {
    pub key: String,
    /// `None` is a delete marker.
    pub value: Option<Vec<u8>>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReadWriteSet {
    pub reads: Vec<KvRead>,
    pub writes: Vec<KvWrite>,
}

impl ReadWriteSet {
    pub fn write_keys(&self) -> impl Iterator<Item = &str> {
        self.writes.iter().map(|w| w.key.as_str())
    }
}

impl Canonical for ReadWriteSet {
    fn encode(&self, w: &mut Writer) {
        w.list(&self.reads, |w, r| {
            w.str(&r.key).option(r.version.as_ref(), |w, v| {
                w.put(v);
            });
        });
        w.list(&self.writes, |w, kw| {
            w.str(&kw.key).option(kw.value.as_ref(), |w, v| {
                w.bytes(v);
            });
        });
    }

    fn decode(r: &mut Reader<'_>) -> Result<Self, CodecError> {
        let reads = r.list(|r| {
            Ok(KvRead {
                key: r.string()?,
                version: r.option(|r| r.get())?,
            })
        })?;
        let writes = r.list(|r| {
            Ok(KvWrite {
                key: r.string()?,
                value: r.option(|r| r.bytes())?,
            })
        })?;
        Ok(ReadWriteSet { reads, writes })
    }
}

/// Latest committed value and version of every live key.
///
/// Deleted keys are removed outright; only the latest version is kept.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldState {
    entries: BTreeMap<String, VersionedValue>,
}

impl WorldState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, key: &str) -> Option<&VersionedValue> {
        self.entries.get(key)
    }

    pub fn version(&self, key: &str) -> Option<Version> {
        self.entries.get(key).map(|v| v.version)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &VersionedValue)> {
        self.entries.iter()
    }

    pub fn range_prefix<'a>(
        &'a self,
        prefix: &'a str,
    ) -> impl Iterator<Item = (&'a String, &'a VersionedValue)> + 'a {
        self.entries
            .range(prefix.to_owned()..)
            .take_while(move |(k, _)| k.starts_with(prefix))
    }

    /// True iff every read still observes the current version.
    pub fn reads_current(&self, rwset: &ReadWriteSet) -> bool {
        rwset.reads.iter().all(|r| self.version(&r.key) == r.version)
    }

    pub fn apply(&mut self, rwset: &ReadWriteSet, version: Version) {
        for w in &rwset.writes {
            match &w.value {
                Some(v) => {
                    self.entries.insert(
                        w.key.clone(),
                        VersionedValue {
                            value: v.clone(),
                            version,
                        },
                    );
                }
                None => {
                    self.entries.remove(&w.key);
                }
            }
        }
    }

    /// Insert directly, bypassing transactions. Test fixtures only.
    pub fn insert_raw(&mut self, key: &str, value: Vec<u8>, version: Version) {
        self.entries
            .insert(key.to_owned(), VersionedValue { value, version });
    }

    /// SHA-256 over the sorted `(key, value, version)` triples.
    pub fn state_hash(&self) -> Digest {
        let mut w = Writer::new();
        w.len(self.entries.len());
        for (k, v) in &self.entries {
            w.str(k).bytes(&v.value).put(&v.version);
        }
        Digest::of(w.as_slice())
    }
}

/// Executes one chaincode invocation against an immutable snapshot,
/// recording the version of everything read and buffering all writes.
#[derive(Debug)]
pub struct TxSimulator<'a> {
    snapshot: &'a WorldState,
    reads: IndexMap<String, Option<Version>>,
    writes: IndexMap<String, Option<Vec<u8>>>,
}

impl<'a> TxSimulator<'a> {
    pub fn new(snapshot: &'a WorldState) -> Self {
        TxSimulator {
            snapshot,
            reads: IndexMap::new(),
            writes: IndexMap::new(),
        }
    }

    /// Reads a key. A key already written in this invocation is served from
    /// the write buffer and adds no read entry.
    pub fn get(&mut self, key: &str) -> Option<Vec<u8>> {
        if let Some(buffered) = self.writes.get(key) {
            return buffered.clone();
        }
        let entry = self.snapshot.get(key);
        self.reads
            .entry(key.to_owned())
            .or_insert(entry.map(|e| e.version));
        entry.map(|e| e.value.clone())
    }

    pub fn put(&mut self, key: &str, value: Vec<u8>) {
        self.writes.insert(key.to_owned(), Some(value));
    }

    pub fn delete(&mut self, key: &str) {
        self.writes.insert(key.to_owned(), None);
    }

    /// Committed keys under `prefix`, each recorded as a read. Keys inserted
    /// concurrently under the prefix are not detected, so results are only
    /// safe for query-only invocations that are never ordered.
    pub fn scan_prefix(&mut self, prefix: &str) -> Vec<(String, Vec<u8>)> {
        let found: Vec<_> = self
            .snapshot
            .range_prefix(prefix)
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        found
            .into_iter()
            .filter_map(|(k, v)| {
                self.reads.entry(k.clone()).or_insert(Some(v.version));
                match self.writes.get(&k) {
                    Some(buffered) => buffered.clone().map(|b| (k, b)),
                    None => Some((k, v.value)),
                }
            })
            .collect()
    }

    pub fn into_rwset(self) -> ReadWriteSet {
        ReadWriteSet {
            reads: self
                .reads
                .into_iter()
                .map(|(key, version)| KvRead { key, version })
                .collect(),
            writes: self
                .writes
                .into_iter()
                .map(|(key, value)| KvWrite { key, value })
                .collect(),
        }
    }
}
