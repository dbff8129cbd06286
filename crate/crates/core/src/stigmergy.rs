//! Virtual stigmergy: a replicated key/value table kept consistent by gossip.
//!
//! Every robot holds its own replica of each table. Local writes bump a
//! per-entry Lamport clock and stamp the writer id; incoming versions are
//! ordered by `(lamport, writer)` so every replica converges on the same
//! entry regardless of delivery order or duplication.
//!
//! Operations never touch the network directly. They return the records that
//! must be broadcast and the caller queues them on its outbound frame.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Longest text key, in bytes.
pub const MAX_KEY_TEXT: usize = 15;
/// Longest text value, in bytes.
pub const MAX_VALUE_TEXT: usize = 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StigError {
    #[error("text key of {0} bytes exceeds the {MAX_KEY_TEXT}-byte limit")]
    KeyTooLong(usize),
    #[error("text keys must not be empty")]
    EmptyKey,
    #[error("text value of {0} bytes exceeds the {MAX_VALUE_TEXT}-byte limit")]
    ValueTooLong(usize),
    #[error("real values must be finite")]
    NonFiniteValue,
}

/// Table key: a small integer (robot id, label) or a short text token.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StigKey {
    Int(u16),
    Text(String),
}

impl StigKey {
    pub fn text(s: &str) -> Result<Self, StigError> {
        let key = StigKey::Text(s.to_owned());
        key.validate()?;
        Ok(key)
    }

    pub fn validate(&self) -> Result<(), StigError> {
        match self {
            StigKey::Int(_) => Ok(()),
            StigKey::Text(s) if s.is_empty() => Err(StigError::EmptyKey),
            StigKey::Text(s) if s.len() > MAX_KEY_TEXT => Err(StigError::KeyTooLong(s.len())),
            StigKey::Text(_) => Ok(()),
        }
    }

    pub fn wire_size(&self) -> usize {
        match self {
            StigKey::Int(_) => 1 + 2,
            StigKey::Text(s) => 1 + 1 + s.len(),
        }
    }
}

impl From<u16> for StigKey {
    fn from(v: u16) -> Self {
        StigKey::Int(v)
    }
}

impl fmt::Display for StigKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StigKey::Int(v) => write!(f, "{v}"),
            StigKey::Text(s) => write!(f, "{s:?}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StigValue {
    Int(i32),
    Real(f64),
    Text(String),
}

impl StigValue {
    pub fn validate(&self) -> Result<(), StigError> {
        match self {
            StigValue::Real(v) if !v.is_finite() => Err(StigError::NonFiniteValue),
            StigValue::Text(s) if s.len() > MAX_VALUE_TEXT => Err(StigError::ValueTooLong(s.len())),
            _ => Ok(()),
        }
    }

    /// Text values carry a length byte so the frame stays self-delimiting.
    pub fn wire_size(&self) -> usize {
        match self {
            StigValue::Int(_) => 1 + 4,
            StigValue::Real(_) => 1 + 8,
            StigValue::Text(s) => 1 + 1 + s.len(),
        }
    }

    pub fn as_int(&self) -> Option<i32> {
        match self {
            StigValue::Int(v) => Some(*v),
            _ => None,
        }
    }
}

impl From<i32> for StigValue {
    fn from(v: i32) -> Self {
        StigValue::Int(v)
    }
}

/// One materialized version of a key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StigEntry {
    pub key: StigKey,
    pub value: StigValue,
    pub lamport: u16,
    pub writer: u16,
}

impl StigEntry {
    /// Version order used for conflict resolution: clock first, then the
    /// higher writer id wins ties.
    pub fn version(&self) -> (u16, u16) {
        (self.lamport, self.writer)
    }
}

/// Gossip records exchanged for a table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StigRecord {
    Put { table_id: u8, entry: StigEntry },
    Query { table_id: u8, key: StigKey, lamport: u16 },
}

impl StigRecord {
    pub fn table_id(&self) -> u8 {
        match self {
            StigRecord::Put { table_id, .. } | StigRecord::Query { table_id, .. } => *table_id,
        }
    }

    /// Bytes this record occupies in a frame.
    pub fn wire_size(&self) -> usize {
        match self {
            StigRecord::Put { entry, .. } => {
                1 + 1 + entry.key.wire_size() + entry.value.wire_size() + 2 + 2
            }
            StigRecord::Query { key, .. } => 1 + 1 + key.wire_size() + 2,
        }
    }
}

/// What a replica did with an incoming `Put`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PutDecision {
    AdoptAndRebroadcast,
    Ignore,
    RespondWithLocal,
}

/// Decide how to treat `incoming` given the local version of the same key.
pub fn resolve(local: Option<&StigEntry>, incoming: &StigEntry) -> PutDecision {
    let Some(local) = local else {
        return PutDecision::AdoptAndRebroadcast;
    };
    match incoming.version().cmp(&local.version()) {
        Ordering::Greater => PutDecision::AdoptAndRebroadcast,
        Ordering::Equal => PutDecision::Ignore,
        Ordering::Less => PutDecision::RespondWithLocal,
    }
}

/// A robot's local replica of one virtual stigmergy table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StigTable {
    id: u8,
    entries: BTreeMap<StigKey, StigEntry>,
}

impl StigTable {
    pub fn create(id: u8) -> Self {
        Self {
            id,
            entries: BTreeMap::new(),
        }
    }

    pub fn id(&self) -> u8 {
        self.id
    }

    pub fn size(&self) -> usize {
        self.entries.len()
    }

    pub fn entry(&self, key: &StigKey) -> Option<&StigEntry> {
        self.entries.get(key)
    }

    pub fn entries(&self) -> impl Iterator<Item = &StigEntry> {
        self.entries.values()
    }

    /// Write locally. The clock advances past whatever version is held,
    /// including versions adopted from peers.
    pub fn put(
        &mut self,
        key: StigKey,
        value: StigValue,
        self_id: u16,
    ) -> Result<(StigEntry, StigRecord), StigError> {
        key.validate()?;
        value.validate()?;
        // 16-bit clock saturates rather than wrapping so versions never go backwards.
        let lamport = self
            .entries
            .get(&key)
            .map_or(1, |e| e.lamport.saturating_add(1));
        let entry = StigEntry {
            key: key.clone(),
            value,
            lamport,
            writer: self_id,
        };
        self.entries.insert(key, entry.clone());
        let record = StigRecord::Put {
            table_id: self.id,
            entry: entry.clone(),
        };
        Ok((entry, record))
    }

    /// Read locally. A miss yields a query so that holders answer.
    pub fn get(&self, key: &StigKey) -> (Option<&StigValue>, Option<StigRecord>) {
        match self.entries.get(key) {
            Some(e) => (Some(&e.value), None),
            None => (
                None,
                Some(StigRecord::Query {
                    table_id: self.id,
                    key: key.clone(),
                    lamport: 0,
                }),
            ),
        }
    }

    /// Apply a received version. Returns the decision and the record to
    /// broadcast, if any. Adopted entries are stored verbatim.
    pub fn on_put(&mut self, incoming: &StigEntry) -> (PutDecision, Option<StigRecord>) {
        let decision = resolve(self.entries.get(&incoming.key), incoming);
        let out = match decision {
            PutDecision::AdoptAndRebroadcast => {
                self.entries.insert(incoming.key.clone(), incoming.clone());
                Some(StigRecord::Put {
                    table_id: self.id,
                    entry: incoming.clone(),
                })
            }
            PutDecision::Ignore => None,
            PutDecision::RespondWithLocal => self.advertise(&incoming.key),
        };
        (decision, out)
    }

    pub fn on_query(&self, key: &StigKey, lamport: u16) -> Option<StigRecord> {
        self.entries
            .get(key)
            .filter(|e| e.lamport > lamport)
            .map(|e| StigRecord::Put {
                table_id: self.id,
                entry: e.clone(),
            })
    }

    /// Re-broadcast the held version of `key`, if any.
    pub fn advertise(&self, key: &StigKey) -> Option<StigRecord> {
        self.entries.get(key).map(|e| StigRecord::Put {
            table_id: self.id,
            entry: e.clone(),
        })
    }

    /// Dispatch any record addressed to this table.
    pub fn handle(&mut self, record: &StigRecord) -> Option<StigRecord> {
        match record {
            StigRecord::Put { table_id, entry } if *table_id == self.id => self.on_put(entry).1,
            StigRecord::Query {
                table_id,
                key,
                lamport,
            } if *table_id == self.id => self.on_query(key, *lamport),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(key: u16, value: i32, lamport: u16, writer: u16) -> StigEntry {
        StigEntry {
            key: StigKey::Int(key),
            value: StigValue::Int(value),
            lamport,
            writer,
        }
    }

    #[test]
    fn create_is_empty() {
        let t = StigTable::create(0);
        assert_eq!(t.id(), 0);
        assert_eq!(t.size(), 0);
    }

    #[test]
    fn first_put_and_increment() {
        let mut t = StigTable::create(0);
        let d = StigKey::text("d").unwrap();
        let (e, rec) = t.put(d.clone(), 1.into(), 3).unwrap();
        assert_eq!((e.lamport, e.writer), (1, 3));
        assert_eq!(rec.table_id(), 0);
        let (e, _) = t.put(d, 1.into(), 3).unwrap();
        assert_eq!(e.lamport, 2);
    }

    #[test]
    fn put_after_remote_version_continues_clock() {
        let mut t = StigTable::create(0);
        t.on_put(&entry(1, 9, 4, 7));
        let (e, _) = t.put(StigKey::Int(1), 2.into(), 3).unwrap();
        assert_eq!((e.lamport, e.writer), (5, 3));
    }

    #[test]
    fn oversized_inputs_rejected() {
        let mut t = StigTable::create(0);
        assert_eq!(StigKey::text(&"k".repeat(16)), Err(StigError::KeyTooLong(16)));
        assert_eq!(StigKey::text(""), Err(StigError::EmptyKey));
        let err = t
            .put(StigKey::Int(1), StigValue::Text("v".repeat(33)), 1)
            .unwrap_err();
        assert_eq!(err, StigError::ValueTooLong(33));
        assert!(t.put(StigKey::Int(1), StigValue::Real(f64::NAN), 1).is_err());
        assert_eq!(t.size(), 0);
    }

    #[test]
    fn get_hit_and_miss() {
        let mut t = StigTable::create(2);
        t.put(StigKey::Int(4), 11.into(), 1).unwrap();
        let (v, q) = t.get(&StigKey::Int(4));
        assert_eq!(v, Some(&StigValue::Int(11)));
        assert!(q.is_none());
        let (v, q) = t.get(&StigKey::Int(5));
        assert!(v.is_none());
        assert_eq!(
            q,
            Some(StigRecord::Query {
                table_id: 2,
                key: StigKey::Int(5),
                lamport: 0
            })
        );
    }

    #[test]
    fn on_put_decisions() {
        let mut t = StigTable::create(0);
        let (d, out) = t.on_put(&entry(1, 1, 1, 2));
        assert_eq!(d, PutDecision::AdoptAndRebroadcast);
        assert!(out.is_some());

        // equal clock, higher writer wins
        let mut t = StigTable::create(0);
        t.on_put(&entry(1, 5, 2, 1));
        let (d, _) = t.on_put(&entry(1, 7, 2, 4));
        assert_eq!(d, PutDecision::AdoptAndRebroadcast);
        assert_eq!(t.entry(&StigKey::Int(1)).unwrap().value, StigValue::Int(7));
        // clock is not bumped on adoption
        assert_eq!(t.entry(&StigKey::Int(1)).unwrap().lamport, 2);
        let (d, out) = t.on_put(&entry(1, 7, 2, 4));
        assert_eq!(d, PutDecision::Ignore);
        assert!(out.is_none());
        let (d, out) = t.on_put(&entry(1, 5, 2, 1));
        assert_eq!(d, PutDecision::RespondWithLocal);
        assert_eq!(
            out,
            Some(StigRecord::Put {
                table_id: 0,
                entry: entry(1, 7, 2, 4)
            })
        );
    }

    #[test]
    fn stale_peer_gets_local_version() {
        let mut t = StigTable::create(0);
        t.on_put(&entry(1, 3, 3, 1));
        let (d, out) = t.on_put(&entry(1, 0, 1, 9));
        assert_eq!(d, PutDecision::RespondWithLocal);
        assert_eq!(t.entry(&StigKey::Int(1)).unwrap().lamport, 3);
        assert!(matches!(out, Some(StigRecord::Put { entry, .. }) if entry.lamport == 3));
    }

    #[test]
    fn on_query_answers_only_when_newer() {
        let mut t = StigTable::create(0);
        assert!(t.on_query(&StigKey::Int(1), 0).is_none());
        t.put(StigKey::Int(1), 1.into(), 1).unwrap();
        t.put(StigKey::Int(1), 1.into(), 1).unwrap();
        assert!(t.on_query(&StigKey::Int(1), 0).is_some());
        let mut t = StigTable::create(0);
        t.put(StigKey::Int(1), 1.into(), 1).unwrap();
        assert!(t.on_query(&StigKey::Int(1), 1).is_none());
    }

    #[test]
    fn records_for_other_tables_are_ignored() {
        let mut t = StigTable::create(1);
        let rec = StigRecord::Put {
            table_id: 0,
            entry: entry(1, 1, 1, 1),
        };
        assert!(t.handle(&rec).is_none());
        assert_eq!(t.size(), 0);
    }

    #[test]
    fn size_counts_distinct_keys() {
        let mut t = StigTable::create(0);
        for k in [1u16, 2, 3, 4, 2] {
            t.put(StigKey::Int(k), 1.into(), 1).unwrap();
        }
        assert_eq!(t.size(), 4);
    }

    #[test]
    fn wire_sizes() {
        let put = StigRecord::Put {
            table_id: 0,
            entry: entry(3, 1, 1, 3),
        };
        // tag, table, key(1+2), value(1+4), lamport, writer
        assert_eq!(put.wire_size(), 1 + 1 + 3 + 5 + 2 + 2);
        let q = StigRecord::Query {
            table_id: 0,
            key: StigKey::text("d").unwrap(),
            lamport: 0,
        };
        assert_eq!(q.wire_size(), 1 + 1 + 3 + 2);
        let worst = StigRecord::Put {
            table_id: 0,
            entry: StigEntry {
                key: StigKey::Text("k".repeat(MAX_KEY_TEXT)),
                value: StigValue::Text("v".repeat(MAX_VALUE_TEXT)),
                lamport: 1,
                writer: 1,
            },
        };
        assert_eq!(worst.wire_size(), 57);
    }
}
