//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeSet, HashSet};

use swarmstig::stigmergy::{StigEntry, StigKey, StigRecord, StigTable, StigValue};

/// A record on its way to `dest`, and how many extra copies it may still
/// produce.
#[derive(Debug, Clone)]
struct InFlight {
    dest: usize,
    record: StigRecord,
    copies: u8,
}

#[derive(Debug, Clone)]
struct Net {
    tables: Vec<StigTable>,
    flight: Vec<InFlight>,
}

/// Compact form of one entry: key index, lamport, writer, value.
type Sig = (usize, u16, u16, i32);
type StateKey = (Vec<Vec<Sig>>, Vec<(usize, Sig, u8)>);

fn sig(keys: &[StigKey], e: &StigEntry) -> Sig {
    let k = keys.iter().position(|k| *k == e.key).expect("known key");
    (k, e.lamport, e.writer, e.value.as_int().expect("integer values"))
}

impl Net {
    fn key(&self, keys: &[StigKey]) -> StateKey {
        let tables = self
            .tables
            .iter()
            .map(|t| t.entries().map(|e| sig(keys, e)).collect())
            .collect();
        let mut flight: Vec<(usize, Sig, u8)> = self
            .flight
            .iter()
            .map(|m| match &m.record {
                StigRecord::Put { entry, .. } => (m.dest, sig(keys, entry), m.copies),
                StigRecord::Query { .. } => unreachable!("puts only answer with puts"),
            })
            .collect();
        flight.sort_unstable();
        (tables, flight)
    }

    fn broadcast(&mut self, from: usize, record: StigRecord, copies: u8) {
        for dest in (0..self.tables.len()).filter(|d| *d != from) {
            self.flight.push(InFlight {
                dest,
                record: record.clone(),
                copies,
            });
        }
    }
}

#[derive(Debug, Default)]
pub struct Exploration {
    /// Distinct final table sets, one entry list per replica.
    pub finals: BTreeSet<Vec<Vec<String>>>,
    pub states: usize,
    pub terminals: usize,
}

/// One write: replica index, key, integer value. Writes are applied in
/// order before anything is delivered, so writes by different replicas
/// are concurrent.
pub type Write = (usize, StigKey, i32);

/// Enumerate every delivery order of the broadcasts caused by `writes`
/// among `replicas` replicas. With `duplicate`, each original broadcast
/// may also be delivered twice; rebroadcasts and replies arrive once.
pub fn explore(replicas: usize, writes: &[Write], duplicate: bool) -> Exploration {
    let mut net = Net {
        tables: vec![StigTable::create(0); replicas],
        flight: Vec::new(),
    };
    let mut keys: Vec<StigKey> = Vec::new();
    for (who, key, value) in writes {
        if !keys.contains(key) {
            keys.push(key.clone());
        }
        let (_, rec) = net.tables[*who]
            .put(key.clone(), StigValue::Int(*value), *who as u16 + 1)
            .unwrap();
        net.broadcast(*who, rec, u8::from(duplicate));
    }
    let mut seen = HashSet::new();
    let mut out = Exploration::default();
    walk(net, &keys, &mut seen, &mut out);
    out
}

fn snapshot(tables: &[StigTable]) -> Vec<Vec<String>> {
    tables
        .iter()
        .map(|t| t.entries().map(|e| format!("{e:?}")).collect())
        .collect()
}

fn walk(net: Net, keys: &[StigKey], seen: &mut HashSet<StateKey>, out: &mut Exploration) {
    if !seen.insert(net.key(keys)) {
        return;
    }
    out.states += 1;
    if net.flight.is_empty() {
        out.terminals += 1;
        out.finals.insert(snapshot(&net.tables));
        return;
    }
    for i in 0..net.flight.len() {
        let msg = net.flight[i].clone();
        for keep in [false, true] {
            if keep && msg.copies == 0 {
                continue;
            }
            let mut next = net.clone();
            if keep {
                next.flight[i].copies -= 1;
            } else {
                next.flight.swap_remove(i);
            }
            if let Some(reply) = next.tables[msg.dest].handle(&msg.record) {
                next.broadcast(msg.dest, reply, 0);
            }
            walk(next, keys, seen, out);
        }
    }
}

/// Winner among concurrent writes by hand: highest lamport, then highest
/// writer. All writes here are first writes, so lamport is 1 unless the
/// same replica wrote the key before.
pub fn expected_entry(writes: &[Write], key: &StigKey) -> Option<StigEntry> {
    let mut best: Option<StigEntry> = None;
    let mut clocks: Vec<(usize, u16)> = Vec::new();
    for (who, k, value) in writes.iter().filter(|(_, k, _)| k == key) {
        let lamport = match clocks.iter_mut().find(|(w, _)| w == who) {
            Some((_, c)) => {
                *c += 1;
                *c
            }
            None => {
                clocks.push((*who, 1));
                1
            }
        };
        let entry = StigEntry {
            key: k.clone(),
            value: StigValue::Int(*value),
            lamport,
            writer: *who as u16 + 1,
        };
        let better = best
            .as_ref()
            .is_none_or(|b| (lamport, entry.writer) > (b.lamport, b.writer));
        if better {
            best = Some(entry);
        }
    }
    best
}

/// Call index (1-based) at which a lone barrier robot reports a timeout,
/// stepping the timer by hand: each call compares before incrementing.
pub fn timeout_call(timeout: u32) -> u32 {
    let mut timer = 0;
    let mut call = 0;
    loop {
        call += 1;
        if timer >= timeout {
            return call;
        }
        timer += 1;
    }
}
