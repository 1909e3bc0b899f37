use std::sync::atomic::{AtomicU64, Ordering::SeqCst};

use super::{
    Action, IndexSet, Memory, ObjRef, ObjectKind, ObjectState, Pid, Response, SharedMemory, Value, MAX_ELEMENT,
};
use crate::error::{Error, Result};

const BOTTOM: u64 = u64::MAX;
const SET_TAG: u64 = 1 << 63;
const NEVER: u64 = u64::MAX;

fn encode(v: Value) -> Result<u64> {
    match v {
        Value::Bottom => Ok(BOTTOM),
        Value::Int(x) if x <= MAX_ELEMENT => Ok(x),
        Value::Int(x) => Err(Error::usage(format!("value {x} does not fit a native register"))),
        Value::Set(s) if s.contains(IndexSet::MAX_INDEX) => Err(Error::usage(format!(
            "native set registers hold indices up to {}",
            IndexSet::MAX_INDEX - 1
        ))),
        Value::Set(s) => Ok(SET_TAG | (s.bits() >> 1)),
    }
}

fn decode(w: u64) -> Value {
    if w == BOTTOM {
        Value::Bottom
    } else if w & SET_TAG != 0 {
        Value::Set(IndexSet::from_bits((w & !SET_TAG) << 1))
    } else {
        Value::Int(w)
    }
}

enum Cell {
    Word(AtomicU64),
    Aba {
        epoch: AtomicU64,
        // Only process p touches last_seen[p]; atomics keep it Sync.
        last_seen: Box<[AtomicU64]>,
    },
}

impl Cell {
    fn from_state(state: &ObjectState) -> Result<Cell> {
        Ok(match state {
            ObjectState::Register(v) => Cell::Word(AtomicU64::new(encode(*v)?)),
            ObjectState::Bit(b) => Cell::Word(AtomicU64::new(*b as u64)),
            ObjectState::Counter(c) => Cell::Word(AtomicU64::new(*c)),
            ObjectState::Aba { write_epoch, last_seen } => Cell::Aba {
                epoch: AtomicU64::new(*write_epoch),
                last_seen: last_seen.iter().map(|s| AtomicU64::new(s.unwrap_or(NEVER))).collect(),
            },
        })
    }
}

struct NativeGroup {
    name: &'static str,
    kind: ObjectKind,
    is_array: bool,
    cells: Vec<Cell>,
}

/// Lock-free counterpart of [`Memory`]: every object transition is a single
/// sequentially consistent hardware atomic.
///
/// Growable arrays are preallocated to a fixed capacity; touching a cell
/// past it is a usage error.
pub struct NativeMemory {
    groups: Vec<NativeGroup>,
}

impl NativeMemory {
    /// Mirrors `layout` (including any overridden initial states), giving
    /// each growable array `capacity` cells.
    pub fn from_layout(layout: &Memory, capacity: usize) -> Result<Self> {
        let mut groups = Vec::with_capacity(layout.groups().len());
        for (gi, g) in layout.groups().iter().enumerate() {
            let len = if !g.is_array {
                1
            } else if g.growable {
                capacity.max(g.len())
            } else {
                g.len()
            };
            let mut cells = Vec::with_capacity(len);
            for i in 0..len {
                let obj = if g.is_array {
                    ObjRef::cell(gi as u16, i as u32 + 1)
                } else {
                    ObjRef::scalar(gi as u16)
                };
                cells.push(Cell::from_state(layout.state(obj)?)?);
            }
            groups.push(NativeGroup {
                name: g.name,
                kind: g.kind,
                is_array: g.is_array,
                cells,
            });
        }
        Ok(NativeMemory { groups })
    }

    pub fn view(&self) -> NativeView<'_> {
        NativeView { mem: self }
    }

    fn cell(&self, obj: ObjRef) -> Result<(&NativeGroup, &Cell)> {
        let g = self
            .groups
            .get(obj.group as usize)
            .ok_or_else(|| Error::usage(format!("unknown object group {}", obj.group)))?;
        let idx = if g.is_array {
            if obj.index == 0 {
                return Err(Error::usage(format!("{} is indexed from 1", g.name)));
            }
            obj.index as usize - 1
        } else {
            0
        };
        let cell = g.cells.get(idx).ok_or_else(|| {
            Error::usage(format!(
                "{}[{}] is beyond the native capacity of {}",
                g.name,
                obj.index,
                g.cells.len()
            ))
        })?;
        Ok((g, cell))
    }

    pub fn apply(&self, obj: ObjRef, action: &Action, actor: Pid) -> Result<Response> {
        let (g, cell) = self.cell(obj)?;
        if !g.kind.allows(action) {
            return Err(Error::usage(format!(
                "action {} is not supported by {:?}",
                action.name(),
                g.kind
            )));
        }
        let resp = match (cell, g.kind, action) {
            (Cell::Word(w), ObjectKind::Register | ObjectKind::SetRegister, Action::Read) => {
                Response::Value(decode(w.load(SeqCst)))
            }
            (Cell::Word(w), kind, Action::Write(v)) => {
                let ok = match (kind, v) {
                    (ObjectKind::Register, Value::Set(_)) => false,
                    (ObjectKind::SetRegister, Value::Set(_)) => true,
                    (ObjectKind::SetRegister, _) => false,
                    _ => true,
                };
                if !ok {
                    return Err(Error::usage(format!("value {v} is outside the universe of {kind:?}")));
                }
                w.store(encode(*v)?, SeqCst);
                Response::Ack
            }
            (Cell::Word(w), _, Action::TestAndSet) => Response::Bit(w.swap(1, SeqCst) as u8),
            (Cell::Word(w), _, Action::Reset) => {
                w.store(0, SeqCst);
                Response::Ack
            }
            (Cell::Word(w), ObjectKind::ResettableTestAndSet, Action::Read) => Response::Bit(w.load(SeqCst) as u8),
            (Cell::Word(w), _, Action::FetchAndIncrement) => Response::Count(w.fetch_add(1, SeqCst)),
            (Cell::Word(w), ObjectKind::FetchAndIncrement, Action::Read) => Response::Count(w.load(SeqCst)),
            (Cell::Aba { epoch, .. }, _, Action::DWrite) => {
                epoch.fetch_add(1, SeqCst);
                Response::Ack
            }
            (Cell::Aba { epoch, last_seen }, _, Action::DRead) => {
                let slot = last_seen
                    .get(actor)
                    .ok_or_else(|| Error::usage(format!("process {actor} is unknown to this ABA register")))?;
                let now = epoch.load(SeqCst);
                let seen = slot.load(SeqCst);
                slot.store(now, SeqCst);
                Response::Flag(seen != NEVER && now > seen)
            }
            _ => return Err(Error::usage(format!("{} cannot take action {}", g.name, action.name()))),
        };
        Ok(resp)
    }
}

/// Per-thread handle implementing [`SharedMemory`] over a [`NativeMemory`].
#[derive(Clone, Copy)]
pub struct NativeView<'a> {
    mem: &'a NativeMemory,
}

impl SharedMemory for NativeView<'_> {
    fn apply(&mut self, obj: ObjRef, action: &Action, actor: Pid) -> Result<Response> {
        self.mem.apply(obj, action, actor)
    }

    fn peek(&self, _obj: ObjRef) -> Option<ObjectState> {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encoding_round_trips() {
        for v in [
            Value::Bottom,
            Value::Int(0),
            Value::Int(MAX_ELEMENT),
            Value::Set(IndexSet::empty()),
            Value::Set([1, 5, 62].into_iter().collect()),
        ] {
            assert_eq!(decode(encode(v).unwrap()), v);
        }
        assert!(encode(Value::Int(MAX_ELEMENT + 1)).is_err());
        assert!(encode(Value::Set([63].into_iter().collect())).is_err());
    }

    #[test]
    fn matches_virtual_memory() {
        let mut m = Memory::new(2);
        let items = m.add_array("Items", ObjectKind::Register, None);
        let ts = m.add_array("TS", ObjectKind::ResettableTestAndSet, Some(3));
        let alloc = m.add_scalar("Allocated", ObjectKind::SetRegister, None);
        let done = m.add_scalar("Done", ObjectKind::AbaRegister, None);
        let max = m.add_scalar("Max", ObjectKind::FetchAndIncrement, None);
        m.set_state(ObjRef::cell(ts, 1), ObjectState::Bit(1)).unwrap();
        let native = NativeMemory::from_layout(&m, 8).unwrap();
        let mut view = native.view();
        let script: Vec<(ObjRef, Action, Pid)> = vec![
            (ObjRef::cell(ts, 1), Action::TestAndSet, 1),
            (ObjRef::cell(ts, 2), Action::TestAndSet, 1),
            (ObjRef::cell(ts, 2), Action::Read, 0),
            (ObjRef::cell(ts, 2), Action::Reset, 0),
            (ObjRef::cell(ts, 2), Action::Read, 1),
            (ObjRef::cell(items, 7), Action::Write(Value::Int(9)), 0),
            (ObjRef::cell(items, 7), Action::Read, 1),
            (alloc, Action::Write(Value::Set([2, 3].into_iter().collect())), 0),
            (alloc, Action::Read, 1),
            (done, Action::DRead, 1),
            (done, Action::DWrite, 0),
            (done, Action::DRead, 1),
            (done, Action::DRead, 1),
            (max, Action::FetchAndIncrement, 0),
            (max, Action::Read, 1),
        ];
        for (obj, action, pid) in script {
            let expected = m.apply(obj, &action, pid).unwrap();
            assert_eq!(view.apply(obj, &action, pid).unwrap(), expected, "{obj:?} {action:?}");
        }
        assert!(view.apply(ObjRef::cell(items, 9), &Action::Read, 0).is_err());
        assert!(view.apply(max, &Action::Reset, 0).is_err());
    }
}
