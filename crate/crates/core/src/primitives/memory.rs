use std::hash::{Hash, Hasher};

use super::{Action, Object, ObjectId, ObjectKind, ObjectState, Pid, Response};
use crate::error::{Error, Result};

/// Compact handle to one shared object inside a [`Memory`] layout.
///
/// `index` is 0 for scalar objects and 1-based for array cells.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ObjRef {
    pub group: u16,
    pub index: u32,
}

impl ObjRef {
    pub const fn scalar(group: u16) -> Self {
        ObjRef { group, index: 0 }
    }

    pub const fn cell(group: u16, index: u32) -> Self {
        ObjRef { group, index }
    }
}

/// Anything the step machines can run against: the virtual memory or a
/// view of the native atomic backend.
pub trait SharedMemory {
    fn apply(&mut self, obj: ObjRef, action: &Action, actor: Pid) -> Result<Response>;

    /// Reads an object's full state without taking a step. Backends that
    /// cannot observe state without racing return `None`.
    fn peek(&self, obj: ObjRef) -> Option<ObjectState>;
}

/// A named scalar object or array of objects.
#[derive(Clone, Debug)]
pub struct Group {
    pub name: &'static str,
    pub kind: ObjectKind,
    pub is_array: bool,
    /// Growable arrays stand in for unbounded arrays.
    pub growable: bool,
    init: ObjectState,
    cells: Vec<ObjectState>,
}

impl Group {
    /// Number of materialized cells (arrays) or 1 (scalars).
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn initial_state(&self) -> &ObjectState {
        &self.init
    }

    fn significant(&self) -> &[ObjectState] {
        if !self.growable {
            return &self.cells;
        }
        let keep = self.cells.iter().rposition(|c| *c != self.init).map_or(0, |p| p + 1);
        &self.cells[..keep]
    }
}

/// The virtual shared memory of one algorithm instance.
///
/// Equality and hashing ignore untouched cells at the tail of growable
/// arrays, so two memories that differ only in how far an infinite array
/// has been materialized compare equal.
#[derive(Clone, Debug)]
pub struct Memory {
    processes: usize,
    groups: Vec<Group>,
}

impl Memory {
    pub fn new(processes: usize) -> Self {
        Memory {
            processes,
            groups: Vec::new(),
        }
    }

    pub fn processes(&self) -> usize {
        self.processes
    }

    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    pub fn add_scalar(&mut self, name: &'static str, kind: ObjectKind, init: Option<ObjectState>) -> ObjRef {
        let init = init.unwrap_or_else(|| ObjectState::initial(kind, self.processes));
        self.groups.push(Group {
            name,
            kind,
            is_array: false,
            growable: false,
            cells: vec![init.clone()],
            init,
        });
        ObjRef::scalar((self.groups.len() - 1) as u16)
    }

    /// Adds an array; `len = None` makes it growable (infinite).
    pub fn add_array(&mut self, name: &'static str, kind: ObjectKind, len: Option<usize>) -> u16 {
        let init = ObjectState::initial(kind, self.processes);
        self.groups.push(Group {
            name,
            kind,
            is_array: true,
            growable: len.is_none(),
            cells: vec![init.clone(); len.unwrap_or(4)],
            init,
        });
        (self.groups.len() - 1) as u16
    }

    /// Overrides the initial value of one object (e.g. `TS[1] = 1`).
    pub fn set_state(&mut self, obj: ObjRef, state: ObjectState) -> Result<()> {
        let slot = self.slot_mut(obj)?;
        *slot = state;
        Ok(())
    }

    pub fn id(&self, obj: ObjRef) -> ObjectId {
        let g = &self.groups[obj.group as usize];
        ObjectId {
            kind: g.kind,
            name: g.name,
            index: g.is_array.then_some(obj.index),
        }
    }

    pub fn resolve(&self, id: &ObjectId) -> Result<ObjRef> {
        let (gi, g) = self
            .groups
            .iter()
            .enumerate()
            .find(|(_, g)| g.name == id.name)
            .ok_or_else(|| Error::usage(format!("unknown object {id}")))?;
        let obj = match (g.is_array, id.index) {
            (false, None) => ObjRef::scalar(gi as u16),
            (true, Some(i)) if i >= 1 && (g.growable || (i as usize) <= g.cells.len()) => ObjRef::cell(gi as u16, i),
            _ => return Err(Error::usage(format!("unknown object {id}"))),
        };
        Ok(obj)
    }

    /// Parses `Name` or `Name[i]` into a handle.
    pub fn resolve_token(&self, tok: &str) -> Result<ObjRef> {
        let (name, index) = match tok.split_once('[') {
            Some((name, rest)) => {
                let i = rest
                    .strip_suffix(']')
                    .and_then(|s| s.parse::<u32>().ok())
                    .ok_or_else(|| Error::usage(format!("bad object `{tok}`")))?;
                (name, Some(i))
            }
            None => (tok, None),
        };
        let g = self
            .groups
            .iter()
            .find(|g| g.name == name)
            .ok_or_else(|| Error::usage(format!("unknown object `{tok}`")))?;
        self.resolve(&ObjectId {
            kind: g.kind,
            name: g.name,
            index,
        })
    }

    /// Current state of an object; cells of growable arrays that were never
    /// touched report their initial state.
    pub fn state(&self, obj: ObjRef) -> Result<&ObjectState> {
        let g = self
            .groups
            .get(obj.group as usize)
            .ok_or_else(|| Error::usage(format!("unknown object group {}", obj.group)))?;
        if !g.is_array {
            return Ok(&g.cells[0]);
        }
        if obj.index == 0 {
            return Err(Error::usage(format!("{} is indexed from 1", g.name)));
        }
        match g.cells.get(obj.index as usize - 1) {
            Some(s) => Ok(s),
            None if g.growable => Ok(&g.init),
            None => Err(Error::usage(format!("{}[{}] is out of range", g.name, obj.index))),
        }
    }

    /// Copy of an object's full state.
    pub fn snapshot(&self, id: &ObjectId) -> Result<ObjectState> {
        let obj = self.resolve(id)?;
        self.state(obj).cloned()
    }

    pub fn apply_id(&mut self, id: &ObjectId, action: &Action, actor: Pid) -> Result<Response> {
        let obj = self.resolve(id)?;
        self.apply(obj, action, actor)
    }

    fn slot_mut(&mut self, obj: ObjRef) -> Result<&mut ObjectState> {
        let g = self
            .groups
            .get_mut(obj.group as usize)
            .ok_or_else(|| Error::usage(format!("unknown object group {}", obj.group)))?;
        if !g.is_array {
            return Ok(&mut g.cells[0]);
        }
        if obj.index == 0 {
            return Err(Error::usage(format!("{} is indexed from 1", g.name)));
        }
        let idx = obj.index as usize - 1;
        if idx >= g.cells.len() {
            if !g.growable {
                return Err(Error::usage(format!("{}[{}] is out of range", g.name, obj.index)));
            }
            let new_len = (g.cells.len() * 2).max(idx + 1);
            g.cells.resize(new_len, g.init.clone());
        }
        Ok(&mut g.cells[idx])
    }

    pub fn apply(&mut self, obj: ObjRef, action: &Action, actor: Pid) -> Result<Response> {
        let kind = self
            .groups
            .get(obj.group as usize)
            .map(|g| g.kind)
            .ok_or_else(|| Error::usage(format!("unknown object group {}", obj.group)))?;
        let slot = self.slot_mut(obj)?;
        let mut o = Object::with_state(kind, std::mem::replace(slot, ObjectState::Bit(0)));
        let r = o.apply(action, actor);
        *slot = o.state;
        r
    }
}

impl SharedMemory for Memory {
    fn apply(&mut self, obj: ObjRef, action: &Action, actor: Pid) -> Result<Response> {
        Memory::apply(self, obj, action, actor)
    }

    fn peek(&self, obj: ObjRef) -> Option<ObjectState> {
        self.state(obj).ok().cloned()
    }
}

impl PartialEq for Memory {
    fn eq(&self, other: &Self) -> bool {
        self.processes == other.processes
            && self.groups.len() == other.groups.len()
            && self
                .groups
                .iter()
                .zip(&other.groups)
                .all(|(a, b)| a.name == b.name && a.significant() == b.significant())
    }
}

impl Eq for Memory {}

impl Hash for Memory {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.processes.hash(state);
        for g in &self.groups {
            g.significant().hash(state);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primitives::Value;
    use std::collections::hash_map::DefaultHasher;

    fn hash_of(m: &Memory) -> u64 {
        let mut h = DefaultHasher::new();
        m.hash(&mut h);
        h.finish()
    }

    #[test]
    fn growable_arrays_extend_on_demand() {
        let mut m = Memory::new(1);
        let items = m.add_array("Items", ObjectKind::Register, None);
        m.apply(ObjRef::cell(items, 9), &Action::Write(Value::Int(5)), 0)
            .unwrap();
        assert!(m.groups()[items as usize].len() >= 9);
        assert_eq!(
            m.state(ObjRef::cell(items, 9)).unwrap(),
            &ObjectState::Register(Value::Int(5))
        );
        assert_eq!(
            m.state(ObjRef::cell(items, 1000)).unwrap(),
            &ObjectState::Register(Value::Bottom)
        );
    }

    #[test]
    fn fixed_arrays_reject_out_of_range() {
        let mut m = Memory::new(1);
        let ts = m.add_array("TS", ObjectKind::ResettableTestAndSet, Some(3));
        assert!(m.apply(ObjRef::cell(ts, 4), &Action::TestAndSet, 0).is_err());
        assert!(m.apply(ObjRef::cell(ts, 0), &Action::TestAndSet, 0).is_err());
        assert!(m.apply(ObjRef::cell(ts, 3), &Action::TestAndSet, 0).is_ok());
    }

    #[test]
    fn equality_ignores_untouched_tail() {
        let mut a = Memory::new(1);
        let ga = a.add_array("Items", ObjectKind::Register, None);
        let mut b = a.clone();
        a.apply(ObjRef::cell(ga, 2), &Action::Write(Value::Int(1)), 0).unwrap();
        b.apply(ObjRef::cell(ga, 2), &Action::Write(Value::Int(1)), 0).unwrap();
        b.apply(ObjRef::cell(ga, 40), &Action::Read, 0).unwrap();
        assert_eq!(a, b);
        assert_eq!(hash_of(&a), hash_of(&b));
    }

    #[test]
    fn resolves_tokens_and_snapshots() {
        let mut m = Memory::new(2);
        let done = m.add_scalar("Done", ObjectKind::AbaRegister, None);
        let ts = m.add_array("TS", ObjectKind::ResettableTestAndSet, Some(3));
        m.set_state(ObjRef::cell(ts, 1), ObjectState::Bit(1)).unwrap();
        assert_eq!(m.resolve_token("Done").unwrap(), done);
        assert_eq!(m.resolve_token("TS[1]").unwrap(), ObjRef::cell(ts, 1));
        assert!(m.resolve_token("TS[4]").is_err());
        assert!(m.resolve_token("Nope").is_err());
        let id = m.id(ObjRef::cell(ts, 1));
        assert_eq!(id.to_string(), "TS[1]");
        assert_eq!(m.snapshot(&id).unwrap(), ObjectState::Bit(1));
        m.apply(done, &Action::DWrite, 0).unwrap();
        m.apply(done, &Action::DWrite, 1).unwrap();
        match m.snapshot(&m.id(done)).unwrap() {
            ObjectState::Aba { write_epoch, .. } => assert_eq!(write_epoch, 2),
            s => panic!("unexpected {s:?}"),
        }
    }
}
