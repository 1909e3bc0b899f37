//! Atomic base objects: registers, (resettable, readable) test&set,
//! readable fetch&increment, and the restricted ABA-detecting register.
//!
//! Every object changes state only through [`Object::apply`], which performs
//! one indivisible transition and returns the operation's response. The
//! virtual [`Memory`] serializes all calls by construction; the
//! [`NativeMemory`] backend maps each transition onto a single hardware
//! atomic so the same step machines can run under real parallelism.

mod memory;
mod native;

use std::fmt;

pub use memory::{Group, Memory, ObjRef, SharedMemory};
pub use native::{NativeMemory, NativeView};

use crate::error::{Error, Result};

/// Process identifier. Producers are process 0 in the single-producer
/// algorithms; consumers are 1..=n.
pub type Pid = usize;

/// Largest element value that fits the native register encoding.
pub const MAX_ELEMENT: u64 = (1 << 62) - 1;

/// A set of 1-based cell indices, stored as a bitmask (indices 1..=63).
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IndexSet(u64);

impl IndexSet {
    pub const MAX_INDEX: u32 = 63;

    pub const fn empty() -> Self {
        IndexSet(0)
    }

    /// `{1, ..., k}`.
    pub fn range(k: u32) -> Self {
        assert!(k <= Self::MAX_INDEX, "index set capacity exceeded");
        if k == 0 {
            IndexSet(0)
        } else {
            IndexSet(((1u64 << k) - 1) << 1)
        }
    }

    pub fn from_bits(bits: u64) -> Self {
        IndexSet(bits & !1)
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn contains(self, i: u32) -> bool {
        (1..=Self::MAX_INDEX).contains(&i) && self.0 & (1 << i) != 0
    }

    pub fn insert(&mut self, i: u32) {
        assert!((1..=Self::MAX_INDEX).contains(&i), "index {i} out of range");
        self.0 |= 1 << i;
    }

    pub fn remove(&mut self, i: u32) {
        if (1..=Self::MAX_INDEX).contains(&i) {
            self.0 &= !(1 << i);
        }
    }

    pub fn union(self, other: Self) -> Self {
        IndexSet(self.0 | other.0)
    }

    pub fn intersect(self, other: Self) -> Self {
        IndexSet(self.0 & other.0)
    }

    pub fn minus(self, other: Self) -> Self {
        IndexSet(self.0 & !other.0)
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn first(self) -> Option<u32> {
        (self.0 != 0).then(|| self.0.trailing_zeros())
    }

    /// Indices in ascending order.
    pub fn iter(self) -> impl Iterator<Item = u32> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                return None;
            }
            let i = bits.trailing_zeros();
            bits &= bits - 1;
            Some(i)
        })
    }
}

impl FromIterator<u32> for IndexSet {
    fn from_iter<T: IntoIterator<Item = u32>>(iter: T) -> Self {
        let mut s = IndexSet::empty();
        for i in iter {
            s.insert(i);
        }
        s
    }
}

impl fmt::Debug for IndexSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for IndexSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (k, i) in self.iter().enumerate() {
            if k > 0 {
                f.write_str(",")?;
            }
            write!(f, "{i}")?;
        }
        f.write_str("}")
    }
}

/// A register value: an element (or index), the reserved bottom, or an
/// index set (only for set-valued registers).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Value {
    Bottom,
    Int(u64),
    Set(IndexSet),
}

impl Value {
    pub fn is_bottom(self) -> bool {
        matches!(self, Value::Bottom)
    }

    pub fn as_int(self) -> Option<u64> {
        match self {
            Value::Int(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_set(self) -> Option<IndexSet> {
        match self {
            Value::Set(s) => Some(s),
            _ => None,
        }
    }

    pub fn parse(tok: &str) -> Result<Value, String> {
        if tok == "_" {
            return Ok(Value::Bottom);
        }
        if let Some(inner) = tok.strip_prefix('{').and_then(|t| t.strip_suffix('}')) {
            let mut set = IndexSet::empty();
            for part in inner.split(',').filter(|p| !p.is_empty()) {
                let i: u32 = part.parse().map_err(|_| format!("bad set member `{part}`"))?;
                if !(1..=IndexSet::MAX_INDEX).contains(&i) {
                    return Err(format!("set member {i} out of range"));
                }
                set.insert(i);
            }
            return Ok(Value::Set(set));
        }
        tok.parse().map(Value::Int).map_err(|_| format!("bad value `{tok}`"))
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bottom => f.write_str("_"),
            Value::Int(v) => write!(f, "{v}"),
            Value::Set(s) => write!(f, "{s}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ObjectKind {
    /// Read/write register over elements, indices and bottom.
    Register,
    /// Read/write register holding an index set.
    SetRegister,
    /// Plain test&set (t&s only).
    TestAndSet,
    /// Readable, resettable test&set.
    ResettableTestAndSet,
    /// Readable fetch&increment.
    FetchAndIncrement,
    /// Restricted ABA-detecting register (dWrite without argument, dRead
    /// returning only the detection bit).
    AbaRegister,
}

impl ObjectKind {
    pub fn allows(self, action: &Action) -> bool {
        use Action::*;
        match self {
            ObjectKind::Register | ObjectKind::SetRegister => matches!(action, Read | Write(_)),
            ObjectKind::TestAndSet => matches!(action, TestAndSet),
            ObjectKind::ResettableTestAndSet => matches!(action, TestAndSet | Reset | Read),
            ObjectKind::FetchAndIncrement => matches!(action, FetchAndIncrement | Read),
            ObjectKind::AbaRegister => matches!(action, DWrite | DRead),
        }
    }

    fn admits(self, v: Value) -> bool {
        match (self, v) {
            (ObjectKind::Register, Value::Bottom) => true,
            (ObjectKind::Register, Value::Int(x)) => x <= MAX_ELEMENT,
            (ObjectKind::SetRegister, Value::Set(_)) => true,
            _ => false,
        }
    }
}

/// Symbolic name of a shared object, e.g. `Items[3]` or `Done`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ObjectId {
    pub kind: ObjectKind,
    pub name: &'static str,
    /// 1-based array index; `None` for scalar objects.
    pub index: Option<u32>,
}

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.index {
            Some(i) => write!(f, "{}[{}]", self.name, i),
            None => f.write_str(self.name),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Action {
    Read,
    Write(Value),
    TestAndSet,
    Reset,
    FetchAndIncrement,
    DWrite,
    DRead,
}

impl Action {
    pub fn name(&self) -> &'static str {
        match self {
            Action::Read => "read",
            Action::Write(_) => "write",
            Action::TestAndSet => "t&s",
            Action::Reset => "reset",
            Action::FetchAndIncrement => "f&i",
            Action::DWrite => "dWrite",
            Action::DRead => "dRead",
        }
    }

    /// The argument token of the trace format (`-` when there is none).
    pub fn arg_token(&self) -> String {
        match self {
            Action::Write(v) => v.to_string(),
            _ => "-".to_string(),
        }
    }

    pub fn parse(name: &str, arg: &str) -> Result<Action, String> {
        let no_arg = |a: Action| {
            if arg == "-" {
                Ok(a)
            } else {
                Err(format!("action `{name}` takes no argument"))
            }
        };
        match name {
            "read" => no_arg(Action::Read),
            "write" => Value::parse(arg).map(Action::Write),
            "t&s" => no_arg(Action::TestAndSet),
            "reset" => no_arg(Action::Reset),
            "f&i" => no_arg(Action::FetchAndIncrement),
            "dWrite" => no_arg(Action::DWrite),
            "dRead" => no_arg(Action::DRead),
            _ => Err(format!("unknown action `{name}`")),
        }
    }

    pub fn is_mutation(&self) -> bool {
        !matches!(self, Action::Read)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Response {
    /// Writes, resets and dWrites return nothing.
    Ack,
    /// t&s response or read of a test&set.
    Bit(u8),
    /// f&i response or read of a fetch&increment.
    Count(u64),
    /// dRead detection bit.
    Flag(bool),
    /// Register read.
    Value(Value),
}

impl Response {
    pub fn parse(action: &Action, kind: ObjectKind, tok: &str) -> Result<Response, String> {
        match (action, kind) {
            (Action::Write(_) | Action::Reset | Action::DWrite, _) => {
                if tok == "ok" {
                    Ok(Response::Ack)
                } else {
                    Err(format!("expected `ok`, got `{tok}`"))
                }
            }
            (Action::TestAndSet, _) | (Action::Read, ObjectKind::TestAndSet | ObjectKind::ResettableTestAndSet) => {
                match tok {
                    "0" => Ok(Response::Bit(0)),
                    "1" => Ok(Response::Bit(1)),
                    _ => Err(format!("expected a bit, got `{tok}`")),
                }
            }
            (Action::FetchAndIncrement, _) | (Action::Read, ObjectKind::FetchAndIncrement) => tok
                .parse()
                .map(Response::Count)
                .map_err(|_| format!("expected a count, got `{tok}`")),
            (Action::DRead, _) => match tok {
                "true" => Ok(Response::Flag(true)),
                "false" => Ok(Response::Flag(false)),
                _ => Err(format!("expected a flag, got `{tok}`")),
            },
            (Action::Read, _) => Value::parse(tok).map(Response::Value),
        }
    }

    pub fn value(self) -> Option<Value> {
        match self {
            Response::Value(v) => Some(v),
            _ => None,
        }
    }
}

impl fmt::Display for Response {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Response::Ack => f.write_str("ok"),
            Response::Bit(b) => write!(f, "{b}"),
            Response::Count(c) => write!(f, "{c}"),
            Response::Flag(b) => write!(f, "{b}"),
            Response::Value(v) => write!(f, "{v}"),
        }
    }
}

/// Full state of one object, as returned by snapshots.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum ObjectState {
    Register(Value),
    Bit(u8),
    Counter(u64),
    Aba {
        write_epoch: u64,
        /// Epoch observed at each process's last dRead; `None` if the
        /// process never read.
        last_seen: Vec<Option<u64>>,
    },
}

impl ObjectState {
    pub fn initial(kind: ObjectKind, processes: usize) -> ObjectState {
        match kind {
            ObjectKind::Register => ObjectState::Register(Value::Bottom),
            ObjectKind::SetRegister => ObjectState::Register(Value::Set(IndexSet::empty())),
            ObjectKind::TestAndSet | ObjectKind::ResettableTestAndSet => ObjectState::Bit(0),
            ObjectKind::FetchAndIncrement => ObjectState::Counter(0),
            ObjectKind::AbaRegister => ObjectState::Aba {
                write_epoch: 0,
                last_seen: vec![None; processes],
            },
        }
    }
}

/// One shared object: its kind and current state.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Object {
    pub kind: ObjectKind,
    pub state: ObjectState,
}

impl Object {
    pub fn new(kind: ObjectKind, processes: usize) -> Self {
        Object {
            kind,
            state: ObjectState::initial(kind, processes),
        }
    }

    pub fn with_state(kind: ObjectKind, state: ObjectState) -> Self {
        Object { kind, state }
    }

    /// Performs one atomic operation on behalf of `actor`.
    pub fn apply(&mut self, action: &Action, actor: Pid) -> Result<Response> {
        if !self.kind.allows(action) {
            return Err(Error::usage(format!(
                "action {} is not supported by {:?}",
                action.name(),
                self.kind
            )));
        }
        let resp = match (&mut self.state, action) {
            (ObjectState::Register(v), Action::Read) => Response::Value(*v),
            (ObjectState::Register(v), Action::Write(x)) => {
                if !self.kind.admits(*x) {
                    return Err(Error::usage(format!(
                        "value {x} is outside the universe of {:?}",
                        self.kind
                    )));
                }
                *v = *x;
                Response::Ack
            }
            (ObjectState::Bit(b), Action::TestAndSet) => {
                let old = *b;
                *b = 1;
                Response::Bit(old)
            }
            (ObjectState::Bit(b), Action::Reset) => {
                *b = 0;
                Response::Ack
            }
            (ObjectState::Bit(b), Action::Read) => Response::Bit(*b),
            (ObjectState::Counter(c), Action::FetchAndIncrement) => {
                let old = *c;
                *c += 1;
                Response::Count(old)
            }
            (ObjectState::Counter(c), Action::Read) => Response::Count(*c),
            (ObjectState::Aba { write_epoch, .. }, Action::DWrite) => {
                *write_epoch += 1;
                Response::Ack
            }
            (ObjectState::Aba { write_epoch, last_seen }, Action::DRead) => {
                let slot = last_seen
                    .get_mut(actor)
                    .ok_or_else(|| Error::usage(format!("process {actor} is unknown to this ABA register")))?;
                let changed = matches!(*slot, Some(seen) if *write_epoch > seen);
                *slot = Some(*write_epoch);
                Response::Flag(changed)
            }
            (state, action) => {
                return Err(Error::usage(format!(
                    "state {state:?} cannot take action {}",
                    action.name()
                )))
            }
        };
        Ok(resp)
    }
}
