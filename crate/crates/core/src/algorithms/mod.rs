//! The five bag and queue algorithms as per-process step machines.
//!
//! Every call to [`Program::step`] performs exactly one shared-object access.
//! Purely local work (loop bookkeeping, set arithmetic, branch tests on
//! values already held) runs inside the shared step that precedes it, so
//! after a step the program is always parked in front of its next shared
//! access or has completed its operation.

mod b_bounded;
pub mod lemmas;
mod li_queue;
mod one_bounded;
mod unbounded;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::primitives::{
    Action, IndexSet, Memory, ObjRef, ObjectId, ObjectKind, ObjectState, Pid, Response, SharedMemory, Value,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AlgorithmId {
    /// Li's queue, used as a (non strongly-linearizable) bag.
    LiQueue,
    /// Lock-free strongly-linearizable unbounded bag.
    UnboundedSl,
    /// Wait-free linearizable 1-bounded bag, single producer.
    Wf1b,
    /// Lock-free strongly-linearizable 1-bounded bag, single producer.
    Sl1b,
    /// Lock-free strongly-linearizable b-bounded bag, single producer.
    SlBb,
}

impl AlgorithmId {
    pub const ALL: [AlgorithmId; 5] = [
        AlgorithmId::LiQueue,
        AlgorithmId::UnboundedSl,
        AlgorithmId::Wf1b,
        AlgorithmId::Sl1b,
        AlgorithmId::SlBb,
    ];

    pub fn token(self) -> &'static str {
        match self {
            AlgorithmId::LiQueue => "li-queue",
            AlgorithmId::UnboundedSl => "unbounded-sl",
            AlgorithmId::Wf1b => "wf-1b",
            AlgorithmId::Sl1b => "sl-1b",
            AlgorithmId::SlBb => "sl-bb",
        }
    }

    /// Single-producer algorithms reserve pid 0 for the producer and use
    /// pids 1..=n for consumers.
    pub fn single_producer(self) -> bool {
        matches!(self, AlgorithmId::Wf1b | AlgorithmId::Sl1b | AlgorithmId::SlBb)
    }

    /// Number of processes in an instance with `n` consumers.
    pub fn processes(self, n: usize) -> usize {
        if self.single_producer() {
            n + 1
        } else {
            n
        }
    }

    /// Bag capacity, if bounded.
    pub fn capacity(self, b: usize) -> Option<usize> {
        match self {
            AlgorithmId::LiQueue | AlgorithmId::UnboundedSl => None,
            AlgorithmId::Wf1b | AlgorithmId::Sl1b => Some(1),
            AlgorithmId::SlBb => Some(b),
        }
    }
}

impl fmt::Display for AlgorithmId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for AlgorithmId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AlgorithmId::ALL
            .into_iter()
            .find(|a| a.token() == s)
            .ok_or_else(|| Error::usage(format!("unknown algorithm `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OpRequest {
    Insert(u64),
    Take,
}

impl OpRequest {
    pub fn is_insert(self) -> bool {
        matches!(self, OpRequest::Insert(_))
    }
}

impl fmt::Display for OpRequest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OpRequest::Insert(x) => write!(f, "I{x}"),
            OpRequest::Take => f.write_str("T"),
        }
    }
}

impl FromStr for OpRequest {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "T" {
            return Ok(OpRequest::Take);
        }
        s.strip_prefix('I')
            .and_then(|v| v.parse().ok())
            .filter(|v| *v <= crate::primitives::MAX_ELEMENT)
            .map(OpRequest::Insert)
            .ok_or_else(|| Error::usage(format!("bad operation `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OpResponse {
    Ok,
    Full,
    Empty,
    Value(u64),
}

impl fmt::Display for OpResponse {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OpResponse::Ok => f.write_str("OK"),
            OpResponse::Full => f.write_str("FULL"),
            OpResponse::Empty => f.write_str("EMPTY"),
            OpResponse::Value(x) => write!(f, "{x}"),
        }
    }
}

impl FromStr for OpResponse {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "OK" => Ok(OpResponse::Ok),
            "FULL" => Ok(OpResponse::Full),
            "EMPTY" => Ok(OpResponse::Empty),
            _ => s
                .parse()
                .map(OpResponse::Value)
                .map_err(|_| Error::usage(format!("bad response `{s}`"))),
        }
    }
}

macro_rules! lines {
    ($($variant:ident => $token:literal,)*) => {
        /// Pseudocode line labels. Each label names one shared access of
        /// one algorithm; the prefix identifies the algorithm.
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum Line {
            $($variant,)*
        }

        impl Line {
            pub const ALL: &'static [Line] = &[$(Line::$variant,)*];

            pub fn token(self) -> &'static str {
                match self {
                    $(Line::$variant => $token,)*
                }
            }
        }
    };
}

lines! {
    LqInsIncMax => "lq.ins.inc_max",
    LqInsWriteItem => "lq.ins.write_item",
    LqTakeReadMax => "lq.take.read_max",
    LqTakeReadItem => "lq.take.read_item",
    LqTakeTas => "lq.take.tas",

    UbInsIncAlloc => "ub.ins.inc_alloc",
    UbInsWriteItem => "ub.ins.write_item",
    UbInsDone => "ub.ins.done",
    UbTakeReadDone => "ub.take.read_done",
    UbTakeReadAlloc => "ub.take.read_alloc",
    UbTakeReadItem => "ub.take.read_item",
    UbTakeTas => "ub.take.tas",
    UbTakeRereadDone => "ub.take.reread_done",

    WfInsCheckTs => "wf.ins.check_ts",
    WfInsClearItem => "wf.ins.clear_item",
    WfInsCollect => "wf.ins.collect",
    WfInsWriteAlloc => "wf.ins.write_alloc",
    WfInsReset => "wf.ins.reset",
    WfInsWriteItem => "wf.ins.write_item",
    WfTakeReadAlloc => "wf.take.read_alloc",
    WfTakeHazard => "wf.take.hazard",
    WfTakeReadItem => "wf.take.read_item",
    WfTakeTas => "wf.take.tas",
    WfTakeClearHazard1 => "wf.take.clear_hazard1",
    WfTakeClearHazard2 => "wf.take.clear_hazard2",

    S1InsCheckTs => "s1.ins.check_ts",
    S1InsClearItem => "s1.ins.clear_item",
    S1InsCollect => "s1.ins.collect",
    S1InsWriteAlloc => "s1.ins.write_alloc",
    S1InsReset => "s1.ins.reset",
    S1InsWriteItem => "s1.ins.write_item",
    S1InsWriteDone => "s1.ins.write_done",
    S1TakeReadDone => "s1.take.read_done",
    S1TakeReadAlloc => "s1.take.read_alloc",
    S1TakeHazard => "s1.take.hazard",
    S1TakeReadItem => "s1.take.read_item",
    S1TakeTas => "s1.take.tas",
    S1TakeClearHazard1 => "s1.take.clear_hazard1",
    S1TakeClearHazard2 => "s1.take.clear_hazard2",
    S1TakeRereadDone => "s1.take.reread_done",

    SbInsReadTakeDone => "sb.ins.read_takedone",
    SbInsCheckTs => "sb.ins.check_ts",
    SbInsClearItem => "sb.ins.clear_item",
    SbInsCollect => "sb.ins.collect",
    SbInsWriteAlloc => "sb.ins.write_alloc",
    SbInsReset => "sb.ins.reset",
    SbInsWriteItem => "sb.ins.write_item",
    SbInsWriteInsertDone => "sb.ins.write_insertdone",
    SbInsRereadTakeDone => "sb.ins.reread_takedone",
    SbTakeReadInsertDone => "sb.take.read_insertdone",
    SbTakeReadAlloc => "sb.take.read_alloc",
    SbTakeHazard => "sb.take.hazard",
    SbTakeReadItem => "sb.take.read_item",
    SbTakeTas => "sb.take.tas",
    SbTakeClearHazard1 => "sb.take.clear_hazard1",
    SbTakeSuccessTakeDone => "sb.take.success_takedone",
    SbTakeClearHazard2 => "sb.take.clear_hazard2",
    SbTakeRereadInsertDone => "sb.take.reread_insertdone",
    SbTakeFailTakeDone => "sb.take.fail_takedone",
}

impl fmt::Display for Line {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Line {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Line::ALL
            .iter()
            .copied()
            .find(|l| l.token() == s)
            .ok_or_else(|| Error::usage(format!("unknown line label `{s}`")))
    }
}

/// How the producer picks "some index" among the eligible cells.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum ChooserPolicy {
    Smallest,
    /// Seeded pseudo-random choice; the k-th choice depends only on
    /// (seed, k).
    Random(u64),
    /// Explicit choices in order. A choice that is not eligible, or one
    /// past the end of the list, falls back to the smallest eligible index.
    Scripted(Vec<u32>),
}

impl ChooserPolicy {
    /// Token used in trace headers: `smallest`, `random` or `script:1,2`.
    pub fn token(&self) -> String {
        match self {
            ChooserPolicy::Smallest => "smallest".into(),
            ChooserPolicy::Random(_) => "random".into(),
            ChooserPolicy::Scripted(list) => {
                let parts: Vec<String> = list.iter().map(u32::to_string).collect();
                format!("script:{}", parts.join(","))
            }
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            ChooserPolicy::Random(s) => *s,
            _ => 0,
        }
    }

    pub fn parse(token: &str, seed: u64) -> Result<Self> {
        match token {
            "smallest" => Ok(ChooserPolicy::Smallest),
            "random" => Ok(ChooserPolicy::Random(seed)),
            _ => {
                let list = token
                    .strip_prefix("script:")
                    .ok_or_else(|| Error::usage(format!("unknown chooser `{token}`")))?;
                list.split(',')
                    .filter(|s| !s.is_empty())
                    .map(|s| {
                        s.parse::<u32>()
                            .map_err(|_| Error::usage(format!("bad scripted choice `{s}`")))
                    })
                    .collect::<Result<Vec<_>>>()
                    .map(ChooserPolicy::Scripted)
            }
        }
    }
}

/// A chooser policy plus the number of choices made so far.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Chooser {
    policy: ChooserPolicy,
    made: u32,
}

impl Chooser {
    pub fn new(policy: ChooserPolicy) -> Self {
        Chooser { policy, made: 0 }
    }

    pub fn policy(&self) -> &ChooserPolicy {
        &self.policy
    }

    pub fn choose(&mut self, eligible: IndexSet) -> Result<u32> {
        let k = self.made as usize;
        self.made += 1;
        let smallest = eligible
            .first()
            .ok_or_else(|| Error::usage("no eligible cell to allocate"))?;
        match &self.policy {
            ChooserPolicy::Smallest => Ok(smallest),
            ChooserPolicy::Random(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                rng.set_stream(k as u64);
                let pick = rng.gen_range(0..eligible.len());
                Ok(eligible.iter().nth(pick).expect("pick within range"))
            }
            ChooserPolicy::Scripted(list) => match list.get(k) {
                Some(&c) if eligible.contains(c) => Ok(c),
                _ => Ok(smallest),
            },
        }
    }
}

/// Where each algorithm's shared variables live in its [`Memory`].
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Layout {
    pub items: u16,
    pub ts: u16,
    /// `Max` (li-queue) or `Allocated`.
    pub allocated: ObjRef,
    /// `Done` or `InsertDone`.
    pub done: Option<ObjRef>,
    pub take_done: Option<ObjRef>,
    pub hazards: Option<u16>,
}

impl Layout {
    pub fn item(&self, i: u32) -> ObjRef {
        ObjRef::cell(self.items, i)
    }

    pub fn ts(&self, i: u32) -> ObjRef {
        ObjRef::cell(self.ts, i)
    }

    pub fn hazard(&self, i: Pid) -> ObjRef {
        ObjRef::cell(self.hazards.expect("algorithm has hazards"), i as u32)
    }

    fn done(&self) -> ObjRef {
        self.done.expect("algorithm has a done object")
    }

    fn take_done(&self) -> ObjRef {
        self.take_done.expect("algorithm has a take-done object")
    }
}

/// Object states observed alongside a step, used by rules that depend on
/// the configuration at the step (the wait-free bag's EMPTY rule).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ReadView {
    pub item: Value,
    pub ts: u8,
}

/// The shared access performed by one step and its outcome.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StepRecord {
    pub line: Line,
    pub obj: ObjRef,
    pub action: Action,
    pub response: Response,
    pub view: Option<ReadView>,
    /// Set when this step completed the operation.
    pub completed: Option<OpResponse>,
    /// Set when this step started a new repeat-loop iteration.
    pub new_iteration: bool,
}

/// Execution context handed to the per-algorithm machines.
pub(crate) struct Ctx<'a, M: SharedMemory> {
    pub mem: &'a mut M,
    pub layout: &'a Layout,
    pub chooser: &'a mut Chooser,
    pub pid: Pid,
    pub n: usize,
    pub b: usize,
    access: Option<(Line, ObjRef, Action, Response)>,
    pub view: Option<ReadView>,
    pub new_iteration: bool,
}

impl<M: SharedMemory> Ctx<'_, M> {
    /// Performs the step's single shared access.
    pub fn access(&mut self, line: Line, obj: ObjRef, action: Action) -> Result<Response> {
        debug_assert!(self.access.is_none(), "two shared accesses in one step");
        let r = self.mem.apply(obj, &action, self.pid)?;
        self.access = Some((line, obj, action, r));
        Ok(r)
    }

    pub fn read_value(&mut self, line: Line, obj: ObjRef) -> Result<Value> {
        match self.access(line, obj, Action::Read)? {
            Response::Value(v) => Ok(v),
            r => Err(Error::usage(format!("unexpected read response {r}"))),
        }
    }

    pub fn bit(&mut self, line: Line, obj: ObjRef, action: Action) -> Result<u8> {
        match self.access(line, obj, action)? {
            Response::Bit(b) => Ok(b),
            r => Err(Error::usage(format!("unexpected bit response {r}"))),
        }
    }

    pub fn count(&mut self, line: Line, obj: ObjRef, action: Action) -> Result<u64> {
        match self.access(line, obj, action)? {
            Response::Count(c) => Ok(c),
            r => Err(Error::usage(format!("unexpected count response {r}"))),
        }
    }

    pub fn flag(&mut self, line: Line, obj: ObjRef) -> Result<bool> {
        match self.access(line, obj, Action::DRead)? {
            Response::Flag(f) => Ok(f),
            r => Err(Error::usage(format!("unexpected dRead response {r}"))),
        }
    }

    pub fn write(&mut self, line: Line, obj: ObjRef, v: Value) -> Result<()> {
        self.access(line, obj, Action::Write(v)).map(|_| ())
    }
}

/// Producer state exposed to invariant checks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ProducerView {
    pub used: IndexSet,
    /// Last allocated cell (1-bounded bags) or the cell being filled.
    pub m: u32,
    /// Allocated cells (b-bounded bag only).
    pub alloc: IndexSet,
    /// The producer has cleared the previous item and not yet written the
    /// new one in the current Insert.
    pub between_clear_and_write: bool,
    /// Cell written by the current Insert while it has not yet announced
    /// completion.
    pub poised_after_write: Option<u32>,
    /// At least one item has been written by the producer.
    pub wrote_item: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum Machine {
    Li(li_queue::Proc),
    Ub(unbounded::Proc),
    OneProducer(one_bounded::Producer),
    OneConsumer(one_bounded::Consumer),
    BbProducer(b_bounded::Producer),
    BbConsumer(b_bounded::Consumer),
}

/// One process: its role-specific machine and the pending operation.
#[derive(Clone, Debug)]
pub struct Program {
    pid: Pid,
    algorithm: AlgorithmId,
    n: usize,
    b: usize,
    pending: Option<OpRequest>,
    ops_begun: usize,
    iteration: u32,
    op_steps: u32,
    machine: Machine,
}

impl Program {
    fn new(algorithm: AlgorithmId, n: usize, b: usize, pid: Pid) -> Self {
        let machine = match algorithm {
            AlgorithmId::LiQueue => Machine::Li(li_queue::Proc::default()),
            AlgorithmId::UnboundedSl => Machine::Ub(unbounded::Proc::default()),
            AlgorithmId::Wf1b | AlgorithmId::Sl1b if pid == 0 => {
                Machine::OneProducer(one_bounded::Producer::new(algorithm == AlgorithmId::Sl1b))
            }
            AlgorithmId::Wf1b | AlgorithmId::Sl1b => {
                Machine::OneConsumer(one_bounded::Consumer::new(algorithm == AlgorithmId::Sl1b))
            }
            AlgorithmId::SlBb if pid == 0 => Machine::BbProducer(b_bounded::Producer::default()),
            AlgorithmId::SlBb => Machine::BbConsumer(b_bounded::Consumer::default()),
        };
        Program {
            pid,
            algorithm,
            n,
            b,
            pending: None,
            ops_begun: 0,
            iteration: 0,
            op_steps: 0,
            machine,
        }
    }

    pub fn pid(&self) -> Pid {
        self.pid
    }

    pub fn pending(&self) -> Option<OpRequest> {
        self.pending
    }

    /// Number of operations this process has begun.
    pub fn ops_begun(&self) -> usize {
        self.ops_begun
    }

    /// Current repeat-loop iteration of the pending operation (1-based).
    pub fn iteration(&self) -> u32 {
        self.iteration
    }

    /// Shared steps taken so far by the pending (or last) operation.
    pub fn op_steps(&self) -> u32 {
        self.op_steps
    }

    pub fn begin(&mut self, request: OpRequest) -> Result<()> {
        if let Some(p) = self.pending {
            return Err(Error::usage(format!("process {} already has a pending {p}", self.pid)));
        }
        if self.algorithm.single_producer() {
            match (self.pid, request) {
                (0, OpRequest::Take) => return Err(Error::usage("the producer (process 0) cannot Take")),
                (p, OpRequest::Insert(_)) if p != 0 => {
                    return Err(Error::usage(format!("process {p} is a consumer and cannot Insert")))
                }
                _ => {}
            }
        }
        match &mut self.machine {
            Machine::Li(p) => p.begin(request),
            Machine::Ub(p) => p.begin(request),
            Machine::OneProducer(p) => p.begin(request),
            Machine::OneConsumer(p) => p.begin(),
            Machine::BbProducer(p) => p.begin(request),
            Machine::BbConsumer(p) => p.begin(),
        }
        self.pending = Some(request);
        self.ops_begun += 1;
        self.iteration = 1;
        self.op_steps = 0;
        Ok(())
    }

    /// Performs the next shared access of the pending operation.
    pub fn step<M: SharedMemory>(&mut self, mem: &mut M, layout: &Layout, chooser: &mut Chooser) -> Result<StepRecord> {
        if self.pending.is_none() {
            return Err(Error::usage(format!("process {} has no pending operation", self.pid)));
        }
        let mut ctx = Ctx {
            mem,
            layout,
            chooser,
            pid: self.pid,
            n: self.n,
            b: self.b,
            access: None,
            view: None,
            new_iteration: false,
        };
        let completed = match &mut self.machine {
            Machine::Li(p) => p.step(&mut ctx),
            Machine::Ub(p) => p.step(&mut ctx),
            Machine::OneProducer(p) => p.step(&mut ctx),
            Machine::OneConsumer(p) => p.step(&mut ctx),
            Machine::BbProducer(p) => p.step(&mut ctx),
            Machine::BbConsumer(p) => p.step(&mut ctx),
        }?;
        let (line, obj, action, response) = ctx.access.expect("every step performs exactly one shared access");
        self.op_steps += 1;
        if ctx.new_iteration {
            self.iteration += 1;
        }
        if completed.is_some() {
            self.pending = None;
        }
        Ok(StepRecord {
            line,
            obj,
            action,
            response,
            view: ctx.view,
            completed,
            new_iteration: ctx.new_iteration,
        })
    }

    pub fn producer_view(&self) -> Option<ProducerView> {
        match &self.machine {
            Machine::OneProducer(p) => Some(p.view()),
            Machine::BbProducer(p) => Some(p.view()),
            _ => None,
        }
    }
}

impl Program {
    /// Loop and step counters only matter while an operation is pending.
    fn counters(&self) -> (u32, u32) {
        if self.pending.is_some() {
            (self.iteration, self.op_steps)
        } else {
            (0, 0)
        }
    }
}

impl PartialEq for Program {
    fn eq(&self, other: &Self) -> bool {
        self.pid == other.pid
            && self.pending == other.pending
            && self.ops_begun == other.ops_begun
            && self.counters() == other.counters()
            && self.machine == other.machine
    }
}

impl Eq for Program {}

impl std::hash::Hash for Program {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.pid.hash(state);
        self.pending.hash(state);
        self.ops_begun.hash(state);
        self.counters().hash(state);
        self.machine.hash(state);
    }
}

/// An algorithm's shared memory plus one program per process.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct AlgorithmInstance {
    algorithm: AlgorithmId,
    n: usize,
    b: usize,
    memory: Memory,
    layout: Layout,
    programs: Vec<Program>,
    chooser: Chooser,
}

impl AlgorithmInstance {
    /// Builds the initial configuration. `n` is the number of consumers for
    /// the single-producer algorithms and the number of processes otherwise.
    pub fn new(algorithm: AlgorithmId, n: usize, b: usize, chooser: ChooserPolicy) -> Result<Self> {
        if n == 0 {
            return Err(Error::usage("n must be at least 1"));
        }
        if b == 0 {
            return Err(Error::usage("b must be at least 1"));
        }
        if b > 1 && algorithm != AlgorithmId::SlBb {
            return Err(Error::usage(format!(
                "{algorithm} is 1-bounded or unbounded; b = {b} is not allowed"
            )));
        }
        let cells = match algorithm {
            AlgorithmId::LiQueue | AlgorithmId::UnboundedSl => None,
            AlgorithmId::Wf1b | AlgorithmId::Sl1b => Some(n + 1),
            AlgorithmId::SlBb => Some(n + b),
        };
        if cells.is_some_and(|c| c >= IndexSet::MAX_INDEX as usize) {
            return Err(Error::usage("too many cells for the index-set encoding"));
        }
        let processes = algorithm.processes(n);
        let mut memory = Memory::new(processes);
        let items = memory.add_array("Items", ObjectKind::Register, cells);
        let ts_kind = if algorithm.single_producer() {
            ObjectKind::ResettableTestAndSet
        } else {
            ObjectKind::TestAndSet
        };
        let ts = memory.add_array("TS", ts_kind, cells);
        let layout = match algorithm {
            AlgorithmId::LiQueue => {
                let max = memory.add_scalar("Max", ObjectKind::FetchAndIncrement, Some(ObjectState::Counter(1)));
                Layout {
                    items,
                    ts,
                    allocated: max,
                    done: None,
                    take_done: None,
                    hazards: None,
                }
            }
            AlgorithmId::UnboundedSl => {
                let allocated = memory.add_scalar("Allocated", ObjectKind::FetchAndIncrement, None);
                let done = memory.add_scalar("Done", ObjectKind::FetchAndIncrement, None);
                Layout {
                    items,
                    ts,
                    allocated,
                    done: Some(done),
                    take_done: None,
                    hazards: None,
                }
            }
            AlgorithmId::Wf1b | AlgorithmId::Sl1b => {
                memory.set_state(ObjRef::cell(ts, 1), ObjectState::Bit(1))?;
                let allocated = memory.add_scalar(
                    "Allocated",
                    ObjectKind::Register,
                    Some(ObjectState::Register(Value::Int(1))),
                );
                let hazards = memory.add_array("Hazards", ObjectKind::Register, Some(n));
                let done =
                    (algorithm == AlgorithmId::Sl1b).then(|| memory.add_scalar("Done", ObjectKind::AbaRegister, None));
                Layout {
                    items,
                    ts,
                    allocated,
                    done,
                    take_done: None,
                    hazards: Some(hazards),
                }
            }
            AlgorithmId::SlBb => {
                let allocated = memory.add_scalar("Allocated", ObjectKind::SetRegister, None);
                let hazards = memory.add_array("Hazards", ObjectKind::Register, Some(n));
                let insert_done = memory.add_scalar("InsertDone", ObjectKind::AbaRegister, None);
                let take_done = memory.add_scalar("TakeDone", ObjectKind::AbaRegister, None);
                Layout {
                    items,
                    ts,
                    allocated,
                    done: Some(insert_done),
                    take_done: Some(take_done),
                    hazards: Some(hazards),
                }
            }
        };
        let programs = (0..processes).map(|pid| Program::new(algorithm, n, b, pid)).collect();
        Ok(AlgorithmInstance {
            algorithm,
            n,
            b,
            memory,
            layout,
            programs,
            chooser: Chooser::new(chooser),
        })
    }

    pub fn algorithm(&self) -> AlgorithmId {
        self.algorithm
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn b(&self) -> usize {
        self.b
    }

    pub fn processes(&self) -> usize {
        self.programs.len()
    }

    pub fn memory(&self) -> &Memory {
        &self.memory
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn chooser(&self) -> &Chooser {
        &self.chooser
    }

    pub fn program(&self, pid: Pid) -> &Program {
        &self.programs[pid]
    }

    pub fn programs(&self) -> &[Program] {
        &self.programs
    }

    pub fn object_id(&self, obj: ObjRef) -> ObjectId {
        self.memory.id(obj)
    }

    pub fn producer_view(&self) -> Option<ProducerView> {
        self.programs.first().and_then(Program::producer_view)
    }

    fn program_mut(&mut self, pid: Pid) -> Result<&mut Program> {
        let count = self.programs.len();
        self.programs
            .get_mut(pid)
            .ok_or_else(|| Error::usage(format!("process {pid} does not exist ({count} processes)")))
    }

    pub fn begin_op(&mut self, pid: Pid, request: OpRequest) -> Result<()> {
        self.program_mut(pid)?.begin(request)
    }

    pub fn step(&mut self, pid: Pid) -> Result<StepRecord> {
        let count = self.programs.len();
        let program = self
            .programs
            .get_mut(pid)
            .ok_or_else(|| Error::usage(format!("process {pid} does not exist ({count} processes)")))?;
        program.step(&mut self.memory, &self.layout, &mut self.chooser)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_alone(inst: &mut AlgorithmInstance, pid: Pid, req: OpRequest) -> (OpResponse, Vec<StepRecord>) {
        inst.begin_op(pid, req).unwrap();
        let mut steps = Vec::new();
        loop {
            let rec = inst.step(pid).unwrap();
            let done = rec.completed;
            steps.push(rec);
            if let Some(r) = done {
                return (r, steps);
            }
            assert!(steps.len() < 200, "operation does not terminate");
        }
    }

    fn lines(steps: &[StepRecord]) -> Vec<&'static str> {
        steps.iter().map(|s| s.line.token()).collect()
    }

    #[test]
    fn line_tokens_are_unique_and_parse() {
        let mut seen = std::collections::HashSet::new();
        for l in Line::ALL {
            assert!(seen.insert(l.token()));
            assert_eq!(l.token().parse::<Line>().unwrap(), *l);
        }
    }

    #[test]
    fn initial_configurations() {
        let wf = AlgorithmInstance::new(AlgorithmId::Wf1b, 2, 1, ChooserPolicy::Smallest).unwrap();
        let m = wf.memory();
        for i in 1..=3 {
            assert_eq!(
                m.state(wf.layout().item(i)).unwrap(),
                &ObjectState::Register(Value::Bottom)
            );
        }
        assert!(m.state(wf.layout().item(4)).is_err());
        let bits: Vec<_> = (1..=3).map(|i| m.state(wf.layout().ts(i)).unwrap().clone()).collect();
        assert_eq!(
            bits,
            vec![ObjectState::Bit(1), ObjectState::Bit(0), ObjectState::Bit(0)]
        );
        assert_eq!(
            m.state(wf.layout().allocated).unwrap(),
            &ObjectState::Register(Value::Int(1))
        );

        let bb = AlgorithmInstance::new(AlgorithmId::SlBb, 2, 2, ChooserPolicy::Smallest).unwrap();
        assert!(bb.memory().state(bb.layout().item(4)).is_ok());
        assert!(bb.memory().state(bb.layout().item(5)).is_err());
        assert_eq!(
            bb.memory().state(bb.layout().allocated).unwrap(),
            &ObjectState::Register(Value::Set(IndexSet::empty()))
        );

        let ub = AlgorithmInstance::new(AlgorithmId::UnboundedSl, 3, 1, ChooserPolicy::Smallest).unwrap();
        assert_eq!(
            ub.memory().state(ub.layout().allocated).unwrap(),
            &ObjectState::Counter(0)
        );
        assert_eq!(
            ub.memory().state(ub.layout().done.unwrap()).unwrap(),
            &ObjectState::Counter(0)
        );
        assert_eq!(ub.processes(), 3);
        assert_eq!(bb.processes(), 3);
    }

    #[test]
    fn usage_errors() {
        assert!(AlgorithmInstance::new(AlgorithmId::Sl1b, 2, 2, ChooserPolicy::Smallest).is_err());
        assert!(AlgorithmInstance::new(AlgorithmId::UnboundedSl, 0, 1, ChooserPolicy::Smallest).is_err());
        let mut s1 = AlgorithmInstance::new(AlgorithmId::Sl1b, 2, 1, ChooserPolicy::Smallest).unwrap();
        assert!(s1.begin_op(1, OpRequest::Insert(3)).is_err());
        assert!(s1.begin_op(0, OpRequest::Take).is_err());
        assert!(s1.step(1).is_err());
        s1.begin_op(1, OpRequest::Take).unwrap();
        assert!(s1.begin_op(1, OpRequest::Take).is_err());
        assert!(s1.begin_op(7, OpRequest::Take).is_err());
    }

    #[test]
    fn unbounded_insert_is_three_steps() {
        let mut ub = AlgorithmInstance::new(AlgorithmId::UnboundedSl, 2, 1, ChooserPolicy::Smallest).unwrap();
        let (r, steps) = run_alone(&mut ub, 0, OpRequest::Insert(5));
        assert_eq!(r, OpResponse::Ok);
        assert_eq!(lines(&steps), ["ub.ins.inc_alloc", "ub.ins.write_item", "ub.ins.done"]);
        let (r, steps) = run_alone(&mut ub, 1, OpRequest::Take);
        assert_eq!(r, OpResponse::Value(5));
        assert_eq!(
            lines(&steps),
            [
                "ub.take.read_done",
                "ub.take.read_alloc",
                "ub.take.read_item",
                "ub.take.tas"
            ]
        );
        let (r, _) = run_alone(&mut ub, 1, OpRequest::Take);
        assert_eq!(r, OpResponse::Empty);
    }

    #[test]
    fn wait_free_take_on_fresh_instance() {
        let mut wf = AlgorithmInstance::new(AlgorithmId::Wf1b, 2, 1, ChooserPolicy::Smallest).unwrap();
        let (r, steps) = run_alone(&mut wf, 1, OpRequest::Take);
        assert_eq!(r, OpResponse::Empty);
        assert_eq!(
            lines(&steps),
            [
                "wf.take.read_alloc",
                "wf.take.hazard",
                "wf.take.read_item",
                "wf.take.clear_hazard2"
            ]
        );
        assert_eq!(
            steps[0].view,
            Some(ReadView {
                item: Value::Bottom,
                ts: 1
            })
        );
    }

    #[test]
    fn one_bounded_insert_then_full() {
        let mut s1 = AlgorithmInstance::new(AlgorithmId::Sl1b, 2, 1, ChooserPolicy::Smallest).unwrap();
        let (r, steps) = run_alone(&mut s1, 0, OpRequest::Insert(1));
        assert_eq!(r, OpResponse::Ok);
        assert_eq!(
            lines(&steps),
            [
                "s1.ins.check_ts",
                "s1.ins.clear_item",
                "s1.ins.collect",
                "s1.ins.collect",
                "s1.ins.write_alloc",
                "s1.ins.reset",
                "s1.ins.write_item",
                "s1.ins.write_done"
            ]
        );
        let (r, steps) = run_alone(&mut s1, 0, OpRequest::Insert(2));
        assert_eq!(r, OpResponse::Full);
        assert_eq!(lines(&steps), ["s1.ins.check_ts"]);
        let (r, _) = run_alone(&mut s1, 2, OpRequest::Take);
        assert_eq!(r, OpResponse::Value(1));
        let (r, _) = run_alone(&mut s1, 0, OpRequest::Insert(2));
        assert_eq!(r, OpResponse::Ok);
        let (r, _) = run_alone(&mut s1, 1, OpRequest::Take);
        assert_eq!(r, OpResponse::Value(2));
        let (r, steps) = run_alone(&mut s1, 1, OpRequest::Take);
        assert_eq!(r, OpResponse::Empty);
        assert_eq!(steps.last().unwrap().line, Line::S1TakeRereadDone);
    }

    #[test]
    fn b_bounded_fills_to_capacity() {
        let mut bb = AlgorithmInstance::new(AlgorithmId::SlBb, 2, 2, ChooserPolicy::Smallest).unwrap();
        assert_eq!(run_alone(&mut bb, 0, OpRequest::Insert(1)).0, OpResponse::Ok);
        assert_eq!(run_alone(&mut bb, 0, OpRequest::Insert(2)).0, OpResponse::Ok);
        let (r, steps) = run_alone(&mut bb, 0, OpRequest::Insert(3));
        assert_eq!(r, OpResponse::Full);
        assert_eq!(steps.last().unwrap().line, Line::SbInsRereadTakeDone);
        let (r, steps) = run_alone(&mut bb, 1, OpRequest::Take);
        assert_eq!(r, OpResponse::Value(1));
        assert_eq!(steps.last().unwrap().line, Line::SbTakeSuccessTakeDone);
        assert_eq!(run_alone(&mut bb, 0, OpRequest::Insert(3)).0, OpResponse::Ok);
        let mut got = vec![
            run_alone(&mut bb, 2, OpRequest::Take).0,
            run_alone(&mut bb, 1, OpRequest::Take).0,
        ];
        got.sort();
        assert_eq!(got, vec![OpResponse::Value(2), OpResponse::Value(3)]);
        let (r, steps) = run_alone(&mut bb, 1, OpRequest::Take);
        assert_eq!(r, OpResponse::Empty);
        assert_eq!(steps.last().unwrap().line, Line::SbTakeFailTakeDone);
    }

    #[test]
    fn li_queue_is_fifo_when_sequential() {
        let mut lq = AlgorithmInstance::new(AlgorithmId::LiQueue, 2, 1, ChooserPolicy::Smallest).unwrap();
        let (r, steps) = run_alone(&mut lq, 1, OpRequest::Take);
        assert_eq!(r, OpResponse::Empty);
        assert_eq!(lines(&steps), ["lq.take.read_max"]);
        run_alone(&mut lq, 0, OpRequest::Insert(1));
        run_alone(&mut lq, 0, OpRequest::Insert(2));
        assert_eq!(run_alone(&mut lq, 1, OpRequest::Take).0, OpResponse::Value(1));
        assert_eq!(run_alone(&mut lq, 1, OpRequest::Take).0, OpResponse::Value(2));
        let (r, steps) = run_alone(&mut lq, 1, OpRequest::Take);
        assert_eq!(r, OpResponse::Empty);
        // Two full passes: the first sees two taken cells, the second
        // confirms nothing changed.
        assert_eq!(steps.iter().filter(|s| s.new_iteration).count(), 1);
    }

    #[test]
    fn choosers() {
        let eligible: IndexSet = [2, 3, 5].into_iter().collect();
        let mut s = Chooser::new(ChooserPolicy::Smallest);
        assert_eq!(s.choose(eligible).unwrap(), 2);
        let mut sc = Chooser::new(ChooserPolicy::Scripted(vec![5, 1]));
        assert_eq!(sc.choose(eligible).unwrap(), 5);
        // Ineligible and exhausted scripts fall back to the smallest index.
        assert_eq!(sc.choose(eligible).unwrap(), 2);
        assert_eq!(sc.choose(eligible).unwrap(), 2);
        let picks = |seed| {
            let mut c = Chooser::new(ChooserPolicy::Random(seed));
            (0..20).map(|_| c.choose(eligible).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(picks(7), picks(7));
        assert!(picks(7).iter().all(|p| eligible.contains(*p)));
        assert!(picks(7).iter().collect::<std::collections::HashSet<_>>().len() > 1);
        for p in [
            ChooserPolicy::Smallest,
            ChooserPolicy::Random(9),
            ChooserPolicy::Scripted(vec![1, 2, 1]),
        ] {
            assert_eq!(ChooserPolicy::parse(&p.token(), p.seed()).unwrap(), p);
        }
    }

    #[test]
    fn random_chooser_keeps_wait_free_bag_correct() {
        for seed in 0..20 {
            let mut wf = AlgorithmInstance::new(AlgorithmId::Wf1b, 3, 1, ChooserPolicy::Random(seed)).unwrap();
            for v in 1..=10 {
                assert_eq!(run_alone(&mut wf, 0, OpRequest::Insert(v)).0, OpResponse::Ok);
                let pid = 1 + (v as usize % 3);
                assert_eq!(run_alone(&mut wf, pid, OpRequest::Take).0, OpResponse::Value(v));
            }
        }
    }
}
