//! Incremental linearization-point rules: fed one step at a time, emits
//! the placements that step fixes. For the strongly-linearizable
//! algorithms the state holds no sequence numbers, so it can key memoized
//! searches.

use super::{Placement, Rank};
use crate::algorithms::{AlgorithmId, Line, OpResponse};
use crate::primitives::{Pid, Response, Value};
use crate::sim::Event;

/// Per-process bookkeeping.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
struct Proc {
    /// `op_seq` of the process's current operation.
    op_seq: usize,
    /// Element from the last item read of the pending Take.
    last_read: Option<u64>,
    /// Insert: cell written but not yet announced, and whether the Insert
    /// was already placed as a coupled one.
    written: Option<(u32, bool)>,
    /// b-bounded Insert: the Take that won the written cell while poised.
    coupled_with: Option<Pid>,
    /// b-bounded Take: cell of a successful t&s not yet placed.
    won: Option<u32>,
    /// b-bounded Take: read false from InsertDone, not yet placed.
    poised_fail: bool,
    /// Wait-free Take: `(cell, seq, live, first successful t&s on the cell
    /// after the read)` for its Allocated read.
    alloc_read: Option<(u32, usize, bool, Option<usize>)>,
    /// li-queue Take: seq of its last Max read.
    last_max_read: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LinTracker {
    algorithm: AlgorithmId,
    procs: Vec<Proc>,
}

const READ_ITEM: [Line; 5] = [
    Line::LqTakeReadItem,
    Line::UbTakeReadItem,
    Line::WfTakeReadItem,
    Line::S1TakeReadItem,
    Line::SbTakeReadItem,
];
const TAS: [Line; 5] = [
    Line::LqTakeTas,
    Line::UbTakeTas,
    Line::WfTakeTas,
    Line::S1TakeTas,
    Line::SbTakeTas,
];

impl LinTracker {
    pub fn new(algorithm: AlgorithmId, processes: usize) -> Self {
        LinTracker {
            algorithm,
            procs: vec![Proc::default(); processes],
        }
    }

    /// Feeds one step; `completed` is the operation's response if the step
    /// completes it. Returns the placements this step fixes, in order.
    pub fn feed(&mut self, e: &Event, completed: Option<OpResponse>) -> Vec<Placement> {
        self.procs[e.pid].op_seq = e.op_seq;
        if READ_ITEM.contains(&e.line) {
            if let Some(x) = e.response.value().and_then(Value::as_int) {
                self.procs[e.pid].last_read = Some(x);
            }
        }
        let won = e.response == Response::Bit(0) && TAS.contains(&e.line);
        let cell = e.obj.index.unwrap_or(0);
        let mut out = Vec::new();
        match self.algorithm {
            AlgorithmId::LiQueue => self.li_queue(e, completed, won, &mut out),
            AlgorithmId::UnboundedSl => self.coupled(
                e,
                completed,
                won,
                cell,
                &mut out,
                Line::UbInsWriteItem,
                Line::UbInsDone,
                Line::UbTakeRereadDone,
                None,
            ),
            AlgorithmId::Sl1b => self.coupled(
                e,
                completed,
                won,
                cell,
                &mut out,
                Line::S1InsWriteItem,
                Line::S1InsWriteDone,
                Line::S1TakeRereadDone,
                Some(Line::S1InsCheckTs),
            ),
            AlgorithmId::Wf1b => self.wait_free(e, completed, won, cell, &mut out),
            AlgorithmId::SlBb => self.b_bounded(e, completed, won, cell, &mut out),
        }
        out.sort_by_key(|p| (p.point, p.rank));
        out
    }

    fn place(&self, pid: Pid, response: OpResponse, point: usize, rank: Rank) -> Placement {
        Placement {
            pid,
            op_seq: self.procs[pid].op_seq,
            response,
            point,
            rank,
        }
    }

    fn taken(&self, pid: Pid) -> OpResponse {
        OpResponse::Value(self.procs[pid].last_read.expect("an element is read before its t&s"))
    }

    fn li_queue(&mut self, e: &Event, completed: Option<OpResponse>, won: bool, out: &mut Vec<Placement>) {
        if e.line == Line::LqTakeReadMax {
            self.procs[e.pid].last_max_read = Some(e.seq);
        }
        if e.line == Line::LqInsWriteItem {
            out.push(self.place(e.pid, OpResponse::Ok, e.seq, Rank::single()));
        }
        if won {
            out.push(self.place(e.pid, self.taken(e.pid), e.seq, Rank::single()));
        }
        if completed == Some(OpResponse::Empty) {
            let point = self.procs[e.pid].last_max_read.expect("Max is read before EMPTY");
            out.push(self.place(e.pid, OpResponse::Empty, point, Rank::single()));
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn coupled(
        &mut self,
        e: &Event,
        completed: Option<OpResponse>,
        won: bool,
        cell: u32,
        out: &mut Vec<Placement>,
        write: Line,
        done: Line,
        empty: Line,
        check: Option<Line>,
    ) {
        if e.line == write {
            self.procs[e.pid].written = Some((cell, false));
        }
        if won {
            if let Some(q) = self.procs.iter().position(|p| p.written == Some((cell, false))) {
                self.procs[q].written = Some((cell, true));
                out.push(self.place(q, OpResponse::Ok, e.seq, Rank::coupled_insert(cell, e.pid)));
            }
            out.push(self.place(e.pid, self.taken(e.pid), e.seq, Rank::taker(cell, e.pid)));
        }
        if e.line == done {
            if let Some((_, false)) = self.procs[e.pid].written {
                out.push(self.place(e.pid, OpResponse::Ok, e.seq, Rank::single()));
            }
            self.procs[e.pid].written = None;
        }
        if e.line == empty && completed == Some(OpResponse::Empty) {
            out.push(self.place(e.pid, OpResponse::Empty, e.seq, Rank::single()));
        }
        if Some(e.line) == check && completed == Some(OpResponse::Full) {
            out.push(self.place(e.pid, OpResponse::Full, e.seq, Rank::single()));
        }
    }

    fn wait_free(&mut self, e: &Event, completed: Option<OpResponse>, won: bool, cell: u32, out: &mut Vec<Placement>) {
        match e.line {
            Line::WfInsWriteItem => out.push(self.place(e.pid, OpResponse::Ok, e.seq, Rank::single())),
            Line::WfInsCheckTs if completed == Some(OpResponse::Full) => {
                out.push(self.place(e.pid, OpResponse::Full, e.seq, Rank::single()))
            }
            Line::WfTakeReadAlloc => {
                let view = e.view.expect("the wait-free rules need recorded views");
                let a = e.response.value().and_then(Value::as_int).unwrap_or(0) as u32;
                let live = !view.item.is_bottom() && view.ts == 0;
                self.procs[e.pid].alloc_read = Some((a, e.seq, live, None));
            }
            _ => {}
        }
        if won {
            for p in &mut self.procs {
                if let Some((a, _, true, first @ None)) = &mut p.alloc_read {
                    if *a == cell {
                        *first = Some(e.seq);
                    }
                }
            }
            out.push(self.place(e.pid, self.taken(e.pid), e.seq, Rank::taker(cell, e.pid)));
        }
        if completed.is_some() {
            let read = self.procs[e.pid].alloc_read.take();
            if completed == Some(OpResponse::Empty) {
                match read {
                    Some((_, seq, false, _)) => out.push(self.place(e.pid, OpResponse::Empty, seq, Rank::single())),
                    Some((_, _, true, Some(t))) => {
                        out.push(self.place(e.pid, OpResponse::Empty, t, Rank::deferred_empty(e.pid)))
                    }
                    _ => {}
                }
            }
        }
    }

    fn b_bounded(&mut self, e: &Event, completed: Option<OpResponse>, won: bool, cell: u32, out: &mut Vec<Placement>) {
        const PRODUCER: Pid = 0;
        let winners = |procs: &[Proc], keep: &dyn Fn(u32) -> bool| -> Vec<(u32, Pid)> {
            let mut w: Vec<(u32, Pid)> = procs
                .iter()
                .enumerate()
                .filter_map(|(pid, p)| p.won.filter(|&c| keep(c)).map(|c| (c, pid)))
                .collect();
            w.sort_unstable();
            w
        };
        match e.line {
            Line::SbInsWriteItem => {
                let p = &mut self.procs[PRODUCER];
                p.written = Some((cell, false));
                p.coupled_with = None;
            }
            Line::SbTakeTas if won => {
                self.procs[e.pid].won = Some(cell);
                let p = &mut self.procs[PRODUCER];
                if p.written == Some((cell, false)) && p.coupled_with.is_none() {
                    p.coupled_with = Some(e.pid);
                }
            }
            Line::SbTakeSuccessTakeDone | Line::SbTakeFailTakeDone => {
                for (c, pid) in winners(&self.procs, &|_| true) {
                    let prod = &self.procs[PRODUCER];
                    if prod.written == Some((c, false)) && prod.coupled_with == Some(pid) {
                        out.push(self.place(PRODUCER, OpResponse::Ok, e.seq, Rank::coupled_insert(c, pid)));
                        self.procs[PRODUCER].written = Some((c, true));
                    }
                    out.push(self.place(pid, self.taken(pid), e.seq, Rank::taker(c, pid)));
                    self.procs[pid].won = None;
                }
                if e.line == Line::SbTakeFailTakeDone && self.procs[e.pid].poised_fail {
                    out.push(self.place(e.pid, OpResponse::Empty, e.seq, Rank::failing_take(e.pid)));
                }
                self.procs[e.pid].poised_fail = false;
            }
            Line::SbInsWriteInsertDone => {
                if let Some((a, false)) = self.procs[PRODUCER].written {
                    for (c, pid) in winners(&self.procs, &|c| c != a) {
                        out.push(self.place(pid, self.taken(pid), e.seq, Rank::taker(c, pid)));
                        self.procs[pid].won = None;
                    }
                    for pid in 0..self.procs.len() {
                        if self.procs[pid].poised_fail {
                            out.push(self.place(pid, OpResponse::Empty, e.seq, Rank::failing_take(pid)));
                            self.procs[pid].poised_fail = false;
                        }
                    }
                    out.push(self.place(PRODUCER, OpResponse::Ok, e.seq, Rank::last()));
                }
                let p = &mut self.procs[PRODUCER];
                p.written = None;
                p.coupled_with = None;
            }
            Line::SbInsCheckTs if e.response == Response::Bit(1) => {
                for (c, pid) in winners(&self.procs, &|c| c == cell) {
                    out.push(self.place(pid, self.taken(pid), e.seq, Rank::taker(c, pid)));
                    self.procs[pid].won = None;
                }
            }
            Line::SbInsRereadTakeDone if completed == Some(OpResponse::Full) => {
                out.push(self.place(e.pid, OpResponse::Full, e.seq, Rank::single()));
            }
            Line::SbTakeRereadInsertDone if e.response == Response::Flag(false) => {
                self.procs[e.pid].poised_fail = true;
            }
            _ => {}
        }
    }
}
