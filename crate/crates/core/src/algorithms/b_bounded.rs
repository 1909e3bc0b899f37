//! Single-producer b-bounded bag with `InsertDone` and `TakeDone`
//! ABA-detecting registers.

use super::{Ctx, Line, OpRequest, OpResponse, ProducerView};
use crate::error::{Error, Result};
use crate::primitives::{Action, IndexSet, SharedMemory, Value};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
enum ProducerPc {
    #[default]
    Idle,
    ReadTakeDone,
    CheckTs,
    ClearItem,
    Collect,
    WriteAlloc,
    Reset,
    WriteItem,
    WriteInsertDone,
    RereadTakeDone,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub(crate) struct Producer {
    used: IndexSet,
    alloc: IndexSet,
    wrote_item: bool,
    pc: ProducerPc,
    x: u64,
    /// Cells of the current pass over `alloc` not yet checked.
    scan: IndexSet,
    cur: u32,
    m: u32,
    j: u32,
    hazardous: IndexSet,
    resets: IndexSet,
}

impl Producer {
    pub fn begin(&mut self, req: OpRequest) {
        let OpRequest::Insert(x) = req else {
            unreachable!("role checked by the caller")
        };
        self.x = x;
        self.pc = ProducerPc::ReadTakeDone;
    }

    pub fn view(&self) -> ProducerView {
        ProducerView {
            used: self.used,
            m: self.m,
            alloc: self.alloc,
            between_clear_and_write: matches!(
                self.pc,
                ProducerPc::Collect | ProducerPc::WriteAlloc | ProducerPc::Reset | ProducerPc::WriteItem
            ),
            poised_after_write: (self.pc == ProducerPc::WriteInsertDone).then_some(self.m),
            wrote_item: self.wrote_item,
        }
    }

    fn start_scan<M: SharedMemory>(&mut self, ctx: &Ctx<'_, M>) {
        self.scan = self.alloc;
        self.next_in_scan(ctx);
    }

    fn next_in_scan<M: SharedMemory>(&mut self, ctx: &Ctx<'_, M>) {
        if let Some(c) = self.scan.first() {
            self.scan.remove(c);
            self.cur = c;
            self.pc = ProducerPc::CheckTs;
        } else if self.alloc.len() < ctx.b {
            self.hazardous = IndexSet::empty();
            self.j = 1;
            self.pc = ProducerPc::Collect;
        } else {
            self.pc = ProducerPc::RereadTakeDone;
        }
    }

    fn next_reset(&mut self) {
        match self.resets.first() {
            Some(_) => self.pc = ProducerPc::Reset,
            None => {
                self.used = self.used.intersect(self.hazardous);
                self.pc = ProducerPc::WriteItem;
            }
        }
    }

    pub fn step<M: SharedMemory>(&mut self, ctx: &mut Ctx<'_, M>) -> Result<Option<OpResponse>> {
        let layout = ctx.layout;
        match self.pc {
            ProducerPc::Idle => unreachable!("step without a pending operation"),
            ProducerPc::ReadTakeDone => {
                ctx.flag(Line::SbInsReadTakeDone, layout.take_done())?;
                self.start_scan(ctx);
                Ok(None)
            }
            ProducerPc::CheckTs => {
                if ctx.bit(Line::SbInsCheckTs, layout.ts(self.cur), Action::Read)? == 1 {
                    self.pc = ProducerPc::ClearItem;
                } else {
                    self.next_in_scan(ctx);
                }
                Ok(None)
            }
            ProducerPc::ClearItem => {
                ctx.write(Line::SbInsClearItem, layout.item(self.cur), Value::Bottom)?;
                self.alloc.remove(self.cur);
                self.used.insert(self.cur);
                self.next_in_scan(ctx);
                Ok(None)
            }
            ProducerPc::Collect => {
                if let Value::Int(h) = ctx.read_value(Line::SbInsCollect, layout.hazard(self.j as usize))? {
                    let h = u32::try_from(h)
                        .ok()
                        .filter(|h| (1..=IndexSet::MAX_INDEX).contains(h))
                        .ok_or_else(|| Error::usage(format!("hazard value {h} is not a cell")))?;
                    self.hazardous.insert(h);
                }
                if (self.j as usize) < ctx.n {
                    self.j += 1;
                } else {
                    let eligible = IndexSet::range((ctx.n + ctx.b) as u32)
                        .minus(self.alloc)
                        .minus(self.hazardous);
                    self.m = ctx.chooser.choose(eligible)?;
                    self.alloc.insert(self.m);
                    self.pc = ProducerPc::WriteAlloc;
                }
                Ok(None)
            }
            ProducerPc::WriteAlloc => {
                ctx.write(Line::SbInsWriteAlloc, layout.allocated, Value::Set(self.alloc))?;
                self.resets = self.used.minus(self.hazardous);
                self.next_reset();
                Ok(None)
            }
            ProducerPc::Reset => {
                let i = self.resets.first().expect("reset loop has a cell");
                ctx.access(Line::SbInsReset, layout.ts(i), Action::Reset)?;
                self.resets.remove(i);
                self.next_reset();
                Ok(None)
            }
            ProducerPc::WriteItem => {
                ctx.write(Line::SbInsWriteItem, layout.item(self.m), Value::Int(self.x))?;
                self.wrote_item = true;
                self.pc = ProducerPc::WriteInsertDone;
                Ok(None)
            }
            ProducerPc::WriteInsertDone => {
                ctx.access(Line::SbInsWriteInsertDone, layout.done(), Action::DWrite)?;
                self.pc = ProducerPc::Idle;
                Ok(Some(OpResponse::Ok))
            }
            ProducerPc::RereadTakeDone => {
                if !ctx.flag(Line::SbInsRereadTakeDone, layout.take_done())? {
                    self.pc = ProducerPc::Idle;
                    return Ok(Some(OpResponse::Full));
                }
                ctx.new_iteration = true;
                self.start_scan(ctx);
                Ok(None)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
enum ConsumerPc {
    #[default]
    Idle,
    ReadInsertDone,
    ReadAlloc,
    Hazard,
    ReadItem,
    Tas,
    ClearHazard1,
    SuccessTakeDone,
    ClearHazard2,
    RereadInsertDone,
    FailTakeDone,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub(crate) struct Consumer {
    pc: ConsumerPc,
    /// Cells of the current pass over `allocated` not yet visited.
    remaining: IndexSet,
    a: u32,
    x: u64,
}

impl Consumer {
    pub fn begin(&mut self) {
        self.pc = ConsumerPc::ReadInsertDone;
    }

    fn next_cell(&mut self) {
        match self.remaining.first() {
            Some(a) => {
                self.remaining.remove(a);
                self.a = a;
                self.pc = ConsumerPc::Hazard;
            }
            None => self.pc = ConsumerPc::ClearHazard2,
        }
    }

    pub fn step<M: SharedMemory>(&mut self, ctx: &mut Ctx<'_, M>) -> Result<Option<OpResponse>> {
        let layout = ctx.layout;
        match self.pc {
            ConsumerPc::Idle => unreachable!("step without a pending operation"),
            ConsumerPc::ReadInsertDone => {
                ctx.flag(Line::SbTakeReadInsertDone, layout.done())?;
                self.pc = ConsumerPc::ReadAlloc;
                Ok(None)
            }
            ConsumerPc::ReadAlloc => {
                let v = ctx.read_value(Line::SbTakeReadAlloc, layout.allocated)?;
                self.remaining = v
                    .as_set()
                    .ok_or_else(|| Error::usage(format!("Allocated holds {v}, not a set")))?;
                self.next_cell();
                Ok(None)
            }
            ConsumerPc::Hazard => {
                ctx.write(Line::SbTakeHazard, layout.hazard(ctx.pid), Value::Int(self.a as u64))?;
                self.pc = ConsumerPc::ReadItem;
                Ok(None)
            }
            ConsumerPc::ReadItem => {
                match ctx.read_value(Line::SbTakeReadItem, layout.item(self.a))? {
                    Value::Int(x) => {
                        self.x = x;
                        self.pc = ConsumerPc::Tas;
                    }
                    _ => self.next_cell(),
                }
                Ok(None)
            }
            ConsumerPc::Tas => {
                if ctx.bit(Line::SbTakeTas, layout.ts(self.a), Action::TestAndSet)? == 0 {
                    self.pc = ConsumerPc::ClearHazard1;
                } else {
                    self.next_cell();
                }
                Ok(None)
            }
            ConsumerPc::ClearHazard1 => {
                ctx.write(Line::SbTakeClearHazard1, layout.hazard(ctx.pid), Value::Bottom)?;
                self.pc = ConsumerPc::SuccessTakeDone;
                Ok(None)
            }
            ConsumerPc::SuccessTakeDone => {
                ctx.access(Line::SbTakeSuccessTakeDone, layout.take_done(), Action::DWrite)?;
                self.pc = ConsumerPc::Idle;
                Ok(Some(OpResponse::Value(self.x)))
            }
            ConsumerPc::ClearHazard2 => {
                ctx.write(Line::SbTakeClearHazard2, layout.hazard(ctx.pid), Value::Bottom)?;
                self.pc = ConsumerPc::RereadInsertDone;
                Ok(None)
            }
            ConsumerPc::RereadInsertDone => {
                if ctx.flag(Line::SbTakeRereadInsertDone, layout.done())? {
                    ctx.new_iteration = true;
                    self.pc = ConsumerPc::ReadAlloc;
                } else {
                    self.pc = ConsumerPc::FailTakeDone;
                }
                Ok(None)
            }
            ConsumerPc::FailTakeDone => {
                ctx.access(Line::SbTakeFailTakeDone, layout.take_done(), Action::DWrite)?;
                self.pc = ConsumerPc::Idle;
                Ok(Some(OpResponse::Empty))
            }
        }
    }
}
