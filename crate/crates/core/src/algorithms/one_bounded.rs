//! Single-producer 1-bounded bags: the wait-free linearizable variant and
//! the lock-free strongly-linearizable variant that adds a `Done`
//! ABA-detecting register.

use super::{Ctx, Line, OpRequest, OpResponse, ProducerView, ReadView};
use crate::error::{Error, Result};
use crate::primitives::{Action, IndexSet, ObjectState, SharedMemory, Value};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
enum ProducerPc {
    #[default]
    Idle,
    CheckTs,
    ClearItem,
    Collect,
    WriteAlloc,
    Reset,
    WriteItem,
    WriteDone,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub(crate) struct Producer {
    sl: bool,
    used: IndexSet,
    m: u32,
    wrote_item: bool,
    pc: ProducerPc,
    x: u64,
    j: u32,
    hazardous: IndexSet,
    resets: IndexSet,
}

impl Producer {
    pub fn new(sl: bool) -> Self {
        Producer {
            sl,
            used: IndexSet::empty(),
            m: 1,
            wrote_item: false,
            pc: ProducerPc::Idle,
            x: 0,
            j: 0,
            hazardous: IndexSet::empty(),
            resets: IndexSet::empty(),
        }
    }

    pub fn begin(&mut self, req: OpRequest) {
        let OpRequest::Insert(x) = req else {
            unreachable!("role checked by the caller")
        };
        self.x = x;
        self.pc = ProducerPc::CheckTs;
    }

    pub fn view(&self) -> ProducerView {
        ProducerView {
            used: self.used,
            m: self.m,
            alloc: IndexSet::empty(),
            between_clear_and_write: matches!(
                self.pc,
                ProducerPc::Collect | ProducerPc::WriteAlloc | ProducerPc::Reset | ProducerPc::WriteItem
            ),
            poised_after_write: (self.pc == ProducerPc::WriteDone).then_some(self.m),
            wrote_item: self.wrote_item,
        }
    }

    fn line(&self, wf: Line, s1: Line) -> Line {
        if self.sl {
            s1
        } else {
            wf
        }
    }

    /// Leaves the reset loop: narrow `used` down and move to the item write.
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
            ProducerPc::CheckTs => {
                let line = self.line(Line::WfInsCheckTs, Line::S1InsCheckTs);
                if ctx.bit(line, layout.ts(self.m), Action::Read)? == 0 {
                    self.pc = ProducerPc::Idle;
                    return Ok(Some(OpResponse::Full));
                }
                self.pc = ProducerPc::ClearItem;
                Ok(None)
            }
            ProducerPc::ClearItem => {
                let line = self.line(Line::WfInsClearItem, Line::S1InsClearItem);
                ctx.write(line, layout.item(self.m), Value::Bottom)?;
                self.used.insert(self.m);
                self.hazardous = IndexSet::empty();
                self.j = 1;
                self.pc = ProducerPc::Collect;
                Ok(None)
            }
            ProducerPc::Collect => {
                let line = self.line(Line::WfInsCollect, Line::S1InsCollect);
                if let Value::Int(h) = ctx.read_value(line, layout.hazard(self.j as usize))? {
                    let h = u32::try_from(h)
                        .ok()
                        .filter(|h| (1..=IndexSet::MAX_INDEX).contains(h))
                        .ok_or_else(|| Error::usage(format!("hazard value {h} is not a cell")))?;
                    self.hazardous.insert(h);
                }
                if (self.j as usize) < ctx.n {
                    self.j += 1;
                } else {
                    let eligible = IndexSet::range(ctx.n as u32 + 1).minus(self.hazardous);
                    self.m = ctx.chooser.choose(eligible)?;
                    self.pc = ProducerPc::WriteAlloc;
                }
                Ok(None)
            }
            ProducerPc::WriteAlloc => {
                let line = self.line(Line::WfInsWriteAlloc, Line::S1InsWriteAlloc);
                ctx.write(line, layout.allocated, Value::Int(self.m as u64))?;
                self.resets = self.used.minus(self.hazardous);
                self.next_reset();
                Ok(None)
            }
            ProducerPc::Reset => {
                let i = self.resets.first().expect("reset loop has a cell");
                let line = self.line(Line::WfInsReset, Line::S1InsReset);
                ctx.access(line, layout.ts(i), Action::Reset)?;
                self.resets.remove(i);
                self.next_reset();
                Ok(None)
            }
            ProducerPc::WriteItem => {
                let line = self.line(Line::WfInsWriteItem, Line::S1InsWriteItem);
                ctx.write(line, layout.item(self.m), Value::Int(self.x))?;
                self.wrote_item = true;
                if self.sl {
                    self.pc = ProducerPc::WriteDone;
                    Ok(None)
                } else {
                    self.pc = ProducerPc::Idle;
                    Ok(Some(OpResponse::Ok))
                }
            }
            ProducerPc::WriteDone => {
                ctx.access(Line::S1InsWriteDone, layout.done(), Action::DWrite)?;
                self.pc = ProducerPc::Idle;
                Ok(Some(OpResponse::Ok))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
enum ConsumerPc {
    #[default]
    Idle,
    ReadDone,
    ReadAlloc,
    Hazard,
    ReadItem,
    Tas,
    ClearHazard1,
    ClearHazard2,
    RereadDone,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub(crate) struct Consumer {
    sl: bool,
    pc: ConsumerPc,
    a: u32,
    x: u64,
}

impl Consumer {
    pub fn new(sl: bool) -> Self {
        Consumer {
            sl,
            pc: ConsumerPc::Idle,
            a: 0,
            x: 0,
        }
    }

    pub fn begin(&mut self) {
        self.pc = if self.sl {
            ConsumerPc::ReadDone
        } else {
            ConsumerPc::ReadAlloc
        };
    }

    fn line(&self, wf: Line, s1: Line) -> Line {
        if self.sl {
            s1
        } else {
            wf
        }
    }

    pub fn step<M: SharedMemory>(&mut self, ctx: &mut Ctx<'_, M>) -> Result<Option<OpResponse>> {
        let layout = ctx.layout;
        match self.pc {
            ConsumerPc::Idle => unreachable!("step without a pending operation"),
            ConsumerPc::ReadDone => {
                ctx.flag(Line::S1TakeReadDone, layout.done())?;
                self.pc = ConsumerPc::ReadAlloc;
                Ok(None)
            }
            ConsumerPc::ReadAlloc => {
                let line = self.line(Line::WfTakeReadAlloc, Line::S1TakeReadAlloc);
                let a = ctx.read_value(line, layout.allocated)?;
                self.a = a
                    .as_int()
                    .and_then(|a| u32::try_from(a).ok())
                    .filter(|a| (1..=ctx.n as u32 + 1).contains(a))
                    .ok_or_else(|| Error::usage(format!("Allocated holds {a}, not a cell")))?;
                let item = ctx.mem.peek(layout.item(self.a));
                let ts = ctx.mem.peek(layout.ts(self.a));
                if let (Some(ObjectState::Register(item)), Some(ObjectState::Bit(ts))) = (item, ts) {
                    ctx.view = Some(ReadView { item, ts });
                }
                self.pc = ConsumerPc::Hazard;
                Ok(None)
            }
            ConsumerPc::Hazard => {
                let line = self.line(Line::WfTakeHazard, Line::S1TakeHazard);
                ctx.write(line, layout.hazard(ctx.pid), Value::Int(self.a as u64))?;
                self.pc = ConsumerPc::ReadItem;
                Ok(None)
            }
            ConsumerPc::ReadItem => {
                let line = self.line(Line::WfTakeReadItem, Line::S1TakeReadItem);
                match ctx.read_value(line, layout.item(self.a))? {
                    Value::Int(x) => {
                        self.x = x;
                        self.pc = ConsumerPc::Tas;
                    }
                    _ => self.pc = ConsumerPc::ClearHazard2,
                }
                Ok(None)
            }
            ConsumerPc::Tas => {
                let line = self.line(Line::WfTakeTas, Line::S1TakeTas);
                self.pc = if ctx.bit(line, layout.ts(self.a), Action::TestAndSet)? == 0 {
                    ConsumerPc::ClearHazard1
                } else {
                    ConsumerPc::ClearHazard2
                };
                Ok(None)
            }
            ConsumerPc::ClearHazard1 => {
                let line = self.line(Line::WfTakeClearHazard1, Line::S1TakeClearHazard1);
                ctx.write(line, layout.hazard(ctx.pid), Value::Bottom)?;
                self.pc = ConsumerPc::Idle;
                Ok(Some(OpResponse::Value(self.x)))
            }
            ConsumerPc::ClearHazard2 => {
                let line = self.line(Line::WfTakeClearHazard2, Line::S1TakeClearHazard2);
                ctx.write(line, layout.hazard(ctx.pid), Value::Bottom)?;
                if self.sl {
                    self.pc = ConsumerPc::RereadDone;
                    Ok(None)
                } else {
                    self.pc = ConsumerPc::Idle;
                    Ok(Some(OpResponse::Empty))
                }
            }
            ConsumerPc::RereadDone => {
                if !ctx.flag(Line::S1TakeRereadDone, layout.done())? {
                    self.pc = ConsumerPc::Idle;
                    return Ok(Some(OpResponse::Empty));
                }
                ctx.new_iteration = true;
                self.pc = ConsumerPc::ReadAlloc;
                Ok(None)
            }
        }
    }
}
