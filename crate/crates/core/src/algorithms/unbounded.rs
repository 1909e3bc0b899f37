//! Lock-free strongly-linearizable unbounded bag.

use super::{Ctx, Line, OpRequest, OpResponse};
use crate::error::Result;
use crate::primitives::{Action, SharedMemory, Value};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
enum Pc {
    #[default]
    Idle,
    IncAlloc,
    WriteItem,
    Done,
    ReadDone,
    ReadAlloc,
    ReadItem,
    Tas,
    RereadDone,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub(crate) struct Proc {
    pc: Pc,
    x: u64,
    m: u64,
    d: u64,
    i: u64,
}

impl Proc {
    pub fn begin(&mut self, req: OpRequest) {
        *self = Proc::default();
        match req {
            OpRequest::Insert(x) => {
                self.x = x;
                self.pc = Pc::IncAlloc;
            }
            OpRequest::Take => self.pc = Pc::ReadDone,
        }
    }

    fn next_cell(&mut self) {
        if self.i < self.m {
            self.i += 1;
            self.pc = Pc::ReadItem;
        } else {
            self.pc = Pc::RereadDone;
        }
    }

    pub fn step<M: SharedMemory>(&mut self, ctx: &mut Ctx<'_, M>) -> Result<Option<OpResponse>> {
        let layout = ctx.layout;
        let done = layout.done();
        match self.pc {
            Pc::Idle => unreachable!("step without a pending operation"),
            Pc::IncAlloc => {
                self.m = ctx.count(Line::UbInsIncAlloc, layout.allocated, Action::FetchAndIncrement)? + 1;
                self.pc = Pc::WriteItem;
                Ok(None)
            }
            Pc::WriteItem => {
                ctx.write(Line::UbInsWriteItem, layout.item(self.m as u32), Value::Int(self.x))?;
                self.pc = Pc::Done;
                Ok(None)
            }
            Pc::Done => {
                ctx.count(Line::UbInsDone, done, Action::FetchAndIncrement)?;
                self.pc = Pc::Idle;
                Ok(Some(OpResponse::Ok))
            }
            Pc::ReadDone => {
                self.d = ctx.count(Line::UbTakeReadDone, done, Action::Read)?;
                self.pc = Pc::ReadAlloc;
                Ok(None)
            }
            Pc::ReadAlloc => {
                self.m = ctx.count(Line::UbTakeReadAlloc, layout.allocated, Action::Read)?;
                self.i = 0;
                self.next_cell();
                Ok(None)
            }
            Pc::ReadItem => {
                match ctx.read_value(Line::UbTakeReadItem, layout.item(self.i as u32))? {
                    Value::Int(x) => {
                        self.x = x;
                        self.pc = Pc::Tas;
                    }
                    _ => self.next_cell(),
                }
                Ok(None)
            }
            Pc::Tas => {
                if ctx.bit(Line::UbTakeTas, layout.ts(self.i as u32), Action::TestAndSet)? == 0 {
                    self.pc = Pc::Idle;
                    return Ok(Some(OpResponse::Value(self.x)));
                }
                self.next_cell();
                Ok(None)
            }
            Pc::RereadDone => {
                if ctx.count(Line::UbTakeRereadDone, done, Action::Read)? == self.d {
                    self.pc = Pc::Idle;
                    return Ok(Some(OpResponse::Empty));
                }
                ctx.new_iteration = true;
                self.pc = Pc::ReadDone;
                Ok(None)
            }
        }
    }
}
