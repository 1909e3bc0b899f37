//! Li's queue over an infinite array, used as a bag.

use super::{Ctx, Line, OpRequest, OpResponse};
use crate::error::Result;
use crate::primitives::{Action, SharedMemory, Value};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
enum Pc {
    #[default]
    Idle,
    IncMax,
    WriteItem,
    ReadMax,
    ReadItem,
    Tas,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub(crate) struct Proc {
    pc: Pc,
    x: u64,
    max: u64,
    taken_old: u64,
    max_old: u64,
    taken_new: u64,
    max_new: u64,
    i: u64,
}

impl Proc {
    pub fn begin(&mut self, req: OpRequest) {
        *self = Proc::default();
        match req {
            OpRequest::Insert(x) => {
                self.x = x;
                self.pc = Pc::IncMax;
            }
            OpRequest::Take => self.pc = Pc::ReadMax,
        }
    }

    /// Moves to the next cell of the pass, or evaluates the end-of-pass
    /// test when the pass is over.
    fn advance<M: SharedMemory>(&mut self, ctx: &mut Ctx<'_, M>) -> Option<OpResponse> {
        if self.i < self.max_new {
            self.i += 1;
            self.pc = Pc::ReadItem;
            return None;
        }
        if self.taken_new == self.taken_old && self.max_new == self.max_old {
            return Some(OpResponse::Empty);
        }
        self.taken_old = self.taken_new;
        self.max_old = self.max_new;
        self.pc = Pc::ReadMax;
        ctx.new_iteration = true;
        None
    }

    pub fn step<M: SharedMemory>(&mut self, ctx: &mut Ctx<'_, M>) -> Result<Option<OpResponse>> {
        let layout = ctx.layout;
        match self.pc {
            Pc::Idle => unreachable!("step without a pending operation"),
            Pc::IncMax => {
                self.max = ctx.count(Line::LqInsIncMax, layout.allocated, Action::FetchAndIncrement)?;
                self.pc = Pc::WriteItem;
                Ok(None)
            }
            Pc::WriteItem => {
                ctx.write(Line::LqInsWriteItem, layout.item(self.max as u32), Value::Int(self.x))?;
                self.pc = Pc::Idle;
                Ok(Some(OpResponse::Ok))
            }
            Pc::ReadMax => {
                let max = ctx.count(Line::LqTakeReadMax, layout.allocated, Action::Read)?;
                self.taken_new = 0;
                self.max_new = max.saturating_sub(1);
                self.i = 0;
                Ok(self.advance(ctx))
            }
            Pc::ReadItem => {
                let v = ctx.read_value(Line::LqTakeReadItem, layout.item(self.i as u32))?;
                match v {
                    Value::Int(x) => {
                        self.x = x;
                        self.pc = Pc::Tas;
                        Ok(None)
                    }
                    _ => Ok(self.advance(ctx)),
                }
            }
            Pc::Tas => {
                if ctx.bit(Line::LqTakeTas, layout.ts(self.i as u32), Action::TestAndSet)? == 0 {
                    self.pc = Pc::Idle;
                    return Ok(Some(OpResponse::Value(self.x)));
                }
                self.taken_new += 1;
                Ok(self.advance(ctx))
            }
        }
    }
}
