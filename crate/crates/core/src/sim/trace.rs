use std::fmt::Write as _;

use crate::algorithms::{AlgorithmId, AlgorithmInstance, ChooserPolicy, Line, OpRequest, OpResponse, ReadView};
use crate::error::{Error, Result};
use crate::primitives::{Action, ObjectId, Pid, Response};

/// One atomic shared-memory step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Event {
    pub seq: usize,
    pub pid: Pid,
    /// Index of the enclosing operation among `pid`'s operations.
    pub op_seq: usize,
    pub line: Line,
    pub obj: ObjectId,
    pub action: Action,
    pub response: Response,
    /// Object states observed at the step, when the backend can report
    /// them. Not serialized; replay regenerates it.
    pub view: Option<ReadView>,
}

impl Event {
    /// `seq pid line object action arg response`.
    pub fn to_line(&self) -> String {
        format!(
            "{} {} {} {} {} {} {}",
            self.seq,
            self.pid,
            self.line,
            self.obj,
            self.action.name(),
            self.action.arg_token(),
            self.response
        )
    }
}

/// Invocation and response boundaries of one operation.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct OpRecord {
    pub pid: Pid,
    pub op_seq: usize,
    pub request: OpRequest,
    pub response: Option<OpResponse>,
    /// Seq of the operation's first step.
    pub invoke: usize,
    /// Seq of the step after which the operation returned.
    pub complete: Option<usize>,
}

impl OpRecord {
    pub fn is_complete(&self) -> bool {
        self.complete.is_some()
    }

    pub fn to_line(&self) -> String {
        let opt = |v: Option<String>| v.unwrap_or_else(|| "-".into());
        format!(
            "OP {} {} {} {} {} {}",
            self.pid,
            self.op_seq,
            self.request,
            opt(self.response.map(|r| r.to_string())),
            self.invoke,
            opt(self.complete.map(|c| c.to_string()))
        )
    }
}

/// A totally ordered sequence of events plus operation boundaries.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trace {
    pub algorithm: AlgorithmId,
    pub n: usize,
    pub b: usize,
    pub chooser: ChooserPolicy,
    pub events: Vec<Event>,
    /// Operations in invocation order.
    pub ops: Vec<OpRecord>,
}

impl Trace {
    pub fn new(algorithm: AlgorithmId, n: usize, b: usize, chooser: ChooserPolicy) -> Self {
        Trace {
            algorithm,
            n,
            b,
            chooser,
            events: Vec::new(),
            ops: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// The process that took each step.
    pub fn schedule(&self) -> Vec<Pid> {
        self.events.iter().map(|e| e.pid).collect()
    }

    /// The trace truncated to its first `len` events.
    pub fn prefix(&self, len: usize) -> Trace {
        let len = len.min(self.events.len());
        let ops = self
            .ops
            .iter()
            .filter(|o| o.invoke < len)
            .map(|o| {
                let mut o = o.clone();
                if o.complete.is_some_and(|c| c >= len) {
                    o.complete = None;
                    o.response = None;
                }
                o
            })
            .collect();
        Trace {
            events: self.events[..len].to_vec(),
            ops,
            ..self.clone_header()
        }
    }

    fn clone_header(&self) -> Trace {
        Trace::new(self.algorithm, self.n, self.b, self.chooser.clone())
    }

    /// Index into `ops` of the operation `(pid, op_seq)`.
    pub fn op_index(&self, pid: Pid, op_seq: usize) -> Option<usize> {
        self.ops.iter().position(|o| o.pid == pid && o.op_seq == op_seq)
    }

    pub fn header_line(&self) -> String {
        format!(
            "{} {} {} {} {}",
            self.algorithm,
            self.n,
            self.b,
            self.chooser.token(),
            self.chooser.seed()
        )
    }

    /// Serializes to the line-oriented trace format.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{}", self.header_line()).unwrap();
        for e in &self.events {
            writeln!(s, "{}", e.to_line()).unwrap();
        }
        for o in &self.ops {
            writeln!(s, "{}", o.to_line()).unwrap();
        }
        s
    }

    /// Parses the trace format. Lines the trace grammar does not know
    /// (such as witness sections) are returned for the caller to handle.
    pub fn parse_with_extra(text: &str) -> Result<(Trace, Vec<(usize, String)>)> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (hline, header) = lines.next().ok_or_else(|| Error::parse(1, "empty trace file"))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 5 {
            return Err(Error::parse(hline, "header must be `algorithm n b chooser seed`"));
        }
        let algorithm: AlgorithmId = h[0].parse().map_err(|e: Error| Error::parse(hline, e.to_string()))?;
        let num = |t: &str, what: &str| {
            t.parse::<u64>()
                .map_err(|_| Error::parse(hline, format!("bad {what} `{t}`")))
        };
        let n = num(h[1], "n")? as usize;
        let b = num(h[2], "b")? as usize;
        let seed = num(h[4], "seed")?;
        let chooser = ChooserPolicy::parse(h[3], seed).map_err(|e| Error::parse(hline, e.to_string()))?;
        // A fresh instance resolves object names and kinds.
        let inst = AlgorithmInstance::new(algorithm, n, b, chooser.clone())?;
        let mut trace = Trace::new(algorithm, n, b, chooser);
        let mut extra = Vec::new();
        for (ln, line) in lines {
            let t: Vec<&str> = line.split_whitespace().collect();
            if t[0] == "OP" {
                trace.ops.push(parse_op(ln, &t)?);
                continue;
            }
            if t[0].chars().next().is_some_and(|c| c.is_ascii_uppercase()) {
                extra.push((ln, line.to_string()));
                continue;
            }
            if t.len() != 7 {
                return Err(Error::parse(ln, "event must have 7 fields"));
            }
            let perr = |msg: String| Error::parse(ln, msg);
            let seq: usize = t[0].parse().map_err(|_| perr(format!("bad seq `{}`", t[0])))?;
            if seq != trace.events.len() {
                return Err(perr(format!("expected seq {}, found {seq}", trace.events.len())));
            }
            let pid: Pid = t[1].parse().map_err(|_| perr(format!("bad pid `{}`", t[1])))?;
            if pid >= inst.processes() {
                return Err(Error::usage(format!(
                    "line {ln}: process {pid} does not exist in {algorithm} with n = {n}"
                )));
            }
            let line_label: Line = t[2].parse().map_err(|e: Error| perr(e.to_string()))?;
            let obj = inst
                .memory()
                .resolve_token(t[3])
                .map(|r| inst.object_id(r))
                .map_err(|e| perr(e.to_string()))?;
            let action = Action::parse(t[4], t[5]).map_err(perr)?;
            let response = Response::parse(&action, obj.kind, t[6]).map_err(perr)?;
            trace.events.push(Event {
                seq,
                pid,
                op_seq: 0,
                line: line_label,
                obj,
                action,
                response,
                view: None,
            });
        }
        // Operation boundaries come from the OP records.
        let mut next_op: Vec<usize> = vec![0; inst.processes()];
        let mut by_pid: Vec<Vec<&OpRecord>> = vec![Vec::new(); inst.processes()];
        for o in &trace.ops {
            if o.pid >= inst.processes() {
                return Err(Error::usage(format!("OP record names missing process {}", o.pid)));
            }
            by_pid[o.pid].push(o);
        }
        for list in &mut by_pid {
            list.sort_by_key(|o| o.op_seq);
        }
        for e in &mut trace.events {
            let list = &by_pid[e.pid];
            while next_op[e.pid] < list.len() && list[next_op[e.pid]].complete.is_some_and(|c| c < e.seq) {
                next_op[e.pid] += 1;
            }
            e.op_seq = list
                .get(next_op[e.pid])
                .map(|o| o.op_seq)
                .ok_or_else(|| Error::parse(0, format!("event {} has no OP record", e.seq)))?;
        }
        Ok((trace, extra))
    }

    pub fn parse(text: &str) -> Result<Trace> {
        let (trace, extra) = Trace::parse_with_extra(text)?;
        if let Some((ln, l)) = extra.first() {
            return Err(Error::parse(*ln, format!("unexpected record `{l}`")));
        }
        Ok(trace)
    }
}

fn parse_op(ln: usize, t: &[&str]) -> Result<OpRecord> {
    if t.len() != 7 {
        return Err(Error::parse(ln, "OP record must have 7 fields"));
    }
    let perr = |m: String| Error::parse(ln, m);
    let num = |s: &str| s.parse::<usize>().map_err(|_| perr(format!("bad number `{s}`")));
    let opt_num = |s: &str| if s == "-" { Ok(None) } else { num(s).map(Some) };
    let response = if t[4] == "-" {
        None
    } else {
        Some(t[4].parse().map_err(|e: Error| perr(e.to_string()))?)
    };
    let rec = OpRecord {
        pid: num(t[1])?,
        op_seq: num(t[2])?,
        request: t[3].parse().map_err(|e: Error| perr(e.to_string()))?,
        response,
        invoke: num(t[5])?,
        complete: opt_num(t[6])?,
    };
    if rec.response.is_some() != rec.complete.is_some() {
        return Err(perr(
            "response and completion must both be present or both absent".into(),
        ));
    }
    Ok(rec)
}
