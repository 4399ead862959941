use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::rng::RngStream;

struct Entry<E> {
    time: f64,
    seq: u64,
    event: E,
}

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl<E> Eq for Entry<E> {}
impl<E> PartialOrd for Entry<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<E> Ord for Entry<E> {
    // BinaryHeap is a max-heap: reverse so the earliest (time, seq) pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Pending events ordered by time; simultaneous events pop in insertion order.
pub struct EventQueue<E> {
    heap: BinaryHeap<Entry<E>>,
    seq: u64,
    now: f64,
}

impl<E> Default for EventQueue<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> EventQueue<E> {
    pub fn new() -> Self {
        Self { heap: BinaryHeap::new(), seq: 0, now: 0.0 }
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn schedule(&mut self, time: f64, event: E) -> Result<()> {
        if !(time >= self.now) {
            return Err(Error::SimulationFault {
                time: self.now,
                detail: format!("event scheduled in the past at {time}"),
            });
        }
        self.heap.push(Entry { time, seq: self.seq, event });
        self.seq += 1;
        Ok(())
    }

    pub fn schedule_in(&mut self, delay: f64, event: E) -> Result<()> {
        self.schedule(self.now + delay, event)
    }

    pub fn peek_time(&self) -> Option<f64> {
        self.heap.peek().map(|e| e.time)
    }

    pub fn pop(&mut self) -> Option<(f64, E)> {
        let e = self.heap.pop()?;
        self.now = e.time;
        Some((e.time, e.event))
    }

    pub(crate) fn advance_to(&mut self, t: f64) {
        if t > self.now {
            self.now = t;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    Arrival,
    Admit,
    Loss,
    Departure,
    ModeChange,
}

impl EventKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::Arrival => "arrival",
            EventKind::Admit => "admit",
            EventKind::Loss => "loss",
            EventKind::Departure => "departure",
            EventKind::ModeChange => "mode",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub time: f64,
    pub kind: EventKind,
    pub server: Option<usize>,
    pub detail: String,
}

/// Append-only log of what a run did. Recording can be switched off for
/// long production runs; counters are always kept.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventTrace {
    pub records: Vec<TraceRecord>,
    pub recording: bool,
    pub arrivals: u64,
    pub admitted: u64,
    pub lost: u64,
    pub departures: u64,
}

impl EventTrace {
    pub fn new(recording: bool) -> Self {
        Self { recording, ..Default::default() }
    }

    #[inline]
    pub fn log(&mut self, time: f64, kind: EventKind, server: Option<usize>, detail: impl FnOnce() -> String) {
        match kind {
            EventKind::Arrival => self.arrivals += 1,
            EventKind::Admit => self.admitted += 1,
            EventKind::Loss => self.lost += 1,
            EventKind::Departure => self.departures += 1,
            EventKind::ModeChange => {}
        }
        if self.recording {
            self.records.push(TraceRecord { time, kind, server, detail: detail() });
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// `time,event_kind,server_id,detail`, server ids 1-indexed, empty when absent.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("time,event_kind,server_id,detail\n");
        for r in &self.records {
            let sid = r.server.map(|s| (s + 1).to_string()).unwrap_or_default();
            let _ = writeln!(out, "{:.17e},{},{},{}", r.time, r.kind.as_str(), sid, r.detail);
        }
        out
    }
}

/// Handles handed to a model while it processes one event.
pub struct Ctx<'a, E> {
    pub queue: &'a mut EventQueue<E>,
    pub rng: &'a mut RngStream,
    pub trace: &'a mut EventTrace,
}

impl<E> Ctx<'_, E> {
    #[inline]
    pub fn now(&self) -> f64 {
        self.queue.now()
    }
}

pub trait Model {
    type Event;

    fn init(&mut self, ctx: &mut Ctx<'_, Self::Event>) -> Result<()>;

    fn handle(&mut self, event: Self::Event, ctx: &mut Ctx<'_, Self::Event>) -> Result<()>;

    /// Called once with the horizon so time-averaged statistics can close out.
    fn finish(&mut self, _horizon: f64) {}
}

/// Runs `model` until `horizon`, processing events strictly in time order.
pub fn run<M: Model>(model: &mut M, horizon: f64, rng: &mut RngStream, record: bool) -> Result<EventTrace> {
    if !(horizon >= 0.0) {
        return Err(Error::InvalidParameter(format!("horizon must be >= 0, got {horizon}")));
    }
    let mut queue = EventQueue::new();
    let mut trace = EventTrace::new(record);
    {
        let mut ctx = Ctx { queue: &mut queue, rng, trace: &mut trace };
        model.init(&mut ctx)?;
        loop {
            match ctx.queue.peek_time() {
                Some(t) if t <= horizon => {}
                _ => break,
            }
            let (_, ev) = ctx.queue.pop().expect("peeked");
            model.handle(ev, &mut ctx)?;
        }
        ctx.queue.advance_to(horizon);
    }
    model.finish(horizon);
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pops_in_time_then_insertion_order() {
        let mut q = EventQueue::new();
        q.schedule(2.0, "c").unwrap();
        q.schedule(1.0, "a").unwrap();
        q.schedule(1.0, "b").unwrap();
        q.schedule(0.5, "z").unwrap();
        let order: Vec<_> = std::iter::from_fn(|| q.pop().map(|(_, e)| e)).collect();
        assert_eq!(order, vec!["z", "a", "b", "c"]);
    }

    #[test]
    fn rejects_past_events() {
        let mut q = EventQueue::new();
        q.schedule(1.0, ()).unwrap();
        q.pop();
        assert!(q.schedule(0.5, ()).is_err());
        assert!(q.schedule(f64::NAN, ()).is_err());
    }

    struct Nothing;
    impl Model for Nothing {
        type Event = ();
        fn init(&mut self, _: &mut Ctx<'_, ()>) -> Result<()> {
            Ok(())
        }
        fn handle(&mut self, _: (), _: &mut Ctx<'_, ()>) -> Result<()> {
            Ok(())
        }
    }

    #[test]
    fn empty_model_yields_empty_trace() {
        let mut rng = RngStream::new(0, 0);
        let t = run(&mut Nothing, 0.0, &mut rng, true).unwrap();
        assert!(t.is_empty());
    }

    struct Faulty;
    impl Model for Faulty {
        type Event = u32;
        fn init(&mut self, ctx: &mut Ctx<'_, u32>) -> Result<()> {
            ctx.queue.schedule(1.0, 7)
        }
        fn handle(&mut self, ev: u32, ctx: &mut Ctx<'_, u32>) -> Result<()> {
            Err(Error::SimulationFault { time: ctx.now(), detail: format!("event {ev}") })
        }
    }

    #[test]
    fn handler_fault_propagates_with_event() {
        let mut rng = RngStream::new(0, 0);
        match run(&mut Faulty, 5.0, &mut rng, false) {
            Err(Error::SimulationFault { time, detail }) => {
                assert_eq!(time, 1.0);
                assert!(detail.contains('7'));
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
