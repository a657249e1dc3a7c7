// SPDX-License-Identifier: Apache-2.0
//! Structured reasoning trace written as JSON lines.

use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ThoughtCategory {
    Analysis,
    Bottleneck,
    Proposal,
    Retrieval,
    Generation,
    Validation,
    Decision,
    Error,
    Progress,
}

impl ThoughtCategory {
    pub const ALL: [ThoughtCategory; 9] = [
        Self::Analysis,
        Self::Bottleneck,
        Self::Proposal,
        Self::Retrieval,
        Self::Generation,
        Self::Validation,
        Self::Decision,
        Self::Error,
        Self::Progress,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThoughtEvent {
    pub category: ThoughtCategory,
    pub message: String,
    pub confidence: f64,
    /// Always serialized, possibly as `[]`.
    pub evidence: Vec<String>,
    /// Milliseconds since the Unix epoch.
    pub timestamp: u64,
}

impl ThoughtEvent {
    pub fn new(category: ThoughtCategory, message: impl Into<String>, confidence: f64) -> Self {
        Self { category, message: message.into(), confidence: confidence.clamp(0.0, 1.0), evidence: Vec::new(), timestamp: 0 }
    }

    pub fn with_evidence<I, S>(mut self, evidence: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.evidence = evidence.into_iter().map(Into::into).collect();
        self
    }
}

pub trait ThoughtSink: Send {
    fn write(&mut self, event: &ThoughtEvent) -> std::io::Result<()>;
}

/// Keeps events in memory.
#[derive(Debug, Default)]
pub struct MemorySink {
    pub events: Vec<ThoughtEvent>,
}

impl ThoughtSink for MemorySink {
    fn write(&mut self, event: &ThoughtEvent) -> std::io::Result<()> {
        self.events.push(event.clone());
        Ok(())
    }
}

/// One JSON object per line, flushed after every event.
pub struct JsonlSink<W: Write + Send> {
    out: W,
}

impl JsonlSink<BufWriter<File>> {
    pub fn create(path: &Path) -> std::io::Result<Self> {
        Ok(Self { out: BufWriter::new(File::create(path)?) })
    }
}

impl<W: Write + Send> JsonlSink<W> {
    pub fn new(out: W) -> Self {
        Self { out }
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

impl<W: Write + Send> ThoughtSink for JsonlSink<W> {
    fn write(&mut self, event: &ThoughtEvent) -> std::io::Result<()> {
        serde_json::to_writer(&mut self.out, event)?;
        self.out.write_all(b"\n")?;
        self.out.flush()
    }
}

/// Discards everything.
#[derive(Debug, Default)]
pub struct NullSink;

impl ThoughtSink for NullSink {
    fn write(&mut self, _: &ThoughtEvent) -> std::io::Result<()> {
        Ok(())
    }
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

/// Stamps events with non-decreasing timestamps before writing them.
pub struct Tracer<'a> {
    sink: &'a mut dyn ThoughtSink,
    last: u64,
    count: usize,
}

impl<'a> Tracer<'a> {
    pub fn new(sink: &'a mut dyn ThoughtSink) -> Self {
        Self { sink, last: 0, count: 0 }
    }

    pub fn emit(&mut self, mut event: ThoughtEvent) -> std::io::Result<()> {
        self.last = self.last.max(now_ms());
        event.timestamp = self.last;
        self.count += 1;
        self.sink.write(&event)
    }

    /// Trace failures never abort a run.
    pub fn note(&mut self, category: ThoughtCategory, message: impl Into<String>, confidence: f64, evidence: Vec<String>) {
        let _ = self.emit(ThoughtEvent::new(category, message, confidence).with_evidence(evidence));
    }

    pub fn count(&self) -> usize {
        self.count
    }
}

/// Writes a single event to `sink` with the current time.
pub fn emit_thought(mut event: ThoughtEvent, sink: &mut dyn ThoughtSink) -> std::io::Result<()> {
    event.timestamp = now_ms();
    sink.write(&event)
}
