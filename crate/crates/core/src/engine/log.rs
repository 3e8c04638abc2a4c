//! Structured per-event records, written as JSON lines.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::topology::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LogKind {
    /// Energy spent on beacons before traffic starts.
    Discovery,
    PacketBorn,
    HopStart,
    HopComplete,
    HopFailed,
    FragmentDelivered,
    FragmentDropped,
    FragmentStranded,
    PacketComplete,
    DeadlineExpired,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub t: f64,
    pub event: LogKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub packet: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seq: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from: Option<NodeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to: Option<NodeId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bits: Option<u64>,
    /// Energy debited by this event.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joules: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delay: Option<f64>,
}

impl LogRecord {
    pub fn new(t: f64, event: LogKind) -> Self {
        LogRecord {
            t,
            event,
            packet: None,
            seq: None,
            path: None,
            from: None,
            to: None,
            bits: None,
            joules: None,
            delay: None,
        }
    }
}

pub fn write_jsonl<W: Write>(records: &[LogRecord], mut out: W) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn read_jsonl<R: BufRead>(input: R) -> io::Result<Vec<LogRecord>> {
    input
        .lines()
        .filter(|l| l.as_ref().map(|s| !s.trim().is_empty()).unwrap_or(true))
        .map(|l| serde_json::from_str(&l?).map_err(io::Error::other))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_round_trip() {
        let mut a = LogRecord::new(0.25, LogKind::HopStart);
        a.from = Some(NodeId(3));
        a.to = Some(NodeId(0));
        a.joules = Some(1.5e-5);
        let b = LogRecord::new(1.0, LogKind::DeadlineExpired);
        let mut buf = Vec::new();
        write_jsonl(&[a.clone(), b.clone()], &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(
            text.starts_with("{\"t\":0.25,\"event\":\"hop-start\""),
            "{text}"
        );
        assert_eq!(read_jsonl(&buf[..]).unwrap(), vec![a, b]);
    }
}
