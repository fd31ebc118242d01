//! Trace records and their CSV rendering.

use std::fmt::{self, Write as _};

use crate::time::SimTime;
use crate::topology::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TraceKind {
    LinkPairDown,
    LinkPairUp,
    LinkDown,
    LinkUp,
    FlowStart,
    FlowStop,
    StreamOpen,
    StreamClose,
    AnycastResolved,
    Exclude,
    Readmit,
    ActionRejected,
    Deliver,
    Drop,
    LocalFailureDetected,
    RouteRequest,
    RouteComputed,
    FlowUpdate,
    FlowWithdraw,
    SecurityRefusal,
    RouterPresumedDead,
    RouterRecovered,
    FlowStalled,
    DvRound,
    DvConverged,
    ControlDrop,
    Timeout,
    FastRetransmit,
}

impl TraceKind {
    /// Events that describe what happened to data and ACK packets, as opposed
    /// to control-plane activity.
    pub fn is_data_plane(self) -> bool {
        matches!(self, TraceKind::Deliver | TraceKind::Drop)
    }
}

impl fmt::Display for TraceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEvent {
    pub time: SimTime,
    pub node: Option<NodeId>,
    pub kind: TraceKind,
    pub detail: String,
}

/// One delivered data or ACK packet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeliveryRecord {
    pub time: SimTime,
    pub flow: String,
    pub label: u32,
    pub ack: bool,
    pub seq: u64,
    pub dst: NodeId,
    pub sent_at: SimTime,
    /// Every node visited, source to destination.
    pub path: Vec<NodeId>,
}

/// One throughput window for one flow.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRow {
    pub window_start: SimTime,
    pub flow: String,
    pub bytes: u64,
    /// Bytes per second.
    pub rate: f64,
    pub cwnd: Option<f64>,
    pub ssthresh: Option<f64>,
    pub state: String,
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn events_csv(events: &[TraceEvent]) -> String {
    let mut out = String::from("time,node,kind,detail\n");
    for e in events {
        let node = e.node.map(|n| n.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{}",
            e.time,
            node,
            e.kind,
            csv_field(&e.detail)
        );
    }
    out
}

pub fn throughput_csv(rows: &[SampleRow]) -> String {
    let mut out = String::from("time,flow,bytes,rate,cwnd,ssthresh,state\n");
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.3}")).unwrap_or_default();
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{:.3},{},{},{}",
            r.window_start,
            csv_field(&r.flow),
            r.bytes,
            r.rate,
            opt(r.cwnd),
            opt(r.ssthresh),
            r.state
        );
    }
    out
}
