//! Traffic sources: window-based Reno and Tahoe senders, a cumulative-ACK
//! receiver, a constant-rate sender, and throughput sampling.
//!
//! Sequence numbers count whole segments. An ACK carries the next segment the
//! receiver expects.

use std::collections::BTreeSet;
use std::fmt;

use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TcpVariant {
    Reno,
    Tahoe,
}

impl TcpVariant {
    pub fn keyword(self) -> &'static str {
        match self {
            TcpVariant::Reno => "reno",
            TcpVariant::Tahoe => "tahoe",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CongestionState {
    SlowStart,
    CongestionAvoidance,
    FastRecovery,
}

impl fmt::Display for CongestionState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CongestionState::SlowStart => "slow-start",
            CongestionState::CongestionAvoidance => "congestion-avoidance",
            CongestionState::FastRecovery => "fast-recovery",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TcpConfig {
    pub segment_size: u32,
    pub ack_size: u32,
    pub initial_cwnd: f64,
    pub initial_ssthresh: f64,
    pub initial_rto: f64,
    pub min_rto: f64,
    pub max_rto: f64,
    pub granularity: f64,
    pub dupack_threshold: u32,
}

impl Default for TcpConfig {
    fn default() -> Self {
        Self {
            segment_size: 1000,
            ack_size: 40,
            initial_cwnd: 1.0,
            initial_ssthresh: 64.0,
            initial_rto: 1.0,
            min_rto: 0.2,
            max_rto: 64.0,
            granularity: 0.01,
            dupack_threshold: 3,
        }
    }
}

/// What an incoming ACK did to the sender.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AckKind {
    New,
    Duplicate,
    /// The dupack that triggered a fast retransmit of `seq`.
    FastRetransmit {
        seq: u64,
    },
    /// Old or otherwise ignorable.
    Stale,
}

/// Window-limited TCP sender state machine. Clock and timers are driven from
/// outside: [`TcpSender::rto_deadline`] says when the retransmission timer
/// expires.
#[derive(Debug, Clone, PartialEq)]
pub struct TcpSender {
    pub variant: TcpVariant,
    pub config: TcpConfig,
    pub cwnd: f64,
    pub ssthresh: f64,
    /// Current retransmission timeout in seconds.
    pub rto: f64,
    pub srtt: Option<f64>,
    pub rttvar: f64,
    pub dupacks: u32,
    pub next_seq: u64,
    /// Lowest unacknowledged segment.
    pub high_ack: u64,
    /// One past the highest segment ever sent.
    pub max_sent: u64,
    /// Fast retransmit is not re-armed until the cumulative ACK passes this.
    pub recover: u64,
    pub state: CongestionState,
    pub rto_deadline: Option<SimTime>,
    timed: Option<(u64, SimTime)>,
    pub timeouts: u64,
    pub fast_retransmits: u64,
}

impl TcpSender {
    pub fn new(variant: TcpVariant, config: TcpConfig) -> Self {
        Self {
            variant,
            config,
            cwnd: config.initial_cwnd,
            ssthresh: config.initial_ssthresh,
            rto: config.initial_rto,
            srtt: None,
            rttvar: 0.0,
            dupacks: 0,
            next_seq: 0,
            high_ack: 0,
            max_sent: 0,
            recover: 0,
            state: CongestionState::SlowStart,
            rto_deadline: None,
            timed: None,
            timeouts: 0,
            fast_retransmits: 0,
        }
    }

    pub fn in_flight(&self) -> u64 {
        self.next_seq - self.high_ack
    }

    fn window(&self) -> u64 {
        self.cwnd.floor().max(1.0) as u64
    }

    fn arm_timer(&mut self, now: SimTime) {
        self.rto_deadline = Some(now + SimTime::from_secs_f64(self.rto));
    }

    /// Segments the window allows right now, in order. Sequence numbers below
    /// `max_sent` are retransmissions.
    pub fn poll_send(&mut self, now: SimTime) -> Vec<u64> {
        let mut out = Vec::new();
        while self.in_flight() < self.window() {
            let seq = self.next_seq;
            out.push(seq);
            self.next_seq += 1;
            if seq >= self.max_sent {
                self.max_sent = seq + 1;
                if self.timed.is_none() {
                    self.timed = Some((seq, now));
                }
            }
        }
        if !out.is_empty() && self.rto_deadline.is_none() {
            self.arm_timer(now);
        }
        out
    }

    fn sample_rtt(&mut self, r: f64) {
        match self.srtt {
            None => {
                self.srtt = Some(r);
                self.rttvar = r / 2.0;
            }
            Some(s) => {
                self.rttvar = 0.75 * self.rttvar + 0.25 * (s - r).abs();
                self.srtt = Some(0.875 * s + 0.125 * r);
            }
        }
        let srtt = self.srtt.unwrap_or(r);
        self.rto = (srtt + (4.0 * self.rttvar).max(self.config.granularity))
            .clamp(self.config.min_rto, self.config.max_rto);
    }

    fn halve(&mut self) {
        self.ssthresh = (self.in_flight() as f64 / 2.0).max(2.0);
    }

    pub fn on_ack(&mut self, ack: u64, now: SimTime) -> AckKind {
        if ack > self.high_ack {
            if let Some((seq, at)) = self.timed {
                if ack > seq {
                    self.sample_rtt((now - at).as_secs_f64());
                    self.timed = None;
                }
            }
            match self.state {
                CongestionState::FastRecovery => {
                    self.cwnd = self.ssthresh;
                    self.state = CongestionState::CongestionAvoidance;
                }
                _ if self.cwnd < self.ssthresh => {
                    self.cwnd += 1.0;
                    self.state = CongestionState::SlowStart;
                }
                _ => {
                    self.cwnd += 1.0 / self.cwnd;
                    self.state = CongestionState::CongestionAvoidance;
                }
            }
            self.high_ack = ack;
            self.next_seq = self.next_seq.max(ack);
            self.max_sent = self.max_sent.max(ack);
            self.dupacks = 0;
            if self.in_flight() > 0 {
                self.arm_timer(now);
            } else {
                self.rto_deadline = None;
            }
            return AckKind::New;
        }
        if ack < self.high_ack || self.in_flight() == 0 {
            return AckKind::Stale;
        }
        self.dupacks += 1;
        if self.dupacks == self.config.dupack_threshold && self.high_ack >= self.recover {
            self.halve();
            self.recover = self.max_sent;
            self.timed = None;
            self.fast_retransmits += 1;
            match self.variant {
                TcpVariant::Reno => {
                    self.cwnd = self.ssthresh + f64::from(self.config.dupack_threshold);
                    self.state = CongestionState::FastRecovery;
                    self.arm_timer(now);
                }
                TcpVariant::Tahoe => {
                    self.cwnd = 1.0;
                    self.state = CongestionState::SlowStart;
                    self.next_seq = self.high_ack;
                    self.arm_timer(now);
                }
            }
            return AckKind::FastRetransmit { seq: self.high_ack };
        }
        if self.dupacks > self.config.dupack_threshold
            && self.state == CongestionState::FastRecovery
        {
            self.cwnd += 1.0;
        }
        AckKind::Duplicate
    }

    /// Retransmission timer expiry. Returns the segment to resend first.
    pub fn on_timeout(&mut self, now: SimTime) -> u64 {
        self.halve();
        self.cwnd = 1.0;
        self.rto = (self.rto * 2.0).min(self.config.max_rto);
        self.recover = self.max_sent;
        self.next_seq = self.high_ack;
        self.dupacks = 0;
        self.state = CongestionState::SlowStart;
        self.timed = None;
        self.timeouts += 1;
        self.rto_deadline = None;
        self.arm_timer(now);
        self.high_ack
    }
}

/// Cumulative-ACK receiver with an unbounded reordering buffer.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TcpReceiver {
    /// Next in-order segment expected.
    pub expected: u64,
    buffer: BTreeSet<u64>,
    pub delivered_segments: u64,
}

impl TcpReceiver {
    pub fn new() -> Self {
        Self::default()
    }

    /// Accepts a segment; returns the cumulative ACK and how many segments
    /// became newly deliverable in order.
    pub fn on_segment(&mut self, seq: u64) -> (u64, u64) {
        let before = self.expected;
        if seq == self.expected {
            self.expected += 1;
            while self.buffer.remove(&self.expected) {
                self.expected += 1;
            }
        } else if seq > self.expected {
            self.buffer.insert(seq);
        }
        let newly = self.expected - before;
        self.delivered_segments += newly;
        (self.expected, newly)
    }
}

/// Constant bit rate source: one segment every `segment_size / rate` seconds,
/// no feedback.
#[derive(Debug, Clone, PartialEq)]
pub struct CbrSender {
    /// Bytes per second.
    pub rate: f64,
    pub segment_size: u32,
    pub next_seq: u64,
}

impl CbrSender {
    pub fn new(rate: f64, segment_size: u32) -> Self {
        Self {
            rate,
            segment_size,
            next_seq: 0,
        }
    }

    pub fn interval(&self) -> SimTime {
        SimTime::from_secs_f64(f64::from(self.segment_size) / self.rate)
    }

    pub fn next_packet(&mut self) -> u64 {
        let s = self.next_seq;
        self.next_seq += 1;
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThroughputSample {
    pub flow: String,
    pub window_start: SimTime,
    pub window_len: SimTime,
    pub bytes: u64,
    /// Bytes per second.
    pub throughput: f64,
}

/// Buckets byte counts into consecutive fixed windows starting at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ThroughputMeter {
    pub window: SimTime,
    buckets: Vec<u64>,
}

impl ThroughputMeter {
    pub fn new(window: SimTime) -> Self {
        assert!(window > SimTime::ZERO, "sample window must be positive");
        Self {
            window,
            buckets: Vec::new(),
        }
    }

    pub fn record(&mut self, at: SimTime, bytes: u64) {
        let i = (at.nanos() / self.window.nanos()) as usize;
        if self.buckets.len() <= i {
            self.buckets.resize(i + 1, 0);
        }
        self.buckets[i] += bytes;
    }

    pub fn bucket(&self, i: usize) -> u64 {
        self.buckets.get(i).copied().unwrap_or(0)
    }

    /// Number of windows that start before `end`.
    pub fn window_count(&self, end: SimTime) -> usize {
        end.nanos().div_ceil(self.window.nanos()) as usize
    }

    pub fn samples(&self, flow: &str, end: SimTime) -> Vec<ThroughputSample> {
        (0..self.window_count(end))
            .map(|i| {
                let bytes = self.bucket(i);
                ThroughputSample {
                    flow: flow.to_string(),
                    window_start: SimTime(i as u64 * self.window.nanos()),
                    window_len: self.window,
                    bytes,
                    throughput: bytes as f64 / self.window.as_secs_f64(),
                }
            })
            .collect()
    }
}

/// Samples a list of `(time, bytes)` events over `[0, end)`.
pub fn sample_throughput(
    flow: &str,
    events: &[(SimTime, u64)],
    window: SimTime,
    end: SimTime,
) -> Vec<ThroughputSample> {
    let mut m = ThroughputMeter::new(window);
    for (t, b) in events.iter().filter(|(t, _)| *t < end) {
        m.record(*t, *b);
    }
    m.samples(flow, end)
}
